//! Seeded procedural floor plans.
//!
//! Two grammars, both inside a blocked perimeter band `wall_thickness` cells
//! deep:
//!
//! * `Corridors`: a corridor spine runs the full length of the interior,
//!   flanked by walls. Each side band is cut into rooms by recursive binary
//!   partition with walls perpendicular to the spine, and every room gets a
//!   door onto the corridor.
//! * `OpenPlan`: a few partial partitions attached to the perimeter plus
//!   scattered rectangular furniture until the blocked share of the interior
//!   reaches `furniture_density`.
//!
//! Attempt `k` of a plan draws from ChaCha8 stream `k` of the plan seed, so
//! a plan depends only on its parameters.

use std::fmt;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::component::largest_component;
use crate::error::{Error, Result};
use crate::farm::{Task, TaskManifest, TaskStatus};
use crate::field::FieldKind;
use crate::grid::{Cell, OccupancyGrid, DEFAULT_CELL_SIZE};
use crate::pgm::save_occupancy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PlanStyle {
    Corridors,
    OpenPlan,
}

impl fmt::Display for PlanStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanStyle::Corridors => "corridors",
            PlanStyle::OpenPlan => "open",
        })
    }
}

impl FromStr for PlanStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "corridors" => Ok(PlanStyle::Corridors),
            "open" | "open_plan" => Ok(PlanStyle::OpenPlan),
            _ => Err(Error::InvalidParams(format!("unknown plan style {s:?}"))),
        }
    }
}

/// Minimum interior length of a wall segment counted by [`wall_segments`]
/// when checking the corridor grammar.
pub const LONG_WALL: usize = 10;

/// Slack the open-plan generator allows around the requested density.
const DENSITY_SLACK: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct PlanSynthParams {
    pub width: usize,
    pub height: usize,
    pub style: PlanStyle,
    pub seed: u64,
    /// Rooms per plan, corridor style.
    pub room_count_range: RangeInclusive<usize>,
    pub corridor_width_range: RangeInclusive<usize>,
    /// Blocked share of the interior, open-plan style.
    pub furniture_density: f64,
    pub door_width: usize,
    pub wall_thickness: usize,
    pub cell_size: f64,
    pub retry_budget: u32,
}

impl Default for PlanSynthParams {
    fn default() -> Self {
        PlanSynthParams {
            width: 100,
            height: 100,
            style: PlanStyle::Corridors,
            seed: 0,
            room_count_range: 4..=8,
            corridor_width_range: 2..=4,
            furniture_density: 0.2,
            door_width: 2,
            wall_thickness: 2,
            cell_size: DEFAULT_CELL_SIZE,
            retry_budget: 32,
        }
    }
}

impl PlanSynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.width < 16 || self.height < 16 {
            return bad(format!(
                "plan must be at least 16x16, got {}x{}",
                self.width, self.height
            ));
        }
        if self.room_count_range.is_empty() || *self.room_count_range.start() == 0 {
            return bad(format!("bad room count range {:?}", self.room_count_range));
        }
        if self.corridor_width_range.is_empty() || *self.corridor_width_range.start() == 0 {
            return bad(format!(
                "bad corridor width range {:?}",
                self.corridor_width_range
            ));
        }
        if !(0.0..=0.4).contains(&self.furniture_density) {
            return bad(format!(
                "furniture density {} outside [0, 0.4]",
                self.furniture_density
            ));
        }
        if self.door_width == 0 || self.wall_thickness == 0 {
            return bad("door width and wall thickness must be positive".into());
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return bad(format!("cell size {} must be positive", self.cell_size));
        }
        if self.retry_budget == 0 {
            return bad("retry budget must be positive".into());
        }
        Ok(())
    }

    fn interior(&self) -> (usize, usize, usize, usize) {
        let t = self.wall_thickness;
        (
            t,
            t,
            self.width.saturating_sub(t),
            self.height.saturating_sub(t),
        )
    }
}

/// Counts axis-aligned wall segments at least `min_len` cells long inside
/// the region `margin` cells in from the border.
///
/// A segment is a maximal run of blocked cells along a row (or column);
/// runs with identical extent in adjacent rows (columns) belong to one thick
/// wall and count once.
pub fn wall_segments(grid: &OccupancyGrid, margin: usize, min_len: usize) -> usize {
    let (w, h) = (grid.width(), grid.height());
    if w <= 2 * margin || h <= 2 * margin {
        return 0;
    }
    let scan = |outer: usize, inner: usize, blocked: &dyn Fn(usize, usize) -> bool| {
        let mut count = 0;
        let mut prev: Vec<(usize, usize)> = Vec::new();
        for a in margin..outer - margin {
            let mut runs = Vec::new();
            let mut b = margin;
            while b < inner - margin {
                if blocked(a, b) {
                    let start = b;
                    while b < inner - margin && blocked(a, b) {
                        b += 1;
                    }
                    if b - start >= min_len {
                        runs.push((start, b));
                    }
                } else {
                    b += 1;
                }
            }
            count += runs.iter().filter(|r| !prev.contains(r)).count();
            prev = runs;
        }
        count
    };
    let rows = scan(h, w, &|y, x| !grid.get(x, y).is_free());
    let cols = scan(w, h, &|x, y| !grid.get(x, y).is_free());
    rows + cols
}

/// Blocked fraction of the region `margin` cells in from the border.
pub fn interior_blocked_fraction(grid: &OccupancyGrid, margin: usize) -> f64 {
    let (w, h) = (grid.width(), grid.height());
    if w <= 2 * margin || h <= 2 * margin {
        return 1.0;
    }
    let mut blocked = 0usize;
    for y in margin..h - margin {
        for x in margin..w - margin {
            blocked += usize::from(!grid.get(x, y).is_free());
        }
    }
    blocked as f64 / ((w - 2 * margin) * (h - 2 * margin)) as f64
}

fn free_ratio(grid: &OccupancyGrid) -> f64 {
    grid.free_count() as f64 / grid.len() as f64
}

/// Grid with the perimeter band blocked.
fn shell(p: &PlanSynthParams) -> Result<OccupancyGrid> {
    let mut grid = OccupancyGrid::filled(p.width, p.height, p.cell_size, Cell::Free)?;
    let t = p.wall_thickness;
    for y in 0..p.height {
        for x in 0..p.width {
            if x < t || y < t || x + t >= p.width || y + t >= p.height {
                grid.set(x, y, Cell::Blocked);
            }
        }
    }
    Ok(grid)
}

/// Writes through a frame where `u` runs along the spine and `v` across it.
struct Frame<'a> {
    grid: &'a mut OccupancyGrid,
    transposed: bool,
}

impl Frame<'_> {
    fn fill(&mut self, us: std::ops::Range<usize>, vs: std::ops::Range<usize>, cell: Cell) {
        for u in us {
            for v in vs.clone() {
                let (x, y) = if self.transposed { (v, u) } else { (u, v) };
                self.grid.set(x, y, cell);
            }
        }
    }
}

/// Splits `[lo, hi)` into `k` rooms separated by walls of thickness `t`;
/// returns the room extents.
fn partition(
    rng: &mut ChaCha8Rng,
    lo: usize,
    hi: usize,
    k: usize,
    t: usize,
    min_room: usize,
    rooms: &mut Vec<(usize, usize)>,
) -> std::result::Result<(), String> {
    if k == 1 {
        rooms.push((lo, hi));
        return Ok(());
    }
    let kl = k / 2;
    let kr = k - kl;
    let need = |n: usize| n * min_room + (n - 1) * t;
    let first = lo + need(kl);
    let last = hi
        .checked_sub(need(kr) + t)
        .filter(|&l| l >= first)
        .ok_or_else(|| format!("{k} rooms do not fit in {} cells", hi - lo))?;
    let cut = rng.random_range(first..=last);
    partition(rng, lo, cut, kl, t, min_room, rooms)?;
    partition(rng, cut + t, hi, kr, t, min_room, rooms)
}

fn corridors(
    p: &PlanSynthParams,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<OccupancyGrid, String> {
    let mut grid = shell(p).map_err(|e| e.to_string())?;
    let t = p.wall_thickness;
    let transposed = rng.random_bool(0.5);
    let (len, depth) = if transposed {
        (p.height, p.width)
    } else {
        (p.width, p.height)
    };
    let rooms_wanted = rng.random_range(p.room_count_range.clone());
    let cw = rng.random_range(p.corridor_width_range.clone());
    let min_room = p.door_width + 2;

    // Corridor occupies v in [v0, v0 + cw), walls t deep on either side,
    // and each band keeps at least `min_room` cells of depth.
    let lowest = 2 * t + min_room;
    let highest = depth
        .checked_sub(2 * t + min_room + cw)
        .filter(|&h| h >= lowest)
        .ok_or_else(|| format!("corridor of width {cw} does not fit across {depth} cells"))?;
    let span = highest - lowest;
    let v0 = rng.random_range(lowest + span / 5..=highest - span / 5);

    let mut frame = Frame {
        grid: &mut grid,
        transposed,
    };
    frame.fill(t..len - t, v0 - t..v0, Cell::Blocked);
    frame.fill(t..len - t, v0 + cw..v0 + cw + t, Cell::Blocked);

    let near = rooms_wanted / 2 + usize::from(rooms_wanted % 2 == 1 && rng.random_bool(0.5));
    let bands = [
        (near, t..v0 - t, v0 - t..v0),
        (
            rooms_wanted - near,
            v0 + cw + t..depth - t,
            v0 + cw..v0 + cw + t,
        ),
    ];
    for (k, band, wall) in bands {
        if k == 0 {
            continue;
        }
        let mut rooms = Vec::with_capacity(k);
        partition(rng, t, len - t, k, t, min_room, &mut rooms)?;
        for pair in rooms.windows(2) {
            frame.fill(pair[0].1..pair[1].0, band.clone(), Cell::Blocked);
        }
        for (a, b) in rooms {
            let door = rng.random_range(a..=b - p.door_width);
            frame.fill(door..door + p.door_width, wall.clone(), Cell::Free);
        }
    }
    Ok(grid)
}

fn overlaps(grid: &OccupancyGrid, x0: usize, y0: usize, x1: usize, y1: usize, halo: usize) -> bool {
    let xa = x0.saturating_sub(halo);
    let ya = y0.saturating_sub(halo);
    let xb = (x1 + halo).min(grid.width());
    let yb = (y1 + halo).min(grid.height());
    (ya..yb).any(|y| (xa..xb).any(|x| !grid.get(x, y).is_free()))
}

fn fill_rect(grid: &mut OccupancyGrid, x0: usize, y0: usize, x1: usize, y1: usize, cell: Cell) {
    for y in y0..y1 {
        for x in x0..x1 {
            grid.set(x, y, cell);
        }
    }
}

fn open_plan(
    p: &PlanSynthParams,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<OccupancyGrid, String> {
    let mut grid = shell(p).map_err(|e| e.to_string())?;
    let t = p.wall_thickness;
    let (ix0, iy0, ix1, iy1) = p.interior();
    let area = ((ix1 - ix0) * (iy1 - iy0)) as f64;
    let target = p.furniture_density * area;
    let slack = DENSITY_SLACK * area;
    if p.furniture_density == 0.0 {
        return Ok(grid);
    }
    let mut blocked = 0.0;

    // Partial partitions: straight walls growing inward from the perimeter,
    // spending at most half of the density budget.
    for _ in 0..rng.random_range(0..=3usize) {
        let horizontal = rng.random_bool(0.5);
        let (along, across) = if horizontal {
            (ix1 - ix0, iy1 - iy0)
        } else {
            (iy1 - iy0, ix1 - ix0)
        };
        let reach = rng.random_range(across / 5..=across / 2);
        if reach == 0 || along < 20 || blocked + (reach * t) as f64 > target / 2.0 {
            continue;
        }
        let offset = rng.random_range(along / 5..=along - along / 5 - t);
        let from_low = rng.random_bool(0.5);
        let (x0, y0, x1, y1) = match (horizontal, from_low) {
            (true, true) => (ix0, iy0 + offset, ix0 + reach, iy0 + offset + t),
            (true, false) => (ix1 - reach, iy0 + offset, ix1, iy0 + offset + t),
            (false, true) => (ix0 + offset, iy0, ix0 + offset + t, iy0 + reach),
            (false, false) => (ix0 + offset, iy1 - reach, ix0 + offset + t, iy1),
        };
        // Keep a free cell between partitions; touching the perimeter is fine.
        let probe = (
            x0.max(ix0 + 1),
            y0.max(iy0 + 1),
            x1.min(ix1 - 1),
            y1.min(iy1 - 1),
        );
        if overlaps(&grid, probe.0, probe.1, probe.2, probe.3, 1) {
            continue;
        }
        fill_rect(&mut grid, x0, y0, x1, y1, Cell::Blocked);
        blocked += ((x1 - x0) * (y1 - y0)) as f64;
    }

    // Furniture. Pieces keep a one-cell gap while space allows, which keeps
    // the free area connected; once that saturates they may touch, and the
    // pruned result is checked against the budget instead.
    let spaced_tries = 4000;
    for attempt in 0..20_000 {
        if blocked >= target - slack / 2.0 {
            break;
        }
        let (w, h) = (rng.random_range(2..=6usize), rng.random_range(2..=6usize));
        if ix1 - ix0 < w + 2 || iy1 - iy0 < h + 2 {
            break;
        }
        let x0 = rng.random_range(ix0 + 1..=ix1 - w - 1);
        let y0 = rng.random_range(iy0 + 1..=iy1 - h - 1);
        let halo = usize::from(attempt < spaced_tries);
        if overlaps(&grid, x0, y0, x0 + w, y0 + h, halo) {
            continue;
        }
        fill_rect(&mut grid, x0, y0, x0 + w, y0 + h, Cell::Blocked);
        let now = if halo == 1 {
            blocked + (w * h) as f64
        } else {
            let pruned = largest_component(&grid).map_err(|e| e.to_string())?;
            interior_blocked_fraction(&pruned, t) * area
        };
        if now > target + slack {
            fill_rect(&mut grid, x0, y0, x0 + w, y0 + h, Cell::Free);
            continue;
        }
        blocked = now;
    }
    Ok(grid)
}

/// Checks a pruned plan against the grammar's promises.
fn check(p: &PlanSynthParams, grid: &OccupancyGrid) -> std::result::Result<(), String> {
    let ratio = free_ratio(grid);
    if ratio < 0.40 {
        return Err(format!("free ratio {ratio:.3} below 0.40"));
    }
    match p.style {
        PlanStyle::Corridors => {
            if ratio > 0.90 {
                return Err(format!("free ratio {ratio:.3} above 0.90"));
            }
            let walls = wall_segments(grid, p.wall_thickness, LONG_WALL);
            let need = *p.room_count_range.start();
            if walls < need {
                return Err(format!("{walls} long walls, need {need}"));
            }
        }
        PlanStyle::OpenPlan => {
            let got = interior_blocked_fraction(grid, p.wall_thickness);
            if (got - p.furniture_density).abs() > DENSITY_SLACK + 1e-12 {
                return Err(format!(
                    "interior blocked fraction {got:.3}, wanted {:.3}",
                    p.furniture_density
                ));
            }
        }
    }
    Ok(())
}

/// Generates one plan, already pruned to its largest free component.
pub fn generate_plan(params: &PlanSynthParams) -> Result<OccupancyGrid> {
    params.validate()?;
    let mut reason = String::new();
    for attempt in 0..params.retry_budget {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(u64::from(attempt));
        let raw = match params.style {
            PlanStyle::Corridors => corridors(params, &mut rng),
            PlanStyle::OpenPlan => open_plan(params, &mut rng),
        };
        let outcome = raw.and_then(|g| {
            let pruned = largest_component(&g).map_err(|e| e.to_string())?;
            check(params, &pruned).map(|()| pruned)
        });
        match outcome {
            Ok(grid) => return Ok(grid),
            Err(why) => {
                debug!("seed {} attempt {attempt}: {why}", params.seed);
                reason = why;
            }
        }
    }
    Err(Error::InfeasibleParams {
        attempts: params.retry_budget,
        reason,
    })
}

/// File name of plan `index` in a batch.
pub fn plan_file_name(index: usize) -> String {
    format!("plan_{index:05}.pgm")
}

/// Writes `count` plans into `out_dir`, plan `i` seeded with `seed + i`,
/// and returns a manifest with one task per plan and analysis.
///
/// Task ids are `plan_{i:05}.{analysis}` and outputs go to
/// `fields/plan_{i:05}.{analysis}.f32`. A plan that cannot be generated gets
/// `FAILED` tasks carrying the reason. For `count > 0` the manifest is also
/// saved as `out_dir/manifest.jsonl`.
pub fn generate_batch(
    params: &PlanSynthParams,
    count: usize,
    out_dir: &Path,
    analyses: &[FieldKind],
) -> Result<TaskManifest> {
    params.validate()?;
    if count == 0 {
        return TaskManifest::new(Vec::new(), out_dir);
    }
    let outcomes: Vec<std::result::Result<(), String>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let p = PlanSynthParams {
                seed: params.seed.wrapping_add(i as u64),
                ..params.clone()
            };
            match generate_plan(&p) {
                Ok(grid) => {
                    save_occupancy(&grid, &out_dir.join(plan_file_name(i))).map(|()| Ok(()))
                }
                Err(e @ Error::InfeasibleParams { .. }) => Ok(Err(e.to_string())),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut tasks = Vec::with_capacity(count * analyses.len());
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let stem = format!("plan_{i:05}");
        if let Err(why) = &outcome {
            warn!("{stem}: {why}");
        }
        for &kind in analyses {
            let mut task = Task::new(
                format!("{stem}.{}", kind.slug()),
                plan_file_name(i),
                kind,
                params.cell_size,
                format!("fields/{stem}.{}.f32", kind.slug()),
            );
            if let Err(why) = &outcome {
                task.status = TaskStatus::Failed;
                task.message = Some(why.clone());
            }
            tasks.push(task);
        }
    }
    let mut manifest = TaskManifest::new(tasks, out_dir)?;
    let path = out_dir.join("manifest.jsonl");
    manifest.save(&path)?;
    manifest.path = Some(path);
    Ok(manifest)
}
