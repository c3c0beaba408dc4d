//! Visual connectivity and visibility-graph measures.
//!
//! Two free cells see each other when the straight segment between their
//! centres crosses no blocked cell's interior. Grazing a blocked cell's
//! edge or corner does not block the view. Two backends answer the
//! question: an exact per-pair line walk, and symmetric recursive
//! shadow-casting, which sweeps each quadrant once per origin.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{AnalysisField, FieldKind};
use crate::grid::OccupancyGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum VisibilityBackend {
    #[default]
    Shadowcast,
    Exact,
}

impl fmt::Display for VisibilityBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VisibilityBackend::Shadowcast => "shadowcast",
            VisibilityBackend::Exact => "exact",
        })
    }
}

impl FromStr for VisibilityBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shadowcast" => Ok(VisibilityBackend::Shadowcast),
            "exact" => Ok(VisibilityBackend::Exact),
            _ => Err(Error::InvalidParams(format!(
                "unknown visibility backend {s:?}"
            ))),
        }
    }
}

/// Free cells visible from `origin`, excluding the origin, in ascending index order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisibilitySet {
    pub origin: usize,
    pub visible: Vec<usize>,
}

impl VisibilitySet {
    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.visible.binary_search(&cell).is_ok()
    }
}

/// Walks the cells whose interior the open segment between two cell
/// centres passes through. Where the segment crosses a grid corner exactly,
/// it steps diagonally and the two cells meeting there are only touched.
pub fn line_of_sight(grid: &OccupancyGrid, from: (usize, usize), to: (usize, usize)) -> bool {
    let (ax, ay) = (from.0 as i64, from.1 as i64);
    let (bx, by) = (to.0 as i64, to.1 as i64);
    let (nx, ny) = ((bx - ax).abs(), (by - ay).abs());
    let (sx, sy) = ((bx - ax).signum(), (by - ay).signum());
    let (mut x, mut y) = (ax, ay);
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        // Compare the parameters of the next vertical and horizontal
        // boundary crossings: (2ix + 1) / 2nx against (2iy + 1) / 2ny.
        let vertical = (1 + 2 * ix) * ny;
        let horizontal = (1 + 2 * iy) * nx;
        match vertical.cmp(&horizontal) {
            std::cmp::Ordering::Equal => {
                x += sx;
                y += sy;
                ix += 1;
                iy += 1;
            }
            std::cmp::Ordering::Less => {
                x += sx;
                ix += 1;
            }
            std::cmp::Ordering::Greater => {
                y += sy;
                iy += 1;
            }
        }
        if (x, y) == (bx, by) {
            break;
        }
        if !grid.is_free_at(x as isize, y as isize) {
            return false;
        }
    }
    true
}

pub fn visible_set_exact(grid: &OccupancyGrid, origin: usize) -> Result<VisibilitySet> {
    let from = grid.require_free(origin)?;
    let visible = (0..grid.len())
        .filter(|&c| c != origin && grid.is_free(c) && line_of_sight(grid, from, grid.coords(c)))
        .collect();
    Ok(VisibilitySet { origin, visible })
}

/// Exact rational `num / den` with `den > 0`.
#[derive(Clone, Copy, Debug)]
struct Slope {
    num: i64,
    den: i64,
}

impl Slope {
    const fn new(num: i64, den: i64) -> Self {
        Slope { num, den }
    }

    fn lt(self, other: Slope) -> bool {
        self.num * other.den < other.num * self.den
    }

    fn le(self, other: Slope) -> bool {
        self.num * other.den <= other.num * self.den
    }

    /// Open range of slopes covered by the square of tile `col` at `depth`,
    /// bounded by its two outermost corners.
    fn tile_extent(depth: i64, col: i64) -> (Slope, Slope) {
        let (near, far) = (2 * depth - 1, 2 * depth + 1);
        let lo = Slope::new(2 * col - 1, if col > 0 { far } else { near });
        let hi = Slope::new(2 * col + 1, if col < 0 { far } else { near });
        (lo, hi)
    }
}

/// Lit slopes `[start, end]` (closed; may be a single slope) entering a row.
#[derive(Clone, Copy)]
struct Row {
    depth: i64,
    start: Slope,
    end: Slope,
}

#[derive(Clone, Copy)]
enum Quadrant {
    North,
    East,
    South,
    West,
}

impl Quadrant {
    const ALL: [Quadrant; 4] = [
        Quadrant::North,
        Quadrant::East,
        Quadrant::South,
        Quadrant::West,
    ];

    #[inline]
    fn transform(self, (ox, oy): (i64, i64), depth: i64, col: i64) -> (i64, i64) {
        match self {
            Quadrant::North => (ox + col, oy - depth),
            Quadrant::South => (ox + col, oy + depth),
            Quadrant::East => (ox + depth, oy + col),
            Quadrant::West => (ox - depth, oy + col),
        }
    }
}

/// Symmetric shadow-casting from `origin`, calling `mark` for every visible
/// free cell. A cell may be reported more than once (quadrants share their
/// boundary lines). Cells outside the grid behave as walls.
///
/// A tile is lit when the slope of its centre lies in the lit range of its
/// row. Walls shade the open slope range of their whole square from the
/// rows behind them, so a ray that only touches a wall's corner stays lit.
/// Both rules depend only on the centre-to-centre segment, which makes the
/// relation symmetric.
fn shadowcast(grid: &OccupancyGrid, origin: (usize, usize), mut mark: impl FnMut(usize)) {
    let o = (origin.0 as i64, origin.1 as i64);
    let w = grid.width() as i64;
    let wall = |(x, y): (i64, i64)| !grid.is_free_at(x as isize, y as isize);
    let mut stack = Vec::new();
    for quadrant in Quadrant::ALL {
        stack.push(Row {
            depth: 1,
            start: Slope::new(-1, 1),
            end: Slope::new(1, 1),
        });
        while let Some(row) = stack.pop() {
            let d = row.depth;
            // Any square reaching the lit range lies within one column of
            // `slope * depth`.
            let lo = (row.start.num * d - row.start.den)
                .div_euclid(row.start.den)
                .max(-d);
            let hi = (-(row.end.num * d + row.end.den))
                .div_euclid(row.end.den)
                .wrapping_neg()
                .min(d);
            let mut lit_from = row.start;
            let mut open = true;
            for col in lo..=hi {
                let pos = quadrant.transform(o, d, col);
                if wall(pos) {
                    let (a, b) = Slope::tile_extent(d, col);
                    if open && a.lt(row.end) && lit_from.lt(b) {
                        if lit_from.le(a) {
                            stack.push(Row {
                                depth: d + 1,
                                start: lit_from,
                                end: a,
                            });
                        }
                        lit_from = b;
                        open = lit_from.le(row.end);
                    }
                } else {
                    let centre = Slope::new(col, d);
                    if row.start.le(centre) && centre.le(row.end) {
                        mark((pos.1 * w + pos.0) as usize);
                    }
                }
            }
            if open {
                stack.push(Row {
                    depth: d + 1,
                    start: lit_from,
                    end: row.end,
                });
            }
        }
    }
}

pub fn visible_set_shadowcast(grid: &OccupancyGrid, origin: usize) -> Result<VisibilitySet> {
    let from = grid.require_free(origin)?;
    let mut seen = vec![false; grid.len()];
    shadowcast(grid, from, |c| seen[c] = true);
    seen[origin] = false;
    let visible = seen
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i))
        .collect();
    Ok(VisibilitySet { origin, visible })
}

pub fn visible_set(
    grid: &OccupancyGrid,
    origin: usize,
    backend: VisibilityBackend,
) -> Result<VisibilitySet> {
    match backend {
        VisibilityBackend::Shadowcast => visible_set_shadowcast(grid, origin),
        VisibilityBackend::Exact => visible_set_exact(grid, origin),
    }
}

/// Per-origin visible-cell counter with reusable scratch space.
struct Counter<'a> {
    grid: &'a OccupancyGrid,
    backend: VisibilityBackend,
    stamp: Vec<u32>,
    generation: u32,
}

impl<'a> Counter<'a> {
    fn new(grid: &'a OccupancyGrid, backend: VisibilityBackend) -> Self {
        Counter {
            grid,
            backend,
            stamp: vec![0; grid.len()],
            generation: 0,
        }
    }

    /// Visits each cell visible from `origin` exactly once.
    fn for_each_visible(&mut self, origin: usize, mut visit: impl FnMut(usize)) {
        let from = self.grid.coords(origin);
        match self.backend {
            VisibilityBackend::Exact => {
                for c in 0..self.grid.len() {
                    if c != origin
                        && self.grid.is_free(c)
                        && line_of_sight(self.grid, from, self.grid.coords(c))
                    {
                        visit(c);
                    }
                }
            }
            VisibilityBackend::Shadowcast => {
                self.generation += 1;
                let generation = self.generation;
                let stamp = &mut self.stamp;
                stamp[origin] = generation;
                shadowcast(self.grid, from, |c| {
                    if stamp[c] != generation {
                        stamp[c] = generation;
                        visit(c);
                    }
                });
            }
        }
    }

    fn count(&mut self, origin: usize) -> usize {
        let mut n = 0;
        self.for_each_visible(origin, |_| n += 1);
        n
    }
}

fn count_field(
    grid: &OccupancyGrid,
    counts: impl Iterator<Item = (usize, usize)>,
) -> AnalysisField {
    let mut values = vec![0.0; grid.len()];
    for (cell, n) in counts {
        values[cell] = n as f64;
    }
    AnalysisField::from_grid_values(grid, FieldKind::Visual, values)
}

/// Number of free cells visible from each free cell.
pub fn visual_connectivity_field(
    grid: &OccupancyGrid,
    backend: VisibilityBackend,
) -> Result<AnalysisField> {
    let free = grid.free_indices();
    if free.is_empty() {
        return Err(Error::NoFreeCells);
    }
    let mut counter = Counter::new(grid, backend);
    let counts: Vec<_> = free.iter().map(|&c| (c, counter.count(c))).collect();
    Ok(count_field(grid, counts.into_iter()))
}

/// Parallel form of [`visual_connectivity_field`]; identical output.
pub fn visual_connectivity_field_par(
    grid: &OccupancyGrid,
    backend: VisibilityBackend,
) -> Result<AnalysisField> {
    let free = grid.free_indices();
    if free.is_empty() {
        return Err(Error::NoFreeCells);
    }
    let counts: Vec<_> = free
        .par_iter()
        .map_init(
            || Counter::new(grid, backend),
            |counter, &c| (c, counter.count(c)),
        )
        .collect();
    Ok(count_field(grid, counts.into_iter()))
}

/// Fixed-width bit set over dense node ids.
#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    #[inline]
    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn clear(&mut self) {
        self.0.fill(0);
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(wi, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let b = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

/// Visibility graph over free cells as one adjacency bit set per node.
struct VisibilityGraph {
    cells: Vec<usize>,
    adjacency: Vec<Bits>,
}

impl VisibilityGraph {
    fn build(grid: &OccupancyGrid, backend: VisibilityBackend, parallel: bool) -> Self {
        let cells = grid.free_indices();
        let mut node_of = vec![usize::MAX; grid.len()];
        for (n, &c) in cells.iter().enumerate() {
            node_of[c] = n;
        }
        let row_of = |counter: &mut Counter, &c: &usize| {
            let mut row = Bits::new(cells.len());
            counter.for_each_visible(c, |v| row.insert(node_of[v]));
            row
        };
        let adjacency = if parallel {
            cells
                .par_iter()
                .map_init(|| Counter::new(grid, backend), row_of)
                .collect()
        } else {
            let mut counter = Counter::new(grid, backend);
            cells.iter().map(|c| row_of(&mut counter, c)).collect()
        };
        VisibilityGraph { cells, adjacency }
    }

    /// Mean breadth-first depth from `source` to every other node, or
    /// `None` when some node is unreachable.
    fn mean_depth(
        &self,
        source: usize,
        visited: &mut Bits,
        frontier: &mut Bits,
        next: &mut Bits,
    ) -> Option<f64> {
        let n = self.cells.len();
        if n == 1 {
            return Some(0.0);
        }
        visited.clear();
        frontier.clear();
        visited.insert(source);
        frontier.insert(source);
        let (mut reached, mut total, mut depth) = (1usize, 0u64, 0u64);
        loop {
            depth += 1;
            next.clear();
            for v in frontier.ones() {
                for (dst, src) in next.0.iter_mut().zip(&self.adjacency[v].0) {
                    *dst |= src;
                }
            }
            for (dst, seen) in next.0.iter_mut().zip(&visited.0) {
                *dst &= !seen;
            }
            let found = next.count();
            if found == 0 {
                break;
            }
            for (dst, src) in visited.0.iter_mut().zip(&next.0) {
                *dst |= src;
            }
            reached += found;
            total += depth * found as u64;
            std::mem::swap(frontier, next);
        }
        (reached == n).then(|| total as f64 / (n - 1) as f64)
    }
}

/// Mean number of visibility-graph steps from each free cell to every other.
pub fn visual_mean_depth_field(
    grid: &OccupancyGrid,
    backend: VisibilityBackend,
) -> Result<AnalysisField> {
    mean_depth_field(grid, backend, false)
}

/// Parallel form of [`visual_mean_depth_field`]; identical output.
pub fn visual_mean_depth_field_par(
    grid: &OccupancyGrid,
    backend: VisibilityBackend,
) -> Result<AnalysisField> {
    mean_depth_field(grid, backend, true)
}

fn mean_depth_field(
    grid: &OccupancyGrid,
    backend: VisibilityBackend,
    parallel: bool,
) -> Result<AnalysisField> {
    if grid.free_count() == 0 {
        return Err(Error::NoFreeCells);
    }
    let graph = VisibilityGraph::build(grid, backend, parallel);
    let n = graph.cells.len();
    let scratch = || (Bits::new(n), Bits::new(n), Bits::new(n));
    let depth = |(visited, frontier, next): &mut (Bits, Bits, Bits), s: usize| {
        graph.mean_depth(s, visited, frontier, next)
    };
    let depths: Option<Vec<f64>> = if parallel {
        (0..n).into_par_iter().map_init(scratch, depth).collect()
    } else {
        let mut buf = scratch();
        (0..n).map(|s| depth(&mut buf, s)).collect()
    };
    let depths = depths.ok_or(Error::DisconnectedVisibilityGraph)?;
    let mut values = vec![0.0; grid.len()];
    for (node, d) in depths.into_iter().enumerate() {
        values[graph.cells[node]] = d;
    }
    Ok(AnalysisField::from_grid_values(
        grid,
        FieldKind::VisualDepth,
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    fn grid(art: &str) -> OccupancyGrid {
        OccupancyGrid::from_ascii(art, 1.0).unwrap()
    }

    const BOTH: [VisibilityBackend; 2] = [VisibilityBackend::Exact, VisibilityBackend::Shadowcast];

    #[test]
    fn open_square_sees_everything() {
        let g = OccupancyGrid::filled(3, 3, 1.0, Cell::Free).unwrap();
        for b in BOTH {
            for o in 0..9 {
                assert_eq!(visible_set(&g, o, b).unwrap().len(), 8, "{b} origin {o}");
            }
            let f = visual_connectivity_field(&g, b).unwrap();
            assert!(f.values().iter().all(|&v| v == 8.0));
        }
    }

    #[test]
    fn blocked_centre_exact() {
        let g = grid("...\n.#.\n...");
        let v = visible_set_exact(&g, 0).unwrap();
        assert_eq!(v.visible, vec![1, 2, 3, 6]);
        let f = visual_connectivity_field(&g, VisibilityBackend::Exact).unwrap();
        for i in g.free_indices() {
            assert_eq!(f.values()[i], 4.0);
        }
        assert_eq!(f.get(1, 1), None);
    }

    #[test]
    fn wall_between_row_cells() {
        let g = grid(".#.");
        for b in BOTH {
            assert!(visible_set(&g, 0, b).unwrap().is_empty());
        }
    }

    #[test]
    fn enclosed_cell_sees_nothing() {
        let g = grid(".....\n.###.\n.#.#.\n.###.\n.....");
        for b in BOTH {
            assert!(visible_set(&g, 12, b).unwrap().is_empty());
        }
    }

    #[test]
    fn row_counts() {
        let g = OccupancyGrid::filled(3, 1, 1.0, Cell::Free).unwrap();
        for b in BOTH {
            let f = visual_connectivity_field(&g, b).unwrap();
            assert_eq!(f.values(), &[2.0, 2.0, 2.0]);
        }
    }

    #[test]
    fn grazing_a_corner_is_visible() {
        // The segment from (0,0) to (2,2) passes exactly through the corner
        // shared by the two blocked cells.
        let g = grid(".#.\n#..\n...");
        assert!(line_of_sight(&g, (0, 0), (1, 1)));
        assert!(visible_set_exact(&g, 0).unwrap().contains(8));
    }

    #[test]
    fn blocked_origin_rejected() {
        let g = grid("#.");
        for b in BOTH {
            assert!(matches!(
                visible_set(&g, 0, b),
                Err(Error::BlockedCell { .. })
            ));
        }
    }

    #[test]
    fn mean_depth_fixtures() {
        let open = OccupancyGrid::filled(3, 3, 1.0, Cell::Free).unwrap();
        let f = visual_mean_depth_field(&open, VisibilityBackend::Exact).unwrap();
        assert!(f.defined_values().all(|v| v == 1.0));

        let ring = grid("...\n.#.\n...");
        let f = visual_mean_depth_field(&ring, VisibilityBackend::Exact).unwrap();
        assert!((f.get(0, 0).unwrap() - 10.0 / 7.0).abs() < 1e-12);

        let split = grid(".#.");
        assert!(matches!(
            visual_mean_depth_field(&split, VisibilityBackend::Exact),
            Err(Error::DisconnectedVisibilityGraph)
        ));
        let single = grid("#.#");
        let f = visual_mean_depth_field(&single, VisibilityBackend::Shadowcast).unwrap();
        assert_eq!(f.get(1, 0), Some(0.0));
    }

    #[test]
    fn no_free_cells() {
        let g = grid("##");
        assert!(matches!(
            visual_connectivity_field(&g, VisibilityBackend::Exact),
            Err(Error::NoFreeCells)
        ));
        assert!(matches!(
            visual_mean_depth_field(&g, VisibilityBackend::Exact),
            Err(Error::NoFreeCells)
        ));
    }

    #[test]
    fn backend_parsing() {
        assert_eq!(
            "exact".parse::<VisibilityBackend>().unwrap(),
            VisibilityBackend::Exact
        );
        assert!("raycast".parse::<VisibilityBackend>().is_err());
    }
}
