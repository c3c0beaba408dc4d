//! Training pairs: grayscale targets, 70/20/10 splits and flip augmentation.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::component::largest_component;
use crate::error::{Error, Result};
use crate::farm::{run_local, Task, TaskManifest, TaskStatus};
use crate::field::{AnalysisField, FieldKind};
use crate::fsutil::write_atomic;
use crate::grid::{GrayImage, OccupancyGrid, DEFAULT_CELL_SIZE};
use crate::pgm::{load_occupancy, write_pgm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RemapDirection {
    /// Smallest value black, largest white.
    Direct,
    /// Smallest value white, largest black.
    Inverted,
}

/// Direction that renders better-connected cells brighter.
pub fn default_direction(kind: FieldKind) -> RemapDirection {
    match kind {
        FieldKind::Spatial | FieldKind::VisualDepth => RemapDirection::Inverted,
        FieldKind::Visual | FieldKind::Sdf => RemapDirection::Direct,
    }
}

/// Min–max remaps the defined values of `field` onto 0..=255.
///
/// Cells blocked in `grid` are black. When every defined value is equal the
/// defined cells are white.
pub fn remap_to_gray(
    field: &AnalysisField,
    grid: &OccupancyGrid,
    direction: RemapDirection,
) -> Result<GrayImage> {
    if !field.matches_grid(grid) {
        return Err(Error::DimensionMismatch(format!(
            "field is {}x{}, grid is {}x{}",
            field.width(),
            field.height(),
            grid.width(),
            grid.height()
        )));
    }
    let live = |i: usize| grid.is_free(i) && field.defined()[i];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &v) in field.values().iter().enumerate() {
        if live(i) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        return Err(Error::EmptyField);
    }
    let span = hi - lo;
    let pixels = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !live(i) {
                0
            } else if span == 0.0 {
                255
            } else {
                let t = match direction {
                    RemapDirection::Direct => v - lo,
                    RemapDirection::Inverted => hi - v,
                };
                // f64::round rounds half away from zero.
                (255.0 * t / span).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    GrayImage::new(field.width(), field.height(), pixels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    /// Train, validation and test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.7, 0.2, 0.1],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self> {
        let spec = SplitSpec { ratios, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidParams(format!(
                "split ratios must be non-negative, got {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "split ratios sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// Train, validation and test counts for `n` items.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        // The epsilon keeps products like 0.7 * 10 from flooring to 6.
        let take = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let train = take(self.ratios[0]).min(n);
        let val = take(self.ratios[1]).min(n - train);
        [train, val, n - train - val]
    }
}

/// Parses `"0.7,0.2,0.1"`.
impl FromStr for SplitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParams(format!("bad split {s:?}: {e}")))?;
        let ratios: [f64; 3] = parts
            .try_into()
            .map_err(|_| Error::InvalidParams(format!("split {s:?} needs three ratios")))?;
        SplitSpec::new(ratios, 0)
    }
}

/// Assigns each id a split. The result is aligned with `ids`.
///
/// Ids are shuffled with a permutation seeded by `spec.seed`; the first
/// `floor(r_train * N)` shuffled ids train, the next `floor(r_val * N)`
/// validate, the rest test.
pub fn split_dataset(ids: &[String], spec: &SplitSpec) -> Result<Vec<Split>> {
    spec.validate()?;
    if ids.is_empty() {
        return Err(Error::InvalidParams("cannot split an empty id list".into()));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateIds(id.clone()));
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let [train, val, _] = spec.sizes(ids.len());
    let mut out = vec![Split::Test; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub input_image: GrayImage,
    pub target_image: GrayImage,
    pub analysis: FieldKind,
    pub split: Split,
}

const FLIP_MARK: &str = ":flip-";

fn split_flip_suffix(id: &str) -> (&str, bool, bool) {
    if let Some(pos) = id.rfind(FLIP_MARK) {
        match &id[pos + FLIP_MARK.len()..] {
            "h" => return (&id[..pos], true, false),
            "v" => return (&id[..pos], false, true),
            "hv" => return (&id[..pos], true, true),
            _ => {}
        }
    }
    (id, false, false)
}

/// Flips both images of `record` along the requested axes.
///
/// The id carries the net flip as a `:flip-h`, `:flip-v` or `:flip-hv`
/// suffix, so flips compose: flipping twice along an axis restores the
/// original record.
pub fn flip_pair(record: &DatasetRecord, horizontal: bool, vertical: bool) -> DatasetRecord {
    let (base, h, v) = split_flip_suffix(&record.id);
    let (h, v) = (h ^ horizontal, v ^ vertical);
    let suffix = match (h, v) {
        (false, false) => "",
        (true, false) => "h",
        (false, true) => "v",
        (true, true) => "hv",
    };
    let id = if suffix.is_empty() {
        base.to_string()
    } else {
        format!("{base}{FLIP_MARK}{suffix}")
    };
    DatasetRecord {
        id,
        input_image: record.input_image.flipped(horizontal, vertical),
        target_image: record.target_image.flipped(horizontal, vertical),
        analysis: record.analysis,
        split: record.split,
    }
}

/// One line of the dataset manifest. Paths are relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub input_path: String,
    pub target_path: String,
    pub analysis: FieldKind,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct DatasetOptions {
    pub analyses: Vec<FieldKind>,
    pub split: SplitSpec,
    /// Threads used to compute missing fields. `None` makes a missing field
    /// an error instead.
    pub farm_workers: Option<usize>,
    pub cell_size: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            analyses: vec![FieldKind::Spatial, FieldKind::Visual],
            split: SplitSpec::default(),
            farm_workers: Some(1),
            cell_size: DEFAULT_CELL_SIZE,
        }
    }
}

/// Where a plan's analysis output is expected: `fields/{plan}.{slug}.f32`
/// next to the plan.
pub fn field_path(plans_dir: &Path, plan_id: &str, kind: FieldKind) -> PathBuf {
    plans_dir
        .join("fields")
        .join(format!("{plan_id}.{}.f32", kind.slug()))
}

/// Plan ids (file stems of `*.pgm`) directly inside `plans_dir`, sorted.
pub fn list_plans(plans_dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(plans_dir).map_err(|e| Error::io(plans_dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(plans_dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "pgm") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn fill_missing_fields(plans_dir: &Path, plans: &[String], options: &DatasetOptions) -> Result<()> {
    let mut tasks = Vec::new();
    for plan in plans {
        for &kind in &options.analyses {
            if field_path(plans_dir, plan, kind).is_file() {
                continue;
            }
            let Some(_) = options.farm_workers else {
                return Err(Error::MissingField {
                    plan_id: plan.clone(),
                    analysis: kind.slug().into(),
                });
            };
            tasks.push(Task::new(
                format!("{plan}.{}", kind.slug()),
                format!("{plan}.pgm"),
                kind,
                options.cell_size,
                format!("fields/{plan}.{}.f32", kind.slug()),
            ));
        }
    }
    let Some(workers) = options.farm_workers.filter(|_| !tasks.is_empty()) else {
        return Ok(());
    };
    info!("computing {} missing fields", tasks.len());
    let mut manifest = TaskManifest::new(tasks, plans_dir)?;
    run_local(&mut manifest, workers)?;
    if let Some(t) = manifest.tasks.iter().find(|t| t.status != TaskStatus::Done) {
        let why = t
            .message
            .clone()
            .unwrap_or_else(|| "task did not finish".into());
        return Err(Error::record(t.id.clone(), Error::InvalidParams(why)));
    }
    Ok(())
}

fn build_plan(
    plans_dir: &Path,
    out_dir: &Path,
    plan: &str,
    split: Split,
    options: &DatasetOptions,
) -> Result<Vec<DatasetEntry>> {
    let grid = load_occupancy(&plans_dir.join(format!("{plan}.pgm")), options.cell_size)
        .map_err(|e| Error::record(plan, e))?;
    let pruned = largest_component(&grid).map_err(|e| Error::record(plan, e))?;
    let input_rel = format!("inputs/{plan}.pgm");
    write_pgm(&GrayImage::from_grid(&pruned), &out_dir.join(&input_rel))?;
    let mut entries = Vec::with_capacity(options.analyses.len());
    for &kind in &options.analyses {
        let id = format!("{plan}.{}", kind.slug());
        let field = AnalysisField::read_sidecar(&field_path(plans_dir, plan, kind), kind)
            .and_then(|f| remap_to_gray(&f, &pruned, default_direction(kind)))
            .map_err(|e| Error::record(id.clone(), e))?;
        let target_rel = format!("targets/{id}.pgm");
        write_pgm(&field, &out_dir.join(&target_rel))?;
        entries.push(DatasetEntry {
            id,
            input_path: input_rel.clone(),
            target_path: target_rel,
            analysis: kind,
            split,
        });
    }
    Ok(entries)
}

/// Assembles a dataset from the plans in `plans_dir`.
///
/// Every plan contributes one record per analysis: the pruned plan as
/// input and the remapped field as target. Splits are drawn per plan, so
/// all records of a plan share a split. Writes `inputs/`, `targets/` and
/// `manifest.jsonl` under `out_dir` and returns the manifest entries.
pub fn build_dataset(
    plans_dir: &Path,
    out_dir: &Path,
    options: &DatasetOptions,
) -> Result<Vec<DatasetEntry>> {
    if options.analyses.is_empty() {
        return Err(Error::InvalidParams("no analyses requested".into()));
    }
    let plans = list_plans(plans_dir)?;
    if plans.is_empty() {
        return Err(Error::InvalidParams(format!(
            "no .pgm plans in {}",
            plans_dir.display()
        )));
    }
    fill_missing_fields(plans_dir, &plans, options)?;
    let splits = split_dataset(&plans, &options.split)?;
    let per_plan: Vec<Vec<DatasetEntry>> = plans
        .par_iter()
        .zip(splits.par_iter())
        .map(|(plan, &split)| build_plan(plans_dir, out_dir, plan, split, options))
        .collect::<Result<_>>()?;
    let entries: Vec<DatasetEntry> = per_plan.into_iter().flatten().collect();
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e).expect("entry serializes"));
        text.push('\n');
    }
    write_atomic(&out_dir.join("manifest.jsonl"), text.as_bytes())?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_field(values: &[f64]) -> (AnalysisField, OccupancyGrid) {
        let grid = OccupancyGrid::from_ascii(&".".repeat(values.len()), 1.0).unwrap();
        let f = AnalysisField::from_grid_values(&grid, FieldKind::Spatial, values.to_vec());
        (f, grid)
    }

    #[test]
    fn remap_midpoint_rounds_up() {
        let (f, g) = line_field(&[2.0, 6.0, 10.0]);
        let img = remap_to_gray(&f, &g, RemapDirection::Direct).unwrap();
        assert_eq!(img.pixels(), &[0, 128, 255]);
        let img = remap_to_gray(&f, &g, RemapDirection::Inverted).unwrap();
        assert_eq!(img.pixels(), &[255, 128, 0]);
    }

    #[test]
    fn remap_uniform_and_blocked() {
        let grid = OccupancyGrid::from_ascii(".#.", 1.0).unwrap();
        let f = AnalysisField::from_grid_values(&grid, FieldKind::Visual, vec![3.0, 99.0, 3.0]);
        let img = remap_to_gray(&f, &grid, RemapDirection::Direct).unwrap();
        assert_eq!(img.pixels(), &[255, 0, 255]);
    }

    #[test]
    fn remap_empty_field() {
        let grid = OccupancyGrid::from_ascii("##", 1.0).unwrap();
        let f = AnalysisField::from_grid_values(&grid, FieldKind::Visual, vec![0.0, 0.0]);
        assert!(matches!(
            remap_to_gray(&f, &grid, RemapDirection::Direct),
            Err(Error::EmptyField)
        ));
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::default();
        assert_eq!(spec.sizes(3002), [2101, 600, 301]);
        assert_eq!(spec.sizes(10), [7, 2, 1]);
        assert_eq!(spec.sizes(1), [0, 0, 1]);
    }

    #[test]
    fn split_rejects_duplicates() {
        let ids = vec!["a".to_string(), "b".into(), "a".into()];
        assert!(matches!(
            split_dataset(&ids, &SplitSpec::default()),
            Err(Error::DuplicateIds(id)) if id == "a"
        ));
    }

    #[test]
    fn split_spec_parsing() {
        let s: SplitSpec = "0.8, 0.1, 0.1".parse().unwrap();
        assert_eq!(s.ratios, [0.8, 0.1, 0.1]);
        assert!("0.5,0.5".parse::<SplitSpec>().is_err());
        assert!("0.5,0.4,0.2".parse::<SplitSpec>().is_err());
        assert!("0.5,-0.1,0.6".parse::<SplitSpec>().is_err());
    }

    #[test]
    fn flip_suffixes_compose() {
        let img = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        let r = DatasetRecord {
            id: "plan_00001.spatial".into(),
            input_image: img.clone(),
            target_image: img,
            analysis: FieldKind::Spatial,
            split: Split::Train,
        };
        let h = flip_pair(&r, true, false);
        assert_eq!(h.id, "plan_00001.spatial:flip-h");
        assert_eq!(h.input_image.pixels(), &[255, 0]);
        assert_eq!(h.target_image.pixels(), &[255, 0]);
        assert_eq!(flip_pair(&h, false, true).id, "plan_00001.spatial:flip-hv");
        assert_eq!(flip_pair(&h, true, false), r);
    }
}
