//! Per-cell analysis results and their lossless `.f32` sidecar encoding.
//!
//! Sidecar layout: little-endian `u32` width, `u32` height, then
//! `width * height` little-endian IEEE-754 `f32` values in row-major order.
//! Undefined (blocked) cells hold NaN.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::grid::OccupancyGrid;

/// What an [`AnalysisField`] measures. Also names the analysis a farm task runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FieldKind {
    /// Mean geodesic walking distance to every other free cell.
    Spatial,
    /// Number of free cells visible from the cell.
    Visual,
    /// Mean step count through the visibility graph.
    VisualDepth,
    /// Euclidean distance to the nearest obstacle.
    Sdf,
}

impl FieldKind {
    pub const ALL: [FieldKind; 4] = [
        FieldKind::Spatial,
        FieldKind::Visual,
        FieldKind::VisualDepth,
        FieldKind::Sdf,
    ];

    /// Lowercase token used in file names and on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            FieldKind::Spatial => "spatial",
            FieldKind::Visual => "visual",
            FieldKind::VisualDepth => "visual-depth",
            FieldKind::Sdf => "sdf",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "spatial" | "con" => Ok(FieldKind::Spatial),
            "visual" | "vga" => Ok(FieldKind::Visual),
            "visual-depth" | "depth" => Ok(FieldKind::VisualDepth),
            "sdf" => Ok(FieldKind::Sdf),
            _ => Err(Error::InvalidParams(format!("unknown analysis {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisField {
    width: usize,
    height: usize,
    kind: FieldKind,
    values: Vec<f64>,
    defined: Vec<bool>,
}

impl AnalysisField {
    /// Builds a field over `grid`; values at blocked cells are ignored and stored as 0.
    pub fn from_grid_values(grid: &OccupancyGrid, kind: FieldKind, mut values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "one value per cell");
        let defined: Vec<bool> = grid.cells().iter().map(|c| c.is_free()).collect();
        for (v, &d) in values.iter_mut().zip(&defined) {
            if !d {
                *v = 0.0;
            }
        }
        AnalysisField {
            width: grid.width(),
            height: grid.height(),
            kind,
            values,
            defined,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    /// Raw values; undefined cells read 0.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn defined(&self) -> &[bool] {
        &self.defined
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.defined[i].then(|| self.values[i])
    }

    pub fn defined_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.defined)
            .filter_map(|(&v, &d)| d.then_some(v))
    }

    pub fn matches_grid(&self, grid: &OccupancyGrid) -> bool {
        self.width == grid.width() && self.height == grid.height()
    }

    pub fn encode_sidecar(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.values.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for (&v, &d) in self.values.iter().zip(&self.defined) {
            let v = if d { v as f32 } else { f32::NAN };
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode_sidecar(bytes: &[u8], kind: FieldKind) -> Result<Self> {
        let word = |i: usize| -> Option<[u8; 4]> { bytes.get(i..i + 4)?.try_into().ok() };
        let (Some(w), Some(h)) = (word(0), word(4)) else {
            return Err(Error::MalformedImage("sidecar header truncated".into()));
        };
        let width = u32::from_le_bytes(w) as usize;
        let height = u32::from_le_bytes(h) as usize;
        let n = width * height;
        if width == 0 || height == 0 || bytes.len() != 8 + 4 * n {
            return Err(Error::MalformedImage(format!(
                "sidecar of {} bytes does not hold a {width}x{height} field",
                bytes.len()
            )));
        }
        let mut values = Vec::with_capacity(n);
        let mut defined = Vec::with_capacity(n);
        for chunk in bytes[8..].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            defined.push(!v.is_nan());
            values.push(if v.is_nan() { 0.0 } else { f64::from(v) });
        }
        Ok(AnalysisField {
            width,
            height,
            kind,
            values,
            defined,
        })
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode_sidecar())
    }

    pub fn read_sidecar(path: &Path, kind: FieldKind) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_sidecar(&bytes, kind)
    }
}
