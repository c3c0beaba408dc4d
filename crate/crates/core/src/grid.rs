//! Raster floor-plan model.
//!
//! A plan is a row-major grid of square cells, each either free (walkable,
//! a graph node) or blocked (wall, furniture, or outside the plan). The
//! origin is the top-left cell; `x` is the column and `y` the row.

use std::fmt;

use crate::error::{Error, Result};

/// Occupancy of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Blocked,
}

impl Cell {
    #[inline]
    pub fn is_free(self) -> bool {
        self == Cell::Free
    }
}

/// Default edge length of a cell in metres (one pixel per metre).
pub const DEFAULT_CELL_SIZE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    /// A grid with every cell set to `fill`.
    pub fn filled(width: usize, height: usize, cell_size: f64, fill: Cell) -> Result<Self> {
        Self::from_cells(width, height, cell_size, vec![fill; width * height])
    }

    pub fn from_cells(
        width: usize,
        height: usize,
        cell_size: f64,
        cells: Vec<Cell>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if cells.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{} cells supplied for a {width}x{height} grid",
                cells.len()
            )));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        Ok(OccupancyGrid {
            width,
            height,
            cell_size,
            cells,
        })
    }

    /// Parses a picture made of `#` (blocked) and `.` (free) rows.
    /// Whitespace around rows is ignored; empty lines are skipped.
    pub fn from_ascii(art: &str, cell_size: f64) -> Result<Self> {
        let rows: Vec<&str> = art
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut cells = Vec::with_capacity(width * height);
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::InvalidGrid(format!("row {y} has ragged width")));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Blocked,
                    other => {
                        return Err(Error::InvalidGrid(format!(
                            "unexpected character {other:?}"
                        )))
                    }
                });
            }
        }
        Self::from_cells(width, height, cell_size, cells)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn with_cell_size(mut self, cell_size: f64) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        self.cell_size = cell_size;
        Ok(self)
    }

    #[inline]
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Cell {
        self.cells[self.index(x, y)]
    }

    /// Signed lookup; anything outside the grid reads as blocked.
    #[inline]
    pub fn is_free_at(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.cells[y as usize * self.width + x as usize].is_free()
    }

    #[inline]
    pub fn is_free(&self, index: usize) -> bool {
        self.cells[index].is_free()
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, cell: Cell) {
        let i = self.index(x, y);
        self.cells[i] = cell;
    }

    #[inline]
    pub fn set_index(&mut self, index: usize, cell: Cell) {
        self.cells[index] = cell;
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_free()).count()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.is_free().then_some(i))
            .collect()
    }

    /// Checks `index` is in range and free, returning its coordinates.
    pub fn require_free(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.cells.len() {
            return Err(Error::OutOfBounds {
                index,
                width: self.width,
                height: self.height,
            });
        }
        let (x, y) = self.coords(index);
        if !self.cells[index].is_free() {
            return Err(Error::BlockedCell { x, y });
        }
        Ok((x, y))
    }

    pub fn flipped(&self, horizontal: bool, vertical: bool) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let sx = if horizontal { self.width - 1 - x } else { x };
                let sy = if vertical { self.height - 1 - y } else { y };
                out.cells[y * self.width + x] = self.cells[sy * self.width + sx];
            }
        }
        out
    }
}

impl fmt::Display for OccupancyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.width) {
            for c in row {
                f.write_str(if c.is_free() { "." } else { "#" })?;
            }
            f.write_str("\n")?;
        }
        Ok(())
    }
}

/// 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::MalformedImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Plan encoding: blocked cells black, free cells white.
    pub fn from_grid(grid: &OccupancyGrid) -> Self {
        GrayImage {
            width: grid.width(),
            height: grid.height(),
            pixels: grid
                .cells()
                .iter()
                .map(|c| if c.is_free() { 255 } else { 0 })
                .collect(),
        }
    }

    /// Thresholds at 128: darker pixels are obstacles.
    pub fn to_grid(&self, cell_size: f64) -> Result<OccupancyGrid> {
        let cells = self
            .pixels
            .iter()
            .map(|&p| if p >= 128 { Cell::Free } else { Cell::Blocked })
            .collect();
        OccupancyGrid::from_cells(self.width, self.height, cell_size, cells)
    }

    pub fn flipped(&self, horizontal: bool, vertical: bool) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in 0..self.height {
            let sy = if vertical { self.height - 1 - y } else { y };
            for x in 0..self.width {
                let sx = if horizontal { self.width - 1 - x } else { x };
                pixels.push(self.pixels[sy * self.width + sx]);
            }
        }
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}
