//! Exact Euclidean distance to the nearest obstacle.
//!
//! The plan is treated as if surrounded by a one-cell ring of blocked
//! cells, so free cells on the border are one cell from an obstacle.
//! Squared distances are computed with the separable lower-envelope
//! transform of Felzenszwalb and Huttenlocher, which is exact on integer
//! lattices.

use crate::field::{AnalysisField, FieldKind};
use crate::grid::OccupancyGrid;

const FAR: f64 = 1e20;

/// One-dimensional squared distance transform of `f` into `out`. Entries
/// at or beyond `FAR` are not sites.
fn transform_1d(f: &[f64], out: &mut [f64], hull: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    hull.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if fq >= FAR {
            continue;
        }
        let qf = q as f64;
        while let Some(&v) = hull.last() {
            let vf = v as f64;
            let s = ((fq + qf * qf) - (f[v] + vf * vf)) / (2.0 * (qf - vf));
            if hull.len() > 1 && s <= bounds[hull.len() - 1] {
                hull.pop();
                bounds.pop();
            } else {
                hull.push(q);
                bounds.push(s);
                break;
            }
        }
        if hull.is_empty() {
            hull.push(q);
            bounds.push(f64::NEG_INFINITY);
        }
    }
    if hull.is_empty() {
        out.fill(FAR);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < hull.len() && bounds[k + 1] < qf {
            k += 1;
        }
        let d = qf - hull[k] as f64;
        *o = d * d + f[hull[k]];
    }
}

/// Squared distance, in cell units, from every cell to the nearest blocked
/// cell including the virtual outer ring.
pub fn squared_distance_cells(grid: &OccupancyGrid) -> Vec<f64> {
    let (w, h) = (grid.width() + 2, grid.height() + 2);
    let mut d = vec![0.0; w * h];
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            if grid.get(x, y).is_free() {
                d[(y + 1) * w + x + 1] = FAR;
            }
        }
    }
    let (mut hull, mut bounds) = (Vec::new(), Vec::new());
    let mut col = vec![0.0; h];
    let mut tmp = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = d[y * w + x];
        }
        transform_1d(&col, &mut tmp, &mut hull, &mut bounds);
        for y in 0..h {
            d[y * w + x] = tmp[y];
        }
    }
    let mut row = vec![0.0; w];
    for y in 0..h {
        row.copy_from_slice(&d[y * w..(y + 1) * w]);
        transform_1d(&row, &mut d[y * w..(y + 1) * w], &mut hull, &mut bounds);
    }
    let mut out = Vec::with_capacity(grid.len());
    for y in 0..grid.height() {
        out.extend_from_slice(&d[(y + 1) * w + 1..(y + 1) * w + 1 + grid.width()]);
    }
    out
}

/// Distance in metres from each free cell centre to the nearest blocked cell centre.
pub fn signed_distance_field(grid: &OccupancyGrid) -> AnalysisField {
    let values = squared_distance_cells(grid)
        .into_iter()
        .map(|d2| d2.sqrt() * grid.cell_size())
        .collect();
    AnalysisField::from_grid_values(grid, FieldKind::Sdf, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    #[test]
    fn open_square() {
        let g = OccupancyGrid::filled(3, 3, 1.0, Cell::Free).unwrap();
        let f = signed_distance_field(&g);
        assert_eq!(f.values(), &[1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn row_with_wall() {
        let g = OccupancyGrid::from_ascii("#...", 1.0).unwrap();
        let f = signed_distance_field(&g);
        assert_eq!(f.values(), &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(f.get(0, 0), None);
    }

    #[test]
    fn diagonal_distance_and_scale() {
        let g = OccupancyGrid::from_ascii(
            "#....
             .....
             .....
             .....
             .....",
            0.5,
        )
        .unwrap();
        let d2 = squared_distance_cells(&g);
        // Centre cell (2,2): ring is 3 away, the wall at (0,0) is sqrt(8).
        assert_eq!(d2[12], 8.0);
        assert_eq!(signed_distance_field(&g).get(2, 2), Some(8f64.sqrt() * 0.5));
    }
}
