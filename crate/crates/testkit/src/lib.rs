//! Brute-force reference implementations for checking the analysis code.
//!
//! Everything here works on a plain row-major `free` mask and shares no
//! code with the library under test. The algorithms are the slow, obvious
//! ones: Floyd–Warshall, exhaustive nearest-obstacle search, per-cell
//! segment/box clipping and breadth-first search.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bare free/blocked mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub free: Vec<bool>,
}

impl Mask {
    pub fn free_at(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.free[y as usize * self.width + x as usize]
    }

    pub fn free_cells(&self) -> Vec<usize> {
        (0..self.free.len()).filter(|&i| self.free[i]).collect()
    }

    fn xy(&self, i: usize) -> (i64, i64) {
        ((i % self.width) as i64, (i / self.width) as i64)
    }
}

/// Random mask with each cell blocked independently with probability `density`.
pub fn random_mask(rng: &mut impl Rng, width: usize, height: usize, density: f64) -> Mask {
    let free = (0..width * height)
        .map(|_| !rng.random_bool(density))
        .collect();
    Mask {
        width,
        height,
        free,
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All-pairs walking distances (cell units) over free cells using the
/// 8-neighbourhood where a diagonal move needs both side cells free.
/// Entry `[i][j]` is indexed by position in `mask.free_cells()`.
pub fn floyd_warshall(mask: &Mask) -> Vec<Vec<f64>> {
    let cells = mask.free_cells();
    let n = cells.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
        let (x, y) = mask.xy(cells[i]);
        for j in 0..n {
            let (u, v) = mask.xy(cells[j]);
            let (dx, dy) = (u - x, v - y);
            if (dx, dy) == (0, 0) || dx.abs() > 1 || dy.abs() > 1 {
                continue;
            }
            if dx == 0 || dy == 0 {
                d[i][j] = 1.0;
            } else if mask.free_at(x + dx, y) && mask.free_at(x, y + dy) {
                d[i][j] = std::f64::consts::SQRT_2;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Mean of each row excluding the diagonal; 0 for a single cell.
pub fn row_means(d: &[Vec<f64>]) -> Vec<f64> {
    let n = d.len();
    d.iter()
        .map(|row| {
            if n == 1 {
                0.0
            } else {
                row.iter().sum::<f64>() / (n - 1) as f64
            }
        })
        .collect()
}

/// Distance from each free cell centre to the nearest blocked centre,
/// counting a one-cell blocked ring around the mask. Blocked cells get 0.
pub fn brute_sdf(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut blocked = Vec::new();
    for y in -1..=h {
        for x in -1..=w {
            if !mask.free_at(x, y) {
                blocked.push((x, y));
            }
        }
    }
    (0..mask.free.len())
        .map(|i| {
            if !mask.free[i] {
                return 0.0;
            }
            let (x, y) = mask.xy(i);
            blocked
                .iter()
                .map(|&(bx, by)| (((bx - x).pow(2) + (by - y).pow(2)) as f64).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Open interval `(lo, hi)` of the segment parameter expressed as fractions
/// `num / den` with positive denominators.
fn clip(
    p: i64,
    d: i64,
    lo_edge: i64,
    hi_edge: i64,
    lo: &mut (i64, i64),
    hi: &mut (i64, i64),
) -> bool {
    if d == 0 {
        return lo_edge < p && p < hi_edge;
    }
    let (mut a, mut b) = ((lo_edge - p, d), (hi_edge - p, d));
    if d < 0 {
        a = (-a.0, -a.1);
        b = (-b.0, -b.1);
        std::mem::swap(&mut a, &mut b);
    }
    // a/d..b/d with positive denominators now.
    if a.0 * lo.1 > lo.0 * a.1 {
        *lo = a;
    }
    if b.0 * hi.1 < hi.0 * b.1 {
        *hi = b;
    }
    true
}

/// Does the open segment between cell centres `a` and `b` meet the open
/// interior of cell `c`?
pub fn segment_hits_cell(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> bool {
    // Doubled coordinates: centres at odd integers, cell edges at even ones.
    let (px, py) = (2 * a.0 + 1, 2 * a.1 + 1);
    let (dx, dy) = (2 * (b.0 - a.0), 2 * (b.1 - a.1));
    let mut lo = (0i64, 1i64);
    let mut hi = (1i64, 1i64);
    if !clip(px, dx, 2 * c.0, 2 * c.0 + 2, &mut lo, &mut hi) {
        return false;
    }
    if !clip(py, dy, 2 * c.1, 2 * c.1 + 2, &mut lo, &mut hi) {
        return false;
    }
    lo.0 * hi.1 < hi.0 * lo.1
}

/// Mutual visibility by clipping the segment against every blocked cell.
pub fn brute_visible(mask: &Mask, a: usize, b: usize) -> bool {
    let (pa, pb) = (mask.xy(a), mask.xy(b));
    (0..mask.free.len())
        .filter(|&c| !mask.free[c])
        .all(|c| !segment_hits_cell(pa, pb, mask.xy(c)))
}

/// Visible free-cell count per cell (0 for blocked cells).
pub fn brute_visibility_counts(mask: &Mask) -> Vec<usize> {
    let cells = mask.free_cells();
    let mut counts = vec![0; mask.free.len()];
    for &a in &cells {
        counts[a] = cells
            .iter()
            .filter(|&&b| b != a && brute_visible(mask, a, b))
            .count();
    }
    counts
}

/// Mean BFS depth in the explicit visibility graph, per cell; `None` if
/// the graph is disconnected.
pub fn brute_mean_depth(mask: &Mask) -> Option<Vec<f64>> {
    let cells = mask.free_cells();
    let n = cells.len();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && brute_visible(mask, cells[i], cells[j]))
                .collect()
        })
        .collect();
    let mut out = vec![0.0; mask.free.len()];
    for s in 0..n {
        let mut depth = vec![usize::MAX; n];
        depth[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if depth[u] == usize::MAX {
                    depth[u] = depth[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        if depth.contains(&usize::MAX) {
            return None;
        }
        out[cells[s]] = if n == 1 {
            0.0
        } else {
            depth.iter().sum::<usize>() as f64 / (n - 1) as f64
        };
    }
    Some(out)
}

/// Component sizes by flood fill over orthogonal moves (diagonal moves
/// that need both side cells free add no connectivity).
pub fn flood_components(mask: &Mask) -> Vec<usize> {
    let mut seen = vec![false; mask.free.len()];
    let mut sizes = Vec::new();
    for s in 0..mask.free.len() {
        if !mask.free[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(c) = stack.pop() {
            size += 1;
            let (x, y) = mask.xy(c);
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if mask.free_at(x + dx, y + dy) {
                    let n = ((y + dy) * mask.width as i64 + x + dx) as usize;
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        sizes.push(size);
    }
    sizes
}
