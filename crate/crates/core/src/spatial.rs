//! Spatial connectivity: mean walking distance over the 8-connected grid graph.
//!
//! Free cells are nodes. Orthogonal neighbours are joined by an edge of
//! length `cell_size`; diagonal neighbours by an edge of length
//! `cell_size * sqrt(2)`, but only when both cells sharing the corner are
//! free, so paths never slip through the corner where two walls meet.
//!
//! Path lengths are tracked exactly as (orthogonal, diagonal) step counts
//! and per-source sums are accumulated as integers, so the serial and
//! parallel fields are bit-identical.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{AnalysisField, FieldKind};
use crate::grid::OccupancyGrid;

/// Whether a step moves across an edge or across a corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Orthogonal,
    Diagonal,
}

impl Step {
    /// Step length in cell units.
    pub fn length(self) -> f64 {
        match self {
            Step::Orthogonal => 1.0,
            Step::Diagonal => SQRT_2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridEdge {
    pub from: usize,
    pub to: usize,
    /// Metres.
    pub weight: f64,
}

const ORTHOGONAL: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const DIAGONAL: [(isize, isize); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Calls `visit` for every neighbour of free cell `index` under the
/// no-corner-cutting 8-adjacency. This is the single adjacency rule shared
/// by distance fields and component pruning.
#[inline]
pub fn for_each_neighbor(grid: &OccupancyGrid, index: usize, mut visit: impl FnMut(usize, Step)) {
    let (x, y) = grid.coords(index);
    let (x, y) = (x as isize, y as isize);
    let w = grid.width() as isize;
    for (dx, dy) in ORTHOGONAL {
        if grid.is_free_at(x + dx, y + dy) {
            visit(((y + dy) * w + x + dx) as usize, Step::Orthogonal);
        }
    }
    for (dx, dy) in DIAGONAL {
        if grid.is_free_at(x + dx, y + dy)
            && grid.is_free_at(x + dx, y)
            && grid.is_free_at(x, y + dy)
        {
            visit(((y + dy) * w + x + dx) as usize, Step::Diagonal);
        }
    }
}

pub fn grid_neighbors(grid: &OccupancyGrid, cell: usize) -> Result<Vec<GridEdge>> {
    grid.require_free(cell)?;
    let mut edges = Vec::with_capacity(8);
    for_each_neighbor(grid, cell, |to, step| {
        edges.push(GridEdge {
            from: cell,
            to,
            weight: grid.cell_size() * step.length(),
        })
    });
    Ok(edges)
}

/// The grid padded with a blocked ring, so every free cell has all eight
/// neighbour slots in bounds. Each cell carries a bit mask of the moves
/// allowed from it.
struct Lattice {
    padded_width: usize,
    /// Padded index of each free cell, in row-major order.
    nodes: Vec<u32>,
    /// Bits 0..4: orthogonal moves, bits 4..8: diagonal moves.
    moves: Vec<u8>,
    offsets: [isize; 8],
}

impl Lattice {
    fn new(grid: &OccupancyGrid) -> Self {
        let pw = grid.width() + 2;
        let ph = grid.height() + 2;
        let mut moves = vec![0u8; pw * ph];
        let mut nodes = Vec::with_capacity(grid.free_count());
        let step_offset = |(dx, dy): (isize, isize)| dy * pw as isize + dx;
        let mut offsets = [0isize; 8];
        for (k, d) in ORTHOGONAL.iter().chain(&DIAGONAL).enumerate() {
            offsets[k] = step_offset(*d);
        }
        for c in grid.free_indices() {
            let (x, y) = grid.coords(c);
            let p = (y + 1) * pw + x + 1;
            nodes.push(p as u32);
            let mut mask = 0u8;
            for_each_neighbor(grid, c, |to, _| {
                let (tx, ty) = grid.coords(to);
                let d = (tx as isize - x as isize, ty as isize - y as isize);
                let k = offsets.iter().position(|&o| o == step_offset(d)).unwrap();
                mask |= 1 << k;
            });
            moves[p] = mask;
        }
        Lattice {
            padded_width: pw,
            nodes,
            moves,
            offsets,
        }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn grid_index(&self, padded: usize) -> usize {
        let (x, y) = (padded % self.padded_width, padded / self.padded_width);
        (y - 1) * (self.padded_width - 2) + x - 1
    }
}

/// Path lengths are encoded exactly as `orthogonal * 2^32 + diagonal * D`
/// where `D` is the odd integer nearest `sqrt(2) * 2^32`. Sums of edge
/// lengths are then exact integer additions, keys order paths by true length
/// while paths have fewer than about 30,000 diagonal steps, and the step
/// counts come back out through the inverse of `D` modulo `2^32`.
const ORTHOGONAL_KEY: i64 = 1 << 32;
const DIAGONAL_KEY: i64 = 6_074_001_001;
const DIAGONAL_KEY_INVERSE: u32 = 607_259_097;

/// Splits a key, or a sum of keys whose diagonal total is below `2^32`,
/// into (orthogonal, diagonal) step counts.
#[inline]
fn decode(key: i128) -> (u64, u64) {
    let diagonal = (key as u32).wrapping_mul(DIAGONAL_KEY_INVERSE) as i128;
    let orthogonal = (key - diagonal * i128::from(DIAGONAL_KEY)) >> 32;
    (orthogonal as u64, diagonal as u64)
}

#[inline]
fn units((orthogonal, diagonal): (u64, u64)) -> f64 {
    orthogonal as f64 + diagonal as f64 * SQRT_2
}

/// Key of cells outside the free graph. Negative keys are never improved;
/// a settled node stores the complement of its key.
const WALL: i64 = i64::MIN;
const UNREACHED: i64 = i64::MAX;

/// Reusable single-source search state.
///
/// Every edge is at least one unit long, so nodes are kept in a ring of
/// three unit-width buckets by the integer part of their length: a node in
/// bucket `L` can only push into `L + 1` (orthogonal) or `L + 1`/`L + 2`
/// (diagonal), and nodes sharing a bucket cannot improve one another.
/// Stale entries are recognised by the complemented key of a node that was
/// already settled.
struct Search {
    blank: Vec<i64>,
    key: Vec<i64>,
    /// Three buckets of `capacity` slots each.
    ring: Vec<u32>,
    capacity: usize,
    settled: usize,
    /// Sum of settled keys.
    key_sum: i128,
}

impl Search {
    fn new(lattice: &Lattice) -> Self {
        let mut blank = vec![WALL; lattice.moves.len()];
        for &p in &lattice.nodes {
            blank[p as usize] = UNREACHED;
        }
        // Pushes only happen on strict improvement, at most eight per
        // settled node in total.
        let capacity = 8 * lattice.len() + 1;
        Search {
            key: blank.clone(),
            blank,
            ring: vec![0; 3 * capacity],
            capacity,
            settled: 0,
            key_sum: 0,
        }
    }

    fn run(&mut self, lattice: &Lattice, source: usize) {
        assert_eq!(self.blank[source], UNREACHED, "source must be a free cell");
        self.key.copy_from_slice(&self.blank);
        self.key[source] = 0;
        self.ring[0] = source as u32;
        let (mut settled, mut key_sum) = (0usize, 0i128);
        let mut len = [1usize, 0, 0];
        let cap = self.capacity;
        let offs = lattice.offsets;
        let moves = &lattice.moves[..];
        let key = self.key.as_mut_ptr();
        let ring = self.ring.as_mut_ptr();
        let mut level = 0usize;
        let mut idle = 0;
        // SAFETY: every node index read from the ring is a free cell of the
        // padded lattice, which is never on the padding ring, so all eight
        // neighbour offsets stay inside `key` (length = padded area). Ring
        // writes stay below `cap` per bucket because the total number of
        // pushes in one run is at most eight per settled node. Counters and
        // keys are far from overflow; the wrapping forms keep overflow checks
        // out of this loop in checked builds.
        unsafe {
            while idle < 3 {
                let slot = level % 3;
                let here_len = len[slot];
                if here_len == 0 {
                    idle += 1;
                    level += 1;
                    continue;
                }
                idle = 0;
                let bucket = ring.add(slot * cap);
                let next = (slot + 1) % 3;
                let next_ptr = ring.add(next * cap);
                let mut next_len = len[next];
                let mut i = 0;
                while i < here_len {
                    let v = *bucket.add(i) as usize;
                    i = i.wrapping_add(1);
                    let here = *key.add(v);
                    if here < 0 {
                        continue;
                    }
                    *key.add(v) = !here;
                    settled = settled.wrapping_add(1);
                    key_sum = key_sum.wrapping_add(i128::from(here));

                    let ok = here.wrapping_add(ORTHOGONAL_KEY);
                    for &off in &offs[..4] {
                        let u = v.wrapping_add_signed(off);
                        if ok < *key.add(u) {
                            *key.add(u) = ok;
                            *next_ptr.add(next_len) = u as u32;
                            next_len = next_len.wrapping_add(1);
                        }
                    }

                    let mask = *moves.get_unchecked(v);
                    if mask & 0xf0 == 0 {
                        continue;
                    }
                    let dk = here.wrapping_add(DIAGONAL_KEY);
                    let dslot = ((dk >> 32) as usize) % 3;
                    let (dptr, mut dlen) = if dslot == next {
                        (next_ptr, next_len)
                    } else {
                        (ring.add(dslot * cap), len[dslot])
                    };
                    for (bit, &off) in offs.iter().enumerate().skip(4) {
                        let u = v.wrapping_add_signed(off);
                        if mask >> bit & 1 == 1 && dk < *key.add(u) {
                            *key.add(u) = dk;
                            *dptr.add(dlen) = u as u32;
                            dlen = dlen.wrapping_add(1);
                        }
                    }
                    if dslot == next {
                        next_len = dlen;
                    } else {
                        len[dslot] = dlen;
                    }
                }
                len[next] = next_len;
                len[slot] = 0;
                level += 1;
            }
        }
        self.settled = settled;
        self.key_sum = key_sum;
    }

    /// Settled distance of padded cell `p` in cell units.
    fn units(&self, p: usize) -> f64 {
        let k = self.key[p];
        if k < 0 && k != WALL {
            units(decode(i128::from(!k)))
        } else {
            f64::INFINITY
        }
    }

    /// Mean distance in cell units to every other node, or the grid
    /// indices of an unreachable pair.
    fn mean_units(&self, lattice: &Lattice, source: usize) -> Result<f64, (usize, usize)> {
        let n = lattice.len();
        if self.settled < n {
            let missing = lattice
                .nodes
                .iter()
                .find(|&&p| self.units(p as usize).is_infinite())
                .expect("an unsettled node exists");
            return Err((
                lattice.grid_index(source),
                lattice.grid_index(*missing as usize),
            ));
        }
        if n == 1 {
            return Ok(0.0);
        }
        Ok(units(decode(self.key_sum)) / (n - 1) as f64)
    }
}

/// Shortest walking distance in metres from `source` to every cell.
/// Blocked and unreachable cells are `f64::INFINITY`.
pub fn geodesic_distances(grid: &OccupancyGrid, source: usize) -> Result<Vec<f64>> {
    let (x, y) = grid.require_free(source)?;
    let lattice = Lattice::new(grid);
    let mut search = Search::new(&lattice);
    search.run(&lattice, (y + 1) * lattice.padded_width + x + 1);
    let mut out = vec![f64::INFINITY; grid.len()];
    for &p in &lattice.nodes {
        let p = p as usize;
        out[lattice.grid_index(p)] = search.units(p) * grid.cell_size();
    }
    Ok(out)
}

fn field_from_means(grid: &OccupancyGrid, lattice: &Lattice, means: Vec<f64>) -> AnalysisField {
    let mut values = vec![0.0; grid.len()];
    for (&p, m) in lattice.nodes.iter().zip(means) {
        values[lattice.grid_index(p as usize)] = m * grid.cell_size();
    }
    AnalysisField::from_grid_values(grid, FieldKind::Spatial, values)
}

/// Mean geodesic distance from each free cell to every other free cell, in
/// metres. The grid must be a single connected component.
pub fn spatial_connectivity_field(grid: &OccupancyGrid) -> Result<AnalysisField> {
    let lattice = Lattice::new(grid);
    if lattice.len() == 0 {
        return Err(Error::NoFreeCells);
    }
    let mut search = Search::new(&lattice);
    let means = lattice
        .nodes
        .iter()
        .map(|&p| {
            search.run(&lattice, p as usize);
            search.mean_units(&lattice, p as usize)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|pair| unreachable(grid, pair))?;
    Ok(field_from_means(grid, &lattice, means))
}

/// Same result as [`spatial_connectivity_field`], with sources spread over
/// the rayon pool. Output is bit-identical to the serial version.
pub fn spatial_connectivity_field_par(grid: &OccupancyGrid) -> Result<AnalysisField> {
    let lattice = Lattice::new(grid);
    if lattice.len() == 0 {
        return Err(Error::NoFreeCells);
    }
    let means = lattice
        .nodes
        .par_iter()
        .map_init(
            || Search::new(&lattice),
            |search, &p| {
                search.run(&lattice, p as usize);
                search.mean_units(&lattice, p as usize)
            },
        )
        .collect::<Result<Vec<_>, _>>()
        .map_err(|pair| unreachable(grid, pair))?;
    Ok(field_from_means(grid, &lattice, means))
}

fn unreachable(grid: &OccupancyGrid, (from, to): (usize, usize)) -> Error {
    let (x, y) = grid.coords(from);
    let (to_x, to_y) = grid.coords(to);
    Error::Unreachable { x, y, to_x, to_y }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn centre_of_open_square_has_eight_edges() {
        let g = OccupancyGrid::filled(3, 3, 1.0, Cell::Free).unwrap();
        let edges = grid_neighbors(&g, 4).unwrap();
        assert_eq!(edges.len(), 8);
        assert_eq!(edges.iter().filter(|e| e.weight == 1.0).count(), 4);
        assert_eq!(edges.iter().filter(|e| approx(e.weight, SQRT_2)).count(), 4);
    }

    #[test]
    fn corner_has_three_edges() {
        let g = OccupancyGrid::filled(3, 3, 1.0, Cell::Free).unwrap();
        let mut w: Vec<f64> = grid_neighbors(&g, 0)
            .unwrap()
            .iter()
            .map(|e| e.weight)
            .collect();
        w.sort_by(f64::total_cmp);
        assert_eq!(w.len(), 3);
        assert!(approx(w[0], 1.0) && approx(w[1], 1.0) && approx(w[2], SQRT_2));
    }

    #[test]
    fn no_corner_cutting_past_blocked_centre() {
        // (x=0, y=1) is index 3.
        let g = OccupancyGrid::from_ascii("...\n.#.\n...", 1.0).unwrap();
        let mut to: Vec<usize> = grid_neighbors(&g, 3)
            .unwrap()
            .iter()
            .map(|e| e.to)
            .collect();
        to.sort();
        assert_eq!(to, vec![0, 6]);
    }

    #[test]
    fn neighbor_errors() {
        let g = OccupancyGrid::from_ascii(".#", 1.0).unwrap();
        assert!(matches!(
            grid_neighbors(&g, 1),
            Err(Error::BlockedCell { .. })
        ));
        assert!(matches!(
            grid_neighbors(&g, 7),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn row_distances() {
        let g = OccupancyGrid::filled(3, 1, 1.0, Cell::Free).unwrap();
        assert_eq!(geodesic_distances(&g, 0).unwrap(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn diagonal_and_detour_distances() {
        let open = OccupancyGrid::filled(3, 3, 1.0, Cell::Free).unwrap();
        assert!(approx(
            geodesic_distances(&open, 0).unwrap()[8],
            2.0 * SQRT_2
        ));
        let ring = OccupancyGrid::from_ascii("...\n.#.\n...", 1.0).unwrap();
        let d = geodesic_distances(&ring, 0).unwrap();
        assert!(approx(d[8], 4.0));
        assert_eq!(d[4], f64::INFINITY);
    }

    #[test]
    fn single_cell_field_is_zero() {
        let g = OccupancyGrid::filled(1, 1, 1.0, Cell::Free).unwrap();
        let f = spatial_connectivity_field(&g).unwrap();
        assert_eq!(f.get(0, 0), Some(0.0));
    }

    #[test]
    fn row_field() {
        let g = OccupancyGrid::filled(3, 1, 1.0, Cell::Free).unwrap();
        let f = spatial_connectivity_field(&g).unwrap();
        assert_eq!(f.values(), &[1.5, 1.0, 1.5]);
    }

    #[test]
    fn empty_and_disconnected_grids_fail() {
        let none = OccupancyGrid::filled(2, 2, 1.0, Cell::Blocked).unwrap();
        assert!(matches!(
            spatial_connectivity_field(&none),
            Err(Error::NoFreeCells)
        ));
        let split = OccupancyGrid::from_ascii(".#.", 1.0).unwrap();
        match spatial_connectivity_field(&split) {
            Err(Error::Unreachable {
                x: 0,
                y: 0,
                to_x: 2,
                to_y: 0,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
