//! Connected-component pruning under the walking adjacency.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::{Cell, OccupancyGrid};
use crate::spatial::for_each_neighbor;

/// Labels free cells by component; blocked cells get `None`. Labels are
/// numbered in order of each component's smallest row-major index.
pub fn label_components(grid: &OccupancyGrid) -> (Vec<Option<u32>>, Vec<usize>) {
    let mut labels = vec![None; grid.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..grid.len() {
        if !grid.is_free(start) || labels[start].is_some() {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0;
        labels[start] = Some(label);
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            size += 1;
            for_each_neighbor(grid, c, |n, _| {
                if labels[n].is_none() {
                    labels[n] = Some(label);
                    queue.push_back(n);
                }
            });
        }
        sizes.push(size);
    }
    (labels, sizes)
}

pub fn component_count(grid: &OccupancyGrid) -> usize {
    label_components(grid).1.len()
}

/// Keeps only the largest connected set of free cells; every other free
/// cell becomes blocked. Ties go to the component holding the smallest
/// row-major index.
pub fn largest_component(grid: &OccupancyGrid) -> Result<OccupancyGrid> {
    let (labels, sizes) = label_components(grid);
    let mut keep = None;
    let mut best = 0;
    for (label, &size) in sizes.iter().enumerate() {
        if size > best {
            best = size;
            keep = Some(label as u32);
        }
    }
    let keep = keep.ok_or(Error::NoFreeCells)?;
    let mut out = grid.clone();
    for (i, l) in labels.iter().enumerate() {
        if matches!(l, Some(l) if *l != keep) {
            out.set_index(i, Cell::Blocked);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(art: &str) -> OccupancyGrid {
        OccupancyGrid::from_ascii(art, 1.0).unwrap()
    }

    #[test]
    fn single_component_unchanged() {
        let g = OccupancyGrid::filled(3, 3, 1.0, Cell::Free).unwrap();
        assert_eq!(largest_component(&g).unwrap(), g);
    }

    #[test]
    fn tie_keeps_first_component() {
        let g = grid("..#..");
        assert_eq!(largest_component(&g).unwrap(), grid("..###"));
    }

    #[test]
    fn smaller_region_is_blocked() {
        let g = grid(
            "...#..
             ..##..
             ######",
        );
        // Left region: 5 cells, right region: 4 cells.
        let pruned = largest_component(&g).unwrap();
        assert_eq!(pruned.to_string(), "...###\n..####\n######\n");
    }

    #[test]
    fn diagonal_touch_does_not_connect() {
        let g = grid(
            ".#
             #.",
        );
        assert_eq!(component_count(&g), 2);
    }

    #[test]
    fn no_free_cells() {
        let g = grid("##");
        assert!(matches!(largest_component(&g), Err(Error::NoFreeCells)));
    }
}
