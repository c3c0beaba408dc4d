//! Oracle parity and invariant checks for the analysis fields.

use proptest::prelude::*;
use spaceconn::component::{component_count, largest_component};
use spaceconn::sdf::signed_distance_field;
use spaceconn::spatial::{
    geodesic_distances, spatial_connectivity_field, spatial_connectivity_field_par,
};
use spaceconn::visual::{
    visible_set_exact, visible_set_shadowcast, visual_connectivity_field, visual_mean_depth_field,
    VisibilityBackend,
};
use spaceconn::{Cell, OccupancyGrid};
use spaceconn_testkit as oracle;

fn to_grid(mask: &oracle::Mask, cell_size: f64) -> OccupancyGrid {
    let cells = mask
        .free
        .iter()
        .map(|&f| if f { Cell::Free } else { Cell::Blocked })
        .collect();
    OccupancyGrid::from_cells(mask.width, mask.height, cell_size, cells).unwrap()
}

fn to_mask(grid: &OccupancyGrid) -> oracle::Mask {
    oracle::Mask {
        width: grid.width(),
        height: grid.height(),
        free: grid.cells().iter().map(|c| c.is_free()).collect(),
    }
}

fn mask_strategy(max_side: usize, max_density: f64) -> impl Strategy<Value = oracle::Mask> {
    (1..=max_side, 1..=max_side, 0.0..=max_density).prop_flat_map(|(w, h, d)| {
        prop::collection::vec(prop::bool::weighted(1.0 - d), w * h).prop_map(move |free| {
            oracle::Mask {
                width: w,
                height: h,
                free,
            }
        })
    })
}

/// Pruned grid with at least one free cell.
fn pruned_strategy(max_side: usize, max_density: f64) -> impl Strategy<Value = OccupancyGrid> {
    mask_strategy(max_side, max_density)
        .prop_filter("needs a free cell", |m| m.free.iter().any(|&f| f))
        .prop_map(|m| largest_component(&to_grid(&m, 1.0)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn spatial_field_matches_floyd_warshall(grid in pruned_strategy(8, 0.5)) {
        let field = spatial_connectivity_field(&grid).unwrap();
        let mask = to_mask(&grid);
        let means = oracle::row_means(&oracle::floyd_warshall(&mask));
        for (k, &cell) in mask.free_cells().iter().enumerate() {
            prop_assert!((field.values()[cell] - means[k]).abs() <= 1e-9);
        }
        prop_assert_eq!(&field, &spatial_connectivity_field_par(&grid).unwrap());
    }

    #[test]
    fn geodesic_symmetry_and_triangle(grid in pruned_strategy(10, 0.4)) {
        let free = grid.free_indices();
        let rows: Vec<Vec<f64>> = free.iter().map(|&s| geodesic_distances(&grid, s).unwrap()).collect();
        for (i, &a) in free.iter().enumerate() {
            prop_assert_eq!(rows[i][a], 0.0);
            for (j, &b) in free.iter().enumerate() {
                prop_assert!((rows[i][b] - rows[j][a]).abs() <= 1e-9);
                for &c in free.iter().take(12) {
                    prop_assert!(rows[i][c] <= rows[i][b] + rows[j][c] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn spatial_scales_with_cell_size(grid in pruned_strategy(8, 0.3), k in prop::sample::select(vec![0.25, 0.5, 2.0, 4.0])) {
        let base = spatial_connectivity_field(&grid).unwrap();
        let scaled = spatial_connectivity_field(&grid.clone().with_cell_size(k).unwrap()).unwrap();
        for (a, b) in base.values().iter().zip(scaled.values()) {
            prop_assert_eq!(a * k, *b);
        }
    }

    #[test]
    fn spatial_scales_with_arbitrary_factor(grid in pruned_strategy(8, 0.3), k in 0.1f64..10.0) {
        let base = spatial_connectivity_field(&grid).unwrap();
        let scaled = spatial_connectivity_field(&grid.clone().with_cell_size(k).unwrap()).unwrap();
        for (a, b) in base.values().iter().zip(scaled.values()) {
            prop_assert!((a * k - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    /// Blocking a cell that keeps the rest connected never shortens a walk
    /// between the remaining cells.
    #[test]
    fn obstacle_never_shortens_walks(grid in pruned_strategy(8, 0.3), pick in any::<prop::sample::Index>()) {
        let free = grid.free_indices();
        prop_assume!(free.len() >= 3);
        let victim = free[pick.index(free.len())];
        let mut blocked = grid.clone();
        blocked.set_index(victim, Cell::Blocked);
        prop_assume!(component_count(&blocked) == 1);
        for &s in free.iter().filter(|&&c| c != victim) {
            let before = geodesic_distances(&grid, s).unwrap();
            let after = geodesic_distances(&blocked, s).unwrap();
            for &t in free.iter().filter(|&&c| c != victim) {
                prop_assert!(after[t] >= before[t] - 1e-12);
            }
        }
    }

    #[test]
    fn largest_component_properties(mask in mask_strategy(12, 0.6)) {
        prop_assume!(mask.free.iter().any(|&f| f));
        let grid = to_grid(&mask, 1.0);
        let once = largest_component(&grid).unwrap();
        prop_assert_eq!(&largest_component(&once).unwrap(), &once);
        for (before, after) in grid.cells().iter().zip(once.cells()) {
            prop_assert!(before.is_free() || !after.is_free());
        }
        prop_assert_eq!(component_count(&once), 1);
        let sizes = oracle::flood_components(&mask);
        prop_assert_eq!(once.free_count(), *sizes.iter().max().unwrap());
    }

    #[test]
    fn sdf_matches_brute_force(mask in mask_strategy(12, 0.5), cell_size in prop::sample::select(vec![1.0, 0.3, 2.5])) {
        let grid = to_grid(&mask, cell_size);
        let field = signed_distance_field(&grid);
        let expected = oracle::brute_sdf(&mask);
        for (i, want) in expected.iter().enumerate() {
            prop_assert!((field.values()[i] - want * cell_size).abs() <= 1e-9);
            prop_assert_eq!(field.defined()[i], mask.free[i]);
        }
    }

    #[test]
    fn sdf_monotone_under_obstacles(mask in mask_strategy(12, 0.4), pick in any::<prop::sample::Index>()) {
        let grid = to_grid(&mask, 1.0);
        let free = grid.free_indices();
        prop_assume!(!free.is_empty());
        let mut more = grid.clone();
        more.set_index(free[pick.index(free.len())], Cell::Blocked);
        let (a, b) = (signed_distance_field(&grid), signed_distance_field(&more));
        for i in 0..grid.len() {
            prop_assert!(b.values()[i] <= a.values()[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_visibility_matches_segment_clipping(mask in mask_strategy(10, 0.4)) {
        let grid = to_grid(&mask, 1.0);
        prop_assume!(grid.free_count() > 0);
        let field = visual_connectivity_field(&grid, VisibilityBackend::Exact).unwrap();
        let counts = oracle::brute_visibility_counts(&mask);
        for i in grid.free_indices() {
            prop_assert_eq!(field.values()[i], counts[i] as f64);
        }
    }

    #[test]
    fn visibility_is_symmetric(mask in mask_strategy(15, 0.35)) {
        let grid = to_grid(&mask, 1.0);
        let free = grid.free_indices();
        let exact: Vec<_> = free.iter().map(|&o| visible_set_exact(&grid, o).unwrap()).collect();
        let cast: Vec<_> = free.iter().map(|&o| visible_set_shadowcast(&grid, o).unwrap()).collect();
        for (i, &a) in free.iter().enumerate() {
            for (j, &b) in free.iter().enumerate() {
                prop_assert_eq!(exact[i].contains(b), exact[j].contains(a));
                prop_assert_eq!(cast[i].contains(b), cast[j].contains(a), "shadowcast {} {}", a, b);
            }
            prop_assert!(!exact[i].contains(a) && !cast[i].contains(a));
            prop_assert!(cast[i].visible.iter().all(|&c| grid.is_free(c)));
        }
    }

    /// Full-square shadows with centre-point lighting shade exactly the
    /// rays that cross a wall interior.
    #[test]
    fn shadowcast_matches_segment_clipping(mask in mask_strategy(16, 0.4)) {
        let grid = to_grid(&mask, 1.0);
        for a in grid.free_indices() {
            let cast = visible_set_shadowcast(&grid, a).unwrap();
            for b in grid.free_indices().into_iter().filter(|&b| b != a) {
                prop_assert_eq!(cast.contains(b), oracle::brute_visible(&mask, a, b), "{} -> {}", a, b);
            }
        }
    }

    #[test]
    fn exact_visibility_monotone(mask in mask_strategy(10, 0.3), pick in any::<prop::sample::Index>()) {
        let grid = to_grid(&mask, 1.0);
        let free = grid.free_indices();
        prop_assume!(free.len() >= 2);
        let victim = free[pick.index(free.len())];
        let mut more = grid.clone();
        more.set_index(victim, Cell::Blocked);
        for &o in free.iter().filter(|&&c| c != victim) {
            let before = visible_set_exact(&grid, o).unwrap();
            let after = visible_set_exact(&more, o).unwrap();
            prop_assert!(after.visible.iter().all(|c| before.contains(*c)));
        }
    }

    #[test]
    fn open_grids_are_fully_visible(w in 1usize..=14, h in 1usize..=14) {
        let grid = OccupancyGrid::filled(w, h, 1.0, Cell::Free).unwrap();
        for backend in [VisibilityBackend::Exact, VisibilityBackend::Shadowcast] {
            let f = visual_connectivity_field(&grid, backend).unwrap();
            prop_assert!(f.values().iter().all(|&v| v == (w * h - 1) as f64));
        }
    }

    #[test]
    fn mean_depth_matches_bfs(grid in pruned_strategy(8, 0.4)) {
        let field = visual_mean_depth_field(&grid, VisibilityBackend::Exact).unwrap();
        let expected = oracle::brute_mean_depth(&to_mask(&grid)).unwrap();
        for i in grid.free_indices() {
            prop_assert!((field.values()[i] - expected[i]).abs() <= 1e-9);
        }
    }
}
