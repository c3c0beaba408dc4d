//! One entry point for every per-plan analysis.

use crate::component::largest_component;
use crate::error::Result;
use crate::field::{AnalysisField, FieldKind};
use crate::grid::OccupancyGrid;
use crate::sdf::signed_distance_field;
use crate::spatial::{spatial_connectivity_field, spatial_connectivity_field_par};
use crate::visual::{
    visual_connectivity_field, visual_connectivity_field_par, visual_mean_depth_field,
    visual_mean_depth_field_par, VisibilityBackend,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AnalysisOptions {
    pub visibility: VisibilityBackend,
    /// Spread per-cell work over the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

/// Computes `kind` on `grid` as given, without pruning.
pub fn compute_field(
    grid: &OccupancyGrid,
    kind: FieldKind,
    options: AnalysisOptions,
) -> Result<AnalysisField> {
    let AnalysisOptions {
        visibility,
        parallel,
    } = options;
    match (kind, parallel) {
        (FieldKind::Spatial, false) => spatial_connectivity_field(grid),
        (FieldKind::Spatial, true) => spatial_connectivity_field_par(grid),
        (FieldKind::Visual, false) => visual_connectivity_field(grid, visibility),
        (FieldKind::Visual, true) => visual_connectivity_field_par(grid, visibility),
        (FieldKind::VisualDepth, false) => visual_mean_depth_field(grid, visibility),
        (FieldKind::VisualDepth, true) => visual_mean_depth_field_par(grid, visibility),
        (FieldKind::Sdf, _) => Ok(signed_distance_field(grid)),
    }
}

/// Prunes `grid` to its largest component, then computes `kind` on it.
/// Returns the pruned grid alongside the field.
pub fn analyze_plan(
    grid: &OccupancyGrid,
    kind: FieldKind,
    options: AnalysisOptions,
) -> Result<(OccupancyGrid, AnalysisField)> {
    let pruned = largest_component(grid)?;
    let field = compute_field(&pruned, kind, options)?;
    Ok((pruned, field))
}
