use std::collections::HashSet;
use std::fs;

use proptest::prelude::*;
use spaceconn::dataset::{
    build_dataset, field_path, flip_pair, remap_to_gray, split_dataset, DatasetOptions,
    DatasetRecord, RemapDirection, Split, SplitSpec,
};
use spaceconn::pgm::read_pgm;
use spaceconn::synth::{generate_batch, PlanSynthParams};
use spaceconn::{AnalysisField, Error, FieldKind, GrayImage, OccupancyGrid};

fn strip(values: &[f64]) -> (AnalysisField, OccupancyGrid) {
    let grid = OccupancyGrid::from_ascii(&".".repeat(values.len()), 1.0).unwrap();
    (
        AnalysisField::from_grid_values(&grid, FieldKind::Spatial, values.to_vec()),
        grid,
    )
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("plan_{i:05}")).collect()
}

fn image() -> impl Strategy<Value = GrayImage> {
    (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h)
            .prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

proptest! {
    #[test]
    fn remap_is_monotone(values in prop::collection::vec(-1e3f64..1e3, 2..40)) {
        let (f, g) = strip(&values);
        let direct = remap_to_gray(&f, &g, RemapDirection::Direct).unwrap();
        let inverted = remap_to_gray(&f, &g, RemapDirection::Inverted).unwrap();
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] <= values[j] {
                    prop_assert!(direct.pixels()[i] <= direct.pixels()[j]);
                    prop_assert!(inverted.pixels()[i] >= inverted.pixels()[j]);
                }
            }
        }
    }

    /// Scaling by a power of two and shifting by a small integer are exact
    /// in floating point, so the images must match bit for bit.
    #[test]
    fn remap_ignores_affine_rescaling(
        values in prop::collection::vec(0u32..1000, 1..40),
        k in -4i32..5,
        b in -50i32..50,
    ) {
        let base: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        let moved: Vec<f64> = base.iter().map(|v| v * 2f64.powi(k) + f64::from(b)).collect();
        let (f1, g) = strip(&base);
        let (f2, _) = strip(&moved);
        for dir in [RemapDirection::Direct, RemapDirection::Inverted] {
            prop_assert_eq!(remap_to_gray(&f1, &g, dir).unwrap(), remap_to_gray(&f2, &g, dir).unwrap());
        }
    }

    #[test]
    fn split_sizes_follow_floor_rule(n in 1usize..500, seed in any::<u64>()) {
        let spec = SplitSpec { seed, ..Default::default() };
        let splits = split_dataset(&ids(n), &spec).unwrap();
        let count = |s| splits.iter().filter(|&&x| x == s).count();
        let train = (0.7 * n as f64 + 1e-9).floor() as usize;
        let val = (0.2 * n as f64 + 1e-9).floor() as usize;
        prop_assert_eq!(count(Split::Train), train);
        prop_assert_eq!(count(Split::Val), val);
        prop_assert_eq!(count(Split::Test), n - train - val);
    }

    #[test]
    fn flips_preserve_pixels_and_commute(a in image(), h in any::<bool>(), v in any::<bool>()) {
        let r = DatasetRecord {
            id: "p".into(),
            input_image: a.clone(),
            target_image: a.flipped(true, false),
            analysis: FieldKind::Visual,
            split: Split::Val,
        };
        let f = flip_pair(&r, h, v);
        let mut before = r.input_image.pixels().to_vec();
        let mut after = f.input_image.pixels().to_vec();
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
        prop_assert_eq!(&flip_pair(&f, h, v), &r);
        prop_assert_eq!(
            flip_pair(&flip_pair(&r, true, false), false, true),
            flip_pair(&flip_pair(&r, false, true), true, false)
        );
    }
}

#[test]
fn split_3002() {
    let splits = split_dataset(&ids(3002), &SplitSpec::default()).unwrap();
    let count = |s| splits.iter().filter(|&&x| x == s).count();
    assert_eq!(
        (count(Split::Train), count(Split::Val), count(Split::Test)),
        (2101, 600, 301)
    );
}

#[test]
fn split_is_seeded() {
    let a = split_dataset(&ids(50), &SplitSpec::default()).unwrap();
    assert_eq!(a, split_dataset(&ids(50), &SplitSpec::default()).unwrap());
    let other = SplitSpec {
        seed: 9,
        ..Default::default()
    };
    assert_ne!(a, split_dataset(&ids(50), &other).unwrap());
}

#[test]
fn horizontal_flip_of_two_pixels() {
    let img = GrayImage::new(2, 1, vec![0, 255]).unwrap();
    let r = DatasetRecord {
        id: "x".into(),
        input_image: img.clone(),
        target_image: img,
        analysis: FieldKind::Spatial,
        split: Split::Train,
    };
    let f = flip_pair(&r, true, false);
    assert_eq!(f.input_image.pixels(), &[255, 0]);
    assert_eq!(f.target_image.pixels(), &[255, 0]);
}

fn plans(dir: &std::path::Path, count: usize) {
    let p = PlanSynthParams {
        width: 36,
        height: 28,
        seed: 21,
        ..Default::default()
    };
    let m = generate_batch(&p, count, dir, &[FieldKind::Sdf]).unwrap();
    assert_eq!(m.tasks.len(), count);
    assert!(m.tasks.iter().all(|t| t.message.is_none()));
}

#[test]
fn build_six_plans_two_analyses() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    plans(src.path(), 6);
    let entries = build_dataset(src.path(), out.path(), &DatasetOptions::default()).unwrap();
    assert_eq!(entries.len(), 12);
    let count = |s| entries.iter().filter(|e| e.split == s).count();
    assert_eq!(
        (count(Split::Train), count(Split::Val), count(Split::Test)),
        (8, 2, 2)
    );

    // Both records of a plan share a split.
    for pair in entries.chunks(2) {
        assert_eq!(pair[0].input_path, pair[1].input_path);
        assert_eq!(pair[0].split, pair[1].split);
    }
    let unique: HashSet<_> = entries.iter().map(|e| &e.id).collect();
    assert_eq!(unique.len(), 12);

    for e in &entries {
        let input = read_pgm(&out.path().join(&e.input_path)).unwrap();
        let target = read_pgm(&out.path().join(&e.target_path)).unwrap();
        assert_eq!(
            (input.width(), input.height()),
            (target.width(), target.height())
        );
        for (&i, &t) in input.pixels().iter().zip(target.pixels()) {
            assert!(i == 0 || i == 255);
            if i == 0 {
                assert_eq!(t, 0);
            }
        }
    }

    let first = fs::read(out.path().join("manifest.jsonl")).unwrap();
    build_dataset(src.path(), out.path(), &DatasetOptions::default()).unwrap();
    assert_eq!(first, fs::read(out.path().join("manifest.jsonl")).unwrap());
}

#[test]
fn missing_field_without_farm_names_the_plan() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    plans(src.path(), 2);
    let opts = DatasetOptions {
        farm_workers: None,
        ..Default::default()
    };
    match build_dataset(src.path(), out.path(), &opts) {
        Err(Error::MissingField { plan_id, analysis }) => {
            assert_eq!(plan_id, "plan_00000");
            assert_eq!(analysis, "spatial");
        }
        other => panic!("expected MissingField, got {other:?}"),
    }
}

#[test]
fn existing_fields_are_reused() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    plans(src.path(), 1);
    let opts = DatasetOptions {
        analyses: vec![FieldKind::Sdf],
        ..Default::default()
    };
    build_dataset(src.path(), out.path(), &opts).unwrap();
    let sidecar = field_path(src.path(), "plan_00000", FieldKind::Sdf);
    assert!(sidecar.is_file());
    let no_farm = DatasetOptions {
        farm_workers: None,
        ..opts
    };
    build_dataset(src.path(), out.path(), &no_farm).unwrap();
}

#[test]
fn corrupt_field_error_names_record() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    plans(src.path(), 1);
    let sidecar = field_path(src.path(), "plan_00000", FieldKind::Visual);
    fs::create_dir_all(sidecar.parent().unwrap()).unwrap();
    fs::write(&sidecar, [1, 2, 3]).unwrap();
    let opts = DatasetOptions {
        analyses: vec![FieldKind::Visual],
        farm_workers: None,
        ..Default::default()
    };
    let err = build_dataset(src.path(), out.path(), &opts).unwrap_err();
    assert!(err.to_string().contains("plan_00000.visual"), "{err}");
}
