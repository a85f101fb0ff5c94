mod common;

use common::textbook_metrics;
use pondwatch::eval::{
    cohen_kappa, confusion, f1_macro, f1_per_class, jaccard_macro, jaccard_per_class,
    sample_training, ConfusionMatrix,
};
use pondwatch::raster::{LabelKind, LabelRaster, NODATA};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
    (2usize..7).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0u64..500, k), k))
}

proptest! {
    #[test]
    fn metrics_match_the_textbook_formulas(rows in matrix()) {
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        let oracle = textbook_metrics(&rows);
        prop_assert!((cohen_kappa(&cm) - oracle.kappa).abs() <= 1e-12);
        prop_assert!((jaccard_macro(&cm) - oracle.jaccard_macro).abs() <= 1e-12);
        prop_assert!((f1_macro(&cm) - oracle.f1_macro).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&cohen_kappa(&cm)));
    }

    #[test]
    fn f1_and_jaccard_are_linked_per_class(rows in matrix()) {
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        for (j, f) in jaccard_per_class(&cm).into_iter().zip(f1_per_class(&cm)) {
            match (j, f) {
                (Some(j), Some(f)) => prop_assert!((f - 2.0 * j / (1.0 + j)).abs() < 1e-12),
                (None, None) => {}
                _ => prop_assert!(false, "presence differs"),
            }
        }
    }

    #[test]
    fn independent_predictions_have_zero_kappa(r in prop::collection::vec(1u64..20, 2..5), c in prop::collection::vec(1u64..20, 2..5)) {
        let k = r.len().min(c.len());
        let rows: Vec<Vec<u64>> = (0..k).map(|i| (0..k).map(|j| r[i] * c[j]).collect()).collect();
        let kappa = cohen_kappa(&ConfusionMatrix::from_rows(&rows).unwrap());
        prop_assert!(kappa.abs() < 1e-12);
    }
}

#[test]
fn each_pixel_is_sampled_with_equal_frequency() {
    // Class 0 has 10 pixels; every other class has plenty.
    let mut values = vec![1u8; 40];
    values.extend([2u8; 40]);
    values.extend([3u8; 40]);
    values.extend([0u8; 10]);
    values.push(NODATA);
    let truth = LabelRaster::new(values.len(), 1, LabelKind::Change, values).unwrap();
    let first = 120;
    let mut hits = [0u32; 10];
    for seed in 0..1000 {
        for p in sample_training(&truth, 5, seed).unwrap() {
            if p >= first && p < first + 10 {
                hits[p - first] += 1;
            }
        }
    }
    for h in hits {
        let f = h as f64 / 1000.0;
        assert!((0.45..=0.55).contains(&f), "frequency {f}");
    }
}

#[test]
fn training_pixels_never_reach_the_confusion_matrix() {
    let values: Vec<u8> = (0..400).map(|i| (i % 4) as u8).collect();
    let truth = LabelRaster::new(20, 20, LabelKind::Change, values).unwrap();
    let train = sample_training(&truth, 30, 9).unwrap();
    let cm = confusion(&truth, &truth, &train).unwrap();
    assert_eq!(cm.total() as usize, 400 - train.len());
    assert_eq!(train.len(), 4 * 30);
}
