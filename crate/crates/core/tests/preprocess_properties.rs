mod common;

use common::ks_distance;
use pondwatch::preprocess::{histogram_match, normalize, srgb_to_lab};
use pondwatch::raster::{BandName, Raster};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// CIELAB via the CIE piecewise form with the tabulated D65 white.
fn lab_reference(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    let x = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
    let y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
    let z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
    let eps = 216.0 / 24389.0;
    let kappa = 24389.0 / 27.0;
    let f = |t: f64| {
        if t > eps {
            t.cbrt()
        } else {
            (kappa * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

proptest! {
    #[test]
    fn lab_agrees_with_the_cie_reference(r in 0.0f64..=1.0, g in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let got = srgb_to_lab([r, g, b]);
        let want = lab_reference([r, g, b]);
        for (a, e) in got.iter().zip(&want) {
            prop_assert!((a - e).abs() < 0.01, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn normalized_bands_span_the_unit_interval(values in prop::collection::vec(-50.0f32..50.0, 4..40)) {
        let r = Raster::new(values.len(), 1, vec![BandName::Red], values.clone()).unwrap();
        let n = normalize(&r);
        let band = n.band_at(0);
        prop_assert!(band.iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(band[i] <= band[j]);
                }
            }
        }
    }

    #[test]
    fn matching_an_affine_copy_recovers_the_reference(seed in 0u64..500, gain in 0.5f32..2.0, offset in -0.3f32..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference: Vec<f32> = (0..4000).map(|_| rng.random_range(0.0f32..1.0).powi(2)).collect();
        let source: Vec<f32> = reference.iter().map(|v| v * gain + offset).collect();
        let matched = histogram_match(&source, &reference, 65536).unwrap();
        prop_assert!(ks_distance(&matched, &reference) < 0.01);
        // Matching is monotone in the source value.
        let mut order: Vec<usize> = (0..source.len()).collect();
        order.sort_by(|&a, &b| source[a].total_cmp(&source[b]));
        prop_assert!(order.windows(2).all(|w| matched[w[0]] <= matched[w[1]]));
    }
}
