//! The tabulated steps beyond four bits come from an offline Monte Carlo
//! scan; a fresh, smaller, differently seeded scan must agree with them.

use fxq::stepscan::{optimal_step, sample_magnitudes};
use fxq_core::quantizer::optimal_step_size;
use fxq_core::Distribution;

#[test]
fn wider_rows_agree_with_fresh_scan() {
    for (i, dist) in [Distribution::Gaussian, Distribution::Laplacian, Distribution::Gamma].into_iter().enumerate() {
        let mags = sample_magnitudes(dist, 400_000, 500 + i as u64);
        for bits in [5, 6] {
            let found = optimal_step(&mags, bits);
            let table = optimal_step_size(dist, bits).unwrap();
            assert!((found / table - 1.0).abs() < 0.03, "{dist} β={bits}: {found} vs {table}");
        }
    }
}

#[test]
fn uniform_column_is_exact() {
    for bits in 1..=16 {
        assert_eq!(optimal_step_size(Distribution::Uniform, bits).unwrap(), 2f64.powi(1 - bits as i32));
    }
}
