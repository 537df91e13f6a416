//! Monte Carlo search for the MSE-optimal step of a symmetric uniform
//! (midrise) quantizer on a normalized distribution.
//!
//! Samples are folded to magnitudes (every distribution and the quantizer
//! are odd-symmetric), a log-spaced grid locates the basin, and a
//! golden-section search refines inside it.

use fxq_core::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, Exp, Gamma, StandardNormal};

/// `n` magnitudes `|x|` of a zero-mean draw: unit variance for Gaussian,
/// Laplacian and Gamma, support `[-1, 1]` for Uniform.
pub fn sample_magnitudes(dist: Distribution, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match dist {
        Distribution::Uniform => (0..n).map(|_| rng.random::<f64>()).collect(),
        Distribution::Gaussian => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect(),
        Distribution::Laplacian => {
            // scale 1/√2 gives unit variance
            let exp = Exp::new(core::f64::consts::SQRT_2).expect("valid rate");
            (0..n).map(|_| exp.sample(&mut rng)).collect()
        }
        Distribution::Gamma => {
            // |x| ~ Gamma(1/2, 2/√3) gives unit variance
            let g = Gamma::new(0.5, 2.0 / 3f64.sqrt()).expect("valid shape");
            (0..n).map(|_| g.sample(&mut rng)).collect()
        }
    }
}

/// Signed samples (magnitudes with a random sign).
pub fn sample_signed(dist: Distribution, n: usize, seed: u64) -> Vec<f64> {
    let mut signs = ChaCha20Rng::seed_from_u64(seed ^ 0x5EED_516E);
    sample_magnitudes(dist, n, seed)
        .into_iter()
        .map(|m| if signs.random::<bool>() { m } else { -m })
        .collect()
}

/// Mean squared error of the `bits`-bit midrise quantizer with `step` on
/// folded magnitudes.
pub fn midrise_mse(magnitudes: &[f64], bits: u32, step: f64) -> f64 {
    let top = (1u64 << (bits - 1)) as f64 - 1.0;
    let inv = 1.0 / step;
    let sum: f64 = magnitudes
        .iter()
        .map(|&y| {
            let e = y - ((y * inv).floor().min(top) + 0.5) * step;
            e * e
        })
        .sum();
    sum / magnitudes.len() as f64
}

const GRID_POINTS: usize = 64;
const GOLDEN_ITERS: usize = 60;

/// Step minimizing [`midrise_mse`] on the given magnitudes.
pub fn optimal_step(magnitudes: &[f64], bits: u32) -> f64 {
    assert!(!magnitudes.is_empty() && (1..=30).contains(&bits));
    let peak = magnitudes.iter().cloned().fold(0.0, f64::max);
    let levels = (1u64 << bits) as f64;
    // from a quarter of the finest sensible step to twice the peak-covering one
    let (lo, hi) = ((0.25 / levels).ln(), (4.0 * peak / levels).ln());
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect();
    let mse: Vec<f64> = grid.iter().map(|&s| midrise_mse(magnitudes, bits, s)).collect();
    let best = (0..GRID_POINTS).min_by(|&a, &b| mse[a].total_cmp(&mse[b])).expect("non-empty");
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID_POINTS - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (midrise_mse(magnitudes, bits, c), midrise_mse(magnitudes, bits, d));
    for _ in 0..GOLDEN_ITERS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = midrise_mse(magnitudes, bits, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = midrise_mse(magnitudes, bits, d);
        }
    }
    let s = 0.5 * (a + b);
    // the grid point may still win if the basin is flat or ragged
    if midrise_mse(magnitudes, bits, s) <= mse[best] {
        s
    } else {
        grid[best]
    }
}
