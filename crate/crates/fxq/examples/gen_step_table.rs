//! Regenerates the optimal step table rows for bit-widths 5..=16.
//!
//! For each distribution, 10^7 seeded samples are drawn and the
//! MSE-minimizing midrise step is located by grid + golden-section search.
//! The Uniform column is written in closed form (`2^(1-β)`); its Monte
//! Carlo value is printed alongside as a check. Rows 1..=4 are printed for
//! comparison with the published values.
//!
//! Run with `cargo run --release -p fxq --example gen_step_table`.

use fxq::stepscan::{optimal_step, sample_magnitudes};
use fxq_core::Distribution;

const SAMPLES: usize = 10_000_000;
const SEED: u64 = 20160101;

fn main() {
    let samples: Vec<Vec<f64>> = Distribution::ALL
        .iter()
        .enumerate()
        .map(|(i, &d)| sample_magnitudes(d, SAMPLES, SEED + i as u64))
        .collect();
    let mut previous = [f64::INFINITY; 4];
    for bits in 1..=16u32 {
        let mut row = [0.0f64; 4];
        for (c, mags) in samples.iter().enumerate() {
            row[c] = optimal_step(mags, bits);
        }
        let uniform_mc = row[0];
        row[0] = 2.0 / (1u64 << bits) as f64;
        let monotone = row.iter().zip(&previous).all(|(a, b)| a < b);
        previous = row;
        println!(
            "    [{:?}, {:.6}, {:.6}, {:.6}], // β={bits:<2} uniform MC {uniform_mc:.6}{}",
            row[0],
            row[1],
            row[2],
            row[3],
            if monotone { "" } else { "  NOT MONOTONE" }
        );
    }
}
