//! Distribution-aware uniform quantizer.
//!
//! Two quantizer topologies live here:
//!
//! * [`QFormat`] + [`quantize`]: the fixed-point (midtread) quantizer used for
//!   conversion. Levels are `k * 2^-n` for `k` in `[-2^(b-1), 2^(b-1) - 1]`, so
//!   zero is always a level.
//! * [`MidriseQuantizer`]: the symmetric quantizer with `2^b` levels at
//!   `(k + 1/2) * step`. The tabulated optimal step sizes are defined for this
//!   topology, and it is what efficiency measurements use.
//!
//! Step sizes for the Gaussian, Laplacian and Gamma families are normalized to
//! unit variance; the Uniform family is normalized to the support `[-1, 1]`.

use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::stats::TensorStats;
use crate::step_table::STEP_TABLE;

/// Smallest bit-width accepted anywhere.
pub const MIN_BITWIDTH: u32 = 1;
/// Largest bit-width of a [`QFormat`].
pub const MAX_BITWIDTH: u32 = 32;
/// Largest bit-width with a tabulated optimal step size.
pub const MAX_TABLE_BITWIDTH: u32 = 16;

/// Default effective-std multiplier: ξ = 3σ.
pub const DEFAULT_XI_MULTIPLIER: f64 = 3.0;

/// Input distribution family the quantizer is tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Distribution {
    Uniform,
    Gaussian,
    Laplacian,
    Gamma,
}

impl Distribution {
    pub const ALL: [Distribution; 4] = [
        Distribution::Uniform,
        Distribution::Gaussian,
        Distribution::Laplacian,
        Distribution::Gamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Gaussian => "gaussian",
            Distribution::Laplacian => "laplacian",
            Distribution::Gamma => "gamma",
        }
    }

    pub(crate) fn column(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Distribution::Uniform),
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "laplacian" | "laplace" => Ok(Distribution::Laplacian),
            "gamma" => Ok(Distribution::Gamma),
            other => Err(Error::Input(alloc::format!("unknown distribution `{other}`"))),
        }
    }
}

/// Optimal step size of the symmetric uniform quantizer for a normalized
/// input of the given family.
///
/// Bit-widths 1 to 4 are the classic published values; 5 to 16 come from an
/// offline Monte Carlo MSE scan (see `fxq/examples/gen_step_table.rs`).
pub fn optimal_step_size(dist: Distribution, bitwidth: u32) -> Result<f64> {
    if !(MIN_BITWIDTH..=MAX_TABLE_BITWIDTH).contains(&bitwidth) {
        return Err(Error::BitwidthRange {
            bitwidth,
            min: MIN_BITWIDTH,
            max: MAX_TABLE_BITWIDTH,
        });
    }
    Ok(STEP_TABLE[(bitwidth - 1) as usize][dist.column()])
}

/// A signed fixed-point format: `bitwidth` total bits, `frac_bits`
/// fractional bits (may be negative), resolution `2^-frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QFormat {
    bitwidth: u32,
    frac_bits: i32,
    signed: bool,
}

impl QFormat {
    pub fn new(bitwidth: u32, frac_bits: i32) -> Result<Self> {
        if !(MIN_BITWIDTH..=MAX_BITWIDTH).contains(&bitwidth) {
            return Err(Error::BitwidthRange {
                bitwidth,
                min: MIN_BITWIDTH,
                max: MAX_BITWIDTH,
            });
        }
        // keep 2^±n and the level grid inside f64's exact range
        if frac_bits.abs() > 900 {
            return Err(Error::Input(alloc::format!(
                "fractional bits {frac_bits} out of range"
            )));
        }
        Ok(QFormat {
            bitwidth,
            frac_bits,
            signed: true,
        })
    }

    /// Finest format of the given width whose positive range still covers
    /// `max_abs`.
    pub fn covering(max_abs: f64, bitwidth: u32) -> Result<Self> {
        if !(max_abs.is_finite() && max_abs > 0.0) {
            return Err(Error::DegenerateStats(alloc::format!(
                "cannot cover range with max_abs = {max_abs}"
            )));
        }
        let top = if bitwidth == 1 {
            0.5
        } else {
            pow2(bitwidth.min(MAX_BITWIDTH) as i32 - 1) - 1.0
        };
        // largest n with top * 2^-n >= max_abs
        let n = (top / max_abs).log2().floor() as i32;
        QFormat::new(bitwidth, n)
    }

    pub fn bitwidth(&self) -> u32 {
        self.bitwidth
    }

    pub fn frac_bits(&self) -> i32 {
        self.frac_bits
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    /// Spacing between adjacent levels, `2^-n`.
    pub fn resolution(&self) -> f64 {
        pow2(-self.frac_bits)
    }

    /// Lowest and highest integer level codes.
    fn code_range(&self) -> (f64, f64) {
        let half = pow2(self.bitwidth as i32 - 1);
        (-half, half - 1.0)
    }

    /// Largest representable magnitude on the positive side.
    pub fn max_value(&self) -> f64 {
        if self.bitwidth == 1 {
            return pow2(-self.frac_bits - 1);
        }
        self.code_range().1 * self.resolution()
    }

    pub fn min_value(&self) -> f64 {
        if self.bitwidth == 1 {
            return -pow2(-self.frac_bits - 1);
        }
        self.code_range().0 * self.resolution()
    }

    /// Quantize one finite value.
    ///
    /// One-bit formats use the symmetric levels `±2^(-n-1)` (zero stays
    /// zero); every other width uses the midtread grid with saturation.
    pub fn quantize_value(&self, x: f64) -> f64 {
        if self.bitwidth == 1 {
            return if x > 0.0 {
                pow2(-self.frac_bits - 1)
            } else if x < 0.0 {
                -pow2(-self.frac_bits - 1)
            } else {
                0.0
            };
        }
        let (lo, hi) = self.code_range();
        let code = (x * pow2(self.frac_bits)).round().clamp(lo, hi);
        code * pow2(-self.frac_bits)
    }
}

impl fmt::Display for QFormat {
    /// `Qβ.n`, e.g. `Q8.5` or `Q4.-1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.bitwidth, self.frac_bits)
    }
}

impl core::str::FromStr for QFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(alloc::format!("malformed Q-format `{s}`"));
        let body = s.trim().strip_prefix('Q').ok_or_else(bad)?;
        let (b, n) = body.split_once('.').ok_or_else(bad)?;
        let b: u32 = b.parse().map_err(|_| bad())?;
        let n: i32 = n.parse().map_err(|_| bad())?;
        QFormat::new(b, n)
    }
}

fn pow2(e: i32) -> f64 {
    2.0f64.powi(e)
}

/// Effective standard deviation ξ used to scale the normalized step size.
pub fn effective_std(stats: &TensorStats, dist: Distribution, xi_multiplier: f64) -> Result<f64> {
    if !(xi_multiplier.is_finite() && xi_multiplier > 0.0) {
        return Err(Error::Input(alloc::format!(
            "xi multiplier must be positive, got {xi_multiplier}"
        )));
    }
    let xi = match dist {
        Distribution::Uniform => stats.max_abs,
        _ => xi_multiplier * stats.std_dev,
    };
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::DegenerateStats(alloc::format!(
            "effective std is {xi} (std_dev = {}, max_abs = {})",
            stats.std_dev,
            stats.max_abs
        )));
    }
    Ok(xi)
}

/// Derive the fixed-point format for a tensor: `s = ξ * step(β)`,
/// `n = -ceil(log2 s)`.
///
/// Widths above the tabulated range extend the β = 16 step by halving it
/// per extra bit.
pub fn derive_qformat(
    stats: &TensorStats,
    bitwidth: u32,
    dist: Distribution,
    xi_multiplier: f64,
) -> Result<QFormat> {
    if !(MIN_BITWIDTH..=MAX_BITWIDTH).contains(&bitwidth) {
        return Err(Error::BitwidthRange {
            bitwidth,
            min: MIN_BITWIDTH,
            max: MAX_BITWIDTH,
        });
    }
    let xi = effective_std(stats, dist, xi_multiplier)?;
    let base = if bitwidth <= MAX_TABLE_BITWIDTH {
        optimal_step_size(dist, bitwidth)?
    } else {
        optimal_step_size(dist, MAX_TABLE_BITWIDTH)? * pow2(MAX_TABLE_BITWIDTH as i32 - bitwidth as i32)
    };
    let step = xi * base;
    let n = -(step.log2().ceil() as i32);
    QFormat::new(bitwidth, n)
}

/// Simulated fixed-point quantization of a sequence.
pub fn quantize(values: &[f64], fmt: QFormat) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&x| {
            if x.is_finite() {
                Ok(fmt.quantize_value(x))
            } else {
                Err(Error::Input(alloc::format!("non-finite value {x}")))
            }
        })
        .collect()
}

/// In-place variant over `f32` storage.
pub fn quantize_f32_in_place(values: &mut [f32], fmt: QFormat) -> Result<()> {
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(Error::Input(alloc::format!("non-finite value {v}")));
        }
        *v = fmt.quantize_value(*v as f64) as f32;
    }
    Ok(())
}

/// Symmetric uniform quantizer with `2^bitwidth` levels at `(k + 1/2) * step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidriseQuantizer {
    step: f64,
    half_levels: f64,
}

impl MidriseQuantizer {
    pub fn new(step: f64, bitwidth: u32) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Input(alloc::format!("step must be positive, got {step}")));
        }
        if !(MIN_BITWIDTH..=MAX_BITWIDTH).contains(&bitwidth) {
            return Err(Error::BitwidthRange {
                bitwidth,
                min: MIN_BITWIDTH,
                max: MAX_BITWIDTH,
            });
        }
        Ok(MidriseQuantizer {
            step,
            half_levels: pow2(bitwidth as i32 - 1),
        })
    }

    /// Quantizer tuned for a normalized input of `dist`, scaled by `xi`.
    pub fn optimal(dist: Distribution, bitwidth: u32, xi: f64) -> Result<Self> {
        MidriseQuantizer::new(xi * optimal_step_size(dist, bitwidth)?, bitwidth)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn quantize_value(&self, x: f64) -> f64 {
        let cell = (x / self.step)
            .floor()
            .clamp(-self.half_levels, self.half_levels - 1.0);
        (cell + 0.5) * self.step
    }

    /// Mean squared quantization error over `samples`.
    pub fn mse(&self, samples: &[f64]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = samples
            .iter()
            .map(|&x| {
                let e = x - self.quantize_value(x);
                e * e
            })
            .sum();
        sum / samples.len() as f64
    }
}

/// Signal-to-quantization-noise ratio in decibels.
///
/// A noiseless measurement is represented by [`SqnrDb::INFINITE`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SqnrDb(pub f64);

impl SqnrDb {
    /// Sentinel for zero measured noise.
    pub const INFINITE: SqnrDb = SqnrDb(f64::INFINITY);

    pub fn from_linear(ratio: f64) -> Self {
        SqnrDb(10.0 * ratio.log10())
    }

    pub fn db(self) -> f64 {
        self.0
    }

    /// Linear power ratio `10^(dB/10)`.
    pub fn linear(self) -> f64 {
        10f64.powf(self.0 / 10.0)
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl fmt::Display for SqnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.2}", self.0)
        }
    }
}

/// `10 log10(Σx² / Σ(x - x̃)²)`.
pub fn measure_sqnr(original: &[f64], perturbed: &[f64]) -> Result<SqnrDb> {
    measure_sqnr_iter(original.iter().copied().zip(perturbed.iter().copied()), original.len(), perturbed.len())
}

/// [`measure_sqnr`] over `f32` buffers, accumulating in `f64`.
pub fn measure_sqnr_f32(original: &[f32], perturbed: &[f32]) -> Result<SqnrDb> {
    measure_sqnr_iter(
        original
            .iter()
            .zip(perturbed.iter())
            .map(|(&a, &b)| (a as f64, b as f64)),
        original.len(),
        perturbed.len(),
    )
}

fn measure_sqnr_iter(pairs: impl Iterator<Item = (f64, f64)>, len_a: usize, len_b: usize) -> Result<SqnrDb> {
    if len_a != len_b {
        return Err(Error::Input(alloc::format!(
            "length mismatch: {len_a} vs {len_b}"
        )));
    }
    if len_a == 0 {
        return Err(Error::Input("empty sequences".into()));
    }
    let (mut signal, mut noise) = (0.0f64, 0.0f64);
    for (x, y) in pairs {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Input("non-finite value in SQNR input".into()));
        }
        signal += x * x;
        let e = x - y;
        noise += e * e;
    }
    if signal == 0.0 {
        return Err(Error::ZeroSignal);
    }
    if noise == 0.0 {
        return Ok(SqnrDb::INFINITE);
    }
    Ok(SqnrDb::from_linear(signal / noise))
}

/// Linear SQNR model: `κ·β` dB.
pub fn predict_sqnr_db(bitwidth: u32, kappa: f64) -> Result<SqnrDb> {
    if bitwidth < MIN_BITWIDTH {
        return Err(Error::BitwidthRange {
            bitwidth,
            min: MIN_BITWIDTH,
            max: u32::MAX,
        });
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::Input(alloc::format!("kappa must be positive, got {kappa}")));
    }
    Ok(SqnrDb(kappa * bitwidth as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn unit_stats(std_dev: f64) -> TensorStats {
        TensorStats::new(100, 0.0, std_dev, 4.0 * std_dev).unwrap()
    }

    #[test]
    fn table_values_exact() {
        assert_eq!(optimal_step_size(Distribution::Gaussian, 2).unwrap(), 0.996);
        assert_eq!(optimal_step_size(Distribution::Uniform, 1).unwrap(), 1.0);
        assert_eq!(optimal_step_size(Distribution::Gaussian, 1).unwrap(), 1.596);
        assert_eq!(optimal_step_size(Distribution::Laplacian, 3).unwrap(), 0.731);
        assert_eq!(optimal_step_size(Distribution::Gamma, 4).unwrap(), 0.540);
        assert_eq!(optimal_step_size(Distribution::Uniform, 4).unwrap(), 0.125);
    }

    #[test]
    fn step_table_range_errors() {
        assert!(matches!(
            optimal_step_size(Distribution::Gaussian, 0),
            Err(Error::BitwidthRange { .. })
        ));
        assert!(matches!(
            optimal_step_size(Distribution::Gaussian, 17),
            Err(Error::BitwidthRange { .. })
        ));
    }

    #[test]
    fn step_table_monotone() {
        for dist in Distribution::ALL {
            for b in 1..MAX_TABLE_BITWIDTH {
                let a = optimal_step_size(dist, b).unwrap();
                let c = optimal_step_size(dist, b + 1).unwrap();
                assert!(c < a, "{dist} step not decreasing at {b}: {a} -> {c}");
            }
        }
    }

    #[test]
    fn derive_qformat_examples() {
        // s = 0.996 -> n = 0
        let f = derive_qformat(&unit_stats(1.0), 2, Distribution::Gaussian, 1.0).unwrap();
        assert_eq!((f.bitwidth(), f.frac_bits()), (2, 0));
        // s = 3 * 0.335 = 1.005 -> n = -1
        let f = derive_qformat(&unit_stats(1.0), 4, Distribution::Gaussian, 3.0).unwrap();
        assert_eq!((f.bitwidth(), f.frac_bits()), (4, -1));
        // s = 0.5 * 1.596 = 0.798 -> n = 0
        let f = derive_qformat(&unit_stats(0.5), 1, Distribution::Gaussian, 1.0).unwrap();
        assert_eq!((f.bitwidth(), f.frac_bits()), (1, 0));
        assert!(f.signed());
    }

    #[test]
    fn derive_qformat_uniform_uses_half_range() {
        let stats = TensorStats::new(10, 0.0, 0.01, 2.0).unwrap();
        // s = 2 * 0.125 = 0.25 -> n = 2
        let f = derive_qformat(&stats, 4, Distribution::Uniform, 3.0).unwrap();
        assert_eq!(f.frac_bits(), 2);
    }

    #[test]
    fn derive_qformat_degenerate() {
        let constant = TensorStats::new(5, 1.5, 0.0, 1.5).unwrap();
        assert!(matches!(
            derive_qformat(&constant, 8, Distribution::Gaussian, 3.0),
            Err(Error::DegenerateStats(_))
        ));
        let zeros = TensorStats::new(5, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            derive_qformat(&zeros, 8, Distribution::Uniform, 3.0),
            Err(Error::DegenerateStats(_))
        ));
        assert!(derive_qformat(&unit_stats(1.0), 8, Distribution::Gaussian, 0.0).is_err());
    }

    #[test]
    fn derive_qformat_wide_widths_extend_table() {
        let f16 = derive_qformat(&unit_stats(1.0), 16, Distribution::Gaussian, 3.0).unwrap();
        let f24 = derive_qformat(&unit_stats(1.0), 24, Distribution::Gaussian, 3.0).unwrap();
        assert_eq!(f24.frac_bits(), f16.frac_bits() + 8);
        assert!(derive_qformat(&unit_stats(1.0), 33, Distribution::Gaussian, 3.0).is_err());
    }

    #[test]
    fn quantize_examples() {
        let any = QFormat::new(5, 3).unwrap();
        assert_eq!(quantize(&[0.0], any).unwrap(), vec![0.0]);
        let f = QFormat::new(8, 2).unwrap();
        assert_eq!(quantize(&[0.3, -0.3], f).unwrap(), vec![0.25, -0.25]);
        let f = QFormat::new(4, 0).unwrap();
        assert_eq!(quantize(&[100.0], f).unwrap(), vec![7.0]);
        assert_eq!(quantize(&[-100.0], f).unwrap(), vec![-8.0]);
        assert!(matches!(quantize(&[f64::NAN], f), Err(Error::Input(_))));
        assert!(quantize(&[f64::INFINITY], f).is_err());
    }

    #[test]
    fn quantize_ties_away_from_zero() {
        let f = QFormat::new(8, 1).unwrap();
        assert_eq!(quantize(&[0.25, -0.25, 0.75], f).unwrap(), vec![0.5, -0.5, 1.0]);
    }

    #[test]
    fn quantize_rounding_exhaustive_grid() {
        // every value on a fine grid lands on the nearest multiple of the resolution
        let f = QFormat::new(8, 2).unwrap();
        for i in -400..=400 {
            let x = i as f64 / 97.0;
            let q = f.quantize_value(x);
            let best = (-128..=127)
                .map(|k| k as f64 * 0.25)
                .min_by(|a, b| (x - a).abs().partial_cmp(&(x - b).abs()).unwrap())
                .unwrap();
            assert!((x - q).abs() <= (x - best).abs() + 1e-15, "{x}: {q} vs {best}");
        }
    }

    #[test]
    fn one_bit_is_symmetric() {
        let f = QFormat::new(1, 0).unwrap();
        assert_eq!(quantize(&[0.3, -2.0, 0.0], f).unwrap(), vec![0.5, -0.5, 0.0]);
        assert_eq!(f.max_value(), 0.5);
        assert_eq!(f.min_value(), -0.5);
    }

    #[test]
    fn qformat_display_roundtrip() {
        let f = QFormat::new(4, -1).unwrap();
        assert_eq!(f.to_string(), "Q4.-1");
        assert_eq!("Q4.-1".parse::<QFormat>().unwrap(), f);
        assert!("Q0.3".parse::<QFormat>().is_err());
        assert!("8.3".parse::<QFormat>().is_err());
    }

    #[test]
    fn qformat_range() {
        let f = QFormat::new(8, 3).unwrap();
        assert_eq!(f.max_value(), 127.0 / 8.0);
        assert_eq!(f.min_value(), -16.0);
        assert!(QFormat::new(0, 0).is_err());
        assert!(QFormat::new(33, 0).is_err());
    }

    #[test]
    fn covering_format_holds_max() {
        for &m in &[0.001, 0.7, 1.0, 3.3, 1000.0] {
            let f = QFormat::covering(m, 8).unwrap();
            assert!(f.max_value() >= m);
            let finer = QFormat::new(8, f.frac_bits() + 1).unwrap();
            assert!(finer.max_value() < m);
        }
    }

    #[test]
    fn midrise_levels() {
        let q = MidriseQuantizer::new(0.996, 2).unwrap();
        assert!((q.quantize_value(0.1) - 0.498).abs() < 1e-12);
        assert!((q.quantize_value(-5.0) + 1.494).abs() < 1e-12);
        assert!((q.quantize_value(5.0) - 1.494).abs() < 1e-12);
    }

    #[test]
    fn sqnr_examples() {
        let x = [1.0, 1.0, 1.0, 1.0];
        assert!(measure_sqnr(&x, &x).unwrap().is_infinite());
        let s = measure_sqnr(&[1.0, 0.0, -1.0, 0.0], &[0.9, 0.0, -0.9, 0.0]).unwrap();
        assert!((s.db() - 20.0).abs() < 1e-9);
        assert_eq!(measure_sqnr(&[0.0, 0.0], &[0.1, 0.0]), Err(Error::ZeroSignal));
        assert!(matches!(measure_sqnr(&[1.0], &[1.0, 2.0]), Err(Error::Input(_))));
        assert!(measure_sqnr(&[], &[]).is_err());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict_sqnr_db(10, 3.0).unwrap().db(), 30.0);
        assert_eq!(predict_sqnr_db(1, 6.02).unwrap().db(), 6.02);
        assert_eq!(predict_sqnr_db(4, 5.0).unwrap().db(), 20.0);
        assert!(predict_sqnr_db(0, 3.0).is_err());
        assert!(predict_sqnr_db(4, 0.0).is_err());
    }

    #[test]
    fn sqnr_linear_roundtrip() {
        let s = SqnrDb(16.99);
        assert!((SqnrDb::from_linear(s.linear()).db() - 16.99).abs() < 1e-12);
        assert_eq!(SqnrDb::INFINITE.to_string(), "inf");
        assert_eq!(SqnrDb(3.14159).to_string(), "3.14");
    }
}
