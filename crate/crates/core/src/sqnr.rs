//! Theoretical SQNR through a quantized network.
//!
//! Each quantization step (network input, a layer's weights, a layer's
//! activations) contributes an SQNR of about `κ·β` dB. Independent noise adds
//! in the reciprocal domain, so the output SQNR of layer `l` is the harmonic
//! combination of every step up to and including layer `l`. Biases are not
//! modelled: the product terms dominate.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::quantizer::{predict_sqnr_db, SqnrDb};

/// Default efficiency for planning on real networks, dB/bit.
pub const DEFAULT_KAPPA_NETWORK: f64 = 3.0;
/// Efficiency of the optimal quantizer on Gaussian input, dB/bit.
pub const DEFAULT_KAPPA_GAUSSIAN: f64 = 5.0;

/// One place where a tensor class is quantized.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantStep {
    pub label: String,
    pub bitwidth: u32,
    /// Quantization efficiency, dB per bit.
    pub kappa: f64,
    /// Cost weight: parameter count or MAC count.
    pub rho: f64,
}

impl QuantStep {
    pub fn new(label: impl Into<String>, bitwidth: u32, kappa: f64, rho: f64) -> Result<Self> {
        let label = label.into();
        if bitwidth < 1 {
            return Err(Error::Input(alloc::format!("step `{label}`: bit-width must be >= 1")));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Input(alloc::format!("step `{label}`: kappa must be positive")));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::Input(alloc::format!("step `{label}`: rho must be >= 0")));
        }
        Ok(QuantStep {
            label,
            bitwidth,
            kappa,
            rho,
        })
    }

    pub fn predicted(&self) -> SqnrDb {
        predict_sqnr_db(self.bitwidth, self.kappa).expect("validated step")
    }
}

/// Harmonic composition: `1/γ = Σ 1/γ_i`. Infinite steps contribute nothing.
pub fn compose_sqnr(steps: &[SqnrDb]) -> Result<SqnrDb> {
    if steps.is_empty() {
        return Err(Error::Input("cannot compose zero SQNR steps".into()));
    }
    let mut inverse = 0.0;
    for s in steps {
        if s.db().is_nan() {
            return Err(Error::Input("NaN SQNR step".into()));
        }
        if !s.is_infinite() {
            inverse += 1.0 / s.linear();
        }
    }
    if inverse == 0.0 {
        return Ok(SqnrDb::INFINITE);
    }
    Ok(SqnrDb::from_linear(1.0 / inverse))
}

/// Steps belonging to one layer (or to the network input).
#[derive(Debug, Clone, PartialEq)]
pub struct StepGroup {
    pub name: String,
    pub steps: Vec<QuantStep>,
    /// The reciprocal-sum model fits fully-connected layers less well than
    /// convolutions; such groups are flagged in reports.
    pub fully_connected: bool,
}

impl StepGroup {
    pub fn new(name: impl Into<String>, steps: Vec<QuantStep>) -> Self {
        StepGroup {
            name: name.into(),
            steps,
            fully_connected: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPrediction {
    pub name: String,
    pub sqnr: SqnrDb,
    pub fully_connected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqnrPrediction {
    pub layers: Vec<LayerPrediction>,
    pub output: SqnrDb,
}

impl SqnrPrediction {
    pub fn get(&self, name: &str) -> Option<SqnrDb> {
        self.layers.iter().find(|l| l.name == name).map(|l| l.sqnr)
    }
}

/// Cumulative prediction after each group, in order.
pub fn predict_network_sqnr(groups: &[StepGroup]) -> Result<SqnrPrediction> {
    if groups.is_empty() {
        return Err(Error::Input("no step groups".into()));
    }
    let mut inverse = 0.0f64;
    let mut layers = Vec::with_capacity(groups.len());
    for g in groups {
        for s in &g.steps {
            inverse += 1.0 / s.predicted().linear();
        }
        let sqnr = if inverse == 0.0 {
            SqnrDb::INFINITE
        } else {
            SqnrDb::from_linear(1.0 / inverse)
        };
        layers.push(LayerPrediction {
            name: g.name.clone(),
            sqnr,
            fully_connected: g.fully_connected,
        });
    }
    let output = layers.last().map(|l| l.sqnr).expect("non-empty");
    Ok(SqnrPrediction { layers, output })
}

/// Least-squares line `sqnr ≈ slope·β + intercept`.
pub fn fit_kappa(measured: &[(u32, SqnrDb)]) -> Result<(f64, f64)> {
    let mut distinct: Vec<u32> = measured.iter().map(|m| m.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Input("need at least two distinct bit-widths".into()));
    }
    if measured.iter().any(|m| !m.1.db().is_finite()) {
        return Err(Error::Input("non-finite SQNR measurement".into()));
    }
    let n = measured.len() as f64;
    let mx = measured.iter().map(|m| m.0 as f64).sum::<f64>() / n;
    let my = measured.iter().map(|m| m.1.db()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (b, s) in measured {
        let dx = *b as f64 - mx;
        sxy += dx * (s.db() - my);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Quantization efficiency: slope of measured SQNR against bit-width.
pub fn estimate_kappa(measured: &[(u32, SqnrDb)]) -> Result<f64> {
    fit_kappa(measured).map(|(slope, _)| slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn db(v: f64) -> SqnrDb {
        SqnrDb(v)
    }

    #[test]
    fn compose_examples() {
        let c = compose_sqnr(&[db(20.0), db(20.0)]).unwrap();
        assert!((c.db() - 16.9897).abs() < 1e-3);
        assert_eq!(compose_sqnr(&[db(17.5), SqnrDb::INFINITE]).unwrap().db(), 17.5);
        assert!(compose_sqnr(&[SqnrDb::INFINITE]).unwrap().is_infinite());
        assert!(compose_sqnr(&[]).is_err());
        let four = compose_sqnr(&[db(30.0); 4]).unwrap();
        let two = compose_sqnr(&[db(30.0); 2]).unwrap();
        assert!((two.db() - four.db() - 10.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn single_layer_prediction() {
        let g = StepGroup::new(
            "l1",
            vec![
                QuantStep::new("w(1)", 10, 3.0, 1.0).unwrap(),
                QuantStep::new("a(1)", 10, 3.0, 1.0).unwrap(),
            ],
        );
        let p = predict_network_sqnr(&[g]).unwrap();
        assert!((p.output.db() - 26.9897).abs() < 1e-3);
    }

    #[test]
    fn equal_chain_strictly_decreasing() {
        let groups: Vec<StepGroup> = (1..=5)
            .map(|l| {
                StepGroup::new(
                    alloc::format!("l{l}"),
                    vec![
                        QuantStep::new("w", 8, 3.0, 1.0).unwrap(),
                        QuantStep::new("a", 8, 3.0, 1.0).unwrap(),
                    ],
                )
            })
            .collect();
        let p = predict_network_sqnr(&groups).unwrap();
        for w in p.layers.windows(2) {
            assert!(w[1].sqnr.db() < w[0].sqnr.db());
        }
        assert_eq!(p.output, p.layers[4].sqnr);
    }

    #[test]
    fn kappa_exact_line() {
        let k = estimate_kappa(&[(4, db(20.0)), (8, db(40.0))]).unwrap();
        assert!((k - 5.0).abs() < 1e-12);
        assert!(estimate_kappa(&[(4, db(20.0)), (4, db(21.0))]).is_err());
        assert!(estimate_kappa(&[]).is_err());
    }

    #[test]
    fn step_validation() {
        assert!(QuantStep::new("x", 0, 3.0, 1.0).is_err());
        assert!(QuantStep::new("x", 4, 0.0, 1.0).is_err());
        assert!(QuantStep::new("x", 4, 3.0, -1.0).is_err());
    }
}
