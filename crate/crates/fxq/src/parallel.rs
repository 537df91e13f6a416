//! Batch-level parallelism over independent forward passes.
//!
//! Results are returned (and merged) in batch order, so output does not
//! depend on the number of worker threads.

use std::collections::BTreeMap;
use std::thread;

use fxq_core::engine::{act_key, batch_stats, bias_key, forward_float, forward_quantized, weight_key, INPUT_KEY};
use fxq_core::ir::{Model, Tensor};
use fxq_core::{Error, QuantizationPlan, Result, RunningStats, SqnrDb, TensorStats};

/// Apply `f` to every item on up to `threads` scoped workers, keeping order.
pub fn map_ordered<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

pub fn default_threads() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Calibration statistics with one batch per worker; identical to the
/// sequential result.
pub fn collect_stats(model: &Model, batches: &[Tensor], threads: usize) -> Result<BTreeMap<String, TensorStats>> {
    if batches.is_empty() {
        return Err(Error::Input("empty calibration set".into()));
    }
    let partials = map_ordered(batches, threads, |b| batch_stats(model, b));
    let mut input = RunningStats::default();
    let mut acts: BTreeMap<String, RunningStats> = BTreeMap::new();
    for p in partials {
        let (i, a) = p?;
        input.merge(&i);
        for (k, s) in a {
            acts.entry(k).or_default().merge(&s);
        }
    }
    let mut out = BTreeMap::new();
    out.insert(INPUT_KEY.to_string(), input.finish()?);
    for l in model.quantizable_layers() {
        if let Some(w) = l.weight() {
            out.insert(weight_key(&l.name), TensorStats::from_values(w.data())?);
        }
        if let Some(b) = l.bias() {
            out.insert(bias_key(&l.name), TensorStats::from_values(b.data())?);
        }
    }
    for (k, s) in acts {
        out.insert(act_key(&k), s.finish()?);
    }
    Ok(out)
}

/// Signal and noise energy of one comparison, summed over batches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Energy {
    pub signal: f64,
    pub noise: f64,
}

impl Energy {
    fn add(&mut self, reference: &[f32], other: &[f32]) {
        for (&a, &b) in reference.iter().zip(other) {
            let (a, b) = (a as f64, b as f64);
            self.signal += a * a;
            self.noise += (a - b) * (a - b);
        }
    }

    pub fn sqnr(&self) -> Result<SqnrDb> {
        if self.signal == 0.0 {
            return Err(Error::ZeroSignal);
        }
        if self.noise == 0.0 {
            return Ok(SqnrDb::INFINITE);
        }
        Ok(SqnrDb::from_linear(self.signal / self.noise))
    }
}

/// Measured SQNR over all batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Pre-activation of every quantizable layer, in order.
    pub layers: Vec<(String, SqnrDb)>,
    /// Final network output.
    pub output: SqnrDb,
}

pub fn measure(model: &Model, batches: &[Tensor], plan: &QuantizationPlan, threads: usize) -> Result<Measurement> {
    if batches.is_empty() {
        return Err(Error::Input("no evaluation batches".into()));
    }
    plan.validate(model)?;
    let partials = map_ordered(batches, threads, |b| -> Result<(Vec<(String, Energy)>, Energy)> {
        let (fo, ft) = forward_float(model, b)?;
        let (qo, qt) = forward_quantized(model, b, plan)?;
        let layers = ft
            .iter()
            .zip(qt.iter())
            .map(|((name, f), (_, q))| {
                let mut e = Energy::default();
                e.add(f.data(), q.data());
                (name.to_string(), e)
            })
            .collect();
        let mut out = Energy::default();
        out.add(fo.data(), qo.data());
        Ok((layers, out))
    });
    let mut layers: Vec<(String, Energy)> = Vec::new();
    let mut output = Energy::default();
    for p in partials {
        let (ls, o) = p?;
        if layers.is_empty() {
            layers = ls;
        } else {
            for ((_, acc), (_, e)) in layers.iter_mut().zip(ls) {
                acc.signal += e.signal;
                acc.noise += e.noise;
            }
        }
        output.signal += o.signal;
        output.noise += o.noise;
    }
    Ok(Measurement {
        layers: layers
            .into_iter()
            .map(|(n, e)| e.sqnr().map(|s| (n, s)))
            .collect::<Result<_>>()?,
        output: output.sqnr()?,
    })
}
