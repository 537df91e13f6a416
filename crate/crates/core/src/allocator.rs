//! Cross-layer bit-width allocation.
//!
//! With step SQNRs `γ_i = 10^(κβ_i/10)` and cost weights `ρ_i`, minimizing
//! `Σ ρ_i β_i` subject to `Σ 1/γ_i ≤ 1/γ_min` is convex in `λ_i = 1/γ_i`. Its
//! solution keeps `ρ_i γ_i` equal across every step that is not held at a
//! bound, so the optimal widths differ by `10·log10(ρ_j/ρ_i)/κ` bits. The same
//! proportionality solves the dual form (best SQNR under a cost budget).
//!
//! Integer widths come from rounding every continuous width up and then
//! walking bits back down, largest `ρ` first, while the constraint holds.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::ir::{count_macs, count_params, Model};
use crate::quantizer::SqnrDb;
use crate::sqnr::{compose_sqnr, QuantStep, StepGroup};

/// Inclusive integer bit-width range for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitBounds {
    pub min: u32,
    pub max: u32,
}

impl BitBounds {
    pub const fn new(min: u32, max: u32) -> Self {
        BitBounds { min, max }
    }

    pub const fn pinned(bits: u32) -> Self {
        BitBounds { min: bits, max: bits }
    }

    pub fn is_pinned(&self) -> bool {
        self.min == self.max
    }
}

/// One-bit quantization is excluded from planning: the linear model breaks
/// down there.
pub const DEFAULT_BOUNDS: BitBounds = BitBounds::new(2, 16);

/// What a step quantizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Input,
    Weight,
    Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocStep {
    pub label: String,
    /// Layer the step belongs to (`input` for the network input).
    pub layer: String,
    pub kind: StepKind,
    pub rho: f64,
    pub bounds: BitBounds,
    pub fully_connected: bool,
}

impl AllocStep {
    pub fn new(label: impl Into<String>, rho: f64, bounds: BitBounds) -> Self {
        let label = label.into();
        AllocStep {
            layer: label.clone(),
            label,
            kind: StepKind::Weight,
            rho,
            bounds,
            fully_connected: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// Output SQNR must be at least this value.
    MinOutputSqnr(SqnrDb),
    /// `Σ ρ_i β_i` must not exceed this many bits.
    MaxTotalCost(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub steps: Vec<AllocStep>,
    /// Quantization efficiency, dB/bit, shared by every step.
    pub kappa: f64,
    pub constraint: Constraint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitAllocation {
    pub labels: Vec<String>,
    /// Relaxed (real-valued) widths.
    pub continuous: Vec<f64>,
    /// Integer widths.
    pub bits: Vec<u32>,
    /// `Σ ρ_i β_i` of the integer widths.
    pub total_cost: f64,
    /// `Σ ρ_i β_i` of the relaxed widths.
    pub continuous_cost: f64,
    /// Output SQNR predicted from the integer widths.
    pub predicted: SqnrDb,
}

impl BitAllocation {
    pub fn bits_of(&self, label: &str) -> Option<u32> {
        self.labels.iter().position(|l| l == label).map(|i| self.bits[i])
    }
}

/// Noise share `1/γ` of a step at `bits` bits.
#[inline]
fn inv_sqnr(kappa: f64, bits: f64) -> f64 {
    10f64.powf(-kappa * bits / 10.0)
}

fn bits_from_inv(kappa: f64, lambda: f64) -> f64 {
    -10.0 * lambda.log10() / kappa
}

const FEAS_TOL: f64 = 1e-12;

impl AllocationProblem {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Input("allocation problem has no steps".into()));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::Input(format!("kappa must be positive, got {}", self.kappa)));
        }
        for s in &self.steps {
            if s.bounds.min < 1 || s.bounds.min > s.bounds.max {
                return Err(Error::Input(format!(
                    "step `{}` has invalid bounds {}..={}",
                    s.label, s.bounds.min, s.bounds.max
                )));
            }
            if !(s.rho.is_finite() && s.rho >= 0.0) {
                return Err(Error::Input(format!("step `{}` has invalid rho {}", s.label, s.rho)));
            }
            if !s.bounds.is_pinned() && s.rho <= 0.0 {
                return Err(Error::Input(format!(
                    "step `{}` takes part in the objective but has rho = 0",
                    s.label
                )));
            }
        }
        match self.constraint {
            Constraint::MinOutputSqnr(t) if !t.db().is_finite() => {
                Err(Error::Input(format!("SQNR target must be finite, got {}", t.db())))
            }
            Constraint::MaxTotalCost(b) if !(b.is_finite() && b >= 0.0) => {
                Err(Error::Input(format!("cost budget must be finite, got {b}")))
            }
            _ => Ok(()),
        }
    }

    /// Noise budget `1/γ_min` of the SQNR constraint.
    fn noise_budget(&self) -> Option<f64> {
        match self.constraint {
            Constraint::MinOutputSqnr(t) => Some(1.0 / t.linear()),
            Constraint::MaxTotalCost(_) => None,
        }
    }

    pub fn cost(&self, bits: &[f64]) -> f64 {
        self.steps.iter().zip(bits).map(|(s, b)| s.rho * b).sum()
    }

    fn int_cost(&self, bits: &[u32]) -> f64 {
        self.steps.iter().zip(bits).map(|(s, &b)| s.rho * b as f64).sum()
    }

    fn noise(&self, bits: &[u32]) -> f64 {
        bits.iter().map(|&b| inv_sqnr(self.kappa, b as f64)).sum()
    }

    /// Predicted output SQNR (harmonic composition of `κ·β` per step).
    pub fn predicted_sqnr(&self, bits: &[u32]) -> SqnrDb {
        let per_step: Vec<SqnrDb> = bits.iter().map(|&b| SqnrDb(self.kappa * b as f64)).collect();
        compose_sqnr(&per_step).expect("non-empty")
    }

    /// Does an integer assignment satisfy the active constraint?
    pub fn is_feasible(&self, bits: &[u32]) -> bool {
        let in_bounds = self
            .steps
            .iter()
            .zip(bits)
            .all(|(s, &b)| b >= s.bounds.min && b <= s.bounds.max);
        in_bounds
            && match self.constraint {
                Constraint::MinOutputSqnr(_) => {
                    let budget = self.noise_budget().expect("sqnr constraint");
                    self.noise(bits) <= budget * (1.0 + FEAS_TOL)
                }
                Constraint::MaxTotalCost(b) => self.int_cost(bits) <= b * (1.0 + FEAS_TOL),
            }
    }

    fn finish(&self, continuous: Vec<f64>, bits: Vec<u32>) -> BitAllocation {
        BitAllocation {
            labels: self.steps.iter().map(|s| s.label.clone()).collect(),
            continuous_cost: self.cost(&continuous),
            total_cost: self.int_cost(&bits),
            predicted: self.predicted_sqnr(&bits),
            continuous,
            bits,
        }
    }

    /// Same steps under a different constraint.
    pub fn with_constraint(&self, constraint: Constraint) -> Self {
        AllocationProblem {
            constraint,
            ..self.clone()
        }
    }
}

/// Relaxed solution: `λ_i = clamp(ρ_i·t, λ(max_i), λ(min_i))` with the water
/// level `t` chosen so the active constraint holds with equality.
fn solve_continuous(problem: &AllocationProblem) -> Result<Vec<f64>> {
    let kappa = problem.kappa;
    let lo: Vec<f64> = problem.steps.iter().map(|s| inv_sqnr(kappa, s.bounds.max as f64)).collect();
    let hi: Vec<f64> = problem.steps.iter().map(|s| inv_sqnr(kappa, s.bounds.min as f64)).collect();
    let free: Vec<bool> = problem.steps.iter().map(|s| !s.bounds.is_pinned()).collect();
    let level = |t: f64| -> Vec<f64> {
        problem
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| if free[i] { (s.rho * t).clamp(lo[i], hi[i]) } else { hi[i] })
            .collect()
    };

    let max_bits: Vec<u32> = problem.steps.iter().map(|s| s.bounds.max).collect();
    let min_bits: Vec<u32> = problem.steps.iter().map(|s| s.bounds.min).collect();

    // g(t) increasing in t for the SQNR form, decreasing for the cost form;
    // `excess(t) > 0` means t is too large.
    let excess: &dyn Fn(&[f64]) -> f64;
    let sqnr_excess;
    let cost_excess;
    match problem.constraint {
        Constraint::MinOutputSqnr(target) => {
            let budget = 1.0 / target.linear();
            if problem.noise(&max_bits) > budget * (1.0 + FEAS_TOL) {
                return Err(infeasible_sqnr(problem, target, &max_bits));
            }
            if problem.noise(&min_bits) <= budget {
                return Ok(min_bits.iter().map(|&b| b as f64).collect());
            }
            sqnr_excess = move |l: &[f64]| l.iter().sum::<f64>() - budget;
            excess = &sqnr_excess;
        }
        Constraint::MaxTotalCost(budget) => {
            let floor = problem.int_cost(&min_bits);
            if floor > budget * (1.0 + FEAS_TOL) {
                let (worst, _) = problem
                    .steps
                    .iter()
                    .enumerate()
                    .max_by(|a, b| (a.1.rho * a.1.bounds.min as f64).total_cmp(&(b.1.rho * b.1.bounds.min as f64)))
                    .expect("non-empty");
                return Err(Error::Infeasible(format!(
                    "cost budget {budget} below the {floor} bits needed with every step at its minimum; \
                     binding bound: `{}` min = {}",
                    problem.steps[worst].label, problem.steps[worst].bounds.min
                )));
            }
            if problem.int_cost(&max_bits) <= budget {
                return Ok(max_bits.iter().map(|&b| b as f64).collect());
            }
            cost_excess = move |l: &[f64]| {
                let bits: Vec<f64> = l.iter().map(|&x| bits_from_inv(kappa, x)).collect();
                budget - problem.cost(&bits)
            };
            excess = &cost_excess;
        }
    }

    // bracket the water level in log space
    let mut log_lo = f64::INFINITY;
    let mut log_hi = f64::NEG_INFINITY;
    for (i, s) in problem.steps.iter().enumerate() {
        if free[i] {
            log_lo = log_lo.min((lo[i] / s.rho).ln());
            log_hi = log_hi.max((hi[i] / s.rho).ln());
        }
    }
    log_lo -= 1.0;
    log_hi += 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (log_lo + log_hi);
        if excess(&level(mid.exp())) > 0.0 {
            log_hi = mid;
        } else {
            log_lo = mid;
        }
    }
    let t = (0.5 * (log_lo + log_hi)).exp();

    // exact water level over the steps strictly inside their bounds
    let lambdas = level(t);
    let open: Vec<bool> = (0..lambdas.len())
        .map(|i| free[i] && lambdas[i] > lo[i] && lambdas[i] < hi[i])
        .collect();
    let mut bits: Vec<f64> = lambdas.iter().map(|&l| bits_from_inv(kappa, l)).collect();
    for (i, s) in problem.steps.iter().enumerate() {
        if !open[i] {
            // snap clamped steps to their exact bound
            bits[i] = if lambdas[i] >= hi[i] { s.bounds.min as f64 } else { s.bounds.max as f64 };
        }
    }
    let rho_open: f64 = problem.steps.iter().zip(&open).filter(|(_, &o)| o).map(|(s, _)| s.rho).sum();
    if rho_open > 0.0 {
        match problem.constraint {
            Constraint::MinOutputSqnr(target) => {
                let budget = 1.0 / target.linear();
                let closed: f64 = (0..bits.len()).filter(|&i| !open[i]).map(|i| inv_sqnr(kappa, bits[i])).sum();
                let t_exact = (budget - closed) / rho_open;
                for (i, s) in problem.steps.iter().enumerate() {
                    if open[i] {
                        bits[i] = bits_from_inv(kappa, s.rho * t_exact);
                    }
                }
            }
            Constraint::MaxTotalCost(budget) => {
                let closed: f64 = (0..bits.len()).filter(|&i| !open[i]).map(|i| problem.steps[i].rho * bits[i]).sum();
                let weighted_log: f64 = problem
                    .steps
                    .iter()
                    .zip(&open)
                    .filter(|(_, &o)| o)
                    .map(|(s, _)| s.rho * s.rho.log10())
                    .sum();
                // Σ_open ρ_i·(-10/κ)(log10 ρ_i + log10 t) = budget - closed
                let log_t = (-(budget - closed) * kappa / 10.0 - weighted_log) / rho_open;
                for (i, s) in problem.steps.iter().enumerate() {
                    if open[i] {
                        bits[i] = -10.0 * (s.rho.log10() + log_t) / kappa;
                    }
                }
            }
        }
    }
    Ok(bits)
}

fn infeasible_sqnr(problem: &AllocationProblem, target: SqnrDb, max_bits: &[u32]) -> Error {
    let best = problem.predicted_sqnr(max_bits);
    // the step contributing the most noise at its maximum is the binding bound
    let worst = max_bits
        .iter()
        .enumerate()
        .min_by_key(|(_, &b)| b)
        .map(|(i, _)| i)
        .expect("non-empty");
    Error::Infeasible(format!(
        "target {target} dB unreachable: every step at its maximum gives {best} dB; \
         binding bound: `{}` max = {}",
        problem.steps[worst].label, max_bits[worst]
    ))
}

/// Closed-form water-filling allocation followed by integer repair.
pub fn solve_waterfilling(problem: &AllocationProblem) -> Result<BitAllocation> {
    problem.validate()?;
    let continuous = solve_continuous(problem)?;
    let bits = match problem.constraint {
        Constraint::MinOutputSqnr(_) => round_for_sqnr(problem, &continuous)?,
        Constraint::MaxTotalCost(_) => round_for_cost(problem, &continuous)?,
    };
    Ok(problem.finish(continuous, bits))
}

/// Round up, greedily give back bits from the most expensive steps, then
/// improve by single-bit exchanges until no exchange lowers the cost.
fn round_for_sqnr(problem: &AllocationProblem, continuous: &[f64]) -> Result<Vec<u32>> {
    let mut bits: Vec<u32> = problem
        .steps
        .iter()
        .zip(continuous)
        .map(|(s, &b)| ((b - 1e-9).ceil().max(0.0) as u32).clamp(s.bounds.min, s.bounds.max))
        .collect();
    if !problem.is_feasible(&bits) {
        return Err(Error::Infeasible("rounded allocation violates the SQNR target".into()));
    }
    let mut order: Vec<usize> = (0..bits.len()).collect();
    order.sort_by(|&a, &b| problem.steps[b].rho.total_cmp(&problem.steps[a].rho).then(a.cmp(&b)));
    give_back(problem, &order, &mut bits, None);
    loop {
        let cost = problem.int_cost(&bits);
        let mut improved = false;
        for i in 0..bits.len() {
            let step = &problem.steps[i];
            if step.rho <= 0.0 || bits[i] >= step.bounds.max {
                continue;
            }
            let mut trial = bits.clone();
            trial[i] += 1;
            give_back(problem, &order, &mut trial, Some(i));
            if problem.int_cost(&trial) < cost - FEAS_TOL * cost.max(1.0) {
                bits = trial;
                improved = true;
                break;
            }
        }
        if !improved {
            return Ok(bits);
        }
    }
}

/// Decrement steps, most expensive first, while the target still holds.
/// `keep` is left untouched.
fn give_back(problem: &AllocationProblem, order: &[usize], bits: &mut [u32], keep: Option<usize>) {
    'outer: loop {
        for &i in order {
            if Some(i) == keep || problem.steps[i].rho <= 0.0 || bits[i] <= problem.steps[i].bounds.min {
                continue;
            }
            bits[i] -= 1;
            if problem.is_feasible(bits) {
                continue 'outer;
            }
            bits[i] += 1;
        }
        break;
    }
}

/// Round down, then greedily spend leftover budget where it buys the most
/// noise reduction per unit cost.
fn round_for_cost(problem: &AllocationProblem, continuous: &[f64]) -> Result<Vec<u32>> {
    let Constraint::MaxTotalCost(budget) = problem.constraint else {
        unreachable!("cost rounding under a cost constraint");
    };
    let kappa = problem.kappa;
    let mut bits: Vec<u32> = problem
        .steps
        .iter()
        .zip(continuous)
        .map(|(s, &b)| ((b + 1e-9).floor().max(0.0) as u32).clamp(s.bounds.min, s.bounds.max))
        .collect();
    loop {
        let spent = problem.int_cost(&bits);
        let best = problem
            .steps
            .iter()
            .enumerate()
            .filter(|(i, s)| bits[*i] < s.bounds.max && spent + s.rho <= budget * (1.0 + FEAS_TOL))
            .map(|(i, s)| {
                let gain = inv_sqnr(kappa, bits[i] as f64) - inv_sqnr(kappa, bits[i] as f64 + 1.0);
                (i, if s.rho > 0.0 { gain / s.rho } else { f64::INFINITY })
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((i, _)) => bits[i] += 1,
            None => break,
        }
    }
    Ok(bits)
}

/// Integer offsets of every step relative to the first:
/// `round(10·log10(ρ_0/ρ_i)/κ)`, nearest integer with ties toward zero.
pub fn relative_bitwidths(rhos: &[f64], kappa: f64) -> Result<Vec<i32>> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::Input(format!("kappa must be positive, got {kappa}")));
    }
    if rhos.is_empty() {
        return Err(Error::Input("no cost weights".into()));
    }
    if let Some(bad) = rhos.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Input(format!("cost weights must be positive, got {bad}")));
    }
    let base = rhos[0];
    Ok(rhos
        .iter()
        .map(|&r| round_half_toward_zero(10.0 * (base / r).log10() / kappa))
        .collect())
}

fn round_half_toward_zero(x: f64) -> i32 {
    let mag = x.abs();
    let whole = mag.floor();
    let r = if mag - whole > 0.5 { whole + 1.0 } else { whole };
    (r as i32) * if x < 0.0 { -1 } else { 1 }
}

/// Maximum number of steps the exhaustive oracle accepts.
pub const EXHAUSTIVE_MAX_STEPS: usize = 8;
/// Maximum `hi - lo` of the exhaustive oracle's bit range.
pub const EXHAUSTIVE_MAX_WIDTH: u32 = 12;

/// Brute-force optimum over every integer assignment in `range`
/// (intersected with each step's bounds). Under an SQNR constraint this is
/// the cheapest feasible assignment; under a cost budget, the highest-SQNR
/// one. Ties go to the lexicographically smallest assignment.
pub fn exhaustive_allocate(problem: &AllocationProblem, range: core::ops::RangeInclusive<u32>) -> Result<BitAllocation> {
    problem.validate()?;
    let (lo, hi) = (*range.start(), *range.end());
    if problem.steps.len() > EXHAUSTIVE_MAX_STEPS || hi < lo || hi - lo > EXHAUSTIVE_MAX_WIDTH {
        return Err(Error::GuardExceeded(format!(
            "{} steps over {lo}..={hi}; limit is {EXHAUSTIVE_MAX_STEPS} steps and width {EXHAUSTIVE_MAX_WIDTH}",
            problem.steps.len()
        )));
    }
    let mut ranges = Vec::with_capacity(problem.steps.len());
    for s in &problem.steps {
        let (a, b) = (s.bounds.min.max(lo), s.bounds.max.min(hi));
        if a > b {
            return Err(Error::Infeasible(format!(
                "step `{}` bounds {}..={} do not meet search range {lo}..={hi}",
                s.label, s.bounds.min, s.bounds.max
            )));
        }
        ranges.push((a, b));
    }
    let mut bits: Vec<u32> = ranges.iter().map(|r| r.0).collect();
    let mut best: Option<(Vec<u32>, f64, f64)> = None;
    loop {
        if problem.is_feasible(&bits) {
            let cost = problem.int_cost(&bits);
            let noise = problem.noise(&bits);
            let better = match &best {
                None => true,
                Some((_, bc, bn)) => match problem.constraint {
                    Constraint::MinOutputSqnr(_) => cost < *bc && !approx_eq(cost, *bc),
                    Constraint::MaxTotalCost(_) => {
                        (noise < *bn && !approx_eq(noise, *bn)) || (approx_eq(noise, *bn) && cost < *bc && !approx_eq(cost, *bc))
                    }
                },
            };
            // odometer order is lexicographic, so ties keep the earlier one
            if better {
                best = Some((bits.clone(), cost, noise));
            }
        }
        // advance the odometer (last index fastest)
        let mut i = bits.len();
        loop {
            if i == 0 {
                let (bits, _, _) = best.ok_or_else(|| {
                    Error::Infeasible(format!("no assignment in {lo}..={hi} satisfies the constraint"))
                })?;
                let continuous = bits.iter().map(|&b| b as f64).collect();
                return Ok(problem.finish(continuous, bits));
            }
            i -= 1;
            if bits[i] < ranges[i].1 {
                bits[i] += 1;
                for j in i + 1..bits.len() {
                    bits[j] = ranges[j].0;
                }
                break;
            }
        }
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Every free step at one shared integer width (pinned steps unchanged):
/// the smallest width meeting an SQNR target, or the largest width within a
/// cost budget.
pub fn equal_allocate(problem: &AllocationProblem) -> Result<BitAllocation> {
    problem.validate()?;
    let lo = problem.steps.iter().map(|s| s.bounds.min).min().expect("non-empty");
    let hi = problem.steps.iter().map(|s| s.bounds.max).max().expect("non-empty");
    let at = |b: u32| -> Vec<u32> { problem.steps.iter().map(|s| b.clamp(s.bounds.min, s.bounds.max)).collect() };
    let found = match problem.constraint {
        Constraint::MinOutputSqnr(_) => (lo..=hi).map(at).find(|bits| problem.is_feasible(bits)),
        Constraint::MaxTotalCost(_) => (lo..=hi).rev().map(at).find(|bits| problem.is_feasible(bits)),
    };
    match found {
        Some(bits) => {
            let continuous = bits.iter().map(|&b| b as f64).collect();
            Ok(problem.finish(continuous, bits))
        }
        None => Err(match problem.constraint {
            Constraint::MinOutputSqnr(target) => {
                let max_bits: Vec<u32> = problem.steps.iter().map(|s| s.bounds.max).collect();
                infeasible_sqnr(problem, target, &max_bits)
            }
            Constraint::MaxTotalCost(budget) => Error::Infeasible(format!(
                "cost budget {budget} below the {} bits of the narrowest equal-width assignment",
                problem.int_cost(&at(lo))
            )),
        }),
    }
}

/// Optimized and equal-width allocations at one SQNR target.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub target: SqnrDb,
    pub optimized: Result<BitAllocation>,
    pub equal: Result<BitAllocation>,
}

impl SweepRow {
    /// Relative saving of the optimized policy, when both are feasible.
    pub fn cost_gap(&self) -> Option<f64> {
        match (&self.optimized, &self.equal) {
            (Ok(o), Ok(e)) if e.total_cost > 0.0 => Some((e.total_cost - o.total_cost) / e.total_cost),
            _ => None,
        }
    }
}

/// Allocate at every target with both policies. Infeasible targets stay in
/// the output with their error.
pub fn sweep_tradeoff(template: &AllocationProblem, targets: &[SqnrDb]) -> Result<Vec<SweepRow>> {
    if targets.windows(2).any(|w| w[1].db() < w[0].db()) {
        return Err(Error::Input("sweep targets must be sorted ascending".into()));
    }
    Ok(targets
        .iter()
        .map(|&t| {
            let p = template.with_constraint(Constraint::MinOutputSqnr(t));
            SweepRow {
                target: t,
                optimized: solve_waterfilling(&p),
                equal: equal_allocate(&p),
            }
        })
        .collect())
}

/// What the cost weights measure when building a problem from a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostModel {
    /// ρ = parameter count; activations pinned since they do not affect
    /// storage.
    ModelSize,
    /// ρ = multiply-accumulates; a layer's activations are charged the MACs of
    /// the layer that consumes them.
    ComputeLoad,
}

#[derive(Debug, Clone)]
pub struct ModelProblemOptions {
    pub cost: CostModel,
    pub kappa: f64,
    pub bounds: BitBounds,
    /// Pin fully-connected weights (and their activations in compute mode)
    /// at this width; `None` lets them take part in the optimization.
    pub fc_bits: Option<u32>,
    /// Width of pinned activation steps.
    pub act_bits: u32,
    /// Include the network input as a pinned step of this width.
    pub input_bits: Option<u32>,
}

impl Default for ModelProblemOptions {
    fn default() -> Self {
        ModelProblemOptions {
            cost: CostModel::ModelSize,
            kappa: crate::sqnr::DEFAULT_KAPPA_NETWORK,
            bounds: DEFAULT_BOUNDS,
            fc_bits: Some(16),
            act_bits: 16,
            input_bits: None,
        }
    }
}

pub fn weight_label(layer: &str) -> String {
    format!("w({layer})")
}

pub fn act_label(layer: &str) -> String {
    format!("a({layer})")
}

pub const INPUT_LABEL: &str = "a(input)";

/// Build the allocation problem for a model: one weight step and one
/// activation step per quantizable layer, plus an optional input step.
pub fn model_problem(model: &Model, opts: &ModelProblemOptions, constraint: Constraint) -> Result<AllocationProblem> {
    let params = count_params(model);
    let macs = count_macs(model);
    let fc: Vec<bool> = model.quantizable_layers().map(|l| l.kind.is_fully_connected()).collect();
    if params.is_empty() {
        return Err(Error::Input("model has no quantizable layers".into()));
    }
    let mut steps = Vec::new();
    if let Some(b) = opts.input_bits {
        let rho = match opts.cost {
            CostModel::ModelSize => 0.0,
            CostModel::ComputeLoad => macs[0].1 as f64,
        };
        steps.push(AllocStep {
            label: INPUT_LABEL.into(),
            layer: crate::engine::INPUT_KEY.into(),
            kind: StepKind::Input,
            rho,
            bounds: BitBounds::pinned(b),
            fully_connected: false,
        });
    }
    for (i, (name, count)) in params.iter().enumerate() {
        let pinned_fc = fc[i].then_some(opts.fc_bits).flatten();
        let w_rho = match opts.cost {
            CostModel::ModelSize => *count as f64,
            CostModel::ComputeLoad => macs[i].1 as f64,
        };
        steps.push(AllocStep {
            label: weight_label(name),
            layer: name.clone(),
            kind: StepKind::Weight,
            rho: w_rho,
            bounds: pinned_fc.map_or(opts.bounds, BitBounds::pinned),
            fully_connected: fc[i],
        });
        let (a_rho, a_bounds) = match opts.cost {
            CostModel::ModelSize => (0.0, BitBounds::pinned(opts.act_bits)),
            CostModel::ComputeLoad => match macs.get(i + 1) {
                Some((_, m)) if pinned_fc.is_none() && !(fc[i + 1] && opts.fc_bits.is_some()) => {
                    (*m as f64, opts.bounds)
                }
                _ => (0.0, BitBounds::pinned(pinned_fc.unwrap_or(opts.act_bits))),
            },
        };
        steps.push(AllocStep {
            label: act_label(name),
            layer: name.clone(),
            kind: StepKind::Activation,
            rho: a_rho,
            bounds: a_bounds,
            fully_connected: fc[i],
        });
    }
    let problem = AllocationProblem {
        steps,
        kappa: opts.kappa,
        constraint,
    };
    problem.validate()?;
    Ok(problem)
}

/// Group the steps of an allocation by layer for SQNR prediction.
pub fn prediction_groups(problem: &AllocationProblem, bits: &[u32]) -> Result<Vec<StepGroup>> {
    let mut groups: Vec<StepGroup> = Vec::new();
    for (s, &b) in problem.steps.iter().zip(bits) {
        let step = QuantStep::new(s.label.clone(), b, problem.kappa, s.rho)?;
        match groups.last_mut() {
            Some(g) if g.name == s.layer => g.steps.push(step),
            _ => {
                let mut g = StepGroup::new(s.layer.clone(), vec![step]);
                g.fully_connected = s.fully_connected;
                groups.push(g);
            }
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rhos: &[f64], kappa: f64, target: f64) -> AllocationProblem {
        AllocationProblem {
            steps: rhos
                .iter()
                .enumerate()
                .map(|(i, &r)| AllocStep::new(format!("s{i}"), r, BitBounds::new(1, 40)))
                .collect(),
            kappa,
            constraint: Constraint::MinOutputSqnr(SqnrDb(target)),
        }
    }

    #[test]
    fn two_steps_differ_by_one_bit() {
        let p = problem(&[1.0, 2.0], 10.0 * 2f64.log10(), 30.0);
        let a = solve_waterfilling(&p).unwrap();
        assert!((a.continuous[0] - a.continuous[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_rho_equal_bits() {
        let p = problem(&[5.0; 4], 3.0, 35.0);
        let a = solve_waterfilling(&p).unwrap();
        for b in &a.continuous {
            assert!((b - a.continuous[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn integer_solution_feasible() {
        let p = problem(&[1.0, 7.0, 40.0, 3.0], 3.0, 25.0);
        let a = solve_waterfilling(&p).unwrap();
        assert!(p.is_feasible(&a.bits));
        assert!(a.predicted.db() >= 25.0 - 1e-9);
        assert!(a.total_cost >= a.continuous_cost - 1e-9);
    }

    #[test]
    fn infeasible_names_bound() {
        let mut p = problem(&[1.0, 2.0], 3.0, 60.0);
        for s in &mut p.steps {
            s.bounds = BitBounds::new(2, 8);
        }
        let err = solve_waterfilling(&p).unwrap_err();
        match err {
            Error::Infeasible(msg) => assert!(msg.contains("max = 8"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slack_target_sits_at_minimum() {
        let mut p = problem(&[1.0, 2.0], 3.0, 1.0);
        for s in &mut p.steps {
            s.bounds = BitBounds::new(2, 8);
        }
        let a = solve_waterfilling(&p).unwrap();
        assert_eq!(a.bits, vec![2, 2]);
    }

    #[test]
    fn pinned_steps_respected() {
        let mut p = problem(&[10.0, 20.0, 0.0], 3.0, 20.0);
        p.steps[2].bounds = BitBounds::pinned(16);
        let a = solve_waterfilling(&p).unwrap();
        assert_eq!(a.bits[2], 16);
        assert_eq!(a.continuous[2], 16.0);
    }

    #[test]
    fn zero_rho_free_step_rejected() {
        let p = problem(&[1.0, 0.0], 3.0, 20.0);
        assert!(matches!(solve_waterfilling(&p), Err(Error::Input(_))));
    }

    #[test]
    fn cost_budget_form() {
        let mut p = problem(&[1.0, 4.0, 16.0], 3.0, 0.0);
        p.constraint = Constraint::MaxTotalCost(21.0 * 6.0);
        let a = solve_waterfilling(&p).unwrap();
        assert!((a.continuous_cost - 126.0).abs() < 1e-9);
        // same proportionality as the SQNR form
        let d01 = a.continuous[0] - a.continuous[1];
        assert!((d01 - 10.0 * 4f64.log10() / 3.0).abs() < 1e-9);
        assert!(a.total_cost <= 126.0);
        p.constraint = Constraint::MaxTotalCost(1.0);
        assert!(matches!(solve_waterfilling(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn relative_offsets_rounding() {
        assert_eq!(round_half_toward_zero(5.42), 5);
        assert_eq!(round_half_toward_zero(7.87), 8);
        assert_eq!(round_half_toward_zero(-2.5), -2);
        assert_eq!(round_half_toward_zero(2.5), 2);
        assert_eq!(round_half_toward_zero(-2.51), -3);
        assert_eq!(relative_bitwidths(&[3.0; 4], 3.0).unwrap(), vec![0; 4]);
        assert!(relative_bitwidths(&[1.0, 0.0], 3.0).is_err());
        assert!(relative_bitwidths(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn exhaustive_single_step() {
        let mut p = problem(&[1.0], 3.0, 21.0);
        p.steps[0].bounds = BitBounds::new(2, 12);
        let a = exhaustive_allocate(&p, 2..=12).unwrap();
        assert_eq!(a.bits, vec![7]);
    }

    #[test]
    fn exhaustive_symmetric() {
        let p = problem(&[3.0, 3.0], 3.0, 27.0);
        let a = exhaustive_allocate(&p, 2..=12).unwrap();
        assert_eq!(a.bits[0].abs_diff(a.bits[1]) <= 1, true);
        assert!(p.is_feasible(&a.bits));
        // (9, 11) and (10, 10) cost the same; the lexicographically smaller wins
        let p = problem(&[3.0, 3.0], 3.0, 26.0);
        let a = exhaustive_allocate(&p, 2..=12).unwrap();
        assert_eq!(a.bits, vec![9, 11]);
        assert_eq!(a.total_cost, 60.0);
    }

    #[test]
    fn exhaustive_guard() {
        let p = problem(&[1.0; 9], 3.0, 20.0);
        assert!(matches!(exhaustive_allocate(&p, 2..=5), Err(Error::GuardExceeded(_))));
        let p = problem(&[1.0; 2], 3.0, 20.0);
        assert!(matches!(exhaustive_allocate(&p, 2..=15), Err(Error::GuardExceeded(_))));
        let p = problem(&[1.0; 2], 3.0, 90.0);
        assert!(matches!(exhaustive_allocate(&p, 2..=10), Err(Error::Infeasible(_))));
    }

    #[test]
    fn sweep_single_step_policies_match() {
        let mut p = problem(&[100.0], 3.0, 0.0);
        p.steps[0].bounds = DEFAULT_BOUNDS;
        let targets: Vec<SqnrDb> = (4..12).map(|t| SqnrDb(t as f64 * 3.5)).collect();
        for row in sweep_tradeoff(&p, &targets).unwrap() {
            assert_eq!(row.optimized.unwrap().bits, row.equal.unwrap().bits);
        }
        assert!(sweep_tradeoff(&p, &[SqnrDb(10.0), SqnrDb(5.0)]).is_err());
        assert!(sweep_tradeoff(&p, &[]).unwrap().is_empty());
    }

    #[test]
    fn equal_policy_under_budget() {
        let mut p = problem(&[10.0, 30.0], 3.0, 0.0);
        p.constraint = Constraint::MaxTotalCost(40.0 * 7.5);
        assert_eq!(equal_allocate(&p).unwrap().bits, vec![7, 7]);
        p.constraint = Constraint::MaxTotalCost(10.0);
        assert!(matches!(equal_allocate(&p), Err(Error::Infeasible(_))));
        let p = problem(&[10.0, 30.0], 3.0, 24.0);
        let a = equal_allocate(&p).unwrap();
        assert_eq!(a.bits, vec![10, 10]);
    }
}
