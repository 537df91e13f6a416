//! Acceptance criteria 1–11. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fxq::fixtures::{self, ChainConfig};
use fxq::stepscan::{optimal_step, sample_magnitudes, sample_signed};
use fxq_core::allocator::{
    equal_allocate, exhaustive_allocate, model_problem, relative_bitwidths, solve_waterfilling, sweep_tradeoff,
    AllocStep, AllocationProblem, BitBounds, Constraint, ModelProblemOptions,
};
use fxq_core::engine::{collect_stats, derive_plan, forward_float, forward_quantized, relative_deviation, PlanSpec};
use fxq_core::ir::{count_params, fold_batchnorm, Model};
use fxq_core::quantizer::{measure_sqnr, optimal_step_size, quantize, MidriseQuantizer, QFormat};
use fxq_core::sqnr::{compose_sqnr, estimate_kappa, predict_network_sqnr, QuantStep, StepGroup, DEFAULT_KAPPA_GAUSSIAN};
use fxq_core::{Distribution, SqnrDb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.3} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn conv_rhos(model: &Model) -> Vec<f64> {
    count_params(model)
        .into_iter()
        .filter(|(n, _)| n.starts_with("conv"))
        .map(|(_, c)| c as f64)
        .collect()
}

fn cifar_offsets() -> Outcome {
    let model = fixtures::cifar(1).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let offsets = relative_bitwidths(&conv_rhos(&model), 3.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let expected = vec![0, -5, -5, -6, -6, -8];
    check(offsets == expected, format!("offsets {offsets:?}, expected {expected:?}"))
        .and_then(|d| within(elapsed, Duration::from_secs(1), d))
}

fn imagenet_offsets() -> Outcome {
    let model = fixtures::alexnet(1).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let offsets = relative_bitwidths(&conv_rhos(&model), 3.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let expected = vec![0, -5, -4, -5, -4];
    check(offsets == expected, format!("offsets {offsets:?}, expected {expected:?}"))
        .and_then(|d| within(elapsed, Duration::from_secs(1), d))
}

fn step_optimality() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    for (i, dist) in Distribution::ALL.into_iter().enumerate() {
        let mags = sample_magnitudes(dist, 1_000_000, 100 + i as u64);
        for bits in 1..=4 {
            let found = optimal_step(&mags, bits);
            let table = optimal_step_size(dist, bits).unwrap();
            let rel = (found / table - 1.0).abs();
            if rel > worst.0 {
                worst = (rel, format!("{dist} β={bits}: {found:.4} vs {table}"));
            }
        }
    }
    check(worst.0 < 0.02, format!("worst deviation {:.2}% ({})", 100.0 * worst.0, worst.1))
        .and_then(|d| within(start.elapsed(), Duration::from_secs(120), d))
}

fn slope(dist: Distribution, xs: &[f64]) -> f64 {
    let points: Vec<(u32, SqnrDb)> = (2..=8)
        .map(|b| {
            let q = MidriseQuantizer::optimal(dist, b, 1.0).unwrap();
            let y: Vec<f64> = xs.iter().map(|&x| q.quantize_value(x)).collect();
            (b, measure_sqnr(xs, &y).unwrap())
        })
        .collect();
    estimate_kappa(&points).unwrap()
}

fn efficiency_slopes() -> Outcome {
    let start = Instant::now();
    let gauss = sample_signed(Distribution::Gaussian, 1_000_000, 11);
    let uni = sample_signed(Distribution::Uniform, 1_000_000, 12);
    let (kg, ku) = (slope(Distribution::Gaussian, &gauss), slope(Distribution::Uniform, &uni));
    check(
        (kg - 5.0).abs() <= 1.0 && (ku - 6.02).abs() <= 0.5,
        format!("Gaussian {kg:.3} dB/bit (5.0 ± 1.0), uniform {ku:.3} dB/bit (6.02 ± 0.5)"),
    )
    .and_then(|d| within(start.elapsed(), Duration::from_secs(60), d))
}

fn composition() -> Outcome {
    let db = |v: &[f64]| compose_sqnr(&v.iter().map(|&x| SqnrDb(x)).collect::<Vec<_>>()).unwrap().db();
    let pair = db(&[20.0, 20.0]);
    let loss = db(&[30.0; 4]) - db(&[30.0; 8]);
    // eight steps one bit wider at κ = 3 against the original four
    let recovered = db(&[33.0; 8]) - db(&[30.0; 4]);
    check(
        (pair - 16.99).abs() <= 0.01 && (loss - 3.01).abs() <= 0.01 && recovered.abs() <= 0.1,
        format!("[20,20] → {pair:.4} dB; doubling loses {loss:.4} dB; +1 bit recovers to {recovered:+.4} dB"),
    )
}

fn random_problem(rng: &mut ChaCha20Rng, steps: usize, bounds: BitBounds, target: f64) -> AllocationProblem {
    AllocationProblem {
        steps: (0..steps)
            .map(|i| AllocStep::new(format!("s{i}"), 10f64.powf(rng.random_range(0.0..6.0)), bounds))
            .collect(),
        kappa: 3.0,
        constraint: Constraint::MinOutputSqnr(SqnrDb(target)),
    }
}

fn kkt() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let (mut worst_eq, mut worst_c) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let target = rng.random_range(10.0..60.0);
        let p = random_problem(&mut rng, 6, BitBounds::new(1, 64), target);
        let a = solve_waterfilling(&p).map_err(|e| e.to_string())?;
        let prod: Vec<f64> = p
            .steps
            .iter()
            .zip(&a.continuous)
            .map(|(s, b)| s.rho * 10f64.powf(p.kappa * b / 10.0))
            .collect();
        let mean = prod.iter().sum::<f64>() / prod.len() as f64;
        for x in &prod {
            worst_eq = worst_eq.max((x / mean - 1.0).abs());
        }
        let noise: f64 = a.continuous.iter().map(|b| 10f64.powf(-p.kappa * b / 10.0)).sum();
        worst_c = worst_c.max((noise * SqnrDb(target).linear() - 1.0).abs());
    }
    check(
        worst_eq <= 1e-9 && worst_c <= 1e-9,
        format!("max relative spread of ρ·γ {worst_eq:.2e}, max constraint residual {worst_c:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (mut solved, mut worst_excess) = (0usize, 0.0f64);
    for i in 0..50 {
        let n = rng.random_range(1..=5);
        let mut p = random_problem(&mut rng, n, BitBounds::new(2, 10), 0.0);
        // target between the all-minimum and all-maximum predictions
        let lo = p.predicted_sqnr(&vec![2; n]).db();
        let hi = p.predicted_sqnr(&vec![10; n]).db();
        p.constraint = Constraint::MinOutputSqnr(SqnrDb(rng.random_range(lo..hi)));
        let oracle = exhaustive_allocate(&p, 2..=10).map_err(|e| format!("problem {i}: {e}"))?;
        let fill = solve_waterfilling(&p).map_err(|e| format!("problem {i}: {e}"))?;
        let max_rho = p.steps.iter().map(|s| s.rho).fold(0.0, f64::max);
        let excess = fill.total_cost - oracle.total_cost;
        if excess < -1e-9 || excess > max_rho + 1e-9 {
            return Err(format!("problem {i}: water-filling {} vs oracle {} (max ρ {max_rho})", fill.total_cost, oracle.total_cost));
        }
        worst_excess = worst_excess.max(excess / max_rho);
        solved += 1;
    }
    within(
        start.elapsed(),
        Duration::from_secs(120),
        format!("{solved} problems; worst excess {worst_excess:.3}·max ρ"),
    )
}

fn prediction_trend() -> Outcome {
    let start = Instant::now();
    let model = fixtures::gaussian_chain(8, &ChainConfig::default()).map_err(|e| e.to_string())?;
    let batch = fixtures::gaussian_batch(model.input_shape(), 8, 80);
    let stats = collect_stats(&model, std::slice::from_ref(&batch)).map_err(|e| e.to_string())?;
    // β0 = 16 with the conv1..conv5 offsets of the CIFAR allocation
    let weight_bits = [11u32, 11, 10, 10, 8];
    let names: Vec<String> = model.quantizable_layers().map(|l| l.name.clone()).collect();
    let spec = PlanSpec {
        weight_bits: names.iter().cloned().zip(weight_bits).collect(),
        activation_bits: names.iter().map(|n| (n.clone(), 16)).collect(),
        input_bits: None,
        weight_dist: Distribution::Gaussian,
        activation_dist: Distribution::Gaussian,
        xi_multiplier: 1.0,
    };
    let (plan, _) = derive_plan(&model, &stats, &spec).map_err(|e| e.to_string())?;
    let kappa = DEFAULT_KAPPA_GAUSSIAN;
    let groups: Vec<StepGroup> = names
        .iter()
        .zip(weight_bits)
        .map(|(n, wb)| {
            StepGroup::new(
                n.clone(),
                vec![
                    QuantStep::new("w", wb, kappa, 0.0).unwrap(),
                    QuantStep::new("a", 16, kappa, 0.0).unwrap(),
                ],
            )
        })
        .collect();
    let predicted = predict_network_sqnr(&groups).map_err(|e| e.to_string())?;
    let measured = fxq_core::engine::measure_layer_sqnr(&model, &batch, &plan).map_err(|e| e.to_string())?;
    let pred: Vec<f64> = predicted.layers.iter().map(|l| l.sqnr.db()).collect();
    let meas: Vec<f64> = measured.iter().map(|(_, s)| s.db()).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let gap = pred
        .iter()
        .zip(&meas)
        .zip(weight_bits)
        .filter(|(_, b)| *b >= 8)
        .map(|((p, m), _)| (p - m).abs())
        .fold(0.0, f64::max);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
    check(
        decreasing(&pred) && decreasing(&meas) && gap <= 6.0,
        format!("predicted [{}], measured [{}], max gap {gap:.2} dB", fmt(&pred), fmt(&meas)),
    )
    .and_then(|d| within(start.elapsed(), Duration::from_secs(120), d))
}

fn batchnorm_folding() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let model = fixtures::conv_bn(seed).map_err(|e| e.to_string())?;
        let folded = fold_batchnorm(&model).map_err(|e| e.to_string())?;
        let batch = fixtures::gaussian_batch(model.input_shape(), 4, 1000 + seed);
        let (a, _) = forward_float(&model, &batch).map_err(|e| e.to_string())?;
        let (b, _) = forward_float(&folded, &batch).map_err(|e| e.to_string())?;
        worst = worst.max(relative_deviation(a.data(), b.data()));
    }
    check(worst < 1e-5, format!("max relative deviation {worst:.2e} over 10 fixtures"))
}

fn wide_plan_deviation(name: &str, model: &Model) -> Result<f64, String> {
    let batch = fixtures::gaussian_batch(model.input_shape(), 1, 99);
    let stats = collect_stats(model, std::slice::from_ref(&batch)).map_err(|e| e.to_string())?;
    let names: Vec<String> = model.quantizable_layers().map(|l| l.name.clone()).collect();
    let spec = PlanSpec {
        weight_bits: names.iter().map(|n| (n.clone(), 24)).collect(),
        activation_bits: names.iter().map(|n| (n.clone(), 24)).collect(),
        input_bits: Some(24),
        weight_dist: Distribution::Gaussian,
        activation_dist: Distribution::Gaussian,
        xi_multiplier: 3.0,
    };
    let (plan, _) = derive_plan(model, &stats, &spec).map_err(|e| format!("{name}: {e}"))?;
    let (f, _) = forward_float(model, &batch).map_err(|e| e.to_string())?;
    let (q, _) = forward_quantized(model, &batch, &plan).map_err(|e| e.to_string())?;
    Ok(relative_deviation(f.data(), q.data()))
}

fn wide_convergence() -> Outcome {
    let models: Vec<(&str, Model)> = vec![
        ("cifar", fixtures::cifar(1).map_err(|e| e.to_string())?),
        ("alexnet", fixtures::alexnet(1).map_err(|e| e.to_string())?),
        ("chain", fixtures::gaussian_chain(1, &ChainConfig::default()).map_err(|e| e.to_string())?),
        ("conv-bn", fixtures::conv_bn(1).map_err(|e| e.to_string())?),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, m) in &models {
        let dev = wide_plan_deviation(name, m)?;
        ok &= dev < 1e-4;
        parts.push(format!("{name} {dev:.1e}"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let xs: Vec<f64> = (0..1_000_000).map(|_| rng.random_range(-300.0..300.0)).collect();
    let mut idempotent = true;
    for (b, n) in [(1, 0), (4, -1), (8, 3), (16, 9), (24, 15), (32, -2)] {
        let f = QFormat::new(b, n).unwrap();
        let once = quantize(&xs, f).unwrap();
        idempotent &= quantize(&once, f).unwrap() == once;
    }
    check(
        ok && idempotent,
        format!("β=24 relative deviation: {}; idempotence on 10^6 values: {idempotent}", parts.join(", ")),
    )
}

/// Equal-policy width at or below which the model is in the constrained
/// (accuracy-limited) regime: ~25 Mbit for the CIFAR convolutions.
const CONSTRAINED_EQUAL_BITS: u32 = 7;

fn sweep_dominance() -> Outcome {
    let model = fixtures::cifar(1).map_err(|e| e.to_string())?;
    let template = model_problem(&model, &ModelProblemOptions::default(), Constraint::MinOutputSqnr(SqnrDb(0.0)))
        .map_err(|e| e.to_string())?;
    let targets: Vec<SqnrDb> = (0..=80).map(|i| SqnrDb(i as f64 * 0.5)).collect();
    let rows = sweep_tradeoff(&template, &targets).map_err(|e| e.to_string())?;
    let conv0 = template.steps.iter().position(|s| s.label == "w(conv0)").unwrap();
    let (mut feasible, mut best) = (0usize, (0.0f64, 0.0f64));
    for r in &rows {
        match (&r.optimized, &r.equal) {
            (Ok(o), Ok(e)) => {
                feasible += 1;
                if o.total_cost > e.total_cost {
                    return Err(format!("target {}: optimized {} > equal {}", r.target, o.total_cost, e.total_cost));
                }
                let gap = (e.total_cost - o.total_cost) / e.total_cost;
                if e.bits[conv0] <= CONSTRAINED_EQUAL_BITS && gap > best.0 {
                    best = (gap, r.target.db());
                }
            }
            (Err(_), Err(_)) => {}
            _ => return Err(format!("target {}: policies disagree on feasibility", r.target)),
        }
    }
    // exhaustive cross-check on conv0..conv3 weights alone
    let mut truncated = template.clone();
    truncated.steps.retain(|s| ["w(conv0)", "w(conv1)", "w(conv2)", "w(conv3)"].contains(&s.label.as_str()));
    for s in &mut truncated.steps {
        s.bounds = BitBounds::new(2, 14);
    }
    let max_rho = truncated.steps.iter().map(|s| s.rho).fold(0.0, f64::max);
    let mut oracle_best = 0.0f64;
    for t in (0..=40).map(|i| SqnrDb(i as f64)) {
        let p = truncated.with_constraint(Constraint::MinOutputSqnr(t));
        let (Ok(o), Ok(w), Ok(e)) = (exhaustive_allocate(&p, 2..=14), solve_waterfilling(&p), equal_allocate(&p)) else {
            continue;
        };
        if w.total_cost < o.total_cost - 1e-9 || w.total_cost > o.total_cost + max_rho + 1e-9 || o.total_cost > e.total_cost {
            return Err(format!("truncated target {t}: oracle {} fill {} equal {}", o.total_cost, w.total_cost, e.total_cost));
        }
        if e.bits[0] <= CONSTRAINED_EQUAL_BITS {
            oracle_best = oracle_best.max((e.total_cost - o.total_cost) / e.total_cost);
        }
    }
    check(
        best.0 >= 0.2 && oracle_best >= 0.2,
        format!(
            "{feasible} feasible targets, optimized ≤ equal at all; best constrained gap {:.1}% at {:.1} dB; \
             truncated exhaustive gap {:.1}%",
            100.0 * best.0,
            best.1,
            100.0 * oracle_best
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("CIFAR allocation offsets", cifar_offsets),
        ("ImageNet allocation offsets", imagenet_offsets),
        ("step-size optimality", step_optimality),
        ("efficiency slopes", efficiency_slopes),
        ("harmonic composition", composition),
        ("water-filling KKT", kkt),
        ("oracle equivalence", oracle_equivalence),
        ("prediction vs measurement", prediction_trend),
        ("batch-norm folding", batchnorm_folding),
        ("wide-format convergence", wide_convergence),
        ("sweep dominance", sweep_dominance),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

