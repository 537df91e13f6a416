//! `fxq` command-line interface.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fxq_core::allocator::{
    equal_allocate, model_problem, relative_bitwidths, solve_waterfilling, sweep_tradeoff, AllocationProblem,
    BitAllocation, BitBounds, Constraint, CostModel, ModelProblemOptions, StepKind,
};
use fxq_core::engine::{derive_plan, quantize_model, PlanSpec, QuantizationPlan};
use fxq_core::ir::{count_params, Model, Tensor};
use fxq_core::sqnr::{predict_network_sqnr, QuantStep, StepGroup};
use fxq_core::{Distribution, SqnrDb, TensorStats};

use crate::manifest::{self, ManifestError};
use crate::parallel;
use crate::report::{self, Csv};

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Success = 0,
    Input = 2,
    Infeasible = 3,
    Internal = 4,
}

/// Error in how the tool was invoked (bad flag combination, unreadable
/// report file).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Map an error chain to its exit class.
pub fn classify(err: &anyhow::Error) -> ExitClass {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fxq_core::Error>() {
            return match e {
                fxq_core::Error::Infeasible(_) => ExitClass::Infeasible,
                _ => ExitClass::Input,
            };
        }
        if cause.is::<ManifestError>() || cause.is::<UsageError>() || cause.is::<std::io::Error>() {
            if let Some(ManifestError::Model(fxq_core::Error::Infeasible(_))) = cause.downcast_ref::<ManifestError>() {
                return ExitClass::Infeasible;
            }
            return ExitClass::Input;
        }
    }
    ExitClass::Internal
}

#[derive(Debug, Parser)]
#[command(name = "fxq", version, about = "Fixed-point conversion and bit-width planning for convolutional networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect per-tensor calibration statistics.
    Stats(StatsArgs),
    /// Allocate bit-widths across layers (optimized and equal-width policies).
    Allocate(AllocateArgs),
    /// Derive a fixed-point plan and write the converted model.
    Quantize(QuantizeArgs),
    /// Compare predicted and measured per-layer SQNR for a plan.
    Simulate(SimulateArgs),
    /// Model size versus SQNR target for both policies.
    Sweep(SweepArgs),
    /// Write a seeded synthetic model and calibration batch.
    MakeFixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model manifest (JSON).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibArg {
    /// Input batch blobs (raw little-endian f32).
    #[arg(long, num_args = 1..)]
    pub calib: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuantArgs {
    /// Assumed distribution for every tensor class.
    #[arg(long, default_value = "gaussian", value_parser = parse_dist)]
    pub dist: Distribution,
    /// Override the distribution of weights and biases.
    #[arg(long, value_parser = parse_dist)]
    pub weight_dist: Option<Distribution>,
    /// Override the distribution of activations and the input.
    #[arg(long, value_parser = parse_dist)]
    pub act_dist: Option<Distribution>,
    /// Effective standard deviation as a multiple of σ.
    #[arg(long, default_value_t = 3.0)]
    pub xi_mult: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostArg {
    ModelSize,
    ComputeLoad,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Quantization efficiency, dB per bit.
    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,
    /// Pinned width of fully-connected layers.
    #[arg(long, default_value_t = 16)]
    pub fc_bits: u32,
    /// Width of activation steps that are not optimized.
    #[arg(long, default_value_t = 16)]
    pub act_bits_pinned: u32,
    /// Also quantize the network input at this width.
    #[arg(long)]
    pub input_bits: Option<u32>,
    #[arg(long, default_value_t = 2)]
    pub min_bits: u32,
    #[arg(long, default_value_t = 16)]
    pub max_bits: u32,
    /// What the allocation minimizes.
    #[arg(long, value_enum, default_value_t = CostArg::ModelSize)]
    pub cost: CostArg,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub calib: CalibArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Required output SQNR.
    #[arg(long, conflicts_with = "max_cost_bits")]
    pub min_sqnr_db: Option<f64>,
    /// Alternatively: cost budget, maximizing SQNR.
    #[arg(long)]
    pub max_cost_bits: Option<f64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Optimized,
    Equal,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub calib: CalibArg,
    /// Statistics report from `stats` (instead of `--calib`).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Allocation report from `allocate`.
    #[arg(long, conflicts_with = "weight_bits")]
    pub allocation: Option<PathBuf>,
    /// Which policy of the allocation report to realize.
    #[arg(long, value_enum, default_value_t = PolicyArg::Optimized)]
    pub policy: PolicyArg,
    /// Uniform weight width instead of an allocation.
    #[arg(long, requires = "act_bits")]
    pub weight_bits: Option<u32>,
    /// Uniform activation width instead of an allocation.
    #[arg(long)]
    pub act_bits: Option<u32>,
    /// Input width (uniform mode only; allocations carry their own).
    #[arg(long)]
    pub input_bits: Option<u32>,
    #[command(flatten)]
    pub quant: QuantArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Plan file from `quantize`.
    #[arg(long)]
    pub plan: PathBuf,
    #[command(flatten)]
    pub calib: CalibArg,
    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated SQNR targets in dB (may be empty).
    #[arg(long, allow_hyphen_values = true)]
    pub targets: Option<String>,
    /// Target grid start (with `--to` and `--step`).
    #[arg(long, conflicts_with = "targets", requires_all = ["to", "step"])]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Batches for measuring output SQNR (omit to skip measurement).
    #[command(flatten)]
    pub calib: CalibArg,
    #[command(flatten)]
    pub quant: QuantArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// One of: cifar, alexnet, chain, conv-bn.
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of inputs in the generated calibration blob.
    #[arg(long, default_value_t = 4)]
    pub calib_count: usize,
    #[command(flatten)]
    pub out: OutArg,
}

fn parse_dist(s: &str) -> Result<Distribution, String> {
    s.parse().map_err(|e: fxq_core::Error| e.to_string())
}

/// Parse arguments and run; returns the process exit status.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { ExitClass::Input as i32 } else { 0 };
        }
    };
    match run(cli, stdout) {
        Ok(()) => ExitClass::Success as i32,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            classify(&e) as i32
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats(a) => cmd_stats(&a, stdout),
        Command::Allocate(a) => cmd_allocate(&a, stdout),
        Command::Quantize(a) => cmd_quantize(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Sweep(a) => cmd_sweep(&a, stdout),
        Command::MakeFixture(a) => cmd_make_fixture(&a, stdout),
    }
}

fn load_model(path: &Path) -> anyhow::Result<Model> {
    manifest::load_model(path).with_context(|| format!("loading model `{}`", path.display()))
}

fn load_batches(paths: &[PathBuf], model: &Model) -> anyhow::Result<Vec<Tensor>> {
    // validate every path before any work
    for p in paths {
        if !p.is_file() {
            return Err(ManifestError::Read {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            }
            .into());
        }
    }
    paths
        .iter()
        .map(|p| manifest::read_batch(p, model.input_shape()).map_err(Into::into))
        .collect()
}

fn prepare_out(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory `{}`", out.display()))
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing `{}`", path.display()))
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading `{}`", path.display()))
}

fn compute_stats(model: &Model, calib: &[PathBuf]) -> anyhow::Result<BTreeMap<String, TensorStats>> {
    if calib.is_empty() {
        return Err(usage("calibration inputs required (--calib)"));
    }
    let batches = load_batches(calib, model)?;
    Ok(parallel::collect_stats(model, &batches, parallel::default_threads())?)
}

fn cmd_stats(a: &StatsArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let model = load_model(&a.model.model)?;
    prepare_out(&a.out.out)?;
    let stats = compute_stats(&model, &a.calib.calib)?;
    let path = a.out.out.join("stats.csv");
    write_file(&path, &report::stats_csv(&stats).render())?;
    writeln!(stdout, "wrote {} tensors to {}", stats.len(), path.display())?;
    Ok(())
}

fn problem_options(p: &ProblemArgs) -> anyhow::Result<ModelProblemOptions> {
    if p.min_bits > p.max_bits || p.min_bits < 1 {
        return Err(usage(format!("invalid bit range {}..={}", p.min_bits, p.max_bits)));
    }
    Ok(ModelProblemOptions {
        cost: match p.cost {
            CostArg::ModelSize => CostModel::ModelSize,
            CostArg::ComputeLoad => CostModel::ComputeLoad,
        },
        kappa: p.kappa,
        bounds: BitBounds::new(p.min_bits, p.max_bits),
        fc_bits: Some(p.fc_bits),
        act_bits: p.act_bits_pinned,
        input_bits: p.input_bits,
    })
}

const ALLOCATION_HEADER: [&str; 8] = ["policy", "step", "layer", "kind", "rho", "continuous_bits", "bits", "offset"];

fn kind_name(k: StepKind) -> &'static str {
    match k {
        StepKind::Input => "input",
        StepKind::Weight => "weight",
        StepKind::Activation => "activation",
    }
}

fn allocation_rows(csv: &mut Csv, policy: &str, problem: &AllocationProblem, alloc: &BitAllocation) -> anyhow::Result<()> {
    // offsets of the free steps relative to the first free one
    let free: Vec<usize> = (0..problem.steps.len()).filter(|&i| !problem.steps[i].bounds.is_pinned()).collect();
    let rhos: Vec<f64> = free.iter().map(|&i| problem.steps[i].rho).collect();
    let offsets = if rhos.is_empty() {
        Vec::new()
    } else {
        relative_bitwidths(&rhos, problem.kappa)?
    };
    for (i, s) in problem.steps.iter().enumerate() {
        let offset = free.iter().position(|&f| f == i).map_or(String::new(), |j| offsets[j].to_string());
        csv.row(vec![
            policy.into(),
            s.label.clone(),
            s.layer.clone(),
            kind_name(s.kind).into(),
            s.rho.to_string(),
            format!("{:.6}", alloc.continuous[i]),
            alloc.bits[i].to_string(),
            offset,
        ]);
    }
    Ok(())
}

fn cmd_allocate(a: &AllocateArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let model = load_model(&a.model.model)?;
    prepare_out(&a.out.out)?;
    let constraint = match (a.min_sqnr_db, a.max_cost_bits) {
        (Some(t), None) => Constraint::MinOutputSqnr(SqnrDb(t)),
        (None, Some(b)) => Constraint::MaxTotalCost(b),
        _ => return Err(usage("give exactly one of --min-sqnr-db or --max-cost-bits")),
    };
    let problem = model_problem(&model, &problem_options(&a.problem)?, constraint)?;
    let optimized = solve_waterfilling(&problem).context("optimized policy")?;
    let equal = equal_allocate(&problem).context("equal-width policy")?;

    let mut steps = Csv::new(&ALLOCATION_HEADER);
    steps.comment(constraint_note(&problem));
    allocation_rows(&mut steps, "optimized", &problem, &optimized)?;
    allocation_rows(&mut steps, "equal", &problem, &equal)?;
    let mut summary = Csv::new(&["policy", "total_bits", "continuous_bits", "predicted_db"]);
    summary.comment(constraint_note(&problem));
    for (name, alloc) in [("optimized", &optimized), ("equal", &equal)] {
        summary.row(vec![
            name.into(),
            alloc.total_cost.to_string(),
            format!("{:.3}", alloc.continuous_cost),
            report::db(alloc.predicted),
        ]);
    }
    write_file(&a.out.out.join("allocation.csv"), &steps.render())?;
    write_file(&a.out.out.join("allocation_summary.csv"), &summary.render())?;
    for (name, alloc) in [("optimized", &optimized), ("equal", &equal)] {
        writeln!(
            stdout,
            "{name}: {} bits, predicted {} dB",
            alloc.total_cost,
            report::db(alloc.predicted)
        )?;
    }
    Ok(())
}

fn constraint_note(problem: &AllocationProblem) -> String {
    match problem.constraint {
        Constraint::MinOutputSqnr(t) => format!("kappa={} min_sqnr_db={}", problem.kappa, report::db(t)),
        Constraint::MaxTotalCost(b) => format!("kappa={} max_cost_bits={b}", problem.kappa),
    }
}

/// Per-layer widths realized by an allocation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerBits {
    pub weights: BTreeMap<String, u32>,
    pub activations: BTreeMap<String, u32>,
    pub input: Option<u32>,
}

fn layer_bits(problem: &AllocationProblem, bits: &[u32]) -> LayerBits {
    let mut out = LayerBits::default();
    for (s, &b) in problem.steps.iter().zip(bits) {
        match s.kind {
            StepKind::Input => out.input = Some(b),
            StepKind::Weight => {
                out.weights.insert(s.layer.clone(), b);
            }
            StepKind::Activation => {
                out.activations.insert(s.layer.clone(), b);
            }
        }
    }
    out
}

fn read_allocation(path: &Path, policy: PolicyArg) -> anyhow::Result<LayerBits> {
    let rows = Csv::parse(&read_file(path)?).map_err(|e| usage(format!("`{}`: {e}", path.display())))?;
    let want = match policy {
        PolicyArg::Optimized => "optimized",
        PolicyArg::Equal => "equal",
    };
    let mut out = LayerBits::default();
    for r in rows.iter().filter(|r| r.get("policy").map(String::as_str) == Some(want)) {
        let field = |k: &str| r.get(k).cloned().ok_or_else(|| usage(format!("`{}`: missing `{k}`", path.display())));
        let bits: u32 = field("bits")?.parse().map_err(|e| usage(format!("bad bit-width: {e}")))?;
        let layer = field("layer")?;
        match field("kind")?.as_str() {
            "input" => out.input = Some(bits),
            "weight" => {
                out.weights.insert(layer, bits);
            }
            "activation" => {
                out.activations.insert(layer, bits);
            }
            other => return Err(usage(format!("unknown step kind `{other}`"))),
        }
    }
    if out.weights.is_empty() {
        return Err(usage(format!("`{}` has no `{want}` rows", path.display())));
    }
    Ok(out)
}

fn plan_spec(bits: LayerBits, q: &QuantArgs) -> PlanSpec {
    PlanSpec {
        weight_bits: bits.weights,
        activation_bits: bits.activations,
        input_bits: bits.input,
        weight_dist: q.weight_dist.unwrap_or(q.dist),
        activation_dist: q.act_dist.unwrap_or(q.dist),
        xi_multiplier: q.xi_mult,
    }
}

fn cmd_quantize(a: &QuantizeArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let model = load_model(&a.model.model)?;
    prepare_out(&a.out.out)?;
    let bits = match (&a.allocation, a.weight_bits, a.act_bits) {
        (Some(path), None, _) => read_allocation(path, a.policy)?,
        (None, Some(wb), Some(ab)) => {
            let mut lb = LayerBits {
                input: a.input_bits,
                ..Default::default()
            };
            for l in model.quantizable_layers() {
                lb.weights.insert(l.name.clone(), wb);
                lb.activations.insert(l.name.clone(), ab);
            }
            lb
        }
        _ => return Err(usage("give --allocation, or both --weight-bits and --act-bits")),
    };
    let stats = match &a.stats {
        Some(p) => report::parse_stats(&read_file(p)?).map_err(|e| usage(format!("`{}`: {e}", p.display())))?,
        None => compute_stats(&model, &a.calib.calib)?,
    };
    let (plan, degenerate) = derive_plan(&model, &stats, &plan_spec(bits, &a.quant))?;
    let mut notes = Vec::new();
    for d in &degenerate {
        let note = format!("degenerate {}: {}; using {}", d.key, d.error, d.fallback);
        writeln!(stdout, "warning: {note}")?;
        notes.push(note);
    }
    write_file(&a.out.out.join("plan.txt"), &report::render_plan(&plan, &notes))?;
    let converted = quantize_model(&model, &plan)?;
    let dir = a.out.out.join("quantized");
    prepare_out(&dir)?;
    manifest::save_model(&converted, &dir.join("model.json"))?;
    writeln!(
        stdout,
        "wrote plan ({} layers) and converted model to {}",
        plan.weights.len(),
        a.out.out.display()
    )?;
    Ok(())
}

/// Prediction groups for a plan: optional input, then one group per
/// quantizable layer (weights and activations).
pub fn plan_groups(model: &Model, plan: &QuantizationPlan, kappa: f64) -> anyhow::Result<Vec<StepGroup>> {
    let mut groups = Vec::new();
    if let Some(f) = plan.input {
        groups.push(StepGroup::new("input", vec![QuantStep::new("a(input)", f.bitwidth(), kappa, 0.0)?]));
    }
    for l in model.quantizable_layers() {
        let (w, act) = (plan.weights[&l.name], plan.activations[&l.name]);
        let mut g = StepGroup::new(
            l.name.clone(),
            vec![
                QuantStep::new(format!("w({})", l.name), w.bitwidth(), kappa, 0.0)?,
                QuantStep::new(format!("a({})", l.name), act.bitwidth(), kappa, 0.0)?,
            ],
        );
        g.fully_connected = l.kind.is_fully_connected();
        groups.push(g);
    }
    Ok(groups)
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let model = load_model(&a.model.model)?;
    prepare_out(&a.out.out)?;
    let plan = report::parse_plan(&read_file(&a.plan)?).map_err(|e| usage(format!("`{}`: {e}", a.plan.display())))?;
    plan.validate(&model)?;
    if a.calib.calib.is_empty() {
        return Err(usage("evaluation inputs required (--calib)"));
    }
    let batches = load_batches(&a.calib.calib, &model)?;
    let threads = parallel::default_threads();
    let predicted = predict_network_sqnr(&plan_groups(&model, &plan, a.kappa)?)?;
    let measured = parallel::measure(&model, &batches, &plan, threads)?;

    let mut csv = Csv::new(&["layer", "weight_format", "act_format", "predicted_db", "measured_db", "fully_connected"]);
    csv.comment(format!("kappa={}", a.kappa));
    if let Some(f) = plan.input {
        csv.comment(format!("input quantized as {f}"));
    }
    for (name, m) in &measured.layers {
        csv.row(vec![
            name.clone(),
            plan.weights[name].to_string(),
            plan.activations[name].to_string(),
            report::db(predicted.get(name).expect("every layer predicted")),
            report::db(*m),
            model.layer(name).is_some_and(|l| l.kind.is_fully_connected()).to_string(),
        ]);
    }
    csv.row(vec![
        "output".into(),
        String::new(),
        String::new(),
        report::db(predicted.output),
        report::db(measured.output),
        String::new(),
    ]);
    if plan.input.is_some() {
        // the same plan with the input left in floating point
        let float_input = QuantizationPlan {
            input: None,
            ..plan.clone()
        };
        let p = predict_network_sqnr(&plan_groups(&model, &float_input, a.kappa)?)?;
        let m = parallel::measure(&model, &batches, &float_input, threads)?;
        csv.row(vec![
            "output_float_input".into(),
            String::new(),
            String::new(),
            report::db(p.output),
            report::db(m.output),
            String::new(),
        ]);
    }
    let path = a.out.out.join("sqnr.csv");
    write_file(&path, &csv.render())?;
    writeln!(
        stdout,
        "output SQNR: predicted {} dB, measured {} dB",
        report::db(predicted.output),
        report::db(measured.output)
    )?;
    Ok(())
}

fn sweep_targets(a: &SweepArgs) -> anyhow::Result<Vec<SqnrDb>> {
    if let Some(list) = &a.targets {
        return list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map(SqnrDb).map_err(|e| usage(format!("bad target `{s}`: {e}"))))
            .collect();
    }
    match (a.from, a.to, a.step) {
        (Some(from), Some(to), Some(step)) => {
            if !(step > 0.0) || to < from {
                return Err(usage("target grid needs --step > 0 and --to >= --from"));
            }
            let n = ((to - from) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| SqnrDb(from + step * i as f64)).collect())
        }
        _ => Err(usage("give --targets or --from/--to/--step")),
    }
}

fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let model = load_model(&a.model.model)?;
    prepare_out(&a.out.out)?;
    let mut targets = sweep_targets(a)?;
    targets.sort_by(|x, y| x.db().total_cmp(&y.db()));
    let measuring = !a.calib.calib.is_empty();
    let (batches, stats) = if measuring {
        let batches = load_batches(&a.calib.calib, &model)?;
        let stats = parallel::collect_stats(&model, &batches, parallel::default_threads())?;
        (batches, Some(stats))
    } else {
        (Vec::new(), None)
    };
    let template = model_problem(&model, &problem_options(&a.problem)?, Constraint::MinOutputSqnr(SqnrDb(0.0)))?;
    let rows = sweep_tradeoff(&template, &targets)?;

    let mut csv = Csv::new(&["policy", "target_db", "status", "total_bits", "predicted_db", "measured_db"]);
    csv.comment(format!("kappa={}", template.kappa));
    let mut infeasible = 0usize;
    for row in &rows {
        for (policy, result) in [("optimized", &row.optimized), ("equal", &row.equal)] {
            match result {
                Ok(alloc) => {
                    let measured = match &stats {
                        Some(st) => {
                            let spec = plan_spec(layer_bits(&template, &alloc.bits), &a.quant);
                            let (plan, _) = derive_plan(&model, st, &spec)?;
                            let m = parallel::measure(&model, &batches, &plan, parallel::default_threads())?;
                            report::db(m.output)
                        }
                        None => String::new(),
                    };
                    csv.row(vec![
                        policy.into(),
                        report::db(row.target),
                        "ok".into(),
                        alloc.total_cost.to_string(),
                        report::db(alloc.predicted),
                        measured,
                    ]);
                }
                Err(e) => {
                    infeasible += 1;
                    csv.comment(format!("{policy} at {} dB: {e}", report::db(row.target)));
                    csv.row(vec![
                        policy.into(),
                        report::db(row.target),
                        "infeasible".into(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ]);
                }
            }
        }
    }
    let path = a.out.out.join("sweep.csv");
    write_file(&path, &csv.render())?;
    writeln!(
        stdout,
        "wrote {} targets ({infeasible} infeasible rows) to {}",
        rows.len(),
        path.display()
    )?;
    Ok(())
}

fn cmd_make_fixture(a: &FixtureArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let Some(model) = crate::fixtures::by_name(&a.name, a.seed) else {
        bail!(usage(format!(
            "unknown fixture `{}` (expected one of: {})",
            a.name,
            crate::fixtures::NAMES.join(", ")
        )));
    };
    let model = model?;
    if a.calib_count == 0 {
        return Err(usage("--calib-count must be at least 1"));
    }
    prepare_out(&a.out.out)?;
    manifest::save_model(&model, &a.out.out.join("model.json"))?;
    let calib = crate::fixtures::gaussian_batch(model.input_shape(), a.calib_count, a.seed.wrapping_add(1));
    manifest::write_blob(&a.out.out.join("calib.f32"), calib.data())?;
    let total: usize = count_params(&model).iter().map(|(_, n)| n).sum();
    writeln!(
        stdout,
        "wrote `{}` ({} quantizable layers, {total} parameters) to {}",
        a.name,
        model.quantizable_layers().count(),
        a.out.out.display()
    )?;
    Ok(())
}
