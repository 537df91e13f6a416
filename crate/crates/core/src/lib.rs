//! Fixed-point quantization of convolutional networks.
//!
//! * [`quantizer`]: optimal uniform step sizes, Q-format derivation and the
//!   fixed-point quantizer itself, plus SQNR measurement.
//! * [`ir`]: a small layer graph (conv, fully-connected, ReLU, batch-norm,
//!   pooling, flatten) with shape inference and batch-norm folding.
//! * [`engine`]: float and quantized forward passes, calibration statistics
//!   and quantization plans.
//! * [`sqnr`]: the additive-noise model predicting network SQNR from
//!   per-step bit-widths.
//! * [`allocator`]: cross-layer bit-width allocation minimizing model size or
//!   compute under an SQNR target.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod allocator;
pub mod engine;
pub mod error;
pub mod ir;
pub mod quantizer;
pub mod sqnr;
pub mod stats;
mod step_table;

pub use allocator::{
    equal_allocate, exhaustive_allocate, model_problem, relative_bitwidths, solve_waterfilling, sweep_tradeoff,
    AllocStep, AllocationProblem, BitAllocation, BitBounds, Constraint, CostModel, ModelProblemOptions, SweepRow,
};
pub use engine::{
    collect_stats, derive_plan, forward_float, forward_quantized, measure_layer_sqnr, quantize_model, PlanSpec,
    QuantizationPlan,
};
pub use error::{Error, Result};
pub use ir::{count_macs, count_params, fold_batchnorm, LayerKind, LayerSpec, Model, Tensor};
pub use quantizer::{
    derive_qformat, measure_sqnr, optimal_step_size, predict_sqnr_db, quantize, Distribution, QFormat, SqnrDb,
};
pub use sqnr::{compose_sqnr, estimate_kappa, predict_network_sqnr, QuantStep, StepGroup};
pub use stats::{RunningStats, TensorStats};
