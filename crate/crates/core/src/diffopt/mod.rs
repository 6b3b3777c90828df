//! Gradients of circuit expectations and an Adam training loop.

mod grad;
mod optim;

pub use grad::{
    adjoint_grad, distribution_loss_grad, expectation, finite_diff_grad, parameter_shift_grad,
    GradMethod, Observable,
};
pub use optim::{
    format_trace, optimizer_step, train, AdamConfig, ClosureLoss, EvalOptions, LossFn,
    OptimizerState, TraceRecord, TrainConfig, TrainOutcome,
};
