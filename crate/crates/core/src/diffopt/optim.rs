use serde::{Deserialize, Serialize};

use super::grad::{finite_diff_grad, GradMethod};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sim::ParameterVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self { config, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    /// In-place Adam update.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::WidthMismatch { expected: self.m.len(), actual: grad.len().min(params.len()) });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("non-finite gradient".into()));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form of [`OptimizerState::update`].
pub fn optimizer_step(
    state: &OptimizerState,
    params: &ParameterVector,
    grad: &[f64],
) -> Result<(OptimizerState, ParameterVector)> {
    let mut s = state.clone();
    let mut p = params.clone();
    s.update(&mut p.0, grad)?;
    Ok((s, p))
}

/// How one loss evaluation should be carried out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub method: GradMethod,
    pub shots: Option<usize>,
    pub seed: u64,
}

/// A differentiable scalar objective.
pub trait LossFn: Sync {
    fn num_params(&self) -> usize;

    /// Loss value only.
    fn loss(&self, params: &[f64], opts: &EvalOptions) -> Result<f64>;

    /// Loss value and gradient. The default uses central differences.
    fn loss_and_grad(&self, params: &[f64], opts: &EvalOptions) -> Result<(f64, Vec<f64>)> {
        let value = self.loss(params, opts)?;
        let f = |p: &[f64]| self.loss(p, opts);
        let g = finite_diff_grad(&f, &ParameterVector(params.to_vec()), 1e-5)?;
        Ok((value, g))
    }
}

/// Wraps a plain closure; gradients come from finite differences.
pub struct ClosureLoss<F> {
    pub num_params: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Result<f64> + Sync> LossFn for ClosureLoss<F> {
    fn num_params(&self) -> usize {
        self.num_params
    }

    fn loss(&self, params: &[f64], _: &EvalOptions) -> Result<f64> {
        (self.f)(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub method: GradMethod,
    pub shots: Option<usize>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, seed: 42, method: GradMethod::Adjoint, shots: None, adam: AdamConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest loss seen, including the final iterate.
    pub params: ParameterVector,
    pub best_loss: f64,
    pub final_params: ParameterVector,
    pub trace: Vec<TraceRecord>,
}

/// Minimize `loss` with Adam. Each epoch evaluates at the current point,
/// records `(epoch, loss, ‖grad‖)`, then steps. Epoch `e` uses child seed `e`
/// of `config.seed`, so runs are reproducible.
pub fn train(
    loss: &dyn LossFn,
    init: &ParameterVector,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&TraceRecord),
) -> Result<TrainOutcome> {
    if init.len() != loss.num_params() {
        return Err(Error::Parameter(format!(
            "loss has {} parameters, got {}",
            loss.num_params(),
            init.len()
        )));
    }
    let root = RngStream::new(config.seed);
    let mut params = init.clone();
    let mut opt = OptimizerState::new(config.adam, init.len());
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ParameterVector)> = None;
    for epoch in 0..config.epochs {
        let opts = EvalOptions { method: config.method, shots: config.shots, seed: root.derive_seed(epoch as u64) };
        let (value, grad) = loss.loss_and_grad(&params.0, &opts)?;
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("loss became {value} at epoch {epoch}")));
        }
        let rec = TraceRecord { epoch, loss: value, grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt() };
        on_epoch(&rec);
        trace.push(rec);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, params.clone()));
        }
        opt.update(&mut params.0, &grad)?;
    }
    let opts = EvalOptions { method: config.method, shots: config.shots, seed: root.derive_seed(config.epochs as u64) };
    let last = loss.loss(&params.0, &opts)?;
    let (best_loss, best_params) = match best {
        Some((b, p)) if b <= last => (b, p),
        _ => (last, params.clone()),
    };
    Ok(TrainOutcome { params: best_params, best_loss, final_params: params, trace })
}

/// `epoch,loss,grad_norm` lines with a header.
pub fn format_trace(trace: &[TraceRecord]) -> String {
    let mut out = String::from("epoch,loss,grad_norm\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.loss, r.grad_norm));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> ClosureLoss<impl Fn(&[f64]) -> Result<f64> + Sync> {
        ClosureLoss { num_params: 2, f: |p: &[f64]| Ok(p.iter().map(|x| x * x).sum::<f64>()) }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let s = OptimizerState::new(AdamConfig::default(), 2);
        let p = ParameterVector(vec![0.3, -0.4]);
        let (_, q) = optimizer_step(&s, &p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let s = OptimizerState::new(AdamConfig::default(), 1);
        let (_, q) = optimizer_step(&s, &ParameterVector(vec![1.0]), &[3.0]).unwrap();
        assert!((q.0[0] - 0.95).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let init = ParameterVector(vec![1.0, 2.0]);
        let out = train(&quad(), &init, &cfg, |_| {}).unwrap();
        assert_eq!(out.params, init);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn quadratic_converges_and_is_deterministic() {
        let cfg = TrainConfig { epochs: 300, ..Default::default() };
        let init = ParameterVector(vec![1.0, -2.0]);
        let a = train(&quad(), &init, &cfg, |_| {}).unwrap();
        let b = train(&quad(), &init, &cfg, |_| {}).unwrap();
        assert_eq!(a, b);
        assert!(a.best_loss < 1e-3, "{}", a.best_loss);
        assert!(a.trace.last().unwrap().loss < a.trace[0].loss);
        assert!(format_trace(&a.trace).starts_with("epoch,loss,grad_norm\n0,5,"));
    }
}
