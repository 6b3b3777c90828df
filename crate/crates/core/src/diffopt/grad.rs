use std::f64::consts::{FRAC_PI_2, SQRT_2};

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sim::{Angle, Circuit, GateKind, GateOp, ParameterVector, StateVector};

/// A diagonal observable, measured as `Σ_i w_i |ψ_i|²`.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    /// Pauli Z on one qubit.
    Z(usize),
    /// Projector onto one basis state.
    Projector(usize),
    /// Arbitrary real weight per basis state.
    Diagonal(Vec<f64>),
}

impl Observable {
    pub fn weights(&self, width: usize) -> Result<Vec<f64>> {
        let len = 1usize << width;
        match self {
            Observable::Z(q) => {
                if *q >= width {
                    return Err(Error::Index { qubit: *q, width });
                }
                Ok((0..len).map(|i| if i >> q & 1 == 0 { 1.0 } else { -1.0 }).collect())
            }
            Observable::Projector(k) => {
                if *k >= len {
                    return Err(Error::InvalidArgument(format!("basis index {k} >= {len}")));
                }
                let mut w = vec![0.0; len];
                w[*k] = 1.0;
                Ok(w)
            }
            Observable::Diagonal(w) => {
                if w.len() != len {
                    return Err(Error::WidthMismatch { expected: len, actual: w.len() });
                }
                Ok(w.clone())
            }
        }
    }

    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        let w = self.weights(state.width())?;
        Ok(dot(&w, &state.probabilities()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMethod {
    #[default]
    Adjoint,
    ParameterShift,
    FiniteDifference,
}

impl std::str::FromStr for GradMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjoint" => Ok(GradMethod::Adjoint),
            "parameter-shift" | "shift" => Ok(GradMethod::ParameterShift),
            "finite-difference" | "fd" => Ok(GradMethod::FiniteDifference),
            other => Err(Error::InvalidArgument(format!("unknown gradient method {other:?}"))),
        }
    }
}

fn require_unitary(circuit: &Circuit) -> Result<()> {
    if !circuit.is_unitary() {
        return Err(Error::Unsupported("differentiated region contains a reset".into()));
    }
    Ok(())
}

/// Run the circuit with the angle of op `shift_op` offset by `delta`.
fn run_shifted(
    circuit: &Circuit,
    params: &[f64],
    initial: &StateVector,
    shift_op: usize,
    delta: f64,
) -> Result<StateVector> {
    let mut state = initial.clone();
    for (k, op) in circuit.ops().iter().enumerate() {
        let mut angle = circuit.resolve(op, params);
        if k == shift_op {
            angle = angle.map(|a| a + delta);
        }
        state.apply_resolved(op, angle)?;
    }
    Ok(state)
}

/// Distribution of a state, exact or estimated from `shots` samples.
fn distribution(state: &StateVector, shots: Option<usize>, seed: u64) -> Vec<f64> {
    match shots {
        None => state.probabilities(),
        Some(n) => {
            let mut p = vec![0.0; state.amplitudes().len()];
            for i in state.sample(n, seed) {
                p[i] += 1.0;
            }
            p.iter_mut().for_each(|x| *x /= n as f64);
            p
        }
    }
}

/// Shift offsets and coefficients for d/dα of one gate occurrence.
///
/// An uncontrolled rotation has generator eigenvalues ±½, so the two-term
/// rule with ±π/2 is exact. A controlled rotation adds a zero eigenvalue
/// and needs the four-term rule.
fn shift_terms(op: &GateOp) -> Vec<(f64, f64)> {
    if op.controls.is_empty() {
        vec![(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)]
    } else {
        let d_plus = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
        let d_minus = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
        let b = 3.0 * FRAC_PI_2;
        vec![(FRAC_PI_2, d_plus), (-FRAC_PI_2, -d_plus), (b, -d_minus), (-b, d_minus)]
    }
}

fn param_occurrences(circuit: &Circuit) -> Vec<(usize, usize, f64)> {
    circuit
        .ops()
        .iter()
        .enumerate()
        .filter_map(|(k, op)| match op.angle {
            Some(a @ Angle::Param { index, .. }) => Some((k, index, a.sign())),
            _ => None,
        })
        .collect()
}

/// Gradient of a loss `L(p)` of the circuit's output distribution `p`.
///
/// `loss` returns the value and `∂L/∂p_i`. With `shots`, the parameter-shift
/// and finite-difference routes see sampled distributions (each evaluation
/// from its own child seed); the adjoint route is exact only.
pub fn distribution_loss_grad(
    circuit: &Circuit,
    params: &ParameterVector,
    initial: &StateVector,
    loss: &(dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync),
    method: GradMethod,
    shots: Option<usize>,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    require_unitary(circuit)?;
    if initial.width() != circuit.width() {
        return Err(Error::WidthMismatch { expected: circuit.width(), actual: initial.width() });
    }
    circuit.check_params(params)?;
    let root = RngStream::new(seed);
    match method {
        GradMethod::Adjoint => {
            if shots.is_some() {
                return Err(Error::Unsupported("adjoint gradients are exact; drop shots".into()));
            }
            let state = circuit.run(params, initial)?;
            let (value, weights) = loss(&state.probabilities())?;
            let grad = adjoint_sweep(circuit, &params.0, state, &weights)?;
            Ok((value, grad))
        }
        GradMethod::ParameterShift => {
            let state = circuit.run(params, initial)?;
            let (value, weights) = loss(&distribution(&state, shots, root.derive_seed(0)))?;
            let occ = param_occurrences(circuit);
            let partials = occ
                .par_iter()
                .enumerate()
                .map(|(n, &(k, _, sign))| {
                    let mut d = 0.0;
                    for (t, (delta, coeff)) in shift_terms(&circuit.ops()[k]).into_iter().enumerate() {
                        let s = run_shifted(circuit, &params.0, initial, k, delta)?;
                        let seed = root.derive_seed(1 + (n * 4 + t) as u64);
                        d += coeff * dot(&weights, &distribution(&s, shots, seed));
                    }
                    Ok(sign * d)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut grad = vec![0.0; params.len()];
            for (&(_, j, _), d) in occ.iter().zip(partials) {
                grad[j] += d;
            }
            Ok((value, grad))
        }
        GradMethod::FiniteDifference => {
            let eval = |p: &[f64], s: u64| -> Result<f64> {
                let state = circuit.run(&ParameterVector(p.to_vec()), initial)?;
                Ok(loss(&distribution(&state, shots, s))?.0)
            };
            let value = eval(&params.0, root.derive_seed(0))?;
            let grad = central_differences(&|p: &[f64]| eval(p, root.derive_seed(0)), &params.0, 1e-5)?;
            Ok((value, grad))
        }
    }
}

/// One backward pass of the adjoint method for `Σ_i w_i |ψ_i|²`.
/// `state` must be the circuit's output for `params`.
fn adjoint_sweep(
    circuit: &Circuit,
    params: &[f64],
    mut psi: StateVector,
    weights: &[f64],
) -> Result<Vec<f64>> {
    let amps: Vec<C64> = psi.amplitudes().iter().zip(weights).map(|(a, w)| a * *w).collect();
    // λ carries no normalization, so build it through the raw constructor path
    let mut lambda = RawVector(amps);
    let mut grad = vec![0.0; circuit.num_params()];
    for op in circuit.ops().iter().rev() {
        let angle = circuit.resolve(op, params);
        apply_inverse(&mut psi, op, angle)?;
        if let (Some(Angle::Param { index, negate }), Some(a)) = (op.angle, angle) {
            let d = op.kind.derivative(a).expect("parameterized ops are rotations");
            let ov = derivative_overlap(&lambda.0, psi.amplitudes(), op, &d);
            grad[index] += if negate { -2.0 * ov.re } else { 2.0 * ov.re };
        }
        lambda.apply_inverse(op, angle);
    }
    Ok(grad)
}

/// Unnormalized amplitude buffer for the adjoint co-state.
struct RawVector(Vec<C64>);

impl RawVector {
    fn apply_inverse(&mut self, op: &GateOp, angle: Option<f64>) {
        let (mask, value) = op.control_mask();
        match &op.kind {
            GateKind::Swap => {
                let (a, b) = (1usize << op.targets[0], 1usize << op.targets[1]);
                for i in 0..self.0.len() {
                    if i & a != 0 && i & b == 0 && i & mask == value {
                        self.0.swap(i, i ^ a ^ b);
                    }
                }
            }
            kind => {
                let m = kind.matrix(angle).expect("unitary single-target op").dagger();
                let t = 1usize << op.targets[0];
                for i0 in 0..self.0.len() {
                    if i0 & t != 0 || i0 & mask != value {
                        continue;
                    }
                    let i1 = i0 | t;
                    let (x, y) = (self.0[i0], self.0[i1]);
                    self.0[i0] = m.0[0] * x + m.0[1] * y;
                    self.0[i1] = m.0[2] * x + m.0[3] * y;
                }
            }
        }
    }
}

fn apply_inverse(state: &mut StateVector, op: &GateOp, angle: Option<f64>) -> Result<()> {
    let inv = op.inverse()?;
    state.apply_resolved(&inv, angle.map(|a| -a))
}

/// ⟨λ| (|ctrl⟩⟨ctrl| ⊗ D) |ψ⟩ for a single-target derivative matrix `D`.
fn derivative_overlap(lambda: &[C64], psi: &[C64], op: &GateOp, d: &crate::sim::Matrix2) -> C64 {
    let (mask, value) = op.control_mask();
    let t = 1usize << op.targets[0];
    let mut acc = C64::new(0.0, 0.0);
    for i0 in 0..psi.len() {
        if i0 & t != 0 || i0 & mask != value {
            continue;
        }
        let i1 = i0 | t;
        let (a, b) = (psi[i0], psi[i1]);
        acc += lambda[i0].conj() * (d.0[0] * a + d.0[1] * b);
        acc += lambda[i1].conj() * (d.0[2] * a + d.0[3] * b);
    }
    acc
}

/// Expectation of `observable` after running `circuit` on |0…0⟩.
pub fn expectation(circuit: &Circuit, params: &ParameterVector, observable: &Observable) -> Result<f64> {
    observable.expectation(&circuit.run_from_zero(params)?)
}

fn linear_loss(weights: Vec<f64>) -> impl Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync {
    move |p: &[f64]| Ok((dot(&weights, p), weights.clone()))
}

/// Parameter-shift gradient of `⟨observable⟩` starting from |0…0⟩.
pub fn parameter_shift_grad(
    circuit: &Circuit,
    params: &ParameterVector,
    observable: &Observable,
) -> Result<Vec<f64>> {
    let init = StateVector::zero(circuit.width())?;
    let loss = linear_loss(observable.weights(circuit.width())?);
    Ok(distribution_loss_grad(circuit, params, &init, &loss, GradMethod::ParameterShift, None, 0)?.1)
}

/// Adjoint-method gradient of `⟨observable⟩` starting from |0…0⟩.
pub fn adjoint_grad(
    circuit: &Circuit,
    params: &ParameterVector,
    observable: &Observable,
) -> Result<Vec<f64>> {
    let init = StateVector::zero(circuit.width())?;
    let loss = linear_loss(observable.weights(circuit.width())?);
    Ok(distribution_loss_grad(circuit, params, &init, &loss, GradMethod::Adjoint, None, 0)?.1)
}

/// Central differences with step `h` (must lie in `[1e-7, 1e-3]`).
pub fn finite_diff_grad(
    loss: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    params: &ParameterVector,
    h: f64,
) -> Result<Vec<f64>> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
    }
    central_differences(loss, &params.0, h)
}

fn central_differences(
    loss: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    params: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    (0..params.len())
        .into_par_iter()
        .map(|j| {
            let mut p = params.to_vec();
            p[j] = params[j] + h;
            let up = loss(&p)?;
            p[j] = params[j] - h;
            let down = loss(&p)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Control, GateKind};
    use std::f64::consts::FRAC_PI_2;

    fn rx_circuit() -> Circuit {
        let mut c = Circuit::new(1).unwrap();
        c.push_param(GateKind::RX, 0, "theta").unwrap();
        c
    }

    #[test]
    fn rx_z_gradient() {
        let c = rx_circuit();
        let at = |t: f64| ParameterVector(vec![t]);
        let g = parameter_shift_grad(&c, &at(FRAC_PI_2), &Observable::Z(0)).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-14);
        let g = parameter_shift_grad(&c, &at(0.0), &Observable::Z(0)).unwrap();
        assert!(g[0].abs() < 1e-14);
        let g = adjoint_grad(&c, &at(FRAC_PI_2), &Observable::Z(0)).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_and_phase_only() {
        let c = Circuit::new(2).unwrap();
        assert!(adjoint_grad(&c, &ParameterVector::default(), &Observable::Z(0)).unwrap().is_empty());
        let mut c = Circuit::new(1).unwrap();
        c.push_param(GateKind::RZ, 0, "phi").unwrap();
        let g = adjoint_grad(&c, &ParameterVector(vec![0.8]), &Observable::Z(0)).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn controlled_rotation_needs_four_terms() {
        // |+⟩ control, controlled-RY onto target, measure target Z
        let mut c = Circuit::new(2).unwrap();
        c.push(GateOp::h(0)).unwrap();
        let idx = c.param("a").unwrap();
        c.push(GateOp::ry(1, Angle::param(idx)).with_controls(vec![Control::closed(0)])).unwrap();
        let p = ParameterVector(vec![0.9]);
        // ⟨Z_1⟩ = ½(1 + cos a) → derivative −½ sin a
        let want = -0.5 * 0.9f64.sin();
        let ps = parameter_shift_grad(&c, &p, &Observable::Z(1)).unwrap();
        let adj = adjoint_grad(&c, &p, &Observable::Z(1)).unwrap();
        assert!((ps[0] - want).abs() < 1e-14, "{} vs {}", ps[0], want);
        assert!((adj[0] - want).abs() < 1e-14);
    }

    #[test]
    fn negated_and_shared_slots() {
        let mut c = Circuit::new(1).unwrap();
        let i = c.param("a").unwrap();
        c.push(GateOp::ry(0, Angle::param(i))).unwrap();
        c.push(GateOp::rx(0, Angle::Param { index: i, negate: true })).unwrap();
        c.push(GateOp::ry(0, Angle::param(i))).unwrap();
        let p = ParameterVector(vec![0.37]);
        let f = |q: &[f64]| expectation(&c, &ParameterVector(q.to_vec()), &Observable::Z(0));
        let fd = finite_diff_grad(&f, &p, 1e-5).unwrap();
        let ps = parameter_shift_grad(&c, &p, &Observable::Z(0)).unwrap();
        let adj = adjoint_grad(&c, &p, &Observable::Z(0)).unwrap();
        assert!((fd[0] - ps[0]).abs() < 1e-9);
        assert!((adj[0] - ps[0]).abs() < 1e-13);
    }

    #[test]
    fn finite_diff_basics() {
        let quad = |p: &[f64]| Ok(p.iter().map(|x| x * x).sum::<f64>());
        let g = finite_diff_grad(&quad, &ParameterVector(vec![1.0, 2.0]), 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        let constant = |_: &[f64]| Ok(3.0);
        assert_eq!(finite_diff_grad(&constant, &ParameterVector(vec![1.0, 2.0]), 1e-5).unwrap(), vec![0.0, 0.0]);
        assert!(finite_diff_grad(&quad, &ParameterVector(vec![1.0]), 1e-2).is_err());
    }

    #[test]
    fn reset_is_not_differentiable() {
        let mut c = rx_circuit();
        c.push(GateOp::reset(0)).unwrap();
        let p = ParameterVector(vec![0.1]);
        assert!(matches!(adjoint_grad(&c, &p, &Observable::Z(0)), Err(Error::Unsupported(_))));
        assert!(matches!(parameter_shift_grad(&c, &p, &Observable::Z(0)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn sampled_shift_gradient_is_close() {
        let c = rx_circuit();
        let p = ParameterVector(vec![1.0]);
        let init = StateVector::zero(1).unwrap();
        let loss = linear_loss(Observable::Z(0).weights(1).unwrap());
        let (_, g) = distribution_loss_grad(&c, &p, &init, &loss, GradMethod::ParameterShift, Some(20_000), 4)
            .unwrap();
        assert!((g[0] + 1.0f64.sin()).abs() < 0.03, "{}", g[0]);
    }
}
