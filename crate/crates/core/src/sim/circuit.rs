use serde::{Deserialize, Serialize};

use super::gate::{Angle, GateKind, GateOp};
use super::state::{StateVector, MAX_WIDTH};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Angles bound to a circuit's parameter slots, in `param_names` order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite parameter {v}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// An ordered gate list over a fixed register, with named parameter slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    width: usize,
    ops: Vec<GateOp>,
    param_names: Vec<String>,
}

pub(crate) fn valid_param_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':' | '-'))
        && !name.starts_with('-')
}

impl Circuit {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 || width > MAX_WIDTH {
            return Err(Error::Capacity { width, max: MAX_WIDTH });
        }
        Ok(Self { width, ops: Vec::new(), param_names: Vec::new() })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    /// Index of the named slot, registering it if new.
    pub fn param(&mut self, name: &str) -> Result<usize> {
        if let Some(i) = self.param_names.iter().position(|n| n == name) {
            return Ok(i);
        }
        if !valid_param_name(name) {
            return Err(Error::Parameter(format!("invalid parameter name {name:?}")));
        }
        self.param_names.push(name.to_string());
        Ok(self.param_names.len() - 1)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn push(&mut self, op: GateOp) -> Result<&mut Self> {
        op.validate(self.width)?;
        if let Some(Angle::Param { index, .. }) = op.angle {
            if index >= self.param_names.len() {
                return Err(Error::Parameter(format!("slot {index} not declared")));
            }
        }
        self.ops.push(op);
        Ok(self)
    }

    /// Rotation bound to a named slot.
    pub fn push_param(&mut self, kind: GateKind, target: usize, name: &str) -> Result<&mut Self> {
        let index = self.param(name)?;
        self.push(GateOp::rotation(kind, target, Angle::param(index)))
    }

    /// Append `other`, relabelling its qubit `q` as `qubits[q]` and its
    /// parameter names through `rename`. Slots that rename to an existing
    /// name are shared.
    pub fn append_mapped(
        &mut self,
        other: &Circuit,
        qubits: &[usize],
        rename: impl Fn(&str) -> String,
    ) -> Result<&mut Self> {
        if qubits.len() != other.width {
            return Err(Error::WidthMismatch { expected: other.width, actual: qubits.len() });
        }
        let slot_map = other
            .param_names
            .iter()
            .map(|n| self.param(&rename(n)))
            .collect::<Result<Vec<_>>>()?;
        for op in &other.ops {
            let mut op = op.clone();
            for t in op.targets.iter_mut() {
                *t = qubits[*t];
            }
            for c in op.controls.iter_mut() {
                c.qubit = qubits[c.qubit];
            }
            if let Some(Angle::Param { index, negate }) = op.angle {
                op.angle = Some(Angle::Param { index: slot_map[index], negate });
            }
            self.push(op)?;
        }
        Ok(self)
    }

    /// Append `other` on the same qubits with the same parameter names.
    pub fn append(&mut self, other: &Circuit) -> Result<&mut Self> {
        let qubits: Vec<usize> = (0..other.width).collect();
        self.append_mapped(other, &qubits, |n| n.to_string())
    }

    /// Adjoint circuit: reversed order, each gate inverted. Parameter slots
    /// are kept and marked negated.
    pub fn inverse(&self) -> Result<Circuit> {
        let ops = self.ops.iter().rev().map(GateOp::inverse).collect::<Result<Vec<_>>>()?;
        Ok(Circuit { width: self.width, ops, param_names: self.param_names.clone() })
    }

    /// Copy with every slot replaced by its value; the result has no parameters.
    pub fn bind(&self, params: &ParameterVector) -> Result<Circuit> {
        self.check_params(params)?;
        let ops = self
            .ops
            .iter()
            .map(|op| {
                let mut op = op.clone();
                if let Some(a) = self.resolve(&op, &params.0) {
                    op.angle = Some(Angle::Fixed(a));
                }
                op
            })
            .collect();
        Ok(Circuit { width: self.width, ops, param_names: Vec::new() })
    }

    pub fn is_unitary(&self) -> bool {
        self.ops.iter().all(GateOp::is_unitary)
    }

    pub fn count_resets(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o.kind, GateKind::Reset)).count()
    }

    pub(crate) fn check_params(&self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.param_names.len() {
            return Err(Error::Parameter(format!(
                "circuit has {} parameters, got {}",
                self.param_names.len(),
                params.len()
            )));
        }
        if let Some(v) = params.0.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite parameter {v}")));
        }
        Ok(())
    }

    pub(crate) fn resolve(&self, op: &GateOp, params: &[f64]) -> Option<f64> {
        match op.angle {
            None => None,
            Some(Angle::Fixed(a)) => Some(a),
            Some(Angle::Param { index, negate }) => {
                let v = params[index];
                Some(if negate { -v } else { v })
            }
        }
    }

    /// Run every op on `initial`. Fails on reset; see [`Circuit::run_seeded`].
    pub fn run(&self, params: &ParameterVector, initial: &StateVector) -> Result<StateVector> {
        if !self.is_unitary() {
            return Err(Error::Unsupported("circuit contains reset; use run_seeded".into()));
        }
        self.run_seeded(params, initial, 0)
    }

    /// Run every op, drawing reset outcomes from child streams of `seed`.
    pub fn run_seeded(
        &self,
        params: &ParameterVector,
        initial: &StateVector,
        seed: u64,
    ) -> Result<StateVector> {
        if initial.width() != self.width {
            return Err(Error::WidthMismatch { expected: self.width, actual: initial.width() });
        }
        self.check_params(params)?;
        let root = RngStream::new(seed);
        let mut state = initial.clone();
        for (i, op) in self.ops.iter().enumerate() {
            if let GateKind::Reset = op.kind {
                state = state.reset(op.targets[0], root.derive_seed(i as u64))?;
            } else {
                state.apply_resolved(op, self.resolve(op, &params.0))?;
            }
        }
        state.check_norm()?;
        Ok(state)
    }

    /// Run on |0…0⟩.
    pub fn run_from_zero(&self, params: &ParameterVector) -> Result<StateVector> {
        self.run(params, &StateVector::zero(self.width)?)
    }
}

/// Apply `circuit` with `params` to `initial`.
pub fn apply_circuit(
    circuit: &Circuit,
    params: &ParameterVector,
    initial: &StateVector,
) -> Result<StateVector> {
    circuit.run(params, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::gate::Control;

    #[test]
    fn empty_circuit_is_identity() {
        let c = Circuit::new(2).unwrap();
        let mut init = StateVector::zero(2).unwrap();
        init.apply_gate(&GateOp::h(1), None).unwrap();
        let out = c.run(&ParameterVector::default(), &init).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn x_twice_is_identity() {
        let mut c = Circuit::new(1).unwrap();
        c.push(GateOp::x(0)).unwrap().push(GateOp::x(0)).unwrap();
        let init = StateVector::zero(1).unwrap();
        assert_eq!(c.run(&ParameterVector::default(), &init).unwrap(), init);
    }

    #[test]
    fn width_and_param_mismatch() {
        let mut c = Circuit::new(2).unwrap();
        c.push_param(GateKind::RY, 0, "a").unwrap();
        let init = StateVector::zero(3).unwrap();
        assert!(matches!(
            c.run(&ParameterVector(vec![0.1]), &init),
            Err(Error::WidthMismatch { .. })
        ));
        let init = StateVector::zero(2).unwrap();
        assert!(matches!(c.run(&ParameterVector(vec![]), &init), Err(Error::Parameter(_))));
    }

    #[test]
    fn push_rejects_bad_ops() {
        let mut c = Circuit::new(2).unwrap();
        assert!(c.push(GateOp::ry(0, Angle::param(0))).is_err());
        assert!(c.push(GateOp::cnot(0, 0)).is_err());
        assert!(c.push(GateOp::mcx(vec![Control::open(5)], 0)).is_err());
    }

    #[test]
    fn inverse_undoes_circuit() {
        let mut c = Circuit::new(3).unwrap();
        c.push(GateOp::h(0)).unwrap();
        c.push_param(GateKind::RY, 1, "a").unwrap();
        c.push(GateOp::cnot(0, 2)).unwrap();
        c.push_param(GateKind::RX, 2, "b").unwrap();
        c.push(GateOp::mcx(vec![Control::open(0), Control::closed(2)], 1)).unwrap();
        c.push_param(GateKind::RZ, 0, "a").unwrap();
        let mut full = c.clone();
        full.append(&c.inverse().unwrap()).unwrap();
        let p = ParameterVector(vec![0.7, -1.3]);
        let out = full.run_from_zero(&p).unwrap();
        assert!((out.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reset_requires_seeded_run() {
        let mut c = Circuit::new(1).unwrap();
        c.push(GateOp::h(0)).unwrap().push(GateOp::reset(0)).unwrap();
        let p = ParameterVector::default();
        assert!(c.run_from_zero(&p).is_err());
        let out = c.run_seeded(&p, &StateVector::zero(1).unwrap(), 5).unwrap();
        assert!((out.probabilities()[0] - 1.0).abs() < 1e-12);
    }
}
