use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which computational value of a control qubit activates the gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    /// Active on |0⟩ (drawn as an open circle).
    Open,
    /// Active on |1⟩ (drawn as a filled circle).
    Closed,
}

impl Polarity {
    pub fn bit(self) -> usize {
        match self {
            Polarity::Open => 0,
            Polarity::Closed => 1,
        }
    }

    pub fn from_bit(bit: usize) -> Self {
        if bit == 0 {
            Polarity::Open
        } else {
            Polarity::Closed
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Control {
    pub qubit: usize,
    pub polarity: Polarity,
}

impl Control {
    pub fn closed(qubit: usize) -> Self {
        Self { qubit, polarity: Polarity::Closed }
    }

    pub fn open(qubit: usize) -> Self {
        Self { qubit, polarity: Polarity::Open }
    }
}

/// Row-major 2×2 complex matrix `[m00, m01, m10, m11]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix2(pub [C64; 4]);

impl Matrix2 {
    pub fn identity() -> Self {
        let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        Matrix2([o, z, z, o])
    }

    pub fn x() -> Self {
        let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        Matrix2([z, o, o, z])
    }

    pub fn h() -> Self {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Matrix2([s, s, s, -s])
    }

    /// `[[cos θ/2, i sin θ/2], [i sin θ/2, cos θ/2]]`.
    ///
    /// Note the sign of the off-diagonal terms: RX(π)|0⟩ = i|1⟩.
    pub fn rx(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Matrix2([C64::new(c, 0.0), C64::new(0.0, s), C64::new(0.0, s), C64::new(c, 0.0)])
    }

    pub fn ry(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Matrix2([C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)])
    }

    pub fn rz(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        let z = C64::new(0.0, 0.0);
        Matrix2([C64::new(c, -s), z, z, C64::new(c, s)])
    }

    pub fn drx(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Matrix2([
            C64::new(-s / 2.0, 0.0),
            C64::new(0.0, c / 2.0),
            C64::new(0.0, c / 2.0),
            C64::new(-s / 2.0, 0.0),
        ])
    }

    pub fn dry(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Matrix2([
            C64::new(-s / 2.0, 0.0),
            C64::new(-c / 2.0, 0.0),
            C64::new(c / 2.0, 0.0),
            C64::new(-s / 2.0, 0.0),
        ])
    }

    pub fn drz(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        let z = C64::new(0.0, 0.0);
        // d/dθ e^{∓iθ/2} = ∓(i/2) e^{∓iθ/2}
        Matrix2([C64::new(-s / 2.0, -c / 2.0), z, z, C64::new(-s / 2.0, c / 2.0)])
    }

    pub fn dagger(&self) -> Self {
        let m = &self.0;
        Matrix2([m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()])
    }

    pub fn mul(&self, rhs: &Matrix2) -> Matrix2 {
        let (a, b) = (&self.0, &rhs.0);
        Matrix2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let p = self.dagger().mul(self);
        let id = Matrix2::identity();
        p.0.iter().zip(id.0.iter()).all(|(x, y)| (x - y).norm() <= tol)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    X,
    H,
    RX,
    RY,
    RZ,
    Swap,
    /// Arbitrary single-qubit unitary.
    U(Matrix2),
    /// Measure in the computational basis, then flip to |0⟩.
    Reset,
}

impl GateKind {
    pub fn is_rotation(&self) -> bool {
        matches!(self, GateKind::RX | GateKind::RY | GateKind::RZ)
    }

    pub fn num_targets(&self) -> usize {
        match self {
            GateKind::Swap => 2,
            _ => 1,
        }
    }

    /// Matrix of a single-target kind. `angle` is required for rotations.
    pub fn matrix(&self, angle: Option<f64>) -> Option<Matrix2> {
        match self {
            GateKind::X => Some(Matrix2::x()),
            GateKind::H => Some(Matrix2::h()),
            GateKind::RX => angle.map(Matrix2::rx),
            GateKind::RY => angle.map(Matrix2::ry),
            GateKind::RZ => angle.map(Matrix2::rz),
            GateKind::U(m) => Some(*m),
            GateKind::Swap | GateKind::Reset => None,
        }
    }

    /// dR/dθ for rotation kinds.
    pub fn derivative(&self, angle: f64) -> Option<Matrix2> {
        match self {
            GateKind::RX => Some(Matrix2::drx(angle)),
            GateKind::RY => Some(Matrix2::dry(angle)),
            GateKind::RZ => Some(Matrix2::drz(angle)),
            _ => None,
        }
    }
}

/// Rotation angle: either a literal or a reference into a circuit's
/// parameter list. `negate` is set on inverted circuits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Fixed(f64),
    Param { index: usize, negate: bool },
}

impl Angle {
    pub fn param(index: usize) -> Self {
        Angle::Param { index, negate: false }
    }

    pub fn sign(&self) -> f64 {
        match self {
            Angle::Param { negate: true, .. } => -1.0,
            _ => 1.0,
        }
    }

    pub fn negated(self) -> Self {
        match self {
            Angle::Fixed(a) => Angle::Fixed(-a),
            Angle::Param { index, negate } => Angle::Param { index, negate: !negate },
        }
    }
}

/// One gate application. Controls are an orthogonal attribute: a CNOT is an
/// `X` with one closed control, a Toffoli an `X` with two, a Fredkin a `Swap`
/// with one.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub controls: Vec<Control>,
    pub angle: Option<Angle>,
}

impl GateOp {
    fn single(kind: GateKind, target: usize) -> Self {
        Self { kind, targets: vec![target], controls: Vec::new(), angle: None }
    }

    pub fn x(target: usize) -> Self {
        Self::single(GateKind::X, target)
    }

    pub fn h(target: usize) -> Self {
        Self::single(GateKind::H, target)
    }

    pub fn rotation(kind: GateKind, target: usize, angle: Angle) -> Self {
        Self { angle: Some(angle), ..Self::single(kind, target) }
    }

    pub fn rx(target: usize, angle: Angle) -> Self {
        Self::rotation(GateKind::RX, target, angle)
    }

    pub fn ry(target: usize, angle: Angle) -> Self {
        Self::rotation(GateKind::RY, target, angle)
    }

    pub fn rz(target: usize, angle: Angle) -> Self {
        Self::rotation(GateKind::RZ, target, angle)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::x(target).with_controls(vec![Control::closed(control)])
    }

    pub fn mcx(controls: Vec<Control>, target: usize) -> Self {
        Self::x(target).with_controls(controls)
    }

    pub fn mcu(controls: Vec<Control>, target: usize, matrix: Matrix2) -> Self {
        Self::single(GateKind::U(matrix), target).with_controls(controls)
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Self { kind: GateKind::Swap, targets: vec![a, b], controls: Vec::new(), angle: None }
    }

    pub fn reset(qubit: usize) -> Self {
        Self::single(GateKind::Reset, qubit)
    }

    pub fn with_controls(mut self, controls: Vec<Control>) -> Self {
        self.controls = controls;
        self
    }

    pub fn is_unitary(&self) -> bool {
        !matches!(self.kind, GateKind::Reset)
    }

    pub fn param_index(&self) -> Option<usize> {
        match self.angle {
            Some(Angle::Param { index, .. }) => Some(index),
            _ => None,
        }
    }

    /// Resolve the numeric angle, using `bound` for parameter slots.
    pub fn resolve_angle(&self, bound: Option<f64>) -> Result<Option<f64>> {
        match (self.angle, self.kind.is_rotation()) {
            (None, false) => Ok(None),
            (None, true) => Err(Error::Parameter(format!("{:?} gate has no angle", self.kind))),
            (Some(_), false) => Err(Error::InvalidGate(format!("{:?} gate takes no angle", self.kind))),
            (Some(Angle::Fixed(a)), true) => Ok(Some(a)),
            (Some(Angle::Param { index, negate }), true) => match bound {
                Some(v) => Ok(Some(if negate { -v } else { v })),
                None => Err(Error::Parameter(format!("parameter slot {index} is unbound"))),
            },
        }
    }

    /// Structural checks against a register width.
    pub fn validate(&self, width: usize) -> Result<()> {
        if self.targets.len() != self.kind.num_targets() {
            return Err(Error::InvalidGate(format!(
                "{:?} expects {} target(s), got {}",
                self.kind,
                self.kind.num_targets(),
                self.targets.len()
            )));
        }
        if matches!(self.kind, GateKind::Reset) && !self.controls.is_empty() {
            return Err(Error::InvalidGate("reset cannot be controlled".into()));
        }
        if let GateKind::U(m) = &self.kind {
            if !m.is_unitary(1e-10) {
                return Err(Error::InvalidGate("U matrix is not unitary".into()));
            }
        }
        let mut seen = 0u64;
        let qubits = self.targets.iter().copied().chain(self.controls.iter().map(|c| c.qubit));
        for q in qubits {
            if q >= width {
                return Err(Error::Index { qubit: q, width });
            }
            if seen & (1 << q) != 0 {
                return Err(Error::InvalidGate(format!("qubit {q} used twice in one gate")));
            }
            seen |= 1 << q;
        }
        match (self.kind.is_rotation(), self.angle) {
            (true, None) => Err(Error::Parameter("rotation without angle".into())),
            (false, Some(_)) => Err(Error::InvalidGate(format!("{:?} gate takes no angle", self.kind))),
            (_, Some(Angle::Fixed(a))) if !a.is_finite() => {
                Err(Error::Parameter(format!("non-finite angle {a}")))
            }
            _ => Ok(()),
        }
    }

    /// Bit mask and required value of the control qubits.
    pub fn control_mask(&self) -> (usize, usize) {
        self.controls.iter().fold((0, 0), |(mask, value), c| {
            (mask | (1 << c.qubit), value | (c.polarity.bit() << c.qubit))
        })
    }

    /// Inverse gate. Fails on reset.
    pub fn inverse(&self) -> Result<GateOp> {
        let mut op = self.clone();
        match &self.kind {
            GateKind::X | GateKind::H | GateKind::Swap => {}
            GateKind::RX | GateKind::RY | GateKind::RZ => op.angle = self.angle.map(Angle::negated),
            GateKind::U(m) => op.kind = GateKind::U(m.dagger()),
            GateKind::Reset => return Err(Error::Unsupported("reset has no inverse".into())),
        }
        Ok(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rotation_matrices_are_unitary() {
        for &t in &[0.0, 0.3, -1.7, PI, 2.5 * PI] {
            assert!(Matrix2::rx(t).is_unitary(1e-14));
            assert!(Matrix2::ry(t).is_unitary(1e-14));
            assert!(Matrix2::rz(t).is_unitary(1e-14));
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-6;
        for t in [0.1, 1.2, -2.4] {
            for (f, df) in [
                (Matrix2::rx as fn(f64) -> Matrix2, Matrix2::drx as fn(f64) -> Matrix2),
                (Matrix2::ry, Matrix2::dry),
                (Matrix2::rz, Matrix2::drz),
            ] {
                let (p, m, d) = (f(t + h), f(t - h), df(t));
                for k in 0..4 {
                    let fd = (p.0[k] - m.0[k]) / (2.0 * h);
                    assert!((fd - d.0[k]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn validate_rejects_overlap_and_range() {
        let op = GateOp::cnot(1, 1);
        assert!(matches!(op.validate(2), Err(Error::InvalidGate(_))));
        let op = GateOp::x(3);
        assert!(matches!(op.validate(2), Err(Error::Index { qubit: 3, width: 2 })));
        let op = GateOp { angle: None, ..GateOp::ry(0, Angle::Fixed(0.0)) };
        assert!(matches!(op.validate(1), Err(Error::Parameter(_))));
    }

    #[test]
    fn unbound_parameter_is_an_error() {
        let op = GateOp::rx(0, Angle::param(0));
        assert!(matches!(op.resolve_angle(None), Err(Error::Parameter(_))));
        assert_eq!(op.resolve_angle(Some(0.5)).unwrap(), Some(0.5));
        assert_eq!(op.inverse().unwrap().resolve_angle(Some(0.5)).unwrap(), Some(-0.5));
    }
}
