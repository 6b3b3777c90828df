use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::gate::{GateKind, GateOp, Matrix2};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest register the simulator will allocate.
pub const MAX_WIDTH: usize = 24;

/// Tolerance on |‖ψ‖² − 1| after any operation.
pub const NORM_TOLERANCE: f64 = 1e-10;

const SHOT_BATCH: usize = 1 << 14;

/// Dense amplitude vector of a `width`-qubit register.
///
/// Bit `k` of a basis index is the value of qubit `k`, so qubit 0 is the
/// least significant bit. Registers drawn top-down therefore read with the
/// top wire as the units bit.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    width: usize,
    amps: Vec<C64>,
}

fn check_width(width: usize) -> Result<()> {
    if width == 0 || width > MAX_WIDTH {
        return Err(Error::Capacity { width, max: MAX_WIDTH });
    }
    Ok(())
}

/// The `k`-th index with bit `t` cleared.
#[inline]
fn insert_zero(k: usize, t: usize) -> usize {
    let low = k & ((1 << t) - 1);
    ((k >> t) << (t + 1)) | low
}

impl StateVector {
    pub fn zero(width: usize) -> Result<Self> {
        Self::basis(width, 0)
    }

    pub fn basis(width: usize, index: usize) -> Result<Self> {
        check_width(width)?;
        if index >= 1 << width {
            return Err(Error::InvalidArgument(format!("basis index {index} >= 2^{width}")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << width];
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { width, amps })
    }

    /// Wrap raw amplitudes. The length must be a power of two and the
    /// vector normalized within [`NORM_TOLERANCE`].
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("amplitude count {len} is not 2^q")));
        }
        let width = len.trailing_zeros() as usize;
        check_width(width)?;
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite amplitude".into()));
        }
        let state = Self { width, amps };
        state.check_norm()?;
        Ok(state)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn check_norm(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE || !n.is_finite() {
            return Err(Error::NormDrift { norm: n.sqrt() });
        }
        Ok(())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.width {
            return Err(Error::Index { qubit, width: self.width });
        }
        Ok(())
    }

    /// Apply one gate. `bound` supplies the value of a parameter slot.
    /// Reset is rejected here; use [`StateVector::reset`].
    pub fn apply_gate(&mut self, op: &GateOp, bound: Option<f64>) -> Result<()> {
        op.validate(self.width)?;
        let angle = op.resolve_angle(bound)?;
        self.apply_resolved(op, angle)
    }

    /// Apply a validated gate whose angle has already been resolved.
    pub(crate) fn apply_resolved(&mut self, op: &GateOp, angle: Option<f64>) -> Result<()> {
        let (mask, value) = op.control_mask();
        match &op.kind {
            GateKind::X => self.kernel_x(op.targets[0], mask, value),
            GateKind::Swap => self.kernel_swap(op.targets[0], op.targets[1], mask, value),
            GateKind::Reset => {
                return Err(Error::Unsupported("reset needs a seed; use StateVector::reset".into()))
            }
            kind => {
                let m = kind
                    .matrix(angle)
                    .ok_or_else(|| Error::Parameter(format!("{kind:?} gate has no angle")))?;
                self.apply_matrix(op.targets[0], mask, value, &m);
            }
        }
        Ok(())
    }

    /// Apply `m` to `target` on the subspace where `(i & mask) == value`.
    pub(crate) fn apply_matrix(&mut self, target: usize, mask: usize, value: usize, m: &Matrix2) {
        let tbit = 1usize << target;
        let [m00, m01, m10, m11] = m.0;
        for k in 0..self.amps.len() / 2 {
            let i0 = insert_zero(k, target);
            if i0 & mask != value {
                continue;
            }
            let i1 = i0 | tbit;
            let (a, b) = (self.amps[i0], self.amps[i1]);
            self.amps[i0] = m00 * a + m01 * b;
            self.amps[i1] = m10 * a + m11 * b;
        }
    }

    fn kernel_x(&mut self, target: usize, mask: usize, value: usize) {
        let tbit = 1usize << target;
        for k in 0..self.amps.len() / 2 {
            let i0 = insert_zero(k, target);
            if i0 & mask == value {
                self.amps.swap(i0, i0 | tbit);
            }
        }
    }

    fn kernel_swap(&mut self, a: usize, b: usize, mask: usize, value: usize) {
        let (abit, bbit) = (1usize << a, 1usize << b);
        for i in 0..self.amps.len() {
            // visit each pair once: the member with a=1, b=0
            if i & abit != 0 && i & bbit == 0 && i & mask == value {
                self.amps.swap(i, i ^ abit ^ bbit);
            }
        }
    }

    /// Born-rule probabilities of every basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability that `qubit` reads `value`.
    pub fn qubit_probability(&self, qubit: usize, value: u8) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        let want = if value == 0 { 0 } else { bit };
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit == want)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// ⟨Z⟩ on one qubit: p(0) − p(1).
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// `self ⊗ other`, with `self` on the low qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let width = self.width + other.width;
        check_width(width)?;
        let mut amps = Vec::with_capacity(1 << width);
        for b in &other.amps {
            amps.extend(self.amps.iter().map(|a| a * b));
        }
        Ok(StateVector { width, amps })
    }

    /// ⟨a|b⟩, conjugating `self`.
    pub fn inner_product(&self, other: &StateVector) -> Result<C64> {
        if self.width != other.width {
            return Err(Error::WidthMismatch { expected: self.width, actual: other.width });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Draw `shots` basis indices i.i.d. from the Born distribution.
    ///
    /// Shots are drawn in fixed-size batches, each from its own child
    /// stream, so the result depends only on `seed` and not on threading.
    pub fn sample(&self, shots: usize, seed: u64) -> Vec<usize> {
        let mut cdf = Vec::with_capacity(self.amps.len());
        let mut acc = 0.0;
        for a in &self.amps {
            acc += a.norm_sqr();
            cdf.push(acc);
        }
        sample_from_cdf(&cdf, shots, seed)
    }

    /// Project `qubit` onto `value` and renormalize. Returns the
    /// pre-normalization probability of that outcome.
    pub fn post_select(&self, qubit: usize, value: u8) -> Result<(StateVector, f64)> {
        let p = self.qubit_probability(qubit, value)?;
        if p < 1e-12 {
            return Err(Error::ImpossibleOutcome { qubit, value, probability: p });
        }
        let bit = 1usize << qubit;
        let want = if value == 0 { 0 } else { bit };
        let scale = 1.0 / p.sqrt();
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == want { a * scale } else { C64::new(0.0, 0.0) })
            .collect();
        Ok((StateVector { width: self.width, amps }, p))
    }

    /// Measure `qubit` (outcome drawn with `seed`) and flip it back to |0⟩.
    pub fn reset(&self, qubit: usize, seed: u64) -> Result<StateVector> {
        let p1 = self.qubit_probability(qubit, 1)?;
        let outcome = if p1 <= 0.0 {
            0
        } else if p1 >= 1.0 {
            1
        } else {
            u8::from(RngStream::new(seed).uniform() < p1)
        };
        let (mut collapsed, _) = self.post_select(qubit, outcome)?;
        if outcome == 1 {
            collapsed.kernel_x(qubit, 0, 0);
        }
        Ok(collapsed)
    }

    /// Marginal distribution of the register formed by `qubits`
    /// (first listed qubit = least significant bit of the register value).
    pub fn register_distribution(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        for &q in qubits {
            self.check_qubit(q)?;
        }
        let mut out = vec![0.0; 1 << qubits.len()];
        for (i, a) in self.amps.iter().enumerate() {
            out[extract_register(i, qubits)] += a.norm_sqr();
        }
        Ok(out)
    }
}

/// Read the value of a register out of a basis index.
pub fn extract_register(index: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .enumerate()
        .fold(0, |acc, (pos, &q)| acc | (((index >> q) & 1) << pos))
}

/// Draw indices from a cumulative distribution (last entry ≈ 1).
pub fn sample_from_cdf(cdf: &[f64], shots: usize, seed: u64) -> Vec<usize> {
    let total = cdf.last().copied().unwrap_or(0.0);
    let last_nonzero = cdf
        .iter()
        .enumerate()
        .rev()
        .find(|(i, c)| *i == 0 || **c > cdf[*i - 1])
        .map(|(i, _)| i)
        .unwrap_or(0);
    let root = RngStream::new(seed);
    let batches = shots.div_ceil(SHOT_BATCH);
    (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = root.split(b as u64);
            let n = SHOT_BATCH.min(shots - b * SHOT_BATCH);
            (0..n)
                .map(move |_| {
                    let u = rng.uniform() * total;
                    cdf.partition_point(|&c| c <= u).min(last_nonzero)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::gate::{Angle, Control};
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    fn bell() -> StateVector {
        let s = FRAC_1_SQRT_2;
        StateVector::from_amplitudes(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]).unwrap()
    }

    #[test]
    fn zero_state_widths() {
        assert_eq!(StateVector::zero(1).unwrap().amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(StateVector::zero(2).unwrap().amplitudes().len(), 4);
        assert_eq!(StateVector::zero(2).unwrap().amplitudes()[0], c(1.0, 0.0));
        assert!(matches!(StateVector::zero(25), Err(Error::Capacity { width: 25, .. })));
        assert!(matches!(StateVector::zero(0), Err(Error::Capacity { .. })));
    }

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply_gate(&GateOp::h(0), None).unwrap();
        assert!(close(s.amplitudes(), &[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)], 1e-15));
        let p = s.probabilities();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rx_pi_gives_i_one() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply_gate(&GateOp::rx(0, Angle::Fixed(PI)), None).unwrap();
        assert!(close(s.amplitudes(), &[c(0.0, 0.0), c(0.0, 1.0)], 1e-15));
    }

    #[test]
    fn open_closed_toffoli_flips_bottom() {
        // |q2=1, q1=0, q0=0⟩ = index 4
        let mut s = StateVector::basis(3, 0b100).unwrap();
        let op = GateOp::mcx(vec![Control::closed(2), Control::open(1)], 0);
        s.apply_gate(&op, None).unwrap();
        assert_eq!(s.amplitudes()[0b101], c(1.0, 0.0));
        // a non-matching control pattern leaves the state alone
        let mut t = StateVector::basis(3, 0b110).unwrap();
        t.apply_gate(&op, None).unwrap();
        assert_eq!(t.amplitudes()[0b110], c(1.0, 0.0));
    }

    #[test]
    fn unbound_and_out_of_range() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(s.apply_gate(&GateOp::ry(0, Angle::param(0)), None), Err(Error::Parameter(_))));
        assert!(matches!(s.apply_gate(&GateOp::x(2), None), Err(Error::Index { .. })));
    }

    #[test]
    fn inner_products() {
        let z = StateVector::zero(1).unwrap();
        let one = StateVector::basis(1, 1).unwrap();
        let mut plus = z.clone();
        plus.apply_gate(&GateOp::h(0), None).unwrap();
        assert!((z.inner_product(&z).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(z.inner_product(&one).unwrap(), c(0.0, 0.0));
        assert!((z.inner_product(&plus).unwrap() - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        let two = StateVector::zero(2).unwrap();
        assert!(matches!(z.inner_product(&two), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn expectation_z_values() {
        let z = StateVector::zero(1).unwrap();
        assert_eq!(z.expectation_z(0).unwrap(), 1.0);
        let mut plus = z.clone();
        plus.apply_gate(&GateOp::h(0), None).unwrap();
        assert!(plus.expectation_z(0).unwrap().abs() < 1e-15);
        for t in [0.0, 0.4, 1.3, 2.9, -0.8] {
            let mut s = z.clone();
            s.apply_gate(&GateOp::rx(0, Angle::Fixed(t)), None).unwrap();
            assert!((s.expectation_z(0).unwrap() - t.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn post_select_cases() {
        let (s, p) = bell().post_select(0, 0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(close(s.amplitudes(), StateVector::zero(2).unwrap().amplitudes(), 1e-15));

        let one = StateVector::basis(1, 1).unwrap();
        assert!(matches!(one.post_select(0, 0), Err(Error::ImpossibleOutcome { .. })));

        let mut plus0 = StateVector::zero(2).unwrap();
        plus0.apply_gate(&GateOp::h(0), None).unwrap();
        let (s, p) = plus0.post_select(1, 0).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert!(close(s.amplitudes(), plus0.amplitudes(), 1e-15));

        // idempotent
        let (again, p2) = s.post_select(1, 0).unwrap();
        assert!((p2 - 1.0).abs() < 1e-15);
        assert!(close(again.amplitudes(), s.amplitudes(), 1e-15));
    }

    #[test]
    fn reset_cases() {
        let one = StateVector::basis(1, 1).unwrap();
        assert_eq!(one.reset(0, 3).unwrap().amplitudes()[0], c(1.0, 0.0));
        let zero = StateVector::zero(1).unwrap();
        assert_eq!(zero.reset(0, 3).unwrap(), zero);

        let mut seen = [0usize; 4];
        for seed in 0..400 {
            let r = bell().reset(0, seed).unwrap();
            r.check_norm().unwrap();
            let idx = r.probabilities().iter().position(|&p| (p - 1.0).abs() < 1e-12).unwrap();
            seen[idx] += 1;
        }
        // outcomes |00⟩ (index 0) or |10⟩ (index 2), roughly half each
        assert_eq!(seen[1] + seen[3], 0);
        assert!(seen[0] > 150 && seen[2] > 150, "{seen:?}");
    }

    #[test]
    fn sample_point_mass_and_determinism() {
        let one = StateVector::basis(1, 1).unwrap();
        assert!(one.sample(1000, 1).iter().all(|&i| i == 1));
        let mut plus = StateVector::zero(1).unwrap();
        plus.apply_gate(&GateOp::h(0), None).unwrap();
        let a = plus.sample(10_000, 9);
        assert_eq!(a, plus.sample(10_000, 9));
        let zeros = a.iter().filter(|&&i| i == 0).count() as f64 / 1e4;
        assert!((0.48..=0.52).contains(&zeros), "{zeros}");
    }

    #[test]
    fn register_distribution_reads_lsb_first() {
        // qubit 2 set only
        let s = StateVector::basis(3, 0b100).unwrap();
        let d = s.register_distribution(&[2, 0]).unwrap();
        assert_eq!(d, vec![0.0, 1.0, 0.0, 0.0]);
    }
}
