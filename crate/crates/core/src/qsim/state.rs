use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense 4×4 unitary acting on an ordered qubit pair `(a, b)`, row-major in
/// the local basis `|q_a q_b⟩` with `q_a` the high bit.
pub type Unitary4 = [[Complex64; 4]; 4];

/// Complex amplitude vector over `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Self { n_qubits, amps }
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes. The caller is responsible for normalization.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Bit mask of `qubit` inside a basis index.
    #[inline]
    pub(crate) fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    pub(crate) fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            Err(Error::QubitOutOfRange {
                index: qubit,
                n_qubits: self.n_qubits,
            })
        } else {
            Ok(())
        }
    }

    /// Visits every `(i, i | mask)` index pair once.
    #[inline]
    fn for_each_pair(&mut self, qubit: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let mask = self.mask(qubit);
        let dim = self.amps.len();
        let mut block = 0;
        while block < dim {
            let (lo, hi) = self.amps[block..block + 2 * mask].split_at_mut(mask);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a, b);
            }
            block += 2 * mask;
        }
    }

    pub(crate) fn rx(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        // [[c, -is], [-is, c]]
        self.for_each_pair(qubit, |a, b| {
            let (a0, b0) = (*a, *b);
            *a = Complex64::new(c * a0.re + s * b0.im, c * a0.im - s * b0.re);
            *b = Complex64::new(s * a0.im + c * b0.re, -s * a0.re + c * b0.im);
        });
    }

    pub(crate) fn ry(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        // [[c, -s], [s, c]]
        self.for_each_pair(qubit, |a, b| {
            let (a0, b0) = (*a, *b);
            *a = a0 * c - b0 * s;
            *b = a0 * s + b0 * c;
        });
    }

    pub(crate) fn rz(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let lo = Complex64::new(c, -s);
        let hi = Complex64::new(c, s);
        self.for_each_pair(qubit, |a, b| {
            *a *= lo;
            *b *= hi;
        });
    }

    pub(crate) fn cz(&mut self, q0: usize, q1: usize) {
        let m = self.mask(q0) | self.mask(q1);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & m == m {
                *a = -*a;
            }
        }
    }

    pub(crate) fn cx(&mut self, control: usize, target: usize) {
        let mc = self.mask(control);
        let mt = self.mask(target);
        for i in 0..self.amps.len() {
            if i & mc != 0 && i & mt == 0 {
                self.amps.swap(i, i | mt);
            }
        }
    }

    /// Applies a dense two-qubit unitary to the ordered pair `(a, b)`.
    pub fn apply_unitary4(&mut self, a: usize, b: usize, u: &Unitary4) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Err(Error::InvalidGate(format!(
                "two-qubit unitary needs distinct qubits, got ({a}, {b})"
            )));
        }
        self.unitary4(a, b, u);
        Ok(())
    }

    pub(crate) fn unitary4(&mut self, a: usize, b: usize, u: &Unitary4) {
        let ma = self.mask(a);
        let mb = self.mask(b);
        let (lo, hi) = if ma < mb { (ma, mb) } else { (mb, ma) };
        let dim = self.amps.len();
        let amps = &mut self.amps[..];
        // Blocks of `lo` consecutive indices with both bits clear.
        let mut outer = 0;
        while outer < dim {
            let mut mid = outer;
            while mid < outer + hi {
                for i in mid..mid + lo {
                    let v = [amps[i], amps[i | mb], amps[i | ma], amps[i | ma | mb]];
                    let out = u.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3]);
                    amps[i] = out[0];
                    amps[i | mb] = out[1];
                    amps[i | ma] = out[2];
                    amps[i | ma | mb] = out[3];
                }
                mid += 2 * lo;
            }
            outer += 2 * hi;
        }
    }

    /// `⟨Z_q⟩` for every qubit, from a single pass over the probabilities.
    pub fn z_expectations(&self) -> Vec<f64> {
        let n = self.n_qubits;
        let mut z = vec![0.0; n];
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, zq) in z.iter_mut().enumerate() {
                if i & (1 << (n - 1 - q)) == 0 {
                    *zq += p;
                } else {
                    *zq -= p;
                }
            }
        }
        z
    }
}

/// `(1/N) Σ_i w_i ⟨Z_{q_i}⟩` with `N` the number of listed qubits.
pub fn expectation_weighted_z(state: &StateVector, qubits: &[usize], weights: &[f64]) -> Result<f64> {
    if qubits.is_empty() {
        return Err(Error::InvalidArgument("empty measured-qubit list".into()));
    }
    if qubits.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: qubits.len(),
            got: weights.len(),
        });
    }
    for (k, &q) in qubits.iter().enumerate() {
        state.check_qubit(q)?;
        if qubits[..k].contains(&q) {
            return Err(Error::InvalidArgument(format!("qubit {q} listed twice")));
        }
    }
    Ok(weighted_z_unchecked(state, qubits, weights))
}

pub(crate) fn weighted_z_unchecked(state: &StateVector, qubits: &[usize], weights: &[f64]) -> f64 {
    let masks: Vec<usize> = qubits.iter().map(|&q| state.mask(q)).collect();
    let mut acc = 0.0;
    for (i, a) in state.amps.iter().enumerate() {
        let p = a.norm_sqr();
        let mut s = 0.0;
        for (&m, &w) in masks.iter().zip(weights) {
            s += if i & m == 0 { w } else { -w };
        }
        acc += p * s;
    }
    acc / qubits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn bell() -> StateVector {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        StateVector::from_amplitudes(vec![h, ZERO, ZERO, h]).unwrap()
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let mut s = StateVector::zero(3);
        s.ry(0, PI);
        assert_abs_diff_eq!(s.amplitudes()[0b100].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn weighted_z_examples() {
        let s = StateVector::zero(2);
        assert_abs_diff_eq!(expectation_weighted_z(&s, &[0, 1], &[1.0, 1.0]).unwrap(), 1.0);
        let s = StateVector::basis(2, 0b01).unwrap();
        assert_abs_diff_eq!(expectation_weighted_z(&s, &[0, 1], &[1.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            expectation_weighted_z(&bell(), &[0], &[2.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn weighted_z_rejects_bad_lists() {
        let s = StateVector::zero(2);
        assert!(expectation_weighted_z(&s, &[], &[]).is_err());
        assert!(expectation_weighted_z(&s, &[0, 1], &[1.0]).is_err());
        assert!(expectation_weighted_z(&s, &[0, 0], &[1.0, 1.0]).is_err());
        assert!(expectation_weighted_z(&s, &[2], &[1.0]).is_err());
    }

    #[test]
    fn weighted_z_is_weighted_mean_of_single_qubit_values() {
        let mut s = StateVector::zero(3);
        s.ry(0, 0.3);
        s.rx(1, 1.1);
        s.cz(0, 1);
        s.ry(2, -2.0);
        s.cx(1, 2);
        let z = s.z_expectations();
        let w = [0.5, -1.5, 2.0];
        let got = expectation_weighted_z(&s, &[0, 1, 2], &w).unwrap();
        let want = (w[0] * z[0] + w[1] * z[1] + w[2] * z[2]) / 3.0;
        assert_abs_diff_eq!(got, want, epsilon = 1e-14);
    }
}
