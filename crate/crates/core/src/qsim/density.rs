//! Dense density-matrix reference implementation.
//!
//! Everything here builds full `2^n × 2^n` operators from Kronecker products
//! and never calls the statevector kernels, so it can serve as an independent
//! check of them. Intended for registers of at most ~7 qubits.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

use super::gate::{GateKind, GateOp, Qubits};
use super::state::StateVector;

type CMatrix = DMatrix<Complex64>;

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: CMatrix,
}

impl DensityMatrix {
    /// `|ψ⟩⟨ψ|`.
    pub fn from_state(state: &StateVector) -> Self {
        let psi = nalgebra::DVector::from_column_slice(state.amplitudes());
        Self {
            n_qubits: state.n_qubits(),
            entries: &psi * psi.adjoint(),
        }
    }

    pub fn from_matrix(n_qubits: usize, entries: CMatrix) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: entries.nrows(),
            });
        }
        Ok(Self { n_qubits, entries })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.entries - self.entries.adjoint())
            .iter()
            .all(|d| d.norm() <= tol)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.entries + self.entries.adjoint()).map(|z| z * 0.5);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `ρ ← U ρ U†`.
    pub fn evolve(&mut self, unitary: &CMatrix) {
        self.entries = unitary * &self.entries * unitary.adjoint();
    }

    /// `Tr[ρ O]`, real part.
    pub fn expectation(&self, observable: &CMatrix) -> f64 {
        (&self.entries * observable).trace().re
    }

    /// `self ⊗ other`, with `self` on the leading qubits.
    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            n_qubits: self.n_qubits + other.n_qubits,
            entries: self.entries.kronecker(&other.entries),
        }
    }

    /// Reduced state on the qubits not listed in `traced`, kept qubits in
    /// ascending order.
    pub fn partial_trace(&self, traced: &[usize]) -> Result<DensityMatrix> {
        let (kept, traced) = split_register(self.n_qubits, traced)?;
        let nk = kept.len();
        let mut out = CMatrix::zeros(1 << nk, 1 << nk);
        for t in 0..1usize << traced.len() {
            for a in 0..1usize << nk {
                let ia = compose(self.n_qubits, &kept, a, &traced, t);
                for b in 0..1usize << nk {
                    let ib = compose(self.n_qubits, &kept, b, &traced, t);
                    out[(a, b)] += self.entries[(ia, ib)];
                }
            }
        }
        Ok(DensityMatrix {
            n_qubits: nk,
            entries: out,
        })
    }
}

/// Reduced density matrix of a pure state, by direct index summation
/// `ρ_kept[a, b] = Σ_t ψ[a, t] ψ*[b, t]`.
pub fn partial_trace(state: &StateVector, traced_qubits: &[usize]) -> Result<DensityMatrix> {
    let n = state.n_qubits();
    let (kept, traced) = split_register(n, traced_qubits)?;
    let nk = kept.len();
    let psi = state.amplitudes();
    let mut out = CMatrix::zeros(1 << nk, 1 << nk);
    for t in 0..1usize << traced.len() {
        for a in 0..1usize << nk {
            let va = psi[compose(n, &kept, a, &traced, t)];
            for b in 0..1usize << nk {
                let vb = psi[compose(n, &kept, b, &traced, t)];
                out[(a, b)] += va * vb.conj();
            }
        }
    }
    Ok(DensityMatrix {
        n_qubits: nk,
        entries: out,
    })
}

fn split_register(n: usize, traced: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut sorted = traced.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("duplicate traced qubit".into()));
    }
    if let Some(&q) = sorted.iter().find(|&&q| q >= n) {
        return Err(Error::QubitOutOfRange {
            index: q,
            n_qubits: n,
        });
    }
    if sorted.len() >= n {
        return Err(Error::InvalidArgument(
            "cannot trace out every qubit of the register".into(),
        ));
    }
    let kept = (0..n).filter(|q| !sorted.contains(q)).collect();
    Ok((kept, sorted))
}

/// Full basis index from a kept-register index and a traced-register index.
fn compose(n: usize, kept: &[usize], a: usize, traced: &[usize], t: usize) -> usize {
    let mut idx = 0;
    for (k, &q) in kept.iter().enumerate() {
        if (a >> (kept.len() - 1 - k)) & 1 == 1 {
            idx |= 1 << (n - 1 - q);
        }
    }
    for (k, &q) in traced.iter().enumerate() {
        if (t >> (traced.len() - 1 - k)) & 1 == 1 {
            idx |= 1 << (n - 1 - q);
        }
    }
    idx
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 2×2 matrix of `exp(−iθP/2)`.
pub fn rotation_matrix(kind: GateKind, theta: f64) -> Result<CMatrix> {
    let (s, co) = (theta / 2.0).sin_cos();
    let m = match kind {
        GateKind::Rx => [c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)],
        GateKind::Ry => [c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)],
        GateKind::Rz => [c(co, -s), c(0.0, 0.0), c(0.0, 0.0), c(co, s)],
        other => return Err(Error::InvalidGate(format!("{other:?} is not a rotation"))),
    };
    Ok(CMatrix::from_row_slice(2, 2, &m))
}

/// Embeds a one-qubit operator at position `qubit` of an `n`-qubit register.
pub fn embed_single(op: &CMatrix, qubit: usize, n: usize) -> CMatrix {
    let id = CMatrix::identity(2, 2);
    let mut out = CMatrix::identity(1, 1);
    for q in 0..n {
        out = out.kronecker(if q == qubit { op } else { &id });
    }
    out
}

/// Dense `n`-qubit matrix of a compiled gate at the given angle.
pub fn gate_matrix(gate: &GateOp, angle: f64, n: usize) -> Result<CMatrix> {
    gate.check(n)?;
    match (gate.kind(), gate.qubits()) {
        (kind, Qubits::One(q)) => Ok(embed_single(&rotation_matrix(kind, angle)?, q, n)),
        (GateKind::Cz, Qubits::Two(a, b)) => {
            // |0⟩⟨0|_a ⊗ I + |1⟩⟨1|_a ⊗ Z_b
            let p0 = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
            let p1 = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
            let z = pauli_z();
            Ok(embed_single(&p0, a, n) + embed_single(&p1, a, n) * embed_single(&z, b, n))
        }
        (GateKind::Cx, Qubits::Two(ctl, tgt)) => {
            let p0 = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
            let p1 = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
            let x = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
            Ok(embed_single(&p0, ctl, n) + embed_single(&p1, ctl, n) * embed_single(&x, tgt, n))
        }
        (kind, q) => Err(Error::InvalidGate(format!("{kind:?} on {q:?}"))),
    }
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// Dense `(1/N) Σ_i w_i Z_{q_i}`.
pub fn weighted_z_observable(n: usize, qubits: &[usize], weights: &[f64]) -> CMatrix {
    let mut o = CMatrix::zeros(1 << n, 1 << n);
    for (&q, &w) in qubits.iter().zip(weights) {
        o += embed_single(&pauli_z(), q, n) * c(w, 0.0);
    }
    o / c(qubits.len() as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let h = c(FRAC_1_SQRT_2, 0.0);
        let bell = StateVector::from_amplitudes(vec![h, c(0.0, 0.0), c(0.0, 0.0), h]).unwrap();
        let rho = partial_trace(&bell, &[0]).unwrap();
        let e = rho.entries();
        assert_abs_diff_eq!(e[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e[(0, 1)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn product_state_trace_keeps_second_factor() {
        let s = StateVector::basis(2, 0b01).unwrap();
        let rho = partial_trace(&s, &[0]).unwrap();
        assert_abs_diff_eq!(rho.entries()[(1, 1)].re, 1.0);
        assert_abs_diff_eq!(rho.entries()[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn rejects_invalid_trace_sets() {
        let s = StateVector::zero(2);
        assert!(partial_trace(&s, &[0, 1]).is_err());
        assert!(partial_trace(&s, &[0, 0]).is_err());
        assert!(partial_trace(&s, &[5]).is_err());
    }

    #[test]
    fn random_state_trace_matches_outer_product_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut amps: Vec<Complex64> = (0..16)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        let s = StateVector::from_amplitudes(amps.clone()).unwrap();

        let direct = partial_trace(&s, &[0, 2]).unwrap();
        assert_abs_diff_eq!(direct.trace().re, 1.0, epsilon = 1e-12);
        assert!(direct.is_hermitian(1e-12));
        assert!(direct.min_eigenvalue() > -1e-9);

        // 16×16 outer product, then explicit index summation over qubits 0 and 2.
        let full = DensityMatrix::from_state(&s);
        let mut want = CMatrix::zeros(4, 4);
        for q0 in 0..2 {
            for q2 in 0..2 {
                for a in 0..4 {
                    for b in 0..4 {
                        let (a1, a3) = (a >> 1, a & 1);
                        let (b1, b3) = (b >> 1, b & 1);
                        let ia = q0 << 3 | a1 << 2 | q2 << 1 | a3;
                        let ib = q0 << 3 | b1 << 2 | q2 << 1 | b3;
                        want[(a, b)] += full.entries()[(ia, ib)];
                    }
                }
            }
        }
        for (x, y) in direct.entries().iter().zip(want.iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-14);
        }
        let via_matrix = full.partial_trace(&[0, 2]).unwrap();
        for (x, y) in direct.entries().iter().zip(via_matrix.entries().iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn dense_gates_match_statevector_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gates = [
            GateOp::rotation(GateKind::Rx, 1, 0).unwrap(),
            GateOp::rotation(GateKind::Ry, 0, 0).unwrap(),
            GateOp::rotation(GateKind::Rz, 2, 0).unwrap(),
            GateOp::cz(2, 0).unwrap(),
            GateOp::cx(1, 2).unwrap(),
        ];
        let mut s = StateVector::zero(3);
        let mut rho = DensityMatrix::from_state(&s);
        for _ in 0..4 {
            for g in &gates {
                let theta = rng.gen_range(-3.0..3.0);
                crate::qsim::apply_gate(&mut s, g, &[theta]).unwrap();
                rho.evolve(&gate_matrix(g, theta, 3).unwrap());
            }
        }
        let want = DensityMatrix::from_state(&s);
        for (x, y) in rho.entries().iter().zip(want.entries().iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
        }
    }
}
