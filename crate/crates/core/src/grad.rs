//! Parameter-shift gradients and a central-difference reference.
//!
//! For a gate `R_P(φ) = exp(−iφP/2)` the derivative of any expectation value
//! is `[f(φ + π/2) − f(φ − π/2)] / 2`. A parameter read by several gates (the
//! correlated ansatz, or a feature-map frequency whose angle is `ω·x`) gets
//! the sum over its occurrences, each weighted by `∂φ/∂θ`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::circuit::QgcnCircuit;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradVector(pub Vec<f64>);

impl GradVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One gate reading a parameter, with `∂(gate angle)/∂θ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Occurrence {
    pub gate: usize,
    pub multiplier: f64,
}

/// A scalar function of a parameter vector that can be re-evaluated with an
/// extra angle inserted at a single gate.
pub trait ShiftEvaluate {
    fn n_params(&self) -> usize;

    /// `f(params)` with `delta` added to the angle of `shift.0`, if given.
    fn eval_shifted(&self, params: &[f64], shift: Option<(usize, f64)>) -> Result<f64>;

    /// Gates whose angle depends on parameter `idx`.
    fn occurrences(&self, params: &[f64], idx: usize) -> Result<Vec<Occurrence>>;
}

/// `Σ_k m_k [f(φ_k + π/2) − f(φ_k − π/2)] / 2` over the occurrences of `idx`.
pub fn shift_rule_grad<E: ShiftEvaluate + ?Sized>(
    evaluate: &E,
    params: &[f64],
    idx: usize,
    occurrences: &[Occurrence],
) -> Result<f64> {
    if idx >= params.len() {
        return Err(Error::UnboundParameter {
            index: idx,
            len: params.len(),
        });
    }
    let mut total = 0.0;
    for occ in occurrences {
        let plus = evaluate.eval_shifted(params, Some((occ.gate, FRAC_PI_2)))?;
        let minus = evaluate.eval_shifted(params, Some((occ.gate, -FRAC_PI_2)))?;
        total += occ.multiplier * (plus - minus) / 2.0;
    }
    Ok(total)
}

/// Central difference `[f(θ + h) − f(θ − h)] / 2h` in coordinate `idx`.
pub fn finite_diff_grad<F>(evaluate: F, params: &[f64], idx: usize, h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if idx >= params.len() {
        return Err(Error::UnboundParameter {
            index: idx,
            len: params.len(),
        });
    }
    let mut p = params.to_vec();
    p[idx] = params[idx] + h;
    let plus = evaluate(&p)?;
    p[idx] = params[idx] - h;
    let minus = evaluate(&p)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Full shift-rule gradient.
pub fn grad_all<E: ShiftEvaluate + ?Sized>(evaluate: &E, params: &[f64]) -> Result<GradVector> {
    if params.len() != evaluate.n_params() {
        return Err(Error::DimensionMismatch {
            expected: evaluate.n_params(),
            got: params.len(),
        });
    }
    (0..params.len())
        .map(|idx| {
            let occ = evaluate.occurrences(params, idx)?;
            shift_rule_grad(evaluate, params, idx, &occ)
        })
        .collect::<Result<Vec<_>>>()
        .map(GradVector)
}

/// Central differences for every coordinate.
pub fn finite_diff_all<F>(evaluate: F, params: &[f64], h: f64) -> Result<GradVector>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    (0..params.len())
        .map(|idx| finite_diff_grad(&evaluate, params, idx, h))
        .collect::<Result<Vec<_>>>()
        .map(GradVector)
}

/// A circuit's output at a fixed input, as a function of its parameters.
/// Evaluates gate by gate; the training path uses
/// [`PreparedCircuit::gradient`](crate::circuit::PreparedCircuit::gradient).
pub struct CircuitObjective<'a> {
    pub circuit: &'a QgcnCircuit,
    pub input: &'a [f64],
}

impl ShiftEvaluate for CircuitObjective<'_> {
    fn n_params(&self) -> usize {
        self.circuit.param_count()
    }

    fn eval_shifted(&self, params: &[f64], shift: Option<(usize, f64)>) -> Result<f64> {
        let state = self.circuit.final_state(self.input, params, shift)?;
        Ok(self.circuit.measure(&state))
    }

    fn occurrences(&self, _params: &[f64], idx: usize) -> Result<Vec<Occurrence>> {
        if idx >= self.circuit.param_count() {
            return Err(Error::UnboundParameter {
                index: idx,
                len: self.circuit.param_count(),
            });
        }
        self.circuit
            .param_occurrences(idx)
            .iter()
            .map(|&gi| {
                let g = &self.circuit.gates()[gi];
                if !g.is_rotation() {
                    return Err(Error::InvalidGate(format!(
                        "parameter {idx} is bound to non-rotation gate {gi}"
                    )));
                }
                let xi = match g.input() {
                    Some(i) => *self.input.get(i).ok_or(Error::UnboundInput {
                        index: i,
                        len: self.input.len(),
                    })?,
                    None => 1.0,
                };
                Ok(Occurrence {
                    gate: gi,
                    multiplier: g.scale() * xi,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_qgcn, PreparedCircuit, QgcnArchitecture};
    use crate::qsim::{apply_gate, GateKind, GateOp, StateVector};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// `⟨Z⟩` after `RY(θ)|0⟩`, i.e. `cos θ`.
    struct SingleRy;

    impl ShiftEvaluate for SingleRy {
        fn n_params(&self) -> usize {
            1
        }
        fn eval_shifted(&self, params: &[f64], shift: Option<(usize, f64)>) -> Result<f64> {
            let mut s = StateVector::zero(1);
            let delta = shift.map_or(0.0, |(_, d)| d);
            apply_gate(&mut s, &GateOp::rotation(GateKind::Ry, 0, 0)?, &[params[0] + delta])?;
            Ok(s.z_expectations()[0])
        }
        fn occurrences(&self, _: &[f64], _: usize) -> Result<Vec<Occurrence>> {
            Ok(vec![Occurrence { gate: 0, multiplier: 1.0 }])
        }
    }

    struct NoGates;

    impl ShiftEvaluate for NoGates {
        fn n_params(&self) -> usize {
            3
        }
        fn eval_shifted(&self, _: &[f64], _: Option<(usize, f64)>) -> Result<f64> {
            Ok(0.25)
        }
        fn occurrences(&self, _: &[f64], _: usize) -> Result<Vec<Occurrence>> {
            Ok(vec![])
        }
    }

    fn within(a: f64, b: f64, rtol: f64, atol: f64) -> bool {
        (a - b).abs() <= atol + rtol * b.abs()
    }

    #[test]
    fn shift_rule_on_cosine() {
        let occ = SingleRy.occurrences(&[0.0], 0).unwrap();
        assert_abs_diff_eq!(shift_rule_grad(&SingleRy, &[0.0], 0, &occ).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            shift_rule_grad(&SingleRy, &[PI / 2.0], 0, &occ).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn finite_difference_examples() {
        let cos = |p: &[f64]| Ok(p[0].cos());
        assert_abs_diff_eq!(finite_diff_grad(cos, &[PI / 2.0], 0, 1e-5).unwrap(), -1.0, epsilon = 1e-8);
        assert_eq!(finite_diff_grad(|_| Ok(3.0), &[0.4, 1.0], 1, 1e-4).unwrap(), 0.0);
        let quad = |p: &[f64]| Ok((p[0] - 0.3).powi(2));
        assert_abs_diff_eq!(finite_diff_grad(quad, &[0.3], 0, 1e-4).unwrap(), 0.0, epsilon = 1e-10);
        assert!(finite_diff_grad(cos, &[0.0], 0, 0.0).is_err());
    }

    #[test]
    fn zero_gate_objective_has_zero_gradient() {
        assert_eq!(grad_all(&NoGates, &[1.0, 2.0, 3.0]).unwrap().0, vec![0.0; 3]);
    }

    #[test]
    fn shifting_an_entangler_is_an_error() {
        let c = build_qgcn(&QgcnArchitecture::new(4, &[1])).unwrap();
        let x = [0.1; 4];
        let obj = CircuitObjective { circuit: &c, input: &x };
        let params = vec![0.2; c.param_count()];
        let cz = c.gates().iter().position(|g| g.kind() == GateKind::Cz).unwrap();
        let bad = [Occurrence { gate: cz, multiplier: 1.0 }];
        assert!(shift_rule_grad(&obj, &params, 0, &bad).is_err());
    }

    #[test]
    fn shift_rule_matches_finite_differences_four_qubits() {
        let c = build_qgcn(&QgcnArchitecture::new(4, &[1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..PI)).collect();
        let params: Vec<f64> = (0..c.param_count()).map(|_| rng.gen_range(-PI..PI)).collect();
        let obj = CircuitObjective { circuit: &c, input: &x };
        let shift = grad_all(&obj, &params).unwrap();
        let fd = finite_diff_all(|p| obj.eval_shifted(p, None), &params, 1e-4).unwrap();
        for (a, b) in shift.values().iter().zip(fd.values()) {
            assert!(within(*a, *b, 1e-5, 1e-8), "{a} vs {b}");
        }
    }

    #[test]
    fn fast_gradient_matches_reference_shift_rule() {
        for arch in [
            QgcnArchitecture::new(8, &[3, 5]),
            QgcnArchitecture::new(8, &[3, 3, 3]).correlated(true),
            QgcnArchitecture::new(4, &[2]).trainable_fm(false),
        ] {
            let c = build_qgcn(&arch).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let x: Vec<f64> = (0..c.n_qubits()).map(|_| rng.gen_range(0.0..PI)).collect();
            let params: Vec<f64> = (0..c.param_count()).map(|_| rng.gen_range(-PI..PI)).collect();
            let reference = grad_all(&CircuitObjective { circuit: &c, input: &x }, &params).unwrap();
            let fast = PreparedCircuit::new(&c, &params).unwrap().gradient(&x).unwrap();
            for (a, b) in fast.params.iter().zip(reference.values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            let fd_x = finite_diff_all(
                |xx| PreparedCircuit::new(&c, &params)?.evaluate(xx),
                &x,
                1e-4,
            )
            .unwrap();
            for (a, b) in fast.inputs.iter().zip(fd_x.values()) {
                assert!(within(*a, *b, 1e-5, 1e-8), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn correlated_slot_gradient_is_sum_over_tied_cells() {
        let corr = build_qgcn(&QgcnArchitecture::new(4, &[2]).correlated(true)).unwrap();
        let uncorr = build_qgcn(&QgcnArchitecture::new(4, &[2])).unwrap();
        let n_cells = uncorr.cells().len();
        assert_eq!(n_cells, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..PI)).collect();
        let shared: Vec<f64> = (0..corr.param_count()).map(|_| rng.gen_range(-PI..PI)).collect();
        // Uncorrelated clone with every cell tied to the shared values.
        let mut tied = shared[..4].to_vec();
        for _ in 0..n_cells {
            tied.extend_from_slice(&shared[4..]);
        }
        let g_corr = grad_all(&CircuitObjective { circuit: &corr, input: &x }, &shared).unwrap();
        let g_tied = grad_all(&CircuitObjective { circuit: &uncorr, input: &x }, &tied).unwrap();
        for slot in 0..15 {
            let sum: f64 = (0..n_cells).map(|c| g_tied.values()[4 + 15 * c + slot]).sum();
            assert_abs_diff_eq!(g_corr.values()[4 + slot], sum, epsilon = 1e-12);
        }
        for q in 0..4 {
            assert_abs_diff_eq!(g_corr.values()[q], g_tied.values()[q], epsilon = 1e-12);
        }
    }

    #[test]
    fn gradients_are_deterministic() {
        let c = build_qgcn(&QgcnArchitecture::new(6, &[2])).unwrap();
        let x = [0.3, 1.0, 2.0, 0.1, 2.5, 1.7];
        let params: Vec<f64> = (0..c.param_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = PreparedCircuit::new(&c, &params).unwrap();
        assert_eq!(p.gradient(&x).unwrap(), p.gradient(&x).unwrap());
    }
}
