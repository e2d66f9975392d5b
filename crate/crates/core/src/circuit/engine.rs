//! Fast evaluation path: each convolution cell is fused into one 4×4 unitary
//! for a fixed parameter vector, and parameter-shift gradients replay only
//! the fused suffix after the shifted gate.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qsim::{GateOp, StateVector, Unitary4};

use super::{Block, QgcnCircuit};

/// Value and exact gradient of one circuit evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGrad {
    pub value: f64,
    /// `∂f/∂θ`, aligned with the parameter vector.
    pub params: Vec<f64>,
    /// `∂f/∂x`, aligned with the input vector.
    pub inputs: Vec<f64>,
}

/// A circuit with its parameters bound and cells fused.
#[derive(Clone, Debug)]
pub struct PreparedCircuit<'a> {
    circuit: &'a QgcnCircuit,
    params: &'a [f64],
    fused: Vec<Unitary4>,
    /// `suffix[c][k]`: product of the gates of cell `c` after its `k`-th gate.
    suffix: Vec<Vec<Unitary4>>,
}

fn local_unitary(gates: &[GateOp], params: &[f64]) -> Result<Unitary4> {
    let mut u = [[Complex64::new(0.0, 0.0); 4]; 4];
    for col in 0..4 {
        let mut s = StateVector::basis(2, col).expect("2-qubit basis");
        for g in gates {
            g.apply_angle(&mut s, g.angle(params, &[])?);
        }
        for (row, amp) in s.amplitudes().iter().enumerate() {
            u[row][col] = *amp;
        }
    }
    Ok(u)
}

impl<'a> PreparedCircuit<'a> {
    pub fn new(circuit: &'a QgcnCircuit, params: &'a [f64]) -> Result<Self> {
        if params.len() != circuit.param_count() {
            return Err(Error::DimensionMismatch {
                expected: circuit.param_count(),
                got: params.len(),
            });
        }
        let fused = circuit
            .local_cells
            .iter()
            .map(|gates| local_unitary(gates, params))
            .collect::<Result<_>>()?;
        let suffix = circuit
            .local_cells
            .iter()
            .map(|gates| {
                (0..gates.len())
                    .map(|k| local_unitary(&gates[k + 1..], params))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            circuit,
            params,
            fused,
            suffix,
        })
    }

    pub fn circuit(&self) -> &QgcnCircuit {
        self.circuit
    }

    pub fn params(&self) -> &[f64] {
        self.params
    }

    fn run_blocks(&self, state: &mut StateVector, from: usize) {
        for block in &self.circuit.blocks[from..] {
            match *block {
                Block::Cell(c) => {
                    let (a, b) = self.circuit.cells[c].pair;
                    state.unitary4(a, b, &self.fused[c]);
                }
                Block::Gate(gi) => self.circuit.gates[gi].apply_angle(state, 0.0),
            }
        }
    }

    fn encoded(&self, x: &[f64]) -> Result<StateVector> {
        self.circuit.check_dims(x, self.params)?;
        let mut state = StateVector::zero(self.circuit.n_qubits());
        for g in self.circuit.feature_map_gates() {
            g.apply_angle(&mut state, g.angle(self.params, x)?);
        }
        Ok(state)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let mut state = self.encoded(x)?;
        self.run_blocks(&mut state, 0);
        Ok(self.circuit.measure(&state))
    }

    /// Parameter-shift gradient with respect to every gate angle, mapped onto
    /// parameters and inputs by the chain rule.
    pub fn gradient(&self, x: &[f64]) -> Result<CircuitGrad> {
        let circuit = self.circuit;
        let angles = circuit
            .gates
            .iter()
            .map(|g| g.angle(self.params, x))
            .collect::<Result<Vec<f64>>>()?;
        let mut angle_grad = vec![0.0; circuit.gates.len()];

        // Shift gate `gi` on a copy of `from`, finish its cell with the fused
        // suffix (if any), then run the remaining blocks.
        let shifted = |from: &StateVector, gi: usize, rest: Option<(usize, usize)>, next_block: usize| {
            let g = &circuit.gates[gi];
            let mut f = [0.0; 2];
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut s = from.clone();
                g.apply_angle(&mut s, sign * FRAC_PI_2);
                if let Some((c, pos)) = rest {
                    let (a, b) = circuit.cells[c].pair;
                    s.unitary4(a, b, &self.suffix[c][pos]);
                }
                self.run_blocks(&mut s, next_block);
                f[k] = circuit.measure(&s);
            }
            (f[0] - f[1]) / 2.0
        };

        // Feature-map gates act on distinct qubits and commute, so a shift of
        // one of them can be applied after the whole map.
        let mut state = self.encoded(x)?;
        for gi in circuit.fm_gates.clone() {
            angle_grad[gi] = shifted(&state, gi, None, 0);
        }

        for (b, block) in circuit.blocks.iter().enumerate() {
            match *block {
                Block::Gate(gi) => circuit.gates[gi].apply_angle(&mut state, 0.0),
                Block::Cell(c) => {
                    let range = circuit.cells[c].gates.clone();
                    let last = range.len() - 1;
                    for (k, gi) in range.enumerate() {
                        circuit.gates[gi].apply_angle(&mut state, angles[gi]);
                        if circuit.gates[gi].is_rotation() {
                            let rest = (k < last).then_some((c, k));
                            angle_grad[gi] = shifted(&state, gi, rest, b + 1);
                        }
                    }
                }
            }
        }
        let value = circuit.measure(&state);

        let mut params = vec![0.0; self.params.len()];
        let mut inputs = vec![0.0; x.len()];
        for (g, &d) in circuit.gates.iter().zip(&angle_grad) {
            if d == 0.0 || !g.is_rotation() {
                continue;
            }
            let theta = g.param_index().map_or(1.0, |p| self.params[p]);
            let xi = g.input().map_or(1.0, |i| x[i]);
            if let Some(p) = g.param_index() {
                params[p] += d * g.scale() * xi;
            }
            if let Some(i) = g.input() {
                inputs[i] += d * g.scale() * theta;
            }
        }
        Ok(CircuitGrad {
            value,
            params,
            inputs,
        })
    }
}
