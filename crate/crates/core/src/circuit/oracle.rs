//! Layer-by-layer density-matrix evaluation of a compiled circuit: each
//! layer evolves the current register with dense unitaries, then pooling
//! traces out its controls explicitly. Used to check the deferred-measurement
//! statevector path.

use crate::error::{Error, Result};
use crate::qsim::density::{gate_matrix, weighted_z_observable};
use crate::qsim::{DensityMatrix, GateOp, StateVector};

use super::QgcnCircuit;

/// Reduced state of the final kept register.
pub fn output_state(circuit: &QgcnCircuit, x: &[f64], params: &[f64]) -> Result<DensityMatrix> {
    circuit.check_dims(x, params)?;
    let n = circuit.n_qubits();
    let mut rho = DensityMatrix::from_state(&StateVector::zero(n));
    for g in circuit.feature_map_gates() {
        rho.evolve(&gate_matrix(g, g.angle(params, x)?, n)?);
    }
    for layer in circuit.layers() {
        let n_l = layer.register.len();
        let logical = |q: usize| {
            layer.register.iter().position(|&p| p == q).ok_or_else(|| {
                Error::InvalidGate(format!("gate touches qubit {q} outside the live register"))
            })
        };
        let apply = |rho: &mut DensityMatrix, g: &GateOp| -> Result<()> {
            let mut local = g.clone();
            let mut bad = None;
            local.relabel(|q| {
                logical(q).unwrap_or_else(|e| {
                    bad = Some(e);
                    0
                })
            });
            if let Some(e) = bad {
                return Err(e);
            }
            rho.evolve(&gate_matrix(&local, g.angle(params, x)?, n_l)?);
            Ok(())
        };
        for g in &circuit.gates()[layer.conv_gates.clone()] {
            apply(&mut rho, g)?;
        }
        for g in &circuit.gates()[layer.pool_gates.clone()] {
            apply(&mut rho, g)?;
        }
        let traced = layer
            .traced
            .iter()
            .map(|&q| logical(q))
            .collect::<Result<Vec<_>>>()?;
        rho = rho.partial_trace(&traced)?;
    }
    Ok(rho)
}

/// `Tr[ρ_out O]` with `O` the weighted magnetization of the kept register.
pub fn output_expectation(circuit: &QgcnCircuit, x: &[f64], params: &[f64]) -> Result<f64> {
    let rho = output_state(circuit, x, params)?;
    let k = rho.n_qubits();
    let qubits: Vec<usize> = (0..k).collect();
    Ok(rho.expectation(&weighted_z_observable(k, &qubits, circuit.measure_weights())))
}
