use crate::error::{Error, Result};

use super::state::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cz,
    Cx,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Qubits {
    One(usize),
    /// `(control, target)` for CX; CZ is symmetric.
    Two(usize, usize),
}

/// One gate of a compiled circuit.
///
/// A rotation's angle is `scale · θ[param_index] · x[input]`, with either
/// factor dropped when absent. Feature-map gates carry both; convolution
/// gates only a parameter index.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    kind: GateKind,
    qubits: Qubits,
    param_index: Option<usize>,
    input: Option<usize>,
    scale: f64,
}

impl GateOp {
    /// Rotation bound to parameter `param_index`.
    pub fn rotation(kind: GateKind, qubit: usize, param_index: usize) -> Result<Self> {
        if !kind.is_rotation() {
            return Err(Error::InvalidGate(format!("{kind:?} is not a rotation")));
        }
        Ok(Self {
            kind,
            qubits: Qubits::One(qubit),
            param_index: Some(param_index),
            input: None,
            scale: 1.0,
        })
    }

    /// Rotation whose angle is the bound input component `x[input]`.
    pub fn encoding(kind: GateKind, qubit: usize, input: usize) -> Result<Self> {
        if !kind.is_rotation() {
            return Err(Error::InvalidGate(format!("{kind:?} is not a rotation")));
        }
        Ok(Self {
            kind,
            qubits: Qubits::One(qubit),
            param_index: None,
            input: Some(input),
            scale: 1.0,
        })
    }

    pub fn cz(a: usize, b: usize) -> Result<Self> {
        Self::entangler(GateKind::Cz, a, b)
    }

    pub fn cx(control: usize, target: usize) -> Result<Self> {
        Self::entangler(GateKind::Cx, control, target)
    }

    pub(crate) fn entangler(kind: GateKind, a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidGate(format!(
                "{kind:?} needs two distinct qubits, got ({a}, {b})"
            )));
        }
        Ok(Self {
            kind,
            qubits: Qubits::Two(a, b),
            param_index: None,
            input: None,
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_param(mut self, param_index: usize) -> Self {
        self.param_index = Some(param_index);
        self
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn qubits(&self) -> Qubits {
        self.qubits
    }

    pub fn param_index(&self) -> Option<usize> {
        self.param_index
    }

    pub fn input(&self) -> Option<usize> {
        self.input
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_rotation(&self) -> bool {
        self.kind.is_rotation()
    }

    pub fn touches(&self, qubit: usize) -> bool {
        match self.qubits {
            Qubits::One(q) => q == qubit,
            Qubits::Two(a, b) => a == qubit || b == qubit,
        }
    }

    pub(crate) fn relabel(&mut self, mut map: impl FnMut(usize) -> usize) {
        self.qubits = match self.qubits {
            Qubits::One(q) => Qubits::One(map(q)),
            Qubits::Two(a, b) => Qubits::Two(map(a), map(b)),
        };
    }

    pub(crate) fn offset_param(&mut self, offset: usize) {
        if let Some(p) = self.param_index.as_mut() {
            *p += offset;
        }
    }

    /// Bound rotation angle; `0.0` for entanglers.
    pub fn angle(&self, params: &[f64], inputs: &[f64]) -> Result<f64> {
        if !self.is_rotation() {
            return Ok(0.0);
        }
        let mut angle = self.scale;
        if let Some(p) = self.param_index {
            angle *= *params.get(p).ok_or(Error::UnboundParameter {
                index: p,
                len: params.len(),
            })?;
        }
        if let Some(i) = self.input {
            angle *= *inputs.get(i).ok_or(Error::UnboundInput {
                index: i,
                len: inputs.len(),
            })?;
        }
        Ok(angle)
    }

    pub(crate) fn check(&self, n_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q >= n_qubits {
                Err(Error::QubitOutOfRange { index: q, n_qubits })
            } else {
                Ok(())
            }
        };
        match self.qubits {
            Qubits::One(q) => check(q),
            Qubits::Two(a, b) => check(a).and(check(b)),
        }
    }

    /// Applies the gate with an explicit angle, skipping validation.
    #[inline]
    pub(crate) fn apply_angle(&self, state: &mut StateVector, angle: f64) {
        match (self.kind, self.qubits) {
            (GateKind::Rx, Qubits::One(q)) => state.rx(q, angle),
            (GateKind::Ry, Qubits::One(q)) => state.ry(q, angle),
            (GateKind::Rz, Qubits::One(q)) => state.rz(q, angle),
            (GateKind::Cz, Qubits::Two(a, b)) => state.cz(a, b),
            (GateKind::Cx, Qubits::Two(c, t)) => state.cx(c, t),
            _ => unreachable!("gate constructors keep kind and arity consistent"),
        }
    }
}

/// Applies `gate` with its parameter bound from `params`.
pub fn apply_gate(state: &mut StateVector, gate: &GateOp, params: &[f64]) -> Result<()> {
    apply_gate_bound(state, gate, params, &[])
}

/// Applies `gate` with parameters and input components bound.
pub fn apply_gate_bound(
    state: &mut StateVector,
    gate: &GateOp,
    params: &[f64],
    inputs: &[f64],
) -> Result<()> {
    gate.check(state.n_qubits())?;
    let angle = gate.angle(params, inputs)?;
    gate.apply_angle(state, angle);
    Ok(())
}
