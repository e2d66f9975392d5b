//! QGCN circuit construction: feature map, brick-pattern convolution layers
//! built from 15-parameter cells, and CZ pooling with deferred measurement.

mod engine;
pub mod oracle;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{apply_gate_bound, GateKind, GateOp, StateVector};

pub use engine::{CircuitGrad, PreparedCircuit};

/// Parameter slots per convolution cell.
pub const CELL_PARAMS: usize = 15;
/// Gates per convolution cell: 12 from the four general rotations, 3 interior
/// rotations, 3 CZ.
pub const CELL_GATES: usize = 18;

/// Flat parameter vector with its two named segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    fm_freqs: Range<usize>,
    conv_cells: Range<usize>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, n_fm: usize) -> Result<Self> {
        if n_fm > values.len() {
            return Err(Error::DimensionMismatch {
                expected: n_fm,
                got: values.len(),
            });
        }
        let len = values.len();
        Ok(Self {
            values,
            fm_freqs: 0..n_fm,
            conv_cells: n_fm..len,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fm_freqs(&self) -> Range<usize> {
        self.fm_freqs.clone()
    }

    pub fn conv_cells(&self) -> Range<usize> {
        self.conv_cells.clone()
    }
}

/// Controlled gate used by the pooling layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingGate {
    #[default]
    Cz,
    Cx,
}

/// Declarative QGCN description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QgcnArchitecture {
    pub n_qubits: usize,
    /// Convolution depth of each layer.
    pub depths: Vec<usize>,
    #[serde(default)]
    pub correlated: bool,
    #[serde(default = "default_true")]
    pub trainable_fm: bool,
    /// Fixed weights of the final magnetization; all ones when absent.
    #[serde(default)]
    pub measure_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub pooling_gate: PoolingGate,
}

fn default_true() -> bool {
    true
}

impl QgcnArchitecture {
    pub fn new(n_qubits: usize, depths: &[usize]) -> Self {
        Self {
            n_qubits,
            depths: depths.to_vec(),
            correlated: false,
            trainable_fm: true,
            measure_weights: None,
            pooling_gate: PoolingGate::Cz,
        }
    }

    pub fn correlated(mut self, correlated: bool) -> Self {
        self.correlated = correlated;
        self
    }

    pub fn trainable_fm(mut self, trainable: bool) -> Self {
        self.trainable_fm = trainable;
        self
    }

    pub fn pooling_gate(mut self, gate: PoolingGate) -> Self {
        self.pooling_gate = gate;
        self
    }

    pub fn measure_weights(mut self, weights: Vec<f64>) -> Self {
        self.measure_weights = Some(weights);
        self
    }
}

/// Brick pattern `S(j)`: pairs `(i, i+1)` with `i ≡ j (mod 2)`.
///
/// A two-qubit register has no odd pair; odd steps there reuse `(0, 1)` so
/// every step of the layer places a cell.
pub fn conv_pairs(n_l: usize, j: usize) -> Vec<(usize, usize)> {
    if n_l == 2 {
        return vec![(0, 1)];
    }
    (0..n_l.saturating_sub(1))
        .filter(|i| i % 2 == j % 2)
        .map(|i| (i, i + 1))
        .collect()
}

/// One RY per qubit with angle `ω_i · x_i`; `ω_i` is parameter `i` when the
/// map is trainable.
pub fn build_feature_map(n_qubits: usize, trainable: bool) -> Vec<GateOp> {
    (0..n_qubits)
        .map(|q| {
            let g = GateOp::encoding(GateKind::Ry, q, q).expect("RY is a rotation");
            if trainable {
                g.with_param(q)
            } else {
                g
            }
        })
        .collect()
}

/// A convolution cell placed on a qubit pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvCell {
    pub pair: (usize, usize),
    /// Range of this cell's gates inside the owning gate list.
    pub gates: Range<usize>,
    /// First of the 15 parameter slots the cell reads.
    pub param_base: usize,
}

/// Gates of one cell on `(a, b)` reading slots `base..base + 15`:
/// `R^G ⊗ R^G → CZ → RZ ⊗ RY → CZ → RY′ → CZ → R^G ⊗ R^G`, each `R^G` being
/// RX, RZ, RX in circuit order.
fn cell_gates(a: usize, b: usize, base: usize) -> Vec<GateOp> {
    let rot = |kind, q, slot: usize| GateOp::rotation(kind, q, base + slot).expect("rotation");
    let cz = || GateOp::cz(a, b).expect("distinct pair");
    let general = |q, first: usize| {
        [
            rot(GateKind::Rx, q, first),
            rot(GateKind::Rz, q, first + 1),
            rot(GateKind::Rx, q, first + 2),
        ]
    };
    let mut gates = Vec::with_capacity(CELL_GATES);
    gates.extend(general(a, 0));
    gates.extend(general(b, 3));
    gates.push(cz());
    gates.push(rot(GateKind::Rz, a, 6));
    gates.push(rot(GateKind::Ry, b, 7));
    gates.push(cz());
    gates.push(rot(GateKind::Ry, b, 8));
    gates.push(cz());
    gates.extend(general(a, 9));
    gates.extend(general(b, 12));
    gates
}

/// Convolution layer on a contiguous register `0..n_l`, parameters numbered
/// from 0.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub gates: Vec<GateOp>,
    pub cells: Vec<ConvCell>,
    pub n_params: usize,
}

pub fn build_conv_layer(n_l: usize, depth: usize, correlated: bool) -> Result<ConvLayer> {
    if n_l < 2 || !n_l.is_multiple_of(2) {
        return Err(Error::InvalidArchitecture(format!(
            "convolution layer needs an even register of at least 2 qubits, got {n_l}"
        )));
    }
    if depth == 0 {
        return Err(Error::InvalidArchitecture("convolution depth must be ≥ 1".into()));
    }
    let mut gates = Vec::new();
    let mut cells = Vec::new();
    let mut n_params = if correlated { CELL_PARAMS } else { 0 };
    for j in 0..depth {
        for (a, b) in conv_pairs(n_l, j) {
            let param_base = if correlated {
                0
            } else {
                n_params += CELL_PARAMS;
                n_params - CELL_PARAMS
            };
            let start = gates.len();
            gates.extend(cell_gates(a, b, param_base));
            cells.push(ConvCell {
                pair: (a, b),
                gates: start..gates.len(),
                param_base,
            });
        }
    }
    Ok(ConvLayer {
        gates,
        cells,
        n_params,
    })
}

/// Pooling on a contiguous register `0..n_l`.
#[derive(Clone, Debug)]
pub struct Pooling {
    pub gates: Vec<GateOp>,
    pub kept: Vec<usize>,
    pub traced: Vec<usize>,
}

/// One controlled gate per even qubit `i` (control) onto `i + 1`; the even
/// qubits are traced out and the odd ones kept.
pub fn build_pooling(n_l: usize, gate: PoolingGate) -> Result<Pooling> {
    if n_l < 2 || !n_l.is_multiple_of(2) {
        return Err(Error::InvalidArchitecture(format!(
            "pooling needs an even register of at least 2 qubits, got {n_l}"
        )));
    }
    let kind = match gate {
        PoolingGate::Cz => GateKind::Cz,
        PoolingGate::Cx => GateKind::Cx,
    };
    let traced: Vec<usize> = (0..n_l).step_by(2).collect();
    let gates = traced
        .iter()
        .map(|&i| GateOp::entangler(kind, i, i + 1))
        .collect::<Result<_>>()?;
    Ok(Pooling {
        gates,
        kept: (1..n_l).step_by(2).collect(),
        traced,
    })
}

/// `15 · (cell parameter groups) + (n_qubits if the feature map is trainable)`.
pub fn param_count(arch: &QgcnArchitecture) -> Result<usize> {
    Ok(build_qgcn(arch)?.param_count())
}

/// Per-layer bookkeeping of a compiled circuit, in physical qubit labels.
#[derive(Clone, Debug)]
pub struct LayerInfo {
    /// Physical qubits forming this layer's register, logical order.
    pub register: Vec<usize>,
    pub conv_gates: Range<usize>,
    pub cells: Vec<ConvCell>,
    pub pool_gates: Range<usize>,
    pub traced: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(crate) enum Block {
    Cell(usize),
    Gate(usize),
}

/// Compiled circuit: feature map followed by conv/pool layers.
#[derive(Clone, Debug)]
pub struct QgcnCircuit {
    arch: QgcnArchitecture,
    gates: Vec<GateOp>,
    fm_gates: Range<usize>,
    layers: Vec<LayerInfo>,
    cells: Vec<ConvCell>,
    /// Cell gates relabeled onto the local pair (0, 1).
    local_cells: Vec<Vec<GateOp>>,
    blocks: Vec<Block>,
    kept_qubits: Vec<usize>,
    weights: Vec<f64>,
    n_fm_params: usize,
    n_params: usize,
    /// Gate indices reading each parameter.
    param_map: Vec<Vec<usize>>,
}

pub fn build_qgcn(arch: &QgcnArchitecture) -> Result<QgcnCircuit> {
    let n = arch.n_qubits;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArchitecture(format!(
            "qubit count must be even and ≥ 2, got {n}"
        )));
    }
    if arch.depths.is_empty() {
        return Err(Error::InvalidArchitecture("at least one layer is required".into()));
    }

    let mut gates = build_feature_map(n, arch.trainable_fm);
    let fm_gates = 0..gates.len();
    let n_fm_params = if arch.trainable_fm { n } else { 0 };
    let mut next_param = n_fm_params;
    let mut register: Vec<usize> = (0..n).collect();
    let mut layers = Vec::new();
    let mut cells = Vec::new();
    let mut blocks = Vec::new();

    for (l, &depth) in arch.depths.iter().enumerate() {
        let n_l = register.len();
        if n_l < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "layer {} has a {n_l}-qubit register; convolution needs at least 2",
                l + 1
            )));
        }
        let conv = build_conv_layer(n_l, depth, arch.correlated)?;
        let offset = gates.len();
        for mut g in conv.gates {
            g.relabel(|q| register[q]);
            g.offset_param(next_param);
            gates.push(g);
        }
        let layer_cells: Vec<ConvCell> = conv
            .cells
            .into_iter()
            .map(|c| ConvCell {
                pair: (register[c.pair.0], register[c.pair.1]),
                gates: c.gates.start + offset..c.gates.end + offset,
                param_base: c.param_base + next_param,
            })
            .collect();
        next_param += conv.n_params;
        let conv_range = offset..gates.len();
        blocks.extend((0..layer_cells.len()).map(|k| Block::Cell(cells.len() + k)));

        let pool = build_pooling(n_l, arch.pooling_gate)?;
        let pool_start = gates.len();
        for mut g in pool.gates {
            g.relabel(|q| register[q]);
            blocks.push(Block::Gate(gates.len()));
            gates.push(g);
        }
        let traced = pool.traced.iter().map(|&q| register[q]).collect();
        cells.extend(layer_cells.iter().cloned());
        layers.push(LayerInfo {
            register: register.clone(),
            conv_gates: conv_range,
            cells: layer_cells,
            pool_gates: pool_start..gates.len(),
            traced,
        });
        register = pool.kept.iter().map(|&q| register[q]).collect();
    }

    let weights = match &arch.measure_weights {
        Some(w) if w.len() != register.len() => {
            return Err(Error::DimensionMismatch {
                expected: register.len(),
                got: w.len(),
            })
        }
        Some(w) => w.clone(),
        None => vec![1.0; register.len()],
    };

    let mut param_map = vec![Vec::new(); next_param];
    for (gi, g) in gates.iter().enumerate() {
        if let Some(p) = g.param_index() {
            param_map[p].push(gi);
        }
    }
    let local_cells = cells
        .iter()
        .map(|c| {
            gates[c.gates.clone()]
                .iter()
                .map(|g| {
                    let mut g = g.clone();
                    g.relabel(|q| if q == c.pair.0 { 0 } else { 1 });
                    g
                })
                .collect()
        })
        .collect();

    Ok(QgcnCircuit {
        arch: arch.clone(),
        gates,
        fm_gates,
        layers,
        cells,
        local_cells,
        blocks,
        kept_qubits: register,
        weights,
        n_fm_params,
        n_params: next_param,
        param_map,
    })
}

impl QgcnCircuit {
    pub fn arch(&self) -> &QgcnArchitecture {
        &self.arch
    }

    pub fn n_qubits(&self) -> usize {
        self.arch.n_qubits
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn feature_map_gates(&self) -> &[GateOp] {
        &self.gates[self.fm_gates.clone()]
    }

    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn cells(&self) -> &[ConvCell] {
        &self.cells
    }

    pub fn kept_qubits(&self) -> &[usize] {
        &self.kept_qubits
    }

    pub fn measure_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn fm_param_count(&self) -> usize {
        self.n_fm_params
    }

    /// Gate indices whose angle reads parameter `index`.
    pub fn param_occurrences(&self, index: usize) -> &[usize] {
        &self.param_map[index]
    }

    /// Kept-register size after each pooling layer.
    pub fn register_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.iter().map(|l| l.register.len()).collect();
        sizes.push(self.kept_qubits.len());
        sizes
    }

    /// Feature-map frequencies at 1, cell angles uniform in `[−π, π]`.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        use std::f64::consts::PI;
        let values = (0..self.n_params)
            .map(|i| {
                if i < self.n_fm_params {
                    1.0
                } else {
                    rng.gen_range(-PI..PI)
                }
            })
            .collect();
        ParamVector::new(values, self.n_fm_params).expect("segment fits")
    }

    pub(crate) fn check_dims(&self, x: &[f64], params: &[f64]) -> Result<()> {
        if x.len() != self.arch.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.arch.n_qubits,
                got: x.len(),
            });
        }
        if params.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                expected: self.n_params,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Final statevector, gate by gate, with an optional extra angle on one
    /// gate.
    pub fn final_state(&self, x: &[f64], params: &[f64], shift: Option<(usize, f64)>) -> Result<StateVector> {
        self.check_dims(x, params)?;
        let mut state = StateVector::zero(self.arch.n_qubits);
        for (gi, g) in self.gates.iter().enumerate() {
            match shift {
                Some((sg, delta)) if sg == gi => {
                    if !g.is_rotation() {
                        return Err(Error::InvalidGate(format!(
                            "gate {gi} ({:?}) cannot be shifted",
                            g.kind()
                        )));
                    }
                    let angle = g.angle(params, x)? + delta;
                    g.apply_angle(&mut state, angle);
                }
                _ => apply_gate_bound(&mut state, g, params, x)?,
            }
        }
        Ok(state)
    }

    pub(crate) fn measure(&self, state: &StateVector) -> f64 {
        crate::qsim::weighted_z_unchecked(state, &self.kept_qubits, &self.weights)
    }
}

/// Runs the circuit on input `x` and returns the weighted magnetization of the
/// kept register.
pub fn run_aggregator(circuit: &QgcnCircuit, x: &[f64], params: &[f64]) -> Result<f64> {
    let state = circuit.final_state(x, params, None)?;
    Ok(circuit.measure(&state))
}
