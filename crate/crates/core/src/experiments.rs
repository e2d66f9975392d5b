//! Experiment drivers: GNN vs QGNN case runs, the per-hop multi-circuit
//! variant and the gradient-variance scan.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{AggregatorModel, Nonlinearity, INPUT_DIM};
use crate::circuit::{build_qgcn, PreparedCircuit, QgcnArchitecture};
use crate::classical::MlpLayout;
use crate::error::{Error, Result};
use crate::graphdata::{load_dataset, split, Dataset};
use crate::qsim::{GateKind, GateOp, StateVector};
use crate::train::{smooth_l1, smooth_l1_grad, train_loop_with, EpochRecord, SplitMetrics, TrainConfig};

/// Parameter count of the shared-circuit QGNN in both cases.
pub const CASE_QGNN_PARAMS: usize = 293;
/// Cap on distinct per-hop circuits in the multi-aggregator model.
pub const MAX_HOP_CIRCUITS: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "framework", rename_all = "snake_case")]
pub enum ModelSpec {
    /// One shared QGCN on `feature_dim + 1` qubits.
    Qgnn {
        depths: Vec<usize>,
        #[serde(default)]
        correlated: bool,
    },
    /// One QGCN per hop, up to `max_circuits`.
    QgnnMulti {
        depths: Vec<usize>,
        #[serde(default = "default_max_circuits")]
        max_circuits: usize,
    },
    Gnn { hidden: Vec<usize> },
}

fn default_max_circuits() -> usize {
    MAX_HOP_CIRCUITS
}

impl ModelSpec {
    pub fn framework(&self) -> &'static str {
        match self {
            Self::Qgnn { .. } => "qgnn",
            Self::QgnnMulti { .. } => "qgnn_multi",
            Self::Gnn { .. } => "gnn",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub case: u8,
    pub fixture: PathBuf,
    #[serde(flatten)]
    pub model: ModelSpec,
    pub train_fraction: f64,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl CaseSpec {
    /// Reads a JSON run config; a relative fixture path is resolved against the
    /// config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut spec: Self = read_json(path)?;
        if spec.fixture.is_relative() {
            spec.fixture = path.parent().unwrap_or(Path::new("")).join(&spec.fixture);
        }
        Ok(spec)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Metrics at the best-test checkpoint, in the layout of a results table row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestMetrics {
    pub test_r2: Option<f64>,
    pub test_loss: f64,
    pub train_r2: Option<f64>,
    pub train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub framework: String,
    pub case: u8,
    pub seed: u64,
    pub params: usize,
    pub n_circuits: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub best_epoch: Option<usize>,
    pub best: Option<BestMetrics>,
    /// Lowest train loss over all epochs.
    pub min_train_loss: Option<f64>,
    pub history: Vec<EpochRecord>,
    pub final_params: Vec<f64>,
}

/// Builds the model for `spec` over a dataset whose largest molecule has
/// `max_atoms` atoms.
pub fn build_model(spec: &CaseSpec, max_atoms: usize) -> Result<AggregatorModel> {
    let model = match &spec.model {
        ModelSpec::Qgnn { depths, correlated } => {
            let arch = QgcnArchitecture::new(INPUT_DIM, depths).correlated(*correlated);
            let model = AggregatorModel::quantum_shared(build_qgcn(&arch)?)?;
            if matches!(spec.case, 1 | 2) && model.param_count() != CASE_QGNN_PARAMS {
                return Err(Error::ParamCountMismatch {
                    expected: CASE_QGNN_PARAMS,
                    got: model.param_count(),
                });
            }
            model
        }
        ModelSpec::QgnnMulti { depths, max_circuits } => {
            if *max_circuits == 0 {
                return Err(Error::InvalidArgument("max_circuits must be at least 1".into()));
            }
            let arch = QgcnArchitecture::new(INPUT_DIM, depths);
            let count = max_atoms.clamp(1, *max_circuits);
            let circuits = (0..count).map(|_| build_qgcn(&arch)).collect::<Result<_>>()?;
            AggregatorModel::quantum_multi(circuits)?
        }
        ModelSpec::Gnn { hidden } => AggregatorModel::classical(MlpLayout::with_hidden(INPUT_DIM, hidden)?)?,
    };
    Ok(model.with_nonlinearity(spec.nonlinearity))
}

/// Split, scale, build and train `spec` on an already loaded dataset.
pub fn run_case_on(
    spec: &CaseSpec,
    dataset: &Dataset,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunReport> {
    spec.train.validate()?;
    let (train_set, test_set) = split(dataset, spec.train_fraction, spec.train.seed)?;
    let model = build_model(spec, dataset.max_atoms())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.train.seed);
    rng.set_stream(1);
    let init = model.init_params(&mut rng);
    let state = train_loop_with(
        &model,
        init,
        &train_set.scaled()?,
        &test_set.scaled()?,
        &spec.train,
        on_epoch,
    )?;
    let best = state.best.as_ref().map(|b| metrics_row(&b.train, &b.test));
    Ok(RunReport {
        framework: spec.model.framework().to_string(),
        case: spec.case,
        seed: spec.train.seed,
        params: model.param_count(),
        n_circuits: model.n_aggregators(),
        n_train: train_set.len(),
        n_test: test_set.len(),
        best_epoch: state.best.as_ref().map(|b| b.epoch),
        best,
        min_train_loss: state.best_train_loss(),
        history: state.history,
        final_params: state.params,
    })
}

fn metrics_row(train: &SplitMetrics, test: &SplitMetrics) -> BestMetrics {
    BestMetrics {
        test_r2: test.r2,
        test_loss: test.loss,
        train_r2: train.r2,
        train_loss: train.loss,
    }
}

pub fn run_case(spec: &CaseSpec) -> Result<RunReport> {
    run_case_on(spec, &load_dataset(&spec.fixture)?, |_| {})
}

/// Per-hop variant; `spec.model` must be [`ModelSpec::QgnnMulti`].
pub fn run_multi(spec: &CaseSpec) -> Result<RunReport> {
    if !matches!(spec.model, ModelSpec::QgnnMulti { .. }) {
        return Err(Error::InvalidArgument("run_multi needs a qgnn_multi model spec".into()));
    }
    run_case(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzMode {
    Correlated,
    Uncorrelated,
}

impl AnsatzMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Correlated => "correlated",
            Self::Uncorrelated => "uncorrelated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceScanSpec {
    pub qubit_counts: Vec<usize>,
    pub samples_per_point: usize,
    pub depths: Vec<usize>,
    pub modes: Vec<AnsatzMode>,
    pub seed: u64,
}

impl Default for VarianceScanSpec {
    fn default() -> Self {
        Self {
            qubit_counts: vec![4, 6, 8, 10, 12],
            samples_per_point: 200,
            depths: vec![3],
            modes: vec![AnsatzMode::Correlated, AnsatzMode::Uncorrelated],
            seed: 0,
        }
    }
}

impl VarianceScanSpec {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_point < 2 {
            return Err(Error::InvalidArgument(format!(
                "samples_per_point must be at least 2, got {}",
                self.samples_per_point
            )));
        }
        if self.qubit_counts.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidArgument("scan needs qubit counts and modes".into()));
        }
        if let Some(n) = self.qubit_counts.iter().find(|&&n| n < 2 || n % 2 == 1) {
            return Err(Error::InvalidArgument(format!("qubit counts must be even and ≥ 2, got {n}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceCell {
    pub n_qubits: usize,
    pub mode: AnsatzMode,
    pub per_param: Vec<f64>,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub cells: Vec<VarianceCell>,
}

impl VarianceReport {
    pub fn average(&self, n_qubits: usize, mode: AnsatzMode) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.n_qubits == n_qubits && c.mode == mode)
            .map(|c| c.average)
    }

    /// `(n, avg(n) / avg(n_prev))` between consecutive scanned widths.
    pub fn decay_ratios(&self, mode: AnsatzMode) -> Vec<(usize, f64)> {
        let cells: Vec<&VarianceCell> = self.cells.iter().filter(|c| c.mode == mode).collect();
        cells.windows(2).map(|w| (w[1].n_qubits, w[1].average / w[0].average)).collect()
    }
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn sub_seed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn variance_scan(spec: &VarianceScanSpec) -> Result<VarianceReport> {
    spec.validate()?;
    // One input vector and one target per seed; narrower circuits read a
    // prefix of the input.
    let width = *spec.qubit_counts.iter().max().expect("validated");
    let mut data_rng = sub_seed_rng(spec.seed, 0);
    let x: Vec<f64> = (0..width).map(|_| data_rng.gen_range(0.0..std::f64::consts::PI)).collect();
    let target = data_rng.gen_range(-1.0..1.0);
    let grid: Vec<(usize, AnsatzMode)> = spec
        .qubit_counts
        .iter()
        .flat_map(|&n| spec.modes.iter().map(move |&m| (n, m)))
        .collect();
    let cells = grid
        .into_iter()
        .map(|(n, mode)| variance_cell(spec, n, mode, &x[..n], target))
        .collect::<Result<_>>()?;
    Ok(VarianceReport { cells })
}

fn variance_cell(spec: &VarianceScanSpec, n: usize, mode: AnsatzMode, x: &[f64], target: f64) -> Result<VarianceCell> {
    let arch = QgcnArchitecture::new(n, &spec.depths).correlated(mode == AnsatzMode::Correlated);
    let circuit = build_qgcn(&arch)?;
    let stream = 2 * n as u64 + 1 + 1000 * (mode == AnsatzMode::Uncorrelated) as u64;
    let mut rng = sub_seed_rng(spec.seed, stream);
    let pi = std::f64::consts::PI;
    let samples: Vec<Vec<f64>> = (0..spec.samples_per_point)
        .map(|_| (0..circuit.param_count()).map(|_| rng.gen_range(-pi..pi)).collect())
        .collect();
    let grads: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|params| {
            let g = PreparedCircuit::new(&circuit, params)?.gradient(x)?;
            let dl = smooth_l1_grad(g.value, target, 1.0);
            debug_assert!(smooth_l1(g.value, target, 1.0).is_finite());
            Ok(g.params.into_iter().map(|d| dl * d).collect())
        })
        .collect::<Result<_>>()?;
    let per_param: Vec<f64> = (0..circuit.param_count())
        .map(|mu| sample_variance(&grads.iter().map(|g| g[mu]).collect::<Vec<_>>()))
        .collect();
    let average = per_param.iter().sum::<f64>() / per_param.len() as f64;
    Ok(VarianceCell {
        n_qubits: n,
        mode,
        per_param,
        average,
    })
}

/// Variance of `∂θ⟨Z⟩` for a single RY on |0⟩ with θ ~ U[−π, π], using
/// shift-rule derivatives. The exact value is 1/2.
pub fn single_qubit_toy_variance(samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let gate = GateOp::rotation(GateKind::Ry, 0, 0)?;
    let z = |theta: f64| -> Result<f64> {
        let mut s = StateVector::zero(1);
        crate::qsim::apply_gate(&mut s, &gate, &[theta])?;
        Ok(s.z_expectations()[0])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grads = (0..samples)
        .map(|_| {
            let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let h = std::f64::consts::FRAC_PI_2;
            Ok((z(theta + h)? - z(theta - h)?) / 2.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sample_variance(&grads))
}
