//! GraphSAGE-style message passing with quantum or classical aggregators.
//!
//! Atoms are visited in ascending index order. Each visit runs the hop's
//! aggregator once per neighbor on `[scaled features of u, encode(prev_out)]`,
//! averages the outputs, applies σ and hands the result on as `prev_out`.
//! The molecule prediction is the mean over visits.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{PreparedCircuit, QgcnCircuit};
use crate::classical::MlpLayout;
use crate::error::{Error, Result};
use crate::graphdata::{ScaledMolecule, FEATURE_DIM};

/// Aggregator input width: atom features plus the propagated embedding.
pub const INPUT_DIM: usize = FEATURE_DIM + 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Identity,
    Tanh,
}

impl Nonlinearity {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Self::Identity => a,
            Self::Tanh => a.tanh(),
        }
    }

    fn derivative(self, a: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Tanh => 1.0 - a.tanh().powi(2),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Aggregator {
    /// One circuit per hop; a single entry is the shared mode. Hops past the
    /// end reuse the last circuit.
    Quantum(Vec<QgcnCircuit>),
    Classical(MlpLayout),
}

#[derive(Clone, Debug)]
pub struct AggregatorModel {
    aggregator: Aggregator,
    nonlinearity: Nonlinearity,
    /// Start of each circuit's block in the flat parameter vector.
    offsets: Vec<usize>,
    n_params: usize,
}

impl AggregatorModel {
    pub fn quantum_shared(circuit: QgcnCircuit) -> Result<Self> {
        Self::quantum_multi(vec![circuit])
    }

    pub fn quantum_multi(circuits: Vec<QgcnCircuit>) -> Result<Self> {
        if circuits.is_empty() {
            return Err(Error::InvalidArchitecture("no circuits given".into()));
        }
        if let Some(c) = circuits.iter().find(|c| c.n_qubits() != INPUT_DIM) {
            return Err(Error::InvalidArchitecture(format!(
                "aggregator circuits need {INPUT_DIM} qubits, got {}",
                c.n_qubits()
            )));
        }
        let mut offsets = Vec::with_capacity(circuits.len());
        let mut n_params = 0;
        for c in &circuits {
            offsets.push(n_params);
            n_params += c.param_count();
        }
        Ok(Self {
            aggregator: Aggregator::Quantum(circuits),
            nonlinearity: Nonlinearity::Identity,
            offsets,
            n_params,
        })
    }

    pub fn classical(mlp: MlpLayout) -> Result<Self> {
        if mlp.input_dim() != INPUT_DIM {
            return Err(Error::InvalidArchitecture(format!(
                "MLP input width must be {INPUT_DIM}, got {}",
                mlp.input_dim()
            )));
        }
        let n_params = mlp.param_count();
        Ok(Self {
            aggregator: Aggregator::Classical(mlp),
            nonlinearity: Nonlinearity::Identity,
            offsets: vec![0],
            n_params,
        })
    }

    pub fn with_nonlinearity(mut self, nonlinearity: Nonlinearity) -> Self {
        self.nonlinearity = nonlinearity;
        self
    }

    pub fn aggregator(&self) -> &Aggregator {
        &self.aggregator
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn n_aggregators(&self) -> usize {
        self.offsets.len()
    }

    /// Index of the aggregator used at hop `v`.
    pub fn hop_index(&self, v: usize) -> usize {
        v.min(self.offsets.len() - 1)
    }

    /// Parameter range of aggregator `k` in the flat vector.
    pub fn param_range(&self, k: usize) -> std::ops::Range<usize> {
        let end = self.offsets.get(k + 1).copied().unwrap_or(self.n_params);
        self.offsets[k]..end
    }

    /// Circuit and parameter slice used at hop `v`; `None` for the classical
    /// aggregator.
    pub fn hop_circuit<'a>(&'a self, params: &'a [f64], v: usize) -> Option<(&'a QgcnCircuit, &'a [f64])> {
        match &self.aggregator {
            Aggregator::Quantum(circuits) => {
                let k = self.hop_index(v);
                Some((&circuits[k], &params[self.param_range(k)]))
            }
            Aggregator::Classical(_) => None,
        }
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.aggregator {
            Aggregator::Quantum(circuits) => circuits
                .iter()
                .flat_map(|c| c.init_params(rng).into_values())
                .collect(),
            Aggregator::Classical(mlp) => mlp.init_params(rng),
        }
    }

    /// Binds parameters; cells are fused once here and reused for every
    /// molecule.
    pub fn prepare<'a>(&'a self, params: &'a [f64]) -> Result<PreparedModel<'a>> {
        if params.len() != self.n_params {
            return Err(Error::ParamCountMismatch {
                expected: self.n_params,
                got: params.len(),
            });
        }
        let engine = match &self.aggregator {
            Aggregator::Quantum(circuits) => Engine::Quantum(
                circuits
                    .iter()
                    .enumerate()
                    .map(|(k, c)| PreparedCircuit::new(c, &params[self.param_range(k)]))
                    .collect::<Result<_>>()?,
            ),
            Aggregator::Classical(mlp) => Engine::Classical(mlp, params),
        };
        Ok(PreparedModel { model: self, engine })
    }
}

#[derive(Clone, Debug)]
enum Engine<'a> {
    Quantum(Vec<PreparedCircuit<'a>>),
    Classical(&'a MlpLayout, &'a [f64]),
}

/// A model with bound parameters.
#[derive(Clone, Debug)]
pub struct PreparedModel<'a> {
    model: &'a AggregatorModel,
    engine: Engine<'a>,
}

/// Output, parameter gradient and `∂/∂x[last]` of one aggregator run.
struct LocalGrad {
    value: f64,
    params: Vec<f64>,
    prev_input: f64,
}

impl<'a> PreparedModel<'a> {
    pub fn model(&self) -> &AggregatorModel {
        self.model
    }

    fn run(&self, hop: usize, x: &[f64]) -> Result<f64> {
        match &self.engine {
            Engine::Quantum(prepared) => prepared[self.model.hop_index(hop)].evaluate(x),
            Engine::Classical(mlp, params) => mlp.forward(params, x),
        }
    }

    fn run_grad(&self, hop: usize, x: &[f64]) -> Result<LocalGrad> {
        match &self.engine {
            Engine::Quantum(prepared) => {
                let g = prepared[self.model.hop_index(hop)].gradient(x)?;
                Ok(LocalGrad {
                    value: g.value,
                    prev_input: g.inputs[INPUT_DIM - 1],
                    params: g.params,
                })
            }
            Engine::Classical(mlp, params) => {
                let cache = mlp.forward_cached(params, x)?;
                let g = mlp.backward(params, &cache, 1.0);
                Ok(LocalGrad {
                    value: cache.output(),
                    prev_input: g.input[INPUT_DIM - 1],
                    params: g.params,
                })
            }
        }
    }

    /// Mean of the hop's aggregator over the neighbor vectors.
    pub fn aggregate_neighbors(&self, hop: usize, vectors: &[Vec<f64>]) -> Result<f64> {
        if vectors.is_empty() {
            return Err(Error::InvalidArgument("no neighbor vectors to aggregate".into()));
        }
        let mut sum = 0.0;
        for x in vectors {
            sum += self.run(hop, x)?;
        }
        Ok(sum / vectors.len() as f64)
    }

    pub fn forward_molecule(&self, mol: &ScaledMolecule) -> Result<f64> {
        let mut prev_out = 0.0;
        let mut total = 0.0;
        for v in 0..mol.n_atoms() {
            let vectors = node_input(mol, v, prev_out)?;
            prev_out = self.model.nonlinearity.apply(self.aggregate_neighbors(v, &vectors)?);
            total += prev_out;
        }
        Ok(total / mol.n_atoms() as f64)
    }

    /// Prediction and its gradient with respect to the flat parameter
    /// vector, back-propagated through the `prev_out` chain.
    pub fn forward_backward(&self, mol: &ScaledMolecule) -> Result<(f64, Vec<f64>)> {
        let n = mol.n_atoms();
        let sigma = self.model.nonlinearity;
        // Per visit: pre-activation, mean parameter gradient, mean ∂/∂prev_out.
        let mut visits = Vec::with_capacity(n);
        let mut prev_out = 0.0;
        let mut total = 0.0;
        for v in 0..n {
            let vectors = node_input(mol, v, prev_out)?;
            let inv = 1.0 / vectors.len() as f64;
            let mut pre = 0.0;
            let mut dparams: Vec<f64> = Vec::new();
            let mut dprev = 0.0;
            for x in &vectors {
                let g = self.run_grad(v, x)?;
                pre += inv * g.value;
                dprev += inv * g.prev_input * FRAC_PI_2;
                if dparams.is_empty() {
                    dparams = g.params.into_iter().map(|d| inv * d).collect();
                } else {
                    dparams.iter_mut().zip(&g.params).for_each(|(a, d)| *a += inv * d);
                }
            }
            prev_out = sigma.apply(pre);
            total += prev_out;
            visits.push((pre, dparams, dprev));
        }

        let mut grad = vec![0.0; self.model.n_params];
        let mut carry = 0.0;
        for v in (0..n).rev() {
            let (pre, dparams, dprev) = &visits[v];
            let d_out = 1.0 / n as f64 + carry;
            let d_pre = d_out * sigma.derivative(*pre);
            let range = self.model.param_range(self.model.hop_index(v));
            grad[range].iter_mut().zip(dparams).for_each(|(g, d)| *g += d_pre * d);
            carry = d_pre * dprev;
        }
        Ok((total / n as f64, grad))
    }
}

/// Maps an embedding in `[−1, 1]` affinely onto `[0, π]`.
pub fn encode_embedding(prev_out: f64) -> f64 {
    (prev_out + 1.0) * PI / 2.0
}

/// One `INPUT_DIM` vector per neighbor of `v`.
pub fn node_input(mol: &ScaledMolecule, v: usize, prev_out: f64) -> Result<Vec<Vec<f64>>> {
    if !prev_out.is_finite() {
        return Err(Error::NonFinite(format!(
            "embedding before atom {v} of molecule {}",
            mol.id
        )));
    }
    let nbrs = mol.adjacency.get(v).ok_or_else(|| Error::Schema {
        id: mol.id.clone(),
        message: format!("atom index {v} out of range (molecule has {} atoms)", mol.n_atoms()),
    })?;
    let encoded = encode_embedding(prev_out);
    Ok(nbrs
        .iter()
        .map(|&u| {
            let mut x = mol.features[u].to_vec();
            x.push(encoded);
            x
        })
        .collect())
}

/// Convenience wrapper preparing the model for a single molecule.
pub fn forward_molecule(model: &AggregatorModel, params: &[f64], mol: &ScaledMolecule) -> Result<f64> {
    model.prepare(params)?.forward_molecule(mol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_qgcn, oracle, QgcnArchitecture};
    use crate::grad::finite_diff_all;
    use crate::qsim::density::weighted_z_observable;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circuit(depths: &[usize]) -> QgcnCircuit {
        build_qgcn(&QgcnArchitecture::new(INPUT_DIM, depths)).unwrap()
    }

    fn random_molecule(rng: &mut ChaCha8Rng, n: usize) -> ScaledMolecule {
        let features = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..PI))).collect();
        let mut adjacency = vec![Vec::new(); n];
        for v in 1..n {
            // random tree plus an occasional chord
            let u = rng.gen_range(0..v);
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        if n > 3 && rng.gen_bool(0.5) && !adjacency[0].contains(&(n - 1)) {
            adjacency[0].push(n - 1);
            adjacency[n - 1].push(0);
        }
        for (v, a) in adjacency.iter_mut().enumerate() {
            if a.is_empty() {
                a.push(v);
            }
            a.sort_unstable();
        }
        ScaledMolecule {
            id: format!("r{n}"),
            features,
            adjacency,
            target: 0.0,
        }
    }

    #[test]
    fn node_input_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mol = random_molecule(&mut rng, 4);
        mol.adjacency[1] = vec![0, 2, 3];
        let xs = node_input(&mol, 1, 0.0).unwrap();
        assert_eq!(xs.len(), 3);
        assert!(xs.iter().all(|x| x.len() == 8 && x[7] == FRAC_PI_2));
        assert_eq!(&xs[2][..7], &mol.features[3]);
        assert!(node_input(&mol, 4, 0.0).is_err());
        assert!(node_input(&mol, 0, f64::NAN).is_err());
        assert_abs_diff_eq!(encode_embedding(-1.0), 0.0);
        assert_abs_diff_eq!(encode_embedding(1.0), PI);
    }

    #[test]
    fn single_atom_uses_self_vector() {
        let model = AggregatorModel::quantum_shared(circuit(&[3, 5])).unwrap();
        let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(3));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mol = random_molecule(&mut rng, 1);
        assert_eq!(mol.adjacency[0], vec![0]);
        let mut x = mol.features[0].to_vec();
        x.push(FRAC_PI_2);
        let direct = crate::circuit::run_aggregator(&circuit(&[3, 5]), &x, &params).unwrap();
        assert_abs_diff_eq!(forward_molecule(&model, &params, &mol).unwrap(), direct, epsilon = 1e-12);

        let tanh = model.clone().with_nonlinearity(Nonlinearity::Tanh);
        assert_abs_diff_eq!(forward_molecule(&tanh, &params, &mol).unwrap(), direct.tanh(), epsilon = 1e-12);
    }

    #[test]
    fn trivial_circuit_on_zero_features_predicts_one() {
        let model = AggregatorModel::quantum_shared(circuit(&[3, 5])).unwrap();
        let mut params = vec![0.0; model.param_count()];
        let mol = ScaledMolecule {
            id: "path".into(),
            features: vec![[0.0; FEATURE_DIM]; 3],
            adjacency: vec![vec![1], vec![0, 2], vec![1]],
            target: 0.0,
        };
        // All frequencies zero: the 8th qubit stays idle as well.
        assert_abs_diff_eq!(forward_molecule(&model, &params, &mol).unwrap(), 1.0, epsilon = 1e-12);
        params[..8].fill(1.0);
        let out = forward_molecule(&model, &params, &mol).unwrap();
        assert!((-1.0..=1.0).contains(&out));
    }

    #[test]
    fn mean_of_runs_equals_tensor_product_oracle() {
        let c = build_qgcn(&QgcnArchitecture::new(4, &[1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let params = c.init_params(&mut rng).into_values();
            let xs: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..4).map(|_| rng.gen_range(0.0..PI)).collect())
                .collect();
            let mean: f64 = xs
                .iter()
                .map(|x| crate::circuit::run_aggregator(&c, x, &params).unwrap())
                .sum::<f64>()
                / 3.0;
            let rhos: Vec<_> = xs.iter().map(|x| oracle::output_state(&c, x, &params).unwrap()).collect();
            let joint = rhos[0].kron(&rhos[1]).kron(&rhos[2]);
            assert_eq!(joint.n_qubits(), 6);
            let obs = weighted_z_observable(6, &[0, 1, 2, 3, 4, 5], &[1.0; 6]);
            assert_abs_diff_eq!(joint.expectation(&obs), mean, epsilon = 1e-10);
        }
    }

    #[test]
    fn hop_indexing() {
        let multi = AggregatorModel::quantum_multi((0..9).map(|_| circuit(&[1])).collect()).unwrap();
        assert_eq!(multi.param_count(), 9 * 68);
        assert_eq!(multi.hop_index(4), 4);
        assert_eq!(multi.hop_index(17), 8);
        let params: Vec<f64> = (0..multi.param_count()).map(|k| k as f64).collect();
        let (_, p) = multi.hop_circuit(&params, 4).unwrap();
        assert_eq!(p[0], 4.0 * 68.0);
        let shared = AggregatorModel::quantum_shared(circuit(&[3, 5])).unwrap();
        assert_eq!(shared.hop_index(0), shared.hop_index(12));
        assert!(AggregatorModel::quantum_shared(build_qgcn(&QgcnArchitecture::new(4, &[1])).unwrap()).is_err());
        assert!(shared.prepare(&[0.0; 3]).is_err());
    }

    #[test]
    fn long_molecule_reuses_last_circuit() {
        let multi = AggregatorModel::quantum_multi((0..9).map(|_| circuit(&[1])).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = multi.init_params(&mut rng);
        let mol = random_molecule(&mut rng, 18);
        let prepared = multi.prepare(&params).unwrap();
        let (pred, grad) = prepared.forward_backward(&mol).unwrap();
        assert_abs_diff_eq!(pred, prepared.forward_molecule(&mol).unwrap(), epsilon = 1e-12);
        assert!(grad[8 * 68..].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn single_atom_data_only_trains_first_circuit() {
        let multi = AggregatorModel::quantum_multi((0..3).map(|_| circuit(&[1])).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = multi.init_params(&mut rng);
        let mol = random_molecule(&mut rng, 1);
        let (_, grad) = multi.prepare(&params).unwrap().forward_backward(&mol).unwrap();
        assert!(grad[..68].iter().any(|&g| g != 0.0));
        assert!(grad[68..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mol = random_molecule(&mut rng, 4);
        let models = [
            AggregatorModel::quantum_multi((0..2).map(|_| circuit(&[1])).collect()).unwrap(),
            AggregatorModel::quantum_shared(circuit(&[1]))
                .unwrap()
                .with_nonlinearity(Nonlinearity::Tanh),
            AggregatorModel::classical(MlpLayout::with_hidden(8, &[9, 2]).unwrap()).unwrap(),
        ];
        for model in &models {
            let params = model.init_params(&mut rng);
            let (_, grad) = model.prepare(&params).unwrap().forward_backward(&mol).unwrap();
            let fd = finite_diff_all(|p: &[f64]| forward_molecule(model, p, &mol), &params, 1e-5).unwrap();
            for (a, b) in grad.iter().zip(&fd.0) {
                assert!((a - b).abs() <= 1e-5 * b.abs() + 1e-8, "{a} vs {b}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn invariant_under_adjacency_permutation(seed in 0u64..1000, n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = AggregatorModel::quantum_shared(circuit(&[1])).unwrap();
            let params = model.init_params(&mut rng);
            let mol = random_molecule(&mut rng, n);
            let mut shuffled = mol.clone();
            for a in &mut shuffled.adjacency {
                rand::seq::SliceRandom::shuffle(a.as_mut_slice(), &mut rng);
            }
            let a = forward_molecule(&model, &params, &mol).unwrap();
            let b = forward_molecule(&model, &params, &shuffled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
