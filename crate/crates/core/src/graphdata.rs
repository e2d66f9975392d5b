//! Molecule graphs, fixture files, feature scaling and train/test splits.
//!
//! Fixture schema (UTF-8 JSON):
//!
//! ```json
//! {"molecules": [{"id": "m0", "atom_features": [[6, 0, 4, 0, 0, 4, 0.12], ...],
//!                 "edges": [[0, 1], ...], "target": 0.25}]}
//! ```

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atomic number, chirality, degree, formal charge, radical electrons,
/// hybridization, scaled mass.
pub const FEATURE_DIM: usize = 7;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "atomic_number",
    "chirality",
    "degree",
    "formal_charge",
    "radical_electrons",
    "hybridization",
    "scaled_mass",
];

#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeGraph {
    pub id: String,
    pub atom_features: Vec<[f64; FEATURE_DIM]>,
    /// Undirected edges, stored once each.
    pub edges: Vec<(usize, usize)>,
    pub target: f64,
    adjacency: Vec<Vec<usize>>,
}

impl MoleculeGraph {
    pub fn new(
        id: impl Into<String>,
        atom_features: Vec<[f64; FEATURE_DIM]>,
        edges: Vec<(usize, usize)>,
        target: f64,
    ) -> Result<Self> {
        let id = id.into();
        let n = atom_features.len();
        let schema = |message: String| Error::Schema {
            id: id.clone(),
            message,
        };
        if n == 0 {
            return Err(schema("molecule has no atoms".into()));
        }
        if !target.is_finite() {
            return Err(schema("target is not finite".into()));
        }
        if atom_features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(schema("non-finite atom feature".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &edges {
            if i >= n || j >= n {
                return Err(schema(format!(
                    "edge ({i}, {j}) out of range; valid atom indices are 0..={}",
                    n - 1
                )));
            }
            if i == j {
                return Err(schema(format!("self-loop on atom {i}")));
            }
            if adjacency[i].contains(&j) {
                return Err(schema(format!("duplicate edge ({i}, {j})")));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        adjacency.iter_mut().for_each(|a| a.sort_unstable());
        Ok(Self {
            id,
            atom_features,
            edges,
            target,
            adjacency,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.atom_features.len()
    }

    /// Sorted neighbors of `v`; an isolated atom is its own neighbor.
    pub fn neighbors(&self, v: usize) -> Result<Vec<usize>> {
        let adj = self.adjacency.get(v).ok_or_else(|| Error::Schema {
            id: self.id.clone(),
            message: format!("atom index {v} out of range (molecule has {} atoms)", self.n_atoms()),
        })?;
        Ok(if adj.is_empty() { vec![v] } else { adj.clone() })
    }
}

/// Sorted neighbors of `v` in `mol`, with the isolated-atom self fallback.
pub fn neighbors(mol: &MoleculeGraph, v: usize) -> Result<Vec<usize>> {
    mol.neighbors(v)
}

/// Min-max statistics mapping features to `[0, π]` and the target to `[−1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub feature_min: [f64; FEATURE_DIM],
    pub feature_max: [f64; FEATURE_DIM],
    pub target_min: f64,
    pub target_max: f64,
}

impl Scaling {
    pub fn fit(molecules: &[MoleculeGraph]) -> Result<Self> {
        if molecules.is_empty() {
            return Err(Error::InvalidArgument("cannot fit scaling on an empty dataset".into()));
        }
        let mut feature_min = [f64::INFINITY; FEATURE_DIM];
        let mut feature_max = [f64::NEG_INFINITY; FEATURE_DIM];
        for f in molecules.iter().flat_map(|m| &m.atom_features) {
            for k in 0..FEATURE_DIM {
                feature_min[k] = feature_min[k].min(f[k]);
                feature_max[k] = feature_max[k].max(f[k]);
            }
        }
        let (target_min, target_max) = molecules
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m.target), hi.max(m.target))
            });
        Ok(Self {
            feature_min,
            feature_max,
            target_min,
            target_max,
        })
    }

    /// Feature `k` in `[0, π]`; constant columns map to 0 and values outside
    /// the fitted range are clamped.
    pub fn feature(&self, k: usize, value: f64) -> f64 {
        let (lo, hi) = (self.feature_min[k], self.feature_max[k]);
        if hi <= lo {
            return 0.0;
        }
        (PI * (value - lo) / (hi - lo)).clamp(0.0, PI)
    }

    /// Target affinely in `[−1, 1]` over the fitted range; not clamped.
    pub fn target(&self, value: f64) -> f64 {
        let (lo, hi) = (self.target_min, self.target_max);
        if hi <= lo {
            return 0.0;
        }
        2.0 * (value - lo) / (hi - lo) - 1.0
    }

    pub fn unscale_target(&self, scaled: f64) -> f64 {
        self.target_min + (scaled + 1.0) * (self.target_max - self.target_min) / 2.0
    }

    pub fn apply(&self, mol: &MoleculeGraph) -> ScaledMolecule {
        let features = mol
            .atom_features
            .iter()
            .map(|f| std::array::from_fn(|k| self.feature(k, f[k])))
            .collect();
        ScaledMolecule {
            id: mol.id.clone(),
            features,
            adjacency: (0..mol.n_atoms())
                .map(|v| mol.neighbors(v).expect("index in range"))
                .collect(),
            target: self.target(mol.target),
        }
    }
}

/// Model-ready molecule: scaled features, resolved neighbor lists, scaled
/// target.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledMolecule {
    pub id: String,
    pub features: Vec<[f64; FEATURE_DIM]>,
    /// `adjacency[v]` is `neighbors(v)`, including the isolated-atom fallback.
    pub adjacency: Vec<Vec<usize>>,
    pub target: f64,
}

impl ScaledMolecule {
    pub fn n_atoms(&self) -> usize {
        self.features.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub molecules: Vec<MoleculeGraph>,
    pub scaling: Option<Scaling>,
}

impl Dataset {
    pub fn new(molecules: Vec<MoleculeGraph>) -> Self {
        Self {
            molecules,
            scaling: None,
        }
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    pub fn max_atoms(&self) -> usize {
        self.molecules.iter().map(|m| m.n_atoms()).max().unwrap_or(0)
    }

    pub fn min_atoms(&self) -> usize {
        self.molecules.iter().map(|m| m.n_atoms()).min().unwrap_or(0)
    }

    /// Molecules with the attached scaling applied.
    pub fn scaled(&self) -> Result<Vec<ScaledMolecule>> {
        let scaling = self
            .scaling
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("dataset has not been scaled".into()))?;
        Ok(self.molecules.iter().map(|m| scaling.apply(m)).collect())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FixtureFile = serde_json::from_str(text)?;
        let molecules = file
            .molecules
            .into_iter()
            .enumerate()
            .map(|(k, raw)| raw.validate(k))
            .collect::<Result<_>>()?;
        Ok(Self::new(molecules))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = FixtureFile {
            molecules: self
                .molecules
                .iter()
                .map(|m| RawMolecule {
                    id: Some(m.id.clone()),
                    atom_features: m.atom_features.iter().map(|f| f.to_vec()).collect(),
                    edges: m.edges.iter().map(|&(i, j)| vec![i, j]).collect(),
                    target: Some(m.target),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

#[derive(Serialize, Deserialize)]
struct FixtureFile {
    molecules: Vec<RawMolecule>,
}

#[derive(Serialize, Deserialize)]
struct RawMolecule {
    id: Option<String>,
    atom_features: Vec<Vec<f64>>,
    #[serde(default)]
    edges: Vec<Vec<usize>>,
    target: Option<f64>,
}

impl RawMolecule {
    fn validate(self, position: usize) -> Result<MoleculeGraph> {
        let id = self.id.unwrap_or_else(|| format!("#{position}"));
        let schema = |message: String| Error::Schema {
            id: id.clone(),
            message,
        };
        let target = self.target.ok_or_else(|| schema("missing target".into()))?;
        let features = self
            .atom_features
            .iter()
            .enumerate()
            .map(|(a, f)| {
                <[f64; FEATURE_DIM]>::try_from(f.as_slice()).map_err(|_| {
                    schema(format!(
                        "atom {a} has {} features, expected {FEATURE_DIM}",
                        f.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = self
            .edges
            .iter()
            .map(|e| match e.as_slice() {
                &[i, j] => Ok((i, j)),
                other => Err(schema(format!("edge {other:?} does not have two endpoints"))),
            })
            .collect::<Result<Vec<_>>>()?;
        MoleculeGraph::new(id.clone(), features, edges, target)
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Dataset::from_json(&text)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset.to_json()? + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Attaches scaling fitted on the dataset itself.
pub fn scale_features(dataset: &Dataset) -> Result<Dataset> {
    Ok(Dataset {
        molecules: dataset.molecules.clone(),
        scaling: Some(Scaling::fit(&dataset.molecules)?),
    })
}

/// Seeded shuffle, then `floor(train_fraction · n)` molecules for training.
/// Both parts carry the scaling fitted on the training part.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    let n_train = (train_fraction * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::EmptyPartition {
            train: n_train,
            test: n - n_train,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| -> Vec<MoleculeGraph> {
        idx.iter().map(|&i| dataset.molecules[i].clone()).collect()
    };
    let train = pick(&order[..n_train]);
    let test = pick(&order[n_train..]);
    let scaling = Scaling::fit(&train)?;
    Ok((
        Dataset {
            molecules: train,
            scaling: Some(scaling.clone()),
        },
        Dataset {
            molecules: test,
            scaling: Some(scaling),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn atom(z: f64) -> [f64; FEATURE_DIM] {
        [z, 0.0, 1.0, 0.0, 0.0, 4.0, z * 2.0 / 100.0]
    }

    fn mol(id: &str, n: usize, edges: Vec<(usize, usize)>, target: f64) -> MoleculeGraph {
        MoleculeGraph::new(id, (0..n).map(|k| atom(6.0 + k as f64)).collect(), edges, target).unwrap()
    }

    fn fixture(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|k| mol(&format!("m{k}"), 1 + k % 4, vec![], k as f64))
                .collect(),
        )
    }

    #[test]
    fn loads_two_molecule_fixture() {
        let text = r#"{"molecules": [
            {"id": "a", "atom_features": [[6,0,1,0,0,4,0.12],[8,0,1,0,0,4,0.16]], "edges": [[0,1]], "target": 0.3},
            {"id": "b", "atom_features": [[7,0,0,0,0,4,0.14]], "edges": [], "target": 0.1}
        ]}"#;
        let ds = Dataset::from_json(text).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.molecules[0].neighbors(0).unwrap(), vec![1]);
        let again = Dataset::from_json(&ds.to_json().unwrap()).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn schema_errors_name_the_molecule() {
        let text = r#"{"molecules": [{"id": "short", "atom_features": [[6,0,1,0,0,4]], "edges": [], "target": 1}]}"#;
        let err = Dataset::from_json(text).unwrap_err();
        assert!(matches!(&err, Error::Schema { id, .. } if id == "short"), "{err}");

        let atoms = vec![[6, 0, 1, 0, 0, 4, 0]; 9];
        let text = serde_json::json!({"molecules": [{"id": "nine", "atom_features": atoms, "edges": [[0, 9]], "target": 1}]});
        let err = Dataset::from_json(&text.to_string()).unwrap_err();
        assert!(err.to_string().contains("0..=8"), "{err}");

        let text = r#"{"molecules": [{"id": "t", "atom_features": [[6,0,1,0,0,4,1]]}]}"#;
        assert!(Dataset::from_json(text).unwrap_err().to_string().contains("missing target"));
        assert!(Dataset::from_json("").is_err());
        assert!(Dataset::from_json("{\"molecules\": [{\"id\": \"e\", \"atom_features\": [], \"target\": 0}]}").is_err());
    }

    #[test]
    fn rejects_duplicate_and_self_edges() {
        let f = vec![atom(6.0); 3];
        assert!(MoleculeGraph::new("d", f.clone(), vec![(0, 1), (1, 0)], 0.0).is_err());
        assert!(MoleculeGraph::new("s", f, vec![(2, 2)], 0.0).is_err());
    }

    #[test]
    fn neighbor_lists() {
        let path = mol("p", 3, vec![(1, 2), (0, 1)], 0.0);
        assert_eq!(neighbors(&path, 1).unwrap(), vec![0, 2]);
        let tri = mol("t", 3, vec![(0, 2), (1, 2), (0, 1)], 0.0);
        assert_eq!(neighbors(&tri, 0).unwrap(), vec![1, 2]);
        let lone = mol("l", 1, vec![], 0.0);
        assert_eq!(neighbors(&lone, 0).unwrap(), vec![0]);
        assert!(neighbors(&lone, 1).is_err());
    }

    #[test]
    fn scaling_rules() {
        let ms = vec![
            MoleculeGraph::new("a", vec![[1.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0]], vec![], 2.0).unwrap(),
            MoleculeGraph::new("b", vec![[3.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0]], vec![], 4.0).unwrap(),
            MoleculeGraph::new("c", vec![[2.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0]], vec![], 3.0).unwrap(),
        ];
        let ds = scale_features(&Dataset::new(ms)).unwrap();
        let s = ds.scaled().unwrap();
        assert_abs_diff_eq!(s[0].features[0][0], 0.0);
        assert_abs_diff_eq!(s[1].features[0][0], PI);
        assert!(s.iter().all(|m| m.features[0][1] == 0.0));
        assert_abs_diff_eq!(s[2].target, 0.0);
        assert_abs_diff_eq!(s[0].target, -1.0);
        assert_abs_diff_eq!(ds.scaling.as_ref().unwrap().unscale_target(1.0), 4.0);
        assert!(Dataset::new(vec![]).scaled().is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (tr, te) = split(&fixture(30), 0.7, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (21, 9));
        let (tr2, _) = split(&fixture(30), 0.7, 1).unwrap();
        assert_eq!(tr, tr2);
        let (tr, te) = split(&fixture(10), 0.7, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        assert_eq!(tr.scaling, te.scaling);
        assert_eq!(tr.scaling, Some(Scaling::fit(&tr.molecules).unwrap()));
        assert!(matches!(split(&fixture(1), 0.7, 0), Err(Error::EmptyPartition { .. })));
        assert!(split(&fixture(10), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn scaled_features_stay_in_range(
            train in proptest::collection::vec(proptest::array::uniform7(-5.0f64..5.0), 1..20),
            probe in proptest::array::uniform7(-50.0f64..50.0),
        ) {
            let ms: Vec<MoleculeGraph> = train
                .iter()
                .enumerate()
                .map(|(k, f)| MoleculeGraph::new(format!("{k}"), vec![*f], vec![], k as f64).unwrap())
                .collect();
            let scaling = Scaling::fit(&ms).unwrap();
            let probe = MoleculeGraph::new("p", vec![probe], vec![], 0.0).unwrap();
            for m in ms.iter().chain(std::iter::once(&probe)) {
                for v in scaling.apply(m).features.iter().flatten() {
                    prop_assert!((0.0..=PI + 1e-12).contains(v));
                }
            }
        }
    }
}
