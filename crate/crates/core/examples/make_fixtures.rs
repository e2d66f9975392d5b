//! Regenerates the bundled fixtures `data/case1.json` and `data/case2.json`.
//!
//! Molecules are synthetic: random acyclic H/C/N/O/F graphs with explicit
//! hydrogens, valence-filled, with occasional multiple bonds. The target is
//! a gap-like surrogate (per-atom contributions, lowered by π bonds) plus
//! small noise, in eV.
//!
//! ```text
//! cargo run -p qgnn-core --example make_fixtures -- data
//! ```

use std::path::PathBuf;

use qgnn_core::graphdata::{save_dataset, Dataset, MoleculeGraph};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq)]
enum Element {
    H,
    C,
    N,
    O,
    F,
}

impl Element {
    fn z(self) -> f64 {
        match self {
            Self::H => 1.0,
            Self::C => 6.0,
            Self::N => 7.0,
            Self::O => 8.0,
            Self::F => 9.0,
        }
    }

    fn mass(self) -> f64 {
        match self {
            Self::H => 1.008,
            Self::C => 12.011,
            Self::N => 14.007,
            Self::O => 15.999,
            Self::F => 18.998,
        }
    }

    fn valence(self) -> usize {
        match self {
            Self::H | Self::F => 1,
            Self::C => 4,
            Self::N => 3,
            Self::O => 2,
        }
    }

    /// Gap contribution of one atom (eV).
    fn gap(self, pi_bonds: usize) -> f64 {
        let base = match self {
            Self::H => 10.2,
            Self::C => 9.1,
            Self::N => 7.4,
            Self::O => 7.9,
            Self::F => 10.8,
        };
        base - 1.6 * pi_bonds as f64
    }
}

fn heavy_element(rng: &mut ChaCha8Rng) -> Element {
    match rng.gen_range(0..20) {
        0..=10 => Element::C,
        11..=14 => Element::N,
        15..=18 => Element::O,
        _ => Element::F,
    }
}

fn molecule(rng: &mut ChaCha8Rng, id: String, atoms: std::ops::RangeInclusive<usize>) -> MoleculeGraph {
    loop {
        let n_heavy = rng.gen_range(1..=6);
        let mut elements = vec![if n_heavy > 1 { Element::C } else { heavy_element(rng) }];
        // (i, j, order)
        let mut bonds: Vec<(usize, usize, usize)> = Vec::new();
        let mut used = vec![0usize];
        let mut ok = true;
        for i in 1..n_heavy {
            let e = heavy_element(rng);
            let open: Vec<usize> = (0..i).filter(|&j| used[j] < elements[j].valence()).collect();
            if open.is_empty() {
                ok = false;
                break;
            }
            let j = open[rng.gen_range(0..open.len())];
            elements.push(e);
            used.push(1);
            used[j] += 1;
            bonds.push((j, i, 1));
        }
        if !ok {
            continue;
        }
        for bond in &mut bonds {
            let (i, j, order) = *bond;
            if rng.gen_bool(0.3) && used[i] < elements[i].valence() && used[j] < elements[j].valence() && order < 3 {
                bond.2 += 1;
                used[i] += 1;
                used[j] += 1;
            }
        }
        let n_h: usize = (0..n_heavy).map(|i| elements[i].valence() - used[i]).sum();
        if !atoms.contains(&(n_heavy + n_h)) {
            continue;
        }

        let mut edges: Vec<(usize, usize)> = bonds.iter().map(|&(i, j, _)| (i, j)).collect();
        let mut pi = vec![0usize; n_heavy];
        for &(i, j, order) in &bonds {
            pi[i] += order - 1;
            pi[j] += order - 1;
        }
        let mut all = elements.clone();
        for i in 0..n_heavy {
            for _ in 0..elements[i].valence() - used[i] {
                edges.push((i, all.len()));
                all.push(Element::H);
            }
        }
        let mut degree = vec![0usize; all.len()];
        for &(i, j) in &edges {
            degree[i] += 1;
            degree[j] += 1;
        }
        let features = all
            .iter()
            .enumerate()
            .map(|(a, &e)| {
                let p = if a < n_heavy { pi[a] } else { 0 };
                let hybridization = match (e, p) {
                    (Element::H, _) => 1.0,
                    (_, 0) => 4.0,
                    (_, 1) => 3.0,
                    _ => 2.0,
                };
                [e.z(), 0.0, degree[a] as f64, 0.0, 0.0, hybridization, e.mass() / 100.0]
            })
            .collect();
        let total_pi: usize = bonds.iter().map(|b| b.2 - 1).sum();
        let mean_gap = all
            .iter()
            .enumerate()
            .map(|(a, e)| e.gap(if a < n_heavy { pi[a] } else { 0 }))
            .sum::<f64>()
            / all.len() as f64;
        let target = mean_gap - 0.4 * (1.0 + total_pi as f64).ln() + rng.gen_range(-0.05..0.05);
        let target = (target * 1e4).round() / 1e4;
        return MoleculeGraph::new(id, features, edges, target).expect("generator builds valid graphs");
    }
}

fn case(seed: u64, prefix: &str, atoms: std::ops::RangeInclusive<usize>) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (*atoms.start(), *atoms.end());
    loop {
        let molecules: Vec<MoleculeGraph> = (0..30)
            .map(|k| molecule(&mut rng, format!("{prefix}_{k:03}"), atoms.clone()))
            .collect();
        let ds = Dataset::new(molecules);
        if ds.max_atoms() == hi && (prefix == "case1" || ds.min_atoms() == lo) {
            return ds;
        }
    }
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&out).expect("create output directory");
    save_dataset(&case(1, "case1", 3..=9), out.join("case1.json")).expect("write case1");
    save_dataset(&case(2, "case2", 7..=18), out.join("case2.json")).expect("write case2");
}
