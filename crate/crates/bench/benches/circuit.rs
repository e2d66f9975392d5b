use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qgnn_core::aggregate::AggregatorModel;
use qgnn_core::circuit::{build_qgcn, PreparedCircuit, QgcnArchitecture};
use qgnn_core::graphdata::ScaledMolecule;

fn circuit(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (n, depths) in [(8usize, vec![3usize, 5]), (12, vec![3])] {
        let qgcn = build_qgcn(&QgcnArchitecture::new(n, &depths)).unwrap();
        let params = qgcn.init_params(&mut rng).into_values();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let prepared = PreparedCircuit::new(&qgcn, &params).unwrap();
        c.bench_function(&format!("evaluate n={n} r={depths:?}"), |b| b.iter(|| prepared.evaluate(&x).unwrap()));
        c.bench_function(&format!("gradient n={n} r={depths:?}"), |b| b.iter(|| prepared.gradient(&x).unwrap()));
        c.bench_function(&format!("prepare n={n} r={depths:?}"), |b| {
            b.iter(|| PreparedCircuit::new(&qgcn, &params).unwrap())
        });
    }
}

fn molecule(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = AggregatorModel::quantum_shared(build_qgcn(&QgcnArchitecture::new(8, &[3, 5])).unwrap()).unwrap();
    let params = model.init_params(&mut rng);
    // 9-atom chain
    let n = 9;
    let mol = ScaledMolecule {
        id: "chain".into(),
        features: (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..3.0))).collect(),
        adjacency: (0..n)
            .map(|v: usize| [v.checked_sub(1), (v + 1 < n).then_some(v + 1)].into_iter().flatten().collect())
            .collect(),
        target: 0.0,
    };
    let prepared = model.prepare(&params).unwrap();
    c.bench_function("forward_molecule 9-atom chain", |b| b.iter(|| prepared.forward_molecule(&mol).unwrap()));
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("forward_backward 9-atom chain", |b| b.iter(|| prepared.forward_backward(&mol).unwrap()));
    group.finish();
}

criterion_group!(benches, circuit, molecule);
criterion_main!(benches);
