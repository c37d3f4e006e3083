use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use swave_bench::{instance, network};
use swave_core::dist::InputDistN;
use swave_core::hardfam::{network_forward, to_network};
use swave_core::sqoracle::{OracleConfig, OracleMode, QuerySpec, VstatOracle};
use swave_core::statdim::mc_covariance;

fn wave_eval(c: &mut Criterion) {
    let (f, ds) = instance(64, 1.0, 4096).unwrap();
    let net = to_network(&f);
    let mut g = c.benchmark_group("hard_function");
    g.throughput(Throughput::Elements(ds.len() as u64));
    g.bench_function("closed_form", |b| b.iter(|| (0..ds.len()).map(|i| f.eval_unchecked(ds.row(i))).sum::<f64>()));
    g.bench_function("network_forward", |b| b.iter(|| (0..ds.len()).map(|i| network_forward(&net, ds.row(i)).unwrap()).sum::<f64>()));
    g.finish();
}

fn mlp_step(c: &mut Criterion) {
    let (_, ds) = instance(64, 1.0, 256).unwrap();
    let mut g = c.benchmark_group("mlp");
    for depth in [1, 4] {
        let m = network(64, depth, 4).unwrap();
        g.bench_function(format!("backward_d{depth}_batch256"), |b| b.iter(|| m.backward(&ds.inputs, &ds.labels).unwrap()));
    }
    g.finish();
}

fn covariance(c: &mut Criterion) {
    let (f, _) = instance(64, 0.5, 1).unwrap();
    let (g2, _) = instance(64, 0.25, 1).unwrap();
    let d = InputDistN::gaussian(64);
    c.bench_function("mc_covariance_n64_20k", |b| b.iter(|| mc_covariance(&f, &g2, &d, 20_000, 5).unwrap()));
}

fn oracle(c: &mut Criterion) {
    let (f, _) = instance(32, 4.0, 1).unwrap();
    let q = QuerySpec::new("y", 0.5, |_, y| y.clamp(0.0, 1.0));
    for mode in [OracleMode::Empirical, OracleMode::Decoy] {
        c.bench_function(&format!("vstat_{mode}_t100"), |b| {
            b.iter_batched(
                || VstatOracle::new(OracleConfig::new(100, mode), f.clone(), InputDistN::gaussian(32), 1).unwrap(),
                |o| o.answer(&q, 7).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, wave_eval, mlp_step, covariance, oracle);
criterion_main!(benches);
