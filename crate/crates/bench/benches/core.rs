use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use symdl::loss::loss_and_grad;
use symdl::{eval_jet, rollout, LossWeights, NewtonConfig, SymmetryGenerator, TrainingSet, TrueMidpoint, SystemSpec};
use symdl_bench::{cartpend_trajectory, network};

fn jets(c: &mut Criterion) {
    let mut g = c.benchmark_group("eval_jet");
    for width in [32, 128] {
        let model = network(&[width; 3]);
        g.bench_with_input(BenchmarkId::from_parameter(width), &model, |b, m| {
            b.iter(|| eval_jet(m, black_box(&[0.1, 2.9]), black_box(&[0.11, 2.91])).unwrap())
        });
    }
    g.finish();
}

fn gradient(c: &mut Criterion) {
    let t = cartpend_trajectory(200);
    let set = TrainingSet::new(&[t]).unwrap();
    let weights = LossWeights::default();
    let generators = vec![SymmetryGenerator::new(vec![0.1; 4], vec![1.5, 0.5]).unwrap()];
    let mut g = c.benchmark_group("loss_and_grad");
    g.sample_size(20);
    for width in [32, 128] {
        let model = network(&[width; 3]);
        g.bench_with_input(BenchmarkId::new("dlnn", width), &model, |b, m| {
            b.iter(|| loss_and_grad(m, &[], &set, &weights, false).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("symdlnn", width), &model, |b, m| {
            b.iter(|| loss_and_grad(m, &generators, &set, &weights, true).unwrap())
        });
    }
    g.finish();
}

fn rollouts(c: &mut Criterion) {
    let t = cartpend_trajectory(2);
    let (q0, q1) = (t.point(0).to_vec(), t.point(1).to_vec());
    let newton = NewtonConfig::default();
    let mut g = c.benchmark_group("rollout_200");
    g.sample_size(20);
    let oracle = TrueMidpoint::new(SystemSpec::cartpend(), 0.01).unwrap();
    g.bench_function("true_midpoint", |b| b.iter(|| rollout(&oracle, &q0, &q1, 200, &newton).unwrap()));
    let model = network(&[128; 3]);
    g.bench_function("network_128", |b| b.iter(|| rollout(&model, &q0, &q1, 200, &newton).unwrap()));
    g.finish();
}

criterion_group!(benches, jets, gradient, rollouts);
criterion_main!(benches);
