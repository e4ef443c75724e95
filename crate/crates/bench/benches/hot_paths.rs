use std::hint::black_box;
use std::sync::Arc;

use craftchain::agents::{
    soft_target, sqil_step, ChopTreeNet, SqilBatch, SqilParams, SqilTransition,
};
use craftchain::codec::Codec;
use craftchain::discretize::kmeans_fit;
use craftchain::env::{Action, CraftWorld, EnvConfig, EnvVariant, Environment, Pov};
use craftchain::nn::{Optimizer, Tensor};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn env_step(c: &mut Criterion) {
    let codec = Arc::new(Codec::for_craftworld(1).unwrap());
    let mut env = CraftWorld::new(EnvConfig::default(), codec.clone()).unwrap();
    let moves: Vec<Vec<f64>> = [
        Action::MoveNorth,
        Action::TurnLeft,
        Action::Attack,
        Action::MoveEast,
    ]
    .iter()
    .map(|a| codec.codebook.encode(a.index()).unwrap().to_vec())
    .collect();
    env.reset(1, EnvVariant::ObtainChainSparse).unwrap();
    let mut i = 0;
    c.bench_function("env_step", |b| {
        b.iter(|| {
            if env.is_done() {
                env.reset(1, EnvVariant::ObtainChainSparse).unwrap();
            }
            i += 1;
            black_box(env.step(&moves[i % moves.len()]).unwrap());
        })
    });
}

fn choptree(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let frame = |rng: &mut ChaCha8Rng| {
        Arc::new(Pov::from_raw(32, (0..32 * 32 * 3).map(|_| rng.random()).collect()).unwrap())
    };
    let ts: Vec<SqilTransition> = (0..32)
        .map(|i| SqilTransition {
            obs: frame(&mut rng),
            action: i % 60,
            reward: 1.0,
            next: frame(&mut rng),
            done: false,
        })
        .collect();
    let refs: Vec<&SqilTransition> = ts.iter().collect();
    let batch = SqilBatch::from_transitions(&refs).unwrap();
    let mut net = ChopTreeNet::new(32, 60, 1).unwrap();
    let target = net.clone();
    let mut opt = Optimizer::adam(1e-4);
    let p = SqilParams::default();
    c.bench_function("sqil_step_b32", |b| {
        b.iter(|| black_box(sqil_step(&mut net, &target, &batch, &p, &mut opt).unwrap()))
    });
    let one = Tensor::new(vec![1, 3, 32, 32], ts[0].obs.to_chw()).unwrap();
    c.bench_function("q_values_b1", |b| {
        b.iter(|| black_box(net.q_values(&one).unwrap()))
    });
    let q: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
    c.bench_function("soft_target", |b| {
        b.iter(|| black_box(soft_target(1.0, false, &q, 0.99, 1.0)))
    });
}

fn clustering(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<Vec<f64>> = (0..2000)
        .map(|_| (0..64).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    c.bench_function("kmeans_2000x64_k30", |b| {
        b.iter(|| black_box(kmeans_fit(&pts, 30, 20, 1).unwrap()))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = env_step, choptree, clustering
}
criterion_main!(benches);
