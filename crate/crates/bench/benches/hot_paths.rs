use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use semnav::dataset::{present_targets, DataConfig, Dataset};
use semnav::env::{Action, EnvConfig, NavEnv, RoomType};
use semnav::gcn::{gcn_forward, node_inputs, GcnParameters};
use semnav::graph::ObjectSplit;
use semnav::policy::{Architecture, ModelDims, Policy};
use semnav::rng;
use semnav::tensor::Matrix;

fn matmul(c: &mut Criterion) {
    let a = Matrix::from_vec(64, 64, (0..64 * 64).map(|i| (i % 17) as f64 * 0.1).collect()).unwrap();
    let b = a.transpose();
    c.bench_function("matmul_64x64", |bench| bench.iter(|| black_box(&a).matmul(black_box(&b)).unwrap()));
}

fn gcn(c: &mut Criterion) {
    let data = Dataset::desk(DataConfig::default()).unwrap();
    let dims = ModelDims::desk().gcn();
    let params = GcnParameters::init(dims, &mut rng::rng_from(0, &[]));
    let scores: Vec<f64> = (0..data.vocab.len()).map(|i| (i % 3) as f64 / 2.0).collect();
    let adjacency = data.graph.normalized().clone();
    c.bench_function("gcn_forward_desk", |bench| {
        bench.iter(|| {
            let x = node_inputs(black_box(&scores), &data.embeddings, &params).unwrap();
            gcn_forward(&x, &adjacency, &params).unwrap()
        })
    });

    let arch = Architecture::new(ModelDims::desk(), data.embeddings.clone(), &data.graph, false, true).unwrap();
    let policy = Policy::new(Arc::new(arch), 0);
    let scene = Arc::clone(&data.room(RoomType::Kitchen).train[0]);
    let target = present_targets(&scene, &data.targets(RoomType::Kitchen, ObjectSplit::Known))[0];
    let env = NavEnv::reset(scene, data.vocab.len(), target, EnvConfig::new(false), 0, false).unwrap();
    let obs = env.observation();
    c.bench_function("policy_forward_desk", |bench| bench.iter(|| policy.forward(black_box(&obs), target).unwrap()));
}

fn env_step(c: &mut Criterion) {
    let data = Dataset::desk(DataConfig::default()).unwrap();
    let scene = Arc::clone(&data.room(RoomType::Kitchen).train[0]);
    let target = present_targets(&scene, &data.targets(RoomType::Kitchen, ObjectSplit::Known))[0];
    let n = data.vocab.len();
    let actions = [Action::from_index(0), Action::from_index(1), Action::from_index(2)];
    c.bench_function("env_episode_100_steps", |bench| {
        bench.iter(|| {
            let mut env = NavEnv::reset(Arc::clone(&scene), n, target, EnvConfig::new(false), 7, false).unwrap();
            let mut k = 0;
            while !env.is_done() && k < 100 {
                env.step(actions[k % 3]).unwrap();
                k += 1;
            }
            black_box(env.observation())
        })
    });
}

criterion_group!(benches, matmul, gcn, env_step);
criterion_main!(benches);
