use cotask::episode::EpisodeConfig;
use cotask::trainer::{Arch, Network, TrainConfig, Trainer, PREV_WIDTH};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("lstm step, 32 rows");
    for (name, arch) in [("symbolic", Arch::symbolic(64)), ("pixel", Arch::pixel())] {
        let net = Network::new(arch);
        let p = net.init(&mut ChaCha8Rng::seed_from_u64(1));
        let rows = 32;
        let x = vec![0.1; rows * net.input_width()];
        let prev = vec![0.0; rows * PREV_WIDTH];
        let h = vec![0.0; rows * net.hidden()];
        g.bench_function(name, |b| {
            b.iter(|| net.step(&p.data, &x, &prev, &h, &h, rows).unwrap())
        });
    }
    g.finish();
}

fn update(c: &mut Criterion) {
    let env = EpisodeConfig {
        p_multi: 0.5,
        ..EpisodeConfig::smoke()
    };
    let cfg = TrainConfig {
        episodes_per_batch: 8,
        ..TrainConfig::desk()
    };
    let trainer = Trainer::new(env, cfg).unwrap();
    let batch = trainer.collect().unwrap();
    let mut g = c.benchmark_group("smoke");
    g.sample_size(10);
    g.bench_function("collect 8 episodes", |b| {
        b.iter(|| trainer.collect().unwrap())
    });
    g.bench_function("update on 8 episodes", |b| {
        b.iter_batched(
            || trainer.clone(),
            |mut t| t.update(&batch.rollouts).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, forward, update);
criterion_main!(benches);
