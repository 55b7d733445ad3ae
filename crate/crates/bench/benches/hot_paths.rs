use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pmic_bench::{bandit_trajectories, pair_batch, rng, uniform, warmed_learner};
use pmic_core::du_mie::{ClubEstimator, MineEstimator};
use pmic_core::du_pcb::{DuPcb, PcbConfig, Placement};
use pmic_core::env::EnvKind;
use pmic_core::maddpg::Mode;
use pmic_core::nn::{Activation, MlpSpec};

fn mlp(c: &mut Criterion) {
    let spec = MlpSpec::new(vec![25, 64, 64, 1], Activation::Relu, Activation::Identity).unwrap();
    let params = spec.init(&mut rng(0));
    let x = uniform(256, 25, 1);
    let up = uniform(256, 1, 2);
    c.bench_function("mlp_forward_256", |b| {
        b.iter(|| spec.forward_batch(&params, x.view()).unwrap())
    });
    c.bench_function("mlp_forward_backward_256", |b| {
        b.iter(|| {
            let t = spec.forward_batch(&params, x.view()).unwrap();
            spec.backward_batch(&params, &t, up.view()).unwrap()
        })
    });
}

fn estimators(c: &mut Criterion) {
    let joint = pair_batch(256, 21, 4, 3);
    let marginal = pair_batch(256, 21, 4, 5);
    let mut mine = MineEstimator::new(21, 4, 64, 64, 1e-4, &mut rng(6)).unwrap();
    let mut club = ClubEstimator::new(21, 4, 32, 1e-4, &mut rng(7)).unwrap();
    c.bench_function("mine_train_256", |b| b.iter(|| mine.train_on(&joint, &marginal).unwrap()));
    c.bench_function("club_train_256", |b| b.iter(|| club.train_on(&joint).unwrap()));
}

fn buffer(c: &mut Criterion) {
    let trajs = bandit_trajectories(5000, 8);
    c.bench_function("pcb_insert_5000", |b| {
        b.iter_batched(
            || DuPcb::new(PcbConfig::default()).unwrap(),
            |mut pcb| {
                for t in &trajs {
                    pcb.insert(t);
                }
                pcb
            },
            BatchSize::SmallInput,
        )
    });
    let mut pcb = DuPcb::new(PcbConfig::default()).unwrap();
    for t in &trajs {
        pcb.insert(t);
    }
    let mut r = rng(9);
    c.bench_function("pcb_sample_marginal_256", |b| {
        b.iter(|| pcb.sample_marginal(Placement::Positive, 256, &mut r).unwrap())
    });
}

fn learner(c: &mut Criterion) {
    let mut group = c.benchmark_group("learner_update");
    group.sample_size(20);
    for mode in [Mode::Maddpg, Mode::Pmic] {
        let (mut l, _) = warmed_learner(EnvKind::ParticleRescue, mode, 3000);
        for _ in 0..5 {
            l.train_estimators().unwrap();
        }
        group.bench_function(mode.as_str(), |b| b.iter(|| l.update().unwrap()));
    }
    group.finish();
}

criterion_group!(benches, mlp, estimators, buffer, learner);
criterion_main!(benches);
