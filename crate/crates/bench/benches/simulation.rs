use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use dcf_core::mac::draw_backoff_slots;
use dcf_core::sched::{Scheduler, SimRng};
use dcf_core::{build_dumbbell, run_scenario, ScenarioConfig, SimTime};

fn dumbbell_run(c: &mut Criterion) {
    let mut g = c.benchmark_group("dumbbell");
    g.sample_size(10);
    for n in [6u32, 10] {
        let cfg = ScenarioConfig { n_intermediate: n, duration: 10.0, ..ScenarioConfig::default() };
        g.bench_function(format!("n{n}_10s"), |b| b.iter(|| run_scenario(black_box(&cfg), false).unwrap()));
    }
    g.finish();
}

fn scheduler(c: &mut Criterion) {
    c.bench_function("scheduler_10k_push_pop", |b| {
        b.iter_batched(
            || {
                let mut rng = SimRng::new(1);
                (0..10_000).map(|_| u64::from(rng.uniform_int(1_000_000))).collect::<Vec<_>>()
            },
            |times| {
                let mut s = Scheduler::new();
                for (i, t) in times.into_iter().enumerate() {
                    s.schedule(SimTime::from_nanos(t), i).unwrap();
                }
                s.run_until(SimTime::from_nanos(1_000_000), |_, _, i| {
                    black_box(i);
                })
            },
            BatchSize::SmallInput,
        )
    });
}

fn backoff(c: &mut Criterion) {
    let mut rng = SimRng::new(7);
    c.bench_function("backoff_draw_cw1023", |b| b.iter(|| draw_backoff_slots(black_box(1023), &mut rng)));
}

fn topology(c: &mut Criterion) {
    let cfg = ScenarioConfig { n_intermediate: 10, ..ScenarioConfig::default() };
    c.bench_function("build_dumbbell_n10", |b| b.iter(|| build_dumbbell(black_box(&cfg)).unwrap()));
}

criterion_group!(benches, dumbbell_run, scheduler, backoff, topology);
criterion_main!(benches);
