use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use eacc_bench::busy_group;
use eacc_core::channel::{feasible_activations, sample_channels, ChannelState, NetworkMode};
use eacc_core::control::schedule;
use eacc_core::engine::{initial_state, run_with, step};
use eacc_core::model::{QueueMatrix, SourceQueues};
use eacc_core::oracle::{in_stability_region, solve_num, AverageModel};
use eacc_core::UtilitySpec;

fn bench_step(c: &mut Criterion) {
    let config = busy_group(0);
    // A mid-run state with populated queues, reached deterministically.
    let mut state = initial_state(&config);
    for _ in 0..200 {
        state = step(&state, &config).unwrap().0;
    }
    c.bench_function("step_4_devices", |b| {
        b.iter(|| step(black_box(&state), black_box(&config)).unwrap())
    });
}

fn bench_run_1000_slots(c: &mut Criterion) {
    let config = busy_group(1000);
    c.bench_function("run_1000_slots", |b| {
        b.iter(|| run_with(black_box(&config), |_, _| {}).unwrap())
    });
}

fn bench_activation_enumeration(c: &mut Criterion) {
    let channels = ChannelState::always_on(vec![2.0; 4], vec![8.0; 16]);
    for mode in [NetworkMode::CellularPlusD2d, NetworkMode::WifiPlusD2d] {
        let name = match mode {
            NetworkMode::CellularPlusD2d => "activations_cellular_4",
            NetworkMode::WifiPlusD2d => "activations_wifi_4",
        };
        c.bench_function(name, |b| {
            b.iter(|| feasible_activations(mode, black_box(&channels), 4).unwrap())
        });
    }
}

fn bench_schedule(c: &mut Criterion) {
    let config = busy_group(0);
    let channels = sample_channels(3, 40, &config.channel).unwrap();
    let activations = feasible_activations(config.mode, &channels, 4).unwrap();
    let s = SourceQueues::from_vec(vec![180.0, 40.0, 0.0, 0.0]);
    let mut u = QueueMatrix::zeros(4);
    let mut z = QueueMatrix::zeros(4);
    for dev in 0..4 {
        for k in 0..4 {
            u[(dev, k)] = (dev * 4 + k) as f64;
            if dev != k {
                z[(dev, k)] = (dev + k) as f64;
            }
        }
    }
    c.bench_function("schedule_4_devices", |b| {
        b.iter(|| {
            schedule(
                black_box(&s),
                black_box(&u),
                black_box(&z),
                black_box(&activations),
            )
        })
    });
}

fn bench_oracle(c: &mut Criterion) {
    let model = AverageModel::from_config(&busy_group(0));
    let y = vec![0.6, 0.6, 0.0, 0.0];
    c.bench_function("stability_membership_4", |b| {
        b.iter(|| in_stability_region(black_box(&y), black_box(&model), 0.05).unwrap())
    });
    c.bench_function("solve_num_2_flows_coarse", |b| {
        b.iter(|| solve_num(black_box(&model), &UtilitySpec::log_default(), 0.1).unwrap())
    });
}

criterion_group!(
    benches,
    bench_step,
    bench_run_1000_slots,
    bench_activation_enumeration,
    bench_schedule,
    bench_oracle
);
criterion_main!(benches);
