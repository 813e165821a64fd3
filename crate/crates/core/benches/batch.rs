//! Batch workloads through `par` against plain loops over the same items.
//!
//! With the default `parallel` feature the `par` rows run on rayon; build with
//! `--no-default-features` and both rows measure the sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use leach_rlc::clustering::{solve_bruteforce, MilpWeights};
use leach_rlc::config::Config;
use leach_rlc::experiment::{sweep, GridSpec};
use leach_rlc::network::{generate_topology, potential_heads, NetworkConfig, NetworkState};
use leach_rlc::par;
use leach_rlc::radio::RadioParams;
use leach_rlc::rlc::{FixedGate, Rlc};
use leach_rlc::sim::{simulate, StopCondition};

fn backend() -> &'static str {
    if par::is_parallel() {
        "par-rayon"
    } else {
        "par-sequential"
    }
}

fn small_config() -> Config {
    Config { network: NetworkConfig { n_nodes: 40, e0: 0.05, k_fraction: 0.1, ..NetworkConfig::default() }, ..Config::default() }
}

fn sweep_fnd(c: &mut Criterion) {
    let cfg = small_config();
    let grid = GridSpec::parse("0:100:3").unwrap();
    let mut g = c.benchmark_group("sweep_fnd_27_points");
    g.sample_size(10);
    g.bench_function(backend(), |b| b.iter(|| sweep(black_box(&cfg), &grid, 5).unwrap()));
    g.bench_function("loop", |b| {
        b.iter(|| {
            grid.points()
                .into_iter()
                .map(|w| {
                    let mut proto = Rlc::new(w, cfg.network.k_fraction, FixedGate::Every(5));
                    let mut s = generate_topology(&cfg.network);
                    simulate(&mut s, &mut proto, &cfg.radio, cfg.simulation.control, StopCondition::FirstDeath).unwrap().fnd
                })
                .collect::<Vec<_>>()
        })
    });
    g.finish();
}

fn instances(count: u64) -> Vec<NetworkState> {
    (0..count)
        .map(|seed| {
            let cfg = NetworkConfig { n_nodes: 24, seed, ..NetworkConfig::default() };
            let mut s = generate_topology(&cfg);
            for (i, n) in s.nodes.iter_mut().enumerate() {
                n.energy = 0.1 + 0.4 * ((i as u64 * 7 + seed) % 11) as f64 / 10.0;
            }
            s
        })
        .collect()
}

fn bruteforce_batch(c: &mut Criterion) {
    let p = RadioParams::default();
    let states = instances(16);
    let mut g = c.benchmark_group("bruteforce_k3_16_instances");
    g.sample_size(10);
    for (name, parallel) in [(backend(), true), ("loop", false)] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &states, |b, states| {
            b.iter(|| {
                let solve = |s: &NetworkState| {
                    let k = potential_heads(s).len().min(3);
                    solve_bruteforce(s, &p, &MilpWeights::REFERENCE, k).unwrap().objective
                };
                if parallel {
                    par::map(states.iter().collect(), solve)
                } else {
                    states.iter().map(solve).collect()
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, sweep_fnd, bruteforce_batch);
criterion_main!(benches);
