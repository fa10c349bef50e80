//! Compares the data-parallel Monte Carlo driver against the sequential
//! one on the three workload shapes the crate cares about: a counting
//! statistic over a pair of index maps, a hit/stop race on a process
//! source, and a word race on a shift source.  Built without the
//! `parallel` feature, both entry points run the same sequential code, so
//! the comparison doubles as a fallback sanity check.
//!
//! Run with `cargo bench` (or `cargo bench --no-default-features` for the
//! sequential build).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nonconv::statistics::{monte_carlo, monte_carlo_sequential, ExperimentSpec};

fn spec(json: &str) -> ExperimentSpec {
    let spec: ExperimentSpec = serde_json::from_str(json).expect("bench spec parses");
    spec.validate().expect("bench spec is valid");
    spec
}

fn counting_pair_spec() -> ExperimentSpec {
    spec(
        r#"{
          "mode": "poisson",
          "source": {"process": {"variant": "iid_categorical", "probs": [0.93, 0.07]}},
          "qf": {"ell": 2, "K": 1, "polys": [[[1, 0, 1]], [[1, 0, 2]]]},
          "N": 400,
          "gamma": [1],
          "trials": 2000,
          "seed": 2024
        }"#,
    )
}

fn hit_stop_race_spec() -> ExperimentSpec {
    spec(
        r#"{
          "mode": "geometric",
          "source": {"process": {"variant": "iid_categorical", "probs": [0.5, 0.25, 0.25]}},
          "qf": {"ell": 1, "K": 1, "polys": [[[1, 0, 1]]]},
          "N": 400,
          "gamma": [1],
          "delta": [2],
          "trials": 2000,
          "seed": 2024
        }"#,
    )
}

fn word_race_spec() -> ExperimentSpec {
    spec(
        r#"{
          "mode": "geometric",
          "source": {"shift": {"measure": "bernoulli", "probs": [0.5, 0.5]}},
          "qf": {"ell": 1, "K": 1, "polys": [[[1, 0, 1]]]},
          "N": 256,
          "v": "1010",
          "w": "1100",
          "trials": 2000,
          "seed": 2024
        }"#,
    )
}

fn bench_drivers(c: &mut Criterion) {
    let workloads = [
        ("counting_pair", counting_pair_spec()),
        ("hit_stop_race", hit_stop_race_spec()),
        ("word_race", word_race_spec()),
    ];
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for (name, spec) in &workloads {
        // Cross-check once up front: the two drivers must agree exactly.
        let par = monte_carlo(spec).expect("parallel run");
        let seq = monte_carlo_sequential(spec).expect("sequential run");
        assert_eq!(par, seq, "drivers disagree on {name}");

        group.bench_with_input(BenchmarkId::new("parallel", name), spec, |b, s| {
            b.iter(|| monte_carlo(s).expect("parallel run"))
        });
        group.bench_with_input(BenchmarkId::new("sequential", name), spec, |b, s| {
            b.iter(|| monte_carlo_sequential(s).expect("sequential run"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_drivers);
criterion_main!(benches);
