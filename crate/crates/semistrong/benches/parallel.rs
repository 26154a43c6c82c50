//! Parallel versus sequential execution of the embarrassingly parallel kernels.
//! Build with `--no-default-features` to see the sequential fallback for both arms.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use semistrong::dynamics::{evolve_ensemble, EvolveOptions};
use semistrong::mean_field::{solve_batch, solve_mean_field};
use semistrong::nlep::{count_roots_right_of_contour, ContourSpec, NlepContext};
use semistrong::sim::{dns_grid, init_from_profile, run, Perturbation, SimConfig};
use semistrong::{par, Exec, MeanFieldKernel, ModelParams, PulseConstants};

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn winding(c: &mut Criterion) {
    let params = ModelParams::default();
    let ctx = NlepContext::standard(&params).unwrap();
    let config = solve_mean_field(&[-15.0, 15.0], &params, MeanFieldKernel::Exact).unwrap().config;
    let spec = ContourSpec::default();
    let mut g = c.benchmark_group("contour_winding");
    g.sample_size(10).measurement_time(Duration::from_secs(10));
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| count_roots_right_of_contour(&ctx, black_box(&config), &spec, exec).unwrap())
        });
    }
    g.finish();
}

fn mean_field_batch(c: &mut Criterion) {
    let params = ModelParams::default();
    let consts = PulseConstants::new(&params).unwrap();
    let sets: Vec<Vec<f64>> = (0..256)
        .map(|k| {
            let gap = 15.0 + 0.1 * k as f64;
            (0..4).map(|j| j as f64 * gap).collect()
        })
        .collect();
    let mut g = c.benchmark_group("mean_field_batch");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, sets.len()), &sets, |b, sets| {
            b.iter(|| solve_batch(exec, sets, &params, &consts, MeanFieldKernel::Exact))
        });
    }
    g.finish();
}

fn ode_ensemble(c: &mut Criterion) {
    let params = ModelParams::default();
    let starts: Vec<Vec<f64>> = (0..8).map(|k| vec![-12.0 - k as f64, 0.0, 12.0 + k as f64]).collect();
    let opts = EvolveOptions {
        t_end: 20.0,
        ..EvolveOptions::default()
    };
    let mut g = c.benchmark_group("ode_ensemble");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| evolve_ensemble(exec, black_box(&starts), &params, &opts)));
    }
    g.finish();
}

fn dns_ensemble(c: &mut Criterion) {
    let params = ModelParams::default();
    let config = solve_mean_field(&[0.0], &params, MeanFieldKernel::Exact).unwrap().config;
    let grid = dns_grid(&config.p, &params, 0.05, 4.0).unwrap();
    let seeds: Vec<u64> = (0..4).collect();
    let sim = SimConfig {
        dt: 0.01,
        t_end: 2.0,
        output_stride: 100,
        remainder: false,
        ..SimConfig::default()
    };
    let mut g = c.benchmark_group("dns_ensemble");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                par::map(exec, &seeds, |&seed| {
                    let pert = Perturbation::new(1.0, 0.7, seed);
                    let state = init_from_profile(&config, grid, &params, Some(&pert), 4.0).unwrap();
                    run(state, &sim, &params, |_, _| Ok(())).unwrap().final_state.t
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, winding, mean_field_batch, ode_ensemble, dns_ensemble);
criterion_main!(benches);
