//! Acceptance suite: one PASS/FAIL line per criterion, each at its stated
//! tolerance and runtime budget. A FAIL is reported, not panicked on, so the
//! whole suite always runs; the process exits non-zero only if a check errors.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semistrong::dynamics::{evolve, velocities_gradient, velocities_matrix, EvolveOptions, GradientGrid};
use semistrong::linalg::determinant;
use semistrong::linearization::{oracle_spectrum, Linearization, OracleOptions};
use semistrong::mean_field::{
    correlation_det_product, correlation_matrix, solve_mean_field, MeanFieldSystem, PulseConfiguration,
};
use semistrong::nlep::{check_admissibility, l0_eigenvalues, r_lambda_extrapolated, AdmissibilityOptions, ContourSpec, NlepContext, Verdict};
use semistrong::profiles::{k_lambda, phi0, phi0_deriv, phi0_deriv_norm_sq, phi0_mass};
use semistrong::sim::{dns_grid, init_from_profile, run, Perturbation, SeriesRow, SimConfig};
use semistrong::{Exec, MeanFieldKernel, ModelParams, PulseConstants, SpatialGrid};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn with_exponents(a12: f64, a22: f64) -> ModelParams {
    ModelParams {
        a12,
        a22,
        ..ModelParams::default()
    }
}

fn pulse_collocation() -> Outcome {
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for a22 in [2.0, 3.0] {
        let p = with_exponents(2.0, a22);
        for k in 0..=4000 {
            let x = -20.0 + 0.01 * k as f64;
            let d2 = (8.0 * (phi0_deriv(x + h, &p) - phi0_deriv(x - h, &p))
                - (phi0_deriv(x + 2.0 * h, &p) - phi0_deriv(x - 2.0 * h, &p)))
                / (12.0 * h);
            let f = phi0(x, &p);
            worst = worst.max((d2 - f + f.powf(a22)).abs());
        }
    }
    Ok((worst < 1e-10, format!("max residual {worst:.2e} (tol 1e-10)")))
}

fn mass_identities() -> Outcome {
    let p = ModelParams::default();
    let oracle = |f: &dyn Fn(f64) -> f64| 2.0 * quadrature::double_exponential::integrate(f, 0.0, 60.0, 1e-14).integral;
    let checks = [
        ("M2", phi0_mass(2.0, &p)?, 6.0, oracle(&|x| phi0(x, &p).powi(2))),
        ("M3", phi0_mass(3.0, &p)?, 7.2, oracle(&|x| phi0(x, &p).powi(3))),
        ("|phi0'|^2", phi0_deriv_norm_sq(&p)?, 1.2, oracle(&|x| phi0_deriv(x, &p).powi(2))),
    ];
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, got, exact, quad) in checks {
        let err = (got - quad).abs().max((got - exact).abs());
        ok &= err <= 1e-8;
        msg.push(format!("{name}={got:.10} err {err:.1e}"));
    }
    Ok((ok, format!("{} (tol 1e-8)", msg.join(", "))))
}

fn resolvent_at_zero() -> Outcome {
    let mut worst: f64 = 0.0;
    for (a12, a22) in [(2.0, 2.0), (3.0, 2.0), (2.0, 3.0)] {
        let p = with_exponents(a12, a22);
        let expected = phi0_mass(a12, &p)? / (a22 - 1.0);
        let r = r_lambda_extrapolated(Complex64::new(0.0, 0.0), 30.0, 0.02, &p)?;
        worst = worst.max((r - expected).norm());
    }
    Ok((worst <= 1e-6, format!("max |R(0) - M/(a22-1)| = {worst:.2e} (tol 1e-6)")))
}

fn determinant_identity() -> Outcome {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=8usize);
        let mut x = rng.random_range(-50.0..0.0);
        let pos: Vec<f64> = (0..n)
            .map(|_| {
                x += rng.random_range(0.5..30.0);
                x
            })
            .collect();
        let lambda = Complex64::new(rng.random_range(-0.2..2.0), rng.random_range(-2.0..2.0));
        let m = correlation_matrix(&pos, lambda, &p, true)?;
        let closed = correlation_det_product(&pos, k_lambda(lambda, &p)?);
        worst = worst.max((determinant(n, &m.entries) - closed).norm() / closed.norm());
    }
    Ok((worst <= 1e-12, format!("max rel error {worst:.2e} over 100 configurations (tol 1e-12)")))
}

fn mean_field_solver() -> Outcome {
    let p = ModelParams::default();
    let consts = PulseConstants::new(&p)?;
    let (mut res, mut jac_err) = (0.0f64, 0.0f64);
    for kernel in [MeanFieldKernel::Exact, MeanFieldKernel::Leading] {
        for pos in [vec![0.0], vec![-15.0, 15.0], vec![-60.0, -5.0, 55.0]] {
            let sol = solve_mean_field(&pos, &p, kernel)?;
            res = res.max(sol.residual_norm);
            let sys = MeanFieldSystem::new(&pos, &p, &consts, kernel)?;
            let q = &sol.config.q;
            let n = q.len();
            let jac = sys.jacobian(q);
            for j in 0..n {
                let h = 1e-6 * q[j];
                let (mut plus, mut minus) = (q.clone(), q.clone());
                plus[j] += h;
                minus[j] -= h;
                let (fp, fm) = (sys.residual(&plus), sys.residual(&minus));
                for i in 0..n {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    jac_err = jac_err.max((fd - jac[i * n + j]).abs() / jac[i * n + j].abs().max(1.0));
                }
            }
        }
    }
    let single = solve_mean_field(&[0.0], &p, MeanFieldKernel::Exact)?.config.q[0];
    let mut converges = true;
    for dp in [20.0, 40.0, 80.0, 160.0] {
        let q = solve_mean_field(&[0.0, dp], &p, MeanFieldKernel::Exact)?.config.q;
        converges &= (q[0] - single).abs() < 10.0 * (-p.k0() * dp).exp();
    }
    Ok((
        res <= 1e-12 && jac_err <= 1e-6 && converges,
        format!("residual {res:.1e} (tol 1e-12), Jacobian vs FD {jac_err:.1e} (tol 1e-6), N=2 -> N=1 bound held: {converges}"),
    ))
}

fn l0_spectrum() -> Outcome {
    let p = ModelParams::default();
    let coarse = l0_eigenvalues(SpatialGrid::with_spacing(-25.0, 25.0, 0.02)?, &p, 3)?;
    let fine = l0_eigenvalues(SpatialGrid::with_spacing(-25.0, 25.0, 0.01)?, &p, 3)?;
    let ex: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    let worst = ex.iter().zip([1.25, 0.0, -0.75]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((worst < 1e-3, format!("extrapolated {ex:.5?}, max error {worst:.1e} (tol 1e-3)")))
}

fn spectrum_cross_validation() -> Outcome {
    let p = ModelParams::default();
    let ctx = NlepContext::standard(&p)?;
    let spec = ContourSpec::default();
    let scale = 0.1 * p.eps.powf(p.alpha);
    let mut ok = true;
    let mut msg = Vec::new();
    for pos in [vec![0.0], vec![-10.0, 10.0]] {
        let n = pos.len();
        let config = solve_mean_field(&pos, &p, MeanFieldKernel::Exact)?.config;
        let report = check_admissibility(&ctx, &config, &spec, &AdmissibilityOptions::default(), Exec::Parallel)?;
        let grid = SpatialGrid::with_spacing(pos[0] - 40.0, pos[n - 1] + 40.0, 0.1)?;
        let oracle = oracle_spectrum(&config, grid, &p, Linearization::Reduced, &OracleOptions::default())?;
        // roots right of the contour or within the absolute tolerance left of it
        let relevant = report
            .roots
            .iter()
            .filter(|r| spec.is_right_of(r.lambda + scale, &p))
            .map(|r| r.lambda);
        let mut worst_ratio: f64 = 0.0;
        let mut detail = Vec::new();
        for root in relevant {
            let tol = (0.1 * root.norm()).max(scale);
            let dist = oracle.semi_strong.iter().map(|z| (z - root).norm()).fold(f64::INFINITY, f64::min);
            worst_ratio = worst_ratio.max(dist / tol);
            detail.push(format!("{:.4}{:+.4}i d={dist:.3}/tol {tol:.3}", root.re, root.im));
        }
        let grid_right = oracle.semi_strong.iter().filter(|z| spec.is_right_of(**z, &p)).count() as i64;
        let counted = report.zero_count.unwrap_or(-1);
        let pass = worst_ratio <= 1.0 && counted == grid_right;
        ok &= pass;
        msg.push(format!(
            "N={n}: {} [{}], zeros right of C {counted} vs grid {grid_right}",
            if pass { "ok" } else { "mismatch" },
            detail.join("; ")
        ));
    }
    Ok((ok, msg.join(" | ")))
}

fn backend_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    let (mut cases, mut skipped) = (0, 0);
    for eps in [0.1, 0.075, 0.05] {
        let p = ModelParams { eps, ..ModelParams::default() };
        let consts = PulseConstants::new(&p)?;
        for dp in [20.0, 30.0, 40.0, 60.0] {
            // no positive pulse amplitudes, so not a configuration on the manifold
            let Ok(sol) = solve_mean_field(&[-dp / 2.0, dp / 2.0], &p, MeanFieldKernel::Exact) else {
                skipped += 1;
                continue;
            };
            let config = sol.config;
            let vm = velocities_matrix(&config, &p, &consts);
            let grid = GradientGrid::default().grid_for(&config.p, &p)?;
            let vg = velocities_gradient(&config, grid, &p, &consts)?;
            let scale = vm.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let gap = vm.iter().zip(&vg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
            worst = worst.max(gap);
            cases += 1;
        }
    }
    Ok((
        worst <= 0.05 && cases > 0,
        format!(
            "max relative gap {:.2}% over {cases} configurations, {skipped} without mean-field solution skipped (tol 5%)",
            100.0 * worst
        ),
    ))
}

fn separation(row: &[f64]) -> f64 {
    row[row.len() - 1] - row[0]
}

fn reduced_vs_full() -> Outcome {
    let p = ModelParams::default();
    let pos = [-15.0, 15.0];
    let t_end = 40.0;
    let config = solve_mean_field(&pos, &p, MeanFieldKernel::Exact)?.config;
    let grid = dns_grid(&config.p, &p, 0.05, 6.0)?;
    let state = init_from_profile(&config, grid, &p, None, 4.0)?;
    let sim = SimConfig {
        dt: 0.01,
        t_end,
        output_stride: 100,
        remainder: false,
        ..SimConfig::default()
    };
    let dns = run(state, &sim, &p, |_, _| Ok(()))?;
    let opts = EvolveOptions {
        t_end,
        output_interval: Some(0.25),
        ..EvolveOptions::default()
    };
    let ode = evolve(&pos, &p, &opts)?;
    let ode_sep = |t: f64| {
        let k = ode.times.partition_point(|s| *s <= t).clamp(1, ode.times.len() - 1);
        let (t0, t1) = (ode.times[k - 1], ode.times[k]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        (1.0 - w) * separation(&ode.states[k - 1].p) + w * separation(&ode.states[k].p)
    };
    let s0 = separation(&dns.series[0].positions);
    let (mut diff, mut growth) = (0.0f64, 0.0f64);
    for row in dns.series.iter().filter(|r| r.positions.len() == 2) {
        let d = separation(&row.positions) - s0;
        diff = diff.max((d - (ode_sep(row.t) - ode_sep(0.0))).abs());
        growth = growth.max(d.abs());
    }
    let err = diff / growth;
    Ok((
        err <= 0.1 && growth >= 2.0,
        format!("separation change DNS {growth:.3} (need >= 2), max deviation {:.1}% (tol 10%)", 100.0 * err),
    ))
}

/// Initial remainder and plateau (mean of the last quarter) of a perturbed one-pulse run.
fn remainder_decay(eps: f64, amplitude: f64) -> Result<(f64, f64), Box<dyn std::error::Error>> {
    let p = ModelParams { eps, ..ModelParams::default() };
    let config = solve_mean_field(&[0.0], &p, MeanFieldKernel::Exact)?.config;
    let grid = dns_grid(&config.p, &p, 0.02, 9.5)?;
    let pert = Perturbation::new(amplitude, 0.7, 7);
    let state = init_from_profile(&config, grid, &p, Some(&pert), 4.0)?;
    let sim = SimConfig {
        dt: 0.005,
        t_end: 30.0,
        output_stride: 400,
        ..SimConfig::default()
    };
    let series: Vec<SeriesRow> = run(state, &sim, &p, |_, _| Ok(()))?.series;
    let rem: Vec<f64> = series.iter().filter_map(|r| r.remainder).collect();
    if rem.len() < 8 {
        return Err("too few remainder samples".into());
    }
    let tail = &rem[rem.len() * 3 / 4..];
    Ok((rem[0], tail.iter().sum::<f64>() / tail.len() as f64))
}

fn adiabatic_decay() -> Outcome {
    let alpha = ModelParams::default().alpha;
    let (i1, p1) = remainder_decay(0.1, 10.0)?;
    let (i2, p2) = remainder_decay(0.2, 30.0)?;
    let (f1, f2) = (i1 / p1, i2 / p2);
    let ratio = p2 / p1;
    let predicted = 2f64.powf(1.0 - alpha);
    let within = ratio / predicted <= 2.0 && predicted / ratio <= 2.0;
    Ok((
        f1 >= 5.0 && f2 >= 5.0 && within,
        format!(
            "decay factors {f1:.1} (eps 0.1), {f2:.1} (eps 0.2) (need >= 5); plateau ratio {ratio:.2} vs eps^(1-alpha) {predicted:.2} (within x2)"
        ),
    ))
}

fn repulsion_signs() -> Outcome {
    let p = ModelParams::default();
    let consts = PulseConstants::new(&p)?;
    let ctx = NlepContext::standard(&p)?;
    let spec = ContourSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut accepted, mut tried, mut bad_equal, mut bad_mean_field) = (0, 0, 0, 0);
    while accepted < 50 && tried < 1000 {
        tried += 1;
        let n = rng.random_range(2..=5usize);
        let mut x = rng.random_range(-20.0..20.0);
        let pos: Vec<f64> = (0..n)
            .map(|_| {
                let out = x;
                x += rng.random_range(10.0..60.0);
                out
            })
            .collect();
        let Ok(sol) = solve_mean_field(&pos, &p, MeanFieldKernel::Exact) else {
            continue;
        };
        let report = check_admissibility(&ctx, &sol.config, &spec, &AdmissibilityOptions::default(), Exec::Parallel)?;
        if report.verdict != Verdict::Admissible {
            continue;
        }
        accepted += 1;
        let mean = sol.config.q.iter().sum::<f64>() / n as f64;
        let equal = PulseConfiguration::new(pos.clone(), vec![mean; n])?;
        let v = velocities_matrix(&equal, &p, &consts);
        if !(v[0] < 0.0 && v[n - 1] > 0.0) {
            bad_equal += 1;
        }
        let v = velocities_matrix(&sol.config, &p, &consts);
        if !(v[0] < 0.0 && v[n - 1] > 0.0) {
            bad_mean_field += 1;
        }
    }
    Ok((
        accepted == 50 && bad_equal == 0,
        format!(
            "{accepted} admissible of {tried} sampled; sign violations with equal amplitudes {bad_equal}, with mean-field amplitudes {bad_mean_field}"
        ),
    ))
}

fn main() {
    // `cargo test` passes harness flags; a name filter selects criteria by number
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Check = (usize, &'static str, u64, fn() -> Outcome);
    let checks: [Check; 11] = [
        (1, "closed-form pulse", 1, pulse_collocation),
        (2, "mass identities", 1, mass_identities),
        (3, "resolvent at zero", 5, resolvent_at_zero),
        (4, "determinant identity", 1, determinant_identity),
        (5, "mean-field solver", 1, mean_field_solver),
        (6, "L0 spectrum", 10, l0_spectrum),
        (7, "spectrum cross-validation", 120, spectrum_cross_validation),
        (8, "velocity backend agreement", 10, backend_agreement),
        (9, "reduced vs full dynamics", 600, reduced_vs_full),
        (10, "adiabatic decay", 900, adiabatic_decay),
        (11, "repulsion sign structure", 5, repulsion_signs),
    ];
    let mut errored = false;
    let (mut passed, mut total) = (0, 0);
    for (id, name, budget, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        total += 1;
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        match outcome {
            Ok((ok, detail)) => {
                let pass = ok && in_time;
                passed += pass as usize;
                println!(
                    "criterion {id:>2} {}: {name}: {detail}; runtime {:.2}s (budget {budget}s)",
                    if pass { "PASS" } else { "FAIL" },
                    elapsed.as_secs_f64()
                );
            }
            Err(e) => {
                errored = true;
                println!("criterion {id:>2} FAIL: {name}: error: {e}");
            }
        }
    }
    println!("acceptance: {passed}/{total} criteria pass");
    if errored {
        std::process::exit(1);
    }
}
