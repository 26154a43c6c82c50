use num_complex::Complex64;
use proptest::prelude::*;
use semistrong::dynamics::velocities_matrix;
use semistrong::linalg::{determinant, Tridiagonal};
use semistrong::mean_field::{correlation_det_product, correlation_matrix, solve_mean_field};
use semistrong::profiles::{k_lambda, x_norm, xi_bump, PartitionOfUnity};
use semistrong::sim::SimState;
use semistrong::{Field, MeanFieldKernel, ModelParams, PulseConstants, SpatialGrid};

/// Strictly increasing positions with the given gap range.
fn positions(n: std::ops::RangeInclusive<usize>, gap: std::ops::Range<f64>) -> impl Strategy<Value = Vec<f64>> {
    (-40.0..40.0f64, prop::collection::vec(gap, n)).prop_map(|(start, gaps)| {
        let mut x = start;
        gaps.iter()
            .map(|g| {
                let out = x;
                x += g;
                out
            })
            .collect()
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tridiagonal_solve_inverts_apply(
        diag in prop::collection::vec(3.0..6.0f64, 2..64),
        seed in prop::collection::vec(-1.0..1.0f64, 64 * 3),
    ) {
        let n = diag.len();
        let t = Tridiagonal {
            lower: seed[..n - 1].to_vec(),
            diag,
            upper: seed[64..64 + n - 1].to_vec(),
        };
        let x: Vec<f64> = seed[128..128 + n].to_vec();
        let mut b = t.apply(&x);
        t.factor().unwrap().solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x) {
            prop_assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_of_unity_sums_to_one(p in positions(1..=6, 5.0..30.0)) {
        let grid = SpatialGrid::with_spacing(p[0] - 20.0, p[p.len() - 1] + 20.0, 0.05).unwrap();
        let pu = PartitionOfUnity::new(&p, grid).unwrap();
        for i in 0..grid.n {
            let s: f64 = pu.weights.iter().map(|w| w.values[i]).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(pu.weights.iter().all(|w| (-1e-12..=1.0 + 1e-12).contains(&w.values[i])));
        }
        // each weight is one at its own pulse
        for (j, &x) in p.iter().enumerate() {
            prop_assert!((pu.weights[j].interpolate(x) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn xi_bump_has_unit_mass(center in -5.0..5.0f64, ell in 2.0..8.0f64) {
        let grid = SpatialGrid::with_spacing(-10.0, 10.0, 0.01).unwrap();
        let xi = xi_bump(center, ell, grid).unwrap();
        prop_assert!((xi.integral() - 1.0).abs() < 1e-9);
        prop_assert!(xi.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn x_norm_is_a_norm(c in -3.0..3.0f64, a in 0.1..2.0f64, b in 0.1..2.0f64, shift in -3.0..3.0f64) {
        let p = ModelParams::default();
        let grid = SpatialGrid::with_spacing(-30.0, 30.0, 0.05).unwrap();
        let f1 = Field::from_fn(grid, |x| a * (-(x - shift).powi(2)).exp());
        let f2 = Field::from_fn(grid, |x| b * (x / 4.0).sin() * (-(x * x) / 50.0).exp());
        let g1 = Field::from_fn(grid, |x| (x / 7.0).cos() * (-(x * x) / 80.0).exp());
        let g2 = Field::from_fn(grid, |x| (-(x + shift).abs()).exp());
        let pos = [-5.0, 5.0];
        let n = |u: &Field, v: &Field| x_norm(u, v, &pos, &p, 4.0).unwrap();
        let scale = |f: &Field, s: f64| Field::from_fn(grid, |x| s * f.interpolate(x));
        let sum = |f: &Field, g: &Field| Field::new(grid, f.values.iter().zip(&g.values).map(|(a, b)| a + b).collect()).unwrap();
        prop_assert!(close(n(&scale(&f1, c), &scale(&f2, c)), c.abs() * n(&f1, &f2), 1e-9));
        prop_assert!(n(&sum(&f1, &g1), &sum(&f2, &g2)) <= n(&f1, &f2) + n(&g1, &g2) + 1e-12);
    }

    #[test]
    fn determinant_identity(p in positions(1..=8, 0.2..25.0), re in -0.3..3.0f64, im in -3.0..3.0f64) {
        let params = ModelParams::default();
        let lambda = Complex64::new(re, im);
        let k = k_lambda(lambda, &params).unwrap();
        prop_assert!(k.re > 0.0);
        let m = correlation_matrix(&p, lambda, &params, true).unwrap();
        let lu = determinant(p.len(), &m.entries);
        let closed = correlation_det_product(&p, k);
        prop_assert!((lu - closed).norm() <= 1e-12 * closed.norm());
        // real structure: conjugate spectral parameter gives the conjugate matrix
        let mc = correlation_matrix(&p, lambda.conj(), &params, true).unwrap();
        for (a, b) in m.entries.iter().zip(&mc.entries) {
            prop_assert!((a.conj() - b).norm() <= 1e-14 * a.norm().max(1.0));
        }
    }

    #[test]
    fn field_and_state_serialisation_round_trip(vals in prop::collection::vec(-1e3..1e3f64, 3..50), t in 0.0..100.0f64) {
        let grid = SpatialGrid::new(-1.0, 2.0, vals.len()).unwrap();
        let f = Field::new(grid, vals.clone()).unwrap();
        let back = Field::from_csv(&f.to_csv()).unwrap();
        prop_assert_eq!(&back.values, &f.values);
        let mut s = SimState::new(f.clone(), Field::new(grid, vals.iter().map(|v| v * 0.5).collect()).unwrap()).unwrap();
        s.t = t;
        prop_assert_eq!(SimState::from_json(&s.to_json()).unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mean_field_is_translation_and_mirror_equivariant(p in positions(1..=3, 30.0..70.0), shift in -50.0..50.0f64) {
        let params = ModelParams::default();
        let consts = PulseConstants::new(&params).unwrap();
        let Ok(base) = solve_mean_field(&p, &params, MeanFieldKernel::Exact) else {
            return Ok(());
        };
        let shifted: Vec<f64> = p.iter().map(|x| x + shift).collect();
        let qs = solve_mean_field(&shifted, &params, MeanFieldKernel::Exact).unwrap().config.q;
        for (a, b) in base.config.q.iter().zip(&qs) {
            prop_assert!(close(*a, *b, 1e-10));
        }
        let mirrored: Vec<f64> = p.iter().rev().map(|x| -x).collect();
        let qm = solve_mean_field(&mirrored, &params, MeanFieldKernel::Exact).unwrap().config;
        for (a, b) in base.config.q.iter().zip(qm.q.iter().rev()) {
            prop_assert!(close(*a, *b, 1e-10));
        }
        let v = velocities_matrix(&base.config, &params, &consts);
        let vm = velocities_matrix(&qm, &params, &consts);
        for (a, b) in v.iter().zip(vm.iter().rev()) {
            prop_assert!((a + b).abs() <= 1e-10 * a.abs().max(1e-12));
        }
    }
}
