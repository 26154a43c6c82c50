//! Dense discretisation of the linearisation about an N-pulse profile, used as an
//! independent eigenvalue oracle for the NLEP roots.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::linalg::symmetric_tridiagonal_top;
use crate::mean_field::PulseConfiguration;
use crate::params::ModelParams;
use crate::profiles::{build_profile, phi0, pow, xi_bump, PartitionOfUnity, DEFAULT_ELL};

pub const MAX_DENSE: usize = 4000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linearization {
    /// Pointwise linearisation of the full system.
    Full,
    /// Finite-rank reduction of the slow-fast coupling.
    #[default]
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleOptions {
    /// Keep eigenvalues with `Re > -eps^alpha mu - margin`.
    pub margin: f64,
    /// Window width of the localisation bumps in the reduced operator.
    pub ell: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { margin: 0.1, ell: DEFAULT_ELL }
    }
}

/// Row-major `2m x 2m` matrix on the `m` interior nodes, unknowns ordered `(u_1..u_m, v_1..v_m)`.
pub fn assemble_linearization(
    config: &PulseConfiguration,
    grid: SpatialGrid,
    params: &ModelParams,
    which: Linearization,
    ell: f64,
) -> Result<Mat<f64>> {
    let m = grid.n - 2;
    if 2 * m > MAX_DENSE {
        return Err(Error::TooLarge { size: 2 * m, cap: MAX_DENSE });
    }
    let (phi1, phi2) = build_profile(config, grid, params)?;
    let eps = params.eps;
    let dx = grid.dx();
    let c = 1.0 / (dx * dx);
    let damping = params.damping();
    let node = |i: usize| grid.x(i + 1);
    let u = |i: usize| phi1.values[i + 1];
    let v = |i: usize| phi2.values[i + 1];
    let (a11, a12, a21, a22) = (params.a11, params.a12, params.a21, params.a22);

    let mut a = Mat::<f64>::zeros(2 * m, 2 * m);
    for i in 0..m {
        a[(i, i)] = -2.0 * c / (eps * eps) - damping;
        a[(m + i, m + i)] = -2.0 * c - 1.0;
        if i > 0 {
            a[(i, i - 1)] = c / (eps * eps);
            a[(m + i, m + i - 1)] = c;
        }
        if i + 1 < m {
            a[(i, i + 1)] = c / (eps * eps);
            a[(m + i, m + i + 1)] = c;
        }
    }

    match which {
        Linearization::Full => {
            for i in 0..m {
                let (ui, vi) = (u(i), v(i));
                a[(i, i)] -= a11 * pow(ui, a11 - 1.0) * pow(vi, a12) / eps;
                a[(i, m + i)] -= a12 * pow(ui, a11) * pow(vi, a12 - 1.0) / eps;
                a[(m + i, i)] += a21 * pow(ui, a21 - 1.0) * pow(vi, a22);
                a[(m + i, m + i)] += a22 * pow(ui, a21) * pow(vi, a22 - 1.0);
            }
        }
        Linearization::Reduced => {
            let pou = PartitionOfUnity::new(&config.p, grid)?;
            let scale: Vec<f64> = config.q.iter().map(|&q| q.powf(params.amplitude_exponent())).collect();
            for (j, (&pj, &qj)) in config.p.iter().zip(&config.q).enumerate() {
                let xi = xi_bump(pj, ell, grid)?;
                let chi = &pou.weights[j].values;
                // rank-one slow-fast couplings: xi_j (x) <w, .>
                let w11: Vec<f64> = (0..m)
                    .map(|l| dx * a11 * pow(v(l), a12) * pow(u(l), a11 - 1.0) * chi[l + 1])
                    .collect();
                let w12: Vec<f64> = (0..m)
                    .map(|l| dx * a12 * pow(v(l), a12 - 1.0) * pow(u(l), a11) * chi[l + 1])
                    .collect();
                for i in 0..m {
                    let s = xi.values[i + 1];
                    if s == 0.0 {
                        continue;
                    }
                    for l in 0..m {
                        a[(i, l)] -= s * w11[l] / eps;
                        a[(i, m + l)] -= s * w12[l] / eps;
                    }
                }
                let amp = pow(qj, a21 - 1.0);
                for i in 0..m {
                    let x = node(i) - pj;
                    let fast = scale[j] * phi0(x, params);
                    a[(m + i, i)] += a21 * amp * pow(fast, a22);
                    a[(m + i, m + i)] += a22 * pow(phi0(x, params), a22 - 1.0);
                }
            }
        }
    }
    Ok(a)
}

/// Eigenvalues of the discretised linearisation with `Re > -eps^alpha mu - margin`,
/// sorted by decreasing real part.
pub fn discretized_linearization_spectrum(
    config: &PulseConfiguration,
    grid: SpatialGrid,
    params: &ModelParams,
    which: Linearization,
    opts: &OracleOptions,
) -> Result<Vec<Complex64>> {
    let a = assemble_linearization(config, grid, params, which, opts.ell)?;
    let cut = -params.damping() - opts.margin;
    let mut ev: Vec<Complex64> = a
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("{e:?}")))?
        .into_iter()
        .map(|z| Complex64::new(z.re, z.im))
        .filter(|z| z.re > cut)
        .collect();
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(ev)
}

/// Eigenvalues of the reduced fast operator `d_xx - 1 + a22 sum_j phi0^(a22-1)(x - p_j)`
/// closest to zero: the translational cluster.
pub fn translational_cluster(config: &PulseConfiguration, grid: SpatialGrid, params: &ModelParams) -> Vec<f64> {
    let c = 1.0 / (grid.dx() * grid.dx());
    let diag: Vec<f64> = (1..grid.n - 1)
        .map(|i| {
            let x = grid.x(i);
            -2.0 * c - 1.0
                + config
                    .p
                    .iter()
                    .map(|&p| params.a22 * pow(phi0(x - p, params), params.a22 - 1.0))
                    .sum::<f64>()
        })
        .collect();
    let off = vec![c; diag.len() - 1];
    let n = config.len();
    let mut top = symmetric_tridiagonal_top(&diag, &off, 2 * n + 2);
    top.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    top.truncate(n);
    top
}

/// Oracle eigenvalues split into the translational cluster and the rest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSpectrum {
    pub which: Linearization,
    pub eigenvalues: Vec<Complex64>,
    /// Near-zero eigenvalues whose fast component is locally odd about the pulses.
    pub translational: Vec<Complex64>,
    /// Odd fraction of each translational candidate's fast component.
    pub odd_fraction: Vec<f64>,
    pub semi_strong: Vec<Complex64>,
}

/// Share of the fast component's energy near the pulses that is odd about the centres.
fn odd_fraction(v: &[f64], p: &[f64], grid: SpatialGrid) -> f64 {
    let dx = grid.dx();
    let half = (3.0 / dx) as usize;
    let (mut even, mut odd) = (0.0, 0.0);
    for &pj in p {
        let c = ((pj - grid.x0) / dx).round() as usize - 1;
        for s in 1..=half {
            if c < s || c + s >= v.len() {
                break;
            }
            let (a, b) = (v[c + s], v[c - s]);
            even += (a + b) * (a + b);
            odd += (a - b) * (a - b);
        }
    }
    odd / (even + odd).max(f64::MIN_POSITIVE)
}

/// Eigenvector of a (real) near-zero eigenvalue by shifted inverse iteration.
fn real_eigenvector(a: &Mat<f64>, lambda: f64) -> Vec<f64> {
    use faer::linalg::solvers::Solve;
    let n = a.nrows();
    let shift = lambda + 1e-9 * (1.0 + lambda.abs());
    let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] - if i == j { shift } else { 0.0 });
    let lu = shifted.partial_piv_lu();
    let mut x = Mat::from_fn(n, 1, |i, _| 1.0 + ((i * 7919) % 97) as f64 / 97.0);
    for _ in 0..3 {
        x = lu.solve(&x);
        let nrm = (0..n).map(|i| x[(i, 0)] * x[(i, 0)]).sum::<f64>().sqrt();
        x = Mat::from_fn(n, 1, |i, _| x[(i, 0)] / nrm);
    }
    (0..n).map(|i| x[(i, 0)]).collect()
}

/// Eigenvalues of the discretised linearisation, with the `N` translational
/// eigenvalues identified among real eigenvalues with `|lambda| <= 0.1 eps^alpha`
/// by the parity of their fast component.
pub fn oracle_spectrum(
    config: &PulseConfiguration,
    grid: SpatialGrid,
    params: &ModelParams,
    which: Linearization,
    opts: &OracleOptions,
) -> Result<OracleSpectrum> {
    let a = assemble_linearization(config, grid, params, which, opts.ell)?;
    let cut = -params.damping() - opts.margin;
    let mut eigenvalues: Vec<Complex64> = a
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("{e:?}")))?
        .into_iter()
        .map(|z| Complex64::new(z.re, z.im))
        .filter(|z| z.re > cut)
        .collect();
    eigenvalues.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));

    let m = grid.n - 2;
    let near = 0.1 * params.eps.powf(params.alpha);
    let mut candidates: Vec<(usize, f64)> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm() <= near && z.im.abs() < 1e-9)
        .map(|(k, z)| {
            let v = real_eigenvector(&a, z.re);
            (k, odd_fraction(&v[m..], &config.p, grid))
        })
        .collect();
    candidates.sort_by(|x, y| y.1.total_cmp(&x.1));
    candidates.truncate(config.len());
    let mut taken: Vec<usize> = candidates.iter().map(|c| c.0).collect();
    taken.sort_unstable();
    Ok(OracleSpectrum {
        which,
        translational: taken.iter().map(|&k| eigenvalues[k]).collect(),
        odd_fraction: taken
            .iter()
            .map(|&k| candidates.iter().find(|c| c.0 == k).map_or(0.0, |c| c.1))
            .collect(),
        semi_strong: eigenvalues
            .iter()
            .enumerate()
            .filter(|(k, _)| !taken.contains(k))
            .map(|(_, z)| *z)
            .collect(),
        eigenvalues,
    })
}
