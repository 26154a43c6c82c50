//! Amplitudes slaved to pulse positions through the slow mean field.

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::par::{self, Exec};
use crate::params::ModelParams;
use crate::profiles::{k_lambda, phi0, pow, PulseConstants};
use crate::quad;

/// Ordered pulse positions with their amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfiguration {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PulseConfiguration {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        check_positions(&p)?;
        if q.len() != p.len() {
            return Err(Error::Mismatch(format!("{} positions, {} amplitudes", p.len(), q.len())));
        }
        if let Some((index, &value)) = q.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveAmplitude { index, value });
        }
        Ok(Self { p, q })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn spacings(&self) -> Vec<f64> {
        spacings(&self.p)
    }
}

pub fn spacings(p: &[f64]) -> Vec<f64> {
    p.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn check_positions(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidConfig("at least one pulse is required".into()));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig("non-finite position".into()));
    }
    if p.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("positions must be strictly increasing".into()));
    }
    Ok(())
}

/// Two-point correlation matrix `exp(-k_lambda |p_i - p_j|)`, optionally times `eps^2 / (2 k_lambda)`.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub n: usize,
    /// Row-major entries.
    pub entries: Vec<Complex64>,
    pub lambda: Complex64,
    pub scaled: bool,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.n + j]
    }

    pub fn determinant(&self) -> Complex64 {
        linalg::determinant(self.n, &self.entries)
    }
}

pub fn correlation_matrix(
    p: &[f64],
    lambda: Complex64,
    params: &ModelParams,
    scaled: bool,
) -> Result<CorrelationMatrix> {
    check_positions(p)?;
    let k = k_lambda(lambda, params)?;
    let factor = if scaled {
        Complex64::new(1.0, 0.0)
    } else {
        params.eps * params.eps / (2.0 * k)
    };
    let n = p.len();
    let entries = (0..n * n)
        .map(|ij| factor * (-k * (p[ij / n] - p[ij % n]).abs()).exp())
        .collect();
    Ok(CorrelationMatrix {
        n,
        entries,
        lambda,
        scaled,
    })
}

/// Closed-form determinant `prod_i (1 - exp(-2 k dp_i))` of the scaled correlation matrix.
pub fn correlation_det_product(p: &[f64], k: Complex64) -> Complex64 {
    spacings(p)
        .iter()
        .map(|d| 1.0 - (-2.0 * k * d).exp())
        .product()
}

/// How the slow field of a pulse is evaluated at the other pulse sites.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanFieldKernel {
    /// Point-mass pulses: `(M / 2 sqrt(mu)) exp(-k0 |p_k - p_j|)`.
    Leading,
    /// Pulse mass spread over its profile: `(1 / 2 sqrt(mu)) int exp(-k0 |d - z|) phi0^a12(z) dz`.
    /// This is exactly the condition `q_k = Phi1(p_k)`.
    #[default]
    Exact,
}

/// Single-pulse amplitude `(2 rho / (sqrt(mu) M))^(1/theta)` in the limit of vanishing `eps^(alpha/2) q`.
pub fn q_infinity(params: &ModelParams, consts: &PulseConstants) -> Result<f64> {
    let theta = params.theta();
    if theta == 0.0 {
        return Err(Error::ThetaZero);
    }
    if !(params.rho > 0.0) {
        return Err(Error::InvalidParams("q_infinity needs rho > 0".into()));
    }
    Ok((2.0 * params.rho / (params.mu.sqrt() * consts.mass_a12)).powf(1.0 / theta))
}

fn exact_kernel(d: f64, params: &ModelParams) -> Result<f64> {
    let k0 = params.k0();
    let d = d.abs();
    let a = params.a12;
    let z = 40.0 / a.min(2.0) + 10.0;
    let f = |s: f64| (-k0 * (d - s).abs()).exp() * phi0(s, params).powf(a);
    let split = d.min(z);
    let left = quad::integrate(f, -z, split, 1e-15, 1e-14)?;
    let right = if split < z {
        quad::integrate(f, split, z, 1e-15, 1e-14)?.value
    } else {
        0.0
    };
    Ok((left.value + right) / (2.0 * params.mu.sqrt()))
}

/// Row-major `N x N` interaction kernel of the mean-field system.
pub fn kernel_matrix(
    p: &[f64],
    params: &ModelParams,
    consts: &PulseConstants,
    kernel: MeanFieldKernel,
) -> Result<Vec<f64>> {
    check_positions(p)?;
    let n = p.len();
    let k0 = params.k0();
    let mut out = vec![0.0; n * n];
    let self_term = match kernel {
        MeanFieldKernel::Exact => Some(exact_kernel(0.0, params)?),
        MeanFieldKernel::Leading => None,
    };
    for i in 0..n {
        for j in i..n {
            let d = p[j] - p[i];
            let v = match kernel {
                MeanFieldKernel::Leading => consts.mass_a12 / (2.0 * params.mu.sqrt()) * (-k0 * d).exp(),
                MeanFieldKernel::Exact if i == j => self_term.unwrap_or_default(),
                MeanFieldKernel::Exact => exact_kernel(d, params)?,
            };
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    Ok(out)
}

/// `F(q) = K q^theta + eps^(alpha/2) q - (rho/mu) 1`.
#[derive(Debug, Clone)]
pub struct MeanFieldSystem {
    pub n: usize,
    pub kernel: Vec<f64>,
    pub linear: f64,
    pub rhs: f64,
    pub theta: f64,
}

impl MeanFieldSystem {
    pub fn new(
        p: &[f64],
        params: &ModelParams,
        consts: &PulseConstants,
        kernel: MeanFieldKernel,
    ) -> Result<Self> {
        let theta = params.theta();
        if theta == 0.0 {
            return Err(Error::ThetaZero);
        }
        Ok(Self {
            n: p.len(),
            kernel: kernel_matrix(p, params, consts, kernel)?,
            linear: params.eps.powf(0.5 * params.alpha),
            rhs: params.rho / params.mu,
            theta,
        })
    }

    pub fn residual(&self, q: &[f64]) -> Vec<f64> {
        let n = self.n;
        let qt: Vec<f64> = q.iter().map(|v| pow(v.abs(), self.theta)).collect();
        (0..n)
            .map(|i| {
                let s: f64 = (0..n).map(|j| self.kernel[i * n + j] * qt[j]).sum();
                s + self.linear * q[i] - self.rhs
            })
            .collect()
    }

    /// Row-major analytic Jacobian `K theta diag(q^(theta-1)) + eps^(alpha/2) I`.
    pub fn jacobian(&self, q: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut jac = vec![0.0; n * n];
        for j in 0..n {
            let d = self.theta * pow(q[j].abs(), self.theta - 1.0);
            for i in 0..n {
                jac[i * n + j] = self.kernel[i * n + j] * d;
            }
            jac[j * n + j] += self.linear;
        }
        jac
    }

    /// Gap between the two sides of `eps^(alpha/2) q = -K q^theta + rho/mu`.
    pub fn rearranged_gap(&self, q: &[f64]) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| {
                let s: f64 = (0..n).map(|j| self.kernel[i * n + j] * pow(q[j], self.theta)).sum();
                (self.linear * q[i] - (self.rhs - s)).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    pub config: PulseConfiguration,
    pub residual_norm: f64,
    pub iterations: usize,
    pub kernel: MeanFieldKernel,
}

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 30;
const NEWTON_TOL: f64 = 1e-12;

fn newton(system: &MeanFieldSystem, mut q: Vec<f64>) -> Result<(Vec<f64>, f64, usize)> {
    let mut f = system.residual(&q);
    let mut res = inf_norm(&f);
    for it in 0..NEWTON_MAX_ITER {
        if res <= 0.1 * NEWTON_TOL {
            return Ok((q, res, it));
        }
        let jac = system.jacobian(&q);
        let step = linalg::solve_dense(system.n, &jac, &f);
        let mut t = 1.0;
        let mut accepted = None;
        let mut left_orthant = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let trial: Vec<f64> = q.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            if trial.iter().all(|v| *v > 0.0 && v.is_finite()) {
                let ft = system.residual(&trial);
                let rt = inf_norm(&ft);
                if rt < res {
                    accepted = Some((trial, ft, rt));
                    break;
                }
            } else {
                left_orthant = true;
            }
            t *= 0.5;
        }
        match accepted {
            Some((qn, fnew, rn)) => {
                q = qn;
                f = fnew;
                res = rn;
            }
            None if res <= NEWTON_TOL => return Ok((q, res, it)),
            None if left_orthant => return Err(Error::NotPositive { residual: res }),
            None => {
                return Err(Error::NewtonFailed {
                    iterations: it,
                    residual: res,
                })
            }
        }
    }
    if res <= NEWTON_TOL {
        Ok((q, res, NEWTON_MAX_ITER))
    } else {
        Err(Error::NewtonFailed {
            iterations: NEWTON_MAX_ITER,
            residual: res,
        })
    }
}

/// Solves the mean-field system by damped Newton started from `q_infinity`.
pub fn solve_mean_field(p: &[f64], params: &ModelParams, kernel: MeanFieldKernel) -> Result<MeanFieldSolution> {
    let consts = PulseConstants::new(params)?;
    solve_mean_field_with(p, params, &consts, kernel, None)
}

pub fn solve_mean_field_with(
    p: &[f64],
    params: &ModelParams,
    consts: &PulseConstants,
    kernel: MeanFieldKernel,
    initial: Option<&[f64]>,
) -> Result<MeanFieldSolution> {
    params.validate()?;
    check_positions(p)?;
    let system = MeanFieldSystem::new(p, params, consts, kernel)?;
    let q0 = match initial {
        Some(q) if q.len() == p.len() && q.iter().all(|v| *v > 0.0) => q.to_vec(),
        _ => vec![q_infinity(params, consts)?; p.len()],
    };
    let (q, residual_norm, iterations) = newton(&system, q0)?;
    Ok(MeanFieldSolution {
        config: PulseConfiguration::new(p.to_vec(), q)?,
        residual_norm,
        iterations,
        kernel,
    })
}

/// Independent solves over many position sets.
pub fn solve_batch(
    exec: Exec,
    positions: &[Vec<f64>],
    params: &ModelParams,
    consts: &PulseConstants,
    kernel: MeanFieldKernel,
) -> Vec<Result<MeanFieldSolution>> {
    par::map(exec, positions, |p| solve_mean_field_with(p, params, consts, kernel, None))
}

/// Distinct positive roots found from randomised starting points around `q_infinity`
/// (diagnostic for possible non-uniqueness when theta < -1).
pub fn distinct_roots(
    p: &[f64],
    params: &ModelParams,
    consts: &PulseConstants,
    kernel: MeanFieldKernel,
    restarts: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let system = MeanFieldSystem::new(p, params, consts, kernel)?;
    let base = q_infinity(params, consts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots: Vec<Vec<f64>> = Vec::new();
    for _ in 0..restarts {
        let start: Vec<f64> = (0..p.len()).map(|_| base * rng.random_range(0.25..4.0)).collect();
        if let Ok((q, _, _)) = newton(&system, start) {
            let known = roots.iter().any(|r| {
                r.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-8 * a.abs().max(1.0))
            });
            if !known {
                roots.push(q);
            }
        }
    }
    Ok(roots)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub min_spacing: Option<f64>,
    pub ell_threshold: f64,
    pub delta_threshold: f64,
    pub in_k_ell: bool,
    pub in_k_delta: bool,
    /// Gap index `i` (between pulses `i` and `i+1`) with the smallest spacing.
    pub limiting_index: Option<usize>,
}

/// Membership in the minimal-separation set (`dp >= ell |ln eps|`) and in the
/// semi-strong region (`dp >= delta eps^-(1+alpha/2)`).
pub fn spacing_checks(p: &[f64], params: &ModelParams, ell: f64, delta: f64) -> SpacingReport {
    let gaps = spacings(p);
    let ell_threshold = ell * params.eps.ln().abs();
    let delta_threshold = delta * params.slow_length();
    let limiting = gaps
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, d)| (i, *d));
    SpacingReport {
        min_spacing: limiting.map(|l| l.1),
        ell_threshold,
        delta_threshold,
        in_k_ell: gaps.iter().all(|d| *d >= ell_threshold),
        in_k_delta: gaps.iter().all(|d| *d >= delta_threshold),
        limiting_index: limiting.map(|l| l.0),
    }
}
