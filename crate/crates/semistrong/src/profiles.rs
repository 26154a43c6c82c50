//! Localized pulse, Green's function, N-pulse profile and weighted norms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{trapezoid, Field, SpatialGrid};
use crate::linalg::Tridiagonal;
use crate::mean_field::PulseConfiguration;
use crate::params::ModelParams;
use crate::quad;

/// Pulses must sit at least this far from the grid ends.
pub const PROFILE_MARGIN: f64 = 10.0;

/// Default minimal-separation parameter used for the xi bump and spacing checks.
pub const DEFAULT_ELL: f64 = 4.0;

/// `base^e` with `powi` for small integral exponents (valid for negative bases).
pub(crate) fn pow(base: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < 64.0 {
        base.powi(e as i32)
    } else {
        base.powf(e)
    }
}

pub(crate) fn is_integral(e: f64) -> bool {
    e.fract() == 0.0
}

fn phi0_amplitude(a22: f64) -> f64 {
    (0.5 * (a22 + 1.0)).powf(1.0 / (a22 - 1.0))
}

fn sech(z: f64) -> f64 {
    let z = z.abs();
    let e = (-z).exp();
    2.0 * e / (1.0 + e * e)
}

/// Even homoclinic solution of `phi'' - phi + phi^a22 = 0`.
pub fn phi0(x: f64, params: &ModelParams) -> f64 {
    let a = params.a22;
    phi0_amplitude(a) * sech(0.5 * (a - 1.0) * x).powf(2.0 / (a - 1.0))
}

/// Derivative of [`phi0`], `-phi0(x) tanh((a22-1)x/2)`.
pub fn phi0_deriv(x: f64, params: &ModelParams) -> f64 {
    -phi0(x, params) * (0.5 * (params.a22 - 1.0) * x).tanh()
}

/// Tail point beyond which `2 * int phi0^power` is below `tol`, using
/// `phi0(x) <= A 2^(2/(a22-1)) e^-|x|`.
fn truncation(power: f64, params: &ModelParams, tol: f64) -> f64 {
    let envelope = phi0_amplitude(params.a22) * 2f64.powf(2.0 / (params.a22 - 1.0));
    let c = 2.0 * envelope.powf(power) / power;
    ((c / tol).ln() / power).max(20.0)
}

const MASS_TOL: f64 = 1e-12;

fn even_integral(f: impl Fn(f64) -> f64, half_width: f64, tail: f64) -> Result<f64> {
    let est = quad::integrate(f, 0.0, half_width, 1e-14, 1e-15)?;
    let total_error = 2.0 * est.error + tail;
    if total_error > MASS_TOL {
        return Err(Error::Quadrature {
            estimate: total_error,
            tol: MASS_TOL,
        });
    }
    Ok(2.0 * est.value)
}

/// `int_R phi0^power dx`.
pub fn phi0_mass(power: f64, params: &ModelParams) -> Result<f64> {
    if !(power >= 1.0) {
        return Err(Error::InvalidParams(format!("mass power {power} < 1")));
    }
    let tail = 1e-15;
    let x = truncation(power, params, tail);
    even_integral(|s| phi0(s, params).powf(power), x, tail)
}

/// `int_R phi0'(x)^2 dx`.
pub fn phi0_deriv_norm_sq(params: &ModelParams) -> Result<f64> {
    let tail = 1e-15;
    let x = truncation(2.0, params, tail);
    even_integral(|s| phi0_deriv(s, params).powi(2), x, tail)
}

/// Pulse integrals that enter the mean field, the dispersion relation and the pulse law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConstants {
    /// `int phi0^a12`
    pub mass_a12: f64,
    /// `int phi0^(a22+1)`
    pub mass_a22p1: f64,
    /// `int (phi0')^2`
    pub deriv_norm_sq: f64,
}

impl PulseConstants {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            mass_a12: phi0_mass(params.a12, params)?,
            mass_a22p1: phi0_mass(params.a22 + 1.0, params)?,
            deriv_norm_sq: phi0_deriv_norm_sq(params)?,
        })
    }
}

/// `eps * sqrt(lambda + eps^alpha mu)` on the principal branch.
pub fn k_lambda(lambda: Complex64, params: &ModelParams) -> Result<Complex64> {
    let m = params.damping();
    let z = lambda + m;
    if z.im == 0.0 && z.re <= 0.0 {
        return Err(Error::BranchCut {
            lambda,
            branch_point: -m,
        });
    }
    Ok(params.eps * z.sqrt())
}

/// Green's function of `eps^-2 d_xx - eps^alpha mu - lambda`:
/// `(eps^2 / (2 k)) e^{-k|x|}`, so that `(-eps^-2 d_xx + eps^alpha mu + lambda) G = delta`.
pub fn green_function(lambda: Complex64, x: f64, params: &ModelParams) -> Result<Complex64> {
    let k = k_lambda(lambda, params)?;
    Ok(params.eps * params.eps / (2.0 * k) * (-k * x.abs()).exp())
}

fn check_config(config: &PulseConfiguration, grid: &SpatialGrid) -> Result<()> {
    grid.validate()?;
    if config.q.len() != config.p.len() {
        return Err(Error::Mismatch(format!(
            "{} positions but {} amplitudes",
            config.p.len(),
            config.q.len()
        )));
    }
    for &p in &config.p {
        if !grid.contains(p, PROFILE_MARGIN) {
            return Err(Error::Margin {
                position: p,
                margin: PROFILE_MARGIN,
            });
        }
    }
    for (index, &value) in config.q.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveAmplitude { index, value });
        }
    }
    Ok(())
}

/// Fast component `sum_j q_j^(-a21/(a22-1)) phi0(x - p_j)`.
pub fn fast_profile(config: &PulseConfiguration, grid: SpatialGrid, params: &ModelParams) -> Field {
    let scales: Vec<f64> = config
        .q
        .iter()
        .map(|&q| q.powf(params.amplitude_exponent()))
        .collect();
    Field::from_fn(grid, |x| {
        config
            .p
            .iter()
            .zip(&scales)
            .map(|(&p, &s)| s * phi0(x - p, params))
            .sum()
    })
}

/// Assembles `(Phi1, Phi2)`: `Phi2` in closed form, `Phi1` from the slow linear
/// boundary-value problem driven by `sum_j q_j^a11 phi_j^a12`, with the far
/// field `eps^(-alpha/2) rho / mu` imposed at both ends.
pub fn build_profile(
    config: &PulseConfiguration,
    grid: SpatialGrid,
    params: &ModelParams,
) -> Result<(Field, Field)> {
    params.validate()?;
    check_config(config, &grid)?;
    let phi2 = fast_profile(config, grid, params);

    let n = grid.n;
    let dx = grid.dx();
    let c = 1.0 / (params.eps * params.eps * dx * dx);
    let m = params.damping();
    let f = params.forcing();
    let far = params.far_field();
    let inv_eps = 1.0 / params.eps;

    let scales: Vec<f64> = config
        .q
        .iter()
        .map(|&q| pow(q, params.a11) * pow(q, params.amplitude_exponent() * params.a12))
        .collect();
    let source = |x: f64| -> f64 {
        config
            .p
            .iter()
            .zip(&scales)
            .map(|(&p, &s)| s * phi0(x - p, params).powf(params.a12))
            .sum()
    };

    let interior = n - 2;
    let system = Tridiagonal {
        lower: vec![-c; interior - 1],
        diag: vec![2.0 * c + m; interior],
        upper: vec![-c; interior - 1],
    };
    let mut rhs: Vec<f64> = (1..n - 1).map(|i| f - inv_eps * source(grid.x(i))).collect();
    rhs[0] += c * far;
    rhs[interior - 1] += c * far;
    system.solve(&mut rhs)?;

    let mut phi1 = Vec::with_capacity(n);
    phi1.push(far);
    phi1.extend_from_slice(&rhs);
    phi1.push(far);
    Ok((Field::new(grid, phi1)?, phi2))
}

/// Pointwise residual of the full system at a profile, with `eps ||F1||_1` and `||F2||_2`.
#[derive(Debug, Clone)]
pub struct Residual {
    pub f1: Field,
    pub f2: Field,
    pub eps_l1_f1: f64,
    pub l2_f2: f64,
}

fn check_powers(phi1: &Field, exponents: &[f64]) -> Result<()> {
    let risky = exponents.iter().any(|&e| e < 0.0 || !is_integral(e));
    if !risky {
        return Ok(());
    }
    for (i, &v) in phi1.values.iter().enumerate() {
        if v <= 1e-12 {
            return Err(Error::NearZero {
                x: phi1.grid.x(i),
                value: v,
            });
        }
    }
    Ok(())
}

pub fn compute_residual(phi1: &Field, phi2: &Field, params: &ModelParams) -> Result<Residual> {
    if phi1.grid != phi2.grid {
        return Err(Error::Mismatch("Phi1 and Phi2 on different grids".into()));
    }
    check_powers(phi1, &[params.a11, params.a21])?;
    let grid = phi1.grid;
    let n = grid.n;
    let dx2 = grid.dx() * grid.dx();
    let eps = params.eps;
    let m = params.damping();
    let f = params.forcing();
    let (u, v) = (&phi1.values, &phi2.values);

    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    for i in 1..n - 1 {
        let uxx = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / dx2;
        let vxx = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / dx2;
        f1[i] = uxx / (eps * eps) - m * u[i] - pow(u[i], params.a11) * pow(v[i], params.a12) / eps + f;
        f2[i] = vxx - v[i] + pow(u[i], params.a21) * pow(v[i], params.a22);
    }
    let dx = grid.dx();
    let l1: Vec<f64> = f1.iter().map(|x| x.abs()).collect();
    let sq: Vec<f64> = f2.iter().map(|x| x * x).collect();
    Ok(Residual {
        eps_l1_f1: eps * trapezoid(&l1, dx),
        l2_f2: trapezoid(&sq, dx).sqrt(),
        f1: Field::new(grid, f1)?,
        f2: Field::new(grid, f2)?,
    })
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Smooth partition of unity subordinate to the pulse windows. Transitions are
/// quintic smoothsteps of half-width 1 centred at the midpoints between pulses.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    pub p: Vec<f64>,
    pub midpoints: Vec<f64>,
    pub weights: Vec<Field>,
}

impl PartitionOfUnity {
    pub fn new(p: &[f64], grid: SpatialGrid) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidConfig("no pulse positions".into()));
        }
        if p.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("positions must be strictly increasing".into()));
        }
        let midpoints: Vec<f64> = p.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let step = |j: usize, x: f64| smoothstep(0.5 * (x - midpoints[j] + 1.0));
        let n = p.len();
        let weights = (0..n)
            .map(|j| {
                Field::from_fn(grid, |x| {
                    let left = if j == 0 { 1.0 } else { step(j - 1, x) };
                    let right = if j + 1 == n { 0.0 } else { step(j, x) };
                    left - right
                })
            })
            .collect();
        Ok(Self {
            p: p.to_vec(),
            midpoints,
            weights,
        })
    }
}

/// Cosine bump of unit grid mass supported in `(center - ell/4, center + ell/4)`.
pub fn xi_bump(center: f64, ell: f64, grid: SpatialGrid) -> Result<Field> {
    let w = 0.25 * ell;
    let mut f = Field::from_fn(grid, |x| {
        let t = (x - center) / w;
        if t.abs() < 1.0 {
            (0.5 * std::f64::consts::PI * t).cos().powi(2)
        } else {
            0.0
        }
    });
    let mass = f.integral();
    let support = f.values.iter().filter(|v| **v > 0.0).count();
    if support < 3 || mass <= 0.0 {
        return Err(Error::InvalidGrid(format!(
            "xi bump of half-width {w} is not resolved by dx = {}",
            grid.dx()
        )));
    }
    f.values.iter_mut().for_each(|v| *v /= mass);
    Ok(f)
}

/// Components of the X-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XNormParts {
    /// `||xi f1||_1 + ||f1'||_1` with xi at the first pulse.
    pub slow: f64,
    /// `(||f2'||_2^2 + ||f2||_{L1_gamma}^2)^(1/2)`.
    pub fast: f64,
    /// `||xi_j f1||_1` for every pulse.
    pub slow_windows: Vec<f64>,
}

impl XNormParts {
    pub fn total(&self) -> f64 {
        self.slow + self.fast
    }
}

pub fn x_norm_parts(
    f1: &Field,
    f2: &Field,
    p: &[f64],
    params: &ModelParams,
    ell: f64,
) -> Result<XNormParts> {
    if f1.grid != f2.grid {
        return Err(Error::Mismatch("components on different grids".into()));
    }
    let grid = f1.grid;
    let dx = grid.dx();
    let pou = PartitionOfUnity::new(p, grid)?;
    let gamma = params.gamma();

    let slow_windows = p
        .iter()
        .map(|&pj| {
            let xi = xi_bump(pj, ell, grid)?;
            let prod: Vec<f64> = xi.values.iter().zip(&f1.values).map(|(a, b)| (a * b).abs()).collect();
            Ok(trapezoid(&prod, dx))
        })
        .collect::<Result<Vec<_>>>()?;
    let tv: f64 = f1.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();

    let grad_sq: f64 = f2.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / dx;
    let weighted: f64 = pou
        .weights
        .iter()
        .zip(p)
        .map(|(chi, &pj)| {
            let w: Vec<f64> = chi
                .values
                .iter()
                .zip(&f2.values)
                .enumerate()
                .map(|(i, (c, v))| (1.0 + (grid.x(i) - pj).abs().powf(gamma)) * c * v.abs())
                .collect();
            trapezoid(&w, dx)
        })
        .sum();

    Ok(XNormParts {
        slow: slow_windows[0] + tv,
        fast: (grad_sq + weighted * weighted).sqrt(),
        slow_windows,
    })
}

/// `||f1||_{W^{1,1}_xi} + ||f2||_{H^1_{gamma,p}}`.
pub fn x_norm(f1: &Field, f2: &Field, p: &[f64], params: &ModelParams, ell: f64) -> Result<f64> {
    Ok(x_norm_parts(f1, f2, p, params, ell)?.total())
}
