//! Nonlocal eigenvalue problem: the NLEP function, the N x N dispersion
//! matrix, contour root counting and admissibility.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::linalg::{self, symmetric_tridiagonal_top, Tridiagonal};
use crate::mean_field::{correlation_matrix, spacing_checks, PulseConfiguration, SpacingReport};
use crate::par::{self, Exec};
use crate::params::ModelParams;
use crate::profiles::{k_lambda, phi0, pow, PulseConstants};

pub const DEFAULT_POLE_GUARD: f64 = 1e-6;

/// Discretised `L0 = d_xx - 1 + a22 phi0^(a22-1)` with homogeneous Dirichlet ends
/// (interior nodes only).
#[derive(Debug, Clone)]
pub struct L0Operator {
    pub grid: SpatialGrid,
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl L0Operator {
    pub fn new(grid: SpatialGrid, params: &ModelParams) -> Result<Self> {
        grid.validate()?;
        let dx = grid.dx();
        let c = 1.0 / (dx * dx);
        let m = grid.n - 2;
        let diag = (1..grid.n - 1)
            .map(|i| -2.0 * c - 1.0 + params.a22 * pow(phi0(grid.x(i), params), params.a22 - 1.0))
            .collect();
        Ok(Self {
            grid,
            diag,
            off: vec![c; m - 1],
        })
    }

    /// Interior node abscissae.
    pub fn nodes(&self) -> Vec<f64> {
        (1..self.grid.n - 1).map(|i| self.grid.x(i)).collect()
    }

    pub fn eigenvalues(&self, count: usize) -> Vec<f64> {
        symmetric_tridiagonal_top(&self.diag, &self.off, count)
    }

    /// Eigenvector for a (converged) eigenvalue by inverse iteration.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let m = self.diag.len();
        let shift = lambda + 1e-9 * lambda.abs().max(1.0);
        let t = Tridiagonal {
            lower: self.off.clone(),
            diag: self.diag.iter().map(|d| d - shift).collect(),
            upper: self.off.clone(),
        };
        let mut v: Vec<f64> = (0..m).map(|i| 1.0 + 0.1 * ((i * 7919 % 101) as f64 / 101.0)).collect();
        if let Ok(lu) = t.factor() {
            for _ in 0..4 {
                lu.solve_in_place(&mut v);
                let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= nrm);
            }
        }
        v
    }

    /// Whether the eigenvector of `lambda` is even about `x = 0` (grid must be symmetric).
    pub fn is_even(&self, lambda: f64) -> bool {
        let v = self.eigenvector(lambda);
        let m = v.len();
        let sym: f64 = (0..m).map(|i| v[i] * v[m - 1 - i]).sum();
        sym > 0.0
    }
}

/// Largest `count` eigenvalues of the discretised `L0`, descending.
pub fn l0_eigenvalues(grid: SpatialGrid, params: &ModelParams, count: usize) -> Result<Vec<f64>> {
    if grid.x0 > -20.0 || grid.x1 < 20.0 {
        return Err(Error::InvalidGrid("L0 grid must cover [-20, 20]".into()));
    }
    if count > 6 {
        return Err(Error::InvalidConfig("at most 6 eigenvalues".into()));
    }
    Ok(L0Operator::new(grid, params)?.eigenvalues(count))
}

/// Eigenvalue of `L0` that may produce a pole of the NLEP function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0Eigenvalue {
    pub value: f64,
    pub even: bool,
}

/// Precomputed data for evaluating `R(lambda)`, `E(lambda)` and the dispersion matrix.
#[derive(Debug, Clone)]
pub struct NlepContext {
    pub params: ModelParams,
    pub consts: PulseConstants,
    pub op: L0Operator,
    rhs: Vec<f64>,
    weight: Vec<f64>,
    pub spectrum: Vec<L0Eigenvalue>,
    pub pole_guard: f64,
    /// `R` does not depend on the pulse configuration, so values are shared
    /// across every configuration evaluated with this context (and its clones).
    memo: Arc<Mutex<HashMap<[u64; 2], Complex64>>>,
}

const MEMO_CAP: usize = 1 << 20;

impl NlepContext {
    /// `grid` should be symmetric about 0 with half-width >= 20.
    pub fn new(grid: SpatialGrid, params: &ModelParams) -> Result<Self> {
        let consts = PulseConstants::new(params)?;
        Self::with_constants(grid, params, consts)
    }

    pub fn with_constants(grid: SpatialGrid, params: &ModelParams, consts: PulseConstants) -> Result<Self> {
        params.validate()?;
        if (grid.x0 + grid.x1).abs() > 1e-9 * grid.x1.abs() {
            return Err(Error::InvalidGrid("NLEP grid must be symmetric about 0".into()));
        }
        let op = L0Operator::new(grid, params)?;
        let nodes = op.nodes();
        let dx = grid.dx();
        let rhs = nodes.iter().map(|&x| pow(phi0(x, params), params.a22)).collect();
        let weight = nodes.iter().map(|&x| dx * pow(phi0(x, params), params.a12 - 1.0)).collect();
        let spectrum = op
            .eigenvalues(4)
            .into_iter()
            .map(|value| L0Eigenvalue {
                value,
                even: op.is_even(value),
            })
            .collect();
        Ok(Self {
            params: *params,
            consts,
            op,
            rhs,
            weight,
            spectrum,
            pole_guard: DEFAULT_POLE_GUARD,
            memo: Arc::default(),
        })
    }

    /// Default resolution: `[-30, 30]` with `dx = 0.01`.
    pub fn standard(params: &ModelParams) -> Result<Self> {
        Self::new(SpatialGrid::with_spacing(-30.0, 30.0, 0.01)?, params)
    }

    /// Even eigenvalues of `L0`, i.e. the poles of `R`.
    pub fn poles(&self) -> impl Iterator<Item = f64> + '_ {
        self.spectrum.iter().filter(|e| e.even).map(|e| e.value)
    }

    /// `((L0 - lambda)^-1 phi0^a22, phi0^(a12-1))`.
    pub fn r_lambda(&self, lambda: Complex64) -> Result<Complex64> {
        for e in &self.spectrum {
            let distance = (lambda - e.value).norm();
            if distance < self.pole_guard {
                return Err(Error::PoleProximity {
                    lambda,
                    pole: e.value,
                    distance,
                });
            }
        }
        let key = [lambda.re.to_bits(), lambda.im.to_bits()];
        if let Some(r) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(*r);
        }
        let r = self.solve_resolvent(lambda)?;
        let mut memo = self.memo.lock().expect("memo lock");
        if memo.len() >= MEMO_CAP {
            memo.clear();
        }
        memo.insert(key, r);
        Ok(r)
    }

    fn solve_resolvent(&self, lambda: Complex64) -> Result<Complex64> {
        // symmetric Thomas sweep with constant coupling; the weighted sum is
        // accumulated during back substitution
        let c = self.op.off[0];
        let m = self.rhs.len();
        let mut inv = vec![Complex64::default(); m];
        let mut y = vec![Complex64::default(); m];
        let scale = self.op.diag.iter().fold(c, |a, d| a.max(d.abs()));
        for i in 0..m {
            let mut d = self.op.diag[i] - lambda;
            let mut r = Complex64::from(self.rhs[i]);
            if i > 0 {
                d -= c * c * inv[i - 1];
                r -= c * y[i - 1] * inv[i - 1];
            }
            if d.norm() <= 1e-14 * scale {
                return Err(Error::SingularSystem { row: i, pivot: d.norm() });
            }
            inv[i] = d.inv();
            y[i] = r;
        }
        let mut x = y[m - 1] * inv[m - 1];
        let mut acc = x * self.weight[m - 1];
        for i in (0..m - 1).rev() {
            x = (y[i] - c * x) * inv[i];
            acc += x * self.weight[i];
        }
        Ok(acc)
    }

    /// `a11 M_a12 - a12 a21 R(lambda)`.
    pub fn e_lambda(&self, lambda: Complex64) -> Result<Complex64> {
        let p = &self.params;
        Ok(p.a11 * self.consts.mass_a12 - p.a12 * p.a21 * self.r_lambda(lambda)?)
    }

    /// Row-major dispersion matrix `E(lambda) / (2 sqrt(lambda + eps^alpha mu)) G_N(p, lambda) Q^(theta-1)`.
    pub fn n_matrix(&self, config: &PulseConfiguration, lambda: Complex64) -> Result<Vec<Complex64>> {
        let p = &self.params;
        let g = correlation_matrix(&config.p, lambda, p, true)?;
        let coef = self.e_lambda(lambda)? / (2.0 * (lambda + p.damping()).sqrt());
        let n = config.len();
        let qpow: Vec<f64> = config.q.iter().map(|&q| pow(q, p.theta() - 1.0)).collect();
        Ok((0..n * n)
            .map(|ij| coef * g.entries[ij] * qpow[ij % n])
            .collect())
    }

    /// `I + N_lambda`.
    pub fn shifted_matrix(&self, config: &PulseConfiguration, lambda: Complex64) -> Result<Vec<Complex64>> {
        let n = config.len();
        let mut m = self.n_matrix(config, lambda)?;
        for i in 0..n {
            m[i * n + i] += 1.0;
        }
        Ok(m)
    }

    /// `det(I + N_lambda)`.
    pub fn dispersion(&self, config: &PulseConfiguration, lambda: Complex64) -> Result<Complex64> {
        Ok(linalg::determinant(config.len(), &self.shifted_matrix(config, lambda)?))
    }
}

/// `R(lambda)` on a grid of spacing `dx` and `dx/2`, Richardson-extrapolated.
pub fn r_lambda_extrapolated(lambda: Complex64, half_width: f64, dx: f64, params: &ModelParams) -> Result<Complex64> {
    let coarse = NlepContext::new(SpatialGrid::with_spacing(-half_width, half_width, dx)?, params)?;
    let fine = NlepContext::new(SpatialGrid::with_spacing(-half_width, half_width, 0.5 * dx)?, params)?;
    Ok((4.0 * fine.r_lambda(lambda)? - coarse.r_lambda(lambda)?) / 3.0)
}

/// Parameters of the contour: vertical segment `Re = -eps^alpha nu`, `|Im| <= b`,
/// rays at angle `+-5 pi / 6`, closed by an arc of radius `arc_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    pub nu: f64,
    pub b: f64,
    pub n_vertical: usize,
    pub n_ray: usize,
    /// `None` chooses the radius automatically.
    #[serde(default)]
    pub arc_radius: Option<f64>,
}

impl ContourSpec {
    pub fn new(nu: f64, b: f64) -> Self {
        Self {
            nu,
            b,
            n_vertical: 128,
            n_ray: 128,
            arc_radius: None,
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < params.mu) {
            return Err(Error::InvalidConfig(format!(
                "contour nu = {} must lie in (0, mu = {})",
                self.nu, params.mu
            )));
        }
        if !(self.b > 0.0) {
            return Err(Error::InvalidConfig("contour b must be positive".into()));
        }
        if self.n_vertical < 64 || self.n_ray < 64 {
            return Err(Error::InvalidConfig("contour needs at least 64 samples per piece".into()));
        }
        Ok(())
    }

    pub fn abscissa(&self, params: &ModelParams) -> f64 {
        -params.eps.powf(params.alpha) * self.nu
    }

    /// Whether `lambda` lies strictly right of the (unbounded) contour.
    pub fn is_right_of(&self, lambda: Complex64, params: &ModelParams) -> bool {
        let a = self.abscissa(params);
        if lambda.im.abs() <= self.b {
            return lambda.re > a;
        }
        // ray through (a, +-b) with slope -1/sqrt(3) (angle 5 pi / 6 from the positive axis)
        let h = lambda.im.abs() - self.b;
        lambda.re > a - h * 3f64.sqrt()
    }
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self::new(0.5, 1.0)
    }
}

/// Closed, positively oriented polygon around the region right of the contour.
fn contour_points(spec: &ContourSpec, params: &ModelParams, radius: f64, level: u32) -> Vec<Complex64> {
    let a = spec.abscissa(params);
    let nv = spec.n_vertical << level;
    let nr = spec.n_ray << level;
    let dir_up = Complex64::from_polar(1.0, 5.0 * std::f64::consts::PI / 6.0);
    let dir_dn = dir_up.conj();
    let top = Complex64::new(a, spec.b);
    let bot = top.conj();
    // |c + s d| = R along a ray
    let ray_len = |c: Complex64, d: Complex64| {
        let bq = (c * d.conj()).re;
        -bq + (bq * bq - (c.norm_sqr() - radius * radius)).sqrt()
    };
    let s_max = ray_len(bot, dir_dn);
    let mut pts = Vec::with_capacity(nv + 3 * nr);
    for k in 0..nv {
        let t = k as f64 / nv as f64;
        pts.push(Complex64::new(a, spec.b * (1.0 - 2.0 * t)));
    }
    for k in 0..nr {
        let u = k as f64 / nr as f64;
        pts.push(bot + dir_dn * (s_max * u * u));
    }
    let start = bot + dir_dn * s_max;
    let end = start.conj();
    let (th0, th1) = (start.arg(), end.arg());
    for k in 0..nr {
        let t = k as f64 / nr as f64;
        pts.push(Complex64::from_polar(radius, th0 + (th1 - th0) * t));
    }
    for k in 0..nr {
        let u = 1.0 - k as f64 / nr as f64;
        pts.push(top + dir_up * (s_max * u * u));
    }
    pts
}

/// One evaluated point of the dispersion trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub lambda: Complex64,
    pub det: Complex64,
    /// Accumulated phase of `det` from the start of the contour.
    pub phase: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindingResult {
    /// `(1 / 2 pi i) \oint d log det` = zeros - poles inside.
    pub winding: i64,
    /// Poles of the dispersion inside (even `L0` eigenvalues right of the contour),
    /// each of order N.
    pub poles: Vec<f64>,
    /// Zeros inside: `winding + N * poles`.
    pub zero_count: i64,
    pub arc_radius: f64,
    pub samples: Vec<TraceSample>,
}

/// Largest spectral norm of `N_lambda` over `samples` points on the arc of `radius`.
fn arc_norm(ctx: &NlepContext, config: &PulseConfiguration, radius: f64, samples: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let n = config.len();
    for k in 0..=samples {
        let th = -0.97 * std::f64::consts::PI + 1.94 * std::f64::consts::PI * k as f64 / samples as f64;
        let m = ctx.n_matrix(config, Complex64::from_polar(radius, th))?;
        let s = faer::Mat::from_fn(n, n, |i, j| m[i * n + j])
            .singular_values()
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        worst = worst.max(s.iter().copied().fold(0.0, f64::max));
    }
    Ok(worst)
}

/// Closing radius such that `||N_lambda|| < 0.5` on the arc.
pub fn choose_arc_radius(ctx: &NlepContext, config: &PulseConfiguration, spec: &ContourSpec) -> Result<f64> {
    if let Some(r) = spec.arc_radius {
        let worst = arc_norm(ctx, config, r, 64)?;
        if worst >= 0.5 {
            return Err(Error::InvalidConfig(format!(
                "arc radius {r} too small: max |N| = {worst:.3} >= 0.5"
            )));
        }
        return Ok(r);
    }
    let min_r = 2.0 * (spec.b + spec.abscissa(&ctx.params).abs()) + 4.0;
    let mut r = min_r.max(8.0);
    for _ in 0..20 {
        if arc_norm(ctx, config, r, 64)? < 0.5 {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::InvalidConfig("no arc radius with |N| < 0.5 found".into()))
}

fn trace(
    ctx: &NlepContext,
    config: &PulseConfiguration,
    pts: &[Complex64],
    exec: Exec,
) -> Result<Vec<TraceSample>> {
    let dets = par::map(exec, pts, |&l| ctx.dispersion(config, l));
    let mut out = Vec::with_capacity(pts.len() + 1);
    let mut phase = 0.0;
    let mut prev: Option<Complex64> = None;
    for (l, d) in pts.iter().zip(dets) {
        let d = d?;
        if let Some(p) = prev {
            phase += (d / p).arg();
        } else {
            phase = d.arg();
        }
        prev = Some(d);
        out.push(TraceSample {
            lambda: *l,
            det: d,
            phase,
        });
    }
    // close the loop
    let first = out[0];
    let last = out[out.len() - 1];
    out.push(TraceSample {
        lambda: first.lambda,
        det: first.det,
        phase: last.phase + (first.det / last.det).arg(),
    });
    Ok(out)
}

const MAX_LEVELS: u32 = 6;

/// Winding number of `det(I + N_lambda)` around the region right of the contour,
/// with sample doubling until the integer is stable and no phase jump exceeds `pi/3`.
pub fn count_roots_right_of_contour(
    ctx: &NlepContext,
    config: &PulseConfiguration,
    spec: &ContourSpec,
    exec: Exec,
) -> Result<WindingResult> {
    spec.validate(&ctx.params)?;
    let radius = choose_arc_radius(ctx, config, spec)?;
    let mut previous: Option<i64> = None;
    let mut last_len = 0;
    for level in 0..=MAX_LEVELS {
        let pts = contour_points(spec, &ctx.params, radius, level);
        let samples = trace(ctx, config, &pts, exec)?;
        last_len = samples.len();
        let min_det = samples.iter().map(|s| s.det.norm()).fold(f64::INFINITY, f64::min);
        if min_det < 1e-10 {
            return Err(Error::RootOnContour(min_det));
        }
        let max_jump = samples
            .windows(2)
            .map(|w| (w[1].phase - w[0].phase).abs())
            .fold(0.0, f64::max);
        let total = samples[samples.len() - 1].phase - samples[0].phase;
        let w = (total / (2.0 * std::f64::consts::PI)).round() as i64;
        let integral = ((total / (2.0 * std::f64::consts::PI)) - w as f64).abs() < 1e-6;
        if integral && max_jump < std::f64::consts::FRAC_PI_3 && previous == Some(w) {
            let poles: Vec<f64> = ctx
                .poles()
                .filter(|&x| x < radius && spec.is_right_of(Complex64::from(x), &ctx.params))
                .collect();
            return Ok(WindingResult {
                winding: w,
                zero_count: w + (config.len() * poles.len()) as i64,
                poles,
                arc_radius: radius,
                samples,
            });
        }
        previous = integral.then_some(w);
    }
    Err(Error::IndeterminateWinding { samples: last_len })
}

/// Secant iteration on the dispersion function.
pub fn refine_root(ctx: &NlepContext, config: &PulseConfiguration, seed: Complex64) -> Result<(Complex64, f64)> {
    let fail = |reason: String| Error::RefineFailed { seed, reason };
    let branch = -ctx.params.damping();
    let mut x0 = seed;
    let mut x1 = seed + 1e-4 * (1.0 + seed.norm());
    let mut f0 = ctx.dispersion(config, x0)?;
    let mut f1 = ctx.dispersion(config, x1)?;
    for _ in 0..40 {
        if f1.norm() <= 1e-10 {
            return Ok((x1, f1.norm()));
        }
        let denom = f1 - f0;
        if denom.norm() == 0.0 {
            return Err(fail("stagnated".into()));
        }
        let mut x2 = x1 - f1 * (x1 - x0) / denom;
        if seed.im == 0.0 {
            x2.im = 0.0;
        }
        if x2.re <= branch && x2.im.abs() < 1e-12 {
            return Err(fail("converged to the branch cut".into()));
        }
        let f2 = ctx.dispersion(config, x2).map_err(|e| fail(e.to_string()))?;
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
    }
    if f1.norm() <= 1e-10 {
        Ok((x1, f1.norm()))
    } else {
        Err(fail(format!("|det| = {:.3e} after 40 iterations", f1.norm())))
    }
}

/// Rectangle scanned for dispersion roots (upper half; conjugates are added).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
    pub cells_re: usize,
    pub cells_im: usize,
}

impl ScanRegion {
    /// From just right of the branch point to `extent`.
    pub fn around_origin(params: &ModelParams, extent: f64) -> Self {
        Self {
            re_min: -0.95 * params.damping(),
            re_max: extent,
            im_max: extent,
            cells_re: 24,
            cells_im: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub lambda: Complex64,
    pub residual: f64,
}

/// Finds roots by the argument principle on each scan cell, then refines them by secant.
pub fn locate_roots(
    ctx: &NlepContext,
    config: &PulseConfiguration,
    region: &ScanRegion,
    exec: Exec,
) -> Result<Vec<Root>> {
    const SUB: usize = 4;
    let (nx, ny) = (region.cells_re * SUB, region.cells_im * SUB);
    let hx = (region.re_max - region.re_min) / nx as f64;
    // shift so the real axis runs through the middle of the first cell row
    let im0 = -0.5 * region.im_max / region.cells_im as f64;
    let hy = (region.im_max - im0) / ny as f64;
    let node = |i: usize, j: usize| Complex64::new(region.re_min + i as f64 * hx, im0 + j as f64 * hy);
    let values = par::map_range(exec, (nx + 1) * (ny + 1), |k| {
        let (i, j) = (k % (nx + 1), k / (nx + 1));
        ctx.dispersion(config, node(i, j)).ok()
    });
    let at = |i: usize, j: usize| values[j * (nx + 1) + i];

    let mut seeds = Vec::new();
    for cj in 0..region.cells_im {
        for ci in 0..region.cells_re {
            let (i0, j0) = (ci * SUB, cj * SUB);
            let mut path = Vec::with_capacity(4 * SUB + 1);
            for s in 0..SUB {
                path.push((i0 + s, j0));
            }
            for s in 0..SUB {
                path.push((i0 + SUB, j0 + s));
            }
            for s in 0..SUB {
                path.push((i0 + SUB - s, j0 + SUB));
            }
            for s in 0..SUB {
                path.push((i0, j0 + SUB - s));
            }
            path.push((i0, j0));
            let mut total = 0.0;
            let mut ok = true;
            for w in path.windows(2) {
                match (at(w[0].0, w[0].1), at(w[1].0, w[1].1)) {
                    (Some(a), Some(b)) => total += (b / a).arg(),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let wind = (total / (2.0 * std::f64::consts::PI)).round() as i64;
            if wind > 0 {
                let c = node(i0 + SUB / 2, j0 + SUB / 2);
                seeds.push(if c.im.abs() < hy * SUB as f64 { Complex64::new(c.re, 0.0) } else { c });
            }
        }
    }

    let refined = par::map(exec, &seeds, |&s| refine_root(ctx, config, s));
    let mut roots: Vec<Root> = Vec::new();
    for (seed, r) in seeds.iter().zip(refined) {
        let r = match r {
            Ok(r) => r,
            Err(_) if seed.im != 0.0 => continue,
            // a real-axis seed may belong to a complex pair straddling the axis
            Err(_) => match refine_root(ctx, config, *seed + Complex64::new(0.0, hy)) {
                Ok(r) => r,
                Err(_) => continue,
            },
        };
        let (mut lambda, residual) = r;
        if lambda.im.abs() < 1e-9 {
            lambda.im = 0.0;
        }
        for cand in [lambda, lambda.conj()] {
            if !roots.iter().any(|x| (x.lambda - cand).norm() < 1e-6 * (1.0 + cand.norm())) {
                roots.push(Root { lambda: cand, residual });
            }
        }
    }
    roots.sort_by(|a, b| b.lambda.re.total_cmp(&a.lambda.re).then(b.lambda.im.total_cmp(&a.lambda.im)));
    Ok(roots)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Admissible,
    Inadmissible,
    Unknown,
}

/// Result of the three-part admissibility check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub roots: Vec<Root>,
    pub winding: Option<i64>,
    pub zero_count: Option<i64>,
    pub poles: Vec<f64>,
    pub arc_radius: Option<f64>,
    /// Smallest `C` with `|(I + N)^-1| <= C (1 + eps / |k|)^-1` on the sampled contour.
    pub resolvent_constant: Option<f64>,
    pub spacing: SpacingReport,
    pub spectrum_ok: Option<bool>,
    pub resolvent_ok: Option<bool>,
    pub spacing_ok: bool,
    pub verdict: Verdict,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub trace: Vec<TraceSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibilityOptions {
    pub ell: f64,
    pub delta: f64,
    pub resolvent_cap: f64,
    pub scan_extent: f64,
}

impl Default for AdmissibilityOptions {
    fn default() -> Self {
        Self {
            ell: crate::profiles::DEFAULT_ELL,
            delta: 1.0,
            resolvent_cap: 1e3,
            scan_extent: 3.0,
        }
    }
}

fn resolvent_constant(ctx: &NlepContext, config: &PulseConfiguration, samples: &[TraceSample], exec: Exec) -> Result<f64> {
    let n = config.len();
    let eps = ctx.params.eps;
    let vals = par::map(exec, samples, |s| -> Result<f64> {
        let m = ctx.shifted_matrix(config, s.lambda)?;
        let k = k_lambda(s.lambda, &ctx.params)?;
        Ok(linalg::inverse_norm2(n, &m)? * (1.0 + eps / k.norm()))
    });
    vals.into_iter().try_fold(0.0f64, |acc, v| Ok(acc.max(v?)))
}

pub fn check_admissibility(
    ctx: &NlepContext,
    config: &PulseConfiguration,
    spec: &ContourSpec,
    opts: &AdmissibilityOptions,
    exec: Exec,
) -> Result<SpectrumReport> {
    spec.validate(&ctx.params)?;
    let spacing = spacing_checks(&config.p, &ctx.params, opts.ell, opts.delta);
    let spacing_ok = spacing.in_k_ell;
    let mut notes = Vec::new();

    let winding = match count_roots_right_of_contour(ctx, config, spec, exec) {
        Ok(w) => Some(w),
        Err(e @ (Error::RootOnContour(_) | Error::IndeterminateWinding { .. })) => {
            notes.push(e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    let roots = locate_roots(ctx, config, &ScanRegion::around_origin(&ctx.params, opts.scan_extent), exec)?;
    let (resolvent, trace) = match &winding {
        Some(w) => (Some(resolvent_constant(ctx, config, &w.samples, exec)?), w.samples.clone()),
        None => (None, Vec::new()),
    };
    let spectrum_ok = winding.as_ref().map(|w| w.zero_count == 0);
    let resolvent_ok = resolvent.map(|c| c.is_finite() && c <= opts.resolvent_cap);
    let verdict = match (spectrum_ok, resolvent_ok) {
        (Some(true), Some(true)) if spacing_ok => Verdict::Admissible,
        (Some(false), _) | (_, Some(false)) => Verdict::Inadmissible,
        _ if !spacing_ok => Verdict::Inadmissible,
        _ => Verdict::Unknown,
    };
    if let Some(w) = &winding {
        let located = roots.iter().filter(|r| spec.is_right_of(r.lambda, &ctx.params)).count() as i64;
        if located != w.zero_count {
            notes.push(format!(
                "{} zeros counted right of the contour, {} located by the scan",
                w.zero_count, located
            ));
        }
    }
    Ok(SpectrumReport {
        roots,
        winding: winding.as_ref().map(|w| w.winding),
        zero_count: winding.as_ref().map(|w| w.zero_count),
        poles: winding.as_ref().map(|w| w.poles.clone()).unwrap_or_default(),
        arc_radius: winding.as_ref().map(|w| w.arc_radius),
        resolvent_constant: resolvent,
        spacing,
        spectrum_ok,
        resolvent_ok,
        spacing_ok,
        verdict,
        notes,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_geometry() {
        let p = ModelParams::default();
        let spec = ContourSpec::default();
        let a = spec.abscissa(&p);
        assert!(spec.is_right_of(Complex64::new(a + 1e-3, 0.5), &p));
        assert!(!spec.is_right_of(Complex64::new(a - 1e-3, 0.5), &p));
        // on the upper ray the boundary moves left
        assert!(spec.is_right_of(Complex64::new(a - 1.0, spec.b + 2.0), &p));
        let pts = contour_points(&spec, &p, 10.0, 0);
        assert!(pts.iter().all(|z| z.norm() <= 10.0 + 1e-9));
        assert!(spec.validate(&p).is_ok());
        let bad = ContourSpec { nu: 1.5, ..spec };
        assert!(bad.validate(&p).is_err());
    }

    #[test]
    fn r_at_zero_gray_scott() {
        let p = ModelParams::default();
        let r = r_lambda_extrapolated(Complex64::new(0.0, 0.0), 30.0, 0.02, &p).unwrap();
        assert!((r.re - 6.0).abs() < 1e-6, "{r}");
    }
}
