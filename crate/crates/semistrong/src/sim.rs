//! Direct simulation of the full slow-fast system with a Crank–Nicolson /
//! Adams–Bashforth IMEX scheme, pulse tracking and the remainder diagnostic.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::linalg::{Tridiagonal, TridiagonalLu};
use crate::mean_field::{solve_mean_field_with, MeanFieldKernel, PulseConfiguration};
use crate::params::ModelParams;
use crate::profiles::{build_profile, is_integral, x_norm_parts, PulseConstants, XNormParts, DEFAULT_ELL};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Zero flux for both components.
    #[default]
    Neumann,
    /// `U` pinned to its far-field value, `V` to zero.
    DirichletEquilibrium,
}

/// Smooth random bump added to the `V` component around the first pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Target X-norm of the perturbation.
    pub amplitude: f64,
    pub wavelength: f64,
    pub seed: u64,
    /// Gaussian envelope width.
    #[serde(default = "default_envelope")]
    pub width: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_envelope() -> f64 {
    3.0
}

fn default_modes() -> usize {
    3
}

impl Perturbation {
    pub fn new(amplitude: f64, wavelength: f64, seed: u64) -> Self {
        Self {
            amplitude,
            wavelength,
            seed,
            width: default_envelope(),
            modes: default_modes(),
        }
    }

    /// Unnormalised shape: `modes` random-phase sinusoids with wavelengths
    /// `wavelength (1 + 0.3 k)` under a Gaussian envelope about `center`.
    pub fn shape(&self, center: f64, grid: SpatialGrid) -> Result<Field> {
        let dx = grid.dx();
        if !(self.wavelength >= 4.0 * dx) {
            return Err(Error::Perturbation {
                requested: self.amplitude,
                reason: format!("wavelength {} not resolved by dx = {dx}", self.wavelength),
            });
        }
        if !(self.width > 2.0 * dx) || !grid.contains(center, 3.0 * self.width) {
            return Err(Error::Perturbation {
                requested: self.amplitude,
                reason: format!("envelope of width {} does not fit on the grid", self.width),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let modes: Vec<(f64, f64, f64)> = (0..self.modes)
            .map(|k| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (a, self.wavelength * (1.0 + 0.3 * k as f64), phase)
            })
            .collect();
        Ok(Field::from_fn(grid, |x| {
            let env = (-((x - center) / self.width).powi(2)).exp();
            env * modes
                .iter()
                .map(|(a, wl, ph)| a * (std::f64::consts::TAU * x / wl + ph).sin())
                .sum::<f64>()
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between snapshots / tracked samples.
    pub output_stride: usize,
    pub boundary: Boundary,
    pub perturbation: Option<Perturbation>,
    /// Pulses are maxima of `V` above `track_threshold * max V`.
    pub track_threshold: f64,
    pub ell: f64,
    /// Explicit-part limit: `dt * max nonlinear rate <= cfl`.
    pub cfl: f64,
    pub kernel: MeanFieldKernel,
    /// Compute the remainder diagnostic at every sample.
    pub remainder: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 10.0,
            output_stride: 1000,
            boundary: Boundary::Neumann,
            perturbation: None,
            track_threshold: 0.5,
            ell: DEFAULT_ELL,
            cfl: 0.5,
            kernel: MeanFieldKernel::Exact,
            remainder: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.cfl > 0.0) {
            return Err(Error::InvalidConfig("dt, cfl must be positive and t_end non-negative".into()));
        }
        if self.output_stride == 0 {
            return Err(Error::InvalidConfig("output_stride must be at least 1".into()));
        }
        if !(self.track_threshold > 0.0) {
            return Err(Error::InvalidConfig("track_threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }
}

/// Simulation state; includes the previous explicit terms so a restart continues bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub u: Field,
    pub v: Field,
    pub t: f64,
    pub step: u64,
    #[serde(default)]
    pub previous: Option<(Vec<f64>, Vec<f64>)>,
}

impl SimState {
    pub fn new(u: Field, v: Field) -> Result<Self> {
        if u.grid != v.grid {
            return Err(Error::Mismatch("U and V on different grids".into()));
        }
        Ok(Self {
            u,
            v,
            t: 0.0,
            step: 0,
            previous: None,
        })
    }

    pub fn grid(&self) -> SpatialGrid {
        self.u.grid
    }

    /// Homogeneous equilibrium `(eps^(-alpha/2) rho / mu, 0)`.
    pub fn equilibrium(grid: SpatialGrid, params: &ModelParams) -> Result<Self> {
        Self::new(Field::from_fn(grid, |_| params.far_field()), Field::zeros(grid))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.u.grid.validate()?;
        if s.u.grid != s.v.grid || s.u.values.len() != s.u.grid.n || s.v.values.len() != s.v.grid.n {
            return Err(Error::Parse("inconsistent state grid".into()));
        }
        Ok(s)
    }

    /// `x, U, V` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,U,V\n");
        for i in 0..self.u.grid.n {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e}\n",
                self.u.grid.x(i),
                self.u.values[i],
                self.v.values[i]
            ));
        }
        out
    }
}

/// Grid reaching `slow_lengths * eps^-(1+alpha/2)` beyond the outer pulses.
pub fn dns_grid(p: &[f64], params: &ModelParams, dx: f64, slow_lengths: f64) -> Result<SpatialGrid> {
    if p.is_empty() {
        return Err(Error::NoPulses);
    }
    let pad = slow_lengths * params.slow_length();
    SpatialGrid::with_spacing(p[0] - pad, p[p.len() - 1] + pad, dx)
}

/// Profile plus the optional seeded perturbation in the `V` component around `p_1`.
pub fn init_from_profile(
    config: &PulseConfiguration,
    grid: SpatialGrid,
    params: &ModelParams,
    perturbation: Option<&Perturbation>,
    ell: f64,
) -> Result<SimState> {
    let (u, mut v) = build_profile(config, grid, params)?;
    if let Some(pert) = perturbation {
        if !(pert.amplitude >= 0.0) {
            return Err(Error::Perturbation {
                requested: pert.amplitude,
                reason: "amplitude must be non-negative".into(),
            });
        }
        let shape = pert.shape(config.p[0], grid)?;
        let base = x_norm_parts(&Field::zeros(grid), &shape, &config.p, params, ell)?.total();
        if !(base > 0.0) {
            return Err(Error::Perturbation {
                requested: pert.amplitude,
                reason: "perturbation shape has zero norm".into(),
            });
        }
        let s = pert.amplitude / base;
        v.values.iter_mut().zip(&shape.values).for_each(|(a, b)| *a += s * b);
    }
    SimState::new(u, v)
}

/// Pre-factored IMEX stepper.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub grid: SpatialGrid,
    pub params: ModelParams,
    pub dt: f64,
    pub boundary: Boundary,
    pub cfl: f64,
    /// Test hook: drop the nonlinear and forcing terms.
    pub reaction: bool,
    lu_u: TridiagonalLu<f64>,
    lu_v: TridiagonalLu<f64>,
    diff_u: f64,
    decay_u: f64,
}

fn implicit_matrix(n: usize, d: f64, decay: f64, dt: f64, boundary: Boundary) -> Tridiagonal<f64> {
    let h = 0.5 * dt;
    let mut t = Tridiagonal {
        lower: vec![-h * d; n - 1],
        diag: vec![1.0 + h * (2.0 * d + decay); n],
        upper: vec![-h * d; n - 1],
    };
    match boundary {
        Boundary::Neumann => {
            t.upper[0] *= 2.0;
            t.lower[n - 2] *= 2.0;
        }
        Boundary::DirichletEquilibrium => {
            t.diag[0] = 1.0;
            t.upper[0] = 0.0;
            t.diag[n - 1] = 1.0;
            t.lower[n - 2] = 0.0;
        }
    }
    t
}

fn checked_pow(x: f64, e: f64, node: usize) -> Result<f64> {
    if is_integral(e) && e.abs() < 64.0 {
        Ok(x.powi(e as i32))
    } else if x < 0.0 {
        Err(Error::NegativeBase { node, value: x })
    } else {
        Ok(x.powf(e))
    }
}

impl Stepper {
    pub fn new(grid: SpatialGrid, params: &ModelParams, dt: f64, boundary: Boundary) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        let dx2 = grid.dx() * grid.dx();
        let diff_u = 1.0 / (params.eps * params.eps * dx2);
        let decay_u = params.damping();
        let lu_u = implicit_matrix(grid.n, diff_u, decay_u, dt, boundary).factor()?;
        let lu_v = implicit_matrix(grid.n, 1.0 / dx2, 1.0, dt, boundary).factor()?;
        Ok(Self {
            grid,
            params: *params,
            dt,
            boundary,
            cfl: 0.5,
            reaction: true,
            lu_u,
            lu_v,
            diff_u,
            decay_u,
        })
    }

    /// Explicit terms `(-U^a11 V^a12 / eps + eps^(alpha/2) rho, U^a21 V^a22)` and the largest
    /// pointwise rate of the nonlinear part.
    fn explicit_terms(&self, u: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let n = u.len();
        let p = &self.params;
        if !self.reaction {
            return Ok((vec![0.0; n], vec![0.0; n], 0.0));
        }
        let forcing = p.forcing();
        let mut fu = Vec::with_capacity(n);
        let mut fv = Vec::with_capacity(n);
        let mut rate: f64 = 0.0;
        for i in 0..n {
            let (a, b) = (u[i], v[i]);
            let ua11 = checked_pow(a, p.a11, i)?;
            let vb12 = checked_pow(b, p.a12, i)?;
            let ua21 = checked_pow(a, p.a21, i)?;
            let vb22 = checked_pow(b, p.a22, i)?;
            fu.push(-ua11 * vb12 / p.eps + forcing);
            fv.push(ua21 * vb22);
            let ru = p.a11 * checked_pow(a, p.a11 - 1.0, i)? * vb12 / p.eps;
            let rv = p.a22 * ua21 * checked_pow(b, p.a22 - 1.0, i)?;
            rate = rate.max(ru.abs()).max(rv.abs());
        }
        Ok((fu, fv, rate))
    }

    fn explicit_linear(&self, w: &[f64], d: f64, decay: f64) -> Vec<f64> {
        let n = w.len();
        let h = 0.5 * self.dt;
        (0..n)
            .map(|i| {
                let lap = if i == 0 {
                    2.0 * (w[1] - w[0])
                } else if i == n - 1 {
                    2.0 * (w[n - 2] - w[n - 1])
                } else {
                    w[i - 1] - 2.0 * w[i] + w[i + 1]
                };
                w[i] + h * (d * lap - decay * w[i])
            })
            .collect()
    }

    /// One CN/AB2 step (forward Euler for the explicit part on the first step).
    pub fn step(&self, state: &mut SimState) -> Result<()> {
        if state.grid() != self.grid {
            return Err(Error::Mismatch("state grid differs from stepper grid".into()));
        }
        let (fu, fv, rate) = self.explicit_terms(&state.u.values, &state.v.values)?;
        if self.dt * rate > self.cfl {
            return Err(Error::Cfl {
                dt: self.dt,
                limit: self.cfl / rate,
            });
        }
        let (gu, gv): (Vec<f64>, Vec<f64>) = match &state.previous {
            Some((pu, pv)) => (
                fu.iter().zip(pu).map(|(a, b)| 1.5 * a - 0.5 * b).collect(),
                fv.iter().zip(pv).map(|(a, b)| 1.5 * a - 0.5 * b).collect(),
            ),
            None => (fu.clone(), fv.clone()),
        };
        let dx2 = self.grid.dx() * self.grid.dx();
        let mut ru = self.explicit_linear(&state.u.values, self.diff_u, self.decay_u);
        let mut rv = self.explicit_linear(&state.v.values, 1.0 / dx2, 1.0);
        for i in 0..ru.len() {
            ru[i] += self.dt * gu[i];
            rv[i] += self.dt * gv[i];
        }
        if self.boundary == Boundary::DirichletEquilibrium {
            let n = ru.len();
            let far = if self.reaction { self.params.far_field() } else { 0.0 };
            ru[0] = far;
            ru[n - 1] = far;
            rv[0] = 0.0;
            rv[n - 1] = 0.0;
        }
        self.lu_u.solve_in_place(&mut ru);
        self.lu_v.solve_in_place(&mut rv);
        let t_next = state.t + self.dt;
        if let Some(node) = ru.iter().chain(&rv).position(|x| !x.is_finite()) {
            return Err(Error::BlowUp {
                node: node % self.grid.n,
                t: t_next,
            });
        }
        state.u.values = ru;
        state.v.values = rv;
        state.previous = Some((fu, fv));
        state.step += 1;
        state.t = (state.step as f64) * self.dt;
        Ok(())
    }
}

/// Full width at half maximum of the scaled pulse shape.
pub fn pulse_fwhm(params: &ModelParams) -> f64 {
    let b = params.a22 - 1.0;
    4.0 / b * (2f64.powf(0.5 * b)).acosh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracked {
    pub positions: Vec<f64>,
    /// `U` interpolated at each position.
    pub amplitudes: Vec<f64>,
    pub peaks: Vec<f64>,
    /// Some peak is wider than 1.5 pulse widths at half maximum (likely merged pulses).
    pub merged: bool,
}

/// Local maxima of `V` above `threshold * max V`, refined by a 3-point parabola.
pub fn track_pulses(state: &SimState, params: &ModelParams, threshold: f64) -> Tracked {
    let v = &state.v.values;
    let grid = state.grid();
    let dx = grid.dx();
    let n = v.len();
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Tracked {
        positions: Vec::new(),
        amplitudes: Vec::new(),
        peaks: Vec::new(),
        merged: false,
    };
    if !(vmax > 0.0) {
        return out;
    }
    let level = threshold * vmax;
    let fwhm = pulse_fwhm(params);
    // (position, peak value, half-maximum width)
    let mut found: Vec<(f64, f64, f64)> = Vec::new();
    for i in 1..n - 1 {
        if !(v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > level) {
            continue;
        }
        let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        let half = 0.5 * b;
        let left = (0..i).rev().find(|&k| v[k] < half).unwrap_or(0);
        let right = (i..n).find(|&k| v[k] < half).unwrap_or(n - 1);
        found.push((grid.x(i) + shift * dx, b - 0.25 * (a - c) * shift, (right - left) as f64 * dx));
    }
    // maxima closer than one pulse width are one (merged) pulse
    let mut kept: Vec<(f64, f64, f64)> = Vec::new();
    for f in found {
        match kept.last_mut() {
            Some(last) if f.0 - last.0 < fwhm => {
                out.merged = true;
                if f.1 > last.1 {
                    *last = f;
                }
            }
            _ => kept.push(f),
        }
    }
    for (x, peak, width) in kept {
        if width > 1.5 * fwhm + 2.0 * dx {
            out.merged = true;
        }
        out.positions.push(x);
        out.amplitudes.push(state.u.interpolate(x));
        out.peaks.push(peak);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Remainder {
    pub norm: f64,
    pub parts: XNormParts,
    pub config: PulseConfiguration,
}

/// `x_norm(state - Phi(p_hat))` with `Phi` rebuilt from the tracked positions.
pub fn remainder_diagnostic(
    state: &SimState,
    params: &ModelParams,
    consts: &PulseConstants,
    kernel: MeanFieldKernel,
    threshold: f64,
    ell: f64,
) -> Result<Remainder> {
    let tracked = track_pulses(state, params, threshold);
    if tracked.positions.is_empty() {
        return Err(Error::NoPulses);
    }
    let warm = Some(tracked.amplitudes.as_slice());
    let config = solve_mean_field_with(&tracked.positions, params, consts, kernel, warm)?.config;
    let (phi1, phi2) = build_profile(&config, state.grid(), params)?;
    let diff = |a: &Field, b: &Field| Field {
        grid: a.grid,
        values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
    };
    let parts = x_norm_parts(&diff(&state.u, &phi1), &diff(&state.v, &phi2), &config.p, params, ell)?;
    Ok(Remainder {
        norm: parts.total(),
        parts,
        config,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub positions: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub remainder: Option<f64>,
    pub merged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub series: Vec<SeriesRow>,
    pub steps: u64,
    pub final_state: SimState,
    /// Messages for samples where tracking or the diagnostic failed.
    pub warnings: Vec<String>,
}

/// Tracked series as CSV: `t, p_1.., q_1.., remainder_norm` (pulse count from the first row).
pub fn series_to_csv(series: &[SeriesRow]) -> String {
    let n = series.iter().map(|r| r.positions.len()).max().unwrap_or(0);
    let mut out = String::from("t");
    for j in 1..=n {
        out.push_str(&format!(",p_{j}"));
    }
    for j in 1..=n {
        out.push_str(&format!(",q_{j}"));
    }
    out.push_str(",remainder_norm\n");
    for r in series {
        out.push_str(&format!("{:.12e}", r.t));
        for vals in [&r.positions, &r.amplitudes] {
            for j in 0..n {
                match vals.get(j) {
                    Some(v) => out.push_str(&format!(",{v:.15e}")),
                    None => out.push(','),
                }
            }
        }
        match r.remainder {
            Some(v) => out.push_str(&format!(",{v:.15e}\n")),
            None => out.push_str(",\n"),
        }
    }
    out
}

/// Steps `state` to `config.t_end`, sampling every `output_stride` steps (and at the
/// start and end). `observer` sees every sampled state.
pub fn run(
    mut state: SimState,
    config: &SimConfig,
    params: &ModelParams,
    mut observer: impl FnMut(&SimState, &SeriesRow) -> Result<()>,
) -> Result<RunSummary> {
    config.validate()?;
    let consts = PulseConstants::new(params)?;
    let mut stepper = Stepper::new(state.grid(), params, config.dt, config.boundary)?;
    stepper.cfl = config.cfl;
    let total = config.total_steps();
    let mut series = Vec::new();
    let mut warnings = Vec::new();

    let sample = |state: &SimState, warnings: &mut Vec<String>| -> SeriesRow {
        let tracked = track_pulses(state, params, config.track_threshold);
        let remainder = if config.remainder && !tracked.positions.is_empty() {
            match remainder_diagnostic(state, params, &consts, config.kernel, config.track_threshold, config.ell) {
                Ok(r) => Some(r.norm),
                Err(e) => {
                    warnings.push(format!("t = {}: {e}", state.t));
                    None
                }
            }
        } else {
            None
        };
        if tracked.positions.is_empty() {
            warnings.push(format!("t = {}: no pulses found", state.t));
        }
        if tracked.merged {
            warnings.push(format!("t = {}: merged pulse detected", state.t));
        }
        SeriesRow {
            t: state.t,
            positions: tracked.positions,
            amplitudes: tracked.amplitudes,
            remainder,
            merged: tracked.merged,
        }
    };

    let start = state.step;
    let first = sample(&state, &mut warnings);
    observer(&state, &first)?;
    series.push(first);
    while state.step - start < total {
        stepper.step(&mut state)?;
        let done = state.step - start;
        if done % config.output_stride as u64 == 0 || done == total {
            let row = sample(&state, &mut warnings);
            observer(&state, &row)?;
            series.push(row);
        }
    }
    Ok(RunSummary {
        series,
        steps: state.step - start,
        final_state: state,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fwhm_gray_scott() {
        let p = ModelParams::default();
        // sech^2(x/2) = 1/2 at x = 2 acosh(sqrt 2)
        assert!((pulse_fwhm(&p) - 4.0 * 2f64.sqrt().acosh()).abs() < 1e-12);
    }

    #[test]
    fn negative_base_is_reported() {
        assert!(checked_pow(-1.0, 2.0, 0).is_ok());
        assert!(matches!(checked_pow(-1.0, 1.5, 3), Err(Error::NegativeBase { node: 3, .. })));
    }
}
