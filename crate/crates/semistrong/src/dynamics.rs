//! Reduced N-pulse dynamics: the interaction matrix, two velocity backends and
//! an adaptive RK4 integrator with guard events.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::mean_field::{check_positions, solve_mean_field_with, MeanFieldKernel, PulseConfiguration};
use crate::par::{self, Exec};
use crate::params::ModelParams;
use crate::profiles::{build_profile, pow, PulseConstants, DEFAULT_ELL, PROFILE_MARGIN};

/// Antisymmetric pairwise interaction matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl InteractionMatrix {
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.entries[k * self.n + j]
    }
}

/// `(a21/(a22+1)) M_a12 M_(a22+1) / (2 ||phi0'||^2)`.
pub fn interaction_prefactor(params: &ModelParams, consts: &PulseConstants) -> f64 {
    params.a21 / (params.a22 + 1.0) * consts.mass_a12 * consts.mass_a22p1 / (2.0 * consts.deriv_norm_sq)
}

pub fn interaction_matrix(p: &[f64], params: &ModelParams, consts: &PulseConstants) -> InteractionMatrix {
    let n = p.len();
    let c = interaction_prefactor(params, consts);
    let k0 = params.k0();
    let mut entries = vec![0.0; n * n];
    for k in 0..n {
        for j in 0..k {
            let a = c * (-k0 * (p[k] - p[j]).abs()).exp();
            entries[k * n + j] = a;
            entries[j * n + k] = -a;
        }
    }
    InteractionMatrix { n, entries }
}

/// `eps Q^-1 A q^theta`.
pub fn velocities_matrix(config: &PulseConfiguration, params: &ModelParams, consts: &PulseConstants) -> Vec<f64> {
    let a = interaction_matrix(&config.p, params, consts);
    let theta = params.theta();
    let qt: Vec<f64> = config.q.iter().map(|&q| pow(q, theta)).collect();
    (0..a.n)
        .map(|k| {
            let s: f64 = (0..a.n).map(|j| a.get(k, j) * qt[j]).sum();
            params.eps * s / config.q[k]
        })
        .collect()
}

/// `(a21/(a22+1)) (M_(a22+1) / ||phi0'||^2) Phi1'(p_j) / q_j` with `Phi1'` from centred
/// differences of the profile built on `grid`.
pub fn velocities_gradient(
    config: &PulseConfiguration,
    grid: SpatialGrid,
    params: &ModelParams,
    consts: &PulseConstants,
) -> Result<Vec<f64>> {
    let (phi1, _) = build_profile(config, grid, params)?;
    let c = params.a21 / (params.a22 + 1.0) * consts.mass_a22p1 / consts.deriv_norm_sq;
    let dx = grid.dx();
    let u = &phi1.values;
    let slope = |i: usize| (u[i + 1] - u[i - 1]) / (2.0 * dx);
    Ok(config
        .p
        .iter()
        .zip(&config.q)
        .map(|(&p, &q)| {
            let t = (p - grid.x0) / dx;
            let i = t.floor() as usize;
            let w = t - i as f64;
            c * ((1.0 - w) * slope(i) + w * slope(i + 1)) / q
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Matrix,
    Gradient,
}

/// Grid used by the gradient backend: `[p_1 - pad, p_N + pad]` at spacing `dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientGrid {
    pub dx: f64,
    /// Padding in units of the slow length `eps^-(1+alpha/2)`.
    pub pad_slow_lengths: f64,
}

impl Default for GradientGrid {
    fn default() -> Self {
        Self {
            dx: 0.02,
            pad_slow_lengths: 8.0,
        }
    }
}

impl GradientGrid {
    pub fn grid_for(&self, p: &[f64], params: &ModelParams) -> Result<SpatialGrid> {
        let pad = (self.pad_slow_lengths * params.slow_length()).max(2.0 * PROFILE_MARGIN);
        SpatialGrid::with_spacing(p[0] - pad, p[p.len() - 1] + pad, self.dx)
    }
}

/// Stateless velocity evaluator with the mean field re-solved at each call.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub params: ModelParams,
    pub consts: PulseConstants,
    pub backend: Backend,
    pub kernel: MeanFieldKernel,
    pub gradient_grid: GradientGrid,
}

impl VelocityField {
    pub fn new(params: &ModelParams, backend: Backend, kernel: MeanFieldKernel) -> Result<Self> {
        Ok(Self {
            params: *params,
            consts: PulseConstants::new(params)?,
            backend,
            kernel,
            gradient_grid: GradientGrid::default(),
        })
    }

    pub fn solve(&self, p: &[f64], warm: Option<&[f64]>) -> Result<PulseConfiguration> {
        Ok(solve_mean_field_with(p, &self.params, &self.consts, self.kernel, warm)?.config)
    }

    pub fn velocities_of(&self, config: &PulseConfiguration) -> Result<Vec<f64>> {
        match self.backend {
            Backend::Matrix => Ok(velocities_matrix(config, &self.params, &self.consts)),
            Backend::Gradient => {
                let grid = self.gradient_grid.grid_for(&config.p, &self.params)?;
                velocities_gradient(config, grid, &self.params, &self.consts)
            }
        }
    }

    /// Returns the velocities and the amplitudes they were computed with.
    pub fn eval(&self, p: &[f64], warm: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
        let config = self.solve(p, warm)?;
        let v = self.velocities_of(&config)?;
        Ok((v, config.q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SpacingFloor,
    DomainExit,
    MeanFieldFailure,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PulseConfiguration>,
    pub events: Vec<Event>,
    pub backend: Backend,
    /// Time of the first guard event, `None` when the run completed.
    pub breakdown_time: Option<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Trajectory {
    pub fn last(&self) -> &PulseConfiguration {
        self.states.last().expect("trajectory has an initial state")
    }

    /// `t, p_1..p_N, q_1..q_N` rows.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for j in 1..=n {
            out.push_str(&format!(",p_{j}"));
        }
        for j in 1..=n {
            out.push_str(&format!(",q_{j}"));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.12e}"));
            for v in s.p.iter().chain(&s.q) {
                out.push_str(&format!(",{v:.15e}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt0: f64,
    pub rel_tol: f64,
    pub backend: Backend,
    pub kernel: MeanFieldKernel,
    /// Requested floor; the effective floor is `max(ell |ln eps|, spacing_floor)`.
    pub spacing_floor: f64,
    pub ell: f64,
    /// Positions must stay inside `[lo, hi]`.
    pub domain: Option<(f64, f64)>,
    /// Record only at multiples of this interval (plus the final time).
    pub output_interval: Option<f64>,
    pub max_steps: usize,
    pub gradient_grid: GradientGrid,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            dt0: 0.5,
            rel_tol: 1e-8,
            backend: Backend::Matrix,
            kernel: MeanFieldKernel::Exact,
            spacing_floor: 0.0,
            ell: DEFAULT_ELL,
            domain: None,
            output_interval: None,
            max_steps: 1_000_000,
            gradient_grid: GradientGrid::default(),
        }
    }
}

impl EvolveOptions {
    pub fn effective_floor(&self, params: &ModelParams) -> f64 {
        (self.ell * params.eps.ln().abs()).max(self.spacing_floor)
    }
}

fn rk4_step(f: &VelocityField, p: &[f64], v0: &[f64], q: &[f64], h: f64) -> Result<Vec<f64>> {
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
    let (k2, q2) = f.eval(&add(p, v0, 0.5 * h), Some(q))?;
    let (k3, q3) = f.eval(&add(p, &k2, 0.5 * h), Some(&q2))?;
    let (k4, _) = f.eval(&add(p, &k3, h), Some(&q3))?;
    Ok((0..p.len())
        .map(|i| p[i] + h / 6.0 * (v0[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn guard(p: &[f64], floor: f64, domain: Option<(f64, f64)>) -> Option<(EventKind, String)> {
    if let Some(d) = p.windows(2).map(|w| w[1] - w[0]).min_by(f64::total_cmp) {
        if d < floor {
            return Some((EventKind::SpacingFloor, format!("spacing {d:.6} below floor {floor:.6}")));
        }
    }
    if let Some((lo, hi)) = domain {
        if let Some(x) = p.iter().find(|x| **x < lo || **x > hi) {
            return Some((EventKind::DomainExit, format!("position {x:.6} outside [{lo}, {hi}]")));
        }
    }
    None
}

/// Integrates `dp/dt = v(p)` by RK4 with step-doubling error control, re-solving the
/// mean field at every stage.
pub fn evolve(p0: &[f64], params: &ModelParams, opts: &EvolveOptions) -> Result<Trajectory> {
    check_positions(p0)?;
    if !(opts.t_end > 0.0 && opts.dt0 > 0.0 && opts.rel_tol > 0.0) {
        return Err(Error::InvalidConfig("t_end, dt0 and rel_tol must be positive".into()));
    }
    let mut field = VelocityField::new(params, opts.backend, opts.kernel)?;
    field.gradient_grid = opts.gradient_grid;
    let floor = opts.effective_floor(params);
    if let Some((_, msg)) = guard(p0, floor, opts.domain) {
        return Err(Error::InvalidConfig(format!("initial configuration: {msg}")));
    }

    let start = field.solve(p0, None)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![start.clone()],
        events: Vec::new(),
        backend: opts.backend,
        breakdown_time: None,
        steps_accepted: 0,
        steps_rejected: 0,
    };
    let mut t = 0.0;
    let mut p = start.p;
    let mut q = start.q;
    let mut h = opts.dt0.min(opts.t_end);
    let mut next_out = opts.output_interval.map(|dt| dt.min(opts.t_end));

    let stop = |traj: &mut Trajectory, t: f64, kind: EventKind, detail: Option<String>| {
        traj.events.push(Event { time: t, kind, detail });
        if kind != EventKind::Completed {
            traj.breakdown_time = Some(t);
        }
    };

    while t < opts.t_end {
        if traj.steps_accepted + traj.steps_rejected >= opts.max_steps {
            return Err(Error::InvalidConfig(format!("step budget {} exhausted at t = {t}", opts.max_steps)));
        }
        let target = next_out.unwrap_or(opts.t_end).min(opts.t_end);
        let h_try = h.min(target - t);
        let attempt = (|| -> Result<(Vec<f64>, f64)> {
            let (v0, _) = field.eval(&p, Some(&q))?;
            let full = rk4_step(&field, &p, &v0, &q, h_try)?;
            let half = rk4_step(&field, &p, &v0, &q, 0.5 * h_try)?;
            let (vh, qh) = field.eval(&half, Some(&q))?;
            let two = rk4_step(&field, &half, &vh, &qh, 0.5 * h_try)?;
            let scale = two.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let err = two.iter().zip(&full).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / 15.0;
            Ok((two, err / (opts.rel_tol * scale)))
        })();
        let (p_new, ratio) = match attempt {
            Ok(x) => x,
            Err(e) => {
                stop(&mut traj, t, EventKind::MeanFieldFailure, Some(e.to_string()));
                return Ok(traj);
            }
        };
        if ratio > 1.0 {
            traj.steps_rejected += 1;
            h = h_try * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
            continue;
        }
        traj.steps_accepted += 1;
        t = if h_try == target - t { target } else { t + h_try };
        let config = match field.solve(&p_new, Some(&q)) {
            Ok(c) => c,
            Err(e) => {
                stop(&mut traj, t, EventKind::MeanFieldFailure, Some(e.to_string()));
                return Ok(traj);
            }
        };
        p = config.p.clone();
        q = config.q.clone();
        let grow = if ratio > 0.0 { (0.9 * ratio.powf(-0.2)).min(4.0) } else { 4.0 };
        // a step shortened to hit an output time does not shrink the natural step
        h = if h_try < h { h.max(h_try * grow) } else { h_try * grow };
        let record = match next_out {
            None => true,
            Some(o) => {
                if t >= o {
                    next_out = opts.output_interval.map(|dt| (o + dt).min(opts.t_end));
                    true
                } else {
                    t >= opts.t_end
                }
            }
        };
        if let Some((kind, msg)) = guard(&p, floor, opts.domain) {
            traj.times.push(t);
            traj.states.push(config);
            stop(&mut traj, t, kind, Some(msg));
            return Ok(traj);
        }
        if record {
            traj.times.push(t);
            traj.states.push(config);
        }
    }
    stop(&mut traj, t, EventKind::Completed, None);
    Ok(traj)
}

/// Independent trajectories, in parallel when enabled.
pub fn evolve_ensemble(exec: Exec, starts: &[Vec<f64>], params: &ModelParams, opts: &EvolveOptions) -> Vec<Result<Trajectory>> {
    par::map(exec, starts, |p| evolve(p, params, opts))
}
