//! Single-stage subcommands. Each writes its artifacts below `out` and returns
//! the in-memory result.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use num_complex::Complex64;
use semistrong::dynamics::{evolve as evolve_ode, Trajectory};
use semistrong::linearization::{oracle_spectrum, OracleOptions, OracleSpectrum};
use semistrong::mean_field::{solve_mean_field, spacing_checks, MeanFieldSolution, SpacingReport};
use semistrong::nlep::{check_admissibility, NlepContext, SpectrumReport, TraceSample};
use semistrong::profiles::{build_profile, compute_residual};
use semistrong::sim::{dns_grid, init_from_profile, run, series_to_csv, SimState};
use semistrong::{Exec, SpatialGrid};
use serde::Serialize;

use crate::compare::{compare, ComparisonReport};
use crate::config::{Format, ScenarioConfig};
use crate::io::{self, Table};
use crate::plots;
use crate::seeds::stage_seed;
use crate::{ConfigError, ToleranceViolation};

/// Resolved configuration plus output directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: ScenarioConfig,
    pub out: PathBuf,
}

impl Run {
    pub fn new(cfg: ScenarioConfig, out: PathBuf) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wants(&self, f: Format) -> bool {
        self.cfg.outputs.wants(f)
    }

    pub fn write_config_echo(&self) -> Result<()> {
        io::write(&self.path("config.json"), self.cfg.to_json() + "\n")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanFieldOutput {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub kernel: semistrong::MeanFieldKernel,
    pub spacing: SpacingReport,
}

pub fn meanfield(run: &Run) -> Result<(MeanFieldSolution, MeanFieldOutput)> {
    let cfg = &run.cfg;
    let sol = solve_mean_field(&cfg.positions, &cfg.params, cfg.kernel)?;
    let adm = &cfg.spectrum.admissibility;
    let out = MeanFieldOutput {
        p: sol.config.p.clone(),
        q: sol.config.q.clone(),
        residual_norm: sol.residual_norm,
        iterations: sol.iterations,
        kernel: sol.kernel,
        spacing: spacing_checks(&cfg.positions, &cfg.params, adm.ell, adm.delta),
    };
    io::write_json(&run.path("meanfield.json"), &out)?;
    Ok((sol, out))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileOutput {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub grid: SpatialGrid,
    /// `eps ||F1||_1` and `||F2||_2` of the pointwise residual.
    pub residual_slow_l1: f64,
    pub residual_fast_l2: f64,
}

pub fn profile(run: &Run) -> Result<ProfileOutput> {
    let cfg = &run.cfg;
    let sol = solve_mean_field(&cfg.positions, &cfg.params, cfg.kernel)?;
    let pad = cfg.profile.slow_lengths * cfg.params.slow_length();
    let p = &cfg.positions;
    let grid = SpatialGrid::with_spacing(p[0] - pad, p[p.len() - 1] + pad, cfg.profile.dx)?;
    let (phi1, phi2) = build_profile(&sol.config, grid, &cfg.params)?;
    let res = compute_residual(&phi1, &phi2, &cfg.params)?;
    let out = ProfileOutput {
        p: sol.config.p.clone(),
        q: sol.config.q.clone(),
        grid,
        residual_slow_l1: res.eps_l1_f1,
        residual_fast_l2: res.l2_f2,
    };
    if run.wants(Format::Csv) {
        io::write(&run.path("phi1.csv"), phi1.to_csv())?;
        io::write(&run.path("phi2.csv"), phi2.to_csv())?;
    }
    io::write_json(&run.path("profile.json"), &out)?;
    if run.wants(Format::Svg) && run.wants(Format::Csv) {
        let a = Table::read(&run.path("phi1.csv"))?;
        let b = Table::read(&run.path("phi2.csv"))?;
        io::write(&run.path("plots/profile.svg"), plots::profile_plot(&a, &b).render())?;
    }
    Ok(out)
}

pub fn trace_csv(trace: &[TraceSample]) -> String {
    let mut out = String::from("re_lambda,im_lambda,re_det,im_det,phase\n");
    for s in trace {
        out.push_str(&format!(
            "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}\n",
            s.lambda.re, s.lambda.im, s.det.re, s.det.im, s.phase
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleMatch {
    pub root: Complex64,
    pub nearest: Option<Complex64>,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleOutput {
    pub spectrum: OracleSpectrum,
    pub grid: SpatialGrid,
    pub matches: Vec<OracleMatch>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumOutput {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub report: SpectrumReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleOutput>,
}

fn run_oracle(run: &Run, sol: &MeanFieldSolution, report: &SpectrumReport) -> Result<OracleOutput> {
    let cfg = &run.cfg;
    let o = &cfg.spectrum.oracle;
    let p = &sol.config.p;
    let grid = SpatialGrid::with_spacing(p[0] - o.pad, p[p.len() - 1] + o.pad, o.dx)?;
    let opts = OracleOptions {
        margin: o.margin,
        ell: cfg.spectrum.admissibility.ell,
    };
    let spectrum = oracle_spectrum(&sol.config, grid, &cfg.params, o.which, &opts)?;
    let matches = report
        .roots
        .iter()
        .map(|r| {
            let nearest = spectrum
                .eigenvalues
                .iter()
                .min_by(|a, b| (*a - r.lambda).norm().total_cmp(&(*b - r.lambda).norm()))
                .copied();
            OracleMatch {
                root: r.lambda,
                nearest,
                distance: nearest.map(|z| (z - r.lambda).norm()),
            }
        })
        .collect();
    Ok(OracleOutput { spectrum, grid, matches })
}

/// Admissibility check with the optional dense oracle; writes `spectrum.json`
/// and, when `trace` is set, `trace.csv` and the Nyquist plot.
pub fn spectrum(run: &Run, with_oracle: bool, trace: bool) -> Result<SpectrumOutput> {
    let cfg = &run.cfg;
    let sol = solve_mean_field(&cfg.positions, &cfg.params, cfg.kernel)?;
    let s = &cfg.spectrum;
    let grid = SpatialGrid::with_spacing(-s.half_width, s.half_width, s.dx)?;
    let ctx = NlepContext::new(grid, &cfg.params)?;
    let report = check_admissibility(&ctx, &sol.config, &s.contour, &s.admissibility, Exec::Parallel)?;
    let oracle = if with_oracle {
        Some(run_oracle(run, &sol, &report)?)
    } else {
        None
    };
    if trace && !report.trace.is_empty() {
        io::write(&run.path("trace.csv"), trace_csv(&report.trace))?;
        if run.wants(Format::Svg) {
            let t = Table::read(&run.path("trace.csv"))?;
            io::write(&run.path("plots/nyquist.svg"), plots::nyquist_plot(&t).render())?;
        }
    }
    let out = SpectrumOutput {
        p: sol.config.p.clone(),
        q: sol.config.q.clone(),
        report,
        oracle,
    };
    io::write_json(&run.path("spectrum.json"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveOutput {
    pub backend: semistrong::dynamics::Backend,
    pub events: Vec<semistrong::dynamics::Event>,
    pub breakdown_time: Option<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub final_positions: Vec<f64>,
}

pub fn evolve(run: &Run) -> Result<Trajectory> {
    let cfg = &run.cfg;
    let traj = evolve_ode(&cfg.positions, &cfg.params, &cfg.dynamics)?;
    io::write(&run.path("ode.csv"), traj.to_csv())?;
    io::write_json(
        &run.path("events.json"),
        &EvolveOutput {
            backend: traj.backend,
            events: traj.events.clone(),
            breakdown_time: traj.breakdown_time,
            steps_accepted: traj.steps_accepted,
            steps_rejected: traj.steps_rejected,
            final_positions: traj.last().p.clone(),
        },
    )?;
    if run.wants(Format::Svg) {
        let paths = crate::compare::Paths::read(&run.path("ode.csv"))?;
        io::write(&run.path("plots/spacetime.svg"), plots::spacetime_plot(Some(&paths), None).render())?;
    }
    Ok(traj)
}

#[derive(Debug, Clone, Serialize)]
pub struct DnsManifest {
    pub t_final: f64,
    pub steps: u64,
    pub total_step: u64,
    pub seed: u64,
    pub params_hash: String,
    pub params: semistrong::ModelParams,
    pub sim: semistrong::sim::SimConfig,
    pub grid: SpatialGrid,
    pub restarted_from_t: Option<f64>,
    pub warnings: Vec<String>,
    pub files: BTreeMap<String, String>,
}

/// Direct simulation into `out/dns`; a restart continues the saved state up to `dns.t_end`.
pub fn simulate(run: &Run, restart: Option<&Path>) -> Result<DnsManifest> {
    let cfg = &run.cfg;
    let dir = run.path("dns");
    let seed = stage_seed(cfg.seed, "dns");
    let mut sim = cfg.dns.sim_config(cfg.kernel, cfg.dynamics.ell, seed);
    let (state, restarted_from_t) = match restart {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let state = SimState::from_json(&text)?;
            let remaining = cfg.dns.t_end - state.t;
            if !(remaining > 0.5 * sim.dt) {
                return Err(ConfigError(format!(
                    "restart state is at t = {} which is not before dns.t_end = {}",
                    state.t, cfg.dns.t_end
                ))
                .into());
            }
            sim.t_end = remaining;
            sim.perturbation = None;
            let t = state.t;
            (state, Some(t))
        }
        None => {
            let sol = solve_mean_field(&cfg.positions, &cfg.params, cfg.kernel)?;
            let grid = dns_grid(&cfg.positions, &cfg.params, cfg.dns.dx, cfg.dns.slow_lengths)?;
            let state = init_from_profile(&sol.config, grid, &cfg.params, sim.perturbation.as_ref(), sim.ell)?;
            (state, None)
        }
    };
    let grid = state.grid();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let every = cfg.dns.snapshot_every;
    let snapshots = every > 0 && run.wants(Format::Csv);
    let mut sample = 0usize;
    let summary = run_dns(state, &sim, cfg, |state| {
        if snapshots && sample % every == 0 {
            io::write(&dir.join(format!("snapshot_{:08}.csv", state.step)), state.to_csv())?;
        }
        sample += 1;
        Ok(())
    })?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    io::write(&dir.join("series.csv"), series_to_csv(&summary.series))?;
    io::write(&dir.join("state_final.json"), summary.final_state.to_json())?;

    let mut files = BTreeMap::new();
    for rel in io::hashable_files(&dir)? {
        files.insert(io::rel_key(&rel), io::sha256_file(&dir.join(&rel))?);
    }
    let manifest = DnsManifest {
        t_final: summary.final_state.t,
        steps: summary.steps,
        total_step: summary.final_state.step,
        seed,
        params_hash: io::sha256_hex(serde_json::to_string(&cfg.params)?.as_bytes()),
        params: cfg.params,
        sim,
        grid,
        restarted_from_t,
        warnings: summary.warnings.clone(),
        files,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn run_dns(
    state: SimState,
    sim: &semistrong::sim::SimConfig,
    cfg: &ScenarioConfig,
    mut on_sample: impl FnMut(&SimState) -> Result<()>,
) -> Result<semistrong::sim::RunSummary> {
    // the library observer returns the library error type; carry ours through a slot
    let mut failure: Option<anyhow::Error> = None;
    let result = run(state, sim, &cfg.params, |s, _| {
        on_sample(s).map_err(|e| {
            let msg = e.to_string();
            failure = Some(e);
            semistrong::Error::InvalidConfig(msg)
        })
    });
    match (result, failure) {
        (_, Some(e)) => Err(e),
        (r, None) => Ok(r?),
    }
}

/// Compares `dns_dir/series.csv` with `ode_csv`, writes `compare.json` and fails
/// with a tolerance violation when a verdict is negative.
pub fn compare_runs(run: &Run, dns_dir: &Path, ode_csv: &Path) -> Result<ComparisonReport> {
    let cfg = &run.cfg;
    let series = Table::read(&dns_dir.join("series.csv"))?;
    let ode = Table::read(ode_csv)?;
    let report = compare(&series, &ode, &cfg.params, &cfg.dynamics.gradient_grid, cfg.compare)?;
    io::write_json(&run.path("compare.json"), &report.to_json())?;
    if run.wants(Format::Svg) {
        let dns = crate::compare::Paths::from_table(&series)?;
        let ode = crate::compare::Paths::from_table(&ode)?;
        let n = ode.p.first().map_or(0, Vec::len);
        let mut plot = crate::svg::Plot::new("Separation change", "t", "separation - initial");
        for (label, paths, dashed) in [("ODE", &ode, false), ("DNS", &dns, true)] {
            let sep = paths.separation(n);
            if let Some(&(_, s0)) = sep.first() {
                let mut s = crate::svg::Series::new(label, sep.iter().map(|&(t, s)| (t, s - s0)).collect())
                    .color(usize::from(dashed));
                s.dashed = dashed;
                plot.push(s);
            }
        }
        io::write(&run.path("plots/separation.svg"), plot.render())?;
    }
    let v = report.verdicts();
    if !v.passed {
        return Err(ToleranceViolation(format!(
            "separation error {:?} (tol {}), backend gap {:?} (tol {})",
            report.separation_error, cfg.compare.separation_tol, report.velocity_backend_gap, cfg.compare.backend_tol
        ))
        .into());
    }
    Ok(report)
}
