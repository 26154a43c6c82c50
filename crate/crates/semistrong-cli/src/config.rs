//! Scenario configuration: one JSON document drives every subcommand.

use std::path::Path;

use semistrong::dynamics::EvolveOptions;
use semistrong::linearization::{Linearization, MAX_DENSE};
use semistrong::mean_field::check_positions;
use semistrong::nlep::{AdmissibilityOptions, ContourSpec};
use semistrong::profiles::PROFILE_MARGIN;
use semistrong::sim::{Boundary, Perturbation, SimConfig};
use semistrong::{MeanFieldKernel, ModelParams};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub params: ModelParams,
    /// Initial pulse positions, strictly increasing.
    #[serde(default = "default_positions")]
    pub positions: Vec<f64>,
    #[serde(default)]
    pub kernel: MeanFieldKernel,
    #[serde(default)]
    pub profile: ProfileSpec,
    #[serde(default)]
    pub spectrum: SpectrumSpec,
    #[serde(default = "default_dynamics")]
    pub dynamics: EvolveOptions,
    #[serde(default)]
    pub dns: DnsSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_positions() -> Vec<f64> {
    vec![-15.0, 15.0]
}

fn default_dynamics() -> EvolveOptions {
    EvolveOptions {
        t_end: 40.0,
        output_interval: Some(1.0),
        ..EvolveOptions::default()
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: default_name(),
            params: ModelParams::default(),
            positions: default_positions(),
            kernel: MeanFieldKernel::default(),
            profile: ProfileSpec::default(),
            spectrum: SpectrumSpec::default(),
            dynamics: default_dynamics(),
            dns: DnsSpec::default(),
            compare: CompareSpec::default(),
            outputs: OutputSpec::default(),
            seed: 0,
        }
    }
}

/// Grid for the assembled profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSpec {
    pub dx: f64,
    /// Padding beyond the outer pulses in slow lengths.
    pub slow_lengths: f64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self { dx: 0.02, slow_lengths: 6.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSpec {
    pub contour: ContourSpec,
    pub admissibility: AdmissibilityOptions,
    /// Half-width and spacing of the grid carrying the fast resolvent.
    pub half_width: f64,
    pub dx: f64,
    pub oracle: OracleSpec,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        Self {
            contour: ContourSpec::default(),
            admissibility: AdmissibilityOptions::default(),
            half_width: 30.0,
            dx: 0.01,
            oracle: OracleSpec::default(),
        }
    }
}

/// Dense eigenvalue cross-check on a coarse grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub dx: f64,
    /// Padding beyond the outer pulses.
    pub pad: f64,
    pub which: Linearization,
    pub margin: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            dx: 0.1,
            pad: 40.0,
            which: Linearization::Reduced,
            margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub wavelength: f64,
    pub width: f64,
    pub modes: usize,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            wavelength: 0.7,
            width: 3.0,
            modes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnsSpec {
    pub dx: f64,
    pub slow_lengths: f64,
    pub dt: f64,
    pub t_end: f64,
    pub output_stride: usize,
    /// Write a full snapshot every this many samples (0 disables snapshots).
    pub snapshot_every: usize,
    pub boundary: Boundary,
    pub track_threshold: f64,
    pub cfl: f64,
    pub remainder: bool,
    pub perturbation: Option<PerturbationSpec>,
    /// Run the DNS stage of a scenario even when admissibility fails.
    pub run_if_inadmissible: bool,
}

impl Default for DnsSpec {
    fn default() -> Self {
        Self {
            dx: 0.05,
            slow_lengths: 6.0,
            dt: 0.01,
            t_end: 40.0,
            output_stride: 100,
            snapshot_every: 10,
            boundary: Boundary::Neumann,
            track_threshold: 0.5,
            cfl: 0.5,
            remainder: true,
            perturbation: None,
            run_if_inadmissible: false,
        }
    }
}

impl DnsSpec {
    pub fn sim_config(&self, kernel: MeanFieldKernel, ell: f64, seed: u64) -> SimConfig {
        SimConfig {
            dt: self.dt,
            t_end: self.t_end,
            output_stride: self.output_stride,
            boundary: self.boundary,
            perturbation: self.perturbation.map(|p| Perturbation {
                amplitude: p.amplitude,
                wavelength: p.wavelength,
                seed,
                width: p.width,
                modes: p.modes,
            }),
            track_threshold: self.track_threshold,
            ell,
            cfl: self.cfl,
            kernel,
            remainder: self.remainder,
        }
    }
}

/// Tolerances for the DNS / ODE comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    pub separation_tol: f64,
    pub backend_tol: f64,
    /// Trajectory states sampled for the backend gap.
    pub backend_samples: usize,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            separation_tol: 0.1,
            backend_tol: 0.05,
            backend_samples: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Output directory; `--out` takes precedence.
    pub dir: Option<String>,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec![Format::Json, Format::Csv, Format::Svg],
        }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| bad(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| bad(format!("{}: {}", path.display(), e.0)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Cross-field checks, run before any computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        p.validate().map_err(|e| bad(e.to_string()))?;
        if self.positions.is_empty() {
            return Err(bad("positions must list at least one pulse"));
        }
        check_positions(&self.positions).map_err(|e| bad(e.to_string()))?;
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("{what} must be positive, got {v}")))
            }
        };

        positive(self.profile.dx, "profile.dx")?;
        if self.profile.slow_lengths * p.slow_length() < PROFILE_MARGIN {
            return Err(bad(format!(
                "profile.slow_lengths = {} leaves less than {PROFILE_MARGIN} beyond the outer pulses",
                self.profile.slow_lengths
            )));
        }

        let s = &self.spectrum;
        s.contour.validate(p).map_err(|e| bad(e.to_string()))?;
        positive(s.dx, "spectrum.dx")?;
        if s.half_width < 20.0 {
            return Err(bad("spectrum.half_width must be at least 20"));
        }
        positive(s.admissibility.ell, "spectrum.admissibility.ell")?;
        positive(s.admissibility.delta, "spectrum.admissibility.delta")?;
        positive(s.admissibility.resolvent_cap, "spectrum.admissibility.resolvent_cap")?;
        positive(s.admissibility.scan_extent, "spectrum.admissibility.scan_extent")?;
        positive(s.oracle.dx, "spectrum.oracle.dx")?;
        positive(s.oracle.pad, "spectrum.oracle.pad")?;
        let span = self.positions[self.positions.len() - 1] - self.positions[0] + 2.0 * s.oracle.pad;
        let unknowns = 2 * ((span / s.oracle.dx).ceil() as usize);
        if unknowns > MAX_DENSE {
            return Err(bad(format!(
                "oracle grid has {unknowns} unknowns, more than {MAX_DENSE}; coarsen spectrum.oracle.dx"
            )));
        }

        let d = &self.dynamics;
        if d.kernel != self.kernel {
            return Err(bad("dynamics.kernel must match the top-level kernel"));
        }
        positive(d.t_end, "dynamics.t_end")?;
        positive(d.dt0, "dynamics.dt0")?;
        positive(d.rel_tol, "dynamics.rel_tol")?;
        positive(d.ell, "dynamics.ell")?;
        positive(d.gradient_grid.dx, "dynamics.gradient_grid.dx")?;
        if let Some(iv) = d.output_interval {
            positive(iv, "dynamics.output_interval")?;
        }
        if let Some((lo, hi)) = d.domain {
            if !(lo < self.positions[0] && hi > self.positions[self.positions.len() - 1]) {
                return Err(bad("dynamics.domain must contain the initial positions"));
            }
        }

        let n = &self.dns;
        positive(n.dx, "dns.dx")?;
        positive(n.slow_lengths, "dns.slow_lengths")?;
        if n.slow_lengths * p.slow_length() < PROFILE_MARGIN {
            return Err(bad("dns.slow_lengths leaves too little room beyond the outer pulses"));
        }
        self.dns
            .sim_config(self.kernel, d.ell, 0)
            .validate()
            .map_err(|e| bad(format!("dns: {e}")))?;
        if let Some(pert) = n.perturbation {
            if !(pert.amplitude >= 0.0) {
                return Err(bad("dns.perturbation.amplitude must be non-negative"));
            }
            if pert.wavelength < 4.0 * n.dx {
                return Err(bad("dns.perturbation.wavelength must span at least 4 grid cells"));
            }
            positive(pert.width, "dns.perturbation.width")?;
        }

        positive(self.compare.separation_tol, "compare.separation_tol")?;
        positive(self.compare.backend_tol, "compare.backend_tol")?;
        if self.compare.backend_samples == 0 {
            return Err(bad("compare.backend_samples must be at least 1"));
        }
        Ok(())
    }
}
