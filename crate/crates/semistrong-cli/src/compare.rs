//! DNS versus reduced-ODE comparison.

use std::path::Path;

use anyhow::{Context, Result};
use semistrong::dynamics::{velocities_gradient, velocities_matrix, GradientGrid};
use semistrong::{Exec, ModelParams, PulseConfiguration, PulseConstants};
use serde::{Deserialize, Serialize};

use crate::config::CompareSpec;
use crate::io::Table;
use crate::ConfigError;

/// Pulse paths sampled at increasing times; rows may have different pulse counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub t: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl Paths {
    pub fn from_table(table: &Table) -> Result<Self> {
        let tc = table
            .column("t")
            .ok_or_else(|| ConfigError("table lacks a `t` column".into()))?;
        let pc = table.indexed("p_");
        let qc = table.indexed("q_");
        let mut out = Self::default();
        for row in &table.rows {
            let Some(t) = row[tc] else { continue };
            let pick = |cols: &[usize]| cols.iter().filter_map(|&c| row.get(c).copied().flatten()).collect();
            out.t.push(t);
            out.p.push(pick(&pc));
            out.q.push(pick(&qc));
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_table(&Table::read(path)?).with_context(|| path.display().to_string())
    }

    /// Distance between the outer pulses, for rows with `n >= 2` pulses.
    pub fn separation(&self, n: usize) -> Vec<(f64, f64)> {
        self.t
            .iter()
            .zip(&self.p)
            .filter(|(_, p)| p.len() == n && n >= 2)
            .map(|(&t, p)| (t, p[n - 1] - p[0]))
            .collect()
    }
}

fn interpolate(curve: &[(f64, f64)], t: f64) -> Option<f64> {
    let k = curve.partition_point(|(s, _)| *s < t);
    if k < curve.len() && curve[k].0 == t {
        return Some(curve[k].1);
    }
    if k == 0 || k == curve.len() {
        return None;
    }
    let (t0, y0) = curve[k - 1];
    let (t1, y1) = curve[k];
    Some(y0 + (y1 - y0) * (t - t0) / (t1 - t0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `sup |ds_dns - ds_ode| / sup |ds_dns|` over the common horizon, with
    /// `ds` the change of the outer-pulse separation since the first sample.
    pub separation_error: Option<f64>,
    pub separation_change_dns: Option<f64>,
    pub separation_change_ode: Option<f64>,
    pub rows_compared: usize,
    /// Largest `max_k |v_matrix - v_gradient| / max_k |v_matrix|` over sampled ODE states.
    pub velocity_backend_gap: Option<f64>,
    /// Mean remainder norm over the last quarter of the DNS samples.
    pub remainder_plateau: Option<f64>,
    pub remainder_initial: Option<f64>,
    pub tolerances: CompareSpec,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdicts {
    pub separation_ok: Option<bool>,
    pub backend_ok: Option<bool>,
    pub passed: bool,
}

impl ComparisonReport {
    pub fn verdicts(&self) -> Verdicts {
        let separation_ok = self.separation_error.map(|e| e <= self.tolerances.separation_tol);
        let backend_ok = self.velocity_backend_gap.map(|g| g <= self.tolerances.backend_tol);
        Verdicts {
            separation_ok,
            backend_ok,
            passed: separation_ok != Some(false) && backend_ok != Some(false),
        }
    }

    /// Report with the derived verdicts attached.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serialises");
        v["verdicts"] = serde_json::to_value(self.verdicts()).expect("verdicts serialise");
        v
    }

    /// Parses [`Self::to_json`] output; stored verdicts are ignored.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut v: serde_json::Value = serde_json::from_str(text)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("verdicts");
        }
        Ok(serde_json::from_value(v)?)
    }
}

fn separation_metrics(dns: &Paths, ode: &Paths, report: &mut ComparisonReport) {
    let n = ode.p.first().map_or(0, Vec::len);
    if n < 2 {
        report.notes.push("single pulse: separation comparison skipped".into());
        return;
    }
    let ode_sep = ode.separation(n);
    let dns_sep = dns.separation(n);
    if dns_sep.len() < dns.t.len() {
        report
            .notes
            .push(format!("{} DNS samples with a pulse count other than {n} ignored", dns.t.len() - dns_sep.len()));
    }
    let (Some(&(_, s_ode0)), Some(&(_, s_dns0))) = (ode_sep.first(), dns_sep.first()) else {
        report.notes.push("no comparable samples".into());
        return;
    };
    let (mut num, mut den, mut rows) = (0.0f64, 0.0f64, 0usize);
    let (mut last_dns, mut last_ode) = (0.0, 0.0);
    for &(t, s) in &dns_sep {
        let Some(so) = interpolate(&ode_sep, t) else { continue };
        let (dd, dode) = (s - s_dns0, so - s_ode0);
        num = num.max((dd - dode).abs());
        den = den.max(dd.abs());
        rows += 1;
        (last_dns, last_ode) = (dd, dode);
    }
    report.rows_compared = rows;
    if rows == 0 {
        report.notes.push("DNS and ODE time ranges do not overlap".into());
        return;
    }
    report.separation_change_dns = Some(last_dns);
    report.separation_change_ode = Some(last_ode);
    if den > 0.0 {
        report.separation_error = Some(num / den);
    } else {
        report.notes.push("DNS separation did not change".into());
    }
}

fn backend_gap(ode: &Paths, params: &ModelParams, grid: &GradientGrid, samples: usize) -> Result<Option<f64>> {
    let rows: Vec<usize> = if ode.t.len() <= samples {
        (0..ode.t.len()).collect()
    } else {
        (0..samples).map(|k| k * (ode.t.len() - 1) / (samples - 1).max(1)).collect()
    };
    let consts = PulseConstants::new(params)?;
    let gaps = semistrong::par::map(Exec::Parallel, &rows, |&r| -> Result<Option<f64>> {
        if ode.p[r].len() < 2 || ode.q[r].len() != ode.p[r].len() {
            return Ok(None);
        }
        let config = PulseConfiguration::new(ode.p[r].clone(), ode.q[r].clone())?;
        let vm = velocities_matrix(&config, params, &consts);
        let vg = velocities_gradient(&config, grid.grid_for(&config.p, params)?, params, &consts)?;
        let scale = vm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = vm.iter().zip(&vg).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok((scale > 0.0).then(|| diff / scale))
    });
    let mut worst: Option<f64> = None;
    for g in gaps {
        if let Some(g) = g? {
            worst = Some(worst.map_or(g, |w| w.max(g)));
        }
    }
    Ok(worst)
}

fn remainder_metrics(series: &Table, report: &mut ComparisonReport) {
    let Some(col) = series.column("remainder_norm") else {
        report.notes.push("no remainder column".into());
        return;
    };
    let vals: Vec<f64> = series.values(col).flatten().collect();
    if vals.is_empty() {
        report.notes.push("no remainder samples".into());
        return;
    }
    let tail = &vals[vals.len() - (vals.len() / 4).max(1)..];
    report.remainder_initial = Some(vals[0]);
    report.remainder_plateau = Some(tail.iter().sum::<f64>() / tail.len() as f64);
}

/// Compares a DNS series (`series.csv`) with an ODE trajectory (`ode.csv`).
pub fn compare(
    series: &Table,
    ode: &Table,
    params: &ModelParams,
    grid: &GradientGrid,
    tolerances: CompareSpec,
) -> Result<ComparisonReport> {
    let dns_paths = Paths::from_table(series)?;
    let ode_paths = Paths::from_table(ode)?;
    let mut report = ComparisonReport {
        separation_error: None,
        separation_change_dns: None,
        separation_change_ode: None,
        rows_compared: 0,
        velocity_backend_gap: None,
        remainder_plateau: None,
        remainder_initial: None,
        tolerances,
        notes: Vec::new(),
    };
    separation_metrics(&dns_paths, &ode_paths, &mut report);
    report.velocity_backend_gap = backend_gap(&ode_paths, params, grid, tolerances.backend_samples)?;
    remainder_metrics(series, &mut report);
    let finite = [
        report.separation_error,
        report.separation_change_dns,
        report.separation_change_ode,
        report.velocity_backend_gap,
        report.remainder_plateau,
        report.remainder_initial,
    ]
    .iter()
    .flatten()
    .all(|v| v.is_finite());
    if !finite {
        anyhow::bail!(crate::NumericalError("non-finite comparison metric".into()));
    }
    Ok(report)
}
