//! SVG plots rendered from the artifacts in a run directory.

use std::path::Path;

use anyhow::Result;

use crate::compare::Paths;
use crate::config::ScenarioConfig;
use crate::io::{self, Table};
use crate::svg::{Plot, Series};

pub fn profile_plot(phi1: &Table, phi2: &Table) -> Plot {
    let xy = |t: &Table| -> Vec<(f64, f64)> {
        t.rows
            .iter()
            .filter_map(|r| Some((r.first().copied().flatten()?, r.get(1).copied().flatten()?)))
            .collect()
    };
    let mut plot = Plot::new("Pulse profile", "x", "value");
    plot.push(Series::new("U (slow)", xy(phi1)).color(0));
    plot.push(Series::new("V (fast)", xy(phi2)).color(1));
    plot
}

/// Image of the contour under the dispersion function.
pub fn nyquist_plot(trace: &Table) -> Plot {
    let (re, im) = (trace.column("re_det"), trace.column("im_det"));
    let pts = match (re, im) {
        (Some(a), Some(b)) => trace
            .rows
            .iter()
            .filter_map(|r| Some((r[a]?, r[b]?)))
            .collect(),
        _ => Vec::new(),
    };
    let mut plot = Plot::new("Dispersion trace along the contour", "Re det", "Im det");
    plot.push(Series::new("det(I + N)", pts));
    plot.push(Series::new("origin", vec![(0.0, 0.0), (0.0, 0.0)]).color(1));
    plot
}

/// Pulse positions against time, ODE solid and DNS dashed.
pub fn spacetime_plot(ode: Option<&Paths>, dns: Option<&Paths>) -> Plot {
    let mut plot = Plot::new("Pulse paths", "position", "t");
    let mut add = |paths: &Paths, label: &str, dashed: bool| {
        let n = paths.p.iter().map(Vec::len).max().unwrap_or(0);
        for j in 0..n {
            let pts = paths
                .t
                .iter()
                .zip(&paths.p)
                .filter(|(_, p)| p.len() == n)
                .map(|(&t, p)| (p[j], t))
                .collect();
            let mut s = Series::new(if j == 0 { label } else { "" }, pts).color(usize::from(dashed));
            s.dashed = dashed;
            plot.push(s);
        }
    };
    if let Some(o) = ode {
        add(o, "ODE", false);
    }
    if let Some(d) = dns {
        add(d, "DNS", true);
    }
    plot
}

/// Remainder norm on semilog axes with the reference `r0 exp(-rate t)`.
pub fn remainder_plot(series: &Table, rate: f64) -> Plot {
    let (tc, rc) = (series.column("t"), series.column("remainder_norm"));
    let pts: Vec<(f64, f64)> = match (tc, rc) {
        (Some(a), Some(b)) => series.rows.iter().filter_map(|r| Some((r[a]?, r[b]?))).collect(),
        _ => Vec::new(),
    };
    let mut plot = Plot::new("Remainder decay", "t", "remainder norm").log_y();
    if let Some(&(t0, r0)) = pts.first() {
        let t1 = pts.last().map_or(t0, |p| p.0);
        let reference = (0..=50)
            .map(|k| {
                let t = t0 + (t1 - t0) * k as f64 / 50.0;
                (t, r0 * (-rate * (t - t0)).exp())
            })
            .collect();
        plot.push(Series::new("remainder", pts));
        plot.push(Series::new(format!("exp(-{rate:.3} t)"), reference).dashed().color(1));
    }
    plot
}

/// Renders every plot whose inputs exist below `dir` into `dir/plots`;
/// returns notes on the plots that were skipped.
pub fn emit_plots(dir: &Path, cfg: &ScenarioConfig) -> Result<Vec<String>> {
    let mut notes = Vec::new();
    let out = dir.join("plots");
    let read = |name: &str| -> Option<Table> {
        let p = dir.join(name);
        p.exists().then(|| Table::read(&p).ok()).flatten()
    };

    match (read("phi1.csv"), read("phi2.csv")) {
        (Some(a), Some(b)) => io::write(&out.join("profile.svg"), profile_plot(&a, &b).render())?,
        _ => notes.push("profile plot skipped: phi1.csv / phi2.csv missing".into()),
    }
    match read("trace.csv") {
        Some(t) => io::write(&out.join("nyquist.svg"), nyquist_plot(&t).render())?,
        None => notes.push("nyquist plot skipped: no spectrum trace".into()),
    }
    let ode = read("ode.csv").and_then(|t| Paths::from_table(&t).ok());
    let series = read("dns/series.csv");
    let dns = series.as_ref().and_then(|t| Paths::from_table(t).ok());
    if ode.is_some() || dns.is_some() {
        io::write(&out.join("spacetime.svg"), spacetime_plot(ode.as_ref(), dns.as_ref()).render())?;
    } else {
        notes.push("spacetime plot skipped: no ode.csv or dns/series.csv".into());
    }
    match &series {
        Some(s) if s.column("remainder_norm").is_some_and(|c| s.values(c).any(|v| v.is_some())) => {
            let rate = cfg.params.eps.powf(cfg.params.alpha) * cfg.spectrum.contour.nu;
            io::write(&out.join("remainder.svg"), remainder_plot(s, rate).render())?;
        }
        _ => notes.push("remainder plot skipped: no remainder samples".into()),
    }
    for n in &notes {
        log::info!("{n}");
    }
    Ok(notes)
}
