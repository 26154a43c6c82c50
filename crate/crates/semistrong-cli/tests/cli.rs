use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use semistrong_cli::compare::{compare, ComparisonReport};
use semistrong_cli::config::{CompareSpec, ScenarioConfig};
use semistrong_cli::io::{hashable_files, Table};
use semistrong_cli::scenario::Manifest;
use semistrong_cli::seeds::{splitmix64, stage_seeds};
use semistrong_cli::svg::{Plot, Series};
use semistrong_cli::{exit_code, ConfigError, ToleranceViolation};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_semistrong"));
    c.env("SEMISTRONG_THREADS", "2");
    c
}

/// Short two-pulse scenario: every stage, a few seconds.
fn short_config(name: &str) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        name: name.into(),
        seed: 11,
        ..ScenarioConfig::default()
    };
    cfg.dynamics.t_end = 4.0;
    cfg.dns.t_end = 4.0;
    cfg.dns.output_stride = 50;
    // over so short a horizon the initial transient dominates the separation change
    cfg.compare.separation_tol = 0.5;
    cfg
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> std::path::PathBuf {
    let p = dir.join(format!("{}.json", cfg.name));
    std::fs::write(&p, cfg.to_json()).unwrap();
    p
}

#[test]
fn default_config_round_trips() {
    let cfg = ScenarioConfig::default();
    let text = cfg.to_json();
    assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    cfg.validate().unwrap();
    // an empty object is the default scenario
    assert_eq!(ScenarioConfig::from_json("{}").unwrap(), cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(ScenarioConfig::from_json(r#"{"positions":[0],"extra":1}"#).is_err());
    assert!(ScenarioConfig::from_json(r#"{"dns":{"dt":0.01,"typo":2}}"#).is_err());
    assert!(ScenarioConfig::from_json(r#"{"params":{"eps":0.1}}"#).is_err());
}

#[test]
fn cross_field_checks() {
    let mut cfg = ScenarioConfig::default();
    cfg.spectrum.contour.nu = cfg.params.mu;
    assert!(cfg.validate().is_err(), "nu must stay below mu");

    let cfg = ScenarioConfig {
        positions: vec![5.0, 1.0],
        ..ScenarioConfig::default()
    };
    assert!(cfg.validate().is_err());

    let mut cfg = ScenarioConfig::default();
    cfg.profile.slow_lengths = 0.1;
    assert!(cfg.validate().is_err(), "profile grid margin");

    let mut cfg = ScenarioConfig::default();
    cfg.spectrum.oracle.dx = 0.001;
    assert!(cfg.validate().is_err(), "dense oracle too large");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(
        eps in 0.01f64..0.3,
        rho in 0.1f64..10.0,
        gap in 10.0f64..80.0,
        n in 1usize..5,
        seed in any::<u64>(),
        dt in 1e-4f64..0.05,
        tol in 1e-3f64..1.0,
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.params.eps = eps;
        cfg.params.rho = rho;
        cfg.positions = (0..n).map(|k| k as f64 * gap - 3.3).collect();
        cfg.seed = seed;
        cfg.dns.dt = dt;
        cfg.compare.separation_tol = tol;
        let text = cfg.to_json();
        let back = ScenarioConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), text);
    }
}

#[test]
fn splitmix_reference_values() {
    let mut s = 0u64;
    assert_eq!(splitmix64(&mut s), 0xE220_A839_7B1D_CDAF);
    assert_eq!(splitmix64(&mut s), 0x6E78_9E6A_A1B9_65F4);
    let a = stage_seeds(42);
    assert_eq!(a, stage_seeds(42));
    assert_ne!(a["dns"], stage_seeds(43)["dns"]);
    let mut distinct: Vec<u64> = a.values().copied().collect();
    distinct.dedup();
    assert_eq!(distinct.len(), a.len());
}

#[test]
fn exit_code_classes() {
    assert_eq!(exit_code(&anyhow::Error::from(ConfigError("x".into()))), 2);
    assert_eq!(exit_code(&anyhow::Error::from(ToleranceViolation("x".into()))), 4);
    let num = anyhow::Error::from(semistrong::Error::NewtonFailed {
        iterations: 3,
        residual: 1.0,
    });
    assert_eq!(exit_code(&num), 3);
    let cfg = anyhow::Error::from(semistrong::Error::InvalidParams("eps".into())).context("while loading");
    assert_eq!(exit_code(&cfg), 2);
}

#[test]
fn svg_is_well_formed() {
    let mut plot = Plot::new("a < b & c", "x", "y").log_y();
    plot.push(Series::new("s", vec![(0.0, 1.0), (1.0, 0.0), (2.0, 10.0)]));
    plot.push(Series::new("", vec![]).dashed());
    let svg = plot.render();
    assert!(svg.starts_with("<?xml"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("a &lt; b &amp; c"));
    assert_eq!(svg.matches("<svg").count(), 1);
    assert!(!svg.contains("NaN") && !svg.contains("inf"));
}

fn table(headers: &[&str], rows: Vec<Vec<f64>>) -> Table {
    Table {
        headers: headers.iter().map(|s| s.to_string()).collect(),
        rows: rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
    }
}

#[test]
fn comparison_metrics_on_synthetic_paths() {
    let params = semistrong::ModelParams::default();
    let grid = semistrong::dynamics::GradientGrid::default();
    let q = 1.7;
    let ode = table(
        &["t", "p_1", "p_2", "q_1", "q_2"],
        (0..=10).map(|k| {
            let t = k as f64;
            vec![t, -15.0 - 0.1 * t, 15.0 + 0.1 * t, q, q]
        }).collect(),
    );
    // DNS grows 10% faster, sampled at half-integer times
    let dns = table(
        &["t", "p_1", "p_2", "q_1", "q_2", "remainder_norm"],
        (0..=20).map(|k| {
            let t = 0.5 * k as f64;
            vec![t, -15.0 - 0.11 * t, 15.0 + 0.11 * t, q, q, 1.0 + (-(t)).exp()]
        }).collect(),
    );
    let tol = CompareSpec { separation_tol: 0.1, backend_tol: 0.05, backend_samples: 3 };
    let r = compare(&dns, &ode, &params, &grid, tol).unwrap();
    let e = r.separation_error.unwrap();
    assert!((e - 1.0 / 11.0).abs() < 1e-9, "{e}");
    assert_eq!(r.rows_compared, 21);
    assert!(r.velocity_backend_gap.unwrap() < 0.05);
    assert!(r.verdicts().passed);
    assert!((r.remainder_initial.unwrap() - 2.0).abs() < 1e-12);

    let strict = CompareSpec { separation_tol: 0.05, ..tol };
    let r2 = compare(&dns, &ode, &params, &grid, strict).unwrap();
    assert_eq!(r2.verdicts().separation_ok, Some(false));
    assert!(!r2.verdicts().passed);

    // verdicts are recomputed, never read back
    let mut json = r2.to_json();
    json["verdicts"]["passed"] = serde_json::Value::Bool(true);
    let back = ComparisonReport::from_json(&json.to_string()).unwrap();
    assert!(!back.verdicts().passed);
}

#[test]
fn invalid_inputs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["meanfield", "--positions=3,1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"positions":[0],"nope":true}"#).unwrap();
    let out = bin().arg("scenario").arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["meanfield", "--positions=-15,15", "--params", r#"{"eps":0.1}"#, "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["evolve", "--backend", "fast"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn meanfield_command_reports_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["meanfield", "--positions=-15,15", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let q = v["q"].as_array().unwrap();
    assert_eq!(q.len(), 2);
    assert!(v["residual_norm"].as_f64().unwrap() <= 1e-12);
    assert_eq!(v["spacing"]["in_k_ell"], true);
    assert!(dir.path().join("meanfield.json").exists());
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn scenario_is_deterministic_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &short_config("det"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin().arg("scenario").arg(&cfg_path).arg("--out").arg(out).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = hashable_files(&a).unwrap();
    assert!(files.iter().any(|f| f.ends_with("ode.csv")));
    assert!(files.iter().any(|f| f.ends_with("series.csv")));
    assert_eq!(files, hashable_files(&b).unwrap());
    for f in &files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{}", f.display());
    }
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap()
    );

    let m = Manifest::load(&a.join("manifest.json")).unwrap();
    assert!(m.verify(&a).is_empty());
    assert_eq!(m.files.len(), files.len());
    assert_eq!(m.config, short_config("det"));
    assert_eq!(m.admissible, Some(true));
    assert_eq!(m.stage_seeds, stage_seeds(11));
    for name in ["meanfield.json", "spectrum.json", "ode.csv", "dns/manifest.json", "compare.json"] {
        assert!(a.join(name).exists(), "{name}");
    }
    for plot in ["profile", "nyquist", "spacetime", "remainder"] {
        let svg = std::fs::read_to_string(a.join(format!("plots/{plot}.svg"))).unwrap();
        assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
    }

    // tampering is detected
    std::fs::write(a.join("ode.csv"), "t\n0\n").unwrap();
    assert_eq!(m.verify(&a), vec!["ode.csv".to_string()]);
}

#[test]
fn seed_changes_perturbed_dns_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig {
        positions: vec![0.0],
        ..ScenarioConfig::default()
    };
    cfg.dns.t_end = 0.5;
    cfg.dns.output_stride = 25;
    cfg.dns.perturbation = Some(Default::default());
    let path = write_config(dir.path(), &cfg);
    let run = |seed: &str, out: &str| {
        let o = bin()
            .args(["simulate", "--seed", seed, "--config"])
            .arg(&path)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(out).join("dns/state_final.json")).unwrap()
    };
    let a = run("1", "a");
    assert_eq!(a, run("1", "a2"));
    assert_ne!(a, run("2", "b"));
}

#[test]
fn tolerance_violation_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short_config("strict");
    cfg.compare.separation_tol = 1e-9;
    let path = write_config(dir.path(), &cfg);
    let out_dir = dir.path().join("out");
    let o = bin().arg("scenario").arg(&path).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::load(&out_dir.join("manifest.json")).unwrap();
    let last = m.stages.last().unwrap();
    assert_eq!(last.stage, "compare");
    assert_eq!(serde_json::to_value(last.status).unwrap(), "tolerance_violation");

    // the standalone compare subcommand agrees
    let o = bin()
        .args(["compare", "--config"])
        .arg(&path)
        .arg("--dns")
        .arg(out_dir.join("dns"))
        .arg("--ode")
        .arg(out_dir.join("ode.csv"))
        .arg("--out")
        .arg(dir.path().join("cmp"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn inadmissible_scenario_short_circuits() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short_config("close");
    cfg.positions = vec![-10.0, 10.0];
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = bin().arg("scenario").arg(&path).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.admissible, Some(false));
    assert!(!out.join("ode.csv").exists());
    assert!(!out.join("dns").exists());

    cfg.dns.run_if_inadmissible = true;
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("forced");
    let o = bin().arg("scenario").arg(&path).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.code() == Some(0) || o.status.code() == Some(4));
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.admissible, Some(false));
    assert!(m.warnings.iter().any(|w| w.contains("not admissible")));
    assert!(out.join("dns/series.csv").exists());
}

#[test]
fn batch_runs_into_separate_directories() {
    let dir = tempfile::tempdir().unwrap();
    let mut one = short_config("one");
    one.positions = vec![0.0];
    let mut two = short_config("two");
    two.positions = vec![0.0];
    two.seed = 5;
    let (p1, p2) = (write_config(dir.path(), &one), write_config(dir.path(), &two));
    let out = dir.path().join("batch");
    let o = bin().arg("scenario").arg(&p1).arg(&p2).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("one/manifest.json").exists());
    assert!(out.join("two/manifest.json").exists());
    assert_eq!(Manifest::load(&out.join("two/manifest.json")).unwrap().seed, 5);
}

#[test]
fn restart_continues_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::default();
    cfg.dns.t_end = 1.0;
    cfg.dns.output_stride = 20;
    cfg.dns.remainder = false;
    let path = write_config(dir.path(), &cfg);
    let sim = |extra: &[&str], out: &str| {
        let o = bin()
            .arg("simulate")
            .args(extra)
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    sim(&[], "full");
    sim(&["--t-end", "0.5"], "half");
    let state = dir.path().join("half/dns/state_final.json");
    sim(&["--restart", state.to_str().unwrap()], "rest");
    assert_eq!(
        std::fs::read(dir.path().join("full/dns/state_final.json")).unwrap(),
        std::fs::read(dir.path().join("rest/dns/state_final.json")).unwrap()
    );
}

#[test]
fn plots_note_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["profile", "--positions=0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = bin().args(["plots", "--dir"]).arg(dir.path()).output().unwrap();
    assert!(o.status.success());
    let notes = String::from_utf8_lossy(&o.stdout);
    assert!(notes.contains("nyquist plot skipped"));
    assert!(dir.path().join("plots/profile.svg").exists());
    assert!(!dir.path().join("plots/nyquist.svg").exists());
}
