//! Full pipeline: mean field → admissibility → ODE → DNS → compare.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Result;
use semistrong::nlep::Verdict;
use serde::{Deserialize, Serialize};

use crate::commands::{self, Run};
use crate::config::{Format, ScenarioConfig};
use crate::io;
use crate::seeds::stage_seeds;
use crate::{exit_code, ConfigError, EXIT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
    ToleranceViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub config: ScenarioConfig,
    /// `None` when the admissibility stage did not complete.
    pub admissible: Option<bool>,
    pub verdict: Option<Verdict>,
    pub warnings: Vec<String>,
    pub stages: Vec<StageRecord>,
    /// SHA-256 of every artifact except plots and manifests.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Files whose recorded hash differs from the file on disk (or that are missing).
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|(rel, hash)| io::sha256_file(&dir.join(rel)).ok().as_ref() != Some(*hash))
            .map(|(rel, _)| rel.clone())
            .collect()
    }
}

struct Pipeline {
    manifest: Manifest,
    out: PathBuf,
}

impl Pipeline {
    fn record(&mut self, stage: &str, status: StageStatus, detail: Option<String>) {
        log::info!("stage {stage}: {status:?}");
        self.manifest.stages.push(StageRecord {
            stage: stage.into(),
            status,
            detail,
        });
    }

    fn skip_rest(&mut self, stages: &[&str], why: &str) {
        for s in stages {
            self.record(s, StageStatus::Skipped, Some(why.into()));
        }
    }

    fn finish(mut self) -> Result<Manifest> {
        for rel in io::hashable_files(&self.out)? {
            self.manifest
                .files
                .insert(io::rel_key(&rel), io::sha256_file(&self.out.join(&rel))?);
        }
        io::write_json(&self.out.join("manifest.json"), &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Runs one scenario into `out`. Stage failures are recorded in the manifest and the
/// first one is returned as the error after the manifest is written.
pub fn run_scenario(cfg: ScenarioConfig, out: &Path) -> Result<Manifest> {
    let run = Run::new(cfg.clone(), out.to_path_buf())?;
    std::fs::create_dir_all(out)?;
    run.write_config_echo()?;
    let mut pipe = Pipeline {
        manifest: Manifest {
            name: cfg.name.clone(),
            seed: cfg.seed,
            stage_seeds: stage_seeds(cfg.seed),
            config: cfg.clone(),
            admissible: None,
            verdict: None,
            warnings: Vec::new(),
            stages: Vec::new(),
            files: BTreeMap::new(),
        },
        out: out.to_path_buf(),
    };

    let later = ["spectrum", "ode", "dns", "compare"];
    let stage = (|| -> Result<()> {
        commands::meanfield(&run)?;
        commands::profile(&run)?;
        Ok(())
    })();
    if let Err(e) = stage {
        pipe.record("meanfield", StageStatus::Failed, Some(format!("{e:#}")));
        pipe.skip_rest(&later, "mean field failed");
        pipe.finish()?;
        return Err(e);
    }
    pipe.record("meanfield", StageStatus::Ok, None);

    match commands::spectrum(&run, false, true) {
        Ok(s) => {
            let admissible = s.report.verdict == Verdict::Admissible;
            pipe.manifest.admissible = Some(admissible);
            pipe.manifest.verdict = Some(s.report.verdict);
            pipe.record(
                "spectrum",
                StageStatus::Ok,
                Some(format!("verdict {:?}", s.report.verdict).to_lowercase()),
            );
            if !admissible {
                if cfg.dns.run_if_inadmissible {
                    pipe.manifest
                        .warnings
                        .push("configuration not admissible; dynamics run anyway".into());
                } else {
                    pipe.skip_rest(&["ode", "dns", "compare"], "configuration not admissible");
                    if run.cfg.outputs.wants(Format::Svg) {
                        crate::plots::emit_plots(out, &cfg)?;
                    }
                    return pipe.finish();
                }
            }
        }
        Err(e) => {
            pipe.record("spectrum", StageStatus::Failed, Some(format!("{e:#}")));
            pipe.skip_rest(&later[1..], "admissibility check failed");
            pipe.finish()?;
            return Err(e);
        }
    }

    if let Err(e) = commands::evolve(&run) {
        pipe.record("ode", StageStatus::Failed, Some(format!("{e:#}")));
        pipe.skip_rest(&later[2..], "ODE stage failed");
        pipe.finish()?;
        return Err(e);
    }
    pipe.record("ode", StageStatus::Ok, None);

    match commands::simulate(&run, None) {
        Ok(m) => {
            pipe.manifest.warnings.extend(m.warnings.iter().map(|w| format!("dns: {w}")));
            pipe.record("dns", StageStatus::Ok, None);
        }
        Err(e) => {
            pipe.record("dns", StageStatus::Failed, Some(format!("{e:#}")));
            pipe.skip_rest(&later[3..], "DNS stage failed");
            pipe.finish()?;
            return Err(e);
        }
    }

    let cmp = commands::compare_runs(&run, &out.join("dns"), &out.join("ode.csv"));
    if run.cfg.outputs.wants(Format::Svg) {
        for note in crate::plots::emit_plots(out, &cfg)? {
            pipe.manifest.warnings.push(note);
        }
    }
    match cmp {
        Ok(_) => {
            pipe.record("compare", StageStatus::Ok, None);
            pipe.finish()
        }
        Err(e) => {
            let status = if exit_code(&e) == EXIT_TOLERANCE {
                StageStatus::ToleranceViolation
            } else {
                StageStatus::Failed
            };
            pipe.record("compare", status, Some(format!("{e:#}")));
            pipe.finish()?;
            Err(e)
        }
    }
}

/// Thread cap from `SEMISTRONG_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("SEMISTRONG_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs scenarios concurrently, each in `out/<name>`; results keep input order.
pub fn run_batch(configs: Vec<ScenarioConfig>, out: &Path, threads: usize) -> Result<Vec<Result<Manifest>>> {
    let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(ConfigError(format!("scenario name `{}` used twice in one batch", w[0])).into());
    }
    for c in &configs {
        c.validate()?;
    }
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<Manifest>>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, configs.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(k) else { break };
                let dir = out.join(&cfg.name);
                let r = run_scenario(cfg.clone(), &dir);
                *results[k].lock().expect("result slot") = Some(r);
            });
        }
    });
    Ok(results
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every scenario ran"))
        .collect())
}
