//! The `solve`, `sweep-p` and `robustness` commands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use cruise_core::artifact::{self, ModelArtifact, PolicyArtifact};
use cruise_core::pbvi::{self, Policy};
use cruise_core::sim::{self, Agent, AgentMetrics, Environment, EvalOptions, TrialTrace};
use cruise_core::{ExperimentConfig, PomdpModel};
use serde::{Deserialize, Serialize};

use crate::failure::CliError;
use crate::records::{self, ResultRow};

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

/// A solvable agent: the label used in file names and tables, and the
/// channel it is restricted to (`None` for spectrum mobility).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub label: String,
    pub channel: Option<usize>,
}

pub fn band_labels(cfg: &ExperimentConfig) -> Result<Vec<u64>> {
    Ok(cfg.band_configs()?.iter().map(|b| b.label_ghz()).collect())
}

pub fn agent_specs(cfg: &ExperimentConfig) -> Result<Vec<AgentSpec>> {
    let mut out = vec![AgentSpec {
        label: "sm".into(),
        channel: None,
    }];
    for (i, g) in band_labels(cfg)?.into_iter().enumerate() {
        out.push(AgentSpec {
            label: format!("f{g}"),
            channel: Some(i),
        });
    }
    Ok(out)
}

pub fn policy_path(dir: &Path, agent: &str, p: f64) -> PathBuf {
    dir.join(format!("policy_{agent}_p{p}.json"))
}

pub fn model_path(dir: &Path, agent: &str, p: f64) -> PathBuf {
    dir.join(format!("model_{agent}_p{p}.json"))
}

/// Mobility values that have to be solved to run both studies.
pub fn required_p(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut ps: Vec<f64> = cfg.simulation.p_grid.iter().chain(&cfg.simulation.robustness_p).copied().collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    ps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub agent: String,
    pub p: f64,
    pub policy_file: String,
    pub model_file: String,
    pub policy_sha256: String,
    pub wall_time_s: f64,
    pub belief_count: usize,
    pub alpha_count: usize,
    pub num_stages: usize,
    pub expansions_per_stage: usize,
    pub sweeps: Vec<usize>,
    pub converged: Vec<bool>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveManifest {
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "solve_manifest.json";

/// Solves every agent at every `p` and writes policy, model and manifest
/// files into `out`.
pub fn solve(cfg: &ExperimentConfig, out: &Path, seed: Option<u64>, ps: &[f64], agents: &[AgentSpec]) -> Result<SolveManifest> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut solver = cfg.solver_config();
    if let Some(s) = seed {
        solver.seed = s;
    }
    let mut entries = Vec::new();
    for &p in ps {
        for spec in agents {
            let t = Instant::now();
            let channels = spec.channel.map(|c| vec![c]);
            let model = cfg.build_model(p, channels.as_deref())?;
            let policy = pbvi::solve(&model, &model.initial_belief(), &solver);
            let wall = t.elapsed().as_secs_f64();
            let ppath = policy_path(out, &spec.label, p);
            let mpath = model_path(out, &spec.label, p);
            artifact::write_json(&ppath, &PolicyArtifact::new(&policy, &model, &spec.label))?;
            artifact::write_json(&mpath, &ModelArtifact::from_model(&model))?;
            let bytes = std::fs::read(&ppath)?;
            let md = &policy.metadata;
            entries.push(ManifestEntry {
                agent: spec.label.clone(),
                p,
                policy_file: file_name(&ppath),
                model_file: file_name(&mpath),
                policy_sha256: artifact::sha256_hex(&bytes),
                wall_time_s: wall,
                belief_count: md.belief_count,
                alpha_count: md.alpha_count,
                num_stages: md.num_stages,
                expansions_per_stage: md.expansions_per_stage,
                sweeps: md.sweeps.clone(),
                converged: md.converged.clone(),
                warnings: md.warnings.clone(),
            });
        }
    }
    let manifest = SolveManifest {
        config_hash: cfg.hash(),
        seed: solver.seed,
        entries,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub struct Loaded {
    pub model: Arc<PomdpModel>,
    pub policy: Arc<Policy>,
}

/// Loads the policy of every agent at every `p`, failing with the full list
/// of absent pairs and rejecting artifacts from another config.
pub fn load_policies(cfg: &ExperimentConfig, dir: &Path, ps: &[f64]) -> Result<BTreeMap<(String, u64), Loaded>> {
    let specs = agent_specs(cfg)?;
    let missing: Vec<(String, f64)> = ps
        .iter()
        .flat_map(|&p| specs.iter().map(move |s| (s.label.clone(), p)))
        .filter(|(a, p)| !policy_path(dir, a, *p).is_file() || !model_path(dir, a, *p).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingPolicies { missing }.into());
    }
    let hash = cfg.hash();
    let mut out = BTreeMap::new();
    for &p in ps {
        for s in &specs {
            let mpath = model_path(dir, &s.label, p);
            let model = artifact::read_json::<ModelArtifact>(&mpath)?.into_model()?;
            if model.config_hash != hash {
                return Err(CliError::ConfigMismatch {
                    path: mpath,
                    expected: hash,
                    found: model.config_hash,
                }
                .into());
            }
            let ppath = policy_path(dir, &s.label, p);
            let art: PolicyArtifact = artifact::read_json(&ppath)?;
            if art.config_hash != hash {
                return Err(CliError::ConfigMismatch {
                    path: ppath,
                    expected: hash,
                    found: art.config_hash,
                }
                .into());
            }
            let policy = art.into_policy(&model)?;
            out.insert(
                (s.label.clone(), p.to_bits()),
                Loaded {
                    model: Arc::new(model),
                    policy: Arc::new(policy),
                },
            );
        }
    }
    Ok(out)
}

fn agents_for(cfg: &ExperimentConfig, env: &Environment, loaded: &BTreeMap<(String, u64), Loaded>, p: f64) -> Result<Vec<Agent>> {
    let mut agents = Vec::new();
    for s in agent_specs(cfg)? {
        let l = &loaded[&(s.label.clone(), p.to_bits())];
        agents.push(Agent::policy(s.label, l.model.clone(), l.policy.clone()));
    }
    let all: Vec<usize> = (0..env.bands.len()).collect();
    agents.push(Agent::oracle("oracle", env, &all)?);
    if cfg.simulation.band_oracles {
        for (i, b) in env.bands.iter().enumerate() {
            agents.push(Agent::oracle(format!("oracle_f{}", b.label_ghz()), env, &[i])?);
        }
    }
    Ok(agents)
}

fn eval_options(cfg: &ExperimentConfig, seed: u64, traces: bool) -> EvalOptions {
    EvalOptions {
        num_trials: cfg.simulation.num_trials,
        seed,
        confidence: cfg.simulation.confidence,
        keep_traces: traces,
        record_belief: traces,
    }
}

fn to_row(m: &AgentMetrics, bands: &[u64], p: f64, speed: Option<f64>, num_slots: usize, seed: u64, hash: &str) -> ResultRow {
    ResultRow {
        agent: m.agent.clone(),
        p,
        speed_kmh: speed,
        mean_rate_bps: m.mean_rate_bps,
        ci_half_width: m.ci_half_width,
        utilization: bands.iter().copied().zip(m.utilization.iter().copied()).collect(),
        num_trials: m.num_trials,
        num_slots,
        seed,
        config_hash: hash.to_string(),
    }
}

/// One JSON-lines record: a full trial with its experiment coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceLine {
    pub config_hash: String,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub speed_kmh: Option<f64>,
    #[serde(flatten)]
    pub trace: TrialTrace,
}

struct TraceSink(Option<BufWriter<File>>);

impl TraceSink {
    fn open(path: Option<&Path>) -> Result<Self> {
        Ok(Self(match path {
            Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => None,
        }))
    }

    fn enabled(&self) -> bool {
        self.0.is_some()
    }

    fn write(&mut self, hash: &str, p: f64, speed: Option<f64>, traces: Vec<TrialTrace>) -> Result<()> {
        if let Some(w) = &mut self.0 {
            for trace in traces {
                let line = TraceLine {
                    config_hash: hash.to_string(),
                    p,
                    speed_kmh: speed,
                    trace,
                };
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(mut w) = self.0 {
            w.flush()?;
        }
        Ok(())
    }
}

/// Random-walk evaluation of every agent (and the oracle) at each `p` of
/// the configured grid.
pub fn sweep_p(cfg: &ExperimentConfig, policies: &Path, out: &Path, seed: Option<u64>, traces: Option<&Path>) -> Result<Vec<ResultRow>> {
    let ps = cfg.simulation.p_grid.clone();
    let loaded = load_policies(cfg, policies, &ps)?;
    let seed = seed.unwrap_or(cfg.simulation.seed);
    let bands = band_labels(cfg)?;
    let hash = cfg.hash();
    let mut sink = TraceSink::open(traces)?;
    let mut rows = Vec::new();
    for &p in &ps {
        let env = Environment::from_config(cfg, p)?;
        let agents = agents_for(cfg, &env, &loaded, p)?;
        let ev = sim::monte_carlo(&env, &agents, cfg.simulation.horizon, &eval_options(cfg, seed, sink.enabled()))?;
        rows.extend(ev.metrics.iter().map(|m| to_row(m, &bands, p, None, cfg.simulation.horizon, seed, &hash)));
        sink.write(&hash, p, None, ev.traces)?;
    }
    sink.finish()?;
    records::write_rows(out, &bands, false, &rows)?;
    Ok(rows)
}

/// Constant-speed traversals at each robustness `p` and each speed.
pub fn robustness(cfg: &ExperimentConfig, policies: &Path, out: &Path, seed: Option<u64>, traces: Option<&Path>) -> Result<Vec<ResultRow>> {
    let ps = cfg.simulation.robustness_p.clone();
    let bands = band_labels(cfg)?;
    let mut rows = Vec::new();
    if cfg.simulation.speed_grid_kmh.is_empty() || ps.is_empty() {
        records::write_rows(out, &bands, true, &rows)?;
        return Ok(rows);
    }
    let loaded = load_policies(cfg, policies, &ps)?;
    let seed = seed.unwrap_or(cfg.simulation.seed);
    let hash = cfg.hash();
    let s = &cfg.simulation;
    let mut sink = TraceSink::open(traces)?;
    for &p in &ps {
        let env = Environment::from_config(cfg, p)?;
        let agents = agents_for(cfg, &env, &loaded, p)?;
        for &v in &s.speed_grid_kmh {
            let slots = sim::fixed_path(&env.road, v, s.slot_s, s.max_fixed_path_slots)?.len();
            let ev = sim::fixed_path_eval(&env, &agents, v, s.slot_s, s.max_fixed_path_slots, &eval_options(cfg, seed, sink.enabled()))?;
            rows.extend(ev.metrics.iter().map(|m| to_row(m, &bands, p, Some(v), slots, seed, &hash)));
            sink.write(&hash, p, Some(v), ev.traces)?;
        }
    }
    sink.finish()?;
    records::write_rows(out, &bands, true, &rows)?;
    Ok(rows)
}
