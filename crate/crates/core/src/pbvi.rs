//! Anytime point-based value iteration.
//!
//! The value function is the upper surface of a set of α-vectors. Each
//! stage grows the belief set by forward simulation and then repeats
//! point-based backups over it until the point values settle.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pomdp::{belief_update, Belief, PomdpModel};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub values: Vec<f64>,
    pub action: usize,
}

impl AlphaVector {
    pub fn dot(&self, b: &Belief) -> f64 {
        b.dot(&self.values)
    }
}

/// Belief points with the expansion round that added each one (0 = initial).
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet {
    beliefs: Vec<Belief>,
    rounds: Vec<usize>,
}

impl BeliefSet {
    pub fn new(initial: Belief) -> Self {
        Self {
            beliefs: vec![initial],
            rounds: vec![0],
        }
    }

    pub fn from_beliefs(beliefs: Vec<Belief>) -> Self {
        let mut set = Self {
            beliefs: Vec::with_capacity(beliefs.len()),
            rounds: Vec::with_capacity(beliefs.len()),
        };
        for b in beliefs {
            set.insert(b, 0);
        }
        set
    }

    /// Adds `b` unless an identical belief is already present.
    pub fn insert(&mut self, b: Belief, round: usize) -> bool {
        if self.beliefs.iter().any(|x| x == &b) {
            return false;
        }
        self.beliefs.push(b);
        self.rounds.push(round);
        true
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn beliefs(&self) -> &[Belief] {
        &self.beliefs
    }

    pub fn rounds(&self) -> &[usize] {
        &self.rounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    L1,
    L2,
}

impl DistanceMetric {
    pub fn distance(self, a: &Belief, b: &Belief) -> f64 {
        match self {
            DistanceMetric::L1 => a.l1_distance(b),
            DistanceMetric::L2 => a.l2_distance(b),
        }
    }
}

/// Order of expansions and backups within a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// expand, backup, expand, backup, ...
    Interleaved,
    /// expand, expand, ..., backup
    ExpandThenBackup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub num_stages: usize,
    pub expansions_per_stage: usize,
    pub schedule: Schedule,
    /// Backup convergence threshold as a fraction of the largest expected reward.
    pub epsilon_rel: f64,
    pub max_sweeps: usize,
    pub distance: DistanceMetric,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            num_stages: 4,
            expansions_per_stage: 2,
            schedule: Schedule::Interleaved,
            epsilon_rel: 1e-3,
            max_sweeps: 500,
            distance: DistanceMetric::L1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMetadata {
    pub num_stages: usize,
    pub expansions_per_stage: usize,
    pub schedule: Schedule,
    pub distance: DistanceMetric,
    pub epsilon_backup: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    /// Sweeps used by each backup stage, in execution order.
    pub sweeps: Vec<usize>,
    pub converged: Vec<bool>,
    pub belief_count: usize,
    pub alpha_count: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub alphas: Vec<AlphaVector>,
    pub model_hash: String,
    pub metadata: SolverMetadata,
}

impl Policy {
    pub fn action(&self, b: &Belief) -> usize {
        extract_action(&self.alphas, b)
    }

    pub fn value(&self, b: &Belief) -> f64 {
        best_alpha(&self.alphas, b).1
    }
}

/// Constant lower bound `min r̄ / (1 - ξ)` attached to action 0.
pub fn initial_bound(model: &PomdpModel) -> AlphaVector {
    let v = model.min_reward() / (1.0 - model.discount);
    AlphaVector {
        values: vec![v; model.num_states()],
        action: 0,
    }
}

/// Index and value of the α maximizing `α·b`, lowest index on ties.
pub fn best_alpha(alphas: &[AlphaVector], b: &Belief) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, a) in alphas.iter().enumerate() {
        let v = a.dot(b);
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

pub fn extract_action(alphas: &[AlphaVector], b: &Belief) -> usize {
    alphas[best_alpha(alphas, b).0].action
}

/// `T α` for every α in the current set, shared by all backups of a sweep.
struct Projections {
    t_alpha: Vec<Vec<f64>>,
}

impl Projections {
    fn new(model: &PomdpModel, alphas: &[AlphaVector]) -> Self {
        Self {
            t_alpha: alphas.iter().map(|a| model.transition.apply(&a.values)).collect(),
        }
    }
}

/// Point-based backup at `b`: the best `r̄_a + ξ Σ_z argmax_α α_{a,z}` over actions.
pub fn backup(model: &PomdpModel, b: &Belief, alphas: &[AlphaVector]) -> AlphaVector {
    let proj = Projections::new(model, alphas);
    backup_with(model, b, &proj).0
}

fn backup_with(model: &PomdpModel, b: &Belief, proj: &Projections) -> (AlphaVector, f64) {
    let nv = proj.t_alpha.len();
    let nz = model.num_observations();
    let states = &model.states;

    // Aggregate the belief-weighted projections by most recent cell; the
    // observation factor depends only on that cell.
    let support: Vec<(usize, f64)> = b.support().collect();
    let mut cells: Vec<usize> = Vec::new();
    let mut slot_of = Vec::with_capacity(support.len());
    for &(s, _) in &support {
        let c = states.last_cell(s);
        let k = match cells.iter().position(|&x| x == c) {
            Some(k) => k,
            None => {
                cells.push(c);
                cells.len() - 1
            }
        };
        slot_of.push(k);
    }
    let mut m = vec![0.0; cells.len() * nv];
    for (&(s, p), &k) in support.iter().zip(&slot_of) {
        let row = &mut m[k * nv..(k + 1) * nv];
        for (acc, ta) in row.iter_mut().zip(&proj.t_alpha) {
            *acc += p * ta[s];
        }
    }

    let mut dots = vec![0.0; nv];
    let mut choice = vec![0usize; nz];
    let mut best_choice = vec![0usize; nz];
    let mut best = (0usize, f64::NEG_INFINITY);
    for a in 0..model.num_actions() {
        let immediate: f64 = support.iter().map(|&(s, p)| p * model.reward(s, a)).sum();
        let mut future = 0.0;
        for z in 0..nz {
            dots.iter_mut().for_each(|d| *d = 0.0);
            let mut any = false;
            for (k, &c) in cells.iter().enumerate() {
                let o = model.obs_row_for_cell(a, c)[z];
                if o == 0.0 {
                    continue;
                }
                any = true;
                for (d, mv) in dots.iter_mut().zip(&m[k * nv..(k + 1) * nv]) {
                    *d += o * mv;
                }
            }
            if !any {
                choice[z] = 0;
                continue;
            }
            let mut arg = 0;
            for (i, d) in dots.iter().enumerate().skip(1) {
                if *d > dots[arg] {
                    arg = i;
                }
            }
            choice[z] = arg;
            future += dots[arg];
        }
        let value = immediate + model.discount * future;
        if value > best.1 {
            best = (a, value);
            best_choice.copy_from_slice(&choice);
        }
    }

    let a = best.0;
    let values: Vec<f64> = (0..model.num_states())
        .map(|s| {
            let row = model.obs_row_for_cell(a, states.last_cell(s));
            let future: f64 = row.iter().zip(&best_choice).map(|(o, &i)| o * proj.t_alpha[i][s]).sum();
            model.reward(s, a) + model.discount * future
        })
        .collect();
    let alpha = AlphaVector { values, action: a };
    let v = alpha.dot(b);
    (alpha, v)
}

/// Removes exact duplicates and vectors pointwise dominated by another,
/// keeping the first occurrence.
pub fn prune(alphas: Vec<AlphaVector>) -> Vec<AlphaVector> {
    let n = alphas.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        if !keep[i] {
            continue;
        }
        for j in 0..n {
            if i == j || !keep[j] {
                continue;
            }
            // Does j dominate i?
            let dominates = alphas[j].values.iter().zip(&alphas[i].values).all(|(x, y)| x >= y);
            if dominates {
                let equal = alphas[j].values == alphas[i].values;
                if !equal || j < i {
                    keep[i] = false;
                    break;
                }
            }
        }
    }
    alphas.into_iter().zip(keep).filter_map(|(a, k)| k.then_some(a)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub sweeps: usize,
    pub converged: bool,
    pub final_delta: f64,
    /// Point values `V(b)` after each sweep, including the starting values
    /// as entry 0. Only filled when requested.
    pub value_history: Vec<Vec<f64>>,
}

/// Repeats backups over every point in `beliefs` until
/// `max_b |V^{j+1}(b) - V^j(b)| < epsilon` or the sweep cap is hit.
///
/// A point whose fresh backup scores below its current value keeps its
/// current best vector, so point values never decrease.
pub fn backup_stage(
    model: &PomdpModel,
    beliefs: &BeliefSet,
    mut alphas: Vec<AlphaVector>,
    epsilon: f64,
    max_sweeps: usize,
    record_history: bool,
) -> (Vec<AlphaVector>, StageReport) {
    let points = beliefs.beliefs();
    let mut current: Vec<(usize, f64)> = points.par_iter().map(|b| best_alpha(&alphas, b)).collect();
    let mut history = Vec::new();
    if record_history {
        history.push(current.iter().map(|x| x.1).collect());
    }
    let mut report = StageReport {
        sweeps: 0,
        converged: false,
        final_delta: f64::INFINITY,
        value_history: Vec::new(),
    };
    for _ in 0..max_sweeps {
        let proj = Projections::new(model, &alphas);
        let backed: Vec<AlphaVector> = points
            .par_iter()
            .zip(current.par_iter())
            .map(|(b, &(idx, old))| {
                let (alpha, v) = backup_with(model, b, &proj);
                if v >= old {
                    alpha
                } else {
                    alphas[idx].clone()
                }
            })
            .collect();
        let next = prune(backed);
        let updated: Vec<(usize, f64)> = points.par_iter().map(|b| best_alpha(&next, b)).collect();
        let delta = updated.iter().zip(&current).map(|(n, o)| (n.1 - o.1).abs()).fold(0.0, f64::max);
        alphas = next;
        current = updated;
        report.sweeps += 1;
        report.final_delta = delta;
        if record_history {
            history.push(current.iter().map(|x| x.1).collect());
        }
        if delta < epsilon {
            report.converged = true;
            break;
        }
    }
    report.value_history = history;
    (alphas, report)
}

fn sample_index<R: Rng + ?Sized>(weights: impl Iterator<Item = (usize, f64)>, rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    last
}

/// One-step forward simulation of `b` under `a`: sample a state, then an
/// SNR bin from it, and return the posterior (if the bin is feasible).
pub fn simulate_successor<R: Rng + ?Sized>(model: &PomdpModel, b: &Belief, a: usize, rng: &mut R) -> Option<Belief> {
    let s = sample_index(b.support(), rng)?;
    let row = model.obs_row_for_cell(a, model.states.last_cell(s));
    let z = sample_index(row.iter().copied().enumerate(), rng)?;
    belief_update(model, b, a, z).ok()
}

fn distance_to_set(metric: DistanceMetric, b: &Belief, set: &[Belief]) -> f64 {
    set.iter().map(|x| metric.distance(b, x)).fold(f64::INFINITY, f64::min)
}

/// Grows the belief set: for each point, one simulated successor per
/// action, keeping the candidate farthest from the current set. At most
/// doubles the set.
pub fn expand_beliefs(model: &PomdpModel, beliefs: &BeliefSet, metric: DistanceMetric, seed: u64, round: usize) -> BeliefSet {
    let points = beliefs.beliefs();
    let chosen: Vec<Option<(Belief, f64)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let mut rng = rng::stream(seed, Domain::Expansion, rng::pack(round as u32, i as u32));
            let mut best: Option<(Belief, f64)> = None;
            for a in 0..model.num_actions() {
                let Some(cand) = simulate_successor(model, b, a, &mut rng) else {
                    continue;
                };
                let d = distance_to_set(metric, &cand, points);
                if best.as_ref().is_none_or(|(_, bd)| d > *bd) {
                    best = Some((cand, d));
                }
            }
            best
        })
        .collect();
    let mut out = beliefs.clone();
    for (cand, d) in chosen.into_iter().flatten() {
        if d > 0.0 {
            out.insert(cand, round);
        }
    }
    out
}

/// Result of a solve including per-stage diagnostics.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub policy: Policy,
    pub beliefs: BeliefSet,
    pub stages: Vec<StageReport>,
}

pub fn solve(model: &PomdpModel, b0: &Belief, cfg: &SolverConfig) -> Policy {
    solve_detailed(model, b0, cfg, false).policy
}

pub fn solve_detailed(model: &PomdpModel, b0: &Belief, cfg: &SolverConfig, record_history: bool) -> SolveOutcome {
    let epsilon = cfg.epsilon_rel * model.max_reward();
    let mut beliefs = BeliefSet::new(b0.clone());
    let mut alphas = vec![initial_bound(model)];
    let mut stages = Vec::new();
    let mut round = 0;
    let run_backup = |beliefs: &BeliefSet, alphas: Vec<AlphaVector>, stages: &mut Vec<StageReport>| {
        let (next, report) = backup_stage(model, beliefs, alphas, epsilon, cfg.max_sweeps, record_history);
        stages.push(report);
        next
    };
    for _ in 0..cfg.num_stages {
        match cfg.schedule {
            Schedule::Interleaved => {
                for _ in 0..cfg.expansions_per_stage {
                    round += 1;
                    beliefs = expand_beliefs(model, &beliefs, cfg.distance, cfg.seed, round);
                    alphas = run_backup(&beliefs, alphas, &mut stages);
                }
                if cfg.expansions_per_stage == 0 {
                    alphas = run_backup(&beliefs, alphas, &mut stages);
                }
            }
            Schedule::ExpandThenBackup => {
                for _ in 0..cfg.expansions_per_stage {
                    round += 1;
                    beliefs = expand_beliefs(model, &beliefs, cfg.distance, cfg.seed, round);
                }
                alphas = run_backup(&beliefs, alphas, &mut stages);
            }
        }
    }
    let warnings = stages
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.converged)
        .map(|(i, r)| format!("backup stage {i} hit the {}-sweep cap (last change {:.3e})", r.sweeps, r.final_delta))
        .collect();
    let metadata = SolverMetadata {
        num_stages: cfg.num_stages,
        expansions_per_stage: cfg.expansions_per_stage,
        schedule: cfg.schedule,
        distance: cfg.distance,
        epsilon_backup: epsilon,
        max_sweeps: cfg.max_sweeps,
        seed: cfg.seed,
        sweeps: stages.iter().map(|r| r.sweeps).collect(),
        converged: stages.iter().map(|r| r.converged).collect(),
        belief_count: beliefs.len(),
        alpha_count: alphas.len(),
        warnings,
    };
    SolveOutcome {
        policy: Policy {
            alphas,
            model_hash: model.model_hash.clone(),
            metadata,
        },
        beliefs,
        stages,
    }
}
