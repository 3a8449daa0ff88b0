//! Monte Carlo evaluation of agents on simulated user trajectories.
//!
//! Each trial draws its trajectory and its noise sequence from separate
//! streams keyed by the trial index, and every agent sees the same pair.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, BandConfig, LinkGeometry, PropagationConstants};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::Road;
use crate::mobility::{MobilityModel, Position};
use crate::pbvi::Policy;
use crate::pomdp::{action_gain, belief_update, Action, Belief, PomdpModel};
use crate::rng::{stream, Domain};
use crate::stats::{mean_with_ci, MeanEstimate};
use crate::units::kmh_to_mps;

/// Ground truth the agents act in.
#[derive(Debug, Clone)]
pub struct Environment {
    pub road: Road,
    /// Every band of the experiment, indexed by channel.
    pub bands: Vec<BandConfig>,
    pub consts: PropagationConstants,
    pub mobility: MobilityModel,
    pub thresholds: Vec<f64>,
}

impl Environment {
    pub fn from_config(cfg: &ExperimentConfig, p: f64) -> Result<Self> {
        Ok(Self {
            road: cfg.road()?,
            bands: cfg.band_configs()?,
            consts: cfg.propagation_constants(),
            mobility: cfg.mobility_model(p)?,
            thresholds: cfg.thresholds()?,
        })
    }

    pub fn band(&self, channel: usize) -> Result<&BandConfig> {
        self.bands
            .get(channel)
            .ok_or_else(|| Error::invalid("channel", format!("no band with index {channel}")))
    }

    /// Expected rate with the beam aligned on the center of `cell`.
    pub fn aligned_expected_rate(&self, channel: usize, cell: usize) -> Result<f64> {
        let c = self.road.cell(cell)?;
        let band = self.band(channel)?;
        let g = channel::gain(&self.consts, band, &LinkGeometry::aligned(c.r, c.theta, c.phi));
        channel::expected_rate(band, g)
    }

    /// Cell-averaged expected rate of a perfectly aligned link on `channel`.
    pub fn perfect_information_rate(&self, channel: usize) -> Result<f64> {
        let n = self.road.num_cells();
        let mut total = 0.0;
        for u in 0..n {
            total += self.aligned_expected_rate(channel, u)?;
        }
        Ok(total / n as f64)
    }
}

#[derive(Debug, Clone)]
pub enum AgentKind {
    Policy { model: Arc<PomdpModel>, policy: Arc<Policy> },
    /// Knows the true cell; per-cell decisions are precomputed.
    Oracle { table: Vec<Action> },
    /// Repeats one action regardless of feedback.
    Blind { action: Action },
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub label: String,
    pub kind: AgentKind,
}

impl Agent {
    pub fn policy(label: impl Into<String>, model: Arc<PomdpModel>, policy: Arc<Policy>) -> Self {
        Self {
            label: label.into(),
            kind: AgentKind::Policy { model, policy },
        }
    }

    /// Aligned beam on the true cell and the channel with the highest
    /// expected rate among `channels`. Ties go to the lowest channel index.
    pub fn oracle(label: impl Into<String>, env: &Environment, channels: &[usize]) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("channels", "oracle needs at least one channel"));
        }
        let mut table = Vec::with_capacity(env.road.num_cells());
        for u in 0..env.road.num_cells() {
            table.push(oracle_action(env, u, channels)?);
        }
        Ok(Self {
            label: label.into(),
            kind: AgentKind::Oracle { table },
        })
    }

    pub fn blind(label: impl Into<String>, action: Action) -> Self {
        Self {
            label: label.into(),
            kind: AgentKind::Blind { action },
        }
    }
}

pub fn oracle_action(env: &Environment, cell: usize, channels: &[usize]) -> Result<Action> {
    let c = env.road.cell(cell)?;
    let mut best: Option<(usize, f64)> = None;
    let mut sorted = channels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for ch in sorted {
        let v = env.aligned_expected_rate(ch, cell)?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((ch, v));
        }
    }
    let (channel, _) = best.expect("non-empty channel list");
    Ok(Action {
        theta_hat: c.theta,
        phi_hat: c.phi,
        channel,
        target_cell: Some(cell),
    })
}

/// One slot of a trial, with enough detail to recompute the rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    /// True window, 1-based cells, `num_cells + 1` for outside.
    pub true_state: Vec<usize>,
    /// True 1-based cell.
    pub cell: usize,
    /// Index into the agent's own action set, when it has one.
    pub action_index: Option<usize>,
    pub theta_hat: f64,
    pub phi_hat: f64,
    pub channel: usize,
    pub bandwidth_hz: f64,
    pub gain: f64,
    /// Unit-mean exponential draw shared by all agents in this slot.
    pub noise_draw: f64,
    pub noise_power_w: f64,
    pub snr: f64,
    pub observation: usize,
    pub rate_bps: f64,
    /// Belief at decision time (policy agents, when recorded).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub belief: Option<Vec<f64>>,
    /// The posterior was undefined and the belief was reset.
    pub reset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub agent: String,
    pub trial: usize,
    pub seed: u64,
    pub slots: Vec<SlotRecord>,
}

impl TrialTrace {
    pub fn mean_rate(&self) -> f64 {
        if self.slots.is_empty() {
            return 0.0;
        }
        crate::stats::compensated_sum(self.slots.iter().map(|s| s.rate_bps)) / self.slots.len() as f64
    }

    pub fn resets(&self) -> usize {
        self.slots.iter().filter(|s| s.reset).count()
    }
}

/// Random-walk trajectory of `horizon` cells starting in a uniform cell.
pub fn sample_path<R: Rng + ?Sized>(mobility: &MobilityModel, horizon: usize, start: &mut R, steps: &mut R) -> Result<Vec<usize>> {
    let mut path = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok(path);
    }
    let mut cur = start.random_range(0..mobility.num_cells);
    let mut prev = Position::Outside;
    path.push(cur);
    while path.len() < horizon {
        let next = mobility.sample_next(cur, prev, steps)?;
        prev = Position::Cell(cur);
        cur = next;
        path.push(cur);
    }
    Ok(path)
}

/// Constant-speed traversal from the road start. The user at
/// `y_min + v t Δt` occupies the cell whose half-open span contains it;
/// the trace ends when the user leaves the road or after `max_slots`.
pub fn fixed_path(road: &Road, speed_kmh: f64, slot_s: f64, max_slots: usize) -> Result<Vec<usize>> {
    if !(speed_kmh > 0.0) || !(slot_s > 0.0) {
        return Err(Error::invalid("speed_kmh", "speed and slot length must be positive"));
    }
    let step = kmh_to_mps(speed_kmh) * slot_s;
    let y0 = road.scene.road_y_min_m;
    let mut path = Vec::new();
    while path.len() < max_slots {
        let y = y0 + step * path.len() as f64;
        if y >= road.scene.road_y_max_m {
            break;
        }
        match road.cell_containing(y) {
            Some(u) => path.push(u),
            None => break,
        }
    }
    Ok(path)
}

fn encode_true_window(num_cells: usize, window: usize, path: &[usize], t: usize) -> Vec<usize> {
    (0..window)
        .rev()
        .map(|k| if t >= k { path[t - k] + 1 } else { num_cells + 1 })
        .collect()
}

/// Runs `agent` along `path`, consuming one exponential draw per slot.
pub fn run_on_path<R: Rng + ?Sized>(
    env: &Environment,
    agent: &Agent,
    path: &[usize],
    noise: &mut R,
    record_belief: bool,
) -> Result<Vec<SlotRecord>> {
    let n = env.road.num_cells();
    let mut belief = match &agent.kind {
        AgentKind::Policy { model, .. } => Some(model.initial_belief()),
        _ => None,
    };
    let mut out = Vec::with_capacity(path.len());
    for (t, &cell) in path.iter().enumerate() {
        let (action, action_index) = match &agent.kind {
            AgentKind::Policy { model, policy } => {
                let a = policy.action(belief.as_ref().expect("policy agents track a belief"));
                (*model.actions.get(a), Some(a))
            }
            AgentKind::Oracle { table } => (table[cell], None),
            AgentKind::Blind { action } => (*action, None),
        };
        let band = *env.band(action.channel)?;
        let gain = action_gain(&env.road, &env.bands, &env.consts, &action, cell)?;
        let draw: f64 = noise.sample(rand_distr::Exp1);
        let noise_power = band.noise_variance_w * draw;
        let snr = if gain > 0.0 { gain / noise_power } else { 0.0 };
        let z = channel::snr_bin(&env.thresholds, snr);
        let rate = channel::rate(band.bandwidth_hz, snr);
        let recorded = if record_belief { belief.as_ref().map(|b| b.as_slice().to_vec()) } else { None };
        let mut reset = false;
        if let (AgentKind::Policy { model, .. }, Some(idx)) = (&agent.kind, action_index) {
            let b = belief.as_ref().expect("policy agents track a belief");
            belief = Some(match belief_update(model, b, idx, z) {
                Ok(next) => next,
                Err(Error::ImpossibleObservation { .. }) => {
                    reset = true;
                    Belief::uniform(model.num_states())
                }
                Err(e) => return Err(e),
            });
        }
        out.push(SlotRecord {
            slot: t,
            true_state: encode_true_window(n, env.mobility.window, path, t),
            cell: cell + 1,
            action_index,
            theta_hat: action.theta_hat,
            phi_hat: action.phi_hat,
            channel: action.channel,
            bandwidth_hz: band.bandwidth_hz,
            gain,
            noise_draw: draw,
            noise_power_w: noise_power,
            snr,
            observation: z,
            rate_bps: rate,
            belief: recorded,
            reset,
        });
    }
    Ok(out)
}

/// Single random-walk trial of `horizon` slots.
pub fn run_trial(env: &Environment, agent: &Agent, horizon: usize, seed: u64, trial: usize, record_belief: bool) -> Result<TrialTrace> {
    let path = trial_path(env, horizon, seed, trial)?;
    let mut noise = stream(seed, Domain::Noise, trial as u64);
    let slots = run_on_path(env, agent, &path, &mut noise, record_belief)?;
    Ok(TrialTrace {
        agent: agent.label.clone(),
        trial,
        seed,
        slots,
    })
}

fn trial_path(env: &Environment, horizon: usize, seed: u64, trial: usize) -> Result<Vec<usize>> {
    let mut start = stream(seed, Domain::Start, trial as u64);
    let mut steps = stream(seed, Domain::Path, trial as u64);
    sample_path(&env.mobility, horizon, &mut start, &mut steps)
}

/// Aggregated results for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent: String,
    pub mean_rate_bps: f64,
    pub ci_half_width: f64,
    pub std_dev: f64,
    pub confidence: f64,
    pub num_trials: usize,
    /// Share of slots spent on each channel of the experiment.
    pub utilization: Vec<f64>,
    pub resets: usize,
    pub trial_means: Vec<f64>,
    /// Per-slot rate averaged over trials.
    pub slot_mean_rates: Vec<f64>,
}

impl AgentMetrics {
    pub fn estimate(&self) -> MeanEstimate {
        MeanEstimate {
            mean: self.mean_rate_bps,
            half_width: self.ci_half_width,
            std_dev: self.std_dev,
            count: self.num_trials,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: Vec<AgentMetrics>,
    /// Full traces, ordered by trial then agent, when requested.
    pub traces: Vec<TrialTrace>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub num_trials: usize,
    pub seed: u64,
    pub confidence: f64,
    pub keep_traces: bool,
    pub record_belief: bool,
}

fn aggregate(env: &Environment, agents: &[Agent], per_trial: &[Vec<Vec<SlotRecord>>], confidence: f64) -> Vec<AgentMetrics> {
    agents
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            let runs: Vec<&Vec<SlotRecord>> = per_trial.iter().map(|t| &t[i]).collect();
            let trial_means: Vec<f64> = runs
                .iter()
                .map(|slots| {
                    if slots.is_empty() {
                        0.0
                    } else {
                        crate::stats::compensated_sum(slots.iter().map(|s| s.rate_bps)) / slots.len() as f64
                    }
                })
                .collect();
            let est = mean_with_ci(&trial_means, confidence);
            let mut counts = vec![0usize; env.bands.len()];
            let mut total = 0usize;
            let mut resets = 0usize;
            let len = runs.iter().map(|r| r.len()).max().unwrap_or(0);
            let mut slot_sums = vec![crate::stats::CompensatedSum::default(); len];
            let mut slot_counts = vec![0usize; len];
            for slots in &runs {
                for s in slots.iter() {
                    counts[s.channel] += 1;
                    total += 1;
                    resets += s.reset as usize;
                    slot_sums[s.slot].add(s.rate_bps);
                    slot_counts[s.slot] += 1;
                }
            }
            let utilization = counts.iter().map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 }).collect();
            let slot_mean_rates = slot_sums
                .iter()
                .zip(&slot_counts)
                .map(|(s, &c)| if c > 0 { s.value() / c as f64 } else { 0.0 })
                .collect();
            AgentMetrics {
                agent: agent.label.clone(),
                mean_rate_bps: est.mean,
                ci_half_width: est.half_width,
                std_dev: est.std_dev,
                confidence,
                num_trials: runs.len(),
                utilization,
                resets,
                trial_means,
                slot_mean_rates,
            }
        })
        .collect()
}

fn evaluate<F>(env: &Environment, agents: &[Agent], opts: &EvalOptions, path_for: F) -> Result<Evaluation>
where
    F: Fn(usize) -> Result<Vec<usize>> + Sync,
{
    let per_trial: Vec<Vec<Vec<SlotRecord>>> = (0..opts.num_trials)
        .into_par_iter()
        .map(|trial| {
            let path = path_for(trial)?;
            let base = stream(opts.seed, Domain::Noise, trial as u64);
            agents
                .iter()
                .map(|agent| {
                    let mut noise = base.clone();
                    run_on_path(env, agent, &path, &mut noise, opts.record_belief)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let metrics = aggregate(env, agents, &per_trial, opts.confidence);
    let traces = if opts.keep_traces {
        per_trial
            .into_iter()
            .enumerate()
            .flat_map(|(trial, runs)| {
                runs.into_iter().zip(agents).map(move |(slots, agent)| TrialTrace {
                    agent: agent.label.clone(),
                    trial,
                    seed: opts.seed,
                    slots,
                })
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Evaluation { metrics, traces })
}

/// Random-walk trials of `horizon` slots with common random numbers across agents.
pub fn monte_carlo(env: &Environment, agents: &[Agent], horizon: usize, opts: &EvalOptions) -> Result<Evaluation> {
    evaluate(env, agents, opts, |trial| trial_path(env, horizon, opts.seed, trial))
}

/// Trials along the constant-speed traversal; only the noise varies.
pub fn fixed_path_eval(env: &Environment, agents: &[Agent], speed_kmh: f64, slot_s: f64, max_slots: usize, opts: &EvalOptions) -> Result<Evaluation> {
    let path = fixed_path(&env.road, speed_kmh, slot_s, max_slots)?;
    evaluate(env, agents, opts, |_| Ok(path.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Environment {
        Environment::from_config(&ExperimentConfig::default(), 0.5).unwrap()
    }

    fn opts(n: usize) -> EvalOptions {
        EvalOptions {
            num_trials: n,
            seed: 9,
            confidence: 0.95,
            keep_traces: true,
            record_belief: false,
        }
    }

    #[test]
    fn fixed_path_slot_counts() {
        let e = env();
        // 20 m/s over 0.25 s slots crosses a 20 m cell in 4 slots.
        let path = fixed_path(&e.road, 72.0, 0.25, 10_000).unwrap();
        assert_eq!(path.len(), 48);
        for u in 0..12 {
            assert_eq!(path.iter().filter(|&&c| c == u).count(), 4);
        }
        let capped = fixed_path(&e.road, 0.001, 0.25, 50).unwrap();
        assert_eq!(capped.len(), 50);
    }

    #[test]
    fn paths_move_at_most_one_cell() {
        let e = env();
        let mut a = stream(1, Domain::Start, 0);
        let mut b = stream(1, Domain::Path, 0);
        let p = sample_path(&e.mobility, 300, &mut a, &mut b).unwrap();
        assert_eq!(p.len(), 300);
        assert!(p.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1));
    }

    #[test]
    fn common_noise_across_agents() {
        let e = env();
        let agents = vec![
            Agent::oracle("oracle", &e, &[0, 1, 2]).unwrap(),
            Agent::oracle("oracle_f15", &e, &[0]).unwrap(),
        ];
        let ev = monte_carlo(&e, &agents, 20, &opts(3)).unwrap();
        for pair in ev.traces.chunks(2) {
            for (x, y) in pair[0].slots.iter().zip(&pair[1].slots) {
                assert_eq!(x.noise_draw, y.noise_draw);
                assert_eq!(x.cell, y.cell);
            }
        }
    }

    #[test]
    fn recorded_rate_recomputes() {
        let e = env();
        let agents = vec![Agent::oracle("oracle", &e, &[0, 1, 2]).unwrap()];
        let ev = monte_carlo(&e, &agents, 30, &opts(2)).unwrap();
        for s in ev.traces.iter().flat_map(|t| &t.slots) {
            let snr = s.gain / s.noise_power_w;
            assert_eq!(channel::rate(s.bandwidth_hz, snr), s.rate_bps);
            assert_eq!(s.true_state.len(), 2);
            assert_eq!(s.true_state[1], s.cell);
        }
    }

    #[test]
    fn oracle_prefers_strongest_expected_rate() {
        let e = env();
        for u in 0..12 {
            let a = oracle_action(&e, u, &[0, 1, 2]).unwrap();
            let best = (0..3).map(|c| e.aligned_expected_rate(c, u).unwrap()).fold(f64::MIN, f64::max);
            assert_eq!(e.aligned_expected_rate(a.channel, u).unwrap(), best);
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let e = env();
        let agents = vec![Agent::oracle("oracle", &e, &[0, 1, 2]).unwrap()];
        let a = monte_carlo(&e, &agents, 25, &opts(4)).unwrap();
        let b = monte_carlo(&e, &agents, 25, &opts(4)).unwrap();
        assert_eq!(a.metrics, b.metrics);
    }
}
