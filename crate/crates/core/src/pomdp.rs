//! Discrete POMDP for joint beam and channel selection.
//!
//! States are windows of the last `w` user positions, actions are
//! (beam direction, channel) pairs, observations are SNR bins. Observation
//! and reward tables depend on a state only through its most recent cell, so
//! they are stored per cell and expanded on demand.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::channel::{self, BandConfig, LinkGeometry, PropagationConstants};
use crate::error::{Error, Result};
use crate::geometry::Road;
use crate::mobility::{self, MobilityModel, Position};
use crate::units::db_to_linear;

/// Enumerated location windows with a two-way index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    window: usize,
    num_cells: usize,
    windows: Vec<Vec<Position>>,
    index: HashMap<Vec<Position>, usize>,
    last_cell: Vec<usize>,
}

impl StateSpace {
    /// Feasible windows only. For `w = 2`: the `M_r` no-history windows
    /// `(outside, u_i)` first, then in-road pairs `(u_i, u_j)` with
    /// `|i - j| <= 1` in lexicographic order. For `w = 1`: one state per cell.
    pub fn enumerate(num_cells: usize, window: usize) -> Result<Self> {
        if num_cells < 2 {
            return Err(Error::invalid("num_cells", "need at least 2 cells"));
        }
        let windows = match window {
            1 => (0..num_cells).map(|c| vec![Position::Cell(c)]).collect(),
            2 => {
                let mut w: Vec<Vec<Position>> = (0..num_cells).map(|c| vec![Position::Outside, Position::Cell(c)]).collect();
                for prev in 0..num_cells {
                    for cur in prev.saturating_sub(1)..=(prev + 1).min(num_cells - 1) {
                        w.push(vec![Position::Cell(prev), Position::Cell(cur)]);
                    }
                }
                w
            }
            _ => return Err(Error::invalid("mobility.window", "only windows 1 and 2 are supported")),
        };
        Self::from_windows(num_cells, window, windows)
    }

    pub fn from_windows(num_cells: usize, window: usize, windows: Vec<Vec<Position>>) -> Result<Self> {
        let mut index = HashMap::with_capacity(windows.len());
        let mut last_cell = Vec::with_capacity(windows.len());
        for (i, w) in windows.iter().enumerate() {
            if w.len() != window {
                return Err(Error::DimensionMismatch {
                    what: "state window".into(),
                    expected: window,
                    actual: w.len(),
                });
            }
            let last = w[window - 1]
                .cell()
                .ok_or_else(|| Error::invalid("state", "most recent slot must be an in-road cell"))?;
            for p in w {
                if let Position::Cell(c) = p {
                    if *c >= num_cells {
                        return Err(Error::CellOutOfRange {
                            index: *c,
                            num_cells,
                        });
                    }
                }
            }
            if w.windows(2).any(|pair| matches!((pair[0], pair[1]), (Position::Cell(a), Position::Cell(b)) if a.abs_diff(b) > 1)) {
                return Err(Error::invalid("state", format!("window {w:?} moves more than one cell per slot")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid("state", format!("duplicate window {w:?}")));
            }
            last_cell.push(last);
        }
        Ok(Self {
            window,
            num_cells,
            windows,
            index,
            last_cell,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn windows(&self) -> &[Vec<Position>] {
        &self.windows
    }

    pub fn index_of(&self, window: &[Position]) -> Option<usize> {
        self.index.get(window).copied()
    }

    /// Most recent cell `u_w` of state `s`.
    pub fn last_cell(&self, s: usize) -> usize {
        self.last_cell[s]
    }

    pub fn last_cells(&self) -> &[usize] {
        &self.last_cell
    }

    /// States whose history carries no information about past movement.
    pub fn no_history_states(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&s| self.window == 1 || self.windows[s][..self.window - 1].iter().all(|p| *p == Position::Outside))
            .collect()
    }

    /// Whether `to` can follow `from`: the first `w-1` slots of `to` equal
    /// the last `w-1` slots of `from`.
    pub fn shift_compatible(&self, from: usize, to: usize) -> bool {
        let (a, b) = (&self.windows[from], &self.windows[to]);
        a[1..] == b[..self.window - 1]
    }
}

/// Sparse row-stochastic matrix over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        Self {
            rows: dense
                .iter()
                .map(|r| r.iter().enumerate().filter(|(_, p)| **p != 0.0).map(|(j, p)| (j, *p)).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn get(&self, s: usize, next: usize) -> f64 {
        self.rows[s].iter().find(|(j, _)| *j == next).map_or(0.0, |(_, p)| *p)
    }

    /// `(T v)[s] = Σ_{s'} T(s, s') v[s']`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, p)| p * v[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![0.0; n];
                for &(j, p) in row {
                    d[j] += p;
                }
                d
            })
            .collect()
    }
}

/// A beam direction paired with a channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub theta_hat: f64,
    pub phi_hat: f64,
    /// Index into the experiment's band list.
    pub channel: usize,
    /// Cell whose center the beam points at, when it points at one.
    pub target_cell: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub actions: Vec<Action>,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, a: usize) -> &Action {
        &self.actions[a]
    }

    /// Channels present in the action set, in increasing order.
    pub fn channels(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.actions.iter().map(|a| a.channel).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Actions cell-major then channel. With `full_cross_product` the beam set is
/// every (θ, φ) pair drawn from the cells' azimuths and elevations instead of
/// the cell-center directions.
pub fn enumerate_actions(road: &Road, bands: &[BandConfig], full_cross_product: bool) -> ActionSpace {
    let mut actions = Vec::new();
    if full_cross_product {
        for ct in &road.cells {
            for cp in &road.cells {
                let target = (ct.index == cp.index).then_some(ct.index - 1);
                for band in bands {
                    actions.push(Action {
                        theta_hat: ct.theta,
                        phi_hat: cp.phi,
                        channel: band.index,
                        target_cell: target,
                    });
                }
            }
        }
    } else {
        for cell in &road.cells {
            for band in bands {
                actions.push(Action {
                    theta_hat: cell.theta,
                    phi_hat: cell.phi,
                    channel: band.index,
                    target_cell: Some(cell.index - 1),
                });
            }
        }
    }
    ActionSpace { actions }
}

/// `M_z - 1` interior SNR thresholds equally spaced in dB across
/// `[low_db, high_db]` (both endpoints included), in linear scale.
pub fn snr_thresholds(num_levels: usize, low_db: f64, high_db: f64) -> Result<Vec<f64>> {
    if num_levels < 2 {
        return Err(Error::invalid("discretization.num_levels", "need at least 2 levels"));
    }
    let n = num_levels - 1;
    if n == 1 {
        if low_db > high_db {
            return Err(Error::invalid("discretization.low_db", "must not exceed high_db"));
        }
        return Ok(vec![db_to_linear(low_db)]);
    }
    if !(low_db < high_db) {
        return Err(Error::invalid("discretization.low_db", "must be below high_db"));
    }
    let step = (high_db - low_db) / (n - 1) as f64;
    let t: Vec<f64> = (0..n).map(|i| db_to_linear(low_db + step * i as f64)).collect();
    channel::validate_thresholds(&t)?;
    Ok(t)
}

fn band_for<'a>(bands: &'a [BandConfig], channel: usize) -> Result<&'a BandConfig> {
    bands.iter().find(|b| b.index == channel).ok_or_else(|| Error::invalid("action.channel", format!("unknown channel {channel}")))
}

/// Beam gain when user is at the center of `cell` and `action` is taken.
pub fn action_gain(road: &Road, bands: &[BandConfig], consts: &PropagationConstants, action: &Action, cell: usize) -> Result<f64> {
    let c = road.cell(cell)?;
    let band = band_for(bands, action.channel)?;
    let geom = LinkGeometry {
        r: c.r,
        theta: c.theta,
        phi: c.phi,
        theta_hat: action.theta_hat,
        phi_hat: action.phi_hat,
    };
    Ok(channel::gain(consts, band, &geom))
}

/// `O[a][u][z]`, flattened action-major.
pub fn build_observation_tensor(
    road: &Road,
    bands: &[BandConfig],
    consts: &PropagationConstants,
    actions: &ActionSpace,
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(actions.len() * road.num_cells() * (thresholds.len() + 1));
    for action in &actions.actions {
        let band = band_for(bands, action.channel)?;
        for cell in 0..road.num_cells() {
            let g = action_gain(road, bands, consts, action, cell)?;
            out.extend(channel::observation_probs(band, g, thresholds)?);
        }
    }
    Ok(out)
}

/// `r̄[a][u]`: expected rate over the noise for action `a` with the user at cell `u`.
pub fn build_reward_vectors(road: &Road, bands: &[BandConfig], consts: &PropagationConstants, actions: &ActionSpace) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(actions.len() * road.num_cells());
    for action in &actions.actions {
        let band = band_for(bands, action.channel)?;
        for cell in 0..road.num_cells() {
            let g = action_gain(road, bands, consts, action, cell)?;
            out.push(channel::expected_rate(band, g)?);
        }
    }
    Ok(out)
}

/// Everything needed to assemble a model.
#[derive(Debug, Clone)]
pub struct ModelInputs<'a> {
    pub road: &'a Road,
    /// Bands available to the agent (a subset for single-frequency variants).
    pub bands: &'a [BandConfig],
    pub consts: &'a PropagationConstants,
    pub mobility: &'a MobilityModel,
    pub thresholds: &'a [f64],
    pub discount: f64,
    pub full_cross_product: bool,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    pub states: StateSpace,
    pub actions: ActionSpace,
    pub bands: Vec<BandConfig>,
    pub transition: TransitionMatrix,
    /// `O[a][u][z]` flattened.
    obs: Vec<f64>,
    /// `r̄[a][u]` flattened.
    reward: Vec<f64>,
    pub discount: f64,
    pub thresholds: Vec<f64>,
    pub config_hash: String,
    pub model_hash: String,
}

impl PomdpModel {
    pub fn build(inputs: &ModelInputs<'_>) -> Result<Self> {
        if !(inputs.discount > 0.0 && inputs.discount < 1.0) {
            return Err(Error::invalid("solver.discount", "must lie in (0, 1)"));
        }
        if inputs.bands.is_empty() {
            return Err(Error::invalid("bands", "at least one band is required"));
        }
        if inputs.mobility.num_cells != inputs.road.num_cells() {
            return Err(Error::DimensionMismatch {
                what: "mobility cells".into(),
                expected: inputs.road.num_cells(),
                actual: inputs.mobility.num_cells,
            });
        }
        channel::validate_thresholds(inputs.thresholds)?;
        let states = StateSpace::enumerate(inputs.road.num_cells(), inputs.mobility.window)?;
        let transition = mobility::transition_matrix(inputs.mobility, &states)?;
        let actions = enumerate_actions(inputs.road, inputs.bands, inputs.full_cross_product);
        let obs = build_observation_tensor(inputs.road, inputs.bands, inputs.consts, &actions, inputs.thresholds)?;
        let reward = build_reward_vectors(inputs.road, inputs.bands, inputs.consts, &actions)?;
        Self::from_parts(
            states,
            actions,
            inputs.bands.to_vec(),
            transition,
            obs,
            reward,
            inputs.discount,
            inputs.thresholds.to_vec(),
            inputs.config_hash.clone(),
        )
    }

    /// Assembles a model from precomputed per-cell tables and validates it.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        states: StateSpace,
        actions: ActionSpace,
        bands: Vec<BandConfig>,
        transition: TransitionMatrix,
        obs: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        thresholds: Vec<f64>,
        config_hash: String,
    ) -> Result<Self> {
        let num_cells = states.num_cells();
        let num_obs = thresholds.len() + 1;
        let check = |what: &str, expected: usize, actual: usize| {
            if expected != actual {
                Err(Error::DimensionMismatch {
                    what: what.into(),
                    expected,
                    actual,
                })
            } else {
                Ok(())
            }
        };
        check("transition rows", states.len(), transition.len())?;
        check("observation tensor", actions.len() * num_cells * num_obs, obs.len())?;
        check("reward table", actions.len() * num_cells, reward.len())?;
        for (s, row) in (0..transition.len()).map(|s| (s, transition.row(s))) {
            let total: f64 = row.iter().map(|x| x.1).sum();
            if (total - 1.0).abs() > 1e-12 || row.iter().any(|(j, p)| *j >= states.len() || !(*p >= 0.0)) {
                return Err(Error::invalid("transition", format!("row {s} is not a distribution")));
            }
        }
        for (i, row) in obs.chunks(num_obs).enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::invalid("observation", format!("row {i} is not a distribution")));
            }
        }
        if reward.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid("reward", "expected rewards must be finite and non-negative"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid("discount", "must lie in (0, 1)"));
        }
        let mut model = Self {
            states,
            actions,
            bands,
            transition,
            obs,
            reward,
            discount,
            thresholds,
            config_hash,
            model_hash: String::new(),
        };
        model.model_hash = crate::artifact::model_hash(&model);
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn num_cells(&self) -> usize {
        self.states.num_cells()
    }

    /// Observation distribution for action `a` with the user at `cell`.
    pub fn obs_row_for_cell(&self, a: usize, cell: usize) -> &[f64] {
        let m = self.num_observations();
        let start = (a * self.num_cells() + cell) * m;
        &self.obs[start..start + m]
    }

    pub fn obs(&self, s: usize, a: usize, z: usize) -> f64 {
        self.obs_row_for_cell(a, self.states.last_cell(s))[z]
    }

    pub fn reward_for_cell(&self, a: usize, cell: usize) -> f64 {
        self.reward[a * self.num_cells() + cell]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward_for_cell(a, self.states.last_cell(s))
    }

    /// `r̄_a` expanded over states.
    pub fn reward_vector(&self, a: usize) -> Vec<f64> {
        (0..self.num_states()).map(|s| self.reward(s, a)).collect()
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn obs_table(&self) -> &[f64] {
        &self.obs
    }

    pub fn max_reward(&self) -> f64 {
        self.reward.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_reward(&self) -> f64 {
        self.reward.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn band(&self, channel: usize) -> Option<&BandConfig> {
        self.bands.iter().find(|b| b.index == channel)
    }

    /// Uniform over the no-history states.
    pub fn initial_belief(&self) -> Belief {
        let support = self.states.no_history_states();
        let mut b = vec![0.0; self.num_states()];
        let w = 1.0 / support.len() as f64;
        for s in support {
            b[s] = w;
        }
        Belief(b)
    }

    /// Predictive observation distribution `P(z | b, a)`.
    pub fn observation_distribution(&self, b: &Belief, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_observations()];
        for (s, p) in b.support() {
            for (o, q) in out.iter_mut().zip(self.obs_row_for_cell(a, self.states.last_cell(s))) {
                *o += p * q;
            }
        }
        out
    }
}

/// Probability distribution over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("belief", "entries must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::invalid("belief", format!("entries sum to {total}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, s: usize) -> Self {
        let mut v = vec![0.0; n];
        v[s] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Non-zero entries as `(state, probability)`.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.iter().copied().enumerate().filter(|(_, p)| *p > 0.0)
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.support().map(|(s, p)| p * v[s]).sum()
    }

    pub fn l1_distance(&self, other: &Belief) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn l2_distance(&self, other: &Belief) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// Bayes update after taking `a` and observing `z`.
///
/// The SNR bin is generated by the state in which the action was taken,
/// and the belief is then propagated through the mobility dynamics:
/// `b'[s'] ∝ Σ_s T(s, s') O(s, a, z) b[s]`.
pub fn belief_update(model: &PomdpModel, b: &Belief, a: usize, z: usize) -> Result<Belief> {
    let n = model.num_states();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "belief".into(),
            expected: n,
            actual: b.len(),
        });
    }
    let mut weighted = Vec::with_capacity(8);
    let mut norm = 0.0;
    for (s, p) in b.support() {
        let w = p * model.obs(s, a, z);
        if w > 0.0 {
            weighted.push((s, w));
            norm += w;
        }
    }
    if !(norm >= f64::MIN_POSITIVE) || !norm.is_finite() {
        return Err(Error::ImpossibleObservation { action: a, observation: z });
    }
    let mut next = vec![0.0; n];
    for (s, w) in weighted {
        let w = w / norm;
        for &(j, t) in model.transition.row(s) {
            next[j] += w * t;
        }
    }
    let total: f64 = next.iter().sum();
    for x in &mut next {
        *x /= total;
    }
    Ok(Belief(next))
}
