//! Versioned JSON artifacts for models and policies.
//!
//! Windows are written with 1-based cell indices and `M_r + 1` for the
//! out-of-coverage marker. Tensors are written fully expanded over states;
//! the loader re-derives the per-cell tables and refuses files whose content
//! does not reproduce the recorded model hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::BandConfig;
use crate::error::{Error, Result};
use crate::mobility::Position;
use crate::pbvi::{AlphaVector, Policy, SolverMetadata};
use crate::pomdp::{Action, ActionSpace, PomdpModel, StateSpace, TransitionMatrix};

pub const MODEL_FORMAT: &str = "cruise-model";
pub const POLICY_FORMAT: &str = "cruise-policy";
pub const MODEL_VERSION: u32 = 1;
pub const POLICY_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode_window(w: &[Position], num_cells: usize) -> Vec<usize> {
    w.iter()
        .map(|p| match p {
            Position::Outside => num_cells + 1,
            Position::Cell(c) => c + 1,
        })
        .collect()
}

fn decode_window(w: &[usize], num_cells: usize) -> Result<Vec<Position>> {
    w.iter()
        .map(|&i| match i {
            0 => Err(Error::Artifact("cell indices are 1-based".into())),
            i if i == num_cells + 1 => Ok(Position::Outside),
            i if i <= num_cells => Ok(Position::Cell(i - 1)),
            i => Err(Error::CellOutOfRange { index: i, num_cells }),
        })
        .collect()
}

#[derive(Serialize)]
struct HashView<'a> {
    num_cells: usize,
    window: usize,
    states: Vec<Vec<usize>>,
    actions: &'a [Action],
    bands: &'a [BandConfig],
    transition: &'a TransitionMatrix,
    obs_by_cell: &'a [f64],
    reward_by_cell: &'a [f64],
    discount: f64,
    thresholds: &'a [f64],
    config_hash: &'a str,
}

/// Content hash over the model's canonical serialization.
pub fn model_hash(model: &PomdpModel) -> String {
    let n = model.num_cells();
    let view = HashView {
        num_cells: n,
        window: model.states.window(),
        states: model.states.windows().iter().map(|w| encode_window(w, n)).collect(),
        actions: &model.actions.actions,
        bands: &model.bands,
        transition: &model.transition,
        obs_by_cell: model.obs_table(),
        reward_by_cell: model.reward_table(),
        discount: model.discount,
        thresholds: &model.thresholds,
        config_hash: &model.config_hash,
    };
    sha256_hex(&serde_json::to_vec(&view).expect("model serializes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub model_hash: String,
    pub num_cells: usize,
    pub window: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_observations: usize,
    pub states: Vec<Vec<usize>>,
    pub actions: Vec<Action>,
    pub bands: Vec<BandConfig>,
    pub discount: f64,
    pub thresholds: Vec<f64>,
    /// Sparse rows `[(next_state, probability)]`.
    pub transition: Vec<Vec<(usize, f64)>>,
    /// `observation[a][s][z]`.
    pub observation: Vec<Vec<Vec<f64>>>,
    /// `reward[a][s]`.
    pub reward: Vec<Vec<f64>>,
}

impl ModelArtifact {
    pub fn from_model(model: &PomdpModel) -> Self {
        let n = model.num_cells();
        let (ns, na, nz) = (model.num_states(), model.num_actions(), model.num_observations());
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config_hash: model.config_hash.clone(),
            model_hash: model.model_hash.clone(),
            num_cells: n,
            window: model.states.window(),
            num_states: ns,
            num_actions: na,
            num_observations: nz,
            states: model.states.windows().iter().map(|w| encode_window(w, n)).collect(),
            actions: model.actions.actions.clone(),
            bands: model.bands.clone(),
            discount: model.discount,
            thresholds: model.thresholds.clone(),
            transition: (0..ns).map(|s| model.transition.row(s).to_vec()).collect(),
            observation: (0..na)
                .map(|a| (0..ns).map(|s| model.obs_row_for_cell(a, model.states.last_cell(s)).to_vec()).collect())
                .collect(),
            reward: (0..na).map(|a| model.reward_vector(a)).collect(),
        }
    }

    pub fn into_model(self) -> Result<PomdpModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Artifact(format!("not a model artifact (format `{}`)", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Artifact(format!("unsupported model artifact version {}", self.version)));
        }
        let windows = self
            .states
            .iter()
            .map(|w| decode_window(w, self.num_cells))
            .collect::<Result<Vec<_>>>()?;
        let states = StateSpace::from_windows(self.num_cells, self.window, windows)?;
        let (ns, na, nz) = (states.len(), self.actions.len(), self.thresholds.len() + 1);
        if self.observation.len() != na || self.reward.len() != na {
            return Err(Error::Artifact("per-action tensors do not match the action list".into()));
        }
        let mut obs = vec![f64::NAN; na * self.num_cells * nz];
        let mut reward = vec![f64::NAN; na * self.num_cells];
        for a in 0..na {
            if self.observation[a].len() != ns || self.reward[a].len() != ns {
                return Err(Error::Artifact(format!("action {a} tensors do not match the state list")));
            }
            for s in 0..ns {
                let c = states.last_cell(s);
                let row = &self.observation[a][s];
                if row.len() != nz {
                    return Err(Error::Artifact(format!("observation row ({a}, {s}) has {} bins", row.len())));
                }
                let slot = &mut obs[(a * self.num_cells + c) * nz..(a * self.num_cells + c + 1) * nz];
                if slot[0].is_nan() {
                    slot.copy_from_slice(row);
                } else if slot != row.as_slice() {
                    return Err(Error::Artifact(format!("observation rows for cell {} differ under action {a}", c + 1)));
                }
                let r = &mut reward[a * self.num_cells + c];
                if r.is_nan() {
                    *r = self.reward[a][s];
                } else if *r != self.reward[a][s] {
                    return Err(Error::Artifact(format!("rewards for cell {} differ under action {a}", c + 1)));
                }
            }
        }
        if obs.iter().any(|x| x.is_nan()) || reward.iter().any(|x| x.is_nan()) {
            return Err(Error::Artifact("some cells are not the last cell of any state".into()));
        }
        let model = PomdpModel::from_parts(
            states,
            ActionSpace { actions: self.actions },
            self.bands,
            TransitionMatrix::from_rows(self.transition),
            obs,
            reward,
            self.discount,
            self.thresholds,
            self.config_hash,
        )?;
        if model.model_hash != self.model_hash {
            return Err(Error::Artifact("model content does not match recorded hash".into()));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub format: String,
    pub version: u32,
    pub model_hash: String,
    pub config_hash: String,
    /// Agent label the policy was solved for.
    pub agent: String,
    pub states: Vec<Vec<usize>>,
    pub actions: Vec<Action>,
    pub alphas: Vec<AlphaVector>,
    pub metadata: SolverMetadata,
}

impl PolicyArtifact {
    pub fn new(policy: &Policy, model: &PomdpModel, agent: &str) -> Self {
        let n = model.num_cells();
        Self {
            format: POLICY_FORMAT.into(),
            version: POLICY_VERSION,
            model_hash: policy.model_hash.clone(),
            config_hash: model.config_hash.clone(),
            agent: agent.into(),
            states: model.states.windows().iter().map(|w| encode_window(w, n)).collect(),
            actions: model.actions.actions.clone(),
            alphas: policy.alphas.clone(),
            metadata: policy.metadata.clone(),
        }
    }

    /// Validates the artifact against `model` and returns the policy.
    pub fn into_policy(self, model: &PomdpModel) -> Result<Policy> {
        if self.format != POLICY_FORMAT {
            return Err(Error::Artifact(format!("not a policy artifact (format `{}`)", self.format)));
        }
        if self.version != POLICY_VERSION {
            return Err(Error::Artifact(format!("unsupported policy artifact version {}", self.version)));
        }
        if self.model_hash != model.model_hash {
            return Err(Error::Artifact(format!(
                "policy was solved for model {} but model {} was supplied",
                self.model_hash, model.model_hash
            )));
        }
        if self.alphas.is_empty() {
            return Err(Error::Artifact("policy has no alpha vectors".into()));
        }
        for a in &self.alphas {
            if a.values.len() != model.num_states() || a.action >= model.num_actions() || a.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Artifact("alpha vector inconsistent with model".into()));
            }
        }
        Ok(Policy {
            alphas: self.alphas,
            model_hash: self.model_hash,
            metadata: self.metadata,
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec(value).map_err(|e| Error::Artifact(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))
}
