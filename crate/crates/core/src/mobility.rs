//! Order-w Markov road mobility and the state-transition law it induces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pomdp::{StateSpace, TransitionMatrix};

/// A slot in a location window: an in-road cell (0-based) or the
/// out-of-coverage marker used to encode "no history".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    Outside,
    Cell(usize),
}

impl Position {
    pub fn cell(self) -> Option<usize> {
        match self {
            Position::Cell(c) => Some(c),
            Position::Outside => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityModel {
    /// History window length. 2 reproduces the road model; 1 drops the
    /// history and uses the no-history law everywhere.
    pub window: usize,
    pub p: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub num_cells: usize,
}

impl MobilityModel {
    pub fn new(window: usize, p: f64, kappa1: f64, kappa2: f64, num_cells: usize) -> Result<Self> {
        let m = Self {
            window,
            p,
            kappa1,
            kappa2,
            num_cells,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window == 1 || self.window == 2) {
            return Err(Error::invalid("mobility.window", "only windows 1 and 2 are supported"));
        }
        for (name, v) in [("mobility.p", self.p), ("mobility.kappa1", self.kappa1), ("mobility.kappa2", self.kappa2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} is not a probability")));
            }
        }
        if self.num_cells < 2 {
            return Err(Error::invalid("mobility.num_cells", "need at least 2 cells"));
        }
        Ok(())
    }

    fn check_cell(&self, c: usize) -> Result<()> {
        if c >= self.num_cells {
            Err(Error::CellOutOfRange {
                index: c,
                num_cells: self.num_cells,
            })
        } else {
            Ok(())
        }
    }

    /// Unnormalized weights for (move down, stay, move up) given the current
    /// cell and the one before it.
    fn raw_weights(&self, prev: usize, prev2: Position) -> Result<[f64; 3]> {
        let (p, k1, k2) = (self.p, self.kappa1, self.kappa2);
        let history = if self.window == 1 { Position::Outside } else { prev2 };
        let w = match history {
            Position::Outside => {
                let side = 0.5 * (1.0 - p);
                [side, p, side]
            }
            Position::Cell(h) if h == prev => {
                let side = 0.5 * (1.0 - k2 * p);
                [side, k2 * p, side]
            }
            // Came from below: the heading is upwards.
            Position::Cell(h) if h + 1 == prev => [(1.0 - k1) * (1.0 - p), p, k1 * (1.0 - p)],
            Position::Cell(h) if h == prev + 1 => [k1 * (1.0 - p), p, (1.0 - k1) * (1.0 - p)],
            Position::Cell(h) => {
                self.check_cell(h)?;
                return Err(Error::invalid(
                    "mobility history",
                    format!("cell {h} is not adjacent to cell {prev}"),
                ));
            }
        };
        Ok(w)
    }

    /// Successor distribution `(cell, probability)` in increasing cell order.
    ///
    /// At road ends the missing neighbour's mass is removed and the rest is
    /// renormalized. If nothing remains (e.g. a certain continuation off the
    /// road end) the available successors are taken as equiprobable.
    pub fn successors(&self, prev: usize, prev2: Position) -> Result<Vec<(usize, f64)>> {
        self.check_cell(prev)?;
        let raw = self.raw_weights(prev, prev2)?;
        let mut out = Vec::with_capacity(3);
        for (offset, w) in raw.iter().enumerate() {
            let cell = prev as isize + offset as isize - 1;
            if cell >= 0 && (cell as usize) < self.num_cells {
                out.push((cell as usize, *w));
            }
        }
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        if total > 0.0 {
            for (_, w) in &mut out {
                *w /= total;
            }
        } else {
            let n = out.len() as f64;
            for (_, w) in &mut out {
                *w = 1.0 / n;
            }
        }
        Ok(out)
    }

    /// Probability of moving to `next` given the current cell `prev` and the
    /// previous position `prev2`.
    pub fn prob(&self, next: usize, prev: usize, prev2: Position) -> Result<f64> {
        self.check_cell(next)?;
        Ok(self
            .successors(prev, prev2)?
            .into_iter()
            .find(|(c, _)| *c == next)
            .map_or(0.0, |(_, w)| w))
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, prev: usize, prev2: Position, rng: &mut R) -> Result<usize> {
        let succ = self.successors(prev, prev2)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(c, w) in &succ {
            acc += w;
            if u < acc {
                return Ok(c);
            }
        }
        Ok(succ.last().map(|(c, _)| *c).unwrap_or(prev))
    }
}

/// Builds the action-independent transition matrix over the enumerated
/// windows: the successor window is the old one shifted by one slot with the
/// new cell appended, weighted by the mobility law.
pub fn transition_matrix(model: &MobilityModel, states: &StateSpace) -> Result<TransitionMatrix> {
    if states.window() != model.window {
        return Err(Error::DimensionMismatch {
            what: "state window".into(),
            expected: model.window,
            actual: states.window(),
        });
    }
    let mut rows = Vec::with_capacity(states.len());
    for window in states.windows() {
        let cur = window[window.len() - 1]
            .cell()
            .ok_or_else(|| Error::invalid("state", "last window slot must be an in-road cell"))?;
        let prev2 = if window.len() >= 2 { window[window.len() - 2] } else { Position::Outside };
        let mut row = Vec::with_capacity(3);
        for (next, prob) in model.successors(cur, prev2)? {
            if prob == 0.0 {
                continue;
            }
            let mut succ: Vec<Position> = window[1..].to_vec();
            succ.push(Position::Cell(next));
            let idx = states.index_of(&succ).ok_or_else(|| {
                Error::invalid("state space", format!("successor window {succ:?} is not enumerated"))
            })?;
            row.push((idx, prob));
        }
        rows.push(row);
    }
    Ok(TransitionMatrix::from_rows(rows))
}
