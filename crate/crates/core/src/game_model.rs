//! The 5×5 win/lose payoff structure shared by both policies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_ACTIONS: usize = 5;

pub type Matrix5 = [[f64; N_ACTIONS]; N_ACTIONS];

/// Win (`true`) / lose (`false`) layout, rows are row-player actions a1..a5,
/// columns are column-player actions a1'..a5'.
const WIN_PATTERN: [[bool; N_ACTIONS]; N_ACTIONS] = [
    [true, false, false, false, false],
    [false, false, true, true, true],
    [false, true, false, false, true],
    [false, true, false, true, false],
    [false, true, true, false, false],
];

/// The two policies under comparison: 0 is the baseline, 1 the new one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Policy {
    Control,
    Treatment,
}

impl Policy {
    pub const ALL: [Policy; 2] = [Policy::Control, Policy::Treatment];

    pub fn index(self) -> usize {
        match self {
            Policy::Control => 0,
            Policy::Treatment => 1,
        }
    }

    pub fn from_index(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Policy::Control),
            1 => Ok(Policy::Treatment),
            other => Err(Error::InvalidConfig(format!(
                "policy id must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn other(self) -> Self {
        match self {
            Policy::Control => Policy::Treatment,
            Policy::Treatment => Policy::Control,
        }
    }
}

impl From<Policy> for u8 {
    fn from(p: Policy) -> u8 {
        p.index() as u8
    }
}

impl TryFrom<u8> for Policy {
    type Error = Error;
    fn try_from(id: u8) -> Result<Self> {
        Policy::from_index(id)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Row,
    Column,
}

impl Role {
    pub const ALL: [Role; 2] = [Role::Row, Role::Column];
}

/// Payoff matrix of one policy, entries paid per round to the row agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    entries: Matrix5,
    win_value: f64,
    lose_value: f64,
    policy: Policy,
}

impl PayoffMatrix {
    pub fn new(win_value: f64, lose_value: f64, policy: Policy) -> Result<Self> {
        if !win_value.is_finite() || !lose_value.is_finite() {
            return Err(Error::Range(format!(
                "payoff values must be finite, got W={win_value}, L={lose_value}"
            )));
        }
        if win_value == lose_value {
            return Err(Error::DegenerateGame(win_value));
        }
        let mut entries = [[0.0; N_ACTIONS]; N_ACTIONS];
        for (row, pattern) in entries.iter_mut().zip(WIN_PATTERN.iter()) {
            for (cell, &win) in row.iter_mut().zip(pattern.iter()) {
                *cell = if win { win_value } else { lose_value };
            }
        }
        Ok(Self {
            entries,
            win_value,
            lose_value,
            policy,
        })
    }

    /// Baseline game of the experiment, (W, L) = (10, -6).
    pub fn experiment_control() -> Self {
        Self::new(10.0, -6.0, Policy::Control).expect("non-degenerate")
    }

    /// New-policy game of the experiment, (W, L) = (15, -1).
    pub fn experiment_treatment() -> Self {
        Self::new(15.0, -1.0, Policy::Treatment).expect("non-degenerate")
    }

    pub fn entries(&self) -> &Matrix5 {
        &self.entries
    }

    /// One-based accessor matching the a_i / a_j' labels.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row - 1][col - 1]
    }

    pub fn win_value(&self) -> f64 {
        self.win_value
    }

    pub fn lose_value(&self) -> f64 {
        self.lose_value
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Utility matrix seen by `role`: rows index that role's own actions.
    ///
    /// The column role gets the plain transpose unless `negate_column` is set,
    /// in which case it gets the strictly zero-sum `-Gᵀ`.
    pub fn role_payoffs(&self, role: Role, negate_column: bool) -> Matrix5 {
        match role {
            Role::Row => self.entries,
            Role::Column => {
                let mut t = transpose(&self.entries);
                if negate_column {
                    t.iter_mut().flatten().for_each(|v| *v = -*v);
                }
                t
            }
        }
    }
}

pub(crate) fn transpose(m: &Matrix5) -> Matrix5 {
    let mut t = [[0.0; N_ACTIONS]; N_ACTIONS];
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}
