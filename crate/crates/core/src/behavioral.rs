//! Quantal level-k (QLk, three levels) behavioral model and the multinomial
//! likelihood of observed population actions given latent behaviors.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::game_model::{Matrix5, PayoffMatrix, Policy, Role, N_ACTIONS};
use crate::temporal::BehaviorPath;

/// Number of latent behaviors: level-0, level-1, level-2.
pub const N_BEHAVIORS: usize = 3;

pub type ActionDist = [f64; N_ACTIONS];

/// Precisions `(level-1, level-1 as imagined by level-2, level-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QlkParams(pub [f64; 3]);

impl QlkParams {
    pub fn level1(&self) -> f64 {
        self.0[0]
    }

    pub fn level1_as_believed(&self) -> f64 {
        self.0[1]
    }

    pub fn level2(&self) -> f64 {
        self.0[2]
    }
}

/// Share of the population adopting each behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorDist([f64; N_BEHAVIORS]);

impl BehaviorDist {
    pub fn new(beta: [f64; N_BEHAVIORS]) -> Result<Self> {
        if beta.iter().any(|&b| !(b.is_finite() && b >= 0.0)) {
            return Err(Error::Range(format!(
                "behavior shares must be nonnegative, got {beta:?}"
            )));
        }
        let total: f64 = beta.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Range(format!(
                "behavior shares sum to {total}, not 1"
            )));
        }
        Ok(Self(beta))
    }

    /// Caller guarantees the simplex invariant (up to rounding).
    pub(crate) fn from_normalized(beta: [f64; N_BEHAVIORS]) -> Self {
        debug_assert!((beta.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{beta:?}");
        Self(beta)
    }

    pub fn uniform() -> Self {
        Self([1.0 / 3.0; 3])
    }

    pub fn as_array(&self) -> &[f64; N_BEHAVIORS] {
        &self.0
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// Action distribution of each behavior for one role in one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMatrix {
    /// `columns[k]` is the action distribution of behavior level-k.
    columns: [ActionDist; N_BEHAVIORS],
    role: Role,
    policy: Policy,
}

impl StrategyMatrix {
    pub fn column(&self, k: usize) -> &ActionDist {
        &self.columns[k]
    }

    pub fn columns(&self) -> &[ActionDist; N_BEHAVIORS] {
        &self.columns
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }
}

/// Observed action frequencies of both roles in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationAction {
    pub row_freq: ActionDist,
    pub col_freq: ActionDist,
    pub effective_count: u32,
}

impl PopulationAction {
    pub fn new(row_freq: ActionDist, col_freq: ActionDist, effective_count: u32) -> Result<Self> {
        if effective_count == 0 {
            return Err(Error::Range("effective count must be at least 1".into()));
        }
        for (name, freq) in [("row", &row_freq), ("column", &col_freq)] {
            if freq.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
                return Err(Error::Range(format!(
                    "{name} frequencies outside [0, 1]: {freq:?}"
                )));
            }
            let total: f64 = freq.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Range(format!("{name} frequencies sum to {total}")));
            }
        }
        Ok(Self {
            row_freq,
            col_freq,
            effective_count,
        })
    }

    pub fn freq(&self, role: Role) -> &ActionDist {
        match role {
            Role::Row => &self.row_freq,
            Role::Column => &self.col_freq,
        }
    }

    /// Row block followed by column block.
    pub fn concat(&self) -> [f64; 2 * N_ACTIONS] {
        concat_blocks(&self.row_freq, &self.col_freq)
    }

    pub fn with_effective_count(&self, effective_count: u32) -> Result<Self> {
        Self::new(self.row_freq, self.col_freq, effective_count)
    }

    pub fn counts(&self, role: Role) -> [u32; N_ACTIONS] {
        largest_remainder_counts(self.freq(role), self.effective_count)
    }
}

pub(crate) fn concat_blocks(row: &ActionDist, col: &ActionDist) -> [f64; 2 * N_ACTIONS] {
    let mut out = [0.0; 2 * N_ACTIONS];
    out[..N_ACTIONS].copy_from_slice(row);
    out[N_ACTIONS..].copy_from_slice(col);
    out
}

/// Quantal best response: softmax of `precision * u`.
pub fn qbr(u: &[f64], precision: f64) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    qbr_into(u, precision, &mut out);
    out
}

pub(crate) fn qbr_into(u: &[f64], precision: f64, out: &mut [f64]) {
    debug_assert_eq!(u.len(), out.len());
    let max = u
        .iter()
        .map(|&v| precision * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(u) {
        *o = (precision * v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn mat_vec(m: &Matrix5, v: &ActionDist) -> ActionDist {
    let mut out = [0.0; N_ACTIONS];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

fn qbr5(u: &ActionDist, precision: f64) -> ActionDist {
    let mut out = [0.0; N_ACTIONS];
    qbr_into(u, precision, &mut out);
    out
}

/// Level-0 plays uniformly, level-1 quantal-best-responds to level-0, level-2
/// quantal-best-responds to a level-1 player of precision `λ[2]`.
pub fn qlk_strategy_matrix(
    game: &PayoffMatrix,
    lambda: &QlkParams,
    role: Role,
    negate_column: bool,
) -> StrategyMatrix {
    let payoffs = game.role_payoffs(role, negate_column);
    let level0 = [1.0 / N_ACTIONS as f64; N_ACTIONS];
    let u1 = mat_vec(&payoffs, &level0);
    let level1 = qbr5(&u1, lambda.level1());
    let imagined_level1 = qbr5(&u1, lambda.level1_as_believed());
    let u2 = mat_vec(&payoffs, &imagined_level1);
    let level2 = qbr5(&u2, lambda.level2());
    StrategyMatrix {
        columns: [level0, level1, level2],
        role,
        policy: game.policy(),
    }
}

/// `Q · β`.
pub fn expected_population_action(q: &StrategyMatrix, beta: &BehaviorDist) -> ActionDist {
    let mut out = [0.0; N_ACTIONS];
    for (col, &b) in q.columns.iter().zip(beta.as_array()) {
        for (o, &p) in out.iter_mut().zip(col) {
            *o += b * p;
        }
    }
    out
}

/// Integer counts summing exactly to `n`; leftover units go to the largest
/// fractional parts, ties to the lower index.
pub fn largest_remainder_counts(freq: &[f64], n: u32) -> [u32; N_ACTIONS] {
    debug_assert_eq!(freq.len(), N_ACTIONS);
    let mut counts = [0u32; N_ACTIONS];
    let mut remainders = [(0.0f64, 0usize); N_ACTIONS];
    let mut assigned = 0u32;
    for (i, &f) in freq.iter().enumerate() {
        let exact = f * n as f64;
        let floor = exact.floor();
        counts[i] = floor as u32;
        assigned += counts[i];
        remainders[i] = (exact - floor, i);
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let deficit = n.saturating_sub(assigned) as usize;
    for &(_, i) in remainders.iter().cycle().take(deficit) {
        counts[i] += 1;
    }
    counts
}

/// Multinomial log-pmf including the log multinomial coefficient.
pub fn log_multinomial_pmf(counts: &[u32], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    let mut log_p = ln_factorial(n);
    for (&c, &p) in counts.iter().zip(probs) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_p += c as f64 * p.ln() - ln_factorial(c as u64);
    }
    log_p
}

pub fn log_action_likelihood(
    obs: &PopulationAction,
    alpha_bar_row: &ActionDist,
    alpha_bar_col: &ActionDist,
) -> f64 {
    log_multinomial_pmf(&obs.counts(Role::Row), alpha_bar_row)
        + log_multinomial_pmf(&obs.counts(Role::Column), alpha_bar_col)
}

/// Sum over the panel's periods of the per-period action log-likelihood.
pub fn log_panel_likelihood(
    panel: &[PopulationAction],
    path: &BehaviorPath,
    game: &PayoffMatrix,
    lambda: &QlkParams,
    negate_column: bool,
) -> Result<f64> {
    let q_row = qlk_strategy_matrix(game, lambda, Role::Row, negate_column);
    let q_col = qlk_strategy_matrix(game, lambda, Role::Column, negate_column);
    PanelCounts::new(panel).log_likelihood(&q_row, &q_col, path.betas())
}

/// Panel with its integer counts and multinomial coefficients precomputed,
/// for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct PanelCounts {
    periods: Vec<[[u32; N_ACTIONS]; 2]>,
    log_coefficient: f64,
}

impl PanelCounts {
    pub fn new(panel: &[PopulationAction]) -> Self {
        let mut log_coefficient = 0.0;
        let periods = panel
            .iter()
            .map(|obs| {
                let counts = [obs.counts(Role::Row), obs.counts(Role::Column)];
                for c in &counts {
                    let n: u64 = c.iter().map(|&k| k as u64).sum();
                    log_coefficient +=
                        ln_factorial(n) - c.iter().map(|&k| ln_factorial(k as u64)).sum::<f64>();
                }
                counts
            })
            .collect();
        Self {
            periods,
            log_coefficient,
        }
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn log_likelihood(
        &self,
        q_row: &StrategyMatrix,
        q_col: &StrategyMatrix,
        betas: &[BehaviorDist],
    ) -> Result<f64> {
        if betas.len() < self.periods.len() {
            return Err(Error::LengthMismatch {
                panel: self.periods.len(),
                path: betas.len(),
            });
        }
        let mut total = self.log_coefficient;
        for (counts, beta) in self.periods.iter().zip(betas) {
            for (role_counts, q) in counts.iter().zip([q_row, q_col]) {
                let alpha_bar = expected_population_action(q, beta);
                for (&c, &p) in role_counts.iter().zip(&alpha_bar) {
                    if c == 0 {
                        continue;
                    }
                    if p <= 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += c as f64 * p.ln();
                }
            }
        }
        Ok(total)
    }
}
