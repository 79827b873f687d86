//! Synthetic experiments with known ground truth.
//!
//! A [`SyntheticScenario`] fixes every model parameter. [`generate_experiment`]
//! runs the generative model forward to produce observed panels, and
//! [`oracle_ce`] estimates the true long-term effect by brute-force forward
//! simulation of the all-treated and all-control economies.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavioral::{
    concat_blocks, expected_population_action, qlk_strategy_matrix, ActionDist, BehaviorDist,
    PopulationAction, QlkParams, StrategyMatrix,
};
use crate::error::{Error, Result};
use crate::estimator::{
    dot, lace_estimate, pivot_initial, ActionVector, EstimatorConfig, ParamDraw, PolicyData, Prior,
};
use crate::game_model::{PayoffMatrix, Policy, Role, N_ACTIONS};
use crate::rng::{derive_seed, policy_lane, stream, Domain, SHARED_LANE};
use crate::temporal::{
    normal_noise, sample_dirichlet, sample_var1_path, InitParams, TemporalParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub truth: ParamDraw,
    pub treated_game: PayoffMatrix,
    pub control_game: PayoffMatrix,
    pub n_agents_per_game: u32,
    /// Last observed period.
    pub t0: usize,
    pub horizon: usize,
    pub rho: f64,
    pub negate_column_payoffs: bool,
    pub seed: u64,
}

impl Default for SyntheticScenario {
    /// Desk-scale scenario shaped like the two-game experiment: 20 agents per
    /// game, periods 0..=2 observed, horizon 3. The treated game widens the
    /// win/lose gap so the two policies induce different play.
    fn default() -> Self {
        Self {
            truth: ParamDraw {
                phi: InitParams([3.0, 2.0, 2.0]),
                psi: TemporalParams([0.2, 0.7, 0.5]),
                lambda: QlkParams([0.3, 0.2, 0.4]),
            },
            treated_game: PayoffMatrix::new(20.0, -6.0, Policy::Treatment).expect("valid"),
            control_game: PayoffMatrix::experiment_control(),
            n_agents_per_game: 20,
            t0: 2,
            horizon: 3,
            rho: 0.5,
            negate_column_payoffs: false,
            seed: 2016,
        }
    }
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<()> {
        if self.t0 >= self.horizon {
            return Err(Error::InvalidConfig(format!(
                "t0 = {} must be below the horizon {}",
                self.t0, self.horizon
            )));
        }
        if self.n_agents_per_game == 0 {
            return Err(Error::InvalidConfig(
                "need at least one agent per game".into(),
            ));
        }
        if self.treated_game.policy() == self.control_game.policy() {
            return Err(Error::InvalidConfig(
                "the two games must carry different policy ids".into(),
            ));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scenario: Self = serde_json::from_str(s)?;
        scenario.validate()?;
        Ok(scenario)
    }

    fn games(&self) -> [&PayoffMatrix; 2] {
        [&self.treated_game, &self.control_game]
    }

    fn strategies(&self, game: &PayoffMatrix) -> [StrategyMatrix; 2] {
        Role::ALL.map(|role| {
            qlk_strategy_matrix(game, &self.truth.lambda, role, self.negate_column_payoffs)
        })
    }

    /// Estimator settings whose prior is a point mass at this scenario's truth.
    pub fn point_mass_config(&self, iterations: usize, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            iterations,
            horizon: self.horizon,
            rho: self.rho,
            seed,
            effective_count: self.n_agents_per_game,
            share_params_across_games: true,
            negate_column_payoffs: self.negate_column_payoffs,
            prior: Prior::point_mass(&self.truth),
        }
    }
}

/// Multinomial draw by sequential conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(
    n: u32,
    probs: &ActionDist,
    rng: &mut R,
) -> [u32; N_ACTIONS] {
    let mut counts = [0u32; N_ACTIONS];
    let mut remaining = n as u64;
    let mut mass_left = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == N_ACTIONS - 1 {
            counts[i] = remaining as u32;
            break;
        }
        let q = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = Binomial::new(remaining, q)
            .expect("probability in [0, 1]")
            .sample(rng);
        counts[i] = k as u32;
        remaining -= k;
        mass_left -= p;
    }
    counts
}

fn sample_action<R: Rng + ?Sized>(
    strategies: &[StrategyMatrix; 2],
    beta: &BehaviorDist,
    n: u32,
    rng: &mut R,
) -> PopulationAction {
    let freq = |q: &StrategyMatrix, rng: &mut R| {
        sample_multinomial(n, &expected_population_action(q, beta), rng)
            .map(|c| c as f64 / n as f64)
    };
    let row = freq(&strategies[0], rng);
    let col = freq(&strategies[1], rng);
    PopulationAction {
        row_freq: row,
        col_freq: col,
        effective_count: n,
    }
}

/// `ρ·β₁(0) + (1 − ρ)·β₀(0)` with both arms' initial behaviors drawn
/// independently from `Dir(φ)`, the same construction the estimator's prior
/// uses.
fn draw_pivot<R: Rng + ?Sized>(scenario: &SyntheticScenario, rng: &mut R) -> Result<BehaviorDist> {
    let control = sample_dirichlet(&scenario.truth.phi, rng)?;
    let treated = sample_dirichlet(&scenario.truth.phi, rng)?;
    Ok(pivot_initial(&treated, &control, scenario.rho))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExperiment {
    pub pivot: BehaviorDist,
    /// Periods `0..=t0` of the treated game.
    pub treated: Vec<PopulationAction>,
    pub control: Vec<PopulationAction>,
}

/// Simulate the observed panels of one A/B experiment.
pub fn generate_experiment(scenario: &SyntheticScenario) -> Result<SyntheticExperiment> {
    scenario.validate()?;
    let mut rng = stream(scenario.seed, Domain::OracleData, SHARED_LANE, 0);
    let pivot = draw_pivot(scenario, &mut rng)?;
    let mut panels = [Vec::new(), Vec::new()];
    for (panel, game) in panels.iter_mut().zip(scenario.games()) {
        let lane = policy_lane(game.policy().index());
        let mut noise = stream(scenario.seed, Domain::OracleData, lane, 0);
        let path = sample_var1_path(
            &scenario.truth.psi,
            &pivot,
            scenario.t0,
            normal_noise(&mut noise),
        );
        let strategies = scenario.strategies(game);
        let mut actions = stream(scenario.seed, Domain::OracleData, lane, 1);
        *panel = path
            .betas()
            .iter()
            .map(|b| sample_action(&strategies, b, scenario.n_agents_per_game, &mut actions))
            .collect();
    }
    let [treated, control] = panels;
    Ok(SyntheticExperiment {
        pivot,
        treated,
        control,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Horizon actions are multinomial samples from the scenario's agents.
    Sampled,
    /// Horizon actions are their expectations (infinitely many agents).
    ExpectedFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: usize,
}

/// Mean and standard error of `values`.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Brute-force `CE(T)`: mean of `fee·(α₁(T; 𝟙) − α₀(T; 𝟘))` over independent
/// forward simulations.
pub fn oracle_ce(
    scenario: &SyntheticScenario,
    fee: &ActionVector,
    n_mc: usize,
) -> Result<OracleEstimate> {
    oracle_ce_with(scenario, fee, n_mc, OracleMode::Sampled)
}

pub fn oracle_ce_with(
    scenario: &SyntheticScenario,
    fee: &ActionVector,
    n_mc: usize,
    mode: OracleMode,
) -> Result<OracleEstimate> {
    scenario.validate()?;
    if n_mc < 100 {
        return Err(Error::InvalidConfig(format!(
            "oracle needs at least 100 replicates, got {n_mc}"
        )));
    }
    let games = scenario.games();
    let strategies = games.map(|g| scenario.strategies(g));
    let values = (0..n_mc as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(scenario.seed, Domain::OracleEffect, SHARED_LANE, r);
            let pivot = draw_pivot(scenario, &mut rng)?;
            let mut revenue = [0.0; 2];
            for ((rev, game), strat) in revenue.iter_mut().zip(games).zip(&strategies) {
                let lane = policy_lane(game.policy().index());
                let mut noise = stream(scenario.seed, Domain::OracleEffect, lane, r);
                let path = sample_var1_path(
                    &scenario.truth.psi,
                    &pivot,
                    scenario.horizon,
                    normal_noise(&mut noise),
                );
                let beta_t = path.last();
                let action = match mode {
                    OracleMode::Sampled => {
                        sample_action(strat, beta_t, scenario.n_agents_per_game, &mut noise)
                            .concat()
                    }
                    OracleMode::ExpectedFrequency => concat_blocks(
                        &expected_population_action(&strat[0], beta_t),
                        &expected_population_action(&strat[1], beta_t),
                    ),
                };
                *rev = dot(fee, &action);
            }
            Ok(revenue[0] - revenue[1])
        })
        .collect::<Result<Vec<_>>>()?;
    let (estimate, std_error) = mean_and_std_error(&values);
    Ok(OracleEstimate {
        estimate,
        std_error,
        replicates: n_mc,
    })
}

/// Closed-form effect when the path is noiseless from a known initial
/// behavior: `fee·(Q₁β_T − Q₀β_T)` in expected-frequency terms.
pub fn noiseless_effect(
    scenario: &SyntheticScenario,
    fee: &ActionVector,
    pivot: &BehaviorDist,
) -> f64 {
    let path = sample_var1_path(&scenario.truth.psi, pivot, scenario.horizon, || [0.0, 0.0]);
    let beta_t = path.last();
    let games = scenario.games();
    let value = |g: &PayoffMatrix| {
        let [r, c] = scenario.strategies(g);
        dot(
            fee,
            &concat_blocks(
                &expected_population_action(&r, beta_t),
                &expected_population_action(&c, beta_t),
            ),
        )
    };
    value(games[0]) - value(games[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySettings {
    /// Estimator iterations per synthetic experiment.
    pub iterations: usize,
    /// Independent synthetic experiments the estimate is averaged over.
    pub experiments: usize,
    /// Oracle forward-simulation replicates.
    pub oracle_replicates: usize,
}

impl Default for ConsistencySettings {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            experiments: 100,
            oracle_replicates: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub settings: ConsistencySettings,
    pub lace_mean: f64,
    pub lace_std_error: f64,
    pub oracle: OracleEstimate,
    pub combined_std_error: f64,
    /// `|lace_mean − oracle| / combined_std_error`.
    pub z_score: f64,
    pub min_effective_sample_size: f64,
}

impl ConsistencyReport {
    pub fn passed(&self, tolerance_se: f64) -> bool {
        self.z_score <= tolerance_se
    }
}

/// Compare the estimator under a point-mass prior at the truth against the
/// brute-force oracle.
///
/// The estimator targets the effect conditional on one experiment's data;
/// averaging it over independently generated experiments targets the
/// unconditional effect that the oracle computes.
pub fn consistency_check(
    scenario: &SyntheticScenario,
    fee: &ActionVector,
    settings: ConsistencySettings,
) -> Result<ConsistencyReport> {
    scenario.validate()?;
    if settings.experiments < 2 {
        return Err(Error::InvalidConfig(
            "need at least two synthetic experiments".into(),
        ));
    }
    let results = (0..settings.experiments as u64)
        .map(|k| {
            let data_scenario = SyntheticScenario {
                seed: derive_seed(scenario.seed, &[Domain::Validation as u64, k]),
                ..scenario.clone()
            };
            let exp = generate_experiment(&data_scenario)?;
            let cfg = scenario.point_mass_config(
                settings.iterations,
                derive_seed(scenario.seed, &[Domain::Estimator as u64, k]),
            );
            let est = lace_estimate(
                PolicyData::new(&exp.treated, &scenario.treated_game),
                PolicyData::new(&exp.control, &scenario.control_game),
                fee,
                &cfg,
            )?;
            Ok(est)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = results.iter().map(|e| e.ce_hat).collect();
    let min_ess = results
        .iter()
        .flat_map(|e| e.effective_sample_size)
        .fold(f64::INFINITY, f64::min);
    let (lace_mean, lace_std_error) = mean_and_std_error(&values);
    let oracle = oracle_ce(scenario, fee, settings.oracle_replicates)?;
    let combined_std_error = lace_std_error.hypot(oracle.std_error);
    Ok(ConsistencyReport {
        settings,
        lace_mean,
        lace_std_error,
        oracle,
        combined_std_error,
        z_score: (lace_mean - oracle.estimate).abs() / combined_std_error,
        min_effective_sample_size: min_ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::TemporalParams;

    const FEE: ActionVector = [0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];

    #[test]
    fn unit_root_without_noise_keeps_pivot() {
        let mut s = SyntheticScenario::default();
        s.truth.psi = TemporalParams([0.0, 1.0, 0.0]);
        s.n_agents_per_game = 100_000;
        let exp = generate_experiment(&s).unwrap();
        let [qr, qc] = s.strategies(&s.treated_game);
        let expected = expected_population_action(&qr, &exp.pivot);
        let expected_col = expected_population_action(&qc, &exp.pivot);
        for obs in &exp.treated {
            for (a, b) in obs.row_freq.iter().zip(&expected) {
                assert!((a - b).abs() < 0.01);
            }
            for (a, b) in obs.col_freq.iter().zip(&expected_col) {
                assert!((a - b).abs() < 0.01);
            }
        }
    }

    #[test]
    fn zero_precisions_give_uniform_expected_play() {
        let mut s = SyntheticScenario::default();
        s.truth.lambda = QlkParams([0.0; 3]);
        for g in s.games() {
            for q in s.strategies(g) {
                for k in 0..3 {
                    assert_eq!(*q.column(k), [0.2; 5]);
                }
            }
        }
        let v = oracle_ce_with(&s, &FEE, 200, OracleMode::ExpectedFrequency).unwrap();
        assert!(v.estimate.abs() < 1e-12);
    }

    #[test]
    fn experiments_are_seeded() {
        let s = SyntheticScenario::default();
        let a = generate_experiment(&s).unwrap();
        assert_eq!(a, generate_experiment(&s).unwrap());
        let other = SyntheticScenario {
            seed: 1,
            ..s.clone()
        };
        assert_ne!(a, generate_experiment(&other).unwrap());
        assert_eq!(a.treated.len(), s.t0 + 1);
        for obs in a.treated.iter().chain(&a.control) {
            assert!(PopulationAction::new(obs.row_freq, obs.col_freq, obs.effective_count).is_ok());
        }
    }

    #[test]
    fn multinomial_counts_sum_and_match_means() {
        let mut rng = stream(4, Domain::Validation, 0, 0);
        let p = [0.1, 0.4, 0.0, 0.3, 0.2];
        let mut acc = [0u64; 5];
        for _ in 0..20_000 {
            let c = sample_multinomial(20, &p, &mut rng);
            assert_eq!(c.iter().sum::<u32>(), 20);
            assert_eq!(c[2], 0);
            for (a, k) in acc.iter_mut().zip(c) {
                *a += k as u64;
            }
        }
        for (a, q) in acc.iter().zip(p) {
            assert!((*a as f64 / 400_000.0 - q).abs() < 0.005);
        }
    }

    #[test]
    fn symmetric_policies_have_no_effect() {
        let s = SyntheticScenario {
            treated_game: PayoffMatrix::new(10.0, -6.0, Policy::Treatment).unwrap(),
            ..Default::default()
        };
        let v = oracle_ce(&s, &FEE, 4_000).unwrap();
        assert!(v.estimate.abs() <= 3.0 * v.std_error, "{v:?}");
    }

    #[test]
    fn unit_fee_has_no_effect() {
        let v = oracle_ce(&SyntheticScenario::default(), &[1.0; 10], 500).unwrap();
        assert!(v.estimate.abs() < 1e-12);
    }

    #[test]
    fn expected_frequency_mode_matches_closed_form() {
        // Intercept-only dynamics forget the initial behavior after one step,
        // so every replicate lands on the same horizon behavior.
        let mut s = SyntheticScenario::default();
        s.truth.psi = TemporalParams([0.4, 0.0, 0.0]);
        let exact = noiseless_effect(&s, &FEE, &BehaviorDist::uniform());
        assert!(exact.abs() > 1e-3);
        let v = oracle_ce_with(&s, &FEE, 300, OracleMode::ExpectedFrequency).unwrap();
        assert!((v.estimate - exact).abs() < 1e-12);
        let sampled = oracle_ce(
            &SyntheticScenario {
                n_agents_per_game: 2_000,
                ..s
            },
            &FEE,
            2_000,
        )
        .unwrap();
        assert!((sampled.estimate - exact).abs() <= 3.0 * sampled.std_error);
    }

    #[test]
    fn std_error_shrinks_like_root_n() {
        let s = SyntheticScenario::default();
        let small = oracle_ce(&s, &FEE, 100).unwrap();
        let large = oracle_ce(&s, &FEE, 10_000).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!((ratio / 10.0 - 1.0).abs() <= 0.2, "ratio {ratio}");
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = SyntheticScenario::default();
        assert_eq!(
            SyntheticScenario::from_json(&s.to_json().unwrap()).unwrap(),
            s
        );
        let bad = SyntheticScenario { t0: 3, ..s };
        assert!(SyntheticScenario::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    }

    #[test]
    fn rejects_too_few_replicates() {
        assert!(oracle_ce(&SyntheticScenario::default(), &FEE, 99).is_err());
    }
}
