//! Long-term causal effect estimation by self-normalized importance sampling.
//!
//! Each iteration draws model parameters from the prior, draws both games'
//! observed initial behaviors from a Dirichlet, pivots them into the
//! assignment-invariant initial behavior, and rolls a counterfactual behavior
//! path forward to the horizon for each policy. The path is weighted by the
//! likelihood of that policy's observed panel, and the expected population
//! action at the horizon is averaged under the normalized weights.
//!
//! Randomness is addressed per iteration (see [`crate::rng`]): the shared lane
//! carries parameters and initial behaviors, each policy's lane carries its
//! path noise. Iterations run in parallel on the current rayon pool and are
//! reduced in iteration order, so results do not depend on the worker count.

use rand::Rng;
use rand_distr::{Distribution, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavioral::{
    concat_blocks, expected_population_action, qlk_strategy_matrix, BehaviorDist, PanelCounts,
    PopulationAction, QlkParams,
};
use crate::error::{Error, Result};
use crate::game_model::{PayoffMatrix, Policy, Role, N_ACTIONS};
use crate::rng::{derive_seed, policy_lane, stream, Domain, StreamRng, SHARED_LANE};
use crate::temporal::{
    normal_noise, sample_dirichlet, sample_var1_path, Assignment, BehaviorPath, InitParams,
    TemporalParams,
};

/// Both roles' action distributions, row block first.
pub type ActionVector = [f64; 2 * N_ACTIONS];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDraw {
    pub phi: InitParams,
    pub psi: TemporalParams,
    pub lambda: QlkParams,
}

/// Prior on one three-component parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockPrior {
    /// Each component independently uniform on the open interval.
    Uniform {
        low: f64,
        high: f64,
    },
    PointMass([f64; 3]),
}

impl BlockPrior {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        match *self {
            BlockPrior::Uniform { low, high } => std::array::from_fn(|_| {
                let u: f64 = Open01.sample(rng);
                low + (high - low) * u
            }),
            BlockPrior::PointMass(v) => v,
        }
    }

    fn validate(&self, name: &str, positive: bool) -> Result<()> {
        let ok = match *self {
            BlockPrior::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && low < high && (!positive || low >= 0.0)
            }
            BlockPrior::PointMass(v) => {
                v.iter().all(|x| x.is_finite()) && (!positive || v.iter().all(|&x| x > 0.0))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid {name} prior: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub phi: BlockPrior,
    pub psi: BlockPrior,
    pub lambda: BlockPrior,
}

impl Default for Prior {
    fn default() -> Self {
        Self::diffuse()
    }
}

impl Prior {
    /// φ ~ U(0, 10), ψ ~ U(−5, 5), λ ~ U(−10, 10), componentwise.
    pub fn diffuse() -> Self {
        Self {
            phi: BlockPrior::Uniform {
                low: 0.0,
                high: 10.0,
            },
            psi: BlockPrior::Uniform {
                low: -5.0,
                high: 5.0,
            },
            lambda: BlockPrior::Uniform {
                low: -10.0,
                high: 10.0,
            },
        }
    }

    pub fn point_mass(draw: &ParamDraw) -> Self {
        Self {
            phi: BlockPrior::PointMass(draw.phi.0),
            psi: BlockPrior::PointMass(draw.psi.0),
            lambda: BlockPrior::PointMass(draw.lambda.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamDraw {
        ParamDraw {
            phi: InitParams(self.phi.sample(rng)),
            psi: TemporalParams(self.psi.sample(rng)),
            lambda: QlkParams(self.lambda.sample(rng)),
        }
    }

    fn validate(&self) -> Result<()> {
        self.phi.validate("phi", true)?;
        self.psi.validate("psi", false)?;
        self.lambda.validate("lambda", false)
    }
}

/// Draw from the diffuse prior.
pub fn sample_prior<R: Rng + ?Sized>(rng: &mut R) -> ParamDraw {
    Prior::diffuse().sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub iterations: usize,
    /// Long-term period index `T`.
    pub horizon: usize,
    /// Share of agents assigned to the new policy.
    pub rho: f64,
    pub seed: u64,
    /// Multinomial sample size per role per period.
    pub effective_count: u32,
    pub share_params_across_games: bool,
    pub negate_column_payoffs: bool,
    pub prior: Prior,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            horizon: 3,
            rho: 0.5,
            seed: 0,
            effective_count: 20,
            share_params_across_games: true,
            negate_column_payoffs: false,
            prior: Prior::diffuse(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if self.effective_count == 0 {
            return Err(Error::InvalidConfig(
                "effective count must be at least 1".into(),
            ));
        }
        self.prior.validate()
    }
}

/// One policy's observed panel (periods `0..=t0`) and its game.
#[derive(Debug, Clone, Copy)]
pub struct PolicyData<'a> {
    pub panel: &'a [PopulationAction],
    pub game: &'a PayoffMatrix,
}

impl<'a> PolicyData<'a> {
    pub fn new(panel: &'a [PopulationAction], game: &'a PayoffMatrix) -> Self {
        Self { panel, game }
    }

    pub fn policy(&self) -> Policy {
        self.game.policy()
    }
}

/// `ρ·β₁ + (1 − ρ)·β₀`.
pub fn pivot_initial(beta1: &BehaviorDist, beta0: &BehaviorDist, rho: f64) -> BehaviorDist {
    let (a, b) = (beta1.as_array(), beta0.as_array());
    BehaviorDist::from_normalized(std::array::from_fn(|k| rho * a[k] + (1.0 - rho) * b[k]))
}

/// One importance-sampling draw for one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub log_weight: f64,
    /// Assignment-invariant initial behavior used by this draw.
    pub pivot: BehaviorDist,
    /// Expected population action at the horizon.
    pub alpha_horizon: ActionVector,
}

/// Normalize log-weights by log-sum-exp. Returns the normalized weights and
/// `ln Σ exp(ℓᵢ)`, or `None` when every weight is zero.
pub fn normalize_log_weights(log_weights: &[f64]) -> Option<(Vec<f64>, f64)> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return None;
    }
    let raw: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    Some((
        raw.into_iter().map(|w| w / total).collect(),
        max + total.ln(),
    ))
}

/// Self-normalized importance-sampling posterior of one policy's long-term
/// expected action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPosterior {
    pub policy: Policy,
    pub expected_action: ActionVector,
    /// `ln ν`: log of the mean likelihood weight.
    pub log_normalizer: f64,
    pub effective_sample_size: f64,
    #[serde(skip)]
    draws: Vec<PosteriorDraw>,
    #[serde(skip)]
    weights: Vec<f64>,
}

impl PolicyPosterior {
    pub fn from_draws(policy: Policy, draws: Vec<PosteriorDraw>) -> Result<Self> {
        let log_weights: Vec<f64> = draws.iter().map(|d| d.log_weight).collect();
        let (weights, log_sum) =
            normalize_log_weights(&log_weights).ok_or(Error::AllWeightsDegenerate(policy))?;
        let mut expected_action = [0.0; 2 * N_ACTIONS];
        for (w, d) in weights.iter().zip(&draws) {
            for (e, a) in expected_action.iter_mut().zip(&d.alpha_horizon) {
                *e += w * a;
            }
        }
        let effective_sample_size = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        Ok(Self {
            policy,
            expected_action,
            log_normalizer: log_sum - (draws.len() as f64).ln(),
            effective_sample_size,
            draws,
            weights,
        })
    }

    pub fn draws(&self) -> &[PosteriorDraw] {
        &self.draws
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Posterior mean of an arbitrary objective of the horizon action,
    /// accumulated draw by draw.
    pub fn objective_mean(&self, objective: impl Fn(&ActionVector) -> f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.draws)
            .map(|(w, d)| w * objective(&d.alpha_horizon))
            .sum()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaceEstimate {
    pub ce_hat: f64,
    /// Treated slot first, control slot second.
    pub per_policy_expected_action: [ActionVector; 2],
    pub effective_sample_size: [f64; 2],
    pub log_normalizers: [f64; 2],
}

/// Estimate plus the full weighted samples behind it.
#[derive(Debug, Clone)]
pub struct LaceRun {
    pub estimate: LaceEstimate,
    pub treated: PolicyPosterior,
    pub control: PolicyPosterior,
}

impl LaceRun {
    /// Weighted sample of the initial behavior given both panels.
    pub fn pivot_posterior(&self) -> Result<PivotPosterior> {
        PivotPosterior::new(
            self.treated
                .draws()
                .iter()
                .zip(self.control.draws())
                .map(|(a, b)| (a.pivot, a.log_weight + b.log_weight))
                .collect(),
        )
    }
}

/// Weighted sample of assignment-invariant initial behaviors.
#[derive(Debug, Clone)]
pub struct PivotPosterior {
    pivots: Vec<BehaviorDist>,
    cumulative: Vec<f64>,
}

impl PivotPosterior {
    pub fn new(weighted: Vec<(BehaviorDist, f64)>) -> Result<Self> {
        let log_weights: Vec<f64> = weighted.iter().map(|(_, l)| *l).collect();
        let (weights, _) = normalize_log_weights(&log_weights)
            .ok_or(Error::AllWeightsDegenerate(Policy::Treatment))?;
        let cumulative = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            pivots: weighted.into_iter().map(|(p, _)| p).collect(),
            cumulative,
        })
    }

    pub fn point(pivot: BehaviorDist) -> Self {
        Self {
            pivots: vec![pivot],
            cumulative: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BehaviorDist {
        let u: f64 = Open01.sample(rng);
        let total = *self.cumulative.last().expect("non-empty");
        let idx = self.cumulative.partition_point(|&c| c < u * total);
        self.pivots[idx.min(self.pivots.len() - 1)]
    }
}

/// Per-policy state that is constant across iterations.
struct PolicyContext<'a> {
    game: &'a PayoffMatrix,
    counts: PanelCounts,
    assignment: Assignment,
}

impl<'a> PolicyContext<'a> {
    fn new(data: PolicyData<'a>, cfg: &EstimatorConfig) -> Result<Self> {
        if data.panel.len() > cfg.horizon {
            return Err(Error::InvalidConfig(format!(
                "panel covers t = 0..{} but the horizon is {}; need t0 < T",
                data.panel.len().saturating_sub(1),
                cfg.horizon
            )));
        }
        let panel = data
            .panel
            .iter()
            .map(|obs| obs.with_effective_count(cfg.effective_count))
            .collect::<Result<Vec<_>>>()?;
        let assignment = match data.policy() {
            Policy::Treatment => Assignment::AllTreated,
            Policy::Control => Assignment::AllControl,
        };
        Ok(Self {
            game: data.game,
            counts: PanelCounts::new(&panel),
            assignment,
        })
    }

    /// Roll the counterfactual path from `pivot`, weight it by the panel
    /// likelihood and read off the horizon action.
    fn evaluate(
        &self,
        params: &ParamDraw,
        pivot: BehaviorDist,
        noise_rng: &mut StreamRng,
        cfg: &EstimatorConfig,
    ) -> Result<(PosteriorDraw, BehaviorPath)> {
        let path = sample_var1_path(&params.psi, &pivot, cfg.horizon, normal_noise(noise_rng))
            .with_assignment(self.assignment);
        let negate = cfg.negate_column_payoffs;
        let q_row = qlk_strategy_matrix(self.game, &params.lambda, Role::Row, negate);
        let q_col = qlk_strategy_matrix(self.game, &params.lambda, Role::Column, negate);
        let log_weight = self.counts.log_likelihood(&q_row, &q_col, path.betas())?;
        let beta_t = path.last();
        let alpha_horizon = concat_blocks(
            &expected_population_action(&q_row, beta_t),
            &expected_population_action(&q_col, beta_t),
        );
        Ok((
            PosteriorDraw {
                log_weight,
                pivot,
                alpha_horizon,
            },
            path,
        ))
    }
}

/// Shared-lane draws of one iteration: per-policy parameters (indexed by
/// policy id) and the pivot.
fn shared_draws(cfg: &EstimatorConfig, iteration: u64) -> Result<([ParamDraw; 2], BehaviorDist)> {
    let mut rng = stream(cfg.seed, Domain::Estimator, SHARED_LANE, iteration);
    let params = if cfg.share_params_across_games {
        let d = cfg.prior.sample(&mut rng);
        [d, d]
    } else {
        [cfg.prior.sample(&mut rng), cfg.prior.sample(&mut rng)]
    };
    let initial_control = sample_dirichlet(&params[0].phi, &mut rng)?;
    let initial_treated = sample_dirichlet(&params[1].phi, &mut rng)?;
    Ok((
        params,
        pivot_initial(&initial_treated, &initial_control, cfg.rho),
    ))
}

/// Weighted posterior of one policy's long-term expected action.
///
/// Depends only on the policy's own data, its policy id and `cfg`, so
/// [`lace_estimate`] is exactly the difference of two calls.
pub fn expected_action_posterior(
    data: PolicyData<'_>,
    cfg: &EstimatorConfig,
) -> Result<PolicyPosterior> {
    cfg.validate()?;
    let ctx = PolicyContext::new(data, cfg)?;
    let policy = data.policy();
    let draws = (0..cfg.iterations as u64)
        .into_par_iter()
        .map(|iteration| {
            let (params, pivot) = shared_draws(cfg, iteration)?;
            let mut noise = stream(
                cfg.seed,
                Domain::Estimator,
                policy_lane(policy.index()),
                iteration,
            );
            ctx.evaluate(&params[policy.index()], pivot, &mut noise, cfg)
                .map(|(d, _)| d)
        })
        .collect::<Result<Vec<_>>>()?;
    PolicyPosterior::from_draws(policy, draws)
}

fn check_distinct(treated: &PolicyData<'_>, control: &PolicyData<'_>) -> Result<()> {
    if treated.policy() == control.policy() {
        return Err(Error::InvalidConfig(format!(
            "both games carry policy id {}; ids must differ",
            treated.policy()
        )));
    }
    Ok(())
}

fn check_fee(fee: &ActionVector) -> Result<()> {
    if fee.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Range(format!("fee vector must be finite: {fee:?}")))
    }
}

pub fn lace_run(
    treated: PolicyData<'_>,
    control: PolicyData<'_>,
    fee: &ActionVector,
    cfg: &EstimatorConfig,
) -> Result<LaceRun> {
    check_distinct(&treated, &control)?;
    check_fee(fee)?;
    let t = expected_action_posterior(treated, cfg)?;
    let c = expected_action_posterior(control, cfg)?;
    let estimate = LaceEstimate {
        ce_hat: dot(fee, &t.expected_action) - dot(fee, &c.expected_action),
        per_policy_expected_action: [t.expected_action, c.expected_action],
        effective_sample_size: [t.effective_sample_size, c.effective_sample_size],
        log_normalizers: [t.log_normalizer, c.log_normalizer],
    };
    Ok(LaceRun {
        estimate,
        treated: t,
        control: c,
    })
}

/// `ĈE(T)`: fee-weighted difference of the two posterior expected actions.
pub fn lace_estimate(
    treated: PolicyData<'_>,
    control: PolicyData<'_>,
    fee: &ActionVector,
    cfg: &EstimatorConfig,
) -> Result<LaceEstimate> {
    lace_run(treated, control, fee, cfg).map(|run| run.estimate)
}

/// Re-run the estimator with initial behaviors drawn from `pivots` instead of
/// the Dirichlet prior. `design_seed` addresses all randomness of the run.
pub fn design_replicate(
    treated: PolicyData<'_>,
    control: PolicyData<'_>,
    fee: &ActionVector,
    cfg: &EstimatorConfig,
    pivots: &PivotPosterior,
    design_seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    check_distinct(&treated, &control)?;
    check_fee(fee)?;
    let contexts = [
        PolicyContext::new(treated, cfg)?,
        PolicyContext::new(control, cfg)?,
    ];
    let policies = [treated.policy(), control.policy()];
    let draws = (0..cfg.iterations as u64)
        .into_par_iter()
        .map(|iteration| {
            let mut rng = stream(design_seed, Domain::Variance, SHARED_LANE, iteration);
            let pivot = pivots.sample(&mut rng);
            let shared = cfg.prior.sample(&mut rng);
            let params = if cfg.share_params_across_games {
                [shared, shared]
            } else {
                [shared, cfg.prior.sample(&mut rng)]
            };
            let mut out = [None, None];
            for (slot, (ctx, policy)) in contexts.iter().zip(policies).enumerate() {
                let mut noise = stream(
                    design_seed,
                    Domain::Variance,
                    policy_lane(policy.index()),
                    iteration,
                );
                out[slot] = Some(
                    ctx.evaluate(&params[policy.index()], pivot, &mut noise, cfg)?
                        .0,
                );
            }
            Ok(out.map(|d| d.expect("both slots filled")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (t_draws, c_draws): (Vec<_>, Vec<_>) = draws.into_iter().map(|[a, b]| (a, b)).unzip();
    let t = PolicyPosterior::from_draws(policies[0], t_draws)?;
    let c = PolicyPosterior::from_draws(policies[1], c_draws)?;
    Ok(dot(fee, &t.expected_action) - dot(fee, &c.expected_action))
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Randomization variance of `ĈE(T)`: the estimator is re-run once per
/// resampled design with initial behaviors drawn from their posterior, and the
/// spread of the outputs is returned.
///
/// Under complete randomization the treated share is the same for every
/// design, so designs differ only through fresh initial-behavior draws and
/// fresh noise.
pub fn variance_estimate(
    treated: PolicyData<'_>,
    control: PolicyData<'_>,
    fee: &ActionVector,
    cfg: &EstimatorConfig,
    pivots: &PivotPosterior,
    n_designs: usize,
) -> Result<f64> {
    if n_designs < 2 {
        return Err(Error::InvalidConfig(
            "variance needs at least two designs".into(),
        ));
    }
    let outputs = (0..n_designs as u64)
        .map(|d| {
            let seed = derive_seed(cfg.seed, &[Domain::Variance as u64, d]);
            design_replicate(treated, control, fee, cfg, pivots, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sample_variance(&outputs))
}
