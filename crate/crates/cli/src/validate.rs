//! Synthetic checks with known answers.

use lace::behavioral::QlkParams;
use lace::dataio::{ExperimentPanel, FeeVector, LabelMap, RAPOPORT_BOEBEL_CSV};
use lace::estimator::{lace_estimate, ActionVector, EstimatorConfig, PolicyData};
use lace::game_model::{PayoffMatrix, Policy};
use lace::oracle::{
    consistency_check, generate_experiment, oracle_ce, oracle_ce_with, ConsistencyReport,
    ConsistencySettings, OracleMode, SyntheticScenario,
};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Tolerance, in combined standard errors, of the Monte Carlo comparisons.
pub const Z_TOLERANCE: f64 = 3.0;

/// Tolerance of checks whose answer is exactly zero.
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// Bound on `|ĈE| / ‖fee‖₁` when both policies see the same game and panel.
pub const SYMMETRIC_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidateSettings {
    pub seed: u64,
    pub consistency: ConsistencySettings,
    /// Feed the estimator the negated fee in the consistency check.
    pub inject_wrong_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub settings: ValidateSettings,
    pub scenario: SyntheticScenario,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn consistency_detail(r: &ConsistencyReport, lace_mean: f64, z: f64) -> String {
    format!(
        "lace {lace_mean:.5} ± {:.5}, oracle {:.5} ± {:.5}, z = {z:.2}, min ESS {:.1}",
        r.lace_std_error, r.oracle.estimate, r.oracle.std_error, r.min_effective_sample_size
    )
}

fn consistency(
    scenario: &SyntheticScenario,
    fee: &ActionVector,
    s: &ValidateSettings,
) -> Result<[Check; 2], Failure> {
    let report = consistency_check(scenario, fee, s.consistency)?;
    let sign = if s.inject_wrong_sign { -1.0 } else { 1.0 };
    let lace_mean = sign * report.lace_mean;
    let z = (lace_mean - report.oracle.estimate).abs() / report.combined_std_error;
    // Power of the comparison: how far a sign error would land, independent of injection.
    let flipped_z = (report.lace_mean + report.oracle.estimate).abs() / report.combined_std_error;
    Ok([
        Check::new(
            "oracle_consistency",
            z <= Z_TOLERANCE,
            consistency_detail(&report, lace_mean, z),
        ),
        Check::new(
            "sign_sensitivity",
            flipped_z > Z_TOLERANCE,
            format!("a sign-flipped estimate would sit at z = {flipped_z:.2}"),
        ),
    ])
}

fn symmetric_policies(
    scenario: &SyntheticScenario,
    fee: &ActionVector,
    s: &ValidateSettings,
) -> Result<Check, Failure> {
    let c = &scenario.control_game;
    let twin = SyntheticScenario {
        treated_game: PayoffMatrix::new(c.win_value(), c.lose_value(), Policy::Treatment)?,
        ..scenario.clone()
    };
    let oracle = oracle_ce(&twin, fee, s.consistency.oracle_replicates)?;
    let exp = generate_experiment(&twin)?;
    // Identical panels under identical games: the two policy posteriors see
    // the same likelihood, so only Monte Carlo noise separates them.
    let cfg = twin.point_mass_config(s.consistency.iterations, twin.seed);
    let est = lace_estimate(
        PolicyData::new(&exp.control, &twin.treated_game),
        PolicyData::new(&exp.control, &twin.control_game),
        fee,
        &cfg,
    )?;
    let z = oracle.estimate.abs() / oracle.std_error;
    let scale: f64 = fee.iter().map(|c| c.abs()).sum();
    let passed = z <= Z_TOLERANCE && est.ce_hat.abs() <= SYMMETRIC_TOLERANCE * scale;
    Ok(Check::new(
        "symmetric_policies",
        passed,
        format!(
            "oracle {:.5} ± {:.5} (z = {z:.2}), lace on identical panels {:.5}",
            oracle.estimate, oracle.std_error, est.ce_hat
        ),
    ))
}

fn unit_fee(scenario: &SyntheticScenario, s: &ValidateSettings) -> Result<Check, Failure> {
    let ones = [1.0; 10];
    let panel =
        ExperimentPanel::load_str(RAPOPORT_BOEBEL_CSV, 20)?.with_label_map(LabelMap::default());
    let (treated, control) = panel.fitting_slice();
    let cfg = EstimatorConfig {
        iterations: s.consistency.iterations.min(1000),
        seed: s.seed,
        ..EstimatorConfig::default()
    };
    let est = lace_estimate(
        PolicyData::new(&treated, &PayoffMatrix::experiment_treatment()),
        PolicyData::new(&control, &PayoffMatrix::experiment_control()),
        &ones,
        &cfg,
    )?;
    let oracle = oracle_ce(scenario, &ones, 100)?;
    let worst = est.ce_hat.abs().max(oracle.estimate.abs());
    Ok(Check::new(
        "unit_fee",
        worst <= EXACT_TOLERANCE,
        format!("lace {:.3e}, oracle {:.3e}", est.ce_hat, oracle.estimate),
    ))
}

fn uniform_lambda(
    scenario: &SyntheticScenario,
    fee: &ActionVector,
    s: &ValidateSettings,
) -> Result<Check, Failure> {
    let mut flat = scenario.clone();
    flat.truth.lambda = QlkParams([0.0; 3]);
    let exp = generate_experiment(&flat)?;
    let cfg = flat.point_mass_config(s.consistency.iterations.min(1000), flat.seed);
    let est = lace_estimate(
        PolicyData::new(&exp.treated, &flat.treated_game),
        PolicyData::new(&exp.control, &flat.control_game),
        fee,
        &cfg,
    )?;
    let oracle = oracle_ce_with(&flat, fee, 100, OracleMode::ExpectedFrequency)?;
    let worst = est.ce_hat.abs().max(oracle.estimate.abs());
    Ok(Check::new(
        "uniform_lambda",
        worst <= EXACT_TOLERANCE,
        format!(
            "lace {:.3e}, expected-frequency oracle {:.3e}",
            est.ce_hat, oracle.estimate
        ),
    ))
}

/// Run every check on the default scenario re-seeded with `settings.seed`.
pub fn run_battery(settings: &ValidateSettings) -> Result<ValidationReport, Failure> {
    let scenario = SyntheticScenario {
        seed: settings.seed,
        ..SyntheticScenario::default()
    };
    let fee = FeeVector::APPENDIX.0;
    let mut checks = Vec::new();
    checks.extend(consistency(&scenario, &fee, settings)?);
    checks.push(symmetric_policies(&scenario, &fee, settings)?);
    checks.push(unit_fee(&scenario, settings)?);
    checks.push(uniform_lambda(&scenario, &fee, settings)?);
    Ok(ValidationReport {
        settings: *settings,
        scenario,
        checks,
    })
}
