//! Holdout comparison of the estimator against the naive and DID baselines
//! on the two-game panel, over a batch of random fee vectors.

use std::path::Path;

use lace::baselines::{did_estimate, naive_estimate};
use lace::dataio::{
    generate_fees, ExperimentPanel, FeeVector, LabelMap, N_PERIODS, RAPOPORT_BOEBEL_CSV,
};
use lace::estimator::{lace_estimate, ActionVector, EstimatorConfig, PolicyData};
use lace::game_model::PayoffMatrix;
use lace::rng::{derive_seed, Domain};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Label written to the manifest when the bundled table is used.
pub const EMBEDDED_DATASET: &str = "embedded";

/// Source label plus the exact table the run consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSnapshot {
    pub source: String,
    /// Normalized CSV of the panel after ingestion repairs.
    pub csv: String,
}

impl DatasetSnapshot {
    /// Read the panel from `path`, or the bundled table when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let (source, raw) = match path {
            None => (
                EMBEDDED_DATASET.to_string(),
                RAPOPORT_BOEBEL_CSV.to_string(),
            ),
            Some(p) => {
                let raw = std::fs::read_to_string(p).map_err(|e| {
                    Failure::data(e).context(format!("cannot read dataset {}", p.display()))
                })?;
                (p.display().to_string(), raw)
            }
        };
        let panel = ExperimentPanel::load_str(&raw, 1)
            .map_err(|e| Failure::from(e).context(format!("invalid dataset {source}")))?;
        Ok(Self {
            source,
            csv: panel.to_csv(),
        })
    }

    pub fn panel(
        &self,
        effective_count: u32,
        label_map: LabelMap,
    ) -> Result<ExperimentPanel, Failure> {
        Ok(ExperimentPanel::load_str(&self.csv, effective_count)?.with_label_map(label_map))
    }
}

/// Which periods each baseline compares (zero-based `t`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conventions {
    pub naive_period: usize,
    pub did_post: usize,
    pub did_pre: usize,
    /// One-based table period held out as the truth.
    pub holdout_period: usize,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            naive_period: 2,
            did_post: 2,
            did_pre: 0,
            holdout_period: 4,
        }
    }
}

/// Everything needed to replay a reproduce run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub dataset: DatasetSnapshot,
    /// Master seed; the fee seed and per-fee estimator seeds derive from it.
    pub seed: u64,
    pub fee_seed: u64,
    pub fees: usize,
    pub label_map: LabelMap,
    pub conventions: Conventions,
    /// Estimator settings; `seed` here is the master seed.
    pub estimator: EstimatorConfig,
}

impl RunManifest {
    pub fn new(
        dataset: DatasetSnapshot,
        seed: u64,
        fees: usize,
        label_map: LabelMap,
        conventions: Conventions,
        estimator: EstimatorConfig,
    ) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset,
            seed,
            fee_seed: fee_seed(seed),
            fees,
            label_map,
            conventions,
            estimator: EstimatorConfig { seed, ..estimator },
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.fees == 0 {
            return Err(Failure::usage("need at least one fee vector"));
        }
        let c = &self.conventions;
        if !(2..=N_PERIODS).contains(&c.holdout_period) {
            return Err(Failure::usage(format!(
                "holdout period must lie in 2..={N_PERIODS}, got {}",
                c.holdout_period
            )));
        }
        let fit = c.holdout_period - 1;
        if [c.naive_period, c.did_post, c.did_pre]
            .iter()
            .any(|&t| t >= fit)
        {
            return Err(Failure::usage(format!(
                "baseline periods must lie among the {fit} fitting periods"
            )));
        }
        if self.estimator.horizon < fit {
            return Err(Failure::usage(format!(
                "horizon {} is shorter than the {fit} observed periods",
                self.estimator.horizon
            )));
        }
        self.estimator.validate()?;
        Ok(())
    }

    /// Read a manifest from either a bare manifest document or a results file.
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(Failure::data)?;
        let inner = value.get("manifest").cloned().unwrap_or(value);
        serde_json::from_value(inner).map_err(Failure::data)
    }
}

pub fn fee_seed(seed: u64) -> u64 {
    derive_seed(seed, &[Domain::Fees as u64])
}

/// Estimator seed of fee `fee_id`.
pub fn estimator_seed(seed: u64, fee_id: usize) -> u64 {
    derive_seed(seed, &[Domain::Reproduce as u64, fee_id as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeResult {
    pub fee_id: usize,
    pub seed: u64,
    pub fee: ActionVector,
    pub lace: f64,
    pub naive: f64,
    pub did: f64,
    pub truth: f64,
    /// Treated slot first.
    pub effective_sample_size: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMse {
    pub lace: f64,
    pub naive: f64,
    pub did: f64,
}

impl MethodMse {
    pub fn of(results: &[FeeResult]) -> Self {
        let n = results.len() as f64;
        let mse = |f: fn(&FeeResult) -> f64| {
            results
                .iter()
                .map(|r| (f(r) - r.truth).powi(2))
                .sum::<f64>()
                / n
        };
        Self {
            lace: mse(|r| r.lace),
            naive: mse(|r| r.naive),
            did: mse(|r| r.did),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOutput {
    pub manifest: RunManifest,
    pub results: Vec<FeeResult>,
    pub mse: MethodMse,
}

impl ReproduceOutput {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    /// Long-format table `method,fee_id,estimate,truth`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,fee_id,estimate,truth\n");
        for r in &self.results {
            for (method, value) in [("lace", r.lace), ("naive", r.naive), ("did", r.did)] {
                out.push_str(&format!("{method},{},{value},{}\n", r.fee_id, r.truth));
            }
        }
        out
    }
}

/// Run every fee of `manifest` and score the three methods on the holdout.
pub fn reproduce(manifest: &RunManifest) -> Result<ReproduceOutput, Failure> {
    manifest.validate()?;
    let mut panel = manifest
        .dataset
        .panel(manifest.estimator.effective_count, manifest.label_map)?;
    panel.holdout_period = manifest.conventions.holdout_period;
    let (treated, control) = panel.fitting_slice();
    let g1 = PayoffMatrix::experiment_treatment();
    let g0 = PayoffMatrix::experiment_control();
    let c = manifest.conventions;

    let fees = generate_fees(manifest.fees, manifest.fee_seed);
    let mut results = Vec::with_capacity(fees.len());
    for (fee_id, fee) in fees.iter().enumerate() {
        let seed = estimator_seed(manifest.seed, fee_id);
        let cfg = EstimatorConfig {
            seed,
            ..manifest.estimator.clone()
        };
        let est = lace_estimate(
            PolicyData::new(&treated, &g1),
            PolicyData::new(&control, &g0),
            &fee.0,
            &cfg,
        )
        .map_err(|e| Failure::from(e).context(format!("fee {fee_id}")))?;
        results.push(FeeResult {
            fee_id,
            seed,
            fee: fee.0,
            lace: est.ce_hat,
            naive: naive_estimate(&treated, &control, &fee.0, c.naive_period)?,
            did: did_estimate(&treated, &control, &fee.0, c.did_post, c.did_pre)?,
            truth: panel.holdout_truth(fee),
            effective_sample_size: est.effective_sample_size,
        });
        log::debug!(
            "fee {fee_id}: lace {:.4}, truth {:.4}",
            est.ce_hat,
            results[fee_id].truth
        );
    }
    let mse = MethodMse::of(&results);
    Ok(ReproduceOutput {
        manifest: manifest.clone(),
        results,
        mse,
    })
}

/// Baselines and holdout truth for a single fee, as used by the worked example.
pub fn baseline_row(
    panel: &ExperimentPanel,
    fee: &FeeVector,
    c: Conventions,
) -> Result<[f64; 3], Failure> {
    let (treated, control) = panel.fitting_slice();
    Ok([
        naive_estimate(&treated, &control, &fee.0, c.naive_period)?,
        did_estimate(&treated, &control, &fee.0, c.did_post, c.did_pre)?,
        panel.holdout_truth(fee),
    ])
}
