//! Single estimate on the two-game panel for one fee vector.

use lace::dataio::LabelMap;
use lace::estimator::{
    lace_run, variance_estimate, ActionVector, EstimatorConfig, LaceEstimate, PolicyData,
};
use lace::game_model::PayoffMatrix;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::reproduce::DatasetSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub dataset: DatasetSnapshot,
    pub label_map: LabelMap,
    pub fee: ActionVector,
    pub estimator: EstimatorConfig,
    /// Number of resampled designs for the variance, if requested.
    pub variance_designs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub request: EstimateRequest,
    pub estimate: LaceEstimate,
    pub variance: Option<f64>,
}

pub fn estimate(request: &EstimateRequest) -> Result<EstimateOutput, Failure> {
    let cfg = &request.estimator;
    let panel = request
        .dataset
        .panel(cfg.effective_count, request.label_map)?;
    let (treated, control) = panel.fitting_slice();
    let g1 = PayoffMatrix::experiment_treatment();
    let g0 = PayoffMatrix::experiment_control();
    let t = PolicyData::new(&treated, &g1);
    let c = PolicyData::new(&control, &g0);
    let run = lace_run(t, c, &request.fee, cfg)?;
    let variance = match request.variance_designs {
        None => None,
        Some(n) => {
            let pivots = run.pivot_posterior()?;
            Some(variance_estimate(t, c, &request.fee, cfg, &pivots, n)?)
        }
    };
    Ok(EstimateOutput {
        request: request.clone(),
        estimate: run.estimate,
        variance,
    })
}

/// Parse ten fee components separated by commas and/or whitespace, with
/// optional surrounding brackets.
pub fn parse_fee(text: &str) -> Result<ActionVector, Failure> {
    let values = text
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Failure::usage(format!("bad fee component {t:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fee: ActionVector = values.try_into().map_err(|v: Vec<f64>| {
        Failure::usage(format!("fee needs 10 components, got {}", v.len()))
    })?;
    if fee.iter().any(|c| !c.is_finite()) {
        return Err(Failure::usage("fee components must be finite"));
    }
    Ok(fee)
}
