//! Reference estimators that ignore behavior dynamics.

use crate::behavioral::PopulationAction;
use crate::error::{Error, Result};
use crate::estimator::{dot, ActionVector};

/// Linear revenue: fee-weighted row and column action frequencies.
pub fn revenue(fee: &ActionVector, action: &PopulationAction) -> f64 {
    dot(fee, &action.concat())
}

fn period(panel: &[PopulationAction], t: usize) -> Result<&PopulationAction> {
    panel.get(t).ok_or(Error::MissingPeriod(t))
}

/// Contrast of the two arms at the last observed period `t0`.
pub fn naive_estimate(
    treated: &[PopulationAction],
    control: &[PopulationAction],
    fee: &ActionVector,
    t0: usize,
) -> Result<f64> {
    Ok(revenue(fee, period(treated, t0)?) - revenue(fee, period(control, t0)?))
}

/// Difference in differences between periods `t_pre` and `t_post`.
pub fn did_estimate(
    treated: &[PopulationAction],
    control: &[PopulationAction],
    fee: &ActionVector,
    t_post: usize,
    t_pre: usize,
) -> Result<f64> {
    let change = |panel: &[PopulationAction]| -> Result<f64> {
        Ok(revenue(fee, period(panel, t_post)?) - revenue(fee, period(panel, t_pre)?))
    };
    Ok(change(treated)? - change(control)?)
}
