//! Behavior dynamics on the simplex: additive log-ratio coordinates, the
//! VAR(1) recursion in those coordinates, and Dirichlet initial behaviors.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::behavioral::{BehaviorDist, N_BEHAVIORS};
use crate::error::{Error, Result};

/// Components at or below this are treated as exactly on the boundary.
/// Expit of moderate logits (|w| ≈ 20) already yields shares near 1e-18, so
/// the floor sits at the smallest normal double.
pub const BOUNDARY_EPS: f64 = f64::MIN_POSITIVE;

/// Floor applied to sampled behaviors before entering logit space.
pub const CLAMP_EPS: f64 = 1e-9;

/// `(intercept, autoregressive coefficient, noise scale)` of the logit-space VAR(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalParams(pub [f64; 3]);

impl TemporalParams {
    pub fn intercept(&self) -> f64 {
        self.0[0]
    }

    pub fn autoregression(&self) -> f64 {
        self.0[1]
    }

    pub fn noise_scale(&self) -> f64 {
        self.0[2]
    }
}

/// Dirichlet concentration of the initial behaviors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitParams(pub [f64; 3]);

/// Which assignment a sampled path stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Observed,
    AllTreated,
    AllControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPath {
    betas: Vec<BehaviorDist>,
    assignment: Assignment,
}

impl BehaviorPath {
    pub fn new(betas: Vec<BehaviorDist>, assignment: Assignment) -> Self {
        Self { betas, assignment }
    }

    pub fn betas(&self) -> &[BehaviorDist] {
        &self.betas
    }

    pub fn at(&self, t: usize) -> Option<&BehaviorDist> {
        self.betas.get(t)
    }

    pub fn last(&self) -> &BehaviorDist {
        self.betas.last().expect("a path holds at least t = 0")
    }

    /// Largest period index `T`.
    pub fn horizon(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn assignment(&self) -> Assignment {
        self.assignment
    }

    pub(crate) fn with_assignment(mut self, assignment: Assignment) -> Self {
        self.assignment = assignment;
        self
    }
}

/// `w[i] = ln(β[i+1] / β[0])`.
pub fn logit_transform(beta: &BehaviorDist) -> Result<[f64; 2]> {
    let b = beta.as_array();
    if b.iter().any(|&x| x <= BOUNDARY_EPS) {
        return Err(Error::BoundaryPoint(*b));
    }
    Ok([(b[1] / b[0]).ln(), (b[2] / b[0]).ln()])
}

pub fn expit_transform(w: [f64; 2]) -> BehaviorDist {
    // Explosive recursions can reach ±inf; saturate so the shares stay defined.
    let w = w.map(|x| x.clamp(f64::MIN, f64::MAX));
    let m = w[0].max(w[1]).max(0.0);
    let e = [(-m).exp(), (w[0] - m).exp(), (w[1] - m).exp()];
    let total: f64 = e.iter().sum();
    BehaviorDist::from_normalized(e.map(|x| x / total))
}

/// Raise components below `eps` to `eps` and renormalize.
pub fn clamp_interior(beta: &BehaviorDist, eps: f64) -> BehaviorDist {
    let b = beta.as_array();
    if b.iter().all(|&x| x >= eps) {
        return *beta;
    }
    let raised = b.map(|x| x.max(eps));
    let total: f64 = raised.iter().sum();
    BehaviorDist::from_normalized(raised.map(|x| x / total))
}

/// Infinite source of standard bivariate normal draws.
pub fn normal_noise<R: Rng>(rng: &mut R) -> impl FnMut() -> [f64; 2] + '_ {
    move || [StandardNormal.sample(rng), StandardNormal.sample(rng)]
}

/// Simulate `β(0..=horizon)` from `β(0) = beta0` by
/// `w_t = ψ₁·𝟙 + ψ₂·w_{t−1} + ψ₃·ε_t` in logit space.
pub fn sample_var1_path(
    psi: &TemporalParams,
    beta0: &BehaviorDist,
    horizon: usize,
    mut noise: impl FnMut() -> [f64; 2],
) -> BehaviorPath {
    let beta0 = clamp_interior(beta0, CLAMP_EPS);
    let mut w = logit_transform(&beta0).expect("clamped point is interior");
    let mut betas = Vec::with_capacity(horizon + 1);
    betas.push(beta0);
    for _ in 0..horizon {
        let eps = noise();
        for (wi, ei) in w.iter_mut().zip(eps) {
            *wi = psi.intercept() + psi.autoregression() * *wi + psi.noise_scale() * ei;
        }
        betas.push(expit_transform(w));
    }
    BehaviorPath::new(betas, Assignment::Observed)
}

/// Dirichlet draw via normalized Gamma variates.
///
/// Gamma variates are produced in log space (boosting shapes below one with
/// `Gamma(a + 1) · U^(1/a)`) so tiny concentrations cannot underflow every
/// component to zero.
pub fn sample_dirichlet<R: Rng + ?Sized>(phi: &InitParams, rng: &mut R) -> Result<BehaviorDist> {
    if phi.0.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
        return Err(Error::InvalidConcentration(phi.0));
    }
    let mut log_g = [0.0; N_BEHAVIORS];
    for (lg, &a) in log_g.iter_mut().zip(&phi.0) {
        *lg = if a < 1.0 {
            let g: f64 = Gamma::new(a + 1.0, 1.0).expect("valid shape").sample(rng);
            let u: f64 = Open01.sample(rng);
            g.ln() + u.ln() / a
        } else {
            let g: f64 = Gamma::new(a, 1.0).expect("valid shape").sample(rng);
            g.ln()
        };
    }
    let max = log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = log_g.map(|x| (x - max).exp());
    let total: f64 = e.iter().sum();
    Ok(BehaviorDist::from_normalized(e.map(|x| x / total)))
}
