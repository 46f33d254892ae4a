use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::PsiSchedule;

/// Every tunable of the alignment objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Entropy coefficient of the Sinkhorn problem.
    pub upsilon: f64,
    /// Bandwidth of both temporal priors.
    pub sigma: f64,
    pub psi_start: f64,
    pub psi_end: f64,
    pub psi_decay_steps: usize,
    /// Weight of the inverse difference moment.
    pub lambda1: f64,
    /// Weight of the KL divergence to the prior.
    pub lambda2: f64,
    /// Contrastive margin.
    pub lambda3: f64,
    /// Intra-sequence window, in frames.
    pub delta: usize,
    /// Virtual-frame decoding threshold.
    pub zeta: f64,
    /// Weight of the contrastive regularizer.
    pub gamma: f64,
    /// Marginal mass reserved for the virtual frame.
    pub rho: f64,
    /// Virtual-frame cost as a multiple of the median real cost.
    pub virtual_cost_factor: f64,
    pub sinkhorn_max_iter: usize,
    pub sinkhorn_tol: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            upsilon: 0.05,
            sigma: 1.0,
            psi_start: 1.0,
            psi_end: 0.5,
            psi_decay_steps: 250,
            lambda1: 0.5,
            lambda2: 1.0,
            lambda3: 2.0,
            delta: 2,
            zeta: 0.3,
            gamma: 0.5,
            rho: 0.3,
            virtual_cost_factor: 0.3,
            sinkhorn_max_iter: 1000,
            sinkhorn_tol: 1e-6,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, what: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::param(what.to_string()))
            }
        }
        let finite = |v: f64| v.is_finite();
        check(finite(self.upsilon) && self.upsilon > 0.0, "upsilon must be > 0")?;
        check(finite(self.sigma) && self.sigma > 0.0, "sigma must be > 0")?;
        check((0.0..=1.0).contains(&self.psi_start), "psi_start must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&self.psi_end), "psi_end must lie in [0, 1]")?;
        check(self.psi_start >= self.psi_end, "psi_start must be >= psi_end")?;
        check(finite(self.lambda1) && self.lambda1 >= 0.0, "lambda1 must be >= 0")?;
        check(finite(self.lambda2) && self.lambda2 >= 0.0, "lambda2 must be >= 0")?;
        check(finite(self.lambda3) && self.lambda3 > 0.0, "lambda3 must be > 0")?;
        check(self.delta >= 1, "delta must be >= 1")?;
        check(self.zeta > 0.0 && self.zeta < 1.0, "zeta must lie in (0, 1)")?;
        check(finite(self.gamma) && self.gamma >= 0.0, "gamma must be >= 0")?;
        check((0.0..1.0).contains(&self.rho), "rho must lie in [0, 1)")?;
        check(
            finite(self.virtual_cost_factor) && self.virtual_cost_factor > 0.0,
            "virtual_cost_factor must be > 0",
        )?;
        check(self.sinkhorn_max_iter >= 1, "sinkhorn_max_iter must be >= 1")?;
        check(
            finite(self.sinkhorn_tol) && self.sinkhorn_tol > 0.0,
            "sinkhorn_tol must be > 0",
        )?;
        Ok(())
    }

    pub fn psi_schedule(&self) -> PsiSchedule {
        PsiSchedule {
            psi_start: self.psi_start,
            psi_end: self.psi_end,
            decay_steps: self.psi_decay_steps,
        }
    }

    /// Same settings with the prior terms switched off.
    pub fn prior_free(&self) -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            ..*self
        }
    }
}
