//! Hyperpriors: Dirichlet weights on the etiology fractions and independent
//! Beta priors on every measurement rate, plus elicitation of Beta
//! parameters from an expert's plausible range.

use serde::{Deserialize, Serialize};

use crate::error::{PlcmError, Result};
use crate::model::PathogenPanel;
use crate::special::{beta_cdf, beta_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPrior {
    pub const UNIFORM: BetaPrior = BetaPrior { alpha: 1.0, beta: 1.0 };

    pub fn new(alpha: f64, beta: f64) -> Self {
        BetaPrior { alpha, beta }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        beta_quantile(p, self.alpha, self.beta)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        beta_cdf(x, self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    /// Dirichlet weights `a` on the etiology fractions.
    pub pi_weights: Vec<f64>,
    /// Beta priors `(b1, b2)` on bronze false positive rates.
    pub psi_brs: Vec<BetaPrior>,
    /// Beta priors `(c1, c2)` on bronze true positive rates.
    pub theta_brs: Vec<BetaPrior>,
    /// Beta priors `(d1, d2)` on silver true positive rates.
    pub theta_ss: Vec<BetaPrior>,
}

/// Non-informative defaults: Dirichlet(1, ..., 1) and Beta(1, 1) everywhere.
pub fn default_hyperpriors(panel: &PathogenPanel) -> HyperPriors {
    let j = panel.len();
    HyperPriors {
        pi_weights: vec![1.0; j],
        psi_brs: vec![BetaPrior::UNIFORM; j],
        theta_brs: vec![BetaPrior::UNIFORM; j],
        theta_ss: vec![BetaPrior::UNIFORM; panel.n_ss()],
    }
}

impl HyperPriors {
    pub fn check(&self, panel: &PathogenPanel) -> Result<()> {
        let j = panel.len();
        if self.pi_weights.len() != j
            || self.psi_brs.len() != j
            || self.theta_brs.len() != j
            || self.theta_ss.len() != panel.n_ss()
        {
            return Err(PlcmError::InvalidHyperPriors(format!(
                "dimensions do not match panel with J={j}, J'={}",
                panel.n_ss()
            )));
        }
        let betas = self.psi_brs.iter().chain(&self.theta_brs).chain(&self.theta_ss);
        let ok = self.pi_weights.iter().all(|&a| a > 0.0 && a.is_finite())
            && betas.clone().all(|b| b.alpha > 0.0 && b.beta > 0.0 && b.alpha.is_finite() && b.beta.is_finite());
        if !ok {
            return Err(PlcmError::InvalidHyperPriors(
                "all hyperparameters must be finite and strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Lower and upper tail probabilities matched by default.
pub const DEFAULT_TAILS: (f64, f64) = (0.025, 0.975);
/// Maximum allowed distance between matched and target quantiles.
pub const ELICITATION_TOL: f64 = 1e-4;

/// Beta parameters whose 2.5% and 97.5% quantiles match `lo` and `hi`.
pub fn elicit_beta_from_quantiles(lo: f64, hi: f64) -> Result<BetaPrior> {
    elicit_beta_with_tails(lo, hi, DEFAULT_TAILS.0, DEFAULT_TAILS.1)
}

/// Beta parameters whose `p_lo` and `p_hi` quantiles match `lo` and `hi`.
///
/// The full range `(0, 1)` maps to Beta(1, 1). A single endpoint at 0 or 1
/// cannot be a quantile of a proper Beta distribution; it is matched to
/// within [`ELICITATION_TOL`] instead.
pub fn elicit_beta_with_tails(lo: f64, hi: f64, p_lo: f64, p_hi: f64) -> Result<BetaPrior> {
    let fail = |reason: &str| PlcmError::Elicitation {
        lo,
        hi,
        reason: reason.to_string(),
    };
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(fail("need 0 <= lo < hi <= 1"));
    }
    if !(p_lo > 0.0 && p_lo < p_hi && p_hi < 1.0) {
        return Err(fail("need 0 < p_lo < p_hi < 1"));
    }
    if lo == 0.0 && hi == 1.0 {
        return Ok(BetaPrior::UNIFORM);
    }
    let edge = 0.5 * ELICITATION_TOL;
    let lo_t = lo.max(edge);
    let hi_t = hi.min(1.0 - edge);
    if lo_t >= hi_t {
        return Err(fail("range is narrower than the matching tolerance"));
    }

    let (ln_a_min, ln_a_max) = (1e-3f64.ln(), 1e6f64.ln());
    let (ln_b_min, ln_b_max) = (1e-4f64.ln(), 1e8f64.ln());

    // For fixed alpha, the beta matching the upper quantile (the CDF at a
    // fixed point increases with beta). When alpha is out of reach, the sign
    // in `Err` tells the outer search which way to move.
    let solve_beta = |ln_a: f64| -> std::result::Result<f64, f64> {
        let a = ln_a.exp();
        let h = |ln_b: f64| beta_cdf(hi_t, a, ln_b.exp()) - p_hi;
        if h(ln_b_min) > 0.0 {
            // mass piles up near zero even for the smallest beta: alpha too small
            return Err(1.0);
        }
        if h(ln_b_max) < 0.0 {
            return Err(-1.0);
        }
        let (mut l, mut u) = (ln_b_min, ln_b_max);
        for _ in 0..100 {
            let mid = 0.5 * (l + u);
            if h(mid) < 0.0 {
                l = mid;
            } else {
                u = mid;
            }
        }
        Ok(0.5 * (l + u))
    };
    // Lower-tail residual along the curve that matches the upper quantile;
    // decreasing in alpha.
    let g = |ln_a: f64| -> f64 {
        match solve_beta(ln_a) {
            Ok(ln_b) => beta_cdf(lo_t, ln_a.exp(), ln_b.exp()) - p_lo,
            Err(sign) => sign,
        }
    };

    if g(ln_a_min) <= 0.0 || g(ln_a_max) >= 0.0 {
        return Err(fail("no Beta distribution in the search box matches both quantiles"));
    }
    let (mut l, mut u) = (ln_a_min, ln_a_max);
    for _ in 0..100 {
        let mid = 0.5 * (l + u);
        if g(mid) > 0.0 {
            l = mid;
        } else {
            u = mid;
        }
    }
    let ln_a = 0.5 * (l + u);
    let ln_b = solve_beta(ln_a).map_err(|_| fail("inner solve lost its bracket"))?;
    let prior = BetaPrior::new(ln_a.exp(), ln_b.exp());
    let r_lo = (prior.quantile(p_lo) - lo).abs();
    let r_hi = (prior.quantile(p_hi) - hi).abs();
    if r_lo >= ELICITATION_TOL || r_hi >= ELICITATION_TOL {
        return Err(fail(&format!(
            "solver stopped with quantile residuals {r_lo:.2e}, {r_hi:.2e}"
        )));
    }
    Ok(prior)
}
