//! Gamma-law baselines for CSIT-free transmission, used as an analytical
//! oracle for the Monte Carlo harness.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Gamma distribution with shape `k` and scale `θ` (mean `kθ`, variance `kθ²`).
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("gamma parameters must be positive, got k={shape}, θ={scale}")));
        }
        Ok(Self { shape, scale })
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn second_moment(&self) -> f64 {
        self.variance() + self.mean().powi(2)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        gamma_pdf(x, *self)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            statrs::function::gamma::gamma_lr(self.shape, x / self.scale)
        }
    }
}

/// `x^{k−1}·e^{−x/θ} / (θ^k·Γ(k))`, evaluated in the log domain.
pub fn gamma_pdf(x: f64, p: GammaParams) -> Result<f64> {
    let p = GammaParams::new(p.shape, p.scale)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("gamma density needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(if p.shape < 1.0 {
            f64::INFINITY
        } else if p.shape == 1.0 {
            1.0 / p.scale
        } else {
            0.0
        });
    }
    let ln = (p.shape - 1.0) * x.ln() - x / p.scale - p.shape * p.scale.ln() - ln_gamma(p.shape);
    Ok(ln.exp())
}

/// Path gain normalized by transmit power and element gain, `β/(Pₓ·G_a)`.
pub fn beta_eq(beta_linear: f64, px: f64, ga_linear: f64) -> Result<f64> {
    if !(beta_linear > 0.0 && px > 0.0 && ga_linear > 0.0) {
        return Err(Error::Domain("beta_eq arguments must be positive".into()));
    }
    Ok(beta_linear / (px * ga_linear))
}

/// Moment-matched single Gamma for a sum of independent Gamma variables.
pub fn second_order_approx(terms: &[GammaParams]) -> Result<GammaParams> {
    if terms.is_empty() {
        return Err(Error::Empty);
    }
    let m1: f64 = terms.iter().map(|t| t.shape * t.scale).sum();
    let m2: f64 = terms.iter().map(|t| t.shape * t.scale * t.scale).sum();
    GammaParams::new(m1 * m1 / m2, m2 / m1)
}

/// Sum power of `K·L` terminals under equal-power transmission: `Γ(KL, β_eq)`.
pub fn aa_baseline(k: usize, l: usize, beta_eq: f64) -> Result<GammaParams> {
    GammaParams::new((k * l) as f64, beta_eq)
}

/// Sum power under antenna switching: `Γ(MKL, β_eq/M)`.
pub fn sa_baseline(m: usize, k: usize, l: usize, beta_eq: f64) -> Result<GammaParams> {
    GammaParams::new((m * k * l) as f64, beta_eq / m as f64)
}

/// Power carried by `c` of the `K` coordinates: `Γ((c/K)k, θ)` and its
/// second moment.
pub fn projection_power(c: usize, k: usize, base: GammaParams) -> Result<(GammaParams, f64)> {
    if c == 0 || c > k {
        return Err(Error::Domain(format!("projection onto {c} of {k} coordinates")));
    }
    let p = GammaParams::new(c as f64 / k as f64 * base.shape, base.scale)?;
    let second = p.shape * p.scale * p.scale + p.mean().powi(2);
    Ok((p, second))
}

/// Decibel terms of a one-hop power budget.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub px_dbm: f64,
    pub ga_db: f64,
    pub gp_db: f64,
    pub beta_db: f64,
    pub pr_dbm: f64,
}

impl LinkBudget {
    pub fn new(px_dbm: f64, ga_db: f64, gp_db: f64, beta_db: f64) -> Self {
        Self { px_dbm, ga_db, gp_db, beta_db, pr_dbm: link_budget(px_dbm, ga_db, gp_db, beta_db) }
    }

    /// Solves for the precoding gain that explains a measured received power.
    pub fn implied_gain(pr_dbm: f64, px_dbm: f64, ga_db: f64, beta_db: f64) -> Self {
        Self { px_dbm, ga_db, gp_db: pr_dbm - px_dbm - ga_db - beta_db, beta_db, pr_dbm }
    }
}

/// `P_r = P_x + G_a + G_p + β`, all in dB/dBm with `β` negative for loss.
pub fn link_budget(px_dbm: f64, ga_db: f64, gp_db: f64, beta_db: f64) -> f64 {
    px_dbm + ga_db + gp_db + beta_db
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Largest gap between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}
