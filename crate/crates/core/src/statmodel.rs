//! Count statistics: zero-truncated Poisson model, Plackett estimation,
//! quantile thresholds and the per-slice dispersion test that picks between
//! the truncated and the plain Poisson law.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accumulate::CountVolume;
use crate::error::{Error, Result};

/// Floor applied to the Plackett estimate when every observation is 1.
pub const MIN_THETA: f64 = 1e-6;

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("rate must be positive and finite, got {theta}")));
    }
    Ok(())
}

fn check_level(level: f64, what: &str) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("{what} must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Upper limit of every quantile scan.
pub fn quantile_guard(theta: f64) -> u64 {
    (theta + 20.0 * theta.sqrt() + 50.0).ceil() as u64
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `ln P(X = n)` for `X ~ Poisson(θ)`.
fn poisson_ln_pmf(theta: f64, n: u64) -> f64 {
    -theta + n as f64 * theta.ln() - ln_factorial(n)
}

pub fn poisson_pmf(theta: f64, n: u64) -> Result<f64> {
    check_theta(theta)?;
    Ok(poisson_ln_pmf(theta, n).exp())
}

pub fn poisson_cdf(theta: f64, n: u64) -> Result<f64> {
    check_theta(theta)?;
    let mut ln_p = -theta;
    let mut sum = ln_p.exp();
    for k in 1..=n {
        ln_p += theta.ln() - (k as f64).ln();
        sum += ln_p.exp();
    }
    Ok(sum.min(1.0))
}

/// Smallest `q` with `P(X ≤ q) ≥ level`.
pub fn poisson_quantile(theta: f64, level: f64) -> Result<u64> {
    check_theta(theta)?;
    check_level(level, "level")?;
    let guard = quantile_guard(theta);
    let mut ln_p = -theta;
    let mut cdf = ln_p.exp();
    let mut q = 0;
    while cdf < level {
        q += 1;
        if q > guard {
            return Err(Error::Domain(format!(
                "Poisson({theta}) quantile at level {level} exceeds the scan limit {guard}"
            )));
        }
        ln_p += theta.ln() - (q as f64).ln();
        cdf += ln_p.exp();
    }
    Ok(q)
}

/// Zero-truncated Poisson law on `{1, 2, …}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZtpModel {
    pub theta: f64,
}

impl ZtpModel {
    pub fn new(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(ZtpModel { theta })
    }

    /// `ln(1 − e^{−θ})`, stable for small θ.
    fn ln_norm(&self) -> f64 {
        (-(-self.theta).exp_m1()).ln()
    }

    pub fn pmf(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("0 is outside the zero-truncated support".into()));
        }
        Ok((poisson_ln_pmf(self.theta, n) - self.ln_norm()).exp())
    }

    pub fn cdf(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("0 is outside the zero-truncated support".into()));
        }
        let ln_norm = self.ln_norm();
        let mut ln_p = poisson_ln_pmf(self.theta, 1);
        let mut sum = (ln_p - ln_norm).exp();
        for k in 2..=n {
            ln_p += self.theta.ln() - (k as f64).ln();
            sum += (ln_p - ln_norm).exp();
        }
        Ok(sum.min(1.0))
    }

    pub fn mean(&self) -> f64 {
        self.theta / -(-self.theta).exp_m1()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        mu * (1.0 + self.theta - mu)
    }
}

/// How the ZTP quantile is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMethod {
    /// Direct inversion of the truncated CDF.
    #[default]
    Exact,
    /// Poisson quantile at the level `F(0) + (1 − α)(1 − F(0))`, which is the
    /// truncated quantile exactly.
    Gilchrist,
    /// Poisson quantile at `F(1) − (1 − α)(1 − F(1))`, kept only to compare
    /// against that form of the conversion. Often not a valid level.
    PaperLiteral,
}

/// Equivalent plain-Poisson level for a truncated confidence `1 − α`.
pub fn poisson_level(theta: f64, alpha: f64, method: QuantileMethod) -> Result<f64> {
    check_theta(theta)?;
    check_level(alpha, "alpha")?;
    let level = match method {
        QuantileMethod::Exact | QuantileMethod::Gilchrist => {
            let f0 = (-theta).exp();
            f0 + (1.0 - alpha) * (1.0 - f0)
        }
        QuantileMethod::PaperLiteral => {
            let f1 = poisson_cdf(theta, 1)?;
            f1 - (1.0 - alpha) * (1.0 - f1)
        }
    };
    Ok(level)
}

/// Threshold `λ`: smallest `n ≥ 1` with `P(N ≤ n) ≥ 1 − α`.
pub fn ztp_quantile(model: &ZtpModel, alpha: f64, method: QuantileMethod) -> Result<u64> {
    check_level(alpha, "alpha")?;
    match method {
        QuantileMethod::Exact => {
            let target = 1.0 - alpha;
            let guard = quantile_guard(model.theta);
            let ln_norm = model.ln_norm();
            let mut ln_p = poisson_ln_pmf(model.theta, 1);
            let mut cdf = (ln_p - ln_norm).exp();
            let mut n = 1;
            while cdf < target {
                n += 1;
                if n > guard {
                    return Err(Error::Domain(format!(
                        "ZTP({}) quantile at level {target} exceeds the scan limit {guard}",
                        model.theta
                    )));
                }
                ln_p += model.theta.ln() - (n as f64).ln();
                cdf += (ln_p - ln_norm).exp();
            }
            Ok(n)
        }
        QuantileMethod::Gilchrist | QuantileMethod::PaperLiteral => {
            let level = poisson_level(model.theta, alpha, method)?;
            check_level(level, "converted Poisson level")?;
            Ok(poisson_quantile(model.theta, level)?.max(1))
        }
    }
}

/// `(Σn − #{n = 1}) / L`, floored at [`MIN_THETA`].
pub fn plackett_estimate(counts: &[u32]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Estimation("Plackett estimate of an empty sample".into()));
    }
    if let Some(&z) = counts.iter().find(|&&n| n == 0) {
        return Err(Error::Estimation(format!("zero-truncated sample contains {z}")));
    }
    let sum: u64 = counts.iter().map(|&n| n as u64).sum();
    let ones = counts.iter().filter(|&&n| n == 1).count() as u64;
    Ok(((sum - ones) as f64 / counts.len() as f64).max(MIN_THETA))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    /// `S · V² / mean`.
    pub t_f: f64,
    pub s: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

/// Dispersion statistic; `None` when fewer than two observations remain or
/// their mean is zero.
pub fn fisher_dispersion(counts: &[u32], non_null_only: bool) -> Option<Dispersion> {
    let values: Vec<f64> = counts
        .iter()
        .filter(|&&n| !non_null_only || n > 0)
        .map(|&n| n as f64)
        .collect();
    let s = values.len();
    if s < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / s as f64;
    if mean <= 0.0 {
        return None;
    }
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1) as f64;
    Some(Dispersion {
        t_f: s as f64 * variance / mean,
        s,
        mean,
        variance,
    })
}

/// Standard normal quantile by the rational approximation with |error| < 4.5e-4.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_level(p, "probability")?;
    let (q, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    let t = (-2.0 * q.ln()).sqrt();
    let z = t - (2.515517 + 0.802853 * t + 0.010328 * t * t)
        / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    Ok(sign * z)
}

/// Wilson–Hilferty approximation of the χ² quantile.
pub fn chi_square_quantile(df: u64, p: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("chi-square needs at least one degree of freedom".into()));
    }
    let z = normal_quantile(p)?;
    let k = df as f64;
    let c = 2.0 / (9.0 * k);
    Ok(k * (1.0 - c + z * c.sqrt()).powi(3).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountModel {
    #[serde(rename = "ZTP")]
    Ztp,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDecision {
    pub slice: usize,
    pub model: CountModel,
    pub theta_hat: f64,
    pub lambda: u64,
    /// Absent when the slice is too small or flat to test.
    pub t_f: Option<f64>,
    pub s: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// True when the slice took the volume-wide decision.
    pub inherited: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    /// Significance of the tolerance limit.
    pub alpha_limit: f64,
    /// Lower-tail level of the dispersion test.
    pub alpha_test: f64,
    pub per_slice: bool,
    /// Compute the statistic on non-null counts only.
    pub non_null_only: bool,
    pub method: QuantileMethod,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            alpha_limit: 0.05,
            alpha_test: 0.05,
            per_slice: true,
            non_null_only: true,
            method: QuantileMethod::Exact,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<()> {
        for (v, what) in [(self.alpha_limit, "alpha_limit"), (self.alpha_test, "alpha_test")] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{what} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Volume-wide ZTP fit on every non-null count.
pub fn global_ztp_threshold(volume: &CountVolume, params: &SelectionParams) -> Result<(f64, u64)> {
    let nz: Vec<u32> = volume.counts.iter().copied().filter(|&n| n > 0).collect();
    let theta = plackett_estimate(&nz).map_err(|e| e.context("volume has no non-null counts"))?;
    let lambda = ztp_quantile(&ZtpModel::new(theta)?, params.alpha_limit, params.method)?;
    Ok((theta, lambda))
}

fn decide_slice(
    slice: usize,
    counts: &[u32],
    params: &SelectionParams,
    global: (f64, u64),
) -> Result<SliceDecision> {
    let nz: Vec<u32> = counts.iter().copied().filter(|&n| n > 0).collect();
    let stat = fisher_dispersion(counts, params.non_null_only);
    let inherit = |stat: Option<Dispersion>| SliceDecision {
        slice,
        model: CountModel::Ztp,
        theta_hat: global.0,
        lambda: global.1,
        t_f: stat.map(|d| d.t_f),
        s: stat.map_or(nz.len(), |d| d.s),
        mean: stat.map(|d| d.mean),
        variance: stat.map(|d| d.variance),
        inherited: true,
    };
    let Some(d) = stat else {
        return Ok(inherit(None));
    };
    if nz.len() < 2 || nz.iter().all(|&n| n == 1) {
        return Ok(inherit(Some(d)));
    }
    let cut = chi_square_quantile((d.s - 1) as u64, params.alpha_test)?;
    let (model, theta_hat, lambda) = if d.t_f > cut {
        let theta = nz.iter().map(|&n| n as f64).sum::<f64>() / nz.len() as f64;
        (CountModel::Poisson, theta, poisson_quantile(theta, 1.0 - params.alpha_limit)?)
    } else {
        let theta = plackett_estimate(&nz)?;
        (
            CountModel::Ztp,
            theta,
            ztp_quantile(&ZtpModel::new(theta)?, params.alpha_limit, params.method)?,
        )
    };
    log::debug!(
        "slice {slice}: {model:?} theta={theta_hat:.4} lambda={lambda} T_f={:.1} S={}",
        d.t_f,
        d.s
    );
    Ok(SliceDecision {
        slice,
        model,
        theta_hat,
        lambda,
        t_f: Some(d.t_f),
        s: d.s,
        mean: Some(d.mean),
        variance: Some(d.variance),
        inherited: false,
    })
}

/// One decision per z slice. With `per_slice` off every slice receives the
/// volume-wide ZTP threshold.
pub fn select_model_and_threshold(volume: &CountVolume, params: &SelectionParams) -> Result<Vec<SliceDecision>> {
    params.validate()?;
    if volume.counts.is_empty() {
        return Err(Error::InputValidation("empty count volume".into()));
    }
    let global = global_ztp_threshold(volume, params)?;
    let [nx, ny, nz] = volume.grid.dims;
    let plane = nx * ny;
    (0..nz)
        .into_par_iter()
        .map(|k| {
            let counts = &volume.counts[k * plane..(k + 1) * plane];
            if params.per_slice {
                decide_slice(k, counts, params, global)
            } else {
                let nnz = counts.iter().filter(|&&n| n > 0).count();
                Ok(SliceDecision {
                    slice: k,
                    model: CountModel::Ztp,
                    theta_hat: global.0,
                    lambda: global.1,
                    t_f: None,
                    s: nnz,
                    mean: None,
                    variance: None,
                    inherited: true,
                })
            }
        })
        .collect()
}

pub fn write_decisions_json(decisions: &[SliceDecision], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(decisions)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
