//! Two-groups model, the Bayes Oracle and the Benjamini–Hochberg baseline.
//!
//! Under the two-groups model each `μ_i` is `0` with probability `1 − p`
//! and `N(0, ψ²)` otherwise, and `X_i | μ_i ~ N(μ_i, σ²)`. All formulas are
//! written for `σ² = 1`; a general `σ²` is handled by standardizing, so that
//! `u = ψ²/σ²` and observations enter as `x/σ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{central_prob, two_sided_tail};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupsParams {
    pub m: usize,
    pub p: f64,
    pub psi2: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
}

fn one() -> f64 {
    1.0
}

impl TwoGroupsParams {
    pub fn new(m: usize, p: f64, psi2: f64, sigma2: f64) -> Result<Self> {
        let s = Self { m, p, psi2, sigma2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.psi2 > 0.0 && self.psi2.is_finite()) {
            return Err(Error::invalid(format!("psi2 must be positive, got {}", self.psi2)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Derived Oracle quantities on the standardized scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleQuantities {
    pub u: f64,
    pub f: f64,
    pub v: f64,
    /// Threshold on `(x/σ)²`.
    pub c2: f64,
    /// Limit of `log v / u` when the parameters come from a sequence.
    #[serde(rename = "C")]
    pub c_limit: Option<f64>,
    pub sigma2: f64,
}

impl OracleQuantities {
    pub fn c(&self) -> f64 {
        self.c2.sqrt()
    }

    pub fn with_limit(mut self, c: f64) -> Self {
        self.c_limit = Some(c);
        self
    }
}

pub fn derive_oracle(params: &TwoGroupsParams) -> Result<OracleQuantities> {
    params.validate()?;
    let u = params.psi2 / params.sigma2;
    let f = (1.0 - params.p) / params.p;
    let v = u * f * f;
    let inner = v.ln() + (1.0 / u).ln_1p();
    if !(inner > 0.0) {
        return Err(Error::DegenerateRegime(format!(
            "log v + log(1 + 1/u) = {inner} is not positive (u = {u}, v = {v})"
        )));
    }
    let c2 = (1.0 + 1.0 / u) * inner;
    Ok(OracleQuantities {
        u,
        f,
        v,
        c2,
        c_limit: None,
        sigma2: params.sigma2,
    })
}

/// Reject when `(x/σ)² > c²`.
pub fn oracle_decide(x: f64, oq: &OracleQuantities) -> bool {
    x * x / oq.sigma2 > oq.c2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRates {
    pub t1: f64,
    pub t2: f64,
    pub risk: f64,
}

/// Exact type I and type II error probabilities of the Oracle and its
/// Bayes risk `m[(1 − p)t1 + p t2]`.
pub fn oracle_exact_errors(params: &TwoGroupsParams, oq: &OracleQuantities) -> ErrorRates {
    threshold_rule_errors(params, oq.u, oq.c())
}

/// Errors of the rule `|x/σ| > θ` under the two-groups model.
pub fn threshold_rule_errors(params: &TwoGroupsParams, u: f64, theta: f64) -> ErrorRates {
    let t1 = two_sided_tail(theta);
    let t2 = central_prob(theta / (1.0 + u).sqrt());
    let m = params.m as f64;
    ErrorRates {
        t1,
        t2,
        risk: m * ((1.0 - params.p) * t1 + params.p * t2),
    }
}

pub fn oracle_asymptotic_risk(oq: &OracleQuantities, m: usize, p: f64) -> Result<ErrorRates> {
    let c = oq.c_limit.ok_or(Error::MissingLimit)?;
    let lv = oq.v.ln();
    let t1 = (-c / 2.0).exp() * (2.0 / (std::f64::consts::PI * oq.v * lv)).sqrt();
    let t2 = central_prob(c.sqrt());
    Ok(ErrorRates {
        t1,
        t2,
        risk: m as f64 * p * t2,
    })
}

/// Posterior probability that observation `x` came from the alternative.
pub fn inclusion_probability(x: f64, params: &TwoGroupsParams) -> f64 {
    let u = params.psi2 / params.sigma2;
    let z2 = x * x / params.sigma2;
    let f = (1.0 - params.p) / params.p;
    let ln_odds_against = f.ln() + 0.5 * (1.0 + u).ln() - 0.5 * z2 * u / (1.0 + u);
    1.0 / (ln_odds_against.exp() + 1.0)
}

/// Benjamini–Hochberg step-up on two-sided normal p-values of standardized
/// statistics.
pub fn bh_procedure(xs: &[f64], alpha: f64) -> Result<Vec<bool>> {
    if xs.is_empty() {
        return Err(Error::invalid("BH needs at least one statistic"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("BH level must lie in (0, 1), got {alpha}")));
    }
    let pvals: Vec<f64> = xs.iter().map(|&x| two_sided_tail(x)).collect();
    Ok(bh_from_pvalues(&pvals, alpha))
}

pub fn bh_from_pvalues(pvals: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut cutoff = None;
    for (rank, &i) in order.iter().enumerate() {
        if pvals[i] <= (rank + 1) as f64 * alpha / m as f64 {
            cutoff = Some(pvals[i]);
        }
    }
    match cutoff {
        None => vec![false; m],
        Some(c) => pvals.iter().map(|&p| p <= c).collect(),
    }
}

/// `p = k m^{-ε}` with `ψ²` the larger root of `log(ψ² f²)/ψ² = C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSequence {
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    #[serde(default = "one")]
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequencePoint {
    pub m: usize,
    pub p: f64,
    pub u: f64,
    pub v: f64,
    pub log_v_over_u: f64,
}

impl AsymptoticSequence {
    pub fn new(c: f64, epsilon: f64, k: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {c}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("k must be positive, got {k}")));
        }
        Ok(Self { c, epsilon, k })
    }

    pub fn p_at(&self, m: usize) -> Result<f64> {
        let p = self.k * (m as f64).powf(-self.epsilon);
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DegenerateRegime(format!("p = {p} at m = {m} is outside (0, 1)")));
        }
        Ok(p)
    }

    /// Larger root of `log(u f²)/u = C`, bracketed on `(e/f², ∞)` where the
    /// left side decreases from its maximum `f²/e`.
    pub fn psi2_at(&self, m: usize) -> Result<f64> {
        let p = self.p_at(m)?;
        let f = (1.0 - p) / p;
        let f2 = f * f;
        let g = |u: f64| (u * f2).ln() / u - self.c;
        let mut lo = std::f64::consts::E / f2;
        if g(lo) <= 0.0 {
            return Err(Error::DegenerateRegime(format!(
                "log(u f²)/u never reaches C = {} at m = {m} (max {})",
                self.c,
                f2 / std::f64::consts::E
            )));
        }
        let mut hi = lo.max(1.0);
        while g(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn params_at(&self, m: usize) -> Result<TwoGroupsParams> {
        TwoGroupsParams::new(m, self.p_at(m)?, self.psi2_at(m)?, 1.0)
    }

    pub fn oracle_at(&self, m: usize) -> Result<(TwoGroupsParams, OracleQuantities)> {
        let params = self.params_at(m)?;
        let oq = derive_oracle(&params)?.with_limit(self.c);
        Ok((params, oq))
    }

    pub fn trajectory(&self, ms: &[usize]) -> Result<Vec<SequencePoint>> {
        ms.iter()
            .map(|&m| {
                let (params, oq) = self.oracle_at(m)?;
                Ok(SequencePoint {
                    m,
                    p: params.p,
                    u: oq.u,
                    v: oq.v,
                    log_v_over_u: oq.v.ln() / oq.u,
                })
            })
            .collect()
    }
}
