//! Posterior functionals of the shrinkage coefficient `κ = 1/(1 + λ²τ²)`
//! given a single observation.
//!
//! Every κ-integral is computed after the change of variable
//! `t = (1/τ²)(1/κ − 1)` (so `t` is the local variance λ²) and then
//! `s = log t`. In `s` the integrand is the mixing density times bounded
//! smooth factors:
//!
//! ```text
//! exp(-a s) · L(e^s) · (1 + e^s τ²)^{-1/2} · exp(-z² / (2(1 + e^s τ²)))
//! ```
//!
//! with `z = x/σ`. The normalizer of this integrand is `D`; the posterior
//! mean of `1 − κ` is `N / D` where `N` carries the extra factor
//! `tτ²/(1 + tτ²)`. All products are formed in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{LnL, ShrinkagePriorSpec};
use crate::quadrature::{self, QuadratureSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorQuery {
    pub x: f64,
    pub tau: f64,
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

impl PosteriorQuery {
    pub fn new(x: f64, tau: f64, sigma: f64) -> Result<Self> {
        let q = Self { x, tau, sigma };
        q.validate()?;
        Ok(q)
    }

    pub fn unit(x: f64, tau: f64) -> Result<Self> {
        Self::new(x, tau, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x.is_finite() {
            return Err(Error::invalid(format!("observation must be finite, got {}", self.x)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Standardized observation `x/σ`.
    pub fn z(&self) -> f64 {
        self.x / self.sigma
    }
}

/// Log-space integrand in `s = log t` for one (z, τ) pair.
pub(crate) struct Kernel<'a> {
    spec: &'a ShrinkagePriorSpec,
    lnl: LnL,
    z2: f64,
    tau2: f64,
    ln_tau2: f64,
}

/// Pieces of the integrand at one node, all logarithms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Node {
    pub ln_base: f64,
    /// `log(1 − κ)`
    pub ln_shrunk: f64,
    /// `log κ`
    pub ln_kappa: f64,
}

impl<'a> Kernel<'a> {
    pub fn new(spec: &'a ShrinkagePriorSpec, z: f64, tau: f64) -> Self {
        Self {
            spec,
            lnl: spec.ln_l_evaluator(),
            z2: z * z,
            tau2: tau * tau,
            ln_tau2: 2.0 * tau.ln(),
        }
    }

    #[inline]
    pub fn node(&self, s: f64) -> Result<Node> {
        let t = s.exp();
        let ln1p = (t * self.tau2).ln_1p();
        let kappa = (-ln1p).exp();
        let ln_l = self.lnl.at_log(s)?;
        let ln_base = -self.spec.tail_index * s + ln_l - 0.5 * ln1p - 0.5 * self.z2 * kappa;
        Ok(Node {
            ln_base,
            ln_shrunk: s + self.ln_tau2 - ln1p,
            ln_kappa: -ln1p,
        })
    }

    /// Natural break points in `s`: prior bulk, the scale `1/τ²`, and the
    /// likelihood transition and mode near `z²/τ²`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let a = self.spec.tail_index;
        let mut bp = vec![-4.0, 0.0, 4.0, -self.ln_tau2];
        if self.z2 > 0.0 {
            bp.push(self.z2.max(1.0).ln() - self.ln_tau2);
            let mode = (self.z2 / (2.0 * a + 1.0)).ln() - self.ln_tau2;
            bp.push(mode);
        }
        bp
    }

    /// Integrate `components(node)` (each a log-integrand) over
    /// `s ∈ (lo, hi)`; returns the log-integrals.
    pub fn integrate<const N: usize, C>(
        &self,
        lo: f64,
        hi: f64,
        settings: &QuadratureSettings,
        components: C,
    ) -> Result<[f64; N]>
    where
        C: Fn(&Node) -> [f64; N],
    {
        let interior = self.breakpoints();
        let points = quadrature::breakpoints(lo, hi, &interior);

        // shift by the largest sampled value of the first component
        let mut probe: Vec<f64> = points.iter().copied().filter(|s| s.is_finite()).collect();
        let (pmin, pmax) = (
            probe.iter().copied().fold(f64::INFINITY, f64::min),
            probe.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        if pmin.is_finite() {
            let mut s = pmin;
            while s < pmax {
                probe.push(s);
                s += 1.0;
            }
        }
        let mut shift = f64::NEG_INFINITY;
        for &s in &probe {
            let n = self.node(s)?;
            shift = shift.max(components(&n)[0]);
        }
        if !shift.is_finite() {
            shift = 0.0;
        }

        let mut failure = None;
        let out = quadrature::log_integrate_vec(
            |s| match self.node(s) {
                Ok(n) => components(&n),
                Err(e) => {
                    failure.get_or_insert(e);
                    [f64::NAN; N]
                }
            },
            &points,
            shift,
            settings,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        out
    }
}

/// Unnormalized log posterior density of κ.
pub fn posterior_kappa_logdensity_unnorm(
    spec: &ShrinkagePriorSpec,
    q: &PosteriorQuery,
    kappa: f64,
) -> Result<f64> {
    q.validate()?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    let a = spec.tail_index;
    let z = q.z();
    let t = (1.0 / kappa - 1.0) / (q.tau * q.tau);
    Ok((a - 0.5) * kappa.ln() - (a + 1.0) * (-kappa).ln_1p() + spec.ln_l(t)?
        - 0.5 * kappa * z * z)
}

/// Log of the t-form normalizer `D(z, τ)`.
pub fn ln_normalizer(spec: &ShrinkagePriorSpec, q: &PosteriorQuery, settings: &QuadratureSettings) -> Result<f64> {
    q.validate()?;
    let k = Kernel::new(spec, q.z(), q.tau);
    let [d] = k.integrate(f64::NEG_INFINITY, f64::INFINITY, settings, |n| [n.ln_base])?;
    Ok(d)
}

/// Posterior mean of `1 − κ`, the shrinkage weight.
pub fn mean_shrinkage_weight(
    spec: &ShrinkagePriorSpec,
    q: &PosteriorQuery,
    settings: &QuadratureSettings,
) -> Result<f64> {
    q.validate()?;
    weight_z(spec, q.z(), q.tau, settings)
}

pub(crate) fn weight_z(spec: &ShrinkagePriorSpec, z: f64, tau: f64, settings: &QuadratureSettings) -> Result<f64> {
    let k = Kernel::new(spec, z, tau);
    let [d, n] = k.integrate(f64::NEG_INFINITY, f64::INFINITY, settings, |n| {
        [n.ln_base, n.ln_base + n.ln_shrunk]
    })?;
    Ok((n - d).exp().clamp(0.0, 1.0))
}

/// Posterior summaries used to build interpolation tables.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments {
    pub ln_d: f64,
    pub weight: f64,
    /// Posterior variance of κ.
    pub var_kappa: f64,
}

pub(crate) fn moments_z(spec: &ShrinkagePriorSpec, z: f64, tau: f64, settings: &QuadratureSettings) -> Result<Moments> {
    let k = Kernel::new(spec, z, tau);
    let [d, n, m1, m2] = k.integrate(f64::NEG_INFINITY, f64::INFINITY, settings, |n| {
        [
            n.ln_base,
            n.ln_base + n.ln_shrunk,
            n.ln_base + n.ln_kappa,
            n.ln_base + 2.0 * n.ln_kappa,
        ]
    })?;
    let e1 = (m1 - d).exp();
    let e2 = (m2 - d).exp();
    Ok(Moments {
        ln_d: d,
        weight: (n - d).exp().clamp(0.0, 1.0),
        var_kappa: (e2 - e1 * e1).max(0.0),
    })
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// `Pr(κ < ε | x, τ, σ)`.
pub fn tail_prob_kappa_below(
    spec: &ShrinkagePriorSpec,
    q: &PosteriorQuery,
    eps: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    q.validate()?;
    check_level("eps", eps)?;
    let k = Kernel::new(spec, q.z(), q.tau);
    // κ < ε  ⇔  t > (1/τ²)(1/ε − 1)
    let s_cut = (1.0 / eps - 1.0).ln() - 2.0 * q.tau.ln();
    let [d] = k.integrate(f64::NEG_INFINITY, f64::INFINITY, settings, |n| [n.ln_base])?;
    let [tail] = k.integrate(s_cut, f64::INFINITY, settings, |n| [n.ln_base])?;
    Ok((tail - d).exp().clamp(0.0, 1.0))
}

/// `Pr(κ > η | x, τ, σ)`.
pub fn tail_prob_kappa_above(
    spec: &ShrinkagePriorSpec,
    q: &PosteriorQuery,
    eta: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    q.validate()?;
    check_level("eta", eta)?;
    let k = Kernel::new(spec, q.z(), q.tau);
    let s_cut = (1.0 / eta - 1.0).ln() - 2.0 * q.tau.ln();
    let [d] = k.integrate(f64::NEG_INFINITY, f64::INFINITY, settings, |n| [n.ln_base])?;
    let [head] = k.integrate(f64::NEG_INFINITY, s_cut, settings, |n| [n.ln_base])?;
    Ok((head - d).exp().clamp(0.0, 1.0))
}

/// `E(μ | x, τ, σ) = E(1 − κ | x, τ, σ) · x`.
pub fn posterior_mean_mu(
    spec: &ShrinkagePriorSpec,
    q: &PosteriorQuery,
    settings: &QuadratureSettings,
) -> Result<f64> {
    Ok(mean_shrinkage_weight(spec, q, settings)? * q.x)
}

/// Where the shrinkage weight, as a function of `|x|`, crosses a level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// The weight already exceeds the level at `x = 0`.
    Everywhere,
    /// The weight exceeds the level exactly when `|x| > x*`.
    Above(f64),
}

impl Threshold {
    pub fn exceeds(&self, x: f64) -> bool {
        match *self {
            Threshold::Everywhere => true,
            Threshold::Above(c) => x.abs() > c,
        }
    }
}

const THRESHOLD_X_TOL: f64 = 1e-10;

/// Solve `mean_shrinkage_weight(x*) = level` for `x* ≥ 0` by bisection.
pub fn weight_threshold_x(
    spec: &ShrinkagePriorSpec,
    tau: f64,
    sigma: f64,
    level: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    PosteriorQuery::new(0.0, tau, sigma)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::NoCrossing {
            level,
            low: 0.0,
            high: 1.0,
        });
    }
    let w0 = weight_z(spec, 0.0, tau, settings)?;
    if level <= w0 {
        return Err(Error::NoCrossing {
            level,
            low: w0,
            high: 1.0,
        });
    }
    bisect_threshold(spec, tau, sigma, level, settings)
}

/// Like [`weight_threshold_x`] but reports `Everywhere` instead of failing
/// when the weight at zero is already above the level.
pub fn weight_threshold(
    spec: &ShrinkagePriorSpec,
    tau: f64,
    sigma: f64,
    level: f64,
    settings: &QuadratureSettings,
) -> Result<Threshold> {
    PosteriorQuery::new(0.0, tau, sigma)?;
    let w0 = weight_z(spec, 0.0, tau, settings)?;
    if w0 > level {
        return Ok(Threshold::Everywhere);
    }
    if w0 == level {
        return Ok(Threshold::Above(0.0));
    }
    bisect_threshold(spec, tau, sigma, level, settings).map(Threshold::Above)
}

fn bisect_threshold(
    spec: &ShrinkagePriorSpec,
    tau: f64,
    sigma: f64,
    level: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    // work in z = x/σ; the tolerance on x translates to tol/σ on z
    let tol = THRESHOLD_X_TOL / sigma;
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let w = weight_z(spec, hi, tau, settings)?;
        if w > level {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e5 {
            return Err(Error::NoCrossing {
                level,
                low: w,
                high: 1.0,
            });
        }
    }
    let mut iters = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if weight_z(spec, mid, tau, settings)? > level {
            hi = mid;
        } else {
            lo = mid;
        }
        iters += 1;
        if iters > 200 {
            return Err(Error::numeric("threshold bisection", (hi - lo) / hi));
        }
    }
    Ok(0.5 * (lo + hi) * sigma)
}
