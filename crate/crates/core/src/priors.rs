//! Local-scale mixing densities of the form `K · t^{-a-1} · L(t)` with `L`
//! slowly varying.
//!
//! Two families are supported:
//!
//! * three-parameter beta normal (TPBN): `L(t) = (1 + 1/t)^{-(α+β)}`,
//!   `a = β`, `K = Γ(α+β) / (Γ(α)Γ(β))`;
//! * generalized double Pareto (GDP): `L` is a one-dimensional integral
//!   evaluated by adaptive quadrature, `a = α/2`, `K = β^α / Γ(α)`.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadratureSettings};
use crate::special::{gamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tpbn,
    Gdp,
}

/// Named members of the two families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Horseshoe,
    StrawdermanBerger,
    /// Normal-exponential-gamma, TPBN(1, β) with β = 0.6 by default.
    Neg,
    StandardDoublePareto,
}

pub const NEG_DEFAULT_BETA: f64 = 0.6;

impl Preset {
    pub fn spec(self) -> ShrinkagePriorSpec {
        let (family, alpha, beta) = match self {
            Preset::Horseshoe => (Family::Tpbn, 0.5, 0.5),
            Preset::StrawdermanBerger => (Family::Tpbn, 1.0, 0.5),
            Preset::Neg => (Family::Tpbn, 1.0, NEG_DEFAULT_BETA),
            Preset::StandardDoublePareto => (Family::Gdp, 1.0, 1.0),
        };
        let mut spec = make_prior(family, alpha, beta).expect("preset hyperparameters are valid");
        spec.preset = Some(self);
        spec
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Horseshoe => "horseshoe",
            Preset::StrawdermanBerger => "strawderman-berger",
            Preset::Neg => "neg",
            Preset::StandardDoublePareto => "sdp",
        }
    }
}

/// Family tag as accepted on the command line and in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyTag {
    Raw(Family),
    Preset(Preset),
}

impl FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tag = match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "tpbn" => FamilyTag::Raw(Family::Tpbn),
            "gdp" => FamilyTag::Raw(Family::Gdp),
            "horseshoe" | "hs" => FamilyTag::Preset(Preset::Horseshoe),
            "strawderman-berger" | "sb" => FamilyTag::Preset(Preset::StrawdermanBerger),
            "neg" => FamilyTag::Preset(Preset::Neg),
            "sdp" | "standard-double-pareto" => FamilyTag::Preset(Preset::StandardDoublePareto),
            other => return Err(Error::invalid(format!("unknown prior family '{other}'"))),
        };
        Ok(tag)
    }
}

impl FamilyTag {
    /// Resolve to a spec. Explicit hyperparameters override preset values;
    /// NEG only takes `beta`.
    pub fn resolve(self, alpha: Option<f64>, beta: Option<f64>) -> Result<ShrinkagePriorSpec> {
        match self {
            FamilyTag::Raw(family) => {
                let alpha = alpha.ok_or_else(|| Error::MissingParameter("alpha".into()))?;
                let beta = beta.ok_or_else(|| Error::MissingParameter("beta".into()))?;
                make_prior(family, alpha, beta)
            }
            FamilyTag::Preset(Preset::Neg) => {
                let mut spec = make_prior(Family::Tpbn, 1.0, beta.unwrap_or(NEG_DEFAULT_BETA))?;
                spec.preset = Some(Preset::Neg);
                Ok(spec)
            }
            FamilyTag::Preset(p) => {
                let base = p.spec();
                if alpha.is_none() && beta.is_none() {
                    return Ok(base);
                }
                make_prior(
                    base.family,
                    alpha.unwrap_or(base.alpha),
                    beta.unwrap_or(base.beta),
                )
            }
        }
    }
}

/// Serializable prior description used in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl PriorConfig {
    pub fn resolve(&self) -> Result<ShrinkagePriorSpec> {
        self.family.parse::<FamilyTag>()?.resolve(self.alpha, self.beta)
    }
}

/// One fully derived member of the mixing-density family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkagePriorSpec {
    pub family: Family,
    pub alpha: f64,
    pub beta: f64,
    /// Tail index `a` of the mixing density.
    pub tail_index: f64,
    /// Normalizing constant `K`.
    pub norm_const: f64,
    /// `lim_{t→∞} L(t)`.
    pub l_limit: f64,
    /// `sup_{t>0} L(t)`.
    pub l_sup: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
}

impl fmt::Display for ShrinkagePriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preset {
            Some(p) => write!(f, "{}", p.name()),
            None => {
                let fam = match self.family {
                    Family::Tpbn => "tpbn",
                    Family::Gdp => "gdp",
                };
                write!(f, "{fam}({},{})", self.alpha, self.beta)
            }
        }
    }
}

pub fn make_prior(family: Family, alpha: f64, beta: f64) -> Result<ShrinkagePriorSpec> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!(
            "hyperparameters must be positive and finite, got alpha={alpha}, beta={beta}"
        )));
    }
    let spec = match family {
        Family::Tpbn => {
            let ln_k = ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta);
            ShrinkagePriorSpec {
                family,
                alpha,
                beta,
                tail_index: beta,
                norm_const: ln_k.exp(),
                l_limit: 1.0,
                l_sup: 1.0,
                preset: None,
            }
        }
        Family::Gdp => {
            let ln_k = alpha * beta.ln() - ln_gamma(alpha);
            let l_limit = 2f64.powf(alpha / 2.0 - 1.0) * gamma(alpha / 2.0 + 1.0);
            ShrinkagePriorSpec {
                family,
                alpha,
                beta,
                tail_index: alpha / 2.0,
                norm_const: ln_k.exp(),
                l_limit,
                l_sup: l_limit,
                preset: None,
            }
        }
    };
    Ok(spec)
}

impl ShrinkagePriorSpec {
    /// Risk results for the induced tests assume `a < 1`.
    pub fn risk_theory_warning(&self) -> Option<String> {
        (self.tail_index >= 1.0).then(|| {
            format!(
                "tail index a = {} is not below 1; risk bounds for the induced tests do not apply",
                self.tail_index
            )
        })
    }

    pub fn ln_norm_const(&self) -> f64 {
        self.norm_const.ln()
    }

    /// `log L(t)`.
    pub fn ln_l(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("L(t) requires t > 0, got {t}")));
        }
        match self.family {
            Family::Tpbn => Ok(-(self.alpha + self.beta) * (1.0 / t).ln_1p()),
            Family::Gdp => gdp_ln_l(self.alpha, self.beta, t, &QuadratureSettings::default()),
        }
    }

    /// `log L(e^s)`, usable where `e^s` under- or overflows.
    pub fn ln_l_at_log(&self, s: f64) -> Result<f64> {
        self.ln_l_evaluator().at_log(s)
    }

    /// Evaluator for `log L(e^s)`; for GDP this shares a tabulated
    /// interpolant across all specs with the same hyperparameters.
    pub fn ln_l_evaluator(&self) -> LnL {
        match self.family {
            Family::Tpbn => LnL::Tpbn {
                power: self.alpha + self.beta,
            },
            Family::Gdp => LnL::Gdp {
                alpha: self.alpha,
                beta: self.beta,
                l_limit: self.l_limit,
                table: gdp_table(self.alpha, self.beta),
            },
        }
    }

    /// The slowly varying factor `L(t)`.
    pub fn eval_l(&self, t: f64) -> Result<f64> {
        self.ln_l(t).map(f64::exp)
    }

    /// `log π(λ²)`.
    pub fn ln_mixing_density(&self, lambda2: f64) -> Result<f64> {
        let ln_l = self.ln_l(lambda2)?;
        Ok(self.ln_norm_const() - (self.tail_index + 1.0) * lambda2.ln() + ln_l)
    }

    /// Mixing density `π(λ²) = K (λ²)^{-a-1} L(λ²)`.
    pub fn eval_mixing_density(&self, lambda2: f64) -> Result<f64> {
        self.ln_mixing_density(lambda2).map(f64::exp)
    }

    /// `∫₀^∞ π(t) dt`, computed in `s = log t`.
    pub fn total_mass(&self) -> Result<f64> {
        let lnl = self.ln_l_evaluator();
        let mut failure = None;
        let est = quadrature::integrate(
            |s| match lnl.at_log(s) {
                Ok(l) => (self.ln_norm_const() - self.tail_index * s + l).exp(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            &[f64::NEG_INFINITY, -5.0, 0.0, 5.0, f64::INFINITY],
            &QuadratureSettings::default().with_rel_tol(1e-10),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(est?.value[0])
    }
}

#[derive(Debug, Clone)]
pub enum LnL {
    Tpbn { power: f64 },
    Gdp { alpha: f64, beta: f64, l_limit: f64, table: Arc<GdpTable> },
}

impl LnL {
    #[inline]
    pub fn at_log(&self, s: f64) -> Result<f64> {
        if s.is_nan() {
            return Err(Error::invalid("L(t) requires t > 0, got NaN"));
        }
        match self {
            // -(α+β) log(1 + e^{-s}) as a softplus
            LnL::Tpbn { power } => {
                let sp = if s > 0.0 { (-s).exp().ln_1p() } else { -s + s.exp().ln_1p() };
                Ok(-power * sp)
            }
            LnL::Gdp { alpha, beta, l_limit, table } => {
                if let Some(v) = table.eval(s) {
                    return Ok(v);
                }
                let t = s.exp();
                if t == 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                if !t.is_finite() {
                    return Ok(l_limit.ln());
                }
                gdp_ln_l(*alpha, *beta, t, &QuadratureSettings::default())
            }
        }
    }
}

/// Cubic Hermite interpolant of `log L(e^s)` on a uniform `s` grid, built
/// from exact values and derivatives.
#[derive(Debug)]
pub struct GdpTable {
    s0: f64,
    h: f64,
    vals: Vec<f64>,
    ders: Vec<f64>,
}

const GDP_TABLE_S: (f64, f64) = (-60.0, 60.0);
const GDP_TABLE_STEP: f64 = 0.01;

impl GdpTable {
    fn build(alpha: f64, beta: f64) -> Result<Self> {
        let (lo, hi) = GDP_TABLE_S;
        let n = ((hi - lo) / GDP_TABLE_STEP).round() as usize + 1;
        let settings = QuadratureSettings::default().with_rel_tol(1e-12);
        let mut vals = Vec::with_capacity(n);
        let mut ders = Vec::with_capacity(n);
        for i in 0..n {
            let s = lo + i as f64 * GDP_TABLE_STEP;
            let (v, d) = gdp_ln_l_with_slope(alpha, beta, s.exp(), &settings)?;
            vals.push(v);
            ders.push(d);
        }
        Ok(Self {
            s0: lo,
            h: GDP_TABLE_STEP,
            vals,
            ders,
        })
    }

    #[inline]
    fn eval(&self, s: f64) -> Option<f64> {
        let u = (s - self.s0) / self.h;
        if !(u >= 0.0) {
            return None;
        }
        let j = u as usize;
        if j + 1 >= self.vals.len() {
            return None;
        }
        let r = u - j as f64;
        Some(hermite(r, self.h, self.vals[j], self.ders[j], self.vals[j + 1], self.ders[j + 1]))
    }
}

/// Cubic Hermite interpolation at fraction `r` of a step `h`.
#[inline]
pub(crate) fn hermite(r: f64, h: f64, f0: f64, d0: f64, f1: f64, d1: f64) -> f64 {
    let r2 = r * r;
    let r3 = r2 * r;
    (2.0 * r3 - 3.0 * r2 + 1.0) * f0
        + (r3 - 2.0 * r2 + r) * h * d0
        + (-2.0 * r3 + 3.0 * r2) * f1
        + (r3 - r2) * h * d1
}

static GDP_TABLES: OnceLock<Mutex<Vec<((u64, u64), Arc<GdpTable>)>>> = OnceLock::new();

/// Shared table for GDP(α, β). Construction failures leave an empty table
/// so every lookup falls back to direct quadrature.
fn gdp_table(alpha: f64, beta: f64) -> Arc<GdpTable> {
    let key = (alpha.to_bits(), beta.to_bits());
    let cache = GDP_TABLES.get_or_init(|| Mutex::new(Vec::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some((_, t)) = guard.iter().find(|(k, _)| *k == key) {
        return t.clone();
    }
    let table = Arc::new(GdpTable::build(alpha, beta).unwrap_or(GdpTable {
        s0: 0.0,
        h: 1.0,
        vals: Vec::new(),
        ders: Vec::new(),
    }));
    guard.push((key, table.clone()));
    table
}

/// `log L(t)` for the GDP family.
///
/// With `u = w²` the defining integral becomes
/// `2^{α/2} ∫₀^∞ w^{α+1} exp(-w² - β√(2/t) w) dw`, which is smooth and
/// unimodal; the infinite end is mapped onto `(0, 1]`.
pub(crate) fn gdp_ln_l(alpha: f64, beta: f64, t: f64, settings: &QuadratureSettings) -> Result<f64> {
    gdp_ln_l_with_slope(alpha, beta, t, settings).map(|(v, _)| v)
}

/// `log L(t)` and its derivative in `s = log t`, which equals `(c/2) E[w]`
/// for `c = β√(2/t)` under the normalized integrand.
fn gdp_ln_l_with_slope(
    alpha: f64,
    beta: f64,
    t: f64,
    settings: &QuadratureSettings,
) -> Result<(f64, f64)> {
    let c = beta * (2.0 / t).sqrt();
    let p = alpha + 1.0;
    // log-integrand (α+1) log w − w² − c w peaks where 2w² + c w − (α+1) = 0
    let peak = (-c + (c * c + 8.0 * p).sqrt()) / 4.0;
    let peak = if peak > 0.0 { peak } else { p / c };
    let width = 1.0 / (2.0 + p / (peak * peak)).sqrt();
    // integrate in y = w / peak so the integral stays of order one
    let ln_peak = peak.ln();
    let log_f = |y: f64| {
        let w = peak * y;
        let l = p * (ln_peak + y.ln()) - w * w - c * w;
        [l, l + y.ln()]
    };
    let shift = log_f(1.0)[0];
    let rel_width = width / peak;
    let points = quadrature::breakpoints(
        0.0,
        f64::INFINITY,
        &[0.5, 1.0, 1.0 + 2.0 * rel_width, 1.0 + 8.0 * rel_width],
    );
    let [ln_int_y, ln_first_y] = quadrature::log_integrate_vec(log_f, &points, shift, settings)
        .map_err(|e| match e {
            Error::NumericFailure { achieved, .. } => {
                Error::numeric(format!("GDP slowly varying factor at t = {t:e}"), achieved)
            }
            other => other,
        })?;
    let ln_int = ln_int_y + ln_peak;
    let value = 0.5 * alpha * std::f64::consts::LN_2 + ln_int;
    let mean_w = peak * (ln_first_y - ln_int_y).exp();
    Ok((value, 0.5 * c * mean_w))
}

/// Results of the numerical membership checks for one spec.
#[derive(Debug, Clone, Serialize)]
pub struct PriorInvariantReport {
    pub total_mass: f64,
    pub normalization_ok: bool,
    pub max_l_on_grid: f64,
    pub bounded_ok: bool,
    pub monotone_ok: bool,
    pub slow_variation_worst: f64,
    pub slow_variation_ok: bool,
    pub log_ratio_at_1e10: f64,
    pub log_ratio_at_1e300: f64,
    pub log_ratio_ok: bool,
}

impl PriorInvariantReport {
    pub fn all_ok(&self) -> bool {
        self.normalization_ok
            && self.bounded_ok
            && self.monotone_ok
            && self.slow_variation_ok
            && self.log_ratio_ok
    }
}

pub fn check_invariants(spec: &ShrinkagePriorSpec) -> Result<PriorInvariantReport> {
    let total_mass = spec.total_mass()?;

    let mut max_l: f64 = 0.0;
    let mut monotone_ok = true;
    let mut prev = 0.0;
    for i in 0..1000 {
        let t = 10f64.powf(-8.0 + 18.0 * i as f64 / 999.0);
        let l = spec.eval_l(t)?;
        if l < prev * (1.0 - 1e-9) {
            monotone_ok = false;
        }
        prev = l;
        max_l = max_l.max(l);
    }

    let t = 1e8;
    let base = spec.eval_l(t)?;
    let mut worst: f64 = 0.0;
    for c in [0.5, 2.0, 10.0] {
        worst = worst.max((spec.eval_l(c * t)? / base - 1.0).abs());
    }

    let x = 1e10;
    let log_ratio = spec.ln_l(x)? / x.ln();
    // When L tends to a limit other than 1 the ratio decays only like
    // 1/log t, so a finite-t check at 1e10 is too strict; accept a ratio
    // that has shrunk below the tolerance by t = 1e300.
    let far = 1e300;
    let log_ratio_far = spec.ln_l(far)? / far.ln();
    let log_ratio_ok = log_ratio.abs() <= 1e-3
        || (log_ratio_far.abs() <= 1e-3 && log_ratio_far.abs() < log_ratio.abs());

    Ok(PriorInvariantReport {
        total_mass,
        normalization_ok: (total_mass - 1.0).abs() <= 1e-6,
        max_l_on_grid: max_l,
        bounded_ok: max_l <= spec.l_sup * (1.0 + 1e-9),
        monotone_ok,
        slow_variation_worst: worst,
        slow_variation_ok: worst <= 1e-3,
        log_ratio_at_1e10: log_ratio,
        log_ratio_at_1e300: log_ratio_far,
        log_ratio_ok,
    })
}
