//! Numerical certification of the concentration, moment, error-probability
//! and risk bounds satisfied by the shrinkage rules.
//!
//! Every check evaluates an observed quantity and its bound over a grid and
//! summarizes the result as a violation ratio: `observed / bound` for upper
//! bounds, `bound / observed` for lower bounds, and the larger of the two for
//! asymptotic equalities. A check passes when its worst violation ratio is at
//! most the declared slack.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{oracle_exact_errors, AsymptoticSequence, TwoGroupsParams};
use crate::posterior::{
    ln_normalizer, mean_shrinkage_weight, tail_prob_kappa_above, tail_prob_kappa_below, weight_threshold,
    PosteriorQuery, Threshold,
};
use crate::priors::{LnL, ShrinkagePriorSpec};
use crate::quadrature::{self, QuadratureSettings};
use crate::rules::{estimate_tau_hat, WEIGHT_LEVEL};
use crate::simulation::{generate_replicate, replicate_rng};
use crate::special::{central_prob, two_sided_tail};

const MAX_WITNESSES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundCheckParams {
    pub eta: f64,
    pub delta: f64,
    /// Level `ε` in `Pr(κ < ε | x, τ)`.
    pub eps: f64,
    #[serde(rename = "A0")]
    pub a0: f64,
    /// Slack for the small-`τ` statements.
    pub slack: f64,
    pub hard_tolerance: f64,
    pub error_slack: f64,
    pub lemma_slack: f64,
    pub eb_risk_slack: f64,
    pub eta_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub small_tau_grid: Vec<f64>,
    pub small_tau_x_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub lemma_x_grid: Vec<f64>,
    pub log_ratio_x_grid: Vec<f64>,
    pub log_ratio_limit: f64,
    pub suboptimal_exponent: f64,
    pub suboptimal_growth: f64,
    pub c1: f64,
    pub c2: f64,
    pub eb_m: usize,
    pub eb_reps: usize,
    pub eb_band: f64,
    pub eb_fraction: f64,
    pub alpha_m_draws: usize,
    pub seed: u64,
}

impl Default for BoundCheckParams {
    fn default() -> Self {
        Self {
            eta: 0.49,
            delta: 0.01,
            eps: 0.5,
            a0: 1.0,
            slack: 1.1,
            hard_tolerance: 1.0 + 1e-6,
            error_slack: 1.25,
            lemma_slack: 1.05,
            eb_risk_slack: 1.5,
            eta_grid: vec![0.1, 0.25, 0.4, 0.49],
            delta_grid: vec![0.1, 0.5, 0.9],
            x_grid: (0..=20).map(|i| 0.5 * i as f64).collect(),
            tau_grid: vec![1.0, 0.1, 0.01],
            small_tau_grid: vec![1e-1, 1e-2, 1e-3, 1e-4],
            small_tau_x_grid: vec![0.0, 1.0, 2.0, 3.0],
            m_grid: vec![1_000, 10_000, 100_000, 1_000_000],
            lemma_x_grid: vec![1e2, 1e4, 1e6, 1e8],
            log_ratio_x_grid: vec![1e10, 1e100, 1e300],
            log_ratio_limit: 1e-3,
            suboptimal_exponent: 0.3,
            suboptimal_growth: 2.0,
            c1: 2.0,
            c2: 1.0,
            eb_m: 10_000,
            eb_reps: 200,
            eb_band: 0.2,
            eb_fraction: 0.95,
            alpha_m_draws: 1_000_000,
            seed: 20_240_917,
        }
    }
}

impl BoundCheckParams {
    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: f64, hi: f64| {
            if v > 0.0 && v < hi {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, {hi}), got {v}")))
            }
        };
        open("eta", self.eta, 0.5)?;
        open("delta", self.delta, 1.0)?;
        open("eps", self.eps, 1.0)?;
        for &e in &self.eta_grid {
            open("eta_grid value", e, 0.5)?;
        }
        for &d in &self.delta_grid {
            open("delta_grid value", d, 1.0)?;
        }
        if !(self.a0 >= 1.0) {
            return Err(Error::invalid(format!("A0 must be at least 1, got {}", self.a0)));
        }
        for (name, v) in [
            ("slack", self.slack),
            ("hard_tolerance", self.hard_tolerance),
            ("error_slack", self.error_slack),
            ("lemma_slack", self.lemma_slack),
            ("eb_risk_slack", self.eb_risk_slack),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        let positive = |name: &str, g: &[f64]| {
            if g.is_empty() || g.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                Err(Error::invalid(format!("{name} must be a nonempty list of positive values")))
            } else {
                Ok(())
            }
        };
        positive("tau_grid", &self.tau_grid)?;
        positive("small_tau_grid", &self.small_tau_grid)?;
        positive("lemma_x_grid", &self.lemma_x_grid)?;
        positive("log_ratio_x_grid", &self.log_ratio_x_grid)?;
        if self.x_grid.is_empty() || self.small_tau_x_grid.is_empty() || self.eta_grid.is_empty() || self.delta_grid.is_empty() {
            return Err(Error::invalid("evaluation grids must be nonempty"));
        }
        if self.m_grid.len() < 2 || self.m_grid.iter().any(|&m| m < 2) {
            return Err(Error::invalid("m_grid needs at least two sizes, each at least 2"));
        }
        if !(self.c1 >= 2.0 && self.c2 >= 1.0) {
            return Err(Error::invalid("need c1 ≥ 2 and c2 ≥ 1"));
        }
        if self.eb_m < 2 || self.eb_reps == 0 || self.alpha_m_draws == 0 {
            return Err(Error::invalid("eb_m, eb_reps and alpha_m_draws must be positive"));
        }
        Ok(())
    }

    /// Override every slack and tolerance at once.
    pub fn with_uniform_slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        self.hard_tolerance = slack;
        self.error_slack = slack;
        self.lemma_slack = slack;
        self.eb_risk_slack = slack;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// `observed ≤ bound`
    Upper,
    /// `observed ≥ bound`
    Lower,
    /// `observed / bound → 1`
    Limit,
}

impl BoundKind {
    fn violation(self, observed: f64, bound: f64) -> f64 {
        let r = observed / bound;
        let v = match self {
            BoundKind::Upper => r,
            BoundKind::Lower => 1.0 / r,
            BoundKind::Limit => r.max(1.0 / r),
        };
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub point: BTreeMap<String, f64>,
    pub observed: f64,
    pub bound: f64,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Witness {
    fn new(point: &[(&str, f64)], kind: BoundKind, observed: f64, bound: f64) -> Self {
        Self {
            point: point.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            observed,
            bound,
            ratio: kind.violation(observed, bound),
            error: None,
        }
    }

    fn failed(point: &[(&str, f64)], e: &Error) -> Self {
        Self {
            point: point.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            observed: f64::NAN,
            bound: f64::NAN,
            ratio: f64::INFINITY,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub check: String,
    pub grid: String,
    pub kind: BoundKind,
    pub worst_ratio: f64,
    pub slack: f64,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    /// Grid points that failed to evaluate.
    pub failures: usize,
    /// Per-step summary along `τ`, `m` or `x`, when the check is asymptotic.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<Witness>,
    /// Points at which the bound is below one (informative for probabilities).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub non_vacuous_points: Option<usize>,
}

impl BoundReport {
    fn from_points(check: &str, grid: String, kind: BoundKind, slack: f64, mut points: Vec<Witness>) -> Self {
        let failures = points.iter().filter(|w| w.error.is_some()).count();
        let worst_ratio = points.iter().map(|w| w.ratio).fold(f64::NEG_INFINITY, f64::max);
        // stable sort keeps grid order among ties
        points.sort_by(|a, b| b.ratio.total_cmp(&a.ratio));
        points.truncate(MAX_WITNESSES);
        let pass = failures == 0 && worst_ratio <= slack;
        Self {
            check: check.into(),
            grid,
            kind,
            worst_ratio,
            slack,
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            witnesses: points,
            failures,
            trajectory: Vec::new(),
            non_vacuous_points: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Hard,
    SmallTau,
    Errors,
    Risk,
    Lemmas,
    Eb,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hard" => Suite::Hard,
            "small-tau" => Suite::SmallTau,
            "errors" => Suite::Errors,
            "risk" => Suite::Risk,
            "lemmas" => Suite::Lemmas,
            "eb" => Suite::Eb,
            "all" => Suite::All,
            other => return Err(Error::invalid(format!("unknown suite '{other}'"))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Hard => "hard",
            Suite::SmallTau => "small-tau",
            Suite::Errors => "errors",
            Suite::Risk => "risk",
            Suite::Lemmas => "lemmas",
            Suite::Eb => "eb",
            Suite::All => "all",
        };
        f.write_str(s)
    }
}

/// The sequence `p = m^{-1/2}` with `C = 1` used by default.
pub fn default_sequence() -> AsymptoticSequence {
    AsymptoticSequence {
        c: 1.0,
        epsilon: 0.5,
        k: 1.0,
    }
}

/// Run every check in `suite` for one prior.
pub fn run_suite(
    spec: &ShrinkagePriorSpec,
    suite: Suite,
    seq: &AsymptoticSequence,
    params: &BoundCheckParams,
) -> Result<Vec<BoundReport>> {
    params.validate()?;
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Hard {
        out.push(check_hard_concentration(spec, params)?);
    }
    if all || suite == Suite::SmallTau {
        out.extend(check_small_tau_bounds(spec, params)?);
    }
    if all || suite == Suite::Errors {
        out.extend(check_error_probability_bounds(spec, seq, params)?);
        out.push(check_suboptimal_tau(spec, seq, params)?);
    }
    if all || suite == Suite::Risk {
        out.push(check_risk_ratio(spec, seq, params)?);
        out.push(check_eb_risk_ratio(spec, seq, params)?);
    }
    if all || suite == Suite::Lemmas {
        out.extend(check_slow_variation_lemmas(spec, params)?);
    }
    if all || suite == Suite::Eb {
        out.extend(check_eb_tau_consistency(seq, params)?);
    }
    Ok(out)
}

fn settings() -> QuadratureSettings {
    QuadratureSettings::default()
}

/// Run a fallible log-integrand through [`quadrature::log_integrate_vec`],
/// surfacing the first evaluation error.
fn log_integral<F>(f: F, points: &[f64], shift: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut failure = None;
    let out = quadrature::log_integrate_vec(
        |u| match f(u) {
            Ok(v) => [v],
            Err(e) => {
                failure.get_or_insert(e);
                [f64::NAN]
            }
        },
        points,
        shift,
        &settings(),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(out?[0])
}

/// `log ∫_y^∞ t^{-b-1} L(t) dt` for `b > 0`.
pub fn ln_upper_tail_integral(lnl: &LnL, y: f64, b: f64) -> Result<f64> {
    if !(y > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!("need y > 0 and b > 0, got y={y}, b={b}")));
    }
    let ly = y.ln();
    let mut interior: Vec<f64> = [-4.0, 0.0, 4.0].iter().map(|s| s - ly).collect();
    interior.extend([1.0, 4.0, 16.0, 64.0].iter().map(|k| k / b));
    let points = quadrature::breakpoints(0.0, f64::INFINITY, &interior);
    let shift = lnl.at_log(ly)?;
    let v = log_integral(|u| Ok(-b * u + lnl.at_log(ly + u)?), &points, shift)?;
    Ok(-b * ly + v)
}

/// `log ∫_{A0}^x t^{-c} L(t) dt` for `c < 1`.
pub fn ln_head_integral(lnl: &LnL, a0: f64, x: f64, c: f64) -> Result<f64> {
    if !(x > a0 && a0 > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("need 0 < A0 < x and c < 1, got A0={a0}, x={x}, c={c}")));
    }
    let g = 1.0 - c;
    let lx = x.ln();
    let lo = a0.ln() - lx;
    let mut interior: Vec<f64> = [-4.0, 0.0, 4.0].iter().map(|s| s - lx).collect();
    interior.extend([-1.0, -4.0, -16.0, -64.0].iter().map(|k| k / g));
    let points = quadrature::breakpoints(lo, 0.0, &interior);
    let shift = lnl.at_log(lx)?;
    let v = log_integral(|u| Ok(g * u + lnl.at_log(lx + u)?), &points, shift)?;
    Ok(g * lx + v)
}

/// `log H(a, η, δ)`.
pub fn ln_h_constant(spec: &ShrinkagePriorSpec, eta: f64, delta: f64) -> f64 {
    let a = spec.tail_index;
    let ed = eta * delta;
    (a + 0.5).ln() + a * (-ed).ln_1p() - spec.ln_norm_const() - (a + 0.5) * ed.ln()
}

/// Log of the uniform bound on `Pr(κ > η | x, τ)`.
pub fn ln_hard_concentration_bound(spec: &ShrinkagePriorSpec, x: f64, tau: f64, eta: f64, delta: f64) -> Result<f64> {
    let a = spec.tail_index;
    let y = (1.0 / (eta * delta) - 1.0) / (tau * tau);
    // Δ = ξ L(y) = (a + 1/2) y^{a+1/2} ∫_y^∞ t^{-(a+3/2)} L(t) dt
    let ln_delta = (a + 0.5).ln() + (a + 0.5) * y.ln() + ln_upper_tail_integral(&spec.ln_l_evaluator(), y, a + 0.5)?;
    Ok(ln_h_constant(spec, eta, delta) - 0.5 * eta * (1.0 - delta) * x * x - 2.0 * a * tau.ln() - ln_delta)
}

fn fmt_grid(name: &str, g: &[f64]) -> String {
    let items: Vec<String> = g.iter().map(|v| format!("{v}")).collect();
    format!("{name}={{{}}}", items.join(","))
}

pub fn check_hard_concentration(spec: &ShrinkagePriorSpec, params: &BoundCheckParams) -> Result<BoundReport> {
    params.validate()?;
    let s = settings();
    let mut pts = Vec::new();
    for &eta in &params.eta_grid {
        for &delta in &params.delta_grid {
            for &tau in &params.tau_grid {
                for &x in &params.x_grid {
                    pts.push((x, tau, eta, delta));
                }
            }
        }
    }
    let evaluated: Vec<(Witness, bool)> = pts
        .par_iter()
        .map(|&(x, tau, eta, delta)| {
            let at = [("x", x), ("tau", tau), ("eta", eta), ("delta", delta)];
            let r = (|| {
                let obs = tail_prob_kappa_above(spec, &PosteriorQuery::unit(x, tau)?, eta, &s)?;
                let bound = ln_hard_concentration_bound(spec, x, tau, eta, delta)?.exp();
                Ok::<_, Error>((obs, bound))
            })();
            match r {
                Ok((obs, bound)) => (Witness::new(&at, BoundKind::Upper, obs, bound), bound < 1.0),
                Err(e) => (Witness::failed(&at, &e), false),
            }
        })
        .collect();
    let non_vacuous = evaluated.iter().filter(|(_, nv)| *nv).count();
    let grid = [
        fmt_grid("eta", &params.eta_grid),
        fmt_grid("delta", &params.delta_grid),
        fmt_grid("tau", &params.tau_grid),
        format!("x: {} points in [{}, {}]", params.x_grid.len(), params.x_grid[0], params.x_grid[params.x_grid.len() - 1]),
    ]
    .join("; ");
    let mut r = BoundReport::from_points(
        "hard-concentration",
        grid,
        BoundKind::Upper,
        params.hard_tolerance,
        evaluated.into_iter().map(|(w, _)| w).collect(),
    );
    r.non_vacuous_points = Some(non_vacuous);
    Ok(r)
}

/// Evaluate a small-`τ` statement along `small_tau_grid` and judge it at the
/// smallest `τ`.
fn small_tau_report<F>(
    check: &str,
    kind: BoundKind,
    slack: f64,
    taus: &[f64],
    xs: &[f64],
    eval: F,
) -> BoundReport
where
    F: Fn(f64, f64) -> Result<(f64, f64)> + Sync,
{
    let pts: Vec<(f64, f64)> = taus.iter().flat_map(|&t| xs.iter().map(move |&x| (t, x))).collect();
    let all: Vec<Witness> = pts
        .par_iter()
        .map(|&(tau, x)| {
            let at = [("tau", tau), ("x", x)];
            match eval(x, tau) {
                Ok((obs, bound)) => Witness::new(&at, kind, obs, bound),
                Err(e) => Witness::failed(&at, &e),
            }
        })
        .collect();
    let tau_min = taus.iter().copied().fold(f64::INFINITY, f64::min);
    let trajectory: Vec<Witness> = taus
        .iter()
        .map(|&tau| {
            all.iter()
                .filter(|w| w.point["tau"] == tau)
                .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
                .cloned()
                .expect("nonempty x grid")
        })
        .collect();
    let terminal: Vec<Witness> = all.into_iter().filter(|w| w.point["tau"] == tau_min).collect();
    let grid = format!("{}; {}; judged at tau={tau_min}", fmt_grid("tau", taus), fmt_grid("x", xs));
    let mut r = BoundReport::from_points(check, grid, kind, slack, terminal);
    r.trajectory = trajectory;
    r
}

pub fn check_small_tau_bounds(spec: &ShrinkagePriorSpec, params: &BoundCheckParams) -> Result<Vec<BoundReport>> {
    params.validate()?;
    let s = settings();
    let a = spec.tail_index;
    let ln_k = spec.ln_norm_const();
    let lnl = spec.ln_l_evaluator();
    let eps = params.eps;
    let taus = &params.small_tau_grid;
    let xs = &params.small_tau_x_grid;
    let mut out = Vec::new();

    // K τ^{2a} J(τ) at x = 0, i.e. K times the t-form normalizer
    let lemma = |_x: f64, tau: f64| -> Result<(f64, f64)> {
        let d0 = ln_normalizer(spec, &PosteriorQuery::unit(0.0, tau)?, &s)?;
        Ok(((ln_k + d0).exp(), 1.0))
    };
    out.push(small_tau_report(
        "small-tau-normalizer-limit",
        BoundKind::Lower,
        1.0 / 0.95,
        taus,
        &[0.0],
        lemma,
    ));
    out.push(small_tau_report(
        "small-tau-normalizer-below-one",
        BoundKind::Upper,
        params.hard_tolerance,
        taus,
        &[0.0],
        lemma,
    ));

    let below = |x: f64, tau: f64| tail_prob_kappa_below(spec, &PosteriorQuery::unit(x, tau)?, eps, &s);
    out.push(small_tau_report(
        "small-tau-kappa-below-tail",
        BoundKind::Upper,
        params.slack,
        taus,
        xs,
        |x, tau| {
            let y = (1.0 / eps - 1.0) / (tau * tau);
            let bound = (ln_k + 0.5 * x * x + ln_upper_tail_integral(&lnl, y, a)?).exp();
            Ok((below(x, tau)?, bound))
        },
    ));

    if spec.l_sup.is_finite() {
        let ln_m = spec.l_sup.ln();
        out.push(small_tau_report(
            "small-tau-kappa-below-bounded-l",
            BoundKind::Upper,
            params.slack,
            taus,
            xs,
            |x, tau| {
                let ln_b = ln_k + ln_m - a.ln() + a * eps.ln() - a * (-eps).ln_1p() + 0.5 * x * x + 2.0 * a * tau.ln();
                Ok((below(x, tau)?, ln_b.exp()))
            },
        ));
    }

    if a > 0.0 && a < 1.0 {
        let a0 = params.a0;
        out.push(small_tau_report(
            "small-tau-weight-moment",
            BoundKind::Upper,
            params.slack,
            taus,
            xs,
            |x, tau| {
                let w = mean_shrinkage_weight(spec, &PosteriorQuery::unit(x, tau)?, &s)?;
                let ln_b = (a0 * ln_k.exp() / (a * (1.0 - a))).ln()
                    + 0.5 * x * x
                    + 2.0 * a * tau.ln()
                    + lnl.at_log(-2.0 * tau.ln())?;
                Ok((w, ln_b.exp()))
            },
        ));
    }
    Ok(out)
}

fn require_unit_interval_a(spec: &ShrinkagePriorSpec, what: &str) -> Result<()> {
    let a = spec.tail_index;
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} requires a tail index in (0, 1), got a = {a}")))
    }
}

/// Exact type I and type II errors of the tuned rule at `τ` under the
/// two-groups model with `σ = 1`.
pub fn tuned_rule_errors(
    spec: &ShrinkagePriorSpec,
    tau: f64,
    psi2: f64,
    settings: &QuadratureSettings,
) -> Result<(f64, f64)> {
    Ok(match weight_threshold(spec, tau, 1.0, WEIGHT_LEVEL, settings)? {
        Threshold::Everywhere => (1.0, 0.0),
        Threshold::Above(x) => (two_sided_tail(x), central_prob(x / (1.0 + psi2).sqrt())),
    })
}

#[derive(Debug, Clone, Copy)]
struct SequenceErrors {
    m: usize,
    p: f64,
    psi2: f64,
    tau: f64,
    t1: f64,
    t2: f64,
}

fn errors_along(
    spec: &ShrinkagePriorSpec,
    seq: &AsymptoticSequence,
    ms: &[usize],
    tau_exponent: f64,
) -> Result<Vec<SequenceErrors>> {
    let s = settings();
    ms.par_iter()
        .map(|&m| {
            let params = seq.params_at(m)?;
            let tau = params.p.powf(tau_exponent);
            let (t1, t2) = tuned_rule_errors(spec, tau, params.psi2, &s)?;
            Ok(SequenceErrors {
                m,
                p: params.p,
                psi2: params.psi2,
                tau,
                t1,
                t2,
            })
        })
        .collect()
}

fn sequence_report(
    check: &str,
    kind: BoundKind,
    slack: f64,
    points: &[SequenceErrors],
    mut eval: impl FnMut(&SequenceErrors) -> Result<(f64, f64)>,
) -> BoundReport {
    let trajectory: Vec<Witness> = points
        .iter()
        .map(|e| {
            let at = [("m", e.m as f64), ("p", e.p), ("psi2", e.psi2), ("tau", e.tau)];
            match eval(e) {
                Ok((obs, bound)) => Witness::new(&at, kind, obs, bound),
                Err(err) => Witness::failed(&at, &err),
            }
        })
        .collect();
    let last = trajectory.last().cloned().into_iter().collect();
    let m_max = points.last().map(|e| e.m).unwrap_or(0);
    let ms: Vec<f64> = points.iter().map(|e| e.m as f64).collect();
    let grid = format!("{}; judged at m={m_max}", fmt_grid("m", &ms));
    let mut r = BoundReport::from_points(check, grid, kind, slack, last);
    r.trajectory = trajectory;
    r
}

fn sorted_ms(params: &BoundCheckParams) -> Vec<usize> {
    let mut ms = params.m_grid.clone();
    ms.sort_unstable();
    ms.dedup();
    ms
}

pub fn check_error_probability_bounds(
    spec: &ShrinkagePriorSpec,
    seq: &AsymptoticSequence,
    params: &BoundCheckParams,
) -> Result<Vec<BoundReport>> {
    params.validate()?;
    require_unit_interval_a(spec, "the type I error bounds")?;
    let a = spec.tail_index;
    let ln_k = spec.ln_norm_const();
    let lnl = spec.ln_l_evaluator();
    let (eta, delta, a0) = (params.eta, params.delta, params.a0);
    let ed = eta * (1.0 - delta);
    let ln_h = ln_h_constant(spec, eta, delta);
    let c = seq.c;
    let pts = errors_along(spec, seq, &sorted_ms(params), 1.0)?;
    let slack = params.error_slack;
    let pi = std::f64::consts::PI;

    // τ^{power} L(1/τ²) / √log(1/τ²)
    let shape = |tau: f64, power: f64| -> Result<f64> {
        let l2 = -2.0 * tau.ln();
        Ok(power * tau.ln() + lnl.at_log(l2)? - 0.5 * l2.ln())
    };
    let t1_upper = |e: &SequenceErrors| -> Result<(f64, f64)> {
        let ln_c = -0.5 * (pi * a).ln() + (2.0 * a0 * ln_k.exp() / (a * (1.0 - a))).ln();
        Ok((e.t1, (ln_c + shape(e.tau, 2.0 * a)?).exp()))
    };
    let t1_lower = |e: &SequenceErrors| -> Result<(f64, f64)> {
        let ln_c = ((0.5 - eta) / (pi * a).sqrt()).ln() - ln_h;
        Ok((e.t1, (ln_c + shape(e.tau, 2.0 * a / ed)?).exp()))
    };
    let t2_upper_const = central_prob((2.0 * a * c / ed).sqrt());
    let t2_lower_const = central_prob((2.0 * a * c).sqrt());

    let mut out = vec![
        sequence_report("type-one-upper", BoundKind::Upper, slack, &pts, t1_upper),
        sequence_report("type-one-lower", BoundKind::Lower, slack, &pts, t1_lower),
        sequence_report("type-two-upper", BoundKind::Upper, slack, &pts, |e| Ok((e.t2, t2_upper_const))),
        sequence_report("type-two-lower", BoundKind::Lower, slack, &pts, |e| Ok((e.t2, t2_lower_const))),
    ];

    // (1 − p) t1 / p must shrink along the sequence
    let first = pts.first().map(|e| (1.0 - e.p) * e.t1 / e.p).unwrap_or(f64::NAN);
    let mut vanish = sequence_report("type-one-odds-vanishing", BoundKind::Upper, 1.0, &pts, |e| {
        Ok(((1.0 - e.p) * e.t1 / e.p, first))
    });
    let decreasing = vanish.trajectory.windows(2).all(|w| w[1].observed < w[0].observed);
    if !decreasing {
        vanish.verdict = Verdict::Fail;
    }
    out.push(vanish);
    Ok(out)
}

/// Growth of `(1 − p) t1 / p + t2` from the smallest to the largest `m` when
/// `τ = p^α` with `α < 1/2`.
pub fn check_suboptimal_tau(
    spec: &ShrinkagePriorSpec,
    seq: &AsymptoticSequence,
    params: &BoundCheckParams,
) -> Result<BoundReport> {
    params.validate()?;
    let alpha = params.suboptimal_exponent;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("suboptimal exponent must lie in (0, 1), got {alpha}")));
    }
    let pts = errors_along(spec, seq, &sorted_ms(params), alpha)?;
    let agg = |e: &SequenceErrors| (1.0 - e.p) * e.t1 / e.p + e.t2;
    let base = agg(&pts[0]);
    let need = params.suboptimal_growth;
    let mut r = sequence_report("suboptimal-tau-divergence", BoundKind::Lower, 1.0, &pts, |e| {
        Ok((agg(e) / base, need))
    });
    r.grid = format!("{}; tau=p^{alpha}", r.grid);
    Ok(r)
}

fn risk_envelope(a: f64, c: f64, eta: f64, delta: f64) -> (f64, f64) {
    let den = central_prob(c.sqrt());
    let lo = central_prob((2.0 * a).sqrt() * c.sqrt()) / den;
    let hi = central_prob((2.0 * a / (eta * (1.0 - delta))).sqrt() * c.sqrt()) / den;
    (lo, hi)
}

fn require_risk_conditions(spec: &ShrinkagePriorSpec) -> Result<()> {
    let a = spec.tail_index;
    let half = (a - 0.5).abs() <= 1e-12;
    if (a > 0.5 && a < 1.0) || (half && spec.l_sup.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "the risk bounds need 1/2 < a < 1, or a = 1/2 with bounded L; got a = {a}"
        )))
    }
}

pub fn check_risk_ratio(
    spec: &ShrinkagePriorSpec,
    seq: &AsymptoticSequence,
    params: &BoundCheckParams,
) -> Result<BoundReport> {
    params.validate()?;
    require_risk_conditions(spec)?;
    let (lo, hi) = risk_envelope(spec.tail_index, seq.c, params.eta, params.delta);
    let pts = errors_along(spec, seq, &sorted_ms(params), 1.0)?;
    let ratio = |e: &SequenceErrors| -> Result<f64> {
        let (tg, oq) = seq.oracle_at(e.m)?;
        let opt = oracle_exact_errors(&tg, &oq).risk;
        Ok(e.m as f64 * ((1.0 - e.p) * e.t1 + e.p * e.t2) / opt)
    };
    let mut traj_lo = Vec::new();
    let mut r = sequence_report("risk-ratio-envelope", BoundKind::Upper, params.error_slack, &pts, |e| {
        let v = ratio(e)?;
        traj_lo.push(v);
        Ok((v, hi))
    });
    // fold in the lower edge at the judged point
    if let (Some(&v), Some(w)) = (traj_lo.last(), r.witnesses.first_mut()) {
        let lower = lo / v;
        if lower > w.ratio {
            w.ratio = lower;
            w.bound = lo;
            r.worst_ratio = lower;
            r.verdict = if r.failures == 0 && lower <= r.slack { Verdict::Pass } else { Verdict::Fail };
        }
    }
    r.grid = format!("{}; envelope=[{lo}, {hi}]", r.grid);
    Ok(r)
}

/// Monte Carlo risk of the empirical-Bayes rule relative to the exact Oracle
/// risk at `m = eb_m`.
pub fn check_eb_risk_ratio(
    spec: &ShrinkagePriorSpec,
    seq: &AsymptoticSequence,
    params: &BoundCheckParams,
) -> Result<BoundReport> {
    params.validate()?;
    require_risk_conditions(spec)?;
    let s = settings();
    let (_, hi) = risk_envelope(spec.tail_index, seq.c, params.eta, params.delta);
    let (tg, oq) = seq.oracle_at(params.eb_m)?;
    let opt = oracle_exact_errors(&tg, &oq).risk;
    let cache: std::sync::Mutex<HashMap<u64, Threshold>> = Default::default();
    let losses: Vec<Result<f64>> = (0..params.eb_reps)
        .into_par_iter()
        .map(|rep| {
            let r = generate_replicate(&tg, &mut replicate_rng(params.seed, 200, rep));
            let tau = estimate_tau_hat(&r.xs, params.c1, params.c2)?;
            let cached = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&tau.to_bits()).copied();
            let th = match cached {
                Some(t) => t,
                None => {
                    let t = weight_threshold(spec, tau, 1.0, WEIGHT_LEVEL, &s)?;
                    cache.lock().unwrap_or_else(|e| e.into_inner()).insert(tau.to_bits(), t);
                    t
                }
            };
            let wrong = r.xs.iter().zip(&r.truth).filter(|(&x, &t)| th.exceeds(x) != t).count();
            Ok(wrong as f64)
        })
        .collect();
    let at = [("m", params.eb_m as f64), ("p", tg.p), ("psi2", tg.psi2), ("reps", params.eb_reps as f64)];
    let witness = match losses.into_iter().collect::<Result<Vec<f64>>>() {
        Ok(v) => {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            Witness::new(&at, BoundKind::Upper, mean / opt, hi)
        }
        Err(e) => Witness::failed(&at, &e),
    };
    Ok(BoundReport::from_points(
        "eb-risk-ratio",
        format!("m={}; reps={}; c1={}, c2={}", params.eb_m, params.eb_reps, params.c1, params.c2),
        BoundKind::Upper,
        params.eb_risk_slack,
        vec![witness],
    ))
}

pub fn check_slow_variation_lemmas(spec: &ShrinkagePriorSpec, params: &BoundCheckParams) -> Result<Vec<BoundReport>> {
    params.validate()?;
    let a = spec.tail_index;
    let lnl = spec.ln_l_evaluator();
    let mut xs = params.lemma_x_grid.clone();
    xs.sort_by(f64::total_cmp);
    let x_max = *xs.last().expect("validated");
    let lemma_report = |check: &str, eval: &dyn Fn(f64) -> Result<f64>| {
        let trajectory: Vec<Witness> = xs
            .iter()
            .map(|&x| match eval(x) {
                Ok(r) => Witness::new(&[("x", x)], BoundKind::Limit, r, 1.0),
                Err(e) => Witness::failed(&[("x", x)], &e),
            })
            .collect();
        let last = vec![trajectory.last().cloned().expect("nonempty")];
        let mut r = BoundReport::from_points(
            check,
            format!("{}; judged at x={x_max}", fmt_grid("x", &xs)),
            BoundKind::Limit,
            params.lemma_slack,
            last,
        );
        r.trajectory = trajectory;
        r
    };
    let mut out = Vec::new();

    // ∫_x^∞ t^α L / (x^{α+1} L(x)) against −1/(α+1) with α = −(a + 3/2)
    let b = a + 0.5;
    out.push(lemma_report("lemma-upper-tail-integral", &|x| {
        Ok((b.ln() + b * x.ln() + ln_upper_tail_integral(&lnl, x, b)? - lnl.at_log(x.ln())?).exp())
    }));

    // ∫_{A0}^x t^α L / (x^{α+1} L(x)) against 1/(1+α) with α = −a
    if a < 1.0 {
        out.push(lemma_report("lemma-head-integral", &|x| {
            Ok(((1.0 - a).ln() + ln_head_integral(&lnl, params.a0, x, a)? - (1.0 - a) * x.ln() - lnl.at_log(x.ln())?)
                .exp())
        }));
    }

    // |log L(x) / log x| must fall below the limit; judged at the first grid
    // point, or at the last one when the ratio is still decreasing there
    let mut lx = params.log_ratio_x_grid.clone();
    lx.sort_by(f64::total_cmp);
    let limit = params.log_ratio_limit;
    let trajectory: Vec<Witness> = lx
        .iter()
        .map(|&x| match lnl.at_log(x.ln()) {
            Ok(l) => Witness::new(&[("x", x)], BoundKind::Upper, (l / x.ln()).abs(), limit),
            Err(e) => Witness::failed(&[("x", x)], &e),
        })
        .collect();
    let decreasing = trajectory.windows(2).all(|w| w[1].observed <= w[0].observed);
    let judged = if trajectory[0].ratio <= 1.0 || !decreasing {
        trajectory[0].clone()
    } else {
        trajectory.last().cloned().expect("nonempty")
    };
    let mut r = BoundReport::from_points(
        "lemma-log-ratio-vanishing",
        format!("{}; limit={limit}", fmt_grid("x", &lx)),
        BoundKind::Upper,
        1.0,
        vec![judged],
    );
    r.trajectory = trajectory;
    out.push(r);
    Ok(out)
}

/// `Pr(|X| > √(c₁ log m))` under the two-groups model with `σ = 1`.
pub fn alpha_m(params: &TwoGroupsParams, c1: f64) -> f64 {
    let cut = (c1 * (params.m as f64).ln()).sqrt();
    (1.0 - params.p) * two_sided_tail(cut) + params.p * two_sided_tail(cut / (1.0 + params.psi2).sqrt())
}

/// `Pr(Bin(n, q) ≤ k)`.
fn binomial_cdf(n: usize, q: f64, k: usize) -> f64 {
    let mut term = (n as f64 * (-q).ln_1p()).exp();
    let mut acc = term;
    for j in 0..k.min(n) {
        term *= (n - j) as f64 / (j + 1) as f64 * q / (1.0 - q);
        acc += term;
    }
    acc.min(1.0)
}

pub fn check_eb_tau_consistency(seq: &AsymptoticSequence, params: &BoundCheckParams) -> Result<Vec<BoundReport>> {
    params.validate()?;
    let m = params.eb_m;
    let tg = seq.params_at(m)?;
    let am = alpha_m(&tg, params.c1);
    let (c1, c2) = (params.c1, params.c2);
    let mut out = Vec::new();

    let ratios: Vec<Result<f64>> = (0..params.eb_reps)
        .into_par_iter()
        .map(|rep| {
            let r = generate_replicate(&tg, &mut replicate_rng(params.seed, 300, rep));
            Ok(estimate_tau_hat(&r.xs, c1, c2)? / am)
        })
        .collect();
    let at = [("m", m as f64), ("p", tg.p), ("psi2", tg.psi2), ("alpha_m", am)];
    let witness = match ratios.into_iter().collect::<Result<Vec<f64>>>() {
        Ok(v) => {
            let inside = v.iter().filter(|r| (*r - 1.0).abs() < params.eb_band).count();
            Witness::new(&at, BoundKind::Lower, inside as f64 / v.len() as f64, params.eb_fraction)
        }
        Err(e) => Witness::failed(&at, &e),
    };
    out.push(BoundReport::from_points(
        "eb-tau-hat-consistency",
        format!(
            "m={m}; reps={}; band={}; required fraction={}",
            params.eb_reps, params.eb_band, params.eb_fraction
        ),
        BoundKind::Lower,
        1.0,
        vec![witness],
    ));

    // under the global null τ̂ sits on its floor 1/m exactly when at most
    // ⌊c₂⌋ observations exceed the cut
    let q = two_sided_tail((c1 * (m as f64).ln()).sqrt());
    let p_floor = binomial_cdf(m, q, c2.floor() as usize);
    let null = TwoGroupsParams::new(m, f64::MIN_POSITIVE, 1.0, 1.0)?;
    let floors = (0..params.eb_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(params.seed, 301, rep);
            let mut r = generate_replicate(&null, &mut rng);
            r.truth.iter_mut().for_each(|t| *t = false);
            estimate_tau_hat(&r.xs, c1, c2).map(|t| t == 1.0 / m as f64)
        })
        .collect::<Result<Vec<bool>>>()?;
    let freq = floors.iter().filter(|&&f| f).count() as f64 / floors.len() as f64;
    out.push(binomial_agreement(
        "eb-tau-floor-under-null",
        &[("m", m as f64), ("reps", params.eb_reps as f64)],
        freq,
        p_floor,
        params.eb_reps,
    ));

    // exceedance frequency against the exact α_m
    let n = params.alpha_m_draws;
    let cut = (c1 * (m as f64).ln()).sqrt();
    let chunk = 10_000usize;
    let n_chunks = n.div_ceil(chunk);
    let hits: usize = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let len = chunk.min(n - k * chunk);
            let sized = TwoGroupsParams { m: len, ..tg };
            let r = generate_replicate(&sized, &mut replicate_rng(params.seed, 302, k));
            r.xs.iter().filter(|x| x.abs() > cut).count()
        })
        .sum();
    out.push(binomial_agreement(
        "eb-alpha-m-formula",
        &[("m", m as f64), ("draws", n as f64), ("p", tg.p)],
        hits as f64 / n as f64,
        am,
        n,
    ));
    Ok(out)
}

/// Frequency within three binomial standard errors of its exact probability.
fn binomial_agreement(check: &str, at: &[(&str, f64)], freq: f64, prob: f64, n: usize) -> BoundReport {
    let se = (prob * (1.0 - prob) / n as f64).sqrt();
    let mut w = Witness::new(at, BoundKind::Upper, freq, prob);
    w.ratio = if se > 0.0 {
        (freq - prob).abs() / (3.0 * se)
    } else if freq == prob {
        0.0
    } else {
        f64::INFINITY
    };
    BoundReport::from_points(check, format!("n={n}; 3 binomial SE"), BoundKind::Limit, 1.0, vec![w])
}
