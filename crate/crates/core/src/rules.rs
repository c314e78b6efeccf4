//! Multiple-testing procedures behind one interface: shrinkage rules with a
//! tuned, estimated or marginalized global scale, the Bayes Oracle and
//! Benjamini–Hochberg.
//!
//! A shrinkage rule rejects `H_0i` when its weight `E(1 − κ_i | ·)` is
//! strictly above 1/2.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::full_bayes::{FbEngine, GridSpec};
use crate::oracle::{bh_procedure, derive_oracle, OracleQuantities, TwoGroupsParams};
use crate::posterior::{mean_shrinkage_weight, weight_threshold, PosteriorQuery, Threshold};
use crate::priors::{PriorConfig, ShrinkagePriorSpec};
use crate::quadrature::QuadratureSettings;
use crate::special::two_sided_tail;

/// Rejection level for every shrinkage statistic.
pub const WEIGHT_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcedureKind {
    TunedTau,
    EmpiricalBayes,
    FullBayes,
    Oracle,
    Bh,
}

impl FromStr for ProcedureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "tuned-tau" | "tuned" => ProcedureKind::TunedTau,
            "empirical-bayes" | "eb" => ProcedureKind::EmpiricalBayes,
            "full-bayes" | "fb" => ProcedureKind::FullBayes,
            "oracle" => ProcedureKind::Oracle,
            "bh" => ProcedureKind::Bh,
            other => return Err(Error::invalid(format!("unknown procedure '{other}'"))),
        })
    }
}

/// How a tuned rule picks `τ` from the model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TauRule {
    Fixed { tau: f64 },
    P,
    ScaledP { k: f64 },
    PPow { exponent: f64 },
}

impl TauRule {
    pub fn tau_for(&self, params: Option<&TwoGroupsParams>) -> Result<f64> {
        let need_p = || {
            params
                .map(|q| q.p)
                .ok_or_else(|| Error::MissingParameter("p is required by the tau rule; pass an explicit tau instead".into()))
        };
        let tau = match *self {
            TauRule::Fixed { tau } => tau,
            TauRule::P => need_p()?,
            TauRule::ScaledP { k } => k * need_p()?,
            TauRule::PPow { exponent } => need_p()?.powf(exponent),
        };
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau rule produced {tau}")));
        }
        Ok(tau)
    }
}

impl fmt::Display for TauRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauRule::Fixed { tau } => write!(f, "tau={tau}"),
            TauRule::P => write!(f, "tau=p"),
            TauRule::ScaledP { k } => write!(f, "tau={k}p"),
            TauRule::PPow { exponent } => write!(f, "tau=p^{exponent}"),
        }
    }
}

/// Accepts `p`, `p^A`, `Kp` / `K*p`, or a bare number for a fixed `τ`.
impl FromStr for TauRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("cannot parse tau rule '{s}'")))
        };
        if s == "p" {
            return Ok(TauRule::P);
        }
        if let Some(e) = s.strip_prefix("p^") {
            return Ok(TauRule::PPow { exponent: num(e)? });
        }
        if let Some(k) = s.strip_suffix('p') {
            let k = k.trim_end_matches('*');
            return Ok(TauRule::ScaledP { k: num(k)? });
        }
        Ok(TauRule::Fixed { tau: num(&s)? })
    }
}

fn default_c1() -> f64 {
    2.0
}

fn default_c2() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSpec {
    pub kind: ProcedureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_rule: Option<TauRule>,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    /// BH level; `1/log m` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bh_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ProcedureSpec {
    pub fn new(kind: ProcedureKind) -> Self {
        Self {
            kind,
            prior: None,
            tau_rule: None,
            c1: default_c1(),
            c2: default_c2(),
            bh_alpha: None,
            grid: None,
            label: None,
        }
    }

    pub fn oracle() -> Self {
        Self::new(ProcedureKind::Oracle)
    }

    pub fn bh() -> Self {
        Self::new(ProcedureKind::Bh)
    }

    pub fn tuned(prior: &str, rule: TauRule) -> Self {
        Self {
            prior: Some(prior_config(prior)),
            tau_rule: Some(rule),
            ..Self::new(ProcedureKind::TunedTau)
        }
    }

    pub fn empirical_bayes(prior: &str) -> Self {
        Self {
            prior: Some(prior_config(prior)),
            ..Self::new(ProcedureKind::EmpiricalBayes)
        }
    }

    pub fn full_bayes(prior: &str) -> Self {
        Self {
            prior: Some(prior_config(prior)),
            ..Self::new(ProcedureKind::FullBayes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 2.0) {
            return Err(Error::invalid(format!("c1 must be at least 2, got {}", self.c1)));
        }
        if !(self.c2 >= 1.0) {
            return Err(Error::invalid(format!("c2 must be at least 1, got {}", self.c2)));
        }
        if let Some(a) = self.bh_alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::invalid(format!("bh_alpha must lie in (0, 1), got {a}")));
            }
        }
        match self.kind {
            ProcedureKind::TunedTau | ProcedureKind::EmpiricalBayes | ProcedureKind::FullBayes => {
                if self.prior.is_none() {
                    return Err(Error::MissingParameter(format!("{:?} needs a prior", self.kind)));
                }
            }
            _ => {}
        }
        if self.kind == ProcedureKind::TunedTau && self.tau_rule.is_none() {
            return Err(Error::MissingParameter("tuned-tau needs a tau rule".into()));
        }
        Ok(())
    }

    pub fn resolve_prior(&self) -> Result<Option<ShrinkagePriorSpec>> {
        self.prior.as_ref().map(|p| p.resolve()).transpose()
    }

    /// Name used in reports and CSV output.
    pub fn tag(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let prior = self
            .resolve_prior()
            .ok()
            .flatten()
            .map(|p| p.to_string())
            .unwrap_or_else(|| "?".into());
        match self.kind {
            ProcedureKind::Oracle => "oracle".into(),
            ProcedureKind::Bh => "bh".into(),
            ProcedureKind::EmpiricalBayes => format!("{prior}-eb"),
            ProcedureKind::FullBayes => format!("{prior}-fb"),
            ProcedureKind::TunedTau => match self.tau_rule {
                Some(r) => format!("{prior}-{r}"),
                None => format!("{prior}-tuned"),
            },
        }
    }
}

fn prior_config(family: &str) -> PriorConfig {
    PriorConfig {
        family: family.into(),
        alpha: None,
        beta: None,
    }
}

/// Per-test decisions and the statistic each was based on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionVector {
    pub rejections: Vec<bool>,
    pub statistics: Vec<f64>,
}

impl DecisionVector {
    pub fn n_rejections(&self) -> usize {
        self.rejections.iter().filter(|&&r| r).count()
    }
}

/// `max{1/m, #{|x_j| > √(c₁ log m)} / (c₂ m)}`.
pub fn estimate_tau_hat(xs: &[f64], c1: f64, c2: f64) -> Result<f64> {
    let m = xs.len();
    if m < 2 {
        return Err(Error::invalid(format!("tau-hat needs at least 2 observations, got {m}")));
    }
    if !(c1 >= 2.0) || !(c2 >= 1.0) {
        return Err(Error::invalid(format!("need c1 ≥ 2 and c2 ≥ 1, got c1={c1}, c2={c2}")));
    }
    let mf = m as f64;
    let cut = (c1 * mf.ln()).sqrt();
    let count = xs.iter().filter(|x| x.abs() > cut).count();
    Ok((count as f64 / (c2 * mf)).max(1.0 / mf))
}

/// A procedure with its reusable precomputation: full-Bayes tables and
/// cached weight thresholds per `(τ, σ)`.
pub struct PreparedProcedure {
    spec: ProcedureSpec,
    prior: Option<ShrinkagePriorSpec>,
    settings: QuadratureSettings,
    engine: Option<FbEngine>,
    thresholds: Mutex<HashMap<(u64, u64), Threshold>>,
}

impl fmt::Debug for PreparedProcedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreparedProcedure").field("spec", &self.spec).finish()
    }
}

impl PreparedProcedure {
    pub fn new(spec: &ProcedureSpec, settings: &QuadratureSettings) -> Result<Self> {
        spec.validate()?;
        settings.validate()?;
        let prior = spec.resolve_prior()?;
        let engine = match (spec.kind, &prior) {
            (ProcedureKind::FullBayes, Some(p)) => {
                let grid = spec.grid.unwrap_or_default().build()?;
                Some(FbEngine::new(p, grid, settings)?)
            }
            _ => None,
        };
        Ok(Self {
            spec: spec.clone(),
            prior,
            settings: *settings,
            engine,
            thresholds: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &ProcedureSpec {
        &self.spec
    }

    pub fn tag(&self) -> String {
        self.spec.tag()
    }

    fn prior(&self) -> &ShrinkagePriorSpec {
        self.prior.as_ref().expect("validated shrinkage procedure has a prior")
    }

    fn known_sigma(params: Option<&TwoGroupsParams>) -> f64 {
        params.map(|p| p.sigma()).unwrap_or(1.0)
    }

    /// Global scale used by the tuned and empirical-Bayes rules.
    pub fn tau_for(&self, xs: &[f64], params: Option<&TwoGroupsParams>) -> Result<f64> {
        match self.spec.kind {
            ProcedureKind::TunedTau => self.spec.tau_rule.expect("validated").tau_for(params),
            ProcedureKind::EmpiricalBayes => {
                let sigma = Self::known_sigma(params);
                if sigma == 1.0 {
                    estimate_tau_hat(xs, self.spec.c1, self.spec.c2)
                } else {
                    let z: Vec<f64> = xs.iter().map(|x| x / sigma).collect();
                    estimate_tau_hat(&z, self.spec.c1, self.spec.c2)
                }
            }
            k => Err(Error::invalid(format!("{k:?} has no single tau"))),
        }
    }

    /// Cached `|x|` threshold of the weight at level 1/2.
    pub fn threshold(&self, tau: f64, sigma: f64) -> Result<Threshold> {
        let key = (tau.to_bits(), sigma.to_bits());
        if let Some(t) = self.thresholds.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(*t);
        }
        let t = weight_threshold(self.prior(), tau, sigma, WEIGHT_LEVEL, &self.settings)?;
        self.thresholds
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, t);
        Ok(t)
    }

    fn oracle_quantities(&self, params: Option<&TwoGroupsParams>) -> Result<(TwoGroupsParams, OracleQuantities)> {
        let params = params.ok_or_else(|| Error::MissingParameter("the Oracle needs (p, psi2)".into()))?;
        Ok((*params, derive_oracle(params)?))
    }

    fn bh_alpha(&self, m: usize) -> Result<f64> {
        let a = self.spec.bh_alpha.unwrap_or(1.0 / (m as f64).ln());
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::invalid(format!("BH level 1/log m = {a} is outside (0, 1) for m = {m}")));
        }
        Ok(a)
    }

    fn check_len(xs: &[f64], params: Option<&TwoGroupsParams>) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::invalid("no observations"));
        }
        if let Some(p) = params {
            if p.m != xs.len() {
                return Err(Error::invalid(format!("data has {} values but m = {}", xs.len(), p.m)));
            }
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
        Ok(())
    }

    /// Full statistic path: every per-test statistic is evaluated.
    pub fn run(&self, xs: &[f64], params: Option<&TwoGroupsParams>) -> Result<DecisionVector> {
        Self::check_len(xs, params)?;
        match self.spec.kind {
            ProcedureKind::Oracle => {
                let (p, oq) = self.oracle_quantities(params)?;
                let statistics: Vec<f64> = xs.iter().map(|x| x * x / p.sigma2).collect();
                let rejections = statistics.iter().map(|&s| s > oq.c2).collect();
                Ok(DecisionVector { rejections, statistics })
            }
            ProcedureKind::Bh => {
                let sigma = Self::known_sigma(params);
                let z: Vec<f64> = xs.iter().map(|x| x / sigma).collect();
                let rejections = bh_procedure(&z, self.bh_alpha(xs.len())?)?;
                let statistics = z.iter().map(|&v| two_sided_tail(v)).collect();
                Ok(DecisionVector { rejections, statistics })
            }
            ProcedureKind::TunedTau | ProcedureKind::EmpiricalBayes => {
                let tau = self.tau_for(xs, params)?;
                self.weights_at_tau(xs, tau, Self::known_sigma(params))
            }
            ProcedureKind::FullBayes => {
                let engine = self.engine.as_ref().expect("full-Bayes engine is built");
                let post = engine.posterior(xs)?;
                post.check_bounds()?;
                let statistics = engine.shrinkage_weights(xs, &post)?;
                let rejections = statistics.iter().map(|&w| w > WEIGHT_LEVEL).collect();
                Ok(DecisionVector { rejections, statistics })
            }
        }
    }

    /// Shrinkage weights at a given `τ` and their decisions.
    pub fn weights_at_tau(&self, xs: &[f64], tau: f64, sigma: f64) -> Result<DecisionVector> {
        let prior = self.prior();
        let statistics = xs
            .par_iter()
            .map(|&x| mean_shrinkage_weight(prior, &PosteriorQuery::new(x, tau, sigma)?, &self.settings))
            .collect::<Result<Vec<f64>>>()?;
        let rejections = statistics.iter().map(|&w| w > WEIGHT_LEVEL).collect();
        Ok(DecisionVector { rejections, statistics })
    }

    /// Decisions only. Tuned and empirical-Bayes rules compare `|x|` with
    /// the inverted weight threshold instead of evaluating every weight.
    pub fn decide(&self, xs: &[f64], params: Option<&TwoGroupsParams>) -> Result<Vec<bool>> {
        match self.spec.kind {
            ProcedureKind::TunedTau | ProcedureKind::EmpiricalBayes => {
                Self::check_len(xs, params)?;
                let tau = self.tau_for(xs, params)?;
                let th = self.threshold(tau, Self::known_sigma(params))?;
                Ok(xs.iter().map(|&x| th.exceeds(x)).collect())
            }
            _ => Ok(self.run(xs, params)?.rejections),
        }
    }
}

/// Build and run a procedure once.
pub fn run_procedure(
    proc_spec: &ProcedureSpec,
    xs: &[f64],
    params: Option<&TwoGroupsParams>,
) -> Result<DecisionVector> {
    PreparedProcedure::new(proc_spec, &QuadratureSettings::default())?.run(xs, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn misclassified(&self) -> usize {
        self.fp + self.fn_
    }
}

pub fn confusion(rejections: &[bool], truth: &[bool]) -> Result<Confusion> {
    if rejections.len() != truth.len() {
        return Err(Error::invalid(format!(
            "decision length {} differs from truth length {}",
            rejections.len(),
            truth.len()
        )));
    }
    let mut c = Confusion::default();
    for (&r, &t) in rejections.iter().zip(truth) {
        match (r, t) {
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_hat_counting_example() {
        let cut = (2.0 * 100f64.ln()).sqrt();
        assert!((cut - 3.0349).abs() < 1e-4);
        let mut xs = vec![0.0; 100];
        for x in xs.iter_mut().take(7) {
            *x = 3.1;
        }
        assert!((estimate_tau_hat(&xs, 2.0, 1.0).unwrap() - 0.07).abs() < 1e-15);
        assert_eq!(estimate_tau_hat(&vec![0.0; 100], 2.0, 1.0).unwrap(), 0.01);
    }

    #[test]
    fn tau_hat_argument_checks() {
        assert!(estimate_tau_hat(&[1.0], 2.0, 1.0).is_err());
        assert!(estimate_tau_hat(&[1.0, 2.0], 1.5, 1.0).is_err());
        assert!(estimate_tau_hat(&[1.0, 2.0], 2.0, 0.5).is_err());
    }

    #[test]
    fn tau_rules_parse_and_evaluate() {
        let p = TwoGroupsParams::new(10, 0.04, 5.0, 1.0).unwrap();
        assert_eq!("p".parse::<TauRule>().unwrap(), TauRule::P);
        assert_eq!("p^0.3".parse::<TauRule>().unwrap(), TauRule::PPow { exponent: 0.3 });
        assert_eq!("2p".parse::<TauRule>().unwrap(), TauRule::ScaledP { k: 2.0 });
        assert_eq!("2*p".parse::<TauRule>().unwrap(), TauRule::ScaledP { k: 2.0 });
        assert_eq!("0.01".parse::<TauRule>().unwrap(), TauRule::Fixed { tau: 0.01 });
        assert!("q".parse::<TauRule>().is_err());
        assert!((TauRule::PPow { exponent: 0.5 }.tau_for(Some(&p)).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(TauRule::P.tau_for(None), Err(Error::MissingParameter(_))));
        assert_eq!(TauRule::Fixed { tau: 0.3 }.tau_for(None).unwrap(), 0.3);
    }

    #[test]
    fn spec_validation() {
        let mut s = ProcedureSpec::empirical_bayes("horseshoe");
        s.c1 = 1.0;
        assert!(s.validate().is_err());
        assert!(ProcedureSpec::new(ProcedureKind::TunedTau).validate().is_err());
        assert!(ProcedureSpec::new(ProcedureKind::FullBayes).validate().is_err());
        assert!(ProcedureSpec::oracle().validate().is_ok());
    }

    #[test]
    fn tags() {
        assert_eq!(ProcedureSpec::empirical_bayes("hs").tag(), "horseshoe-eb");
        assert_eq!(ProcedureSpec::full_bayes("horseshoe").tag(), "horseshoe-fb");
        assert_eq!(ProcedureSpec::tuned("sdp", TauRule::P).tag(), "sdp-tau=p");
        assert_eq!(ProcedureSpec::bh().tag(), "bh");
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = ProcedureSpec::tuned("horseshoe", TauRule::PPow { exponent: 0.3 });
        let js = serde_json::to_string(&s).unwrap();
        let back: ProcedureSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(s, back);
        let parsed: ProcedureSpec =
            serde_json::from_str(r#"{"kind":"empirical-bayes","prior":{"family":"sdp"}}"#).unwrap();
        assert_eq!(parsed.c1, 2.0);
        assert_eq!(parsed.c2, 1.0);
    }

    #[test]
    fn confusion_counts() {
        let truth = [true, false, true, false, false, true, false, false, true, false];
        let dec = [true, true, false, false, false, true, false, true, true, false];
        let c = confusion(&dec, &truth).unwrap();
        // hand count: tp at 0,5,8; fp at 1,7; fn at 2; tn at 3,4,6,9
        assert_eq!(c, Confusion { fp: 2, fn_: 1, tp: 3, tn: 4 });
        let same = confusion(&truth, &truth).unwrap();
        assert_eq!(same.misclassified(), 0);
        let flipped: Vec<bool> = truth.iter().map(|t| !t).collect();
        assert_eq!(confusion(&flipped, &truth).unwrap().misclassified(), 10);
        assert!(confusion(&dec[..3], &truth).is_err());
    }
}
