//! Seeded Monte Carlo estimation of misclassification probabilities.
//!
//! Every replicate draws from its own ChaCha20 stream, selected by the pair
//! `(p index, replicate index)` under the study seed, so results do not
//! depend on thread scheduling. All procedures see the same data within a
//! replicate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::TwoGroupsParams;
use crate::quadrature::QuadratureSettings;
use crate::rules::{confusion, PreparedProcedure, ProcedureSpec};

/// Signal variance rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PsiRule {
    /// `ψ² = 2 log m`.
    #[default]
    #[serde(rename = "sqrt-2-log-m")]
    Sqrt2LogM,
    /// Fixed `ψ²`.
    Psi2(f64),
}

impl PsiRule {
    pub fn psi2(&self, m: usize) -> f64 {
        match *self {
            PsiRule::Sqrt2LogM => 2.0 * (m as f64).ln(),
            PsiRule::Psi2(v) => v,
        }
    }
}

fn default_p_grid() -> Vec<f64> {
    let mut g = vec![0.01];
    g.extend((1..=10).map(|i| i as f64 * 0.05));
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub m: usize,
    pub p_grid: Vec<f64>,
    pub psi_rule: PsiRule,
    pub sigma2: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub procedures: Vec<ProcedureSpec>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            m: 200,
            p_grid: default_p_grid(),
            psi_rule: PsiRule::default(),
            sigma2: 1.0,
            n_reps: 1000,
            seed: 0,
            procedures: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid(format!("m must be at least 2, got {}", self.m)));
        }
        if self.n_reps == 0 {
            return Err(Error::invalid("n_reps must be at least 1"));
        }
        if self.p_grid.is_empty() {
            return Err(Error::invalid("p_grid is empty"));
        }
        if self.procedures.is_empty() {
            return Err(Error::invalid("no procedures configured"));
        }
        for &p in &self.p_grid {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!("p_grid value {p} is outside (0, 1)")));
            }
        }
        if self.p_grid.len() >= 1 << 31 || self.n_reps >= 1 << 32 {
            return Err(Error::invalid("p_grid or n_reps too large for stream indexing"));
        }
        for proc_spec in &self.procedures {
            proc_spec.validate()?;
        }
        self.params_for(self.p_grid[0]).map(|_| ())
    }

    pub fn psi2(&self) -> f64 {
        self.psi_rule.psi2(self.m)
    }

    pub fn params_for(&self, p: f64) -> Result<TwoGroupsParams> {
        TwoGroupsParams::new(self.m, p, self.psi2(), self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpEstimate {
    pub p: f64,
    pub procedure: String,
    pub mp_mean: f64,
    pub mp_se: f64,
    /// Replicates that entered the average.
    pub n_reps: usize,
    pub m: usize,
    pub psi2: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedReplicates {
    pub p: f64,
    pub count: usize,
    /// First failure message, if any.
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpStudy {
    pub estimates: Vec<MpEstimate>,
    pub dropped: Vec<DroppedReplicates>,
}

impl MpStudy {
    pub fn get(&self, p: f64, procedure: &str) -> Option<&MpEstimate> {
        self.estimates
            .iter()
            .find(|e| e.p == p && e.procedure == procedure)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub xs: Vec<f64>,
    pub truth: Vec<bool>,
}

/// Stream for replicate `rep` at grid position `p_index`.
pub fn replicate_rng(seed: u64, p_index: usize, rep: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((p_index as u64) << 32) | rep as u64);
    rng
}

pub fn generate_replicate<R: Rng + ?Sized>(params: &TwoGroupsParams, rng: &mut R) -> Replicate {
    let sd0 = params.sigma();
    let sd1 = (params.sigma2 + params.psi2).sqrt();
    let mut xs = Vec::with_capacity(params.m);
    let mut truth = Vec::with_capacity(params.m);
    for _ in 0..params.m {
        let signal = rng.random::<f64>() < params.p;
        let z: f64 = StandardNormal.sample(rng);
        xs.push(z * if signal { sd1 } else { sd0 });
        truth.push(signal);
    }
    Replicate { xs, truth }
}

/// Sample mean and its standard error (sample SD over `√n`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// Per-procedure misclassification proportions for one replicate.
fn run_replicate(
    procs: &[PreparedProcedure],
    params: &TwoGroupsParams,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<f64>> {
    let rep = generate_replicate(params, rng);
    procs
        .iter()
        .map(|pp| {
            let dec = pp.decide(&rep.xs, Some(params))?;
            let c = confusion(&dec, &rep.truth)?;
            Ok(c.misclassified() as f64 / params.m as f64)
        })
        .collect()
}

pub fn run_mp_study(config: &SimConfig) -> Result<MpStudy> {
    run_mp_study_with_progress(config, &|_, _| {})
}

/// As [`run_mp_study`], calling `progress(done, total)` after each grid value.
pub fn run_mp_study_with_progress(
    config: &SimConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<MpStudy> {
    config.validate()?;
    let settings = QuadratureSettings::default();
    let procs = config
        .procedures
        .iter()
        .map(|s| PreparedProcedure::new(s, &settings))
        .collect::<Result<Vec<_>>>()?;
    let tags: Vec<String> = procs.iter().map(|p| p.tag()).collect();
    let psi2 = config.psi2();

    let mut estimates = Vec::new();
    let mut dropped = Vec::new();
    for (pi, &p) in config.p_grid.iter().enumerate() {
        let params = config.params_for(p)?;
        let results: Vec<Result<Vec<f64>>> = (0..config.n_reps)
            .into_par_iter()
            .map(|rep| run_replicate(&procs, &params, &mut replicate_rng(config.seed, pi, rep)))
            .collect();

        let mut per_proc: Vec<Vec<f64>> = vec![Vec::with_capacity(config.n_reps); procs.len()];
        let mut n_failed = 0;
        let mut first_error = None;
        for r in results {
            match r {
                Ok(v) => v.into_iter().zip(per_proc.iter_mut()).for_each(|(x, acc)| acc.push(x)),
                Err(e) if e.is_numeric() => {
                    n_failed += 1;
                    first_error.get_or_insert_with(|| e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        if n_failed > 0 {
            dropped.push(DroppedReplicates {
                p,
                count: n_failed,
                first_error,
            });
        }
        if n_failed == config.n_reps {
            return Err(Error::numeric(
                format!("every replicate failed at p = {p}"),
                f64::NAN,
            ));
        }
        for (tag, vals) in tags.iter().zip(&per_proc) {
            let (mp_mean, mp_se) = mean_and_se(vals);
            estimates.push(MpEstimate {
                p,
                procedure: tag.clone(),
                mp_mean,
                mp_se,
                n_reps: vals.len(),
                m: config.m,
                psi2,
                seed: config.seed,
            });
        }
        progress(pi + 1, config.p_grid.len());
    }
    estimates.sort_by(|a, b| a.p.total_cmp(&b.p).then_with(|| a.procedure.cmp(&b.procedure)));
    Ok(MpStudy { estimates, dropped })
}
