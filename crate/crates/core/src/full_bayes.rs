//! Full-Bayes marginalization over the global scale `τ` and noise scale `σ`
//! on a deterministic tensor grid in `(log τ, log σ)`.
//!
//! The hyperprior is `τ ~ C⁺(0, 1)` and `π(σ) ∝ 1/σ`. A node's log-posterior
//! is `Σ_i log m(x_i | τ, σ) + log C⁺(τ) − log σ`; integrating over the grid
//! in log coordinates multiplies by the Jacobian `τσ`.
//!
//! Evaluating thousands of nodes per dataset is made cheap by tabulating, for
//! every `τ` node, `log D(z, τ)` and the shrinkage weight `W(z, τ)` on a
//! uniform grid in `z = |x|/σ`. Both are interpolated with cubic Hermite
//! polynomials using their exact derivatives
//! `d log D/dz = −z E[κ]` and `dW/dz = z Var[κ]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{moments_z, Moments, PosteriorQuery};
use crate::priors::ShrinkagePriorSpec;
use crate::quadrature::QuadratureSettings;
use crate::special::{half_cauchy_pdf, LN_SQRT_2PI};

/// Tensor grid over `(log τ, log σ)` with trapezoid weights in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub log_tau: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub tau_weights: Vec<f64>,
    pub sigma_weights: Vec<f64>,
}

pub const DEFAULT_TAU_RANGE: (f64, f64) = (1e-5, 1e2);
pub const DEFAULT_SIGMA_RANGE: (f64, f64) = (0.2, 5.0);
pub const DEFAULT_TAU_NODES: usize = 96;
pub const DEFAULT_SIGMA_NODES: usize = 48;
/// Largest posterior mass tolerated on an outermost `τ` node.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-3;

fn log_uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let left = if i > 0 { nodes[i] - nodes[i - 1] } else { 0.0 };
            let right = if i + 1 < n { nodes[i + 1] - nodes[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

fn check_nodes(name: &str, nodes: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::invalid(format!("{name} grid is empty")));
    }
    if nodes.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} grid has non-finite nodes")));
    }
    if nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(format!("{name} grid nodes must be strictly increasing")));
    }
    Ok(())
}

impl HyperGrid {
    pub fn from_log_nodes(log_tau: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        check_nodes("tau", &log_tau)?;
        check_nodes("sigma", &log_sigma)?;
        Ok(Self {
            tau_weights: trapezoid_weights(&log_tau),
            sigma_weights: trapezoid_weights(&log_sigma),
            log_tau,
            log_sigma,
        })
    }

    pub fn new(tau_range: (f64, f64), n_tau: usize, sigma_range: (f64, f64), n_sigma: usize) -> Result<Self> {
        for (lo, hi) in [tau_range, sigma_range] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::invalid(format!("grid range must satisfy 0 < lo < hi, got ({lo}, {hi})")));
            }
        }
        if n_tau < 2 || n_sigma < 1 {
            return Err(Error::invalid("need at least two tau nodes and one sigma node"));
        }
        Self::from_log_nodes(
            log_uniform(tau_range.0, tau_range.1, n_tau),
            log_uniform(sigma_range.0, sigma_range.1, n_sigma),
        )
    }

    /// Grid with `σ` held at a known value.
    pub fn with_fixed_sigma(tau_range: (f64, f64), n_tau: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let mut g = Self::new(tau_range, n_tau, (sigma, 2.0 * sigma), 1)?;
        g.log_sigma = vec![sigma.ln()];
        Ok(g)
    }

    /// Twice the resolution on both axes (midpoints inserted).
    pub fn refined(&self) -> Self {
        fn refine(v: &[f64]) -> Vec<f64> {
            let mut out = Vec::with_capacity(2 * v.len());
            for w in v.windows(2) {
                out.push(w[0]);
                out.push(0.5 * (w[0] + w[1]));
            }
            out.push(*v.last().unwrap());
            out
        }
        Self::from_log_nodes(refine(&self.log_tau), refine(&self.log_sigma)).expect("refined grid stays valid")
    }

    pub fn n_tau(&self) -> usize {
        self.log_tau.len()
    }

    pub fn n_sigma(&self) -> usize {
        self.log_sigma.len()
    }

    pub fn len(&self) -> usize {
        self.n_tau() * self.n_sigma()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.log_tau[i].exp()
    }

    pub fn sigma(&self, j: usize) -> f64 {
        self.log_sigma[j].exp()
    }
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self::new(DEFAULT_TAU_RANGE, DEFAULT_TAU_NODES, DEFAULT_SIGMA_RANGE, DEFAULT_SIGMA_NODES)
            .expect("default grid is valid")
    }
}

/// Serializable description of a [`HyperGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_tau: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_sigma: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            tau_min: DEFAULT_TAU_RANGE.0,
            tau_max: DEFAULT_TAU_RANGE.1,
            n_tau: DEFAULT_TAU_NODES,
            sigma_min: DEFAULT_SIGMA_RANGE.0,
            sigma_max: DEFAULT_SIGMA_RANGE.1,
            n_sigma: DEFAULT_SIGMA_NODES,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<HyperGrid> {
        HyperGrid::new(
            (self.tau_min, self.tau_max),
            self.n_tau,
            (self.sigma_min, self.sigma_max),
            self.n_sigma,
        )
    }
}

/// Grid posterior of `(τ, σ)`. Node index is `i_tau * n_sigma + i_sigma`.
#[derive(Debug, Clone, Serialize)]
pub struct HyperPosterior {
    pub grid: HyperGrid,
    /// `Σ log m(x_i | τ, σ) + log C⁺(τ) − log σ` per node.
    pub log_post: Vec<f64>,
    /// Log of the normalizing constant of the weighted node values.
    pub ln_norm: f64,
    /// Normalized quadrature masses; they sum to one.
    pub node_mass: Vec<f64>,
    pub tau_mass: Vec<f64>,
    pub sigma_mass: Vec<f64>,
    /// `τ` quantiles at 5%, 25%, 50%, 75% and 95%.
    pub tau_quantiles: [f64; 5],
    pub tau_boundary_mass: f64,
    pub sigma_boundary_mass: f64,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

impl HyperPosterior {
    fn from_log_post(grid: HyperGrid, log_post: Vec<f64>) -> Result<Self> {
        let ns = grid.n_sigma();
        let ln_w: Vec<f64> = (0..log_post.len())
            .map(|k| {
                let (i, j) = (k / ns, k % ns);
                // log-space trapezoid weight times the Jacobian τσ
                let sigma_part = if ns == 1 {
                    0.0
                } else {
                    grid.sigma_weights[j].ln() + grid.log_sigma[j]
                };
                grid.tau_weights[i].ln() + grid.log_tau[i] + sigma_part
            })
            .collect();
        let weighted: Vec<f64> = log_post.iter().zip(&ln_w).map(|(l, w)| l + w).collect();
        let top = weighted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::DegeneratePosterior(format!(
                "largest weighted log-posterior is {top}"
            )));
        }
        let sum: f64 = weighted.iter().map(|v| (v - top).exp()).sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::DegeneratePosterior("all grid nodes underflow".into()));
        }
        let ln_norm = top + sum.ln();
        let node_mass: Vec<f64> = weighted.iter().map(|v| (v - ln_norm).exp()).collect();

        let nt = grid.n_tau();
        let mut tau_mass = vec![0.0; nt];
        let mut sigma_mass = vec![0.0; ns];
        for (k, m) in node_mass.iter().enumerate() {
            tau_mass[k / ns] += m;
            sigma_mass[k % ns] += m;
        }
        let tau_boundary_mass = tau_mass[0].max(tau_mass[nt - 1]);
        let sigma_boundary_mass = if ns == 1 { 0.0 } else { sigma_mass[0].max(sigma_mass[ns - 1]) };
        let tau_quantiles = QUANTILE_LEVELS.map(|q| quantile(&grid.log_tau, &tau_mass, q).exp());
        Ok(Self {
            grid,
            log_post,
            ln_norm,
            node_mass,
            tau_mass,
            sigma_mass,
            tau_quantiles,
            tau_boundary_mass,
            sigma_boundary_mass,
        })
    }

    pub fn tau_median(&self) -> f64 {
        self.tau_quantiles[2]
    }

    /// `(τ, density in τ)` pairs of the marginal posterior.
    pub fn tau_density(&self) -> Vec<(f64, f64)> {
        (0..self.grid.n_tau())
            .map(|i| {
                let tau = self.grid.tau(i);
                (tau, self.tau_mass[i] / (self.grid.tau_weights[i] * tau))
            })
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.node_mass.iter().sum()
    }

    /// Errors when the `τ` marginal piles up on an outermost node.
    pub fn check_bounds(&self) -> Result<()> {
        if self.tau_boundary_mass > BOUNDARY_MASS_LIMIT {
            return Err(Error::DegeneratePosterior(format!(
                "posterior mass {:.3e} on an outermost tau node exceeds {BOUNDARY_MASS_LIMIT:e}; widen the grid",
                self.tau_boundary_mass
            )));
        }
        Ok(())
    }
}

/// Quantile of a distribution whose mass at node `k` is spread uniformly
/// over the cell between the midpoints to its neighbours.
fn quantile(nodes: &[f64], mass: &[f64], q: f64) -> f64 {
    let n = nodes.len();
    if n == 1 {
        return nodes[0];
    }
    let edge = |k: usize| -> f64 {
        if k == 0 {
            nodes[0]
        } else if k == n {
            nodes[n - 1]
        } else {
            0.5 * (nodes[k - 1] + nodes[k])
        }
    };
    let mut acc = 0.0;
    for k in 0..n {
        let next = acc + mass[k];
        if next >= q && mass[k] > 0.0 {
            let r = ((q - acc) / mass[k]).clamp(0.0, 1.0);
            return edge(k) + r * (edge(k + 1) - edge(k));
        }
        acc = next;
    }
    nodes[n - 1]
}

/// `log` of the one-observation marginal density
/// `∫ φ(x; 0, σ²(1 + tτ²)) π(t) dt`.
pub fn marginal_loglik_one(
    spec: &ShrinkagePriorSpec,
    x: f64,
    tau: f64,
    sigma: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    let q = PosteriorQuery::new(x, tau, sigma)?;
    let ln_d = crate::posterior::ln_normalizer(spec, &q, settings)?;
    Ok(spec.ln_norm_const() - LN_SQRT_2PI - sigma.ln() + ln_d)
}

pub const TABLE_Z_MAX: f64 = 100.0;
pub const TABLE_Z_STEP: f64 = 0.05;

/// Per-`τ`-node interpolation tables and the machinery to turn data into a
/// grid posterior and full-Bayes shrinkage weights.
#[derive(Debug, Clone)]
pub struct FbEngine {
    spec: ShrinkagePriorSpec,
    grid: HyperGrid,
    settings: QuadratureSettings,
    n_z: usize,
    /// `[ln D, d ln D/dz, W, dW/dz]` at `(z index, τ index)`, row-major in z.
    table: Vec<[f64; 4]>,
}

/// Masses below this are skipped when averaging weights over nodes.
const NEGLIGIBLE_MASS: f64 = 1e-16;

impl FbEngine {
    pub fn new(spec: &ShrinkagePriorSpec, grid: HyperGrid, settings: &QuadratureSettings) -> Result<Self> {
        settings.validate()?;
        let n_z = (TABLE_Z_MAX / TABLE_Z_STEP).round() as usize + 1;
        let nt = grid.n_tau();
        let columns: Vec<Vec<[f64; 4]>> = (0..nt)
            .into_par_iter()
            .map(|i| {
                let tau = grid.tau(i);
                (0..n_z)
                    .map(|k| {
                        let z = k as f64 * TABLE_Z_STEP;
                        moments_z(spec, z, tau, settings).map(|m| entry(z, &m))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut table = vec![[0.0; 4]; n_z * nt];
        for (i, col) in columns.into_iter().enumerate() {
            for (k, e) in col.into_iter().enumerate() {
                table[k * nt + i] = e;
            }
        }
        Ok(Self {
            spec: *spec,
            grid,
            settings: *settings,
            n_z,
            table,
        })
    }

    pub fn grid(&self) -> &HyperGrid {
        &self.grid
    }

    pub fn spec(&self) -> &ShrinkagePriorSpec {
        &self.spec
    }

    /// Hermite basis for `z`, or `None` beyond the table.
    #[inline]
    fn locate(&self, z: f64) -> Option<(usize, [f64; 4])> {
        let u = z / TABLE_Z_STEP;
        let k = u as usize;
        if k + 1 >= self.n_z {
            return None;
        }
        let r = u - k as f64;
        let r2 = r * r;
        let r3 = r2 * r;
        let h = TABLE_Z_STEP;
        Some((
            k,
            [
                2.0 * r3 - 3.0 * r2 + 1.0,
                (r3 - 2.0 * r2 + r) * h,
                -2.0 * r3 + 3.0 * r2,
                (r3 - r2) * h,
            ],
        ))
    }

    /// Adds `log D(z, τ_i)` for every `τ` node to `out`.
    fn add_ln_d(&self, z: f64, out: &mut [f64]) -> Result<()> {
        let nt = self.grid.n_tau();
        match self.locate(z) {
            Some((k, b)) => {
                let (r0, r1) = (&self.table[k * nt..(k + 1) * nt], &self.table[(k + 1) * nt..(k + 2) * nt]);
                for i in 0..nt {
                    out[i] += b[0] * r0[i][0] + b[1] * r0[i][1] + b[2] * r1[i][0] + b[3] * r1[i][1];
                }
            }
            None => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += moments_z(&self.spec, z, self.grid.tau(i), &self.settings)?.ln_d;
                }
            }
        }
        Ok(())
    }

    /// Shrinkage weight `E(1 − κ | z, τ_i)`.
    pub fn weight_at(&self, z: f64, i_tau: usize) -> Result<f64> {
        let z = z.abs();
        match self.locate(z) {
            Some((k, b)) => {
                let nt = self.grid.n_tau();
                let (e0, e1) = (self.table[k * nt + i_tau], self.table[(k + 1) * nt + i_tau]);
                Ok((b[0] * e0[2] + b[1] * e0[3] + b[2] * e1[2] + b[3] * e1[3]).clamp(0.0, 1.0))
            }
            None => Ok(moments_z(&self.spec, z, self.grid.tau(i_tau), &self.settings)?.weight),
        }
    }

    /// Interpolated `log m(x | τ_i, σ_j)`.
    pub fn loglik_at(&self, x: f64, i_tau: usize, i_sigma: usize) -> Result<f64> {
        let sigma = self.grid.sigma(i_sigma);
        let mut buf = vec![0.0; self.grid.n_tau()];
        self.add_ln_d(x.abs() / sigma, &mut buf)?;
        Ok(self.spec.ln_norm_const() - LN_SQRT_2PI - sigma.ln() + buf[i_tau])
    }

    pub fn posterior(&self, xs: &[f64]) -> Result<HyperPosterior> {
        if xs.is_empty() {
            return Err(Error::invalid("full-Bayes posterior needs at least one observation"));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
        let (nt, ns) = (self.grid.n_tau(), self.grid.n_sigma());
        let m = xs.len() as f64;
        let mut log_post = vec![0.0; nt * ns];
        let mut col = vec![0.0; nt];
        for j in 0..ns {
            let sigma = self.grid.sigma(j);
            col.iter_mut().for_each(|c| *c = 0.0);
            for &x in xs {
                self.add_ln_d(x.abs() / sigma, &mut col)?;
            }
            let per_obs = self.spec.ln_norm_const() - LN_SQRT_2PI - sigma.ln();
            for i in 0..nt {
                let prior = half_cauchy_pdf(self.grid.tau(i)).ln() - sigma.ln();
                log_post[i * ns + j] = col[i] + m * per_obs + prior;
            }
        }
        HyperPosterior::from_log_post(self.grid.clone(), log_post)
    }

    /// `Σ_nodes mass · E(1 − κ_i | x_i, τ, σ)` for each observation.
    pub fn shrinkage_weights(&self, xs: &[f64], post: &HyperPosterior) -> Result<Vec<f64>> {
        if post.grid != self.grid {
            return Err(Error::invalid("posterior was computed on a different grid"));
        }
        let ns = self.grid.n_sigma();
        let active: Vec<(usize, usize, f64)> = post
            .node_mass
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > NEGLIGIBLE_MASS)
            .map(|(k, &w)| (k / ns, k % ns, w))
            .collect();
        let inv_sigma: Vec<f64> = (0..ns).map(|j| 1.0 / self.grid.sigma(j)).collect();
        xs.iter()
            .map(|&x| {
                let mut acc = 0.0;
                for &(i, j, w) in &active {
                    acc += w * self.weight_at(x * inv_sigma[j], i)?;
                }
                Ok(acc.clamp(0.0, 1.0))
            })
            .collect()
    }
}

fn entry(z: f64, m: &Moments) -> [f64; 4] {
    [m.ln_d, -z * (1.0 - m.weight), m.weight, z * m.var_kappa]
}

pub fn hyper_posterior(spec: &ShrinkagePriorSpec, xs: &[f64], grid: &HyperGrid) -> Result<HyperPosterior> {
    FbEngine::new(spec, grid.clone(), &QuadratureSettings::default())?.posterior(xs)
}

pub fn fb_shrinkage_weights(spec: &ShrinkagePriorSpec, xs: &[f64], grid: &HyperGrid) -> Result<Vec<f64>> {
    let engine = FbEngine::new(spec, grid.clone(), &QuadratureSettings::default())?;
    let post = engine.posterior(xs)?;
    engine.shrinkage_weights(xs, &post)
}
