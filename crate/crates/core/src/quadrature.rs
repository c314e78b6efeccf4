//! Globally adaptive Gauss–Kronrod (10/21 point) integration.
//!
//! Integrands may be vector valued (`[f64; N]`), so several integrals that
//! share the expensive part of an evaluation are computed in one pass. Infinite
//! end points are handled by mapping `[a, ∞)` onto `(0, 1]` with
//! `x = a + (1 - u) / u`, and likewise for `(-∞, b]`.
//!
//! Error estimates follow the QUADPACK `qk21` heuristic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and subdivision budget for every adaptive integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::invalid("quadrature tolerances must be positive"));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::invalid("max_subdivisions must be at least 1"));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub abs_err: [f64; N],
    pub evals: usize,
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_632_758_940_718,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// 10-point Gauss weights, paired with XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    /// x = a + (1 - u) / u on u ∈ (0, 1]
    Upper(f64),
    /// x = b - (1 - u) / u on u ∈ (0, 1]
    Lower(f64),
}

impl Map {
    #[inline]
    fn apply(self, u: f64) -> (f64, f64) {
        match self {
            Map::Identity => (u, 1.0),
            Map::Upper(a) => (a + (1.0 - u) / u, 1.0 / (u * u)),
            Map::Lower(b) => (b - (1.0 - u) / u, 1.0 / (u * u)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel<const N: usize> {
    map: Map,
    lo: f64,
    hi: f64,
    value: [f64; N],
    err: [f64; N],
}

fn gk21<const N: usize, F>(f: &mut F, map: Map, lo: f64, hi: f64) -> Result<Panel<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut eval = |u: f64| -> Result<[f64; N]> {
        let (x, jac) = map.apply(u);
        let mut v = f(x);
        for c in v.iter_mut() {
            *c *= jac;
            if !c.is_finite() {
                return Err(Error::numeric(
                    format!("integrand not finite at x = {x:e}"),
                    f64::INFINITY,
                ));
            }
        }
        Ok(v)
    };

    let fc = eval(centre)?;
    let mut fv1 = [[0.0; N]; 10];
    let mut fv2 = [[0.0; N]; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        fv1[j] = eval(centre - dx)?;
        fv2[j] = eval(centre + dx)?;
    }

    let mut value = [0.0; N];
    let mut err = [0.0; N];
    for k in 0..N {
        let mut resk = WGK[10] * fc[k];
        let mut resg = 0.0;
        let mut resabs = resk.abs();
        for j in 0..10 {
            let s = fv1[j][k] + fv2[j][k];
            resk += WGK[j] * s;
            resabs += WGK[j] * (fv1[j][k].abs() + fv2[j][k].abs());
            if j % 2 == 1 {
                resg += WG[j / 2] * s;
            }
        }
        let reskh = 0.5 * resk;
        let mut resasc = WGK[10] * (fc[k] - reskh).abs();
        for j in 0..10 {
            resasc += WGK[j] * ((fv1[j][k] - reskh).abs() + (fv2[j][k] - reskh).abs());
        }
        let h = half.abs();
        resabs *= h;
        resasc *= h;
        let mut abserr = ((resk - resg) * half).abs();
        if resasc != 0.0 && abserr != 0.0 {
            abserr = resasc * (200.0 * abserr / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            abserr = abserr.max(50.0 * f64::EPSILON * resabs);
        }
        value[k] = resk * half;
        err[k] = abserr;
    }
    Ok(Panel {
        map,
        lo,
        hi,
        value,
        err,
    })
}

/// Integrate a vector-valued `f` over the union of consecutive segments
/// defined by `points` (strictly increasing; the first and last entries may be
/// `-∞` / `+∞`).
pub fn integrate_vec<const N: usize, F>(
    mut f: F,
    points: &[f64],
    settings: &QuadratureSettings,
) -> Result<Estimate<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    if points.len() < 2 {
        return Err(Error::invalid("integration needs at least two end points"));
    }
    for w in points.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::invalid(format!(
                "integration points must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut panels: Vec<Panel<N>> = Vec::with_capacity(settings.max_subdivisions + 4);
    let last = points.len() - 2;
    for (i, w) in points.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let seg = match (a.is_finite(), b.is_finite()) {
            (true, true) => (Map::Identity, a, b),
            (true, false) => (Map::Upper(a), 0.0, 1.0),
            (false, true) => (Map::Lower(b), 0.0, 1.0),
            (false, false) => {
                // only possible for a single (-∞, ∞) segment
                debug_assert!(i == 0 && i == last);
                panels.push(gk21(&mut f, Map::Lower(0.0), 0.0, 1.0)?);
                (Map::Upper(0.0), 0.0, 1.0)
            }
        };
        panels.push(gk21(&mut f, seg.0, seg.1, seg.2)?);
    }
    let mut evals = 21 * panels.len();

    loop {
        let mut total = [0.0; N];
        let mut total_err = [0.0; N];
        for p in &panels {
            for k in 0..N {
                total[k] += p.value[k];
                total_err[k] += p.err[k];
            }
        }
        let converged = (0..N).all(|k| {
            total_err[k] <= settings.abs_tol.max(settings.rel_tol * total[k].abs())
        });
        if converged {
            return Ok(Estimate {
                value: total,
                abs_err: total_err,
                evals,
            });
        }
        let achieved = (0..N)
            .map(|k| total_err[k] / total[k].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        if panels.len() >= settings.max_subdivisions {
            return Err(Error::numeric("adaptive quadrature: subdivision limit", achieved));
        }

        let scale: [f64; N] = std::array::from_fn(|k| {
            total[k]
                .abs()
                .max(settings.abs_tol / settings.rel_tol)
        });
        let (worst, _) = panels
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let r = (0..N).map(|k| p.err[k] / scale[k]).fold(0.0, f64::max);
                (i, r)
            })
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });

        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.lo + p.hi);
        if !(mid > p.lo && mid < p.hi) || (p.hi - p.lo) < 1e3 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::numeric("adaptive quadrature: interval too small", achieved));
        }
        panels.push(gk21(&mut f, p.map, p.lo, mid)?);
        panels.push(gk21(&mut f, p.map, mid, p.hi)?);
        evals += 42;
    }
}

/// Scalar convenience wrapper over [`integrate_vec`].
pub fn integrate<F>(mut f: F, points: &[f64], settings: &QuadratureSettings) -> Result<Estimate<1>>
where
    F: FnMut(f64) -> f64,
{
    integrate_vec(|x| [f(x)], points, settings)
}

/// Integrate `exp(log_f(x) - shift)` and return the logarithms of the
/// integrals of `exp(log_f)`. A zero integral comes back as `-∞`.
pub fn log_integrate_vec<const N: usize, F>(
    mut log_f: F,
    points: &[f64],
    shift: f64,
    settings: &QuadratureSettings,
) -> Result<[f64; N]>
where
    F: FnMut(f64) -> [f64; N],
{
    let est: Estimate<N> = integrate_vec(
        |x| {
            let l = log_f(x);
            std::array::from_fn(|k| (l[k] - shift).exp())
        },
        points,
        settings,
    )?;
    Ok(std::array::from_fn(|k| est.value[k].ln() + shift))
}

/// Sorted, de-duplicated break points with the supplied outer bounds.
pub(crate) fn breakpoints(lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = interior
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(pts.len() + 2);
    out.push(lo);
    for x in pts {
        let prev = *out.last().unwrap();
        if !prev.is_finite() || x - prev > 1e-9 * prev.abs().max(1.0) {
            out.push(x);
        }
    }
    if hi.is_finite() && hi - *out.last().unwrap() <= 1e-9 * hi.abs().max(1.0) && out.len() > 1 {
        out.pop();
    }
    out.push(hi);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn s() -> QuadratureSettings {
        QuadratureSettings::default()
    }

    #[test]
    fn polynomial_is_exact() {
        let e = integrate(|x| 3.0 * x * x, &[0.0, 2.0], &s()).unwrap();
        assert!((e.value[0] - 8.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_over_real_line() {
        let e = integrate(|x| (-0.5 * x * x).exp(), &[f64::NEG_INFINITY, f64::INFINITY], &s())
            .unwrap();
        assert!((e.value[0] - (2.0 * PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫₀¹ x^{-1/2} dx = 2
        let e = integrate(|x| x.powf(-0.5), &[0.0, 1.0], &s()).unwrap();
        assert!((e.value[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn heavy_tail_on_half_line() {
        // ∫₁^∞ x^{-3/2} dx = 2
        let e = integrate(|x| x.powf(-1.5), &[1.0, f64::INFINITY], &s()).unwrap();
        assert!((e.value[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn vector_integrand_shares_evaluations() {
        let e = integrate_vec(|x| [x.exp(), x * x.exp()], &[0.0, 1.0], &s()).unwrap();
        assert!((e.value[0] - (1f64.exp() - 1.0)).abs() < 1e-12);
        assert!((e.value[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_integrate_handles_huge_scales() {
        // ∫ exp(800 - x²/2) dx = e^800 √(2π)
        let l = log_integrate_vec(
            |x| [800.0 - 0.5 * x * x],
            &[f64::NEG_INFINITY, 0.0, f64::INFINITY],
            800.0,
            &s(),
        )
        .unwrap();
        assert!((l[0] - (800.0 + 0.5 * (2.0 * PI).ln())).abs() < 1e-10);
    }

    #[test]
    fn subdivision_limit_reports_failure() {
        let tight = QuadratureSettings {
            rel_tol: 1e-14,
            abs_tol: 1e-300,
            max_subdivisions: 2,
        };
        let err = integrate(|x| (50.0 * x).sin().abs(), &[0.0, 10.0], &tight).unwrap_err();
        assert!(matches!(err, Error::NumericFailure { achieved, .. } if achieved > 0.0));
    }

    #[test]
    fn rejects_unordered_points() {
        assert!(integrate(|x| x, &[1.0, 0.0], &s()).is_err());
    }

    #[test]
    fn breakpoints_are_sorted_and_deduplicated() {
        let b = breakpoints(f64::NEG_INFINITY, f64::INFINITY, &[3.0, 1.0, 1.0, f64::NAN]);
        assert_eq!(b, vec![f64::NEG_INFINITY, 1.0, 3.0, f64::INFINITY]);
    }
}
