use std::sync::OnceLock;

use shrinktest::full_bayes::{marginal_loglik_one, FbEngine, HyperGrid};
use shrinktest::oracle::{inclusion_probability, TwoGroupsParams};
use shrinktest::simulation::{generate_replicate, replicate_rng};
use shrinktest::special::ln_norm_pdf;
use shrinktest::{Preset, QuadratureSettings};

// log of the mean of φ(1; 0, 1 + λ²) over 1e7 standard half-Cauchy draws
// (numpy, seed 20241018); the SE is relative, i.e. on the log scale.
const HS_X1_TAU1_LN_MARGINAL: f64 = -1.692_404_719_218_944;
const HS_X1_TAU1_LN_SE: f64 = 1.2146e-4;

fn engine() -> &'static FbEngine {
    static E: OnceLock<FbEngine> = OnceLock::new();
    E.get_or_init(|| {
        FbEngine::new(&Preset::Horseshoe.spec(), HyperGrid::default(), &QuadratureSettings::default()).unwrap()
    })
}

fn dataset(p: f64, seed: u64) -> (TwoGroupsParams, Vec<f64>) {
    let params = TwoGroupsParams::new(200, p, 2.0 * 200f64.ln(), 1.0).unwrap();
    let rep = generate_replicate(&params, &mut replicate_rng(seed, 0, 0));
    (params, rep.xs)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn marginal_matches_monte_carlo_golden() {
    let v = marginal_loglik_one(&Preset::Horseshoe.spec(), 1.0, 1.0, 1.0, &QuadratureSettings::default()).unwrap();
    assert!(
        (v - HS_X1_TAU1_LN_MARGINAL).abs() <= 3.0 * HS_X1_TAU1_LN_SE,
        "{v} vs {HS_X1_TAU1_LN_MARGINAL}"
    );
}

#[test]
fn marginal_collapses_to_null_density_as_tau_vanishes() {
    let s = QuadratureSettings::default();
    for spec in [Preset::Horseshoe.spec(), Preset::StandardDoublePareto.spec(), Preset::Neg.spec()] {
        for (x, sigma) in [(0.0, 1.0), (2.5, 1.0), (-1.0, 0.5), (4.0, 2.0)] {
            let v = marginal_loglik_one(&spec, x, 1e-8, sigma, &s).unwrap();
            let null = ln_norm_pdf(x, sigma * sigma);
            assert!((v - null).abs() <= 1e-4, "{spec} x={x} σ={sigma}: {v} vs {null}");
            assert_eq!(v, marginal_loglik_one(&spec, -x, 1e-8, sigma, &s).unwrap());
        }
    }
}

#[test]
fn posterior_normalizes() {
    let (_, xs) = dataset(0.1, 3);
    let post = engine().posterior(&xs).unwrap();
    assert!((post.total_mass() - 1.0).abs() <= 1e-8);
    assert!((post.tau_mass.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
    post.check_bounds().unwrap();
    let q = post.tau_quantiles;
    assert!(q.windows(2).all(|w| w[0] <= w[1]), "{q:?}");
}

#[test]
fn null_data_pulls_tau_below_signal_data() {
    let zeros = vec![0.0; 50];
    let mut signals = vec![0.0; 50];
    for (k, x) in signals.iter_mut().take(10).enumerate() {
        *x = if k % 2 == 0 { 5.0 } else { -5.0 };
    }
    let a = engine().posterior(&zeros).unwrap().tau_median();
    let b = engine().posterior(&signals).unwrap().tau_median();
    assert!(a < b, "median under null data {a} not below {b}");
}

#[test]
fn all_zero_data_rejects_nothing() {
    let xs = vec![0.0; 200];
    let post = engine().posterior(&xs).unwrap();
    let w = engine().shrinkage_weights(&xs, &post).unwrap();
    assert!(w.iter().all(|&v| (0.0..0.5).contains(&v)), "max {}", w.iter().cloned().fold(0.0, f64::max));
}

#[test]
fn weights_track_oracle_inclusion_probability() {
    let (params, xs) = dataset(0.1, 11);
    let post = engine().posterior(&xs).unwrap();
    let w = engine().shrinkage_weights(&xs, &post).unwrap();
    assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
    let incl: Vec<f64> = xs.iter().map(|&x| inclusion_probability(x, &params)).collect();
    let rho = spearman(&w, &incl);
    assert!(rho >= 0.95, "rank correlation {rho}");
}

#[test]
fn grid_refinement_is_stable() {
    let (_, xs) = dataset(0.1, 5);
    let coarse = engine();
    let fine = FbEngine::new(
        &Preset::Horseshoe.spec(),
        HyperGrid::default().refined(),
        &QuadratureSettings::default(),
    )
    .unwrap();
    let wc = coarse.shrinkage_weights(&xs, &coarse.posterior(&xs).unwrap()).unwrap();
    let wf = fine.shrinkage_weights(&xs, &fine.posterior(&xs).unwrap()).unwrap();
    let worst = wc.iter().zip(&wf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "largest change {worst}");
}

#[test]
fn tau_median_follows_sparsity() {
    let medians: Vec<f64> = [0.05, 0.2, 0.4]
        .iter()
        .map(|&p| {
            let (_, xs) = dataset(p, 21);
            engine().posterior(&xs).unwrap().tau_median()
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{medians:?}");
}
