use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use shrinktest::oracle::{
    bh_procedure, derive_oracle, inclusion_probability, oracle_asymptotic_risk, oracle_decide,
    oracle_exact_errors, threshold_rule_errors, AsymptoticSequence, TwoGroupsParams,
};

fn section_five() -> TwoGroupsParams {
    TwoGroupsParams::new(200, 0.1, 10.5952, 1.0).unwrap()
}

fn normal_density(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn decision_matches_likelihood_ratio() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for (p, psi2, sigma2) in [(0.1, 10.5952, 1.0), (0.01, 30.0, 1.0), (0.3, 2.0, 2.25)] {
        let params = TwoGroupsParams::new(10, p, psi2, sigma2).unwrap();
        let oq = derive_oracle(&params).unwrap();
        let f = (1.0 - p) / p;
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-12.0..12.0);
            let lr = normal_density(x, sigma2 + psi2) / normal_density(x, sigma2);
            assert_eq!(oracle_decide(x, &oq), lr > f, "x={x} p={p}");
        }
    }
}

#[test]
fn exact_errors_match_monte_carlo_frequencies() {
    let params = section_five();
    let oq = derive_oracle(&params).unwrap();
    let e = oracle_exact_errors(&params, &oq);
    let n = 10_000_000u64;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let sd_alt = (1.0 + params.psi2).sqrt();
    let (mut fp, mut fneg) = (0u64, 0u64);
    for _ in 0..n {
        let z0: f64 = StandardNormal.sample(&mut rng);
        if oracle_decide(z0, &oq) {
            fp += 1;
        }
        let z1: f64 = StandardNormal.sample(&mut rng);
        if !oracle_decide(sd_alt * z1, &oq) {
            fneg += 1;
        }
    }
    let nf = n as f64;
    for (freq, prob) in [(fp as f64 / nf, e.t1), (fneg as f64 / nf, e.t2)] {
        let se = (prob * (1.0 - prob) / nf).sqrt();
        assert!((freq - prob).abs() <= 3.0 * se, "{freq} vs {prob} ± {se}");
    }
}

#[test]
fn oracle_threshold_minimizes_risk() {
    for (p, psi2) in [(0.1, 10.5952), (0.01, 20.0), (0.001, 40.0)] {
        let params = TwoGroupsParams::new(1000, p, psi2, 1.0).unwrap();
        let oq = derive_oracle(&params).unwrap();
        let best = oracle_exact_errors(&params, &oq).risk;
        for i in 0..=800 {
            let theta = 0.01 * i as f64;
            let r = threshold_rule_errors(&params, oq.u, theta).risk;
            assert!(r >= best * (1.0 - 1e-12), "θ={theta}: {r} < {best}");
        }
    }
}

#[test]
fn inclusion_probability_is_one_half_at_threshold() {
    for (p, psi2) in [(0.1, 10.5952), (0.02, 7.0), (0.3, 50.0)] {
        let params = TwoGroupsParams::new(10, p, psi2, 1.0).unwrap();
        let oq = derive_oracle(&params).unwrap();
        let (mut lo, mut hi) = (0.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if inclusion_probability(mid, &params) > 0.5 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((root * root - oq.c2).abs() <= 1e-9, "{} vs {}", root * root, oq.c2);
    }
}

#[test]
fn inclusion_probability_increases_in_x_squared() {
    let params = section_five();
    let mut prev = 0.0;
    for i in 0..100 {
        let w = inclusion_probability(0.05 * i as f64, &params);
        assert!(w > prev || i == 0);
        assert!(w > 0.0 && w < 1.0);
        prev = w;
    }
}

#[test]
fn bh_rejections_are_monotone_in_abs_x() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let xs: Vec<f64> = (0..500)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i % 10 == 0 { 4.0 * z } else { z }
        })
        .collect();
    let rej = bh_procedure(&xs, 1.0 / 500f64.ln()).unwrap();
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            if rej[j] && xs[i].abs() >= xs[j].abs() {
                assert!(rej[i]);
            }
        }
    }
}

#[test]
fn sequence_satisfies_asymptotic_assumptions() {
    let seq = AsymptoticSequence::new(1.0, 0.5, 1.0).unwrap();
    let ms = [1_000usize, 10_000, 100_000, 1_000_000];
    let traj = seq.trajectory(&ms).unwrap();
    for w in traj.windows(2) {
        assert!(w[1].p < w[0].p);
        assert!(w[1].u > w[0].u);
        assert!(w[1].v > w[0].v);
        assert!((w[1].log_v_over_u - 1.0).abs() <= (w[0].log_v_over_u - 1.0).abs() + 1e-12);
    }
    for pt in &traj {
        assert!((pt.log_v_over_u - 1.0).abs() < 1e-10);
    }
}

#[test]
fn exact_type_two_error_approaches_asymptotic_value() {
    let seq = AsymptoticSequence::new(1.0, 0.5, 1.0).unwrap();
    let m = 1_000_000;
    let (params, oq) = seq.oracle_at(m).unwrap();
    let exact = oracle_exact_errors(&params, &oq);
    let asym = oracle_asymptotic_risk(&oq, m, params.p).unwrap();
    assert!((asym.t2 - 0.6827).abs() < 1e-4);
    assert!((exact.t2 / asym.t2 - 1.0).abs() <= 0.05, "{} vs {}", exact.t2, asym.t2);
}
