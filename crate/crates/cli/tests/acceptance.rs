//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

use shrinktest::bounds::{
    check_eb_tau_consistency, check_error_probability_bounds, check_hard_concentration, check_risk_ratio,
    check_small_tau_bounds, check_suboptimal_tau, default_sequence, BoundCheckParams, BoundReport,
};
use shrinktest::full_bayes::{FbEngine, HyperGrid};
use shrinktest::oracle::{derive_oracle, inclusion_probability, oracle_decide, oracle_exact_errors, TwoGroupsParams};
use shrinktest::posterior::{
    ln_normalizer, mean_shrinkage_weight, posterior_kappa_logdensity_unnorm, posterior_mean_mu,
    tail_prob_kappa_above, tail_prob_kappa_below, PosteriorQuery,
};
use shrinktest::quadrature::integrate;
use shrinktest::rules::ProcedureSpec;
use shrinktest::simulation::{generate_replicate, replicate_rng, run_mp_study, MpStudy, SimConfig};
use shrinktest::{make_prior, Family, Preset, QuadratureSettings, ShrinkagePriorSpec};

const SEED: u64 = 20240917;
const LOW_P: [f64; 3] = [0.01, 0.05, 0.1];
const HIGH_P: [f64; 2] = [0.45, 0.5];
const CLOSE_TO_ORACLE: f64 = 0.015;
const INFERIOR_BY: f64 = 0.02;
const SHRINKAGE: [&str; 3] = ["horseshoe-eb", "horseshoe-fb", "sdp-eb"];

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Result<Outcome, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn presets() -> [Preset; 4] {
    [Preset::Horseshoe, Preset::StrawdermanBerger, Preset::Neg, Preset::StandardDoublePareto]
}

/// m = 200 study over the full p grid shared by criteria 1 and 2.
fn mp_study() -> Result<&'static MpStudy, String> {
    static STUDY: OnceLock<Result<MpStudy, String>> = OnceLock::new();
    STUDY
        .get_or_init(|| {
            let config = SimConfig {
                seed: SEED,
                procedures: vec![
                    ProcedureSpec::oracle(),
                    ProcedureSpec::bh(),
                    ProcedureSpec::empirical_bayes("horseshoe"),
                    ProcedureSpec::full_bayes("horseshoe"),
                    ProcedureSpec::empirical_bayes("sdp"),
                ],
                ..SimConfig::default()
            };
            run_mp_study(&config).map_err(err)
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn mp(study: &MpStudy, p: f64, name: &str) -> Result<(f64, f64), String> {
    study
        .get(p, name)
        .map(|e| (e.mp_mean, e.mp_se))
        .ok_or_else(|| format!("no estimate for {name} at p={p}"))
}

fn criterion_1() -> Result<Outcome, String> {
    let study = mp_study()?;
    let mut pass = study.dropped.is_empty();
    let mut worst_low = (0.0f64, String::new());
    for p in LOW_P {
        let (o, _) = mp(study, p, "oracle")?;
        for name in SHRINKAGE.iter().chain(&["bh"]) {
            let gap = (mp(study, p, name)?.0 - o).abs();
            if gap > worst_low.0 {
                worst_low = (gap, format!("{name}@{p}"));
            }
        }
    }
    pass &= worst_low.0 <= CLOSE_TO_ORACLE;
    let mut least_high = (f64::INFINITY, String::new());
    for p in HIGH_P {
        let (o, _) = mp(study, p, "oracle")?;
        for name in SHRINKAGE {
            let excess = mp(study, p, name)?.0 - o;
            if excess < least_high.0 {
                least_high = (excess, format!("{name}@{p}"));
            }
        }
    }
    pass &= least_high.0 >= INFERIOR_BY;
    Ok(Outcome {
        pass,
        detail: format!(
            "max |MP - MP(oracle)| at low p {:.4} ({}) <= {CLOSE_TO_ORACLE}; min excess at high p {:.4} ({}) >= {INFERIOR_BY}; dropped replicates {}",
            worst_low.0,
            worst_low.1,
            least_high.0,
            least_high.1,
            study.dropped.iter().map(|d| d.count).sum::<usize>()
        ),
    })
}

fn criterion_2() -> Result<Outcome, String> {
    let sets = [
        (200, 0.1, 10.5952, 1.0),
        (200, 0.01, 2.0 * 200f64.ln(), 1.0),
        (1000, 0.05, 20.0, 1.0),
        (200, 0.3, 5.0, 2.25),
        (10_000, 0.001, 2.0 * 10_000f64.ln(), 1.0),
    ];
    let n = 10_000_000u64;
    let mut worst_z = 0.0f64;
    for (k, &(m, p, psi2, sigma2)) in sets.iter().enumerate() {
        let params = TwoGroupsParams::new(m, p, psi2, sigma2).map_err(err)?;
        let oq = derive_oracle(&params).map_err(err)?;
        let exact = oracle_exact_errors(&params, &oq);
        let mut rng = ChaCha20Rng::seed_from_u64(SEED + k as u64);
        let (sd0, sd1) = (sigma2.sqrt(), (sigma2 + psi2).sqrt());
        let (mut fp, mut fneg) = (0u64, 0u64);
        for _ in 0..n {
            let z0: f64 = StandardNormal.sample(&mut rng);
            fp += oracle_decide(sd0 * z0, &oq) as u64;
            let z1: f64 = StandardNormal.sample(&mut rng);
            fneg += !oracle_decide(sd1 * z1, &oq) as u64;
        }
        for (count, prob) in [(fp, exact.t1), (fneg, exact.t2)] {
            let se = (prob * (1.0 - prob) / n as f64).sqrt();
            worst_z = worst_z.max((count as f64 / n as f64 - prob).abs() / se);
        }
    }
    let study = mp_study()?;
    let mut worst_dom = (f64::NEG_INFINITY, String::new());
    let mut grid: Vec<f64> = study.estimates.iter().map(|e| e.p).collect();
    grid.dedup();
    for &p in &grid {
        let (o, o_se) = mp(study, p, "oracle")?;
        for e in study.estimates.iter().filter(|e| e.p == p && e.procedure != "oracle") {
            let margin = (o - e.mp_mean) / (o_se.hypot(e.mp_se)).max(f64::MIN_POSITIVE);
            if margin > worst_dom.0 {
                worst_dom = (margin, format!("{}@{p:.2}", e.procedure));
            }
        }
    }
    Ok(Outcome {
        pass: worst_z <= 3.0 && worst_dom.0 <= 3.0,
        detail: format!(
            "exact vs MC worst |z| {worst_z:.2} <= 3 over 5 sets; oracle dominance worst (oracle - other)/SE {:.2} <= 3 ({}) over {} p values",
            worst_dom.0,
            worst_dom.1,
            grid.len()
        ),
    })
}

fn criterion_3() -> Result<Outcome, String> {
    let params = BoundCheckParams::default();
    let points = params.eta_grid.len() * params.delta_grid.len() * params.x_grid.len() * params.tau_grid.len();
    let (mut failures, mut worst) = (0usize, 0.0f64);
    let mut pass = true;
    for p in presets() {
        let r = check_hard_concentration(&p.spec(), &params).map_err(err)?;
        failures += r.failures;
        worst = worst.max(r.worst_ratio);
        pass &= r.passed() && r.slack == 1.0 + 1e-6;
    }
    Ok(Outcome {
        pass: pass && failures == 0,
        detail: format!("failures {failures}, worst observed/bound {worst:.4} <= 1+1e-6 over {points} grid points x 4 priors"),
    })
}

fn criterion_4() -> Result<Outcome, String> {
    let start = Instant::now();
    let params = BoundCheckParams::default();
    let seq = default_sequence();
    let mut failed = Vec::new();
    let mut worst = Vec::<(String, f64)>::new();
    let mut note = |spec: &ShrinkagePriorSpec, r: &BoundReport| {
        if !r.passed() {
            failed.push(format!("{spec}:{}", r.check));
        }
        match worst.iter_mut().find(|(n, _)| *n == r.check) {
            Some(w) => w.1 = w.1.max(r.worst_ratio),
            None => worst.push((r.check.clone(), r.worst_ratio)),
        }
    };
    for p in presets() {
        let spec = p.spec();
        for r in check_small_tau_bounds(&spec, &params).map_err(err)? {
            note(&spec, &r);
        }
        for r in check_error_probability_bounds(&spec, &seq, &params).map_err(err)? {
            note(&spec, &r);
        }
        note(&spec, &check_risk_ratio(&spec, &seq, &params).map_err(err)?);
    }
    let elapsed = start.elapsed();
    let within = elapsed < Duration::from_secs(600);
    let summary: Vec<String> = worst.iter().map(|(n, w)| format!("{n} {w:.3}")).collect();
    Ok(Outcome {
        pass: failed.is_empty() && within,
        detail: format!(
            "worst violation ratios [{}]; failing [{}]; runtime {:.1} s < 600 s",
            summary.join(", "),
            failed.join(", "),
            elapsed.as_secs_f64()
        ),
    })
}

fn criterion_5() -> Result<Outcome, String> {
    let params = BoundCheckParams::default();
    let r = check_suboptimal_tau(&Preset::Horseshoe.spec(), &default_sequence(), &params).map_err(err)?;
    let growth = r.trajectory.last().map(|w| w.observed).unwrap_or(f64::NAN);
    Ok(Outcome {
        pass: r.passed() && growth >= params.suboptimal_growth,
        detail: format!(
            "aggregate growth from m=1e3 to m=1e6 with tau=p^{}: x{growth:.3} >= x{}",
            params.suboptimal_exponent, params.suboptimal_growth
        ),
    })
}

fn criterion_6() -> Result<Outcome, String> {
    let params = BoundCheckParams::default();
    let reports = check_eb_tau_consistency(&default_sequence(), &params).map_err(err)?;
    let r = reports
        .iter()
        .find(|r| r.check == "eb-tau-hat-consistency")
        .ok_or("consistency report missing")?;
    let frac = r.witnesses.first().map(|w| w.observed).unwrap_or(f64::NAN);
    Ok(Outcome {
        pass: r.passed(),
        detail: format!(
            "fraction of {} replicates with |tau_hat/alpha_m - 1| < {}: {frac:.3} (need >= {})",
            params.eb_reps, params.eb_band, params.eb_fraction
        ),
    })
}

/// λ² from the prior through its hierarchical representation.
fn draw_lambda2(spec: &ShrinkagePriorSpec, rng: &mut ChaCha20Rng) -> f64 {
    match spec.family {
        Family::Tpbn => {
            let g1 = Gamma::new(spec.alpha, 1.0).unwrap().sample(rng);
            let g2 = Gamma::new(spec.beta, 1.0).unwrap().sample(rng);
            g1 / g2
        }
        Family::Gdp => {
            let g = Gamma::new(spec.alpha, 1.0 / spec.beta).unwrap().sample(rng);
            Exp::new(0.5 * g * g).unwrap().sample(rng)
        }
    }
}

fn criterion_7() -> Result<Outcome, String> {
    let s = QuadratureSettings::default();
    let mut specs: Vec<ShrinkagePriorSpec> = presets().iter().map(|p| p.spec()).collect();
    specs.push(make_prior(Family::Tpbn, 0.3, 0.8).map_err(err)?);
    specs.push(make_prior(Family::Gdp, 1.6, 0.7).map_err(err)?);
    let weight = |spec: &ShrinkagePriorSpec, x: f64, tau: f64| {
        mean_shrinkage_weight(spec, &PosteriorQuery::unit(x, tau).map_err(err)?, &s).map_err(err)
    };

    let mut norm_err = 0.0f64;
    for spec in &specs {
        for (x, tau) in [(0.0, 1.0), (1.5, 0.2), (4.0, 0.05), (-2.5, 0.7)] {
            let q = PosteriorQuery::unit(x, tau).map_err(err)?;
            let ln_z = ln_normalizer(spec, &q, &s).map_err(err)? - 2.0 * spec.tail_index * tau.ln();
            let edge = 1.0 - 1e-9;
            let sliver = tail_prob_kappa_above(spec, &q, edge, &s).map_err(err)?;
            let body = integrate(
                |k| (posterior_kappa_logdensity_unnorm(spec, &q, k).unwrap() - ln_z).exp(),
                &[0.0, 0.01, 0.5, 0.99, edge],
                &QuadratureSettings {
                    max_subdivisions: 2000,
                    ..s
                },
            )
            .map_err(err)?
            .value[0];
            norm_err = norm_err.max((sliver + body - 1.0).abs());
        }
    }

    let mut monotone = true;
    for spec in &specs {
        for x in [0.0, 0.7, 1.5, 3.0, 6.0] {
            let mut prev = 0.0;
            for tau in [1e-4, 1e-3, 0.01, 0.05, 0.2, 0.5, 1.0, 3.0] {
                let w = weight(spec, x, tau)?;
                monotone &= w >= prev - 1e-10;
                prev = w;
            }
        }
        for tau in [1e-3, 0.05, 0.5] {
            let mut prev = 0.0;
            for i in 0..41 {
                let x = 0.25 * i as f64;
                let w = weight(spec, x, tau)?;
                monotone &= w >= prev - 1e-10 && w == weight(spec, -x, tau)?;
                prev = w;
            }
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(SEED);
    let draws = 200_000;
    let mut worst_z = 0.0f64;
    for _ in 0..20 {
        let spec = &specs[rng.random_range(0..specs.len())];
        let x: f64 = rng.random_range(-4.0..4.0);
        let tau = 10f64.powf(rng.random_range(-1.3..0.3));
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..draws {
            let k = 1.0 / (1.0 + draw_lambda2(spec, &mut rng) * tau * tau);
            let lik = k.sqrt() * (-0.5 * k * x * x).exp();
            let a = (1.0 - k) * lik;
            sa += a;
            sb += lik;
            saa += a * a;
            sbb += lik * lik;
            sab += a * lik;
        }
        let n = draws as f64;
        let (ma, mb) = (sa / n, sb / n);
        let w_mc = ma / mb;
        let var = (saa / n - 2.0 * w_mc * sab / n + w_mc * w_mc * sbb / n) / (mb * mb);
        let se = (var / n).sqrt();
        worst_z = worst_z.max((weight(spec, x, tau)? - w_mc).abs() / se);
    }

    let mut scaling = true;
    for spec in &specs {
        for (x, tau, sigma) in [(3.3, 0.1, 0.4), (-1.2, 0.8, 2.5), (0.5, 0.02, 1.7)] {
            let a = PosteriorQuery::new(x, tau, sigma).map_err(err)?;
            let b = PosteriorQuery::new(x / sigma, tau, 1.0).map_err(err)?;
            scaling &= mean_shrinkage_weight(spec, &a, &s).map_err(err)?
                == mean_shrinkage_weight(spec, &b, &s).map_err(err)?;
            scaling &= tail_prob_kappa_below(spec, &a, 0.3, &s).map_err(err)?
                == tail_prob_kappa_below(spec, &b, 0.3, &s).map_err(err)?;
            let ma = posterior_mean_mu(spec, &a, &s).map_err(err)?;
            let mb = posterior_mean_mu(spec, &b, &s).map_err(err)?;
            scaling &= (ma - mb * sigma).abs() <= 1e-15 * ma.abs().max(1.0);
        }
    }

    Ok(Outcome {
        pass: norm_err <= 1e-6 && monotone && worst_z <= 3.0 && scaling,
        detail: format!(
            "normalization max |mass - 1| {norm_err:.1e} <= 1e-6; monotone {monotone}; MC triples worst |z| {worst_z:.2} <= 3; sigma scaling exact {scaling}"
        ),
    })
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
        for &k in &idx[i..=j] {
            r[k] = 0.5 * (i + j) as f64;
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

fn criterion_8() -> Result<Outcome, String> {
    let params = TwoGroupsParams::new(200, 0.1, 2.0 * 200f64.ln(), 1.0).map_err(err)?;
    let xs = generate_replicate(&params, &mut replicate_rng(SEED, 0, 0)).xs;
    let engine = FbEngine::new(&Preset::Horseshoe.spec(), HyperGrid::default(), &QuadratureSettings::default())
        .map_err(err)?;
    let post = engine.posterior(&xs).map_err(err)?;
    let w = engine.shrinkage_weights(&xs, &post).map_err(err)?;
    let incl: Vec<f64> = xs.iter().map(|&x| inclusion_probability(x, &params)).collect();
    let rho = spearman(&w, &incl);
    Ok(Outcome {
        pass: rho >= 0.95,
        detail: format!("Spearman correlation of full-Bayes weights with inclusion probability {rho:.4} >= 0.95"),
    })
}

fn run_cli(args: &[&str]) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_shrinktest"))
        .args(args)
        .stderr(Stdio::null())
        .status()
        .map_err(err)?;
    status.code().ok_or_else(|| "terminated by signal".into())
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn criterion_9() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = dir.path().join("sim.json");
    fs::write(
        &cfg,
        r#"{"p_grid":[0.05,0.3],"n_reps":100,"seed":7,"procedures":[{"kind":"oracle"},{"kind":"bh"},{"kind":"empirical-bayes","prior":{"family":"horseshoe"}},{"kind":"tuned-tau","prior":{"family":"sdp"},"tau_rule":{"rule":"p"}}]}"#,
    )
    .map_err(err)?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let sim = dir.path().join(format!("mp{run}.csv"));
        let code = run_cli(&["--quiet", "--threads", "2", "simulate", "--config", path(&cfg), "--out", path(&sim)])?;
        if code != 0 {
            return Err(format!("simulate exited with {code}"));
        }
        let rep = dir.path().join(format!("bounds{run}.json"));
        let code = run_cli(&[
            "--quiet", "--threads", "2", "verify-bounds", "--family", "horseshoe", "--suite", "all", "--report",
            path(&rep),
        ])?;
        // 3 means some check failed, which still leaves a complete report
        if code != 0 && code != 3 {
            return Err(format!("verify-bounds exited with {code}"));
        }
        outputs.push((fs::read(&sim).map_err(err)?, fs::read(&rep).map_err(err)?));
    }
    let sim_same = outputs[0].0 == outputs[1].0;
    let rep_same = outputs[0].1 == outputs[1].1;
    Ok(Outcome {
        pass: sim_same && rep_same,
        detail: format!(
            "simulate identical {sim_same} ({} bytes); verify-bounds identical {rep_same} ({} bytes); 2 threads",
            outputs[0].0.len(),
            outputs[0].1.len()
        ),
    })
}

fn main() {
    let criteria: [(u32, &str, Check); 9] = [
        (1, "misclassification study against the oracle", criterion_1),
        (2, "oracle exactness and dominance", criterion_2),
        (3, "hard concentration inequality", criterion_3),
        (4, "asymptotic bound suite", criterion_4),
        (5, "suboptimal tuning diverges", criterion_5),
        (6, "empirical Bayes tau consistency", criterion_6),
        (7, "posterior engine properties", criterion_7),
        (8, "full-Bayes weights track inclusion probability", criterion_8),
        (9, "byte-identical reruns", criterion_9),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        failed += !outcome.pass as usize;
        println!(
            "criterion {n}: {}: {name}: {} [{:.1} s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
