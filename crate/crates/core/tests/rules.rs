use shrinktest::oracle::{derive_oracle, oracle_decide, TwoGroupsParams};
use shrinktest::rules::{
    estimate_tau_hat, run_procedure, PreparedProcedure, ProcedureSpec, TauRule,
};
use shrinktest::simulation::{generate_replicate, replicate_rng, Replicate};
use shrinktest::{Error, QuadratureSettings};

fn replicate(p: f64, seed: u64) -> (TwoGroupsParams, Replicate) {
    let params = TwoGroupsParams::new(200, p, 3.2552f64.powi(2), 1.0).unwrap();
    let rep = generate_replicate(&params, &mut replicate_rng(seed, 0, 0));
    (params, rep)
}

fn prepared(spec: &ProcedureSpec) -> PreparedProcedure {
    PreparedProcedure::new(spec, &QuadratureSettings::default()).unwrap()
}

#[test]
fn oracle_procedure_delegates_to_oracle_rule() {
    let (params, rep) = replicate(0.1, 1);
    let oq = derive_oracle(&params).unwrap();
    let dec = run_procedure(&ProcedureSpec::oracle(), &rep.xs, Some(&params)).unwrap();
    for (i, &x) in rep.xs.iter().enumerate() {
        assert_eq!(dec.rejections[i], oracle_decide(x, &oq));
        assert_eq!(dec.statistics[i], x * x);
    }
}

#[test]
fn threshold_fast_path_matches_statistics() {
    for prior in ["horseshoe", "sdp", "sb"] {
        for spec in [
            ProcedureSpec::tuned(prior, TauRule::P),
            ProcedureSpec::tuned(prior, TauRule::PPow { exponent: 0.3 }),
            ProcedureSpec::empirical_bayes(prior),
        ] {
            for (p, seed) in [(0.05, 2), (0.3, 3)] {
                let (params, rep) = replicate(p, seed);
                let pp = prepared(&spec);
                let full = pp.run(&rep.xs, Some(&params)).unwrap();
                let fast = pp.decide(&rep.xs, Some(&params)).unwrap();
                assert_eq!(full.rejections, fast, "{}", spec.tag());
                assert_eq!(full.rejections.len(), full.statistics.len());
            }
        }
    }
}

#[test]
fn empirical_bayes_is_tuned_rule_at_tau_hat() {
    let (params, rep) = replicate(0.1, 4);
    let tau_hat = estimate_tau_hat(&rep.xs, 2.0, 1.0).unwrap();
    let eb = run_procedure(&ProcedureSpec::empirical_bayes("horseshoe"), &rep.xs, Some(&params)).unwrap();
    let tuned = run_procedure(
        &ProcedureSpec::tuned("horseshoe", TauRule::Fixed { tau: tau_hat }),
        &rep.xs,
        Some(&params),
    )
    .unwrap();
    assert_eq!(eb, tuned);
}

#[test]
fn tuned_rejections_grow_with_tau() {
    let (params, rep) = replicate(0.2, 5);
    let mut prev: Option<Vec<bool>> = None;
    for tau in [1e-4, 1e-3, 0.01, 0.05, 0.2, 0.8] {
        let dec = run_procedure(&ProcedureSpec::tuned("horseshoe", TauRule::Fixed { tau }), &rep.xs, Some(&params))
            .unwrap()
            .rejections;
        if let Some(p) = &prev {
            assert!(p.iter().zip(&dec).all(|(&a, &b)| !a || b), "subset violated at τ={tau}");
        }
        prev = Some(dec);
    }
}

#[test]
fn horseshoe_tau_p_nearly_matches_oracle() {
    let (params, rep) = replicate(0.1, 6);
    let hs = run_procedure(&ProcedureSpec::tuned("horseshoe", TauRule::P), &rep.xs, Some(&params)).unwrap();
    let or = run_procedure(&ProcedureSpec::oracle(), &rep.xs, Some(&params)).unwrap();
    let diff = hs.rejections.iter().zip(&or.rejections).filter(|(a, b)| a != b).count();
    assert!(diff as f64 / 200.0 <= 0.03, "{diff} disagreements");
}

#[test]
fn zero_data_rejects_nothing_for_every_procedure() {
    let params = TwoGroupsParams::new(200, 0.1, 10.5966, 1.0).unwrap();
    let xs = vec![0.0; 200];
    for spec in [
        ProcedureSpec::oracle(),
        ProcedureSpec::bh(),
        ProcedureSpec::tuned("horseshoe", TauRule::P),
        ProcedureSpec::empirical_bayes("sdp"),
        ProcedureSpec::full_bayes("horseshoe"),
    ] {
        let dec = run_procedure(&spec, &xs, Some(&params)).unwrap();
        assert_eq!(dec.n_rejections(), 0, "{}", spec.tag());
    }
}

#[test]
fn tau_hat_is_permutation_invariant_and_floored() {
    let (_, rep) = replicate(0.2, 7);
    let mut xs = rep.xs.clone();
    let a = estimate_tau_hat(&xs, 2.0, 1.0).unwrap();
    xs.reverse();
    xs.rotate_left(37);
    assert_eq!(a, estimate_tau_hat(&xs, 2.0, 1.0).unwrap());
    assert!(a >= 1.0 / 200.0);
}

#[test]
fn tuned_rule_without_p_is_refused() {
    let xs = [0.5, 1.0, 3.0];
    let err = run_procedure(&ProcedureSpec::tuned("horseshoe", TauRule::P), &xs, None).unwrap_err();
    assert!(matches!(err, Error::MissingParameter(_)));
    assert!(run_procedure(&ProcedureSpec::oracle(), &xs, None).is_err());
    // explicit τ needs no model parameters
    let ok = run_procedure(&ProcedureSpec::tuned("horseshoe", TauRule::Fixed { tau: 0.1 }), &xs, None).unwrap();
    assert_eq!(ok.rejections.len(), 3);
}

#[test]
fn length_mismatch_is_refused() {
    let params = TwoGroupsParams::new(10, 0.1, 5.0, 1.0).unwrap();
    assert!(run_procedure(&ProcedureSpec::oracle(), &[1.0, 2.0], Some(&params)).is_err());
}
