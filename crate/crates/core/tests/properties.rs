//! Invariants of the Lagrangian, the penalty function and the certificates.

use std::sync::{Arc, OnceLock};

use almult_core::catalog;
use almult_core::certificates::{
    check_inequality_on_samples, default_perturbation_grid, dual_value_psi, sample_value_function, threshold_bisection,
    CertConfig, ThresholdStatus, ValueSamples, Verdict,
};
use almult_core::lagrangian::penalty_term_phi;
use almult_core::linalg::SymMatrix;
use almult_core::problem::feasibility_residual;
use almult_core::{AugmentingFunction, LagrangianEvaluator, MultiplierVector, PenaltyRestriction, SearchConfig};
use proptest::prelude::*;

fn evaluator(id: &str) -> LagrangianEvaluator {
    let e = catalog::get(id).unwrap();
    LagrangianEvaluator::new(Arc::new(e.spec), e.default_sigma)
}

fn multiplier(id: &str, a: f64, b: f64) -> MultiplierVector {
    match id {
        "P11" | "P13" => MultiplierVector::nlp(vec![a], vec![]),
        "P12" | "SYN-QP" | "SYN-DISK" => MultiplierVector::nlp(vec![], vec![a]),
        "SYN-CIRCLE" => MultiplierVector::nlp(vec![a], vec![b]),
        "SDP-TOY" => MultiplierVector {
            eq: vec![],
            ineq: vec![],
            mu: Some(SymMatrix::from_rows(&[vec![a, b / 2.0], vec![b / 2.0, b]]).unwrap()),
        },
        _ => unreachable!(),
    }
}

/// Maps two free coordinates onto a feasible point.
fn feasible_point(id: &str, s: f64, t: f64) -> Vec<f64> {
    match id {
        "P11" | "P13" => vec![s, 0.0],
        "P12" | "SDP-TOY" => vec![-s.abs()],
        "SYN-QP" => vec![s, (2.0 - s - t.abs()).min(5.0)],
        // Angles in [pi, 5pi/4] keep x0 - x1 <= 1 on the circle.
        "SYN-CIRCLE" => {
            let th = std::f64::consts::PI * (1.0 + 0.25 * (s.abs() / 5.0).min(1.0));
            let r = std::f64::consts::SQRT_2;
            vec![r * th.cos(), r * th.sin()]
        }
        "SYN-DISK" => {
            let rad = 2.0 * (s.abs() / 5.0).min(1.0);
            vec![rad * t.cos(), rad * t.sin()]
        }
        _ => unreachable!(),
    }
}

fn any_id() -> impl Strategy<Value = &'static str> {
    prop::sample::select(catalog::IDS.to_vec())
}

fn ext(v: almult_core::ExtendedValue) -> f64 {
    v.to_f64()
}

proptest! {
    #[test]
    fn lagrangian_is_nondecreasing_in_r(
        id in any_id(), x0 in -4.0..4.0f64, x1 in -4.0..4.0f64,
        a in -3.0..3.0f64, b in -3.0..3.0f64, r1 in 0.01..10.0f64, dr in 0.0..10.0f64,
    ) {
        let ev = evaluator(id);
        let x: Vec<f64> = [x0, x1][..ev.spec().dim].to_vec();
        let lam = multiplier(id, a, b);
        let lo = ext(ev.eval_lagrangian(&x, &lam, r1).unwrap());
        let hi = ext(ev.eval_lagrangian(&x, &lam, r1 + dr).unwrap());
        prop_assert!(lo == hi || lo <= hi + 1e-9 * (1.0 + hi.abs()), "{} r={} -> {}, r+dr -> {}", id, r1, lo, hi);
    }

    #[test]
    fn lagrangian_bounded_by_objective_on_feasible_set(
        id in any_id(), s in -5.0..5.0f64, t in -5.0..5.0f64,
        a in -3.0..3.0f64, b in -3.0..3.0f64, r in 0.01..10.0f64,
    ) {
        let ev = evaluator(id);
        let x = feasible_point(id, s, t);
        prop_assume!(ev.spec().region.contains(&x, 1e-12));
        prop_assert!(feasibility_residual(ev.spec(), &x).unwrap() <= 1e-9);
        let l = ext(ev.eval_lagrangian(&x, &multiplier(id, a, b), r).unwrap());
        let f = ev.spec().objective.eval(&x);
        prop_assert!(l <= f + 1e-9 * (1.0 + f.abs()), "{}: L={} f={}", id, l, f);
    }

    #[test]
    fn penalty_over_whole_space_is_lagrangian_at_zero(
        id in any_id(), x0 in -4.0..4.0f64, x1 in -4.0..4.0f64, r in 0.01..10.0f64,
    ) {
        let ev = evaluator(id);
        let x: Vec<f64> = [x0, x1][..ev.spec().dim].to_vec();
        let f = ext(ev.eval_penalty_f(&x, r, PenaltyRestriction::WholeP).unwrap());
        let l = ext(ev.eval_lagrangian(&x, &ev.spec().constraints.zero_multiplier(), r).unwrap());
        prop_assert!(f == l || (f - l).abs() <= 1e-9 * (1.0 + l.abs()), "{}: F={} L0={}", id, f, l);
    }

    #[test]
    fn penalty_term_vanishes_exactly_on_feasible_points(
        id in any_id(), s in -5.0..5.0f64, t in -5.0..5.0f64, x0 in -4.0..4.0f64, x1 in -4.0..4.0f64,
    ) {
        let spec = catalog::get(id).unwrap().spec;
        let feas = feasible_point(id, s, t);
        prop_assert!(penalty_term_phi(&spec, &feas).unwrap() <= 1e-12);
        let x: Vec<f64> = [x0, x1][..spec.dim].to_vec();
        let phi = penalty_term_phi(&spec, &x).unwrap();
        let infeasible = feasibility_residual(&spec, &x).unwrap() > 1e-12;
        prop_assert_eq!(phi > 0.0, infeasible, "{} at {:?}: phi={}", id, x, phi);
    }

    #[test]
    fn augmenting_functions_are_nonnegative_and_vanish_at_zero(
        n in 0.0..1e3f64, gamma in 0.05..0.95f64, beta in 1.05..4.0f64,
    ) {
        for s in [
            AugmentingFunction::Norm,
            AugmentingFunction::HalfSquaredNorm,
            AugmentingFunction::power_gamma(gamma).unwrap(),
            AugmentingFunction::power_beta(beta).unwrap(),
        ] {
            prop_assert!(s.of_norm(n) >= 0.0);
            prop_assert_eq!(s.of_norm(0.0), 0.0);
            prop_assert!((s.of_norm_sq(n * n) - s.of_norm(n)).abs() <= 1e-9 * (1.0 + s.of_norm(n)));
        }
    }

    #[test]
    fn bisection_brackets_a_monotone_threshold(t in 0.01..500.0f64, lo in 0.0..0.01f64) {
        let s = threshold_bisection(lo, 1.0, 1e4, 1e-6, |r| Ok(r >= t)).unwrap();
        prop_assert_eq!(s.status, ThresholdStatus::Bracketed);
        prop_assert!(s.lower < t && t <= s.upper);
        prop_assert!(s.upper - s.lower <= 1e-6 * s.upper.max(1.0));
    }
}

fn p11_samples() -> &'static (LagrangianEvaluator, ValueSamples) {
    static S: OnceLock<(LagrangianEvaluator, ValueSamples)> = OnceLock::new();
    S.get_or_init(|| {
        let ev = evaluator("P11");
        let grid = default_perturbation_grid(ev.spec());
        let samples = sample_value_function(&ev, &grid, &CertConfig::default()).unwrap();
        (ev, samples)
    })
}

proptest! {
    #[test]
    fn certificate_verdicts_match_their_witnesses(lam in -4.0..4.0f64, r in 0.0..8.0f64) {
        let (ev, samples) = p11_samples();
        let c = check_inequality_on_samples(ev, samples, &MultiplierVector::nlp(vec![lam], vec![]), r, None, 1e-6);
        match c.verdict {
            Verdict::Fails => {
                let w = c.witness.as_ref().expect("failing certificate has a witness");
                prop_assert!(w.margin < -1e-6);
                prop_assert!(c.min_margin.unwrap() <= w.margin);
            }
            Verdict::Holds => prop_assert!(c.min_margin.unwrap() >= -1e-6 && c.witness.is_none()),
            Verdict::Inconclusive => {}
        }
        // Known answer: sharp multiplier iff r >= 1 + |lam|.
        let margin = r - 1.0 - lam.abs();
        if margin > 1e-3 {
            prop_assert_eq!(c.verdict, Verdict::Holds);
        } else if margin < -1e-3 {
            prop_assert_eq!(c.verdict, Verdict::Fails);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn dual_function_is_below_optimal_value(id in any_id(), a in -2.0..2.0f64, b in 0.0..2.0f64, r in 0.1..5.0f64) {
        let ev = evaluator(id);
        let cfg = CertConfig { search: SearchConfig { starts: 8, ..SearchConfig::default() }, ..CertConfig::default() };
        let psi = dual_value_psi(&ev, &multiplier(id, a, b), r, &cfg).unwrap();
        let f_star = ev.spec().f_star().unwrap();
        prop_assert!(ext(psi.value) <= f_star + 1e-6, "{}: psi={:?} f*={}", id, psi.value, f_star);
    }
}
