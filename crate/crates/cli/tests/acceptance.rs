//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Lines go straight to the stdout handle so they show up in the test log
//! even when libtest captures `println!`. A criterion listed in
//! `KNOWN_DEVIATIONS` may print FAIL without failing `cargo test`, but only
//! for the exact sub-case named there; anything else failing is fatal.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use almult_cli::run_args;
use almult_core::catalog;
use almult_core::certificates::{
    check_inequality_on_samples, default_perturbation_grid, dual_value_psi, exact_representation_check, penalty_exactness,
    sample_value_function, CertConfig, Verdict,
};
use almult_core::kkt::{classical_hessian, kkt_check, local_alm_check, LocalAlmOptions};
use almult_core::lagrangian::penalty_term_phi;
use almult_core::linalg::{pinv, psd_project, trace_psd_part_sq, SymMatrix};
use almult_core::localization::{localization_verdict, Conclusion, LocalizationOptions};
use almult_core::problem::feasibility_residual;
use almult_core::report::Report;
use almult_core::{AugmentingFunction, EvaluatorMode, LagrangianEvaluator, MultiplierVector, PenaltyRestriction};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criterion 4 asks for a failing local check on P12 at lambda = 1, r = 1/2.
/// There the Lagrangian is `-x/2` for x < 0 and `1.5x - x^2` for x > 0, so
/// x* = 0 is a strict local minimizer with value 0 = f(x*) and the check
/// correctly holds. The radius `r > |lambda|` is sufficient, not necessary.
const KNOWN_DEVIATIONS: &[(usize, &str)] = &[(4, "local check at lambda=1, r=0.5")];

struct Outcome {
    pass: bool,
    detail: String,
    failed_cases: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, detail: String::new(), failed_cases: vec![] }
    }

    fn check(&mut self, ok: bool, case: impl Into<String>) {
        if !ok {
            self.pass = false;
            self.failed_cases.push(case.into());
        }
    }

    fn note(&mut self, s: impl AsRef<str>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(s.as_ref());
    }
}

fn cli(args: &[&str]) -> (i32, Option<Report>) {
    let mut v = vec!["almult"];
    v.extend_from_slice(args);
    let o = run_args(v);
    (o.code, o.report)
}

fn evaluator(id: &str, sigma: AugmentingFunction) -> LagrangianEvaluator {
    LagrangianEvaluator::new(Arc::new(catalog::get(id).unwrap().spec), sigma)
}

fn eq(l: f64) -> MultiplierVector {
    MultiplierVector::nlp(vec![l], vec![])
}

fn ineq(l: f64) -> MultiplierVector {
    MultiplierVector::nlp(vec![], vec![l])
}

fn p11_sharp_parameter() -> Outcome {
    let mut o = Outcome::new();
    for lam in [-2.0f64, -1.0, 0.0, 1.0, 2.0] {
        let l = lam.to_string();
        let (_, rep) = cli(&["rlambda", "--problem", "P11", "--sigma", "sharp", "--lambda", &l]);
        let e = &rep.expect("report").estimates[0];
        let target = 1.0 + lam.abs();
        let ok = e.lower <= target && target <= e.upper && e.upper - e.lower <= 1e-3;
        o.check(ok, format!("lambda={lam}"));
        o.note(format!("r({lam}) in [{:.5}, {:.5}]", e.lower, e.upper));
    }
    o
}

/// Independent oracle: the proximal threshold of P13 at lambda = 1 is
/// sup_p 4(1 - cos p)/p^2, refined on a dense grid and as p -> 0.
/// Uses 1 - cos p = 2 sin^2(p/2) to avoid cancellation at small p.
fn p13_threshold_oracle() -> f64 {
    let q = |p: f64| 8.0 * (0.5 * p).sin().powi(2) / (p * p);
    let mut best = f64::NEG_INFINITY;
    for k in 1..200_000 {
        best = best.max(q(k as f64 * 1e-4));
    }
    for k in 3..7 {
        best = best.max(q(10f64.powi(-k)));
    }
    best
}

fn p13_proximal() -> Outcome {
    let mut o = Outcome::new();
    let (code, rep) = cli(&[
        "verify", "--problem", "P13", "--sigma", "prox", "--lambda", "1", "--r", "3", "--tol", "1e-6", "--check", "global",
        "--check", "exact",
    ]);
    let rep = rep.expect("report");
    o.check(code == 0 && rep.certificates.iter().all(|c| c.verdict == Verdict::Holds), "global and exact at r=3");
    o.note(format!("verify exit {code}"));
    let oracle = p13_threshold_oracle();
    let (_, rep) = cli(&["rlambda", "--problem", "P13", "--sigma", "prox", "--lambda", "1"]);
    let rep = rep.expect("report");
    let e = &rep.estimates[0];
    o.check((e.lower - oracle).abs() <= 1e-3 && (e.upper - oracle).abs() <= 1e-3, "bracket vs oracle");
    o.note(format!("bracket [{:.6}, {:.6}] vs oracle {oracle:.6}", e.lower, e.upper));
    let warned = rep.warnings.iter().any(|w| w.contains("reference value r(1)=4"));
    o.check(warned, "reference discrepancy warning");
    o.note(format!("warning present: {warned}"));
    o
}

fn p13_higher_power() -> Outcome {
    let mut o = Outcome::new();
    let ev = evaluator("P13", AugmentingFunction::power_beta(2.5).unwrap());
    let h = classical_hessian(ev.spec(), &[0.0, 0.0], &eq(1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let y = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let want = 2.0 * y[0] * y[0] - 2.0 * y[1] * y[1];
        o.check((h.quad_form(&y) - want).abs() <= 1e-6, format!("hessian at {y:?}"));
    }
    let neg = h.quad_form(&[0.0, 1.0]);
    o.check(neg < 0.0, "negative at (0,1)");
    o.note(format!("Hessian form at (0,1) = {neg:.6}"));
    let cfg = CertConfig::default();
    let mut fails = 0;
    for k in 0..=16 {
        let r = 2f64.powi(k);
        let c = exact_representation_check(&ev, &eq(1.0), r, &cfg).unwrap();
        if c.verdict == Verdict::Fails {
            fails += 1;
        } else {
            o.check(false, format!("exact check at r=2^{k}"));
        }
    }
    o.note(format!("exact representation fails at {fails}/17 values of r"));
    o
}

fn p12_dichotomy() -> Outcome {
    let mut o = Outcome::new();
    let ev = evaluator("P12", AugmentingFunction::Norm);
    let opts = LocalAlmOptions::default();
    let cfg = CertConfig::default();
    for lam in [-1.0f64, 0.0, 1.0] {
        let big = lam.abs() + 1.0;
        let small = lam.abs() / 2.0;
        let hi = local_alm_check(&ev, &[0.0], &ineq(lam), &[big], &opts).unwrap();
        o.check(hi.verdict == Verdict::Holds, format!("local check at lambda={lam}, r={big}"));
        let lo = local_alm_check(&ev, &[0.0], &ineq(lam), &[small], &opts).unwrap();
        o.check(lo.verdict == Verdict::Fails, format!("local check at lambda={lam}, r={small}"));
        o.note(format!("lambda={lam}: r={big} {:?}, r={small} {:?}", hi.verdict, lo.verdict));
        for r in [big, small] {
            let psi = dual_value_psi(&ev, &ineq(lam), r, &cfg).unwrap();
            o.check(psi.value.is_neg_inf(), format!("dual value at lambda={lam}, r={r}"));
        }
        let v = localization_verdict(&ev, &ineq(lam), &LocalizationOptions::default()).unwrap();
        let nd = v.nondegeneracy.as_ref().map(|n| n.holds);
        o.check(
            v.conclusion == Conclusion::NotGlobalALM && nd == Some(false),
            format!("localization at lambda={lam}"),
        );
    }
    // The analytic reason behind the deviation, from the catalog's closed form.
    let reference = catalog::get("P12").unwrap().spec.reference.unwrap();
    let lhs = (reference.eval)(&[-0.05], &ineq(1.0), 0.5).to_f64();
    let rhs = (reference.eval)(&[0.05], &ineq(1.0), 0.5).to_f64();
    o.note(format!("closed form at lambda=1, r=0.5: L(-0.05)={lhs:.4}, L(0.05)={rhs:.4}, both >= L(0)=0"));
    o
}

fn p11_sampling() -> Outcome {
    let mut o = Outcome::new();
    let ev = evaluator("P11", AugmentingFunction::Norm);
    let cfg = CertConfig::default();
    let pen = penalty_exactness(&ev, PenaltyRestriction::WholeP, &cfg).unwrap();
    let t = pen.estimate.unwrap_or(f64::NAN);
    o.check(pen.verdict == Verdict::Holds && (t - 1.0).abs() <= 1e-2, "penalty threshold");
    o.note(format!("penalty {:?} with threshold {t:.5}", pen.verdict));
    let samples = sample_value_function(&ev, &default_perturbation_grid(ev.spec()), &cfg).unwrap();
    let mut held = 0;
    for k in 0..9 {
        let lam = -2.0 + 0.5 * k as f64;
        let c = check_inequality_on_samples(&ev, &samples, &eq(lam), 1.0 + lam.abs() + 0.1, None, cfg.tol);
        if c.verdict == Verdict::Holds {
            held += 1;
        } else {
            o.check(false, format!("inequality at lambda={lam}"));
        }
    }
    o.note(format!("inequality holds for {held}/9 multipliers"));
    o
}

fn oracle_equivalence() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cases: [(&str, AugmentingFunction); 5] = [
        ("SYN-QP", AugmentingFunction::HalfSquaredNorm),
        ("SYN-CIRCLE", AugmentingFunction::HalfSquaredNorm),
        ("SYN-DISK", AugmentingFunction::HalfSquaredNorm),
        ("P11", AugmentingFunction::Norm),
        ("P13", AugmentingFunction::Norm),
    ];
    for (id, sigma) in cases {
        let closed = evaluator(id, sigma).with_mode(EvaluatorMode::ClosedForm).unwrap();
        let generic = evaluator(id, sigma).with_mode(EvaluatorMode::GenericInnerInf).unwrap();
        let c = &closed.spec().constraints;
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lam = MultiplierVector::nlp(
                (0..c.n_eq()).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                (0..c.n_ineq()).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            );
            let r = rng.gen_range(0.1..10.0);
            let a = closed.eval_lagrangian(&x, &lam, r).unwrap().to_f64();
            let b = generic.eval_lagrangian(&x, &lam, r).unwrap().to_f64();
            worst = worst.max((a - b).abs());
        }
        o.check(worst <= 1e-6, id);
        o.note(format!("{id} max diff {worst:.1e}"));
    }
    o
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let mut a = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-3.0..3.0);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

fn linear_algebra() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut proj, mut penrose, mut tr) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..100 {
        let n = 2 + k % 5;
        let a = random_sym(&mut rng, n);
        let am = DMatrix::from_row_slice(n, n, a.as_slice());
        let e = am.clone().symmetric_eigen();
        let clip = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0))) * e.eigenvectors.transpose();
        let p = DMatrix::from_row_slice(n, n, psd_project(&a).unwrap().as_slice());
        proj = proj.max((p - clip).amax());
        let pm = DMatrix::from_row_slice(n, n, pinv(&a, None).unwrap().as_slice());
        penrose = penrose
            .max((&am * &pm * &am - &am).amax())
            .max((&pm * &am * &pm - &pm).amax())
            .max({
                let ap = &am * &pm;
                (&ap - ap.transpose()).amax()
            })
            .max({
                let pa = &pm * &am;
                (&pa - pa.transpose()).amax()
            });
        let want: f64 = e.eigenvalues.iter().map(|l| l.max(0.0).powi(2)).sum();
        tr = tr.max((trace_psd_part_sq(&a).unwrap() - want).abs());
    }
    o.check(proj <= 1e-10, "projection");
    o.check(penrose <= 1e-8, "pseudoinverse");
    o.check(tr <= 1e-10, "trace");
    o.note(format!("projection {proj:.1e}, Penrose {penrose:.1e}, trace {tr:.1e}"));
    o
}

fn sweep_multiplier(id: &str, rng: &mut ChaCha8Rng) -> MultiplierVector {
    let spec = catalog::get(id).unwrap().spec;
    let c = &spec.constraints;
    let mut lam = MultiplierVector::nlp(
        (0..c.n_eq()).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        (0..c.n_ineq()).map(|_| rng.gen_range(-3.0..3.0)).collect(),
    );
    if let Some(n) = c.sdp_order() {
        lam.mu = Some(random_sym(rng, n));
    }
    lam
}

/// A feasible point of each catalog problem from a random seed pair.
fn sweep_feasible(id: &str, s: f64, t: f64) -> Vec<f64> {
    match id {
        "P11" | "P13" => vec![s, 0.0],
        "P12" | "SDP-TOY" => vec![-s.abs()],
        "SYN-QP" => vec![s, 2.0 - s - t.abs()],
        "SYN-CIRCLE" => {
            let th = std::f64::consts::PI * (1.0 + 0.25 * (s.abs() / 5.0).min(1.0));
            vec![2f64.sqrt() * th.cos(), 2f64.sqrt() * th.sin()]
        }
        "SYN-DISK" => {
            let rad = 2.0 * (s.abs() / 5.0).min(1.0);
            vec![rad * t.cos(), rad * t.sin()]
        }
        other => panic!("no feasible generator for {other}"),
    }
}

fn property_sweeps() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut assertions = 0usize;
    let mut cfg = CertConfig::default();
    cfg.search.starts = 8;
    for entry in catalog::all() {
        let id = entry.id.as_str();
        let ev = LagrangianEvaluator::new(Arc::new(entry.spec.clone()), entry.default_sigma);
        let spec = ev.spec();
        let dim = spec.dim;
        let zero = spec.constraints.zero_multiplier();
        for _ in 0..60 {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let lam = sweep_multiplier(id, &mut rng);
            let (r1, r2): (f64, f64) = (rng.gen_range(0.01..10.0), rng.gen_range(0.01..10.0));
            let (r1, r2) = (r1.min(r2), r1.max(r2));
            let l1 = ev.eval_lagrangian(&x, &lam, r1).unwrap().to_f64();
            let l2 = ev.eval_lagrangian(&x, &lam, r2).unwrap().to_f64();
            o.check(l1 == l2 || l1 <= l2 + 1e-9 * (1.0 + l2.abs()), format!("{id} monotone in r at {x:?}"));

            let feas = sweep_feasible(id, rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let lf = ev.eval_lagrangian(&feas, &lam, r1).unwrap().to_f64();
            let f = spec.objective.eval(&feas);
            o.check(lf <= f + 1e-9 * (1.0 + f.abs()), format!("{id} L <= f at {feas:?}"));

            let pen = ev.eval_penalty_f(&x, r1, PenaltyRestriction::WholeP).unwrap().to_f64();
            let l0 = ev.eval_lagrangian(&x, &zero, r1).unwrap().to_f64();
            o.check(pen == l0 || (pen - l0).abs() <= 1e-9 * (1.0 + l0.abs()), format!("{id} F = L(.,0) at {x:?}"));

            let phi = penalty_term_phi(spec, &x).unwrap();
            let infeasible = feasibility_residual(spec, &x).unwrap() > 1e-12;
            o.check((phi > 0.0) == infeasible, format!("{id} phi sign at {x:?}"));
            o.check(penalty_term_phi(spec, &feas).unwrap() <= 1e-12, format!("{id} phi zero at {feas:?}"));
            assertions += 5;
        }
        let f_star = spec.f_star().unwrap();
        for _ in 0..4 {
            let lam = sweep_multiplier(id, &mut rng);
            let r = rng.gen_range(0.1..5.0);
            let psi = dual_value_psi(&ev, &lam, r, &cfg).unwrap().value.to_f64();
            o.check(psi <= f_star + 1e-6, format!("{id} weak duality at r={r}"));
            assertions += 1;
        }
    }
    o.check(assertions >= 1000, "assertion count");
    o.note(format!("{assertions} assertions, {} violations", o.failed_cases.len()));
    o
}

fn localization_agreement() -> Outcome {
    let mut o = Outcome::new();
    let mut n = 0;
    for entry in catalog::all() {
        let ev = LagrangianEvaluator::new(Arc::new(entry.spec.clone()), entry.default_sigma);
        for lam in &entry.test_multipliers {
            let v = localization_verdict(&ev, lam, &LocalizationOptions::default()).unwrap();
            let ok = v.conclusion != Conclusion::Inconclusive && v.agrees_with_cross_check();
            o.check(ok, format!("{} at {:?}: {:?} vs {:?}", entry.id, lam.to_flat(), v.conclusion, v.cross_check.verdict));
            n += 1;
        }
    }
    o.note(format!("{n} (problem, multiplier) pairs, {} mismatches", o.failed_cases.len()));
    o
}

fn sdp_toy() -> Outcome {
    let mut o = Outcome::new();
    let entry = catalog::get("SDP-TOY").unwrap();
    let ev = LagrangianEvaluator::new(Arc::new(entry.spec.clone()), AugmentingFunction::HalfSquaredNorm);
    let zero = MultiplierVector { eq: vec![], ineq: vec![], mu: Some(SymMatrix::zeros(2)) };
    // G(0.5) = diag(0.5, -0.5); with mu = 0, r = 1: -x + Tr([G]_+^2)/2 = -0.5 + 0.125.
    let want = -0.5 + 0.5 * 0.25;
    let got = ev.eval_lagrangian(&[0.5], &zero, 1.0).unwrap().to_f64();
    o.check((got - want).abs() <= 1e-9, "value at x=0.5");
    o.note(format!("L(0.5, 0, 1) = {got}"));
    let star = MultiplierVector { eq: vec![], ineq: vec![], mu: Some(SymMatrix::from_diag(&[1.0, 0.0])) };
    let k = kkt_check(ev.spec(), &[0.0], &star, 1e-8).unwrap();
    o.check(k.is_kkt, "kkt at x*=0");
    let v = localization_verdict(&ev, &star, &LocalizationOptions::default()).unwrap();
    o.check(v.conclusion == Conclusion::GlobalALM && v.cross_check.verdict == Verdict::Holds, "localization");
    o.note(format!("KKT {}, localization {:?}, cross-check {:?}", k.is_kkt, v.conclusion, v.cross_check.verdict));
    o
}

#[test]
fn acceptance_criteria() {
    type Criterion = fn() -> Outcome;
    let criteria: [(usize, &str, Criterion, Option<f64>); 10] = [
        (1, "P11 sharp penalty parameter", p11_sharp_parameter, Some(10.0)),
        (2, "P13 proximal multiplier", p13_proximal, Some(30.0)),
        (3, "P13 with sigma = |p|^2.5", p13_higher_power, None),
        (4, "P12 local versus global", p12_dichotomy, None),
        (5, "P11 penalty and inequality sampling", p11_sampling, None),
        (6, "closed form versus inner infimum", oracle_equivalence, None),
        (7, "linear algebra kernels", linear_algebra, None),
        (8, "property sweeps", property_sweeps, None),
        (9, "localization agrees with direct check", localization_agreement, None),
        (10, "SDP toy problem", sdp_toy, Some(20.0)),
    ];
    let mut fatal = vec![];
    let mut out = std::io::stdout().lock();
    for (n, name, run, limit) in criteria {
        let start = Instant::now();
        let mut o = run();
        let secs = start.elapsed().as_secs_f64();
        if let Some(l) = limit {
            o.check(secs <= l, format!("runtime {secs:.1}s over {l}s"));
        }
        let tolerated = !o.pass
            && o.failed_cases
                .iter()
                .all(|c| KNOWN_DEVIATIONS.iter().any(|(k, case)| *k == n && c == case));
        let status = if o.pass { "PASS" } else { "FAIL" };
        writeln!(out, "criterion {n:>2} {status}: {name} ({secs:.2}s) {}", o.detail).unwrap();
        if !o.pass {
            let tag = if tolerated { "known deviation" } else { "failed" };
            writeln!(out, "             {tag}: {}", o.failed_cases.join(", ")).unwrap();
        }
        if !o.pass && !tolerated {
            fatal.push(n);
        }
    }
    out.flush().unwrap();
    assert!(fatal.is_empty(), "criteria failed: {fatal:?}");
}
