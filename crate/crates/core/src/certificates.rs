//! Numerical certificates for augmented Lagrange multipliers.
//!
//! Every check is one-sided. A `Fails` verdict carries a witness (a
//! perturbation, a point, or a curvature direction) with a negative margin;
//! `Holds` only means no violation was found at the recorded resolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{
    AugmentingFunction, ExtendedValue, LagrangianEvaluator, MultiplierVector, PenaltyRestriction,
};
use crate::linalg::{null_space, pd_on_subspace, SymMatrix};
use crate::problem::{feasibility_residual, FeasibleRegion, ProblemSpec};
use crate::search::{global_min, ordered_map, SearchConfig, SearchResult, SearchStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Property {
    /// `v(p) >= v(0) + <lambda, p> - r sigma(p)` for all `p`.
    GlobalInequality,
    /// The same inequality near `p = 0` plus boundedness of `L` below.
    NeighborhoodInequality,
    /// `inf_x L(x, lambda, r) = f*`.
    ExactRepresentation,
    SaddlePoint,
    ArgminCoincidence,
    PenaltyExact,
    Calmness,
    LocalMultiplier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Inconclusive,
    Fails,
}

impl Verdict {
    /// Combines verdicts with precedence `Fails > Inconclusive > Holds`.
    pub fn worst(self, other: Verdict) -> Verdict {
        self.max(other)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WitnessKind {
    Perturbation,
    Point,
    CurvatureDirection,
    Multiplier,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub kind: WitnessKind,
    pub point: Vec<f64>,
    /// Negative for violations.
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ExtendedValue>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertParams {
    pub lambda: Option<MultiplierVector>,
    pub r: Option<f64>,
    pub sigma: AugmentingFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restriction: Option<PenaltyRestriction>,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub problem: String,
    pub property: Property,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub params: CertParams,
    /// Smallest margin observed over the tested set.
    pub min_margin: Option<f64>,
    /// Parameter estimate attached by threshold searches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    pub resolution: String,
    pub grid_based: bool,
    pub notes: Vec<String>,
}

impl Certificate {
    fn new(ev: &LagrangianEvaluator, property: Property, lam: Option<&MultiplierVector>, r: Option<f64>, tol: f64) -> Self {
        Certificate {
            problem: ev.spec().id.clone(),
            property,
            verdict: Verdict::Inconclusive,
            witness: None,
            params: CertParams {
                lambda: lam.cloned(),
                r,
                sigma: ev.sigma(),
                restriction: None,
                tol,
            },
            min_margin: None,
            estimate: None,
            resolution: String::new(),
            grid_based: false,
            notes: Vec::new(),
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    pub fn fails(&self) -> bool {
        self.verdict == Verdict::Fails
    }
}

pub const GRID_CAVEAT: &str = "grid-based: no violation found at the stated resolution; not a proof";

/// Tolerances and budgets shared by the certificate routines.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertConfig {
    pub tol: f64,
    pub r_tol: f64,
    pub r_cap: f64,
    pub curvature_tol: f64,
    pub search: SearchConfig,
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig {
            tol: 1e-6,
            r_tol: 1e-3,
            r_cap: 65536.0,
            curvature_tol: 1e-9,
            search: SearchConfig::default(),
        }
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

/// Flat coordinates of the perturbation that the grids move along: all
/// functional constraints plus the diagonal of the semidefinite block.
fn free_axes(template: &MultiplierVector) -> Vec<usize> {
    let ne = template.eq.len();
    let ni = template.ineq.len();
    let mut axes: Vec<usize> = (0..ne + ni).collect();
    if let Some(mu) = &template.mu {
        let m = mu.order();
        let mut off = ne + ni;
        for i in 0..m {
            axes.push(off);
            off += m - i;
        }
    }
    axes
}

fn perturbation(template: &MultiplierVector, coords: &[(usize, f64)]) -> MultiplierVector {
    let mut flat = vec![0.0; template.flat_len()];
    for (i, v) in coords {
        flat[*i] = *v;
    }
    template.with_flat(&flat)
}

/// Default perturbation grid: 25 log-spaced magnitudes in `[1e-3, 10]`, both
/// signs, along every free axis, plus a 7-magnitude cross grid when there
/// are at most two axes.
pub fn default_perturbation_grid(spec: &ProblemSpec) -> Vec<MultiplierVector> {
    let template = spec.constraints.zero_multiplier();
    let axes = free_axes(&template);
    let mut pts = Vec::new();
    for &a in &axes {
        for m in logspace(1e-3, 10.0, 25) {
            for s in [1.0, -1.0] {
                pts.push(perturbation(&template, &[(a, s * m)]));
            }
        }
    }
    if axes.len() == 2 {
        let mags = logspace(1e-3, 10.0, 7);
        for &u in &mags {
            for &w in &mags {
                for (su, sw) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    pts.push(perturbation(&template, &[(axes[0], su * u), (axes[1], sw * w)]));
                }
            }
        }
    }
    pts
}

/// Optimal values `v(p)` on a perturbation grid, computed once and reused for
/// many `(lambda, r)` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueSamples {
    pub v0: f64,
    pub samples: Vec<(MultiplierVector, ExtendedValue)>,
}

fn optimal_value(ev: &LagrangianEvaluator, cfg: &CertConfig) -> Result<f64> {
    if let Some(f) = ev.spec().f_star() {
        return Ok(f);
    }
    let zero = ev.spec().constraints.zero_multiplier();
    let v = ev.value_function_v(&zero, &cfg.search)?;
    v.value
        .finite()
        .ok_or_else(|| Error::InvalidProblem(format!("optimal value is {}", v.value)))
}

pub fn sample_value_function(ev: &LagrangianEvaluator, grid: &[MultiplierVector], cfg: &CertConfig) -> Result<ValueSamples> {
    let v0 = optimal_value(ev, cfg)?;
    let search = cfg.search.clone().with_extra_starts(ev.spec().global_solutions().to_vec());
    let values = ordered_map(grid, cfg.search.execution, |p| ev.value_function_v(p, &search));
    let mut samples = Vec::with_capacity(grid.len());
    for (p, v) in grid.iter().zip(values) {
        samples.push((p.clone(), v?.value));
    }
    Ok(ValueSamples { v0, samples })
}

/// Checks `v(p) >= v(0) + <lambda, p> - r sigma(p)` on precomputed samples,
/// optionally only for `||p|| < radius`.
pub fn check_inequality_on_samples(
    ev: &LagrangianEvaluator,
    samples: &ValueSamples,
    lam: &MultiplierVector,
    r: f64,
    radius: Option<f64>,
    tol: f64,
) -> Certificate {
    let property = if radius.is_some() {
        Property::NeighborhoodInequality
    } else {
        Property::GlobalInequality
    };
    let mut cert = Certificate::new(ev, property, Some(lam), Some(r), tol);
    cert.grid_based = true;
    let mut worst: Option<(f64, &MultiplierVector, ExtendedValue)> = None;
    let mut used = 0;
    for (p, v) in &samples.samples {
        if let Some(rad) = radius {
            if p.norm() >= rad {
                continue;
            }
        }
        used += 1;
        let margin = match v {
            ExtendedValue::PosInf => continue,
            ExtendedValue::NegInf => f64::NEG_INFINITY,
            ExtendedValue::Finite(val) => val - samples.v0 - lam.dot(p) + r * ev.sigma().value(p),
        };
        if worst.as_ref().is_none_or(|(m, _, _)| margin < *m) {
            worst = Some((margin, p, *v));
        }
    }
    cert.resolution = format!(
        "{used} perturbations (log-spaced magnitudes 1e-3..10 per axis, both signs{})",
        radius.map_or(String::new(), |r| format!(", restricted to ||p|| < {r}"))
    );
    match worst {
        None => {
            cert.verdict = Verdict::Holds;
            cert.notes.push("every sampled perturbation is infeasible; inequality holds vacuously".into());
        }
        Some((m, p, v)) => {
            cert.min_margin = Some(m);
            if m < -tol {
                cert.verdict = Verdict::Fails;
                cert.witness = Some(Witness {
                    kind: WitnessKind::Perturbation,
                    point: p.to_flat(),
                    margin: m,
                    value: Some(v),
                });
            } else {
                cert.verdict = Verdict::Holds;
                cert.notes.push(GRID_CAVEAT.into());
            }
        }
    }
    cert
}

/// Grid check of the global multiplier inequality.
pub fn verify_multiplier_inequality(
    ev: &LagrangianEvaluator,
    lam: &MultiplierVector,
    r: f64,
    cfg: &CertConfig,
) -> Result<Certificate> {
    ev.spec().constraints.check_multiplier(lam)?;
    let grid = default_perturbation_grid(ev.spec());
    let samples = sample_value_function(ev, &grid, cfg)?;
    Ok(check_inequality_on_samples(ev, &samples, lam, r, None, cfg.tol))
}

/// Minimizes `L(., lambda, r)` over the region, seeding the known solutions.
pub fn minimize_lagrangian(ev: &LagrangianEvaluator, lam: &MultiplierVector, r: f64, search: &SearchConfig) -> Result<SearchResult> {
    ev.spec().constraints.check_multiplier(lam)?;
    // Surface configuration errors before searching.
    let probe = ev.spec().global_solutions().first().cloned().unwrap_or_else(|| vec![0.0; ev.spec().dim]);
    let probe = ev.spec().region.project(&probe);
    ev.eval_lagrangian(&probe, lam, r)?;
    let cfg = search.clone().with_extra_starts(ev.spec().global_solutions().to_vec());
    let obj = |x: &[f64]| ev.eval_lagrangian(x, lam, r).unwrap_or(ExtendedValue::PosInf);
    Ok(global_min(obj, ev.spec().dim, &ev.spec().region, &cfg))
}

/// Neighborhood variant: the inequality for `||p|| < rho` together with
/// boundedness of `L(., lambda, r)` below on the region.
pub fn verify_neighborhood(
    ev: &LagrangianEvaluator,
    lam: &MultiplierVector,
    r: f64,
    rho: f64,
    cfg: &CertConfig,
) -> Result<Certificate> {
    ev.spec().constraints.check_multiplier(lam)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("neighborhood radius must be positive, got {rho}")));
    }
    let bound = minimize_lagrangian(ev, lam, r, &cfg.search)?;
    if bound.status == SearchStatus::DivergingBelow || bound.best_value.is_neg_inf() {
        let mut cert = Certificate::new(ev, Property::NeighborhoodInequality, Some(lam), Some(r), cfg.tol);
        cert.verdict = Verdict::Fails;
        cert.witness = Some(Witness {
            kind: WitnessKind::Point,
            point: bound.best_x.clone(),
            margin: f64::NEG_INFINITY,
            value: Some(bound.best_value),
        });
        cert.resolution = format!("bound probe: {} evaluations", bound.evaluations);
        cert.notes.push("augmented Lagrangian is unbounded below on the region".into());
        return Ok(cert);
    }
    let grid = default_perturbation_grid(ev.spec());
    let grid: Vec<MultiplierVector> = grid.into_iter().filter(|p| p.norm() < rho).collect();
    let samples = sample_value_function(ev, &grid, cfg)?;
    let mut cert = check_inequality_on_samples(ev, &samples, lam, r, Some(rho), cfg.tol);
    cert.notes.push(format!(
        "bound probe: inf L >= {} ({:?})",
        bound.best_value, bound.status
    ));
    Ok(cert)
}

/// Outcome of the second-order probe at a known solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureProbe {
    pub point: Vec<f64>,
    pub gradient_norm: f64,
    pub min_eigenvalue: f64,
    pub direction: Vec<f64>,
    pub subspace_dim: usize,
}

impl CurvatureProbe {
    pub fn violated(&self, grad_tol: f64, curvature_tol: f64) -> bool {
        self.gradient_norm > grad_tol || self.min_eigenvalue < -curvature_tol
    }
}

fn strictly_interior(region: &FeasibleRegion, x: &[f64]) -> bool {
    match region {
        FeasibleRegion::WholeSpace => true,
        FeasibleRegion::Box { lower, upper } => x
            .iter()
            .zip(lower.iter().zip(upper))
            .all(|(v, (l, u))| *v > l + 1e-9 && *v < u - 1e-9),
        FeasibleRegion::Ball { center, radius } => {
            let d: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
            d.sqrt() < radius - 1e-9
        }
    }
}

/// Gradient and Hessian of `L(., lambda, r)` at a feasible point where the
/// augmented Lagrangian is twice differentiable, tested for a descent or
/// negative-curvature direction. Returns `None` when the structure does not
/// allow an analytic expansion (kinked objective, semidefinite block, sharp
/// or lower-order `sigma`, boundary points, degenerate complementarity).
pub fn curvature_probe(ev: &LagrangianEvaluator, lam: &MultiplierVector, r: f64, x: &[f64]) -> Option<CurvatureProbe> {
    let spec = ev.spec();
    let c = &spec.constraints;
    if c.sdp.is_some() || !spec.objective.has_hessian() || !strictly_interior(&spec.region, x) {
        return None;
    }
    let d = spec.dim;
    let sigma = ev.sigma();
    // Constraints whose expansion is that of an equality.
    let mut active: Vec<(f64, &crate::problem::ScalarField)> =
        lam.eq.iter().copied().zip(c.equalities.iter()).collect();
    for (l, g) in lam.ineq.iter().zip(&c.inequalities) {
        let v = g.eval(x);
        if v.abs() <= 1e-10 && *l > 1e-8 {
            active.push((*l, g));
        } else if v < -1e-8 && *l == 0.0 {
            continue;
        } else {
            return None;
        }
    }
    if !c.inequalities.is_empty() && sigma != AugmentingFunction::HalfSquaredNorm {
        return None;
    }
    let (extra_jtj, restrict) = match sigma {
        AugmentingFunction::HalfSquaredNorm => (r, false),
        AugmentingFunction::PowerBeta(b) if b > 2.0 => (0.0, false),
        AugmentingFunction::PowerBeta(b) if b == 2.0 => (2.0 * r, false),
        AugmentingFunction::PowerBeta(_) => (0.0, true),
        _ => return None,
    };
    let mut grad = spec.objective.gradient(x).ok()?;
    let mut hess = spec.objective.hessian(x).ok()?;
    let mut jac = Vec::new();
    for (l, g) in &active {
        if g.eval(x).abs() > 1e-10 || !g.has_hessian() {
            return None;
        }
        let gg = g.gradient(x).ok()?;
        let gh = g.hessian(x).ok()?;
        for (a, b) in grad.iter_mut().zip(&gg) {
            *a += l * b;
        }
        hess = hess.add(&gh.scale(*l)).add(&SymMatrix::outer(&gg).scale(extra_jtj));
        jac.push(gg);
    }
    let basis = if restrict && !jac.is_empty() {
        null_space(&jac, d).ok()?
    } else {
        (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect()
    };
    let gnorm = crate::linalg::norm(&grad);
    let def = pd_on_subspace(&hess, &basis, 0.0).ok()?;
    let direction = if gnorm > 0.0 && def.min_eigenvalue >= 0.0 {
        grad.iter().map(|v| -v / gnorm).collect()
    } else {
        def.min_direction.clone().unwrap_or_else(|| vec![0.0; d])
    };
    Some(CurvatureProbe {
        point: x.to_vec(),
        gradient_norm: gnorm,
        min_eigenvalue: if basis.is_empty() { f64::INFINITY } else { def.min_eigenvalue },
        direction,
        subspace_dim: def.reduced_dim,
    })
}

const GRAD_TOL: f64 = 1e-6;

/// `inf_x L(x, lambda, r) = f*`, by global search plus the curvature probe
/// at every known solution.
pub fn exact_representation_check(
    ev: &LagrangianEvaluator,
    lam: &MultiplierVector,
    r: f64,
    cfg: &CertConfig,
) -> Result<Certificate> {
    let f_star = optimal_value(ev, cfg)?;
    let res = minimize_lagrangian(ev, lam, r, &cfg.search)?;
    let mut cert = Certificate::new(ev, Property::ExactRepresentation, Some(lam), Some(r), cfg.tol);
    cert.resolution = format!(
        "multistart pattern search: {} starts, {} evaluations, status {:?}",
        cfg.search.starts, res.evaluations, res.status
    );
    let best = res.best_value;
    cert.min_margin = Some(best.to_f64() - f_star);
    cert.notes.push(format!("inf L found = {best}, f* = {f_star}"));
    let point_witness = |margin: f64| Witness {
        kind: WitnessKind::Point,
        point: res.best_x.clone(),
        margin,
        value: Some(best),
    };
    if res.status == SearchStatus::DivergingBelow || best.is_neg_inf() {
        cert.verdict = Verdict::Fails;
        cert.witness = Some(point_witness(f64::NEG_INFINITY));
        cert.min_margin = Some(f64::NEG_INFINITY);
        cert.notes.push("augmented Lagrangian diverges to -inf".into());
        return Ok(cert);
    }
    if best.to_f64() < f_star - cfg.tol {
        cert.verdict = Verdict::Fails;
        cert.witness = Some(point_witness(best.to_f64() - f_star));
        return Ok(cert);
    }
    for x in ev.spec().global_solutions() {
        let Ok(lx) = ev.eval_lagrangian(x, lam, r) else { continue };
        if (lx.to_f64() - f_star).abs() > cfg.tol {
            continue;
        }
        if let Some(probe) = curvature_probe(ev, lam, r, x) {
            if probe.violated(GRAD_TOL, cfg.curvature_tol) {
                cert.verdict = Verdict::Fails;
                let margin = if probe.gradient_norm > GRAD_TOL {
                    -probe.gradient_norm
                } else {
                    probe.min_eigenvalue
                };
                cert.witness = Some(Witness {
                    kind: WitnessKind::CurvatureDirection,
                    point: probe.direction.clone(),
                    margin,
                    value: Some(lx),
                });
                cert.min_margin = Some(margin);
                cert.notes.push(format!(
                    "second-order probe at {:?}: gradient norm {:.3e}, min curvature {:.6e}; L drops below f* arbitrarily close to this solution",
                    x, probe.gradient_norm, probe.min_eigenvalue
                ));
                return Ok(cert);
            }
            cert.notes.push(format!(
                "second-order probe at {:?}: min curvature {:.6e} on a {}-dimensional subspace",
                x, probe.min_eigenvalue, probe.subspace_dim
            ));
        }
    }
    if res.status == SearchStatus::BudgetExhausted {
        cert.verdict = Verdict::Inconclusive;
        cert.notes.push("search budget exhausted".into());
        return Ok(cert);
    }
    if (best.to_f64() - f_star).abs() <= cfg.tol {
        cert.verdict = Verdict::Holds;
        cert.notes.push("search-based: no point with L < f* - tol found".into());
    } else {
        cert.verdict = Verdict::Inconclusive;
        cert.notes.push("search did not reach f*".into());
    }
    Ok(cert)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdStatus {
    Bracketed,
    HoldsAtLowerEnd,
    NotReachedByCap,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub status: ThresholdStatus,
    pub lower: f64,
    pub upper: f64,
    pub checks: usize,
}

/// Smallest `r` in `[lo, cap]` where the monotone predicate turns true, to
/// within `tol`: doubling from `hi` then bisection.
pub fn threshold_bisection(
    lo: f64,
    hi: f64,
    cap: f64,
    tol: f64,
    mut pred: impl FnMut(f64) -> Result<bool>,
) -> Result<ThresholdSearch> {
    let mut checks = 1;
    if pred(lo)? {
        return Ok(ThresholdSearch {
            status: ThresholdStatus::HoldsAtLowerEnd,
            lower: lo,
            upper: lo,
            checks,
        });
    }
    let mut lo = lo;
    let mut hi = hi.max(lo + tol).min(cap);
    loop {
        checks += 1;
        if pred(hi)? {
            break;
        }
        if hi >= cap {
            return Ok(ThresholdSearch {
                status: ThresholdStatus::NotReachedByCap,
                lower: hi,
                upper: f64::INFINITY,
                checks,
            });
        }
        lo = hi;
        hi = (hi * 2.0).min(cap);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        checks += 1;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ThresholdSearch {
        status: ThresholdStatus::Bracketed,
        lower: lo,
        upper: hi,
        checks,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RLambdaEstimate {
    pub lambda: MultiplierVector,
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
    pub method: String,
    pub status: ThresholdStatus,
    /// Verdicts re-run at `lower - tol` and at `upper`.
    pub recertified: Option<(Verdict, Verdict)>,
    pub checks: usize,
}

impl RLambdaEstimate {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Least exact penalty parameter of `lambda`, bracketed by bisection on the
/// exact-representation verdict.
pub fn estimate_r_lambda(
    ev: &LagrangianEvaluator,
    lam: &MultiplierVector,
    r_lo: Option<f64>,
    r_hi: Option<f64>,
    cfg: &CertConfig,
) -> Result<RLambdaEstimate> {
    ev.spec().constraints.check_multiplier(lam)?;
    let lo = r_lo.unwrap_or(if ev.spec().constraints.sdp.is_some() { 1e-9 } else { 0.0 });
    let hi = r_hi.unwrap_or(1.0);
    let verdict = |r: f64| -> Result<Verdict> {
        match exact_representation_check(ev, lam, r, cfg) {
            Ok(c) => Ok(c.verdict),
            Err(Error::InvalidParameter(_)) => Ok(Verdict::Inconclusive),
            Err(e) => Err(e),
        }
    };
    let t = threshold_bisection(lo, hi, cfg.r_cap, cfg.r_tol, |r| Ok(verdict(r)? == Verdict::Holds))?;
    let recertified = if t.status == ThresholdStatus::Bracketed {
        let below = (t.lower - cfg.r_tol).max(0.0);
        Some((verdict(below)?, verdict(t.upper)?))
    } else {
        None
    };
    Ok(RLambdaEstimate {
        lambda: lam.clone(),
        lower: t.lower,
        upper: t.upper,
        tol: cfg.r_tol,
        method: "Bisection".into(),
        status: t.status,
        recertified,
        checks: t.checks,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualValue {
    pub value: ExtendedValue,
    pub search: SearchResult,
}

/// `psi(lambda, r) = inf_x L(x, lambda, r)`.
pub fn dual_value_psi(ev: &LagrangianEvaluator, lam: &MultiplierVector, r: f64, cfg: &CertConfig) -> Result<DualValue> {
    let res = minimize_lagrangian(ev, lam, r, &cfg.search)?;
    let value = if res.status == SearchStatus::DivergingBelow {
        ExtendedValue::NegInf
    } else {
        res.best_value
    };
    Ok(DualValue { value, search: res })
}

fn multiplier_grid(center: &MultiplierVector, half: f64, n: usize) -> Vec<MultiplierVector> {
    let flat = center.to_flat();
    let k = flat.len();
    let ticks: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect();
    let mut out = Vec::new();
    if k == 0 {
        return vec![center.clone()];
    }
    if k <= 2 {
        let t1: Vec<f64> = if k == 2 { ticks.clone() } else { vec![0.0] };
        for &a in &ticks {
            for &b in &t1 {
                let mut f = flat.clone();
                f[0] += a;
                if k == 2 {
                    f[1] += b;
                }
                out.push(center.with_flat(&f));
            }
        }
    } else {
        for i in 0..k {
            for &a in &ticks {
                let mut f = flat.clone();
                f[i] += a;
                out.push(center.with_flat(&f));
            }
        }
    }
    out
}

/// Saddle point test at `(x*, lambda*)`: (a) `lambda*` maximizes
/// `L(x*, ., r)` over a box grid, (b) `x*` minimizes `L(., lambda*, r)`,
/// (c) `L(x*, lambda*, r) = f(x*)`.
pub fn saddle_point_check(
    ev: &LagrangianEvaluator,
    x_star: &[f64],
    lam_star: &MultiplierVector,
    r: f64,
    cfg: &CertConfig,
) -> Result<Certificate> {
    let spec = ev.spec();
    let res = feasibility_residual(spec, x_star)?;
    if res > 1e-8 {
        return Err(Error::InvalidParameter(format!("x* is infeasible (residual {res:e})")));
    }
    let mut cert = Certificate::new(ev, Property::SaddlePoint, Some(lam_star), Some(r), cfg.tol);
    cert.grid_based = true;
    let l_star = ev.eval_lagrangian(x_star, lam_star, r)?;
    let fx = spec.objective.eval(x_star);
    let grid = multiplier_grid(lam_star, 5.0, 21);
    let mut sup_margin = f64::INFINITY;
    let mut sup_witness = None;
    for lam in &grid {
        let v = ev.eval_lagrangian(x_star, lam, r)?;
        let m = l_star.to_f64() - v.to_f64();
        if m < sup_margin {
            sup_margin = m;
            sup_witness = Some(lam.to_flat());
        }
    }
    let inf = minimize_lagrangian(ev, lam_star, r, &cfg.search)?;
    let mut inf_margin = if inf.status == SearchStatus::DivergingBelow {
        f64::NEG_INFINITY
    } else {
        inf.best_value.to_f64() - l_star.to_f64()
    };
    let mut inf_witness = Witness {
        kind: WitnessKind::Point,
        point: inf.best_x.clone(),
        margin: inf_margin,
        value: Some(inf.best_value),
    };
    if inf_margin >= -cfg.tol {
        if let Some(p) = curvature_probe(ev, lam_star, r, x_star) {
            if p.violated(GRAD_TOL, cfg.curvature_tol) {
                inf_margin = if p.gradient_norm > GRAD_TOL { -p.gradient_norm } else { p.min_eigenvalue };
                inf_witness = Witness {
                    kind: WitnessKind::CurvatureDirection,
                    point: p.direction,
                    margin: inf_margin,
                    value: Some(l_star),
                };
            }
        }
    }
    let gap = (l_star.to_f64() - fx).abs();
    cert.resolution = format!(
        "{} multipliers on [lambda*-5, lambda*+5] (21 ticks per axis); inner search {} evaluations",
        grid.len(),
        inf.evaluations
    );
    cert.min_margin = Some(sup_margin.min(inf_margin).min(-gap));
    cert.notes.push(format!("(a) sup-side margin {sup_margin:.3e}"));
    cert.notes.push(format!("(b) inf-side margin {inf_margin:.3e}"));
    cert.notes.push(format!("(c) |L(x*,lambda*,r) - f(x*)| = {gap:.3e}"));
    if sup_margin < -cfg.tol {
        cert.verdict = Verdict::Fails;
        cert.witness = Some(Witness {
            kind: WitnessKind::Multiplier,
            point: sup_witness.unwrap_or_default(),
            margin: sup_margin,
            value: None,
        });
        cert.notes.push("fails part (a)".into());
    } else if inf_margin < -cfg.tol {
        cert.verdict = Verdict::Fails;
        cert.witness = Some(inf_witness);
        cert.notes.push("fails part (b)".into());
    } else if gap > cfg.tol {
        cert.verdict = Verdict::Fails;
        cert.witness = Some(Witness {
            kind: WitnessKind::Point,
            point: x_star.to_vec(),
            margin: -gap,
            value: Some(l_star),
        });
        cert.notes.push("fails part (c)".into());
    } else if inf.status == SearchStatus::BudgetExhausted {
        cert.verdict = Verdict::Inconclusive;
        cert.notes.push("search budget exhausted".into());
    } else {
        cert.verdict = Verdict::Holds;
        cert.notes.push(GRID_CAVEAT.into());
    }
    Ok(cert)
}

/// Whether the minimizers of `L(., lambda, r)` and of the problem coincide.
pub fn argmin_coincidence(ev: &LagrangianEvaluator, lam: &MultiplierVector, r: f64, cfg: &CertConfig) -> Result<Certificate> {
    let spec = ev.spec();
    let sols = spec.global_solutions();
    let f_star = spec
        .f_star()
        .ok_or_else(|| Error::InvalidProblem("argmin comparison needs known global solutions".into()))?;
    if sols.is_empty() {
        return Err(Error::InvalidProblem("argmin comparison needs known global solutions".into()));
    }
    let mut cert = Certificate::new(ev, Property::ArgminCoincidence, Some(lam), Some(r), cfg.tol);
    cert.grid_based = true;
    let res = minimize_lagrangian(ev, lam, r, &cfg.search)?;
    cert.resolution = format!("multistart pattern search, {} evaluations", res.evaluations);
    if res.status == SearchStatus::DivergingBelow || res.best_value.is_neg_inf() {
        cert.verdict = Verdict::Fails;
        cert.witness = Some(Witness {
            kind: WitnessKind::Point,
            point: res.best_x.clone(),
            margin: f64::NEG_INFINITY,
            value: Some(res.best_value),
        });
        cert.notes.push("infimum of L is not attained (diverges to -inf)".into());
        return Ok(cert);
    }
    let best = res.best_value.to_f64();
    let mut min_margin = f64::INFINITY;
    for x in sols {
        let lx = ev.eval_lagrangian(x, lam, r)?.to_f64();
        // x* must attain the infimum of L and keep L(x*) = f*.
        let margin = (best - lx).min(-(lx - f_star).abs());
        min_margin = min_margin.min(margin);
        if margin < -cfg.tol {
            cert.verdict = Verdict::Fails;
            cert.witness = Some(Witness {
                kind: WitnessKind::Point,
                point: if best < lx - cfg.tol { res.best_x.clone() } else { x.clone() },
                margin,
                value: Some(res.best_value),
            });
            cert.min_margin = Some(margin);
            cert.notes.push(format!("known solution {x:?} does not minimize L"));
            return Ok(cert);
        }
        if let Some(p) = curvature_probe(ev, lam, r, x) {
            if p.violated(GRAD_TOL, cfg.curvature_tol) {
                let margin = if p.gradient_norm > GRAD_TOL { -p.gradient_norm } else { p.min_eigenvalue };
                cert.verdict = Verdict::Fails;
                cert.witness = Some(Witness {
                    kind: WitnessKind::CurvatureDirection,
                    point: p.direction,
                    margin,
                    value: None,
                });
                cert.min_margin = Some(margin);
                cert.notes.push(format!("known solution {x:?} is not a local minimizer of L"));
                return Ok(cert);
            }
        }
    }
    cert.min_margin = Some(min_margin);
    let resid = feasibility_residual(spec, &res.best_x)?;
    let fx = spec.objective.eval(&res.best_x);
    if resid <= cfg.tol.max(1e-6) && (fx - f_star).abs() <= cfg.tol.max(1e-6) {
        cert.verdict = if res.status == SearchStatus::BudgetExhausted {
            Verdict::Inconclusive
        } else {
            Verdict::Holds
        };
        cert.notes.push(format!("minimizer of L found at {:?} is a solution", res.best_x));
        cert.notes.push(GRID_CAVEAT.into());
    } else {
        cert.verdict = Verdict::Inconclusive;
        cert.witness = Some(Witness {
            kind: WitnessKind::Point,
            point: res.best_x.clone(),
            margin: -resid,
            value: Some(res.best_value),
        });
        cert.notes.push(format!(
            "infimum of L reached at a point with residual {resid:.3e} and f = {fx}"
        ));
    }
    Ok(cert)
}

/// Least `r` with `inf_x F(x, r, C) >= f* - tol`; `Fails` when none exists
/// up to the cap.
pub fn penalty_exactness(ev: &LagrangianEvaluator, c: PenaltyRestriction, cfg: &CertConfig) -> Result<Certificate> {
    let spec = ev.spec();
    let f_star = optimal_value(ev, cfg)?;
    let search = cfg.search.clone().with_extra_starts(spec.global_solutions().to_vec());
    let mut last_fail: Option<SearchResult> = None;
    let t = threshold_bisection(0.0, 1.0, cfg.r_cap, cfg.r_tol, |r| {
        let obj = |x: &[f64]| ev.eval_penalty_f(x, r, c).unwrap_or(ExtendedValue::PosInf);
        let res = global_min(obj, spec.dim, &spec.region, &search);
        let ok = res.status != SearchStatus::DivergingBelow && res.best_value.to_f64() >= f_star - cfg.tol;
        if !ok {
            last_fail = Some(res);
        }
        Ok(ok)
    })?;
    let mut cert = Certificate::new(ev, Property::PenaltyExact, None, None, cfg.tol);
    cert.params.restriction = Some(c);
    cert.grid_based = true;
    cert.resolution = format!("{} threshold checks, r tolerance {}", t.checks, cfg.r_tol);
    match t.status {
        ThresholdStatus::NotReachedByCap => {
            cert.verdict = Verdict::Fails;
            if let Some(res) = last_fail {
                cert.witness = Some(Witness {
                    kind: WitnessKind::Point,
                    point: res.best_x.clone(),
                    margin: res.best_value.to_f64() - f_star,
                    value: Some(res.best_value),
                });
            }
            cert.notes.push(format!("not exact for any r up to {}", cfg.r_cap));
        }
        _ => {
            cert.verdict = Verdict::Holds;
            cert.estimate = Some(t.upper);
            cert.params.r = Some(t.upper);
            cert.notes.push(format!("threshold bracket [{}, {}]", t.lower, t.upper));
            cert.notes.push(GRID_CAVEAT.into());
        }
    }
    Ok(cert)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShellResult {
    pub radius: f64,
    pub min_ratio: f64,
    pub direction: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalmnessReport {
    pub problem: String,
    pub gamma: f64,
    pub shells: Vec<ShellResult>,
    /// Minimum over all shells; an upper bound on the true liminf.
    pub estimate: f64,
    pub caveat: String,
}

/// `(v(p) - v(0)) / ||p||^gamma` on shells `||p|| = 10^-k`, `k = 0..6`.
pub fn calmness_probe(ev: &LagrangianEvaluator, gamma: f64, cfg: &CertConfig) -> Result<CalmnessReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0,1], got {gamma}")));
    }
    let spec = ev.spec();
    let v0 = optimal_value(ev, cfg)?;
    let template = spec.constraints.zero_multiplier();
    let axes = free_axes(&template);
    let dirs: Vec<Vec<(usize, f64)>> = match axes.len() {
        0 => vec![],
        1 => vec![vec![(axes[0], 1.0)], vec![(axes[0], -1.0)]],
        2 => (0..8)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_4 * k as f64;
                vec![(axes[0], a.cos()), (axes[1], a.sin())]
            })
            .collect(),
        _ => axes.iter().flat_map(|&a| [vec![(a, 1.0)], vec![(a, -1.0)]]).collect(),
    };
    let search = cfg.search.clone().with_extra_starts(spec.global_solutions().to_vec());
    let mut shells = Vec::new();
    for k in 0..=6 {
        let radius = 10f64.powi(-k);
        let pts: Vec<MultiplierVector> = dirs
            .iter()
            .map(|d| {
                let scaled: Vec<(usize, f64)> = d.iter().map(|(i, v)| (*i, v * radius)).collect();
                perturbation(&template, &scaled)
            })
            .collect();
        let vals = ordered_map(&pts, cfg.search.execution, |p| ev.value_function_v(p, &search));
        let mut best = (f64::INFINITY, Vec::new());
        for (p, v) in pts.iter().zip(vals) {
            let v = v?.value;
            let ratio = match v {
                ExtendedValue::PosInf => continue,
                ExtendedValue::NegInf => f64::NEG_INFINITY,
                ExtendedValue::Finite(val) => (val - v0) / p.norm().powf(gamma),
            };
            if ratio < best.0 {
                best = (ratio, p.to_flat());
            }
        }
        shells.push(ShellResult {
            radius,
            min_ratio: best.0,
            direction: best.1,
        });
    }
    let estimate = shells.iter().map(|s| s.min_ratio).fold(f64::INFINITY, f64::min);
    Ok(CalmnessReport {
        problem: spec.id.clone(),
        gamma,
        shells,
        estimate,
        caveat: "running minimum over sampled shells; an upper bound on the true liminf".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::sync::Arc;

    fn ev(id: &str, sigma: AugmentingFunction) -> LagrangianEvaluator {
        LagrangianEvaluator::new(Arc::new(catalog::get(id).unwrap().spec), sigma)
    }

    fn eq(l: f64) -> MultiplierVector {
        MultiplierVector::nlp(vec![l], vec![])
    }

    fn ineq(l: f64) -> MultiplierVector {
        MultiplierVector::nlp(vec![], vec![l])
    }

    #[test]
    fn inequality_grid_on_p11() {
        let e = ev("P11", AugmentingFunction::Norm);
        let cfg = CertConfig::default();
        let grid = default_perturbation_grid(e.spec());
        assert_eq!(grid.len(), 50);
        let s = sample_value_function(&e, &grid, &cfg).unwrap();
        assert!(check_inequality_on_samples(&e, &s, &eq(0.0), 1.5, None, cfg.tol).holds());
        let c = check_inequality_on_samples(&e, &s, &eq(0.0), 0.5, None, cfg.tol);
        assert!(c.fails());
        let w = c.witness.unwrap();
        assert!(w.margin < 0.0 && w.point[0] != 0.0);
    }

    #[test]
    fn exact_representation_examples() {
        let cfg = CertConfig::default();
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        assert!(exact_representation_check(&p13, &eq(1.0), 3.0, &cfg).unwrap().holds());
        let p11 = ev("P11", AugmentingFunction::Norm);
        assert!(exact_representation_check(&p11, &eq(0.0), 2.0, &cfg).unwrap().holds());
        let p12 = ev("P12", AugmentingFunction::Norm);
        let c = exact_representation_check(&p12, &ineq(0.0), 5.0, &cfg).unwrap();
        assert!(c.fails());
        assert_eq!(c.witness.unwrap().margin, f64::NEG_INFINITY);
    }

    #[test]
    fn curvature_probe_on_p13() {
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        let p = curvature_probe(&p13, &eq(1.0), 1.5, &[0.0, 0.0]).unwrap();
        assert!((p.min_eigenvalue + 0.5).abs() < 1e-12);
        let p = curvature_probe(&p13, &eq(1.0), 3.0, &[0.0, 0.0]).unwrap();
        assert!((p.min_eigenvalue - 1.0).abs() < 1e-12);
        let high = p13.with_sigma(AugmentingFunction::PowerBeta(2.5));
        let p = curvature_probe(&high, &eq(1.0), 1e6, &[0.0, 0.0]).unwrap();
        assert!((p.min_eigenvalue + 2.0).abs() < 1e-12);
        assert!(curvature_probe(&ev("P11", AugmentingFunction::Norm), &eq(0.0), 2.0, &[0.0, 0.0]).is_none());
    }

    #[test]
    fn threshold_helper() {
        let t = threshold_bisection(0.0, 1.0, 1024.0, 1e-3, |r| Ok(r >= 3.3)).unwrap();
        assert_eq!(t.status, ThresholdStatus::Bracketed);
        assert!(t.lower < 3.3 && t.upper >= 3.3 && t.upper - t.lower <= 1e-3);
        let t = threshold_bisection(0.0, 1.0, 64.0, 1e-3, |_| Ok(false)).unwrap();
        assert_eq!(t.status, ThresholdStatus::NotReachedByCap);
        let t = threshold_bisection(0.0, 1.0, 64.0, 1e-3, |_| Ok(true)).unwrap();
        assert_eq!(t.status, ThresholdStatus::HoldsAtLowerEnd);
    }

    #[test]
    fn r_lambda_on_p11() {
        let e = ev("P11", AugmentingFunction::Norm);
        let est = estimate_r_lambda(&e, &eq(-2.0), None, None, &CertConfig::default()).unwrap();
        assert!(est.lower <= 3.0 && est.upper >= 3.0 && est.upper - est.lower <= 1e-3, "{est:?}");
        assert_eq!(est.recertified, Some((Verdict::Fails, Verdict::Holds)));
    }

    #[test]
    fn dual_values() {
        let cfg = CertConfig::default();
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        let d = dual_value_psi(&p13, &eq(1.0), 3.0, &cfg).unwrap();
        assert!((d.value.to_f64() - 2.0).abs() < 1e-6);
        let d = dual_value_psi(&p13, &eq(0.0), 0.5, &cfg).unwrap();
        assert!(d.value.to_f64() < 2.0);
        let p12 = ev("P12", AugmentingFunction::Norm);
        assert!(dual_value_psi(&p12, &ineq(0.0), 1.0, &cfg).unwrap().value.is_neg_inf());
    }

    #[test]
    fn saddle_points() {
        let cfg = CertConfig::default();
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        assert!(saddle_point_check(&p13, &[0.0, 0.0], &eq(1.0), 3.0, &cfg).unwrap().holds());
        let c = saddle_point_check(&p13, &[0.0, 0.0], &eq(1.0), 1.0, &cfg).unwrap();
        assert!(c.fails());
        assert!(c.notes.iter().any(|n| n == "fails part (b)"));
        let p11 = ev("P11", AugmentingFunction::Norm);
        assert!(saddle_point_check(&p11, &[0.0, 0.0], &eq(0.0), 2.0, &cfg).unwrap().holds());
    }

    #[test]
    fn argmin_examples() {
        let cfg = CertConfig::default();
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        assert!(argmin_coincidence(&p13, &eq(1.0), 3.0, &cfg).unwrap().holds());
        assert!(argmin_coincidence(&p13, &eq(1.0), 2.5, &cfg).unwrap().holds());
        let p12 = ev("P12", AugmentingFunction::Norm);
        assert!(argmin_coincidence(&p12, &ineq(0.0), 1.0, &cfg).unwrap().fails());
    }

    #[test]
    fn penalty_thresholds() {
        let cfg = CertConfig::default();
        let p11 = ev("P11", AugmentingFunction::Norm);
        let c = penalty_exactness(&p11, PenaltyRestriction::WholeP, &cfg).unwrap();
        assert!(c.holds());
        assert!((c.estimate.unwrap() - 1.0).abs() <= 1e-3);
        let c = penalty_exactness(&p11, PenaltyRestriction::NormBall { tau: 0.5 }, &cfg).unwrap();
        assert!(c.holds() && c.estimate.unwrap() <= 1.0 + 1e-3);
        let p12 = ev("P12", AugmentingFunction::Norm);
        assert!(penalty_exactness(&p12, PenaltyRestriction::WholeP, &cfg).unwrap().fails());
    }

    #[test]
    fn calmness_examples() {
        let cfg = CertConfig::default();
        let p11 = ev("P11", AugmentingFunction::Norm);
        let rep = calmness_probe(&p11, 1.0, &cfg).unwrap();
        // v(p) carries ~1e-11 absolute error, amplified by 1/radius on the smallest shell.
        assert!((rep.estimate + 1.0).abs() < 1e-4, "{rep:?}");
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        let rep = calmness_probe(&p13, 1.0, &cfg).unwrap();
        let oracle = (0..=6)
            .map(|k| {
                let t = 10f64.powi(-k);
                [t, -t]
                    .iter()
                    .map(|p| (p + 2.0 * p.cos() - 2.0) / p.abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((rep.estimate - oracle).abs() < 1e-4, "{} vs {oracle}", rep.estimate);
        assert!(calmness_probe(&p11, 1.5, &cfg).is_err());
    }
}
