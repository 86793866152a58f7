//! KKT residuals, critical cones and second-order checks at candidate
//! solutions, plus a sampled local augmented-multiplier test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificates::{threshold_bisection, Certificate, CertParams, Property, Verdict, Witness, WitnessKind, GRID_CAVEAT};
use crate::error::{check_dim, Error, Result};
use crate::lagrangian::{ExtendedValue, LagrangianEvaluator, MultiplierVector};
use crate::linalg::{dot, norm, null_space, pd_on_subspace, pinv, rank_tolerance, sym_eigen, SymMatrix};
use crate::problem::{feasibility_residual, FeasibleRegion, ProblemSpec};
use crate::search::scrambled_halton;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ActiveSets {
    /// Inequalities with `g_j(x*) = 0`.
    pub j0: Vec<usize>,
    /// Active inequalities with positive multiplier.
    pub j_plus: Vec<usize>,
    /// Active inequalities with zero multiplier.
    pub j_zero: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KKTReport {
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    pub sign_residual: f64,
    pub active_sets: ActiveSets,
    /// Gradient of the classical Lagrangian at `x*`.
    pub lagrangian_gradient: Vec<f64>,
    pub is_kkt: bool,
    pub tol: f64,
}

/// Gradient of `f0 + sum lambda_s g_s (+ mu . G)` at `x`.
pub fn classical_gradient(spec: &ProblemSpec, x: &[f64], lam: &MultiplierVector) -> Result<Vec<f64>> {
    let c = &spec.constraints;
    let mut grad = spec.objective.gradient(x)?;
    for (l, g) in lam.eq.iter().zip(&c.equalities).chain(lam.ineq.iter().zip(&c.inequalities)) {
        for (a, b) in grad.iter_mut().zip(g.gradient(x)?) {
            *a += l * b;
        }
    }
    if let (Some(gf), Some(mu)) = (&c.sdp, &lam.mu) {
        for (a, p) in grad.iter_mut().zip(gf.partials(x)) {
            *a += mu.dot(&p);
        }
    }
    Ok(grad)
}

/// Hessian of the classical Lagrangian (first-order SDP terms only; the
/// curvature correction lives in [`sdp_curvature_matrix`]).
pub fn classical_hessian(spec: &ProblemSpec, x: &[f64], lam: &MultiplierVector) -> Result<SymMatrix> {
    let c = &spec.constraints;
    let mut h = spec.objective.hessian(x)?;
    for (l, g) in lam.eq.iter().zip(&c.equalities).chain(lam.ineq.iter().zip(&c.inequalities)) {
        if *l != 0.0 {
            h = h.add(&g.hessian(x)?.scale(*l));
        }
    }
    if let (Some(gf), Some(mu)) = (&c.sdp, &lam.mu) {
        let d = spec.dim;
        let second = gf
            .second_partials(x)
            .ok_or_else(|| Error::MissingDerivative("second partials of the semidefinite block".into()))?;
        h = h.add(&SymMatrix::from_fn(d, |i, j| mu.dot(&second[i * d + j])));
    }
    Ok(h)
}

pub fn active_sets(spec: &ProblemSpec, x: &[f64], lam: &MultiplierVector, tol: f64) -> ActiveSets {
    let mut s = ActiveSets::default();
    for (j, g) in spec.constraints.inequalities.iter().enumerate() {
        if g.eval(x).abs() <= tol {
            s.j0.push(j);
            if lam.ineq[j] > tol {
                s.j_plus.push(j);
            } else {
                s.j_zero.push(j);
            }
        }
    }
    s
}

fn frobenius_of_product(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.matmul(b).iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn kkt_check(spec: &ProblemSpec, x_star: &[f64], lam: &MultiplierVector, tol: f64) -> Result<KKTReport> {
    check_dim("x*", spec.dim, x_star.len())?;
    spec.constraints.check_multiplier(lam)?;
    let grad = classical_gradient(spec, x_star, lam)?;
    let stationarity = spec
        .region
        .tangent_generators(x_star)
        .iter()
        .map(|v| (-dot(&grad, v) / norm(v).max(f64::MIN_POSITIVE)).max(0.0))
        .fold(0.0, f64::max);
    let mut comp: f64 = 0.0;
    let mut sign: f64 = 0.0;
    for (l, g) in lam.ineq.iter().zip(&spec.constraints.inequalities) {
        comp = comp.max((l * g.eval(x_star)).abs());
        sign = sign.max(-l);
    }
    if let (Some(gf), Some(mu)) = (&spec.constraints.sdp, &lam.mu) {
        let gx = gf.eval(x_star);
        comp = comp.max(frobenius_of_product(mu, &gx));
        let eig = sym_eigen(mu)?;
        sign = sign.max(-eig.eigenvalues[mu.order() - 1]);
    }
    // Adding zero turns -0.0 into 0.0.
    let sign = sign + 0.0;
    let resid = feasibility_residual(spec, x_star)?;
    Ok(KKTReport {
        stationarity_residual: stationarity,
        complementarity_residual: comp,
        sign_residual: sign,
        active_sets: active_sets(spec, x_star, lam, tol),
        lagrangian_gradient: grad,
        is_kkt: stationarity <= tol && comp <= tol && sign <= tol && resid <= tol,
        tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    /// The directions form an orthonormal basis of the cone.
    Subspace,
    /// The directions are unit samples of a polyhedral or semidefinite cone.
    Sampled,
    Trivial,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeSample {
    pub kind: ConeKind,
    pub directions: Vec<Vec<f64>>,
    /// Orthonormal basis of the linear span the cone lives in.
    pub equality_basis: Vec<Vec<f64>>,
}

/// `E_0`: eigenvectors of `G(x*)` for its zero eigenvalues.
pub fn zero_eigenvectors(g: &SymMatrix) -> Result<Vec<Vec<f64>>> {
    let tol = rank_tolerance(g);
    let eig = sym_eigen(g)?;
    Ok((0..g.order()).filter(|&k| eig.eigenvalues[k].abs() <= tol).map(|k| eig.vector(k)).collect())
}

/// `sum_i v_i E0^T D_i G E0` as a small symmetric matrix.
fn reduced_direction_matrix(e0: &[Vec<f64>], partials: &[SymMatrix], v: &[f64]) -> SymMatrix {
    let k = e0.len();
    SymMatrix::from_fn(k, |a, b| {
        partials
            .iter()
            .zip(v)
            .map(|(p, vi)| vi * dot(&e0[a], &p.mat_vec(&e0[b])))
            .sum()
    })
}

/// Inequality-type conditions of the cone, tested on a direction.
enum ConeTest<'a> {
    Rows(Vec<Vec<f64>>),
    Sdp { e0: Vec<Vec<f64>>, partials: &'a [SymMatrix] },
}

impl ConeTest<'_> {
    fn admits(&self, v: &[f64], tol: f64) -> bool {
        match self {
            ConeTest::Rows(rows) => rows.iter().all(|r| dot(r, v) <= tol),
            ConeTest::Sdp { e0, partials } => {
                let m = reduced_direction_matrix(e0, partials, v);
                sym_eigen(&m).map(|e| e.eigenvalues[0] <= tol).unwrap_or(false)
            }
        }
    }

    fn vanishes_on(&self, basis: &[Vec<f64>]) -> bool {
        match self {
            ConeTest::Rows(rows) => rows.is_empty(),
            ConeTest::Sdp { e0, partials } => basis
                .iter()
                .all(|b| reduced_direction_matrix(e0, partials, b).frobenius_norm() <= 1e-10),
        }
    }
}

fn sample_cone(basis: &[Vec<f64>], test: &ConeTest, dim: usize, n_dirs: usize, seed: u64) -> ConeSample {
    if basis.is_empty() {
        return ConeSample { kind: ConeKind::Trivial, directions: vec![], equality_basis: vec![] };
    }
    if test.vanishes_on(basis) {
        return ConeSample {
            kind: ConeKind::Subspace,
            directions: basis.to_vec(),
            equality_basis: basis.to_vec(),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Vec::new();
    // Extreme candidates first: signed basis vectors.
    for b in basis {
        for s in [1.0, -1.0] {
            let v: Vec<f64> = b.iter().map(|x| s * x).collect();
            if test.admits(&v, 1e-10) {
                dirs.push(v);
            }
        }
    }
    let mut attempts = 0;
    while dirs.len() < n_dirs && attempts < 200 * n_dirs.max(1) {
        attempts += 1;
        let coeffs: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut v = vec![0.0; dim];
        for (c, b) in coeffs.iter().zip(basis) {
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi += c * bi;
            }
        }
        let n = norm(&v);
        if n < 1e-12 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        if test.admits(&v, 1e-10) {
            dirs.push(v);
        }
    }
    let kind = if dirs.is_empty() { ConeKind::Trivial } else { ConeKind::Sampled };
    ConeSample { kind, directions: dirs, equality_basis: basis.to_vec() }
}

fn box_rows(region: &FeasibleRegion, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = x.len();
    match region {
        FeasibleRegion::WholeSpace => Ok(vec![]),
        FeasibleRegion::Box { lower, upper } => {
            let mut rows = Vec::new();
            for i in 0..d {
                let mut e = vec![0.0; d];
                if (x[i] - lower[i]).abs() <= 1e-10 {
                    e[i] = -1.0;
                    rows.push(e);
                } else if (x[i] - upper[i]).abs() <= 1e-10 {
                    e[i] = 1.0;
                    rows.push(e);
                }
            }
            Ok(rows)
        }
        FeasibleRegion::Ball { center, radius } => {
            let r: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
            if norm(&r) < radius - 1e-10 {
                Ok(vec![])
            } else {
                Err(Error::Unsupported("critical cones at ball boundary points".into()))
            }
        }
    }
}

fn uses_sdp_path(spec: &ProblemSpec, x: &[f64]) -> Result<bool> {
    match &spec.constraints.sdp {
        None => Ok(false),
        Some(g) => Ok(!zero_eigenvectors(&g.eval(x))?.is_empty()),
    }
}

/// Unit directions of the critical cone at `(x*, lambda)`; an orthonormal
/// basis when the cone is a subspace, and empty when it is `{0}`.
pub fn critical_cone_sample(
    spec: &ProblemSpec,
    x_star: &[f64],
    lam: &MultiplierVector,
    n_dirs: usize,
    seed: u64,
    tol: f64,
) -> Result<ConeSample> {
    check_dim("x*", spec.dim, x_star.len())?;
    spec.constraints.check_multiplier(lam)?;
    let d = spec.dim;
    let c = &spec.constraints;
    let mut eq_rows: Vec<Vec<f64>> = Vec::new();
    for g in &c.equalities {
        eq_rows.push(g.gradient(x_star)?);
    }
    if uses_sdp_path(spec, x_star)? {
        let gf = c.sdp.as_ref().expect("sdp path");
        let e0 = zero_eigenvectors(&gf.eval(x_star))?;
        let partials = gf.partials(x_star);
        eq_rows.push(spec.objective.gradient(x_star)?);
        let basis = null_space(&eq_rows, d)?;
        let test = ConeTest::Sdp { e0, partials: &partials };
        return Ok(sample_cone(&basis, &test, d, n_dirs, seed));
    }
    let sets = active_sets(spec, x_star, lam, tol);
    for &j in &sets.j_plus {
        eq_rows.push(c.inequalities[j].gradient(x_star)?);
    }
    let grad = classical_gradient(spec, x_star, lam)?;
    if norm(&grad) > tol {
        eq_rows.push(grad);
    }
    let mut ineq_rows = box_rows(&spec.region, x_star)?;
    for &j in &sets.j_zero {
        ineq_rows.push(c.inequalities[j].gradient(x_star)?);
    }
    let basis = null_space(&eq_rows, d)?;
    Ok(sample_cone(&basis, &ConeTest::Rows(ineq_rows), d, n_dirs, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SoscMode {
    C2Cone,
    C11Generalized,
    #[serde(rename = "SDP")]
    Sdp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoscOptions {
    pub n_dirs: usize,
    pub tol: f64,
    pub seed: u64,
    /// Test on all of `R^d` instead of the critical cone (diagnostic).
    pub whole_space: bool,
    pub h_rad: f64,
}

impl Default for SoscOptions {
    fn default() -> Self {
        SoscOptions { n_dirs: 64, tol: 1e-9, seed: 0x5EED, whole_space: false, h_rad: 1e-4 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SOSCReport {
    pub mode: SoscMode,
    /// Minimum of `<v, M v>` over tested unit directions; `None` when the
    /// cone is `{0}`.
    pub min_quadratic_value: Option<f64>,
    pub directions_tested: usize,
    pub verdict: bool,
    pub cone: ConeKind,
    pub witness: Option<Vec<f64>>,
    /// Number of Hessian matrices tested (more than one in C11 mode).
    pub hessians_tested: usize,
    pub notes: Vec<String>,
}

fn unit_basis(d: usize) -> Vec<Vec<f64>> {
    null_space(&[], d).unwrap_or_default()
}

fn min_over_cone(m: &SymMatrix, cone: &ConeSample, tol: f64) -> Result<(Option<f64>, Option<Vec<f64>>, usize)> {
    match cone.kind {
        ConeKind::Trivial => Ok((None, None, 0)),
        ConeKind::Subspace => {
            let def = pd_on_subspace(m, &cone.directions, tol)?;
            Ok((Some(def.min_eigenvalue), def.min_direction, cone.directions.len()))
        }
        ConeKind::Sampled => {
            let mut best = (f64::INFINITY, None);
            for v in &cone.directions {
                let q = m.quad_form(v);
                if q < best.0 {
                    best = (q, Some(v.clone()));
                }
            }
            Ok((Some(best.0), best.1, cone.directions.len()))
        }
    }
}

/// Curvature matrix of the semidefinite second-order condition:
/// `D2 L - 2 [mu . (D_i G  G^+  D_j G)]_{ij}`.
pub fn sdp_curvature_matrix(spec: &ProblemSpec, x: &[f64], lam: &MultiplierVector) -> Result<SymMatrix> {
    let gf = spec
        .constraints
        .sdp
        .as_ref()
        .ok_or_else(|| Error::InvalidProblem("problem has no semidefinite block".into()))?;
    let mu = lam
        .mu
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("multiplier has no semidefinite block".into()))?;
    let h = classical_hessian(spec, x, lam)?;
    let gx = gf.eval(x);
    let gp = pinv(&gx, Some(rank_tolerance(&gx)))?;
    let parts = gf.partials(x);
    let m = gx.order();
    let gemm = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; m * m];
        for i in 0..m {
            for k in 0..m {
                let aik = a[i * m + k];
                for j in 0..m {
                    c[i * m + j] += aik * b[k * m + j];
                }
            }
        }
        c
    };
    let d = spec.dim;
    let mut corr = vec![0.0; d * d];
    for i in 0..d {
        let left = parts[i].matmul(&gp);
        for j in 0..d {
            let x = gemm(&left, parts[j].as_slice());
            let mut t = 0.0;
            for a in 0..m {
                for b in 0..m {
                    t += mu.get(a, b) * x[b * m + a];
                }
            }
            corr[i * d + j] = t;
        }
    }
    Ok(SymMatrix::from_fn(d, |i, j| h.get(i, j) - (corr[i * d + j] + corr[j * d + i])))
}

/// Second-order sufficient condition at a KKT pair.
pub fn sosc_check(
    spec: &ProblemSpec,
    x_star: &[f64],
    lam: &MultiplierVector,
    mode: SoscMode,
    opts: &SoscOptions,
) -> Result<SOSCReport> {
    check_dim("x*", spec.dim, x_star.len())?;
    spec.constraints.check_multiplier(lam)?;
    let d = spec.dim;
    let mut notes = Vec::new();
    let whole = || ConeSample {
        kind: ConeKind::Subspace,
        directions: unit_basis(d),
        equality_basis: unit_basis(d),
    };
    let finish = |min: Option<f64>, wit: Option<Vec<f64>>, n: usize, cone: ConeKind, hessians: usize, notes: Vec<String>| {
        let verdict = min.is_none_or(|m| m > opts.tol);
        SOSCReport {
            mode,
            min_quadratic_value: min,
            directions_tested: n,
            verdict,
            cone,
            witness: if verdict { None } else { wit },
            hessians_tested: hessians,
            notes,
        }
    };
    match mode {
        SoscMode::C2Cone => {
            let h = classical_hessian(spec, x_star, lam)?;
            let cone = if opts.whole_space {
                notes.push("diagnostic: cone replaced by the whole space".into());
                whole()
            } else {
                critical_cone_sample(spec, x_star, lam, opts.n_dirs, opts.seed, 1e-8)?
            };
            if cone.kind == ConeKind::Sampled {
                notes.push(format!("sampled cone: {} directions; not a copositivity proof", cone.directions.len()));
            }
            let (min, wit, n) = min_over_cone(&h, &cone, opts.tol)?;
            Ok(finish(min, wit, n, cone.kind, 1, notes))
        }
        SoscMode::C11Generalized => {
            let sets = active_sets(spec, x_star, lam, 1e-8);
            if !sets.j_zero.is_empty() {
                return Err(Error::StrictComplementarity(format!(
                    "generalized second-order condition requires strict complementarity; inequalities {:?} are active with zero multiplier",
                    sets.j_zero
                )));
            }
            if !matches!(spec.region, FeasibleRegion::WholeSpace) && !box_rows(&spec.region, x_star)?.is_empty() {
                return Err(Error::Unsupported("generalized second-order test at region boundary points".into()));
            }
            let cone = if opts.whole_space {
                whole()
            } else {
                let mut rows = Vec::new();
                for g in &spec.constraints.equalities {
                    rows.push(g.gradient(x_star)?);
                }
                for &j in &sets.j_plus {
                    rows.push(spec.constraints.inequalities[j].gradient(x_star)?);
                }
                let b = null_space(&rows, d)?;
                let kind = if b.is_empty() { ConeKind::Trivial } else { ConeKind::Subspace };
                ConeSample { kind, directions: b.clone(), equality_basis: b }
            };
            let mut pts = vec![x_star.to_vec()];
            for i in 0..d {
                for s in [0.5, -0.5] {
                    let mut y = x_star.to_vec();
                    y[i] += s * opts.h_rad;
                    pts.push(y);
                }
            }
            for u in scrambled_halton(d, opts.n_dirs, opts.seed) {
                let v: Vec<f64> = u.iter().map(|t| 2.0 * t - 1.0).collect();
                let n = norm(&v).max(1.0);
                pts.push(x_star.iter().zip(&v).map(|(a, b)| a + opts.h_rad * b / n).collect());
            }
            let fd = 1e-7;
            let mut worst: (Option<f64>, Option<Vec<f64>>) = (None, None);
            for y in &pts {
                let mut cols = Vec::with_capacity(d);
                for j in 0..d {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[j] += fd;
                    ym[j] -= fd;
                    let gp = classical_gradient(spec, &yp, lam)?;
                    let gm = classical_gradient(spec, &ym, lam)?;
                    cols.push(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * fd)).collect::<Vec<f64>>());
                }
                let h = SymMatrix::from_fn(d, |i, j| 0.5 * (cols[j][i] + cols[i][j]));
                let (min, wit, _) = min_over_cone(&h, &cone, opts.tol)?;
                if let Some(m) = min {
                    if worst.0.is_none_or(|w| m < w) {
                        worst = (Some(m), wit);
                    }
                }
            }
            notes.push(format!(
                "{} finite-difference Hessians within radius {}; hull test covers sampled vertices only",
                pts.len(),
                opts.h_rad
            ));
            let n = cone.directions.len();
            Ok(finish(worst.0, worst.1, n, cone.kind, pts.len(), notes))
        }
        SoscMode::Sdp => {
            if !uses_sdp_path(spec, x_star)? {
                notes.push("G(x*) has full rank; semidefinite block inactive, using the nonlinear-programming test".into());
                let mut reduced = lam.clone();
                if let Some(mu) = &mut reduced.mu {
                    *mu = SymMatrix::zeros(mu.order());
                }
                let mut r = sosc_check(spec, x_star, &reduced, SoscMode::C2Cone, opts)?;
                r.mode = SoscMode::Sdp;
                r.notes.splice(0..0, notes);
                return Ok(r);
            }
            let m = sdp_curvature_matrix(spec, x_star, lam)?;
            let cone = if opts.whole_space {
                whole()
            } else {
                critical_cone_sample(spec, x_star, lam, opts.n_dirs, opts.seed, 1e-8)?
            };
            let (min, wit, n) = min_over_cone(&m, &cone, opts.tol)?;
            if cone.kind == ConeKind::Trivial {
                notes.push("critical cone is {0}; condition holds vacuously".into());
            }
            Ok(finish(min, wit, n, cone.kind, 1, notes))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalAlmOptions {
    pub nbhd_radius: f64,
    pub n_pts: usize,
    pub tol: f64,
    pub seed: u64,
    /// Resolution of the bisection that refines the smallest passing `r`.
    pub r_tol: f64,
}

impl Default for LocalAlmOptions {
    fn default() -> Self {
        LocalAlmOptions { nbhd_radius: 0.1, n_pts: 500, tol: 1e-6, seed: 0x5EED, r_tol: 1e-3 }
    }
}

/// Points of `A ∩ ball(x*, radius)`: low-discrepancy samples, axis probes at
/// log-spaced distances, and the diagonals.
fn neighborhood_points(region: &FeasibleRegion, x: &[f64], opts: &LocalAlmOptions) -> Vec<Vec<f64>> {
    let d = x.len();
    let rad = opts.nbhd_radius;
    let mut pts = Vec::new();
    for u in scrambled_halton(d, opts.n_pts, opts.seed) {
        let v: Vec<f64> = u.iter().map(|t| 2.0 * t - 1.0).collect();
        let n = norm(&v);
        // Radial rescale keeps the sample inside the ball.
        let s = if n > 1.0 { 1.0 / n } else { 1.0 };
        pts.push(x.iter().zip(&v).map(|(a, b)| a + rad * s * b).collect());
    }
    for k in 0..=12 {
        let t = rad * 10f64.powf(-(k as f64) * 0.5);
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut y = x.to_vec();
                y[i] += s * t;
                pts.push(y);
            }
        }
    }
    // Projection onto the convex region does not increase the distance to x*.
    pts.into_iter().map(|y| region.project(&y)).collect()
}

fn local_check_at(
    ev: &LagrangianEvaluator,
    x: &[f64],
    lam: &MultiplierVector,
    r: f64,
    pts: &[Vec<f64>],
    tol: f64,
) -> Result<(bool, Option<Witness>, f64)> {
    let lx = ev.eval_lagrangian(x, lam, r)?;
    let fx = ev.spec().objective.eval(x);
    if !lx.is_finite() || (lx.to_f64() - fx).abs() > tol {
        let margin = if lx.is_finite() { -(lx.to_f64() - fx).abs() } else { f64::NEG_INFINITY };
        return Ok((
            false,
            Some(Witness { kind: WitnessKind::Point, point: x.to_vec(), margin, value: Some(lx) }),
            margin,
        ));
    }
    let mut worst = (f64::INFINITY, None::<(Vec<f64>, ExtendedValue)>);
    for y in pts {
        let ly = ev.eval_lagrangian(y, lam, r)?;
        let m = ly.to_f64() - lx.to_f64();
        if m < worst.0 {
            worst = (m, Some((y.clone(), ly)));
        }
    }
    let ok = worst.0 >= -tol;
    let wit = if ok {
        None
    } else {
        worst.1.map(|(p, v)| Witness { kind: WitnessKind::Point, point: p, margin: worst.0, value: Some(v) })
    };
    Ok((ok, wit, worst.0))
}

/// Sampled test that `x*` locally minimizes `L(., lambda, r)` on `A` with
/// `L(x*, lambda, r) = f(x*)`. The verdict refers to the largest `r` in the
/// schedule; `estimate` is the smallest passing `r`, refined by bisection
/// below the first passing schedule value.
pub fn local_alm_check(
    ev: &LagrangianEvaluator,
    x_star: &[f64],
    lam: &MultiplierVector,
    r_schedule: &[f64],
    opts: &LocalAlmOptions,
) -> Result<Certificate> {
    let spec = ev.spec();
    check_dim("x*", spec.dim, x_star.len())?;
    spec.constraints.check_multiplier(lam)?;
    if r_schedule.is_empty() {
        return Err(Error::InvalidParameter("empty r schedule".into()));
    }
    let resid = feasibility_residual(spec, x_star)?;
    if resid > 1e-8 {
        return Err(Error::InvalidParameter(format!("x* is infeasible (residual {resid:e})")));
    }
    let mut sched = r_schedule.to_vec();
    sched.sort_by(|a, b| a.total_cmp(b));
    let r_max = *sched.last().expect("non-empty");
    let pts = neighborhood_points(&spec.region, x_star, opts);
    let mut smallest = None;
    for (k, &r) in sched.iter().enumerate() {
        if local_check_at(ev, x_star, lam, r, &pts, opts.tol)?.0 {
            smallest = Some(r);
            if k > 0 {
                let t = threshold_bisection(sched[k - 1], r, r, opts.r_tol, |s| {
                    Ok(local_check_at(ev, x_star, lam, s, &pts, opts.tol)?.0)
                })?;
                smallest = Some(t.upper);
            }
            break;
        }
    }
    let (ok, wit, margin) = local_check_at(ev, x_star, lam, r_max, &pts, opts.tol)?;
    let mut cert = Certificate {
        problem: spec.id.clone(),
        property: Property::LocalMultiplier,
        verdict: if ok { Verdict::Holds } else { Verdict::Fails },
        witness: wit,
        params: CertParams { lambda: Some(lam.clone()), r: Some(r_max), sigma: ev.sigma(), restriction: None, tol: opts.tol },
        min_margin: Some(margin),
        estimate: smallest,
        resolution: format!(
            "{} points in A within radius {} of x* ({} low-discrepancy, rest axis probes)",
            pts.len(),
            opts.nbhd_radius,
            opts.n_pts
        ),
        grid_based: true,
        notes: vec![],
    };
    if ok {
        cert.notes.push(GRID_CAVEAT.into());
    }
    if let Some(r) = smallest {
        cert.notes.push(format!("smallest passing schedule value r = {r}"));
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::lagrangian::AugmentingFunction;
    use crate::problem::{ConstraintSystem, ScalarField};
    use std::sync::Arc;

    fn eq(l: f64) -> MultiplierVector {
        MultiplierVector::nlp(vec![l], vec![])
    }

    #[test]
    fn kkt_examples() {
        let p13 = catalog::get("P13").unwrap().spec;
        let k = kkt_check(&p13, &[0.0, 0.0], &eq(1.0), 1e-8).unwrap();
        assert!(k.is_kkt);
        let k = kkt_check(&p13, &[0.0, 0.0], &eq(0.0), 1e-8).unwrap();
        assert!(!k.is_kkt);
        assert!((k.stationarity_residual - 1.0).abs() < 1e-12);
        let sdp = catalog::get("SDP-TOY").unwrap();
        let mu = sdp.spec.known.as_ref().unwrap().known_multipliers[0].clone();
        assert!(kkt_check(&sdp.spec, &[0.0], &mu, 1e-8).unwrap().is_kkt);
    }

    #[test]
    fn cones() {
        let p13 = catalog::get("P13").unwrap().spec;
        let c = critical_cone_sample(&p13, &[0.0, 0.0], &eq(1.0), 16, 1, 1e-8).unwrap();
        assert_eq!(c.kind, ConeKind::Subspace);
        assert_eq!(c.directions.len(), 1);
        assert!((c.directions[0][0].abs() - 1.0).abs() < 1e-12 && c.directions[0][1].abs() < 1e-12);
        let g = ScalarField::parse(2, "x0 + x1").unwrap();
        let spec = ProblemSpec::new(
            "lin",
            ScalarField::parse(2, "x0^2 + x1^2").unwrap(),
            ConstraintSystem { equalities: vec![g], ..Default::default() },
            FeasibleRegion::WholeSpace,
            None,
        )
        .unwrap();
        let c = critical_cone_sample(&spec, &[0.0, 0.0], &eq(0.0), 16, 1, 1e-8).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(c.directions.len(), 1);
        assert!((c.directions[0][0] + c.directions[0][1]).abs() < 1e-12);
        assert!((c.directions[0][0].abs() - s).abs() < 1e-12);
        let sdp = catalog::get("SDP-TOY").unwrap();
        let mu = sdp.spec.known.as_ref().unwrap().known_multipliers[0].clone();
        let c = critical_cone_sample(&sdp.spec, &[0.0], &mu, 16, 1, 1e-8).unwrap();
        assert!(c.directions.is_empty());
    }

    #[test]
    fn sosc_on_p13() {
        let p13 = catalog::get("P13").unwrap().spec;
        let opts = SoscOptions::default();
        let r = sosc_check(&p13, &[0.0, 0.0], &eq(1.0), SoscMode::C2Cone, &opts).unwrap();
        assert!(r.verdict);
        assert!((r.min_quadratic_value.unwrap() - 2.0).abs() < 1e-10);
        let diag = SoscOptions { whole_space: true, ..opts.clone() };
        let r = sosc_check(&p13, &[0.0, 0.0], &eq(1.0), SoscMode::C2Cone, &diag).unwrap();
        assert!(!r.verdict);
        assert!((r.min_quadratic_value.unwrap() + 2.0).abs() < 1e-10);
        let w = r.witness.unwrap();
        assert!(w[0].abs() < 1e-12 && (w[1].abs() - 1.0).abs() < 1e-12);
        let g = sosc_check(&p13, &[0.0, 0.0], &eq(1.0), SoscMode::C11Generalized, &opts).unwrap();
        assert!(g.verdict);
        assert!((g.min_quadratic_value.unwrap() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn sosc_c11_kink() {
        let spec = ProblemSpec::new(
            "c11",
            ScalarField::parse(1, "x0^2 + max(x0, 0)^2").unwrap(),
            ConstraintSystem { inequalities: vec![ScalarField::parse(1, "x0 - 1").unwrap()], ..Default::default() },
            FeasibleRegion::WholeSpace,
            None,
        )
        .unwrap();
        let lam = MultiplierVector::nlp(vec![], vec![0.0]);
        let r = sosc_check(&spec, &[0.0], &lam, SoscMode::C11Generalized, &SoscOptions::default()).unwrap();
        assert!(r.verdict);
        assert!(r.min_quadratic_value.unwrap() >= 2.0 - 1e-5);
        assert!(r.hessians_tested > 2);
    }

    #[test]
    fn c11_needs_strict_complementarity() {
        let spec = ProblemSpec::new(
            "deg",
            ScalarField::parse(1, "x0^2").unwrap(),
            ConstraintSystem { inequalities: vec![ScalarField::parse(1, "x0").unwrap()], ..Default::default() },
            FeasibleRegion::WholeSpace,
            None,
        )
        .unwrap();
        let lam = MultiplierVector::nlp(vec![], vec![0.0]);
        let e = sosc_check(&spec, &[0.0], &lam, SoscMode::C11Generalized, &SoscOptions::default());
        assert!(matches!(e, Err(Error::StrictComplementarity(_))));
    }

    #[test]
    fn sdp_sosc_vacuous() {
        let sdp = catalog::get("SDP-TOY").unwrap();
        let mu = sdp.spec.known.as_ref().unwrap().known_multipliers[0].clone();
        let r = sosc_check(&sdp.spec, &[0.0], &mu, SoscMode::Sdp, &SoscOptions::default()).unwrap();
        assert!(r.verdict);
        assert_eq!(r.cone, ConeKind::Trivial);
        let m = sdp_curvature_matrix(&sdp.spec, &[0.0], &mu).unwrap();
        // G(0) = diag(0,-1): G^+ = diag(0,-1), D G = I, mu = diag(1,0): correction 0.
        assert!(m.get(0, 0).abs() < 1e-12);
    }

    #[test]
    fn local_alm_on_p12() {
        let ev = LagrangianEvaluator::new(Arc::new(catalog::get("P12").unwrap().spec), AugmentingFunction::Norm);
        let opts = LocalAlmOptions::default();
        let l = |v: f64| MultiplierVector::nlp(vec![], vec![v]);
        assert!(local_alm_check(&ev, &[0.0], &l(1.0), &[2.0], &opts).unwrap().holds());
        assert!(local_alm_check(&ev, &[0.0], &l(-1.0), &[2.0], &opts).unwrap().holds());
        assert!(local_alm_check(&ev, &[0.0], &l(-1.0), &[0.5], &opts).unwrap().fails());
        assert!(local_alm_check(&ev, &[0.0], &l(0.0), &[0.0], &opts).unwrap().fails());
        let c = local_alm_check(&ev, &[0.0], &l(-1.0), &[0.25, 0.5, 1.5, 3.0], &opts).unwrap();
        let e = c.estimate.unwrap();
        // -x^2 + (r-1)x >= -tol on [0, 0.1] needs r - 1 >= 0.1 - 1e-5.
        assert!((e - 1.1).abs() < 2e-3, "{e}");
    }
}
