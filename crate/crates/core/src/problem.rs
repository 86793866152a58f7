//! Constrained problems: scalar and matrix fields, the closed convex region,
//! constraint systems and known-optimum metadata.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{check_dim, Error, Result};
use crate::expr::Expr;
use crate::lagrangian::{AugmentingFunction, ExtendedValue, MultiplierVector};
use crate::linalg::{max_eigenvalue, norm, SymMatrix};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> SymMatrix + Send + Sync>;
pub type MatrixListFn = Arc<dyn Fn(&[f64]) -> Vec<SymMatrix> + Send + Sync>;

/// Tolerance used when checking listed global solutions.
pub const KNOWN_DATA_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Smoothness {
    C0,
    C1,
    C11,
    C2,
}

#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    value: ScalarFn,
    gradient: Option<VectorFn>,
    hessian: Option<MatrixFn>,
    smoothness: Smoothness,
    label: String,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("smoothness", &self.smoothness)
            .field("gradient", &self.gradient.is_some())
            .field("hessian", &self.hessian.is_some())
            .finish()
    }
}

impl ScalarField {
    /// A value-only field tagged `C0`.
    pub fn new(dim: usize, label: impl Into<String>, value: ScalarFn) -> Self {
        ScalarField {
            dim,
            value,
            gradient: None,
            hessian: None,
            smoothness: Smoothness::C0,
            label: label.into(),
        }
    }

    pub fn with_gradient(mut self, gradient: VectorFn) -> Self {
        self.gradient = Some(gradient);
        self
    }

    pub fn with_hessian(mut self, hessian: MatrixFn) -> Self {
        self.hessian = Some(hessian);
        self
    }

    /// Sets the smoothness tag, checking that the required oracles exist.
    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Result<Self> {
        match smoothness {
            Smoothness::C2 if self.hessian.is_none() => {
                return Err(Error::InvalidProblem(format!(
                    "`{}` tagged C2 without a Hessian",
                    self.label
                )))
            }
            Smoothness::C11 | Smoothness::C1 if self.gradient.is_none() => {
                return Err(Error::InvalidProblem(format!(
                    "`{}` tagged {smoothness:?} without a gradient",
                    self.label
                )))
            }
            _ => {}
        }
        self.smoothness = smoothness;
        Ok(self)
    }

    /// Builds value, gradient and (for kink-free trees) Hessian from an
    /// expression. Kinked trees get an almost-everywhere gradient and the
    /// `C0` tag; callers may raise the tag with [`with_smoothness`].
    ///
    /// [`with_smoothness`]: ScalarField::with_smoothness
    pub fn from_expr(dim: usize, expr: Expr) -> Result<Self> {
        if expr.arity() > dim {
            return Err(Error::InvalidProblem(format!(
                "expression `{expr}` uses x{} but dimension is {dim}",
                expr.arity() - 1
            )));
        }
        let label = expr.to_string();
        let grads: Vec<Expr> = (0..dim).map(|i| expr.derivative(i)).collect();
        let smooth = expr.is_smooth();
        let e = Arc::new(expr);
        let value: ScalarFn = {
            let e = e.clone();
            Arc::new(move |x: &[f64]| e.eval(x))
        };
        let mut field = ScalarField::new(dim, label, value);
        let g = Arc::new(grads.clone());
        field.gradient = Some(Arc::new(move |x: &[f64]| g.iter().map(|d| d.eval(x)).collect()));
        if smooth {
            let hess: Vec<Vec<Expr>> = grads
                .iter()
                .map(|gi| (0..dim).map(|j| gi.derivative(j)).collect())
                .collect();
            let h = Arc::new(hess);
            field.hessian = Some(Arc::new(move |x: &[f64]| {
                SymMatrix::from_fn(dim, |i, j| 0.5 * (h[i][j].eval(x) + h[j][i].eval(x)))
            }));
            field.smoothness = Smoothness::C2;
        }
        Ok(field)
    }

    pub fn parse(dim: usize, text: &str) -> Result<Self> {
        ScalarField::from_expr(dim, Expr::parse(text)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.gradient
            .as_ref()
            .map(|g| g(x))
            .ok_or_else(|| Error::MissingDerivative(format!("gradient of `{}`", self.label)))
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        self.hessian
            .as_ref()
            .map(|h| h(x))
            .ok_or_else(|| Error::MissingDerivative(format!("Hessian of `{}`", self.label)))
    }
}

/// A symmetric-matrix valued map `G : R^d -> S^m` with its first partials.
#[derive(Clone)]
pub struct MatrixField {
    dim: usize,
    order: usize,
    value: MatrixFn,
    partials: MatrixListFn,
    /// Row-major `d x d` list of second partials, when known.
    second_partials: Option<MatrixListFn>,
    affine: Option<(SymMatrix, Vec<SymMatrix>)>,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixField")
            .field("dim", &self.dim)
            .field("order", &self.order)
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

impl MatrixField {
    pub fn new(
        dim: usize,
        order: usize,
        value: MatrixFn,
        partials: MatrixListFn,
        second_partials: Option<MatrixListFn>,
    ) -> Self {
        MatrixField {
            dim,
            order,
            value,
            partials,
            second_partials,
            affine: None,
        }
    }

    /// `G(x) = A0 + sum_i x_i A_i`.
    pub fn affine(a0: SymMatrix, coeffs: Vec<SymMatrix>) -> Result<Self> {
        let order = a0.order();
        for (i, a) in coeffs.iter().enumerate() {
            check_dim(&format!("affine SDP coefficient A{}", i + 1), order, a.order())?;
        }
        let dim = coeffs.len();
        let a0c = a0.clone();
        let cc = coeffs.clone();
        let value: MatrixFn = Arc::new(move |x: &[f64]| {
            let mut g = a0c.clone();
            for (xi, a) in x.iter().zip(cc.iter()) {
                g = g.add(&a.scale(*xi));
            }
            g
        });
        let cp = coeffs.clone();
        let partials: MatrixListFn = Arc::new(move |_x: &[f64]| cp.clone());
        let second: MatrixListFn =
            Arc::new(move |_x: &[f64]| vec![SymMatrix::zeros(order); dim * dim]);
        Ok(MatrixField {
            dim,
            order,
            value,
            partials,
            second_partials: Some(second),
            affine: Some((a0, coeffs)),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eval(&self, x: &[f64]) -> SymMatrix {
        (self.value)(x)
    }

    pub fn partials(&self, x: &[f64]) -> Vec<SymMatrix> {
        (self.partials)(x)
    }

    pub fn second_partials(&self, x: &[f64]) -> Option<Vec<SymMatrix>> {
        self.second_partials.as_ref().map(|s| s(x))
    }

    pub fn affine_data(&self) -> Option<&(SymMatrix, Vec<SymMatrix>)> {
        self.affine.as_ref()
    }
}

mod inf_vec {
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::Value;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_finite() {
                seq.serialize_element(x)?;
            } else if *x > 0.0 {
                seq.serialize_element("+inf")?;
            } else {
                seq.serialize_element("-inf")?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Value>::deserialize(d)?;
        raw.into_iter()
            .map(|v| match v {
                Value::Number(n) => n
                    .as_f64()
                    .ok_or_else(|| serde::de::Error::custom("bad bound")),
                Value::String(s) if s == "+inf" || s == "inf" => Ok(f64::INFINITY),
                Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad bound {other}"))),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleRegion {
    WholeSpace,
    Box {
        #[serde(with = "inf_vec")]
        lower: Vec<f64>,
        #[serde(with = "inf_vec")]
        upper: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

impl FeasibleRegion {
    pub fn check(&self, dim: usize) -> Result<()> {
        match self {
            FeasibleRegion::WholeSpace => Ok(()),
            FeasibleRegion::Box { lower, upper } => {
                check_dim("box lower bounds", dim, lower.len())?;
                check_dim("box upper bounds", dim, upper.len())?;
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(Error::InvalidProblem("box has lower > upper".into()));
                }
                Ok(())
            }
            FeasibleRegion::Ball { center, radius } => {
                check_dim("ball center", dim, center.len())?;
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidProblem(format!("bad ball radius {radius}")));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.distance(x) <= tol
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeasibleRegion::WholeSpace => x.to_vec(),
            FeasibleRegion::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(xi, (l, u))| xi.max(*l).min(*u))
                .collect(),
            FeasibleRegion::Ball { center, radius } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let n = norm(&d);
                if n <= *radius {
                    x.to_vec()
                } else {
                    center
                        .iter()
                        .zip(&d)
                        .map(|(c, di)| c + di * radius / n)
                        .collect()
                }
            }
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let p = self.project(x);
        let d: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
        norm(&d)
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            FeasibleRegion::WholeSpace => false,
            FeasibleRegion::Box { lower, upper } => lower
                .iter()
                .chain(upper.iter())
                .all(|v| v.is_finite()),
            FeasibleRegion::Ball { .. } => true,
        }
    }

    /// Coordinate bounds of the region (infinite where unbounded).
    pub fn bounds(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            FeasibleRegion::WholeSpace => (vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim]),
            FeasibleRegion::Box { lower, upper } => (lower.clone(), upper.clone()),
            FeasibleRegion::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Whether `v` lies in the contingent cone of the region at `x`
    /// (`x` assumed to be in the region).
    pub fn in_tangent_cone(&self, x: &[f64], v: &[f64], tol: f64) -> bool {
        match self {
            FeasibleRegion::WholeSpace => true,
            FeasibleRegion::Box { lower, upper } => x.iter().zip(v).enumerate().all(|(i, (xi, vi))| {
                let at_lo = (xi - lower[i]).abs() <= 1e-10;
                let at_hi = (xi - upper[i]).abs() <= 1e-10;
                (!at_lo || *vi >= -tol) && (!at_hi || *vi <= tol)
            }),
            FeasibleRegion::Ball { center, radius } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                if norm(&d) < radius - 1e-10 {
                    true
                } else {
                    d.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() <= tol
                }
            }
        }
    }

    /// A finite generating set of the contingent cone at `x`. For a ball
    /// boundary point this is the inward normal plus both signs of an
    /// orthonormal basis of the tangent hyperplane.
    pub fn tangent_generators(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = x.len();
        let unit = |i: usize, s: f64| {
            let mut e = vec![0.0; d];
            e[i] = s;
            e
        };
        match self {
            FeasibleRegion::WholeSpace => (0..d).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect(),
            FeasibleRegion::Box { lower, upper } => {
                let mut out = Vec::new();
                for i in 0..d {
                    if (x[i] - upper[i]).abs() > 1e-10 {
                        out.push(unit(i, 1.0));
                    }
                    if (x[i] - lower[i]).abs() > 1e-10 {
                        out.push(unit(i, -1.0));
                    }
                }
                out
            }
            FeasibleRegion::Ball { center, radius } => {
                let n: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let nn = norm(&n);
                if nn < radius - 1e-10 || nn == 0.0 {
                    return (0..d).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect();
                }
                let n: Vec<f64> = n.iter().map(|v| v / nn).collect();
                let mut out = vec![n.iter().map(|v| -v).collect::<Vec<f64>>()];
                let basis = crate::linalg::null_space(&[n], d).unwrap_or_default();
                for b in basis {
                    out.push(b.iter().map(|v| -v).collect());
                    out.push(b);
                }
                out
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConstraintSystem {
    /// `g_i(x) = 0`. Equalities of a semidefinite program (`h(x) = 0`) live
    /// here as well; their multipliers are the `eq` part of a
    /// [`MultiplierVector`].
    pub equalities: Vec<ScalarField>,
    /// `g_j(x) <= 0`.
    pub inequalities: Vec<ScalarField>,
    /// `G(x) <= 0` in the semidefinite order.
    pub sdp: Option<MatrixField>,
}

impl ConstraintSystem {
    pub fn is_equality_only(&self) -> bool {
        self.inequalities.is_empty() && self.sdp.is_none()
    }

    pub fn n_eq(&self) -> usize {
        self.equalities.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.inequalities.len()
    }

    pub fn sdp_order(&self) -> Option<usize> {
        self.sdp.as_ref().map(|g| g.order())
    }

    /// Shape-correct zero multiplier.
    pub fn zero_multiplier(&self) -> MultiplierVector {
        MultiplierVector {
            eq: vec![0.0; self.n_eq()],
            ineq: vec![0.0; self.n_ineq()],
            mu: self.sdp_order().map(SymMatrix::zeros),
        }
    }

    pub fn check_multiplier(&self, lam: &MultiplierVector) -> Result<()> {
        check_dim("equality multipliers", self.n_eq(), lam.eq.len())?;
        check_dim("inequality multipliers", self.n_ineq(), lam.ineq.len())?;
        match (&self.sdp, &lam.mu) {
            (None, None) => Ok(()),
            (Some(g), Some(mu)) => check_dim("SDP multiplier order", g.order(), mu.order()),
            (Some(g), None) => check_dim("SDP multiplier order", g.order(), 0),
            (None, Some(mu)) => check_dim("SDP multiplier order", 0, mu.order()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnownData {
    pub f_star: f64,
    pub global_solutions: Vec<Vec<f64>>,
    #[serde(default)]
    pub known_multipliers: Vec<MultiplierVector>,
}

pub type ReferenceFn = Arc<dyn Fn(&[f64], &MultiplierVector, f64) -> ExtendedValue + Send + Sync>;

/// A hand-derived closed form of the augmented Lagrangian for one choice of
/// augmenting function.
#[derive(Clone)]
pub struct ReferenceLagrangian {
    pub sigma: AugmentingFunction,
    pub label: String,
    pub eval: ReferenceFn,
}

impl fmt::Debug for ReferenceLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceLagrangian")
            .field("sigma", &self.sigma)
            .field("label", &self.label)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub id: String,
    pub dim: usize,
    pub objective: ScalarField,
    pub constraints: ConstraintSystem,
    pub region: FeasibleRegion,
    pub known: Option<KnownData>,
    pub reference: Option<ReferenceLagrangian>,
}

impl ProblemSpec {
    /// Validates dimensions and the listed global solutions.
    pub fn new(
        id: impl Into<String>,
        objective: ScalarField,
        constraints: ConstraintSystem,
        region: FeasibleRegion,
        known: Option<KnownData>,
    ) -> Result<Self> {
        let dim = objective.dim();
        if dim == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        for g in constraints.equalities.iter().chain(&constraints.inequalities) {
            check_dim(&format!("constraint `{}`", g.label()), dim, g.dim())?;
        }
        if let Some(g) = &constraints.sdp {
            check_dim("SDP block", dim, g.dim())?;
        }
        region.check(dim)?;
        let spec = ProblemSpec {
            id: id.into(),
            dim,
            objective,
            constraints,
            region,
            known,
            reference: None,
        };
        spec.check_known()?;
        Ok(spec)
    }

    pub fn with_reference(mut self, reference: ReferenceLagrangian) -> Self {
        self.reference = Some(reference);
        self
    }

    fn check_known(&self) -> Result<()> {
        let Some(k) = &self.known else { return Ok(()) };
        for x in &k.global_solutions {
            check_dim("known global solution", self.dim, x.len())?;
            let res = feasibility_residual(self, x)?;
            if res > KNOWN_DATA_TOL {
                return Err(Error::InvalidProblem(format!(
                    "listed solution {x:?} is infeasible (residual {res:e})"
                )));
            }
            let f = self.objective.eval(x);
            if (f - k.f_star).abs() > KNOWN_DATA_TOL {
                return Err(Error::InvalidProblem(format!(
                    "listed solution {x:?} has f = {f}, expected f* = {}",
                    k.f_star
                )));
            }
        }
        for m in &k.known_multipliers {
            self.constraints.check_multiplier(m)?;
        }
        Ok(())
    }

    pub fn f_star(&self) -> Option<f64> {
        self.known.as_ref().map(|k| k.f_star)
    }

    pub fn global_solutions(&self) -> &[Vec<f64>] {
        self.known
            .as_ref()
            .map(|k| k.global_solutions.as_slice())
            .unwrap_or(&[])
    }

    /// JSON description for listings.
    pub fn describe(&self) -> Value {
        json!({
            "id": self.id,
            "dimension": self.dim,
            "objective": self.objective.label(),
            "objective_smoothness": self.objective.smoothness(),
            "equalities": self.constraints.equalities.iter().map(|g| g.label()).collect::<Vec<_>>(),
            "inequalities": self.constraints.inequalities.iter().map(|g| g.label()).collect::<Vec<_>>(),
            "sdp_order": self.constraints.sdp_order(),
            "region": self.region,
            "known": self.known,
            "reference_lagrangian": self.reference.as_ref().map(|r| json!({"sigma": r.sigma, "formula": r.label})),
        })
    }
}

/// Aggregate constraint violation: the largest of `|g_i|`, `max(g_j, 0)`,
/// `max(lambda_max(G), 0)` and the distance to the region.
pub fn feasibility_residual(spec: &ProblemSpec, x: &[f64]) -> Result<f64> {
    check_dim("point", spec.dim, x.len())?;
    let mut r: f64 = 0.0;
    for g in &spec.constraints.equalities {
        r = r.max(g.eval(x).abs());
    }
    for g in &spec.constraints.inequalities {
        r = r.max(g.eval(x).max(0.0));
    }
    if let Some(g) = &spec.constraints.sdp {
        r = r.max(max_eigenvalue(&g.eval(x))?.max(0.0));
    }
    r = r.max(spec.region.distance(x));
    if r.is_nan() {
        return Err(Error::NonFinite(format!("constraint value at {x:?}")));
    }
    Ok(r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub points_checked: usize,
    pub max_gradient_deviation: Option<f64>,
    pub max_hessian_deviation: Option<f64>,
    /// Indices of sample points where the field was not finite.
    pub flagged_points: Vec<usize>,
    pub tol: f64,
    pub passed: bool,
}

/// Compares analytic derivatives against central differences (step 1e-5).
pub fn validate_oracles(field: &ScalarField, points: &[Vec<f64>], tol: f64) -> Result<OracleReport> {
    const H: f64 = 1e-5;
    let d = field.dim();
    let mut gdev: Option<f64> = field.has_gradient().then_some(0.0);
    let mut hdev: Option<f64> = field.has_hessian().then_some(0.0);
    let mut flagged = Vec::new();
    for (k, x) in points.iter().enumerate() {
        check_dim("oracle sample point", d, x.len())?;
        if !field.eval(x).is_finite() {
            flagged.push(k);
            continue;
        }
        let shifted = |i: usize, s: f64| {
            let mut y = x.clone();
            y[i] += s;
            y
        };
        if let Some(dev) = gdev.as_mut() {
            let g = field.gradient(x)?;
            for i in 0..d {
                let fd = (field.eval(&shifted(i, H)) - field.eval(&shifted(i, -H))) / (2.0 * H);
                if !fd.is_finite() || !g[i].is_finite() {
                    flagged.push(k);
                    continue;
                }
                *dev = dev.max((fd - g[i]).abs());
            }
        }
        if let Some(dev) = hdev.as_mut() {
            let hm = field.hessian(x)?;
            for j in 0..d {
                // Differences of the gradient when it exists, else of values.
                let col: Vec<f64> = if field.has_gradient() {
                    let gp = field.gradient(&shifted(j, H))?;
                    let gm = field.gradient(&shifted(j, -H))?;
                    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * H)).collect()
                } else {
                    (0..d)
                        .map(|i| {
                            let f = |si: f64, sj: f64| {
                                let mut y = x.clone();
                                y[i] += si;
                                y[j] += sj;
                                field.eval(&y)
                            };
                            (f(H, H) - f(H, -H) - f(-H, H) + f(-H, -H)) / (4.0 * H * H)
                        })
                        .collect()
                };
                for i in 0..d {
                    if col[i].is_finite() {
                        *dev = dev.max((col[i] - hm.get(i, j)).abs());
                    } else {
                        flagged.push(k);
                    }
                }
            }
        }
    }
    flagged.sort_unstable();
    flagged.dedup();
    let passed = gdev.is_none_or(|v| v <= tol) && hdev.is_none_or(|v| v <= tol);
    Ok(OracleReport {
        points_checked: points.len(),
        max_gradient_deviation: gdev,
        max_hessian_deviation: hdev,
        flagged_points: flagged,
        tol,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p11_like() -> ProblemSpec {
        let f = ScalarField::parse(2, "x0^2 - abs(x1)").unwrap();
        let h = ScalarField::parse(2, "x1").unwrap();
        ProblemSpec::new(
            "t",
            f,
            ConstraintSystem {
                equalities: vec![h],
                ..Default::default()
            },
            FeasibleRegion::WholeSpace,
            Some(KnownData {
                f_star: 0.0,
                global_solutions: vec![vec![0.0, 0.0]],
                known_multipliers: vec![],
            }),
        )
        .unwrap()
    }

    #[test]
    fn residual_of_equality() {
        let p = p11_like();
        assert_eq!(feasibility_residual(&p, &[0.0, 0.5]).unwrap(), 0.5);
        assert_eq!(feasibility_residual(&p, &[3.0, 0.0]).unwrap(), 0.0);
        assert!(feasibility_residual(&p, &[0.0]).is_err());
    }

    #[test]
    fn bad_known_solution_rejected() {
        let f = ScalarField::parse(1, "x0^2").unwrap();
        let err = ProblemSpec::new(
            "bad",
            f,
            ConstraintSystem::default(),
            FeasibleRegion::WholeSpace,
            Some(KnownData {
                f_star: 0.0,
                global_solutions: vec![vec![1.0]],
                known_multipliers: vec![],
            }),
        );
        assert!(err.is_err());
    }

    #[test]
    fn smoothness_tags_need_oracles() {
        let f = ScalarField::new(1, "raw", Arc::new(|x: &[f64]| x[0]));
        assert!(f.clone().with_smoothness(Smoothness::C2).is_err());
        assert!(f.with_smoothness(Smoothness::C11).is_err());
        let g = ScalarField::parse(1, "abs(x0)").unwrap();
        assert_eq!(g.smoothness(), Smoothness::C0);
        assert!(!g.has_hessian());
    }

    #[test]
    fn oracle_validation_catches_planted_fault() {
        let good = ScalarField::parse(2, "x0^2").unwrap();
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.3 - 1.0, 0.2 * i as f64]).collect();
        let rep = validate_oracles(&good, &pts, 1e-6).unwrap();
        assert!(rep.passed);
        let bad = ScalarField::new(2, "bad", Arc::new(|x: &[f64]| x[0] * x[0]))
            .with_gradient(Arc::new(|x: &[f64]| vec![4.0 * x[0], 0.0]));
        let rep = validate_oracles(&bad, &pts, 1e-6).unwrap();
        assert!(!rep.passed);
        assert!(rep.max_gradient_deviation.unwrap() > 1.0);
        let nan = ScalarField::parse(1, "ln(x0)").unwrap();
        let rep = validate_oracles(&nan, &[vec![-1.0], vec![1.0]], 1e-4).unwrap();
        assert_eq!(rep.flagged_points, vec![0]);
    }

    #[test]
    fn region_geometry() {
        let b = FeasibleRegion::Box {
            lower: vec![0.0, f64::NEG_INFINITY],
            upper: vec![1.0, 2.0],
        };
        assert_eq!(b.project(&[-1.0, 5.0]), vec![0.0, 2.0]);
        assert!(!b.is_bounded());
        assert!(b.in_tangent_cone(&[0.0, 0.0], &[1.0, -1.0], 0.0));
        assert!(!b.in_tangent_cone(&[0.0, 0.0], &[-1.0, 0.0], 0.0));
        assert_eq!(b.tangent_generators(&[0.0, 2.0]).len(), 2);
        let ball = FeasibleRegion::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        assert!((ball.distance(&[3.0, 4.0]) - 4.0).abs() < 1e-12);
        assert!(ball.is_bounded());
        assert_eq!(ball.tangent_generators(&[1.0, 0.0]).len(), 3);
        let s = serde_json::to_string(&b).unwrap();
        let back: FeasibleRegion = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }
}
