//! Augmenting functions, multipliers and the augmented Lagrangian itself,
//! together with the penalty function `F(x, r, C)`, the penalty term `phi`
//! and the optimal value function `v(p)`.
//!
//! The parameterization throughout is the standard one: a perturbation
//! `p = (p_I, p_J, q)` shifts the constraints to `g_I(x) + p_I = 0`,
//! `g_J(x) + p_J <= 0`, `G(x) + q <= 0`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{max_eigenvalue, trace_psd_part_sq, SymMatrix};
use crate::problem::ProblemSpec;
use crate::search::{global_min, SearchConfig, SearchStatus};

/// Element of the extended real line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedValue {
    Finite(f64),
    PosInf,
    NegInf,
}

impl ExtendedValue {
    /// NaN maps to `+inf` (an undefined objective is treated as infeasible).
    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() || v == f64::INFINITY {
            ExtendedValue::PosInf
        } else if v == f64::NEG_INFINITY {
            ExtendedValue::NegInf
        } else {
            ExtendedValue::Finite(v)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedValue::Finite(v) => v,
            ExtendedValue::PosInf => f64::INFINITY,
            ExtendedValue::NegInf => f64::NEG_INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedValue::Finite(_))
    }

    pub fn is_neg_inf(self) -> bool {
        self == ExtendedValue::NegInf
    }

    pub fn is_pos_inf(self) -> bool {
        self == ExtendedValue::PosInf
    }
}

impl PartialOrd for ExtendedValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtendedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedValue::Finite(v) => write!(f, "{v}"),
            ExtendedValue::PosInf => write!(f, "+inf"),
            ExtendedValue::NegInf => write!(f, "-inf"),
        }
    }
}

impl Serialize for ExtendedValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedValue::Finite(v) => s.serialize_f64(*v),
            ExtendedValue::PosInf => s.serialize_str("+inf"),
            ExtendedValue::NegInf => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => Ok(ExtendedValue::from_f64(n.as_f64().unwrap_or(f64::NAN))),
            serde_json::Value::String(s) if s == "+inf" || s == "inf" => Ok(ExtendedValue::PosInf),
            serde_json::Value::String(s) if s == "-inf" => Ok(ExtendedValue::NegInf),
            other => Err(serde::de::Error::custom(format!("bad extended value {other}"))),
        }
    }
}

/// The augmenting function `sigma`, a function of the Euclidean (Frobenius on
/// the SDP block) norm of the perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentingFunction {
    /// `||p||`, the sharp Lagrangian.
    Norm,
    /// `||p||^2 / 2`, the proximal Lagrangian.
    HalfSquaredNorm,
    /// `||p||^gamma` with `gamma` in (0, 1).
    PowerGamma(f64),
    /// `||p||^beta` with `beta > 1`.
    PowerBeta(f64),
}

impl AugmentingFunction {
    pub fn power_gamma(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma < 1.0 {
            Ok(AugmentingFunction::PowerGamma(gamma))
        } else {
            Err(Error::InvalidParameter(format!("gamma must lie in (0,1), got {gamma}")))
        }
    }

    pub fn power_beta(beta: f64) -> Result<Self> {
        if beta > 1.0 && beta.is_finite() {
            Ok(AugmentingFunction::PowerBeta(beta))
        } else {
            Err(Error::InvalidParameter(format!("beta must exceed 1, got {beta}")))
        }
    }

    /// `sigma` as a function of `||p||`.
    pub fn of_norm(&self, n: f64) -> f64 {
        match *self {
            AugmentingFunction::Norm => n,
            AugmentingFunction::HalfSquaredNorm => 0.5 * n * n,
            AugmentingFunction::PowerGamma(g) => n.powf(g),
            AugmentingFunction::PowerBeta(b) => n.powf(b),
        }
    }

    pub fn of_norm_sq(&self, s: f64) -> f64 {
        match self {
            AugmentingFunction::HalfSquaredNorm => 0.5 * s,
            _ => self.of_norm(s.max(0.0).sqrt()),
        }
    }

    pub fn value(&self, p: &MultiplierVector) -> f64 {
        self.of_norm_sq(p.norm_sq())
    }

    /// `inf { sigma(p) : ||p|| >= rho }`.
    pub fn valley_margin(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!("valley radius must be positive, got {rho}")));
        }
        Ok(self.of_norm(rho))
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, AugmentingFunction::PowerGamma(_))
    }
}

impl fmt::Display for AugmentingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentingFunction::Norm => write!(f, "sharp"),
            AugmentingFunction::HalfSquaredNorm => write!(f, "prox"),
            AugmentingFunction::PowerGamma(g) => write!(f, "gamma:{g}"),
            AugmentingFunction::PowerBeta(b) => write!(f, "beta:{b}"),
        }
    }
}

impl FromStr for AugmentingFunction {
    type Err = Error;

    /// Accepts `sharp`/`norm`, `prox`/`proximal`/`hpr`, `gamma:<g>`,
    /// `beta:<b>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad exponent in sigma `{s}`")))
        };
        match s.as_str() {
            "sharp" | "norm" => Ok(AugmentingFunction::Norm),
            "prox" | "proximal" | "hpr" | "half-squared" => Ok(AugmentingFunction::HalfSquaredNorm),
            _ => {
                if let Some(g) = s.strip_prefix("gamma:") {
                    AugmentingFunction::power_gamma(num(g)?)
                } else if let Some(b) = s.strip_prefix("beta:") {
                    AugmentingFunction::power_beta(num(b)?)
                } else {
                    Err(Error::Parse(format!(
                        "unknown sigma `{s}` (expected sharp, prox, gamma:<g>, beta:<b>)"
                    )))
                }
            }
        }
    }
}

impl Serialize for AugmentingFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AugmentingFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Multiplier `(lambda_I, lambda_J, mu)`. The same shape doubles as a
/// perturbation `p = (p_I, p_J, q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierVector {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    #[serde(default)]
    pub mu: Option<SymMatrix>,
}

impl MultiplierVector {
    pub fn nlp(eq: Vec<f64>, ineq: Vec<f64>) -> Self {
        MultiplierVector { eq, ineq, mu: None }
    }

    pub fn dot(&self, other: &MultiplierVector) -> f64 {
        let mut s: f64 = self.eq.iter().zip(&other.eq).map(|(a, b)| a * b).sum();
        s += self.ineq.iter().zip(&other.ineq).map(|(a, b)| a * b).sum::<f64>();
        if let (Some(a), Some(b)) = (&self.mu, &other.mu) {
            s += a.dot(b);
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: f64) -> MultiplierVector {
        MultiplierVector {
            eq: self.eq.iter().map(|v| v * s).collect(),
            ineq: self.ineq.iter().map(|v| v * s).collect(),
            mu: self.mu.as_ref().map(|m| m.scale(s)),
        }
    }

    /// Number of flat coordinates: `eq`, `ineq`, then the upper triangle
    /// of `mu` row by row.
    pub fn flat_len(&self) -> usize {
        let m = self.mu.as_ref().map_or(0, |m| m.order());
        self.eq.len() + self.ineq.len() + m * (m + 1) / 2
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.eq.clone();
        v.extend_from_slice(&self.ineq);
        if let Some(mu) = &self.mu {
            for i in 0..mu.order() {
                for j in i..mu.order() {
                    v.push(mu.get(i, j));
                }
            }
        }
        v
    }

    /// Inverse of [`to_flat`](MultiplierVector::to_flat), using `self` as
    /// the shape template.
    pub fn with_flat(&self, flat: &[f64]) -> MultiplierVector {
        let ne = self.eq.len();
        let ni = self.ineq.len();
        let mu = self.mu.as_ref().map(|m| {
            let mut out = SymMatrix::zeros(m.order());
            let mut k = ne + ni;
            for i in 0..m.order() {
                for j in i..m.order() {
                    out.set(i, j, flat[k]);
                    k += 1;
                }
            }
            out
        });
        MultiplierVector {
            eq: flat[..ne].to_vec(),
            ineq: flat[ne..ne + ni].to_vec(),
            mu,
        }
    }

    /// Parses whitespace/comma separated values (equalities first, then
    /// inequalities) and an optional SDP matrix, checked against `spec`.
    pub fn parse_for(spec: &ProblemSpec, values: Option<&str>, mu: Option<&str>) -> Result<Self> {
        let nums: Vec<f64> = values
            .unwrap_or("")
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad multiplier entry `{s}`"))))
            .collect::<Result<_>>()?;
        let ne = spec.constraints.n_eq();
        let ni = spec.constraints.n_ineq();
        check_dim("multiplier values", ne + ni, nums.len())?;
        let mu = match (mu, spec.constraints.sdp_order()) {
            (Some(text), _) => Some(SymMatrix::parse(text)?),
            (None, Some(m)) => Some(SymMatrix::zeros(m)),
            (None, None) => None,
        };
        let out = MultiplierVector {
            eq: nums[..ne].to_vec(),
            ineq: nums[ne..].to_vec(),
            mu,
        };
        spec.constraints.check_multiplier(&out)?;
        Ok(out)
    }
}

impl fmt::Display for MultiplierVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        let all: Vec<String> = self.eq.iter().chain(&self.ineq).map(|v| format!("{v}")).collect();
        write!(f, "{}", all.join(", "))?;
        if let Some(mu) = &self.mu {
            let rows: Vec<String> = mu
                .rows()
                .iter()
                .map(|r| r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" "))
                .collect();
            if !all.is_empty() {
                write!(f, "; ")?;
            }
            write!(f, "mu=[{}]", rows.join("; "))?;
        }
        write!(f, ")")
    }
}

/// The set `C` over which the penalty function takes its infimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyRestriction {
    WholeP,
    /// `{p : ||p|| < tau}`.
    NormBall { tau: f64 },
    /// `{p : sigma(p) < delta}`.
    SigmaSublevel { delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvaluatorMode {
    ClosedForm,
    GenericInnerInf,
}

/// Tunables of the numerical inner infimum over inequality slacks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerInfConfig {
    pub p_max: f64,
    pub grid_points: usize,
    pub max_rounds: usize,
    /// Expansion beyond this magnitude while still decreasing counts as
    /// divergence, provided the drop exceeds `divergence_drop`.
    pub divergence_radius: f64,
    pub divergence_drop: f64,
}

impl Default for InnerInfConfig {
    fn default() -> Self {
        InnerInfConfig {
            p_max: 10.0,
            grid_points: 41,
            max_rounds: 50,
            divergence_radius: 1e13,
            divergence_drop: 1e6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LagrangianEvaluator {
    spec: Arc<ProblemSpec>,
    sigma: AugmentingFunction,
    mode: EvaluatorMode,
    inner: InnerInfConfig,
}

/// Whether some closed form of `L` exists for this problem and `sigma`.
pub fn closed_form_available(spec: &ProblemSpec, sigma: AugmentingFunction) -> bool {
    spec.reference.as_ref().is_some_and(|r| r.sigma == sigma)
        || spec.constraints.is_equality_only()
        || sigma == AugmentingFunction::HalfSquaredNorm
}

/// Result of evaluating `v(p)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueFunctionResult {
    pub value: ExtendedValue,
    pub status: SearchStatus,
    pub x: Vec<f64>,
    pub residual: f64,
}

impl LagrangianEvaluator {
    /// Picks the closed form when available, else the numerical infimum.
    pub fn new(spec: Arc<ProblemSpec>, sigma: AugmentingFunction) -> Self {
        let mode = if closed_form_available(&spec, sigma) {
            EvaluatorMode::ClosedForm
        } else {
            EvaluatorMode::GenericInnerInf
        };
        LagrangianEvaluator {
            spec,
            sigma,
            mode,
            inner: InnerInfConfig::default(),
        }
    }

    pub fn with_mode(mut self, mode: EvaluatorMode) -> Result<Self> {
        if mode == EvaluatorMode::ClosedForm && !closed_form_available(&self.spec, self.sigma) {
            return Err(Error::ClosedFormUnavailable(format!(
                "problem `{}` with sigma `{}`",
                self.spec.id, self.sigma
            )));
        }
        if mode == EvaluatorMode::GenericInnerInf && self.spec.constraints.sdp.is_some() {
            return Err(Error::Unsupported(
                "numerical inner infimum over semidefinite perturbations".into(),
            ));
        }
        self.mode = mode;
        Ok(self)
    }

    pub fn with_inner_config(mut self, inner: InnerInfConfig) -> Self {
        self.inner = inner;
        self
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> Arc<ProblemSpec> {
        self.spec.clone()
    }

    pub fn sigma(&self) -> AugmentingFunction {
        self.sigma
    }

    pub fn mode(&self) -> EvaluatorMode {
        self.mode
    }

    /// Same problem and mode selection with a different `sigma`.
    pub fn with_sigma(&self, sigma: AugmentingFunction) -> Self {
        LagrangianEvaluator::new(self.spec.clone(), sigma).with_inner_config(self.inner)
    }

    fn check_point(&self, x: &[f64], lam: &MultiplierVector, r: f64) -> Result<()> {
        check_dim("point", self.spec.dim, x.len())?;
        self.spec.constraints.check_multiplier(lam)?;
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("penalty parameter must be finite and >= 0, got {r}")));
        }
        Ok(())
    }

    fn outside_region(&self, x: &[f64]) -> bool {
        !self.spec.region.contains(x, 1e-12)
    }

    /// `L(x, lambda, r)`.
    pub fn eval_lagrangian(&self, x: &[f64], lam: &MultiplierVector, r: f64) -> Result<ExtendedValue> {
        self.check_point(x, lam, r)?;
        if self.outside_region(x) {
            return Ok(ExtendedValue::PosInf);
        }
        let f0 = self.spec.objective.eval(x);
        if !f0.is_finite() {
            return Ok(ExtendedValue::PosInf);
        }
        match self.mode {
            EvaluatorMode::ClosedForm => self.closed_form(x, f0, lam, r),
            EvaluatorMode::GenericInnerInf => Ok(self.generic(x, f0, lam, r)),
        }
    }

    fn closed_form(&self, x: &[f64], f0: f64, lam: &MultiplierVector, r: f64) -> Result<ExtendedValue> {
        if let Some(reference) = &self.spec.reference {
            if reference.sigma == self.sigma {
                return Ok((reference.eval)(x, lam, r));
            }
        }
        let cons = &self.spec.constraints;
        if cons.is_equality_only() {
            // The perturbation is forced to p = -g(x).
            let g: Vec<f64> = cons.equalities.iter().map(|gi| gi.eval(x)).collect();
            let lin: f64 = lam.eq.iter().zip(&g).map(|(l, v)| l * v).sum();
            let nsq: f64 = g.iter().map(|v| v * v).sum();
            return Ok(ExtendedValue::from_f64(f0 + lin + r * self.sigma.of_norm_sq(nsq)));
        }
        if self.sigma != AugmentingFunction::HalfSquaredNorm {
            return Err(Error::ClosedFormUnavailable(format!(
                "problem `{}` with sigma `{}`",
                self.spec.id, self.sigma
            )));
        }
        let mut total = f0;
        for (l, gi) in lam.eq.iter().zip(&cons.equalities) {
            let g = gi.eval(x);
            total += l * g + 0.5 * r * g * g;
        }
        for (l, gj) in lam.ineq.iter().zip(&cons.inequalities) {
            let g = gj.eval(x);
            if r == 0.0 {
                // Ordinary Lagrangian; negative multipliers send the slack to -inf.
                if *l < 0.0 {
                    return Ok(ExtendedValue::NegInf);
                }
                total += l * g;
            } else {
                let m = g.max(-l / r);
                total += l * m + 0.5 * r * m * m;
            }
        }
        if let Some(gf) = &cons.sdp {
            if r <= 0.0 {
                return Err(Error::InvalidParameter(
                    "the semidefinite closed form needs r > 0".into(),
                ));
            }
            let g = gf.eval(x);
            let mu = lam
                .mu
                .clone()
                .unwrap_or_else(|| SymMatrix::zeros(gf.order()));
            let shifted = g.scale(r).add(&mu);
            let tr = trace_psd_part_sq(&shifted)?;
            let mu_sq = mu.dot(&mu);
            total += (tr - mu_sq) / (2.0 * r);
        }
        Ok(ExtendedValue::from_f64(total))
    }

    /// Inner objective `f0 - <lambda, p> + r sigma(p)` with `p_I = -g_I`
    /// fixed and the inequality slacks `p_J` free below `-g_J`.
    fn generic(&self, x: &[f64], f0: f64, lam: &MultiplierVector, r: f64) -> ExtendedValue {
        let cons = &self.spec.constraints;
        let p_eq: Vec<f64> = cons.equalities.iter().map(|g| -g.eval(x)).collect();
        let ub: Vec<f64> = cons.inequalities.iter().map(|g| -g.eval(x)).collect();
        if p_eq.iter().chain(&ub).any(|v| !v.is_finite()) {
            return ExtendedValue::PosInf;
        }
        let eq_lin: f64 = lam.eq.iter().zip(&p_eq).map(|(l, p)| l * p).sum();
        let eq_sq: f64 = p_eq.iter().map(|p| p * p).sum();
        let sigma = self.sigma;
        let lam_j = &lam.ineq;
        let inner = |t: &[f64]| -> f64 {
            let lin: f64 = lam_j.iter().zip(t).map(|(l, p)| l * p).sum();
            let sq: f64 = t.iter().map(|p| p * p).sum();
            f0 - eq_lin - lin + r * sigma.of_norm_sq(eq_sq + sq)
        };
        let k = ub.len();
        if k == 0 {
            return ExtendedValue::from_f64(inner(&[]));
        }
        let cfg = self.inner;
        let grid: Vec<f64> = (0..cfg.grid_points)
            .map(|i| -cfg.p_max + 2.0 * cfg.p_max * i as f64 / (cfg.grid_points - 1) as f64)
            .collect();
        let mut t: Vec<f64> = ub.iter().map(|u| u.min(0.0)).collect();
        let mut best = inner(&t);
        if k <= 2 {
            let axis = |j: usize| -> Vec<f64> {
                let mut v: Vec<f64> = grid.iter().map(|g| g.min(ub[j])).collect();
                v.push(ub[j]);
                v
            };
            let a0 = axis(0);
            let a1 = if k == 2 { axis(1) } else { vec![0.0] };
            for &u in &a0 {
                for &w in &a1 {
                    let cand: Vec<f64> = if k == 2 { vec![u, w] } else { vec![u] };
                    let v = inner(&cand);
                    if v < best {
                        best = v;
                        t = cand;
                    }
                }
            }
        }
        for _round in 0..cfg.max_rounds {
            let start = best;
            for j in 0..k {
                let line = |s: f64| {
                    let mut c = t.clone();
                    c[j] = s;
                    inner(&c)
                };
                match line_min(&line, t[j], ub[j], &grid, &cfg) {
                    LineMin::Diverged => return ExtendedValue::NegInf,
                    LineMin::At(s, v) => {
                        if v < best {
                            best = v;
                            t[j] = s;
                        }
                    }
                }
            }
            if start - best <= 1e-15 * (1.0 + best.abs()) {
                break;
            }
        }
        ExtendedValue::from_f64(best)
    }

    /// `F(x, r, C)`: the infimum of `Phi(x, p) + r sigma(p)` over `p` in `C`.
    pub fn eval_penalty_f(&self, x: &[f64], r: f64, c: PenaltyRestriction) -> Result<ExtendedValue> {
        let zero = self.spec.constraints.zero_multiplier();
        if c == PenaltyRestriction::WholeP {
            return self.eval_lagrangian(x, &zero, r);
        }
        self.check_point(x, &zero, r)?;
        if self.outside_region(x) {
            return Ok(ExtendedValue::PosInf);
        }
        let f0 = self.spec.objective.eval(x);
        if !f0.is_finite() {
            return Ok(ExtendedValue::PosInf);
        }
        // The cheapest feasible shift has norm sqrt(phi).
        let dist = self.penalty_term_phi(x)?.sqrt();
        let s = self.sigma.of_norm(dist);
        let inside = match c {
            PenaltyRestriction::NormBall { tau } => dist < tau,
            PenaltyRestriction::SigmaSublevel { delta } => s < delta,
            PenaltyRestriction::WholeP => true,
        };
        Ok(if inside {
            ExtendedValue::from_f64(f0 + r * s)
        } else {
            ExtendedValue::PosInf
        })
    }

    /// `sum g_I^2 + sum max(g_J, 0)^2 + Tr([G]_+^2)`.
    pub fn penalty_term_phi(&self, x: &[f64]) -> Result<f64> {
        penalty_term_phi(&self.spec, x)
    }

    /// Optimal value of the problem with constraints shifted by `p`,
    /// computed by an exact l1 penalty with escalating weight.
    pub fn value_function_v(&self, p: &MultiplierVector, cfg: &SearchConfig) -> Result<ValueFunctionResult> {
        let spec = &self.spec;
        spec.constraints.check_multiplier(p)?;
        const FEAS_TOL: f64 = 1e-7;
        let residual_l1 = |x: &[f64]| -> f64 {
            let c = &spec.constraints;
            let mut s = 0.0;
            for (g, pi) in c.equalities.iter().zip(&p.eq) {
                s += (g.eval(x) + pi).abs();
            }
            for (g, pj) in c.inequalities.iter().zip(&p.ineq) {
                s += (g.eval(x) + pj).max(0.0);
            }
            if let Some(gf) = &c.sdp {
                let mut m = gf.eval(x);
                if let Some(q) = &p.mu {
                    m = m.add(q);
                }
                s += max_eigenvalue(&m).map(|v| v.max(0.0)).unwrap_or(f64::INFINITY);
            }
            s
        };
        let mut cfg = cfg.clone();
        let mut last = None;
        for rho in [1e3, 1e5, 1e7] {
            let obj = |x: &[f64]| {
                let f = spec.objective.eval(x);
                if !f.is_finite() {
                    return ExtendedValue::PosInf;
                }
                ExtendedValue::from_f64(f + rho * residual_l1(x))
            };
            let res = global_min(obj, spec.dim, &spec.region, &cfg);
            if res.status == SearchStatus::DivergingBelow {
                return Ok(ValueFunctionResult {
                    value: ExtendedValue::NegInf,
                    status: res.status,
                    x: res.best_x,
                    residual: f64::NAN,
                });
            }
            let resid = residual_l1(&res.best_x);
            if resid <= FEAS_TOL {
                return Ok(ValueFunctionResult {
                    value: ExtendedValue::from_f64(spec.objective.eval(&res.best_x)),
                    status: res.status,
                    x: res.best_x,
                    residual: resid,
                });
            }
            cfg.extra_starts.push(res.best_x.clone());
            last = Some((res, resid));
        }
        let (res, resid) = last.expect("at least one penalty stage");
        Ok(ValueFunctionResult {
            value: ExtendedValue::PosInf,
            status: res.status,
            x: res.best_x,
            residual: resid,
        })
    }
}

/// Free-standing form of [`LagrangianEvaluator::penalty_term_phi`].
pub fn penalty_term_phi(spec: &ProblemSpec, x: &[f64]) -> Result<f64> {
    check_dim("point", spec.dim, x.len())?;
    let c = &spec.constraints;
    let mut s = 0.0;
    for g in &c.equalities {
        let v = g.eval(x);
        s += v * v;
    }
    for g in &c.inequalities {
        let v = g.eval(x).max(0.0);
        s += v * v;
    }
    if let Some(gf) = &c.sdp {
        s += trace_psd_part_sq(&gf.eval(x))?;
    }
    Ok(s)
}

enum LineMin {
    At(f64, f64),
    Diverged,
}

/// Minimizes `h` over `(-inf, ub]`: grid scan, downward expansion when the
/// best point is leftmost, then golden section around the best point.
fn line_min(h: &dyn Fn(f64) -> f64, current: f64, ub: f64, grid: &[f64], cfg: &InnerInfConfig) -> LineMin {
    let mut pts: Vec<f64> = grid.iter().copied().filter(|g| *g < ub).collect();
    pts.push(ub);
    pts.push(current.min(ub));
    if ub >= 0.0 {
        pts.push(0.0);
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let mut vals: Vec<f64> = pts.iter().map(|&s| h(s)).collect();
    let mut bi = argmin(&vals);
    if bi == 0 {
        let start_val = vals[0];
        let mut step = pts[0].abs().max(1.0);
        loop {
            let s = pts[0] - step;
            let v = h(s);
            if v < vals[0] {
                pts.insert(0, s);
                vals.insert(0, v);
                if s < -cfg.divergence_radius {
                    if v < start_val - cfg.divergence_drop {
                        return LineMin::Diverged;
                    }
                    break;
                }
                step *= 2.0;
            } else {
                pts.insert(0, s);
                vals.insert(0, v);
                break;
            }
        }
        bi = argmin(&vals);
    }
    let lo = if bi > 0 { pts[bi - 1] } else { pts[bi] };
    let hi = if bi + 1 < pts.len() { pts[bi + 1] } else { pts[bi] };
    let (s, v) = golden(h, lo, hi);
    if v < vals[bi] {
        LineMin::At(s, v)
    } else {
        LineMin::At(pts[bi], vals[bi])
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut bi = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[bi] {
            bi = i;
        }
    }
    bi
}

fn golden(h: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    if b <= a {
        return (a, h(a));
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = h(c);
    let mut fd = h(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = h(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
