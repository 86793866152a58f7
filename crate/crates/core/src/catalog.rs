//! Built-in problems and the JSON problem-file loader.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::lagrangian::{AugmentingFunction, ExtendedValue, MultiplierVector};
use crate::linalg::SymMatrix;
use crate::problem::{
    ConstraintSystem, FeasibleRegion, KnownData, MatrixField, ProblemSpec, ReferenceLagrangian, ScalarField,
};

#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub id: String,
    pub spec: ProblemSpec,
    pub notes: String,
    pub default_sigma: AugmentingFunction,
    /// Multipliers exercised by the localization sweeps.
    pub test_multipliers: Vec<MultiplierVector>,
    /// A published least exact penalty parameter `(lambda, r)` that the
    /// toolkit reports against its own estimate.
    pub reference_r: Option<(MultiplierVector, f64)>,
}

pub const IDS: [&str; 7] = ["P11", "P12", "P13", "SDP-TOY", "SYN-QP", "SYN-CIRCLE", "SYN-DISK"];

fn field(dim: usize, text: &str) -> ScalarField {
    ScalarField::parse(dim, text).expect("built-in expression parses")
}

fn eq_only(eqs: &[&str], dim: usize) -> ConstraintSystem {
    ConstraintSystem {
        equalities: eqs.iter().map(|t| field(dim, t)).collect(),
        ..Default::default()
    }
}

fn known(f_star: f64, sols: Vec<Vec<f64>>, mults: Vec<MultiplierVector>) -> Option<KnownData> {
    Some(KnownData {
        f_star,
        global_solutions: sols,
        known_multipliers: mults,
    })
}

fn p11() -> CatalogEntry {
    let spec = ProblemSpec::new(
        "P11",
        field(2, "x0^2 - abs(x1)"),
        eq_only(&["x1"], 2),
        FeasibleRegion::WholeSpace,
        known(0.0, vec![vec![0.0, 0.0]], vec![MultiplierVector::nlp(vec![0.0], vec![])]),
    )
    .expect("P11 is consistent")
    .with_reference(ReferenceLagrangian {
        sigma: AugmentingFunction::Norm,
        label: "x0^2 - |x1| + lambda*x1 + r*|x1|".into(),
        eval: Arc::new(|x, lam, r| ExtendedValue::Finite(x[0] * x[0] - x[1].abs() + lam.eq[0] * x[1] + r * x[1].abs())),
    });
    CatalogEntry {
        id: "P11".into(),
        spec,
        notes: "min x0^2 - |x1| s.t. x1 = 0; every lambda is a multiplier with r(lambda) = 1 + |lambda| (sharp)".into(),
        default_sigma: AugmentingFunction::Norm,
        test_multipliers: [-2.0, 0.0, 2.0].iter().map(|l| MultiplierVector::nlp(vec![*l], vec![])).collect(),
        reference_r: None,
    }
}

/// Closed form of the sharp Lagrangian of the one-dimensional problem with
/// `f0(x) = -x` for `x <= 0`, `-x^2` for `x > 0`, and `x <= 0`.
fn p12_reference(x: &[f64], lam: &MultiplierVector, r: f64) -> ExtendedValue {
    let x = x[0];
    let l = lam.ineq[0];
    let f0 = if x <= 0.0 { -x } else { -x * x };
    if r >= l.abs() {
        ExtendedValue::Finite(f0 + (r + l) * x.max(0.0))
    } else if l < 0.0 {
        ExtendedValue::NegInf
    } else {
        ExtendedValue::Finite(f0 + l * x + r * x.abs())
    }
}

fn p12() -> CatalogEntry {
    let objective = field(1, "-min(x0, 0) - max(x0, 0)^2");
    let spec = ProblemSpec::new(
        "P12",
        objective,
        ConstraintSystem {
            inequalities: vec![field(1, "x0")],
            ..Default::default()
        },
        FeasibleRegion::WholeSpace,
        known(0.0, vec![vec![0.0]], vec![]),
    )
    .expect("P12 is consistent")
    .with_reference(ReferenceLagrangian {
        sigma: AugmentingFunction::Norm,
        label: "f0 + (r + lambda) max(x,0) if r >= |lambda|; -inf if r < |lambda|, lambda < 0; f0 + lambda x + r|x| otherwise".into(),
        eval: Arc::new(p12_reference),
    });
    CatalogEntry {
        id: "P12".into(),
        spec,
        notes: "min f0(x) s.t. x <= 0 with f0 = -x (x <= 0), -x^2 (x > 0); every lambda is a local multiplier, none is global".into(),
        default_sigma: AugmentingFunction::Norm,
        test_multipliers: [-1.0, 0.0, 1.0].iter().map(|l| MultiplierVector::nlp(vec![], vec![*l])).collect(),
        reference_r: None,
    }
}

fn p13() -> CatalogEntry {
    let spec = ProblemSpec::new(
        "P13",
        field(2, "x0^2 - x1 + 2*cos(x1)"),
        eq_only(&["x1"], 2),
        FeasibleRegion::WholeSpace,
        known(2.0, vec![vec![0.0, 0.0]], vec![MultiplierVector::nlp(vec![1.0], vec![])]),
    )
    .expect("P13 is consistent")
    .with_reference(ReferenceLagrangian {
        sigma: AugmentingFunction::HalfSquaredNorm,
        label: "x0^2 - x1 + 2 cos x1 + lambda*x1 + (r/2) x1^2".into(),
        eval: Arc::new(|x, lam, r| {
            ExtendedValue::Finite(x[0] * x[0] - x[1] + 2.0 * x[1].cos() + lam.eq[0] * x[1] + 0.5 * r * x[1] * x[1])
        }),
    });
    CatalogEntry {
        id: "P13".into(),
        spec,
        notes: "min x0^2 - x1 + 2 cos x1 s.t. x1 = 0; lambda = 1 is a proximal multiplier but not one for sigma = ||p||^(2+eps)".into(),
        default_sigma: AugmentingFunction::HalfSquaredNorm,
        test_multipliers: [1.0, 0.0].iter().map(|l| MultiplierVector::nlp(vec![*l], vec![])).collect(),
        reference_r: Some((MultiplierVector::nlp(vec![1.0], vec![]), 4.0)),
    }
}

fn sdp_toy() -> CatalogEntry {
    let g = MatrixField::affine(SymMatrix::from_diag(&[0.0, -1.0]), vec![SymMatrix::identity(2)])
        .expect("affine block is consistent");
    let mu_star = SymMatrix::from_diag(&[1.0, 0.0]);
    let star = MultiplierVector {
        eq: vec![],
        ineq: vec![],
        mu: Some(mu_star),
    };
    let zero = MultiplierVector {
        eq: vec![],
        ineq: vec![],
        mu: Some(SymMatrix::zeros(2)),
    };
    let spec = ProblemSpec::new(
        "SDP-TOY",
        field(1, "-x0"),
        ConstraintSystem {
            sdp: Some(g),
            ..Default::default()
        },
        FeasibleRegion::WholeSpace,
        known(0.0, vec![vec![0.0]], vec![star.clone()]),
    )
    .expect("SDP-TOY is consistent");
    CatalogEntry {
        id: "SDP-TOY".into(),
        spec,
        notes: "min -x s.t. diag(x, x - 1) <= 0; x* = 0 with mu* = diag(1, 0)".into(),
        default_sigma: AugmentingFunction::HalfSquaredNorm,
        test_multipliers: vec![star, zero],
        reference_r: None,
    }
}

fn syn_qp() -> CatalogEntry {
    let lam = MultiplierVector::nlp(vec![], vec![1.0]);
    let spec = ProblemSpec::new(
        "SYN-QP",
        field(2, "(x0 - 2)^2 + (x1 - 1)^2"),
        ConstraintSystem {
            inequalities: vec![field(2, "x0 + x1 - 2")],
            ..Default::default()
        },
        FeasibleRegion::WholeSpace,
        known(0.5, vec![vec![1.5, 0.5]], vec![lam.clone()]),
    )
    .expect("SYN-QP is consistent");
    CatalogEntry {
        id: "SYN-QP".into(),
        spec,
        notes: "projection of (2,1) onto x0 + x1 <= 2; x* = (1.5, 0.5), lambda* = 1".into(),
        default_sigma: AugmentingFunction::HalfSquaredNorm,
        test_multipliers: vec![lam, MultiplierVector::nlp(vec![], vec![0.0])],
        reference_r: None,
    }
}

fn syn_circle() -> CatalogEntry {
    let lam = MultiplierVector::nlp(vec![0.5], vec![0.0]);
    let spec = ProblemSpec::new(
        "SYN-CIRCLE",
        field(2, "x0 + x1"),
        ConstraintSystem {
            equalities: vec![field(2, "x0^2 + x1^2 - 2")],
            inequalities: vec![field(2, "x0 - x1 - 1")],
            ..Default::default()
        },
        FeasibleRegion::WholeSpace,
        known(-2.0, vec![vec![-1.0, -1.0]], vec![lam.clone()]),
    )
    .expect("SYN-CIRCLE is consistent");
    CatalogEntry {
        id: "SYN-CIRCLE".into(),
        spec,
        notes: "min x0 + x1 on the circle of radius sqrt(2) with an inactive cut; x* = (-1,-1), lambda* = (0.5, 0)".into(),
        default_sigma: AugmentingFunction::HalfSquaredNorm,
        test_multipliers: vec![lam, MultiplierVector::nlp(vec![0.0], vec![0.0])],
        reference_r: None,
    }
}

fn syn_disk() -> CatalogEntry {
    let s = std::f64::consts::SQRT_2;
    let lam = MultiplierVector::nlp(vec![], vec![s - 1.0]);
    let spec = ProblemSpec::new(
        "SYN-DISK",
        field(2, "(x0 - 2)^2 + (x1 - 2)^2"),
        ConstraintSystem {
            inequalities: vec![field(2, "x0^2 + x1^2 - 4")],
            ..Default::default()
        },
        FeasibleRegion::Box {
            lower: vec![-3.0, -3.0],
            upper: vec![3.0, 3.0],
        },
        known(12.0 - 8.0 * s, vec![vec![s, s]], vec![lam.clone()]),
    )
    .expect("SYN-DISK is consistent");
    CatalogEntry {
        id: "SYN-DISK".into(),
        spec,
        notes: "projection of (2,2) onto the disk of radius 2 inside the box [-3,3]^2; lambda* = sqrt(2) - 1".into(),
        default_sigma: AugmentingFunction::HalfSquaredNorm,
        test_multipliers: vec![lam, MultiplierVector::nlp(vec![], vec![0.0])],
        reference_r: None,
    }
}

pub fn get(id: &str) -> Result<CatalogEntry> {
    let key = id.trim().to_ascii_uppercase();
    match key.as_str() {
        "P11" => Ok(p11()),
        "P12" => Ok(p12()),
        "P13" => Ok(p13()),
        "SDP-TOY" => Ok(sdp_toy()),
        "SYN-QP" => Ok(syn_qp()),
        "SYN-CIRCLE" => Ok(syn_circle()),
        "SYN-DISK" => Ok(syn_disk()),
        _ => Err(Error::UnknownProblem {
            id: id.to_string(),
            available: IDS.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

pub fn all() -> Vec<CatalogEntry> {
    IDS.iter().map(|id| get(id).expect("listed id exists")).collect()
}

#[derive(Debug, Deserialize)]
struct SdpFile {
    order: usize,
    affine: Vec<Value>,
}

#[derive(Debug, Deserialize)]
struct ProblemFile {
    id: String,
    dimension: usize,
    objective: Value,
    #[serde(default)]
    equalities: Vec<Value>,
    #[serde(default)]
    inequalities: Vec<Value>,
    #[serde(default)]
    sdp: Option<SdpFile>,
    #[serde(default)]
    region: Option<FeasibleRegion>,
    #[serde(default)]
    known: Option<KnownFile>,
    #[serde(default)]
    sigma: Option<AugmentingFunction>,
}

#[derive(Debug, Serialize, Deserialize)]
struct KnownFile {
    f_star: f64,
    #[serde(default)]
    solutions: Vec<Vec<f64>>,
    #[serde(default)]
    multipliers: Vec<MultiplierVector>,
}

fn matrix_from_json(v: &Value) -> Result<SymMatrix> {
    match v {
        Value::String(s) => SymMatrix::parse(s),
        Value::Array(_) => {
            let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())?;
            SymMatrix::from_rows(&rows)
        }
        _ => Err(Error::Parse(format!("cannot read matrix from {v}"))),
    }
}

fn scalar_from_json(dim: usize, v: &Value) -> Result<ScalarField> {
    if let Value::String(s) = v {
        if let Some(id) = s.strip_prefix("builtin:") {
            return Ok(get(id)?.spec.objective);
        }
    }
    ScalarField::from_expr(dim, Expr::from_json(v)?)
}

/// Parses a problem file (see the README for the schema).
pub fn from_json(v: &Value) -> Result<CatalogEntry> {
    let pf: ProblemFile = serde_json::from_value(v.clone())?;
    let d = pf.dimension;
    let objective = scalar_from_json(d, &pf.objective)?;
    let equalities = pf
        .equalities
        .iter()
        .map(|e| scalar_from_json(d, e))
        .collect::<Result<Vec<_>>>()?;
    let inequalities = pf
        .inequalities
        .iter()
        .map(|e| scalar_from_json(d, e))
        .collect::<Result<Vec<_>>>()?;
    let sdp = match &pf.sdp {
        None => None,
        Some(s) => {
            if s.affine.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    context: "SDP affine matrices A0..Ad".into(),
                    expected: d + 1,
                    got: s.affine.len(),
                });
            }
            let mats = s.affine.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?;
            if mats[0].order() != s.order {
                return Err(Error::DimensionMismatch {
                    context: "SDP order".into(),
                    expected: s.order,
                    got: mats[0].order(),
                });
            }
            Some(MatrixField::affine(mats[0].clone(), mats[1..].to_vec())?)
        }
    };
    let known = pf.known.map(|k| KnownData {
        f_star: k.f_star,
        global_solutions: k.solutions,
        known_multipliers: k.multipliers,
    });
    let spec = ProblemSpec::new(
        pf.id.clone(),
        objective,
        ConstraintSystem {
            equalities,
            inequalities,
            sdp,
        },
        pf.region.unwrap_or(FeasibleRegion::WholeSpace),
        known,
    )?;
    let mut tests: Vec<MultiplierVector> = spec
        .known
        .as_ref()
        .map(|k| k.known_multipliers.clone())
        .unwrap_or_default();
    tests.push(spec.constraints.zero_multiplier());
    Ok(CatalogEntry {
        id: pf.id,
        notes: "loaded from problem file".into(),
        default_sigma: pf.sigma.unwrap_or(AugmentingFunction::HalfSquaredNorm),
        test_multipliers: tests,
        reference_r: None,
        spec,
    })
}

pub fn load_file(path: &Path) -> Result<CatalogEntry> {
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text)?;
    from_json(&v)
}

/// A catalog id, or a path to a problem file.
pub fn resolve(id_or_path: &str) -> Result<CatalogEntry> {
    match get(id_or_path) {
        Ok(e) => Ok(e),
        Err(err) => {
            let p = Path::new(id_or_path);
            if p.exists() {
                load_file(p)
            } else {
                Err(err)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::feasibility_residual;

    #[test]
    fn catalog_values() {
        assert_eq!(get("P11").unwrap().spec.f_star(), Some(0.0));
        let p13 = get("P13").unwrap();
        assert_eq!(p13.spec.f_star(), Some(2.0));
        assert_eq!(p13.spec.global_solutions()[0], vec![0.0, 0.0]);
        assert_eq!(get("P12").unwrap().spec.objective.eval(&[1.0]), -1.0);
        assert_eq!(get("P12").unwrap().spec.objective.eval(&[-2.0]), 2.0);
        assert!(get("sdp-toy").is_ok());
    }

    #[test]
    fn unknown_id_lists_available() {
        let msg = get("P99").unwrap_err().to_string();
        assert!(msg.contains("P11") && msg.contains("SDP-TOY"), "{msg}");
    }

    #[test]
    fn residual_examples() {
        let p13 = get("P13").unwrap().spec;
        assert_eq!(feasibility_residual(&p13, &[0.0, 0.0]).unwrap(), 0.0);
        let p11 = get("P11").unwrap().spec;
        assert_eq!(feasibility_residual(&p11, &[0.0, 0.5]).unwrap(), 0.5);
        let sdp = get("SDP-TOY").unwrap().spec;
        assert!((feasibility_residual(&sdp, &[0.5]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn problem_file_round_trip() {
        let v = serde_json::json!({
            "id": "file-qp",
            "dimension": 2,
            "objective": "x0^2 + x1^2",
            "inequalities": [{"op": "sub", "args": [1, {"op": "add", "args": [{"var": 0}, {"var": 1}]}]}],
            "region": {"kind": "box", "lower": ["-inf", -5], "upper": [5, 5]},
            "known": {"f_star": 0.5, "solutions": [[0.5, 0.5]]}
        });
        let e = from_json(&v).unwrap();
        assert_eq!(e.spec.dim, 2);
        assert_eq!(e.spec.constraints.n_ineq(), 1);
        assert!(!e.spec.region.is_bounded());
        let v = serde_json::json!({
            "id": "file-sdp", "dimension": 1, "objective": "builtin:SDP-TOY",
            "sdp": {"order": 2, "affine": ["0 0; 0 -1", [[1, 0], [0, 1]]]},
            "known": {"f_star": 0.0, "solutions": [[0.0]]}
        });
        let e = from_json(&v).unwrap();
        assert_eq!(e.spec.constraints.sdp_order(), Some(2));
        let bad = serde_json::json!({"id": "x", "dimension": 1, "objective": "x0", "known": {"f_star": 1.0, "solutions": [[0.0]]}});
        assert!(from_json(&bad).is_err());
    }
}
