//! Localization principle: local multipliers at every global solution plus a
//! side condition (compact region, non-degeneracy, or bounded sublevel sets)
//! decide whether a multiplier is a global augmented Lagrange multiplier.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::certificates::{exact_representation_check, minimize_lagrangian, CertConfig, Certificate, Verdict};
use crate::error::{Error, Result};
use crate::kkt::{local_alm_check, LocalAlmOptions};
use crate::lagrangian::{ExtendedValue, LagrangianEvaluator, MultiplierVector};
use crate::linalg::norm;
use crate::search::{global_min, minimizing_sequence_cluster_check, ordered_map, ClusterReport, SearchConfig, SearchStatus};

/// `r_n = r0 * 2^n` for `n = 0..levels`.
pub fn geometric_schedule(r0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|n| r0 * 2f64.powi(n as i32)).collect()
}

pub fn default_schedule() -> Vec<f64> {
    geometric_schedule(1.0, 13)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub r: f64,
    pub x: Vec<f64>,
    pub value: ExtendedValue,
    pub norm: f64,
    pub phi: f64,
    pub status: SearchStatus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationTrace {
    pub problem: String,
    pub lambda: MultiplierVector,
    pub schedule: Vec<f64>,
    pub rows: Vec<TraceRow>,
}

impl LocalizationTrace {
    /// CSV with columns `r,x0..,L,norm,phi,status`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.rows.first().map_or(0, |r| r.x.len());
        let mut header = vec!["r".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        header.extend(["L", "norm", "phi", "status"].map(String::from));
        out.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.r.to_string()];
            rec.extend(row.x.iter().map(|v| v.to_string()));
            rec.push(row.value.to_string());
            rec.push(row.norm.to_string());
            rec.push(row.phi.to_string());
            rec.push(format!("{:?}", row.status));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// `(r_n, x_n)` for rows that converged, in schedule order.
    pub fn converged_points(&self) -> Vec<(f64, Vec<f64>)> {
        self.rows
            .iter()
            .filter(|r| r.status == SearchStatus::Converged)
            .map(|r| (r.r, r.x.clone()))
            .collect()
    }
}

/// Global minimizers of `L(., lambda, r_n)` along an increasing schedule.
pub fn trace_minimizers(
    ev: &LagrangianEvaluator,
    lam: &MultiplierVector,
    schedule: &[f64],
    cfg: &SearchConfig,
) -> Result<LocalizationTrace> {
    ev.spec().constraints.check_multiplier(lam)?;
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] > w[0])) || schedule[0] < 0.0 {
        return Err(Error::InvalidParameter("r schedule must be non-empty, non-negative and strictly increasing".into()));
    }
    let rows = ordered_map(schedule, cfg.execution, |&r| -> Result<TraceRow> {
        let res = minimize_lagrangian(ev, lam, r, cfg)?;
        let phi = ev.penalty_term_phi(&res.best_x)?;
        Ok(TraceRow {
            r,
            norm: norm(&res.best_x),
            value: if res.status == SearchStatus::DivergingBelow { ExtendedValue::NegInf } else { res.best_value },
            phi,
            x: res.best_x,
            status: res.status,
        })
    });
    Ok(LocalizationTrace {
        problem: ev.spec().id.clone(),
        lambda: lam.clone(),
        schedule: schedule.to_vec(),
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonDegeneracy {
    pub holds: bool,
    pub k_cap: f64,
    /// Index of the first row of the tested suffix.
    pub suffix_start: Option<usize>,
    pub evidence: String,
}

/// `10 (1 + max ||x*||)` over the known solutions.
pub fn default_k_cap(ev: &LagrangianEvaluator) -> f64 {
    let m = ev.spec().global_solutions().iter().map(|x| norm(x)).fold(0.0, f64::max);
    10.0 * (1.0 + m)
}

/// Non-degeneracy along the trace: the rows after the last bad row (not
/// converged, or minimizer norm above `k_cap`) must cover at least the last
/// half of the schedule.
pub fn nondegeneracy_check(trace: &LocalizationTrace, k_cap: f64) -> NonDegeneracy {
    let n = trace.rows.len();
    let good = |r: &TraceRow| r.status == SearchStatus::Converged && r.norm <= k_cap;
    let start = trace.rows.iter().rposition(|r| !good(r)).map_or(0, |i| i + 1);
    let needed = n / 2;
    let holds = n > 0 && start < n && n - start >= needed.max(1);
    let evidence = if holds {
        format!(
            "rows {}..{} (r = {} .. {}) attain minima with norm <= {}",
            start,
            n - 1,
            trace.rows[start].r,
            trace.rows[n - 1].r,
            k_cap
        )
    } else if start >= n {
        let last = &trace.rows[n - 1];
        format!(
            "last row (r = {}) has status {:?} and minimizer norm {:.3e} (cap {})",
            last.r, last.status, last.norm, k_cap
        )
    } else {
        format!("only {} of {} trailing rows attain bounded minima", n - start, n)
    };
    NonDegeneracy {
        holds,
        k_cap,
        suffix_start: if start < n { Some(start) } else { None },
        evidence,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShellFind {
    pub radius: f64,
    pub member: Option<Vec<f64>>,
    pub score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SublevelReport {
    pub r0: f64,
    pub delta: f64,
    pub shells: Vec<ShellFind>,
    pub empty: bool,
    pub bounded: bool,
    pub bounded_below: bool,
    /// `bounded_below && (empty || bounded)`.
    pub holds: bool,
    pub witness: Option<Vec<f64>>,
    pub evidence: String,
}

pub const SUBLEVEL_RADII: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Searches `{x in A : L(x, lambda, r0) < f*, phi(x) < delta}` shell by shell
/// (`R_prev <= ||x||_inf <= R`) and checks that `L(., lambda, r0)` is bounded
/// below.
pub fn sublevel_probe(
    ev: &LagrangianEvaluator,
    lam: &MultiplierVector,
    r0: f64,
    delta: f64,
    cfg: &CertConfig,
) -> Result<SublevelReport> {
    if !(r0 >= 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("need r0 >= 0 and delta > 0, got r0={r0}, delta={delta}")));
    }
    let spec = ev.spec();
    let f_star = spec
        .f_star()
        .ok_or_else(|| Error::InvalidProblem("sublevel probe needs the optimal value".into()))?;
    let d = spec.dim;
    let score = |x: &[f64]| -> f64 {
        let l = ev.eval_lagrangian(x, lam, r0).unwrap_or(ExtendedValue::PosInf);
        let phi = ev.penalty_term_phi(x).unwrap_or(f64::INFINITY);
        (l.to_f64() - f_star).max(phi - delta)
    };
    let mut shells = Vec::new();
    let mut inner = 0.0;
    for &rad in &SUBLEVEL_RADII {
        let mut sc = cfg.search.clone();
        sc.bounds = Some((vec![-rad; d], vec![rad; d]));
        let lo = inner;
        let obj = |x: &[f64]| {
            let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if m < lo {
                ExtendedValue::PosInf
            } else {
                ExtendedValue::from_f64(score(x))
            }
        };
        let res = global_min(obj, d, &spec.region, &sc);
        let s = res.best_value.to_f64();
        shells.push(ShellFind {
            radius: rad,
            member: if s < 0.0 { Some(res.best_x.clone()) } else { None },
            score: s,
        });
        inner = rad;
    }
    let below = minimize_lagrangian(ev, lam, r0, &cfg.search)?;
    let bounded_below = below.status != SearchStatus::DivergingBelow && !below.best_value.is_neg_inf();
    let empty = shells.iter().all(|s| s.member.is_none());
    let bounded = shells.last().is_none_or(|s| s.member.is_none());
    let holds = bounded_below && (empty || bounded);
    let witness = if !bounded_below {
        Some(below.best_x.clone())
    } else {
        shells.iter().rev().find_map(|s| s.member.clone())
    };
    let found: Vec<String> = shells
        .iter()
        .map(|s| format!("R={}: {}", s.radius, if s.member.is_some() { "member" } else { "none" }))
        .collect();
    let evidence = format!(
        "{}; L(., lambda, {r0}) {}",
        found.join(", "),
        if bounded_below { "bounded below" } else { "unbounded below" }
    );
    Ok(SublevelReport { r0, delta, shells, empty, bounded, bounded_below, holds, witness, evidence })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremPath {
    CompactA,
    NonDegenerate,
    SublevelBounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conclusion {
    GlobalALM,
    NotGlobalALM,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationOptions {
    pub schedule: Vec<f64>,
    pub cert: CertConfig,
    pub local: LocalAlmOptions,
    pub r0: f64,
    pub delta: f64,
    pub k_cap: Option<f64>,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        LocalizationOptions {
            schedule: default_schedule(),
            cert: CertConfig::default(),
            local: LocalAlmOptions::default(),
            r0: 1.0,
            delta: 0.5,
            k_cap: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationVerdict {
    pub problem: String,
    pub lambda: MultiplierVector,
    pub theorem_path: TheoremPath,
    pub local_alm_at_all_globals: bool,
    pub local_certificates: Vec<Certificate>,
    /// Largest over the solutions of the smallest passing schedule value.
    pub r_upper_estimate: Option<f64>,
    pub side_condition: bool,
    pub side_evidence: Vec<String>,
    pub conclusion: Conclusion,
    pub cross_check: Certificate,
    pub trace: Option<LocalizationTrace>,
    pub nondegeneracy: Option<NonDegeneracy>,
    pub sublevel: Option<SublevelReport>,
    pub cluster: Option<ClusterReport>,
    pub assumptions: Vec<String>,
    pub notes: Vec<String>,
}

impl LocalizationVerdict {
    /// Whether the conclusion and the direct certificate agree.
    pub fn agrees_with_cross_check(&self) -> bool {
        match self.conclusion {
            Conclusion::GlobalALM => self.cross_check.verdict == Verdict::Holds,
            Conclusion::NotGlobalALM => self.cross_check.verdict == Verdict::Fails,
            Conclusion::Inconclusive => true,
        }
    }
}

pub fn localization_verdict(
    ev: &LagrangianEvaluator,
    lam: &MultiplierVector,
    opts: &LocalizationOptions,
) -> Result<LocalizationVerdict> {
    let spec = ev.spec();
    spec.constraints.check_multiplier(lam)?;
    let r_max = opts
        .schedule
        .iter()
        .copied()
        .fold(f64::NAN, f64::max);
    if !r_max.is_finite() {
        return Err(Error::InvalidParameter("empty r schedule".into()));
    }
    let cross_check = exact_representation_check(ev, lam, r_max, &opts.cert)?;
    let mut notes = Vec::new();
    let mut assumptions = Vec::new();
    let sols = spec.global_solutions().to_vec();
    let compact = spec.region.is_bounded();
    let path_hint = if compact { TheoremPath::CompactA } else { TheoremPath::NonDegenerate };
    if sols.is_empty() {
        notes.push("no known global solutions; the verdict quantifies over them".into());
        return Ok(LocalizationVerdict {
            problem: spec.id.clone(),
            lambda: lam.clone(),
            theorem_path: path_hint,
            local_alm_at_all_globals: false,
            local_certificates: vec![],
            r_upper_estimate: None,
            side_condition: false,
            side_evidence: vec![],
            conclusion: Conclusion::Inconclusive,
            cross_check,
            trace: None,
            nondegeneracy: None,
            sublevel: None,
            cluster: None,
            assumptions,
            notes,
        });
    }
    let mut local_certificates = Vec::new();
    for x in &sols {
        local_certificates.push(local_alm_check(ev, x, lam, &opts.schedule, &opts.local)?);
    }
    let local_all = local_certificates.iter().all(|c| c.holds());
    let r_upper_estimate = if local_all {
        local_certificates
            .iter()
            .map(|c| c.estimate)
            .try_fold(0.0f64, |a, e| e.map(|v| a.max(v)))
    } else {
        None
    };
    let mut side_evidence = Vec::new();
    let (mut trace, mut nondeg, mut sub, mut cluster) = (None, None, None, None);
    let (path, side) = if compact {
        side_evidence.push("region is compact".into());
        assumptions.push(format!(
            "L(., lambda, r) assumed lower semicontinuous on A for large r ({:?} evaluator)",
            ev.mode()
        ));
        (TheoremPath::CompactA, true)
    } else {
        let t = trace_minimizers(ev, lam, &opts.schedule, &opts.cert.search)?;
        let nd = nondegeneracy_check(&t, opts.k_cap.unwrap_or_else(|| default_k_cap(ev)));
        side_evidence.push(format!("non-degeneracy: {}", nd.evidence));
        let tail = t.converged_points();
        if !tail.is_empty() {
            cluster = Some(minimizing_sequence_cluster_check(spec, &tail, 1e-3)?);
        }
        let result = if nd.holds {
            (TheoremPath::NonDegenerate, true)
        } else {
            let s = sublevel_probe(ev, lam, opts.r0, opts.delta, &opts.cert)?;
            side_evidence.push(format!("sublevel probe: {}", s.evidence));
            let ok = s.holds;
            sub = Some(s);
            if ok {
                (TheoremPath::SublevelBounded, true)
            } else {
                (TheoremPath::NonDegenerate, false)
            }
        };
        trace = Some(t);
        nondeg = Some(nd);
        result
    };
    let conclusion = if !local_all {
        notes.push("not a local multiplier at every global solution".into());
        Conclusion::NotGlobalALM
    } else if side {
        Conclusion::GlobalALM
    } else {
        Conclusion::NotGlobalALM
    };
    let v = LocalizationVerdict {
        problem: spec.id.clone(),
        lambda: lam.clone(),
        theorem_path: path,
        local_alm_at_all_globals: local_all,
        local_certificates,
        r_upper_estimate,
        side_condition: side,
        side_evidence,
        conclusion,
        cross_check,
        trace,
        nondegeneracy: nondeg,
        sublevel: sub,
        cluster,
        assumptions,
        notes,
    };
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::lagrangian::AugmentingFunction;
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
    fn schedule_shape() {
        let s = default_schedule();
        assert_eq!(s.len(), 13);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[12], 4096.0);
    }

    #[test]
    fn traces() {
        let cfg = SearchConfig::default();
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        let t = trace_minimizers(&p13, &eq(1.0), &geometric_schedule(4.0, 6), &cfg).unwrap();
        for row in &t.rows {
            assert_eq!(row.status, SearchStatus::Converged);
            assert!(row.norm <= 1e-4, "{row:?}");
            assert!((row.value.to_f64() - 2.0).abs() < 1e-8);
        }
        assert!(nondegeneracy_check(&t, default_k_cap(&p13)).holds);
        let p12 = ev("P12", AugmentingFunction::Norm);
        let t = trace_minimizers(&p12, &ineq(0.0), &default_schedule(), &cfg).unwrap();
        assert!(t.rows.iter().all(|r| r.status == SearchStatus::DivergingBelow));
        assert!(!nondegeneracy_check(&t, 10.0).holds);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,x0,L,norm,phi,status\n"));
        assert_eq!(text.lines().count(), 14);
        assert!(trace_minimizers(&p12, &ineq(0.0), &[2.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn sublevel() {
        let cfg = CertConfig::default();
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        assert!(sublevel_probe(&p13, &eq(1.0), 1.0, 0.5, &cfg).unwrap().holds);
        let p12 = ev("P12", AugmentingFunction::Norm);
        let s = sublevel_probe(&p12, &ineq(0.0), 1.0, 0.5, &cfg).unwrap();
        assert!(!s.holds && !s.bounded_below);
    }

    #[test]
    fn verdicts() {
        let opts = LocalizationOptions::default();
        let p13 = ev("P13", AugmentingFunction::HalfSquaredNorm);
        let v = localization_verdict(&p13, &eq(1.0), &opts).unwrap();
        assert_eq!(v.conclusion, Conclusion::GlobalALM);
        assert!(v.cross_check.holds() && v.agrees_with_cross_check());
        let p12 = ev("P12", AugmentingFunction::Norm);
        let v = localization_verdict(&p12, &ineq(1.0), &opts).unwrap();
        assert!(v.local_alm_at_all_globals);
        assert!(!v.nondegeneracy.as_ref().unwrap().holds);
        assert_eq!(v.conclusion, Conclusion::NotGlobalALM);
        assert!(v.cross_check.fails());
        let p11 = ev("P11", AugmentingFunction::Norm);
        let v = localization_verdict(&p11, &eq(2.0), &opts).unwrap();
        assert_eq!(v.conclusion, Conclusion::GlobalALM);
        let r = v.r_upper_estimate.unwrap();
        assert!((r - 3.0).abs() <= 1e-3, "{r}");
    }
}
