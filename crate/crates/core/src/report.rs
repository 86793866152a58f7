//! Run configuration and machine-readable reports.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::certificates::{CalmnessReport, Certificate, RLambdaEstimate, Verdict, GRID_CAVEAT};
use crate::kkt::{KKTReport, SOSCReport};
use crate::lagrangian::{AugmentingFunction, EvaluatorMode, PenaltyRestriction};
use crate::linalg::SymMatrix;
use crate::localization::{Conclusion, LocalizationTrace, LocalizationVerdict};
use crate::search::Execution;

pub const SCHEMA_VERSION: &str = "1";

pub const EXIT_HOLDS: i32 = 0;
pub const EXIT_FAILS: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema_version: String,
    pub command: String,
    /// Catalog id or path to a problem file.
    pub problem: String,
    pub sigma: Option<AugmentingFunction>,
    pub mode: Option<EvaluatorMode>,
    /// Functional-constraint multipliers, equalities first.
    pub lambda: Option<Vec<f64>>,
    pub mu: Option<SymMatrix>,
    pub r: Option<f64>,
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
    pub rho: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub checks: Vec<String>,
    pub sosc_mode: Option<String>,
    pub restriction: Option<PenaltyRestriction>,
    pub gamma: Option<f64>,
    pub schedule: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub r_tol: Option<f64>,
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub max_iters: Option<usize>,
    pub half_width: Option<f64>,
    pub execution: Option<Execution>,
    pub output: Option<PathBuf>,
    pub trace_csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: impl Into<String>, problem: impl Into<String>) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION.into(),
            command: command.into(),
            problem: problem.into(),
            ..Default::default()
        }
    }

    /// Fills every unset field from `base` (values already set win).
    pub fn fill_from(&mut self, base: &RunConfig) {
        macro_rules! fill {
            ($($f:ident),*) => {$(
                if self.$f.is_none() {
                    self.$f = base.$f.clone();
                }
            )*};
        }
        fill!(sigma, mode, lambda, mu, r, r_lo, r_hi, rho, x, sosc_mode, restriction, gamma, schedule, tol, r_tol, seed, starts, max_iters, half_width, execution, output, trace_csv);
        if self.problem.is_empty() {
            self.problem = base.problem.clone();
        }
        if self.checks.is_empty() {
            self.checks = base.checks.clone();
        }
        if self.command.is_empty() {
            self.command = base.command.clone();
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub run_config: RunConfig,
    #[serde(default)]
    pub merged_from: Vec<RunConfig>,
    pub overall: Verdict,
    #[serde(default)]
    pub certificates: Vec<Certificate>,
    #[serde(default)]
    pub estimates: Vec<RLambdaEstimate>,
    #[serde(default)]
    pub traces: Vec<LocalizationTrace>,
    #[serde(default)]
    pub verdicts: Vec<LocalizationVerdict>,
    #[serde(default)]
    pub kkt: Vec<KKTReport>,
    #[serde(default)]
    pub sosc: Vec<SOSCReport>,
    #[serde(default)]
    pub calmness: Vec<CalmnessReport>,
    /// Raw evaluations (`eval` command).
    #[serde(default)]
    pub evaluations: Vec<Value>,
    pub timing: Timing,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(run_config: RunConfig) -> Self {
        Report {
            schema_version: SCHEMA_VERSION.into(),
            run_config,
            merged_from: vec![],
            overall: Verdict::Holds,
            certificates: vec![],
            estimates: vec![],
            traces: vec![],
            verdicts: vec![],
            kkt: vec![],
            sosc: vec![],
            calmness: vec![],
            evaluations: vec![],
            timing: Timing::default(),
            warnings: vec![],
        }
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    /// Top-level verdict with precedence `Fails > Inconclusive > Holds`.
    pub fn compute_overall(&self) -> Verdict {
        let mut v = Verdict::Holds;
        for c in &self.certificates {
            v = v.worst(c.verdict);
        }
        for l in &self.verdicts {
            v = v.worst(match l.conclusion {
                Conclusion::GlobalALM => Verdict::Holds,
                Conclusion::NotGlobalALM => Verdict::Fails,
                Conclusion::Inconclusive => Verdict::Inconclusive,
            });
        }
        for k in &self.kkt {
            if !k.is_kkt {
                v = v.worst(Verdict::Fails);
            }
        }
        for s in &self.sosc {
            if !s.verdict {
                v = v.worst(Verdict::Fails);
            }
        }
        for e in &self.estimates {
            if e.status == crate::certificates::ThresholdStatus::NotReachedByCap {
                v = v.worst(Verdict::Fails);
            }
        }
        v
    }

    /// Sets `overall` and adds the soundness caveat when a `Holds` verdict
    /// is grid-based.
    pub fn finalize(&mut self, seconds: f64) {
        self.timing.seconds = seconds;
        self.overall = self.compute_overall();
        let grid_holds = self.certificates.iter().any(|c| c.holds() && c.grid_based)
            || self
                .verdicts
                .iter()
                .flat_map(|v| v.local_certificates.iter().chain(std::iter::once(&v.cross_check)))
                .any(|c| c.holds() && c.grid_based)
            || !self.verdicts.is_empty()
            || !self.estimates.is_empty();
        if grid_holds {
            self.warn(GRID_CAVEAT);
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.overall {
            Verdict::Holds => EXIT_HOLDS,
            Verdict::Fails => EXIT_FAILS,
            Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        }
    }

    /// Concatenates reports; the merged run config records the command only.
    pub fn merge(reports: Vec<Report>) -> Report {
        let mut out = Report::new(RunConfig::new("report-merge", ""));
        let mut seconds = 0.0;
        for r in reports {
            out.merged_from.push(r.run_config);
            out.merged_from.extend(r.merged_from);
            out.certificates.extend(r.certificates);
            out.estimates.extend(r.estimates);
            out.traces.extend(r.traces);
            out.verdicts.extend(r.verdicts);
            out.kkt.extend(r.kkt);
            out.sosc.extend(r.sosc);
            out.calmness.extend(r.calmness);
            out.evaluations.extend(r.evaluations);
            for w in r.warnings {
                out.warn(w);
            }
            seconds += r.timing.seconds;
        }
        out.finalize(seconds);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_fill_and_roundtrip() {
        let mut cli = RunConfig::new("verify", "P13");
        cli.r = Some(3.0);
        let mut file = RunConfig::new("verify", "P11");
        file.r = Some(9.0);
        file.tol = Some(1e-7);
        file.sigma = Some(AugmentingFunction::HalfSquaredNorm);
        cli.fill_from(&file);
        assert_eq!(cli.problem, "P13");
        assert_eq!(cli.r, Some(3.0));
        assert_eq!(cli.tol, Some(1e-7));
        let text = serde_json::to_string(&cli).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cli);
    }

    #[test]
    fn exit_codes_follow_precedence() {
        let mut r = Report::new(RunConfig::new("verify", "P11"));
        r.finalize(0.0);
        assert_eq!(r.exit_code(), EXIT_HOLDS);
        r.kkt.push(KKTReport {
            stationarity_residual: 1.0,
            complementarity_residual: 0.0,
            sign_residual: 0.0,
            active_sets: Default::default(),
            lagrangian_gradient: vec![],
            is_kkt: false,
            tol: 1e-8,
        });
        r.finalize(0.0);
        assert_eq!(r.exit_code(), EXIT_FAILS);
        let merged = Report::merge(vec![r.clone(), Report::new(RunConfig::new("kkt", "P13"))]);
        assert_eq!(merged.merged_from.len(), 2);
        assert_eq!(merged.overall, Verdict::Fails);
    }
}
