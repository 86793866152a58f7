//! Command-line front end: argument parsing, configuration merging and
//! command dispatch. Every command builds a [`RunConfig`] first, so a report
//! can be reproduced from the config it embeds.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use almult_core::catalog::{self, CatalogEntry};
use almult_core::certificates::{
    argmin_coincidence, calmness_probe, dual_value_psi, estimate_r_lambda, exact_representation_check,
    penalty_exactness, saddle_point_check, verify_multiplier_inequality, verify_neighborhood, CertConfig,
    ThresholdStatus,
};
use almult_core::kkt::{kkt_check, local_alm_check, sosc_check, LocalAlmOptions, SoscMode, SoscOptions};
use almult_core::lagrangian::{AugmentingFunction, EvaluatorMode, LagrangianEvaluator, MultiplierVector, PenaltyRestriction};
use almult_core::linalg::SymMatrix;
use almult_core::localization::{default_schedule, localization_verdict, LocalizationOptions};
use almult_core::problem::feasibility_residual;
use almult_core::report::{Report, RunConfig, EXIT_HOLDS, EXIT_USAGE};
use almult_core::search::{Execution, SearchConfig};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub const SEED_ENV: &str = "ALMULT_SEED";

const EXIT_HELP: &str = "Exit codes: 0 = Holds, 1 = Fails, 2 = Inconclusive (precedence Fails > Inconclusive > Holds \
across everything in the report), 64 = bad configuration or usage.";

#[derive(Parser, Debug)]
#[command(name = "almult", version, about = "Certify augmented Lagrange multipliers numerically", after_help = EXIT_HELP)]
pub struct Cli {
    /// JSON run config; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// List catalog problems.
    Catalog {
        #[arg(long)]
        json: bool,
        /// Dump one problem in full.
        #[arg(long)]
        id: Option<String>,
    },
    /// Run multiplier certificates at (lambda, r).
    Verify(VerifyArgs),
    /// Bracket the least exact penalty parameter of lambda.
    Rlambda(RlambdaArgs),
    /// Localization verdict with a minimizer trace.
    Localize(LocalizeArgs),
    /// KKT and second-order checks at a point.
    Kkt(KktArgs),
    /// Raw evaluation of L, F and phi.
    Eval(EvalArgs),
    /// Concatenate JSON reports.
    ReportMerge {
        files: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// Catalog id or path to a problem file.
    #[arg(long)]
    pub problem: Option<String>,
    /// sharp | prox | gamma:<g> | beta:<b>
    #[arg(long)]
    pub sigma: Option<String>,
    /// closed | generic
    #[arg(long)]
    pub evaluator: Option<String>,
    /// Multipliers of the functional constraints, equalities first.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    /// Semidefinite multiplier, rows separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub r_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Run without rayon even when the parallel feature is built.
    #[arg(long)]
    pub sequential: bool,
    /// Write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print the JSON report instead of the summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    /// exact | global | neighborhood | saddle | argmin | penalty | calmness | local | psi
    #[arg(long = "check")]
    pub checks: Vec<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// whole | ball:<tau> | sublevel:<delta>
    #[arg(long)]
    pub restriction: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct RlambdaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub r_lo: Option<f64>,
    #[arg(long)]
    pub r_hi: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Increasing r values; default 1, 2, 4, ..., 4096.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct KktArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// c2 | c11 | sdp
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    #[arg(long)]
    pub restriction: Option<String>,
}

/// Outcome of one CLI invocation.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub report: Option<Report>,
}

pub fn parse_numbers(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("bad number `{s}`")))
        .collect()
}

pub fn parse_restriction(text: &str) -> Result<PenaltyRestriction> {
    let (kind, arg) = text.split_once(':').unwrap_or((text, ""));
    let val = || arg.parse::<f64>().with_context(|| format!("bad restriction parameter in `{text}`"));
    Ok(match kind {
        "whole" | "whole-p" | "none" => PenaltyRestriction::WholeP,
        "ball" => PenaltyRestriction::NormBall { tau: val()? },
        "sublevel" => PenaltyRestriction::SigmaSublevel { delta: val()? },
        _ => bail!("unknown restriction `{text}` (whole | ball:<tau> | sublevel:<delta>)"),
    })
}

fn parse_mode(text: &str) -> Result<EvaluatorMode> {
    match text {
        "closed" | "closed-form" => Ok(EvaluatorMode::ClosedForm),
        "generic" | "inner-inf" => Ok(EvaluatorMode::GenericInnerInf),
        _ => bail!("unknown evaluator `{text}` (closed | generic)"),
    }
}

impl Common {
    fn to_config(&self, command: &str) -> Result<RunConfig> {
        let mut c = RunConfig::new(command, self.problem.clone().unwrap_or_default());
        c.sigma = self.sigma.as_deref().map(str::parse::<AugmentingFunction>).transpose()?;
        c.mode = self.evaluator.as_deref().map(parse_mode).transpose()?;
        c.lambda = self.lambda.as_deref().map(parse_numbers).transpose()?;
        c.mu = self.mu.as_deref().map(SymMatrix::parse).transpose()?;
        c.tol = self.tol;
        c.r_tol = self.r_tol;
        c.seed = self.seed;
        c.starts = self.starts;
        c.max_iters = self.max_iters;
        c.half_width = self.half_width;
        c.execution = self.sequential.then_some(Execution::Sequential);
        c.output = self.output.clone();
        Ok(c)
    }
}

/// Builds the effective config: flags, then `ALMULT_SEED`, then the config
/// file.
pub fn build_config(cli: &Cli) -> Result<(RunConfig, bool)> {
    let (mut cfg, json_out) = match &cli.command {
        Command::Verify(a) => {
            let mut c = a.common.to_config("verify")?;
            c.r = a.r;
            c.checks = a.checks.clone();
            c.rho = a.rho;
            c.x = a.x.as_deref().map(parse_numbers).transpose()?;
            c.restriction = a.restriction.as_deref().map(parse_restriction).transpose()?;
            c.gamma = a.gamma;
            (c, a.common.json)
        }
        Command::Rlambda(a) => {
            let mut c = a.common.to_config("rlambda")?;
            c.r_lo = a.r_lo;
            c.r_hi = a.r_hi;
            (c, a.common.json)
        }
        Command::Localize(a) => {
            let mut c = a.common.to_config("localize")?;
            c.schedule = a.schedule.as_deref().map(parse_numbers).transpose()?;
            c.trace_csv = a.trace_csv.clone();
            (c, a.common.json)
        }
        Command::Kkt(a) => {
            let mut c = a.common.to_config("kkt")?;
            c.x = a.x.as_deref().map(parse_numbers).transpose()?;
            c.sosc_mode = a.mode.clone();
            (c, a.common.json)
        }
        Command::Eval(a) => {
            let mut c = a.common.to_config("eval")?;
            c.x = a.x.as_deref().map(parse_numbers).transpose()?;
            c.r = a.r;
            c.restriction = a.restriction.as_deref().map(parse_restriction).transpose()?;
            (c, a.common.json)
        }
        Command::Catalog { .. } | Command::ReportMerge { .. } => (RunConfig::default(), false),
    };
    if cfg.seed.is_none() {
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = Some(s.trim().parse().with_context(|| format!("{SEED_ENV} must be an unsigned integer"))?);
        }
    }
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.fill_from(&file);
    }
    Ok((cfg, json_out))
}

fn search_config(cfg: &RunConfig) -> SearchConfig {
    let mut s = SearchConfig::default();
    if let Some(v) = cfg.seed {
        s.seed = v;
    }
    if let Some(v) = cfg.starts {
        s.starts = v;
    }
    if let Some(v) = cfg.max_iters {
        s.max_iters = v;
    }
    if let Some(v) = cfg.half_width {
        s.half_width = v;
    }
    if let Some(v) = cfg.execution {
        s.execution = v;
    }
    s
}

pub fn cert_config(cfg: &RunConfig) -> CertConfig {
    let mut c = CertConfig { search: search_config(cfg), ..CertConfig::default() };
    if let Some(t) = cfg.tol {
        c.tol = t;
    }
    if let Some(t) = cfg.r_tol {
        c.r_tol = t;
    }
    c
}

pub fn evaluator(cfg: &RunConfig) -> Result<(CatalogEntry, LagrangianEvaluator)> {
    if cfg.problem.is_empty() {
        bail!("--problem is required");
    }
    let entry = catalog::resolve(&cfg.problem)?;
    let sigma = cfg.sigma.unwrap_or(entry.default_sigma);
    let mut ev = LagrangianEvaluator::new(Arc::new(entry.spec.clone()), sigma);
    if let Some(mode) = cfg.mode {
        ev = ev.with_mode(mode)?;
    }
    Ok((entry, ev))
}

pub fn multiplier(entry: &CatalogEntry, cfg: &RunConfig) -> Result<MultiplierVector> {
    let c = &entry.spec.constraints;
    let mut lam = c.zero_multiplier();
    if let Some(vals) = &cfg.lambda {
        if vals.len() != c.n_eq() + c.n_ineq() {
            bail!(
                "--lambda needs {} values ({} equalities, {} inequalities), got {}",
                c.n_eq() + c.n_ineq(),
                c.n_eq(),
                c.n_ineq(),
                vals.len()
            );
        }
        lam.eq = vals[..c.n_eq()].to_vec();
        lam.ineq = vals[c.n_eq()..].to_vec();
    }
    if let Some(mu) = &cfg.mu {
        if lam.mu.is_none() {
            bail!("--mu given but problem {} has no semidefinite block", entry.id);
        }
        lam.mu = Some(mu.clone());
    }
    c.check_multiplier(&lam)?;
    Ok(lam)
}

fn point(entry: &CatalogEntry, cfg: &RunConfig) -> Result<Vec<f64>> {
    match &cfg.x {
        Some(x) => {
            if x.len() != entry.spec.dim {
                bail!("--x needs {} coordinates, got {}", entry.spec.dim, x.len());
            }
            Ok(x.clone())
        }
        None => entry
            .spec
            .global_solutions()
            .first()
            .cloned()
            .ok_or_else(|| anyhow!("--x is required: problem {} lists no solutions", entry.id)),
    }
}

fn require_r(cfg: &RunConfig) -> Result<f64> {
    let r = cfg.r.ok_or_else(|| anyhow!("--r is required"))?;
    if !(r >= 0.0 && r.is_finite()) {
        bail!("--r must be a finite non-negative number");
    }
    Ok(r)
}

fn flat_label(lam: &MultiplierVector) -> String {
    lam.to_flat().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Runs one non-catalog command from its config.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    let start = Instant::now();
    let mut report = Report::new(cfg.clone());
    match cfg.command.as_str() {
        "verify" => run_verify(cfg, &mut report)?,
        "rlambda" => run_rlambda(cfg, &mut report)?,
        "localize" => run_localize(cfg, &mut report)?,
        "kkt" => run_kkt(cfg, &mut report)?,
        "eval" => run_eval(cfg, &mut report)?,
        other => bail!("unknown command `{other}`"),
    }
    report.finalize(start.elapsed().as_secs_f64());
    if let Some(path) = &cfg.output {
        write_report(&report, path)?;
    }
    Ok(report)
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text).with_context(|| format!("writing report {}", path.display()))
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).with_context(|| format!("reading report {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
}

fn run_verify(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (entry, ev) = evaluator(cfg)?;
    let lam = multiplier(&entry, cfg)?;
    let cc = cert_config(cfg);
    let checks = if cfg.checks.is_empty() { vec!["exact".to_string()] } else { cfg.checks.clone() };
    for check in &checks {
        match check.as_str() {
            "exact" => report.certificates.push(exact_representation_check(&ev, &lam, require_r(cfg)?, &cc)?),
            "global" => report.certificates.push(verify_multiplier_inequality(&ev, &lam, require_r(cfg)?, &cc)?),
            "neighborhood" => {
                let rho = cfg.rho.unwrap_or(0.5);
                report.certificates.push(verify_neighborhood(&ev, &lam, require_r(cfg)?, rho, &cc)?)
            }
            "saddle" => {
                let x = point(&entry, cfg)?;
                report.certificates.push(saddle_point_check(&ev, &x, &lam, require_r(cfg)?, &cc)?)
            }
            "argmin" => report.certificates.push(argmin_coincidence(&ev, &lam, require_r(cfg)?, &cc)?),
            "penalty" => {
                let c = cfg.restriction.unwrap_or(PenaltyRestriction::WholeP);
                report.certificates.push(penalty_exactness(&ev, c, &cc)?)
            }
            "calmness" => report.calmness.push(calmness_probe(&ev, cfg.gamma.unwrap_or(1.0), &cc)?),
            "local" => {
                let x = point(&entry, cfg)?;
                let opts = LocalAlmOptions { tol: cc.tol, seed: cc.search.seed, ..Default::default() };
                report.certificates.push(local_alm_check(&ev, &x, &lam, &[require_r(cfg)?], &opts)?)
            }
            "psi" => {
                let r = require_r(cfg)?;
                let d = dual_value_psi(&ev, &lam, r, &cc)?;
                report.evaluations.push(json!({
                    "quantity": "psi",
                    "lambda": lam,
                    "r": r,
                    "value": d.value,
                    "argmin": d.search.best_x,
                }));
            }
            other => bail!("unknown check `{other}`"),
        }
    }
    Ok(())
}

fn run_rlambda(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (entry, ev) = evaluator(cfg)?;
    let lam = multiplier(&entry, cfg)?;
    let cc = cert_config(cfg);
    let est = estimate_r_lambda(&ev, &lam, cfg.r_lo, cfg.r_hi, &cc)?;
    if let Some((ref_lam, ref_r)) = &entry.reference_r {
        let same = ref_lam.to_flat().iter().zip(lam.to_flat()).all(|(a, b)| (a - b).abs() < 1e-12);
        if same && ev.sigma() == entry.default_sigma && (*ref_r < est.lower - est.tol || *ref_r > est.upper + est.tol) {
            report.warn(format!(
                "reference value r({})={} differs from estimated bracket [{:.6}, {:.6}]",
                flat_label(&lam),
                ref_r,
                est.lower,
                est.upper
            ));
        }
    }
    if est.status == ThresholdStatus::NotReachedByCap {
        report.warn(format!("no exact penalty parameter found up to r = {}", cc.r_cap));
    }
    if let Some((below, above)) = est.recertified {
        if below == almult_core::certificates::Verdict::Holds || above != almult_core::certificates::Verdict::Holds {
            report.warn(format!("bracket recertification disagrees: {below:?} below, {above:?} at the upper end"));
        }
    }
    report.estimates.push(est);
    Ok(())
}

fn run_localize(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (entry, ev) = evaluator(cfg)?;
    let lam = multiplier(&entry, cfg)?;
    let cc = cert_config(cfg);
    let opts = LocalizationOptions {
        schedule: cfg.schedule.clone().unwrap_or_else(default_schedule),
        local: LocalAlmOptions { tol: cc.tol, seed: cc.search.seed, ..Default::default() },
        cert: cc,
        ..Default::default()
    };
    let v = localization_verdict(&ev, &lam, &opts)?;
    if let Some(t) = &v.trace {
        if let Some(path) = &cfg.trace_csv {
            let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            t.write_csv(f)?;
        }
        report.traces.push(t.clone());
    } else if cfg.trace_csv.is_some() {
        report.warn("no trace computed: the region is compact");
    }
    if !v.agrees_with_cross_check() {
        report.warn(format!(
            "localization conclusion {:?} disagrees with the direct exact-representation check ({:?})",
            v.conclusion, v.cross_check.verdict
        ));
    }
    if entry.spec.constraints.sdp.is_some() {
        for x in entry.spec.global_solutions() {
            report.kkt.push(kkt_check(&entry.spec, x, &lam, 1e-8)?);
            report.sosc.push(sosc_check(&entry.spec, x, &lam, SoscMode::Sdp, &SoscOptions::default())?);
        }
    }
    report.verdicts.push(v);
    Ok(())
}

fn run_kkt(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (entry, _) = evaluator(cfg)?;
    let lam = multiplier(&entry, cfg)?;
    let x = point(&entry, cfg)?;
    let tol = cfg.tol.unwrap_or(1e-8);
    let k = kkt_check(&entry.spec, &x, &lam, tol)?;
    let is_kkt = k.is_kkt;
    report.kkt.push(k);
    let mode = match cfg.sosc_mode.as_deref() {
        None if entry.spec.constraints.sdp.is_some() => SoscMode::Sdp,
        None | Some("c2") => SoscMode::C2Cone,
        Some("c11") => SoscMode::C11Generalized,
        Some("sdp") => SoscMode::Sdp,
        Some(other) => bail!("unknown second-order mode `{other}` (c2 | c11 | sdp)"),
    };
    if is_kkt {
        let opts = SoscOptions { seed: cfg.seed.unwrap_or(SoscOptions::default().seed), ..Default::default() };
        report.sosc.push(sosc_check(&entry.spec, &x, &lam, mode, &opts)?);
    } else {
        report.warn("second-order check skipped: the point is not a KKT pair");
    }
    Ok(())
}

fn run_eval(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (entry, ev) = evaluator(cfg)?;
    let lam = multiplier(&entry, cfg)?;
    let x = point(&entry, cfg)?;
    let r = require_r(cfg)?;
    let c = cfg.restriction.unwrap_or(PenaltyRestriction::WholeP);
    report.evaluations.push(json!({
        "x": x,
        "lambda": lam,
        "r": r,
        "sigma": ev.sigma(),
        "mode": ev.mode(),
        "objective": entry.spec.objective.eval(&x),
        "L": ev.eval_lagrangian(&x, &lam, r)?,
        "F": ev.eval_penalty_f(&x, r, c)?,
        "restriction": c,
        "phi": ev.penalty_term_phi(&x)?,
        "residual": feasibility_residual(&entry.spec, &x)?,
    }));
    Ok(())
}

fn catalog_listing(json_out: bool, id: Option<&str>) -> Result<String> {
    if let Some(id) = id {
        let e = catalog::get(id)?;
        let mut d = e.spec.describe();
        d["notes"] = json!(e.notes);
        d["default_sigma"] = json!(e.default_sigma);
        d["test_multipliers"] = json!(e.test_multipliers);
        return Ok(serde_json::to_string_pretty(&d)? + "\n");
    }
    let entries = catalog::all();
    if json_out {
        let arr: Vec<_> = entries
            .iter()
            .map(|e| {
                json!({
                    "id": e.id,
                    "dimension": e.spec.dim,
                    "f_star": e.spec.f_star(),
                    "default_sigma": e.default_sigma,
                    "notes": e.notes,
                })
            })
            .collect();
        return Ok(serde_json::to_string_pretty(&arr)? + "\n");
    }
    let mut out = String::new();
    for e in entries {
        let f = e.spec.f_star().map_or("?".to_string(), |v| format!("{v}"));
        out.push_str(&format!("{:<11} d={}  f*={:<10} {}\n", e.id, e.spec.dim, f, e.notes));
    }
    Ok(out)
}

/// Human-readable summary of a report.
pub fn summary(report: &Report) -> String {
    let mut out = String::new();
    for c in &report.certificates {
        let margin = c.min_margin.map_or(String::new(), |m| format!(" min_margin={m:.6e}"));
        let est = c.estimate.map_or(String::new(), |e| format!(" estimate={e}"));
        out.push_str(&format!("{:?}: {:?}{margin}{est}\n", c.property, c.verdict));
        if let Some(w) = &c.witness {
            out.push_str(&format!("  witness {:?} at {:?} (margin {:.6e})\n", w.kind, w.point, w.margin));
        }
    }
    for e in &report.estimates {
        out.push_str(&format!(
            "r(lambda={}) in [{:.6}, {:.6}] ({:?}, {} checks)\n",
            flat_label(&e.lambda),
            e.lower,
            e.upper,
            e.status,
            e.checks
        ));
    }
    for v in &report.verdicts {
        out.push_str(&format!(
            "localization: {:?} via {:?}; local multiplier at all solutions: {}; side condition: {}; cross-check: {:?}\n",
            v.conclusion, v.theorem_path, v.local_alm_at_all_globals, v.side_condition, v.cross_check.verdict
        ));
        if let Some(nd) = &v.nondegeneracy {
            out.push_str(&format!("  non-degeneracy: {} ({})\n", nd.holds, nd.evidence));
        }
        if let Some(r) = v.r_upper_estimate {
            out.push_str(&format!("  local r estimate <= {r}\n"));
        }
    }
    for k in &report.kkt {
        out.push_str(&format!(
            "KKT: {} (stationarity {:.3e}, complementarity {:.3e}, sign {:.3e})\n",
            k.is_kkt, k.stationarity_residual, k.complementarity_residual, k.sign_residual
        ));
    }
    for s in &report.sosc {
        out.push_str(&format!(
            "second order ({:?}): {} (min quadratic value {:?}, {} directions, cone {:?})\n",
            s.mode, s.verdict, s.min_quadratic_value, s.directions_tested, s.cone
        ));
    }
    for c in &report.calmness {
        out.push_str(&format!("calmness (gamma={}): estimate {:.6}\n", c.gamma, c.estimate));
    }
    for e in &report.evaluations {
        out.push_str(&format!("{e}\n"));
    }
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out.push_str(&format!("overall: {:?}\n", report.overall));
    out
}

/// Parses arguments and runs; never panics on bad input.
pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_HOLDS,
                _ => EXIT_USAGE,
            };
            return Outcome { code, stdout: e.to_string(), report: None };
        }
    };
    match execute(&cli) {
        Ok(o) => o,
        Err(e) => Outcome { code: EXIT_USAGE, stdout: format!("error: {e:#}\n"), report: None },
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Catalog { json, id } => Ok(Outcome {
            code: EXIT_HOLDS,
            stdout: catalog_listing(*json, id.as_deref())?,
            report: None,
        }),
        Command::ReportMerge { files, output } => {
            if files.is_empty() {
                bail!("report-merge needs at least one report file");
            }
            let reports = files.iter().map(|f| read_report(f)).collect::<Result<Vec<_>>>()?;
            let merged = Report::merge(reports);
            if let Some(p) = output {
                write_report(&merged, p)?;
            }
            Ok(Outcome {
                code: merged.exit_code(),
                stdout: serde_json::to_string_pretty(&merged)? + "\n",
                report: Some(merged),
            })
        }
        _ => {
            let (cfg, json_out) = build_config(cli)?;
            let report = run(&cfg)?;
            let stdout = if json_out { serde_json::to_string_pretty(&report)? + "\n" } else { summary(&report) };
            Ok(Outcome { code: report.exit_code(), stdout, report: Some(report) })
        }
    }
}
