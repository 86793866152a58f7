//! Deterministic multistart pattern search over a box intersected with the
//! feasible region.
//!
//! Start points are a scrambled Halton sequence (a seeded Cranley–Patterson
//! shift), preceded by the projection of the origin and any caller-supplied
//! points. Each start runs a Hooke–Jeeves descent with extra diagonal polls.
//! Starts are independent; with the `parallel` feature they run on rayon and
//! are reduced in start order, so both execution modes give bit-identical
//! results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lagrangian::ExtendedValue;
use crate::linalg::norm;
use crate::problem::{feasibility_residual, FeasibleRegion, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Maps `f` over `items`, in parallel when enabled, preserving order.
pub fn ordered_map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Execution::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Explicit search bounds; otherwise `[-half_width, half_width]^d`
    /// intersected with the region's bounds.
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
    pub half_width: f64,
    pub starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub divergence_threshold: f64,
    #[serde(default)]
    pub extra_starts: Vec<Vec<f64>>,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            bounds: None,
            half_width: 20.0,
            starts: 32,
            seed: 0x5EED,
            max_iters: 500,
            tol: 1e-9,
            divergence_threshold: -1e9,
            extra_starts: Vec::new(),
            execution: Execution::default(),
            record_trace: false,
        }
    }
}

impl SearchConfig {
    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_extra_starts(mut self, pts: impl IntoIterator<Item = Vec<f64>>) -> Self {
        self.extra_starts.extend(pts);
        self
    }

    /// Finite search box for `dim` coordinates.
    pub fn search_box(&self, dim: usize, region: &FeasibleRegion) -> (Vec<f64>, Vec<f64>) {
        let (rl, ru) = region.bounds(dim);
        let (bl, bu) = match &self.bounds {
            Some((l, u)) if l.len() == dim && u.len() == dim => (l.clone(), u.clone()),
            _ => (vec![-self.half_width; dim], vec![self.half_width; dim]),
        };
        let lo: Vec<f64> = bl.iter().zip(&rl).map(|(b, r)| b.max(*r)).collect();
        let hi: Vec<f64> = bu.iter().zip(&ru).map(|(b, r)| b.min(*r)).collect();
        (lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStatus {
    Converged,
    BudgetExhausted,
    DivergingBelow,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchResult {
    pub status: SearchStatus,
    pub best_x: Vec<f64>,
    pub best_value: ExtendedValue,
    pub evaluations: usize,
    /// Improving iterates of the winning start, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<(Vec<f64>, ExtendedValue)>,
}

const PRIMES: [u32; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

fn radical_inverse(mut n: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while n > 0 {
        out += (n % base as u64) as f64 * inv;
        n /= base as u64;
        inv /= b;
    }
    out
}

/// `count` points in `[0,1)^dim`: Halton with a seeded random shift modulo 1.
/// Dimensions past the tenth fall back to seeded uniform draws.
pub fn scrambled_halton(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|k| {
            (0..dim)
                .map(|i| {
                    if i < PRIMES.len() {
                        (radical_inverse(k as u64 + 1, PRIMES[i]) + shift[i]).fract()
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

struct Domain<'a> {
    lo: Vec<f64>,
    hi: Vec<f64>,
    region: &'a FeasibleRegion,
}

impl Domain<'_> {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let clamped: Vec<f64> = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, u))| v.max(*l).min(*u))
            .collect();
        self.region.project(&clamped)
    }
}

struct LocalOutcome {
    x: Vec<f64>,
    value: ExtendedValue,
    evaluations: usize,
    exhausted: bool,
    diverged: bool,
    trace: Vec<(Vec<f64>, ExtendedValue)>,
}

fn poll_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    if dim <= 3 {
        // Every non-zero vector in {-1,0,1}^d with at least two entries.
        let total = 3usize.pow(dim as u32);
        for code in 0..total {
            let mut c = code;
            let v: Vec<f64> = (0..dim)
                .map(|_| {
                    let d = (c % 3) as f64 - 1.0;
                    c /= 3;
                    d
                })
                .collect();
            if v.iter().filter(|a| **a != 0.0).count() >= 2 {
                dirs.push(v);
            }
        }
    } else {
        for i in 0..dim {
            for j in (i + 1)..dim {
                for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut v = vec![0.0; dim];
                    v[i] = si;
                    v[j] = sj;
                    dirs.push(v);
                }
            }
        }
    }
    dirs
}

fn hooke_jeeves<F>(f: &F, x0: Vec<f64>, dom: &Domain, cfg: &SearchConfig, diag: &[Vec<f64>]) -> LocalOutcome
where
    F: Fn(&[f64]) -> ExtendedValue,
{
    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        f(x)
    };
    let width = dom
        .lo
        .iter()
        .zip(&dom.hi)
        .map(|(l, u)| u - l)
        .fold(0.0, f64::max);
    let mut h = (0.05 * width).max(cfg.tol * 10.0).max(1e-3);
    let mut base = dom.project(&x0);
    let mut fb = eval(&base);
    let mut trace = Vec::new();
    let below = |v: ExtendedValue| v.to_f64() <= cfg.divergence_threshold;
    if cfg.record_trace {
        trace.push((base.clone(), fb));
    }
    if below(fb) {
        return LocalOutcome {
            x: base,
            value: fb,
            evaluations: evals,
            exhausted: false,
            diverged: true,
            trace,
        };
    }
    let mut iters = 0;
    let mut exhausted = true;
    while iters < cfg.max_iters {
        iters += 1;
        // Exploratory moves around `base`.
        let explore = |start: &[f64], fs: ExtendedValue, h: f64, eval: &mut dyn FnMut(&[f64]) -> ExtendedValue| {
            let mut x = start.to_vec();
            let mut fx = fs;
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[i] += s * h;
                    let y = dom.project(&y);
                    let fy = eval(&y);
                    if fy < fx {
                        x = y;
                        fx = fy;
                        break;
                    }
                }
            }
            if fx >= fs {
                for d in diag {
                    let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + h * b).collect();
                    let y = dom.project(&y);
                    let fy = eval(&y);
                    if fy < fx {
                        x = y;
                        fx = fy;
                        break;
                    }
                }
            }
            (x, fx)
        };
        let (x1, f1) = explore(&base, fb, h, &mut eval);
        if f1 < fb {
            // Pattern moves while they keep paying off.
            let mut prev = base;
            base = x1;
            fb = f1;
            loop {
                if below(fb) {
                    break;
                }
                let jump: Vec<f64> = base.iter().zip(&prev).map(|(a, b)| 2.0 * a - b).collect();
                let jump = dom.project(&jump);
                let fj = eval(&jump);
                let (x2, f2) = explore(&jump, fj, h, &mut eval);
                if f2 < fb {
                    prev = std::mem::replace(&mut base, x2);
                    fb = f2;
                    iters += 1;
                    if iters >= cfg.max_iters {
                        break;
                    }
                } else {
                    break;
                }
            }
            if cfg.record_trace {
                trace.push((base.clone(), fb));
            }
            if below(fb) {
                return LocalOutcome {
                    x: base,
                    value: fb,
                    evaluations: evals,
                    exhausted: false,
                    diverged: true,
                    trace,
                };
            }
        } else {
            h *= 0.5;
            if h < cfg.tol {
                exhausted = false;
                break;
            }
        }
    }
    LocalOutcome {
        x: base,
        value: fb,
        evaluations: evals,
        exhausted,
        diverged: false,
        trace,
    }
}

/// Global minimization of `objective` over `region` intersected with the
/// configured search box.
pub fn global_min<F>(objective: F, dim: usize, region: &FeasibleRegion, cfg: &SearchConfig) -> SearchResult
where
    F: Fn(&[f64]) -> ExtendedValue + Sync,
{
    let (lo, hi) = cfg.search_box(dim, region);
    let dom = Domain { lo, hi, region };
    let mut starts: Vec<Vec<f64>> = vec![dom.project(&vec![0.0; dim])];
    for s in &cfg.extra_starts {
        if s.len() == dim {
            starts.push(dom.project(s));
        }
    }
    for u in scrambled_halton(dim, cfg.starts.max(1), cfg.seed) {
        let x: Vec<f64> = u
            .iter()
            .zip(dom.lo.iter().zip(&dom.hi))
            .map(|(t, (l, h))| l + t * (h - l))
            .collect();
        starts.push(dom.project(&x));
    }
    let diag = poll_directions(dim);
    let outcomes = ordered_map(&starts, cfg.execution, |s| {
        hooke_jeeves(&objective, s.clone(), &dom, cfg, &diag)
    });
    let evaluations: usize = outcomes.iter().map(|o| o.evaluations).sum();

    if let Some(d) = outcomes.iter().find(|o| o.diverged) {
        return SearchResult {
            status: SearchStatus::DivergingBelow,
            best_x: d.x.clone(),
            best_value: d.value,
            evaluations,
            trace: d.trace.clone(),
        };
    }
    let mut bi = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.value < outcomes[bi].value {
            bi = i;
        }
    }
    let best = &outcomes[bi];
    if best.value.is_pos_inf() {
        return SearchResult {
            status: SearchStatus::Converged,
            best_x: best.x.clone(),
            best_value: best.value,
            evaluations,
            trace: best.trace.clone(),
        };
    }
    let mut result = SearchResult {
        status: if best.exhausted {
            SearchStatus::BudgetExhausted
        } else {
            SearchStatus::Converged
        },
        best_x: best.x.clone(),
        best_value: best.value,
        evaluations,
        trace: best.trace.clone(),
    };
    escalate_rays(&objective, region, &dom, cfg, &mut result);
    result
}

/// When the best point sits on a face of the artificial search box, steps
/// outward at scales `10^k` to tell "unbounded below" from "large negative".
fn escalate_rays<F>(f: &F, region: &FeasibleRegion, dom: &Domain, cfg: &SearchConfig, res: &mut SearchResult)
where
    F: Fn(&[f64]) -> ExtendedValue,
{
    let dim = res.best_x.len();
    let (rl, ru) = region.bounds(dim);
    let scale_tol = 1e-6;
    let mut dir = vec![0.0; dim];
    for i in 0..dim {
        let x = res.best_x[i];
        if (x - dom.hi[i]).abs() <= scale_tol * (1.0 + dom.hi[i].abs()) && dom.hi[i] < ru[i] {
            dir[i] = 1.0;
        } else if (x - dom.lo[i]).abs() <= scale_tol * (1.0 + dom.lo[i].abs()) && dom.lo[i] > rl[i] {
            dir[i] = -1.0;
        }
    }
    if dir.iter().all(|d| *d == 0.0) {
        far_field_probe(f, region, cfg, res);
        return;
    }
    let origin = res.best_x.clone();
    for k in 1..=12 {
        let step = 10f64.powi(k);
        let y: Vec<f64> = origin.iter().zip(&dir).map(|(x, d)| x + d * step).collect();
        let y = region.project(&y);
        let fy = f(&y);
        res.evaluations += 1;
        if fy.to_f64() <= cfg.divergence_threshold {
            res.status = SearchStatus::DivergingBelow;
            res.best_x = y;
            res.best_value = fy;
            return;
        }
        if fy < res.best_value {
            res.status = SearchStatus::BudgetExhausted;
            res.best_x = y;
            res.best_value = fy;
        } else {
            return;
        }
    }
}

/// Coordinate rays from an interior winner at scales `10^k`: catches
/// objectives that turn downward only far outside the search box.
fn far_field_probe<F>(f: &F, region: &FeasibleRegion, cfg: &SearchConfig, res: &mut SearchResult)
where
    F: Fn(&[f64]) -> ExtendedValue,
{
    let dim = res.best_x.len();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            for k in 1..=12 {
                let mut y = res.best_x.clone();
                y[i] += s * 10f64.powi(k);
                let y = region.project(&y);
                let fy = f(&y);
                res.evaluations += 1;
                if fy.to_f64() <= cfg.divergence_threshold {
                    res.status = SearchStatus::DivergingBelow;
                    res.best_x = y;
                    res.best_value = fy;
                    return;
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterReport {
    pub clusters: bool,
    pub cluster_point: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    pub residual: Option<f64>,
    /// `None` when the optimal value is unknown or nothing clusters.
    pub is_global_solution: Option<bool>,
    pub message: String,
}

/// Tail check on a minimizer trace `(r_n, x_n)`: do the last three points lie
/// pairwise within `tol`, and is their mean a global solution within `tol`?
pub fn minimizing_sequence_cluster_check(spec: &ProblemSpec, trace: &[(f64, Vec<f64>)], tol: f64) -> Result<ClusterReport> {
    let k = trace.len().min(3);
    let tail = &trace[trace.len() - k..];
    let pts: Vec<&Vec<f64>> = tail.iter().map(|(_, x)| x).collect();
    let finite = pts.iter().all(|x| x.iter().all(|v| v.is_finite()));
    let mut clusters = k > 0 && finite;
    for i in 0..k {
        for j in (i + 1)..k {
            let d: Vec<f64> = pts[i].iter().zip(pts[j]).map(|(a, b)| a - b).collect();
            if norm(&d) > tol {
                clusters = false;
            }
        }
    }
    if !clusters {
        return Ok(ClusterReport {
            clusters: false,
            cluster_point: None,
            objective_value: None,
            residual: None,
            is_global_solution: None,
            message: "no cluster detected".into(),
        });
    }
    let mut c = vec![0.0; spec.dim];
    for x in &pts {
        for (ci, xi) in c.iter_mut().zip(x.iter()) {
            *ci += xi / k as f64;
        }
    }
    let f = spec.objective.eval(&c);
    let res = feasibility_residual(spec, &c)?;
    let global = spec.f_star().map(|fs| f <= fs + tol && res <= tol);
    let message = match global {
        Some(true) => "cluster point is a global solution".to_string(),
        Some(false) => "cluster point is not a global solution".to_string(),
        None => "cluster detected; optimal value unknown".to_string(),
    };
    Ok(ClusterReport {
        clusters: true,
        cluster_point: Some(c),
        objective_value: Some(f),
        residual: Some(res),
        is_global_solution: global,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_is_deterministic_and_in_unit_cube() {
        let a = scrambled_halton(3, 16, 7);
        let b = scrambled_halton(3, 16, 7);
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| (0.0..1.0).contains(v)));
        assert_ne!(a, scrambled_halton(3, 16, 8));
    }

    #[test]
    fn quadratic_minimum() {
        let f = |x: &[f64]| ExtendedValue::Finite((x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2));
        let r = global_min(f, 2, &FeasibleRegion::WholeSpace, &SearchConfig::default());
        assert_eq!(r.status, SearchStatus::Converged);
        assert!(r.best_value.to_f64() <= 1e-8);
        assert!((r.best_x[0] - 1.0).abs() < 1e-4 && (r.best_x[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn unbounded_ray_is_detected() {
        let f = |x: &[f64]| ExtendedValue::Finite(-x[0].max(0.0).powi(2) + x[0].max(0.0));
        let r = global_min(f, 1, &FeasibleRegion::WholeSpace, &SearchConfig::default());
        assert_eq!(r.status, SearchStatus::DivergingBelow);
        assert!(r.best_value.to_f64() <= -1e9);
    }

    #[test]
    fn all_infinite_is_converged_at_infinity() {
        let f = |_: &[f64]| ExtendedValue::PosInf;
        let r = global_min(f, 2, &FeasibleRegion::WholeSpace, &SearchConfig::default());
        assert_eq!(r.status, SearchStatus::Converged);
        assert!(r.best_value.is_pos_inf());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |x: &[f64]| ExtendedValue::Finite((x[0] * 3.0).sin() + 0.1 * x[0] * x[0] + (x[1] - 0.3).abs());
        let seq = global_min(f, 2, &FeasibleRegion::WholeSpace, &SearchConfig::default().with_execution(Execution::Sequential));
        let par = global_min(f, 2, &FeasibleRegion::WholeSpace, &SearchConfig::default().with_execution(Execution::Parallel));
        assert_eq!(seq.best_x, par.best_x);
        assert_eq!(seq.best_value, par.best_value);
        assert_eq!(seq.evaluations, par.evaluations);
    }

    #[test]
    fn respects_region() {
        let f = |x: &[f64]| ExtendedValue::Finite(-x[0] - x[1]);
        let ball = FeasibleRegion::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let r = global_min(f, 2, &ball, &SearchConfig::default());
        assert!((r.best_value.to_f64() + 2f64.sqrt()).abs() < 1e-6);
        assert_eq!(r.status, SearchStatus::Converged);
    }
}
