//! Minimization of the reduced action over the constant-charge set, with lower-bound and
//! Palais-Smale monitors and multi-start over winding classes.

use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt::{ser_f64, ser_opt_f64};
use crate::lagrangian::{AuditReport, LagrangianModel};
use crate::numerics::axpy;
use crate::path::{
    action, action_gradient, dual_norm, init_path, resample, riesz, DiscretePath, PathVariation,
};
use crate::reduction::{
    default_tol_n, noether_profile, project_with_phi, slice_nodes, t_reconstruct, ChargeLinearization,
};
use crate::verify::{el_residual, energy_conservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Minimize over the slice path and rebuild `t` (product models only).
    ReducedX,
    /// Gradient step on the full path followed by projection.
    ProjectedFull,
}

impl FromStr for SolverMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced_x" => Ok(Self::ReducedX),
            "projected_full" => Ok(Self::ProjectedFull),
            _ => Err(Error::Input(format!(
                "unknown solver mode '{s}' (expected reduced_x or projected_full)"
            ))),
        }
    }
}

impl std::fmt::Display for SolverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ReducedX => "reduced_x",
            Self::ProjectedFull => "projected_full",
        })
    }
}

/// Audited constants entering `J ≥ c2 − c3²/c1 − 2(N_c² + k2²)/k1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub k1: f64,
    pub k2: f64,
}

impl BoundConstants {
    pub fn from_audit(report: &AuditReport) -> Self {
        Self {
            c1: report.c1,
            c2: report.c2,
            c3: report.c3,
            k1: report.k1,
            k2: report.k2,
        }
    }

    pub fn lower_bound(&self, nc: f64) -> f64 {
        self.c2 - self.c3 * self.c3 / self.c1 - 2.0 * (nc * nc + self.k2 * self.k2) / self.k1
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub mode: SolverMode,
    /// Iteration cap per grid level.
    pub max_iters: usize,
    /// Stopping threshold on the dual H¹ norm of the reduced gradient.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Grid sizes, coarse to fine; empty keeps the initial grid.
    pub levels: Vec<usize>,
    /// Membership tolerance; defaults per model.
    pub tol_n: Option<f64>,
    pub bounds: Option<BoundConstants>,
    /// Box watched by the Palais-Smale monitor (the `t` coordinate of product models is ignored).
    pub monitor_box: Option<Vec<(f64, f64)>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mode: SolverMode::ReducedX,
            max_iters: 500,
            grad_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack: 0.5,
            initial_step: 0.5,
            max_step: 2.0,
            levels: vec![32, 64, 128],
            tol_n: None,
            bounds: None,
            monitor_box: None,
        }
    }
}

impl SolverOptions {
    fn validate(&self, model: &LagrangianModel) -> Result<()> {
        self.validate_shape()?;
        if self.mode == SolverMode::ReducedX && model.product().is_none() {
            return Err(Error::Input("mode reduced_x requires a product model".into()));
        }
        if let Some(b) = &self.monitor_box {
            crate::error::check_dim(model.dim(), b.len())?;
        }
        Ok(())
    }

    /// Model-independent checks.
    pub(crate) fn validate_shape(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("armijo_c", self.armijo_c),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Input("backtrack factor must lie in (0, 1)".into()));
        }
        if let Some(t) = self.tol_n {
            if !(t > 0.0) {
                return Err(Error::Input("tol_n must be positive".into()));
            }
        }
        if self.levels.iter().any(|n| *n < 2) {
            return Err(Error::Input("grid levels must have n >= 2".into()));
        }
        Ok(())
    }
}

/// One accepted iterate (or the starting point of a level).
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub level_n: usize,
    pub iter: usize,
    #[serde(serialize_with = "ser_f64")]
    pub j: f64,
    #[serde(serialize_with = "ser_f64")]
    pub grad_norm: f64,
    /// Charge level of the iterate.
    #[serde(serialize_with = "ser_f64")]
    pub charge: f64,
    /// Running `N_c = max |charge|`.
    #[serde(serialize_with = "ser_f64")]
    pub nc: f64,
    #[serde(serialize_with = "ser_opt_f64")]
    pub lower_bound: Option<f64>,
    pub in_box: bool,
}

/// Palais-Smale diagnostic computed from a trace.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PsDiagnostic {
    pub flagged: bool,
    /// `"stagnation"` or `"unbounded descent"`.
    pub kind: Option<String>,
    pub first_exit: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub model: String,
    pub mode: SolverMode,
    pub converged: bool,
    #[serde(serialize_with = "ser_f64")]
    pub j: f64,
    #[serde(serialize_with = "ser_f64")]
    pub a: f64,
    #[serde(serialize_with = "ser_f64")]
    pub projected_grad_norm: f64,
    #[serde(serialize_with = "ser_f64")]
    pub full_grad_norm: f64,
    #[serde(serialize_with = "ser_f64")]
    pub el_residual: f64,
    #[serde(serialize_with = "ser_f64")]
    pub energy_mean: f64,
    #[serde(serialize_with = "ser_f64")]
    pub energy_std: f64,
    #[serde(serialize_with = "ser_f64")]
    pub noether_constant: f64,
    #[serde(serialize_with = "ser_f64")]
    pub c_z: f64,
    #[serde(serialize_with = "ser_f64")]
    pub noether_deviation: f64,
    #[serde(serialize_with = "ser_f64")]
    pub nc: f64,
    pub iterations: usize,
    pub n: usize,
    pub winding: Vec<i64>,
    pub lower_bound_violations: usize,
    pub projection_increases: usize,
    pub monotonicity_violations: usize,
    pub palais_smale: PsDiagnostic,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub report: SolveReport,
    pub path: DiscretePath,
}

fn membership(model: &LagrangianModel, path: &DiscretePath, tol_n: f64) -> Result<()> {
    let profile = noether_profile(model, path)?;
    if profile.is_member(tol_n) {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "path is not in the constant-charge set (deviation {} > {tol_n})",
            profile.deviation
        )))
    }
}

/// `J(z) = A(z)` for a member path.
pub fn reduced_action(model: &LagrangianModel, path: &DiscretePath, tol_n: f64) -> Result<f64> {
    membership(model, path, tol_n)?;
    action(model, path)
}

/// Reduced gradient at a member path.
#[derive(Debug, Clone)]
pub struct ReducedGradient {
    /// Covector `R` equal to `dA` on tangent directions and vanishing on `μK`.
    pub covector: PathVariation,
    /// Tangent descent direction `P_N(M⁻¹R)`.
    pub direction: PathVariation,
    /// `sqrt(⟨R, M⁻¹R⟩)`.
    pub norm: f64,
}

/// Tangent part of a variation, without the membership check.
fn tangent_part(lin: &ChargeLinearization, xi: &PathVariation) -> Result<PathVariation> {
    let (mu, _) = lin.solve(&lin.apply(xi))?;
    let mut out = xi.clone();
    for (i, row) in out.values.iter_mut().enumerate() {
        axpy(-mu[i], &lin.k[i], row);
    }
    Ok(out)
}

fn reduced_from(
    model: &LagrangianModel,
    path: &DiscretePath,
    g: &PathVariation,
) -> Result<ReducedGradient> {
    let n = path.n();
    let lin = ChargeLinearization::new(model, path)?;
    let w: Vec<f64> = (0..=n)
        .map(|j| g.values[j].iter().zip(&lin.k[j]).map(|(a, b)| a * b).sum())
        .collect();
    // y = Sᵀw, column by column of the charge-to-μ map.
    let mut y = vec![0.0; n];
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        let (mu, _) = lin.solve(&e)?;
        y[k] = mu.iter().zip(&w).map(|(a, b)| a * b).sum();
        e[k] = 0.0;
    }
    let nf = n as f64;
    let mut r = g.clone();
    for j in 1..n {
        for k in 0..path.dim() {
            let left = y[j - 1] * (0.5 * lin.dn_dx[j - 1][k] + nf * lin.q[j - 1][k]);
            let right = y[j] * (0.5 * lin.dn_dx[j][k] - nf * lin.q[j][k]);
            r.values[j][k] -= left + right;
        }
    }
    let u = riesz(&r);
    let norm = r.pair(&u).max(0.0).sqrt();
    let direction = tangent_part(&lin, &u)?;
    Ok(ReducedGradient {
        covector: r,
        direction,
        norm,
    })
}

/// `R = P_Nᵀ dA` at a member path, its tangent Riesz direction and dual norm.
pub fn reduced_gradient(model: &LagrangianModel, path: &DiscretePath, tol_n: f64) -> Result<ReducedGradient> {
    membership(model, path, tol_n)?;
    let g = action_gradient(model, path)?;
    reduced_from(model, path, &g)
}

struct Monitor<'a> {
    model: &'a LagrangianModel,
    bounds: Option<BoundConstants>,
    watch: Option<Vec<(f64, f64)>>,
    nc: f64,
    trace: Vec<TraceEntry>,
    lb_violations: usize,
    projection_increases: usize,
    monotonicity_violations: usize,
}

impl<'a> Monitor<'a> {
    fn new(model: &'a LagrangianModel, opts: &SolverOptions) -> Self {
        let watch = opts.monitor_box.clone().map(|mut b| {
            if let Some(ps) = model.product() {
                b[ps.t_index] = (f64::NEG_INFINITY, f64::INFINITY);
            }
            for (j, p) in model.periods().iter().enumerate() {
                if p.is_some() {
                    b[j] = (f64::NEG_INFINITY, f64::INFINITY);
                }
            }
            b
        });
        Self {
            model,
            bounds: opts.bounds,
            watch,
            nc: 0.0,
            trace: Vec::new(),
            lb_violations: 0,
            projection_increases: 0,
            monotonicity_violations: 0,
        }
    }

    fn record(&mut self, level_n: usize, iter: usize, path: &DiscretePath, j: f64, grad_norm: f64, charge: f64) {
        if let Some(prev) = self.trace.last() {
            if prev.level_n == level_n && j > prev.j + 1e-12 * (1.0 + prev.j.abs()) {
                self.monotonicity_violations += 1;
            }
        }
        self.nc = self.nc.max(charge.abs());
        let lower_bound = self.bounds.map(|b| b.lower_bound(self.nc));
        if let Some(lb) = lower_bound {
            if j < lb - 1e-12 * (1.0 + lb.abs()) {
                self.lb_violations += 1;
            }
        }
        let in_box = match &self.watch {
            None => true,
            Some(b) => path.nodes().iter().all(|z| {
                let z = self.model.wrap(z);
                z.iter().zip(b).all(|(c, (lo, hi))| *c >= *lo && *c <= *hi)
            }),
        };
        self.trace.push(TraceEntry {
            level_n,
            iter,
            j,
            grad_norm,
            charge,
            nc: self.nc,
            lower_bound,
            in_box,
        });
    }
}

/// Classifies a trace: iterates leaving the watched box while the gradient has become small
/// is stagnation; leaving it while `J` keeps falling is unbounded descent.
pub fn palais_smale_monitor(trace: &[TraceEntry]) -> PsDiagnostic {
    let Some(first_exit) = trace.iter().position(|e| !e.in_box) else {
        return PsDiagnostic {
            message: if trace.is_empty() { "empty trace" } else { "iterates stayed in the box" }.into(),
            ..Default::default()
        };
    };
    let last = trace.last().expect("nonempty");
    let at_exit = &trace[first_exit];
    let peak_grad = trace.iter().map(|e| e.grad_norm).fold(0.0, f64::max);
    let still_falling = last.j < at_exit.j - 1e-9 * (1.0 + at_exit.j.abs());
    let kind = if still_falling && last.grad_norm > 1e-3 * peak_grad {
        "unbounded descent"
    } else {
        "stagnation"
    };
    PsDiagnostic {
        flagged: true,
        kind: Some(kind.into()),
        first_exit: Some(first_exit),
        message: format!(
            "iterates left the sample box at trace entry {first_exit} (J {} -> {}, gradient norm {})",
            at_exit.j, last.j, last.grad_norm
        ),
    }
}

struct LevelResult {
    path: DiscretePath,
    norm: f64,
    iters: usize,
}

fn roundoff_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14 * (1.0 + a.abs())
}

/// Backtracking Armijo search from `step`, refined by one quadratic-interpolation trial.
/// `eval(α)` returns the trial state with its `J` and gradient norm. Within round-off of `j0`
/// a trial is accepted if it lowers the gradient norm.
fn line_search<T>(
    j0: f64,
    norm0: f64,
    slope: f64,
    step: f64,
    opts: &SolverOptions,
    mut eval: impl FnMut(f64) -> Option<(T, f64, f64)>,
) -> Option<(T, f64)> {
    if 0.5 * slope * step <= 1e-12 * (1.0 + j0.abs()) {
        // J no longer resolves the decrease; the gradient norm is the merit.
        let mut best: Option<(T, f64, f64)> = None;
        let mut alpha = step;
        for _ in 0..8 {
            if let Some((trial, _, norm)) = eval(alpha) {
                if norm < norm0 && best.as_ref().is_none_or(|b| norm < b.2) {
                    best = Some((trial, alpha, norm));
                }
            }
            alpha *= opts.backtrack;
        }
        return best.map(|(t, a, _)| (t, a));
    }
    let mut alpha = step;
    while alpha > 1e-14 {
        if let Some((trial, j, norm)) = eval(alpha) {
            if j <= j0 - opts.armijo_c * alpha * slope {
                let curvature = j - j0 + slope * alpha;
                if curvature > 0.0 {
                    let aq = slope * alpha * alpha / (2.0 * curvature);
                    if aq.is_finite() && aq > 0.1 * alpha && aq < 0.9 * alpha {
                        if let Some((t2, j2, _)) = eval(aq) {
                            if j2 < j && j2 <= j0 - opts.armijo_c * aq * slope {
                                return Some((t2, aq));
                            }
                        }
                    }
                }
                return Some((trial, alpha));
            }
            if roundoff_equal(j, j0) && norm < norm0 {
                return Some((trial, alpha));
            }
        }
        alpha *= opts.backtrack;
    }
    None
}

struct ReducedState {
    x: Vec<Vec<f64>>,
    path: DiscretePath,
    j: f64,
    dir: PathVariation,
    norm: f64,
    charge: f64,
}

fn reduced_state(model: &LagrangianModel, x: Vec<Vec<f64>>, t0: f64, dt: f64) -> Result<ReducedState> {
    let ps = model.product().ok_or(Error::NotProductForm)?;
    let (path, c_z) = t_reconstruct(model, &x, t0, dt)?;
    let j = action(model, &path)?;
    let g = action_gradient(model, &path)?;
    let grad = PathVariation {
        values: g.values.iter().map(|row| ps.split(row).0).collect(),
    };
    let dir = riesz(&grad);
    let norm = grad.pair(&dir).max(0.0).sqrt();
    Ok(ReducedState {
        x,
        path,
        j,
        dir,
        norm,
        charge: 2.0 * c_z,
    })
}

fn run_reduced(
    model: &LagrangianModel,
    start: &DiscretePath,
    opts: &SolverOptions,
    mon: &mut Monitor,
) -> Result<LevelResult> {
    let ps = model.product().ok_or(Error::NotProductForm)?;
    let n = start.n();
    let t0 = start.start()[ps.t_index];
    let dt = start.end()[ps.t_index] - t0;
    let mut st = reduced_state(model, slice_nodes(model, start)?, t0, dt)?;
    mon.record(n, 0, &st.path, st.j, st.norm, st.charge);
    let mut step = opts.initial_step;
    let mut iters = 0;
    while iters < opts.max_iters && st.norm > opts.grad_tol {
        let slope = st.norm * st.norm;
        let accepted = line_search(st.j, st.norm, slope, step, opts, |alpha| {
            let trial_x: Vec<Vec<f64>> = st
                .x
                .iter()
                .zip(&st.dir.values)
                .enumerate()
                .map(|(i, (x, d))| {
                    if i == 0 || i == n {
                        x.clone()
                    } else {
                        x.iter().zip(d).map(|(a, b)| a - alpha * b).collect()
                    }
                })
                .collect();
            let trial = reduced_state(model, trial_x, t0, dt).ok()?;
            let (j, norm) = (trial.j, trial.norm);
            Some((trial, j, norm))
        });
        let Some((next, alpha)) = accepted else { break };
        iters += 1;
        st = next;
        mon.record(n, iters, &st.path, st.j, st.norm, st.charge);
        step = (2.0 * alpha).min(opts.max_step);
    }
    Ok(LevelResult {
        path: st.path,
        norm: st.norm,
        iters,
    })
}

struct FullState {
    path: DiscretePath,
    j: f64,
    red: ReducedGradient,
    charge: f64,
}

fn full_state(model: &LagrangianModel, path: DiscretePath) -> Result<FullState> {
    let profile = noether_profile(model, &path)?;
    let j = action(model, &path)?;
    let g = action_gradient(model, &path)?;
    let red = reduced_from(model, &path, &g)?;
    Ok(FullState {
        path,
        j,
        red,
        charge: profile.constant,
    })
}

fn run_projected(
    model: &LagrangianModel,
    start: &DiscretePath,
    opts: &SolverOptions,
    tol_n: f64,
    mon: &mut Monitor,
) -> Result<LevelResult> {
    let n = start.n();
    let projected = project_with_phi(model, start, tol_n)?.path;
    let mut st = full_state(model, projected)?;
    mon.record(n, 0, &st.path, st.j, st.red.norm, st.charge);
    let mut step = opts.initial_step;
    let mut iters = 0;
    while iters < opts.max_iters && st.red.norm > opts.grad_tol {
        let slope = st.red.norm * st.red.norm;
        let accepted = line_search(st.j, st.red.norm, slope, step, opts, |alpha| {
            let y = st.path.step(-alpha, &st.red.direction).ok()?;
            let ay = action(model, &y).ok()?;
            let w = project_with_phi(model, &y, tol_n).ok()?.path;
            let trial = full_state(model, w).ok()?;
            let increased = trial.j > ay + 1e-12 * (1.0 + ay.abs());
            let (j, norm) = (trial.j, trial.red.norm);
            Some(((trial, increased), j, norm))
        });
        let Some(((next, increased), alpha)) = accepted else { break };
        if increased {
            mon.projection_increases += 1;
        }
        iters += 1;
        st = next;
        mon.record(n, iters, &st.path, st.j, st.red.norm, st.charge);
        step = (2.0 * alpha).min(opts.max_step);
    }
    Ok(LevelResult {
        path: st.path,
        norm: st.red.norm,
        iters,
    })
}

/// Minimizes the reduced action from `init` through the grid schedule in `opts`.
///
/// Non-convergence is reported through `converged = false`, not as an error.
pub fn minimize(model: &LagrangianModel, init: &DiscretePath, opts: &SolverOptions) -> Result<Solution> {
    opts.validate(model)?;
    crate::error::check_dim(model.dim(), init.dim())?;
    let tol_n = opts.tol_n.unwrap_or_else(|| default_tol_n(model));
    let levels = if opts.levels.is_empty() {
        vec![init.n()]
    } else {
        opts.levels.clone()
    };
    let mut mon = Monitor::new(model, opts);
    let mut path = init.clone();
    let mut iterations = 0;
    let mut last_norm = f64::INFINITY;
    for n in levels {
        if path.n() != n {
            path = resample(&path, n)?;
        }
        let out = match opts.mode {
            SolverMode::ReducedX => run_reduced(model, &path, opts, &mut mon)?,
            SolverMode::ProjectedFull => run_projected(model, &path, opts, tol_n, &mut mon)?,
        };
        path = out.path;
        iterations += out.iters;
        last_norm = out.norm;
    }

    let profile = noether_profile(model, &path)?;
    let a = action(model, &path)?;
    // A diverging run can leave the final path where derivatives overflow; those diagnostics
    // are then reported as NaN.
    let full_grad_norm = action_gradient(model, &path).map_or(f64::NAN, |g| dual_norm(&g));
    let el = if path.n() >= 4 { el_residual(model, &path).unwrap_or(f64::NAN) } else { f64::NAN };
    let (energy_mean, energy_std) = energy_conservation(model, &path).unwrap_or((f64::NAN, f64::NAN));
    let converged = last_norm <= opts.grad_tol && profile.is_member(tol_n);
    let report = SolveReport {
        model: model.name().to_string(),
        mode: opts.mode,
        converged,
        j: a,
        a,
        projected_grad_norm: last_norm,
        full_grad_norm,
        el_residual: el,
        energy_mean,
        energy_std,
        noether_constant: profile.constant,
        c_z: profile.c_z,
        noether_deviation: profile.deviation,
        nc: mon.nc,
        iterations,
        n: path.n(),
        winding: path.winding(model),
        lower_bound_violations: mon.lb_violations,
        projection_increases: mon.projection_increases,
        monotonicity_violations: mon.monotonicity_violations,
        palais_smale: palais_smale_monitor(&mon.trace),
        trace: mon.trace,
    };
    Ok(Solution { report, path })
}

/// One run of a multi-start.
#[derive(Debug, Clone, Serialize)]
pub struct MultiEntry {
    pub winding: Vec<i64>,
    pub report: SolveReport,
    #[serde(skip)]
    pub path: DiscretePath,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplicityResult {
    /// Sorted by `J` ascending.
    pub entries: Vec<MultiEntry>,
    #[serde(serialize_with = "ser_f64")]
    pub sep_tol: f64,
    /// Every pair of actions differs by more than `sep_tol`.
    pub distinct: bool,
    pub all_converged: bool,
}

/// Relative separation used for the distinct-actions certificate.
pub const SEPARATION_TOL: f64 = 1e-6;

/// Runs [`minimize`] from the straight line of every winding class, on at most `jobs` threads.
///
/// `prepare` may modify each initial path (e.g. perturb it) before solving.
pub fn multistart_homotopy(
    model: &LagrangianModel,
    p: &[f64],
    q: &[f64],
    windings: &[Vec<i64>],
    opts: &SolverOptions,
    jobs: usize,
    prepare: &(dyn Fn(&[i64], DiscretePath) -> Result<DiscretePath> + Sync),
) -> Result<MultiplicityResult> {
    if windings.is_empty() {
        return Err(Error::Input("winding set is empty".into()));
    }
    if !model.has_periodic() {
        return Err(Error::Input(
            "multistart needs at least one periodic coordinate (the chart is contractible)".into(),
        ));
    }
    let n0 = opts.levels.first().copied().unwrap_or(32);
    let run = |w: &Vec<i64>| -> Result<MultiEntry> {
        let init = prepare(w, init_path(model, p, q, n0, w)?)?;
        let sol = minimize(model, &init, opts)?;
        Ok(MultiEntry {
            winding: w.clone(),
            report: sol.report,
            path: sol.path,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    let results: Vec<Result<MultiEntry>> = pool.install(|| windings.par_iter().map(run).collect());
    let mut entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.report.j.total_cmp(&b.report.j));
    let distinct = entries.windows(2).all(|w| {
        let (a, b) = (w[0].report.j, w[1].report.j);
        (b - a).abs() > SEPARATION_TOL * (1.0 + a.abs().max(b.abs()))
    });
    let all_converged = entries.iter().all(|e| e.report.converged);
    Ok(MultiplicityResult {
        entries,
        sep_tol: SEPARATION_TOL,
        distinct,
        all_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{beta_sine, cyl, flat11, make_product_model, L0Spec, ProductModelSpec};
    use crate::path::perturbed;
    use crate::reduction::{project_to_n, TOL_N_PRODUCT};
    use std::f64::consts::PI;

    fn zigzag_init(n: usize) -> DiscretePath {
        let z = DiscretePath::new(vec![vec![0.0, 0.0], vec![0.8, 1.0], vec![1.0, 0.5]]).unwrap();
        resample(&z, n).unwrap()
    }

    fn flat_bounds() -> BoundConstants {
        BoundConstants {
            c1: 2.0,
            c2: 0.0,
            c3: 0.0,
            k1: 2.0,
            k2: 0.0,
        }
    }

    #[test]
    fn reduced_examples() {
        let flat = flat11();
        let line = init_path(&flat, &[0.0, 0.0], &[1.0, 0.5], 16, &[]).unwrap();
        assert_eq!(reduced_action(&flat, &line, TOL_N_PRODUCT).unwrap(), 0.75);
        assert!(reduced_gradient(&flat, &line, TOL_N_PRODUCT).unwrap().norm <= 1e-12);
        let c = cyl();
        let w = init_path(&c, &[0.0, 0.0], &[PI / 2.0, 0.0], 16, &[-1, 0]).unwrap();
        let j = reduced_action(&c, &w, TOL_N_PRODUCT).unwrap();
        assert!((j - (PI / 2.0 - 2.0 * PI).powi(2)).abs() < 1e-12 * j);
        let parabola = DiscretePath::new(
            (0..=16)
                .map(|i| {
                    let s = i as f64 / 16.0;
                    vec![s, s * s]
                })
                .collect(),
        )
        .unwrap();
        assert!(reduced_action(&flat, &parabola, TOL_N_PRODUCT).is_err());
        let proj = project_to_n(&flat, &parabola).unwrap();
        assert!(reduced_action(&flat, &proj, TOL_N_PRODUCT).unwrap().abs() < 1e-12);
    }

    #[test]
    fn product_reduced_gradient_equals_full() {
        let model = beta_sine();
        let init = perturbed(&init_path(&model, &[0.0, 0.0], &[1.0, 0.5], 16, &[]).unwrap(), &[0], 0.2, 2, 3)
            .unwrap();
        let member = project_to_n(&model, &init).unwrap();
        let g = action_gradient(&model, &member).unwrap();
        let r = reduced_gradient(&model, &member, TOL_N_PRODUCT).unwrap();
        let diff = r
            .covector
            .values
            .iter()
            .zip(&g.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn flat_zigzag_reduced_x() {
        let flat = flat11();
        let opts = SolverOptions {
            grad_tol: 1e-11,
            levels: vec![64],
            max_iters: 200,
            bounds: Some(flat_bounds()),
            ..Default::default()
        };
        let sol = minimize(&flat, &zigzag_init(64), &opts).unwrap();
        let r = &sol.report;
        assert!(r.converged, "{r:?}");
        assert!((r.j - 0.75).abs() <= 1e-8);
        assert!(r.el_residual <= 1e-6);
        assert!(r.energy_std <= 1e-10);
        assert!(r.iterations <= 200);
        assert_eq!(r.lower_bound_violations, 0);
        assert_eq!(r.monotonicity_violations, 0);
        assert!(!r.palais_smale.flagged);
        for e in &r.trace {
            assert!(e.j >= -e.nc * e.nc);
        }
    }

    #[test]
    fn flat_zigzag_projected_full_agrees() {
        let flat = flat11();
        let base = SolverOptions {
            grad_tol: 1e-8,
            levels: vec![32],
            ..Default::default()
        };
        let a = minimize(&flat, &zigzag_init(32), &base).unwrap();
        let b = minimize(
            &flat,
            &zigzag_init(32),
            &SolverOptions {
                mode: SolverMode::ProjectedFull,
                ..base
            },
        )
        .unwrap();
        assert!(a.report.converged && b.report.converged);
        assert!((a.report.j - b.report.j).abs() < 1e-6);
        assert!(b.report.full_grad_norm <= 10.0 * 1e-8);
    }

    #[test]
    fn max_iters_gives_unconverged_report() {
        let flat = flat11();
        let opts = SolverOptions {
            max_iters: 1,
            levels: vec![32],
            grad_tol: 1e-10,
            ..Default::default()
        };
        let sol = minimize(&flat, &zigzag_init(32), &opts).unwrap();
        assert!(!sol.report.converged);
        assert_eq!(sol.report.iterations, 1);
    }

    #[test]
    fn reduced_x_requires_product() {
        let r = crate::models::rotating_frame();
        let init = init_path(&r, &[0.0, 0.0, 0.0], &[0.5, 0.2, 0.3], 8, &[]).unwrap();
        assert!(matches!(
            minimize(&r, &init, &SolverOptions::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn cyl_multistart_is_sorted_and_distinct() {
        let c = cyl();
        let windings: Vec<Vec<i64>> = (-1..=1).map(|k| vec![k, 0]).collect();
        let opts = SolverOptions {
            levels: vec![16, 32],
            grad_tol: 1e-9,
            ..Default::default()
        };
        let prep = |w: &[i64], p: DiscretePath| perturbed(&p, &[0, 1], 0.2, 3, (11 + w[0]) as u64);
        let res = multistart_homotopy(&c, &[0.0, 0.0], &[PI / 2.0, 0.0], &windings, &opts, 2, &prep).unwrap();
        let js: Vec<f64> = res.entries.iter().map(|e| e.report.j).collect();
        let expect = [2.4674011002723395, 22.206609902451056, 61.68502750680849];
        for (j, e) in js.iter().zip(expect) {
            assert!((j - e).abs() < 1e-6 * e, "{js:?}");
        }
        assert!(res.distinct && res.all_converged);
        for e in &res.entries {
            assert_eq!(e.report.winding, e.winding);
        }
        let flat = flat11();
        assert!(multistart_homotopy(&flat, &[0.0, 0.0], &[1.0, 0.0], &[vec![0, 0]], &opts, 1, &prep).is_err());
        assert!(multistart_homotopy(&c, &[0.0, 0.0], &[1.0, 0.0], &[], &opts, 1, &prep).is_err());
    }

    #[test]
    fn palais_smale_on_empty_and_clean_traces() {
        assert!(!palais_smale_monitor(&[]).flagged);
    }

    fn runaway() -> LagrangianModel {
        let mut spec = ProductModelSpec::new("runaway", 1, L0Spec::Expression("v0^2/(1 + x0^2)^2".into()));
        spec.beta = "1 + x0^2".into();
        make_product_model(&spec).unwrap()
    }

    #[test]
    fn drift_is_flagged_when_j_is_unbounded() {
        let m = runaway();
        let init = init_path(&m, &[0.0, 0.0], &[0.0, 6.0], 32, &[0, 0])
            .unwrap()
            .with_interior(|i, x| vec![0.5 * (PI * i as f64 / 32.0).sin(), x[1]])
            .unwrap();
        let opts = SolverOptions {
            levels: vec![32],
            max_iters: 300,
            monitor_box: Some(vec![(-3.0, 3.0), (-1.0, 2.0)]),
            ..Default::default()
        };
        let r = minimize(&m, &init, &opts).unwrap().report;
        assert!(!r.converged);
        let ps = &r.palais_smale;
        assert!(ps.flagged, "{ps:?}");
        assert_eq!(ps.kind.as_deref(), Some("unbounded descent"));
        assert!(r.j < r.trace[0].j);
    }

    #[test]
    fn no_drift_flag_on_beta_sine() {
        let m = beta_sine();
        let opts = SolverOptions {
            levels: vec![32],
            monitor_box: Some(vec![(-3.0, 3.0), (-1.0, 2.0)]),
            ..Default::default()
        };
        let init = init_path(&m, &[0.0, 0.0], &[1.0, 0.5], 32, &[0, 0]).unwrap();
        let r = minimize(&m, &init, &opts).unwrap().report;
        assert!(r.converged && !r.palais_smale.flagged);
    }
}
