//! Independent checks on paths: Euler-Lagrange residuals, energy, a shooting integrator,
//! finite-difference gradient checks and a growth audit of the one-form `ω`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::fmt::{ser_f64, ser_opt_f64, ser_vec_f64};
use crate::lagrangian::{convexity_modulus_estimate, LagrangianModel, ProductStructure};
use crate::numerics::{dot, linear_fit, mean_std, norm, sub};
use crate::path::{action, action_gradient, interval_derivatives, DiscretePath, PathVariation};
use crate::reduction::{default_tol_n, noether_profile};

/// Largest interior-node residual `‖∂_xL(z_j, v̄_j) − n(p_j − p_{j−1})‖`, where `p_i` is the
/// momentum on interval `i` and `v̄_j` the mean of the adjacent interval velocities.
pub fn el_residual(model: &LagrangianModel, path: &DiscretePath) -> Result<f64> {
    let n = path.n();
    if n < 4 {
        return Err(Error::Input(format!("el_residual needs n >= 4, got {n}")));
    }
    let data = interval_derivatives(model, path)?;
    let nf = n as f64;
    let mut worst = 0.0_f64;
    for j in 1..n {
        let vbar: Vec<f64> = data[j - 1].1.iter().zip(&data[j].1).map(|(a, b)| 0.5 * (a + b)).collect();
        let gx = model.grad_x(path.node(j), &vbar).map_err(Error::at_interval(j))?;
        let r: Vec<f64> = (0..gx.len())
            .map(|k| gx[k] - nf * (data[j].3[k] - data[j - 1].3[k]))
            .collect();
        worst = worst.max(norm(&r));
    }
    Ok(worst)
}

/// Expected convergence order of [`el_residual`] for this path: `"O(h)"` when the velocity
/// has jumps of order one, `"O(h^2)"` otherwise.
pub fn el_order_tag(path: &DiscretePath) -> &'static str {
    let vs: Vec<Vec<f64>> = (0..path.n()).map(|i| path.interval(i).1).collect();
    let vmax = vs.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let jump = vs.windows(2).map(|w| norm(&sub(&w[1], &w[0]))).fold(0.0, f64::max);
    if jump > 0.25 * (1.0 + vmax) {
        "O(h)"
    } else {
        "O(h^2)"
    }
}

/// Per-interval energies `∂_vL(m_i, v_i)[v_i] − L(m_i, v_i)`.
pub fn energies(model: &LagrangianModel, path: &DiscretePath) -> Result<Vec<f64>> {
    check_dim(model.dim(), path.dim())?;
    (0..path.n())
        .map(|i| {
            let (m, v) = path.interval(i);
            let at = Error::at_interval(i);
            Ok(dot(&model.grad_v(&m, &v).map_err(&at)?, &v) - model.value(&m, &v).map_err(&at)?)
        })
        .collect()
}

/// Mean and population standard deviation of the interval energies.
pub fn energy_conservation(model: &LagrangianModel, path: &DiscretePath) -> Result<(f64, f64)> {
    Ok(mean_std(&energies(model, path)?))
}

/// Trajectory of the shooting integrator.
#[derive(Debug, Clone)]
pub struct Shot {
    pub endpoint: Vec<f64>,
    pub trajectory: Vec<Vec<f64>>,
    /// Charge level `C_z` fixed by the initial velocity.
    pub c_z: f64,
}

struct MomentumFlow<'a> {
    model: &'a LagrangianModel,
    ps: &'a ProductStructure,
    c_z: f64,
}

impl MomentumFlow<'_> {
    fn tau(&self, x: &[f64], nu: &[f64]) -> Result<f64> {
        let w = dot(&self.ps.omega.value(x)?, nu);
        Ok((w + 0.5 * self.ps.d.value(x)? - self.c_z) / self.ps.beta_checked(x)?)
    }

    /// Solves `∂_νL0(x,ν) + 2ω τ(ν) = P` by damped Newton.
    fn invert(&self, x: &[f64], p: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let m = x.len();
        let om = self.ps.omega.value(x)?;
        let beta = self.ps.beta_checked(x)?;
        let shift = (self.ps.d.value(x)? - 2.0 * self.c_z) / beta;
        let residual = |nu: &[f64]| -> Result<Vec<f64>> {
            let g = self.ps.l0.grad_v(x, nu)?;
            let w = dot(&om, nu);
            Ok((0..m).map(|k| g[k] + 2.0 * om[k] * w / beta + shift * om[k] - p[k]).collect())
        };
        let mut nu = guess.to_vec();
        let mut r = residual(&nu)?;
        let scale = 1.0 + norm(p);
        for _ in 0..60 {
            let rn = norm(&r);
            if rn <= 1e-13 * scale {
                return Ok(nu);
            }
            let mut jac = DMatrix::zeros(m, m);
            for j in 0..m {
                let h = 1e-6 * (1.0 + nu[j].abs());
                let mut a = nu.clone();
                let mut b = nu.clone();
                a[j] += h;
                b[j] -= h;
                let (ra, rb) = (residual(&a)?, residual(&b)?);
                for i in 0..m {
                    jac[(i, j)] = (ra[i] - rb[i]) / (2.0 * h);
                }
            }
            let step = jac
                .lu()
                .solve(&DVector::from_column_slice(&r))
                .ok_or_else(|| Error::Numeric(format!("singular momentum Jacobian at {x:?}")))?;
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = (0..m).map(|k| nu[k] - lambda * step[k]).collect();
                let rt = residual(&trial)?;
                if norm(&rt) < rn || lambda < 1e-6 {
                    nu = trial;
                    r = rt;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if norm(&r) <= 1e-9 * scale {
            return Ok(nu);
        }
        Err(Error::Numeric(format!(
            "momentum inversion failed at x = {x:?} (residual {})",
            norm(&r)
        )))
    }

    /// `d/ds (x, P, t) = (ν, ∂_xL, τ)`; also returns the velocity used.
    fn rhs(&self, state: &[f64], guess: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.ps.slice_dim();
        let (x, p, t) = (&state[..m], &state[m..2 * m], state[2 * m]);
        let nu = self.invert(x, p, guess)?;
        let tau = self.tau(x, &nu)?;
        let z = self.ps.join(x, t);
        let w = self.ps.join(&nu, tau);
        let gx = self.model.grad_x(&z, &w)?;
        let (gslice, _) = self.ps.split(&gx);
        let mut out = nu.clone();
        out.extend(gslice);
        out.push(tau);
        Ok((out, nu))
    }
}

/// RK4 integration of the Euler-Lagrange flow of a product model in momentum form, from `p`
/// with initial velocity `v0` over `s ∈ [0, 1]`.
pub fn shooting_oracle(model: &LagrangianModel, p: &[f64], v0: &[f64], steps: usize) -> Result<Shot> {
    let ps = model.product().ok_or(Error::NotProductForm)?;
    check_dim(model.dim(), p.len())?;
    check_dim(model.dim(), v0.len())?;
    if steps == 0 {
        return Err(Error::Input("shooting needs at least one step".into()));
    }
    let (x0, t0) = ps.split(p);
    let (nu0, tau0) = ps.split(v0);
    let beta = ps.beta_checked(&x0)?;
    let c_z = dot(&ps.omega.value(&x0)?, &nu0) + 0.5 * ps.d.value(&x0)? - beta * tau0;
    let flow = MomentumFlow { model, ps, c_z };
    let om = ps.omega.value(&x0)?;
    let mut state = x0.clone();
    state.extend(
        ps.l0
            .grad_v(&x0, &nu0)?
            .iter()
            .zip(&om)
            .map(|(g, o)| g + 2.0 * tau0 * o),
    );
    state.push(t0);
    let m = x0.len();
    let h = 1.0 / steps as f64;
    let mut guess = nu0.clone();
    let mut trajectory = vec![ps.join(&state[..m], state[2 * m])];
    let shifted = |s: &[f64], k: &[f64], a: f64| -> Vec<f64> { s.iter().zip(k).map(|(x, y)| x + a * y).collect() };
    for _ in 0..steps {
        let (k1, nu1) = flow.rhs(&state, &guess)?;
        let (k2, _) = flow.rhs(&shifted(&state, &k1, 0.5 * h), &nu1)?;
        let (k3, _) = flow.rhs(&shifted(&state, &k2, 0.5 * h), &nu1)?;
        let (k4, _) = flow.rhs(&shifted(&state, &k3, h), &nu1)?;
        for j in 0..state.len() {
            state[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        guess = nu1;
        trajectory.push(ps.join(&state[..m], state[2 * m]));
    }
    Ok(Shot {
        endpoint: trajectory.last().expect("nonempty").clone(),
        trajectory,
        c_z,
    })
}

/// Second-order estimate of the initial velocity of a path: `(3v_0 − v_1)/2`.
pub fn initial_velocity(path: &DiscretePath) -> Vec<f64> {
    let (v0, v1) = (path.interval(0).1, path.interval(1).1);
    v0.iter().zip(&v1).map(|(a, b)| 1.5 * a - 0.5 * b).collect()
}

/// Endpoint miss of the shooting integrator started from the path's first node and velocity.
pub fn shooting_gap(model: &LagrangianModel, path: &DiscretePath, steps: usize) -> Result<f64> {
    let shot = shooting_oracle(model, path.start(), &initial_velocity(path), steps)?;
    Ok(norm(&sub(&shot.endpoint, path.end())))
}

/// Heuristic evidence for sublinear growth of `ω` and the remaining growth hypotheses.
#[derive(Debug, Clone, Serialize)]
pub struct PseudocoercivityAudit {
    #[serde(serialize_with = "ser_f64")]
    pub k0: f64,
    #[serde(serialize_with = "ser_f64")]
    pub k1: f64,
    #[serde(serialize_with = "ser_f64")]
    pub alpha: f64,
    #[serde(serialize_with = "ser_vec_f64")]
    pub radii: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub omega_max: Vec<f64>,
    #[serde(serialize_with = "ser_f64")]
    pub beta_min: f64,
    #[serde(serialize_with = "ser_f64")]
    pub lambda0_min: f64,
    #[serde(serialize_with = "ser_f64")]
    pub l0_zero_min: f64,
    #[serde(serialize_with = "ser_f64")]
    pub dv_l0_zero_max: f64,
    #[serde(serialize_with = "ser_f64")]
    pub d_max: f64,
    pub verdict: String,
    pub label: String,
    pub reasons: Vec<String>,
}

/// Margin below 1 required of the fitted growth exponent.
pub const GROWTH_MARGIN: f64 = 0.1;

/// Samples the slice at distances `radii` from `x0` and fits `‖ω‖ ≈ k0 + k1 r^α`.
pub fn pseudocoercivity_audit(
    model: &LagrangianModel,
    x0: &[f64],
    radii: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<PseudocoercivityAudit> {
    let ps = model.product().ok_or(Error::NotProductForm)?;
    let m = ps.slice_dim();
    check_dim(m, x0.len())?;
    if radii.len() < 2 || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Input("need at least two positive radii".into()));
    }
    let slice = LagrangianModel::new(
        "slice",
        ps.l0.clone(),
        crate::fields::const_vector(m, vec![0.0; m]),
        crate::fields::const_vector(m, vec![0.0; m]),
        crate::fields::const_scalar(m, 0.0),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = vec![0.0; m];
    let k0 = norm(&ps.omega.value(x0)?);
    let mut omega_max = Vec::with_capacity(radii.len());
    let (mut beta_min, mut lambda0_min, mut l0_min) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let (mut dv_max, mut d_max) = (0.0_f64, 0.0_f64);
    for r in radii {
        let mut wmax = 0.0_f64;
        for k in 0..n_samples.max(2) {
            let dir: Vec<f64> = if m == 1 {
                vec![if k % 2 == 0 { 1.0 } else { -1.0 }]
            } else {
                let g: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let gn = norm(&g).max(1e-12);
                g.iter().map(|c| c / gn).collect()
            };
            let x: Vec<f64> = x0.iter().zip(&dir).map(|(a, b)| a + r * b).collect();
            wmax = wmax.max(norm(&ps.omega.value(&x)?));
            beta_min = beta_min.min(ps.beta.value(&x)?);
            l0_min = l0_min.min(ps.l0.value(&x, &zero)?);
            dv_max = dv_max.max(norm(&ps.l0.grad_v(&x, &zero)?));
            d_max = d_max.max(ps.d.value(&x)?.abs());
            if k < 2 {
                lambda0_min = lambda0_min.min(convexity_modulus_estimate(&slice, &x, 4)?);
            }
        }
        omega_max.push(wmax);
    }
    let (alpha, k1) = if omega_max.iter().all(|w| *w <= 1e-300) {
        (0.0, 0.0)
    } else {
        let pts: Vec<(f64, f64)> = radii
            .iter()
            .zip(&omega_max)
            .filter(|(_, w)| **w > 1e-300)
            .map(|(r, w)| (r.ln(), w.ln()))
            .collect();
        if pts.len() < 2 {
            (0.0, pts.first().map(|p| p.1.exp()).unwrap_or(0.0))
        } else {
            let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let (slope, intercept) = linear_fit(&lx, &ly);
            (slope, intercept.exp())
        }
    };
    let mut reasons = Vec::new();
    if !(alpha < 1.0 - GROWTH_MARGIN) {
        reasons.push(format!("fitted growth exponent {alpha:.3} is not below {}", 1.0 - GROWTH_MARGIN));
    }
    if !(beta_min > 0.0) {
        reasons.push(format!("beta reaches {beta_min}"));
    }
    if !(lambda0_min > 0.0) {
        reasons.push(format!("L0 convexity estimate reaches {lambda0_min}"));
    }
    if ![l0_min, dv_max, d_max].iter().all(|v| v.is_finite()) {
        reasons.push("unbounded L0(x,0), dL0(x,0) or d on samples".into());
    }
    Ok(PseudocoercivityAudit {
        k0,
        k1,
        alpha,
        radii: radii.to_vec(),
        omega_max,
        beta_min,
        lambda0_min,
        l0_zero_min: l0_min,
        dv_l0_zero_max: dv_max,
        d_max,
        verdict: if reasons.is_empty() { "PASS" } else { "FAIL" }.into(),
        label: "HEURISTIC".into(),
        reasons,
    })
}

/// Outcome of a finite-difference check of the action gradient.
#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    #[serde(serialize_with = "ser_f64")]
    pub max_rel_err: f64,
    /// Intervals excluded because the velocity is near a non-smooth point of `L`.
    pub skipped_intervals: Vec<usize>,
    pub kink: bool,
}

/// Velocities below this norm count as the zero section on cone-singular models.
pub const KINK_RADIUS: f64 = 1e-3;

/// Compares `⟨∇A, ξ⟩` with central differences over `ε ∈ {1e-3, 5e-4, 1e-4, 1e-5, 1e-6}` and one
/// Richardson extrapolation (best of) for
/// `n_directions` seeded random variations.
pub fn gradient_check(
    model: &LagrangianModel,
    path: &DiscretePath,
    n_directions: usize,
    seed: u64,
) -> Result<GradientCheck> {
    let n = path.n();
    let g = action_gradient(model, path)?;
    let a0 = action(model, path)?;
    let mut skipped = Vec::new();
    let mut mask = vec![true; n + 1];
    if model.is_cone_singular() {
        for i in 0..n {
            if norm(&path.interval(i).1) < KINK_RADIUS {
                skipped.push(i);
                mask[i] = false;
                mask[i + 1] = false;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..n_directions {
        let mut xi = PathVariation::zeros(n, path.dim());
        for j in 1..n {
            if mask[j] {
                for c in xi.values[j].iter_mut() {
                    *c = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let exact = g.pair(&xi);
        let denom = exact.abs().max(1e-6 * (1.0 + a0.abs()));
        let central = |eps: f64| -> Result<f64> {
            let ap = action(model, &path.step(eps, &xi)?)?;
            let am = action(model, &path.step(-eps, &xi)?)?;
            Ok((ap - am) / (2.0 * eps))
        };
        let mut best = f64::INFINITY;
        let mut prev: Option<f64> = None;
        for eps in [1e-3, 5e-4, 1e-4, 1e-5, 1e-6] {
            let fd = central(eps)?;
            best = best.min((fd - exact).abs() / denom);
            // Richardson step on the halved pair cancels the ε² term near critical points.
            if let Some(coarse) = prev.take().filter(|_| eps == 5e-4) {
                best = best.min(((4.0 * fd - coarse) / 3.0 - exact).abs() / denom);
            }
            prev = Some(fd);
        }
        worst = worst.max(best);
    }
    Ok(GradientCheck {
        max_rel_err: worst,
        kink: !skipped.is_empty(),
        skipped_intervals: skipped,
    })
}

/// Thresholds applied by [`verify_path`].
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub el_tol: f64,
    /// Energy spread allowed relative to `1 + |mean|`.
    pub energy_tol: f64,
    pub noether_tol: Option<f64>,
    pub gradient_tol: f64,
    pub gradient_directions: usize,
    pub seed: u64,
    /// Shooting steps; `None` skips the shooting check.
    pub shooting_steps: Option<usize>,
    pub shooting_tol: f64,
    pub pseudocoercivity: Option<(Vec<f64>, Vec<f64>, usize)>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            el_tol: 1e-4,
            energy_tol: 1e-5,
            noether_tol: None,
            gradient_tol: 1e-5,
            gradient_directions: 4,
            seed: 0,
            shooting_steps: Some(2000),
            shooting_tol: 1e-3,
            pseudocoercivity: None,
        }
    }
}

/// Collected verification quantities for one path.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    #[serde(serialize_with = "ser_f64")]
    pub el_residual_max: f64,
    pub el_expected_order: String,
    #[serde(serialize_with = "ser_f64")]
    pub energy_mean: f64,
    #[serde(serialize_with = "ser_f64")]
    pub energy_std: f64,
    #[serde(serialize_with = "ser_f64")]
    pub noether_deviation: f64,
    #[serde(serialize_with = "ser_f64")]
    pub gradient_check_relerr: f64,
    pub gradient_check_kink: bool,
    #[serde(serialize_with = "ser_opt_f64")]
    pub shooting_gap: Option<f64>,
    pub pseudocoercivity: Option<PseudocoercivityAudit>,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Runs every check on `path` and compares against `opts`.
pub fn verify_path(model: &LagrangianModel, path: &DiscretePath, opts: &VerifyOptions) -> Result<VerificationReport> {
    let el = el_residual(model, path)?;
    let (energy_mean, energy_std) = energy_conservation(model, path)?;
    let profile = noether_profile(model, path)?;
    let gc = gradient_check(model, path, opts.gradient_directions, opts.seed)?;
    let shooting_gap = match (opts.shooting_steps, model.product()) {
        (Some(steps), Some(_)) => Some(shooting_gap(model, path, steps)?),
        _ => None,
    };
    let pseudocoercivity = match (&opts.pseudocoercivity, model.product()) {
        (Some((x0, radii, samples)), Some(_)) => {
            Some(pseudocoercivity_audit(model, x0, radii, *samples, opts.seed)?)
        }
        _ => None,
    };
    let noether_tol = opts.noether_tol.unwrap_or_else(|| default_tol_n(model));
    let mut failures = Vec::new();
    if !(el <= opts.el_tol) {
        failures.push(format!("el residual {el:e} > {:e}", opts.el_tol));
    }
    if !(energy_std <= opts.energy_tol * (1.0 + energy_mean.abs())) {
        failures.push(format!("energy std {energy_std:e} > {:e}(1+|E|)", opts.energy_tol));
    }
    if !(profile.deviation <= noether_tol) {
        failures.push(format!("noether deviation {:e} > {noether_tol:e}", profile.deviation));
    }
    if !(gc.max_rel_err <= opts.gradient_tol) {
        failures.push(format!("gradient check {:e} > {:e}", gc.max_rel_err, opts.gradient_tol));
    }
    if let Some(gap) = shooting_gap {
        if !(gap <= opts.shooting_tol) {
            failures.push(format!("shooting gap {gap:e} > {:e}", opts.shooting_tol));
        }
    }
    Ok(VerificationReport {
        el_residual_max: el,
        el_expected_order: el_order_tag(path).into(),
        energy_mean,
        energy_std,
        noether_deviation: profile.deviation,
        gradient_check_relerr: gc.max_rel_err,
        gradient_check_kink: gc.kink,
        shooting_gap,
        pseudocoercivity,
        passed: failures.is_empty(),
        failures,
    })
}
