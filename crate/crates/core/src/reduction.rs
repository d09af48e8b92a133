//! The constant-charge path set: Noether profiles, the projector onto it, its deformation
//! retract, tangent splitting along `K`, and elimination of `t` for product models.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::fmt::{ser_f64, ser_vec_f64};
use crate::lagrangian::{FlowKind, LagrangianModel};
use crate::numerics::{axpy, dot};
use crate::path::{DiscretePath, PathVariation};

/// Default membership tolerance for product models.
pub const TOL_N_PRODUCT: f64 = 1e-8;
/// Default membership tolerance for models with a numerically integrated flow.
pub const TOL_N_GENERAL: f64 = 1e-6;

pub fn default_tol_n(model: &LagrangianModel) -> f64 {
    match model.flow() {
        FlowKind::Translation(_) => TOL_N_PRODUCT,
        FlowKind::Numeric => TOL_N_GENERAL,
    }
}

/// Per-interval charges of a path and their weighted mean.
///
/// `constant` is the charge level `C`; `c_z = C/2` is the level in the product-model convention
/// `N = 2 C_z`.
#[derive(Debug, Clone, Serialize)]
pub struct NoetherProfile {
    #[serde(serialize_with = "ser_vec_f64")]
    pub charges: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub qk: Vec<f64>,
    #[serde(serialize_with = "ser_f64")]
    pub constant: f64,
    #[serde(serialize_with = "ser_f64")]
    pub c_z: f64,
    #[serde(serialize_with = "ser_f64")]
    pub deviation: f64,
}

impl NoetherProfile {
    pub fn is_member(&self, tol: f64) -> bool {
        self.deviation <= tol
    }
}

/// `N_i = Q(m_i)(v_i) + d(m_i)` with `C = Σ(N_i/Q(K)_i) / Σ(1/Q(K)_i)`.
pub fn noether_profile(model: &LagrangianModel, path: &DiscretePath) -> Result<NoetherProfile> {
    check_dim(model.dim(), path.dim())?;
    let n = path.n();
    let mut charges = Vec::with_capacity(n);
    let mut qk = Vec::with_capacity(n);
    for i in 0..n {
        let (m, v) = path.interval(i);
        let at = Error::at_interval(i);
        let q = model.charge_form(&m).map_err(&at)?;
        charges.push(dot(&q, &v) + model.charge_offset(&m).map_err(&at)?);
        qk.push(model.qk_checked(&m).map_err(&at)?);
    }
    let num: f64 = charges.iter().zip(&qk).map(|(c, k)| c / k).sum();
    let den: f64 = qk.iter().map(|k| 1.0 / k).sum();
    let constant = num / den;
    let deviation = charges.iter().fold(0.0_f64, |m, c| m.max((c - constant).abs()));
    Ok(NoetherProfile {
        charges,
        qk,
        constant,
        c_z: 0.5 * constant,
        deviation,
    })
}

/// Evaluates the flow `ψ(t, x)` of `K`.
#[derive(Clone)]
pub struct FlowEvaluator<'a> {
    model: &'a LagrangianModel,
    /// Largest RK4 step for numerically integrated flows.
    pub h_max: f64,
}

impl<'a> FlowEvaluator<'a> {
    pub fn new(model: &'a LagrangianModel) -> Self {
        Self { model, h_max: 0.01 }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.model.flow(), FlowKind::Translation(_))
    }

    pub fn apply(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.model.dim(), x.len())?;
        if t == 0.0 {
            return Ok(x.to_vec());
        }
        match self.model.flow() {
            FlowKind::Translation(k) => {
                let mut y = x.to_vec();
                y[*k] += t;
                Ok(y)
            }
            FlowKind::Numeric => self.integrate(t, x),
        }
    }

    fn integrate(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !t.is_finite() {
            return Err(Error::Numeric(format!("non-finite flow time {t}")));
        }
        let steps = (t.abs() / self.h_max).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let k = self.model.symmetry_field();
        let mut y = x.to_vec();
        for _ in 0..steps {
            let k1 = k.value(&y)?;
            let mut tmp = y.clone();
            axpy(0.5 * h, &k1, &mut tmp);
            let k2 = k.value(&tmp)?;
            let mut tmp = y.clone();
            axpy(0.5 * h, &k2, &mut tmp);
            let k3 = k.value(&tmp)?;
            let mut tmp = y.clone();
            axpy(h, &k3, &mut tmp);
            let k4 = k.value(&tmp)?;
            for j in 0..y.len() {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if let Some(bounds) = self.model.chart_box() {
                if y.iter().zip(bounds).any(|(c, (lo, hi))| !(*c >= *lo && *c <= *hi)) {
                    return Err(Error::Numeric(format!(
                        "flow of K from {x:?} left the chart box at {y:?}"
                    )));
                }
            }
            if y.iter().any(|c| !c.is_finite()) {
                return Err(Error::Numeric(format!("flow of K from {x:?} diverged")));
            }
        }
        Ok(y)
    }
}

/// Result of projecting a path onto the constant-charge set.
#[derive(Debug, Clone)]
pub struct Projection {
    pub path: DiscretePath,
    /// Accumulated flow times per node; zero at both ends.
    pub phi: Vec<f64>,
    pub profile: NoetherProfile,
    pub iterations: usize,
}

const MAX_PROJECTION_ITERS: usize = 50;

fn phi_increment(profile: &NoetherProfile) -> Vec<f64> {
    let n = profile.charges.len();
    let mut phi = vec![0.0; n + 1];
    for i in 0..n {
        phi[i + 1] = phi[i] + (profile.constant - profile.charges[i]) / (profile.qk[i] * n as f64);
    }
    phi[n] = 0.0;
    phi
}

fn flow_nodes(flow: &FlowEvaluator, path: &DiscretePath, phi: &[f64]) -> Result<DiscretePath> {
    let nodes = path
        .nodes()
        .iter()
        .zip(phi)
        .enumerate()
        .map(|(i, (z, t))| flow.apply(*t, z).map_err(Error::at_interval(i)))
        .collect::<Result<Vec<_>>>()?;
    DiscretePath::new(nodes)
}

/// `Ψ(z)` with the accumulated `φ`, iterating the discrete charge-levelling step until the
/// deviation is at most `tol` (one step suffices for translation flows).
pub fn project_with_phi(model: &LagrangianModel, path: &DiscretePath, tol: f64) -> Result<Projection> {
    let flow = FlowEvaluator::new(model);
    let mut current = path.clone();
    let mut profile = noether_profile(model, &current)?;
    let mut phi_total = vec![0.0; path.n() + 1];
    let mut iterations = 0;
    while profile.deviation > 0.0 && (iterations == 0 || profile.deviation > tol) {
        if iterations == MAX_PROJECTION_ITERS {
            return Err(Error::Numeric(format!(
                "projection did not reach deviation {tol} (last {})",
                profile.deviation
            )));
        }
        let phi = phi_increment(&profile);
        current = flow_nodes(&flow, &current, &phi)?;
        for (a, b) in phi_total.iter_mut().zip(&phi) {
            *a += b;
        }
        profile = noether_profile(model, &current)?;
        iterations += 1;
        if flow.is_exact() {
            break;
        }
    }
    Ok(Projection {
        path: current,
        phi: phi_total,
        profile,
        iterations,
    })
}

/// `Ψ(z) = ψ(φ(·), z(·))` with the default membership tolerance.
pub fn project_to_n(model: &LagrangianModel, path: &DiscretePath) -> Result<DiscretePath> {
    Ok(project_with_phi(model, path, default_tol_n(model))?.path)
}

/// `H(z, t) = ψ(t φ(·), z(·))`, so `H(·,0)` is the identity and `H(·,1) = Ψ`.
pub fn retract_homotopy(model: &LagrangianModel, path: &DiscretePath, t: f64) -> Result<DiscretePath> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Input(format!("homotopy parameter {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(path.clone());
    }
    let proj = project_with_phi(model, path, default_tol_n(model))?;
    if t == 1.0 {
        return Ok(proj.path);
    }
    let phi: Vec<f64> = proj.phi.iter().map(|p| t * p).collect();
    flow_nodes(&FlowEvaluator::new(model), path, &phi)
}

/// `ξ = ξ_N + μ K` with `μ` vanishing at the ends and `ξ_N` tangent to the constant-charge set.
#[derive(Debug, Clone)]
pub struct TangentSplit {
    pub xi_n: PathVariation,
    pub mu: Vec<f64>,
    /// Common value of the linearized charge along `ξ_N`.
    pub c: f64,
}

/// Coefficients of the linearized charge: `dF_i[μK] = a_i μ_i + b_i μ_{i+1}`.
pub(crate) struct ChargeLinearization {
    pub(crate) a: Vec<f64>,
    pub(crate) b: Vec<f64>,
    /// `∂_xN(m_i, v_i)` as a covector.
    pub(crate) dn_dx: Vec<Vec<f64>>,
    /// `Q(m_i)`.
    pub(crate) q: Vec<Vec<f64>>,
    /// `K(z_i)` at nodes.
    pub(crate) k: Vec<Vec<f64>>,
}

impl ChargeLinearization {
    pub(crate) fn new(model: &LagrangianModel, path: &DiscretePath) -> Result<Self> {
        let n = path.n();
        let nf = n as f64;
        let k = path
            .nodes()
            .iter()
            .map(|z| model.symmetry(z))
            .collect::<Result<Vec<_>>>()?;
        let (mut a, mut b, mut dn_dx, mut q) = (vec![], vec![], vec![], vec![]);
        for i in 0..n {
            let (m, v) = path.interval(i);
            let jq = model.charge_form_field().jacobian(&m)?;
            let mut dn = model.charge_offset_field().gradient(&m)?;
            for (j, dj) in dn.iter_mut().enumerate() {
                for (r, vr) in v.iter().enumerate() {
                    *dj += vr * jq[(r, j)];
                }
            }
            let qi = model.charge_form(&m)?;
            a.push(0.5 * dot(&dn, &k[i]) - nf * dot(&qi, &k[i]));
            b.push(0.5 * dot(&dn, &k[i + 1]) + nf * dot(&qi, &k[i + 1]));
            dn_dx.push(dn);
            q.push(qi);
        }
        Ok(Self { a, b, dn_dx, q, k })
    }

    /// `dF_i[ξ] = ∂_xN_i[(ξ_i + ξ_{i+1})/2] + Q_i(n(ξ_{i+1} − ξ_i))`.
    pub(crate) fn apply(&self, xi: &PathVariation) -> Vec<f64> {
        let n = self.a.len();
        let nf = n as f64;
        (0..n)
            .map(|i| {
                let (u, w) = (&xi.values[i], &xi.values[i + 1]);
                let mut s = 0.0;
                for j in 0..u.len() {
                    s += self.dn_dx[i][j] * 0.5 * (u[j] + w[j]) + self.q[i][j] * nf * (w[j] - u[j]);
                }
                s
            })
            .collect()
    }

    /// `μ_i = α_i + γ_i c` from `a_i μ_i + b_i μ_{i+1} + c = r_i`, `μ_0 = 0`.
    pub(crate) fn sweep(&self, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.a.len();
        let mut alpha = vec![0.0; n + 1];
        let mut gamma = vec![0.0; n + 1];
        for i in 0..n {
            alpha[i + 1] = (r[i] - self.a[i] * alpha[i]) / self.b[i];
            gamma[i + 1] = (-1.0 - self.a[i] * gamma[i]) / self.b[i];
        }
        (alpha, gamma)
    }

    /// Solves for `(μ, c)` with `μ_n = 0`.
    pub(crate) fn solve(&self, r: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (alpha, gamma) = self.sweep(r);
        let n = self.a.len();
        if gamma[n] == 0.0 || !gamma[n].is_finite() {
            return Err(Error::Numeric("degenerate charge linearization".into()));
        }
        let c = -alpha[n] / gamma[n];
        let mut mu: Vec<f64> = alpha.iter().zip(&gamma).map(|(a, g)| a + g * c).collect();
        mu[0] = 0.0;
        mu[n] = 0.0;
        Ok((mu, c))
    }
}

/// Splits `ξ` at a member path into its tangent part and its `K` component.
pub fn tangent_decompose(
    model: &LagrangianModel,
    path: &DiscretePath,
    xi: &PathVariation,
    tol_n: f64,
) -> Result<TangentSplit> {
    path.check_variation(xi)?;
    let profile = noether_profile(model, path)?;
    if !profile.is_member(tol_n) {
        return Err(Error::Input(format!(
            "path is not in the constant-charge set (deviation {} > {tol_n})",
            profile.deviation
        )));
    }
    let lin = ChargeLinearization::new(model, path)?;
    let r = lin.apply(xi);
    let (mu, c) = lin.solve(&r)?;
    let mut xi_n = xi.clone();
    for (i, row) in xi_n.values.iter_mut().enumerate() {
        axpy(-mu[i], &lin.k[i], row);
    }
    Ok(TangentSplit { xi_n, mu, c })
}

/// Slice coordinates of every node of a product-model path.
pub fn slice_nodes(model: &LagrangianModel, path: &DiscretePath) -> Result<Vec<Vec<f64>>> {
    let ps = model.product().ok_or(Error::NotProductForm)?;
    check_dim(model.dim(), path.dim())?;
    Ok(path.nodes().iter().map(|z| ps.split(z).0).collect())
}

/// Rebuilds the `t` component of a product-model path from its slice nodes so that the charge
/// is constant, `t(0) = t0` and `t(1) = t0 + Δt`. Returns the path and `C_z`.
pub fn t_reconstruct(
    model: &LagrangianModel,
    x_nodes: &[Vec<f64>],
    t0: f64,
    delta_t: f64,
) -> Result<(DiscretePath, f64)> {
    let ps = model.product().ok_or(Error::NotProductForm)?;
    let n = x_nodes.len().saturating_sub(1);
    if n < 2 {
        return Err(Error::Input("slice path needs at least 2 intervals".into()));
    }
    let nf = n as f64;
    let mut num = Vec::with_capacity(n);
    let mut inv_beta = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (&x_nodes[i], &x_nodes[i + 1]);
        check_dim(ps.slice_dim(), a.len())?;
        let m: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
        let v: Vec<f64> = a.iter().zip(b).map(|(p, q)| nf * (q - p)).collect();
        let at = Error::at_interval(i);
        let beta = ps.beta_checked(&m).map_err(&at)?;
        let w = dot(&ps.omega.value(&m).map_err(&at)?, &v);
        let d = ps.d.value(&m).map_err(&at)?;
        num.push(w + 0.5 * d);
        inv_beta.push(1.0 / beta);
    }
    let b_sum: f64 = inv_beta.iter().sum();
    let a_sum: f64 = num.iter().zip(&inv_beta).map(|(w, ib)| w * ib).sum();
    let c_z = (a_sum - nf * delta_t) / b_sum;
    let mut t = vec![t0; n + 1];
    for i in 0..n {
        t[i + 1] = t[i] + (num[i] - c_z) * inv_beta[i] / nf;
    }
    t[n] = t0 + delta_t;
    let nodes = x_nodes.iter().zip(&t).map(|(x, ti)| ps.join(x, *ti)).collect();
    Ok((DiscretePath::new(nodes)?, c_z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{beta_quadratic, cyl, flat11, rotating_frame};
    use crate::path::{action_gradient, init_path};
    use std::f64::consts::PI;

    fn parabola(n: usize) -> DiscretePath {
        DiscretePath::new(
            (0..=n)
                .map(|i| {
                    let s = i as f64 / n as f64;
                    vec![s, s * s]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn profile_examples() {
        let flat = flat11();
        let line = init_path(&flat, &[0.0, 0.0], &[1.0, 0.5], 8, &[]).unwrap();
        let p = noether_profile(&flat, &line).unwrap();
        assert!(p.charges.iter().all(|c| *c == -1.0));
        assert_eq!(p.deviation, 0.0);
        let p = noether_profile(&flat, &parabola(64)).unwrap();
        for (i, c) in p.charges.iter().enumerate() {
            let m = (i as f64 + 0.5) / 64.0;
            assert!((c + 4.0 * m).abs() < 1e-12);
        }
        assert!((p.constant + 2.0).abs() < 1e-12);
    }

    #[test]
    fn parabola_projects_to_line() {
        let flat = flat11();
        for n in [2, 3, 7, 64] {
            let proj = project_with_phi(&flat, &parabola(n), TOL_N_PRODUCT).unwrap();
            for i in 0..=n {
                let s = i as f64 / n as f64;
                assert!((proj.phi[i] - (s - s * s)).abs() < 1e-12);
                assert!((proj.path.node(i)[0] - s).abs() < 1e-12);
                assert!((proj.path.node(i)[1] - s).abs() < 1e-12);
            }
            assert!((proj.profile.constant + 2.0).abs() < 1e-12);
            assert!(proj.profile.deviation <= 1e-12);
        }
    }

    #[test]
    fn member_is_fixed() {
        let flat = flat11();
        let line = init_path(&flat, &[0.0, 0.0], &[1.0, 0.5], 8, &[]).unwrap();
        assert_eq!(project_to_n(&flat, &line).unwrap(), line);
    }

    #[test]
    fn homotopy_examples() {
        let flat = flat11();
        let z = parabola(16);
        assert_eq!(retract_homotopy(&flat, &z, 0.0).unwrap(), z);
        let one = retract_homotopy(&flat, &z, 1.0).unwrap();
        assert_eq!(one, project_to_n(&flat, &z).unwrap());
        let half = retract_homotopy(&flat, &z, 0.5).unwrap();
        for i in 0..=16 {
            let s = i as f64 / 16.0;
            assert!((half.node(i)[1] - (s * s + 0.5 * (s - s * s))).abs() < 1e-12);
        }
        assert!(retract_homotopy(&flat, &z, 1.5).is_err());
    }

    #[test]
    fn rotating_projection_converges() {
        let model = rotating_frame();
        let n = 32;
        let z = DiscretePath::new(
            (0..=n)
                .map(|i| {
                    let s = i as f64 / n as f64;
                    vec![s, 0.3 * (PI * s).sin(), 0.5 * s + 0.2 * s * s]
                })
                .collect(),
        )
        .unwrap();
        let proj = project_with_phi(&model, &z, TOL_N_GENERAL).unwrap();
        assert!(proj.profile.deviation <= TOL_N_GENERAL);
        assert_eq!(proj.path.start(), z.start());
        assert_eq!(proj.path.end(), z.end());
        let again = project_with_phi(&model, &proj.path, TOL_N_GENERAL).unwrap();
        let diff = again
            .path
            .nodes()
            .iter()
            .zip(proj.path.nodes())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn numeric_flow_group_property() {
        let model = rotating_frame();
        let f = FlowEvaluator::new(&model);
        let x = [0.4, -0.2, 0.1];
        let a = f.apply(0.7, &f.apply(0.5, &x).unwrap()).unwrap();
        let b = f.apply(1.2, &x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-9);
        }
        let r2 = |y: &[f64]| y[0] * y[0] + y[1] * y[1];
        assert!((r2(&b) - r2(&x)).abs() < 1e-9);
        assert!((b[2] - x[2] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn flow_escape_is_reported() {
        let model = rotating_frame().with_chart_box(vec![(-1.0, 1.0), (-1.0, 1.0), (-0.5, 0.5)]);
        let f = FlowEvaluator::new(&model);
        assert!(matches!(f.apply(2.0, &[0.0, 0.0, 0.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn flat_tangent_split() {
        let flat = flat11();
        let n = 8;
        let line = init_path(&flat, &[0.0, 0.0], &[1.0, 0.5], n, &[]).unwrap();
        let mut xi = PathVariation::zeros(n, 2);
        for j in 1..n {
            xi.values[j] = vec![(j as f64).sin(), (j as f64 * 0.7).cos()];
        }
        let split = tangent_decompose(&flat, &line, &xi, TOL_N_PRODUCT).unwrap();
        for j in 0..=n {
            assert!((split.mu[j] - xi.values[j][1]).abs() < 1e-12);
            assert!((split.xi_n.values[j][0] - xi.values[j][0]).abs() < 1e-15);
            assert!(split.xi_n.values[j][1].abs() < 1e-12);
        }
        assert!(split.c.abs() < 1e-12);
        let again = tangent_decompose(&flat, &line, &split.xi_n, TOL_N_PRODUCT).unwrap();
        assert!(again.mu.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn pure_k_variation_has_no_tangent_part() {
        let model = beta_quadratic();
        let n = 16;
        let x: Vec<Vec<f64>> = (0..=n).map(|i| vec![(i as f64 / n as f64).powi(2)]).collect();
        let (path, _) = t_reconstruct(&model, &x, 0.0, 1.0).unwrap();
        let mut xi = PathVariation::zeros(n, 2);
        for j in 1..n {
            xi.values[j] = vec![0.0, (PI * j as f64 / n as f64).sin()];
        }
        let split = tangent_decompose(&model, &path, &xi, TOL_N_PRODUCT).unwrap();
        assert!(split.xi_n.max_abs() < 1e-12);
        let g = action_gradient(&model, &path).unwrap();
        assert!(g.pair(&xi).abs() < 1e-12);
    }

    #[test]
    fn non_member_rejected() {
        let flat = flat11();
        let xi = PathVariation::zeros(8, 2);
        assert!(tangent_decompose(&flat, &parabola(8), &xi, TOL_N_PRODUCT).is_err());
    }

    #[test]
    fn t_reconstruct_examples() {
        let flat = flat11();
        let n = 8;
        let x: Vec<Vec<f64>> = (0..=n).map(|i| vec![i as f64 / n as f64]).collect();
        let (path, cz) = t_reconstruct(&flat, &x, 0.0, 0.5).unwrap();
        assert!((cz + 0.5).abs() < 1e-15);
        for i in 0..=n {
            assert!((path.node(i)[1] - 0.5 * i as f64 / n as f64).abs() < 1e-15);
        }

        let c = cyl();
        let lift = PI / 2.0 - 2.0 * PI;
        let x: Vec<Vec<f64>> = (0..=n).map(|i| vec![lift * i as f64 / n as f64]).collect();
        let (path, cz) = t_reconstruct(&c, &x, 0.0, 0.0).unwrap();
        assert_eq!(cz, 0.0);
        assert!(path.nodes().iter().all(|z| z[1] == 0.0));

        let model = beta_quadratic();
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let x: Vec<Vec<f64>> = (0..=n).map(|i| vec![i as f64 / n as f64]).collect();
            let (path, cz) = t_reconstruct(&model, &x, 0.0, 1.0).unwrap();
            assert_eq!(path.end()[1], 1.0);
            errs.push((cz + 4.0 / PI).abs());
            let prof = noether_profile(&model, &path).unwrap();
            assert!(prof.deviation < 1e-12);
            assert!((prof.constant - 2.0 * cz).abs() < 1e-12);
        }
        assert!(errs[0] / errs[1] > 3.9 && errs[1] / errs[2] > 3.9, "{errs:?}");
        assert!(matches!(
            t_reconstruct(&rotating_frame(), &vec![vec![0.0, 0.0]; 3], 0.0, 1.0),
            Err(Error::NotProductForm)
        ));
    }
}
