use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Lagrangian, LagrangianModel};
use crate::error::{check_dim, Error, Result};
use crate::fields::{FnVector, VectorField};
use crate::numerics::{dot, fd_step_second, norm, sub};

/// `N(x, v) = Q_x(v) + d(x)`.
pub fn noether_charge(model: &LagrangianModel, x: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    check_dim(model.dim(), v.len())?;
    Ok(dot(&model.charge_form(x)?, v) + model.charge_offset(x)?)
}

/// `L_c = L − Q(v)² / Q(K)`.
struct Complementary {
    base: LagrangianModel,
}

impl Complementary {
    fn parts(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
        let q = self.base.charge_form(x)?;
        let qk = self.base.qk_checked(x)?;
        let qv = dot(&q, v);
        Ok((q, qv, qk))
    }
}

impl Lagrangian for Complementary {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let (_, qv, qk) = self.parts(x, v)?;
        Ok(self.base.value(x, v)? - qv * qv / qk)
    }

    fn grad_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let (q, qv, qk) = self.parts(x, v)?;
        let mut g = self.base.grad_v(x, v)?;
        for (gi, qi) in g.iter_mut().zip(&q) {
            *gi -= 2.0 * qv / qk * qi;
        }
        Ok(g)
    }

    fn grad_x(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let (q, qv, qk) = self.parts(x, v)?;
        let k = self.base.symmetry(x)?;
        let jq = self.base.charge_form_field().jacobian(x)?;
        let jk = self.base.symmetry_field().jacobian(x)?;
        let mut g = self.base.grad_x(x, v)?;
        let n = x.len();
        for j in 0..n {
            let mut dqv = 0.0;
            let mut dqk = 0.0;
            for i in 0..n {
                dqv += jq[(i, j)] * v[i];
                dqk += jq[(i, j)] * k[i] + jk[(i, j)] * q[i];
            }
            g[j] -= (2.0 * qv * dqv * qk - qv * qv * dqk) / (qk * qk);
        }
        Ok(g)
    }
}

/// Builds the complementary Lagrangian `L_c = L − Q²/Q(K)`.
///
/// The result has symmetry `K`, charge form `−Q` and the same offset `d`, so
/// that its Noether charge is `−Q(v) + d`.
pub fn build_lc(model: &LagrangianModel) -> LagrangianModel {
    let base = model.clone();
    let q = model.charge_form_field().clone();
    let neg_q: Arc<dyn VectorField> = Arc::new(NegatedForm(q));
    let mut lc = LagrangianModel::new(
        format!("{}_c", model.name()),
        Arc::new(Complementary { base }),
        model.symmetry_field().clone(),
        neg_q,
        model.charge_offset_field().clone(),
    )
    .expect("dimensions inherited from a valid model");
    lc.periods = model.periods.clone();
    lc.cone_singular = model.cone_singular;
    lc.flow = model.flow.clone();
    lc.chart_box = model.chart_box.clone();
    lc
}

struct NegatedForm(Arc<dyn VectorField>);

impl VectorField for NegatedForm {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.value(x)?.into_iter().map(|q| -q).collect())
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(-self.0.jacobian(x)?)
    }
}

/// `|Q_x(K) − 2(L(x,K) − L(x,0) − d(x))|`.
pub fn qk_identity_residual(model: &LagrangianModel, x: &[f64]) -> Result<f64> {
    let k = model.symmetry(x)?;
    let zero = vec![0.0; model.dim()];
    let lhs = model.qk(x)?;
    let rhs = 2.0 * (model.value(x, &k)? - model.value(x, &zero)? - model.charge_offset(x)?);
    Ok((lhs - rhs).abs())
}

/// `|∂_v L_c(x,v)[K] + Q(v) − d(x)|`.
pub fn lc_noether_residual(model: &LagrangianModel, x: &[f64], v: &[f64]) -> Result<f64> {
    let lc = build_lc(model);
    let k = model.symmetry(x)?;
    let lhs = dot(&lc.grad_v(x, v)?, &k);
    Ok((lhs + dot(&model.charge_form(x)?, v) - model.charge_offset(x)?).abs())
}

/// `|L(x,K) + L_c(x,K) − 2(L(x,0) + d(x))|`.
pub fn lk_sum_residual(model: &LagrangianModel, x: &[f64]) -> Result<f64> {
    let lc = build_lc(model);
    let k = model.symmetry(x)?;
    let zero = vec![0.0; model.dim()];
    let lhs = model.value(x, &k)? + lc.value(x, &k)?;
    let rhs = 2.0 * (model.value(x, &zero)? + model.charge_offset(x)?);
    Ok((lhs - rhs).abs())
}

/// `|K^h ∂L/∂x^h + (∂K^h/∂x^i) v^i ∂L/∂v^h|` with a finite-difference Jacobian of `K`.
pub fn killing_residual(model: &LagrangianModel, x: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(model.dim(), v.len())?;
    let k = model.symmetry(x)?;
    let field = model.symmetry_field().clone();
    let fd = FnVector {
        dim: model.dim(),
        base_dim: model.dim(),
        f: move |y: &[f64]| field.value(y),
    };
    let jk = fd.jacobian(x)?;
    let gx = model.grad_x(x, v)?;
    let gv = model.grad_v(x, v)?;
    let n = model.dim();
    let mut total = dot(&k, &gx);
    for h in 0..n {
        let mut dk = 0.0;
        for i in 0..n {
            dk += jk[(h, i)] * v[i];
        }
        total += dk * gv[h];
    }
    Ok(total.abs())
}

/// `|dd(K)|`: invariance of the charge offset along the symmetry.
pub fn d_invariance_residual(model: &LagrangianModel, x: &[f64]) -> Result<f64> {
    let k = model.symmetry(x)?;
    Ok(dot(&model.charge_offset_field().gradient(x)?, &k).abs())
}

/// Central-difference Hessian of `L` in `v`, symmetrized.
pub fn fiber_hessian(model: &LagrangianModel, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(model.dim(), v.len())?;
    if model.is_cone_singular() && norm(v) == 0.0 {
        return Err(Error::Domain {
            what: "fiber Hessian at the zero section of a cone-singular model".into(),
            point: x.iter().chain(v).copied().collect(),
        });
    }
    let n = model.dim();
    let h = fd_step_second(v);
    let mut hess = DMatrix::zeros(n, n);
    let mut w = v.to_vec();
    for j in 0..n {
        w[j] = v[j] + h;
        let gp = model.grad_v(x, &w)?;
        w[j] = v[j] - h;
        let gm = model.grad_v(x, &w)?;
        w[j] = v[j];
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

/// Number of eigenvalues below `-tol` of a symmetric matrix.
pub fn negative_eigenvalue_count(m: &DMatrix<f64>, tol: f64) -> usize {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .filter(|e| **e < -tol)
        .count()
}

fn monotonicity_ratio(model: &LagrangianModel, x: &[f64], v1: &[f64], v2: &[f64]) -> Result<f64> {
    let dv = sub(v2, v1);
    let n2 = dot(&dv, &dv);
    let dg = sub(&model.grad_v(x, v2)?, &model.grad_v(x, v1)?);
    Ok(dot(&dg, &dv) / n2)
}

/// Estimates the convexity modulus `λ(x)` of `model` in `v`.
///
/// Takes the minimum of the monotonicity ratio over random velocity pairs,
/// plus pairs aligned with the softest Hessian direction at each sample.
pub fn convexity_modulus_estimate(model: &LagrangianModel, x: &[f64], n_samples: usize) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c61_6d62_6461);
    let mut best = f64::INFINITY;
    for _ in 0..n_samples.max(1) {
        let v1: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut v2: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if v1 == v2 {
            v2[0] += 1.0;
        }
        best = best.min(monotonicity_ratio(model, x, &v1, &v2)?);
        if let Ok(h) = fiber_hessian(model, x, &v1) {
            let eig = SymmetricEigen::new(h);
            let imin = eig.eigenvalues.imin();
            let e: Vec<f64> = eig.eigenvectors.column(imin).iter().map(|c| 0.5 * c).collect();
            let v3: Vec<f64> = v1.iter().zip(&e).map(|(a, b)| a + b).collect();
            best = best.min(monotonicity_ratio(model, x, &v1, &v3)?);
        }
    }
    Ok(best)
}

/// `L_c(x,v) − [L(x,0) − ‖∂_vL(x,0)‖²/λ + λ‖v‖²/4]`; non-negative when the growth bound holds.
pub fn quadgrowth_margin(model: &LagrangianModel, lambda: f64, x: &[f64], v: &[f64]) -> Result<f64> {
    let lc = build_lc(model);
    let zero = vec![0.0; model.dim()];
    let g0 = model.grad_v(x, &zero)?;
    let bound = model.value(x, &zero)? - dot(&g0, &g0) / lambda + lambda * dot(v, v) / 4.0;
    Ok(lc.value(x, v)? - bound)
}
