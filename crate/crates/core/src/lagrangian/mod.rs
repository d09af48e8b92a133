//! Lagrangians with an infinitesimal symmetry `K` and an affine Noether charge
//! `N(x, v) = Q_x(v) + d(x)`.

mod audit;
mod identities;

use std::sync::Arc;

use crate::dsl::expr::{parse_expr, ExprAst};
use crate::error::{check_dim, Error, Result};
use crate::fields::{Scalar, Vector};
use crate::numerics::{dot, fd_step_first};

pub use audit::{assumption_audit, AuditOptions, AuditReport, Violation};
pub use identities::{
    build_lc, convexity_modulus_estimate, d_invariance_residual, fiber_hessian, killing_residual,
    lc_noether_residual, lk_sum_residual, negative_eigenvalue_count, noether_charge,
    qk_identity_residual, quadgrowth_margin,
};

/// A Lagrangian `L(x, v)` on a single chart.
pub trait Lagrangian: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64], v: &[f64]) -> Result<f64>;

    /// Vertical derivative `∂_v L`; central differences unless overridden.
    fn grad_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut w = v.to_vec();
        let mut g = vec![0.0; v.len()];
        for j in 0..v.len() {
            let h = fd_step_first(v[j]);
            w[j] = v[j] + h;
            let fp = self.value(x, &w)?;
            w[j] = v[j] - h;
            let fm = self.value(x, &w)?;
            w[j] = v[j];
            g[j] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }

    /// Horizontal derivative `∂_x L`; central differences unless overridden.
    fn grad_x(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        let mut g = vec![0.0; x.len()];
        for j in 0..x.len() {
            let h = fd_step_first(x[j]);
            y[j] = x[j] + h;
            let fp = self.value(&y, v)?;
            y[j] = x[j] - h;
            let fm = self.value(&y, v)?;
            y[j] = x[j];
            g[j] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }
}

/// `L` given as an expression in position and velocity names, differentiated symbolically.
#[derive(Debug, Clone)]
pub struct ExprLagrangian {
    expr: ExprAst,
    dx: Vec<ExprAst>,
    dv: Vec<ExprAst>,
    dim: usize,
}

impl ExprLagrangian {
    pub fn parse(text: &str, x_names: &[String], v_names: &[String]) -> Result<Self> {
        if x_names.len() != v_names.len() {
            return Err(Error::Dimension {
                expected: x_names.len(),
                got: v_names.len(),
            });
        }
        let names: Vec<&str> = x_names.iter().chain(v_names).map(String::as_str).collect();
        let expr = parse_expr(text, &names)?;
        let dim = x_names.len();
        let dx = (0..dim).map(|i| expr.diff_index(i)).collect();
        let dv = (0..dim).map(|i| expr.diff_index(dim + i)).collect();
        Ok(Self { expr, dx, dv, dim })
    }

    fn eval_all(&self, exprs: &[ExprAst], x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let args = self.args(x, v)?;
        exprs
            .iter()
            .map(|e| finite_at(e.eval(&args)?, "Lagrangian derivative", x, v))
            .collect()
    }

    fn args(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, v.len())?;
        Ok(x.iter().chain(v).copied().collect())
    }
}

fn finite_at(value: f64, what: &str, x: &[f64], v: &[f64]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            what: format!("{what} is not finite"),
            point: x.iter().chain(v).copied().collect(),
        })
    }
}

impl Lagrangian for ExprLagrangian {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let args = self.args(x, v)?;
        finite_at(self.expr.eval(&args)?, "Lagrangian", x, v)
    }
    fn grad_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.eval_all(&self.dv, x, v)
    }
    fn grad_x(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.eval_all(&self.dx, x, v)
    }
}

/// Local normal form `L = L0(x, ν) + 2(ω(ν) + d/2)τ − βτ²` with `K = ∂t`.
#[derive(Clone)]
pub struct ProductStructure {
    pub l0: Arc<dyn Lagrangian>,
    pub omega: Vector,
    pub d: Scalar,
    pub beta: Scalar,
    pub t_index: usize,
}

impl std::fmt::Debug for ProductStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProductStructure")
            .field("slice_dim", &self.slice_dim())
            .field("t_index", &self.t_index)
            .finish()
    }
}

impl ProductStructure {
    pub fn slice_dim(&self) -> usize {
        self.l0.dim()
    }

    pub fn dim(&self) -> usize {
        self.slice_dim() + 1
    }

    /// Splits a full-space vector into its slice part and its `t` component.
    pub fn split(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let mut x = z.to_vec();
        let t = x.remove(self.t_index);
        (x, t)
    }

    pub fn join(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut z = x.to_vec();
        z.insert(self.t_index, t);
        z
    }

    pub fn beta_checked(&self, x: &[f64]) -> Result<f64> {
        let b = self.beta.value(x)?;
        if b > 0.0 {
            Ok(b)
        } else {
            Err(Error::Assumption {
                what: format!("beta = {b} is not positive"),
                point: x.to_vec(),
            })
        }
    }

    /// Evaluates `L` from the structure on full-space arguments.
    pub fn eval(&self, z: &[f64], w: &[f64]) -> Result<f64> {
        let (x, _) = self.split(z);
        let (nu, tau) = self.split(w);
        let om = self.omega.value(&x)?;
        Ok(self.l0.value(&x, &nu)? + 2.0 * (dot(&om, &nu) + 0.5 * self.d.value(&x)?) * tau
            - self.beta.value(&x)? * tau * tau)
    }
}

struct ProductLagrangian(ProductStructure);

impl Lagrangian for ProductLagrangian {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, z: &[f64], w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        check_dim(self.dim(), w.len())?;
        let value = self.0.eval(z, w)?;
        finite_at(value, "Lagrangian", z, w)
    }
    fn grad_v(&self, z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        check_dim(self.dim(), w.len())?;
        let s = &self.0;
        let (x, _) = s.split(z);
        let (nu, tau) = s.split(w);
        let om = s.omega.value(&x)?;
        let mut g = s.l0.grad_v(&x, &nu)?;
        for (gi, oi) in g.iter_mut().zip(&om) {
            *gi += 2.0 * tau * oi;
        }
        let gt = 2.0 * dot(&om, &nu) + s.d.value(&x)? - 2.0 * s.beta.value(&x)? * tau;
        Ok(s.join(&g, gt))
    }
    fn grad_x(&self, z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        check_dim(self.dim(), w.len())?;
        let s = &self.0;
        let (x, _) = s.split(z);
        let (nu, tau) = s.split(w);
        let mut g = s.l0.grad_x(&x, &nu)?;
        let jw = s.omega.jacobian(&x)?;
        let dd = s.d.gradient(&x)?;
        let db = s.beta.gradient(&x)?;
        for j in 0..g.len() {
            let mut dom = 0.0;
            for i in 0..nu.len() {
                dom += jw[(i, j)] * nu[i];
            }
            g[j] += 2.0 * tau * dom + tau * dd[j] - tau * tau * db[j];
        }
        Ok(s.join(&g, 0.0))
    }
}

/// `Q = 2(ω − β dt)` for a product structure.
struct ProductChargeForm(ProductStructure);

impl crate::fields::VectorField for ProductChargeForm {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        let (x, _) = self.0.split(z);
        let om: Vec<f64> = self.0.omega.value(&x)?.iter().map(|o| 2.0 * o).collect();
        Ok(self.0.join(&om, -2.0 * self.0.beta.value(&x)?))
    }
    fn jacobian(&self, z: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        check_dim(self.dim(), z.len())?;
        let s = &self.0;
        let (x, _) = s.split(z);
        let jw = s.omega.jacobian(&x)?;
        let db = s.beta.gradient(&x)?;
        let n = s.dim();
        let m = s.slice_dim();
        let full = |i: usize| if i < s.t_index { i } else { i + 1 };
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        for i in 0..m {
            for j in 0..m {
                jac[(full(i), full(j))] = 2.0 * jw[(i, j)];
            }
        }
        for j in 0..m {
            jac[(s.t_index, full(j))] = -2.0 * db[j];
        }
        Ok(jac)
    }
}

struct SliceScalar {
    inner: Scalar,
    t_index: usize,
    dim: usize,
}

impl crate::fields::ScalarField for SliceScalar {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dim, z.len())?;
        let mut x = z.to_vec();
        x.remove(self.t_index);
        self.inner.value(&x)
    }
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, z.len())?;
        let mut x = z.to_vec();
        x.remove(self.t_index);
        let mut g = self.inner.gradient(&x)?;
        g.insert(self.t_index, 0.0);
        Ok(g)
    }
}

/// How the flow of `K` is evaluated.
#[derive(Clone)]
pub enum FlowKind {
    /// Exact translation along one coordinate.
    Translation(usize),
    /// Numerical integration of `K`.
    Numeric,
}

/// A Lagrangian together with its symmetry data.
#[derive(Clone)]
pub struct LagrangianModel {
    name: String,
    lagrangian: Arc<dyn Lagrangian>,
    symmetry: Vector,
    charge_form: Vector,
    charge_offset: Scalar,
    product: Option<ProductStructure>,
    periods: Vec<Option<f64>>,
    cone_singular: bool,
    flow: FlowKind,
    chart_box: Option<Vec<(f64, f64)>>,
}

impl std::fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LagrangianModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("periods", &self.periods)
            .field("product", &self.product.is_some())
            .finish()
    }
}

impl LagrangianModel {
    /// Generic model from its parts. The flow of `K` is integrated numerically.
    pub fn new(
        name: impl Into<String>,
        lagrangian: Arc<dyn Lagrangian>,
        symmetry: Vector,
        charge_form: Vector,
        charge_offset: Scalar,
    ) -> Result<Self> {
        let dim = lagrangian.dim();
        check_dim(dim, symmetry.dim())?;
        check_dim(dim, charge_form.dim())?;
        check_dim(dim, charge_offset.dim())?;
        Ok(Self {
            name: name.into(),
            lagrangian,
            symmetry,
            charge_form,
            charge_offset,
            product: None,
            periods: vec![None; dim],
            cone_singular: false,
            flow: FlowKind::Numeric,
            chart_box: None,
        })
    }

    /// Model in product form; `K = ∂t` and `Q = 2(ω − β dt)`.
    pub fn from_product(name: impl Into<String>, structure: ProductStructure) -> Result<Self> {
        let m = structure.slice_dim();
        check_dim(m, structure.omega.dim())?;
        check_dim(m, structure.d.dim())?;
        check_dim(m, structure.beta.dim())?;
        if structure.t_index > m {
            return Err(Error::Input(format!(
                "t_index {} out of range for dimension {}",
                structure.t_index,
                m + 1
            )));
        }
        let dim = m + 1;
        let t = structure.t_index;
        Ok(Self {
            name: name.into(),
            lagrangian: Arc::new(ProductLagrangian(structure.clone())),
            symmetry: crate::fields::coordinate_vector(dim, t),
            charge_form: Arc::new(ProductChargeForm(structure.clone())),
            charge_offset: Arc::new(SliceScalar {
                inner: structure.d.clone(),
                t_index: t,
                dim,
            }),
            product: Some(structure),
            periods: vec![None; dim],
            cone_singular: false,
            flow: FlowKind::Translation(t),
            chart_box: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.lagrangian.dim()
    }

    pub fn lagrangian(&self) -> &Arc<dyn Lagrangian> {
        &self.lagrangian
    }

    pub fn value(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.lagrangian.value(x, v)
    }

    pub fn grad_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.lagrangian.grad_v(x, v)
    }

    pub fn grad_x(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.lagrangian.grad_x(x, v)
    }

    pub fn symmetry(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.symmetry.value(x)
    }

    pub fn symmetry_field(&self) -> &Vector {
        &self.symmetry
    }

    pub fn charge_form(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.charge_form.value(x)
    }

    pub fn charge_form_field(&self) -> &Vector {
        &self.charge_form
    }

    pub fn charge_offset(&self, x: &[f64]) -> Result<f64> {
        self.charge_offset.value(x)
    }

    pub fn charge_offset_field(&self) -> &Scalar {
        &self.charge_offset
    }

    /// `Q_x(K(x))`, without sign checks.
    pub fn qk(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.charge_form(x)?, &self.symmetry(x)?))
    }

    /// `Q_x(K(x))`, required to be negative.
    pub fn qk_checked(&self, x: &[f64]) -> Result<f64> {
        let qk = self.qk(x)?;
        if qk < 0.0 {
            Ok(qk)
        } else {
            Err(Error::Assumption {
                what: format!("Q(K) = {qk} is not negative"),
                point: x.to_vec(),
            })
        }
    }

    pub fn product(&self) -> Option<&ProductStructure> {
        self.product.as_ref()
    }

    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    pub fn has_periodic(&self) -> bool {
        self.periods.iter().any(Option::is_some)
    }

    pub fn is_cone_singular(&self) -> bool {
        self.cone_singular
    }

    pub fn flow(&self) -> &FlowKind {
        &self.flow
    }

    pub fn chart_box(&self) -> Option<&[(f64, f64)]> {
        self.chart_box.as_deref()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Declares coordinate `index` periodic with the given period.
    pub fn with_period(mut self, index: usize, period: f64) -> Result<Self> {
        if index >= self.dim() {
            return Err(Error::Input(format!("periodic index {index} out of range")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Input(format!("period must be positive, got {period}")));
        }
        if let Some(p) = &self.product {
            if index == p.t_index {
                return Err(Error::Input("the symmetry coordinate cannot be periodic".into()));
            }
        }
        self.periods[index] = Some(period);
        Ok(self)
    }

    pub fn with_cone_singular(mut self, singular: bool) -> Self {
        self.cone_singular = singular;
        self
    }

    /// Bounds outside which the numerical flow of `K` is reported as escaping.
    pub fn with_chart_box(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.chart_box = Some(bounds);
        self
    }

    /// Replaces `K`. The product structure and exact flow are dropped.
    pub fn with_symmetry(mut self, symmetry: Vector) -> Result<Self> {
        check_dim(self.dim(), symmetry.dim())?;
        self.symmetry = symmetry;
        self.product = None;
        self.flow = FlowKind::Numeric;
        Ok(self)
    }

    /// Replaces `Q`. The product structure is dropped.
    pub fn with_charge_form(mut self, charge_form: Vector) -> Result<Self> {
        check_dim(self.dim(), charge_form.dim())?;
        self.charge_form = charge_form;
        self.product = None;
        Ok(self)
    }

    /// Replaces `d`. The product structure is dropped.
    pub fn with_charge_offset(mut self, offset: Scalar) -> Result<Self> {
        check_dim(self.dim(), offset.dim())?;
        self.charge_offset = offset;
        self.product = None;
        Ok(self)
    }

    /// Attaches a product structure describing the same Lagrangian, with `K = ∂t`.
    pub(crate) fn with_product(mut self, structure: ProductStructure) -> Self {
        self.flow = FlowKind::Translation(structure.t_index);
        self.product = Some(structure);
        self
    }

    /// Wraps periodic coordinates of a point into `[0, period)`.
    pub fn wrap(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.periods)
            .map(|(xi, p)| match p {
                Some(p) => xi.rem_euclid(*p),
                None => *xi,
            })
            .collect()
    }
}

/// A point of the chart with its periodic mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub coords: Vec<f64>,
    pub periodic_mask: Vec<bool>,
}

impl ChartPoint {
    /// Builds a point for `model`, wrapping periodic coordinates into `[0, period)`.
    pub fn new(model: &LagrangianModel, coords: &[f64]) -> Result<Self> {
        check_dim(model.dim(), coords.len())?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("point coordinates must be finite".into()));
        }
        Ok(Self {
            coords: model.wrap(coords),
            periodic_mask: model.periods().iter().map(Option::is_some).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A tangent vector at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: ChartPoint, components: Vec<f64>) -> Result<Self> {
        check_dim(base.dim(), components.len())?;
        Ok(Self { base, components })
    }
}
