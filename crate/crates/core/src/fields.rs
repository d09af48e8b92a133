//! Scalar and vector fields on a chart, with optional analytic derivatives.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dsl::expr::{parse_expr, ExprAst};
use crate::error::{check_dim, Error, Result};
use crate::numerics::fd_step_first;

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    /// Gradient; central differences unless overridden.
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        let mut y = x.to_vec();
        for j in 0..x.len() {
            let h = fd_step_first(x[j]);
            y[j] = x[j] + h;
            let fp = self.value(&y)?;
            y[j] = x[j] - h;
            let fm = self.value(&y)?;
            y[j] = x[j];
            g[j] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }
}

/// A map from points to vectors (or covectors; the distinction is by use).
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `J[(i, j)] = ∂_j F_i`; central differences with the Hessian step unless overridden.
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = x.len();
        let h = 1e-4 * crate::numerics::norm(x).max(1.0);
        let mut jac = DMatrix::zeros(self.dim(), n);
        let mut y = x.to_vec();
        for j in 0..n {
            y[j] = x[j] + h;
            let fp = self.value(&y)?;
            y[j] = x[j] - h;
            let fm = self.value(&y)?;
            y[j] = x[j];
            for i in 0..self.dim() {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

pub type Scalar = Arc<dyn ScalarField>;
pub type Vector = Arc<dyn VectorField>;

#[derive(Debug, Clone)]
pub struct ConstScalar {
    pub dim: usize,
    pub value: f64,
}

impl ScalarField for ConstScalar {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.value)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(vec![0.0; self.dim])
    }
}

#[derive(Debug, Clone)]
pub struct ConstVector {
    pub value: Vec<f64>,
    pub base_dim: usize,
}

impl VectorField for ConstVector {
    fn dim(&self) -> usize {
        self.value.len()
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.base_dim, x.len())?;
        Ok(self.value.clone())
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.base_dim, x.len())?;
        Ok(DMatrix::zeros(self.value.len(), self.base_dim))
    }
}

pub fn const_scalar(dim: usize, value: f64) -> Scalar {
    Arc::new(ConstScalar { dim, value })
}

pub fn const_vector(base_dim: usize, value: Vec<f64>) -> Vector {
    Arc::new(ConstVector { value, base_dim })
}

/// Unit vector along coordinate `index`.
pub fn coordinate_vector(dim: usize, index: usize) -> Vector {
    let mut v = vec![0.0; dim];
    v[index] = 1.0;
    const_vector(dim, v)
}

/// Scalar expression of the chart coordinates `x0..x{dim-1}` with its symbolic gradient.
#[derive(Debug, Clone)]
pub struct ExprScalar {
    pub expr: ExprAst,
    pub grad: Vec<ExprAst>,
}

impl ExprScalar {
    pub fn new(expr: ExprAst) -> Self {
        let grad = (0..expr.vars.len()).map(|i| expr.diff_index(i)).collect();
        Self { expr, grad }
    }

    /// Parses an expression in the coordinates `names`.
    pub fn parse(text: &str, names: &[String]) -> Result<Self> {
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Ok(Self::new(parse_expr(text, &refs)?))
    }

    pub fn is_constant(&self) -> bool {
        self.expr.is_constant()
    }
}

fn finite(v: f64, what: &str, x: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain {
            what: format!("{what} is not finite"),
            point: x.to_vec(),
        })
    }
}

impl ScalarField for ExprScalar {
    fn dim(&self) -> usize {
        self.expr.vars.len()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        finite(self.expr.eval(x)?, "expression value", x)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        self.grad
            .iter()
            .map(|g| finite(g.eval(x)?, "expression derivative", x))
            .collect()
    }
}

/// Vector field whose components are coordinate expressions.
#[derive(Debug, Clone)]
pub struct ExprVector {
    pub components: Vec<ExprScalar>,
    pub base_dim: usize,
}

impl ExprVector {
    pub fn parse(texts: &[String], names: &[String]) -> Result<Self> {
        let components = texts
            .iter()
            .map(|t| ExprScalar::parse(t, names))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            components,
            base_dim: names.len(),
        })
    }

    pub fn is_constant(&self) -> bool {
        self.components.iter().all(ExprScalar::is_constant)
    }
}

impl VectorField for ExprVector {
    fn dim(&self) -> usize {
        self.components.len()
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.base_dim, x.len())?;
        self.components.iter().map(|c| c.value(x)).collect()
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.base_dim, x.len())?;
        let mut jac = DMatrix::zeros(self.components.len(), self.base_dim);
        for (i, c) in self.components.iter().enumerate() {
            for (j, g) in c.gradient(x)?.into_iter().enumerate() {
                jac[(i, j)] = g;
            }
        }
        Ok(jac)
    }
}

/// Wraps a vector field so its Jacobian is always taken by finite differences.
pub struct FdVector(pub Vector);

impl VectorField for FdVector {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.value(x)
    }
}

/// Vector field given by a closure.
pub struct FnVector<F> {
    pub dim: usize,
    pub base_dim: usize,
    pub f: F,
}

impl<F> VectorField for FnVector<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.base_dim, x.len())?;
        (self.f)(x)
    }
}

/// Scalar field given by a closure.
pub struct FnScalar<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> ScalarField for FnScalar<F>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        (self.f)(x)
    }
}

pub fn coordinate_names(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("{prefix}{i}")).collect()
}
