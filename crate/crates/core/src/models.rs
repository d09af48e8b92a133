//! Factories for the supported Lagrangian families and the shipped regression models.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::fields::{
    coordinate_names, ExprScalar, ExprVector, FnScalar, FnVector, ScalarField, Vector, VectorField,
};
use crate::lagrangian::{
    convexity_modulus_estimate, ExprLagrangian, Lagrangian, LagrangianModel, ProductStructure,
};
use crate::numerics::{dot, norm};

/// Slice Lagrangian `L0` of a product model.
#[derive(Clone)]
pub enum L0Spec {
    /// Expression in the slice names `x<j>`, `v<j>` (`j` ranging over non-symmetry indices).
    Expression(String),
    /// Quadratic form `Σ a_ij v_i v_j` with coefficient expressions in the slice coordinates.
    Quadratic(Vec<Vec<String>>),
    /// Any prebuilt slice Lagrangian, e.g. from [`make_finsler_electromagnetic`].
    Custom(Arc<dyn Lagrangian>),
}

/// Product model `L = L0 + 2(ω(ν) + d/2)τ − βτ²` on `slice_dim + 1` coordinates.
#[derive(Clone)]
pub struct ProductModelSpec {
    pub name: String,
    pub slice_dim: usize,
    pub t_index: usize,
    pub l0: L0Spec,
    /// One expression per slice coordinate.
    pub omega: Vec<String>,
    pub d: String,
    pub beta: String,
    /// Periods by full-space coordinate index.
    pub periods: Vec<Option<f64>>,
    /// Box (over slice coordinates) on which the spec is validated.
    pub sample_box: Option<Vec<(f64, f64)>>,
}

impl ProductModelSpec {
    /// Spec with `ω = 0`, `d = 0`, `β = 1` and `t` as the last coordinate.
    pub fn new(name: &str, slice_dim: usize, l0: L0Spec) -> Self {
        Self {
            name: name.into(),
            slice_dim,
            t_index: slice_dim,
            l0,
            omega: vec!["0".into(); slice_dim],
            d: "0".into(),
            beta: "1".into(),
            periods: vec![None; slice_dim + 1],
            sample_box: None,
        }
    }

    /// Names of the slice coordinates and velocities.
    pub fn slice_names(&self) -> (Vec<String>, Vec<String>) {
        slice_names(self.slice_dim, self.t_index)
    }
}

fn slice_names(slice_dim: usize, t_index: usize) -> (Vec<String>, Vec<String>) {
    let idx: Vec<usize> = (0..=slice_dim).filter(|j| *j != t_index).collect();
    (
        idx.iter().map(|j| format!("x{j}")).collect(),
        idx.iter().map(|j| format!("v{j}")).collect(),
    )
}

fn sample_points(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect::<Vec<f64>>()];
    for _ in 0..count {
        pts.push(
            bounds
                .iter()
                .map(|(a, b)| if a < b { rng.gen_range(*a..*b) } else { *a })
                .collect(),
        );
    }
    pts
}

fn quadratic_l0(coeffs: &[Vec<String>], v_names: &[String]) -> Result<String> {
    let m = v_names.len();
    if coeffs.len() != m || coeffs.iter().any(|r| r.len() != m) {
        return Err(Error::Input(format!("quadratic L0 needs a {m}x{m} coefficient matrix")));
    }
    let mut terms = Vec::new();
    for i in 0..m {
        for j in 0..m {
            terms.push(format!("({})*{}*{}", coeffs[i][j], v_names[i], v_names[j]));
        }
    }
    Ok(terms.join(" + "))
}

/// Builds a product model; rejects `β ≤ 0` or a non-convex `L0` on the sample box.
pub fn make_product_model(spec: &ProductModelSpec) -> Result<LagrangianModel> {
    let m = spec.slice_dim;
    if m == 0 {
        return Err(Error::Input("slice dimension must be at least 1".into()));
    }
    if spec.t_index > m {
        return Err(Error::Input(format!("t_index {} out of range", spec.t_index)));
    }
    check_dim(m, spec.omega.len())?;
    check_dim(m + 1, spec.periods.len())?;
    let (xn, vn) = spec.slice_names();
    let l0: Arc<dyn Lagrangian> = match &spec.l0 {
        L0Spec::Expression(text) => Arc::new(ExprLagrangian::parse(text, &xn, &vn)?),
        L0Spec::Quadratic(coeffs) => {
            Arc::new(ExprLagrangian::parse(&quadratic_l0(coeffs, &vn)?, &xn, &vn)?)
        }
        L0Spec::Custom(l) => {
            check_dim(m, l.dim())?;
            l.clone()
        }
    };
    let omega = Arc::new(ExprVector::parse(&spec.omega, &xn)?);
    let d = Arc::new(ExprScalar::parse(&spec.d, &xn)?);
    let beta = Arc::new(ExprScalar::parse(&spec.beta, &xn)?);
    let structure = ProductStructure {
        l0: l0.clone(),
        omega,
        d,
        beta: beta.clone(),
        t_index: spec.t_index,
    };

    let bounds = spec.sample_box.clone().unwrap_or_else(|| vec![(-1.0, 1.0); m]);
    check_dim(m, bounds.len())?;
    let l0_model = slice_model(l0)?;
    for (k, x) in sample_points(&bounds, 32, 0xb7).into_iter().enumerate() {
        let b = beta.value(&x)?;
        if !(b > 0.0) {
            return Err(Error::Assumption {
                what: format!("beta = {b} must be positive"),
                point: x,
            });
        }
        if k < 8 {
            let lam = convexity_modulus_estimate(&l0_model, &x, 4)?;
            if !(lam > 0.0) {
                return Err(Error::Assumption {
                    what: format!("L0 is not strongly convex (modulus estimate {lam})"),
                    point: x,
                });
            }
        }
    }

    let mut model = LagrangianModel::from_product(spec.name.clone(), structure)?;
    for (i, p) in spec.periods.iter().enumerate() {
        if let Some(p) = p {
            model = model.with_period(i, *p)?;
        }
    }
    Ok(model)
}

/// Wraps a slice Lagrangian as a model with a dummy symmetry, for convexity queries only.
fn slice_model(l0: Arc<dyn Lagrangian>) -> Result<LagrangianModel> {
    let m = l0.dim();
    LagrangianModel::new(
        "slice",
        l0,
        crate::fields::const_vector(m, vec![0.0; m]),
        crate::fields::const_vector(m, vec![0.0; m]),
        crate::fields::const_scalar(m, 0.0),
    )
}

/// Quadratic Lagrangian `g_x(v, v)` from symmetric metric entry expressions.
#[derive(Debug, Clone)]
pub struct MetricLagrangian {
    entries: Vec<Vec<ExprScalar>>,
}

impl MetricLagrangian {
    /// `entries[i][j]` expressions in `names`; must be symmetric.
    pub fn parse(entries: &[Vec<String>], names: &[String]) -> Result<Self> {
        let n = names.len();
        if entries.len() != n || entries.iter().any(|r| r.len() != n) {
            return Err(Error::Input(format!("metric needs {n}x{n} entries")));
        }
        let parsed = entries
            .iter()
            .map(|row| row.iter().map(|e| ExprScalar::parse(e, names)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries: parsed })
    }

    pub fn matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.entries.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = self.entries[i][j].value(x)?;
            }
        }
        Ok(g)
    }

    fn bilinear(&self, x: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        let g = self.matrix(x)?;
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                s += g[(i, j)] * a[i] * b[j];
            }
        }
        Ok(s)
    }
}

impl Lagrangian for MetricLagrangian {
    fn dim(&self) -> usize {
        self.entries.len()
    }
    fn value(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        self.bilinear(x, v, v)
    }
    fn grad_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        let g = self.matrix(x)?;
        Ok((0..v.len())
            .map(|i| (0..v.len()).map(|j| (g[(i, j)] + g[(j, i)]) * v[j]).sum())
            .collect())
    }
    fn grad_x(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let vij = v[i] * v[j];
                if vij == 0.0 {
                    continue;
                }
                let grad = self.entries[i][j].gradient(x)?;
                for (o, g) in out.iter_mut().zip(grad) {
                    *o += g * vij;
                }
            }
        }
        Ok(out)
    }
}

/// `Q = 2 g(·, K)`.
struct MetricChargeForm {
    metric: MetricLagrangian,
    k: Arc<ExprVector>,
}

impl VectorField for MetricChargeForm {
    fn dim(&self) -> usize {
        self.metric.dim()
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.metric.matrix(x)?;
        let k = self.k.value(x)?;
        let n = k.len();
        Ok((0..n).map(|i| 2.0 * (0..n).map(|j| g[(i, j)] * k[j]).sum::<f64>()).collect())
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let g = self.metric.matrix(x)?;
        let k = self.k.value(x)?;
        let jk = self.k.jacobian(x)?;
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            for kk in 0..n {
                let dg = self.metric.entries[i][kk].gradient(x)?;
                for j in 0..n {
                    jac[(i, j)] += 2.0 * (dg[j] * k[kk] + g[(i, kk)] * jk[(kk, j)]);
                }
            }
        }
        Ok(jac)
    }
}

/// Stationary Lorentzian model `L = g(v, v)` with Killing field `K`.
#[derive(Debug, Clone)]
pub struct LorentzSpec {
    pub name: String,
    /// Full symmetric matrix of entry expressions in `x0..x{n-1}`.
    pub metric: Vec<Vec<String>>,
    pub symmetry: Vec<String>,
    pub periods: Vec<Option<f64>>,
    pub sample_box: Option<Vec<(f64, f64)>>,
}

/// Builds `L = g(v,v)`, `Q = 2g(·,K)`, `d = 0`; rejects `g(K,K) ≥ 0` on the sample box.
///
/// When `K` is a constant coordinate vector and the metric does not depend on that
/// coordinate, the product structure `L0 = g_ss`, `ω = g_st`, `β = −g_tt` is attached.
pub fn make_stationary_lorentz(spec: &LorentzSpec) -> Result<LagrangianModel> {
    let n = spec.metric.len();
    if n < 2 {
        return Err(Error::Input("stationary Lorentz models need dimension >= 2".into()));
    }
    check_dim(n, spec.symmetry.len())?;
    check_dim(n, spec.periods.len())?;
    for i in 0..n {
        for j in 0..n {
            if spec.metric.get(i).and_then(|r| r.get(j)) != spec.metric.get(j).and_then(|r| r.get(i)) {
                return Err(Error::Input(format!("metric entries ({i},{j}) and ({j},{i}) differ")));
            }
        }
    }
    let names = coordinate_names("x", n);
    let metric = MetricLagrangian::parse(&spec.metric, &names)?;
    let k = Arc::new(ExprVector::parse(&spec.symmetry, &names)?);
    let bounds = spec.sample_box.clone().unwrap_or_else(|| vec![(-1.0, 1.0); n]);
    check_dim(n, bounds.len())?;
    for x in sample_points(&bounds, 32, 0x10) {
        let kx = k.value(&x)?;
        let gkk = metric.bilinear(&x, &kx, &kx)?;
        if !(gkk < 0.0) {
            return Err(Error::Assumption {
                what: format!("g(K,K) = {gkk} must be negative"),
                point: x,
            });
        }
    }
    let q = Arc::new(MetricChargeForm {
        metric: metric.clone(),
        k: k.clone(),
    });
    let mut model = LagrangianModel::new(
        spec.name.clone(),
        Arc::new(metric),
        k.clone(),
        q,
        crate::fields::const_scalar(n, 0.0),
    )?;
    if let Some(t) = coordinate_direction(&k, n) {
        if let Some(structure) = lorentz_product_structure(&spec.metric, t) {
            model = model.with_product(structure);
        }
    }
    for (i, p) in spec.periods.iter().enumerate() {
        if let Some(p) = p {
            model = model.with_period(i, *p)?;
        }
    }
    Ok(model)
}

fn coordinate_direction(k: &ExprVector, n: usize) -> Option<usize> {
    if !k.is_constant() {
        return None;
    }
    let v = k.value(&vec![0.0; n]).ok()?;
    let idx = v.iter().position(|c| *c == 1.0)?;
    v.iter()
        .enumerate()
        .all(|(i, c)| i == idx || *c == 0.0)
        .then_some(idx)
}

fn lorentz_product_structure(metric: &[Vec<String>], t: usize) -> Option<ProductStructure> {
    let n = metric.len();
    let (xn, _) = slice_names(n - 1, t);
    let idx: Vec<usize> = (0..n).filter(|j| *j != t).collect();
    let slice: Vec<Vec<String>> = idx
        .iter()
        .map(|i| idx.iter().map(|j| metric[*i][*j].clone()).collect())
        .collect();
    let l0 = MetricLagrangian::parse(&slice, &xn).ok()?;
    let omega: Vec<String> = idx.iter().map(|i| metric[*i][t].clone()).collect();
    let omega = ExprVector::parse(&omega, &xn).ok()?;
    let beta = ExprScalar::parse(&format!("-({})", metric[t][t]), &xn).ok()?;
    Some(ProductStructure {
        l0: Arc::new(l0),
        omega: Arc::new(omega),
        d: crate::fields::const_scalar(n - 1, 0.0),
        beta: Arc::new(beta),
        t_index: t,
    })
}

/// Finsler norms supported by the Beem and Finsler-electromagnetic families.
#[derive(Debug, Clone, PartialEq)]
pub enum FinslerNorm {
    Euclidean,
    /// `F(v) = |v| + b·v` with `|b| < 1`.
    Randers(Vec<f64>),
}

impl FinslerNorm {
    fn validate(&self, dim: usize) -> Result<()> {
        if let Self::Randers(b) = self {
            check_dim(dim, b.len())?;
            if !(norm(b) < 1.0) {
                return Err(Error::Input("Randers drift must satisfy |b| < 1".into()));
            }
        }
        Ok(())
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        match self {
            Self::Euclidean => norm(v),
            Self::Randers(b) => norm(v) + dot(b, v),
        }
    }

    /// Gradient of `F²`; zero at `v = 0`.
    pub fn grad_sq(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Euclidean => v.iter().map(|c| 2.0 * c).collect(),
            Self::Randers(b) => {
                let r = norm(v);
                if r == 0.0 {
                    return vec![0.0; v.len()];
                }
                let f = r + dot(b, v);
                v.iter().zip(b).map(|(vi, bi)| 2.0 * f * (vi / r + bi)).collect()
            }
        }
    }
}

/// `L0(x, ν) = F²(ν) + ω0(ν) + V(x)` on a slice.
pub struct FinslerElectromagnetic {
    norm: FinslerNorm,
    omega0: ExprVector,
    potential: ExprScalar,
}

impl Lagrangian for FinslerElectromagnetic {
    fn dim(&self) -> usize {
        self.omega0.base_dim
    }
    fn value(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let f = self.norm.value(v);
        Ok(f * f + dot(&self.omega0.value(x)?, v) + self.potential.value(x)?)
    }
    fn grad_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        let mut g = self.norm.grad_sq(v);
        for (gi, oi) in g.iter_mut().zip(self.omega0.value(x)?) {
            *gi += oi;
        }
        Ok(g)
    }
    fn grad_x(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        let jw = self.omega0.jacobian(x)?;
        let mut g = self.potential.gradient(x)?;
        for (j, gj) in g.iter_mut().enumerate() {
            for (i, vi) in v.iter().enumerate() {
                *gj += jw[(i, j)] * vi;
            }
        }
        Ok(g)
    }
}

/// Slice Lagrangian `F² + ω0 + V` in the coordinates `names`.
pub fn make_finsler_electromagnetic(
    norm: FinslerNorm,
    omega0: &[String],
    potential: &str,
    names: &[String],
) -> Result<Arc<dyn Lagrangian>> {
    check_dim(names.len(), omega0.len())?;
    norm.validate(names.len())?;
    Ok(Arc::new(FinslerElectromagnetic {
        norm,
        omega0: ExprVector::parse(omega0, names)?,
        potential: ExprScalar::parse(potential, names)?,
    }))
}

/// `L = F² − ω² + ω1 + V` with symmetry `K`.
#[derive(Debug, Clone)]
pub struct BeemSpec {
    pub name: String,
    pub dim: usize,
    pub norm: FinslerNorm,
    pub omega: Vec<String>,
    pub symmetry: Vec<String>,
    pub omega1: Option<Vec<String>>,
    pub potential: Option<String>,
    pub periods: Vec<Option<f64>>,
    pub sample_box: Option<Vec<(f64, f64)>>,
}

struct BeemLagrangian {
    norm: FinslerNorm,
    omega: ExprVector,
    omega1: ExprVector,
    potential: ExprScalar,
}

impl Lagrangian for BeemLagrangian {
    fn dim(&self) -> usize {
        self.omega.base_dim
    }
    fn value(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let f = self.norm.value(v);
        let w = dot(&self.omega.value(x)?, v);
        Ok(f * f - w * w + dot(&self.omega1.value(x)?, v) + self.potential.value(x)?)
    }
    fn grad_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        let om = self.omega.value(x)?;
        let w = dot(&om, v);
        let om1 = self.omega1.value(x)?;
        Ok(self
            .norm
            .grad_sq(v)
            .into_iter()
            .zip(om.iter().zip(&om1))
            .map(|(g, (o, o1))| g - 2.0 * w * o + o1)
            .collect())
    }
    fn grad_x(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        let om = self.omega.value(x)?;
        let w = dot(&om, v);
        let jw = self.omega.jacobian(x)?;
        let jw1 = self.omega1.jacobian(x)?;
        let mut g = self.potential.gradient(x)?;
        for (j, gj) in g.iter_mut().enumerate() {
            for (i, vi) in v.iter().enumerate() {
                *gj += -2.0 * w * jw[(i, j)] * vi + jw1[(i, j)] * vi;
            }
        }
        Ok(g)
    }
}

/// Builds a Beem-type model and validates `Q(K) = 2(F²(K) − ω(K)²) < 0` and
/// affinity of the Noether charge on the sample box.
pub fn make_beem_model(spec: &BeemSpec) -> Result<LagrangianModel> {
    let n = spec.dim;
    if n < 2 {
        return Err(Error::Input("Beem models need dimension >= 2".into()));
    }
    spec.norm.validate(n)?;
    check_dim(n, spec.omega.len())?;
    check_dim(n, spec.symmetry.len())?;
    check_dim(n, spec.periods.len())?;
    let names = coordinate_names("x", n);
    let zeros = vec!["0".to_string(); n];
    let lag = Arc::new(BeemLagrangian {
        norm: spec.norm.clone(),
        omega: ExprVector::parse(&spec.omega, &names)?,
        omega1: ExprVector::parse(spec.omega1.as_ref().unwrap_or(&zeros), &names)?,
        potential: ExprScalar::parse(spec.potential.as_deref().unwrap_or("0"), &names)?,
    });
    let k: Vector = Arc::new(ExprVector::parse(&spec.symmetry, &names)?);

    // N(x, v) = ∂_vL(x, v)[K]; Q is read off on the coordinate basis.
    let charge = {
        let lag = lag.clone();
        let k = k.clone();
        move |x: &[f64], v: &[f64]| -> Result<f64> { Ok(dot(&lag.grad_v(x, v)?, &k.value(x)?)) }
    };
    let q_field = {
        let charge = charge.clone();
        FnVector {
            dim: n,
            base_dim: n,
            f: move |x: &[f64]| -> Result<Vec<f64>> {
                let d = charge(x, &vec![0.0; x.len()])?;
                (0..x.len())
                    .map(|j| {
                        let mut e = vec![0.0; x.len()];
                        e[j] = 1.0;
                        Ok(charge(x, &e)? - d)
                    })
                    .collect()
            },
        }
    };
    let d_field = {
        let charge = charge.clone();
        FnScalar {
            dim: n,
            f: move |x: &[f64]| charge(x, &vec![0.0; x.len()]),
        }
    };

    let bounds = spec.sample_box.clone().unwrap_or_else(|| vec![(-1.0, 1.0); n]);
    check_dim(n, bounds.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xbee);
    for x in sample_points(&bounds, 24, 0xbeef) {
        let kx = k.value(&x)?;
        let wk = dot(&lag.omega.value(&x)?, &kx);
        if wk == 0.0 {
            return Err(Error::Assumption {
                what: "omega(K) vanishes, so Q(K) < 0 cannot hold".into(),
                point: x,
            });
        }
        let fk = spec.norm.value(&kx);
        let qk = 2.0 * (fk * fk - wk * wk);
        if !(qk < 0.0) {
            return Err(Error::Assumption {
                what: format!("F(K)^2 - omega(K)^2 = {} must be negative", qk / 2.0),
                point: x,
            });
        }
        let q = q_field.value(&x)?;
        let d = d_field.value(&x)?;
        for _ in 0..4 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let affine = dot(&q, &v) + d;
            let actual = charge(&x, &v)?;
            if (affine - actual).abs() > 1e-8 * (1.0 + actual.abs()) {
                return Err(Error::Assumption {
                    what: "Noether charge is not affine in the velocity".into(),
                    point: x,
                });
            }
        }
    }

    let mut model = LagrangianModel::new(spec.name.clone(), lag, k, Arc::new(q_field), Arc::new(d_field))?
        .with_cone_singular(true);
    for (i, p) in spec.periods.iter().enumerate() {
        if let Some(p) = p {
            model = model.with_period(i, *p)?;
        }
    }
    Ok(model)
}

/// Returns the declared product structure.
pub fn extract_product_structure(model: &LagrangianModel) -> Result<ProductStructure> {
    model.product().cloned().ok_or(Error::NotProductForm)
}

fn product(name: &str, l0: &str, beta: &str) -> LagrangianModel {
    let mut spec = ProductModelSpec::new(name, 1, L0Spec::Expression(l0.into()));
    spec.beta = beta.into();
    make_product_model(&spec).expect("shipped model is valid")
}

/// `L = ν² − τ²` on ℝ², `K = ∂t`.
pub fn flat11() -> LagrangianModel {
    product("flat11", "v0^2", "1")
}

/// FLAT11 with `x0` periodic of period 2π.
pub fn cyl() -> LagrangianModel {
    flat11()
        .with_period(0, 2.0 * PI)
        .expect("valid period")
        .with_name("cyl")
}

/// `L = ν² − (1 + 0.5 sin x)τ²`.
pub fn beta_sine() -> LagrangianModel {
    product("beta_sine", "v0^2", "1 + 0.5*sin(x0)")
}

/// `L = ν² − (1 + x²)τ²`.
pub fn beta_quadratic() -> LagrangianModel {
    product("beta_quadratic", "v0^2", "1 + x0^2")
}

/// Minkowski metric `diag(1, …, 1, −1)` on ℝ^dim with `K = ∂t`.
pub fn minkowski(dim: usize) -> LagrangianModel {
    let metric = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| match (i == j, i + 1 == dim) {
                    (false, _) => "0".to_string(),
                    (true, false) => "1".to_string(),
                    (true, true) => "-1".to_string(),
                })
                .collect()
        })
        .collect();
    let mut symmetry = vec!["0".to_string(); dim];
    symmetry[dim - 1] = "1".into();
    make_stationary_lorentz(&LorentzSpec {
        name: "minkowski".into(),
        metric,
        symmetry,
        periods: vec![None; dim],
        sample_box: None,
    })
    .expect("shipped model is valid")
}

/// Rotating-frame metric `dx² + dy² − dt² + a(y dx − x dy) dt` on ℝ²×ℝ with `a = 0.2`
/// and the helical Killing field `K = ∂t + Ω(−y ∂x + x ∂y)`, `Ω = 0.5`.
pub fn rotating_frame() -> LagrangianModel {
    let s = |t: &str| t.to_string();
    let metric = vec![
        vec![s("1"), s("0"), s("0.1*x1")],
        vec![s("0"), s("1"), s("-0.1*x0")],
        vec![s("0.1*x1"), s("-0.1*x0"), s("-1")],
    ];
    make_stationary_lorentz(&LorentzSpec {
        name: "rotating_frame".into(),
        metric,
        symmetry: vec![s("-0.5*x1"), s("0.5*x0"), s("1")],
        periods: vec![None; 3],
        sample_box: Some(vec![(-1.5, 1.5), (-1.5, 1.5), (-1.0, 1.0)]),
    })
    .expect("shipped model is valid")
    .with_chart_box(vec![(-2.5, 2.5), (-2.5, 2.5), (-1e6, 1e6)])
}

/// `L = |v|² − (1.5 v⁰)²` on ℝ³ with `K = ∂x⁰`, so `Q(K) = −2.5`.
pub fn beem_toy() -> LagrangianModel {
    let s = |t: &str| t.to_string();
    make_beem_model(&BeemSpec {
        name: "beem_toy".into(),
        dim: 3,
        norm: FinslerNorm::Euclidean,
        omega: vec![s("1.5"), s("0"), s("0")],
        symmetry: vec![s("1"), s("0"), s("0")],
        omega1: None,
        potential: None,
        periods: vec![None; 3],
        sample_box: None,
    })
    .expect("shipped model is valid")
}

/// The five regression models: FLAT11, CYL, rotating frame, β-varying product, Beem toy.
pub fn regression_models() -> Vec<LagrangianModel> {
    vec![flat11(), cyl(), rotating_frame(), beta_sine(), beem_toy()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{build_lc, fiber_hessian, negative_eigenvalue_count, noether_charge};

    #[test]
    fn flat_has_expected_structure() {
        let flat = flat11();
        assert_eq!(flat.qk(&[0.3, 0.0]).unwrap(), -2.0);
        let ps = extract_product_structure(&flat).unwrap();
        assert_eq!(ps.beta.value(&[0.3]).unwrap(), 1.0);
        assert_eq!(ps.omega.value(&[0.3]).unwrap(), vec![0.0]);
        assert_eq!(ps.d.value(&[0.3]).unwrap(), 0.0);
        assert_eq!(ps.l0.value(&[0.3], &[2.0]).unwrap(), 4.0);
    }

    #[test]
    fn product_substitution_example() {
        let mut spec = ProductModelSpec::new("p", 1, L0Spec::Expression("v0^2".into()));
        spec.omega = vec!["0.3".into()];
        spec.d = "0.2".into();
        spec.beta = "2".into();
        let model = make_product_model(&spec).unwrap();
        let l = model.value(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((l + 0.2).abs() < 1e-15);
    }

    #[test]
    fn negative_beta_rejected() {
        let mut spec = ProductModelSpec::new("p", 1, L0Spec::Expression("v0^2".into()));
        spec.beta = "-1".into();
        assert!(matches!(make_product_model(&spec), Err(Error::Assumption { .. })));
    }

    #[test]
    fn concave_l0_rejected() {
        let spec = ProductModelSpec::new("p", 1, L0Spec::Expression("-(v0^2)".into()));
        assert!(matches!(make_product_model(&spec), Err(Error::Assumption { .. })));
    }

    #[test]
    fn quadratic_l0_spec() {
        let spec = ProductModelSpec::new(
            "q",
            2,
            L0Spec::Quadratic(vec![vec!["2".into(), "0".into()], vec!["0".into(), "1 + x0^2".into()]]),
        );
        let model = make_product_model(&spec).unwrap();
        let l = model.value(&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]).unwrap();
        assert!((l - 4.0).abs() < 1e-15);
    }

    #[test]
    fn cyl_is_periodic() {
        let cyl = cyl();
        assert_eq!(cyl.periods()[0], Some(2.0 * PI));
        assert_eq!(cyl.periods()[1], None);
    }

    #[test]
    fn minkowski_is_product_with_unit_beta() {
        let m = minkowski(3);
        let ps = extract_product_structure(&m).unwrap();
        assert_eq!(ps.beta.value(&[0.2, 0.1]).unwrap(), 1.0);
        let lc = build_lc(&m);
        let v = [0.3, -1.2, 0.8];
        assert!((lc.value(&[0.0; 3], &v).unwrap() - dot(&v, &v)).abs() < 1e-14);
    }

    #[test]
    fn rotating_frame_is_not_product() {
        let r = rotating_frame();
        assert!(matches!(extract_product_structure(&r), Err(Error::NotProductForm)));
    }

    #[test]
    fn lorentz_requires_timelike_k() {
        let s = |t: &str| t.to_string();
        let spec = LorentzSpec {
            name: "bad".into(),
            metric: vec![vec![s("1"), s("0")], vec![s("0"), s("-1")]],
            symmetry: vec![s("1"), s("0")],
            periods: vec![None; 2],
            sample_box: None,
        };
        assert!(matches!(make_stationary_lorentz(&spec), Err(Error::Assumption { .. })));
    }

    #[test]
    fn beem_toy_charge_and_index() {
        let b = beem_toy();
        assert!((b.qk(&[0.1, 0.2, 0.3]).unwrap() + 2.5).abs() < 1e-14);
        let h = fiber_hessian(&b, &[0.0; 3], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(negative_eigenvalue_count(&h, 1e-9), 1);
        assert_eq!(noether_charge(&b, &[0.0; 3], &[1.0, 0.0, 0.0]).unwrap(), -2.5);
        assert!(matches!(extract_product_structure(&b), Err(Error::NotProductForm)));
    }

    #[test]
    fn beem_rejects_orthogonal_omega() {
        let s = |t: &str| t.to_string();
        let spec = BeemSpec {
            name: "b".into(),
            dim: 3,
            norm: FinslerNorm::Euclidean,
            omega: vec![s("0"), s("1.5"), s("0")],
            symmetry: vec![s("1"), s("0"), s("0")],
            omega1: None,
            potential: None,
            periods: vec![None; 3],
            sample_box: None,
        };
        match make_beem_model(&spec) {
            Err(Error::Assumption { what, .. }) => assert!(what.contains("omega(K)")),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn beem_rejects_randers_nonaffine_charge() {
        let s = |t: &str| t.to_string();
        let spec = BeemSpec {
            name: "b".into(),
            dim: 2,
            norm: FinslerNorm::Randers(vec![0.0, 0.3]),
            omega: vec![s("1.5"), s("0")],
            symmetry: vec![s("1"), s("0")],
            omega1: None,
            potential: None,
            periods: vec![None; 2],
            sample_box: None,
        };
        match make_beem_model(&spec) {
            Err(Error::Assumption { what, .. }) => assert!(what.contains("affine")),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn finsler_electromagnetic_slice() {
        let names = vec!["x0".to_string()];
        let l0 = make_finsler_electromagnetic(FinslerNorm::Euclidean, &["0.4".into()], "sin(x0)", &names)
            .unwrap();
        assert!((l0.value(&[0.5], &[0.0]).unwrap() - 0.5f64.sin()).abs() < 1e-15);
        assert_eq!(l0.grad_v(&[0.5], &[0.0]).unwrap(), vec![0.4]);
        let randers =
            make_finsler_electromagnetic(FinslerNorm::Randers(vec![0.3, 0.0]), &["0".into(), "0".into()], "0", &[
                "x0".to_string(),
                "x1".to_string(),
            ])
            .unwrap();
        let m = slice_model(randers).unwrap();
        let lam = convexity_modulus_estimate(&m, &[0.0, 0.0], 40).unwrap();
        assert!(lam > 0.0, "{lam}");
    }
}
