//! Piecewise-linear paths on a uniform grid, the midpoint-rule action and the discrete H¹ metric.

use crate::error::{check_dim, Error, Result};
use crate::fmt::g17;
use crate::lagrangian::{ChartPoint, LagrangianModel};
use crate::numerics::{midpoint, solve_const_tridiagonal};

/// Nodes `z(s_i)`, `s_i = i/n`, stored in the continuous lift of periodic coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    nodes: Vec<Vec<f64>>,
}

impl DiscretePath {
    /// Requires `n ≥ 2` intervals, equal row lengths and finite values.
    pub fn new(nodes: Vec<Vec<f64>>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Input(format!(
                "a path needs at least 2 intervals, got {}",
                nodes.len().saturating_sub(1)
            )));
        }
        let dim = nodes[0].len();
        if dim == 0 {
            return Err(Error::Input("path nodes must have at least one coordinate".into()));
        }
        for row in &nodes {
            check_dim(dim, row.len())?;
            if row.iter().any(|c| !c.is_finite()) {
                return Err(Error::Input("path nodes must be finite".into()));
            }
        }
        Ok(Self { nodes })
    }

    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    pub fn start(&self) -> &[f64] {
        &self.nodes[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.nodes[self.n()]
    }

    /// Wrapped endpoints `(p, q)`.
    pub fn endpoints(&self, model: &LagrangianModel) -> Result<(ChartPoint, ChartPoint)> {
        Ok((ChartPoint::new(model, self.start())?, ChartPoint::new(model, self.end())?))
    }

    /// Integer winding per coordinate (zero on non-periodic ones).
    pub fn winding(&self, model: &LagrangianModel) -> Vec<i64> {
        let (a, b) = (self.start(), self.end());
        model
            .periods()
            .iter()
            .enumerate()
            .map(|(j, p)| match p {
                Some(p) => {
                    let lift = b[j] - a[j];
                    let base = b[j].rem_euclid(*p) - a[j].rem_euclid(*p);
                    ((lift - base) / p).round() as i64
                }
                None => 0,
            })
            .collect()
    }

    /// Replaces interior nodes; endpoints are kept.
    pub fn with_interior(&self, f: impl Fn(usize, &[f64]) -> Vec<f64>) -> Result<Self> {
        let n = self.n();
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, z)| if i == 0 || i == n { z.clone() } else { f(i, z) })
            .collect();
        Self::new(nodes)
    }

    /// `z + α ξ` (endpoints unchanged since `ξ` vanishes there).
    pub fn step(&self, alpha: f64, xi: &PathVariation) -> Result<Self> {
        self.check_variation(xi)?;
        self.with_interior(|i, z| z.iter().zip(&xi.values[i]).map(|(a, b)| a + alpha * b).collect())
    }

    pub(crate) fn check_variation(&self, xi: &PathVariation) -> Result<()> {
        check_dim(self.n() + 1, xi.values.len())?;
        check_dim(self.dim(), xi.dim())
    }

    /// `(midpoint, velocity)` of interval `i`.
    pub fn interval(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.n() as f64;
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        (midpoint(a, b), a.iter().zip(b).map(|(x, y)| n * (y - x)).collect())
    }
}

/// Nodal array vanishing at both ends; also used for nodal covectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PathVariation {
    pub values: Vec<Vec<f64>>,
}

impl PathVariation {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            values: vec![vec![0.0; dim]; n + 1],
        }
    }

    /// Rejects arrays that do not vanish at the ends.
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Input("variation needs at least two nodes".into()));
        }
        let dim = values[0].len();
        for row in &values {
            check_dim(dim, row.len())?;
        }
        let last = values.len() - 1;
        if values[0].iter().chain(&values[last]).any(|c| *c != 0.0) {
            return Err(Error::Input("variation must vanish at the endpoints".into()));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|r| r.iter().map(|c| alpha * c).collect())
                .collect(),
        }
    }

    /// Euclidean nodal pairing `Σ_i ξ_i·η_i`.
    pub fn pair(&self, other: &PathVariation) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0_f64, |m, c| m.max(c.abs()))
    }
}

/// Straight line in the lift from `p` to `q + period·winding`.
///
/// `p`, `q` are wrapped into the fundamental domain first. An empty `winding` means zero.
pub fn init_path(
    model: &LagrangianModel,
    p: &[f64],
    q: &[f64],
    n: usize,
    winding: &[i64],
) -> Result<DiscretePath> {
    if n < 2 {
        return Err(Error::Input(format!("n must be at least 2, got {n}")));
    }
    let p = ChartPoint::new(model, p)?.coords;
    let mut q = ChartPoint::new(model, q)?.coords;
    if !winding.is_empty() {
        check_dim(model.dim(), winding.len())?;
        for (j, k) in winding.iter().enumerate() {
            if *k == 0 {
                continue;
            }
            match model.periods()[j] {
                Some(period) => q[j] += period * *k as f64,
                None => {
                    return Err(Error::Input(format!(
                        "winding given for non-periodic coordinate x{j}"
                    )))
                }
            }
        }
    }
    let nodes = (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            p.iter().zip(&q).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect();
    DiscretePath::new(nodes)
}

/// Forward difference `n (z_{i+1} − z_i)`.
pub fn velocity(path: &DiscretePath, i: usize) -> Result<Vec<f64>> {
    if i >= path.n() {
        return Err(Error::Input(format!("interval {i} out of range 0..{}", path.n())));
    }
    Ok(path.interval(i).1)
}

/// Midpoint-rule action `Σ L(m_i, v_i)/n`.
pub fn action(model: &LagrangianModel, path: &DiscretePath) -> Result<f64> {
    check_dim(model.dim(), path.dim())?;
    let n = path.n();
    let mut sum = 0.0;
    for i in 0..n {
        let (m, v) = path.interval(i);
        sum += model.value(&m, &v).map_err(Error::at_interval(i))?;
    }
    Ok(sum / n as f64)
}

/// Per-interval `(m_i, v_i, ∂_xL, ∂_vL)`.
pub(crate) fn interval_derivatives(
    model: &LagrangianModel,
    path: &DiscretePath,
) -> Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>> {
    check_dim(model.dim(), path.dim())?;
    (0..path.n())
        .map(|i| {
            let (m, v) = path.interval(i);
            let gx = model.grad_x(&m, &v).map_err(Error::at_interval(i))?;
            let gv = model.grad_v(&m, &v).map_err(Error::at_interval(i))?;
            Ok((m, v, gx, gv))
        })
        .collect()
}

/// Exact gradient of the discrete action with respect to interior nodes.
pub fn action_gradient(model: &LagrangianModel, path: &DiscretePath) -> Result<PathVariation> {
    let data = interval_derivatives(model, path)?;
    Ok(assemble_gradient(path.n(), &data))
}

pub(crate) fn assemble_gradient(
    n: usize,
    data: &[(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)],
) -> PathVariation {
    let dim = data[0].0.len();
    let mut g = PathVariation::zeros(n, dim);
    let h = 0.5 / n as f64;
    for j in 1..n {
        let (_, _, gxa, pa) = &data[j - 1];
        let (_, _, gxb, pb) = &data[j];
        for k in 0..dim {
            g.values[j][k] = h * (gxa[k] + gxb[k]) + pa[k] - pb[k];
        }
    }
    g
}

/// Discrete H¹ product `Σ ξ_i·η_i/(n+1) + Σ ξ̇_i·η̇_i/n`.
pub fn h1_product(path: &DiscretePath, xi: &PathVariation, eta: &PathVariation) -> Result<f64> {
    path.check_variation(xi)?;
    path.check_variation(eta)?;
    let n = path.n();
    let l2 = xi.pair(eta) / (n + 1) as f64;
    let mut h = 0.0;
    for i in 0..n {
        for k in 0..path.dim() {
            h += (xi.values[i + 1][k] - xi.values[i][k]) * (eta.values[i + 1][k] - eta.values[i][k]);
        }
    }
    Ok(l2 + n as f64 * h)
}

/// Riesz representative of a nodal covector in the discrete H¹ metric.
pub fn riesz(covector: &PathVariation) -> PathVariation {
    let n = covector.n();
    let dim = covector.dim();
    let mut out = PathVariation::zeros(n, dim);
    let diag = 1.0 / (n + 1) as f64 + 2.0 * n as f64;
    let off = -(n as f64);
    for k in 0..dim {
        let mut rhs: Vec<f64> = (1..n).map(|j| covector.values[j][k]).collect();
        solve_const_tridiagonal(diag, off, &mut rhs);
        for (j, r) in rhs.into_iter().enumerate() {
            out.values[j + 1][k] = r;
        }
    }
    out
}

/// Dual H¹ norm `sqrt(⟨g, M⁻¹g⟩)` of a nodal covector.
pub fn dual_norm(covector: &PathVariation) -> f64 {
    covector.pair(&riesz(covector)).max(0.0).sqrt()
}

/// Doubles the number of intervals by midpoint insertion.
pub fn refine(path: &DiscretePath) -> DiscretePath {
    let mut nodes = Vec::with_capacity(2 * path.n() + 1);
    for i in 0..path.n() {
        nodes.push(path.nodes[i].clone());
        nodes.push(midpoint(&path.nodes[i], &path.nodes[i + 1]));
    }
    nodes.push(path.end().to_vec());
    DiscretePath { nodes }
}

/// Linear interpolation onto `n` intervals.
pub fn resample(path: &DiscretePath, n: usize) -> Result<DiscretePath> {
    if n < 2 {
        return Err(Error::Input(format!("n must be at least 2, got {n}")));
    }
    let old = path.n();
    let mut nodes = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if i == n {
            nodes.push(path.end().to_vec());
            continue;
        }
        let s = i as f64 * old as f64 / n as f64;
        let k = (s.floor() as usize).min(old - 1);
        let f = s - k as f64;
        let (a, b) = (&path.nodes[k], &path.nodes[k + 1]);
        nodes.push(a.iter().zip(b).map(|(x, y)| x + f * (y - x)).collect());
    }
    DiscretePath::new(nodes)
}

/// Adds `Σ_k a_k sin(kπs)` with seeded amplitudes in `[-amplitude, amplitude]` to the listed
/// coordinates; endpoints are untouched.
pub fn perturbed(path: &DiscretePath, coords: &[usize], amplitude: f64, modes: usize, seed: u64) -> Result<DiscretePath> {
    use rand::{Rng, SeedableRng};
    if coords.iter().any(|c| *c >= path.dim()) {
        return Err(Error::Input("perturbed coordinate out of range".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let amps: Vec<Vec<f64>> = coords
        .iter()
        .map(|_| (0..modes).map(|_| rng.gen_range(-amplitude..=amplitude)).collect())
        .collect();
    let n = path.n() as f64;
    path.with_interior(|i, z| {
        let s = i as f64 / n;
        let mut z = z.to_vec();
        for (c, a) in coords.iter().zip(&amps) {
            z[*c] += a
                .iter()
                .enumerate()
                .map(|(k, ak)| ak * ((k + 1) as f64 * std::f64::consts::PI * s).sin())
                .sum::<f64>();
        }
        z
    })
}

/// CSV with header `s,x0,...` and `%.17g` values.
pub fn write_csv(path: &DiscretePath) -> String {
    let mut out = String::from("s");
    for j in 0..path.dim() {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    let n = path.n();
    for (i, z) in path.nodes.iter().enumerate() {
        out.push_str(&g17(i as f64 / n as f64));
        for c in z {
            out.push(',');
            out.push_str(&g17(*c));
        }
        out.push('\n');
    }
    out
}

/// Parses [`write_csv`] output; errors carry 1-based line numbers.
pub fn read_csv(text: &str, dim: usize) -> Result<DiscretePath> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::PathFile {
        line: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let expected: Vec<String> = std::iter::once("s".to_string())
        .chain((0..dim).map(|j| format!("x{j}")))
        .collect();
    if cols != expected {
        return Err(Error::PathFile {
            line: 1,
            message: format!("expected header {}, got {}", expected.join(","), header.trim()),
        });
    }
    let mut nodes = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::PathFile {
                line: lineno,
                message: format!("expected {} fields, got {}", dim + 1, fields.len()),
            });
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::PathFile {
                        line: lineno,
                        message: format!("invalid number '{f}'"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        nodes.push(row[1..].to_vec());
    }
    let count = nodes.len();
    DiscretePath::new(nodes).map_err(|e| Error::PathFile {
        line: count + 1,
        message: e.to_string(),
    })
}
