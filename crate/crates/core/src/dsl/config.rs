//! Line-oriented model configuration files.
//!
//! ```text
//! # FLAT11
//! [model]
//! name = "flat11"
//! family = "product"
//! dim = 2
//! l0 = "v0^2"
//! beta = "1"
//!
//! [geometry]
//! periodic = x0:6.507179586
//! sample_box = -2..2, -2..2
//!
//! [solver]
//! levels = 32, 64
//! ```
//!
//! Keys are strict: unknown keys, duplicates and unknown sections are errors.

use std::collections::{BTreeMap, HashSet};

use crate::dsl::parse_expr;
use crate::error::{Error, Result};
use crate::lagrangian::{AuditOptions, LagrangianModel};
use crate::models::{
    make_beem_model, make_product_model, make_stationary_lorentz, BeemSpec, FinslerNorm, L0Spec,
    LorentzSpec, ProductModelSpec,
};
use crate::solver::SolverOptions;
use crate::verify::VerifyOptions;

const SECTIONS: [&str; 4] = ["model", "geometry", "solver", "audit"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Product,
    StationaryLorentz,
    Beem,
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "product" => Ok(Self::Product),
            "stationary_lorentz" => Ok(Self::StationaryLorentz),
            "beem" => Ok(Self::Beem),
            _ => Err(format!("unknown family {s:?} (expected product, stationary_lorentz or beem)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum L0Source {
    Expression(String),
    /// Slice-indexed coefficient matrix of `Σ a_ij v_i v_j`.
    Quadratic(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Product {
        t_index: usize,
        l0: L0Source,
        omega: Vec<String>,
        d: String,
        beta: String,
    },
    StationaryLorentz {
        metric: Vec<Vec<String>>,
        symmetry: Vec<String>,
    },
    Beem {
        norm: FinslerNorm,
        omega: Vec<String>,
        symmetry: Vec<String>,
        omega1: Option<Vec<String>>,
        potential: Option<String>,
    },
}

/// Multistart initial-guess perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub amplitude: f64,
    pub modes: usize,
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub samples: usize,
    pub options: AuditOptions,
    pub el_tol: f64,
    pub energy_tol: f64,
    pub noether_tol: Option<f64>,
    pub gradient_tol: f64,
    pub gradient_directions: usize,
    pub shooting_steps: Option<usize>,
    pub shooting_tol: f64,
    pub pseudo_center: Option<Vec<f64>>,
    pub pseudo_radii: Option<Vec<f64>>,
    pub pseudo_samples: usize,
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub name: String,
    pub family: Family,
    pub dim: usize,
    pub coefficients: Coefficients,
    pub periods: Vec<Option<f64>>,
    /// Full-dimensional box used for validation and audits.
    pub sample_box: Vec<(f64, f64)>,
    pub chart_box: Option<Vec<(f64, f64)>>,
    /// Everything except `bounds`, which comes from an audit at run time.
    pub solver: SolverOptions,
    pub perturbation: Perturbation,
    pub audit: AuditConfig,
}

struct Entry {
    value: String,
    line: usize,
}

struct Raw {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
    used: HashSet<(String, String)>,
    last_line: usize,
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(value: &str, line: usize) -> Result<String> {
    let v = value.trim();
    match v.strip_prefix('"') {
        Some(rest) => {
            let inner = rest
                .strip_suffix('"')
                .ok_or_else(|| cfg_err(line, "unterminated string"))?;
            if inner.contains('"') {
                return Err(cfg_err(line, "stray quote inside string"));
            }
            Ok(inner.to_string())
        }
        None if v.contains('"') => Err(cfg_err(line, "stray quote in value")),
        None => Ok(v.to_string()),
    }
}

fn lex(text: &str) -> Result<Raw> {
    let mut sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut last_line = 0;
    for (k, raw_line) in text.lines().enumerate() {
        let line = k + 1;
        last_line = line;
        let l = strip_comment(raw_line).trim();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(line, "malformed section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(cfg_err(line, format!("unknown section [{name}]")));
            }
            if sections.contains_key(name) {
                return Err(cfg_err(line, format!("duplicate section [{name}]")));
            }
            sections.insert(name.to_string(), (line, BTreeMap::new()));
            current = Some(name.to_string());
            continue;
        }
        let Some(sec) = &current else {
            return Err(cfg_err(line, "key outside of a section"));
        };
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| cfg_err(line, "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(cfg_err(line, format!("invalid key {key:?}")));
        }
        let value = unquote(value, line)?;
        let entries = &mut sections.get_mut(sec).expect("section exists").1;
        if entries.contains_key(key) {
            return Err(cfg_err(line, format!("duplicate key {key}")));
        }
        entries.insert(key.to_string(), Entry { value, line });
    }
    Ok(Raw { sections, used: HashSet::new(), last_line })
}

impl Raw {
    fn get(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let e = self.sections.get(section)?.1.get(key)?;
        self.used.insert((section.to_string(), key.to_string()));
        Some((e.value.clone(), e.line))
    }

    fn section_line(&self, section: &str) -> usize {
        self.sections.get(section).map_or(self.last_line.max(1), |s| s.0)
    }

    fn require(&mut self, section: &str, key: &str) -> Result<(String, usize)> {
        self.get(section, key).ok_or_else(|| {
            cfg_err(self.section_line(section), format!("missing required key {key} in [{section}]"))
        })
    }

    fn number<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| cfg_err(line, format!("{key}: cannot parse {v:?} as a number"))),
        }
    }

    fn real(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        let line = self.sections.get(section).and_then(|s| s.1.get(key)).map(|e| e.line);
        match self.number::<f64>(section, key)? {
            Some(x) if !x.is_finite() => Err(cfg_err(line.unwrap_or(0), format!("{key} must be finite"))),
            x => Ok(x),
        }
    }

    fn positive(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        let line = self.sections.get(section).and_then(|s| s.1.get(key)).map(|e| e.line);
        match self.real(section, key)? {
            Some(x) if x <= 0.0 => Err(cfg_err(line.unwrap_or(0), format!("{key} must be positive"))),
            x => Ok(x),
        }
    }

    fn unused(&self) -> Option<(usize, String, String)> {
        self.sections
            .iter()
            .flat_map(|(s, (_, entries))| entries.iter().map(move |(k, e)| (e.line, s.clone(), k.clone())))
            .filter(|(_, s, k)| !self.used.contains(&(s.clone(), k.clone())))
            .min()
    }
}

fn parse_list(value: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| cfg_err(line, format!("{key}: cannot parse {t:?} as a number")))
        })
        .collect()
}

fn parse_box(value: &str, line: usize, key: &str, dim: usize) -> Result<Vec<(f64, f64)>> {
    let b = value
        .split(',')
        .map(|t| {
            let (lo, hi) = t
                .trim()
                .split_once("..")
                .ok_or_else(|| cfg_err(line, format!("{key}: expected `lo..hi`, got {:?}", t.trim())))?;
            let p = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| cfg_err(line, format!("{key}: cannot parse {:?} as a number", s.trim())))
            };
            let (lo, hi) = (p(lo)?, p(hi)?);
            if lo > hi {
                return Err(cfg_err(line, format!("{key}: empty range {lo}..{hi}")));
            }
            Ok((lo, hi))
        })
        .collect::<Result<Vec<_>>>()?;
    if b.len() != dim {
        return Err(cfg_err(line, format!("{key}: expected {dim} ranges, got {}", b.len())));
    }
    Ok(b)
}

fn parse_periods(value: &str, line: usize, dim: usize) -> Result<Vec<Option<f64>>> {
    let mut periods = vec![None; dim];
    for item in value.split(',') {
        let (name, p) = item
            .trim()
            .split_once(':')
            .ok_or_else(|| cfg_err(line, format!("periodic: expected `x<i>:<period>`, got {:?}", item.trim())))?;
        let idx: usize = name
            .trim()
            .strip_prefix('x')
            .and_then(|i| i.parse().ok())
            .filter(|i| *i < dim)
            .ok_or_else(|| cfg_err(line, format!("periodic: unknown coordinate {:?}", name.trim())))?;
        let p: f64 = p
            .trim()
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite() && *p > 0.0)
            .ok_or_else(|| cfg_err(line, format!("periodic: invalid period {:?}", p.trim())))?;
        if periods[idx].replace(p).is_some() {
            return Err(cfg_err(line, format!("periodic: x{idx} listed twice")));
        }
    }
    Ok(periods)
}

fn check_expr(text: &str, vars: &[String], line: usize, key: &str) -> Result<String> {
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    parse_expr(text, &names).map_err(|e| cfg_err(line, format!("{key}: {e}")))?;
    Ok(text.to_string())
}

fn expr_or(raw: &mut Raw, key: &str, default: &str, vars: &[String]) -> Result<String> {
    match raw.get("model", key) {
        Some((v, line)) => check_expr(&v, vars, line, key),
        None => Ok(default.to_string()),
    }
}

fn expr_required(raw: &mut Raw, key: &str, vars: &[String]) -> Result<String> {
    let (v, line) = raw.require("model", key)?;
    check_expr(&v, vars, line, key)
}

fn names(prefix: &str, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|j| format!("{prefix}{j}")).collect()
}

fn product_coefficients(raw: &mut Raw, dim: usize) -> Result<Coefficients> {
    let t_index = raw.number::<usize>("model", "t_index")?.unwrap_or(dim - 1);
    if t_index >= dim {
        let line = raw.get("model", "t_index").map_or(0, |e| e.1);
        return Err(cfg_err(line, format!("t_index {t_index} out of range")));
    }
    let idx: Vec<usize> = (0..dim).filter(|j| *j != t_index).collect();
    let xs = names("x", &idx);
    let xv: Vec<String> = xs.iter().cloned().chain(names("v", &idx)).collect();
    let has_matrix = raw.sections.get("model").is_some_and(|s| s.1.keys().any(|k| k.starts_with("l0_")));
    let l0 = match (raw.get("model", "l0"), has_matrix) {
        (Some((_, line)), true) => {
            return Err(cfg_err(line, "give either l0 or l0_<i>_<j> entries, not both"));
        }
        (Some((v, line)), false) => L0Source::Expression(check_expr(&v, &xv, line, "l0")?),
        (None, true) => {
            let mut m = vec![vec!["0".to_string(); idx.len()]; idx.len()];
            for (a, i) in idx.iter().enumerate() {
                for (b, j) in idx.iter().enumerate() {
                    if let Some((v, line)) = raw.get("model", &format!("l0_{i}_{j}")) {
                        m[a][b] = check_expr(&v, &xs, line, &format!("l0_{i}_{j}"))?;
                    }
                }
            }
            L0Source::Quadratic(m)
        }
        (None, false) => {
            return Err(cfg_err(raw.section_line("model"), "missing required key l0 in [model]"));
        }
    };
    let omega = idx
        .iter()
        .map(|j| expr_or(raw, &format!("omega{j}"), "0", &xs))
        .collect::<Result<Vec<_>>>()?;
    let d = expr_or(raw, "d", "0", &xs)?;
    let beta = expr_required(raw, "beta", &xs)?;
    Ok(Coefficients::Product { t_index, l0, omega, d, beta })
}

fn lorentz_coefficients(raw: &mut Raw, dim: usize) -> Result<Coefficients> {
    let xs = names("x", &(0..dim).collect::<Vec<_>>());
    let mut metric = vec![vec!["0".to_string(); dim]; dim];
    for i in 0..dim {
        for j in i..dim {
            let key = format!("g_{i}_{j}");
            let e = if i == j {
                expr_required(raw, &key, &xs)?
            } else {
                expr_or(raw, &key, "0", &xs)?
            };
            metric[i][j] = e.clone();
            metric[j][i] = e;
        }
    }
    let symmetry = (0..dim)
        .map(|j| expr_required(raw, &format!("k{j}"), &xs))
        .collect::<Result<Vec<_>>>()?;
    Ok(Coefficients::StationaryLorentz { metric, symmetry })
}

fn beem_coefficients(raw: &mut Raw, dim: usize) -> Result<Coefficients> {
    let xs = names("x", &(0..dim).collect::<Vec<_>>());
    let norm = match raw.get("model", "norm") {
        None => FinslerNorm::Euclidean,
        Some((v, line)) => match v.split_once(':') {
            None if v.trim() == "euclidean" => FinslerNorm::Euclidean,
            Some((kind, b)) if kind.trim() == "randers" => {
                let b = parse_list(b, line, "norm")?;
                if b.len() != dim {
                    return Err(cfg_err(line, format!("norm: Randers drift needs {dim} components")));
                }
                FinslerNorm::Randers(b)
            }
            _ => return Err(cfg_err(line, format!("norm: expected `euclidean` or `randers:b0,..`, got {v:?}"))),
        },
    };
    let omega = (0..dim)
        .map(|j| expr_required(raw, &format!("omega{j}"), &xs))
        .collect::<Result<Vec<_>>>()?;
    let symmetry = (0..dim)
        .map(|j| expr_required(raw, &format!("k{j}"), &xs))
        .collect::<Result<Vec<_>>>()?;
    let omega1_keys: Vec<Option<(String, usize)>> = (0..dim).map(|j| raw.get("model", &format!("omega1_{j}"))).collect();
    let omega1 = if omega1_keys.iter().all(Option::is_none) {
        None
    } else {
        Some(
            omega1_keys
                .into_iter()
                .enumerate()
                .map(|(j, e)| match e {
                    Some((v, line)) => check_expr(&v, &xs, line, &format!("omega1_{j}")),
                    None => Ok("0".to_string()),
                })
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let potential = match raw.get("model", "potential") {
        Some((v, line)) => Some(check_expr(&v, &xs, line, "potential")?),
        None => None,
    };
    Ok(Coefficients::Beem { norm, omega, symmetry, omega1, potential })
}

fn solver_section(raw: &mut Raw, dim: usize) -> Result<(SolverOptions, Perturbation)> {
    let mut o = SolverOptions::default();
    if let Some((v, line)) = raw.get("solver", "mode") {
        o.mode = v.parse().map_err(|e: Error| cfg_err(line, e.to_string()))?;
    }
    if let Some(n) = raw.number::<usize>("solver", "max_iters")? {
        o.max_iters = n;
    }
    for (key, slot) in [
        ("grad_tol", &mut o.grad_tol),
        ("armijo_c", &mut o.armijo_c),
        ("backtrack", &mut o.backtrack),
        ("initial_step", &mut o.initial_step),
        ("max_step", &mut o.max_step),
    ] {
        if let Some(x) = raw.positive("solver", key)? {
            *slot = x;
        }
    }
    o.tol_n = raw.positive("solver", "tol_n")?;
    if let Some((v, line)) = raw.get("solver", "levels") {
        o.levels = v
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| cfg_err(line, format!("levels: cannot parse {:?}", t.trim())))
            })
            .collect::<Result<_>>()?;
    }
    if let Some((v, line)) = raw.get("solver", "monitor_box") {
        o.monitor_box = Some(parse_box(&v, line, "monitor_box", dim)?);
    }
    let perturbation = Perturbation {
        amplitude: raw.real("solver", "perturbation")?.unwrap_or(0.0),
        modes: raw.number::<usize>("solver", "perturbation_modes")?.unwrap_or(3),
    };
    let line = raw.section_line("solver");
    o.validate_shape().map_err(|e| cfg_err(line, e.to_string()))?;
    Ok((o, perturbation))
}

fn audit_section(raw: &mut Raw, dim: usize) -> Result<AuditConfig> {
    let mut opts = AuditOptions::default();
    let d = VerifyOptions::default();
    if let Some(s) = raw.number::<u64>("audit", "seed")? {
        opts.seed = s;
    }
    for (key, slot) in [
        ("tol_analytic", &mut opts.tol_analytic),
        ("tol_fd", &mut opts.tol_fd),
        ("tol_noether", &mut opts.tol_noether),
        ("velocity_radius", &mut opts.velocity_radius),
    ] {
        if let Some(x) = raw.positive("audit", key)? {
            *slot = x;
        }
    }
    if let Some(n) = raw.number::<usize>("audit", "velocities_per_point")? {
        opts.velocities_per_point = n;
    }
    if let Some(n) = raw.number::<usize>("audit", "convexity_pairs")? {
        opts.convexity_pairs = n;
    }
    opts.k1_floor = raw.real("audit", "k1_floor")?;
    let pseudo_center = match raw.get("audit", "pseudo_center") {
        Some((v, line)) => {
            let c = parse_list(&v, line, "pseudo_center")?;
            if c.len() != dim {
                return Err(cfg_err(line, format!("pseudo_center: expected {dim} components")));
            }
            Some(c)
        }
        None => None,
    };
    let pseudo_radii = match raw.get("audit", "pseudo_radii") {
        Some((v, line)) => Some(parse_list(&v, line, "pseudo_radii")?),
        None => None,
    };
    let shooting_steps = match raw.number::<usize>("audit", "shooting_steps")? {
        Some(0) => None,
        Some(n) => Some(n),
        None => d.shooting_steps,
    };
    Ok(AuditConfig {
        samples: raw.number("audit", "samples")?.unwrap_or(100),
        options: opts,
        el_tol: raw.positive("audit", "el_tol")?.unwrap_or(d.el_tol),
        energy_tol: raw.positive("audit", "energy_tol")?.unwrap_or(d.energy_tol),
        noether_tol: raw.positive("audit", "noether_tol")?,
        gradient_tol: raw.positive("audit", "gradient_tol")?.unwrap_or(d.gradient_tol),
        gradient_directions: raw.number("audit", "gradient_directions")?.unwrap_or(d.gradient_directions),
        shooting_steps,
        shooting_tol: raw.positive("audit", "shooting_tol")?.unwrap_or(d.shooting_tol),
        pseudo_center,
        pseudo_radii,
        pseudo_samples: raw.number("audit", "pseudo_samples")?.unwrap_or(64),
    })
}

/// Parses and validates a config file. Coefficient expressions are parsed here so errors
/// carry line numbers; physical validation (e.g. `β > 0`) happens in [`ModelConfig::build`].
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    let mut raw = lex(text)?;
    if !raw.sections.contains_key("model") {
        return Err(cfg_err(raw.last_line.max(1), "missing [model] section"));
    }
    let (name, _) = raw.require("model", "name")?;
    let (family, line) = raw.require("model", "family")?;
    let family: Family = family.parse().map_err(|e: String| cfg_err(line, e))?;
    let dim: usize = raw
        .number("model", "dim")?
        .ok_or_else(|| cfg_err(raw.section_line("model"), "missing required key dim in [model]"))?;
    if dim < 2 {
        let line = raw.get("model", "dim").map_or(0, |e| e.1);
        return Err(cfg_err(line, "dim must be at least 2"));
    }
    let coefficients = match family {
        Family::Product => product_coefficients(&mut raw, dim)?,
        Family::StationaryLorentz => lorentz_coefficients(&mut raw, dim)?,
        Family::Beem => beem_coefficients(&mut raw, dim)?,
    };
    let periods = match raw.get("geometry", "periodic") {
        Some((v, line)) => parse_periods(&v, line, dim)?,
        None => vec![None; dim],
    };
    if let (Coefficients::Product { t_index, .. }, Some(_)) = (&coefficients, periods.iter().flatten().next()) {
        if periods[*t_index].is_some() {
            let line = raw.get("geometry", "periodic").map_or(0, |e| e.1);
            return Err(cfg_err(line, "periodic: the symmetry coordinate cannot be periodic"));
        }
    }
    let sample_box = match raw.get("geometry", "sample_box") {
        Some((v, line)) => parse_box(&v, line, "sample_box", dim)?,
        None => vec![(-1.0, 1.0); dim],
    };
    let chart_box = match raw.get("geometry", "chart_box") {
        Some((v, line)) => Some(parse_box(&v, line, "chart_box", dim)?),
        None => None,
    };
    let (solver, perturbation) = solver_section(&mut raw, dim)?;
    let audit = audit_section(&mut raw, dim)?;
    if let Some((line, section, key)) = raw.unused() {
        return Err(cfg_err(line, format!("unknown key {key} in [{section}]")));
    }
    Ok(ModelConfig {
        name,
        family,
        dim,
        coefficients,
        periods,
        sample_box,
        chart_box,
        solver,
        perturbation,
        audit,
    })
}

impl ModelConfig {
    /// Builds the model, running the family's validation on the sample box.
    pub fn build(&self) -> Result<LagrangianModel> {
        let model = match &self.coefficients {
            Coefficients::Product { t_index, l0, omega, d, beta } => {
                let l0 = match l0 {
                    L0Source::Expression(e) => L0Spec::Expression(e.clone()),
                    L0Source::Quadratic(m) => L0Spec::Quadratic(m.clone()),
                };
                let mut spec = ProductModelSpec::new(&self.name, self.dim - 1, l0);
                spec.t_index = *t_index;
                spec.omega = omega.clone();
                spec.d = d.clone();
                spec.beta = beta.clone();
                spec.periods = self.periods.clone();
                spec.sample_box = Some(
                    self.sample_box
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| j != t_index)
                        .map(|(_, b)| *b)
                        .collect(),
                );
                make_product_model(&spec)?
            }
            Coefficients::StationaryLorentz { metric, symmetry } => make_stationary_lorentz(&LorentzSpec {
                name: self.name.clone(),
                metric: metric.clone(),
                symmetry: symmetry.clone(),
                periods: self.periods.clone(),
                sample_box: Some(self.sample_box.clone()),
            })?,
            Coefficients::Beem { norm, omega, symmetry, omega1, potential } => make_beem_model(&BeemSpec {
                name: self.name.clone(),
                dim: self.dim,
                norm: norm.clone(),
                omega: omega.clone(),
                symmetry: symmetry.clone(),
                omega1: omega1.clone(),
                potential: potential.clone(),
                periods: self.periods.clone(),
                sample_box: Some(self.sample_box.clone()),
            })?,
        };
        Ok(match &self.chart_box {
            Some(b) => model.with_chart_box(b.clone()),
            None => model,
        })
    }

    pub fn verify_options(&self, seed: u64) -> VerifyOptions {
        let a = &self.audit;
        VerifyOptions {
            el_tol: a.el_tol,
            energy_tol: a.energy_tol,
            noether_tol: a.noether_tol,
            gradient_tol: a.gradient_tol,
            gradient_directions: a.gradient_directions,
            seed,
            shooting_steps: a.shooting_steps,
            shooting_tol: a.shooting_tol,
            pseudocoercivity: a.pseudo_radii.as_ref().map(|r| {
                let center = a
                    .pseudo_center
                    .clone()
                    .unwrap_or_else(|| self.sample_box.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
                // The audit runs on the slice, so the symmetry coordinate is dropped.
                let slice = match &self.coefficients {
                    Coefficients::Product { t_index, .. } => {
                        center.iter().enumerate().filter(|(j, _)| j != t_index).map(|(_, c)| *c).collect()
                    }
                    _ => center,
                };
                (slice, r.clone(), a.pseudo_samples)
            }),
        }
    }
}
