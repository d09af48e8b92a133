use std::fs;
use std::path::Path;

use serde::Serialize;

use noether_core::dsl::{parse_expr, parse_model_config, ModelConfig};
use noether_core::lagrangian::{assumption_audit, AuditReport, LagrangianModel};
use noether_core::path::{init_path, perturbed, read_csv, write_csv, DiscretePath};
use noether_core::reduction::{default_tol_n, noether_profile, project_with_phi, NoetherProfile};
use noether_core::solver::{minimize, multistart_homotopy, BoundConstants, SolverMode};
use noether_core::verify::{pseudocoercivity_audit, verify_path, PseudocoercivityAudit};

use crate::error::{CliError, Result, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VIOLATION};
use crate::manifest::{now, InputFile, OutputDir, RunManifest};
use crate::{Common, Endpoints};

/// Everything a command needs after loading its config.
struct Run {
    cfg: ModelConfig,
    model: LagrangianModel,
    seed: u64,
    started: String,
    config_file: InputFile,
    inputs: Vec<InputFile>,
    out: OutputDir,
}

impl Run {
    fn load(common: &Common) -> Result<Self> {
        let started = now();
        let bytes = fs::read(&common.config).map_err(CliError::io(&common.config))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Usage(format!("{}: not valid UTF-8", common.config.display())))?;
        let cfg = parse_model_config(&text)?;
        let model = cfg.build().map_err(CliError::Config)?;
        let seed = common.seed.unwrap_or(cfg.audit.options.seed);
        let out = OutputDir::create(&common.out)?;
        Ok(Self {
            cfg,
            model,
            seed,
            started,
            config_file: InputFile::new(&common.config, &bytes),
            inputs: Vec::new(),
            out,
        })
    }

    fn read_path(&mut self, path: &Path) -> Result<DiscretePath> {
        let bytes = fs::read(path).map_err(CliError::io(path))?;
        let text = String::from_utf8_lossy(&bytes);
        let z = read_csv(&text, self.model.dim())?;
        self.inputs.push(InputFile::new(path, &bytes));
        Ok(z)
    }

    fn audit(&self) -> Result<AuditReport> {
        let mut opts = self.cfg.audit.options.clone();
        opts.seed = self.seed;
        Ok(assumption_audit(&self.model, &self.cfg.sample_box, self.cfg.audit.samples, &opts)?)
    }

    fn finish(self, command: &str, exit_code: u8) -> Result<u8> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: self.config_file,
            inputs: self.inputs,
            seed: self.seed,
            started: self.started,
            finished: String::new(),
            exit_code,
            outputs: Vec::new(),
        };
        self.out.finish(manifest)?;
        Ok(exit_code)
    }
}

fn constant(text: &str) -> Result<f64> {
    let ast = parse_expr(text.trim(), &[]).map_err(|e| CliError::Usage(format!("'{}': {e}", text.trim())))?;
    Ok(ast.eval(&[])?)
}

fn parse_point(text: &str, dim: usize, what: &str) -> Result<Vec<f64>> {
    let v = text.split(',').map(constant).collect::<Result<Vec<_>>>()?;
    if v.len() != dim {
        return Err(CliError::Usage(format!("--{what} needs {dim} components, got {}", v.len())));
    }
    Ok(v)
}

fn coordinate(name: &str, dim: usize) -> Result<usize> {
    name.trim()
        .strip_prefix('x')
        .and_then(|j| j.parse::<usize>().ok())
        .filter(|j| *j < dim)
        .ok_or_else(|| CliError::Usage(format!("unknown coordinate '{}'", name.trim())))
}

/// `x0:k[,x1:k]` into a full winding vector.
fn parse_winding(text: &str, dim: usize) -> Result<Vec<i64>> {
    let mut w = vec![0; dim];
    for part in text.split(',') {
        let (c, k) = part
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("expected coordinate:winding, got '{part}'")))?;
        w[coordinate(c, dim)?] = k
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad winding '{}'", k.trim())))?;
    }
    Ok(w)
}

/// `x0:a..b[,x1:c..d]` into every winding vector of the product of the ranges (inclusive).
fn parse_winding_ranges(text: &str, dim: usize) -> Result<Vec<Vec<i64>>> {
    let mut all = vec![vec![0; dim]];
    for part in text.split(',') {
        let bad = || CliError::Usage(format!("expected coordinate:a..b, got '{part}'"));
        let (c, range) = part.split_once(':').ok_or_else(bad)?;
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        let j = coordinate(c, dim)?;
        all = all
            .into_iter()
            .flat_map(|w| {
                (a..=b).map(move |k| {
                    let mut w = w.clone();
                    w[j] = k;
                    w
                })
            })
            .collect();
    }
    Ok(all)
}

fn apply_endpoint_options(run: &mut Run, ends: &Endpoints) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = run.model.dim();
    let p = parse_point(&ends.p, dim, "p")?;
    let q = parse_point(&ends.q, dim, "q")?;
    let opts = &mut run.cfg.solver;
    if let Some(mode) = &ends.mode {
        opts.mode = mode.parse::<SolverMode>()?;
    }
    if let Some(n) = ends.n {
        opts.levels.retain(|l| *l < n);
        opts.levels.push(n);
    }
    Ok((p, q))
}

fn usable_bounds(a: &AuditReport) -> Option<BoundConstants> {
    let b = BoundConstants::from_audit(a);
    let ok = [b.c1, b.c2, b.c3, b.k1, b.k2].iter().all(|v| v.is_finite()) && b.c1 > 0.0 && b.k1 > 0.0;
    ok.then_some(b)
}

fn perturb(run: &Run, z: DiscretePath, seed: u64) -> noether_core::Result<DiscretePath> {
    let p = &run.cfg.perturbation;
    if p.amplitude > 0.0 {
        let coords: Vec<usize> = (0..z.dim()).collect();
        perturbed(&z, &coords, p.amplitude, p.modes, seed)
    } else {
        Ok(z)
    }
}

#[derive(Serialize)]
struct AuditOutput {
    audit: AuditReport,
    pseudocoercivity: Option<PseudocoercivityAudit>,
    passed: bool,
}

pub fn audit(common: &Common, line: &str) -> Result<u8> {
    let mut run = Run::load(common)?;
    let audit = run.audit()?;
    let pseudocoercivity = match run.cfg.verify_options(run.seed).pseudocoercivity {
        Some((x0, radii, samples)) if run.model.product().is_some() => {
            Some(pseudocoercivity_audit(&run.model, &x0, &radii, samples, run.seed)?)
        }
        _ => None,
    };
    let passed = audit.violations.is_empty() && pseudocoercivity.as_ref().is_none_or(|p| p.verdict == "PASS");
    println!(
        "{}: c1 {} c2 {} c3 {} k1 {} k2 {}, {} violations",
        audit.model,
        audit.c1,
        audit.c2,
        audit.c3,
        audit.k1,
        audit.k2,
        audit.violations.len()
    );
    run.out.write_json("report.json", &AuditOutput { audit, pseudocoercivity, passed })?;
    run.finish(line, if passed { EXIT_OK } else { EXIT_VIOLATION })
}

pub fn solve(common: &Common, ends: &Endpoints, winding: Option<&str>, line: &str) -> Result<u8> {
    let mut run = Run::load(common)?;
    let (p, q) = apply_endpoint_options(&mut run, ends)?;
    let winding = match winding {
        Some(w) => parse_winding(w, run.model.dim())?,
        None => vec![0; run.model.dim()],
    };
    run.cfg.solver.bounds = usable_bounds(&run.audit()?);
    let n0 = run.cfg.solver.levels.first().copied().unwrap_or(32);
    let init = perturb(&run, init_path(&run.model, &p, &q, n0, &winding)?, run.seed)?;
    let sol = minimize(&run.model, &init, &run.cfg.solver)?;
    let r = &sol.report;
    println!(
        "{}: J {} after {} iterations, converged {}",
        r.model, r.j, r.iterations, r.converged
    );
    run.out.write("path.csv", &write_csv(&sol.path))?;
    run.out.write_json("report.json", &sol.report)?;
    let code = if sol.report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    run.finish(line, code)
}

pub fn multistart(common: &Common, ends: &Endpoints, windings: &str, line: &str) -> Result<u8> {
    let mut run = Run::load(common)?;
    let (p, q) = apply_endpoint_options(&mut run, ends)?;
    let windings = parse_winding_ranges(windings, run.model.dim())?;
    run.cfg.solver.bounds = usable_bounds(&run.audit()?);
    let prepare = |w: &[i64], z: DiscretePath| {
        let k = windings.iter().position(|v| v == w).unwrap_or(0) as u64;
        perturb(&run, z, run.seed.wrapping_add(k))
    };
    let res = multistart_homotopy(&run.model, &p, &q, &windings, &run.cfg.solver, common.jobs, &prepare)?;
    for e in &res.entries {
        println!("winding {:?}: J {} converged {}", e.winding, e.report.j, e.report.converged);
        let tag: Vec<String> = e.winding.iter().map(i64::to_string).collect();
        run.out.write(&format!("path_w{}.csv", tag.join("_")), &write_csv(&e.path))?;
    }
    run.out.write_json("report.json", &res)?;
    let code = if res.all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    run.finish(line, code)
}

#[derive(Serialize)]
struct ProjectOutput {
    before: NoetherProfile,
    after: NoetherProfile,
    iterations: usize,
    #[serde(serialize_with = "noether_core::fmt::ser_vec_f64")]
    phi: Vec<f64>,
}

pub fn project(common: &Common, path: &Path, line: &str) -> Result<u8> {
    let mut run = Run::load(common)?;
    let z = run.read_path(path)?;
    let tol = run.cfg.solver.tol_n.unwrap_or_else(|| default_tol_n(&run.model));
    let before = noether_profile(&run.model, &z)?;
    let proj = project_with_phi(&run.model, &z, tol)?;
    println!("charge deviation {} -> {}", before.deviation, proj.profile.deviation);
    run.out.write("projected.csv", &write_csv(&proj.path))?;
    run.out.write_json(
        "report.json",
        &ProjectOutput {
            before,
            after: proj.profile,
            iterations: proj.iterations,
            phi: proj.phi,
        },
    )?;
    run.finish(line, EXIT_OK)
}

pub fn verify(common: &Common, path: &Path, line: &str) -> Result<u8> {
    let mut run = Run::load(common)?;
    let z = run.read_path(path)?;
    let report = verify_path(&run.model, &z, &run.cfg.verify_options(run.seed))?;
    if report.passed {
        println!("passed");
    } else {
        println!("failed: {}", report.failures.join("; "));
    }
    let code = if report.passed { EXIT_OK } else { EXIT_VIOLATION };
    run.out.write_json("report.json", &report)?;
    run.finish(line, code)
}
