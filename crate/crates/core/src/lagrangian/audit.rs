use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::identities::*;
use super::LagrangianModel;
use crate::error::{check_dim, Error, Result};
use crate::fmt::{ser_f64, ser_vec_f64};
use crate::numerics::{dot, norm};

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub seed: u64,
    /// Tolerance for identities evaluated from analytic derivatives.
    pub tol_analytic: f64,
    /// Tolerance for residuals involving finite-difference Jacobians.
    pub tol_fd: f64,
    /// Tolerance for the `L_c` Noether identity.
    pub tol_noether: f64,
    /// Velocity components are sampled uniformly in `[-radius, radius]`.
    pub velocity_radius: f64,
    /// Velocity samples per point for the pointwise residuals.
    pub velocities_per_point: usize,
    /// Pairs used by the convexity estimate at each point.
    pub convexity_pairs: usize,
    /// Minimum acceptable `k1`; smaller estimates are recorded as violations.
    pub k1_floor: Option<f64>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tol_analytic: 1e-10,
            tol_fd: 1e-6,
            tol_noether: 1e-8,
            velocity_radius: 2.0,
            velocities_per_point: 2,
            convexity_pairs: 8,
            k1_floor: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    #[serde(serialize_with = "ser_vec_f64")]
    pub point: Vec<f64>,
    pub identity: String,
    #[serde(serialize_with = "ser_f64")]
    pub residual: f64,
}

/// Sampled estimates of the structural constants of a model.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub model: String,
    pub samples: usize,
    #[serde(serialize_with = "ser_f64")]
    pub lambda_min: f64,
    #[serde(serialize_with = "ser_f64")]
    pub c_max: f64,
    #[serde(serialize_with = "ser_f64")]
    pub c1: f64,
    #[serde(serialize_with = "ser_f64")]
    pub c2: f64,
    #[serde(serialize_with = "ser_f64")]
    pub c3: f64,
    #[serde(serialize_with = "ser_f64")]
    pub k1: f64,
    #[serde(serialize_with = "ser_f64")]
    pub k2: f64,
    #[serde(serialize_with = "ser_f64")]
    pub max_qk_residual: f64,
    #[serde(serialize_with = "ser_f64")]
    pub max_noether_residual: f64,
    #[serde(serialize_with = "ser_f64")]
    pub max_killing_residual: f64,
    #[serde(serialize_with = "ser_f64")]
    pub max_lk_residual: f64,
    #[serde(serialize_with = "ser_f64")]
    pub max_d_invariance_residual: f64,
    pub quadgrowth_failures: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    /// Lower bound `c2 − c3²/c1 − 2(N_c² + k2²)/k1` on the reduced action.
    pub fn action_lower_bound(&self, nc: f64) -> f64 {
        self.c2 - self.c3 * self.c3 / self.c1 - 2.0 * (nc * nc + self.k2 * self.k2) / self.k1
    }
}

struct Recorder {
    violations: Vec<Violation>,
}

impl Recorder {
    fn check(&mut self, point: &[f64], identity: &str, residual: f64, tol: f64) -> f64 {
        if !(residual <= tol) {
            self.violations.push(Violation {
                point: point.to_vec(),
                identity: identity.into(),
                residual,
            });
        }
        residual
    }

    fn fail(&mut self, point: &[f64], identity: &str, err: &Error) {
        let point = match err {
            Error::Assumption { point, .. } | Error::Domain { point, .. } => point.clone(),
            _ => point.to_vec(),
        };
        self.violations.push(Violation {
            point,
            identity: format!("{identity}: {err}"),
            residual: f64::NAN,
        });
    }
}

/// Samples `model` on `sample_box` and estimates the constants
/// `c1 = min λ`, `c2 = min L(x,0)`, `c3 = max ‖∂_vL(x,0)‖`, `k1 = min(−Q(K))`,
/// `k2 = max |d|` and the growth constant `C`, recording identity residuals.
pub fn assumption_audit(
    model: &LagrangianModel,
    sample_box: &[(f64, f64)],
    n_samples: usize,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    let n = model.dim();
    check_dim(n, sample_box.len())?;
    if sample_box.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::Input("sample box bounds must be finite with lo <= hi".into()));
    }
    if n_samples == 0 {
        return Err(Error::Input("at least one sample is required".into()));
    }
    let lc = build_lc(model);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rec = Recorder { violations: Vec::new() };
    let zero = vec![0.0; n];
    let r = opts.velocity_radius;

    let mut c1 = f64::INFINITY;
    let mut c2 = f64::INFINITY;
    let mut c3 = 0.0_f64;
    let mut k1 = f64::INFINITY;
    let mut k1_at = vec![];
    let mut k2 = 0.0_f64;
    let mut c_max = 0.0_f64;
    let mut max_qk = 0.0_f64;
    let mut max_nc = 0.0_f64;
    let mut max_kill = 0.0_f64;
    let mut max_lk = 0.0_f64;
    let mut max_dinv = 0.0_f64;
    let mut quad_fail = 0;

    for _ in 0..n_samples {
        let x: Vec<f64> = sample_box
            .iter()
            .map(|(lo, hi)| if lo < hi { rng.gen_range(*lo..*hi) } else { *lo })
            .collect();
        let vs: Vec<Vec<f64>> = (0..opts.velocities_per_point.max(1))
            .map(|_| (0..n).map(|_| rng.gen_range(-r..r)).collect())
            .collect();

        let qk = match model.qk(&x) {
            Ok(q) => q,
            Err(e) => {
                rec.fail(&x, "charge form", &e);
                continue;
            }
        };
        if -qk < k1 {
            k1 = -qk;
            k1_at = x.clone();
        }
        if qk >= 0.0 {
            rec.check(&x, "negative Q(K)", qk, f64::NEG_INFINITY);
            continue;
        }

        let scale = |a: f64| 1.0 + a.abs();
        let mut eval = || -> Result<()> {
            let l0 = model.value(&x, &zero)?;
            c2 = c2.min(l0);
            let g0 = model.grad_v(&x, &zero)?;
            c3 = c3.max(norm(&g0));
            k2 = k2.max(model.charge_offset(&x)?.abs());

            max_qk = max_qk.max(rec.check(
                &x,
                "QK identity",
                qk_identity_residual(model, &x)?,
                opts.tol_analytic * scale(qk),
            ));
            max_lk = max_lk.max(rec.check(
                &x,
                "L(K) + Lc(K) identity",
                lk_sum_residual(model, &x)?,
                opts.tol_analytic * scale(l0),
            ));
            max_dinv = max_dinv.max(rec.check(
                &x,
                "d invariance",
                d_invariance_residual(model, &x)?,
                opts.tol_fd,
            ));

            let lambda = convexity_modulus_estimate(&lc, &x, opts.convexity_pairs)?;
            c1 = c1.min(lambda);
            if !(lambda > 0.0) {
                rec.check(&x, "convexity of Lc", lambda, f64::NEG_INFINITY);
            }

            for v in &vs {
                let xv: Vec<f64> = x.iter().chain(v).copied().collect();
                max_nc = max_nc.max(rec.check(
                    &xv,
                    "Lc Noether identity",
                    lc_noether_residual(model, &x, v)?,
                    opts.tol_noether,
                ));
                let kill = killing_residual(model, &x, v)?;
                let kscale = 1.0 + norm(&model.grad_x(&x, v)?) + norm(&model.grad_v(&x, v)?);
                max_kill = max_kill.max(rec.check(&xv, "Killing equation", kill, opts.tol_fd * kscale));
                if lambda > 0.0 {
                    let margin = quadgrowth_margin(model, lambda, &x, v)?;
                    if margin < -1e-10 * (1.0 + lc.value(&x, v)?.abs()) {
                        quad_fail += 1;
                        rec.check(&xv, "quadratic growth", -margin, 0.0);
                    }
                }
                let w2 = dot(v, v) + 1.0;
                let growth = (lc.value(&x, v)? / w2)
                    .max(norm(&lc.grad_x(&x, v)?) / w2)
                    .max(norm(&lc.grad_v(&x, v)?) / (norm(v) + 1.0));
                c_max = c_max.max(growth);
            }
            Ok(())
        };
        if let Err(e) = eval() {
            rec.fail(&x, "evaluation", &e);
        }
    }

    if let Some(floor) = opts.k1_floor {
        if k1 < floor {
            rec.check(&k1_at, "k1 below floor", k1, floor);
        }
    }

    Ok(AuditReport {
        model: model.name().to_string(),
        samples: n_samples,
        lambda_min: c1,
        c_max,
        c1,
        c2,
        c3,
        k1,
        k2,
        max_qk_residual: max_qk,
        max_noether_residual: max_nc,
        max_killing_residual: max_kill,
        max_lk_residual: max_lk,
        max_d_invariance_residual: max_dinv,
        quadgrowth_failures: quad_fail,
        violations: rec.violations,
    })
}
