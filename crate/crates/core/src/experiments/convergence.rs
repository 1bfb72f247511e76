//! Strong convergence rates against the exact mild solution.
//!
//! On each interval `(t_n, t_{n+1}]` the error `y(s) - Y_n` is sampled at
//! the 8 Gauss-Legendre nodes. Given `y(t_n)`, the mild solution at
//! `s = t_n + theta tau` is `e^{-lambda theta tau} y(t_n) + Z` with `Z`
//! centred Gaussian of variance `g_n^2 (1 - e^{-2 lambda theta tau}) /
//! (2 lambda)` and independent of everything up to `t_n`, which includes
//! `Y_n`. Drawing a fresh `Z` per node gives the exact joint law of
//! `(y(s), Y_n)` for every node, which is all the functional needs.

use super::common::{bundle, check_paths, closed_row, config_err, levels, mc_row, operator, path_rng, schemes};
use super::{Fit, Outcome, Row, Status, StudyConfig, Verdict, AGREEMENT_SIGMAS, SLOPE_TOLERANCE};
use crate::error::{param, Error, Result};
use crate::evolve::{run_discrete, run_mild_exact};
use crate::noise::{make_test_process, ou_moments, StepProcess};
use crate::norms::{collect_paths, column, McEstimate};
use crate::numerics::{gauss_legendre_unit, linear_fit, one_minus_exp_over_x, pairwise_sum, slope_stderr};
use crate::rational_calc::SchemeFunction;
use crate::spectral_operator::DiagonalOperator;
use rand::Rng;
use rand_distr::StandardNormal;

const NODES: usize = 8;

/// Node tables for one step size: `e^{-lambda theta_i tau}` and the
/// standard deviation of `Z` per unit `g`.
struct NodeTables {
    weights: Vec<f64>,
    decay: Vec<Vec<f64>>,
    sd: Vec<Vec<f64>>,
}

impl NodeTables {
    fn new(lambda: &[f64], tau: f64) -> Self {
        let (theta, weights) = gauss_legendre_unit(NODES);
        let decay = theta.iter().map(|t| lambda.iter().map(|l| (-l * t * tau).exp()).collect()).collect();
        let sd = theta
            .iter()
            .map(|t| {
                let h = t * tau;
                lambda.iter().map(|l| (h * one_minus_exp_over_x(2.0 * l * h)).sqrt()).collect()
            })
            .collect();
        NodeTables { weights, decay, sd }
    }
}

/// Exact `sum_n tau sum_i w_i E ||A^beta (y(t_n + theta_i tau) - Y_n)||^2`
/// for deterministic diagonal `g` and `q = 2`, the expectation of the Monte
/// Carlo functional with `p = 2`. The second moments of `(y(t_n), Y_n)` per
/// mode follow the recursions
/// `S_yy' = e^2 S_yy + g^2 Var E`, `S_YY' = r^2 (S_YY + g^2 tau)`,
/// `S_yY' = e r S_yY + r g^2 Cov(E, dW)`.
pub fn convergence_error_p2_closed_form(
    op: &DiagonalOperator,
    scheme: &SchemeFunction,
    g: &StepProcess,
    beta: f64,
) -> Result<f64> {
    if op.q() != 2.0 {
        return Err(Error::Unsupported("the closed form needs q = 2".into()));
    }
    if !g.is_diagonal() || g.m_x() != op.dim() {
        return param("the closed form needs diagonal data matching the operator");
    }
    let (m, tau) = (op.dim(), g.tau());
    let lam = op.eigenvalues();
    let r = op.scheme_multipliers(scheme, tau)?;
    let nodes = NodeTables::new(lam, tau);
    let w: Vec<f64> = lam.iter().map(|l| l.powf(2.0 * beta)).collect();
    let mom: Vec<_> = lam.iter().map(|&l| ou_moments(l, tau)).collect();
    let e: Vec<f64> = lam.iter().map(|l| (-l * tau).exp()).collect();
    let (mut syy, mut s_yy, mut sy_y) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut terms = Vec::with_capacity(g.n_steps());
    for n in 0..g.n_steps() {
        let gv = &g.values()[n * m..(n + 1) * m];
        let mut part = 0.0;
        for i in 0..NODES {
            let per_mode: Vec<f64> = (0..m)
                .map(|k| {
                    let c = nodes.decay[i][k];
                    let z = nodes.sd[i][k] * gv[k];
                    w[k] * (c * c * syy[k] - 2.0 * c * sy_y[k] + s_yy[k] + z * z)
                })
                .collect();
            part += nodes.weights[i] * pairwise_sum(&per_mode);
        }
        terms.push(tau * part);
        for k in 0..m {
            let g2 = gv[k] * gv[k];
            syy[k] = e[k] * e[k] * syy[k] + g2 * mom[k].var_e;
            sy_y[k] = e[k] * r[k] * sy_y[k] + r[k] * g2 * mom[k].cov;
            s_yy[k] = r[k] * r[k] * (s_yy[k] + g2 * tau);
        }
    }
    Ok(pairwise_sum(&terms))
}

fn case_label(alpha: f64, beta: f64) -> String {
    format!("alpha={alpha};beta={beta}")
}

pub(crate) fn run(cfg: &StudyConfig) -> Result<Outcome> {
    check_paths(cfg)?;
    let op = operator(cfg)?;
    let schemes = schemes(cfg, 1)?;
    let levels = levels(cfg, 3)?;
    if cfg.cases.is_empty() {
        return config_err("convergence needs at least one [[cases]] entry");
    }
    for c in &cfg.cases {
        if !(0.0 <= c.alpha && c.alpha <= c.beta && c.beta <= 1.0 && c.beta - c.alpha < 0.5) {
            return config_err(format!(
                "case alpha = {}, beta = {} violates 0 <= alpha <= beta <= 1, beta - alpha < 1/2",
                c.alpha, c.beta
            ));
        }
        if c.data.is_deterministic() {
            let g = make_test_process(&c.data, op.dim(), 1, 1.0, None)?;
            if g.values().iter().all(|v| *v == 0.0) {
                return config_err(format!("data {} vanishes identically; the errors are all zero", c.data.label()));
            }
        }
    }
    if !(cfg.p >= 1.0 && cfg.p.is_finite()) {
        return config_err("p must be at least 1");
    }
    let (m, p, q) = (op.dim(), cfg.p, op.q());
    let lam = op.eigenvalues();
    let lam_beta: Vec<Vec<f64>> = cfg
        .cases
        .iter()
        .map(|c| lam.iter().map(|l| if c.beta == 0.0 { 1.0 } else { l.powf(c.beta) }).collect())
        .collect();
    let (nc, ns) = (cfg.cases.len(), schemes.len());
    let mut rows = Vec::new();
    let mut agreement_worst = 0.0f64;
    let mut agreement_count = 0usize;
    // errors[si][ci] = (value, stderr) per level
    let mut errors = vec![vec![Vec::new(); nc]; ns];
    for level in &levels {
        let nodes = NodeTables::new(lam, level.tau);
        let paths = collect_paths(cfg.n_paths, |path| {
            let mut rng = path_rng(cfg.seed, level, m, path);
            let b = bundle(&op, level, true, &mut rng)?;
            let mut runs = Vec::with_capacity(nc * ns);
            for c in &cfg.cases {
                let g = make_test_process(&c.data, m, level.n_steps, level.tau, Some(&b))?;
                let y = run_mild_exact(&op, &g, &b)?;
                for s in &schemes {
                    runs.push((run_discrete(&op, s, &g, &b)?, y.clone(), g.clone()));
                }
            }
            let mut terms = vec![Vec::with_capacity(level.n_steps); nc * ns];
            let mut z = vec![0.0; m];
            let mut d = vec![0.0; m];
            for n in 0..level.n_steps {
                let mut part = vec![0.0; nc * ns];
                for i in 0..NODES {
                    for zk in z.iter_mut() {
                        *zk = rng.sample(StandardNormal);
                    }
                    for (j, (yd, ym, g)) in runs.iter().enumerate() {
                        let (yd, ym) = (yd.row(n), ym.row(n));
                        let gv = &g.values()[n * m..(n + 1) * m];
                        let lb = &lam_beta[j / ns];
                        for k in 0..m {
                            let diff = nodes.decay[i][k] * ym[k] + nodes.sd[i][k] * gv[k] * z[k] - yd[k];
                            d[k] = lb[k] * diff.abs();
                        }
                        let norm_p = if q == 2.0 {
                            let s: f64 = d.iter().map(|x| x * x).sum();
                            if p == 2.0 { s } else { s.powf(p / 2.0) }
                        } else {
                            d.iter().map(|x| x.powf(q)).sum::<f64>().powf(p / q)
                        };
                        part[j] += nodes.weights[i] * norm_p;
                    }
                }
                for (t, v) in terms.iter_mut().zip(&part) {
                    t.push(level.tau * v);
                }
            }
            Ok(terms.iter().map(|t| pairwise_sum(t)).collect())
        })?;
        for (ci, c) in cfg.cases.iter().enumerate() {
            for (si, s) in schemes.iter().enumerate() {
                let est = McEstimate::from_samples(&column(&paths, ci * ns + si))?;
                let value = est.mean.powf(1.0 / p);
                let se = value / p * est.stderr / est.mean;
                rows.push(Row {
                    case: case_label(c.alpha, c.beta),
                    scheme: s.name.clone(),
                    probe: c.data.label(),
                    alpha: c.alpha,
                    beta: c.beta,
                    value,
                    stderr: se,
                    q,
                    ..mc_row(cfg, level, m, "error")
                });
                errors[si][ci].push((value, se));
                if p == 2.0 && q == 2.0 && c.data.is_deterministic() {
                    let g = make_test_process(&c.data, m, level.n_steps, level.tau, None)?;
                    let exact = convergence_error_p2_closed_form(&op, s, &g, c.beta)?.sqrt();
                    rows.push(Row {
                        case: case_label(c.alpha, c.beta),
                        scheme: s.name.clone(),
                        probe: c.data.label(),
                        alpha: c.alpha,
                        beta: c.beta,
                        value: exact,
                        ..closed_row(cfg, level, "error_closed_form")
                    });
                    agreement_worst = agreement_worst.max((value - exact).abs() / se);
                    agreement_count += 1;
                }
            }
        }
    }
    let x: Vec<f64> = levels.iter().map(|l| l.tau.ln()).collect();
    let mut fits = Vec::new();
    let mut verdicts = Vec::new();
    for (ci, c) in cfg.cases.iter().enumerate() {
        for (si, s) in schemes.iter().enumerate() {
            let e = &errors[si][ci];
            let y: Vec<f64> = e.iter().map(|(v, _)| v.ln()).collect();
            let sd: Vec<f64> = e.iter().map(|(v, se)| se / v).collect();
            let (slope, intercept) = linear_fit(&x, &y);
            let se = slope_stderr(&x, &sd);
            let target = 0.5 + c.alpha - c.beta;
            let label = format!("{};{}", case_label(c.alpha, c.beta), s.name);
            fits.push(Fit {
                case: label.clone(),
                slope,
                stderr: se,
                ci95: [slope - 1.96 * se, slope + 1.96 * se],
                target,
                intercept,
            });
            let dist = (slope - target).abs();
            let mut v = Verdict::check(
                format!("slope[{label}]"),
                dist <= SLOPE_TOLERANCE,
                slope,
                target,
                format!("slope {slope:.4} +- {se:.4} vs target {target:.4} (tolerance {SLOPE_TOLERANCE})"),
            );
            if 1.96 * se > SLOPE_TOLERANCE {
                v.status = Status::Inconclusive;
                v.detail.push_str("; confidence interval wider than the tolerance, raise n_paths");
            }
            verdicts.push(v);
        }
    }
    if agreement_count > 0 {
        verdicts.push(Verdict::check(
            "p2_closed_form_agreement",
            agreement_worst <= AGREEMENT_SIGMAS,
            agreement_worst,
            AGREEMENT_SIGMAS,
            format!("{agreement_count} comparisons of the Monte Carlo error with its exact expectation"),
        ));
    }
    Ok(Outcome { rows, fits, verdicts })
}
