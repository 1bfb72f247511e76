//! Probed ratio studies: DSMR uniformity, its weighted extension, and the
//! paired difference between exponential Euler and another scheme.

use super::common::{
    bundle, check_paths, closed_row, config_err, levels, mc_row, operator, path_rng, schemes, uniformity_verdict,
    Level, Probes,
};
use super::{Outcome, Row, StudyConfig, Verdict, AGREEMENT_SIGMAS, WEIGHT_FACTOR};
use crate::error::Result;
use crate::evolve::run_discrete;
use crate::noise::{check_weight, weighted_data_norm_pow};
use crate::norms::{
    collect_paths, column, dsmr_constant_p2_closed_form, dsmr_functional_pow, ratio_root,
    scheme_difference_p2_closed_form,
};
use crate::rational_calc::SchemeKind;

/// Largest `|mc - closed| / stderr` seen so far.
#[derive(Default)]
struct Agreement {
    worst: f64,
    count: usize,
    at: String,
}

impl Agreement {
    fn add(&mut self, mc: f64, se: f64, exact: f64, label: String) {
        let z = if se > 0.0 {
            (mc - exact).abs() / se
        } else if (mc - exact).abs() <= 1e-12 * exact.abs() {
            0.0
        } else {
            f64::INFINITY
        };
        self.count += 1;
        if z > self.worst || self.at.is_empty() {
            self.worst = self.worst.max(z);
            self.at = label;
        }
    }

    fn verdict(&self, name: &str) -> Option<Verdict> {
        (self.count > 0).then(|| {
            Verdict::check(
                name,
                self.worst <= AGREEMENT_SIGMAS,
                self.worst,
                AGREEMENT_SIGMAS,
                format!("{} comparisons; worst at {}", self.count, self.at),
            )
        })
    }
}

fn closed_form_enabled(cfg: &StudyConfig) -> bool {
    cfg.p == 2.0 && cfg.q == 2.0
}

/// Best probe per level: closed form where available, Monte Carlo otherwise.
struct Sup {
    value: f64,
    stderr: f64,
    probe: String,
}

impl Sup {
    fn new() -> Self {
        Sup { value: f64::NEG_INFINITY, stderr: 0.0, probe: String::new() }
    }

    fn offer(&mut self, value: f64, stderr: f64, probe: &str) {
        if value > self.value {
            *self = Sup { value, stderr, probe: probe.to_string() };
        }
    }
}

/// `dsmr_uniformity` (`weighted = false`, `alpha = 0` only) and
/// `weighted_extrapolation`.
pub(crate) fn run_uniformity(cfg: &StudyConfig, weighted: bool) -> Result<Outcome> {
    check_paths(cfg)?;
    let op = operator(cfg)?;
    let schemes = schemes(cfg, 1)?;
    let levels = levels(cfg, if weighted { 2 } else { 6 })?;
    let alphas = if weighted {
        if !cfg.alphas.contains(&0.0) || cfg.alphas.len() < 2 {
            return config_err("alphas must contain 0 and at least one other exponent");
        }
        for &a in &cfg.alphas {
            if let Err(e) = check_weight(cfg.p, a) {
                return config_err(e.to_string());
            }
        }
        cfg.alphas.clone()
    } else {
        vec![0.0]
    };
    let (m, p, q) = (op.dim(), cfg.p, cfg.q);
    let (ns, na) = (schemes.len(), alphas.len());
    let mut rows = Vec::new();
    let mut agreement = Agreement::default();
    // sups[si][ai][level]
    let mut sups = vec![vec![Vec::new(); na]; ns];
    for level in &levels {
        let probes = Probes::new(cfg.probes(), m, level)?;
        let np = probes.len();
        let paths = collect_paths(cfg.n_paths, |path| {
            let mut rng = path_rng(cfg.seed, level, m, path);
            let b = bundle(&op, level, false, &mut rng)?;
            let mut out = vec![0.0; np * na * (1 + ns)];
            for pi in 0..np {
                let g = probes.build(pi, m, level, &b)?;
                for (ai, &a) in alphas.iter().enumerate() {
                    out[pi * na + ai] = weighted_data_norm_pow(&op, &g, p, a, q)?;
                }
                for (si, s) in schemes.iter().enumerate() {
                    let y = run_discrete(&op, s, &g, &b)?;
                    for (ai, &a) in alphas.iter().enumerate() {
                        out[np * na + (si * np + pi) * na + ai] = dsmr_functional_pow(&op, &y, p, a)?;
                    }
                }
            }
            Ok(out)
        })?;
        for (si, s) in schemes.iter().enumerate() {
            for (ai, &a) in alphas.iter().enumerate() {
                let mut sup = Sup::new();
                for pi in 0..np {
                    let label = probes.specs[pi].label();
                    let data = column(&paths, pi * na + ai);
                    let num = column(&paths, np * na + (si * np + pi) * na + ai);
                    let (v, se) = ratio_root(&num, &data, p)?;
                    rows.push(Row {
                        scheme: s.name.clone(),
                        probe: label.clone(),
                        alpha: a,
                        value: v,
                        stderr: se,
                        ..mc_row(cfg, level, m, "dsmr_ratio")
                    });
                    let exact = match probes.fixed(pi) {
                        Some(g) if closed_form_enabled(cfg) => {
                            let cf = dsmr_constant_p2_closed_form(&op, s, g, a)?;
                            rows.push(Row {
                                scheme: s.name.clone(),
                                probe: label.clone(),
                                alpha: a,
                                value: cf.ratio,
                                ..closed_row(cfg, level, "dsmr_ratio_closed_form")
                            });
                            agreement.add(v, se, cf.ratio, format!("{} {} tau={:e}", s.name, label, level.tau));
                            Some(cf.ratio)
                        }
                        _ => None,
                    };
                    match exact {
                        Some(x) => sup.offer(x, 0.0, &label),
                        None => sup.offer(v, se, &label),
                    }
                }
                rows.push(Row {
                    scheme: s.name.clone(),
                    probe: sup.probe.clone(),
                    alpha: a,
                    value: sup.value,
                    stderr: sup.stderr,
                    ..mc_row(cfg, level, m, "probed_sup")
                });
                sups[si][ai].push(sup.value);
            }
        }
    }
    let taus: Vec<f64> = levels.iter().map(|l| l.tau).collect();
    let mut verdicts = Vec::new();
    for (si, s) in schemes.iter().enumerate() {
        for (ai, &a) in alphas.iter().enumerate() {
            let name = if weighted {
                format!("uniform_in_tau[{};alpha={a}]", s.name)
            } else {
                format!("uniform_in_tau[{}]", s.name)
            };
            verdicts.push(uniformity_verdict(name, &taus, &sups[si][ai]));
        }
        if weighted {
            let base = alphas.iter().position(|a| *a == 0.0).expect("checked above");
            for (ai, &a) in alphas.iter().enumerate().filter(|(ai, _)| *ai != base) {
                let worst = sups[si][ai]
                    .iter()
                    .zip(&sups[si][base])
                    .map(|(w, u)| (w / u).max(u / w))
                    .fold(0.0, f64::max);
                verdicts.push(Verdict::check(
                    format!("within_factor_of_unweighted[{};alpha={a}]", s.name),
                    worst <= WEIGHT_FACTOR,
                    worst,
                    WEIGHT_FACTOR,
                    "max over tau of the weighted/unweighted probed ratio or its inverse",
                ));
            }
        }
    }
    verdicts.extend(agreement.verdict("p2_closed_form_agreement"));
    Ok(Outcome { rows, fits: vec![], verdicts })
}

/// Paired-path `||A (Y^EE - Y^R)||_{l^p} / ||g||` for every listed scheme `R`.
pub(crate) fn run_equivalence(cfg: &StudyConfig) -> Result<Outcome> {
    check_paths(cfg)?;
    let op = operator(cfg)?;
    let schemes = schemes(cfg, 2)?;
    let Some(ee) = schemes.iter().find(|s| s.kind == SchemeKind::Exponential).cloned() else {
        return config_err("scheme_equivalence needs exponential_euler among the schemes");
    };
    let levels = levels(cfg, 2)?;
    let (m, p, q) = (op.dim(), cfg.p, cfg.q);
    let ns = schemes.len();
    let mut rows = Vec::new();
    let mut agreement = Agreement::default();
    let mut sups = vec![Vec::new(); ns];
    let mut zero_max = 0.0f64;
    let mut triangle_worst = 0.0f64;
    for level in &levels {
        let probes = Probes::new(cfg.probes(), m, level)?;
        let np = probes.len();
        // per probe: data, EE functional, then (difference, R functional) per scheme
        let stride = 2 + 2 * ns;
        let paths = collect_paths(cfg.n_paths, |path| {
            let mut rng = path_rng(cfg.seed, level, m, path);
            let b = bundle(&op, level, false, &mut rng)?;
            let mut out = vec![0.0; np * stride];
            for pi in 0..np {
                let g = probes.build(pi, m, level, &b)?;
                let o = &mut out[pi * stride..(pi + 1) * stride];
                o[0] = weighted_data_norm_pow(&op, &g, p, 0.0, q)?;
                let y_ee = run_discrete(&op, &ee, &g, &b)?;
                o[1] = dsmr_functional_pow(&op, &y_ee, p, 0.0)?;
                for (si, s) in schemes.iter().enumerate() {
                    let y = run_discrete(&op, s, &g, &b)?;
                    o[2 + 2 * si] = dsmr_functional_pow(&op, &y_ee.minus(&y)?, p, 0.0)?;
                    o[3 + 2 * si] = dsmr_functional_pow(&op, &y, p, 0.0)?;
                }
            }
            Ok(out)
        })?;
        for (si, s) in schemes.iter().enumerate() {
            let mut sup = Sup::new();
            for pi in 0..np {
                let label = probes.specs[pi].label();
                let col = |j: usize| column(&paths, pi * stride + j);
                let data = col(0);
                let diff = col(2 + 2 * si);
                let (v, se) = ratio_root(&diff, &data, p)?;
                let (r_ee, _) = ratio_root(&col(1), &data, p)?;
                let (r_s, _) = ratio_root(&col(3 + 2 * si), &data, p)?;
                rows.push(Row {
                    scheme: s.name.clone(),
                    probe: label.clone(),
                    case: format!("{} vs {}", ee.name, s.name),
                    value: v,
                    stderr: se,
                    ..mc_row(cfg, level, m, "difference_ratio")
                });
                if s.kind == SchemeKind::Exponential {
                    zero_max = zero_max.max(diff.iter().cloned().fold(0.0, f64::max));
                } else {
                    triangle_worst = triangle_worst.max(v / (r_ee + r_s));
                }
                let exact = match probes.fixed(pi) {
                    Some(g) if closed_form_enabled(cfg) && s.kind != SchemeKind::Exponential => {
                        let cf = scheme_difference_p2_closed_form(&op, &ee, s, g)?;
                        rows.push(Row {
                            scheme: s.name.clone(),
                            probe: label.clone(),
                            case: format!("{} vs {}", ee.name, s.name),
                            value: cf.ratio,
                            ..closed_row(cfg, level, "difference_ratio_closed_form")
                        });
                        agreement.add(v, se, cf.ratio, format!("{} {} tau={:e}", s.name, label, level.tau));
                        Some(cf.ratio)
                    }
                    _ => None,
                };
                match exact {
                    Some(x) => sup.offer(x, 0.0, &label),
                    None => sup.offer(v, se, &label),
                }
            }
            rows.push(Row {
                scheme: s.name.clone(),
                probe: sup.probe.clone(),
                case: format!("{} vs {}", ee.name, s.name),
                value: sup.value,
                stderr: sup.stderr,
                ..mc_row(cfg, level, m, "probed_sup")
            });
            sups[si].push(sup.value);
        }
    }
    let taus: Vec<f64> = levels.iter().map(|l: &Level| l.tau).collect();
    let mut verdicts = Vec::new();
    for (si, s) in schemes.iter().enumerate() {
        if s.kind == SchemeKind::Exponential {
            verdicts.push(Verdict::check(
                format!("identically_zero[{} vs {}]", ee.name, s.name),
                zero_max == 0.0,
                zero_max,
                0.0,
                "largest per-path difference functional",
            ));
        } else {
            verdicts.push(uniformity_verdict(format!("uniform_in_tau[{} vs {}]", ee.name, s.name), &taus, &sups[si]));
        }
    }
    verdicts.push(Verdict::check(
        "bounded_by_dsmr_constants",
        triangle_worst.is_finite() && triangle_worst <= 1.0 + 1e-9,
        triangle_worst,
        1.0,
        "difference ratio over the sum of the two schemes' DSMR ratios on the same paths",
    ));
    verdicts.extend(agreement.verdict("p2_closed_form_agreement"));
    Ok(Outcome { rows, fits: vec![], verdicts })
}
