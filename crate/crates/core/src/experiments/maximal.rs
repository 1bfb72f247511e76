//! Maximal estimates: `E sup_n ||Y_n||^p` in trace spaces against the
//! weighted data norm, and the second-moment bound in the Hilbert case.

use super::common::{bundle, check_paths, config_err, levels, mc_row, operator, path_rng, schemes, uniformity_verdict, Probes};
use super::{Outcome, Row, StudyConfig, Verdict, AGREEMENT_SIGMAS, DOOB_BOUND};
use crate::error::Result;
use crate::evolve::run_discrete;
use crate::noise::weighted_data_norm_pow;
use crate::norms::{collect_paths, column, ratio_root, SupTraceEvaluator};
use crate::spectral_operator::TraceQuadrature;

pub(crate) fn run(cfg: &StudyConfig) -> Result<Outcome> {
    check_paths(cfg)?;
    let op = operator(cfg)?;
    let schemes = schemes(cfg, 1)?;
    let levels = levels(cfg, 2)?;
    let (m, p, q) = (op.dim(), cfg.p, cfg.q);
    let hilbert = p == 2.0;
    let alphas = if cfg.alphas.is_empty() { vec![0.0] } else { cfg.alphas.clone() };
    if hilbert && (q != 2.0 || alphas != [0.0]) {
        return config_err("p = 2 is the Hilbert case: it needs q = 2 and alpha = 0");
    }
    let quad = TraceQuadrature::default();
    let evaluators = alphas
        .iter()
        .map(|&a| SupTraceEvaluator::new(&op, p, a, &quad))
        .collect::<Result<Vec<_>>>()
        .or_else(|e| config_err(e.to_string()))?;
    let (ns, na) = (schemes.len(), alphas.len());
    let mut rows = Vec::new();
    // sups[si][ai][functional][level]
    let mut sups = vec![vec![[Vec::new(), Vec::new()]; na]; ns];
    let mut doob_worst = f64::NEG_INFINITY;
    let mut doob_at = String::new();
    for level in &levels {
        let probes = Probes::new(cfg.probes(), m, level)?;
        let np = probes.len();
        // per probe and alpha: data; per scheme: (regularized^p, weighted^p)
        let stride = na * (1 + 2 * ns);
        let paths = collect_paths(cfg.n_paths, |path| {
            let mut rng = path_rng(cfg.seed, level, m, path);
            let b = bundle(&op, level, false, &mut rng)?;
            let mut out = vec![0.0; np * stride];
            for pi in 0..np {
                let g = probes.build(pi, m, level, &b)?;
                let o = &mut out[pi * stride..(pi + 1) * stride];
                for (ai, &a) in alphas.iter().enumerate() {
                    o[ai] = weighted_data_norm_pow(&op, &g, p, a, q)?;
                }
                for (si, s) in schemes.iter().enumerate() {
                    let y = run_discrete(&op, s, &g, &b)?;
                    for (ai, ev) in evaluators.iter().enumerate() {
                        let v = ev.eval(&y);
                        let base = na + (si * na + ai) * 2;
                        o[base] = v.regularized.powf(p);
                        o[base + 1] = v.weighted.powf(p);
                    }
                }
            }
            Ok(out)
        })?;
        for (si, s) in schemes.iter().enumerate() {
            for (ai, &a) in alphas.iter().enumerate() {
                let mut best = [(f64::NEG_INFINITY, 0.0, String::new()), (f64::NEG_INFINITY, 0.0, String::new())];
                for pi in 0..np {
                    let label = probes.specs[pi].label();
                    let data = column(&paths, pi * stride + ai);
                    let base = pi * stride + na + (si * na + ai) * 2;
                    let kinds: &[(usize, &str)] = if hilbert {
                        &[(0, "sup_half_norm_ratio")]
                    } else {
                        &[(0, "sup_regularized_ratio"), (1, "sup_weighted_ratio")]
                    };
                    for &(f, quantity) in kinds {
                        let (v, se) = ratio_root(&column(&paths, base + f), &data, p)?;
                        rows.push(Row {
                            scheme: s.name.clone(),
                            probe: label.clone(),
                            alpha: a,
                            value: v,
                            stderr: se,
                            ..mc_row(cfg, level, m, quantity)
                        });
                        if v > best[f].0 {
                            best[f] = (v, se, label.clone());
                        }
                    }
                    if hilbert {
                        // E sup ||A^{1/2} Y_n||^2 / E ||g||^2 itself, not its root
                        let (v, se) = ratio_root(&column(&paths, base), &data, 1.0)?;
                        rows.push(Row {
                            scheme: s.name.clone(),
                            probe: label.clone(),
                            value: v,
                            stderr: se,
                            ..mc_row(cfg, level, m, "second_moment_ratio")
                        });
                        let slack = v - DOOB_BOUND - AGREEMENT_SIGMAS * se;
                        if slack > doob_worst {
                            doob_worst = slack;
                            doob_at = format!("{} {} tau={:e}: {v:.4} +- {se:.4}", s.name, label, level.tau);
                        }
                    }
                }
                let functionals = if hilbert { 1 } else { 2 };
                for (f, b) in best.iter().enumerate().take(functionals) {
                    rows.push(Row {
                        scheme: s.name.clone(),
                        probe: b.2.clone(),
                        alpha: a,
                        value: b.0,
                        stderr: b.1,
                        case: if f == 0 { "regularized" } else { "weighted" }.to_string(),
                        ..mc_row(cfg, level, m, "probed_sup")
                    });
                    sups[si][ai][f].push(b.0);
                }
            }
        }
    }
    let taus: Vec<f64> = levels.iter().map(|l| l.tau).collect();
    let mut verdicts = Vec::new();
    for (si, s) in schemes.iter().enumerate() {
        for (ai, &a) in alphas.iter().enumerate() {
            let names: &[&str] = if hilbert { &["half_norm"] } else { &["regularized", "weighted"] };
            for (f, n) in names.iter().enumerate() {
                verdicts.push(uniformity_verdict(format!("uniform_in_tau[{};{n};alpha={a}]", s.name), &taus, &sups[si][ai][f]));
            }
        }
    }
    if hilbert {
        verdicts.push(Verdict::check(
            "second_moment_bound",
            doob_worst <= 0.0,
            doob_worst + DOOB_BOUND,
            DOOB_BOUND,
            format!("largest ratio minus {AGREEMENT_SIGMAS} stderr is reported as metric; worst at {doob_at}"),
        ));
    }
    Ok(Outcome { rows, fits: vec![], verdicts })
}
