//! Deterministic audits: scheme properties and kernel families.

use super::common::config_err;
use super::{Outcome, Row, StudyConfig, Verdict};
use crate::error::Result;
use crate::kernels::{ktau_sum, verify_family_uniform, ASeq, KernelFamily, KernelSpec};
use crate::rational_calc::{
    admissible_catalog, builtin_scheme, check_stability, detect_consistency_order, scheme_by_name,
    verify_decay_estimates, BuiltinScheme, ConsistencyOrder, EstimateGrid, SchemeFunction, StabilityGrid,
};
use std::f64::consts::{FRAC_PI_2, PI};

fn audit_row(scheme: &str, case: &str, quantity: &str, value: f64) -> Row {
    Row { scheme: scheme.to_string(), case: case.to_string(), value, ..Row::blank(quantity) }
}

fn default_audit_schemes() -> Vec<SchemeFunction> {
    let mut out = vec![builtin_scheme(BuiltinScheme::ExponentialEuler)];
    out.extend(admissible_catalog());
    out.push(builtin_scheme(BuiltinScheme::CrankNicolson));
    out.push(builtin_scheme(BuiltinScheme::ExplicitEuler));
    out
}

/// Order, stability at `pi/2` and at the declared angle, and the decay
/// estimates for schemes with `r(infinity) = 0`.
pub(crate) fn run_schemes(cfg: &StudyConfig) -> Result<Outcome> {
    let schemes = if cfg.schemes.is_empty() {
        default_audit_schemes()
    } else {
        cfg.schemes.iter().map(|s| scheme_by_name(s)).collect::<Result<Vec<_>>>()?
    };
    let n_max = cfg.n_max.unwrap_or(512);
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let grid = StabilityGrid::default();
    for s in &schemes {
        let name = s.name.as_str();
        match detect_consistency_order(s)? {
            ConsistencyOrder::Exact => rows.push(audit_row(name, "exact", "order", f64::INFINITY)),
            ConsistencyOrder::Finite { order, slope } => {
                rows.push(audit_row(name, "", "order", order as f64));
                rows.push(audit_row(name, "", "order_slope", slope));
                if let Some(d) = s.declared_order {
                    verdicts.push(Verdict::check(
                        format!("declared_order[{name}]"),
                        d == order,
                        order as f64,
                        d as f64,
                        format!("detected order {order} from slope {slope:.4}"),
                    ));
                }
            }
        }
        let half = check_stability(s, FRAC_PI_2, &grid)?;
        rows.push(audit_row(name, "theta=pi/2", "max_modulus", half.max_modulus_boundary.max(half.max_modulus_interior_sample)));
        rows.push(audit_row(name, "theta=pi/2", "stable", if half.passes { 1.0 } else { 0.0 }));
        match s.declared_angle {
            Some(theta) => {
                let at = check_stability(s, theta, &grid)?;
                let case = format!("theta={theta:.6}");
                rows.push(audit_row(name, &case, "max_modulus", at.max_modulus_boundary.max(at.max_modulus_interior_sample)));
                verdicts.push(Verdict::check(
                    format!("stable_at_declared_angle[{name}]"),
                    at.passes,
                    at.max_modulus_boundary,
                    1.0,
                    format!("declared angle {:.2} deg; at pi/2 stable = {}", theta * 180.0 / PI, half.passes),
                ));
            }
            None => {
                verdicts.push(Verdict::check(
                    format!("no_declared_angle[{name}]"),
                    !half.passes,
                    half.max_modulus_boundary,
                    1.0,
                    "scheme declares no stability angle; the audit expects it to fail at pi/2",
                ));
            }
        }
        if s.is_dsmr_admissible() {
            let theta = s.declared_angle.unwrap_or(FRAC_PI_2);
            let nu = theta - PI / 36.0;
            let reports = verify_decay_estimates(s, nu, n_max, &EstimateGrid::default())?;
            let mut ok = true;
            for r in &reports {
                let case = match r.alpha {
                    Some(a) => format!("{:?};a={a}", r.inequality_id),
                    None => format!("{:?}", r.inequality_id),
                };
                rows.push(audit_row(name, &case, "fitted_C", r.fitted_C));
                rows.push(audit_row(name, &case, "fitted_c", r.fitted_c.unwrap_or(f64::NAN)));
                rows.push(audit_row(name, &case, "refinement_ratio", r.refinement_ratio));
                ok &= r.passes;
            }
            let worst = reports.iter().map(|r| r.refinement_ratio).fold(0.0, f64::max);
            verdicts.push(Verdict::check(
                format!("decay_estimates[{name}]"),
                ok,
                worst,
                1.1,
                format!("{} inequalities at nu = {nu:.4}, n <= {n_max}", reports.len()),
            ));
        }
    }
    Ok(Outcome { rows, fits: vec![], verdicts })
}

fn a_seq_label(a: &ASeq) -> String {
    match a {
        ASeq::Power { b } => format!("power(b={b})"),
        ASeq::Psi { s } => format!("psi(s={s})"),
    }
}

/// `K_tau` membership of the reference kernels and uniform bounds for the
/// analytic families.
pub(crate) fn run_kernels(cfg: &StudyConfig) -> Result<Outcome> {
    let families = if cfg.families.is_empty() { KernelFamily::ALL_ANALYTIC.to_vec() } else { cfg.families.clone() };
    if families.iter().any(|f| matches!(f, KernelFamily::JReference | KernelFamily::Custom)) {
        return config_err("kernel_audit families must be analytic; the reference kernel is always audited");
    }
    let scheme_names = if cfg.schemes.is_empty() { vec!["implicit_euler".to_string()] } else { cfg.schemes.clone() };
    let schemes = scheme_names.iter().map(|s| scheme_by_name(s)).collect::<Result<Vec<_>>>()?;
    let a_seqs = if cfg.a_seq.is_empty() { vec![ASeq::Power { b: 1.0 }] } else { cfg.a_seq.clone() };
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();

    let mut worst_ref = 0.0f64;
    for m in [1usize, 10, 1000] {
        for tau in [2f64.powi(-10), 1.0] {
            let s = ktau_sum(&KernelSpec::j_reference(m, tau))?;
            let mut row = audit_row("", &format!("m={m}"), "reference_ktau_sum", s.sum);
            row.tau = tau;
            rows.push(row);
            worst_ref = worst_ref.max((s.sum - 1.0).abs());
        }
    }
    verdicts.push(Verdict::check("reference_kernel_sum", worst_ref <= 1e-12, worst_ref, 1e-12, "max |K_tau(k) - 1|"));

    for &family in &families {
        let scheme_opts: Vec<Option<&SchemeFunction>> =
            if family.is_rational() { schemes.iter().map(Some).collect() } else { vec![None] };
        let needs_a = !matches!(family, KernelFamily::ExpBasic | KernelFamily::RationalBasic);
        let a_opts: Vec<Option<&ASeq>> = if needs_a { a_seqs.iter().map(Some).collect() } else { vec![None] };
        for s in &scheme_opts {
            for a in &a_opts {
                let r = verify_family_uniform(family, *s, cfg.nu, cfg.sigma, *a)?;
                let scheme = s.map(|s| s.name.clone()).unwrap_or_default();
                let probe = a.map(a_seq_label).unwrap_or_default();
                let mk = |quantity: &str, value: f64| Row {
                    scheme: scheme.clone(),
                    probe: probe.clone(),
                    case: family.name().to_string(),
                    alpha: r.sigma,
                    value,
                    ..Row::blank(quantity)
                };
                rows.push(mk("sup", r.sup));
                rows.push(mk("sup_refined", r.sup_refined));
                rows.push(mk("refinement_ratio", r.refinement_ratio));
                rows.push(mk("max_tail_bound", r.max_tail_bound));
                rows.push(mk("nu", r.nu));
                if let Some(phi) = r.phi_sup {
                    rows.push(mk("phi_sup", phi));
                }
                let label = [family.name(), &scheme, &probe].iter().filter(|x| !x.is_empty()).cloned().collect::<Vec<_>>().join(";");
                verdicts.push(Verdict::check(
                    format!("uniform_bound[{label}]"),
                    r.passes,
                    r.refinement_ratio,
                    1.1,
                    format!("sup {:.6} on {} grid points, refined {:.6}", r.sup, r.grid_points, r.sup_refined),
                ));
            }
        }
    }
    Ok(Outcome { rows, fits: vec![], verdicts })
}
