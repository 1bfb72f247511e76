use super::series::{eval_exact, exp_series, series_div};
use super::{SchemeFunction, SchemeKind};
use crate::error::{Error, Result};
use crate::numerics::linear_fit;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyOrder {
    /// The exponential scheme: `r = exp`.
    Exact,
    Finite { order: u32, slope: f64 },
}

const TAYLOR_TERMS: usize = 60;

/// Raw log-log slope of `|r(z) - e^{-z}|` over `z = 10^{-k}`, `k = 2..6`.
///
/// Both `r(z)` and the truncated exponential series are evaluated exactly;
/// the neglected tail is below `10^{-2 * 60} / 60!`.
pub fn order_slope(scheme: &SchemeFunction) -> Result<Option<f64>> {
    if scheme.kind == SchemeKind::Exponential {
        return Ok(None);
    }
    let e = exp_series(-1, TAYLOR_TERMS);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 2..=6u32 {
        let z = BigRational::new(1.into(), num_bigint::BigInt::from(10u32).pow(k));
        let d = eval_exact(scheme.exact_denominator(), &z);
        if d.is_zero() {
            return Err(Error::Analysis(format!("pole at z = 1e-{k}")));
        }
        let r = eval_exact(scheme.exact_numerator(), &z) / d;
        let diff = (r - eval_exact(&e, &z)).abs();
        let v = diff.to_f64().unwrap_or(0.0);
        if v <= 0.0 {
            return Err(Error::Analysis(format!("difference underflows at z = 1e-{k}")));
        }
        xs.push(-(k as f64) * std::f64::consts::LN_10);
        ys.push(v.ln());
    }
    Ok(Some(linear_fit(&xs, &ys).0))
}

/// Consistency order `l` from the slope fit, cross-checked against the
/// first `l + 2` Taylor coefficients of `r` computed by exact division.
pub fn detect_consistency_order(scheme: &SchemeFunction) -> Result<ConsistencyOrder> {
    let slope = match order_slope(scheme)? {
        None => return Ok(ConsistencyOrder::Exact),
        Some(s) => s,
    };
    let rounded = slope.round();
    if (slope - rounded).abs() > 0.05 {
        return Err(Error::Analysis(format!("slope {slope} is not within 0.05 of an integer")));
    }
    if rounded < 1.0 {
        return Err(Error::Analysis(format!("r(0) != 1 (slope {slope}); scheme is not consistent")));
    }
    let order = rounded as u32 - 1;
    let terms = order as usize + 2;
    let r = series_div(scheme.exact_numerator(), scheme.exact_denominator(), terms);
    let e = exp_series(-1, terms);
    let first_diff = (0..terms).find(|&i| r[i] != e[i]);
    if first_diff != Some(order as usize + 1) {
        return Err(Error::Analysis(format!(
            "slope {slope} suggests order {order} but the series differ first at {first_diff:?}"
        )));
    }
    Ok(ConsistencyOrder::Finite { order, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational_calc::{build_pade_subdiagonal, builtin_scheme, BuiltinScheme};

    fn order(s: &SchemeFunction) -> u32 {
        match detect_consistency_order(s).unwrap() {
            ConsistencyOrder::Finite { order, slope } => {
                assert!((slope - (order as f64 + 1.0)).abs() < 0.05);
                order
            }
            ConsistencyOrder::Exact => panic!("exact"),
        }
    }

    #[test]
    fn catalog_orders() {
        assert_eq!(order(&builtin_scheme(BuiltinScheme::ImplicitEuler)), 1);
        assert_eq!(order(&builtin_scheme(BuiltinScheme::Pade03)), 3);
        assert_eq!(order(&builtin_scheme(BuiltinScheme::CrankNicolson)), 2);
        assert_eq!(order(&builtin_scheme(BuiltinScheme::ExplicitEuler)), 1);
        for n in 0..=2 {
            assert_eq!(order(&build_pade_subdiagonal(n, n + 1).unwrap()), 2 * n + 1);
            assert_eq!(order(&build_pade_subdiagonal(n, n + 2).unwrap()), 2 * n + 2);
        }
        assert_eq!(
            detect_consistency_order(&builtin_scheme(BuiltinScheme::ExponentialEuler)).unwrap(),
            ConsistencyOrder::Exact
        );
    }

    #[test]
    fn inconsistent_scheme_is_rejected() {
        let s = SchemeFunction::from_f64_coeffs("half", &[0.5], &[1.0, 1.0]).unwrap();
        assert!(detect_consistency_order(&s).is_err());
    }
}
