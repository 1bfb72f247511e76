//! Exact power-series arithmetic over the rationals.

use super::factorial;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// First `terms` Taylor coefficients of `num / den` (`den[0] != 0`).
pub fn series_div(num: &[BigRational], den: &[BigRational], terms: usize) -> Vec<BigRational> {
    assert!(!den[0].is_zero(), "series division needs den(0) != 0");
    let mut out: Vec<BigRational> = Vec::with_capacity(terms);
    for i in 0..terms {
        let mut acc = num.get(i).cloned().unwrap_or_else(BigRational::zero);
        for j in 1..=i.min(den.len() - 1) {
            acc -= &den[j] * &out[i - j];
        }
        out.push(acc / &den[0]);
    }
    out
}

/// Taylor coefficients of `e^{s z}` for `s = +-1`.
pub fn exp_series(sign: i64, terms: usize) -> Vec<BigRational> {
    (0..terms)
        .map(|i| {
            let c = BigRational::new(1.into(), factorial(i as u32));
            if sign < 0 && i % 2 == 1 { -c } else { c }
        })
        .collect()
}

/// Truncated product of two series.
pub fn mul_trunc(a: &[BigRational], b: &[BigRational], terms: usize) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); terms];
    for (i, x) in a.iter().enumerate().take(terms) {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(terms - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Exact evaluation of a polynomial at a rational point.
pub fn eval_exact(c: &[BigRational], z: &BigRational) -> BigRational {
    c.iter().rev().fold(BigRational::zero(), |acc, a| acc * z + a)
}

/// Coefficients of `N(z) e^{z} - D(z)`, whose leading `l + 1` terms vanish
/// for a scheme of order `l`. Dividing by `D` gives `r(z) e^{z} - 1`.
pub fn defect_series(num: &[BigRational], den: &[BigRational], terms: usize) -> Vec<BigRational> {
    let e = exp_series(1, terms);
    let mut s = mul_trunc(num, &e, terms);
    for (i, d) in den.iter().enumerate().take(terms) {
        s[i] -= d;
    }
    s
}

pub fn is_one(x: &BigRational) -> bool {
    x.is_one()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn geometric_series() {
        let s = series_div(&[q(1, 1)], &[q(1, 1), q(-1, 1)], 6);
        assert!(s.iter().all(is_one));
    }

    #[test]
    fn exp_times_exp_neg_is_one() {
        let p = mul_trunc(&exp_series(1, 10), &exp_series(-1, 10), 10);
        assert!(is_one(&p[0]));
        assert!(p[1..].iter().all(|x| x.is_zero()));
    }

    #[test]
    fn pade_0_2_defect_starts_at_cubic() {
        // 1/(1+z+z^2/2) - e^{-z} = z^3/6 + O(z^4)
        let r = series_div(&[q(1, 1)], &[q(1, 1), q(1, 1), q(1, 2)], 5);
        let e = exp_series(-1, 5);
        assert_eq!(&r[..3], &e[..3]);
        assert_eq!(&r[3] - &e[3], q(1, 6));
    }
}
