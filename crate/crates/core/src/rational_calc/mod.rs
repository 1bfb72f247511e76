//! Scheme functions `r(z)` approximating `e^{-z}`.
//!
//! A scheme `R_tau = r(tau A)` is consistent of order `l` when
//! `|r(z) - e^{-z}| <= C |z|^{l+1}` near zero and `A(theta)`-stable when
//! `|r(z)| <= 1` on the sector `|arg z| <= theta`. Rational schemes are stored
//! with exact rational coefficients (used for series work and order
//! detection) and `f64` copies (used for evaluation).

mod estimates;
mod order;
mod partial;
pub mod series;
mod stability;

pub use estimates::{verify_decay_estimates, EstimateGrid, EstimateReport, InequalityId, SchemeLog};
pub use order::{detect_consistency_order, order_slope, ConsistencyOrder};
pub use partial::{partial_fractions, reconstruct, PartialFractions};
pub use stability::{check_stability, StabilityGrid, StabilityReport};

use crate::error::{param, Error, Result};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Exponential,
    Rational,
}

/// Pole of `r` at `z = -a`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Pole {
    pub a: Complex64,
    pub order: usize,
}

impl Pole {
    pub fn location(&self) -> Complex64 {
        -self.a
    }
}

/// Coefficient `gamma_{j,k}` of `(a_j + z)^{-k}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Residue {
    pub pole: usize,
    pub power: usize,
    pub coeff: Complex64,
}

#[derive(Clone, Debug)]
pub struct SchemeFunction {
    pub name: String,
    pub kind: SchemeKind,
    /// Ascending powers.
    pub numerator_coeffs: Vec<f64>,
    pub denominator_coeffs: Vec<f64>,
    pub poles: Vec<Pole>,
    pub residue_table: Vec<Residue>,
    /// `r(infinity)`; infinite for polynomial fixtures.
    pub gamma_infinity: Complex64,
    pub declared_order: Option<u32>,
    pub declared_angle: Option<f64>,
    exact_num: Vec<BigRational>,
    exact_den: Vec<BigRational>,
}

fn trim(mut c: Vec<BigRational>) -> Vec<BigRational> {
    while c.len() > 1 && c.last().is_some_and(|x| x.is_zero()) {
        c.pop();
    }
    c
}

fn to_f64(c: &[BigRational]) -> Vec<f64> {
    c.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}

impl SchemeFunction {
    /// The exponential Euler marker `r(z) = e^{-z}`.
    pub fn exponential() -> Self {
        SchemeFunction {
            name: "exponential_euler".into(),
            kind: SchemeKind::Exponential,
            numerator_coeffs: vec![],
            denominator_coeffs: vec![],
            poles: vec![],
            residue_table: vec![],
            gamma_infinity: Complex64::new(0.0, 0.0),
            declared_order: None,
            declared_angle: Some(FRAC_PI_2),
            exact_num: vec![],
            exact_den: vec![],
        }
    }

    /// A rational scheme `N/D`. Requires `deg N <= deg D`; poles and the
    /// residue table are computed on construction.
    pub fn rational(
        name: &str,
        num: Vec<BigRational>,
        den: Vec<BigRational>,
        declared_order: Option<u32>,
        declared_angle: Option<f64>,
    ) -> Result<Self> {
        let num = trim(num);
        let den = trim(den);
        if num.is_empty() || den.is_empty() || den.iter().all(|c| c.is_zero()) {
            return param("numerator and denominator must be non-empty and the denominator nonzero");
        }
        if num.len() > den.len() {
            return param(format!(
                "deg(numerator) = {} exceeds deg(denominator) = {}",
                num.len() - 1,
                den.len() - 1
            ));
        }
        let mut s = SchemeFunction {
            name: name.into(),
            kind: SchemeKind::Rational,
            numerator_coeffs: to_f64(&num),
            denominator_coeffs: to_f64(&den),
            poles: vec![],
            residue_table: vec![],
            gamma_infinity: Complex64::new(0.0, 0.0),
            declared_order,
            declared_angle,
            exact_num: num,
            exact_den: den,
        };
        let pf = partial_fractions(&s)?;
        s.poles = pf.poles;
        s.residue_table = pf.residues;
        s.gamma_infinity = pf.gamma_infinity;
        if let Some(theta) = declared_angle {
            if let Some(p) = s.poles.iter().find(|p| p.location().arg().abs() <= theta) {
                return Err(Error::Parameter(format!(
                    "pole at {} lies in the closed sector of angle {theta}",
                    p.location()
                )));
            }
        }
        Ok(s)
    }

    /// Polynomial `r` (no denominator). Only used as a negative fixture: it
    /// has no canonical partial-fraction form and is never stable.
    fn polynomial_fixture(name: &str, num: Vec<BigRational>, declared_order: Option<u32>) -> Self {
        let num = trim(num);
        let one = vec![BigRational::from_integer(1.into())];
        let grows = num.len() > 1;
        SchemeFunction {
            name: name.into(),
            kind: SchemeKind::Rational,
            numerator_coeffs: to_f64(&num),
            denominator_coeffs: vec![1.0],
            poles: vec![],
            residue_table: vec![],
            gamma_infinity: if grows {
                Complex64::new(f64::INFINITY, 0.0)
            } else {
                Complex64::new(num[0].to_f64().unwrap_or(f64::NAN), 0.0)
            },
            declared_order,
            declared_angle: None,
            exact_num: num,
            exact_den: one,
        }
    }

    /// Rational scheme from floating point coefficients (converted exactly).
    pub fn from_f64_coeffs(name: &str, num: &[f64], den: &[f64]) -> Result<Self> {
        let conv = |c: &[f64]| -> Result<Vec<BigRational>> {
            c.iter()
                .map(|&x| {
                    BigRational::from_float(x)
                        .ok_or_else(|| Error::Parameter(format!("non-finite coefficient {x}")))
                })
                .collect()
        };
        Self::rational(name, conv(num)?, conv(den)?, None, None)
    }

    /// Parse the two-line coefficient file format
    /// `num: c0 c1 ...` / `den: c0 c1 ...` (ascending powers).
    pub fn parse_coefficient_file(name: &str, text: &str) -> Result<Self> {
        let mut num = None;
        let mut den = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::Parameter(format!("malformed line `{line}`")))?;
            let coeffs = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parameter(format!("`{t}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            match key.trim() {
                "num" => num = Some(coeffs),
                "den" => den = Some(coeffs),
                k => return param(format!("unknown key `{k}`")),
            }
        }
        match (num, den) {
            (Some(n), Some(d)) => Self::from_f64_coeffs(name, &n, &d),
            _ => param("coefficient file needs both `num:` and `den:` lines"),
        }
    }

    pub fn exact_numerator(&self) -> &[BigRational] {
        &self.exact_num
    }

    pub fn exact_denominator(&self) -> &[BigRational] {
        &self.exact_den
    }

    /// `r(infinity) = 0`, the standing assumption of the maximal regularity
    /// results. Crank–Nicolson fails this.
    pub fn is_dsmr_admissible(&self) -> bool {
        self.gamma_infinity.norm() == 0.0
    }

    /// `r(z)`, or an error at a pole.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        match self.kind {
            SchemeKind::Exponential => Ok((-z).exp()),
            SchemeKind::Rational => {
                let d = horner_c(&self.denominator_coeffs, z);
                let scale: f64 = self
                    .denominator_coeffs
                    .iter()
                    .rev()
                    .fold(0.0, |acc, c| acc * z.norm() + c.abs());
                if d.norm() <= 4.0 * f64::EPSILON * scale {
                    return Err(Error::Domain(format!("{} evaluated at a pole z = {z}", self.name)));
                }
                Ok(horner_c(&self.numerator_coeffs, z) / d)
            }
        }
    }

    /// `r(x)` for real `x`; NaN at a pole.
    #[inline]
    pub fn eval_real(&self, x: f64) -> f64 {
        match self.kind {
            SchemeKind::Exponential => (-x).exp(),
            SchemeKind::Rational => horner(&self.numerator_coeffs, x) / horner(&self.denominator_coeffs, x),
        }
    }

    /// Order used by the estimates: declared if present, otherwise detected.
    pub fn order(&self) -> Result<u32> {
        if let Some(l) = self.declared_order {
            return Ok(l);
        }
        match detect_consistency_order(self)? {
            ConsistencyOrder::Exact => Ok(u32::MAX),
            ConsistencyOrder::Finite { order, .. } => Ok(order),
        }
    }
}

#[inline]
pub(crate) fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

#[inline]
pub(crate) fn horner_c(c: &[f64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

pub(crate) fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::from(1), |acc, k| acc * k)
}

/// Padé approximant `P_n / Q_m` of `e^{-z}`:
/// `P_n(z) = sum_j (n+m-j)! n! / ((n+m)! j! (n-j)!) (-z)^j`,
/// `Q_m(z) = sum_j (n+m-j)! m! / ((n+m)! j! (m-j)!) z^j`.
pub fn pade_coefficients(n: u32, m: u32) -> (Vec<BigRational>, Vec<BigRational>) {
    let nm = factorial(n + m);
    let p = (0..=n)
        .map(|j| {
            let c = BigRational::new(
                factorial(n + m - j) * factorial(n),
                nm.clone() * factorial(j) * factorial(n - j),
            );
            if j % 2 == 1 { -c } else { c }
        })
        .collect();
    let q = (0..=m)
        .map(|j| {
            BigRational::new(
                factorial(n + m - j) * factorial(m),
                nm.clone() * factorial(j) * factorial(m - j),
            )
        })
        .collect();
    (p, q)
}

/// Sub-diagonal Padé scheme `r_{n,m}`, `m in {n+1, n+2}`, `n <= 4`.
/// Order `2n+1` resp. `2n+2`, `A(pi/2)`-stable, `r(infinity) = 0`.
pub fn build_pade_subdiagonal(n: u32, m: u32) -> Result<SchemeFunction> {
    if n > 4 || (m != n + 1 && m != n + 2) {
        return param(format!("unsupported Padé pair ({n}, {m}); need n <= 4 and m in {{n+1, n+2}}"));
    }
    let (p, q) = pade_coefficients(n, m);
    let name = if (n, m) == (0, 1) { "implicit_euler".to_string() } else { format!("pade_{n}_{m}") };
    SchemeFunction::rational(&name, p, q, Some(n + m), Some(FRAC_PI_2))
}

/// Stability angle of `r_{0,3}` in radians (88.23 degrees).
pub const PADE_0_3_ANGLE: f64 = 88.23 * std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinScheme {
    ExponentialEuler,
    ImplicitEuler,
    CrankNicolson,
    Pade03,
    ExplicitEuler,
}

impl FromStr for BuiltinScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exponential_euler" | "ee" => BuiltinScheme::ExponentialEuler,
            "implicit_euler" | "ie" => BuiltinScheme::ImplicitEuler,
            "crank_nicolson" | "cn" => BuiltinScheme::CrankNicolson,
            "pade_0_3" => BuiltinScheme::Pade03,
            "explicit_euler" => BuiltinScheme::ExplicitEuler,
            _ => return param(format!("unknown scheme `{s}`")),
        })
    }
}

pub fn builtin_scheme(which: BuiltinScheme) -> SchemeFunction {
    let q = |a: i64, b: i64| BigRational::new(a.into(), b.into());
    let built = match which {
        BuiltinScheme::ExponentialEuler => Ok(SchemeFunction::exponential()),
        BuiltinScheme::ImplicitEuler => build_pade_subdiagonal(0, 1),
        BuiltinScheme::CrankNicolson => SchemeFunction::rational(
            "crank_nicolson",
            vec![q(1, 1), q(-1, 2)],
            vec![q(1, 1), q(1, 2)],
            Some(2),
            Some(FRAC_PI_2),
        ),
        BuiltinScheme::Pade03 => {
            let (p, d) = pade_coefficients(0, 3);
            SchemeFunction::rational("pade_0_3", p, d, Some(3), Some(PADE_0_3_ANGLE))
        }
        BuiltinScheme::ExplicitEuler => Ok(SchemeFunction::polynomial_fixture(
            "explicit_euler",
            vec![q(1, 1), q(-1, 1)],
            Some(1),
        )),
    };
    built.expect("catalog schemes are well formed")
}

/// Resolve a scheme name: builtin names, their short aliases, or `pade_n_m`.
pub fn scheme_by_name(name: &str) -> Result<SchemeFunction> {
    if let Ok(b) = name.parse::<BuiltinScheme>() {
        return Ok(builtin_scheme(b));
    }
    let parts: Vec<&str> = name.split('_').collect();
    if parts.len() == 3 && parts[0] == "pade" {
        let n: u32 = parts[1].parse().map_err(|_| Error::Parameter(format!("bad scheme `{name}`")))?;
        let m: u32 = parts[2].parse().map_err(|_| Error::Parameter(format!("bad scheme `{name}`")))?;
        return build_pade_subdiagonal(n, m);
    }
    param(format!("unknown scheme `{name}`"))
}

/// Rational catalog schemes with `r(infinity) = 0`.
pub fn admissible_catalog() -> Vec<SchemeFunction> {
    let mut out = vec![builtin_scheme(BuiltinScheme::ImplicitEuler)];
    for (n, m) in [(0, 2), (1, 2), (1, 3), (2, 3), (2, 4)] {
        out.push(build_pade_subdiagonal(n, m).expect("catalog"));
    }
    out.push(builtin_scheme(BuiltinScheme::Pade03));
    out
}
