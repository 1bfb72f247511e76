//! Kernels of discrete stochastic convolutions: the class `K_tau` of
//! sequences with `sum_{n>=1} sqrt(n tau) |k_{n+1} - k_n| <= 1`, the
//! exponential and rational families, their sums, and probes of the
//! convolution operators they define.
//!
//! Every family has the form `k_n = lambda^{1/2} f_n(tau lambda)`, so the
//! `K_tau` sum `|z|^{1/2} sum_n sqrt(n) |f_{n+1}(z) - f_n(z)|` depends on
//! `z = tau lambda` only.

mod laplace;
pub mod probe;

pub use laplace::{psi, ASeq, Coefficients, Geo};
pub use probe::{convex_reconstruction, operator_norm_probe, ProbeConfig, ProbeReport};

use crate::error::{param, Error, Result};
use crate::numerics::{cexpm1, clog1p, pairwise_sum};
use crate::rational_calc::{scheme_by_name, SchemeFunction, SchemeKind, SchemeLog};
use laplace::log_gl;
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;
use std::f64::consts::{FRAC_PI_4, PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `lambda^{1/2} e^{-n tau lambda}`.
    ExpBasic,
    /// `lambda^{1/2} e^{-n tau lambda} phi`.
    ExpPhi,
    /// `lambda^{1/2} (tau lambda)^{-sigma} sum_{j>n} e^{-(j-n) tau lambda} a_j`.
    ExpVariant,
    RationalBasic,
    RationalPhi,
    RationalVariant,
    /// `1_{1<=n<=m} / sqrt(m tau)`.
    JReference,
    Custom,
}

impl KernelFamily {
    pub const ALL_ANALYTIC: [KernelFamily; 6] = [
        KernelFamily::ExpBasic,
        KernelFamily::ExpPhi,
        KernelFamily::ExpVariant,
        KernelFamily::RationalBasic,
        KernelFamily::RationalPhi,
        KernelFamily::RationalVariant,
    ];

    pub fn is_rational(self) -> bool {
        matches!(self, KernelFamily::RationalBasic | KernelFamily::RationalPhi | KernelFamily::RationalVariant)
    }

    fn shape(self) -> Shape {
        match self {
            KernelFamily::ExpBasic | KernelFamily::RationalBasic => Shape::Basic,
            KernelFamily::ExpPhi | KernelFamily::RationalPhi => Shape::Phi,
            KernelFamily::ExpVariant | KernelFamily::RationalVariant => Shape::Variant,
            KernelFamily::JReference | KernelFamily::Custom => Shape::Explicit,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::ExpBasic => "exp_basic",
            KernelFamily::ExpPhi => "exp_phi",
            KernelFamily::ExpVariant => "exp_variant",
            KernelFamily::RationalBasic => "rational_basic",
            KernelFamily::RationalPhi => "rational_phi",
            KernelFamily::RationalVariant => "rational_variant",
            KernelFamily::JReference => "j_reference",
            KernelFamily::Custom => "custom",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Parameter(format!("unknown kernel family '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Basic,
    Phi,
    Variant,
    Explicit,
}

/// Bound on `|k_{n+1} - k_n|` beyond the explicit values of a custom kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelDecay {
    /// The kernel vanishes after the listed values.
    Finite,
    /// `|k_{n+1} - k_n| <= c ratio^n` for `n >= len`.
    Geometric { c: f64, ratio: f64 },
    /// `|k_{n+1} - k_n| <= c n^{-exponent}` for `n >= len`, `exponent > 3/2`.
    Power { c: f64, exponent: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomKernel {
    /// `k_1, k_2, ...`.
    pub values: Vec<f64>,
    #[serde(default)]
    pub decay: Option<KernelDecay>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub tau: f64,
    #[serde(default = "one_c")]
    pub lambda: C,
    /// Sector half-angle; defaults to `pi/4` (exponential) or `theta - pi/36` (rational).
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub a_seq: Option<ASeq>,
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub custom: Option<CustomKernel>,
}

fn one_c() -> C {
    C::new(1.0, 0.0)
}

pub fn default_sigma() -> f64 {
    0.25
}

impl KernelSpec {
    pub fn new(family: KernelFamily, tau: f64, lambda: C) -> Self {
        KernelSpec { family, tau, lambda, nu: None, sigma: default_sigma(), a_seq: None, scheme: None, m: None, custom: None }
    }

    pub fn j_reference(m: usize, tau: f64) -> Self {
        KernelSpec { m: Some(m), ..Self::new(KernelFamily::JReference, tau, one_c()) }
    }

    pub fn custom(tau: f64, values: Vec<f64>, decay: Option<KernelDecay>) -> Self {
        KernelSpec { custom: Some(CustomKernel { values, decay }), ..Self::new(KernelFamily::Custom, tau, one_c()) }
    }

    pub fn with_scheme(mut self, name: &str) -> Self {
        self.scheme = Some(name.to_string());
        self
    }

    pub fn with_a_seq(mut self, a: ASeq) -> Self {
        self.a_seq = Some(a);
        self
    }
}

/// Default sector angle for a family.
pub fn default_nu(family: KernelFamily, scheme: Option<&SchemeFunction>) -> f64 {
    match (family.is_rational(), scheme) {
        (true, Some(s)) => sector_limit(family, Some(s)) - PI / 36.0,
        _ => FRAC_PI_4,
    }
}

/// Largest admissible `nu`: `pi/2` for exponential families, the scheme's
/// stability angle (or `0` if it declares none) for rational ones.
fn sector_limit(family: KernelFamily, scheme: Option<&SchemeFunction>) -> f64 {
    match scheme {
        Some(s) if family.is_rational() => s.declared_angle.unwrap_or(0.0),
        _ => PI / 2.0,
    }
}

/// Result of a `K_tau` sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KtauSum {
    /// `sum_{n>=1} sqrt(n tau) |k_{n+1} - k_n|`, tail included.
    pub sum: f64,
    /// Estimated error of the tail part beyond the explicit terms.
    pub tail_bound: f64,
    /// Number of explicitly summed terms.
    pub n_direct: usize,
    /// The family's `phi` factor where it has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<[f64; 2]>,
}

impl KtauSum {
    /// Membership verdict for `k / normalization`.
    pub fn member(&self, normalization: f64) -> bool {
        self.sum + self.tail_bound <= normalization
    }
}

/// Explicitly summed terms before switching to the integral tail.
pub const N_DIRECT: usize = 4096;
const X_MAX: f64 = 1e16;

/// `sum_{n>=1} sqrt(n) e^{-v n}` with an error estimate for the tail.
pub fn sqrt_geometric_sum(v: f64, n_direct: usize) -> Result<(f64, f64)> {
    if !(v > 0.0) {
        return Err(Error::Analysis(format!("geometric ratio e^(-{v}) is not below one")));
    }
    let mut terms = Vec::with_capacity(n_direct);
    for n in 1..=n_direct {
        let t = (n as f64).sqrt() * (-v * n as f64).exp();
        terms.push(t);
        if t < 1e-300 {
            break;
        }
    }
    let head = pairwise_sum(&terms);
    let x0 = n_direct as f64 + 0.5;
    let y = v * x0;
    if y > 740.0 {
        return Ok((head, 0.0));
    }
    // int_{x0}^inf sqrt(x) e^{-vx} dx = v^{-3/2} Gamma(3/2, v x0)
    let tail = v.powf(-1.5) * (y.sqrt() * (-y).exp() + 0.5 * PI.sqrt() * erfc(y.sqrt()));
    // midpoint rule: |f''| <= f ((v + 1/(2x0))^2 + 1/(4 x0^2)) on the tail
    let err = tail * ((v + 0.5 / x0).powi(2) + 0.25 / (x0 * x0)) / 24.0;
    Ok((head + tail, err))
}

/// Precomputed state for evaluating one family at many `z = tau lambda`.
pub struct FamilyEvaluator<'s> {
    pub family: KernelFamily,
    pub sigma: f64,
    coef: Option<Coefficients>,
    scheme: Option<&'s SchemeFunction>,
    slog: Option<SchemeLog<'s>>,
    /// Variant tail: log nodes in `x` with weights, and `e^{-x t}` tables.
    tail: Option<TailTables>,
    diffs: Vec<f64>,
    a_vals: Vec<f64>,
}

struct TailTables {
    x: Vec<f64>,
    wx: Vec<f64>,
    table: Vec<f64>,
    x_lo: Vec<f64>,
    wx_lo: Vec<f64>,
    table_lo: Vec<f64>,
}

fn tables(coef: &Coefficients) -> TailTables {
    let x0 = N_DIRECT as f64 + 0.5;
    let build = |order: usize, low: bool| {
        let (x, wx) = log_gl(x0, X_MAX, 2, order);
        let t = coef.node_set(low);
        let mut tab = Vec::with_capacity(x.len() * t.len());
        for xi in &x {
            tab.extend(t.iter().map(|tk| (-xi * tk).exp()));
        }
        (x, wx, tab)
    };
    let (x, wx, table) = build(16, false);
    let (x_lo, wx_lo, table_lo) = build(8, true);
    TailTables { x, wx, table, x_lo, wx_lo, table_lo }
}

impl<'s> FamilyEvaluator<'s> {
    pub fn new(family: KernelFamily, sigma: f64, a_seq: Option<&ASeq>, scheme: Option<&'s SchemeFunction>) -> Result<Self> {
        let shape = family.shape();
        if shape == Shape::Explicit {
            return param("explicit kernels are evaluated from their values");
        }
        let scheme = if family.is_rational() {
            let s = scheme.ok_or_else(|| Error::Parameter(format!("{} needs a scheme", family.name())))?;
            if s.kind != SchemeKind::Rational || !s.is_dsmr_admissible() {
                return param(format!("scheme {} is not rational with r(infinity) = 0", s.name));
            }
            Some(s)
        } else {
            None
        };
        let coef = match shape {
            Shape::Phi | Shape::Variant => {
                let a = a_seq.cloned().unwrap_or(ASeq::Power { b: 1.0 });
                Some(Coefficients::new(a, sigma)?)
            }
            _ => {
                if !(sigma > 0.0 && sigma < 0.5) {
                    return param(format!("sigma = {sigma} must lie in (0, 1/2)"));
                }
                None
            }
        };
        let (tail, diffs, a_vals) = match (&coef, shape) {
            (Some(c), Shape::Variant) => (
                Some(tables(c)),
                (0..=N_DIRECT as u64 + 1).map(|j| if j == 0 { 0.0 } else { c.diff(j) }).collect(),
                (0..=N_DIRECT as u64 + 1).map(|j| if j == 0 { 0.0 } else { c.a(j) }).collect(),
            ),
            _ => (None, vec![], vec![]),
        };
        Ok(FamilyEvaluator { family, sigma, coef, scheme, slog: scheme.map(SchemeLog::new), tail, diffs, a_vals })
    }

    /// Normalizing constant `b` of the family (`1` for the basic kernels).
    pub fn normalization(&self) -> f64 {
        match (self.family.shape(), &self.coef) {
            (Shape::Phi, Some(c)) => c.bound(),
            (Shape::Variant, Some(c)) => c.diff_bound(),
            _ => 1.0,
        }
    }

    pub fn geo(&self, z: C) -> Result<Geo> {
        if !(z.re > 0.0) || !z.is_finite() {
            return Err(Error::Domain(format!("z = {z} must have positive real part")));
        }
        match (self.scheme, &self.slog) {
            (Some(s), Some(slog)) => {
                let rho = s.eval(z)?;
                let one_minus_rho = if z.norm() <= 1.0 {
                    let w = z - slog.log_ratio(z, rho);
                    -cexpm1(-w)
                } else {
                    C::new(1.0, 0.0) - rho
                };
                let v = -clog1p(-one_minus_rho).re;
                Ok(Geo { rho, one_minus_rho, v })
            }
            _ => Ok(Geo { rho: (-z).exp(), one_minus_rho: -cexpm1(-z), v: z.re }),
        }
    }

    /// `phi(z) = z^{-sigma} sum_j (rho^j - 1) a_j`.
    pub fn phi(&self, z: C) -> Result<C> {
        let c = self.coef.as_ref().ok_or_else(|| Error::Parameter("family has no coefficient sequence".into()))?;
        Ok(z.powf(-self.sigma) * c.phi_sum(&self.geo(z)?))
    }

    /// `K_tau` sum at `z = tau lambda`.
    pub fn ktau(&self, z: C) -> Result<KtauSum> {
        let g = self.geo(z)?;
        let out = match self.family.shape() {
            Shape::Basic | Shape::Phi => {
                let (gs, err) = sqrt_geometric_sum(g.v, N_DIRECT)?;
                let pre = z.norm().sqrt() * g.one_minus_rho.norm();
                let phi = if self.family.shape() == Shape::Phi { Some(self.phi(z)?) } else { None };
                let f = phi.map_or(1.0, |p| p.norm());
                KtauSum { sum: f * pre * gs, tail_bound: f * pre * err, n_direct: N_DIRECT, phi: phi.map(|p| [p.re, p.im]) }
            }
            Shape::Variant => {
                let (head, tail, err) = self.variant_sums(&g)?;
                let pre = z.norm().powf(0.5 - self.sigma);
                KtauSum { sum: pre * (head + tail), tail_bound: pre * err, n_direct: N_DIRECT, phi: None }
            }
            Shape::Explicit => unreachable!(),
        };
        if !out.sum.is_finite() {
            return Err(Error::Analysis(format!("K_tau sum diverges at z = {z}")));
        }
        Ok(out)
    }

    /// `sum_{n<=N} sqrt(n)|D_n|`, the integral tail and its error estimate.
    fn variant_sums(&self, g: &Geo) -> Result<(f64, f64, f64)> {
        let c = self.coef.as_ref().expect("variant family has coefficients");
        let tt = self.tail.as_ref().expect("variant family has tail tables");
        // D_N from the integral, then D_n = rho (d_{n+1} + D_{n+1})
        let mut d = c.shifted_sum(g, N_DIRECT as f64, true);
        let mut terms = vec![0.0; N_DIRECT];
        terms[N_DIRECT - 1] = (N_DIRECT as f64).sqrt() * d.norm();
        for n in (1..N_DIRECT).rev() {
            d = g.rho * (self.diffs[n + 1] + d);
            terms[n - 1] = (n as f64).sqrt() * d.norm();
        }
        let head = pairwise_sum(&terms);
        let integrate = |x: &[f64], wx: &[f64], tab: &[f64], low: bool| -> f64 {
            let f = c.shifted_weights(g, true, low);
            let nt = f.len();
            let vals: Vec<f64> = x
                .iter()
                .zip(wx)
                .enumerate()
                .map(|(i, (xi, wi))| {
                    let row = &tab[i * nt..(i + 1) * nt];
                    let dx: C = row.iter().zip(&f).map(|(e, fk)| fk * e).sum();
                    wi * xi.sqrt() * dx.norm()
                })
                .collect();
            pairwise_sum(&vals)
        };
        let t16 = integrate(&tt.x, &tt.wx, &tt.table, false);
        let t8 = integrate(&tt.x_lo, &tt.wx_lo, &tt.table_lo, true);
        // beyond X_MAX: D(x) ~ m0 Gamma(2+sigma) x^{-2-sigma} / (e^w - 1)
        let s = self.sigma;
        let inv_w = (g.rho / g.one_minus_rho).norm();
        let far = c.m0().abs() * gamma(2.0 + s) * inv_w * X_MAX.powf(-0.5 - s) / (0.5 + s);
        let x0 = N_DIRECT as f64 + 0.5;
        let err = (t16 - t8).abs() + t16 * 3.0 / (x0 * x0) + far;
        Ok((head, t16 + far, err))
    }

    /// `k_1, ..., k_n` at `(tau, lambda)`; index 0 holds `k_0 = 0`.
    pub fn values(&self, tau: f64, lambda: C, n: usize) -> Result<Vec<C>> {
        let z = lambda * tau;
        let g = self.geo(z)?;
        let sq = lambda.sqrt();
        let mut out = vec![C::new(0.0, 0.0); n + 1];
        match self.family.shape() {
            Shape::Basic | Shape::Phi => {
                let f = if self.family.shape() == Shape::Phi { self.phi(z)? } else { C::new(1.0, 0.0) };
                let mut p = C::new(1.0, 0.0);
                for k in out.iter_mut().skip(1) {
                    p *= g.rho;
                    *k = sq * f * p;
                }
            }
            Shape::Variant => {
                let c = self.coef.as_ref().expect("variant family has coefficients");
                // F_n = sum_{m>=1} rho^m a_{n+m} = rho (a_{n+1} + F_{n+1})
                let mut f = c.shifted_sum(&g, n as f64, false);
                let pre = sq * z.powf(-self.sigma);
                out[n] = pre * f;
                for i in (1..n).rev() {
                    let a = if i + 1 < self.a_vals.len() { self.a_vals[i + 1] } else { c.a(i as u64 + 1) };
                    f = g.rho * (a + f);
                    out[i] = pre * f;
                }
            }
            Shape::Explicit => unreachable!(),
        }
        Ok(out)
    }
}

fn check_sector(spec: &KernelSpec, nu: f64, scheme: Option<&SchemeFunction>) -> Result<()> {
    let limit = sector_limit(spec.family, scheme);
    if !(nu > 0.0 && nu < limit) {
        return param(format!("nu = {nu} must lie in (0, {limit})"));
    }
    if spec.lambda.norm() == 0.0 || spec.lambda.arg().abs() > nu + 1e-12 {
        return Err(Error::Domain(format!("lambda = {} outside the sector of angle {nu}", spec.lambda)));
    }
    if !(spec.tau > 0.0 && spec.tau.is_finite()) {
        return param(format!("tau = {} must be positive", spec.tau));
    }
    Ok(())
}

fn resolve_scheme(spec: &KernelSpec) -> Result<Option<SchemeFunction>> {
    if !spec.family.is_rational() {
        return Ok(None);
    }
    let name = spec.scheme.as_deref().unwrap_or("implicit_euler");
    Ok(Some(scheme_by_name(name)?))
}

/// Explicit `sum_{n>=1} sqrt(n tau) |k_{n+1} - k_n|` over `k_1..k_L` (zero after).
pub fn ktau_sum_explicit(k: &[C], tau: f64) -> f64 {
    let at = |i: usize| if i >= 1 && i <= k.len() { k[i - 1] } else { C::new(0.0, 0.0) };
    let terms: Vec<f64> = (1..=k.len()).map(|n| (n as f64 * tau).sqrt() * (at(n + 1) - at(n)).norm()).collect();
    pairwise_sum(&terms)
}

fn explicit_sum(spec: &KernelSpec) -> Result<KtauSum> {
    match spec.family {
        KernelFamily::JReference => {
            let m = spec.m.ok_or_else(|| Error::Parameter("j_reference needs m".into()))?;
            if m == 0 {
                return param("m must be positive");
            }
            if !(spec.tau > 0.0) {
                return param("tau must be positive");
            }
            let v = C::new(1.0 / (m as f64 * spec.tau).sqrt(), 0.0);
            let k = vec![v; m];
            Ok(KtauSum { sum: ktau_sum_explicit(&k, spec.tau), tail_bound: 0.0, n_direct: m, phi: None })
        }
        KernelFamily::Custom => {
            let ck = spec.custom.as_ref().ok_or_else(|| Error::Parameter("custom family needs values".into()))?;
            let decay = ck.decay.as_ref().ok_or_else(|| {
                Error::Parameter("custom kernel has no decay metadata, tail cannot be certified".into())
            })?;
            if ck.values.iter().any(|v| !v.is_finite()) {
                return param("custom kernel has non-finite values");
            }
            let len = ck.values.len();
            let tau = spec.tau;
            let (head, tail) = match decay {
                KernelDecay::Finite => {
                    let k: Vec<C> = ck.values.iter().map(|v| C::new(*v, 0.0)).collect();
                    (ktau_sum_explicit(&k, tau), 0.0)
                }
                KernelDecay::Geometric { c, ratio } => {
                    if !(*ratio > 0.0 && *ratio < 1.0) {
                        return param("geometric decay ratio must lie in (0, 1)");
                    }
                    let terms: Vec<f64> = (1..len)
                        .map(|n| (n as f64 * tau).sqrt() * (ck.values[n] - ck.values[n - 1]).abs())
                        .collect();
                    // sum_{n>=L} sqrt(n) ratio^n <= ratio^L sum_{i>=0} sqrt(L+i) ratio^i <= ratio^L (sqrt(L) / (1-ratio) + ratio / (1-ratio)^2)
                    let l = len.max(1) as f64;
                    let r = *ratio;
                    let bound = c * tau.sqrt() * r.powf(l) * (l.sqrt() / (1.0 - r) + r / (1.0 - r).powi(2));
                    (pairwise_sum(&terms), bound)
                }
                KernelDecay::Power { c, exponent } => {
                    if !(*exponent > 1.5) {
                        return param("power decay exponent must exceed 3/2");
                    }
                    let terms: Vec<f64> = (1..len)
                        .map(|n| (n as f64 * tau).sqrt() * (ck.values[n] - ck.values[n - 1]).abs())
                        .collect();
                    let l = len.max(1) as f64;
                    let e = *exponent;
                    let bound = c * tau.sqrt() * (l.powf(0.5 - e) + l.powf(1.5 - e) / (e - 1.5));
                    (pairwise_sum(&terms), bound)
                }
            };
            Ok(KtauSum { sum: head, tail_bound: tail, n_direct: len, phi: None })
        }
        _ => unreachable!(),
    }
}

/// `sum_{n>=1} sqrt(n tau) |k_{n+1} - k_n|` for one kernel.
pub fn ktau_sum(spec: &KernelSpec) -> Result<KtauSum> {
    if spec.family.shape() == Shape::Explicit {
        return explicit_sum(spec);
    }
    let scheme = resolve_scheme(spec)?;
    let nu = spec.nu.unwrap_or_else(|| default_nu(spec.family, scheme.as_ref()));
    check_sector(spec, nu, scheme.as_ref())?;
    let ev = FamilyEvaluator::new(spec.family, spec.sigma, spec.a_seq.as_ref(), scheme.as_ref())?;
    ev.ktau(spec.lambda * spec.tau)
}

/// Kernel values `k_0 = 0, k_1, ..., k_n`.
pub fn kernel_values(spec: &KernelSpec, n: usize) -> Result<Vec<C>> {
    match spec.family {
        KernelFamily::JReference => {
            let m = spec.m.ok_or_else(|| Error::Parameter("j_reference needs m".into()))?;
            let v = 1.0 / (m as f64 * spec.tau).sqrt();
            Ok((0..=n).map(|i| C::new(if i >= 1 && i <= m { v } else { 0.0 }, 0.0)).collect())
        }
        KernelFamily::Custom => {
            let ck = spec.custom.as_ref().ok_or_else(|| Error::Parameter("custom family needs values".into()))?;
            if n > ck.values.len() && !matches!(ck.decay, Some(KernelDecay::Finite)) {
                return Err(Error::Truncation(format!("custom kernel has {} values, {n} requested", ck.values.len())));
            }
            Ok((0..=n).map(|i| C::new(if i >= 1 && i <= ck.values.len() { ck.values[i - 1] } else { 0.0 }, 0.0)).collect())
        }
        _ => {
            let scheme = resolve_scheme(spec)?;
            let nu = spec.nu.unwrap_or_else(|| default_nu(spec.family, scheme.as_ref()));
            check_sector(spec, nu, scheme.as_ref())?;
            FamilyEvaluator::new(spec.family, spec.sigma, spec.a_seq.as_ref(), scheme.as_ref())?.values(spec.tau, spec.lambda, n)
        }
    }
}

/// Grid of `(tau, lambda)` for the uniformity scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub tau: Vec<f64>,
    pub lambda: Vec<C>,
}

impl KernelGrid {
    /// `tau = 2^k`, `k = -12..4` (17 points), and 16 moduli in `[1e-4, 1e4]`
    /// on each of the rays `arg = 0, +nu, -nu` (48 points).
    pub fn standard(nu: f64) -> Self {
        Self::with_density(nu, 1, 16)
    }

    /// One refinement: half-octave steps in `tau`, doubled modulus density.
    pub fn refined(nu: f64) -> Self {
        Self::with_density(nu, 2, 31)
    }

    fn with_density(nu: f64, per_octave: usize, moduli: usize) -> Self {
        let nt = 16 * per_octave + 1;
        let tau = (0..nt).map(|i| 2f64.powf(-12.0 + i as f64 / per_octave as f64)).collect();
        let mods = crate::numerics::log_space(1e-4, 1e4, moduli);
        let mut lambda = Vec::with_capacity(3 * moduli);
        for arg in [0.0, nu, -nu] {
            lambda.extend(mods.iter().map(|r| C::from_polar(*r, arg)));
        }
        KernelGrid { tau, lambda }
    }

    pub fn len(&self) -> usize {
        self.tau.len() * self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: KernelFamily,
    pub scheme: Option<String>,
    pub nu: f64,
    pub sigma: f64,
    pub a_seq: Option<ASeq>,
    pub normalization: f64,
    /// `sup ktau_sum / b` on the standard grid.
    pub sup: f64,
    pub sup_refined: f64,
    pub refinement_ratio: f64,
    pub worst_tau: f64,
    pub worst_lambda: [f64; 2],
    pub max_tail_bound: f64,
    /// `sup |phi|` for the `phi` families.
    pub phi_sup: Option<f64>,
    pub grid_points: usize,
    pub passes: bool,
}

struct Scan {
    sup: f64,
    at: (f64, C),
    tail: f64,
    phi: f64,
}

fn scan(ev: &FamilyEvaluator<'_>, grid: &KernelGrid) -> Result<Scan> {
    let pts: Vec<(f64, C)> = grid.tau.iter().flat_map(|&t| grid.lambda.iter().map(move |&l| (t, l))).collect();
    let vals: Vec<Result<KtauSum>> = pts.par_iter().map(|(t, l)| ev.ktau(l * t)).collect();
    let b = ev.normalization();
    let mut s = Scan { sup: 0.0, at: pts[0], tail: 0.0, phi: 0.0 };
    for (p, v) in pts.iter().zip(vals) {
        let v = v.map_err(|e| Error::Analysis(format!("at tau = {}, lambda = {}: {e}", p.0, p.1)))?;
        if v.sum / b > s.sup {
            s.sup = v.sum / b;
            s.at = *p;
        }
        s.tail = s.tail.max(v.tail_bound / b);
        if let Some([re, im]) = v.phi {
            s.phi = s.phi.max(re.hypot(im));
        }
    }
    Ok(s)
}

/// Scan a family over the standard grid and one refinement. Passes when the
/// supremum is finite and moves by less than 10% under refinement.
pub fn verify_family_uniform(
    family: KernelFamily,
    scheme: Option<&SchemeFunction>,
    nu: Option<f64>,
    sigma: f64,
    a_seq: Option<&ASeq>,
) -> Result<FamilyReport> {
    let nu = nu.unwrap_or_else(|| default_nu(family, scheme));
    let limit = sector_limit(family, scheme);
    if !(nu > 0.0 && nu < limit) {
        return param(format!("nu = {nu} must lie in (0, {limit})"));
    }
    let ev = FamilyEvaluator::new(family, sigma, a_seq, scheme)?;
    let coarse = scan(&ev, &KernelGrid::standard(nu))?;
    let fine = scan(&ev, &KernelGrid::refined(nu))?;
    let ratio = fine.sup / coarse.sup;
    let phi = matches!(family.shape(), Shape::Phi).then_some(coarse.phi.max(fine.phi));
    Ok(FamilyReport {
        family,
        scheme: scheme.map(|s| s.name.clone()),
        nu,
        sigma,
        a_seq: if matches!(family.shape(), Shape::Basic) { None } else { Some(a_seq.cloned().unwrap_or(ASeq::Power { b: 1.0 })) },
        normalization: ev.normalization(),
        sup: coarse.sup,
        sup_refined: fine.sup,
        refinement_ratio: ratio,
        worst_tau: fine.at.0,
        worst_lambda: [fine.at.1.re, fine.at.1.im],
        max_tail_bound: coarse.tail.max(fine.tail),
        phi_sup: phi,
        grid_points: KernelGrid::standard(nu).len(),
        passes: coarse.sup.is_finite() && fine.sup.is_finite() && ratio < 1.1 && ratio > 1.0 / 1.1,
    })
}

/// Worst ratios of the two elementary inequalities on a sector grid:
/// `|1 - e^{-z}| / |z|` for `Re z >= 0` and
/// `|1 - e^{-z}| / (M_nu (1 - e^{-|z| cos arg z}))` with `M_nu = 1/cos nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementaryCheck {
    pub nu: f64,
    pub points: usize,
    pub max_mean_value_ratio: f64,
    pub max_pulling_ratio: f64,
    pub passes: bool,
}

pub fn check_elementary_inequalities(nu: f64, points: usize) -> Result<ElementaryCheck> {
    if !(nu > 0.0 && nu < PI / 2.0) {
        return param("nu must lie in (0, pi/2)");
    }
    let side = (points as f64).sqrt().ceil() as usize;
    let mods = crate::numerics::log_space(1e-6, 1e3, side);
    let m_nu = 1.0 / nu.cos();
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut count = 0;
    for i in 0..side {
        // arguments spread over [-nu, nu] including both edges
        let arg = -nu + 2.0 * nu * i as f64 / (side - 1).max(1) as f64;
        for r in &mods {
            let z = C::from_polar(*r, arg);
            let lhs = cexpm1(-z).norm();
            a = a.max(lhs / z.norm());
            let c = z.norm() * arg.cos();
            b = b.max(lhs / (m_nu * -(-c).exp_m1()));
            count += 1;
        }
    }
    // the mean-value bound holds on the whole closed right half-plane
    for r in &mods {
        for arg in [PI / 2.0, -PI / 2.0] {
            let z = C::from_polar(*r, arg);
            a = a.max(cexpm1(-z).norm() / z.norm());
            count += 1;
        }
    }
    let tol = 1.0 + 1e-12;
    Ok(ElementaryCheck { nu, points: count, max_mean_value_ratio: a, max_pulling_ratio: b, passes: a <= tol && b <= tol })
}

/// `sup j^{1+sigma} |psi(j,s)|` and `sup j^{2+sigma} |psi(j+1,s) - psi(j,s)|`
/// over `j <= j_max` and the given `s` values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiCheck {
    pub sigma: f64,
    pub j_max: u64,
    pub sup_value: f64,
    pub sup_difference: f64,
    pub passes: bool,
}

pub fn check_psi_properties(sigma: f64, j_max: u64, s_grid: &[f64]) -> Result<PsiCheck> {
    if !(sigma > 0.0 && sigma < 0.5) {
        return param("sigma must lie in (0, 1/2)");
    }
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for &s in s_grid {
        for j in 1..=j_max {
            let jf = j as f64;
            let p = psi(jf, s, sigma);
            a = a.max(jf.powf(1.0 + sigma) * p.abs());
            b = b.max(jf.powf(2.0 + sigma) * (psi(jf + 1.0, s, sigma) - p).abs());
        }
    }
    Ok(PsiCheck { sigma, j_max, sup_value: a, sup_difference: b, passes: a.is_finite() && b.is_finite() && a <= 0.5 * (1.0 + 1e-9) && b <= 0.5 * (1.0 + sigma) * (1.0 + 1e-6) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_exp_basic(z: f64, tau: f64) -> f64 {
        let lam = z / tau;
        let k = |n: f64| lam.sqrt() * (-n * z).exp();
        let terms: Vec<f64> = (1..6_000_000u64)
            .map(|n| (n as f64 * tau).sqrt() * (k(n as f64 + 1.0) - k(n as f64)).abs())
            .collect();
        pairwise_sum(&terms)
    }

    #[test]
    fn exp_basic_matches_direct_summation() {
        for &z in &[1e-5, 0.01, 1.0, 5.0] {
            let tau = 0.5;
            let spec = KernelSpec::new(KernelFamily::ExpBasic, tau, C::new(z / tau, 0.0));
            let s = ktau_sum(&spec).unwrap();
            let d = direct_exp_basic(z, tau);
            assert!((s.sum - d).abs() < 1e-9 * d, "z {z}: {} vs {d}", s.sum);
        }
    }

    #[test]
    fn j_reference_sums_to_one() {
        for &m in &[1usize, 10, 1000] {
            for &tau in &[2f64.powi(-10), 1.0] {
                let s = ktau_sum(&KernelSpec::j_reference(m, tau)).unwrap();
                assert!((s.sum - 1.0).abs() < 1e-12, "m {m} tau {tau}: {}", s.sum);
            }
        }
    }

    #[test]
    fn zero_and_custom_kernels() {
        let z = ktau_sum(&KernelSpec::custom(0.1, vec![0.0; 5], Some(KernelDecay::Finite))).unwrap();
        assert_eq!(z.sum, 0.0);
        assert!(ktau_sum(&KernelSpec::custom(0.1, vec![1.0; 5], None)).is_err());
        let g = ktau_sum(&KernelSpec::custom(1.0, vec![1.0, 0.5, 0.25], Some(KernelDecay::Geometric { c: 0.25, ratio: 0.5 }))).unwrap();
        assert!(g.tail_bound > 0.0 && g.sum > 0.0);
    }

    #[test]
    fn rational_basic_with_exp_like_scheme_is_close_to_exp() {
        // pade(2,4) matches e^{-z} to sixth order: nearly identical sums for small z
        let s = scheme_by_name("pade_2_4").unwrap();
        let ev_r = FamilyEvaluator::new(KernelFamily::RationalBasic, 0.25, None, Some(&s)).unwrap();
        let ev_e = FamilyEvaluator::new(KernelFamily::ExpBasic, 0.25, None, None).unwrap();
        for &z in &[1e-6, 1e-3, 0.05] {
            let z = C::new(z, 0.0);
            let (a, b) = (ev_r.ktau(z).unwrap().sum, ev_e.ktau(z).unwrap().sum);
            assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn variant_matches_direct_for_moderate_z() {
        let ev = FamilyEvaluator::new(KernelFamily::ExpVariant, 0.25, Some(&ASeq::Power { b: 1.0 }), None).unwrap();
        let z = C::new(0.3, 0.1);
        let s = ev.ktau(z).unwrap();
        // direct: k_n from kernel values, differences summed
        let tau = 1.0;
        let n = 2_000_000;
        let k = ev.values(tau, z, n).unwrap();
        let head: Vec<f64> = (1..n).map(|i| (i as f64).sqrt() * (k[i + 1] - k[i]).norm()).collect();
        // beyond n: D_i ~ d_i rho / (1 - rho), d_i ~ (1 + sigma) i^{-2-sigma}
        let rho = (-z).exp();
        let far = (rho / (1.0 - rho)).norm() * 1.25 * (n as f64 - 0.5).powf(-0.75) / 0.75 * z.norm().powf(0.25);
        let direct = pairwise_sum(&head) + far;
        assert!((s.sum - direct).abs() < 1e-6 * direct, "{} vs {direct}", s.sum);
    }

    #[test]
    fn phi_family_values_and_bound() {
        let ev = FamilyEvaluator::new(KernelFamily::ExpPhi, 0.25, Some(&ASeq::Power { b: 1.0 }), None).unwrap();
        let z = C::new(2.0, 0.0);
        let phi = ev.phi(z).unwrap();
        let direct: f64 = (1..1_000_000u64).map(|j| (((-2.0 * j as f64).exp()) - 1.0) * (j as f64).powf(-1.25)).sum::<f64>()
            - (1e6f64).powf(-0.25) / 0.25;
        assert!((phi.re * 2f64.powf(0.25) - direct).abs() < 1e-6, "{phi} vs {direct}");
    }

    #[test]
    fn elementary_inequalities_hold() {
        let r = check_elementary_inequalities(PI / 4.0, 10_000).unwrap();
        assert!(r.passes, "{r:?}");
    }

    #[test]
    fn psi_properties_hold() {
        let r = check_psi_properties(0.25, 2000, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!(r.passes, "{r:?}");
    }

    #[test]
    fn family_parse() {
        assert_eq!("rational_phi".parse::<KernelFamily>().unwrap(), KernelFamily::RationalPhi);
        assert!("nope".parse::<KernelFamily>().is_err());
    }
}
