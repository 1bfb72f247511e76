//! Completely monotone coefficient sequences `a_j = int_0^inf mu(t) e^{-jt} dt`
//! and the sums over them that the kernel families need.
//!
//! With `rho = e^{-w}`, `Re w > 0`, every sum collapses to a single integral:
//!
//! ```text
//! sum_{m>=1} rho^m a_{n+m}            = int mu(t) e^{-nt} / (e^{w+t} - 1) dt
//! sum_{m>=1} rho^m (a_{n+m}-a_{n+m+1}) = int mu(t) e^{-nt} (1 - e^{-t}) / (e^{w+t} - 1) dt
//! sum_{j>=1} (rho^j - 1) a_j           = int mu(t) [1/(e^{w+t}-1) - 1/(e^t-1)] dt
//! ```
//!
//! which stay accurate when `|w|` is tiny and the sums have millions of
//! significant terms.

use crate::error::{param, Result};
use crate::numerics::gauss_legendre_unit;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

/// Coefficient sequence of the `phi` and variant families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ASeq {
    /// `a_j = b j^{-(1+sigma)}`.
    Power { b: f64 },
    /// `a_j = psi(j, s)`, the coefficients of the fractional-derivative kernels.
    Psi { s: f64 },
}

/// `psi(j, s) = int_0^{1-s} (1-s-r) (j+r)^{-1-sigma} dr` in closed form.
pub fn psi(j: f64, s: f64, sigma: f64) -> f64 {
    let u = 1.0 - s;
    if u <= 0.0 {
        return 0.0;
    }
    let eps = u / j;
    if eps < 0.1 {
        // j^{1-sigma} int_0^eps (eps-y)(1+y)^{-1-sigma} dy, binomial series
        let mut c = 1.0;
        let mut pw = eps * eps;
        let mut acc = 0.0;
        for k in 0..40 {
            let term = c * pw / ((k + 1) as f64 * (k + 2) as f64);
            acc += term;
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
            c *= (-1.0 - sigma - k as f64) / (k + 1) as f64;
            pw *= eps;
        }
        j.powf(1.0 - sigma) * acc
    } else {
        let ju = j + u;
        ju * (j.powf(-sigma) - ju.powf(-sigma)) / sigma - (ju.powf(1.0 - sigma) - j.powf(1.0 - sigma)) / (1.0 - sigma)
    }
}

/// `(e^{-ut} - 1 + ut) / t^2`.
fn h_u(u: f64, t: f64) -> f64 {
    let x = u * t;
    if x < 1e-3 {
        u * u * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0)
    } else {
        ((-x).exp_m1() + x) / (t * t)
    }
}

/// `rho`, `1 - rho` (accurate) and `-ln |rho|` of a geometric ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geo {
    pub rho: C,
    pub one_minus_rho: C,
    pub v: f64,
}

/// `1/(e^{w+t} - 1) = rho e^{-t} / (1 - e^{-t} + e^{-t}(1 - rho))`.
#[inline]
fn inv_shift(g: &Geo, t: f64, et: f64) -> C {
    g.rho * et / (C::new(-(-t).exp_m1(), 0.0) + g.one_minus_rho * et)
}

/// `1/(e^{w+t}-1) - 1/(e^t-1) = -e^t (1-rho) / ((e^t - 1 + 1 - rho)(e^t - 1))`.
#[inline]
fn phi_integrand(g: &Geo, t: f64) -> C {
    let em1 = t.exp_m1();
    -g.one_minus_rho * (em1 + 1.0) / ((g.one_minus_rho + em1) * em1)
}

/// Log-spaced Gauss-Legendre nodes on `[lo, hi]`, weights include `dt`.
pub(crate) fn log_gl(lo: f64, hi: f64, panels_per_decade: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre_unit(order);
    let (a, b) = (lo.ln(), hi.ln());
    let panels = (((b - a) / std::f64::consts::LN_10) * panels_per_decade as f64).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    let mut ts = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        for (xi, wi) in x.iter().zip(&w) {
            let t = (a + h * (p as f64 + xi)).exp();
            ts.push(t);
            ws.push(wi * h * t);
        }
    }
    (ts, ws)
}

const T_LO: f64 = 1e-22;
const T_HI: f64 = 60.0;

/// A coefficient sequence with its Laplace density on a fixed node set.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub seq: ASeq,
    pub sigma: f64,
    t: Vec<f64>,
    /// `w_i mu(t_i)`.
    mw: Vec<f64>,
    /// Same on the half-order rule, for error estimates.
    t_lo_order: Vec<f64>,
    mw_lo_order: Vec<f64>,
    /// `mu(t) ~ m0 t^sigma` as `t -> 0`.
    m0: f64,
}

impl Coefficients {
    pub fn new(seq: ASeq, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 0.5) {
            return param(format!("sigma = {sigma} must lie in (0, 1/2)"));
        }
        match seq {
            ASeq::Power { b } if !(b >= 0.0 && b.is_finite()) => return param("coefficient bound b must be >= 0"),
            ASeq::Psi { s } if !(0.0..=1.0).contains(&s) => return param("psi parameter s must lie in [0, 1]"),
            _ => {}
        }
        let g1 = gamma(1.0 + sigma);
        let mu = |t: f64| -> f64 {
            match seq {
                ASeq::Power { b } => b * t.powf(sigma) / g1,
                ASeq::Psi { s } => t.powf(sigma) * h_u(1.0 - s, t) / g1,
            }
        };
        let m0 = match seq {
            ASeq::Power { b } => b / g1,
            ASeq::Psi { s } => (1.0 - s) * (1.0 - s) / (2.0 * g1),
        };
        let (t, w) = log_gl(T_LO, T_HI, 2, 16);
        let mw = t.iter().zip(&w).map(|(t, w)| w * mu(*t)).collect();
        let (t8, w8) = log_gl(T_LO, T_HI, 2, 8);
        let mw8 = t8.iter().zip(&w8).map(|(t, w)| w * mu(*t)).collect();
        Ok(Coefficients { seq, sigma, t, mw, t_lo_order: t8, mw_lo_order: mw8, m0 })
    }

    pub fn a(&self, j: u64) -> f64 {
        let jf = j as f64;
        match self.seq {
            ASeq::Power { b } => b * jf.powf(-1.0 - self.sigma),
            ASeq::Psi { s } => psi(jf, s, self.sigma),
        }
    }

    /// `a_j - a_{j+1}`.
    pub fn diff(&self, j: u64) -> f64 {
        let jf = j as f64;
        match self.seq {
            ASeq::Power { b } => {
                let s = 1.0 + self.sigma;
                b * jf.powf(-s) * -(-s * (1.0 / jf).ln_1p()).exp_m1()
            }
            ASeq::Psi { s } => psi(jf, s, self.sigma) - psi(jf + 1.0, s, self.sigma),
        }
    }

    /// `b` with `|a_j| <= b j^{-1-sigma}`.
    pub fn bound(&self) -> f64 {
        match self.seq {
            ASeq::Power { b } => b,
            ASeq::Psi { s } => 0.5 * (1.0 - s) * (1.0 - s),
        }
    }

    /// `b'` with `|a_j - a_{j+1}| <= b' j^{-2-sigma}`.
    pub fn diff_bound(&self) -> f64 {
        (1.0 + self.sigma) * self.bound()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.t
    }

    /// `sum_{j>=1} (rho^j - 1) a_j`.
    pub fn phi_sum(&self, g: &Geo) -> C {
        let body: C = self.t.iter().zip(&self.mw).map(|(&t, &mw)| phi_integrand(g, t) * mw).sum();
        // below T_LO: mu ~ m0 t^sigma and the bracket ~ 1/(e^w-1) + 1/2 - 1/t
        let s = self.sigma;
        let inv_w = g.rho / g.one_minus_rho;
        let head = self.m0 * ((inv_w + 0.5) * T_LO.powf(1.0 + s) / (1.0 + s) - T_LO.powf(s) / s);
        body + head
    }

    /// Integrand weights `w_i mu(t_i) (1 - e^{-t_i})^diff / (e^{w+t_i} - 1)`.
    pub(crate) fn shifted_weights(&self, g: &Geo, differenced: bool, low_order: bool) -> Vec<C> {
        let (t, mw) = if low_order { (&self.t_lo_order, &self.mw_lo_order) } else { (&self.t, &self.mw) };
        t.iter()
            .zip(mw)
            .map(|(&t, &mw)| {
                let et = (-t).exp();
                let f = inv_shift(g, t, et) * mw;
                if differenced { f * -(-t).exp_m1() } else { f }
            })
            .collect()
    }

    pub(crate) fn node_set(&self, low_order: bool) -> &[f64] {
        if low_order { &self.t_lo_order } else { &self.t }
    }

    /// `sum_{m>=1} rho^m c_{x+m}` at real `x`, with `c = a` or `c = diff`.
    pub fn shifted_sum(&self, g: &Geo, x: f64, differenced: bool) -> C {
        let f = self.shifted_weights(g, differenced, false);
        self.t.iter().zip(&f).map(|(&t, fi)| fi * (-x * t).exp()).sum()
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }
}
