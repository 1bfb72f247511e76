//! Positive diagonal operators `A e_k = lambda_k e_k` on a sequence model of
//! `X_0`: `l^2` when `q = 2`, `l^q` otherwise. All functional calculus acts
//! per eigenvalue and is therefore exact.

use crate::error::{param, Error, Result};
use crate::numerics::pairwise_sum;
use crate::rational_calc::SchemeFunction;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagonalOperator {
    eigenvalues: Vec<f64>,
    q_exponent: f64,
}

/// Operator section of a study config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorSpec {
    DirichletLaplacian { modes: usize, length: f64 },
    Explicit { eigenvalues: Vec<f64> },
}

pub const MAX_MODES: usize = 4096;

impl OperatorSpec {
    pub fn build(&self, q: f64) -> Result<DiagonalOperator> {
        let op = match self {
            OperatorSpec::DirichletLaplacian { modes, length } => make_dirichlet_laplacian(*modes, *length)?,
            OperatorSpec::Explicit { eigenvalues } => DiagonalOperator::new(eigenvalues.clone())?,
        };
        op.with_q(q)
    }
}

/// `lambda_k = (pi k / L)^2`, `k = 1..M`.
pub fn make_dirichlet_laplacian(m: usize, length: f64) -> Result<DiagonalOperator> {
    if m == 0 || !(length > 0.0) || !length.is_finite() {
        return param(format!("dirichlet_laplacian needs M >= 1 and L > 0 (got {m}, {length})"));
    }
    if m > MAX_MODES {
        return param(format!("{m} modes exceeds the cap of {MAX_MODES}"));
    }
    let ev = (1..=m)
        .map(|k| (std::f64::consts::PI * k as f64 / length).powi(2))
        .collect();
    DiagonalOperator::new(ev)
}

impl DiagonalOperator {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return param("empty spectrum");
        }
        if eigenvalues.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return param("eigenvalues must be finite and positive");
        }
        if eigenvalues.windows(2).any(|w| w[1] <= w[0]) {
            return param("eigenvalues must be strictly increasing");
        }
        Ok(DiagonalOperator { eigenvalues, q_exponent: 2.0 })
    }

    pub fn with_q(mut self, q: f64) -> Result<Self> {
        if !(q >= 2.0 && q.is_finite()) {
            return param(format!("q = {q} must be >= 2"));
        }
        self.q_exponent = q;
        Ok(self)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn q(&self) -> f64 {
        self.q_exponent
    }

    /// `(f(A) x)_k = f(lambda_k) x_k`.
    pub fn apply_spectral<F: Fn(f64) -> f64>(&self, f: F, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        self.eigenvalues
            .iter()
            .zip(x)
            .map(|(&l, &v)| {
                let m = f(l);
                if m.is_finite() {
                    Ok(m * v)
                } else {
                    Err(Error::Domain(format!("spectral function undefined at lambda = {l}")))
                }
            })
            .collect()
    }

    pub fn semigroup(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if t < 0.0 {
            return param("semigroup time must be >= 0");
        }
        self.apply_spectral(|l| (-t * l).exp(), x)
    }

    pub fn frac_power(&self, alpha: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(-1.0..=1.0).contains(&alpha) {
            return param(format!("fractional power {alpha} outside [-1, 1]"));
        }
        self.apply_spectral(|l| l.powf(alpha), x)
    }

    pub fn scheme_step(&self, scheme: &SchemeFunction, tau: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.apply_spectral(|l| scheme.eval_real(tau * l), x)
    }

    /// Multipliers `r(tau lambda_k)`.
    pub fn scheme_multipliers(&self, scheme: &SchemeFunction, tau: f64) -> Result<Vec<f64>> {
        let ones = vec![1.0; self.dim()];
        self.scheme_step(scheme, tau, &ones)
    }

    /// `||A^alpha x||_{X_0}`.
    pub fn space_norm(&self, x: &[f64], alpha: f64) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.space_norm_unchecked(x, alpha))
    }

    pub(crate) fn space_norm_unchecked(&self, x: &[f64], alpha: f64) -> f64 {
        let q = self.q_exponent;
        let terms: Vec<f64> = self
            .eigenvalues
            .iter()
            .zip(x)
            .map(|(&l, &v)| {
                let s = if alpha == 0.0 {
                    v.abs()
                } else if alpha == 1.0 {
                    (l * v).abs()
                } else {
                    l.powf(alpha) * v.abs()
                };
                if q == 2.0 { s * s } else { s.powf(q) }
            })
            .collect();
        let sum = pairwise_sum(&terms);
        if q == 2.0 { sum.sqrt() } else { sum.powf(1.0 / q) }
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return param(format!("vector of length {} for operator of dim {}", x.len(), self.dim()));
        }
        Ok(())
    }

    /// Trace-space norm of `D_A(alpha, p)` realised as
    /// `||x|| + (int_0^inf (t^{1-alpha} ||A e^{-tA} x||)^p dt/t)^{1/p}`.
    pub fn trace_norm(&self, x: &[f64], alpha: f64, p: f64, quad: &TraceQuadrature) -> Result<f64> {
        self.check_len(x)?;
        let ev = TraceNormEvaluator::new(self, alpha, p, quad)?;
        Ok(ev.eval(x))
    }
}

/// Log-grid trapezoid rule in `ln t` over `[t_lo / lambda_M, t_hi / lambda_1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceQuadrature {
    pub points_per_decade: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub rel_tol: f64,
}

impl Default for TraceQuadrature {
    fn default() -> Self {
        TraceQuadrature { points_per_decade: 40, t_lo: 1e-12, t_hi: 1e3, rel_tol: 1e-6 }
    }
}

enum TraceForm {
    /// Integral is `sum_k w_k |x_k|^p` (p = q, or p = 2 with q = 2).
    Diagonal(Vec<f64>),
    /// `q = 2, p = 4`: integral is `sum_{k,l} G_{kl} x_k^2 x_l^2`.
    Gram(Vec<f64>),
    /// General case: node table of `t^{(1-alpha) p}` and `(lambda_k e^{-t lambda_k})^q`.
    Nodes { weights: Vec<f64>, table: Vec<f64> },
}

/// Precomputed quadrature for repeated trace-norm evaluations on one
/// operator. The quadrature is checked for convergence against the grid
/// with twice the density at construction.
pub struct TraceNormEvaluator {
    alpha: f64,
    p: f64,
    q: f64,
    dim: usize,
    eigenvalues: Vec<f64>,
    form: TraceForm,
}

fn log_nodes(op: &DiagonalOperator, quad: &TraceQuadrature, density: usize) -> (Vec<f64>, f64) {
    let lo = (quad.t_lo / op.eigenvalues[op.dim() - 1]).ln();
    let hi = (quad.t_hi / op.eigenvalues[0]).ln();
    let n = (((hi - lo) / std::f64::consts::LN_10) * density as f64).ceil() as usize + 1;
    let h = (hi - lo) / (n - 1) as f64;
    ((0..n).map(|i| (lo + h * i as f64).exp()).collect(), h)
}

impl TraceNormEvaluator {
    pub fn new(op: &DiagonalOperator, alpha: f64, p: f64, quad: &TraceQuadrature) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return param(format!("trace index alpha = {alpha} must lie in (0, 1)"));
        }
        if !(p >= 2.0 && p.is_finite()) {
            return param(format!("p = {p} must be >= 2"));
        }
        let q = op.q();
        let build = |density: usize| -> TraceForm {
            let (ts, h) = log_nodes(op, quad, density);
            let n = ts.len();
            let tw: Vec<f64> = ts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    end * h * t.powf((1.0 - alpha) * p)
                })
                .collect();
            let lam = &op.eigenvalues;
            if p == q || (q == 2.0 && p == 2.0) {
                let w = lam
                    .iter()
                    .map(|&l| {
                        let s: Vec<f64> = ts.iter().zip(&tw).map(|(t, w)| w * (l * (-t * l).exp()).powf(p)).collect();
                        pairwise_sum(&s)
                    })
                    .collect();
                TraceForm::Diagonal(w)
            } else if q == 2.0 && p == 4.0 {
                let m = lam.len();
                let mut g = vec![0.0; m * m];
                for k in 0..m {
                    for l in k..m {
                        let s: Vec<f64> = ts
                            .iter()
                            .zip(&tw)
                            .map(|(t, w)| {
                                w * (lam[k] * lam[l]).powi(2) * (-2.0 * t * (lam[k] + lam[l])).exp()
                            })
                            .collect();
                        let v = pairwise_sum(&s);
                        g[k * m + l] = v;
                        g[l * m + k] = v;
                    }
                }
                TraceForm::Gram(g)
            } else {
                let mut table = Vec::with_capacity(n * lam.len());
                for t in &ts {
                    for &l in lam {
                        table.push((l * (-t * l).exp()).powf(q));
                    }
                }
                TraceForm::Nodes { weights: tw, table }
            }
        };
        let coarse = build(quad.points_per_decade);
        let fine = build(2 * quad.points_per_decade);
        let change = match (&coarse, &fine) {
            (TraceForm::Diagonal(a), TraceForm::Diagonal(b)) | (TraceForm::Gram(a), TraceForm::Gram(b)) => a
                .iter()
                .zip(b)
                .map(|(x, y)| if *y > 0.0 { (x - y).abs() / y } else { 0.0 })
                .fold(0.0, f64::max),
            _ => {
                let probe = vec![1.0; op.dim()];
                let a = form_integral(&coarse, &probe, p, q, op.dim());
                let b = form_integral(&fine, &probe, p, q, op.dim());
                (a - b).abs() / b
            }
        };
        if !(change <= quad.rel_tol) {
            return Err(Error::Numeric(format!(
                "trace-norm quadrature changed by {change:e} under refinement"
            )));
        }
        Ok(TraceNormEvaluator { alpha, p, q, dim: op.dim(), eigenvalues: op.eigenvalues.clone(), form: coarse })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `int_0^inf (t^{1-alpha} ||A e^{-tA} x||)^p dt/t` by quadrature.
    pub fn integral(&self, x: &[f64]) -> f64 {
        form_integral(&self.form, x, self.p, self.q, self.dim)
    }

    /// Full trace norm: `||x||_{X_0}` plus the `p`-th root of the integral.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let base = {
            let s: Vec<f64> = x.iter().map(|v| v.abs().powf(self.q)).collect();
            pairwise_sum(&s).powf(1.0 / self.q)
        };
        base + self.integral(x).powf(1.0 / self.p)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

fn form_integral(form: &TraceForm, x: &[f64], p: f64, q: f64, m: usize) -> f64 {
    match form {
        TraceForm::Diagonal(w) => {
            let s: Vec<f64> = w.iter().zip(x).map(|(w, v)| w * v.abs().powf(p)).collect();
            pairwise_sum(&s)
        }
        TraceForm::Gram(g) => {
            let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
            let mut acc = 0.0;
            for k in 0..m {
                let row = &g[k * m..(k + 1) * m];
                let inner: f64 = row.iter().zip(&x2).map(|(a, b)| a * b).sum();
                acc += x2[k] * inner;
            }
            acc
        }
        TraceForm::Nodes { weights, table } => {
            let mut acc = 0.0;
            for (i, w) in weights.iter().enumerate() {
                let row = &table[i * m..(i + 1) * m];
                let s: f64 = row.iter().zip(x).map(|(a, v)| a * v.abs().powf(q)).sum();
                acc += w * s.powf(p / q);
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational_calc::{builtin_scheme, BuiltinScheme};
    use std::f64::consts::PI;

    #[test]
    fn laplacian_spectra() {
        assert_eq!(make_dirichlet_laplacian(1, PI).unwrap().eigenvalues(), &[1.0]);
        let op = make_dirichlet_laplacian(3, PI).unwrap();
        for (a, b) in op.eigenvalues().iter().zip([1.0, 4.0, 9.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let op = make_dirichlet_laplacian(64, 1.0).unwrap();
        assert!((op.eigenvalues()[0] - PI * PI).abs() < 1e-12);
        assert!((op.eigenvalues()[63] - (64.0 * PI).powi(2)).abs() < 1e-8);
        assert!(make_dirichlet_laplacian(0, 1.0).is_err());
        assert!(DiagonalOperator::new(vec![2.0, 1.0]).is_err());
        assert!(DiagonalOperator::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn spectral_specialisations() {
        let op = DiagonalOperator::new(vec![4.0]).unwrap();
        assert_eq!(op.semigroup(0.0, &[3.0]).unwrap(), vec![3.0]);
        assert_eq!(op.frac_power(0.5, &[1.0]).unwrap(), vec![2.0]);
        let one = DiagonalOperator::new(vec![1.0]).unwrap();
        let ie = builtin_scheme(BuiltinScheme::ImplicitEuler);
        assert_eq!(one.scheme_step(&ie, 1.0, &[1.0]).unwrap(), vec![0.5]);
        assert!(op.apply_spectral(|l| 1.0 / (l - 4.0), &[1.0]).is_err());
    }

    #[test]
    fn space_norm_examples() {
        let op = DiagonalOperator::new(vec![1.0, 4.0]).unwrap();
        assert_eq!(op.space_norm(&[1.0, 0.0], 0.0).unwrap(), 1.0);
        assert!((op.space_norm(&[1.0, 1.0], 1.0).unwrap() - 17f64.sqrt()).abs() < 1e-15);
        let op9 = DiagonalOperator::new(vec![9.0]).unwrap();
        assert!((op9.space_norm(&[2.0], 0.5).unwrap() - 6.0).abs() < 1e-15);
    }

    #[test]
    fn trace_norm_closed_form() {
        // 1 + (int_0^inf e^{-2t} dt)^{1/2} = 1 + 1/sqrt(2)
        let op = DiagonalOperator::new(vec![1.0]).unwrap();
        let v = op.trace_norm(&[1.0], 0.5, 2.0, &TraceQuadrature::default()).unwrap();
        assert!((v - (1.0 + 0.5f64.sqrt())).abs() < 1e-9, "{v}");
        assert_eq!(op.trace_norm(&[0.0], 0.5, 2.0, &TraceQuadrature::default()).unwrap(), 0.0);
    }

    #[test]
    fn trace_norm_gram_matches_gamma_closed_form() {
        // q = 2, p = 4: G_kl = l_k^2 l_l^2 Gamma(s) / (2(l_k + l_l))^s, s = 4(1 - alpha)
        let op = DiagonalOperator::new(vec![0.5, 3.0, 40.0]).unwrap();
        let alpha = 0.625;
        let ev = TraceNormEvaluator::new(&op, alpha, 4.0, &TraceQuadrature::default()).unwrap();
        let x: [f64; 3] = [0.3, -1.2, 0.7];
        let s = 4.0 * (1.0 - alpha);
        let g = statrs::function::gamma::gamma(s);
        let lam = op.eigenvalues();
        let mut exact = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                exact += (x[k] * x[l]).powi(2) * (lam[k] * lam[l]).powi(2) * g / (2.0 * (lam[k] + lam[l])).powf(s);
            }
        }
        assert!((ev.integral(&x) - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn trace_norm_general_form_matches_gram() {
        let op = DiagonalOperator::new(vec![0.5, 3.0, 40.0]).unwrap();
        let gram = TraceNormEvaluator::new(&op, 0.4, 4.0, &TraceQuadrature::default()).unwrap();
        let opq = op.clone().with_q(2.0).unwrap();
        let x = [1.0, 0.5, -0.25];
        // p = 3 uses the node table; compare against direct quadrature
        let gen = TraceNormEvaluator::new(&opq, 0.4, 3.0, &TraceQuadrature::default()).unwrap();
        let direct = {
            let (ts, h) = log_nodes(&opq, &TraceQuadrature::default(), 400);
            let n = ts.len();
            let mut acc = 0.0;
            for (i, t) in ts.iter().enumerate() {
                let e = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                let nrm: f64 = opq.eigenvalues().iter().zip(&x).map(|(l, v)| (l * (-t * l).exp() * v).powi(2)).sum::<f64>().sqrt();
                acc += e * h * (t.powf(0.6) * nrm).powi(3);
            }
            acc
        };
        assert!((gen.integral(&x) - direct).abs() < 1e-8 * direct);
        assert!(gram.integral(&x) > 0.0);
    }
}
