//! Brownian increments, exact exponentially weighted integrals, step
//! processes `g` and data-side norms.
//!
//! For an X-mode `k` driven by H-mode `m` the pair
//! `(dW_j, E_{j,k})`, `E_{j,k} = int_{t_j}^{t_{j+1}} e^{-lambda_k (t_{j+1}-s)} dW^m(s)`,
//! is Gaussian with
//!
//! ```text
//! Var dW = tau,  Var E = (1 - e^{-2x}) / (2 lambda),  Cov = (1 - e^{-x}) / lambda,  x = lambda tau
//! ```
//!
//! so the mild solution can be sampled exactly on the same path as the scheme.

use crate::error::{param, Error, Result};
use crate::numerics::{one_minus_exp_over_x, pairwise_sum};
use crate::spectral_operator::DiagonalOperator;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Piecewise constant integrand on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StepProcess {
    n_steps: usize,
    m_x: usize,
    m_h: usize,
    tau: f64,
    values: Vec<f64>,
    diagonal: bool,
}

/// Coefficients of one time slice `g_n`.
#[derive(Clone, Copy, Debug)]
pub enum GSlice<'a> {
    /// `g_n e_m = d_m e_m`.
    Diagonal(&'a [f64]),
    /// Row-major `M_X x M_H`.
    Dense { values: &'a [f64], m_h: usize },
}

impl StepProcess {
    /// Diagonal coupling: H-mode `k` drives X-mode `k`. `values` is `N x M`.
    pub fn diagonal(tau: f64, n_steps: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_steps * m {
            return param(format!("expected {} values, got {}", n_steps * m, values.len()));
        }
        Self::checked(StepProcess { n_steps, m_x: m, m_h: m, tau, values, diagonal: true })
    }

    /// Full coupling matrix per step, `values` is `N x M_X x M_H`.
    pub fn dense(tau: f64, n_steps: usize, m_x: usize, m_h: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_steps * m_x * m_h {
            return param(format!("expected {} values, got {}", n_steps * m_x * m_h, values.len()));
        }
        Self::checked(StepProcess { n_steps, m_x, m_h, tau, values, diagonal: false })
    }

    fn checked(s: Self) -> Result<Self> {
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return param(format!("step size {} must be positive", s.tau));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return param("step process has non-finite values");
        }
        Ok(s)
    }

    pub fn zero(tau: f64, n_steps: usize, m: usize) -> Self {
        StepProcess { n_steps, m_x: m, m_h: m, tau, values: vec![0.0; n_steps * m], diagonal: true }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn m_x(&self) -> usize {
        self.m_x
    }
    pub fn m_h(&self) -> usize {
        self.m_h
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn total_time(&self) -> f64 {
        self.n_steps as f64 * self.tau
    }
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, n: usize) -> GSlice<'_> {
        if self.diagonal {
            GSlice::Diagonal(&self.values[n * self.m_x..(n + 1) * self.m_x])
        } else {
            let w = self.m_x * self.m_h;
            GSlice::Dense { values: &self.values[n * w..(n + 1) * w], m_h: self.m_h }
        }
    }

    /// `out_k = (g_n dW)_k = sum_m g_{n,k,m} dW_m`.
    #[inline]
    pub fn apply(&self, n: usize, dw: &[f64], out: &mut [f64]) {
        match self.slice(n) {
            GSlice::Diagonal(d) => {
                for ((o, g), w) in out.iter_mut().zip(d).zip(dw) {
                    *o = g * w;
                }
            }
            GSlice::Dense { values, m_h } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let row = &values[k * m_h..(k + 1) * m_h];
                    *o = row.iter().zip(dw).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// Scaled copy `c g`.
    pub fn scaled(&self, c: f64) -> Self {
        StepProcess { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    /// Sum of two processes on the same grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n_steps != other.n_steps || self.m_x != other.m_x || self.m_h != other.m_h || self.diagonal != other.diagonal {
            return param("processes live on different grids");
        }
        Ok(StepProcess {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            ..self.clone()
        })
    }

    /// Squared row norms `||g_n^* e_k||^2` of slice `n`.
    pub fn row_norms_sq(&self, n: usize, out: &mut [f64]) {
        match self.slice(n) {
            GSlice::Diagonal(d) => {
                for (o, g) in out.iter_mut().zip(d) {
                    *o = g * g;
                }
            }
            GSlice::Dense { values, m_h } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = values[k * m_h..(k + 1) * m_h].iter().map(|a| a * a).sum();
                }
            }
        }
    }
}

/// Per-path noise: increments `dW` (`N x M_H`) and, optionally, the exact
/// integrals `E` (`N x M_X`) for the diagonal coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle {
    pub n_steps: usize,
    pub m_h: usize,
    pub m_x: usize,
    pub tau: f64,
    pub dw: Vec<f64>,
    pub e: Option<Vec<f64>>,
}

impl PathBundle {
    pub fn dw_step(&self, n: usize) -> &[f64] {
        &self.dw[n * self.m_h..(n + 1) * self.m_h]
    }

    pub fn e_step(&self, n: usize) -> Option<&[f64]> {
        self.e.as_ref().map(|e| &e[n * self.m_x..(n + 1) * self.m_x])
    }
}

/// Joint moments of `(dW, E)` for one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuMoments {
    pub var_e: f64,
    pub cov: f64,
    /// `Var E - Cov^2 / tau`, the conditional variance given `dW`.
    pub residual: f64,
}

pub fn ou_moments(lambda: f64, tau: f64) -> OuMoments {
    let x = lambda * tau;
    let var_e = tau * one_minus_exp_over_x(2.0 * x);
    let cov = tau * one_minus_exp_over_x(x);
    let residual = if x < 1e-3 {
        tau * x * x * (1.0 / 12.0 - x / 6.0 + 17.0 * x * x / 360.0)
    } else {
        var_e - cov * cov / tau
    };
    OuMoments { var_e, cov, residual }
}

/// How X-modes are driven by H-modes.
#[derive(Clone, Debug, PartialEq)]
pub enum Coupling {
    /// X-mode `k` is driven by H-mode `k`.
    Diagonal,
    /// X-mode `k` is driven by H-mode `map[k]`; must be injective.
    Map(Vec<usize>),
}

/// Sample one path. `dW` is drawn first (so it does not depend on whether
/// `E` is requested); the conditional parts of `E` follow.
pub fn sample_bundle<R: Rng>(
    spectrum: &[f64],
    n_steps: usize,
    tau: f64,
    m_h: usize,
    coupling: &Coupling,
    with_e: bool,
    rng: &mut R,
) -> Result<PathBundle> {
    if !(tau > 0.0 && tau.is_finite()) {
        return param(format!("step size {tau} must be positive"));
    }
    let m_x = spectrum.len();
    let driver: Vec<usize> = match coupling {
        Coupling::Diagonal => {
            if m_h != m_x {
                return param("diagonal coupling needs M_H = M_X");
            }
            (0..m_x).collect()
        }
        Coupling::Map(map) => {
            if map.len() != m_x || map.iter().any(|&m| m >= m_h) {
                return param("coupling map has wrong length or out-of-range entries");
            }
            let mut seen = vec![false; m_h];
            for &m in map {
                if std::mem::replace(&mut seen[m], true) {
                    return param("coupling map must be injective");
                }
            }
            map.clone()
        }
    };
    let sd = tau.sqrt();
    let dw: Vec<f64> = (0..n_steps * m_h)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let e = if with_e {
        let moments: Vec<OuMoments> = spectrum.iter().map(|&l| ou_moments(l, tau)).collect();
        for (k, m) in moments.iter().enumerate() {
            if !(m.residual >= 0.0) || !m.var_e.is_finite() {
                return Err(Error::Numeric(format!(
                    "covariance of (dW, E) not positive semidefinite for lambda = {} tau = {tau}",
                    spectrum[k]
                )));
            }
        }
        let mut e = vec![0.0; n_steps * m_x];
        for j in 0..n_steps {
            for k in 0..m_x {
                let mo = &moments[k];
                let w = dw[j * m_h + driver[k]];
                let z: f64 = rng.sample(StandardNormal);
                e[j * m_x + k] = mo.cov / tau * w + mo.residual.sqrt() * z;
            }
        }
        Some(e)
    } else {
        None
    };
    Ok(PathBundle { n_steps, m_h, m_x, tau, dw, e })
}

/// Norm of `g_n` in `gamma(H, X_{1/2})`: Frobenius norm with row `k` scaled
/// by `lambda_k^{1/2}` (q = 2), or the `q`-sum of scaled row norms.
pub fn gamma_half_norm(op: &DiagonalOperator, g: GSlice<'_>, q: f64) -> Result<f64> {
    let m = op.dim();
    let rows: Vec<f64> = match g {
        GSlice::Diagonal(d) => {
            if d.len() != m {
                return param("slice does not match operator dimension");
            }
            d.iter().map(|v| v * v).collect()
        }
        GSlice::Dense { values, m_h } => {
            if values.len() != m * m_h {
                return param("slice does not match operator dimension");
            }
            (0..m).map(|k| values[k * m_h..(k + 1) * m_h].iter().map(|a| a * a).sum()).collect()
        }
    };
    Ok(gamma_norm_from_rows(op.eigenvalues(), &rows, 0.5, q))
}

/// `gamma(H, X_s)` norm from squared row norms.
pub fn gamma_norm_from_rows(lambda: &[f64], rows_sq: &[f64], s: f64, q: f64) -> f64 {
    let terms: Vec<f64> = lambda
        .iter()
        .zip(rows_sq)
        .map(|(&l, &r)| {
            let w = if s == 0.5 { l } else { l.powf(2.0 * s) };
            if q == 2.0 { w * r } else { (w * r).sqrt().powf(q) }
        })
        .collect();
    let sum = pairwise_sum(&terms);
    if q == 2.0 { sum.sqrt() } else { sum.powf(1.0 / q) }
}

/// Admissible weights: `alpha = 0`, or `alpha in (-1, p/2 - 1)`.
pub fn check_weight(p: f64, alpha: f64) -> Result<()> {
    if !(p >= 2.0 && p.is_finite()) {
        return param(format!("p = {p} must be >= 2"));
    }
    if alpha != 0.0 && !(alpha > -1.0 && alpha < p / 2.0 - 1.0) {
        return param(format!("weight exponent {alpha} outside (-1, {})", p / 2.0 - 1.0));
    }
    Ok(())
}

/// `int_{t_n}^{t_{n+1}} t^alpha dt`.
#[inline]
pub fn weight_integral(n: usize, tau: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return tau;
    }
    let a1 = alpha + 1.0;
    let (t0, t1) = (n as f64 * tau, (n + 1) as f64 * tau);
    (t1.powf(a1) - t0.powf(a1)) / a1
}

/// `p`-th power of the weighted data norm
/// `sum_n int_{t_n}^{t_{n+1}} t^alpha dt ||g_n||^p_{gamma(H, X_{1/2})}`.
pub fn weighted_data_norm_pow(op: &DiagonalOperator, g: &StepProcess, p: f64, alpha: f64, q: f64) -> Result<f64> {
    check_weight(p, alpha)?;
    if g.m_x() != op.dim() {
        return param("process does not match operator dimension");
    }
    let mut rows = vec![0.0; g.m_x()];
    let mut terms = Vec::with_capacity(g.n_steps());
    for n in 0..g.n_steps() {
        g.row_norms_sq(n, &mut rows);
        let nrm = gamma_norm_from_rows(op.eigenvalues(), &rows, 0.5, q);
        terms.push(weight_integral(n, g.tau(), alpha) * nrm.powf(p));
    }
    Ok(pairwise_sum(&terms))
}

/// `||g||_{L^p(0,T, w_alpha; gamma(H, X_{1/2}))}`.
pub fn weighted_lp_data_norm(op: &DiagonalOperator, g: &StepProcess, p: f64, alpha: f64, q: f64) -> Result<f64> {
    Ok(weighted_data_norm_pow(op, g, p, alpha, q)?.powf(1.0 / p))
}

/// Test integrands. All are diagonal in the eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessKind {
    /// `g_{n,k} = value`.
    Constant { value: f64 },
    /// `g_{n,k} = scale k^{-s}`.
    ModeDecay {
        s: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `g_{n,k} = k^{-s} (1 + amplitude sin W^k(t_n))`, built from the
    /// path's own increments before `t_n`.
    RandomAdapted {
        s: f64,
        #[serde(default = "half")]
        amplitude: f64,
    },
    /// `g_{n,k} = (-1)^n` on the upper half of the retained modes.
    Alternating {
        #[serde(default = "one")]
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub kind: ProcessKind,
    /// Support restricted to the first `modes` X-modes.
    #[serde(default)]
    pub modes: Option<usize>,
}

impl ProcessSpec {
    pub fn new(kind: ProcessKind) -> Self {
        ProcessSpec { kind, modes: None }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self.kind, ProcessKind::RandomAdapted { .. })
    }

    pub fn label(&self) -> String {
        let base = match &self.kind {
            ProcessKind::Constant { value } => format!("constant({value})"),
            ProcessKind::ModeDecay { s, scale } if *scale == 1.0 => format!("mode_decay(s={s})"),
            ProcessKind::ModeDecay { s, scale } => format!("mode_decay(s={s};scale={scale})"),
            ProcessKind::RandomAdapted { s, amplitude } => format!("random_adapted(s={s};a={amplitude})"),
            ProcessKind::Alternating { value } => format!("alternating({value})"),
        };
        match self.modes {
            Some(m) => format!("{base}[modes={m}]"),
            None => base,
        }
    }
}

/// Build a test process on `n_steps` steps of size `tau` for an operator
/// with `m` modes. Random processes need the path's bundle.
pub fn make_test_process(
    spec: &ProcessSpec,
    m: usize,
    n_steps: usize,
    tau: f64,
    bundle: Option<&PathBundle>,
) -> Result<StepProcess> {
    let active = spec.modes.unwrap_or(m);
    if active == 0 || active > m {
        return param(format!("process modes {active} not in 1..={m}"));
    }
    let mut v = vec![0.0; n_steps * m];
    match &spec.kind {
        ProcessKind::Constant { value } => {
            for n in 0..n_steps {
                v[n * m..n * m + active].fill(*value);
            }
        }
        ProcessKind::ModeDecay { s, scale } => {
            if !s.is_finite() || !scale.is_finite() {
                return param("mode_decay parameters must be finite");
            }
            let prof: Vec<f64> = (1..=active).map(|k| scale * (k as f64).powf(-s)).collect();
            if prof.iter().any(|x| !x.is_finite()) {
                return param("mode_decay profile overflows");
            }
            for n in 0..n_steps {
                v[n * m..n * m + active].copy_from_slice(&prof);
            }
        }
        ProcessKind::RandomAdapted { s, amplitude } => {
            let b = bundle.ok_or_else(|| Error::Parameter("random_adapted needs a path bundle".into()))?;
            if b.m_h != m || b.n_steps < n_steps {
                return param("bundle does not match the process grid");
            }
            let mut w = vec![0.0f64; m];
            for n in 0..n_steps {
                for k in 0..active {
                    v[n * m + k] = ((k + 1) as f64).powf(-s) * (1.0 + amplitude * w[k].sin());
                }
                for (wk, d) in w.iter_mut().zip(b.dw_step(n)) {
                    *wk += d;
                }
            }
        }
        ProcessKind::Alternating { value } => {
            let lo = active / 2;
            for n in 0..n_steps {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                v[n * m + lo..n * m + active].fill(sign * value);
            }
        }
    }
    StepProcess::diagonal(tau, n_steps, m, v)
}

/// The versioned probe family used by the uniformity studies.
pub const PROBE_FAMILY_VERSION: &str = "probe-family/v1";

pub fn probe_family() -> Vec<ProcessSpec> {
    vec![
        ProcessSpec::new(ProcessKind::Constant { value: 1.0 }),
        ProcessSpec::new(ProcessKind::ModeDecay { s: 1.0, scale: 1.0 }),
        ProcessSpec::new(ProcessKind::ModeDecay { s: 1.5, scale: 1.0 }),
        ProcessSpec::new(ProcessKind::ModeDecay { s: 2.0, scale: 1.0 }),
        ProcessSpec::new(ProcessKind::RandomAdapted { s: 1.5, amplitude: 0.5 }),
        ProcessSpec::new(ProcessKind::Alternating { value: 1.0 }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn ou_moment_values() {
        let m = ou_moments(1.0, 1.0);
        assert!((m.var_e - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-15);
        assert!((m.cov - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((m.var_e - 0.43233).abs() < 1e-5);
        assert!((m.cov - 0.63212).abs() < 1e-5);
        let small = ou_moments(1e-9, 1.0);
        assert!((small.var_e - 1.0).abs() < 1e-8 && (small.cov - 1.0).abs() < 1e-8);
        // the residual series and the direct formula agree across the switch
        let below = ou_moments(0.999e-3, 1.0).residual;
        let above = ou_moments(1.001e-3, 1.0).residual;
        assert!((below / above - (0.999f64 / 1.001).powi(2)).abs() < 1e-3);
    }

    #[test]
    fn gamma_half_norm_examples() {
        let op = DiagonalOperator::new(vec![1.0, 4.0]).unwrap();
        assert_eq!(gamma_half_norm(&op, GSlice::Diagonal(&[0.0, 0.0]), 2.0).unwrap(), 0.0);
        assert!((gamma_half_norm(&op, GSlice::Diagonal(&[1.0, 1.0]), 2.0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        let op9 = DiagonalOperator::new(vec![9.0]).unwrap();
        assert!((gamma_half_norm(&op9, GSlice::Diagonal(&[2.0]), 4.0).unwrap() - 6.0).abs() < 1e-14);
        let dense = [1.0, 0.0, 0.0, 1.0];
        assert!((gamma_half_norm(&op, GSlice::Dense { values: &dense, m_h: 2 }, 2.0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weighted_norm_examples() {
        let op = DiagonalOperator::new(vec![1.0]).unwrap();
        let g = StepProcess::diagonal(0.25, 8, 1, vec![3.0; 8]).unwrap();
        let v = weighted_lp_data_norm(&op, &g, 4.0, 0.0, 2.0).unwrap();
        assert!((v - 2f64.powf(0.25) * 3.0).abs() < 1e-14);
        let one = StepProcess::diagonal(1.0, 1, 1, vec![1.0]).unwrap();
        let w = weighted_lp_data_norm(&op, &one, 2.0, 1.0, 2.0);
        assert!(w.is_err(), "alpha = 1 is outside (-1, 0) for p = 2");
        let w = weighted_lp_data_norm(&op, &one, 4.0, 0.5, 2.0).unwrap();
        assert!((w.powi(4) - 1.0 / 1.5).abs() < 1e-15);
        assert!(check_weight(4.0, 1.0).is_err());
    }

    #[test]
    fn weighted_norm_matches_fine_quadrature() {
        let op = DiagonalOperator::new(vec![2.0, 5.0]).unwrap();
        let vals: Vec<f64> = (0..10).map(|i: i32| (f64::from(i) * 0.7).sin()).collect();
        let g = StepProcess::diagonal(0.3, 5, 2, vals).unwrap();
        let (p, alpha) = (3.0, 0.3);
        let exact = weighted_data_norm_pow(&op, &g, p, alpha, 2.0).unwrap();
        let (x, w) = crate::numerics::gauss_legendre_unit(16);
        let mut quad = 0.0;
        let mut rows = vec![0.0; 2];
        for n in 0..5 {
            g.row_norms_sq(n, &mut rows);
            let nrm = gamma_norm_from_rows(op.eigenvalues(), &rows, 0.5, 2.0).powf(p);
            // t = t_n + tau u^10 turns t^alpha dt into a polynomial on the first step
            for (u, wu) in x.iter().zip(&w) {
                let t = 0.3 * (n as f64 + u.powi(10));
                quad += wu * 0.3 * 10.0 * u.powi(9) * t.powf(alpha) * nrm;
            }
        }
        assert!((exact - quad).abs() < 1e-10 * exact, "{exact} vs {quad}");
    }

    #[test]
    fn test_processes() {
        let z = make_test_process(&ProcessSpec::new(ProcessKind::Constant { value: 0.0 }), 4, 3, 0.1, None).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
        let md = make_test_process(&ProcessSpec::new(ProcessKind::ModeDecay { s: 2.0, scale: 1.0 }), 3, 2, 0.1, None).unwrap();
        assert_eq!(&md.values()[..3], &[1.0, 0.25, 1.0 / 9.0]);
        let alt = make_test_process(&ProcessSpec::new(ProcessKind::Alternating { value: 1.0 }), 4, 2, 0.1, None).unwrap();
        assert_eq!(alt.values(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, -1.0, -1.0]);
        assert!(make_test_process(&ProcessSpec::new(ProcessKind::RandomAdapted { s: 1.0, amplitude: 0.5 }), 2, 2, 0.1, None).is_err());
    }

    #[test]
    fn random_adapted_only_sees_the_past() {
        let spec = ProcessSpec::new(ProcessKind::RandomAdapted { s: 1.0, amplitude: 0.5 });
        let mut rng = stream(1, &[0], 0);
        let b = sample_bundle(&[1.0, 2.0], 6, 0.1, 2, &Coupling::Diagonal, false, &mut rng).unwrap();
        let g = make_test_process(&spec, 2, 6, 0.1, Some(&b)).unwrap();
        for n in 0..6 {
            // perturb increments at and after step n; g_0..g_n must not change
            let mut b2 = b.clone();
            for v in &mut b2.dw[n * 2..] {
                *v += 1.0;
            }
            let g2 = make_test_process(&spec, 2, 6, 0.1, Some(&b2)).unwrap();
            assert_eq!(&g.values()[..(n + 1) * 2], &g2.values()[..(n + 1) * 2]);
        }
    }

    #[test]
    fn bundle_replay_and_dw_independent_of_e() {
        let spec = [0.5, 3.0, 40.0];
        let a = sample_bundle(&spec, 7, 0.2, 3, &Coupling::Diagonal, true, &mut stream(5, &[1], 9)).unwrap();
        let b = sample_bundle(&spec, 7, 0.2, 3, &Coupling::Diagonal, true, &mut stream(5, &[1], 9)).unwrap();
        let c = sample_bundle(&spec, 7, 0.2, 3, &Coupling::Diagonal, false, &mut stream(5, &[1], 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dw, c.dw);
        assert!(sample_bundle(&spec, 7, 0.2, 3, &Coupling::Map(vec![0, 0, 1]), true, &mut stream(5, &[1], 9)).is_err());
    }

    #[test]
    fn bundle_covariance_statistics() {
        let (lambda, tau) = (1.0, 1.0);
        let n = 100_000;
        let b = sample_bundle(&[lambda], n, tau, 1, &Coupling::Diagonal, true, &mut stream(11, &[2], 0)).unwrap();
        let e = b.e.as_ref().unwrap();
        let m = ou_moments(lambda, tau);
        let stats = |f: &dyn Fn(usize) -> f64, target: f64| {
            let xs: Vec<f64> = (0..n).map(f).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - target).abs() < 5.0 * se, "{mean} vs {target} (se {se})");
        };
        stats(&|i| b.dw[i] * b.dw[i], tau);
        stats(&|i| e[i] * e[i], m.var_e);
        stats(&|i| e[i] * b.dw[i], m.cov);
    }
}
