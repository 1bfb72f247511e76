//! Solution-side functionals, Monte Carlo estimation and the `p = 2`
//! closed forms that serve as oracles for it.

use crate::error::{param, Error, Result};
use crate::evolve::Trajectory;
use crate::noise::{check_weight, weighted_data_norm_pow, StepProcess};
use crate::numerics::pairwise_sum;
use crate::rational_calc::SchemeFunction;
use crate::spectral_operator::{DiagonalOperator, TraceNormEvaluator, TraceQuadrature};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Weight `tau t_{n+1}^alpha` of row `n` in the discrete weighted norm.
#[inline]
pub fn discrete_weight(n: usize, tau: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        tau
    } else {
        tau * ((n + 1) as f64 * tau).powf(alpha)
    }
}

fn check_dsmr_exponents(p: f64, alpha: f64) -> Result<()> {
    if !(p >= 2.0 && p.is_finite()) {
        return param(format!("p = {p} must be >= 2"));
    }
    if alpha != 0.0 && !(alpha > 0.0 && alpha < p / 2.0 - 1.0) {
        return param(format!("weight exponent {alpha} outside [0, {})", p / 2.0 - 1.0));
    }
    Ok(())
}

/// `sum_n tau t_{n+1}^alpha ||A Y_n||^p`, the `p`-th power of [`dsmr_functional`].
pub fn dsmr_functional_pow(op: &DiagonalOperator, traj: &Trajectory, p: f64, alpha: f64) -> Result<f64> {
    check_dsmr_exponents(p, alpha)?;
    if traj.m != op.dim() {
        return param("trajectory does not match operator dimension");
    }
    let terms: Vec<f64> = traj
        .rows()
        .enumerate()
        .map(|(n, y)| discrete_weight(n, traj.tau, alpha) * op.space_norm_unchecked(y, 1.0).powf(p))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `(sum_{n>=0} tau t_{n+1}^alpha ||A Y_n||_{X_0}^p)^{1/p}`; the space
/// exponent `q` is the operator's.
pub fn dsmr_functional(op: &DiagonalOperator, traj: &Trajectory, p: f64, alpha: f64) -> Result<f64> {
    Ok(dsmr_functional_pow(op, traj, p, alpha)?.powf(1.0 / p))
}

/// Both maximal functionals of one path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupTrace {
    /// `sup_n ||Y_n||_{X_{1-(1+alpha)/p, p}}`.
    pub regularized: f64,
    /// `sup_n (tau n)^alpha ||Y_n||_{X_{1-1/p, p}}`.
    pub weighted: f64,
}

/// Precomputed trace-norm evaluators for the two maximal functionals.
pub struct SupTraceEvaluator {
    p: f64,
    alpha: f64,
    kind: SupKind,
}

enum SupKind {
    /// `p = 2`, `q = 2`: both functionals are `sup_n ||A^{1/2} Y_n||`.
    Hilbert(DiagonalOperator),
    Trace { regularized: TraceNormEvaluator, weighted: Option<TraceNormEvaluator> },
}

impl SupTraceEvaluator {
    pub fn new(op: &DiagonalOperator, p: f64, alpha: f64, quad: &TraceQuadrature) -> Result<Self> {
        if p == 2.0 {
            if op.q() != 2.0 {
                return Err(Error::Unsupported("the p = 2 maximal estimate needs q = 2".into()));
            }
            if alpha != 0.0 {
                return param("p = 2 admits only alpha = 0");
            }
            return Ok(SupTraceEvaluator { p, alpha, kind: SupKind::Hilbert(op.clone()) });
        }
        if !(p > 2.0 && p.is_finite()) {
            return param(format!("p = {p} must be > 2"));
        }
        if !(alpha >= 0.0 && alpha < p / 2.0 - 1.0) {
            return param(format!("alpha = {alpha} outside [0, {})", p / 2.0 - 1.0));
        }
        let regularized = TraceNormEvaluator::new(op, 1.0 - (1.0 + alpha) / p, p, quad)?;
        // with alpha = 0 both functionals coincide
        let weighted = if alpha == 0.0 { None } else { Some(TraceNormEvaluator::new(op, 1.0 - 1.0 / p, p, quad)?) };
        Ok(SupTraceEvaluator { p, alpha, kind: SupKind::Trace { regularized, weighted } })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eval(&self, traj: &Trajectory) -> SupTrace {
        let mut out = SupTrace { regularized: 0.0, weighted: 0.0 };
        match &self.kind {
            SupKind::Hilbert(op) => {
                for y in traj.rows().skip(1) {
                    out.regularized = out.regularized.max(op.space_norm_unchecked(y, 0.5));
                }
                out.weighted = out.regularized;
            }
            SupKind::Trace { regularized, weighted } => {
                for (n, y) in traj.rows().enumerate().skip(1) {
                    let a = regularized.eval(y);
                    out.regularized = out.regularized.max(a);
                    let b = match weighted {
                        None => a,
                        Some(w) => (traj.tau * n as f64).powf(self.alpha) * w.eval(y),
                    };
                    out.weighted = out.weighted.max(b);
                }
            }
        }
        out
    }
}

/// Convenience wrapper building a fresh evaluator.
pub fn sup_trace_functional(op: &DiagonalOperator, traj: &Trajectory, p: f64, alpha: f64) -> Result<SupTrace> {
    Ok(SupTraceEvaluator::new(op, p, alpha, &TraceQuadrature::default())?.eval(traj))
}

/// Monte Carlo summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    pub n_paths: usize,
    /// Median of 8 block means; reported for heavy-tailed functionals.
    pub median_of_means: f64,
}

pub const MIN_PATHS: usize = 16;
const MOM_BLOCKS: usize = 8;

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.len() < MIN_PATHS {
            return param(format!("need at least {MIN_PATHS} paths, got {}", xs.len()));
        }
        if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { path: i, detail: format!("sample value {}", xs[i]) });
        }
        let n = xs.len() as f64;
        let mean = pairwise_sum(xs) / n;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1.0);
        let stderr = (var / n).sqrt();
        Ok(McEstimate {
            mean,
            stderr,
            ci95: [mean - 1.96 * stderr, mean + 1.96 * stderr],
            n_paths: xs.len(),
            median_of_means: median_of_means(xs, MOM_BLOCKS),
        })
    }
}

/// Median of the means of `blocks` contiguous blocks.
pub fn median_of_means(xs: &[f64], blocks: usize) -> f64 {
    let b = blocks.min(xs.len()).max(1);
    let mut means: Vec<f64> = (0..b)
        .map(|i| {
            let (lo, hi) = (i * xs.len() / b, (i + 1) * xs.len() / b);
            pairwise_sum(&xs[lo..hi]) / (hi - lo) as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    if b % 2 == 1 {
        means[b / 2]
    } else {
        0.5 * (means[b / 2 - 1] + means[b / 2])
    }
}

/// Evaluate `f` on paths `0..n_paths` in parallel and return the results
/// in path order. Any error or non-finite entry aborts with the path index.
pub fn collect_paths<F>(n_paths: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    if n_paths < MIN_PATHS {
        return param(format!("need at least {MIN_PATHS} paths, got {n_paths}"));
    }
    let out: Vec<Result<Vec<f64>>> = (0..n_paths as u64).into_par_iter().map(&f).collect();
    let mut rows = Vec::with_capacity(n_paths);
    for (i, r) in out.into_iter().enumerate() {
        let v = r?;
        if let Some(j) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { path: i, detail: format!("functional {j} = {}", v[j]) });
        }
        rows.push(v);
    }
    Ok(rows)
}

/// Column `j` of per-path results.
pub fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// Mean, standard error and 95% interval of `f(path)` over `n_paths` paths.
/// `f` receives the path index and is expected to derive its randomness
/// from it, which makes the result independent of the thread count.
pub fn mc_estimate<F>(f: F, n_paths: usize) -> Result<McEstimate>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let rows = collect_paths(n_paths, |i| f(i).map(|v| vec![v]))?;
    McEstimate::from_samples(&column(&rows, 0))
}

/// Delta-method standard error of `(mean_a / mean_b)^{1/p}` from paired samples.
pub fn ratio_root(a: &[f64], b: &[f64], p: f64) -> Result<(f64, f64)> {
    let ea = McEstimate::from_samples(a)?;
    if b.iter().all(|x| *x == b[0]) {
        let r = ea.mean / b[0];
        let v = r.powf(1.0 / p);
        return Ok((v, v / p * ea.stderr / ea.mean.max(f64::MIN_POSITIVE)));
    }
    let eb = McEstimate::from_samples(b)?;
    let n = a.len() as f64;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ea.mean) * (y - eb.mean)).sum::<f64>() / (n - 1.0) / n;
    let r = ea.mean / eb.mean;
    let rel_var = (ea.stderr / ea.mean).powi(2) + (eb.stderr / eb.mean).powi(2) - 2.0 * cov / (ea.mean * eb.mean);
    let v = r.powf(1.0 / p);
    Ok((v, v / p * rel_var.max(0.0).sqrt()))
}

/// Exact `p = 2` DSMR quantities for deterministic data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2ClosedForm {
    /// `sum_n tau t_{n+1}^alpha E ||A Y_n||^2`.
    pub numerator_sq: f64,
    /// `||g||^2_{L^2(w_alpha; gamma(H, X_{1/2}))}`.
    pub data_norm_sq: f64,
    pub ratio: f64,
}

fn check_closed_form_input(op: &DiagonalOperator, g: &StepProcess) -> Result<()> {
    if op.q() != 2.0 {
        return Err(Error::Unsupported("closed forms need q = 2".into()));
    }
    if g.m_x() != op.dim() {
        return param("process does not match operator dimension");
    }
    Ok(())
}

fn finish_closed_form(op: &DiagonalOperator, g: &StepProcess, alpha: f64, numerator_sq: f64) -> Result<P2ClosedForm> {
    let data_norm_sq = weighted_data_norm_pow(op, g, 2.0, alpha, 2.0)?;
    if data_norm_sq == 0.0 {
        return Err(Error::Analysis("zero data norm, ratio undefined".into()));
    }
    Ok(P2ClosedForm { numerator_sq, data_norm_sq, ratio: (numerator_sq / data_norm_sq).sqrt() })
}

/// By the Ito isometry `E ||A Y_n||^2 = sum_{j<n} tau sum_k lambda_k^2
/// r_k^{2(n-j)} ||g_j^* e_k||^2`, accumulated by the recursion
/// `S_{n+1} = r^2 (S_n + tau |g_n|^2)`.
pub fn dsmr_constant_p2_closed_form(
    op: &DiagonalOperator,
    scheme: &SchemeFunction,
    g: &StepProcess,
    alpha: f64,
) -> Result<P2ClosedForm> {
    check_closed_form_input(op, g)?;
    check_weight(2.0, alpha)?;
    let tau = g.tau();
    let r2: Vec<f64> = op.scheme_multipliers(scheme, tau)?.iter().map(|r| r * r).collect();
    let lam2: Vec<f64> = op.eigenvalues().iter().map(|l| l * l).collect();
    let m = op.dim();
    let mut s = vec![0.0; m];
    let mut rows = vec![0.0; m];
    let mut terms = Vec::with_capacity(g.n_steps() + 1);
    for n in 0..g.n_steps() {
        g.row_norms_sq(n, &mut rows);
        for k in 0..m {
            s[k] = r2[k] * (s[k] + tau * rows[k]);
        }
        let e: Vec<f64> = s.iter().zip(&lam2).map(|(a, b)| a * b).collect();
        terms.push(discrete_weight(n + 1, tau, alpha) * pairwise_sum(&e));
    }
    finish_closed_form(op, g, alpha, pairwise_sum(&terms))
}

/// Exact `sum_n tau E ||A (Y^a_n - Y^b_n)||^2` for two schemes driven by the
/// same path, by direct summation over lags.
pub fn scheme_difference_p2_closed_form(
    op: &DiagonalOperator,
    a: &SchemeFunction,
    b: &SchemeFunction,
    g: &StepProcess,
) -> Result<P2ClosedForm> {
    check_closed_form_input(op, g)?;
    let tau = g.tau();
    let n_steps = g.n_steps();
    let ra = op.scheme_multipliers(a, tau)?;
    let rb = op.scheme_multipliers(b, tau)?;
    let m = op.dim();
    let mut rows = vec![0.0; n_steps * m];
    for n in 0..n_steps {
        g.row_norms_sq(n, &mut rows[n * m..(n + 1) * m]);
    }
    let mut per_mode = vec![0.0; m];
    for k in 0..m {
        let lag: Vec<f64> = (0..=n_steps)
            .map(|i| (ra[k].powi(i as i32) - rb[k].powi(i as i32)).powi(2))
            .collect();
        let mut acc = Vec::with_capacity(n_steps * (n_steps + 1) / 2);
        for n in 1..=n_steps {
            for j in 0..n {
                acc.push(lag[n - j] * rows[j * m + k]);
            }
        }
        let l = op.eigenvalues()[k];
        per_mode[k] = tau * tau * l * l * pairwise_sum(&acc);
    }
    finish_closed_form(op, g, 0.0, pairwise_sum(&per_mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{run_discrete, TrajectoryLabel};
    use crate::noise::{sample_bundle, Coupling};
    use crate::rational_calc::{builtin_scheme, BuiltinScheme};
    use crate::rng::stream;

    fn traj(values: Vec<f64>, m: usize, tau: f64) -> Trajectory {
        Trajectory { values, m, tau, label: TrajectoryLabel::Discrete }
    }

    #[test]
    fn dsmr_functional_examples() {
        let op = DiagonalOperator::new(vec![1.0]).unwrap();
        assert_eq!(dsmr_functional(&op, &traj(vec![0.0; 4], 1, 1.0), 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(dsmr_functional(&op, &traj(vec![0.0, 1.0], 1, 1.0), 2.0, 0.0).unwrap(), 1.0);
        let vals = vec![0.0, 0.5, -1.0, 2.0];
        let t = traj(vals.clone(), 1, 0.5);
        let direct: f64 = vals.iter().enumerate().map(|(n, y)| 0.5 * (0.5 * (n + 1) as f64).powf(0.5) * y.powi(4)).sum();
        assert!((dsmr_functional_pow(&op, &t, 4.0, 0.5).unwrap() - direct).abs() < 1e-14);
        assert!(dsmr_functional(&op, &t, 2.0, 0.5).is_err());
        let mut padded = vals.clone();
        padded.extend([0.0, 0.0]);
        assert_eq!(
            dsmr_functional(&op, &t, 4.0, 0.0).unwrap(),
            dsmr_functional(&op, &traj(padded, 1, 0.5), 4.0, 0.0).unwrap()
        );
    }

    #[test]
    fn hand_value_nine_sixteenths() {
        let op = DiagonalOperator::new(vec![1.0]).unwrap();
        let g = StepProcess::diagonal(1.0, 2, 1, vec![1.0, 1.0]).unwrap();
        let ie = builtin_scheme(BuiltinScheme::ImplicitEuler);
        let cf = dsmr_constant_p2_closed_form(&op, &ie, &g, 0.0).unwrap();
        assert!((cf.numerator_sq - 9.0 / 16.0).abs() < 1e-15);
        assert!((cf.data_norm_sq - 2.0).abs() < 1e-15);
        let zero = StepProcess::zero(1.0, 2, 1);
        assert!(dsmr_constant_p2_closed_form(&op, &ie, &zero, 0.0).is_err());
    }

    #[test]
    fn exponential_euler_large_steps() {
        // lambda tau = 20: E ||A Y_n||^2 is dominated by the last increment
        let op = DiagonalOperator::new(vec![20.0]).unwrap();
        let g = StepProcess::diagonal(1.0, 3, 1, vec![1.0; 3]).unwrap();
        let ee = builtin_scheme(BuiltinScheme::ExponentialEuler);
        let cf = dsmr_constant_p2_closed_form(&op, &ee, &g, 0.0).unwrap();
        let one = (-40f64).exp() * 400.0;
        assert!((cf.numerator_sq / (3.0 * one) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn difference_closed_form_matches_single_scheme_when_one_side_vanishes() {
        let op = DiagonalOperator::new(vec![1.0, 3.0]).unwrap();
        let g = StepProcess::diagonal(0.2, 6, 2, (0..12).map(|i| 1.0 + 0.1 * i as f64).collect()).unwrap();
        let ie = builtin_scheme(BuiltinScheme::ImplicitEuler);
        let ee = builtin_scheme(BuiltinScheme::ExponentialEuler);
        let same = scheme_difference_p2_closed_form(&op, &ee, &ee, &g).unwrap();
        assert_eq!(same.numerator_sq, 0.0);
        let d = scheme_difference_p2_closed_form(&op, &ie, &ee, &g).unwrap();
        assert!(d.numerator_sq > 0.0);
    }

    #[test]
    fn mc_constant_and_variance() {
        let c = mc_estimate(|_| Ok(2.5), 32).unwrap();
        assert_eq!((c.mean, c.stderr), (2.5, 0.0));
        let v = mc_estimate(
            |i| {
                let b = sample_bundle(&[1.0], 1, 1.0, 1, &Coupling::Diagonal, false, &mut stream(3, &[4], i))?;
                Ok(b.dw[0] * b.dw[0])
            },
            10_000,
        )
        .unwrap();
        assert!((v.mean - 1.0).abs() < 5.0 * v.stderr);
        assert!(mc_estimate(|_| Ok(f64::NAN), 16).is_err());
        assert!(mc_estimate(|_| Ok(1.0), 8).is_err());
    }

    #[test]
    fn mc_matches_p2_closed_form() {
        let op = DiagonalOperator::new(vec![1.0, 4.0, 9.0]).unwrap();
        let tau = 0.25;
        let g = StepProcess::diagonal(tau, 8, 3, vec![1.0; 24]).unwrap();
        let s = builtin_scheme(BuiltinScheme::ImplicitEuler);
        let cf = dsmr_constant_p2_closed_form(&op, &s, &g, 0.0).unwrap();
        let est = mc_estimate(
            |i| {
                let b = sample_bundle(op.eigenvalues(), 8, tau, 3, &Coupling::Diagonal, false, &mut stream(9, &[1], i))?;
                dsmr_functional_pow(&op, &run_discrete(&op, &s, &g, &b)?, 2.0, 0.0)
            },
            4096,
        )
        .unwrap();
        assert!((est.mean - cf.numerator_sq).abs() < 5.0 * est.stderr, "{} +- {} vs {}", est.mean, est.stderr, cf.numerator_sq);
    }

    #[test]
    fn sup_functionals() {
        let op = DiagonalOperator::new(vec![4.0]).unwrap();
        let t = traj(vec![0.0, 1.0, -3.0, 2.0], 1, 0.5);
        let h = sup_trace_functional(&op, &t, 2.0, 0.0).unwrap();
        assert_eq!(h.regularized, 6.0);
        let s = sup_trace_functional(&op, &t, 4.0, 0.0).unwrap();
        let ev = TraceNormEvaluator::new(&op, 0.75, 4.0, &TraceQuadrature::default()).unwrap();
        assert_eq!(s.regularized, ev.eval(&[3.0]));
        assert_eq!(s.weighted, s.regularized);
        let z = sup_trace_functional(&op, &traj(vec![0.0; 4], 1, 0.5), 4.0, 0.5).unwrap();
        assert_eq!((z.regularized, z.weighted), (0.0, 0.0));
    }

    #[test]
    fn median_of_means_blocks() {
        let xs: Vec<f64> = (0..16).map(|i| i as f64).collect();
        assert_eq!(median_of_means(&xs, 8), 7.5);
    }
}
