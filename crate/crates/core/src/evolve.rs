//! Scheme recursion, discrete stochastic convolutions and the exact mild
//! solution, all driven by the same [`PathBundle`].

use crate::error::{param, Error, Result};
use crate::noise::{PathBundle, StepProcess};
use crate::rational_calc::SchemeFunction;
use crate::spectral_operator::DiagonalOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryLabel {
    Discrete,
    Mild,
    Convolution,
}

/// `(N+1) x M` values; row 0 is the initial value.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub m: usize,
    pub tau: f64,
    pub label: TrajectoryLabel,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.values.len() / self.m - 1
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.m..(n + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m)
    }

    /// Pointwise difference `self - other`.
    pub fn minus(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.values.len() != other.values.len() || self.m != other.m {
            return param("trajectories have different shapes");
        }
        Ok(Trajectory {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            ..self.clone()
        })
    }
}

fn check_shapes(op: &DiagonalOperator, g: &StepProcess, bundle: &PathBundle) -> Result<()> {
    if g.m_x() != op.dim() {
        return param(format!("process has {} modes, operator {}", g.m_x(), op.dim()));
    }
    if g.m_h() != bundle.m_h {
        return param("process and bundle disagree on the noise dimension");
    }
    if bundle.n_steps < g.n_steps() {
        return param("bundle is shorter than the process");
    }
    if (g.tau() - bundle.tau).abs() > 1e-15 * g.tau() {
        return param("process and bundle use different step sizes");
    }
    Ok(())
}

/// Increments `Delta_n I_g = g_n dW_n`, `N x M`.
pub fn increments(g: &StepProcess, bundle: &PathBundle) -> Vec<f64> {
    let m = g.m_x();
    let mut out = vec![0.0; g.n_steps() * m];
    for (n, chunk) in out.chunks_exact_mut(m).enumerate() {
        g.apply(n, bundle.dw_step(n), chunk);
    }
    out
}

/// `y_{n+1} = r (y_n + d_n)` per mode; the only place the power kernel is
/// evaluated, so the scheme and its convolution form agree bit for bit.
fn power_recursion(ratios: &[f64], incr: &[f64], n_steps: usize) -> Vec<f64> {
    let m = ratios.len();
    let mut out = vec![0.0; (n_steps + 1) * m];
    for n in 0..n_steps {
        let (prev, next) = out[n * m..(n + 2) * m].split_at_mut(m);
        for k in 0..m {
            next[k] = ratios[k] * (prev[k] + incr[n * m + k]);
        }
    }
    out
}

/// `Y_{n+1} = R_tau (Y_n + Delta_n I_g)`, `Y_0 = 0`.
pub fn run_discrete(
    op: &DiagonalOperator,
    scheme: &SchemeFunction,
    g: &StepProcess,
    bundle: &PathBundle,
) -> Result<Trajectory> {
    check_shapes(op, g, bundle)?;
    let ratios = op.scheme_multipliers(scheme, g.tau())?;
    let incr = increments(g, bundle);
    Ok(Trajectory {
        values: power_recursion(&ratios, &incr, g.n_steps()),
        m: op.dim(),
        tau: g.tau(),
        label: TrajectoryLabel::Discrete,
    })
}

/// Mild solution at the grid points,
/// `y(t_{n+1}) = e^{-lambda tau} y(t_n) + g_n E_n`.
pub fn run_mild_exact(op: &DiagonalOperator, g: &StepProcess, bundle: &PathBundle) -> Result<Trajectory> {
    check_shapes(op, g, bundle)?;
    if !g.is_diagonal() {
        return Err(Error::Unsupported("the exact mild solution needs diagonal coupling".into()));
    }
    let e = bundle
        .e
        .as_ref()
        .ok_or_else(|| Error::Parameter("bundle was sampled without exact integrals".into()))?;
    let m = op.dim();
    let tau = g.tau();
    let decay: Vec<f64> = op.eigenvalues().iter().map(|l| (-l * tau).exp()).collect();
    let mut out = vec![0.0; (g.n_steps() + 1) * m];
    for n in 0..g.n_steps() {
        let gd = &g.values()[n * m..(n + 1) * m];
        let (prev, next) = out[n * m..(n + 2) * m].split_at_mut(m);
        for k in 0..m {
            next[k] = decay[k] * prev[k] + gd[k] * e[n * m + k];
        }
    }
    Ok(Trajectory { values: out, m, tau, label: TrajectoryLabel::Mild })
}

/// Kernel for [`discrete_convolution`].
#[derive(Clone, Debug, PartialEq)]
pub enum ConvKernel {
    /// `k_n = r_k^n` for `n >= 1`, `k_0 = 0`, per mode.
    Power(Vec<f64>),
    /// One truncated sequence `k_0, k_1, ...` shared by all modes.
    Shared { values: Vec<f64>, tail_bound: f64 },
    /// Truncated sequence per mode.
    PerMode { values: Vec<Vec<f64>>, tail_bound: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvVariant {
    /// `sum_{j<n} k_{n-j} Delta_j`.
    Causal,
    /// `sum_{j>=n} k_{j-n} Delta_j`.
    Anticausal,
}

/// Largest tail bound accepted when the truncated kernel is shorter than the
/// horizon.
pub const TRUNCATION_TOL: f64 = 1e-10;

fn truncated_get(v: &[f64], i: usize) -> f64 {
    v.get(i).copied().unwrap_or(0.0)
}

/// `(I(k) g)_n`, rows `0..=N`. The anticausal row `N` is zero.
pub fn discrete_convolution(
    kernel: &ConvKernel,
    g: &StepProcess,
    bundle: &PathBundle,
    variant: ConvVariant,
) -> Result<Trajectory> {
    let m = g.m_x();
    let n_steps = g.n_steps();
    if g.m_h() != bundle.m_h || bundle.n_steps < n_steps {
        return param("process and bundle do not match");
    }
    let incr = increments(g, bundle);
    let (len, tail) = match kernel {
        ConvKernel::Power(r) => {
            if r.len() != m {
                return param("power kernel needs one ratio per mode");
            }
            (usize::MAX, 0.0)
        }
        ConvKernel::Shared { values, tail_bound } => (values.len(), *tail_bound),
        ConvKernel::PerMode { values, tail_bound } => {
            if values.len() != m {
                return param("per-mode kernel needs one sequence per mode");
            }
            (values.iter().map(Vec::len).min().unwrap_or(0), *tail_bound)
        }
    };
    if len <= n_steps && !(tail <= TRUNCATION_TOL) {
        return Err(Error::Truncation(format!("kernel truncated at {len} with tail bound {tail:e}")));
    }
    let values = match (kernel, variant) {
        (ConvKernel::Power(r), ConvVariant::Causal) => power_recursion(r, &incr, n_steps),
        _ => {
            let seq = |k: usize, i: usize| -> f64 {
                match kernel {
                    ConvKernel::Power(r) => {
                        if i == 0 { 0.0 } else { r[k].powi(i as i32) }
                    }
                    ConvKernel::Shared { values, .. } => truncated_get(values, i),
                    ConvKernel::PerMode { values, .. } => truncated_get(&values[k], i),
                }
            };
            let mut out = vec![0.0; (n_steps + 1) * m];
            for k in 0..m {
                let ks: Vec<f64> = (0..=n_steps).map(|i| seq(k, i)).collect();
                for n in 0..=n_steps {
                    let acc: f64 = match variant {
                        ConvVariant::Causal => (0..n).map(|j| ks[n - j] * incr[j * m + k]).sum(),
                        ConvVariant::Anticausal => (n..n_steps).map(|j| ks[j - n] * incr[j * m + k]).sum(),
                    };
                    out[n * m + k] = acc;
                }
            }
            out
        }
    };
    Ok(Trajectory { values, m, tau: g.tau(), label: TrajectoryLabel::Convolution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_bundle, Coupling};
    use crate::rational_calc::{builtin_scheme, BuiltinScheme};
    use crate::rng::stream;

    fn setup(m: usize, n: usize, tau: f64, seed: u64) -> (DiagonalOperator, PathBundle) {
        let op = DiagonalOperator::new((1..=m).map(|k| (k * k) as f64).collect()).unwrap();
        let b = sample_bundle(op.eigenvalues(), n, tau, m, &Coupling::Diagonal, true, &mut stream(seed, &[3], 0)).unwrap();
        (op, b)
    }

    #[test]
    fn zero_data_gives_zero() {
        let (op, b) = setup(3, 5, 0.1, 1);
        let g = StepProcess::zero(0.1, 5, 3);
        let ie = builtin_scheme(BuiltinScheme::ImplicitEuler);
        assert!(run_discrete(&op, &ie, &g, &b).unwrap().values.iter().all(|v| *v == 0.0));
        assert!(run_mild_exact(&op, &g, &b).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn one_step_scalar() {
        let (op, b) = setup(1, 1, 0.5, 2);
        let g = StepProcess::diagonal(0.5, 1, 1, vec![2.0]).unwrap();
        let ie = builtin_scheme(BuiltinScheme::ImplicitEuler);
        let y = run_discrete(&op, &ie, &g, &b).unwrap();
        assert_eq!(y.values[0], 0.0);
        assert_eq!(y.values[1], ie.eval_real(0.5) * (2.0 * b.dw[0]));
        let mild = run_mild_exact(&op, &g, &b).unwrap();
        assert_eq!(mild.values[1], 2.0 * b.e.as_ref().unwrap()[0]);
    }

    #[test]
    fn mild_semigroup_consistency() {
        let (op, b) = setup(2, 6, 0.25, 3);
        let mut v = vec![0.0; 12];
        v[0] = 1.0;
        v[1] = -0.5;
        let g = StepProcess::diagonal(0.25, 6, 2, v).unwrap();
        let y = run_mild_exact(&op, &g, &b).unwrap();
        for n in 1..=6 {
            for k in 0..2 {
                let lam = op.eigenvalues()[k];
                let expect = (-lam * 0.25 * (n - 1) as f64).exp() * y.row(1)[k];
                assert!((y.row(n)[k] - expect).abs() <= 1e-15 * expect.abs().max(1e-300) * n as f64);
            }
        }
    }

    #[test]
    fn power_kernel_reproduces_scheme_exactly() {
        let (op, b) = setup(4, 20, 0.05, 4);
        let g = crate::noise::make_test_process(
            &crate::noise::ProcessSpec::new(crate::noise::ProcessKind::RandomAdapted { s: 1.0, amplitude: 0.5 }),
            4, 20, 0.05, Some(&b),
        )
        .unwrap();
        for s in crate::rational_calc::admissible_catalog() {
            let y = run_discrete(&op, &s, &g, &b).unwrap();
            let r = op.scheme_multipliers(&s, 0.05).unwrap();
            let c = discrete_convolution(&ConvKernel::Power(r), &g, &b, ConvVariant::Causal).unwrap();
            assert_eq!(y.values, c.values);
        }
    }

    #[test]
    fn explicit_power_sum_agrees_with_recursion() {
        let (op, b) = setup(3, 12, 0.1, 5);
        let g = StepProcess::diagonal(0.1, 12, 3, vec![1.0; 36]).unwrap();
        let r = op.scheme_multipliers(&builtin_scheme(BuiltinScheme::ImplicitEuler), 0.1).unwrap();
        let rec = discrete_convolution(&ConvKernel::Power(r.clone()), &g, &b, ConvVariant::Causal).unwrap();
        let seqs: Vec<Vec<f64>> = r.iter().map(|x| (0..=12).map(|i| if i == 0 { 0.0 } else { x.powi(i) }).collect()).collect();
        let dir = discrete_convolution(&ConvKernel::PerMode { values: seqs, tail_bound: 0.0 }, &g, &b, ConvVariant::Causal).unwrap();
        for (a, c) in rec.values.iter().zip(&dir.values) {
            assert!((a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn delta_kernels() {
        let (_, b) = setup(2, 5, 0.1, 6);
        let g = StepProcess::diagonal(0.1, 5, 2, (0..10).map(|i| i as f64).collect()).unwrap();
        let incr = increments(&g, &b);
        let d1 = ConvKernel::Shared { values: vec![0.0, 1.0], tail_bound: 0.0 };
        let c = discrete_convolution(&d1, &g, &b, ConvVariant::Causal).unwrap();
        assert!(c.row(0).iter().all(|v| *v == 0.0));
        for n in 1..=5 {
            assert_eq!(c.row(n), &incr[(n - 1) * 2..n * 2]);
        }
        let zero = ConvKernel::Shared { values: vec![], tail_bound: 0.0 };
        let a = discrete_convolution(&zero, &g, &b, ConvVariant::Anticausal).unwrap();
        assert!(a.values.iter().all(|v| *v == 0.0));
        let d0 = ConvKernel::Shared { values: vec![1.0], tail_bound: 0.0 };
        let a = discrete_convolution(&d0, &g, &b, ConvVariant::Anticausal).unwrap();
        assert_eq!(&a.values[..10], &incr[..]);
        let bad = ConvKernel::Shared { values: vec![1.0], tail_bound: 1e-3 };
        assert!(matches!(discrete_convolution(&bad, &g, &b, ConvVariant::Causal), Err(Error::Truncation(_))));
    }

    #[test]
    fn pathwise_coupling_improves_with_smaller_steps() {
        // one mode, lambda = 1: the strong error at T = 1 shrinks at least like tau^{1/2}
        // (for a single smooth mode it is in fact first order)
        let op = DiagonalOperator::new(vec![1.0]).unwrap();
        let ie = builtin_scheme(BuiltinScheme::ImplicitEuler);
        let mut rms = Vec::new();
        for &n in &[1000usize, 10000] {
            let tau = 1.0 / n as f64;
            let mut acc = 0.0;
            let paths = 200;
            for p in 0..paths {
                let b = sample_bundle(&[1.0], n, tau, 1, &Coupling::Diagonal, true, &mut stream(7, &[n as u64], p)).unwrap();
                let g = StepProcess::diagonal(tau, n, 1, vec![1.0; n]).unwrap();
                let y = run_discrete(&op, &ie, &g, &b).unwrap();
                let x = run_mild_exact(&op, &g, &b).unwrap();
                let d = y.values[n] - x.values[n];
                acc += d * d;
            }
            rms.push((acc / paths as f64).sqrt());
        }
        let ratio = rms[0] / rms[1];
        assert!(ratio > 10f64.sqrt() * 0.8 && ratio < 10.0 * 1.5, "ratio {ratio}");
    }
}
