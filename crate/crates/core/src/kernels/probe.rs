//! Monte Carlo probes of `||I(k) g|| / ||g||` for normalized kernels, and the
//! reduction of a kernel to the indicator kernels `k^{(m)}`.

use super::{kernel_values, ktau_sum, KernelSpec};
use crate::error::{param, Result};
use crate::evolve::{discrete_convolution, ConvKernel, ConvVariant};
use crate::noise::{check_weight, gamma_norm_from_rows, make_test_process, sample_bundle, weight_integral, Coupling, ProcessSpec, StepProcess};
use crate::norms::{collect_paths, column, discrete_weight, ratio_root};
use crate::numerics::pairwise_sum;
use crate::rng::stream;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_steps: usize,
    pub modes: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub anticausal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub probe: String,
    pub ratio: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// `K_tau` sum used to normalize the kernel.
    pub ktau: f64,
    pub rows: Vec<ProbeRow>,
    pub max_ratio: f64,
}

fn check_exponents(p: f64, q: f64, alpha: f64) -> Result<()> {
    if p == 2.0 {
        if q != 2.0 || alpha != 0.0 {
            return param("p = 2 is only admitted with q = 2 and alpha = 0");
        }
        return Ok(());
    }
    if !(p > 2.0 && q >= 2.0) {
        return param(format!("need p > 2 and q >= 2, got p = {p}, q = {q}"));
    }
    check_weight(p, alpha)
}

/// `L^q` norms of the rows of a complex trajectory given as real and imaginary parts.
fn row_norms(re: &[f64], im: &[f64], m: usize, q: f64) -> Vec<f64> {
    re.chunks_exact(m)
        .zip(im.chunks_exact(m))
        .map(|(a, b)| {
            let t: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x * x + y * y).powf(q / 2.0)).collect();
            pairwise_sum(&t).powf(1.0 / q)
        })
        .collect()
}

/// `p`-th power of `||g||_{L^p(w_alpha; gamma(H, X_0))}`.
pub fn data_norm_x0_pow(g: &StepProcess, p: f64, q: f64, alpha: f64) -> f64 {
    let ones = vec![1.0; g.m_x()];
    let mut rows = vec![0.0; g.m_x()];
    let terms: Vec<f64> = (0..g.n_steps())
        .map(|n| {
            g.row_norms_sq(n, &mut rows);
            weight_integral(n, g.tau(), alpha) * gamma_norm_from_rows(&ones, &rows, 0.0, q).powf(p)
        })
        .collect();
    pairwise_sum(&terms)
}

/// For every probe process, the MC estimate of
/// `(E ||I(k/S) g||^p_{l^p_{tau, w_alpha}(L^q)} / E ||g||^p)^{1/p}`, where
/// `S` is the kernel's `K_tau` sum. The scalar kernel acts on every mode.
pub fn operator_norm_probe(spec: &KernelSpec, cfg: &ProbeConfig, probes: &[ProcessSpec]) -> Result<ProbeReport> {
    check_exponents(cfg.p, cfg.q, cfg.alpha)?;
    if cfg.modes == 0 || cfg.n_steps == 0 {
        return param("probe needs at least one mode and one step");
    }
    let s = ktau_sum(spec)?;
    let ktau = s.sum + s.tail_bound;
    let k = kernel_values(spec, cfg.n_steps)?;
    let scale = if ktau > 0.0 { 1.0 / ktau } else { 0.0 };
    let re = ConvKernel::Shared { values: k.iter().map(|c| c.re * scale).collect(), tail_bound: 0.0 };
    let im = ConvKernel::Shared { values: k.iter().map(|c| c.im * scale).collect(), tail_bound: 0.0 };
    let variant = if cfg.anticausal { ConvVariant::Anticausal } else { ConvVariant::Causal };
    let tau = spec.tau;
    let m = cfg.modes;
    // any positive spectrum: only dW is used
    let spectrum: Vec<f64> = (1..=m).map(|i| i as f64).collect();
    let mut rows = Vec::with_capacity(probes.len());
    for (pi, probe) in probes.iter().enumerate() {
        let per_path = collect_paths(cfg.n_paths, |path| {
            let b = sample_bundle(&spectrum, cfg.n_steps, tau, m, &Coupling::Diagonal, false, &mut stream(cfg.seed, &[0x6b65726e, pi as u64], path))?;
            let g = make_test_process(probe, m, cfg.n_steps, tau, Some(&b))?;
            let yr = discrete_convolution(&re, &g, &b, variant)?;
            let yi = discrete_convolution(&im, &g, &b, variant)?;
            let norms = row_norms(&yr.values, &yi.values, m, cfg.q);
            let terms: Vec<f64> = norms.iter().enumerate().map(|(n, x)| discrete_weight(n, tau, cfg.alpha) * x.powf(cfg.p)).collect();
            Ok(vec![pairwise_sum(&terms), data_norm_x0_pow(&g, cfg.p, cfg.q, cfg.alpha)])
        })?;
        let (a, b) = (column(&per_path, 0), column(&per_path, 1));
        let (ratio, stderr) = if b.iter().all(|x| *x == 0.0) { (0.0, 0.0) } else { ratio_root(&a, &b, cfg.p)? };
        rows.push(ProbeRow { probe: probe.label(), ratio, stderr });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ProbeReport { ktau, rows, max_ratio })
}

/// Exact `sum_n tau E ||(I(k) g)_n||^2 / sum_n tau ||g_n||^2` for `p = q = 2`
/// and deterministic `g`, by the Ito isometry.
pub fn probe_p2_closed_form(k: &[f64], g: &StepProcess, anticausal: bool) -> f64 {
    let tau = g.tau();
    let n = g.n_steps();
    let mut rows = vec![0.0; g.m_x()];
    let hs: Vec<f64> = (0..n)
        .map(|j| {
            g.row_norms_sq(j, &mut rows);
            rows.iter().sum()
        })
        .collect();
    let kk = |i: usize| k.get(i).copied().unwrap_or(0.0);
    let mut num = Vec::new();
    for row in 0..=n {
        let acc: f64 = if anticausal {
            (row..n).map(|j| kk(j - row).powi(2) * tau * hs[j]).sum()
        } else {
            (0..row).map(|j| kk(row - j).powi(2) * tau * hs[j]).sum()
        };
        num.push(tau * acc);
    }
    let den: f64 = hs.iter().map(|h| tau * h).sum();
    pairwise_sum(&num) / den
}

/// Coefficients `c_m = -sqrt(m tau) (k_{m+1} - k_m)` and the kernel rebuilt
/// as `sum_m c_m k^{(m)}`, for `k_1..k_L` (zero after `L`).
pub fn convex_reconstruction(k: &[f64], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let l = k.len();
    let at = |i: usize| if i <= l { k[i - 1] } else { 0.0 };
    let c: Vec<f64> = (1..=l).map(|m| -(m as f64 * tau).sqrt() * (at(m + 1) - at(m))).collect();
    let mut rebuilt = vec![0.0; l];
    let mut acc = 0.0;
    for m in (1..=l).rev() {
        acc += c[m - 1] / (m as f64 * tau).sqrt();
        rebuilt[m - 1] = acc;
    }
    (c, rebuilt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelDecay, KernelFamily};
    use crate::noise::ProcessKind;
    use num_complex::Complex64 as C;

    #[test]
    fn zero_kernel_probe_is_zero() {
        let spec = KernelSpec::custom(0.1, vec![0.0; 4], Some(KernelDecay::Finite));
        let cfg = ProbeConfig { n_steps: 8, modes: 2, p: 4.0, q: 2.0, alpha: 0.0, n_paths: 16, seed: 1, anticausal: false };
        let r = operator_norm_probe(&spec, &cfg, &[ProcessSpec::new(ProcessKind::Constant { value: 1.0 })]).unwrap();
        assert_eq!(r.max_ratio, 0.0);
    }

    #[test]
    fn j_reference_probe_matches_closed_form() {
        let tau = 0.1;
        let spec = KernelSpec::j_reference(3, tau);
        let n = 12;
        let cfg = ProbeConfig { n_steps: n, modes: 3, p: 2.0, q: 2.0, alpha: 0.0, n_paths: 4096, seed: 3, anticausal: false };
        let probe = ProcessSpec::new(ProcessKind::ModeDecay { s: 1.0, scale: 1.0 });
        let r = operator_norm_probe(&spec, &cfg, std::slice::from_ref(&probe)).unwrap();
        let g = make_test_process(&probe, 3, n, tau, None).unwrap();
        let k: Vec<f64> = kernel_values(&spec, n).unwrap().iter().map(|c| c.re).collect();
        let exact = probe_p2_closed_form(&k, &g, false).sqrt();
        assert!((r.rows[0].ratio - exact).abs() < 5.0 * r.rows[0].stderr, "{:?} vs {exact}", r.rows[0]);
    }

    #[test]
    fn reconstruction_telescopes() {
        let spec = KernelSpec::new(KernelFamily::ExpBasic, 0.05, C::new(3.0, 0.0));
        let k: Vec<f64> = kernel_values(&spec, 50).unwrap()[1..].iter().map(|c| c.re).collect();
        let (c, rebuilt) = convex_reconstruction(&k, 0.05);
        for (a, b) in k.iter().zip(&rebuilt) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300) * 50.0);
        }
        let mass: f64 = c.iter().map(|x| x.abs()).sum();
        assert!((mass - crate::kernels::ktau_sum_explicit(&k.iter().map(|x| C::new(*x, 0.0)).collect::<Vec<_>>(), 0.05)).abs() < 1e-12);
    }
}
