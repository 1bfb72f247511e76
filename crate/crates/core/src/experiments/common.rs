use super::{Row, StudyConfig, Verdict, UNIFORMITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::noise::{make_test_process, sample_bundle, Coupling, PathBundle, ProcessSpec, StepProcess};
use crate::norms::MIN_PATHS;
use crate::rational_calc::{scheme_by_name, SchemeFunction};
use crate::rng::stream;
use crate::spectral_operator::DiagonalOperator;
use rand_chacha::ChaCha12Rng;

/// Tag of the shared noise domain. Every study draws its increments from
/// `(seed, BUNDLE, tau, N, M_H)`, so studies with equal settings see the
/// same paths.
const BUNDLE: u64 = 0x6275_6e64_6c65;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Level {
    pub tau: f64,
    pub n_steps: usize,
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

/// Dyadic step sizes `tau_base 2^{-i}` with `T / tau` integral.
pub(crate) fn levels(cfg: &StudyConfig, min_levels: usize) -> Result<Vec<Level>> {
    let (Some(base), Some(count), Some(t)) = (cfg.tau_base, cfg.levels, cfg.horizon) else {
        return config_err("tau_base, levels and horizon are required");
    };
    if !(base > 0.0 && t > 0.0 && base.is_finite() && t.is_finite()) {
        return config_err("tau_base and horizon must be positive");
    }
    if count < min_levels {
        return config_err(format!("{} needs at least {min_levels} step sizes, got {count}", cfg.study.name()));
    }
    (0..count)
        .map(|i| {
            let tau = base / 2f64.powi(i as i32);
            let n = (t / tau).round();
            if n < 1.0 || (n * tau - t).abs() > 1e-9 * t {
                return config_err(format!("horizon {t} is not a multiple of tau = {tau}"));
            }
            Ok(Level { tau, n_steps: n as usize })
        })
        .collect()
}

pub(crate) fn operator(cfg: &StudyConfig) -> Result<DiagonalOperator> {
    match &cfg.operator {
        Some(spec) => spec.build(cfg.q),
        None => config_err("an [operator] section is required"),
    }
}

pub(crate) fn schemes(cfg: &StudyConfig, min: usize) -> Result<Vec<SchemeFunction>> {
    if cfg.schemes.len() < min {
        return config_err(format!("{} needs at least {min} scheme(s)", cfg.study.name()));
    }
    cfg.schemes.iter().map(|s| scheme_by_name(s)).collect()
}

pub(crate) fn check_paths(cfg: &StudyConfig) -> Result<()> {
    if cfg.n_paths < MIN_PATHS {
        return config_err(format!("n_paths must be at least {MIN_PATHS}"));
    }
    Ok(())
}

fn domain_words(level: &Level, m_h: usize) -> [u64; 4] {
    [BUNDLE, level.tau.to_bits(), level.n_steps as u64, m_h as u64]
}

pub(crate) fn domain_label(level: &Level, m_h: usize) -> String {
    format!("bundle;tau={:e};n={};m_h={}", level.tau, level.n_steps, m_h)
}

pub(crate) fn path_rng(seed: u64, level: &Level, m_h: usize, path: u64) -> ChaCha12Rng {
    stream(seed, &domain_words(level, m_h), path)
}

/// The increments of one path (and the paired exact integrals if asked).
pub(crate) fn bundle(
    op: &DiagonalOperator,
    level: &Level,
    with_e: bool,
    rng: &mut ChaCha12Rng,
) -> Result<PathBundle> {
    sample_bundle(op.eigenvalues(), level.n_steps, level.tau, op.dim(), &Coupling::Diagonal, with_e, rng)
}

/// Deterministic probes are built once per level; random ones per path.
pub(crate) struct Probes {
    pub specs: Vec<ProcessSpec>,
    fixed: Vec<Option<StepProcess>>,
}

impl Probes {
    pub fn new(specs: Vec<ProcessSpec>, m: usize, level: &Level) -> Result<Self> {
        if specs.is_empty() {
            return config_err("the probe family is empty");
        }
        let fixed = specs
            .iter()
            .map(|s| {
                if s.is_deterministic() {
                    let g = make_test_process(s, m, level.n_steps, level.tau, None)?;
                    if g.values().iter().all(|v| *v == 0.0) {
                        return config_err(format!("probe {} vanishes identically", s.label()));
                    }
                    Ok(Some(g))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Probes { specs, fixed })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn fixed(&self, i: usize) -> Option<&StepProcess> {
        self.fixed[i].as_ref()
    }

    /// Probe `i` on one path.
    pub fn build(&self, i: usize, m: usize, level: &Level, b: &PathBundle) -> Result<std::borrow::Cow<'_, StepProcess>> {
        Ok(match &self.fixed[i] {
            Some(g) => std::borrow::Cow::Borrowed(g),
            None => std::borrow::Cow::Owned(make_test_process(&self.specs[i], m, level.n_steps, level.tau, Some(b))?),
        })
    }
}

/// Row skeleton for a Monte Carlo quantity on `level`.
pub(crate) fn mc_row(cfg: &StudyConfig, level: &Level, m_h: usize, quantity: &str) -> Row {
    Row {
        tau: level.tau,
        n_steps: level.n_steps,
        p: cfg.p,
        q: cfg.q,
        n_paths: cfg.n_paths,
        path_lo: 0,
        path_hi: cfg.n_paths as u64 - 1,
        seed: cfg.seed,
        domain: domain_label(level, m_h),
        ..Row::blank(quantity)
    }
}

pub(crate) fn closed_row(cfg: &StudyConfig, level: &Level, quantity: &str) -> Row {
    Row { tau: level.tau, n_steps: level.n_steps, p: cfg.p, q: cfg.q, ..Row::blank(quantity) }
}

/// Max/min of `values` over step sizes against [`UNIFORMITY_THRESHOLD`].
pub(crate) fn uniformity_verdict(name: String, taus: &[f64], values: &[f64]) -> Verdict {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    let listing: Vec<String> = taus.iter().zip(values).map(|(t, v)| format!("{t:e}:{v:.4}")).collect();
    Verdict::check(
        name,
        spread.is_finite() && spread <= UNIFORMITY_THRESHOLD,
        spread,
        UNIFORMITY_THRESHOLD,
        format!("max/min over tau; values {}", listing.join(" ")),
    )
}
