//! Config-driven studies. Each study turns a [`StudyConfig`] into a
//! [`StudyReport`]: numeric rows (also written as `rows.csv`), fitted
//! slopes and pass/fail verdicts.
//!
//! Paths are simulated in parallel but every per-path quantity depends only
//! on `(seed, domain, path index)` and reductions run in path order, so the
//! rows are identical for any thread count.

mod audits;
mod common;
mod convergence;
mod maximal;
mod probed;

pub use convergence::convergence_error_p2_closed_form;

use crate::error::{Error, Result};
use crate::kernels::{ASeq, KernelFamily};
use crate::noise::{ProcessSpec, PROBE_FAMILY_VERSION};
use crate::rng::RNG_ALGORITHM;
use crate::spectral_operator::OperatorSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

/// Max/min over step sizes allowed by the uniformity verdicts.
pub const UNIFORMITY_THRESHOLD: f64 = 2.0;
/// Allowed distance of a fitted convergence slope from its target.
pub const SLOPE_TOLERANCE: f64 = 0.07;
/// Agreement of Monte Carlo and closed-form values, in standard errors.
pub const AGREEMENT_SIGMAS: f64 = 5.0;
/// The second-moment maximal bound `4 E||g||^2`, with 10% slack.
pub const DOOB_BOUND: f64 = 4.0 * 1.1;
/// Weighted ratios must stay within this factor of the unweighted ones.
pub const WEIGHT_FACTOR: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Convergence,
    DsmrUniformity,
    SchemeEquivalence,
    MaximalEstimate,
    WeightedExtrapolation,
    KernelAudit,
    SchemeAudit,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Convergence => "convergence",
            StudyKind::DsmrUniformity => "dsmr_uniformity",
            StudyKind::SchemeEquivalence => "scheme_equivalence",
            StudyKind::MaximalEstimate => "maximal_estimate",
            StudyKind::WeightedExtrapolation => "weighted_extrapolation",
            StudyKind::KernelAudit => "kernel_audit",
            StudyKind::SchemeAudit => "scheme_audit",
        }
    }
}

impl std::str::FromStr for StudyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::Config(format!("unknown study '{s}'")))
    }
}

/// One `(alpha, beta)` pair of the convergence study with its data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceCase {
    pub alpha: f64,
    pub beta: f64,
    pub data: ProcessSpec,
}

/// Study configuration, read from TOML. Fields not used by a study are
/// ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema_version: u32,
    pub study: StudyKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Worker threads; the rows do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub schemes: Vec<String>,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "two")]
    pub q: f64,
    /// Weight exponents (weighted and maximal studies).
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub cases: Vec<ConvergenceCase>,
    /// Step sizes are `tau_base * 2^{-i}`, `i = 0..levels`.
    #[serde(default)]
    pub tau_base: Option<f64>,
    #[serde(default)]
    pub levels: Option<usize>,
    /// Final time `T`.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Probe integrands; defaults to the versioned probe family.
    #[serde(default)]
    pub probes: Option<Vec<ProcessSpec>>,
    #[serde(default)]
    pub families: Vec<KernelFamily>,
    #[serde(default = "crate::kernels::default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub a_seq: Vec<ASeq>,
    #[serde(default)]
    pub nu: Option<f64>,
    /// Largest power `n` in the scheme audit's decay estimates.
    #[serde(default)]
    pub n_max: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_paths() -> usize {
    1024
}
fn two() -> f64 {
    2.0
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// A config with every optional field at its default.
    pub fn new(study: StudyKind) -> Self {
        Self::from_toml(&format!("schema_version = {SCHEMA_VERSION}\nstudy = \"{}\"\n", study.name()))
            .expect("defaults form a valid config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn probes(&self) -> Vec<ProcessSpec> {
        self.probes.clone().unwrap_or_else(crate::noise::probe_family)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    /// The number compared against `threshold`.
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Verdict {
    pub fn check(name: impl Into<String>, ok: bool, metric: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            metric,
            threshold,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Fitted log-log slope of one convergence case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub case: String,
    pub slope: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    pub target: f64,
    pub intercept: f64,
}

/// One result row. Monte Carlo rows carry the path range and the random
/// stream domain they were computed from; closed-form and audit rows have
/// `n_paths = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub case: String,
    pub scheme: String,
    pub probe: String,
    pub quantity: String,
    pub tau: f64,
    pub n_steps: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub path_lo: u64,
    pub path_hi: u64,
    pub seed: u64,
    pub domain: String,
}

impl Row {
    pub(crate) fn blank(quantity: &str) -> Self {
        Row {
            case: String::new(),
            scheme: String::new(),
            probe: String::new(),
            quantity: quantity.to_string(),
            tau: 0.0,
            n_steps: 0,
            p: 0.0,
            q: 0.0,
            alpha: 0.0,
            beta: 0.0,
            value: 0.0,
            stderr: 0.0,
            n_paths: 0,
            path_lo: 0,
            path_hi: 0,
            seed: 0,
            domain: String::new(),
        }
    }
}

/// Header of `rows.csv`, in column order.
pub const CSV_HEADER: &str =
    "case,scheme,probe,quantity,tau,n_steps,p,q,alpha,beta,value,stderr,n_paths,path_lo,path_hi,seed,domain";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema_version: u32,
    pub study: StudyKind,
    pub config: StudyConfig,
    pub code_version: String,
    pub rng_algorithm: String,
    pub probe_family: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub rows_sha256: String,
    pub rows: Vec<Row>,
    pub fits: Vec<Fit>,
    pub verdicts: Vec<Verdict>,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(Verdict::passed)
    }

    pub fn rows_csv(&self) -> Result<String> {
        rows_csv(&self.rows)
    }

    /// Write `report.json` and `rows.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), self.rows_csv()?)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn rows_csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Numeric(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numeric(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numeric(format!("csv: {e}")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) struct Outcome {
    pub rows: Vec<Row>,
    pub fits: Vec<Fit>,
    pub verdicts: Vec<Verdict>,
}

/// Run a study with the config's thread count (or rayon's default).
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let threads = match cfg.threads {
        Some(0) => return Err(Error::Config("threads must be positive".into())),
        Some(t) => t,
        None => rayon::current_num_threads(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let out = pool.install(|| dispatch(cfg))?;
    let wall = start.elapsed().as_secs_f64();
    let csv = rows_csv(&out.rows)?;
    Ok(StudyReport {
        schema_version: SCHEMA_VERSION,
        study: cfg.study,
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        probe_family: PROBE_FAMILY_VERSION.to_string(),
        threads,
        wall_time_s: wall,
        rows_sha256: sha256_hex(csv.as_bytes()),
        rows: out.rows,
        fits: out.fits,
        verdicts: out.verdicts,
    })
}

fn dispatch(cfg: &StudyConfig) -> Result<Outcome> {
    match cfg.study {
        StudyKind::Convergence => convergence::run(cfg),
        StudyKind::DsmrUniformity => probed::run_uniformity(cfg, false),
        StudyKind::WeightedExtrapolation => probed::run_uniformity(cfg, true),
        StudyKind::SchemeEquivalence => probed::run_equivalence(cfg),
        StudyKind::MaximalEstimate => maximal::run(cfg),
        StudyKind::KernelAudit => audits::run_kernels(cfg),
        StudyKind::SchemeAudit => audits::run_schemes(cfg),
    }
}

/// Result of re-running a stored report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyOutcome {
    pub matches: bool,
    pub recorded_sha256: String,
    pub recomputed_sha256: String,
    /// First differing CSV line, `(line number, recorded, recomputed)`.
    pub first_difference: Option<(usize, String, String)>,
}

/// Re-run the config stored in a report and compare the rows byte for byte.
pub fn verify_report(report: &StudyReport) -> Result<VerifyOutcome> {
    let mut cfg = report.config.clone();
    cfg.threads = Some(report.threads.max(1));
    let fresh = run_study(&cfg)?;
    let (a, b) = (report.rows_csv()?, fresh.rows_csv()?);
    let first_difference = if a == b {
        None
    } else {
        let la: Vec<&str> = a.lines().collect();
        let lb: Vec<&str> = b.lines().collect();
        let i = (0..la.len().max(lb.len()))
            .find(|&i| la.get(i) != lb.get(i))
            .unwrap_or(0);
        Some((i + 1, la.get(i).unwrap_or(&"").to_string(), lb.get(i).unwrap_or(&"").to_string()))
    };
    Ok(VerifyOutcome {
        matches: first_difference.is_none() && report.rows_sha256 == fresh.rows_sha256,
        recorded_sha256: report.rows_sha256.clone(),
        recomputed_sha256: fresh.rows_sha256,
        first_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_schema() {
        let text = r#"
schema_version = 1
study = "convergence"
seed = 3
n_paths = 64
schemes = ["implicit_euler"]
tau_base = 0.125
levels = 3
horizon = 1.0

[operator]
type = "dirichlet_laplacian"
modes = 8
length = 1.0

[[cases]]
alpha = 0.0
beta = 0.0
data = { kind = "mode_decay", s = 2.0 }
"#;
        let cfg = StudyConfig::from_toml(text).unwrap();
        assert_eq!(cfg.study, StudyKind::Convergence);
        assert_eq!(cfg.cases[0].data.label(), "mode_decay(s=2)");
        assert_eq!(cfg.p, 2.0);
        let bad = text.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(StudyConfig::from_toml(&bad), Err(Error::Config(_))));
        let unknown = format!("{text}\nbogus = 1\n");
        assert!(StudyConfig::from_toml(&unknown).is_err());
    }

    #[test]
    fn csv_header_matches_row_fields() {
        let csv = rows_csv(&[Row::blank("x")]).unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!("dsmr-uniformity".parse::<StudyKind>().unwrap(), StudyKind::DsmrUniformity);
    }
}
