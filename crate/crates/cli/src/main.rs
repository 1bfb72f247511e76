use clap::{Parser, Subcommand};
use dsmr_core::experiments::{run_study, verify_report, StudyConfig, StudyKind, StudyReport};
use dsmr_core::kernels::KernelFamily;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dsmr-lab", version, about = "Studies and audits for rational schemes of stochastic evolution equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study from a TOML config.
    Run {
        study: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Order, stability and decay-estimate audit of schemes.
    Scheme {
        #[command(subcommand)]
        action: SchemeAction,
    },
    /// Uniform K_tau bounds of the kernel families.
    Kernels {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Re-run the config stored in a report and compare rows byte for byte.
    Verify {
        report: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Subcommand)]
enum SchemeAction {
    Audit {
        /// Scheme names (`implicit_euler`, `pade_1_2`, ...); default: the catalog.
        #[arg(long = "scheme")]
        schemes: Vec<String>,
        #[arg(long)]
        n_max: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KernelAction {
    Audit {
        /// Families (`exp_basic`, `rational_phi`, ...); default: all analytic ones.
        #[arg(long = "family")]
        families: Vec<String>,
        /// Schemes for the rational families.
        #[arg(long = "scheme")]
        schemes: Vec<String>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { study, config, seed, paths, out, threads } => {
            let kind: StudyKind = study.parse()?;
            let mut cfg = StudyConfig::load(&config)?;
            if cfg.study != kind {
                return Err(format!("config {} is for study {}, not {}", config.display(), cfg.study.name(), kind.name()).into());
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = paths {
                cfg.n_paths = n;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            finish(&cfg, out)
        }
        Command::Scheme { action: SchemeAction::Audit { schemes, n_max, out } } => {
            let mut cfg = StudyConfig::new(StudyKind::SchemeAudit);
            cfg.schemes = schemes;
            cfg.n_max = n_max;
            finish(&cfg, out)
        }
        Command::Kernels { action: KernelAction::Audit { families, schemes, sigma, nu, out } } => {
            let mut cfg = StudyConfig::new(StudyKind::KernelAudit);
            cfg.families = families.iter().map(|f| f.parse::<KernelFamily>()).collect::<Result<_, _>>()?;
            cfg.schemes = schemes;
            if let Some(s) = sigma {
                cfg.sigma = s;
            }
            cfg.nu = nu;
            finish(&cfg, out)
        }
        Command::Verify { report, threads } => {
            let mut stored = StudyReport::load(&report)?;
            if let Some(t) = threads {
                stored.threads = t;
            }
            let v = verify_report(&stored)?;
            println!("recorded   {}", v.recorded_sha256);
            println!("recomputed {}", v.recomputed_sha256);
            if let Some((line, a, b)) = &v.first_difference {
                println!("first difference at line {line}:\n  recorded   {a}\n  recomputed {b}");
            }
            println!("{}", if v.matches { "rows match" } else { "rows differ" });
            Ok(v.matches)
        }
    }
}

fn finish(cfg: &StudyConfig, out: Option<PathBuf>) -> Result<bool, Box<dyn std::error::Error>> {
    let report = run_study(cfg)?;
    let dir = out
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(cfg.study.name()));
    report.write(&dir)?;
    for f in &report.fits {
        println!(
            "fit    {:<44} slope {:.4} +- {:.4} (target {:.4})",
            f.case, f.slope, f.stderr, f.target
        );
    }
    for v in &report.verdicts {
        let tag = format!("{:?}", v.status).to_uppercase();
        println!("{tag:<12} {:<56} {:.6} vs {:.6}", v.name, v.metric, v.threshold);
    }
    println!(
        "{} rows, {:.1} s on {} thread(s); wrote {}",
        report.rows.len(),
        report.wall_time_s,
        report.threads,
        dir.display()
    );
    Ok(report.passed())
}
