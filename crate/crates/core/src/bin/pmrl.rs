use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pmrl::harness::{gradcheck, run_suite, train_to_dir, GradcheckConfig, RunConfig, SuiteName};
use pmrl::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_ASSERTION: u8 = 2;

#[derive(Parser)]
#[command(
    name = "pmrl",
    version,
    about = "Singular-value multimodal alignment experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one objective and write trajectory, summary and checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the run seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check every analytic gradient against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Non-degenerate cases per suite.
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Draw fully aligned (degenerate) inputs; such cases are skipped.
        #[arg(long)]
        aligned_init: bool,
    },
    /// Run a comparison suite and evaluate its orderings.
    Suite {
        /// collapse-demo, ablate or robustness
        name: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let cfg = load(&config, seed)?;
            let res = train_to_dir(&cfg, &out)?;
            let s = &res.summary;
            println!(
                "{} steps={} sigma1_ratio={:.4} mean_cosine={:.4} recall@1={:.4} auc={} ({:.1}s)",
                s.objective,
                s.steps,
                s.train_report.mean_sigma1_ratio,
                s.train_report.mean_pairwise_cosine,
                s.mean_recall_at_1,
                s.auc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
                res.wall_clock_seconds,
            );
            Ok(0)
        }
        Command::Gradcheck {
            seed,
            cases,
            aligned_init,
        } => {
            let report = gradcheck(&GradcheckConfig {
                seed,
                cases,
                aligned_init,
                ..GradcheckConfig::default()
            });
            for s in &report.suites {
                println!(
                    "{:<22} {} cases={} skipped={} max_rel_err={:.3e} tol={:.0e}",
                    s.name,
                    if s.passed { "PASS" } else { "FAIL" },
                    s.cases,
                    s.skipped,
                    s.max_rel_error,
                    s.tolerance,
                );
            }
            Ok(if report.passed() { 0 } else { EXIT_ASSERTION })
        }
        Command::Suite {
            name,
            config,
            out,
            seed,
        } => {
            let suite: SuiteName = name.parse()?;
            let cfg = load(&config, seed)?;
            let cmp = run_suite(suite, &cfg, Some(&out))?;
            for o in &cmp.orderings {
                println!(
                    "{} {:<40} per-seed {:?} ({})",
                    if o.holds { "PASS" } else { "FAIL" },
                    o.name,
                    o.per_seed,
                    o.rule,
                );
            }
            Ok(if cmp.all_hold { 0 } else { EXIT_ASSERTION })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
