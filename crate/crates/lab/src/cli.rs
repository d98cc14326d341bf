//! Argument parsing and command dispatch. Exit codes: 0 success, 1 failed
//! verification, 2 configuration or output error, 3 numerical abort.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{
    build, command_defaults, extract_overrides, read_document, ExperimentConfig, Format, Override,
};
use crate::demos::{describe, run_demo, Demo};
use crate::error::LabError;
use crate::report::{jsonl, Artifacts};
use crate::sweep::{run_sweep, sweep_csv};
use crate::verify::{run_verify, summary_line, Fault, Scope, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "score-lab",
    version,
    about = "Toy experiments and theorem checks for self-consistent robust error",
    after_help = "Any config field can be overridden with a dotted flag, e.g. --train.lr 0.05 or --ball.epsilon=0.5."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $SCORE_LAB_OUT, then ./score-lab-out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reproduce a toy figure.
    Demo {
        /// fig1, fig2, overfit_l2, overfit_kl or gradient_alignment.
        name: Demo,
        #[command(flatten)]
        common: Common,
    },
    /// Check the theorems on random models.
    Verify {
        /// all, thm1, variants, equiv, cor1, thm4, thm5, klce or gamma.
        scope: Scope,
        /// Random models or instances for the exact scopes and klce.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
        #[command(flatten)]
        common: Common,
    },
    /// Train every loss and learning rate of the sweep grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

fn load(
    command: &str,
    common: &Common,
    overrides: &[Override],
) -> Result<ExperimentConfig, LabError> {
    let file = common.config.as_deref().map(read_document).transpose()?;
    let mut cfg = build(command_defaults(command), file, overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.outputs.dir = Some(out.clone());
    }
    Ok(cfg)
}

fn write(
    artifacts: &Artifacts,
    cfg: &ExperimentConfig,
    out: &mut dyn Write,
) -> Result<(), LabError> {
    let dir = cfg.outputs.resolve_dir();
    let written = artifacts.write(&dir, &cfg.outputs.formats)?;
    let _ = writeln!(out, "wrote {} files to {}", written.len(), dir.display());
    Ok(())
}

fn execute(cli: Cli, overrides: &[Override], out: &mut dyn Write) -> Result<i32, LabError> {
    match cli.command {
        Command::Demo { name, common } => {
            let cfg = load(name.name(), &common, overrides)?;
            let result = run_demo(name, &cfg)?;
            for s in &result.summaries {
                let _ = writeln!(out, "{}", describe(s));
            }
            write(&result.artifacts, &cfg, out)?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            scope,
            trials,
            inject_fault,
            common,
        } => {
            let cfg = load("verify", &common, overrides)?;
            let opts = VerifyOptions {
                scope,
                trials,
                seed: cfg.seed,
                fault: inject_fault,
                dist: cfg.distribution.clone(),
                ball: cfg.ball,
            };
            let reports = run_verify(&opts)?;
            let mut artifacts = Artifacts::default();
            artifacts.add(
                format!("verify_{}.jsonl", scope.name()),
                Format::Jsonl,
                jsonl(&reports),
            );
            write(&artifacts, &cfg, out)?;
            let failed = reports.iter().find(|r| !r.pass);
            if let Some(r) = failed {
                let _ = writeln!(
                    out,
                    "FAIL {}",
                    serde_json::to_string(r).expect("report serializes")
                );
            }
            let _ = writeln!(out, "{}", summary_line(&reports));
            Ok(if failed.is_some() {
                EXIT_VERIFY
            } else {
                EXIT_OK
            })
        }
        Command::Sweep { common } => {
            let cfg = load("sweep", &common, overrides)?;
            let csv = sweep_csv(&run_sweep(&cfg));
            let _ = write!(out, "{csv}");
            let mut artifacts = Artifacts::default();
            artifacts.add("sweep.csv", Format::Csv, csv);
            write(&artifacts, &cfg, out)?;
            Ok(EXIT_OK)
        }
    }
}

/// Run with `args` (program name first) and return the exit code.
pub fn run(args: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (rest, overrides) = match extract_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli, &overrides, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
