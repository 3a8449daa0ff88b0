use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use cruise_cli::commands::{self, AgentSpec};
use cruise_cli::failure::ErrorRecord;
use cruise_cli::report;

#[derive(Parser)]
#[command(name = "cruise", version, about = "Spectrum-mobility beam tracking: solve, evaluate, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the solver or simulation seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve policies for every agent and mobility value.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Output directory for policy, model and manifest files.
        #[arg(long)]
        out: PathBuf,
        /// Mobility values to solve (default: sweep grid and robustness values).
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// Agents to solve, e.g. `sm,f39` (default: all).
        #[arg(long, value_delimiter = ',')]
        agents: Vec<String>,
    },
    /// Random-walk evaluation over the mobility grid.
    SweepP {
        #[command(flatten)]
        common: Common,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Directory written by `solve`.
        #[arg(long, default_value = "policies")]
        policies: PathBuf,
        /// Also write every trial as JSON lines.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Constant-speed traversal study over the speed grid.
    Robustness {
        #[command(flatten)]
        common: Common,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Directory written by `solve`.
        #[arg(long, default_value = "policies")]
        policies: PathBuf,
        /// Also write every traversal as JSON lines.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Summarize result tables.
    Report {
        #[command(flatten)]
        common: Common,
        /// Output text file.
        #[arg(long)]
        out: PathBuf,
        /// CSV files from `sweep-p` or `robustness`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn config(common: &Common) -> Result<cruise_core::ExperimentConfig> {
    match &common.config {
        Some(p) => commands::load_config(p),
        None => Ok(cruise_core::ExperimentConfig::default()),
    }
}

fn set_threads(common: &Common) -> Result<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { common, out, p, agents } => {
            set_threads(&common)?;
            let cfg = config(&common)?;
            let ps = if p.is_empty() { commands::required_p(&cfg) } else { p };
            for v in &ps {
                if !(0.0..=1.0).contains(v) {
                    return Err(cruise_core::Error::InvalidParameter {
                        field: "p".into(),
                        reason: format!("{v} is not in [0, 1]"),
                    }
                    .into());
                }
            }
            let all = commands::agent_specs(&cfg)?;
            let chosen: Vec<AgentSpec> = if agents.is_empty() {
                all
            } else {
                let mut v = Vec::new();
                for a in &agents {
                    match all.iter().find(|s| &s.label == a) {
                        Some(s) => v.push(s.clone()),
                        None => {
                            return Err(cruise_core::Error::InvalidParameter {
                                field: "agents".into(),
                                reason: format!("unknown agent `{a}`"),
                            }
                            .into())
                        }
                    }
                }
                v
            };
            let m = commands::solve(&cfg, &out, common.seed, &ps, &chosen)?;
            eprintln!("solved {} policies into {}", m.entries.len(), out.display());
        }
        Command::SweepP { common, out, policies, traces } => {
            set_threads(&common)?;
            let cfg = config(&common)?;
            let rows = commands::sweep_p(&cfg, &policies, &out, common.seed, traces.as_deref())?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Robustness { common, out, policies, traces } => {
            set_threads(&common)?;
            let cfg = config(&common)?;
            let rows = commands::robustness(&cfg, &policies, &out, common.seed, traces.as_deref())?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Report { common, out, inputs } => {
            let cfg = match &common.config {
                Some(p) => Some(commands::load_config(p)?),
                None => None,
            };
            report::report(&inputs, cfg.as_ref(), &out)?;
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let rec = ErrorRecord::from_error(&e);
            eprintln!("{}", serde_json::to_string(&rec).unwrap_or_else(|_| format!("{e:#}")));
            ExitCode::from(rec.exit_code() as u8)
        }
    }
}
