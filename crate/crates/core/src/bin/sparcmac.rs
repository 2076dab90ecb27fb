use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sparcmac::harness::{
    analyze_command, exhaustive_map_oracle, exit_code, run_monte_carlo, sweep_snr, Experiment, SimConfig,
};
use sparcmac::{Error, Result};

#[derive(Parser)]
#[command(name = "sparcmac", version, about = "Sparse regression codes over MIMO multiple-access channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo trials.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Output directory; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Capacity region, rate suprema, VTF and MMSE curves.
    Analyze,
    /// Design and emit the configured power allocations.
    DesignPa,
    /// Monte Carlo at every configured SNR point.
    Simulate,
    /// Simulate plus the limit-SNR marker.
    Sweep,
    /// Exhaustive MAP decoding on a tiny single-user config.
    Oracle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Named output documents for one command.
type Outputs = Vec<(&'static str, String)>;

fn load_config(cli: &Cli) -> Result<SimConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = SimConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outputs> {
    let cfg = load_config(cli)?;
    let json = cli.format == Format::Json;
    let mut out: Outputs = vec![("config.toml", cfg.to_toml_string()?)];
    match cli.command {
        Command::Analyze => {
            let rep = analyze_command(&cfg)?;
            if json {
                out.push(("analysis.json", rep.to_json()?));
            } else {
                out.push(("analysis.csv", rep.summary_csv()));
                out.push(("vtf.csv", rep.vtf_csv()));
                out.push(("mmse.csv", rep.mmse_csv()));
            }
        }
        Command::DesignPa => {
            let exp = Experiment::prepare(&cfg)?;
            if json {
                out.push(("pa.json", serde_json::to_string_pretty(&exp.designs)?));
            } else {
                let mut csv = String::from("config_hash,user,scheme,section,power\n");
                for (u, d) in exp.designs.iter().enumerate() {
                    for (k, p) in d.pa.powers().iter().enumerate() {
                        csv.push_str(&format!("{},{u},{},{k},{p:e}\n", exp.hash, d.scheme.name()));
                    }
                }
                out.push(("pa.csv", csv));
            }
        }
        Command::Simulate => {
            let rep = run_monte_carlo(&cfg, cli.workers)?;
            if json {
                out.push(("report.json", rep.to_json()?));
            } else {
                out.push(("report.csv", rep.to_csv()));
                out.push(("trajectory.csv", rep.trajectory_csv()));
            }
        }
        Command::Sweep => {
            let sw = sweep_snr(&cfg, cli.workers)?;
            if json {
                out.push(("sweep.json", serde_json::to_string_pretty(&sw)?));
            } else {
                out.push(("sweep.csv", sw.report.to_csv()));
                let declared = sw.declared_limit_snr_db.map(|d| d.to_string()).unwrap_or_default();
                let consistent = sw.marker_consistent.map(|c| c.to_string()).unwrap_or_default();
                out.push((
                    "limit.csv",
                    format!(
                        "config_hash,seed,limit_snr_db,declared_limit_snr_db,marker_consistent\n{},{},{},{declared},{consistent}\n",
                        sw.report.config_hash, sw.report.seed, sw.limit_snr_db
                    ),
                ));
            }
        }
        Command::Oracle => {
            let rep = exhaustive_map_oracle(&cfg)?;
            if json {
                out.push(("oracle.json", serde_json::to_string_pretty(&rep)?));
            } else {
                out.push(("oracle.csv", rep.to_csv()));
            }
        }
    }
    Ok(out)
}

fn emit(outputs: &Outputs, dir: Option<&Path>) -> Result<()> {
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (name, body) in outputs {
                std::fs::write(dir.join(name), body)?;
            }
        }
        None => {
            // the echoed config only goes to files
            for (name, body) in outputs.iter().skip(1) {
                println!("# {name}");
                print!("{body}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|out| emit(&out, cli.out.as_deref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
