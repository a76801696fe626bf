use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use entangler::scenario::config::parse_assignment;
use entangler::scenario::runner::{output_dir, write_sweep};
use entangler::scenario::{check, run_to_dir, sweep, ScenarioConfig, SweepAxis};
use entangler::Result;

#[derive(Parser)]
#[command(
    name = "entangler",
    version,
    about = "Resonator entanglement from a filtered hot bath"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve every curve of a scenario and write CSVs plus a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fock truncation per resonator.
        #[arg(long)]
        truncation: Option<usize>,
        /// Dotted-key override, e.g. `baths.hot.temperature="70 K"`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run one parameter over a list of values and tabulate E_N.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// T_h, T_i, alpha or N.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Validate a config and print the generator's term audit.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn load(path: &PathBuf, set: &[String], truncation: Option<usize>) -> Result<ScenarioConfig> {
    let mut overrides = set
        .iter()
        .map(|s| parse_assignment(s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(n) = truncation {
        overrides.push(("truncation".into(), Value::from(n)));
    }
    ScenarioConfig::load_with(path, &overrides)
}

fn report_warnings(label: &str, warnings: &[String]) {
    for w in warnings {
        eprintln!("warning [{label}]: {w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            truncation,
            set,
        } => {
            let cfg = load(&config, &set, truncation)?;
            let dir = output_dir(&cfg, out.as_deref());
            let results = run_to_dir(&cfg, &dir)?;
            for c in &results {
                report_warnings(&c.label, &c.warnings);
                let last = c.trajectory.last();
                println!(
                    "{:<12} peak E_N {:.4e}  final E_N {:.4e}  n1 {:.4e}  n2 {:.4e}  steps {}",
                    c.label,
                    c.trajectory.peak_en(),
                    last.en,
                    last.n1,
                    last.n2,
                    c.trajectory.accepted_steps
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
            set,
        } => {
            let cfg = load(&config, &set, None)?;
            let axis: SweepAxis = axis.parse()?;
            let rows = sweep(&cfg, axis, &values)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join("sweep.csv");
                    write_sweep(
                        &rows,
                        std::io::BufWriter::new(std::fs::File::create(&path)?),
                    )?;
                    println!("wrote {}", path.display());
                }
                None => write_sweep(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Check { config, set } => {
            let cfg = load(&config, &set, None)?;
            for rep in check(&cfg)? {
                println!(
                    "curve {}  model {}  dims {}",
                    rep.label, rep.resolved["model"], rep.resolved["dims"]
                );
                for t in &rep.terms {
                    let bath = t.bath.map(|b| b.as_str()).unwrap_or("-");
                    let freq = t
                        .frequency
                        .map(|f| format!("{f:+.6e}"))
                        .unwrap_or_else(|| "-".into());
                    println!(
                        "  {:<22} {:<7} {:>15}  α^{}  rate {:.6e}",
                        t.label, bath, freq, t.alpha_order, t.rate
                    );
                }
                if let Some(s) = &rep.rates {
                    println!(
                        "  pair cooling {:.4e}  heating {:.4e}  dominant {}  regime ratio {:.3e}",
                        s.rates.big_gamma_down,
                        s.rates.big_gamma_up,
                        s.cooling.dominant,
                        s.regime.ratio
                    );
                }
                report_warnings(&rep.label, &rep.warnings);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
