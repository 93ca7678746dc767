use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use molrg_lab::plot::{plot_curves, PlotStyle};
use molrg_lab::spec::{resolve, Overrides};
use molrg_lab::{run, LabError, LabResult};

#[derive(Parser)]
#[command(name = "molrg-lab", version, about = "Run mixture-of-low-rank-Gaussian experiments and plot their results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one named experiment.
    Run {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        out: PathBuf,
        /// First repetition seed; further repetitions use seed+1, seed+2, ...
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to the hardware parallelism).
        #[arg(long, env = "MOLRG_LAB_THREADS")]
        threads: Option<usize>,
        /// JSON spec overrides, or a previous run's meta.json.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Plot curve CSVs into one SVG.
    Plot {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

fn execute(cli: Cli) -> LabResult<()> {
    match cli.command {
        Command::Run { experiment, out, seed, threads, config } => {
            if let Some(n) = threads {
                if n == 0 {
                    return Err(LabError::InvalidSpec("--threads must be positive".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| LabError::InvalidSpec(e.to_string()))?;
            }
            let config_file = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| LabError::InvalidSpec(format!("{}: {e}", p.display())))?;
                    Some(serde_json::from_str(&text).map_err(|e| LabError::InvalidSpec(format!("{}: {e}", p.display())))?)
                }
                None => None,
            };
            let spec = resolve(&experiment, &Overrides { config_file, seed, out: Some(out) })?;
            let report = run(&spec)?;
            for f in &report.ctx.files {
                println!("{}", spec.out.join(f).display());
            }
            for n in &report.ctx.notes {
                eprintln!("{n}");
            }
            eprintln!("done in {:.1}s", report.wall_time_s);
            Ok(())
        }
        Command::Plot { inputs, out, title } => plot_curves(&inputs, &out, &PlotStyle { title, ..Default::default() }),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
