use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jumpdiff::harness::{
    emit_plotdata, parse_discretization, parse_estimator, run_experiment, ExperimentConfig, Preset,
};
use jumpdiff::verification::{render_report, run_suite, Suite};
use jumpdiff::Result;

#[derive(Parser)]
#[command(name = "jumpdiff", version, about = "Monte Carlo and multilevel Monte Carlo \
estimation for elliptic problems with jump-diffusion random coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write its CSV table and manifest.
    Run(RunArgs),
    /// Run a verification suite.
    Verify {
        /// One of: unit, invariants, acceptance.
        #[arg(long)]
        suite: String,
    },
    /// Derive plot-data files from a results CSV.
    Plotdata {
        /// Path to a results CSV produced by `jumpdiff run`.
        csv: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// One of: bm-uniform-1d, se-gig-1d, hetero-2d, custom.
    #[arg(long)]
    preset: String,
    /// One of: mc, mlmc, mlmc-bootstrap.
    #[arg(long)]
    estimator: String,
    /// One of: adaptive, uniform.
    #[arg(long)]
    discretization: String,
    /// Largest study level L (rows cover L = 0..=lmax).
    #[arg(long)]
    lmax: u32,
    /// Reference level (must exceed lmax).
    #[arg(long = "ref")]
    reference: u32,
    /// Replications per study level.
    #[arg(long)]
    reps: u32,
    /// Master seed.
    #[arg(long)]
    seed: u64,
    /// Output directory (default: $JUMPDIFF_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap; 1 selects bit-stable verification mode.
    #[arg(long)]
    threads: Option<usize>,
    /// Write one sampled coefficient on a plotting grid.
    #[arg(long)]
    dump_coefficient: bool,
    /// Write one sampled mesh.
    #[arg(long)]
    dump_mesh: bool,
    /// Extra overrides: key=value pairs, or config=<path> to load a flat
    /// config file first.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let preset = Preset::parse(&args.preset)?;
    let dimension = if preset == Preset::Hetero2d { 2 } else { 1 };
    let mut cfg = ExperimentConfig::preset_defaults(preset, dimension);
    cfg.estimator = parse_estimator(&args.estimator)?;
    cfg.discretization = parse_discretization(&args.discretization)?;
    cfg.l_max = args.lmax;
    cfg.reference_level = args.reference;
    cfg.replications = args.reps;
    cfg.master_seed = args.seed;
    cfg.threads = args.threads;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.dump_coefficient = args.dump_coefficient;
    cfg.dump_mesh = args.dump_mesh;
    for token in &args.overrides {
        let (key, value) = token.split_once('=').ok_or_else(|| {
            jumpdiff::Error::Config(format!("override '{token}' is not key=value"))
        })?;
        let (key, value) = (key.trim().trim_start_matches("--"), value.trim());
        if key == "config" {
            cfg.apply_file(std::path::Path::new(value))?;
        } else {
            cfg.apply_override(key, value)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| {
            jumpdiff::Error::Config(format!("failed to configure {threads} worker threads: {e}"))
        })?;
    }
    let artifacts = run_experiment(&cfg)?;
    println!("wrote {}", artifacts.csv_path.display());
    println!("wrote {}", artifacts.manifest_path.display());
    match artifacts.slope {
        Some(slope) => println!("fitted slope: {slope:.4}"),
        None => println!("fitted slope: n/a (need at least 3 rows)"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Verify { suite } => Suite::parse(suite).and_then(run_suite).and_then(|reports| {
            print!("{}", render_report(&reports));
            if reports.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(jumpdiff::Error::Config("verification failures (see report)".into()))
            }
        }),
        Command::Plotdata { csv } => emit_plotdata(csv).map(|(rmse, time)| {
            println!("wrote {}", rmse.display());
            println!("wrote {}", time.display());
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
