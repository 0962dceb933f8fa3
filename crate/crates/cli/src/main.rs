use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::warn;

use cz_fidelity::estimators::Sigma0Expansion;
use cz_fidelity::io::{
    read_counts, read_references, write_atomic, write_choi, write_counts, write_references, SimulationConfig,
};
use cz_fidelity::pipeline::{
    estimate, format_sweep_csv, reconstruct, render_table, run_sweep, simulate, EstimateOptions, SweepSpec,
};
use cz_fidelity::tomography::MaxLikSettings;
use cz_fidelity::Error;

/// Simulation and process-fidelity estimation for a two-photon CZ gate.
///
/// Log verbosity is controlled by the RUST_LOG environment variable
/// (default: warn).
#[derive(Parser, Debug)]
#[command(name = "czfid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a 36x36 coincidence table plus reference counts.
    Simulate {
        /// JSON config (pair_rate, visibility or choi_file, drift, seed,
        /// noise_admixture). Built-in defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for counts.csv, references.csv and config.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate all fidelity estimators on a counts file.
    Estimate {
        /// Counts CSV (header j,k,l,m,count).
        counts: PathBuf,
        /// Reference counts CSV (header j,k,window,count).
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Decomposition of the single-qubit identity used by F_MC.
        #[arg(long, value_enum, default_value = "hv")]
        expansion: ExpansionArg,
        /// Also report F~_MC from reference-renormalized counts (needs --refs).
        #[arg(long)]
        renormalize: bool,
        /// Number of bootstrap reconstructions for the uncertainty of F_chi.
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        /// Bootstrap seed (defaults to the seed recorded in the counts file).
        #[arg(long)]
        seed: Option<u64>,
        /// Stopping threshold of the maximum-likelihood iteration.
        #[arg(long, default_value_t = 1e-5)]
        stop_threshold: f64,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate F_chi, F_H and F_D over a visibility grid.
    Sweep {
        /// JSON sweep spec (start, stop, points, analytic, seed, experiment).
        spec: PathBuf,
        /// Output CSV with columns V,F_chi,F_H,F_D.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the process matrix by maximum likelihood.
    Reconstruct {
        /// Counts CSV (header j,k,l,m,count).
        counts: PathBuf,
        /// Output Choi CSV (row,col,re,im).
        #[arg(long)]
        out: PathBuf,
        /// Stopping threshold of the maximum-likelihood iteration.
        #[arg(long, default_value_t = 1e-5)]
        stop_threshold: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExpansionArg {
    Hv,
    Da,
    Rl,
    All,
}

impl ExpansionArg {
    fn expansions(self) -> Vec<Sigma0Expansion> {
        match self {
            ExpansionArg::Hv => vec![Sigma0Expansion::Hv],
            ExpansionArg::Da => vec![Sigma0Expansion::Da],
            ExpansionArg::Rl => vec![Sigma0Expansion::Rl],
            ExpansionArg::All => Sigma0Expansion::ALL.to_vec(),
        }
    }
}

fn maxlik(stop_threshold: f64) -> MaxLikSettings {
    MaxLikSettings {
        stop_threshold,
        ..MaxLikSettings::default()
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let (cfg, base) = match &config {
                Some(path) => (
                    SimulationConfig::read(path).with_context(|| format!("reading config {}", path.display()))?,
                    path.parent().map(Path::to_path_buf).unwrap_or_default(),
                ),
                None => (SimulationConfig::default(), PathBuf::new()),
            };
            let resolved = cfg.resolve(&base).context("invalid config")?;
            let (counts, refs, meta) = simulate(&resolved)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_counts(&out.join("counts.csv"), &counts.to_table(), &meta)?;
            write_references(&out.join("references.csv"), &refs)?;
            write_atomic(&out.join("config.json"), resolved.echo.to_json()?.as_bytes())?;
            println!(
                "wrote {} coincidences (seed {}) to {}",
                counts.total(),
                resolved.experiment.seed,
                out.display()
            );
        }
        Command::Estimate {
            counts,
            refs,
            expansion,
            renormalize,
            bootstrap,
            seed,
            stop_threshold,
            out,
        } => {
            if renormalize && refs.is_none() {
                return Err(Error::InvalidArgument("--renormalize requires --refs".into()).into());
            }
            let (table, meta) = read_counts(&counts).with_context(|| format!("reading {}", counts.display()))?;
            let references = refs
                .as_ref()
                .map(|p| read_references(p).with_context(|| format!("reading {}", p.display())))
                .transpose()?;
            let options = EstimateOptions {
                expansions: expansion.expansions(),
                renormalize,
                bootstrap_runs: bootstrap,
                seed,
                maxlik: maxlik(stop_threshold),
            };
            let report = estimate(&table, references.as_ref(), &meta, &options)?;
            if !report.tomography.converged {
                warn!("maximum-likelihood iteration did not converge");
            }
            print!("{}", render_table(&report));
            if let Some(path) = out {
                write_atomic(&path, report.to_json()?.as_bytes())?;
            }
        }
        Command::Sweep { spec, out } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: SweepSpec = serde_json::from_str(&text)
                .map_err(Error::from)
                .context("invalid sweep spec")?;
            let rows = run_sweep(&spec)?;
            write_atomic(&out, format_sweep_csv(&rows).as_bytes())?;
            println!("wrote {} sweep points to {}", rows.len(), out.display());
        }
        Command::Reconstruct {
            counts,
            out,
            stop_threshold,
        } => {
            let (table, _) = read_counts(&counts).with_context(|| format!("reading {}", counts.display()))?;
            let (chi, f) = reconstruct(&table, maxlik(stop_threshold))?;
            write_choi(&out, &chi)?;
            println!("F_chi = {f:.6}; Choi matrix written to {}", out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_degenerate() => 3,
        Some(Error::Numerical(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
