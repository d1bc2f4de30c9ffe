use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netrecon::pipeline::{self, GraphSource, PipelineConfig};

mod settings;

use settings::Settings;

/// Reconstruct network topology and weights from consensus-dynamics spectra.
#[derive(Debug, Parser)]
#[command(name = "netrecon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the true graph to <out-dir>/graph.txt
    Gen,
    /// Simulate the ungrounded run and, if the mode needs them, every grounding
    Simulate,
    /// Estimate cross-spectra from the runs (or closed form with --analytic)
    Spectra,
    /// Reconstruct from the spectra and write report.txt
    Reconstruct,
    /// Score report.txt against the true graph
    Eval,
    /// Run every stage end to end
    Pipeline,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Core(netrecon::Error),
}

impl From<netrecon::Error> for CliError {
    fn from(e: netrecon::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn work_dir(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    cfg.out_dir
        .clone()
        .ok_or_else(|| CliError::Validation("--out-dir is required".into()))
}

/// Truth from --graph, else the graph.txt written by `gen`.
fn truth_graph(cfg: &PipelineConfig, dir: &Path) -> Result<netrecon::WeightedDigraph, CliError> {
    let source = match &cfg.graph {
        GraphSource::File(p) => GraphSource::File(p.clone()),
        _ => GraphSource::File(dir.join(pipeline::GRAPH_FILE)),
    };
    Ok(pipeline::load_graph(&source, cfg.seed)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = cli.settings.resolve()?;
    let cfg = settings.pipeline_config()?;
    match cli.command {
        Command::Pipeline => {
            let out = pipeline::run_pipeline(&cfg)?;
            print!("{}", out.evaluation.to_text());
            if let Some(dir) = &cfg.out_dir {
                println!("artifacts {}", dir.display());
            }
        }
        Command::Gen => {
            let dir = work_dir(&cfg)?;
            let g = pipeline::load_graph(&cfg.graph, cfg.seed)?;
            pipeline::system_for_mode(&g, cfg.mode)?;
            fs::create_dir_all(&dir)?;
            pipeline::write_graph(&dir, &g)?;
            println!("graph n={} edges={}", g.n(), g.edges().len());
        }
        Command::Simulate => {
            let dir = work_dir(&cfg)?;
            let g = truth_graph(&cfg, &dir)?;
            let system = pipeline::system_for_mode(&g, cfg.mode)?;
            let runs = pipeline::simulate_runs(&system, cfg.mode, &cfg)?;
            pipeline::write_runs(&dir, &runs)?;
            println!(
                "runs {} samples={}",
                runs.grounded.len() + 1,
                runs.full.n_samples()
            );
        }
        Command::Spectra => {
            let dir = work_dir(&cfg)?;
            let spectra = if cfg.analytic {
                let g = truth_graph(&cfg, &dir)?;
                let system = pipeline::system_for_mode(&g, cfg.mode)?;
                pipeline::analytic_spectra(&system, cfg.mode, &cfg.noise, &cfg.omegas())?
            } else {
                let runs = pipeline::read_runs(&dir)?;
                pipeline::estimate_spectra(&runs, &cfg.welch, cfg.omegas.as_deref())?
            };
            pipeline::write_spectra(&dir, &spectra)?;
            let omegas: Vec<String> = spectra.full.iter().map(|s| s.omega.to_string()).collect();
            println!("omegas {}", omegas.join(" "));
        }
        Command::Reconstruct => {
            let dir = work_dir(&cfg)?;
            let spectra = pipeline::read_spectra(&dir)?;
            let report = pipeline::reconstruct_all(
                cfg.mode,
                &spectra,
                cfg.sw_known,
                &cfg.reconstruct_options(),
            )?;
            pipeline::write_report(&dir, &report)?;
            print!("{}", netrecon::linalg::matrix_to_csv(&report.adjacency));
        }
        Command::Eval => {
            let dir = work_dir(&cfg)?;
            let truth = truth_graph(&cfg, &dir)?;
            let mut report = pipeline::read_report(&dir.join(pipeline::REPORT_FILE))?;
            report.evaluation = None;
            let eval = pipeline::evaluate(&truth, &report)?;
            report.evaluation = Some(eval);
            pipeline::write_report(&dir, &report)?;
            fs::write(dir.join(pipeline::EVALUATION_FILE), eval.to_text())?;
            print!("{}", eval.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netrecon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
