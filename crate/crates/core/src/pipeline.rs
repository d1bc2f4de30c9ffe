//! End-to-end runs: graph, simulation (one ungrounded run plus one per
//! grounded node), spectra, reconstruction and evaluation.
//!
//! Each stage is exposed on its own so that running the stages one at a time
//! through files gives the same bytes as [`run_pipeline`].

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{self, RandomGraphParams, SystemMatrix, WeightedDigraph};
use crate::metrics::{self, EvalResult};
use crate::reconstruct::{self, Mode, ReconstructOptions, ReconstructionReport};
use crate::simulate::{self, NoiseModel, TimeSeriesEnsemble, DEFAULT_DT};
use crate::spectra::{self, CpsdMatrix, WelchParams};

/// Decay added when turning a Laplacian into strictly stable general dynamics.
pub const BOOLEAN_DECAY: f64 = 0.5;

pub const GRAPH_FILE: &str = "graph.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const EVALUATION_FILE: &str = "evaluation.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Random(RandomGraphParams),
    Inline(WeightedDigraph),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub graph: GraphSource,
    pub mode: Mode,
    pub dt: f64,
    /// Samples kept per run, after burn-in.
    pub n_samples: usize,
    /// Leading samples discarded; `None` means 10% of `n_samples`.
    pub burn_in: Option<usize>,
    pub noise: NoiseModel,
    pub welch: WelchParams,
    /// Analysis frequencies; `None` picks [`spectra::default_omegas`].
    pub omegas: Option<Vec<f64>>,
    pub threshold: f64,
    pub cleanup_tol: f64,
    /// Known input density for boolean-general mode.
    pub sw_known: Option<f64>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Use closed-form spectra instead of simulating.
    pub analytic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            graph: GraphSource::Random(RandomGraphParams {
                n: 5,
                edge_prob: 0.4,
                weight_low: 0.5,
                weight_high: 2.0,
                directed: true,
                forbid_reciprocal: false,
            }),
            mode: Mode::GroundedDirected,
            dt: DEFAULT_DT,
            n_samples: 200_000,
            burn_in: None,
            noise: NoiseModel::white(1.0, 0),
            welch: WelchParams::default(),
            omegas: None,
            threshold: reconstruct::DEFAULT_THRESHOLD,
            cleanup_tol: reconstruct::DEFAULT_CLEANUP_TOL,
            sw_known: None,
            seed: 0,
            out_dir: None,
            analytic: false,
        }
    }
}

impl PipelineConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_samples / 10)
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.omegas
            .clone()
            .unwrap_or_else(|| spectra::default_omegas(self.dt, &self.welch))
    }

    pub fn reconstruct_options(&self) -> ReconstructOptions {
        ReconstructOptions {
            kernel: None,
            cleanup_tol: self.cleanup_tol,
            threshold: self.threshold,
        }
    }
}

/// One ungrounded item plus one per grounded node (by position), the latter
/// empty for modes that need no grounding.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet<T> {
    pub full: T,
    pub grounded: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub truth: WeightedDigraph,
    pub spectra: RunSet<Vec<CpsdMatrix>>,
    pub report: ReconstructionReport,
    pub evaluation: EvalResult,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed for the ungrounded run (`None`) or the run grounding node `label`.
pub fn run_seed(seed: u64, grounded: Option<usize>) -> u64 {
    seed ^ mix64(grounded.map_or(0, |l| l as u64 + 1))
}

fn fan_out<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn load_graph(source: &GraphSource, seed: u64) -> Result<WeightedDigraph> {
    match source {
        GraphSource::File(path) => fs::read_to_string(path)?.parse(),
        GraphSource::Random(p) => graph::random_graph(p, seed),
        GraphSource::Inline(g) => Ok(g.clone()),
    }
}

/// Generator simulated for `mode`, checking that the graph suits it.
pub fn system_for_mode(g: &WeightedDigraph, mode: Mode) -> Result<SystemMatrix> {
    let l = graph::build_laplacian(g);
    match mode {
        Mode::Undirected => {
            let a = g.adjacency();
            if a != a.transpose() {
                return Err(Error::InvalidGraph(
                    "undirected mode needs a symmetric graph".into(),
                ));
            }
            Ok(l)
        }
        Mode::Unidirectional => {
            if !graph::is_unidirectional(g) {
                return Err(Error::InvalidGraph(
                    "unidirectional mode needs a graph without reciprocal edges".into(),
                ));
            }
            Ok(l)
        }
        Mode::GroundedDirected => Ok(l),
        Mode::BooleanGeneral => SystemMatrix::general_from_laplacian(&l, BOOLEAN_DECAY),
    }
}

/// Simulates the ungrounded system and, when `mode` needs it, every grounding.
pub fn simulate_runs(
    system: &SystemMatrix,
    mode: Mode,
    cfg: &PipelineConfig,
) -> Result<RunSet<TimeSeriesEnsemble>> {
    let n = system.n();
    let burn_in = cfg.burn_in();
    let total = cfg.n_samples + burn_in;
    let run = |grounded: Option<usize>| -> Result<TimeSeriesEnsemble> {
        let label = grounded.map(|j| system.labels()[j]);
        let noise = cfg.noise.with_seed(run_seed(cfg.seed, label));
        let w = simulate::generate_noise(&noise, n, total, cfg.dt)?;
        match grounded {
            None => simulate::integrate(system, &w, burn_in),
            Some(j) => simulate::integrate_grounded(system, j, &w, burn_in),
        }
    };
    let count = if mode.needs_grounding() { n } else { 0 };
    let mut all = fan_out(count + 1, |k| run(k.checked_sub(1)))?;
    let full = all.remove(0);
    Ok(RunSet {
        full,
        grounded: all,
    })
}

/// Welch spectra of every run at the requested frequencies.
pub fn estimate_spectra(
    runs: &RunSet<TimeSeriesEnsemble>,
    welch: &WelchParams,
    omegas: Option<&[f64]>,
) -> Result<RunSet<Vec<CpsdMatrix>>> {
    let auto;
    let omegas = match omegas {
        Some(o) => o,
        None => {
            auto = spectra::default_omegas(runs.full.dt, welch);
            &auto
        }
    };
    let series: Vec<&TimeSeriesEnsemble> =
        std::iter::once(&runs.full).chain(&runs.grounded).collect();
    let mut all = fan_out(series.len(), |k| {
        spectra::welch_cpsd(series[k], welch, omegas)
    })?;
    let full = all.remove(0);
    Ok(RunSet {
        full,
        grounded: all,
    })
}

/// Closed-form spectra with `S_w` taken from the noise model.
pub fn analytic_spectra(
    system: &SystemMatrix,
    mode: Mode,
    noise: &NoiseModel,
    omegas: &[f64],
) -> Result<RunSet<Vec<CpsdMatrix>>> {
    let at = |m: &SystemMatrix| -> Result<Vec<CpsdMatrix>> {
        omegas
            .iter()
            .map(|&w| spectra::analytic_cpsd(m, noise.psd(w), w))
            .collect()
    };
    let grounded = if mode.needs_grounding() {
        fan_out(system.n(), |j| at(&graph::ground(system, j)?))?
    } else {
        Vec::new()
    };
    Ok(RunSet {
        full: at(system)?,
        grounded,
    })
}

/// Per-frequency reconstruction followed by the entrywise average.
pub fn reconstruct_all(
    mode: Mode,
    spectra: &RunSet<Vec<CpsdMatrix>>,
    sw_known: Option<f64>,
    opts: &ReconstructOptions,
) -> Result<ReconstructionReport> {
    let k = spectra.full.len();
    if k == 0 {
        return Err(Error::InvalidParameter(
            "no frequencies to reconstruct at".into(),
        ));
    }
    if let Some(bad) = spectra.grounded.iter().find(|g| g.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: bad.len(),
        });
    }
    let reports = fan_out(k, |f| {
        let grounded: Vec<CpsdMatrix> = spectra.grounded.iter().map(|g| g[f].clone()).collect();
        reconstruct::reconstruct(mode, &spectra.full[f], &grounded, sw_known, opts)
    })?;
    reconstruct::multi_frequency_average(&reports)
}

/// Compares against the truth with the edge cut at the report's relative
/// threshold times its largest recovered magnitude.
pub fn evaluate(truth: &WeightedDigraph, report: &ReconstructionReport) -> Result<EvalResult> {
    let a = &report.adjacency;
    let max = (0..a.nrows())
        .flat_map(|i| (0..a.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|ij| a[ij].abs())
        .fold(0.0, f64::max);
    metrics::compare(&truth.adjacency(), a, report.threshold * max)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let truth = load_graph(&cfg.graph, cfg.seed).map_err(|e| e.in_stage("graph"))?;
    let system = system_for_mode(&truth, cfg.mode).map_err(|e| e.in_stage("graph"))?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).in_stage("write"))?;
        write_graph(dir, &truth).map_err(|e| e.in_stage("write"))?;
    }

    let spectra = if cfg.analytic {
        analytic_spectra(&system, cfg.mode, &cfg.noise, &cfg.omegas())
            .map_err(|e| e.in_stage("spectra"))?
    } else {
        let runs = simulate_runs(&system, cfg.mode, cfg).map_err(|e| e.in_stage("simulate"))?;
        if let Some(dir) = &cfg.out_dir {
            write_runs(dir, &runs).map_err(|e| e.in_stage("write"))?;
        }
        estimate_spectra(&runs, &cfg.welch, cfg.omegas.as_deref())
            .map_err(|e| e.in_stage("spectra"))?
    };
    if let Some(dir) = &cfg.out_dir {
        write_spectra(dir, &spectra).map_err(|e| e.in_stage("write"))?;
    }

    let mut report = reconstruct_all(cfg.mode, &spectra, cfg.sw_known, &cfg.reconstruct_options())
        .map_err(|e| e.in_stage("reconstruct"))?;
    let evaluation = evaluate(&truth, &report).map_err(|e| e.in_stage("evaluate"))?;
    report.evaluation = Some(evaluation);
    if let Some(dir) = &cfg.out_dir {
        write_report(dir, &report).map_err(|e| e.in_stage("write"))?;
        fs::write(dir.join(EVALUATION_FILE), evaluation.to_text())
            .map_err(|e| Error::from(e).in_stage("write"))?;
    }
    Ok(PipelineOutput {
        truth,
        spectra,
        report,
        evaluation,
    })
}

fn ts_name(label: Option<usize>) -> String {
    label.map_or_else(|| "ts_full.bin".into(), |l| format!("ts_ground_{l}.bin"))
}

fn cpsd_name(label: Option<usize>) -> String {
    label.map_or_else(
        || "cpsd_full.csv".into(),
        |l| format!("cpsd_ground_{l}.csv"),
    )
}

/// Label of the grounded node missing from `labels` relative to `full`.
fn grounded_label(full: &[usize], labels: &[usize]) -> Result<usize> {
    full.iter()
        .copied()
        .find(|l| !labels.contains(l))
        .filter(|_| labels.len() + 1 == full.len())
        .ok_or_else(|| {
            Error::InvalidParameter("grounded run does not drop exactly one node".into())
        })
}

pub fn write_graph(dir: &Path, g: &WeightedDigraph) -> Result<()> {
    fs::write(dir.join(GRAPH_FILE), g.to_edge_list())?;
    Ok(())
}

pub fn write_runs(dir: &Path, runs: &RunSet<TimeSeriesEnsemble>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let write = |name: String, ts: &TimeSeriesEnsemble| -> Result<()> {
        let file = fs::File::create(dir.join(name))?;
        ts.write_binary(std::io::BufWriter::new(file))
    };
    write(ts_name(None), &runs.full)?;
    for ts in &runs.grounded {
        write(
            ts_name(Some(grounded_label(&runs.full.labels, &ts.labels)?)),
            ts,
        )?;
    }
    Ok(())
}

/// Files named `{prefix}{label}{suffix}`, sorted by label.
fn grounded_files(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        if let Some(label) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(suffix))
            .and_then(|l| l.parse::<usize>().ok())
        {
            found.push((label, path));
        }
    }
    found.sort();
    Ok(found)
}

pub fn read_runs(dir: &Path) -> Result<RunSet<TimeSeriesEnsemble>> {
    let read = |path: &Path| -> Result<TimeSeriesEnsemble> {
        TimeSeriesEnsemble::read_binary(std::io::BufReader::new(fs::File::open(path)?))
    };
    let full = read(&dir.join(ts_name(None)))?;
    let grounded = grounded_files(dir, "ts_ground_", ".bin")?
        .iter()
        .map(|(_, p)| read(p))
        .collect::<Result<_>>()?;
    Ok(RunSet { full, grounded })
}

pub fn write_spectra(dir: &Path, s: &RunSet<Vec<CpsdMatrix>>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(cpsd_name(None)), spectra::cpsd_to_csv(&s.full))?;
    let full_labels = s.full.first().map(|m| m.labels.clone()).unwrap_or_default();
    for g in &s.grounded {
        let labels = g.first().map(|m| m.labels.as_slice()).unwrap_or_default();
        let label = grounded_label(&full_labels, labels)?;
        fs::write(dir.join(cpsd_name(Some(label))), spectra::cpsd_to_csv(g))?;
    }
    Ok(())
}

pub fn read_spectra(dir: &Path) -> Result<RunSet<Vec<CpsdMatrix>>> {
    let full = spectra::cpsd_from_csv(&fs::read_to_string(dir.join(cpsd_name(None)))?)?;
    let grounded = grounded_files(dir, "cpsd_ground_", ".csv")?
        .iter()
        .map(|(_, p)| spectra::cpsd_from_csv(&fs::read_to_string(p)?))
        .collect::<Result<_>>()?;
    Ok(RunSet { full, grounded })
}

pub fn write_report(dir: &Path, report: &ReconstructionReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORT_FILE), report.to_text())?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ReconstructionReport> {
    ReconstructionReport::from_text(&fs::read_to_string(path)?)
}

/// Relative error of each true edge weight in `recovered`.
pub fn edge_relative_errors(truth: &WeightedDigraph, recovered: &DMatrix<f64>) -> Vec<f64> {
    truth
        .edges()
        .iter()
        .map(|e| (recovered[(e.dst, e.src)] - e.weight).abs() / e.weight)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn p3_config() -> PipelineConfig {
        PipelineConfig {
            graph: GraphSource::Inline(
                WeightedDigraph::undirected(3, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)])
                    .unwrap(),
            ),
            mode: Mode::Undirected,
            analytic: true,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn analytic_p3() {
        let out = run_pipeline(&p3_config()).unwrap();
        assert_eq!(out.evaluation.f1, 1.0);
        assert!(out.evaluation.frobenius_rel_error <= 1e-8);
        assert_eq!(out.report.omegas.len(), 5);
    }

    #[test]
    fn seeds_differ_per_node() {
        let s: Vec<u64> = (0..4).map(|j| run_seed(7, Some(j))).collect();
        assert!(s.iter().all(|&x| x != run_seed(7, None)));
        let mut d = s.clone();
        d.dedup();
        assert_eq!(d.len(), 4);
    }

    #[test]
    fn mode_checks() {
        let g = WeightedDigraph::directed(2, vec![Edge::new(0, 1, 1.0)]).unwrap();
        assert!(system_for_mode(&g, Mode::Undirected).is_err());
        assert!(system_for_mode(&g, Mode::Unidirectional).is_ok());
        let r =
            WeightedDigraph::directed(2, vec![Edge::new(0, 1, 1.0), Edge::new(1, 0, 1.0)]).unwrap();
        assert!(system_for_mode(&r, Mode::Unidirectional).is_err());
        let gm = system_for_mode(&g, Mode::BooleanGeneral).unwrap();
        assert!(gm.kernel_vector().is_none());
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let cfg = PipelineConfig {
            graph: GraphSource::File("/nonexistent/graph.txt".into()),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("graph:"));
        assert!(!err.is_numerical());
    }

    #[test]
    fn divergence_is_numerical() {
        let cfg = PipelineConfig {
            graph: GraphSource::Inline(
                WeightedDigraph::undirected(2, vec![Edge::new(0, 1, 500.0)]).unwrap(),
            ),
            mode: Mode::Undirected,
            n_samples: 20_000,
            welch: WelchParams {
                segment_len: 512,
                ..WelchParams::default()
            },
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("simulate:"));
        assert!(err.is_numerical());
    }
}
