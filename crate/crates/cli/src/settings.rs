//! Pipeline settings shared by every subcommand, from flags and an optional
//! `key = value` file. Flags win over the file; the file wins over defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use netrecon::pipeline::{GraphSource, PipelineConfig};
use netrecon::spectra::Detrend;
use netrecon::{Mode, NoiseModel, RandomGraphParams, Window};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseArg {
    White,
    Lowpass,
}

impl FromStr for NoiseArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "white" => Ok(NoiseArg::White),
            "lowpass" => Ok(NoiseArg::Lowpass),
            _ => Err(format!("unknown noise kind {s:?} (white | lowpass)")),
        }
    }
}

/// Comma-separated angular frequencies, or `auto`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaList(pub Option<Vec<f64>>);

impl FromStr for OmegaList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim() == "auto" {
            return Ok(OmegaList(None));
        }
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(|v| OmegaList(Some(v)))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// key = value file with any of the options below (flag names, `-` or `_`)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Working directory for artifacts
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Edge-list file with the true graph (random graph when absent)
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    /// Random graph: node count
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Random graph: edge probability
    #[arg(long, global = true)]
    pub edge_prob: Option<f64>,
    /// Random graph: lowest edge weight
    #[arg(long, global = true)]
    pub weight_low: Option<f64>,
    /// Random graph: highest edge weight
    #[arg(long, global = true)]
    pub weight_high: Option<f64>,
    /// Random graph: directed edges
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub directed: Option<bool>,
    /// Random graph: never draw both i->j and j->i
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub forbid_reciprocal: Option<bool>,

    /// undirected | unidirectional | grounded-directed | boolean-general
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Integration step
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Samples kept per run
    #[arg(long, global = true)]
    pub n_samples: Option<usize>,
    /// Samples discarded before recording (default n_samples / 10)
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    /// white | lowpass
    #[arg(long, global = true)]
    pub noise: Option<NoiseArg>,
    /// Input noise density level
    #[arg(long, global = true)]
    pub noise_variance: Option<f64>,
    /// Pole of the lowpass noise filter
    #[arg(long, global = true)]
    pub noise_pole: Option<f64>,
    /// Experimental per-channel variance spread
    #[arg(long, global = true)]
    pub noise_spread: Option<f64>,
    /// Welch segment length
    #[arg(long, global = true)]
    pub segment_len: Option<usize>,
    /// Welch overlap fraction
    #[arg(long, global = true)]
    pub overlap: Option<f64>,
    /// hann | rect
    #[arg(long, global = true)]
    pub window: Option<Window>,
    /// constant | linear
    #[arg(long, global = true)]
    pub detrend: Option<Detrend>,
    /// Comma-separated angular frequencies, or auto
    #[arg(long, global = true)]
    pub omegas: Option<OmegaList>,
    /// Relative Boolean edge threshold
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Weights below this are zeroed
    #[arg(long, global = true)]
    pub cleanup_tol: Option<f64>,
    /// Known input density for boolean-general mode
    #[arg(long, global = true)]
    pub sw_known: Option<f64>,
    /// Master seed for the graph and every run
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Closed-form spectra instead of simulation
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub analytic: Option<bool>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Validation(format!("config key {key}: {e}")))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn read_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("config line {}: expected key = value", no + 1))
        })?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

macro_rules! fill {
    ($s:ident, $map:ident; $($field:ident),* $(,)?) => {
        $(
            let key = stringify!($field).replace('_', "-");
            if let Some(v) = $map.remove(&key) {
                if $s.$field.is_none() {
                    $s.$field = Some(parse(&key, &v)?);
                }
            }
        )*
    };
}

impl Settings {
    /// Fills unset options from the config file, if one was given.
    pub fn resolve(mut self) -> Result<Settings, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut map = read_config_file(&text)?;
        fill!(self, map;
            out_dir, graph, n, edge_prob, weight_low, weight_high, directed,
            forbid_reciprocal, mode, dt, n_samples, burn_in, noise, noise_variance,
            noise_pole, noise_spread, segment_len, overlap, window, detrend, omegas,
            threshold, cleanup_tol, sw_known, seed, analytic,
        );
        if let Some(key) = map.keys().next() {
            return Err(CliError::Validation(format!("unknown config key {key:?}")));
        }
        Ok(self)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, CliError> {
        let d = PipelineConfig::default();
        let GraphSource::Random(rp) = d.graph.clone() else {
            unreachable!("default graph source is random")
        };
        let graph = match &self.graph {
            Some(path) => GraphSource::File(path.clone()),
            None => GraphSource::Random(RandomGraphParams {
                n: self.n.unwrap_or(rp.n),
                edge_prob: self.edge_prob.unwrap_or(rp.edge_prob),
                weight_low: self.weight_low.unwrap_or(rp.weight_low),
                weight_high: self.weight_high.unwrap_or(rp.weight_high),
                directed: self.directed.unwrap_or(rp.directed),
                forbid_reciprocal: self.forbid_reciprocal.unwrap_or(rp.forbid_reciprocal),
            }),
        };
        let variance = self.noise_variance.unwrap_or(d.noise.variance);
        let mut noise = match self.noise.unwrap_or(NoiseArg::White) {
            NoiseArg::White => {
                if self.noise_pole.is_some() {
                    return Err(CliError::Validation(
                        "noise-pole only applies to lowpass noise".into(),
                    ));
                }
                NoiseModel::white(variance, 0)
            }
            NoiseArg::Lowpass => {
                let pole = self
                    .noise_pole
                    .ok_or_else(|| CliError::Validation("lowpass noise needs noise-pole".into()))?;
                NoiseModel::filtered(variance, pole, 0)
            }
        };
        noise.channel_spread = self.noise_spread.unwrap_or(0.0);
        let mut welch = d.welch;
        welch.segment_len = self.segment_len.unwrap_or(welch.segment_len);
        welch.overlap = self.overlap.unwrap_or(welch.overlap);
        welch.window = self.window.unwrap_or(welch.window);
        welch.detrend = self.detrend.unwrap_or(welch.detrend);
        Ok(PipelineConfig {
            graph,
            mode: self.mode.unwrap_or(d.mode),
            dt: self.dt.unwrap_or(d.dt),
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            burn_in: self.burn_in.or(d.burn_in),
            noise,
            welch,
            omegas: self.omegas.clone().map_or(d.omegas, |o| o.0),
            threshold: self.threshold.unwrap_or(d.threshold),
            cleanup_tol: self.cleanup_tol.unwrap_or(d.cleanup_tol),
            sw_known: self.sw_known.or(d.sw_known),
            seed: self.seed.unwrap_or(d.seed),
            out_dir: self.out_dir.clone(),
            analytic: self.analytic.unwrap_or(d.analytic),
        })
    }
}
