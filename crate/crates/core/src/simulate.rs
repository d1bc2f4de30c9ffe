//! Noise generation and Euler-Maruyama integration of the network dynamics.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{self, SystemMatrix};
use crate::linalg::{fmt17, matvec_into};

/// States beyond this magnitude abort the integration.
pub const DIVERGENCE_LIMIT: f64 = 1e9;
pub const DEFAULT_DT: f64 = 0.01;

const MAGIC: &[u8; 8] = b"NRECTS01";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    White,
    /// White noise shaped by `u' = -pole u + xi`, giving `S_w = var / (w^2 + pole^2)`.
    FilteredLowpass {
        pole: f64,
    },
}

/// Mutually uncorrelated, identically distributed input noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Flat spectral density level `sigma^2` of the underlying white noise.
    pub variance: f64,
    pub seed: u64,
    /// Experimental: channel `c` gets variance `sigma^2 (1 + spread (2c/(n-1) - 1))`.
    /// Zero keeps every channel identical.
    pub channel_spread: f64,
}

impl NoiseModel {
    pub fn white(variance: f64, seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::White,
            variance,
            seed,
            channel_spread: 0.0,
        }
    }

    pub fn filtered(variance: f64, pole: f64, seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::FilteredLowpass { pole },
            variance,
            seed,
            channel_spread: 0.0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseModel { seed, ..self }
    }

    /// Continuous-time input density `S_w(omega)` of a single channel.
    pub fn psd(&self, omega: f64) -> f64 {
        match self.kind {
            NoiseKind::White => self.variance,
            NoiseKind::FilteredLowpass { pole } => self.variance / (omega * omega + pole * pole),
        }
    }

    fn channel_variance(&self, c: usize, n: usize) -> f64 {
        if n < 2 || self.channel_spread == 0.0 {
            self.variance
        } else {
            let t = 2.0 * c as f64 / (n - 1) as f64 - 1.0;
            self.variance * (1.0 + self.channel_spread * t)
        }
    }
}

/// Multichannel sampled signal, one `Vec` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesEnsemble {
    pub dt: f64,
    pub channels: Vec<Vec<f64>>,
    /// Original node id of every channel.
    pub labels: Vec<usize>,
    pub burn_in_discarded: usize,
}

impl TimeSeriesEnsemble {
    pub fn new(dt: f64, channels: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if labels.len() != channels.len() {
            return Err(Error::DimensionMismatch {
                expected: channels.len(),
                found: labels.len(),
            });
        }
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidParameter("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        Ok(TimeSeriesEnsemble {
            dt,
            channels,
            labels,
            burn_in_discarded: 0,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    /// Copy with channel `j` (a position, not a label) dropped.
    pub fn without_channel(&self, j: usize) -> Result<TimeSeriesEnsemble> {
        if j >= self.n_channels() {
            return Err(Error::IndexOutOfRange {
                index: j,
                n: self.n_channels(),
            });
        }
        let mut out = self.clone();
        out.channels.remove(j);
        out.labels.remove(j);
        Ok(out)
    }

    /// Little-endian binary: magic, n_channels, n_samples, dt, burn-in,
    /// labels, then channel-major samples.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(40 + 8 * (self.n_channels() * (self.n_samples() + 1)));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.n_channels() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n_samples() as u64).to_le_bytes());
        buf.extend_from_slice(&self.dt.to_le_bytes());
        buf.extend_from_slice(&(self.burn_in_discarded as u64).to_le_bytes());
        for &l in &self.labels {
            buf.extend_from_slice(&(l as u64).to_le_bytes());
        }
        for ch in &self.channels {
            for x in ch {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cursor = 0usize;
        let mut take = |len: usize| -> Result<&[u8]> {
            let s = bytes
                .get(cursor..cursor + len)
                .ok_or_else(|| Error::Parse("truncated time-series file".into()))?;
            cursor += len;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(Error::Parse("not a time-series file (bad magic)".into()));
        }
        let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
        let n_channels = u64_at(take(8)?) as usize;
        let n_samples = u64_at(take(8)?) as usize;
        let dt = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let burn_in = u64_at(take(8)?) as usize;
        let labels = (0..n_channels)
            .map(|_| take(8).map(|s| u64_at(s) as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut channels = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            let raw = take(8 * n_samples)?;
            channels.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            );
        }
        let mut ts = TimeSeriesEnsemble::new(dt, channels, labels)?;
        ts.burn_in_discarded = burn_in;
        Ok(ts)
    }

    /// CSV with a time column followed by one column per channel label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for l in &self.labels {
            let _ = write!(out, ",y{l}");
        }
        out.push('\n');
        for k in 0..self.n_samples() {
            out.push_str(&fmt17(k as f64 * self.dt));
            for ch in &self.channels {
                out.push(',');
                out.push_str(&fmt17(ch[k]));
            }
            out.push('\n');
        }
        out
    }
}

/// Draws `n_channels` independent noise streams.
///
/// White samples have variance `sigma^2 / dt` so that the sequence stands in
/// for continuous white noise of density `sigma^2`.
pub fn generate_noise(
    model: &NoiseModel,
    n_channels: usize,
    n_samples: usize,
    dt: f64,
) -> Result<TimeSeriesEnsemble> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    if !(model.variance >= 0.0 && model.variance.is_finite()) {
        return Err(Error::InvalidParameter(
            "noise variance must be >= 0".into(),
        ));
    }
    if model.channel_spread.abs() >= 1.0 {
        return Err(Error::InvalidParameter(
            "channel spread must lie in (-1, 1)".into(),
        ));
    }
    let sd: Vec<f64> = (0..n_channels)
        .map(|c| (model.channel_variance(c, n_channels) / dt).sqrt())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut channels = vec![Vec::with_capacity(n_samples); n_channels];
    match model.kind {
        NoiseKind::White => {
            for _ in 0..n_samples {
                for (c, ch) in channels.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    ch.push(sd[c] * z);
                }
            }
        }
        NoiseKind::FilteredLowpass { pole } => {
            if !(pole > 0.0 && pole * dt < 2.0) {
                return Err(Error::InvalidParameter(
                    "filter pole must satisfy 0 < pole * dt < 2".into(),
                ));
            }
            let a = 1.0 - pole * dt;
            // Stationary start for the discrete recursion.
            let mut state: Vec<f64> = (0..n_channels)
                .map(|c| {
                    let step_var = sd[c] * sd[c] * dt * dt;
                    let z: f64 = rng.sample(StandardNormal);
                    z * (step_var / (1.0 - a * a)).sqrt()
                })
                .collect();
            for _ in 0..n_samples {
                for (c, ch) in channels.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    state[c] = a * state[c] + dt * sd[c] * z;
                    ch.push(state[c]);
                }
            }
        }
    }
    TimeSeriesEnsemble::new(dt, channels, (0..n_channels).collect())
}

/// Integrates `x' = M x + w` from rest, discarding the first `burn_in` samples.
pub fn integrate(
    m: &SystemMatrix,
    noise: &TimeSeriesEnsemble,
    burn_in: usize,
) -> Result<TimeSeriesEnsemble> {
    integrate_from(m, &vec![0.0; m.n()], noise, burn_in)
}

/// Euler-Maruyama `x_{k+1} = x_k + dt M x_k + dt w_k` from `x0`.
///
/// Sample `k` of the output is the state after step `k`.
pub fn integrate_from(
    m: &SystemMatrix,
    x0: &[f64],
    noise: &TimeSeriesEnsemble,
    burn_in: usize,
) -> Result<TimeSeriesEnsemble> {
    let n = m.n();
    if noise.n_channels() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: noise.n_channels(),
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    let total = noise.n_samples();
    if burn_in >= total {
        return Err(Error::InvalidParameter(format!(
            "burn-in {burn_in} leaves no samples out of {total}"
        )));
    }
    let dt = noise.dt;
    let drift = m.drift();
    let mut x = x0.to_vec();
    let mut mx = vec![0.0; n];
    let mut out = vec![Vec::with_capacity(total - burn_in); n];
    for k in 0..total {
        matvec_into(&drift, &x, &mut mx);
        for i in 0..n {
            x[i] = x[i] + dt * mx[i] + dt * noise.channels[i][k];
            if x[i].is_nan() || x[i].abs() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence { step: k });
            }
        }
        if k >= burn_in {
            for (ch, xi) in out.iter_mut().zip(&x) {
                ch.push(*xi);
            }
        }
    }
    let mut ts = TimeSeriesEnsemble::new(dt, out, m.labels().to_vec())?;
    ts.burn_in_discarded = burn_in;
    Ok(ts)
}

/// Simulates the system with node `j` grounded: the reduced `(n-1)`-dimensional
/// dynamics driven by the surviving noise channels.
pub fn integrate_grounded(
    m: &SystemMatrix,
    j: usize,
    noise: &TimeSeriesEnsemble,
    burn_in: usize,
) -> Result<TimeSeriesEnsemble> {
    if noise.n_channels() != m.n() {
        return Err(Error::DimensionMismatch {
            expected: m.n(),
            found: noise.n_channels(),
        });
    }
    let reduced = graph::ground(m, j)?;
    integrate(&reduced, &noise.without_channel(j)?, burn_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, Edge, WeightedDigraph};
    use nalgebra::DMatrix;

    fn cycle3() -> SystemMatrix {
        build_laplacian(
            &WeightedDigraph::directed(
                3,
                vec![
                    Edge::new(0, 1, 2.0),
                    Edge::new(1, 2, 3.0),
                    Edge::new(2, 0, 4.0),
                ],
            )
            .unwrap(),
        )
    }

    fn p3() -> SystemMatrix {
        build_laplacian(
            &WeightedDigraph::undirected(3, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)])
                .unwrap(),
        )
    }

    /// Full-dimension Euler-Maruyama with the listed states forced to zero
    /// after every step; written independently of the simulator.
    fn clamped_reference(
        m: &DMatrix<f64>,
        clamp: &[usize],
        noise: &TimeSeriesEnsemble,
        burn_in: usize,
    ) -> Vec<Vec<f64>> {
        let n = m.nrows();
        let dt = noise.dt;
        let mut x = vec![0.0; n];
        let mut out = vec![Vec::new(); n];
        for k in 0..noise.n_samples() {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += -m[(i, l)] * x[l];
                }
                next[i] = x[i] + dt * acc + dt * noise.channels[i][k];
            }
            for &c in clamp {
                next[c] = 0.0;
            }
            x = next;
            if k >= burn_in {
                for i in 0..n {
                    out[i].push(x[i]);
                }
            }
        }
        out.into_iter()
            .enumerate()
            .filter(|(i, _)| !clamp.contains(i))
            .map(|(_, c)| c)
            .collect()
    }

    #[test]
    fn white_noise_channels_are_uncorrelated() {
        let ts = generate_noise(&NoiseModel::white(1.0, 11), 2, 1_000_000, 0.01).unwrap();
        let (a, b) = (&ts.channels[0], &ts.channels[1]);
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / n;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
        assert!((cov / (va * vb).sqrt()).abs() < 0.01);
        // Per-sample variance approximates sigma^2 / dt.
        assert!((va * 0.01 - 1.0).abs() < 0.02, "variance {va}");
        assert!((vb * 0.01 - 1.0).abs() < 0.02, "variance {vb}");
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let m = NoiseModel::white(2.0, 5);
        assert_eq!(
            generate_noise(&m, 3, 1000, 0.01).unwrap(),
            generate_noise(&m, 3, 1000, 0.01).unwrap()
        );
        assert_ne!(
            generate_noise(&m, 3, 1000, 0.01).unwrap(),
            generate_noise(&m.with_seed(6), 3, 1000, 0.01).unwrap()
        );
    }

    #[test]
    fn filtered_noise_has_lowpass_variance() {
        // Stationary variance of u' = -p u + xi is sigma^2 / (2p).
        let ts = generate_noise(&NoiseModel::filtered(1.0, 2.0, 3), 1, 400_000, 0.01).unwrap();
        let v = ts.channels[0].iter().map(|x| x * x).sum::<f64>() / ts.n_samples() as f64;
        assert!((v - 0.25).abs() < 0.25 * 0.06, "variance {v}");
    }

    #[test]
    fn scalar_random_walk_variance_grows() {
        let zero = SystemMatrix::laplacian(DMatrix::zeros(1, 1), false).unwrap();
        let mut early = 0.0;
        let mut late = 0.0;
        let runs = 400;
        for seed in 0..runs {
            let noise = generate_noise(&NoiseModel::white(1.0, seed), 1, 2000, 0.01).unwrap();
            let y = integrate(&zero, &noise, 0).unwrap();
            early += y.channels[0][499].powi(2);
            late += y.channels[0][1999].powi(2);
        }
        let (early, late) = (early / runs as f64, late / runs as f64);
        // Var x(t) = sigma^2 t: 5 s and 20 s.
        assert!((early - 5.0).abs() < 1.0, "{early}");
        assert!((late - 20.0).abs() < 4.0, "{late}");
    }

    #[test]
    fn negative_definite_decay_is_monotone() {
        let m = SystemMatrix::general(DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.3, -2.0]), None)
            .unwrap();
        let noise = generate_noise(&NoiseModel::white(0.0, 0), 2, 500, 0.01).unwrap();
        let y = integrate_from(&m, &[1.0, -2.0], &noise, 0).unwrap();
        let norms: Vec<f64> = (0..500)
            .map(|k| y.channels[0][k].hypot(y.channels[1][k]))
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn symmetric_laplacian_conserves_sum() {
        let noise = generate_noise(&NoiseModel::white(0.0, 0), 3, 1000, 0.01).unwrap();
        let y = integrate_from(&p3(), &[1.0, 0.0, -1.0], &noise, 0).unwrap();
        for k in 0..1000 {
            let s: f64 = y.channels.iter().map(|c| c[k]).sum();
            assert!(s.abs() <= 1e-12);
        }
    }

    #[test]
    fn energy_non_increasing_for_small_dt() {
        let noise = generate_noise(&NoiseModel::white(0.0, 0), 3, 2000, 0.1).unwrap();
        // lambda_max(P3) = 3, so dt = 0.1 < 2/3.
        let y = integrate_from(&p3(), &[2.0, -1.0, 0.5], &noise, 0).unwrap();
        let e: Vec<f64> = (0..2000)
            .map(|k| y.channels.iter().map(|c| c[k] * c[k]).sum())
            .collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn divergence_is_reported() {
        let noise = generate_noise(&NoiseModel::white(1.0, 1), 3, 5000, 1.0).unwrap();
        let err = integrate(&cycle3(), &noise, 0).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn burn_in_is_discarded() {
        let noise = generate_noise(&NoiseModel::white(1.0, 1), 3, 1000, 0.01).unwrap();
        let full = integrate(&cycle3(), &noise, 0).unwrap();
        let cut = integrate(&cycle3(), &noise, 100).unwrap();
        assert_eq!(cut.n_samples(), 900);
        assert_eq!(cut.burn_in_discarded, 100);
        assert_eq!(cut.channels[1][..], full.channels[1][100..]);
        assert!(integrate(&cycle3(), &noise, 1000).is_err());
    }

    #[test]
    fn grounded_leaf_is_scalar_ou() {
        let pair =
            build_laplacian(&WeightedDigraph::undirected(2, vec![Edge::new(0, 1, 1.5)]).unwrap());
        let noise = generate_noise(&NoiseModel::white(1.0, 9), 2, 3000, 0.01).unwrap();
        let y = integrate_grounded(&pair, 1, &noise, 0).unwrap();
        assert_eq!(y.labels, vec![0]);
        let mut x = 0.0;
        for k in 0..3000 {
            x = x + 0.01 * (-1.5 * x) + 0.01 * noise.channels[0][k];
            assert_eq!(y.channels[0][k], x);
        }
    }

    #[test]
    fn clamp_equivalence_is_exact() {
        let m = cycle3();
        let noise = generate_noise(&NoiseModel::white(1.0, 21), 3, 5000, 0.01).unwrap();
        for j in 0..3 {
            let reduced = integrate_grounded(&m, j, &noise, 200).unwrap();
            let reference = clamped_reference(m.values(), &[j], &noise, 200);
            assert_eq!(reduced.channels, reference, "grounded node {j}");
            let expected: Vec<usize> = (0..3).filter(|&i| i != j).collect();
            assert_eq!(reduced.labels, expected);
        }
    }

    #[test]
    fn grounding_twice_equals_double_deletion() {
        let m = cycle3();
        let noise = generate_noise(&NoiseModel::white(1.0, 4), 3, 2000, 0.01).unwrap();
        let once = graph::ground(&m, 0).unwrap();
        let twice = integrate_grounded(&once, 1, &noise.without_channel(0).unwrap(), 0).unwrap();
        let reference = clamped_reference(m.values(), &[0, 2], &noise, 0);
        assert_eq!(twice.channels, reference);
        assert_eq!(twice.labels, vec![1]);
    }

    #[test]
    fn grounding_changes_downstream_trajectory() {
        let m = cycle3();
        let noise = generate_noise(&NoiseModel::white(1.0, 4), 3, 2000, 0.01).unwrap();
        let full = integrate(&m, &noise, 0).unwrap();
        // Edge 0 -> 1 exists, so grounding node 0 alters node 1.
        let grounded = integrate_grounded(&m, 0, &noise, 0).unwrap();
        assert_ne!(full.channels[1], grounded.channels[0]);
    }

    #[test]
    fn simulation_is_deterministic() {
        let noise = generate_noise(&NoiseModel::white(1.0, 8), 3, 3000, 0.01).unwrap();
        let a = integrate(&cycle3(), &noise, 300).unwrap();
        let b = integrate(&cycle3(), &noise, 300).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binary_round_trip() {
        let noise = generate_noise(&NoiseModel::white(1.0, 8), 3, 100, 0.01).unwrap();
        let y = integrate_grounded(&cycle3(), 1, &noise, 10).unwrap();
        let mut buf = Vec::new();
        y.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = TimeSeriesEnsemble::read_binary(&buf[..]).unwrap();
        assert_eq!(y, back);
        assert!(TimeSeriesEnsemble::read_binary(&buf[..30]).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let noise = generate_noise(&NoiseModel::white(1.0, 8), 2, 5, 0.5).unwrap();
        let csv = noise.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,y0,y1");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[2].split(',').count(), 3);
    }
}
