//! Cross-power spectral density matrices: the closed form for a known
//! generator, Welch estimates from sampled outputs, and CSV exchange.
//!
//! Densities are two-sided in angular frequency, `S(w) = int R(t) e^{-jwt} dt`,
//! with `S_ij = E[Y_i conj(Y_j)]`. Under this convention white noise of
//! level `sigma^2` has a flat density `sigma^2`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::SystemMatrix;
use crate::linalg::{self, fmt17};
use crate::simulate::TimeSeriesEnsemble;

pub const DEFAULT_SEGMENT_LEN: usize = 4096;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const MIN_SEGMENTS: usize = 8;

/// DFT bin range (of the Welch segment grid) spanned by the default frequencies.
pub const DEFAULT_BIN_RANGE: (f64, f64) = (5.0, 13.0);
pub const DEFAULT_FREQUENCY_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window coefficients.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rect",
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "rect" | "rectangular" | "boxcar" => Ok(Window::Rectangular),
            _ => Err(Error::Parse(format!("unknown window {s:?}"))),
        }
    }
}

/// Per-segment trend removal before windowing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detrend {
    /// Subtract the segment mean.
    Constant,
    /// Subtract the least-squares line.
    Linear,
}

impl Detrend {
    pub fn name(self) -> &'static str {
        match self {
            Detrend::Constant => "constant",
            Detrend::Linear => "linear",
        }
    }

    fn apply(self, seg: &[f64], out: &mut [f64]) {
        let len = seg.len() as f64;
        let mean = seg.iter().sum::<f64>() / len;
        let slope = match self {
            Detrend::Constant => 0.0,
            Detrend::Linear => {
                let tbar = (len - 1.0) / 2.0;
                let (num, den) = seg.iter().enumerate().fold((0.0, 0.0), |(a, b), (t, x)| {
                    let dt = t as f64 - tbar;
                    (a + dt * (x - mean), b + dt * dt)
                });
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
        };
        let tbar = (len - 1.0) / 2.0;
        for (t, (o, x)) in out.iter_mut().zip(seg).enumerate() {
            *o = x - mean - slope * (t as f64 - tbar);
        }
    }
}

impl std::str::FromStr for Detrend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" | "mean" => Ok(Detrend::Constant),
            "linear" => Ok(Detrend::Linear),
            _ => Err(Error::Parse(format!("unknown detrend {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchParams {
    pub segment_len: usize,
    pub overlap: f64,
    pub window: Window,
    pub detrend: Detrend,
}

impl Default for WelchParams {
    fn default() -> Self {
        WelchParams {
            segment_len: DEFAULT_SEGMENT_LEN,
            overlap: DEFAULT_OVERLAP,
            window: Window::Hann,
            detrend: Detrend::Constant,
        }
    }
}

impl WelchParams {
    fn step(&self) -> usize {
        let overlap = (self.segment_len as f64 * self.overlap).round() as usize;
        (self.segment_len - overlap.min(self.segment_len - 1)).max(1)
    }

    /// Segments available in a series of `n_samples`.
    pub fn segment_count(&self, n_samples: usize) -> usize {
        if n_samples < self.segment_len {
            0
        } else {
            (n_samples - self.segment_len) / self.step() + 1
        }
    }

    /// Spacing of the segment DFT grid in rad/s.
    pub fn bin_width(&self, dt: f64) -> f64 {
        2.0 * PI / (self.segment_len as f64 * dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Analytic,
    Welch { params: WelchParams, dt: f64 },
    Imported,
}

/// Hermitian CPSD matrix at one angular frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CpsdMatrix {
    pub omega: f64,
    pub values: DMatrix<Complex64>,
    pub provenance: Provenance,
    pub labels: Vec<usize>,
}

impl CpsdMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Same spectrum with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> CpsdMatrix {
        CpsdMatrix {
            values: self.values.map(|z| z * c),
            ..self.clone()
        }
    }

    pub fn inverse(&self) -> Result<DMatrix<Complex64>> {
        linalg::complex_inverse(&self.values)
    }

    /// `w^2` as seen by the marginal consensus mode, whose `1/w^2` density
    /// a Welch estimate inflates by [`marginal_gain`]; plain `w^2` otherwise.
    pub fn marginal_omega_sq(&self) -> f64 {
        let w2 = self.omega * self.omega;
        match self.provenance {
            Provenance::Welch { params, dt } => {
                let bin = (self.omega / params.bin_width(dt)).round() as usize;
                w2 / marginal_gain(&params, bin)
            }
            _ => w2,
        }
    }
}

/// Expected Welch estimate of a random walk (density `1/w^2`) at DFT `bin`,
/// relative to the true density at the bin frequency.
///
/// The window's spectral smoothing over the steep `1/w^2` shape biases low
/// bins upward by roughly `1/bin^2` for Hann.
pub fn marginal_gain(params: &WelchParams, bin: usize) -> f64 {
    let len = params.segment_len;
    let window = params.window.coefficients(len);
    let power: f64 = window.iter().map(|w| w * w).sum();
    let (mut re, mut im) = (vec![0.0; len], vec![0.0; len]);
    for (t, w) in window.iter().enumerate() {
        let phase = -2.0 * PI * ((bin * t) % len) as f64 / len as f64;
        re[t] = w * phase.cos();
        im[t] = w * phase.sin();
    }
    // Detrending is a symmetric projection, so it moves onto the weights.
    let (mut pre, mut pim) = (vec![0.0; len], vec![0.0; len]);
    params.detrend.apply(&re, &mut pre);
    params.detrend.apply(&im, &mut pim);
    // x_t = sum_{s<=t} e_s, so sum_t a_t x_t = sum_s e_s (sum_{t>=s} a_t).
    let (mut tr, mut ti, mut total) = (0.0, 0.0, 0.0);
    for t in (1..len).rev() {
        tr += pre[t];
        ti += pim[t];
        total += tr * tr + ti * ti;
    }
    let theta = 2.0 * PI * bin as f64 / len as f64;
    theta * theta * total / power
}

/// `S = S_w (w^2 I - j w (L - L^T) + L^T L)^{-1}`, with `L = -G` for general
/// dynamics.
pub fn analytic_cpsd(m: &SystemMatrix, s_w: f64, omega: f64) -> Result<CpsdMatrix> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::InvalidParameter(
            "omega must be finite and nonzero".into(),
        ));
    }
    if !(s_w > 0.0 && s_w.is_finite()) {
        return Err(Error::InvalidParameter("S_w must be positive".into()));
    }
    let l = m.spectral_generator();
    let n = l.nrows();
    let lt = l.transpose();
    let re = DMatrix::<f64>::identity(n, n) * (omega * omega) + &lt * &l;
    let im = (&l - &lt) * (-omega);
    let inner = DMatrix::from_fn(n, n, |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
    let inv = linalg::complex_inverse(&inner)?;
    Ok(CpsdMatrix {
        omega,
        values: inv * Complex64::new(s_w, 0.0),
        provenance: Provenance::Analytic,
        labels: m.labels().to_vec(),
    })
}

/// Default analysis frequencies: `count` evenly spaced DFT bins spanning
/// `DEFAULT_BIN_RANGE` of the Welch segment grid.
///
/// The lower edge keeps the Hann main lobe clear of the marginal consensus
/// mode at `w = 0`; the upper edge keeps `w^2` from swamping `L^T L`. Bins two
/// apart keep the Hann estimates nearly uncorrelated.
pub fn default_omegas(dt: f64, params: &WelchParams) -> Vec<f64> {
    let width = params.bin_width(dt);
    let (lo, hi) = DEFAULT_BIN_RANGE;
    let count = DEFAULT_FREQUENCY_COUNT;
    let max_bin = (params.segment_len / 2).saturating_sub(1).max(1) as f64;
    let mut bins: Vec<usize> = (0..count)
        .map(|i| {
            let b = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            b.round().clamp(1.0, max_bin) as usize
        })
        .collect();
    bins.dedup();
    bins.into_iter().map(|b| b as f64 * width).collect()
}

/// Welch CPSD estimates at the DFT bins nearest to each requested `omega`.
///
/// Each segment has its mean removed and is windowed; cross-periodograms are
/// averaged and scaled by `dt / sum(w^2)`, then Hermitian-symmetrized. The
/// returned `omega` is the bin frequency actually used.
pub fn welch_cpsd(
    series: &TimeSeriesEnsemble,
    params: &WelchParams,
    omegas: &[f64],
) -> Result<Vec<CpsdMatrix>> {
    let n = series.n_channels();
    let len = params.segment_len;
    let dt = series.dt;
    if len < 2 {
        return Err(Error::InvalidParameter(
            "segment length must be >= 2".into(),
        ));
    }
    if !(0.0..1.0).contains(&params.overlap) {
        return Err(Error::InvalidParameter("overlap must lie in [0, 1)".into()));
    }
    if len > series.n_samples() / 2 {
        return Err(Error::InvalidParameter(format!(
            "segment length {len} exceeds half the series length {}",
            series.n_samples()
        )));
    }
    let nyquist = PI / dt;
    if let Some(&bad) = omegas.iter().find(|&&w| !(w > 0.0 && w < nyquist)) {
        return Err(Error::InvalidParameter(format!(
            "omega {bad} outside (0, {nyquist})"
        )));
    }
    let segments = params.segment_count(series.n_samples());
    if segments < MIN_SEGMENTS {
        return Err(Error::TooFewSegments {
            available: segments,
        });
    }

    let window = params.window.coefficients(len);
    let power: f64 = window.iter().map(|w| w * w).sum();
    let width = params.bin_width(dt);
    let bins: Vec<usize> = omegas
        .iter()
        .map(|&w| ((w / width).round() as usize).clamp(1, len / 2))
        .collect();
    let mut unique = bins.clone();
    unique.sort_unstable();
    unique.dedup();

    // Window folded into the DFT kernel: tw[b][t] = w[t] e^{-j 2 pi k t / len}.
    let kernels: Vec<Vec<Complex64>> = unique
        .iter()
        .map(|&k| {
            (0..len)
                .map(|t| {
                    let phase = -2.0 * PI * ((k * t) % len) as f64 / len as f64;
                    Complex64::from_polar(window[t], phase)
                })
                .collect()
        })
        .collect();

    let mut acc = vec![DMatrix::<Complex64>::zeros(n, n); unique.len()];
    let mut spectra = vec![vec![Complex64::new(0.0, 0.0); n]; unique.len()];
    let mut buf = vec![0.0; len];
    let step = params.step();
    for s in 0..segments {
        let start = s * step;
        for (c, ch) in series.channels.iter().enumerate() {
            params.detrend.apply(&ch[start..start + len], &mut buf);
            for (b, kernel) in kernels.iter().enumerate() {
                spectra[b][c] = buf.iter().zip(kernel).map(|(x, k)| k * x).sum();
            }
        }
        for (m, spectrum) in acc.iter_mut().zip(&spectra) {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += spectrum[i] * spectrum[j].conj();
                }
            }
        }
    }
    let scale = Complex64::new(dt / (power * segments as f64), 0.0);
    let estimates: Vec<DMatrix<Complex64>> = acc
        .into_iter()
        .map(|m| linalg::hermitian_part(&(m * scale)))
        .collect();

    Ok(bins
        .iter()
        .map(|k| {
            let idx = unique.binary_search(k).expect("bin present");
            CpsdMatrix {
                omega: *k as f64 * width,
                values: estimates[idx].clone(),
                provenance: Provenance::Welch {
                    params: *params,
                    dt,
                },
                labels: series.labels.clone(),
            }
        })
        .collect())
}

/// `S_w = w^2 (v^T v) / (v^T Re{S^{-1}} v)` with `v` a kernel vector of the
/// generator (all ones by default). Welch spectra use
/// [`CpsdMatrix::marginal_omega_sq`] for `w^2`.
pub fn estimate_input_psd(s: &CpsdMatrix, kernel: Option<&DVector<f64>>) -> Result<f64> {
    let inv = s.inverse()?;
    input_psd_from_inverse(&linalg::real_part(&inv), s.marginal_omega_sq(), kernel)
}

pub(crate) fn input_psd_from_inverse(
    re_inv: &DMatrix<f64>,
    omega_sq: f64,
    kernel: Option<&DVector<f64>>,
) -> Result<f64> {
    let n = re_inv.nrows();
    let ones;
    let v = match kernel {
        Some(v) => {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
            v
        }
        None => {
            ones = DVector::from_element(n, 1.0);
            &ones
        }
    };
    let quad = v.dot(&(re_inv * v));
    let s_w = omega_sq * v.dot(v) / quad;
    if !(s_w > 0.0 && s_w.is_finite()) {
        return Err(Error::NonPositivePsd(s_w));
    }
    Ok(s_w)
}

/// CSV with columns `omega,i,j,re,im`; `i` and `j` are node labels.
///
/// A leading `#` line records the provenance of the first matrix, which is
/// applied to every matrix on import.
pub fn cpsd_to_csv(spectra: &[CpsdMatrix]) -> String {
    let mut out = String::new();
    match spectra.first().map(|s| s.provenance) {
        Some(Provenance::Welch { params, dt }) => {
            let _ = writeln!(
                out,
                "# welch segment_len={} overlap={} window={} detrend={} dt={}",
                params.segment_len,
                fmt17(params.overlap),
                params.window.name(),
                params.detrend.name(),
                fmt17(dt)
            );
        }
        Some(Provenance::Analytic) => out.push_str("# analytic\n"),
        _ => {}
    }
    out.push_str("omega,i,j,re,im\n");
    for s in spectra {
        for (a, &li) in s.labels.iter().enumerate() {
            for (b, &lj) in s.labels.iter().enumerate() {
                let z = s.values[(a, b)];
                let _ = writeln!(
                    out,
                    "{},{li},{lj},{},{}",
                    fmt17(s.omega),
                    fmt17(z.re),
                    fmt17(z.im)
                );
            }
        }
    }
    out
}

fn parse_provenance(comment: &str) -> Result<Provenance> {
    let mut words = comment.split_whitespace();
    match words.next() {
        Some("analytic") => Ok(Provenance::Analytic),
        Some("welch") => {
            let mut params = WelchParams::default();
            let mut dt = None;
            for kv in words {
                let bad = || Error::Parse(format!("bad provenance field {kv:?}"));
                let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                match k {
                    "segment_len" => params.segment_len = v.parse().map_err(|_| bad())?,
                    "overlap" => params.overlap = v.parse().map_err(|_| bad())?,
                    "window" => params.window = v.parse()?,
                    "detrend" => params.detrend = v.parse()?,
                    "dt" => dt = Some(v.parse().map_err(|_| bad())?),
                    _ => return Err(bad()),
                }
            }
            let dt = dt.ok_or_else(|| Error::Parse("welch provenance without dt".into()))?;
            Ok(Provenance::Welch { params, dt })
        }
        _ => Ok(Provenance::Imported),
    }
}

/// Frequency and `(row label, column label, value)` triples of one matrix.
type CsvEntries = (f64, Vec<(usize, usize, Complex64)>);

/// Parses [`cpsd_to_csv`] output; matrices come back in file order of their
/// first appearance, rows/columns ordered by ascending label.
pub fn cpsd_from_csv(text: &str) -> Result<Vec<CpsdMatrix>> {
    let mut order: Vec<u64> = Vec::new();
    let mut entries: BTreeMap<u64, CsvEntries> = BTreeMap::new();
    let mut provenance = Provenance::Imported;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if lineno == 0 {
                provenance = parse_provenance(comment.trim())?;
            }
            continue;
        }
        if line.is_empty() || line.starts_with("omega") {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Parse(format!("line {}: {raw:?}", lineno + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let omega: f64 = f[0].parse().map_err(|_| bad())?;
        let i: usize = f[1].parse().map_err(|_| bad())?;
        let j: usize = f[2].parse().map_err(|_| bad())?;
        let re: f64 = f[3].parse().map_err(|_| bad())?;
        let im: f64 = f[4].parse().map_err(|_| bad())?;
        let key = omega.to_bits();
        let slot = entries.entry(key).or_insert_with(|| {
            order.push(key);
            (omega, Vec::new())
        });
        slot.1.push((i, j, Complex64::new(re, im)));
    }
    order
        .into_iter()
        .map(|key| {
            let (omega, items) = &entries[&key];
            let mut labels: Vec<usize> = items.iter().flat_map(|&(i, j, _)| [i, j]).collect();
            labels.sort_unstable();
            labels.dedup();
            let n = labels.len();
            let pos = |l: usize| labels.binary_search(&l).expect("label present");
            let mut values = DMatrix::from_element(n, n, Complex64::new(f64::NAN, 0.0));
            for &(i, j, z) in items {
                values[(pos(i), pos(j))] = z;
            }
            if values.iter().any(|z| z.re.is_nan()) {
                return Err(Error::Parse(format!(
                    "spectrum at omega {omega} is missing entries"
                )));
            }
            Ok(CpsdMatrix {
                omega: *omega,
                values,
                provenance,
                labels,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, random_graph, Edge, RandomGraphParams, WeightedDigraph};
    use crate::simulate::{generate_noise, integrate, NoiseModel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pair(a: f64) -> SystemMatrix {
        build_laplacian(&WeightedDigraph::directed(2, vec![Edge::new(0, 1, a)]).unwrap())
    }

    fn triangle() -> SystemMatrix {
        build_laplacian(
            &WeightedDigraph::undirected(
                3,
                vec![
                    Edge::new(0, 1, 1.0),
                    Edge::new(1, 2, 2.0),
                    Edge::new(0, 2, 0.5),
                ],
            )
            .unwrap(),
        )
    }

    fn max_hermitian_defect(s: &DMatrix<Complex64>) -> f64 {
        (s - s.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            / s.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn scalar_case() {
        let zero = SystemMatrix::laplacian(DMatrix::zeros(1, 1), false).unwrap();
        let s = analytic_cpsd(&zero, 1.0, 2.0).unwrap();
        assert_relative_eq!(s.values[(0, 0)].re, 0.25, epsilon = 1e-15);
        assert_eq!(s.values[(0, 0)].im, 0.0);
    }

    #[test]
    fn symmetric_generator_gives_real_spectrum() {
        for omega in [0.3, 1.0, 7.0] {
            let s = analytic_cpsd(&triangle(), 1.3, omega).unwrap();
            assert!(s.values.iter().all(|z| z.im.abs() < 1e-14));
            assert!(max_hermitian_defect(&s.values) < 1e-12);
        }
    }

    #[test]
    fn directed_pair_matches_dense_inverse() {
        // L = [[0,0],[-1,1]]: w^2 I - j w (L - L^T) + L^T L at w = 1 is
        // [[2, -1 - j], [-1 + j, 2]].
        let s = analytic_cpsd(&pair(1.0), 1.0, 1.0).unwrap();
        let c = |re, im| Complex64::new(re, im);
        let inner = DMatrix::from_row_slice(
            2,
            2,
            &[c(2.0, 0.0), c(-1.0, -1.0), c(-1.0, 1.0), c(2.0, 0.0)],
        );
        // 2x2 inverse by cofactors: det = 4 - |(-1-j)|^2 = 2.
        let det = inner[(0, 0)] * inner[(1, 1)] - inner[(0, 1)] * inner[(1, 0)];
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[
                inner[(1, 1)] / det,
                -inner[(0, 1)] / det,
                -inner[(1, 0)] / det,
                inner[(0, 0)] / det,
            ],
        );
        for (a, b) in s.values.iter().zip(expected.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_frequency_is_rejected() {
        assert!(analytic_cpsd(&triangle(), 1.0, 0.0).is_err());
    }

    #[test]
    fn input_psd_round_trip() {
        let s = analytic_cpsd(&triangle(), 2.5, 1.0).unwrap();
        assert_relative_eq!(estimate_input_psd(&s, None).unwrap(), 2.5, epsilon = 1e-10);
        let c = 7.0;
        assert_relative_eq!(
            estimate_input_psd(&s.scaled(c), None).unwrap(),
            2.5 * c,
            max_relative = 1e-12
        );
        let zero = SystemMatrix::laplacian(DMatrix::zeros(1, 1), false).unwrap();
        let s = analytic_cpsd(&zero, 0.8, 3.0).unwrap();
        assert_relative_eq!(s.values[(0, 0)].re, 0.8 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(estimate_input_psd(&s, None).unwrap(), 0.8, epsilon = 1e-14);
    }

    #[test]
    fn input_psd_with_custom_kernel() {
        // G with null vector (1, 2): rows annihilate it.
        let g = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -0.5]);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let m = SystemMatrix::general(g, Some(v.clone())).unwrap();
        let s = analytic_cpsd(&m, 1.7, 0.9).unwrap();
        assert_relative_eq!(
            estimate_input_psd(&s, Some(&v)).unwrap(),
            1.7,
            epsilon = 1e-10
        );
    }

    #[test]
    fn wrong_kernel_is_reported() {
        let s = analytic_cpsd(&pair(2.0), 1.0, 0.5).unwrap();
        let bad = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(estimate_input_psd(&s, Some(&bad)).is_err());
    }

    #[test]
    fn welch_of_white_noise_is_flat() {
        let noise = generate_noise(&NoiseModel::white(1.0, 2), 3, 400 * 256 + 256, 0.01).unwrap();
        let params = WelchParams {
            segment_len: 512,
            ..Default::default()
        };
        let omegas = [20.0, 80.0, 200.0, 300.0];
        let est = welch_cpsd(&noise, &params, &omegas).unwrap();
        for s in &est {
            for i in 0..3 {
                for j in 0..3 {
                    let z = s.values[(i, j)];
                    if i == j {
                        assert!((z.re - 1.0).abs() < 0.25, "diag {z} at {}", s.omega);
                        assert_eq!(z.im, 0.0);
                    } else {
                        assert!(z.norm() < 0.25, "cross {z}");
                    }
                }
            }
            assert!(matches!(s.provenance, Provenance::Welch { .. }));
        }
        // Reported frequencies sit on the bin grid.
        let width = params.bin_width(0.01);
        for s in &est {
            assert_relative_eq!((s.omega / width).round() * width, s.omega, epsilon = 1e-12);
        }
    }

    #[test]
    fn welch_rejects_bad_requests() {
        let noise = generate_noise(&NoiseModel::white(1.0, 2), 2, 4000, 0.01).unwrap();
        let p = WelchParams {
            segment_len: 1024,
            ..Default::default()
        };
        assert!(matches!(
            welch_cpsd(&noise, &p, &[10.0]),
            Err(Error::TooFewSegments { available: 6 })
        ));
        let p = WelchParams {
            segment_len: 256,
            ..Default::default()
        };
        assert!(welch_cpsd(&noise, &p, &[PI / 0.01]).is_err());
        assert!(welch_cpsd(&noise, &p, &[0.0]).is_err());
        let p = WelchParams {
            segment_len: 2500,
            ..Default::default()
        };
        assert!(welch_cpsd(&noise, &p, &[10.0]).is_err());
    }

    #[test]
    fn disjoint_components_are_uncorrelated() {
        let g = WeightedDigraph::undirected(4, vec![Edge::new(0, 1, 1.0), Edge::new(2, 3, 2.0)])
            .unwrap();
        let l = build_laplacian(&g);
        let noise = generate_noise(&NoiseModel::white(1.0, 3), 4, 120_000, 0.01).unwrap();
        let y = integrate(&l, &noise, 10_000).unwrap();
        let p = WelchParams {
            segment_len: 1024,
            ..Default::default()
        };
        for s in welch_cpsd(&y, &p, &[6.0, 12.0]).unwrap() {
            for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
                let coh =
                    s.values[(i, j)].norm() / (s.values[(i, i)].re * s.values[(j, j)].re).sqrt();
                assert!(coh < 0.25, "coherence {coh} between {i} and {j}");
            }
            // Same-component pairs are strongly coherent at these frequencies.
            let coh01 =
                s.values[(0, 1)].norm() / (s.values[(0, 0)].re * s.values[(1, 1)].re).sqrt();
            assert!(coh01 > 0.05);
        }
    }

    #[test]
    fn welch_error_shrinks_with_more_segments() {
        let l = triangle();
        let dt = 0.01;
        let params = WelchParams {
            segment_len: 256,
            ..Default::default()
        };
        let omega = 10.0 * params.bin_width(dt);
        let truth = analytic_cpsd(&l, 1.0, omega).unwrap();
        let err = |segments: usize, seed: u64| {
            let n = (segments + 1) * 128 + 2000;
            let noise = generate_noise(&NoiseModel::white(1.0, seed), 3, n, dt).unwrap();
            let y = integrate(&l, &noise, 2000).unwrap();
            let s = &welch_cpsd(&y, &params, &[omega]).unwrap()[0];
            (0..3)
                .map(|i| (s.values[(i, i)].re / truth.values[(i, i)].re - 1.0).abs())
                .sum::<f64>()
        };
        let mean = |segments| (0..12).map(|seed| err(segments, seed)).sum::<f64>() / 12.0;
        let e8 = mean(8);
        let e64 = mean(64);
        assert!(e64 < e8, "error with 64 segments {e64} vs 8 segments {e8}");
    }

    #[test]
    fn default_omegas_follow_bin_grid() {
        let p = WelchParams::default();
        let w = default_omegas(0.01, &p);
        assert_eq!(w.len(), 5);
        let width = p.bin_width(0.01);
        let bins: Vec<f64> = w.iter().map(|x| (x / width).round()).collect();
        assert_eq!(bins, vec![5.0, 7.0, 9.0, 11.0, 13.0]);
        assert!(w.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn csv_round_trip() {
        let s = vec![
            analytic_cpsd(&pair(2.0), 1.5, 0.7).unwrap(),
            analytic_cpsd(&pair(2.0), 1.5, 1.9).unwrap(),
        ];
        let back = cpsd_from_csv(&cpsd_to_csv(&s)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in s.iter().zip(&back) {
            assert_eq!(a.omega, b.omega);
            assert_eq!(a.values, b.values);
            assert_eq!(a.labels, b.labels);
            assert_eq!(b.provenance, Provenance::Analytic);
        }
    }

    #[test]
    fn csv_keeps_welch_provenance() {
        let noise = generate_noise(&NoiseModel::white(1.0, 4), 2, 8 * 256, 0.02).unwrap();
        let params = WelchParams {
            segment_len: 256,
            detrend: Detrend::Linear,
            ..Default::default()
        };
        let est = welch_cpsd(&noise, &params, &[3.0, 5.0]).unwrap();
        let back = cpsd_from_csv(&cpsd_to_csv(&est)).unwrap();
        assert_eq!(back, est);
        let plain = "omega,i,j,re,im\n1,0,0,1,0\n";
        assert_eq!(
            cpsd_from_csv(plain).unwrap()[0].provenance,
            Provenance::Imported
        );
    }

    #[test]
    fn marginal_gain_tracks_window_smoothing() {
        let hann = WelchParams::default();
        // Hann main lobe has second moment 1/3 bin^2, so the gain is about 1 + 1/k^2.
        for k in [4usize, 7, 12] {
            let g = marginal_gain(&hann, k);
            assert!(
                (g - 1.0 - 1.0 / (k * k) as f64).abs() < 0.02,
                "bin {k}: {g}"
            );
        }
        assert!(marginal_gain(&hann, 200) - 1.0 < 0.01);
        // An analytic spectrum is never corrected.
        let s = analytic_cpsd(&pair(1.0), 1.0, 0.3).unwrap();
        assert_eq!(s.marginal_omega_sq(), 0.09);
    }

    #[test]
    fn marginal_gain_matches_simulated_random_walk() {
        let params = WelchParams {
            segment_len: 256,
            ..Default::default()
        };
        let dt = 0.01;
        let width = params.bin_width(dt);
        let bins = [3.0, 5.0];
        let mut acc = [0.0; 2];
        for seed in 0..20 {
            let w = generate_noise(&NoiseModel::white(1.0, seed), 1, 64 * 256, dt).unwrap();
            let mut x = 0.0;
            let walk: Vec<f64> = w.channels[0]
                .iter()
                .map(|e| {
                    x += dt * e;
                    x
                })
                .collect();
            let ts = TimeSeriesEnsemble::new(dt, vec![walk], vec![0]).unwrap();
            let omegas: Vec<f64> = bins.iter().map(|b| b * width).collect();
            for (a, s) in acc
                .iter_mut()
                .zip(welch_cpsd(&ts, &params, &omegas).unwrap())
            {
                *a += s.values[(0, 0)].re * s.omega * s.omega / 20.0;
            }
        }
        for (a, b) in acc.iter().zip(bins) {
            let g = marginal_gain(&params, b as usize);
            assert!(
                (a / g - 1.0).abs() < 0.1,
                "bin {b}: measured {a}, predicted {g}"
            );
        }
    }

    #[test]
    fn detrend_removes_lines() {
        let seg: Vec<f64> = (0..16).map(|t| 3.0 + 0.5 * t as f64).collect();
        let mut out = vec![0.0; 16];
        Detrend::Linear.apply(&seg, &mut out);
        assert!(out.iter().all(|x| x.abs() < 1e-12));
        Detrend::Constant.apply(&seg, &mut out);
        assert!(out.iter().sum::<f64>().abs() < 1e-12);
        assert!(out[0] < 0.0);
    }

    #[test]
    fn csv_with_missing_entries_is_rejected() {
        let text = "omega,i,j,re,im\n1,0,0,1,0\n1,0,1,0,0\n1,1,1,1,0\n";
        assert!(cpsd_from_csv(text).is_err());
    }

    fn directed_params() -> impl Strategy<Value = (RandomGraphParams, u64)> {
        (2usize..10, 0.1f64..0.9, any::<u64>()).prop_map(|(n, p, seed)| {
            (
                RandomGraphParams {
                    n,
                    edge_prob: p,
                    weight_low: 0.5,
                    weight_high: 2.0,
                    directed: true,
                    forbid_reciprocal: false,
                },
                seed,
            )
        })
    }

    proptest! {
        #[test]
        fn analytic_spectra_are_hermitian((p, seed) in directed_params(), omega in 0.05f64..20.0) {
            let l = build_laplacian(&random_graph(&p, seed).unwrap());
            let s = analytic_cpsd(&l, 1.0, omega).unwrap();
            prop_assert!(max_hermitian_defect(&s.values) <= 1e-10);
            for i in 0..l.n() {
                prop_assert!(s.values[(i, i)].re >= 0.0);
            }
        }

        #[test]
        fn real_inverse_has_equal_row_sums((p, seed) in directed_params(), omega in 0.05f64..20.0) {
            let l = build_laplacian(&random_graph(&p, seed).unwrap());
            let s = analytic_cpsd(&l, 1.3, omega).unwrap();
            let re = linalg::real_part(&s.inverse().unwrap());
            let sums: Vec<f64> = (0..l.n()).map(|i| re.row(i).sum()).collect();
            let max = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!((max - min) <= 1e-9 * max.abs());
        }
    }
}
