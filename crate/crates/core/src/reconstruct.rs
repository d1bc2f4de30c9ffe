//! Network recovery from CPSD matrices.
//!
//! Every routine works from the inverse spectrum. Writing `R = Re{S^-1}` and
//! `I = Im{S^-1}`, the consensus model gives
//!
//! ```text
//! S_w R = w^2 I + L^T L        S_w I = -w (L - L^T)
//! ```
//!
//! and `L 1 = 0` lets `S_w` be read off `R` itself. Grounded runs give the
//! same identities for the reduced Laplacian; the difference of the two
//! `L^T L` diagonals isolates one squared adjacency entry.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{Edge, WeightedDigraph};
use crate::linalg::{self, fmt17};
use crate::metrics::EvalResult;
use crate::spectra::{input_psd_from_inverse, CpsdMatrix};

pub const DEFAULT_CLEANUP_TOL: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 0.3;
/// Radicands within this fraction of the largest diagonal form are round-off.
pub const RADICAND_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Undirected,
    Unidirectional,
    GroundedDirected,
    BooleanGeneral,
}

impl Mode {
    pub fn needs_grounding(self) -> bool {
        matches!(self, Mode::GroundedDirected | Mode::BooleanGeneral)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Undirected => "undirected",
            Mode::Unidirectional => "unidirectional",
            Mode::GroundedDirected => "grounded-directed",
            Mode::BooleanGeneral => "boolean-general",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "undirected" => Ok(Mode::Undirected),
            "unidirectional" => Ok(Mode::Unidirectional),
            "grounded-directed" | "directed" => Ok(Mode::GroundedDirected),
            "boolean-general" | "boolean" => Ok(Mode::BooleanGeneral),
            _ => Err(Error::Parse(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructOptions {
    /// Known null vector of the generator; all ones when `None`.
    pub kernel: Option<DVector<f64>>,
    /// Off-diagonal magnitudes below this are set to zero.
    pub cleanup_tol: f64,
    /// Edge threshold relative to the largest recovered magnitude.
    pub threshold: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            kernel: None,
            cleanup_tol: DEFAULT_CLEANUP_TOL,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Diagnostics accumulated during recovery.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// Negative eigenvalue or radicand mass clamped to zero.
    pub clamped_mass: f64,
    /// Positive off-diagonal Laplacian mass zeroed during cleanup.
    pub sign_violation: f64,
    /// Max entrywise gap between `L - L^T` of the assembled Laplacian and the
    /// skew part read from the imaginary spectrum.
    pub skew_mismatch: Option<f64>,
    /// Relative Frobenius gap between `L^T L` of the recovered Laplacian and
    /// the measured `L^T L`; large values flag reciprocal edges.
    pub gram_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub mode: Mode,
    pub labels: Vec<usize>,
    /// Recovered weights, `adjacency[(i, j)]` for the edge `j -> i`. In
    /// boolean-general mode these are the (possibly scaled) magnitudes of the
    /// off-diagonal generator entries.
    pub adjacency: DMatrix<f64>,
    pub laplacian: Option<DMatrix<f64>>,
    pub boolean_adjacency: DMatrix<u8>,
    pub threshold: f64,
    pub omegas: Vec<f64>,
    pub s_w_estimates: Vec<f64>,
    pub residuals: Residuals,
    pub evaluation: Option<EvalResult>,
}

/// `L^T L`, `L - L^T` and the input density read from one ungrounded spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedForms {
    pub omega: f64,
    pub ltl: DMatrix<f64>,
    pub skew: DMatrix<f64>,
    pub s_w: f64,
    re_inv: DMatrix<f64>,
}

/// Splits `S^-1` into its real and imaginary quadratic forms.
///
/// `S_w` uses the averaged denominator `v^T R v / v^T v`.
pub fn directed_quadratic_forms(
    s: &CpsdMatrix,
    kernel: Option<&DVector<f64>>,
) -> Result<DirectedForms> {
    check_omega(s.omega)?;
    let inv = s.inverse()?;
    let re_inv = linalg::real_part(&inv);
    let im_inv = linalg::imag_part(&inv);
    let s_w = input_psd_from_inverse(&re_inv, s.marginal_omega_sq(), kernel)?;
    let n = s.n();
    let w2 = s.omega * s.omega;
    let ltl = linalg::symmetrize(&(&re_inv * s_w - DMatrix::identity(n, n) * w2));
    let skew = linalg::antisymmetrize(&(&im_inv * (-s_w / s.omega)));
    Ok(DirectedForms {
        omega: s.omega,
        ltl,
        skew,
        s_w,
        re_inv,
    })
}

fn check_omega(omega: f64) -> Result<()> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::InvalidParameter(
            "omega must be finite and nonzero".into(),
        ));
    }
    Ok(())
}

/// `L~^T L~ = S_w Re{S~^-1} - w^2 I` for a grounded spectrum, with `S_w`
/// taken from the ungrounded run.
pub fn grounded_quadratic_form(grounded: &CpsdMatrix, s_w: f64) -> Result<DMatrix<f64>> {
    check_omega(grounded.omega)?;
    let re_inv = linalg::real_part(&grounded.inverse()?);
    let n = grounded.n();
    Ok(linalg::symmetrize(
        &(re_inv * s_w - DMatrix::identity(n, n) * (grounded.omega * grounded.omega)),
    ))
}

/// Degrees from the diagonal of `L^2`: the nonnegative root of
/// `d^2 + d = [L^2]_ii`. Exact for unweighted graphs only.
pub fn degrees_from_l_squared(l_sq: &DMatrix<f64>) -> Result<Vec<f64>> {
    (0..l_sq.nrows())
        .map(|i| {
            let q = l_sq[(i, i)];
            if q < 0.0 || !q.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "diagonal entry {i} of L^2 is negative ({q})"
                )));
            }
            Ok((-1.0 + (1.0 + 4.0 * q).sqrt()) / 2.0)
        })
        .collect()
}

/// Weights of the edges entering grounded node `j`, from the diagonal drop
/// between `L^T L` and the grounded `L~^T L~`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedRow {
    /// `weights[k]` is the weight of `i -> j` for the `k`-th surviving node `i`.
    pub weights: Vec<f64>,
    /// Raw differences before clamping.
    pub radicands: Vec<f64>,
    pub clamped_mass: f64,
}

pub fn grounded_row(
    ltl: &DMatrix<f64>,
    ltl_grounded: &DMatrix<f64>,
    j: usize,
) -> Result<GroundedRow> {
    let n = ltl.nrows();
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, n });
    }
    if ltl_grounded.nrows() + 1 != n || !ltl_grounded.is_square() {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: ltl_grounded.nrows(),
        });
    }
    let scale = ltl
        .diagonal()
        .iter()
        .chain(ltl_grounded.diagonal().iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = RADICAND_FLOOR * scale;
    let mut clamped_mass = 0.0;
    let radicands: Vec<f64> = (0..n)
        .filter(|&i| i != j)
        .enumerate()
        .map(|(k, i)| ltl[(i, i)] - ltl_grounded[(k, k)])
        .collect();
    let weights = radicands
        .iter()
        .map(|&r| {
            if r.abs() <= floor {
                0.0
            } else if r < 0.0 {
                clamped_mass += -r;
                0.0
            } else {
                r.sqrt()
            }
        })
        .collect();
    Ok(GroundedRow {
        weights,
        radicands,
        clamped_mass,
    })
}

/// Recovers a symmetric Laplacian from one spectrum of undirected dynamics.
///
/// `M = S_w Re{S^-1} - w^2 I` is projected off the kernel vector and its
/// principal square root taken with negative eigenvalues clamped.
pub fn undirected_laplacian(
    s: &CpsdMatrix,
    opts: &ReconstructOptions,
) -> Result<ReconstructionReport> {
    check_omega(s.omega)?;
    let inv = s.inverse()?;
    let re_inv = linalg::real_part(&inv);
    let s_w = input_psd_from_inverse(&re_inv, s.marginal_omega_sq(), opts.kernel.as_ref())?;
    let n = s.n();
    let w2 = s.omega * s.omega;
    let mut m = linalg::symmetrize(&(re_inv * s_w - DMatrix::identity(n, n) * w2));
    let ones = DVector::from_element(n, 1.0);
    let v = opts.kernel.as_ref().unwrap_or(&ones);
    let p = linalg::complement_projector(v);
    m = linalg::symmetrize(&(&p * m * &p));

    if n > 1 {
        // Largest eigenvalue off the kernel direction.
        let shift = linalg::frobenius(&m) + 1.0;
        let pushed = &m - (v * v.transpose()) * (shift / v.dot(v));
        if linalg::max_sym_eigenvalue(&pushed) < -1e-8 * w2.max(1.0) {
            return Err(Error::NonLaplacian);
        }
    }
    let root = linalg::psd_sqrt(&m);
    let mut residuals = Residuals {
        clamped_mass: root.clamped_mass,
        ..Residuals::default()
    };
    let mut adjacency = root.root.map(|x| -x);
    for i in 0..n {
        adjacency[(i, i)] = 0.0;
        for j in 0..n {
            if i != j && adjacency[(i, j)] < 0.0 {
                // positive Laplacian off-diagonal
                if -adjacency[(i, j)] >= opts.cleanup_tol {
                    residuals.sign_violation += -adjacency[(i, j)];
                }
                adjacency[(i, j)] = 0.0;
            }
        }
    }
    cleanup_adjacency(&mut adjacency, opts.cleanup_tol);
    let laplacian = laplacian_from_adjacency(&adjacency);
    Ok(finish(
        Mode::Undirected,
        s,
        adjacency,
        Some(laplacian),
        vec![s_w],
        residuals,
        opts,
    ))
}

/// Reciprocity-free recovery from a single spectrum: `A = max(-(L - L^T), 0)`.
pub fn unidirectional_adjacency(
    s: &CpsdMatrix,
    opts: &ReconstructOptions,
) -> Result<ReconstructionReport> {
    let forms = directed_quadratic_forms(s, opts.kernel.as_ref())?;
    let n = s.n();
    let mut adjacency = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-forms.skew[(i, j)]).max(0.0)
        }
    });
    cleanup_adjacency(&mut adjacency, opts.cleanup_tol);
    let laplacian = laplacian_from_adjacency(&adjacency);
    let implied = laplacian.transpose() * &laplacian;
    let denom = linalg::frobenius(&forms.ltl).max(f64::MIN_POSITIVE);
    let residuals = Residuals {
        gram_mismatch: Some(linalg::frobenius(&(implied - &forms.ltl)) / denom),
        ..Residuals::default()
    };
    Ok(finish(
        Mode::Unidirectional,
        s,
        adjacency,
        Some(laplacian),
        vec![forms.s_w],
        residuals,
        opts,
    ))
}

fn check_grounded_set(s: &CpsdMatrix, grounded: &[CpsdMatrix]) -> Result<()> {
    let n = s.n();
    for j in 0..n {
        let g = grounded
            .get(j)
            .ok_or(Error::MissingGrounding(s.labels[j]))?;
        let expected: Vec<usize> = s
            .labels
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, &l)| l)
            .collect();
        if g.labels != expected {
            return Err(Error::MissingGrounding(s.labels[j]));
        }
        if (g.omega - s.omega).abs() > 1e-9 * s.omega.abs() {
            return Err(Error::FrequencyMismatch(s.omega, g.omega));
        }
    }
    if grounded.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} grounded spectra, got {}",
            grounded.len()
        )));
    }
    Ok(())
}

/// Full directed recovery from one ungrounded spectrum and the `n` spectra
/// with each node grounded in turn (`grounded[j]` has node `j` grounded).
pub fn assemble_directed(
    s: &CpsdMatrix,
    grounded: &[CpsdMatrix],
    opts: &ReconstructOptions,
) -> Result<ReconstructionReport> {
    check_grounded_set(s, grounded)?;
    let forms = directed_quadratic_forms(s, opts.kernel.as_ref())?;
    let n = s.n();
    let mut adjacency = DMatrix::zeros(n, n);
    let mut residuals = Residuals::default();
    for (j, g) in grounded.iter().enumerate() {
        let ltl_g = grounded_quadratic_form(g, forms.s_w)?;
        let row = grounded_row(&forms.ltl, &ltl_g, j)?;
        residuals.clamped_mass += row.clamped_mass;
        for (k, i) in (0..n).filter(|&i| i != j).enumerate() {
            adjacency[(j, i)] = row.weights[k];
        }
    }
    cleanup_adjacency(&mut adjacency, opts.cleanup_tol);
    let laplacian = laplacian_from_adjacency(&adjacency);
    let skew = &laplacian - laplacian.transpose();
    residuals.skew_mismatch = Some((skew - &forms.skew).amax());
    Ok(finish(
        Mode::GroundedDirected,
        s,
        adjacency,
        Some(laplacian),
        vec![forms.s_w],
        residuals,
        opts,
    ))
}

/// Edge detection for general dynamics `x' = G x + w`.
///
/// Magnitudes are `sqrt(S_w (Re{S^-1}_ii - Re{S~^-1}_ii))`; with `s_w_known`
/// absent `S_w = 1` and they come out scaled by `1 / sqrt(S_w)`.
pub fn boolean_general(
    s: &CpsdMatrix,
    grounded: &[CpsdMatrix],
    s_w_known: Option<f64>,
    opts: &ReconstructOptions,
) -> Result<ReconstructionReport> {
    check_omega(s.omega)?;
    check_grounded_set(s, grounded)?;
    let s_w = s_w_known.unwrap_or(1.0);
    if !(s_w > 0.0 && s_w.is_finite()) {
        return Err(Error::InvalidParameter("known S_w must be positive".into()));
    }
    let re_inv = linalg::real_part(&s.inverse()?);
    let n = s.n();
    let mut magnitudes = DMatrix::zeros(n, n);
    let mut residuals = Residuals::default();
    for (j, g) in grounded.iter().enumerate() {
        let re_g = linalg::real_part(&g.inverse()?);
        let row = grounded_row(&(&re_inv * s_w), &(re_g * s_w), j)?;
        residuals.clamped_mass += row.clamped_mass;
        for (k, i) in (0..n).filter(|&i| i != j).enumerate() {
            magnitudes[(j, i)] = row.weights[k];
        }
    }
    cleanup_adjacency(&mut magnitudes, opts.cleanup_tol);
    Ok(finish(
        Mode::BooleanGeneral,
        s,
        magnitudes,
        None,
        vec![s_w],
        residuals,
        opts,
    ))
}

/// Entrywise mean over reports taken at different frequencies.
pub fn multi_frequency_average(reports: &[ReconstructionReport]) -> Result<ReconstructionReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParameter("no reports to average".into()))?;
    for r in reports {
        if r.mode != first.mode {
            return Err(Error::ModeMismatch(format!("{} vs {}", first.mode, r.mode)));
        }
        if r.labels != first.labels {
            return Err(Error::ModeMismatch("reports cover different nodes".into()));
        }
    }
    let k = reports.len() as f64;
    let adjacency = reports.iter().fold(
        DMatrix::zeros(first.labels.len(), first.labels.len()),
        |acc, r| acc + &r.adjacency,
    ) / k;
    let laplacian = if reports.iter().all(|r| r.laplacian.is_some()) {
        Some(
            reports.iter().fold(
                DMatrix::zeros(first.labels.len(), first.labels.len()),
                |acc, r| acc + r.laplacian.as_ref().expect("checked"),
            ) / k,
        )
    } else {
        None
    };
    let max_opt = |f: fn(&Residuals) -> Option<f64>| {
        reports
            .iter()
            .filter_map(|r| f(&r.residuals))
            .reduce(f64::max)
    };
    let residuals = Residuals {
        clamped_mass: reports.iter().map(|r| r.residuals.clamped_mass).sum(),
        sign_violation: reports.iter().map(|r| r.residuals.sign_violation).sum(),
        skew_mismatch: max_opt(|r| r.skew_mismatch),
        gram_mismatch: max_opt(|r| r.gram_mismatch),
    };
    let boolean_adjacency = threshold_edges(&adjacency, first.threshold);
    Ok(ReconstructionReport {
        mode: first.mode,
        labels: first.labels.clone(),
        adjacency,
        laplacian,
        boolean_adjacency,
        threshold: first.threshold,
        omegas: reports.iter().flat_map(|r| r.omegas.clone()).collect(),
        s_w_estimates: reports
            .iter()
            .flat_map(|r| r.s_w_estimates.clone())
            .collect(),
        residuals,
        evaluation: None,
    })
}

/// Runs the recovery matching `mode` at one frequency.
pub fn reconstruct(
    mode: Mode,
    s: &CpsdMatrix,
    grounded: &[CpsdMatrix],
    s_w_known: Option<f64>,
    opts: &ReconstructOptions,
) -> Result<ReconstructionReport> {
    match mode {
        Mode::Undirected => undirected_laplacian(s, opts),
        Mode::Unidirectional => unidirectional_adjacency(s, opts),
        Mode::GroundedDirected => assemble_directed(s, grounded, opts),
        Mode::BooleanGeneral => boolean_general(s, grounded, s_w_known, opts),
    }
}

fn cleanup_adjacency(a: &mut DMatrix<f64>, tol: f64) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..n {
            if i == j || a[(i, j)].abs() < tol {
                a[(i, j)] = 0.0;
            }
        }
    }
}

/// `D - A` with `D` the row sums of `A` (in-degrees).
pub fn laplacian_from_adjacency(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut l = -a;
    for i in 0..n {
        l[(i, i)] = (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
    }
    l
}

/// Off-diagonal entries above `threshold * max` as a 0/1 matrix.
pub fn threshold_edges(a: &DMatrix<f64>, threshold: f64) -> DMatrix<u8> {
    let n = a.nrows();
    let max = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| a[(i, j)].abs())
        .fold(0.0, f64::max);
    DMatrix::from_fn(n, n, |i, j| {
        u8::from(i != j && max > 0.0 && a[(i, j)].abs() > threshold * max)
    })
}

fn finish(
    mode: Mode,
    s: &CpsdMatrix,
    adjacency: DMatrix<f64>,
    laplacian: Option<DMatrix<f64>>,
    s_w_estimates: Vec<f64>,
    residuals: Residuals,
    opts: &ReconstructOptions,
) -> ReconstructionReport {
    ReconstructionReport {
        mode,
        labels: s.labels.clone(),
        boolean_adjacency: threshold_edges(&adjacency, opts.threshold),
        adjacency,
        laplacian,
        threshold: opts.threshold,
        omegas: vec![s.omega],
        s_w_estimates,
        residuals,
        evaluation: None,
    }
}

const REPORT_HEADER: &str = "netrecon-report v1";

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(" ")
}

fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), fmt17)
}

impl ReconstructionReport {
    /// Recovered network as a graph; nodes are positions `0..n`.
    pub fn recovered_graph(&self) -> Result<WeightedDigraph> {
        let n = self.labels.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.adjacency[(i, j)];
                if i != j && w > 0.0 && (self.mode != Mode::Undirected || j < i) {
                    edges.push(Edge::new(j, i, w));
                }
            }
        }
        if self.mode == Mode::Undirected {
            WeightedDigraph::undirected(n, edges)
        } else {
            WeightedDigraph::directed(n, edges)
        }
    }

    /// Structured text: key/value header, then CSV blocks.
    pub fn to_text(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        let labels: Vec<String> = self.labels.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "mode {}", self.mode);
        let _ = writeln!(out, "n {}", self.labels.len());
        let _ = writeln!(out, "labels {}", labels.join(" "));
        let _ = writeln!(out, "omegas {}", join_floats(&self.omegas));
        let _ = writeln!(out, "s_w {}", join_floats(&self.s_w_estimates));
        let _ = writeln!(out, "threshold {}", fmt17(self.threshold));
        let _ = writeln!(out, "clamped_mass {}", fmt17(self.residuals.clamped_mass));
        let _ = writeln!(
            out,
            "sign_violation {}",
            fmt17(self.residuals.sign_violation)
        );
        let _ = writeln!(
            out,
            "skew_mismatch {}",
            opt_float(self.residuals.skew_mismatch)
        );
        let _ = writeln!(
            out,
            "gram_mismatch {}",
            opt_float(self.residuals.gram_mismatch)
        );
        out.push_str("[adjacency]\n");
        out.push_str(&linalg::matrix_to_csv(&self.adjacency));
        if let Some(l) = &self.laplacian {
            out.push_str("[laplacian]\n");
            out.push_str(&linalg::matrix_to_csv(l));
        }
        out.push_str("[boolean]\n");
        for i in 0..self.boolean_adjacency.nrows() {
            let row: Vec<String> = self
                .boolean_adjacency
                .row(i)
                .iter()
                .map(ToString::to_string)
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        if let Some(e) = &self.evaluation {
            out.push_str("[evaluation]\n");
            out.push_str(&e.to_text());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(REPORT_HEADER) {
            return Err(Error::Parse("missing report header".into()));
        }
        let mut header = std::collections::HashMap::new();
        let mut sections: Vec<(String, String)> = Vec::new();
        for line in lines {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                sections.push((name.to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(t);
                body.push('\n');
            } else {
                let (k, v) = t.split_once(' ').unwrap_or((t, ""));
                header.insert(k.to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("report is missing {k:?}")))
        };
        let floats = |s: String| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Parse(format!("bad number {t:?}")))
                })
                .collect()
        };
        let float = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Parse(format!("bad value for {k}")))
        };
        let opt = |k: &str| -> Result<Option<f64>> {
            let v = get(k)?;
            if v == "none" {
                Ok(None)
            } else {
                v.parse()
                    .map(Some)
                    .map_err(|_| Error::Parse(format!("bad value for {k}")))
            }
        };
        let section = |name: &str| {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, b)| b.as_str())
        };
        let labels = get("labels")?
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Parse(format!("bad label {t:?}")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let adjacency = linalg::matrix_from_csv(
            section("adjacency").ok_or_else(|| Error::Parse("missing adjacency".into()))?,
        )?;
        let laplacian = section("laplacian")
            .map(linalg::matrix_from_csv)
            .transpose()?;
        let boolean = linalg::matrix_from_csv(
            section("boolean").ok_or_else(|| Error::Parse("missing boolean block".into()))?,
        )?
        .map(|x| u8::from(x != 0.0));
        let evaluation = section("evaluation")
            .map(EvalResult::from_text)
            .transpose()?;
        Ok(ReconstructionReport {
            mode: get("mode")?.parse()?,
            labels,
            adjacency,
            laplacian,
            boolean_adjacency: boolean,
            threshold: float("threshold")?,
            omegas: floats(get("omegas")?)?,
            s_w_estimates: floats(get("s_w")?)?,
            residuals: Residuals {
                clamped_mass: float("clamped_mass")?,
                sign_violation: float("sign_violation")?,
                skew_mismatch: opt("skew_mismatch")?,
                gram_mismatch: opt("gram_mismatch")?,
            },
            evaluation,
        })
    }
}
