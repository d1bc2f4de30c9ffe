//! Weighted (di)graphs and the matrices derived from them.
//!
//! Adjacency orientation follows the in-degree convention used throughout the
//! crate: `A[(i, j)]` holds the weight of the edge `j -> i`, so row `i` of the
//! Laplacian `L = D - A` collects the edges entering node `i`.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, fmt17};

/// Row sums of a Laplacian must vanish to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance on the largest eigenvalue of the symmetric part of general dynamics.
pub const NSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(src: usize, dst: usize, weight: f64) -> Self {
        Edge { src, dst, weight }
    }
}

/// A weighted network with strictly positive edge weights.
///
/// Undirected graphs keep both orientations of every edge in `edges`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    edges: Vec<Edge>,
    directed: bool,
}

impl WeightedDigraph {
    /// Builds a directed graph, validating every edge.
    pub fn directed(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let g = WeightedDigraph {
            n,
            edges,
            directed: true,
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds an undirected graph from one entry per unordered pair.
    ///
    /// A pair listed in both orientations is accepted when the weights agree.
    pub fn undirected(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut stored: Vec<Edge> = Vec::with_capacity(2 * edges.len());
        for e in edges {
            match stored.iter().find(|s| s.src == e.src && s.dst == e.dst) {
                Some(s) if s.weight == e.weight => continue,
                Some(_) => {
                    return Err(Error::InvalidGraph(format!(
                        "conflicting weights for undirected edge {{{}, {}}}",
                        e.src, e.dst
                    )))
                }
                None => {
                    stored.push(e);
                    stored.push(Edge::new(e.dst, e.src, e.weight));
                }
            }
        }
        let g = WeightedDigraph {
            n,
            edges: stored,
            directed: false,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidGraph("node count must be positive".into()));
        }
        let mut seen = vec![false; self.n * self.n];
        for e in &self.edges {
            if e.src >= self.n || e.dst >= self.n {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} references a node outside [0, {})",
                    e.src, e.dst, self.n
                )));
            }
            if e.src == e.dst {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", e.src)));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} has non-positive or non-finite weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            let slot = &mut seen[e.src * self.n + e.dst];
            if *slot {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {} -> {}",
                    e.src, e.dst
                )));
            }
            *slot = true;
        }
        if !self.directed {
            for e in &self.edges {
                let mirrored = self
                    .edges
                    .iter()
                    .any(|r| r.src == e.dst && r.dst == e.src && r.weight == e.weight);
                if !mirrored {
                    return Err(Error::InvalidGraph(format!(
                        "undirected graph is missing the mirror of {} -> {}",
                        e.src, e.dst
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// `A[(i, j)]` = weight of edge `j -> i`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.dst, e.src)] = e.weight;
        }
        a
    }

    /// Graph with node `j` and its incident edges removed; remaining nodes are
    /// renumbered in order.
    pub fn without_node(&self, j: usize) -> Result<WeightedDigraph> {
        if j >= self.n {
            return Err(Error::IndexOutOfRange {
                index: j,
                n: self.n,
            });
        }
        let shift = |v: usize| if v > j { v - 1 } else { v };
        let edges = self
            .edges
            .iter()
            .filter(|e| e.src != j && e.dst != j)
            .map(|e| Edge::new(shift(e.src), shift(e.dst), e.weight))
            .collect();
        Ok(WeightedDigraph {
            n: self.n - 1,
            edges,
            directed: self.directed,
        })
    }

    /// Edge-list text: header `n <count> directed <0|1>`, then `src dst weight`.
    ///
    /// Undirected graphs write each pair once with `src < dst`.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {} directed {}\n", self.n, u8::from(self.directed));
        let mut edges: Vec<&Edge> = self
            .edges
            .iter()
            .filter(|e| self.directed || e.src < e.dst)
            .collect();
        edges.sort_by_key(|e| (e.src, e.dst));
        for e in edges {
            let _ = writeln!(out, "{} {} {}", e.src, e.dst, fmt17(e.weight));
        }
        out
    }
}

impl FromStr for WeightedDigraph {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut header: Option<(usize, bool)> = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::Parse(format!("line {}: {what}: {raw:?}", lineno + 1));
            if header.is_none() {
                if toks.len() != 4 || toks[0] != "n" || toks[2] != "directed" {
                    return Err(bad("expected header `n <count> directed <0|1>`"));
                }
                let n = toks[1].parse().map_err(|_| bad("bad node count"))?;
                let directed = match toks[3] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("directed flag must be 0 or 1")),
                };
                header = Some((n, directed));
                continue;
            }
            if toks.len() != 3 {
                return Err(bad("expected `src dst weight`"));
            }
            let src = toks[0].parse().map_err(|_| bad("bad src"))?;
            let dst = toks[1].parse().map_err(|_| bad("bad dst"))?;
            let weight = toks[2].parse().map_err(|_| bad("bad weight"))?;
            edges.push(Edge::new(src, dst, weight));
        }
        let (n, directed) = header.ok_or_else(|| Error::Parse("missing header line".into()))?;
        if directed {
            WeightedDigraph::directed(n, edges)
        } else {
            WeightedDigraph::undirected(n, edges)
        }
    }
}

/// What a [`SystemMatrix`] generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    LaplacianUndirected,
    LaplacianDirected,
    GroundedLaplacian,
    GeneralDynamics,
}

impl Role {
    pub fn is_laplacian(self) -> bool {
        matches!(
            self,
            Role::LaplacianUndirected | Role::LaplacianDirected | Role::GroundedLaplacian
        )
    }
}

/// Dense generator of the linear dynamics, tagged with its role.
///
/// Laplacian roles evolve as `x' = -M x + w`; general dynamics as `x' = M x + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    values: DMatrix<f64>,
    role: Role,
    /// Original node id of every row.
    labels: Vec<usize>,
    /// Original node ids removed by grounding, in grounding order.
    grounded: Vec<usize>,
    kernel: Option<DVector<f64>>,
}

impl SystemMatrix {
    /// Wraps a Laplacian, checking zero row sums and the sign pattern.
    pub fn laplacian(values: DMatrix<f64>, directed: bool) -> Result<Self> {
        check_square(&values)?;
        let n = values.nrows();
        for i in 0..n {
            let row_sum: f64 = values.row(i).iter().sum();
            let scale = values.row(i).iter().fold(1.0_f64, |a, x| a.max(x.abs()));
            if row_sum.abs() > ROW_SUM_TOL * scale {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} sums to {row_sum:e}, expected 0"
                )));
            }
            for j in 0..n {
                let v = values[(i, j)];
                if i == j && v < 0.0 {
                    return Err(Error::InvalidMatrix(format!("negative diagonal at {i}")));
                }
                if i != j && v > 0.0 {
                    return Err(Error::InvalidMatrix(format!(
                        "positive off-diagonal entry at ({i}, {j})"
                    )));
                }
            }
        }
        if !directed && (&values - values.transpose()).amax() > ROW_SUM_TOL * values.amax().max(1.0)
        {
            return Err(Error::InvalidMatrix(
                "undirected Laplacian is not symmetric".into(),
            ));
        }
        Ok(SystemMatrix {
            role: if directed {
                Role::LaplacianDirected
            } else {
                Role::LaplacianUndirected
            },
            labels: (0..n).collect(),
            grounded: Vec::new(),
            kernel: Some(DVector::from_element(n, 1.0)),
            values,
        })
    }

    /// Wraps a general generator `G`; its symmetric part must be negative
    /// semidefinite. `kernel` is an optional known null vector of `G`.
    pub fn general(values: DMatrix<f64>, kernel: Option<DVector<f64>>) -> Result<Self> {
        check_square(&values)?;
        let n = values.nrows();
        let lmax = linalg::max_sym_eigenvalue(&values);
        if lmax > NSD_TOL {
            return Err(Error::InvalidMatrix(format!(
                "symmetric part has positive eigenvalue {lmax:e}"
            )));
        }
        if let Some(v) = &kernel {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
            let scale = values.amax().max(1.0) * v.amax();
            if v.amax() == 0.0 || (&values * v).amax() > 1e-10 * scale {
                return Err(Error::InvalidMatrix(
                    "kernel vector is not in the null space".into(),
                ));
            }
        }
        Ok(SystemMatrix {
            values,
            role: Role::GeneralDynamics,
            labels: (0..n).collect(),
            grounded: Vec::new(),
            kernel,
        })
    }

    /// General dynamics `G = -L - (c + decay) I` from a Laplacian, where `c`
    /// is the smallest shift making the symmetric part of `G` negative
    /// semidefinite. Off-diagonal entries of `G` equal those of `-L`.
    pub fn general_from_laplacian(l: &SystemMatrix, decay: f64) -> Result<Self> {
        if decay < 0.0 {
            return Err(Error::InvalidParameter("decay must be non-negative".into()));
        }
        let neg = -&l.values;
        let shift = linalg::max_sym_eigenvalue(&neg).max(0.0) + decay;
        let n = neg.nrows();
        let mut g = SystemMatrix::general(neg - DMatrix::identity(n, n) * shift, None)?;
        g.labels = l.labels.clone();
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Original ids removed by grounding (empty for ungrounded matrices).
    pub fn grounded_nodes(&self) -> &[usize] {
        &self.grounded
    }

    /// Most recent grounded node, if any.
    pub fn grounded_node(&self) -> Option<usize> {
        self.grounded.last().copied()
    }

    pub fn kernel_vector(&self) -> Option<&DVector<f64>> {
        self.kernel.as_ref()
    }

    /// The matrix `M` in `x' = M x + w`.
    pub fn drift(&self) -> DMatrix<f64> {
        if self.role.is_laplacian() {
            -&self.values
        } else {
            self.values.clone()
        }
    }

    /// The matrix `L` entering the spectral identity (`-G` for general dynamics).
    pub fn spectral_generator(&self) -> DMatrix<f64> {
        if self.role.is_laplacian() {
            self.values.clone()
        } else {
            -&self.values
        }
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::InvalidMatrix(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    Ok(())
}

/// `L = D - A` with `D` the weighted in-degrees.
pub fn build_laplacian(g: &WeightedDigraph) -> SystemMatrix {
    let a = g.adjacency();
    let n = g.n();
    let mut l = -a;
    for i in 0..n {
        let indeg: f64 = -(0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum::<f64>();
        l[(i, i)] = indeg;
    }
    SystemMatrix {
        role: if g.is_directed() {
            Role::LaplacianDirected
        } else {
            Role::LaplacianUndirected
        },
        labels: (0..n).collect(),
        grounded: Vec::new(),
        kernel: Some(DVector::from_element(n, 1.0)),
        values: l,
    }
}

/// Removes row and column `j` (an index into the current matrix).
pub fn ground(m: &SystemMatrix, j: usize) -> Result<SystemMatrix> {
    let n = m.n();
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, n });
    }
    if n == 1 {
        return Err(Error::InvalidParameter(
            "cannot ground the only node of a one-node system".into(),
        ));
    }
    let mut labels = m.labels.clone();
    let removed = labels.remove(j);
    let mut grounded = m.grounded.clone();
    grounded.push(removed);
    Ok(SystemMatrix {
        values: linalg::delete_row_col(&m.values, j),
        role: if m.role.is_laplacian() {
            Role::GroundedLaplacian
        } else {
            Role::GeneralDynamics
        },
        labels,
        grounded,
        kernel: None,
    })
}

/// True iff no ordered pair carries edges in both directions (`tr(A^2) = 0`).
pub fn is_unidirectional(g: &WeightedDigraph) -> bool {
    reciprocity_trace(&g.adjacency()) <= 1e-12
}

/// `tr(A^2) = sum_ij A_ij A_ji`.
pub fn reciprocity_trace(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut t = 0.0;
    for i in 0..n {
        for j in 0..n {
            t += a[(i, j)] * a[(j, i)];
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomGraphParams {
    pub n: usize,
    pub edge_prob: f64,
    pub weight_low: f64,
    pub weight_high: f64,
    pub directed: bool,
    pub forbid_reciprocal: bool,
}

/// Seeded random graph.
///
/// Directed graphs draw each ordered pair independently; with
/// `forbid_reciprocal` each unordered pair instead receives at most one edge
/// with a random orientation.
pub fn random_graph(p: &RandomGraphParams, seed: u64) -> Result<WeightedDigraph> {
    if p.n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(p.edge_prob > 0.0 && p.edge_prob <= 1.0) {
        return Err(Error::InvalidParameter(
            "edge_prob must lie in (0, 1]".into(),
        ));
    }
    if !(p.weight_low > 0.0 && p.weight_low <= p.weight_high && p.weight_high.is_finite()) {
        return Err(Error::InvalidParameter(
            "weights must satisfy 0 < low <= high".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = |rng: &mut ChaCha8Rng| {
        if p.weight_low == p.weight_high {
            p.weight_low
        } else {
            rng.random_range(p.weight_low..=p.weight_high)
        }
    };
    let mut edges = Vec::new();
    for i in 0..p.n {
        for j in (i + 1)..p.n {
            if !p.directed {
                if rng.random_bool(p.edge_prob) {
                    edges.push(Edge::new(i, j, weight(&mut rng)));
                }
            } else if p.forbid_reciprocal {
                if rng.random_bool(p.edge_prob) {
                    let w = weight(&mut rng);
                    if rng.random_bool(0.5) {
                        edges.push(Edge::new(i, j, w));
                    } else {
                        edges.push(Edge::new(j, i, w));
                    }
                }
            } else {
                if rng.random_bool(p.edge_prob) {
                    edges.push(Edge::new(i, j, weight(&mut rng)));
                }
                if rng.random_bool(p.edge_prob) {
                    edges.push(Edge::new(j, i, weight(&mut rng)));
                }
            }
        }
    }
    if p.directed {
        WeightedDigraph::directed(p.n, edges)
    } else {
        WeightedDigraph::undirected(p.n, edges)
    }
}
