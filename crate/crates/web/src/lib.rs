//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes an edge list in the text format used by the CLI and
//! returns a JSON string. The `*_json` functions hold the logic so they can be
//! tested natively; the `#[wasm_bindgen]` wrappers only translate errors.

use nalgebra::DMatrix;
use netrecon::pipeline::{self, GraphSource, PipelineConfig};
use netrecon::spectra::{self, WelchParams};
use netrecon::{metrics, Mode, NoiseModel, RandomGraphParams, WeightedDigraph};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest graph and sample budget accepted from the page.
pub const MAX_NODES: usize = 12;
pub const MAX_SAMPLES: usize = 400_000;

fn rows(m: &DMatrix<f64>) -> Value {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>())
        .collect()
}

fn parse_graph(edges: &str) -> Result<WeightedDigraph, String> {
    let g: WeightedDigraph = edges.parse().map_err(|e| format!("{e}"))?;
    if g.n() > MAX_NODES {
        return Err(format!("demo is limited to {MAX_NODES} nodes"));
    }
    Ok(g)
}

fn parse_mode(mode: &str) -> Result<Mode, String> {
    mode.parse().map_err(|e| format!("{e}"))
}

fn summary(truth: &WeightedDigraph, out: &pipeline::PipelineOutput) -> Value {
    let r = &out.report;
    json!({
        "mode": r.mode.to_string(),
        "truth": rows(&truth.adjacency()),
        "recovered": rows(&r.adjacency),
        "boolean": rows(&r.boolean_adjacency.map(f64::from)),
        "omegas": r.omegas,
        "s_w": r.s_w_estimates,
        "clamped_mass": r.residuals.clamped_mass,
        "skew_mismatch": r.residuals.skew_mismatch,
        "edge_errors": pipeline::edge_relative_errors(truth, &r.adjacency),
        "evaluation": {
            "frobenius_rel_error": out.evaluation.frobenius_rel_error,
            "precision": out.evaluation.precision,
            "recall": out.evaluation.recall,
            "f1": out.evaluation.f1,
        },
    })
}

/// Edge list of a seeded random graph.
pub fn random_graph_text(
    n: usize,
    edge_prob: f64,
    directed: bool,
    seed: u64,
) -> Result<String, String> {
    if n > MAX_NODES {
        return Err(format!("demo is limited to {MAX_NODES} nodes"));
    }
    let p = RandomGraphParams {
        n,
        edge_prob,
        weight_low: 0.5,
        weight_high: 2.0,
        directed,
        forbid_reciprocal: false,
    };
    netrecon::graph::random_graph(&p, seed)
        .map(|g| g.to_edge_list())
        .map_err(|e| format!("{e}"))
}

/// Reconstruction from exact spectra at the given frequencies.
pub fn analytic_round_trip_json(edges: &str, mode: &str, omegas: &[f64]) -> Result<String, String> {
    let truth = parse_graph(edges)?;
    let cfg = PipelineConfig {
        graph: GraphSource::Inline(truth.clone()),
        mode: parse_mode(mode)?,
        omegas: Some(omegas.to_vec()),
        analytic: true,
        ..PipelineConfig::default()
    };
    let out = pipeline::run_pipeline(&cfg).map_err(|e| format!("{e}"))?;
    Ok(summary(&truth, &out).to_string())
}

/// Simulation, Welch estimation and reconstruction with the default band.
pub fn empirical_json(
    edges: &str,
    mode: &str,
    n_samples: usize,
    segment_len: usize,
    seed: u64,
) -> Result<String, String> {
    if n_samples > MAX_SAMPLES {
        return Err(format!("demo is limited to {MAX_SAMPLES} samples per run"));
    }
    let truth = parse_graph(edges)?;
    let cfg = PipelineConfig {
        graph: GraphSource::Inline(truth.clone()),
        mode: parse_mode(mode)?,
        n_samples,
        welch: WelchParams {
            segment_len,
            ..WelchParams::default()
        },
        seed,
        ..PipelineConfig::default()
    };
    let out = pipeline::run_pipeline(&cfg).map_err(|e| format!("{e}"))?;
    Ok(summary(&truth, &out).to_string())
}

/// Exact auto-spectra `S_ii(w)` and the input density recovered from them,
/// on `points` log-spaced frequencies in `[w_min, w_max]`.
pub fn spectrum_curves_json(
    edges: &str,
    w_min: f64,
    w_max: f64,
    points: usize,
) -> Result<String, String> {
    let truth = parse_graph(edges)?;
    if !(w_min > 0.0 && w_max > w_min) || !(2..=2000).contains(&points) {
        return Err("need 0 < w_min < w_max and 2..=2000 points".into());
    }
    let l = netrecon::graph::build_laplacian(&truth);
    let noise = NoiseModel::white(1.0, 0);
    let step = (w_max / w_min).ln() / (points - 1) as f64;
    let omegas: Vec<f64> = (0..points)
        .map(|k| w_min * (step * k as f64).exp())
        .collect();
    let mut auto = vec![Vec::with_capacity(points); truth.n()];
    let mut s_w = Vec::with_capacity(points);
    for &w in &omegas {
        let s = spectra::analytic_cpsd(&l, noise.psd(w), w).map_err(|e| format!("{e}"))?;
        for (i, curve) in auto.iter_mut().enumerate() {
            curve.push(s.values[(i, i)].re);
        }
        s_w.push(spectra::estimate_input_psd(&s, None).map_err(|e| format!("{e}"))?);
    }
    Ok(json!({ "omegas": omegas, "auto": auto, "s_w": s_w }).to_string())
}

/// Frobenius error of the recovered adjacency in a result from this module.
pub fn relative_error(result: &str) -> Result<f64, String> {
    let v: Value = serde_json::from_str(result).map_err(|e| e.to_string())?;
    let m = |key: &str| -> Result<DMatrix<f64>, String> {
        let r: Vec<Vec<f64>> = serde_json::from_value(v[key].clone()).map_err(|e| e.to_string())?;
        let n = r.len();
        Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
    };
    metrics::compare(&m("truth")?, &m("recovered")?, 0.0)
        .map(|e| e.frobenius_rel_error)
        .map_err(|e| format!("{e}"))
}

#[wasm_bindgen(js_name = randomGraph)]
pub fn random_graph(
    n: usize,
    edge_prob: f64,
    directed: bool,
    seed: u32,
) -> Result<String, JsError> {
    random_graph_text(n, edge_prob, directed, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = analyticRoundTrip)]
pub fn analytic_round_trip(edges: &str, mode: &str, omegas: Vec<f64>) -> Result<String, JsError> {
    analytic_round_trip_json(edges, mode, &omegas).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = empiricalReconstruction)]
pub fn empirical_reconstruction(
    edges: &str,
    mode: &str,
    n_samples: usize,
    segment_len: usize,
    seed: u32,
) -> Result<String, JsError> {
    empirical_json(edges, mode, n_samples, segment_len, u64::from(seed))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = spectrumCurves)]
pub fn spectrum_curves(
    edges: &str,
    w_min: f64,
    w_max: f64,
    points: usize,
) -> Result<String, JsError> {
    spectrum_curves_json(edges, w_min, w_max, points).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CYCLE: &str = "n 3 directed 1\n0 1 2\n1 2 3\n2 0 4\n";

    #[test]
    fn analytic_cycle_is_exact() {
        let out = analytic_round_trip_json(CYCLE, "grounded-directed", &[0.8, 1.3]).unwrap();
        assert!(relative_error(&out).unwrap() < 1e-10);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["evaluation"]["f1"], 1.0);
        assert_eq!(v["boolean"][1][0], 1.0);
    }

    #[test]
    fn empirical_cycle_finds_the_edges() {
        let out = empirical_json(CYCLE, "grounded-directed", 200_000, 4096, 1).unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["evaluation"]["f1"], 1.0);
        assert!(relative_error(&out).unwrap() < 0.3);
    }

    #[test]
    fn curves_recover_flat_input_density() {
        let v: Value =
            serde_json::from_str(&spectrum_curves_json(CYCLE, 0.1, 10.0, 50).unwrap()).unwrap();
        assert_eq!(v["auto"].as_array().unwrap().len(), 3);
        for s in v["s_w"].as_array().unwrap() {
            assert!((s.as_f64().unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn random_graph_is_seeded_and_limited() {
        let a = random_graph_text(6, 0.4, true, 5).unwrap();
        assert_eq!(a, random_graph_text(6, 0.4, true, 5).unwrap());
        let out = analytic_round_trip_json(&a, "directed", &[1.0]).unwrap();
        assert!(relative_error(&out).unwrap() < 1e-8);
        assert!(random_graph_text(MAX_NODES + 1, 0.4, true, 5).is_err());
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(analytic_round_trip_json("nonsense", "undirected", &[1.0]).is_err());
        assert!(analytic_round_trip_json(CYCLE, "sideways", &[1.0]).is_err());
        assert!(analytic_round_trip_json(CYCLE, "undirected", &[1.0]).is_err());
        assert!(empirical_json(CYCLE, "directed", MAX_SAMPLES + 1, 1024, 0).is_err());
        assert!(spectrum_curves_json(CYCLE, 1.0, 0.5, 10).is_err());
    }
}
