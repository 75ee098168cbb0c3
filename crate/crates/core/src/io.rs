//! JSON file formats for problem inputs and the solved-bridge artifact.
//!
//! Input files (all strict: unknown keys are rejected so typos surface):
//!
//! * graph — `{"n": 9, "edges": [{"from": 1, "to": 2, "length": 1.0}, ...]}`
//!   with `length` optional (default 1.0); node labels are 1-based.
//! * prior — `{"type": "boltzmann", "T": 0.01, "N": 4}`,
//!   `{"type": "ruelle_bowen", "N": 4}`, or
//!   `{"type": "custom", "p0": [...], "steps": [[[...]]]}`.
//! * marginals — `{"initial": {"nodes": [1, 2], "values": [0.5, 0.2]},
//!   "final": {...}}`; omit a side to leave that endpoint unconstrained
//!   (half-bridge). A side listing every node is complete information.
//! * moments — `{"order": 1, "initial": {"mean": 1.5},
//!   "final": {"mean": 7.0}}` with `"second_moment"` per side when
//!   `order` is 2; omit a side to leave it unconstrained.
//!
//! The solved bridge is written as a single JSON object whose keys follow
//! the notation used across the crate (`phi0`, `phiN`, `phihat0`,
//! `phihatN`, `q0N`, `q0_star`, `qN_star`, ...), plus the 1-based node
//! labels for self-description.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bridge::{BridgeSolution, PartialMarginal};
use crate::graph::{Edge, Graph};
use crate::moments::MomentSpec;
use crate::prior::MarkovPrior;
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub length: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "T", default)]
    pub temperature: Option<f64>,
    #[serde(rename = "N", default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub p0: Option<Vec<f64>>,
    #[serde(default)]
    pub steps: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalsFile {
    #[serde(default)]
    pub initial: Option<MarginalSide>,
    #[serde(rename = "final", default)]
    pub final_side: Option<MarginalSide>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalSide {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsFile {
    pub order: u8,
    #[serde(default)]
    pub initial: Option<MomentSide>,
    #[serde(rename = "final", default)]
    pub final_side: Option<MomentSide>,
    #[serde(default)]
    pub node_values: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSide {
    pub mean: f64,
    #[serde(default)]
    pub second_moment: Option<f64>,
}

/// Serialized form of a [`BridgeSolution`].
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub nodes: Vec<usize>,
    pub phi0: Vec<f64>,
    #[serde(rename = "phiN")]
    pub phi_n: Vec<f64>,
    pub phihat0: Vec<f64>,
    #[serde(rename = "phihatN")]
    pub phihat_n: Vec<f64>,
    #[serde(rename = "q0N")]
    pub q0n: Vec<Vec<f64>>,
    pub q0_star: Vec<f64>,
    #[serde(rename = "qN_star")]
    pub qn_star: Vec<f64>,
    pub iterations: usize,
    pub final_gap: f64,
    pub kl_value: f64,
}

impl SolutionFile {
    pub fn from_solution(sol: &BridgeSolution) -> Self {
        let n = sol.phi0.len();
        SolutionFile {
            nodes: (1..=n).collect(),
            phi0: sol.phi0.to_vec(),
            phi_n: sol.phi_n.to_vec(),
            phihat0: sol.phihat0.to_vec(),
            phihat_n: sol.phihat_n.to_vec(),
            q0n: sol
                .q0n
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            q0_star: sol.q0_star.to_vec(),
            qn_star: sol.qn_star.to_vec(),
            iterations: sol.iterations,
            final_gap: sol.final_gap,
            kl_value: sol.kl_value,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads and validates a graph file.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let file: GraphFile = read_json(path)?;
    let edges: Vec<Edge> = file
        .edges
        .iter()
        .map(|e| match e.length {
            Some(l) => Edge::with_length(e.from, e.to, l),
            None => Edge::new(e.from, e.to),
        })
        .collect();
    Graph::new(file.n, &edges)
}

/// Builds the prior described by a prior file. Boltzmann and Ruelle–Bowen
/// priors need the graph; a custom prior carries its own chain (the graph,
/// when given, only has to agree on the node count).
pub fn build_prior(file: &PriorFile, graph: Option<&Graph>) -> Result<MarkovPrior> {
    let need_graph = || {
        graph.ok_or_else(|| {
            Error::InvalidSpec(format!("a {} prior needs a graph", file.kind))
        })
    };
    let need_horizon = || {
        file.horizon.ok_or_else(|| {
            Error::InvalidSpec(format!("a {} prior needs \"N\" (the horizon)", file.kind))
        })
    };
    match file.kind.as_str() {
        "boltzmann" => {
            let t = file.temperature.ok_or_else(|| {
                Error::InvalidSpec("a boltzmann prior needs \"T\" (the temperature)".into())
            })?;
            MarkovPrior::boltzmann(need_graph()?, t, need_horizon()?)
        }
        "ruelle_bowen" => MarkovPrior::ruelle_bowen(need_graph()?, need_horizon()?),
        "custom" => {
            let p0 = file.p0.as_ref().ok_or_else(|| {
                Error::InvalidSpec("a custom prior needs \"p0\"".into())
            })?;
            let steps = file.steps.as_ref().ok_or_else(|| {
                Error::InvalidSpec("a custom prior needs \"steps\"".into())
            })?;
            let n = p0.len();
            let mut matrices = Vec::with_capacity(steps.len());
            for (t, rows) in steps.iter().enumerate() {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidSpec(format!(
                        "step {t} is not an {n}x{n} matrix"
                    )));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                matrices.push(
                    ndarray::Array2::from_shape_vec((n, n), flat)
                        .expect("shape checked above"),
                );
            }
            if let Some(g) = graph {
                if g.n() != n {
                    return Err(Error::InvalidSpec(format!(
                        "custom prior has {n} nodes but the graph has {}",
                        g.n()
                    )));
                }
            }
            MarkovPrior::custom(ndarray::Array1::from_vec(p0.clone()), matrices)
        }
        other => Err(Error::InvalidSpec(format!(
            "unknown prior type {other:?}; expected boltzmann, ruelle_bowen, or custom"
        ))),
    }
}

/// Loads a prior file and builds the prior against `graph`.
pub fn load_prior(path: &Path, graph: Option<&Graph>) -> Result<MarkovPrior> {
    let file: PriorFile = read_json(path)?;
    build_prior(&file, graph)
}

fn side_to_marginal(side: &MarginalSide, n: usize) -> Result<PartialMarginal> {
    if side.nodes.len() != side.values.len() {
        return Err(Error::InvalidSpec(format!(
            "{} nodes but {} values in a marginal side",
            side.nodes.len(),
            side.values.len()
        )));
    }
    let mut seen = vec![false; n];
    for &label in &side.nodes {
        if label == 0 || label > n {
            return Err(Error::InvalidSpec(format!(
                "node label {label} outside 1..={n}"
            )));
        }
        if seen[label - 1] {
            return Err(Error::InvalidSpec(format!("node {label} listed twice")));
        }
        seen[label - 1] = true;
    }
    if side.nodes.len() == n {
        // Complete information: reassemble in node order.
        let mut dense = vec![0.0; n];
        for (&label, &v) in side.nodes.iter().zip(&side.values) {
            dense[label - 1] = v;
        }
        PartialMarginal::full(&dense)
    } else {
        PartialMarginal::on_subset(n, &side.nodes, &side.values)
    }
}

/// Loads a marginals file into the two optional endpoint constraints.
pub fn load_marginals(
    path: &Path,
    n: usize,
) -> Result<(Option<PartialMarginal>, Option<PartialMarginal>)> {
    let file: MarginalsFile = read_json(path)?;
    if file.initial.is_none() && file.final_side.is_none() {
        return Err(Error::InvalidSpec(
            "marginals file constrains neither endpoint".into(),
        ));
    }
    let rho0 = file
        .initial
        .as_ref()
        .map(|s| side_to_marginal(s, n))
        .transpose()?;
    let rho_n = file
        .final_side
        .as_ref()
        .map(|s| side_to_marginal(s, n))
        .transpose()?;
    Ok((rho0, rho_n))
}

/// Loads a moments file into a [`MomentSpec`].
pub fn load_moments(path: &Path) -> Result<MomentSpec> {
    let file: MomentsFile = read_json(path)?;
    let spec = match (file.order, &file.initial, &file.final_side) {
        (_, None, None) => {
            return Err(Error::InvalidSpec(
                "moments file constrains neither endpoint".into(),
            ))
        }
        (1, Some(a), Some(b)) => {
            reject_second_moment(a, "initial")?;
            reject_second_moment(b, "final")?;
            MomentSpec::mean_both(a.mean, b.mean)
        }
        (1, Some(a), None) => {
            reject_second_moment(a, "initial")?;
            MomentSpec::mean_initial(a.mean)
        }
        (1, None, Some(b)) => {
            reject_second_moment(b, "final")?;
            MomentSpec::mean_final(b.mean)
        }
        (2, Some(a), Some(b)) => MomentSpec::mean_variance(
            a.mean,
            require_second_moment(a, "initial")?,
            b.mean,
            require_second_moment(b, "final")?,
        ),
        (2, Some(a), None) => MomentSpec::mean_variance_side(
            crate::moments::Side::Initial,
            a.mean,
            require_second_moment(a, "initial")?,
        ),
        (2, None, Some(b)) => MomentSpec::mean_variance_side(
            crate::moments::Side::Final,
            b.mean,
            require_second_moment(b, "final")?,
        ),
        (order, _, _) => {
            return Err(Error::InvalidSpec(format!(
                "moment order must be 1 or 2, got {order}"
            )))
        }
    };
    Ok(match file.node_values {
        Some(values) => spec.with_node_values(values),
        None => spec,
    })
}

fn reject_second_moment(side: &MomentSide, which: &str) -> Result<()> {
    if side.second_moment.is_some() {
        return Err(Error::InvalidSpec(format!(
            "{which} side carries a second moment but order is 1"
        )));
    }
    Ok(())
}

fn require_second_moment(side: &MomentSide, which: &str) -> Result<f64> {
    side.second_moment.ok_or_else(|| {
        Error::InvalidSpec(format!(
            "{which} side needs a second moment at order 2"
        ))
    })
}

/// Writes the solution as pretty-printed JSON.
pub fn write_solution(path: &Path, sol: &BridgeSolution) -> Result<()> {
    let file = SolutionFile::from_solution(sol);
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::solve_bridge;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn graph_roundtrip_with_default_lengths() {
        let f = write_temp(
            r#"{"n": 3, "edges": [
                {"from": 1, "to": 2},
                {"from": 2, "to": 3, "length": 2.5},
                {"from": 3, "to": 1, "length": 0.0}
            ]}"#,
        );
        let g = load_graph(f.path()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.lengths()[[0, 1]], 1.0);
        assert_eq!(g.lengths()[[1, 2]], 2.5);
        assert_eq!(g.lengths()[[2, 0]], 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write_temp(r#"{"n": 2, "edges": [], "extra": 1}"#);
        assert!(matches!(load_graph(f.path()), Err(Error::Json(_))));
        let f = write_temp(r#"{"type": "boltzmann", "T": 1.0, "N": 2, "beta": 3}"#);
        assert!(matches!(
            load_prior(f.path(), None),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn prior_files_build_all_three_kinds() {
        let gf = write_temp(
            r#"{"n": 2, "edges": [
                {"from": 1, "to": 1}, {"from": 1, "to": 2},
                {"from": 2, "to": 1}, {"from": 2, "to": 2}
            ]}"#,
        );
        let g = load_graph(gf.path()).unwrap();

        let f = write_temp(r#"{"type": "boltzmann", "T": 0.5, "N": 3}"#);
        let prior = load_prior(f.path(), Some(&g)).unwrap();
        assert_eq!(prior.horizon(), 3);

        let f = write_temp(r#"{"type": "ruelle_bowen", "N": 2}"#);
        let prior = load_prior(f.path(), Some(&g)).unwrap();
        assert_eq!(prior.n(), 2);

        let f = write_temp(
            r#"{"type": "custom",
                "p0": [0.5, 0.5],
                "steps": [[[0.5, 0.5], [0.25, 0.75]]]}"#,
        );
        let prior = load_prior(f.path(), Some(&g)).unwrap();
        assert_eq!(prior.horizon(), 1);
        assert!((prior.step(0).unwrap()[[1, 1]] - 0.75).abs() < 1e-15);

        // Missing required fields are reported as spec errors.
        let f = write_temp(r#"{"type": "boltzmann", "N": 3}"#);
        assert!(matches!(
            load_prior(f.path(), Some(&g)),
            Err(Error::InvalidSpec(_))
        ));
        let f = write_temp(r#"{"type": "brownian", "N": 3}"#);
        assert!(matches!(
            load_prior(f.path(), Some(&g)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn marginal_sides_map_to_partial_or_full() {
        let f = write_temp(
            r#"{"initial": {"nodes": [1, 2], "values": [0.5, 0.2]},
                "final": {"nodes": [3, 1, 2], "values": [0.2, 0.5, 0.3]}}"#,
        );
        let (rho0, rho_n) = load_marginals(f.path(), 3).unwrap();
        let rho0 = rho0.unwrap();
        let rho_n = rho_n.unwrap();
        assert!(!rho0.is_full());
        assert!((rho0.mass() - 0.7).abs() < 1e-15);
        assert!(rho_n.is_full());
        // Values landed under the right labels despite the shuffled order.
        assert!((rho_n.dense()[0] - 0.5).abs() < 1e-15);
        assert!((rho_n.dense()[2] - 0.2).abs() < 1e-15);

        let f = write_temp(r#"{"final": {"nodes": [2], "values": [0.4]}}"#);
        let (rho0, rho_n) = load_marginals(f.path(), 3).unwrap();
        assert!(rho0.is_none());
        assert!(rho_n.is_some());

        let f = write_temp(r#"{}"#);
        assert!(load_marginals(f.path(), 3).is_err());
        let f = write_temp(r#"{"initial": {"nodes": [1, 1], "values": [0.1, 0.1]}}"#);
        assert!(load_marginals(f.path(), 3).is_err());
    }

    #[test]
    fn moment_files_cover_the_spec_matrix() {
        let f = write_temp(r#"{"order": 1, "initial": {"mean": 1.5}, "final": {"mean": 7.0}}"#);
        let spec = load_moments(f.path()).unwrap();
        assert_eq!(spec.order(), 1);
        assert_eq!(spec.m0_1(), Some(1.5));
        assert_eq!(spec.mn_1(), Some(7.0));

        let f = write_temp(
            r#"{"order": 2,
                "initial": {"mean": 2.0, "second_moment": 4.5}}"#,
        );
        let spec = load_moments(f.path()).unwrap();
        assert_eq!(spec.order(), 2);
        assert_eq!(spec.m0_2(), Some(4.5));
        assert!(!spec.constrains_final());

        // Order/field mismatches fail loudly.
        let f = write_temp(
            r#"{"order": 1, "initial": {"mean": 2.0, "second_moment": 4.5}}"#,
        );
        assert!(load_moments(f.path()).is_err());
        let f = write_temp(r#"{"order": 2, "initial": {"mean": 2.0}}"#);
        assert!(load_moments(f.path()).is_err());
        let f = write_temp(r#"{"order": 1}"#);
        assert!(load_moments(f.path()).is_err());
    }

    #[test]
    fn solution_file_uses_contract_keys() {
        let p0 = ndarray::array![0.5, 0.3, 0.2];
        let step = ndarray::array![[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4]];
        let prior = MarkovPrior::custom(p0, vec![step.clone(), step]).unwrap();
        let rho0 = PartialMarginal::on_subset(3, &[1], &[0.4]).unwrap();
        let sol = solve_bridge(&prior, Some(&rho0), None, 1e-12, 1000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solution.json");
        write_solution(&path, &sol).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in [
            "\"nodes\"",
            "\"phi0\"",
            "\"phiN\"",
            "\"phihat0\"",
            "\"phihatN\"",
            "\"q0N\"",
            "\"q0_star\"",
            "\"qN_star\"",
            "\"iterations\"",
            "\"final_gap\"",
            "\"kl_value\"",
        ] {
            assert!(text.contains(key), "missing {key}");
        }
        let parsed: SolutionFile = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.nodes, vec![1, 2, 3]);
        let mass: f64 = parsed.q0n.iter().flatten().sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
}
