//! JSON problem files.
//!
//! ```json
//! { "n": 3,
//!   "edges": [[1, 2, 1.0, 1], [1, 3, 1.0, 1], [2, 3, 1.0]],
//!   "agents": [[1, 2, 3]] }
//! ```
//!
//! Indices and agent ids are 1-based in files. An edge is `[j, l, w]` or
//! `[j, l, w, owner]` with `j < l` and `w >= 0`; without an owner the edge
//! goes to the lowest-numbered agent holding both endpoints. Diagonal
//! entries `j == l` are dropped with a warning. When `agents` is absent a
//! single agent holds every index.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::matrix::CoefficientMatrix;
use crate::partition::AgentPartition;

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    n: usize,
    edges: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    agents: Option<Vec<Vec<usize>>>,
}

/// A parsed problem with the warnings raised while reading it.
#[derive(Debug, Clone)]
pub struct Problem {
    pub instance: Instance,
    pub warnings: Vec<String>,
}

fn field_error(context: impl Into<String>, message: impl Into<String>) -> Error {
    Error::ProblemFile {
        context: context.into(),
        message: message.into(),
    }
}

fn index_field(value: f64, context: String, upper: usize, what: &str) -> Result<usize> {
    if value.fract() != 0.0 || value < 1.0 || value > upper as f64 {
        return Err(field_error(
            context,
            format!("{what} {value} is not an integer in 1..={upper}"),
        ));
    }
    Ok(value as usize - 1)
}

/// Parses a problem from JSON text.
pub fn parse_problem(text: &str) -> Result<Problem> {
    let raw: RawProblem = serde_json::from_str(text).map_err(|e| {
        field_error(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let n = raw.n;
    if n == 0 {
        return Err(field_error("n", "dimension must be positive"));
    }

    let sets: Vec<Vec<usize>> = match &raw.agents {
        None => vec![(0..n).collect()],
        Some(agents) => {
            let mut sets = Vec::with_capacity(agents.len());
            for (i, set) in agents.iter().enumerate() {
                let mut out = Vec::with_capacity(set.len());
                for (k, &j) in set.iter().enumerate() {
                    if j == 0 || j > n {
                        return Err(field_error(
                            format!("agents[{i}][{k}]"),
                            format!("index {j} is not in 1..={n}"),
                        ));
                    }
                    out.push(j - 1);
                }
                sets.push(out);
            }
            sets
        }
    };
    let m = sets.len();
    let holds = |agent: usize, j: usize| sets[agent].contains(&j);

    let mut warnings = Vec::new();
    let mut triples = Vec::with_capacity(raw.edges.len());
    let mut owners = Vec::with_capacity(raw.edges.len());
    for (k, edge) in raw.edges.iter().enumerate() {
        if !(3..=4).contains(&edge.len()) {
            return Err(field_error(
                format!("edges[{k}]"),
                format!(
                    "expected [j, l, w] or [j, l, w, owner], got {} values",
                    edge.len()
                ),
            ));
        }
        let j = index_field(edge[0], format!("edges[{k}][0]"), n, "index")?;
        let l = index_field(edge[1], format!("edges[{k}][1]"), n, "index")?;
        let w = edge[2];
        if !w.is_finite() || w < 0.0 {
            return Err(field_error(
                format!("edges[{k}][2]"),
                format!("weight {w} must be finite and >= 0"),
            ));
        }
        if j == l {
            let msg = format!("edges[{k}]: diagonal entry ({}, {}) dropped", j + 1, l + 1);
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        if j > l {
            return Err(field_error(
                format!("edges[{k}]"),
                format!("expected j < l, got ({}, {})", j + 1, l + 1),
            ));
        }
        let owner = match edge.get(3) {
            Some(&o) => {
                let o = index_field(o, format!("edges[{k}][3]"), m, "owner")?;
                if !holds(o, j) || !holds(o, l) {
                    return Err(field_error(
                        format!("edges[{k}][3]"),
                        format!("agent {} does not hold both {} and {}", o + 1, j + 1, l + 1),
                    ));
                }
                o
            }
            None => (0..m)
                .find(|&a| holds(a, j) && holds(a, l))
                .ok_or_else(|| {
                    field_error(
                        format!("edges[{k}]"),
                        format!("no agent holds both {} and {}", j + 1, l + 1),
                    )
                })?,
        };
        triples.push((j, l, w));
        owners.push(owner);
    }

    let matrix =
        CoefficientMatrix::new(n, triples).map_err(|e| field_error("edges", e.to_string()))?;
    let partition = AgentPartition::build(&matrix, sets, owners)?;
    Ok(Problem {
        instance: Instance { matrix, partition },
        warnings,
    })
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    parse_problem(&std::fs::read_to_string(path)?)
}

/// Serializes an instance in the file format (1-based, owners explicit).
pub fn problem_to_json(matrix: &CoefficientMatrix, partition: &AgentPartition) -> String {
    let raw = RawProblem {
        n: matrix.n(),
        edges: matrix
            .entries()
            .iter()
            .zip(partition.owners())
            .map(|(e, &o)| {
                vec![
                    (e.row + 1) as f64,
                    (e.col + 1) as f64,
                    e.weight,
                    (o + 1) as f64,
                ]
            })
            .collect(),
        agents: Some(
            partition
                .sets()
                .iter()
                .map(|s| s.iter().map(|j| j + 1).collect())
                .collect(),
        ),
    };
    serde_json::to_string_pretty(&raw).expect("problem serializes")
}
