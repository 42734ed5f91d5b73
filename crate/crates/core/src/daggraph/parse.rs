//! Line-oriented graph description format.
//!
//! ```text
//! # comment
//! node <id> <dim> input
//! node <id> <dim> linear <rows> <cols> [relu]
//! node <id> <dim> relu
//! node <id> <dim> sum
//! node <id> <dim> output [<rows> <cols>]
//! edge <parent> <child>
//! weight <id> <rows*cols values, row-major>
//! ```
//!
//! Weighted nodes without a `weight` line take their matrix from the
//! [`WeightSource`].

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{CompGraph, Node, NodeId, NodeOp};
use crate::error::{ArError, Result};
use crate::math::Matrix;
use crate::network::Activation;

#[derive(Clone, Debug, PartialEq)]
pub enum OpSpec {
    Input,
    Linear {
        rows: usize,
        cols: usize,
        activation: Activation,
    },
    Relu,
    Sum,
    Output {
        shape: Option<(usize, usize)>,
    },
}

impl OpSpec {
    fn shape(&self) -> Option<(usize, usize)> {
        match self {
            OpSpec::Linear { rows, cols, .. } => Some((*rows, *cols)),
            OpSpec::Output { shape } => *shape,
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub dim: usize,
    pub op: OpSpec,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(NodeId, NodeId)>,
    pub weights: BTreeMap<NodeId, Vec<f64>>,
}

/// Where weighted nodes without inline values get their matrices.
#[derive(Clone, Copy, Debug)]
pub enum WeightSource<'a> {
    /// Gaussian with standard deviation `1/sqrt(cols)`, drawn in ascending id order.
    Seeded(u64),
    /// The k-th weighted node in ascending id order takes the k-th matrix.
    Checkpoint(&'a [Matrix]),
}

pub fn parse_graph_file(path: &Path) -> Result<GraphSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| ArError::io(path, e))?;
    parse_graph_str(&text, &path.display().to_string())
}

/// Parses graph text; `origin` names the source in error messages.
pub fn parse_graph_str(text: &str, origin: &str) -> Result<GraphSpec> {
    let mut spec = GraphSpec::default();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let err = |message: String| ArError::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let int = |i: usize, what: &str| -> Result<usize> {
            let t = tokens
                .get(i)
                .ok_or_else(|| err(format!("missing {what}")))?;
            t.parse()
                .map_err(|_| err(format!("expected {what}, found '{t}'")))
        };
        match tokens[0] {
            "node" => {
                let id = int(1, "node id")?;
                let dim = int(2, "dimension")?;
                let kind = *tokens
                    .get(3)
                    .ok_or_else(|| err("missing node kind".into()))?;
                let (op, used) = match kind {
                    "input" => (OpSpec::Input, 4),
                    "relu" => (OpSpec::Relu, 4),
                    "sum" => (OpSpec::Sum, 4),
                    "linear" => {
                        let rows = int(4, "rows")?;
                        let cols = int(5, "cols")?;
                        let (activation, used) = match tokens.get(6) {
                            Some(&"relu") => (Activation::Relu, 7),
                            Some(&"linear") => (Activation::Linear, 7),
                            _ => (Activation::Linear, 6),
                        };
                        (
                            OpSpec::Linear {
                                rows,
                                cols,
                                activation,
                            },
                            used,
                        )
                    }
                    "output" if tokens.len() > 4 => (
                        OpSpec::Output {
                            shape: Some((int(4, "rows")?, int(5, "cols")?)),
                        },
                        6,
                    ),
                    "output" => (OpSpec::Output { shape: None }, 4),
                    other => return Err(err(format!("unknown node kind '{other}'"))),
                };
                if tokens.len() > used {
                    return Err(err(format!("unexpected token '{}'", tokens[used])));
                }
                if let Some((rows, _)) = op.shape() {
                    if rows != dim {
                        return Err(err(format!(
                            "weight has {rows} rows but node dimension is {dim}"
                        )));
                    }
                }
                if spec.nodes.iter().any(|n| n.id == id) {
                    return Err(err(format!("node {id} declared twice")));
                }
                spec.nodes.push(NodeSpec { id, dim, op });
            }
            "edge" => {
                if tokens.len() != 3 {
                    return Err(err("edge takes exactly two node ids".into()));
                }
                spec.edges.push((int(1, "parent id")?, int(2, "child id")?));
            }
            "weight" => {
                let id = int(1, "node id")?;
                let values = tokens[2..]
                    .iter()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| err(format!("invalid weight value '{t}'")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let node = spec
                    .nodes
                    .iter()
                    .find(|n| n.id == id)
                    .ok_or_else(|| err(format!("weight for undeclared node {id}")))?;
                let (rows, cols) = node
                    .op
                    .shape()
                    .ok_or_else(|| err(format!("node {id} has no weight matrix")))?;
                if values.len() != rows * cols {
                    return Err(err(format!(
                        "node {id} expects {} weights, found {}",
                        rows * cols,
                        values.len()
                    )));
                }
                if spec.weights.insert(id, values).is_some() {
                    return Err(err(format!("weights for node {id} given twice")));
                }
            }
            other => return Err(err(format!("unknown directive '{other}'"))),
        }
    }
    Ok(spec)
}

/// Resolves weights and validates the result as a [`CompGraph`].
pub fn build_graph(spec: &GraphSpec, source: WeightSource<'_>) -> Result<CompGraph> {
    let mut weighted: Vec<&NodeSpec> = spec
        .nodes
        .iter()
        .filter(|n| n.op.shape().is_some())
        .collect();
    weighted.sort_by_key(|n| n.id);

    let mut rng = match source {
        WeightSource::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        WeightSource::Checkpoint(_) => None,
    };
    let mut resolved = BTreeMap::new();
    for (k, n) in weighted.iter().enumerate() {
        let (rows, cols) = n.op.shape().expect("filtered on shape");
        let m = if let Some(values) = spec.weights.get(&n.id) {
            Matrix::from_vec(rows, cols, values.clone())?
        } else {
            match (source, rng.as_mut()) {
                (WeightSource::Checkpoint(ms), _) => {
                    let m = ms.get(k).ok_or_else(|| {
                        ArError::Graph(format!(
                            "checkpoint has {} weight matrices, node {} needs #{}",
                            ms.len(),
                            n.id,
                            k + 1
                        ))
                    })?;
                    if m.shape() != crate::math::Shape(rows, cols) {
                        return Err(ArError::Graph(format!(
                            "checkpoint matrix {} has shape {}, node {} needs {rows}x{cols}",
                            k + 1,
                            m.shape(),
                            n.id
                        )));
                    }
                    m.clone()
                }
                (WeightSource::Seeded(_), Some(rng)) => {
                    let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("cols > 0");
                    Matrix::from_vec(
                        rows,
                        cols,
                        (0..rows * cols).map(|_| normal.sample(rng)).collect(),
                    )?
                }
                (WeightSource::Seeded(_), None) => unreachable!("rng exists for seeded source"),
            }
        };
        resolved.insert(n.id, m);
    }

    let nodes = spec
        .nodes
        .iter()
        .map(|n| {
            let op = match &n.op {
                OpSpec::Input => NodeOp::Input,
                OpSpec::Relu => NodeOp::Relu,
                OpSpec::Sum => NodeOp::Sum,
                OpSpec::Linear { activation, .. } => NodeOp::LinearMap {
                    weight: resolved[&n.id].clone(),
                    activation: *activation,
                },
                OpSpec::Output { .. } => NodeOp::Output {
                    weight: resolved.get(&n.id).cloned(),
                },
            };
            Node {
                id: n.id,
                dim: n.dim,
                op,
            }
        })
        .collect();
    CompGraph::new(nodes, spec.edges.clone())
}
