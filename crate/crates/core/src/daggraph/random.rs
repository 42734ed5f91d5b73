//! Random small DAGs for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{CompGraph, Node, NodeOp};
use crate::math::{Matrix, Vector};
use crate::network::Activation;

#[derive(Clone, Copy, Debug)]
pub struct RandomDagConfig {
    /// At least 2.
    pub max_nodes: usize,
    pub max_dim: usize,
    /// Shuffle node ids and storage order so that neither is topological.
    pub shuffle: bool,
}

impl Default for RandomDagConfig {
    fn default() -> Self {
        Self {
            max_nodes: 8,
            max_dim: 4,
            shuffle: true,
        }
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("cols > 0");
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| normal.sample(rng)).collect(),
    )
    .expect("length matches")
}

/// Draws a valid graph with between 2 and `max_nodes` nodes. Node 0 in
/// generation order is an Input, the last one the Output; interior nodes are
/// extra inputs, mapped nodes, ReLUs and multi-parent sums.
pub fn random_dag<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomDagConfig) -> CompGraph {
    let max_nodes = cfg.max_nodes.max(2);
    let max_dim = cfg.max_dim.max(1);
    let n = rng.random_range(2..=max_nodes);
    let mut nodes: Vec<Node> = Vec::with_capacity(n);
    let mut edges = Vec::new();
    let dim = |rng: &mut R| rng.random_range(1..=max_dim);

    nodes.push(Node {
        id: 0,
        dim: dim(rng),
        op: NodeOp::Input,
    });
    for k in 1..n {
        let last = k + 1 == n;
        let choice: f64 = rng.random();
        if !last && choice < 0.1 {
            nodes.push(Node {
                id: k,
                dim: dim(rng),
                op: NodeOp::Input,
            });
            continue;
        }
        let first = rng.random_range(0..k);
        let pdim = nodes[first].dim;
        let (dim_k, op, parents) = if last {
            if rng.random_bool(0.5) {
                let d = dim(rng);
                (
                    d,
                    NodeOp::Output {
                        weight: Some(gaussian_matrix(rng, d, pdim)),
                    },
                    vec![first],
                )
            } else {
                let ps = sum_parents(rng, &nodes, first);
                (pdim, NodeOp::Output { weight: None }, ps)
            }
        } else if choice < 0.5 {
            let d = dim(rng);
            let activation = if rng.random_bool(0.5) {
                Activation::Relu
            } else {
                Activation::Linear
            };
            (
                d,
                NodeOp::LinearMap {
                    weight: gaussian_matrix(rng, d, pdim),
                    activation,
                },
                vec![first],
            )
        } else if choice < 0.7 {
            (pdim, NodeOp::Relu, vec![first])
        } else {
            (pdim, NodeOp::Sum, sum_parents(rng, &nodes, first))
        };
        for p in parents {
            edges.push((p, k));
        }
        nodes.push(Node {
            id: k,
            dim: dim_k,
            op,
        });
    }

    if cfg.shuffle {
        let mut ids: Vec<usize> = (0..n).map(|k| 3 * k + 1).collect();
        ids.shuffle(rng);
        for node in nodes.iter_mut() {
            node.id = ids[node.id];
        }
        for e in edges.iter_mut() {
            *e = (ids[e.0], ids[e.1]);
        }
        nodes.shuffle(rng);
        edges.shuffle(rng);
    }
    CompGraph::new(nodes, edges).expect("generator only builds valid graphs")
}

/// `first` plus each other earlier node of the same dimension with
/// probability one half.
fn sum_parents<R: Rng + ?Sized>(rng: &mut R, nodes: &[Node], first: usize) -> Vec<usize> {
    let d = nodes[first].dim;
    let mut ps = vec![first];
    for (j, node) in nodes.iter().enumerate() {
        if j != first && node.dim == d && rng.random_bool(0.5) {
            ps.push(j);
        }
    }
    ps
}

/// Standard normal vectors for every Input node, in node order.
pub fn random_inputs<R: Rng + ?Sized>(graph: &CompGraph, rng: &mut R) -> Vec<Vector> {
    graph
        .inputs()
        .into_iter()
        .map(|k| random_vector(rng, graph.nodes()[k].dim))
        .collect()
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    Vector::new((0..dim).map(|_| StandardNormal.sample(rng)).collect())
}
