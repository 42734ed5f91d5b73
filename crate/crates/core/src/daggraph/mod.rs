//! Relaxation over explicit computation DAGs.
//!
//! Every node holds a vector. After a forward evaluation the Output node is
//! clamped to `∂L/∂x^out` and every other node relaxes toward the sum of the
//! signals its children send back through their frozen Jacobians:
//!
//! ```text
//! g^i ← g^i + η (−g^i + Σ_{c ∈ Chi(i)} J_{ic}ᵀ g^c),    J_{ic} = ∂x^c/∂x^i
//! ```
//!
//! The fixed point is the multivariate chain rule, so each node ends at the
//! sum over all paths to the output.
//!
//! The energy and Hessian helpers describe the same flow: with children's
//! values held as constants the energy's gradient is minus the relaxation
//! velocity, and differentiating once more through the children yields a
//! Hessian that is upper-triangular with unit diagonal under any topological
//! ordering of the nodes.

mod parse;
pub mod random;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::DMatrix;

use crate::error::{ArError, Result};
use crate::math::{matvec, matvec_transposed, Matrix, Vector};
use crate::network::{Activation, NetworkParams};
use crate::relaxation::leaky_update;

pub use parse::{
    build_graph, parse_graph_file, parse_graph_str, GraphSpec, NodeSpec, OpSpec, WeightSource,
};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub enum NodeOp {
    Input,
    /// `f(W x^parent)` for its single parent.
    LinearMap {
        weight: Matrix,
        activation: Activation,
    },
    /// Elementwise ReLU of its single parent.
    Relu,
    /// Sum of its parents, which all share its dimension.
    Sum,
    /// The clamped sink. With a weight it maps its single parent linearly,
    /// otherwise it sums its parents.
    Output {
        weight: Option<Matrix>,
    },
}

impl NodeOp {
    fn weight(&self) -> Option<&Matrix> {
        match self {
            NodeOp::LinearMap { weight, .. } => Some(weight),
            NodeOp::Output { weight } => weight.as_ref(),
            _ => None,
        }
    }

    fn activation(&self) -> Activation {
        match self {
            NodeOp::LinearMap { activation, .. } => *activation,
            _ => Activation::Linear,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub dim: usize,
    pub op: NodeOp,
}

/// A validated DAG. Nodes keep the order they were given in; everything
/// indexed per node (states, adjacency rows) uses that order.
#[derive(Clone, Debug)]
pub struct CompGraph {
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
    output: usize,
}

impl CompGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (k, n) in nodes.iter().enumerate() {
            if n.dim == 0 {
                return Err(ArError::Graph(format!("node {} has dimension 0", n.id)));
            }
            if index.insert(n.id, k).is_some() {
                return Err(ArError::Graph(format!("duplicate node id {}", n.id)));
            }
        }
        let mut parents = vec![Vec::new(); nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for &(p, c) in &edges {
            let lookup = |id: NodeId| {
                index.get(&id).copied().ok_or_else(|| {
                    ArError::Graph(format!("edge {p} -> {c} names unknown node {id}"))
                })
            };
            let (pi, ci) = (lookup(p)?, lookup(c)?);
            if pi == ci {
                return Err(ArError::Graph(format!("self-loop on node {p}")));
            }
            if children[pi].contains(&ci) {
                return Err(ArError::Graph(format!("duplicate edge {p} -> {c}")));
            }
            parents[ci].push(pi);
            children[pi].push(ci);
        }
        let topo = topological_order(&parents, &children)
            .ok_or_else(|| ArError::Graph("graph contains a cycle".into()))?;

        let outputs: Vec<usize> = (0..nodes.len())
            .filter(|&k| matches!(nodes[k].op, NodeOp::Output { .. }))
            .collect();
        let output = match outputs.as_slice() {
            [o] => *o,
            _ => {
                return Err(ArError::Graph(format!(
                    "graph needs exactly one output node, found {}",
                    outputs.len()
                )))
            }
        };
        if !children[output].is_empty() {
            return Err(ArError::Graph(
                "the output node cannot have children".into(),
            ));
        }

        for (k, node) in nodes.iter().enumerate() {
            let ps = &parents[k];
            let id = node.id;
            let single_parent = || -> Result<usize> {
                match ps.as_slice() {
                    [p] => Ok(*p),
                    _ => Err(ArError::Graph(format!(
                        "node {id} needs exactly one parent, has {}",
                        ps.len()
                    ))),
                }
            };
            match &node.op {
                NodeOp::Input => {
                    if !ps.is_empty() {
                        return Err(ArError::Graph(format!(
                            "input node {id} cannot have parents"
                        )));
                    }
                }
                NodeOp::Relu => {
                    let p = single_parent()?;
                    if nodes[p].dim != node.dim {
                        return Err(dim_error(id, node.dim, nodes[p].id, nodes[p].dim));
                    }
                }
                op => {
                    if let Some(w) = op.weight() {
                        let p = single_parent()?;
                        if w.rows() != node.dim || w.cols() != nodes[p].dim {
                            return Err(ArError::Graph(format!(
                                "node {id}: weight {} does not map dim {} to dim {}",
                                w.shape(),
                                nodes[p].dim,
                                node.dim
                            )));
                        }
                    } else {
                        if ps.is_empty() {
                            return Err(ArError::Graph(format!("node {id} has no parents")));
                        }
                        for &p in ps {
                            if nodes[p].dim != node.dim {
                                return Err(dim_error(id, node.dim, nodes[p].id, nodes[p].dim));
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            nodes,
            edges,
            parents,
            children,
            topo,
            output,
        })
    }

    /// Chain graph of an MLP: one node per activation layer, the last one
    /// being the Output node. The output layer must be linear.
    pub fn from_mlp(params: &NetworkParams) -> Result<Self> {
        let depth = params.depth();
        if params.layers()[depth - 1].activation != Activation::Linear {
            return Err(ArError::Config(
                "chain graphs need a linear output layer".into(),
            ));
        }
        let mut nodes = vec![Node {
            id: 0,
            dim: params.input_dim(),
            op: NodeOp::Input,
        }];
        for (l, (spec, w)) in params.layers().iter().zip(params.weights()).enumerate() {
            let op = if l + 1 == depth {
                NodeOp::Output {
                    weight: Some(w.clone()),
                }
            } else {
                NodeOp::LinearMap {
                    weight: w.clone(),
                    activation: spec.activation,
                }
            };
            nodes.push(Node {
                id: l + 1,
                dim: spec.out_dim,
                op,
            });
        }
        let edges = (0..depth).map(|l| (l, l + 1)).collect();
        CompGraph::new(nodes, edges)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Position of the Output node.
    pub fn output(&self) -> usize {
        self.output
    }

    /// Positions of Input nodes, in node order.
    pub fn inputs(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&k| matches!(self.nodes[k].op, NodeOp::Input))
            .collect()
    }

    pub fn parents(&self, k: usize) -> &[usize] {
        &self.parents[k]
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    /// Node positions with every parent before its children.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// `A[i][j]` is true iff node `j` is a child of node `i`.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.nodes.len();
        let mut a = vec![vec![false; n]; n];
        for (i, cs) in self.children.iter().enumerate() {
            for &c in cs {
                a[i][c] = true;
            }
        }
        a
    }

    /// Dense `J = ∂x^child/∂x^parent` (shape `dim_child × dim_parent`) at the
    /// forward values in `state`.
    pub fn edge_jacobian(&self, state: &NodeState, parent: usize, child: usize) -> Result<Matrix> {
        self.check_edge(parent, child)?;
        let node = &self.nodes[child];
        Ok(match (&node.op, node.op.weight()) {
            (_, Some(w)) => {
                let d = node.op.activation().derivative(&state.pre[child]);
                let mut j = w.clone();
                for r in 0..j.rows() {
                    for c in 0..j.cols() {
                        j.set(r, c, d[r] * w.get(r, c));
                    }
                }
                j
            }
            (NodeOp::Relu, None) => {
                let d = Activation::Relu.derivative(&state.forward[parent]);
                let mut j = Matrix::zeros(node.dim, node.dim);
                for (k, dk) in d.iter().enumerate() {
                    j.set(k, k, *dk);
                }
                j
            }
            _ => Matrix::identity(node.dim),
        })
    }

    /// `J_{parent,child}ᵀ v` without forming `J`.
    pub fn jacobian_transpose_apply(
        &self,
        state: &NodeState,
        parent: usize,
        child: usize,
        v: &Vector,
    ) -> Result<Vector> {
        let node = &self.nodes[child];
        match (&node.op, node.op.weight()) {
            (_, Some(w)) => match node.op.activation() {
                Activation::Linear => matvec_transposed(w, v),
                Activation::Relu => matvec_transposed(w, &v.hadamard(&state.derivs[child])?),
            },
            (NodeOp::Relu, None) => v.hadamard(&crate::math::relu_prime(&state.forward[parent])),
            _ => Ok(v.clone()),
        }
    }

    /// `J_{parent,child} u`.
    fn jacobian_apply(
        &self,
        state: &NodeState,
        parent: usize,
        child: usize,
        u: &Vector,
    ) -> Result<Vector> {
        let node = &self.nodes[child];
        match (&node.op, node.op.weight()) {
            (_, Some(w)) => {
                let wu = matvec(w, u)?;
                match node.op.activation() {
                    Activation::Linear => Ok(wu),
                    Activation::Relu => wu.hadamard(&state.derivs[child]),
                }
            }
            (NodeOp::Relu, None) => u.hadamard(&crate::math::relu_prime(&state.forward[parent])),
            _ => Ok(u.clone()),
        }
    }

    fn check_edge(&self, parent: usize, child: usize) -> Result<()> {
        if parent >= self.len() || !self.children[parent].contains(&child) {
            return Err(ArError::Graph(format!(
                "no edge from position {parent} to {child}"
            )));
        }
        Ok(())
    }

    fn check_state(&self, state: &NodeState) -> Result<()> {
        if state.forward.len() != self.len() || state.relaxed.len() != self.len() {
            return Err(ArError::shape(
                "daggraph",
                format!("{} nodes", self.len()),
                format!("state of {} nodes", state.forward.len()),
            ));
        }
        Ok(())
    }
}

fn dim_error(id: NodeId, dim: usize, pid: NodeId, pdim: usize) -> ArError {
    ArError::Graph(format!(
        "node {id} (dim {dim}) cannot take parent {pid} (dim {pdim})"
    ))
}

/// Kahn's algorithm, lowest position first among ready nodes.
fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Option<Vec<usize>> {
    let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..parents.len())
        .filter(|&k| pending[k] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(parents.len());
    while let Some(Reverse(k)) = ready.pop() {
        order.push(k);
        for &c in &children[k] {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    (order.len() == parents.len()).then_some(order)
}

/// Frozen forward values and evolving relaxed values, one per node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub forward: Vec<Vector>,
    /// Pre-activation `W x^parent` for mapped nodes, the forward value otherwise.
    pub pre: Vec<Vector>,
    pub relaxed: Vec<Vector>,
    /// Activation derivative at `pre`; only read for mapped nodes.
    derivs: Vec<Vector>,
}

/// Evaluates the graph in topological order. `inputs` holds one vector per
/// Input node, in node order. The relaxed values start as copies of the
/// forward values.
pub fn dag_forward(graph: &CompGraph, inputs: &[Vector]) -> Result<NodeState> {
    let input_pos = graph.inputs();
    if inputs.len() != input_pos.len() {
        return Err(ArError::shape(
            "dag_forward",
            format!("{} input nodes", input_pos.len()),
            format!("{} input vectors", inputs.len()),
        ));
    }
    let n = graph.len();
    let mut forward = vec![Vector::default(); n];
    let mut pre = vec![Vector::default(); n];
    for (&k, x) in input_pos.iter().zip(inputs) {
        if x.dim() != graph.nodes[k].dim {
            return Err(ArError::shape(
                "dag_forward",
                format!(
                    "input node {} dim {}",
                    graph.nodes[k].id, graph.nodes[k].dim
                ),
                format!("vector of dim {}", x.dim()),
            ));
        }
        forward[k] = x.clone();
        pre[k] = x.clone();
    }
    for &k in &graph.topo {
        let node = &graph.nodes[k];
        let ps = &graph.parents[k];
        let (p, x) = match (&node.op, node.op.weight()) {
            (NodeOp::Input, _) => continue,
            (_, Some(w)) => {
                let p = matvec(w, &forward[ps[0]])?;
                let x = node.op.activation().apply(&p);
                (p, x)
            }
            (NodeOp::Relu, None) => {
                let x = crate::math::relu(&forward[ps[0]]);
                (x.clone(), x)
            }
            _ => {
                let mut acc = forward[ps[0]].clone();
                for &q in &ps[1..] {
                    acc.add_assign(&forward[q])?;
                }
                (acc.clone(), acc)
            }
        };
        pre[k] = p;
        forward[k] = x;
    }
    let derivs = (0..n)
        .map(|k| {
            let node = &graph.nodes[k];
            match node.op.weight() {
                Some(_) => node.op.activation().derivative(&pre[k]),
                None => Vector::default(),
            }
        })
        .collect();
    Ok(NodeState {
        relaxed: forward.clone(),
        forward,
        pre,
        derivs,
    })
}

/// Clamps the Output node's relaxed value to the loss gradient.
pub fn clamp_output(graph: &CompGraph, state: &mut NodeState, output_grad: &Vector) -> Result<()> {
    let o = graph.output;
    if output_grad.dim() != graph.nodes[o].dim {
        return Err(ArError::shape(
            "clamp_output",
            format!("output dim {}", graph.nodes[o].dim),
            format!("gradient dim {}", output_grad.dim()),
        ));
    }
    state.relaxed[o] = output_grad.clone();
    Ok(())
}

/// `Σ_{c ∈ Chi(k)} J_{kc}ᵀ g^c` at the current relaxed values.
fn top_down_drive(graph: &CompGraph, state: &NodeState, k: usize) -> Result<Vector> {
    let mut drive: Option<Vector> = None;
    for &c in &graph.children[k] {
        let contribution = graph.jacobian_transpose_apply(state, k, c, &state.relaxed[c])?;
        match drive.as_mut() {
            None => drive = Some(contribution),
            Some(d) => d.add_assign(&contribution)?,
        }
    }
    Ok(drive.unwrap_or_else(|| Vector::zeros(graph.nodes[k].dim)))
}

/// `dg/dt` for every node; zero at the clamped output.
pub fn velocity(graph: &CompGraph, state: &NodeState) -> Result<Vec<Vector>> {
    graph.check_state(state)?;
    (0..graph.len())
        .map(|k| {
            if k == graph.output {
                return Ok(Vector::zeros(graph.nodes[k].dim));
            }
            top_down_drive(graph, state, k)?.sub(&state.relaxed[k])
        })
        .collect()
}

/// One simultaneous update of every non-output node.
pub fn dag_relax_step(
    state: &NodeState,
    graph: &CompGraph,
    eta_x: f64,
    iteration: usize,
) -> Result<NodeState> {
    graph.check_state(state)?;
    let mut next = state.clone();
    for k in 0..graph.len() {
        if k == graph.output {
            continue;
        }
        let drive = top_down_drive(graph, state, k)?;
        let updated = leaky_update(&state.relaxed[k], &drive, eta_x);
        if !updated.is_finite() {
            return Err(ArError::Divergence {
                layer: k,
                iteration,
            });
        }
        next.relaxed[k] = updated;
    }
    Ok(next)
}

/// Forward, clamp, and `iters` relaxation steps. Returns the final state;
/// `state.relaxed[k]` approximates `∂L/∂x^k`.
pub fn dag_relax_state(
    graph: &CompGraph,
    inputs: &[Vector],
    output_grad: &Vector,
    iters: usize,
    eta_x: f64,
) -> Result<NodeState> {
    if !(eta_x > 0.0 && eta_x <= 1.0) {
        return Err(ArError::Config(format!(
            "eta_x must lie in (0, 1], got {eta_x}"
        )));
    }
    let mut state = dag_forward(graph, inputs)?;
    clamp_output(graph, &mut state, output_grad)?;
    for it in 1..=iters {
        state = dag_relax_step(&state, graph, eta_x, it)?;
    }
    Ok(state)
}

/// Per-node gradient estimates after relaxation, in node order.
pub fn dag_relax(
    graph: &CompGraph,
    inputs: &[Vector],
    output_grad: &Vector,
    iters: usize,
    eta_x: f64,
) -> Result<Vec<Vector>> {
    Ok(dag_relax_state(graph, inputs, output_grad, iters, eta_x)?.relaxed)
}

/// Exact reverse sweep: `∂L/∂x^k = Σ_{c ∈ Chi(k)} J_{kc}ᵀ ∂L/∂x^c`.
pub fn dag_backprop(
    graph: &CompGraph,
    state: &NodeState,
    output_grad: &Vector,
) -> Result<Vec<Vector>> {
    graph.check_state(state)?;
    let mut grads: Vec<Option<Vector>> = vec![None; graph.len()];
    grads[graph.output] = Some(output_grad.clone());
    for &k in graph.topo.iter().rev() {
        if k == graph.output {
            continue;
        }
        let mut acc = Vector::zeros(graph.nodes[k].dim);
        for &c in &graph.children[k] {
            let gc = grads[c]
                .as_ref()
                .expect("children come later in topological order");
            acc.add_assign(&graph.jacobian_transpose_apply(state, k, c, gc)?)?;
        }
        grads[k] = Some(acc);
    }
    Ok(grads
        .into_iter()
        .map(|g| g.expect("every node visited"))
        .collect())
}

/// Energy with the children's values supplied separately:
///
/// ```text
/// E(g; c) = Σ_i ½‖g^i‖² + Σ_{j non-input} ( ½‖c^j‖² − ⟨c^j, Σ_{p ∈ Par(j)} J_{pj} g^p⟩ )
/// ```
///
/// `∂E/∂g^i` with `c` held fixed is `g^i − Σ_{j ∈ Chi(i)} J_{ij}ᵀ c^j`, minus
/// the relaxation velocity when `c = g`. At the forward values each
/// non-input node's pair of terms cancels.
pub fn energy_with_children(
    graph: &CompGraph,
    state: &NodeState,
    values: &[Vector],
    children: &[Vector],
) -> Result<f64> {
    graph.check_state(state)?;
    if values.len() != graph.len() || children.len() != graph.len() {
        return Err(ArError::shape(
            "energy",
            format!("{} nodes", graph.len()),
            format!("{} / {} values", values.len(), children.len()),
        ));
    }
    let mut e = 0.0;
    for v in values {
        e += 0.5 * v.dot(v)?;
    }
    for (j, cj) in children.iter().enumerate() {
        if matches!(graph.nodes[j].op, NodeOp::Input) {
            continue;
        }
        e += 0.5 * cj.dot(cj)?;
        for &p in &graph.parents[j] {
            e -= cj.dot(&graph.jacobian_apply(state, p, j, &values[p])?)?;
        }
    }
    Ok(e)
}

/// Energy at the current relaxed values.
pub fn energy(state: &NodeState, graph: &CompGraph) -> Result<f64> {
    energy_with_children(graph, state, &state.relaxed, &state.relaxed)
}

/// Assembles the block Hessian: identity diagonal blocks and `−J_{ij}ᵀ` at
/// block `(i, j)` for every edge `i → j`. Coordinates follow node order.
pub fn assemble_hessian(dims: &[usize], blocks: &[(usize, usize, Matrix)]) -> Result<Matrix> {
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let total: usize = dims.iter().sum();
    let mut h = Matrix::identity(total);
    for (i, j, jac) in blocks {
        let (i, j) = (*i, *j);
        if i >= dims.len() || j >= dims.len() || jac.rows() != dims[j] || jac.cols() != dims[i] {
            return Err(ArError::shape(
                "assemble_hessian",
                format!("edge {i}->{j}"),
                jac.shape(),
            ));
        }
        for r in 0..dims[i] {
            for c in 0..dims[j] {
                // block (i, j) holds −Jᵀ
                h.set(offsets[i] + r, offsets[j] + c, -jac.get(c, r));
            }
        }
    }
    Ok(h)
}

/// Hessian of the relaxation energy at frozen Jacobians, in node order.
pub fn hessian(graph: &CompGraph, state: &NodeState) -> Result<Matrix> {
    graph.check_state(state)?;
    let dims: Vec<usize> = graph.nodes.iter().map(|n| n.dim).collect();
    let mut blocks = Vec::with_capacity(graph.edges.len());
    for (i, cs) in graph.children.iter().enumerate() {
        for &c in cs {
            blocks.push((i, c, graph.edge_jacobian(state, i, c)?));
        }
    }
    assemble_hessian(&dims, &blocks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityReport {
    pub is_upper_triangular_under_topo_order: bool,
    pub diagonal_all_ones: bool,
    /// Diagonal of the permuted (triangular) Hessian.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues of `(H + Hᵀ)/2`, ascending; reported, not asserted on.
    pub symmetric_part_eigenvalues: Vec<f64>,
    /// Node positions in the order used for the permutation.
    pub node_order: Vec<usize>,
}

impl ConvexityReport {
    pub fn all_affirmative(&self) -> bool {
        self.is_upper_triangular_under_topo_order
            && self.diagonal_all_ones
            && self.eigenvalues.iter().all(|&e| e == 1.0)
    }
}

/// Reorders the Hessian topologically and checks its triangular structure.
pub fn check_convexity(graph: &CompGraph, state: &NodeState) -> Result<ConvexityReport> {
    let h = hessian(graph, state)?;
    let dims: Vec<usize> = graph.nodes.iter().map(|n| n.dim).collect();
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in &dims {
        offsets.push(acc);
        acc += d;
    }
    let perm: Vec<usize> = graph
        .topo
        .iter()
        .flat_map(|&k| offsets[k]..offsets[k] + dims[k])
        .collect();
    let n = perm.len();
    let permuted = Matrix::from_vec(
        n,
        n,
        perm.iter()
            .flat_map(|&r| perm.iter().map(move |&c| (r, c)))
            .map(|(r, c)| h.get(r, c))
            .collect(),
    )?;
    let is_upper = (0..n).all(|r| (0..r).all(|c| permuted.get(r, c) == 0.0));
    let eigenvalues: Vec<f64> = (0..n).map(|k| permuted.get(k, k)).collect();
    let diagonal_all_ones = eigenvalues.iter().all(|&d| d == 1.0);

    let sym = DMatrix::from_fn(n, n, |r, c| 0.5 * (h.get(r, c) + h.get(c, r)));
    let mut symmetric_part_eigenvalues: Vec<f64> =
        sym.symmetric_eigenvalues().iter().copied().collect();
    symmetric_part_eigenvalues.sort_by(f64::total_cmp);

    Ok(ConvexityReport {
        is_upper_triangular_under_topo_order: is_upper,
        diagonal_all_ones,
        eigenvalues,
        symmetric_part_eigenvalues,
        node_order: graph.topo.clone(),
    })
}

#[cfg(test)]
mod tests;
