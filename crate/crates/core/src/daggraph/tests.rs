use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::random::{random_dag, random_inputs, random_vector, RandomDagConfig};
use super::*;
use crate::math::mse_grad;
use crate::network::{forward, init_params, mlp_specs, FeedbackInit};
use crate::relaxation::{relax, VariantConfig};

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            out.set(i, j, (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum());
        }
    }
    out
}

/// Gradient at every node as a sum over explicit paths to the output, each
/// path contributing the product of its dense edge Jacobians.
fn path_sum_oracle(graph: &CompGraph, state: &NodeState, output_grad: &Vector) -> Vec<Vector> {
    fn walk(graph: &CompGraph, state: &NodeState, node: usize, acc: Matrix, out: &mut Vec<Matrix>) {
        if node == graph.output() {
            out.push(acc);
            return;
        }
        for &c in graph.children(node) {
            let j = graph.edge_jacobian(state, node, c).unwrap();
            walk(graph, state, c, matmul(&j, &acc), out);
        }
    }
    (0..graph.len())
        .map(|k| {
            let mut paths = Vec::new();
            walk(
                graph,
                state,
                k,
                Matrix::identity(graph.nodes()[k].dim),
                &mut paths,
            );
            let mut g = Vector::zeros(graph.nodes()[k].dim);
            for p in paths {
                // p maps node k to the output; its transpose carries the gradient back
                g.add_assign(&matvec(&p.transpose(), output_grad).unwrap())
                    .unwrap();
            }
            g
        })
        .collect()
}

fn scalar_chain(w1: f64, w2: f64) -> CompGraph {
    CompGraph::new(
        vec![
            Node {
                id: 0,
                dim: 1,
                op: NodeOp::Input,
            },
            Node {
                id: 1,
                dim: 1,
                op: NodeOp::LinearMap {
                    weight: Matrix::from_vec(1, 1, vec![w1]).unwrap(),
                    activation: Activation::Linear,
                },
            },
            Node {
                id: 2,
                dim: 1,
                op: NodeOp::Output {
                    weight: Some(Matrix::from_vec(1, 1, vec![w2]).unwrap()),
                },
            },
        ],
        vec![(0, 1), (1, 2)],
    )
    .unwrap()
}

fn diamond() -> CompGraph {
    let spec = parse_graph_str(
        "node 0 2 input\n\
         node 1 3 linear 3 2 relu\n\
         node 2 3 linear 3 2\n\
         node 3 3 sum\n\
         node 4 1 output 1 3\n\
         edge 0 1\nedge 0 2\nedge 1 3\nedge 2 3\nedge 3 4\n",
        "diamond",
    )
    .unwrap();
    build_graph(&spec, WeightSource::Seeded(7)).unwrap()
}

#[test]
fn chain_graph_matches_mlp_relaxation_bitwise() {
    let params = init_params(&mlp_specs(&[5, 4, 4, 3]).unwrap(), 11, FeedbackInit::None).unwrap();
    let x = Vector::new(vec![0.3, -0.2, 0.9, 0.1, -0.7]);
    let t = Vector::new(vec![1.0, 0.0, 0.0]);
    let trace = forward(&params, &x).unwrap();
    let cfg = VariantConfig {
        iters: 37,
        ..VariantConfig::default()
    };
    let est = relax(&trace, &params, &t, &cfg).unwrap();

    let graph = CompGraph::from_mlp(&params).unwrap();
    let grad = mse_grad(trace.output(), &t).unwrap();
    let dag = dag_relax(&graph, std::slice::from_ref(&x), &grad, 37, 0.1).unwrap();
    for (l, g) in dag.iter().enumerate().skip(1) {
        assert_eq!(*g, *est.layer(l), "layer {l}");
    }
}

#[test]
fn chain_forward_matches_mlp() {
    let params = init_params(&mlp_specs(&[3, 6, 2]).unwrap(), 2, FeedbackInit::None).unwrap();
    let x = Vector::new(vec![1.0, -1.0, 0.5]);
    let graph = CompGraph::from_mlp(&params).unwrap();
    let state = dag_forward(&graph, std::slice::from_ref(&x)).unwrap();
    let trace = forward(&params, &x).unwrap();
    assert_eq!(state.forward, trace.activations);
}

#[test]
fn chain_adjacency_is_superdiagonal() {
    let params = init_params(&mlp_specs(&[3, 4, 4, 2]).unwrap(), 0, FeedbackInit::None).unwrap();
    let a = CompGraph::from_mlp(&params).unwrap().adjacency();
    for (i, row) in a.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            assert_eq!(e, j == i + 1, "A[{i}][{j}]");
        }
    }
}

#[test]
fn diamond_sums_both_paths() {
    let g = diamond();
    let x = vec![Vector::new(vec![0.4, -1.2])];
    let state = dag_forward(&g, &x).unwrap();
    let out_grad = Vector::new(vec![1.5]);
    let oracle = path_sum_oracle(&g, &state, &out_grad);
    let bp = dag_backprop(&g, &state, &out_grad).unwrap();
    let relaxed = dag_relax(&g, &x, &out_grad, 400, 0.1).unwrap();
    for k in 0..g.len() {
        assert!(oracle[k].sub(&bp[k]).unwrap().max_abs() < 1e-12);
        assert!(oracle[k].sub(&relaxed[k]).unwrap().max_abs() < 1e-10);
    }
}

#[test]
fn scalar_chain_hessian() {
    let g = scalar_chain(2.0, -3.0);
    let state = dag_forward(&g, &[Vector::new(vec![1.0])]).unwrap();
    let h = hessian(&g, &state).unwrap();
    let expected = Matrix::from_rows(&[
        vec![1.0, -2.0, 0.0],
        vec![0.0, 1.0, 3.0],
        vec![0.0, 0.0, 1.0],
    ])
    .unwrap();
    assert_eq!(h, expected);
    let report = check_convexity(&g, &state).unwrap();
    assert!(report.all_affirmative());
    assert_eq!(report.eigenvalues, vec![1.0; 3]);
}

#[test]
fn hessian_without_edges_is_identity() {
    let h = assemble_hessian(&[2, 1, 3], &[]).unwrap();
    assert_eq!(h, Matrix::identity(6));
}

#[test]
fn input_to_output_energy_is_quadratic() {
    // E(g) = ½g² + ½c² − c·g, so dE/dg = g − c and the flow is −g + c
    let g = CompGraph::new(
        vec![
            Node {
                id: 0,
                dim: 1,
                op: NodeOp::Input,
            },
            Node {
                id: 1,
                dim: 1,
                op: NodeOp::Output { weight: None },
            },
        ],
        vec![(0, 1)],
    )
    .unwrap();
    let mut state = dag_forward(&g, &[Vector::new(vec![0.25])]).unwrap();
    clamp_output(&g, &mut state, &Vector::new(vec![2.0])).unwrap();
    let v = velocity(&g, &state).unwrap();
    assert_eq!(v[0][0], -0.25 + 2.0);
    let e = energy(&state, &g).unwrap();
    let (gv, c) = (0.25, 2.0);
    assert!((e - (0.5 * gv * gv + 0.5 * c * c + 0.5 * c * c - c * gv)).abs() < 1e-15);
}

#[test]
fn energy_at_forward_values_counts_inputs_only() {
    let g = diamond();
    let x = vec![Vector::new(vec![0.4, -1.2])];
    let expected = 0.5 * x[0].dot(&x[0]).unwrap();
    let mut state = dag_forward(&g, &x).unwrap();
    assert!((energy(&state, &g).unwrap() - expected).abs() < 1e-12);
    clamp_output(&g, &mut state, &Vector::zeros(1)).unwrap();
    assert!((energy(&state, &g).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn rejects_invalid_graphs() {
    let input = |id| Node {
        id,
        dim: 2,
        op: NodeOp::Input,
    };
    let sum = |id| Node {
        id,
        dim: 2,
        op: NodeOp::Sum,
    };
    let out = |id| Node {
        id,
        dim: 2,
        op: NodeOp::Output { weight: None },
    };
    let cycle = CompGraph::new(
        vec![input(0), sum(1), sum(2), out(3)],
        vec![(0, 1), (1, 2), (2, 1), (2, 3)],
    );
    assert!(matches!(cycle, Err(ArError::Graph(m)) if m.contains("cycle")));
    let two_outputs = CompGraph::new(vec![input(0), out(1), out(2)], vec![(0, 1), (0, 2)]);
    assert!(matches!(two_outputs, Err(ArError::Graph(_))));
    let orphan = CompGraph::new(vec![input(0), sum(1), out(2)], vec![(0, 2)]);
    assert!(matches!(orphan, Err(ArError::Graph(_))));
    let bad_dim = CompGraph::new(
        vec![
            input(0),
            Node {
                id: 1,
                dim: 3,
                op: NodeOp::Output { weight: None },
            },
        ],
        vec![(0, 1)],
    );
    assert!(matches!(bad_dim, Err(ArError::Graph(_))));
    let dup = CompGraph::new(vec![input(0), out(1)], vec![(0, 1), (0, 1)]);
    assert!(matches!(dup, Err(ArError::Graph(_))));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let cases = [
        ("node 0 2 input\nnode 1 x sum\n", 2),
        ("node 0 2 input\n\n# fine\nnode 1 2 blob\n", 4),
        ("node 0 2 input\nedge 0\n", 2),
        ("node 0 2 linear 3 2\n", 1),
        ("node 0 2 input\nnode 1 1 output 1 2\nweight 1 0.5\n", 3),
        ("frobnicate\n", 1),
    ];
    for (text, line) in cases {
        match parse_graph_str(text, "g") {
            Err(ArError::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn inline_weights_override_source() {
    let spec = parse_graph_str(
        "node 0 2 input\nnode 1 1 output 1 2\nedge 0 1\nweight 1 0.5 -2\n",
        "g",
    )
    .unwrap();
    let g = build_graph(&spec, WeightSource::Seeded(1)).unwrap();
    let state = dag_forward(&g, &[Vector::new(vec![2.0, 1.0])]).unwrap();
    assert_eq!(state.forward[1][0], -1.0);
}

#[test]
fn checkpoint_weights_fill_in_id_order() {
    let spec = parse_graph_str(
        "node 5 1 output 1 3\nnode 0 2 input\nnode 2 3 linear 3 2 relu\nedge 0 2\nedge 2 5\n",
        "g",
    )
    .unwrap();
    let w0 = Matrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
    let w1 = Matrix::from_vec(1, 3, vec![2.0; 3]).unwrap();
    let g = build_graph(&spec, WeightSource::Checkpoint(&[w0.clone(), w1.clone()])).unwrap();
    let k = g.position(2).unwrap();
    assert!(matches!(&g.nodes()[k].op, NodeOp::LinearMap { weight, .. } if *weight == w0));
    assert!(build_graph(&spec, WeightSource::Checkpoint(&[w0])).is_err());
    assert!(build_graph(&spec, WeightSource::Checkpoint(&[w1.clone(), w1])).is_err());
}

#[test]
fn divergence_is_reported() {
    let g = scalar_chain(1e200, 1e200);
    let err = dag_relax(
        &g,
        &[Vector::new(vec![1.0])],
        &Vector::new(vec![1e200]),
        10,
        1.0,
    )
    .unwrap_err();
    assert!(matches!(err, ArError::Divergence { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relaxation_converges_to_path_sum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(&mut rng, &RandomDagConfig::default());
        let x = random_inputs(&g, &mut rng);
        let out_grad = random_vector(&mut rng, g.nodes()[g.output()].dim);
        let state = dag_forward(&g, &x).unwrap();
        let oracle = path_sum_oracle(&g, &state, &out_grad);
        let bp = dag_backprop(&g, &state, &out_grad).unwrap();
        let relaxed = dag_relax(&g, &x, &out_grad, 600, 0.1).unwrap();
        for k in 0..g.len() {
            let scale = oracle[k].max_abs().max(1.0);
            prop_assert!(oracle[k].sub(&bp[k]).unwrap().max_abs() < 1e-12 * scale);
            prop_assert!(oracle[k].sub(&relaxed[k]).unwrap().max_abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn energy_gradient_is_minus_velocity(seed in any::<u64>(), iters in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(&mut rng, &RandomDagConfig::default());
        let x = random_inputs(&g, &mut rng);
        let out_grad = random_vector(&mut rng, g.nodes()[g.output()].dim);
        let state = dag_relax_state(&g, &x, &out_grad, iters, 0.1).unwrap();
        let v = velocity(&g, &state).unwrap();
        let h = 1e-6;
        for k in 0..g.len() {
            if k == g.output() {
                continue;
            }
            for d in 0..g.nodes()[k].dim {
                let mut plus = state.relaxed.clone();
                let mut minus = state.relaxed.clone();
                plus[k][d] += h;
                minus[k][d] -= h;
                let fd = (energy_with_children(&g, &state, &plus, &state.relaxed).unwrap()
                    - energy_with_children(&g, &state, &minus, &state.relaxed).unwrap())
                    / (2.0 * h);
                prop_assert!((fd + v[k][d]).abs() < 1e-6 * v[k][d].abs().max(1.0), "node {} dim {}: {} vs {}", k, d, fd, -v[k][d]);
            }
        }
    }

    #[test]
    fn hessian_is_jacobian_of_minus_velocity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(&mut rng, &RandomDagConfig::default());
        let x = random_inputs(&g, &mut rng);
        let out_grad = random_vector(&mut rng, g.nodes()[g.output()].dim);
        let state = dag_relax_state(&g, &x, &out_grad, 3, 0.1).unwrap();
        let hm = hessian(&g, &state).unwrap();
        let base = velocity(&g, &state).unwrap();
        let mut col = 0;
        for k in 0..g.len() {
            for d in 0..g.nodes()[k].dim {
                let mut bumped = state.clone();
                bumped.relaxed[k][d] += 1.0;
                let v = velocity(&g, &bumped).unwrap();
                let mut row = 0;
                for i in 0..g.len() {
                    for e in 0..g.nodes()[i].dim {
                        // clamped output rows are identity by construction
                        let expected = if i == g.output() {
                            if row == col { 1.0 } else { 0.0 }
                        } else {
                            -(v[i][e] - base[i][e])
                        };
                        prop_assert!((hm.get(row, col) - expected).abs() < 1e-9, "H[{},{}]", row, col);
                        row += 1;
                    }
                }
                col += 1;
            }
        }
    }

    #[test]
    fn convexity_holds_on_random_graphs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(&mut rng, &RandomDagConfig::default());
        let x = random_inputs(&g, &mut rng);
        let state = dag_forward(&g, &x).unwrap();
        let report = check_convexity(&g, &state).unwrap();
        prop_assert!(report.all_affirmative());
        prop_assert_eq!(report.symmetric_part_eigenvalues.len(), report.eigenvalues.len());
    }
}
