mod common;

use common::*;
use gimc::gat::*;
use gimc::gradcheck::{central_difference, relative_error, REL_FLOOR};
use gimc::tensor::Matrix;
use proptest::prelude::*;
use rand::Rng;

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

fn mv(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows)
        .map(|r| (0..m.cols).map(|c| m.data[r * m.cols + c] * x[c]).sum())
        .collect()
}

/// Straight-line re-implementation of one layer from the written equations.
fn oracle_layer(neighbors: &[Vec<usize>], h: &[Vec<f64>], layer: &GatLayer) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..h.len() {
        let mut cat = Vec::new();
        for head in &layer.heads {
            let e: Vec<f64> = neighbors[i]
                .iter()
                .map(|&j| {
                    let l = mv(&head.w_l, &h[i]);
                    let r = mv(&head.w_r, &h[j]);
                    (0..l.len()).map(|c| head.att.data[c] * leaky(l[c] + r[c])).sum()
                })
                .collect();
            let z: f64 = e.iter().map(|x| x.exp()).sum();
            let mut o = vec![0.0; head.w_r.rows];
            for (m, &j) in neighbors[i].iter().enumerate() {
                let r = mv(&head.w_r, &h[j]);
                for c in 0..o.len() {
                    o[c] += e[m].exp() / z * r[c];
                }
            }
            cat.extend(o);
        }
        out.push(mv(&layer.w_o, &cat));
    }
    out
}

fn close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn attention_rows_are_stochastic(seed in any::<u64>(), n in 1usize..12) {
        let (nb, h) = random_graph(seed, n, 8);
        let stack = random_stack(seed, 3, 4, 8);
        let trace = stack_forward(&nb, &h, &stack);
        for cache in &trace.caches {
            for k in 0..4 {
                for (i, row) in cache.alpha(k).iter().enumerate() {
                    prop_assert_eq!(row.len(), nb[i].len());
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    prop_assert!(row.iter().all(|a| *a >= 0.0));
                }
            }
        }
    }

    #[test]
    fn layer_matches_straight_line_oracle(seed in any::<u64>(), n in 1usize..8) {
        let (nb, h) = random_graph(seed, n, 4);
        let stack = random_stack(seed, 3, 2, 4);
        let mut x = h.clone();
        for layer in &stack.layers {
            let (y, _) = layer_forward(&nb, &x, layer, 0.2);
            let o = oracle_layer(&nb, &x, layer);
            prop_assert!(close(&y, &o, 1e-12));
            x = y;
        }
        prop_assert!(close(&stack_forward(&nb, &h, &stack).output, &x, 0.0));
    }

    #[test]
    fn permutation_equivariance(seed in any::<u64>(), n in 2usize..10) {
        let (nb, h) = random_graph(seed, n, 8);
        let stack = random_stack(seed, 3, 4, 8);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut r = rng(seed ^ 1);
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        // node i becomes perm[i]
        let mut nb2 = vec![Vec::new(); n];
        let mut h2 = vec![Vec::new(); n];
        for i in 0..n {
            let mut row: Vec<usize> = nb[i].iter().map(|&j| perm[j]).collect();
            row.sort_unstable();
            nb2[perm[i]] = row;
            h2[perm[i]] = h[i].clone();
        }
        let a = stack_forward(&nb, &h, &stack).output;
        let b = stack_forward(&nb2, &h2, &stack).output;
        for i in 0..n {
            prop_assert!(close(&[a[i].clone()], &[b[perm[i]].clone()], 1e-10));
        }
    }

    #[test]
    fn edges_do_not_leak_across_components(seed in any::<u64>(), n in 2usize..8) {
        // two disjoint copies; an extra edge inside the second one
        let (nb, h) = random_graph(seed, n, 8);
        let stack = random_stack(seed, 3, 4, 8);
        let mut joint: Vec<Vec<usize>> = nb.clone();
        joint.extend(nb.iter().map(|row| row.iter().map(|j| j + n).collect::<Vec<_>>()));
        let mut feats = h.clone();
        feats.extend(h.iter().cloned());
        let before = stack_forward(&joint, &feats, &stack).output;
        let (x, y) = (n, 2 * n - 1);
        for (a, b) in [(x, y), (y, x)] {
            if !joint[a].contains(&b) {
                joint[a].push(b);
                joint[a].sort_unstable();
            }
        }
        let after = stack_forward(&joint, &feats, &stack).output;
        prop_assert!(close(&before[..n], &after[..n], 0.0));
    }

    #[test]
    fn single_neighbor_and_identical_neighbors(seed in any::<u64>(), k in 2usize..6) {
        let stack = random_stack(seed, 1, 4, 8);
        let head = &stack.layers[0].heads[0];
        let (_, h) = random_graph(seed, 1, 8);
        prop_assert_eq!(attention(0, &[0], &h, head, 0.2), vec![1.0]);
        let mut feats = vec![h[0].clone(); k + 1];
        feats[0][0] += 0.5;
        let nb: Vec<usize> = (1..=k).collect();
        for a in attention(0, &nb, &feats, head, 0.2) {
            prop_assert!((a - 1.0 / k as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn scores_zero_ln2_ln4() {
    let head = GatHead {
        w_l: Matrix::from_vec(1, 1, vec![0.0]),
        w_r: Matrix::from_vec(1, 1, vec![1.0]),
        att: Matrix::from_vec(1, 1, vec![1.0]),
    };
    let f = vec![vec![0.0], vec![0.0], vec![2f64.ln()], vec![4f64.ln()]];
    let a = attention(0, &[1, 2, 3], &f, &head, 0.2);
    for (x, y) in a.iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn zero_stack_gives_zero_features() {
    let (nb, h) = random_graph(4, 5, 8);
    let mut stack = random_stack(4, 3, 4, 8);
    for (_, m) in stack.named_mut() {
        m.fill(0.0);
    }
    let out = stack_forward(&nb, &h, &stack).output;
    assert!(out.iter().flatten().all(|x| *x == 0.0));
}

#[test]
fn single_layer_stack_is_layer_forward() {
    let (nb, h) = random_graph(8, 6, 8);
    let stack = random_stack(8, 1, 4, 8);
    let (y, _) = layer_forward(&nb, &h, &stack.layers[0], stack.leaky_slope);
    assert_eq!(stack_forward(&nb, &h, &stack).output, y);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let (nb, h) = random_graph(2, 6, 8);
    let stack = random_stack(2, 3, 4, 8);
    let trace = stack_forward(&nb, &h, &stack);
    let mut grads = stack.zeros_like();
    let d = stack_backward(&nb, &stack, &trace, &vec![vec![0.0; 8]; 6], &mut grads).unwrap();
    assert!(d.iter().flatten().all(|x| *x == 0.0));
    assert!(grads.named().iter().all(|(_, m)| m.max_abs() == 0.0));
}

fn objective(nb: &[Vec<usize>], h: &[Vec<f64>], stack: &GatStack, w: &[Vec<f64>]) -> f64 {
    stack_forward(nb, h, stack)
        .output
        .iter()
        .flatten()
        .zip(w.iter().flatten())
        .map(|(a, b)| a * b)
        .sum()
}

#[test]
fn scalar_two_node_gradient() {
    let head = |wl, wr, a| GatHead {
        w_l: Matrix::from_vec(1, 1, vec![wl]),
        w_r: Matrix::from_vec(1, 1, vec![wr]),
        att: Matrix::from_vec(1, 1, vec![a]),
    };
    let stack = GatStack {
        layers: vec![GatLayer {
            heads: vec![head(0.7, -1.3, 0.9)],
            w_o: Matrix::from_vec(1, 1, vec![1.1]),
        }],
        leaky_slope: 0.2,
    };
    let nb = vec![vec![0, 1], vec![0, 1]];
    let h = vec![vec![0.4], vec![-0.8]];
    let w = vec![vec![1.0], vec![-0.5]];
    let trace = stack_forward(&nb, &h, &stack);
    let mut grads = stack.zeros_like();
    let d_in = stack_backward(&nb, &stack, &trace, &w, &mut grads).unwrap();
    let names: Vec<String> = stack.named().into_iter().map(|(n, _)| n).collect();
    for (t, name) in names.iter().enumerate() {
        let analytic = grads.named()[t].1.data[0];
        let numeric = central_difference(
            |v| {
                let mut s = stack.clone();
                s.named_mut()[t].1.data[0] = v;
                objective(&nb, &h, &s, &w)
            },
            stack.named()[t].1.data[0],
            1e-4,
        );
        assert!(relative_error(analytic, numeric, REL_FLOOR) < 1e-6, "{name}");
    }
    for i in 0..2 {
        let numeric = central_difference(
            |v| {
                let mut x = h.clone();
                x[i][0] = v;
                objective(&nb, &x, &stack, &w)
            },
            h[i][0],
            1e-4,
        );
        assert!(relative_error(d_in[i][0], numeric, REL_FLOOR) < 1e-6);
    }
}

#[test]
fn random_graph_gradients() {
    for seed in 0..3 {
        let (nb, h) = random_graph(seed, 7, 8);
        let stack = random_stack(seed, 3, 4, 8);
        let mut r = rng(seed + 50);
        let w: Vec<Vec<f64>> = (0..7).map(|_| (0..8).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let trace = stack_forward(&nb, &h, &stack);
        let mut grads = stack.zeros_like();
        stack_backward(&nb, &stack, &trace, &w, &mut grads).unwrap();
        let n = stack.named().len();
        for t in 0..n {
            let len = stack.named()[t].1.data.len();
            for i in 0..len {
                let orig = stack.named()[t].1.data[i];
                let numeric = gimc::gradcheck::central_difference4(
                    |v| {
                        let mut s = stack.clone();
                        s.named_mut()[t].1.data[i] = v;
                        objective(&nb, &h, &s, &w)
                    },
                    orig,
                    1e-4,
                );
                let a = grads.named()[t].1.data[i];
                assert!(relative_error(a, numeric, REL_FLOOR) < 1e-4, "{} [{i}]: {a} vs {numeric}", stack.named()[t].0);
            }
        }
    }
}
