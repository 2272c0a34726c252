//! Helpers shared by the integration test targets.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng as _;

use graph2d::cnn::{
    relu_backward, relu_inplace, softmax_cross_entropy, ArchConfig, CnnModel, Conv2d, Dense, Dropout, MaxPool2,
    Padding, Tensor,
};
use graph2d::graph::Graph;
use graph2d::linalg::Matrix;
use graph2d::rng;

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|)`, with a floor on the denominator so that two
/// near-zero values do not count as a large relative error.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut r = rng::seeded(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
}

fn weighted_sum(y: &Tensor<f64>, weights: &Tensor<f64>) -> f64 {
    y.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum()
}

/// Central difference of `f` with respect to `values[i]`.
fn central<F: FnMut(&[f64]) -> f64>(values: &mut [f64], i: usize, mut f: F) -> f64 {
    let orig = values[i];
    values[i] = orig + FD_STEP;
    let plus = f(values);
    values[i] = orig - FD_STEP;
    let minus = f(values);
    values[i] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

/// Max relative error of a convolution's input, weight and bias gradients
/// for the scalar loss `sum(w * conv(x))`.
pub fn conv_gradient_error(kernel: usize, padding: Padding) -> f64 {
    let mut conv = Conv2d::<f64>::new("c", 2, 3, kernel, padding);
    conv.weight.value = random_tensor(conv.weight.shape.clone(), 11).data;
    conv.bias.value = random_tensor(vec![3], 12).data;
    let x = random_tensor(vec![2, 2, 6, 6], 13);
    let y = conv.forward(&x);
    let w = random_tensor(y.shape.clone(), 14);
    let dx = conv.backward(&x, &w, true).expect("input gradient requested");

    let mut worst = 0.0f64;
    let mut xs = x.data.clone();
    for i in 0..xs.len() {
        let n =
            central(&mut xs, i, |v| weighted_sum(&conv.forward(&Tensor::from_vec(x.shape.clone(), v.to_vec())), &w));
        worst = worst.max(rel_err(dx.data[i], n));
    }
    let analytic_w = conv.weight.grad.clone();
    let mut ws = conv.weight.value.clone();
    for i in 0..ws.len() {
        let n = central(&mut ws, i, |v| {
            let mut c = conv.clone();
            c.weight.value = v.to_vec();
            weighted_sum(&c.forward(&x), &w)
        });
        worst = worst.max(rel_err(analytic_w[i], n));
    }
    let analytic_b = conv.bias.grad.clone();
    let mut bs = conv.bias.value.clone();
    for i in 0..bs.len() {
        let n = central(&mut bs, i, |v| {
            let mut c = conv.clone();
            c.bias.value = v.to_vec();
            weighted_sum(&c.forward(&x), &w)
        });
        worst = worst.max(rel_err(analytic_b[i], n));
    }
    worst
}

pub fn pool_gradient_error() -> f64 {
    let x = random_tensor(vec![1, 2, 8, 8], 21);
    let mut pool = MaxPool2::default();
    let y = pool.forward(&x);
    let w = random_tensor(y.shape.clone(), 22);
    let dx = pool.backward(&w);
    let mut xs = x.data.clone();
    let mut worst = 0.0f64;
    for i in 0..xs.len() {
        let n = central(&mut xs, i, |v| {
            weighted_sum(&MaxPool2::default().forward(&Tensor::from_vec(x.shape.clone(), v.to_vec())), &w)
        });
        worst = worst.max(rel_err(dx.data[i], n));
    }
    worst
}

pub fn dense_gradient_error() -> f64 {
    let mut dense = Dense::<f64>::new("d", 7, 4);
    dense.weight.value = random_tensor(vec![4, 7], 31).data;
    dense.bias.value = random_tensor(vec![4], 32).data;
    let x = random_tensor(vec![3, 7], 33);
    let w = random_tensor(vec![3, 4], 34);
    let dx = dense.backward(&x, &w);
    let mut worst = 0.0f64;
    let mut xs = x.data.clone();
    for i in 0..xs.len() {
        let n =
            central(&mut xs, i, |v| weighted_sum(&dense.forward(&Tensor::from_vec(x.shape.clone(), v.to_vec())), &w));
        worst = worst.max(rel_err(dx.data[i], n));
    }
    let analytic_w = dense.weight.grad.clone();
    let mut ws = dense.weight.value.clone();
    for i in 0..ws.len() {
        let n = central(&mut ws, i, |v| {
            let mut d = dense.clone();
            d.weight.value = v.to_vec();
            weighted_sum(&d.forward(&x), &w)
        });
        worst = worst.max(rel_err(analytic_w[i], n));
    }
    let analytic_b = dense.bias.grad.clone();
    let mut bs = dense.bias.value.clone();
    for i in 0..bs.len() {
        let n = central(&mut bs, i, |v| {
            let mut d = dense.clone();
            d.bias.value = v.to_vec();
            weighted_sum(&d.forward(&x), &w)
        });
        worst = worst.max(rel_err(analytic_b[i], n));
    }
    worst
}

/// ReLU on inputs kept away from the kink.
pub fn relu_gradient_error() -> f64 {
    let mut x = random_tensor(vec![2, 10], 41);
    x.data.iter_mut().for_each(|v| *v += v.signum() * 0.1);
    let w = random_tensor(vec![2, 10], 42);
    let f = |v: &[f64]| {
        let mut t = Tensor::from_vec(vec![2, 10], v.to_vec());
        relu_inplace(&mut t);
        weighted_sum(&t, &w)
    };
    let mut y = x.clone();
    relu_inplace(&mut y);
    let mut g = w.clone();
    relu_backward(&y, &mut g);
    let mut xs = x.data.clone();
    (0..xs.len()).map(|i| rel_err(g.data[i], central(&mut xs, i, f))).fold(0.0, f64::max)
}

/// Dropout with a fixed mask is linear, so its backward pass must match
/// finite differences exactly; rate 0 is checked as the identity.
pub fn dropout_gradient_error(rate: f64) -> f64 {
    let x = random_tensor(vec![2, 12], 51);
    let w = random_tensor(vec![2, 12], 52);
    let f = |v: &[f64]| {
        let mut t = Tensor::from_vec(vec![2, 12], v.to_vec());
        Dropout::<f64>::new(rate).forward(&mut t, true, &mut rng::seeded(53));
        weighted_sum(&t, &w)
    };
    let mut d = Dropout::<f64>::new(rate);
    let mut y = x.clone();
    d.forward(&mut y, true, &mut rng::seeded(53));
    let mut g = w.clone();
    d.backward(&mut g);
    let mut xs = x.data.clone();
    (0..xs.len()).map(|i| rel_err(g.data[i], central(&mut xs, i, f))).fold(0.0, f64::max)
}

pub fn softmax_ce_gradient_error() -> f64 {
    let logits = random_tensor(vec![4, 5], 61);
    let labels = [0, 3, 4, 1];
    let (_, _, g) = softmax_cross_entropy(&logits, &labels);
    let mut xs = logits.data.clone();
    (0..xs.len())
        .map(|i| {
            let n =
                central(&mut xs, i, |v| softmax_cross_entropy(&Tensor::from_vec(vec![4, 5], v.to_vec()), &labels).0);
            rel_err(g.data[i], n)
        })
        .fold(0.0, f64::max)
}

/// Full network, 3 classes, dropout 0. Checks `per_param` seeded
/// coordinates of every parameter tensor.
pub fn composed_gradient_error(per_param: usize) -> f64 {
    let arch = ArchConfig { hidden: 12, dropout: 0.0, ..ArchConfig::new(2, 8, 8, 3) };
    let mut model = CnnModel::<f64>::new(arch, 71).expect("valid micro architecture");
    // nonzero biases so every bias gradient is exercised
    for (i, p) in model.params_mut().into_iter().enumerate() {
        if p.shape.len() == 1 {
            p.value = random_tensor(p.shape.clone(), 100 + i as u64).data.iter().map(|v| 0.1 * v).collect();
        }
    }
    let x = random_tensor(vec![3, 2, 8, 8], 72);
    let labels = [0, 2, 1];
    let mut r = rng::seeded(0);
    let loss = |m: &mut CnnModel<f64>| {
        let logits = m.forward(&x, false, &mut rng::seeded(0)).expect("shape");
        softmax_cross_entropy(&logits, &labels).0
    };
    model.zero_grad();
    let logits = model.forward(&x, true, &mut r).expect("shape");
    let (_, _, g) = softmax_cross_entropy(&logits, &labels);
    model.backward(&g);
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();

    let mut pick = rng::seeded(73);
    let mut worst = 0.0f64;
    for (pi, grads) in analytic.iter().enumerate() {
        for _ in 0..per_param.min(grads.len()) {
            let i = pick.random_range(0..grads.len());
            let orig = model.params()[pi].value[i];
            model.params_mut()[pi].value[i] = orig + FD_STEP;
            let plus = loss(&mut model);
            model.params_mut()[pi].value[i] = orig - FD_STEP;
            let minus = loss(&mut model);
            model.params_mut()[pi].value[i] = orig;
            worst = worst.max(rel_err(grads[i], (plus - minus) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Uniform random graph, the same construction used throughout the tests.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut r = rng::seeded(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges, 0).expect("in range")
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::seeded(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, r.random_range(0..=i));
    }
    p
}

/// Brute-force isomorphism test by trying every bijection.
pub fn isomorphic(a: &Graph, b: &Graph) -> bool {
    let n = a.node_count();
    if n != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    let mut da = a.degrees();
    let mut db = b.degrees();
    da.sort_unstable();
    db.sort_unstable();
    if da != db {
        return false;
    }
    fn extend(a: &Graph, b: &Graph, map: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
        let k = map.len();
        if k == a.node_count() {
            return true;
        }
        for t in 0..b.node_count() {
            if used[t] {
                continue;
            }
            if (0..k).all(|j| a.has_edge(k, j) == b.has_edge(t, map[j])) {
                map.push(t);
                used[t] = true;
                if extend(a, b, map, used) {
                    return true;
                }
                map.pop();
                used[t] = false;
            }
        }
        false
    }
    extend(a, b, &mut Vec::new(), &mut vec![false; n])
}

/// Every labelled simple graph on `n` nodes, one per edge subset.
pub fn all_graphs(n: usize) -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    (0..1u32 << pairs.len())
        .map(|mask| {
            let edges: Vec<(usize, usize)> =
                pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect();
            Graph::new(n, edges, 0).expect("in range")
        })
        .collect()
}

/// Induced subgraph on `nodes`, relabelled `0..nodes.len()`.
pub fn induced(graph: &Graph, nodes: &[usize]) -> Graph {
    let mut edges = Vec::new();
    for (i, &u) in nodes.iter().enumerate() {
        for (j, &v) in nodes.iter().enumerate().skip(i + 1) {
            if graph.has_edge(u, v) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(nodes.len(), edges, 0).expect("in range")
}

/// Smallest eigenvalue of a kernel matrix, computed by nalgebra.
pub fn min_eigenvalue(k: &Matrix<f64>) -> f64 {
    let n = k.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| k[(i, j)]);
    m.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Isomorphism classes of all labelled graphs on `n` nodes, found by
/// pairwise brute-force isomorphism tests. Entry `mask` is the class of
/// the graph whose edges are the set bits of `mask` over the pairs
/// `(u, v), u < v` in lexicographic order.
pub fn brute_force_classes(n: usize) -> (Vec<usize>, usize) {
    let graphs = all_graphs(n);
    let mut reps: Vec<usize> = Vec::new();
    let mut class = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        match reps.iter().position(|&r| isomorphic(&graphs[r], g)) {
            Some(c) => class.push(c),
            None => {
                class.push(reps.len());
                reps.push(i);
            }
        }
    }
    (class, reps.len())
}

/// Bit index of each node pair in the `all_graphs` edge-mask layout.
pub fn edge_mask(graph: &Graph) -> usize {
    let n = graph.node_count();
    let mut mask = 0;
    let mut bit = 0;
    for u in 0..n {
        for v in u + 1..n {
            if graph.has_edge(u, v) {
                mask |= 1 << bit;
            }
            bit += 1;
        }
    }
    mask
}

/// Compares exhaustive graphlet counts (sizes 3..=6) with an all-subsets
/// oracle that buckets induced subgraphs by brute-force isomorphism, on
/// every graph with 3 to `max_nodes` nodes. Returns
/// `(graphs checked, mismatching graphs)`.
pub fn graphlet_oracle_check(max_nodes: usize) -> (usize, usize) {
    use graph2d::kernels::{canonical_form, graphlet_counts_exhaustive};
    use std::collections::BTreeMap;

    // indexed by graphlet size; sizes below 3 are never looked up
    let tables: Vec<(Vec<usize>, usize)> =
        (0..=6).map(|k| if k < 3 { (Vec::new(), 0) } else { brute_force_classes(k) }).collect();
    // class -> canonical code, checked to be a bijection per size
    let mut code_of: Vec<Vec<u32>> = Vec::new();
    let mut bijective = true;
    for (k, (class, count)) in tables.iter().enumerate() {
        if k < 3 {
            code_of.push(Vec::new());
            continue;
        }
        let mut codes = vec![None; *count];
        for (mask, g) in all_graphs(k).iter().enumerate() {
            let code = canonical_form(g).expect("size <= 6");
            match codes[class[mask]] {
                None => codes[class[mask]] = Some(code),
                Some(c) if c != code => bijective = false,
                _ => {}
            }
        }
        let codes: Vec<u32> = codes.into_iter().map(|c| c.expect("every class has members")).collect();
        let mut distinct = codes.clone();
        distinct.sort_unstable();
        distinct.dedup();
        bijective &= distinct.len() == codes.len();
        code_of.push(codes);
    }
    let mut checked = 0;
    let mut bad = usize::from(!bijective);
    for n in 3..=max_nodes {
        for g in all_graphs(n) {
            let mut oracle: BTreeMap<u32, u64> = BTreeMap::new();
            for subset in 1u32..1 << n {
                let nodes: Vec<usize> = (0..n).filter(|i| subset >> i & 1 == 1).collect();
                if nodes.len() < 3 {
                    continue;
                }
                let sub = induced(&g, &nodes);
                let class = tables[nodes.len()].0[edge_mask(&sub)];
                *oracle.entry(code_of[nodes.len()][class]).or_insert(0) += 1;
            }
            checked += 1;
            if graphlet_counts_exhaustive(&g, 3, 6).expect("valid sizes") != oracle {
                bad += 1;
            }
        }
    }
    (checked, bad)
}

/// Relabels random graphs 100 times and counts kernel values that change:
/// WL matrices must be bit-identical, exhaustive graphlet counts identical,
/// and sampled graphlet vectors identical when the permuted graph is
/// sampled on the image of the original's node subsets.
pub fn isomorphism_invariance_failures() -> usize {
    use graph2d::kernels::{canonical_form, graphlet_counts_exhaustive, wl_kernel_matrix, WlConfig};
    use std::collections::BTreeMap;

    let base: Vec<Graph> = (0..6).map(|i| random_graph(9, 0.35, 500 + i)).collect();
    let wl = WlConfig { iterations: 4 };
    let reference = wl_kernel_matrix(&base, &wl).expect("nonempty");
    let exhaustive: Vec<_> = base.iter().map(|g| graphlet_counts_exhaustive(g, 3, 6).expect("valid")).collect();
    let mut failures = 0;
    for t in 0..100u64 {
        let perms: Vec<Vec<usize>> = (0..base.len()).map(|i| random_permutation(9, 1000 * t + i as u64)).collect();
        let permuted: Vec<Graph> = base.iter().zip(&perms).map(|(g, p)| g.permuted(p)).collect();
        if wl_kernel_matrix(&permuted, &wl).expect("nonempty").matrix != reference.matrix {
            failures += 1;
        }
        for (i, g) in permuted.iter().enumerate() {
            if graphlet_counts_exhaustive(g, 3, 6).expect("valid") != exhaustive[i] {
                failures += 1;
            }
        }
        // shared subset selection
        let mut r = rng::seeded(t);
        let (g, p, h) = (&base[0], &perms[0], &permuted[0]);
        let mut a: BTreeMap<u32, u64> = BTreeMap::new();
        let mut b: BTreeMap<u32, u64> = BTreeMap::new();
        for _ in 0..50 {
            let size = r.random_range(3..=6);
            let nodes: Vec<usize> = random_permutation(9, r.random())[..size].to_vec();
            let image: Vec<usize> = nodes.iter().map(|&v| p[v]).collect();
            *a.entry(canonical_form(&induced(g, &nodes)).expect("small")).or_insert(0) += 1;
            *b.entry(canonical_form(&induced(h, &image)).expect("small")).or_insert(0) += 1;
        }
        if a != b {
            failures += 1;
        }
    }
    failures
}

/// Pairwise-count U for `a`, ties counting half.
pub fn pairwise_u(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .flat_map(|x| {
            b.iter().map(move |y| {
                if x > y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                }
            })
        })
        .sum()
}

/// Two-sided p by enumerating every way to draw `na` of the pooled values.
pub fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (na, n) = (a.len(), pooled.len());
    let centre = (a.len() * b.len()) as f64 / 2.0;
    let observed = (pairwise_u(a, b) - centre).abs();
    let (mut total, mut extreme) = (0u64, 0u64);
    for mask in 0u32..1 << n {
        if mask.count_ones() as usize != na {
            continue;
        }
        let pick = |side: u32| -> Vec<f64> { (0..n).filter(|i| mask >> i & 1 == side).map(|i| pooled[i]).collect() };
        let (x, y) = (pick(1), pick(0));
        total += 1;
        if (pairwise_u(&x, &y) - centre).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

pub fn linear_kernel(points: &[[f64; 2]]) -> Matrix<f64> {
    Matrix::from_fn(points.len(), points.len(), |i, j| points[i][0] * points[j][0] + points[i][1] * points[j][1])
}

/// Ten points around (2, 2) labelled +1 and ten around (-2, -2) labelled -1.
pub fn separable_points() -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut r = graph2d::rng::seeded(21);
    let mut points = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        let s = if i < 10 { 1.0 } else { -1.0 };
        points.push([s * 2.0 + r.random_range(-1.0..1.0), s * 2.0 + r.random_range(-1.0..1.0)]);
        y.push(s);
    }
    (points, y)
}
