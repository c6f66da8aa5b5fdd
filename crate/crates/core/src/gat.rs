//! Multi-head GATv2 message passing with hand-written gradients.
//!
//! Per head `k` and edge `j → i`:
//!
//! ```text
//! f(h_i, h_j) = aᵀ LeakyReLU(W_l h_i + W_r h_j)
//! α_ij        = softmax_j f(h_i, h_j)          over N(i) ∪ {i}
//! o_i^k       = Σ_j α_ij W_r h_j
//! h'_i        = W_o [o_i^1 || ... || o_i^K]
//! ```
//!
//! One parameter set per layer is shared by every node and edge kind. Layers
//! are stacked without any extra nonlinearity or residual path.

use rand::Rng;

use crate::error::{GimcError, Result};
use crate::tensor::{axpy, dot, Matrix};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    pub w_l: Matrix,
    pub w_r: Matrix,
    /// Attention vector `a`, stored as a 1 × d' matrix.
    pub att: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub w_o: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatStack {
    pub layers: Vec<GatLayer>,
    pub leaky_slope: f64,
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

impl GatHead {
    pub fn head_dim(&self) -> usize {
        self.w_l.rows
    }
}

impl GatLayer {
    pub fn init<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Self {
        let hd = dim / heads;
        GatLayer {
            heads: (0..heads)
                .map(|_| GatHead {
                    w_l: Matrix::fan_in_uniform(hd, dim, rng),
                    w_r: Matrix::fan_in_uniform(hd, dim, rng),
                    att: Matrix::fan_in_uniform(1, hd, rng),
                })
                .collect(),
            w_o: Matrix::fan_in_uniform(dim, hd * heads, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GatLayer {
            heads: self
                .heads
                .iter()
                .map(|h| GatHead {
                    w_l: h.w_l.zeros_like(),
                    w_r: h.w_r.zeros_like(),
                    att: h.att.zeros_like(),
                })
                .collect(),
            w_o: self.w_o.zeros_like(),
        }
    }
}

impl GatStack {
    /// `layers` layers of `heads` heads each, head width `dim / heads`.
    pub fn init<R: Rng + ?Sized>(
        layers: usize,
        heads: usize,
        dim: usize,
        leaky_slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(GimcError::Config(format!(
                "model width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(GatStack {
            layers: (0..layers).map(|_| GatLayer::init(dim, heads, rng)).collect(),
            leaky_slope,
        })
    }

    pub fn zeros_like(&self) -> Self {
        GatStack {
            layers: self.layers.iter().map(GatLayer::zeros_like).collect(),
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (k, h) in layer.heads.iter().enumerate() {
                out.push((format!("gat.{l}.{k}.w_l"), &h.w_l));
                out.push((format!("gat.{l}.{k}.w_r"), &h.w_r));
                out.push((format!("gat.{l}.{k}.att"), &h.att));
            }
            out.push((format!("gat.{l}.w_o"), &layer.w_o));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (k, h) in layer.heads.iter_mut().enumerate() {
                out.push((format!("gat.{l}.{k}.w_l"), &mut h.w_l));
                out.push((format!("gat.{l}.{k}.w_r"), &mut h.w_r));
                out.push((format!("gat.{l}.{k}.att"), &mut h.att));
            }
            out.push((format!("gat.{l}.w_o"), &mut layer.w_o));
        }
        out
    }
}

/// Edge score `aᵀ LeakyReLU(W_l h_i + W_r h_j)`.
pub fn score(h_i: &[f64], h_j: &[f64], head: &GatHead, slope: f64) -> f64 {
    let zl = head.w_l.matvec(h_i);
    let zr = head.w_r.matvec(h_j);
    zl.iter()
        .zip(&zr)
        .zip(head.att.row(0))
        .map(|((l, r), a)| a * leaky_relu(l + r, slope))
        .sum()
}

/// Softmax-normalized attention of node `i` over `neighbors`.
pub fn attention(
    i: usize,
    neighbors: &[usize],
    features: &[Vec<f64>],
    head: &GatHead,
    slope: f64,
) -> Vec<f64> {
    let scores: Vec<f64> = neighbors
        .iter()
        .map(|&j| score(&features[i], &features[j], head, slope))
        .collect();
    crate::tensor::softmax(&scores)
}

#[derive(Debug, Clone)]
struct HeadCache {
    zr: Vec<Vec<f64>>,
    /// Pre-activations per node per neighbor.
    pre: Vec<Vec<Vec<f64>>>,
    alpha: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    heads: Vec<HeadCache>,
    concat: Vec<Vec<f64>>,
}

impl LayerCache {
    /// Attention weights for head `k`, indexed like the neighbor lists.
    pub fn alpha(&self, k: usize) -> &[Vec<f64>] {
        &self.heads[k].alpha
    }

    /// Sign of every LeakyReLU input, in a fixed order.
    pub fn activation_signs(&self) -> impl Iterator<Item = bool> + '_ {
        self.heads
            .iter()
            .flat_map(|h| h.pre.iter().flatten().flatten())
            .map(|x| *x > 0.0)
    }
}

pub fn layer_forward(
    neighbors: &[Vec<usize>],
    features: &[Vec<f64>],
    layer: &GatLayer,
    slope: f64,
) -> (Vec<Vec<f64>>, LayerCache) {
    let n = features.len();
    let mut heads = Vec::with_capacity(layer.heads.len());
    let mut concat: Vec<Vec<f64>> = vec![Vec::new(); n];
    for head in &layer.heads {
        let zl: Vec<Vec<f64>> = features.iter().map(|h| head.w_l.matvec(h)).collect();
        let zr: Vec<Vec<f64>> = features.iter().map(|h| head.w_r.matvec(h)).collect();
        let a = head.att.row(0);
        let mut pre = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        for i in 0..n {
            let pres: Vec<Vec<f64>> = neighbors[i]
                .iter()
                .map(|&j| zl[i].iter().zip(&zr[j]).map(|(l, r)| l + r).collect())
                .collect();
            let scores: Vec<f64> = pres
                .iter()
                .map(|p: &Vec<f64>| {
                    p.iter()
                        .zip(a)
                        .map(|(x, ak)| ak * leaky_relu(*x, slope))
                        .sum()
                })
                .collect();
            let al = crate::tensor::softmax(&scores);
            let mut out = vec![0.0; head.head_dim()];
            for (&j, &w) in neighbors[i].iter().zip(&al) {
                axpy(&mut out, w, &zr[j]);
            }
            concat[i].extend_from_slice(&out);
            pre.push(pres);
            alpha.push(al);
        }
        heads.push(HeadCache { zr, pre, alpha });
    }
    let out = concat.iter().map(|c| layer.w_o.matvec(c)).collect();
    (out, LayerCache { heads, concat })
}

/// Gradients of one layer. Returns the gradient with respect to the input features.
pub fn layer_backward(
    neighbors: &[Vec<usize>],
    features: &[Vec<f64>],
    layer: &GatLayer,
    slope: f64,
    cache: &LayerCache,
    upstream: &[Vec<f64>],
    grads: &mut GatLayer,
) -> Vec<Vec<f64>> {
    let n = features.len();
    let width = features.first().map_or(0, Vec::len);
    let mut d_in = vec![vec![0.0; width]; n];
    let dconcat: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            grads.w_o.add_outer(&upstream[i], &cache.concat[i], 1.0);
            layer.w_o.matvec_t(&upstream[i])
        })
        .collect();

    for (k, (head, hc)) in layer.heads.iter().zip(&cache.heads).enumerate() {
        let hd = head.head_dim();
        let a = head.att.row(0);
        let mut dzl = vec![vec![0.0; hd]; n];
        let mut dzr = vec![vec![0.0; hd]; n];
        let mut datt = vec![0.0; hd];
        for i in 0..n {
            let dout = &dconcat[i][k * hd..(k + 1) * hd];
            let nb = &neighbors[i];
            let al = &hc.alpha[i];
            let dalpha: Vec<f64> = nb.iter().map(|&j| dot(dout, &hc.zr[j])).collect();
            for (&j, &w) in nb.iter().zip(al) {
                axpy(&mut dzr[j], w, dout);
            }
            let weighted: f64 = al.iter().zip(&dalpha).map(|(w, d)| w * d).sum();
            for (m, &j) in nb.iter().enumerate() {
                let ds = al[m] * (dalpha[m] - weighted);
                if ds == 0.0 {
                    continue;
                }
                let pre = &hc.pre[i][m];
                for c in 0..hd {
                    datt[c] += ds * leaky_relu(pre[c], slope);
                    let dp = ds * a[c] * leaky_relu_grad(pre[c], slope);
                    dzl[i][c] += dp;
                    dzr[j][c] += dp;
                }
            }
        }
        let gh = &mut grads.heads[k];
        axpy(gh.att.row_mut(0), 1.0, &datt);
        for i in 0..n {
            gh.w_l.add_outer(&dzl[i], &features[i], 1.0);
            gh.w_r.add_outer(&dzr[i], &features[i], 1.0);
            axpy(&mut d_in[i], 1.0, &head.w_l.matvec_t(&dzl[i]));
            axpy(&mut d_in[i], 1.0, &head.w_r.matvec_t(&dzr[i]));
        }
    }
    d_in
}

/// Intermediates of a stacked forward pass, consumed by [`stack_backward`].
#[derive(Debug, Clone)]
pub struct StackTrace {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub caches: Vec<LayerCache>,
    pub output: Vec<Vec<f64>>,
}

pub fn stack_forward(neighbors: &[Vec<usize>], inputs: &[Vec<f64>], stack: &GatStack) -> StackTrace {
    let mut layer_inputs = Vec::with_capacity(stack.layers.len());
    let mut caches = Vec::with_capacity(stack.layers.len());
    let mut h = inputs.to_vec();
    for layer in &stack.layers {
        let (next, cache) = layer_forward(neighbors, &h, layer, stack.leaky_slope);
        layer_inputs.push(std::mem::replace(&mut h, next));
        caches.push(cache);
    }
    StackTrace {
        inputs: layer_inputs,
        caches,
        output: h,
    }
}

/// Accumulates parameter gradients into `grads` and returns input gradients.
pub fn stack_backward(
    neighbors: &[Vec<usize>],
    stack: &GatStack,
    trace: &StackTrace,
    upstream: &[Vec<f64>],
    grads: &mut GatStack,
) -> Result<Vec<Vec<f64>>> {
    if trace.caches.len() != stack.layers.len() || trace.inputs.len() != stack.layers.len() {
        return Err(GimcError::Numeric(format!(
            "forward trace holds {} layers, stack has {}",
            trace.caches.len(),
            stack.layers.len()
        )));
    }
    if upstream.len() != trace.output.len() {
        return Err(GimcError::Dimension {
            what: "upstream node gradients".into(),
            expected: trace.output.len(),
            got: upstream.len(),
        });
    }
    let mut g = upstream.to_vec();
    for l in (0..stack.layers.len()).rev() {
        g = layer_backward(
            neighbors,
            &trace.inputs[l],
            &stack.layers[l],
            stack.leaky_slope,
            &trace.caches[l],
            &g,
            &mut grads.layers[l],
        );
    }
    Ok(g)
}
