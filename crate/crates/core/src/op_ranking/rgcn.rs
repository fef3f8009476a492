//! Relational graph convolution over the union graph of a history window.

use rand::Rng;

use super::Op1Error;
use crate::event_store::DailyGraph;
use crate::nn::{Dropout, Param, Tensor};

/// One layer: a `d × d` transform per (forward or inverse) relation and a
/// self-loop transform.
#[derive(Debug, Clone, PartialEq)]
pub struct RgcnLayer {
    /// `[2|R|, d, d]`; index `r + |R|` is the inverse of relation `r`.
    pub w_rel: Param,
    pub w_self: Param,
}

impl RgcnLayer {
    pub fn init<R: Rng + ?Sized>(num_relations: usize, dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (2 * dim) as f64).sqrt();
        Self {
            w_rel: Param::uniform(&[2 * num_relations, dim, dim], bound, rng),
            w_self: Param::uniform(&[dim, dim], bound, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_self.shape()[0]
    }

    fn relation_matrix(&self, r: usize) -> Tensor {
        let d = self.dim();
        let block = &self.w_rel.value.data()[r * d * d..(r + 1) * d * d];
        Tensor::from_vec(&[d, d], block.to_vec()).expect("block is d×d")
    }
}

/// Directed edges of the window, with inverse edges, grouped by relation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    num_entities: usize,
    /// Per doubled relation: `(source, target)` pairs.
    by_relation: Vec<Vec<(usize, usize)>>,
    /// `1 / in-degree`, 0 for isolated nodes.
    inv_degree: Vec<f64>,
}

impl EdgeList {
    /// Union of all edges in `graphs`, plus `(o, r + |R|, s)` for each
    /// `(s, r, o)`.
    pub fn from_graphs(
        graphs: &[&DailyGraph],
        num_entities: usize,
        num_relations: usize,
    ) -> Result<Self, Op1Error> {
        let mut by_relation = vec![Vec::new(); 2 * num_relations];
        let mut degree = vec![0usize; num_entities];
        for g in graphs {
            for &(s, r, o, uid) in &g.edges {
                if s >= num_entities || o >= num_entities || r >= num_relations {
                    return Err(Op1Error::InvalidEdge { uid });
                }
                by_relation[r].push((s, o));
                by_relation[r + num_relations].push((o, s));
                degree[o] += 1;
                degree[s] += 1;
            }
        }
        let inv_degree = degree
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { 1.0 / d as f64 })
            .collect();
        Ok(Self {
            num_entities,
            by_relation,
            inv_degree,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.by_relation.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Tensor,
    pre: Tensor,
    mask: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct RgcnCache {
    layers: Vec<LayerCache>,
}

fn layer_forward(h: &Tensor, edges: &EdgeList, layer: &RgcnLayer) -> Result<Tensor, Op1Error> {
    let mut pre = h.matmul(&layer.w_self.value)?;
    for (r, pairs) in edges.by_relation.iter().enumerate() {
        if pairs.is_empty() {
            continue;
        }
        let srcs: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let msgs = h.gather_rows(&srcs).matmul(&layer.relation_matrix(r))?;
        for (e, &(_, dst)) in pairs.iter().enumerate() {
            let w = edges.inv_degree[dst];
            for (o, m) in pre.row_mut(dst).iter_mut().zip(msgs.row(e)) {
                *o += w * m;
            }
        }
    }
    Ok(pre)
}

/// Stacked layers of mean-aggregated relational messages plus self-loop,
/// each followed by ReLU and dropout.
pub fn rgcn_forward<R: Rng + ?Sized>(
    h0: &Tensor,
    edges: &EdgeList,
    layers: &[RgcnLayer],
    dropout: Dropout,
    train: bool,
    rng: &mut R,
) -> Result<(Tensor, RgcnCache), Op1Error> {
    if h0.rows() != edges.num_entities {
        return Err(Op1Error::Config(format!(
            "{} entity rows for a graph over {} entities",
            h0.rows(),
            edges.num_entities
        )));
    }
    let mut h = h0.clone();
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let pre = layer_forward(&h, edges, layer)?;
        let act = pre.map(|v| v.max(0.0));
        let (out, mask) = dropout.forward(&act, train, rng);
        caches.push(LayerCache {
            input: std::mem::replace(&mut h, out),
            pre,
            mask,
        });
    }
    Ok((h, RgcnCache { layers: caches }))
}

/// Accumulates layer gradients and returns the gradient for the input rows.
pub fn rgcn_backward(
    cache: &RgcnCache,
    edges: &EdgeList,
    layers: &mut [RgcnLayer],
    dout: &Tensor,
) -> Result<Tensor, Op1Error> {
    let mut grad = dout.clone();
    for (layer, lc) in layers.iter_mut().zip(&cache.layers).rev() {
        let dact = Dropout::backward(lc.mask.as_ref(), &grad);
        let dpre = dact.zip_map(&lc.pre, |g, p| if p > 0.0 { g } else { 0.0 });
        layer.w_self.grad.add_assign(&lc.input.t_matmul(&dpre)?);
        let mut dh = dpre.matmul_t(&layer.w_self.value)?;
        let d = layer.dim();
        for (r, pairs) in edges.by_relation.iter().enumerate() {
            if pairs.is_empty() {
                continue;
            }
            let srcs: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let mut g = Tensor::zeros(&[pairs.len(), d]);
            for (e, &(_, dst)) in pairs.iter().enumerate() {
                let w = edges.inv_degree[dst];
                for (o, v) in g.row_mut(e).iter_mut().zip(dpre.row(dst)) {
                    *o = w * v;
                }
            }
            let src_rows = lc.input.gather_rows(&srcs);
            let dw = src_rows.t_matmul(&g)?;
            let block = &mut layer.w_rel.grad.data_mut()[r * d * d..(r + 1) * d * d];
            for (o, v) in block.iter_mut().zip(dw.data()) {
                *o += v;
            }
            let dsrc = g.matmul_t(&layer.relation_matrix(r))?;
            for (e, &src) in srcs.iter().enumerate() {
                for (o, v) in dh.row_mut(src).iter_mut().zip(dsrc.row(e)) {
                    *o += v;
                }
            }
        }
        grad = dh;
    }
    Ok(grad)
}
