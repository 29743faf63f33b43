//! Differentiable building blocks operating on batched node features.
//!
//! Features are `(rows, channels)` matrices where rows enumerate samples, then
//! frames, then nodes: row `b * M + t * n + j`. Every layer exposes a
//! `forward` that returns what its `backward` needs, and a `backward` that
//! accumulates parameter gradients and returns the input gradient.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{fan_in_uniform, Grads, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::graph::{PoolMap, SparsePartitions, StGraph, NUM_CLASSES};

/// Partitioned graph convolution `Z = sum_k Â_k X Θ_k + b`.
///
/// The five filters are stored side by side in one `(C_in, 5 * C_out)`
/// parameter; filter `k` occupies columns `k * C_out .. (k + 1) * C_out`.
#[derive(Debug, Clone)]
pub struct GraphConv {
    theta: ParamId,
    bias: Option<ParamId>,
    in_channels: usize,
    out_channels: usize,
    operator: Arc<SparsePartitions>,
}

impl GraphConv {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        graph: &StGraph,
        in_channels: usize,
        out_channels: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let theta = params.add(
            format!("{name}.theta"),
            fan_in_uniform(
                rng,
                in_channels,
                NUM_CLASSES * out_channels,
                NUM_CLASSES * in_channels,
                6.0,
            ),
        );
        let bias = bias.then(|| params.add(format!("{name}.bias"), Array2::zeros((1, out_channels))));
        Self {
            theta,
            bias,
            in_channels,
            out_channels,
            operator: Arc::new(graph.sparse_operator()),
        }
    }

    pub fn theta_id(&self) -> ParamId {
        self.theta
    }

    pub fn bias_id(&self) -> Option<ParamId> {
        self.bias
    }

    /// View of filter `k` inside the stacked parameter.
    pub fn filter<'a>(&self, params: &'a ParamSet, k: usize) -> ArrayView2<'a, f64> {
        let c = self.out_channels;
        params.get(self.theta).slice(s![.., k * c..(k + 1) * c])
    }

    pub fn num_nodes(&self) -> usize {
        self.operator.num_nodes
    }

    pub fn forward(&self, params: &ParamSet, x: &Array2<f64>) -> Result<Array2<f64>> {
        let m = self.operator.num_nodes;
        if x.ncols() != self.in_channels || x.nrows() % m != 0 || x.nrows() == 0 {
            return Err(Error::shape(
                format!("(B*{m}, {})", self.in_channels),
                format!("{:?}", x.dim()),
            ));
        }
        let c = self.out_channels;
        let wide = NUM_CLASSES * c;
        let h = x.dot(params.get(self.theta));
        let h = h.as_standard_layout();
        let hs = h.as_slice().expect("standard layout");
        let mut z = Array2::<f64>::zeros((x.nrows(), c));
        let zs = z.as_slice_mut().expect("fresh array");
        for base in (0..x.nrows()).step_by(m) {
            for e in &self.operator.entries {
                let src = &hs[(base + e.col) * wide + e.class * c..][..c];
                let dst = &mut zs[(base + e.row) * c..][..c];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += e.weight * v;
                }
            }
        }
        if let Some(b) = self.bias {
            z += params.get(b);
        }
        Ok(z)
    }

    pub fn backward(
        &self,
        params: &ParamSet,
        x: &Array2<f64>,
        dz: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let m = self.operator.num_nodes;
        let c = self.out_channels;
        let wide = NUM_CLASSES * c;
        let dz = dz.as_standard_layout();
        let dzs = dz.as_slice().expect("standard layout");
        let mut dh = Array2::<f64>::zeros((x.nrows(), wide));
        let dhs = dh.as_slice_mut().expect("fresh array");
        for base in (0..x.nrows()).step_by(m) {
            for e in &self.operator.entries {
                let src = &dzs[(base + e.row) * c..][..c];
                let dst = &mut dhs[(base + e.col) * wide + e.class * c..][..c];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += e.weight * v;
                }
            }
        }
        *grads.get_mut(self.theta) += &x.t().dot(&dh);
        if let Some(b) = self.bias {
            *grads.get_mut(b) += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        dh.dot(&params.get(self.theta).t())
    }
}

/// Dense layer applied independently to every row.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
    in_channels: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(
            format!("{name}.weight"),
            fan_in_uniform(rng, in_channels, out_channels, in_channels, gain),
        );
        let bias = params.add(format!("{name}.bias"), Array2::zeros((1, out_channels)));
        Self {
            weight,
            bias,
            in_channels,
        }
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }

    pub fn forward(&self, params: &ParamSet, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_channels {
            return Err(Error::shape(
                format!("(_, {})", self.in_channels),
                format!("{:?}", x.dim()),
            ));
        }
        Ok(x.dot(params.get(self.weight)) + params.get(self.bias))
    }

    pub fn backward(
        &self,
        params: &ParamSet,
        x: &Array2<f64>,
        dy: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        *grads.get_mut(self.weight) += &x.t().dot(dy);
        *grads.get_mut(self.bias) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&params.get(self.weight).t())
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient of ReLU given its output.
pub fn relu_backward(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &v| {
        if v <= 0.0 {
            *d = 0.0
        }
    });
    dx
}

/// Per-group, per-channel, per-frame max pooling.
///
/// Returns the pooled features and, for each output scalar, the input row
/// that supplied the maximum (first one on ties).
pub fn graph_max_pool(x: &Array2<f64>, map: &PoolMap) -> Result<(Array2<f64>, Vec<usize>)> {
    let nf = map.fine_per_frame;
    let nc = map.coarse_per_frame;
    if x.nrows() % nf != 0 || x.nrows() == 0 {
        return Err(Error::shape(format!("(blocks*{nf}, C)"), format!("{:?}", x.dim())));
    }
    let members: Vec<Vec<usize>> = (0..nc).map(|g| map.members(g)).collect();
    if let Some(g) = members.iter().position(Vec::is_empty) {
        return Err(Error::validation(format!("pool group {g} is empty")));
    }
    let blocks = x.nrows() / nf;
    let c = x.ncols();
    let mut out = Array2::zeros((blocks * nc, c));
    let mut argmax = vec![0usize; blocks * nc * c];
    for blk in 0..blocks {
        for (g, mem) in members.iter().enumerate() {
            let orow = blk * nc + g;
            for ch in 0..c {
                let mut best_row = blk * nf + mem[0];
                let mut best = x[[best_row, ch]];
                for &j in &mem[1..] {
                    let r = blk * nf + j;
                    if x[[r, ch]] > best {
                        best = x[[r, ch]];
                        best_row = r;
                    }
                }
                out[[orow, ch]] = best;
                argmax[orow * c + ch] = best_row;
            }
        }
    }
    Ok((out, argmax))
}

pub fn graph_max_pool_backward(
    dy: &Array2<f64>,
    argmax: &[usize],
    fine_rows: usize,
) -> Array2<f64> {
    let c = dy.ncols();
    let mut dx = Array2::zeros((fine_rows, c));
    for ((r, ch), &g) in dy.indexed_iter() {
        dx[[argmax[r * c + ch], ch]] += g;
    }
    dx
}

/// Broadcasts every coarse node's features to all fine nodes of its group.
pub fn graph_upsample(x: &Array2<f64>, map: &PoolMap) -> Result<Array2<f64>> {
    let nf = map.fine_per_frame;
    let nc = map.coarse_per_frame;
    if x.nrows() % nc != 0 || x.nrows() == 0 {
        return Err(Error::shape(format!("(blocks*{nc}, C)"), format!("{:?}", x.dim())));
    }
    let blocks = x.nrows() / nc;
    let mut out = Array2::zeros((blocks * nf, x.ncols()));
    for blk in 0..blocks {
        for (j, &g) in map.group_of.iter().enumerate() {
            out.row_mut(blk * nf + j).assign(&x.row(blk * nc + g));
        }
    }
    Ok(out)
}

pub fn graph_upsample_backward(dy: &Array2<f64>, map: &PoolMap) -> Array2<f64> {
    let nf = map.fine_per_frame;
    let nc = map.coarse_per_frame;
    let blocks = dy.nrows() / nf;
    let mut dx = Array2::zeros((blocks * nc, dy.ncols()));
    for blk in 0..blocks {
        for (j, &g) in map.group_of.iter().enumerate() {
            let mut row = dx.row_mut(blk * nc + g);
            row += &dy.row(blk * nf + j);
        }
    }
    dx
}

/// Channel-axis concatenation `[a | b]`.
pub fn concat_channels(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts match")
}

/// Splits a gradient of `[a | b]` back into its two parts.
pub fn split_channels(d: &Array2<f64>, left: usize) -> (Array2<f64>, Array2<f64>) {
    (
        d.slice(s![.., ..left]).to_owned(),
        d.slice(s![.., left..]).to_owned(),
    )
}

/// Row-wise softmax.
pub fn softmax_rows(s: &Array2<f64>) -> Array2<f64> {
    let mut p = s.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}
