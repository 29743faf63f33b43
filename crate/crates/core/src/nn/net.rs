//! Local-to-global lifting network.
//!
//! Bottom-up: two graph convolutions per scale with max pooling 21 -> 6 -> 1
//! joints per frame. Top-down: upsampling back to 21 with a skip merge from
//! the matching encoder scale, two more convolutions per scale, then a
//! non-local block and a linear head reading the central frame.

use ndarray::{s, Array2, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    concat_channels, graph_max_pool, graph_max_pool_backward, graph_upsample,
    graph_upsample_backward, relu, relu_backward, split_channels, GraphConv, Linear,
};
use super::nonlocal::{NonLocalBlock, NonLocalCache};
use super::params::{Grads, ParamSet};
use crate::error::{Error, Result};
use crate::graph::{build_st_graph, pooling_maps, Level, PoolMap};
use crate::topology::HandTopology;

/// How upsampled features merge with the encoder features of the same scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SkipMerge {
    /// Channel concatenation followed by a linear mix back to the scale width.
    #[default]
    Concat,
    /// Linear map of the upsampled features added to the skip features.
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Frames per input window; odd.
    pub window: usize,
    /// Channel widths at the 21-, 6- and 1-node scales.
    pub widths: [usize; 3],
    pub convs_per_scale: usize,
    /// Embedding width of the non-local block.
    pub embed: usize,
    pub skip: SkipMerge,
    pub non_local: bool,
    /// Millimeters per network output unit.
    pub output_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            window: 3,
            widths: [64, 128, 256],
            convs_per_scale: 2,
            embed: 32,
            skip: SkipMerge::Concat,
            non_local: true,
            output_scale: 100.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::validation(format!(
                "window must be a positive odd number, got {}",
                self.window
            )));
        }
        if self.widths.contains(&0) || self.embed == 0 || self.convs_per_scale == 0 {
            return Err(Error::validation("network widths must be positive"));
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::validation("output_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvStack {
    convs: Vec<GraphConv>,
}

/// Inputs to each convolution and the ReLU outputs after it.
#[derive(Debug, Clone, Default)]
struct StackCache {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl ConvStack {
    fn forward(&self, params: &ParamSet, x: Array2<f64>) -> Result<(Array2<f64>, StackCache)> {
        let mut cache = StackCache::default();
        let mut h = x;
        for conv in &self.convs {
            let y = relu(&conv.forward(params, &h)?);
            cache.inputs.push(h);
            cache.outputs.push(y.clone());
            h = y;
        }
        Ok((h, cache))
    }

    fn backward(
        &self,
        params: &ParamSet,
        cache: &StackCache,
        dy: Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let mut d = dy;
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let dz = relu_backward(&cache.outputs[i], &d);
            d = conv.backward(params, &cache.inputs[i], &dz, grads);
        }
        d
    }
}

/// Everything the backward pass needs from one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    enc21: StackCache,
    pool21: Vec<usize>,
    enc21_rows: usize,
    enc6: StackCache,
    pool6: Vec<usize>,
    enc6_rows: usize,
    enc1: StackCache,
    mix6_in: Array2<f64>,
    dec6: StackCache,
    mix21_in: Array2<f64>,
    dec21: StackCache,
    non_local_in: Array2<f64>,
    non_local: Option<NonLocalCache>,
    head_in: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalToGlobalNet {
    config: NetConfig,
    topology: HandTopology,
    params: ParamSet,
    enc21: ConvStack,
    enc6: ConvStack,
    enc1: ConvStack,
    mix6: Linear,
    dec6: ConvStack,
    mix21: Linear,
    dec21: ConvStack,
    non_local: NonLocalBlock,
    head: Linear,
    map21: PoolMap,
    map6: PoolMap,
}

impl LocalToGlobalNet {
    pub fn new(config: NetConfig, topology: HandTopology, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let t = config.window;
        let g21 = build_st_graph(&topology, t, Level::Joints)?;
        let g6 = build_st_graph(&topology, t, Level::Regions)?;
        let g1 = build_st_graph(&topology, t, Level::Hand)?;
        let [w21, w6, w1] = config.widths;
        let n = config.convs_per_scale;

        let mut stack = |name: &str, graph, c_in: usize, c_out: usize, params: &mut ParamSet| {
            ConvStack {
                convs: (0..n)
                    .map(|i| {
                        GraphConv::new(
                            params,
                            &format!("{name}.{i}"),
                            graph,
                            if i == 0 { c_in } else { c_out },
                            c_out,
                            true,
                            &mut rng,
                        )
                    })
                    .collect(),
            }
        };
        let enc21 = stack("enc21", &g21, 2, w21, &mut params);
        let enc6 = stack("enc6", &g6, w21, w6, &mut params);
        let enc1 = stack("enc1", &g1, w6, w1, &mut params);
        let dec6 = stack("dec6", &g6, w6, w6, &mut params);
        let dec21 = stack("dec21", &g21, w21, w21, &mut params);

        let mix_in = |up: usize, skip: usize| match config.skip {
            SkipMerge::Concat => up + skip,
            SkipMerge::Add => up,
        };
        let mix6 = Linear::new(&mut params, "mix6", mix_in(w1, w6), w6, 3.0, &mut rng);
        let mix21 = Linear::new(&mut params, "mix21", mix_in(w6, w21), w21, 3.0, &mut rng);
        let non_local = NonLocalBlock::new(&mut params, "nonlocal", w21, config.embed, &mut rng);
        let head = Linear::new(&mut params, "head", w21, 3, 1.0, &mut rng);

        Ok(Self {
            map21: pooling_maps(&topology, 21, 6)?,
            map6: pooling_maps(&topology, 6, 1)?,
            config,
            topology,
            params,
            enc21,
            enc6,
            enc1,
            mix6,
            dec6,
            mix21,
            dec21,
            non_local,
            head,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn topology(&self) -> &HandTopology {
        &self.topology
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn non_local_block(&self) -> &NonLocalBlock {
        &self.non_local
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    pub fn set_non_local(&mut self, enabled: bool) {
        self.config.non_local = enabled;
    }

    fn nodes_per_sample(&self) -> usize {
        self.config.window * self.topology.num_joints()
    }

    /// Stacks `(T, 21, 2)` windows into `(B * T * 21, 2)` node features.
    pub fn pack_inputs(&self, windows: &[ArrayView3<f64>]) -> Result<Array2<f64>> {
        let t = self.config.window;
        let n = self.topology.num_joints();
        let mut x = Array2::zeros((windows.len() * t * n, 2));
        for (b, w) in windows.iter().enumerate() {
            if w.dim() != (t, n, 2) {
                return Err(Error::shape(format!("({t}, {n}, 2)"), format!("{:?}", w.dim())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("input window contains non-finite values"));
            }
            for ((ti, j, d), &v) in w.indexed_iter() {
                x[[(b * t + ti) * n + j, d]] = v;
            }
        }
        Ok(x)
    }

    /// Batched forward pass; returns `(B * 21, 3)` millimeter predictions.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let m = self.nodes_per_sample();
        if x.ncols() != 2 || x.nrows() % m != 0 || x.nrows() == 0 {
            return Err(Error::shape(format!("(B*{m}, 2)"), format!("{:?}", x.dim())));
        }
        let batch = x.nrows() / m;
        let p = &self.params;

        let (skip21, enc21) = self.enc21.forward(p, x.clone())?;
        let (pooled, pool21) = graph_max_pool(&skip21, &self.map21)?;
        let (skip6, enc6) = self.enc6.forward(p, pooled)?;
        let (pooled, pool6) = graph_max_pool(&skip6, &self.map6)?;
        let (deep, enc1) = self.enc1.forward(p, pooled)?;

        let up = graph_upsample(&deep, &self.map6)?;
        let (mixed, mix6_in) = self.merge(&self.mix6, up, &skip6)?;
        let (h6, dec6) = self.dec6.forward(p, mixed)?;

        let up = graph_upsample(&h6, &self.map21)?;
        let (mixed, mix21_in) = self.merge(&self.mix21, up, &skip21)?;
        let (h21, dec21) = self.dec21.forward(p, mixed)?;

        let (feat, non_local) = if self.config.non_local {
            let (y, c) = self.non_local.forward(p, &h21, m)?;
            (y, Some(c))
        } else {
            (h21.clone(), None)
        };
        let head_in = self.central_rows(&feat, batch);
        let out = self.head.forward(p, &head_in)? * self.config.output_scale;

        Ok((
            out,
            ForwardCache {
                batch,
                enc21,
                pool21,
                enc21_rows: skip21.nrows(),
                enc6,
                pool6,
                enc6_rows: skip6.nrows(),
                enc1,
                mix6_in,
                dec6,
                mix21_in,
                dec21,
                non_local_in: h21,
                non_local,
                head_in,
            },
        ))
    }

    fn merge(
        &self,
        mix: &Linear,
        up: Array2<f64>,
        skip: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        match self.config.skip {
            SkipMerge::Concat => {
                let input = concat_channels(&up, skip);
                Ok((mix.forward(&self.params, &input)?, input))
            }
            SkipMerge::Add => Ok((mix.forward(&self.params, &up)? + skip, up)),
        }
    }

    /// Returns (gradient w.r.t. the upsampled input, gradient w.r.t. the skip input).
    fn merge_backward(
        &self,
        mix: &Linear,
        input: &Array2<f64>,
        dy: &Array2<f64>,
        up_channels: usize,
        grads: &mut Grads,
    ) -> (Array2<f64>, Array2<f64>) {
        let din = mix.backward(&self.params, input, dy, grads);
        match self.config.skip {
            SkipMerge::Concat => split_channels(&din, up_channels),
            SkipMerge::Add => (din, dy.clone()),
        }
    }

    fn central_rows(&self, feat: &Array2<f64>, batch: usize) -> Array2<f64> {
        let n = self.topology.num_joints();
        let m = self.nodes_per_sample();
        let offset = (self.config.window / 2) * n;
        let mut out = Array2::zeros((batch * n, feat.ncols()));
        for b in 0..batch {
            out.slice_mut(s![b * n..(b + 1) * n, ..])
                .assign(&feat.slice(s![b * m + offset..b * m + offset + n, ..]));
        }
        out
    }

    /// Accumulates parameter gradients of `sum(d_out * out)` into `grads`
    /// and returns the gradient with respect to the packed input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let p = &self.params;
        let n = self.topology.num_joints();
        let m = self.nodes_per_sample();
        let [w21, w6, w1] = self.config.widths;

        let d_head = d_out * self.config.output_scale;
        let d_sel = self.head.backward(p, &cache.head_in, &d_head, grads);
        let offset = (self.config.window / 2) * n;
        let mut d_feat = Array2::zeros((cache.batch * m, w21));
        for b in 0..cache.batch {
            d_feat
                .slice_mut(s![b * m + offset..b * m + offset + n, ..])
                .assign(&d_sel.slice(s![b * n..(b + 1) * n, ..]));
        }
        let d_h21 = match &cache.non_local {
            Some(c) => self
                .non_local
                .backward(p, &cache.non_local_in, c, &d_feat, grads),
            None => d_feat,
        };

        let d_mixed = self.dec21.backward(p, &cache.dec21, d_h21, grads);
        let (d_up, mut d_skip21) =
            self.merge_backward(&self.mix21, &cache.mix21_in, &d_mixed, w6, grads);
        let d_h6 = graph_upsample_backward(&d_up, &self.map21);

        let d_mixed = self.dec6.backward(p, &cache.dec6, d_h6, grads);
        let (d_up, mut d_skip6) =
            self.merge_backward(&self.mix6, &cache.mix6_in, &d_mixed, w1, grads);
        let d_deep = graph_upsample_backward(&d_up, &self.map6);

        let d_pooled = self.enc1.backward(p, &cache.enc1, d_deep, grads);
        d_skip6 += &graph_max_pool_backward(&d_pooled, &cache.pool6, cache.enc6_rows);
        let d_pooled = self.enc6.backward(p, &cache.enc6, d_skip6, grads);
        d_skip21 += &graph_max_pool_backward(&d_pooled, &cache.pool21, cache.enc21_rows);
        self.enc21.backward(p, &cache.enc21, d_skip21, grads)
    }

    /// Predicts the central frame's `(21, 3)` joints of one `(T, 21, 2)` window.
    pub fn predict(&self, window: ArrayView3<f64>) -> Result<Array2<f64>> {
        let x = self.pack_inputs(&[window])?;
        Ok(self.forward(&x)?.0)
    }

    /// Predictions for many windows, one `(21, 3)` array each.
    pub fn predict_many(&self, windows: &[ArrayView3<f64>]) -> Result<Vec<Array2<f64>>> {
        let n = self.topology.num_joints();
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(256) {
            let (y, _) = self.forward(&self.pack_inputs(chunk)?)?;
            for b in 0..chunk.len() {
                out.push(y.slice(s![b * n..(b + 1) * n, ..]).to_owned());
            }
        }
        Ok(out)
    }
}
