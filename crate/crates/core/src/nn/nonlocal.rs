//! Embedded-Gaussian non-local block over all nodes of one sample.
//!
//! `out = X + s * softmax(Q K^T / sqrt(C_e)) V W_out` with `Q = X W_q`,
//! `K = X W_k`, `V = X W_v`. The residual scale `s` starts at zero so a fresh
//! block is the identity map.

use ndarray::{s, Array2};
use rand::Rng;

use super::layers::softmax_rows;
use super::params::{fan_in_uniform, Grads, ParamId, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NonLocalBlock {
    query: ParamId,
    key: ParamId,
    value: ParamId,
    output: ParamId,
    scale: ParamId,
    channels: usize,
    embed: usize,
}

#[derive(Debug, Clone)]
struct SampleCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    mixed: Array2<f64>,
    projected: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct NonLocalCache {
    nodes: usize,
    samples: Vec<SampleCache>,
}

impl NonLocalBlock {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        channels: usize,
        embed: usize,
        rng: &mut R,
    ) -> Self {
        let mut proj = |suffix: &str, rows: usize, cols: usize| {
            params.add(
                format!("{name}.{suffix}"),
                fan_in_uniform(rng, rows, cols, rows, 3.0),
            )
        };
        let query = proj("query", channels, embed);
        let key = proj("key", channels, embed);
        let value = proj("value", channels, embed);
        let output = proj("output", embed, channels);
        let scale = params.add(format!("{name}.scale"), Array2::zeros((1, 1)));
        Self {
            query,
            key,
            value,
            output,
            scale,
            channels,
            embed,
        }
    }

    pub fn scale_id(&self) -> ParamId {
        self.scale
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn temperature(&self) -> f64 {
        (self.embed as f64).sqrt()
    }

    /// Attention matrix of one sample (`nodes x nodes`, rows sum to one).
    pub fn attention(&self, params: &ParamSet, x: &Array2<f64>) -> Array2<f64> {
        let q = x.dot(params.get(self.query));
        let k = x.dot(params.get(self.key));
        softmax_rows(&(q.dot(&k.t()) / self.temperature()))
    }

    /// Applies the block to `x`, whose rows hold consecutive samples of `nodes` rows each.
    pub fn forward(
        &self,
        params: &ParamSet,
        x: &Array2<f64>,
        nodes: usize,
    ) -> Result<(Array2<f64>, NonLocalCache)> {
        if x.ncols() != self.channels || nodes == 0 || x.nrows() % nodes != 0 {
            return Err(Error::shape(
                format!("(B*{nodes}, {})", self.channels),
                format!("{:?}", x.dim()),
            ));
        }
        let s = params.get(self.scale)[[0, 0]];
        let mut out = x.clone();
        let mut samples = Vec::with_capacity(x.nrows() / nodes);
        for base in (0..x.nrows()).step_by(nodes) {
            let xs = x.slice(s![base..base + nodes, ..]);
            let q = xs.dot(params.get(self.query));
            let k = xs.dot(params.get(self.key));
            let v = xs.dot(params.get(self.value));
            let attn = softmax_rows(&(q.dot(&k.t()) / self.temperature()));
            let mixed = attn.dot(&v);
            let projected = mixed.dot(params.get(self.output));
            out.slice_mut(s![base..base + nodes, ..])
                .scaled_add(s, &projected);
            samples.push(SampleCache {
                q,
                k,
                v,
                attn,
                mixed,
                projected,
            });
        }
        Ok((out, NonLocalCache { nodes, samples }))
    }

    pub fn backward(
        &self,
        params: &ParamSet,
        x: &Array2<f64>,
        cache: &NonLocalCache,
        dout: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let s = params.get(self.scale)[[0, 0]];
        let tau = self.temperature();
        let wq = params.get(self.query);
        let wk = params.get(self.key);
        let wv = params.get(self.value);
        let wo = params.get(self.output);
        let mut dx = dout.clone();
        let mut dscale = 0.0;
        for (i, c) in cache.samples.iter().enumerate() {
            let rows = s![i * cache.nodes..(i + 1) * cache.nodes, ..];
            let xs = x.slice(rows);
            let dos = dout.slice(rows);
            dscale += (&dos * &c.projected).sum();
            let dproj = &dos * s;
            *grads.get_mut(self.output) += &c.mixed.t().dot(&dproj);
            let dmixed = dproj.dot(&wo.t());
            let dattn = dmixed.dot(&c.v.t());
            let dv = c.attn.t().dot(&dmixed);
            // Softmax backward, row by row.
            let mut dlogits = &c.attn * &dattn;
            for (mut row, prow) in dlogits.rows_mut().into_iter().zip(c.attn.rows()) {
                let dot = row.sum();
                row.zip_mut_with(&prow, |d, &p| *d -= p * dot);
            }
            dlogits /= tau;
            let dq = dlogits.dot(&c.k);
            let dk = dlogits.t().dot(&c.q);
            *grads.get_mut(self.query) += &xs.t().dot(&dq);
            *grads.get_mut(self.key) += &xs.t().dot(&dk);
            *grads.get_mut(self.value) += &xs.t().dot(&dv);
            let dxs = dq.dot(&wq.t()) + dk.dot(&wk.t()) + dv.dot(&wv.t());
            dx.slice_mut(rows).zip_mut_with(&dxs, |a, &b| *a += b);
        }
        grads.get_mut(self.scale)[[0, 0]] += dscale;
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn fresh_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::new();
        let block = NonLocalBlock::new(&mut params, "nl", 5, 3, &mut rng);
        let x = random(&mut rng, 14, 5);
        let (y, _) = block.forward(&params, &x, 7).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ParamSet::new();
        let block = NonLocalBlock::new(&mut params, "nl", 4, 2, &mut rng);
        let x = random(&mut rng, 9, 4);
        let a = block.attention(&params, &x);
        for row in a.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn single_node_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ParamSet::new();
        let block = NonLocalBlock::new(&mut params, "nl", 4, 3, &mut rng);
        params.get_mut(block.scale_id())[[0, 0]] = 0.7;
        let x = random(&mut rng, 1, 4);
        assert_eq!(block.attention(&params, &x), Array2::from_elem((1, 1), 1.0));
        let (y, _) = block.forward(&params, &x, 1).unwrap();
        let v = x.dot(params.get(block.value));
        let expected = &x + &(v.dot(params.get(block.output)) * 0.7);
        for (a, b) in y.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
