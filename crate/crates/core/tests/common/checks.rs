//! Finite-difference gradient checks against the library's analytic backward passes.
//! Each function runs `instances` seeded cases and returns the worst relative error.

use lghand::graph::{SpatialSkeleton, StGraph};
use lghand::losses::{term_with_grad, FingerLengthMode, LossTerm};
use lghand::nn::{GraphConv, LocalToGlobalNet, NetConfig, NonLocalBlock, ParamSet};
use lghand::HandTopology;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_rel_err, numeric_grad, random_matrix, random_pose};

pub const STEP: f64 = 1e-5;

pub fn loss_term(term: LossTerm, instances: usize, seed: u64) -> f64 {
    let topo = HandTopology::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let frames = 1 + 2 * (i % 2);
        let gt = random_pose(&mut rng, frames);
        // Predictions near the target keep every term in its smooth region.
        let pred = &gt + &Array3::from_shape_fn(gt.raw_dim(), |_| rng.random_range(-15.0..15.0));
        let (_, analytic) =
            term_with_grad(term, gt.view(), pred.view(), &topo, FingerLengthMode::Chain).unwrap();
        let mut flat = pred.iter().copied().collect::<Vec<_>>();
        let numeric = numeric_grad(&mut flat, STEP, |x| {
            let p = Array3::from_shape_vec(gt.raw_dim(), x.to_vec()).unwrap();
            term_with_grad(term, gt.view(), p.view(), &topo, FingerLengthMode::Chain)
                .unwrap()
                .0
        });
        worst = worst.max(grad_rel_err(&analytic.iter().copied().collect::<Vec<_>>(), &numeric));
    }
    worst
}

fn weighted_sum(y: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (y * w).sum()
}

/// Gradients of `sum(W * Z)` with respect to the input and every parameter.
pub fn graph_conv(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(2..=5);
        let edges = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
        let graph = StGraph::from_skeleton(SpatialSkeleton::new(n, edges, 0).unwrap(), 3).unwrap();
        let (cin, cout) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let mut params = ParamSet::new();
        let conv = GraphConv::new(&mut params, "g", &graph, cin, cout, true, &mut rng);
        params.get_mut(conv.bias_id().unwrap()).mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let rows = 2 * graph.num_nodes();
        let x = random_matrix(&mut rng, rows, cin);
        let w = random_matrix(&mut rng, rows, cout);

        let mut grads = params.zeros_like();
        let dx = conv.backward(&params, &x, &w, &mut grads);
        let mut xf: Vec<f64> = x.iter().copied().collect();
        let nx = numeric_grad(&mut xf, STEP, |v| {
            let xv = Array2::from_shape_vec(x.raw_dim(), v.to_vec()).unwrap();
            weighted_sum(&conv.forward(&params, &xv).unwrap(), &w)
        });
        worst = worst.max(grad_rel_err(&dx.iter().copied().collect::<Vec<_>>(), &nx));

        let mut pf = params.flatten();
        let mut probe = params.clone();
        let np = numeric_grad(&mut pf, STEP, |v| {
            probe.set_flat(v).unwrap();
            weighted_sum(&conv.forward(&probe, &x).unwrap(), &w)
        });
        worst = worst.max(grad_rel_err(&grads.flatten(), &np));
    }
    worst
}

pub fn non_local(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let nodes = rng.random_range(1..=6);
        let channels = rng.random_range(1..=4);
        let embed = rng.random_range(1..=3);
        let mut params = ParamSet::new();
        let block = NonLocalBlock::new(&mut params, "nl", channels, embed, &mut rng);
        params.get_mut(block.scale_id())[[0, 0]] = rng.random_range(0.3..1.5);
        let x = random_matrix(&mut rng, 2 * nodes, channels);
        let w = random_matrix(&mut rng, 2 * nodes, channels);

        let (_, cache) = block.forward(&params, &x, nodes).unwrap();
        let mut grads = params.zeros_like();
        let dx = block.backward(&params, &x, &cache, &w, &mut grads);
        let mut xf: Vec<f64> = x.iter().copied().collect();
        let nx = numeric_grad(&mut xf, STEP, |v| {
            let xv = Array2::from_shape_vec(x.raw_dim(), v.to_vec()).unwrap();
            weighted_sum(&block.forward(&params, &xv, nodes).unwrap().0, &w)
        });
        worst = worst.max(grad_rel_err(&dx.iter().copied().collect::<Vec<_>>(), &nx));

        let mut pf = params.flatten();
        let mut probe = params.clone();
        let np = numeric_grad(&mut pf, STEP, |v| {
            probe.set_flat(v).unwrap();
            weighted_sum(&block.forward(&probe, &x, nodes).unwrap().0, &w)
        });
        worst = worst.max(grad_rel_err(&grads.flatten(), &np));
    }
    worst
}

/// Gradient of the output sum of a small network with respect to every parameter and the input.
pub fn network(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let cfg = NetConfig {
            window: if i % 2 == 0 { 1 } else { 3 },
            widths: [3, 3, 4],
            convs_per_scale: 1,
            embed: 2,
            skip: if i % 4 < 2 { lghand::nn::SkipMerge::Concat } else { lghand::nn::SkipMerge::Add },
            non_local: true,
            output_scale: 1.0,
        };
        let mut net = LocalToGlobalNet::new(cfg.clone(), HandTopology::canonical(), seed + i as u64).unwrap();
        let scale = net.non_local_block().scale_id();
        net.params_mut().get_mut(scale)[[0, 0]] = 0.8;
        // Zero biases would park dead channels exactly on the ReLU kink.
        for name in net.params().names().to_vec() {
            if name.ends_with(".bias") {
                let id = net.params().id_of(&name).unwrap();
                net.params_mut().get_mut(id).mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
        }
        let windows: Vec<Array3<f64>> = (0..2)
            .map(|_| Array3::from_shape_fn((cfg.window, 21, 2), |_| rng.random_range(-2.0..2.0)))
            .collect();
        let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
        let x = net.pack_inputs(&views).unwrap();
        let (out, cache) = net.forward(&x).unwrap();
        let ones = Array2::ones(out.raw_dim());
        let mut grads = net.params().zeros_like();
        let dx = net.backward(&cache, &ones, &mut grads);

        let mut xf: Vec<f64> = x.iter().copied().collect();
        let nx = numeric_grad(&mut xf, STEP, |v| {
            let xv = Array2::from_shape_vec(x.raw_dim(), v.to_vec()).unwrap();
            net.forward(&xv).unwrap().0.sum()
        });
        worst = worst.max(grad_rel_err(&dx.iter().copied().collect::<Vec<_>>(), &nx));

        let mut pf = net.params().flatten();
        let mut probe = net.clone();
        let np = numeric_grad(&mut pf, STEP, |v| {
            probe.params_mut().set_flat(v).unwrap();
            probe.forward(&x).unwrap().0.sum()
        });
        worst = worst.max(grad_rel_err(&grads.flatten(), &np));
    }
    worst
}
