mod common;

use common::*;
use lghand::data::{
    build_windows, generate_synthetic, make_windows, project_to_2d, split_train_eval, CameraModel,
    SkeletonSequence,
};
use lghand::graph::{build_st_graph, Level};
use lghand::losses::{
    angle_loss, direction_loss, finger_length_loss, pose_loss, FingerLengthMode,
};
use lghand::metrics::{mpjpe, pck_curve};
use lghand::nn::{LocalToGlobalNet, NetConfig};
use lghand::HandTopology;
use ndarray::{s, Array2, Array3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_losses(gt: &Array3<f64>, pred: &Array3<f64>, topo: &HandTopology) -> [f64; 4] {
    let (g, p) = (gt.view(), pred.view());
    [
        pose_loss(g, p).unwrap(),
        finger_length_loss(g, p, topo, FingerLengthMode::Chain).unwrap(),
        angle_loss(g, p, topo).unwrap(),
        direction_loss(g, p, topo).unwrap(),
    ]
}

fn axis_strategy() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
        .prop_filter("nonzero axis", |a| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rigid_motion_of_both_leaves_losses_unchanged(
        seed in any::<u64>(),
        axis in axis_strategy(),
        angle in -3.1..3.1f64,
        shift in [-200.0..200.0f64, -200.0..200.0f64, -200.0..200.0f64],
    ) {
        let topo = HandTopology::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_pose(&mut rng, 2);
        let pred = random_pose(&mut rng, 2);
        let r = rotation(axis, angle);
        let before = all_losses(&gt, &pred, &topo);
        let after = all_losses(&rigid(&gt, r, shift), &rigid(&pred, r, shift), &topo);
        for (a, b) in before.iter().zip(after) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn angle_loss_ignores_rotating_prediction(
        seed in any::<u64>(), axis in axis_strategy(), angle in -3.1..3.1f64,
    ) {
        let topo = HandTopology::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_pose(&mut rng, 3);
        let pred = rigid(&gt, rotation(axis, angle), [5.0, -3.0, 40.0]);
        prop_assert!(angle_loss(gt.view(), pred.view(), &topo).unwrap() < 1e-8);
    }

    #[test]
    fn angle_and_direction_ignore_scaling_prediction(seed in any::<u64>(), k in 0.2..5.0f64) {
        let topo = HandTopology::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_pose(&mut rng, 1);
        let pred = random_pose(&mut rng, 1);
        let scaled = &pred * k;
        let a = all_losses(&gt, &pred, &topo);
        let b = all_losses(&gt, &scaled, &topo);
        prop_assert!((a[2] - b[2]).abs() < 1e-9);
        prop_assert!((a[3] - b[3]).abs() < 1e-9);
        if (k - 1.0).abs() > 0.05 {
            prop_assert!((a[0] - b[0]).abs() > 1e-6);
            prop_assert!((a[1] - b[1]).abs() > 1e-6);
        }
    }

    #[test]
    fn losses_are_nonnegative_and_vanish_on_self(seed in any::<u64>()) {
        let topo = HandTopology::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_pose(&mut rng, 2);
        let pred = random_pose(&mut rng, 2);
        prop_assert!(all_losses(&gt, &pred, &topo).iter().all(|&v| v >= 0.0));
        prop_assert_eq!(all_losses(&gt, &gt, &topo), [0.0; 4]);
    }

    #[test]
    fn bone_vectors_telescope_and_rotate(seed in any::<u64>(), axis in axis_strategy(), angle in -3.0..3.0f64) {
        let topo = HandTopology::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose = random_pose(&mut rng, 2);
        let bones = topo.bone_vectors(pose.view()).unwrap();
        for t in 0..2 {
            for (f, chain) in topo.finger_chains().iter().enumerate() {
                let tip = 8 + 3 * f;
                for d in 0..3 {
                    let sum: f64 = chain.iter().map(|&b| bones[[t, b, d]]).sum();
                    prop_assert!((sum - (pose[[t, tip, d]] - pose[[t, 0, d]])).abs() < 1e-9);
                }
            }
        }
        let r = rotation(axis, angle);
        let moved = topo.bone_vectors(rigid(&pose, r, [10.0, 20.0, 30.0]).view()).unwrap();
        let rotated = rigid(&bones, r, [0.0; 3]);
        for (a, b) in moved.iter().zip(rotated.iter()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn window_count_formula(len in 0usize..40, half in 0usize..6) {
        let t = 2 * half + 1;
        let cam = CameraModel::new(500.0, 500.0, 0.0, 0.0).unwrap();
        let joints = Array3::from_shape_fn((len, 21, 3), |(f, j, d)| {
            if d == 2 { 400.0 } else { (f + j) as f64 }
        });
        let seq = SkeletonSequence::new((0..len as u64).collect(), joints).unwrap();
        let samples = build_windows(&[seq], &cam, t, 0.0, 0).unwrap();
        prop_assert_eq!(samples.len(), (len + 1).saturating_sub(t));
    }

    #[test]
    fn mpjpe_is_a_metric(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || Array3::from_shape_fn((k, 21, 3), |_| rng.random_range(-50.0..50.0));
        let (a, b, c) = (draw(), draw(), draw());
        let ab = mpjpe(a.view(), b.view()).unwrap();
        prop_assert_eq!(ab, mpjpe(b.view(), a.view()).unwrap());
        let ac = mpjpe(a.view(), c.view()).unwrap();
        let bc = mpjpe(b.view(), c.view()).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn pck_is_monotone(seed in any::<u64>(), mut th in prop::collection::vec(0.0..60.0f64, 1..20)) {
        th.sort_by(f64::total_cmp);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = Array3::from_shape_fn((8, 21, 3), |_| rng.random_range(-50.0..50.0));
        let pred = &gt + &Array3::from_shape_fn((8, 21, 3), |_| rng.random_range(-30.0..30.0));
        let curve = pck_curve(gt.view(), pred.view(), &th).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(curve.iter().all(|&f| (0.0..=1.0).contains(&f)));
    }

    #[test]
    fn synthetic_bones_are_rigid(seed in any::<u64>()) {
        let topo = HandTopology::canonical();
        for (seq, _) in generate_synthetic(2, 12, seed) {
            let bones = topo.bone_vectors(seq.joints.view()).unwrap();
            for b in 0..20 {
                let len = |f: usize| (0..3).map(|d| bones[[f, b, d]].powi(2)).sum::<f64>().sqrt();
                let l0 = len(0);
                prop_assert!(l0 >= 20.0 - 1e-9 && l0 <= 90.0 + 1e-9);
                for f in 1..12 {
                    prop_assert!((len(f) - l0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn reprojection_reproduces_inputs(seed in any::<u64>(), half in 0usize..3) {
        let t = 2 * half + 1;
        for (seq, cam) in generate_synthetic(1, 9, seed) {
            let samples = build_windows(std::slice::from_ref(&seq), &cam, t, 0.0, 0).unwrap();
            for s in &samples {
                let abs = s.absolute_target().insert_axis(ndarray::Axis(0));
                let uv = project_to_2d(abs.view(), &cam).unwrap();
                let pixels = s.denormalized_input();
                let center = pixels.slice(s![half, .., ..]);
                for (a, b) in uv.slice(s![0, .., ..]).iter().zip(center.iter()) {
                    prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn split_ignores_input_order(seed in any::<u64>()) {
        let mut seqs: Vec<SkeletonSequence> =
            generate_synthetic(10, 1, 1).into_iter().map(|(s, _)| s).collect();
        let reference = split_train_eval(seqs.clone()).unwrap();
        seqs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(split_train_eval(seqs).unwrap(), reference);
    }
}

#[test]
fn forward_is_permutation_consistent() {
    let topo = HandTopology::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = NetConfig {
        widths: [4, 4, 4],
        convs_per_scale: 1,
        embed: 3,
        ..NetConfig::default()
    };
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..21).collect();
        perm.shuffle(&mut rng);
        let relabeled = topo.relabel(&perm).unwrap();
        let mut net = LocalToGlobalNet::new(cfg.clone(), topo.clone(), 5).unwrap();
        let mut pnet = LocalToGlobalNet::new(cfg.clone(), relabeled, 5).unwrap();
        let scale = net.non_local_block().scale_id();
        net.params_mut().get_mut(scale)[[0, 0]] = 0.7;
        pnet.params_mut().get_mut(scale)[[0, 0]] = 0.7;
        assert_eq!(net.params().flatten(), pnet.params().flatten());
        let input = Array3::from_shape_fn((3, 21, 2), |_| rng.random_range(-1.5..1.5));
        let mut pinput = Array3::zeros((3, 21, 2));
        for t in 0..3 {
            for j in 0..21 {
                for d in 0..2 {
                    pinput[[t, perm[j], d]] = input[[t, j, d]];
                }
            }
        }
        let out = net.predict(input.view()).unwrap();
        let pout = pnet.predict(pinput.view()).unwrap();
        let mut expected = Array2::zeros((21, 3));
        for j in 0..21 {
            expected.row_mut(perm[j]).assign(&out.row(j));
        }
        for (a, b) in pout.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

/// Largest singular value by power iteration on `A^T A`.
fn spectral_norm(a: &Array2<f64>) -> f64 {
    let mut v = ndarray::Array1::from_shape_fn(a.ncols(), |i| 1.0 + 0.1 * i as f64);
    v /= v.dot(&v).sqrt();
    let mut sigma2 = 0.0;
    for _ in 0..500 {
        let w = a.t().dot(&a.dot(&v));
        sigma2 = v.dot(&w);
        let n = w.dot(&w).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        v = w / n;
    }
    sigma2.sqrt()
}

#[test]
fn normalized_partitions_are_contractions() {
    let topo = HandTopology::canonical();
    for level in [Level::Joints, Level::Regions, Level::Hand] {
        for frames in [1, 3, 5] {
            let g = build_st_graph(&topo, frames, level).unwrap();
            for n in g.normalized_partitions() {
                assert!(spectral_norm(n) <= 1.0 + 1e-9);
            }
        }
    }
}

#[test]
fn make_windows_centers_frames() {
    let data = generate_synthetic(1, 7, 3);
    let (seq, cam) = &data[0];
    let uv = project_to_2d(seq.joints.view(), cam).unwrap();
    let cam3d = cam.skeletons_to_camera(seq.joints.view());
    let w = make_windows(uv.view(), seq, cam3d.view(), 5, 0.0, 0).unwrap();
    let centers: Vec<usize> = w.iter().map(|s| s.meta.center).collect();
    assert_eq!(centers, vec![2, 3, 4]);
}
