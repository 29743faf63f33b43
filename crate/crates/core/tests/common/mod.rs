//! Loop-based reference implementations and random generators shared by the
//! integration tests. Only `checks` calls the library code under test.

#![allow(dead_code)]

pub mod checks;

use ndarray::{Array2, Array3};
use rand::Rng;

/// Canonical bone list as (parent, child): finger f walks 0 -> 1+f -> 6+3f -> 7+3f -> 8+3f.
pub fn bones() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for f in 0..5 {
        let chain = [0, 1 + f, 6 + 3 * f, 7 + 3 * f, 8 + 3 * f];
        for k in 0..4 {
            out.push((chain[k], chain[k + 1]));
        }
    }
    out
}

fn bone_vec(p: &Array3<f64>, t: usize, parent: usize, child: usize) -> [f64; 3] {
    [
        p[[t, child, 0]] - p[[t, parent, 0]],
        p[[t, child, 1]] - p[[t, parent, 1]],
        p[[t, child, 2]] - p[[t, parent, 2]],
    ]
}

fn len3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// arccos of the dot ratio clamped to [-1 + 1e-7, 1 - 1e-7]; zero for near-zero vectors.
pub fn oracle_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (na, nb) = (len3(a), len3(b));
    if na < 1e-8 || nb < 1e-8 {
        return 0.0;
    }
    let r = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
    r.clamp(-1.0 + 1e-7, 1.0 - 1e-7).acos()
}

pub fn oracle_pose(gt: &Array3<f64>, pred: &Array3<f64>) -> f64 {
    let (frames, joints, _) = gt.dim();
    let mut s = 0.0;
    for t in 0..frames {
        for j in 0..joints {
            let mut d2 = 0.0;
            for c in 0..3 {
                d2 += (gt[[t, j, c]] - pred[[t, j, c]]).powi(2);
            }
            s += d2.sqrt();
        }
    }
    s
}

pub fn oracle_finger(gt: &Array3<f64>, pred: &Array3<f64>) -> f64 {
    let b = bones();
    let mut s = 0.0;
    for t in 0..gt.dim().0 {
        for f in 0..5 {
            let (mut lg, mut lp) = (0.0, 0.0);
            for k in 0..4 {
                let (p, c) = b[4 * f + k];
                lg += len3(bone_vec(gt, t, p, c));
                lp += len3(bone_vec(pred, t, p, c));
            }
            s += (lg - lp).abs();
        }
    }
    s
}

pub fn oracle_angle_loss(gt: &Array3<f64>, pred: &Array3<f64>) -> f64 {
    let b = bones();
    let mut s = 0.0;
    for t in 0..gt.dim().0 {
        for f in 0..5 {
            for k in 0..3 {
                let (i, j) = (b[4 * f + k], b[4 * f + k + 1]);
                let ag = oracle_angle(bone_vec(gt, t, i.0, i.1), bone_vec(gt, t, j.0, j.1));
                let ap = oracle_angle(bone_vec(pred, t, i.0, i.1), bone_vec(pred, t, j.0, j.1));
                s += (ag - ap).abs();
            }
        }
    }
    s
}

pub fn oracle_direction(gt: &Array3<f64>, pred: &Array3<f64>) -> f64 {
    let mut s = 0.0;
    for t in 0..gt.dim().0 {
        for &(p, c) in &bones() {
            s += oracle_angle(bone_vec(gt, t, p, c), bone_vec(pred, t, p, c));
        }
    }
    s
}

/// Uniform joints in [-100, 100] mm, redrawn until every bone is at least 1 mm long.
pub fn random_pose<R: Rng>(rng: &mut R, frames: usize) -> Array3<f64> {
    loop {
        let p = Array3::from_shape_fn((frames, 21, 3), |_| rng.random_range(-100.0..100.0));
        let ok = (0..frames).all(|t| bones().iter().all(|&(a, b)| len3(bone_vec(&p, t, a, b)) >= 1.0));
        if ok {
            return p;
        }
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// `a_ij / sqrt(rowdeg_i * coldeg_j)`, zero where either degree vanishes.
pub fn oracle_normalize(a: &Array2<f64>) -> Array2<f64> {
    let m = a.nrows();
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            if a[[i, j]] == 0.0 {
                continue;
            }
            let mut ri = 0.0;
            let mut cj = 0.0;
            for k in 0..m {
                ri += a[[i, k]];
                cj += a[[k, j]];
            }
            out[[i, j]] = a[[i, j]] / (ri * cj).sqrt();
        }
    }
    out
}

/// `Z[i][o] = sum_k sum_j sum_c Â_k[i][j] X[j][c] Θ_k[c][o]` with explicit loops.
pub fn oracle_graph_conv(parts: &[Array2<f64>], x: &Array2<f64>, thetas: &[Array2<f64>]) -> Array2<f64> {
    let m = x.nrows();
    let cin = x.ncols();
    let cout = thetas[0].ncols();
    let mut z = Array2::zeros((m, cout));
    for (a, theta) in parts.iter().zip(thetas) {
        let an = oracle_normalize(a);
        for i in 0..m {
            for j in 0..m {
                for c in 0..cin {
                    for o in 0..cout {
                        z[[i, o]] += an[[i, j]] * x[[j, c]] * theta[[c, o]];
                    }
                }
            }
        }
    }
    z
}

/// Per-group per-channel maximum; `group_of[j]` maps each fine node of one frame.
pub fn oracle_max_pool(x: &Array2<f64>, group_of: &[usize], groups: usize) -> Array2<f64> {
    let n = group_of.len();
    let frames = x.nrows() / n;
    let mut out = Array2::from_elem((frames * groups, x.ncols()), f64::NEG_INFINITY);
    for t in 0..frames {
        for j in 0..n {
            for c in 0..x.ncols() {
                let o = &mut out[[t * groups + group_of[j], c]];
                *o = o.max(x[[t * n + j, c]]);
            }
        }
    }
    out
}

pub fn oracle_upsample(x: &Array2<f64>, group_of: &[usize], groups: usize) -> Array2<f64> {
    let n = group_of.len();
    let frames = x.nrows() / groups;
    Array2::from_shape_fn((frames * n, x.ncols()), |(r, c)| {
        x[[(r / n) * groups + group_of[r % n], c]]
    })
}

pub fn oracle_mpjpe(gt: &Array3<f64>, pred: &Array3<f64>) -> f64 {
    let (k, j, _) = gt.dim();
    let mut s = 0.0;
    for a in 0..k {
        for b in 0..j {
            let mut d = 0.0;
            for c in 0..3 {
                d += (gt[[a, b, c]] - pred[[a, b, c]]).powi(2);
            }
            s += d.sqrt();
        }
    }
    s / (k * j) as f64
}

pub fn oracle_pck(gt: &Array3<f64>, pred: &Array3<f64>, thresholds: &[f64]) -> Vec<f64> {
    let (k, j, _) = gt.dim();
    let errs: Vec<f64> = (0..k)
        .map(|a| {
            let mut s = 0.0;
            for b in 0..j {
                let mut d = 0.0;
                for c in 0..3 {
                    d += (gt[[a, b, c]] - pred[[a, b, c]]).powi(2);
                }
                s += d.sqrt();
            }
            s / j as f64
        })
        .collect();
    thresholds
        .iter()
        .map(|&t| {
            let mut count = 0;
            for &e in &errs {
                if e < t {
                    count += 1;
                }
            }
            count as f64 / k as f64
        })
        .collect()
}

/// Relative error between two gradient vectors.
pub fn grad_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_grad(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(x);
        x[i] = orig - h;
        let down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Rotation matrix from a unit axis and an angle (Rodrigues).
pub fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = len3(axis);
    let [x, y, z] = axis.map(|v| v / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

pub fn rigid(p: &Array3<f64>, r: [[f64; 3]; 3], t: [f64; 3]) -> Array3<f64> {
    let mut out = p.clone();
    let (frames, joints, _) = p.dim();
    for f in 0..frames {
        for j in 0..joints {
            for a in 0..3 {
                out[[f, j, a]] = (0..3).map(|b| r[a][b] * p[[f, j, b]]).sum::<f64>() + t[a];
            }
        }
    }
    out
}
