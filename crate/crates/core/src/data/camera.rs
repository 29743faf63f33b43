//! Pinhole camera model and world-to-image projection.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intrinsics plus optional world-to-camera extrinsics `[R | t]`, in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    /// Three rows of `[r0 r1 r2 t]`. Absent means skeletons are already in camera coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrinsics: Option<[[f64; 4]; 3]>,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, u0: f64, v0: f64) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            u0,
            v0,
            extrinsics: None,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.u0, self.v0]
            .iter()
            .chain(self.extrinsics.iter().flatten().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("camera parameters must be finite".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cam: Self = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Maps a world point into camera coordinates.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        match &self.extrinsics {
            None => p,
            Some(e) => {
                let r = Matrix3::new(
                    e[0][0], e[0][1], e[0][2], e[1][0], e[1][1], e[1][2], e[2][0], e[2][1],
                    e[2][2],
                );
                let t = Vector3::new(e[0][3], e[1][3], e[2][3]);
                let c = r * Vector3::from(p) + t;
                [c.x, c.y, c.z]
            }
        }
    }

    /// Projects a camera-frame point; `None` when the depth is not positive.
    pub fn project_camera_point(&self, c: [f64; 3]) -> Option<[f64; 2]> {
        (c[2] > 0.0).then(|| {
            [
                self.fx * c[0] / c[2] + self.u0,
                self.fy * c[1] / c[2] + self.v0,
            ]
        })
    }

    /// Maps every joint of `(F, J, 3)` world skeletons into camera coordinates.
    pub fn skeletons_to_camera(&self, joints: ArrayView3<f64>) -> Array3<f64> {
        let mut out = joints.to_owned();
        if self.extrinsics.is_some() {
            for mut p in out.lanes_mut(ndarray::Axis(2)) {
                let c = self.to_camera([p[0], p[1], p[2]]);
                p.assign(&ndarray::aview1(&c));
            }
        }
        out
    }
}

/// Projects `(F, J, 3)` world skeletons to `(F, J, 2)` pixels.
pub fn project_to_2d(joints: ArrayView3<f64>, camera: &CameraModel) -> Result<Array3<f64>> {
    let (frames, nj, dims) = joints.dim();
    if dims != 3 {
        return Err(Error::shape("(F, J, 3)", format!("{:?}", joints.dim())));
    }
    let mut out = Array3::zeros((frames, nj, 2));
    for f in 0..frames {
        for j in 0..nj {
            let c = camera.to_camera([joints[[f, j, 0]], joints[[f, j, 1]], joints[[f, j, 2]]]);
            let uv = camera.project_camera_point(c).ok_or_else(|| {
                Error::validation(format!(
                    "joint {j} in frame {f} has non-positive depth {}",
                    c[2]
                ))
            })?;
            out[[f, j, 0]] = uv[0];
            out[[f, j, 1]] = uv[1];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn projects_principal_point_on_axis() {
        let cam = CameraModel::new(500.0, 400.0, 320.0, 240.0).unwrap();
        let mut j = Array3::zeros((1, 2, 3));
        j[[0, 0, 2]] = 100.0;
        j[[0, 1, 0]] = 10.0;
        j[[0, 1, 1]] = -20.0;
        j[[0, 1, 2]] = 200.0;
        let uv = project_to_2d(j.view(), &cam).unwrap();
        assert_eq!([uv[[0, 0, 0]], uv[[0, 0, 1]]], [320.0, 240.0]);
        assert_eq!([uv[[0, 1, 0]], uv[[0, 1, 1]]], [345.0, 200.0]);
    }

    #[test]
    fn non_positive_depth_names_frame_and_joint() {
        let cam = CameraModel::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let mut j = Array3::from_elem((3, 21, 3), 1.0);
        j[[2, 7, 2]] = 0.0;
        let msg = project_to_2d(j.view(), &cam).unwrap_err().to_string();
        assert!(msg.contains("joint 7") && msg.contains("frame 2"), "{msg}");
    }

    #[test]
    fn extrinsics_apply_before_projection() {
        let mut cam = CameraModel::new(1.0, 1.0, 0.0, 0.0).unwrap();
        cam.extrinsics = Some([[0.0, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 10.0]]);
        assert_eq!(cam.to_camera([1.0, 2.0, 3.0]), [-2.0, 1.0, 13.0]);
    }

    #[test]
    fn toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("camera.toml");
        let mut cam = CameraModel::new(1395.749023, 1395.749023, 935.732544, 540.681030).unwrap();
        cam.extrinsics = Some([[1.0, 0.0, 0.0, 25.7], [0.0, 1.0, 0.0, 1.2], [0.0, 0.0, 1.0, 3.9]]);
        cam.save(&path).unwrap();
        assert_eq!(CameraModel::load(&path).unwrap(), cam);
        std::fs::write(&path, "fx = 1.0\nfy = 1.0\nu0 = 0.0\nv0 = 0.0\nskew = 0.0\n").unwrap();
        assert!(CameraModel::load(&path).is_err());
    }
}
