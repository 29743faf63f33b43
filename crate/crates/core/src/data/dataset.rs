//! Dataset directories laid out as `root/Subject/Action/SequenceNumber/skeleton.txt`
//! with a `camera.toml` at the root.

use std::path::{Path, PathBuf};

use super::camera::CameraModel;
use super::skeleton::{read_skeleton_file, write_skeleton_file, SkeletonSequence};
use crate::error::{Error, Result};

pub const SKELETON_FILE: &str = "skeleton.txt";
pub const CAMERA_FILE: &str = "camera.toml";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub camera: CameraModel,
    /// Sorted by (subject, action, sequence).
    pub sequences: Vec<SkeletonSequence>,
}

fn sorted_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads every skeleton file under `root`. `camera` overrides `root/camera.toml`.
pub fn load_dataset(root: impl AsRef<Path>, camera: Option<&Path>) -> Result<Dataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let camera_path = camera.map(Path::to_path_buf).unwrap_or_else(|| root.join(CAMERA_FILE));
    let camera = CameraModel::load(&camera_path)?;
    let mut sequences = Vec::new();
    for subject in sorted_dirs(root)? {
        for action in sorted_dirs(&subject)? {
            for seq_dir in sorted_dirs(&action)? {
                let file = seq_dir.join(SKELETON_FILE);
                if !file.is_file() {
                    continue;
                }
                let number = dir_name(&seq_dir).parse::<u32>().ok();
                let seq = read_skeleton_file(&file)?.with_ids(
                    &dir_name(&subject),
                    &dir_name(&action),
                    number,
                );
                sequences.push(seq);
            }
        }
    }
    if sequences.is_empty() {
        return Err(Error::validation(format!(
            "no {SKELETON_FILE} files found under {}",
            root.display()
        )));
    }
    sequences.sort_by(|a, b| {
        (&a.subject, &a.action, a.sequence).cmp(&(&b.subject, &b.action, b.sequence))
    });
    Ok(Dataset { camera, sequences })
}

/// Path of a sequence's skeleton file under `root`.
pub fn sequence_path(root: &Path, seq: &SkeletonSequence) -> PathBuf {
    let number = seq.sequence.map(|n| n.to_string()).unwrap_or_else(|| "0".into());
    root.join(&seq.subject).join(&seq.action).join(number).join(SKELETON_FILE)
}

/// Writes `sequences` and `camera` under `root`; returns the skeleton file paths.
pub fn write_dataset(
    root: impl AsRef<Path>,
    sequences: &[SkeletonSequence],
    camera: &CameraModel,
) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    camera.save(root.join(CAMERA_FILE))?;
    let mut paths = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let path = sequence_path(root, seq);
        let dir = path.parent().expect("skeleton path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_skeleton_file(&path, seq)?;
        paths.push(path);
    }
    Ok(paths)
}
