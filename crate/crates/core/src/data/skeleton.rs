//! FPHAB-style skeleton text files.
//!
//! One frame per line: an integer frame index followed by `joints * dims`
//! whitespace-separated floats (joint-major, `x y [z]` per joint). 3D files
//! carry 63 values per line, 2D files 42.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array3, ArrayView3};

use crate::error::{Error, Result};
use crate::topology::NUM_JOINTS;

/// A 3D hand skeleton sequence in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub subject: String,
    pub action: String,
    /// Sequence number within the action (the directory name in FPHAB).
    pub sequence: Option<u32>,
    pub frame_indices: Vec<u64>,
    /// `(frames, 21, 3)`.
    pub joints: Array3<f64>,
}

impl SkeletonSequence {
    pub fn new(frame_indices: Vec<u64>, joints: Array3<f64>) -> Result<Self> {
        let seq = Self {
            subject: String::new(),
            action: String::new(),
            sequence: None,
            frame_indices,
            joints,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn with_ids(mut self, subject: &str, action: &str, sequence: Option<u32>) -> Self {
        self.subject = subject.to_string();
        self.action = action.to_string();
        self.sequence = sequence;
        self
    }

    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let (frames, joints, dims) = self.joints.dim();
        if joints != NUM_JOINTS || dims != 3 || frames != self.frame_indices.len() {
            return Err(Error::shape(
                format!("({}, {NUM_JOINTS}, 3)", self.frame_indices.len()),
                format!("{:?}", self.joints.dim()),
            ));
        }
        if self.frame_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("frame indices must be strictly increasing"));
        }
        if self.joints.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("skeleton contains non-finite coordinates"));
        }
        Ok(())
    }
}

/// Parses frames of `dims`-dimensional joints. `source` names the input in errors.
pub fn parse_frames<R: BufRead>(
    reader: R,
    dims: usize,
    source: &str,
) -> Result<(Vec<u64>, Array3<f64>)> {
    let expected = NUM_JOINTS * dims;
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: lineno,
            message,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else {
            continue;
        };
        let index: u64 = first
            .parse()
            .map_err(|_| err(format!("invalid frame index `{first}`")))?;
        let before = values.len();
        for tok in tokens {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(format!("non-numeric token `{tok}`")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value `{tok}`")));
            }
            values.push(v);
        }
        let count = values.len() - before;
        if count != expected {
            return Err(err(format!(
                "expected {expected} coordinates after the frame index, found {count}"
            )));
        }
        if let Some(&last) = indices.last() {
            if index == last {
                return Err(err(format!("duplicate frame index {index}")));
            }
            if index < last {
                return Err(err(format!("frame index {index} is not increasing")));
            }
        }
        indices.push(index);
    }
    let frames = indices.len();
    let joints = Array3::from_shape_vec((frames, NUM_JOINTS, dims), values)
        .expect("row lengths checked");
    Ok((indices, joints))
}

/// Parses a 3D skeleton file (frame index + 63 floats per line).
pub fn parse_fphab_skeleton<R: BufRead>(reader: R, source: &str) -> Result<SkeletonSequence> {
    let (frame_indices, joints) = parse_frames(reader, 3, source)?;
    SkeletonSequence::new(frame_indices, joints)
}

pub fn read_skeleton_file(path: impl AsRef<Path>) -> Result<SkeletonSequence> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_fphab_skeleton(std::io::BufReader::new(file), &path.display().to_string())
}

/// Formats frames in the skeleton text format; values use shortest round-trip notation.
pub fn format_frames(indices: &[u64], joints: ArrayView3<f64>) -> String {
    let mut out = String::new();
    for (f, idx) in indices.iter().enumerate() {
        write!(out, "{idx}").unwrap();
        for v in joints.index_axis(ndarray::Axis(0), f).iter() {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_fphab_skeleton<W: Write>(seq: &SkeletonSequence, mut writer: W) -> std::io::Result<()> {
    writer.write_all(format_frames(&seq.frame_indices, seq.joints.view()).as_bytes())
}

pub fn write_skeleton_file(path: impl AsRef<Path>, seq: &SkeletonSequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_frames(&seq.frame_indices, seq.joints.view()))
        .map_err(|e| Error::io(path, e))
}
