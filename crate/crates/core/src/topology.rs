//! The 21-joint hand skeleton: joints, bones, finger chains and pooling groups.
//!
//! Canonical ordering follows the FPHAB convention: the wrist first, then the
//! five MCP joints (thumb to pinky), then a PIP/DIP/TIP triple per finger.
//! Bones are directed root to tip. Bone `4f + k` is the `k`-th segment of
//! finger `f`, so every finger chain is `[4f, 4f+1, 4f+2, 4f+3]` and the first
//! bone of each chain is the palm bone `Wrist -> MCP`.

use std::path::Path;

use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 21;
pub const NUM_BONES: usize = 20;
pub const NUM_FINGERS: usize = 5;
pub const BONES_PER_FINGER: usize = 4;
pub const NUM_POOL_GROUPS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; NUM_FINGERS] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "Thumb",
            Finger::Index => "Index",
            Finger::Middle => "Middle",
            Finger::Ring => "Ring",
            Finger::Pinky => "Pinky",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JointKind {
    Wrist,
    Mcp,
    Pip,
    Dip,
    Tip,
}

impl JointKind {
    pub const ALL: [JointKind; 5] = [
        JointKind::Wrist,
        JointKind::Mcp,
        JointKind::Pip,
        JointKind::Dip,
        JointKind::Tip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JointKind::Wrist => "Wrist",
            JointKind::Mcp => "MCP",
            JointKind::Pip => "PIP",
            JointKind::Dip => "DIP",
            JointKind::Tip => "TIP",
        }
    }

    fn along_chain(k: usize) -> JointKind {
        [JointKind::Mcp, JointKind::Pip, JointKind::Dip, JointKind::Tip][k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bone {
    pub parent: usize,
    pub child: usize,
}

/// On-disk override schema. See `docs/topology.md` for the field layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub joint_names: Vec<String>,
    /// `[parent, child]` joint index pairs, directed root to tip.
    pub bones: Vec<[usize; 2]>,
    /// Five chains of four bone indices each, ordered thumb to pinky.
    pub finger_chains: Vec<Vec<usize>>,
    /// Pooling group per joint (21 -> 6).
    pub pool_groups: Vec<usize>,
}

/// Immutable hand skeleton description.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTopology {
    joint_names: Vec<String>,
    bones: Vec<Bone>,
    finger_chains: Vec<[usize; BONES_PER_FINGER]>,
    consecutive_pairs: Vec<(usize, usize)>,
    pool_groups: Vec<usize>,
    root: usize,
    palm_group: usize,
    joint_kinds: Vec<JointKind>,
    joint_fingers: Vec<Option<Finger>>,
}

impl HandTopology {
    /// The canonical FPHAB-ordered topology.
    pub fn canonical() -> Self {
        Self::from_file(canonical_file()).expect("canonical topology is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TopologyFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_file(file)
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            joint_names: self.joint_names.clone(),
            bones: self.bones.iter().map(|b| [b.parent, b.child]).collect(),
            finger_chains: self.finger_chains.iter().map(|c| c.to_vec()).collect(),
            pool_groups: self.pool_groups.clone(),
        }
    }

    pub fn from_file(file: TopologyFile) -> Result<Self> {
        let TopologyFile {
            joint_names,
            bones,
            finger_chains,
            pool_groups,
        } = file;

        if joint_names.len() != NUM_JOINTS {
            return Err(Error::validation(format!(
                "expected {NUM_JOINTS} joints, got {}",
                joint_names.len()
            )));
        }
        if bones.len() != NUM_BONES {
            return Err(Error::validation(format!(
                "expected {NUM_BONES} bones, got {}",
                bones.len()
            )));
        }
        let bones: Vec<Bone> = bones
            .into_iter()
            .map(|[parent, child]| Bone { parent, child })
            .collect();

        // Tree check: every joint but one is the child of exactly one bone.
        let mut parent_count = vec![0usize; NUM_JOINTS];
        for (i, b) in bones.iter().enumerate() {
            if b.parent >= NUM_JOINTS || b.child >= NUM_JOINTS || b.parent == b.child {
                return Err(Error::validation(format!("bone {i} has invalid joints {b:?}")));
            }
            parent_count[b.child] += 1;
        }
        let roots: Vec<usize> = (0..NUM_JOINTS).filter(|&j| parent_count[j] == 0).collect();
        if roots.len() != 1 || parent_count.iter().any(|&c| c > 1) {
            return Err(Error::validation(
                "bones must form a tree with a single root joint",
            ));
        }
        let root = roots[0];

        if finger_chains.len() != NUM_FINGERS {
            return Err(Error::validation(format!(
                "expected {NUM_FINGERS} finger chains, got {}",
                finger_chains.len()
            )));
        }
        let mut seen = vec![false; NUM_BONES];
        let mut chains = Vec::with_capacity(NUM_FINGERS);
        for (f, chain) in finger_chains.iter().enumerate() {
            let chain: [usize; BONES_PER_FINGER] = chain.as_slice().try_into().map_err(|_| {
                Error::validation(format!("finger chain {f} must have {BONES_PER_FINGER} bones"))
            })?;
            for &b in &chain {
                if b >= NUM_BONES || seen[b] {
                    return Err(Error::validation(format!(
                        "bone {b} is out of range or appears in more than one chain"
                    )));
                }
                seen[b] = true;
            }
            if bones[chain[0]].parent != root {
                return Err(Error::validation(format!(
                    "finger chain {f} does not start at the root joint"
                )));
            }
            for w in chain.windows(2) {
                if bones[w[0]].child != bones[w[1]].parent {
                    return Err(Error::validation(format!(
                        "finger chain {f}: bones {} and {} are not connected",
                        w[0], w[1]
                    )));
                }
            }
            chains.push(chain);
        }

        let mut joint_kinds = vec![JointKind::Wrist; NUM_JOINTS];
        let mut joint_fingers = vec![None; NUM_JOINTS];
        for (f, chain) in chains.iter().enumerate() {
            for (k, &b) in chain.iter().enumerate() {
                joint_kinds[bones[b].child] = JointKind::along_chain(k);
                joint_fingers[bones[b].child] = Some(Finger::ALL[f]);
            }
        }

        if pool_groups.len() != NUM_JOINTS {
            return Err(Error::validation(format!(
                "pool_groups must list {NUM_JOINTS} entries, got {}",
                pool_groups.len()
            )));
        }
        if pool_groups.iter().any(|&g| g >= NUM_POOL_GROUPS) {
            return Err(Error::validation("pool group index out of range"));
        }
        let palm_group = pool_groups[root];
        let mut group_sizes = [0usize; NUM_POOL_GROUPS];
        for &g in &pool_groups {
            group_sizes[g] += 1;
        }
        for (f, chain) in chains.iter().enumerate() {
            let mcp = bones[chain[0]].child;
            if pool_groups[mcp] != palm_group {
                return Err(Error::validation(format!(
                    "MCP joint of finger {f} must share the wrist's pool group"
                )));
            }
            let g = pool_groups[bones[chain[1]].child];
            if g == palm_group || chain[1..].iter().any(|&b| pool_groups[bones[b].child] != g) {
                return Err(Error::validation(format!(
                    "PIP/DIP/TIP of finger {f} must form their own pool group"
                )));
            }
        }
        if group_sizes[palm_group] != 1 + NUM_FINGERS
            || (0..NUM_POOL_GROUPS)
                .filter(|&g| g != palm_group)
                .any(|g| group_sizes[g] != 3)
        {
            return Err(Error::validation(
                "pool groups must be one 6-joint palm group and five 3-joint finger groups",
            ));
        }

        let consecutive_pairs = chains
            .iter()
            .flat_map(|c| c.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>())
            .collect();

        Ok(Self {
            joint_names,
            bones,
            finger_chains: chains,
            consecutive_pairs,
            pool_groups,
            root,
            palm_group,
            joint_kinds,
            joint_fingers,
        })
    }

    /// Relabels joints: old joint `j` becomes new joint `perm[j]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != NUM_JOINTS {
            return Err(Error::shape(NUM_JOINTS, perm.len()));
        }
        let mut names = vec![String::new(); NUM_JOINTS];
        let mut groups = vec![0; NUM_JOINTS];
        for (old, &new) in perm.iter().enumerate() {
            if new >= NUM_JOINTS {
                return Err(Error::validation("permutation index out of range"));
            }
            names[new] = self.joint_names[old].clone();
            groups[new] = self.pool_groups[old];
        }
        Self::from_file(TopologyFile {
            joint_names: names,
            bones: self
                .bones
                .iter()
                .map(|b| [perm[b.parent], perm[b.child]])
                .collect(),
            finger_chains: self.finger_chains.iter().map(|c| c.to_vec()).collect(),
            pool_groups: groups,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn num_bones(&self) -> usize {
        self.bones.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn finger_chains(&self) -> &[[usize; BONES_PER_FINGER]] {
        &self.finger_chains
    }

    /// Adjacent bone pairs on the same finger (15 for the hand).
    pub fn consecutive_pairs(&self) -> &[(usize, usize)] {
        &self.consecutive_pairs
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Joint -> pool group for the 21 -> 6 reduction.
    pub fn pool_groups(&self) -> &[usize] {
        &self.pool_groups
    }

    /// Group -> coarse node for the 6 -> 1 reduction.
    pub fn pool_groups_6to1(&self) -> [usize; NUM_POOL_GROUPS] {
        [0; NUM_POOL_GROUPS]
    }

    pub fn palm_group(&self) -> usize {
        self.palm_group
    }

    pub fn joint_kind(&self, joint: usize) -> JointKind {
        self.joint_kinds[joint]
    }

    /// `None` for the wrist.
    pub fn joint_finger(&self, joint: usize) -> Option<Finger> {
        self.joint_fingers[joint]
    }

    /// Number of bones touching each joint.
    pub fn joint_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_joints()];
        for b in &self.bones {
            deg[b.parent] += 1;
            deg[b.child] += 1;
        }
        deg
    }

    /// Root-to-tip bone vectors, `(T, N, 3) -> (T, P, 3)`.
    pub fn bone_vectors(&self, pose: ArrayView3<f64>) -> Result<Array3<f64>> {
        let (frames, joints, dims) = pose.dim();
        if joints != self.num_joints() || dims != 3 {
            return Err(Error::shape(
                format!("(T, {}, 3)", self.num_joints()),
                format!("({frames}, {joints}, {dims})"),
            ));
        }
        if pose.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("pose contains non-finite coordinates"));
        }
        let mut out = Array3::zeros((frames, self.num_bones(), 3));
        for t in 0..frames {
            for (b, bone) in self.bones.iter().enumerate() {
                for d in 0..3 {
                    out[[t, b, d]] = pose[[t, bone.child, d]] - pose[[t, bone.parent, d]];
                }
            }
        }
        Ok(out)
    }
}

impl Default for HandTopology {
    fn default() -> Self {
        Self::canonical()
    }
}

fn canonical_file() -> TopologyFile {
    let mut joint_names = vec!["Wrist".to_string()];
    for f in Finger::ALL {
        joint_names.push(format!("{}MCP", f.name()));
    }
    for f in Finger::ALL {
        for k in ["PIP", "DIP", "TIP"] {
            joint_names.push(format!("{}{k}", f.name()));
        }
    }

    let mut bones = Vec::with_capacity(NUM_BONES);
    let mut finger_chains = Vec::with_capacity(NUM_FINGERS);
    let mut pool_groups = vec![0; NUM_JOINTS];
    for f in 0..NUM_FINGERS {
        let mcp = 1 + f;
        let pip = 6 + 3 * f;
        let path = [0, mcp, pip, pip + 1, pip + 2];
        for w in path.windows(2) {
            bones.push([w[0], w[1]]);
        }
        finger_chains.push((4 * f..4 * f + 4).collect());
        for j in pip..pip + 3 {
            pool_groups[j] = 1 + f;
        }
    }
    TopologyFile {
        joint_names,
        bones,
        finger_chains,
        pool_groups,
    }
}
