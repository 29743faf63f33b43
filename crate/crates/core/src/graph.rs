//! Spatial-temporal graphs over a window of skeleton frames.
//!
//! Node `t * n + j` is joint (or group) `j` of frame `t`. Spatial edges copy the
//! per-frame skeleton into every frame, temporal edges link the same node in
//! consecutive frames. The self-loop-augmented adjacency is split into five
//! neighbor classes which always sum back to `A + I` exactly.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::topology::{HandTopology, NUM_POOL_GROUPS};

/// Graph resolution: joints, hand regions, or the whole hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Joints,
    Regions,
    Hand,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Joints, Level::Regions, Level::Hand];

    /// Parses the per-frame node count used on the command line and in docs.
    pub fn from_node_count(n: usize) -> Result<Self> {
        match n {
            21 => Ok(Level::Joints),
            6 => Ok(Level::Regions),
            1 => Ok(Level::Hand),
            other => Err(Error::validation(format!(
                "unknown graph level {other}; expected 21, 6 or 1"
            ))),
        }
    }

    pub fn nodes_per_frame(self, topo: &HandTopology) -> usize {
        match self {
            Level::Joints => topo.num_joints(),
            Level::Regions => NUM_POOL_GROUPS,
            Level::Hand => 1,
        }
    }
}

/// The five neighbor classes, in partition order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NeighborClass {
    Central,
    Forward,
    Backward,
    Closer,
    Further,
}

pub const NUM_CLASSES: usize = 5;

impl NeighborClass {
    pub const ALL: [NeighborClass; NUM_CLASSES] = [
        NeighborClass::Central,
        NeighborClass::Forward,
        NeighborClass::Backward,
        NeighborClass::Closer,
        NeighborClass::Further,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NeighborClass::Central => "central",
            NeighborClass::Forward => "forward",
            NeighborClass::Backward => "backward",
            NeighborClass::Closer => "closer",
            NeighborClass::Further => "further",
        }
    }
}

/// Per-frame spatial structure: undirected edges and a root node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSkeleton {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
}

impl SpatialSkeleton {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>, root: usize) -> Result<Self> {
        if num_nodes == 0 || root >= num_nodes {
            return Err(Error::validation("skeleton needs at least one node and a valid root"));
        }
        if let Some(e) = edges
            .iter()
            .find(|(a, b)| *a >= num_nodes || *b >= num_nodes || a == b)
        {
            return Err(Error::validation(format!("invalid skeleton edge {e:?}")));
        }
        Ok(Self {
            num_nodes,
            edges,
            root,
        })
    }

    /// Skeleton at a pooling level: the bone tree, a palm-hub star, or a single node.
    pub fn for_level(topo: &HandTopology, level: Level) -> Self {
        match level {
            Level::Joints => Self {
                num_nodes: topo.num_joints(),
                edges: topo.bones().iter().map(|b| (b.parent, b.child)).collect(),
                root: topo.root(),
            },
            Level::Regions => {
                let hub = topo.palm_group();
                Self {
                    num_nodes: NUM_POOL_GROUPS,
                    edges: (0..NUM_POOL_GROUPS)
                        .filter(|&g| g != hub)
                        .map(|g| (hub, g))
                        .collect(),
                    root: hub,
                }
            }
            Level::Hand => Self {
                num_nodes: 1,
                edges: Vec::new(),
                root: 0,
            },
        }
    }

    /// Breadth-first hop distance from the root; `None` for unreachable nodes.
    pub fn hop_distances(&self) -> Vec<Option<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut dist = vec![None; self.num_nodes];
        dist[self.root] = Some(0);
        let mut queue = std::collections::VecDeque::from([self.root]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap();
            for &u in &adj[v] {
                if dist[u].is_none() {
                    dist[u] = Some(d + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }
}

/// Spatial-temporal graph with its neighbor partitions.
#[derive(Debug, Clone)]
pub struct StGraph {
    num_frames: usize,
    skeleton: SpatialSkeleton,
    adjacency: Array2<f64>,
    partitions: Vec<Array2<f64>>,
    normalized: Vec<Array2<f64>>,
}

/// Builds the graph for `frames` frames of `topo` at `level`.
pub fn build_st_graph(topo: &HandTopology, frames: usize, level: Level) -> Result<StGraph> {
    StGraph::from_skeleton(SpatialSkeleton::for_level(topo, level), frames)
}

impl StGraph {
    pub fn from_skeleton(skeleton: SpatialSkeleton, frames: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::validation("graph needs at least one frame"));
        }
        let n = skeleton.num_nodes;
        let m = n * frames;
        let mut adjacency = Array2::zeros((m, m));
        for t in 0..frames {
            for &(a, b) in &skeleton.edges {
                adjacency[[t * n + a, t * n + b]] = 1.0;
                adjacency[[t * n + b, t * n + a]] = 1.0;
            }
            if t + 1 < frames {
                for j in 0..n {
                    adjacency[[t * n + j, (t + 1) * n + j]] = 1.0;
                    adjacency[[(t + 1) * n + j, t * n + j]] = 1.0;
                }
            }
        }
        let mut graph = Self {
            num_frames: frames,
            skeleton,
            adjacency,
            partitions: Vec::new(),
            normalized: Vec::new(),
        };
        graph.partitions = partition_neighbors(&graph)?;
        graph.normalized = graph
            .partitions
            .iter()
            .map(normalize_partition)
            .collect::<Result<_>>()?;
        Ok(graph)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn nodes_per_frame(&self) -> usize {
        self.skeleton.num_nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.num_frames * self.skeleton.num_nodes
    }

    pub fn skeleton(&self) -> &SpatialSkeleton {
        &self.skeleton
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    /// `A + I`.
    pub fn adjacency_with_self_loops(&self) -> Array2<f64> {
        &self.adjacency + &Array2::<f64>::eye(self.num_nodes())
    }

    pub fn partition(&self, class: NeighborClass) -> &Array2<f64> {
        &self.partitions[class.index()]
    }

    pub fn partitions(&self) -> &[Array2<f64>] {
        &self.partitions
    }

    pub fn normalized(&self, class: NeighborClass) -> &Array2<f64> {
        &self.normalized[class.index()]
    }

    pub fn normalized_partitions(&self) -> &[Array2<f64>] {
        &self.normalized
    }

    /// Nonzero entries of the normalized partitions as a sparse operator.
    pub fn sparse_operator(&self) -> SparsePartitions {
        let mut entries = Vec::new();
        for (k, mat) in self.normalized.iter().enumerate() {
            for ((row, col), &w) in mat.indexed_iter() {
                if w != 0.0 {
                    entries.push(SparseEntry {
                        row,
                        col,
                        class: k,
                        weight: w,
                    });
                }
            }
        }
        SparsePartitions {
            num_nodes: self.num_nodes(),
            entries,
        }
    }

    /// Writes adjacency, partitions and normalized partitions as text matrices.
    pub fn export_debug(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix_text(dir.join("adjacency.txt"), &self.adjacency)?;
        for class in NeighborClass::ALL {
            write_matrix_text(
                dir.join(format!("partition_{}.txt", class.name())),
                self.partition(class),
            )?;
            write_matrix_text(
                dir.join(format!("normalized_{}.txt", class.name())),
                self.normalized(class),
            )?;
        }
        Ok(())
    }
}

/// Splits `A + I` into the five neighbor classes.
///
/// Hop distance to the root inside a frame decides closer/further; a spatial
/// neighbor at equal distance (impossible on a tree) is filed as further.
pub fn partition_neighbors(graph: &StGraph) -> Result<Vec<Array2<f64>>> {
    let n = graph.nodes_per_frame();
    let m = graph.num_nodes();
    let hops = graph.skeleton.hop_distances();
    if let Some(j) = hops.iter().position(Option::is_none) {
        return Err(Error::validation(format!(
            "node {j} is not connected to the root"
        )));
    }
    let mut parts = vec![Array2::zeros((m, m)); NUM_CLASSES];
    for i in 0..m {
        parts[NeighborClass::Central.index()][[i, i]] = 1.0;
    }
    for ((i, j), &a) in graph.adjacency.indexed_iter() {
        if a == 0.0 {
            continue;
        }
        let (ti, ji) = (i / n, i % n);
        let (tj, jj) = (j / n, j % n);
        let class = if ti == tj {
            if hops[jj] < hops[ji] {
                NeighborClass::Closer
            } else {
                NeighborClass::Further
            }
        } else if tj == ti + 1 {
            NeighborClass::Forward
        } else {
            NeighborClass::Backward
        };
        parts[class.index()][[i, j]] = 1.0;
    }
    Ok(parts)
}

/// Degree-normalizes one neighbor class.
///
/// Rows scale by the row degree `D_k^{ii} = sum_j A_k^{ij}` and columns by the
/// column degree; the two coincide for symmetric classes, giving
/// `D_k^{-1/2} A_k D_k^{-1/2}`. Zero-degree rows or columns stay zero.
pub fn normalize_partition(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(Error::shape(format!("({rows}, {rows})"), format!("({rows}, {cols})")));
    }
    if a.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::validation("adjacency partition has negative or non-finite entries"));
    }
    let row_deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    let col_deg: Vec<f64> = a.columns().into_iter().map(|c| c.sum()).collect();
    let mut out = a.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        if *v != 0.0 {
            // Exact whenever the degree product is a perfect square.
            *v /= (row_deg[i] * col_deg[j]).sqrt();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseEntry {
    pub row: usize,
    pub col: usize,
    pub class: usize,
    pub weight: f64,
}

/// All nonzero normalized partition entries, tagged by class.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePartitions {
    pub num_nodes: usize,
    pub entries: Vec<SparseEntry>,
}

/// Fine-to-coarse node grouping between two adjacent levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolMap {
    pub fine_per_frame: usize,
    pub coarse_per_frame: usize,
    /// Coarse node of every fine node within a frame.
    pub group_of: Vec<usize>,
}

impl PoolMap {
    pub fn new(coarse_per_frame: usize, group_of: Vec<usize>) -> Result<Self> {
        let map = Self {
            fine_per_frame: group_of.len(),
            coarse_per_frame,
            group_of,
        };
        if map.group_of.iter().any(|&g| g >= coarse_per_frame) {
            return Err(Error::validation("pool map references a missing coarse node"));
        }
        if let Some(g) = (0..coarse_per_frame).find(|&g| map.members(g).is_empty()) {
            return Err(Error::validation(format!("pool group {g} is empty")));
        }
        Ok(map)
    }

    /// Fine nodes of coarse node `g` (unpool broadcast targets).
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.fine_per_frame)
            .filter(|&j| self.group_of[j] == g)
            .collect()
    }
}

/// Pooling map between two levels; `(21, 6)` and `(6, 21)` return the same map.
pub fn pooling_maps(topo: &HandTopology, from: usize, to: usize) -> Result<PoolMap> {
    match (from.max(to), from.min(to)) {
        (21, 6) if from != to => PoolMap::new(NUM_POOL_GROUPS, topo.pool_groups().to_vec()),
        (6, 1) if from != to => PoolMap::new(1, topo.pool_groups_6to1().to_vec()),
        _ => Err(Error::validation(format!(
            "no pooling map between levels {from} and {to}"
        ))),
    }
}

/// Writes a dense matrix as whitespace-separated rows.
pub fn write_matrix_text(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(text, "{}", line.join(" ")).unwrap();
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
