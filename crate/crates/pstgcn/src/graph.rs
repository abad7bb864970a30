//! Skeleton graph construction: spatial partitioning into the three
//! neighbor subsets, degree-regularized adjacency normalization, and
//! bone-feature derivation.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Degree regularizer keeping empty rows invertible.
pub const DEGREE_EPSILON: f64 = 0.001;

/// Static description of a skeleton: joints, natural-connection edges,
/// the designated body center, and an optional kinematic parent map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    pub name: String,
    pub joint_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub center_joint: usize,
    /// parent_of[j] = None for the root joint.
    pub parents: Option<Vec<Option<usize>>>,
}

impl SkeletonTopology {
    pub fn new(
        name: impl Into<String>,
        joint_count: usize,
        edges: Vec<(usize, usize)>,
        center_joint: usize,
        parents: Option<Vec<Option<usize>>>,
    ) -> Result<Self> {
        let topo = SkeletonTopology {
            name: name.into(),
            joint_count,
            edges,
            center_joint,
            parents,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.joint_count;
        if v == 0 {
            return Err(Error::InvalidTopology("joint_count must be positive".into()));
        }
        if self.center_joint >= v {
            return Err(Error::InvalidTopology(format!(
                "center_joint {} out of range for {v} joints",
                self.center_joint
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &self.edges {
            if i >= v || j >= v {
                return Err(Error::InvalidTopology(format!(
                    "edge ({i},{j}) out of range for {v} joints"
                )));
            }
            if i == j {
                return Err(Error::InvalidTopology(format!("self-loop at joint {i}")));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::InvalidTopology(format!("duplicate edge ({i},{j})")));
            }
        }
        if let Some(p) = &self.parents {
            if p.len() != v {
                return Err(Error::InvalidTopology(format!(
                    "parents has {} entries, expected {v}",
                    p.len()
                )));
            }
            for (c, par) in p.iter().enumerate() {
                if let Some(par) = par {
                    if *par >= v || *par == c {
                        return Err(Error::InvalidTopology(format!(
                            "bad parent {par} for joint {c}"
                        )));
                    }
                }
            }
        }
        // connectivity check (single joint with no edges is connected)
        let dist = self.hop_distances(self.center_joint);
        if let Some(unreachable) = dist.iter().position(|d| d.is_none()) {
            return Err(Error::DisconnectedGraph {
                unreachable,
                from: self.center_joint,
            });
        }
        Ok(())
    }

    /// BFS hop distance from `source` to every joint; None = unreachable.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let v = self.joint_count;
        let mut adj = vec![Vec::new(); v];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut dist = vec![None; v];
        dist[source] = Some(0);
        let mut q = VecDeque::from([source]);
        while let Some(u) = q.pop_front() {
            let du = dist[u].unwrap();
            for &w in &adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    q.push_back(w);
                }
            }
        }
        dist
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: TopologyFile = toml::from_str(&text)
            .map_err(|e| Error::BadFormat(format!("topology file {}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "topology".into());
        file.into_topology(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TopologyFile::from_topology(self);
        let text = toml::to_string(&file)
            .map_err(|e| Error::BadFormat(format!("topology serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Shipped presets: `ntu25`, `openpose18`, `toy11`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ntu25" => Self::from_parent_links(
                "ntu25",
                25,
                20,
                &NTU25_LINKS,
            ),
            "openpose18" => Self::from_parent_links("openpose18", 18, 1, &OPENPOSE18_LINKS),
            "toy11" => Self::from_parent_links("toy11", 11, 0, &TOY11_LINKS),
            other => Err(Error::InvalidTopology(format!("unknown preset `{other}`"))),
        }
    }

    /// Build from (child, parent) links; edges and the parent map both
    /// derive from the same kinematic tree.
    fn from_parent_links(
        name: &str,
        joint_count: usize,
        center: usize,
        links: &[(usize, usize)],
    ) -> Result<Self> {
        let edges = links.iter().map(|&(c, p)| (c, p)).collect();
        let mut parents = vec![None; joint_count];
        for &(c, p) in links {
            parents[c] = Some(p);
        }
        SkeletonTopology::new(name, joint_count, edges, center, Some(parents))
    }
}

// (child, parent) pairs of the NTU-RGB+D 25-joint kinematic tree, rooted
// at the spine-shoulder joint 20.
const NTU25_LINKS: [(usize, usize); 24] = [
    (0, 1),
    (1, 20),
    (2, 20),
    (3, 2),
    (4, 20),
    (5, 4),
    (6, 5),
    (7, 6),
    (8, 20),
    (9, 8),
    (10, 9),
    (11, 10),
    (12, 0),
    (13, 12),
    (14, 13),
    (15, 14),
    (16, 0),
    (17, 16),
    (18, 17),
    (19, 18),
    (21, 22),
    (22, 7),
    (23, 24),
    (24, 11),
];

// OpenPose 18-joint tree rooted at the neck joint 1.
const OPENPOSE18_LINKS: [(usize, usize); 17] = [
    (4, 3),
    (3, 2),
    (7, 6),
    (6, 5),
    (13, 12),
    (12, 11),
    (10, 9),
    (9, 8),
    (11, 5),
    (8, 2),
    (5, 1),
    (2, 1),
    (0, 1),
    (15, 0),
    (14, 0),
    (17, 15),
    (16, 14),
];

// 11-joint toy body: pelvis 0, chest 1, head 2, two 2-joint arms off the
// chest, two 2-joint legs off the pelvis.
const TOY11_LINKS: [(usize, usize); 10] = [
    (1, 0),
    (2, 1),
    (3, 1),
    (4, 3),
    (5, 1),
    (6, 5),
    (7, 0),
    (8, 7),
    (9, 0),
    (10, 9),
];

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    joint_count: usize,
    center_joint: usize,
    edges: Vec<[usize; 2]>,
    /// parent per joint, -1 for the root
    parents: Option<Vec<i64>>,
}

impl TopologyFile {
    fn into_topology(self, name: String) -> Result<SkeletonTopology> {
        let parents = match self.parents {
            None => None,
            Some(p) => Some(
                p.into_iter()
                    .map(|x| if x < 0 { None } else { Some(x as usize) })
                    .collect(),
            ),
        };
        SkeletonTopology::new(
            name,
            self.joint_count,
            self.edges.iter().map(|e| (e[0], e[1])).collect(),
            self.center_joint,
            parents,
        )
    }

    fn from_topology(t: &SkeletonTopology) -> Self {
        TopologyFile {
            joint_count: t.joint_count,
            center_joint: t.center_joint,
            edges: t.edges.iter().map(|&(i, j)| [i, j]).collect(),
            parents: t.parents.as_ref().map(|p| {
                p.iter()
                    .map(|x| x.map(|v| v as i64).unwrap_or(-1))
                    .collect()
            }),
        }
    }
}

/// The three partition adjacency matrices with their normalized forms.
///
/// Index 0 is the root subset (identity), 1 the closer-to-center subset,
/// 2 the farther-from-center subset.
#[derive(Debug, Clone)]
pub struct PartitionedAdjacency {
    pub raw: [Tensor; 3],
    pub normalized: [Tensor; 3],
    pub epsilon: f64,
    pub joint_count: usize,
}

/// Â(i,j) = A(i,j) / sqrt((r_i + eps)(r_j + eps)), r_i the row sum of A.
pub fn normalize_adjacency(a: &Tensor, epsilon: f64) -> Result<Tensor> {
    let s = a.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::shape("square matrix", format!("{s:?}")));
    }
    let v = s[0];
    let mut deg = vec![0.0; v];
    for i in 0..v {
        deg[i] = a.data()[i * v..(i + 1) * v].iter().sum::<f64>() + epsilon;
    }
    let mut out = Tensor::zeros(&[v, v]);
    for i in 0..v {
        for j in 0..v {
            let x = a.data()[i * v + j];
            if x != 0.0 {
                out.data_mut()[i * v + j] = x / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    Ok(out)
}

/// Spatial partitioning of the neighbor sets by hop distance to the
/// designated center joint. For each edge {i,j}, the neighbor j of root i
/// goes to the closer subset when hop(j) < hop(i), else to the farther
/// subset; ties go to the farther subset.
pub fn build_partitions(topology: &SkeletonTopology) -> Result<PartitionedAdjacency> {
    topology.validate()?;
    let v = topology.joint_count;
    let dist = topology.hop_distances(topology.center_joint);
    let hop = |i: usize| dist[i].expect("validated connected");

    let mut a1 = Tensor::zeros(&[v, v]);
    for i in 0..v {
        a1.data_mut()[i * v + i] = 1.0;
    }
    let mut a2 = Tensor::zeros(&[v, v]);
    let mut a3 = Tensor::zeros(&[v, v]);
    for &(i, j) in &topology.edges {
        for (root, nb) in [(i, j), (j, i)] {
            if hop(nb) < hop(root) {
                a2.data_mut()[root * v + nb] = 1.0;
            } else {
                a3.data_mut()[root * v + nb] = 1.0;
            }
        }
    }

    let normalized = [
        normalize_adjacency(&a1, DEGREE_EPSILON)?,
        normalize_adjacency(&a2, DEGREE_EPSILON)?,
        normalize_adjacency(&a3, DEGREE_EPSILON)?,
    ];
    Ok(PartitionedAdjacency {
        raw: [a1, a2, a3],
        normalized,
        epsilon: DEGREE_EPSILON,
        joint_count: v,
    })
}

/// One labeled skeleton sequence, C×T×V.
#[derive(Debug, Clone)]
pub struct SkeletonSequence {
    pub data: Tensor,
    pub label: usize,
    pub topology_ref: String,
}

impl SkeletonSequence {
    pub fn new(data: Tensor, label: usize, topology_ref: impl Into<String>) -> Result<Self> {
        if data.shape().len() != 3 {
            return Err(Error::shape("C×T×V", format!("{:?}", data.shape())));
        }
        if !data.all_finite() {
            return Err(Error::InvalidDataset("non-finite value in sequence".into()));
        }
        Ok(SkeletonSequence {
            data,
            label,
            topology_ref: topology_ref.into(),
        })
    }
}

/// Per-joint differences to the kinematic parent; the root joint gets
/// zeros so the channel count matches the joint stream.
pub fn bone_features(
    seq: &SkeletonSequence,
    topology: &SkeletonTopology,
) -> Result<SkeletonSequence> {
    let parents = topology.parents.as_ref().ok_or(Error::MissingParents)?;
    let s = seq.data.shape();
    let (c, t, v) = (s[0], s[1], s[2]);
    if v != topology.joint_count {
        return Err(Error::shape(
            format!("V={}", topology.joint_count),
            format!("V={v}"),
        ));
    }
    let mut out = Tensor::zeros(s);
    for ch in 0..c {
        for ti in 0..t {
            for j in 0..v {
                if let Some(p) = parents[j] {
                    let val = seq.data.data()[seq.data.idx3(ch, ti, j)]
                        - seq.data.data()[seq.data.idx3(ch, ti, p)];
                    let idx = out.idx3(ch, ti, j);
                    out.data_mut()[idx] = val;
                }
            }
        }
    }
    SkeletonSequence::new(out, seq.label, seq.topology_ref.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> SkeletonTopology {
        SkeletonTopology::new("chain3", 3, vec![(0, 1), (1, 2)], 1, None).unwrap()
    }

    #[test]
    fn chain_partition_matches_hand_enumeration() {
        // hop distances to center 1: d(1)=0, d(0)=d(2)=1
        let p = build_partitions(&chain3()).unwrap();
        let a2 = &p.raw[1];
        let a3 = &p.raw[2];
        assert_eq!(a2.data()[a2.idx2(0, 1)], 1.0);
        assert_eq!(a2.data()[a2.idx2(2, 1)], 1.0);
        assert_eq!(a2.data().iter().sum::<f64>(), 2.0);
        assert_eq!(a3.data()[a3.idx2(1, 0)], 1.0);
        assert_eq!(a3.data()[a3.idx2(1, 2)], 1.0);
        assert_eq!(a3.data().iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn single_joint_topology() {
        let t = SkeletonTopology::new("one", 1, vec![], 0, None).unwrap();
        let p = build_partitions(&t).unwrap();
        assert_eq!(p.raw[0].data(), &[1.0]);
        assert_eq!(p.raw[1].data(), &[0.0]);
        assert_eq!(p.raw[2].data(), &[0.0]);
    }

    #[test]
    fn star_partition() {
        let edges = (1..5).map(|i| (0, i)).collect();
        let t = SkeletonTopology::new("star", 5, edges, 0, None).unwrap();
        let p = build_partitions(&t).unwrap();
        for leaf in 1..5 {
            assert_eq!(p.raw[1].data()[leaf * 5], 1.0, "leaf {leaf} -> hub closer");
            assert_eq!(p.raw[2].data()[leaf], 1.0, "hub -> leaf farther");
        }
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let err = SkeletonTopology::new("bad", 4, vec![(0, 1)], 0, None).unwrap_err();
        match err {
            Error::DisconnectedGraph { unreachable, .. } => assert!(unreachable >= 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn normalize_identity() {
        let mut a = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            a.data_mut()[i * 3 + i] = 1.0;
        }
        let n = normalize_adjacency(&a, 0.001).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 / 1.001 } else { 0.0 };
                assert!((n.data()[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_zero_matrix() {
        let a = Tensor::zeros(&[4, 4]);
        let n = normalize_adjacency(&a, 0.001).unwrap();
        assert!(n.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalize_two_cycle() {
        let a = Tensor::from_vec(&[2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let n = normalize_adjacency(&a, 0.001).unwrap();
        assert!((n.data()[1] - 1.0 / 1.001).abs() < 1e-12);
        assert!((n.data()[2] - 1.0 / 1.001).abs() < 1e-12);
    }

    #[test]
    fn normalize_preserves_symmetry() {
        let mut a = Tensor::zeros(&[4, 4]);
        for &(i, j) in &[(0usize, 1usize), (1, 2), (2, 3), (0, 3), (1, 3)] {
            a.data_mut()[i * 4 + j] = 1.0;
            a.data_mut()[j * 4 + i] = 1.0;
        }
        let n = normalize_adjacency(&a, 0.001).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(n.data()[i * 4 + j], n.data()[j * 4 + i]);
            }
        }
    }

    #[test]
    fn bone_features_chain() {
        // chain 0<-1, joint 0 at x=1, joint 1 at x=3
        let t = SkeletonTopology::new("b", 2, vec![(0, 1)], 0, Some(vec![None, Some(0)]))
            .unwrap();
        let seq = SkeletonSequence::new(
            Tensor::from_vec(&[1, 1, 2], vec![1.0, 3.0]).unwrap(),
            0,
            "b",
        )
        .unwrap();
        let bones = bone_features(&seq, &t).unwrap();
        assert_eq!(bones.data.data(), &[0.0, 2.0]);
    }

    #[test]
    fn bone_features_translation_invariant() {
        let t = SkeletonTopology::preset("toy11").unwrap();
        let base: Vec<f64> = (0..3 * 2 * 11).map(|i| (i as f64 * 0.37).sin()).collect();
        let shifted: Vec<f64> = base.iter().map(|x| x + 5.0).collect();
        let s1 = SkeletonSequence::new(Tensor::from_vec(&[3, 2, 11], base).unwrap(), 0, "toy11")
            .unwrap();
        let s2 =
            SkeletonSequence::new(Tensor::from_vec(&[3, 2, 11], shifted).unwrap(), 0, "toy11")
                .unwrap();
        let b1 = bone_features(&s1, &t).unwrap();
        let b2 = bone_features(&s2, &t).unwrap();
        assert!(b1.data.max_abs_diff(&b2.data) < 1e-12);
    }

    #[test]
    fn bone_features_need_parent_map() {
        let t = chain3();
        let seq = SkeletonSequence::new(Tensor::zeros(&[1, 1, 3]), 0, "chain3").unwrap();
        assert!(matches!(bone_features(&seq, &t), Err(Error::MissingParents)));
    }

    #[test]
    fn presets_are_valid_and_sized() {
        for (name, v) in [("ntu25", 25), ("openpose18", 18), ("toy11", 11)] {
            let t = SkeletonTopology::preset(name).unwrap();
            assert_eq!(t.joint_count, v);
            assert_eq!(t.edges.len(), v - 1, "{name} should be a tree");
            assert!(t.parents.is_some());
        }
    }

    #[test]
    fn topology_roundtrip_through_file() {
        let t = SkeletonTopology::preset("ntu25").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ntu25.toml");
        t.save(&path).unwrap();
        let back = SkeletonTopology::load(&path).unwrap();
        assert_eq!(t.edges, back.edges);
        assert_eq!(t.parents, back.parents);
        assert_eq!(t.center_joint, back.center_joint);
    }
}
