use std::collections::VecDeque;

use serde::Deserialize;
use stgat_autodiff::Tensor;

use crate::error::{Error, Result};

const NTU_JSON: &str = include_str!("../../data/ntu_rgbd_25.json");
const KINETICS_JSON: &str = include_str!("../../data/kinetics_openpose_18.json");
const DESK_JSON: &str = include_str!("../../data/desk_7.json");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    name: String,
    version: u32,
    index_base: usize,
    num_joints: usize,
    joints: Vec<String>,
    parents: Vec<[usize; 2]>,
}

/// Joint topology: undirected bones, a parent map for bone vectors and the
/// all-pairs hop distance table.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonGraph {
    name: String,
    joint_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    parents: Vec<usize>,
    /// Row-major `N × N`, `None` where unreachable.
    hops: Vec<Option<usize>>,
}

impl SkeletonGraph {
    /// 25-joint Kinect v2 layout, rooted at the spine joint.
    pub fn ntu() -> Self {
        Self::from_json(NTU_JSON).expect("bundled ntu graph")
    }

    /// 18-joint OpenPose layout, rooted at the nose.
    pub fn kinetics() -> Self {
        Self::from_json(KINETICS_JSON).expect("bundled kinetics graph")
    }

    /// 7-joint upper-body toy skeleton used by the synthetic datasets.
    pub fn desk() -> Self {
        Self::from_json(DESK_JSON).expect("bundled desk graph")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "ntu" => Ok(Self::ntu()),
            "kinetics" => Ok(Self::kinetics()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::config(
                "data.graph",
                format!("unknown graph `{other}` (expected ntu, kinetics or desk)"),
            )),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("graph file: {e}")))?;
        if file.version != 1 {
            return Err(Error::Data(format!(
                "graph file version {} unsupported",
                file.version
            )));
        }
        let n = file.num_joints;
        let mut parents = vec![usize::MAX; n];
        for [child, parent] in file.parents {
            let (c, p) = (
                child.checked_sub(file.index_base),
                parent.checked_sub(file.index_base),
            );
            match (c, p) {
                (Some(c), Some(p)) if c < n && p < n => parents[c] = p,
                _ => {
                    return Err(Error::Data(format!(
                        "graph file: bad pair ({child}, {parent})"
                    )))
                }
            }
        }
        if parents.contains(&usize::MAX) {
            return Err(Error::Data("graph file: joint without parent".into()));
        }
        let mut g = Self::from_parents(&file.name, parents)?;
        if file.joints.len() == n {
            g.joint_names = file.joints;
        }
        Ok(g)
    }

    /// Tree graph whose bones are the child–parent pairs. Exactly one joint
    /// must be its own parent.
    pub fn from_parents(name: &str, parents: Vec<usize>) -> Result<Self> {
        let n = parents.len();
        let roots = (0..n).filter(|&j| parents[j] == j).count();
        if roots != 1 {
            return Err(Error::Data(format!(
                "parent map has {roots} roots, expected 1"
            )));
        }
        for start in 0..n {
            let (mut j, mut steps) = (start, 0);
            while parents[j] != j {
                j = parents[j];
                steps += 1;
                if j >= n || steps > n {
                    return Err(Error::Data(format!(
                        "parent map has a cycle through joint {start}"
                    )));
                }
            }
        }
        let edges = (0..n)
            .filter(|&j| parents[j] != j)
            .map(|j| (parents[j].min(j), parents[j].max(j)))
            .collect();
        Ok(Self::from_edges(name, n, edges, parents))
    }

    /// General constructor; the graph may be disconnected.
    pub fn from_edges(
        name: &str,
        n: usize,
        edges: Vec<(usize, usize)>,
        parents: Vec<usize>,
    ) -> Self {
        let mut nbrs = vec![Vec::new(); n];
        for &(a, b) in &edges {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        let mut hops = vec![None; n * n];
        for s in 0..n {
            hops[s * n + s] = Some(0);
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                let du = hops[s * n + u].unwrap();
                for &v in &nbrs[u] {
                    if hops[s * n + v].is_none() {
                        hops[s * n + v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
        }
        Self {
            name: name.to_string(),
            joint_names: (0..n).map(|j| format!("joint{j}")).collect(),
            edges,
            parents,
            hops,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn parent(&self, j: usize) -> usize {
        self.parents[j]
    }

    pub fn root(&self) -> usize {
        (0..self.num_joints())
            .find(|&j| self.parents[j] == j)
            .unwrap_or(0)
    }

    pub fn hop(&self, i: usize, j: usize) -> Option<usize> {
        self.hops[i * self.num_joints() + j]
    }

    pub fn is_connected(&self) -> bool {
        self.hops.iter().all(Option::is_some)
    }

    /// Binary symmetric adjacency without self loops.
    pub fn adjacency(&self) -> Tensor {
        let n = self.num_joints();
        let mut a = Tensor::zeros([n, n]);
        for &(i, j) in &self.edges {
            a.set(&[i, j], 1.0);
            a.set(&[j, i], 1.0);
        }
        a
    }
}
