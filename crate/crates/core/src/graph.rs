//! Heterogeneous graph encoding of a local community.
//!
//! Fingerprint nodes come first (`node_id` 0 is the target), followed by one
//! WAP node per distinct MAC index observed by any community member, in
//! ascending `mac_index` order. Each observation becomes one weighted
//! FP–WAP edge that message passing consumes in both directions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, Position, WapIndex};
use crate::neighborhood::LocalCommunity;

pub const RSS_FLOOR_DBM: f64 = -100.0;
pub const RSS_CEIL_DBM: f64 = -30.0;

/// Position and RSS scaling shared by training and inference graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub origin: Position,
    pub scale: f64,
    pub rss_floor: f64,
    pub rss_ceil: f64,
}

impl NormalizationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::contract(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.rss_ceil > self.rss_floor) {
            return Err(Error::contract("rss_ceil must exceed rss_floor"));
        }
        if !self.origin.is_finite() {
            return Err(Error::contract("origin must be finite"));
        }
        Ok(())
    }

    pub fn normalize(&self, p: Position) -> [f64; 2] {
        [
            (p.x - self.origin.x) / self.scale,
            (p.y - self.origin.y) / self.scale,
        ]
    }

    pub fn denormalize(&self, v: [f64; 2]) -> Position {
        Position::new(
            self.origin.x + self.scale * v[0],
            self.origin.y + self.scale * v[1],
        )
    }
}

/// Origin at the per-axis minimum, one isotropic scale equal to the larger
/// extent (at least 1 m), fixed RSS anchors.
pub fn fit_normalization<'a>(
    train_fps: impl IntoIterator<Item = &'a Fingerprint>,
) -> Result<NormalizationParams> {
    let mut lo = Position::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Position::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for fp in train_fps {
        any = true;
        lo.x = lo.x.min(fp.position.x);
        lo.y = lo.y.min(fp.position.y);
        hi.x = hi.x.max(fp.position.x);
        hi.y = hi.y.max(fp.position.y);
    }
    if !any {
        return Err(Error::contract("fit_normalization needs at least one fingerprint"));
    }
    let scale = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
    Ok(NormalizationParams {
        origin: lo,
        scale,
        rss_floor: RSS_FLOOR_DBM,
        rss_ceil: RSS_CEIL_DBM,
    })
}

/// Linear map of RSS onto `[0, 1]` between the two anchors, clamped.
pub fn edge_weight(rss: f64, norm: &NormalizationParams) -> f64 {
    ((rss - norm.rss_floor) / (norm.rss_ceil - norm.rss_floor)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpNode {
    pub node_id: usize,
    pub fp_id: u64,
    /// `(x_norm, y_norm, is_target)`; the target's position is masked to 0.
    pub feature: [f64; 3],
}

impl FpNode {
    pub fn is_target(&self) -> bool {
        self.feature[2] == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WapNode {
    pub node_id: usize,
    pub mac_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub fp_node: usize,
    pub wap_node: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityGraph {
    pub fp_nodes: Vec<FpNode>,
    pub wap_nodes: Vec<WapNode>,
    pub edges: Vec<Edge>,
    /// Target position in meters; `None` for inference graphs.
    pub label: Option<Position>,
    pub norm: NormalizationParams,
}

impl CommunityGraph {
    pub fn node_count(&self) -> usize {
        self.fp_nodes.len() + self.wap_nodes.len()
    }

    /// Checks the structural invariants (single target, id ranges, weights).
    pub fn validate(&self) -> Result<()> {
        let targets = self.fp_nodes.iter().filter(|n| n.is_target()).count();
        if targets != 1 {
            return Err(Error::contract(format!("graph has {targets} target nodes")));
        }
        let n = self.node_count();
        let mut kinds = vec![None; n];
        for f in &self.fp_nodes {
            if f.node_id >= n || kinds[f.node_id].replace(true).is_some() {
                return Err(Error::contract(format!("bad fp node id {}", f.node_id)));
            }
        }
        for w in &self.wap_nodes {
            if w.node_id >= n || kinds[w.node_id].replace(false).is_some() {
                return Err(Error::contract(format!("bad wap node id {}", w.node_id)));
            }
        }
        for e in &self.edges {
            if kinds.get(e.fp_node) != Some(&Some(true)) || kinds.get(e.wap_node) != Some(&Some(false)) {
                return Err(Error::contract(format!(
                    "edge ({}, {}) does not join an FP node to a WAP node",
                    e.fp_node, e.wap_node
                )));
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(Error::contract(format!("edge weight {} outside [0,1]", e.weight)));
            }
        }
        Ok(())
    }

    /// Same graph without the label.
    pub fn unlabeled(&self) -> Self {
        Self {
            label: None,
            ..self.clone()
        }
    }

    /// Relabels node ids with `perm` (`perm[old] = new`) and reorders the
    /// node and edge tables accordingly. Used to check order invariance.
    pub fn permuted(&self, perm: &[usize], edge_order: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n || edge_order.len() != self.edges.len() {
            return Err(Error::contract("permutation length mismatch"));
        }
        let mut fp_nodes: Vec<FpNode> = self
            .fp_nodes
            .iter()
            .map(|f| FpNode {
                node_id: perm[f.node_id],
                ..*f
            })
            .collect();
        fp_nodes.sort_by_key(|f| f.node_id);
        let mut wap_nodes: Vec<WapNode> = self
            .wap_nodes
            .iter()
            .map(|w| WapNode {
                node_id: perm[w.node_id],
                ..*w
            })
            .collect();
        wap_nodes.sort_by_key(|w| w.node_id);
        let edges = edge_order
            .iter()
            .map(|&i| {
                let e = self.edges[i];
                Edge {
                    fp_node: perm[e.fp_node],
                    wap_node: perm[e.wap_node],
                    weight: e.weight,
                }
            })
            .collect();
        let g = Self {
            fp_nodes,
            wap_nodes,
            edges,
            label: self.label,
            norm: self.norm,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn to_dump(&self) -> GraphDump {
        GraphDump {
            fp_nodes: self.fp_nodes.clone(),
            wap_nodes: self.wap_nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| (e.fp_node, e.wap_node, e.weight))
                .collect(),
            label: self.label.map(|p| [p.x, p.y]),
        }
    }

    /// Writes the JSON dump form to `path`.
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_dump())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// On-disk graph form: `edges` as `[fp_node, wap_node, weight]` triples and
/// `label` as `[x, y]` or `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub fp_nodes: Vec<FpNode>,
    pub wap_nodes: Vec<WapNode>,
    pub edges: Vec<(usize, usize, f64)>,
    pub label: Option<[f64; 2]>,
}

/// Encodes `community` as a graph. `labeled` controls only whether the
/// target position is attached as the label.
pub fn build_graph(
    community: &LocalCommunity<'_>,
    norm: &NormalizationParams,
    index: &WapIndex,
    labeled: bool,
) -> CommunityGraph {
    let members: Vec<&Fingerprint> = community.members().collect();
    let n_fp = members.len();

    // Per member: mac_index -> strongest weight (only the unknown bucket can
    // collect more than one MAC).
    let per_member: Vec<BTreeMap<usize, f64>> = members
        .iter()
        .map(|fp| {
            let mut m: BTreeMap<usize, f64> = BTreeMap::new();
            for (mac, &rss) in &fp.observations {
                let w = edge_weight(rss, norm);
                m.entry(index.get(mac))
                    .and_modify(|cur| *cur = cur.max(w))
                    .or_insert(w);
            }
            m
        })
        .collect();

    let mut wap_ids: BTreeMap<usize, usize> = BTreeMap::new();
    for m in &per_member {
        for &mac_index in m.keys() {
            wap_ids.entry(mac_index).or_insert(0);
        }
    }
    for (offset, node_id) in wap_ids.values_mut().enumerate() {
        *node_id = n_fp + offset;
    }

    let fp_nodes = members
        .iter()
        .enumerate()
        .map(|(i, fp)| FpNode {
            node_id: i,
            fp_id: fp.fp_id,
            feature: if i == 0 {
                [0.0, 0.0, 1.0]
            } else {
                let [x, y] = norm.normalize(fp.position);
                [x, y, 0.0]
            },
        })
        .collect();
    let wap_nodes = wap_ids
        .iter()
        .map(|(&mac_index, &node_id)| WapNode { node_id, mac_index })
        .collect();
    let edges = per_member
        .iter()
        .enumerate()
        .flat_map(|(i, m)| {
            let wap_ids = &wap_ids;
            m.iter().map(move |(mac_index, &weight)| Edge {
                fp_node: i,
                wap_node: wap_ids[mac_index],
                weight,
            })
        })
        .collect();

    CommunityGraph {
        fp_nodes,
        wap_nodes,
        edges,
        label: labeled.then_some(community.target.position),
        norm: *norm,
    }
}
