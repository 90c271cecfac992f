//! Signal-space neighbor search and the KNN / WKNN position regressors.
//!
//! Distances are Manhattan distances between dense RSS vectors built with
//! [`rss_vector`], so an unobserved WAP counts as RSS 0 on that side.
//! Neighbors are ordered by `(distance, fp_id)`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::fingerprint::{rss_vector, Fingerprint, Position, WapIndex};

/// Default community size and baseline `k`.
pub const DEFAULT_K: usize = 10;

pub fn manhattan_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "manhattan_distance: length {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(manhattan_unchecked(a, b))
}

#[inline]
fn manhattan_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub fp: &'a Fingerprint,
    pub distance: f64,
}

/// A target fingerprint and its `k` nearest reference fingerprints.
#[derive(Debug, Clone)]
pub struct LocalCommunity<'a> {
    pub target: &'a Fingerprint,
    pub neighbors: Vec<Neighbor<'a>>,
}

impl<'a> LocalCommunity<'a> {
    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    /// Target first, then neighbors in rank order.
    pub fn members(&self) -> impl Iterator<Item = &'a Fingerprint> + '_ {
        std::iter::once(self.target).chain(self.neighbors.iter().map(|n| n.fp))
    }
}

fn rank(a: &Neighbor<'_>, b: &Neighbor<'_>) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.fp.fp_id.cmp(&b.fp.fp_id))
}

/// Reference fingerprints with their dense RSS vectors precomputed, for
/// repeated exhaustive neighbor queries against one WAP index.
#[derive(Debug, Clone)]
pub struct ReferenceSet<'a> {
    index: &'a WapIndex,
    fps: Vec<&'a Fingerprint>,
    vectors: Vec<Vec<f64>>,
}

impl<'a> ReferenceSet<'a> {
    pub fn new(fps: impl IntoIterator<Item = &'a Fingerprint>, index: &'a WapIndex) -> Self {
        let fps: Vec<&Fingerprint> = fps.into_iter().collect();
        let vectors = fps.iter().map(|fp| rss_vector(fp, index)).collect();
        Self {
            index,
            fps,
            vectors,
        }
    }

    pub fn len(&self) -> usize {
        self.fps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fps.is_empty()
    }

    pub fn index(&self) -> &'a WapIndex {
        self.index
    }

    pub fn fingerprints(&self) -> &[&'a Fingerprint] {
        &self.fps
    }

    /// Community of a target that must not be in the reference set.
    pub fn community<'t>(&self, target: &'t Fingerprint, k: usize) -> Result<LocalCommunity<'t>>
    where
        'a: 't,
    {
        if self.fps.iter().any(|fp| fp.fp_id == target.fp_id) {
            return Err(Error::contract(format!(
                "target fp_id={} is among the neighbor candidates",
                target.fp_id
            )));
        }
        self.search(target, k, None)
    }

    /// Community of a target drawn from the reference set itself, skipping
    /// the target's own entry (matched by fp_id).
    pub fn community_excluding_self<'t>(
        &self,
        target: &'t Fingerprint,
        k: usize,
    ) -> Result<LocalCommunity<'t>>
    where
        'a: 't,
    {
        self.search(target, k, Some(target.fp_id))
    }

    /// Community of an external scan whose fp_id carries no meaning relative
    /// to the reference set. Nothing is excluded.
    pub fn query<'t>(&self, target: &'t Fingerprint, k: usize) -> Result<LocalCommunity<'t>>
    where
        'a: 't,
    {
        self.search(target, k, None)
    }

    fn search<'t>(
        &self,
        target: &'t Fingerprint,
        k: usize,
        exclude: Option<u64>,
    ) -> Result<LocalCommunity<'t>>
    where
        'a: 't,
    {
        if k == 0 {
            return Err(Error::contract("community size k must be at least 1"));
        }
        let query = rss_vector(target, self.index);
        let mut all: Vec<Neighbor<'t>> = self
            .fps
            .iter()
            .zip(&self.vectors)
            .filter(|(fp, _)| Some(fp.fp_id) != exclude)
            .map(|(fp, v)| Neighbor {
                fp,
                distance: manhattan_unchecked(&query, v),
            })
            .collect();
        if all.len() < k {
            return Err(Error::InsufficientCandidates {
                required: k,
                available: all.len(),
            });
        }
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, rank);
            all.truncate(k);
        }
        all.sort_unstable_by(rank);
        Ok(LocalCommunity {
            target,
            neighbors: all,
        })
    }
}

/// The `k` candidates nearest to `target` in signal space.
pub fn select_neighbors<'a>(
    target: &'a Fingerprint,
    candidates: impl IntoIterator<Item = &'a Fingerprint>,
    k: usize,
    index: &'a WapIndex,
) -> Result<LocalCommunity<'a>> {
    ReferenceSet::new(candidates, index).community(target, k)
}

/// How neighbor positions are combined into an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Arithmetic mean (KNN).
    Uniform,
    /// Weights `1/d`; exact matches (`d = 0`) take over (WKNN).
    InverseDistance,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Uniform => "KNN",
            Weighting::InverseDistance => "WKNN",
        }
    }
}

fn mean_position<'a>(points: impl Iterator<Item = &'a Position>) -> Position {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    Position::new(sx / n as f64, sy / n as f64)
}

/// Position estimate from an already selected community.
pub fn estimate(community: &LocalCommunity<'_>, weighting: Weighting) -> Position {
    let nbrs = &community.neighbors;
    match weighting {
        Weighting::Uniform => mean_position(nbrs.iter().map(|n| &n.fp.position)),
        Weighting::InverseDistance => {
            if nbrs.iter().any(|n| n.distance == 0.0) {
                return mean_position(
                    nbrs.iter()
                        .filter(|n| n.distance == 0.0)
                        .map(|n| &n.fp.position),
                );
            }
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for n in nbrs {
                let w = 1.0 / n.distance;
                sx += w * n.fp.position.x;
                sy += w * n.fp.position.y;
                sw += w;
            }
            Position::new(sx / sw, sy / sw)
        }
    }
}

pub fn knn_predict<'a>(
    target: &'a Fingerprint,
    train: impl IntoIterator<Item = &'a Fingerprint>,
    k: usize,
    index: &'a WapIndex,
) -> Result<Position> {
    let c = select_neighbors(target, train, k, index)?;
    Ok(estimate(&c, Weighting::Uniform))
}

pub fn wknn_predict<'a>(
    target: &'a Fingerprint,
    train: impl IntoIterator<Item = &'a Fingerprint>,
    k: usize,
    index: &'a WapIndex,
) -> Result<Position> {
    let c = select_neighbors(target, train, k, index)?;
    Ok(estimate(&c, Weighting::InverseDistance))
}
