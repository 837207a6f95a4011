//! Nested partitions of the query set.
//!
//! Layer 0 is the whole query set; every set in layer `l` is split into
//! `branching[l]` children in layer `l + 1`. Leaves are numbered in mixed
//! radix so the layer-`l` cell of a query is `leaf / stride(l)`.

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{Purpose, StreamSeed};

#[derive(Debug, Error, PartialEq)]
pub enum HierarchyError {
    #[error("the query set is empty")]
    NoQueries,
    #[error("branching factor at layer {layer} is zero")]
    ZeroBranching { layer: usize },
    #[error("level {level} exceeds the family depth {depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("query {query} is not in the family (size {size})")]
    QueryOutOfRange { query: usize, size: usize },
    #[error("leaf weights must have one positive-sum entry per leaf ({leaves} leaves)")]
    BadWeights { leaves: usize },
}

/// How queries are distributed over leaf sets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafAssignment {
    #[default]
    Uniform,
    Weighted(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    RootCount { count: usize },
    LayerCount { layer: usize, expected: usize, found: usize },
    Uncovered { layer: usize, query: u32 },
    Overlap { layer: usize, first: usize, second: usize, query: u32 },
    NotNested { layer: usize, set: usize, parents: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaminarFamily {
    branching: Vec<usize>,
    leaf_of_query: Vec<u32>,
    /// `sets[l][d]` holds the sorted query ids of `S_{l,d}`.
    sets: Vec<Vec<Vec<u32>>>,
}

impl LaminarFamily {
    /// Builds the family from a leaf assignment, deriving every coarser layer.
    pub fn from_leaves(branching: Vec<usize>, leaf_of_query: Vec<u32>) -> Result<Self, HierarchyError> {
        if leaf_of_query.is_empty() {
            return Err(HierarchyError::NoQueries);
        }
        if let Some(layer) = branching.iter().position(|&b| b == 0) {
            return Err(HierarchyError::ZeroBranching { layer });
        }
        let depth = branching.len();
        let mut sets: Vec<Vec<Vec<u32>>> = (0..=depth)
            .map(|l| vec![Vec::new(); branching[..l].iter().product()])
            .collect();
        let strides = strides(&branching);
        for (q, &leaf) in leaf_of_query.iter().enumerate() {
            for (l, layer) in sets.iter_mut().enumerate() {
                layer[leaf as usize / strides[l]].push(q as u32);
            }
        }
        Ok(LaminarFamily { branching, leaf_of_query, sets })
    }

    /// Wraps raw sets without any checking; pair with [`LaminarFamily::validate`].
    pub fn from_raw(branching: Vec<usize>, leaf_of_query: Vec<u32>, sets: Vec<Vec<Vec<u32>>>) -> Self {
        LaminarFamily { branching, leaf_of_query, sets }
    }

    pub fn depth(&self) -> usize {
        self.branching.len()
    }

    pub fn branching(&self) -> &[usize] {
        &self.branching
    }

    pub fn num_queries(&self) -> usize {
        self.leaf_of_query.len()
    }

    pub fn leaf_of_query(&self) -> &[u32] {
        &self.leaf_of_query
    }

    /// Number of sets `q_l` in layer `level`.
    pub fn num_sets(&self, level: usize) -> usize {
        self.branching[..level.min(self.depth())].iter().product()
    }

    pub fn sets(&self, level: usize) -> &[Vec<u32>] {
        &self.sets[level]
    }

    /// Query counts per leaf.
    pub fn leaf_occupancy(&self) -> Vec<usize> {
        self.sets[self.depth()].iter().map(Vec::len).collect()
    }

    pub fn empty_leaves(&self) -> usize {
        self.sets[self.depth()].iter().filter(|s| s.is_empty()).count()
    }

    pub fn cell_index(&self, level: usize, query: usize) -> Result<usize, HierarchyError> {
        if level > self.depth() {
            return Err(HierarchyError::LevelOutOfRange { level, depth: self.depth() });
        }
        let leaf = *self
            .leaf_of_query
            .get(query)
            .ok_or(HierarchyError::QueryOutOfRange { query, size: self.num_queries() })?;
        Ok(leaf as usize / self.stride(level))
    }

    /// Cell lookup for callers that already checked ranges.
    #[inline]
    pub fn cell_of(&self, level: usize, query: usize) -> usize {
        self.leaf_of_query[query] as usize / self.stride(level)
    }

    /// Number of leaves under one layer-`level` set.
    pub fn stride(&self, level: usize) -> usize {
        self.branching[level..].iter().product()
    }

    /// Checks the laminar-family definition and reports every violation found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.leaf_of_query.len();
        if self.sets.first().map_or(0, Vec::len) != 1 {
            out.push(Violation::RootCount { count: self.sets.first().map_or(0, Vec::len) });
        }
        // owner[l][q] = the set of layer l containing q (first one seen)
        let mut owners: Vec<Vec<Option<usize>>> = Vec::with_capacity(self.sets.len());
        for (layer, sets) in self.sets.iter().enumerate() {
            let expected = self.branching[..layer.min(self.depth())].iter().product::<usize>();
            if layer > 0 && sets.len() != expected {
                out.push(Violation::LayerCount { layer, expected, found: sets.len() });
            }
            let mut owner: Vec<Option<usize>> = vec![None; n];
            for (d, set) in sets.iter().enumerate() {
                for &q in set {
                    match owner.get(q as usize) {
                        Some(Some(first)) => out.push(Violation::Overlap { layer, first: *first, second: d, query: q }),
                        Some(None) => owner[q as usize] = Some(d),
                        None => out.push(Violation::Uncovered { layer, query: q }),
                    }
                }
            }
            for (q, o) in owner.iter().enumerate() {
                if o.is_none() {
                    out.push(Violation::Uncovered { layer, query: q as u32 });
                }
            }
            owners.push(owner);
        }
        for layer in 1..self.sets.len() {
            let parents = &self.sets[layer - 1];
            for (d, set) in self.sets[layer].iter().enumerate() {
                if set.is_empty() {
                    continue;
                }
                let containing = parents
                    .iter()
                    .filter(|p| set.iter().all(|q| p.binary_search(q).is_ok()))
                    .count();
                if containing != 1 {
                    out.push(Violation::NotNested { layer, set: d, parents: containing });
                }
            }
        }
        out
    }
}

fn strides(branching: &[usize]) -> Vec<usize> {
    (0..=branching.len()).map(|l| branching[l..].iter().product()).collect()
}

/// Assigns every query to a leaf uniformly at random and builds the family.
pub fn build_family(num_queries: usize, branching: &[usize], seed: StreamSeed) -> Result<LaminarFamily, HierarchyError> {
    build_family_with(num_queries, branching, &LeafAssignment::Uniform, seed)
}

pub fn build_family_with(
    num_queries: usize,
    branching: &[usize],
    assignment: &LeafAssignment,
    seed: StreamSeed,
) -> Result<LaminarFamily, HierarchyError> {
    if num_queries == 0 {
        return Err(HierarchyError::NoQueries);
    }
    if let Some(layer) = branching.iter().position(|&b| b == 0) {
        return Err(HierarchyError::ZeroBranching { layer });
    }
    let leaves: usize = branching.iter().product();
    let weighted = match assignment {
        LeafAssignment::Uniform => None,
        LeafAssignment::Weighted(w) => {
            if w.len() != leaves {
                return Err(HierarchyError::BadWeights { leaves });
            }
            Some(WeightedIndex::new(w).map_err(|_| HierarchyError::BadWeights { leaves })?)
        }
    };
    let leaf_of_query = (0..num_queries)
        .map(|q| {
            let mut rng = seed.stream(Purpose::LeafAssignment, q as u64);
            match &weighted {
                None => rng.random_range(0..leaves) as u32,
                Some(w) => w.sample(&mut rng) as u32,
            }
        })
        .collect();
    LaminarFamily::from_leaves(branching.to_vec(), leaf_of_query)
}
