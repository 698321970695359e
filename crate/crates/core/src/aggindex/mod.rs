//! Per-edge aggregation indexes: prefix arrays (ADA), the persistent range
//! forest (RFS) and its positional, streaming variant (DRFS).
//!
//! All indexes answer the same question: the summed event vectors of events
//! whose time rank falls in a version span and whose offset falls in a
//! [`SpatialRange`].

mod ada;
mod drfs;
mod rfs;
mod snapshot;

pub use ada::{build_ada, query_ada, AdaIndex};
pub use drfs::{build_dynamic_forest, DynamicRangeForest, QuantizedForest};
pub use rfs::{build_range_forest, RangeForest};
pub use snapshot::{load_snapshot, save_snapshot, Snapshot, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};

use serde::{Deserialize, Serialize};

use crate::events::{Half, TimeWindow};
use crate::kernels::{AggVector, Side};

pub(crate) const NIL: u32 = u32::MAX;

/// Offsets `x` with `lo <= x <= hi`, or `lo < x <= hi` when `lo_open`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialRange {
    pub lo: f64,
    pub lo_open: bool,
    pub hi: f64,
}

impl SpatialRange {
    pub fn closed(lo: f64, hi: f64) -> Self {
        SpatialRange { lo, lo_open: false, hi }
    }

    pub fn empty() -> Self {
        SpatialRange {
            lo: 0.0,
            lo_open: true,
            hi: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo || (self.hi == self.lo && !self.lo_open))
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_open { x > self.lo } else { x >= self.lo };
        above && x <= self.hi
    }

    /// `[a, b]` lies inside the range.
    #[inline]
    pub fn covers(&self, a: f64, b: f64) -> bool {
        self.contains(a) && self.contains(b)
    }

    /// `[a, b]` shares no point with the range.
    #[inline]
    pub fn disjoint(&self, a: f64, b: f64) -> bool {
        a > self.hi || b < self.lo || (b == self.lo && self.lo_open) || self.is_empty()
    }
}

/// Common query surface used by the density engine.
pub trait EdgeAggregator: Send + Sync {
    /// Aggregate of the events in `half` of `window` whose offsets lie in
    /// `range`. `side` selects the search direction for indexes that keep
    /// one order per endpoint; the returned vector always carries both blocks.
    fn aggregate(
        &self,
        window: &TimeWindow,
        half: Half,
        side: Side,
        range: &SpatialRange,
        visits: &mut u64,
    ) -> AggVector;
}

/// Iterative-friendly node arena with flat aggregate storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Arena {
    pub dim: usize,
    pub children: Vec<[u32; 2]>,
    pub aggs: Vec<f64>,
}

impl Arena {
    pub fn new(dim: usize) -> Self {
        Arena {
            dim,
            children: Vec::new(),
            aggs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    /// New childless node holding `agg(base) + add`.
    pub fn alloc(&mut self, base: u32, add: &[f64]) -> u32 {
        let id = self.children.len() as u32;
        self.children.push([NIL, NIL]);
        if base == NIL {
            self.aggs.extend_from_slice(add);
        } else {
            let start = base as usize * self.dim;
            for (k, a) in add.iter().enumerate() {
                let v = self.aggs[start + k] + a;
                self.aggs.push(v);
            }
        }
        id
    }

    #[inline]
    pub fn agg(&self, node: u32) -> &[f64] {
        let s = node as usize * self.dim;
        &self.aggs[s..s + self.dim]
    }

    #[inline]
    pub fn child(&self, node: u32, side: usize) -> u32 {
        if node == NIL {
            NIL
        } else {
            self.children[node as usize][side]
        }
    }

    /// `out += agg(ur) - agg(ul)`
    #[inline]
    pub fn add_difference(&self, ul: u32, ur: u32, out: &mut AggVector) {
        out.add_slice(self.agg(ur));
        if ul != NIL {
            out.sub_slice(self.agg(ul));
        }
    }
}
