//! Persistent range forest over one edge.
//!
//! The tree shape is fixed by the position-sorted events: a node spanning
//! position indices `l..=r` splits at `(l + r) / 2`. Events are inserted in
//! time order; insertion `i` copies the root-to-leaf path and links every
//! untouched subtree to version `i - 1`, so version `i` holds exactly the
//! first `i` events.

use serde::{Deserialize, Serialize};

use super::{Arena, EdgeAggregator, SpatialRange, NIL};
use crate::events::{EdgeEventStore, Half, TimeWindow, VersionSpan};
use crate::kernels::{AggLayout, AggVector, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeForest {
    pub layout: AggLayout,
    pub length: f64,
    /// Offsets in position order.
    positions: Vec<f64>,
    arena: Arena,
    /// `roots[i]` is the root of version `i`; `roots[0]` is the empty tree.
    roots: Vec<u32>,
}

pub fn build_range_forest(store: &EdgeEventStore, layout: &AggLayout) -> RangeForest {
    RangeForest::build(store, layout)
}

impl RangeForest {
    pub fn build(store: &EdgeEventStore, layout: &AggLayout) -> Self {
        let n = store.len();
        let dim = layout.dim();
        let events = store.time_order();
        let mut slot_of_rank = vec![0usize; n];
        let mut positions = Vec::with_capacity(n);
        for (slot, &rank) in store.position_ranks().iter().enumerate() {
            slot_of_rank[rank as usize] = slot;
            positions.push(events[rank as usize].offset);
        }
        let depth = if n == 0 { 0 } else { ceil_log2(n) + 1 };
        let mut arena = Arena::new(dim);
        arena.children.reserve(n * depth);
        arena.aggs.reserve(n * depth * dim);
        let mut roots = Vec::with_capacity(n + 1);
        roots.push(NIL);
        for (rank, ev) in events.iter().enumerate() {
            let vector = layout.event_vector(ev.offset, store.length, ev.timestamp);
            let add = vector.as_slice();
            let slot = slot_of_rank[rank];
            let prev_root = *roots.last().unwrap();
            let root = arena.alloc(prev_root, add);
            let (mut cur, mut prev) = (root, prev_root);
            let (mut l, mut r) = (0usize, n - 1);
            while l < r {
                let m = (l + r) / 2;
                let go = usize::from(slot > m);
                let prev_child = arena.child(prev, go);
                let node = arena.alloc(prev_child, add);
                arena.children[cur as usize][go] = node;
                arena.children[cur as usize][1 - go] = arena.child(prev, 1 - go);
                if go == 0 {
                    r = m;
                } else {
                    l = m + 1;
                }
                cur = node;
                prev = prev_child;
            }
            roots.push(root);
        }
        RangeForest {
            layout: *layout,
            length: store.length,
            positions,
            arena,
            roots,
        }
    }

    pub fn event_count(&self) -> usize {
        self.positions.len()
    }

    pub fn version_count(&self) -> usize {
        self.roots.len()
    }

    /// Allocated tree nodes across all versions.
    pub fn node_count(&self) -> usize {
        self.arena.len()
    }

    /// Number of layers of every tree version.
    pub fn depth(&self) -> usize {
        match self.positions.len() {
            0 => 0,
            n => ceil_log2(n) + 1,
        }
    }

    /// Aggregate of events in `span` with offsets in `range`.
    pub fn query(&self, span: VersionSpan, range: &SpatialRange) -> AggVector {
        let mut visits = 0;
        self.query_counted(span, range, &mut visits)
    }

    /// Walks the root-to-split path and then the two boundary paths below
    /// the split; a fully covered child adds its stored aggregate without
    /// being entered. `visits` counts entered nodes, at most
    /// `2 * ceil(log2 n) + 1`.
    pub fn query_counted(&self, span: VersionSpan, range: &SpatialRange, visits: &mut u64) -> AggVector {
        let mut out = AggVector::zeros(self.arena.dim);
        if span.is_empty() || range.is_empty() || self.positions.is_empty() {
            return out;
        }
        let Some((i, j)) = self.slot_range(range) else {
            return out;
        };
        let a = &self.arena;
        let (mut ul, mut ur) = (self.roots[span.before], self.roots[span.upto]);
        let (mut l, mut r) = (0usize, self.positions.len() - 1);
        loop {
            *visits += 1;
            if ur == NIL {
                return out;
            }
            if i == l && j == r {
                a.add_difference(ul, ur, &mut out);
                return out;
            }
            let m = (l + r) / 2;
            if j <= m {
                (ul, ur, r) = (a.child(ul, 0), a.child(ur, 0), m);
            } else if i > m {
                (ul, ur, l) = (a.child(ul, 1), a.child(ur, 1), m + 1);
            } else {
                self.suffix(a.child(ul, 0), a.child(ur, 0), l, m, i, &mut out, visits);
                self.prefix(a.child(ul, 1), a.child(ur, 1), m + 1, r, j, &mut out, visits);
                return out;
            }
        }
    }

    /// Slots `i..=j` whose offsets lie in `range`.
    fn slot_range(&self, range: &SpatialRange) -> Option<(usize, usize)> {
        let p = &self.positions;
        let i = if range.lo_open {
            p.partition_point(|&x| x <= range.lo)
        } else {
            p.partition_point(|&x| x < range.lo)
        };
        let end = p.partition_point(|&x| x <= range.hi);
        (i < end).then(|| (i, end - 1))
    }

    /// Adds slots `i..=r` of the subtree spanning `l..=r`.
    #[allow(clippy::too_many_arguments)]
    fn suffix(&self, mut ul: u32, mut ur: u32, mut l: usize, mut r: usize, i: usize, out: &mut AggVector, visits: &mut u64) {
        let a = &self.arena;
        loop {
            *visits += 1;
            if ur == NIL {
                return;
            }
            if i == l {
                a.add_difference(ul, ur, out);
                return;
            }
            let m = (l + r) / 2;
            if i <= m {
                let (cl, cr) = (a.child(ul, 1), a.child(ur, 1));
                if cr != NIL {
                    a.add_difference(cl, cr, out);
                }
                (ul, ur, r) = (a.child(ul, 0), a.child(ur, 0), m);
            } else {
                (ul, ur, l) = (a.child(ul, 1), a.child(ur, 1), m + 1);
            }
        }
    }

    /// Adds slots `l..=j` of the subtree spanning `l..=r`.
    #[allow(clippy::too_many_arguments)]
    fn prefix(&self, mut ul: u32, mut ur: u32, mut l: usize, mut r: usize, j: usize, out: &mut AggVector, visits: &mut u64) {
        let a = &self.arena;
        loop {
            *visits += 1;
            if ur == NIL {
                return;
            }
            if j == r {
                a.add_difference(ul, ur, out);
                return;
            }
            let m = (l + r) / 2;
            if j > m {
                let (cl, cr) = (a.child(ul, 0), a.child(ur, 0));
                if cr != NIL {
                    a.add_difference(cl, cr, out);
                }
                (ul, ur, l) = (a.child(ul, 1), a.child(ur, 1), m + 1);
            } else {
                (ul, ur, r) = (a.child(ul, 0), a.child(ur, 0), m);
            }
        }
    }

    /// Aggregate vector stored at the root of a version.
    pub fn root_aggregate(&self, version: usize) -> AggVector {
        let root = self.roots[version];
        if root == NIL {
            AggVector::zeros(self.arena.dim)
        } else {
            AggVector::from_slice(self.arena.agg(root))
        }
    }
}

impl EdgeAggregator for RangeForest {
    fn aggregate(&self, window: &TimeWindow, half: Half, _side: Side, range: &SpatialRange, visits: &mut u64) -> AggVector {
        self.query_counted(window.span(half), range, visits)
    }
}

pub(crate) fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}
