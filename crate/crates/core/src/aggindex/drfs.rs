//! Dynamic range forest: a persistent tree whose nodes split the edge's
//! offset space at midpoints (`[l, m]` and `(m, r]`), independent of the
//! events. Events are appended in arrival order, nodes are created only along
//! insertion paths, and the tree can be deepened one layer at a time.
//!
//! Every node also records the offset extent of the events below it in its
//! version. Queries test coverage against that extent, so a leaf whose events
//! share one offset is never partially covered.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Arena, EdgeAggregator, SpatialRange, NIL};
use crate::error::{Error, Result};
use crate::events::{EdgeEventStore, Event, Half, TimeWindow, VersionSpan};
use crate::kernels::{AggLayout, AggVector, Side};

/// Where insertion `i` stopped: its deepest node, the node of version
/// `i - 1` at the same slot, and that slot's positional range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Frontier {
    leaf: u32,
    prev: u32,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicRangeForest {
    pub layout: AggLayout,
    pub length: f64,
    depth: u32,
    arena: Arena,
    extents: Vec<[f64; 2]>,
    roots: Vec<u32>,
    frontier: Vec<Frontier>,
    events: Vec<Event>,
    event_vectors: Vec<f64>,
}

/// Builds a forest of depth `depth` from a store's time order.
pub fn build_dynamic_forest(store: &EdgeEventStore, layout: &AggLayout, depth: u32) -> Result<DynamicRangeForest> {
    let mut f = DynamicRangeForest::new(layout, store.length, depth)?;
    for ev in store.time_order() {
        f.insert_event(*ev)?;
    }
    Ok(f)
}

impl DynamicRangeForest {
    pub fn new(layout: &AggLayout, length: f64, depth: u32) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidParameter("forest depth must be at least 1".into()));
        }
        Ok(DynamicRangeForest {
            layout: *layout,
            length,
            depth,
            arena: Arena::new(layout.dim()),
            extents: Vec::new(),
            roots: vec![NIL],
            frontier: Vec::new(),
            events: Vec::new(),
            event_vectors: Vec::new(),
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        self.arena.len()
    }

    /// Number of inserted events (= latest version id).
    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn latest_version(&self) -> usize {
        self.events.len()
    }

    fn alloc(&mut self, base: u32, add: &[f64], offset: f64) -> u32 {
        let id = self.arena.alloc(base, add);
        let ext = if base == NIL {
            [offset, offset]
        } else {
            let [a, b] = self.extents[base as usize];
            [a.min(offset), b.max(offset)]
        };
        self.extents.push(ext);
        id
    }

    /// Appends one event and publishes a new version, returning its id.
    pub fn insert_event(&mut self, event: Event) -> Result<usize> {
        if !(event.offset >= 0.0 && event.offset <= self.length) {
            return Err(Error::OffsetOutOfRange {
                edge: String::from("<dynamic forest>"),
                offset: event.offset,
                length: self.length,
            });
        }
        if let Some(last) = self.events.last() {
            if event.timestamp < last.timestamp {
                return Err(Error::OutOfOrder {
                    last: last.timestamp,
                    got: event.timestamp,
                });
            }
        }
        let vector = self.layout.event_vector(event.offset, self.length, event.timestamp);
        let add = vector.as_slice();
        let prev_root = *self.roots.last().unwrap();
        let root = self.alloc(prev_root, add, event.offset);
        let (mut cur, mut prev) = (root, prev_root);
        let (mut lo, mut hi) = (0.0, self.length);
        for _ in 1..self.depth {
            let mid = 0.5 * (lo + hi);
            let go = usize::from(event.offset > mid);
            let prev_child = self.arena.child(prev, go);
            let node = self.alloc(prev_child, add, event.offset);
            self.arena.children[cur as usize][go] = node;
            self.arena.children[cur as usize][1 - go] = self.arena.child(prev, 1 - go);
            if go == 0 {
                hi = mid;
            } else {
                lo = mid;
            }
            cur = node;
            prev = prev_child;
        }
        self.frontier.push(Frontier { leaf: cur, prev, lo, hi });
        self.events.push(event);
        self.event_vectors.extend_from_slice(add);
        self.roots.push(root);
        Ok(self.events.len())
    }

    /// Deepens every version by one layer, continuing each insertion path
    /// from its saved frontier. Costs one node per event.
    pub fn extend_layer(&mut self) {
        let dim = self.arena.dim;
        for i in 0..self.frontier.len() {
            let Frontier { leaf, prev, lo, hi } = self.frontier[i];
            let offset = self.events[i].offset;
            let add: Vec<f64> = self.event_vectors[i * dim..(i + 1) * dim].to_vec();
            let mid = 0.5 * (lo + hi);
            let go = usize::from(offset > mid);
            // prev is the frontier of an earlier insertion and was extended already
            let prev_child = self.arena.child(prev, go);
            let node = self.alloc(prev_child, &add, offset);
            self.arena.children[leaf as usize][go] = node;
            self.arena.children[leaf as usize][1 - go] = self.arena.child(prev, 1 - go);
            let (lo, hi) = if go == 0 { (lo, mid) } else { (mid, hi) };
            self.frontier[i] = Frontier {
                leaf: node,
                prev: prev_child,
                lo,
                hi,
            };
        }
        self.depth += 1;
    }

    /// True when every deepest node holds events at a single offset, so
    /// full-depth queries are exact.
    pub fn is_resolved(&self) -> bool {
        self.frontier.iter().all(|f| {
            let [a, b] = self.extents[f.leaf as usize];
            a == b
        })
    }

    /// Extends until resolved or `max_depth` is reached.
    pub fn extend_until_resolved(&mut self, max_depth: u32) {
        while !self.is_resolved() && self.depth < max_depth {
            self.extend_layer();
        }
    }

    /// Exact-as-possible query at full depth.
    pub fn query(&self, span: VersionSpan, range: &SpatialRange) -> AggVector {
        let mut visits = 0;
        self.query_dynamic(span, range, self.depth, &mut visits)
    }

    /// Query terminating at layer `max_layer` (root is layer 1). Nodes that are
    /// still partially covered there contribute nothing.
    pub fn query_dynamic(&self, span: VersionSpan, range: &SpatialRange, max_layer: u32, visits: &mut u64) -> AggVector {
        let mut out = AggVector::zeros(self.arena.dim);
        if span.is_empty() || range.is_empty() {
            return out;
        }
        let max_layer = max_layer.clamp(1, self.depth);
        self.detect(self.roots[span.before], self.roots[span.upto], 1, max_layer, range, &mut out, visits);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn detect(&self, ul: u32, ur: u32, layer: u32, max_layer: u32, range: &SpatialRange, out: &mut AggVector, visits: &mut u64) {
        *visits += 1;
        if ur == NIL {
            return;
        }
        let [a, b] = self.extents[ur as usize];
        if range.disjoint(a, b) {
            return;
        }
        if range.covers(a, b) {
            self.arena.add_difference(ul, ur, out);
            return;
        }
        if layer >= max_layer {
            return;
        }
        let ar = &self.arena;
        self.detect(ar.child(ul, 0), ar.child(ur, 0), layer + 1, max_layer, range, out, visits);
        self.detect(ar.child(ul, 1), ar.child(ur, 1), layer + 1, max_layer, range, out, visits);
    }

    pub fn root_aggregate(&self, version: usize) -> AggVector {
        match self.roots[version] {
            NIL => AggVector::zeros(self.arena.dim),
            r => AggVector::from_slice(self.arena.agg(r)),
        }
    }

    /// Node-by-node comparison of every version, independent of allocation
    /// order.
    pub fn structurally_equal(&self, other: &DynamicRangeForest) -> bool {
        if self.roots.len() != other.roots.len() || self.depth != other.depth || self.layout != other.layout {
            return false;
        }
        let mut seen = HashMap::new();
        self.roots
            .iter()
            .zip(&other.roots)
            .all(|(&a, &b)| self.node_equal(other, a, b, &mut seen))
    }

    fn node_equal(&self, other: &DynamicRangeForest, a: u32, b: u32, seen: &mut HashMap<(u32, u32), bool>) -> bool {
        if a == NIL || b == NIL {
            return a == b;
        }
        if let Some(&r) = seen.get(&(a, b)) {
            return r;
        }
        let same_here = self.arena.agg(a) == other.arena.agg(b) && self.extents[a as usize] == other.extents[b as usize];
        let r = same_here
            && (0..2).all(|s| self.node_equal(other, self.arena.child(a, s), other.arena.child(b, s), seen));
        seen.insert((a, b), r);
        r
    }

    /// Aggregate stored at the node reached by following `path` (0 = left)
    /// from the root of `version`.
    pub fn node_at(&self, version: usize, path: &[usize]) -> Option<AggVector> {
        let mut node = self.roots[version];
        for &s in path {
            node = self.arena.child(node, s);
        }
        (node != NIL).then(|| AggVector::from_slice(self.arena.agg(node)))
    }
}

/// DRFS bound to a quantized query depth.
#[derive(Debug, Clone)]
pub struct QuantizedForest<'a> {
    pub forest: &'a DynamicRangeForest,
    pub max_layer: u32,
}

impl EdgeAggregator for QuantizedForest<'_> {
    fn aggregate(&self, window: &TimeWindow, half: Half, _side: Side, range: &SpatialRange, visits: &mut u64) -> AggVector {
        self.forest.query_dynamic(window.span(half), range, self.max_layer, visits)
    }
}

impl EdgeAggregator for DynamicRangeForest {
    fn aggregate(&self, window: &TimeWindow, half: Half, _side: Side, range: &SpatialRange, visits: &mut u64) -> AggVector {
        self.query_dynamic(window.span(half), range, self.depth, visits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelConfig, KernelKind};

    fn count_layout() -> AggLayout {
        AggLayout::new(
            KernelConfig {
                spatial: KernelKind::Constant,
                temporal: KernelKind::Constant,
            },
            1.0,
            1.0,
            0,
        )
    }

    fn ev(offset: f64, timestamp: i64) -> Event {
        Event { offset, timestamp }
    }

    fn count(v: &AggVector) -> f64 {
        v.as_slice()[0]
    }

    #[test]
    fn quarters_share_a_leaf_then_split() {
        // o1 in the first quarter, o2 in the third, o3 and o4 in the fourth
        let mut f = DynamicRangeForest::new(&count_layout(), 100.0, 3).unwrap();
        for (i, off) in [10.0, 60.0, 80.0, 95.0].into_iter().enumerate() {
            f.insert_event(ev(off, i as i64)).unwrap();
        }
        let joint = f.node_at(4, &[1, 1]).unwrap();
        assert_eq!(count(&joint), 2.0);
        assert!(f.node_at(4, &[0, 1]).is_none());
        assert!(!f.is_resolved());
        f.extend_layer();
        assert_eq!(count(&f.node_at(4, &[1, 1, 0]).unwrap()), 1.0);
        assert_eq!(count(&f.node_at(4, &[1, 1, 1]).unwrap()), 1.0);
        assert!(f.is_resolved());
    }

    #[test]
    fn depth_one_holds_totals() {
        let mut f = DynamicRangeForest::new(&count_layout(), 10.0, 1).unwrap();
        for i in 0..3 {
            f.insert_event(ev(i as f64, i)).unwrap();
            assert_eq!(count(&f.root_aggregate(i as usize + 1)), (i + 1) as f64);
        }
        assert_eq!(f.node_count(), 3);
        assert!(DynamicRangeForest::new(&count_layout(), 10.0, 0).is_err());
    }

    #[test]
    fn insert_contract() {
        let mut f = DynamicRangeForest::new(&count_layout(), 10.0, 4).unwrap();
        assert_eq!(f.insert_event(ev(1.0, 5)).unwrap(), 1);
        assert_eq!(f.node_count(), 4);
        assert!(matches!(f.insert_event(ev(1.0, 4)), Err(Error::OutOfOrder { .. })));
        assert!(f.insert_event(ev(11.0, 6)).is_err());
        f.insert_event(ev(7.0, 6)).unwrap();
        f.insert_event(ev(3.0, 9)).unwrap();
        let all = SpatialRange::closed(0.0, 10.0);
        let v2 = f.query(VersionSpan { before: 0, upto: 2 }, &all);
        assert_eq!(count(&v2), 2.0);
        assert_eq!(count(&f.query(VersionSpan { before: 0, upto: 2 }, &SpatialRange::closed(2.0, 4.0))), 0.0);
    }

    #[test]
    fn extension_matches_direct_build() {
        let evs: Vec<Event> = (0..200).map(|i| ev(((i * 7919) % 1000) as f64 / 10.0, i)).collect();
        let mut grown = DynamicRangeForest::new(&count_layout(), 100.0, 1).unwrap();
        let mut direct = DynamicRangeForest::new(&count_layout(), 100.0, 6).unwrap();
        for e in &evs {
            grown.insert_event(*e).unwrap();
            direct.insert_event(*e).unwrap();
        }
        for _ in 0..5 {
            grown.extend_layer();
        }
        assert!(grown.structurally_equal(&direct));
        assert_eq!(grown.node_count(), direct.node_count());
    }

    #[test]
    fn extension_keeps_resolved_answers() {
        let mut f = DynamicRangeForest::new(&count_layout(), 100.0, 3).unwrap();
        for (i, off) in [10.0, 40.0, 60.0, 90.0].into_iter().enumerate() {
            f.insert_event(ev(off, i as i64)).unwrap();
        }
        let ranges = [SpatialRange::closed(0.0, 50.0), SpatialRange::closed(35.0, 100.0), SpatialRange::closed(0.0, 5.0)];
        let before: Vec<_> = ranges.iter().map(|r| f.query(VersionSpan { before: 1, upto: 4 }, r)).collect();
        f.extend_layer();
        let after: Vec<_> = ranges.iter().map(|r| f.query(VersionSpan { before: 1, upto: 4 }, r)).collect();
        assert_eq!(before, after);
    }
}
