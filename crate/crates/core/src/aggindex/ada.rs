//! Prefix-array baseline. Built for one temporal window at a time: events of
//! each half are sorted by distance from either endpoint and summed into
//! prefix vectors, so a spatial bound becomes one binary search.

use super::{EdgeAggregator, SpatialRange};
use crate::events::{EdgeEventStore, Half, TimeWindow};
use crate::kernels::{AggLayout, AggVector, Side};

/// One endpoint's view: events ordered by distance from that endpoint
/// (offsets ascending from the start, descending from the end), `prefix[i]`
/// the sum of the first `i` event vectors. Offsets are kept as is so range
/// bounds compare exactly.
#[derive(Debug, Clone, PartialEq)]
struct Prefixes {
    offsets: Vec<f64>,
    prefix: Vec<f64>,
}

impl Prefixes {
    fn build(mut items: Vec<(f64, AggVector)>, side: Side, dim: usize) -> Self {
        match side {
            Side::Start => items.sort_by(|a, b| a.0.total_cmp(&b.0)),
            Side::End => items.sort_by(|a, b| b.0.total_cmp(&a.0)),
        }
        let mut prefix = vec![0.0; dim];
        let mut run = AggVector::zeros(dim);
        let mut offsets = Vec::with_capacity(items.len());
        for (x, v) in &items {
            run += v;
            offsets.push(*x);
            prefix.extend_from_slice(run.as_slice());
        }
        Prefixes { offsets, prefix }
    }

    fn at(&self, i: usize, dim: usize) -> &[f64] {
        &self.prefix[i * dim..(i + 1) * dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaIndex {
    pub layout: AggLayout,
    pub length: f64,
    /// Window the arrays were filtered by.
    pub window: TimeWindow,
    dim: usize,
    // [half][side]
    arrays: [[Prefixes; 2]; 2],
}

fn half_idx(h: Half) -> usize {
    match h {
        Half::Earlier => 0,
        Half::Later => 1,
    }
}

fn side_idx(s: Side) -> usize {
    match s {
        Side::Start => 0,
        Side::End => 1,
    }
}

pub fn build_ada(store: &EdgeEventStore, window: &TimeWindow, layout: &AggLayout) -> AdaIndex {
    let dim = layout.dim();
    let events = store.time_order();
    let build_half = |half: Half| {
        let span = window.span(half);
        let slice = if span.is_empty() { &events[..0] } else { &events[span.before..span.upto] };
        let vecs: Vec<AggVector> = slice
            .iter()
            .map(|e| layout.event_vector(e.offset, store.length, e.timestamp))
            .collect();
        let items: Vec<(f64, AggVector)> = slice.iter().zip(vecs).map(|(e, v)| (e.offset, v)).collect();
        [Prefixes::build(items.clone(), Side::Start, dim), Prefixes::build(items, Side::End, dim)]
    };
    AdaIndex {
        layout: *layout,
        length: store.length,
        window: *window,
        dim,
        arrays: [build_half(Half::Earlier), build_half(Half::Later)],
    }
}

/// Sum of event vectors in `half` whose distance from `side`'s endpoint is
/// at most `r_max`.
pub fn query_ada(index: &AdaIndex, half: Half, side: Side, r_max: f64) -> AggVector {
    let p = &index.arrays[half_idx(half)][side_idx(side)];
    let i = match side {
        Side::Start => p.offsets.partition_point(|&x| x <= r_max),
        Side::End => p.offsets.partition_point(|&x| index.length - x <= r_max),
    };
    AggVector::from_slice(p.at(i, index.dim))
}

impl AdaIndex {
    /// Distances from `side`'s endpoint, ascending.
    pub fn distances(&self, half: Half, side: Side) -> Vec<f64> {
        let offsets = &self.arrays[half_idx(half)][side_idx(side)].offsets;
        match side {
            Side::Start => offsets.clone(),
            Side::End => offsets.iter().map(|x| self.length - x).collect(),
        }
    }

    /// Prefix vector `A_i` of one view (`A_0` is zero).
    pub fn prefix(&self, half: Half, side: Side, i: usize) -> AggVector {
        AggVector::from_slice(self.arrays[half_idx(half)][side_idx(side)].at(i, self.dim))
    }

    pub fn event_count(&self, half: Half) -> usize {
        self.arrays[half_idx(half)][0].offsets.len()
    }
}

impl EdgeAggregator for AdaIndex {
    fn aggregate(&self, window: &TimeWindow, half: Half, side: Side, range: &SpatialRange, visits: &mut u64) -> AggVector {
        debug_assert_eq!(*window, self.window, "prefix arrays built for another window");
        *visits += 1;
        let mut out = AggVector::zeros(self.dim);
        if range.is_empty() {
            return out;
        }
        let x = &self.arrays[half_idx(half)][side_idx(side)];
        let above = |v: f64| if range.lo_open { v > range.lo } else { v >= range.lo };
        // entries before `lower` are nearer than the range, `upper` onwards farther
        let (lower, upper) = match side {
            Side::Start => (x.offsets.partition_point(|&v| !above(v)), x.offsets.partition_point(|&v| v <= range.hi)),
            Side::End => (x.offsets.partition_point(|&v| v > range.hi), x.offsets.partition_point(|&v| above(v))),
        };
        if upper > lower {
            out.add_slice(x.at(upper, self.dim));
            if lower > 0 {
                out.sub_slice(x.at(lower, self.dim));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{temporal_window, Event};
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

    fn three() -> (EdgeEventStore, TimeWindow) {
        let s = EdgeEventStore::new(
            0,
            100.0,
            vec![
                Event { offset: 20.0, timestamp: 5 },
                Event { offset: 10.0, timestamp: 6 },
                Event { offset: 30.0, timestamp: 7 },
            ],
        );
        let w = temporal_window(&s, 0, 100.0);
        (s, w)
    }

    #[test]
    fn start_side_prefix_counts() {
        let (s, w) = three();
        let a = build_ada(&s, &w, &count_layout());
        assert_eq!(a.distances(Half::Later, Side::Start), vec![10.0, 20.0, 30.0]);
        let counts: Vec<f64> = (1..=3).map(|i| a.prefix(Half::Later, Side::Start, i).as_slice()[0]).collect();
        assert_eq!(counts, vec![1.0, 2.0, 3.0]);
        assert_eq!(a.event_count(Half::Earlier), 0);
    }

    #[test]
    fn end_side_reversed() {
        let (s, w) = three();
        let a = build_ada(&s, &w, &count_layout());
        assert_eq!(a.distances(Half::Later, Side::End), vec![70.0, 80.0, 90.0]);
    }

    #[test]
    fn bound_is_inclusive() {
        let (s, w) = three();
        let a = build_ada(&s, &w, &count_layout());
        let c = |r| query_ada(&a, Half::Later, Side::Start, r).as_slice()[0];
        assert_eq!(c(25.0), 2.0);
        assert_eq!(c(5.0), 0.0);
        assert!(query_ada(&a, Half::Later, Side::Start, 5.0).is_zero());
        assert_eq!(c(30.0), 3.0);
    }

    #[test]
    fn empty_window() {
        let (s, _) = three();
        let w = temporal_window(&s, 1000, 1.0);
        let a = build_ada(&s, &w, &count_layout());
        assert_eq!(a.event_count(Half::Earlier) + a.event_count(Half::Later), 0);
        assert!(query_ada(&a, Half::Later, Side::End, 1e9).is_zero());
    }

    #[test]
    fn offset_ranges_on_both_sides() {
        let (s, w) = three();
        let a = build_ada(&s, &w, &count_layout());
        let mut v = 0;
        let open = SpatialRange { lo: 20.0, lo_open: true, hi: 100.0 };
        assert_eq!(a.aggregate(&w, Half::Later, Side::End, &open, &mut v).as_slice()[0], 1.0);
        let closed = SpatialRange::closed(20.0, 100.0);
        assert_eq!(a.aggregate(&w, Half::Later, Side::End, &closed, &mut v).as_slice()[0], 2.0);
        assert_eq!(a.aggregate(&w, Half::Later, Side::Start, &SpatialRange::closed(0.0, 20.0), &mut v).as_slice()[0], 2.0);
        assert_eq!(a.aggregate(&w, Half::Later, Side::Start, &open, &mut v).as_slice()[0], 1.0);
    }

    #[test]
    fn open_bound_just_below_zero() {
        let len = 51.74099594747186;
        let s = EdgeEventStore::new(0, len, vec![Event { offset: 0.0, timestamp: 0 }]);
        let w = temporal_window(&s, 0, 10.0);
        let a = build_ada(&s, &w, &count_layout());
        // len - lo rounds back to len
        let r = SpatialRange { lo: -3e-15, lo_open: true, hi: len };
        let mut v = 0;
        assert_eq!(a.aggregate(&w, Half::Later, Side::End, &r, &mut v).as_slice()[0], 1.0);
    }
}
