//! Lixel Sharing: target edges whose events are all reached through one
//! endpoint from every lixel of a source edge contribute a linear function of
//! the lixel-to-endpoint distance. Those functions are folded into second
//! differences and recovered for the whole source edge with two prefix sums.

use crate::events::Half;
use crate::kernels::{AggLayout, AggVector, Side, Terms};
use crate::network::{EdgeIdx, EndpointRoute};

/// Target edge as seen from one source edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    pub edge: EdgeIdx,
    pub length: f64,
    /// Routes from the source endpoints to the target's start vertex.
    pub route_c: EndpointRoute,
    /// Routes to the target's end vertex.
    pub route_d: EndpointRoute,
    pub min_offset: f64,
    pub max_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    /// Every event is reached through the given endpoint and lies within
    /// the bandwidth, from every lixel.
    Dominated(Side),
    OutOfBandwidth,
    Remaining,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeClassification {
    pub dominated: Vec<(EdgeIdx, Side)>,
    pub out_of_bandwidth: Vec<EdgeIdx>,
    pub remaining: Vec<EdgeIdx>,
}

impl EdgeClassification {
    pub fn len(&self) -> usize {
        self.dominated.len() + self.out_of_bandwidth.len() + self.remaining.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Offset on the source edge where the route through `b` starts to win;
/// infinite when one side is unreachable.
pub(crate) fn switch_point(route: &EndpointRoute, len: f64) -> f64 {
    match (route.via_a.is_finite(), route.via_b.is_finite()) {
        (true, true) => route.switch_offset(len),
        (false, true) => f64::NEG_INFINITY,
        (true, false) => f64::INFINITY,
        (false, false) => f64::NAN,
    }
}

/// 1-based index of the first lixel whose center lies past the switch
/// point (`L + 1` when none does).
fn first_after(centers: &[f64], s: f64) -> usize {
    if s.is_nan() {
        return 1;
    }
    centers.partition_point(|&x| x <= s) + 1
}

/// Lixels where `d(q_i, v_c) - d(q_i, v_d)` (and each distance on its own)
/// can reach its maximum: the two lixels straddling each route switch.
pub fn ls_candidate_positions(centers: &[f64], len: f64, route_c: &EndpointRoute, route_d: &EndpointRoute) -> Vec<usize> {
    let mut out = candidates(centers, len, route_c, route_d).to_vec();
    out.sort_unstable();
    out.dedup();
    out
}

/// Unsorted candidates, possibly repeated.
fn candidates(centers: &[f64], len: f64, route_c: &EndpointRoute, route_d: &EndpointRoute) -> [usize; 4] {
    let l = centers.len();
    let kc = first_after(centers, switch_point(route_c, len));
    let kd = first_after(centers, switch_point(route_d, len));
    [kc.saturating_sub(1), kc, kd.saturating_sub(1), kd].map(|p| p.clamp(1, l))
}

pub fn classify_edge(centers: &[f64], len: f64, target: &TargetGeometry, b_s: f64) -> EdgeClass {
    let l = centers.len();
    let (rc, rd) = (&target.route_c, &target.route_d);
    let dc = |i: usize| rc.distance_at(centers[i - 1], len);
    let dd = |i: usize| rd.distance_at(centers[i - 1], len);
    let nearest = dc(1).min(dc(l)).min(dd(1)).min(dd(l));
    if nearest > b_s {
        return EdgeClass::OutOfBandwidth;
    }
    let cands = candidates(centers, len, rc, rd);
    let max_c = cands.iter().map(|&i| dc(i)).fold(f64::NEG_INFINITY, f64::max);
    let max_d = cands.iter().map(|&i| dd(i)).fold(f64::NEG_INFINITY, f64::max);
    let lf = target.length;
    if max_c.is_finite() && max_c + target.max_offset <= b_s {
        let gap = cands.iter().map(|&i| dc(i) - dd(i)).fold(f64::NEG_INFINITY, f64::max);
        if gap <= lf - 2.0 * target.max_offset {
            return EdgeClass::Dominated(Side::Start);
        }
    }
    if max_d.is_finite() && max_d + (lf - target.min_offset) <= b_s {
        let gap = cands.iter().map(|&i| dd(i) - dc(i)).fold(f64::NEG_INFINITY, f64::max);
        if gap < 2.0 * target.min_offset - lf {
            return EdgeClass::Dominated(Side::End);
        }
    }
    EdgeClass::Remaining
}

pub fn classify_edges(centers: &[f64], len: f64, targets: &[TargetGeometry], b_s: f64) -> EdgeClassification {
    let mut out = EdgeClassification::default();
    for t in targets {
        match classify_edge(centers, len, t, b_s) {
            EdgeClass::Dominated(side) => out.dominated.push((t.edge, side)),
            EdgeClass::OutOfBandwidth => out.out_of_bandwidth.push(t.edge),
            EdgeClass::Remaining => out.remaining.push(t.edge),
        }
    }
    out
}

/// `F(q_i) = alpha * d(q_i, endpoint) + beta`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinearContribution {
    pub alpha: f64,
    pub beta: f64,
}

/// Linear form of a dominated edge under a triangular spatial kernel, from
/// its whole-edge aggregates per temporal half.
pub fn dominated_contribution(layout: &AggLayout, side: Side, b_s: f64, halves: &[(Half, Terms, AggVector)]) -> LinearContribution {
    let at_zero = Terms::of(&[1.0, -1.0 / b_s]);
    let mut out = LinearContribution::default();
    for (_, qt, agg) in halves {
        out.alpha -= layout.spatial_row_mass(0, qt, agg, side) / b_s;
        out.beta += layout.dot_side(&at_zero, qt, agg, side);
    }
    out
}

/// Second-difference slots for one source edge (1-based lixels).
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceAccumulator {
    /// Value at lixel 1.
    pub base: f64,
    /// `F(2) - F(1)`.
    pub seed: f64,
    /// `second[i] = F(i) - 2 F(i-1) + F(i-2)` for `i >= 3`.
    pub second: Vec<f64>,
}

impl DifferenceAccumulator {
    pub fn new(lixels: usize) -> Self {
        DifferenceAccumulator {
            base: 0.0,
            seed: 0.0,
            second: vec![0.0; lixels + 1],
        }
    }

    pub fn lixels(&self) -> usize {
        self.second.len() - 1
    }

    /// Folds in `alpha * route.distance_at(x_i) + beta`. The distance is
    /// linear in `i` except around the route switch and at the (possibly
    /// short) last lixel, so only those slots are touched.
    pub fn add(&mut self, centers: &[f64], len: f64, route: &EndpointRoute, lin: LinearContribution) {
        let l = self.lixels();
        if l == 0 {
            return;
        }
        let f = |i: usize| lin.alpha * route.distance_at(centers[i - 1], len) + lin.beta;
        self.base += f(1);
        if l == 1 {
            return;
        }
        self.seed += f(2) - f(1);
        let k = first_after(centers, switch_point(route, len));
        let mut slots: Vec<usize> = (k.saturating_sub(1)..=k + 3).chain([l - 1, l]).filter(|&p| p >= 3 && p <= l).collect();
        slots.sort_unstable();
        slots.dedup();
        for p in slots {
            self.second[p] += f(p) - 2.0 * f(p - 1) + f(p - 2);
        }
    }
}

/// Two prefix passes: second differences to first differences to values.
pub fn recover_from_differences(acc: &DifferenceAccumulator) -> Vec<f64> {
    let l = acc.lixels();
    let mut out = Vec::with_capacity(l);
    if l == 0 {
        return out;
    }
    let mut value = acc.base;
    let mut delta = acc.seed;
    out.push(value);
    for i in 2..=l {
        if i >= 3 {
            delta += acc.second[i];
        }
        value += delta;
        out.push(value);
    }
    out
}
