//! Brute-force reference: one shortest path search per lixel, with the lixel
//! center spliced into its edge as an extra vertex, then every event checked
//! directly. Shares nothing with the index or engine code.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::events::EventStores;
use crate::kernels::KernelConfig;
use crate::network::{EdgeIdx, Lixel, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub edge: EdgeIdx,
    /// Position of the event in its edge's time order.
    pub event: usize,
    pub distance: f64,
    pub time_gap: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub lixel: Lixel,
    pub density: f64,
    /// Events inside both bandwidths, nearest first.
    pub contributions: Vec<Contribution>,
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances from the lixel center to every vertex; the center itself is
/// vertex `n`, and the lixel's edge is replaced by its two halves.
fn distances_from(net: &RoadNetwork, q: &Lixel) -> Vec<f64> {
    let n = net.vertex_count();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + 1];
    for (i, e) in net.edges().iter().enumerate() {
        let (a, b) = (e.a as usize, e.b as usize);
        if i == q.edge as usize {
            adj[n].push((a, q.center));
            adj[a].push((n, q.center));
            adj[n].push((b, e.length - q.center));
            adj[b].push((n, e.length - q.center));
        } else {
            adj[a].push((b, e.length));
            adj[b].push((a, e.length));
        }
    }
    let mut dist = vec![f64::INFINITY; n + 1];
    let mut heap = BinaryHeap::new();
    dist[n] = 0.0;
    heap.push(Item(0.0, n));
    while let Some(Item(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &adj[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Item(nd, w));
            }
        }
    }
    dist
}

/// Density at one lixel by direct summation over all events.
pub fn brute_force_density(
    net: &RoadNetwork,
    stores: &EventStores,
    q: &Lixel,
    t: i64,
    b_s: f64,
    b_t: f64,
    kernels: &KernelConfig,
) -> OracleResult {
    let dist = distances_from(net, q);
    let mut contributions = Vec::new();
    for store in stores.iter() {
        let edge = net.edge(store.edge);
        let (da, db) = (dist[edge.a as usize], dist[edge.b as usize]);
        for (i, ev) in store.time_order().iter().enumerate() {
            let mut d = (da + ev.offset).min(db + edge.length - ev.offset);
            if store.edge == q.edge {
                // the event sits on one of the two halves around the center
                d = d.min((ev.offset - q.center).abs());
            }
            let gap = (t - ev.timestamp).abs() as f64;
            if d > b_s || gap > b_t {
                continue;
            }
            contributions.push(Contribution {
                edge: store.edge,
                event: i,
                distance: d,
                time_gap: gap,
                value: kernels.spatial.evaluate(d / b_s) * kernels.temporal.evaluate(gap / b_t),
            });
        }
    }
    contributions.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.edge.cmp(&b.edge)).then(a.event.cmp(&b.event)));
    let density = contributions.iter().map(|c| c.value).sum();
    OracleResult {
        lixel: *q,
        density,
        contributions,
    }
}

/// Oracle densities for every lixel of length `g`.
pub fn brute_force_field(
    net: &RoadNetwork,
    stores: &EventStores,
    g: f64,
    t: i64,
    b_s: f64,
    b_t: f64,
    kernels: &KernelConfig,
) -> crate::Result<Vec<(Lixel, f64)>> {
    let lixels = crate::network::generate_lixels(net, g)?;
    Ok(lixels
        .into_iter()
        .map(|q| {
            let r = brute_force_density(net, stores, &q, t, b_s, b_t, kernels);
            (q, r.density)
        })
        .collect())
}
