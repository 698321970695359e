//! Reproducible synthetic road networks and event sets.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::network::EdgeRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub vertices: usize,
    pub edges: usize,
    pub events: usize,
    /// Timestamps are drawn from `0..=horizon`.
    pub horizon: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub edges: Vec<EdgeRecord>,
    pub events: Vec<EventRecord>,
}

const MIN_LEN: f64 = 50.0;
const MAX_LEN: f64 = 250.0;
/// Share of events drawn around hotspots rather than uniformly.
const CLUSTERED: f64 = 0.5;
const SPREAD: f64 = 25.0;

/// Extra edges pick among this many nearest neighbours.
const NEIGHBOURS: usize = 8;

/// Uniform bucket grid over the square `[0, side)^2`.
struct Grid {
    cell: f64,
    dim: usize,
    buckets: Vec<Vec<usize>>,
}

impl Grid {
    fn new(side: f64, n: usize) -> Self {
        let dim = ((n as f64).sqrt().ceil() as usize).max(1);
        Grid {
            cell: side / dim as f64,
            dim,
            buckets: vec![Vec::new(); dim * dim],
        }
    }

    fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let c = |x: f64| ((x / self.cell) as usize).min(self.dim - 1);
        (c(p[0]), c(p[1]))
    }

    fn insert(&mut self, id: usize, p: [f64; 2]) {
        let (x, y) = self.cell_of(p);
        self.buckets[y * self.dim + x].push(id);
    }

    /// Up to `k` inserted points nearest to `p`, nearest first, skipping `skip`.
    fn nearest(&self, coords: &[[f64; 2]], p: [f64; 2], k: usize, skip: usize) -> Vec<usize> {
        let (cx, cy) = self.cell_of(p);
        let mut found: Vec<(f64, usize)> = Vec::new();
        for ring in 0..self.dim {
            let (x0, x1) = (cx.saturating_sub(ring), (cx + ring).min(self.dim - 1));
            let (y0, y1) = (cy.saturating_sub(ring), (cy + ring).min(self.dim - 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if x.abs_diff(cx) != ring && y.abs_diff(cy) != ring {
                        continue;
                    }
                    for &id in &self.buckets[y * self.dim + x] {
                        if id != skip {
                            let q = coords[id];
                            found.push(((q[0] - p[0]).hypot(q[1] - p[1]), id));
                        }
                    }
                }
            }
            // every point beyond this ring is at least `ring * cell` away
            if found.len() >= k {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if found[k - 1].0 <= ring as f64 * self.cell {
                    break;
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(k);
        found.into_iter().map(|(_, id)| id).collect()
    }
}

/// Connected road-like graph with edge lengths in 50..250 m and no parallel
/// edges: a spanning tree joining each vertex to its nearest predecessor,
/// plus extra edges between near neighbours (any pair once those run out).
/// Events mix a uniform background with point clusters.
pub fn generate_synthetic(p: &SynthParams) -> Result<SynthData> {
    let n = p.vertices;
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two vertices".into()));
    }
    if p.edges + 1 < n {
        return Err(Error::InvalidParameter(format!("{} edges cannot connect {} vertices", p.edges, n)));
    }
    if p.edges as u128 > (n as u128 * (n as u128 - 1)) / 2 {
        return Err(Error::InvalidParameter(format!("{} vertices admit at most {} simple edges", n, n * (n - 1) / 2)));
    }
    if p.horizon < 0 {
        return Err(Error::InvalidParameter("time horizon must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let side = (n as f64).sqrt() * 150.0;
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(0.0..side), rng.gen_range(0.0..side)]).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(p.edges);
    let mut seen = HashSet::new();
    let mut grid = Grid::new(side, n);
    grid.insert(0, coords[0]);
    for v in 1..n {
        let u = grid.nearest(&coords, coords[v], 1, v)[0];
        grid.insert(v, coords[v]);
        seen.insert((u.min(v), u.max(v)));
        pairs.push((u, v));
    }
    let k = NEIGHBOURS.min(n - 1);
    let near: Vec<Vec<usize>> = (0..n).map(|v| grid.nearest(&coords, coords[v], k, v)).collect();
    let mut misses = 0;
    while pairs.len() < p.edges {
        let a = rng.gen_range(0..n);
        let b = if misses < 64 * n {
            near[a][rng.gen_range(0..k)]
        } else {
            rng.gen_range(0..n)
        };
        if a == b {
            continue;
        }
        if seen.insert((a.min(b), a.max(b))) {
            pairs.push((a, b));
        } else {
            misses += 1;
        }
    }
    let edges: Vec<EdgeRecord> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let mut r = EdgeRecord::new(&format!("e{i}"), &format!("v{a}"), &format!("v{b}"), rng.gen_range(MIN_LEN..MAX_LEN));
            r.geometry = Some(vec![coords[a], coords[b]]);
            r
        })
        .collect();
    let hotspots: Vec<(usize, f64)> = (0..(p.edges / 50).max(1))
        .map(|_| {
            let e = rng.gen_range(0..edges.len());
            (e, rng.gen_range(0.0..=edges[e].length))
        })
        .collect();
    let mut events = Vec::with_capacity(p.events);
    for _ in 0..p.events {
        let (e, offset) = if rng.gen_bool(CLUSTERED) {
            let (e, center) = hotspots[rng.gen_range(0..hotspots.len())];
            let off = (center + rng.gen_range(-SPREAD..=SPREAD)).clamp(0.0, edges[e].length);
            (e, off)
        } else {
            let e = rng.gen_range(0..edges.len());
            (e, rng.gen_range(0.0..=edges[e].length))
        };
        let t = rng.gen_range(0..=p.horizon);
        events.push(EventRecord::new(&edges[e].id, offset, t));
    }
    Ok(SynthData { edges, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::load_graph;

    fn params(seed: u64) -> SynthParams {
        SynthParams {
            seed,
            vertices: 50,
            edges: 80,
            events: 1000,
            horizon: 86_400,
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_synthetic(&params(7)).unwrap(), generate_synthetic(&params(7)).unwrap());
        assert_ne!(generate_synthetic(&params(7)).unwrap(), generate_synthetic(&params(8)).unwrap());
    }

    #[test]
    fn connected_and_bounded() {
        let d = generate_synthetic(&params(3)).unwrap();
        assert_eq!(d.edges.len(), 80);
        assert!(d.edges.iter().all(|e| (MIN_LEN..MAX_LEN).contains(&e.length)));
        let net = load_graph(d.edges.clone()).unwrap();
        assert_eq!(net.vertex_count(), 50);
        let mut seen = [false; 50];
        let mut stack = vec![0u32];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &e in net.incident(v) {
                let w = net.edge(e).other(v);
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    stack.push(w);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn infeasible() {
        let mut p = params(1);
        p.edges = 10;
        assert!(generate_synthetic(&p).is_err());
        p.vertices = 4;
        p.edges = 7;
        assert!(generate_synthetic(&p).is_err());
    }

    #[test]
    fn edges_join_near_points() {
        let d = generate_synthetic(&SynthParams {
            seed: 2,
            vertices: 400,
            edges: 800,
            events: 0,
            horizon: 10,
        })
        .unwrap();
        let side = 20.0 * 150.0;
        let mut spans: Vec<f64> = d
            .edges
            .iter()
            .map(|e| {
                let g = e.geometry.as_ref().unwrap();
                (g[0][0] - g[1][0]).hypot(g[0][1] - g[1][1])
            })
            .collect();
        spans.sort_by(f64::total_cmp);
        assert!(spans[spans.len() / 2] < side / 10.0);
    }

    #[test]
    fn complete_graph_is_reachable() {
        let d = generate_synthetic(&SynthParams {
            seed: 5,
            vertices: 12,
            edges: 66,
            events: 10,
            horizon: 10,
        })
        .unwrap();
        assert!(load_graph(d.edges).is_ok());
    }
}
