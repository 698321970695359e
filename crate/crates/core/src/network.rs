//! Road network graph, bounded shortest paths and lixel segmentation.
//!
//! Vertex and edge ids are opaque strings at the boundary and dense `u32`
//! indices everywhere else. The graph is undirected.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};

pub type VertexIdx = u32;
pub type EdgeIdx = u32;

/// One row of the graph file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    /// Optional polyline carried through for GeoJSON export only.
    pub geometry: Option<Vec<[f64; 2]>>,
}

impl EdgeRecord {
    pub fn new(id: &str, from: &str, to: &str, length: f64) -> Self {
        EdgeRecord {
            id: id.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            length,
            geometry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub name: String,
    pub a: VertexIdx,
    pub b: VertexIdx,
    pub length: f64,
    pub geometry: Option<Vec<[f64; 2]>>,
}

impl Edge {
    pub fn other(&self, v: VertexIdx) -> VertexIdx {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RoadNetwork {
    vertex_names: Vec<String>,
    vertex_lookup: HashMap<String, VertexIdx>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<String, EdgeIdx>,
    adjacency: Vec<Vec<EdgeIdx>>,
}

impl RoadNetwork {
    /// Builds a network from edge records. Vertices are created on first
    /// mention, in record order.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = EdgeRecord>,
    {
        let mut net = RoadNetwork::default();
        for rec in records {
            if rec.from.is_empty() || rec.to.is_empty() {
                return Err(Error::DanglingVertex(rec.id));
            }
            if !(rec.length.is_finite() && rec.length > 0.0) {
                return Err(Error::InvalidLength(rec.id, rec.length));
            }
            if rec.from == rec.to {
                return Err(Error::SelfLoop(rec.id, rec.from));
            }
            if net.edge_lookup.contains_key(&rec.id) {
                return Err(Error::DuplicateEdge(rec.id));
            }
            let a = net.intern_vertex(&rec.from);
            let b = net.intern_vertex(&rec.to);
            let idx = net.edges.len() as EdgeIdx;
            net.edge_lookup.insert(rec.id.clone(), idx);
            net.adjacency[a as usize].push(idx);
            net.adjacency[b as usize].push(idx);
            net.edges.push(Edge {
                name: rec.id,
                a,
                b,
                length: rec.length,
                geometry: rec.geometry,
            });
        }
        Ok(net)
    }

    fn intern_vertex(&mut self, name: &str) -> VertexIdx {
        if let Some(&v) = self.vertex_lookup.get(name) {
            return v;
        }
        let v = self.vertex_names.len() as VertexIdx;
        self.vertex_names.push(name.to_string());
        self.vertex_lookup.insert(name.to_string(), v);
        self.adjacency.push(Vec::new());
        v
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeIdx) -> &Edge {
        &self.edges[e as usize]
    }

    pub fn incident(&self, v: VertexIdx) -> &[EdgeIdx] {
        &self.adjacency[v as usize]
    }

    pub fn vertex_name(&self, v: VertexIdx) -> &str {
        &self.vertex_names[v as usize]
    }

    pub fn vertex(&self, name: &str) -> Option<VertexIdx> {
        self.vertex_lookup.get(name).copied()
    }

    pub fn edge_by_name(&self, name: &str) -> Option<EdgeIdx> {
        self.edge_lookup.get(name).copied()
    }

    pub fn has_geometry(&self) -> bool {
        !self.edges.is_empty() && self.edges.iter().all(|e| e.geometry.is_some())
    }
}

pub fn load_graph<I>(records: I) -> Result<RoadNetwork>
where
    I: IntoIterator<Item = EdgeRecord>,
{
    RoadNetwork::from_records(records)
}

/// Shortest distances from one source, truncated at a radius.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    pub source: VertexIdx,
    pub radius: f64,
    /// Reached vertices sorted by index.
    dist: Vec<(VertexIdx, f64)>,
}

impl DistanceTable {
    /// `None` means the vertex is farther than the radius.
    pub fn get(&self, v: VertexIdx) -> Option<f64> {
        self.dist
            .binary_search_by_key(&v, |&(u, _)| u)
            .ok()
            .map(|i| self.dist[i].1)
    }

    /// Like [`get`](Self::get) with `+inf` for out-of-radius vertices.
    pub fn dist_or_inf(&self, v: VertexIdx) -> f64 {
        self.get(v).unwrap_or(f64::INFINITY)
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    /// Reached vertices in ascending index order.
    pub fn vertices(&self) -> Vec<VertexIdx> {
        self.dist.iter().map(|&(v, _)| v).collect()
    }

    /// Reached vertices with their distances, ascending by index.
    pub fn iter(&self) -> impl Iterator<Item = (VertexIdx, f64)> + '_ {
        self.dist.iter().copied()
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: VertexIdx,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // min-heap on (dist, vertex)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `source`, settling only vertices within `radius`.
pub fn bounded_dijkstra(net: &RoadNetwork, source: VertexIdx, radius: f64) -> Result<DistanceTable> {
    if source as usize >= net.vertex_count() {
        return Err(Error::UnknownVertex(source.to_string()));
    }
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::InvalidParameter(format!("negative radius {radius}")));
    }
    SCRATCH.with(|cell| {
        let mut scratch = cell.borrow_mut();
        let Scratch { best, settled, touched } = &mut *scratch;
        if best.len() < net.vertex_count() {
            best.resize(net.vertex_count(), f64::INFINITY);
            settled.resize(net.vertex_count(), false);
        }
        let mut heap = BinaryHeap::new();
        let mut out = Vec::new();
        best[source as usize] = 0.0;
        touched.push(source);
        heap.push(HeapEntry { dist: 0.0, vertex: source });
        while let Some(HeapEntry { dist, vertex }) = heap.pop() {
            if settled[vertex as usize] {
                continue;
            }
            settled[vertex as usize] = true;
            out.push((vertex, dist));
            for &e in net.incident(vertex) {
                let edge = net.edge(e);
                let next = edge.other(vertex);
                let nd = dist + edge.length;
                if settled[next as usize] || nd > radius || nd >= best[next as usize] {
                    continue;
                }
                if best[next as usize] == f64::INFINITY {
                    touched.push(next);
                }
                best[next as usize] = nd;
                heap.push(HeapEntry { dist: nd, vertex: next });
            }
        }
        for v in touched.drain(..) {
            best[v as usize] = f64::INFINITY;
            settled[v as usize] = false;
        }
        out.sort_unstable_by_key(|&(v, _)| v);
        Ok(DistanceTable {
            source,
            radius,
            dist: out,
        })
    })
}

/// Per-thread Dijkstra state, reset through `touched` after each search.
#[derive(Default)]
struct Scratch {
    best: Vec<f64>,
    settled: Vec<bool>,
    touched: Vec<VertexIdx>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

/// A lixel: the `index`-th (1-based) segment of an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lixel {
    pub edge: EdgeIdx,
    pub index: u32,
    /// Offset of the center from the edge's `a` endpoint.
    pub center: f64,
    pub length: f64,
}

/// Number of lixels of length `g` covering an edge of length `len`.
pub fn lixel_count(len: f64, g: f64) -> u32 {
    let mut n = (len / g).ceil().max(1.0) as u32;
    // guard against a zero-length remainder from rounding in len / g
    while n > 1 && (n - 1) as f64 * g >= len {
        n -= 1;
    }
    n
}

/// Lixels of one edge in index order.
pub fn edge_lixels(edge: EdgeIdx, len: f64, g: f64) -> Vec<Lixel> {
    let n = lixel_count(len, g);
    (1..=n)
        .map(|i| {
            let start = (i - 1) as f64 * g;
            let end = if i == n { len } else { (i as f64 * g).min(len) };
            Lixel {
                edge,
                index: i,
                center: 0.5 * (start + end),
                length: end - start,
            }
        })
        .collect()
}

pub fn generate_lixels(net: &RoadNetwork, g: f64) -> Result<Vec<Lixel>> {
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::InvalidParameter(format!("lixel length must be positive, got {g}")));
    }
    Ok(net
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(i, e)| edge_lixels(i as EdgeIdx, e.length, g))
        .collect())
}

/// Shortest distances from both endpoints of a source edge to one target
/// vertex. Either may be `+inf` when the target lies outside the search radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointRoute {
    pub via_a: f64,
    pub via_b: f64,
}

impl EndpointRoute {
    pub fn lookup(from_a: &DistanceTable, from_b: &DistanceTable, target: VertexIdx) -> Self {
        EndpointRoute {
            via_a: from_a.dist_or_inf(target),
            via_b: from_b.dist_or_inf(target),
        }
    }

    /// Distance from a point at `offset` on the source edge to the target.
    #[inline]
    pub fn distance_at(&self, offset: f64, edge_length: f64) -> f64 {
        (offset + self.via_a).min(edge_length - offset + self.via_b)
    }

    /// Offset where the route through `b` starts to win.
    pub fn switch_offset(&self, edge_length: f64) -> f64 {
        0.5 * (edge_length + self.via_b - self.via_a)
    }
}

/// Shortest-path-sharing distance from a lixel center to `target`, using the
/// precomputed tables of the lixel's edge endpoints.
pub fn sps_distance(
    net: &RoadNetwork,
    q: &Lixel,
    target: VertexIdx,
    from_a: &DistanceTable,
    from_b: &DistanceTable,
) -> f64 {
    let len = net.edge(q.edge).length;
    EndpointRoute::lookup(from_a, from_b, target).distance_at(q.center, len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> RoadNetwork {
        load_graph(vec![
            EdgeRecord::new("e1", "v1", "v2", 100.0),
            EdgeRecord::new("e2", "v2", "v3", 50.0),
        ])
        .unwrap()
    }

    #[test]
    fn single_edge() {
        let net = load_graph(vec![EdgeRecord::new("e1", "v1", "v2", 100.0)]).unwrap();
        assert_eq!(net.vertex_count(), 2);
        assert_eq!(net.edge_count(), 1);
    }

    #[test]
    fn two_edge_path_adjacency() {
        let net = path();
        let v2 = net.vertex("v2").unwrap();
        assert_eq!(net.incident(v2), &[0, 1]);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(matches!(
            load_graph(vec![EdgeRecord::new("e1", "v1", "v1", 10.0)]),
            Err(Error::SelfLoop(..))
        ));
        assert!(matches!(
            load_graph(vec![EdgeRecord::new("e1", "v1", "v2", 0.0)]),
            Err(Error::InvalidLength(..))
        ));
        assert!(matches!(
            load_graph(vec![EdgeRecord::new("e1", "v1", "v2", f64::NAN)]),
            Err(Error::InvalidLength(..))
        ));
        assert!(matches!(
            load_graph(vec![EdgeRecord::new("e1", "", "v2", 1.0)]),
            Err(Error::DanglingVertex(..))
        ));
        assert!(matches!(
            load_graph(vec![
                EdgeRecord::new("e1", "v1", "v2", 1.0),
                EdgeRecord::new("e1", "v2", "v3", 1.0)
            ]),
            Err(Error::DuplicateEdge(..))
        ));
    }

    fn table_map(net: &RoadNetwork, t: &DistanceTable) -> Vec<(String, f64)> {
        let mut v: Vec<_> = t.iter().map(|(v, d)| (net.vertex_name(v).to_string(), d)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    #[test]
    fn dijkstra_path_and_cutoff() {
        let net = path();
        let v1 = net.vertex("v1").unwrap();
        let t = bounded_dijkstra(&net, v1, 200.0).unwrap();
        assert_eq!(
            table_map(&net, &t),
            vec![("v1".into(), 0.0), ("v2".into(), 100.0), ("v3".into(), 150.0)]
        );
        let t = bounded_dijkstra(&net, v1, 120.0).unwrap();
        assert_eq!(table_map(&net, &t), vec![("v1".into(), 0.0), ("v2".into(), 100.0)]);
        assert_eq!(t.get(net.vertex("v3").unwrap()), None);
    }

    #[test]
    fn dijkstra_triangle() {
        let net = load_graph(vec![
            EdgeRecord::new("a", "v1", "v2", 3.0),
            EdgeRecord::new("b", "v2", "v3", 4.0),
            EdgeRecord::new("c", "v1", "v3", 5.0),
        ])
        .unwrap();
        let t = bounded_dijkstra(&net, 0, 10.0).unwrap();
        assert_eq!(
            table_map(&net, &t),
            vec![("v1".into(), 0.0), ("v2".into(), 3.0), ("v3".into(), 5.0)]
        );
        assert!(bounded_dijkstra(&net, 9, 1.0).is_err());
    }

    #[test]
    fn lixel_examples() {
        let centers = |len: f64, g: f64| -> Vec<f64> { edge_lixels(0, len, g).iter().map(|l| l.center).collect() };
        assert_eq!(centers(100.0, 50.0), vec![25.0, 75.0]);
        assert_eq!(centers(100.0, 30.0), vec![15.0, 45.0, 75.0, 95.0]);
        assert_eq!(edge_lixels(0, 100.0, 30.0)[3].length, 10.0);
        assert_eq!(centers(10.0, 50.0), vec![5.0]);
        assert!(generate_lixels(&path(), 0.0).is_err());
    }

    #[test]
    fn sps_examples() {
        let net = load_graph(vec![
            EdgeRecord::new("q", "va", "vb", 100.0),
            EdgeRecord::new("x", "va", "vc", 200.0),
            EdgeRecord::new("y", "vb", "vc", 40.0),
        ])
        .unwrap();
        let (va, vb, vc) = (0, 1, 2);
        let ta = bounded_dijkstra(&net, va, 1000.0).unwrap();
        let tb = bounded_dijkstra(&net, vb, 1000.0).unwrap();
        let q = edge_lixels(0, 100.0, 50.0)[0];
        assert_eq!(sps_distance(&net, &q, va, &ta, &tb), 25.0);
        assert_eq!(ta.get(vc), Some(140.0));
        // d(va, vc) is 140 through vb here; with only the direct 200 m route:
        let route = EndpointRoute { via_a: 200.0, via_b: 40.0 };
        assert_eq!(route.distance_at(25.0, 100.0), 115.0);
        let ta = bounded_dijkstra(&net, va, 1.0).unwrap();
        let tb = bounded_dijkstra(&net, vb, 1.0).unwrap();
        assert_eq!(sps_distance(&net, &q, vc, &ta, &tb), f64::INFINITY);
    }
}
