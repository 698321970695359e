//! Density assembly: for every lixel, sum the per-edge contributions of all
//! events within both bandwidths.
//!
//! Work is split by source edge. Each source edge needs two bounded shortest
//! path trees (from its endpoints); every lixel on it then reaches any target
//! vertex in O(1). Per target edge the events closer to the start vertex and
//! those closer to the end vertex are aggregated separately, as are events
//! before and after the query time, so each event is counted exactly once.

mod sharing;

pub use sharing::{
    classify_edge, classify_edges, dominated_contribution, ls_candidate_positions, recover_from_differences,
    DifferenceAccumulator, EdgeClass, EdgeClassification, LinearContribution, TargetGeometry,
};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggindex::{
    build_ada, build_dynamic_forest, build_range_forest, AdaIndex, DynamicRangeForest, EdgeAggregator, QuantizedForest,
    RangeForest, SpatialRange,
};
use crate::error::{Error, Result};
use crate::events::{temporal_window, EdgeEventStore, EventStores, Half, TimeWindow};
use crate::kernels::{spatial_basis, temporal_basis_with_origin, AggLayout, KernelBasis, KernelConfig, KernelKind, Side, Terms};
use crate::network::{bounded_dijkstra, edge_lixels, DistanceTable, EdgeIdx, EndpointRoute, Lixel, RoadNetwork};

/// Deepest layer a forest is grown to when no depth is given.
pub const MAX_FOREST_DEPTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Shared shortest paths, events scanned one by one.
    Sps,
    /// Prefix arrays rebuilt for every window.
    Ada,
    /// Persistent range forest.
    Rfs,
    /// Dynamic range forest, optionally quantized.
    Drfs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sps, Method::Ada, Method::Rfs, Method::Drfs];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sps => "sps",
            Method::Ada => "ada",
            Method::Rfs => "rfs",
            Method::Drfs => "drfs",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// One density query over the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub t: i64,
    pub b_s: f64,
    pub b_t: f64,
    /// Lixel length.
    pub g: f64,
    pub method: Method,
    pub lixel_sharing: bool,
    /// DRFS depth `H`; `None` grows each forest until its leaves are single
    /// positions.
    pub depth: Option<u32>,
    /// DRFS query depth `H_0`; `None` queries at full depth.
    pub quantize: Option<u32>,
    pub kernels: KernelConfig,
}

impl QuerySpec {
    pub fn new(t: i64, b_s: f64, b_t: f64, g: f64, method: Method) -> Self {
        QuerySpec {
            t,
            b_s,
            b_t,
            g,
            method,
            lixel_sharing: false,
            depth: None,
            quantize: None,
            kernels: KernelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("b_s", self.b_s), ("b_t", self.b_t), ("lixel length", self.g)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.depth == Some(0) || self.quantize == Some(0) {
            return Err(Error::InvalidParameter("forest depths start at 1".into()));
        }
        if let (Some(h), Some(h0)) = (self.depth, self.quantize) {
            if h0 > h {
                return Err(Error::InvalidParameter(format!("quantized depth {h0} exceeds forest depth {h}")));
            }
        }
        Ok(())
    }

    /// Lixel Sharing applies to index methods under a triangular spatial
    /// kernel; anywhere else the flag is ignored.
    pub fn sharing_active(&self) -> bool {
        self.lixel_sharing && self.kernels.spatial == KernelKind::Triangular && self.method != Method::Sps
    }
}

/// Density per lixel, in network lixel order (edge, then index).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub lixels: Vec<Lixel>,
    pub density: Vec<f64>,
}

impl DensityField {
    pub fn len(&self) -> usize {
        self.lixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lixels.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.density.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Lixel, f64)> {
        self.lixels.iter().zip(self.density.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker cap; `None` uses every core.
    pub threads: Option<usize>,
}

/// Counters of one query in a batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecStats {
    /// Per source edge: index queries issued on behalf of single lixels.
    pub lixel_queries: Vec<u64>,
    /// Per source edge: whole-edge probes for dominated edges.
    pub root_probes: Vec<u64>,
    /// Per source edge: sharing ran and left no edge for per-lixel queries.
    pub eq_empty: Vec<bool>,
    /// Index nodes touched by all queries.
    pub visits: u64,
}

impl SpecStats {
    pub fn total_lixel_queries(&self) -> u64 {
        self.lixel_queries.iter().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchStats {
    /// Network-wide index constructions (one per forest layout, one per
    /// query for prefix arrays).
    pub index_builds: usize,
    /// Nodes allocated by forest indexes.
    pub index_nodes: usize,
    /// Wall time spent on shared work: forest builds and shortest path
    /// trees reused across the batch.
    pub build_seconds: f64,
    /// Wall time per query, including any per-query index rebuild.
    pub query_seconds: Vec<f64>,
    pub specs: Vec<SpecStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub fields: Vec<DensityField>,
    pub stats: BatchStats,
}

/// `R_max` for one side of a target edge: the largest distance from that
/// side's endpoint at which an event still counts for this side. Negative
/// means the side is empty.
pub fn aggregation_boundary(d_qc: f64, d_qd: f64, target_len: f64, b_s: f64, side: Side) -> f64 {
    match side {
        Side::Start => (b_s - d_qc).min(0.5 * (-d_qc + d_qd + target_len)),
        Side::End => (b_s - d_qd).min(0.5 * (-d_qd + d_qc + target_len)),
    }
}

/// Offset ranges for both sides. Events at the breakpoint go to the start side.
fn side_ranges(d_qc: f64, d_qd: f64, len: f64, b_s: f64) -> (SpatialRange, SpatialRange) {
    let m = 0.5 * (-d_qc + d_qd + len);
    let hi = (b_s - d_qc).min(m);
    let start = if hi >= 0.0 { SpatialRange::closed(0.0, hi) } else { SpatialRange::empty() };
    let lo_b = len - (b_s - d_qd);
    let end = if m >= lo_b {
        SpatialRange { lo: m, lo_open: true, hi: len }
    } else {
        SpatialRange::closed(lo_b, len)
    };
    let end = if end.is_empty() { SpatialRange::empty() } else { end };
    (start, end)
}

/// Kernels whose value depends on `|t - t_i|` through a formula that is the
/// same on both sides of `t`.
fn symmetric_in_time(kind: KernelKind) -> bool {
    matches!(kind, KernelKind::Epanechnikov | KernelKind::Cosine | KernelKind::Constant)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct LayoutKey {
    kernels: KernelConfig,
    b_s: Option<u64>,
    b_t: Option<u64>,
}

impl From<&AggLayout> for LayoutKey {
    fn from(l: &AggLayout) -> Self {
        LayoutKey {
            kernels: l.kernels,
            b_s: l.spatial_bandwidth.map(f64::to_bits),
            b_t: l.temporal_bandwidth.map(f64::to_bits),
        }
    }
}

enum Agg<'a> {
    None,
    Ada(Box<AdaIndex>),
    Rfs(&'a RangeForest),
    Drfs(QuantizedForest<'a>),
}

impl Agg<'_> {
    fn aggregate(&self, w: &TimeWindow, half: Half, side: Side, r: &SpatialRange, visits: &mut u64) -> crate::kernels::AggVector {
        match self {
            Agg::None => unreachable!("event scans do not use an index"),
            Agg::Ada(a) => a.aggregate(w, half, side, r, visits),
            Agg::Rfs(f) => f.aggregate(w, half, side, r, visits),
            Agg::Drfs(q) => q.aggregate(w, half, side, r, visits),
        }
    }
}

/// Forest indexes shared by every query of a batch.
#[derive(Default)]
struct IndexCache {
    rfs: HashMap<LayoutKey, Vec<Option<RangeForest>>>,
    drfs: HashMap<(LayoutKey, Option<u32>), Vec<Option<DynamicRangeForest>>>,
    builds: usize,
    nodes: usize,
}

fn build_dynamic(store: &EdgeEventStore, layout: &AggLayout, depth: Option<u32>) -> Result<DynamicRangeForest> {
    match depth {
        Some(h) => build_dynamic_forest(store, layout, h),
        None => {
            let mut f = build_dynamic_forest(store, layout, 1)?;
            f.extend_until_resolved(MAX_FOREST_DEPTH);
            Ok(f)
        }
    }
}

impl IndexCache {
    fn ensure(&mut self, stores: &EventStores, layout: &AggLayout, spec: &QuerySpec) -> Result<()> {
        let key = LayoutKey::from(layout);
        match spec.method {
            Method::Rfs if !self.rfs.contains_key(&key) => {
                let forests: Vec<Option<RangeForest>> = stores
                    .stores
                    .par_iter()
                    .map(|s| s.as_ref().map(|s| build_range_forest(s, layout)))
                    .collect();
                self.nodes += forests.iter().flatten().map(|f| f.node_count()).sum::<usize>();
                self.builds += 1;
                self.rfs.insert(key, forests);
            }
            Method::Drfs if !self.drfs.contains_key(&(key, spec.depth)) => {
                let forests = stores
                    .stores
                    .par_iter()
                    .map(|s| s.as_ref().map(|s| build_dynamic(s, layout, spec.depth)).transpose())
                    .collect::<Result<Vec<_>>>()?;
                self.nodes += forests.iter().flatten().map(|f| f.node_count()).sum::<usize>();
                self.builds += 1;
                self.drfs.insert((key, spec.depth), forests);
            }
            _ => {}
        }
        Ok(())
    }
}

/// Everything one query needs, resolved against the dataset.
struct Prepared<'a> {
    spec: &'a QuerySpec,
    layout: AggLayout,
    spatial: KernelBasis,
    /// Temporal half and its query coefficients.
    halves: Vec<(Half, Terms)>,
    /// Per edge: window, `None` when no event of the edge is in it.
    windows: Vec<Option<TimeWindow>>,
    aggs: Vec<Agg<'a>>,
}

struct Dataset<'a> {
    net: &'a RoadNetwork,
    stores: &'a EventStores,
    origin: i64,
}

impl<'a> Dataset<'a> {
    fn prepare(&self, spec: &'a QuerySpec, cache: &'a IndexCache, builds: &mut usize) -> Result<Prepared<'a>> {
        let layout = AggLayout::new(spec.kernels, spec.b_s, spec.b_t, self.origin);
        let spatial = spatial_basis(spec.kernels.spatial, spec.b_s)?;
        let merged = symmetric_in_time(spec.kernels.temporal);
        let halves: Vec<(Half, Terms)> = if merged { &[Half::Earlier][..] } else { &Half::BOTH[..] }
            .iter()
            .map(|&h| {
                let b = temporal_basis_with_origin(spec.kernels.temporal, spec.b_t, h, self.origin as f64)?;
                Ok((h, layout.temporal_query(&b, spec.t, h)))
            })
            .collect::<Result<_>>()?;
        let windows: Vec<Option<TimeWindow>> = self
            .stores
            .stores
            .iter()
            .map(|s| {
                let s = s.as_ref()?;
                let mut w = temporal_window(s, spec.t, spec.b_t);
                if w.is_empty() {
                    return None;
                }
                if merged {
                    w.split = w.hi;
                }
                Some(w)
            })
            .collect();
        let key = LayoutKey::from(&layout);
        let aggs: Vec<Agg<'a>> = match spec.method {
            Method::Sps => windows.iter().map(|_| Agg::None).collect(),
            Method::Ada => {
                *builds += 1;
                self.stores
                    .stores
                    .par_iter()
                    .zip(&windows)
                    .map(|(s, w)| match (s, w) {
                        (Some(s), Some(w)) => Agg::Ada(Box::new(build_ada(s, w, &layout))),
                        _ => Agg::None,
                    })
                    .collect()
            }
            Method::Rfs => cache.rfs[&key].iter().map(|f| f.as_ref().map_or(Agg::None, Agg::Rfs)).collect(),
            Method::Drfs => {
                let max_layer = spec.quantize.unwrap_or(u32::MAX);
                cache.drfs[&(key, spec.depth)]
                    .iter()
                    .map(|f| f.as_ref().map_or(Agg::None, |forest| Agg::Drfs(QuantizedForest { forest, max_layer })))
                    .collect()
            }
        };
        Ok(Prepared {
            spec,
            layout,
            spatial,
            halves,
            windows,
            aggs,
        })
    }

    /// Distance tables from both endpoints of `e` and the geometry of every
    /// edge touching them that passes `keep`, ascending by edge.
    fn neighbourhood(&self, e: EdgeIdx, b_s: f64, keep: impl Fn(EdgeIdx) -> bool) -> Result<Neighbourhood> {
        let edge = self.net.edge(e);
        let radius = b_s + edge.length;
        let tables = (bounded_dijkstra(self.net, edge.a, radius)?, bounded_dijkstra(self.net, edge.b, radius)?);
        let mut edges: Vec<EdgeIdx> = tables
            .0
            .iter()
            .chain(tables.1.iter())
            .flat_map(|(v, _)| self.net.incident(v).iter().copied())
            .filter(|&f| keep(f))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let geometry = edges
            .into_iter()
            .filter_map(|f| {
                let edge = self.net.edge(f);
                let store = self.stores.get(f)?;
                Some(TargetGeometry {
                    edge: f,
                    length: edge.length,
                    route_c: EndpointRoute::lookup(&tables.0, &tables.1, edge.a),
                    route_d: EndpointRoute::lookup(&tables.0, &tables.1, edge.b),
                    min_offset: store.min_offset().unwrap_or(0.0),
                    max_offset: store.max_offset().unwrap_or(0.0),
                })
            })
            .collect();
        Ok(Neighbourhood { tables, geometry })
    }

    /// Per-query neighbourhood restricted to edges with in-window events.
    fn windowed(&self, p: &Prepared, e: EdgeIdx) -> Result<Neighbourhood> {
        self.neighbourhood(e, p.spec.b_s, |f| p.windows[f as usize].is_some())
    }

    fn targets<'n>(&self, p: &Prepared, nb: &'n Neighbourhood) -> Vec<Target<'n>>
    where
        'a: 'n,
    {
        nb.geometry
            .iter()
            .filter_map(|g| {
                Some(Target {
                    geometry: g,
                    window: p.windows[g.edge as usize]?,
                    store: self.stores.get(g.edge)?,
                })
            })
            .collect()
    }
}

/// Shortest path tables of one source edge and the edges they reach.
struct Neighbourhood {
    tables: (DistanceTable, DistanceTable),
    geometry: Vec<TargetGeometry>,
}

struct Target<'a> {
    geometry: &'a TargetGeometry,
    window: TimeWindow,
    store: &'a EdgeEventStore,
}

#[derive(Default)]
struct Counters {
    lixel_queries: u64,
    root_probes: u64,
    visits: u64,
}

/// Events of `target` scanned one by one, distances through its endpoints.
fn scan_target(p: &Prepared, t: &Target, d_qc: f64, d_qd: f64) -> f64 {
    let spec = p.spec;
    let w = t.window.full_span();
    let len = t.geometry.length;
    let mut sum = 0.0;
    for ev in &t.store.time_order()[w.before..w.upto] {
        let d = (d_qc + ev.offset).min(d_qd + len - ev.offset);
        let gap = (spec.t - ev.timestamp).abs() as f64;
        sum += spec.kernels.weight(d, spec.b_s, gap, spec.b_t);
    }
    sum
}

/// Events on the lixel's own edge, with the along-edge path as a third route.
fn scan_own_edge(p: &Prepared, store: &EdgeEventStore, window: &TimeWindow, x: f64, len: f64, d_ab: f64, d_ba: f64) -> f64 {
    let spec = p.spec;
    let w = window.full_span();
    let mut sum = 0.0;
    for ev in &store.time_order()[w.before..w.upto] {
        let d = (x - ev.offset)
            .abs()
            .min(x + d_ab + len - ev.offset)
            .min(len - x + d_ba + ev.offset);
        let gap = (spec.t - ev.timestamp).abs() as f64;
        sum += spec.kernels.weight(d, spec.b_s, gap, spec.b_t);
    }
    sum
}

/// Index-backed contribution of one target edge to the lixel at `x`.
fn query_target(p: &Prepared, t: &Target, agg: &Agg, d_qc: f64, d_qd: f64, c: &mut Counters) -> f64 {
    let (start, end) = side_ranges(d_qc, d_qd, t.geometry.length, p.spec.b_s);
    let mut sum = 0.0;
    for (side, range, u) in [(Side::Start, start, d_qc), (Side::End, end, d_qd)] {
        if range.is_empty() {
            continue;
        }
        let qs = p.spatial.query_terms(u);
        for (half, qt) in &p.halves {
            if t.window.span(*half).is_empty() {
                continue;
            }
            c.lixel_queries += 1;
            let a = agg.aggregate(&t.window, *half, side, &range, &mut c.visits);
            sum += p.layout.dot_side(&qs, qt, &a, side);
        }
    }
    sum
}

fn lixel_density(
    ds: &Dataset,
    p: &Prepared,
    e: EdgeIdx,
    x: f64,
    tables: &(DistanceTable, DistanceTable),
    targets: &[&Target],
    c: &mut Counters,
) -> f64 {
    let edge = ds.net.edge(e);
    let len = edge.length;
    let b_s = p.spec.b_s;
    let mut sum = 0.0;
    let mut own_done = false;
    let own = |sum: &mut f64| {
        if let (Some(store), Some(w)) = (ds.stores.get(e), p.windows[e as usize].as_ref()) {
            let d_ab = tables.0.dist_or_inf(edge.b);
            let d_ba = tables.1.dist_or_inf(edge.a);
            *sum += scan_own_edge(p, store, w, x, len, d_ab, d_ba);
        }
    };
    for t in targets {
        if t.geometry.edge == e {
            continue;
        }
        if !own_done && t.geometry.edge > e {
            own(&mut sum);
            own_done = true;
        }
        let d_qc = t.geometry.route_c.distance_at(x, len);
        let d_qd = t.geometry.route_d.distance_at(x, len);
        if d_qc.min(d_qd) > b_s {
            continue;
        }
        sum += match &p.aggs[t.geometry.edge as usize] {
            Agg::None => scan_target(p, t, d_qc, d_qd),
            agg => query_target(p, t, agg, d_qc, d_qd, c),
        };
    }
    if !own_done {
        own(&mut sum);
    }
    sum
}

struct EdgeResult {
    density: Vec<f64>,
    lixel_queries: u64,
    root_probes: u64,
    visits: u64,
    eq_empty: bool,
}

fn process_edge(
    ds: &Dataset,
    p: &Prepared,
    e: EdgeIdx,
    lixels: &[Lixel],
    nb: &Neighbourhood,
) -> EdgeResult {
    let len = ds.net.edge(e).length;
    let targets = ds.targets(p, nb);
    let mut c = Counters::default();
    let centers: Vec<f64> = lixels.iter().map(|q| q.center).collect();
    let mut shared = None;
    let mut per_lixel: Vec<&Target> = Vec::with_capacity(targets.len());
    let mut eq_empty = false;
    if p.spec.sharing_active() {
        let mut acc = DifferenceAccumulator::new(centers.len());
        let mut remaining = 0;
        for t in &targets {
            if t.geometry.edge == e {
                continue;
            }
            match classify_edge(&centers, len, t.geometry, p.spec.b_s) {
                EdgeClass::OutOfBandwidth => {}
                EdgeClass::Remaining => {
                    remaining += 1;
                    per_lixel.push(t);
                }
                EdgeClass::Dominated(side) => {
                    let agg = &p.aggs[t.geometry.edge as usize];
                    let whole = SpatialRange::closed(0.0, t.geometry.length);
                    let halves: Vec<_> = p
                        .halves
                        .iter()
                        .filter(|(h, _)| !t.window.span(*h).is_empty())
                        .map(|(h, qt)| {
                            c.root_probes += 1;
                            (*h, *qt, agg.aggregate(&t.window, *h, side, &whole, &mut c.visits))
                        })
                        .collect();
                    let lin = dominated_contribution(&p.layout, side, p.spec.b_s, &halves);
                    let route = match side {
                        Side::Start => &t.geometry.route_c,
                        Side::End => &t.geometry.route_d,
                    };
                    acc.add(&centers, len, route, lin);
                }
            }
        }
        eq_empty = remaining == 0;
        shared = Some(recover_from_differences(&acc));
    } else {
        per_lixel.extend(targets.iter());
    }
    let density = centers
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let d = lixel_density(ds, p, e, x, &nb.tables, &per_lixel, &mut c);
            shared.as_ref().map_or(d, |s| d + s[i])
        })
        .collect();
    EdgeResult {
        density,
        lixel_queries: c.lixel_queries,
        root_probes: c.root_probes,
        visits: c.visits,
        eq_empty,
    }
}

fn check_batch(specs: &[QuerySpec]) -> Result<()> {
    for s in specs {
        s.validate()?;
    }
    if let Some(first) = specs.first() {
        for s in &specs[1..] {
            if s.g != first.g {
                return Err(Error::InconsistentBatch(format!("lixel length {} vs {}", s.g, first.g)));
            }
            if s.kernels != first.kernels {
                return Err(Error::InconsistentBatch("kernel configuration differs between queries".into()));
            }
        }
    }
    Ok(())
}

fn with_pool<T: Send>(opts: &RunOptions, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs a batch of queries sharing one lixel length and kernel pair. Forest
/// indexes are built once per layout and reused; prefix arrays and, for the
/// scanning baselines, shortest path trees are rebuilt per query.
pub fn run_batch(net: &RoadNetwork, stores: &EventStores, specs: &[QuerySpec], opts: &RunOptions) -> Result<BatchOutput> {
    check_batch(specs)?;
    if stores.stores.len() != net.edge_count() {
        return Err(Error::InvalidParameter("event stores do not match the network".into()));
    }
    with_pool(opts, || run_batch_inner(net, stores, specs))?
}

fn run_batch_inner(net: &RoadNetwork, stores: &EventStores, specs: &[QuerySpec]) -> Result<BatchOutput> {
    let ds = Dataset {
        net,
        stores,
        origin: stores.time_origin(),
    };
    let Some(first) = specs.first() else {
        return Ok(BatchOutput {
            fields: Vec::new(),
            stats: BatchStats::default(),
        });
    };
    let lixels: Vec<Vec<Lixel>> = net
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| edge_lixels(i as EdgeIdx, e.length, first.g))
        .collect();
    let clock = Instant::now();
    let mut cache = IndexCache::default();
    for s in specs {
        let layout = AggLayout::new(s.kernels, s.b_s, s.b_t, ds.origin);
        cache.ensure(stores, &layout, s)?;
    }
    // forest methods share one set of shortest path trees and target
    // geometry, sized for the widest bandwidth in the batch
    let shared_bs = specs
        .iter()
        .filter(|s| matches!(s.method, Method::Rfs | Method::Drfs))
        .map(|s| s.b_s)
        .fold(f64::NAN, f64::max);
    let shared: Option<Vec<Neighbourhood>> = if shared_bs.is_nan() {
        None
    } else {
        Some(
            (0..net.edge_count())
                .into_par_iter()
                .map(|e| ds.neighbourhood(e as EdgeIdx, shared_bs, |f| stores.get(f).is_some()))
                .collect::<Result<_>>()?,
        )
    };
    let build_seconds = clock.elapsed().as_secs_f64();
    let mut builds = cache.builds;
    let mut fields = Vec::with_capacity(specs.len());
    let mut stats = Vec::with_capacity(specs.len());
    let mut query_seconds = Vec::with_capacity(specs.len());
    for spec in specs {
        let clock = Instant::now();
        let p = ds.prepare(spec, &cache, &mut builds)?;
        let results: Vec<EdgeResult> = (0..net.edge_count())
            .into_par_iter()
            .map(|e| {
                let ls = &lixels[e];
                let e = e as EdgeIdx;
                match (&shared, spec.method) {
                    (Some(nb), Method::Rfs | Method::Drfs) => Ok(process_edge(&ds, &p, e, ls, &nb[e as usize])),
                    _ => Ok(process_edge(&ds, &p, e, ls, &ds.windowed(&p, e)?)),
                }
            })
            .collect::<Result<_>>()?;
        let mut st = SpecStats::default();
        let mut density = Vec::with_capacity(lixels.iter().map(Vec::len).sum());
        for r in results {
            density.extend(r.density);
            st.lixel_queries.push(r.lixel_queries);
            st.root_probes.push(r.root_probes);
            st.eq_empty.push(r.eq_empty);
            st.visits += r.visits;
        }
        fields.push(DensityField {
            lixels: lixels.iter().flatten().copied().collect(),
            density,
        });
        stats.push(st);
        query_seconds.push(clock.elapsed().as_secs_f64());
    }
    Ok(BatchOutput {
        fields,
        stats: BatchStats {
            index_builds: builds,
            index_nodes: cache.nodes,
            build_seconds,
            query_seconds,
            specs: stats,
        },
    })
}

/// One query over every lixel.
pub fn compute_density(net: &RoadNetwork, stores: &EventStores, spec: &QuerySpec, opts: &RunOptions) -> Result<DensityField> {
    let mut out = run_batch(net, stores, std::slice::from_ref(spec), opts)?;
    Ok(out.fields.pop().expect("one field per query"))
}

/// Density at a single lixel, summed edge by edge without sharing.
pub fn compute_lixel_density(net: &RoadNetwork, stores: &EventStores, lixel: &Lixel, spec: &QuerySpec) -> Result<f64> {
    spec.validate()?;
    let ds = Dataset {
        net,
        stores,
        origin: stores.time_origin(),
    };
    let layout = AggLayout::new(spec.kernels, spec.b_s, spec.b_t, ds.origin);
    let mut cache = IndexCache::default();
    cache.ensure(stores, &layout, spec)?;
    let mut builds = 0;
    let p = ds.prepare(spec, &cache, &mut builds)?;
    let nb = ds.windowed(&p, lixel.edge)?;
    let targets = ds.targets(&p, &nb);
    let refs: Vec<&Target> = targets.iter().collect();
    let mut c = Counters::default();
    Ok(lixel_density(&ds, &p, lixel.edge, lixel.center, &nb.tables, &refs, &mut c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_examples() {
        assert_eq!(aggregation_boundary(30.0, 90.0, 100.0, 200.0, Side::Start), 80.0);
        assert_eq!(aggregation_boundary(30.0, 90.0, 100.0, 50.0, Side::Start), 20.0);
        assert!(aggregation_boundary(60.0, 90.0, 100.0, 50.0, Side::Start) < 0.0);
    }

    #[test]
    fn ranges_split_at_breakpoint() {
        let (s, e) = side_ranges(30.0, 90.0, 100.0, 200.0);
        assert_eq!(s, SpatialRange::closed(0.0, 80.0));
        assert!(e.lo_open && e.lo == 80.0 && e.hi == 100.0);
        let (s, e) = side_ranges(30.0, f64::INFINITY, 100.0, 50.0);
        assert_eq!(s, SpatialRange::closed(0.0, 20.0));
        assert!(e.is_empty());
        let (s, e) = side_ranges(f64::INFINITY, 10.0, 100.0, 50.0);
        assert!(s.is_empty());
        assert_eq!(e, SpatialRange::closed(60.0, 100.0));
    }

    #[test]
    fn spec_validation() {
        let mut s = QuerySpec::new(0, 10.0, 10.0, 1.0, Method::Rfs);
        assert!(s.validate().is_ok());
        s.b_s = 0.0;
        assert!(s.validate().is_err());
        s.b_s = 1.0;
        s.depth = Some(3);
        s.quantize = Some(4);
        assert!(s.validate().is_err());
        assert_eq!("RFS".parse::<Method>().unwrap(), Method::Rfs);
        assert!("oracle".parse::<Method>().is_err());
    }

    #[test]
    fn batch_must_agree() {
        let a = QuerySpec::new(0, 10.0, 10.0, 1.0, Method::Rfs);
        let mut b = a.clone();
        b.g = 2.0;
        assert!(matches!(check_batch(&[a.clone(), b]), Err(Error::InconsistentBatch(_))));
        let mut c = a.clone();
        c.kernels.temporal = KernelKind::Cosine;
        assert!(check_batch(&[a, c]).is_err());
    }
}
