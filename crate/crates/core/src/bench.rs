//! Timing harness behind `tnkde benchmark`.

use serde::Serialize;

use crate::engine::{run_batch, Method, QuerySpec, RunOptions};
use crate::error::{Error, Result};
use crate::events::EventStores;
use crate::network::RoadNetwork;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryTiming {
    pub t: i64,
    pub b_s: f64,
    pub b_t: f64,
    /// Median wall time in seconds.
    pub seconds: f64,
    /// Sum of all lixel densities.
    pub checksum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub lixel_sharing: bool,
    /// Median seconds for shared index construction.
    pub build_seconds: f64,
    /// Median seconds for the whole batch, builds included.
    pub total_seconds: f64,
    pub index_nodes: usize,
    pub queries: Vec<QueryTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub vertices: usize,
    pub edges: usize,
    pub events: usize,
    pub lixels: usize,
    pub repetitions: usize,
    pub methods: Vec<MethodReport>,
}

pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Runs the batch once per method and repetition. `specs` provide times,
/// bandwidths and the shared settings; their method field is overridden.
pub fn benchmark(
    net: &RoadNetwork,
    stores: &EventStores,
    specs: &[QuerySpec],
    methods: &[Method],
    repetitions: usize,
    opts: &RunOptions,
) -> Result<BenchmarkReport> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("at least one repetition is needed".into()));
    }
    let mut reports = Vec::with_capacity(methods.len());
    let mut lixels = 0;
    for &method in methods {
        let batch: Vec<QuerySpec> = specs.iter().map(|s| QuerySpec { method, ..s.clone() }).collect();
        let mut builds = Vec::with_capacity(repetitions);
        let mut totals = Vec::with_capacity(repetitions);
        let mut per_query: Vec<Vec<f64>> = vec![Vec::with_capacity(repetitions); batch.len()];
        let mut checksums = Vec::new();
        let mut nodes = 0;
        for _ in 0..repetitions {
            let clock = std::time::Instant::now();
            let out = run_batch(net, stores, &batch, opts)?;
            totals.push(clock.elapsed().as_secs_f64());
            builds.push(out.stats.build_seconds);
            for (slot, s) in per_query.iter_mut().zip(&out.stats.query_seconds) {
                slot.push(*s);
            }
            checksums = out.fields.iter().map(|f| f.total()).collect();
            lixels = out.fields.first().map_or(0, |f| f.len());
            nodes = out.stats.index_nodes;
        }
        reports.push(MethodReport {
            method,
            lixel_sharing: batch.first().is_some_and(|s| s.sharing_active()),
            build_seconds: median(&mut builds),
            total_seconds: median(&mut totals),
            index_nodes: nodes,
            queries: batch
                .iter()
                .zip(per_query.iter_mut())
                .zip(checksums)
                .map(|((s, times), checksum)| QueryTiming {
                    t: s.t,
                    b_s: s.b_s,
                    b_t: s.b_t,
                    seconds: median(times),
                    checksum,
                })
                .collect(),
        });
    }
    Ok(BenchmarkReport {
        vertices: net.vertex_count(),
        edges: net.edge_count(),
        events: stores.total_events(),
        lixels,
        repetitions,
        methods: reports,
    })
}

/// Least-squares line `y = a + b x` and its coefficient of determination.
pub fn affine_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (intercept, slope, r2)
}
