//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any
//! criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{close, kernel_pairs, random_instance};
use tnkde::aggindex::{build_dynamic_forest, DynamicRangeForest, RangeForest, SpatialRange};
use tnkde::bench::affine_fit;
use tnkde::engine::{ls_candidate_positions, run_batch, BatchOutput, Method, QuerySpec, RunOptions};
use tnkde::events::{ingest_events, EdgeEventStore, Event, EventStores, Half, VersionSpan};
use tnkde::kernels::{
    event_term, product_basis, spatial_basis, temporal_basis_with_origin, AggLayout, KernelConfig, KernelKind,
};
use tnkde::network::{bounded_dijkstra, edge_lixels, generate_lixels, load_graph, EndpointRoute, RoadNetwork};
use tnkde::oracle::brute_force_density;
use tnkde::synth::{generate_synthetic, SynthParams};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const METHODS: [Method; 4] = [Method::Sps, Method::Ada, Method::Rfs, Method::Drfs];

fn ceil_log2(n: usize) -> usize {
    (n as f64).log2().ceil() as usize
}

fn spec(t: i64, b_s: f64, b_t: f64, g: f64, method: Method, kernels: KernelConfig) -> QuerySpec {
    let mut s = QuerySpec::new(t, b_s, b_t, g, method);
    s.kernels = kernels;
    s
}

fn batch(net: &RoadNetwork, stores: &EventStores, specs: &[QuerySpec]) -> BatchOutput {
    run_batch(net, stores, specs, &RunOptions::default()).expect("batch runs")
}

fn exactness() -> Outcome {
    let clock = Instant::now();
    let pairs = kernel_pairs();
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let inst = random_instance(1000 + seed, 100, 300, 500);
        let lixels = generate_lixels(&inst.net, inst.g).unwrap();
        // (distance, gap) of every in-bandwidth event per lixel; kernels only
        // change the weights
        let pairs_of: Vec<Vec<(f64, f64)>> = lixels
            .iter()
            .map(|q| {
                brute_force_density(&inst.net, &inst.stores, q, inst.t, inst.b_s, inst.b_t, &KernelConfig::default())
                    .contributions
                    .iter()
                    .map(|c| (c.distance, c.time_gap))
                    .collect()
            })
            .collect();
        for &k in &pairs {
            let oracle: Vec<f64> = pairs_of
                .iter()
                .map(|cs| cs.iter().map(|&(d, gap)| k.spatial.evaluate(d / inst.b_s) * k.temporal.evaluate(gap / inst.b_t)).sum())
                .collect();
            let specs: Vec<QuerySpec> = METHODS.iter().map(|&m| spec(inst.t, inst.b_s, inst.b_t, inst.g, m, k)).collect();
            let out = batch(&inst.net, &inst.stores, &specs);
            for (s, field) in specs.iter().zip(&out.fields) {
                for (i, (&got, &want)) in field.density.iter().zip(&oracle).enumerate() {
                    if !close(got, want, 1e-9, 1e-12) {
                        return Err(format!(
                            "seed {seed} {}x{} {}: lixel {i} got {got} want {want}",
                            k.spatial, k.temporal, s.method
                        ));
                    }
                    worst = worst.max((got - want).abs() / want.abs().max(1e-3));
                    checked += 1;
                }
            }
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let detail = format!("{checked} densities, 25 kernel pairs, worst scaled error {worst:.1e}, {secs:.0}s");
    if secs < 300.0 {
        Ok(detail)
    } else {
        Err(format!("over five minutes: {detail}"))
    }
}

fn decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut check = |got: f64, want: f64, what: &str| -> Result<(), String> {
        let err = (got - want).abs();
        worst = worst.max(err);
        if err > 1e-12 {
            return Err(format!("{what}: {got} vs {want}"));
        }
        Ok(())
    };
    // integer timestamps as in event data, event inside the window and after
    // the origin
    let temporal_sample = |rng: &mut ChaCha8Rng, b: f64, origin: f64| {
        let t = origin + rng.gen_range(b..=4.0 * b).round();
        let t_i = t + rng.gen_range(-b..=b).trunc();
        let half = if t_i < t { Half::Earlier } else { Half::Later };
        (t, t_i, (t - t_i).abs(), half)
    };
    for kind in KernelKind::ALL {
        for _ in 0..10_000 {
            let b = rng.gen_range(1.0..1000.0);
            let s = rng.gen_range(0.0..=b);
            let u = rng.gen_range(0.0..=s);
            let v = s - u;
            let basis = spatial_basis(kind, b).unwrap();
            check(basis.evaluate(u, v), kind.evaluate((u + v) / b), &format!("spatial {kind}"))?;

            let origin = rng.gen_range(-1e6..1e6f64).round();
            let (t, t_i, gap, half) = temporal_sample(&mut rng, b, origin);
            let basis = temporal_basis_with_origin(kind, b, half, origin).unwrap();
            check(basis.evaluate(t, t_i), kind.evaluate(gap / b), &format!("temporal {kind} {half:?}"))?;
        }
    }
    for k in kernel_pairs() {
        for _ in 0..10_000 {
            let b_s = rng.gen_range(1.0..1000.0);
            let s = rng.gen_range(0.0..=b_s);
            let u = rng.gen_range(0.0..=s);
            let b_t = rng.gen_range(1.0..1000.0);
            let origin = rng.gen_range(-1e6..1e6f64).round();
            let (t, t_i, gap, half) = temporal_sample(&mut rng, b_t, origin);
            let basis = product_basis(
                spatial_basis(k.spatial, b_s).unwrap(),
                temporal_basis_with_origin(k.temporal, b_t, half, origin).unwrap(),
            );
            let q = basis.query_vector(u, t);
            let a = event_term(&basis, s - u, t_i);
            let got: f64 = q.as_slice().iter().zip(a.as_slice()).map(|(x, y)| x * y).sum();
            let want = k.spatial.evaluate(s / b_s) * k.temporal.evaluate(gap / b_t);
            check(got, want, &format!("product {}x{}", k.spatial, k.temporal))?;
        }
    }
    Ok(format!("5 kinds x 2 roles and 25 products, 1e4 samples each, max error {worst:.1e}"))
}

fn random_store(rng: &mut ChaCha8Rng, n: usize, len: f64) -> EdgeEventStore {
    let events = (0..n)
        .map(|_| Event {
            offset: rng.gen_range(0.0..=len),
            timestamp: rng.gen_range(0..10_000),
        })
        .collect();
    EdgeEventStore::new(0, len, events)
}

fn rfs_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layout = AggLayout::new(KernelConfig::default(), 300.0, 1000.0, 0);
    let mut detail = Vec::new();
    for n in [16usize, 64, 256, 1024] {
        let len = 500.0;
        let forest = RangeForest::build(&random_store(&mut rng, n, len), &layout);
        let lg = ceil_log2(n);
        let node_bound = n * (lg + 2);
        if forest.node_count() > node_bound {
            return Err(format!("n {n}: {} nodes over {node_bound}", forest.node_count()));
        }
        let visit_bound = 2 * lg as u64 + 2;
        let mut max_visits = 0;
        for _ in 0..10_000 {
            let (a, b) = (rng.gen_range(0..=n), rng.gen_range(0..=n));
            let (x, y) = (rng.gen_range(0.0..=len), rng.gen_range(0.0..=len));
            let mut visits = 0;
            let span = VersionSpan {
                before: a.min(b),
                upto: a.max(b),
            };
            forest.query_counted(span, &SpatialRange::closed(x.min(y), x.max(y)), &mut visits);
            max_visits = max_visits.max(visits);
        }
        if max_visits > visit_bound {
            return Err(format!("n {n}: {max_visits} visits over {visit_bound}"));
        }
        detail.push(format!("n={n} nodes {}/{node_bound} visits {max_visits}/{visit_bound}", forest.node_count()));
    }
    Ok(detail.join(", "))
}

fn persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut queries = 0;
    for seq in 0..1000 {
        let len = rng.gen_range(50.0..500.0);
        let layout = AggLayout::new(KernelConfig::default(), rng.gen_range(50.0..600.0), 500.0, 0);
        let mut forest = DynamicRangeForest::new(&layout, len, rng.gen_range(2..=8)).unwrap();
        let mut now = 0i64;
        let mut log = Vec::new();
        for _ in 0..60 {
            if rng.gen_bool(0.5) {
                now += rng.gen_range(0..5);
                forest.insert_event(Event { offset: rng.gen_range(0.0..=len), timestamp: now }).unwrap();
            } else {
                let latest = forest.latest_version();
                let (a, b) = (rng.gen_range(0..=latest), rng.gen_range(0..=latest));
                let span = VersionSpan {
                    before: a.min(b),
                    upto: a.max(b),
                };
                let (x, y) = (rng.gen_range(0.0..=len), rng.gen_range(0.0..=len));
                let range = SpatialRange::closed(x.min(y), x.max(y));
                log.push((span, range, forest.query(span, &range)));
            }
        }
        for (span, range, first) in &log {
            let again = forest.query(*span, range);
            let same = first.len() == again.len()
                && first.as_slice().iter().zip(again.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Err(format!("sequence {seq}: {span:?} {range:?} changed from {first:?} to {again:?}"));
            }
        }
        queries += log.len();
    }
    Ok(format!("1000 sequences, {queries} replayed queries bitwise identical"))
}

fn quantization() -> Outcome {
    let mut at_two = Vec::new();
    for seed in 0..20 {
        let inst = random_instance(5000 + seed, 100, 300, 500);
        let depth = inst
            .stores
            .iter()
            .map(|s| build_dynamic_forest(s, &AggLayout::new(KernelConfig::default(), inst.b_s, inst.b_t, 0), 1).unwrap())
            .map(|mut f| {
                f.extend_until_resolved(32);
                f.depth()
            })
            .max()
            .unwrap_or(1);
        let mut specs = vec![QuerySpec::new(inst.t, inst.b_s, inst.b_t, inst.g, Method::Sps)];
        for h in 1..=depth {
            let mut s = QuerySpec::new(inst.t, inst.b_s, inst.b_t, inst.g, Method::Drfs);
            s.quantize = Some(h);
            specs.push(s);
        }
        let out = batch(&inst.net, &inst.stores, &specs);
        let exact = out.fields[0].total();
        if exact <= 0.0 {
            continue;
        }
        let ratios: Vec<f64> = out.fields[1..].iter().map(|f| f.total() / exact).collect();
        for (h, w) in ratios.windows(2).enumerate() {
            if w[1] < w[0] - 1e-12 {
                return Err(format!("seed {seed}: recovery drops from {} at H0={} to {}", w[0], h + 1, w[1]));
            }
        }
        let last = *ratios.last().unwrap();
        if !close(last, 1.0, 1e-9, 0.0) {
            return Err(format!("seed {seed}: full depth {depth} recovers {last}"));
        }
        at_two.push(ratios.get(1).copied().unwrap_or(last));
    }
    let mean = at_two.iter().sum::<f64>() / at_two.len() as f64;
    let min = at_two.iter().copied().fold(f64::INFINITY, f64::min);
    let soft = if mean >= 0.9 { "met" } else { "missed" };
    Ok(format!(
        "monotone on {} instances; H0=2 recovery mean {:.1}% min {:.1}% (90% soft target {soft})",
        at_two.len(),
        mean * 100.0,
        min * 100.0
    ))
}

fn lixel_sharing() -> Outcome {
    let mut empty_edges = 0usize;
    let mut densities = 0usize;
    for seed in 0..50 {
        // every other instance is sparse enough to leave edges without
        // per-lixel work
        let inst = if seed % 2 == 0 {
            random_instance(7000 + seed, 100, 300, 500)
        } else {
            random_instance(7000 + seed, 25, 45, 300)
        };
        let mut specs = Vec::new();
        for m in [Method::Ada, Method::Rfs, Method::Drfs] {
            for ls in [false, true] {
                let mut s = QuerySpec::new(inst.t, inst.b_s, inst.b_t, inst.g, m);
                s.lixel_sharing = ls;
                specs.push(s);
            }
        }
        let out = batch(&inst.net, &inst.stores, &specs);
        for (pair, stats) in out.fields.chunks(2).zip(out.stats.specs.chunks(2)) {
            for (i, (off, on)) in pair[0].density.iter().zip(&pair[1].density).enumerate() {
                if !close(*on, *off, 1e-9, 1e-12) {
                    return Err(format!("seed {seed}: lixel {i} sharing {on} vs {off}"));
                }
                densities += 1;
            }
            let on = &stats[1];
            for (e, (&empty, &q)) in on.eq_empty.iter().zip(&on.lixel_queries).enumerate() {
                if empty {
                    empty_edges += 1;
                    if q != 0 {
                        return Err(format!("seed {seed}: edge {e} has no remaining targets but {q} lixel queries"));
                    }
                }
            }
        }
    }
    if empty_edges == 0 {
        return Err("no source edge ended with an empty remaining set; the zero-query check never ran".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pairs = 0;
    let mut seed = 0;
    while pairs < 1000 {
        seed += 1;
        let inst = random_instance(9000 + seed, 60, 150, 50);
        let m = inst.net.edge_count() as u32;
        for _ in 0..50 {
            let (e, f) = (rng.gen_range(0..m), rng.gen_range(0..m));
            if e == f {
                continue;
            }
            let src = inst.net.edge(e);
            let (ta, tb) = (
                bounded_dijkstra(&inst.net, src.a, f64::INFINITY).unwrap(),
                bounded_dijkstra(&inst.net, src.b, f64::INFINITY).unwrap(),
            );
            let dst = inst.net.edge(f);
            let (rc, rd) = (EndpointRoute::lookup(&ta, &tb, dst.a), EndpointRoute::lookup(&ta, &tb, dst.b));
            let g = rng.gen_range(5.0..60.0);
            let centers: Vec<f64> = edge_lixels(e, src.length, g).iter().map(|q| q.center).collect();
            let cands = ls_candidate_positions(&centers, src.length, &rc, &rd);
            let dc = |i: usize| rc.distance_at(centers[i - 1], src.length);
            let dd = |i: usize| rd.distance_at(centers[i - 1], src.length);
            let funcs: [(&str, &dyn Fn(usize) -> f64); 4] = [
                ("d_c", &dc),
                ("d_d", &dd),
                ("d_c - d_d", &|i| dc(i) - dd(i)),
                ("d_d - d_c", &|i| dd(i) - dc(i)),
            ];
            for (name, func) in funcs {
                let all = (1..=centers.len()).map(func).fold(f64::NEG_INFINITY, f64::max);
                let cand = cands.iter().map(|&i| func(i)).fold(f64::NEG_INFINITY, f64::max);
                if !close(cand, all, 1e-12, 1e-9) {
                    return Err(format!("edges {e}->{f}: max {name} over candidates {cand}, over all lixels {all}"));
                }
            }
            pairs += 1;
        }
    }
    Ok(format!(
        "{densities} densities equal with sharing on and off, {empty_edges} edges without remaining targets issue no lixel queries, {pairs} edge pairs"
    ))
}

/// Half-width of the window around `t` holding `share` of all events.
fn window_for(stores: &EventStores, t: i64, share: f64) -> f64 {
    let mut gaps: Vec<i64> = stores.iter().flat_map(|s| s.time_order().iter().map(move |e| (e.timestamp - t).abs())).collect();
    gaps.sort_unstable();
    let k = ((gaps.len() as f64 * share).ceil() as usize).clamp(1, gaps.len());
    gaps[k - 1].max(1) as f64
}

fn synthetic(seed: u64, vertices: usize, edges: usize, events: usize, horizon: i64) -> (RoadNetwork, EventStores) {
    let data = generate_synthetic(&SynthParams {
        seed,
        vertices,
        edges,
        events,
        horizon,
    })
    .unwrap();
    let net = load_graph(data.edges).unwrap();
    let stores = ingest_events(data.events, &net).unwrap();
    (net, stores)
}

fn batch_scaling() -> Outcome {
    let horizon = 86_400;
    let (net, stores) = synthetic(7, 2000, 4000, 100_000, horizon);
    let b_t = window_for(&stores, horizon / 2, 0.7);
    let sizes = [5usize, 10, 15, 20, 25];
    let mut slopes = Vec::new();
    let mut detail = Vec::new();
    let mut failures = Vec::new();
    for (m, ls) in [(Method::Sps, false), (Method::Ada, false), (Method::Rfs, true), (Method::Drfs, true)] {
        let mut times = Vec::new();
        for &n in &sizes {
            let specs: Vec<QuerySpec> = (0..n)
                .map(|i| {
                    let t = horizon * 35 / 100 + (i as i64 * 977) % (horizon * 3 / 10);
                    let mut s = QuerySpec::new(t, 50.0, b_t, 50.0, m);
                    s.lixel_sharing = ls;
                    s
                })
                .collect();
            let mut reps: Vec<f64> = (0..3)
                .map(|_| {
                    let clock = Instant::now();
                    batch(&net, &stores, &specs);
                    clock.elapsed().as_secs_f64()
                })
                .collect();
            reps.sort_by(f64::total_cmp);
            times.push(reps[1]);
        }
        let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
        let (intercept, slope, r2) = affine_fit(&xs, &times);
        if r2 < 0.9 {
            failures.push(format!("{m} R2 {r2:.3}"));
        }
        slopes.push(slope);
        detail.push(format!("{m} {:.1}ms/query + {:.0}ms R2 {r2:.3}", slope * 1e3, intercept * 1e3));
    }
    if slopes[2] >= slopes[0] {
        failures.push(format!("RFS marginal {:.1}ms not below SPS {:.1}ms", slopes[2] * 1e3, slopes[0] * 1e3));
    }
    let detail = format!("b_s 50, g 50, 70% window (b_t {b_t}): {}", detail.join(", "));
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn window_insensitivity() -> Outcome {
    let horizon = 86_400;
    let (net, stores) = synthetic(8, 400, 800, 40_000, horizon);
    let t = horizon / 2;
    let layout = AggLayout::new(KernelConfig::default(), 200.0, 1.0, stores.time_origin());
    let depth = stores.iter().map(|s| RangeForest::build(s, &layout).depth()).max().unwrap_or(0);
    let mut per_query = Vec::new();
    for share in [0.25, 1.0] {
        let b_t = window_for(&stores, t, share);
        let out = batch(&net, &stores, &[QuerySpec::new(t, 200.0, b_t, 25.0, Method::Rfs)]);
        let st = &out.stats.specs[0];
        per_query.push(st.visits as f64 / st.total_lixel_queries().max(1) as f64);
    }
    let diff = (per_query[1] - per_query[0]).abs();
    let detail = format!(
        "visits per lixel query {:.2} at 25%, {:.2} at 100%, difference {diff:.2}, tree depth {depth}",
        per_query[0], per_query[1]
    );
    if diff <= depth as f64 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn drfs_memory() -> Outcome {
    let (_, stores) = synthetic(9, 200, 400, 20_000, 86_400);
    let layout = AggLayout::new(KernelConfig::default(), 200.0, 3600.0, stores.time_origin());
    let hs: Vec<f64> = (2..=10).map(f64::from).collect();
    let nodes: Vec<f64> = (2..=10)
        .map(|h| stores.iter().map(|s| build_dynamic_forest(s, &layout, h).unwrap().node_count()).sum::<usize>() as f64)
        .collect();
    let (intercept, slope, r2) = affine_fit(&hs, &nodes);
    let detail = format!("nodes = {slope:.0} H + {intercept:.0}, R2 {r2:.4}");
    if r2 >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("exactness", exactness),
        ("kernel decomposition", decomposition),
        ("RFS bounds", rfs_bounds),
        ("persistence", persistence),
        ("quantization", quantization),
        ("lixel sharing", lixel_sharing),
        ("batch scaling", batch_scaling),
        ("window insensitivity", window_insensitivity),
        ("DRFS memory", drfs_memory),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
