#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnkde::events::{ingest_events, EventStores};
use tnkde::kernels::{KernelConfig, KernelKind};
use tnkde::network::{load_graph, RoadNetwork};
use tnkde::synth::{generate_synthetic, SynthParams};

pub struct Instance {
    pub net: RoadNetwork,
    pub stores: EventStores,
    pub t: i64,
    pub b_s: f64,
    pub b_t: f64,
    pub g: f64,
    pub horizon: i64,
}

/// Small random instance: up to `max_v` vertices, `max_e` edges, `max_n` events.
pub fn random_instance(seed: u64, max_v: usize, max_e: usize, max_n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let vertices = rng.gen_range(5..=max_v);
    let edges = rng.gen_range(vertices - 1..=max_e.min(vertices * (vertices - 1) / 2).max(vertices - 1));
    let events = rng.gen_range(1..=max_n);
    let horizon = rng.gen_range(1_000..=20_000);
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
    Instance {
        net,
        stores,
        t: rng.gen_range(0..=horizon),
        b_s: rng.gen_range(100.0..900.0),
        // keeps horizon / b_t moderate
        b_t: rng.gen_range(horizon as f64 / 8.0..horizon as f64),
        g: rng.gen_range(10.0..80.0),
        horizon,
    }
}

pub fn kernel_pairs() -> Vec<KernelConfig> {
    let mut out = Vec::new();
    for s in KernelKind::ALL {
        for t in KernelKind::ALL {
            out.push(KernelConfig { spatial: s, temporal: t });
        }
    }
    out
}

pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
}
