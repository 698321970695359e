use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tnkde::bench::benchmark;
use tnkde::engine::{run_batch, DensityField, Method, QuerySpec, RunOptions};
use tnkde::error::{Error, Result};
use tnkde::events::EventStores;
use tnkde::io::{self, FileConfig, QueryRow};
use tnkde::kernels::{KernelConfig, KernelKind};
use tnkde::network::{generate_lixels, RoadNetwork};
use tnkde::oracle::brute_force_density;
use tnkde::synth::{generate_synthetic, SynthParams};

#[derive(Parser)]
#[command(name = "tnkde", version, about = "Temporal network kernel density heatmaps over road networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one density file per query in the batch.
    Run(RunArgs),
    /// Write a synthetic graph and event set.
    Generate(GenerateArgs),
    /// Time every method on a query batch and write a JSON report.
    Benchmark(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Geojson,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// TOML file with `[kernel]` and run settings; flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kernel)]
    kernel_spatial: Option<KernelKind>,
    #[arg(long, value_parser = parse_kernel)]
    kernel_temporal: Option<KernelKind>,
    /// Lixel length in meters.
    #[arg(long)]
    lixel_length: Option<f64>,
    /// Dynamic forest depth H (default: grow until leaves are single positions).
    #[arg(long)]
    depth: Option<u32>,
    /// Dynamic forest query depth H_0.
    #[arg(long)]
    quantize: Option<u32>,
    #[arg(long, value_enum)]
    lixel_sharing: Option<Toggle>,
    #[arg(long)]
    threads: Option<usize>,
    /// Accepted for symmetry with `generate`; runs are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// sps, ada, rfs, drfs or oracle.
    #[arg(long)]
    method: Option<String>,
    /// Output directory, one file per query.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    vertices: usize,
    #[arg(long = "edges", default_value_t = 400)]
    edge_count: usize,
    #[arg(long = "event-count", default_value_t = 10_000)]
    event_count: usize,
    /// Timestamps are drawn from 0..=horizon seconds.
    #[arg(long, default_value_t = 86_400)]
    horizon: i64,
    /// Output directory for graph.csv and events.csv.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "sps,ada,rfs,drfs")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Report path (JSON).
    #[arg(long)]
    output: PathBuf,
}

fn parse_kernel(s: &str) -> std::result::Result<KernelKind, String> {
    s.parse::<KernelKind>().map_err(|e| e.to_string())
}

/// Settings after merging defaults, the config file and flags.
struct Settings {
    kernels: KernelConfig,
    g: f64,
    depth: Option<u32>,
    quantize: Option<u32>,
    lixel_sharing: bool,
    threads: Option<usize>,
    method: Option<String>,
}

fn settings(inputs: &Inputs, method: Option<&String>) -> Result<Settings> {
    let file = match &inputs.config {
        Some(p) => io::read_config(p)?,
        None => FileConfig::default(),
    };
    let kernels = KernelConfig {
        spatial: inputs.kernel_spatial.or(file.kernel.spatial).unwrap_or(KernelKind::Triangular),
        temporal: inputs.kernel_temporal.or(file.kernel.temporal).unwrap_or(KernelKind::Triangular),
    };
    let mut lixel_sharing = match inputs.lixel_sharing {
        Some(t) => t == Toggle::On,
        None => file.lixel_sharing.unwrap_or(false),
    };
    if lixel_sharing && kernels.spatial != KernelKind::Triangular {
        eprintln!(
            "warning: lixel sharing needs a triangular spatial kernel; disabled for `{}`",
            kernels.spatial
        );
        lixel_sharing = false;
    }
    Ok(Settings {
        kernels,
        g: inputs.lixel_length.or(file.lixel_length).unwrap_or(10.0),
        depth: inputs.depth.or(file.depth),
        quantize: inputs.quantize.or(file.quantize),
        lixel_sharing,
        threads: inputs.threads.or(file.threads),
        method: method.cloned().or(file.method),
    })
}

fn specs_for(rows: &[QueryRow], s: &Settings, method: Method) -> Vec<QuerySpec> {
    rows.iter()
        .map(|q| QuerySpec {
            t: q.t,
            b_s: q.b_s,
            b_t: q.b_t,
            g: s.g,
            method,
            lixel_sharing: s.lixel_sharing,
            depth: s.depth,
            quantize: s.quantize,
            kernels: s.kernels,
        })
        .collect()
}

fn load(inputs: &Inputs) -> Result<(RoadNetwork, EventStores, Vec<QueryRow>)> {
    let net = io::read_graph(&inputs.graph)?;
    let stores = io::read_events(&inputs.events, &net)?;
    let rows = io::read_queries(&inputs.queries)?;
    Ok((net, stores, rows))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|source| Error::Io {
        path: p.to_path_buf(),
        source,
    })
}

fn oracle_field(net: &RoadNetwork, stores: &EventStores, spec: &QuerySpec) -> Result<DensityField> {
    spec.validate()?;
    let lixels = generate_lixels(net, spec.g)?;
    let density = lixels
        .iter()
        .map(|q| brute_force_density(net, stores, q, spec.t, spec.b_s, spec.b_t, &spec.kernels).density)
        .collect();
    Ok(DensityField { lixels, density })
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let s = settings(&args.inputs, args.method.as_ref())?;
    let method = io::parse_method(s.method.as_deref().unwrap_or("rfs"))?;
    let (net, stores, rows) = load(&args.inputs)?;
    if args.format == Format::Geojson && !net.has_geometry() {
        return Err(Error::InvalidParameter("GeoJSON output needs a geometry column in the graph file".into()));
    }
    let opts = RunOptions { threads: s.threads };
    let fields = match method {
        Some(m) => run_batch(&net, &stores, &specs_for(&rows, &s, m), &opts)?.fields,
        None => specs_for(&rows, &s, Method::Sps)
            .iter()
            .map(|spec| oracle_field(&net, &stores, spec))
            .collect::<Result<_>>()?,
    };
    create_dir(&args.output)?;
    let width = rows.len().max(1).to_string().len();
    for (i, f) in fields.iter().enumerate() {
        match args.format {
            Format::Csv => io::write_density_csv(&args.output.join(format!("query_{:0width$}.csv", i + 1)), &net, f)?,
            Format::Geojson => {
                io::write_density_geojson(&args.output.join(format!("query_{:0width$}.geojson", i + 1)), &net, f)?
            }
        }
    }
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let data = generate_synthetic(&SynthParams {
        seed: args.seed,
        vertices: args.vertices,
        edges: args.edge_count,
        events: args.event_count,
        horizon: args.horizon,
    })?;
    create_dir(&args.output)?;
    io::write_graph(&args.output.join("graph.csv"), &data.edges)?;
    io::write_events(&args.output.join("events.csv"), &data.events)
}

fn cmd_benchmark(args: &BenchArgs) -> Result<()> {
    let s = settings(&args.inputs, None)?;
    let methods = args.methods.iter().map(|m| m.trim().parse()).collect::<Result<Vec<Method>>>()?;
    let (net, stores, rows) = load(&args.inputs)?;
    let specs = specs_for(&rows, &s, Method::Rfs);
    let report = benchmark(&net, &stores, &specs, &methods, args.repetitions, &RunOptions { threads: s.threads })?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    fs::write(&args.output, text).map_err(|source| Error::Io {
        path: args.output.clone(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
