//! `navgraph`: generate datasets, build indexes, query them, run the
//! hierarchical-vs-flat benchmark sweep, and run the hubness analyses.
//!
//! All flags are long-form. `--threads` caps build and ground-truth
//! parallelism (default: the NAVGRAPH_THREADS environment variable, then all
//! cores); timed benchmark loops are single-threaded regardless. Every
//! seeded run is reproducible in all non-timing outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use navgraph::bench::{self, GroundTruth, IndexChoice, SweepConfig};
use navgraph::flat::FlatIndex;
use navgraph::hnsw::{BuildParams, HnswIndex};
use navgraph::hubness::{self, HubnessParams};
use navgraph::index_io::{self, AnyIndex, IndexRef};
use navgraph::synth::{self, Law, SynthSpec};
use navgraph::vecstore::io::{load_ivecs, load_vectors, save_vectors, SaveFormat, VectorFormat};
use navgraph::{Metric, VectorSet};

#[derive(Parser, Serialize)]
#[command(name = "navgraph", version, about, disable_help_subcommand = true)]
struct Cli {
    /// Thread cap for builds and ground truth (default: NAVGRAPH_THREADS or
    /// all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Echo the resolved configuration as JSON before running
    #[arg(long, global = true, default_value_t = false)]
    json_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Generate a seeded synthetic dataset
    Generate(GenerateArgs),
    /// Build an index over a dataset file
    Build(BuildArgs),
    /// Query an index file
    Query(QueryArgs),
    /// Run the recall/latency sweep over hierarchical and flat indexes
    Bench(BenchArgs),
    /// Hubness analyses
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// uniform | normal
    #[arg(long)]
    law: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// l2 | angular (tag recorded for downstream commands)
    #[arg(long, default_value = "l2")]
    metric: String,
    /// raw_f32 | fvecs
    #[arg(long, default_value = "raw_f32")]
    format: String,
}

#[derive(Args, Serialize)]
struct BuildArgs {
    #[arg(long)]
    data: PathBuf,
    /// fvecs | bvecs | raw_f32 (default: by extension)
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "l2")]
    metric: String,
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    ef_construction: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// hier | flat | both ("both" imports the flat index from the
    /// hierarchical base layer and writes <out>.hier.nvgi / <out>.flat.nvgi)
    #[arg(long, default_value = "hier")]
    index_type: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "l2")]
    metric: String,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    queries_format: Option<String>,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    ef: usize,
    /// Optional ground truth (ivecs) for a recall summary
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Write result ids as ivecs
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-query first-visit traces as JSON lines
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    queries_format: Option<String>,
    /// Ground-truth ivecs; computed by brute force when absent
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value = "l2")]
    metric: String,
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    ef_construction: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated ef_search grid
    #[arg(long, value_delimiter = ',', default_value = "200")]
    ef: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value = "both")]
    index_type: String,
    /// Timed repetitions of the query loop
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// CSV output path; a JSON mirror goes to the same stem with .json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Serialize)]
enum AnalyzeCommand {
    /// Node-access distribution, hub labeling, connectivity tests, bins
    Hubness(HubnessArgs),
    /// Exact k-occurrence distribution and its skewness
    Koccurrence(KoccurrenceArgs),
    /// Traversal-bin hub fractions only
    Traversal(HubnessArgs),
}

#[derive(Args, Serialize)]
struct HubnessArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "l2")]
    metric: String,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    queries_format: Option<String>,
    #[arg(long, default_value_t = 200)]
    ef: usize,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 95.0)]
    percentile: f64,
    #[arg(long, default_value_t = 30)]
    bin_size: usize,
    #[arg(long, default_value_t = 1000)]
    sample_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write per-query first-visit traces as JSON lines
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct KoccurrenceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "l2")]
    metric: String,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("NAVGRAPH_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("navgraph: setting thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    if cli.json_config {
        match serde_json::to_string_pretty(&cli) {
            Ok(json) => println!("{json}"),
            Err(e) => {
                eprintln!("navgraph: serializing config: {e}");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("navgraph: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> navgraph::Result<()> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Build(args) => build(args),
        Command::Query(args) => query(args),
        Command::Bench(args) => bench_cmd(args),
        Command::Analyze(AnalyzeCommand::Hubness(args)) => analyze_hubness(args, false),
        Command::Analyze(AnalyzeCommand::Traversal(args)) => analyze_hubness(args, true),
        Command::Analyze(AnalyzeCommand::Koccurrence(args)) => analyze_koccurrence(args),
    }
}

fn parse_format(name: Option<&str>, path: &Path) -> navgraph::Result<VectorFormat> {
    match name {
        Some(name) => VectorFormat::parse(name),
        None => Ok(VectorFormat::from_path(path)),
    }
}

fn load_data(
    path: &Path,
    format: Option<&str>,
    metric: Metric,
) -> navgraph::Result<VectorSet> {
    let format = parse_format(format, path)?;
    let set = load_vectors(path, format, metric)?;
    println!(
        "loaded {} vectors of dim {} from {} ({} metric)",
        set.count(),
        set.dim(),
        path.display(),
        set.metric().name()
    );
    Ok(set)
}

fn generate(args: GenerateArgs) -> navgraph::Result<()> {
    let spec = SynthSpec {
        n: args.n,
        d: args.d,
        law: Law::parse(&args.law)?,
        seed: args.seed,
    };
    let metric = Metric::parse(&args.metric)?;
    let set = synth::generate(&spec)?.with_metric(metric)?;
    let format = match args.format.as_str() {
        "fvecs" => SaveFormat::Fvecs,
        "raw_f32" | "f32" => SaveFormat::RawF32,
        other => {
            return Err(navgraph::Error::InvalidParameter(format!(
                "unknown output format {other:?}"
            )))
        }
    };
    save_vectors(&set, &args.out, format)?;
    println!(
        "generated {}x{} {} dataset (seed {}) -> {}",
        args.n,
        args.d,
        args.law,
        args.seed,
        args.out.display()
    );
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn build(args: BuildArgs) -> navgraph::Result<()> {
    let metric = Metric::parse(&args.metric)?;
    let set = load_data(&args.data, args.format.as_deref(), metric)?;
    let params = BuildParams {
        m: args.m,
        ef_construction: args.ef_construction,
        seed: args.seed,
        metric,
    };
    let start = std::time::Instant::now();
    match args.index_type.as_str() {
        "hier" => {
            let hier = HnswIndex::build(set, params)?;
            index_io::write_index_file(&args.out, IndexRef::Hier(&hier))?;
            println!(
                "built hier index ({} nodes, max level {}) in {:.1}s -> {}",
                hier.num_nodes(),
                hier.graph().max_level(),
                start.elapsed().as_secs_f64(),
                args.out.display()
            );
        }
        "flat" => {
            let flat = FlatIndex::build(set, params)?;
            index_io::write_index_file(&args.out, IndexRef::Flat(&flat))?;
            println!(
                "built flat index ({} nodes) in {:.1}s -> {}",
                flat.num_nodes(),
                start.elapsed().as_secs_f64(),
                args.out.display()
            );
        }
        "both" => {
            let hier = HnswIndex::build(set, params)?;
            let flat = FlatIndex::from_base_layer(&hier)?;
            let hier_path = with_suffix(&args.out, ".hier.nvgi");
            let flat_path = with_suffix(&args.out, ".flat.nvgi");
            index_io::write_index_file(&hier_path, IndexRef::Hier(&hier))?;
            index_io::write_index_file(&flat_path, IndexRef::Flat(&flat))?;
            println!(
                "built hier index and imported its base layer in {:.1}s -> {} / {}",
                start.elapsed().as_secs_f64(),
                hier_path.display(),
                flat_path.display()
            );
        }
        other => {
            return Err(navgraph::Error::InvalidParameter(format!(
                "unknown index type {other:?}"
            )))
        }
    }
    Ok(())
}

fn load_index(
    path: &Path,
    data: &Path,
    format: Option<&str>,
    metric: Metric,
) -> navgraph::Result<(AnyIndex, Arc<VectorSet>)> {
    let set = Arc::new(load_data(data, format, metric)?);
    let index = index_io::read_index_file(path, Arc::clone(&set))?;
    println!(
        "loaded {} index with {} nodes from {}",
        index.kind(),
        index.num_nodes(),
        path.display()
    );
    Ok((index, set))
}

fn query(args: QueryArgs) -> navgraph::Result<()> {
    let metric = Metric::parse(&args.metric)?;
    let (index, _set) = load_index(&args.index, &args.data, args.format.as_deref(), metric)?;
    let qformat = parse_format(args.queries_format.as_deref(), &args.queries)?;
    let queries = load_vectors(&args.queries, qformat, metric)?;
    let gt = args
        .gt
        .as_deref()
        .map(|p| -> navgraph::Result<GroundTruth> {
            GroundTruth::from_id_matrix(&load_ivecs(p)?)
        })
        .transpose()?;

    let mut ids_out: Vec<Vec<u32>> = Vec::with_capacity(queries.count());
    let mut traces = Vec::new();
    let mut total_recall = 0.0;
    let start = std::time::Instant::now();
    for qi in 0..queries.count() {
        let (res, trace) = index.search_traced(queries.vector(qi), args.k, args.ef, qi as u32)?;
        let ids: Vec<u32> = res.iter().map(|c| c.node).collect();
        if let Some(gt) = &gt {
            total_recall += bench::recall_at_k(&ids, &gt.ids[qi][..args.k.min(gt.k)], args.k);
        }
        ids_out.push(ids);
        if args.trace.is_some() {
            traces.push(trace);
        }
    }
    let elapsed = start.elapsed();
    if let Some(out) = &args.out {
        write_ivecs(out, &ids_out)?;
        println!("wrote result ids -> {}", out.display());
    }
    if let Some(path) = &args.trace {
        write_traces(path, &traces)?;
        println!("wrote traces -> {}", path.display());
    }
    if gt.is_some() {
        println!(
            "queried {} vectors (k={}, ef={}) in {:.2}s, mean recall {:.4}",
            queries.count(),
            args.k,
            args.ef,
            elapsed.as_secs_f64(),
            total_recall / queries.count() as f64
        );
    } else {
        println!(
            "queried {} vectors (k={}, ef={}) in {:.2}s",
            queries.count(),
            args.k,
            args.ef,
            elapsed.as_secs_f64()
        );
    }
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> navgraph::Result<()> {
    let metric = Metric::parse(&args.metric)?;
    let data = load_data(&args.data, args.format.as_deref(), metric)?;
    let qformat = parse_format(args.queries_format.as_deref(), &args.queries)?;
    let queries = load_vectors(&args.queries, qformat, metric)?;
    let gt = args
        .gt
        .as_deref()
        .map(|p| -> navgraph::Result<GroundTruth> {
            GroundTruth::from_id_matrix(&load_ivecs(p)?)
        })
        .transpose()?;
    let dataset_name = args
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let config = SweepConfig {
        dataset: dataset_name,
        ef_grid: args.ef.clone(),
        k: args.k,
        params: BuildParams {
            m: args.m,
            ef_construction: args.ef_construction,
            seed: args.seed,
            metric,
        },
        index_types: IndexChoice::parse(&args.index_type)?,
        repetitions: args.reps,
    };
    let output = bench::run_sweep(data, &queries, gt, &config)?;
    let json_path = args.out.with_extension("json");
    bench::write_outputs(&output, &args.out, Some(&json_path))?;
    println!(
        "sweep complete: {} rows -> {} and {}",
        output.rows.len(),
        args.out.display(),
        json_path.display()
    );
    Ok(())
}

fn analyze_hubness(args: HubnessArgs, bins_only: bool) -> navgraph::Result<()> {
    let metric = Metric::parse(&args.metric)?;
    let (index, _set) = load_index(&args.index, &args.data, args.format.as_deref(), metric)?;
    // The hub analysis runs on the flat view of the graph: a hierarchical
    // index contributes its base layer, which is what search traverses.
    let flat = match index {
        AnyIndex::Flat(flat) => flat,
        AnyIndex::Hier(hier) => {
            println!("importing base layer of hierarchical index for analysis");
            FlatIndex::from_base_layer(&hier)?
        }
    };
    let qformat = parse_format(args.queries_format.as_deref(), &args.queries)?;
    let queries = load_vectors(&args.queries, qformat, metric)?;
    let params = HubnessParams {
        ef_search: args.ef,
        k: args.k,
        percentile: args.percentile,
        bin_size: args.bin_size,
        sample_size: args.sample_size,
        seed: args.seed,
    };
    if args.trace.is_some() || bins_only {
        let traces = hubness::collect_traces(&flat, &queries, params.ef_search, params.k)?;
        if let Some(path) = &args.trace {
            write_traces(path, &traces)?;
            println!("wrote traces -> {}", path.display());
        }
        if bins_only {
            let counts = hubness::AccessCounts::from_traces(
                flat.num_nodes(),
                &traces,
                params.ef_search,
                params.k,
            );
            let labeling = hubness::select_hubs(&counts, params.percentile)?;
            let bins = hubness::traversal_bin_fractions(&traces, &labeling, params.bin_size)?;
            std::fs::write(&args.out, hubness::bins_to_csv(&bins))?;
            let json_path = args.out.with_extension("json");
            write_json(&json_path, &bins)?;
            println!(
                "traversal bins ({} bins, p{} hubs) -> {} and {}",
                bins.mean_fraction.len(),
                params.percentile,
                args.out.display(),
                json_path.display()
            );
            return Ok(());
        }
    }
    let report = hubness::analyze_hubness(&flat, &queries, &params)?;
    write_json(&args.out, &report)?;
    let bins_csv = with_suffix(&args.out, ".bins.csv");
    std::fs::write(&bins_csv, hubness::bins_to_csv(&report.bins))?;
    println!(
        "hubness report (p{} hubs: {}, mw p {:.3e}, effect {:.4}) -> {} and {}",
        report.percentile,
        report.hub_count,
        report.mann_whitney.p_value,
        report.effect_size.unwrap_or(f64::NAN),
        args.out.display(),
        bins_csv.display()
    );
    Ok(())
}

fn analyze_koccurrence(args: KoccurrenceArgs) -> navgraph::Result<()> {
    let metric = Metric::parse(&args.metric)?;
    let data = load_data(&args.data, args.format.as_deref(), metric)?;
    let occ = hubness::k_occurrence(&data, args.k)?;
    #[derive(Serialize)]
    struct KOccReport<'a> {
        k: usize,
        n: usize,
        skewness: f64,
        counts: &'a [u32],
    }
    let report = KOccReport {
        k: occ.k,
        n: occ.counts.len(),
        skewness: occ.skewness()?,
        counts: &occ.counts,
    };
    write_json(&args.out, &report)?;
    println!(
        "k-occurrence (k={}, n={}): skewness {:.4} -> {}",
        report.k,
        report.n,
        report.skewness,
        args.out.display()
    );
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> navgraph::Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| navgraph::Error::Malformed(format!("serializing report: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

fn write_ivecs(path: &Path, rows: &[Vec<u32>]) -> navgraph::Result<()> {
    let mut out = Vec::new();
    for row in rows {
        out.extend_from_slice(&(row.len() as i32).to_le_bytes());
        for &id in row {
            out.extend_from_slice(&(id as i32).to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_traces(path: &Path, traces: &[navgraph::SearchTrace]) -> navgraph::Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for trace in traces {
        let line = serde_json::to_string(trace)
            .map_err(|e| navgraph::Error::Malformed(format!("serializing trace: {e}")))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}
