use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use bgp_core::ingest::to_ntriples;
use bgp_core::planner::{classify_shape, explain, render_execution};
use bgp_core::report::{run_bench, BenchConfig, BenchInput, BenchReport, NamedQuery};
use bgp_core::workload::{generate, parse_specs};
use bgp_core::{
    execute_query, parse_ntriples, parse_query, BaseKey, Cluster, CostParams, Dataset, EngineConfig, Error, MergeScan,
    Query, Strategy, Triple,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes.
const EXIT_ERROR: u8 = 2;
const EXIT_UNSUPPORTED: u8 = 3;
const EXIT_CARTESIAN: u8 = 4;

#[derive(Parser)]
#[command(name = "bgp", version, about = "Evaluate SPARQL basic graph patterns on a simulated cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a data file and print per-node triple counts.
    Load {
        data: PathBuf,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Run a query and print its solutions followed by transfer metrics.
    Query {
        data: PathBuf,
        query: PathBuf,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Print plans with cost estimates from measured selection sizes.
    Explain {
        data: PathBuf,
        query: PathBuf,
        /// Also execute and show measured sizes and ledger entries.
        #[arg(long)]
        analyze: bool,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Write the data and query of each workload spec as `<name>.nt` and `<name>.rq`.
    Generate {
        /// JSON list of workload specs.
        specs: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run generated workloads (and optionally bundled queries) under the
    /// selected strategies and write a report.
    Bench {
        /// JSON list of workload specs.
        specs: Option<PathBuf>,
        /// N-Triples file to run `--query` files against.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Query file run against `--data`; repeatable.
        #[arg(long = "query")]
        queries: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        report: ReportFormat,
        /// Output path; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record wall-clock time per cell (reports are then not reproducible).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        opts: EngineOpts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct EngineOpts {
    /// Number of simulated nodes.
    #[arg(short = 'm', long = "partitions", default_value_t = 4)]
    partitions: usize,
    /// Triple position the data is hash-partitioned on: subject, predicate, object or random.
    #[arg(long, default_value = "subject")]
    partition_key: BaseKey,
    /// pjoin, mono-br, multi-br, hybrid or all.
    #[arg(long, default_value = "hybrid")]
    strategy: StrategyChoice,
    #[arg(long, default_value_t = 1.0)]
    theta_acc: f64,
    #[arg(long, default_value_t = 1.0)]
    theta_comm: f64,
    /// Merged scan for the hybrid strategy: on, off or auto.
    #[arg(long, default_value = "auto")]
    merge_scan: MergeScan,
    /// Evaluate queries with disconnected patterns by cross product.
    #[arg(long)]
    allow_cross_product: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy)]
enum StrategyChoice {
    One(Strategy),
    All,
}

impl std::str::FromStr for StrategyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "all" => Ok(StrategyChoice::All),
            other => other.parse().map(StrategyChoice::One),
        }
    }
}

impl EngineOpts {
    fn strategies(&self) -> Vec<Strategy> {
        match self.strategy {
            StrategyChoice::One(s) => vec![s],
            StrategyChoice::All => Strategy::ALL.to_vec(),
        }
    }

    fn engine(&self) -> EngineConfig {
        EngineConfig {
            theta_acc: self.theta_acc,
            theta_comm: self.theta_comm,
            merge_scan: self.merge_scan,
            allow_cross_product: self.allow_cross_product,
        }
    }

    /// Validates the configuration before any file is read.
    fn cluster(&self) -> anyhow::Result<Cluster> {
        let cluster = Cluster::new(self.partitions)?.with_seed(self.seed);
        CostParams::new(self.theta_acc, self.theta_comm, self.partitions)?;
        Ok(cluster)
    }
}

fn read_triples(path: &Path) -> anyhow::Result<Vec<Triple>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_ntriples(BufReader::new(file)).with_context(|| format!("in {}", path.display()))
}

/// Shape label from a `# declared-shape: <label>` comment, if present.
fn declared_shape(text: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .find_map(|l| l.trim().strip_prefix("declared-shape:"))
        .map(|s| s.trim().to_string())
}

fn read_query(path: &Path) -> anyhow::Result<(Query, Option<String>)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let query = parse_query(&text).with_context(|| format!("in {}", path.display()))?;
    Ok((query, declared_shape(&text)))
}

fn load(cluster: &Cluster, path: &Path, key: BaseKey) -> anyhow::Result<Dataset> {
    Ok(cluster.load_partitioned(read_triples(path)?, key))
}

fn cmd_load(data: &Path, opts: &EngineOpts) -> anyhow::Result<()> {
    let cluster = opts.cluster()?;
    let ds = load(&cluster, data, opts.partition_key)?;
    let nodes: Vec<String> = ds.node_counts().iter().enumerate().map(|(i, n)| format!("n{i}:{n}")).collect();
    println!("{} triples, nodes=[{}]", ds.len(), nodes.join(", "));
    Ok(())
}

fn cmd_query(data: &Path, query: &Path, opts: &EngineOpts) -> anyhow::Result<()> {
    let cluster = opts.cluster()?;
    let (q, _) = read_query(query)?;
    let ds = load(&cluster, data, opts.partition_key)?;
    let engine = opts.engine();
    let runs = opts
        .strategies()
        .into_iter()
        .map(|s| execute_query(&cluster, &ds, &q, s, &engine))
        .collect::<Result<Vec<_>, _>>()?;
    let out = io::stdout();
    let mut out = out.lock();
    let first = &runs[0].result;
    let header: Vec<String> = first.schema().vars().iter().map(ToString::to_string).collect();
    writeln!(out, "{}", header.join("\t"))?;
    for row in first.rows() {
        let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
        writeln!(out, "{}", cells.join("\t"))?;
    }
    let shape = classify_shape(&q.patterns);
    for ex in &runs {
        let t = ex.ledger.totals();
        writeln!(out)?;
        writeln!(out, "strategy: {}", ex.strategy)?;
        writeln!(out, "shape: {}", shape.name())?;
        writeln!(out, "m: {}", cluster.nodes())?;
        writeln!(out, "partitioning: {}", opts.partition_key.name())?;
        writeln!(out, "result_count: {}", ex.result.len())?;
        writeln!(out, "scanned: {}", t.scanned)?;
        writeln!(out, "shuffled_modeled: {}", t.shuffled_modeled)?;
        writeln!(out, "shuffled_actual: {}", t.shuffled_actual)?;
        writeln!(out, "broadcast: {}", t.broadcast)?;
        writeln!(out, "plan: {}", ex.plan)?;
        writeln!(out, "cost: {}", ex.analytic_cost())?;
    }
    if runs.iter().any(|ex| ex.result.len() != first.len()) {
        bail!("strategies disagree on the result size");
    }
    Ok(())
}

fn cmd_explain(data: &Path, query: &Path, analyze: bool, opts: &EngineOpts) -> anyhow::Result<()> {
    let cluster = opts.cluster()?;
    let (q, _) = read_query(query)?;
    let ds = load(&cluster, data, opts.partition_key)?;
    let engine = opts.engine();
    println!("query shape: {}", classify_shape(&q.patterns).name());
    for s in opts.strategies() {
        println!();
        print!("{}", explain(&cluster, &ds, &q, s, &engine)?);
        if analyze {
            let ex = execute_query(&cluster, &ds, &q, s, &engine)?;
            println!("executed:");
            print!("{}", render_execution(&ex));
        }
    }
    Ok(())
}

fn cmd_bench(
    specs: Option<&Path>,
    data: Option<&Path>,
    queries: &[PathBuf],
    format: ReportFormat,
    out: Option<&Path>,
    timing: bool,
    opts: &EngineOpts,
) -> anyhow::Result<bool> {
    opts.cluster()?;
    let mut inputs: Vec<BenchInput> = Vec::new();
    if let Some(path) = specs {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        for spec in parse_specs(&text).with_context(|| format!("in {}", path.display()))? {
            inputs.push(generate(&spec)?.into());
        }
    }
    match (data, queries.is_empty()) {
        (Some(path), _) => {
            let mut named = Vec::with_capacity(queries.len());
            for qp in queries {
                let (query, declared) = read_query(qp)?;
                let name = qp.file_stem().map_or_else(|| qp.display().to_string(), |s| s.to_string_lossy().into());
                named.push(NamedQuery { name, query, declared_shape: declared });
            }
            let dataset = path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into());
            inputs.push(BenchInput { dataset, triples: read_triples(path)?, queries: named });
        }
        (None, false) => bail!("--query needs --data"),
        (None, true) => {}
    }
    if specs.is_none() && data.is_none() {
        bail!("nothing to run: give a spec file or --data with --query");
    }
    let config = BenchConfig {
        m: opts.partitions,
        base_key: opts.partition_key,
        seed: opts.seed,
        engine: opts.engine(),
        timing,
        ..BenchConfig::default()
    };
    let report = run_bench(&inputs, &opts.strategies(), &config)?;
    write_report(&report, format, out)?;
    for c in report.cells.iter().filter(|c| !c.is_ok()) {
        eprintln!(
            "FAILED: {} / {} / {}: {}",
            c.dataset,
            c.query,
            c.strategy,
            c.detail.as_deref().unwrap_or("no detail")
        );
    }
    Ok(!report.any_failed())
}

fn cmd_generate(specs: &Path, out_dir: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(specs).with_context(|| format!("cannot read {}", specs.display()))?;
    let specs = parse_specs(&text).with_context(|| format!("in {}", specs.display()))?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    for spec in &specs {
        let w = generate(spec)?;
        let nt = out_dir.join(format!("{}.nt", w.name));
        let rq = out_dir.join(format!("{}.rq", w.name));
        fs::write(&nt, to_ntriples(&w.triples)).with_context(|| format!("cannot write {}", nt.display()))?;
        fs::write(&rq, format!("{}\n", w.query)).with_context(|| format!("cannot write {}", rq.display()))?;
        println!("{}: {} triples, {} patterns", w.name, w.triples.len(), w.query.patterns.len());
    }
    Ok(())
}

fn write_report(report: &BenchReport, format: ReportFormat, out: Option<&Path>) -> anyhow::Result<()> {
    let text = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.to_csv()?,
    };
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Unsupported(_)) => EXIT_UNSUPPORTED,
        Some(Error::CartesianProduct(_)) => EXIT_CARTESIAN,
        _ => EXIT_ERROR,
    }
}

/// Output closed early, e.g. piped into `head`.
fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().filter_map(|e| e.downcast_ref::<io::Error>()).any(|e| e.kind() == io::ErrorKind::BrokenPipe)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Load { data, opts } => cmd_load(&data, &opts).map(|()| true),
        Command::Query { data, query, opts } => cmd_query(&data, &query, &opts).map(|()| true),
        Command::Explain { data, query, analyze, opts } => cmd_explain(&data, &query, analyze, &opts).map(|()| true),
        Command::Generate { specs, out_dir } => cmd_generate(&specs, &out_dir).map(|()| true),
        Command::Bench { specs, data, queries, report, out, timing, opts } => {
            cmd_bench(specs.as_deref(), data.as_deref(), &queries, report, out.as_deref(), timing, &opts)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ERROR),
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::anyhow;

    #[test]
    fn declared_shape_comment() {
        assert_eq!(declared_shape("# declared-shape: complex\nSELECT"), Some("complex".into()));
        assert_eq!(declared_shape("SELECT ?x WHERE { ?x <p> ?y }"), None);
    }

    #[test]
    fn exit_codes_follow_the_error() {
        assert_eq!(exit_code(&anyhow!(Error::Unsupported("OPTIONAL".into()))), EXIT_UNSUPPORTED);
        assert_eq!(exit_code(&anyhow!(Error::CartesianProduct("x".into())).context("in q.rq")), EXIT_CARTESIAN);
        assert_eq!(exit_code(&anyhow!("missing file")), EXIT_ERROR);
    }
}
