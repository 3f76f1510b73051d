//! Benchmark runs over datasets, queries and strategies, with JSON and CSV
//! output.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::cluster::{BaseKey, Cluster, OperatorStats};
use crate::error::{Error, Result};
use crate::ingest::Query;
use crate::model::{Relation, Triple};
use crate::oracle::oracle_eval;
use crate::planner::{classify_shape, execute_query, EngineConfig, Strategy};
use crate::workload::Workload;

pub const STATUS_OK: &str = "ok";
pub const STATUS_FAILED: &str = "FAILED";

#[derive(Clone, Debug)]
pub struct NamedQuery {
    pub name: String,
    pub query: Query,
    /// Shape label supplied with the query, reported next to the computed one.
    pub declared_shape: Option<String>,
}

#[derive(Clone, Debug)]
pub struct BenchInput {
    pub dataset: String,
    pub triples: Vec<Triple>,
    pub queries: Vec<NamedQuery>,
}

impl From<Workload> for BenchInput {
    fn from(w: Workload) -> Self {
        BenchInput {
            dataset: w.name.clone(),
            triples: w.triples,
            queries: vec![NamedQuery { name: w.name, query: w.query, declared_shape: None }],
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub m: usize,
    pub base_key: BaseKey,
    pub seed: u64,
    pub engine: EngineConfig,
    /// Record wall-clock time per cell. Off by default so reports are
    /// reproducible byte for byte.
    pub timing: bool,
    /// Datasets larger than this are not checked against the oracle.
    pub oracle_max_triples: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            m: 4,
            base_key: BaseKey::Subject,
            seed: 0,
            engine: EngineConfig::default(),
            timing: false,
            oracle_max_triples: 50_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchCell {
    pub dataset: String,
    pub query: String,
    pub shape: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub declared_shape: Option<String>,
    pub strategy: String,
    pub m: usize,
    pub partitioning: String,
    pub result_count: Option<u64>,
    pub scanned: u64,
    pub shuffled_modeled: u64,
    pub shuffled_actual: u64,
    pub broadcast: u64,
    pub wall_ms: Option<f64>,
    pub plan: String,
    /// "match", "mismatch" or "skipped".
    pub oracle: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub operators: Vec<OperatorStats>,
}

impl BenchCell {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
}

/// CSV row: the cell without its per-operator breakdown.
#[derive(Serialize)]
struct CsvRow<'a> {
    dataset: &'a str,
    query: &'a str,
    shape: &'a str,
    declared_shape: Option<&'a str>,
    strategy: &'a str,
    m: usize,
    partitioning: &'a str,
    result_count: Option<u64>,
    scanned: u64,
    shuffled_modeled: u64,
    shuffled_actual: u64,
    broadcast: u64,
    wall_ms: Option<f64>,
    plan: &'a str,
    oracle: &'a str,
    status: &'a str,
    detail: Option<&'a str>,
}

impl BenchReport {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| !c.is_ok())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(CsvRow {
                dataset: &c.dataset,
                query: &c.query,
                shape: &c.shape,
                declared_shape: c.declared_shape.as_deref(),
                strategy: &c.strategy,
                m: c.m,
                partitioning: &c.partitioning,
                result_count: c.result_count,
                scanned: c.scanned,
                shuffled_modeled: c.shuffled_modeled,
                shuffled_actual: c.shuffled_actual,
                broadcast: c.broadcast,
                wall_ms: c.wall_ms,
                plan: &c.plan,
                oracle: &c.oracle,
                status: &c.status,
                detail: c.detail.as_deref(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Runs every query of every input under every strategy. Cells whose result
/// differs from the oracle, or whose result size differs from another
/// strategy's on the same query, are marked FAILED.
pub fn run_bench(inputs: &[BenchInput], strategies: &[Strategy], config: &BenchConfig) -> Result<BenchReport> {
    let cluster = Cluster::new(config.m)?.with_seed(config.seed);
    let mut report = BenchReport::default();
    for input in inputs {
        let dataset = cluster.load_partitioned(input.triples.clone(), config.base_key);
        for nq in &input.queries {
            let expected = if input.triples.len() <= config.oracle_max_triples {
                match oracle_eval(&nq.query, &input.triples) {
                    Ok(r) => Some(r),
                    Err(Error::OracleLimit { .. }) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            let first = report.cells.len();
            for &strategy in strategies {
                report.cells.push(run_cell(&cluster, &dataset, input, nq, strategy, config, expected.as_ref()));
            }
            let cells = &mut report.cells[first..];
            let counts: std::collections::BTreeSet<u64> = cells.iter().filter_map(|c| c.result_count).collect();
            if counts.len() > 1 {
                for c in cells.iter_mut() {
                    c.status = STATUS_FAILED.into();
                    c.detail.get_or_insert_with(|| "result size differs between strategies".into());
                }
            }
        }
    }
    Ok(report)
}

fn run_cell(
    cluster: &Cluster,
    dataset: &crate::cluster::Dataset,
    input: &BenchInput,
    nq: &NamedQuery,
    strategy: Strategy,
    config: &BenchConfig,
    expected: Option<&Relation>,
) -> BenchCell {
    let mut cell = BenchCell {
        dataset: input.dataset.clone(),
        query: nq.name.clone(),
        shape: classify_shape(&nq.query.patterns).name().into(),
        declared_shape: nq.declared_shape.clone(),
        strategy: strategy.to_string(),
        m: cluster.nodes(),
        partitioning: config.base_key.name().into(),
        result_count: None,
        scanned: 0,
        shuffled_modeled: 0,
        shuffled_actual: 0,
        broadcast: 0,
        wall_ms: None,
        plan: String::new(),
        oracle: "skipped".into(),
        status: STATUS_OK.into(),
        detail: None,
        operators: Vec::new(),
    };
    let start = Instant::now();
    let ex = match execute_query(cluster, dataset, &nq.query, strategy, &config.engine) {
        Ok(ex) => ex,
        Err(e) => {
            cell.status = STATUS_FAILED.into();
            cell.detail = Some(e.to_string());
            return cell;
        }
    };
    if config.timing {
        cell.wall_ms = Some((start.elapsed().as_secs_f64() * 1e6).round() / 1e3);
    }
    let totals = ex.ledger.totals();
    cell.result_count = Some(ex.result.len() as u64);
    cell.scanned = totals.scanned;
    cell.shuffled_modeled = totals.shuffled_modeled;
    cell.shuffled_actual = totals.shuffled_actual;
    cell.broadcast = totals.broadcast;
    cell.plan = ex.plan.to_string();
    cell.operators = ex.ledger.operators().to_vec();
    if let Some(expected) = expected {
        if ex.result.same_multiset(expected) {
            cell.oracle = "match".into();
        } else {
            cell.oracle = "mismatch".into();
            cell.status = STATUS_FAILED.into();
            cell.detail = Some(format!("{} rows, oracle has {}", ex.result.len(), expected.len()));
        }
    }
    cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate, ShapeRequest, WorkloadSpec};

    fn inputs() -> Vec<BenchInput> {
        [ShapeRequest::Star, ShapeRequest::Chain, ShapeRequest::Snowflake]
            .into_iter()
            .map(|s| BenchInput::from(generate(&WorkloadSpec::new(s, 4, 12)).unwrap()))
            .collect()
    }

    #[test]
    fn all_cells_match_the_oracle() {
        let report = run_bench(&inputs(), &Strategy::ALL, &BenchConfig::default()).unwrap();
        assert_eq!(report.cells.len(), 12);
        for c in &report.cells {
            assert!(c.is_ok(), "{c:?}");
            assert_eq!(c.oracle, "match");
            assert!(c.wall_ms.is_none());
        }
    }

    #[test]
    fn output_is_reproducible() {
        let a = run_bench(&inputs(), &Strategy::ALL, &BenchConfig::default()).unwrap();
        let b = run_bench(&inputs(), &Strategy::ALL, &BenchConfig::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    }

    #[test]
    fn csv_has_header_and_one_line_per_cell() {
        let report = run_bench(&inputs()[..1], &[Strategy::Pjoin, Strategy::Hybrid], &BenchConfig::default()).unwrap();
        let csv = report.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("dataset,query,shape,declared_shape,strategy,m,"));
    }

    #[test]
    fn execution_errors_fail_the_cell() {
        let q = crate::ingest::parse_query("SELECT * WHERE { ?a <p> ?b . ?c <q> ?d }").unwrap();
        let input = BenchInput {
            dataset: "d".into(),
            triples: Vec::new(),
            queries: vec![NamedQuery { name: "cross".into(), query: q, declared_shape: None }],
        };
        let report = run_bench(&[input], &[Strategy::Pjoin], &BenchConfig::default()).unwrap();
        assert!(report.any_failed());
        assert!(report.cells[0].detail.as_deref().unwrap().contains("artesian"));
    }
}
