use std::path::PathBuf;

use bgp_core::oracle::oracle_eval;
use bgp_core::planner::classify_shape;
use bgp_core::report::{run_bench, BenchConfig, BenchInput};
use bgp_core::workload::{generate, parse_specs};
use bgp_core::{execute_query, parse_ntriples, parse_query, BaseKey, Cluster, EngineConfig, ShapeClass, Strategy};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn query(name: &str) -> bgp_core::Query {
    parse_query(&std::fs::read_to_string(data(&format!("queries/{name}"))).unwrap()).unwrap()
}

#[test]
fn watdiv_queries_classify() {
    assert_eq!(classify_shape(&query("S1.rq").patterns), ShapeClass::Star { oriented: true });
    assert_eq!(classify_shape(&query("F5.rq").patterns), ShapeClass::Snowflake);
    assert_eq!(classify_shape(&query("C3.rq").patterns), ShapeClass::Star { oriented: true });
    assert_eq!(classify_shape(&query("q8.rq").patterns), ShapeClass::Snowflake);
    assert_eq!(query("S1.rq").patterns.len(), 8);
    assert_eq!(query("C3.rq").select.len(), 1);
}

#[test]
fn d0_star_query_under_every_strategy() {
    let file = std::fs::File::open(data("fixtures/d0.nt")).unwrap();
    let triples = parse_ntriples(std::io::BufReader::new(file)).unwrap();
    assert_eq!(triples.len(), 6);
    let q = query("d0-star.rq");
    let expected = oracle_eval(&q, &triples).unwrap();
    assert_eq!(expected.len(), 3);
    let cluster = Cluster::new(2).unwrap();
    let ds = cluster.load_partitioned(triples, BaseKey::Subject);
    for s in Strategy::ALL {
        let ex = execute_query(&cluster, &ds, &q, s, &EngineConfig::default()).unwrap();
        assert!(ex.result.same_multiset(&expected), "{s}");
        if matches!(s, Strategy::Pjoin | Strategy::Hybrid) {
            assert_eq!(ex.ledger.totals().modeled_transfer(), 0, "{s}");
        }
    }
}

#[test]
fn star_suite_has_zero_transfer_under_hybrid() {
    let specs = parse_specs(&std::fs::read_to_string(data("workloads/star-suite.json")).unwrap()).unwrap();
    let inputs: Vec<BenchInput> = specs.iter().map(|s| generate(s).unwrap().into()).collect();
    let report = run_bench(&inputs, &[Strategy::Hybrid], &BenchConfig::default()).unwrap();
    assert_eq!(report.cells.len(), 4);
    for c in &report.cells {
        assert!(c.is_ok(), "{c:?}");
        assert_eq!((c.shuffled_modeled, c.shuffled_actual, c.broadcast), (0, 0, 0), "{}", c.dataset);
    }
}
