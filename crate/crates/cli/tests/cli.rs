use std::path::PathBuf;
use std::process::{Command, Output};

fn data(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel).display().to_string()
}

fn bgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn load_prints_node_counts() {
    let o = bgp(&["load", &data("fixtures/d0.nt"), "-m", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("6 triples, nodes=[n0:"), "{out}");
    assert!(out.contains(", n1:"), "{out}");
}

#[test]
fn d0_star_query_under_hybrid() {
    let o = bgp(&["query", &data("fixtures/d0.nt"), &data("queries/d0-star.rq"), "--strategy", "hybrid"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("?x\t?y\t?n"));
    let rows: Vec<&str> = lines.by_ref().take_while(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 3);
    assert!(out.contains("shuffled_modeled: 0"));
    assert!(out.contains("result_count: 3"));
}

#[test]
fn all_strategies_print_four_metric_blocks() {
    let o = bgp(&["query", &data("fixtures/d0.nt"), &data("queries/d0-star.rq"), "--strategy", "all"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.matches("strategy: ").count(), 4);
    assert_eq!(out.matches("result_count: 3").count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d0 = data("fixtures/d0.nt");
    let missing = bgp(&["load", "no/such/file.nt"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());

    assert_eq!(bgp(&["load", &d0, "-m", "0"]).status.code(), Some(2));
    assert_eq!(bgp(&["load", &d0, "--theta-comm", "0"]).status.code(), Some(2));

    let optional = write(&dir, "opt.rq", "SELECT ?x WHERE { ?x <knows> ?y OPTIONAL { ?x <name> ?n } }");
    assert_eq!(bgp(&["query", &d0, &optional]).status.code(), Some(3));

    let cross = write(&dir, "cross.rq", "SELECT * WHERE { ?x <knows> ?y . ?a <name> ?n }");
    assert_eq!(bgp(&["query", &d0, &cross]).status.code(), Some(4));
    let allowed = bgp(&["query", &d0, &cross, "--allow-cross-product"]);
    assert_eq!(allowed.status.code(), Some(0));
    assert!(stdout(&allowed).contains("result_count: 6"));

    let bad_nt = write(&dir, "bad.nt", "<a> <b> <c> .\n<a> <b>\n");
    let err = bgp(&["load", &bad_nt]);
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("line 2"));
}

#[test]
fn bench_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json").display().to_string();
    let b = dir.path().join("b.json").display().to_string();
    let suite = data("workloads/star-suite.json");
    for out in [&a, &b] {
        let o = bgp(&["bench", &suite, "--strategy", "all", "--seed", "7", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ja, jb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ja, jb);
    let text = String::from_utf8(ja).unwrap();
    assert!(text.contains("\"wall_ms\": null"));
}

#[test]
fn star_suite_hybrid_cells_have_zero_transfer() {
    let o = bgp(&["bench", &data("workloads/star-suite.json"), "--report", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let mut cells = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[col("strategy")], "hybrid");
        for name in ["shuffled_modeled", "shuffled_actual", "broadcast"] {
            assert_eq!(f[col(name)], "0", "{line}");
        }
        cells += 1;
    }
    assert_eq!(cells, 4);
}

#[test]
fn bench_spec_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(&dir, "empty.json", "[]");
    let o = bgp(&["bench", &empty]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"cells\": []"));

    let bad = write(
        &dir,
        "bad.json",
        r#"[{"shape":"star","pattern_count":3,"subject_count":4},{"shape":"snowflake","pattern_count":2,"subject_count":4}]"#,
    );
    let o = bgp(&["bench", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spec 1"));
}

#[test]
fn bundled_queries_report_both_shape_labels() {
    let o = bgp(&[
        "bench",
        "--data",
        &data("fixtures/d0.nt"),
        "--query",
        &data("queries/C3.rq"),
        "--query",
        &data("queries/F5.rq"),
        "--report",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("C3,star(oriented),complex,hybrid"), "{out}");
    assert!(out.contains("F5,snowflake,snowflake,hybrid"), "{out}");
}

#[test]
fn explain_q8() {
    let dir = tempfile::tempdir().unwrap();
    let gen = bgp(&["generate", &data("workloads/q8.json"), "--out-dir", &dir.path().display().to_string()]);
    assert_eq!(gen.status.code(), Some(0));
    let nt = dir.path().join("q8.nt").display().to_string();
    let o = bgp(&["explain", &nt, &data("queries/q8.rq"), "--strategy", "all"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("transfer: (120 + Γ(Pjoin_{?y}(t2, t3, t4)))"), "{out}");
    assert!(out.contains("plan: Brjoin_{?x,?y}(t1, t2, t3, t4, t5*)"), "{out}");
    assert!(out.contains("first join: Pjoin_{?y}(t2, t4)"), "{out}");

    let analyzed = bgp(&["explain", &nt, &data("queries/q8.rq"), "--analyze"]);
    assert!(stdout(&analyzed).contains("ledger:"));

    let q = bgp(&["query", &nt, &data("queries/q8.rq"), "--strategy", "hybrid"]);
    let out = stdout(&q);
    assert!(out.contains("broadcast: 12"), "{out}");
    assert!(out.contains("shuffled_modeled: 0"), "{out}");
}
