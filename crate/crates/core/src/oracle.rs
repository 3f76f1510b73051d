//! Single-node nested-loop evaluation used as ground truth. It shares no code
//! with the distributed engine beyond the term and binding types.

use crate::error::{Error, Result};
use crate::ingest::Query;
use crate::model::{merge_rows, BindingRow, Position, Relation, Schema, Triple, TriplePattern};

pub const ORACLE_ROW_LIMIT: usize = 1_000_000;

/// Bindings making `pattern` equal to `triple`, if any.
pub fn match_pattern(pattern: &TriplePattern, triple: &Triple) -> Option<BindingRow> {
    let mut row = BindingRow::new();
    for pos in Position::ALL {
        let (pt, tt) = (pattern.get(pos), triple.get(pos));
        match pt.as_variable() {
            Some(v) => match row.get(&v) {
                Some(bound) if bound != tt => return None,
                Some(_) => {}
                None => row.bind(v, tt.clone()).expect("triple terms are ground"),
            },
            None if pt != tt => return None,
            None => {}
        }
    }
    Some(row)
}

/// Cheap pre-check: constants and variables already bound in `acc` agree.
fn compatible(acc: &BindingRow, pattern: &TriplePattern, triple: &Triple) -> bool {
    Position::ALL.iter().all(|&pos| {
        let (pt, tt) = (pattern.get(pos), triple.get(pos));
        match pt.as_variable() {
            Some(v) => acc.get(&v).is_none_or(|b| b == tt),
            None => pt == tt,
        }
    })
}

pub fn oracle_eval(q: &Query, triples: &[Triple]) -> Result<Relation> {
    oracle_eval_with_limit(q, triples, ORACLE_ROW_LIMIT)
}

/// Patterns are taken in textual order; every partial solution is extended
/// with every compatible triple. Aborts once a partial result exceeds `limit`.
pub fn oracle_eval_with_limit(q: &Query, triples: &[Triple], limit: usize) -> Result<Relation> {
    let mut acc = vec![BindingRow::new()];
    for pattern in &q.patterns {
        let mut next = Vec::new();
        for partial in &acc {
            for t in triples.iter().filter(|t| compatible(partial, pattern, t)) {
                let Some(b) = match_pattern(pattern, t) else { continue };
                if let Some(merged) = merge_rows(partial, &b) {
                    next.push(merged);
                    if next.len() > limit {
                        return Err(Error::OracleLimit { limit });
                    }
                }
            }
        }
        acc = next;
    }
    let schema = Schema::new(q.select.clone())?;
    let rows = acc
        .iter()
        .map(|b| q.select.iter().map(|v| b.get(v).cloned().expect("selected variables are bound")).collect())
        .collect();
    Relation::new(schema, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_ntriples_str, parse_query};
    use crate::model::{Row, Term};

    const D0: &str = "<a> <knows> <b> .\n<a> <knows> <c> .\n<b> <knows> <c> .\n<a> <name> \"A\" .\n<b> <name> \"B\" .\n<c> <age> \"7\" .\n";

    fn eval(q: &str) -> Relation {
        oracle_eval(&parse_query(q).unwrap(), &parse_ntriples_str(D0).unwrap()).unwrap()
    }

    #[test]
    fn bag_semantics_keep_duplicates() {
        let r = eval("SELECT ?x WHERE { ?x <knows> ?y . ?x <name> ?n }");
        let mut xs: Vec<String> = r.rows().iter().map(|row| row[0].to_string()).collect();
        xs.sort();
        assert_eq!(xs, vec!["<a>", "<a>", "<b>"]);
    }

    #[test]
    fn no_match_is_empty() {
        assert!(eval("SELECT ?x WHERE { ?x <flies> ?y }").is_empty());
        assert!(eval("SELECT ?x WHERE { ?x <knows> ?y . ?y <flies> ?z }").is_empty());
    }

    #[test]
    fn ground_pattern_gives_one_empty_row() {
        let r = eval("SELECT * WHERE { <a> <knows> <b> }");
        assert_eq!(r.len(), 1);
        assert!(r.schema().is_empty());
    }

    #[test]
    fn repeated_variables_must_agree() {
        let triples = parse_ntriples_str("<a> <p> <a> .\n<a> <p> <b> .\n").unwrap();
        let q = parse_query("SELECT ?x WHERE { ?x <p> ?x }").unwrap();
        let r = oracle_eval(&q, &triples).unwrap();
        assert_eq!(r.rows(), &[Row::from(vec![Term::iri("a")])]);
    }

    #[test]
    fn limit_aborts() {
        let triples: Vec<Triple> =
            (0..50).map(|i| Triple::new(Term::iri(format!("s{i}")), Term::iri("p"), Term::iri("o")).unwrap()).collect();
        let q = parse_query("SELECT * WHERE { ?a <p> ?o . ?b <p> ?o . ?c <p> ?o }").unwrap();
        assert!(matches!(oracle_eval_with_limit(&q, &triples, 10_000), Err(Error::OracleLimit { limit: 10_000 })));
        assert_eq!(oracle_eval(&q, &triples).unwrap().len(), 125_000);
    }
}
