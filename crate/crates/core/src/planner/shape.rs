use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::model::{Position, TriplePattern, Variable};
use crate::planner::logical::join_variables;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeClass {
    Star { oriented: bool },
    Chain,
    Snowflake,
    Complex,
}

impl ShapeClass {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeClass::Star { oriented: true } => "star(oriented)",
            ShapeClass::Star { oriented: false } => "star",
            ShapeClass::Chain => "chain",
            ShapeClass::Snowflake => "snowflake",
            ShapeClass::Complex => "complex",
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ShapeClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Above this many join variables the snowflake search gives up.
const MAX_SNOWFLAKE_CENTERS: usize = 7;

fn node_positions(p: &TriplePattern, v: &Variable) -> BTreeSet<Position> {
    p.position_of(v).into_iter().filter(|pos| *pos != Position::Predicate).collect()
}

pub fn classify_shape(patterns: &[TriplePattern]) -> ShapeClass {
    if patterns.len() <= 1 {
        return ShapeClass::Star { oriented: true };
    }
    let join: Vec<Variable> = join_variables(patterns).into_keys().collect();
    if let Some(shape) = star(patterns, &join) {
        return shape;
    }
    if is_chain(patterns, &join) {
        return ShapeClass::Chain;
    }
    if join.len() <= MAX_SNOWFLAKE_CENTERS && is_snowflake(patterns, &join) {
        return ShapeClass::Snowflake;
    }
    ShapeClass::Complex
}

fn star(patterns: &[TriplePattern], join: &[Variable]) -> Option<ShapeClass> {
    let [x] = join else { return None };
    let positions: Vec<BTreeSet<Position>> = patterns.iter().map(|p| node_positions(p, x)).collect();
    if positions.iter().any(BTreeSet::is_empty) {
        return None;
    }
    let oriented = positions.iter().all(|p| p.len() == 1 && *p == positions[0]);
    Some(ShapeClass::Star { oriented })
}

/// Patterns linked into a simple path, consecutive ones sharing exactly one
/// variable at a subject or object position, each link on a distinct variable.
fn is_chain(patterns: &[TriplePattern], join: &[Variable]) -> bool {
    let n = patterns.len();
    if join.len() != n - 1 {
        return false;
    }
    let mut degree = vec![0usize; n];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for v in join {
        let holders: Vec<usize> = (0..n).filter(|&i| patterns[i].vars().contains(v)).collect();
        let [a, b] = holders[..] else { return false };
        if node_positions(&patterns[a], v).is_empty() || node_positions(&patterns[b], v).is_empty() {
            return false;
        }
        if edges.contains(&(a, b)) {
            return false;
        }
        edges.push((a, b));
        degree[a] += 1;
        degree[b] += 1;
    }
    if degree.iter().any(|&d| d == 0 || d > 2) {
        return false;
    }
    // n - 1 edges, no vertex of degree > 2, connected => a path.
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        for &(a, b) in &edges {
            if a == i && !seen[b] {
                stack.push(b);
            }
            if b == i && !seen[a] {
                stack.push(a);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Nested stars `join_{x1}(P1, join_{x2}(P2, … join_{xk}(Pk)))`: some order of
/// the join variables such that assigning every pattern to the innermost
/// center it holds gives non-empty groups, the innermost with at least two
/// patterns, and every outer center also occurs further in.
fn is_snowflake(patterns: &[TriplePattern], join: &[Variable]) -> bool {
    if join.len() < 2 {
        return false;
    }
    let mut order: Vec<usize> = (0..join.len()).collect();
    loop {
        if snowflake_with_order(patterns, join, &order) {
            return true;
        }
        if !next_permutation(&mut order) {
            return false;
        }
    }
}

fn snowflake_with_order(patterns: &[TriplePattern], join: &[Variable], order: &[usize]) -> bool {
    let k = order.len();
    let centers: Vec<&Variable> = order.iter().map(|&i| &join[i]).collect();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pi, p) in patterns.iter().enumerate() {
        let level = (0..k).rev().find(|&lvl| !node_positions(p, centers[lvl]).is_empty());
        match level {
            Some(lvl) => groups[lvl].push(pi),
            None => return false,
        }
    }
    if groups.iter().any(Vec::is_empty) || groups[k - 1].len() < 2 {
        return false;
    }
    (0..k - 1).all(|lvl| groups[lvl + 1..].iter().flatten().any(|&pi| patterns[pi].vars().contains(centers[lvl])))
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else { return false };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_query;

    fn shape(src: &str) -> ShapeClass {
        classify_shape(&parse_query(src).unwrap().patterns)
    }

    #[test]
    fn stars() {
        assert_eq!(shape("SELECT * WHERE { ?x <p> ?a . ?x <q> ?b . ?x <r> ?c }"), ShapeClass::Star { oriented: true });
        assert_eq!(shape("SELECT * WHERE { ?x <p> ?a . ?b <q> ?x }"), ShapeClass::Star { oriented: false });
        assert_eq!(shape("SELECT * WHERE { ?x <p> ?a }"), ShapeClass::Star { oriented: true });
        // The shared variable sits at the predicate in one pattern.
        assert_eq!(shape("SELECT * WHERE { ?x <p> ?a . ?b ?x ?c }"), ShapeClass::Complex);
    }

    #[test]
    fn chains() {
        assert_eq!(shape("SELECT * WHERE { ?a <p> ?b . ?b <q> ?c . ?c <r> ?d }"), ShapeClass::Chain);
        assert_eq!(shape("SELECT * WHERE { ?c <r> ?d . ?a <p> ?b . ?b <q> ?c }"), ShapeClass::Chain);
        assert_eq!(shape("SELECT * WHERE { ?a <p> ?b . ?b <q> ?c . ?c <r> ?a }"), ShapeClass::Complex);
    }

    #[test]
    fn snowflakes() {
        let q8 = parse_query(include_str!("../../../../data/queries/q8.rq")).unwrap();
        assert_eq!(classify_shape(&q8.patterns), ShapeClass::Snowflake);
        assert_eq!(shape("SELECT * WHERE { ?a <p> ?b . ?a <q> ?c . ?b <r> ?d . ?b <s> ?e }"), ShapeClass::Snowflake);
    }

    #[test]
    fn permutations_are_exhaustive() {
        let mut v = vec![0, 1, 2, 3];
        let mut n = 1;
        while next_permutation(&mut v) {
            n += 1;
        }
        assert_eq!(n, 24);
    }
}
