use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::ingest::Query;
use crate::model::{format_vars, TriplePattern, VarSet, Variable};

/// Join expression over the patterns of a query. Leaves hold pattern indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogicalPlan {
    Leaf(usize),
    /// `vars` is empty only for an explicitly allowed cross product.
    Join {
        vars: VarSet,
        children: Vec<LogicalPlan>,
    },
}

impl LogicalPlan {
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            LogicalPlan::Leaf(i) => out.push(*i),
            LogicalPlan::Join { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn vars(&self, patterns: &[TriplePattern]) -> VarSet {
        self.leaves().into_iter().flat_map(|i| patterns[i].vars()).collect()
    }
}

impl fmt::Display for LogicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogicalPlan::Leaf(i) => write!(f, "t{}", i + 1),
            LogicalPlan::Join { vars, children } => {
                if vars.is_empty() {
                    f.write_str("cross(")?;
                } else {
                    write!(f, "join_{{{}}}(", format_vars(vars))?;
                }
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Variables shared by at least two patterns, with the index of the last
/// pattern mentioning each.
pub fn join_variables(patterns: &[TriplePattern]) -> BTreeMap<Variable, usize> {
    let mut count: BTreeMap<Variable, (usize, usize)> = BTreeMap::new();
    for (i, p) in patterns.iter().enumerate() {
        for v in p.vars() {
            let e = count.entry(v).or_insert((0, i));
            e.0 += 1;
            e.1 = i;
        }
    }
    count.into_iter().filter(|(_, (n, _))| *n >= 2).map(|(v, (_, last))| (v, last)).collect()
}

/// Groups of pattern indices that are connected through shared variables,
/// ordered by their first pattern.
pub fn components(patterns: &[TriplePattern]) -> Vec<Vec<usize>> {
    let n = patterns.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    let vars: Vec<VarSet> = patterns.iter().map(TriplePattern::vars).collect();
    for i in 0..n {
        for j in i + 1..n {
            if !vars[i].is_disjoint(&vars[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Canonical join expression. Patterns are taken in textual order; as soon
/// as every pattern mentioning a join variable has been seen, all partial
/// plans containing that variable are joined into one n-ary join. Variables
/// completing at the same pattern are handled in name order.
pub fn build_logical(q: &Query, allow_cross_product: bool) -> Result<LogicalPlan> {
    let patterns = &q.patterns;
    let join_vars = join_variables(patterns);
    let mut items: Vec<(LogicalPlan, VarSet)> = Vec::new();
    for (i, p) in patterns.iter().enumerate() {
        items.push((LogicalPlan::Leaf(i), p.vars()));
        for (v, _) in join_vars.iter().filter(|(_, &last)| last == i) {
            let members: Vec<usize> = (0..items.len()).filter(|&k| items[k].1.contains(v)).collect();
            if members.len() < 2 {
                continue;
            }
            let at = members[0];
            let mut taken = Vec::with_capacity(members.len());
            for &k in members.iter().rev() {
                taken.push(items.remove(k));
            }
            taken.reverse();
            let mut shared = taken[0].1.clone();
            let mut all = VarSet::new();
            for (_, vs) in &taken {
                shared = shared.intersection(vs).cloned().collect();
                all.extend(vs.iter().cloned());
            }
            let children = taken.into_iter().map(|(plan, _)| plan).collect();
            items.insert(at, (LogicalPlan::Join { vars: shared, children }, all));
        }
    }
    if items.len() == 1 {
        return Ok(items.pop().expect("one item").0);
    }
    if !allow_cross_product {
        let groups: Vec<String> = components(patterns)
            .iter()
            .map(|g| g.iter().map(|i| format!("t{}", i + 1)).collect::<Vec<_>>().join(","))
            .collect();
        return Err(Error::CartesianProduct(format!(
            "patterns form {} disconnected groups: {{{}}}",
            groups.len(),
            groups.join("} {")
        )));
    }
    Ok(LogicalPlan::Join { vars: VarSet::new(), children: items.into_iter().map(|(p, _)| p).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::varset;
    use crate::ingest::parse_query;

    fn q(src: &str) -> Query {
        parse_query(src).unwrap()
    }

    #[test]
    fn q8_grouping() {
        let q8 = q(include_str!("../../../../data/queries/q8.rq"));
        let plan = build_logical(&q8, false).unwrap();
        assert_eq!(plan.to_string(), "join_{?x}(t1, join_{?y}(t2, t3, t4), t5)");
        let mut leaves = plan.leaves();
        leaves.sort();
        assert_eq!(leaves, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_pattern_is_leaf() {
        assert_eq!(build_logical(&q("SELECT ?x WHERE { ?x <p> ?y }"), false).unwrap(), LogicalPlan::Leaf(0));
    }

    #[test]
    fn chain_is_left_deep() {
        let plan =
            build_logical(&q("SELECT * WHERE { ?a <p> ?b . ?b <q> ?c . ?c <r> ?d . ?d <s> ?e }"), false).unwrap();
        assert_eq!(plan.to_string(), "join_{?d}(join_{?c}(join_{?b}(t1, t2), t3), t4)");
    }

    #[test]
    fn star_is_one_nary_join() {
        let plan =
            build_logical(&q("SELECT * WHERE { ?x <p> ?a . ?x <q> ?b . ?x <r> ?c . ?x <s> ?d }"), false).unwrap();
        assert_eq!(plan.to_string(), "join_{?x}(t1, t2, t3, t4)");
    }

    #[test]
    fn join_vars_are_intersections() {
        let plan = build_logical(&q("SELECT * WHERE { ?x <p> ?y . ?x <q> ?y }"), false).unwrap();
        match plan {
            LogicalPlan::Join { vars, .. } => assert_eq!(vars, varset(["x", "y"])),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn disconnected_patterns() {
        let query = q("SELECT * WHERE { ?x <p> ?y . ?a <q> ?b }");
        let err = build_logical(&query, false).unwrap_err();
        assert!(matches!(err, Error::CartesianProduct(_)));
        assert_eq!(build_logical(&query, true).unwrap().to_string(), "cross(t1, t2)");
        let query = q("SELECT * WHERE { ?x <p> ?y . ?a <q> ?b . ?y <r> ?z }");
        assert_eq!(components(&query.patterns), vec![vec![0, 2], vec![1]]);
        assert_eq!(build_logical(&query, true).unwrap().to_string(), "cross(join_{?y}(t1, t3), t2)");
    }
}
