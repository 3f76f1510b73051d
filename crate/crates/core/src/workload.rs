//! Deterministic synthetic datasets and queries: stars, chains with
//! selectivity profiles, a student/department snowflake, and small random
//! BGPs for equivalence testing.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Query, RDF_TYPE};
use crate::model::{Term, Triple, TriplePattern, Variable};

const EX: &str = "http://example.org/";
const UB: &str = "http://swat.cse.lehigh.edu/onto/univ-bench.owl#";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeRequest {
    Star,
    Chain,
    Snowflake,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectivityProfile {
    #[default]
    Uniform,
    /// Odd-numbered chain patterns match 100 times more triples than even ones.
    AlternatingFrequentRare,
    /// The first two chain patterns are large while their join is tiny.
    FrontLoadedLarge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub shape: ShapeRequest,
    pub pattern_count: usize,
    pub subject_count: usize,
    #[serde(default)]
    pub selectivity_profile: SelectivityProfile,
    #[serde(default)]
    pub seed: u64,
    /// Extra triples no query pattern matches.
    #[serde(default)]
    pub filler_triples: usize,
}

impl WorkloadSpec {
    pub fn new(shape: ShapeRequest, pattern_count: usize, subject_count: usize) -> Self {
        Self {
            name: None,
            shape,
            pattern_count,
            subject_count,
            selectivity_profile: SelectivityProfile::Uniform,
            seed: 0,
            filler_triples: 0,
        }
    }

    pub fn with_profile(mut self, profile: SelectivityProfile) -> Self {
        self.selectivity_profile = profile;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_filler(mut self, filler: usize) -> Self {
        self.filler_triples = filler;
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let shape = match self.shape {
                ShapeRequest::Star => "star",
                ShapeRequest::Chain => "chain",
                ShapeRequest::Snowflake => "snowflake",
            };
            let profile = match self.selectivity_profile {
                SelectivityProfile::Uniform => "",
                SelectivityProfile::AlternatingFrequentRare => "-alt",
                SelectivityProfile::FrontLoadedLarge => "-front",
            };
            format!("{shape}{}{profile}-s{}", self.pattern_count, self.subject_count)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.pattern_count == 0 {
            return Err(Error::Workload("pattern_count must be at least 1".into()));
        }
        if self.subject_count == 0 {
            return Err(Error::Workload("subject_count must be at least 1".into()));
        }
        match (self.shape, self.selectivity_profile) {
            (ShapeRequest::Snowflake, _) if self.pattern_count < 3 => {
                Err(Error::Workload(format!("snowflake needs at least 3 patterns, got {}", self.pattern_count)))
            }
            (ShapeRequest::Star | ShapeRequest::Snowflake, p) if p != SelectivityProfile::Uniform => {
                Err(Error::Workload("selectivity profiles apply to chains only".into()))
            }
            (ShapeRequest::Chain, SelectivityProfile::FrontLoadedLarge) if self.pattern_count < 3 => {
                Err(Error::Workload("front-loaded chains need at least 3 patterns".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Parses a JSON list of specs and validates each one. Every invalid entry is
/// reported with its index.
pub fn parse_specs(json: &str) -> Result<Vec<WorkloadSpec>> {
    let specs: Vec<WorkloadSpec> = serde_json::from_str(json)?;
    let errors: Vec<String> = specs
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s.validate() {
            Ok(()) => None,
            Err(Error::Workload(msg)) => Some(format!("spec {i}: {msg}")),
            Err(e) => Some(format!("spec {i}: {e}")),
        })
        .collect();
    if errors.is_empty() {
        Ok(specs)
    } else {
        Err(Error::Workload(errors.join("; ")))
    }
}

#[derive(Clone, Debug)]
pub struct Workload {
    pub name: String,
    pub triples: Vec<Triple>,
    pub query: Query,
}

fn iri(s: String) -> Term {
    Term::iri(s)
}

fn pattern(s: Term, p: Term, o: Term) -> TriplePattern {
    TriplePattern::new(s, p, o).expect("generated patterns are well formed")
}

fn triple(s: &Term, p: &Term, o: Term) -> Triple {
    Triple::new(s.clone(), p.clone(), o).expect("generated triples are well formed")
}

fn query(patterns: Vec<TriplePattern>) -> Query {
    let mut select: Vec<Variable> = Vec::new();
    for p in &patterns {
        for v in [&p.s, &p.p, &p.o].into_iter().filter_map(Term::as_variable) {
            if !select.contains(&v) {
                select.push(v);
            }
        }
    }
    Query::new(select, patterns).expect("generated queries are well formed")
}

pub fn generate(spec: &WorkloadSpec) -> Result<Workload> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut triples, query) = match spec.shape {
        ShapeRequest::Star => star(spec, &mut rng),
        ShapeRequest::Chain => match spec.selectivity_profile {
            SelectivityProfile::Uniform => chain_uniform(spec, &mut rng),
            SelectivityProfile::AlternatingFrequentRare => chain_alternating(spec),
            SelectivityProfile::FrontLoadedLarge => chain_front_loaded(spec),
        },
        ShapeRequest::Snowflake => snowflake(spec),
    };
    add_filler(&mut triples, spec.filler_triples, &mut rng);
    triples.shuffle(&mut rng);
    Ok(Workload { name: spec.label(), triples, query })
}

fn add_filler(triples: &mut Vec<Triple>, n: usize, rng: &mut ChaCha8Rng) {
    let preds: Vec<Term> = (0..7).map(|i| iri(format!("{EX}filler{i}"))).collect();
    let subjects = (n / 10).max(1);
    let subject_terms: Vec<Term> = (0..subjects).map(|i| iri(format!("{EX}f{i}"))).collect();
    triples.reserve(n);
    for i in 0..n {
        let s = &subject_terms[i % subjects];
        let p = &preds[rng.gen_range(0..preds.len())];
        triples.push(triple(s, p, Term::literal(&i.to_string())));
    }
}

/// `subject_count` entities each carrying one value for each of
/// `pattern_count` properties; the query is a subject star over them.
fn star(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> (Vec<Triple>, Query) {
    let props: Vec<Term> = (1..=spec.pattern_count).map(|j| iri(format!("{EX}p{j}"))).collect();
    let mut triples = Vec::with_capacity(spec.subject_count * spec.pattern_count);
    for i in 0..spec.subject_count {
        let s = iri(format!("{EX}s{i}"));
        for p in &props {
            triples.push(triple(&s, p, Term::literal(&format!("v{}", rng.gen_range(0..1000)))));
        }
    }
    let x = Term::var("x");
    let patterns = props
        .iter()
        .enumerate()
        .map(|(j, p)| pattern(x.clone(), p.clone(), Term::var(format!("o{}", j + 1))))
        .collect();
    (triples, query(patterns))
}

fn chain_query(n: usize) -> (Vec<Term>, Query) {
    let props: Vec<Term> = (1..=n).map(|i| iri(format!("{EX}link{i}"))).collect();
    let patterns = props
        .iter()
        .enumerate()
        .map(|(i, p)| pattern(Term::var(format!("v{i}")), p.clone(), Term::var(format!("v{}", i + 1))))
        .collect();
    (props, query(patterns))
}

fn entity(layer: usize, j: usize) -> Term {
    iri(format!("{EX}l{layer}/e{j}"))
}

/// Layers of `subject_count` entities; each entity links to a random entity
/// of the next layer.
fn chain_uniform(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> (Vec<Triple>, Query) {
    let n = spec.pattern_count;
    let s = spec.subject_count;
    let (props, q) = chain_query(n);
    let layers: Vec<Vec<Term>> = (0..=n).map(|l| (0..s).map(|j| entity(l, j)).collect()).collect();
    let mut triples = Vec::with_capacity(n * s);
    for (i, p) in props.iter().enumerate() {
        for subject in &layers[i] {
            triples.push(triple(subject, p, layers[i + 1][rng.gen_range(0..s)].clone()));
        }
    }
    (triples, q)
}

/// Odd patterns link the first `100·s` entities of a layer to the same index
/// in the next layer; even patterns link only every 100th of them. Every
/// join result therefore has `s` rows.
fn chain_alternating(spec: &WorkloadSpec) -> (Vec<Triple>, Query) {
    let n = spec.pattern_count;
    let rare = spec.subject_count;
    let frequent = 100 * rare;
    let (props, q) = chain_query(n);
    let mut triples = Vec::new();
    for (i, p) in props.iter().enumerate() {
        let indices: Box<dyn Iterator<Item = usize>> =
            if i % 2 == 0 { Box::new(0..frequent) } else { Box::new((0..rare).map(|k| 100 * k)) };
        for j in indices {
            triples.push(triple(&entity(i, j), p, entity(i + 1, j)));
        }
    }
    (triples, q)
}

/// The first two patterns hold `10·s` triples each but only `max(1, s/50)`
/// of them join; the remaining patterns are one-to-one links over `s`
/// entities.
fn chain_front_loaded(spec: &WorkloadSpec) -> (Vec<Triple>, Query) {
    let n = spec.pattern_count;
    let s = spec.subject_count;
    let large = 10 * s;
    let tiny = (s / 50).max(1).min(s);
    let (props, q) = chain_query(n);
    let mut triples = Vec::new();
    for j in 0..large {
        triples.push(triple(&entity(0, j), &props[0], entity(1, j)));
    }
    // Subjects large - tiny .. 2·large - tiny: only the first `tiny` of them
    // are objects of the first pattern. Their objects are 0 .. large.
    let offset = large - tiny;
    for k in 0..large {
        triples.push(triple(&entity(1, offset + k), &props[1], entity(2, k)));
    }
    for (i, p) in props.iter().enumerate().skip(2) {
        for j in 0..s {
            triples.push(triple(&entity(i, j), p, entity(i + 1, j)));
        }
    }
    (triples, q)
}

/// Universities with departments and students. The query joins students,
/// their department and the department's university, plus e-mail addresses.
///
/// `subject_count` is the number of students per department. Every third
/// student has a second address.
fn snowflake(spec: &WorkloadSpec) -> (Vec<Triple>, Query) {
    const UNIVERSITIES: usize = 3;
    const DEPARTMENTS: usize = 4;
    let rdf_type = iri(RDF_TYPE.to_string());
    let ub = |local: &str| iri(format!("{UB}{local}"));
    let (student_class, dept_class) = (ub("Student"), ub("Department"));
    let (member_of, sub_org, email) = (ub("memberOf"), ub("subOrganizationOf"), ub("emailAddress"));
    let extra_props: Vec<Term> =
        (1..=spec.pattern_count.saturating_sub(5)).map(|k| ub(&format!("property{k}"))).collect();
    let mut triples = Vec::new();
    for u in 0..UNIVERSITIES {
        let univ = iri(format!("http://www.University{u}.edu"));
        for d in 0..DEPARTMENTS {
            let dept = iri(format!("http://www.Department{d}.University{u}.edu"));
            triples.push(triple(&dept, &rdf_type, dept_class.clone()));
            triples.push(triple(&dept, &sub_org, univ.clone()));
            for s in 0..spec.subject_count {
                let host = format!("Department{d}.University{u}.edu");
                let student = Term::iri(Arc::<str>::from(format!("http://www.{host}/Student{s}")));
                triples.push(triple(&student, &rdf_type, student_class.clone()));
                triples.push(triple(&student, &member_of, dept.clone()));
                triples.push(triple(&student, &email, Term::literal(&format!("Student{s}@{host}"))));
                if s % 3 == 0 {
                    triples.push(triple(&student, &email, Term::literal(&format!("Student{s}@alumni.{host}"))));
                }
                for (k, p) in extra_props.iter().enumerate() {
                    triples.push(triple(&student, p, Term::literal(&format!("value{k}-{s}"))));
                }
            }
        }
    }
    let (x, y, z) = (Term::var("x"), Term::var("y"), Term::var("z"));
    let all = [
        pattern(x.clone(), rdf_type.clone(), student_class),
        pattern(y.clone(), rdf_type, dept_class),
        pattern(x.clone(), member_of, y.clone()),
        pattern(y, sub_org, iri("http://www.University0.edu".into())),
        pattern(x.clone(), email, z),
    ];
    let mut patterns: Vec<TriplePattern> = match spec.pattern_count {
        3 => all[1..4].to_vec(),
        4 => all[1..5].to_vec(),
        _ => all.to_vec(),
    };
    for (k, p) in extra_props.into_iter().enumerate() {
        patterns.push(pattern(x.clone(), p, Term::var(format!("w{}", k + 1))));
    }
    (triples, query(patterns))
}

/// A small random dataset and a connected BGP over it: at most 200 triples
/// over a tiny vocabulary, 1 to 6 patterns, occasionally a variable
/// predicate or a variable repeated inside one pattern.
pub fn random_workload(seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities: Vec<Term> = (0..12).map(|i| iri(format!("{EX}r{i}"))).collect();
    let preds: Vec<Term> = (0..4).map(|i| iri(format!("{EX}q{i}"))).collect();
    let literals: Vec<Term> = (0..3).map(|i| Term::literal(&format!("lit{i}"))).collect();
    let n_triples = rng.gen_range(0..=200);
    let mut triples = Vec::with_capacity(n_triples);
    for _ in 0..n_triples {
        let s = entities.choose(&mut rng).expect("non-empty");
        let p = preds.choose(&mut rng).expect("non-empty");
        let o = if rng.gen_bool(0.2) { literals.choose(&mut rng) } else { entities.choose(&mut rng) };
        triples.push(triple(s, p, o.expect("non-empty").clone()));
    }

    let n_patterns = rng.gen_range(1..=6);
    let mut vars: Vec<Term> = Vec::new();
    let mut patterns = Vec::with_capacity(n_patterns);
    for i in 0..n_patterns {
        let fresh = |vars: &mut Vec<Term>| {
            let v = Term::var(format!("v{}", vars.len()));
            vars.push(v.clone());
            v
        };
        let node = |rng: &mut ChaCha8Rng, vars: &mut Vec<Term>, object: bool| -> Term {
            let roll = rng.gen_range(0..10);
            if roll < 2 {
                if object && rng.gen_bool(0.3) {
                    literals.choose(rng).expect("non-empty").clone()
                } else {
                    entities.choose(rng).expect("non-empty").clone()
                }
            } else if roll < 6 && !vars.is_empty() {
                vars.choose(rng).expect("non-empty").clone()
            } else {
                fresh(vars)
            }
        };
        let mut s = node(&mut rng, &mut vars, false);
        let p = if rng.gen_bool(0.1) { fresh(&mut vars) } else { preds.choose(&mut rng).expect("non-empty").clone() };
        let mut o = if rng.gen_bool(0.05) && s.is_variable() { s.clone() } else { node(&mut rng, &mut vars, true) };
        if i > 0 {
            // Connect to an earlier pattern through one of its variables.
            let earlier: Vec<Term> = patterns
                .iter()
                .flat_map(|tp: &TriplePattern| [tp.s.clone(), tp.p.clone(), tp.o.clone()])
                .filter(Term::is_variable)
                .collect();
            let shares = [&s, &p, &o].iter().any(|t| earlier.contains(t));
            if !shares {
                if let Some(v) = earlier.choose(&mut rng) {
                    if rng.gen_bool(0.5) {
                        s = v.clone();
                    } else {
                        o = v.clone();
                    }
                } else {
                    // Earlier patterns are ground: fall back to a fresh variable chain.
                    s = fresh(&mut vars);
                }
            }
        }
        patterns.push(pattern(s, p, o));
    }
    // A ground earlier prefix leaves the query disconnected; drop patterns
    // until the rest is connected through variables.
    let patterns = connected_prefix(patterns);
    let mut q = query(patterns);
    let keep = rng.gen_range(0..=q.select.len());
    if keep > 0 && keep < q.select.len() {
        q.select.shuffle(&mut rng);
        q.select.truncate(keep);
    }
    Workload { name: format!("random-{seed}"), triples, query: q }
}

fn connected_prefix(patterns: Vec<TriplePattern>) -> Vec<TriplePattern> {
    let comps = crate::planner::logical::components(&patterns);
    if comps.len() <= 1 {
        return patterns;
    }
    let biggest = comps.iter().max_by_key(|c| (c.len(), std::cmp::Reverse(c[0]))).expect("non-empty").clone();
    biggest.into_iter().map(|i| patterns[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_eval;
    use crate::planner::{build_logical, classify_shape, ShapeClass};

    #[test]
    fn star_sizes() {
        let w = generate(&WorkloadSpec::new(ShapeRequest::Star, 3, 10)).unwrap();
        assert_eq!(w.triples.len(), 30);
        assert_eq!(w.query.patterns.len(), 3);
        assert_eq!(classify_shape(&w.query.patterns), ShapeClass::Star { oriented: true });
        assert_eq!(oracle_eval(&w.query, &w.triples).unwrap().len(), 10);
        let padded = generate(&WorkloadSpec::new(ShapeRequest::Star, 5, 200).with_filler(99_000)).unwrap();
        assert_eq!(padded.triples.len(), 100_000);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = WorkloadSpec::new(ShapeRequest::Chain, 4, 20).with_seed(9);
        assert_eq!(generate(&spec).unwrap().triples, generate(&spec).unwrap().triples);
        assert_eq!(random_workload(5).triples, random_workload(5).triples);
        assert_eq!(random_workload(5).query, random_workload(5).query);
    }

    #[test]
    fn chains() {
        let w = generate(&WorkloadSpec::new(ShapeRequest::Chain, 1, 5)).unwrap();
        assert_eq!(w.query.patterns.len(), 1);
        let w = generate(&WorkloadSpec::new(ShapeRequest::Chain, 4, 5)).unwrap();
        assert_eq!(classify_shape(&w.query.patterns), ShapeClass::Chain);
        assert_eq!(oracle_eval(&w.query, &w.triples).unwrap().len(), 5);

        let alt = generate(
            &WorkloadSpec::new(ShapeRequest::Chain, 4, 3).with_profile(SelectivityProfile::AlternatingFrequentRare),
        )
        .unwrap();
        assert_eq!(alt.triples.len(), 300 + 3 + 300 + 3);
        assert_eq!(oracle_eval(&alt.query, &alt.triples).unwrap().len(), 3);

        let front = generate(
            &WorkloadSpec::new(ShapeRequest::Chain, 5, 100).with_profile(SelectivityProfile::FrontLoadedLarge),
        )
        .unwrap();
        assert_eq!(front.triples.len(), 2 * 1000 + 3 * 100);
        assert_eq!(oracle_eval(&front.query, &front.triples).unwrap().len(), 2);
    }

    #[test]
    fn snowflake_fixture() {
        let w = generate(&WorkloadSpec::new(ShapeRequest::Snowflake, 5, 10)).unwrap();
        assert_eq!(classify_shape(&w.query.patterns), ShapeClass::Snowflake);
        // 12 departments × (2 + 10 students × 3) + 4 extra addresses each.
        assert_eq!(w.triples.len(), 12 * (2 + 30 + 4));
        // Students of the 4 departments of University0, 14 addresses each.
        assert_eq!(oracle_eval(&w.query, &w.triples).unwrap().len(), 4 * 14);
        assert_eq!(generate(&WorkloadSpec::new(ShapeRequest::Snowflake, 3, 2)).unwrap().query.patterns.len(), 3);
        assert_eq!(generate(&WorkloadSpec::new(ShapeRequest::Snowflake, 7, 2)).unwrap().query.patterns.len(), 7);
    }

    #[test]
    fn validation() {
        assert!(generate(&WorkloadSpec::new(ShapeRequest::Snowflake, 2, 5)).is_err());
        assert!(generate(&WorkloadSpec::new(ShapeRequest::Star, 0, 5)).is_err());
        assert!(generate(&WorkloadSpec::new(ShapeRequest::Star, 2, 0)).is_err());
        let spec: WorkloadSpec =
            serde_json::from_str(r#"{"shape":"chain","pattern_count":4,"subject_count":3,"selectivity_profile":"alternating-frequent-rare"}"#)
                .unwrap();
        assert_eq!(spec.selectivity_profile, SelectivityProfile::AlternatingFrequentRare);
    }

    #[test]
    fn random_workloads_are_connected_and_small() {
        for seed in 0..300 {
            let w = random_workload(seed);
            assert!(w.triples.len() <= 200);
            assert!((1..=6).contains(&w.query.patterns.len()));
            assert!(build_logical(&w.query, false).is_ok(), "seed {seed}: {}", w.query);
        }
    }

    #[test]
    fn spec_lists_report_indices() {
        assert!(parse_specs("[]").unwrap().is_empty());
        let json = r#"[{"shape":"star","pattern_count":3,"subject_count":5},
                       {"shape":"snowflake","pattern_count":2,"subject_count":5}]"#;
        let err = parse_specs(json).unwrap_err().to_string();
        assert!(err.contains("spec 1:"), "{err}");
        let suite =
            std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/workloads/star-suite.json"))
                .unwrap();
        assert_eq!(parse_specs(&suite).unwrap().len(), 4);
    }
}
