//! RDF terms, triples, triple patterns and binding rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermKind {
    Iri,
    Literal,
    BlankNode,
    Variable,
}

/// An RDF term or a query variable.
///
/// Literals keep their full N-Triples token as the lexical value, quotes and
/// any `@lang` / `^^<datatype>` suffix included, so two literals are equal
/// exactly when their serialized forms are.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    kind: TermKind,
    lexical: Arc<str>,
}

impl Term {
    pub fn new(kind: TermKind, lexical: impl Into<Arc<str>>) -> Result<Self> {
        let lexical = lexical.into();
        if lexical.is_empty() && kind != TermKind::Iri {
            return Err(Error::InvalidTerm(format!("empty {kind:?} term")));
        }
        if kind == TermKind::Literal && !lexical.starts_with('"') {
            return Err(Error::InvalidTerm(format!("literal token must be quoted: {lexical}")));
        }
        Ok(Self { kind, lexical })
    }

    pub fn iri(iri: impl Into<Arc<str>>) -> Self {
        Self { kind: TermKind::Iri, lexical: iri.into() }
    }

    pub fn blank(label: impl Into<Arc<str>>) -> Self {
        Self { kind: TermKind::BlankNode, lexical: label.into() }
    }

    /// A plain literal built from an unescaped value.
    pub fn literal(value: &str) -> Self {
        let mut token = String::with_capacity(value.len() + 2);
        token.push('"');
        for c in value.chars() {
            match c {
                '"' => token.push_str("\\\""),
                '\\' => token.push_str("\\\\"),
                '\n' => token.push_str("\\n"),
                '\r' => token.push_str("\\r"),
                c => token.push(c),
            }
        }
        token.push('"');
        Self { kind: TermKind::Literal, lexical: token.into() }
    }

    pub fn var(name: impl Into<Arc<str>>) -> Self {
        Self { kind: TermKind::Variable, lexical: name.into() }
    }

    pub fn kind(&self) -> TermKind {
        self.kind
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn is_variable(&self) -> bool {
        self.kind == TermKind::Variable
    }

    pub fn as_variable(&self) -> Option<Variable> {
        self.is_variable().then(|| Variable(self.lexical.clone()))
    }
}

impl From<Variable> for Term {
    fn from(v: Variable) -> Self {
        Term { kind: TermKind::Variable, lexical: v.0 }
    }
}

/// Canonical serialization; also the byte string fed to the partition hash.
impl Term {
    /// The canonical form as prefix, lexical part and suffix.
    pub(crate) fn canonical_parts(&self) -> [&str; 3] {
        match self.kind {
            TermKind::Iri => ["<", &self.lexical, ">"],
            TermKind::Literal => ["", &self.lexical, ""],
            TermKind::BlankNode => ["_:", &self.lexical, ""],
            TermKind::Variable => ["?", &self.lexical, ""],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.canonical_parts().iter().try_for_each(|part| f.write_str(part))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A query variable, stored without its `?` sigil.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variable(Arc<str>);

impl Variable {
    pub fn new(name: impl Into<Arc<str>>) -> Self {
        Variable(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

impl fmt::Debug for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

pub type VarSet = BTreeSet<Variable>;

pub fn format_vars(vars: &VarSet) -> String {
    vars.iter().map(Variable::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Position {
    Subject,
    Predicate,
    Object,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Subject, Position::Predicate, Position::Object];
}

/// A ground RDF statement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub s: Term,
    pub p: Term,
    pub o: Term,
}

impl Triple {
    pub fn new(s: Term, p: Term, o: Term) -> Result<Self> {
        if !matches!(s.kind, TermKind::Iri | TermKind::BlankNode) {
            return Err(Error::InvalidTerm(format!("triple subject must be an IRI or blank node: {s}")));
        }
        if p.kind != TermKind::Iri {
            return Err(Error::InvalidTerm(format!("triple predicate must be an IRI: {p}")));
        }
        if o.kind == TermKind::Variable {
            return Err(Error::InvalidTerm(format!("triple object cannot be a variable: {o}")));
        }
        Ok(Self { s, p, o })
    }

    pub fn get(&self, pos: Position) -> &Term {
        match pos {
            Position::Subject => &self.s,
            Position::Predicate => &self.p,
            Position::Object => &self.o,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.s, self.p, self.o)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriplePattern {
    pub s: Term,
    pub p: Term,
    pub o: Term,
}

impl TriplePattern {
    pub fn new(s: Term, p: Term, o: Term) -> Result<Self> {
        if s.kind == TermKind::Literal {
            return Err(Error::InvalidTerm(format!("pattern subject cannot be a literal: {s}")));
        }
        if !matches!(p.kind, TermKind::Iri | TermKind::Variable) {
            return Err(Error::InvalidTerm(format!("pattern predicate must be an IRI or variable: {p}")));
        }
        Ok(Self { s, p, o })
    }

    pub fn get(&self, pos: Position) -> &Term {
        match pos {
            Position::Subject => &self.s,
            Position::Predicate => &self.p,
            Position::Object => &self.o,
        }
    }

    /// The distinct variables of the pattern.
    pub fn vars(&self) -> VarSet {
        Position::ALL.iter().filter_map(|&pos| self.get(pos).as_variable()).collect()
    }

    /// Variables sitting at the subject or object position.
    pub fn node_vars(&self) -> VarSet {
        [&self.s, &self.o].into_iter().filter_map(Term::as_variable).collect()
    }

    pub fn position_of(&self, var: &Variable) -> Vec<Position> {
        Position::ALL
            .into_iter()
            .filter(|&pos| self.get(pos).is_variable() && self.get(pos).lexical() == var.name())
            .collect()
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.s, self.p, self.o)
    }
}

impl fmt::Debug for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

pub fn vars(pattern: &TriplePattern) -> VarSet {
    pattern.vars()
}

/// A solution mapping from variables to ground terms.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BindingRow(BTreeMap<Variable, Term>);

impl BindingRow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, var: Variable, term: Term) -> Result<()> {
        if term.is_variable() {
            return Err(Error::InvalidTerm(format!("cannot bind {var} to variable {term}")));
        }
        self.0.insert(var, term);
        Ok(())
    }

    pub fn with(mut self, var: &str, term: Term) -> Self {
        self.bind(Variable::new(var), term).expect("ground binding");
        self
    }

    pub fn get(&self, var: &Variable) -> Option<&Term> {
        self.0.get(var)
    }

    pub fn domain(&self) -> VarSet {
        self.0.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Variable, &Term)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(Variable, Term)> for BindingRow {
    fn from_iter<I: IntoIterator<Item = (Variable, Term)>>(iter: I) -> Self {
        BindingRow(iter.into_iter().collect())
    }
}

/// Joins two rows if they agree on every shared variable.
pub fn merge_rows(left: &BindingRow, right: &BindingRow) -> Option<BindingRow> {
    let mut merged = left.0.clone();
    for (var, term) in &right.0 {
        match merged.get(var) {
            Some(existing) if existing != term => return None,
            Some(_) => {}
            None => {
                merged.insert(var.clone(), term.clone());
            }
        }
    }
    Some(BindingRow(merged))
}

/// Ordered, duplicate-free column list of a relation.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Schema(Arc<[Variable]>);

impl Schema {
    pub fn new(vars: Vec<Variable>) -> Result<Self> {
        let distinct: VarSet = vars.iter().cloned().collect();
        if distinct.len() != vars.len() {
            return Err(Error::InvalidTerm("schema contains a repeated variable".into()));
        }
        Ok(Schema(vars.into()))
    }

    pub fn from_set(vars: &VarSet) -> Self {
        Schema(vars.iter().cloned().collect::<Vec<_>>().into())
    }

    pub fn empty() -> Self {
        Schema(Arc::from(Vec::new()))
    }

    pub fn vars(&self) -> &[Variable] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, var: &Variable) -> Option<usize> {
        self.0.iter().position(|v| v == var)
    }

    pub fn contains(&self, var: &Variable) -> bool {
        self.index_of(var).is_some()
    }

    pub fn to_set(&self) -> VarSet {
        self.0.iter().cloned().collect()
    }
}

impl fmt::Debug for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// A binding row laid out positionally against a [`Schema`].
pub type Row = Arc<[Term]>;

/// A multiset of solutions held in one place.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    schema: Schema,
    rows: Vec<Row>,
}

impl Relation {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != schema.len()) {
            return Err(Error::InvalidTerm(format!(
                "row width {} does not match schema width {}",
                bad.len(),
                schema.len()
            )));
        }
        Ok(Self { schema, rows })
    }

    pub(crate) fn from_parts(schema: Schema, rows: Vec<Row>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == schema.len()));
        Self { schema, rows }
    }

    /// Builds a relation from mapping-style rows, all of which must share `schema`'s domain.
    pub fn from_bindings(schema: Schema, bindings: &[BindingRow]) -> Result<Self> {
        let set = schema.to_set();
        let mut rows = Vec::with_capacity(bindings.len());
        for b in bindings {
            if b.domain() != set {
                return Err(Error::InvalidTerm(format!(
                    "binding domain {:?} differs from schema {:?}",
                    b.domain(),
                    schema
                )));
            }
            rows.push(schema.vars().iter().map(|v| b.get(v).cloned().expect("domain checked")).collect());
        }
        Ok(Self { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Self { schema, rows: Vec::new() }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn binding_rows(&self) -> Vec<BindingRow> {
        self.rows.iter().map(|row| self.schema.vars().iter().cloned().zip(row.iter().cloned()).collect()).collect()
    }

    /// Keeps the listed columns, in the listed order. Duplicates are kept.
    pub fn project(&self, select: &[Variable]) -> Result<Relation> {
        let idx = select
            .iter()
            .map(|v| self.schema.index_of(v).ok_or_else(|| Error::UnknownVariable(v.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let rows = self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
        Ok(Relation { schema: Schema::new(select.to_vec())?, rows })
    }

    /// Columns in sorted variable order and rows sorted: a canonical multiset form.
    pub fn canonical(&self) -> Relation {
        let mut order: Vec<usize> = (0..self.schema.len()).collect();
        order.sort_by(|&a, &b| self.schema.vars()[a].cmp(&self.schema.vars()[b]));
        let schema = Schema(order.iter().map(|&i| self.schema.vars()[i].clone()).collect::<Vec<_>>().into());
        let mut rows: Vec<Row> = self.rows.iter().map(|r| order.iter().map(|&i| r[i].clone()).collect()).collect();
        rows.sort_unstable();
        Relation { schema, rows }
    }

    pub fn same_multiset(&self, other: &Relation) -> bool {
        self.schema.to_set() == other.schema.to_set() && self.canonical() == other.canonical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iri(s: &str) -> Term {
        Term::iri(s)
    }

    #[test]
    fn vars_of_patterns() {
        let p = TriplePattern::new(Term::var("x"), iri("knows"), Term::var("y")).unwrap();
        assert_eq!(vars(&p), [Variable::new("x"), Variable::new("y")].into_iter().collect());
        let ground = TriplePattern::new(iri("a"), iri("knows"), iri("b")).unwrap();
        assert!(vars(&ground).is_empty());
        let repeated = TriplePattern::new(Term::var("x"), iri("knows"), Term::var("x")).unwrap();
        assert_eq!(vars(&repeated).len(), 1);
    }

    #[test]
    fn merge_rows_cases() {
        let a = BindingRow::new().with("x", iri("a"));
        let ab = BindingRow::new().with("x", iri("a")).with("y", iri("b"));
        assert_eq!(merge_rows(&a, &ab), Some(ab.clone()));
        let xb = BindingRow::new().with("x", iri("b"));
        assert_eq!(merge_rows(&a, &xb), None);
        let yb = BindingRow::new().with("y", iri("b"));
        assert_eq!(merge_rows(&a, &yb), Some(ab));
    }

    #[test]
    fn triple_position_rules() {
        assert!(Triple::new(Term::literal("x"), iri("p"), iri("o")).is_err());
        assert!(Triple::new(iri("s"), Term::blank("b"), iri("o")).is_err());
        assert!(Triple::new(iri("s"), iri("p"), Term::var("o")).is_err());
        assert!(Triple::new(Term::blank("n1"), iri("age"), Term::literal("7")).is_ok());
        assert!(TriplePattern::new(iri("s"), Term::literal("p"), iri("o")).is_err());
        assert!(TriplePattern::new(Term::var("s"), Term::var("p"), Term::var("o")).is_ok());
    }

    #[test]
    fn variables_never_equal_ground_terms() {
        assert_ne!(Term::var("a"), Term::iri("a"));
        assert_ne!(Term::var("a"), Term::blank("a"));
        assert!(Term::var("a") > Term::iri("zzz"));
    }

    #[test]
    fn binding_rejects_variables() {
        let mut row = BindingRow::new();
        assert!(row.bind(Variable::new("x"), Term::var("y")).is_err());
    }

    #[test]
    fn projection_keeps_duplicates() {
        let schema = Schema::new(vec![Variable::new("x"), Variable::new("y")]).unwrap();
        let rel =
            Relation::new(schema, vec![vec![iri("a"), iri("b")].into(), vec![iri("a"), iri("c")].into()]).unwrap();
        let p = rel.project(&[Variable::new("x")]).unwrap();
        assert_eq!(p.len(), 2);
        assert!(rel.project(&[Variable::new("z")]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn term() -> impl Strategy<Value = Term> {
            prop_oneof![
                "[a-c]{1,2}".prop_map(|s| Term::iri(s.as_str())),
                "[a-c]{1,2}".prop_map(|s| Term::blank(s.as_str())),
                "[a-c]{0,2}".prop_map(|s| Term::literal(&s)),
                "[a-c]{1,2}".prop_map(|s| Term::var(s.as_str())),
            ]
        }

        fn row() -> impl Strategy<Value = BindingRow> {
            proptest::collection::btree_map("[x-z]", "[a-b]", 0..3)
                .prop_map(|m| m.into_iter().map(|(k, v)| (Variable::new(k.as_str()), Term::iri(v.as_str()))).collect())
        }

        proptest! {
            #[test]
            fn term_order_is_total(a in term(), b in term()) {
                let lt = a < b;
                let gt = a > b;
                prop_assert!(a == b || (lt ^ gt));
            }

            #[test]
            fn merge_is_commutative(a in row(), b in row()) {
                prop_assert_eq!(merge_rows(&a, &b), merge_rows(&b, &a));
            }

            #[test]
            fn merge_is_associative_when_defined(a in row(), b in row(), c in row()) {
                let left = merge_rows(&a, &b).and_then(|ab| merge_rows(&ab, &c));
                let right = merge_rows(&b, &c).and_then(|bc| merge_rows(&a, &bc));
                if left.is_some() && right.is_some() {
                    prop_assert_eq!(left, right);
                }
            }
        }
    }
}
