//! N-Triples and BGP query parsing.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Position, Term, TermKind, Triple, TriplePattern, Variable};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// Shares one allocation between repeated lexical forms.
#[derive(Default)]
pub struct Interner {
    map: HashMap<Box<str>, Arc<str>>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> Arc<str> {
        if let Some(a) = self.map.get(s) {
            return a.clone();
        }
        let a: Arc<str> = Arc::from(s);
        self.map.insert(s.into(), a.clone());
        a
    }
}

/// Reads W3C N-Triples. Blank lines and `#` comments are skipped; the first
/// malformed line aborts the whole parse.
pub fn parse_ntriples<R: BufRead>(source: R) -> Result<Vec<Triple>> {
    let mut interner = Interner::default();
    let mut triples = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let triple = parse_ntriples_line(trimmed, &mut interner).map_err(|message| Error::NTriples {
            line: idx + 1,
            message,
            text: line.clone(),
        })?;
        triples.push(triple);
    }
    Ok(triples)
}

pub fn parse_ntriples_str(source: &str) -> Result<Vec<Triple>> {
    parse_ntriples(source.as_bytes())
}

fn parse_ntriples_line(line: &str, interner: &mut Interner) -> std::result::Result<Triple, String> {
    let mut cur = Cursor::new(line);
    let s = cur.nt_term(interner)?.ok_or("missing subject")?;
    let p = cur.nt_term(interner)?.ok_or("missing predicate")?;
    let o = cur.nt_term(interner)?.ok_or("missing object")?;
    cur.skip_ws();
    if !cur.eat('.') {
        return Err("missing terminating '.'".into());
    }
    cur.skip_ws();
    if !(cur.at_end() || cur.peek() == Some('#')) {
        return Err("unexpected content after '.'".into());
    }
    Triple::new(s, p, o).map_err(|e| e.to_string())
}

pub fn to_ntriples(triples: &[Triple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if f(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        &self.src[start..self.pos]
    }

    /// `<...>` with the cursor on `<`; returns the IRI body.
    fn iri_body(&mut self) -> std::result::Result<&'a str, String> {
        debug_assert_eq!(self.peek(), Some('<'));
        let start = self.pos + 1;
        match self.src[start..].find('>') {
            Some(len) => {
                let body = &self.src[start..start + len];
                if body.contains(char::is_whitespace) {
                    return Err("whitespace inside IRI".into());
                }
                self.pos = start + len + 1;
                Ok(body)
            }
            None => Err("unterminated IRI".into()),
        }
    }

    /// Full literal token: quoted string plus optional `@lang` or `^^<iri>`.
    fn literal_token(&mut self) -> std::result::Result<&'a str, String> {
        let start = self.pos;
        self.pos += 1;
        let mut escaped = false;
        loop {
            let c = self.peek().ok_or("unterminated literal")?;
            self.pos += c.len_utf8();
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                break;
            }
        }
        if self.eat('@') {
            let tag = self.take_while(|c| c.is_ascii_alphanumeric() || c == '-');
            if tag.is_empty() {
                return Err("empty language tag".into());
            }
        } else if self.rest().starts_with("^^") {
            self.pos += 2;
            if self.peek() != Some('<') {
                return Err("datatype must be an IRI".into());
            }
            self.iri_body()?;
        }
        Ok(&self.src[start..self.pos])
    }

    fn blank_label(&mut self) -> std::result::Result<&'a str, String> {
        let start = self.pos + 2;
        self.pos = start;
        let label = self.take_while(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.');
        // A trailing '.' belongs to the statement terminator.
        let label = label.trim_end_matches('.');
        self.pos = start + label.len();
        if label.is_empty() {
            return Err("empty blank node label".into());
        }
        Ok(label)
    }

    fn nt_term(&mut self, interner: &mut Interner) -> std::result::Result<Option<Term>, String> {
        self.skip_ws();
        match self.peek() {
            Some('<') => Ok(Some(Term::iri(interner.intern(self.iri_body()?)))),
            Some('"') => {
                let tok = self.literal_token()?;
                Ok(Some(Term::new(TermKind::Literal, interner.intern(tok)).map_err(|e| e.to_string())?))
            }
            Some('_') if self.rest().starts_with("_:") => Ok(Some(Term::blank(interner.intern(self.blank_label()?)))),
            Some('.') | None | Some('#') => Ok(None),
            Some(c) => Err(format!("unexpected character '{c}'")),
        }
    }
}

/// A basic graph pattern query: `SELECT vars WHERE { patterns }`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub select: Vec<Variable>,
    pub patterns: Vec<TriplePattern>,
}

impl Query {
    pub fn new(select: Vec<Variable>, patterns: Vec<TriplePattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::QuerySyntax { offset: 0, message: "query has no triple patterns".into() });
        }
        let bound: BTreeSet<Variable> = patterns.iter().flat_map(TriplePattern::vars).collect();
        if let Some(v) = select.iter().find(|v| !bound.contains(v)) {
            return Err(Error::UnknownVariable(v.to_string()));
        }
        Ok(Self { select, patterns })
    }

    pub fn vars(&self) -> BTreeSet<Variable> {
        self.patterns.iter().flat_map(TriplePattern::vars).collect()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT")?;
        for v in &self.select {
            write!(f, " {v}")?;
        }
        f.write_str(" WHERE {")?;
        for (i, p) in self.patterns.iter().enumerate() {
            if i > 0 {
                f.write_str(" .")?;
            }
            write!(f, " {p}")?;
        }
        f.write_str(" }")
    }
}

const UNSUPPORTED: &[&str] = &[
    "FILTER",
    "OPTIONAL",
    "UNION",
    "MINUS",
    "BIND",
    "VALUES",
    "GRAPH",
    "SERVICE",
    "DISTINCT",
    "REDUCED",
    "ORDER",
    "LIMIT",
    "OFFSET",
    "GROUP",
    "HAVING",
    "FROM",
    "CONSTRUCT",
    "ASK",
    "DESCRIBE",
];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    Iri(String),
    PName(String, String),
    Literal(String),
    Blank(String),
    LBrace,
    RBrace,
    Dot,
    Other(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let mut cur = Cursor::new(src);
    let mut toks = Vec::new();
    let syntax = |offset: usize, message: String| Error::QuerySyntax { offset, message };
    loop {
        cur.skip_ws();
        let start = cur.pos;
        let Some(c) = cur.peek() else { break };
        let tok = match c {
            '#' => {
                cur.take_while(|c| c != '\n');
                continue;
            }
            '{' => {
                cur.pos += 1;
                Tok::LBrace
            }
            '}' => {
                cur.pos += 1;
                Tok::RBrace
            }
            '.' => {
                cur.pos += 1;
                Tok::Dot
            }
            '?' | '$' => {
                cur.pos += 1;
                let name = cur.take_while(|c| c.is_alphanumeric() || c == '_');
                if name.is_empty() {
                    return Err(syntax(start, "empty variable name".into()));
                }
                Tok::Var(name.to_string())
            }
            '<' => Tok::Iri(cur.iri_body().map_err(|m| syntax(start, m))?.to_string()),
            '"' => Tok::Literal(cur.literal_token().map_err(|m| syntax(start, m))?.to_string()),
            '_' if cur.rest().starts_with("_:") => {
                cur.pos += 2;
                let label = cur.take_while(|c| c.is_alphanumeric() || c == '_' || c == '-');
                if label.is_empty() {
                    return Err(syntax(start, "empty blank node label".into()));
                }
                Tok::Blank(label.to_string())
            }
            c if c.is_alphabetic() || c == ':' => {
                let word = cur.take_while(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == ':' || c == '.');
                // A trailing '.' is a statement separator, not part of the name.
                let trimmed = word.trim_end_matches('.');
                cur.pos = start + trimmed.len();
                match trimmed.split_once(':') {
                    Some((prefix, local)) => Tok::PName(prefix.to_string(), local.to_string()),
                    None => Tok::Word(trimmed.to_string()),
                }
            }
            c => {
                cur.pos += c.len_utf8();
                Tok::Other(c)
            }
        };
        toks.push((start, tok));
    }
    Ok(toks)
}

struct QueryParser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
    prefixes: HashMap<String, String>,
    interner: Interner,
}

impl QueryParser {
    fn offset(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |(o, _)| *o)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(_, t)| t.clone());
        self.idx += 1;
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::QuerySyntax { offset: self.offset(), message: message.into() })
    }

    fn is_keyword(tok: Option<&Tok>, kw: &str) -> bool {
        matches!(tok, Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn check_unsupported(&self) -> Result<()> {
        if let Some(Tok::Word(w)) = self.peek() {
            let upper = w.to_ascii_uppercase();
            if UNSUPPORTED.contains(&upper.as_str()) {
                return Err(Error::Unsupported(upper));
            }
        }
        if matches!(self.peek(), Some(Tok::LBrace)) {
            return Err(Error::Unsupported("nested group pattern".into()));
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Query> {
        while Self::is_keyword(self.peek(), "PREFIX") {
            self.next();
            let (prefix, local) = match self.next() {
                Some(Tok::PName(p, l)) => (p, l),
                _ => return self.err_back("expected prefix name after PREFIX"),
            };
            if !local.is_empty() {
                return self.err_back("prefix declaration must end with ':'");
            }
            let iri = match self.next() {
                Some(Tok::Iri(i)) => i,
                _ => return self.err_back("expected IRI in PREFIX declaration"),
            };
            self.prefixes.insert(prefix, iri);
        }
        if Self::is_keyword(self.peek(), "BASE") {
            return Err(Error::Unsupported("BASE".into()));
        }
        self.check_unsupported()?;
        if !Self::is_keyword(self.peek(), "SELECT") {
            return self.err("expected SELECT");
        }
        self.next();
        self.check_unsupported()?;
        let mut select = Vec::new();
        let all = matches!(self.peek(), Some(Tok::Other('*')));
        if all {
            self.next();
        }
        while let Some(Tok::Var(name)) = self.peek().cloned() {
            if all {
                return self.err("cannot mix '*' with variables");
            }
            select.push(Variable::new(self.interner.intern(&name)));
            self.next();
        }
        if select.is_empty() && !all {
            return self.err("SELECT requires at least one variable");
        }
        self.check_unsupported()?;
        if Self::is_keyword(self.peek(), "WHERE") {
            self.next();
        }
        if self.next() != Some(Tok::LBrace) {
            return self.err_back("expected '{'");
        }
        let mut patterns = Vec::new();
        loop {
            self.check_unsupported()?;
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.next();
                    break;
                }
                None => return self.err("unterminated group pattern, expected '}'"),
                _ => {}
            }
            let s = self.term()?;
            let p = self.term()?;
            let o = self.term()?;
            let offset = self.offset();
            patterns
                .push(TriplePattern::new(s, p, o).map_err(|e| Error::QuerySyntax { offset, message: e.to_string() })?);
            self.check_unsupported()?;
            match self.peek() {
                Some(Tok::Dot) => {
                    self.next();
                }
                Some(Tok::RBrace) => {}
                _ => return self.err("expected '.' or '}' after triple pattern"),
            }
        }
        self.check_unsupported()?;
        if self.peek().is_some() {
            return self.err("unexpected content after group pattern");
        }
        if all {
            for p in &patterns {
                for pos in Position::ALL {
                    if let Some(v) = p.get(pos).as_variable() {
                        if !select.contains(&v) {
                            select.push(v);
                        }
                    }
                }
            }
        }
        Query::new(select, patterns).map_err(|e| match e {
            Error::UnknownVariable(v) => Error::QuerySyntax {
                offset: 0,
                message: format!("selected variable {v} does not occur in the pattern"),
            },
            other => other,
        })
    }

    fn err_back<T>(&mut self, message: &str) -> Result<T> {
        self.idx = self.idx.saturating_sub(1);
        self.err(message)
    }

    fn term(&mut self) -> Result<Term> {
        self.check_unsupported()?;
        let term = match self.next() {
            Some(Tok::Var(name)) => Term::var(self.interner.intern(&name)),
            Some(Tok::Iri(iri)) => Term::iri(self.interner.intern(&iri)),
            Some(Tok::Literal(lit)) => Term::new(TermKind::Literal, self.interner.intern(&lit))?,
            Some(Tok::Blank(label)) => Term::blank(self.interner.intern(&label)),
            Some(Tok::PName(prefix, local)) => match self.prefixes.get(&prefix) {
                Some(ns) => {
                    let full = format!("{ns}{local}");
                    Term::iri(self.interner.intern(&full))
                }
                None => return self.err_back(&format!("undeclared prefix '{prefix}:'")),
            },
            Some(Tok::Word(w)) if w == "a" => Term::iri(self.interner.intern(RDF_TYPE)),
            Some(Tok::Word(w)) => return self.err_back(&format!("unexpected word '{w}'")),
            Some(_) => return self.err_back("expected a term"),
            None => return self.err("unexpected end of query, expected a term"),
        };
        Ok(term)
    }
}

/// Parses the BGP subset: `PREFIX* SELECT ?v+ WHERE { tp ( . tp )* .? }`.
pub fn parse_query(source: &str) -> Result<Query> {
    let toks = tokenize(source)?;
    QueryParser { toks, idx: 0, end: source.len(), prefixes: HashMap::new(), interner: Interner::default() }.parse()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_iris_and_literals() {
        let t = parse_ntriples_str("<a> <knows> <b> .\n").unwrap();
        assert_eq!(t, vec![Triple::new(Term::iri("a"), Term::iri("knows"), Term::iri("b")).unwrap()]);
        let t = parse_ntriples_str("_:n1 <age> \"7\" .").unwrap();
        assert_eq!(t[0].s, Term::blank("n1"));
        assert_eq!(t[0].o, Term::literal("7"));
    }

    #[test]
    fn literal_suffixes_are_kept_verbatim() {
        let t = parse_ntriples_str(
            "<a> <p> \"chat\"@fr .\n<a> <p> \"7\"^^<http://www.w3.org/2001/XMLSchema#int> .\n<a> <p> \"q\\\"x\" .",
        )
        .unwrap();
        assert_eq!(t[0].o.lexical(), "\"chat\"@fr");
        assert_eq!(t[1].o.lexical(), "\"7\"^^<http://www.w3.org/2001/XMLSchema#int>");
        assert_eq!(t[2].o.lexical(), "\"q\\\"x\"");
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let t = parse_ntriples_str("# header\n\n<a> <p> <b> . # trailing\n  \n").unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn blank_node_before_terminator() {
        let t = parse_ntriples_str("<a> <p> _:b1.").unwrap();
        assert_eq!(t[0].o, Term::blank("b1"));
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse_ntriples_str("<a> <knows> .").unwrap_err();
        match err {
            Error::NTriples { line, message, text } => {
                assert_eq!(line, 1);
                assert_eq!(message, "missing object");
                assert_eq!(text, "<a> <knows> .");
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse_ntriples_str("<a> <p> <b> .\n<a> <p> <b>\n").unwrap_err();
        assert!(matches!(err, Error::NTriples { line: 2, .. }));
        assert!(parse_ntriples_str("\"lit\" <p> <b> .").is_err());
        assert!(parse_ntriples_str("<a> <p> <b> . extra").is_err());
    }

    #[test]
    fn parses_simple_query() {
        let q = parse_query("SELECT ?x WHERE { ?x <knows> ?y . ?x <name> ?n }").unwrap();
        assert_eq!(q.select, vec![Variable::new("x")]);
        assert_eq!(q.patterns.len(), 2);
        assert_eq!(q.patterns[0], TriplePattern::new(Term::var("x"), Term::iri("knows"), Term::var("y")).unwrap());
        assert_eq!(q.patterns[1].p, Term::iri("name"));
    }

    #[test]
    fn expands_prefixes_and_a() {
        let q = parse_query(
            "PREFIX ub: <http://example.org/ub#>\nSELECT ?x WHERE { ?x a ub:Student . ?x ub:memberOf ?y . }",
        )
        .unwrap();
        assert_eq!(q.patterns[0].p, Term::iri(RDF_TYPE));
        assert_eq!(q.patterns[0].o, Term::iri("http://example.org/ub#Student"));
        assert_eq!(q.patterns[1].p, Term::iri("http://example.org/ub#memberOf"));
    }

    #[test]
    fn rejects_unsupported_features() {
        let err = parse_query("SELECT ?x WHERE { ?x <p> ?y OPTIONAL { ?y <q> ?z } }").unwrap_err();
        assert_eq!(err.to_string(), "unsupported feature: OPTIONAL");
        let err = parse_query("SELECT ?x WHERE { ?x <p> ?y . FILTER(?y) }").unwrap_err();
        assert!(matches!(err, Error::Unsupported(f) if f == "FILTER"));
        let err = parse_query("SELECT ?x WHERE { { ?x <p> ?y } UNION { ?x <q> ?y } }").unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let err = parse_query("SELECT ?x WHERE { ?x <p> }").unwrap_err();
        assert!(matches!(err, Error::QuerySyntax { offset: 25, .. }), "{err:?}");
        assert!(parse_query("SELECT WHERE { ?x <p> ?y }").is_err());
        assert!(parse_query("SELECT ?z WHERE { ?x <p> ?y }").is_err());
        assert!(parse_query("SELECT ?x WHERE { ?x ex:p ?y }").is_err());
        assert!(parse_query("SELECT ?x WHERE { }").is_err());
    }

    #[test]
    fn q8_reconstruction_parses() {
        let src = include_str!("../../../data/queries/q8.rq");
        let q = parse_query(src).unwrap();
        assert_eq!(q.patterns.len(), 5);
        let t4 = &q.patterns[3];
        assert!(!t4.p.is_variable() && !t4.o.is_variable());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn ground() -> impl Strategy<Value = Term> {
            prop_oneof![
                "[a-z]{1,4}(/[a-z0-9]{1,3})?".prop_map(|s| Term::iri(s.as_str())),
                "[a-z][a-z0-9]{0,3}".prop_map(|s| Term::blank(s.as_str())),
                "[ -~]{0,6}".prop_map(|s| Term::literal(&s)),
            ]
        }

        fn node() -> impl Strategy<Value = Term> {
            prop_oneof![
                "[a-z]{1,4}".prop_map(|s| Term::iri(s.as_str())),
                "[a-z][a-z0-9]{0,3}".prop_map(|s| Term::blank(s.as_str())),
            ]
        }

        fn slot(g: BoxedStrategy<Term>) -> impl Strategy<Value = Term> {
            prop_oneof![g, "[a-e]".prop_map(|s| Term::var(s.as_str()))]
        }

        fn query() -> impl Strategy<Value = Query> {
            proptest::collection::vec(
                (
                    slot(node().boxed()),
                    slot("[a-z]{1,4}".prop_map(|s| Term::iri(s.as_str())).boxed()),
                    slot(ground().boxed()),
                ),
                1..5,
            )
            .prop_filter_map("needs a variable", |slots| {
                let patterns: Vec<_> =
                    slots.into_iter().map(|(s, p, o)| TriplePattern::new(s, p, o).unwrap()).collect();
                let vars: Vec<_> =
                    patterns.iter().flat_map(TriplePattern::vars).collect::<BTreeSet<_>>().into_iter().collect();
                if vars.is_empty() {
                    None
                } else {
                    Query::new(vars, patterns).ok()
                }
            })
        }

        proptest! {
            #[test]
            fn ntriples_round_trip(s in node(), p in "[a-z]{1,4}", o in ground()) {
                let t = Triple::new(s, Term::iri(p.as_str()), o).unwrap();
                let text = to_ntriples(std::slice::from_ref(&t));
                let back = parse_ntriples_str(&text).unwrap();
                prop_assert_eq!(back, vec![t]);
            }

            #[test]
            fn query_round_trip(q in query()) {
                let text = q.to_string();
                prop_assert_eq!(parse_query(&text).unwrap(), q);
            }
        }
    }
}
