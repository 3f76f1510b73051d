//! Simulated shared-nothing cluster.
//!
//! Data lives in per-node chunks. Moving rows between nodes goes through
//! [`shuffle`] and [`broadcast`], which charge a [`TransferLedger`]. Two
//! shuffle counters are kept: `shuffled_modeled` charges the whole input, as
//! the analytic cost model does, while `shuffled_actual` counts only rows that
//! really change node.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{format_vars, BindingRow, Position, Relation, Row, Schema, Term, Triple, VarSet, Variable};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// FNV-1a 64 over the canonical serialization of each term, each followed by
/// a 0x00 separator.
pub fn hash_terms<'a>(terms: impl IntoIterator<Item = &'a Term>) -> u64 {
    let mut hash = FNV_OFFSET;
    for term in terms {
        for part in term.canonical_parts() {
            hash = fnv1a(hash, part.as_bytes());
        }
        hash = fnv1a(hash, &[0]);
    }
    hash
}

fn node_for_terms<'a>(terms: impl IntoIterator<Item = &'a Term>, m: usize) -> usize {
    (hash_terms(terms) % m as u64) as usize
}

/// Node owning a row under a hash partitioning on `key`.
pub fn node_of(row: &BindingRow, key: &VarSet, m: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::Config("cluster needs at least one node".into()));
    }
    let terms = key
        .iter()
        .map(|v| row.get(v).ok_or_else(|| Error::UnboundPartitionKey(v.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok(node_for_terms(terms, m))
}

/// Column indices of `key` in `schema`, in lexicographic variable order.
fn key_columns(schema: &Schema, key: &VarSet) -> Result<Vec<usize>> {
    key.iter().map(|v| schema.index_of(v).ok_or_else(|| Error::UnboundPartitionKey(v.to_string()))).collect()
}

fn node_of_row(row: &[Term], cols: &[usize], m: usize) -> usize {
    node_for_terms(cols.iter().map(|&i| &row[i]), m)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum PartitionState {
    /// Rows are placed by hashing the bindings of a non-empty variable set.
    Keyed(VarSet),
    /// Each row sits on exactly one node, placement unknown.
    Random,
    /// Every node holds the full multiset. `origin` is the key the relation
    /// was laid out on before it was replicated, if any.
    Replicated { origin: Option<VarSet> },
}

impl PartitionState {
    /// `Keyed(∅)` collapses to `Random`.
    pub fn keyed(key: VarSet) -> Self {
        if key.is_empty() {
            PartitionState::Random
        } else {
            PartitionState::Keyed(key)
        }
    }

    pub fn is_keyed_on(&self, key: &VarSet) -> bool {
        matches!(self, PartitionState::Keyed(k) if k == key)
    }

    pub fn is_replicated(&self) -> bool {
        matches!(self, PartitionState::Replicated { .. })
    }
}

impl fmt::Display for PartitionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionState::Keyed(k) => write!(f, "keyed{{{}}}", format_vars(k)),
            PartitionState::Random => f.write_str("random"),
            PartitionState::Replicated { origin: Some(k) } => write!(f, "replicated(from {{{}}})", format_vars(k)),
            PartitionState::Replicated { origin: None } => f.write_str("replicated"),
        }
    }
}

impl Serialize for PartitionState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl fmt::Debug for PartitionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Which triple position the base data is hash-partitioned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKey {
    Subject,
    Predicate,
    Object,
    Random,
}

impl BaseKey {
    pub fn position(self) -> Option<Position> {
        match self {
            BaseKey::Subject => Some(Position::Subject),
            BaseKey::Predicate => Some(Position::Predicate),
            BaseKey::Object => Some(Position::Object),
            BaseKey::Random => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseKey::Subject => "subject",
            BaseKey::Predicate => "predicate",
            BaseKey::Object => "object",
            BaseKey::Random => "random",
        }
    }
}

impl std::str::FromStr for BaseKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subject" => Ok(BaseKey::Subject),
            "predicate" => Ok(BaseKey::Predicate),
            "object" => Ok(BaseKey::Object),
            "random" => Ok(BaseKey::Random),
            other => Err(Error::Config(format!("unknown partition key '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub scanned: u64,
    pub shuffled_modeled: u64,
    pub shuffled_actual: u64,
    pub broadcast: u64,
}

impl Counters {
    /// Transfer volume as the cost model sees it.
    pub fn modeled_transfer(&self) -> u64 {
        self.shuffled_modeled + self.broadcast
    }

    fn add(&mut self, other: &Counters) {
        self.scanned += other.scanned;
        self.shuffled_modeled += other.shuffled_modeled;
        self.shuffled_actual += other.shuffled_actual;
        self.broadcast += other.broadcast;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorStats {
    pub id: usize,
    pub label: String,
    #[serde(flatten)]
    pub counters: Counters,
}

/// Per-execution data movement accounting.
#[derive(Clone, Debug, Default)]
pub struct TransferLedger {
    totals: Counters,
    operators: Vec<OperatorStats>,
    current: Option<usize>,
}

impl TransferLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn totals(&self) -> Counters {
        self.totals
    }

    pub fn operators(&self) -> &[OperatorStats] {
        &self.operators
    }

    pub fn operator(&self, id: usize) -> Option<&OperatorStats> {
        self.operators.get(id)
    }

    pub fn last_operator_id(&self) -> Option<usize> {
        self.operators.len().checked_sub(1)
    }

    /// Runs `f` with a fresh operator entry receiving every charge made inside
    /// it. Nested calls charge the outermost entry.
    pub fn with_operator<T>(&mut self, label: impl Into<String>, f: impl FnOnce(&mut Self) -> T) -> T {
        if self.current.is_some() {
            return f(self);
        }
        let id = self.operators.len();
        self.operators.push(OperatorStats { id, label: label.into(), counters: Counters::default() });
        self.current = Some(id);
        let out = f(self);
        self.current = None;
        out
    }

    fn charge(&mut self, delta: Counters) {
        self.totals.add(&delta);
        let id = match self.current {
            Some(id) => id,
            None => {
                let id = self.operators.len();
                self.operators.push(OperatorStats { id, label: "unattributed".into(), counters: Counters::default() });
                id
            }
        };
        self.operators[id].counters.add(&delta);
    }

    pub fn add_scanned(&mut self, n: u64) {
        self.charge(Counters { scanned: n, ..Counters::default() });
    }

    pub fn add_shuffle(&mut self, modeled: u64, actual: u64) {
        debug_assert!(actual <= modeled);
        self.charge(Counters { shuffled_modeled: modeled, shuffled_actual: actual, ..Counters::default() });
    }

    pub fn add_broadcast(&mut self, n: u64) {
        self.charge(Counters { broadcast: n, ..Counters::default() });
    }

    /// Sum of the per-operator entries; always equal to [`Self::totals`].
    pub fn operator_sum(&self) -> Counters {
        let mut sum = Counters::default();
        for op in &self.operators {
            sum.add(&op.counters);
        }
        sum
    }
}

/// The simulated cluster: `m` nodes, a seed for round-robin placement and a
/// switch for running node-local work on a thread pool.
#[derive(Clone, Debug)]
pub struct Cluster {
    m: usize,
    seed: u64,
    parallel: bool,
}

impl Cluster {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("cluster needs at least one node".into()));
        }
        // Node tasks only run on the thread pool when there is more than one CPU.
        let parallel = std::thread::available_parallelism().is_ok_and(|n| n.get() > 1);
        Ok(Self { m, seed: 0, parallel })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Runs `task` once per node and returns the results in node order. The
    /// first error by node index wins, whatever the scheduling was.
    pub fn for_each_node<T, F>(&self, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        let results: Vec<Result<T>> = if self.parallel && self.m > 1 {
            (0..self.m).into_par_iter().map(&task).collect()
        } else {
            (0..self.m).map(&task).collect()
        };
        results.into_iter().collect()
    }

    /// Infallible variant of [`Self::for_each_node`].
    pub fn map_nodes<T, F>(&self, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.parallel && self.m > 1 {
            (0..self.m).into_par_iter().map(task).collect()
        } else {
            (0..self.m).map(task).collect()
        }
    }

    /// Distributes triples over the nodes by hashing `base_key`'s position,
    /// or round-robin from the seed for [`BaseKey::Random`].
    pub fn load_partitioned(&self, triples: Vec<Triple>, base_key: BaseKey) -> Dataset {
        let m = self.m;
        let mut chunks: Vec<Vec<Triple>> = vec![Vec::new(); m];
        let start = (self.seed % m as u64) as usize;
        for (i, t) in triples.into_iter().enumerate() {
            let node = match base_key.position() {
                Some(pos) => node_for_terms([t.get(pos)], m),
                None => (start + i) % m,
            };
            chunks[node].push(t);
        }
        Dataset { chunks: Arc::new(chunks), base_key, partition_aware: true }
    }

    /// Checks the placement invariant of `rel` by a full scan.
    pub fn verify_placement(&self, rel: &DistRelation) -> std::result::Result<(), String> {
        if rel.chunks.len() != self.m {
            return Err(format!("relation has {} chunks for {} nodes", rel.chunks.len(), self.m));
        }
        match &rel.partition {
            PartitionState::Random => Ok(()),
            PartitionState::Replicated { .. } => {
                let first = rel.chunks[0].as_slice();
                let mut expected: Vec<&Row> = first.iter().collect();
                expected.sort_unstable();
                for (node, chunk) in rel.chunks.iter().enumerate().skip(1) {
                    let mut got: Vec<&Row> = chunk.iter().collect();
                    got.sort_unstable();
                    if got != expected {
                        return Err(format!("node {node} does not hold the full replica"));
                    }
                }
                Ok(())
            }
            PartitionState::Keyed(key) => {
                let cols = key_columns(&rel.schema, key).map_err(|e| e.to_string())?;
                for (node, chunk) in rel.chunks.iter().enumerate() {
                    if let Some(row) = chunk.iter().find(|r| node_of_row(r, &cols, self.m) != node) {
                        return Err(format!("row {row:?} on node {node} violates keyed{{{}}}", format_vars(key)));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Base triples as laid out on the cluster.
#[derive(Clone, Debug)]
pub struct Dataset {
    chunks: Arc<Vec<Vec<Triple>>>,
    base_key: BaseKey,
    partition_aware: bool,
}

impl Dataset {
    pub fn chunks(&self) -> &[Vec<Triple>] {
        &self.chunks
    }

    pub fn nodes(&self) -> usize {
        self.chunks.len()
    }

    pub fn len(&self) -> u64 {
        self.chunks.iter().map(|c| c.len() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.chunks.iter().map(Vec::len).collect()
    }

    pub fn base_key(&self) -> BaseKey {
        self.base_key
    }

    /// The position whose hash placement operators may rely on, if any.
    pub fn partitioned_position(&self) -> Option<Position> {
        if self.partition_aware {
            self.base_key.position()
        } else {
            None
        }
    }

    /// Same placement, but operators are not told about it: every selection
    /// result is reported as randomly placed.
    pub fn without_partitioning_info(&self) -> Dataset {
        Dataset { chunks: self.chunks.clone(), base_key: self.base_key, partition_aware: false }
    }
}

/// A query result spread over the cluster: one chunk per node.
#[derive(Clone, Debug)]
pub struct DistRelation {
    pub(crate) schema: Schema,
    pub(crate) chunks: Vec<Arc<Vec<Row>>>,
    pub(crate) partition: PartitionState,
}

impl DistRelation {
    pub fn new(schema: Schema, chunks: Vec<Vec<Row>>, partition: PartitionState) -> Result<Self> {
        if chunks.iter().flatten().any(|r| r.len() != schema.len()) {
            return Err(Error::InvalidTerm("row width does not match schema".into()));
        }
        if let PartitionState::Keyed(k) = &partition {
            key_columns(&schema, k)?;
        }
        Ok(Self { schema, chunks: chunks.into_iter().map(Arc::new).collect(), partition })
    }

    /// Places every row of `rel` on one node chosen round-robin.
    pub fn scatter(cluster: &Cluster, rel: Relation) -> Self {
        let m = cluster.m;
        let mut chunks = vec![Vec::new(); m];
        let start = (cluster.seed % m as u64) as usize;
        let schema = rel.schema().clone();
        for (i, row) in rel.into_rows().into_iter().enumerate() {
            chunks[(start + i) % m].push(row);
        }
        Self { schema, chunks: chunks.into_iter().map(Arc::new).collect(), partition: PartitionState::Random }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn partition(&self) -> &PartitionState {
        &self.partition
    }

    pub fn chunks(&self) -> impl Iterator<Item = &[Row]> {
        self.chunks.iter().map(|c| c.as_slice())
    }

    pub fn chunk(&self, node: usize) -> &[Row] {
        &self.chunks[node]
    }

    pub fn nodes(&self) -> usize {
        self.chunks.len()
    }

    /// Logical cardinality: one copy for replicated relations.
    pub fn gamma(&self) -> u64 {
        match self.partition {
            PartitionState::Replicated { .. } => self.chunks.first().map_or(0, |c| c.len() as u64),
            _ => self.chunks.iter().map(|c| c.len() as u64).sum(),
        }
    }

    pub fn chunk_sizes(&self) -> Vec<usize> {
        self.chunks.iter().map(|c| c.len()).collect()
    }

    /// Gathers the logical row multiset in node order.
    pub fn collect(&self) -> Relation {
        let rows = match self.partition {
            PartitionState::Replicated { .. } => self.chunks.first().map(|c| c.to_vec()).unwrap_or_default(),
            _ => self.chunks.iter().flat_map(|c| c.iter().cloned()).collect(),
        };
        Relation::from_parts(self.schema.clone(), rows)
    }

    /// Drops placement knowledge without moving data.
    pub fn forget_partitioning(mut self) -> Self {
        if !self.partition.is_replicated() {
            self.partition = PartitionState::Random;
        }
        self
    }
}

/// Repartitions `rel` on `target_key`.
///
/// The modeled counter is charged the full cardinality, the actual counter
/// only the rows whose node changes. Replicated input is filtered in place.
pub fn shuffle(
    cluster: &Cluster,
    rel: DistRelation,
    target_key: &VarSet,
    ledger: &mut TransferLedger,
) -> Result<DistRelation> {
    if target_key.is_empty() {
        return Err(Error::EmptyPartitionKey);
    }
    let cols = key_columns(&rel.schema, target_key)?;
    let m = cluster.m;
    let gamma = rel.gamma();
    if rel.partition.is_replicated() {
        let chunks = cluster.map_nodes(|node| {
            Arc::new(rel.chunks[node].iter().filter(|r| node_of_row(r, &cols, m) == node).cloned().collect())
        });
        ledger.with_operator(format!("shuffle{{{}}}", format_vars(target_key)), |l| l.add_shuffle(gamma, 0));
        return Ok(DistRelation { schema: rel.schema, chunks, partition: PartitionState::Keyed(target_key.clone()) });
    }
    // Each source node splits its chunk into per-target buckets.
    let buckets: Vec<Vec<Vec<Row>>> = cluster.map_nodes(|node| {
        let mut out = vec![Vec::new(); m];
        for row in rel.chunks[node].iter() {
            out[node_of_row(row, &cols, m)].push(row.clone());
        }
        out
    });
    let mut moved = 0u64;
    for (src, b) in buckets.iter().enumerate() {
        moved += b.iter().enumerate().filter(|(dst, _)| *dst != src).map(|(_, rows)| rows.len() as u64).sum::<u64>();
    }
    let mut chunks: Vec<Vec<Row>> =
        (0..m).map(|dst| Vec::with_capacity(buckets.iter().map(|b| b[dst].len()).sum())).collect();
    for b in buckets {
        for (dst, rows) in b.into_iter().enumerate() {
            chunks[dst].extend(rows);
        }
    }
    ledger.with_operator(format!("shuffle{{{}}}", format_vars(target_key)), |l| l.add_shuffle(gamma, moved));
    Ok(DistRelation {
        schema: rel.schema,
        chunks: chunks.into_iter().map(Arc::new).collect(),
        partition: PartitionState::Keyed(target_key.clone()),
    })
}

/// Replicates `rel` on every node, charging `(m - 1) * Γ(rel)`.
pub fn broadcast(cluster: &Cluster, rel: DistRelation, ledger: &mut TransferLedger) -> DistRelation {
    if rel.partition.is_replicated() {
        return rel;
    }
    let gamma = rel.gamma();
    let origin = match &rel.partition {
        PartitionState::Keyed(k) => Some(k.clone()),
        _ => None,
    };
    let all: Vec<Row> = rel.chunks.iter().flat_map(|c| c.iter().cloned()).collect();
    let shared = Arc::new(all);
    ledger.with_operator("broadcast", |l| l.add_broadcast((cluster.m as u64 - 1) * gamma));
    DistRelation {
        schema: rel.schema,
        chunks: vec![shared; cluster.m],
        partition: PartitionState::Replicated { origin },
    }
}

pub fn varset<I, S>(names: I) -> VarSet
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    names.into_iter().map(|n| Variable::new(n.as_ref())).collect::<BTreeSet<_>>()
}
