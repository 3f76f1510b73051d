//! Distributed operators: selections over the base data, partitioned joins,
//! broadcast joins and cross products.

use std::collections::HashMap;

use crate::cluster::{broadcast, hash_terms, shuffle, Cluster, Dataset, DistRelation, PartitionState, TransferLedger};
use crate::error::{Error, Result};
use crate::model::{format_vars, Position, Row, Schema, Term, Triple, TriplePattern, VarSet, Variable};

#[derive(Clone, Debug)]
enum Slot {
    Const(Term),
    Bind,
    Check(usize),
}

/// A triple pattern compiled against its output schema.
#[derive(Clone, Debug)]
pub struct Matcher {
    schema: Schema,
    slots: [Slot; 3],
    /// Positions producing the output columns, in column order.
    binds: Vec<Position>,
}

impl Matcher {
    /// Output columns follow the first occurrence of each variable in s, p, o order.
    pub fn new(pattern: &TriplePattern) -> Self {
        let mut vars: Vec<Variable> = Vec::new();
        let slots = Position::ALL.map(|pos| match pattern.get(pos).as_variable() {
            Some(v) => match vars.iter().position(|w| *w == v) {
                Some(col) => Slot::Check(col),
                None => {
                    vars.push(v);
                    Slot::Bind
                }
            },
            None => Slot::Const(pattern.get(pos).clone()),
        });
        let schema = Schema::new(vars).expect("variables are deduplicated");
        let binds =
            Position::ALL.into_iter().zip(&slots).filter(|(_, s)| matches!(s, Slot::Bind)).map(|(p, _)| p).collect();
        Self { schema, slots, binds }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn matches(&self, triple: &Triple) -> Option<Row> {
        if !self.matches_any(triple) {
            return None;
        }
        Some(self.binds.iter().map(|&pos| triple.get(pos).clone()).collect())
    }

    fn matches_any(&self, triple: &Triple) -> bool {
        let mut bound: [Option<&Term>; 3] = [None; 3];
        let mut n = 0;
        for (slot, pos) in self.slots.iter().zip(Position::ALL) {
            let term = triple.get(pos);
            match slot {
                Slot::Const(c) if c != term => return false,
                Slot::Const(_) => {}
                Slot::Bind => {
                    bound[n] = Some(term);
                    n += 1;
                }
                Slot::Check(col) if bound[*col] != Some(term) => return false,
                Slot::Check(_) => {}
            }
        }
        true
    }
}

/// Placement of a selection result: keyed on the variable sitting at the
/// dataset's partitioning position, random otherwise.
pub fn selection_partition(dataset: &Dataset, pattern: &TriplePattern) -> PartitionState {
    match dataset.partitioned_position().and_then(|pos| pattern.get(pos).as_variable()) {
        Some(v) => PartitionState::Keyed(VarSet::from([v])),
        None => PartitionState::Random,
    }
}

/// Evaluates one pattern with a full scan of every node's chunk.
pub fn triple_selection(
    cluster: &Cluster,
    dataset: &Dataset,
    pattern: &TriplePattern,
    ledger: &mut TransferLedger,
) -> Result<DistRelation> {
    check_nodes(cluster, dataset)?;
    let matcher = Matcher::new(pattern);
    let chunks = cluster
        .map_nodes(|node| dataset.chunks()[node].iter().filter_map(|t| matcher.matches(t)).collect::<Vec<Row>>());
    ledger.with_operator(format!("scan {pattern}"), |l| l.add_scanned(dataset.len()));
    DistRelation::new(matcher.schema.clone(), chunks, selection_partition(dataset, pattern))
}

/// Evaluates several patterns with one pass over the data: the pass keeps the
/// triples matching any pattern, then each pattern is selected from that
/// subset. Scanned volume is `Γ(D) + n·Γ(S)`.
pub fn merged_selection(
    cluster: &Cluster,
    dataset: &Dataset,
    patterns: &[TriplePattern],
    ledger: &mut TransferLedger,
) -> Result<Vec<DistRelation>> {
    merged_selection_sized(cluster, dataset, patterns, ledger).map(|(rels, _)| rels)
}

/// [`merged_selection`] that also returns Γ(S), the size of the subset.
pub fn merged_selection_sized(
    cluster: &Cluster,
    dataset: &Dataset,
    patterns: &[TriplePattern],
    ledger: &mut TransferLedger,
) -> Result<(Vec<DistRelation>, u64)> {
    check_nodes(cluster, dataset)?;
    let matchers: Vec<Matcher> = patterns.iter().map(Matcher::new).collect();
    let per_node: Vec<(usize, Vec<Vec<Row>>)> = cluster.map_nodes(|node| {
        let subset: Vec<&Triple> =
            dataset.chunks()[node].iter().filter(|t| matchers.iter().any(|m| m.matches_any(t))).collect();
        let outs = matchers.iter().map(|m| subset.iter().filter_map(|t| m.matches(t)).collect()).collect();
        (subset.len(), outs)
    });
    let subset_size: u64 = per_node.iter().map(|(n, _)| *n as u64).sum();
    let scanned = dataset.len() + patterns.len() as u64 * subset_size;
    ledger.with_operator(format!("merged scan of {} patterns", patterns.len()), |l| l.add_scanned(scanned));
    let mut columns: Vec<Vec<Vec<Row>>> = vec![Vec::with_capacity(cluster.nodes()); patterns.len()];
    for (_, outs) in per_node {
        for (i, rows) in outs.into_iter().enumerate() {
            columns[i].push(rows);
        }
    }
    let rels = columns
        .into_iter()
        .zip(patterns.iter().zip(&matchers))
        .map(|(chunks, (p, m))| DistRelation::new(m.schema.clone(), chunks, selection_partition(dataset, p)))
        .collect::<Result<_>>()?;
    Ok((rels, subset_size))
}

/// Number of triples matching at least one of `patterns`.
pub fn merged_subset_size(dataset: &Dataset, patterns: &[TriplePattern]) -> u64 {
    let matchers: Vec<Matcher> = patterns.iter().map(Matcher::new).collect();
    dataset.chunks().iter().flatten().filter(|t| matchers.iter().any(|m| m.matches_any(t))).count() as u64
}

fn check_nodes(cluster: &Cluster, dataset: &Dataset) -> Result<()> {
    if cluster.nodes() != dataset.nodes() {
        return Err(Error::Config(format!(
            "dataset is laid out on {} nodes, cluster has {}",
            dataset.nodes(),
            cluster.nodes()
        )));
    }
    Ok(())
}

/// Joins the row sets of one node. Inputs are consumed left to right, each
/// time picking the first remaining input that shares a variable with the
/// accumulated schema (or the first remaining one if none does). Rows agree on
/// every shared variable.
pub fn local_join(inputs: &[(&Schema, &[Row])]) -> (Schema, Vec<Row>) {
    let Some(((first_schema, first_rows), rest)) = inputs.split_first() else {
        return (Schema::empty(), vec![Vec::new().into()]);
    };
    let mut schema: Vec<Variable> = first_schema.vars().to_vec();
    let mut rows: Vec<Row> = first_rows.to_vec();
    let mut remaining: Vec<&(&Schema, &[Row])> = rest.iter().collect();
    while !remaining.is_empty() {
        let pick = remaining.iter().position(|(s, _)| s.vars().iter().any(|v| schema.contains(v))).unwrap_or(0);
        let (right_schema, right_rows) = remaining.remove(pick);
        let (s, r) = hash_join(&schema, &rows, right_schema, right_rows);
        schema = s;
        rows = r;
    }
    (Schema::new(schema).expect("join schemas are deduplicated"), rows)
}

fn hash_join(
    left_schema: &[Variable],
    left: &[Row],
    right_schema: &Schema,
    right: &[Row],
) -> (Vec<Variable>, Vec<Row>) {
    let mut shared: Vec<(usize, usize)> = Vec::new();
    let mut extra: Vec<usize> = Vec::new();
    for (ri, v) in right_schema.vars().iter().enumerate() {
        match left_schema.iter().position(|w| w == v) {
            Some(li) => shared.push((li, ri)),
            None => extra.push(ri),
        }
    }
    let mut schema = left_schema.to_vec();
    schema.extend(extra.iter().map(|&i| right_schema.vars()[i].clone()));
    let mut out = Vec::new();
    if left.is_empty() || right.is_empty() {
        return (schema, out);
    }
    let left_key = |l: &Row| hash_terms(shared.iter().map(|&(li, _)| &l[li]));
    let right_key = |r: &Row| hash_terms(shared.iter().map(|&(_, ri)| &r[ri]));
    let agree = |l: &Row, r: &Row| shared.iter().all(|&(li, ri)| l[li] == r[ri]);
    let emit = |out: &mut Vec<Row>, l: &Row, r: &Row| {
        out.push(l.iter().chain(extra.iter().map(|&i| &r[i])).cloned().collect());
    };
    // Index the smaller side.
    if right.len() <= left.len() {
        let mut index: HashMap<u64, Vec<&Row>> = HashMap::with_capacity(right.len());
        for r in right {
            index.entry(right_key(r)).or_default().push(r);
        }
        for l in left {
            for r in index.get(&left_key(l)).into_iter().flatten() {
                if agree(l, r) {
                    emit(&mut out, l, r);
                }
            }
        }
    } else {
        let mut index: HashMap<u64, Vec<&Row>> = HashMap::with_capacity(left.len());
        for l in left {
            index.entry(left_key(l)).or_default().push(l);
        }
        for r in right {
            for l in index.get(&right_key(r)).into_iter().flatten() {
                if agree(l, r) {
                    emit(&mut out, l, r);
                }
            }
        }
    }
    (schema, out)
}

fn join_on_nodes(cluster: &Cluster, inputs: &[DistRelation]) -> Result<(Schema, Vec<Vec<Row>>)> {
    let per_node = cluster.map_nodes(|node| {
        let parts: Vec<(&Schema, &[Row])> = inputs.iter().map(|r| (r.schema(), r.chunk(node))).collect();
        local_join(&parts)
    });
    let schema =
        per_node.first().map(|(s, _)| s.clone()).ok_or_else(|| Error::Config("cluster has no nodes".into()))?;
    Ok((schema, per_node.into_iter().map(|(_, rows)| rows).collect()))
}

fn check_join_inputs(inputs: &[DistRelation], v: &VarSet) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Config("join needs at least one input".into()));
    }
    if v.is_empty() {
        return Err(Error::EmptyJoinKey);
    }
    Ok(())
}

/// Partitioned join on `v`: every input not already keyed exactly on `v` is
/// shuffled there (replicated inputs stay put), then nodes join locally.
pub fn pjoin(
    cluster: &Cluster,
    inputs: Vec<DistRelation>,
    v: &VarSet,
    ledger: &mut TransferLedger,
) -> Result<DistRelation> {
    check_join_inputs(&inputs, v)?;
    for rel in &inputs {
        if let Some(missing) = v.iter().find(|x| !rel.schema().contains(x)) {
            return Err(Error::NotAJoinVariable(missing.to_string()));
        }
    }
    ledger.with_operator(format!("pjoin{{{}}}", format_vars(v)), |ledger| {
        let all_replicated = inputs.iter().all(|r| r.partition().is_replicated());
        let mut placed = Vec::with_capacity(inputs.len());
        for rel in inputs {
            if rel.partition().is_keyed_on(v) || rel.partition().is_replicated() {
                placed.push(rel);
            } else {
                placed.push(shuffle(cluster, rel, v, ledger)?);
            }
        }
        if all_replicated {
            // Every node could compute the whole result; keep only the share
            // each node owns so the result is keyed on `v`.
            let first = placed.remove(0);
            placed.insert(0, shuffle_replicated_free(cluster, first, v)?);
        }
        let (schema, chunks) = join_on_nodes(cluster, &placed)?;
        DistRelation::new(schema, chunks, PartitionState::Keyed(v.clone()))
    })
}

/// Restricts a replicated relation to the rows each node owns under `v`,
/// without charging the ledger: no data moves.
fn shuffle_replicated_free(cluster: &Cluster, rel: DistRelation, v: &VarSet) -> Result<DistRelation> {
    let mut scratch = TransferLedger::new();
    shuffle(cluster, rel, v, &mut scratch)
}

/// Broadcast join: all inputs except `target` are replicated to every node,
/// which then joins them with its share of the target. The result keeps the
/// target's placement.
pub fn brjoin(
    cluster: &Cluster,
    inputs: Vec<DistRelation>,
    v: &VarSet,
    target: usize,
    ledger: &mut TransferLedger,
) -> Result<DistRelation> {
    check_join_inputs(&inputs, v)?;
    if target >= inputs.len() {
        return Err(Error::TargetOutOfRange { index: target, len: inputs.len() });
    }
    for rel in &inputs {
        if !v.iter().any(|x| rel.schema().contains(x)) {
            return Err(Error::NotAJoinVariable(format!(
                "input {:?} binds none of {{{}}}",
                rel.schema(),
                format_vars(v)
            )));
        }
    }
    ledger.with_operator(format!("brjoin{{{}}}", format_vars(v)), |ledger| {
        broadcast_join(cluster, inputs, target, ledger)
    })
}

fn broadcast_join(
    cluster: &Cluster,
    inputs: Vec<DistRelation>,
    target: usize,
    ledger: &mut TransferLedger,
) -> Result<DistRelation> {
    let partition = inputs[target].partition().clone();
    let placed: Vec<DistRelation> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, rel)| if i == target { rel } else { broadcast(cluster, rel, ledger) })
        .collect();
    let (schema, chunks) = join_on_nodes(cluster, &placed)?;
    let partition = match partition {
        PartitionState::Replicated { .. } => PartitionState::Replicated { origin: None },
        other => other,
    };
    if partition.is_replicated() {
        // All inputs were replicated: each node computed the same rows.
        let rows = chunks.into_iter().next().unwrap_or_default();
        let shared = std::sync::Arc::new(rows);
        return Ok(DistRelation { schema, chunks: vec![shared; cluster.nodes()], partition });
    }
    let partition = match partition {
        PartitionState::Keyed(k) if k.iter().all(|x| schema.contains(x)) => PartitionState::Keyed(k),
        PartitionState::Keyed(_) => PartitionState::Random,
        other => other,
    };
    DistRelation::new(schema, chunks, partition)
}

/// Index of the input kept in place by a cross product: the largest one,
/// ties to the smallest index.
pub fn cross_product_target(gammas: &[u64]) -> usize {
    let mut best = 0;
    for (i, &g) in gammas.iter().enumerate() {
        if g > gammas[best] {
            best = i;
        }
    }
    best
}

/// Joins inputs that may share no variable by broadcasting all but the
/// largest one.
pub fn cross_product(
    cluster: &Cluster,
    inputs: Vec<DistRelation>,
    ledger: &mut TransferLedger,
) -> Result<DistRelation> {
    if inputs.is_empty() {
        return Err(Error::Config("cross product needs at least one input".into()));
    }
    let gammas: Vec<u64> = inputs.iter().map(DistRelation::gamma).collect();
    let target = cross_product_target(&gammas);
    ledger.with_operator("cross", |ledger| broadcast_join(cluster, inputs, target, ledger))
}
