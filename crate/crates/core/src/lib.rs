//! Distributed evaluation of SPARQL basic graph patterns on a simulated
//! shared-nothing cluster.

pub mod cluster;
pub mod cost;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod report;
pub mod workload;

pub use cluster::{BaseKey, Cluster, Counters, Dataset, DistRelation, PartitionState, TransferLedger};
pub use cost::{CostEstimate, CostParams};
pub use error::{Error, Result};
pub use ingest::{parse_ntriples, parse_ntriples_str, parse_query, Query};
pub use model::{BindingRow, Position, Relation, Row, Schema, Term, TermKind, Triple, TriplePattern, VarSet, Variable};
pub use planner::{execute_query, EngineConfig, Execution, MergeScan, ShapeClass, Strategy};
