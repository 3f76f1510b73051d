//! Logical plans, shape classes, the four physical strategies and their
//! execution.

pub mod execute;
pub mod explain;
pub mod hybrid;
pub mod logical;
pub mod physical;
pub mod shape;

pub use execute::{execute_query, EngineConfig, ExecKind, ExecNode, Execution, MergeScan, ScanInfo};
pub use explain::{estimate_transfer, explain, render_execution, SymbolicTransfer};
pub use logical::{build_logical, LogicalPlan};
pub use physical::{
    plan_mono_brjoin, plan_multi_brjoin, plan_pjoin_strategy, PhysicalPlan, PlanNode, ScanMode, Strategy,
};
pub use shape::{classify_shape, ShapeClass};
