//! Failure-directed program trimming.
//!
//! The crate takes programs in a small imperative heap language and inserts
//! `assume` statements that soundly block executions which provably cannot
//! reach an assertion failure, shrinking the search space for downstream
//! analyzers. It also carries a reference interpreter used to check the
//! transformation end to end.

pub mod alias;
pub mod ast;
pub mod config;
pub mod engine;
pub mod formula;
pub mod infer;
pub mod instrument;
pub mod interp;
pub mod parse;
pub mod print;
pub mod testgen;

pub use alias::{AliasInfo, Obj};
pub use ast::{ArithOp, CmpOp, Expr, Ident, Path, Pred, Procedure, Program, Step, Stmt};
pub use config::{trim_program, Preset, TrimConfig, Trimmed};
pub use engine::{EngineConfig, QeMethod, TrimCondition};
pub use formula::{EvalEnv, Formula, Fresh, IntMode, Term};
pub use infer::{infer_program, infer_stmt, Inference};
pub use instrument::{
    instrument, split_procedures, Instrumented, Observation, Placement, ReportEntry, Split,
    TrimReport,
};
pub use interp::{
    check_equi_safe, exact_wp_holds, explore, explore_monitored, explore_watched,
    input_valuations, run, run_watched, Choice, ExecConfig, Exploration, ExecutionResult,
    MonitorLog, Outcome, RunResult, Stop, Valuation, Verdict,
};
pub use parse::{parse_program, ParseError};
pub use print::{print_program, print_with_lines};
