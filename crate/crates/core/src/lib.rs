//! privflow core: code-facts model, MiniSrv frontend, code-search
//! primitives, cross-service flow stitching, constraint checking, reasoner
//! backends and the scan pipeline.

pub mod callsite;
pub mod constraints;
pub mod cross_service;
pub mod facts;
pub mod intrinsics;
pub mod minisrv;
pub mod model;
pub mod pipeline;
pub mod reasoner;
pub mod report;
pub mod search;
pub mod testkit;
pub mod workspace;

pub use constraints::{PathConstraint, SatResult};
pub use cross_service::{ChannelEdge, GlobalGraph, GlobalPath, NodeRef};
pub use facts::{Manifest, ServiceEntry};
pub use model::{
    validate_program, Channel, Direction, Edge, EdgeKind, Element, ElementId, ElementKind, IntegrityViolation,
    Location, Program, Protocol, Service, TypeTag,
};
pub use pipeline::{scan, CheckFinding, PrivilegedOperation, ScanBudget, ScanError, ScanOptions, ScanOutput, Trace};
pub use reasoner::{OracleRules, Reasoner, ReasonerError, ScriptedOracle};
pub use report::{ExitStatus, Finding, Format, Report};
pub use search::{FlowGraph, FlowPath};
pub use workspace::{load_program, LoadError};
