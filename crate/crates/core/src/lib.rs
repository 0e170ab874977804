//! Carbon-aware mapping and scheduling of workflow DAGs on heterogeneous
//! clusters whose green power budget varies over time.
//!
//! The crate provides the platform and carbon-cost model ([`model`],
//! [`evaluate`]), the carbon-agnostic HEFT-SL baseline ([`heft_sl`]), the
//! two-phase carbon-aware CWM scheduler ([`cwm`]), instance generators
//! ([`genlab`]), an experiment harness ([`bench`]) and brute-force reference
//! solvers ([`oracle`]).

pub mod bench;
pub mod cwm;
pub mod error;
pub mod evaluate;
pub mod genlab;
pub mod heft_sl;
pub mod model;
pub mod oracle;
pub mod rng;

pub use bench::{Algorithm, RunResult};
pub use cwm::{run_cwm, CwmParams};
pub use error::{Error, Result};
pub use evaluate::{carbon_cost, makespan, validate_schedule, CarbonReport, Violation, ViolationDoc, ViolationKind};
pub use heft_sl::schedule_heft_sl;
pub use model::{Cluster, Instance, PowerProfile, Schedule, Workflow};
