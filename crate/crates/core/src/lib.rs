//! Compiles EDI-CR instances (decentralized MDPs whose agents interact only
//! through listed reward and transition interactions) into compact
//! mixed-integer and quadratic programs, bridges to external solvers, and
//! audits the results against exact evaluation.

pub mod binning;
pub mod checks;
pub mod fixtures;
pub mod formulations;
pub mod histories;
pub mod model;
pub mod policy_tools;
pub mod program;
pub mod random;
pub mod rng;
pub mod rovers;
pub mod solver;
mod util;

pub use histories::{Evaluator, HistoryError, HistoryTree, PurePolicy};
pub use formulations::{build, Compiled, FormulationKind};
pub use model::{parse_instance, Instance, ModelError};
pub use program::{Program, ProgramStats};
pub use rovers::{generate_rovers, RoverParams};
pub use solver::{Solution, SolutionStatus};
