//! Analytic and simulation engine for stochastic reward nets (SRNs).
//!
//! The pipeline is: build or parse a [`net::Net`], reduce it to a
//! continuous-time Markov chain with [`reachability::explore`], solve the
//! chain with [`markov::steady_state`], and read reward measures with the
//! functions in [`rewards`]. [`simulator`] runs the same net by Monte Carlo
//! as an independent check. [`mtd`] builds the cloud moving-target-defense
//! availability model and sweeps it over migration trigger intervals.

pub mod analysis;
pub mod expr;
pub mod markov;
pub mod mtd;
pub mod net;
pub mod random;
pub mod reachability;
pub mod rewards;
pub mod simulator;

pub use expr::{Expr, Value};
pub use markov::{Generator, SolverConfig, SolverMethod, SteadyState};
pub use net::{Marking, Net, NetDef, Transition, TransitionKind};
pub use reachability::{explore, ExploreConfig, TangibleGraph};
pub use rewards::{MetricReport, RewardSpec};
pub use simulator::{simulate, SimConfig, SimEstimate};
