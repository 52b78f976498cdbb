//! Interval reachability for feedforward neural networks and for
//! sampled-data control loops closed through such networks.
//!
//! - [`interval`]: outward-rounded interval arithmetic and boxes.
//! - [`nn`]: MLPs and their layer-wise interval extension.
//! - [`reach_nn`]: simulation-guided bisection over network inputs.
//! - [`ode`]: plant-model language and a validated interval integrator.
//! - [`closed_loop`]: reachable tubes of the sampled loop and safety checks.

pub mod closed_loop;
pub mod error;
pub mod interval;
pub mod nn;
pub mod ode;
pub mod reach_nn;

pub use closed_loop::{reach_nncs, verify, ClosedLoopConfig, Flowpipe, RunConfig, SafetySpec, Verdict, VerificationReport};
pub use error::{Error, Result};
pub use interval::{Interval, IntervalBox};
pub use nn::{Activation, Layer, MlpNetwork};
pub use ode::{FlowpipeSegment, PlantModel};
pub use reach_nn::{reach_mlp, uniform_partition_mlp, ReachNnResult, ReachOptions, ReachStats};
