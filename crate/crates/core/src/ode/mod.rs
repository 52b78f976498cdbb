//! Plant models and their interval integration.

mod expr;
mod integrate;
mod model;

pub use expr::{BinaryOp, Expr, UnaryOp};
pub use integrate::{
    apriori_enclosure, eval_outputs, is_valid_enclosure, reach_odex, reach_odex_span, reach_odey, rk4_step,
    rk4_trajectory, substep_times, FlowpipeSegment, OdeStep, DEFAULT_SUBSTEPS, INFLATION, INITIAL_WIDENING, MAX_ROUNDS,
};
pub use model::{parse_expr, PlantModel};
