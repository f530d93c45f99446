//! Mixed-integer linear program construction.

pub mod encode;
pub mod lp_format;
pub mod model;

pub use encode::{
    add_max, add_min, add_norm_le, add_not_in_ball, add_not_in_interior, add_relu, max_expr, min_expr,
    relu_expr,
};
pub use lp_format::write_lp;
pub use model::{Constraint, LinExpr, MilpModel, ObjectiveSense, Sense, VarId, VarKind, Variable};
