//! Dense bounded-variable linear programming with warm starts.

mod dense;
mod model;
mod simplex;

pub use model::{Basis, LpModel, LpSolution, LpStatus, Relation, Row, RowId, VarStatus};
pub use simplex::{lp_solve, TOL_DUAL, TOL_FEAS, TOL_PIVOT};
pub(crate) use simplex::dot;
