//! Numerical kernel shared by the tent and sup-convolution modules:
//! concave maximization over the product simplex of `[A,B]` and small dense
//! linear programs.

mod frank_wolfe;
mod lp;

pub use frank_wolfe::{maximize_concave, ConcaveObjective, FwOptions, FwResult};
pub(crate) use frank_wolfe::golden_max;
pub use lp::{solve_lp, LpOutcome, LpProblem, LpSolution};
