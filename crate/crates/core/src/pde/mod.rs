//! Backward parabolic solver and the mixed-type PDE of the fBM-driven BSDE.

mod engine;
mod mixed;
mod solution;

pub use engine::{solve_backward, BackwardProblem, SolverGrid, THETA};
pub use mixed::{bsde_marginals, solve_mixed_pde, Marginals, MixedProblem, NonlinearFbsdeSpec};
pub use solution::{derive_fields, loglog_fit, Field, GrowthEstimate, IndexFit, PdeSolution, Point, SchemeMeta};
