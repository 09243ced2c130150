//! Fixed-point solver for the four-velocity planar Broadwell model on a
//! rectangle.
//!
//! The densities `N1..N4` move with velocities `(c,0)`, `(0,c)`, `(0,-c)` and
//! `(-c,0)` and exchange mass through the binary collision term
//! `Q = 2cS(N2 N3 - N1 N4)`. Solutions on a time slab are fixed points of an
//! integral operator built along the characteristics; a slab solver iterates
//! that operator and a marcher chains slabs in time.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix `f64`, which is what the CLI uses.

pub mod characteristics;
pub mod data;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod norms;
pub mod operators;
pub mod scalar;
pub mod solver;
pub mod verify;

pub use characteristics::{shifted_eval, trace, CharFoot, Region};
pub use data::{DataSelector, EdgeViolation, ProblemData, Surface, Table2};
pub use error::{Error, Result};
pub use field::Field4;
pub use grid::{Direction, ModelParams, RectDomain, SlabGrid, TimeSlab};
pub use norms::{norm_report, Norm1, NormReport};
pub use operators::{apply_t, apply_t_sigma, OperatorKind, QuadratureRule, QuadratureSpec};
pub use scalar::Scalar;
pub use solver::{
    check_hypotheses, compute_constants, global_march, picard_solve, CheckMode, MarchOptions, MarchState, PicardOptions,
    SlabSolution, TheoremConstants, Verdict,
};

pub type Params = ModelParams<f64>;
pub type Domain = RectDomain<f64>;
pub type Slab = TimeSlab<f64>;
pub type Grid = SlabGrid<f64>;
pub type Field = Field4<f64>;
pub type Data = ProblemData<f64>;
