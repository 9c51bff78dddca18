//! Reverse-mode algorithmic differentiation by operator overloading, with
//! adjoint storage that can shrink from one slot per tape vertex down to one
//! slot per program variable plus a small rotating window.
//!
//! Record a program with a [`Recorder`], finalize it into a [`Tape`], then run
//! one of the adjoint strategies in [`adjoint`].

pub mod active;
pub mod adjoint;
pub mod cases;
pub mod dot;
pub mod metrics;
pub mod program;
pub mod store;
pub mod tape;

pub use active::{ActiveScalar, Context, PlainContext, Real, Recorder};
pub use adjoint::{AdjointError, AdjointVector, Strategy};
pub use program::{Program, ProgramError};
pub use store::{StoreConfig, StoreError, StoreStats};
pub use tape::{Mode, Tape, TapeBuilder, TapeError, TapeStats, VertexId};
