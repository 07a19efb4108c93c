//! Distributed Burer–Monteiro solvers for semidefinite programs with unit
//! diagonal constraints,
//!
//! ```text
//! minimize <M, X>  subject to  X_jj = 1,  X PSD,
//! ```
//!
//! solved through the factorization `X = V^T V` with unit-norm columns of `V`.
//! The index set is split among agents arranged in a tree; the synchronous
//! engine sweeps the tree with exact message passing and the asynchronous
//! engine simulates bounded-delay updates on a logical clock.
//!
//! All indices and agent ids are 0-based in the library.

pub mod async_engine;
pub mod error;
pub mod factor;
pub mod imgseg;
pub mod instances;
pub mod matrix;
pub mod oracles;
pub mod partition;
pub mod problem;
pub mod rng;
pub mod schedule;
pub mod sync_engine;
pub mod trace;

pub use async_engine::{
    descent_closed_form, descent_residual, run_async, AsyncDiagnostics, AsyncEngine, AsyncOptions,
    AsyncRun, UpdateRecord,
};
pub use error::{Error, Result};
pub use factor::{
    choose_rank, dx_fro, gram, normalize, objective, riemannian_grad_norm, FactorState,
};
pub use imgseg::{segment, Image, SegmentOptions, Segmentation};
pub use instances::Instance;
pub use matrix::{CoefficientMatrix, DenseMatrix, Entry};
pub use oracles::{
    brute_force_maxcut, cut_value, hyperplane_round, mixing_sweep, sdp_cut_bound, CutAssignment,
    BRUTE_FORCE_MAX_N,
};
pub use partition::{
    async_step_sizes, reorder_indices, sync_step_sizes, AgentPartition, Permutation, StepSizes,
};
pub use problem::{load_problem, parse_problem, problem_to_json, Problem};
pub use schedule::{make_schedule, DelaySchedule, ScheduleMode};
pub use sync_engine::{decrease_identity_check, run_sync, SyncEngine, SyncOptions, SyncRun};
pub use trace::{Trace, TraceRow};
