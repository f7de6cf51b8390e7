//! Reconstruction of translation-invariant continuous matrix-product states
//! from low-order phase-correlation data.
//!
//! The pipeline goes from interference-pattern phase profiles to a compact
//! field-theoretic model and back:
//!
//! 1. **Measurement side** — per-shot phase profiles on a grid
//!    ([`shots::ShotEnsemble`], simulated by [`shotsim`]) are averaged into
//!    even-order correlation tensors ([`corr::CorrTensor`]). Odd orders are
//!    unmeasurable because every shot carries an unknown global phase.
//! 2. **Model side** — a state `(Q, R)` of bond dimension `d`
//!    ([`state::CmpsState`]) determines a transfer matrix whose spectrum
//!    `{λ_k}` and vertex matrix `M` ([`transfer`]) fix every correlation
//!    function via a product chain ([`correlator`]).
//! 3. **Reconstruction** — the decay modes `λ_k` are fitted from the
//!    two-point function ([`specfit`]), the vertex matrix from the four-point
//!    function by multi-start simplex search ([`mfit`]; [`optim`]), and the
//!    fitted model predicts higher orders for validation ([`predict`]).
//!
//! All tensors store only their canonical symmetric simplex ([`simplex`]) on
//! uniform grids ([`grid`]), and everything deterministic is seeded, so the
//! whole pipeline reproduces bit-for-bit across runs.

pub mod corr;
pub mod correlator;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod mfit;
pub mod optim;
pub mod predict;
pub mod shots;
pub mod shotsim;
pub mod simplex;
pub mod specfit;
pub mod state;
pub mod transfer;

pub use error::{TomoError, TomoResult};
