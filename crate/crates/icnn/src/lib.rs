//! Input-convex neural networks: scalar energy networks convex in (a subset
//! of) their inputs, convex-optimization inference over the unit box, and
//! training by argmin differentiation, max-margin subgradients, or
//! Q-learning.
//!
//! - [`net`]: FICNN/PICNN architectures, hand-derived derivatives, parameter
//!   projection, feedforward embedding, LP export, checkpoints.
//! - [`solver`]: entropy barrier, projected gradient, and the bundle entropy
//!   method with its projected-Newton simplex dual.
//! - [`learn`]: implicit differentiation through the solver's KKT system,
//!   ADAM with feasibility projection, max-margin updates, training loops.
//! - [`rl`]: continuous-action Q-learning on built-in toy environments.
//! - [`data`]: ARFF multi-label parsing, PGM/CSV image pairs, synthetic
//!   generators, splits and metrics.
//! - [`check`]: the seeded property suite behind `icnn check`.

pub mod check;
pub mod data;
pub mod learn;
mod linalg;
pub mod net;
pub mod rl;
pub mod solver;
