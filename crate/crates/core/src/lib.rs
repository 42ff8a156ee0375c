//! Continuous-time online learning on the probability simplex.
//!
//! Follow-the-regularized-leader with the entropic regularizer, run in
//! continuous time for full-information online linear optimization, the
//! adversarial multi-armed bandit and the adversarial linear bandit. The
//! bandit variants are stochastic differential equations simulated with
//! Euler–Maruyama; their discrete counterparts are included for comparison.

pub mod bandit;
pub mod error;
pub mod harness;
pub mod legendre;
pub mod linbandit;
pub mod numerics;
pub mod olo;
pub mod report;
pub mod rewards;

pub use error::{Error, Result};
pub use legendre::{DualVector, SimplexPoint, Temperature};
pub use linbandit::ArmSet;
pub use numerics::{NoiseFactor, PsdMatrix, TimeGrid};
pub use report::{CurvePoint, RegretReport, RunOutcome};
pub use rewards::{RewardPath, RewardSchedule, RewardTable};
