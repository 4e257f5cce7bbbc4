//! Set-based value iteration for finite Markov decision processes whose cost
//! and transition parameters are only known to lie in a compact set.
//!
//! The crate is `no_std` (it needs `alloc`). It covers:
//!
//! * [`mdp`]: single-parameter machinery (policy evaluation, Bellman operator,
//!   greedy policies, value iteration).
//! * [`uncertainty`]: parameter-set representations, rectangularity predicates
//!   and a sampled probe of the containment condition.
//! * [`setops`]: point-to-set and Hausdorff distances, the set-valued operator
//!   on particle clouds, bound operators and the envelope iteration.
//! * [`lp`]: a dense simplex solver used for per-state matrix games.
//! * [`robust`]: optimistic and robust values/policies and the ordering check
//!   between the three fixed-point-set envelopes.
//! * [`nonstationary`]: value iteration under time-varying parameters.
//! * [`windfield`]: the 2-D wind-field path-planning benchmark.
//!
//! File formats and the command line live in the companion `setmdp` crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod lp;
pub mod mdp;
pub mod nonstationary;
pub mod robust;
pub mod setops;
pub mod uncertainty;
pub mod vector;
pub mod windfield;

pub use error::{Error, Result};
pub use mdp::{MdpInstance, Policy, StateBlock, ValueOperator};
pub use uncertainty::{ParamChoice, ParamKind, ParamSet, StateParams};
pub use vector::ValueVector;

/// Tolerance used when validating that a row lies on the probability simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;
