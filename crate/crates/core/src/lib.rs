//! Planning and learning for tabular finite-horizon constrained MDPs under
//! anytime constraints.
//!
//! An anytime constraint requires every prefix sum of the incurred costs to
//! stay within budget, almost surely. The crate reduces such a problem to an
//! unconstrained MDP over (state, cumulative cost) pairs, solves it exactly by
//! backward induction, and offers grid-projected approximations whose size is
//! polynomial in the horizon. Brute-force oracles for small instances live in
//! [`oracle`] and back the test suites.
//!
//! ```
//! use anytime_cmdp::{augment, instances, solve};
//!
//! let spec = instances::gen_knapsack(&[1, 2], &[1, 2], 2).unwrap();
//! let aug = augment::build_augmented(&spec, &Default::default()).unwrap();
//! let solution = solve::backward_induction(&aug);
//! assert_eq!(solution.optimal_value().unwrap().to_string(), "2");
//! ```

pub mod approx;
pub mod augment;
pub mod cost;
pub mod error;
pub mod history;
pub mod instances;
pub mod layered;
pub mod learn;
pub mod oracle;
pub mod policy;
pub mod rational;
pub mod simulate;
pub mod solve;
pub mod spec;
pub mod verify;

pub use approx::{Mode, ProjectionConfig};
pub use cost::{CostDistribution, CostVector, Key};
pub use error::{Error, Result};
pub use layered::{BuildLimits, LayeredMdp};
pub use policy::AugmentedPolicy;
pub use rational::Rational;
pub use spec::{CmdpSpec, ConstraintKind};
