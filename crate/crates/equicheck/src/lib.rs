//! Equilibrium verification for controller advice in probabilistic
//! concurrent games with per-player reachability goals.
//!
//! The toolkit decides whether a given piece of controller advice is a
//! correlated equilibrium (no player gains by deviating from the initial
//! state) or a subgame-perfect correlated equilibrium (no player gains by a
//! one-step deviation at any relevant state), producing an explicit
//! deviation witness whenever a check fails. All probability computations
//! are exact over arbitrary-precision rationals.
//!
//! Module map:
//! - [`rational`]: exact rational numbers with parsing and rendering.
//! - [`model`]: games, controller advice, documents, validation.
//! - [`product`]: the advice Markov chain and per-player deviation MDPs.
//! - [`analysis`]: chain classification, pruning, exact hitting values.
//! - [`solver`]: exact policy iteration for deviation MDPs.
//! - [`verify`]: the equilibrium checks and witness extraction.
//! - [`bayes`]: Bayesian-network model descriptions and unfolding.
//! - [`cvp`]: circuit-value instances compiled to verification problems.
//! - [`oracle`]: brute-force and Monte-Carlo reference implementations.

pub mod analysis;
pub mod bayes;
pub mod cvp;
pub mod model;
pub mod oracle;
pub mod product;
pub mod rational;
pub mod solver;
pub mod verify;
