//! Asynchronous batch Bayesian optimisation with local penalisation.
//!
//! [`gp`] holds the Matern-5/2 surrogate, [`acquisition`] the UCB and the
//! hard/soft local penalisers, [`strategies`] the selection policies. The
//! [`simulator`] replays a pool of workers with random runtimes, and
//! [`runner`] drives multi-seed experiments over [`benchmarks`].

pub mod acquisition;
pub mod benchmarks;
pub mod error;
pub mod gp;
pub mod runner;
pub mod simulator;
pub mod strategies;
