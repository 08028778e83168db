//! Discrete-event simulation and analysis of proposer timing games in propose-vote
//! proof-of-stake protocols.
//!
//! - [`model`]: actions, slot records and the payoff / canonicality rules.
//! - [`strategy`]: equilibrium, honest-spec, greedy and laggy strategies.
//! - [`engine`]: the seeded slot-by-slot simulator.
//! - [`lab`]: deviation checks and best-response curves.
//! - [`market`]: synthetic builder bid streams, auction timelines and the
//!   fixed-effects marginal-value-of-time estimator.
//! - [`analytics`], [`config`], [`experiment`]: metrics, configuration and the
//!   experiment runners behind the command-line tool.

pub mod analytics;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod error;
pub mod lab;
pub mod market;
pub mod latency;
pub mod model;
pub mod params;
pub mod rng;
pub mod strategy;

pub use error::{Error, Result};
pub use params::ProtocolParams;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on. Output order
/// always matches input order.
pub(crate) fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
