//! Formation control of single-integrator agents over noisy channels, with
//! differential-privacy accounting of the channel noise.
//!
//! - [`graph`]: tree topologies and incidence matrices.
//! - [`channel`]: state-dependent Gaussian reception noise.
//! - [`control`]: finite-horizon LQR gains and the local control law.
//! - [`engine`]: closed-loop runs and Monte-Carlo statistics.
//! - [`privacy`]: Gaussian-mechanism budgets and their composition.

pub mod channel;
pub mod control;
pub mod engine;
pub mod graph;
pub mod privacy;
pub mod rng;

use thiserror::Error;

pub use channel::ChannelError;
pub use control::ControlError;
pub use engine::EngineError;
pub use graph::GraphError;
pub use privacy::PrivacyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
}
