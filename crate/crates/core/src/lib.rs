//! Inverted pendulum under delayed ON/OFF proportional-derivative control.

pub mod asymptotics;
pub mod bifscan;
pub mod engine;
pub mod filippov;
pub mod io;
pub mod model;
pub mod roots;

pub use model::{GKind, Manifold, Params, Rule, State};
