//! Moments of the free unitary Brownian motion on the unitary dual group.

pub mod biane;
pub mod error;
pub mod free_engine;
pub mod ode;
pub mod schurmann;
pub mod sim;
pub mod stats;
pub mod words;

pub use error::{Error, Result};
pub use free_engine::{FreeEngine, GeneratorSystem, MomentQuery};
pub use sim::{Functional, MomentEstimate, Scheme, SimConfig};
pub use words::{parse_word, parse_word_at, Letter, Time, TraceTuple, TraceWord};
