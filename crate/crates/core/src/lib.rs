//! Room acoustics modelling, blind room characterization and structured sparse
//! recovery of concurrent speech sources from multichannel recordings.
//!
//! The crate is organised bottom-up: [`scene`] describes rooms and enumerates
//! image sources, [`stft`] is the sparse-domain transform, [`forward`] builds
//! acoustic operators, [`recovery`] holds the sparse solvers, and
//! [`geom_est`], [`channel_est`] and [`dereverb`] characterize the room and
//! separate the sources. [`eval`] collects metrics.

pub mod channel_est;
pub mod cli;
pub mod dereverb;
pub mod error;
pub mod eval;
pub mod forward;
pub mod geom_est;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod recovery;
pub mod scene;
pub mod signals;
pub mod stft;

pub use error::{Error, Result};
pub use linalg::C64;
pub use scene::Point;
