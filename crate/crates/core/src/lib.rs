//! Rigid SE(2) registration of dense 2D power grids (radar-style scans) by
//! decoupled Fourier scan matching.
//!
//! The matcher estimates rotation from translation-invariant magnitude
//! spectra, then translation at the recovered rotation. A brute-force
//! correlative matcher serves as correctness oracle and speed baseline, and
//! the odometry and bench modules score trajectories and run time.

pub mod bench;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod imageops;
pub mod io;
pub mod matcher;
pub mod odometry;
pub mod oracle;
pub mod spectral;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{GridSpec, Pose2D};
pub use imageops::{MaskGrid, ScanGrid};
pub use matcher::{MatchConfig, MatchResult, Matcher};
pub use spectral::CorrelationSurface;
