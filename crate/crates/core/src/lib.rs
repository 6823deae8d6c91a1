//! Reproducible entropy decoding across platforms with bounded numerical
//! drift.
//!
//! Critical values (probabilities, scales) that select entropy-coding
//! parameters are snapped to a quantization grid. Values that sit within
//! `epsilon` of a grid boundary are flagged in a small side stream so a
//! decoder whose computation differs by less than `epsilon` lands on exactly
//! the encoder's value.
//!
//! ```
//! use reproguard::{GuardConfig, GuardMode, QuantGrid, Flag};
//!
//! let grid = QuantGrid::uniform(0.01, 0.0).unwrap();
//! let cfg = GuardConfig::new(grid, 0.001, GuardMode::Full, None).unwrap();
//! let sent = cfg.guard_encode(0.0099).unwrap();
//! assert!(sent.flag.risky);
//! let got = cfg.guard_decode(0.0101, sent.flag).unwrap();
//! assert_eq!(got.v_out, sent.v_out);
//! # let _ = Flag::SAFE;
//! ```

pub mod cli;
pub mod container;
pub mod detmath;
pub mod entropy;
pub mod error;
pub mod hyperprior;
pub mod octree;
pub mod platform_sim;
pub mod quantizer;
pub mod raw;
pub mod safeguard;
pub mod session;

pub use container::{ContainerError, GridDesc, GuardedStream, PayloadHeader, PayloadKind};
pub use error::{Error, Result};
pub use octree::VoxelCloud;
pub use platform_sim::{PerturbDist, Perturbation};
pub use quantizer::QuantGrid;
pub use safeguard::{EdgeClip, Flag, GuardConfig, GuardMode, GuardedValue};
pub use session::Protection;
