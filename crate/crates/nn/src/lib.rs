//! CPU tensor engine for small convolutional segmentation networks.
//!
//! Everything operates on dense `(N, C, H, W)` f32 tensors. The crate
//! provides the op kernels ([`ops`]), a reverse-mode tape ([`graph`]),
//! parameter storage with checkpoint IO ([`params`]), layer builders
//! ([`layers`]), He initialization ([`init`]), Adam ([`optim`]) and
//! cross-entropy ([`loss`]).
//!
//! The engine is deliberately single-threaded: given the same seeds it
//! reproduces training runs bit for bit.

pub mod graph;
pub mod init;
pub mod layers;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod params;

/// Dense activation/parameter tensor, `(N, C, H, W)`.
pub type Tensor = ndarray::Array4<f32>;

pub use graph::{Mode, NodeId, Tape};
pub use params::{BufferId, CheckpointError, ParamId, ParamStore};
