//! Non-local low-rank tensor recovery for video deraining, with the data
//! preparation and evaluation pieces of a two-stage segmentation workflow.
//!
//! Stage one groups similar spatio-temporal patch tubes from a frame
//! sequence, restores each group by penalizing the nuclear norm of its
//! group-mode unfolding plus the L1 norm of its temporal gradient, and
//! averages the restored tubes back into frames. Stage two tools cover the
//! deterministic preprocessing chain for segmentation training data and the
//! mIoU scorer.

pub mod error;
pub mod frame;
pub mod grouping;
pub mod metrics;
pub mod pnm;
pub mod prep;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use frame::{Frame, LabelMap, ManifestEntry, VideoSequence, IGNORE_ID};
pub use grouping::{Coord, GroupingConfig, PatchGroup};
pub use solver::{derain_sequence, solve_group, DerainReport, SolveReport, SolverConfig};

pub use tensor::{Dims, Matrix, Mode, Tensor3};
