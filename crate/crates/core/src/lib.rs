//! Exemplar-free class-incremental learning over frozen feature embeddings.
//!
//! A learner consumes one phase of embeddings at a time, each phase bringing
//! classes never seen before, and never revisits earlier samples. Two linear
//! heads sit on top of a frozen random buffer layer:
//!
//! * the main stream, a recursive least-squares classifier whose columns grow
//!   with the class set and whose weights equal the joint ridge solution over
//!   every phase seen so far;
//! * the compensation stream, a second recursive ridge fit on a differently
//!   activated copy of the buffer output, trained on what the main stream
//!   fails to fit.
//!
//! Inference adds the two streams, the second scaled by a compensation ratio.

pub mod buffer;
pub mod checkpoint;
pub mod cli;
pub mod compensation;
pub mod error;
pub mod evaluation;
pub mod learner;
pub mod linalg;
pub mod oracle;
pub mod store;
pub mod stream;

pub use buffer::{ActivationKind, BufferLayer};
pub use error::{DsalError, Result};
pub use evaluation::EvaluationReport;
pub use learner::{Learner, LearnerConfig};
pub use store::{ClassId, PhaseDataset, PhaseManifest};
pub use stream::StreamState;
