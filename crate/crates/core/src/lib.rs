//! Harness for simultaneous translation experiments.
//!
//! Timed source utterances are replayed segment by segment against a
//! translation agent under an incremental decoding policy (Local Agreement
//! or wait-k). Every read and write lands in a [`session::SessionLog`], from
//! which latency (AL, ATD) is computed; committed output is scored with
//! corpus BLEU and character length ratios. Style tags (`<si>`, `<off>`) are
//! force-decoded as a prefix and stripped before anything is measured.
//!
//! Training-data preparation lives in [`dataprep`]: alignment filtering,
//! prefix-to-prefix pair extraction and the tagged/upsampled mixtures.

pub mod agent;
pub mod corpus;
pub mod dataprep;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod policy;
pub mod report;
pub mod session;
pub mod textproc;

pub use error::{AgentError, Error, ErrorKind, Result};
