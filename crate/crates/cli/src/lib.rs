//! Configuration, artifact and command layer of the `dmoc` binary.

pub mod artifact;
pub mod config;
pub mod run;

pub use artifact::{emit_artifact, load_artifact, Artifact, ArtifactError, Metadata};
pub use config::{ConfigError, RunConfig};
pub use run::{run, verify, Outcome, Overrides, RunError, Status};
