//! Preprocessing for web-server access logs: field extraction from W3C
//! extended, NCSA common/combined, and IIS files, data cleaning, user
//! identification, session identification, and path completion, with
//! tabular outputs and per-stage statistics.
//!
//! The `logprep` binary drives the same stages from the command line; see
//! [`pipeline::run_pipeline`] for the orchestration entry point.

pub mod clean;
pub mod config;
pub mod fixture;
pub mod graph;
pub mod identity;
pub mod output;
pub mod parse;
pub mod pipeline;
pub mod record;
pub mod sessions;

pub use clean::{clean, removal_reason, RemovalReason};
pub use config::{FormatChoice, GraphSource, OutputFormat, PipelineConfig};
pub use fixture::{generate_fixture, Fixture, FixtureSpec};
pub use graph::{canonicalize_page, SiteGraph};
pub use identity::{agent_signature, identify_users, AgentSignature, IdentityMode, UserAssignment};
pub use parse::{detect_format, parse_line, render_line, ParseOutcome, RecordReader, SkipReason};
pub use pipeline::{run_pipeline, PipelineError, PipelineOutcome};
pub use record::{CleaningPolicy, FormatKind, LogFormat, LogRecord, PipelineStats, RecordKey};
pub use sessions::{complete_paths, sessionize, Session};
