//! Run configuration: the resolved settings the pipeline executes with,
//! plus the optional TOML config file that mirrors every CLI flag.

use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crate::identity::IdentityMode;
use crate::record::{CleaningPolicy, FormatKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatChoice {
    Auto,
    Fixed(FormatKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSource {
    None,
    EdgeFile(PathBuf),
    FromReferrers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub format: FormatChoice,
    pub cleaning: CleaningPolicy,
    pub identity_mode: IdentityMode,
    pub graph_source: GraphSource,
    pub timeout_minutes: f64,
    pub iis_offset_minutes: i32,
    pub output_dir: PathBuf,
    pub output_format: OutputFormat,
    /// Only the fixture generator uses this.
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            format: FormatChoice::Auto,
            cleaning: CleaningPolicy::default(),
            identity_mode: IdentityMode::Basic,
            graph_source: GraphSource::None,
            timeout_minutes: 30.0,
            iis_offset_minutes: 0,
            output_dir: PathBuf::from("."),
            output_format: OutputFormat::Csv,
            seed: None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.inputs.is_empty() {
            return Err(ConfigError("no input files given".into()));
        }
        if self.timeout_minutes <= 0.0 || !self.timeout_minutes.is_finite() {
            return Err(ConfigError(format!(
                "timeout must be a positive number of minutes, got {}",
                self.timeout_minutes
            )));
        }
        if self.identity_mode == IdentityMode::Topology && self.graph_source == GraphSource::None {
            return Err(ConfigError(
                "identity mode 'topology' needs --graph or --graph-from-referrers".into(),
            ));
        }
        Ok(())
    }

    pub fn timeout(&self) -> chrono::Duration {
        chrono::Duration::milliseconds((self.timeout_minutes * 60_000.0).round() as i64)
    }
}

/// Config file contents; every key mirrors a CLI flag of the same name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<Vec<PathBuf>>,
    pub format: Option<String>,
    pub identity: Option<String>,
    pub graph: Option<PathBuf>,
    pub graph_from_referrers: Option<bool>,
    pub timeout_min: Option<f64>,
    pub iis_offset_min: Option<i32>,
    pub out: Option<PathBuf>,
    pub output_format: Option<String>,
    pub seed: Option<u64>,
    pub cleaning: Option<CleaningFileConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleaningFileConfig {
    pub suffixes: Option<Vec<String>>,
    pub remove_failed_status: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))
    }
}

pub fn parse_format_choice(s: &str) -> Result<FormatChoice, ConfigError> {
    if s == "auto" {
        return Ok(FormatChoice::Auto);
    }
    s.parse::<FormatKind>()
        .map(FormatChoice::Fixed)
        .map_err(ConfigError)
}

pub fn parse_identity_mode(s: &str) -> Result<IdentityMode, ConfigError> {
    match s {
        "basic" => Ok(IdentityMode::Basic),
        "topology" => Ok(IdentityMode::Topology),
        other => Err(ConfigError(format!("unknown identity mode '{other}'"))),
    }
}

pub fn parse_output_format(s: &str) -> Result<OutputFormat, ConfigError> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "jsonl" => Ok(OutputFormat::Jsonl),
        other => Err(ConfigError(format!("unknown output format '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid() -> PipelineConfig {
        PipelineConfig {
            inputs: vec![PathBuf::from("a.log")],
            output_dir: PathBuf::from("out"),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn default_is_auto_basic_csv_30min() {
        let c = PipelineConfig::default();
        assert_eq!(c.format, FormatChoice::Auto);
        assert_eq!(c.identity_mode, IdentityMode::Basic);
        assert_eq!(c.output_format, OutputFormat::Csv);
        assert_eq!(c.timeout_minutes, 30.0);
        assert_eq!(c.iis_offset_minutes, 0);
    }

    #[test]
    fn topology_without_graph_is_rejected() {
        let mut c = valid();
        c.identity_mode = IdentityMode::Topology;
        assert!(c.validate().is_err());
        c.graph_source = GraphSource::FromReferrers;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn non_positive_timeout_is_rejected() {
        let mut c = valid();
        c.timeout_minutes = 0.0;
        assert!(c.validate().is_err());
        c.timeout_minutes = -5.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_inputs_rejected() {
        let mut c = valid();
        c.inputs.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn file_config_parses_structured_toml() {
        let toml_text = r#"
            input = ["a.log", "b.log"]
            format = "ncsa-combined"
            identity = "topology"
            graph_from_referrers = true
            timeout_min = 15.5
            out = "results"

            [cleaning]
            suffixes = [".jpg", ".png"]
            remove_failed_status = true
        "#;
        let fc: FileConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(fc.input.as_ref().unwrap().len(), 2);
        assert_eq!(
            parse_format_choice(fc.format.as_deref().unwrap()).unwrap(),
            FormatChoice::Fixed(FormatKind::NcsaCombined)
        );
        assert_eq!(
            parse_identity_mode(fc.identity.as_deref().unwrap()).unwrap(),
            IdentityMode::Topology
        );
        assert_eq!(fc.timeout_min, Some(15.5));
        let cleaning = fc.cleaning.unwrap();
        assert_eq!(cleaning.suffixes.unwrap(), vec![".jpg", ".png"]);
        assert_eq!(cleaning.remove_failed_status, Some(true));
    }

    #[test]
    fn unknown_config_keys_are_errors() {
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }

    #[test]
    fn timeout_duration_conversion() {
        let mut c = valid();
        c.timeout_minutes = 0.5;
        assert_eq!(c.timeout(), chrono::Duration::seconds(30));
    }
}
