use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use logprep::config::{
    parse_format_choice, parse_identity_mode, parse_output_format, FileConfig, FormatChoice,
    GraphSource, OutputFormat, PipelineConfig,
};
use logprep::fixture::{generate_fixture, FixtureSpec};
use logprep::identity::IdentityMode;
use logprep::pipeline::{detect_file, run_pipeline, PipelineError};
use logprep::record::{CleaningPolicy, FormatKind};

const OUT_ENV: &str = "LOGPREP_OUT";

#[derive(Parser)]
#[command(
    name = "logprep",
    version,
    about = "Turn raw web-server access logs into cleaned record, user, and session tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: parse, clean, identify users, sessionize,
    /// complete paths, write tables and stats
    Run(Box<RunArgs>),
    /// Report the detected log format of each input file
    Detect(DetectArgs),
    /// Generate a deterministic synthetic log plus ground-truth sidecar
    Fixture(FixtureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    W3c,
    Ncsa,
    NcsaCombined,
    Iis,
}

impl FormatArg {
    fn choice(self) -> FormatChoice {
        match self {
            FormatArg::Auto => FormatChoice::Auto,
            FormatArg::W3c => FormatChoice::Fixed(FormatKind::W3cExtended),
            FormatArg::Ncsa => FormatChoice::Fixed(FormatKind::NcsaCommon),
            FormatArg::NcsaCombined => FormatChoice::Fixed(FormatKind::NcsaCombined),
            FormatArg::Iis => FormatChoice::Fixed(FormatKind::Iis),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureFormatArg {
    W3c,
    Ncsa,
    NcsaCombined,
    Iis,
}

impl FixtureFormatArg {
    fn kind(self) -> FormatKind {
        match self {
            FixtureFormatArg::W3c => FormatKind::W3cExtended,
            FixtureFormatArg::Ncsa => FormatKind::NcsaCommon,
            FixtureFormatArg::NcsaCombined => FormatKind::NcsaCombined,
            FixtureFormatArg::Iis => FormatKind::Iis,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum IdentityArg {
    Basic,
    Topology,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormatArg {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct RunArgs {
    /// Input log files
    #[arg(long = "input", value_name = "PATH", num_args = 1..)]
    input: Vec<PathBuf>,
    /// Input format; auto samples the first 25 non-blank lines per file
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Comma-separated irrelevant suffixes, e.g. .jpg,.gif,.css
    #[arg(long, value_delimiter = ',', value_name = "SUFFIX")]
    suffixes: Option<Vec<String>>,
    /// Also remove records whose status is in a failed range (4xx/5xx)
    #[arg(long)]
    remove_failed_status: bool,
    /// How users are told apart
    #[arg(long, value_enum)]
    identity: Option<IdentityArg>,
    /// Site link graph: tab-separated "from<TAB>to" pages, one per line
    #[arg(
        long,
        value_name = "EDGES_TSV",
        conflicts_with = "graph_from_referrers"
    )]
    graph: Option<PathBuf>,
    /// Derive the site graph from the records' referrers
    #[arg(long)]
    graph_from_referrers: bool,
    /// Session inactivity timeout in minutes
    #[arg(long = "timeout-min", value_name = "MINUTES")]
    timeout_min: Option<f64>,
    /// UTC offset in minutes applied to IIS local timestamps
    #[arg(long = "iis-offset-min", value_name = "MINUTES")]
    iis_offset_min: Option<i32>,
    /// Output directory (the LOGPREP_OUT environment variable overrides)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long = "output-format", value_enum)]
    output_format: Option<OutputFormatArg>,
    /// TOML config file mirroring these flags; explicit flags win
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long = "input", value_name = "PATH", num_args = 1.., required = true)]
    input: Vec<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    /// Total log lines to generate
    #[arg(long)]
    records: u64,
    /// How many of them the default cleaning policy must remove
    #[arg(long, default_value_t = 0)]
    irrelevant: u64,
    /// Distinct (IP, agent) users among the kept records
    #[arg(long)]
    users: u64,
    /// Mean sessions per user
    #[arg(long = "sessions-mean", default_value_t = 2.0)]
    sessions_mean: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "ncsa-combined")]
    format: FixtureFormatArg,
    /// Output directory (the LOGPREP_OUT environment variable overrides)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Detect(args) => cmd_detect(args),
        Command::Fixture(args) => cmd_fixture(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("logprep: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), PipelineError> {
    let cfg = build_config(args)?;
    let outcome = run_pipeline(&cfg)?;
    let s = &outcome.stats;
    println!(
        "lines_read={} records_parsed={} records_after_cleaning={} users={} sessions={} inferred={}",
        s.lines_read,
        s.records_parsed,
        s.records_after_cleaning,
        s.users_identified,
        s.sessions_identified,
        s.records_inferred
    );
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(())
}

fn build_config(args: RunArgs) -> Result<PipelineConfig, PipelineError> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let file_cleaning = file.cleaning.unwrap_or_default();

    let inputs = if args.input.is_empty() {
        file.input.unwrap_or_default()
    } else {
        args.input
    };

    let format = match (args.format, file.format) {
        (Some(f), _) => f.choice(),
        (None, Some(s)) => parse_format_choice(&s)?,
        (None, None) => FormatChoice::Auto,
    };

    let mut cleaning = CleaningPolicy::default();
    if let Some(suffixes) = args.suffixes.or(file_cleaning.suffixes) {
        cleaning = cleaning
            .with_suffixes(suffixes)
            .map_err(PipelineError::Config)?;
    }
    cleaning.remove_failed_status =
        args.remove_failed_status || file_cleaning.remove_failed_status.unwrap_or(false);

    let identity_mode = match (args.identity, file.identity) {
        (Some(IdentityArg::Basic), _) => IdentityMode::Basic,
        (Some(IdentityArg::Topology), _) => IdentityMode::Topology,
        (None, Some(s)) => parse_identity_mode(&s)?,
        (None, None) => IdentityMode::Basic,
    };

    let graph_source = if let Some(path) = args.graph {
        GraphSource::EdgeFile(path)
    } else if args.graph_from_referrers {
        GraphSource::FromReferrers
    } else if let Some(path) = file.graph {
        GraphSource::EdgeFile(path)
    } else if file.graph_from_referrers == Some(true) {
        GraphSource::FromReferrers
    } else {
        GraphSource::None
    };

    let output_format = match (args.output_format, file.output_format) {
        (Some(OutputFormatArg::Csv), _) => OutputFormat::Csv,
        (Some(OutputFormatArg::Jsonl), _) => OutputFormat::Jsonl,
        (None, Some(s)) => parse_output_format(&s)?,
        (None, None) => OutputFormat::Csv,
    };

    Ok(PipelineConfig {
        inputs,
        format,
        cleaning,
        identity_mode,
        graph_source,
        timeout_minutes: args.timeout_min.or(file.timeout_min).unwrap_or(30.0),
        iis_offset_minutes: args.iis_offset_min.or(file.iis_offset_min).unwrap_or(0),
        output_dir: resolve_out(args.out.or(file.out))?,
        output_format,
        seed: file.seed,
    })
}

fn resolve_out(flag: Option<PathBuf>) -> Result<PathBuf, PipelineError> {
    if let Ok(env_out) = std::env::var(OUT_ENV) {
        if !env_out.is_empty() {
            return Ok(PathBuf::from(env_out));
        }
    }
    flag.ok_or_else(|| PipelineError::Config("missing --out (or LOGPREP_OUT)".into()))
}

fn cmd_detect(args: DetectArgs) -> Result<(), PipelineError> {
    for path in &args.input {
        let format = detect_file(path)?;
        println!("{}: {}", path.display(), format.kind().name());
    }
    Ok(())
}

fn cmd_fixture(args: FixtureArgs) -> Result<(), PipelineError> {
    let out = resolve_out(args.out)?;
    let spec = FixtureSpec {
        records: args.records,
        irrelevant: args.irrelevant,
        users: args.users,
        sessions_per_user_mean: args.sessions_mean,
        seed: args.seed,
        format: args.format.kind(),
    };
    let fixture = generate_fixture(&spec).map_err(|e| PipelineError::Config(e.to_string()))?;
    let (log_path, gt_path) = fixture.write_to(&out).map_err(|e| PipelineError::Io {
        file: out.display().to_string(),
        offset: 0,
        source: e,
    })?;
    println!("wrote {} and {}", log_path.display(), gt_path.display());
    println!(
        "planned: records={} removed={} users={} sessions={}",
        spec.records,
        spec.irrelevant,
        fixture.ground_truth.planned_users,
        fixture.ground_truth.planned_sessions
    );
    Ok(())
}
