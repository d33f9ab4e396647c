//! Command-line interface. Reports go to stdout (or `--out`) as JSON;
//! diagnostics go to stderr as single lines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use costsight_core::anova::{bootstrap_p, BootstrapConfig, GroupedAnswers, ShuffleMode, Split};
use costsight_core::consequence::{
    birdseye_export, ConsequenceConfig, ZoneConfig, DEFAULT_THRESHOLD,
};
use costsight_core::costmatrix::{
    aggregate_answers, aggregate_answers_linear, AnswerFilter, Gender, Perspective, HUMAN,
};
use costsight_core::decision::decide_map;
use costsight_core::ingest::answers::validate_answers;
use costsight_core::ingest::manifest::{survey_class_names, CITYSCAPES_TAXONOMY};
use costsight_core::ingest::{
    generate_fixture, read_answers, read_pmap, validate_manifest, write_lmap, Dataset,
    DatasetManifest, FixtureSpec, MatrixFile,
};
use costsight_core::metrics::{render_table, MetricsReport};
use costsight_core::pipeline::{dataset_consequences, dataset_metrics};
use costsight_core::taxonomy::ClassTaxonomy;
use serde::Serialize;

use crate::costs;
use crate::server::{self, ServerConfig};

pub const EXIT_DATA: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "costsight",
    version,
    about = "Cost-aware evaluation of semantic segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean severity-exponent matrix of a group of survey answers.
    Aggregate(AggregateArgs),
    /// Two-group F-test with a permutation p-value.
    Ftest(FtestArgs),
    /// Apply a cost rule to one probability map.
    Decide(DecideArgs),
    /// Segmentation metrics of one or more rules on a dataset.
    Metrics(MetricsArgs),
    /// Overlooked humans per braking zone, rule A against rule B.
    Consequences(ConsequencesArgs),
    /// Write a synthetic dataset.
    Gen(GenArgs),
    /// Check a manifest or an answer file and list every problem.
    Validate(ValidateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub answers: PathBuf,
    #[arg(long)]
    pub perspective: Option<Perspective>,
    #[arg(long)]
    pub gender: Option<Gender>,
    /// Average linear costs instead of exponents.
    #[arg(long)]
    pub linear: bool,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Perspective,
    Gender,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    GroupTotals,
    TargetCounts,
    Participant,
}

#[derive(Debug, Args)]
pub struct FtestArgs {
    #[arg(long)]
    pub answers: PathBuf,
    #[arg(long, value_enum)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 10_000)]
    pub shuffles: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "group-totals")]
    pub mode: ModeArg,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[arg(long)]
    pub pmap: PathBuf,
    /// `robot`, `preset:<name>` or a matrix JSON file.
    #[arg(long)]
    pub costs: String,
    /// Reduce fine-class maps first: `cityscapes` or a taxonomy JSON file.
    #[arg(long)]
    pub taxonomy: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Rule to evaluate (repeatable): `robot`, `preset:<name>`, a matrix
    /// JSON file or a directory of `<image_id>.lmap` predictions.
    #[arg(long = "rule", required = true)]
    pub rules: Vec<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ConsequencesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub pred_a: String,
    #[arg(long)]
    pub pred_b: String,
    /// Comma-separated nested zone radii in metres.
    #[arg(long, value_delimiter = ',')]
    pub zones: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Bird's-eye SVG output.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Bird's-eye point list output (JSON).
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub images: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 3)]
    pub humans: usize,
    #[arg(long, default_value_t = 2)]
    pub vehicles: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.3)]
    pub margin: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub answers: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "COSTSIGHT_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "COSTSIGHT_BIND", default_value = "127.0.0.1")]
    pub bind: String,
    /// Append-only answer store (JSON lines).
    #[arg(long, env = "COSTSIGHT_STORE", default_value = "answers.jsonl")]
    pub store: PathBuf,
    /// What-if dataset manifest; a generated fixture is used when absent.
    #[arg(long, env = "COSTSIGHT_FIXTURES")]
    pub fixtures: Option<PathBuf>,
    /// Seed for perspective assignment and scenario order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<costsight_core::Error> for CliError {
    fn from(e: costsight_core::Error) -> Self {
        let code = match e {
            costsight_core::Error::Io { .. } => EXIT_IO,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

fn data_error(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_DATA,
        message: message.into(),
    }
}

fn emit<T: Serialize>(value: &T, out: &OutArg) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| data_error(e.to_string()))?;
    text.push('\n');
    emit_text(&text, out.out.as_deref())
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Aggregate(a) => aggregate(a),
        Command::Ftest(a) => ftest(a),
        Command::Decide(a) => decide(a),
        Command::Metrics(a) => metrics(a),
        Command::Consequences(a) => consequences(a),
        Command::Gen(a) => gen(a),
        Command::Validate(a) => validate(a),
        Command::Serve(a) => serve(a),
    }
}

fn aggregate(a: AggregateArgs) -> Result<(), CliError> {
    let answers = read_answers(&a.answers)?;
    let filter = AnswerFilter {
        perspective: a.perspective,
        gender: a.gender,
    };
    let names = Some(survey_class_names());
    let file = if a.linear {
        MatrixFile::from_linear(
            &aggregate_answers_linear(&answers, |x| filter.matches(x))?,
            names,
        )
    } else {
        MatrixFile::from_log(&aggregate_answers(&answers, |x| filter.matches(x))?, names)
    };
    emit(&file, &a.out)
}

fn ftest(a: FtestArgs) -> Result<(), CliError> {
    let answers = read_answers(&a.answers)?;
    let split = match a.split {
        SplitArg::Perspective => Split::Perspective,
        SplitArg::Gender => Split::Gender,
    };
    let mode = match a.mode {
        ModeArg::GroupTotals => ShuffleMode::GroupTotals,
        ModeArg::TargetCounts => ShuffleMode::TargetCounts,
        ModeArg::Participant => ShuffleMode::Participant,
    };
    let g = GroupedAnswers::by_split(&answers, split)?;
    let mut config = BootstrapConfig::new(a.shuffles, a.seed).mode(mode);
    if let Some(w) = a.workers {
        config = config.workers(w);
    }
    emit(&bootstrap_p(&g, config)?, &a.out)
}

fn taxonomy(spec: &str) -> Result<ClassTaxonomy, CliError> {
    Ok(if spec == CITYSCAPES_TAXONOMY {
        ClassTaxonomy::default()
    } else {
        ClassTaxonomy::load(spec)?
    })
}

fn decide(a: DecideArgs) -> Result<(), CliError> {
    let mut pm = read_pmap(&a.pmap)?;
    if let Some(t) = &a.taxonomy {
        pm = taxonomy(t)?.aggregate_probability_map(&pm)?;
    }
    let c = costs::cost_matrix(&a.costs, pm.n_classes())?;
    write_lmap(&a.out, &decide_map(&pm, &c)?)?;
    Ok(())
}

#[derive(Serialize)]
struct RuleMetrics {
    rule: String,
    metrics: MetricsReport,
}

fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let ds = Dataset::load(&a.manifest)?;
    let mut rows = Vec::new();
    for spec in &a.rules {
        let preds = costs::predictions(spec, &ds)?;
        rows.push(RuleMetrics {
            rule: costs::rule_name(spec),
            metrics: dataset_metrics(&ds, &preds)?,
        });
    }
    match a.format {
        Format::Json => emit(&rows, &a.out),
        Format::Table => {
            let focus = ds
                .class_names()
                .iter()
                .position(|c| c == "human")
                .unwrap_or(HUMAN);
            let focus_name = ds.class_names().get(focus).cloned().unwrap_or_default();
            let table_rows: Vec<(&str, &MetricsReport)> =
                rows.iter().map(|r| (r.rule.as_str(), &r.metrics)).collect();
            emit_text(
                &render_table(&table_rows, focus, &focus_name),
                a.out.out.as_deref(),
            )
        }
    }
}

fn consequences(a: ConsequencesArgs) -> Result<(), CliError> {
    let ds = Dataset::load(&a.manifest)?;
    let zones = match &a.zones {
        Some(d) => ZoneConfig::from_distances(d)?,
        None => ZoneConfig::default(),
    };
    let config = ConsequenceConfig {
        zones,
        threshold: a.threshold,
        ..ConsequenceConfig::default()
    };
    let pred_a = costs::predictions(&a.pred_a, &ds)?;
    let pred_b = costs::predictions(&a.pred_b, &ds)?;
    let report = dataset_consequences(&ds, &pred_a, &pred_b, &config)?;
    if a.svg.is_some() || a.points.is_some() {
        let (na, nb) = (costs::rule_name(&a.pred_a), costs::rule_name(&a.pred_b));
        let plot = birdseye_export(&report, [&na, &nb]);
        if let Some(p) = &a.svg {
            emit_text(&plot.svg, Some(p))?;
        }
        if let Some(p) = &a.points {
            emit(
                &plot.points,
                &OutArg {
                    out: Some(p.clone()),
                },
            )?;
        }
    }
    emit(&report, &a.out)
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let spec = FixtureSpec {
        n_images: a.images,
        height: a.height,
        width: a.width,
        humans_per_image: a.humans,
        vehicles_per_image: a.vehicles,
        noise: a.noise,
        margin: a.margin,
        seed: a.seed,
        ..FixtureSpec::default()
    };
    let path = generate_fixture(&spec)?.write_to(&a.out_dir)?;
    println!("{}", path.display());
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let problems = if let Some(m) = &a.manifest {
        let diags = validate_manifest(&DatasetManifest::load(m)?);
        let n = diags.len();
        emit(&diags, &OutArg { out: None })?;
        n
    } else {
        let path = a.answers.as_ref().expect("clap enforces one source");
        let text = fs::read_to_string(path).map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        })?;
        let (_, diags) = validate_answers(&text);
        let n = diags.len();
        emit(&diags, &OutArg { out: None })?;
        n
    };
    if problems > 0 {
        return Err(data_error(format!("{problems} problem(s) found")));
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let config = ServerConfig {
        bind: a.bind,
        port: a.port,
        store: a.store,
        fixtures: a.fixtures,
        seed: a.seed,
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(server::serve(config)).map_err(|e| CliError {
        code: e.exit_code(),
        message: e.to_string(),
    })
}
