//! Command-line entry point: `prepare`, `sample`, `validate`, `score`,
//! `compare`, `analyze` and `hash`.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error, 3 I/O error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    analyze_pair, compare_systems, emit_report, load_entity_rows, read_system_table, AnalysisError, ReportFormat,
    SystemEntry, Tables,
};
use crate::biospan::{extract_spans, orphan_positions};
use crate::labelspace::LabelSpace;
use crate::pipeline::{
    manifest_path, run_prepare, sample_subset, sha256_file, write_manifest, Manifest, ManifestContext,
    PipelineConfig, PipelineError,
};
use crate::record::{read_records, write_records, JsonLines, Record, RecordError};
use crate::scorer::{stream_score_files, MetricsReport, ScoreError, StreamOptions, DEFAULT_CHUNK_SIZE};

#[derive(Debug, Parser)]
#[command(name = "piikit", version, about = "PII corpus preparation and span-level evaluation")]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the preparation pipeline and write train/validation/test splits.
    Prepare(PrepareArgs),
    /// Draw a source-stratified subset of an artifact.
    Sample(SampleArgs),
    /// Check an artifact and report spans and orphan continuations.
    Validate(ValidateArgs),
    /// Score predictions against gold with exact span matching.
    Score(ScoreArgs),
    /// Rank systems by micro F1.
    Compare(CompareArgs),
    /// Compare two systems entity by entity.
    Analyze(AnalyzeArgs),
    /// Print the SHA-256 of files.
    Hash(HashArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub artifact: PathBuf,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output path; defaults to `<artifact stem>.sample<n>.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated source order for the output.
    #[arg(long, value_delimiter = ',')]
    pub source_order: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub artifact: PathBuf,
    /// Fail on orphan continuations and on a manifest that disagrees with the artifact.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Also write per-type metrics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Taxonomy used to fill the group column of the CSV.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    /// Match predictions to gold by id instead of by position.
    #[arg(long)]
    pub unordered: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Score reports as `PATH` or `NAME=PATH`.
    #[arg(long, num_args = 1..)]
    pub reports: Vec<String>,
    /// CSV of `system,category,published,f1,precision,recall` rows.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Category recorded for systems given by `--reports`.
    #[arg(long, default_value = "evaluated")]
    pub category: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json, csv or markdown; defaults to the output extension, else markdown.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub rows: PathBuf,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json, csv or markdown; defaults to the output extension, else markdown.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct HashArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Data = 1,
    Usage = 2,
    Io = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl Failure {
    fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Usage, anyhow!(message.into()))
    }

    fn data(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Data, anyhow!(message.into()))
    }
}

fn record_kind(e: &RecordError) -> ExitKind {
    match e {
        RecordError::Io { .. } => ExitKind::Io,
        _ => ExitKind::Data,
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let kind = match &e {
            _ if e.is_io() => ExitKind::Io,
            PipelineError::Label(crate::labelspace::LabelError::Io { .. }) => ExitKind::Io,
            _ => ExitKind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<RecordError> for Failure {
    fn from(e: RecordError) -> Self {
        Failure::new(record_kind(&e), e)
    }
}

impl From<ScoreError> for Failure {
    fn from(e: ScoreError) -> Self {
        let kind = match &e {
            ScoreError::Read { source, .. } => record_kind(source),
            _ => ExitKind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        let kind = match &e {
            AnalysisError::Io { .. } => ExitKind::Io,
            AnalysisError::UnknownFormat(_) => ExitKind::Usage,
            _ => ExitKind::Data,
        };
        Failure::new(kind, e)
    }
}

/// Outcome of a successful command.
#[derive(Debug, Default)]
pub struct CommandResult {
    /// Human-readable report printed to stdout.
    pub output: String,
    pub written: Vec<PathBuf>,
}

impl CommandResult {
    fn line(&mut self, text: impl AsRef<str>) {
        self.output.push_str(text.as_ref());
        self.output.push('\n');
    }
}

type CmdResult = Result<CommandResult, Failure>;

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(|e| Failure::new(ExitKind::Io, e))?;
    }
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|e| Failure::new(ExitKind::Io, e))
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Score(a) => cmd_score(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Hash(a) => cmd_hash(a),
    }
}

pub fn cmd_prepare(args: PrepareArgs) -> CmdResult {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out_dir = args.out.clone().unwrap_or_else(|| config.resolve(&config.output_dir));
    let summary = run_prepare(&config, &out_dir)?;

    let mut result = CommandResult::default();
    for (step, stats) in &summary.steps {
        let total: u64 = stats.values().map(|s| s.records).sum();
        result.line(format!("{step}: {total} records"));
        for (source, s) in stats {
            let mentions: u64 = s.b_mentions.values().sum();
            result.line(format!(
                "  {source}: records={} tokens={} b_mentions={mentions}",
                s.records, s.tokens
            ));
        }
    }
    if !summary.skipped.is_empty() {
        result.line(format!("skipped records: {}", summary.skipped.len()));
    }
    for (source, n) in &summary.untagged_dropped {
        result.line(format!("dropped untagged records from {source}: {n}"));
    }
    let removed = if summary.removed_types.is_empty() {
        "none".to_string()
    } else {
        summary.removed_types.join(", ")
    };
    result.line(format!("removed types: {removed}"));
    for w in &summary.warnings {
        result.line(format!("warning: {w}"));
    }
    for m in &summary.manifests {
        result.line(format!("{}: {} records, sha256 {}", m.path, m.records, m.sha256));
    }
    result.written = summary.outputs;
    Ok(result)
}

fn default_sample_path(artifact: &Path, n: u64) -> PathBuf {
    let stem = artifact.file_stem().unwrap_or_default().to_string_lossy();
    artifact.with_file_name(format!("{stem}.sample{n}.jsonl"))
}

pub fn cmd_sample(args: SampleArgs) -> CmdResult {
    if args.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let records = read_records(&args.artifact)?;
    if args.n > records.len() as u64 {
        return Err(Failure::data(format!(
            "--n {} exceeds the {} records of {}",
            args.n,
            records.len(),
            args.artifact.display()
        )));
    }
    let order = (!args.source_order.is_empty()).then_some(args.source_order.as_slice());
    let subset = sample_subset(&records, args.n, args.seed, order)?;
    let out = args.out.unwrap_or_else(|| default_sample_path(&args.artifact, args.n));
    write_records(&out, subset.iter())?;
    let context = ManifestContext {
        seed: Some(args.seed),
        ..ManifestContext::default()
    };
    let manifest = write_manifest(&out, &context)?;
    let mut result = CommandResult::default();
    result.line(format!(
        "{}: {} records from {} sources, {} gold spans, sha256 {}",
        out.display(),
        manifest.records,
        manifest.sources,
        manifest.gold_spans,
        manifest.sha256
    ));
    result.written = vec![manifest_path(&out), out];
    Ok(result)
}

pub fn cmd_validate(args: ValidateArgs) -> CmdResult {
    let mut records = 0u64;
    let mut spans = 0u64;
    let mut orphans = 0u64;
    let mut per_type: BTreeMap<String, u64> = BTreeMap::new();
    let mut lines = JsonLines::<_, Record>::open(&args.artifact)?;
    while let Some(item) = lines.next() {
        let record = item?;
        record.validate().map_err(|e| {
            Failure::data(format!("{}: line {}: {e}", args.artifact.display(), lines.line()))
        })?;
        records += 1;
        for span in extract_spans(&record.labels) {
            spans += 1;
            *per_type.entry(span.entity.to_string()).or_default() += 1;
        }
        orphans += orphan_positions(&record.labels).len() as u64;
    }
    let mut result = CommandResult::default();
    result.line(format!("records: {records}"));
    result.line(format!("gold_spans: {spans}"));
    result.line(format!("entity_types: {}", per_type.len()));
    let mut detail = String::new();
    for (t, n) in &per_type {
        let _ = writeln!(detail, "  {t}: {n}");
    }
    result.output.push_str(&detail);
    result.line(format!("orphan_continuations: {orphans}"));

    let mpath = manifest_path(&args.artifact);
    if mpath.exists() {
        let stored = Manifest::load(&mpath)?;
        let fresh = Manifest::compute(&args.artifact, &ManifestContext::default())?;
        let mismatches = stored.count_mismatches(&fresh);
        if mismatches.is_empty() {
            result.line("manifest: consistent");
        } else {
            result.line(format!("manifest: mismatched {}", mismatches.join(", ")));
            if args.strict {
                return Err(Failure::data(format!(
                    "{}\nmanifest {} disagrees with the artifact",
                    result.output,
                    mpath.display()
                )));
            }
        }
    }
    if args.strict && orphans > 0 {
        return Err(Failure::data(format!(
            "{}{orphans} orphan continuation(s) in strict mode",
            result.output
        )));
    }
    Ok(result)
}

pub fn cmd_score(args: ScoreArgs) -> CmdResult {
    if args.chunk_size == 0 {
        return Err(Failure::usage("--chunk-size must be at least 1"));
    }
    let options = StreamOptions {
        chunk_size: args.chunk_size,
        unordered: args.unordered,
    };
    let report = stream_score_files(&args.gold, &args.pred, options)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_file(&args.out, &json)?;
    let mut result = CommandResult::default();
    result.written.push(args.out.clone());
    if let Some(csv) = &args.csv {
        let space = match &args.taxonomy {
            Some(p) => Some(LabelSpace::load(p).map_err(|e| Failure::from(PipelineError::from(e)))?),
            None => None,
        };
        write_file(csv, &report.to_csv(space.as_ref()))?;
        result.written.push(csv.clone());
    }
    let m = &report.micro;
    result.line(format!(
        "records={} precision={:.4} recall={:.4} f1={:.4} (tp={} pred={} gold={})",
        report.records, m.precision, m.recall, m.f1, m.tp, m.pred, m.gold
    ));
    Ok(result)
}

fn output_format(format: &Option<String>, out: &Option<PathBuf>) -> Result<ReportFormat, Failure> {
    match format {
        Some(f) => Ok(f.parse()?),
        None => Ok(out
            .as_deref()
            .and_then(ReportFormat::from_path)
            .unwrap_or(ReportFormat::Markdown)),
    }
}

fn format_name(f: ReportFormat) -> &'static str {
    match f {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
        ReportFormat::Markdown => "markdown",
    }
}

fn deliver(tables: &Tables, format: ReportFormat, out: Option<PathBuf>) -> CmdResult {
    let mut result = CommandResult::default();
    match out {
        Some(path) => {
            emit_report(tables, format_name(format), &path)?;
            result.line(format!("wrote {}", path.display()));
            result.written.push(path);
        }
        None => result.output = crate::analysis::render_report(tables, format),
    }
    Ok(result)
}

pub fn cmd_compare(args: CompareArgs) -> CmdResult {
    let format = output_format(&args.format, &args.out)?;
    let mut entries = Vec::new();
    if let Some(table) = &args.table {
        let file = std::fs::File::open(table)
            .with_context(|| format!("opening {}", table.display()))
            .map_err(|e| Failure::new(ExitKind::Io, e))?;
        entries.extend(read_system_table(file)?);
    }
    for spec in &args.reports {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                (stem, p)
            }
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(|e| Failure::new(ExitKind::Io, e))?;
        let report: MetricsReport = serde_json::from_str(&text)
            .map_err(|e| Failure::data(format!("{}: not a score report: {e}", path.display())))?;
        entries.push(SystemEntry::from_report(name, args.category.clone(), &report));
    }
    if entries.is_empty() {
        return Err(Failure::usage("give --reports and/or --table"));
    }
    deliver(&Tables::Systems(compare_systems(entries)?), format, args.out)
}

pub fn cmd_analyze(args: AnalyzeArgs) -> CmdResult {
    if args.top == 0 {
        return Err(Failure::usage("--top must be at least 1"));
    }
    let format = output_format(&args.format, &args.out)?;
    let rows = load_entity_rows(&args.rows)?;
    let analysis = analyze_pair(&rows, &args.a, &args.b, args.top)?;
    deliver(&Tables::Pair(analysis), format, args.out)
}

pub fn cmd_hash(args: HashArgs) -> CmdResult {
    let mut result = CommandResult::default();
    for path in &args.files {
        let digest = sha256_file(path)
            .with_context(|| format!("hashing {}", path.display()))
            .map_err(|e| Failure::new(ExitKind::Io, e))?;
        result.line(format!("{digest}  {}", path.display()));
    }
    Ok(result)
}
