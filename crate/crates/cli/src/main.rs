//! `gcn-llm`: prepare activity data, build embedding tables, train,
//! evaluate, predict and plot reports.
//!
//! Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.

mod config;
mod report;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gcn_llm::embedding::{pseudo_table, EmbeddingTable};
use gcn_llm::featurize::batch_graphs;
use gcn_llm::model::{init_params, predict_proba, read_checkpoint, write_checkpoint, Checkpoint};
use gcn_llm::pipeline::{
    prepare, read_clean_dataset, validate_records, write_clean_csv, write_rejections, IngestMode,
    LabeledDataset, LabeledRecord, PipelineError, PrepareOptions, Rejection, ValidationIssue,
    DEFAULT_IC50_THRESHOLD_NM,
};
use gcn_llm::smiles::parse;
use gcn_llm::train::{evaluate_model, fit, stratified_split, write_history, TrainError};

use config::{RunConfig, KEYS};
use report::{read_metrics, render_svg, write_metrics, MetricsRow};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) | CliError::Failure(_) => 1,
        }
    }
}

/// Maps an error to `CliError::Failure` prefixed with formatted context.
macro_rules! ctx {
    ($res:expr, $($fmt:tt)+) => {
        $res.map_err(|e| CliError::Failure(format!("{}: {e}", format!($($fmt)+))))
    };
}

#[derive(Parser)]
#[command(
    name = "gcn-llm",
    version,
    about = "GCN virtual-screening classifier with fused molecule embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label, deduplicate and validate a raw activity CSV.
    Prepare(PrepareArgs),
    /// Write a deterministic test-grade embedding table for a dataset.
    PseudoEmbed(PseudoEmbedArgs),
    /// Split, train with early stopping, and save the best model.
    Train(TrainArgs),
    /// Evaluate a saved model on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Classify individual SMILES strings.
    Predict(PredictArgs),
    /// Merge metrics files and draw a grouped bar chart.
    Report(ReportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Raw CSV with columns molecule_id,smiles,ic50_nm (or label).
    #[arg(long = "in", value_name = "CSV")]
    input: PathBuf,
    /// Ingest mode: ic50 (threshold IC50 values) or labeled (0/1 labels).
    #[arg(long, default_value = "ic50", value_parser = parse_mode)]
    mode: IngestMode,
    /// Output dataset CSV: molecule_id,smiles,label.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
    /// Output JSON-lines report of rejected, duplicate and conflicting rows.
    #[arg(long, value_name = "JSONL")]
    reject: PathBuf,
    /// IC50 threshold in nM; values at or below it are active.
    #[arg(long, default_value_t = DEFAULT_IC50_THRESHOLD_NM)]
    threshold: f64,
    /// Keep only the largest dot-separated fragment of each SMILES.
    #[arg(long)]
    strip_salts: bool,
    /// Drop every record whose SMILES appears with both labels.
    #[arg(long)]
    drop_conflicts: bool,
}

fn parse_mode(s: &str) -> Result<IngestMode, String> {
    s.parse()
}

#[derive(Args)]
struct PseudoEmbedArgs {
    /// Dataset CSV (molecule_id,smiles,label).
    #[arg(long = "in", value_name = "CSV")]
    input: PathBuf,
    /// Embedding width.
    #[arg(long, default_value_t = 768)]
    dim: usize,
    /// Seed mixed into every vector.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output EMBTAB v1 file.
    #[arg(long, value_name = "EMBTAB")]
    out: PathBuf,
}

fn keys_help() -> String {
    let mut s = String::from("Config keys (file `key = value` lines, or --set key=value):\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<16} {d}\n"));
    }
    s
}

#[derive(Args)]
#[command(after_help = keys_help())]
struct TrainArgs {
    /// Dataset CSV (molecule_id,smiles,label).
    #[arg(long, value_name = "CSV")]
    data: PathBuf,
    /// EMBTAB v1 embedding table covering every SMILES in the data.
    #[arg(long, value_name = "EMBTAB")]
    emb: PathBuf,
    /// Config file of `key = value` lines; `#` starts a comment.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable; applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output checkpoint of the best-validation model.
    #[arg(long, value_name = "CKPT")]
    out: PathBuf,
    /// Output per-epoch history CSV.
    #[arg(long, value_name = "CSV")]
    history: PathBuf,
    /// Also write the held-out test split as a dataset CSV.
    #[arg(long, value_name = "CSV")]
    test_out: Option<PathBuf>,
    /// Fill the history `seconds` column with wall-clock time (makes the
    /// file differ between otherwise identical runs).
    #[arg(long)]
    timing: bool,
    /// Do not print per-epoch progress.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Labeled dataset CSV (molecule_id,smiles,label).
    #[arg(long, value_name = "CSV")]
    data: PathBuf,
    /// EMBTAB v1 embedding table.
    #[arg(long, value_name = "EMBTAB")]
    emb: PathBuf,
    /// Model checkpoint written by `train`.
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    /// Output metrics CSV (one row).
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
    /// Dataset name for the metrics row; defaults to the data file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    /// SMILES to classify; repeatable.
    #[arg(long, required = true)]
    smiles: Vec<String>,
    /// EMBTAB v1 embedding table.
    #[arg(long, value_name = "EMBTAB")]
    emb: PathBuf,
    /// Model checkpoint written by `train`.
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics CSV files written by `evaluate`.
    #[arg(long, num_args = 1.., required = true, value_name = "CSV")]
    metrics: Vec<PathBuf>,
    /// Output SVG chart.
    #[arg(long, value_name = "SVG")]
    out: PathBuf,
    /// Output merged CSV; defaults to the SVG path with a .csv extension.
    #[arg(long, value_name = "CSV")]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::PseudoEmbed(a) => cmd_pseudo_embed(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `gcn-llm --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(ctx!(
        File::create(path),
        "cannot create {}",
        path.display()
    )?))
}

fn report_rejections(path: &Path, rejections: &[Rejection]) -> CliError {
    for r in rejections {
        eprintln!(
            "{}:{}: {} ({})",
            path.display(),
            r.line,
            r.reason,
            r.molecule_id
        );
    }
    CliError::Validation(format!(
        "{}: {} malformed row(s)",
        path.display(),
        rejections.len()
    ))
}

fn report_issues(issues: &[ValidationIssue]) -> CliError {
    for i in issues {
        eprintln!("record {} ({}): {}", i.index + 1, i.molecule_id, i.reason);
    }
    let missing = issues
        .iter()
        .filter(|i| i.reason.starts_with("missing embedding"))
        .count();
    CliError::Validation(format!(
        "{} record issue(s), {missing} missing embedding key(s)",
        issues.len()
    ))
}

fn load_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    let (ds, rejections) = ctx!(read_clean_dataset(path), "{}", path.display())?;
    if !rejections.is_empty() {
        return Err(report_rejections(path, &rejections));
    }
    if ds.records.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no records",
            path.display()
        )));
    }
    Ok(ds)
}

fn load_table(path: &Path) -> Result<EmbeddingTable, CliError> {
    EmbeddingTable::load(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn cmd_prepare(a: PrepareArgs) -> Result<(), CliError> {
    let options = PrepareOptions {
        mode: a.mode,
        threshold_nm: a.threshold,
        strip_salts: a.strip_salts,
        drop_conflicts: a.drop_conflicts,
    };
    let outcome = prepare(&a.input, &options).map_err(|e| match e {
        PipelineError::Io(_) => CliError::Failure(format!("{}: {e}", a.input.display())),
        _ => CliError::Validation(format!("{}: {e}", a.input.display())),
    })?;
    let records = &outcome.dataset.records;
    ctx!(
        write_clean_csv(create(&a.out)?, records),
        "{}",
        a.out.display()
    )?;
    ctx!(
        write_rejections(create(&a.reject)?, &outcome.report),
        "{}",
        a.reject.display()
    )?;
    let active = records.iter().filter(|r| r.label == 1).count();
    eprintln!(
        "kept {} record(s) ({active} active, {} inactive); {} report entr{}",
        records.len(),
        records.len() - active,
        outcome.report.len(),
        if outcome.report.len() == 1 {
            "y"
        } else {
            "ies"
        }
    );
    Ok(())
}

fn cmd_pseudo_embed(a: PseudoEmbedArgs) -> Result<(), CliError> {
    if a.dim == 0 {
        return Err(CliError::Usage("--dim must be at least 1".into()));
    }
    let ds = load_dataset(&a.input)?;
    let table = pseudo_table(ds.records.iter().map(|r| r.smiles.as_str()), a.seed, a.dim);
    ctx!(table.save(&a.out), "{}", a.out.display())?;
    eprintln!("wrote {} embedding(s), dim {}", table.len(), a.dim);
    Ok(())
}

fn subset(records: &[LabeledRecord], idx: &[usize]) -> Vec<LabeledRecord> {
    idx.iter().map(|&i| records[i].clone()).collect()
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Validation(issues) => report_issues(&issues),
        TrainError::InvalidConfig(m) => CliError::Usage(m),
        TrainError::Model(gcn_llm::model::ModelError::InvalidConfig(m)) => CliError::Usage(m),
        TrainError::EmptyDataset | TrainError::SingleClassDataset => {
            CliError::Validation(e.to_string())
        }
        other => CliError::Failure(other.to_string()),
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut run = RunConfig::default();
    if let Some(path) = &a.config {
        let text = ctx!(fs::read_to_string(path), "{}", path.display())?;
        run.apply_file(&path.display().to_string(), &text)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    for o in &a.overrides {
        run.apply_override(o)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    run.train.validate().map_err(train_error)?;
    let table = load_table(&a.emb)?;
    if !run.embed_dim_set {
        run.model.embed_dim = table.dim();
    }
    run.model
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = load_dataset(&a.data)?;
    let issues = validate_records(&ds.records, run.model.uses_embedding().then_some(&table));
    if !issues.is_empty() {
        return Err(report_issues(&issues));
    }

    let seed = run.train.seed;
    let split = stratified_split(&ds.labels(), run.train_ratio, seed).map_err(train_error)?;
    let train_set = subset(&ds.records, &split.train);
    let test_set = subset(&ds.records, &split.test);
    let params = init_params(&run.model, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let quiet = a.quiet;
    let outcome = fit(&run.model, params, &train_set, &table, &run.train, |r| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  val_acc {:.4}  val_f1 {:.4}  val_auc {}  {:.1}s",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.val_accuracy,
                r.val_f1,
                r.val_auc.map_or("-".to_string(), |v| format!("{v:.4}")),
                r.seconds
            );
        }
    })
    .map_err(train_error)?;

    let ckpt = Checkpoint {
        config: run.model.clone(),
        params: outcome.best_params,
        seed,
    };
    ctx!(write_checkpoint(&a.out, &ckpt), "{}", a.out.display())?;
    let mut hist = create(&a.history)?;
    ctx!(
        write_history(&mut hist, &outcome.history, a.timing),
        "{}",
        a.history.display()
    )?;
    ctx!(hist.flush(), "{}", a.history.display())?;
    if let Some(path) = &a.test_out {
        ctx!(
            write_clean_csv(create(path)?, &test_set),
            "{}",
            path.display()
        )?;
    }

    let test =
        evaluate_model(&ckpt.params, &ckpt.config, &test_set, &table).map_err(train_error)?;
    let s = &test.bundle.scores;
    println!(
        "best epoch {} (val f1 {:.4}); test n={} accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} auc_roc {}",
        outcome.best_epoch,
        outcome.best_validation.bundle.scores.f1,
        test_set.len(),
        s.accuracy,
        s.precision,
        s.recall,
        s.f1,
        test.bundle.auc_roc.map_or("-".to_string(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<Checkpoint, CliError> {
    read_checkpoint(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let ckpt = load_model(&a.model)?;
    let table = load_table(&a.emb)?;
    let ds = load_dataset(&a.data)?;
    let issues = validate_records(&ds.records, ckpt.config.uses_embedding().then_some(&table));
    if !issues.is_empty() {
        return Err(report_issues(&issues));
    }
    let ev =
        evaluate_model(&ckpt.params, &ckpt.config, &ds.records, &table).map_err(train_error)?;
    let name = a.name.unwrap_or_else(|| {
        a.data
            .file_stem()
            .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
    });
    let row = MetricsRow::from_evaluation(&name, &ev);
    ctx!(
        write_metrics(create(&a.out)?, std::slice::from_ref(&row)),
        "{}",
        a.out.display()
    )?;
    println!("{}", row.fields.join(","));
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let ckpt = load_model(&a.model)?;
    let table = load_table(&a.emb)?;
    let mut problems = Vec::new();
    let mut graphs = Vec::new();
    for s in &a.smiles {
        match parse(s) {
            Ok(g) => graphs.push(g),
            Err(e) => problems.push(format!("{s:?}: unparseable smiles: {e}")),
        }
        if ckpt.config.uses_embedding() && !table.contains(s) {
            problems.push(format!("{s:?}: missing embedding key"));
        }
    }
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("{p}");
        }
        return Err(CliError::Validation(format!(
            "{} input problem(s)",
            problems.len()
        )));
    }
    let batch = ctx!(
        batch_graphs(graphs.iter().zip(a.smiles.iter().map(|s| s.trim()))),
        "batching"
    )?;
    let probs = ctx!(
        predict_proba(&ckpt.params, &ckpt.config, &batch, &table),
        "prediction"
    )?;
    let out = io::stdout();
    let mut out = out.lock();
    for (s, row) in a.smiles.iter().zip(probs.rows()) {
        let class = usize::from(row[1] > row[0]);
        ctx!(writeln!(out, "{}\t{class}\t{}", s.trim(), row[1]), "stdout")?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in &a.metrics {
        let file = ctx!(File::open(path), "{}", path.display())?;
        let mut r = read_metrics(file, &path.display().to_string())
            .map_err(|e| CliError::Validation(e.to_string()))?;
        rows.append(&mut r);
    }
    let csv_path = a.csv.unwrap_or_else(|| a.out.with_extension("csv"));
    if csv_path == a.out {
        return Err(CliError::Usage("--csv must differ from --out".into()));
    }
    ctx!(fs::write(&a.out, render_svg(&rows)), "{}", a.out.display())?;
    ctx!(
        write_metrics(create(&csv_path)?, &rows),
        "{}",
        csv_path.display()
    )?;
    eprintln!(
        "{} dataset(s) -> {}, {}",
        rows.len(),
        a.out.display(),
        csv_path.display()
    );
    Ok(())
}
