//! `factprobe` command line: every stage reads and writes plain files so a
//! pipeline is a shell script and its outputs can be diffed.

mod error;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;

use factprobe::factmodels::{ModelConfig, ModelKind};
use factprobe::probe::{
    cca, error_regression, extract_probe_matrices, nested_cv, render_error_table, top_errors,
    ErrorObservation, ErrorRegressionOptions, NestedCvConfig, PredictionMatrix, DEFAULT_COMPONENTS,
    DEFAULT_GRID, REFERENCE_FRAME,
};
use factprobe::trainer::{
    predict_all, predict_unk_ablated, read_corpus, train_multitask, write_log, FactualityExample,
    MultiTaskModel, TrainConfig, CORPUS_COLUMNS,
};
use factprobe::verdata::{
    generate_dataset, normalize_responses, raw_mean_scores, read_annotations, read_dataset,
    read_verb_inventory, rule_label, signature_of, write_dataset, DatasetRow, DATASET_COLUMNS,
};

use error::CliError;

const OUT_DIR_ENV: &str = "FACTPROBE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "factprobe", version, about = "Event factuality models and probes")]
struct Cli {
    /// Master seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Render every (verb, frame) pair of an inventory at both polarities.
    Generate(GenerateArgs),
    /// Turn ordinal annotator responses into real-valued gold factuality.
    Normalize(NormalizeArgs),
    /// Train a shared encoder with one regression head per corpus.
    Train(TrainArgs),
    /// Predict with every head of a checkpoint.
    Predict(PredictArgs),
    /// Predict with the embedding verb replaced by the UNK vector.
    AblateUnk(PredictArgs),
    /// Ridge ensemble of prediction columns under nested cross-validation.
    Ensemble(EnsembleArgs),
    /// Canonical correlations between verb embeddings and predicate states.
    Cca(CcaArgs),
    /// Error regression and worst-error table for one prediction column.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    /// TSV with columns verb, frame_id.
    #[arg(long)]
    verbs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fill gold_factuality with the verb signature rule label.
    #[arg(long)]
    rule_labels: bool,
}

#[derive(Debug, Args, Serialize)]
struct NormalizeArgs {
    /// TSV with columns sentence_id, annotator_id, response.
    #[arg(long)]
    annotations: PathBuf,
    /// Dataset whose gold_factuality column is filled in.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Plain mean of response levels instead of the ordinal model.
    #[arg(long)]
    raw_means: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum KindArg {
    L,
    T,
    H,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::L => ModelKind::Linear,
            KindArg::T => ModelKind::Tree,
            KindArg::H => ModelKind::Hybrid,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Training corpus as TAG=PATH; repeat for multi-task training.
    #[arg(long = "corpus", required = true, value_parser = parse_corpus_spec)]
    corpora: Vec<(String, PathBuf)>,
    #[arg(long, value_enum, default_value_t = KindArg::H)]
    model: KindArg,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Hold out this fraction of each corpus for model selection.
    #[arg(long)]
    dev_fraction: Option<f64>,
    #[arg(long)]
    no_shuffle: bool,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch losses as JSON lines.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EnsembleArgs {
    /// Prediction TSV; repeat to pool columns from several files.
    #[arg(long = "pred", required = true)]
    predictions: Vec<PathBuf>,
    /// Dataset or corpus carrying the gold values.
    #[arg(long)]
    gold: PathBuf,
    /// `default` or a comma-separated list of penalties.
    #[arg(long, default_value = "default", value_parser = parse_grid)]
    grid: Grid,
    #[arg(long, default_value_t = 10)]
    k_outer: usize,
    #[arg(long, default_value_t = 10)]
    k_inner: usize,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    /// JSON report path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct Grid(Vec<f64>);

#[derive(Debug, Args, Serialize)]
struct CcaArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    components: usize,
    /// Read the verb through the UNK row.
    #[arg(long)]
    ablate: bool,
    /// CSV of component, correlation.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long = "pred")]
    predictions: PathBuf,
    /// Column to analyze; optional when the file has one column.
    #[arg(long)]
    column: Option<String>,
    /// Dataset with verb, frame, polarity and gold for every prediction row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long, default_value = REFERENCE_FRAME)]
    reference_frame: String,
    #[arg(long)]
    no_mixed: bool,
    /// JSON report path; the text rendering goes to stdout.
    #[arg(long)]
    out: PathBuf,
    /// Worst-error table path.
    #[arg(long)]
    errors: Option<PathBuf>,
}

fn parse_corpus_spec(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((tag, path)) if !tag.is_empty() && !path.is_empty() => Ok((tag.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected TAG=PATH, got {s:?}")),
    }
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    if s == "default" {
        return Ok(Grid(DEFAULT_GRID.to_vec()));
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad penalty {v:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Grid)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    command: &'a Command,
    outputs: Vec<String>,
}

/// Output paths, relocated under `FACTPROBE_OUT_DIR` when it is set and the
/// path is relative.
struct Outputs {
    base: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn from_env() -> Self {
        Outputs { base: std::env::var_os(OUT_DIR_ENV).map(PathBuf::from), written: Vec::new() }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn create(&mut self, p: &Path) -> Result<BufWriter<File>, CliError> {
        let path = self.resolve(p);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        // as given, so relocated reruns produce the same manifest
        self.written.push(p.to_path_buf());
        Ok(BufWriter::new(f))
    }

    fn write_manifest(&mut self, first: &Path, seed: u64, command: &Command) -> Result<(), CliError> {
        let mut name = first.as_os_str().to_owned();
        name.push(".manifest.json");
        let manifest = Manifest {
            tool: "factprobe",
            version: env!("CARGO_PKG_VERSION"),
            seed,
            command,
            outputs: self.written.iter().map(|p| p.display().to_string()).collect(),
        };
        let mut w = self.create(Path::new(&name))?;
        serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::validation(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(Path::new(&name), e))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn flush(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn first_line(path: &Path) -> Result<String, CliError> {
    use std::io::BufRead;
    let mut line = String::new();
    open(path)?.read_line(&mut line).map_err(|e| CliError::io(path, e))?;
    Ok(line.trim_end_matches(['\r', '\n']).to_string())
}

/// Examples from either a dataset TSV or a corpus TSV, told apart by header.
/// Unlabelled dataset rows are allowed only when `need_gold` is false; they
/// carry a zero gold that no prediction path reads.
fn load_examples(path: &Path, tag: &str, need_gold: bool) -> Result<Vec<FactualityExample>, CliError> {
    let header = first_line(path)?;
    if header == CORPUS_COLUMNS.join("\t") {
        let mut ex = read_corpus(open(path)?).map_err(|e| CliError::from(e).in_file(path))?;
        for e in &mut ex {
            e.dataset_tag = tag.to_string();
        }
        return Ok(ex);
    }
    if header != DATASET_COLUMNS.join("\t") {
        return Err(CliError::validation(format!(
            "{}: header matches neither the dataset nor the corpus format",
            path.display()
        )));
    }
    let rows = read_dataset(open(path)?).map_err(|e| CliError::from(e).in_file(path))?;
    rows.iter()
        .map(|row| {
            let rendered = row.to_rendered().map_err(|e| CliError::from(e).in_file(path))?;
            let gold = match (row.gold_factuality, need_gold) {
                (Some(g), _) => g,
                (None, false) => 0.0,
                (None, true) => {
                    return Err(CliError::validation(format!(
                        "{}: {} has no gold factuality",
                        path.display(),
                        row.sentence_id
                    )))
                }
            };
            FactualityExample::new(row.sentence_id.clone(), rendered.to_input(), gold, tag)
                .map_err(|e| CliError::from(e).in_file(path))
        })
        .collect()
}

/// The embedding verb heads every frame's dependency tree.
fn verb_position(ex: &FactualityExample) -> usize {
    ex.input.tree.root()
}

fn load_model(path: &Path) -> Result<MultiTaskModel, CliError> {
    MultiTaskModel::load(open(path)?).map_err(|e| CliError::from(e).in_file(path))
}

fn read_predictions(path: &Path) -> Result<PredictionMatrix, CliError> {
    PredictionMatrix::read_tsv(open(path)?).map_err(|e| CliError::from(e).in_file(path))
}

fn write_json<T: Serialize>(out: &mut Outputs, path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = out.create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::validation(e.to_string()))?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    flush(w, path)
}

fn generate(a: &GenerateArgs, out: &mut Outputs) -> Result<(), CliError> {
    let pairs = read_verb_inventory(open(&a.verbs)?).map_err(|e| CliError::from(e).in_file(&a.verbs))?;
    let sentences = generate_dataset(&pairs)?;
    let rows: Vec<DatasetRow> = sentences
        .iter()
        .map(|s| {
            let gold = a.rule_labels.then(|| rule_label(signature_of(&s.verb), s.polarity));
            DatasetRow::from_rendered(s, gold)
        })
        .collect();
    let mut w = out.create(&a.out)?;
    write_dataset(&mut w, &rows)?;
    flush(w, &a.out)?;
    println!("{} sentences from {} pairs", rows.len(), pairs.len());
    Ok(())
}

fn normalize(a: &NormalizeArgs, out: &mut Outputs) -> Result<(), CliError> {
    let records = read_annotations(open(&a.annotations)?).map_err(|e| CliError::from(e).in_file(&a.annotations))?;
    let mut rows = read_dataset(open(&a.data)?).map_err(|e| CliError::from(e).in_file(&a.data))?;
    let items = if a.raw_means { raw_mean_scores(&records) } else { normalize_responses(&records)? };
    let scores: BTreeMap<&str, f64> = items.iter().map(|i| (i.sentence_id.as_str(), i.factuality)).collect();
    let known: BTreeSet<&str> = rows.iter().map(|r| r.sentence_id.as_str()).collect();
    if let Some(id) = scores.keys().find(|id| !known.contains(*id)) {
        return Err(CliError::validation(format!("annotated sentence {id} is not in {}", a.data.display())));
    }
    let mut missing = 0;
    for row in &mut rows {
        row.gold_factuality = scores.get(row.sentence_id.as_str()).copied();
        missing += usize::from(row.gold_factuality.is_none());
    }
    if missing > 0 {
        warn!("{missing} sentences have no annotations and stay unlabelled");
    }
    let mut w = out.create(&a.out)?;
    write_dataset(&mut w, &rows)?;
    flush(w, &a.out)?;
    println!("{} of {} sentences labelled", rows.len() - missing, rows.len());
    Ok(())
}

fn train(a: &TrainArgs, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let mut corpora = BTreeMap::new();
    for (tag, path) in &a.corpora {
        if corpora.insert(tag.clone(), load_examples(path, tag, true)?).is_some() {
            return Err(CliError::validation(format!("corpus tag {tag} given twice")));
        }
    }
    let mut model = ModelConfig::new(a.model.into());
    if let Some(e) = a.embedding_dim {
        model.embedding_dim = e;
    }
    if let Some(h) = a.hidden_dim {
        model = model.with_dims(model.embedding_dim, h);
    }
    if let Some(l) = a.layers {
        model.layers = l;
    }
    let mut cfg = TrainConfig::new(model);
    cfg.seed = seed;
    cfg.shuffle = !a.no_shuffle;
    cfg.dev_fraction = a.dev_fraction;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    let (trained, logs) = train_multitask(&corpora, cfg)?;
    let mut w = out.create(&a.out)?;
    trained.save(&mut w)?;
    flush(w, &a.out)?;
    if let Some(log_path) = &a.log {
        let mut w = out.create(log_path)?;
        write_log(&mut w, &logs)?;
        flush(w, log_path)?;
    }
    if let Some(last) = logs.last() {
        println!("epoch {} mean loss {:.6}", last.epoch, last.mean_loss);
    }
    Ok(())
}

fn predict(a: &PredictArgs, ablate: bool, out: &mut Outputs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let data = load_examples(&a.data, "", false)?;
    let m = if ablate { predict_unk_ablated(&model, &data, verb_position)? } else { predict_all(&model, &data)? };
    let mut w = out.create(&a.out)?;
    m.write_tsv(&mut w)?;
    flush(w, &a.out)?;
    println!("{} rows x {} columns", m.nrows(), m.ncols());
    Ok(())
}

fn gold_by_id(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    Ok(load_examples(path, "", true)?.into_iter().map(|e| (e.id, e.gold)).collect())
}

fn aligned_gold(m: &PredictionMatrix, gold: &BTreeMap<String, f64>, source: &Path) -> Result<Vec<f64>, CliError> {
    m.row_ids()
        .iter()
        .map(|id| {
            gold.get(id)
                .copied()
                .ok_or_else(|| CliError::validation(format!("{}: no gold for {id}", source.display())))
        })
        .collect()
}

fn ensemble(a: &EnsembleArgs, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let mut m = read_predictions(&a.predictions[0])?;
    for p in &a.predictions[1..] {
        m = m.hconcat(&read_predictions(p)?).map_err(|e| CliError::from(e).in_file(p))?;
    }
    let gold = aligned_gold(&m, &gold_by_id(&a.gold)?, &a.gold)?;
    let cfg = NestedCvConfig {
        grid: a.grid.0.clone(),
        k_outer: a.k_outer,
        k_inner: a.k_inner,
        seed,
        bootstrap_iterations: a.bootstrap,
    };
    let report = nested_cv(&m, &gold, &cfg)?;
    write_json(out, &a.out, &report)?;
    print!("{}", report.render_text());
    Ok(())
}

fn run_cca(a: &CcaArgs, out: &mut Outputs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    let data = load_examples(&a.data, "", false)?;
    let (x, y) = extract_probe_matrices(&model, &data, verb_position, a.ablate)?;
    let result = cca(&x, &y, a.components)?;
    if result.correlations.len() < a.components {
        warn!(
            "{} of {} requested components are identifiable",
            result.correlations.len(),
            a.components
        );
    }
    let mut w = out.create(&a.out)?;
    result.write_csv(&mut w)?;
    flush(w, &a.out)?;
    println!("{} components", result.correlations.len());
    Ok(())
}

fn analyze(a: &AnalyzeArgs, out: &mut Outputs) -> Result<(), CliError> {
    let m = read_predictions(&a.predictions)?;
    let col = match (&a.column, m.ncols()) {
        (Some(name), _) => m.column_by_name(name)?,
        (None, 1) => m.column(0),
        (None, n) => {
            return Err(CliError::validation(format!("{n} prediction columns; choose one with --column")))
        }
    };
    let rows = read_dataset(open(&a.data)?).map_err(|e| CliError::from(e).in_file(&a.data))?;
    let by_id: BTreeMap<&str, &DatasetRow> = rows.iter().map(|r| (r.sentence_id.as_str(), r)).collect();
    let mut obs = Vec::with_capacity(m.nrows());
    let (mut gold, mut sentences) = (Vec::new(), Vec::new());
    for (id, pred) in m.row_ids().iter().zip(&col) {
        let row = by_id
            .get(id.as_str())
            .ok_or_else(|| CliError::validation(format!("{}: no row for {id}", a.data.display())))?;
        let g = row
            .gold_factuality
            .ok_or_else(|| CliError::validation(format!("{}: {id} has no gold factuality", a.data.display())))?;
        obs.push(ErrorObservation {
            abs_error: (g - pred).abs(),
            gold: g,
            polarity: row.polarity,
            frame: row.frame_id.clone(),
            verb: row.verb.clone(),
        });
        gold.push(g);
        sentences.push(row.sentence.clone());
    }
    let opts = ErrorRegressionOptions {
        reference_frame: a.reference_frame.clone(),
        fit_mixed: !a.no_mixed,
        ..ErrorRegressionOptions::default()
    };
    let report = error_regression(&obs, &opts)?;
    let worst = top_errors(m.row_ids(), &sentences, &gold, &col, a.top)?;
    write_json(out, &a.out, &serde_json::json!({ "regression": report, "top_errors": worst }))?;
    let table = render_error_table(&worst);
    if let Some(p) = &a.errors {
        let mut w = out.create(p)?;
        w.write_all(table.as_bytes()).map_err(|e| CliError::io(p, e))?;
        flush(w, p)?;
    }
    print!("{}\n{}", report.render_text(), table);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut out = Outputs::from_env();
    let seed = cli.seed;
    let primary = match &cli.command {
        Command::Generate(a) => {
            generate(a, &mut out)?;
            &a.out
        }
        Command::Normalize(a) => {
            normalize(a, &mut out)?;
            &a.out
        }
        Command::Train(a) => {
            train(a, seed, &mut out)?;
            &a.out
        }
        Command::Predict(a) => {
            predict(a, false, &mut out)?;
            &a.out
        }
        Command::AblateUnk(a) => {
            predict(a, true, &mut out)?;
            &a.out
        }
        Command::Ensemble(a) => {
            ensemble(a, seed, &mut out)?;
            &a.out
        }
        Command::Cca(a) => {
            run_cca(a, &mut out)?;
            &a.out
        }
        Command::Analyze(a) => {
            analyze(a, &mut out)?;
            &a.out
        }
    };
    out.write_manifest(primary, seed, &cli.command)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::validation(e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or(""));
            eprintln!("{}", err.to_json_line());
            return ExitCode::from(err.kind.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
