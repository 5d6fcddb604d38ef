//! Batch command-line surface. [`run`] parses arguments, executes one
//! command and returns the process exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{load_records, load_streams_dir, synth_corpus, write_records, Record, SynthKind};
use crate::evalkit::{self, masked_probe, normalized_rank, read_records, retrieval_eval, EvalRecord};
use crate::gradcheck::{model_gradcheck, GradCheckOptions, LossProbe};
use crate::model::{AttentionMode, ModelConfig, PoolingStrategy, Transformer};
use crate::objectives::MaskedObjective;
use crate::trainkit::{train, write_loss_curve, Objective, TrainError, TrainRecipe};
use crate::weightops::{compose, layer_similarity, merge_many, Checkpoint, HeadSource, MergeRecipe};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// A failed command with its exit category.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl ToString) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.to_string(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } | TrainError::Diverged { .. } => Self::numeric(e.to_string()),
            _ => Self::data(e),
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::data(e)
            }
        })*
    };
}

data_errors!(
    crate::corpus::CorpusError,
    crate::evalkit::EvalError,
    crate::model::ModelError,
    crate::tensor::TensorError,
    crate::weightops::WeightOpsError,
    crate::weightops::FormatError
);

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "bidir", version, about = "Adapt, merge, compose and evaluate small bidirectional encoders.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus, one record file per domain.
    GenCorpus(GenCorpusArgs),
    /// Train a checkpoint on a corpus directory and write its loss curve.
    Train(TrainArgs),
    /// Weighted average of checkpoints.
    Merge(MergeArgs),
    /// Merge backbones and attach modality heads.
    Compose(ComposeArgs),
    /// Per-layer cosine similarity of two checkpoints.
    Similarity(SimilarityArgs),
    /// Score a checkpoint on a task file and write eval records.
    Eval(EvalArgs),
    /// Average normalized rank over eval records.
    Rank(RankArgs),
    /// Compare analytic and finite-difference gradients of every loss.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// `masking` (plain text) or `contrastive` (pairs with hard negatives).
    #[arg(long)]
    pub kind: String,
    /// Comma-separated domain names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub domains: Vec<String>,
    /// Records per domain.
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory; receives `<domain>.jsonl` per domain.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML recipe. Without it, `--objective` picks the defaults.
    #[arg(long)]
    pub recipe: Option<PathBuf>,
    /// `clm`, `mlm`, `mntp` or `contrastive`; overrides the recipe.
    #[arg(long)]
    pub objective: Option<String>,
    /// Checkpoint path, or `random` for a fresh model.
    #[arg(long)]
    pub init: String,
    /// Model config (TOML or JSON) or `desk`/`tiny`, used with `--init random`.
    #[arg(long, default_value = "desk")]
    pub config: String,
    /// Directory of `*.jsonl` record files. Not needed with `--steps 0`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve path; defaults to the output with a `.loss.jsonl` suffix.
    #[arg(long)]
    pub loss_curve: Option<PathBuf>,
    /// Overrides the recipe's step count.
    #[arg(long)]
    pub steps: Option<usize>,
    /// `causal` or `bidirectional`; overrides the recipe.
    #[arg(long)]
    pub mode: Option<String>,
    /// Overrides the recipe's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// `path:weight` pairs, or bare paths for equal weights.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<String>,
    /// Weight every input equally.
    #[arg(long)]
    pub equal: bool,
    /// Merge only tensors under this name prefix.
    #[arg(long)]
    pub scope: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Backbone checkpoints as `path:weight` pairs or bare paths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub backbones: Vec<String>,
    /// Weight every backbone equally.
    #[arg(long)]
    pub equal: bool,
    /// `modality=path` pairs.
    #[arg(long, value_delimiter = ',')]
    pub heads: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// JSON report path. The table goes to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Record file with text or pair records.
    #[arg(long)]
    pub task_file: PathBuf,
    /// `mntp-loss`, `mlm-loss`, `accuracy`, `ndcg@10` or `spearman`.
    #[arg(long)]
    pub metric: String,
    #[arg(long, default_value = "bidirectional")]
    pub mode: String,
    /// Defaults to `last_token` for causal and `mean` for bidirectional.
    #[arg(long)]
    pub pooling: Option<String>,
    /// Task name in the records; defaults to `<task file stem>/<metric>`.
    #[arg(long)]
    pub task: Option<String>,
    /// Model name in the records; defaults to the model file stem.
    #[arg(long)]
    pub name: Option<String>,
    /// Queries per retrieval group.
    #[arg(long, default_value_t = 16)]
    pub group_size: usize,
    #[arg(long, default_value_t = 0.2)]
    pub mask_ratio: f64,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output record file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Comma-separated record files.
    #[arg(long, value_delimiter = ',', required = true)]
    pub records: Vec<PathBuf>,
    /// `.tsv` for a table, anything else for JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Model config (TOML or JSON) or `desk`/`tiny`.
    #[arg(long, default_value = "tiny")]
    pub config: String,
    /// Largest relative error allowed.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Coordinates sampled per tensor; 0 checks all of them.
    #[arg(long, default_value_t = 16)]
    pub coords: usize,
    #[arg(long, default_value_t = 8)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Errors are printed to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train_cmd(a),
        Command::Merge(a) => merge_cmd(a),
        Command::Compose(a) => compose_cmd(a),
        Command::Similarity(a) => similarity_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Rank(a) => rank_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    }
}

fn write_file(path: &Path, body: &str) -> CliResult {
    std::fs::write(path, body).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    use crate::weightops::FormatError;
    Checkpoint::load(path).map_err(|e| match e {
        FormatError::Io { .. } => CliError::data(e),
        e => CliError::data(format!("{}: {e}", path.display())),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn gen_corpus(a: GenCorpusArgs) -> CliResult {
    let kind: SynthKind = a.kind.parse().map_err(|e| CliError::usage(format!("--kind: {e}")))?;
    let domains: Vec<&str> = a.domains.iter().map(String::as_str).collect();
    let streams = synth_corpus(kind, &domains, a.size, a.seed)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    for s in &streams {
        let path = a.out.join(format!("{}.jsonl", s.domain()));
        write_records(&path, std::slice::from_ref(s))?;
        println!("{}\t{} records", path.display(), s.len());
    }
    Ok(())
}

/// `desk`, `tiny`, or a TOML/JSON file holding a model config.
pub fn load_model_config(spec: &str) -> CliResult<ModelConfig> {
    let config = match spec {
        "desk" => ModelConfig::desk(),
        "tiny" => ModelConfig::tiny(),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{path}: {e}")))?;
            let parsed = if path.ends_with(".json") {
                serde_json::from_str(&text).map_err(|e| e.to_string())
            } else {
                toml::from_str(&text).map_err(|e| e.to_string())
            };
            parsed.map_err(|e| CliError::data(format!("{path}: {e}")))?
        }
    };
    config.validate()?;
    Ok(config)
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let mut recipe = match (&a.recipe, &a.objective) {
        (Some(p), _) => TrainRecipe::load(p)?,
        (None, Some(o)) => TrainRecipe::new(o.parse().map_err(|e: TrainError| CliError::usage(e.to_string()))?),
        (None, None) if a.steps == Some(0) => TrainRecipe::new(Objective::Mntp),
        (None, None) => return Err(CliError::usage("give --recipe or --objective")),
    };
    if let (Some(_), Some(o)) = (&a.recipe, &a.objective) {
        recipe.objective = o.parse().map_err(|e: TrainError| CliError::usage(e.to_string()))?;
        recipe.mode = recipe.objective.mode();
    }
    if let Some(steps) = a.steps {
        recipe = recipe.with_steps(steps);
    }
    if let Some(seed) = a.seed {
        recipe.seed = seed;
    }
    if let Some(m) = &a.mode {
        recipe.mode = m.parse().map_err(|e: String| CliError::usage(format!("--mode: {e}")))?;
    }
    let curve_path = a.loss_curve.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".loss.jsonl");
        p.into()
    });

    let init = if a.init == "random" {
        Checkpoint::from_model(&Transformer::<f32>::new(load_model_config(&a.config)?, recipe.seed)?)
    } else {
        load_checkpoint(Path::new(&a.init))?
    };
    if recipe.steps == 0 {
        // Nothing to learn: the output is the input, byte for byte.
        init.save(&a.out)?;
        write_loss_curve(&curve_path, &[])?;
        println!("{}\t0 steps", a.out.display());
        return Ok(());
    }
    recipe.validate()?;
    let dir = a.corpus.as_ref().ok_or_else(|| CliError::usage("--corpus is required when training"))?;
    let corpus = load_streams_dir(dir)?;
    let outcome = train(&init.to_model::<f32>()?, &recipe, &corpus)?;
    let mut out = Checkpoint::from_model(&outcome.model);
    out.metadata = init.metadata.clone();
    out.metadata.insert("train.objective".into(), recipe.objective.to_string());
    out.metadata.insert("train.mode".into(), recipe.mode.to_string());
    out.metadata.insert("train.steps".into(), recipe.steps.to_string());
    out.metadata.insert("train.seed".into(), recipe.seed.to_string());
    out.metadata.insert("train.plan".into(), outcome.plan_fingerprint.clone());
    out.save(&a.out)?;
    write_loss_curve(&curve_path, &outcome.curve)?;
    let last = outcome.curve.last().map(|p| p.loss).unwrap_or(f64::NAN);
    println!("{}\t{} steps\tfinal loss {last:.6}", a.out.display(), recipe.steps);
    Ok(())
}

/// Parses `path:weight` or bare `path` entries. Bare entries, or `equal`,
/// give every input the same weight; mixing the two forms is an error.
pub fn parse_weighted(entries: &[String], equal: bool) -> CliResult<Vec<(PathBuf, f64)>> {
    let mut out = Vec::new();
    let mut weighted = 0;
    for e in entries {
        match e.rsplit_once(':') {
            Some((path, w)) if !equal => {
                let w: f64 = w
                    .parse()
                    .map_err(|_| CliError::usage(format!("bad weight in {e:?}; expected path:weight")))?;
                weighted += 1;
                out.push((PathBuf::from(path), w));
            }
            _ => out.push((PathBuf::from(e), f64::NAN)),
        }
    }
    if weighted == 0 {
        let w = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|(_, x)| *x = w);
    } else if weighted != out.len() {
        return Err(CliError::usage("give a weight for every input or for none"));
    }
    Ok(out)
}

fn merge_recipe(entries: &[String], equal: bool) -> CliResult<MergeRecipe> {
    let inputs = parse_weighted(entries, equal)?
        .into_iter()
        .map(|(p, w)| Ok((load_checkpoint(&p)?, w)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(MergeRecipe::new(inputs))
}

fn merge_cmd(a: MergeArgs) -> CliResult {
    let mut recipe = merge_recipe(&a.inputs, a.equal)?;
    if let Some(s) = a.scope {
        recipe = recipe.with_scope(s);
    }
    let merged = merge_many(&recipe)?;
    merged.save(&a.out)?;
    println!("{}\t{} tensors", a.out.display(), merged.len());
    Ok(())
}

fn compose_cmd(a: ComposeArgs) -> CliResult {
    let backbones = merge_recipe(&a.backbones, a.equal)?;
    let heads = a
        .heads
        .iter()
        .map(|h| {
            let (modality, path) = h
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("bad head {h:?}; expected modality=path")))?;
            Ok(HeadSource {
                checkpoint: load_checkpoint(Path::new(path))?,
                modality: modality.to_string(),
                label: path.to_string(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let out = compose(&backbones, &heads)?;
    out.save(&a.out)?;
    println!("{}\t{} tensors", a.out.display(), out.len());
    Ok(())
}

fn similarity_cmd(a: SimilarityArgs) -> CliResult {
    let report = layer_similarity(&load_checkpoint(&a.a)?, &load_checkpoint(&a.b)?)?;
    print!("{}", report.to_table());
    if let Some(p) = a.report {
        write_file(&p, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    Ok(())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let mode: AttentionMode = a.mode.parse().map_err(|e: String| CliError::usage(format!("--mode: {e}")))?;
    let pooling = match &a.pooling {
        Some(p) => p.parse().map_err(|e: String| CliError::usage(format!("--pooling: {e}")))?,
        None => PoolingStrategy::default_for(mode),
    };
    let model: Transformer<f32> = load_checkpoint(&a.model)?.to_model()?;
    let records: Vec<Record> = load_records(&a.task_file)?.into_iter().map(|r| r.record).collect();
    let texts: Vec<&str> = records.iter().filter_map(Record::as_text).collect();
    let pairs: Vec<_> = records.iter().filter_map(|r| r.as_pair().cloned()).collect();
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(CliError::data(format!(
                "{}: metric {} needs {what} records",
                a.task_file.display(),
                a.metric
            )))
        }
    };
    let (score, metric) = match a.metric.as_str() {
        "mntp-loss" | "mlm-loss" => {
            need(!texts.is_empty(), "text")?;
            let objective = if a.metric == "mntp-loss" {
                MaskedObjective::Mntp
            } else {
                MaskedObjective::Mlm
            };
            let probe = masked_probe(&model, &texts, objective, mode, a.mask_ratio, a.seed, a.max_len)?;
            (-probe.mean_loss, format!("neg-{}", a.metric))
        }
        "accuracy" | "ndcg@10" => {
            need(!pairs.is_empty(), "pair")?;
            let r = retrieval_eval(&model, &pairs, mode, pooling, a.group_size, a.max_len)?;
            let v = if a.metric == "accuracy" { r.accuracy } else { r.ndcg_at_10 };
            (v, a.metric.clone())
        }
        "spearman" => {
            let scored: Vec<_> = records
                .iter()
                .filter_map(|r| match r {
                    Record::Pair {
                        sample,
                        score: Some(s),
                        ..
                    } => Some((sample, *s)),
                    _ => None,
                })
                .collect();
            need(scored.len() >= 2, "scored pair")?;
            let embed = |s: &str| -> CliResult<Vec<f64>> {
                let e = model.embed(&crate::vocab::encode(s, a.max_len), mode, pooling)?;
                Ok(e.iter().map(|&x| x as f64).collect())
            };
            let mut sims = Vec::new();
            for (p, _) in &scored {
                sims.push(cosine(&embed(&p.anchor)?, &embed(&p.positive)?));
            }
            let gold: Vec<f64> = scored.iter().map(|(_, s)| *s).collect();
            (evalkit::spearman(&sims, &gold)?, a.metric.clone())
        }
        m => {
            return Err(CliError::usage(format!(
                "unknown metric {m:?} (expected mntp-loss, mlm-loss, accuracy, ndcg@10 or spearman)"
            )))
        }
    };
    if !score.is_finite() {
        return Err(CliError::numeric(format!("metric {} is not finite", a.metric)));
    }
    let record = EvalRecord {
        metric: Some(metric),
        ..EvalRecord::new(
            a.task.unwrap_or_else(|| format!("{}/{}", stem(&a.task_file), a.metric)),
            a.name.unwrap_or_else(|| stem(&a.model)),
            score,
        )
    };
    evalkit::write_records(&a.out, std::slice::from_ref(&record))?;
    println!("{}\t{}\t{}\t{:.6}", record.task, record.model, a.metric, record.score);
    Ok(())
}

fn rank_cmd(a: RankArgs) -> CliResult {
    let mut records = Vec::new();
    for p in &a.records {
        records.extend(read_records(p)?);
    }
    let table = normalized_rank(&records)?;
    let tsv = table.to_tsv();
    print!("{tsv}");
    let body = if a.out.extension().is_some_and(|e| e == "tsv") {
        tsv
    } else {
        table.to_json()
    };
    write_file(&a.out, &body)
}

#[derive(Serialize)]
struct GradcheckLine {
    loss: &'static str,
    max_rel_error: f64,
    max_abs_error: f64,
    coords_checked: usize,
    passed: bool,
}

fn gradcheck_cmd(a: GradcheckArgs) -> CliResult {
    if !(a.tol > 0.0) {
        return Err(CliError::usage("--tol must be positive"));
    }
    let model = Transformer::<f64>::new(load_model_config(&a.config)?, a.seed)?;
    let opts = GradCheckOptions {
        tolerance: a.tol,
        seed: a.seed,
        max_coords_per_tensor: (a.coords > 0).then_some(a.coords),
        ..GradCheckOptions::default()
    };
    let mut lines = Vec::new();
    for loss in LossProbe::ALL {
        let r = model_gradcheck(&model, loss, a.seq_len, opts)?;
        println!(
            "{}\tmax rel {:.3e}\tmax abs {:.3e}\t{} coords\t{}",
            loss.name(),
            r.max_rel_error,
            r.max_abs_error,
            r.coords_checked,
            if r.passed { "pass" } else { "FAIL" }
        );
        lines.push(GradcheckLine {
            loss: loss.name(),
            max_rel_error: r.max_rel_error,
            max_abs_error: r.max_abs_error,
            coords_checked: r.coords_checked,
            passed: r.passed,
        });
    }
    if let Some(p) = a.report {
        write_file(&p, &serde_json::to_string_pretty(&lines).expect("report serializes"))?;
    }
    match lines.iter().find(|l| !l.passed) {
        Some(l) => Err(CliError::numeric(format!(
            "{} gradient relative error {:.3e} exceeds {:.1e}",
            l.loss, l.max_rel_error, a.tol
        ))),
        None => Ok(()),
    }
}
