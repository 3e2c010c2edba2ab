use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::evalmetrics::{advance_memory, evaluate, EvalOptions, EvalReport, Evaluation};
use crate::model::{
    load_checkpoint, save_checkpoint, train_epoch, Adam, LiveNoise, MemoryState, ModelParams, TrainStreams,
};
use crate::numcore::{Rng, RNG_ALGORITHM};
use crate::synthgen::{generate, SynthSpec};
use crate::tgraph::{chronological_split, load_events, write_events, EventStream};
use crate::ummu::{Mode, UmmuConfig, Variant};

/// Chronological train / validation / test pieces of the configured stream.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: EventStream,
    pub val: EventStream,
    pub test: EventStream,
}

pub fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    let stream = match &cfg.data_path {
        Some(p) => load_events(p)?,
        None => generate(&cfg.synth_spec())?,
    };
    let (train, val, test) = chronological_split(&stream, &cfg.split_spec()?)?;
    Ok(Splits { train, val, test })
}

fn eval_noise(seed: u64) -> LiveNoise {
    LiveNoise::new(Mode::Eval, Rng::stream(seed, "augment"), Rng::stream(seed, "dropout"))
}

fn eval_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        k_neg: cfg.k_neg,
        batch_size: cfg.train.batch_size,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fresh memory advanced through `history`, ready to score what follows it.
fn warm_memory(
    params: &ModelParams,
    cfg: &RunConfig,
    n_src: usize,
    n_dst: usize,
    history: &[&EventStream],
) -> Result<MemoryState> {
    let mut memory = MemoryState::new(n_src, n_dst, params.dims().embed_dim);
    let mut noise = eval_noise(cfg.seed);
    for part in history.iter().filter(|p| !p.is_empty()) {
        advance_memory(params, &mut memory, part, cfg.train.batch_size, &cfg.ummu, &mut noise)?;
    }
    Ok(memory)
}

/// Scores `target` after replaying `history`, on the shared evaluation stream.
fn evaluate_after(
    params: &ModelParams,
    cfg: &RunConfig,
    history: &[&EventStream],
    target: &EventStream,
) -> Result<Evaluation> {
    let mut memory = warm_memory(params, cfg, target.n_src(), target.n_dst(), history)?;
    let mut rng = Rng::stream(cfg.seed, "eval");
    evaluate(
        params,
        &mut memory,
        target,
        &eval_options(cfg),
        &cfg.ummu,
        &mut eval_noise(cfg.seed),
        &mut rng,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ap: Option<f64>,
    pub val_mrr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLog {
    pub version: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub parameter_count: usize,
    pub hook_layer: String,
    pub variant: String,
    pub ummu_enabled: bool,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept; `None` means the initial weights.
    pub best_epoch: Option<usize>,
    pub config: serde_json::Value,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainingLog,
}

/// Trains on the train split and keeps the weights with the best validation AP
/// (the last epoch's weights when there is no validation data).
pub fn train_model(cfg: &RunConfig, splits: &Splits) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tc = cfg.train_config();
    let dims = tc.dims(splits.train.feature_dim());
    let mut params = ModelParams::init(dims, &mut Rng::stream(cfg.seed, "init"));
    let mut memory = MemoryState::new(splits.train.n_src(), splits.train.n_dst(), dims.embed_dim);
    let mut adam = Adam::new(tc.learning_rate, params.tensors());
    let mut streams = TrainStreams::new(cfg.seed);

    let mut best = params.clone();
    let mut best_epoch = None;
    let mut best_ap = f64::NEG_INFINITY;
    let mut epochs = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let loss = train_epoch(
            &mut params,
            &mut memory,
            &splits.train,
            &tc,
            &cfg.ummu,
            &mut adam,
            &mut streams,
        )?;
        let val = if splits.val.is_empty() {
            None
        } else {
            Some(evaluate_after(&params, cfg, &[&splits.train], &splits.val)?)
        };
        let val_ap = val.as_ref().map(|v| v.ap);
        if val_ap.is_none_or(|ap| ap > best_ap) {
            best_ap = val_ap.unwrap_or(best_ap);
            best = params.clone();
            best_epoch = Some(epoch);
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_ap,
            val_mrr: val.map(|v| v.mrr),
        });
    }
    let log = TrainingLog {
        version: crate::VERSION.to_string(),
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        parameter_count: best.count(),
        hook_layer: cfg.ummu.hook_layer.to_string(),
        variant: variant_key(&cfg.ummu).to_string(),
        ummu_enabled: cfg.ummu.enabled,
        n_train: splits.train.len(),
        n_val: splits.val.len(),
        n_test: splits.test.len(),
        epochs,
        best_epoch,
        config: cfg.echo(),
    };
    Ok(TrainOutcome { params: best, log })
}

fn variant_key(ummu: &UmmuConfig) -> &'static str {
    if ummu.enabled {
        ummu.variant.key()
    } else {
        DISABLED_KEY
    }
}

/// Report for `params` on the test split after replaying train and validation.
pub fn test_report(params: &ModelParams, cfg: &RunConfig, splits: &Splits) -> Result<EvalReport> {
    if splits.test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let eval = evaluate_after(params, cfg, &[&splits.train, &splits.val], &splits.test)?;
    EvalReport::from_evaluation(
        &eval,
        cfg.n_buckets,
        cfg.k_neg,
        variant_key(&cfg.ummu),
        cfg.seed,
        cfg.echo(),
    )
}

pub const TRAINING_LOG: &str = "training_log.json";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const EVAL_BUCKETS: &str = "eval_buckets.csv";
pub const ABLATION_TABLE: &str = "ablation_table.csv";
pub const ABLATION_REPORT: &str = "ablation_report.json";

/// Writes `training_log.json` and `checkpoint.bin` under `cfg.out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let outcome = train_model(cfg, &splits)?;
    ensure_dir(&cfg.out)?;
    let log = serde_json::to_string_pretty(&outcome.log).expect("log serializes");
    write_text(&cfg.out.join(TRAINING_LOG), &log)?;
    save_checkpoint(cfg.out.join(CHECKPOINT), &outcome.params, cfg.echo())?;
    Ok(outcome)
}

/// Writes `eval_report.json` and `eval_buckets.csv` under `cfg.out`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let dims = cfg.train_config().dims(splits.train.feature_dim());
    let (params, _) = load_checkpoint(checkpoint, &dims)?;
    let report = test_report(&params, cfg, &splits)?;
    ensure_dir(&cfg.out)?;
    report.write(cfg.out.join(EVAL_REPORT), cfg.out.join(EVAL_BUCKETS))?;
    Ok(report)
}

pub const DISABLED_KEY: &str = "disabled";
pub const DISABLED_LABEL: &str = "no UmmU";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub label: String,
    pub report: EvalReport,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub version: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub rows: Vec<AblationRow>,
    pub config: serde_json::Value,
}

impl AblationReport {
    /// Rows are variants; columns are overall AP/MRR then AP/MRR per bucket.
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.report.per_bucket.len());
        let mut out = String::from("variant,label,ap,mrr");
        for b in 0..n {
            let _ = write!(out, ",ap_b{b},mrr_b{b}");
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for row in &self.rows {
            let _ = write!(out, "{},{},{},{}", row.variant, row.label, row.report.ap, row.report.mrr);
            for b in &row.report.per_bucket {
                let _ = write!(out, ",{},{}", opt(b.ap), opt(b.mrr));
            }
            out.push('\n');
        }
        out
    }
}

/// The four augmentation variants followed by the disabled baseline.
pub fn ablation_configs(cfg: &RunConfig) -> Vec<(String, String, RunConfig)> {
    let mut runs: Vec<_> = Variant::ALL
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.ummu.enabled = true;
            c.ummu.variant = v;
            (v.key().to_string(), v.label().to_string(), c)
        })
        .collect();
    let mut off = cfg.clone();
    off.ummu.enabled = false;
    runs.push((DISABLED_KEY.to_string(), DISABLED_LABEL.to_string(), off));
    runs
}

/// Trains and evaluates every variant with the same seed and the same
/// evaluation candidates; writes `ablation_table.csv` and `ablation_report.json`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let mut rows = Vec::new();
    for (variant, label, c) in ablation_configs(cfg) {
        let outcome = train_model(&c, &splits)?;
        let report = test_report(&outcome.params, &c, &splits)?;
        rows.push(AblationRow {
            variant,
            label,
            report,
            best_epoch: outcome.log.best_epoch,
        });
    }
    let report = AblationReport {
        version: crate::VERSION.to_string(),
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        rows,
        config: cfg.echo(),
    };
    ensure_dir(&cfg.out)?;
    write_text(&cfg.out.join(ABLATION_TABLE), &report.to_csv())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&cfg.out.join(ABLATION_REPORT), &json)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSidecar {
    pub version: String,
    pub rng_algorithm: String,
    pub n_events: usize,
    pub spec: SynthSpec,
}

/// `path` with its extension replaced by `.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the generated stream to `path` and its spec next to it.
pub fn cmd_synth(spec: &SynthSpec, path: &Path) -> Result<EventStream> {
    let stream = generate(spec)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_events(&stream, path)?;
    let sidecar = SynthSidecar {
        version: crate::VERSION.to_string(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        n_events: stream.len(),
        spec: spec.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write_text(&sidecar_path(path), &json)?;
    Ok(stream)
}
