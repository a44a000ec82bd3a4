//! File-level stages: ingestion, view building, training, evaluation and
//! sweeps, each reading a [`RunConfig`] and writing under its output dir.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::{
    eval_negatives, interactions, leave_one_out, load_labels, majority_labels, stratified_split, LabelSet, RecSplit,
};
use crate::error::{Error, Result};
use crate::eval::{classify_eval, rank_eval, text_table, ClassificationReport, RankingReport, CLASSIFIER_NAME, RANK_CUTOFFS};
use crate::graph::{load_schema, parse_snapshots, Schema, SnapshotSeries};
use crate::model::{Model, ModelConfig, TaskKind};
use crate::nn::{seeded_rng, AdamState, ParamStore};
use crate::trainer::{trace_csv, EpochLoss, Hyperparams, Supervision, TrainState, Trainer};
use crate::views::{build_views, parse_metapath, views_from_cache_bytes, views_to_cache_bytes, ViewSeries};

pub const CHECKPOINT: &str = "checkpoint.bin";
pub const LAST: &str = "last.bin";
pub const OPTIMIZER: &str = "optimizer.bin";
pub const TRAIN_STATE: &str = "train_state.json";
pub const LOSS_TRACE: &str = "loss_trace.csv";
pub const METADATA: &str = "metadata.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn short(hash: &str) -> &str {
    &hash[..16]
}

fn sha_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Hash of the schema, edge and label file contents.
pub fn data_hash(cfg: &RunConfig) -> Result<String> {
    let schema = read(&cfg.resolve(&cfg.schema))?;
    let edges = read(&cfg.resolve(&cfg.edges))?;
    let labels = match &cfg.labels {
        Some(l) => read(&cfg.resolve(l))?,
        None => Vec::new(),
    };
    Ok(sha_hex(&[&schema, &edges, &labels]))
}

/// Parses the inputs, or reads the snapshot cache when one exists for the
/// same file contents. Returns the series and the cache path.
pub fn load_series(cfg: &RunConfig) -> Result<(SnapshotSeries, PathBuf)> {
    let schema_path = cfg.resolve(&cfg.schema);
    let edges_path = cfg.resolve(&cfg.edges);
    let schema_bytes = read(&schema_path)?;
    let edge_bytes = read(&edges_path)?;
    let key = sha_hex(&[&schema_bytes, &edge_bytes]);
    let cache = cfg.cache_dir().join(format!("snapshots-{}.bin", short(&key)));
    if cache.is_file() {
        if let Ok(s) = SnapshotSeries::from_cache_bytes(&read(&cache)?, &cache) {
            return Ok((s, cache));
        }
        log::warn!("ignoring unreadable cache {}", cache.display());
    }
    let schema = load_schema(&schema_path)?;
    let text = String::from_utf8(edge_bytes).map_err(|_| Error::Format {
        path: edges_path.clone(),
        msg: "not UTF-8".into(),
    })?;
    let series = parse_snapshots(&schema, &text, &edges_path)?;
    write(&cache, series.to_cache_bytes())?;
    Ok((series, cache))
}

/// Parses the inputs and (re)writes the snapshot cache and a stats file.
pub fn ingest(cfg: &RunConfig) -> Result<(SnapshotSeries, PathBuf, String)> {
    let schema_path = cfg.resolve(&cfg.schema);
    let edges_path = cfg.resolve(&cfg.edges);
    let schema = load_schema(&schema_path)?;
    let edge_bytes = read(&edges_path)?;
    let key = sha_hex(&[&read(&schema_path)?, &edge_bytes]);
    let text = String::from_utf8(edge_bytes).map_err(|_| Error::Format {
        path: edges_path.clone(),
        msg: "not UTF-8".into(),
    })?;
    let series = parse_snapshots(&schema, &text, &edges_path)?;
    let cache = cfg.cache_dir().join(format!("snapshots-{}.bin", short(&key)));
    write(&cache, series.to_cache_bytes())?;
    let stats = series.stats();
    write(&cfg.output_dir().join("stats.txt"), &stats)?;
    Ok((series, cache, stats))
}

/// Task data derived from the inputs.
#[derive(Debug, Clone)]
pub enum TaskData {
    Classification { labels: LabelSet },
    Recommendation { split: RecSplit, negatives: Vec<Vec<usize>> },
}

/// Everything a run needs before the model exists.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub series: SnapshotSeries,
    pub views: Vec<ViewSeries>,
    pub anchors: Vec<usize>,
    pub task: TaskData,
    pub supervision: Supervision,
    pub data_hash: String,
}

impl Prepared {
    pub fn model_config(&self, hp: &Hyperparams) -> ModelConfig {
        ModelConfig {
            dim: hp.dim,
            cell: hp.cell,
            fusion: hp.fusion,
            n_classes: match &self.task {
                TaskData::Classification { labels } => Some(labels.n_classes()),
                TaskData::Recommendation { .. } => None,
            },
            seed: hp.seed,
        }
    }

    pub fn new_model(&self, hp: &Hyperparams) -> Result<Model> {
        Model::new(&self.views, &self.anchors, self.model_config(hp))
    }

    pub fn schema(&self) -> &Schema {
        self.series.schema()
    }
}

fn window(series: &SnapshotSeries, history: usize) -> Result<SnapshotSeries> {
    if history + 1 > series.len() {
        return Err(Error::Invalid(format!(
            "history {history} needs {} snapshots, the data has {}",
            history + 1,
            series.len()
        )));
    }
    series.truncate_front(history + 1)
}

/// Builds the views over the last `history + 1` snapshots of `series`,
/// reusing a cache keyed by the data, task, view list and window.
pub fn cached_views(cfg: &RunConfig, hash: &str, series: &SnapshotSeries) -> Result<Vec<ViewSeries>> {
    let key = sha_hex(&[
        hash.as_bytes(),
        cfg.task.to_string().as_bytes(),
        cfg.interaction.as_deref().unwrap_or("").as_bytes(),
        cfg.views.join("\n").as_bytes(),
        &(cfg.hyper.history as u64).to_le_bytes(),
    ]);
    let path = cfg.cache_dir().join(format!("views-{}.bin", short(&key)));
    if path.is_file() {
        if let Ok(v) = views_from_cache_bytes(&read(&path)?, series.schema(), &path) {
            if v.len() == cfg.views.len() {
                return Ok(v);
            }
        }
        log::warn!("ignoring unreadable cache {}", path.display());
    }
    let windowed = window(series, cfg.hyper.history)?;
    let views = build_views(&windowed, &cfg.views)?;
    write(&path, views_to_cache_bytes(&views))?;
    Ok(views)
}

fn negatives_file(split: &RecSplit, negatives: &[Vec<usize>]) -> String {
    let u = split.train.universe();
    let mut s = String::new();
    for (user, negs) in negatives.iter().enumerate() {
        if negs.is_empty() {
            continue;
        }
        let items: Vec<&str> = negs.iter().map(|&i| u.id(split.item_type, i)).collect();
        writeln!(s, "{}\t{}", u.id(split.user_type, user), items.join(",")).unwrap();
    }
    s
}

fn parse_negatives(text: &str, split: &RecSplit, path: &Path) -> Result<Vec<Vec<usize>>> {
    let u = split.train.universe();
    let mut out = vec![Vec::new(); split.n_users];
    for (n, line) in text.lines().enumerate() {
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: msg.to_string(),
        };
        let (user, items) = line.split_once('\t').ok_or_else(|| bad("expected user<TAB>items"))?;
        let ui = u.lookup(split.user_type, user).ok_or_else(|| bad("unknown user"))?;
        out[ui] = items
            .split(',')
            .map(|i| u.lookup(split.item_type, i).ok_or_else(|| bad("unknown item")))
            .collect::<Result<_>>()?;
    }
    Ok(out)
}

/// The shared ranking negatives, persisted in the cache so that every run
/// over the same data and evaluation seed ranks against the same lists.
pub fn shared_negatives(cfg: &RunConfig, hash: &str, split: &RecSplit) -> Result<Vec<Vec<usize>>> {
    let hp = &cfg.hyper;
    let key = sha_hex(&[
        hash.as_bytes(),
        cfg.interaction.as_deref().unwrap_or("").as_bytes(),
        &hp.eval_seed.to_le_bytes(),
        &(hp.eval_negatives as u64).to_le_bytes(),
    ]);
    let path = cfg.cache_dir().join(format!("negatives-{}.tsv", short(&key)));
    if path.is_file() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        return parse_negatives(&text, split, &path);
    }
    let negs = eval_negatives(split, hp.eval_negatives, hp.eval_seed)?;
    write(&path, negatives_file(split, &negs))?;
    Ok(negs)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    cfg.check_inputs()?;
    let hash = data_hash(cfg)?;
    let (series, _) = load_series(cfg)?;
    let schema = series.schema().clone();
    let hp = &cfg.hyper;
    match cfg.task {
        TaskKind::Classification => {
            let labels = match (&cfg.labels, &cfg.label_path) {
                (Some(path), _) => {
                    let anchor = match &cfg.anchor {
                        Some(name) => schema
                            .node_type_id(name)
                            .ok_or_else(|| Error::Invalid(format!("unknown anchor type `{name}`")))?,
                        None => parse_metapath(&cfg.views[0], &schema)?.anchor_type(),
                    };
                    load_labels(&cfg.resolve(path), series.universe(), anchor)?
                }
                (None, Some(spec)) => majority_labels(&series, &parse_metapath(spec, &schema)?)?,
                (None, None) => {
                    return Err(Error::Invalid(
                        "classification needs `labels` or `label_path`".into(),
                    ))
                }
            };
            let views = cached_views(cfg, &hash, &series)?;
            let n = series.universe().count(labels.node_type);
            let mut rng = seeded_rng(hp.seed);
            rng.set_stream(u64::MAX);
            let (train, val) = stratified_split(&labels, hp.val_fraction, &mut rng);
            let mut per_node = vec![None; n];
            for &p in &train {
                per_node[labels.nodes[p]] = Some(labels.classes[p]);
            }
            let val = val.iter().map(|&p| (labels.nodes[p], labels.classes[p])).collect();
            Ok(Prepared {
                anchors: vec![labels.node_type],
                supervision: Supervision::Classification { labels: per_node, val },
                task: TaskData::Classification { labels },
                views,
                series,
                data_hash: hash,
            })
        }
        TaskKind::Recommendation => {
            let name = cfg.interaction.as_deref().expect("validated");
            let edge = schema
                .edge_type_id(name)
                .ok_or_else(|| Error::Invalid(format!("unknown interaction edge type `{name}`")))?;
            let split = leave_one_out(&series, edge)?;
            let views = cached_views(cfg, &hash, &split.train)?;
            let windowed = window(&split.train, hp.history)?;
            let positives = interactions(&windowed, edge, split.n_users);
            let negatives = shared_negatives(cfg, &hash, &split)?;
            let supervision = Supervision::Recommendation {
                positives,
                known: split.known.clone(),
                n_items: split.n_items,
                val: split.val_pairs(),
                val_negatives: negatives.clone(),
            };
            Ok(Prepared {
                anchors: vec![split.user_type, split.item_type],
                supervision,
                task: TaskData::Recommendation { split, negatives },
                views,
                series,
                data_hash: hash,
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SavedState {
    epochs_done: usize,
    best_epoch: usize,
    best_metric: Option<f64>,
    trace: Vec<EpochLoss>,
}

/// Key=value description of a run, sufficient to repeat it.
pub fn metadata(cfg: &RunConfig, prep: &Prepared, model: &Model) -> String {
    let hp = &cfg.hyper;
    let schema = prep.schema();
    let mut m = String::new();
    let mut kv = |k: &str, v: String| writeln!(m, "{k}={v}").unwrap();
    kv("version", env!("CARGO_PKG_VERSION").to_string());
    kv("task", cfg.task.to_string());
    kv("views", cfg.views.join(";"));
    kv(
        "anchors",
        prep.anchors
            .iter()
            .map(|&a| schema.node_type_name(a).to_string())
            .collect::<Vec<_>>()
            .join(";"),
    );
    kv("interaction", cfg.interaction.clone().unwrap_or_default());
    kv("schema", cfg.resolve(&cfg.schema).display().to_string());
    kv("edges", cfg.resolve(&cfg.edges).display().to_string());
    kv(
        "labels",
        cfg.labels
            .as_ref()
            .map(|l| cfg.resolve(l).display().to_string())
            .unwrap_or_default(),
    );
    kv("label_path", cfg.label_path.clone().unwrap_or_default());
    kv("data_hash", prep.data_hash.clone());
    kv("dim", hp.dim.to_string());
    kv("history", hp.history.to_string());
    kv("alpha", hp.alpha.to_string());
    kv("beta", hp.beta.to_string());
    kv("lr", hp.lr.to_string());
    kv("batch_size", hp.batch_size.to_string());
    kv("epochs", hp.epochs.to_string());
    kv("neg_per_pos", hp.neg_per_pos.to_string());
    kv("eval_negatives", hp.eval_negatives.to_string());
    kv("seed", hp.seed.to_string());
    kv("eval_seed", hp.eval_seed.to_string());
    kv("cell", hp.cell.to_string());
    kv("fusion", hp.fusion.to_string());
    kv("workers", hp.workers.to_string());
    kv("val_fraction", hp.val_fraction.to_string());
    kv(
        "train_fractions",
        cfg.train_fractions.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
    );
    kv("repetitions", cfg.repetitions.to_string());
    kv("classifier", CLASSIFIER_NAME.to_string());
    kv("n_parameters", model.store.num_scalars().to_string());
    m
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub trace: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub output_dir: PathBuf,
    pub model: Model,
}

fn save_progress(dir: &Path, model_last: &ParamStore, state: &TrainState) -> Result<()> {
    state.best.save(&dir.join(CHECKPOINT))?;
    model_last.save(&dir.join(LAST))?;
    state.adam.to_store(model_last).save(&dir.join(OPTIMIZER))?;
    let saved = SavedState {
        epochs_done: state.epochs_done,
        best_epoch: state.best_epoch,
        best_metric: state.best_metric.is_finite().then_some(state.best_metric),
        trace: state.trace.clone(),
    };
    write(&dir.join(TRAIN_STATE), serde_json::to_string_pretty(&saved)?)?;
    write(&dir.join(LOSS_TRACE), trace_csv(&state.trace))
}

fn load_progress(dir: &Path, model: &mut Model) -> Result<TrainState> {
    let last = ParamStore::load(&dir.join(LAST))?;
    model.store.load_from(&last)?;
    let mut best = model.store.clone();
    best.load_from(&ParamStore::load(&dir.join(CHECKPOINT))?)?;
    let opt_path = dir.join(OPTIMIZER);
    let adam = AdamState::from_store(&ParamStore::load(&opt_path)?, &model.store, &opt_path)?;
    let state_path = dir.join(TRAIN_STATE);
    let text = std::fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
    let saved: SavedState = serde_json::from_str(&text)?;
    Ok(TrainState {
        adam,
        epochs_done: saved.epochs_done,
        trace: saved.trace,
        best,
        best_metric: saved.best_metric.unwrap_or(f64::NEG_INFINITY),
        best_epoch: saved.best_epoch,
    })
}

/// Trains per `cfg`, writing the best checkpoint, last parameters,
/// optimizer state, loss trace and metadata after every epoch. With
/// `resume`, continues from a previous run in the same output dir.
pub fn run_train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary> {
    let prep = prepare(cfg)?;
    let out = cfg.output_dir();
    let mut model = prep.new_model(&cfg.hyper)?;
    write(&out.join(METADATA), metadata(cfg, &prep, &model))?;
    write(&out.join("config.json"), cfg.to_json())?;
    let state = if resume && out.join(TRAIN_STATE).is_file() {
        Some(load_progress(&out, &mut model)?)
    } else {
        None
    };
    let mut trainer = match state {
        Some(s) => Trainer::resume(&mut model, &prep.views, &prep.supervision, cfg.hyper.clone(), s)?,
        None => Trainer::new(&mut model, &prep.views, &prep.supervision, cfg.hyper.clone())?,
    };
    save_progress(&out, trainer.params(), &trainer.state)?;
    while trainer.state.epochs_done < cfg.hyper.epochs {
        trainer.run_epoch()?;
        save_progress(&out, trainer.params(), &trainer.state)?;
    }
    let report = trainer.finish();
    Ok(TrainSummary {
        trace: report.trace,
        best_epoch: report.best_epoch,
        output_dir: out,
        model,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalReport {
    Classification(Vec<ClassificationReport>),
    Ranking(RankingReport),
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        match self {
            EvalReport::Classification(rs) => {
                let mut s = String::from("train_fraction,micro_f1,macro_f1,classifier\n");
                for r in rs {
                    writeln!(s, "{},{:.6},{:.6},{}", r.train_fraction, r.micro_f1, r.macro_f1, r.classifier).unwrap();
                }
                s
            }
            EvalReport::Ranking(r) => r.to_csv(),
        }
    }

    pub fn to_table(&self) -> String {
        match self {
            EvalReport::Classification(rs) => text_table(
                &["train_fraction".into(), "micro_f1".into(), "macro_f1".into()],
                &rs.iter()
                    .map(|r| {
                        vec![
                            format!("{:.1}", r.train_fraction),
                            format!("{:.4}", r.micro_f1),
                            format!("{:.4}", r.macro_f1),
                        ]
                    })
                    .collect::<Vec<_>>(),
            ),
            EvalReport::Ranking(r) => text_table(
                &r.csv_header().split(',').map(str::to_string).collect::<Vec<_>>(),
                &[r.hr.iter().chain(&r.ndcg).map(|v| format!("{v:.4}")).collect()],
            ),
        }
    }

    /// Metric name and value pairs, for sweep tables.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        match self {
            EvalReport::Classification(rs) => rs
                .iter()
                .flat_map(|r| {
                    [
                        (format!("micro_f1@{}", r.train_fraction), r.micro_f1),
                        (format!("macro_f1@{}", r.train_fraction), r.macro_f1),
                    ]
                })
                .collect(),
            EvalReport::Ranking(r) => r
                .csv_header()
                .split(',')
                .map(str::to_string)
                .zip(r.hr.iter().chain(&r.ndcg).copied())
                .collect(),
        }
    }
}

/// Per-node view weights as TSV, one file per anchor type.
pub fn attention_tsv(prep: &Prepared, model: &Model, g: usize) -> Result<String> {
    let group = &model.groups[g];
    let w = model.embed_all(&prep.views, g)?.weights;
    let mut s = String::from("node");
    for &k in &group.views {
        write!(s, "\t{}", prep.views[k].meta_path()).unwrap();
    }
    s.push('\n');
    for (i, row) in w.rows().into_iter().enumerate() {
        s.push_str(prep.series.universe().id(group.anchor_type, i));
        for v in row {
            write!(s, "\t{v}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

/// Scores a trained model with the task protocol.
pub fn evaluate_model(cfg: &RunConfig, prep: &Prepared, model: &Model) -> Result<EvalReport> {
    match &prep.task {
        TaskData::Classification { labels } => {
            let z = model.embed_all(&prep.views, 0)?.z;
            let reports = cfg
                .train_fractions
                .iter()
                .map(|&f| classify_eval(&z, labels, f, cfg.hyper.seed, cfg.repetitions))
                .collect::<Result<Vec<_>>>()?;
            Ok(EvalReport::Classification(reports))
        }
        TaskData::Recommendation { split, negatives } => {
            let users = model.embed_all(&prep.views, 0)?.z;
            let items = model.embed_all(&prep.views, 1)?.z;
            let r = rank_eval(&users, &items, &split.test_pairs(), negatives, &RANK_CUTOFFS)?;
            Ok(EvalReport::Ranking(r))
        }
    }
}

/// Loads `checkpoint` (default: the run's best checkpoint), evaluates it
/// and writes the report files, plus attention dumps when asked.
pub fn run_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, dump_attention: bool) -> Result<EvalReport> {
    let prep = prepare(cfg)?;
    let out = cfg.output_dir();
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(CHECKPOINT));
    let mut model = prep.new_model(&cfg.hyper)?;
    let stored = ParamStore::load(&ckpt)?;
    model.store.load_from(&stored).map_err(|e| match e {
        Error::Shape { op, detail } => Error::Shape {
            op,
            detail: format!("{detail} (config dim={}, checkpoint {})", cfg.hyper.dim, ckpt.display()),
        },
        other => other,
    })?;
    let report = evaluate_model(cfg, &prep, &model)?;
    write(&out.join(REPORT_CSV), report.to_csv())?;
    write(&out.join(REPORT_TXT), report.to_table())?;
    if dump_attention {
        for g in 0..model.groups.len() {
            let name = prep.schema().node_type_name(model.groups[g].anchor_type);
            write(&out.join(format!("attention_{name}.tsv")), attention_tsv(&prep, &model, g)?)?;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Dimension,
    History,
    Views,
    ViewCount,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dimension" => Ok(SweepAxis::Dimension),
            "history" => Ok(SweepAxis::History),
            "views" => Ok(SweepAxis::Views),
            "view_count" => Ok(SweepAxis::ViewCount),
            _ => Err(Error::Invalid(format!(
                "unknown sweep axis `{s}` (dimension|history|views|view_count)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Dimension => "dimension",
            SweepAxis::History => "history",
            SweepAxis::Views => "views",
            SweepAxis::ViewCount => "view_count",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub metrics: Vec<(String, f64)>,
}

fn parse_count(v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Invalid(format!("sweep value `{v}` is not a non-negative integer")))
}

/// The config for one sweep point.
pub fn sweep_config(cfg: &RunConfig, axis: SweepAxis, value: &str) -> Result<RunConfig> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Dimension => c.hyper.dim = parse_count(value)?,
        SweepAxis::History => c.hyper.history = parse_count(value)?,
        SweepAxis::Views => c.views = value.split('+').map(str::to_string).collect(),
        SweepAxis::ViewCount => {
            // Keep the first `k` views of each anchor type, in config order.
            let k = parse_count(value)?;
            if k == 0 {
                return Err(Error::Invalid("view_count must be positive".into()));
            }
            let schema = load_schema(cfg.resolve(&cfg.schema))?;
            let mut seen: Vec<(usize, usize)> = Vec::new();
            let mut keep = Vec::new();
            for v in &cfg.views {
                let a = parse_metapath(v, &schema)?.anchor_type();
                let n = match seen.iter_mut().find(|s| s.0 == a) {
                    Some(s) => {
                        s.1 += 1;
                        s.1
                    }
                    None => {
                        seen.push((a, 1));
                        1
                    }
                };
                if n <= k {
                    keep.push(v.clone());
                }
            }
            c.views = keep;
        }
    }
    let tag: String = value
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' })
        .collect();
    c.output_dir = cfg.output_dir().join("sweep").join(format!("{axis}-{tag}"));
    c.validate()?;
    Ok(c)
}

/// Retrains and evaluates once per value, writing `sweep_<axis>.csv` and a
/// text table; with `plot_data`, also one `x<TAB>y` file per metric.
pub fn run_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[String], plot_data: bool) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Invalid("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let c = sweep_config(cfg, axis, v)?;
        log::info!("sweep {axis}={v}");
        let summary = run_train(&c, false)?;
        let prep = prepare(&c)?;
        let report = evaluate_model(&c, &prep, &summary.model)?;
        write(&c.output_dir().join(REPORT_CSV), report.to_csv())?;
        rows.push(SweepRow {
            value: v.clone(),
            metrics: report.metrics(),
        });
    }
    let out = cfg.output_dir();
    let names: Vec<String> = rows[0].metrics.iter().map(|m| m.0.clone()).collect();
    let mut csv = format!("axis,value,{}\n", names.join(","));
    for r in &rows {
        let vals: Vec<String> = r.metrics.iter().map(|m| format!("{:.6}", m.1)).collect();
        writeln!(csv, "{axis},{},{}", r.value, vals.join(",")).unwrap();
    }
    write(&out.join(format!("sweep_{axis}.csv")), &csv)?;
    let mut header = vec![axis.to_string()];
    header.extend(names.iter().cloned());
    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            std::iter::once(r.value.clone())
                .chain(r.metrics.iter().map(|m| format!("{:.4}", m.1)))
                .collect()
        })
        .collect();
    write(&out.join(format!("sweep_{axis}.txt")), text_table(&header, &table_rows))?;
    if plot_data {
        for (m, name) in names.iter().enumerate() {
            let mut s = String::new();
            for r in &rows {
                writeln!(s, "{}\t{}", r.value, r.metrics[m].1).unwrap();
            }
            let file: String = name.chars().map(|c| if c == '@' { '_' } else { c }).collect();
            write(&out.join("plot").join(format!("{axis}_{file}.dat")), s)?;
        }
    }
    Ok(rows)
}

/// Writes the loss trace of a finished run as `epoch<TAB>L_all` plot data.
pub fn write_trace_plot(dir: &Path, trace: &[EpochLoss]) -> Result<()> {
    let mut s = String::new();
    for e in trace {
        writeln!(s, "{}\t{}", e.epoch, e.total).unwrap();
    }
    write(&dir.join("plot").join("loss_L_all.dat"), s)
}
