//! Run configuration, end-to-end generation, and output inspection.
//!
//! Generation is split into shards (consecutive documents of one domain,
//! sorted by id). Each shard is processed on its own with generators seeded
//! from `(global_seed, doc_id, stream)` or `(global_seed, stage, shard_id)`,
//! so the output does not depend on how many workers run or in what order
//! shards finish. Per-task outputs are merged, sorted by content hash, and
//! capped at the task quota.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{self, Document, IngestStats, Ingester, InputFormat, Segmenter, WindowConfig};
use crate::error::{Error, Result};
use crate::lexicon::{Abbreviations, FunctionWords};
use crate::packer::{
    self, GroupStats, LengthFn, PackConfig, PackedInstance, WhitespaceLength, DEFAULT_MAX_LEN,
};
use crate::pairs::{self, NgramMaskConfig, PairConfig, PairLabel, PairVariant};
use crate::seed;
use crate::taskgen::{
    self, DaeConfig, DocumentPool, Example, LabelScheme, Meta, PhrasePool, TaskKind,
};

pub const DEFAULT_TASK_QUOTA: usize = 250_000;
pub const SEED_ENV: &str = "ICL_DATA_SEED";
pub const WORKERS_ENV: &str = "ICL_DATA_WORKERS";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub path: PathBuf,
    /// Domain for records that carry none.
    #[serde(default)]
    pub domain: Option<String>,
    /// Keep at most this many documents from the source.
    #[serde(default)]
    pub quota: Option<usize>,
    #[serde(default = "default_format")]
    pub format: InputFormat,
}

fn default_format() -> InputFormat {
    InputFormat::Jsonl
}

fn default_tasks() -> BTreeMap<TaskKind, usize> {
    [TaskKind::Nsg, TaskKind::Mwp, TaskKind::LppCls, TaskKind::Cl]
        .into_iter()
        .map(|t| (t, DEFAULT_TASK_QUOTA))
        .collect()
}

fn default_cl_window() -> usize {
    5
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

fn default_ratio() -> f64 {
    1.0
}

fn default_workers() -> usize {
    1
}

fn default_shard_size() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub global_seed: u64,
    pub corpora: Vec<CorpusSource>,
    /// Enabled tasks and their instance quotas.
    #[serde(default = "default_tasks")]
    pub tasks: BTreeMap<TaskKind, usize>,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default = "default_cl_window")]
    pub cl_window: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub pairs: PairConfig,
    #[serde(default)]
    pub mask: NgramMaskConfig,
    #[serde(default)]
    pub dae: DaeConfig,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub corrupt_labels: bool,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_shard_size")]
    pub shard_size: usize,
    #[serde(default)]
    pub function_words: Option<PathBuf>,
    #[serde(default)]
    pub abbreviations: Option<PathBuf>,
}

impl RunConfig {
    /// Parse a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut self.corpora {
            fix(&mut c.path);
        }
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.function_words {
            fix(p);
        }
        if let Some(p) = &mut self.abbreviations {
            fix(p);
        }
    }

    /// Apply seed and worker overrides from the environment.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.global_seed = v
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}={v:?} is not a u64")))?;
        }
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            self.workers = v
                .parse()
                .map_err(|_| Error::config(format!("{WORKERS_ENV}={v:?} is not a count")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpora.is_empty() {
            return Err(Error::config("no corpora configured"));
        }
        for c in &self.corpora {
            if !c.path.is_file() {
                return Err(Error::config(format!(
                    "corpus {} does not exist",
                    c.path.display()
                )));
            }
        }
        for p in self.function_words.iter().chain(&self.abbreviations) {
            if !p.is_file() {
                return Err(Error::config(format!(
                    "lexicon {} does not exist",
                    p.display()
                )));
            }
        }
        self.window.validate()?;
        if self.cl_window < 4 {
            return Err(Error::config(format!(
                "cl_window must be >= 4, got {}",
                self.cl_window
            )));
        }
        if self.max_len == 0 {
            return Err(Error::config("max_len must be positive"));
        }
        if self.pairs.max_len <= pairs::MARKER_TOKENS + 2 {
            return Err(Error::config(format!(
                "pairs.max_len must exceed {}",
                pairs::MARKER_TOKENS + 2
            )));
        }
        if !(0.0..=1.0).contains(&self.pairs.short_seq_prob) {
            return Err(Error::config("pairs.short_seq_prob must be in [0, 1]"));
        }
        self.mask.validate()?;
        if !(0.0..=1.0).contains(&self.dae.mask_rate) {
            return Err(Error::config("dae.mask_rate must be in [0, 1]"));
        }
        if !(self.ratio > 0.0 && self.ratio <= 2.0) {
            return Err(Error::config(format!(
                "ratio must be in (0, 2], got {}",
                self.ratio
            )));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be >= 1"));
        }
        if self.shard_size == 0 {
            return Err(Error::config("shard_size must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        seed::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn output_file_name(task: TaskKind) -> String {
    format!("{}.jsonl", task.as_str().to_lowercase())
}

// ---------------------------------------------------------------------------
// Ingestion and sharding
// ---------------------------------------------------------------------------

fn load_documents(
    cfg: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<(Vec<Document>, IngestStats)> {
    let abbreviations = match &cfg.abbreviations {
        Some(p) => Abbreviations::from_path(p)?,
        None => Abbreviations::builtin(),
    };
    let mut ingester = Ingester::new(Segmenter::new(abbreviations));
    let mut all = Vec::new();
    for source in &cfg.corpora {
        let file = File::open(&source.path).map_err(|e| Error::io(&source.path, e))?;
        let mut docs = with_domain(&mut ingester, source, |ing| {
            ing.read_all(BufReader::new(file), source.format)
        })?;
        if let Some(quota) = source.quota {
            if docs.len() > quota {
                docs.sort_by_cached_key(|d| {
                    seed::unit_seed(cfg.global_seed, &["quota", &d.doc_id])
                });
                docs.truncate(quota);
                warnings.push(format!(
                    "{}: capped at {quota} documents",
                    source.path.display()
                ));
            }
        }
        all.extend(docs);
    }
    let stats = ingester.stats().clone();
    if stats.malformed > 0 {
        warnings.push(format!("{} malformed records skipped", stats.malformed));
    }
    if stats.empty > 0 {
        warnings.push(format!("{} empty documents skipped", stats.empty));
    }
    let docs = corpus::subsample(all, cfg.ratio, cfg.global_seed)?;
    Ok((docs, stats))
}

/// Run `f` with the source's default domain set, keeping the id registry.
fn with_domain<T>(
    ingester: &mut Ingester,
    source: &CorpusSource,
    f: impl FnOnce(&mut Ingester) -> Result<T>,
) -> Result<T> {
    let taken = std::mem::take(ingester);
    let mut scoped = match &source.domain {
        Some(d) => taken.with_default_domain(d.clone()),
        None => taken.with_default_domain(corpus::DEFAULT_DOMAIN),
    };
    let out = f(&mut scoped);
    *ingester = scoped;
    out
}

#[derive(Debug, Clone)]
pub struct Shard {
    pub shard_id: String,
    pub domain: String,
    pub docs: Vec<Document>,
}

/// Group by domain, sort by doc id, and cut into shards of `shard_size`.
pub fn make_shards(docs: Vec<Document>, shard_size: usize) -> Vec<Shard> {
    let mut by_domain: BTreeMap<String, Vec<Document>> = BTreeMap::new();
    for d in docs {
        by_domain.entry(d.domain.clone()).or_default().push(d);
    }
    let mut shards = Vec::new();
    for (domain, mut docs) in by_domain {
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let mut rest = docs.into_iter().peekable();
        let mut index = 0;
        while rest.peek().is_some() {
            let chunk: Vec<Document> = rest.by_ref().take(shard_size).collect();
            shards.push(Shard {
                shard_id: format!("{domain}/{index:05}"),
                domain: domain.clone(),
                docs: chunk,
            });
            index += 1;
        }
    }
    shards
}

// ---------------------------------------------------------------------------
// Per-shard generation
// ---------------------------------------------------------------------------

/// Task settings shared by every shard.
pub struct GenContext<'a> {
    pub cfg: &'a RunConfig,
    pub function_words: &'a FunctionWords,
    pub length_fn: &'a dyn LengthFn,
}

#[derive(Debug, Clone, Default)]
pub struct ShardOutput {
    pub instances: BTreeMap<TaskKind, Vec<PackedInstance>>,
    pub examples: BTreeMap<TaskKind, Vec<Example>>,
    pub skipped_oversized: BTreeMap<TaskKind, u64>,
}

fn stream(task: TaskKind, stage: &str) -> String {
    format!("{}/{stage}", task.as_str())
}

fn window_units(
    ctx: &GenContext,
    shard: &Shard,
    task: TaskKind,
    pool: &DocumentPool,
    lpp: &PhrasePool,
) -> Result<Vec<Vec<Example>>> {
    let cfg = ctx.cfg;
    let window_cfg = if task == TaskKind::Cl {
        WindowConfig::fixed(cfg.cl_window)
    } else {
        cfg.window
    };
    let placeholder_scheme = LabelScheme::binary(0);
    let mut units = Vec::new();
    for doc in &shard.docs {
        let mut wrng = seed::doc_rng(cfg.global_seed, &doc.doc_id, &stream(task, "windows"));
        let mut rng = seed::doc_rng(cfg.global_seed, &doc.doc_id, &stream(task, "gen"));
        for w in corpus::windows(doc, window_cfg, &mut wrng) {
            let unit = match task {
                TaskKind::Nsg => vec![taskgen::gen_nsg(&w)?],
                TaskKind::Mwp => match taskgen::gen_mwp(&w, &mut rng) {
                    Ok(ex) => vec![ex],
                    Err(Error::Precondition(_)) => continue,
                    Err(e) => return Err(e),
                },
                TaskKind::LppGen => taskgen::gen_lpp_gen(&w, ctx.function_words)
                    .into_iter()
                    .collect(),
                TaskKind::LppCls => {
                    taskgen::gen_lpp_cls(&w, lpp, &placeholder_scheme, ctx.function_words, &mut rng)
                        .into_iter()
                        .collect()
                }
                TaskKind::Cl => match taskgen::build_cl_inputs(&w, pool, &mut rng)? {
                    Some(group) => group.examples,
                    None => continue,
                },
                TaskKind::Dae => vec![taskgen::gen_dae(&w, &cfg.dae, &mut rng)?],
                TaskKind::Gsg => vec![taskgen::gen_gsg(&w, &mut rng)?],
                TaskKind::Sop | TaskKind::Nsp | TaskKind::Mlm => unreachable!("segment-pair task"),
            };
            if !unit.is_empty() {
                units.push(unit);
            }
        }
    }
    Ok(units)
}

fn pair_examples(
    ctx: &GenContext,
    shard: &Shard,
    task: TaskKind,
    pool: &DocumentPool,
) -> Vec<Example> {
    let cfg = ctx.cfg;
    let mut out = Vec::new();
    for doc in &shard.docs {
        let mut rng = seed::doc_rng(cfg.global_seed, &doc.doc_id, &stream(task, "gen"));
        let ex = match task {
            TaskKind::Sop => pairs::make_pair(doc, PairVariant::Sop, pool, &cfg.pairs, &mut rng)
                .map(|p| p.to_example()),
            TaskKind::Nsp => pairs::make_pair(doc, PairVariant::Nsp, pool, &cfg.pairs, &mut rng)
                .map(|p| p.to_example()),
            TaskKind::Mlm => pairs::cut_pair(doc, &cfg.pairs, &mut rng)
                .and_then(|cut| {
                    pairs::finish_pair(cut, PairVariant::Sop, PairLabel::Positive, pool, &mut rng)
                })
                .and_then(|pair| pairs::mlm_example(&pair, &cfg.mask, &mut rng)),
            _ => unreachable!("window task"),
        };
        out.extend(ex.map(|e| e.with_meta("domain", shard.domain.as_str())));
    }
    out
}

/// Generate and pack every enabled task for one shard.
pub fn process_shard(ctx: &GenContext, shard: &Shard) -> Result<ShardOutput> {
    let cfg = ctx.cfg;
    let pool = DocumentPool::new(&shard.docs);
    let lpp = if cfg.tasks.contains_key(&TaskKind::LppCls) {
        let mut p = PhrasePool::new();
        p.add_sentences(
            shard.docs.iter().flat_map(|d| &d.sentences),
            ctx.function_words,
        );
        p.finish()
    } else {
        PhrasePool::new()
    };
    let mut base_meta = Meta::new();
    base_meta.insert("domain".into(), json!(shard.domain));
    base_meta.insert("shard".into(), json!(shard.shard_id));

    let mut out = ShardOutput::default();
    for &task in cfg.tasks.keys() {
        if task.is_segment_pair() {
            out.examples
                .insert(task, pair_examples(ctx, shard, task, &pool));
            continue;
        }
        let mut units = window_units(ctx, shard, task, &pool, &lpp)?;
        if cfg.corrupt_labels && !task.is_instance_labelled() {
            let mut flat: Vec<Example> = units.into_iter().flatten().collect();
            let mut rng = seed::unit_rng(
                cfg.global_seed,
                &[&stream(task, "corrupt"), &shard.shard_id],
            );
            taskgen::corrupt_labels(&mut flat, &mut rng);
            units = flat.into_iter().map(|e| vec![e]).collect();
        }
        let pack_cfg = PackConfig {
            max_len: cfg.max_len,
            corrupt_labels: cfg.corrupt_labels,
        };
        let mut rng = seed::unit_rng(cfg.global_seed, &[&stream(task, "pack"), &shard.shard_id]);
        let (instances, stats) =
            packer::pack(task, units, &pack_cfg, ctx.length_fn, &base_meta, &mut rng);
        out.instances.insert(task, instances);
        out.skipped_oversized.insert(task, stats.skipped_oversized);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Generate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub quota: usize,
    /// Before the quota cap.
    pub generated: u64,
    pub instances: u64,
    pub examples: u64,
    pub mean_examples_per_instance: f64,
    pub skipped_oversized: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub global_seed: u64,
    pub workers: usize,
    pub documents: u64,
    pub shards: usize,
    pub ingest: IngestStats,
    pub tasks: BTreeMap<TaskKind, TaskReport>,
    pub warnings: Vec<String>,
    pub wall_clock_secs: f64,
    /// Output file name to SHA-256 of its bytes.
    pub digests: BTreeMap<String, String>,
}

/// Sort key for final output: 64-bit content hash, then the full line.
fn sorted_lines<T: Serialize>(items: &[T]) -> Result<Vec<Vec<u8>>> {
    let mut lines: Vec<(u64, Vec<u8>)> = items
        .iter()
        .map(|it| {
            let bytes = serde_json::to_vec(it)?;
            Ok((seed::hash64(&bytes), bytes))
        })
        .collect::<Result<_>>()?;
    lines.sort();
    Ok(lines.into_iter().map(|(_, b)| b).collect())
}

/// Writes go to temporary names and are renamed once all succeed; on any
/// failure the temporaries are removed.
struct StagedOutput {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl StagedOutput {
    fn write(&mut self, dir: &Path, name: &str, lines: &[Vec<u8>]) -> Result<String> {
        let final_path = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        let mut bytes = Vec::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
        for l in lines {
            bytes.extend_from_slice(l);
            bytes.push(b'\n');
        }
        self.staged.push((tmp.clone(), final_path));
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        Ok(seed::sha256_hex(&bytes))
    }

    fn commit(mut self) -> Result<()> {
        for (tmp, dest) in std::mem::take(&mut self.staged) {
            std::fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
        }
        Ok(())
    }
}

impl Drop for StagedOutput {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

/// Full pipeline with the default whitespace length function.
pub fn generate(cfg: &RunConfig) -> Result<RunReport> {
    generate_with(cfg, &WhitespaceLength)
}

pub fn generate_with(cfg: &RunConfig, length_fn: &dyn LengthFn) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    let function_words = match &cfg.function_words {
        Some(p) => FunctionWords::from_path(p)?,
        None => FunctionWords::builtin(),
    };
    let mut warnings = Vec::new();
    let (docs, ingest) = load_documents(cfg, &mut warnings)?;
    let documents = docs.len() as u64;
    let shards = make_shards(docs, cfg.shard_size);
    log::info!(
        "{documents} documents in {} shards, {} workers",
        shards.len(),
        cfg.workers
    );

    let ctx = GenContext {
        cfg,
        function_words: &function_words,
        length_fn,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let mut outputs: Vec<ShardOutput> = pool.install(|| {
        shards
            .par_iter()
            .map(|s| process_shard(&ctx, s))
            .collect::<Result<_>>()
    })?;

    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut staged = StagedOutput { staged: Vec::new() };
    let mut report = RunReport {
        config_hash: cfg.hash(),
        global_seed: cfg.global_seed,
        workers: cfg.workers,
        documents,
        shards: shards.len(),
        ingest,
        ..RunReport::default()
    };

    for (&task, &quota) in &cfg.tasks {
        let name = output_file_name(task);
        let mut task_report = TaskReport {
            quota,
            ..TaskReport::default()
        };
        let lines = if task.is_segment_pair() {
            let examples: Vec<Example> = outputs
                .iter_mut()
                .flat_map(|o| o.examples.remove(&task).unwrap_or_default())
                .collect();
            task_report.generated = examples.len() as u64;
            let mut lines = sorted_lines(&examples)?;
            lines.truncate(quota);
            task_report.instances = lines.len() as u64;
            task_report.examples = lines.len() as u64;
            lines
        } else {
            let mut instances: Vec<PackedInstance> = outputs
                .iter_mut()
                .flat_map(|o| o.instances.remove(&task).unwrap_or_default())
                .collect();
            task_report.generated = instances.len() as u64;
            task_report.skipped_oversized =
                outputs.iter().map(|o| o.skipped_oversized[&task]).sum();
            // Instance ids end in a 64-bit hash of the instance content.
            instances.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
            instances.truncate(quota);
            task_report.instances = instances.len() as u64;
            task_report.examples = instances.iter().map(|i| i.num_examples() as u64).sum();
            instances
                .iter()
                .map(serde_json::to_vec)
                .collect::<std::result::Result<_, _>>()?
        };
        if task_report.instances > 0 {
            task_report.mean_examples_per_instance =
                task_report.examples as f64 / task_report.instances as f64;
        }
        if task_report.generated < quota as u64 {
            warnings.push(format!(
                "{task}: {} instances generated, quota {quota}",
                task_report.generated
            ));
        }
        let digest = staged.write(&cfg.output_dir, &name, &lines)?;
        report.digests.insert(name, digest);
        report.tasks.insert(task, task_report);
    }
    staged.commit()?;

    for task in TaskKind::ALL {
        if !cfg.tasks.contains_key(&task) {
            let stale = cfg.output_dir.join(output_file_name(task));
            if stale.is_file() {
                std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
            }
        }
    }

    report.warnings = warnings;
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    let report_path = cfg.output_dir.join(REPORT_FILE);
    let body = serde_json::to_vec_pretty(&report)?;
    std::fs::write(&report_path, body).map_err(|e| Error::io(&report_path, e))?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Reading outputs back
// ---------------------------------------------------------------------------

/// One output line: a packed instance or a bare segment-pair example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputRecord {
    Packed(PackedInstance),
    Example(Example),
}

impl OutputRecord {
    pub fn task(&self) -> TaskKind {
        match self {
            OutputRecord::Packed(p) => p.task,
            OutputRecord::Example(e) => e.task,
        }
    }

    pub fn num_examples(&self) -> usize {
        match self {
            OutputRecord::Packed(p) => p.num_examples(),
            OutputRecord::Example(_) => 1,
        }
    }

    pub fn record_id(&self) -> String {
        match self {
            OutputRecord::Packed(p) => p.instance_id.clone(),
            OutputRecord::Example(e) => e.source_id(),
        }
    }
}

/// Parsed records with their line numbers, and the numbers of malformed lines.
type ReadRecords = (Vec<(usize, OutputRecord)>, Vec<usize>);

fn read_records(path: &Path) -> Result<ReadRecords> {
    use std::io::BufRead;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<OutputRecord>(&line) {
            Ok(r) => records.push((i + 1, r)),
            Err(_) => bad.push(i + 1),
        }
    }
    Ok((records, bad))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub files: usize,
    pub records: u64,
    pub malformed: u64,
    pub total: GroupStats,
    pub per_task: BTreeMap<TaskKind, GroupStats>,
    pub per_domain: BTreeMap<String, GroupStats>,
    pub length_histogram: BTreeMap<usize, u64>,
}

pub fn stats(paths: &[PathBuf], length_fn: &dyn LengthFn) -> Result<StatsReport> {
    let mut report = StatsReport::default();
    let mut packed = Vec::new();
    let mut bare: Vec<Example> = Vec::new();
    for path in paths {
        let (records, bad) = read_records(path)?;
        report.files += 1;
        report.malformed += bad.len() as u64;
        for (_, r) in records {
            report.records += 1;
            match r {
                OutputRecord::Packed(p) => packed.push(p),
                OutputRecord::Example(e) => bare.push(e),
            }
        }
    }
    // A bare example counts as an instance holding one example.
    let as_instances: Vec<PackedInstance> = bare
        .into_iter()
        .map(|e| {
            let text = packer::render(&e);
            let n = text.chars().count();
            PackedInstance {
                task: e.task,
                instance_id: e.source_id(),
                text,
                example_boundaries: vec![(0, n)],
                loss_spans: vec![],
                meta: e.meta,
            }
        })
        .collect();
    let pack = packer::stats(packed.iter().chain(&as_instances), length_fn);
    report.total = pack.total;
    report.per_task = pack.per_task;
    report.per_domain = pack.per_domain;
    report.length_histogram = pack.length_histogram;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub file: PathBuf,
    pub line: usize,
    /// Instance id, or `doc:offset` for bare examples; empty for lines that
    /// do not parse.
    pub record_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub files: usize,
    pub records: u64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn example_violations(ex: &Example) -> Vec<String> {
    let mut out = Vec::new();
    if ex.output_text.is_empty() {
        out.push("empty output".to_string());
    }
    match ex.task {
        TaskKind::Sop | TaskKind::Nsp => {
            if ![PairLabel::Positive, PairLabel::Negative]
                .iter()
                .any(|l| l.as_str() == ex.output_text)
            {
                out.push(format!(
                    "label {:?} is not positive/negative",
                    ex.output_text
                ));
            }
        }
        TaskKind::Mlm => {
            let masks = ex
                .input_text
                .split(' ')
                .filter(|t| *t == pairs::MASK)
                .count();
            let targets = ex.output_text.split(' ').count();
            if masks != targets {
                out.push(format!("{masks} mask tokens but {targets} target words"));
            }
        }
        _ => out.push(format!("{} examples must be packed", ex.task)),
    }
    out
}

/// Re-check every invariant decodable from output files. Each file must
/// hold a single task.
pub fn validate(
    paths: &[PathBuf],
    max_len: usize,
    length_fn: &dyn LengthFn,
) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    for path in paths {
        let (records, bad) = read_records(path)?;
        report.files += 1;
        let mut push = |line: usize, record_id: String, message: String| {
            report.violations.push(Violation {
                file: path.clone(),
                line,
                record_id,
                message,
            })
        };
        for line in bad {
            push(
                line,
                String::new(),
                "line is not a packed instance or example".into(),
            );
        }
        let file_task = records.first().map(|(_, r)| r.task());
        for (line, record) in &records {
            let id = record.record_id();
            if Some(record.task()) != file_task {
                push(
                    *line,
                    id.clone(),
                    format!(
                        "task {} mixed into a {} file",
                        record.task(),
                        file_task.unwrap()
                    ),
                );
            }
            let problems = match record {
                OutputRecord::Packed(p) => {
                    let mut v = p.violations(max_len, length_fn);
                    if !p.instance_id.starts_with(&format!("{}-", p.task)) {
                        v.push(format!("instance id does not name task {}", p.task));
                    }
                    v
                }
                OutputRecord::Example(e) => example_violations(e),
            };
            for message in problems {
                push(*line, id.clone(), message);
            }
        }
        report.records += records.len() as u64;
    }
    Ok(report)
}

/// Read a JSONL file of evaluation records.
pub fn read_eval_records(path: &Path) -> Result<Vec<crate::evalgen::EvalRecord>> {
    let (records, bad) = crate::jsonl::read_jsonl(path)?;
    if let Some(line) = bad.first() {
        return Err(Error::config(format!(
            "{}: line {line} is not an evaluation record",
            path.display()
        )));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, domain: &str) -> Document {
        Document {
            doc_id: id.into(),
            domain: domain.into(),
            sentences: vec![corpus::Sentence::from_text("x .")],
        }
    }

    #[test]
    fn shards_group_by_domain_and_sort() {
        let docs = vec![
            doc("c", "web"),
            doc("a", "web"),
            doc("b", "news"),
            doc("d", "web"),
        ];
        let shards = make_shards(docs, 2);
        let ids: Vec<(String, Vec<&str>)> = shards
            .iter()
            .map(|s| {
                (
                    s.shard_id.clone(),
                    s.docs.iter().map(|d| d.doc_id.as_str()).collect(),
                )
            })
            .collect();
        assert_eq!(
            ids,
            vec![
                ("news/00000".to_string(), vec!["b"]),
                ("web/00000".to_string(), vec!["a", "c"]),
                ("web/00001".to_string(), vec!["d"]),
            ]
        );
    }

    #[test]
    fn config_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"global_seed":1,"corpora":[{"path":"x"}],"output_dir":"out"}"#,
        )
        .unwrap();
        assert_eq!(cfg.tasks.len(), 4);
        assert!(cfg.tasks.values().all(|&q| q == DEFAULT_TASK_QUOTA));
        assert_eq!(cfg.cl_window, 5);
        assert_eq!(cfg.max_len, 2048);
        assert_eq!(cfg.pairs.max_len, 512);
        assert_eq!(cfg.workers, 1);
        assert_eq!(cfg.corpora[0].format, InputFormat::Jsonl);
    }

    #[test]
    fn unknown_config_key_rejected() {
        let r: std::result::Result<RunConfig, _> = serde_json::from_str(
            r#"{"global_seed":1,"corpora":[],"output_dir":"o","max_length":5}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn missing_corpus_is_config_error() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"global_seed":1,"corpora":[{"path":"/nonexistent/x.jsonl"}],"output_dir":"o"}"#,
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let mut cfg: RunConfig =
            serde_json::from_str(r#"{"global_seed":1,"corpora":[],"output_dir":"o"}"#).unwrap();
        let h = cfg.hash();
        assert_eq!(h, cfg.clone().hash());
        cfg.global_seed = 2;
        assert_ne!(h, cfg.hash());
    }

    #[test]
    fn file_names() {
        assert_eq!(output_file_name(TaskKind::LppCls), "lpp_cls.jsonl");
    }
}
