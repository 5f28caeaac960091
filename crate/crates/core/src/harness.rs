//! Experiment orchestration: seeded repetitions of every oversampling arm
//! on every dataset, raw per-run records, aggregation and report files.
//!
//! Layout of an output directory:
//!
//! ```text
//! <out>/runs/<dataset>/run_<r>.json     raw record, written as soon as the run ends
//! <out>/<dataset>/summary.csv           arm, metric, mean, best, sd, runs
//! <out>/<dataset>/summary.txt           "mean (best,sd)" table
//! <out>/<dataset>/pr/<arm>_run<r>.csv   precision-recall curve
//! <out>/<dataset>/traces/<arm>_run<r>.csv  GAN loss trace
//! <out>/index.json                      every artifact above
//! ```
//!
//! Everything except the raw records is derived from the raw records, so
//! [`report_from_dir`] reproduces a finished run's reports byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier_eval::{evaluate, train_classifier, ClassifierSpec, MetricsReport};
use crate::dataset::{
    apply_scale, fit_scale, load_manifest, partition_by_class, stratified_split, Dataset, DatasetSource,
    Split, SplitSpec,
};
use crate::error::{Error, Result};
use crate::gan::{accumulate_fake, GanConfig, GanModel, LatentSource, TrainTrace};
use crate::rng::derive_seed;
use crate::smotified_gan::{baseline_oversample, Method, OversampleResult, OversampleSettings};
use crate::smote::{smote_oversample, SmoteConfig, DEFAULT_K};

pub const METRICS: [&str; 5] = ["f1", "precision", "recall", "accuracy", "pr_auc"];

/// Classifier-scored early stopping for GAN training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanValidation {
    /// Score the generator every this many epochs.
    pub every: usize,
    /// Epoch budget of the probe classifier trained at each check.
    pub classifier_epochs: usize,
}

impl Default for GanValidation {
    fn default() -> Self {
        GanValidation {
            every: 100,
            classifier_epochs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    /// Dataset names to run; empty means every manifest entry.
    pub datasets: Vec<String>,
    pub arms: Vec<Method>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub k: usize,
    pub gan: GanConfig,
    pub classifier: ClassifierSpec,
    /// Fractions only; the split seed comes from `base_seed`.
    pub split: SplitSpec,
    /// Draw a fresh split for every run instead of one per dataset.
    pub resplit: bool,
    pub gan_validation: Option<GanValidation>,
    pub filter: Option<f64>,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifest: PathBuf::from("data/manifest.json"),
            datasets: Vec::new(),
            arms: Method::ALL.to_vec(),
            repetitions: 30,
            base_seed: 42,
            k: DEFAULT_K,
            gan: GanConfig::default(),
            classifier: ClassifierSpec::default(),
            split: SplitSpec::default(),
            resplit: false,
            gan_validation: None,
            filter: None,
            out_dir: PathBuf::from("results"),
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; a relative manifest path is taken relative to the
    /// config file.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if cfg.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.manifest = dir.join(&cfg.manifest);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Config("arm list is empty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if let Some(v) = &self.gan_validation {
            if v.every == 0 {
                return Err(Error::Config("gan_validation.every must be at least 1".into()));
            }
        }
        self.split.validate()?;
        self.gan.validate()?;
        self.classifier.validate()
    }

    /// Seeds for run `r`: only model initialisation and sampling streams vary.
    pub fn run_seeds(&self, run: usize) -> RunSeeds {
        let s = self.base_seed.wrapping_add(run as u64);
        RunSeeds {
            run: s,
            smote: derive_seed(s, "smote"),
            gan: derive_seed(s, "gan"),
            classifier: derive_seed(s, "classifier"),
        }
    }

    pub fn split_seed(&self, dataset: &str, run: usize) -> u64 {
        let base = derive_seed(self.base_seed, &format!("split:{dataset}"));
        if self.resplit {
            derive_seed(base, &format!("run:{run}"))
        } else {
            base
        }
    }

    fn selected_sources(&self) -> Result<Vec<DatasetSource>> {
        let all = load_manifest(&self.manifest)?;
        if self.datasets.is_empty() {
            return Ok(all);
        }
        self.datasets
            .iter()
            .map(|name| {
                all.iter()
                    .find(|s| s.name.eq_ignore_ascii_case(name))
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("dataset {name:?} not in manifest")))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub smote: u64,
    pub gan: u64,
    pub classifier: u64,
}

/// Scaled train/validation/test partitions of one dataset.
#[derive(Clone, Debug)]
pub struct PreparedSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub test_hash: String,
}

/// Stratified split, then min-max scaling fitted on the training part.
pub fn prepare_split(ds: &Dataset, spec: &SplitSpec) -> Result<PreparedSplit> {
    let Split {
        train,
        validation,
        test,
        indices,
    } = stratified_split(ds, spec)?;
    let params = fit_scale(&train);
    Ok(PreparedSplit {
        test_hash: hash_rows(&indices[2], &test),
        train: apply_scale(&train, &params)?,
        validation: apply_scale(&validation, &params)?,
        test: apply_scale(&test, &params)?,
    })
}

fn hash_rows(indices: &[usize], ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for (&i, (row, &label)) in indices.iter().zip(ds.features().iter_rows().zip(ds.labels())) {
        h.update((i as u64).to_le_bytes());
        for v in row {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([label]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub arm: Method,
    /// `None` when the arm failed; see `error`.
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    pub synthetic_rows: usize,
    pub train_positives: usize,
    pub train_negatives: usize,
    pub classifier_best_epoch: usize,
    pub classifier_epochs: usize,
    pub trace: Option<TrainTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub run: usize,
    pub seeds: RunSeeds,
    pub split_seed: u64,
    pub test_hash: String,
    pub arms: Vec<ArmRecord>,
}

impl RunRecord {
    pub fn failures(&self) -> usize {
        self.arms.iter().filter(|a| a.metrics.is_none()).count()
    }
}

fn probe_hook<'a>(
    data: &'a PreparedSplit,
    latent: LatentSource,
    spec: ClassifierSpec,
    v: &'a GanValidation,
    filter: Option<f64>,
    gan_seed: u64,
) -> impl FnMut(usize, &GanModel) -> Result<Option<f64>> + 'a {
    let gap = data.train.negatives() - data.train.positives();
    move |epoch, model| {
        if epoch % v.every != 0 {
            return Ok(None);
        }
        let fake = accumulate_fake(model, &latent, gap, filter, gan_seed)?;
        let augmented = data.train.append(&fake, 1)?;
        let probe = ClassifierSpec {
            max_epochs: v.classifier_epochs,
            ..spec.clone()
        };
        let trained = train_classifier(&augmented, &data.validation, &probe)?;
        let scores = trained.scores(data.validation.features())?;
        let m = MetricsReport::from_scores(&scores, data.validation.labels(), probe.threshold)?;
        Ok(Some(m.f1.unwrap_or(0.0)))
    }
}

/// Oversamples `data.train` with one arm, using the run's seeds.
pub fn oversample_arm(
    cfg: &ExperimentConfig,
    data: &PreparedSplit,
    arm: Method,
    seeds: &RunSeeds,
) -> Result<OversampleResult> {
    let settings = OversampleSettings {
        k: cfg.k,
        smote_seed: seeds.smote,
        gan: GanConfig {
            seed: seeds.gan,
            ..cfg.gan.clone()
        },
        filter: cfg.filter,
    };
    let Some(v) = cfg.gan_validation.as_ref().filter(|_| matches!(arm, Method::Gan | Method::SmotifiedGan))
    else {
        return baseline_oversample(&data.train, arm, &settings, None);
    };
    // The probe needs the same latent source the arm trains with.
    let latent = match arm {
        Method::Gan => LatentSource::Noise { dim: data.train.dim() },
        _ => {
            let (minority, majority) = partition_by_class(&data.train)?;
            let batch = smote_oversample(
                minority.features(),
                &SmoteConfig {
                    k: cfg.k,
                    target_count: majority.len() - minority.len(),
                    seed: seeds.smote,
                },
            )?;
            LatentSource::Repertoire(batch.samples)
        }
    };
    let spec = ClassifierSpec {
        seed: seeds.classifier,
        ..cfg.classifier.clone()
    };
    let mut hook = probe_hook(data, latent, spec, v, cfg.filter, seeds.gan);
    baseline_oversample(&data.train, arm, &settings, Some(&mut hook))
}

fn run_arm(cfg: &ExperimentConfig, data: &PreparedSplit, arm: Method, seeds: &RunSeeds) -> ArmRecord {
    let result = oversample_arm(cfg, data, arm, seeds).and_then(|o| {
        let spec = ClassifierSpec {
            seed: seeds.classifier,
            ..cfg.classifier.clone()
        };
        let trained = train_classifier(&o.augmented, &data.validation, &spec)?;
        let metrics = evaluate(&trained, &data.test, spec.threshold)?;
        Ok((o, trained, metrics))
    });
    match result {
        Ok((o, trained, metrics)) => ArmRecord {
            arm,
            metrics: Some(metrics),
            error: None,
            synthetic_rows: o.synthetic.rows(),
            train_positives: o.augmented.positives(),
            train_negatives: o.augmented.negatives(),
            classifier_best_epoch: trained.best_epoch,
            classifier_epochs: trained.epochs_run,
            trace: o.trace,
        },
        Err(e) => ArmRecord {
            arm,
            metrics: None,
            error: Some(e.to_string()),
            synthetic_rows: 0,
            train_positives: 0,
            train_negatives: 0,
            classifier_best_epoch: 0,
            classifier_epochs: 0,
            trace: None,
        },
    }
}

/// Runs every configured arm once for run index `run`.
pub fn run_once(cfg: &ExperimentConfig, ds: &Dataset, run: usize) -> Result<RunRecord> {
    let split_seed = cfg.split_seed(&ds.name, run);
    let data = prepare_split(
        ds,
        &SplitSpec {
            seed: split_seed,
            ..cfg.split
        },
    )?;
    let seeds = cfg.run_seeds(run);
    let arms = cfg
        .arms
        .iter()
        .map(|&arm| {
            let t = Instant::now();
            let rec = run_arm(cfg, &data, arm, &seeds);
            match &rec.error {
                None => log::info!(
                    "{} run {run} {arm}: f1 {:?} ({:.1}s)",
                    ds.name,
                    rec.metrics.as_ref().and_then(|m| m.f1),
                    t.elapsed().as_secs_f64()
                ),
                Some(e) => log::warn!("{} run {run} {arm} failed: {e}", ds.name),
            }
            rec
        })
        .collect();
    Ok(RunRecord {
        dataset: ds.name.clone(),
        run,
        seeds,
        split_seed,
        test_hash: data.test_hash,
        arms,
    })
}

fn run_path(out: &Path, dataset: &str, run: usize) -> PathBuf {
    out.join("runs").join(dataset).join(format!("run_{run:03}.json"))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_record(out: &Path, rec: &RunRecord) -> Result<()> {
    let mut text = serde_json::to_string_pretty(rec)?;
    text.push('\n');
    write_file(&run_path(out, &rec.dataset, rec.run), text.as_bytes())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub best: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub count: usize,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(MetricStats {
            mean,
            best,
            sd: var.sqrt(),
            count: values.len(),
        })
    }

    /// `mean (best,sd)` with four decimals.
    pub fn cell(&self) -> String {
        format!("{:.4} ({:.4},{:.4})", self.mean, self.best, self.sd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Method,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub metrics: BTreeMap<String, MetricStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub run: usize,
    pub arm: Method,
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    /// Test-split hash shared by every run (`None` when runs resplit).
    pub test_hash: Option<String>,
    pub arms: Vec<ArmSummary>,
    pub raw: Vec<RawRow>,
}

impl RunSummary {
    pub fn arm(&self, arm: Method) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    pub fn failures(&self) -> usize {
        self.arms.iter().map(|a| a.runs_failed).sum()
    }
}

fn metric_value(m: &MetricsReport, name: &str) -> Option<f64> {
    match name {
        "f1" => m.f1,
        "precision" => m.precision,
        "recall" => m.recall,
        "accuracy" => Some(m.accuracy),
        "pr_auc" => m.pr_auc,
        _ => None,
    }
}

/// Aggregates the raw records of one dataset. Failed arm runs are left out
/// of every statistic and counted in `runs_failed`.
pub fn aggregate(dataset: &str, records: &[RunRecord], resplit: bool) -> Result<RunSummary> {
    let mut records: Vec<&RunRecord> = records.iter().filter(|r| r.dataset == dataset).collect();
    records.sort_by_key(|r| r.run);
    let test_hash = if resplit {
        None
    } else {
        let first = records.first().map(|r| r.test_hash.clone());
        if let Some(h) = &first {
            if let Some(bad) = records.iter().find(|r| &r.test_hash != h) {
                return Err(Error::Config(format!(
                    "{dataset}: run {} used a different test split",
                    bad.run
                )));
            }
        }
        first
    };

    let mut arm_order: Vec<Method> = Vec::new();
    for r in &records {
        for a in &r.arms {
            if !arm_order.contains(&a.arm) {
                arm_order.push(a.arm);
            }
        }
    }
    arm_order.sort();

    let mut raw = Vec::new();
    let mut arms = Vec::new();
    for &arm in &arm_order {
        let mut ok = 0;
        let mut failed = 0;
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &records {
            for a in r.arms.iter().filter(|a| a.arm == arm) {
                let Some(m) = &a.metrics else {
                    failed += 1;
                    continue;
                };
                ok += 1;
                let mut values = BTreeMap::new();
                for name in METRICS {
                    if let Some(v) = metric_value(m, name) {
                        columns.entry(name.to_string()).or_default().push(v);
                        values.insert(name.to_string(), v);
                    }
                }
                raw.push(RawRow {
                    run: r.run,
                    arm,
                    values,
                });
            }
        }
        let metrics = columns
            .iter()
            .filter_map(|(k, v)| MetricStats::from_values(v).map(|s| (k.clone(), s)))
            .collect();
        arms.push(ArmSummary {
            arm,
            runs_ok: ok,
            runs_failed: failed,
            metrics,
        });
    }
    Ok(RunSummary {
        dataset: dataset.to_string(),
        test_hash,
        arms,
        raw,
    })
}

/// Table in the `mean (best,sd)` layout, one row per arm.
pub fn summary_text(s: &RunSummary) -> String {
    let cols = ["f1", "precision", "recall", "pr_auc"];
    let heads = ["F1", "Precision", "Recall", "PR-AUC"];
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Method".to_string())
        .chain(heads.iter().map(|h| h.to_string()))
        .chain(["Runs".to_string()])
        .collect()];
    for a in &s.arms {
        let mut row = vec![a.arm.display_name().to_string()];
        for c in cols {
            row.push(a.metrics.get(c).map_or_else(|| "n/a".to_string(), MetricStats::cell));
        }
        row.push(if a.runs_failed > 0 {
            format!("{} ({} failed)", a.runs_ok, a.runs_failed)
        } else {
            a.runs_ok.to_string()
        });
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("{}\n", s.dataset);
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

fn summary_csv(s: &RunSummary) -> String {
    let mut out = String::from("arm,metric,mean,best,sd,runs,failed\n");
    for a in &s.arms {
        for (name, m) in &a.metrics {
            let _ = writeln!(
                out,
                "{},{name},{:?},{:?},{:?},{},{}",
                a.arm, m.mean, m.best, m.sd, m.count, a.runs_failed
            );
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub dataset: String,
    pub test_hash: Option<String>,
    pub summary_csv: String,
    pub summary_txt: String,
    pub runs: Vec<String>,
    pub pr_curves: Vec<String>,
    pub traces: Vec<String>,
    pub failed_runs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub datasets: Vec<DatasetIndex>,
    pub failed_runs: usize,
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Writes summaries, curves, traces and `index.json` under `out`.
pub fn write_report(out: &Path, summaries: &[RunSummary], records: &[RunRecord]) -> Result<ReportIndex> {
    if summaries.is_empty() {
        return Err(Error::Config("nothing to report".into()));
    }
    let mut index = ReportIndex::default();
    for s in summaries {
        let dir = out.join(&s.dataset);
        let csv_path = dir.join("summary.csv");
        let txt_path = dir.join("summary.txt");
        write_file(&csv_path, summary_csv(s).as_bytes())?;
        write_file(&txt_path, summary_text(s).as_bytes())?;
        let mut entry = DatasetIndex {
            dataset: s.dataset.clone(),
            test_hash: s.test_hash.clone(),
            summary_csv: rel(out, &csv_path),
            summary_txt: rel(out, &txt_path),
            failed_runs: s.failures(),
            ..Default::default()
        };
        let mut mine: Vec<&RunRecord> = records.iter().filter(|r| r.dataset == s.dataset).collect();
        mine.sort_by_key(|r| r.run);
        for r in mine {
            entry.runs.push(rel(out, &run_path(out, &r.dataset, r.run)));
            for a in &r.arms {
                if let Some(m) = &a.metrics {
                    let p = dir.join("pr").join(format!("{}_run{:03}.csv", a.arm, r.run));
                    m.write_pr_csv(&p)?;
                    entry.pr_curves.push(rel(out, &p));
                }
                if let Some(t) = &a.trace {
                    let p = dir.join("traces").join(format!("{}_run{:03}.csv", a.arm, r.run));
                    t.write_csv(&p)?;
                    entry.traces.push(rel(out, &p));
                }
            }
        }
        index.failed_runs += entry.failed_runs;
        index.datasets.push(entry);
    }
    let mut text = serde_json::to_string_pretty(&index)?;
    text.push('\n');
    write_file(&out.join("index.json"), text.as_bytes())?;
    Ok(index)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub summaries: Vec<RunSummary>,
    pub records: Vec<RunRecord>,
    pub index: ReportIndex,
}

impl ExperimentOutcome {
    pub fn failed_runs(&self) -> usize {
        self.index.failed_runs
    }
}

/// Runs every (dataset, repetition) job, persisting each raw record as soon
/// as it finishes, then aggregates and writes the reports.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let sources = cfg.selected_sources()?;
    let datasets: Vec<Dataset> = sources.iter().map(DatasetSource::load).collect::<Result<_>>()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..cfg.repetitions).map(move |r| (d, r)))
        .collect();
    let work = |&(d, r): &(usize, usize)| -> Result<RunRecord> {
        let rec = run_once(cfg, &datasets[d], r)?;
        write_record(&cfg.out_dir, &rec)?;
        Ok(rec)
    };
    let results: Vec<Result<RunRecord>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(work).collect())
    } else {
        jobs.iter().map(work).collect()
    };
    let records: Vec<RunRecord> = results.into_iter().collect::<Result<_>>()?;

    let summaries = datasets
        .iter()
        .map(|ds| aggregate(&ds.name, &records, cfg.resplit))
        .collect::<Result<Vec<_>>>()?;
    let index = write_report(&cfg.out_dir, &summaries, &records)?;
    Ok(ExperimentOutcome {
        summaries,
        records,
        index,
    })
}

/// Reads every raw record under `out/runs`.
pub fn load_records(out: &Path) -> Result<Vec<RunRecord>> {
    let root = out.join("runs");
    let mut paths = Vec::new();
    let entries = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    for dir in entries {
        let dir = dir.map_err(|e| Error::io(&root, e))?.path();
        if !dir.is_dir() {
            continue;
        }
        for f in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = f.map_err(|e| Error::io(&dir, e))?.path();
            if p.extension().is_some_and(|e| e == "json") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}

/// Re-aggregates raw records already on disk and rewrites the reports.
pub fn report_from_dir(out: &Path, resplit: bool) -> Result<ExperimentOutcome> {
    let records = load_records(out)?;
    let mut names: Vec<String> = records.iter().map(|r| r.dataset.clone()).collect();
    names.sort();
    names.dedup();
    let summaries = names
        .iter()
        .map(|n| aggregate(n, &records, resplit))
        .collect::<Result<Vec<_>>>()?;
    let index = write_report(out, &summaries, &records)?;
    Ok(ExperimentOutcome {
        summaries,
        records,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier_eval::Confusion;

    fn record(run: usize, arm: Method, f1: Option<f64>) -> RunRecord {
        let metrics = f1.map(|f| MetricsReport {
            confusion: Confusion::default(),
            accuracy: 0.5,
            precision: Some(f),
            recall: Some(f),
            f1: Some(f),
            pr_curve: Vec::new(),
            pr_auc: Some(f),
        });
        RunRecord {
            dataset: "toy".into(),
            run,
            seeds: RunSeeds {
                run: run as u64,
                smote: 0,
                gan: 0,
                classifier: 0,
            },
            split_seed: 0,
            test_hash: "h".into(),
            arms: vec![ArmRecord {
                arm,
                error: metrics.is_none().then(|| "boom".into()),
                metrics,
                synthetic_rows: 0,
                train_positives: 0,
                train_negatives: 0,
                classifier_best_epoch: 0,
                classifier_epochs: 0,
                trace: None,
            }],
        }
    }

    #[test]
    fn cell_format() {
        let s = MetricStats {
            mean: 0.92222,
            best: 1.0,
            sd: 0.14333,
            count: 3,
        };
        assert_eq!(s.cell(), "0.9222 (1.0000,0.1433)");
    }

    #[test]
    fn single_run_has_zero_sd() {
        let s = MetricStats::from_values(&[0.7]).unwrap();
        assert_eq!((s.mean, s.best, s.sd), (0.7, 0.7, 0.0));
    }

    #[test]
    fn failed_runs_are_excluded() {
        let recs = vec![
            record(0, Method::Smote, Some(0.5)),
            record(1, Method::Smote, None),
            record(2, Method::Smote, Some(1.0)),
        ];
        let s = aggregate("toy", &recs, false).unwrap();
        let a = s.arm(Method::Smote).unwrap();
        assert_eq!((a.runs_ok, a.runs_failed), (2, 1));
        assert_eq!(a.metrics["f1"].mean, 0.75);
        assert_eq!(a.metrics["f1"].best, 1.0);
        assert_eq!(s.raw.len(), 2);
    }

    #[test]
    fn mismatched_test_split_is_rejected() {
        let mut recs = vec![record(0, Method::None, Some(0.0)), record(1, Method::None, Some(0.0))];
        recs[1].test_hash = "other".into();
        assert!(aggregate("toy", &recs, false).is_err());
        assert!(aggregate("toy", &recs, true).is_ok());
    }

    #[test]
    fn empty_arm_list_rejected() {
        let cfg = ExperimentConfig {
            arms: Vec::new(),
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn split_seed_fixed_unless_resplit() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.split_seed("a", 0), cfg.split_seed("a", 5));
        cfg.resplit = true;
        assert_ne!(cfg.split_seed("a", 0), cfg.split_seed("a", 5));
    }

    #[test]
    fn run_seeds_differ_per_run() {
        let cfg = ExperimentConfig::default();
        assert_ne!(cfg.run_seeds(0), cfg.run_seeds(1));
        assert_eq!(cfg.run_seeds(3), cfg.run_seeds(3));
    }
}
