//! End-to-end experiments: ingest, normalize on dev, optimize dev MSE, score MAP@k on test,
//! and persist every artifact needed to reproduce the run.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::evaluation::{map_at_k, EvalError, EvalReport};
use crate::fusion::{fuse, FusionError, MseObjective, WeightFile, WeightVector};
use crate::ingestion::{
    apply_minmax, assemble, fit_minmax, parse_ground_truth, parse_inducer_file, GroundTruth,
    IngestError, InducerTable, NormalizationParams, ScoreMatrix,
};
use crate::optimizers::{optimize, Method, OptimizeError, OptimizerConfig, OptimizerReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const NORMALIZATION_FILE: &str = "normalization.json";
pub const DEV_MATRIX_FILE: &str = "dev_normalized.csv";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const REPORT_FILE: &str = "report.json";
pub const EVAL_JSON_FILE: &str = "eval.json";
pub const EVAL_CSV_FILE: &str = "eval.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";
pub const SUMMARY_JSON_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("dev and test inducer sets differ: {0}")]
    InducerSets(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

impl PipelineError {
    /// 2 usage, 3 data, 4 optimization abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_)
            | PipelineError::Optimize(
                OptimizeError::InvalidConfig(_)
                | OptimizeError::UnknownSetting(_)
                | OptimizeError::InvalidSetting { .. },
            ) => 2,
            PipelineError::Optimize(OptimizeError::NonFinite { .. }) => 4,
            _ => 3,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn default_k() -> usize {
    10
}

/// Everything one run depends on. Inducer names are the file stems; a directory entry stands
/// for the `*.csv` files it contains, in name order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub method: Method,
    pub dev: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub truth: Vec<PathBuf>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Optimizer settings as `key = value`, e.g. `pso.swarm_size = 50`.
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
    pub out: PathBuf,
    #[serde(default)]
    pub trace: bool,
}

impl RunManifest {
    pub fn new(method: Method, dev: Vec<PathBuf>, test: Vec<PathBuf>, truth: Vec<PathBuf>, out: PathBuf) -> Self {
        Self {
            method,
            dev,
            test,
            truth,
            k: default_k(),
            seed: 0,
            overrides: BTreeMap::new(),
            out,
            trace: false,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(s).map_err(|e| PipelineError::Usage(format!("bad manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::Usage("k must be at least 1".into()));
        }
        for (what, list) in [("dev", &self.dev), ("test", &self.test), ("truth", &self.truth)] {
            if list.is_empty() {
                return Err(PipelineError::Usage(format!("no {what} files given")));
            }
        }
        Ok(())
    }

    /// The same manifest with directories replaced by the files they contribute.
    pub fn expanded(&self) -> Result<Self, PipelineError> {
        Ok(Self {
            dev: expand(&self.dev)?,
            test: expand(&self.test)?,
            truth: expand(&self.truth)?,
            ..self.clone()
        })
    }

    pub fn optimizer_config(&self, dimension: usize) -> Result<OptimizerConfig<f64>, PipelineError> {
        let mut config = OptimizerConfig::new(dimension).with_seed(self.seed);
        for (key, value) in &self.overrides {
            config.apply_override(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut files = Vec::new();
            for entry in fs::read_dir(path).map_err(|e| PipelineError::io(path, e))? {
                let p = entry.map_err(|e| PipelineError::io(path, e))?.path();
                if p.is_file() && p.extension().is_some_and(|e| e == "csv") {
                    files.push(p);
                }
            }
            if files.is_empty() {
                return Err(PipelineError::io(
                    path,
                    io::Error::new(io::ErrorKind::NotFound, "directory holds no .csv files"),
                ));
            }
            files.sort();
            out.extend(files);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}

fn open(path: &Path) -> Result<File, PipelineError> {
    File::open(path).map_err(|e| PipelineError::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_tables(paths: &[PathBuf]) -> Result<Vec<InducerTable<f64>>, PipelineError> {
    paths
        .iter()
        .map(|p| Ok(parse_inducer_file(open(p)?, &stem(p))?))
        .collect()
}

fn load_truth(paths: &[PathBuf]) -> Result<GroundTruth<f64>, PipelineError> {
    let mut truth = GroundTruth::default();
    for p in paths {
        let name = p.display().to_string();
        truth.merge(parse_ground_truth(open(p)?, &name)?, &name)?;
    }
    Ok(truth)
}

/// Reorders `test` to follow the inducer order of `dev`.
fn align_tables(
    dev: &[InducerTable<f64>],
    test: Vec<InducerTable<f64>>,
) -> Result<Vec<InducerTable<f64>>, PipelineError> {
    let mut by_name: BTreeMap<String, InducerTable<f64>> = BTreeMap::new();
    for t in test {
        let name = t.inducer_name.clone();
        if by_name.insert(name.clone(), t).is_some() {
            return Err(IngestError::DuplicateInducer(name).into());
        }
    }
    let mut aligned = Vec::with_capacity(dev.len());
    for d in dev {
        match by_name.remove(&d.inducer_name) {
            Some(t) => aligned.push(t),
            None => {
                return Err(PipelineError::InducerSets(format!(
                    "`{}` has no test file",
                    d.inducer_name
                )))
            }
        }
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(PipelineError::InducerSets(format!("`{extra}` has no dev file")));
    }
    Ok(aligned)
}

/// Dev and test matrices normalized with ranges fitted on dev.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub normalization: NormalizationParams<f64>,
    pub dev: ScoreMatrix<f64>,
    pub test: ScoreMatrix<f64>,
}

/// Parses and assembles the files of an expanded manifest.
pub fn prepare(manifest: &RunManifest) -> Result<PreparedData, PipelineError> {
    let dev_tables = load_tables(&manifest.dev)?;
    let test_tables = align_tables(&dev_tables, load_tables(&manifest.test)?)?;
    let truth = load_truth(&manifest.truth)?;
    let dev_raw = assemble(&dev_tables, &truth)?;
    let test_raw = assemble(&test_tables, &truth)?;
    let normalization = fit_minmax(&dev_raw);
    Ok(PreparedData {
        dev: apply_minmax(&normalization, &dev_raw)?,
        test: apply_minmax(&normalization, &test_raw)?,
        normalization,
    })
}

/// Writes a matrix as CSV `video_id,image_id,label,target,<inducer names...>`.
pub fn matrix_csv(matrix: &ScoreMatrix<f64>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["video_id".to_string(), "image_id".into(), "label".into(), "target".into()];
    header.extend(matrix.inducer_names().iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (i, s) in matrix.samples().iter().enumerate() {
        let mut rec = vec![
            s.video_id.clone(),
            s.image_id.clone(),
            s.label.to_string(),
            matrix.targets()[i].to_string(),
        ];
        rec.extend(matrix.row(i).iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Everything a run produced. `wall_time` (seconds) is measured but never persisted, so the
/// artifact files stay byte-identical across executions.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub weights: WeightFile<f64>,
    pub report: OptimizerReport<f64>,
    pub eval: EvalReport,
    pub wall_time: f64,
}

fn write_atomic(dir: &Path, name: &str, body: &str) -> Result<PathBuf, PipelineError> {
    let target = dir.join(name);
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
    tmp.write_all(body.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| PipelineError::io(&target, e))?;
    tmp.persist(&target).map_err(|e| PipelineError::io(&target, e.error))?;
    Ok(target)
}

/// Writes all files or, on failure, removes the ones already written.
fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in files {
        match write_atomic(dir, name, body) {
            Ok(path) => written.push(path),
            Err(e) => {
                for p in written {
                    let _ = fs::remove_file(p);
                }
                return Err(e);
            }
        }
    }
    Ok(())
}

/// Runs one experiment and writes its artifacts into `manifest.out`. Nothing is written when
/// any stage fails.
pub fn run(manifest: &RunManifest) -> Result<RunOutcome, PipelineError> {
    manifest.check()?;
    let start = Instant::now();
    let manifest = manifest.expanded()?;
    let data = prepare(&manifest)?;
    let config = manifest.optimizer_config(data.dev.n_inducers())?;
    let objective = MseObjective::new(&data.dev)?;
    let report = optimize(manifest.method, &objective, &config)?;

    let weights = WeightFile::new(
        data.dev.inducer_names().to_vec(),
        WeightVector::new(report.best_weights.clone())?,
    )?;
    let fused = fuse(&weights.weights, &data.test)?;
    let eval = map_at_k(&fused, &data.test, manifest.k)?;

    let mut files = vec![
        (MANIFEST_FILE, manifest.to_json()),
        (NORMALIZATION_FILE, data.normalization.to_json()?),
        (DEV_MATRIX_FILE, matrix_csv(&data.dev)),
        (WEIGHTS_FILE, weights.to_json()),
        (REPORT_FILE, report.to_json()),
        (EVAL_JSON_FILE, eval.to_json()),
        (EVAL_CSV_FILE, eval.to_csv()),
    ];
    if manifest.trace {
        files.push((TRACE_FILE, report.trace_csv()));
    }
    write_all(&manifest.out, &files)?;
    Ok(RunOutcome {
        manifest,
        weights,
        report,
        eval,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub dev_mse: f64,
    pub test_map_at_k: f64,
    pub evaluations: u64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub k: usize,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    /// CSV `method,dev_mse,test_map_at_<k>,evaluations,wall_time`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let map_col = format!("test_map_at_{}", self.k);
        w.write_record(["method", "dev_mse", &map_col, "evaluations", "wall_time"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.method.to_string(),
                r.dev_mse.to_string(),
                r.test_map_at_k.to_string(),
                r.evaluations.to_string(),
                format!("{:.3}", r.wall_time),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Runs every manifest (each into its own `out`) and writes `summary.csv` and
/// `summary.json` into `out`. All manifests must read the same files with the same cutoff.
pub fn compare(manifests: &[RunManifest], out: &Path) -> Result<Summary, PipelineError> {
    let first = manifests
        .first()
        .ok_or_else(|| PipelineError::Usage("compare needs at least one manifest".into()))?;
    for m in manifests {
        m.check()?;
    }
    let reference = first.expanded()?;
    for m in &manifests[1..] {
        let e = m.expanded()?;
        if (&e.dev, &e.test, &e.truth, e.k) != (&reference.dev, &reference.test, &reference.truth, reference.k) {
            return Err(PipelineError::Usage(format!(
                "manifest for `{}` reads different data than the one for `{}`",
                m.method, first.method
            )));
        }
    }
    let mut outs: Vec<&Path> = manifests.iter().map(|m| m.out.as_path()).collect();
    outs.sort();
    if outs.windows(2).any(|w| w[0] == w[1]) {
        return Err(PipelineError::Usage("manifests share an output directory".into()));
    }

    let mut rows = Vec::with_capacity(manifests.len());
    for m in manifests {
        let outcome = run(m)?;
        rows.push(SummaryRow {
            method: m.method,
            dev_mse: outcome.report.best_objective,
            test_map_at_k: outcome.eval.map_at_k,
            evaluations: outcome.report.function_evaluations,
            wall_time: outcome.wall_time,
        });
    }
    let summary = Summary { k: first.k, rows };
    write_all(
        out,
        &[(SUMMARY_CSV_FILE, summary.to_csv()), (SUMMARY_JSON_FILE, summary.to_json())],
    )?;
    Ok(summary)
}
