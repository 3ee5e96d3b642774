//! Synthetic inducer datasets with known structure, and brute-force oracles used to check the
//! optimizers and the ranking metric.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{
    apply_minmax, fit_minmax, write_ground_truth, write_inducer_file, GroundTruth, InducerRecord,
    InducerTable, IngestError, Sample, ScoreMatrix, TruthEntry,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic dataset spec: {0}")]
    InvalidSpec(String),
    #[error("grid oracle refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// `label = 1` iff planted fusion plus noise reaches the split median; the regression
    /// target is the planted fusion plus noise.
    ThresholdOnPlantedFusion,
    /// Half the samples (rounded up) relevant, chosen at random; the target is the label.
    RandomBalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub m_inducers: usize,
    pub n_videos: usize,
    /// Hidden weights; drawn uniformly from `[0, 1]` when absent.
    pub planted_weights: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub label_rule: LabelRule,
    pub seed: u64,
    /// Size of an additional held-out split normalized with the first split's ranges.
    #[serde(default)]
    pub test_samples: usize,
    /// Raw score range per inducer; by default every fifth inducer emits scores on
    /// `[-2, 5]` and the rest on `[0, 1]`.
    #[serde(default)]
    pub score_ranges: Option<Vec<(f64, f64)>>,
}

impl SynthSpec {
    pub fn new(n_samples: usize, m_inducers: usize, n_videos: usize, seed: u64) -> Self {
        Self {
            n_samples,
            m_inducers,
            n_videos,
            planted_weights: None,
            noise_sigma: 0.0,
            label_rule: LabelRule::ThresholdOnPlantedFusion,
            seed,
            test_samples: 0,
            score_ranges: None,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.m_inducers == 0 {
            return bad("m_inducers must be at least 1".into());
        }
        if self.n_videos == 0 || self.n_samples < self.n_videos {
            return bad("need n_samples >= n_videos >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative".into());
        }
        if let Some(w) = &self.planted_weights {
            if w.len() != self.m_inducers || w.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad(format!("planted_weights needs {} values in [0, 1]", self.m_inducers));
            }
        }
        if let Some(r) = &self.score_ranges {
            if r.len() != self.m_inducers || r.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
                return bad(format!("score_ranges needs {} increasing finite ranges", self.m_inducers));
            }
        }
        Ok(())
    }

    fn ranges(&self) -> Vec<(f64, f64)> {
        self.score_ranges.clone().unwrap_or_else(|| {
            (0..self.m_inducers)
                .map(|j| if j % 5 == 4 { (-2.0, 5.0) } else { (0.0, 1.0) })
                .collect()
        })
    }
}

/// One split in the ingestion formats: `m` inducer tables and their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFiles {
    pub inducers: Vec<InducerTable<f64>>,
    pub truth: GroundTruth<f64>,
}

impl SplitFiles {
    /// `(file name, CSV contents)` per inducer.
    pub fn render_inducers(&self) -> Result<Vec<(String, String)>, SynthError> {
        self.inducers
            .iter()
            .map(|t| {
                let mut buf = Vec::new();
                write_inducer_file(t, &mut buf)?;
                Ok((format!("{}.csv", t.inducer_name), String::from_utf8(buf).expect("utf-8")))
            })
            .collect()
    }

    pub fn render_truth(&self) -> Result<String, SynthError> {
        let mut buf = Vec::new();
        write_ground_truth(&self.truth, &mut buf)?;
        Ok(String::from_utf8(buf).expect("utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub planted_weights: Option<Vec<f64>>,
    pub dev: SplitFiles,
    pub test: Option<SplitFiles>,
}

/// Where [`SynthDataset::write_to`] put the files.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLayout {
    pub dev: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub truth: PathBuf,
    pub sidecar: PathBuf,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: &'a SynthSpec,
    planted_weights: &'a Option<Vec<f64>>,
}

impl SynthDataset {
    /// Writes `dev/<inducer>.csv`, `test/<inducer>.csv` (when present), one `truth.csv`
    /// covering both splits, and `synth.json` echoing the spec.
    pub fn write_to(&self, dir: &Path) -> Result<SynthLayout, SynthError> {
        let mut truth = self.dev.truth.clone();
        let mut layout = SynthLayout {
            dev: Vec::new(),
            test: Vec::new(),
            truth: dir.join("truth.csv"),
            sidecar: dir.join("synth.json"),
        };
        for (split, name, paths) in [
            (Some(&self.dev), "dev", &mut layout.dev),
            (self.test.as_ref(), "test", &mut layout.test),
        ] {
            let Some(split) = split else { continue };
            let sub = dir.join(name);
            fs::create_dir_all(&sub)?;
            for (file, body) in split.render_inducers()? {
                let path = sub.join(file);
                fs::write(&path, body)?;
                paths.push(path);
            }
            if name == "test" {
                truth.merge(split.truth.clone(), "test split")?;
            }
        }
        let mut buf = Vec::new();
        write_ground_truth(&truth, &mut buf)?;
        fs::write(&layout.truth, buf)?;
        let sidecar = Sidecar {
            spec: &self.spec,
            planted_weights: &self.planted_weights,
        };
        let mut json = serde_json::to_string_pretty(&sidecar).map_err(IngestError::from)?;
        json.push('\n');
        fs::write(&layout.sidecar, json)?;
        Ok(layout)
    }
}

fn inducer_name(j: usize) -> String {
    format!("inducer_{j:02}")
}

struct RawSplit {
    samples: Vec<(String, String)>,
    scores: Vec<f64>,
}

fn draw_split(prefix: char, n: usize, spec: &SynthSpec, ranges: &[(f64, f64)], rng: &mut ChaCha8Rng) -> RawSplit {
    let m = spec.m_inducers;
    let mut scores = Vec::with_capacity(n * m);
    let samples = (0..n)
        .map(|i| (format!("v{:03}", i % spec.n_videos), format!("{prefix}{i:05}")))
        .collect();
    for _ in 0..n {
        for &(lo, hi) in ranges {
            scores.push(lo + rng.random::<f64>() * (hi - lo));
        }
    }
    RawSplit { samples, scores }
}

fn as_matrix(raw: &RawSplit, m: usize) -> Result<ScoreMatrix<f64>, SynthError> {
    let samples = raw
        .samples
        .iter()
        .map(|(v, i)| Sample {
            video_id: v.clone(),
            image_id: i.clone(),
            label: 0,
        })
        .collect();
    Ok(ScoreMatrix::from_parts(
        samples,
        vec![0.0; raw.samples.len()],
        (0..m).map(inducer_name).collect(),
        raw.scores.clone(),
    )?)
}

/// Generates a dataset; the same spec (seed included) always yields identical files.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset, SynthError> {
    spec.validate()?;
    let m = spec.m_inducers;
    let ranges = spec.ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let planted = match spec.label_rule {
        LabelRule::ThresholdOnPlantedFusion => Some(
            spec.planted_weights
                .clone()
                .unwrap_or_else(|| (0..m).map(|_| rng.random::<f64>()).collect()),
        ),
        LabelRule::RandomBalanced => None,
    };

    let dev_raw = draw_split('d', spec.n_samples, spec, &ranges, &mut rng);
    let test_raw = (spec.test_samples > 0).then(|| draw_split('t', spec.test_samples, spec, &ranges, &mut rng));

    let dev_matrix = as_matrix(&dev_raw, m)?;
    let params = fit_minmax(&dev_matrix);

    let mut build = |raw: &RawSplit| -> Result<SplitFiles, SynthError> {
        let normalized = apply_minmax(&params, &as_matrix(raw, m)?)?;
        let n = raw.samples.len();
        let (labels, targets): (Vec<u8>, Vec<Option<f64>>) = match &planted {
            Some(w) => {
                let values: Vec<f64> = normalized
                    .rows()
                    .map(|row| {
                        let mut fused = 0.0;
                        for (wj, sj) in w.iter().zip(row) {
                            fused += wj * sj;
                        }
                        if spec.noise_sigma > 0.0 {
                            let z: f64 = rng.sample(StandardNormal);
                            fused += spec.noise_sigma * z;
                        }
                        fused
                    })
                    .collect();
                let mut sorted = values.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                let median = sorted[n / 2];
                (
                    values.iter().map(|&v| u8::from(v >= median)).collect(),
                    values.into_iter().map(Some).collect(),
                )
            }
            None => {
                let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n.div_ceil(2))).collect();
                labels.shuffle(&mut rng);
                (labels, vec![None; n])
            }
        };

        let inducers = (0..m)
            .map(|j| InducerTable {
                inducer_name: inducer_name(j),
                records: raw
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(i, (v, img))| {
                        let raw_score = raw.scores[i * m + j];
                        let (lo, hi) = ranges[j];
                        InducerRecord {
                            video_id: v.clone(),
                            image_id: img.clone(),
                            class_label: u8::from((raw_score - lo) / (hi - lo) >= 0.5),
                            raw_score,
                        }
                    })
                    .collect(),
            })
            .collect();
        let truth = GroundTruth {
            entries: raw
                .samples
                .iter()
                .cloned()
                .zip(labels.into_iter().zip(targets))
                .map(|(key, (label, target))| (key, TruthEntry { label, target }))
                .collect(),
        };
        Ok(SplitFiles { inducers, truth })
    };

    let dev = build(&dev_raw)?;
    let test = test_raw.as_ref().map(&mut build).transpose()?;
    Ok(SynthDataset {
        spec: spec.clone(),
        planted_weights: planted,
        dev,
        test,
    })
}

/// Best lattice point found by [`grid_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum<T> {
    pub weights: Vec<T>,
    pub objective: T,
    pub evaluations: usize,
}

/// Exhaustive minimization of the MSE over `{0, step, ..., 1}^m` for `m ≤ 4`. Points are
/// visited in lexicographic order and only a strictly smaller value replaces the incumbent,
/// so ties resolve to the lexicographically first point. The MSE is computed here from its
/// definition, independently of the fusion module.
pub fn grid_oracle<T: Scalar>(matrix: &ScoreMatrix<T>, step: f64) -> Result<GridOptimum<T>, SynthError> {
    let m = matrix.n_inducers();
    if m > 4 {
        return Err(SynthError::Refused(format!("{m} inducers; at most 4 are searched exhaustively")));
    }
    if matrix.n_samples() == 0 {
        return Err(SynthError::Refused("empty matrix".into()));
    }
    let divisions = (1.0 / step).round();
    if !(step > 0.0) || divisions < 1.0 || (divisions * step - 1.0).abs() > 1e-9 {
        return Err(SynthError::Refused(format!("step {step} does not divide 1 evenly")));
    }
    let divisions = divisions as usize;
    let lattice: Vec<T> = (0..=divisions)
        .map(|i| T::from_count(i) / T::from_count(divisions))
        .collect();

    let n = matrix.n_samples();
    let m_cols = m;
    let scores = matrix.scores();
    let targets = matrix.targets();
    let objective = |w: &[T]| -> T {
        let mut total = T::zero();
        for i in 0..n {
            let mut predicted = T::zero();
            for j in 0..m_cols {
                predicted += w[j] * scores[i * m_cols + j];
            }
            let err = predicted - targets[i];
            total += err * err;
        }
        total / T::from_count(n)
    };

    let mut index = vec![0usize; m];
    let mut point: Vec<T> = vec![lattice[0]; m];
    let mut best = GridOptimum {
        weights: point.clone(),
        objective: objective(&point),
        evaluations: 1,
    };
    loop {
        let mut d = m;
        loop {
            if d == 0 {
                return Ok(best);
            }
            d -= 1;
            if index[d] < divisions {
                index[d] += 1;
                break;
            }
            index[d] = 0;
        }
        for j in 0..m {
            point[j] = lattice[index[j]];
        }
        let f = objective(&point);
        best.evaluations += 1;
        if f < best.objective {
            best.objective = f;
            best.weights.clone_from(&point);
        }
    }
}

/// AP@k by the literal definition: precision at every relevant rank within the cutoff,
/// counted from scratch, averaged over `min(R, k)`. Intended for short lists.
pub fn ap_oracle(relevances: &[bool], k: usize) -> f64 {
    let total_relevant = relevances.iter().filter(|&&r| r).count();
    if total_relevant == 0 || k == 0 {
        return 0.0;
    }
    let cutoff = if k < relevances.len() { k } else { relevances.len() };
    let mut total = 0.0;
    for rank in 1..=cutoff {
        if !relevances[rank - 1] {
            continue;
        }
        let mut relevant_so_far = 0usize;
        for q in 1..=rank {
            if relevances[q - 1] {
                relevant_so_far += 1;
            }
        }
        total += relevant_so_far as f64 / rank as f64;
    }
    let normalizer = if total_relevant < k { total_relevant } else { k };
    total / normalizer as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{assemble, parse_ground_truth, parse_inducer_file};

    fn load(split: &SplitFiles) -> ScoreMatrix<f64> {
        let tables: Vec<InducerTable<f64>> = split
            .render_inducers()
            .unwrap()
            .iter()
            .map(|(name, body)| parse_inducer_file(body.as_bytes(), name.trim_end_matches(".csv")).unwrap())
            .collect();
        let truth = parse_ground_truth(split.render_truth().unwrap().as_bytes(), "truth").unwrap();
        assemble(&tables, &truth).unwrap()
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SynthSpec::new(10, 2, 2, 7);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.dev.render_inducers().unwrap(), b.dev.render_inducers().unwrap());
        assert_eq!(a.dev.render_truth().unwrap(), b.dev.render_truth().unwrap());
        let c = generate(&SynthSpec::new(10, 2, 2, 8)).unwrap();
        assert_ne!(a.dev.render_truth().unwrap(), c.dev.render_truth().unwrap());
    }

    #[test]
    fn basis_planted_weights_threshold_single_inducer() {
        let mut spec = SynthSpec::new(40, 2, 4, 11);
        spec.planted_weights = Some(vec![1.0, 0.0]);
        let data = generate(&spec).unwrap();
        let m = apply_minmax(&fit_minmax(&load(&data.dev)), &load(&data.dev)).unwrap();
        let column: Vec<f64> = m.column(0).collect();
        let mut sorted = column.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[column.len() / 2];
        for (s, &c) in m.samples().iter().zip(&column) {
            assert_eq!(s.label, u8::from(c >= median));
        }
        assert_eq!(m.samples().iter().filter(|s| s.label == 1).count(), 20);
    }

    #[test]
    fn random_balanced_labels() {
        let mut spec = SynthSpec::new(31, 3, 3, 5);
        spec.label_rule = LabelRule::RandomBalanced;
        let data = generate(&spec).unwrap();
        assert!(data.planted_weights.is_none());
        let ones = data.dev.truth.entries.values().filter(|e| e.label == 1).count();
        assert_eq!(ones, 16);
        assert!(data.dev.truth.entries.values().all(|e| e.target.is_none()));
    }

    #[test]
    fn out_of_range_columns_present() {
        let data = generate(&SynthSpec::new(50, 5, 5, 1)).unwrap();
        let col = &data.dev.inducers[4].records;
        assert!(col.iter().any(|r| r.raw_score < 0.0) && col.iter().any(|r| r.raw_score > 1.0));
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec::new(3, 2, 5, 0)).is_err());
        assert!(generate(&SynthSpec::new(3, 0, 1, 0)).is_err());
        let mut s = SynthSpec::new(3, 2, 1, 0);
        s.planted_weights = Some(vec![0.5]);
        assert!(generate(&s).is_err());
    }

    #[test]
    fn grid_oracle_counts_and_refusals() {
        let data = generate(&SynthSpec::new(30, 3, 3, 2)).unwrap();
        let m = load(&data.dev);
        let r = grid_oracle(&m, 0.05).unwrap();
        assert_eq!(r.evaluations, 9261);
        let wide = load(&generate(&SynthSpec::new(10, 5, 1, 2)).unwrap().dev);
        assert!(matches!(grid_oracle(&wide, 0.5), Err(SynthError::Refused(_))));
        assert!(matches!(grid_oracle(&m, 0.3), Err(SynthError::Refused(_))));
    }

    #[test]
    fn grid_oracle_single_inducer() {
        // y equals the (binary) column itself: w = 1 is optimal with zero error.
        let samples = (0..4)
            .map(|i| Sample { video_id: "v".into(), image_id: format!("{i}"), label: (i % 2) as u8 })
            .collect();
        let m = ScoreMatrix::from_parts(samples, vec![0.0, 1.0, 0.0, 1.0], vec!["a".into()], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = grid_oracle(&m, 0.1).unwrap();
        assert_eq!(r.weights, vec![1.0]);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.evaluations, 11);
    }

    #[test]
    fn ap_oracle_examples() {
        assert!((ap_oracle(&[true, false, true], 10) - 0.8333333333333334).abs() < 1e-15);
        assert_eq!(ap_oracle(&[false, false, false], 10), 0.0);
        assert_eq!(ap_oracle(&[true], 1), 1.0);
    }

    #[test]
    fn full_scale_split_shapes() {
        let mut spec = SynthSpec::new(1877, 29, 60, 3);
        spec.test_samples = 558;
        let data = generate(&spec).unwrap();
        assert_eq!(load(&data.dev).n_samples(), 1877);
        let test = load(data.test.as_ref().unwrap());
        assert_eq!((test.n_samples(), test.n_inducers()), (558, 29));
    }
}
