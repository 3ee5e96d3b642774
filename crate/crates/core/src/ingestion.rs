//! Inducer score files, ground truth, score-matrix assembly and min-max normalization.
//!
//! Inducer files are CSV with header `video_id,image_id,class,score`. The ground-truth file
//! has header `video_id,image_id,label`, optionally followed by a `target` column holding a
//! real-valued regression target; without it the binary label is the target.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{clamp, Scalar};

pub const INDUCER_HEADER: [&str; 4] = ["video_id", "image_id", "class", "score"];
pub const TRUTH_HEADER: [&str; 3] = ["video_id", "image_id", "label"];
pub const TRUTH_TARGET_COLUMN: &str = "target";

/// `(video_id, image_id)`; orders samples lexicographically.
pub type SampleKey = (String, String);

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}: {reason} at line {line}")]
    Malformed {
        source_name: String,
        line: u64,
        reason: String,
    },
    #[error("{source_name}: expected header `{expected}`, found `{found}`")]
    Header {
        source_name: String,
        expected: String,
        found: String,
    },
    #[error("{source_name}: duplicate key ({video_id}, {image_id}) at line {line}")]
    DuplicateKey {
        source_name: String,
        video_id: String,
        image_id: String,
        line: u64,
    },
    #[error("inducer `{inducer}` does not cover the same samples as `{reference}`: {}", format_keys(.offending))]
    Alignment {
        inducer: String,
        reference: String,
        offending: Vec<SampleKey>,
    },
    #[error("ground truth has no label for {}", format_keys(.keys))]
    MissingLabel { keys: Vec<SampleKey> },
    #[error("at least one inducer table is required")]
    NoInducers,
    #[error("inducer name `{0}` appears more than once")]
    DuplicateInducer(String),
    #[error("no normalization range for inducer `{0}`")]
    MissingNormalization(String),
    #[error("invalid score matrix: {0}")]
    Shape(String),
    #[error("{source_name}: {error}")]
    Csv {
        source_name: String,
        #[source]
        error: csv::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_keys(keys: &[SampleKey]) -> String {
    const SHOWN: usize = 8;
    let mut out = keys
        .iter()
        .take(SHOWN)
        .map(|(v, i)| format!("({v}, {i})"))
        .collect::<Vec<_>>()
        .join(", ");
    if keys.len() > SHOWN {
        out.push_str(&format!(" and {} more", keys.len() - SHOWN));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducerRecord<T> {
    pub video_id: String,
    pub image_id: String,
    pub class_label: u8,
    pub raw_score: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducerTable<T> {
    pub inducer_name: String,
    pub records: Vec<InducerRecord<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthEntry<T> {
    pub label: u8,
    pub target: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth<T> {
    pub entries: BTreeMap<SampleKey, TruthEntry<T>>,
}

impl<T: Scalar> GroundTruth<T> {
    /// Merges `other` into `self`, rejecting keys present in both.
    pub fn merge(&mut self, other: GroundTruth<T>, source_name: &str) -> Result<(), IngestError> {
        for (key, entry) in other.entries {
            if self.entries.contains_key(&key) {
                return Err(IngestError::DuplicateKey {
                    source_name: source_name.to_string(),
                    video_id: key.0,
                    image_id: key.1,
                    line: 0,
                });
            }
            self.entries.insert(key, entry);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub video_id: String,
    pub image_id: String,
    pub label: u8,
}

/// n samples × m inducers, row-major, plus per-sample identity, binary label and regression
/// target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T> {
    samples: Vec<Sample>,
    targets: Vec<T>,
    inducer_names: Vec<String>,
    scores: Vec<T>,
}

impl<T: Scalar> ScoreMatrix<T> {
    /// Builds a matrix from its parts. Row order is taken as given; [`assemble`] is the
    /// constructor that produces the canonical `(video_id, image_id)` order.
    pub fn from_parts(
        samples: Vec<Sample>,
        targets: Vec<T>,
        inducer_names: Vec<String>,
        scores: Vec<T>,
    ) -> Result<Self, IngestError> {
        let n = samples.len();
        let m = inducer_names.len();
        if m == 0 {
            return Err(IngestError::NoInducers);
        }
        if targets.len() != n {
            return Err(IngestError::Shape(format!(
                "{} targets for {n} samples",
                targets.len()
            )));
        }
        if scores.len() != n * m {
            return Err(IngestError::Shape(format!(
                "{} scores for a {n}x{m} matrix",
                scores.len()
            )));
        }
        if let Some(s) = samples.iter().find(|s| s.label > 1) {
            return Err(IngestError::Shape(format!(
                "label {} of ({}, {}) is not binary",
                s.label, s.video_id, s.image_id
            )));
        }
        if scores.iter().chain(&targets).any(|x| !x.is_finite()) {
            return Err(IngestError::Shape("non-finite value".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &inducer_names {
            if !seen.insert(name) {
                return Err(IngestError::DuplicateInducer(name.clone()));
            }
        }
        Ok(Self {
            samples,
            targets,
            inducer_names,
            scores,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_inducers(&self) -> usize {
        self.inducer_names.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn inducer_names(&self) -> &[String] {
        &self.inducer_names
    }

    /// Regression target `y_a` per row.
    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    /// Row-major `n × m` scores.
    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let m = self.n_inducers();
        &self.scores[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.scores.chunks_exact(self.n_inducers())
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Returns a copy with rows reordered so that new row `i` is old row `order[i]`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.n_samples(), "permutation length");
        let mut scores = Vec::with_capacity(self.scores.len());
        for &i in order {
            scores.extend_from_slice(self.row(i));
        }
        Self {
            samples: order.iter().map(|&i| self.samples[i].clone()).collect(),
            targets: order.iter().map(|&i| self.targets[i]).collect(),
            inducer_names: self.inducer_names.clone(),
            scores,
        }
    }
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_score<T: Scalar>(field: &str, what: &str, source_name: &str, line: u64) -> Result<T, IngestError> {
    let value: T = field.parse().map_err(|_| IngestError::Malformed {
        source_name: source_name.to_string(),
        line,
        reason: format!("non-numeric {what} `{field}`"),
    })?;
    if !value.is_finite() {
        return Err(IngestError::Malformed {
            source_name: source_name.to_string(),
            line,
            reason: format!("non-finite {what} `{field}`"),
        });
    }
    Ok(value)
}

fn parse_binary(field: &str, what: &str, source_name: &str, line: u64) -> Result<u8, IngestError> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(IngestError::Malformed {
            source_name: source_name.to_string(),
            line,
            reason: format!("{what} out of {{0,1}} (`{field}`)"),
        }),
    }
}

fn read_header<R: Read>(
    records: &mut csv::StringRecordsIntoIter<R>,
    source_name: &str,
    expected: &str,
) -> Result<csv::StringRecord, IngestError> {
    match records.next() {
        Some(Ok(header)) => Ok(header),
        Some(Err(error)) => Err(IngestError::Csv {
            source_name: source_name.to_string(),
            error,
        }),
        None => Err(IngestError::Header {
            source_name: source_name.to_string(),
            expected: expected.to_string(),
            found: String::new(),
        }),
    }
}

/// Parses one inducer's prediction file. Records keep file order.
pub fn parse_inducer_file<T: Scalar, R: Read>(
    source: R,
    inducer_name: &str,
) -> Result<InducerTable<T>, IngestError> {
    let mut records = csv_reader(source).into_records();
    let expected = INDUCER_HEADER.join(",");
    let header = read_header(&mut records, inducer_name, &expected)?;
    if header.iter().ne(INDUCER_HEADER) {
        return Err(IngestError::Header {
            source_name: inducer_name.to_string(),
            expected,
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for record in records {
        let record = record.map_err(|error| IngestError::Csv {
            source_name: inducer_name.to_string(),
            error,
        })?;
        let line = record_line(&record);
        if record.len() != INDUCER_HEADER.len() {
            return Err(IngestError::Malformed {
                source_name: inducer_name.to_string(),
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let class_label = parse_binary(&record[2], "class", inducer_name, line)?;
        let raw_score = parse_score(&record[3], "score", inducer_name, line)?;
        let key = (record[0].to_string(), record[1].to_string());
        if seen.insert(key.clone(), line).is_some() {
            return Err(IngestError::DuplicateKey {
                source_name: inducer_name.to_string(),
                video_id: key.0,
                image_id: key.1,
                line,
            });
        }
        out.push(InducerRecord {
            video_id: key.0,
            image_id: key.1,
            class_label,
            raw_score,
        });
    }
    Ok(InducerTable {
        inducer_name: inducer_name.to_string(),
        records: out,
    })
}

/// Parses a ground-truth file (`video_id,image_id,label[,target]`).
pub fn parse_ground_truth<T: Scalar, R: Read>(
    source: R,
    source_name: &str,
) -> Result<GroundTruth<T>, IngestError> {
    let mut records = csv_reader(source).into_records();
    let expected = TRUTH_HEADER.join(",");
    let header = read_header(&mut records, source_name, &expected)?;
    let with_target = match header.len() {
        3 => false,
        4 if &header[3] == TRUTH_TARGET_COLUMN => true,
        _ => {
            return Err(IngestError::Header {
                source_name: source_name.to_string(),
                expected,
                found: header.iter().collect::<Vec<_>>().join(","),
            })
        }
    };
    if header.iter().take(3).ne(TRUTH_HEADER) {
        return Err(IngestError::Header {
            source_name: source_name.to_string(),
            expected,
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let width = header.len();
    let mut truth = GroundTruth::default();
    for record in records {
        let record = record.map_err(|error| IngestError::Csv {
            source_name: source_name.to_string(),
            error,
        })?;
        let line = record_line(&record);
        if record.len() != width {
            return Err(IngestError::Malformed {
                source_name: source_name.to_string(),
                line,
                reason: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let label = parse_binary(&record[2], "label", source_name, line)?;
        let target = if with_target {
            Some(parse_score(&record[3], "target", source_name, line)?)
        } else {
            None
        };
        let key = (record[0].to_string(), record[1].to_string());
        if truth.entries.contains_key(&key) {
            return Err(IngestError::DuplicateKey {
                source_name: source_name.to_string(),
                video_id: key.0,
                image_id: key.1,
                line,
            });
        }
        truth.entries.insert(key, TruthEntry { label, target });
    }
    Ok(truth)
}

/// Aligns `m` inducer tables into one matrix. Rows come out sorted by `(video_id, image_id)`,
/// column `j` holds table `j`'s raw scores and labels/targets come from `truth`.
pub fn assemble<T: Scalar>(
    tables: &[InducerTable<T>],
    truth: &GroundTruth<T>,
) -> Result<ScoreMatrix<T>, IngestError> {
    let reference = tables.first().ok_or(IngestError::NoInducers)?;
    let mut names = BTreeSet::new();
    for table in tables {
        if !names.insert(table.inducer_name.as_str()) {
            return Err(IngestError::DuplicateInducer(table.inducer_name.clone()));
        }
    }

    let keys: BTreeSet<SampleKey> = reference
        .records
        .iter()
        .map(|r| (r.video_id.clone(), r.image_id.clone()))
        .collect();

    let mut lookups = Vec::with_capacity(tables.len());
    for table in tables {
        let lookup: HashMap<(&str, &str), T> = table
            .records
            .iter()
            .map(|r| ((r.video_id.as_str(), r.image_id.as_str()), r.raw_score))
            .collect();
        let mut offending: Vec<SampleKey> = table
            .records
            .iter()
            .map(|r| (r.video_id.clone(), r.image_id.clone()))
            .filter(|k| !keys.contains(k))
            .collect();
        offending.extend(
            keys.iter()
                .filter(|(v, i)| !lookup.contains_key(&(v.as_str(), i.as_str())))
                .cloned(),
        );
        if !offending.is_empty() {
            offending.sort();
            return Err(IngestError::Alignment {
                inducer: table.inducer_name.clone(),
                reference: reference.inducer_name.clone(),
                offending,
            });
        }
        lookups.push(lookup);
    }

    let missing: Vec<SampleKey> = keys
        .iter()
        .filter(|k| !truth.entries.contains_key(*k))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingLabel { keys: missing });
    }

    let m = tables.len();
    let mut samples = Vec::with_capacity(keys.len());
    let mut targets = Vec::with_capacity(keys.len());
    let mut scores = Vec::with_capacity(keys.len() * m);
    for key in &keys {
        let entry = truth.entries[key];
        for lookup in &lookups {
            scores.push(lookup[&(key.0.as_str(), key.1.as_str())]);
        }
        targets.push(entry.target.unwrap_or_else(|| T::from_count(entry.label as usize)));
        samples.push(Sample {
            video_id: key.0.clone(),
            image_id: key.1.clone(),
            label: entry.label,
        });
    }
    ScoreMatrix::from_parts(
        samples,
        targets,
        tables.iter().map(|t| t.inducer_name.clone()).collect(),
        scores,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax<T> {
    pub min: T,
    pub max: T,
}

/// Per-inducer min-max ranges, serialized as `{ "inducer": {"min": x, "max": y}, ... }` in
/// column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct NormalizationParams<T> {
    pub ranges: IndexMap<String, MinMax<T>>,
}

impl<T: Scalar> NormalizationParams<T> {
    pub fn to_json(&self) -> Result<String, IngestError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, IngestError> {
        let params: Self = serde_json::from_str(s)?;
        if let Some((name, _)) = params
            .ranges
            .iter()
            .find(|(_, r)| !(r.min.is_finite() && r.max.is_finite() && r.min <= r.max))
        {
            return Err(IngestError::Shape(format!("invalid range for `{name}`")));
        }
        Ok(params)
    }
}

/// Fits per-column min and max over all rows.
pub fn fit_minmax<T: Scalar>(matrix: &ScoreMatrix<T>) -> NormalizationParams<T> {
    let ranges = matrix
        .inducer_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (min, max) = matrix
                .column(j)
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
            (name.clone(), MinMax { min, max })
        })
        .collect();
    NormalizationParams { ranges }
}

/// Maps column `j` through `(x - min_j) / (max_j - min_j)` clamped to `[0, 1]`. Constant
/// columns (`max_j == min_j`) become all zeros. Ranges are looked up by inducer name.
pub fn apply_minmax<T: Scalar>(
    params: &NormalizationParams<T>,
    matrix: &ScoreMatrix<T>,
) -> Result<ScoreMatrix<T>, IngestError> {
    let ranges = matrix
        .inducer_names()
        .iter()
        .map(|name| {
            params
                .ranges
                .get(name)
                .copied()
                .ok_or_else(|| IngestError::MissingNormalization(name.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let scores = matrix
        .rows()
        .flat_map(|row| {
            row.iter().zip(&ranges).map(|(&x, r)| {
                let span = r.max - r.min;
                if span > T::zero() {
                    clamp((x - r.min) / span, T::zero(), T::one())
                } else {
                    T::zero()
                }
            })
        })
        .collect();
    Ok(ScoreMatrix {
        samples: matrix.samples.clone(),
        targets: matrix.targets.clone(),
        inducer_names: matrix.inducer_names.clone(),
        scores,
    })
}

/// Writes an inducer table in the ingestion format; scores use shortest round-trip formatting.
pub fn write_inducer_file<T: Scalar, W: Write>(
    table: &InducerTable<T>,
    sink: W,
) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    let wrap = |error| IngestError::Csv {
        source_name: table.inducer_name.clone(),
        error,
    };
    w.write_record(INDUCER_HEADER).map_err(wrap)?;
    for r in &table.records {
        w.write_record([
            r.video_id.as_str(),
            r.image_id.as_str(),
            if r.class_label == 1 { "1" } else { "0" },
            &r.raw_score.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))
}

/// Writes ground truth; the `target` column is emitted when any entry carries one.
pub fn write_ground_truth<T: Scalar, W: Write>(
    truth: &GroundTruth<T>,
    sink: W,
) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    let wrap = |error| IngestError::Csv {
        source_name: "ground truth".into(),
        error,
    };
    let with_target = truth.entries.values().any(|e| e.target.is_some());
    let mut header = TRUTH_HEADER.to_vec();
    if with_target {
        header.push(TRUTH_TARGET_COLUMN);
    }
    w.write_record(&header).map_err(wrap)?;
    for ((video, image), e) in &truth.entries {
        let label = if e.label == 1 { "1" } else { "0" };
        if with_target {
            let target = e.target.unwrap_or_else(|| T::from_count(e.label as usize));
            w.write_record([video.as_str(), image.as_str(), label, &target.to_string()])
        } else {
            w.write_record([video.as_str(), image.as_str(), label])
        }
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(name: &str, rows: &[(&str, &str, f64)]) -> InducerTable<f64> {
        InducerTable {
            inducer_name: name.into(),
            records: rows
                .iter()
                .map(|&(v, i, s)| InducerRecord {
                    video_id: v.into(),
                    image_id: i.into(),
                    class_label: 0,
                    raw_score: s,
                })
                .collect(),
        }
    }

    fn truth(keys: &[(&str, &str, u8)]) -> GroundTruth<f64> {
        GroundTruth {
            entries: keys
                .iter()
                .map(|&(v, i, l)| {
                    ((v.into(), i.into()), TruthEntry { label: l, target: None })
                })
                .collect(),
        }
    }

    fn single_column(values: &[f64]) -> ScoreMatrix<f64> {
        let samples = (0..values.len())
            .map(|i| Sample {
                video_id: "v".into(),
                image_id: format!("i{i}"),
                label: 0,
            })
            .collect();
        ScoreMatrix::from_parts(samples, vec![0.0; values.len()], vec!["a".into()], values.to_vec())
            .unwrap()
    }

    #[test]
    fn parses_record_fields() {
        let src = "video_id,image_id,class,score\nv1,i1,1,0.73\n";
        let t: InducerTable<f64> = parse_inducer_file(src.as_bytes(), "ind").unwrap();
        assert_eq!(
            t.records,
            vec![InducerRecord {
                video_id: "v1".into(),
                image_id: "i1".into(),
                class_label: 1,
                raw_score: 0.73
            }]
        );
    }

    #[test]
    fn rejects_class_out_of_range_with_line() {
        let src = "video_id,image_id,class,score\nv0,i0,0,0.1\nv1,i1,2,0.5\n";
        let err = parse_inducer_file::<f64, _>(src.as_bytes(), "ind").unwrap_err();
        match &err {
            IngestError::Malformed { line, reason, .. } => {
                assert_eq!(*line, 3);
                assert!(reason.contains("class out of {0,1}"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("at line 3"));
    }

    #[test]
    fn rejects_duplicate_key() {
        let src = "video_id,image_id,class,score\nv1,i1,0,0.2\nv1,i1,0,0.2\n";
        let err = parse_inducer_file::<f64, _>(src.as_bytes(), "ind").unwrap_err();
        assert!(matches!(err, IngestError::DuplicateKey { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn rejects_malformed_lines() {
        for (body, needle) in [
            ("v1,i1,1\n", "expected 4 fields"),
            ("v1,i1,1,abc\n", "non-numeric score"),
            ("v1,i1,1,NaN\n", "non-finite score"),
            ("v1,i1,1,inf\n", "non-finite score"),
        ] {
            let src = format!("video_id,image_id,class,score\n{body}");
            let err = parse_inducer_file::<f64, _>(src.as_bytes(), "ind").unwrap_err();
            assert!(err.to_string().contains(needle), "{err}");
            assert!(err.to_string().contains("line 2"), "{err}");
        }
        let err = parse_inducer_file::<f64, _>("a,b,c,d\n".as_bytes(), "ind").unwrap_err();
        assert!(matches!(err, IngestError::Header { .. }));
        let err = parse_inducer_file::<f64, _>("".as_bytes(), "ind").unwrap_err();
        assert!(matches!(err, IngestError::Header { .. }));
    }

    #[test]
    fn parses_truth_with_and_without_target() {
        let t: GroundTruth<f64> =
            parse_ground_truth("video_id,image_id,label\nv,a,1\nv,b,0\n".as_bytes(), "t").unwrap();
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.entries[&("v".into(), "a".into())].label, 1);
        let t: GroundTruth<f64> = parse_ground_truth(
            "video_id,image_id,label,target\nv,a,1,0.25\n".as_bytes(),
            "t",
        )
        .unwrap();
        assert_eq!(t.entries[&("v".into(), "a".into())].target, Some(0.25));
        assert!(parse_ground_truth::<f64, _>("video_id,image_id,label\nv,a,1\nv,a,0\n".as_bytes(), "t").is_err());
        assert!(parse_ground_truth::<f64, _>("video_id,image_id,label\nv,a,3\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn assemble_orders_rows_by_key() {
        let a = table("a", &[("v1", "i2", 0.2), ("v1", "i1", 0.1)]);
        let b = table("b", &[("v1", "i1", 1.1), ("v1", "i2", 1.2)]);
        let m = assemble(&[a, b], &truth(&[("v1", "i1", 1), ("v1", "i2", 0)])).unwrap();
        assert_eq!(m.n_samples(), 2);
        assert_eq!(m.n_inducers(), 2);
        assert_eq!(m.samples()[0].image_id, "i1");
        assert_eq!(m.row(0), &[0.1, 1.1]);
        assert_eq!(m.row(1), &[0.2, 1.2]);
        assert_eq!(m.targets(), &[1.0, 0.0]);
    }

    #[test]
    fn assemble_rejects_misaligned_and_unlabelled() {
        let a = table("a", &[("v1", "i1", 0.1)]);
        let b = table("b", &[("v2", "i9", 0.1)]);
        let t = truth(&[("v1", "i1", 1), ("v2", "i9", 1)]);
        match assemble(&[a.clone(), b], &t).unwrap_err() {
            IngestError::Alignment { offending, .. } => assert_eq!(offending.len(), 2),
            e => panic!("{e:?}"),
        }
        let err = assemble(&[a.clone()], &truth(&[])).unwrap_err();
        assert!(matches!(err, IngestError::MissingLabel { .. }));
        let err = assemble(&[a.clone(), a], &t).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateInducer(_)));
        assert!(matches!(assemble::<f64>(&[], &t).unwrap_err(), IngestError::NoInducers));
    }

    #[test]
    fn fit_minmax_examples() {
        let p = fit_minmax(&single_column(&[2.0, 4.0, 6.0]));
        assert_eq!(p.ranges["a"], MinMax { min: 2.0, max: 6.0 });
        let p = fit_minmax(&single_column(&[0.5, 0.5]));
        assert_eq!(p.ranges["a"], MinMax { min: 0.5, max: 0.5 });
        let p = fit_minmax(&single_column(&[-1.0, 0.0, 3.0]));
        assert_eq!(p.ranges["a"], MinMax { min: -1.0, max: 3.0 });
    }

    #[test]
    fn apply_minmax_examples() {
        let dev = single_column(&[2.0, 4.0, 6.0]);
        let p = fit_minmax(&dev);
        assert_eq!(apply_minmax(&p, &dev).unwrap().scores(), &[0.0, 0.5, 1.0]);
        let test = single_column(&[8.0, -3.0]);
        assert_eq!(apply_minmax(&p, &test).unwrap().scores(), &[1.0, 0.0]);
        let flat = single_column(&[0.5, 0.5, 0.5]);
        let p = fit_minmax(&flat);
        assert_eq!(apply_minmax(&p, &flat).unwrap().scores(), &[0.0, 0.0, 0.0]);

        let mut other = NormalizationParams { ranges: IndexMap::new() };
        other.ranges.insert("zzz".into(), MinMax { min: 0.0, max: 1.0 });
        assert!(matches!(
            apply_minmax(&other, &flat).unwrap_err(),
            IngestError::MissingNormalization(_)
        ));
    }

    #[test]
    fn normalization_json_round_trips_bits() {
        let p = fit_minmax(&single_column(&[0.1, 1.0 / 3.0, 7.0e-17]));
        let json = p.to_json().unwrap();
        assert!(json.contains("\"a\""));
        let back = NormalizationParams::<f64>::from_json(&json).unwrap();
        assert_eq!(back, p);
        assert!(NormalizationParams::<f64>::from_json(r#"{"a":{"min":2,"max":1}}"#).is_err());
    }

    #[test]
    fn writers_feed_parsers() {
        let t = table("a", &[("v1", "i1", 0.1 + 0.2), ("v1", "i2", -1e-300)]);
        let mut buf = Vec::new();
        write_inducer_file(&t, &mut buf).unwrap();
        let back: InducerTable<f64> = parse_inducer_file(buf.as_slice(), "a").unwrap();
        assert_eq!(back, t);

        let mut g = truth(&[("v1", "i1", 1)]);
        let mut buf = Vec::new();
        write_ground_truth(&g, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "video_id,image_id,label\nv1,i1,1\n");
        g.entries.values_mut().for_each(|e| e.target = Some(0.625));
        let mut buf = Vec::new();
        write_ground_truth(&g, &mut buf).unwrap();
        let back: GroundTruth<f64> = parse_ground_truth(buf.as_slice(), "t").unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn single_precision_ingestion() {
        let src = "video_id,image_id,class,score\nv1,i1,1,0.75\n";
        let t: InducerTable<f32> = parse_inducer_file(src.as_bytes(), "ind").unwrap();
        assert_eq!(t.records[0].raw_score, 0.75_f32);
    }
}
