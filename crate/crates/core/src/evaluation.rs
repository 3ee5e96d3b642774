//! Per-video ranking by fused score and mean average precision at a cutoff.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusedScores;
use crate::ingestion::ScoreMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cutoff k must be at least 1")]
    InvalidCutoff,
    #[error("{scores} fused scores for {rows} matrix rows")]
    Misaligned { scores: usize, rows: usize },
    #[error("no group has a relevant item; MAP is undefined")]
    UndefinedMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem<T> {
    pub image_id: String,
    pub score: T,
    pub relevant: bool,
}

/// Items of one group sorted by score descending, ties by image id ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList<T> {
    pub group_id: String,
    pub items: Vec<RankedItem<T>>,
}

pub fn rank<T: Scalar>(group_id: impl Into<String>, mut items: Vec<RankedItem<T>>) -> RankedList<T> {
    items.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("fused scores are finite")
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    RankedList {
        group_id: group_id.into(),
        items,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragePrecision {
    pub value: f64,
    pub num_relevant: usize,
}

impl AveragePrecision {
    /// Groups without relevant items do not contribute to the mean.
    pub fn excluded(&self) -> bool {
        self.num_relevant == 0
    }
}

/// `AP@k = (1/min(R, k)) Σ_{r ≤ min(k, len)} P@r · rel(r)` where `R` counts the relevant items
/// of the whole group. Zero, and flagged excluded, when `R = 0`.
pub fn average_precision_at_k<T>(ranked: &RankedList<T>, k: usize) -> AveragePrecision {
    let num_relevant = ranked.items.iter().filter(|it| it.relevant).count();
    if num_relevant == 0 || k == 0 {
        return AveragePrecision {
            value: 0.0,
            num_relevant,
        };
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, item) in ranked.items.iter().take(k).enumerate() {
        if item.relevant {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    AveragePrecision {
        value: sum / num_relevant.min(k) as f64,
        num_relevant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPrecision {
    pub video_id: String,
    pub ap_at_k: f64,
    pub num_relevant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map_at_k: f64,
    pub k: usize,
    /// Every group in video-id order, including those excluded for having no relevant item.
    pub per_group: Vec<GroupPrecision>,
}

impl EvalReport {
    /// Mean of `ap_at_k` over groups with at least one relevant item.
    pub fn recompute_map(&self) -> Option<f64> {
        let included: Vec<f64> = self
            .per_group
            .iter()
            .filter(|g| g.num_relevant > 0)
            .map(|g| g.ap_at_k)
            .collect();
        (!included.is_empty()).then(|| included.iter().sum::<f64>() / included.len() as f64)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// CSV `video_id,ap_at_<k>,num_relevant`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["video_id", &format!("ap_at_{}", self.k), "num_relevant"])
            .expect("in-memory write");
        for g in &self.per_group {
            w.write_record([g.video_id.clone(), g.ap_at_k.to_string(), g.num_relevant.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Groups rows by video, ranks each group by fused score and averages AP@k over the groups
/// that contain a relevant item.
pub fn map_at_k<T: Scalar>(
    fused: &FusedScores<T>,
    matrix: &ScoreMatrix<T>,
    k: usize,
) -> Result<EvalReport, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidCutoff);
    }
    if fused.len() != matrix.n_samples() {
        return Err(EvalError::Misaligned {
            scores: fused.len(),
            rows: matrix.n_samples(),
        });
    }
    let mut groups: BTreeMap<&str, Vec<RankedItem<T>>> = BTreeMap::new();
    for (sample, &score) in matrix.samples().iter().zip(fused.iter()) {
        groups.entry(&sample.video_id).or_default().push(RankedItem {
            image_id: sample.image_id.clone(),
            score,
            relevant: sample.label == 1,
        });
    }

    let per_group: Vec<GroupPrecision> = groups
        .into_iter()
        .map(|(video, items)| {
            let ap = average_precision_at_k(&rank(video, items), k);
            GroupPrecision {
                video_id: video.to_string(),
                ap_at_k: ap.value,
                num_relevant: ap.num_relevant,
            }
        })
        .collect();
    let mut report = EvalReport {
        map_at_k: 0.0,
        k,
        per_group,
    };
    report.map_at_k = report.recompute_map().ok_or(EvalError::UndefinedMetric)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::Sample;

    fn items(scores: &[f64], rel: &[bool]) -> Vec<RankedItem<f64>> {
        scores
            .iter()
            .zip(rel)
            .enumerate()
            .map(|(i, (&score, &relevant))| RankedItem {
                image_id: format!("{}", (b'a' + i as u8) as char),
                score,
                relevant,
            })
            .collect()
    }

    fn ranked_by_relevance(rel: &[u8]) -> RankedList<f64> {
        let scores: Vec<f64> = (0..rel.len()).map(|i| -(i as f64)).collect();
        let rel: Vec<bool> = rel.iter().map(|&r| r == 1).collect();
        rank("v", items(&scores, &rel))
    }

    #[test]
    fn rank_orders_by_score_then_id() {
        let r = rank("v", items(&[0.9, 0.1, 0.5], &[false; 3]));
        let ids: Vec<_> = r.items.iter().map(|i| i.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
        let mut tied = items(&[0.5, 0.5], &[false; 2]);
        tied.reverse();
        let r = rank("v", tied);
        assert_eq!(r.items[0].image_id, "a");
        let r = rank("v", items(&[0.3], &[true]));
        assert_eq!(r.items.len(), 1);
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision_at_k(&ranked_by_relevance(&[1, 0, 1]), 10);
        assert_eq!(ap.value, (1.0 + 2.0 / 3.0) / 2.0);
        assert!((ap.value - 0.833_333_333_333_333_4).abs() < 1e-15);
        assert_eq!(average_precision_at_k(&ranked_by_relevance(&[1, 1, 1, 1]), 2).value, 1.0);
        let none = average_precision_at_k(&ranked_by_relevance(&[0, 0, 0]), 10);
        assert_eq!(none.value, 0.0);
        assert!(none.excluded());
        // Normalizer is min(R, k): one hit in the top 2 of three relevant items.
        let ap = average_precision_at_k(&ranked_by_relevance(&[0, 1, 1, 1]), 2);
        assert_eq!(ap.value, 0.25);
    }

    fn matrix(rows: &[(&str, &str, u8)]) -> ScoreMatrix<f64> {
        let samples = rows
            .iter()
            .map(|&(v, i, l)| Sample {
                video_id: v.into(),
                image_id: i.into(),
                label: l,
            })
            .collect();
        ScoreMatrix::from_parts(samples, vec![0.0; rows.len()], vec!["a".into()], vec![0.0; rows.len()]).unwrap()
    }

    #[test]
    fn map_examples() {
        let m = matrix(&[("v", "a", 1), ("v", "b", 0), ("v", "c", 1)]);
        let r = map_at_k(&FusedScores(vec![0.9, 0.5, 0.1]), &m, 10).unwrap();
        assert!((r.map_at_k - 0.8333333333333334).abs() < 1e-15);

        let m = matrix(&[("v1", "a", 1), ("v1", "b", 0), ("v2", "a", 0), ("v2", "b", 1), ("v3", "a", 0)]);
        let r = map_at_k(&FusedScores(vec![0.9, 0.1, 0.9, 0.1]).clone(), &m, 10);
        assert!(matches!(r, Err(EvalError::Misaligned { .. })));
        let r = map_at_k(&FusedScores(vec![0.9, 0.1, 0.9, 0.1, 0.3]), &m, 10).unwrap();
        assert_eq!(r.map_at_k, 0.75);
        assert_eq!(r.per_group.len(), 3);
        assert_eq!(r.per_group[2].num_relevant, 0);
        assert_eq!(r.recompute_map(), Some(0.75));
        assert!(r.to_csv().starts_with("video_id,ap_at_10,num_relevant\nv1,1,1\nv2,0.5,1\n"));
    }

    #[test]
    fn map_errors() {
        let m = matrix(&[("v", "a", 0), ("v", "b", 0)]);
        assert_eq!(map_at_k(&FusedScores(vec![0.1, 0.2]), &m, 10), Err(EvalError::UndefinedMetric));
        assert_eq!(map_at_k(&FusedScores(vec![0.1, 0.2]), &m, 0), Err(EvalError::InvalidCutoff));
    }
}
