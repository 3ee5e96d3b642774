//! Weighted-sum late fusion and the mean-squared-error fitness it is trained against.
//!
//! The fused score of row `i` is `Σ_j w_j · s_ij`; the fitness is
//! `(1/n) Σ_i (fused_i - target_i)²` summed in row order. Weights are bounded per
//! coordinate but are not required to sum to one.

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::ScoreMatrix;
use crate::optimizers::Objective;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("weight vector has {weights} entries but the matrix has {inducers} inducers")]
    DimensionMismatch { weights: usize, inducers: usize },
    #[error("mean squared error is undefined on an empty dataset")]
    EmptyDataset,
    #[error("weight {index} = {value} lies outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("weight file lists {names} inducers but {weights} weights")]
    InconsistentFile { names: usize, weights: usize },
}

/// Fusion weights, one per inducer, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> TryFrom<Vec<T>> for WeightVector<T> {
    type Error = FusionError;

    fn try_from(values: Vec<T>) -> Result<Self, FusionError> {
        Self::new(values)
    }
}

impl<T> From<WeightVector<T>> for Vec<T> {
    fn from(w: WeightVector<T>) -> Vec<T> {
        w.0
    }
}

impl<T: Scalar> WeightVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, FusionError> {
        if let Some((index, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(FusionError::OutOfRange {
                index,
                value: v.as_f64(),
            });
        }
        Ok(Self(values))
    }

    /// `1/m` for every inducer.
    pub fn equal(m: usize) -> Self {
        Self(vec![T::one() / T::from_count(m); m])
    }

    pub fn basis(m: usize, k: usize) -> Self {
        let mut v = vec![T::zero(); m];
        v[k] = T::one();
        Self(v)
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for WeightVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Fused score per row, aligned with the matrix row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct FusedScores<T>(pub Vec<T>);

impl<T> Deref for FusedScores<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Self-describing weight file: inducer names next to their weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct WeightFile<T> {
    pub inducers: Vec<String>,
    pub weights: WeightVector<T>,
}

impl<T: Scalar> WeightFile<T> {
    pub fn new(inducers: Vec<String>, weights: WeightVector<T>) -> Result<Self, FusionError> {
        if inducers.len() != weights.len() {
            return Err(FusionError::InconsistentFile {
                names: inducers.len(),
                weights: weights.len(),
            });
        }
        Ok(Self { inducers, weights })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("weight file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn check_dims<T: Scalar>(weights: &[T], matrix: &ScoreMatrix<T>) -> Result<(), FusionError> {
    if weights.len() != matrix.n_inducers() {
        return Err(FusionError::DimensionMismatch {
            weights: weights.len(),
            inducers: matrix.n_inducers(),
        });
    }
    Ok(())
}

#[inline]
fn fuse_row<T: Scalar>(weights: &[T], row: &[T]) -> T {
    let mut acc = T::zero();
    for (&w, &s) in weights.iter().zip(row) {
        acc += w * s;
    }
    acc
}

pub fn fuse<T: Scalar>(weights: &[T], matrix: &ScoreMatrix<T>) -> Result<FusedScores<T>, FusionError> {
    check_dims(weights, matrix)?;
    Ok(FusedScores(
        matrix.rows().map(|row| fuse_row(weights, row)).collect(),
    ))
}

pub(crate) fn mse_unchecked<T: Scalar>(weights: &[T], matrix: &ScoreMatrix<T>) -> T {
    let mut sum = T::zero();
    for (row, &target) in matrix.rows().zip(matrix.targets()) {
        let r = fuse_row(weights, row) - target;
        sum += r * r;
    }
    sum / T::from_count(matrix.n_samples())
}

pub(crate) fn mse_gradient_unchecked<T: Scalar>(weights: &[T], matrix: &ScoreMatrix<T>, grad: &mut [T]) {
    grad.iter_mut().for_each(|g| *g = T::zero());
    for (row, &target) in matrix.rows().zip(matrix.targets()) {
        let r = fuse_row(weights, row) - target;
        for (g, &s) in grad.iter_mut().zip(row) {
            *g += r * s;
        }
    }
    let scale = T::lit(2.0) / T::from_count(matrix.n_samples());
    grad.iter_mut().for_each(|g| *g *= scale);
}

/// Mean squared error between fused scores and the matrix targets.
pub fn mse<T: Scalar>(weights: &[T], matrix: &ScoreMatrix<T>) -> Result<T, FusionError> {
    check_dims(weights, matrix)?;
    if matrix.n_samples() == 0 {
        return Err(FusionError::EmptyDataset);
    }
    Ok(mse_unchecked(weights, matrix))
}

/// `∂mse/∂w_j = (2/n) Σ_i (fused_i - target_i) · s_ij`.
pub fn mse_gradient<T: Scalar>(weights: &[T], matrix: &ScoreMatrix<T>) -> Result<Vec<T>, FusionError> {
    check_dims(weights, matrix)?;
    if matrix.n_samples() == 0 {
        return Err(FusionError::EmptyDataset);
    }
    let mut grad = vec![T::zero(); weights.len()];
    mse_gradient_unchecked(weights, matrix, &mut grad);
    Ok(grad)
}

/// The MSE fitness of a fixed matrix as an optimizer [`Objective`] with analytic gradient.
#[derive(Debug, Clone, Copy)]
pub struct MseObjective<'a, T> {
    matrix: &'a ScoreMatrix<T>,
}

impl<'a, T: Scalar> MseObjective<'a, T> {
    pub fn new(matrix: &'a ScoreMatrix<T>) -> Result<Self, FusionError> {
        if matrix.n_samples() == 0 {
            return Err(FusionError::EmptyDataset);
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &'a ScoreMatrix<T> {
        self.matrix
    }
}

impl<T: Scalar> Objective<T> for MseObjective<'_, T> {
    fn dimension(&self) -> Option<usize> {
        Some(self.matrix.n_inducers())
    }

    fn value(&self, x: &[T]) -> T {
        mse_unchecked(x, self.matrix)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        mse_gradient_unchecked(x, self.matrix, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::Sample;

    fn matrix(rows: &[&[f64]], targets: &[f64]) -> ScoreMatrix<f64> {
        let m = rows[0].len();
        let samples = (0..rows.len())
            .map(|i| Sample {
                video_id: "v".into(),
                image_id: format!("{i:03}"),
                label: 0,
            })
            .collect();
        ScoreMatrix::from_parts(
            samples,
            targets.to_vec(),
            (0..m).map(|j| format!("ind{j}")).collect(),
            rows.concat(),
        )
        .unwrap()
    }

    #[test]
    fn fuse_examples() {
        let m = matrix(&[&[0.2, 0.8], &[0.4, 0.1], &[1.0, 0.0]], &[0.0; 3]);
        assert_eq!(&*fuse(&WeightVector::basis(2, 1), &m).unwrap(), &[0.8, 0.1, 0.0]);
        assert_eq!(&*fuse(&[0.0, 0.0], &m).unwrap(), &[0.0; 3]);
        assert_eq!(fuse(&[0.5, 0.5], &m).unwrap()[0], 0.5);
        assert_eq!(
            fuse(&[0.5], &m).unwrap_err(),
            FusionError::DimensionMismatch { weights: 1, inducers: 2 }
        );
    }

    #[test]
    fn mse_examples() {
        let m = matrix(&[&[1.0], &[0.0]], &[0.0, 0.0]);
        assert_eq!(mse(&[1.0], &m).unwrap(), 0.5);
        let exact = matrix(&[&[0.3, 0.6], &[0.9, 0.2]], &[0.3, 0.9]);
        assert_eq!(mse(&[1.0, 0.0], &exact).unwrap(), 0.0);
        assert_eq!(mse_gradient(&[1.0, 0.0], &exact).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_hand_example() {
        let m = matrix(&[&[1.0, 0.0]], &[0.0]);
        assert_eq!(mse_gradient(&[0.5, 0.5], &m).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let m = ScoreMatrix::<f64>::from_parts(vec![], vec![], vec!["a".into()], vec![]).unwrap();
        assert_eq!(mse(&[0.5], &m).unwrap_err(), FusionError::EmptyDataset);
        assert_eq!(mse_gradient(&[0.5], &m).unwrap_err(), FusionError::EmptyDataset);
        assert!(MseObjective::new(&m).is_err());
    }

    #[test]
    fn weight_vector_bounds() {
        assert!(WeightVector::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(matches!(
            WeightVector::new(vec![0.0, 1.5]),
            Err(FusionError::OutOfRange { index: 1, .. })
        ));
        assert!(WeightVector::new(vec![f64::NAN]).is_err());
        let eq = WeightVector::<f64>::equal(4);
        assert_eq!(&*eq, &[0.25; 4]);
    }

    #[test]
    fn weight_file_round_trip() {
        let f = WeightFile::new(
            vec!["a".into(), "b".into()],
            WeightVector::new(vec![0.1, 1.0 / 3.0]).unwrap(),
        )
        .unwrap();
        let back = WeightFile::<f64>::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert!(WeightFile::new(vec!["a".into()], WeightVector::<f64>::equal(2)).is_err());
        assert!(WeightFile::<f64>::from_json(r#"{"inducers":["a"],"weights":[2.0]}"#).is_err());
    }
}
