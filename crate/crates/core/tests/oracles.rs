//! Independent oracles for values that follow from definitions rather than from the code.

use latefuse::evaluation::{average_precision_at_k, map_at_k, rank, RankedItem};
use latefuse::fusion::{mse, mse_gradient, FusedScores, WeightVector};
use latefuse::ingestion::{Sample, ScoreMatrix};
use latefuse::optimizers::{optimize, optimize_equal, optimize_lbfgsb, Method, OptimizeError, OptimizerConfig, ValueFn, ValueGradFn};
use latefuse::synth::ap_oracle;
use latefuse::ScoreMatrixF32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(seed: u64, n: usize, m: usize) -> ScoreMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = (0..n)
        .map(|i| Sample {
            video_id: format!("v{}", i % 3),
            image_id: format!("{i:03}"),
            label: rng.random_range(0..2),
        })
        .collect();
    let targets = samples.iter().map(|s| f64::from(s.label)).collect();
    let scores = (0..n * m).map(|_| rng.random()).collect();
    ScoreMatrix::from_parts(samples, targets, (0..m).map(|j| format!("s{j}")).collect(), scores).unwrap()
}

#[test]
fn mse_matches_definition_summed_in_index_order() {
    let matrix = random_matrix(50, 50, 5);
    let w = [0.1, 0.7, 0.3, 0.0, 0.9];
    let mut total = 0.0;
    for i in 0..50 {
        let mut predicted = 0.0;
        for (j, wj) in w.iter().enumerate() {
            predicted += wj * matrix.row(i)[j];
        }
        let actual = f64::from(matrix.samples()[i].label);
        total += (predicted - actual) * (predicted - actual);
    }
    assert_eq!(mse(&w, &matrix).unwrap().to_bits(), (total / 50.0).to_bits());
}

#[test]
fn gradient_matches_central_differences_40x7() {
    let matrix = random_matrix(40, 40, 7);
    let w = [0.2, 0.4, 0.6, 0.8, 0.1, 0.3, 0.5];
    let g = mse_gradient(&w, &matrix).unwrap();
    let h = 1e-6;
    for j in 0..7 {
        let (mut plus, mut minus) = (w, w);
        plus[j] += h;
        minus[j] -= h;
        let fd = (mse(&plus, &matrix).unwrap() - mse(&minus, &matrix).unwrap()) / (2.0 * h);
        assert!((fd - g[j]).abs() <= 1e-6, "component {j}: {fd} vs {}", g[j]);
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

#[test]
fn lbfgsb_reaches_closed_form_minimizer_of_interior_quadratic() {
    // f(x) = ½ xᵀAx − bᵀx with A = BᵀB + I, b chosen so the minimizer is inside the box.
    let m = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let basis: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let a: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| (0..m).map(|k| basis[k][i] * basis[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let inside: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..0.8)).collect();
    let b: Vec<f64> = a.iter().map(|row| row.iter().zip(&inside).map(|(x, y)| x * y).sum()).collect();
    let expected = solve(a.clone(), b.clone());

    let (a1, b1, a2, b2) = (a.clone(), b.clone(), a, b);
    let objective = ValueGradFn(
        move |x: &[f64]| {
            let quad: f64 = (0..x.len()).map(|i| x[i] * (0..x.len()).map(|j| a1[i][j] * x[j]).sum::<f64>()).sum();
            0.5 * quad - x.iter().zip(&b1).map(|(x, b)| x * b).sum::<f64>()
        },
        move |x: &[f64], g: &mut [f64]| {
            for i in 0..x.len() {
                g[i] = (0..x.len()).map(|j| a2[i][j] * x[j]).sum::<f64>() - b2[i];
            }
        },
    );
    let report = optimize_lbfgsb(&objective, &OptimizerConfig::new(m)).unwrap();
    assert!(report.converged && report.iterations <= 100, "{} iterations", report.iterations);
    for (got, want) in report.best_weights.iter().zip(&expected) {
        assert!((got - want).abs() < 1e-7, "{got} vs {want}");
    }
}

#[test]
fn equal_weights_values() {
    let f = ValueFn(|x: &[f64]| x.iter().sum());
    let r = optimize_equal(&f, &OptimizerConfig::new(29)).unwrap();
    assert!(r.best_weights.iter().all(|&w| (w - 0.03448).abs() < 1e-5));
    assert_eq!(optimize_equal(&f, &OptimizerConfig::new(1)).unwrap().best_weights, vec![1.0]);
    assert_eq!(optimize_equal(&f, &OptimizerConfig::new(4)).unwrap().best_weights, vec![0.25; 4]);
}

#[test]
fn non_finite_objective_aborts_with_point() {
    let f = ValueFn(|x: &[f64]| if x[0] > 0.45 { f64::NAN } else { x[0] });
    for method in Method::ALL {
        match optimize(method, &f, &OptimizerConfig::new(2)) {
            Err(OptimizeError::NonFinite { point, .. }) => assert_eq!(point.len(), 2, "{method}"),
            other => panic!("{method}: {other:?}"),
        }
    }
}

#[test]
fn one_dimensional_minima_for_every_method() {
    for method in Method::ALL.into_iter().filter(|&m| m != Method::Equal) {
        let interior = ValueGradFn(|x: &[f64]| (x[0] - 0.3).powi(2), |x: &[f64], g: &mut [f64]| g[0] = 2.0 * (x[0] - 0.3));
        let r = optimize(method, &interior, &OptimizerConfig::new(1).with_seed(1)).unwrap();
        assert!((r.best_weights[0] - 0.3).abs() < 1e-4, "{method}: {:?}", r.best_weights);
        let outside = ValueGradFn(|x: &[f64]| (x[0] - 1.5).powi(2), |x: &[f64], g: &mut [f64]| g[0] = 2.0 * (x[0] - 1.5));
        let r = optimize(method, &outside, &OptimizerConfig::new(1).with_seed(1)).unwrap();
        assert_eq!(r.best_weights, vec![1.0], "{method}");
    }
}

#[test]
fn ap_examples_against_oracle() {
    let ranked = |rel: &[bool]| {
        rank(
            "v",
            rel.iter()
                .enumerate()
                .map(|(i, &relevant)| RankedItem { image_id: format!("{i}"), score: -(i as f64), relevant })
                .collect(),
        )
    };
    for rel in [&[true, false, true][..], &[true; 5], &[false, false, true, true, false, true]] {
        for k in 1..=8 {
            assert_eq!(average_precision_at_k(&ranked(rel), k).value, ap_oracle(rel, k));
        }
    }
    assert!((ap_oracle(&[true, false, true], 10) - 0.8333333333333334).abs() < 1e-15);
}

#[test]
fn perfect_separation_gives_map_one() {
    let matrix = random_matrix(9, 60, 1);
    let fused: Vec<f64> = matrix.samples().iter().map(|s| f64::from(s.label) + 0.5).collect();
    assert_eq!(map_at_k(&FusedScores(fused), &matrix, 10).unwrap().map_at_k, 1.0);
}

#[test]
fn single_precision_pipeline_pieces() {
    let samples = vec![
        Sample { video_id: "v".into(), image_id: "a".into(), label: 1 },
        Sample { video_id: "v".into(), image_id: "b".into(), label: 0 },
    ];
    let m: ScoreMatrixF32 = ScoreMatrix::from_parts(samples, vec![1.0, 0.0], vec!["x".into()], vec![1.0, 0.0]).unwrap();
    assert_eq!(mse(&WeightVector::<f32>::basis(1, 0), &m).unwrap(), 0.0);
    let r = optimize(Method::Lbfgsb, &latefuse::fusion::MseObjective::new(&m).unwrap(), &OptimizerConfig::<f32>::new(1).with_bounds(0.0, 1.0)).unwrap();
    assert!(r.best_objective < 1e-6);
}
