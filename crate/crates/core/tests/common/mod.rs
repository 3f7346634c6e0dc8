//! Shared oracle code for integration tests: a straight-line transcription
//! of the classifier equations over plain vectors, with explicit
//! Gauss-Jordan inverses and none of the library's factorization shortcuts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tactile_map::domain::{Label, Point2, TrainingSet};
use tactile_map::gp::{fit_laplace, predict, KernelParams};

pub type Mat = Vec<Vec<f64>>;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn kernel(a: &[f64; 2], b: &[f64; 2], theta1: f64, theta2: f64) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    theta2 * theta2 * (-d2 / (2.0 * theta1 * theta1)).exp()
}

pub fn mat_identity(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Explicit inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: &Mat) -> Mat {
    let n = a.len();
    let mut aug: Mat = a.clone();
    let mut inv = mat_identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        inv.swap(col, pivot);
        let d = aug[col][col];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for j in 0..n {
            aug[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let factor = aug[i][col];
            for j in 0..n {
                aug[i][j] -= factor * aug[col][j];
                inv[i][j] -= factor * inv[col][j];
            }
        }
    }
    inv
}

pub fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(r, x)| r * x).sum())
        .collect()
}

pub struct NaiveModel {
    pub f_hat: Vec<f64>,
    pub gram: Mat,
    pub w: Vec<f64>,
}

/// Mode finding by iterating `f_new = K (I + W K)^-1 (y - s + W f)` with the
/// unsymmetrized system inverted outright.
pub fn naive_fit(points: &[[f64; 2]], y: &[f64], theta1: f64, theta2: f64) -> NaiveModel {
    let n = points.len();
    let nu = 1e-5;
    let gram: Mat = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    kernel(&points[i], &points[j], theta1, theta2) + if i == j { nu } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let mut f = vec![0.0; n];
    for _ in 0..20 {
        let s: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
        let w: Vec<f64> = s.iter().map(|&si| si * (1.0 - si)).collect();
        let mut system = mat_identity(n);
        for (i, row) in system.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += w[i] * gram[i][j];
            }
        }
        let inv = invert(&system);
        let rhs: Vec<f64> = (0..n).map(|i| y[i] - s[i] + w[i] * f[i]).collect();
        let f_new = mat_vec(&gram, &mat_vec(&inv, &rhs));
        let step = f_new
            .iter()
            .zip(f.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        f = f_new;
        if step < 1e-9 {
            break;
        }
    }
    let s: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
    let w = s.iter().map(|&si| si * (1.0 - si)).collect();
    NaiveModel { f_hat: f, gram, w }
}

/// `mu = k*^T (y - s)`, `var = k** - k*^T (W^-1 + K)^-1 k*`,
/// `p = sigmoid(mu / sqrt(1 + pi var / 8))`, everything dense and explicit.
pub fn naive_predict(
    model: &NaiveModel,
    points: &[[f64; 2]],
    y: &[f64],
    queries: &[[f64; 2]],
    theta1: f64,
    theta2: f64,
) -> Vec<(f64, f64, f64)> {
    let n = points.len();
    let mut system = model.gram.clone();
    for (i, row) in system.iter_mut().enumerate() {
        row[i] += 1.0 / model.w[i];
    }
    let inv = invert(&system);
    let alpha: Vec<f64> = (0..n).map(|i| y[i] - sigmoid(model.f_hat[i])).collect();
    queries
        .iter()
        .map(|q| {
            let k_star: Vec<f64> = points.iter().map(|p| kernel(p, q, theta1, theta2)).collect();
            let mu: f64 = k_star.iter().zip(&alpha).map(|(k, a)| k * a).sum();
            let solved = mat_vec(&inv, &k_star);
            let var = theta2 * theta2
                - k_star.iter().zip(&solved).map(|(k, s)| k * s).sum::<f64>();
            let prob = sigmoid(mu / (1.0 + std::f64::consts::PI * var / 8.0).sqrt());
            (mu, var, prob)
        })
        .collect()
}

pub struct OracleOutcome {
    #[allow(dead_code)]
    pub trials: usize,
    pub max_prob_error: f64,
    pub max_mean_error: f64,
    pub max_var_error: f64,
    pub all_converged: bool,
    pub max_iterations: usize,
}

/// Run `trials` random instances (5-20 mixed-label points, 15 queries each)
/// through both the implementation and the naive transcription.
pub fn run_oracle_comparison(trials: usize, rng_seed: u64) -> OracleOutcome {
    let params = KernelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut outcome = OracleOutcome {
        trials,
        max_prob_error: 0.0,
        max_mean_error: 0.0,
        max_var_error: 0.0,
        all_converged: true,
        max_iterations: 0,
    };
    for _ in 0..trials {
        let n = rng.gen_range(5..=20);
        let mut train = TrainingSet::new();
        let mut raw_points = Vec::with_capacity(n);
        let mut raw_labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = match i {
                0 => Label::Present,
                1 => Label::Absent,
                _ => {
                    if rng.gen_bool(0.5) {
                        Label::Present
                    } else {
                        Label::Absent
                    }
                }
            };
            let p = [rng.gen_range(0.0..300.0), rng.gen_range(0.0..90.4)];
            train.push(Point2::new(p[0], p[1]), label);
            raw_points.push(p);
            raw_labels.push(label.as_f64());
        }
        let queries_raw: Vec<[f64; 2]> = (0..15)
            .map(|_| [rng.gen_range(0.0..300.0), rng.gen_range(0.0..90.4)])
            .collect();
        let queries: Vec<Point2> = queries_raw.iter().map(|q| Point2::new(q[0], q[1])).collect();

        let state = fit_laplace(&train, &params).unwrap();
        outcome.all_converged &= state.converged;
        outcome.max_iterations = outcome.max_iterations.max(state.iterations);
        let pred = predict(&state, &train, &queries, &params).unwrap();

        let naive = naive_fit(
            &raw_points,
            &raw_labels,
            params.length_scale,
            params.amplitude,
        );
        let expected = naive_predict(
            &naive,
            &raw_points,
            &raw_labels,
            &queries_raw,
            params.length_scale,
            params.amplitude,
        );
        for (j, &(mu, var, prob)) in expected.iter().enumerate() {
            outcome.max_prob_error = outcome
                .max_prob_error
                .max((pred.probability[j] - prob).abs());
            outcome.max_mean_error = outcome.max_mean_error.max((pred.mean[j] - mu).abs());
            outcome.max_var_error = outcome
                .max_var_error
                .max((pred.variance[j] - var.max(0.0)).abs());
        }
    }
    outcome
}
