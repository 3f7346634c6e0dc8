//! Gaussian-process binary classifier with a Laplace approximation of the
//! latent posterior.
//!
//! The latent function is given a zero-mean GP prior with an isotropic
//! squared-exponential kernel and squashed through the logistic function.
//! The posterior mode is found by the damped fixed-point iteration over the
//! jittered gram matrix; prediction applies the probit-corrected logistic to
//! the latent mean and variance. Hyperparameters are fit by a coarse
//! log-grid search over the Laplace-approximate log marginal likelihood.

use nalgebra::{DMatrix, DVector};

use crate::domain::{Grid2, Point2, TrainingSet, Workspace};
use crate::{Error, Result};

/// Kernel hyperparameters: a length scale in mm and a latent amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub length_scale: f64,
    pub amplitude: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            length_scale: 30.0,
            amplitude: 15.0,
        }
    }
}

/// Jitter added to the training gram matrix for numerical stability.
pub const GRAM_JITTER: f64 = 1e-5;
const MAX_ITER: usize = 20;
const CONVERGENCE_TOL: f64 = 1e-9;

/// Isotropic squared-exponential kernel.
pub fn kernel(a: Point2, b: Point2, params: &KernelParams) -> f64 {
    let amp2 = params.amplitude * params.amplitude;
    if a == b {
        return amp2;
    }
    amp2 * (-a.dist2(&b) / (2.0 * params.length_scale * params.length_scale)).exp()
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mode-finding state of the Laplace approximation.
#[derive(Debug, Clone)]
pub struct LaplaceState {
    /// Latent posterior mode over the training locations.
    pub f_hat: DVector<f64>,
    /// Jittered training gram matrix.
    pub gram: DMatrix<f64>,
    /// Logistic curvature at the mode, `sigma(f)(1 - sigma(f))`.
    pub w_diag: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of each iteration's update, for convergence diagnostics.
    pub step_norms: Vec<f64>,
}

fn gram_matrix(points: &[Point2], params: &KernelParams) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel(points[i], points[j], params));
    for i in 0..n {
        k[(i, i)] += GRAM_JITTER;
    }
    k
}

fn labels_vector(train: &TrainingSet) -> DVector<f64> {
    DVector::from_iterator(train.len(), train.labels.iter().map(|l| l.as_f64()))
}

/// One fixed-point update of the latent mode,
/// `f_new = K (I + W K)^-1 (y - sigma(f) + W f)`,
/// solved through the symmetrized system `B = I + W^1/2 K W^1/2`.
fn laplace_step(f: &DVector<f64>, gram: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = f.len();
    let s = f.map(sigmoid);
    let w = s.zip_map(&s, |si, _| si * (1.0 - si));
    let sw = w.map(f64::sqrt);
    let mut b_mat = DMatrix::from_fn(n, n, |i, j| sw[i] * sw[j] * gram[(i, j)]);
    for i in 0..n {
        b_mat[(i, i)] += 1.0;
    }
    let chol = nalgebra::Cholesky::new(b_mat)
        .ok_or_else(|| Error::Numerical("Laplace inner system not positive definite".into()))?;
    let b = y - &s + w.component_mul(f);
    let v = sw.component_mul(&(gram * &b));
    let u = chol.solve(&v);
    let a = &b - sw.component_mul(&u);
    Ok(gram * a)
}

/// Find the latent posterior mode for a training set by iterating the
/// fixed-point update from `f = 0`, at most 20 iterations, stopping when the
/// max-norm of the update drops below 1e-9.
pub fn fit_laplace(train: &TrainingSet, params: &KernelParams) -> Result<LaplaceState> {
    if train.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let gram = gram_matrix(&train.points, params);
    let y = labels_vector(train);
    let mut f = DVector::zeros(train.len());
    let mut converged = false;
    let mut iterations = 0;
    let mut step_norms = Vec::new();
    for _ in 0..MAX_ITER {
        let f_new = laplace_step(&f, &gram, &y)?;
        iterations += 1;
        let step = (&f_new - &f).amax();
        step_norms.push(step);
        f = f_new;
        if step < CONVERGENCE_TOL {
            converged = true;
            break;
        }
    }
    let s = f.map(sigmoid);
    let w_diag = s.map(|si| si * (1.0 - si));
    Ok(LaplaceState {
        f_hat: f,
        gram,
        w_diag,
        converged,
        iterations,
        step_norms,
    })
}

/// Latent mean, latent variance and presence probability at query points.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub probability: Vec<f64>,
}

fn probit_corrected(mu: f64, var: f64) -> f64 {
    sigmoid(mu / (1.0 + std::f64::consts::PI * var / 8.0).sqrt())
}

/// Predict at arbitrary query points:
/// `mu = k*^T (y - sigma(f))`,
/// `var = k** - k*^T (W^-1 + K)^-1 k*`,
/// `p = sigma(mu (1 + pi var / 8)^-1/2)`.
pub fn predict(
    state: &LaplaceState,
    train: &TrainingSet,
    queries: &[Point2],
    params: &KernelParams,
) -> Result<Prediction> {
    let n = train.len();
    let m = queries.len();
    let y = labels_vector(train);
    let alpha = &y - state.f_hat.map(sigmoid);

    let mut a_mat = state.gram.clone();
    for i in 0..n {
        a_mat[(i, i)] += 1.0 / state.w_diag[i];
    }
    let chol = nalgebra::Cholesky::new(a_mat)
        .ok_or_else(|| Error::Numerical("predictive system not positive definite".into()))?;

    let k_star = DMatrix::from_fn(n, m, |i, j| kernel(train.points[i], queries[j], params));
    let solved = chol.solve(&k_star);

    let amp2 = params.amplitude * params.amplitude;
    let mut mean = Vec::with_capacity(m);
    let mut variance = Vec::with_capacity(m);
    let mut probability = Vec::with_capacity(m);
    for j in 0..m {
        let col = k_star.column(j);
        let mu = col.dot(&alpha);
        let var = (amp2 - col.dot(&solved.column(j))).max(0.0);
        mean.push(mu);
        variance.push(var);
        probability.push(probit_corrected(mu, var));
    }
    Ok(Prediction {
        mean,
        variance,
        probability,
    })
}

/// Presence probability and latent variance rasters over the workspace.
#[derive(Debug, Clone)]
pub struct ProbabilityField {
    pub prob: Grid2<f64>,
    pub variance: Grid2<f64>,
}

/// Batched prediction over the Cartesian grid `xs x ys` (row-major, `ys`
/// outer). Exploits the separable kernel on a grid and runs the per-row
/// solve as a dense matrix product, so full-raster evaluation stays fast.
pub fn predict_grid(
    state: &LaplaceState,
    train: &TrainingSet,
    params: &KernelParams,
    xs: &[f64],
    ys: &[f64],
) -> Result<Prediction> {
    let n = train.len();
    let y = labels_vector(train);
    let alpha = &y - state.f_hat.map(sigmoid);

    let mut a_mat = state.gram.clone();
    for i in 0..n {
        a_mat[(i, i)] += 1.0 / state.w_diag[i];
    }
    let chol = nalgebra::Cholesky::new(a_mat)
        .ok_or_else(|| Error::Numerical("predictive system not positive definite".into()))?;
    let a_inv = chol.inverse();

    let amp2 = params.amplitude * params.amplitude;
    let inv_two_ls2 = 1.0 / (2.0 * params.length_scale * params.length_scale);
    // Separable kernel factors along each grid axis.
    let ex = DMatrix::from_fn(n, xs.len(), |i, j| {
        let d = train.points[i].x - xs[j];
        (-d * d * inv_two_ls2).exp()
    });
    let ey = DMatrix::from_fn(n, ys.len(), |i, j| {
        let d = train.points[i].y - ys[j];
        (-d * d * inv_two_ls2).exp()
    });

    let m = xs.len() * ys.len();
    let mut mean = Vec::with_capacity(m);
    let mut variance = Vec::with_capacity(m);
    let mut probability = Vec::with_capacity(m);
    let mut k_star = DMatrix::zeros(n, xs.len());
    for iy in 0..ys.len() {
        for i in 0..n {
            let row_factor = amp2 * ey[(i, iy)];
            for j in 0..xs.len() {
                k_star[(i, j)] = row_factor * ex[(i, j)];
            }
        }
        let solved = &a_inv * &k_star;
        for j in 0..xs.len() {
            let col = k_star.column(j);
            let mu = col.dot(&alpha);
            let var = (amp2 - col.dot(&solved.column(j))).max(0.0);
            mean.push(mu);
            variance.push(var);
            probability.push(probit_corrected(mu, var));
        }
    }
    Ok(Prediction {
        mean,
        variance,
        probability,
    })
}

/// Evaluate the probabilistic map over the evaluation raster.
pub fn probability_field(
    state: &LaplaceState,
    train: &TrainingSet,
    params: &KernelParams,
    workspace: &Workspace,
    pitch_mm: f64,
) -> Result<ProbabilityField> {
    let mut prob: Grid2<f64> = Grid2::filled(workspace, pitch_mm, 0.0);
    let mut variance: Grid2<f64> = Grid2::filled(workspace, pitch_mm, 0.0);
    let xs: Vec<f64> = (0..prob.nx())
        .map(|ix| (ix as f64 + 0.5) * pitch_mm)
        .collect();
    let ys: Vec<f64> = (0..prob.ny())
        .map(|iy| (iy as f64 + 0.5) * pitch_mm)
        .collect();
    let pred = predict_grid(state, train, params, &xs, &ys)?;
    prob.values_mut().copy_from_slice(&pred.probability);
    variance.values_mut().copy_from_slice(&pred.variance);
    Ok(ProbabilityField { prob, variance })
}

/// Laplace-approximate log marginal likelihood of the labels under the
/// kernel hyperparameters.
pub fn log_marginal_likelihood(train: &TrainingSet, params: &KernelParams) -> Result<f64> {
    let state = fit_laplace(train, params)?;
    let n = train.len();
    let y = labels_vector(train);

    let chol_k = nalgebra::Cholesky::new(state.gram.clone())
        .ok_or_else(|| Error::Numerical("gram matrix not positive definite".into()))?;
    let quad = state.f_hat.dot(&chol_k.solve(&state.f_hat));

    let mut fit_term = 0.0;
    for i in 0..n {
        let sign = 2.0 * y[i] - 1.0;
        fit_term += sigmoid(sign * state.f_hat[i]).ln();
    }

    let sw = state.w_diag.map(f64::sqrt);
    let mut b_mat = DMatrix::from_fn(n, n, |i, j| sw[i] * sw[j] * state.gram[(i, j)]);
    for i in 0..n {
        b_mat[(i, i)] += 1.0;
    }
    let chol_b = nalgebra::Cholesky::new(b_mat)
        .ok_or_else(|| Error::Numerical("determinant system not positive definite".into()))?;
    let half_log_det: f64 = (0..n).map(|i| chol_b.l_dirty()[(i, i)].ln()).sum();

    Ok(-0.5 * quad + fit_term - half_log_det)
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
        .collect()
}

/// Hyperparameter grids scanned by [`optimize_hyperparams`].
pub fn hyperparameter_grid() -> (Vec<f64>, Vec<f64>) {
    (log_spaced(5.0, 100.0, 13), log_spaced(1.0, 50.0, 13))
}

/// Maximize the log marginal likelihood over a fixed log-spaced grid of
/// length scales and amplitudes. Degenerate training sets (fewer than two
/// points, or a single class) return `init` unchanged.
pub fn optimize_hyperparams(train: &TrainingSet, init: KernelParams) -> KernelParams {
    if train.len() < 2 || !train.has_both_classes() {
        return init;
    }
    let (scales, amplitudes) = hyperparameter_grid();
    let mut best = init;
    let mut best_lml = f64::NEG_INFINITY;
    for &ls in &scales {
        for &amp in &amplitudes {
            let candidate = KernelParams {
                length_scale: ls,
                amplitude: amp,
            };
            match log_marginal_likelihood(train, &candidate) {
                Ok(lml) if lml > best_lml => {
                    best_lml = lml;
                    best = candidate;
                }
                _ => {}
            }
        }
    }
    best
}
