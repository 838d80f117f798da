//! Independent numerical oracles.
//!
//! Everything here recomputes a quantity by a different route than the
//! production code: explicit inverses instead of factorized solves, finite
//! differences instead of backpropagation, Monte Carlo instead of closed
//! forms. Inputs are kept small (at most 32 parameters or observations).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::envs;
use crate::error::{check_dim, Error, Result};
use crate::objectives;
use crate::optimizer::{self, KovaConfig, NoiseModel};
use crate::targets::Batch;
use crate::valuefunc::{Input, ParamVector, ValueModel};

pub const ORACLE_MAX_DIM: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, max_abs_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_abs_error,
            tolerance,
            // NaN fails
            passed: max_abs_error <= tolerance,
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: max_abs_error={:.3e} tolerance={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_abs_error,
            self.tolerance
        )
    }
}

fn check_oracle_dim(what: &'static str, n: usize) -> Result<()> {
    if n > ORACLE_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "{what} dimension {n} exceeds oracle limit {ORACLE_MAX_DIM}"
        )));
    }
    Ok(())
}

fn inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Central differences, one coordinate at a time.
pub fn finite_diff_jacobian(
    model: &ValueModel,
    theta: &ParamVector,
    inputs: &[Input],
    step: f64,
) -> Result<DMatrix<f64>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    let d = theta.len();
    let mut jac = DMatrix::zeros(d, inputs.len());
    let mut probe = theta.as_vector().clone();
    for j in 0..d {
        let orig = probe[j];
        probe[j] = orig + step;
        let plus = model.forward(&ParamVector::from_vector(probe.clone())?, inputs)?;
        probe[j] = orig - step;
        let minus = model.forward(&ParamVector::from_vector(probe.clone())?, inputs)?;
        probe[j] = orig;
        for i in 0..inputs.len() {
            jac[(j, i)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Largest entrywise relative error between the analytic Jacobian and
/// central differences; magnitudes below 1e-6 are compared absolutely.
pub fn check_jacobian(
    model: &ValueModel,
    theta: &ParamVector,
    inputs: &[Input],
    step: f64,
) -> Result<OracleReport> {
    let analytic = model.jacobian(theta, inputs)?;
    let numeric = finite_diff_jacobian(model, theta, inputs, step)?;
    let worst = analytic
        .iter()
        .zip(numeric.iter())
        .fold(0.0_f64, |acc, (a, f)| {
            acc.max((a - f).abs() / a.abs().max(f.abs()).max(1e-6))
        });
    Ok(OracleReport::new(
        "jacobian vs central differences (relative)",
        worst,
        1e-4,
    ))
}

/// Result of a brute-force minimization of the regularized objective.
#[derive(Clone, Debug)]
pub struct ArgminResult {
    pub theta: ParamVector,
    pub loss: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Gradient norm at exit is at most 1e-6.
    pub converged: bool,
}

/// Regularized objective evaluated with explicit inverses.
fn ekf_objective(
    model: &ValueModel,
    batch: &Batch,
    theta: &DVector<f64>,
    theta_prev: &DVector<f64>,
    cov_inv: &DMatrix<f64>,
    noise_inv: &DMatrix<f64>,
) -> Result<f64> {
    let h = model.forward(&ParamVector::from_vector(theta.clone())?, batch.inputs())?;
    let delta = batch.targets() - h;
    let step = theta - theta_prev;
    Ok(0.5 * delta.dot(&(noise_inv * &delta)) + 0.5 * step.dot(&(cov_inv * &step)))
}

/// Minimizer of the regularized objective
/// `1/2 d^T P_n^{-1} d + 1/2 (theta - theta_prev)^T P_pred^{-1} (theta - theta_prev)`.
///
/// Linear models solve the normal equations directly. Other models run
/// backtracking gradient descent from `theta_prev` for up to 10^4
/// iterations, with gradients from central differences, and return the best
/// iterate seen.
pub fn brute_force_argmin_ekf(
    batch: &Batch,
    model: &ValueModel,
    theta_prev: &ParamVector,
    cov_pred: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
) -> Result<ArgminResult> {
    let d = model.param_dim();
    check_oracle_dim("parameter", d)?;
    check_oracle_dim("batch", batch.len())?;
    check_dim("previous parameters", d, theta_prev.len())?;
    check_dim("predicted covariance", d, cov_pred.nrows())?;
    check_dim("observation noise", batch.len(), obs_noise.nrows())?;
    let cov_inv = inverse(cov_pred, "predicted error covariance")?;
    let noise_inv = inverse(obs_noise, "observation noise covariance")?;
    let prev = theta_prev.as_vector();

    if model.is_linear() {
        let mut features = DMatrix::zeros(d, batch.len());
        for (i, u) in batch.inputs().iter().enumerate() {
            features.set_column(i, &model.features(u)?);
        }
        let normal = &features * &noise_inv * features.transpose() + &cov_inv;
        let rhs = &features * &noise_inv * batch.targets() + &cov_inv * prev;
        let theta = inverse(&normal, "normal equations")? * &rhs;
        let gradient_norm = (&normal * &theta - rhs).norm();
        let loss = ekf_objective(model, batch, &theta, prev, &cov_inv, &noise_inv)?;
        return Ok(ArgminResult {
            theta: ParamVector::from_vector(theta)?,
            loss,
            gradient_norm,
            iterations: 0,
            converged: gradient_norm <= 1e-6,
        });
    }

    let gradient = |theta: &DVector<f64>| -> Result<DVector<f64>> {
        let p = ParamVector::from_vector(theta.clone())?;
        let jac = finite_diff_jacobian(model, &p, batch.inputs(), 1e-6)?;
        let delta = batch.targets() - model.forward(&p, batch.inputs())?;
        Ok(-(jac * (&noise_inv * delta)) + &cov_inv * (theta - prev))
    };

    let mut theta = prev.clone();
    let mut loss = ekf_objective(model, batch, &theta, prev, &cov_inv, &noise_inv)?;
    let mut best = (theta.clone(), loss);
    let mut step = 1.0;
    let mut grad = gradient(&theta)?;
    let mut iterations = 0;
    while iterations < 10_000 && grad.norm() > 1e-6 {
        iterations += 1;
        // Armijo backtracking; the step grows again after each success
        let mut accepted = false;
        while step > 1e-16 {
            let trial = &theta - &grad * step;
            let trial_loss = ekf_objective(model, batch, &trial, prev, &cov_inv, &noise_inv)?;
            if trial_loss <= loss - 1e-4 * step * grad.norm_squared() {
                theta = trial;
                loss = trial_loss;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if loss < best.1 {
            best = (theta.clone(), loss);
        }
        grad = gradient(&theta)?;
    }
    let gradient_norm = gradient(&best.0)?.norm();
    Ok(ArgminResult {
        theta: ParamVector::from_vector(best.0)?,
        loss: best.1,
        gradient_norm,
        iterations,
        converged: gradient_norm <= 1e-6,
    })
}

/// Minimizer of the regularized objective with `h` replaced by its
/// first-order expansion at `theta_prev`, via finite-difference Jacobians and
/// explicit inverses.
pub fn argmin_linearized_ekf(
    batch: &Batch,
    model: &ValueModel,
    theta_prev: &ParamVector,
    cov_pred: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
) -> Result<ParamVector> {
    check_oracle_dim("parameter", model.param_dim())?;
    check_oracle_dim("batch", batch.len())?;
    let jac = finite_diff_jacobian(model, theta_prev, batch.inputs(), 1e-5)?;
    let h0 = model.forward(theta_prev, batch.inputs())?;
    let cov_inv = inverse(cov_pred, "predicted error covariance")?;
    let noise_inv = inverse(obs_noise, "observation noise covariance")?;
    let normal = &jac * &noise_inv * jac.transpose() + cov_inv;
    let shift =
        inverse(&normal, "normal equations")? * (&jac * &noise_inv * (batch.targets() - h0));
    ParamVector::from_vector(theta_prev.as_vector() + shift)
}

/// Checks `(B^-1 + C D^-1 C^T)^-1 = B - B C (D + C^T B C)^-1 C^T B` elementwise.
pub fn check_matrix_inversion_lemma(
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<OracleReport> {
    check_oracle_dim("B", b.nrows())?;
    check_oracle_dim("D", d.nrows())?;
    check_dim("C rows", b.nrows(), c.nrows())?;
    check_dim("C columns", d.nrows(), c.ncols())?;
    let b_inv = inverse(b, "B")?;
    let d_inv = inverse(d, "D")?;
    let lhs = inverse(&(b_inv + c * d_inv * c.transpose()), "B^-1 + C D^-1 C^T")?;
    let inner = inverse(&(d + c.transpose() * b * c), "D + C^T B C")?;
    let rhs = b - b * c * inner * c.transpose() * b;
    Ok(OracleReport::new(
        "matrix inversion lemma",
        max_abs_diff(&lhs, &rhs),
        1e-8,
    ))
}

/// Information-form gain `(P^-1 + J P_n^-1 J^T)^-1 J P_n^-1`.
pub fn information_form_gain(
    cov_pred: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_oracle_dim("parameter", cov_pred.nrows())?;
    check_oracle_dim("batch", obs_noise.nrows())?;
    let noise_inv = inverse(obs_noise, "observation noise covariance")?;
    let info = inverse(cov_pred, "predicted error covariance")?
        + jacobian * &noise_inv * jacobian.transpose();
    Ok(inverse(&info, "information matrix")? * jacobian * noise_inv)
}

/// Compares [`optimizer::kalman_gain`] with [`information_form_gain`].
pub fn check_gain_duality(
    cov_pred: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
) -> Result<OracleReport> {
    let kalman = optimizer::kalman_gain(cov_pred, jacobian, obs_noise)?;
    let info = information_form_gain(cov_pred, jacobian, obs_noise)?;
    Ok(OracleReport::new(
        "kalman gain vs information form",
        max_abs_diff(&kalman, &info),
        1e-8,
    ))
}

/// Tolerance for Monte-Carlo agreement, in units of the natural scale of
/// each entry (standard deviations, or their products for covariances).
pub const MONTE_CARLO_TOLERANCE: f64 = 2e-2;

/// Symmetric square root factor `L` with `L L^T = m` for a PSD `m`.
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sym = m.clone();
    crate::linalg::symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

fn scaled_error(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff.abs() / scale
    } else {
        diff.abs()
    }
}

/// Monte-Carlo check of the innovation statistics reported by
/// [`optimizer::innovation_stats`].
///
/// Draws `theta ~ N(theta_hat, P_pred)` and `n ~ N(0, P_n)`, forms
/// `y = h(theta_hat) + J^T (theta - theta_hat) + n` with a finite-difference
/// `J`, and compares the empirical mean of `y`, covariance of
/// `(theta, y)` and covariance of `y` with the analytic ones. Errors are
/// normalized by `sqrt(var_i var_j)`.
pub fn check_innovation_stats(
    model: &ValueModel,
    theta_hat: &ParamVector,
    inputs: &[Input],
    cov_pred: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    let d = theta_hat.len();
    let n = inputs.len();
    check_oracle_dim("parameter", d)?;
    check_oracle_dim("batch", n)?;
    if samples < 2 {
        return Err(Error::InvalidArgument(
            "Monte Carlo needs at least two samples".into(),
        ));
    }
    let analytic = optimizer::innovation_stats(model, theta_hat, inputs, cov_pred, obs_noise)?;

    let jac = finite_diff_jacobian(model, theta_hat, inputs, 1e-5)?;
    let h0 = model.forward(theta_hat, inputs)?;
    let param_factor = psd_factor(cov_pred);
    let noise_factor = psd_factor(obs_noise);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sum_e = DVector::<f64>::zeros(d);
    let mut sum_y = DVector::<f64>::zeros(n);
    let mut sum_ey = DMatrix::<f64>::zeros(d, n);
    let mut sum_yy = DMatrix::<f64>::zeros(n, n);
    for _ in 0..samples {
        let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let w = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
        let e = &param_factor * z;
        let y = &h0 + jac.transpose() * &e + &noise_factor * w;
        sum_ey += &e * y.transpose();
        sum_yy += &y * y.transpose();
        sum_e += e;
        sum_y += y;
    }
    let count = samples as f64;
    let mean_e = &sum_e / count;
    let mean_y = &sum_y / count;
    let cross = (sum_ey - &mean_e * mean_y.transpose() * count) / (count - 1.0);
    let cov_y = (sum_yy - &mean_y * mean_y.transpose() * count) / (count - 1.0);

    let sy = &analytic.innovation_cov;
    let mut worst = 0.0_f64;
    for i in 0..n {
        worst = worst.max(scaled_error(
            mean_y[i] - analytic.predicted[i],
            sy[(i, i)].sqrt(),
        ));
        for j in 0..n {
            worst = worst.max(scaled_error(
                cov_y[(i, j)] - sy[(i, j)],
                (sy[(i, i)] * sy[(j, j)]).sqrt(),
            ));
        }
    }
    for k in 0..d {
        for j in 0..n {
            worst = worst.max(scaled_error(
                cross[(k, j)] - analytic.cross_cov[(k, j)],
                (cov_pred[(k, k)] * sy[(j, j)]).sqrt(),
            ));
        }
    }
    Ok(OracleReport::new(
        format!("innovation statistics ({samples} draws, normalized)"),
        worst,
        MONTE_CARLO_TOLERANCE,
    ))
}

/// Mean KL divergence between `N(h(theta + delta), sigma)` and
/// `N(h(theta), sigma)` over the inputs.
pub fn gaussian_predictive_kl(
    model: &ValueModel,
    theta: &ParamVector,
    delta: &ParamVector,
    inputs: &[Input],
    sigma: f64,
) -> Result<f64> {
    check_dim("parameter step", theta.len(), delta.len())?;
    let moved = ParamVector::from_vector(theta.as_vector() + delta.as_vector())?;
    let diff = model.forward(&moved, inputs)? - model.forward(theta, inputs)?;
    Ok(diff.norm_squared() / (2.0 * sigma * inputs.len() as f64))
}

/// Gaps `|KL - 1/2 dtheta^T F dtheta|` along `direction` scaled to norms
/// `start_norm / 2^j`, `j = 0..=halvings`.
pub fn kl_gaps(
    model: &ValueModel,
    theta: &ParamVector,
    inputs: &[Input],
    sigma: f64,
    direction: &DVector<f64>,
    start_norm: f64,
    halvings: usize,
) -> Result<Vec<f64>> {
    let fisher = objectives::empirical_fisher(model, theta, inputs, sigma)?;
    let unit = direction / direction.norm();
    (0..=halvings)
        .map(|j| {
            let delta = ParamVector::from_vector(&unit * (start_norm / 2f64.powi(j as i32)))?;
            let exact = gaussian_predictive_kl(model, theta, &delta, inputs, sigma)?;
            let quad = objectives::kl_quadratic(&delta, &fisher)?;
            Ok((exact - quad).abs())
        })
        .collect()
}

/// The KL gap must shrink at least 6x per halving. The reported error is
/// the worst `6 * gap_{j+1} / gap_j`, which must not exceed 1.
pub fn check_kl_order(
    model: &ValueModel,
    theta: &ParamVector,
    inputs: &[Input],
    sigma: f64,
    direction: &DVector<f64>,
    start_norm: f64,
    halvings: usize,
) -> Result<OracleReport> {
    let gaps = kl_gaps(model, theta, inputs, sigma, direction, start_norm, halvings)?;
    let worst = gaps
        .windows(2)
        .map(|w| 6.0 * w[1] / w[0])
        .fold(0.0_f64, f64::max);
    Ok(OracleReport::new(
        "quadratic KL remainder order (6x per halving)",
        worst,
        1.0,
    ))
}

/// `(1/N) sum_i E[s_i s_i^T]` with scores `s_i = (y - h(u_i)) / sigma * grad h(u_i)`,
/// averaged over `draws` samples of `y ~ N(h(u_i), sigma)` per input.
pub fn monte_carlo_fisher(
    model: &ValueModel,
    theta: &ParamVector,
    inputs: &[Input],
    sigma: f64,
    draws: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let jac = finite_diff_jacobian(model, theta, inputs, 1e-5)?;
    let d = theta.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = DMatrix::zeros(d, d);
    for i in 0..inputs.len() {
        let g = jac.column(i);
        let outer = g * g.transpose();
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * sigma.sqrt();
            let score = noise / sigma;
            sum_sq += score * score;
        }
        acc += outer * (sum_sq / draws as f64);
    }
    Ok(acc / inputs.len() as f64)
}

/// Random instance generators shared by the default suite and the tests.
pub mod random {
    use super::*;

    /// `A A^T / n + 0.5 I` with standard normal `A`.
    pub fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let mut m = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5;
        crate::linalg::symmetrize(&mut m);
        m
    }

    pub fn diagonal(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(lo..hi)))
    }

    pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    pub fn inputs(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Input> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    pub fn params(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> ParamVector {
        ParamVector::new((0..d).map(|_| rng.random_range(-scale..scale)).collect())
            .expect("finite draws")
    }

    /// Linear model on Gaussian features with a batch of noisy labels.
    pub fn linear_instance(rng: &mut ChaCha8Rng, d: usize, n: usize) -> (ValueModel, Batch) {
        let model = ValueModel::linear(d, crate::valuefunc::FeatureMap::Identity).expect("d > 0");
        let inputs: Vec<Input> = (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let targets = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0)
            .collect();
        (model, Batch::new(inputs, targets).expect("n > 0"))
    }
}

/// Exactness of the linear case: one KOVA step with `alpha = 1` on a random
/// linear instance against the normal-equations solve. Returns the max abs
/// parameter difference.
pub fn kova_vs_argmin_linear(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Result<f64> {
    let (model, batch) = random::linear_instance(rng, d, n);
    let theta_prev = random::params(rng, d, 1.0);
    let cov = random::spd(rng, d);
    let noise = random::diagonal(rng, n, 0.5, 4.0);
    let cfg = KovaConfig::default();
    let state = optimizer::init_state(d, theta_prev.clone(), &cfg)?;
    let state = with_cov(state, cov.clone());
    let kova = update_with_noise(&state, &batch, &model, &cfg, &noise)?;
    let oracle = brute_force_argmin_ekf(&batch, &model, &theta_prev, &cov, &noise)?;
    Ok((kova.as_vector() - oracle.theta.as_vector()).amax())
}

fn with_cov(state: optimizer::OptimizerState, cov: DMatrix<f64>) -> optimizer::OptimizerState {
    optimizer::OptimizerState::from_parts(state.theta_hat().clone(), cov, state.step())
        .expect("oracle covariance is symmetric")
}

/// KOVA parameter step with an explicit observation noise matrix.
pub fn update_with_noise(
    state: &optimizer::OptimizerState,
    batch: &Batch,
    model: &ValueModel,
    cfg: &KovaConfig,
    obs_noise: &DMatrix<f64>,
) -> Result<ParamVector> {
    let cov_pred = optimizer::predict(state, &cfg.noise);
    let stats = optimizer::innovation_stats(
        model,
        state.theta_hat(),
        batch.inputs(),
        &cov_pred,
        obs_noise,
    )?;
    let gain =
        optimizer::kalman_gain_with_jitter(&cov_pred, &stats.jacobian, obs_noise, cfg.jitter)?;
    let innovation = batch.targets() - stats.predicted;
    ParamVector::from_vector(state.theta_hat().as_vector() + gain * innovation * cfg.learning_rate)
}

/// The default verification suite. `fast` trims instance counts and skips
/// the Monte-Carlo checks.
pub fn default_suite(fast: bool) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_190_101);
    let instances = if fast { 10 } else { 50 };
    let mut reports = Vec::new();

    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=8);
        let b = random::spd(&mut rng, d);
        let c = random::gaussian(&mut rng, d, n);
        let dm = random::spd(&mut rng, n);
        worst = worst.max(check_matrix_inversion_lemma(&b, &c, &dm)?.max_abs_error);
    }
    reports.push(OracleReport::new(
        format!("matrix inversion lemma x{instances}"),
        worst,
        1e-8,
    ));

    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=8);
        let p = random::spd(&mut rng, d);
        let j = random::gaussian(&mut rng, d, n);
        let pn = random::diagonal(&mut rng, n, 0.5, 4.0);
        worst = worst.max(check_gain_duality(&p, &j, &pn)?.max_abs_error);
    }
    reports.push(OracleReport::new(
        format!("gain duality x{instances}"),
        worst,
        1e-8,
    ));

    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let d = rng.random_range(4..=16);
        let n = rng.random_range(4..=32);
        worst = worst.max(kova_vs_argmin_linear(&mut rng, d, n)?);
    }
    reports.push(OracleReport::new(
        format!("KOVA step = regularized argmin (linear) x{instances}"),
        worst,
        1e-8,
    ));

    let mut worst = 0.0_f64;
    for _ in 0..instances.min(20) {
        let model = ValueModel::mlp(3, &[4])?;
        let theta = random::params(&mut rng, model.param_dim(), 1.0);
        let inputs = random::inputs(&mut rng, 6, 3);
        let targets: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = Batch::new(inputs, targets)?;
        let cov = random::spd(&mut rng, model.param_dim());
        let noise = random::diagonal(&mut rng, 6, 0.5, 4.0);
        let cfg = KovaConfig::default();
        let state = with_cov(
            optimizer::init_state(model.param_dim(), theta.clone(), &cfg)?,
            cov.clone(),
        );
        let kova = update_with_noise(&state, &batch, &model, &cfg, &noise)?;
        let oracle = argmin_linearized_ekf(&batch, &model, &theta, &cov, &noise)?;
        worst = worst.max((kova.as_vector() - oracle.as_vector()).amax());
    }
    reports.push(OracleReport::new(
        "KOVA step = linearized argmin (network)",
        worst,
        1e-8,
    ));

    let model = ValueModel::mlp(3, &[8, 8])?;
    let mut worst = 0.0_f64;
    for _ in 0..if fast { 20 } else { 100 } {
        let theta = random::params(&mut rng, model.param_dim(), 1.0);
        let inputs = random::inputs(&mut rng, 1, 3);
        worst = worst.max(check_jacobian(&model, &theta, &inputs, 1e-5)?.max_abs_error);
    }
    reports.push(OracleReport::new(
        "jacobian vs central differences (relative)",
        worst,
        1e-4,
    ));

    let mut worst = 0.0_f64;
    for _ in 0..if fast { 20 } else { 100 } {
        let d = rng.random_range(1..=6);
        let n = rng.random_range(1..=10);
        let (model, batch) = random::linear_instance(&mut rng, d, n);
        let theta = random::params(&mut rng, d, 2.0);
        let noise = DMatrix::identity(n, n) * n as f64;
        let ekf = objectives::ekf_loss_unregularized(&batch, &model, &theta, &noise)?;
        let mle = objectives::mle_loss(&batch, &model, &theta)?;
        worst = worst.max((ekf - mle).abs());
    }
    reports.push(OracleReport::new(
        "EKF loss = MLE loss (sigma = N, no prior)",
        worst,
        1e-10,
    ));

    let model = ValueModel::mlp(2, &[4])?;
    let theta = model.init_params(0, 1.0)?;
    let inputs = random::inputs(&mut rng, 5, 2);
    let direction = DVector::from_fn(model.param_dim(), |_, _| rng.sample(StandardNormal));
    reports.push(check_kl_order(
        &model, &theta, &inputs, 1.0, &direction, 1e-2, 4,
    )?);

    let mut worst = 0.0_f64;
    for seed in 0..if fast { 3 } else { 10 } {
        let mdp = envs::random_mdp(seed, 6, 3, 0.95)?;
        let policy = envs::PolicySpec::random(seed + 100, 6, 3)?;
        let v = envs::exact_value(&mdp, &policy)?;
        worst = worst.max(envs::bellman_residual(&mdp, &policy, &v)?);
    }
    reports.push(OracleReport::new(
        "exact value Bellman residual",
        worst,
        1e-10,
    ));

    let mut worst = 0.0_f64;
    let noise = NoiseModel::default();
    for _ in 0..if fast { 50 } else { 200 } {
        let (model, batch) = random::linear_instance(&mut rng, 4, 8);
        let cfg = KovaConfig {
            noise,
            ..KovaConfig::default()
        };
        let state = with_cov(
            optimizer::init_state(4, random::params(&mut rng, 4, 1.0), &cfg)?,
            random::spd(&mut rng, 4),
        );
        let report = optimizer::update_with_report(&state, &batch, &model, &cfg)?;
        let sym = crate::linalg::max_asymmetry(report.state.cov());
        let loewner = crate::linalg::max_eigenvalue(&(report.state.cov() - &report.cov_pred));
        worst = worst.max(sym).max(loewner.max(0.0));
    }
    reports.push(OracleReport::new(
        "covariance symmetric and non-increasing",
        worst,
        1e-8,
    ));

    if !fast {
        let model = ValueModel::mlp(2, &[3])?;
        let theta = model.init_params(0, 1.0)?;
        let inputs = random::inputs(&mut rng, 3, 2);
        let cov = random::spd(&mut rng, model.param_dim()) * 0.5;
        let noise = random::diagonal(&mut rng, 3, 0.05, 0.2);
        reports.push(check_innovation_stats(
            &model, &theta, &inputs, &cov, &noise, 100_000, 7,
        )?);
    }

    Ok(reports)
}
