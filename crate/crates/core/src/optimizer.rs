//! The KOVA optimizer: an extended-Kalman-filter step on value parameters.
//!
//! One iteration predicts the error covariance, linearizes the value model at
//! the current estimate, forms the innovation covariance
//! `S = J^T P J + P_n`, the gain `K = P J S^{-1}`, and applies
//!
//! ```text
//! theta <- theta + alpha K (y - h(theta))
//! P     <- P - alpha K S K^T
//! ```
//!
//! With `alpha = 1` and a linear model the new `theta` is the exact minimizer
//! of the regularized objective in [`crate::objectives::ekf_loss`]. Smaller
//! learning rates shrink both updates and give up that exactness.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::targets::Batch;
use crate::valuefunc::{Input, ParamVector, ValueModel};

/// Parameter estimate and error covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    theta_hat: ParamVector,
    cov: DMatrix<f64>,
    step: usize,
}

impl OptimizerState {
    /// Builds a state from an explicit estimate and covariance. The
    /// covariance must be square, finite and symmetric to 1e-10; it is
    /// symmetrized exactly on the way in.
    pub fn from_parts(theta_hat: ParamVector, mut cov: DMatrix<f64>, step: usize) -> Result<Self> {
        check_dim("covariance rows", theta_hat.len(), cov.nrows())?;
        check_dim("covariance columns", theta_hat.len(), cov.ncols())?;
        if !linalg::all_finite(&cov) {
            return Err(Error::NonFinite("error covariance"));
        }
        if linalg::max_asymmetry(&cov) > 1e-10 {
            return Err(Error::InvalidArgument(
                "error covariance is not symmetric".into(),
            ));
        }
        linalg::symmetrize(&mut cov);
        Ok(Self {
            theta_hat,
            cov,
            step,
        })
    }

    pub fn theta_hat(&self) -> &ParamVector {
        &self.theta_hat
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    /// Starts a fresh estimation run (e.g. for a new policy) from this
    /// posterior: estimate and covariance carry over, the step counter resets.
    pub fn warm_start(&self) -> Self {
        Self {
            theta_hat: self.theta_hat.clone(),
            cov: self.cov.clone(),
            step: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvolutionNoise {
    Zero,
    /// `P_v = eta / (1 - eta) * P`, so the prediction is `P / (1 - eta)`.
    FadingMemory {
        eta: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObservationNoise {
    /// `sigma_i = N`
    BatchSize,
    /// `sigma_i = N * max(1, 1 / (ratio_i + epsilon))`
    MaxRatio { epsilon: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub evolution: EvolutionNoise,
    pub observation: ObservationNoise,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if let EvolutionNoise::FadingMemory { eta } = self.evolution {
            if !(0.0..1.0).contains(&eta) {
                return Err(Error::InvalidArgument(format!(
                    "fading-memory eta must lie in [0, 1), got {eta}"
                )));
            }
        }
        if let ObservationNoise::MaxRatio { epsilon } = self.observation {
            if !(epsilon >= 0.0 && epsilon.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "max-ratio epsilon must be finite and non-negative, got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            evolution: EvolutionNoise::Zero,
            observation: ObservationNoise::BatchSize,
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_JITTER: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KovaConfig {
    /// `alpha`, applied to both the parameter and the covariance update.
    pub learning_rate: f64,
    /// `P_0 = initial_cov_scale * I`
    pub initial_cov_scale: f64,
    pub noise: NoiseModel,
    /// On a failed factorization of `S`, retry once with
    /// `jitter * trace(S) / N` added to its diagonal.
    pub jitter: f64,
}

impl Default for KovaConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            initial_cov_scale: 1.0,
            noise: NoiseModel::default(),
            jitter: DEFAULT_JITTER,
        }
    }
}

impl KovaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(self.initial_cov_scale >= 0.0 && self.initial_cov_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial covariance scale must be finite and non-negative, got {}",
                self.initial_cov_scale
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "jitter must be finite and non-negative, got {}",
                self.jitter
            )));
        }
        self.noise.validate()
    }
}

/// `theta_hat = theta0`, `P = p0 * I`, `t = 0`.
pub fn init_state(dim: usize, theta0: ParamVector, cfg: &KovaConfig) -> Result<OptimizerState> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "parameter dimension must be positive".into(),
        ));
    }
    check_dim("initial parameters", dim, theta0.len())?;
    cfg.validate()?;
    Ok(OptimizerState {
        theta_hat: theta0,
        cov: DMatrix::identity(dim, dim) * cfg.initial_cov_scale,
        step: 0,
    })
}

/// Predicted error covariance `P + P_v`.
pub fn predict(state: &OptimizerState, noise: &NoiseModel) -> DMatrix<f64> {
    predict_cov(&state.cov, noise)
}

fn predict_cov(cov: &DMatrix<f64>, noise: &NoiseModel) -> DMatrix<f64> {
    match noise.evolution {
        EvolutionNoise::Zero => cov.clone(),
        EvolutionNoise::FadingMemory { eta } => cov * (1.0 + eta / (1.0 - eta)),
    }
}

/// Diagonal of the observation noise covariance `P_n` for a batch.
pub fn observation_noise_diag(noise: &NoiseModel, batch: &Batch) -> Result<DVector<f64>> {
    let n = batch.len() as f64;
    match noise.observation {
        ObservationNoise::BatchSize => Ok(DVector::from_element(batch.len(), n)),
        ObservationNoise::MaxRatio { epsilon } => {
            let mut diag = DVector::zeros(batch.len());
            for i in 0..batch.len() {
                let denom = batch.ratio(i) + epsilon;
                if denom == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "max-ratio noise: ratio + epsilon is zero for sample {i}"
                    )));
                }
                diag[i] = n * f64::max(1.0, 1.0 / denom);
            }
            Ok(diag)
        }
    }
}

/// Observation noise covariance `P_n` as a dense diagonal matrix.
pub fn observation_noise(noise: &NoiseModel, batch: &Batch) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_diagonal(&observation_noise_diag(
        noise, batch,
    )?))
}

/// Statistics of the linearized observation model at `theta_hat`.
#[derive(Clone, Debug)]
pub struct InnovationStats {
    /// `y_hat = h(u; theta_hat)`
    pub predicted: DVector<f64>,
    /// `J`, `d x N`
    pub jacobian: DMatrix<f64>,
    /// `P_{theta, y} = P J`
    pub cross_cov: DMatrix<f64>,
    /// `P_y = J^T P J + P_n`
    pub innovation_cov: DMatrix<f64>,
}

pub fn innovation_stats(
    model: &ValueModel,
    theta_hat: &ParamVector,
    inputs: &[Input],
    cov_pred: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
) -> Result<InnovationStats> {
    let predicted = model.forward(theta_hat, inputs)?;
    let jacobian = model.jacobian(theta_hat, inputs)?;
    check_dim("predicted covariance", model.param_dim(), cov_pred.nrows())?;
    check_dim("observation noise", inputs.len(), obs_noise.nrows())?;
    let cross_cov = cov_pred * &jacobian;
    let mut innovation_cov = jacobian.transpose() * &cross_cov + obs_noise;
    linalg::symmetrize(&mut innovation_cov);
    Ok(InnovationStats {
        predicted,
        jacobian,
        cross_cov,
        innovation_cov,
    })
}

/// Solves `K S = cross_cov` for `K` with a Cholesky factorization of the
/// symmetric innovation covariance `S`.
fn solve_gain(
    cross_cov: &DMatrix<f64>,
    innovation_cov: &DMatrix<f64>,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    let n = innovation_cov.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(cross_cov.nrows(), 0));
    }
    let chol = match linalg::cholesky(innovation_cov) {
        Some(c) => c,
        None => {
            let shift = jitter * innovation_cov.trace() / n as f64;
            let mut jittered = innovation_cov.clone();
            for i in 0..n {
                jittered[(i, i)] += shift;
            }
            linalg::cholesky(&jittered).ok_or_else(|| Error::Factorization {
                size: n,
                jitter: shift,
                condition: linalg::eigenvalue_ratio(innovation_cov),
            })?
        }
    };
    // S symmetric: K^T = S^{-1} cross_cov^T
    Ok(chol.solve(&cross_cov.transpose()).transpose())
}

/// `K = P J (J^T P J + P_n)^{-1}`, using the default jitter.
pub fn kalman_gain(
    cov_pred: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    kalman_gain_with_jitter(cov_pred, jacobian, obs_noise, DEFAULT_JITTER)
}

pub fn kalman_gain_with_jitter(
    cov_pred: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    check_dim("predicted covariance", jacobian.nrows(), cov_pred.nrows())?;
    check_dim("predicted covariance", jacobian.nrows(), cov_pred.ncols())?;
    check_dim("observation noise", jacobian.ncols(), obs_noise.nrows())?;
    check_dim("observation noise", jacobian.ncols(), obs_noise.ncols())?;
    let cross_cov = cov_pred * jacobian;
    let mut innovation_cov = jacobian.transpose() * &cross_cov + obs_noise;
    linalg::symmetrize(&mut innovation_cov);
    solve_gain(&cross_cov, &innovation_cov, jitter)
}

/// Everything one iteration computed, for diagnostics.
#[derive(Clone, Debug)]
pub struct UpdateReport {
    pub state: OptimizerState,
    pub cov_pred: DMatrix<f64>,
    pub obs_noise: DMatrix<f64>,
    /// `y - h(theta_{t|t-1})`
    pub innovation: DVector<f64>,
    pub gain: DMatrix<f64>,
}

/// One full KOVA iteration.
pub fn update(
    state: &OptimizerState,
    batch: &Batch,
    model: &ValueModel,
    cfg: &KovaConfig,
) -> Result<OptimizerState> {
    update_with_report(state, batch, model, cfg).map(|r| r.state)
}

pub fn update_with_report(
    state: &OptimizerState,
    batch: &Batch,
    model: &ValueModel,
    cfg: &KovaConfig,
) -> Result<UpdateReport> {
    cfg.validate()?;
    check_dim("optimizer state", model.param_dim(), state.dim())?;
    let cov_pred = predict(state, &cfg.noise);
    let obs_noise = observation_noise(&cfg.noise, batch)?;
    let stats = innovation_stats(
        model,
        &state.theta_hat,
        batch.inputs(),
        &cov_pred,
        &obs_noise,
    )?;
    let gain = solve_gain(&stats.cross_cov, &stats.innovation_cov, cfg.jitter)?;

    let innovation = batch.targets() - &stats.predicted;
    let alpha = cfg.learning_rate;
    let theta = state.theta_hat.as_vector() + &gain * &innovation * alpha;
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("KOVA parameter update"));
    }

    // K S K^T = K (P J)^T since K S = P J
    let mut cov = &cov_pred - &gain * stats.cross_cov.transpose() * alpha;
    linalg::symmetrize(&mut cov);
    if !linalg::all_finite(&cov) {
        return Err(Error::NonFinite("KOVA covariance update"));
    }
    repair_psd(&mut cov);

    Ok(UpdateReport {
        state: OptimizerState {
            theta_hat: ParamVector::from_vector(theta)?,
            cov,
            step: state.step + 1,
        },
        cov_pred,
        obs_noise,
        innovation,
        gain,
    })
}

/// Shifts the diagonal when rounding has pushed the spectrum below zero.
fn repair_psd(cov: &mut DMatrix<f64>) {
    let min = linalg::min_eigenvalue(cov);
    if min < 0.0 {
        for i in 0..cov.nrows() {
            cov[(i, i)] -= min;
        }
    }
}

/// True when `new_cov` does not exceed `prev_pred` in the Loewner order,
/// i.e. the largest eigenvalue of `new_cov - prev_pred` is at most 1e-8.
pub fn loewner_decrease_check(prev_pred: &DMatrix<f64>, new_cov: &DMatrix<f64>) -> bool {
    if prev_pred.shape() != new_cov.shape() {
        return false;
    }
    linalg::max_eigenvalue(&(new_cov - prev_pred)) <= 1e-8
}
