//! Losses and information-geometry diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::targets::Batch;
use crate::valuefunc::{Input, ParamVector, ValueModel};

fn residuals(batch: &Batch, model: &ValueModel, theta: &ParamVector) -> Result<DVector<f64>> {
    Ok(batch.targets() - model.forward(theta, batch.inputs())?)
}

/// `(1 / 2N) sum_i (y_i - h(u_i; theta))^2`
pub fn mle_loss(batch: &Batch, model: &ValueModel, theta: &ParamVector) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("loss of an empty batch".into()));
    }
    let delta = residuals(batch, model, theta)?;
    Ok(delta.norm_squared() / (2.0 * batch.len() as f64))
}

/// `1/2 d^T P_n^{-1} d`, the data term of [`ekf_loss`].
///
/// With `P_n = N I` this equals [`mle_loss`]; it is the regularized loss in
/// the limit of a vanishing prior covariance.
pub fn ekf_loss_unregularized(
    batch: &Batch,
    model: &ValueModel,
    theta: &ParamVector,
    obs_noise: &DMatrix<f64>,
) -> Result<f64> {
    check_dim("observation noise", batch.len(), obs_noise.nrows())?;
    let delta = residuals(batch, model, theta)?;
    let chol =
        linalg::cholesky(obs_noise).ok_or(Error::Singular("observation noise covariance"))?;
    Ok(0.5 * delta.dot(&chol.solve(&delta)))
}

/// Regularized objective
/// `1/2 d^T P_n^{-1} d + 1/2 (theta - theta_prev)^T P_pred^{-1} (theta - theta_prev)`.
pub fn ekf_loss(
    batch: &Batch,
    model: &ValueModel,
    theta: &ParamVector,
    theta_prev: &ParamVector,
    cov_pred: &DMatrix<f64>,
    obs_noise: &DMatrix<f64>,
) -> Result<f64> {
    check_dim("previous parameters", theta.len(), theta_prev.len())?;
    check_dim("predicted covariance", theta.len(), cov_pred.nrows())?;
    let data = ekf_loss_unregularized(batch, model, theta, obs_noise)?;
    let step = theta.as_vector() - theta_prev.as_vector();
    let chol = linalg::cholesky(cov_pred).ok_or(Error::Singular("predicted error covariance"))?;
    Ok(data + 0.5 * step.dot(&chol.solve(&step)))
}

/// Empirical Fisher information of the Gaussian observation model.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherMatrix(DMatrix<f64>);

impl FisherMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// `F = (1/N) sum_i grad h(u_i) grad h(u_i)^T / sigma` for observations
/// `y ~ N(h(u; theta), sigma)`.
pub fn empirical_fisher(
    model: &ValueModel,
    theta: &ParamVector,
    inputs: &[Input],
    sigma: f64,
) -> Result<FisherMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "observation variance must be positive, got {sigma}"
        )));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "Fisher information of an empty input set".into(),
        ));
    }
    let jac = model.jacobian(theta, inputs)?;
    let mut f = &jac * jac.transpose() / (sigma * inputs.len() as f64);
    linalg::symmetrize(&mut f);
    Ok(FisherMatrix(f))
}

/// `1/2 dtheta^T F dtheta`, the second-order approximation of the KL
/// divergence between predictive distributions at `theta` and `theta + dtheta`.
pub fn kl_quadratic(delta: &ParamVector, fisher: &FisherMatrix) -> Result<f64> {
    check_dim("Fisher matrix", delta.len(), fisher.dim())?;
    let v = delta.as_vector();
    Ok(0.5 * v.dot(&(&fisher.0 * v)))
}

/// Gradient of [`mle_loss`]: `-(1/N) J (y - h)`.
pub fn mle_gradient(
    batch: &Batch,
    model: &ValueModel,
    theta: &ParamVector,
) -> Result<DVector<f64>> {
    let delta = residuals(batch, model, theta)?;
    let jac = model.jacobian(theta, batch.inputs())?;
    Ok(-(jac * delta) / batch.len() as f64)
}

/// One step of gradient descent on [`mle_loss`]:
/// `theta + alpha (1/N) sum_i (y_i - h(u_i)) grad h(u_i)`.
pub fn sgd_mle_step(
    theta: &ParamVector,
    batch: &Batch,
    model: &ValueModel,
    alpha: f64,
) -> Result<ParamVector> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {alpha}"
        )));
    }
    let grad = mle_gradient(batch, model, theta)?;
    let next = theta.as_vector() - grad * alpha;
    ParamVector::from_vector(next).map_err(|_| Error::NonFinite("SGD parameter update"))
}
