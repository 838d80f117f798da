// One KOVA iteration by hand, checked against the regularized least-squares argmin.
use kova::optimizer::{self, KovaConfig, OptimizerState};
use kova::targets::Batch;
use kova::valuefunc::{FeatureMap, ValueModel};
use kova::verify;

fn main() -> kova::Result<()> {
    let model = ValueModel::linear(2, FeatureMap::Affine)?;
    let batch = Batch::new(
        vec![
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![-1.0, 2.0],
        ],
        vec![1.0, 2.0, 2.5, 0.0],
    )?;
    let cfg = KovaConfig::default();
    let state = optimizer::init_state(model.param_dim(), kova::ParamVector::zeros(3), &cfg)?;

    let report = optimizer::update_with_report(&state, &batch, &model, &cfg)?;
    println!("innovation: {:?}", report.innovation.as_slice());
    println!(
        "theta after one step: {:?}",
        report.state.theta_hat().as_slice()
    );
    println!(
        "cov trace {:.4} -> {:.4}",
        report.cov_pred.trace(),
        report.state.cov().trace()
    );

    let oracle = verify::brute_force_argmin_ekf(
        &batch,
        &model,
        state.theta_hat(),
        &report.cov_pred,
        &report.obs_noise,
    )?;
    let gap = (report.state.theta_hat().as_vector() - oracle.theta.as_vector()).amax();
    println!("distance to argmin: {gap:.2e}");

    // a state restored from saved parts continues where it left off
    let restored = OptimizerState::from_parts(
        report.state.theta_hat().clone(),
        report.state.cov().clone(),
        1,
    )?;
    let next = optimizer::update(&restored, &batch, &model, &cfg)?;
    println!(
        "step {} theta {:?}",
        next.step(),
        next.theta_hat().as_slice()
    );
    Ok(())
}
