// Linear and MLP value functions: evaluation, Jacobians, parameter layout.
use kova::valuefunc::{FeatureMap, ValueModel};
use kova::verify;

fn main() -> kova::Result<()> {
    let linear = ValueModel::linear(2, FeatureMap::Affine)?;
    let theta = kova::ParamVector::new(vec![1.0, -2.0, 0.5])?;
    println!("affine V([3, 1]) = {}", linear.value(&theta, &[3.0, 1.0])?);

    let mlp = ValueModel::mlp(2, &[4])?;
    let theta = mlp.init_params(0, 0.5)?;
    let inputs = vec![vec![0.5, -0.5], vec![1.0, 0.0]];
    println!("mlp has {} parameters", mlp.param_dim());
    println!("values: {:?}", mlp.forward(&theta, &inputs)?.as_slice());

    let jac = mlp.jacobian(&theta, &inputs)?;
    println!("jacobian is {} x {}", jac.nrows(), jac.ncols());
    println!("{}", verify::check_jacobian(&mlp, &theta, &inputs, 1e-5)?);
    Ok(())
}
