// The KL between predictive Gaussians is the Fisher quadratic form up to third order.
use kova::objectives;
use kova::valuefunc::ValueModel;
use kova::verify::{self, random};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kova::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = ValueModel::mlp(2, &[6])?;
    let theta = model.init_params(3, 1.0)?;
    let inputs = random::inputs(&mut rng, 10, 2);
    let fisher = objectives::empirical_fisher(&model, &theta, &inputs, 1.0)?;
    let direction = DVector::from_element(model.param_dim(), 1.0);

    let mut radius = 1e-1;
    for _ in 0..5 {
        let step = kova::ParamVector::from_vector(&direction * (radius / direction.norm()))?;
        let exact = verify::gaussian_predictive_kl(&model, &theta, &step, &inputs, 1.0)?;
        let quad = objectives::kl_quadratic(&step, &fisher)?;
        println!(
            "|step| {radius:.1e}: KL {exact:.6e}, quadratic {quad:.6e}, gap {:.2e}",
            (exact - quad).abs()
        );
        radius /= 2.0;
    }
    println!(
        "{}",
        verify::check_kl_order(&model, &theta, &inputs, 1.0, &direction, 1e-2, 4)?
    );
    Ok(())
}
