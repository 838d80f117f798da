// Target labels from a stored trajectory: k-step returns, GAE and Q targets.
use kova::envs::{self, PolicySpec};
use kova::targets::{gae_target, kstep_v_target, max_q_target};
use kova::valuefunc::{FeatureMap, ValueModel};

fn main() -> kova::Result<()> {
    let mdp = envs::chain_mdp(5, 0.9, 0.1)?;
    let policy = PolicySpec::uniform(5, 2)?;
    let traj = envs::rollout(&mdp, &policy, 2, 12, 1)?;

    let model = ValueModel::tabular(5)?;
    let frozen = kova::ParamVector::new(envs::exact_value(&mdp, &policy)?.as_slice().to_vec())?;
    for k in [1, 3, 5] {
        println!(
            "{k}-step target at m=0: {:.4}",
            kstep_v_target(&traj, 0, k, 0.9, &frozen, &model)?
        );
    }
    for lambda in [0.0, 0.5, 0.95, 1.0] {
        println!(
            "GAE({lambda}) target at m=0: {:.4}",
            gae_target(&traj, 0, 0.9, lambda, &frozen, &model)?
        );
    }
    println!(
        "exact value of the start state: {:.4}",
        frozen.as_slice()[2]
    );

    // Q over state ++ action, maximised over both actions
    let q = ValueModel::linear(7, FeatureMap::Identity)?;
    let q_theta = kova::ParamVector::new(vec![0.0, 0.1, 0.2, 0.3, 0.4, 1.0, -1.0])?;
    let actions = vec![envs::one_hot(0, 2), envs::one_hot(1, 2)];
    println!(
        "max-Q target: {:.4}",
        max_q_target(&traj.steps()[0], 0.9, &q_theta, &q, &actions)?
    );
    Ok(())
}
