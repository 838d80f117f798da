// Exactly solvable testbeds: chain and random MDPs, their policy values and rollouts.
use kova::envs::{self, PolicySpec};

fn main() -> kova::Result<()> {
    let chain = envs::chain_mdp(5, 0.9, 0.1)?;
    let uniform = PolicySpec::uniform(5, 2)?;
    let v = envs::exact_value(&chain, &uniform)?;
    println!(
        "chain values under the uniform policy: {:.4?}",
        v.as_slice()
    );
    println!(
        "Bellman residual: {:.1e}",
        envs::bellman_residual(&chain, &uniform, &v)?
    );

    let always_right = PolicySpec::deterministic(&[envs::RIGHT; 5], 2)?;
    println!(
        "always right: {:.4?}",
        envs::exact_value(&chain, &always_right)?.as_slice()
    );

    let mdp = envs::random_mdp(7, 6, 3, 0.95)?;
    let policy = PolicySpec::random(1, 6, 3)?;
    println!(
        "random MDP values: {:.4?}",
        envs::exact_value(&mdp, &policy)?.as_slice()
    );

    let traj = envs::rollout(&mdp, &policy, 0, 8, 42)?;
    let rewards: Vec<f64> = traj.steps().iter().map(|t| t.reward).collect();
    println!("rollout rewards: {rewards:.3?}");
    Ok(())
}
