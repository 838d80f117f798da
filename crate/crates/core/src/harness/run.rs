//! The experiment loop.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{
    EnvConfig, ExperimentConfig, ModelConfig, OptimizerConfig, PolicyConfig, TargetConfig,
    TargetNoise,
};
use super::metrics::MetricsRow;
use crate::envs::{self, MdpSpec, PolicySpec};
use crate::error::{Error, Result};
use crate::objectives;
use crate::optimizer::{self, OptimizerState};
use crate::targets::{Batch, SampleGenerator, SampleSource, TargetKind, TargetSpec};
use crate::valuefunc::{Input, ParamVector, ValueModel};

/// A run that stopped early. `rows` holds every iteration that completed.
#[derive(Debug, thiserror::Error)]
#[error("run aborted after {} iterations: {error}", rows.len())]
pub struct RunFailure {
    pub rows: Vec<MetricsRow>,
    #[source]
    pub error: Error,
}

enum Learner {
    Kova(OptimizerState, optimizer::KovaConfig),
    Sgd(ParamVector, f64),
}

impl Learner {
    fn theta(&self) -> &ParamVector {
        match self {
            Learner::Kova(state, _) => state.theta_hat(),
            Learner::Sgd(theta, _) => theta,
        }
    }
}

struct Task {
    mdp: MdpSpec,
    policy: PolicySpec,
    exact: DVector<f64>,
    policy_transitions: DMatrix<f64>,
    policy_rewards: DVector<f64>,
    states: Vec<Input>,
}

fn build_task(cfg: &ExperimentConfig) -> Result<Task> {
    let mdp = match cfg.env {
        EnvConfig::Chain { n, slip } => envs::chain_mdp(n, cfg.gamma, slip)?,
        EnvConfig::Random {
            seed,
            n_states,
            n_actions,
        } => envs::random_mdp(seed, n_states, n_actions, cfg.gamma)?,
    };
    let policy = match cfg.policy {
        PolicyConfig::Uniform => PolicySpec::uniform(mdp.n_states(), mdp.n_actions())?,
        PolicyConfig::Random { seed } => PolicySpec::random(seed, mdp.n_states(), mdp.n_actions())?,
    };
    let exact = envs::exact_value(&mdp, &policy)?;
    let policy_transitions = mdp.policy_transitions(&policy)?;
    let policy_rewards = mdp.policy_rewards(&policy)?;
    let states = (0..mdp.n_states())
        .map(|s| envs::one_hot(s, mdp.n_states()))
        .collect();
    Ok(Task {
        mdp,
        policy,
        exact,
        policy_transitions,
        policy_rewards,
        states,
    })
}

/// Expected target label for every state given `V(.; theta_target)`.
fn expected_targets(
    task: &Task,
    target: TargetConfig,
    gamma: f64,
    v_target: &DVector<f64>,
) -> Result<DVector<f64>> {
    let p = &task.policy_transitions;
    let r = &task.policy_rewards;
    match target {
        TargetConfig::KStep { k } => {
            let mut y = v_target.clone();
            for _ in 0..k {
                y = r + p * y * gamma;
            }
            Ok(y)
        }
        TargetConfig::Gae { lambda } => {
            let n = v_target.len();
            let td = r + p * v_target * gamma - v_target;
            let system = DMatrix::identity(n, n) - p * (gamma * lambda);
            let adv = system
                .lu()
                .solve(&td)
                .ok_or(Error::Singular("I - gamma lambda P"))?;
            Ok(v_target + adv)
        }
    }
}

fn state_index(u: &[f64]) -> usize {
    u.iter().position(|&x| x == 1.0).expect("one-hot state")
}

/// Runs one policy-evaluation experiment.
///
/// Each iteration freezes the target parameters at the current estimate,
/// adds fresh rollouts to a trajectory store, samples a batch, applies one
/// optimizer step and records the RMS error of the value estimate against
/// the exact policy value over all states.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<Vec<MetricsRow>, RunFailure> {
    let mut rows = Vec::with_capacity(cfg.iterations);
    match run_inner(cfg, &mut rows) {
        Ok(()) => Ok(rows),
        Err(error) => Err(RunFailure { rows, error }),
    }
}

fn run_inner(cfg: &ExperimentConfig, rows: &mut Vec<MetricsRow>) -> Result<()> {
    let task = build_task(cfg)?;
    let n_states = task.mdp.n_states();
    let model = match &cfg.model {
        ModelConfig::Tabular => ValueModel::tabular(n_states)?,
        ModelConfig::Mlp { hidden } => ValueModel::mlp(n_states, hidden)?,
    };

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let theta0 = model.init_params(master.next_u64(), cfg.init_scale)?;
    let mut store = SampleGenerator::new(
        SampleSource::TrajectoryStore,
        cfg.rollout.capacity,
        master.next_u64(),
    )?;
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(master.next_u64());

    let mut learner = match cfg.optimizer {
        OptimizerConfig::Kova(kcfg) => Learner::Kova(
            optimizer::init_state(model.param_dim(), theta0, &kcfg)?,
            kcfg,
        ),
        OptimizerConfig::Sgd { alpha } => Learner::Sgd(theta0, alpha),
    };
    let spec = TargetSpec {
        kind: match cfg.target {
            TargetConfig::KStep { k } => TargetKind::KStepV { k },
            TargetConfig::Gae { lambda } => TargetKind::Gae { lambda },
        },
        gamma: cfg.gamma,
    };

    for iteration in 1..=cfg.iterations {
        let started = cfg.wall_clock.then(Instant::now);
        let theta_target = learner.theta().clone();

        let mut added = 0;
        while added < cfg.rollout.episodes || store.available() < cfg.batch_size {
            let start = rollout_rng.random_range(0..n_states);
            let traj = envs::rollout_with_rng(
                &task.mdp,
                &task.policy,
                start,
                cfg.rollout.length,
                &mut rollout_rng,
            )?;
            store.push_trajectory(traj);
            added += 1;
        }

        let batch = match cfg.target_noise {
            TargetNoise::Sampled => {
                store.sample_batch(cfg.batch_size, &spec, &theta_target, &model)?
            }
            TargetNoise::Expected => {
                let anchors = store.sample_anchors(cfg.batch_size)?;
                let v_target = model.forward(&theta_target, &task.states)?;
                let expected = expected_targets(&task, cfg.target, cfg.gamma, &v_target)?;
                let mut inputs = Vec::with_capacity(anchors.len());
                let mut targets = Vec::with_capacity(anchors.len());
                for a in anchors {
                    let state = store.anchor_transition(a)?.state.clone();
                    targets.push(expected[state_index(&state)]);
                    inputs.push(state);
                }
                Batch::new(inputs, targets)?
            }
        };

        let (ekf_loss, cov_trace, norm) = match &mut learner {
            Learner::Kova(state, kcfg) => {
                let report = optimizer::update_with_report(state, &batch, &model, kcfg)?;
                let ekf = match objectives::ekf_loss(
                    &batch,
                    &model,
                    report.state.theta_hat(),
                    state.theta_hat(),
                    &report.cov_pred,
                    &report.obs_noise,
                ) {
                    Ok(v) => Some(v),
                    Err(Error::Singular(_)) => None,
                    Err(e) => return Err(e),
                };
                let trace = report.state.cov().trace();
                *state = report.state;
                (ekf, Some(trace), report.innovation.norm())
            }
            Learner::Sgd(theta, alpha) => {
                let grad = objectives::mle_gradient(&batch, &model, theta)?;
                *theta = objectives::sgd_mle_step(theta, &batch, &model, *alpha)?;
                (None, None, grad.norm())
            }
        };

        let theta = learner.theta();
        let values = model.forward(theta, &task.states)?;
        let rms = ((values - &task.exact).norm_squared() / n_states as f64).sqrt();
        let mle = objectives::mle_loss(&batch, &model, theta)?;
        let finite = rms.is_finite()
            && mle.is_finite()
            && norm.is_finite()
            && ekf_loss.is_none_or(f64::is_finite)
            && cov_trace.is_none_or(f64::is_finite);
        if !finite {
            return Err(Error::NonFinite("run metrics"));
        }
        rows.push(MetricsRow {
            iteration,
            rms_value_error: rms,
            mle_loss: mle,
            ekf_loss,
            cov_trace,
            grad_or_innovation_norm: norm,
            wall_ms: started.map(|t| t.elapsed().as_secs_f64() * 1e3),
        });
    }
    Ok(())
}
