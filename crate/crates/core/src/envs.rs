//! Finite MDPs with exact policy values.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::targets::{Trajectory, Transition};

const SIMPLEX_TOL: f64 = 1e-12;

/// Finite MDP with expected rewards `R[s, a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpSpec {
    n_states: usize,
    n_actions: usize,
    /// Row-major `[s][a][s']`.
    transitions: Vec<f64>,
    /// Row-major `[s][a]`.
    rewards: Vec<f64>,
    gamma: f64,
}

fn check_simplex(row: &[f64], what: &str) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidArgument(format!(
            "{what} is not a probability distribution (sum {sum})"
        )));
    }
    Ok(())
}

impl MdpSpec {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument(
                "MDP needs at least one state and action".into(),
            ));
        }
        check_dim(
            "transition tensor",
            n_states * n_actions * n_states,
            transitions.len(),
        )?;
        check_dim("reward matrix", n_states * n_actions, rewards.len())?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "discount must lie in (0, 1), got {gamma}"
            )));
        }
        for (i, row) in transitions.chunks(n_states).enumerate() {
            check_simplex(row, &format!("P[{}, {}, .]", i / n_actions, i % n_actions))?;
        }
        if !rewards.iter().all(|r| r.is_finite()) {
            return Err(Error::NonFinite("MDP rewards"));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// State-to-state transition matrix under `policy`.
    pub fn policy_transitions(&self, policy: &PolicySpec) -> Result<DMatrix<f64>> {
        self.check_policy(policy)?;
        let mut p = DMatrix::zeros(self.n_states, self.n_states);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                for (next, &q) in self.transition_row(s, a).iter().enumerate() {
                    p[(s, next)] += pa * q;
                }
            }
        }
        Ok(p)
    }

    /// Expected one-step reward per state under `policy`.
    pub fn policy_rewards(&self, policy: &PolicySpec) -> Result<DVector<f64>> {
        self.check_policy(policy)?;
        Ok(DVector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions)
                .map(|a| policy.prob(s, a) * self.reward(s, a))
                .sum()
        }))
    }

    fn check_policy(&self, policy: &PolicySpec) -> Result<()> {
        check_dim("policy states", self.n_states, policy.n_states())?;
        check_dim("policy actions", self.n_actions, policy.n_actions())
    }
}

/// Stochastic policy `pi(a | s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    probs: DMatrix<f64>,
}

impl PolicySpec {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "policy needs at least one state and action".into(),
            ));
        }
        for s in 0..probs.nrows() {
            let row: Vec<f64> = probs.row(s).iter().copied().collect();
            check_simplex(&row, &format!("pi(. | {s})"))?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(
            n_states,
            n_actions,
            1.0 / n_actions as f64,
        ))
    }

    /// Rows of normalized positive uniforms.
    pub fn random(seed: u64, n_states: usize, n_actions: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probs = DMatrix::zeros(n_states, n_actions);
        for s in 0..n_states {
            let row = random_simplex(&mut rng, n_actions);
            for (a, p) in row.into_iter().enumerate() {
                probs[(s, a)] = p;
            }
        }
        Self::new(probs)
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = DMatrix::zeros(actions.len(), n_actions);
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::IndexOutOfRange {
                    index: a,
                    len: n_actions,
                });
            }
            probs[(s, a)] = 1.0;
        }
        Self::new(probs)
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }
}

/// Normalized positive uniforms. The last entry absorbs rounding so the row
/// sums to one within a couple of ulps.
fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// `n`-state chain with actions left/right.
///
/// The chosen move happens with probability `1 - slip`; otherwise the agent
/// moves the opposite way. Moves past either end stay in place. Entering the
/// last state from another state pays 1, every other transition pays 0, so
/// `R[s, a]` is the probability of moving into the last state.
pub fn chain_mdp(n: usize, gamma: f64, slip: f64) -> Result<MdpSpec> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "chain needs at least 2 states, got {n}"
        )));
    }
    if !(0.0..0.5).contains(&slip) {
        return Err(Error::InvalidArgument(format!(
            "slip must lie in [0, 0.5), got {slip}"
        )));
    }
    let mut transitions = vec![0.0; n * 2 * n];
    let mut rewards = vec![0.0; n * 2];
    for s in 0..n {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        for a in [LEFT, RIGHT] {
            let (intended, opposite) = if a == LEFT {
                (left, right)
            } else {
                (right, left)
            };
            let row = &mut transitions[(s * 2 + a) * n..(s * 2 + a + 1) * n];
            row[intended] += 1.0 - slip;
            row[opposite] += slip;
            if s != n - 1 {
                rewards[s * 2 + a] = row[n - 1];
            }
        }
    }
    MdpSpec::new(n, 2, transitions, rewards, gamma)
}

/// MDP with normalized-uniform transition rows and rewards uniform in `[0, 1)`.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> Result<MdpSpec> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument(
            "MDP needs at least one state and action".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transitions.extend(random_simplex(&mut rng, n_states));
    }
    let rewards = (0..n_states * n_actions)
        .map(|_| rng.random::<f64>())
        .collect();
    MdpSpec::new(n_states, n_actions, transitions, rewards, gamma)
}

/// `V = (I - gamma P_pi)^{-1} R_pi` by LU factorization.
pub fn exact_value(mdp: &MdpSpec, policy: &PolicySpec) -> Result<DVector<f64>> {
    let p = mdp.policy_transitions(policy)?;
    let r = mdp.policy_rewards(policy)?;
    let n = mdp.n_states();
    let system = DMatrix::identity(n, n) - p * mdp.gamma();
    system
        .lu()
        .solve(&r)
        .ok_or(Error::Singular("Bellman system I - gamma P"))
}

/// `max_s |V(s) - (R_pi + gamma P_pi V)(s)|`
pub fn bellman_residual(mdp: &MdpSpec, policy: &PolicySpec, values: &DVector<f64>) -> Result<f64> {
    check_dim("value vector", mdp.n_states(), values.len())?;
    let p = mdp.policy_transitions(policy)?;
    let r = mdp.policy_rewards(policy)?;
    let backup = r + p * values * mdp.gamma();
    Ok((values - backup).amax())
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Inverse-CDF draw from a probability row.
fn sample_index(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Samples `len` steps under `policy` from `start`.
///
/// States and actions are one-hot encoded. Rewards are the expected rewards
/// `R[s, a]`. No step is terminal: every MDP here is continuing.
pub fn rollout(
    mdp: &MdpSpec,
    policy: &PolicySpec,
    start: usize,
    len: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rollout_with_rng(mdp, policy, start, len, &mut rng)
}

pub fn rollout_with_rng(
    mdp: &MdpSpec,
    policy: &PolicySpec,
    start: usize,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    if len == 0 {
        return Err(Error::InvalidArgument(
            "rollout length must be positive".into(),
        ));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if start >= ns {
        return Err(Error::IndexOutOfRange {
            index: start,
            len: ns,
        });
    }
    let mut steps = Vec::with_capacity(len);
    let mut s = start;
    for _ in 0..len {
        let a = sample_index(rng, (0..na).map(|a| policy.prob(s, a)));
        let next = sample_index(rng, mdp.transition_row(s, a).iter().copied());
        steps.push(Transition::new(
            one_hot(s, ns),
            one_hot(a, na),
            mdp.reward(s, a),
            one_hot(next, ns),
            false,
        ));
        s = next;
    }
    Trajectory::new(steps)
}
