//! Bellman target labels `y(u)` and batch assembly from a sample generator.
//!
//! All constructors evaluate the bootstrap terms with a frozen copy of the
//! parameters (`theta_target`). A terminal transition contributes no bootstrap
//! value. When a trajectory ends without a terminal flag, sums are truncated
//! at its end and bootstrapped from the last `next_state`.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::valuefunc::{Input, ParamVector, ValueModel};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Input,
    pub action: Input,
    pub reward: f64,
    pub next_state: Input,
    pub terminal: bool,
    /// `pi_old(a|s) / pi_new(a|s)` when the sample came from an older policy.
    pub ratio: Option<f64>,
}

impl Transition {
    pub fn new(
        state: Input,
        action: Input,
        reward: f64,
        next_state: Input,
        terminal: bool,
    ) -> Self {
        Self {
            state,
            action,
            reward,
            next_state,
            terminal,
            ratio: None,
        }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = Some(ratio);
        self
    }

    fn state_action(&self) -> Input {
        let mut u = self.state.clone();
        u.extend_from_slice(&self.action);
        u
    }
}

/// Ordered transitions from one rollout under a fixed policy.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Trajectory {
    steps: Vec<Transition>,
}

impl Trajectory {
    pub fn new(steps: Vec<Transition>) -> Result<Self> {
        for (m, step) in steps.iter().enumerate() {
            if !step.reward.is_finite() {
                return Err(Error::NonFinite("transition reward"));
            }
            if let Some(next) = steps.get(m + 1) {
                if !step.terminal && step.next_state != next.state {
                    return Err(Error::InvalidArgument(format!(
                        "trajectory is discontinuous at step {m}: next_state differs from the following state"
                    )));
                }
            }
        }
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    fn step(&self, m: usize) -> Result<&Transition> {
        self.steps.get(m).ok_or(Error::IndexOutOfRange {
            index: m,
            len: self.steps.len(),
        })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "discount must lie in (0, 1], got {gamma}"
        )))
    }
}

/// `sum_{i<k} gamma^i r_{m+i} + gamma^k V(s_{m+k}; theta_target)`
pub fn kstep_v_target(
    traj: &Trajectory,
    m: usize,
    k: usize,
    gamma: f64,
    theta_target: &ParamVector,
    model: &ValueModel,
) -> Result<f64> {
    traj.step(m)?;
    check_gamma(gamma)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k-step target needs k >= 1".into()));
    }
    let steps = traj.steps();
    let mut ret = 0.0;
    let mut discount = 1.0;
    for step in steps.iter().skip(m).take(k) {
        ret += discount * step.reward;
        discount *= gamma;
        if step.terminal {
            return Ok(ret);
        }
    }
    let last = &steps[(m + k).min(steps.len()) - 1];
    Ok(ret + discount * model.value(theta_target, &last.next_state)?)
}

/// GAE-based value target: the sum of `(gamma*lambda)^i` weighted TD errors
/// from `m` onward, plus `V(s_m; theta_target)`.
pub fn gae_target(
    traj: &Trajectory,
    m: usize,
    gamma: f64,
    lambda: f64,
    theta_target: &ParamVector,
    model: &ValueModel,
) -> Result<f64> {
    let first = traj.step(m)?;
    check_gamma(gamma)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let v_m = model.value(theta_target, &first.state)?;
    let mut v_here = v_m;
    let mut sum = 0.0;
    let mut weight = 1.0;
    for step in &traj.steps()[m..] {
        let v_next = if step.terminal {
            0.0
        } else {
            model.value(theta_target, &step.next_state)?
        };
        sum += weight * (step.reward + gamma * v_next - v_here);
        weight *= gamma * lambda;
        if step.terminal || weight == 0.0 {
            break;
        }
        v_here = v_next;
    }
    Ok(sum + v_m)
}

/// `r + gamma Q(s', pi(s'); theta_target)`, where the model consumes `state ++ action`.
pub fn one_step_q_target(
    tr: &Transition,
    gamma: f64,
    theta_target: &ParamVector,
    model: &ValueModel,
    next_action: &[f64],
) -> Result<f64> {
    check_gamma(gamma)?;
    check_dim(
        "state-action input",
        model.input_dim(),
        tr.next_state.len() + next_action.len(),
    )?;
    if tr.terminal {
        return Ok(tr.reward);
    }
    let mut u = tr.next_state.clone();
    u.extend_from_slice(next_action);
    Ok(tr.reward + gamma * model.value(theta_target, &u)?)
}

/// `r + gamma max_a' Q(s', a'; theta_target)`. Ties resolve to the lowest action index.
pub fn max_q_target(
    tr: &Transition,
    gamma: f64,
    theta_target: &ParamVector,
    model: &ValueModel,
    action_set: &[Input],
) -> Result<f64> {
    check_gamma(gamma)?;
    if action_set.is_empty() {
        return Err(Error::InvalidArgument("action set is empty".into()));
    }
    if tr.terminal {
        return Ok(tr.reward);
    }
    let mut best = f64::NEG_INFINITY;
    for a in action_set {
        let mut u = tr.next_state.clone();
        u.extend_from_slice(a);
        let q = model.value(theta_target, &u)?;
        if q > best {
            best = q;
        }
    }
    Ok(tr.reward + gamma * best)
}

/// `N` inputs with their target labels and optional policy ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    inputs: Vec<Input>,
    targets: DVector<f64>,
    ratios: Option<DVector<f64>>,
}

impl Batch {
    pub fn new(inputs: Vec<Input>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument(
                "batch must hold at least one sample".into(),
            ));
        }
        check_dim("batch targets", inputs.len(), targets.len())?;
        if !targets.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite("batch targets"));
        }
        Ok(Self {
            inputs,
            targets: DVector::from_vec(targets),
            ratios: None,
        })
    }

    pub fn with_ratios(mut self, ratios: Vec<f64>) -> Result<Self> {
        check_dim("batch ratios", self.inputs.len(), ratios.len())?;
        if !ratios.iter().all(|r| r.is_finite()) {
            return Err(Error::NonFinite("batch ratios"));
        }
        self.ratios = Some(DVector::from_vec(ratios));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Input] {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn ratios(&self) -> Option<&DVector<f64>> {
        self.ratios.as_ref()
    }

    /// Ratio of sample `i`, 1 when the batch carries none.
    pub fn ratio(&self, i: usize) -> f64 {
        self.ratios.as_ref().map_or(1.0, |r| r[i])
    }
}

pub type NextActionFn = Arc<dyn Fn(&[f64]) -> Input + Send + Sync>;

#[derive(Clone)]
pub enum TargetKind {
    KStepV {
        k: usize,
    },
    Gae {
        lambda: f64,
    },
    /// The policy picks `pi(s')` deterministically.
    OneStepQ {
        policy: NextActionFn,
    },
    MaxQ {
        actions: Vec<Input>,
    },
}

impl fmt::Debug for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKind::KStepV { k } => f.debug_struct("KStepV").field("k", k).finish(),
            TargetKind::Gae { lambda } => f.debug_struct("Gae").field("lambda", lambda).finish(),
            TargetKind::OneStepQ { .. } => f.write_str("OneStepQ"),
            TargetKind::MaxQ { actions } => {
                f.debug_struct("MaxQ").field("actions", actions).finish()
            }
        }
    }
}

impl TargetKind {
    fn uses_state_action(&self) -> bool {
        matches!(self, TargetKind::OneStepQ { .. } | TargetKind::MaxQ { .. })
    }
}

#[derive(Clone, Debug)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleSource {
    /// Whole trajectories; every stored step is an anchor with its full future.
    TrajectoryStore,
    /// Individual transitions without trajectory context.
    TransitionReplay,
}

/// Samples generator: stores experience and draws anchors without
/// replacement from a seeded ChaCha8 stream.
///
/// Capacity counts transitions. The replay drops its oldest transitions; the
/// trajectory store drops whole trajectories, oldest first, but always keeps
/// the most recent one.
#[derive(Clone, Debug)]
pub struct SampleGenerator {
    source: SampleSource,
    capacity: usize,
    rng: ChaCha8Rng,
    trajectories: VecDeque<Trajectory>,
    transitions: VecDeque<Transition>,
    stored_steps: usize,
}

impl SampleGenerator {
    pub fn new(source: SampleSource, capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument(
                "sample generator capacity must be positive".into(),
            ));
        }
        Ok(Self {
            source,
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trajectories: VecDeque::new(),
            transitions: VecDeque::new(),
            stored_steps: 0,
        })
    }

    pub fn source(&self) -> SampleSource {
        self.source
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of anchors currently available.
    pub fn available(&self) -> usize {
        match self.source {
            SampleSource::TrajectoryStore => self.stored_steps,
            SampleSource::TransitionReplay => self.transitions.len(),
        }
    }

    pub fn push_trajectory(&mut self, traj: Trajectory) {
        match self.source {
            SampleSource::TrajectoryStore => {
                if traj.is_empty() {
                    return;
                }
                self.stored_steps += traj.len();
                self.trajectories.push_back(traj);
                while self.stored_steps > self.capacity && self.trajectories.len() > 1 {
                    let old = self.trajectories.pop_front().expect("non-empty store");
                    self.stored_steps -= old.len();
                }
            }
            SampleSource::TransitionReplay => {
                for step in traj.steps {
                    self.push_transition(step);
                }
            }
        }
    }

    pub fn push_transition(&mut self, tr: Transition) {
        match self.source {
            SampleSource::TrajectoryStore => {
                self.push_trajectory(Trajectory { steps: vec![tr] });
            }
            SampleSource::TransitionReplay => {
                self.transitions.push_back(tr);
                while self.transitions.len() > self.capacity {
                    self.transitions.pop_front();
                }
            }
        }
    }

    /// Draws `n` distinct anchor indices in `0..available()`.
    pub fn sample_anchors(&mut self, n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let available = self.available();
        if n > available {
            return Err(Error::InsufficientData {
                required: n,
                available,
            });
        }
        Ok(rand::seq::index::sample(&mut self.rng, available, n).into_vec())
    }

    fn locate(&self, anchor: usize) -> Result<(&Trajectory, usize)> {
        let mut rest = anchor;
        for traj in &self.trajectories {
            if rest < traj.len() {
                return Ok((traj, rest));
            }
            rest -= traj.len();
        }
        Err(Error::IndexOutOfRange {
            index: anchor,
            len: self.stored_steps,
        })
    }

    pub fn anchor_transition(&self, anchor: usize) -> Result<&Transition> {
        match self.source {
            SampleSource::TrajectoryStore => self.locate(anchor).map(|(traj, m)| &traj.steps()[m]),
            SampleSource::TransitionReplay => {
                self.transitions.get(anchor).ok_or(Error::IndexOutOfRange {
                    index: anchor,
                    len: self.transitions.len(),
                })
            }
        }
    }

    /// Input, target label and ratio for a single anchor.
    pub fn labelled_anchor(
        &self,
        anchor: usize,
        spec: &TargetSpec,
        theta_target: &ParamVector,
        model: &ValueModel,
    ) -> Result<(Input, f64, Option<f64>)> {
        let (tr, target) = match self.source {
            SampleSource::TrajectoryStore => {
                let (traj, m) = self.locate(anchor)?;
                let tr = &traj.steps()[m];
                let target = match &spec.kind {
                    TargetKind::KStepV { k } => {
                        kstep_v_target(traj, m, *k, spec.gamma, theta_target, model)?
                    }
                    TargetKind::Gae { lambda } => {
                        gae_target(traj, m, spec.gamma, *lambda, theta_target, model)?
                    }
                    kind => single_step_target(tr, kind, spec.gamma, theta_target, model)?,
                };
                (tr, target)
            }
            SampleSource::TransitionReplay => {
                let tr = self.transitions.get(anchor).ok_or(Error::IndexOutOfRange {
                    index: anchor,
                    len: self.transitions.len(),
                })?;
                let target = single_step_target(tr, &spec.kind, spec.gamma, theta_target, model)?;
                (tr, target)
            }
        };
        let input = if spec.kind.uses_state_action() {
            tr.state_action()
        } else {
            tr.state.clone()
        };
        Ok((input, target, tr.ratio))
    }

    pub fn sample_batch(
        &mut self,
        n: usize,
        spec: &TargetSpec,
        theta_target: &ParamVector,
        model: &ValueModel,
    ) -> Result<Batch> {
        self.sample_batch_with_anchors(n, spec, theta_target, model)
            .map(|(batch, _)| batch)
    }

    pub fn sample_batch_with_anchors(
        &mut self,
        n: usize,
        spec: &TargetSpec,
        theta_target: &ParamVector,
        model: &ValueModel,
    ) -> Result<(Batch, Vec<usize>)> {
        let anchors = self.sample_anchors(n)?;
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut ratios = Vec::with_capacity(n);
        let mut any_ratio = false;
        for &a in &anchors {
            let (u, y, ratio) = self.labelled_anchor(a, spec, theta_target, model)?;
            inputs.push(u);
            targets.push(y);
            any_ratio |= ratio.is_some();
            ratios.push(ratio.unwrap_or(1.0));
        }
        let mut batch = Batch::new(inputs, targets)?;
        if any_ratio {
            batch = batch.with_ratios(ratios)?;
        }
        Ok((batch, anchors))
    }
}

/// Targets computable from a lone transition.
fn single_step_target(
    tr: &Transition,
    kind: &TargetKind,
    gamma: f64,
    theta_target: &ParamVector,
    model: &ValueModel,
) -> Result<f64> {
    match kind {
        TargetKind::KStepV { k: 1 } => {
            check_gamma(gamma)?;
            if tr.terminal {
                Ok(tr.reward)
            } else {
                Ok(tr.reward + gamma * model.value(theta_target, &tr.next_state)?)
            }
        }
        TargetKind::KStepV { .. } | TargetKind::Gae { .. } => Err(Error::InvalidArgument(
            "multi-step targets need trajectory context; use a trajectory store".into(),
        )),
        TargetKind::OneStepQ { policy } => {
            let next_action = policy(&tr.next_state);
            one_step_q_target(tr, gamma, theta_target, model, &next_action)
        }
        TargetKind::MaxQ { actions } => max_q_target(tr, gamma, theta_target, model, actions),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuefunc::FeatureMap;

    fn one_hot(i: usize, n: usize) -> Input {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    /// Chain of states 0,1,2,... with the given rewards.
    fn line(rewards: &[f64], terminal_end: bool, n_states: usize) -> Trajectory {
        let len = rewards.len();
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(m, &r)| {
                Transition::new(
                    one_hot(m % n_states, n_states),
                    vec![1.0],
                    r,
                    one_hot((m + 1) % n_states, n_states),
                    terminal_end && m + 1 == len,
                )
            })
            .collect();
        Trajectory::new(steps).unwrap()
    }

    fn tabular(values: &[f64]) -> (ValueModel, ParamVector) {
        (
            ValueModel::tabular(values.len()).unwrap(),
            ParamVector::new(values.to_vec()).unwrap(),
        )
    }

    #[test]
    fn one_step_v_target() {
        let (model, theta) = tabular(&[0.0, 2.0]);
        let traj = line(&[1.0], false, 2);
        let y = kstep_v_target(&traj, 0, 1, 0.9, &theta, &model).unwrap();
        assert!((y - 2.8).abs() < 1e-12);
    }

    #[test]
    fn two_step_v_target() {
        let (model, theta) = tabular(&[0.0, 0.0, 10.0]);
        let traj = line(&[1.0, 1.0, 5.0], false, 3);
        let y = kstep_v_target(&traj, 0, 2, 0.9, &theta, &model).unwrap();
        assert!((y - 10.0).abs() < 1e-12);
    }

    #[test]
    fn kstep_direct_summation_oracle() {
        let n = 4;
        let (model, theta) = tabular(&[0.5, -1.0, 2.0, 3.5]);
        let rewards = [0.3, -0.2, 1.0, 0.0, 0.7, 0.1, -0.4, 0.9, 0.2, 0.6];
        let traj = line(&rewards, false, n);
        let gamma: f64 = 0.95;
        for m in 0..7 {
            let mut expected = 0.0;
            for i in 0..3 {
                expected += gamma.powi(i as i32) * rewards[m + i];
            }
            expected += gamma.powi(3) * theta.as_slice()[(m + 3) % n];
            let y = kstep_v_target(&traj, m, 3, gamma, &theta, &model).unwrap();
            assert!((y - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn kstep_truncates_at_terminal_and_at_end() {
        let (model, theta) = tabular(&[1.0, 1.0, 1.0]);
        let terminal = line(&[1.0, 2.0], true, 3);
        let y = kstep_v_target(&terminal, 0, 5, 0.5, &theta, &model).unwrap();
        assert!((y - 2.0).abs() < 1e-12);
        let open = line(&[1.0, 2.0], false, 3);
        let y = kstep_v_target(&open, 0, 5, 0.5, &theta, &model).unwrap();
        assert!((y - (1.0 + 1.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_anchor_is_an_error() {
        let (model, theta) = tabular(&[0.0, 0.0]);
        let traj = line(&[1.0], false, 2);
        assert!(matches!(
            kstep_v_target(&traj, 1, 1, 0.9, &theta, &model),
            Err(Error::IndexOutOfRange { index: 1, len: 1 })
        ));
        assert!(gae_target(&traj, 3, 0.9, 0.5, &theta, &model).is_err());
    }

    #[test]
    fn gae_lambda_zero_is_one_step() {
        let (model, theta) = tabular(&[0.5, -1.0, 2.0]);
        let traj = line(&[1.0, 2.0, 3.0, 4.0], false, 3);
        let y = gae_target(&traj, 1, 0.9, 0.0, &theta, &model).unwrap();
        assert!((y - (2.0 + 0.9 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn gae_lambda_one_telescopes() {
        let (model, theta) = tabular(&[0.5, -1.0, 2.0]);
        let rewards = [1.0, 2.0, 3.0, 4.0];
        let traj = line(&rewards, true, 3);
        let y = gae_target(&traj, 1, 0.9, 1.0, &theta, &model).unwrap();
        assert!((y - (2.0 + 0.9 * 3.0 + 0.81 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn gae_double_loop_oracle() {
        let (model, theta) = tabular(&[0.4, -0.3, 1.2, 0.8, -0.6]);
        let rewards = [0.5, -1.0, 0.25, 2.0, 1.5];
        let traj = line(&rewards, false, 5);
        let (gamma, lambda): (f64, f64) = (0.99, 0.95);
        let v = |s: usize| theta.as_slice()[s % 5];
        for m in 0..5 {
            let mut expected = 0.0;
            for i in 0..(5 - m) {
                let mut weight = 1.0;
                for _ in 0..i {
                    weight *= gamma * lambda;
                }
                let t = m + i;
                expected += weight * (rewards[t] + gamma * v(t + 1) - v(t));
            }
            expected += v(m);
            let y = gae_target(&traj, m, gamma, lambda, &theta, &model).unwrap();
            assert!((y - expected).abs() < 1e-12, "m={m}: {y} vs {expected}");
        }
    }

    #[test]
    fn q_targets() {
        // Q(s, a) over 1-d state and 1-d action: theta . [s, a]
        let model = ValueModel::linear(2, FeatureMap::Identity).unwrap();
        let theta = ParamVector::new(vec![1.0, 1.0]).unwrap();
        let tr = Transition::new(vec![0.0], vec![0.0], 1.0, vec![1.0], false);
        let y = one_step_q_target(&tr, 0.9, &theta, &model, &[1.0]).unwrap();
        assert!((y - 2.8).abs() < 1e-12);

        let term = Transition::new(vec![0.0], vec![0.0], 5.0, vec![1.0], true);
        assert_eq!(
            one_step_q_target(&term, 0.9, &theta, &model, &[1.0]).unwrap(),
            5.0
        );
        assert!(one_step_q_target(&tr, 0.9, &theta, &model, &[1.0, 2.0]).is_err());

        // Q(s', .) = [1, 3, 2]
        let theta = ParamVector::new(vec![0.0, 1.0]).unwrap();
        let tr = Transition::new(vec![0.0], vec![0.0], 0.0, vec![7.0], false);
        let actions = vec![vec![1.0], vec![3.0], vec![2.0]];
        assert_eq!(
            max_q_target(&tr, 1.0, &theta, &model, &actions).unwrap(),
            3.0
        );
        let term = Transition::new(vec![0.0], vec![0.0], -1.0, vec![7.0], true);
        assert_eq!(
            max_q_target(&term, 1.0, &theta, &model, &actions).unwrap(),
            -1.0
        );
        assert!(max_q_target(&tr, 1.0, &theta, &model, &[]).is_err());
    }

    #[test]
    fn discontinuous_trajectory_rejected() {
        let a = Transition::new(vec![0.0], vec![], 0.0, vec![1.0], false);
        let b = Transition::new(vec![2.0], vec![], 0.0, vec![3.0], false);
        assert!(Trajectory::new(vec![a.clone(), b.clone()]).is_err());
        let a_term = Transition {
            terminal: true,
            ..a
        };
        assert!(Trajectory::new(vec![a_term, b]).is_ok());
    }

    #[test]
    fn batch_validation() {
        assert!(Batch::new(vec![], vec![]).is_err());
        assert!(Batch::new(vec![vec![1.0]], vec![1.0, 2.0]).is_err());
        assert!(Batch::new(vec![vec![1.0]], vec![f64::NAN]).is_err());
        let b = Batch::new(vec![vec![1.0]], vec![1.0]).unwrap();
        assert_eq!(b.ratio(0), 1.0);
        assert!(b.clone().with_ratios(vec![1.0, 2.0]).is_err());
        assert_eq!(b.with_ratios(vec![0.5]).unwrap().ratio(0), 0.5);
    }

    fn replay_with(n: usize, seed: u64) -> SampleGenerator {
        let mut gen = SampleGenerator::new(SampleSource::TransitionReplay, 100, seed).unwrap();
        for i in 0..n {
            gen.push_transition(Transition::new(
                vec![i as f64],
                vec![],
                i as f64,
                vec![0.0],
                true,
            ));
        }
        gen
    }

    #[test]
    fn exhaustive_sample_is_permutation() {
        let model = ValueModel::linear(1, FeatureMap::Identity).unwrap();
        let theta = ParamVector::zeros(1);
        let spec = TargetSpec {
            kind: TargetKind::KStepV { k: 1 },
            gamma: 0.9,
        };
        let mut gen = replay_with(10, 3);
        let batch = gen.sample_batch(10, &spec, &theta, &model).unwrap();
        let mut seen: Vec<f64> = batch.targets().iter().copied().collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert!(batch.ratios().is_none());
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let mut a = replay_with(50, 11);
        let mut b = replay_with(50, 11);
        assert_eq!(a.sample_anchors(8).unwrap(), b.sample_anchors(8).unwrap());
        assert_eq!(a.sample_anchors(8).unwrap(), b.sample_anchors(8).unwrap());
    }

    #[test]
    fn insufficient_data_names_counts() {
        let mut gen = replay_with(3, 0);
        match gen.sample_anchors(5) {
            Err(Error::InsufficientData {
                required,
                available,
            }) => {
                assert_eq!((required, available), (5, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn replay_evicts_oldest() {
        let mut gen = SampleGenerator::new(SampleSource::TransitionReplay, 4, 0).unwrap();
        for i in 0..6 {
            gen.push_transition(Transition::new(
                vec![i as f64],
                vec![],
                0.0,
                vec![0.0],
                true,
            ));
        }
        assert_eq!(gen.available(), 4);
        let model = ValueModel::linear(1, FeatureMap::Identity).unwrap();
        let spec = TargetSpec {
            kind: TargetKind::KStepV { k: 1 },
            gamma: 1.0,
        };
        let (u, _, _) = gen
            .labelled_anchor(0, &spec, &ParamVector::zeros(1), &model)
            .unwrap();
        assert_eq!(u, vec![2.0]);
    }

    #[test]
    fn replay_rejects_multistep_targets() {
        let mut gen = replay_with(5, 0);
        let model = ValueModel::linear(1, FeatureMap::Identity).unwrap();
        let spec = TargetSpec {
            kind: TargetKind::Gae { lambda: 0.9 },
            gamma: 0.9,
        };
        assert!(gen
            .sample_batch(2, &spec, &ParamVector::zeros(1), &model)
            .is_err());
    }

    #[test]
    fn ratios_flow_into_batches() {
        let mut gen = SampleGenerator::new(SampleSource::TransitionReplay, 10, 0).unwrap();
        gen.push_transition(
            Transition::new(vec![0.0], vec![], 1.0, vec![0.0], true).with_ratio(0.5),
        );
        gen.push_transition(Transition::new(vec![1.0], vec![], 1.0, vec![0.0], true));
        let model = ValueModel::linear(1, FeatureMap::Identity).unwrap();
        let spec = TargetSpec {
            kind: TargetKind::KStepV { k: 1 },
            gamma: 0.9,
        };
        let (batch, anchors) = gen
            .sample_batch_with_anchors(2, &spec, &ParamVector::zeros(1), &model)
            .unwrap();
        for (i, &a) in anchors.iter().enumerate() {
            assert_eq!(batch.ratio(i), if a == 0 { 0.5 } else { 1.0 });
        }
    }

    #[test]
    fn trajectory_store_keeps_newest() {
        let mut gen = SampleGenerator::new(SampleSource::TrajectoryStore, 5, 0).unwrap();
        gen.push_trajectory(line(&[1.0; 4], false, 2));
        gen.push_trajectory(line(&[1.0; 4], false, 2));
        assert_eq!(gen.available(), 4);
        gen.push_trajectory(line(&[1.0; 7], false, 2));
        assert_eq!(gen.available(), 7);
    }
}
