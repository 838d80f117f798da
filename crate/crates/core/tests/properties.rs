use kova::harness::{format_csv, parse_csv, MetricsRow};
use kova::linalg;
use kova::objectives;
use kova::optimizer::{self, KovaConfig, NoiseModel, ObservationNoise, OptimizerState};
use kova::targets::{gae_target, kstep_v_target, Batch, Trajectory, Transition};
use kova::valuefunc::{FeatureMap, ParamVector, ValueModel};
use kova::verify::{self, random};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Random walk over `n` one-hot states with the given rewards.
fn walk(n: usize, states: &[usize], rewards: &[f64], terminal_last: bool) -> Trajectory {
    let steps = rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let terminal = terminal_last && i + 1 == rewards.len();
            Transition::new(
                one_hot(states[i], n),
                vec![1.0],
                r,
                one_hot(states[i + 1], n),
                terminal,
            )
        })
        .collect();
    Trajectory::new(steps).unwrap()
}

prop_compose! {
    fn trajectory_case()(len in 1usize..12, n in 2usize..6)
        (states in prop::collection::vec(0..n, len + 1),
         rewards in prop::collection::vec(-2.0f64..2.0, len),
         values in prop::collection::vec(-3.0f64..3.0, n),
         terminal in any::<bool>(),
         n in Just(n))
        -> (Trajectory, ValueModel, ParamVector)
    {
        (walk(n, &states, &rewards, terminal), ValueModel::tabular(n).unwrap(), ParamVector::new(values).unwrap())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jacobian_matches_central_differences(
        seed in any::<u64>(),
        input_dim in 1usize..4,
        hidden in prop::collection::vec(1usize..7, 1..3),
    ) {
        let model = ValueModel::mlp(input_dim, &hidden).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = random::params(&mut rng, model.param_dim(), 1.0);
        let inputs = random::inputs(&mut rng, 3, input_dim);
        let report = verify::check_jacobian(&model, &theta, &inputs, 1e-5).unwrap();
        prop_assert!(report.passed, "{report}");
    }

    #[test]
    fn linear_value_is_linear_in_parameters(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        t1 in prop::collection::vec(-2.0f64..2.0, 4),
        t2 in prop::collection::vec(-2.0f64..2.0, 4),
        u in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let model = ValueModel::linear(3, FeatureMap::Affine).unwrap();
        let mix: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let lhs = model.value(&ParamVector::new(mix).unwrap(), &u).unwrap();
        let rhs = a * model.value(&ParamVector::new(t1).unwrap(), &u).unwrap()
            + b * model.value(&ParamVector::new(t2).unwrap(), &u).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gae_with_zero_lambda_is_one_step((traj, model, theta) in trajectory_case(), gamma in 0.1f64..1.0) {
        for m in 0..traj.len() {
            let g = gae_target(&traj, m, gamma, 0.0, &theta, &model).unwrap();
            let k = kstep_v_target(&traj, m, 1, gamma, &theta, &model).unwrap();
            prop_assert!((g - k).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_with_unit_lambda_telescopes((traj, model, theta) in trajectory_case(), gamma in 0.1f64..1.0) {
        let steps = traj.steps();
        for m in 0..traj.len() {
            // discounted return to the end, bootstrapped once if not terminal
            let mut ret = 0.0;
            let mut disc = 1.0;
            let mut ended = false;
            for s in &steps[m..] {
                ret += disc * s.reward;
                disc *= gamma;
                if s.terminal {
                    ended = true;
                    break;
                }
            }
            if !ended {
                ret += disc * model.value(&theta, &steps.last().unwrap().next_state).unwrap();
            }
            let g = gae_target(&traj, m, gamma, 1.0, &theta, &model).unwrap();
            prop_assert!((g - ret).abs() < 1e-10, "m={m} gae={g} direct={ret}");
        }
    }

    #[test]
    fn kstep_ignores_rewards_past_the_horizon(
        (traj, model, theta) in trajectory_case(),
        k in 1usize..4,
        bump in 1.0f64..5.0,
    ) {
        let steps = traj.steps().to_vec();
        for m in 0..steps.len() {
            let base = kstep_v_target(&traj, m, k, 0.9, &theta, &model).unwrap();
            let mut changed = steps.clone();
            for s in changed.iter_mut().skip(m + k) {
                s.reward += bump;
            }
            let other = Trajectory::new(changed).unwrap();
            let again = kstep_v_target(&other, m, k, 0.9, &theta, &model).unwrap();
            prop_assert_eq!(base, again);
        }
    }

    #[test]
    fn covariance_stays_symmetric_and_shrinks(seed in any::<u64>(), d in 1usize..8, n in 1usize..12, eta in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, batch) = random::linear_instance(&mut rng, d, n);
        let noise = if eta > 0.0 {
            NoiseModel { evolution: optimizer::EvolutionNoise::FadingMemory { eta }, ..NoiseModel::default() }
        } else {
            NoiseModel::default()
        };
        let cfg = KovaConfig { noise, ..KovaConfig::default() };
        let state = OptimizerState::from_parts(random::params(&mut rng, d, 1.0), random::spd(&mut rng, d), 3).unwrap();
        let report = optimizer::update_with_report(&state, &batch, &model, &cfg).unwrap();
        prop_assert_eq!(report.state.step(), 4);
        prop_assert!(linalg::max_asymmetry(report.state.cov()) <= 1e-10);
        prop_assert!(optimizer::loewner_decrease_check(&report.cov_pred, report.state.cov()));
        prop_assert!(linalg::min_eigenvalue(report.state.cov()) >= -1e-12);
    }

    #[test]
    fn max_ratio_noise_never_below_batch_size(ratios in prop::collection::vec(0.01f64..3.0, 1..20)) {
        let n = ratios.len();
        let batch = Batch::new(vec![vec![0.0]; n], vec![0.0; n]).unwrap().with_ratios(ratios.clone()).unwrap();
        let plain = optimizer::observation_noise_diag(&NoiseModel::default(), &batch).unwrap();
        let mr = NoiseModel { observation: ObservationNoise::MaxRatio { epsilon: 1e-8 }, ..NoiseModel::default() };
        let inflated = optimizer::observation_noise_diag(&mr, &batch).unwrap();
        for i in 0..n {
            prop_assert_eq!(plain[i], n as f64);
            prop_assert!(inflated[i] >= plain[i]);
            if ratios[i] >= 1.0 {
                prop_assert_eq!(inflated[i], n as f64);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact(
        rows in prop::collection::vec(
            (any::<f64>(), any::<f64>(), prop::option::of(-1e300f64..1e300), prop::option::of(0.0f64..1e9), any::<f64>(), prop::option::of(0.0f64..1e6)),
            0..10,
        )
    ) {
        let rows: Vec<MetricsRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (a, b, c, d, e, f))| MetricsRow {
                iteration: i + 1,
                rms_value_error: if a.is_finite() { a.abs() } else { 1.0 },
                mle_loss: if b.is_finite() { b } else { 0.0 },
                ekf_loss: c,
                cov_trace: d,
                grad_or_innovation_norm: if e.is_finite() { e } else { 2.0 },
                wall_ms: f,
            })
            .collect();
        let text = format_csv(&rows);
        prop_assert!(!text.contains("NaN") && !text.contains("inf"));
        prop_assert_eq!(parse_csv(&text).unwrap(), rows);
    }
}

#[test]
fn kova_step_beats_perturbed_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (model, batch) = random::linear_instance(&mut rng, 5, 12);
    let theta = random::params(&mut rng, 5, 1.0);
    let cov = random::spd(&mut rng, 5);
    let obs = DMatrix::identity(12, 12) * 12.0;
    let state = OptimizerState::from_parts(theta.clone(), cov.clone(), 0).unwrap();
    let next = optimizer::update(&state, &batch, &model, &KovaConfig::default()).unwrap();
    let best = objectives::ekf_loss(&batch, &model, next.theta_hat(), &theta, &cov, &obs).unwrap();
    for _ in 0..1000 {
        let scale = 10f64.powf(rng.random_range(-4.0..0.0));
        let bumped: Vec<f64> = next
            .theta_hat()
            .as_slice()
            .iter()
            .map(|v| v + scale * rng.random_range(-1.0..1.0))
            .collect();
        let loss = objectives::ekf_loss(
            &batch,
            &model,
            &ParamVector::new(bumped).unwrap(),
            &theta,
            &cov,
            &obs,
        )
        .unwrap();
        assert!(
            loss >= best - 1e-12,
            "perturbation lowered the loss: {loss} < {best}"
        );
    }
}

#[test]
fn learning_rate_scales_the_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (model, batch) = random::linear_instance(&mut rng, 3, 6);
    let state =
        optimizer::init_state(3, random::params(&mut rng, 3, 1.0), &KovaConfig::default()).unwrap();
    let full = optimizer::update(&state, &batch, &model, &KovaConfig::default()).unwrap();
    let cfg = KovaConfig {
        learning_rate: 0.25,
        ..KovaConfig::default()
    };
    let quarter = optimizer::update(&state, &batch, &model, &cfg).unwrap();
    let d_full = full.theta_hat().as_vector() - state.theta_hat().as_vector();
    let d_quarter = quarter.theta_hat().as_vector() - state.theta_hat().as_vector();
    assert!((d_full * 0.25 - d_quarter).amax() < 1e-12);
}
