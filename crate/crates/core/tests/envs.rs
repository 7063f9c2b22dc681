mod common;

use common::{fd_grad, interior_controls, rel_err};
use miso::envs::{Env, EnvId, Scenario};
use miso::problem::rollout;
use miso::{ControlProblem, ControlSequence, ProblemInstance, Target};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn goal_instance(env: &Env, x0: Vec<f64>, goal: Vec<f64>) -> ProblemInstance {
    ProblemInstance {
        env_id: env.id,
        x0,
        target: Target::Goal(goal),
        instance_id: 0,
        seed: 0,
    }
}

#[test]
fn toy_rollouts() {
    let env = Env::new(EnvId::Toy1d);
    let inst = goal_instance(&env, vec![0.0], vec![0.0]);
    let u = ControlSequence::from_flat(5, 1, vec![-1.0, -0.5, 0.0, 0.0, 0.0]).unwrap();
    let traj = rollout(&env.problem(&inst), &u).unwrap();
    assert!((traj.final_state()[0] + 1.5).abs() < 1e-15);

    let traj = rollout(&env.problem(&inst), &ControlSequence::zeros(5, 1)).unwrap();
    assert!(traj.states.as_slice().iter().all(|x| *x == 0.0));
    assert!((traj.cost - 2.25).abs() < 1e-12);

    assert_eq!(env.dynamics(&[0.5], &[-0.3]).unwrap(), vec![0.5 - 0.3]);
    let (a, b) = env.jacobians(&[0.7], &[0.2]);
    assert_eq!((a[(0, 0)], b[(0, 0)]), (1.0, 1.0));
}

#[test]
fn toy_cost_vanishes_in_the_right_well() {
    let env = Env::new(EnvId::Toy1d);
    let inst = goal_instance(&env, vec![2.0], vec![0.0]);
    let traj = rollout(&env.problem(&inst), &ControlSequence::zeros(5, 1)).unwrap();
    assert!(traj.cost.abs() < 1e-24);
    assert_eq!(env.terminal_cost(&inst, &[2.0]), 0.0);
}

#[test]
fn cartpole_at_goal_costs_nothing_and_stays() {
    let env = Env::new(EnvId::Cartpole);
    for x in [-1.3, 0.0, 0.8] {
        let inst = goal_instance(&env, vec![x, 0.0, 0.0, 0.0], vec![x, 0.0, 0.0, 0.0]);
        let traj = rollout(&env.problem(&inst), &ControlSequence::zeros(env.horizon, 1)).unwrap();
        assert!(traj.cost.abs() < 1e-9);
        let next = env.dynamics(&[x, 0.0, 0.0, 0.0], &[0.0]).unwrap();
        for (a, b) in next.iter().zip([x, 0.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn driving_straight_line_step() {
    let env = Env::new(EnvId::Driving);
    let next = env.dynamics(&[0.0, 0.0, 0.0, 1.0, 0.0], &[0.0, 0.0]).unwrap();
    let want = [0.2, 0.0, 0.0, 1.0, 0.0];
    for (a, b) in next.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{next:?}");
    }
}

#[test]
fn driving_unit_position_error_costs_one() {
    let env = Env::new(EnvId::Driving);
    let inst = goal_instance(&env, vec![0.0; 5], vec![0.0; 5]);
    let c = env.stage_cost(&inst, 1, &[1.0, 0.0, 0.0, 0.0, 0.0], &[0.0, 0.0]);
    assert!((c - 1.0).abs() < 1e-15);
}

#[test]
fn driving_linearizes_at_the_minimum_speed() {
    let env = Env::new(EnvId::Driving);
    let u = [0.3, 0.1];
    for v in [0.0, 0.004, -0.009] {
        let slow = env.jacobians(&[1.0, 2.0, 0.4, v, 0.1], &u);
        let floor = env.jacobians(&[1.0, 2.0, 0.4, 0.01, 0.1], &u);
        assert_eq!(slow.0, floor.0);
        assert_eq!(slow.1, floor.1);
    }
}

fn random_state<R: Rng>(env: &Env, rng: &mut R) -> Vec<f64> {
    match env.id {
        EnvId::Toy1d => vec![rng.random_range(-2.0..2.5)],
        EnvId::Cartpole => vec![
            rng.random_range(-2.0..2.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-2.0..2.0),
        ],
        EnvId::Reacher => vec![
            rng.random_range(-3.0..3.0),
            rng.random_range(-2.5..2.5),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ],
        EnvId::Driving => vec![
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(1.0..12.0),
            rng.random_range(-0.5..0.5),
        ],
    }
}

#[test]
fn jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for id in EnvId::ALL {
        let env = Env::new(id);
        for _ in 0..30 {
            let x = random_state(&env, &mut rng);
            let u = interior_controls(&env, &mut rng, 0.05).at(0).to_vec();
            let (a, b) = env.jacobians(&x, &u);
            for i in 0..env.n {
                let fx = fd_grad(|p| env.dynamics(p, &u).unwrap()[i], &x, 1e-6);
                let fu = fd_grad(|p| env.dynamics(&x, p).unwrap()[i], &u, 1e-6);
                let ax: Vec<f64> = (0..env.n).map(|j| a[(i, j)]).collect();
                let bu: Vec<f64> = (0..env.m).map(|j| b[(i, j)]).collect();
                assert!(rel_err(&ax, &fx, 1e-6) < 1e-6, "{id:?} A row {i}: {ax:?} vs {fx:?}");
                assert!(rel_err(&bu, &fu, 1e-6) < 1e-6, "{id:?} B row {i}: {bu:?} vs {fu:?}");
            }
        }
    }
}

#[test]
fn cost_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for id in EnvId::ALL {
        let env = Env::new(id);
        for _ in 0..20 {
            let sc = Scenario::new(&env, rng.random());
            let inst = sc.instance_at(0, None, 0);
            let problem = env.problem(&inst);
            let x = random_state(&env, &mut rng);
            let u = interior_controls(&env, &mut rng, 0.05).at(0).to_vec();
            let t = rng.random_range(1..env.horizon);
            // Difference roundoff scales with the cost, so tiny gradients compare absolutely.
            let e = problem.stage_expansion(t, &x, &u);
            let gx = fd_grad(|p| problem.stage_cost(t, p, &u), &x, 1e-6);
            let gu = fd_grad(|p| problem.stage_cost(t, &x, p), &u, 1e-6);
            assert!(rel_err(&e.lx, &gx, 1e-2) < 1e-6, "{id:?} lx");
            assert!(rel_err(&e.lu, &gu, 1e-2) < 1e-6, "{id:?} lu {:?} vs {gu:?}", e.lu);
            let (vx, _) = problem.terminal_expansion(&x);
            let gt = fd_grad(|p| problem.terminal_cost(p), &x, 1e-6);
            assert!(rel_err(&vx, &gt, 1e-2) < 1e-6, "{id:?} terminal");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cartpole_scenarios_respect_ranges(seed in any::<u64>()) {
        let env = Env::new(EnvId::Cartpole);
        let sc = Scenario::new(&env, seed);
        let x0 = sc.initial_state();
        prop_assert!((-2.0..=2.0).contains(&x0[0]));
        prop_assert!((-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2).contains(&x0[2]));
        prop_assert_eq!(sc.instance_at(3, None, 7), Scenario::new(&env, seed).instance_at(3, None, 7));
    }

    #[test]
    fn reacher_targets_lie_in_the_annulus(seed in any::<u64>()) {
        let env = Env::new(EnvId::Reacher);
        let inst = Scenario::new(&env, seed).instance_at(0, None, 0);
        let miso::envs::Physics::Reacher(p) = &env.physics else { unreachable!() };
        let goal = inst.target_at(0);
        let tip = p.fingertip(goal[0], goal[1]);
        let r = tip[0].hypot(tip[1]);
        prop_assert!((0.05 - 1e-12..=0.20 + 1e-12).contains(&r), "radius {}", r);
    }

    #[test]
    fn dynamics_stay_finite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for id in EnvId::ALL {
            let env = Env::new(id);
            let x = random_state(&env, &mut rng);
            let u = interior_controls(&env, &mut rng, 0.0).at(0).to_vec();
            prop_assert!(env.dynamics(&x, &u).unwrap().iter().all(|v| v.is_finite()));
        }
    }
}
