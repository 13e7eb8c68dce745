use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cartesian::IkConfig;
use super::*;
use crate::dynamics::{gravity_torque, World, WorldConfig, WorldState};
use crate::robot::orientation::{euler_rate_matrix, to_euler_xyz};
use crate::robot::{ik_velocity, JointState, RobotModel};
use crate::safety::{check_constraints, ConstraintSet};

fn planar3() -> Arc<RobotModel> {
    Arc::new(RobotModel::builtin("planar3").unwrap())
}

fn panda7() -> Arc<RobotModel> {
    Arc::new(RobotModel::builtin("panda7").unwrap())
}

fn controller(model: &Arc<RobotModel>, name: &str, cfg: &ControllerConfig) -> Controller {
    Controller::from_config(&SpaceRegistry::default(), name, model.clone(), cfg).unwrap()
}

fn feedback(model: &RobotModel, q: DVector<f64>, dq: DVector<f64>) -> Feedback {
    Feedback::new(model, JointState { q, dq }).unwrap()
}

/// Runs the closed loop at the control rate with a per-policy-step action
/// source and returns the commanded torques.
fn rollout(
    model: &Arc<RobotModel>,
    ctrl: &mut Controller,
    q0: &DVector<f64>,
    steps: usize,
    mut action: impl FnMut(usize) -> DVector<f64>,
    mut inspect: impl FnMut(&Controller, &Feedback),
) -> Vec<DVector<f64>> {
    let world = World::new(model.clone(), WorldConfig::default());
    let mut state = WorldState::new(JointState::at_rest(q0.clone()));
    let fb = Feedback::new(model, state.joints.clone()).unwrap();
    ctrl.reset(&fb);
    let mut out = Vec::new();
    for k in 0..steps {
        let fb = Feedback::new(model, state.joints.clone()).unwrap();
        ctrl.apply_action(&action(k), &fb).unwrap();
        inspect(ctrl, &fb);
        for sub in 0..crate::ACTION_REPEAT {
            let fb = if sub == 0 { fb.clone() } else { Feedback::new(model, state.joints.clone()).unwrap() };
            let tau = ctrl.torque(&fb).unwrap();
            state = world.forward_step(&state, &tau, None).unwrap();
            out.push(tau);
        }
    }
    out
}

#[test]
fn thirteen_kinds_with_unique_names() {
    let names: std::collections::BTreeSet<_> = ActionSpaceKind::ALL.iter().map(|k| k.name()).collect();
    assert_eq!(names.len(), 13);
    for k in ActionSpaceKind::ALL {
        assert_eq!(ActionSpaceKind::from_name(k.name()), Some(k));
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, format!("\"{}\"", k.name()));
    }
    assert_eq!(ActionSpaceKind::OiJp.label(), "OIΔJP");
    assert_eq!(ActionSpaceKind::MiCv.label(), "MIΔCV");
    assert_eq!(ActionSpaceKind::Jt.label(), "JT");
}

#[test]
fn action_dimensions() {
    for k in ActionSpaceKind::ALL {
        let expected = match k.base() {
            Some(BaseVariable::CartesianPosition) => 9,
            Some(BaseVariable::CartesianVelocity) => 6,
            _ => 7,
        };
        assert_eq!(k.action_dim(7), expected, "{k}");
    }
    let reg = SpaceRegistry::default();
    let ctx = SpaceContext::new(planar3());
    for k in ActionSpaceKind::ALL {
        let space = reg.create(k.name(), &ctx).unwrap();
        assert_eq!(space.kind(), k);
        assert_eq!(space.action_dim(), k.action_dim(3));
        let (lo, hi) = space.limits();
        assert_eq!(lo.len(), space.action_dim());
        assert!(lo.iter().zip(hi.iter()).all(|(l, h)| l < h));
    }
}

#[test]
fn unknown_space_lists_valid_names() {
    let reg = SpaceRegistry::default();
    let err = reg.create("jx", &SpaceContext::new(planar3())).err().unwrap();
    let msg = err.to_string();
    assert!(msg.contains("jx"));
    assert!(msg.contains("mi-jp") && msg.contains("jt"));
}

#[test]
fn registry_accepts_custom_entries() {
    fn half_rate(kind: ActionSpaceKind, ctx: &SpaceContext) -> Box<dyn ActionSpace> {
        let v = JointVelocity::new(ctx.model.clone());
        let c = ctx.model.ddq_max() * 0.5;
        Box::new(ImpedanceSpace::new(kind, v, &ctx.model, Some(c)))
    }
    let mut reg = SpaceRegistry::default();
    reg.register("mi-jv-slow", ActionSpaceKind::MiJv, half_rate);
    let space = reg.create("mi-jv-slow", &SpaceContext::new(planar3())).unwrap();
    assert_eq!(space.kind(), ActionSpaceKind::MiJv);
    assert_eq!(reg.names().len(), 14);
}

#[test]
fn bad_delta_rate_rejected() {
    let reg = SpaceRegistry::default();
    let mut ctx = SpaceContext::new(planar3());
    ctx.delta_c = Some(DVector::from_element(2, 1.0));
    assert!(reg.create("mi-jp", &ctx).is_err());
    ctx.delta_c = Some(DVector::from_vec(vec![1.0, 0.0, 1.0]));
    assert!(reg.create("mi-jp", &ctx).is_err());
}

#[test]
fn joint_torque_zero_action_is_zero_torque() {
    let model = panda7();
    let mut ctrl = controller(&model, "jt", &ControllerConfig::default());
    let fb = feedback(&model, model.q_def().clone(), DVector::zeros(7));
    ctrl.reset(&fb);
    ctrl.apply_action(&DVector::zeros(7), &fb).unwrap();
    assert_eq!(ctrl.torque(&fb).unwrap(), DVector::zeros(7));
    ctrl.apply_action(&DVector::from_element(7, 1.0), &fb).unwrap();
    assert_eq!(ctrl.torque(&fb).unwrap(), model.tau_max().clone());
}

#[test]
fn joint_velocity_at_rest_commands_gravity_compensation() {
    let model = panda7();
    let mut ctrl = controller(&model, "jv", &ControllerConfig::default());
    let q = model.q_def().clone();
    let fb = feedback(&model, q.clone(), DVector::zeros(7));
    ctrl.reset(&fb);
    ctrl.apply_action(&DVector::zeros(7), &fb).unwrap();
    let tau = ctrl.torque(&fb).unwrap();
    let g = gravity_torque(&model, &q).unwrap();
    assert!((tau - g).amax() < 1e-12);
}

#[test]
fn joint_position_constant_action_has_zero_velocity_target() {
    let model = planar3();
    let mut ctrl = controller(&model, "jp", &ControllerConfig::default());
    let fb = feedback(&model, model.q_def().clone(), DVector::zeros(3));
    ctrl.reset(&fb);
    let a = DVector::from_vec(vec![0.2, -0.1, 0.4]);
    ctrl.apply_action(&a, &fb).unwrap();
    let first = ctrl.space().state().dq_d.clone();
    assert!(first.amax() > 0.0);
    let expected = (scale_action(&a, model.q_min(), model.q_max()) - model.q_def()) * crate::POLICY_HZ;
    assert!((first - expected).amax() < 1e-9);
    ctrl.apply_action(&a, &fb).unwrap();
    assert_eq!(ctrl.space().state().dq_d, DVector::zeros(3));
}

#[test]
fn cartesian_position_at_current_pose_is_null_space_only() {
    let model = panda7();
    let cfg = ControllerConfig::default();
    let reg = SpaceRegistry::default();
    let mut space = reg.create("oi-cp", &cfg.space_context(model.clone())).unwrap();
    let q = DVector::from_vec(vec![0.1, -0.5, 0.2, -2.0, 0.1, 1.6, 0.6]);
    let fb = feedback(&model, q.clone(), DVector::zeros(7));
    space.reset(&fb);
    space.apply_action(&DVector::zeros(9), &fb).unwrap();
    let Command::JointTargets { q_d, dq_d } = space.command(&fb) else {
        panic!("expected joint targets");
    };
    let ik = IkConfig::default();
    let oracle = ik_velocity(&model, &q, &crate::robot::Twist::zero(), ik.ik_damping, ik.null_space_gain).unwrap();
    assert!((&dq_d - &oracle).amax() < 1e-9);
    assert!(dq_d.amax() > 0.0);
    // The null-space motion leaves the end effector (nearly) still.
    let jac = crate::robot::jacobian(&model, &q).unwrap();
    assert!((jac * &dq_d).amax() < 1e-3);
    assert!((q_d - (&q + &dq_d * crate::control_dt())).amax() < 1e-12);
}

#[test]
fn one_step_joint_velocity_matches_manual_pipeline() {
    let model = panda7();
    let cfg = ControllerConfig::default();
    let mut ctrl = controller(&model, "oi-jv", &cfg);
    let q0 = model.q_def().clone();
    let q = &q0 + DVector::from_vec(vec![0.05, -0.02, 0.01, 0.03, -0.04, 0.02, 0.01]);
    let dq = DVector::from_vec(vec![0.1, -0.2, 0.05, 0.0, 0.3, -0.1, 0.2]);
    let a = DVector::from_vec(vec![0.5, -1.0, 0.25, 0.0, 1.0, -0.3, 0.8]);
    let fb0 = feedback(&model, q0.clone(), DVector::zeros(7));
    ctrl.reset(&fb0);
    let fb = feedback(&model, q.clone(), dq.clone());
    ctrl.apply_action(&a, &fb).unwrap();
    let tau = ctrl.torque(&fb).unwrap();

    let dt_pol = 1.0 / 60.0;
    let dt_ctl = 1.0 / 120.0;
    let k: f64 = 300.0;
    let d = 2.0 * k.sqrt();
    let mut manual = DVector::zeros(7);
    let g = gravity_torque(&model, &q).unwrap();
    for i in 0..7 {
        let v_d = (dq[i] + model.ddq_max()[i] * a[i] * dt_pol).clamp(-model.dq_max()[i], model.dq_max()[i]);
        // The integrator starts from the reset configuration.
        let q_d = (q0[i] + v_d * dt_ctl).clamp(model.q_min()[i], model.q_max()[i]);
        let t = k * (q_d - q[i]) + d * (v_d - dq[i]) + g[i];
        manual[i] = t.clamp(-model.tau_max()[i], model.tau_max()[i]);
    }
    assert!((tau - manual).amax() < 1e-9);
}

#[test]
fn reset_then_zero_action_commands_no_motion() {
    let model = planar3();
    let q = model.q_def().clone();
    let fb = feedback(&model, q.clone(), DVector::zeros(3));
    for k in ActionSpaceKind::ALL {
        let scaled_position = k.mode() == TargetMode::Scaled && k.is_position();
        if scaled_position {
            continue;
        }
        let mut ctrl = controller(&model, k.name(), &ControllerConfig::default());
        ctrl.reset(&fb);
        ctrl.apply_action(&DVector::zeros(k.action_dim(3)), &fb).unwrap();
        let tau = ctrl.torque(&fb).unwrap();
        let g = gravity_torque(&model, &q).unwrap();
        assert!((tau - g).amax() < 1e-9, "{k}");
        let (q_d, dq_d) = ctrl.last_joint_targets();
        assert!((q_d - &q).amax() < 1e-12, "{k}");
        assert!(dq_d.amax() < 1e-12, "{k}");
    }
}

#[test]
fn rollouts_are_deterministic() {
    let model = planar3();
    for k in ActionSpaceKind::ALL {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut ctrl = controller(&model, k.name(), &ControllerConfig::default());
            let m = k.action_dim(3);
            rollout(
                &model,
                &mut ctrl,
                model.q_def(),
                30,
                |_| DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)),
                |_, _| {},
            )
        };
        assert_eq!(run(), run(), "{k}");
    }
}

#[test]
fn delta_spaces_respect_step_bound_in_closed_loop() {
    let model = planar3();
    let reg = SpaceRegistry::default();
    for k in ActionSpaceKind::ALL.into_iter().filter(|k| k.mode() != TargetMode::Scaled) {
        let ctx = SpaceContext::new(model.clone());
        let space = reg.create(k.name(), &ctx).unwrap();
        let mut ctrl = Controller::new(space, model.clone(), ControllerConfig::default().gains(3).unwrap(), false);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = k.action_dim(3);
        let mut checked = 0;
        rollout(
            &model,
            &mut ctrl,
            model.q_def(),
            120,
            |_| DVector::from_fn(m, |_, _| rng.gen_range(-1.2..1.2)),
            |c, _| {
                let sp = c.space();
                let (lo, hi) = sp.limits();
                let v_d = &sp.state().v_d;
                for i in 0..m {
                    assert!(v_d[i] >= lo[i] && v_d[i] <= hi[i], "{k}");
                }
                checked += 1;
            },
        );
        assert_eq!(checked, 120);
    }
}

#[test]
fn multi_step_position_and_velocity_share_increment_bound() {
    let model = planar3();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let actions: Vec<DVector<f64>> = (0..200).map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0))).collect();
    let increments = |name: &str| {
        let mut ctrl = controller(&model, name, &ControllerConfig::default());
        let mut targets = Vec::new();
        let world = World::new(model.clone(), WorldConfig::default());
        let mut state = WorldState::new(JointState::at_rest(model.q_def().clone()));
        ctrl.reset(&Feedback::new(&model, state.joints.clone()).unwrap());
        for a in &actions {
            let fb = Feedback::new(&model, state.joints.clone()).unwrap();
            ctrl.apply_action(a, &fb).unwrap();
            for _ in 0..2 {
                let fb = Feedback::new(&model, state.joints.clone()).unwrap();
                let tau = ctrl.torque(&fb).unwrap();
                state = world.forward_step(&state, &tau, None).unwrap();
            }
            targets.push(ctrl.last_joint_targets().0.clone());
        }
        targets.windows(2).map(|w| (&w[1] - &w[0]).abs()).fold(DVector::zeros(3), |m: DVector<f64>, d| m.sup(&d))
    };
    let bound = model.dq_max() / 60.0;
    for name in ["mi-jp", "jv"] {
        let inc = increments(name);
        for i in 0..3 {
            assert!(inc[i] <= bound[i] * (1.0 + 1e-12), "{name} joint {i}: {} > {}", inc[i], bound[i]);
        }
    }
}

#[test]
fn cartesian_velocity_feedback_is_euler_rate() {
    let model = panda7();
    let ctx = SpaceContext::new(model.clone());
    let space = SpaceRegistry::default().create("cv", &ctx).unwrap();
    let q = DVector::from_vec(vec![0.3, -0.4, 0.1, -2.2, 0.2, 1.8, 0.4]);
    let dq = DVector::from_vec(vec![0.2, 0.1, -0.3, 0.2, 0.4, -0.1, 0.3]);
    let fb = feedback(&model, q, dq);
    let v = space.feedback_value(&fb);
    let angles = to_euler_xyz(&fb.pose.orientation).angles;
    let omega = euler_rate_matrix(&angles) * Vector3::new(v[3], v[4], v[5]);
    assert!((omega - fb.twist.angular).amax() < 1e-10);
    assert!((Vector3::new(v[0], v[1], v[2]) - fb.twist.linear).amax() < 1e-15);
}

#[test]
fn cartesian_velocity_tracks_linear_command() {
    let model = panda7();
    let cfg = ControllerConfig::default();
    let mut ctrl = controller(&model, "cv", &cfg);
    let lin = model.cartesian().lin_vel;
    // Command +x at 0.1 m/s for half a second.
    let mut a = DVector::zeros(6);
    a[0] = 0.1 / lin;
    let mut last = None;
    rollout(&model, &mut ctrl, model.q_def(), 30, |_| a.clone(), |_, fb| last = Some(fb.twist.linear));
    let v = last.unwrap();
    assert!((v.x - 0.1).abs() < 0.02, "{v}");
    assert!(v.y.abs() < 0.02 && v.z.abs() < 0.02, "{v}");
}

#[test]
fn cartesian_position_reaches_target() {
    let model = planar3();
    let mut ctrl = controller(&model, "cp", &ControllerConfig::default());
    let fb0 = feedback(&model, model.q_def().clone(), DVector::zeros(3));
    let target = fb0.pose.position + Vector3::new(0.05, -0.05, 0.0);
    let cp = CartesianPosition::new(model.clone(), IkConfig::default());
    let (lo, hi) = (cp.lower().clone(), cp.upper().clone());
    let mut v = cp.feedback(&fb0);
    v[0] = target.x;
    v[1] = target.y;
    let a = DVector::from_fn(9, |i, _| 2.0 * (v[i] - lo[i]) / (hi[i] - lo[i]) - 1.0);
    let mut last = None;
    rollout(&model, &mut ctrl, model.q_def(), 180, |_| a.clone(), |_, fb| last = Some(fb.pose.position));
    let p = last.unwrap();
    assert!((p - target).xy().norm() < 5e-3, "{p} vs {target}");
}

#[test]
fn degenerate_orientation_keeps_current() {
    let model = planar3();
    let mut space = SpaceRegistry::default().create("cp", &SpaceContext::new(model.clone())).unwrap();
    let fb = feedback(&model, model.q_def().clone(), DVector::zeros(3));
    space.reset(&fb);
    space.apply_action(&DVector::zeros(9), &fb).unwrap();
    let x_d = space.state().x_d.clone().unwrap();
    assert!((x_d.orientation.matrix() - fb.pose.orientation.matrix()).amax() < 1e-15);
}

#[test]
fn deployment_mode_output_satisfies_constraints() {
    let model = planar3();
    let cfg = ControllerConfig { deployment: true, ..Default::default() };
    let mut ctrl = controller(&model, "jp", &cfg);
    let cs = ConstraintSet::from_model(&model, crate::control_dt());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let world = World::new(model.clone(), WorldConfig::default());
    let mut state = WorldState::new(JointState::at_rest(model.q_def().clone()));
    ctrl.reset(&Feedback::new(&model, state.joints.clone()).unwrap());
    let mut stream = vec![model.q_def().clone(); 3];
    for _ in 0..200 {
        let fb = Feedback::new(&model, state.joints.clone()).unwrap();
        let a = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        ctrl.apply_action(&a, &fb).unwrap();
        for _ in 0..2 {
            let fb = Feedback::new(&model, state.joints.clone()).unwrap();
            let tau = ctrl.torque(&fb).unwrap();
            state = world.forward_step(&state, &tau, None).unwrap();
            stream.push(ctrl.last_joint_targets().0.clone());
            let w = &stream[stream.len() - 4..];
            assert!(!check_constraints(w, &cs).any());
        }
    }
}

#[test]
fn non_finite_action_rejected() {
    let model = planar3();
    let mut ctrl = controller(&model, "jv", &ControllerConfig::default());
    let fb = feedback(&model, model.q_def().clone(), DVector::zeros(3));
    ctrl.reset(&fb);
    assert!(ctrl.apply_action(&DVector::from_vec(vec![0.0, f64::NAN, 0.0]), &fb).is_err());
    assert!(ctrl.apply_action(&DVector::zeros(2), &fb).is_err());
}

#[test]
fn config_json_round_trip() {
    let cfg = ControllerConfig {
        stiffness: 120.0,
        damping: Some(10.0),
        delta_c: Some(vec![1.0, 2.0, 3.0]),
        ..Default::default()
    };
    let text = serde_json::to_string(&cfg).unwrap();
    assert!(text.contains("cartesian_gain"));
    let back: ControllerConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let partial: ControllerConfig = serde_json::from_str(r#"{"stiffness": 50.0}"#).unwrap();
    assert_eq!(partial.damping, None);
    assert_eq!(partial.ik.cartesian_gain, 5.0);
}

proptest! {
    #[test]
    fn delta_target_stays_within_bound_of_clipped_reference(
        seed in 0u64..1000,
        kind_idx in 0usize..8,
    ) {
        let kinds: Vec<_> = ActionSpaceKind::ALL.into_iter().filter(|k| k.mode() != TargetMode::Scaled).collect();
        let k = kinds[kind_idx];
        let model = planar3();
        let reg = SpaceRegistry::default();
        let mut space = reg.create(k.name(), &SpaceContext::new(model.clone())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = DVector::from_fn(3, |i, _| rng.gen_range(model.q_min()[i] * 0.9..model.q_max()[i] * 0.9));
        let dq = DVector::from_fn(3, |_, _| rng.gen_range(-2.5..2.5));
        let fb = feedback(&model, q, dq);
        space.reset(&fb);
        let c = match k.base().unwrap() {
            BaseVariable::JointPosition => model.dq_max().clone(),
            BaseVariable::JointVelocity => model.ddq_max().clone(),
            BaseVariable::CartesianPosition => CartesianPosition::new(model.clone(), IkConfig::default()).derivative_bound(),
            BaseVariable::CartesianVelocity => CartesianVelocity::new(model.clone(), IkConfig::default()).derivative_bound(),
        };
        for _ in 0..5 {
            let before = space.state().v_d.clone();
            let a = DVector::from_fn(k.action_dim(3), |_, _| rng.gen_range(-1.5..1.5));
            space.apply_action(&a, &fb).unwrap();
            let (lo, hi) = space.limits();
            let reference = match k.mode() {
                TargetMode::OneStep => space.feedback_value(&fb),
                _ => before,
            };
            let v_d = &space.state().v_d;
            for i in 0..v_d.len() {
                let r = reference[i].clamp(lo[i], hi[i]);
                prop_assert!((v_d[i] - r).abs() <= c[i] / 60.0);
                prop_assert!(v_d[i] >= lo[i] && v_d[i] <= hi[i]);
            }
        }
    }
}
