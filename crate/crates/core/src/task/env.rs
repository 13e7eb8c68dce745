use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DVector, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reward::{reward_push, reward_reach, RewardInputs, RewardTerms};
use super::{domain_randomize, uniform, TaskConfig, TaskKind};
use crate::action::{ActionSpaceKind, Controller, ControllerConfig, Feedback, SpaceRegistry};
use crate::dynamics::{BoxParams, BoxPose, World, WorldConfig, WorldState};
use crate::error::{check_len, Error, Result};
use crate::metrics::trajectory::{EpisodeEnd, StepRecord};
use crate::robot::{JointState, RobotModel};
use crate::safety::{check_constraints, ConstraintSet, ViolationFlags};

/// Plant changes applied on top of the nominal model. The controller keeps
/// using the nominal model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Scale of link masses and inertias.
    pub mass_scale: f64,
    /// Scale of joint friction and box–table friction.
    pub friction_scale: f64,
    /// Control steps between computing a torque and applying it.
    pub control_delay_steps: usize,
}

impl Perturbation {
    pub const IDENTITY: Perturbation = Perturbation {
        mass_scale: 1.0,
        friction_scale: 1.0,
        control_delay_steps: 0,
    };

    /// Mass +20%, friction +30%, one step of control delay.
    pub const STANDARD: Perturbation = Perturbation {
        mass_scale: 1.2,
        friction_scale: 1.3,
        control_delay_steps: 1,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    fn validate(&self) -> Result<()> {
        if !(self.mass_scale.is_finite() && self.mass_scale > 0.0) {
            return Err(Error::InvalidConfig("mass_scale must be positive".into()));
        }
        if !(self.friction_scale.is_finite() && self.friction_scale >= 0.0) {
            return Err(Error::InvalidConfig("friction_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for Perturbation {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Initial condition of an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeInit {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub goal: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_pose: Option<BoxPose>,
    /// Box parameters before any perturbation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_params: Option<BoxParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    pub ee: Vector3<f64>,
    pub goal: Vector3<f64>,
    /// Box centre and yaw (pushing).
    pub object: Option<(Vector3<f64>, f64)>,
}

impl Observation {
    /// Flat layout `[q, dq, ee, goal, (box xyz, yaw)]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v: Vec<f64> = Vec::with_capacity(self.q.len() * 2 + 10);
        v.extend(self.q.iter());
        v.extend(self.dq.iter());
        v.extend(self.ee.iter());
        v.extend(self.goal.iter());
        if let Some((p, yaw)) = &self.object {
            v.extend(p.iter());
            v.push(*yaw);
        }
        DVector::from_vec(v)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
    /// The episode hit its horizon (as opposed to an early evaluation stop).
    pub truncated: bool,
    pub success: bool,
    pub distance: f64,
    /// Constraint flags of this policy step's joint command.
    pub flags: ViolationFlags,
}

/// One reaching or pushing episode driven through an action space.
#[derive(Clone)]
pub struct TaskEnv {
    config: TaskConfig,
    space_name: String,
    controller_config: ControllerConfig,
    nominal: Arc<RobotModel>,
    world: World,
    controller: Controller,
    perturbation: Perturbation,
    ecv_limits: ConstraintSet,
    state: WorldState,
    goal: Vector3<f64>,
    box_params: BoxParams,
    init: EpisodeInit,
    seed: u64,
    t: usize,
    prev_action: DVector<f64>,
    done: bool,
    evaluation: bool,
    hold: usize,
    delay: VecDeque<DVector<f64>>,
    last_tau: DVector<f64>,
    command_window: VecDeque<DVector<f64>>,
}

impl TaskEnv {
    /// Environment on the config's robot with the default space registry.
    pub fn new(config: TaskConfig, space: &str, controller: ControllerConfig) -> Result<Self> {
        let model = Arc::new(RobotModel::load(&config.robot)?);
        Self::with_model(config, model, space, controller, &SpaceRegistry::default())
    }

    pub fn with_model(
        config: TaskConfig,
        model: Arc<RobotModel>,
        space: &str,
        controller_config: ControllerConfig,
        registry: &SpaceRegistry,
    ) -> Result<Self> {
        config.validate()?;
        let controller = Controller::from_config(registry, space, model.clone(), &controller_config)?;
        let n = model.n_joints();
        let q = model.q_def().clone();
        let goal = Vector3::from(config.goal_region.min);
        let init = EpisodeInit {
            q: q.as_slice().to_vec(),
            dq: vec![0.0; n],
            goal: goal.into(),
            box_pose: None,
            box_params: None,
        };
        let mut env = Self {
            space_name: space.to_string(),
            controller_config,
            world: World::new(model.clone(), WorldConfig::default()),
            ecv_limits: ConstraintSet::from_model(&model, crate::policy_dt()),
            controller,
            perturbation: Perturbation::IDENTITY,
            state: WorldState::new(JointState::at_rest(q)),
            goal,
            box_params: config.r#box,
            init,
            seed: 0,
            t: 0,
            prev_action: DVector::zeros(0),
            done: true,
            evaluation: false,
            hold: 0,
            delay: VecDeque::new(),
            last_tau: DVector::zeros(0),
            command_window: VecDeque::new(),
            nominal: model,
            config,
        };
        env.prev_action = DVector::zeros(env.action_dim());
        Ok(env)
    }

    /// Runs the plant with a perturbed model; takes effect at the next reset.
    pub fn set_perturbation(&mut self, p: Perturbation) -> Result<()> {
        p.validate()?;
        let plant = if p.mass_scale == 1.0 && p.friction_scale == 1.0 {
            self.nominal.clone()
        } else {
            Arc::new(self.nominal.perturbed(p.mass_scale, p.friction_scale)?)
        };
        self.world = World::new(plant, self.world.config);
        self.perturbation = p;
        Ok(())
    }

    /// In evaluation mode an episode ends once the task has been solved for
    /// `success_hold` consecutive steps.
    pub fn set_evaluation(&mut self, on: bool) {
        self.evaluation = on;
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn task(&self) -> TaskKind {
        self.config.task
    }

    pub fn space_name(&self) -> &str {
        &self.space_name
    }

    pub fn kind(&self) -> ActionSpaceKind {
        self.controller.kind()
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn controller_config(&self) -> &ControllerConfig {
        &self.controller_config
    }

    pub fn model(&self) -> &Arc<RobotModel> {
        &self.nominal
    }

    pub fn perturbation(&self) -> Perturbation {
        self.perturbation
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn goal(&self) -> Vector3<f64> {
        self.goal
    }

    pub fn init(&self) -> &EpisodeInit {
        &self.init
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn box_params(&self) -> &BoxParams {
        &self.box_params
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn action_dim(&self) -> usize {
        self.controller.space().action_dim()
    }

    pub fn obs_dim(&self) -> usize {
        let n = self.nominal.n_joints();
        match self.config.task {
            TaskKind::Reach => 2 * n + 6,
            TaskKind::Push => 2 * n + 10,
        }
    }

    /// Samples an initial condition from the seed and starts an episode.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = &self.nominal;
        let noise = self.config.init_noise;
        let q: Vec<f64> = (0..model.n_joints())
            .map(|i| (model.q_def()[i] + uniform(&mut rng, -noise, noise)).clamp(model.q_min()[i], model.q_max()[i]))
            .collect();
        let mut goal = self.config.goal_region.sample(&mut rng);
        let (box_pose, box_params) = match self.config.task {
            TaskKind::Reach => (None, None),
            TaskKind::Push => {
                let region = self.config.box_region.expect("validated push config");
                let p = region.sample(&mut rng);
                let yaw = uniform(&mut rng, -0.3, 0.3);
                let params = match &self.config.randomization {
                    Some(r) => domain_randomize(&self.config.r#box, r, &mut rng),
                    None => self.config.r#box,
                };
                goal.z = params.half_extents[2];
                (Some(BoxPose { x: p.x, y: p.y, yaw }), Some(params))
            }
        };
        let init = EpisodeInit {
            dq: vec![0.0; q.len()],
            q,
            goal: goal.into(),
            box_pose,
            box_params,
        };
        self.seed = seed;
        self.reset_to(init)
    }

    /// Starts an episode from an explicit initial condition.
    pub fn reset_to(&mut self, init: EpisodeInit) -> Result<Observation> {
        let n = self.nominal.n_joints();
        check_len("initial q", n, init.q.len())?;
        check_len("initial dq", n, init.dq.len())?;
        if init.q.iter().chain(init.dq.iter()).chain(init.goal.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        let joints = JointState {
            q: DVector::from_column_slice(&init.q),
            dq: DVector::from_column_slice(&init.dq),
        };
        let mut state = WorldState::new(joints);
        if self.config.task == TaskKind::Push {
            state.box_pose = init
                .box_pose
                .ok_or_else(|| Error::InvalidConfig("push episode needs a box pose".into()))?;
            let mut params = init.box_params.unwrap_or(self.config.r#box);
            params.friction_coeff *= self.perturbation.friction_scale;
            self.box_params = params;
        }
        self.goal = Vector3::from(init.goal);
        let fb = Feedback::new(&self.nominal, state.joints.clone())?;
        self.controller.reset(&fb);
        self.command_window.clear();
        for _ in 0..3 {
            self.command_window.push_back(state.joints.q.clone());
        }
        self.state = state;
        self.init = init;
        self.t = 0;
        self.hold = 0;
        self.prev_action = DVector::zeros(self.action_dim());
        self.delay.clear();
        self.last_tau = DVector::zeros(n);
        self.done = false;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        let ee = self.ee_position();
        let object = (self.config.task == TaskKind::Push).then(|| {
            let b = self.state.box_pose;
            (Vector3::new(b.x, b.y, self.box_params.half_extents[2]), b.yaw)
        });
        Observation {
            q: self.state.joints.q.clone(),
            dq: self.state.joints.dq.clone(),
            ee,
            goal: self.goal,
            object,
        }
    }

    pub fn ee_position(&self) -> Vector3<f64> {
        crate::robot::forward_kinematics(&self.nominal, &self.state.joints.q)
            .map(|p| p.position)
            .unwrap_or_else(|_| Vector3::from_element(f64::NAN))
    }

    /// Point the end effector should reach when pushing: where the tip
    /// centre sits when resting on the middle of the box top.
    pub fn object_reference(&self) -> Vector3<f64> {
        let b = self.state.box_pose;
        let h = self.box_params.half_extents[2];
        Vector3::new(b.x, b.y, 2.0 * h + self.nominal.tip_radius())
    }

    /// Task distance: end effector to goal, or planar box to goal.
    pub fn distance(&self) -> f64 {
        match self.config.task {
            TaskKind::Reach => (self.ee_position() - self.goal).norm(),
            TaskKind::Push => {
                let b = self.state.box_pose;
                (Vector2::new(b.x, b.y) - self.goal.xy()).norm()
            }
        }
    }

    pub fn is_success(&self) -> bool {
        self.distance() < self.config.reward.epsilon
    }

    pub fn step(&mut self, action: &DVector<f64>) -> Result<StepOutcome> {
        self.step_inner(action, None)
    }

    /// Like [`step`](Self::step) and appends one record per control step.
    pub fn step_logged(&mut self, action: &DVector<f64>, log: &mut Vec<StepRecord>) -> Result<StepOutcome> {
        self.step_inner(action, Some(log))
    }

    fn step_inner(&mut self, action: &DVector<f64>, mut log: Option<&mut Vec<StepRecord>>) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        check_len("action", self.action_dim(), action.len())?;
        let fb0 = Feedback::new(&self.nominal, self.state.joints.clone())?;
        self.controller.apply_action(action, &fb0)?;
        let push = self.config.task == TaskKind::Push;
        let first_record = log.as_ref().map_or(0, |l| l.len());
        for sub in 0..crate::ACTION_REPEAT {
            let fb = if sub == 0 {
                fb0.clone()
            } else {
                Feedback::new(&self.nominal, self.state.joints.clone())?
            };
            let commanded = self.controller.torque(&fb)?;
            let tau = self.delayed(commanded);
            if let Some(log) = log.as_deref_mut() {
                let space = self.controller.space();
                let (q_d, _) = self.controller.last_joint_targets();
                let quat = nalgebra::UnitQuaternion::from_rotation_matrix(&fb.pose.orientation);
                log.push(StepRecord {
                    step: self.state.step_index,
                    time: self.state.time,
                    policy_step: self.t as u64,
                    substep: sub as u32,
                    action: action.as_slice().to_vec(),
                    v_d: space.state().v_d.as_slice().to_vec(),
                    v: self.feedback_value(&fb).as_slice().to_vec(),
                    q: fb.joints.q.as_slice().to_vec(),
                    dq: fb.joints.dq.as_slice().to_vec(),
                    ee_pos: fb.pose.position.into(),
                    ee_quat: [quat.w, quat.i, quat.j, quat.k],
                    tau: tau.as_slice().to_vec(),
                    q_d: q_d.as_slice().to_vec(),
                    goal: self.goal.into(),
                    box_pose: push.then_some(self.state.box_pose),
                    reward: None,
                    flags: ViolationFlags::default(),
                });
            }
            self.state = if push {
                let (next, wrench) = self.world.contact_step(&self.state, &self.box_params, &fb.pose, &fb.twist.linear);
                self.world.forward_step(&next, &tau, Some(&wrench))?
            } else {
                self.world.forward_step(&self.state, &tau, None)?
            };
            self.last_tau = tau;
        }

        let sample = if self.kind() == ActionSpaceKind::Jt {
            self.state.joints.q.clone()
        } else {
            self.controller.last_joint_targets().0.clone()
        };
        self.command_window.push_back(sample);
        if self.command_window.len() > 4 {
            self.command_window.pop_front();
        }
        let window: Vec<DVector<f64>> = self.command_window.iter().cloned().collect();
        let flags = check_constraints(&window, &self.ecv_limits);

        let terms = self.reward_terms(action);
        let reward = terms.total();
        self.prev_action = action.clone();
        self.t += 1;
        let distance = self.distance();
        let success = distance < self.config.reward.epsilon;
        self.hold = if success { self.hold + 1 } else { 0 };
        let truncated = self.t >= self.config.reward.horizon;
        let early = self.evaluation && self.config.success_hold > 0 && self.hold >= self.config.success_hold;
        self.done = truncated || early;

        if let Some(log) = log {
            let n = log.len();
            for r in &mut log[first_record..] {
                r.flags = flags;
            }
            if let Some(last) = log.get_mut(n.wrapping_sub(1)) {
                last.reward = Some(reward);
            }
        }
        Ok(StepOutcome {
            obs: self.observation(),
            reward,
            terms,
            done: self.done,
            truncated,
            success,
            distance,
            flags,
        })
    }

    /// Feedback matching `v_d`; for joint torque this is the torque that
    /// reached the joints in the previous control step.
    pub fn feedback_value(&self, fb: &Feedback) -> DVector<f64> {
        if self.kind() == ActionSpaceKind::Jt {
            self.last_tau.clone()
        } else {
            self.controller.space().feedback_value(fb)
        }
    }

    fn delayed(&mut self, tau: DVector<f64>) -> DVector<f64> {
        let d = self.perturbation.control_delay_steps;
        if d == 0 {
            return tau;
        }
        self.delay.push_back(tau);
        if self.delay.len() > d {
            self.delay.pop_front().expect("non-empty")
        } else {
            self.delay.front().expect("non-empty").clone()
        }
    }

    fn reward_terms(&self, action: &DVector<f64>) -> RewardTerms {
        let model = &self.nominal;
        let ee = self.ee_position();
        let cfg = &self.config.reward;
        let (target, object) = match self.config.task {
            TaskKind::Reach => (self.goal, None),
            TaskKind::Push => {
                let b = self.state.box_pose;
                (self.object_reference(), Some((Vector2::new(b.x, b.y), self.goal.xy())))
            }
        };
        let inputs = RewardInputs {
            ee,
            target,
            q: &self.state.joints.q,
            dq: &self.state.joints.dq,
            q_def: model.q_def(),
            q_min: model.q_min(),
            q_max: model.q_max(),
            action,
            prev_action: &self.prev_action,
            object,
        };
        match self.config.task {
            TaskKind::Reach => reward_reach(&inputs, cfg),
            TaskKind::Push => reward_push(&inputs, cfg),
        }
    }

    /// Summary of the state after the last step, for episode logs.
    pub fn episode_end(&self) -> Result<EpisodeEnd> {
        let fb = Feedback::new(&self.nominal, self.state.joints.clone())?;
        Ok(EpisodeEnd {
            time: self.state.time,
            q: fb.joints.q.as_slice().to_vec(),
            dq: fb.joints.dq.as_slice().to_vec(),
            v: self.feedback_value(&fb).as_slice().to_vec(),
            ee_pos: fb.pose.position.into(),
            box_pose: (self.config.task == TaskKind::Push).then_some(self.state.box_pose),
            distance: self.distance(),
            success: self.is_success(),
            policy_steps: self.t as u64,
        })
    }
}
