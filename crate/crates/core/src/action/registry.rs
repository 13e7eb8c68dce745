use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;

use super::cartesian::{CartesianPosition, CartesianVelocity, IkConfig};
use super::impedance::ImpedanceSpace;
use super::joint::{JointPosition, JointVelocity};
use super::torque::JointTorque;
use super::{ActionSpace, ActionSpaceKind, BaseVariable};
use crate::error::{Error, Result};
use crate::robot::RobotModel;

/// Everything a factory needs to build a space.
#[derive(Clone, Debug)]
pub struct SpaceContext {
    pub model: Arc<RobotModel>,
    pub ik: IkConfig,
    /// Explicit delta rate; defaults to the derivative bound of the base
    /// variable.
    pub delta_c: Option<DVector<f64>>,
    /// Multiplier applied to the default delta rate.
    pub delta_scale: f64,
}

impl SpaceContext {
    pub fn new(model: Arc<RobotModel>) -> Self {
        Self {
            model,
            ik: IkConfig::default(),
            delta_c: None,
            delta_scale: 1.0,
        }
    }

    fn c_for<V: super::TargetVariable>(&self, variable: &V) -> DVector<f64> {
        self.delta_c.clone().unwrap_or_else(|| variable.derivative_bound() * self.delta_scale)
    }
}

pub type SpaceFactory = fn(ActionSpaceKind, &SpaceContext) -> Box<dyn ActionSpace>;

/// Name → factory table for action spaces.
#[derive(Clone)]
pub struct SpaceRegistry {
    entries: BTreeMap<String, (ActionSpaceKind, SpaceFactory)>,
}

fn build_default(kind: ActionSpaceKind, ctx: &SpaceContext) -> Box<dyn ActionSpace> {
    let model = ctx.model.clone();
    match kind.base() {
        None => Box::new(JointTorque::new(&model)),
        Some(BaseVariable::JointPosition) => {
            let v = JointPosition::new(model.clone());
            let c = ctx.c_for(&v);
            Box::new(ImpedanceSpace::new(kind, v, &model, Some(c)))
        }
        Some(BaseVariable::JointVelocity) => {
            let v = JointVelocity::new(model.clone());
            let c = ctx.c_for(&v);
            Box::new(ImpedanceSpace::new(kind, v, &model, Some(c)))
        }
        Some(BaseVariable::CartesianPosition) => {
            let v = CartesianPosition::new(model.clone(), ctx.ik);
            let c = ctx.c_for(&v);
            Box::new(ImpedanceSpace::new(kind, v, &model, Some(c)))
        }
        Some(BaseVariable::CartesianVelocity) => {
            let v = CartesianVelocity::new(model.clone(), ctx.ik);
            let c = ctx.c_for(&v);
            Box::new(ImpedanceSpace::new(kind, v, &model, Some(c)))
        }
    }
}

impl Default for SpaceRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        for kind in ActionSpaceKind::ALL {
            reg.register(kind.name(), kind, build_default);
        }
        reg
    }
}

impl SpaceRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, name: &str, kind: ActionSpaceKind, factory: SpaceFactory) {
        self.entries.insert(name.to_string(), (kind, factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn kind(&self, name: &str) -> Result<ActionSpaceKind> {
        self.entries.get(name).map(|e| e.0).ok_or_else(|| self.unknown(name))
    }

    pub fn create(&self, name: &str, ctx: &SpaceContext) -> Result<Box<dyn ActionSpace>> {
        let (kind, factory) = self.entries.get(name).ok_or_else(|| self.unknown(name))?;
        if let Some(c) = &ctx.delta_c {
            let dim = kind.action_dim(ctx.model.n_joints());
            crate::error::check_len("delta rate c", dim, c.len())?;
            if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidConfig("delta rate c must be positive".into()));
            }
        }
        if !(ctx.delta_scale.is_finite() && ctx.delta_scale > 0.0) {
            return Err(Error::InvalidConfig("delta_scale must be positive".into()));
        }
        Ok(factory(*kind, ctx))
    }

    fn unknown(&self, name: &str) -> Error {
        Error::UnknownSpace {
            name: name.to_string(),
            valid: self.names().join(", "),
        }
    }
}
