//! The learned camera policy: features, a recurrent actor-critic, GAE and a
//! PPO trainer with hand-derived gradients.

pub mod features;
pub mod gae;
pub mod net;
pub mod policy;
pub mod ppo;
pub mod train;

pub use features::{build_features, pool_ego, FeatureSpec};
pub use gae::gae;
pub use net::{Layout, PolicyParams, StepOutput};
pub use policy::{camera_learned, joint_policy_forward, select_action, ActionMode, JointOutput};
pub use ppo::{ppo_update, Adam, LossStats, PPOConfig, RolloutBuffer, Segment, Transition};
pub use train::{train, Checkpoint, CurvePoint, EnvStep, PolicyKind, RngState, TrainConfig, TrainEnv, TrainOutput};
