//! Multi-agent actor-critic training with mutual-information reward shaping.
//!
//! The pieces, bottom up:
//!
//! * [`nn`]: dense networks, Adam, checkpoints and gradient checking.
//! * [`env`]: the two cooperative rescue environments.
//! * [`du_pcb`]: the dual trajectory buffer that splits episodes by return.
//! * [`du_mie`]: lower- and upper-bound information estimators trained on
//!   the two halves of that buffer, and the shaped reward built from them.
//! * [`maddpg`]: the centralized-critic learner.
//! * [`harness`]: runs, sweeps and their CSV/JSON artifacts.

pub mod du_mie;
pub mod du_pcb;
pub mod env;
pub mod error;
pub mod harness;
pub mod maddpg;
pub mod nn;

pub use du_mie::{ClubEstimator, MiSignal, MineEstimator};
pub use du_pcb::{DuPcb, PcbConfig, Placement};
pub use env::{EnvKind, Environment, GlobalState, JointAction, Observation, Trajectory, Transition};
pub use error::{Error, Result};
pub use harness::{classify_joint_behavior, run, sweep, JointBehavior, RunRecord, SummaryTable};
pub use maddpg::{ActorCriticEnsemble, ExperimentConfig, Learner, Mode};
