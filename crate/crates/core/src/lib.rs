//! Curriculum reinforcement learning along Wasserstein geodesics between task
//! distributions.

pub mod curriculum;
pub mod embed;
pub mod envs;
pub mod io;
pub mod learner;
pub mod metrics;
pub mod ot;
pub mod policy;
