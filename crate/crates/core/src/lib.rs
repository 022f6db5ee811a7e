//! Matching-free probabilistic 6-DoF object pose estimation.
//!
//! An object is a pointcloud whose points carry unit feature descriptors. A
//! scene is a voxel field of descriptors with two special values: `Empty`
//! (observed free space, which no object point may occupy) and `Null`
//! (unobserved space, which neither rewards nor penalizes). Together with a
//! voxelized object classifier this defines a pose log-likelihood. The crate
//! evaluates it, finds a robust maximum-likelihood pose with graduated
//! non-convexity, and represents the full pose distribution with particles.

pub mod classifier;
pub mod cloud;
pub mod error;
pub mod ext;
pub mod io;
pub mod likelihood;
pub mod robust;
pub mod sampler;
pub mod scene;
pub mod se3;
pub mod synth;

pub use classifier::{best_buddy_classifier, BestBuddyConfig};
pub use cloud::StructuredPointCloud;
pub use error::{Error, Result};
pub use ext::ExtReal;
pub use likelihood::{
    object_log_likelihood, objective_for_optimizer, point_log_loc, LikelihoodConfig, Model,
};
pub use robust::{mle_estimate, GncConfig, MleConfig, MleResult};
pub use sampler::{
    de_sample, estimate_distribution, importance_resample, kde_marginal, mcmc_sample, DeConfig,
    Estimate, EstimateConfig, MarginalDensity, McmcConfig, ParticleSet,
};
pub use scene::{CellTag, ClassifierField, DescriptorValue, GridGeometry, SceneField};
pub use se3::{EulerAngles, Pose, PoseVector};
pub use synth::{generate, SynthInstance, SynthSpec};

pub use nalgebra::{Point3, UnitQuaternion, Vector3};
