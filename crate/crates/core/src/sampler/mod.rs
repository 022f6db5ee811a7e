//! Particle representation of the pose distribution.

mod de;
mod kde;
mod mcmc;
mod particles;
mod pipeline;
mod resample;

pub use de::{de_sample, DeConfig, DeResult, DeStrategy, TranslationBounds};
pub use kde::{
    circular_mean, circular_std, kde_marginal, kde_marginal_with_bandwidth, sample_std,
    scott_bandwidth, Coordinate, MarginalDensity, GRID_POINTS, MIN_BANDWIDTH, WRAP_IMAGES,
};
pub use mcmc::{mcmc_sample, McmcConfig};
pub use particles::{effective_sample_size, ParticleSet, WEIGHT_SUM_TOLERANCE};
pub use pipeline::{
    estimate_distribution, CoordinateSummary, Estimate, EstimateConfig, Summary, Timings,
    DEFAULT_PARTICLES,
};
pub use resample::{importance_resample, importance_weights, systematic_indices, weighted};

