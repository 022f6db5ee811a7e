//! MLE seed → differential evolution → importance resampling → marginals.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use super::de::{de_sample, DeConfig, DeStrategy, TranslationBounds};
use super::kde::{circular_mean, circular_std, kde_marginal, sample_std, Coordinate, MarginalDensity};
use super::particles::{ess_of, ParticleSet};
use super::resample::{importance_resample, importance_weights};
use crate::cloud::StructuredPointCloud;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::likelihood::{LikelihoodConfig, Model};
use crate::robust::{mle_estimate, MleConfig, MleResult};
use crate::scene::{ClassifierField, SceneField};
use crate::se3::Pose;

pub const DEFAULT_PARTICLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateConfig {
    pub likelihood: LikelihoodConfig,
    /// Seed the search with the robust MLE pose.
    pub use_mle: bool,
    pub mle: MleConfig,
    pub population_size: usize,
    pub generations: usize,
    pub differential_weight: f64,
    pub crossover_rate: f64,
    /// Defaults to `Rand1`: with `Best1` every member is pulled toward the
    /// current best, so a flat ridge of equally likely poses (a symmetry
    /// axis) ends up covered only near one point.
    pub strategy: DeStrategy,
    /// Translation search box; the scene extent when absent.
    pub translation_bounds: Option<TranslationBounds>,
    pub particles: usize,
    pub seed: u64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let de = DeConfig::with_bounds(TranslationBounds {
            lo: Default::default(),
            hi: Default::default(),
        });
        Self {
            likelihood: LikelihoodConfig::default(),
            use_mle: true,
            mle: MleConfig::default(),
            population_size: de.population_size,
            generations: de.generations,
            differential_weight: de.differential_weight,
            crossover_rate: de.crossover_rate,
            strategy: DeStrategy::Rand1,
            translation_bounds: None,
            particles: DEFAULT_PARTICLES,
            seed: 0,
        }
    }
}

impl EstimateConfig {
    pub fn de_config(&self, scene: &SceneField) -> DeConfig {
        DeConfig {
            population_size: self.population_size,
            generations: self.generations,
            differential_weight: self.differential_weight,
            crossover_rate: self.crossover_rate,
            strategy: self.strategy,
            translation_bounds: self
                .translation_bounds
                .unwrap_or_else(|| TranslationBounds::of_grid(scene.geometry())),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CoordinateSummary {
    pub mean: f64,
    pub std: f64,
    /// Only for angles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circular_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circular_std: Option<f64>,
}

impl CoordinateSummary {
    pub fn of(values: &[f64], angle: bool) -> Self {
        let n = values.len() as f64;
        Self {
            mean: values.iter().sum::<f64>() / n,
            std: if values.len() > 1 { sample_std(values) } else { 0.0 },
            circular_mean: angle.then(|| circular_mean(values)),
            circular_std: angle.then(|| circular_std(values)),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct Timings {
    pub mle: f64,
    pub de: f64,
    pub rescore: f64,
    pub resample: f64,
    pub kde: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Summary {
    pub particles: usize,
    /// Number of evaluated candidates that were weighted.
    pub population: usize,
    pub feasible_population: usize,
    pub evaluations: usize,
    /// Effective sample size of the weighted population before resampling.
    pub ess: f64,
    pub best_log_lik: f64,
    pub best_pose: Pose,
    pub mle_used: bool,
    pub coordinates: BTreeMap<String, CoordinateSummary>,
    pub timings: Timings,
}

#[derive(Clone, Debug)]
pub struct Estimate {
    /// Resampled particles with uniform weights.
    pub particles: ParticleSet,
    /// Every candidate evaluated by the search, with log-likelihoods and
    /// importance weights.
    pub population: ParticleSet,
    pub marginals: Vec<MarginalDensity>,
    pub summary: Summary,
    pub mle: Option<MleResult>,
    /// Why the MLE seed was unavailable, when it was requested.
    pub mle_error: Option<String>,
}

/// Full distribution estimate. A failing MLE seed is not fatal; the search
/// then starts from a random population only. A scene without observed
/// surface is rejected with `NoRegularVoxels`.
pub fn estimate_distribution(
    obj: &StructuredPointCloud,
    scene: &SceneField,
    cls: &ClassifierField,
    cfg: &EstimateConfig,
) -> Result<Estimate> {
    let start = Instant::now();
    let model = Model::new(obj, scene, cls, cfg.likelihood)?;
    if scene.regular_cells().next().is_none() {
        return Err(Error::NoRegularVoxels);
    }
    let de_cfg = cfg.de_config(scene);
    de_cfg.validate()?;
    let mut timings = Timings::default();

    let (mle, mle_error) = if cfg.use_mle {
        let mle_cfg = MleConfig {
            likelihood: cfg.likelihood,
            ..cfg.mle
        };
        match mle_estimate(obj, scene, cls, &mle_cfg, None) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    timings.mle = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let de = de_sample(|p| model.objective(p), &de_cfg, mle.as_ref().map(|m| &m.pose))?;
    timings.de = t.elapsed().as_secs_f64();

    // Every candidate the search evaluated is a particle. Feasible scores lie
    // strictly above the floor, so the floor marks exactly the infeasible ones.
    let t = Instant::now();
    let floor = cfg.likelihood.log_floor;
    let (poses, lls): (Vec<Pose>, Vec<ExtReal>) = de
        .history
        .iter()
        .map(|&(p, s)| (p, if s <= floor { ExtReal::NegInf } else { ExtReal::Finite(s) }))
        .unzip();
    let weights = importance_weights(&lls)?;
    let population = ParticleSet::new(poses, lls)?.with_weights(weights)?;
    timings.rescore = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let particles = importance_resample(&population, cfg.particles, cfg.seed.wrapping_add(1))?;
    timings.resample = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut marginals = Vec::with_capacity(6);
    let mut coordinates = BTreeMap::new();
    for c in Coordinate::ALL {
        let values: Vec<f64> = particles.poses().iter().map(|p| c.of(p)).collect();
        coordinates.insert(c.name().to_string(), CoordinateSummary::of(&values, c.is_angle()));
        marginals.push(kde_marginal(&values, c, c.is_angle())?);
    }
    timings.kde = t.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();

    let (best_pose, best_ll) = population.best();
    let summary = Summary {
        particles: particles.len(),
        population: population.len(),
        feasible_population: population.log_liks().iter().filter(|l| !l.is_neg_inf()).count(),
        evaluations: de.evaluations,
        ess: ess_of(population.weights().expect("weights attached")),
        best_log_lik: best_ll.finite().expect("a feasible particle exists"),
        best_pose: *best_pose,
        mle_used: mle.is_some(),
        coordinates,
        timings,
    };
    Ok(Estimate {
        particles,
        population,
        marginals,
        summary,
        mle,
        mle_error,
    })
}
