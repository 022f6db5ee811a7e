//! Two-point differential evolution over the 7-vector pose parameterization.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::particles::ParticleSet;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::scene::GridGeometry;
use crate::se3::{Pose, PoseVector};

/// Axis-aligned box of allowed translations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TranslationBounds {
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl TranslationBounds {
    pub fn new(lo: Vector3<f64>, hi: Vector3<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// The box spanned by a voxel grid.
    pub fn of_grid(g: &GridGeometry) -> Self {
        let o: Point3<f64> = g.origin();
        Self {
            lo: o.coords,
            hi: g.max_corner().coords,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            let (lo, hi) = (self.lo[a], self.hi[a]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidBounds(format!(
                    "axis {a}: [{lo}, {hi}] is not a finite interval"
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, t: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|a, _| t[a].clamp(self.lo[a], self.hi[a]))
    }

    pub fn contains(&self, t: &Vector3<f64>) -> bool {
        (0..3).all(|a| t[a] >= self.lo[a] && t[a] <= self.hi[a])
    }
}

/// How mutants are formed from the population.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeStrategy {
    /// `best + F·(x₁ − x₂)`.
    #[default]
    Best1,
    /// `xᵢ + F·(best − xᵢ) + F·(x₁ − x₂)`.
    CurrentToBest1,
    /// `x₀ + F·(x₁ − x₂)` with a third random donor as base.
    Rand1,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Mutation scale `F`, in `(0, 2)`.
    pub differential_weight: f64,
    pub crossover_rate: f64,
    pub strategy: DeStrategy,
    pub translation_bounds: TranslationBounds,
    pub seed: u64,
}

impl DeConfig {
    pub const DEFAULT_POPULATION: usize = 64;
    pub const DEFAULT_GENERATIONS: usize = 312;

    /// Default settings (population 64, F = 0.8, CR = 0.9, about 2e4
    /// evaluations) within the given bounds.
    pub fn with_bounds(translation_bounds: TranslationBounds) -> Self {
        Self {
            population_size: Self::DEFAULT_POPULATION,
            generations: Self::DEFAULT_GENERATIONS,
            differential_weight: 0.8,
            crossover_rate: 0.9,
            strategy: DeStrategy::Best1,
            translation_bounds,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.translation_bounds.validate()?;
        if self.population_size < 4 {
            return Err(Error::InvalidInput(format!(
                "population size must be at least 4, got {}",
                self.population_size
            )));
        }
        if !(self.differential_weight > 0.0 && self.differential_weight < 2.0) {
            return Err(Error::InvalidInput(format!(
                "differential weight must lie in (0, 2), got {}",
                self.differential_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::InvalidInput(format!(
                "crossover rate must lie in [0, 1], got {}",
                self.crossover_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DeResult {
    /// Final population; log-likelihoods are the objective values.
    pub particles: ParticleSet,
    /// Best objective after initialization and after every generation.
    pub best_trace: Vec<f64>,
    pub evaluations: usize,
    /// Every evaluated candidate (initial members, then trials in order)
    /// with its objective value.
    pub history: Vec<(Pose, f64)>,
}

/// Uniformly distributed rotation (normalized 4D Gaussian).
fn random_rotation_quaternion(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if q.iter().map(|c| c * c).sum::<f64>() > 1e-6 {
            return q;
        }
    }
}

/// Renormalizes the quaternion part (keeping its sign) and clamps the
/// translation. `None` for a degenerate quaternion.
fn normalize_genotype(v: &[f64; 7], bounds: &TranslationBounds) -> Option<[f64; 7]> {
    let n = v[..4].iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 1e-12) {
        return None;
    }
    let t = bounds.clamp(&Vector3::new(v[4], v[5], v[6]));
    Some([v[0] / n, v[1] / n, v[2] / n, v[3] / n, t.x, t.y, t.z])
}

fn decode(g: &[f64; 7]) -> Pose {
    Pose::from_vector(&PoseVector(*g)).expect("genotype quaternion is unit length")
}

/// Maximizes `objective` by differential evolution with two-point
/// crossover. Members are raw 7-vectors with a unit (but not sign-fixed)
/// quaternion, so `q` and `−q` stay distinct points of the search space and
/// the rotation group is covered without a seam. Translations are clamped
/// to the bounds.
pub fn de_sample<F>(objective: F, cfg: &DeConfig, init: Option<&Pose>) -> Result<DeResult>
where
    F: Fn(&Pose) -> f64 + Sync,
{
    cfg.validate()?;
    let n = cfg.population_size;
    let bounds = &cfg.translation_bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pop: Vec<[f64; 7]> = (0..n)
        .map(|_| {
            let q = random_rotation_quaternion(&mut rng);
            let t: [f64; 3] = std::array::from_fn(|a| {
                if bounds.lo[a] < bounds.hi[a] {
                    rng.random_range(bounds.lo[a]..bounds.hi[a])
                } else {
                    bounds.lo[a]
                }
            });
            normalize_genotype(&[q[0], q[1], q[2], q[3], t[0], t[1], t[2]], bounds)
                .expect("sampled quaternion is not degenerate")
        })
        .collect();
    if let Some(p) = init {
        pop[0] = normalize_genotype(&p.to_vector().0, bounds).expect("pose quaternion is unit");
    }
    let mut poses: Vec<Pose> = pop.iter().map(decode).collect();
    let mut fit: Vec<f64> = poses.par_iter().map(&objective).collect();
    let mut evaluations = n;
    let mut history: Vec<(Pose, f64)> = poses.iter().copied().zip(fit.iter().copied()).collect();
    let best_of = |fit: &[f64]| {
        (0..fit.len()).fold(0, |b, i| if fit[i] > fit[b] { i } else { b })
    };
    let mut best_trace = vec![fit[best_of(&fit)]];
    let crossover = Binomial::new(6, cfg.crossover_rate).expect("rate checked above");
    let f = cfg.differential_weight;

    for _ in 0..cfg.generations {
        let best = best_of(&fit);
        let xb = pop[best];
        let trials: Vec<Option<[f64; 7]>> = (0..n)
            .map(|i| {
                let r1 = pick_other(&mut rng, n, &[i]);
                let r2 = pick_other(&mut rng, n, &[i, r1]);
                let base = match cfg.strategy {
                    DeStrategy::Rand1 => pop[pick_other(&mut rng, n, &[i, r1, r2])],
                    DeStrategy::Best1 => xb,
                    DeStrategy::CurrentToBest1 => {
                        std::array::from_fn(|j| pop[i][j] + f * (xb[j] - pop[i][j]))
                    }
                };
                let (x1, x2) = (&pop[r1], &pop[r2]);
                let mut trial = pop[i];
                let start = rng.random_range(0..7usize);
                let len = 1 + crossover.sample(&mut rng) as usize;
                for k in 0..len {
                    let j = (start + k) % 7;
                    trial[j] = base[j] + f * (x1[j] - x2[j]);
                }
                normalize_genotype(&trial, bounds)
            })
            .collect();
        let scored: Vec<Option<(Pose, f64)>> = trials
            .par_iter()
            .map(|t| {
                t.as_ref().map(|g| {
                    let p = decode(g);
                    (p, objective(&p))
                })
            })
            .collect();
        for (i, (g, ps)) in trials.into_iter().zip(scored).enumerate() {
            if let (Some(g), Some((p, s))) = (g, ps) {
                evaluations += 1;
                history.push((p, s));
                if s >= fit[i] {
                    pop[i] = g;
                    poses[i] = p;
                    fit[i] = s;
                }
            }
        }
        best_trace.push(fit[best_of(&fit)]);
    }

    let log_liks = fit.into_iter().map(ExtReal::Finite).collect();
    Ok(DeResult {
        particles: ParticleSet::new(poses, log_liks)?,
        best_trace,
        evaluations,
        history,
    })
}

fn pick_other(rng: &mut impl Rng, n: usize, exclude: &[usize]) -> usize {
    loop {
        let r = rng.random_range(0..n);
        if !exclude.contains(&r) {
            return r;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> TranslationBounds {
        TranslationBounds::new(Vector3::repeat(-1.0), Vector3::repeat(1.0)).unwrap()
    }

    #[test]
    fn bounds_validation() {
        assert!(TranslationBounds::new(Vector3::repeat(1.0), Vector3::zeros()).is_err());
        let mut cfg = DeConfig::with_bounds(unit_box());
        cfg.translation_bounds.hi.x = f64::NAN;
        assert!(matches!(de_sample(|_| 0.0, &cfg, None), Err(Error::InvalidBounds(_))));
        let mut cfg = DeConfig::with_bounds(unit_box());
        cfg.population_size = 3;
        assert!(de_sample(|_| 0.0, &cfg, None).is_err());
    }

    #[test]
    fn trace_is_monotone_and_population_kept() {
        let target = Vector3::new(0.3, -0.2, 0.5);
        let mut cfg = DeConfig::with_bounds(unit_box());
        cfg.generations = 50;
        let res = de_sample(|p| -(p.translation() - target).norm_squared(), &cfg, None).unwrap();
        assert_eq!(res.particles.len(), cfg.population_size);
        assert_eq!(res.history.len(), res.evaluations);
        assert!(res.best_trace.windows(2).all(|w| w[1] >= w[0]));
        for p in res.particles.poses() {
            assert!(unit_box().contains(p.translation()));
            assert_eq!(Pose::from_vector(&p.to_vector()).unwrap(), *p);
        }
    }

    #[test]
    fn init_member_is_kept_when_best() {
        let mut cfg = DeConfig::with_bounds(unit_box());
        cfg.generations = 0;
        let init = Pose::from_translation(Vector3::new(0.1, 0.1, 0.1));
        let res = de_sample(|p| -(p.translation() - init.translation()).norm(), &cfg, Some(&init))
            .unwrap();
        assert_eq!(*res.particles.best().0, init);
    }
}
