//! Random-walk Metropolis over poses.

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::particles::ParticleSet;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::se3::Pose;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McmcConfig {
    pub steps: usize,
    /// Per-axis translation proposal std (length).
    pub sigma_t: f64,
    /// Rotation proposal angle std (radians).
    pub sigma_r: f64,
    pub seed: u64,
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidInput("MCMC needs at least one step".into()));
        }
        if !(self.sigma_t > 0.0 && self.sigma_r > 0.0) {
            return Err(Error::InvalidInput("MCMC proposal scales must be positive".into()));
        }
        Ok(())
    }
}

/// Runs one chain from `init` and returns every state visited after each
/// step (`cfg.steps` particles, repeats included).
pub fn mcmc_sample<F>(log_density: F, cfg: &McmcConfig, init: &Pose) -> Result<ParticleSet>
where
    F: Fn(&Pose) -> ExtReal,
{
    cfg.validate()?;
    let mut current = *init;
    let mut current_ll = match log_density(init) {
        ExtReal::NegInf => return Err(Error::InfeasibleInit),
        ExtReal::Finite(v) => v,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let angle = Normal::new(0.0, cfg.sigma_r).expect("sigma checked");
    let mut poses = Vec::with_capacity(cfg.steps);
    let mut lls = Vec::with_capacity(cfg.steps);

    for _ in 0..cfg.steps {
        let dt = Vector3::from_fn(|_, _| cfg.sigma_t * rng.sample::<f64, _>(StandardNormal));
        let axis = loop {
            let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            if let Some(u) = Unit::try_new(v, 1e-9) {
                break u;
            }
        };
        let theta = angle.sample(&mut rng).abs();
        let rotation = UnitQuaternion::from_axis_angle(&axis, theta) * current.rotation();
        let proposal = Pose::from_rotation(rotation, current.translation() + dt);
        let u: f64 = rng.random();
        if let ExtReal::Finite(ll) = log_density(&proposal) {
            if u.ln() < ll - current_ll {
                current = proposal;
                current_ll = ll;
            }
        }
        poses.push(current);
        lls.push(ExtReal::Finite(current_ll));
    }
    ParticleSet::new(poses, lls)
}
