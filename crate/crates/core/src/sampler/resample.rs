use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::particles::ParticleSet;
use crate::error::{Error, Result};
use crate::ext::ExtReal;

/// Normalized weights `∝ exp(ℓ − max ℓ)`, exactly zero for infeasible
/// particles.
pub fn importance_weights(log_liks: &[ExtReal]) -> Result<Vec<f64>> {
    let max = log_liks
        .iter()
        .filter_map(|l| l.finite())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or(Error::AllInfeasible)?;
    let raw: Vec<f64> = log_liks
        .iter()
        .map(|l| l.finite().map_or(0.0, |v| (v - max).exp()))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Systematic resampling: `n` indices drawn with one uniform offset and
/// stride `1/n` through the cumulative weights. Zero-weight entries are
/// never selected.
pub fn systematic_indices(weights: &[f64], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let last_positive = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    let step = 1.0 / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut cum = weights.first().copied().unwrap_or(0.0);
    for _ in 0..n {
        while u >= cum && j < last_positive {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
        u += step;
    }
    out
}

/// Draws `count` particles with replacement in proportion to their
/// likelihood; the result carries uniform weights.
pub fn importance_resample(p: &ParticleSet, count: usize, seed: u64) -> Result<ParticleSet> {
    if count == 0 {
        return Err(Error::InvalidInput("resample count must be positive".into()));
    }
    let weights = importance_weights(p.log_liks())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = systematic_indices(&weights, count, &mut rng);
    let poses = idx.iter().map(|&i| p.poses()[i]).collect();
    let lls = idx.iter().map(|&i| p.log_liks()[i]).collect();
    ParticleSet::new(poses, lls)?.with_weights(vec![1.0 / count as f64; count])
}

/// The particle set with its importance weights attached.
pub fn weighted(p: &ParticleSet) -> Result<ParticleSet> {
    let w = importance_weights(p.log_liks())?;
    ParticleSet::new(p.poses().to_vec(), p.log_liks().to_vec())?.with_weights(w)
}
