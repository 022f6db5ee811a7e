use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::se3::Pose;

/// Weights must sum to one within this.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Pose hypotheses with their log-likelihoods and optional normalized
/// importance weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    poses: Vec<Pose>,
    log_liks: Vec<ExtReal>,
    weights: Option<Vec<f64>>,
}

impl ParticleSet {
    pub fn new(poses: Vec<Pose>, log_liks: Vec<ExtReal>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::EmptyInput);
        }
        if poses.len() != log_liks.len() {
            return Err(Error::InvalidInput(format!(
                "{} poses but {} log-likelihoods",
                poses.len(),
                log_liks.len()
            )));
        }
        Ok(Self {
            poses,
            log_liks,
            weights: None,
        })
    }

    /// Attaches weights; they must be nonnegative, sum to one, and vanish on
    /// every infeasible particle.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.poses.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} particles",
                weights.len(),
                self.poses.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        if let Some(i) = self
            .log_liks
            .iter()
            .zip(&weights)
            .position(|(l, w)| l.is_neg_inf() && *w != 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "infeasible particle {i} has nonzero weight"
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn log_liks(&self) -> &[ExtReal] {
        &self.log_liks
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Pose, ExtReal)> {
        self.poses.iter().zip(self.log_liks.iter().copied())
    }

    /// Index of the highest log-likelihood (lowest index on ties).
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, l) in self.log_liks.iter().enumerate() {
            if *l > self.log_liks[best] {
                best = i;
            }
        }
        best
    }

    pub fn best(&self) -> (&Pose, ExtReal) {
        let i = self.best_index();
        (&self.poses[i], self.log_liks[i])
    }
}

/// `1 / Σ wₖ²` over the attached weights.
pub fn effective_sample_size(p: &ParticleSet) -> Result<f64> {
    let w = p
        .weights()
        .ok_or_else(|| Error::InvalidInput("particle set has no weights".into()))?;
    Ok(ess_of(w))
}

pub(crate) fn ess_of(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|x| x * x).sum::<f64>()
}
