//! Gaussian kernel density estimates of single pose coordinates.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{wrap_angle, Pose};

pub const GRID_POINTS: usize = 512;
/// Images of each kernel on either side of `[−π, π)` for circular data.
pub const WRAP_IMAGES: i32 = 3;
/// Smallest bandwidth used when the samples have no spread.
pub const MIN_BANDWIDTH: f64 = 1e-6;
/// Grid padding beyond the data range, in bandwidths.
const PAD_BANDWIDTHS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    Tx,
    Ty,
    Tz,
    Roll,
    Pitch,
    Yaw,
}

impl Coordinate {
    pub const ALL: [Coordinate; 6] = [
        Coordinate::Tx,
        Coordinate::Ty,
        Coordinate::Tz,
        Coordinate::Roll,
        Coordinate::Pitch,
        Coordinate::Yaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Coordinate::Tx => "tx",
            Coordinate::Ty => "ty",
            Coordinate::Tz => "tz",
            Coordinate::Roll => "roll",
            Coordinate::Pitch => "pitch",
            Coordinate::Yaw => "yaw",
        }
    }

    pub fn is_angle(self) -> bool {
        matches!(self, Coordinate::Roll | Coordinate::Pitch | Coordinate::Yaw)
    }

    /// Value of this coordinate for a pose (Z-Y-X Euler angles).
    pub fn of(self, pose: &Pose) -> f64 {
        let t = pose.translation();
        match self {
            Coordinate::Tx => t.x,
            Coordinate::Ty => t.y,
            Coordinate::Tz => t.z,
            Coordinate::Roll => pose.euler().roll,
            Coordinate::Pitch => pose.euler().pitch,
            Coordinate::Yaw => pose.euler().yaw,
        }
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Coordinate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Coordinate::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown coordinate {s:?}")))
    }
}

/// Density of one coordinate tabulated on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalDensity {
    pub coordinate: Coordinate,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub circular: bool,
    samples: Vec<f64>,
}

impl MarginalDensity {
    /// Evaluates the estimate at an arbitrary point.
    pub fn density_at(&self, x: f64) -> f64 {
        kernel_sum(&self.samples, self.bandwidth, self.circular, x)
    }

    /// Numerical integral over the grid: trapezoid rule, or the periodic
    /// rectangle rule for circular grids.
    pub fn integral(&self) -> f64 {
        if self.grid.len() < 2 {
            return 0.0;
        }
        let dx = self.grid[1] - self.grid[0];
        if self.circular {
            self.density.iter().sum::<f64>() * dx
        } else {
            let inner: f64 = self.density[1..self.density.len() - 1].iter().sum();
            dx * (inner + 0.5 * (self.density[0] + self.density[self.density.len() - 1]))
        }
    }

    /// Grid value with the highest density.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, d) in self.density.iter().enumerate() {
            if *d > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }
}

fn gaussian(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn kernel_sum(samples: &[f64], h: f64, circular: bool, x: f64) -> f64 {
    let mut acc = 0.0;
    if circular {
        for s in samples {
            let d = wrap_angle(x - s);
            for k in -WRAP_IMAGES..=WRAP_IMAGES {
                acc += gaussian((d + k as f64 * TAU) / h);
            }
        }
    } else {
        for s in samples {
            acc += gaussian((x - s) / h);
        }
    }
    acc / (samples.len() as f64 * h)
}

pub fn sample_std(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Mean direction of angles, in `[−π, π)`.
pub fn circular_mean(angles: &[f64]) -> f64 {
    let (s, c) = resultant(angles);
    wrap_angle(s.atan2(c))
}

/// `sqrt(−2 ln R̄)` with `R̄` the mean resultant length.
pub fn circular_std(angles: &[f64]) -> f64 {
    let (s, c) = resultant(angles);
    let r = (s * s + c * c).sqrt().min(1.0);
    if r <= 0.0 {
        return f64::INFINITY;
    }
    (-2.0 * r.ln()).max(0.0).sqrt()
}

fn resultant(angles: &[f64]) -> (f64, f64) {
    let n = angles.len() as f64;
    let s = angles.iter().map(|a| a.sin()).sum::<f64>() / n;
    let c = angles.iter().map(|a| a.cos()).sum::<f64>() / n;
    (s, c)
}

/// Scott's rule `σ̂ · n^(−1/5)`. Circular data use the circular standard
/// deviation, capped at that of the uniform distribution on the circle.
pub fn scott_bandwidth(samples: &[f64], circular: bool) -> f64 {
    let sigma = if circular {
        circular_std(samples).min(PI / 3f64.sqrt())
    } else {
        sample_std(samples)
    };
    (sigma * (samples.len() as f64).powf(-0.2)).max(MIN_BANDWIDTH)
}

/// Gaussian KDE with Scott's-rule bandwidth on a 512-point grid.
///
/// The bandwidth is never narrower than the grid spacing (over the data
/// range, or the circle), so every kernel is resolved by the grid and the
/// density integrates to one over it even for nearly degenerate samples.
pub fn kde_marginal(samples: &[f64], coordinate: Coordinate, circular: bool) -> Result<MarginalDensity> {
    check_samples(samples)?;
    let span = if circular {
        TAU
    } else {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let h = scott_bandwidth(samples, circular).max(span / (GRID_POINTS - 1) as f64);
    kde_marginal_with_bandwidth(samples, coordinate, circular, h)
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("samples must be finite".into()));
    }
    Ok(())
}

/// Like [`kde_marginal`] with a fixed bandwidth.
pub fn kde_marginal_with_bandwidth(
    samples: &[f64],
    coordinate: Coordinate,
    circular: bool,
    bandwidth: f64,
) -> Result<MarginalDensity> {
    check_samples(samples)?;
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let grid: Vec<f64> = if circular {
        let dx = TAU / GRID_POINTS as f64;
        (0..GRID_POINTS).map(|i| -PI + i as f64 * dx).collect()
    } else {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - PAD_BANDWIDTHS * bandwidth;
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + PAD_BANDWIDTHS * bandwidth;
        let dx = (hi - lo) / (GRID_POINTS - 1) as f64;
        (0..GRID_POINTS).map(|i| lo + i as f64 * dx).collect()
    };
    let samples: Vec<f64> = if circular {
        samples.iter().map(|s| wrap_angle(*s)).collect()
    } else {
        samples.to_vec()
    };
    let density = {
        use rayon::prelude::*;
        grid.par_iter()
            .map(|x| kernel_sum(&samples, bandwidth, circular, *x))
            .collect()
    };
    Ok(MarginalDensity {
        coordinate,
        grid,
        density,
        bandwidth,
        circular,
        samples,
    })
}
