//! Object classifier from best-buddy descriptor matches.

use rayon::prelude::*;

use crate::cloud::StructuredPointCloud;
use crate::error::{Error, Result};
use crate::scene::{ClassifierField, SceneField, DEFAULT_C_MIN};

pub const DEFAULT_BEST_BUDDY_THRESHOLD: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BestBuddyConfig {
    pub c_min: f64,
    /// Matches within this similarity of a maximum count as maximal.
    /// Zero gives strict argmax with ties to the lowest index.
    pub tolerance: f64,
    /// Chebyshev radius (voxels) by which positives are grown afterwards.
    pub dilation: usize,
}

impl Default for BestBuddyConfig {
    fn default() -> Self {
        Self {
            c_min: DEFAULT_C_MIN,
            tolerance: 0.0,
            dilation: 0,
        }
    }
}

/// Flat indices of scene cells that form a best-buddy pair with some object
/// point: the point's most similar regular voxel is the cell, the cell's
/// most similar point is the point, and their similarity reaches
/// `threshold`.
pub fn best_buddy_cells(
    obj: &StructuredPointCloud,
    scene: &SceneField,
    threshold: f64,
    tolerance: f64,
) -> Result<Vec<usize>> {
    if obj.dim() != scene.dim() {
        return Err(Error::InvalidInput("descriptor dimensions differ".into()));
    }
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(Error::InvalidInput(format!("tolerance must be nonnegative, got {tolerance}")));
    }
    let cells: Vec<usize> = scene.regular_cells().collect();
    if cells.is_empty() {
        return Err(Error::NoRegularVoxels);
    }
    let d = scene.dim();
    let voxel_desc: Vec<f64> = cells
        .iter()
        .flat_map(|&c| scene.cell_descriptor(c).iter().map(|&v| v as f64))
        .collect();
    let m = cells.len();
    let sim: Vec<f64> = (0..obj.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let z = obj.descriptor(i);
            let vd = &voxel_desc;
            (0..m).map(move |j| crate::cloud::dot(&vd[j * d..(j + 1) * d], z))
        })
        .collect();
    let row = |i: usize| &sim[i * m..(i + 1) * m];

    // Strict argmax (first maximum) and maximum per point and per voxel.
    let mut point_best = vec![(0usize, f64::NEG_INFINITY); obj.len()];
    let mut voxel_best = vec![(0usize, f64::NEG_INFINITY); m];
    for i in 0..obj.len() {
        for (j, &s) in row(i).iter().enumerate() {
            if s > point_best[i].1 {
                point_best[i] = (j, s);
            }
            if s > voxel_best[j].1 {
                voxel_best[j] = (i, s);
            }
        }
    }

    let mut positive = vec![false; m];
    if tolerance == 0.0 {
        for (j, &(i, s)) in voxel_best.iter().enumerate() {
            if point_best[i].0 == j && s >= threshold {
                positive[j] = true;
            }
        }
    } else {
        for i in 0..obj.len() {
            let pmax = point_best[i].1;
            for (j, &s) in row(i).iter().enumerate() {
                if s >= threshold && s >= pmax - tolerance && s >= voxel_best[j].1 - tolerance {
                    positive[j] = true;
                }
            }
        }
    }
    Ok(cells
        .into_iter()
        .zip(positive)
        .filter_map(|(c, p)| p.then_some(c))
        .collect())
}

/// Classifier with log-value 0 on best-buddy cells (optionally dilated) and
/// `c_min` elsewhere.
pub fn best_buddy_classifier(
    obj: &StructuredPointCloud,
    scene: &SceneField,
    threshold: f64,
    cfg: &BestBuddyConfig,
) -> Result<ClassifierField> {
    let g = *scene.geometry();
    let positives = best_buddy_cells(obj, scene, threshold, cfg.tolerance)?;
    let mut values = vec![cfg.c_min as f32; g.cell_count()];
    let [nx, ny, nz] = g.dims();
    let r = cfg.dilation;
    for idx in positives {
        let [i, j, k] = g.unflatten(idx);
        for kk in k.saturating_sub(r)..=(k + r).min(nz - 1) {
            for jj in j.saturating_sub(r)..=(j + r).min(ny - 1) {
                for ii in i.saturating_sub(r)..=(i + r).min(nx - 1) {
                    values[g.flat_index([ii, jj, kk])] = 0.0;
                }
            }
        }
    }
    ClassifierField::new(g, values, cfg.c_min)
}
