//! Grid-approximated maximum-likelihood pose via robust registration.
//!
//! The scene's regular voxel centers `y_j` form a candidate grid. Every
//! object point `i` is scored against every grid point with the same
//! log-localization density used by the likelihood (`c_ij`), the best `K`
//! candidates per point become weighted correspondences, and the pose is
//! found by truncated least squares solved with graduated non-convexity
//! (GNC-TLS, Black–Rangarajan surrogate).

use nalgebra::{Matrix3, Point3, Rotation3, SymmetricEigen, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::cloud::{dot, StructuredPointCloud};
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::likelihood::{check_compatible, objective_for_optimizer, LikelihoodConfig};
use crate::scene::{CellTag, ClassifierField, SceneField};
use crate::se3::Pose;

pub const DEFAULT_TOP_K: usize = 8;

/// Centers of the scene's regular voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoints {
    coords: Vec<Point3<f64>>,
    cells: Vec<usize>,
    voxel_size: f64,
}

impl GridPoints {
    pub fn coords(&self) -> &[Point3<f64>] {
        &self.coords
    }

    /// Flat scene cell index of each grid point.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }
}

pub fn build_grid(scene: &SceneField) -> Result<GridPoints> {
    let g = scene.geometry();
    let cells: Vec<usize> = scene.regular_cells().collect();
    if cells.is_empty() {
        return Err(Error::NoRegularVoxels);
    }
    let coords = cells.iter().map(|&idx| g.center(g.unflatten(idx))).collect();
    Ok(GridPoints {
        coords,
        cells,
        voxel_size: g.voxel_size(),
    })
}

/// `N × M` matrix of log-localization scores, row per object point.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    c_min: f64,
}

impl CostMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }
}

/// Scores every object descriptor at every grid point. Grid points sit on
/// voxel centers, so each entry equals the point log-localization density
/// at that center exactly.
pub fn cost_matrix(
    obj: &StructuredPointCloud,
    grid: &GridPoints,
    scene: &SceneField,
    cls: &ClassifierField,
    cfg: &LikelihoodConfig,
) -> Result<CostMatrix> {
    check_compatible(obj, scene, cls)?;
    let d = scene.dim();
    let m = grid.len();
    let mut grid_desc = vec![0.0; m * d];
    let mut grid_cls = vec![0.0; m];
    for (j, y) in grid.coords.iter().enumerate() {
        let out = &mut grid_desc[j * d..(j + 1) * d];
        if scene.interpolate_into(y, out) != CellTag::Regular {
            return Err(Error::InvalidInput(format!(
                "grid point {j} does not lie on a regular voxel of this scene"
            )));
        }
        grid_cls[j] = cls.query(y);
    }
    let mut values = vec![0.0; obj.len() * m];
    values
        .par_chunks_mut(m.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let z = obj.descriptor(i);
            for (j, c) in row.iter_mut().enumerate() {
                *c = grid_cls[j] + cfg.beta * dot(&grid_desc[j * d..(j + 1) * d], z);
            }
        });
    Ok(CostMatrix {
        rows: obj.len(),
        cols: m,
        values,
        c_min: cls.c_min(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    /// Object point index.
    pub point: usize,
    /// Grid point index.
    pub grid: usize,
    pub weight: f64,
}

/// Weighted candidate matches, grouped by object point in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceSet {
    pub k: usize,
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Object points that kept at least one candidate.
    pub fn points(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.pairs.iter().map(|c| c.point).collect();
        out.dedup();
        out
    }
}

/// Keeps the top `k` entries of every row with weights
/// `exp(c_ij - max_j c_ij)` renormalized over the kept entries. Rows whose
/// best score is below `c_min / 2` have no plausible localization and are
/// dropped.
pub fn correspondences_from_costs(c: &CostMatrix, k: usize) -> Result<CorrespondenceSet> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let keep = k.min(c.cols);
    let mut pairs = Vec::with_capacity(c.rows * keep);
    let mut order: Vec<usize> = Vec::with_capacity(c.cols);
    for i in 0..c.rows {
        let row = c.row(i);
        order.clear();
        order.extend(0..c.cols);
        let by_score = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
        if keep < order.len() {
            order.select_nth_unstable_by(keep - 1, by_score);
            order.truncate(keep);
        }
        order.sort_unstable_by(by_score);
        let best = row[order[0]];
        if best < c.c_min / 2.0 {
            continue;
        }
        let raw: Vec<f64> = order.iter().map(|&j| (row[j] - best).exp()).collect();
        let total: f64 = raw.iter().sum();
        pairs.extend(order.iter().zip(&raw).map(|(&j, &w)| Correspondence {
            point: i,
            grid: j,
            weight: w / total,
        }));
    }
    Ok(CorrespondenceSet { k, pairs })
}

/// Truncated least squares: `min(r², threshold²)`.
pub fn robust_cost(r: f64, threshold: f64) -> f64 {
    (r * r).min(threshold * threshold)
}

/// Weighted least-squares rigid alignment of `src` onto `dst` (weighted
/// Kabsch with reflection correction).
///
/// When the weighted source points are coincident the rotation is the
/// identity; when they are collinear the rotation is the smallest one that
/// turns the source line toward its correlated target direction.
pub fn weighted_rigid_align(
    src: &[Point3<f64>],
    dst: &[Point3<f64>],
    weights: &[f64],
) -> Result<Pose> {
    if src.is_empty() || src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "alignment needs equal nonempty inputs, got {}, {} and {}",
            src.len(),
            dst.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeightSum);
    }
    let mut cs = Vector3::zeros();
    let mut cd = Vector3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        cs += s.coords * *w;
        cd += d.coords * *w;
    }
    cs /= total;
    cd /= total;

    let mut cross = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let a = s.coords - cs;
        let b = d.coords - cd;
        cross += (a * b.transpose()) * *w;
        scatter += (a * a.transpose()) * *w;
    }

    let rotation = best_rotation(&cross, &scatter);
    let translation = cd - rotation * cs;
    Ok(Pose::from_rotation(rotation, translation))
}

fn best_rotation(cross: &Matrix3<f64>, scatter: &Matrix3<f64>) -> UnitQuaternion<f64> {
    let eig = SymmetricEigen::new(*scatter);
    let (imax, lmax) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, l)| if l > acc.1 { (i, l) } else { acc });
    if !(lmax > 1e-300) {
        return UnitQuaternion::identity();
    }
    let rank = eig.eigenvalues.iter().filter(|&&l| l > 1e-10 * lmax).count();
    if rank == 1 {
        let a = eig.eigenvectors.column(imax).into_owned();
        let b = cross.transpose() * a;
        if b.norm() <= 1e-300 {
            return UnitQuaternion::identity();
        }
        return UnitQuaternion::rotation_between(&a, &b).unwrap_or_else(|| {
            // Antiparallel: half turn about a deterministic perpendicular.
            let helper = if a.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            let axis = nalgebra::Unit::new_normalize(a.cross(&helper));
            UnitQuaternion::from_axis_angle(&axis, std::f64::consts::PI)
        });
    }
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let v = v_t.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose();
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GncConfig {
    /// TLS residual threshold (length). `None` uses the voxel size.
    pub truncation: Option<f64>,
    pub mu_update_factor: f64,
    /// Maximum number of μ stages.
    pub max_iterations: usize,
    /// Largest per-pair surrogate weight change treated as converged.
    pub convergence_tol: f64,
}

impl Default for GncConfig {
    fn default() -> Self {
        Self {
            truncation: None,
            mu_update_factor: 1.4,
            max_iterations: 100,
            convergence_tol: 1e-6,
        }
    }
}

/// Alternations (weight update + alignment) allowed within one μ stage.
const MAX_STAGE_ALTERNATIONS: usize = 50;

/// One half-step of the GNC loop.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct GncStep {
    pub stage: usize,
    pub mu: f64,
    /// Surrogate objective `Σ w (m r² + Φ_μ(m))` after this half-step.
    pub objective: f64,
    /// Largest surrogate weight change in this step (zero for pose steps).
    pub weight_change: f64,
}

#[derive(Clone, Debug)]
pub struct GncResult {
    pub pose: Pose,
    /// Final TLS surrogate weights, one per correspondence pair.
    pub inlier_weights: Vec<f64>,
    pub log: Vec<GncStep>,
}

fn tls_weight(r2: f64, mu: f64, c2: f64) -> f64 {
    if r2 >= (mu + 1.0) / mu * c2 {
        0.0
    } else if r2 <= mu / (mu + 1.0) * c2 {
        1.0
    } else {
        ((c2 * mu * (mu + 1.0)) / r2).sqrt() - mu
    }
}

fn surrogate(w: &[f64], m: &[f64], r2: &[f64], mu: f64, c2: f64) -> f64 {
    w.iter()
        .zip(m)
        .zip(r2)
        .map(|((w, m), r2)| w * (m * r2 + mu * (1.0 - m) * c2 / (mu + m)))
        .sum()
}

/// Solves the TLS registration over the correspondence set.
pub fn gnc_solve(
    obj: &StructuredPointCloud,
    grid: &GridPoints,
    corr: &CorrespondenceSet,
    cfg: &GncConfig,
    init: Option<&Pose>,
) -> Result<GncResult> {
    if corr.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let c = cfg.truncation.unwrap_or(grid.voxel_size);
    if !(c.is_finite() && c > 0.0) || !(cfg.mu_update_factor > 1.0) {
        return Err(Error::InvalidInput(
            "GNC needs a positive truncation and a μ factor above one".into(),
        ));
    }
    let c2 = c * c;
    let src: Vec<Point3<f64>> = corr.pairs.iter().map(|p| obj.points()[p.point]).collect();
    let dst: Vec<Point3<f64>> = corr.pairs.iter().map(|p| grid.coords[p.grid]).collect();
    let w: Vec<f64> = corr.pairs.iter().map(|p| p.weight).collect();

    let mut pose = match init {
        Some(p) => *p,
        None => weighted_rigid_align(&src, &dst, &w)?,
    };
    let residuals = |pose: &Pose| -> Vec<f64> {
        let r = pose.rotation_matrix();
        let t = pose.translation();
        src.iter()
            .zip(&dst)
            .map(|(s, d)| (d - (r * s + t)).norm_squared())
            .collect()
    };

    let mut r2 = residuals(&pose);
    let r2_max = r2.iter().copied().fold(0.0, f64::max);
    let mut log = Vec::new();
    let mut m = vec![1.0; w.len()];
    if 2.0 * r2_max <= c2 {
        // Every residual is already an inlier for any μ.
        log.push(GncStep {
            stage: 0,
            mu: f64::INFINITY,
            objective: surrogate(&w, &m, &r2, 1.0, c2),
            weight_change: 0.0,
        });
        return Ok(GncResult {
            pose,
            inlier_weights: m,
            log,
        });
    }
    let mut mu = c2 / (2.0 * r2_max - c2);

    for stage in 0..cfg.max_iterations {
        let mut first_change = f64::INFINITY;
        for alt in 0..MAX_STAGE_ALTERNATIONS {
            let mut change = 0.0f64;
            for (mk, r2k) in m.iter_mut().zip(&r2) {
                let next = tls_weight(*r2k, mu, c2);
                change = change.max((next - *mk).abs());
                *mk = next;
            }
            if alt == 0 {
                first_change = change;
            }
            log.push(GncStep {
                stage,
                mu,
                objective: surrogate(&w, &m, &r2, mu, c2),
                weight_change: change,
            });
            let combined: Vec<f64> = w.iter().zip(&m).map(|(a, b)| a * b).collect();
            match weighted_rigid_align(&src, &dst, &combined) {
                Ok(next) => pose = next,
                // Every pair rejected: keep the last pose.
                Err(Error::ZeroWeightSum) => {
                    return Ok(GncResult {
                        pose,
                        inlier_weights: m,
                        log,
                    })
                }
                Err(e) => return Err(e),
            }
            r2 = residuals(&pose);
            log.push(GncStep {
                stage,
                mu,
                objective: surrogate(&w, &m, &r2, mu, c2),
                weight_change: 0.0,
            });
            if change < cfg.convergence_tol {
                break;
            }
        }
        let binary = m
            .iter()
            .all(|&x| x < cfg.convergence_tol || x > 1.0 - cfg.convergence_tol);
        if binary && first_change < cfg.convergence_tol {
            break;
        }
        mu *= cfg.mu_update_factor;
    }
    Ok(GncResult {
        pose,
        inlier_weights: m,
        log,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleConfig {
    pub likelihood: LikelihoodConfig,
    pub gnc: GncConfig,
    pub top_k: usize,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            likelihood: LikelihoodConfig::default(),
            gnc: GncConfig::default(),
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MleResult {
    pub pose: Pose,
    /// Optimizer objective at `pose`.
    pub objective: f64,
    pub log_likelihood: ExtReal,
    pub gnc: GncResult,
}

/// Hard-assignment polish of a pose. Every posed object point is matched
/// to its best-scoring grid point within `radius`, the pose is re-aligned
/// to those matches with unit weights, and this repeats until the
/// assignment stops changing. Points with no plausible candidate nearby are
/// left out. Returns `None` when fewer than three points find a match.
pub fn sharpen(
    obj: &StructuredPointCloud,
    grid: &GridPoints,
    costs: &CostMatrix,
    scene: &SceneField,
    start: &Pose,
    radius: f64,
    max_rounds: usize,
) -> Result<Option<Pose>> {
    let g = scene.geometry();
    let mut slot = vec![u32::MAX; g.cell_count()];
    for (j, &cell) in grid.cells.iter().enumerate() {
        slot[cell] = j as u32;
    }
    let reach = (radius / g.voxel_size()).ceil() as i64;
    let dims = g.dims();
    let r2 = radius * radius;
    let mut pose = *start;
    let mut previous: Vec<Option<usize>> = Vec::new();
    for _ in 0..max_rounds {
        let posed = pose.apply(obj.points());
        let assign: Vec<Option<usize>> = posed
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let rel = (q - g.origin()) / g.voxel_size();
                let base = [rel.x.floor() as i64, rel.y.floor() as i64, rel.z.floor() as i64];
                let mut best: Option<(usize, f64, f64)> = None;
                for dz in -reach..=reach {
                    for dy in -reach..=reach {
                        for dx in -reach..=reach {
                            let c = [base[0] + dx, base[1] + dy, base[2] + dz];
                            if (0..3).any(|a| c[a] < 0 || c[a] >= dims[a] as i64) {
                                continue;
                            }
                            let cell = g.flat_index([c[0] as usize, c[1] as usize, c[2] as usize]);
                            let j = slot[cell];
                            if j == u32::MAX {
                                continue;
                            }
                            let j = j as usize;
                            let dist = (grid.coords[j] - q).norm_squared();
                            if dist > r2 {
                                continue;
                            }
                            let score = costs.get(i, j);
                            let better = match best {
                                None => true,
                                Some((bj, bs, bd)) => {
                                    score > bs || (score == bs && (dist < bd || (dist == bd && j < bj)))
                                }
                            };
                            if better {
                                best = Some((j, score, dist));
                            }
                        }
                    }
                }
                best.filter(|b| b.1 >= costs.c_min / 2.0).map(|b| b.0)
            })
            .collect();
        if assign == previous {
            break;
        }
        let (src, dst): (Vec<_>, Vec<_>) = assign
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|j| (obj.points()[i], grid.coords[j])))
            .unzip();
        if src.len() < 3 {
            return Ok(None);
        }
        pose = weighted_rigid_align(&src, &dst, &vec![1.0; src.len()])?;
        previous = assign;
    }
    Ok(Some(pose))
}

/// Rounds of [`sharpen`] run after GNC.
const SHARPEN_ROUNDS: usize = 20;

/// Grid → costs → correspondences → GNC → hard-assignment polish. The
/// polished pose replaces the GNC pose only if it scores higher, and the
/// result is returned only if it scores at least as well as `init`
/// (identity when absent).
pub fn mle_estimate(
    obj: &StructuredPointCloud,
    scene: &SceneField,
    cls: &ClassifierField,
    cfg: &MleConfig,
    init: Option<&Pose>,
) -> Result<MleResult> {
    let grid = build_grid(scene)?;
    let costs = cost_matrix(obj, &grid, scene, cls, &cfg.likelihood)?;
    let corr = correspondences_from_costs(&costs, cfg.top_k)?;
    let gnc = gnc_solve(obj, &grid, &corr, &cfg.gnc, init)?;
    let score = |p: &Pose| objective_for_optimizer(obj, p, scene, cls, &cfg.likelihood);
    let radius = cfg.gnc.truncation.unwrap_or(grid.voxel_size);
    let mut pose = gnc.pose;
    let mut best = score(&pose);
    if let Some(p) = sharpen(obj, &grid, &costs, scene, &pose, radius, SHARPEN_ROUNDS)? {
        let s = score(&p);
        if s > best {
            pose = p;
            best = s;
        }
    }
    let fallback = init.copied().unwrap_or_default();
    let fallback_score = score(&fallback);
    if fallback_score > best {
        pose = fallback;
        best = fallback_score;
    }
    Ok(MleResult {
        pose,
        objective: best,
        log_likelihood: crate::likelihood::object_log_likelihood(
            obj,
            &pose,
            scene,
            cls,
            &cfg.likelihood,
        ),
        gnc,
    })
}
