//! Synthetic scenes with known ground truth.
//!
//! An object is sampled in its own frame, given smooth descriptors that
//! depend on cylindrical surface coordinates, and a posed copy is placed in
//! a scene on top of a table plane. Occluded scene space is unobserved
//! (`Null`); free space above the table away from any surface is `Empty`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{best_buddy_classifier, BestBuddyConfig, DEFAULT_BEST_BUDDY_THRESHOLD};
use crate::cloud::StructuredPointCloud;
use crate::error::{Error, Result};
use crate::scene::{
    build_scene_field_on, CellTag, ClassifierField, DescriptorValue, GridGeometry, SceneField,
    DEFAULT_C_MIN,
};
use crate::se3::Pose;

/// Object shape, in the object frame (z up, base at `z = 0`, symmetry axis
/// through the origin).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectKind {
    /// Open cylinder shell with a base disk and an optional handle on +x.
    Mug {
        radius: f64,
        height: f64,
        #[serde(default)]
        handle: Option<Handle>,
    },
    /// Closed box surface sampled on a lattice centered on the z axis.
    Box { size: [f64; 3] },
    /// Explicit points.
    Custom { points: Vec<[f64; 3]> },
}

/// Semicircular handle loop attached to a mug between two heights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handle {
    pub z_min: f64,
    pub z_max: f64,
    /// How far the loop sticks out from the shell.
    pub reach: f64,
}

/// World-frame region whose scene content is unobserved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Occlusion {
    /// Points with `normal · x > offset`.
    HalfSpace { normal: [f64; 3], offset: f64 },
    Aabb { lo: [f64; 3], hi: [f64; 3] },
}

impl Occlusion {
    pub fn contains(&self, x: &Point3<f64>) -> bool {
        match self {
            Occlusion::HalfSpace { normal, offset } => {
                Vector3::from(*normal).dot(&x.coords) > *offset
            }
            Occlusion::Aabb { lo, hi } => (0..3).all(|a| x[a] >= lo[a] && x[a] <= hi[a]),
        }
    }
}

fn default_dim() -> usize {
    16
}
fn default_true() -> bool {
    true
}
fn default_margin() -> Option<u32> {
    Some(1)
}
fn default_c_min() -> f64 {
    DEFAULT_C_MIN
}
fn default_threshold() -> f64 {
    DEFAULT_BEST_BUDDY_THRESHOLD
}
fn default_frequency() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub object: ObjectKind,
    /// `k`-fold descriptor symmetry about z; absent for full rotational
    /// symmetry (descriptors depend on height and radius only).
    #[serde(default)]
    pub symmetry_order: Option<u32>,
    #[serde(default = "default_dim")]
    pub descriptor_dim: usize,
    /// Std of Gaussian noise added to scene descriptors before
    /// renormalization.
    #[serde(default)]
    pub descriptor_noise: f64,
    #[serde(default)]
    pub occlusion: Option<Occlusion>,
    #[serde(default)]
    pub clutter_points: usize,
    pub voxel_size: f64,
    pub gt_pose: Pose,
    #[serde(default)]
    pub seed: u64,
    /// Surface sampling step; half a voxel when absent.
    #[serde(default)]
    pub point_spacing: Option<f64>,
    #[serde(default = "default_true")]
    pub table: bool,
    /// Point-free voxels farther than this (Chebyshev, in voxels) from any
    /// occupied voxel are observed free space. Absent: no free space.
    #[serde(default = "default_margin")]
    pub empty_margin_voxels: Option<u32>,
    #[serde(default = "default_c_min")]
    pub c_min: f64,
    #[serde(default = "default_threshold")]
    pub classifier_threshold: f64,
    #[serde(default)]
    pub classifier_tolerance: f64,
    #[serde(default)]
    pub classifier_dilation: usize,
    /// Scale of the random frequencies mapping surface coordinates to
    /// descriptors; larger is more distinctive and less smooth.
    #[serde(default = "default_frequency")]
    pub descriptor_frequency: f64,
}

impl SynthSpec {
    /// Occluded-handle mug with rotationally symmetric descriptors.
    pub fn mug() -> Self {
        let v = 0.01;
        let gt = Pose::from_axis_angle(Vector3::z(), 0.7, Vector3::new(0.013, -0.021, 0.0025));
        let tz = gt.translation().z;
        Self {
            object: ObjectKind::Mug {
                radius: 0.04,
                height: 0.12,
                handle: Some(Handle {
                    z_min: 0.05,
                    z_max: 0.07,
                    reach: 0.025,
                }),
            },
            symmetry_order: None,
            descriptor_dim: 16,
            descriptor_noise: 0.0,
            occlusion: Some(Occlusion::Aabb {
                lo: [-10.0, -10.0, tz + 0.0375],
                hi: [10.0, 10.0, tz + 0.0875],
            }),
            clutter_points: 40,
            voxel_size: v,
            gt_pose: gt,
            seed: 7,
            point_spacing: None,
            table: true,
            empty_margin_voxels: Some(3),
            c_min: DEFAULT_C_MIN,
            classifier_threshold: DEFAULT_BEST_BUDDY_THRESHOLD,
            classifier_tolerance: 0.05,
            classifier_dilation: 3,
            descriptor_frequency: 1.5,
        }
    }

    /// Mug with descriptors unique over its surface, fully observed.
    pub fn unique() -> Self {
        let gt = Pose::from_axis_angle(
            Vector3::new(0.2, -0.1, 1.0),
            0.8,
            Vector3::new(-0.012, 0.017, 0.02),
        );
        Self {
            object: ObjectKind::Mug {
                radius: 0.04,
                height: 0.1,
                handle: Some(Handle {
                    z_min: 0.04,
                    z_max: 0.07,
                    reach: 0.025,
                }),
            },
            symmetry_order: Some(1),
            occlusion: None,
            clutter_points: 40,
            seed: 11,
            gt_pose: gt,
            empty_margin_voxels: None,
            classifier_tolerance: 0.0,
            descriptor_frequency: 3.0,
            ..Self::mug()
        }
    }

    /// Square box with exact 4-fold symmetry on a dyadic grid.
    pub fn box4() -> Self {
        let v = 1.0 / 64.0;
        Self {
            object: ObjectKind::Box {
                size: [6.0 * v, 6.0 * v, 4.0 * v],
            },
            symmetry_order: Some(4),
            occlusion: None,
            clutter_points: 0,
            voxel_size: v,
            gt_pose: Pose::from_translation(Vector3::new(8.0 * v, -4.0 * v, 2.0 * v)),
            seed: 3,
            point_spacing: Some(v),
            classifier_tolerance: 1e-6,
            classifier_dilation: 1,
            ..Self::mug()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return bad(format!("voxel_size must be positive, got {}", self.voxel_size));
        }
        if let Some(s) = self.point_spacing {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("point_spacing must be positive, got {s}"));
            }
        }
        if self.symmetry_order == Some(0) {
            return bad("symmetry_order must be at least 1".into());
        }
        if self.descriptor_dim < 2 {
            return bad(format!("descriptor_dim must be at least 2, got {}", self.descriptor_dim));
        }
        if !(self.descriptor_noise >= 0.0 && self.descriptor_noise.is_finite()) {
            return bad("descriptor_noise must be nonnegative".into());
        }
        if !(self.c_min.is_finite() && self.c_min < 0.0) {
            return bad("c_min must be negative".into());
        }
        if !(self.descriptor_frequency.is_finite() && self.descriptor_frequency > 0.0) {
            return bad("descriptor_frequency must be positive".into());
        }
        if !(self.classifier_tolerance.is_finite() && self.classifier_tolerance >= 0.0) {
            return bad("classifier_tolerance must be nonnegative".into());
        }
        match &self.object {
            ObjectKind::Mug {
                radius,
                height,
                handle,
            } => {
                if !(*radius > 0.0 && *height > 0.0 && radius.is_finite() && height.is_finite()) {
                    return bad("mug radius and height must be positive".into());
                }
                if let Some(h) = handle {
                    if !(h.z_min >= 0.0 && h.z_min < h.z_max && h.z_max <= *height && h.reach > 0.0)
                    {
                        return bad("handle must lie within the mug height".into());
                    }
                }
            }
            ObjectKind::Box { size } => {
                if size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return bad("box sizes must be positive".into());
                }
                if matches!(self.symmetry_order, Some(k) if k > 2) && size[0] != size[1] {
                    return bad("a box has at most 2-fold symmetry unless its base is square".into());
                }
            }
            ObjectKind::Custom { points } => {
                if points.is_empty() {
                    return bad("custom object has no points".into());
                }
                if points.iter().flatten().any(|c| !c.is_finite()) {
                    return bad("custom object has non-finite points".into());
                }
            }
        }
        let s = self.spacing();
        if self.sample_count_estimate() / s.max(1e-300) > 5e6 {
            return bad("object would need too many sample points".into());
        }
        Ok(())
    }

    fn spacing(&self) -> f64 {
        self.point_spacing.unwrap_or(self.voxel_size / 2.0)
    }

    /// Rough surface area over spacing, used to reject absurd specs.
    fn sample_count_estimate(&self) -> f64 {
        let s = self.spacing();
        match &self.object {
            ObjectKind::Mug { radius, height, .. } => {
                (TAU * radius * height + PI * radius * radius) / s
            }
            ObjectKind::Box { size } => 2.0 * (size[0] * size[1] + size[1] * size[2] + size[0] * size[2]) / s,
            ObjectKind::Custom { .. } => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Body,
    Handle,
}

#[derive(Clone, Debug)]
pub struct SynthInstance {
    pub object: StructuredPointCloud,
    pub scene: SceneField,
    pub classifier: ClassifierField,
    pub gt_pose: Pose,
    /// Rotations about the object z axis (in the object frame) under which
    /// the body descriptors are invariant. For full rotational symmetry this
    /// is a sample of twelve.
    pub symmetry_group: Vec<Pose>,
    pub continuous_symmetry: bool,
    pub parts: Vec<Part>,
    /// Object points whose ground-truth location is occluded.
    pub occluded: Vec<usize>,
}

/// Number of descriptor features (height, radius, two angular, handle,
/// table).
const FEATURES: usize = 6;

struct DescriptorMap {
    freq: Vec<[f64; FEATURES]>,
    phase: Vec<f64>,
}

impl DescriptorMap {
    fn new(d: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, scale).expect("scale validated");
        let freq = (0..d)
            .map(|_| std::array::from_fn(|_| normal.sample(rng)))
            .collect();
        let phase = (0..d).map(|_| rng.random_range(0.0..TAU)).collect();
        Self { freq, phase }
    }

    fn descriptor(&self, u: &[f64; FEATURES]) -> Vec<f64> {
        let mut z: Vec<f64> = self
            .freq
            .iter()
            .zip(&self.phase)
            .map(|(w, ph)| {
                let mut a = *ph;
                for k in 0..FEATURES {
                    a += w[k] * u[k];
                }
                a.cos()
            })
            .collect();
        let n = z.iter().map(|c| c * c).sum::<f64>().sqrt();
        // A zero vector cannot happen for generic phases, but stay total.
        if n > 0.0 {
            z.iter_mut().for_each(|c| *c /= n);
        } else {
            z[0] = 1.0;
        }
        // Store at single precision so files reproduce the object exactly.
        z.iter_mut().for_each(|c| *c = *c as f32 as f64);
        z
    }
}

/// `(cos kθ, sin kθ)` of the point's azimuth, by repeated complex squaring
/// so that quarter and half turns map to bit-identical values.
fn angular(k: u32, x: f64, y: f64) -> (f64, f64) {
    let r = (x * x + y * y).sqrt();
    if r < 1e-12 {
        return (0.0, 0.0);
    }
    let mut base = (x / r, y / r);
    let mut acc = (1.0, 0.0);
    let mut e = k;
    let mul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let mut first = true;
    while e > 0 {
        if e & 1 == 1 {
            acc = if first { base } else { mul(acc, base) };
            first = false;
        }
        e >>= 1;
        if e > 0 {
            base = mul(base, base);
        }
    }
    acc
}

struct Extents {
    height: f64,
    radius: f64,
}

fn extents(points: &[Point3<f64>]) -> Extents {
    let height = points.iter().map(|p| p.z.abs()).fold(0.0, f64::max).max(1e-9);
    let radius = points
        .iter()
        .map(|p| (p.x * p.x + p.y * p.y).sqrt())
        .fold(0.0, f64::max)
        .max(1e-9);
    Extents { height, radius }
}

fn features(p: &Point3<f64>, part: Part, k: Option<u32>, ext: &Extents) -> [f64; FEATURES] {
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    let (c, s) = match k {
        Some(k) => angular(k, p.x, p.y),
        None => (0.0, 0.0),
    };
    let handle = if part == Part::Handle { 1.0 } else { 0.0 };
    [p.z / ext.height, rho / ext.radius, c, s, handle, 0.0]
}

const TABLE_FEATURES: [f64; FEATURES] = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];

/// Ring of `n` points (rounded up to a multiple of `k`) at radius `r`.
fn ring(r: f64, z: f64, s: f64, k: u32, out: &mut Vec<Point3<f64>>) {
    let k = k.max(1) as usize;
    let n = (((TAU * r / s).ceil() as usize).max(1)).div_ceil(k) * k;
    for j in 0..n {
        let th = TAU * j as f64 / n as f64;
        out.push(Point3::new(r * th.cos(), r * th.sin(), z));
    }
}

/// Surface samples of the object in its own frame.
fn sample_object(spec: &SynthSpec) -> Vec<(Point3<f64>, Part)> {
    let s = spec.spacing();
    let k = spec.symmetry_order.unwrap_or(1);
    let mut out = Vec::new();
    match &spec.object {
        ObjectKind::Mug {
            radius,
            height,
            handle,
        } => {
            let mut body = Vec::new();
            let rings = (height / s).ceil() as usize;
            for l in 0..=rings {
                let z = height * l as f64 / rings as f64;
                ring(*radius, z, s, k, &mut body);
            }
            let disks = (radius / s).floor() as usize;
            body.push(Point3::origin());
            for l in 1..disks {
                ring(radius * l as f64 / disks as f64, 0.0, s, k, &mut body);
            }
            out.extend(body.into_iter().map(|p| (p, Part::Body)));
            if let Some(h) = handle {
                let zc = 0.5 * (h.z_min + h.z_max);
                let a = 0.5 * (h.z_max - h.z_min);
                let arc = PI * a.max(h.reach);
                let n = ((arc / s).ceil() as usize).max(2);
                for j in 0..=n {
                    let phi = PI * j as f64 / n as f64;
                    let x = radius + h.reach * phi.sin();
                    let z = zc + a * phi.cos();
                    for dy in [-0.5 * s, 0.0, 0.5 * s] {
                        out.push((Point3::new(x, dy, z), Part::Handle));
                    }
                }
            }
        }
        ObjectKind::Box { size } => {
            let n: [usize; 3] = std::array::from_fn(|a| ((size[a] / s).round() as usize).max(1));
            let coord = |a: usize, i: usize| -> f64 {
                let step = size[a] / n[a] as f64;
                let start = if a == 2 { 0.0 } else { -size[a] / 2.0 };
                start + step * (i as f64 + 0.5)
            };
            for kz in 0..n[2] {
                for jy in 0..n[1] {
                    for ix in 0..n[0] {
                        let boundary = ix == 0
                            || jy == 0
                            || kz == 0
                            || ix + 1 == n[0]
                            || jy + 1 == n[1]
                            || kz + 1 == n[2];
                        if boundary {
                            let p = Point3::new(coord(0, ix), coord(1, jy), coord(2, kz));
                            out.push((p, Part::Body));
                        }
                    }
                }
            }
        }
        ObjectKind::Custom { points } => {
            out.extend(points.iter().map(|p| (Point3::from(*p), Part::Body)));
        }
    }
    for (p, _) in &mut out {
        *p = p.map(|c| c as f32 as f64);
    }
    out
}

fn unit_noise(z: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return z.to_vec();
    }
    let mut v: Vec<f64> = z
        .iter()
        .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c /= n);
        v
    } else {
        z.to_vec()
    }
}

/// Builds the synthetic instance described by `spec`. Deterministic given
/// the spec (including its seed).
pub fn generate(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.descriptor_dim;
    let v = spec.voxel_size;
    let map = DescriptorMap::new(d, spec.descriptor_frequency, &mut rng);

    let samples = sample_object(spec);
    let pts: Vec<Point3<f64>> = samples.iter().map(|(p, _)| *p).collect();
    let parts: Vec<Part> = samples.iter().map(|(_, part)| *part).collect();
    let ext = extents(&pts);
    let mut desc = Vec::with_capacity(pts.len() * d);
    for (p, part) in &samples {
        desc.extend(map.descriptor(&features(p, *part, spec.symmetry_order, &ext)));
    }
    let object = StructuredPointCloud::new(pts.clone(), desc, d)
        .map_err(|e| Error::InvalidSpec(format!("object construction failed: {e}")))?;

    let gt = spec.gt_pose;
    let placed = gt.apply(&pts);
    let visible = |x: &Point3<f64>| spec.occlusion.is_none_or(|o| !o.contains(x));
    let mut scene_pts = Vec::new();
    let mut scene_desc = Vec::new();
    let occluded: Vec<usize> = (0..placed.len()).filter(|&i| !visible(&placed[i])).collect();
    for (i, q) in placed.iter().enumerate() {
        if visible(q) {
            scene_pts.push(*q);
            scene_desc.extend(unit_noise(object.descriptor(i), spec.descriptor_noise, &mut rng));
        }
    }

    // The table and the free-space footprint are centered on the object's
    // vertical axis and wide enough for any rotation about it.
    let (lo, hi) = crate::scene::bounding_box(&placed)?;
    let axis = gt.translation();
    let radius = placed
        .iter()
        .map(|p| (p.x - axis.x).hypot(p.y - axis.y))
        .fold(0.0, f64::max);
    let keep_out = radius + 2.0 * v;
    let reach = radius + 4.0 * v;
    let table_z = lo.z - 2.0 * v;
    let center = Point3::new(axis.x, axis.y, table_z);
    if spec.table {
        let tdesc = map.descriptor(&TABLE_FEATURES);
        let s = spec.spacing();
        let n = (2.0 * reach / s).ceil() as usize;
        for j in 0..=n {
            for i in 0..=n {
                let p = Point3::new(
                    center.x - reach + 2.0 * reach * i as f64 / n as f64,
                    center.y - reach + 2.0 * reach * j as f64 / n as f64,
                    table_z,
                );
                if visible(&p) {
                    scene_pts.push(p);
                    scene_desc.extend(unit_noise(&tdesc, spec.descriptor_noise, &mut rng));
                }
            }
        }
    }
    let mut placed_clutter = 0;
    let mut attempts = 0;
    while placed_clutter < spec.clutter_points && attempts < 100 * spec.clutter_points.max(1) {
        attempts += 1;
        let p = Point3::new(
            center.x + rng.random_range(-reach..reach),
            center.y + rng.random_range(-reach..reach),
            table_z + v + rng.random_range(0.0..(hi.z - lo.z).max(v)),
        );
        let dxy = ((p.x - center.x).powi(2) + (p.y - center.y).powi(2)).sqrt();
        if dxy < keep_out || !visible(&p) {
            continue;
        }
        let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = raw.iter().map(|c: &f64| c * c).sum::<f64>().sqrt();
        scene_pts.push(p);
        scene_desc.extend(raw.iter().map(|c| c / n));
        placed_clutter += 1;
    }

    let scene_cloud = StructuredPointCloud::new(scene_pts, scene_desc, d)
        .map_err(|e| Error::InvalidSpec(format!("scene construction failed: {e}")))?;
    let (slo, shi) = crate::scene::bounding_box(scene_cloud.points())?;
    let geometry = GridGeometry::covering(slo, shi, v)?;
    let occupied = occupancy(&scene_cloud, &geometry);
    let near = match spec.empty_margin_voxels {
        Some(m) => dilate(&occupied, &geometry, m as usize),
        None => vec![true; occupied.len()],
    };
    let observed_empty = |cell: [usize; 3]| {
        let idx = geometry.flat_index(cell);
        if near[idx] {
            return false;
        }
        let c = geometry.center(cell);
        if !visible(&c) {
            return false;
        }
        !spec.table || (c.z > table_z + v && (c.x - center.x).abs() <= reach && (c.y - center.y).abs() <= reach)
    };
    let scene = build_scene_field_on(&scene_cloud, geometry, observed_empty)?;

    let classifier = best_buddy_classifier(
        &object,
        &scene,
        spec.classifier_threshold,
        &BestBuddyConfig {
            c_min: spec.c_min,
            tolerance: spec.classifier_tolerance,
            dilation: spec.classifier_dilation,
        },
    )?;

    let (symmetry_group, continuous) = match spec.symmetry_order {
        Some(k) => ((0..k).map(|m| Pose::rot_z(TAU * m as f64 / k as f64)).collect(), false),
        None => ((0..12).map(|m| Pose::rot_z(TAU * m as f64 / 12.0)).collect(), true),
    };

    for (i, q) in placed.iter().enumerate() {
        if visible(q) && !matches!(scene.query_descriptor(q), DescriptorValue::Regular(_)) {
            return Err(Error::InvalidSpec(format!(
                "visible object point {i} does not land on observed surface; \
                 increase the sampling density or the empty margin"
            )));
        }
    }

    Ok(SynthInstance {
        object,
        scene,
        classifier,
        gt_pose: gt,
        symmetry_group,
        continuous_symmetry: continuous,
        parts,
        occluded,
    })
}

fn occupancy(cloud: &StructuredPointCloud, g: &GridGeometry) -> Vec<bool> {
    let mut occ = vec![false; g.cell_count()];
    for p in cloud.points() {
        if let Some(c) = g.voxel_of(p) {
            occ[g.flat_index(c)] = true;
        }
    }
    occ
}

fn dilate(mask: &[bool], g: &GridGeometry, r: usize) -> Vec<bool> {
    let [nx, ny, nz] = g.dims();
    let mut out = vec![false; mask.len()];
    for (idx, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        let [i, j, k] = g.unflatten(idx);
        for kk in k.saturating_sub(r)..=(k + r).min(nz - 1) {
            for jj in j.saturating_sub(r)..=(j + r).min(ny - 1) {
                for ii in i.saturating_sub(r)..=(i + r).min(nx - 1) {
                    out[g.flat_index([ii, jj, kk])] = true;
                }
            }
        }
    }
    out
}

impl SynthInstance {
    /// Number of scene cells with each tag, as `(empty, null, regular)`.
    pub fn tag_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for t in self.scene.tags() {
            match t {
                CellTag::Empty => c.0 += 1,
                CellTag::Null => c.1 += 1,
                CellTag::Regular => c.2 += 1,
            }
        }
        c
    }

    /// Indices of handle points.
    pub fn handle_points(&self) -> Vec<usize> {
        (0..self.parts.len()).filter(|&i| self.parts[i] == Part::Handle).collect()
    }
}
