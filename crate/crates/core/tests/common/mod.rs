//! Random instances and brute-force reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use posefield::scene::DEFAULT_C_MIN;
use posefield::{
    CellTag, ClassifierField, GridGeometry, Point3, Pose, SceneField, StructuredPointCloud,
    UnitQuaternion, Vector3,
};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn unit_vector(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q = unit_vector(rng, 4);
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
}

pub fn random_pose(rng: &mut impl Rng, spread: f64) -> Pose {
    let t = Vector3::from_fn(|_, _| rng.random_range(-spread..spread));
    Pose::from_rotation(random_rotation(rng), t)
}

/// Probabilities of the three cell tags in a random scene.
#[derive(Clone, Copy, Debug)]
pub struct TagMix {
    pub empty: f64,
    pub null: f64,
}

pub struct RandomScene {
    pub scene: SceneField,
    pub classifier: ClassifierField,
}

/// Scene and classifier on a random grid. Classifier values are a mix of
/// exact 0, exact `c_min` and values in between.
pub fn random_scene(rng: &mut impl Rng, d: usize, mix: TagMix) -> RandomScene {
    let dims = [
        rng.random_range(2..7),
        rng.random_range(2..7),
        rng.random_range(2..7),
    ];
    let v = rng.random_range(0.05..0.2);
    let origin = Point3::from(Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
    let g = GridGeometry::new(origin, v, dims).unwrap();
    let n = g.cell_count();
    let mut tags = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u: f64 = rng.random();
        let tag = if u < mix.empty {
            CellTag::Empty
        } else if u < mix.empty + mix.null {
            CellTag::Null
        } else {
            CellTag::Regular
        };
        tags.push(tag);
        if tag == CellTag::Regular {
            data.extend(unit_vector(rng, d).into_iter().map(|c| c as f32));
        } else {
            data.extend(std::iter::repeat_n(0.0f32, d));
        }
    }
    let c_min = DEFAULT_C_MIN;
    let values: Vec<f32> = (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => 0.0,
            1 => c_min as f32,
            _ => rng.random_range(c_min..0.0) as f32,
        })
        .collect();
    RandomScene {
        scene: SceneField::from_cells(g, d, tags, data).unwrap(),
        classifier: ClassifierField::new(g, values, c_min).unwrap(),
    }
}

/// `n` points within `radius` of the origin with random unit descriptors.
pub fn random_object(rng: &mut impl Rng, n: usize, d: usize, radius: f64) -> StructuredPointCloud {
    let pts: Vec<Point3<f64>> = (0..n)
        .map(|_| Point3::from(Vector3::from_fn(|_, _| rng.random_range(-radius..radius))))
        .collect();
    let desc: Vec<f64> = (0..n).flat_map(|_| unit_vector(rng, d)).collect();
    StructuredPointCloud::new(pts, desc, d).unwrap()
}

/// Pose putting the object origin somewhere inside (or just around) the
/// scene grid.
pub fn pose_in_grid(rng: &mut impl Rng, g: &GridGeometry) -> Pose {
    let lo = g.origin();
    let hi = g.max_corner();
    let t = Vector3::from_fn(|a, _| {
        let pad = 0.5 * g.voxel_size();
        rng.random_range(lo[a] - pad..hi[a] + pad)
    });
    Pose::from_rotation(random_rotation(rng), t)
}

/// Neighbor cells of `q` with their trilinear weights; `None` cells lie off
/// the grid. `None` overall when `q` is outside the grid box.
pub fn corners(g: &GridGeometry, q: &Point3<f64>) -> Option<Vec<(Option<usize>, f64)>> {
    let o = g.origin();
    let v = g.voxel_size();
    let dims = g.dims();
    let mut base = [0i64; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let rel = (q[a] - o[a]) / v;
        if rel < 0.0 || rel > dims[a] as f64 {
            return None;
        }
        let u = rel - 0.5;
        base[a] = u.floor() as i64;
        frac[a] = u - u.floor();
    }
    let mut out = Vec::with_capacity(8);
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let off = [dx, dy, dz];
                let mut w = 1.0;
                let mut cell = [0usize; 3];
                let mut inside = true;
                for a in 0..3 {
                    w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
                    let i = base[a] + off[a];
                    if i < 0 || i >= dims[a] as i64 {
                        inside = false;
                    } else {
                        cell[a] = i as usize;
                    }
                }
                let idx = inside.then(|| cell[0] + dims[0] * (cell[1] + dims[1] * cell[2]));
                out.push((idx, w));
            }
        }
    }
    Some(out)
}

/// True when `q` touches an Empty cell with nonzero weight.
pub fn touches_empty(scene: &SceneField, q: &Point3<f64>) -> bool {
    corners(scene.geometry(), q).is_some_and(|cs| {
        cs.iter()
            .any(|&(idx, w)| w > 0.0 && idx.is_some_and(|i| scene.tags()[i] == CellTag::Empty))
    })
}

/// Reference per-point term; `None` for observed free space.
pub fn oracle_point(
    q: &Point3<f64>,
    z: &[f64],
    scene: &SceneField,
    cls: &ClassifierField,
    beta: f64,
) -> Option<f64> {
    let c_min = cls.c_min();
    let Some(cs) = corners(scene.geometry(), q) else {
        return Some(c_min);
    };
    if touches_empty(scene, q) {
        return None;
    }
    let d = scene.dim();
    let mut acc = vec![0.0; d];
    let mut count = 0;
    let mut log_p = 0.0;
    for &(idx, w) in &cs {
        if w <= 0.0 {
            continue;
        }
        log_p += w * idx.map_or(c_min, |i| cls.values()[i] as f64);
        if let Some(i) = idx {
            if scene.tags()[i] == CellTag::Regular {
                count += 1;
                for (a, c) in acc.iter_mut().zip(scene.cell_descriptor(i)) {
                    *a += w * *c as f64;
                }
            }
        }
    }
    // A single regular neighbor is reproduced as stored.
    let sim = if count == 0 {
        0.0
    } else if count == 1 {
        let i = cs
            .iter()
            .find(|&&(idx, w)| w > 0.0 && idx.is_some_and(|i| scene.tags()[i] == CellTag::Regular))
            .and_then(|&(idx, _)| idx)
            .unwrap();
        scene.cell_descriptor(i).iter().zip(z).map(|(a, b)| *a as f64 * b).sum()
    } else {
        let n = acc.iter().map(|c| c * c).sum::<f64>().sqrt();
        acc.iter().zip(z).map(|(a, b)| a / n * b).sum()
    };
    Some(log_p.clamp(c_min, 0.0) + beta * sim)
}

/// Reference object log-likelihood; `None` for infeasible poses.
pub fn oracle_log_lik(
    obj: &StructuredPointCloud,
    pose: &Pose,
    scene: &SceneField,
    cls: &ClassifierField,
    beta: f64,
) -> Option<f64> {
    let r = pose.rotation_matrix();
    let t = pose.translation();
    let mut total = 0.0;
    for i in 0..obj.len() {
        let q = Point3::from(r * obj.points()[i].coords + t);
        total += oracle_point(&q, obj.descriptor(i), scene, cls, beta)?;
    }
    Some(total)
}

/// Kolmogorov–Smirnov distance of angles in `[-π, π)` from the uniform law.
pub fn ks_uniform_angle(angles: &[f64]) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = angles.to_vec();
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    a.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let f = (x + PI) / TAU;
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Rotation and translation error to the closest symmetry-equivalent of
/// `gt` (the group acts in the object frame).
pub fn symmetric_error(est: &Pose, gt: &Pose, group: &[Pose]) -> (f64, f64) {
    group
        .iter()
        .map(|g| {
            let target = gt.compose(g);
            (est.rotation_distance(&target), est.translation_distance(&target))
        })
        .fold((f64::INFINITY, f64::INFINITY), |a, b| if b.0 < a.0 { b } else { a })
}

/// Whether any pose on the 9³ × 16³ grid around `gt` scores above `gt`
/// (by more than rounding).
/// Translations step one voxel; rotations are `gt ∘ R(roll, pitch, yaw)`
/// with every angle on a 16-point circle. Partial sums are abandoned once
/// the best possible completion (`β` per remaining point) falls short.
pub fn brute_force_beats(
    obj: &StructuredPointCloud,
    scene: &SceneField,
    cls: &ClassifierField,
    gt: &Pose,
    beta: f64,
) -> Option<(Pose, f64)> {
    let l_gt = oracle_log_lik(obj, gt, scene, cls, beta).expect("gt is feasible");
    let v = scene.geometry().voxel_size();
    let n = obj.len();
    let angle = |k: usize| std::f64::consts::TAU * k as f64 / 16.0;
    for a in 0..16 {
        for b in 0..16 {
            for c in 0..16 {
                let rot = Pose::from_euler(
                    posefield::EulerAngles {
                        roll: angle(a),
                        pitch: angle(b),
                        yaw: angle(c),
                    },
                    Vector3::zeros(),
                );
                let base = gt.compose(&rot);
                let r = base.rotation_matrix();
                let rotated: Vec<Vector3<f64>> = obj.points().iter().map(|p| r * p.coords).collect();
                for i in 0..9 {
                    for j in 0..9 {
                        for k in 0..9 {
                            let shift = Vector3::new(i as f64 - 4.0, j as f64 - 4.0, k as f64 - 4.0) * v;
                            let t = base.translation() + shift;
                            let mut total = 0.0;
                            let mut pruned = false;
                            for (m, rp) in rotated.iter().enumerate() {
                                let q = Point3::from(rp + t);
                                match oracle_point(&q, obj.descriptor(m), scene, cls, beta) {
                                    None => {
                                        pruned = true;
                                        break;
                                    }
                                    Some(x) => total += x,
                                }
                                if total + (n - m - 1) as f64 * beta <= l_gt {
                                    pruned = true;
                                    break;
                                }
                            }
                            if !pruned && total > l_gt + 1e-6 {
                                return Some((Pose::from_rotation(*base.rotation(), t), total));
                            }
                        }
                    }
                }
            }
        }
    }
    None
}
