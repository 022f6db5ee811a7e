//! Pose log-likelihood of a structured pointcloud against a scene.
//!
//! Each object point `i` placed at `q_i = R p_i + t` contributes
//! `log p_O(q_i) + β · f_scn(q_i)ᵀ z_i`; the object score is the sum over
//! points. The normalization constant is never computed.

use nalgebra::Point3;

use crate::cloud::StructuredPointCloud;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::scene::{ClassifierField, SceneField};
use crate::se3::Pose;

pub const DEFAULT_BETA: f64 = 10.0;
pub const DEFAULT_LOG_FLOOR: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LikelihoodConfig {
    /// Temperature scaling descriptor similarity into log-density.
    pub beta: f64,
    /// Finite value reported to optimizers for impossible poses.
    pub log_floor: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }
}

impl LikelihoodConfig {
    /// Checks `beta > 0` and that `log_floor` is below every feasible score
    /// of an `n`-point object.
    pub fn validate_for(&self, n: usize, c_min: f64) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidInput(format!("beta must be positive, got {}", self.beta)));
        }
        let lowest = n as f64 * (c_min - self.beta);
        if !(self.log_floor.is_finite() && self.log_floor < lowest) {
            return Err(Error::InvalidInput(format!(
                "log_floor {} must be below the lowest feasible score {lowest}",
                self.log_floor
            )));
        }
        Ok(())
    }
}

/// Log localization density of one point with descriptor `z` at `q`.
pub fn point_log_loc(
    q: &Point3<f64>,
    z: &[f64],
    scene: &SceneField,
    cls: &ClassifierField,
    cfg: &LikelihoodConfig,
) -> ExtReal {
    let mut scratch = vec![0.0; scene.dim()];
    point_term(q, z, scene, cls, cfg.beta, &mut scratch)
}

#[inline]
fn point_term(
    q: &Point3<f64>,
    z: &[f64],
    scene: &SceneField,
    cls: &ClassifierField,
    beta: f64,
    scratch: &mut [f64],
) -> ExtReal {
    match scene.similarity_at(q, z, scratch) {
        ExtReal::NegInf => ExtReal::NegInf,
        ExtReal::Finite(s) => ExtReal::Finite(cls.query(q) + beta * s),
    }
}

/// Checks that an object, scene and classifier can be evaluated together.
pub fn check_compatible(
    obj: &StructuredPointCloud,
    scene: &SceneField,
    cls: &ClassifierField,
) -> Result<()> {
    if scene.geometry() != cls.geometry() {
        return Err(Error::GeometryMismatch(
            "scene and classifier grids differ".into(),
        ));
    }
    if obj.dim() != scene.dim() {
        return Err(Error::InvalidInput(format!(
            "object descriptors have dimension {} but the scene has {}",
            obj.dim(),
            scene.dim()
        )));
    }
    Ok(())
}

/// Sum of [`point_log_loc`] over the posed object; `NegInf` as soon as any
/// point falls in observed free space.
pub fn object_log_likelihood(
    obj: &StructuredPointCloud,
    pose: &Pose,
    scene: &SceneField,
    cls: &ClassifierField,
    cfg: &LikelihoodConfig,
) -> ExtReal {
    let mut scratch = vec![0.0; scene.dim()];
    eval_with(obj, pose, scene, cls, cfg.beta, &mut scratch)
}

fn eval_with(
    obj: &StructuredPointCloud,
    pose: &Pose,
    scene: &SceneField,
    cls: &ClassifierField,
    beta: f64,
    scratch: &mut [f64],
) -> ExtReal {
    let r = pose.rotation_matrix();
    let t = pose.translation();
    let mut total = 0.0;
    for (p, z) in obj.iter() {
        let q = r * p + t;
        match point_term(&q, z, scene, cls, beta, scratch) {
            ExtReal::NegInf => return ExtReal::NegInf,
            ExtReal::Finite(v) => total += v,
        }
    }
    ExtReal::Finite(total)
}

/// [`object_log_likelihood`] with `NegInf` replaced by `cfg.log_floor`.
pub fn objective_for_optimizer(
    obj: &StructuredPointCloud,
    pose: &Pose,
    scene: &SceneField,
    cls: &ClassifierField,
    cfg: &LikelihoodConfig,
) -> f64 {
    object_log_likelihood(obj, pose, scene, cls, cfg).finite_or(cfg.log_floor)
}

/// An object, scene and classifier bundled for repeated pose evaluation.
#[derive(Clone, Copy, Debug)]
pub struct Model<'a> {
    pub object: &'a StructuredPointCloud,
    pub scene: &'a SceneField,
    pub classifier: &'a ClassifierField,
    pub config: LikelihoodConfig,
}

impl<'a> Model<'a> {
    pub fn new(
        object: &'a StructuredPointCloud,
        scene: &'a SceneField,
        classifier: &'a ClassifierField,
        config: LikelihoodConfig,
    ) -> Result<Self> {
        check_compatible(object, scene, classifier)?;
        config.validate_for(object.len(), classifier.c_min())?;
        Ok(Self {
            object,
            scene,
            classifier,
            config,
        })
    }

    pub fn log_likelihood(&self, pose: &Pose) -> ExtReal {
        object_log_likelihood(self.object, pose, self.scene, self.classifier, &self.config)
    }

    pub fn objective(&self, pose: &Pose) -> f64 {
        self.log_likelihood(pose).finite_or(self.config.log_floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{CellTag, GridGeometry, DEFAULT_C_MIN};
    use approx::assert_abs_diff_eq;

    /// Three cells along x: Regular (z = e0), Null, Empty.
    fn fixture() -> (SceneField, ClassifierField) {
        let g = GridGeometry::new(Point3::origin(), 1.0, [3, 1, 1]).unwrap();
        let scene = SceneField::from_cells(
            g,
            2,
            vec![CellTag::Regular, CellTag::Null, CellTag::Empty],
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let cls = ClassifierField::new(g, vec![0.0, DEFAULT_C_MIN as f32, 0.0], DEFAULT_C_MIN)
            .unwrap();
        (scene, cls)
    }

    #[test]
    fn point_terms() {
        let (scene, cls) = fixture();
        let cfg = LikelihoodConfig::default();
        let z = [1.0, 0.0];
        let at = |i| scene.geometry().center([i, 0, 0]);
        assert_eq!(point_log_loc(&at(0), &z, &scene, &cls, &cfg), ExtReal::Finite(10.0));
        assert_eq!(point_log_loc(&at(1), &z, &scene, &cls, &cfg), ExtReal::Finite(DEFAULT_C_MIN));
        assert_eq!(point_log_loc(&at(2), &z, &scene, &cls, &cfg), ExtReal::NegInf);
    }

    #[test]
    fn object_sum_and_infeasible() {
        let (scene, cls) = fixture();
        let cfg = LikelihoodConfig::default();
        let c = scene.geometry().center([0, 0, 0]);
        let obj = StructuredPointCloud::new(vec![c, c], vec![1.0, 0.0, 1.0, 0.0], 2).unwrap();
        assert_eq!(
            object_log_likelihood(&obj, &Pose::identity(), &scene, &cls, &cfg),
            ExtReal::Finite(20.0)
        );
        let into_empty = Pose::from_translation(nalgebra::Vector3::new(2.0, 0.0, 0.0));
        assert!(object_log_likelihood(&obj, &into_empty, &scene, &cls, &cfg).is_neg_inf());
        assert_eq!(objective_for_optimizer(&obj, &into_empty, &scene, &cls, &cfg), cfg.log_floor);
        assert_abs_diff_eq!(
            objective_for_optimizer(&obj, &Pose::identity(), &scene, &cls, &cfg),
            20.0
        );
    }

    #[test]
    fn config_validation() {
        let cfg = LikelihoodConfig::default();
        assert!(cfg.validate_for(1000, DEFAULT_C_MIN).is_ok());
        assert!(cfg.validate_for(1_000_000, DEFAULT_C_MIN).is_err());
        let bad = LikelihoodConfig { beta: 0.0, ..cfg };
        assert!(bad.validate_for(1, DEFAULT_C_MIN).is_err());
    }
}
