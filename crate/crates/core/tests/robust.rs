mod common;

use common::{random_object, random_rotation, random_scene, unit_vector, TagMix};
use posefield::robust::{
    build_grid, correspondences_from_costs, cost_matrix, gnc_solve, robust_cost,
    weighted_rigid_align,
};
use posefield::scene::{build_scene_field, DEFAULT_C_MIN};
use posefield::{
    mle_estimate, objective_for_optimizer, point_log_loc, CellTag, ClassifierField, Error,
    ExtReal, GncConfig, GridGeometry, LikelihoodConfig, MleConfig, Point3, Pose, SceneField,
    StructuredPointCloud, SynthSpec, Vector3,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

fn cloud(rng: &mut impl Rng, pts: Vec<Point3<f64>>, d: usize) -> StructuredPointCloud {
    let desc = (0..pts.len()).flat_map(|_| unit_vector(rng, d)).collect();
    StructuredPointCloud::new(pts, desc, d).unwrap()
}

fn random_points(rng: &mut impl Rng, n: usize, spread: f64) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| Point3::from(Vector3::from_fn(|_, _| rng.random_range(-spread..spread))))
        .collect()
}

/// A scene holding the object's own points (with distinct descriptors) at
/// `gt`, plus a flat classifier.
fn scene_of(obj: &StructuredPointCloud, gt: &Pose, v: f64) -> (SceneField, ClassifierField) {
    let moved = StructuredPointCloud::new(gt.apply(obj.points()), obj.descriptors().to_vec(), obj.dim()).unwrap();
    let scene = build_scene_field(&moved, v, |_| false).unwrap();
    let cls = ClassifierField::constant(*scene.geometry(), 0.0, DEFAULT_C_MIN).unwrap();
    (scene, cls)
}

/// Object points on distinct voxel centers of a grid anchored at the origin.
fn centered_object(rng: &mut ChaCha8Rng, n: usize, v: f64, d: usize) -> StructuredPointCloud {
    let mut cells = std::collections::BTreeSet::new();
    while cells.len() < n {
        cells.insert([rng.random_range(0..12i32), rng.random_range(0..12i32), rng.random_range(0..12i32)]);
    }
    let pts = cells
        .iter()
        .map(|c| Point3::new((c[0] as f64 + 0.5) * v, (c[1] as f64 + 0.5) * v, (c[2] as f64 + 0.5) * v))
        .collect();
    cloud(rng, pts, d)
}

#[test]
fn grid_examples() {
    let g = GridGeometry::new(Point3::origin(), 0.5, [3, 2, 1]).unwrap();
    let tags = vec![
        CellTag::Regular,
        CellTag::Null,
        CellTag::Empty,
        CellTag::Regular,
        CellTag::Null,
        CellTag::Regular,
    ];
    let data = tags.iter().flat_map(|t| if *t == CellTag::Regular { [1.0f32, 0.0] } else { [0.0; 2] }).collect();
    let scene = SceneField::from_cells(g, 2, tags, data).unwrap();
    let grid = build_grid(&scene).unwrap();
    assert_eq!(grid.coords(), &[Point3::new(0.25, 0.25, 0.25), Point3::new(0.25, 0.75, 0.25), Point3::new(1.25, 0.75, 0.25)]);
    for tag in [CellTag::Empty, CellTag::Null] {
        let s = SceneField::uniform(g, 2, tag).unwrap();
        assert!(matches!(build_grid(&s), Err(Error::NoRegularVoxels)));
    }
}

#[test]
fn cost_examples() {
    let g = GridGeometry::new(Point3::origin(), 1.0, [2, 1, 1]).unwrap();
    let scene = SceneField::from_cells(g, 2, vec![CellTag::Regular; 2], vec![1.0, 0.0, 0.6, 0.8]).unwrap();
    let cls = ClassifierField::new(g, vec![0.0, DEFAULT_C_MIN as f32], DEFAULT_C_MIN).unwrap();
    let obj = StructuredPointCloud::new(vec![Point3::origin()], vec![1.0, 0.0], 2).unwrap();
    let grid = build_grid(&scene).unwrap();
    let c = cost_matrix(&obj, &grid, &scene, &cls, &LikelihoodConfig::default()).unwrap();
    assert_eq!(c.get(0, 0), 10.0);
    let s = 0.6f32 as f64;
    assert_eq!(c.get(0, 1), DEFAULT_C_MIN + 10.0 * s);
}

#[test]
fn robust_cost_examples() {
    assert_eq!(robust_cost(0.0, 0.3), 0.0);
    assert_eq!(robust_cost(0.3, 0.3), 0.09);
    assert_eq!(robust_cost(7.0, 0.3), 0.09);
    assert_eq!(robust_cost(0.15, 0.3), 0.15 * 0.15);
    assert!((robust_cost(0.15, 0.3) - 0.09 / 4.0).abs() < 1e-17);
}

#[test]
fn align_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let src = random_points(&mut rng, 6, 1.0);
    let w = vec![1.0; 6];
    let id = weighted_rigid_align(&src, &src, &w).unwrap();
    assert!(id.rotation_distance(&Pose::identity()) < 1e-12);
    assert!(id.translation().norm() < 1e-12);

    let tri = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 2.0, 0.0), Point3::new(0.3, -0.4, 1.0)];
    let rz = Pose::rot_z(FRAC_PI_2);
    let p = weighted_rigid_align(&tri, &rz.apply(&tri), &[1.0; 3]).unwrap();
    assert!(p.rotation_distance(&rz) < 1e-9);
    assert!(p.translation().norm() < 1e-9);

    let mut src2 = tri.clone();
    let mut dst2 = rz.apply(&tri);
    src2.push(Point3::new(5.0, 5.0, 5.0));
    dst2.push(Point3::new(-40.0, 3.0, 9.0));
    let q = weighted_rigid_align(&src2, &dst2, &[1.0, 1.0, 1.0, 0.0]).unwrap();
    assert!(q.rotation_distance(&p) < 1e-12);
    assert!((q.translation() - p.translation()).norm() < 1e-12);

    assert!(matches!(weighted_rigid_align(&tri, &tri, &[0.0; 3]), Err(Error::ZeroWeightSum)));
}

#[test]
fn reflections_are_never_returned() {
    // A mirrored target: the best proper rotation is still a rotation.
    let src = vec![
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
        Point3::new(0.4, 0.3, 0.2),
    ];
    let dst: Vec<_> = src.iter().map(|p| Point3::new(p.x, p.y, -p.z)).collect();
    let pose = weighted_rigid_align(&src, &dst, &[1.0; 4]).unwrap();
    assert!((pose.rotation_matrix().determinant() - 1.0).abs() < 1e-9);
}

#[test]
fn cost_entries_match_point_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let rs = random_scene(&mut rng, 4, TagMix { empty: 0.1, null: 0.2 });
        let Ok(grid) = build_grid(&rs.scene) else { continue };
        let obj = random_object(&mut rng, 10, 4, 0.1);
        let cfg = LikelihoodConfig::default();
        let c = cost_matrix(&obj, &grid, &rs.scene, &rs.classifier, &cfg).unwrap();
        assert_eq!((c.rows(), c.cols()), (obj.len(), grid.len()));
        for i in 0..c.rows() {
            for (j, y) in grid.coords().iter().enumerate() {
                let want = point_log_loc(y, obj.descriptor(i), &rs.scene, &rs.classifier, &cfg);
                let got = c.get(i, j);
                assert!((got - want.finite().unwrap()).abs() <= 1e-12);
                assert!(got >= DEFAULT_C_MIN - cfg.beta && got <= cfg.beta);
            }
        }
    }
}

#[test]
fn subset_of_scene_is_found_at_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = 0.05;
    let full = centered_object(&mut rng, 200, v, 32);
    let obj = full.select(&(0..60).collect::<Vec<_>>()).unwrap();
    let (scene, cls) = scene_of(&full, &Pose::identity(), v);
    let res = mle_estimate(&obj, &scene, &cls, &MleConfig::default(), None).unwrap();
    assert!(res.pose.rotation_distance(&Pose::identity()) < 1e-3);
    assert!(res.pose.translation().norm() < 0.1 * v);
}

#[test]
fn recovers_rotated_and_shifted_copy() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v = 0.05;
    let obj = centered_object(&mut rng, 80, v, 32);
    let gt = Pose::from_axis_angle(Vector3::z(), FRAC_PI_4, Vector3::new(0.3, 0.0, 0.0));
    let (scene, cls) = scene_of(&obj, &gt, v);
    let res = mle_estimate(&obj, &scene, &cls, &MleConfig::default(), None).unwrap();
    let rot = res.pose.rotation_distance(&gt).to_degrees();
    let trans = res.pose.translation_distance(&gt);
    assert!(rot < 5.0 && trans < 0.5 * v, "{rot}° {trans}");
}

#[test]
fn noiseless_unique_instance_has_zero_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // Exactly representable, so grid centers are exact too.
    let v = 0.0625;
    let obj = centered_object(&mut rng, 40, v, 32);
    // Quarter turn plus a whole number of voxels maps centers onto centers.
    let gt = Pose::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::new(3.0 * v, -2.0 * v, v));
    let (scene, cls) = scene_of(&obj, &gt, v);
    let res = mle_estimate(&obj, &scene, &cls, &MleConfig::default(), None).unwrap();
    let ours = res.pose.apply(obj.points());
    let truth = gt.apply(obj.points());
    for (a, b) in ours.iter().zip(&truth) {
        assert!((a - b).norm() < 1e-9, "residual {}", (a - b).norm());
    }
}

#[test]
fn single_point_goes_to_its_best_grid_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rs = random_scene(&mut rng, 8, TagMix { empty: 0.0, null: 0.3 });
    let obj = random_object(&mut rng, 1, 8, 0.0001);
    let cfg = LikelihoodConfig::default();
    let grid = build_grid(&rs.scene).unwrap();
    let costs = cost_matrix(&obj, &grid, &rs.scene, &rs.classifier, &cfg).unwrap();
    let best = (0..grid.len()).max_by(|&a, &b| costs.get(0, a).total_cmp(&costs.get(0, b))).unwrap();
    let corr = correspondences_from_costs(&costs, 1).unwrap();
    let res = gnc_solve(&obj, &grid, &corr, &GncConfig::default(), None).unwrap();
    assert_eq!(res.pose.quaternion(), [1.0, 0.0, 0.0, 0.0]);
    let placed = res.pose.apply(obj.points())[0];
    assert!((placed - grid.coords()[best]).norm() < 1e-12);
}

#[test]
fn gnc_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let g = GridGeometry::new(Point3::origin(), 0.1, [3, 3, 3]).unwrap();
    let n = g.cell_count();
    let scene = SceneField::from_cells(g, 2, vec![CellTag::Regular; n], [1.0f32, 0.0].repeat(n)).unwrap();
    // A classifier at the floor everywhere leaves nothing plausible.
    let cls = ClassifierField::constant(g, DEFAULT_C_MIN, DEFAULT_C_MIN).unwrap();
    let obj = random_object(&mut rng, 5, 2, 0.1);
    let err = mle_estimate(&obj, &scene, &cls, &MleConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::NoCorrespondences));
}

#[test]
fn gnc_is_deterministic() {
    let spec = SynthSpec::unique();
    let inst = posefield::generate(&spec).unwrap();
    let a = mle_estimate(&inst.object, &inst.scene, &inst.classifier, &MleConfig::default(), None).unwrap();
    let b = mle_estimate(&inst.object, &inst.scene, &inst.classifier, &MleConfig::default(), None).unwrap();
    assert_eq!(a.pose, b.pose);
    assert_eq!(a.gnc.log, b.gnc.log);
}

#[test]
fn symmetric_object_reaches_an_equivalent_optimum() {
    let inst = posefield::generate(&SynthSpec::box4()).unwrap();
    let cfg = MleConfig::default();
    let res = mle_estimate(&inst.object, &inst.scene, &inst.classifier, &cfg, None).unwrap();
    let at_gt = objective_for_optimizer(&inst.object, &inst.gt_pose, &inst.scene, &inst.classifier, &cfg.likelihood);
    assert!((res.objective - at_gt).abs() < 1e-6, "{} vs {at_gt}", res.objective);
    let (rot, _) = common::symmetric_error(&res.pose, &inst.gt_pose, &inst.symmetry_group);
    assert!(rot.to_degrees() < 5.0);
}

fn gnc_trace_stages_never_rise(obj: &StructuredPointCloud, scene: &SceneField, cls: &ClassifierField) {
    let cfg = MleConfig::default();
    let res = mle_estimate(obj, scene, cls, &cfg, None).unwrap();
    for pair in res.gnc.log.windows(2) {
        if pair[0].stage == pair[1].stage {
            let tol = 1e-9 * pair[0].objective.abs().max(1.0);
            assert!(pair[1].objective <= pair[0].objective + tol, "{:?} -> {:?}", pair[0], pair[1]);
        }
    }
}

#[test]
fn gnc_trace_is_monotone_within_each_stage() {
    for spec in [SynthSpec::unique(), SynthSpec::box4(), SynthSpec::mug()] {
        let inst = posefield::generate(&spec).unwrap();
        gnc_trace_stages_never_rise(&inst.object, &inst.scene, &inst.classifier);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        let rs = random_scene(&mut rng, 6, TagMix { empty: 0.0, null: 0.3 });
        let obj = random_object(&mut rng, 25, 6, 0.2);
        gnc_trace_stages_never_rise(&obj, &rs.scene, &rs.classifier);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn robust_cost_is_monotone_and_capped(a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.01f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(robust_cost(lo, c) <= robust_cost(hi, c));
        if lo >= c {
            prop_assert_eq!(robust_cost(lo, c), robust_cost(hi, c));
        }
    }

    #[test]
    fn grid_points_are_regular(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rs = random_scene(&mut rng, 3, TagMix { empty: 0.2, null: 0.3 });
        if let Ok(grid) = build_grid(&rs.scene) {
            let g = rs.scene.geometry();
            prop_assert_eq!(grid.len(), rs.scene.regular_cells().count());
            for (y, &cell) in grid.coords().iter().zip(grid.cells()) {
                prop_assert_eq!(rs.scene.tags()[cell], CellTag::Regular);
                prop_assert_eq!(*y, g.center(g.unflatten(cell)));
                prop_assert!(rs.scene.similarity_at(y, &[1.0, 0.0, 0.0], &mut [0.0; 3]) != ExtReal::NegInf);
            }
            prop_assert!(grid.cells().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn correspondence_weights_are_subnormalized(seed in any::<u64>(), k in 1usize..12, beta in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rs = random_scene(&mut rng, 3, TagMix { empty: 0.0, null: 0.3 });
        let Ok(grid) = build_grid(&rs.scene) else { return Ok(()) };
        let obj = random_object(&mut rng, 12, 3, 0.1);
        let cfg = LikelihoodConfig { beta, ..LikelihoodConfig::default() };
        let c = cost_matrix(&obj, &grid, &rs.scene, &rs.classifier, &cfg).unwrap();
        let corr = correspondences_from_costs(&c, k).unwrap();
        for i in 0..obj.len() {
            let row: Vec<_> = corr.pairs.iter().filter(|p| p.point == i).collect();
            let best = (0..c.cols()).map(|j| c.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
            if row.is_empty() {
                prop_assert!(best < DEFAULT_C_MIN / 2.0);
                continue;
            }
            prop_assert!(row.len() <= k.min(c.cols()));
            prop_assert!(row.iter().all(|p| p.weight >= 0.0));
            let total: f64 = row.iter().map(|p| p.weight).sum();
            prop_assert!(total <= 1.0 + 1e-12);
            // The kept candidates are the best scores of the row.
            let worst_kept = row.iter().map(|p| c.get(i, p.grid)).fold(f64::INFINITY, f64::min);
            let better_dropped = (0..c.cols())
                .filter(|j| row.iter().all(|p| p.grid != *j))
                .any(|j| c.get(i, j) > worst_kept);
            prop_assert!(!better_dropped);
        }
    }

    #[test]
    fn align_recovers_noiseless_poses(seed in any::<u64>(), n in 3usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_points(&mut rng, n, 2.0);
        let gt = Pose::from_rotation(random_rotation(&mut rng), Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0)));
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let p = weighted_rigid_align(&src, &gt.apply(&src), &w).unwrap();
        prop_assert!(p.rotation_distance(&gt) < 1e-9);
        prop_assert!(p.translation_distance(&gt) < 1e-9);
        prop_assert!((p.rotation_matrix().determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn align_is_equivariant(seed in any::<u64>(), n in 3usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_points(&mut rng, n, 1.0);
        // Noisy targets so the residuals are not all zero.
        let dst: Vec<_> = random_points(&mut rng, n, 1.0);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let h = Pose::from_rotation(random_rotation(&mut rng), Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0)));
        let residuals = |s: &[Point3<f64>], d: &[Point3<f64>]| -> Vec<f64> {
            let p = weighted_rigid_align(s, d, &w).unwrap();
            p.apply(s).iter().zip(d).map(|(a, b)| (a - b).norm()).collect()
        };
        let r0 = residuals(&src, &dst);
        let r1 = residuals(&h.apply(&src), &h.apply(&dst));
        for (a, b) in r0.iter().zip(&r1) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mle_never_scores_below_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rs = random_scene(&mut rng, 4, TagMix { empty: 0.05, null: 0.3 });
        let obj = random_object(&mut rng, 10, 4, 0.15);
        let cfg = MleConfig::default();
        match mle_estimate(&obj, &rs.scene, &rs.classifier, &cfg, None) {
            Ok(res) => {
                let id = objective_for_optimizer(&obj, &Pose::identity(), &rs.scene, &rs.classifier, &cfg.likelihood);
                prop_assert!(res.objective >= id);
                let again = objective_for_optimizer(&obj, &res.pose, &rs.scene, &rs.classifier, &cfg.likelihood);
                prop_assert_eq!(again, res.objective);
            }
            Err(Error::NoRegularVoxels | Error::NoCorrespondences) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
