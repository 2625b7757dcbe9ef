use std::f64::consts::{FRAC_PI_2, PI, TAU};

use drl_core::geometry::{Gate, Pose, Vec3};
use drl_core::perception::eval::median;
use drl_core::perception::{
    estimate_center_3d, evaluate_perception, extract_corners, extract_gate_mask, kf_update, BaselineReference, ColorBox,
    CornerSource, GateCenterKF, Mask, PerceptionConfig, PerceptionError,
};
use drl_core::sensor::camera::{body_to_optical, optical_to_body};
use drl_core::sensor::raster::GATE_COLOR;
use drl_core::sensor::{gate_seg_id, project, render, CameraModel, Scene};
use drl_core::track::Track;
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn cam() -> CameraModel {
    CameraModel::from_hfov(320, 240, FRAC_PI_2)
}

fn gate(index: usize, pose: Pose) -> Gate {
    Gate::new(format!("g{index}"), index, pose, (2.0, 2.0), (3.0, 3.0)).unwrap()
}

fn exact_corners(g: &Gate, c: &CameraModel, pose: &Pose) -> Option<[[f64; 2]; 4]> {
    let mut out = [[0.0; 2]; 4];
    for (k, p) in g.corners_world(false).iter().enumerate() {
        let q = project(c, pose, p)?;
        if q.u < 0.0 || q.v < 0.0 || q.u > c.width as f64 - 1.0 || q.v > c.height as f64 - 1.0 {
            return None;
        }
        out[k] = [q.u, q.v];
    }
    Some(out)
}

fn colour_box() -> ColorBox {
    ColorBox::around(GATE_COLOR, 10)
}

#[test]
fn mask_equals_segmentation() {
    let g = gate(0, Pose::from_position_ypr(Vec3::new(6.0, 0.4, -0.2), 0.3, 0.0, 0.1));
    let f = render(&Scene::new(vec![g]), &cam(), &Pose::identity());
    let mask = extract_gate_mask(&f, &colour_box()).unwrap();
    let seg: Vec<bool> = f.seg.iter().map(|&s| s == gate_seg_id(0)).collect();
    assert_eq!(mask.data, seg);
}

#[test]
fn empty_scene_has_no_gate() {
    let f = render(&Scene::new(vec![]), &cam(), &Pose::identity());
    assert_eq!(extract_gate_mask(&f, &colour_box()), Err(PerceptionError::NoGateVisible));
}

#[test]
fn mask_keeps_largest_component() {
    let near = gate(0, Pose::from_position_ypr(Vec3::new(6.0, 2.5, 0.0), 0.0, 0.0, 0.0));
    let far = gate(1, Pose::from_position_ypr(Vec3::new(15.0, -5.0, 0.0), 0.0, 0.0, 0.0));
    let f = render(&Scene::new(vec![near, far]), &cam(), &Pose::identity());
    assert!(f.seg_count(gate_seg_id(1)) > 0);
    let mask = extract_gate_mask(&f, &colour_box()).unwrap();
    let seg: Vec<bool> = f.seg.iter().map(|&s| s == gate_seg_id(0)).collect();
    assert_eq!(mask.data, seg);
}

#[test]
fn frontal_corners_match_projection() {
    let c = cam();
    for d in [4.0, 6.0, 9.0] {
        let g = gate(0, Pose::from_position_ypr(Vec3::new(d, 0.3, -0.1), 0.0, 0.0, 0.0));
        let f = render(&Scene::new(vec![g.clone()]), &c, &Pose::identity());
        let corners = extract_corners(&extract_gate_mask(&f, &colour_box()).unwrap()).unwrap();
        let truth = exact_corners(&g, &c, &Pose::identity()).unwrap();
        for (a, b) in corners.iter().zip(&truth) {
            assert!((a[0] - b[0]).abs() <= 1.0 && (a[1] - b[1]).abs() <= 1.0, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn rotated_mask_keeps_corner_order() {
    let c = cam();
    for roll in [10.0f64, -10.0, 25.0] {
        let g = gate(0, Pose::from_position_ypr(Vec3::new(6.0, 0.0, 0.0), 0.0, 0.0, roll.to_radians()));
        let f = render(&Scene::new(vec![g.clone()]), &c, &Pose::identity());
        let corners = extract_corners(&extract_gate_mask(&f, &colour_box()).unwrap()).unwrap();
        let truth = exact_corners(&g, &c, &Pose::identity()).unwrap();
        for (a, b) in corners.iter().zip(&truth) {
            assert!(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() < 1.5, "roll {roll}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn oblique_corners_within_tolerance() {
    let c = cam();
    for yaw in [-50.0f64, -30.0, 30.0, 50.0] {
        let g = gate(0, Pose::from_position_ypr(Vec3::new(6.0, 0.0, 0.0), yaw.to_radians(), 0.0, 0.0));
        let f = render(&Scene::new(vec![g.clone()]), &c, &Pose::identity());
        let corners = extract_corners(&extract_gate_mask(&f, &colour_box()).unwrap()).unwrap();
        let truth = exact_corners(&g, &c, &Pose::identity()).unwrap();
        for (a, b) in corners.iter().zip(&truth) {
            assert!(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() < 1.5, "yaw {yaw}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn small_mask_is_degenerate() {
    let mut data = vec![false; 100 * 100];
    for v in 10..14 {
        for u in 10..20 {
            data[v * 100 + u] = true;
        }
    }
    let mask = Mask { width: 100, height: 100, data };
    assert_eq!(extract_corners(&mask), Err(PerceptionError::DegenerateMask(40)));
}

#[test]
fn reference_corners_give_canonical_centre() {
    let c = cam();
    let reference = BaselineReference::canonical(&c, 5.0, 3.0, 3.0);
    let pose = Pose::from_position_ypr(Vec3::new(1.0, 2.0, 3.0), 0.7, 0.1, -0.2);
    let est = estimate_center_3d(&reference.corners, &reference, &c, &pose).unwrap();
    let want = pose.transform_point(&optical_to_body(&Vec3::new(0.0, 0.0, 5.0)));
    assert!((est - want).norm() < 1e-9);
}

fn random_in_view(rng: &mut ChaCha8Rng, c: &CameraModel) -> (Gate, Pose, [[f64; 2]; 4]) {
    loop {
        let cam_pose = Pose::from_position_ypr(
            Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.0..5.0)),
            rng.random_range(-PI..PI),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
        );
        let local = Vec3::new(rng.random_range(3.0..20.0), rng.random_range(-4.0..4.0), rng.random_range(-3.0..3.0));
        let centre = cam_pose.transform_point(&local);
        let g = Gate::new(
            "g",
            0,
            Pose::from_position_ypr(
                centre,
                cam_pose.yaw() + rng.random_range(-1.0..1.0),
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
            ),
            (2.0, 2.0),
            (3.0, 3.0),
        )
        .unwrap();
        if let Some(corners) = exact_corners(&g, c, &cam_pose) {
            return (g, cam_pose, corners);
        }
    }
}

#[test]
fn exact_corners_recover_centre() {
    let c = cam();
    let reference = BaselineReference::canonical(&c, 5.0, 3.0, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let (g, pose, corners) = random_in_view(&mut rng, &c);
        let est = estimate_center_3d(&corners, &reference, &c, &pose).unwrap();
        assert!((est - g.center()).norm() < 1e-6, "{}", (est - g.center()).norm());
    }
}

#[test]
fn distorted_camera_exact_recovery() {
    let mut c = cam();
    c.k1 = -0.15;
    c.p2 = 0.001;
    let reference = BaselineReference::canonical(&c, 5.0, 3.0, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut done = 0;
    while done < 20 {
        let (g, pose, corners) = random_in_view(&mut rng, &c);
        // stay where r (1 + k1 r^2) is still monotonic, i.e. the lens model is invertible
        let within = g.corners_world(false).iter().all(|p| {
            let q = body_to_optical(&pose.inverse_transform_point(p));
            (q.x / q.z).hypot(q.y / q.z) < 1.2
        });
        if !within {
            continue;
        }
        done += 1;
        let est = estimate_center_3d(&corners, &reference, &c, &pose).unwrap();
        assert!((est - g.center()).norm() < 1e-6, "{} {:?}", (est - g.center()).norm(), corners);
    }
}

#[test]
fn pixel_scaling_leaves_estimate_unchanged() {
    let c = cam();
    let mut c2 = c;
    c2.fx *= 2.0;
    c2.fy *= 2.0;
    c2.cx *= 2.0;
    c2.cy *= 2.0;
    c2.width *= 2;
    c2.height *= 2;
    let (r1, r2) = (BaselineReference::canonical(&c, 5.0, 3.0, 3.0), BaselineReference::canonical(&c2, 5.0, 3.0, 3.0));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (_, pose, mut corners) = random_in_view(&mut rng, &c);
        for p in corners.iter_mut() {
            p[0] += rng.random_range(-1.0..1.0);
            p[1] += rng.random_range(-1.0..1.0);
        }
        let scaled = corners.map(|p| [2.0 * p[0], 2.0 * p[1]]);
        let a = estimate_center_3d(&corners, &r1, &c, &pose).unwrap();
        let b = estimate_center_3d(&scaled, &r2, &c2, &pose).unwrap();
        assert!((a - b).norm() < 1e-9);
    }
}

#[test]
fn collinear_corners_are_singular() {
    let c = cam();
    let reference = BaselineReference::canonical(&c, 5.0, 3.0, 3.0);
    let corners = [[10.0, 10.0], [20.0, 20.0], [30.0, 30.0], [40.0, 40.0]];
    assert_eq!(
        estimate_center_3d(&corners, &reference, &c, &Pose::identity()),
        Err(PerceptionError::SingularConfiguration)
    );
}

/// Centre errors for 1 px corner noise on a frontal gate at 8 m.
fn noisy_errors(trials: usize, seed: u64) -> (Vec<f64>, Gate, Vec<[[f64; 2]; 4]>) {
    let c = cam();
    let g = gate(0, Pose::from_position_ypr(Vec3::new(8.0, 0.0, 0.0), 0.0, 0.0, 0.0));
    let truth = exact_corners(&g, &c, &Pose::identity()).unwrap();
    let reference = BaselineReference::canonical(&c, 5.0, 3.0, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errs = Vec::new();
    let mut all = Vec::new();
    for _ in 0..trials {
        let noisy = truth.map(|p| {
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            [p[0] + a, p[1] + b]
        });
        let est = estimate_center_3d(&noisy, &reference, &c, &Pose::identity()).unwrap();
        errs.push((est - g.center()).norm());
        all.push(noisy);
    }
    (errs, g, all)
}

#[test]
fn one_pixel_noise_median_error() {
    let (mut errs, _, _) = noisy_errors(500, 1);
    assert!(median(&mut errs) < 0.5);
}

#[test]
fn filtering_shrinks_error() {
    let (mut errs, g, _) = noisy_errors(500, 2);
    let single = median(&mut errs);
    let c = cam();
    let reference = BaselineReference::canonical(&c, 5.0, 3.0, 3.0);
    let truth = exact_corners(&g, &c, &Pose::identity()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut filtered = Vec::new();
    for _ in 0..100 {
        let mut kf: Option<GateCenterKF> = None;
        for _ in 0..30 {
            let noisy = truth.map(|p| {
                let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                [p[0] + a, p[1] + b]
            });
            let z = estimate_center_3d(&noisy, &reference, &c, &Pose::identity()).unwrap();
            match kf.as_mut() {
                Some(f) => f.update(&z).unwrap(),
                None => kf = Some(GateCenterKF::from_measurement(z)),
            }
        }
        filtered.push((kf.unwrap().state - g.center()).norm());
    }
    assert!(median(&mut filtered) < 0.4 * single, "{} vs {single}", median(&mut filtered));
}

#[test]
fn uninformative_measurement_keeps_prior() {
    let kf = GateCenterKF::new(Vec3::new(1.0, 2.0, 3.0), Matrix3::identity(), 0.0, Matrix3::identity() * 1e9);
    let post = kf_update(&kf, &Vec3::new(100.0, -50.0, 7.0)).unwrap();
    assert!((post.state - kf.state).norm() < 1e-3);
}

#[test]
fn equal_weights_average() {
    let kf = GateCenterKF::new(Vec3::new(1.0, 2.0, 3.0), Matrix3::identity(), 0.0, Matrix3::identity());
    let m = Vec3::new(3.0, -2.0, 5.0);
    let post = kf_update(&kf, &m).unwrap();
    assert!((post.state - Vec3::new(2.0, 0.0, 4.0)).norm() < 1e-12);
    assert!((post.covariance - Matrix3::identity() * 0.5).norm() < 1e-12);
}

#[test]
fn hundred_updates_converge() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let truth = Vec3::new(4.0, -1.0, 2.0);
    let trials = 400;
    let mut good_axes = 0;
    for _ in 0..trials {
        let mut kf = GateCenterKF::new(Vec3::zeros(), Matrix3::identity() * 1e6, 0.0, Matrix3::identity());
        for _ in 0..100 {
            let n = Vec3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            kf.update(&(truth + n)).unwrap();
        }
        let e = kf.state - truth;
        good_axes += e.iter().filter(|x| x.abs() < 0.2).count();
    }
    assert!(good_axes as f64 / (3 * trials) as f64 >= 0.95);
}

#[test]
fn trace_decreases_and_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let r = Matrix3::new(0.3, 0.05, 0.0, 0.05, 0.2, 0.01, 0.0, 0.01, 0.4);
    let p0 = Matrix3::identity() * 2.0;
    let x0 = Vec3::new(0.5, 0.5, 0.5);
    let zs: Vec<Vec3> = (0..12).map(|_| Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0))).collect();
    let run = |order: &[usize]| {
        let mut kf = GateCenterKF::new(x0, p0, 0.0, r);
        for &i in order {
            let before = kf.covariance.trace();
            kf.update(&zs[i]).unwrap();
            assert!(kf.covariance.trace() <= before);
        }
        kf
    };
    let forward: Vec<usize> = (0..12).collect();
    let mut shuffled = forward.clone();
    shuffled.reverse();
    shuffled.swap(2, 7);
    let (a, b) = (run(&forward), run(&shuffled));
    assert!((a.state - b.state).norm() < 1e-9);

    // batch information form
    let (p_inv, r_inv) = (p0.try_inverse().unwrap(), r.try_inverse().unwrap());
    let info = p_inv + r_inv * zs.len() as f64;
    let sum = zs.iter().fold(Vec3::zeros(), |acc, z| acc + z);
    let batch = info.try_inverse().unwrap() * (p_inv * x0 + r_inv * sum);
    assert!((a.state - batch).norm() < 1e-9);
}

#[test]
fn non_spd_covariance_is_rejected() {
    let kf = GateCenterKF::new(Vec3::zeros(), Matrix3::from_diagonal_element(-1.0), 0.0, Matrix3::identity());
    assert_eq!(kf_update(&kf, &Vec3::zeros()), Err(PerceptionError::NonSpdCovariance));
}

fn demo_circle() -> Track {
    Track::circle("circle12", 20.0, 12, TAU, 2.0, (2.0, 2.0), (3.0, 3.0)).unwrap()
}

#[test]
fn noise_free_campaign_is_exact() {
    let config = PerceptionConfig { source: CornerSource::Exact, n_measurements: 200, ..Default::default() };
    let report = evaluate_perception(&demo_circle(), &config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(report.n_detected > 50);
    assert!(report.mean < 1e-5, "{}", report.mean);
}

#[test]
fn rendered_campaign_is_deterministic_and_bounded() {
    let config = PerceptionConfig { n_measurements: 150, corner_noise_px: 1.0, ..Default::default() };
    let a = evaluate_perception(&demo_circle(), &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = evaluate_perception(&demo_circle(), &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
    assert!(a.n_detected > 50);
    assert!(a.mean > 0.1 && a.mean < 3.0, "mean {}", a.mean);
    assert_eq!(a.per_gate.iter().sum::<usize>(), a.n_detected);

    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("frame_t,gate_idx,ex,ey,ez,err_norm,detected\n"));
    assert_eq!(text.lines().count(), a.n_frames + 1);
    let json: serde_json::Value = serde_json::from_str(&a.summary_json()).unwrap();
    assert_eq!(json["n_detected"], a.n_detected);
}
