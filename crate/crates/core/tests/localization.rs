//! End-to-end localization: a synthetic ring rendered by a test-side
//! forward-projection model is recovered by the vision pipeline plus the
//! camera-geometry chain.

use ringbot::geometry::{
    camera_to_robot, drop_up_axis, invert_intrinsics, pixel_to_camera, rotate_about_x,
    CameraIntrinsics, CameraMount, PlanarPoint, Vec3,
};
use ringbot::vision::{detect_rings, ColorImage, DepthMap, HeuristicDetector, PipelineConfig};

const IMG_W: u32 = 640;
const IMG_H: u32 = 480;

/// Forward model used to render the scene: robot-frame floor point to
/// pixel coordinates and camera depth. Independent of the library's
/// back-projection path.
fn project(
    k: &CameraIntrinsics,
    mount: &CameraMount,
    floor: PlanarPoint,
) -> Option<(f64, f64, f64)> {
    let level = Vec3::new(floor.x, mount.height, floor.z - mount.forward_offset);
    let cam = rotate_about_x(level, mount.tilt);
    if cam.z <= 0.05 {
        return None;
    }
    let u = k.fx * cam.x / cam.z + k.cx;
    let v = k.fy * cam.y / cam.z + k.cy;
    ((0.0..IMG_W as f64).contains(&u) && (0.0..IMG_H as f64).contains(&v))
        .then_some((u, v, cam.z))
}

fn paint_annulus(img: &mut ColorImage, cu: f64, cv: f64, r_out: f64, r_in: f64) {
    for y in 0..img.height {
        for x in 0..img.width {
            let dx = x as f64 - cu;
            let dy = y as f64 - cv;
            let d2 = dx * dx + dy * dy;
            if d2 <= r_out * r_out && d2 >= r_in * r_in {
                img.set_pixel(x, y, (140, 80, 150));
            }
        }
    }
}

#[test]
fn synthetic_ring_localizes_within_3cm_at_2m() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0).unwrap();
    let mount = CameraMount::new(0.35, 0.28, 0.10).unwrap();
    let truth = PlanarPoint::new(0.3, 2.0);

    let (cu, cv, depth_m) = project(&k, &mount, truth).expect("ring in frustum");
    let mut img = ColorImage::new(IMG_W, IMG_H);
    for y in 0..IMG_H {
        for x in 0..IMG_W {
            img.set_pixel(x, y, (70, 70, 75)); // gray floor
        }
    }
    paint_annulus(&mut img, cu, cv, 22.0, 13.0);
    // Depth of the ring's supporting surface; constant is enough because
    // the pipeline samples a 3x3 median at the centroid.
    let depth = DepthMap::constant(IMG_W, IMG_H, depth_m as f32);

    let cfg = PipelineConfig::default();
    let report = detect_rings(&img, Some(&depth), &cfg, &HeuristicDetector::default()).unwrap();
    assert_eq!(report.accepted.len(), 1);
    let det = report.accepted[0].detection.unwrap();

    let inv = invert_intrinsics(&k).unwrap();
    let recovered = drop_up_axis(camera_to_robot(pixel_to_camera(&det, &inv), &mount));
    let err = recovered.distance_to(&truth);
    assert!(
        err < 0.03,
        "localized ({}, {}) vs truth ({}, {}): error {err} m",
        recovered.x,
        recovered.z,
        truth.x,
        truth.z
    );
    println!("PASS: synthetic ring at 2 m localized with error {:.4} m", err);
}

#[test]
fn multiple_rings_sort_by_recovered_distance() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0).unwrap();
    let mount = CameraMount::new(0.35, 0.28, 0.10).unwrap();
    let truths = [PlanarPoint::new(-0.4, 1.2), PlanarPoint::new(0.2, 2.4)];

    let mut img = ColorImage::new(IMG_W, IMG_H);
    let mut depth = DepthMap::new(IMG_W, IMG_H);
    for truth in truths {
        let (cu, cv, d) = project(&k, &mount, truth).unwrap();
        // Apparent size shrinks with distance.
        let scale = 1.2 / d;
        paint_annulus(&mut img, cu, cv, 30.0 * scale, 18.0 * scale);
        for y in 0..IMG_H {
            for x in 0..IMG_W {
                let dx = x as f64 - cu;
                let dy = y as f64 - cv;
                if (dx * dx + dy * dy).sqrt() <= 34.0 * scale {
                    depth.set(x, y, d as f32);
                }
            }
        }
    }

    let cfg = PipelineConfig::default();
    let report = detect_rings(&img, Some(&depth), &cfg, &HeuristicDetector::default()).unwrap();
    assert_eq!(report.accepted.len(), 2);

    let inv = invert_intrinsics(&k).unwrap();
    let mut recovered: Vec<PlanarPoint> = report
        .accepted
        .iter()
        .map(|acc| {
            drop_up_axis(camera_to_robot(
                pixel_to_camera(&acc.detection.unwrap(), &inv),
                &mount,
            ))
        })
        .collect();
    recovered.sort_by(|a, b| {
        let origin = PlanarPoint::new(0.0, 0.0);
        a.distance_to(&origin).total_cmp(&b.distance_to(&origin))
    });
    assert!(recovered[0].distance_to(&truths[0]) < 0.05);
    assert!(recovered[1].distance_to(&truths[1]) < 0.05);
}
