//! Independent reference implementations used to check the geometry module.
//! Each `check_*` returns a description of the first disagreement.

#![allow(dead_code)]

use nalgebra::{Matrix3, UnitQuaternion};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rebound_core::geometry::{box_corners, point_in_box, ray_box_intersect, CornerSet};
use rebound_core::{Box3D, Quaternion, Ray, SE3Pose, Size, Vec3};

use super::random_rotation;

/// Rotation matrix built by nalgebra from the same four components.
pub fn oracle_matrix(q: &Quaternion) -> Matrix3<f64> {
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q.w, q.x, q.y, q.z))
        .to_rotation_matrix()
        .into_inner()
}

fn random_vec(rng: &mut StdRng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn random_pose(rng: &mut StdRng) -> SE3Pose {
    SE3Pose::new(random_vec(rng, 100.0), random_rotation(rng))
}

pub fn random_box(rng: &mut StdRng) -> Box3D {
    Box3D::new(
        random_vec(rng, 10.0),
        Size::new(
            rng.random_range(0.2..6.0),
            rng.random_range(0.2..4.0),
            rng.random_range(0.2..4.0),
        ),
        random_rotation(rng),
        "car",
        "x",
    )
}

/// `cases` random unit quaternions and vectors: rotation agrees with the
/// matrix product and preserves norms, both within 1e-12.
pub fn check_quaternion_rotation(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..cases {
        let q = random_rotation(&mut rng);
        let v = random_vec(&mut rng, 10.0);
        let got = q.rotate(&v);
        let want = oracle_matrix(&q) * v;
        let err = (got - want).norm();
        if err > 1e-12 {
            return Err(format!("case {i}: rotate differs from matrix by {err:e}"));
        }
        let norm_err = (got.norm() - v.norm()).abs();
        if norm_err > 1e-12 {
            return Err(format!("case {i}: norm changed by {norm_err:e}"));
        }
        let m_err = (q.to_rotation_matrix() - oracle_matrix(&q)).abs().max();
        if m_err > 1e-12 {
            return Err(format!("case {i}: to_rotation_matrix off by {m_err:e}"));
        }
    }
    Ok(())
}

/// Associativity of compose, two-sided inverses and the apply formula,
/// within 1e-9.
pub fn check_se3_laws(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..cases {
        let (a, b, c) = (
            random_pose(&mut rng),
            random_pose(&mut rng),
            random_pose(&mut rng),
        );
        let p = random_vec(&mut rng, 50.0);
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        let dt = (left.translation - right.translation).norm();
        let dr = left.rotation.angle_to(&right.rotation);
        if dt > 1e-9 || dr > 1e-9 {
            return Err(format!(
                "case {i}: compose not associative ({dt:e} m, {dr:e} rad)"
            ));
        }
        for (name, id) in [
            ("T∘T⁻¹", a.compose(&a.inverse())),
            ("T⁻¹∘T", a.inverse().compose(&a)),
        ] {
            let dt = id.translation.norm();
            let dr = id.rotation.angle_to(&Quaternion::IDENTITY);
            if dt > 1e-9 || dr > 1e-9 {
                return Err(format!(
                    "case {i}: {name} is not identity ({dt:e} m, {dr:e} rad)"
                ));
            }
        }
        let want = oracle_matrix(&a.rotation) * p + a.translation;
        let err = (a.apply(&p) - want).norm();
        if err > 1e-9 {
            return Err(format!("case {i}: apply differs from R·p + t by {err:e}"));
        }
        let round = a.inverse().apply(&a.apply(&p));
        if (round - p).norm() > 1e-9 {
            return Err(format!("case {i}: inverse does not undo apply"));
        }
    }
    Ok(())
}

/// Outward normals and offsets of the six faces, built from corners only.
pub fn face_planes(corners: &CornerSet) -> Vec<(Vec3, f64)> {
    let center = corners.centroid();
    // Each face is the set of corners sharing one bit value.
    let mut planes = Vec::new();
    for bit in 0..3 {
        for value in [0, 1] {
            let face: Vec<Vec3> = (0..8)
                .filter(|i| (i >> bit) & 1 == value)
                .map(|i| corners[i])
                .collect();
            let mut n = (face[1] - face[0]).cross(&(face[2] - face[0])).normalize();
            if n.dot(&(face[0] - center)) < 0.0 {
                n = -n;
            }
            planes.push((n, n.dot(&face[0])));
        }
    }
    planes
}

/// Largest signed distance of `p` over the face planes: ≤ 0 inside, 0 on
/// the surface.
pub fn signed_distance(planes: &[(Vec3, f64)], p: &Vec3) -> f64 {
    planes
        .iter()
        .map(|(n, d)| n.dot(p) - d)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// point_in_box agrees with the face half-spaces. Points within 1e-9 of
/// the surface are skipped as numerically ambiguous.
pub fn check_point_in_box(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut checked = 0;
    let mut inside = 0;
    while checked < cases {
        let b = random_box(&mut rng);
        let planes = face_planes(&box_corners(&b));
        let p = b.center + random_vec(&mut rng, 3.0);
        let s = signed_distance(&planes, &p);
        if s.abs() < 1e-9 {
            continue;
        }
        checked += 1;
        let want = s < 0.0;
        inside += usize::from(want);
        if point_in_box(&b, &p) != want {
            return Err(format!(
                "case {checked}: point_in_box says {}, half-spaces {want}",
                !want
            ));
        }
        if !point_in_box(&b, &b.center) {
            return Err(format!("case {checked}: center not inside"));
        }
    }
    if inside == 0 || inside == cases {
        return Err("degenerate sample: all points on one side".into());
    }
    Ok(())
}

/// First t on the `step` grid whose point lies inside the face planes.
pub fn march(ray: &Ray, b: &Box3D, max_t: f64, step: f64) -> Option<f64> {
    let planes = face_planes(&box_corners(b));
    let steps = (max_t / step).ceil() as usize;
    (0..=steps)
        .map(|k| k as f64 * step)
        .find(|t| signed_distance(&planes, &ray.at(*t)) <= 0.0)
}

/// ray_box_intersect agrees with marching the ray in 1e-3 steps within
/// 2e-3, and hits land on the surface (outside origins) within 1e-6.
pub fn check_ray_box(cases: usize, seed: u64) -> Result<(), String> {
    const STEP: f64 = 1e-3;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut hits = 0;
    for i in 0..cases {
        let b = random_box(&mut rng);
        let origin = b.center + random_vec(&mut rng, 8.0);
        // Half the rays aim at a point inside the box; the rest are random.
        let target = if i % 2 == 0 {
            b.center
                + b.rotation.rotate(
                    &b.size
                        .half_extents()
                        .component_mul(&random_vec(&mut rng, 0.9)),
                )
        } else {
            origin + random_vec(&mut rng, 1.0)
        };
        let Some(ray) = Ray::new(origin, target - origin) else {
            continue;
        };
        let got = ray_box_intersect(&ray, &b);
        // Past the bounding sphere the ray cannot enter the box.
        let reach = (ray.origin - b.center).norm() + b.size.half_extents().norm() + STEP;
        let want = march(&ray, &b, reach, STEP);
        match (got, want) {
            (None, None) => {}
            (Some(t), Some(m)) => {
                hits += 1;
                if (t - m).abs() > 2e-3 {
                    return Err(format!("case {i}: slab t = {t}, march t = {m}"));
                }
                let planes = face_planes(&box_corners(&b));
                if signed_distance(&planes, &ray.origin) > 0.0 {
                    let s = signed_distance(&planes, &ray.at(t));
                    if s.abs() > 1e-6 {
                        return Err(format!("case {i}: hit point is {s:e} off the surface"));
                    }
                } else if t != 0.0 {
                    return Err(format!("case {i}: origin inside but t = {t}"));
                }
            }
            (got, want) => {
                return Err(format!("case {i}: slab {got:?}, march {want:?}"));
            }
        }
    }
    if hits < cases / 4 {
        return Err(format!("only {hits} hits in {cases} cases"));
    }
    Ok(())
}
