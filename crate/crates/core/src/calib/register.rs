//! Least-squares rigid alignment of corresponding point sets (Kabsch).
//! Checkerboard-based hand-eye calibration reduces to this once both
//! sensors observe the same corner set.

use nalgebra::Matrix3;

use crate::geometry::{Point3, RigidTransform, Vec3};

use super::CalibError;

/// Estimated transform plus its residual statistics.
#[derive(Debug, Clone)]
pub struct Registration {
    pub transform: RigidTransform,
    /// Root-mean-square residual over the correspondences (mm).
    pub rms: f64,
}

/// Finds the rigid transform minimizing the sum of squared residuals
/// `|T(src) - dst|^2` over the correspondence list `(src, dst)`.
pub fn estimate_rigid_transform(
    correspondences: &[(Point3, Point3)],
) -> Result<Registration, CalibError> {
    let n = correspondences.len();
    if n < 3 {
        return Err(CalibError::TooFewCorrespondences(n));
    }
    let inv_n = 1.0 / n as f64;
    let mut mu_src = Vec3::ZERO;
    let mut mu_dst = Vec3::ZERO;
    for (s, d) in correspondences {
        mu_src = mu_src + s.to_vec();
        mu_dst = mu_dst + d.to_vec();
    }
    mu_src = mu_src.scale(inv_n);
    mu_dst = mu_dst.scale(inv_n);

    // Cross-covariance H = sum (dst - mu_dst)(src - mu_src)^T.
    let mut h = Matrix3::zeros();
    for (s, d) in correspondences {
        let sc = s.to_vec() - mu_src;
        let dc = d.to_vec() - mu_dst;
        let sc = [sc.x, sc.y, sc.z];
        let dc = [dc.x, dc.y, dc.z];
        for r in 0..3 {
            for c in 0..3 {
                h[(r, c)] += dc[r] * sc[c];
            }
        }
    }

    let svd = h.svd(true, true);
    // Collinear or coincident sources leave at most one independent
    // direction, so the rotation about the point line is unconstrained.
    let s = svd.singular_values;
    if s[1] <= s[0] * 1e-12 || s[0] == 0.0 {
        return Err(CalibError::DegenerateConfiguration);
    }
    let u: Matrix3<f64> = svd.u.expect("svd with u");
    let v_t: Matrix3<f64> = svd.v_t.expect("svd with v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;

    let rotation = [
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ];
    let rot_mu_src = Vec3::new(
        rotation[0][0] * mu_src.x + rotation[0][1] * mu_src.y + rotation[0][2] * mu_src.z,
        rotation[1][0] * mu_src.x + rotation[1][1] * mu_src.y + rotation[1][2] * mu_src.z,
        rotation[2][0] * mu_src.x + rotation[2][1] * mu_src.y + rotation[2][2] * mu_src.z,
    );
    let translation = mu_dst - rot_mu_src;
    let transform = RigidTransform::new(rotation, translation)
        .map_err(|_| CalibError::DegenerateConfiguration)?;

    let mut sq_sum = 0.0;
    for (s, d) in correspondences {
        sq_sum += transform.apply(s).distance_sq(d);
    }
    let rms = (sq_sum * inv_n).sqrt();
    Ok(Registration { transform, rms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0f64),
        );
        let axis = if axis.norm() < 1e-6 { Vec3::Z } else { axis };
        let rot = RigidTransform::from_axis_angle(axis, rng.gen_range(-3.0..3.0)).unwrap();
        rot.compose(&RigidTransform::from_translation(Vec3::new(
            rng.gen_range(-100.0..100.0),
            rng.gen_range(-100.0..100.0),
            rng.gen_range(-100.0..100.0),
        )))
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                )
            })
            .collect()
    }

    #[test]
    fn exact_recovery_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let truth = random_transform(&mut rng);
            let src = random_points(&mut rng, 12);
            let pairs: Vec<(Point3, Point3)> =
                src.iter().map(|p| (*p, truth.apply(p))).collect();
            let est = estimate_rigid_transform(&pairs).unwrap();
            let (dt, dr) = est.transform.deviation_from(&truth);
            assert!(dt < 1e-9 && dr < 1e-9, "dt={dt} dr={dr}");
            assert!(est.rms < 1e-9);
        }
    }

    #[test]
    fn identity_correspondences_give_identity() {
        let src = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
            Point3::new(0.0, 10.0, 0.0),
            Point3::new(0.0, 0.0, 10.0),
        ];
        let pairs: Vec<(Point3, Point3)> = src.iter().map(|p| (*p, *p)).collect();
        let est = estimate_rigid_transform(&pairs).unwrap();
        let (dt, dr) = est.transform.deviation_from(&RigidTransform::identity());
        assert!(dt < 1e-12 && dr < 1e-9);
    }

    #[test]
    fn noisy_recovery_within_tolerance() {
        // Monte-Carlo with a fixed seed; the generating transform is the
        // oracle. sigma = 0.1 mm on 50 points.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let truth = random_transform(&mut rng);
        let src = random_points(&mut rng, 50);
        let pairs: Vec<(Point3, Point3)> = src
            .iter()
            .map(|p| {
                let q = truth.apply(p);
                let noisy = Point3::new(
                    q.x + 0.1 * gauss(&mut rng),
                    q.y + 0.1 * gauss(&mut rng),
                    q.z + 0.1 * gauss(&mut rng),
                );
                (*p, noisy)
            })
            .collect();
        let est = estimate_rigid_transform(&pairs).unwrap();
        let (dt, dr) = est.transform.deviation_from(&truth);
        assert!(dr < 0.01, "rotation error {dr} rad");
        assert!(dt < 0.1, "translation error {dt} mm");
    }

    #[test]
    fn collinear_points_rejected() {
        let pairs: Vec<(Point3, Point3)> = (0..5)
            .map(|i| {
                let p = Point3::new(i as f64, 2.0 * i as f64, 0.0);
                (p, p)
            })
            .collect();
        assert!(matches!(
            estimate_rigid_transform(&pairs),
            Err(CalibError::DegenerateConfiguration)
        ));
    }

    #[test]
    fn too_few_points_rejected() {
        let pairs = vec![(Point3::ORIGIN, Point3::ORIGIN); 2];
        assert!(matches!(
            estimate_rigid_transform(&pairs),
            Err(CalibError::TooFewCorrespondences(2))
        ));
    }

    #[test]
    fn left_invariance_under_common_pre_transform() {
        // Applying G to both sides conjugates the estimate: est' = G est G^-1.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let truth = random_transform(&mut rng);
            let g = random_transform(&mut rng);
            let src = random_points(&mut rng, 10);
            let pairs: Vec<(Point3, Point3)> =
                src.iter().map(|p| (*p, truth.apply(p))).collect();
            let moved: Vec<(Point3, Point3)> = pairs
                .iter()
                .map(|(s, d)| (g.apply(s), g.apply(d)))
                .collect();
            let base = estimate_rigid_transform(&pairs).unwrap().transform;
            let shifted = estimate_rigid_transform(&moved).unwrap().transform;
            let expected = g.compose(&base).compose(&g.inverse());
            let (dt, dr) = shifted.deviation_from(&expected);
            assert!(dt < 1e-9 && dr < 1e-9, "dt={dt} dr={dr}");
        }
    }

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
