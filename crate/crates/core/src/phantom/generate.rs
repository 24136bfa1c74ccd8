//! Scene assembly: tessellated ellipsoid kidney plus a sphere-cap tumor
//! anchored on its surface. Tessellation starts from an icosahedron and
//! subdivides until the requested vertex density is met; vertices get a
//! seeded tangential jitter (re-projected onto the exact surface) so no
//! two seeds produce the same sampling pattern.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::TissueClass;
use crate::geometry::{Point3, TriangleMesh, Vec3};

use super::{PhantomError, PhantomSpec, Scene};

/// Tangential jitter amplitude as a fraction of the nominal vertex spacing.
const JITTER_FRACTION: f64 = 0.25;

/// Hard cap on subdivision depth (level 6 = 40962 vertices per surface).
const MAX_SUBDIV_LEVEL: u32 = 6;

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Scene, PhantomError> {
    spec.validate()?;
    let [a, b, c] = spec.kidney_semi_axes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Nominal spacing from the requested density; used for jitter scale.
    let spacing = 1.0 / spec.tessellation_density.sqrt();
    let jitter = JITTER_FRACTION * spacing;

    // Kidney: unit icosphere scaled to the ellipsoid.
    let kidney_area = ellipsoid_area(a, b, c);
    let kidney_level = level_for(spec.tessellation_density * kidney_area);
    let (unit_verts, kidney_tris) = icosphere(kidney_level);
    let mut kidney_verts: Vec<Point3> = unit_verts
        .iter()
        .map(|u| Point3::new(a * u.x, b * u.y, c * u.z))
        .collect();
    for v in &mut kidney_verts {
        let moved = jitter_tangential(&mut rng, v, &ellipsoid_normal(v, a, b, c), jitter);
        *v = project_to_ellipsoid(&moved, a, b, c);
    }

    // Tumor: sphere of the requested radius, center sunk below the anchor
    // point so that `protrusion * radius` sticks out.
    let anchor_dir = Vec3::new(
        spec.tumor_polar_angle.sin() * spec.tumor_azimuth.cos(),
        spec.tumor_polar_angle.sin() * spec.tumor_azimuth.sin(),
        spec.tumor_polar_angle.cos(),
    );
    let anchor = Point3::new(a * anchor_dir.x, b * anchor_dir.y, c * anchor_dir.z);
    let outward = ellipsoid_normal(&anchor, a, b, c);
    let depth = spec.tumor_radius * (1.0 - spec.protrusion);
    let center = anchor - outward.scale(depth);

    let tumor_area = 4.0 * std::f64::consts::PI * spec.tumor_radius * spec.tumor_radius;
    let tumor_level = level_for(spec.tessellation_density * tumor_area);
    let (unit_verts, tumor_tris) = icosphere(tumor_level);
    let mut tumor_verts: Vec<Point3> = unit_verts
        .iter()
        .map(|u| center + u.scale(spec.tumor_radius).to_point().to_vec())
        .collect();
    for v in &mut tumor_verts {
        let n = (*v - center).normalized().expect("vertex on sphere");
        let moved = jitter_tangential(&mut rng, v, &n, jitter);
        let dir = (moved - center).normalized().expect("off-center");
        *v = center + dir.scale(spec.tumor_radius);
    }

    // Kidney vertices swallowed by the tumor sphere are tumor tissue.
    let kidney_classes: Vec<TissueClass> = kidney_verts
        .iter()
        .map(|v| {
            if v.distance(&center) <= spec.tumor_radius {
                TissueClass::Tumor
            } else {
                TissueClass::Healthy
            }
        })
        .collect();
    let tumor_classes = vec![TissueClass::Tumor; tumor_verts.len()];

    // Exophytic check: the tumor surface must pierce the kidney surface.
    let mut outside = false;
    let mut inside = false;
    for v in &tumor_verts {
        let e = ellipsoid_value(v, a, b, c);
        if e > 1.0 {
            outside = true;
        } else {
            inside = true;
        }
    }
    if !(outside && inside) {
        return Err(PhantomError::NotExophytic);
    }

    let kidney = TriangleMesh::new(kidney_verts, kidney_tris)?;
    let tumor = TriangleMesh::new(tumor_verts, tumor_tris)?;
    Ok(Scene {
        kidney,
        tumor,
        kidney_classes,
        tumor_classes,
        dye_concentration: spec.dye_concentration,
        tumor_center: center,
        tumor_radius: spec.tumor_radius,
    })
}

/// Outward unit normal of the axis-aligned ellipsoid at a surface point.
pub fn ellipsoid_normal(p: &Point3, a: f64, b: f64, c: f64) -> Vec3 {
    Vec3::new(p.x / (a * a), p.y / (b * b), p.z / (c * c))
        .normalized()
        .expect("surface point is never the center")
}

fn ellipsoid_value(p: &Point3, a: f64, b: f64, c: f64) -> f64 {
    (p.x / a).powi(2) + (p.y / b).powi(2) + (p.z / c).powi(2)
}

fn project_to_ellipsoid(p: &Point3, a: f64, b: f64, c: f64) -> Point3 {
    let u = Vec3::new(p.x / a, p.y / b, p.z / c)
        .normalized()
        .expect("non-center point");
    Point3::new(a * u.x, b * u.y, c * u.z)
}

fn jitter_tangential(rng: &mut ChaCha8Rng, p: &Point3, normal: &Vec3, amplitude: f64) -> Point3 {
    let helper = if normal.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    let t1 = normal.cross(&helper).normalized().expect("non-parallel helper");
    let t2 = normal.cross(&t1);
    let d1: f64 = rng.gen_range(-1.0..1.0);
    let d2: f64 = rng.gen_range(-1.0..1.0);
    *p + t1.scale(d1 * amplitude) + t2.scale(d2 * amplitude)
}

/// Knud Thomsen's ellipsoid surface area approximation (error < 1.1%).
pub fn ellipsoid_area(a: f64, b: f64, c: f64) -> f64 {
    const P: f64 = 1.6075;
    let ap = a.powf(P);
    let bp = b.powf(P);
    let cp = c.powf(P);
    4.0 * std::f64::consts::PI * ((ap * bp + ap * cp + bp * cp) / 3.0).powf(1.0 / P)
}

/// Smallest subdivision level whose vertex count (10 * 4^level + 2)
/// reaches `target_vertices`, clamped to `MAX_SUBDIV_LEVEL`.
fn level_for(target_vertices: f64) -> u32 {
    let mut level = 0;
    while level < MAX_SUBDIV_LEVEL && (10.0 * 4f64.powi(level as i32) + 2.0) < target_vertices {
        level += 1;
    }
    level
}

/// Unit icosphere: icosahedron subdivided `level` times, midpoints pushed
/// onto the unit sphere. Deterministic vertex and triangle order.
pub fn icosphere(level: u32) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let phi = (1.0 + 5_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized().unwrap())
    .collect();

    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let ab = midpoint(&mut vertices, &mut midpoints, tri[0], tri[1]);
            let bc = midpoint(&mut vertices, &mut midpoints, tri[1], tri[2]);
            let ca = midpoint(&mut vertices, &mut midpoints, tri[2], tri[0]);
            next.push([tri[0], ab, ca]);
            next.push([tri[1], bc, ab]);
            next.push([tri[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    (vertices, triangles)
}

fn midpoint(
    vertices: &mut Vec<Vec3>,
    cache: &mut HashMap<(u32, u32), u32>,
    a: u32,
    b: u32,
) -> u32 {
    let key = if a < b { (a, b) } else { (b, a) };
    if let Some(&idx) = cache.get(&key) {
        return idx;
    }
    let m = (vertices[a as usize] + vertices[b as usize])
        .normalized()
        .expect("sphere midpoint");
    vertices.push(m);
    let idx = (vertices.len() - 1) as u32;
    cache.insert(key, idx);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts_match_formula() {
        for level in 0..4u32 {
            let (v, t) = icosphere(level);
            assert_eq!(v.len(), 10 * 4usize.pow(level) + 2);
            assert_eq!(t.len(), 20 * 4usize.pow(level));
            for vert in &v {
                assert!((vert.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn icosphere_is_closed() {
        let (v, t) = icosphere(2);
        let pts: Vec<Point3> = v.iter().map(|u| u.scale(10.0).to_point()).collect();
        let mesh = TriangleMesh::new(pts, t).unwrap();
        assert!(mesh.boundary_edges().is_empty());
    }

    #[test]
    fn tumor_bounding_sphere_matches_requested_diameter() {
        // A 17 mm tumor means a 17 mm diameter: radius 8.5.
        let spec = PhantomSpec {
            tumor_radius: 8.5,
            ..PhantomSpec::default()
        };
        let scene = generate_phantom(&spec).unwrap();
        let max_extent = scene
            .tumor
            .vertices()
            .iter()
            .map(|v| v.distance(&scene.tumor_center))
            .fold(0.0, f64::max);
        assert!((2.0 * max_extent - 17.0).abs() < 1e-9);
    }

    #[test]
    fn full_protrusion_exposes_a_hemisphere() {
        // Anchor at the +z pole with protrusion 1.0: the center sits on the
        // surface (z = c), so the tumor top reaches z = c + radius.
        let spec = PhantomSpec {
            protrusion: 1.0,
            tumor_polar_angle: 0.0,
            ..PhantomSpec::default()
        };
        let scene = generate_phantom(&spec).unwrap();
        let c = spec.kidney_semi_axes[2];
        assert!(scene.tumor_center.distance(&Point3::new(0.0, 0.0, c)) < 1e-9);
        let max_z = scene
            .tumor
            .vertices()
            .iter()
            .map(|v| v.z)
            .fold(f64::NEG_INFINITY, f64::max);
        let max_height = max_z - c;
        assert!(
            (max_height - spec.tumor_radius).abs() < 0.2,
            "max height {max_height} vs radius {}",
            spec.tumor_radius
        );
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = PhantomSpec::default();
        let s1 = generate_phantom(&spec).unwrap();
        let s2 = generate_phantom(&spec).unwrap();
        assert_eq!(s1.kidney.vertices(), s2.kidney.vertices());
        assert_eq!(s1.tumor.vertices(), s2.tumor.vertices());
        assert_eq!(s1.kidney.triangles(), s2.kidney.triangles());
    }

    #[test]
    fn different_seed_changes_sampling() {
        let s1 = generate_phantom(&PhantomSpec::default()).unwrap();
        let s2 = generate_phantom(&PhantomSpec {
            seed: 2,
            ..PhantomSpec::default()
        })
        .unwrap();
        assert_ne!(s1.kidney.vertices(), s2.kidney.vertices());
    }

    #[test]
    fn scene_has_both_tissue_classes() {
        let scene = generate_phantom(&PhantomSpec::default()).unwrap();
        assert!(scene
            .kidney_classes
            .iter()
            .any(|&c| c == TissueClass::Healthy));
        assert!(!scene.ground_truth_tumor_points().is_empty());
    }
}
