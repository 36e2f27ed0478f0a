//! Parametric aneurysm sacs and their placement at bifurcations.
//!
//! The sac is a deformed digital ball; its center sits on the bisector of
//! the two daughter arteries at the stand-off distance
//! D = r*gamma + sqrt((R/tan(Theta/2))^2 + R^2).

use serde::{Deserialize, Serialize};

use crate::components::{connected_components, Connectivity};
use crate::elastic::{apply_deformation_mask, make_elastic_field, ElasticSpec};
use crate::error::{Result, VamosError};
use crate::graph::BifurcationLocale;
use crate::raster::gray_from_mask;
use crate::volume::{BinaryMask, Dims, VoxelVolume};

/// Control displacement scale for sac deformation, voxels.
pub const SAC_DEFORM_ALPHA_VOX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AneurysmSpec {
    /// Sac radius, mm.
    pub radius_mm: f64,
    /// Growth parameter modulating the stand-off.
    pub gamma: f64,
    /// Elastic deformation sigma, voxels.
    pub sigma: f64,
    pub seed: u64,
}

impl AneurysmSpec {
    pub const RADIUS_RANGE_MM: (f64, f64) = (0.4, 2.0);
    pub const GAMMA_RANGE: (f64, f64) = (0.7, 1.0);
    pub const SIGMA_RANGE: (f64, f64) = (1.0, 4.0);
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacedAneurysm {
    /// Sac center, world mm.
    pub center_world: [f64; 3],
    /// Stand-off distance D, mm.
    pub stand_off_mm: f64,
    /// Radius recovered from the sac voxel count, mm.
    pub equivalent_radius_mm: f64,
    pub spec: AneurysmSpec,
    pub locale_node: usize,
    /// Set when the bisector was degenerate and an orthogonal fallback
    /// direction was used.
    pub bisector_fallback: bool,
}

/// Stand-off distance between the sac center and the bifurcation node.
pub fn stand_off_distance(r_mm: f64, gamma: f64, branch_radius_mm: f64, theta: f64) -> Result<f64> {
    if theta <= 0.0 || theta > std::f64::consts::PI {
        return Err(VamosError::InvalidArgument(format!("theta {theta} outside (0, pi]")));
    }
    if r_mm <= 0.0 || branch_radius_mm <= 0.0 || gamma <= 0.0 {
        return Err(VamosError::InvalidArgument("r, R and gamma must be positive".into()));
    }
    let half = theta / 2.0;
    // at theta = pi the tangent diverges and the radical collapses to R
    let hypot = if (theta - std::f64::consts::PI).abs() < 1e-12 {
        branch_radius_mm
    } else {
        let l = branch_radius_mm / half.tan();
        (l * l + branch_radius_mm * branch_radius_mm).sqrt()
    };
    Ok(r_mm * gamma + hypot)
}

const ANTIPARALLEL_EPS: f64 = 1e-9;

/// Unit bisector of the two daughter tangents. For anti-parallel daughters
/// the bisector is undefined; an arbitrary unit vector orthogonal to their
/// common axis is returned with the fallback flag set.
pub fn bisector_direction(locale: &BifurcationLocale) -> ([f64; 3], bool) {
    let a = locale.daughter_tangents[0];
    let b = locale.daughter_tangents[1];
    let sum = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let n = (sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2]).sqrt();
    if n > ANTIPARALLEL_EPS {
        return ([sum[0] / n, sum[1] / n, sum[2] / n], false);
    }
    // any unit vector orthogonal to the common axis
    let axis = a;
    let pick = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let cross = [
        axis[1] * pick[2] - axis[2] * pick[1],
        axis[2] * pick[0] - axis[0] * pick[2],
        axis[0] * pick[1] - axis[1] * pick[0],
    ];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    ([cross[0] / cn, cross[1] / cn, cross[2] / cn], true)
}

/// Deformed digital ball in a local grid, single 26-connected component.
pub fn make_aneurysm(spec: &AneurysmSpec, spacing: [f64; 3]) -> Result<BinaryMask> {
    let min_sp = spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    if spec.radius_mm < min_sp {
        return Err(VamosError::InvalidArgument(format!(
            "sac radius {} mm below one voxel ({} mm)",
            spec.radius_mm, min_sp
        )));
    }
    let r_vox = spacing.map(|s| spec.radius_mm / s);
    let margin = (SAC_DEFORM_ALPHA_VOX + 2.0 * spec.sigma).ceil() as usize + 2;
    let half = [
        r_vox[0].ceil() as usize + margin,
        r_vox[1].ceil() as usize + margin,
        r_vox[2].ceil() as usize + margin,
    ];
    let dims = Dims::new(2 * half[0] + 1, 2 * half[1] + 1, 2 * half[2] + 1);
    let mut ball = BinaryMask::empty(dims, spacing);
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let d2 = ((x as f64 - half[0] as f64) * spacing[0]).powi(2)
                    + ((y as f64 - half[1] as f64) * spacing[1]).powi(2)
                    + ((z as f64 - half[2] as f64) * spacing[2]).powi(2);
                if d2 <= spec.radius_mm * spec.radius_mm {
                    ball.set(x, y, z, true);
                }
            }
        }
    }
    let field = make_elastic_field(&ElasticSpec {
        patch_dims: dims.as_array(),
        grid_dims: [3, 3, 3],
        alpha: SAC_DEFORM_ALPHA_VOX,
        sigma: spec.sigma,
        seed: spec.seed,
    })?;
    let warped = apply_deformation_mask(&ball, &field)?;
    // deformation can pinch off slivers; keep the main body
    let labeled = connected_components(&warped, Connectivity::TwentySix);
    let largest = labeled
        .voxels
        .iter()
        .enumerate()
        .max_by_key(|(_, v)| v.len())
        .map(|(i, _)| i as u32 + 1)
        .ok_or_else(|| VamosError::Placement("deformation erased the sac".into()))?;
    let mut out = BinaryMask::empty(dims, spacing);
    for (i, &l) in labeled.labels.iter().enumerate() {
        out.data[i] = l == largest;
    }
    Ok(out)
}

/// Radius of the sphere with the same voxel volume.
pub fn equivalent_radius_mm(mask: &BinaryMask) -> f64 {
    let voxel = mask.spacing[0] * mask.spacing[1] * mask.spacing[2];
    let v = mask.count() as f64 * voxel;
    (3.0 * v / (4.0 * std::f64::consts::PI)).powf(1.0 / 3.0)
}

fn centroid_vox(mask: &BinaryMask) -> Option<[f64; 3]> {
    let mut acc = [0.0f64; 3];
    let mut n = 0usize;
    for (i, &on) in mask.data.iter().enumerate() {
        if on {
            let (x, y, z) = mask.dims.coords(i);
            acc[0] += x as f64;
            acc[1] += y as f64;
            acc[2] += z as f64;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    Some([acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64])
}

/// Full result of sac attachment.
#[derive(Debug, Clone)]
pub struct AttachedAneurysm {
    /// Patch gray with the sac composited in (voxelwise max).
    pub composited: VoxelVolume,
    /// Ground-truth lesion mask: sac voxels not claimed by the vessel.
    pub gt_mask: BinaryMask,
    /// Complete sac envelope including the vessel overlap.
    pub sac_mask: BinaryMask,
    pub placed: PlacedAneurysm,
}

/// Attach a sac to a rendered patch: composite the gray and report the
/// masks and placement record.
pub fn attach_aneurysm(
    patch_gray: &VoxelVolume,
    vessel_mask: &BinaryMask,
    locale: &BifurcationLocale,
    spec: &AneurysmSpec,
    gray: f32,
    allow_bisector_fallback: bool,
) -> Result<AttachedAneurysm> {
    if patch_gray.dims != vessel_mask.dims {
        return Err(VamosError::DimsMismatch("attach_aneurysm patch/vessel".into()));
    }
    let d = stand_off_distance(spec.radius_mm, spec.gamma, locale.radius_mm, locale.theta)?;
    let (dir, fallback) = bisector_direction(locale);
    if fallback && !allow_bisector_fallback {
        return Err(VamosError::Placement("bisector undefined (anti-parallel daughters)".into()));
    }
    let center_world = [
        locale.node_world[0] + d * dir[0],
        locale.node_world[1] + d * dir[1],
        locale.node_world[2] + d * dir[2],
    ];
    let sp = patch_gray.spacing;
    let center_vox = [
        (center_world[0] - patch_gray.origin[0]) / sp[0],
        (center_world[1] - patch_gray.origin[1]) / sp[1],
        (center_world[2] - patch_gray.origin[2]) / sp[2],
    ];
    // the whole sac must fit inside the patch
    for axis in 0..3 {
        let r_vox = spec.radius_mm / sp[axis] + 1.0;
        let n = patch_gray.dims.as_array()[axis] as f64;
        if center_vox[axis] - r_vox < 0.0 || center_vox[axis] + r_vox > n - 1.0 {
            return Err(VamosError::Placement(format!(
                "sac exits the patch on axis {axis} (center {:.1}, radius {:.1} vox)",
                center_vox[axis], r_vox
            )));
        }
    }

    // deform in a local grid, then paste centroid-aligned so the designed
    // center survives the deformation
    let local = make_aneurysm(spec, sp)?;
    let local_centroid = centroid_vox(&local)
        .ok_or_else(|| VamosError::Placement("empty sac".into()))?;
    let mut sac = BinaryMask::empty(patch_gray.dims, sp);
    sac.origin = patch_gray.origin;
    for (i, &on) in local.data.iter().enumerate() {
        if !on {
            continue;
        }
        let (lx, ly, lz) = local.dims.coords(i);
        let px = (lx as f64 - local_centroid[0] + center_vox[0]).round() as i64;
        let py = (ly as f64 - local_centroid[1] + center_vox[1]).round() as i64;
        let pz = (lz as f64 - local_centroid[2] + center_vox[2]).round() as i64;
        if sac.dims.contains(px, py, pz) {
            sac.set(px as usize, py as usize, pz as usize, true);
        }
    }

    let sac_gray = gray_from_mask(&sac, gray)?;
    let mut composited = patch_gray.clone();
    for (a, &b) in composited.data.iter_mut().zip(sac_gray.data.iter()) {
        *a = a.max(b);
    }
    let mut gt = sac.clone();
    for (g, &v) in gt.data.iter_mut().zip(vessel_mask.data.iter()) {
        *g &= !v;
    }
    let placed = PlacedAneurysm {
        center_world,
        stand_off_mm: d,
        equivalent_radius_mm: equivalent_radius_mm(&sac),
        spec: *spec,
        locale_node: locale.node_id,
        bisector_fallback: fallback,
    };
    Ok(AttachedAneurysm { composited, gt_mask: gt, sac_mask: sac, placed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stand_off_reference_values() {
        // r=1, gamma=1, R=1, Theta=90 deg -> 1 + sqrt(2)
        let d = stand_off_distance(1.0, 1.0, 1.0, 90.0f64.to_radians()).unwrap();
        assert!((d - (1.0 + 2.0f64.sqrt())).abs() < 1e-9);
        // r=1.2, gamma=0.7, R=0.8, Theta=60 deg -> 0.84 + 1.6
        let d = stand_off_distance(1.2, 0.7, 0.8, 60.0f64.to_radians()).unwrap();
        assert!((d - 2.44).abs() < 1e-9, "{d}");
    }

    #[test]
    fn stand_off_collinear_limit() {
        let d = stand_off_distance(1.5, 0.9, 0.7, std::f64::consts::PI).unwrap();
        assert!((d - (1.5 * 0.9 + 0.7)).abs() < 1e-12);
    }

    #[test]
    fn stand_off_rejects_bad_theta() {
        assert!(stand_off_distance(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(stand_off_distance(1.0, 1.0, 1.0, -0.5).is_err());
    }

    #[test]
    fn stand_off_monotonicity() {
        let base = stand_off_distance(1.0, 0.8, 1.0, 1.2).unwrap();
        assert!(stand_off_distance(1.2, 0.8, 1.0, 1.2).unwrap() > base);
        assert!(stand_off_distance(1.0, 0.9, 1.0, 1.2).unwrap() > base);
        assert!(stand_off_distance(1.0, 0.8, 1.2, 1.2).unwrap() > base);
        assert!(stand_off_distance(1.0, 0.8, 1.0, 1.5).unwrap() < base);
    }

    #[test]
    fn derivation_chain_consistency() {
        // H^2 - (R/tan theta)^2 - R^2 == 0 for the hypotenuse of Eq. 5
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let r_branch = rng.gen_range(0.2..3.0);
            let theta = rng.gen_range(1e-3..std::f64::consts::FRAC_PI_2);
            let l = r_branch / theta.tan();
            let h2 = l * l + r_branch * r_branch;
            assert!((h2 - (r_branch / theta.tan()).powi(2) - r_branch * r_branch).abs() < 1e-9);
            // and L recovers from H
            let l_back = (h2 - r_branch * r_branch).sqrt();
            assert!((l_back - l).abs() < 1e-9);
        }
    }

    fn locale_with_tangents(a: [f64; 3], b: [f64; 3]) -> BifurcationLocale {
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        BifurcationLocale {
            node_id: 0,
            mother_branch: 0,
            daughter_branches: [1, 2],
            daughter_tangents: [a, b],
            theta: dot.clamp(-1.0, 1.0).acos(),
            radius_mm: 1.0,
            node_world: [0.0; 3],
        }
    }

    #[test]
    fn bisector_symmetric_y() {
        let s = 45.0f64.to_radians();
        let loc = locale_with_tangents([s.cos(), s.sin(), 0.0], [s.cos(), -s.sin(), 0.0]);
        let (dir, fb) = bisector_direction(&loc);
        assert!(!fb);
        assert!((dir[0] - 1.0).abs() < 1e-12 && dir[1].abs() < 1e-12);
    }

    #[test]
    fn bisector_of_orthogonal_axes() {
        let loc = locale_with_tangents([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let (dir, _) = bisector_direction(&loc);
        let e = 1.0 / 2.0f64.sqrt();
        assert!((dir[0] - e).abs() < 1e-12 && (dir[1] - e).abs() < 1e-12);
    }

    #[test]
    fn bisector_equal_angles_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let rand_unit = |rng: &mut ChaCha8Rng| -> [f64; 3] {
                loop {
                    let v: [f64; 3] = [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ];
                    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if n > 1e-3 {
                        return [v[0] / n, v[1] / n, v[2] / n];
                    }
                }
            };
            let a = rand_unit(&mut rng);
            let b = rand_unit(&mut rng);
            let loc = locale_with_tangents(a, b);
            let (dir, fb) = bisector_direction(&loc);
            if fb {
                continue;
            }
            let ang = |u: [f64; 3], v: [f64; 3]| {
                (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0).acos()
            };
            assert!((ang(dir, a) - ang(dir, b)).abs() < 1e-6);
        }
    }

    #[test]
    fn bisector_antiparallel_fallback_is_orthogonal() {
        let loc = locale_with_tangents([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]);
        let (dir, fb) = bisector_direction(&loc);
        assert!(fb);
        assert!(dir[0].abs() < 1e-9);
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sac_deterministic_and_single_component() {
        let spec = AneurysmSpec { radius_mm: 2.0, gamma: 1.0, sigma: 2.0, seed: 33 };
        let a = make_aneurysm(&spec, [0.4; 3]).unwrap();
        let b = make_aneurysm(&spec, [0.4; 3]).unwrap();
        assert_eq!(a, b);
        let labeled = connected_components(&a, Connectivity::TwentySix);
        assert_eq!(labeled.count(), 1);
    }

    #[test]
    fn sac_equivalent_radius_within_25_percent() {
        for seed in 0..20u64 {
            for sigma in [1.0, 2.5, 4.0] {
                let spec = AneurysmSpec { radius_mm: 2.0, gamma: 1.0, sigma, seed };
                let sac = make_aneurysm(&spec, [0.4; 3]).unwrap();
                let eq = equivalent_radius_mm(&sac);
                assert!(
                    (eq - 2.0).abs() / 2.0 <= 0.25,
                    "seed {seed} sigma {sigma}: equivalent radius {eq}"
                );
            }
        }
    }

    #[test]
    fn undeformed_sac_is_spherical() {
        // sigma at minimum, amplitude suppressed via seed-independent check:
        // alpha is fixed, so emulate the undeformed case directly
        let spec = AneurysmSpec { radius_mm: 2.0, gamma: 1.0, sigma: 1.0, seed: 0 };
        let sp = [0.4; 3];
        let r_vox = 5.0;
        let dims = Dims::cubic(21);
        let mut ball = BinaryMask::empty(dims, sp);
        for z in 0..21 {
            for y in 0..21 {
                for x in 0..21 {
                    let d2 = (x as f64 - 10.0).powi(2) + (y as f64 - 10.0).powi(2) + (z as f64 - 10.0).powi(2);
                    if d2 <= r_vox * r_vox {
                        ball.set(x, y, z, true);
                    }
                }
            }
        }
        let eq = equivalent_radius_mm(&ball);
        assert!((eq - spec.radius_mm).abs() / spec.radius_mm < 0.1, "{eq}");
    }

    #[test]
    fn attach_places_sac_at_stand_off() {
        use crate::raster::rasterize_tube;
        let dims = Dims::cubic(64);
        let sp = [0.4; 3];
        // V-shaped vessel opening toward +x with node at the patch center
        let node = [32.0, 32.0, 32.0];
        let s = 45.0f64.to_radians();
        let mut line1 = vec![node];
        let mut line2 = vec![node];
        for i in 1..30 {
            let t = i as f64;
            line1.push([node[0] + t * s.cos(), node[1] + t * s.sin(), node[2]]);
            line2.push([node[0] + t * s.cos(), node[1] - t * s.sin(), node[2]]);
        }
        let radii = vec![0.8; 30];
        let (g1, m1) = rasterize_tube(&line1, &radii, dims, sp, 300.0).unwrap();
        let (g2, m2) = rasterize_tube(&line2, &radii, dims, sp, 300.0).unwrap();
        let vessel = m1.union(&m2).unwrap();
        let mut gray = g1.clone();
        for (a, &b) in gray.data.iter_mut().zip(g2.data.iter()) {
            *a = a.max(b);
        }
        let loc = BifurcationLocale {
            node_id: 7,
            mother_branch: 0,
            daughter_branches: [1, 2],
            daughter_tangents: [[s.cos(), s.sin(), 0.0], [s.cos(), -s.sin(), 0.0]],
            theta: std::f64::consts::FRAC_PI_2,
            radius_mm: 0.8,
            node_world: [node[0] * sp[0], node[1] * sp[1], node[2] * sp[2]],
        };
        for seed in 0..5u64 {
            let spec = AneurysmSpec { radius_mm: 1.2, gamma: 0.85, sigma: 2.0, seed };
            let att = attach_aneurysm(&gray, &vessel, &loc, &spec, 300.0, false).unwrap();
            let (comp, gt, placed) = (&att.composited, &att.gt_mask, &att.placed);
            assert!(!placed.bisector_fallback);
            let d_expect =
                stand_off_distance(spec.radius_mm, spec.gamma, loc.radius_mm, loc.theta).unwrap();
            assert!((placed.stand_off_mm - d_expect).abs() < 1e-12);
            // full sac centroid sits at the stand-off from the node within
            // half a voxel
            let c = centroid_vox(&att.sac_mask).unwrap();
            let c_world = [c[0] * sp[0], c[1] * sp[1], c[2] * sp[2]];
            let dist = ((c_world[0] - loc.node_world[0]).powi(2)
                + (c_world[1] - loc.node_world[1]).powi(2)
                + (c_world[2] - loc.node_world[2]).powi(2))
            .sqrt();
            assert!(
                (dist - d_expect).abs() <= 0.5 * sp[0] + 1e-9,
                "seed {seed}: centroid distance {dist} vs {d_expect}"
            );
            // composite only raises intensities
            for (a, b) in comp.data.iter().zip(gray.data.iter()) {
                assert!(a >= b);
            }
            // ground truth never overlaps vessel voxels
            for (g, v) in gt.data.iter().zip(vessel.data.iter()) {
                assert!(!(*g && *v));
            }
            assert!(gt.count() > 0);
        }
    }

    #[test]
    fn attach_rejects_out_of_patch_sac() {
        let dims = Dims::cubic(24);
        let sp = [0.4; 3];
        let gray = VoxelVolume::zeros(dims, sp);
        let vessel = BinaryMask::empty(dims, sp);
        let loc = BifurcationLocale {
            node_id: 0,
            mother_branch: 0,
            daughter_branches: [1, 2],
            daughter_tangents: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            theta: std::f64::consts::FRAC_PI_2,
            radius_mm: 0.8,
            node_world: [8.8, 8.8, 4.6],
        };
        let spec = AneurysmSpec { radius_mm: 2.0, gamma: 1.0, sigma: 1.0, seed: 1 };
        assert!(matches!(
            attach_aneurysm(&gray, &vessel, &loc, &spec, 300.0, false),
            Err(VamosError::Placement(_))
        ));
    }

    #[test]
    fn sub_voxel_radius_rejected() {
        let spec = AneurysmSpec { radius_mm: 0.2, gamma: 1.0, sigma: 1.0, seed: 0 };
        assert!(make_aneurysm(&spec, [0.4; 3]).is_err());
    }
}
