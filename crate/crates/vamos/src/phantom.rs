//! Analytic test phantoms with known geometry.
//!
//! Every construction documents its designed node/endpoint counts and
//! radii so graph and rasterization code can be checked against ground
//! truth instead of real acquisitions.

use crate::volume::{BinaryMask, Dims, VoxelVolume};

/// Solid ball; center and radius in voxel units (isotropic in voxel space).
pub fn solid_ball(dims: Dims, spacing: [f64; 3], center: [f64; 3], radius_vox: f64) -> BinaryMask {
    let mut m = BinaryMask::empty(dims, spacing);
    paint_ball(&mut m, center, radius_vox);
    m
}

fn paint_ball(m: &mut BinaryMask, center: [f64; 3], radius_vox: f64) {
    let r = radius_vox;
    let lo = |c: f64| ((c - r).floor().max(0.0)) as usize;
    let hi = |c: f64, n: usize| ((c + r).ceil().min(n as f64 - 1.0)) as usize;
    for z in lo(center[2])..=hi(center[2], m.dims.z) {
        for y in lo(center[1])..=hi(center[1], m.dims.y) {
            for x in lo(center[0])..=hi(center[0], m.dims.x) {
                let d2 = (x as f64 - center[0]).powi(2)
                    + (y as f64 - center[1]).powi(2)
                    + (z as f64 - center[2]).powi(2);
                if d2 <= r * r {
                    m.set(x, y, z, true);
                }
            }
        }
    }
}

/// Union of balls swept along the segment p0..p1 (voxel units).
pub fn paint_segment(m: &mut BinaryMask, p0: [f64; 3], p1: [f64; 3], radius_vox: f64) {
    let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2) + (p1[2] - p0[2]).powi(2)).sqrt();
    let steps = ((len / (radius_vox * 0.25).max(0.25)).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let p = [
            p0[0] + t * (p1[0] - p0[0]),
            p0[1] + t * (p1[1] - p0[1]),
            p0[2] + t * (p1[2] - p0[2]),
        ];
        paint_ball(m, p, radius_vox);
    }
}

/// Straight tube along +x at cross-section position (cy, cz), spanning
/// x in [x0, x1]. Designed skeleton: one chain, 2 endpoints, 1 branch.
pub fn straight_tube(
    dims: Dims,
    spacing: [f64; 3],
    radius_vox: f64,
    yz: [usize; 2],
    x_range: [usize; 2],
) -> BinaryMask {
    let mut m = BinaryMask::empty(dims, spacing);
    paint_segment(
        &mut m,
        [x_range[0] as f64, yz[0] as f64, yz[1] as f64],
        [x_range[1] as f64, yz[0] as f64, yz[1] as f64],
        radius_vox,
    );
    m
}

/// Y-shaped junction: a mother tube arriving along +x and two daughters
/// leaving at +/- `half_angle_deg` in the xy-plane. Designed graph after
/// pruning: exactly 1 bifurcation node and 3 endpoints.
pub struct YTube {
    pub mask: BinaryMask,
    /// Junction point in voxel coordinates.
    pub center: [f64; 3],
    /// Unit daughter directions (voxel space).
    pub daughters: [[f64; 3]; 2],
    pub radius_vox: f64,
}

pub fn y_tube(
    dims: Dims,
    spacing: [f64; 3],
    radius_vox: f64,
    half_angle_deg: f64,
    arm_len_vox: f64,
) -> YTube {
    let c = [
        dims.x as f64 * 0.45,
        dims.y as f64 * 0.5,
        dims.z as f64 * 0.5,
    ];
    let a = half_angle_deg.to_radians();
    let d1 = [a.cos(), a.sin(), 0.0];
    let d2 = [a.cos(), -a.sin(), 0.0];
    let mut m = BinaryMask::empty(dims, spacing);
    // mother arrives from -x
    paint_segment(&mut m, [c[0] - arm_len_vox, c[1], c[2]], c, radius_vox);
    for d in [d1, d2] {
        paint_segment(
            &mut m,
            c,
            [c[0] + arm_len_vox * d[0], c[1] + arm_len_vox * d[1], c[2] + arm_len_vox * d[2]],
            radius_vox,
        );
    }
    YTube { mask: m, center: c, daughters: [d1, d2], radius_vox }
}

/// TOF-like source: parenchyma base with a fluid pocket, an air rim, and
/// the vessel mask painted bright. Gives the matter separation three
/// well-separated modes to find.
pub fn tof_like_source(vessels: &BinaryMask, vessel_gray: f32) -> VoxelVolume {
    let dims = vessels.dims;
    let mut v = VoxelVolume::filled(dims, vessels.spacing, 60.0);
    v.origin = vessels.origin;
    let rim = (dims.x.min(dims.y).min(dims.z) / 10).max(2);
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let edge = x < rim
                    || y < rim
                    || z < rim
                    || x >= dims.x - rim
                    || y >= dims.y - rim
                    || z >= dims.z - rim;
                if edge {
                    v.set(x, y, z, 12.0);
                }
            }
        }
    }
    // fluid pocket in one octant
    let fc = [dims.x as f64 * 0.25, dims.y as f64 * 0.7, dims.z as f64 * 0.3];
    let fr = dims.x as f64 * 0.12;
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let d2 = (x as f64 - fc[0]).powi(2) + (y as f64 - fc[1]).powi(2) + (z as f64 - fc[2]).powi(2);
                if d2 <= fr * fr {
                    v.set(x, y, z, 35.0);
                }
            }
        }
    }
    for (i, &on) in vessels.data.iter().enumerate() {
        if on {
            v.data[i] = vessel_gray;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volume_close_to_analytic() {
        let m = solid_ball(Dims::cubic(32), [1.0; 3], [16.0; 3], 8.0);
        let expect = 4.0 / 3.0 * std::f64::consts::PI * 8.0f64.powi(3);
        let got = m.count() as f64;
        assert!((got - expect).abs() / expect < 0.05, "{got} vs {expect}");
    }

    #[test]
    fn y_tube_arms_present() {
        let y = y_tube(Dims::cubic(64), [1.0; 3], 2.0, 45.0, 20.0);
        assert!(y.mask.count() > 500);
        // junction voxel itself is foreground
        assert!(y.mask.get(y.center[0] as usize, y.center[1] as usize, y.center[2] as usize));
    }
}
