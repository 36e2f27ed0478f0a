//! Centerline-to-voxel tube rasterization.
//!
//! A tube is the union of balls swept along the (resampled) centerline,
//! with the ball radius following the local vessel radius. The gray
//! volume is the binary envelope times the target gray level with a small
//! partial-volume blur on the edges; the mask itself stays crisp.

use crate::error::{Result, VamosError};
use crate::filter::{gaussian_filter, FilterMode};
use crate::volume::{BinaryMask, Dims, VoxelVolume};

/// Partial-volume edge blur applied to the gray tube, voxels.
pub const EDGE_BLUR_SIGMA_VOX: f64 = 0.5;

/// Linearly resample a polyline (voxel coords) with per-point radii (mm)
/// so consecutive samples are closer than `max_step_mm`.
fn resample(
    points: &[[f64; 3]],
    radii_mm: &[f64],
    spacing: [f64; 3],
    max_step_mm: f64,
) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut out_p = vec![points[0]];
    let mut out_r = vec![radii_mm[0]];
    for i in 1..points.len() {
        let (a, b) = (points[i - 1], points[i]);
        let step_mm = (0..3)
            .map(|k| ((b[k] - a[k]) * spacing[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        let n = (step_mm / max_step_mm).ceil().max(1.0) as usize;
        for s in 1..=n {
            let t = s as f64 / n as f64;
            out_p.push([
                a[0] + t * (b[0] - a[0]),
                a[1] + t * (b[1] - a[1]),
                a[2] + t * (b[2] - a[2]),
            ]);
            out_r.push(radii_mm[i - 1] + t * (radii_mm[i] - radii_mm[i - 1]));
        }
    }
    (out_p, out_r)
}

fn paint_ball_mm(mask: &mut BinaryMask, center: [f64; 3], radius_mm: f64) {
    let d = mask.dims;
    let sp = mask.spacing;
    let lo = |c: f64, s: f64| ((c - radius_mm / s).floor().max(0.0)) as usize;
    let hi = |c: f64, s: f64, n: usize| ((c + radius_mm / s).ceil().min(n as f64 - 1.0)) as usize;
    for z in lo(center[2], sp[2])..=hi(center[2], sp[2], d.z) {
        for y in lo(center[1], sp[1])..=hi(center[1], sp[1], d.y) {
            for x in lo(center[0], sp[0])..=hi(center[0], sp[0], d.x) {
                let d2 = ((x as f64 - center[0]) * sp[0]).powi(2)
                    + ((y as f64 - center[1]) * sp[1]).powi(2)
                    + ((z as f64 - center[2]) * sp[2]).powi(2);
                if d2 <= radius_mm * radius_mm {
                    mask.set(x, y, z, true);
                }
            }
        }
    }
}

/// Rasterize one tube into a fresh grid of `dims`/`spacing`. Centerline
/// points are voxel coordinates; radii are mm per point.
pub fn rasterize_tube(
    centerline: &[[f64; 3]],
    radii_mm: &[f64],
    dims: Dims,
    spacing: [f64; 3],
    gray: f32,
) -> Result<(VoxelVolume, BinaryMask)> {
    if centerline.is_empty() {
        return Err(VamosError::InvalidArgument("empty centerline".into()));
    }
    if centerline.len() != radii_mm.len() {
        return Err(VamosError::InvalidArgument("centerline/radii length mismatch".into()));
    }
    if radii_mm.iter().any(|&r| !(r > 0.0)) {
        return Err(VamosError::InvalidArgument("non-positive tube radius".into()));
    }
    let mask = rasterize_tube_mask(centerline, radii_mm, dims, spacing)?;
    let gray_vol = gray_from_mask(&mask, gray)?;
    Ok((gray_vol, mask))
}

/// Binary envelope only (no gray assignment).
pub fn rasterize_tube_mask(
    centerline: &[[f64; 3]],
    radii_mm: &[f64],
    dims: Dims,
    spacing: [f64; 3],
) -> Result<BinaryMask> {
    if centerline.is_empty() {
        return Err(VamosError::InvalidArgument("empty centerline".into()));
    }
    let min_r = radii_mm.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_step = (min_r / 2.0).max(spacing.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0);
    let (pts, rad) = resample(centerline, radii_mm, spacing, max_step);
    let mut mask = BinaryMask::empty(dims, spacing);
    for (p, r) in pts.iter().zip(rad.iter()) {
        paint_ball_mm(&mut mask, *p, *r);
    }
    Ok(mask)
}

/// Multiply a binary envelope by the target gray level and apply the
/// partial-volume edge blur.
pub fn gray_from_mask(mask: &BinaryMask, gray: f32) -> Result<VoxelVolume> {
    let mut vol = mask.to_volume();
    for v in &mut vol.data {
        *v *= gray;
    }
    gaussian_filter(&vol, EDGE_BLUR_SIGMA_VOX, FilterMode::Full3d)
}
