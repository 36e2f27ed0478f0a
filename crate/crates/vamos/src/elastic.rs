//! Coarse-grid elastic deformation fields.
//!
//! A small control grid (default 3x3x3 spanning the patch) holds random
//! displacement vectors; the dense field is their trilinear interpolation
//! smoothed by a Gaussian. Warping is backward: trilinear sampling for
//! scalar volumes, nearest-neighbor for masks so ground truth stays
//! binary.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VamosError};
use crate::filter::{gaussian_filter, FilterMode};
use crate::volume::{BinaryMask, Dims, VoxelVolume};

/// Replayable recipe for an elastic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticSpec {
    pub patch_dims: [usize; 3],
    pub grid_dims: [usize; 3],
    /// Control displacement scale, voxels.
    pub alpha: f64,
    /// Smoothing sigma, voxels.
    pub sigma: f64,
    pub seed: u64,
}

impl ElasticSpec {
    pub fn new(patch_dims: Dims, alpha: f64, sigma: f64, seed: u64) -> Self {
        ElasticSpec {
            patch_dims: patch_dims.as_array(),
            grid_dims: [3, 3, 3],
            alpha,
            sigma,
            seed,
        }
    }
}

/// Dense displacement field over a patch, voxels.
#[derive(Debug, Clone)]
pub struct ElasticField {
    pub spec: ElasticSpec,
    pub dims: Dims,
    /// Per-voxel displacement (dx, dy, dz) in voxel units.
    pub displacement: Vec<[f32; 3]>,
}

pub fn make_elastic_field(spec: &ElasticSpec) -> Result<ElasticField> {
    if spec.sigma < 0.0 {
        return Err(VamosError::InvalidArgument("elastic sigma must be >= 0".into()));
    }
    if spec.grid_dims.iter().any(|&g| g < 2) {
        return Err(VamosError::InvalidArgument("elastic grid needs >= 2 points per axis".into()));
    }
    let dims = Dims::new(spec.patch_dims[0], spec.patch_dims[1], spec.patch_dims[2]);
    let [gx, gy, gz] = spec.grid_dims;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let control: Vec<[f64; 3]> = (0..gx * gy * gz)
        .map(|_| {
            [
                rng.gen_range(-spec.alpha..=spec.alpha),
                rng.gen_range(-spec.alpha..=spec.alpha),
                rng.gen_range(-spec.alpha..=spec.alpha),
            ]
        })
        .collect();

    // trilinear interpolation of the control grid over the patch
    let mut comps: Vec<VoxelVolume> =
        (0..3).map(|_| VoxelVolume::zeros(dims, [1.0; 3])).collect();
    let scale = |i: usize, n: usize, g: usize| -> f64 {
        if n <= 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64 * (g - 1) as f64
        }
    };
    for z in 0..dims.z {
        let fz = scale(z, dims.z, gz);
        let (z0, tz) = (fz.floor() as usize, fz.fract());
        let z1 = (z0 + 1).min(gz - 1);
        for y in 0..dims.y {
            let fy = scale(y, dims.y, gy);
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            let y1 = (y0 + 1).min(gy - 1);
            for x in 0..dims.x {
                let fx = scale(x, dims.x, gx);
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let x1 = (x0 + 1).min(gx - 1);
                let at = |cx: usize, cy: usize, cz: usize| -> &[f64; 3] {
                    &control[(cz * gy + cy) * gx + cx]
                };
                for axis in 0..3 {
                    let c00 = at(x0, y0, z0)[axis] * (1.0 - tx) + at(x1, y0, z0)[axis] * tx;
                    let c10 = at(x0, y1, z0)[axis] * (1.0 - tx) + at(x1, y1, z0)[axis] * tx;
                    let c01 = at(x0, y0, z1)[axis] * (1.0 - tx) + at(x1, y0, z1)[axis] * tx;
                    let c11 = at(x0, y1, z1)[axis] * (1.0 - tx) + at(x1, y1, z1)[axis] * tx;
                    let c0 = c00 * (1.0 - ty) + c10 * ty;
                    let c1 = c01 * (1.0 - ty) + c11 * ty;
                    comps[axis].set(x, y, z, (c0 * (1.0 - tz) + c1 * tz) as f32);
                }
            }
        }
    }
    if spec.sigma > 0.0 {
        for c in &mut comps {
            *c = gaussian_filter(c, spec.sigma, FilterMode::Full3d)?;
        }
    }
    let displacement = (0..dims.len())
        .map(|i| [comps[0].data[i], comps[1].data[i], comps[2].data[i]])
        .collect();
    Ok(ElasticField { spec: spec.clone(), dims, displacement })
}

/// Hand-built constant-translation field, used by tests and audits.
pub fn translation_field(dims: Dims, shift: [f64; 3]) -> ElasticField {
    ElasticField {
        spec: ElasticSpec { patch_dims: dims.as_array(), grid_dims: [2, 2, 2], alpha: 0.0, sigma: 0.0, seed: 0 },
        dims,
        displacement: vec![[shift[0] as f32, shift[1] as f32, shift[2] as f32]; dims.len()],
    }
}

fn sample_trilinear(vol: &VoxelVolume, p: [f64; 3]) -> f32 {
    let d = vol.dims;
    let cx = p[0].clamp(0.0, (d.x - 1) as f64);
    let cy = p[1].clamp(0.0, (d.y - 1) as f64);
    let cz = p[2].clamp(0.0, (d.z - 1) as f64);
    let (x0, tx) = (cx.floor() as usize, cx.fract());
    let (y0, ty) = (cy.floor() as usize, cy.fract());
    let (z0, tz) = (cz.floor() as usize, cz.fract());
    let x1 = (x0 + 1).min(d.x - 1);
    let y1 = (y0 + 1).min(d.y - 1);
    let z1 = (z0 + 1).min(d.z - 1);
    let v = |x: usize, y: usize, z: usize| vol.get(x, y, z) as f64;
    let c00 = v(x0, y0, z0) * (1.0 - tx) + v(x1, y0, z0) * tx;
    let c10 = v(x0, y1, z0) * (1.0 - tx) + v(x1, y1, z0) * tx;
    let c01 = v(x0, y0, z1) * (1.0 - tx) + v(x1, y0, z1) * tx;
    let c11 = v(x0, y1, z1) * (1.0 - tx) + v(x1, y1, z1) * tx;
    let c0 = c00 * (1.0 - ty) + c10 * ty;
    let c1 = c01 * (1.0 - ty) + c11 * ty;
    (c0 * (1.0 - tz) + c1 * tz) as f32
}

pub fn apply_deformation(vol: &VoxelVolume, field: &ElasticField) -> Result<VoxelVolume> {
    if vol.dims != field.dims {
        return Err(VamosError::DimsMismatch("apply_deformation volume".into()));
    }
    let mut out = vol.clone();
    for idx in 0..vol.dims.len() {
        let (x, y, z) = vol.dims.coords(idx);
        let d = field.displacement[idx];
        let p = [x as f64 + d[0] as f64, y as f64 + d[1] as f64, z as f64 + d[2] as f64];
        out.data[idx] = sample_trilinear(vol, p);
    }
    Ok(out)
}

pub fn apply_deformation_mask(mask: &BinaryMask, field: &ElasticField) -> Result<BinaryMask> {
    if mask.dims != field.dims {
        return Err(VamosError::DimsMismatch("apply_deformation mask".into()));
    }
    let d = mask.dims;
    let mut out = mask.clone();
    for idx in 0..d.len() {
        let (x, y, z) = d.coords(idx);
        let disp = field.displacement[idx];
        let sx = (x as f64 + disp[0] as f64).round().clamp(0.0, (d.x - 1) as f64) as usize;
        let sy = (y as f64 + disp[1] as f64).round().clamp(0.0, (d.y - 1) as f64) as usize;
        let sz = (z as f64 + disp[2] as f64).round().clamp(0.0, (d.z - 1) as f64) as usize;
        out.data[idx] = mask.get(sx, sy, sz);
    }
    Ok(out)
}

/// Warp a label grid with nearest-neighbor sampling; no new labels appear.
pub fn apply_deformation_labels(labels: &[u8], dims: Dims, field: &ElasticField) -> Result<Vec<u8>> {
    if dims != field.dims {
        return Err(VamosError::DimsMismatch("apply_deformation labels".into()));
    }
    let mut out = vec![0u8; dims.len()];
    for idx in 0..dims.len() {
        let (x, y, z) = dims.coords(idx);
        let disp = field.displacement[idx];
        let sx = (x as f64 + disp[0] as f64).round().clamp(0.0, (dims.x - 1) as f64) as usize;
        let sy = (y as f64 + disp[1] as f64).round().clamp(0.0, (dims.y - 1) as f64) as usize;
        let sz = (z as f64 + disp[2] as f64).round().clamp(0.0, (dims.z - 1) as f64) as usize;
        out[idx] = labels[dims.index(sx, sy, sz)];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_zero_is_identity_field() {
        let spec = ElasticSpec::new(Dims::cubic(16), 0.0, 2.0, 5);
        let f = make_elastic_field(&spec).unwrap();
        for d in &f.displacement {
            assert_eq!(*d, [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn same_seed_same_field() {
        let spec = ElasticSpec::new(Dims::cubic(16), 3.0, 2.0, 42);
        let a = make_elastic_field(&spec).unwrap();
        let b = make_elastic_field(&spec).unwrap();
        assert_eq!(a.displacement, b.displacement);
    }

    #[test]
    fn identity_field_returns_input() {
        let mut v = VoxelVolume::zeros(Dims::cubic(8), [1.0; 3]);
        v.set(3, 4, 5, 7.0);
        let f = translation_field(v.dims, [0.0; 3]);
        assert_eq!(apply_deformation(&v, &f).unwrap(), v);
        let m = BinaryMask::from_volume(&v, 0.5);
        assert_eq!(apply_deformation_mask(&m, &f).unwrap(), m);
    }

    #[test]
    fn translation_shifts_interior_exactly() {
        let mut v = VoxelVolume::zeros(Dims::cubic(16), [1.0; 3]);
        v.set(8, 8, 8, 100.0);
        // backward warp with displacement +2 in x pulls the value 2 voxels down
        let f = translation_field(v.dims, [2.0, 0.0, 0.0]);
        let w = apply_deformation(&v, &f).unwrap();
        assert_eq!(w.get(6, 8, 8), 100.0);
        assert_eq!(w.get(8, 8, 8), 0.0);
    }

    #[test]
    fn larger_sigma_smooths_gradients() {
        let dims = Dims::cubic(24);
        let grad_max = |sigma: f64| -> f64 {
            let mut worst: f64 = 0.0;
            for seed in 0..5u64 {
                let f = make_elastic_field(&ElasticSpec::new(dims, 3.0, sigma, seed)).unwrap();
                for z in 0..dims.z {
                    for y in 0..dims.y {
                        for x in 1..dims.x {
                            let a = f.displacement[dims.index(x, y, z)];
                            let b = f.displacement[dims.index(x - 1, y, z)];
                            for axis in 0..3 {
                                worst = worst.max((a[axis] - b[axis]).abs() as f64);
                            }
                        }
                    }
                }
            }
            worst
        };
        assert!(grad_max(4.0) <= grad_max(0.0) + 1e-9);
    }

    #[test]
    fn mask_warp_small_field_preserves_volume_roughly() {
        let dims = Dims::cubic(32);
        let ball = crate::phantom::solid_ball(dims, [1.0; 3], [16.0; 3], 8.0);
        let before = ball.count() as f64;
        for seed in 0..10u64 {
            let f = make_elastic_field(&ElasticSpec::new(dims, 2.0, 2.0, seed)).unwrap();
            let warped = apply_deformation_mask(&ball, &f).unwrap();
            let after = warped.count() as f64;
            assert!(
                ((after - before) / before).abs() <= 0.15,
                "seed {seed}: {before} -> {after}"
            );
        }
    }

    #[test]
    fn translation_involutive_on_interior() {
        let mut v = VoxelVolume::zeros(Dims::cubic(16), [1.0; 3]);
        v.set(8, 8, 8, 50.0);
        let f = translation_field(v.dims, [2.0, 1.0, 0.0]);
        let g = translation_field(v.dims, [-2.0, -1.0, 0.0]);
        let back = apply_deformation(&apply_deformation(&v, &f).unwrap(), &g).unwrap();
        assert_eq!(back.get(8, 8, 8), 50.0);
    }
}
