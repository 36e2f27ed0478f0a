//! Voxel-grid containers shared by every stage of the pipeline.
//!
//! Grids are stored x-fastest. Physical placement is carried by `spacing`
//! (mm per voxel, per axis) and `origin` (world mm of voxel (0,0,0)), so
//! crops and anisotropic volumes keep their world coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VamosError};

/// Nominal 12-bit gray range used for compositing headroom.
pub const GRAY_MAX: f32 = 4095.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Dims { x, y, z }
    }

    pub fn len(&self) -> usize {
        self.x * self.y * self.z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cubic(n: usize) -> Self {
        Dims { x: n, y: n, z: n }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.y + y) * self.x + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.x;
        let y = (idx / self.x) % self.y;
        let z = idx / (self.x * self.y);
        (x, y, z)
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0 && y >= 0 && z >= 0 && (x as usize) < self.x && (y as usize) < self.y && (z as usize) < self.z
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }
}

/// Scalar 3D grid with physical spacing; the universal image carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    pub dims: Dims,
    /// mm per voxel, strictly positive per axis.
    pub spacing: [f64; 3],
    /// World position (mm) of the center of voxel (0,0,0).
    pub origin: [f64; 3],
    pub data: Vec<f32>,
}

impl VoxelVolume {
    pub const DEFAULT_SPACING: f64 = 0.4;

    pub fn new(dims: Dims, spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(VamosError::PayloadLength { expected: dims.len(), actual: data.len() });
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(VamosError::InvalidArgument(format!("non-positive spacing {spacing:?}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(VamosError::NonFinite);
        }
        Ok(VoxelVolume { dims, spacing, origin, data })
    }

    pub fn filled(dims: Dims, spacing: [f64; 3], value: f32) -> Self {
        VoxelVolume { dims, spacing, origin: [0.0; 3], data: vec![value; dims.len()] }
    }

    pub fn zeros(dims: Dims, spacing: [f64; 3]) -> Self {
        Self::filled(dims, spacing, 0.0)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    /// World coordinates (mm) of a voxel center.
    pub fn world(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            self.origin[0] + x as f64 * self.spacing[0],
            self.origin[1] + y as f64 * self.spacing[1],
            self.origin[2] + z as f64 * self.spacing[2],
        ]
    }

    /// Physical extent per axis in mm.
    pub fn extent_mm(&self) -> [f64; 3] {
        [
            self.dims.x as f64 * self.spacing[0],
            self.dims.y as f64 * self.spacing[1],
            self.dims.z as f64 * self.spacing[2],
        ]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn std(&self) -> f64 {
        if self.data.len() < 2 {
            return 0.0;
        }
        let m = self.mean();
        let var = self.data.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (self.data.len() - 1) as f64;
        var.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.dims.len() {
            return Err(VamosError::PayloadLength { expected: self.dims.len(), actual: self.data.len() });
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(VamosError::NonFinite);
        }
        Ok(())
    }
}

/// One-bit-per-voxel grid sharing the VoxelVolume geometry conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(dims: Dims, spacing: [f64; 3]) -> Self {
        BinaryMask { dims, spacing, origin: [0.0; 3], data: vec![false; dims.len()] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn world(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            self.origin[0] + x as f64 * self.spacing[0],
            self.origin[1] + y as f64 * self.spacing[1],
            self.origin[2] + z as f64 * self.spacing[2],
        ]
    }

    /// Lossless {0,1} scalar view.
    pub fn to_volume(&self) -> VoxelVolume {
        VoxelVolume {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn from_volume(vol: &VoxelVolume, threshold: f32) -> Self {
        BinaryMask {
            dims: vol.dims,
            spacing: vol.spacing,
            origin: vol.origin,
            data: vol.data.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.dims != other.dims {
            return Err(VamosError::DimsMismatch("mask union".into()));
        }
        let mut out = self.clone();
        for (a, &b) in out.data.iter_mut().zip(other.data.iter()) {
            *a |= b;
        }
        Ok(out)
    }
}

/// Matter label grid: 0=air, 1=fluid, 2=parenchyma, 3=vessel.
pub const MATTER_AIR: u8 = 0;
pub const MATTER_FLUID: u8 = 1;
pub const MATTER_PARENCHYMA: u8 = 2;
pub const MATTER_VESSEL: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: u8,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// Set when the class is too small (< 32 voxels) or has zero spread.
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatterMap {
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub labels: Vec<u8>,
    pub stats: Vec<ClassStats>,
}

impl MatterMap {
    pub fn class_mask(&self, label: u8) -> BinaryMask {
        BinaryMask {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            data: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    pub fn present_labels(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&l| seen[l as usize]).collect()
    }

    pub fn stats_for(&self, label: u8) -> Option<&ClassStats> {
        self.stats.iter().find(|s| s.label == label)
    }
}

/// Crop a box of `size` voxels centered on `center`, padding with `pad_value`
/// outside the source. The origin is shifted so world coordinates are kept.
pub fn crop(vol: &VoxelVolume, center: [i64; 3], size: [usize; 3], pad_value: f32) -> VoxelVolume {
    let out_dims = Dims::new(size[0], size[1], size[2]);
    let start = [
        center[0] - (size[0] / 2) as i64,
        center[1] - (size[1] / 2) as i64,
        center[2] - (size[2] / 2) as i64,
    ];
    let mut data = vec![pad_value; out_dims.len()];
    for z in 0..size[2] {
        let sz = start[2] + z as i64;
        for y in 0..size[1] {
            let sy = start[1] + y as i64;
            for x in 0..size[0] {
                let sx = start[0] + x as i64;
                if vol.dims.contains(sx, sy, sz) {
                    data[out_dims.index(x, y, z)] = vol.get(sx as usize, sy as usize, sz as usize);
                }
            }
        }
    }
    VoxelVolume {
        dims: out_dims,
        spacing: vol.spacing,
        origin: [
            vol.origin[0] + start[0] as f64 * vol.spacing[0],
            vol.origin[1] + start[1] as f64 * vol.spacing[1],
            vol.origin[2] + start[2] as f64 * vol.spacing[2],
        ],
        data,
    }
}

/// Mask crop with background padding; same origin bookkeeping as `crop`.
pub fn crop_mask(mask: &BinaryMask, center: [i64; 3], size: [usize; 3]) -> BinaryMask {
    let vol = mask.to_volume();
    let cropped = crop(&vol, center, size, 0.0);
    BinaryMask::from_volume(&cropped, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip_x_fastest() {
        let d = Dims::new(3, 4, 5);
        assert_eq!(d.index(1, 0, 0), 1);
        assert_eq!(d.index(0, 1, 0), 3);
        assert_eq!(d.index(0, 0, 1), 12);
        for i in 0..d.len() {
            let (x, y, z) = d.coords(i);
            assert_eq!(d.index(x, y, z), i);
        }
    }

    #[test]
    fn patch_extent_64_cubed() {
        let v = VoxelVolume::filled(Dims::cubic(64), [0.4; 3], 0.0);
        let e = v.extent_mm();
        for axis in e {
            assert!((axis - 25.6).abs() < 1e-12);
        }
    }

    #[test]
    fn new_rejects_nan_and_length_mismatch() {
        let d = Dims::cubic(2);
        assert!(matches!(
            VoxelVolume::new(d, [1.0; 3], [0.0; 3], vec![0.0; 7]),
            Err(VamosError::PayloadLength { .. })
        ));
        let mut data = vec![0.0f32; 8];
        data[3] = f32::NAN;
        assert!(matches!(VoxelVolume::new(d, [1.0; 3], [0.0; 3], data), Err(VamosError::NonFinite)));
    }

    #[test]
    fn crop_inside_is_exact_subarray() {
        let d = Dims::cubic(6);
        let mut v = VoxelVolume::zeros(d, [1.0; 3]);
        for i in 0..v.data.len() {
            v.data[i] = i as f32;
        }
        let c = crop(&v, [3, 3, 3], [2, 2, 2], -1.0);
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    assert_eq!(c.get(x, y, z), v.get(x + 2, y + 2, z + 2));
                }
            }
        }
    }

    #[test]
    fn crop_at_corner_pads() {
        let v = VoxelVolume::filled(Dims::cubic(4), [1.0; 3], 5.0);
        let c = crop(&v, [0, 0, 0], [4, 4, 4], -9.0);
        // start = -2; half the crop sits outside
        assert_eq!(c.get(0, 0, 0), -9.0);
        assert_eq!(c.get(3, 3, 3), 5.0);
    }

    #[test]
    fn crop_preserves_world_coordinates() {
        let mut v = VoxelVolume::zeros(Dims::cubic(8), [0.4, 0.5, 0.6]);
        v.origin = [10.0, -3.0, 2.5];
        v.set(5, 6, 2, 42.0);
        let before = v.world(5, 6, 2);
        let c = crop(&v, [4, 5, 3], [4, 4, 4], 0.0);
        // marked voxel lands at (5-2, 6-3, 2-1)
        assert_eq!(c.get(3, 3, 1), 42.0);
        let after = c.world(3, 3, 1);
        for a in 0..3 {
            assert!((before[a] - after[a]).abs() < 1e-12);
        }
    }
}
