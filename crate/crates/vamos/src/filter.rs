//! Separable Gaussian filtering with reflection borders.
//!
//! `Slice2d` filters x and y independently per axial slice, matching the
//! two-index blur used for the noise calibration; `Full3d` filters all
//! three axes.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VamosError};
use crate::volume::VoxelVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Slice2d,
    Full3d,
}

/// Normalized 1D Gaussian taps, radius = ceil(4 sigma).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Reflect index into [0, n) with edge repetition (a b c -> a a b c c).
#[inline]
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn convolve_axis(data: &mut [f32], dims: [usize; 3], axis: usize, taps: &[f64]) {
    let radius = (taps.len() / 2) as i64;
    let n = dims[axis] as i64;
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    // iterate lines perpendicular to the axis
    let (ou, ov, su, sv) = match axis {
        0 => (ny, nz, nx, nx * ny),
        1 => (nx, nz, 1, nx * ny),
        _ => (nx, ny, 1, nx),
    };
    let mut line = vec![0.0f64; n as usize];
    for v in 0..ov {
        for u in 0..ou {
            let base = u * su + v * sv;
            for i in 0..n as usize {
                line[i] = data[base + i * stride] as f64;
            }
            for i in 0..n {
                let mut acc = 0.0;
                for (t, &w) in taps.iter().enumerate() {
                    let src = reflect(i + t as i64 - radius, n);
                    acc += w * line[src];
                }
                data[base + i as usize * stride] = acc as f32;
            }
        }
    }
}

pub fn gaussian_filter(vol: &VoxelVolume, sigma: f64, mode: FilterMode) -> Result<VoxelVolume> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(VamosError::InvalidArgument(format!("negative or non-finite sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(vol.clone());
    }
    let taps = gaussian_kernel(sigma);
    let mut out = vol.clone();
    let dims = out.dims.as_array();
    let axes: &[usize] = match mode {
        FilterMode::Slice2d => &[0, 1],
        FilterMode::Full3d => &[0, 1, 2],
    };
    for &axis in axes {
        convolve_axis(&mut out.data, dims, axis, &taps);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_volume_unchanged() {
        let v = VoxelVolume::filled(Dims::cubic(16), [0.4; 3], 42.0);
        for mode in [FilterMode::Slice2d, FilterMode::Full3d] {
            let f = gaussian_filter(&v, 2.5, mode).unwrap();
            for &x in &f.data {
                assert!((x - 42.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn sigma_zero_is_identity() {
        let mut v = VoxelVolume::zeros(Dims::cubic(8), [1.0; 3]);
        v.set(3, 4, 5, 9.0);
        let f = gaussian_filter(&v, 0.0, FilterMode::Full3d).unwrap();
        assert_eq!(v, f);
    }

    #[test]
    fn negative_sigma_rejected() {
        let v = VoxelVolume::zeros(Dims::cubic(4), [1.0; 3]);
        assert!(gaussian_filter(&v, -1.0, FilterMode::Full3d).is_err());
    }

    #[test]
    fn impulse_response_matches_analytic_kernel() {
        let n = 33;
        let mut v = VoxelVolume::zeros(Dims::cubic(n), [1.0; 3]);
        v.set(16, 16, 16, 1.0);
        let sigma = 2.0;
        let f = gaussian_filter(&v, sigma, FilterMode::Full3d).unwrap();
        let sum: f64 = f.data.iter().map(|&x| x as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6, "kernel sum {sum}");
        let taps = gaussian_kernel(sigma);
        let r = taps.len() / 2;
        // spot-check a few samples against the separable product
        for (dx, dy, dz) in [(0i64, 0i64, 0i64), (1, 0, 0), (2, 1, 0), (3, 2, 1)] {
            let expect = taps[(r as i64 + dx) as usize] * taps[(r as i64 + dy) as usize] * taps[(r as i64 + dz) as usize];
            let got = f.get((16 + dx) as usize, (16 + dy) as usize, (16 + dz) as usize) as f64;
            assert!((got - expect).abs() < 1e-9, "({dx},{dy},{dz}): {got} vs {expect}");
        }
    }

    #[test]
    fn mean_preserved_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v = VoxelVolume::zeros(Dims::cubic(24), [1.0; 3]);
        for d in &mut v.data {
            *d = rng.gen_range(0.0..100.0);
        }
        let before = v.mean();
        let f = gaussian_filter(&v, 3.0, FilterMode::Full3d).unwrap();
        let after = f.mean();
        assert!(((after - before) / before).abs() < 1e-6);
    }

    #[test]
    fn white_noise_std_follows_filtered_noise_law() {
        // slice2d on white noise: sigma_f ~= sigma_0 / (2 sigma_g sqrt(pi))
        let sigma0 = 10.0;
        let sigma_g = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut v = VoxelVolume::zeros(Dims::cubic(64), [0.4; 3]);
        for d in &mut v.data {
            let n: f64 = rng.sample(StandardNormal);
            *d = (n * sigma0) as f32;
        }
        let f = gaussian_filter(&v, sigma_g, FilterMode::Slice2d).unwrap();
        let predicted = sigma0 / (2.0 * sigma_g * std::f64::consts::PI.sqrt());
        let ratio = f.std() / predicted;
        assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
    }
}
