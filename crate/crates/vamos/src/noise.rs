//! Statistically calibrated background synthesis.
//!
//! Low-frequency textured noise is made by filtering white Gaussian noise:
//! filtering at sigma_G shrinks a white std of sigma_0 down to
//! sigma_f = sigma_0 / (2 sigma_G sqrt(pi)) per slice (or the 3D analogue
//! sigma_0 / (2 sqrt(2) pi^(3/4) sigma_G^(3/2))). Inverting that law picks
//! the filter width that reproduces each matter class's measured std.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::elastic::{apply_deformation_labels, ElasticField};
use crate::error::{Result, VamosError};
use crate::filter::{gaussian_filter, FilterMode};
use crate::volume::{BinaryMask, ClassStats, Dims, MatterMap, VoxelVolume, GRAY_MAX};

/// Validity domain of the large-sigma approximation, voxels.
pub const SIGMA_G_MIN: f64 = 1.0;
pub const SIGMA_G_MAX: f64 = 8.0;
/// Design margin: the widest class is given this filter width, keeping
/// every class inside the validity domain with room to spare.
pub const SIGMA_G_DESIGN_MIN: f64 = 1.5;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Filter width reproducing `sigma_f` from white noise of std `sigma_0`.
pub fn solve_sigma_g(sigma_0: f64, sigma_f: f64, mode: FilterMode) -> Result<f64> {
    if !(sigma_0 > 0.0) {
        return Err(VamosError::InvalidArgument(format!("sigma_0 {sigma_0} must be positive")));
    }
    if !(sigma_f > 0.0) {
        return Err(VamosError::DegenerateClass {
            class: u8::MAX,
        });
    }
    Ok(match mode {
        FilterMode::Slice2d => sigma_0 / (2.0 * sigma_f * SQRT_PI),
        FilterMode::Full3d => {
            let c = 2.0 * 2.0f64.sqrt() * std::f64::consts::PI.powf(0.75);
            (sigma_0 / (c * sigma_f)).powf(2.0 / 3.0)
        }
    })
}

/// Forward direction of the same law: std after filtering white noise.
pub fn filtered_std(sigma_0: f64, sigma_g: f64, mode: FilterMode) -> f64 {
    match mode {
        FilterMode::Slice2d => sigma_0 / (2.0 * sigma_g * SQRT_PI),
        FilterMode::Full3d => {
            sigma_0 / (2.0 * 2.0f64.sqrt() * std::f64::consts::PI.powf(0.75) * sigma_g.powf(1.5))
        }
    }
}

/// Per-class synthesis parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassNoise {
    pub label: u8,
    /// Target mean, gray.
    pub mean: f64,
    /// Target std, gray.
    pub sigma_f: f64,
    /// Solved filter width, voxels; 0 for degenerate classes.
    pub sigma_g: f64,
    /// Class has sigma_f = 0 (or too few voxels): synthesized as a
    /// constant field at the mean.
    pub degenerate: bool,
    /// sigma_g fell outside the validity domain and was clamped; the
    /// approximation degrades for this class.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecipe {
    /// Shared white-noise std, gray.
    pub sigma_0: f64,
    pub mode: FilterMode,
    pub seed: u64,
    pub classes: Vec<ClassNoise>,
}

impl NoiseRecipe {
    /// Build a recipe from measured class statistics. The white std is
    /// pegged so the class with the largest spread lands at the design
    /// minimum filter width; all other classes then need wider filters.
    pub fn from_stats(stats: &[ClassStats], mode: FilterMode, seed: u64) -> Result<Self> {
        let sigma_f_max = stats
            .iter()
            .filter(|s| !s.unreliable && s.std > 0.0)
            .map(|s| s.std)
            .fold(0.0f64, f64::max);
        let sigma_0 = if sigma_f_max > 0.0 {
            match mode {
                FilterMode::Slice2d => 2.0 * SQRT_PI * sigma_f_max * SIGMA_G_DESIGN_MIN,
                FilterMode::Full3d => {
                    2.0 * 2.0f64.sqrt()
                        * std::f64::consts::PI.powf(0.75)
                        * sigma_f_max
                        * SIGMA_G_DESIGN_MIN.powf(1.5)
                }
            }
        } else {
            1.0 // all classes constant; sigma_0 is never used
        };
        let mut classes = Vec::with_capacity(stats.len());
        for s in stats {
            if s.unreliable || s.std <= 0.0 {
                classes.push(ClassNoise {
                    label: s.label,
                    mean: s.mean,
                    sigma_f: s.std.max(0.0),
                    sigma_g: 0.0,
                    degenerate: true,
                    clamped: false,
                });
                continue;
            }
            let raw = solve_sigma_g(sigma_0, s.std, mode)?;
            let clamped_val = raw.clamp(SIGMA_G_MIN, SIGMA_G_MAX);
            classes.push(ClassNoise {
                label: s.label,
                mean: s.mean,
                sigma_f: s.std,
                sigma_g: clamped_val,
                degenerate: false,
                clamped: (clamped_val - raw).abs() > 1e-12,
            });
        }
        Ok(NoiseRecipe { sigma_0, mode, seed, classes })
    }

    pub fn class(&self, label: u8) -> Option<&ClassNoise> {
        self.classes.iter().find(|c| c.label == label)
    }
}

/// splitmix64 step; decorrelates per-class RNG streams.
fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One class's textured field over the whole grid: white noise at
/// (mean, sigma_0) filtered at the class's sigma_g. Deterministic in
/// (recipe.seed, label).
pub fn synth_noise_field(dims: Dims, spacing: [f64; 3], recipe: &NoiseRecipe, label: u8) -> Result<VoxelVolume> {
    let class = recipe
        .class(label)
        .ok_or_else(|| VamosError::InvalidArgument(format!("no recipe entry for class {label}")))?;
    if class.degenerate {
        return Ok(VoxelVolume::filled(dims, spacing, class.mean as f32));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(recipe.seed, label as u64 + 1));
    let normal = Normal::new(class.mean, recipe.sigma_0)
        .map_err(|e| VamosError::InvalidArgument(e.to_string()))?;
    let mut white = VoxelVolume::zeros(dims, spacing);
    for v in &mut white.data {
        *v = normal.sample(&mut rng) as f32;
    }
    gaussian_filter(&white, class.sigma_g, recipe.mode)
}

/// Warp the matter labels by an elastic field (nearest neighbor); class
/// statistics are carried over unchanged.
pub fn deform_matter_map(matter: &MatterMap, field: &ElasticField) -> Result<MatterMap> {
    let labels = apply_deformation_labels(&matter.labels, matter.dims, field)?;
    Ok(MatterMap {
        dims: matter.dims,
        spacing: matter.spacing,
        origin: matter.origin,
        labels,
        stats: matter.stats.clone(),
    })
}

/// Stitch per-class noise behind the geometry: background voxels take
/// their class's field value, foreground voxels take
/// max(geometry gray, background), and everything is clipped to the
/// nominal gray range.
pub fn composite(
    matter: &MatterMap,
    recipe: &NoiseRecipe,
    geometry: &VoxelVolume,
    foreground: &BinaryMask,
) -> Result<VoxelVolume> {
    if matter.dims != geometry.dims || foreground.dims != geometry.dims {
        return Err(VamosError::DimsMismatch("composite inputs".into()));
    }
    let mut present = matter.present_labels();
    present.sort_unstable();
    let mut fields: Vec<(u8, VoxelVolume)> = Vec::new();
    for label in present {
        if recipe.class(label).is_none() {
            return Err(VamosError::InvalidArgument(format!(
                "matter class {label} present but missing from the noise recipe"
            )));
        }
        fields.push((label, synth_noise_field(geometry.dims, geometry.spacing, recipe, label)?));
    }
    let mut out = geometry.clone();
    for i in 0..out.data.len() {
        let label = matter.labels[i];
        let bg = fields
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, f)| f.data[i])
            .unwrap_or(0.0);
        let v = if foreground.data[i] { geometry.data[i].max(bg) } else { bg };
        out.data[i] = v.clamp(0.0, GRAY_MAX);
    }
    Ok(out)
}
