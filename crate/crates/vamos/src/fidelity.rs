//! Objective image-fidelity metrics and the three-way comparison
//! experiment (real-vs-real across patients, real-vs-own-model,
//! real-vs-other-model).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VamosError};
use crate::volume::{Dims, VoxelVolume};

pub const DEFAULT_SSIM_WINDOW: usize = 7;

fn check_dims(a: &VoxelVolume, b: &VoxelVolume) -> Result<()> {
    if a.dims != b.dims {
        return Err(VamosError::DimsMismatch("fidelity operands".into()));
    }
    Ok(())
}

pub fn mse(a: &VoxelVolume, b: &VoxelVolume) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.data.len() as f64;
    Ok(a.data
        .iter()
        .zip(b.data.iter())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / n)
}

/// Root-mean-square error normalized by the dynamic range.
pub fn nrmse(a: &VoxelVolume, b: &VoxelVolume, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(VamosError::InvalidArgument("data_range must be positive".into()));
    }
    Ok(mse(a, b)?.sqrt() / data_range)
}

/// Peak signal-to-noise ratio in dB; +inf for identical volumes.
pub fn psnr(a: &VoxelVolume, b: &VoxelVolume, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(VamosError::InvalidArgument("data_range must be positive".into()));
    }
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / e).log10())
}

/// Mean local structural similarity over all fully contained windows.
/// `stabilized` uses the standard constants (0.01L)^2 / (0.03L)^2; with
/// them off this is the universal quality index, where degenerate
/// windows score 1 if numerator and denominator both vanish.
fn ssim_windowed(
    a: &VoxelVolume,
    b: &VoxelVolume,
    data_range: f64,
    window: [usize; 3],
    stabilized: bool,
) -> Result<f64> {
    check_dims(a, b)?;
    if !(data_range > 0.0) {
        return Err(VamosError::InvalidArgument("data_range must be positive".into()));
    }
    let d = a.dims;
    if d.x < window[0] || d.y < window[1] || d.z < window[2] {
        return Err(VamosError::InvalidArgument(format!(
            "volume {:?} smaller than ssim window {window:?}",
            d.as_array()
        )));
    }
    // 3D summed-area tables for a, b, a^2, b^2, ab
    let nx = d.x + 1;
    let ny = d.y + 1;
    let nz = d.z + 1;
    let idx = |x: usize, y: usize, z: usize| (z * ny + y) * nx + x;
    let mut tables = vec![vec![0.0f64; nx * ny * nz]; 5];
    for z in 0..d.z {
        for y in 0..d.y {
            for x in 0..d.x {
                let va = a.get(x, y, z) as f64;
                let vb = b.get(x, y, z) as f64;
                let vals = [va, vb, va * va, vb * vb, va * vb];
                for (t, v) in tables.iter_mut().zip(vals.iter()) {
                    t[idx(x + 1, y + 1, z + 1)] = v
                        + t[idx(x, y + 1, z + 1)]
                        + t[idx(x + 1, y, z + 1)]
                        + t[idx(x + 1, y + 1, z)]
                        - t[idx(x, y, z + 1)]
                        - t[idx(x, y + 1, z)]
                        - t[idx(x + 1, y, z)]
                        + t[idx(x, y, z)];
                }
            }
        }
    }
    let box_sum = |t: &[f64], x0: usize, y0: usize, z0: usize| {
        let (x1, y1, z1) = (x0 + window[0], y0 + window[1], z0 + window[2]);
        t[idx(x1, y1, z1)] - t[idx(x0, y1, z1)] - t[idx(x1, y0, z1)] - t[idx(x1, y1, z0)]
            + t[idx(x0, y0, z1)]
            + t[idx(x0, y1, z0)]
            + t[idx(x1, y0, z0)]
            - t[idx(x0, y0, z0)]
    };
    let n = (window[0] * window[1] * window[2]) as f64;
    let (c1, c2) = if stabilized {
        ((0.01 * data_range).powi(2), (0.03 * data_range).powi(2))
    } else {
        (0.0, 0.0)
    };
    let mut acc = 0.0;
    let mut count = 0usize;
    for z0 in 0..=(d.z - window[2]) {
        for y0 in 0..=(d.y - window[1]) {
            for x0 in 0..=(d.x - window[0]) {
                let sa = box_sum(&tables[0], x0, y0, z0);
                let sb = box_sum(&tables[1], x0, y0, z0);
                let saa = box_sum(&tables[2], x0, y0, z0);
                let sbb = box_sum(&tables[3], x0, y0, z0);
                let sab = box_sum(&tables[4], x0, y0, z0);
                let ma = sa / n;
                let mb = sb / n;
                let va = (saa - sa * sa / n) / (n - 1.0);
                let vb = (sbb - sb * sb / n) / (n - 1.0);
                let cov = (sab - sa * sb / n) / (n - 1.0);
                let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
                let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                let v = if den != 0.0 {
                    num / den
                } else if num == 0.0 {
                    1.0
                } else {
                    0.0
                };
                acc += v;
                count += 1;
            }
        }
    }
    Ok(acc / count as f64)
}

pub fn ssim(a: &VoxelVolume, b: &VoxelVolume, data_range: f64) -> Result<f64> {
    let w = DEFAULT_SSIM_WINDOW;
    let wz = if a.dims.z == 1 { 1 } else { w };
    ssim_windowed(a, b, data_range, [w, w, wz], true)
}

/// Universal quality index: SSIM without stabilizers.
pub fn uqi(a: &VoxelVolume, b: &VoxelVolume, data_range: f64) -> Result<f64> {
    let w = DEFAULT_SSIM_WINDOW;
    let wz = if a.dims.z == 1 { 1 } else { w };
    ssim_windowed(a, b, data_range, [w, w, wz], false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairGroup {
    /// Two distinct source patches.
    InterPatient,
    /// Source patch versus the model built from it.
    OwnModel,
    /// Source patch versus a model built from a different source.
    CrossModel,
}

impl PairGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            PairGroup::InterPatient => "inter-patient",
            PairGroup::OwnModel => "own-model",
            PairGroup::CrossModel => "cross-model",
        }
    }
}

pub const METRIC_NAMES: [&str; 5] = ["mse", "nrmse", "psnr", "ssim", "uqi"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairResult {
    pub pair_id: String,
    pub group: PairGroup,
    /// Values keyed as METRIC_NAMES.
    pub values: [f64; 5],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: PairGroup,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityReport {
    pub pairs: Vec<PairResult>,
    pub summaries: Vec<GroupSummary>,
}

impl FidelityReport {
    /// Plot-ready CSV: pair_id,group,metric,value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,group,metric,value\n");
        for p in &self.pairs {
            for (name, v) in METRIC_NAMES.iter().zip(p.values.iter()) {
                out.push_str(&format!("{},{},{},{}\n", p.pair_id, p.group.as_str(), name, v));
            }
        }
        out
    }

    pub fn median(&self, group: PairGroup, metric: &str) -> Option<f64> {
        self.summaries
            .iter()
            .find(|s| s.group == group && s.metric == metric)
            .map(|s| s.median)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FidelityOptions {
    pub data_range: f64,
    /// Evaluate on randomly extracted axial slices instead of full
    /// volumes (the default comparison mode).
    pub use_2d_slices: bool,
    /// Slices per pair in 2D mode.
    pub slices_per_pair: usize,
    pub seed: u64,
}

impl FidelityOptions {
    pub fn new(data_range: f64) -> Self {
        FidelityOptions { data_range, use_2d_slices: true, slices_per_pair: 8, seed: 0 }
    }
}

fn axial_slice(vol: &VoxelVolume, z: usize) -> VoxelVolume {
    let d = vol.dims;
    let mut data = Vec::with_capacity(d.x * d.y);
    data.extend_from_slice(&vol.data[z * d.x * d.y..(z + 1) * d.x * d.y]);
    VoxelVolume {
        dims: Dims::new(d.x, d.y, 1),
        spacing: vol.spacing,
        origin: [vol.origin[0], vol.origin[1], vol.origin[2] + z as f64 * vol.spacing[2]],
        data,
    }
}

fn pair_metrics(a: &VoxelVolume, b: &VoxelVolume, opts: &FidelityOptions, pair_salt: u64) -> Result<[f64; 5]> {
    check_dims(a, b)?;
    let eval = |a: &VoxelVolume, b: &VoxelVolume| -> Result<[f64; 5]> {
        Ok([
            mse(a, b)?,
            nrmse(a, b, opts.data_range)?,
            psnr(a, b, opts.data_range)?,
            ssim(a, b, opts.data_range)?,
            uqi(a, b, opts.data_range)?,
        ])
    };
    if !opts.use_2d_slices || a.dims.z == 1 {
        return eval(a, b);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed.wrapping_add(pair_salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    let mut zs: Vec<usize> = (0..a.dims.z).collect();
    zs.shuffle(&mut rng);
    zs.truncate(opts.slices_per_pair.max(1).min(a.dims.z));
    let mut acc = [0.0f64; 5];
    for &z in &zs {
        let got = eval(&axial_slice(a, z), &axial_slice(b, z))?;
        for (s, v) in acc.iter_mut().zip(got.iter()) {
            *s += v;
        }
    }
    for s in &mut acc {
        *s /= zs.len() as f64;
    }
    Ok(acc)
}

fn quartiles(mut values: Vec<f64>) -> (f64, f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pick = |q: f64| -> f64 {
        if values.is_empty() {
            return f64::NAN;
        }
        let pos = q * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        values[lo] * (1.0 - frac) + values[hi] * frac
    };
    (pick(0.25), pick(0.5), pick(0.75))
}

/// Run the three-group comparison: every unordered source pair
/// (inter-patient), each model against its own source (own-model), and
/// each model against every other source (cross-model). `pairing[k]` is
/// the source index of model k.
pub fn fidelity_experiment(
    sources: &[VoxelVolume],
    models: &[VoxelVolume],
    pairing: &[usize],
    opts: &FidelityOptions,
) -> Result<FidelityReport> {
    if models.len() != pairing.len() {
        return Err(VamosError::Manifest(format!(
            "pairing length {} does not match model count {}",
            pairing.len(),
            models.len()
        )));
    }
    if let Some(&bad) = pairing.iter().find(|&&s| s >= sources.len()) {
        return Err(VamosError::Manifest(format!("pairing references missing source {bad}")));
    }
    let mut pairs = Vec::new();
    let mut salt = 0u64;
    for i in 0..sources.len() {
        for j in (i + 1)..sources.len() {
            salt += 1;
            pairs.push(PairResult {
                pair_id: format!("src{i}-src{j}"),
                group: PairGroup::InterPatient,
                values: pair_metrics(&sources[i], &sources[j], opts, salt)?,
            });
        }
    }
    for (k, &src) in pairing.iter().enumerate() {
        salt += 1;
        pairs.push(PairResult {
            pair_id: format!("src{src}-model{k}"),
            group: PairGroup::OwnModel,
            values: pair_metrics(&sources[src], &models[k], opts, salt)?,
        });
    }
    for (k, &own) in pairing.iter().enumerate() {
        for i in 0..sources.len() {
            if i == own {
                continue;
            }
            salt += 1;
            pairs.push(PairResult {
                pair_id: format!("src{i}-model{k}"),
                group: PairGroup::CrossModel,
                values: pair_metrics(&sources[i], &models[k], opts, salt)?,
            });
        }
    }
    let mut summaries = Vec::new();
    for group in [PairGroup::InterPatient, PairGroup::OwnModel, PairGroup::CrossModel] {
        for (m, name) in METRIC_NAMES.iter().enumerate() {
            let vals: Vec<f64> = pairs
                .iter()
                .filter(|p| p.group == group)
                .map(|p| p.values[m])
                .filter(|v| v.is_finite())
                .collect();
            if vals.is_empty() {
                continue;
            }
            let count = vals.len();
            let (q1, median, q3) = quartiles(vals);
            summaries.push(GroupSummary { group, metric: name.to_string(), count, median, q1, q3 });
        }
    }
    Ok(FidelityReport { pairs, summaries })
}
