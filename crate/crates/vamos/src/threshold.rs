//! Multi-threshold matter separation.
//!
//! Thresholds are picked by exhaustive minimization of the minimum
//! cross-entropy criterion over a 256-bin histogram of the non-excluded
//! voxels. Classes are assigned by increasing intensity (air < fluid <
//! parenchyma); excluded (vessel) voxels get label 3.

use crate::error::{Result, VamosError};
use crate::volume::{BinaryMask, ClassStats, MatterMap, VoxelVolume, MATTER_VESSEL};

const BINS: usize = 256;

/// Minimum cross-entropy cost of one bin interval [lo, hi), from prefix
/// sums of counts and first moments over bin values.
#[inline]
fn interval_cost(counts: &[f64], moments: &[f64], lo: usize, hi: usize) -> f64 {
    let w = counts[hi] - counts[lo];
    let m = moments[hi] - moments[lo];
    if w <= 0.0 || m <= 0.0 {
        return 0.0;
    }
    -m * (m / w).ln()
}

/// Exhaustive minimum cross-entropy thresholding; returns ascending bin
/// thresholds (class c = bins in [t_{c-1}, t_c)).
fn mce_thresholds(hist: &[f64; BINS], n_classes: usize) -> Result<Vec<usize>> {
    let distinct = hist.iter().filter(|&&h| h > 0.0).count();
    if distinct < n_classes {
        return Err(VamosError::DegenerateHistogram { distinct, classes: n_classes });
    }
    // prefix sums; bin value = index + 1 to keep the log argument positive
    let mut counts = vec![0.0f64; BINS + 1];
    let mut moments = vec![0.0f64; BINS + 1];
    for i in 0..BINS {
        counts[i + 1] = counts[i] + hist[i];
        moments[i + 1] = moments[i] + hist[i] * (i as f64 + 1.0);
    }
    let mut best = f64::INFINITY;
    let mut best_t: Vec<usize> = Vec::new();
    match n_classes {
        2 => {
            for t in 1..BINS {
                let c = interval_cost(&counts, &moments, 0, t) + interval_cost(&counts, &moments, t, BINS);
                if c < best {
                    best = c;
                    best_t = vec![t];
                }
            }
        }
        3 => {
            for t1 in 1..BINS - 1 {
                let c1 = interval_cost(&counts, &moments, 0, t1);
                for t2 in t1 + 1..BINS {
                    let c = c1
                        + interval_cost(&counts, &moments, t1, t2)
                        + interval_cost(&counts, &moments, t2, BINS);
                    if c < best {
                        best = c;
                        best_t = vec![t1, t2];
                    }
                }
            }
        }
        4 => {
            for t1 in 1..BINS - 2 {
                let c1 = interval_cost(&counts, &moments, 0, t1);
                for t2 in t1 + 1..BINS - 1 {
                    let c2 = c1 + interval_cost(&counts, &moments, t1, t2);
                    for t3 in t2 + 1..BINS {
                        let c = c2
                            + interval_cost(&counts, &moments, t2, t3)
                            + interval_cost(&counts, &moments, t3, BINS);
                        if c < best {
                            best = c;
                            best_t = vec![t1, t2, t3];
                        }
                    }
                }
            }
        }
        _ => {
            return Err(VamosError::InvalidArgument(format!(
                "n_classes must be in 2..=4, got {n_classes}"
            )))
        }
    }
    Ok(best_t)
}

/// Segment the non-excluded voxels of `vol` into `n_classes` intensity
/// classes; excluded voxels are labeled vessel (3).
pub fn multi_threshold(vol: &VoxelVolume, exclude: &BinaryMask, n_classes: usize) -> Result<MatterMap> {
    if vol.dims != exclude.dims {
        return Err(VamosError::DimsMismatch("multi_threshold exclude mask".into()));
    }
    let included: Vec<f32> = vol
        .data
        .iter()
        .zip(exclude.data.iter())
        .filter(|(_, &e)| !e)
        .map(|(&v, _)| v)
        .collect();
    if included.is_empty() {
        return Err(VamosError::DegenerateHistogram { distinct: 0, classes: n_classes });
    }
    let lo = included.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
    let hi = included.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let width = ((hi - lo) / BINS as f64).max(f64::MIN_POSITIVE);
    let bin_of = |v: f32| -> usize { (((v as f64 - lo) / width) as usize).min(BINS - 1) };

    let mut hist = [0.0f64; BINS];
    for &v in &included {
        hist[bin_of(v)] += 1.0;
    }
    let thresholds = mce_thresholds(&hist, n_classes)?;

    let mut labels = vec![0u8; vol.dims.len()];
    for (i, (&v, &e)) in vol.data.iter().zip(exclude.data.iter()).enumerate() {
        labels[i] = if e {
            MATTER_VESSEL
        } else {
            let b = bin_of(v);
            thresholds.iter().filter(|&&t| b >= t).count() as u8
        };
    }

    let mut map = MatterMap {
        dims: vol.dims,
        spacing: vol.spacing,
        origin: vol.origin,
        labels,
        stats: Vec::new(),
    };
    map.stats = collect_matter_stats(vol, &map)?;
    Ok(map)
}

/// Sample mean/std per matter class, vessels included as their own class.
/// Classes with fewer than 32 voxels (or zero spread) are flagged.
pub fn collect_matter_stats(vol: &VoxelVolume, matter: &MatterMap) -> Result<Vec<ClassStats>> {
    if vol.dims != matter.dims {
        return Err(VamosError::DimsMismatch("collect_matter_stats".into()));
    }
    let mut stats = Vec::new();
    for label in matter.present_labels() {
        let values: Vec<f64> = vol
            .data
            .iter()
            .zip(matter.labels.iter())
            .filter(|(_, &l)| l == label)
            .map(|(&v, _)| v as f64)
            .collect();
        let count = values.len();
        let mean = if count > 0 { values.iter().sum::<f64>() / count as f64 } else { 0.0 };
        let std = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        stats.push(ClassStats { label, mean, std, count, unreliable: count < 32 || std == 0.0 });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn three_blob_volume() -> VoxelVolume {
        let mut v = VoxelVolume::zeros(Dims::new(12, 4, 4), [1.0; 3]);
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..12 {
                    let val = if x < 4 { 10.0 } else if x < 8 { 100.0 } else { 200.0 };
                    v.set(x, y, z, val);
                }
            }
        }
        v
    }

    #[test]
    fn three_modes_separated_exactly() {
        let v = three_blob_volume();
        let ex = BinaryMask::empty(v.dims, v.spacing);
        let m = multi_threshold(&v, &ex, 3).unwrap();
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..12 {
                    let expect = if x < 4 { 0 } else if x < 8 { 1 } else { 2 };
                    assert_eq!(m.labels[m.dims.index(x, y, z)], expect, "({x},{y},{z})");
                }
            }
        }
        // per-class means recovered
        assert!((m.stats_for(0).unwrap().mean - 10.0).abs() < 1e-9);
        assert!((m.stats_for(1).unwrap().mean - 100.0).abs() < 1e-9);
        assert!((m.stats_for(2).unwrap().mean - 200.0).abs() < 1e-9);
    }

    #[test]
    fn constant_image_degenerate() {
        let v = VoxelVolume::filled(Dims::cubic(4), [1.0; 3], 50.0);
        let ex = BinaryMask::empty(v.dims, v.spacing);
        assert!(matches!(
            multi_threshold(&v, &ex, 3),
            Err(VamosError::DegenerateHistogram { .. })
        ));
    }

    #[test]
    fn two_level_single_threshold() {
        let mut v = VoxelVolume::zeros(Dims::new(8, 2, 2), [1.0; 3]);
        for i in 0..v.data.len() {
            v.data[i] = if i % 8 < 4 { 20.0 } else { 120.0 };
        }
        let ex = BinaryMask::empty(v.dims, v.spacing);
        let m = multi_threshold(&v, &ex, 2).unwrap();
        for (i, &l) in m.labels.iter().enumerate() {
            assert_eq!(l, if i % 8 < 4 { 0 } else { 1 });
        }
    }

    #[test]
    fn excluded_voxels_labeled_vessel() {
        let v = three_blob_volume();
        let mut ex = BinaryMask::empty(v.dims, v.spacing);
        ex.set(0, 0, 0, true);
        let m = multi_threshold(&v, &ex, 3).unwrap();
        assert_eq!(m.labels[0], MATTER_VESSEL);
    }

    #[test]
    fn labels_monotone_in_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut v = VoxelVolume::zeros(Dims::cubic(12), [1.0; 3]);
        for d in &mut v.data {
            let pick = rng.gen_range(0..3);
            let n: f64 = rng.sample(StandardNormal);
            *d = ([30.0, 90.0, 180.0][pick] + 5.0 * n) as f32;
        }
        let ex = BinaryMask::empty(v.dims, v.spacing);
        let m = multi_threshold(&v, &ex, 3).unwrap();
        let mut pairs: Vec<(f32, u8)> = v.data.iter().cloned().zip(m.labels.iter().cloned()).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[0].1 <= w[1].1, "labels not monotone at {:?}", w);
        }
    }

    #[test]
    fn stats_flag_small_and_degenerate_classes() {
        let mut v = VoxelVolume::filled(Dims::cubic(4), [1.0; 3], 40.0);
        v.data[0] = 7.0;
        let map = MatterMap {
            dims: v.dims,
            spacing: v.spacing,
            origin: v.origin,
            labels: {
                let mut l = vec![1u8; v.dims.len()];
                l[0] = 0;
                l
            },
            stats: Vec::new(),
        };
        let stats = collect_matter_stats(&v, &map).unwrap();
        let air = stats.iter().find(|s| s.label == 0).unwrap();
        assert!(air.unreliable && air.count == 1);
        let fluid = stats.iter().find(|s| s.label == 1).unwrap();
        assert!((fluid.mean - 40.0).abs() < 1e-9);
        assert!(fluid.unreliable, "constant class flagged");
    }
}
