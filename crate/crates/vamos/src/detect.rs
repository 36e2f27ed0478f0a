//! Lesion-level scoring of detector output masks.
//!
//! A predicted 26-connected component matches a ground-truth lesion when
//! its center of mass (world mm) lies within the lesion's maximum radius
//! of the lesion centroid. Matched lesions are true positives, unmatched
//! predicted components are false positives, and segmentation quality is
//! reported as per-lesion Dice over the true positives only.

use serde::{Deserialize, Serialize};

use crate::components::{connected_components, Connectivity};
use crate::error::{Result, VamosError};
use crate::volume::BinaryMask;

/// Radius strata boundaries, mm: <=2, (2,3], >3.
pub const RADIUS_BIN_NAMES: [&str; 3] = ["<=2mm", "(2,3]mm", ">3mm"];

/// Anatomical location groups used for stratified reporting.
pub const LOCATION_GROUPS: [&str; 6] = ["A-B", "C-D", "E-F-I-J", "G-H", "K-L", "M-N-O"];

/// Group containing a single-letter location label (A..O), if any.
pub fn location_group_for(label: &str) -> Option<&'static str> {
    let c = label.trim().chars().next()?.to_ascii_uppercase();
    LOCATION_GROUPS
        .iter()
        .find(|g| g.split('-').any(|part| part.chars().next() == Some(c)))
        .copied()
}

pub fn radius_bin(radius_mm: f64) -> usize {
    if radius_mm <= 2.0 {
        0
    } else if radius_mm <= 3.0 {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LesionMatch {
    /// Lesion label in the ground-truth component labeling (1-based).
    pub lesion_id: u32,
    pub centroid_mm: [f64; 3],
    /// Max distance from the centroid to any lesion voxel, mm.
    pub max_radius_mm: f64,
    pub voxel_count: usize,
    /// Predicted component labels assigned to this lesion.
    pub matched_components: Vec<u32>,
}

impl LesionMatch {
    pub fn is_tp(&self) -> bool {
        !self.matched_components.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchTable {
    pub lesions: Vec<LesionMatch>,
    /// Predicted component labels that matched no lesion.
    pub fp_components: Vec<u32>,
}

impl MatchTable {
    pub fn tp(&self) -> usize {
        self.lesions.iter().filter(|l| l.is_tp()).count()
    }

    pub fn fn_count(&self) -> usize {
        self.lesions.len() - self.tp()
    }

    pub fn fp(&self) -> usize {
        self.fp_components.len()
    }
}

fn centroid_mm(mask: &BinaryMask, voxels: &[usize]) -> [f64; 3] {
    let mut acc = [0.0f64; 3];
    for &i in voxels {
        let (x, y, z) = mask.dims.coords(i);
        let w = mask.world(x, y, z);
        acc[0] += w[0];
        acc[1] += w[1];
        acc[2] += w[2];
    }
    let n = voxels.len() as f64;
    [acc[0] / n, acc[1] / n, acc[2] / n]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Match predicted components against ground-truth lesions on one grid.
pub fn match_lesions(pred: &BinaryMask, gt: &BinaryMask) -> Result<MatchTable> {
    if pred.dims != gt.dims {
        return Err(VamosError::DimsMismatch("prediction vs ground truth".into()));
    }
    let gt_cc = connected_components(gt, Connectivity::TwentySix);
    let pred_cc = connected_components(pred, Connectivity::TwentySix);
    let mut lesions: Vec<LesionMatch> = gt_cc
        .voxels
        .iter()
        .enumerate()
        .map(|(k, voxels)| {
            let c = centroid_mm(gt, voxels);
            let max_r = voxels
                .iter()
                .map(|&i| {
                    let (x, y, z) = gt.dims.coords(i);
                    dist(c, gt.world(x, y, z))
                })
                .fold(0.0f64, f64::max);
            LesionMatch {
                lesion_id: k as u32 + 1,
                centroid_mm: c,
                max_radius_mm: max_r,
                voxel_count: voxels.len(),
                matched_components: Vec::new(),
            }
        })
        .collect();
    let mut fp_components = Vec::new();
    for (k, voxels) in pred_cc.voxels.iter().enumerate() {
        let comp_label = k as u32 + 1;
        let com = centroid_mm(pred, voxels);
        // nearest lesion whose radius covers the center of mass; ties go
        // to the lower lesion id (strict < keeps the earlier winner)
        let mut best: Option<(f64, usize)> = None;
        for (li, lesion) in lesions.iter().enumerate() {
            let d = dist(com, lesion.centroid_mm);
            if d <= lesion.max_radius_mm && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, li));
            }
        }
        match best {
            Some((_, li)) => lesions[li].matched_components.push(comp_label),
            None => fp_components.push(comp_label),
        }
    }
    Ok(MatchTable { lesions, fp_components })
}

/// Pooled aggregate over a suite of volumes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Aggregate {
    pub volumes: usize,
    pub tp: usize,
    pub fn_count: usize,
    pub fp: usize,
    /// None when the suite holds no lesions at all.
    pub sensitivity: Option<f64>,
    pub fp_per_case: f64,
}

pub fn sensitivity_fp(tables: &[MatchTable]) -> Result<Aggregate> {
    if tables.is_empty() {
        return Err(VamosError::InvalidArgument("no volumes to aggregate".into()));
    }
    let tp: usize = tables.iter().map(|t| t.tp()).sum();
    let fn_count: usize = tables.iter().map(|t| t.fn_count()).sum();
    let fp: usize = tables.iter().map(|t| t.fp()).sum();
    let total = tp + fn_count;
    Ok(Aggregate {
        volumes: tables.len(),
        tp,
        fn_count,
        fp,
        sensitivity: if total > 0 { Some(tp as f64 / total as f64) } else { None },
        fp_per_case: fp as f64 / tables.len() as f64,
    })
}

/// Per-TP-lesion Dice between the union of the lesion's matched
/// components and the lesion mask. False negatives are absent, not zero.
pub fn dice_true_positives(table: &MatchTable, pred: &BinaryMask, gt: &BinaryMask) -> Result<Vec<(u32, f64)>> {
    if pred.dims != gt.dims {
        return Err(VamosError::DimsMismatch("prediction vs ground truth".into()));
    }
    let gt_cc = connected_components(gt, Connectivity::TwentySix);
    let pred_cc = connected_components(pred, Connectivity::TwentySix);
    let mut out = Vec::new();
    for lesion in table.lesions.iter().filter(|l| l.is_tp()) {
        let lesion_voxels = &gt_cc.voxels[(lesion.lesion_id - 1) as usize];
        let mut in_union = vec![false; pred.dims.len()];
        let mut union_count = 0usize;
        for &comp in &lesion.matched_components {
            for &i in &pred_cc.voxels[(comp - 1) as usize] {
                if !in_union[i] {
                    in_union[i] = true;
                    union_count += 1;
                }
            }
        }
        let inter = lesion_voxels.iter().filter(|&&i| in_union[i]).count();
        let dice = 2.0 * inter as f64 / (union_count + lesion_voxels.len()) as f64;
        out.push((lesion.lesion_id, dice));
    }
    Ok(out)
}

/// Per-lesion metadata for stratified reporting; keyed by
/// (volume index, lesion label).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LesionMeta {
    pub volume: usize,
    pub lesion_id: u32,
    pub radius_mm: f64,
    pub location_group: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRow {
    pub name: String,
    pub total: usize,
    pub tp: usize,
    /// None for empty strata.
    pub sensitivity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Strata {
    pub by_radius: Vec<StratumRow>,
    pub by_location: Vec<StratumRow>,
}

pub fn stratify(tables: &[MatchTable], meta: &[LesionMeta]) -> Result<Strata> {
    let mut radius_counts = [(0usize, 0usize); 3];
    let mut loc_counts = vec![(0usize, 0usize); LOCATION_GROUPS.len()];
    for (vi, table) in tables.iter().enumerate() {
        for lesion in &table.lesions {
            let m = meta
                .iter()
                .find(|m| m.volume == vi && m.lesion_id == lesion.lesion_id)
                .ok_or_else(|| {
                    VamosError::Manifest(format!(
                        "lesion {} in volume {vi} has no metadata (radius required)",
                        lesion.lesion_id
                    ))
                })?;
            let bin = radius_bin(m.radius_mm);
            radius_counts[bin].0 += 1;
            if lesion.is_tp() {
                radius_counts[bin].1 += 1;
            }
            if let Some(group) = &m.location_group {
                if let Some(gi) = LOCATION_GROUPS.iter().position(|g| g == group) {
                    loc_counts[gi].0 += 1;
                    if lesion.is_tp() {
                        loc_counts[gi].1 += 1;
                    }
                } else {
                    return Err(VamosError::Manifest(format!("unknown location group {group}")));
                }
            }
        }
    }
    let row = |name: &str, (total, tp): (usize, usize)| StratumRow {
        name: name.to_string(),
        total,
        tp,
        sensitivity: if total > 0 { Some(tp as f64 / total as f64) } else { None },
    };
    Ok(Strata {
        by_radius: RADIUS_BIN_NAMES.iter().zip(radius_counts).map(|(n, c)| row(n, c)).collect(),
        by_location: LOCATION_GROUPS.iter().zip(loc_counts).map(|(n, c)| row(n, c)).collect(),
    })
}

/// Number of 26-connected components; handy for report output.
pub fn component_count(mask: &BinaryMask) -> usize {
    connected_components(mask, Connectivity::TwentySix).count()
}
