//! End-to-end patch synthesis and dataset orchestration.
//!
//! A source segmentation is reduced to a vessel graph once; each sample
//! index then deterministically drives crop → spline fit/perturb → tube
//! rasterization → optional sac attachment → matter statistics → noise
//! compositing. Sample RNGs are derived by hashing (master seed, index),
//! so the output is byte-identical regardless of worker count.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::aneurysm::{attach_aneurysm, AneurysmSpec, PlacedAneurysm};
use crate::components::{connected_components, Connectivity};
use crate::distance::distance_transform;
use crate::elastic::{make_elastic_field, ElasticSpec};
use crate::error::{Result, VamosError};
use crate::filter::FilterMode;
use crate::graph::{
    bifurcation_locale, build_graph, crop_around_node, prune_spurs, NodeKind, VesselGraph,
    DEFAULT_TANGENT_WINDOW_MM,
};
use crate::io::{write_mask, write_volume};
use crate::noise::{composite, deform_matter_map, NoiseRecipe};
use crate::raster::{gray_from_mask, rasterize_tube_mask};
use crate::skeleton::skeletonize;
use crate::spline::{evaluate_spline, fit_spline, perturb_spline};
use crate::threshold::{collect_matter_stats, multi_threshold};
use crate::volume::{
    crop, crop_mask, BinaryMask, ClassStats, Dims, MatterMap, VoxelVolume, MATTER_PARENCHYMA,
    MATTER_VESSEL,
};

/// Fallback per-class noise targets used when no source gray volume is
/// available (pure phantom sources).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTarget {
    pub label: u8,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub patch_size: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// B-spline degree for centerline fits.
    pub spline_degree: usize,
    /// Coefficient perturbation amplitude, voxels.
    pub perturb_amplitude_vox: f64,
    pub spline_smoothing: f64,
    /// Aneurysm sac radius range, mm.
    pub radius_range_mm: [f64; 2],
    /// Stand-off growth parameter range.
    pub gamma_range: [f64; 2],
    /// Sac elastic-deformation sigma range, voxels.
    pub sigma_e_range: [f64; 2],
    /// Matter-map elastic-deformation sigma range, voxels.
    pub matter_sigma_range: [f64; 2],
    pub matter_alpha_vox: f64,
    /// Probability that a sample carries an aneurysm.
    pub aneurysm_probability: f64,
    pub vessel_gray: f32,
    pub noise_mode: FilterMode,
    pub noise_enabled: bool,
    pub fallback_classes: Vec<ClassTarget>,
    /// Samples to generate in gen_dataset.
    pub count: usize,
    pub master_seed: u64,
    /// Skeleton spur-pruning threshold, mm.
    pub min_branch_mm: f64,
    /// Positive crops per lesion / negative crops per volume for
    /// training extraction.
    pub positives_per_lesion: usize,
    pub negatives_per_volume: usize,
    /// Permit parameter ranges outside the published defaults.
    pub unrestricted_ranges: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            patch_size: [64, 64, 64],
            spacing_mm: [0.4; 3],
            spline_degree: 2,
            perturb_amplitude_vox: 2.0,
            spline_smoothing: 1.0,
            radius_range_mm: [0.4, 2.0],
            gamma_range: [0.7, 1.0],
            sigma_e_range: [1.0, 4.0],
            matter_sigma_range: [0.0, 6.0],
            matter_alpha_vox: 3.0,
            aneurysm_probability: 0.5,
            vessel_gray: 300.0,
            noise_mode: FilterMode::Slice2d,
            noise_enabled: true,
            fallback_classes: vec![
                ClassTarget { label: 0, mean: 12.0, std: 1.0 },
                ClassTarget { label: 1, mean: 35.0, std: 2.0 },
                ClassTarget { label: 2, mean: 60.0, std: 3.0 },
            ],
            count: 10,
            master_seed: 0,
            min_branch_mm: 4.0,
            positives_per_lesion: 10,
            negatives_per_volume: 20,
            unrestricted_ranges: false,
        }
    }
}

impl GenerationConfig {
    const CALIBRATED_RADIUS: [f64; 2] = [0.4, 2.0];
    const CALIBRATED_GAMMA: [f64; 2] = [0.7, 1.0];
    const CALIBRATED_SIGMA_E: [f64; 2] = [1.0, 4.0];
    const CALIBRATED_MATTER_SIGMA: [f64; 2] = [0.0, 6.0];

    pub fn validate(&self) -> Result<()> {
        if self.patch_size.iter().any(|&s| s == 0) || self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(VamosError::InvalidArgument("patch size/spacing must be positive".into()));
        }
        for (name, range) in [
            ("radius_range_mm", self.radius_range_mm),
            ("gamma_range", self.gamma_range),
            ("sigma_e_range", self.sigma_e_range),
            ("matter_sigma_range", self.matter_sigma_range),
        ] {
            if range[0] > range[1] {
                return Err(VamosError::InvalidArgument(format!("{name} is empty: {range:?}")));
            }
        }
        if !(0.0..=1.0).contains(&self.aneurysm_probability) {
            return Err(VamosError::InvalidArgument("aneurysm_probability outside [0,1]".into()));
        }
        if !self.unrestricted_ranges {
            for (name, range, bounds) in [
                ("radius_range_mm", self.radius_range_mm, Self::CALIBRATED_RADIUS),
                ("gamma_range", self.gamma_range, Self::CALIBRATED_GAMMA),
                ("sigma_e_range", self.sigma_e_range, Self::CALIBRATED_SIGMA_E),
                ("matter_sigma_range", self.matter_sigma_range, Self::CALIBRATED_MATTER_SIGMA),
            ] {
                if range[0] < bounds[0] - 1e-12 || range[1] > bounds[1] + 1e-12 {
                    return Err(VamosError::InvalidArgument(format!(
                        "{name} {range:?} outside calibrated bounds {bounds:?}; set unrestricted_ranges to override"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn patch_dims(&self) -> Dims {
        Dims::new(self.patch_size[0], self.patch_size[1], self.patch_size[2])
    }
}

/// A source volume reduced to reusable geometry.
#[derive(Debug, Clone)]
pub struct SourceModel {
    /// Optional original gray volume (drives matter statistics).
    pub gray: Option<VoxelVolume>,
    pub vessels: BinaryMask,
    pub graph: VesselGraph,
}

impl SourceModel {
    /// Skeletonize a segmentation, measure local radii by distance
    /// transform, and build the pruned centerline graph.
    pub fn from_segmentation(
        vessels: BinaryMask,
        gray: Option<VoxelVolume>,
        min_branch_mm: f64,
    ) -> Result<Self> {
        if let Some(g) = &gray {
            if g.dims != vessels.dims {
                return Err(VamosError::DimsMismatch("gray vs vessel segmentation".into()));
            }
        }
        let skeleton = skeletonize(&vessels);
        let radii = distance_transform(&vessels);
        let graph = prune_spurs(&build_graph(&skeleton, &radii)?, min_branch_mm);
        Ok(SourceModel { gray, vessels, graph })
    }

    /// Ids of degree-3 nodes usable as patch centers.
    pub fn bifurcation_ids(&self) -> Vec<usize> {
        self.graph.bifurcations().filter(|n| n.degree == 3).map(|n| n.id).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchMeta {
    pub id: String,
    pub index: usize,
    /// RNG seed derived from (master seed, index).
    pub derived_seed: u64,
    pub source: usize,
    pub node_id: usize,
    pub location: Option<String>,
    pub aneurysm_present: bool,
    pub aneurysm: Option<PlacedAneurysm>,
    pub matter_sigma: f64,
    pub branch_count: usize,
}

#[derive(Debug, Clone)]
pub struct PatchSample {
    pub gray: VoxelVolume,
    pub gt: BinaryMask,
    pub vessels: BinaryMask,
    pub meta: PatchMeta,
}

/// splitmix64; decorrelates per-sample RNG streams.
fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn resample_radii(radii: &[f64], n: usize) -> Vec<f64> {
    if radii.len() == 1 {
        return vec![radii[0]; n];
    }
    (0..n)
        .map(|i| {
            let pos = i as f64 / (n - 1) as f64 * (radii.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(radii.len() - 1);
            let frac = pos - lo as f64;
            radii[lo] * (1.0 - frac) + radii[hi] * frac
        })
        .collect()
}

/// Re-render the subgraph's branches as perturbed spline tubes.
fn render_vessels(
    subgraph: &VesselGraph,
    cfg: &GenerationConfig,
    rng: &mut ChaCha12Rng,
) -> Result<(BinaryMask, usize)> {
    let dims = subgraph.dims;
    let mut union = BinaryMask::empty(dims, subgraph.spacing);
    union.origin = subgraph.origin;
    let mut rendered = 0usize;
    for branch in &subgraph.branches {
        // one seed consumed per branch regardless of eligibility keeps
        // downstream draws index-stable
        let branch_seed: u64 = rng.gen();
        if branch.points.len() < 2 {
            continue;
        }
        let pts: Vec<[f64; 3]> =
            branch.points.iter().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
        let spline = fit_spline(&pts, cfg.spline_degree, cfg.spline_smoothing)?;
        let spline = perturb_spline(&spline, cfg.perturb_amplitude_vox, branch_seed, true);
        let n = (branch.points.len() * 2).max(8);
        let centerline = evaluate_spline(&spline, n);
        let radii = resample_radii(&branch.radii_mm, n);
        let tube = rasterize_tube_mask(&centerline, &radii, dims, subgraph.spacing)?;
        union = union.union(&tube)?;
        rendered += 1;
    }
    if rendered == 0 {
        return Err(VamosError::Pipeline("no renderable branches in patch".into()));
    }
    Ok((union, rendered))
}

fn fallback_matter(dims: Dims, spacing: [f64; 3], origin: [f64; 3], targets: &[ClassTarget]) -> MatterMap {
    let stats = targets
        .iter()
        .map(|t| ClassStats {
            label: t.label,
            mean: t.mean,
            std: t.std,
            count: dims.len(),
            unreliable: false,
        })
        .collect();
    MatterMap { dims, spacing, origin, labels: vec![MATTER_PARENCHYMA; dims.len()], stats }
}

/// Matter separation with graceful degradation: three intensity classes
/// when the histogram supports them, two otherwise, and a single uniform
/// class for (near-)constant backgrounds.
fn matter_from_gray(gray: &VoxelVolume, exclude: &BinaryMask) -> Result<MatterMap> {
    for n_classes in [3usize, 2] {
        match multi_threshold(gray, exclude, n_classes) {
            Ok(m) => return Ok(m),
            Err(VamosError::DegenerateHistogram { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let labels: Vec<u8> = exclude
        .data
        .iter()
        .map(|&v| if v { MATTER_VESSEL } else { MATTER_PARENCHYMA })
        .collect();
    let mut map = MatterMap {
        dims: gray.dims,
        spacing: gray.spacing,
        origin: gray.origin,
        labels,
        stats: Vec::new(),
    };
    map.stats = collect_matter_stats(gray, &map)?;
    Ok(map)
}

const ANEURYSM_PLACEMENT_RETRIES: usize = 8;

/// Synthesize one sample, deterministic in (cfg.master_seed, index).
pub fn gen_patch(
    source: &SourceModel,
    source_idx: usize,
    node_id: usize,
    location: Option<String>,
    cfg: &GenerationConfig,
    index: usize,
) -> Result<PatchSample> {
    cfg.validate()?;
    let seed = derive_seed(cfg.master_seed, index as u64);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let vessel_vol = source.vessels.to_volume();
    let (patch_ref, subgraph) = crop_around_node(&vessel_vol, &source.graph, node_id, cfg.patch_size)?;

    let (vessel_mask, branch_count) = render_vessels(&subgraph, cfg, &mut rng)?;
    let mut gray = gray_from_mask(&vessel_mask, cfg.vessel_gray)?;
    gray.origin = patch_ref.origin;

    // the patch is centered on the node; find its id in the subgraph
    let center = [cfg.patch_size[0] / 2, cfg.patch_size[1] / 2, cfg.patch_size[2] / 2];
    let center_node = subgraph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Bifurcation)
        .min_by_key(|n| {
            let dx = n.pos[0] as i64 - center[0] as i64;
            let dy = n.pos[1] as i64 - center[1] as i64;
            let dz = n.pos[2] as i64 - center[2] as i64;
            dx * dx + dy * dy + dz * dz
        })
        .map(|n| n.id);

    let want_aneurysm = rng.gen_bool(cfg.aneurysm_probability);
    let mut gt = BinaryMask::empty(gray.dims, gray.spacing);
    gt.origin = gray.origin;
    let mut placed: Option<PlacedAneurysm> = None;
    if want_aneurysm {
        let cn = center_node.ok_or_else(|| {
            VamosError::Pipeline("no bifurcation in patch for aneurysm placement".into())
        })?;
        let locale = bifurcation_locale(&subgraph, cn, DEFAULT_TANGENT_WINDOW_MM)?;
        let mut last_err = None;
        for _ in 0..ANEURYSM_PLACEMENT_RETRIES {
            let spec = AneurysmSpec {
                radius_mm: rng.gen_range(cfg.radius_range_mm[0]..=cfg.radius_range_mm[1]),
                gamma: rng.gen_range(cfg.gamma_range[0]..=cfg.gamma_range[1]),
                sigma: rng.gen_range(cfg.sigma_e_range[0]..=cfg.sigma_e_range[1]),
                seed: rng.gen(),
            };
            match attach_aneurysm(&gray, &vessel_mask, &locale, &spec, cfg.vessel_gray, false) {
                Ok(att) => {
                    gray = att.composited;
                    gt = att.gt_mask;
                    placed = Some(att.placed);
                    last_err = None;
                    break;
                }
                Err(e @ VamosError::Placement(_)) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        if let Some(e) = last_err {
            return Err(e);
        }
    }
    let foreground = vessel_mask.union(&gt)?;

    // matter map: thresholded source gray when available, flat fallback
    // otherwise
    let mut matter = match &source.gray {
        Some(src_gray) => {
            let node = source.graph.node(node_id).unwrap();
            let c = [node.pos[0] as i64, node.pos[1] as i64, node.pos[2] as i64];
            let gray_crop = crop(src_gray, c, cfg.patch_size, 0.0);
            let vessel_crop = crop_mask(&source.vessels, c, cfg.patch_size);
            matter_from_gray(&gray_crop, &vessel_crop)?
        }
        None => fallback_matter(gray.dims, gray.spacing, gray.origin, &cfg.fallback_classes),
    };
    let matter_sigma = rng.gen_range(cfg.matter_sigma_range[0]..=cfg.matter_sigma_range[1]);
    let matter_seed: u64 = rng.gen();
    if matter_sigma > 0.0 {
        let field = make_elastic_field(&ElasticSpec {
            patch_dims: cfg.patch_size,
            grid_dims: [3, 3, 3],
            alpha: cfg.matter_alpha_vox,
            sigma: matter_sigma,
            seed: matter_seed,
        })?;
        matter = deform_matter_map(&matter, &field)?;
    }

    let final_gray = if cfg.noise_enabled {
        let recipe = NoiseRecipe::from_stats(&matter.stats, cfg.noise_mode, rng.gen())?;
        composite(&matter, &recipe, &gray, &foreground)?
    } else {
        gray
    };

    let aneurysm_present = gt.count() > 0;
    Ok(PatchSample {
        gray: final_gray,
        gt,
        vessels: vessel_mask,
        meta: PatchMeta {
            id: format!("patch{index:05}"),
            index,
            derived_seed: seed,
            source: source_idx,
            node_id,
            location,
            aneurysm_present,
            aneurysm: placed,
            matter_sigma,
            branch_count,
        },
    })
}

/// One generation site: a source plus a chosen bifurcation node.
#[derive(Debug, Clone)]
pub struct GenerationSite {
    pub source: usize,
    pub node_id: usize,
    pub location: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GenerationConfig,
    pub samples: Vec<PatchMeta>,
    /// Aneurysm counts per radius bin {<=2, (2,3], >3} mm.
    pub radius_bin_counts: [usize; 3],
    /// Counts per location label.
    pub location_counts: Vec<(String, usize)>,
}

/// Worker count: VAMOS_THREADS if set, else all available.
pub fn worker_count() -> usize {
    std::env::var("VAMOS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

/// Generate cfg.count samples round-robin over the sites and write them
/// under `out`: patches/<id>.vvol.*, masks/<id>.vvol.*, manifest.json.
/// Byte-identical for a fixed (config, master seed) regardless of the
/// worker count.
pub fn gen_dataset(
    sources: &[SourceModel],
    sites: &[GenerationSite],
    cfg: &GenerationConfig,
    out: &Path,
) -> Result<Manifest> {
    cfg.validate()?;
    if sites.is_empty() {
        return Err(VamosError::Pipeline("no generation sites provided".into()));
    }
    for site in sites {
        if site.source >= sources.len() {
            return Err(VamosError::Pipeline(format!("site references missing source {}", site.source)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| VamosError::Pipeline(e.to_string()))?;
    let samples: Vec<PatchSample> = pool.install(|| {
        use rayon::prelude::*;
        (0..cfg.count)
            .into_par_iter()
            .map(|index| {
                let site = &sites[index % sites.len()];
                gen_patch(&sources[site.source], site.source, site.node_id, site.location.clone(), cfg, index)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let io_err = |path: &Path, e: std::io::Error| VamosError::Io {
        path: path.display().to_string(),
        source: e,
    };
    fs::create_dir_all(out.join("patches")).map_err(|e| io_err(&out.join("patches"), e))?;
    fs::create_dir_all(out.join("masks")).map_err(|e| io_err(&out.join("masks"), e))?;
    let mut metas = Vec::with_capacity(samples.len());
    let mut radius_bins = [0usize; 3];
    let mut loc_counts: Vec<(String, usize)> = Vec::new();
    for s in &samples {
        write_volume(&s.gray, out.join("patches").join(&s.meta.id))?;
        write_mask(&s.gt, out.join("masks").join(&s.meta.id))?;
        if let Some(a) = &s.meta.aneurysm {
            radius_bins[crate::detect::radius_bin(a.spec.radius_mm)] += 1;
        }
        if let Some(loc) = &s.meta.location {
            match loc_counts.iter_mut().find(|(l, _)| l == loc) {
                Some((_, c)) => *c += 1,
                None => loc_counts.push((loc.clone(), 1)),
            }
        }
        metas.push(s.meta.clone());
    }
    let manifest = Manifest {
        config: cfg.clone(),
        samples: metas,
        radius_bin_counts: radius_bins,
        location_counts: loc_counts,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(out.join("manifest.json"), json)
        .map_err(|e| io_err(&out.join("manifest.json"), e))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct TrainingPatch {
    pub gray: VoxelVolume,
    pub gt: BinaryMask,
    pub positive: bool,
    pub center: [i64; 3],
}

/// Extract shifted positive crops (whole lesion contained) and
/// vessel-centered negative crops (zero lesion voxels).
pub fn extract_training_patches(
    vol: &VoxelVolume,
    lesions: &BinaryMask,
    vessels: &BinaryMask,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<Vec<TrainingPatch>> {
    if vol.dims != lesions.dims || vol.dims != vessels.dims {
        return Err(VamosError::DimsMismatch("extract_training_patches inputs".into()));
    }
    let size = cfg.patch_size;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let cc = connected_components(lesions, Connectivity::TwentySix);
    for voxels in &cc.voxels {
        // shift domain per axis: every crop start keeping the whole
        // lesion inside the patch
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for &i in voxels {
            let (x, y, z) = lesions.dims.coords(i);
            for (a, v) in [x, y, z].iter().enumerate() {
                lo[a] = lo[a].min(*v as i64);
                hi[a] = hi[a].max(*v as i64);
            }
        }
        let mut start_range = [(0i64, 0i64); 3];
        for a in 0..3 {
            let min_start = hi[a] + 1 - size[a] as i64;
            let max_start = lo[a];
            if min_start > max_start {
                return Err(VamosError::Pipeline(format!(
                    "lesion extent {} exceeds patch size {} on axis {a}",
                    hi[a] - lo[a] + 1,
                    size[a]
                )));
            }
            start_range[a] = (min_start, max_start);
        }
        for _ in 0..cfg.positives_per_lesion {
            let mut center = [0i64; 3];
            for a in 0..3 {
                let start = rng.gen_range(start_range[a].0..=start_range[a].1);
                center[a] = start + (size[a] / 2) as i64;
            }
            out.push(TrainingPatch {
                gray: crop(vol, center, size, 0.0),
                gt: crop_mask(lesions, center, size),
                positive: true,
                center,
            });
        }
    }
    // negatives: vessel-centered, lesion-free
    let vessel_voxels: Vec<usize> = vessels
        .data
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| v.then_some(i))
        .collect();
    if vessel_voxels.is_empty() {
        return Err(VamosError::Pipeline("no vessel voxels for negative extraction".into()));
    }
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let max_attempts = cfg.negatives_per_volume * 1000;
    while accepted < cfg.negatives_per_volume {
        attempts += 1;
        if attempts > max_attempts {
            return Err(VamosError::Pipeline(format!(
                "could not place {} lesion-free negatives after {attempts} attempts",
                cfg.negatives_per_volume
            )));
        }
        let i = vessel_voxels[rng.gen_range(0..vessel_voxels.len())];
        let (x, y, z) = vessels.dims.coords(i);
        let center = [x as i64, y as i64, z as i64];
        let gt = crop_mask(lesions, center, size);
        if gt.count() > 0 {
            continue;
        }
        out.push(TrainingPatch { gray: crop(vol, center, size, 0.0), gt, positive: false, center });
        accepted += 1;
    }
    Ok(out)
}
