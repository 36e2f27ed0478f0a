//! Acceptance gate: ten end-to-end checks with pinned tolerances, one
//! pass/fail line per criterion. Run with
//! `cargo test --test acceptance -- --nocapture`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vamos::aneurysm::{attach_aneurysm, stand_off_distance, AneurysmSpec};
use vamos::components::{connected_components, Connectivity};
use vamos::detect::{dice_true_positives, match_lesions, sensitivity_fp};
use vamos::distance::distance_transform;
use vamos::fidelity::{fidelity_experiment, FidelityOptions, PairGroup};
use vamos::filter::{gaussian_filter, FilterMode};
use vamos::graph::{bifurcation_locale, crop_around_node, NodeKind, DEFAULT_TANGENT_WINDOW_MM};
use vamos::noise::{synth_noise_field, NoiseRecipe};
use vamos::phantom::{solid_ball, straight_tube, y_tube};
use vamos::pipeline::{extract_training_patches, gen_dataset, gen_patch, GenerationConfig, GenerationSite, SourceModel};
use vamos::raster::{gray_from_mask, rasterize_tube_mask};
use vamos::spline::{evaluate_spline, fit_spline, perturb_spline};
use vamos::volume::{BinaryMask, ClassStats, Dims, VoxelVolume};

fn measured_std(data: &[f32]) -> f64 {
    let n = data.len() as f64;
    let m = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    (data.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// 1. Calibrated-noise closure: synthesized 64^3 fields hit the target
/// mean within 1% and std within 10%, each in under a second.
fn noise_calibration_closure() {
    let dims = Dims::cubic(64);
    for &sigma_f in &[1.0f64, 2.0, 4.0] {
        for &mu in &[40.0f64, 60.0] {
            let stats = vec![ClassStats {
                label: 2,
                mean: mu,
                std: sigma_f,
                count: dims.len(),
                unreliable: false,
            }];
            let recipe = NoiseRecipe::from_stats(&stats, FilterMode::Slice2d, 7).unwrap();
            let t0 = Instant::now();
            let field = synth_noise_field(dims, [0.4; 3], &recipe, 2).unwrap();
            let elapsed = t0.elapsed();
            assert!(elapsed.as_secs_f64() < 1.0, "field took {elapsed:?}");
            let mean = field.mean();
            assert!(
                (mean - mu).abs() / mu <= 0.01,
                "target mu {mu}: measured {mean}"
            );
            let sd = measured_std(&field.data);
            assert!(
                (sd - sigma_f).abs() / sigma_f <= 0.10,
                "target sigma_f {sigma_f}: measured {sd}"
            );
        }
    }
}

struct YPatch {
    gray: VoxelVolume,
    vessels: BinaryMask,
    locale: vamos::graph::BifurcationLocale,
}

fn y_patch() -> YPatch {
    let cfg = GenerationConfig::default();
    let yt = y_tube(Dims::cubic(96), cfg.spacing_mm, 2.5, 40.0, 34.0);
    let source = SourceModel::from_segmentation(yt.mask, None, cfg.min_branch_mm).unwrap();
    let node = source.bifurcation_ids()[0];
    let vessel_vol = source.vessels.to_volume();
    let (patch_ref, subgraph) = crop_around_node(&vessel_vol, &source.graph, node, [64; 3]).unwrap();
    let mut vessels = BinaryMask::empty(subgraph.dims, subgraph.spacing);
    vessels.origin = subgraph.origin;
    for branch in &subgraph.branches {
        if branch.points.len() < 2 {
            continue;
        }
        let pts: Vec<[f64; 3]> =
            branch.points.iter().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
        let tube = rasterize_tube_mask(&pts, &branch.radii_mm, subgraph.dims, subgraph.spacing).unwrap();
        vessels = vessels.union(&tube).unwrap();
    }
    let mut gray = gray_from_mask(&vessels, 300.0).unwrap();
    gray.origin = patch_ref.origin;
    let center_node = subgraph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Bifurcation)
        .min_by_key(|n| {
            let d = |v: usize| (v as i64 - 32).pow(2);
            d(n.pos[0]) + d(n.pos[1]) + d(n.pos[2])
        })
        .unwrap()
        .id;
    let locale = bifurcation_locale(&subgraph, center_node, DEFAULT_TANGENT_WINDOW_MM).unwrap();
    YPatch { gray, vessels, locale }
}

/// 2. Stand-off distance: formula reference values to 1e-9 and the
/// rendered sac center lands at that distance within half a voxel
/// across 25 seeds.
fn stand_off_placement() {
    let d = stand_off_distance(1.0, 1.0, 1.0, 90.0f64.to_radians()).unwrap();
    assert!((d - (1.0 + 2.0f64.sqrt())).abs() < 1e-9, "{d}");
    let d = stand_off_distance(1.2, 0.7, 0.8, 60.0f64.to_radians()).unwrap();
    assert!((d - 2.44).abs() < 1e-9, "{d}");

    let patch = y_patch();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for seed in 0..25u64 {
        let spec = AneurysmSpec {
            radius_mm: rng.gen_range(0.8..1.6),
            gamma: rng.gen_range(0.7..1.0),
            sigma: rng.gen_range(1.0..4.0),
            seed,
        };
        let att = attach_aneurysm(&patch.gray, &patch.vessels, &patch.locale, &spec, 300.0, false)
            .unwrap();
        // centroid of the rendered sac, world mm
        let mut acc = [0.0f64; 3];
        let mut n = 0usize;
        for (i, &on) in att.sac_mask.data.iter().enumerate() {
            if on {
                let (x, y, z) = att.sac_mask.dims.coords(i);
                let w = att.sac_mask.world(x, y, z);
                acc[0] += w[0];
                acc[1] += w[1];
                acc[2] += w[2];
                n += 1;
            }
        }
        let c = [acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64];
        let nw = patch.locale.node_world;
        let dist = ((c[0] - nw[0]).powi(2) + (c[1] - nw[1]).powi(2) + (c[2] - nw[2]).powi(2)).sqrt();
        let half_voxel = 0.5 * 0.4;
        assert!(
            (dist - att.placed.stand_off_mm).abs() <= half_voxel + 1e-9,
            "seed {seed}: rendered distance {dist} vs stand-off {}",
            att.placed.stand_off_mm
        );
    }
}

/// 3. Right-triangle decomposition of the stand-off hypotenuse is exact
/// over 1000 random draws.
fn geometry_chain_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let r: f64 = rng.gen_range(0.2..3.0);
        let theta: f64 = rng.gen_range(1e-3..std::f64::consts::FRAC_PI_2);
        let l = r / theta.tan();
        let h2 = l * l + r * r;
        let residual = h2 - (r / theta.tan()).powi(2) - r * r;
        assert!(residual.abs() < 1e-9, "{residual}");
    }
}

/// 4. Skeleton/graph phantoms at 128^3: Y gives 1 bifurcation + 3
/// endpoints, a straight tube gives 2 endpoints + 1 branch, mid-branch
/// radii within 15%, each under 5 s.
fn skeleton_graph_phantoms() {
    let sp = [0.4; 3];
    let t0 = Instant::now();
    let yt = y_tube(Dims::cubic(128), sp, 2.5, 40.0, 45.0);
    let source = SourceModel::from_segmentation(yt.mask, None, 4.0).unwrap();
    assert!(t0.elapsed().as_secs_f64() < 5.0, "y phantom took {:?}", t0.elapsed());
    let bifs = source.graph.bifurcations().count();
    let ends = source.graph.endpoints().count();
    assert_eq!(bifs, 1, "y phantom bifurcations");
    assert_eq!(ends, 3, "y phantom endpoints");
    let expect_r = 2.5 * 0.4;
    for branch in &source.graph.branches {
        let mid = branch.radii_mm[branch.radii_mm.len() / 2];
        assert!(
            (mid - expect_r).abs() / expect_r <= 0.15,
            "mid-branch radius {mid} vs {expect_r}"
        );
    }

    let t1 = Instant::now();
    let tube = straight_tube(Dims::cubic(128), sp, 2.5, [64, 64], [14, 114]);
    let source = SourceModel::from_segmentation(tube, None, 4.0).unwrap();
    assert!(t1.elapsed().as_secs_f64() < 5.0, "tube phantom took {:?}", t1.elapsed());
    assert_eq!(source.graph.endpoints().count(), 2, "tube endpoints");
    assert_eq!(source.graph.branches.len(), 1, "tube branches");
    let b = &source.graph.branches[0];
    let mid = b.radii_mm[b.radii_mm.len() / 2];
    assert!((mid - expect_r).abs() / expect_r <= 0.15, "tube mid radius {mid}");
}

/// 5. Spline round trip: helix residual <= 0.5 voxel, zero-amplitude
/// perturbation is the identity, endpoints pinned to 1e-9.
fn spline_round_trip() {
    let pts: Vec<[f64; 3]> = (0..50)
        .map(|i| {
            let t = i as f64 / 49.0 * 4.0 * std::f64::consts::PI;
            [5.0 * t.cos() + 20.0, 5.0 * t.sin() + 20.0, t]
        })
        .collect();
    let spline = fit_spline(&pts, 3, 0.0).unwrap();
    let eval = evaluate_spline(&spline, 50);
    let mut max_res = 0.0f64;
    for (p, q) in pts.iter().zip(eval.iter()) {
        let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        max_res = max_res.max(d);
    }
    assert!(max_res <= 0.5, "helix max residual {max_res}");

    let same = perturb_spline(&spline, 0.0, 99, true);
    assert_eq!(same.coeffs, spline.coeffs, "zero amplitude must be identity");

    for seed in 0..5 {
        let pert = perturb_spline(&spline, 2.0, seed, true);
        let (t0, t1) = pert.domain();
        for (t, want) in [(t0, pts[0]), (t1, pts[49])] {
            let got = vamos::spline::evaluate_at(&pert, t);
            for a in 0..3 {
                assert!((got[a] - want[a]).abs() < 1e-9, "endpoint drift {:?}", got);
            }
        }
    }
}

/// 6. Filtered-noise law validity: measured std over predicted std in
/// [0.9, 1.1] for filter widths 1.5..4 on 64^3 slice-filtered fields.
fn filtered_noise_law() {
    let dims = Dims::cubic(64);
    let sigma_0 = 100.0f64;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    for &sigma_g in &[1.5f64, 2.0, 3.0, 4.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + sigma_g as u64);
        let mut white = VoxelVolume::zeros(dims, [0.4; 3]);
        for v in &mut white.data {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            *v = (sigma_0 * (-2.0 * u1.ln()).sqrt() * u2.cos()) as f32;
        }
        let filtered = gaussian_filter(&white, sigma_g, FilterMode::Slice2d).unwrap();
        let predicted = sigma_0 / (2.0 * sigma_g * sqrt_pi);
        let ratio = measured_std(&filtered.data) / predicted;
        assert!(
            (0.9..=1.1).contains(&ratio),
            "sigma_g {sigma_g}: ratio {ratio}"
        );
    }
}

fn ball_mask(dims: Dims, spacing: [f64; 3], center: [f64; 3], r_vox: f64) -> BinaryMask {
    solid_ball(dims, spacing, center, r_vox)
}

/// Brute-force reimplementation of the lesion matching protocol.
fn detection_oracle(pred: &BinaryMask, gt: &BinaryMask) -> (usize, usize, usize, Vec<f64>) {
    let dist = |a: [f64; 3], b: [f64; 3]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };
    let centro = |m: &BinaryMask, vs: &[usize]| {
        let mut a = [0.0f64; 3];
        for &i in vs {
            let (x, y, z) = m.dims.coords(i);
            let w = m.world(x, y, z);
            a[0] += w[0];
            a[1] += w[1];
            a[2] += w[2];
        }
        [a[0] / vs.len() as f64, a[1] / vs.len() as f64, a[2] / vs.len() as f64]
    };
    let gt_cc = connected_components(gt, Connectivity::TwentySix);
    let pred_cc = connected_components(pred, Connectivity::TwentySix);
    let centroids: Vec<[f64; 3]> = gt_cc.voxels.iter().map(|v| centro(gt, v)).collect();
    let radii: Vec<f64> = gt_cc
        .voxels
        .iter()
        .zip(&centroids)
        .map(|(vs, &c)| {
            vs.iter()
                .map(|&i| {
                    let (x, y, z) = gt.dims.coords(i);
                    dist(c, gt.world(x, y, z))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); gt_cc.count()];
    let mut fp = 0usize;
    for (pi, vs) in pred_cc.voxels.iter().enumerate() {
        let com = centro(pred, vs);
        let mut best: Option<(f64, usize)> = None;
        for li in 0..gt_cc.count() {
            let d = dist(com, centroids[li]);
            if d <= radii[li] && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, li));
            }
        }
        match best {
            Some((_, li)) => assigned[li].push(pi),
            None => fp += 1,
        }
    }
    let tp = assigned.iter().filter(|a| !a.is_empty()).count();
    let mut dices = Vec::new();
    for (li, comps) in assigned.iter().enumerate() {
        if comps.is_empty() {
            continue;
        }
        let mut union: Vec<usize> = comps.iter().flat_map(|&pi| pred_cc.voxels[pi].clone()).collect();
        union.sort_unstable();
        union.dedup();
        let inter = gt_cc.voxels[li].iter().filter(|i| union.binary_search(i).is_ok()).count();
        dices.push(2.0 * inter as f64 / (union.len() + gt_cc.voxels[li].len()) as f64);
    }
    (tp, gt_cc.count() - tp, fp, dices)
}

/// 7. Detection protocol equals the brute-force oracle on 50 random
/// 32^3 instances, exactly.
fn detection_oracle_equivalence() {
    let dims = Dims::cubic(32);
    let sp = [0.4, 0.5, 0.45];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut tables = Vec::new();
    for _ in 0..50 {
        let mut gt = BinaryMask::empty(dims, sp);
        let mut pred = BinaryMask::empty(dims, sp);
        for _ in 0..rng.gen_range(0..4) {
            let c = [rng.gen_range(4.0..28.0), rng.gen_range(4.0..28.0), rng.gen_range(4.0..28.0)];
            gt = gt.union(&ball_mask(dims, sp, c, rng.gen_range(1.5..4.0))).unwrap();
        }
        for _ in 0..rng.gen_range(0..5) {
            let c = [rng.gen_range(4.0..28.0), rng.gen_range(4.0..28.0), rng.gen_range(4.0..28.0)];
            pred = pred.union(&ball_mask(dims, sp, c, rng.gen_range(1.0..3.5))).unwrap();
        }
        let table = match_lesions(&pred, &gt).unwrap();
        let dices: Vec<f64> = dice_true_positives(&table, &pred, &gt)
            .unwrap()
            .into_iter()
            .map(|(_, d)| d)
            .collect();
        let (tp, fn_count, fp, oracle_dices) = detection_oracle(&pred, &gt);
        assert_eq!(table.tp(), tp);
        assert_eq!(table.fn_count(), fn_count);
        assert_eq!(table.fp(), fp);
        assert_eq!(dices, oracle_dices);
        tables.push(table);
    }
    // aggregate must equal pooled hand counts
    let agg = sensitivity_fp(&tables).unwrap();
    let tp: usize = tables.iter().map(|t| t.tp()).sum();
    let total: usize = tables.iter().map(|t| t.lesions.len()).sum();
    let fp: usize = tables.iter().map(|t| t.fp()).sum();
    assert_eq!(agg.tp, tp);
    assert_eq!(agg.sensitivity, (total > 0).then(|| tp as f64 / total as f64));
    assert!((agg.fp_per_case - fp as f64 / 50.0).abs() < 1e-12);
}

/// 8. Fidelity ordering: over 10 phantom patients with one model each,
/// the own-model group scores higher median PSNR and SSIM than the
/// inter-patient group.
fn fidelity_ordering() {
    let mut sources = Vec::new();
    let mut models = Vec::new();
    for p in 0..10u64 {
        let cfg = GenerationConfig {
            aneurysm_probability: 0.0,
            master_seed: 1000 + p,
            ..GenerationConfig::default()
        };
        let radius = 2.0 + 0.12 * p as f64;
        let angle = 25.0 + 4.0 * p as f64;
        let yt = y_tube(Dims::cubic(96), cfg.spacing_mm, radius, angle, 34.0);
        let source = SourceModel::from_segmentation(yt.mask, None, cfg.min_branch_mm).unwrap();
        let node = source.bifurcation_ids()[0];
        // "real" patch: unperturbed rendering of this patient's geometry
        let real_cfg = GenerationConfig { perturb_amplitude_vox: 0.0, ..cfg.clone() };
        let real = gen_patch(&source, 0, node, None, &real_cfg, 0).unwrap();
        // model: same geometry re-rendered with perturbation and fresh noise
        let model = gen_patch(&source, 0, node, None, &cfg, 1).unwrap();
        sources.push(real.gray);
        models.push(model.gray);
    }
    let pairing: Vec<usize> = (0..10).collect();
    let opts = FidelityOptions {
        data_range: 4095.0,
        use_2d_slices: true,
        slices_per_pair: 8,
        seed: 11,
    };
    let report = fidelity_experiment(&sources, &models, &pairing, &opts).unwrap();
    for metric in ["psnr", "ssim"] {
        let own = report.median(PairGroup::OwnModel, metric).unwrap();
        let inter = report.median(PairGroup::InterPatient, metric).unwrap();
        assert!(own > inter, "{metric}: own-model median {own} !> inter-patient {inter}");
    }
}

/// 9. Dataset determinism and throughput: byte-identical output across
/// runs and worker counts; 100 patches of 64^3 in under 120 s on one
/// worker. The multi-core scaling measurement is skipped on machines
/// without 4 CPUs (determinism across worker counts is still enforced).
fn dataset_determinism_throughput() {
    let cfg = GenerationConfig { count: 6, master_seed: 31, ..GenerationConfig::default() };
    let yt = y_tube(Dims::cubic(96), cfg.spacing_mm, 2.5, 40.0, 34.0);
    let source = SourceModel::from_segmentation(yt.mask, None, cfg.min_branch_mm).unwrap();
    let node = source.bifurcation_ids()[0];
    let sites = vec![GenerationSite { source: 0, node_id: node, location: None }];

    let dataset_bytes = |threads: &str| -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        std::env::set_var("VAMOS_THREADS", threads);
        gen_dataset(std::slice::from_ref(&source), &sites, &cfg, dir.path()).unwrap();
        std::env::remove_var("VAMOS_THREADS");
        let mut bytes = Vec::new();
        for sub in ["patches", "masks"] {
            let mut entries: Vec<_> = std::fs::read_dir(dir.path().join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            entries.sort();
            for p in entries {
                bytes.extend(std::fs::read(&p).unwrap());
            }
        }
        bytes.extend(std::fs::read(dir.path().join("manifest.json")).unwrap());
        bytes
    };
    let run1 = dataset_bytes("1");
    let run2 = dataset_bytes("1");
    let run4 = dataset_bytes("4");
    assert_eq!(run1, run2, "repeat run differs");
    assert_eq!(run1, run4, "worker count changes output");

    let cfg100 = GenerationConfig { count: 100, master_seed: 31, ..GenerationConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("VAMOS_THREADS", "1");
    let t0 = Instant::now();
    let manifest = gen_dataset(std::slice::from_ref(&source), &sites, &cfg100, dir.path()).unwrap();
    let elapsed = t0.elapsed();
    std::env::remove_var("VAMOS_THREADS");
    assert_eq!(manifest.samples.len(), 100);
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "100 patches took {elapsed:?} single-worker"
    );
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cpus >= 4 {
        let dir4 = tempfile::tempdir().unwrap();
        std::env::set_var("VAMOS_THREADS", "4");
        let t4 = Instant::now();
        gen_dataset(std::slice::from_ref(&source), &sites, &cfg100, dir4.path()).unwrap();
        let e4 = t4.elapsed();
        std::env::remove_var("VAMOS_THREADS");
        assert!(
            e4.as_secs_f64() < elapsed.as_secs_f64() / 2.0,
            "4-worker run {e4:?} not near-linear vs {elapsed:?}"
        );
    } else {
        println!("    note: scaling measurement skipped ({cpus} CPU(s) available)");
    }
}

/// 10. Training-crop contracts: positives contain every lesion voxel
/// (10 per lesion), negatives are vessel-centered with zero lesion
/// voxels (20 per volume).
fn training_patch_contracts() {
    let dims = Dims::cubic(192);
    let sp = [0.4; 3];
    let cfg = GenerationConfig::default(); // 64^3 patches
    let vol = VoxelVolume::filled(dims, sp, 50.0);
    let lesion = solid_ball(dims, sp, [50.0, 60.0, 70.0], 5.0)
        .union(&solid_ball(dims, sp, [60.0, 130.0, 60.0], 4.0))
        .unwrap();
    let vessels = solid_ball(dims, sp, [150.0, 150.0, 150.0], 3.0)
        .union(&solid_ball(dims, sp, [150.0, 40.0, 150.0], 3.0))
        .unwrap();
    let patches = extract_training_patches(&vol, &lesion, &vessels, &cfg, 13).unwrap();
    let positives: Vec<_> = patches.iter().filter(|p| p.positive).collect();
    let negatives: Vec<_> = patches.iter().filter(|p| !p.positive).collect();
    assert_eq!(positives.len(), 20, "10 per lesion over 2 lesions");
    assert_eq!(negatives.len(), 20);
    // each positive fully contains its lesion: the cropped mask holds
    // exactly one whole lesion component's voxel count
    let cc = connected_components(&lesion, Connectivity::TwentySix);
    let sizes: Vec<usize> = cc.voxels.iter().map(|v| v.len()).collect();
    for p in &positives {
        assert!(
            sizes.contains(&p.gt.count()),
            "positive crop holds {} lesion voxels, expected a whole lesion {:?}",
            p.gt.count(),
            sizes
        );
    }
    for n in &negatives {
        assert_eq!(n.gt.count(), 0, "negative crop contains lesion voxels");
        let c = n.center;
        assert!(vessels.get(c[0] as usize, c[1] as usize, c[2] as usize));
        // patch itself contains at least one vessel voxel
        let vc = vamos::volume::crop_mask(&vessels, c, cfg.patch_size);
        assert!(vc.count() >= 1);
    }
    // sanity: distance transform sees the lesions as distinct blobs
    assert_eq!(cc.count(), 2);
    let dt = distance_transform(&lesion);
    assert!(dt.data.iter().cloned().fold(0.0f32, f32::max) > 1.0);
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn())> = vec![
        ("01 noise-calibration-closure", noise_calibration_closure),
        ("02 stand-off-placement", stand_off_placement),
        ("03 geometry-chain-consistency", geometry_chain_consistency),
        ("04 skeleton-graph-phantoms", skeleton_graph_phantoms),
        ("05 spline-round-trip", spline_round_trip),
        ("06 filtered-noise-law", filtered_noise_law),
        ("07 detection-oracle-equivalence", detection_oracle_equivalence),
        ("08 fidelity-ordering", fidelity_ordering),
        ("09 dataset-determinism-throughput", dataset_determinism_throughput),
        ("10 training-patch-contracts", training_patch_contracts),
    ];
    let mut failures = Vec::new();
    for (name, f) in criteria {
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(()) => println!("criterion {name}: PASS"),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                println!("criterion {name}: FAIL ({msg})");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
