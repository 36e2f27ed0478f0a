//! Exact Euclidean distance transform, anisotropy-aware, in mm.
//!
//! Separable lower-envelope-of-parabolas passes over squared distances,
//! one per axis, with physical sample positions `i * spacing`. The domain
//! boundary counts as background: a virtual one-voxel background shell
//! surrounds the volume, so radii stay bounded on masks touching the
//! border.

use crate::volume::{BinaryMask, VoxelVolume};

const INF: f64 = f64::INFINITY;

/// 1D squared-distance transform at sample positions `pos`, in place.
fn edt_1d(f: &[f64], pos: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n]; // parabola sites
    let mut z = vec![0.0f64; n + 1]; // boundaries
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if f[q] == INF {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = -INF;
            z[1] = INF;
            k = 0;
            started = true;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + pos[q] * pos[q]) - (f[p] + pos[p] * pos[p])) / (2.0 * pos[q] - 2.0 * pos[p]);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    if !started {
        out.copy_from_slice(f);
        return;
    }
    let mut k2 = 0usize;
    for q in 0..n {
        while z[k2 + 1] < pos[q] {
            k2 += 1;
        }
        let p = v[k2];
        out[q] = (pos[q] - pos[p]).powi(2) + f[p];
    }
}

/// Exact EDT of the foreground, mm units; background voxels are 0.
pub fn distance_transform(mask: &BinaryMask) -> VoxelVolume {
    let dims = mask.dims;
    let (nx, ny, nz) = (dims.x, dims.y, dims.z);
    let sp = mask.spacing;
    let mut sq: Vec<f64> = mask.data.iter().map(|&b| if b { INF } else { 0.0 }).collect();

    // pass along each axis
    for (axis, (len, stride, ou, ov, su, sv)) in [
        (0usize, (nx, 1usize, ny, nz, nx, nx * ny)),
        (1, (ny, nx, nx, nz, 1, nx * ny)),
        (2, (nz, nx * ny, nx, ny, 1, nx)),
    ] {
        let s = sp[axis];
        let pos: Vec<f64> = (0..len).map(|i| i as f64 * s).collect();
        let mut line = vec![0.0f64; len];
        let mut out = vec![0.0f64; len];
        for v in 0..ov {
            for u in 0..ou {
                let base = u * su + v * sv;
                for i in 0..len {
                    line[i] = sq[base + i * stride];
                }
                edt_1d(&line, &pos, &mut out);
                for i in 0..len {
                    sq[base + i * stride] = out[i];
                }
            }
        }
    }

    // clamp by the virtual background shell one layer outside the domain
    let mut data = vec![0.0f32; dims.len()];
    for idx in 0..dims.len() {
        if !mask.data[idx] {
            continue;
        }
        let (x, y, z) = dims.coords(idx);
        let shell = [
            (x.min(nx - 1 - x) + 1) as f64 * sp[0],
            (y.min(ny - 1 - y) + 1) as f64 * sp[1],
            (z.min(nz - 1 - z) + 1) as f64 * sp[2],
        ]
        .into_iter()
        .fold(INF, f64::min);
        data[idx] = sq[idx].sqrt().min(shell) as f32;
    }
    VoxelVolume { dims: mask.dims, spacing: mask.spacing, origin: mask.origin, data }
}
