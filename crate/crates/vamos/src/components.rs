//! Connected-component labeling for binary masks (6/18/26 connectivity).
//!
//! Labels are assigned in lexicographic order of each component's first
//! voxel (x-fastest scan), so the labeling is deterministic.

use serde::{Deserialize, Serialize};

use crate::volume::{BinaryMask, Dims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    /// Neighbor offsets for this connectivity.
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let m = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => m == 1,
                        Connectivity::Eighteen => m <= 2,
                        Connectivity::TwentySix => true,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Labeled {
    pub dims: Dims,
    /// 0 = background, components numbered 1..=count.
    pub labels: Vec<u32>,
    /// Voxel index lists per component, 1-based by label-1.
    pub voxels: Vec<Vec<usize>>,
}

impl Labeled {
    pub fn count(&self) -> usize {
        self.voxels.len()
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Labeled {
    let dims = mask.dims;
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; dims.len()];
    let mut voxels: Vec<Vec<usize>> = Vec::new();
    let mut queue: Vec<usize> = Vec::new();

    for start in 0..dims.len() {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        let label = voxels.len() as u32 + 1;
        let mut comp = Vec::new();
        labels[start] = label;
        queue.clear();
        queue.push(start);
        while let Some(idx) = queue.pop() {
            comp.push(idx);
            let (x, y, z) = dims.coords(idx);
            for off in &offsets {
                let (nx, ny, nz) = (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
                if dims.contains(nx, ny, nz) {
                    let nidx = dims.index(nx as usize, ny as usize, nz as usize);
                    if mask.data[nidx] && labels[nidx] == 0 {
                        labels[nidx] = label;
                        queue.push(nidx);
                    }
                }
            }
        }
        comp.sort_unstable();
        voxels.push(comp);
    }
    Labeled { dims, labels, voxels }
}
