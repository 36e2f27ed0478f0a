//! Topology-preserving curve skeletonization.
//!
//! Sequential 6-subiteration boundary thinning: each pass peels border
//! voxels from the U/D/N/S/E/W faces in turn, deleting only simple points
//! (26-connectivity for the object, 6 for the background) that are not
//! curve endpoints. A final cleanup pass removes leftover simple voxels so
//! the result is unit-width.

use crate::volume::{BinaryMask, Dims};

/// 26-neighbor offsets (center excluded).
fn n26() -> [[i64; 3]; 26] {
    let mut out = [[0i64; 3]; 26];
    let mut i = 0;
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    out[i] = [dx, dy, dz];
                    i += 1;
                }
            }
        }
    }
    out
}

/// Local 3x3x3 cube index.
#[inline]
fn cube_idx(dx: i64, dy: i64, dz: i64) -> usize {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
}

/// Extract the 3x3x3 neighborhood of (x,y,z); out-of-domain cells are
/// background.
fn neighborhood(data: &[bool], dims: Dims, x: usize, y: usize, z: usize) -> [bool; 27] {
    let mut cube = [false; 27];
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                if dims.contains(nx, ny, nz) {
                    cube[cube_idx(dx, dy, dz)] = data[dims.index(nx as usize, ny as usize, nz as usize)];
                }
            }
        }
    }
    cube
}

/// Number of 26-connected components among the object voxels of the
/// 26-neighborhood (center excluded).
fn object_components_26(cube: &[bool; 27]) -> usize {
    let mut visited = [false; 27];
    let mut count = 0;
    for start in 0..27 {
        if start == 13 || !cube[start] || visited[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(c) = stack.pop() {
            let (cz, cy, cx) = (c / 9, (c / 3) % 3, c % 3);
            for n in 0..27 {
                if n == 13 || visited[n] || !cube[n] {
                    continue;
                }
                let (nz, ny, nx) = (n / 9, (n / 3) % 3, n % 3);
                let (ddx, ddy, ddz) =
                    (nx as i64 - cx as i64, ny as i64 - cy as i64, nz as i64 - cz as i64);
                if ddx.abs() <= 1 && ddy.abs() <= 1 && ddz.abs() <= 1 {
                    visited[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    count
}

/// Number of 6-connected components of background voxels within the
/// 18-neighborhood that touch a face neighbor of the center.
fn background_components_6(cube: &[bool; 27]) -> usize {
    // cells of the 18-neighborhood: |dx|+|dy|+|dz| <= 2, not center
    let in_n18 = |c: usize| -> bool {
        let (cz, cy, cx) = (c / 9, (c / 3) % 3, c % 3);
        let (dx, dy, dz) = (cx as i64 - 1, cy as i64 - 1, cz as i64 - 1);
        let m = dx.abs() + dy.abs() + dz.abs();
        m >= 1 && m <= 2
    };
    let face = |c: usize| -> bool {
        let (cz, cy, cx) = (c / 9, (c / 3) % 3, c % 3);
        let (dx, dy, dz) = (cx as i64 - 1, cy as i64 - 1, cz as i64 - 1);
        dx.abs() + dy.abs() + dz.abs() == 1
    };
    let mut visited = [false; 27];
    let mut count = 0;
    for start in 0..27 {
        if !in_n18(start) || cube[start] || visited[start] {
            continue;
        }
        // flood the 6-connected background component within N18
        let mut stack = vec![start];
        let mut comp = vec![start];
        visited[start] = true;
        while let Some(c) = stack.pop() {
            let (cz, cy, cx) = (c / 9, (c / 3) % 3, c % 3);
            for (ddx, ddy, ddz) in [(1i64, 0i64, 0i64), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
            {
                let (nx, ny, nz) = (cx as i64 + ddx, cy as i64 + ddy, cz as i64 + ddz);
                if !(0..3).contains(&nx) || !(0..3).contains(&ny) || !(0..3).contains(&nz) {
                    continue;
                }
                let n = (nz * 9 + ny * 3 + nx) as usize;
                if n == 13 || visited[n] || cube[n] || !in_n18(n) {
                    continue;
                }
                visited[n] = true;
                stack.push(n);
                comp.push(n);
            }
        }
        if comp.iter().any(|&c| face(c)) {
            count += 1;
        }
    }
    count
}

/// Simple-point test for (26, 6) digital topology.
pub fn is_simple(cube: &[bool; 27]) -> bool {
    object_components_26(cube) == 1 && background_components_6(cube) == 1
}

fn object_neighbor_count(cube: &[bool; 27]) -> usize {
    (0..27).filter(|&c| c != 13 && cube[c]).count()
}

/// Thin a binary mask to a unit-width, topology-preserving curve skeleton.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let dims = mask.dims;
    let mut data = mask.data.clone();
    // face directions: the voxel is a d-border if its d-neighbor is background
    let directions: [[i64; 3]; 6] =
        [[0, 0, 1], [0, 0, -1], [0, 1, 0], [0, -1, 0], [1, 0, 0], [-1, 0, 0]];

    let mut candidates: Vec<usize> = Vec::new();
    loop {
        let mut deleted = 0usize;
        for dir in &directions {
            // candidacy is frozen at subiteration start so erosion stays
            // balanced; simplicity is re-checked sequentially
            candidates.clear();
            for idx in 0..dims.len() {
                if !data[idx] {
                    continue;
                }
                let (x, y, z) = dims.coords(idx);
                let (bx, by, bz) = (x as i64 + dir[0], y as i64 + dir[1], z as i64 + dir[2]);
                let border = if dims.contains(bx, by, bz) {
                    !data[dims.index(bx as usize, by as usize, bz as usize)]
                } else {
                    true
                };
                if border {
                    candidates.push(idx);
                }
            }
            for &idx in &candidates {
                if !data[idx] {
                    continue;
                }
                let (x, y, z) = dims.coords(idx);
                let cube = neighborhood(&data, dims, x, y, z);
                if object_neighbor_count(&cube) >= 2 && is_simple(&cube) {
                    data[idx] = false;
                    deleted += 1;
                }
            }
        }
        if deleted == 0 {
            break;
        }
    }

    // cleanup: remove remaining simple voxels (corner cutting) until stable
    loop {
        let mut deleted = 0usize;
        for idx in 0..dims.len() {
            if !data[idx] {
                continue;
            }
            let (x, y, z) = dims.coords(idx);
            let cube = neighborhood(&data, dims, x, y, z);
            if object_neighbor_count(&cube) >= 2 && is_simple(&cube) {
                data[idx] = false;
                deleted += 1;
            }
        }
        if deleted == 0 {
            break;
        }
    }

    BinaryMask { dims, spacing: mask.spacing, origin: mask.origin, data }
}

/// 26-neighbor offsets, shared with the graph builder.
pub fn neighbor_offsets_26() -> [[i64; 3]; 26] {
    n26()
}
