//! Branch/node graph extraction from a unit-width skeleton.
//!
//! Node voxels are skeleton voxels with a 26-neighbor count other than 2;
//! adjacent node voxels are clustered into a single graph node. Branches
//! are maximal degree-2 chains between clusters. Closed loops get a
//! synthetic degree-2 anchor node at their lexicographically smallest
//! voxel.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VamosError};
use crate::skeleton::neighbor_offsets_26;
use crate::volume::{crop, BinaryMask, Dims, VoxelVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Endpoint,
    Bifurcation,
    /// Inserted degree-2 anchor (cycle break) or isolated voxel.
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub pos: [usize; 3],
    pub kind: NodeKind,
    pub degree: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    /// Node ids at the two ends.
    pub ends: [usize; 2],
    /// Ordered 26-adjacent centerline voxels, first/last at the end nodes.
    pub points: Vec<[usize; 3]>,
    pub radii_mm: Vec<f64>,
}

impl Branch {
    /// Geodesic length in mm (sum of physical steps).
    pub fn length_mm(&self, spacing: [f64; 3]) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let d = [
                    (w[1][0] as f64 - w[0][0] as f64) * spacing[0],
                    (w[1][1] as f64 - w[0][1] as f64) * spacing[1],
                    (w[1][2] as f64 - w[0][2] as f64) * spacing[2],
                ];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VesselGraph {
    pub nodes: Vec<GraphNode>,
    pub branches: Vec<Branch>,
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl VesselGraph {
    pub fn node(&self, id: usize) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn bifurcations(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Bifurcation)
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Endpoint)
    }

    /// (branch index, end slot) pairs incident to a node.
    pub fn incidences(&self, node_id: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (bi, b) in self.branches.iter().enumerate() {
            for slot in 0..2 {
                if b.ends[slot] == node_id {
                    out.push((bi, slot));
                }
            }
        }
        out
    }

    pub fn world(&self, pos: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + pos[0] as f64 * self.spacing[0],
            self.origin[1] + pos[1] as f64 * self.spacing[1],
            self.origin[2] + pos[2] as f64 * self.spacing[2],
        ]
    }

    fn recompute_degrees(&mut self) {
        let mut deg: HashMap<usize, usize> = HashMap::new();
        for b in &self.branches {
            *deg.entry(b.ends[0]).or_insert(0) += 1;
            *deg.entry(b.ends[1]).or_insert(0) += 1;
        }
        for n in &mut self.nodes {
            n.degree = deg.get(&n.id).copied().unwrap_or(0);
            n.kind = match n.degree {
                1 => NodeKind::Endpoint,
                d if d >= 3 => NodeKind::Bifurcation,
                _ => NodeKind::Synthetic,
            };
        }
    }
}

fn neighbors_of(data: &[bool], dims: Dims, idx: usize, offsets: &[[i64; 3]; 26]) -> Vec<usize> {
    let (x, y, z) = dims.coords(idx);
    let mut out = Vec::new();
    for off in offsets {
        let (nx, ny, nz) = (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
        if dims.contains(nx, ny, nz) {
            let n = dims.index(nx as usize, ny as usize, nz as usize);
            if data[n] {
                out.push(n);
            }
        }
    }
    out
}

/// Build the branch/node graph of a unit-width skeleton. Per-point radii
/// are sampled from `radii` (distance transform of the original mask).
pub fn build_graph(skeleton: &BinaryMask, radii: &VoxelVolume) -> Result<VesselGraph> {
    if skeleton.dims != radii.dims {
        return Err(VamosError::DimsMismatch("build_graph radii volume".into()));
    }
    let dims = skeleton.dims;
    let data = &skeleton.data;
    let offsets = neighbor_offsets_26();

    // unit-width check: a fully foreground 2x2x2 block cannot occur
    for z in 0..dims.z.saturating_sub(1) {
        for y in 0..dims.y.saturating_sub(1) {
            for x in 0..dims.x.saturating_sub(1) {
                let full = (0..8).all(|c| {
                    data[dims.index(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1))]
                });
                if full {
                    return Err(VamosError::MalformedSkeleton(format!(
                        "2x2x2 foreground block at ({x},{y},{z})"
                    )));
                }
            }
        }
    }

    let ncount: Vec<u8> = (0..dims.len())
        .map(|i| if data[i] { neighbors_of(data, dims, i, &offsets).len() as u8 } else { 0 })
        .collect();
    let is_node_voxel = |i: usize| data[i] && ncount[i] != 2;

    // cluster adjacent node voxels
    let mut cluster_of: HashMap<usize, usize> = HashMap::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..dims.len() {
        if !is_node_voxel(i) || cluster_of.contains_key(&i) {
            continue;
        }
        let cid = clusters.len();
        let mut comp = vec![i];
        cluster_of.insert(i, cid);
        let mut stack = vec![i];
        while let Some(c) = stack.pop() {
            for n in neighbors_of(data, dims, c, &offsets) {
                if is_node_voxel(n) && !cluster_of.contains_key(&n) {
                    cluster_of.insert(n, cid);
                    comp.push(n);
                    stack.push(n);
                }
            }
        }
        comp.sort_unstable();
        clusters.push(comp);
    }

    let radius_at = |i: usize| -> f64 {
        let r = radii.data[i] as f64;
        if r > 0.0 {
            r
        } else {
            // skeleton voxel fell on a zero of the distance map; floor at
            // half the smallest spacing so radii stay positive
            0.5 * skeleton.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    };

    let mut branches: Vec<Branch> = Vec::new();
    let mut used_steps: HashSet<(usize, usize)> = HashSet::new();
    let mut chain_visited: Vec<bool> = vec![false; dims.len()];
    let mut direct_pairs: HashSet<(usize, usize)> = HashSet::new();

    let coords3 = |i: usize| -> [usize; 3] {
        let (x, y, z) = dims.coords(i);
        [x, y, z]
    };

    for cluster in clusters.iter() {
        for &v in cluster {
            for w in neighbors_of(data, dims, v, &offsets) {
                if is_node_voxel(w) {
                    let wc = cluster_of[&w];
                    let vc = cluster_of[&v];
                    if wc != vc {
                        let key = if v < w { (v, w) } else { (w, v) };
                        if direct_pairs.insert(key) {
                            branches.push(Branch {
                                id: branches.len(),
                                ends: [vc, wc],
                                points: vec![coords3(v), coords3(w)],
                                radii_mm: vec![radius_at(v), radius_at(w)],
                            });
                        }
                    }
                    continue;
                }
                if used_steps.contains(&(v, w)) {
                    continue;
                }
                // walk the degree-2 chain
                let mut points = vec![v, w];
                let mut prev = v;
                let mut cur = w;
                let end_cluster;
                loop {
                    chain_visited[cur] = true;
                    let nb = neighbors_of(data, dims, cur, &offsets);
                    let next = nb.into_iter().find(|&n| n != prev);
                    let next = match next {
                        Some(n) => n,
                        None => {
                            // dead end without a node voxel: cannot happen on a
                            // consistent skeleton (1-neighbor voxels are nodes)
                            end_cluster = None;
                            break;
                        }
                    };
                    if is_node_voxel(next) {
                        used_steps.insert((next, cur));
                        points.push(next);
                        end_cluster = Some(cluster_of[&next]);
                        break;
                    }
                    points.push(next);
                    prev = cur;
                    cur = next;
                }
                used_steps.insert((v, w));
                let end = match end_cluster {
                    Some(c) => c,
                    None => {
                        return Err(VamosError::MalformedSkeleton(
                            "chain terminated without a node voxel".into(),
                        ))
                    }
                };
                branches.push(Branch {
                    id: branches.len(),
                    ends: [cluster_of[&v], end],
                    points: points.iter().map(|&i| coords3(i)).collect(),
                    radii_mm: points.iter().map(|&i| radius_at(i)).collect(),
                });
            }
        }
    }

    // pure cycles: degree-2 voxels not reached by any walk
    for i in 0..dims.len() {
        if !data[i] || is_node_voxel(i) || chain_visited[i] {
            continue;
        }
        // i is the lexicographically smallest unvisited voxel of its cycle
        let anchor_cid = clusters.len();
        clusters.push(vec![i]);
        cluster_of.insert(i, anchor_cid);
        let nb = neighbors_of(data, dims, i, &offsets);
        let mut points = vec![i];
        let mut prev = i;
        let mut cur = nb[0];
        while cur != i {
            chain_visited[cur] = true;
            points.push(cur);
            let nb = neighbors_of(data, dims, cur, &offsets);
            let next = nb.into_iter().find(|&n| n != prev).ok_or_else(|| {
                VamosError::MalformedSkeleton("broken cycle chain".into())
            })?;
            prev = cur;
            cur = next;
        }
        points.push(i);
        chain_visited[i] = true;
        branches.push(Branch {
            id: branches.len(),
            ends: [anchor_cid, anchor_cid],
            points: points.iter().map(|&p| coords3(p)).collect(),
            radii_mm: points.iter().map(|&p| radius_at(p)).collect(),
        });
    }

    let mut graph = VesselGraph {
        nodes: clusters
            .iter()
            .enumerate()
            .map(|(id, comp)| GraphNode {
                id,
                pos: coords3(comp[0]),
                kind: NodeKind::Synthetic,
                degree: 0,
            })
            .collect(),
        branches,
        dims,
        spacing: skeleton.spacing,
        origin: skeleton.origin,
    };
    graph.recompute_degrees();
    Ok(graph)
}

/// Remove endpoint-terminated branches shorter than `min_length_mm`, then
/// merge degree-2 residues. Idempotent.
pub fn prune_spurs(graph: &VesselGraph, min_length_mm: f64) -> VesselGraph {
    let mut g = graph.clone();
    loop {
        let mut changed = false;

        // drop short hair branches
        let keep: Vec<bool> = g
            .branches
            .iter()
            .map(|b| {
                if b.ends[0] == b.ends[1] {
                    return true; // self-loop is not a spur
                }
                let end_is_leaf = |id: usize| g.node(id).map(|n| n.degree == 1).unwrap_or(false);
                let leaf = end_is_leaf(b.ends[0]) || end_is_leaf(b.ends[1]);
                !(leaf && b.length_mm(g.spacing) < min_length_mm)
            })
            .collect();
        if keep.iter().any(|&k| !k) {
            g.branches = g
                .branches
                .iter()
                .zip(keep.iter())
                .filter(|(_, &k)| k)
                .map(|(b, _)| b.clone())
                .collect();
            changed = true;
        }
        g.recompute_degrees();

        // merge degree-2 residues (two distinct incident branches)
        let merge_node = g
            .nodes
            .iter()
            .filter(|n| n.degree == 2)
            .find(|n| {
                let inc = g.incidences(n.id);
                inc.len() == 2 && inc[0].0 != inc[1].0
            })
            .map(|n| n.id);
        if let Some(nid) = merge_node {
            let inc = g.incidences(nid);
            let (bi1, slot1) = inc[0];
            let (bi2, slot2) = inc[1];
            let b1 = g.branches[bi1].clone();
            let b2 = g.branches[bi2].clone();
            // orient: b1 ending at nid, b2 starting at nid
            let (mut pts, mut rad) = if slot1 == 1 {
                (b1.points.clone(), b1.radii_mm.clone())
            } else {
                let mut p = b1.points.clone();
                let mut r = b1.radii_mm.clone();
                p.reverse();
                r.reverse();
                (p, r)
            };
            let far1 = b1.ends[1 - slot1];
            let (p2, r2, far2) = if slot2 == 0 {
                (b2.points.clone(), b2.radii_mm.clone(), b2.ends[1])
            } else {
                let mut p = b2.points.clone();
                let mut r = b2.radii_mm.clone();
                p.reverse();
                r.reverse();
                (p, r, b2.ends[0])
            };
            pts.extend_from_slice(&p2[1..]);
            rad.extend_from_slice(&r2[1..]);
            let merged = Branch { id: 0, ends: [far1, far2], points: pts, radii_mm: rad };
            g.branches = g
                .branches
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != bi1 && *i != bi2)
                .map(|(_, b)| b.clone())
                .collect();
            g.branches.push(merged);
            changed = true;
            g.recompute_degrees();
        }

        if !changed {
            break;
        }
    }
    // drop orphaned nodes and renumber
    let live: HashSet<usize> = g.branches.iter().flat_map(|b| b.ends).collect();
    g.nodes.retain(|n| live.contains(&n.id));
    let remap: HashMap<usize, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    for n in &mut g.nodes {
        n.id = remap[&n.id];
    }
    for (i, b) in g.branches.iter_mut().enumerate() {
        b.id = i;
        b.ends = [remap[&b.ends[0]], remap[&b.ends[1]]];
    }
    g
}

/// Geometry of a degree-3 bifurcation: daughter tangents, inter-daughter
/// angle and local radius, averaged over `tangent_window_mm` of each
/// daughter branch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationLocale {
    pub node_id: usize,
    pub mother_branch: usize,
    pub daughter_branches: [usize; 2],
    pub daughter_tangents: [[f64; 3]; 2],
    /// Inter-daughter angle, radians, in (0, pi].
    pub theta: f64,
    /// Local branch radius, mm (mean of the two daughters over the window).
    pub radius_mm: f64,
    /// World position of the node, mm.
    pub node_world: [f64; 3],
}

pub const DEFAULT_TANGENT_WINDOW_MM: f64 = 2.0;

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Mean radius and centroid direction over the first `window_mm` of a
/// branch walked away from the node at `slot`.
fn branch_window(
    graph: &VesselGraph,
    branch: &Branch,
    slot: usize,
    window_mm: f64,
) -> Result<([f64; 3], f64)> {
    if branch.points.len() < 2 {
        return Err(VamosError::Graph("branch shorter than one voxel".into()));
    }
    let mut pts: Vec<[usize; 3]> = branch.points.clone();
    let mut rad = branch.radii_mm.clone();
    if slot == 1 {
        pts.reverse();
        rad.reverse();
    }
    let node_w = graph.world(pts[0]);
    let mut cum = 0.0;
    let mut centroid = [0.0f64; 3];
    let mut rsum = 0.0;
    let mut count = 0usize;
    for i in 1..pts.len() {
        let w = graph.world(pts[i]);
        let prev = graph.world(pts[i - 1]);
        cum += norm([w[0] - prev[0], w[1] - prev[1], w[2] - prev[2]]);
        centroid[0] += w[0];
        centroid[1] += w[1];
        centroid[2] += w[2];
        rsum += rad[i];
        count += 1;
        if cum >= window_mm {
            break;
        }
    }
    let c = [centroid[0] / count as f64, centroid[1] / count as f64, centroid[2] / count as f64];
    let dir = normalize([c[0] - node_w[0], c[1] - node_w[1], c[2] - node_w[2]]);
    Ok((dir, rsum / count as f64))
}

pub fn bifurcation_locale(
    graph: &VesselGraph,
    node_id: usize,
    tangent_window_mm: f64,
) -> Result<BifurcationLocale> {
    let node = graph
        .node(node_id)
        .ok_or_else(|| VamosError::Graph(format!("no node {node_id}")))?;
    if node.degree != 3 {
        return Err(VamosError::Graph(format!(
            "node {node_id} has degree {}, bifurcation locale requires exactly 3",
            node.degree
        )));
    }
    let inc = graph.incidences(node_id);
    let mut arms: Vec<(usize, [f64; 3], f64)> = Vec::new(); // (branch idx, tangent, radius)
    for (bi, slot) in inc {
        let (dir, r) = branch_window(graph, &graph.branches[bi], slot, tangent_window_mm)?;
        arms.push((bi, dir, r));
    }
    // the thickest arm is taken as the mother; the other two are daughters
    let mother = arms
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .2.partial_cmp(&b.1 .2).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let d: Vec<&(usize, [f64; 3], f64)> =
        arms.iter().enumerate().filter(|(i, _)| *i != mother).map(|(_, a)| a).collect();
    let dot = d[0].1[0] * d[1].1[0] + d[0].1[1] * d[1].1[1] + d[0].1[2] * d[1].1[2];
    let theta = dot.clamp(-1.0, 1.0).acos();
    Ok(BifurcationLocale {
        node_id,
        mother_branch: arms[mother].0,
        daughter_branches: [d[0].0, d[1].0],
        daughter_tangents: [d[0].1, d[1].1],
        theta,
        radius_mm: 0.5 * (d[0].2 + d[1].2),
        node_world: graph.world(node.pos),
    })
}

/// Crop a volume around a node and restrict the graph to the crop.
/// Branch segments leaving the patch are clipped, with clip points
/// promoted to endpoint nodes.
pub fn crop_around_node(
    vol: &VoxelVolume,
    graph: &VesselGraph,
    node_id: usize,
    size: [usize; 3],
) -> Result<(VoxelVolume, VesselGraph)> {
    let node = graph
        .node(node_id)
        .ok_or_else(|| VamosError::Graph(format!("no node {node_id}")))?;
    let center = [node.pos[0] as i64, node.pos[1] as i64, node.pos[2] as i64];
    let patch = crop(vol, center, size, 0.0);
    let start = [
        center[0] - (size[0] / 2) as i64,
        center[1] - (size[1] / 2) as i64,
        center[2] - (size[2] / 2) as i64,
    ];
    let out_dims = Dims::new(size[0], size[1], size[2]);
    let inside = |p: [usize; 3]| -> Option<[usize; 3]> {
        let q = [p[0] as i64 - start[0], p[1] as i64 - start[1], p[2] as i64 - start[2]];
        if out_dims.contains(q[0], q[1], q[2]) {
            Some([q[0] as usize, q[1] as usize, q[2] as usize])
        } else {
            None
        }
    };

    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut node_map: HashMap<usize, usize> = HashMap::new();
    for n in &graph.nodes {
        if let Some(q) = inside(n.pos) {
            let id = nodes.len();
            node_map.insert(n.id, id);
            nodes.push(GraphNode { id, pos: q, kind: n.kind, degree: 0 });
        }
    }
    let mut branches: Vec<Branch> = Vec::new();
    for b in &graph.branches {
        // contiguous in-crop runs
        let mut run: Vec<(usize, [usize; 3])> = Vec::new();
        let mut runs: Vec<Vec<(usize, [usize; 3])>> = Vec::new();
        for (i, &p) in b.points.iter().enumerate() {
            if let Some(q) = inside(p) {
                run.push((i, q));
            } else if !run.is_empty() {
                runs.push(std::mem::take(&mut run));
            }
        }
        if !run.is_empty() {
            runs.push(run);
        }
        for run in runs {
            if run.len() < 2 {
                continue;
            }
            let first_orig = run.first().unwrap().0;
            let last_orig = run.last().unwrap().0;
            let mut end_id = |orig_idx: usize, q: [usize; 3]| -> usize {
                // reuse original node if this run end is the branch end
                let at_branch_end = (orig_idx == 0 && node_map.contains_key(&b.ends[0]))
                    || (orig_idx == b.points.len() - 1 && node_map.contains_key(&b.ends[1]));
                if at_branch_end {
                    let nid = if orig_idx == 0 { b.ends[0] } else { b.ends[1] };
                    node_map[&nid]
                } else {
                    let id = nodes.len();
                    nodes.push(GraphNode { id, pos: q, kind: NodeKind::Endpoint, degree: 0 });
                    id
                }
            };
            let e0 = end_id(first_orig, run.first().unwrap().1);
            let e1 = end_id(last_orig, run.last().unwrap().1);
            branches.push(Branch {
                id: branches.len(),
                ends: [e0, e1],
                points: run.iter().map(|&(_, q)| q).collect(),
                radii_mm: run.iter().map(|&(i, _)| b.radii_mm[i]).collect(),
            });
        }
    }
    let mut sub = VesselGraph {
        nodes,
        branches,
        dims: out_dims,
        spacing: vol.spacing,
        origin: patch.origin,
    };
    sub.recompute_degrees();
    Ok((patch, sub))
}
