//! Per-branch 3D B-spline fitting, perturbation and evaluation.
//!
//! One clamped knot vector is shared by the three axes. Fitting is
//! penalized least squares over chord-length parameters with the first and
//! last coefficients pinned to the end points, so clamped-end evaluation
//! reproduces the branch extremities exactly and perturbation can keep
//! graph connectivity intact.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VamosError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpline {
    pub degree: usize,
    /// Clamped, non-decreasing; length = coeff count + degree + 1.
    pub knots: Vec<f64>,
    /// Control values per axis, voxel units.
    pub coeffs: [Vec<f64>; 3],
}

impl BranchSpline {
    pub fn domain(&self) -> (f64, f64) {
        let k = self.degree;
        (self.knots[k], self.knots[self.knots.len() - 1 - k])
    }

    pub fn coeff_count(&self) -> usize {
        self.coeffs[0].len()
    }
}

/// Index of the knot span containing t (de Boor search).
fn find_span(knots: &[f64], degree: usize, t: f64) -> usize {
    let n = knots.len() - degree - 2; // last coefficient index
    if t >= knots[n + 1] {
        return n;
    }
    let mut lo = degree;
    let mut hi = n + 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Nonzero basis values N_{span-degree..=span}(t), Cox-de Boor.
fn basis_values(knots: &[f64], degree: usize, span: usize, t: f64) -> Vec<f64> {
    let mut vals = vec![0.0; degree + 1];
    vals[0] = 1.0;
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { vals[r] / denom } else { 0.0 };
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    vals
}

/// Evaluate one axis at parameter t.
fn eval_axis(knots: &[f64], degree: usize, coeffs: &[f64], t: f64) -> f64 {
    let span = find_span(knots, degree, t);
    let vals = basis_values(knots, degree, span, t);
    let mut acc = 0.0;
    for (j, &v) in vals.iter().enumerate() {
        acc += v * coeffs[span - degree + j];
    }
    acc
}

pub fn evaluate_at(spline: &BranchSpline, t: f64) -> [f64; 3] {
    [
        eval_axis(&spline.knots, spline.degree, &spline.coeffs[0], t),
        eval_axis(&spline.knots, spline.degree, &spline.coeffs[1], t),
        eval_axis(&spline.knots, spline.degree, &spline.coeffs[2], t),
    ]
}

/// Evaluate at `n` uniformly spaced parameters across the domain.
pub fn evaluate_spline(spline: &BranchSpline, n: usize) -> Vec<[f64; 3]> {
    assert!(n >= 2, "need at least two samples");
    let (t0, t1) = spline.domain();
    (0..n)
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
            evaluate_at(spline, t)
        })
        .collect()
}

fn chord_params(points: &[[f64; 3]]) -> Vec<f64> {
    let mut t = Vec::with_capacity(points.len());
    t.push(0.0);
    for w in points.windows(2) {
        let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2) + (w[1][2] - w[0][2]).powi(2))
            .sqrt();
        t.push(t.last().unwrap() + d);
    }
    t
}

/// Drop exact consecutive duplicates.
fn dedup_points(points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(points.len());
    for &p in points {
        if out.last().map(|&q| q != p).unwrap_or(true) {
            out.push(p);
        }
    }
    out
}

/// Penalized least-squares fit of an ordered 3D point list.
pub fn fit_spline(points: &[[f64; 3]], degree: usize, smoothing: f64) -> Result<BranchSpline> {
    if degree == 0 {
        return Err(VamosError::InvalidArgument("degree must be >= 1".into()));
    }
    if smoothing < 0.0 {
        return Err(VamosError::InvalidArgument("smoothing must be >= 0".into()));
    }
    let pts = dedup_points(points);
    let n = pts.len();
    if n < degree + 1 {
        return Err(VamosError::InvalidArgument(format!(
            "need at least {} distinct points for degree {degree}, got {n}",
            degree + 1
        )));
    }
    let t = chord_params(&pts);
    let t_end = *t.last().unwrap();

    // coefficient count: max(degree+1, ceil(n/4)) with interior knots at
    // parameter quantiles
    let n_coeff = (degree + 1).max((n + 3) / 4).min(n);
    let n_interior = n_coeff - degree - 1;
    let mut knots = vec![0.0; degree + 1];
    for j in 1..=n_interior {
        let q = j as f64 / (n_interior + 1) as f64;
        // quantile of the chord parameters
        let pos = q * (n - 1) as f64;
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        let v = if i0 + 1 < n { t[i0] * (1.0 - frac) + t[i0 + 1] * frac } else { t[i0] };
        knots.push(v);
    }
    knots.extend(std::iter::repeat(t_end).take(degree + 1));

    // design matrix
    let mut design = DMatrix::zeros(n, n_coeff);
    for (i, &ti) in t.iter().enumerate() {
        let span = find_span(&knots, degree, ti);
        let vals = basis_values(&knots, degree, span, ti);
        for (j, &v) in vals.iter().enumerate() {
            design[(i, span - degree + j)] = v;
        }
    }

    // second-difference penalty rows over the full coefficient vector
    let n_pen = n_coeff.saturating_sub(2);
    let lambda = smoothing.sqrt();

    let mut coeffs: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for axis in 0..3 {
        if n_coeff == degree + 1 && n_coeff <= 2 {
            // line through the two end points
            coeffs[axis] = vec![pts[0][axis], pts[n - 1][axis]];
            continue;
        }
        // pin end coefficients to the end points (clamped basis => exact ends)
        let c0 = pts[0][axis];
        let cl = pts[n - 1][axis];
        let free = n_coeff - 2;
        if free == 0 {
            coeffs[axis] = vec![c0, cl];
            continue;
        }
        let mut a = DMatrix::zeros(n + n_pen, free);
        let mut b = DVector::zeros(n + n_pen);
        for i in 0..n {
            b[i] = pts[i][axis] - design[(i, 0)] * c0 - design[(i, n_coeff - 1)] * cl;
            for j in 0..free {
                a[(i, j)] = design[(i, j + 1)];
            }
        }
        for r in 0..n_pen {
            // penalty row: c_r - 2 c_{r+1} + c_{r+2}
            let mut rhs = 0.0;
            for (col, w) in [(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)] {
                if col == 0 {
                    rhs -= lambda * w * c0;
                } else if col == n_coeff - 1 {
                    rhs -= lambda * w * cl;
                } else {
                    a[(n + r, col - 1)] = lambda * w;
                }
            }
            b[n + r] = rhs;
        }
        let svd = a.svd(true, true);
        let sol = svd
            .solve(&b, 1e-12)
            .map_err(|e| VamosError::InvalidArgument(format!("spline solve failed: {e}")))?;
        let mut c = Vec::with_capacity(n_coeff);
        c.push(c0);
        c.extend(sol.iter().cloned());
        c.push(cl);
        coeffs[axis] = c;
    }

    Ok(BranchSpline { degree, knots, coeffs })
}

/// Offset interior coefficients by independent uniform draws in
/// [-amplitude, +amplitude] per axis; deterministic in `seed`.
pub fn perturb_spline(
    spline: &BranchSpline,
    amplitude: f64,
    seed: u64,
    fix_endpoints: bool,
) -> BranchSpline {
    let mut out = spline.clone();
    if amplitude == 0.0 {
        return out;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = spline.coeff_count();
    for axis in 0..3 {
        for j in 0..n {
            let offset = rng.gen_range(-amplitude..=amplitude);
            if fix_endpoints && (j == 0 || j == n - 1) {
                continue; // draw consumed so streams stay aligned
            }
            out.coeffs[axis][j] += offset;
        }
    }
    out
}
