//! Grid-search ground truth for proximal subproblems in up to three dimensions.

use crate::error::{Error, Result};

use super::atoms::sq_dist;

pub const MAX_BRUTE_FORCE_DIM: usize = 3;

/// Search grid for [`brute_force_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Grid points per axis (odd counts put the centre on the grid).
    pub points_per_axis: usize,
    /// Half-width of the box searched around the centre.
    pub radius: f64,
    /// Step halvings of the local pattern search after the grid scan.
    pub bisection_steps: usize,
    /// Extra per-axis coordinates always evaluated (their Cartesian product
    /// is added to the candidates), e.g. kinks or isolated feasible points.
    pub anchors: Vec<f64>,
}

impl GridSpec {
    /// Default grid for a proximal point around `u`: radius `5 max(1, ||u||)`,
    /// 4001 points per axis in 1-D (201 in 2-D, 41 in 3-D), 60 bisections,
    /// and `0` as anchor.
    pub fn around(u: &[f64]) -> Self {
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let points_per_axis = match u.len() {
            0 | 1 => 4001,
            2 => 201,
            _ => 41,
        };
        Self {
            points_per_axis,
            radius: 5.0 * norm.max(1.0),
            bisection_steps: 60,
            anchors: vec![0.0],
        }
    }

    pub fn with_anchors(mut self, anchors: impl IntoIterator<Item = f64>) -> Self {
        self.anchors.extend(anchors);
        self
    }
}

fn better(a: (f64, &[f64]), b: (f64, &[f64])) -> bool {
    // lower objective; ties go to the smaller norm, then componentwise smaller
    if a.0 != b.0 {
        return a.0 < b.0;
    }
    let na: f64 = a.1.iter().map(|x| x * x).sum();
    let nb: f64 = b.1.iter().map(|x| x * x).sum();
    if na != nb {
        return na < nb;
    }
    a.1 < b.1
}

/// Minimizes `objective` over a grid centred at `center`, followed by a
/// pattern search along all directions in `{-1, 0, 1}^d`.
pub fn brute_force_minimize(objective: impl Fn(&[f64]) -> f64, center: &[f64], grid: &GridSpec) -> Result<Vec<f64>> {
    let d = center.len();
    if d == 0 || d > MAX_BRUTE_FORCE_DIM {
        return Err(Error::Unsupported(format!(
            "brute-force minimization in dimension {d} (max {MAX_BRUTE_FORCE_DIM})"
        )));
    }
    let m = grid.points_per_axis.max(2);
    let h = 2.0 * grid.radius / (m - 1) as f64;

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut anchor_axes: Vec<Vec<f64>> = Vec::with_capacity(d);
    for &c in center {
        axes.push((0..m).map(|k| c - grid.radius + k as f64 * h).collect());
        let mut a = grid.anchors.clone();
        a.push(c);
        anchor_axes.push(a);
    }

    let mut best = center.to_vec();
    let mut best_val = objective(&best);
    let mut point = vec![0.0; d];
    for set in [&axes, &anchor_axes] {
        let mut idx = vec![0usize; d];
        loop {
            for j in 0..d {
                point[j] = set[j][idx[j]];
            }
            let val = objective(&point);
            if better((val, &point), (best_val, &best)) {
                best_val = val;
                best.copy_from_slice(&point);
            }
            let mut j = 0;
            while j < d {
                idx[j] += 1;
                if idx[j] < set[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == d {
                break;
            }
        }
    }

    let directions: Vec<Vec<f64>> = (0..3usize.pow(d as u32))
        .map(|mut code| {
            (0..d)
                .map(|_| {
                    let v = (code % 3) as f64 - 1.0;
                    code /= 3;
                    v
                })
                .collect::<Vec<f64>>()
        })
        .filter(|dir| dir.iter().any(|&v| v != 0.0))
        .collect();

    let mut step = h;
    for _ in 0..grid.bisection_steps {
        let mut improved = true;
        let mut guard = 0;
        while improved && guard < 64 {
            improved = false;
            guard += 1;
            for dir in &directions {
                for j in 0..d {
                    point[j] = best[j] + step * dir[j];
                }
                let val = objective(&point);
                if val < best_val {
                    best_val = val;
                    best.copy_from_slice(&point);
                    improved = true;
                }
            }
        }
        step *= 0.5;
    }

    // Objective values cannot resolve displacements below ~sqrt(eps) near a
    // smooth minimum; a three-point parabola fit per axis can. Kept only if
    // it does not increase the objective, so kinks are left alone.
    for _ in 0..3 {
        for j in 0..d {
            let s = 1e-4 * (1.0 + best[j].abs());
            point.copy_from_slice(&best);
            point[j] = best[j] + s;
            let fp = objective(&point);
            point[j] = best[j] - s;
            let fm = objective(&point);
            let curv = fp - 2.0 * best_val + fm;
            if !(curv > 0.0) || !fp.is_finite() || !fm.is_finite() {
                continue;
            }
            point[j] = best[j] - 0.5 * s * (fp - fm) / curv;
            let val = objective(&point);
            if val <= best_val {
                best_val = val;
                best.copy_from_slice(&point);
            }
        }
    }
    Ok(best)
}

/// Ground-truth `prox_{t psi}(u)` by grid search; `psi` maps a point to its value
/// (possibly `+inf`). Supports `dim(u) <= 3`.
pub fn brute_force_prox(psi: impl Fn(&[f64]) -> f64, u: &[f64], t: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Contract(format!("prox stepsize {t} must be positive")));
    }
    brute_force_minimize(|w| psi(w) + sq_dist(w, u) / (2.0 * t), u, grid)
}
