//! Derivative-free maximization used to locate per-task optima.

use super::Optimum;
use crate::linalg::Matrix;

/// Compass search from `x0`: tries ±step along each coordinate, moves to the
/// best improving neighbour, and halves the steps when none improves.
/// Stops when every step is below `min_step_frac` of its box width.
pub fn local_maximize(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[(f64, f64)],
    init_step_frac: f64,
    min_step_frac: f64,
) -> Optimum {
    let widths: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let mut steps: Vec<f64> = widths.iter().map(|w| w * init_step_frac).collect();
    let mut x = x0.to_vec();
    let mut best = f(&x);
    let mut trial = x.clone();
    for _ in 0..10_000 {
        if steps
            .iter()
            .zip(&widths)
            .all(|(s, w)| *s <= w * min_step_frac)
        {
            break;
        }
        let mut improved: Option<(usize, f64, f64)> = None;
        for d in 0..x.len() {
            for sign in [1.0, -1.0] {
                let v = (x[d] + sign * steps[d]).clamp(bounds[d].0, bounds[d].1);
                if v == x[d] {
                    continue;
                }
                trial[d] = v;
                let val = f(&trial);
                trial[d] = x[d];
                if val > improved.map_or(best, |(_, _, b)| b) {
                    improved = Some((d, v, val));
                }
            }
        }
        match improved {
            Some((d, v, val)) => {
                x[d] = v;
                trial[d] = v;
                best = val;
            }
            None => steps.iter_mut().for_each(|s| *s *= 0.5),
        }
    }
    Optimum { x, value: best }
}

/// Refines every start and returns the best local optimum (first wins ties).
pub fn multistart_maximize(
    f: &dyn Fn(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    starts: &Matrix,
    init_step_frac: f64,
) -> Optimum {
    let mut best: Option<Optimum> = None;
    for s in starts.row_iter() {
        let o = local_maximize(f, s, bounds, init_step_frac, 1e-9);
        if best.as_ref().is_none_or(|b| o.value > b.value) {
            best = Some(o);
        }
    }
    best.expect("at least one start")
}

/// Dense grid with `per_dim` points per axis, then local refinement of the
/// `top_k` best grid points.
pub fn grid_then_refine(
    f: &dyn Fn(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    per_dim: usize,
    top_k: usize,
) -> Optimum {
    let dim = bounds.len();
    let total = per_dim.pow(dim as u32);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(total);
    let mut point = vec![0.0; dim];
    for flat in 0..total {
        let mut rem = flat;
        for d in 0..dim {
            let k = rem % per_dim;
            rem /= per_dim;
            let (lo, hi) = bounds[d];
            point[d] = lo + (hi - lo) * k as f64 / (per_dim - 1) as f64;
        }
        scored.push((f(&point), point.clone()));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let starts: Vec<Vec<f64>> = scored.into_iter().take(top_k).map(|s| s.1).collect();
    let starts = Matrix::from_rows(&starts).expect("equal-length points");
    let step = 1.0 / (per_dim - 1) as f64;
    multistart_maximize(f, bounds, &starts, step)
}
