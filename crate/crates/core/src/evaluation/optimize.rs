//! Bounded maximization: a cell-centred grid search followed by
//! Nelder–Mead refinement.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::space::Bounds;

/// Cell centres of an `n^d` grid over `bounds`, first coordinate fastest.
pub fn cell_centers(bounds: &Bounds, n: usize) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|k| {
                    let i = idx % n;
                    idx /= n;
                    bounds.low[k] + (i as f64 + 0.5) / n as f64 * bounds.width(k)
                })
                .collect()
        })
        .collect()
}

/// Index of the grid maximum. Exact ties go to the point nearest the box
/// centre, then to the lowest index.
pub fn grid_argmax(values: &[f64], points: &[Vec<f64>], bounds: &Bounds) -> usize {
    let center = bounds.center();
    let dist = |p: &[f64]| -> f64 {
        p.iter().zip(&center).enumerate().map(|(k, (a, c))| ((a - c) / bounds.width(k)).powi(2)).sum()
    };
    let mut best = 0;
    for i in 1..values.len() {
        let (v, b) = (values[i], values[best]);
        // NaN never wins
        if v > b || (b.is_nan() && !v.is_nan()) || (v == b && dist(&points[i]) < dist(&points[best])) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_iterations: usize,
    /// Initial simplex edge as a fraction of each box width.
    pub scale: f64,
    /// Stop once the spread of values across the simplex is below this.
    pub tolerance: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_iterations: 200, scale: 0.02, tolerance: 1e-10 }
    }
}

impl NelderMead {
    /// Maximizes `f` from `start` inside `bounds`; returns the best vertex
    /// and its value, never worse than `start`.
    pub fn maximize<F>(&self, f: &mut F, start: &[f64], f_start: f64, bounds: &Bounds) -> (Vec<f64>, f64)
    where
        F: FnMut(&[f64]) -> f64,
    {
        let d = start.len();
        // minimize g = -f; NaN is treated as -inf for f
        let mut g = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                -v
            }
        };
        let clamp = |x: &mut Vec<f64>| bounds.clamp(x);
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
        simplex.push((start.to_vec(), if f_start.is_nan() { f64::INFINITY } else { -f_start }));
        for k in 0..d {
            let mut p = start.to_vec();
            let step = self.scale * bounds.width(k);
            p[k] += step;
            if p[k] > bounds.high[k] {
                p[k] = start[k] - step;
            }
            clamp(&mut p);
            let v = g(&p);
            simplex.push((p, v));
        }
        for _ in 0..self.max_iterations {
            // stable sort keeps earlier vertices first on ties
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (best, worst) = (simplex[0].1, simplex[d].1);
            if (worst - best).abs() <= self.tolerance * (1.0 + best.abs()) {
                break;
            }
            let mut centroid = vec![0.0; d];
            for (p, _) in &simplex[..d] {
                for k in 0..d {
                    centroid[k] += p[k] / d as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = (0..d).map(|k| centroid[k] + t * (simplex[d].0[k] - centroid[k])).collect();
                bounds.clamp(&mut p);
                p
            };
            let xr = along(-1.0);
            let fr = g(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = g(&xe);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[d].1 {
                    let x = along(-0.5);
                    let v = g(&x);
                    (x, v)
                } else {
                    let x = along(0.5);
                    let v = g(&x);
                    (x, v)
                };
                if fc < simplex[d].1.min(fr) {
                    simplex[d] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        let mut p: Vec<f64> = (0..d).map(|k| x0[k] + 0.5 * (v.0[k] - x0[k])).collect();
                        clamp(&mut p);
                        v.1 = g(&p);
                        v.0 = p;
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, v) = simplex.swap_remove(0);
        (x, -v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(d: usize) -> Bounds {
        Bounds::new(vec![-1.0; d], vec![1.0; d])
    }

    #[test]
    fn centers_cover_cells() {
        let c = cell_centers(&Bounds::new(vec![0.0, 0.0], vec![1.0, 2.0]), 2);
        assert_eq!(c, vec![vec![0.25, 0.5], vec![0.75, 0.5], vec![0.25, 1.5], vec![0.75, 1.5]]);
    }

    #[test]
    fn ties_prefer_the_centre() {
        let b = unit_box(2);
        let pts = cell_centers(&b, 4);
        let idx = grid_argmax(&vec![0.0; pts.len()], &pts, &b);
        // four cells touch the centre; the lowest index among them wins
        assert_eq!(pts[idx], vec![-0.25, -0.25]);
    }

    #[test]
    fn refines_a_quadratic() {
        let b = unit_box(3);
        let target = [0.31, -0.52, 0.77];
        let mut f = |x: &[f64]| -x.iter().zip(&target).map(|(a, t)| (a - t) * (a - t) * 3.0).sum::<f64>();
        let start = [0.3, -0.5, 0.8];
        let f0 = f(&start);
        let (x, v) = NelderMead::default().maximize(&mut f, &start, f0, &b);
        assert!(v >= f0);
        for k in 0..3 {
            assert!((x[k] - target[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn respects_the_box() {
        let b = unit_box(2);
        let mut f = |x: &[f64]| x[0] + x[1];
        let (x, v) = NelderMead::default().maximize(&mut f, &[0.9, 0.9], 1.8, &b);
        assert!(x.iter().all(|&c| c <= 1.0));
        assert!(v >= 1.8 && (v - 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_objective_stays_put() {
        let b = unit_box(2);
        let mut f = |_: &[f64]| 4.0;
        let (x, v) = NelderMead::default().maximize(&mut f, &[0.1, 0.2], 4.0, &b);
        assert_eq!((x, v), (vec![0.1, 0.2], 4.0));
    }
}
