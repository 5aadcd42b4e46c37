//! Downstream inference over grouped observations: MLE, likelihood-ratio
//! statistics and Wilks confidence sets.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use super::evaluator::Prepared;
use super::optimize::{cell_centers, NelderMead};
use super::wilks::chi_squared_quantile;
use crate::models::{Observation, StochasticModel};
use crate::rng::{self, streams};
use crate::space::Bounds;
use crate::{Error, Result};

/// `⌈total^{1/d}⌉` evenly spaced values per dimension, endpoints included.
pub fn etest_points(bounds: &Bounds, total: usize) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let mut per = 1usize;
    while per.pow(d as u32) < total {
        per += 1;
    }
    let count = per.pow(d as u32);
    (0..count)
        .map(|mut idx| {
            (0..d)
                .map(|k| {
                    let i = idx % per;
                    idx /= per;
                    if per == 1 {
                        0.5 * (bounds.low[k] + bounds.high[k])
                    } else {
                        bounds.low[k] + i as f64 / (per - 1) as f64 * bounds.width(k)
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ETestSet {
    pub points: Vec<Vec<f64>>,
    pub groups_per_point: usize,
    pub group_size: usize,
    /// Group `g` was drawn at `points[g / groups_per_point]`.
    pub groups: Vec<Vec<Observation>>,
}

impl ETestSet {
    pub fn truth(&self, g: usize) -> &[f64] {
        &self.points[g / self.groups_per_point]
    }
}

/// Group `g` draws its observations from simulation stream `g`.
pub fn build_etest(
    model: &dyn StochasticModel,
    points: Vec<Vec<f64>>,
    groups_per_point: usize,
    group_size: usize,
    seed: u64,
) -> Result<ETestSet> {
    let mut groups = Vec::with_capacity(points.len() * groups_per_point);
    for (p, theta) in points.iter().enumerate() {
        for j in 0..groups_per_point {
            let g = (p * groups_per_point + j) as u64;
            let mut r = rng::stream(seed, streams::SIMULATION_BASE + g);
            groups.push((0..group_size).map(|_| model.simulate(theta, &mut r)).collect::<Result<Vec<_>>>()?);
        }
    }
    Ok(ETestSet { points, groups_per_point, group_size, groups })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    /// Box searched for the MLE and covered by the confidence-set grid.
    pub search: Bounds,
    pub mle_grid: usize,
    pub wilks_grid: usize,
    pub level: f64,
    pub refine: NelderMead,
    /// θ values scored per grid block.
    pub chunk: usize,
}

impl InferenceConfig {
    /// 50 (d = 2) or 20 (d = 3) search points and 40 or 20 set points per
    /// dimension.
    pub fn new(search: Bounds) -> Self {
        let (mle_grid, wilks_grid) = match search.dim() {
            1 => (200, 200),
            2 => (50, 40),
            _ => (20, 20),
        };
        Self { search, mle_grid, wilks_grid, level: 0.95, refine: NelderMead::default(), chunk: 512 }
    }
}

/// A 2D slice of one group's log-score surface over the set grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub group: usize,
    /// Grid coordinates of the two leading working dimensions.
    pub axis_x: Vec<f64>,
    pub axis_y: Vec<f64>,
    /// Remaining coordinates held at the slice nearest the truth.
    pub fixed: Vec<f64>,
    /// `axis_x.len() × axis_y.len()`, x fastest.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub mles: Vec<Vec<f64>>,
    pub max_scores: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub covered: Vec<bool>,
    /// Cells in each group's confidence set.
    pub set_cells: Vec<usize>,
    pub cell_volume: f64,
    pub total_cells: usize,
    pub quantile: f64,
    pub surface: Option<Surface>,
}

impl Inference {
    pub fn coverage(&self) -> f64 {
        self.covered.iter().filter(|&&c| c).count() as f64 / self.covered.len() as f64
    }

    pub fn areas(&self) -> Vec<f64> {
        self.set_cells.iter().map(|&c| c as f64 * self.cell_volume).collect()
    }

    pub fn mean_area(&self) -> f64 {
        self.areas().iter().sum::<f64>() / self.set_cells.len() as f64
    }

    pub fn mean_area_fraction(&self) -> f64 {
        self.set_cells.iter().map(|&c| c as f64 / self.total_cells as f64).sum::<f64>() / self.set_cells.len() as f64
    }

    pub fn sorted_lambdas(&self) -> Vec<f64> {
        let mut l = self.lambdas.clone();
        l.sort_by(f64::total_cmp);
        l
    }
}

fn cell_of(theta: &[f64], bounds: &Bounds, n: usize) -> Vec<usize> {
    (0..bounds.dim())
        .map(|k| {
            let u = (theta[k] - bounds.low[k]) / bounds.width(k) * n as f64;
            (u.floor().max(0.0) as usize).min(n - 1)
        })
        .collect()
}

fn cell_index(cell: &[usize], n: usize) -> usize {
    cell.iter().rev().fold(0, |acc, &c| acc * n + c)
}

/// Visits grid scores in `θ` blocks: `visit(θ index, group, value)`.
fn scan<F>(prepared: &Prepared<'_>, grid: &[Vec<f64>], chunk: usize, mut visit: F) -> Result<()>
where
    F: FnMut(usize, usize, f64),
{
    let groups = prepared.len();
    for (c, block) in grid.chunks(chunk.max(1)).enumerate() {
        let values = prepared.grid(block)?;
        for g in 0..groups {
            for (t, &v) in values[g * block.len()..(g + 1) * block.len()].iter().enumerate() {
                visit(c * chunk + t, g, v);
            }
        }
    }
    Ok(())
}

/// MLE, `Λ(θ_true)` and the Wilks set for every group of `set`.
///
/// `surface_group` additionally records that group's scores over the set
/// grid.
pub fn infer(
    prepared: &Prepared<'_>,
    set: &ETestSet,
    cfg: &InferenceConfig,
    surface_group: Option<usize>,
) -> Result<Inference> {
    let groups = prepared.len();
    if groups != set.groups.len() {
        return Err(Error::DimensionMismatch { expected: set.groups.len(), actual: groups });
    }
    let b = &cfg.search;
    let d = b.dim();
    let quantile = chi_squared_quantile(cfg.level, d)?;

    // coarse search
    let coarse = cell_centers(b, cfg.mle_grid);
    let center = b.center();
    let dist = |p: &[f64]| -> f64 { (0..d).map(|k| ((p[k] - center[k]) / b.width(k)).powi(2)).sum() };
    let mut best = vec![(f64::NEG_INFINITY, usize::MAX); groups];
    scan(prepared, &coarse, cfg.chunk, |t, g, v| {
        let (bv, bi) = best[g];
        if bi == usize::MAX
            || v > bv
            || (bv.is_nan() && !v.is_nan())
            || (v == bv && dist(&coarse[t]) < dist(&coarse[bi]))
        {
            best[g] = (v, t);
        }
    })?;

    let mut mles = Vec::with_capacity(groups);
    let mut max_scores = Vec::with_capacity(groups);
    let mut lambdas = Vec::with_capacity(groups);
    for g in 0..groups {
        let (v0, i0) = best[g];
        let mut failure = None;
        let mut objective = |theta: &[f64]| match prepared.score(g, theta) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        let (mut theta_hat, mut l_hat) = cfg.refine.maximize(&mut objective, &coarse[i0], v0, b);
        if let Some(e) = failure {
            return Err(e);
        }
        let l_true = prepared.score(g, set.truth(g))?;
        if !(l_hat >= l_true) {
            theta_hat = set.truth(g).to_vec();
            l_hat = l_true;
        }
        lambdas.push(2.0 * (l_hat - l_true));
        mles.push(theta_hat);
        max_scores.push(l_hat);
    }

    // confidence sets on the set grid
    let n = cfg.wilks_grid;
    let grid = cell_centers(b, n);
    let hat_cells: Vec<usize> = mles.iter().map(|m| cell_index(&cell_of(m, b, n), n)).collect();
    let mut set_cells = vec![0usize; groups];
    let mut surface_values = surface_group.map(|_| vec![f64::NAN; grid.len()]);
    scan(prepared, &grid, cfg.chunk, |t, g, v| {
        if 2.0 * (max_scores[g] - v) <= quantile || hat_cells[g] == t {
            set_cells[g] += 1;
        }
        if Some(g) == surface_group {
            surface_values.as_mut().unwrap()[t] = v;
        }
    })?;

    let surface = match (surface_group, surface_values) {
        (Some(g), Some(values)) if d >= 2 => {
            let truth_cell = cell_of(set.truth(g), b, n);
            let plane = n * n;
            let offset = cell_index(&[&[0, 0][..], &truth_cell[2..]].concat(), n);
            let axis = |k: usize| -> Vec<f64> {
                (0..n).map(|i| b.low[k] + (i as f64 + 0.5) / n as f64 * b.width(k)).collect()
            };
            Some(Surface {
                group: g,
                axis_x: axis(0),
                axis_y: axis(1),
                fixed: grid[offset][2..].to_vec(),
                values: values[offset..offset + plane].to_vec(),
            })
        }
        _ => None,
    };

    let covered = lambdas.iter().map(|&l| l <= quantile).collect();
    Ok(Inference {
        mles,
        max_scores,
        lambdas,
        covered,
        set_cells,
        cell_volume: b.volume() / grid.len() as f64,
        total_cells: grid.len(),
        quantile,
        surface,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ETestReport {
    /// Mean `(Λ_nler − Λ_gt)²` over groups; NaN without a network.
    pub lrts_mse: f64,
    /// Per coordinate: median over θ points of the mean squared MLE gap.
    pub mle_median_sq_error: Vec<f64>,
    pub gt_coverage: f64,
    pub gt_mean_area: f64,
    pub gt_mean_area_fraction: f64,
    pub nler_coverage: f64,
    pub nler_mean_area: f64,
    pub nler_mean_area_fraction: f64,
    pub gt_null_lambdas: Vec<f64>,
    pub nler_null_lambdas: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Compares network inference against ground truth on the same groups.
pub fn etest_metrics(nler: Option<&Inference>, gt: &Inference, set: &ETestSet) -> ETestReport {
    let d = set.points.first().map_or(0, Vec::len);
    let (lrts_mse, mle_median_sq_error, nc, na, nf, nl) = match nler {
        Some(n) => {
            let groups = gt.lambdas.len();
            let mse = n.lambdas.iter().zip(&gt.lambdas).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / groups as f64;
            let per_point: Vec<Vec<f64>> = (0..set.points.len())
                .map(|p| {
                    let range = p * set.groups_per_point..(p + 1) * set.groups_per_point;
                    (0..d)
                        .map(|k| {
                            range.clone().map(|g| (n.mles[g][k] - gt.mles[g][k]).powi(2)).sum::<f64>()
                                / set.groups_per_point as f64
                        })
                        .collect()
                })
                .collect();
            let med = (0..d).map(|k| median(per_point.iter().map(|v| v[k]).collect())).collect();
            (mse, med, n.coverage(), n.mean_area(), n.mean_area_fraction(), n.sorted_lambdas())
        }
        None => (f64::NAN, vec![f64::NAN; d], f64::NAN, f64::NAN, f64::NAN, Vec::new()),
    };
    ETestReport {
        lrts_mse,
        mle_median_sq_error,
        gt_coverage: gt.coverage(),
        gt_mean_area: gt.mean_area(),
        gt_mean_area_fraction: gt.mean_area_fraction(),
        nler_coverage: nc,
        nler_mean_area: na,
        nler_mean_area_fraction: nf,
        gt_null_lambdas: gt.sorted_lambdas(),
        nler_null_lambdas: nl,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::Evaluator;
    use rand::RngCore;
    use rand_distr::{Distribution, StandardNormal};

    /// `x ~ N(θ, I)` in two dimensions, optionally with a flat likelihood.
    struct Location {
        flat: bool,
    }

    impl StochasticModel for Location {
        fn theta_dim(&self) -> usize {
            2
        }
        fn input_shape(&self) -> Vec<usize> {
            vec![2]
        }
        fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Observation> {
            Ok(Observation::Field(
                theta
                    .iter()
                    .map(|t| {
                        let z: f64 = StandardNormal.sample(rng);
                        t + z
                    })
                    .collect(),
            ))
        }
        fn log_likelihood(&self, theta: &[f64], obs: &Observation) -> Result<f64> {
            if self.flat {
                return Ok(-1.0);
            }
            let x = obs.as_field().unwrap();
            Ok(-0.5 * x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        }
        fn score(&self, theta: &[f64], obs: &Observation) -> Result<Vec<f64>> {
            Ok(obs.as_field().unwrap().iter().zip(theta).map(|(a, b)| a - b).collect())
        }
        fn encode(&self, obs: &Observation) -> Vec<f64> {
            obs.as_field().unwrap().to_vec()
        }
    }

    fn square(h: f64) -> Bounds {
        Bounds::new(vec![-h, -h], vec![h, h])
    }

    fn run(model: &Location, points: usize, groups: usize, cfg: &InferenceConfig) -> (ETestSet, Inference) {
        let set = build_etest(model, etest_points(&square(1.0), points), groups, 10, 7).unwrap();
        let prepared = Evaluator::GroundTruth(model).prepare(&set.groups).unwrap();
        let inf = infer(&prepared, &set, cfg, Some(0)).unwrap();
        (set, inf)
    }

    #[test]
    fn points_include_endpoints() {
        let p = etest_points(&square(0.8), 100);
        assert_eq!(p.len(), 100);
        assert_eq!(p[0], vec![-0.8, -0.8]);
        assert_eq!(p[99], vec![0.8, 0.8]);
        let cube = etest_points(&Bounds::new(vec![0.0; 3], vec![1.0; 3]), 100);
        assert_eq!(cube.len(), 125);
    }

    #[test]
    fn groups_are_reproducible_and_distinct() {
        let m = Location { flat: false };
        let a = build_etest(&m, etest_points(&square(1.0), 4), 3, 5, 1).unwrap();
        let b = build_etest(&m, etest_points(&square(1.0), 4), 3, 5, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.groups[0], a.groups[1]);
        assert_eq!(a.truth(5), a.points[1].as_slice());
    }

    #[test]
    fn mle_is_the_group_mean() {
        let m = Location { flat: false };
        let (set, inf) = run(&m, 4, 5, &InferenceConfig::new(square(3.0)));
        for (g, group) in set.groups.iter().enumerate() {
            let mean: Vec<f64> =
                (0..2).map(|k| group.iter().map(|o| o.as_field().unwrap()[k]).sum::<f64>() / 10.0).collect();
            for k in 0..2 {
                assert!((inf.mles[g][k] - mean[k]).abs() < 1e-3, "{g} {k}: {} vs {}", inf.mles[g][k], mean[k]);
            }
            // the exact statistic exceeds ours by 10·|θ̂ − x̄|²
            let expect = 10.0 * (0..2).map(|k| (mean[k] - set.truth(g)[k]).powi(2)).sum::<f64>();
            let gap = expect - inf.lambdas[g];
            assert!((-1e-12..2e-5).contains(&gap), "{gap}");
        }
    }

    #[test]
    fn lambda_is_nonnegative_and_sets_contain_the_mle() {
        let m = Location { flat: false };
        let (_, inf) = run(&m, 9, 4, &InferenceConfig::new(square(3.0)));
        assert!(inf.lambdas.iter().all(|&l| l >= 0.0));
        assert!(inf.set_cells.iter().all(|&c| c >= 1));
        // disc of radius sqrt(q/10) against cells of 0.15²
        let expect = core::f64::consts::PI * inf.quantile / 10.0 / (0.15 * 0.15);
        for &c in &inf.set_cells {
            assert!((c as f64 - expect).abs() < 0.1 * expect, "{c} vs {expect}");
        }
    }

    #[test]
    fn coverage_is_near_nominal_for_exact_likelihood() {
        let m = Location { flat: false };
        let (_, inf) = run(&m, 25, 40, &InferenceConfig::new(square(3.0)));
        let c = inf.coverage();
        assert!((0.92..=0.98).contains(&c), "{c}");
    }

    #[test]
    fn higher_level_gives_larger_sets() {
        let m = Location { flat: false };
        let mut cfg = InferenceConfig::new(square(3.0));
        cfg.level = 0.8;
        let (_, low) = run(&m, 4, 3, &cfg);
        cfg.level = 0.99;
        let (_, high) = run(&m, 4, 3, &cfg);
        for g in 0..low.set_cells.len() {
            assert!(high.set_cells[g] >= low.set_cells[g]);
            assert!(high.lambdas[g] == low.lambdas[g]);
        }
        assert!(high.coverage() >= low.coverage());
    }

    #[test]
    fn flat_scores_pick_the_centre_and_cover_everything() {
        let m = Location { flat: true };
        let mut cfg = InferenceConfig::new(square(1.0));
        cfg.mle_grid = 4;
        cfg.wilks_grid = 5;
        let (_, inf) = run(&m, 4, 2, &cfg);
        for g in 0..inf.mles.len() {
            assert_eq!(inf.lambdas[g], 0.0);
            assert_eq!(inf.set_cells[g], 25);
        }
        assert_eq!(inf.coverage(), 1.0);
        assert_eq!(inf.mean_area_fraction(), 1.0);
        assert!((inf.mean_area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn surface_is_one_group_slice() {
        let m = Location { flat: false };
        let mut cfg = InferenceConfig::new(square(2.0));
        cfg.wilks_grid = 6;
        let (set, inf) = run(&m, 4, 2, &cfg);
        let s = inf.surface.unwrap();
        assert_eq!(s.values.len(), 36);
        assert!(s.fixed.is_empty());
        let prepared = Evaluator::GroundTruth(&m).prepare(&set.groups[..1]).unwrap();
        let direct = prepared.score(0, &[s.axis_x[2], s.axis_y[4]]).unwrap();
        assert!((s.values[4 * 6 + 2] - direct).abs() < 1e-12);
    }

    #[test]
    fn self_comparison_has_zero_gaps() {
        let m = Location { flat: false };
        let (set, inf) = run(&m, 4, 3, &InferenceConfig::new(square(3.0)));
        let report = etest_metrics(Some(&inf), &inf, &set);
        assert_eq!(report.lrts_mse, 0.0);
        assert_eq!(report.mle_median_sq_error, vec![0.0, 0.0]);
        assert_eq!(report.nler_coverage, report.gt_coverage);
        assert_eq!(report.gt_null_lambdas.len(), 12);
        assert!(report.gt_null_lambdas.windows(2).all(|w| w[0] <= w[1]));
        let alone = etest_metrics(None, &inf, &set);
        assert!(alone.lrts_mse.is_nan() && alone.nler_null_lambdas.is_empty());
    }
}
