//! Gaussian and Student-t processes on a regular 2D grid with an
//! anisotropic exponential kernel (σ² = 1).
//!
//! GP working parameters: `(log l_x, log l_y, log ε)`.
//! STP working parameters: `(log l_x, log l_y, log(ν − 2))` with ε = 0.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float as _;

use rand::RngCore;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{Observation, StochasticModel};
use crate::numerics::{digamma, dot, ln_gamma, CholeskyFactor, DenseMatrix};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `side × side` evenly spaced locations; point `(i, j)` has
/// `y = axis[i]`, `x = axis[j]` and flat index `i * side + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    side: usize,
    low: f64,
    high: f64,
}

impl Grid {
    pub fn new(side: usize) -> Result<Self> {
        Self::with_extent(side, -3.0, 3.0)
    }

    pub fn with_extent(side: usize, low: f64, high: f64) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidArgument(format!("grid side must be at least 2, got {side}")));
        }
        if !(high > low) {
            return Err(Error::InvalidArgument("grid extent must be increasing".into()));
        }
        Ok(Self { side, low, high })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn size(&self) -> usize {
        self.side * self.side
    }

    pub fn axis(&self) -> Vec<f64> {
        let step = (self.high - self.low) / (self.side - 1) as f64;
        (0..self.side).map(|i| self.low + step * i as f64).collect()
    }

    /// `(x, y)` per flat index.
    pub fn locations(&self) -> Vec<[f64; 2]> {
        let axis = self.axis();
        let mut out = Vec::with_capacity(self.size());
        for &y in &axis {
            for &x in &axis {
                out.push([x, y]);
            }
        }
        out
    }

    /// Field reflected across the main diagonal (x and y swapped).
    pub fn transpose_field(&self, field: &[f64]) -> Vec<f64> {
        let n = self.side;
        let mut out = vec![0.0; field.len()];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = field[i * n + j];
            }
        }
        out
    }
}

/// Squared scaled offsets `((a·h/l_x)², (b·h/l_y)²)` for `a, b < side`.
/// On a regular grid the kernel depends only on index offsets.
fn offset_terms(grid: &Grid, lx: f64, ly: f64) -> Vec<(f64, f64)> {
    let n = grid.side;
    let step = (grid.high - grid.low) / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for b in 0..n {
        let dy = b as f64 * step / ly;
        for a in 0..n {
            let dx = a as f64 * step / lx;
            out.push((dx * dx, dy * dy));
        }
    }
    out
}

/// Expands an offset table (`b · side + a`) into the full `S × S` matrix.
fn expand(grid: &Grid, table: &[f64]) -> DenseMatrix {
    let n = grid.side;
    let s = n * n;
    let mut m = DenseMatrix::zeros(s, s);
    let out = m.as_mut_slice();
    for i1 in 0..n {
        for j1 in 0..n {
            let row = &mut out[(i1 * n + j1) * s..(i1 * n + j1 + 1) * s];
            for i2 in 0..n {
                let t = &table[i1.abs_diff(i2) * n..(i1.abs_diff(i2) + 1) * n];
                for j2 in 0..n {
                    row[i2 * n + j2] = t[j1.abs_diff(j2)];
                }
            }
        }
    }
    m
}

/// `Σ_ij = exp(−sqrt(dx²/l_x² + dy²/l_y²)) + ε² 1(i = j)`.
pub fn build_covariance(grid: &Grid, lx: f64, ly: f64, eps: f64) -> DenseMatrix {
    let table: Vec<f64> = offset_terms(grid, lx, ly).iter().map(|&(ax, ay)| (-(ax + ay).sqrt()).exp()).collect();
    let mut sigma = expand(grid, &table);
    for i in 0..grid.size() {
        sigma[(i, i)] += eps * eps;
    }
    sigma
}

/// Partials of [`build_covariance`] with respect to `log l_x` and `log l_y`.
fn length_scale_partials(grid: &Grid, lx: f64, ly: f64) -> [DenseMatrix; 2] {
    let terms = offset_terms(grid, lx, ly);
    let (mut tx, mut ty) = (vec![0.0; terms.len()], vec![0.0; terms.len()]);
    for (k, &(ax, ay)) in terms.iter().enumerate() {
        let r = (ax + ay).sqrt();
        if r > 0.0 {
            let w = (-r).exp() / r;
            tx[k] = w * ax;
            ty[k] = w * ay;
        }
    }
    [expand(grid, &tx), expand(grid, &ty)]
}

/// `∂Σ/∂(log l_x, log l_y, log ε)` at GP working parameters `theta`.
pub fn covariance_partials(grid: &Grid, theta: &[f64]) -> Vec<DenseMatrix> {
    let [a, b] = length_scale_partials(grid, theta[0].exp(), theta[1].exp());
    let eps = theta[2].exp();
    let c = DenseMatrix::identity(grid.size()).scale(2.0 * eps * eps);
    vec![a, b, c]
}

fn field<'a>(obs: &'a Observation, size: usize) -> Result<&'a [f64]> {
    let x = obs.as_field().ok_or_else(|| Error::InvalidArgument("spatial models expect a field".into()))?;
    if x.len() != size {
        return Err(Error::DimensionMismatch { expected: size, actual: x.len() });
    }
    Ok(x)
}

fn check_theta(theta: &[f64]) -> Result<()> {
    if theta.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, actual: theta.len() });
    }
    Ok(())
}

fn gaussian_draw(chol: &CholeskyFactor, rng: &mut dyn RngCore) -> Vec<f64> {
    let u: Vec<f64> = (0..chol.dim()).map(|_| StandardNormal.sample(rng)).collect();
    chol.lower_mul(&u)
}

/// `αᵀ D α`
fn bilinear(d: &DenseMatrix, alpha: &[f64]) -> f64 {
    d.matvec(alpha).iter().zip(alpha).map(|(a, b)| a * b).sum()
}

/// Anisotropic Gaussian process with nugget.
#[derive(Debug, Clone)]
pub struct GpModel {
    grid: Grid,
}

impl GpModel {
    pub fn new(grid: Grid) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn covariance(&self, theta: &[f64]) -> DenseMatrix {
        build_covariance(&self.grid, theta[0].exp(), theta[1].exp(), theta[2].exp())
    }

    pub fn simulate_field(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        check_theta(theta)?;
        let chol = CholeskyFactor::new(&self.covariance(theta))?;
        Ok(gaussian_draw(&chol, rng))
    }
}

impl StochasticModel for GpModel {
    fn theta_dim(&self) -> usize {
        3
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![1, self.grid.side, self.grid.side]
    }

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Observation> {
        self.simulate_field(theta, rng).map(Observation::Field)
    }

    fn log_likelihood(&self, theta: &[f64], obs: &Observation) -> Result<f64> {
        check_theta(theta)?;
        let x = field(obs, self.grid.size())?;
        let chol = CholeskyFactor::new(&self.covariance(theta))?;
        let s = x.len() as f64;
        Ok(-0.5 * s * LN_2PI - 0.5 * chol.log_det() - 0.5 * chol.quadratic_form(x)?)
    }

    fn score(&self, theta: &[f64], obs: &Observation) -> Result<Vec<f64>> {
        check_theta(theta)?;
        let x = field(obs, self.grid.size())?;
        let chol = CholeskyFactor::new(&self.covariance(theta))?;
        let alpha = chol.solve(x)?;
        covariance_partials(&self.grid, theta)
            .iter()
            .map(|d| Ok(0.5 * bilinear(d, &alpha) - 0.5 * chol.trace_solve(d)?))
            .collect()
    }

    fn encode(&self, obs: &Observation) -> Vec<f64> {
        obs.as_field().expect("field observation").to_vec()
    }

    fn group_log_likelihood(&self, theta: &[f64], group: &[Observation]) -> Result<f64> {
        check_theta(theta)?;
        let s = self.grid.size();
        let chol = CholeskyFactor::new(&self.covariance(theta))?;
        let constant = -0.5 * s as f64 * LN_2PI - 0.5 * chol.log_det();
        group.iter().try_fold(0.0, |acc, obs| Ok(acc + constant - 0.5 * chol.quadratic_form(field(obs, s)?)?))
    }

    /// One factorization per grid point; each group enters through its
    /// scatter matrix `C = Σ_x x xᵀ`, so `Σ_x xᵀΣ⁻¹x = tr(Σ⁻¹ C)`. Both
    /// symmetric factors are packed to their upper triangles.
    fn grid_log_likelihoods(&self, groups: &[Vec<Observation>], thetas: &[Vec<f64>]) -> Result<Vec<f64>> {
        let s = self.grid.size();
        let packed_len = s * (s + 1) / 2;
        let mut scatters = Vec::with_capacity(groups.len());
        for group in groups {
            let mut c = vec![0.0; packed_len];
            for obs in group {
                let x = field(obs, s)?;
                let mut k = 0;
                for i in 0..s {
                    let xi = x[i];
                    c[k] += xi * xi;
                    for (cij, &xj) in c[k + 1..k + s - i].iter_mut().zip(&x[i + 1..]) {
                        *cij += 2.0 * xi * xj;
                    }
                    k += s - i;
                }
            }
            scatters.push((group.len() as f64, c));
        }
        let mut out = vec![0.0; groups.len() * thetas.len()];
        let mut packed = vec![0.0; packed_len];
        for (t, theta) in thetas.iter().enumerate() {
            check_theta(theta)?;
            let chol = CholeskyFactor::new(&self.covariance(theta))?;
            let inv = chol.inverse();
            let mut k = 0;
            for i in 0..s {
                packed[k..k + s - i].copy_from_slice(&inv.row(i)[i..]);
                k += s - i;
            }
            let constant = -0.5 * s as f64 * LN_2PI - 0.5 * chol.log_det();
            for (g, (n, c)) in scatters.iter().enumerate() {
                out[g * thetas.len() + t] = n * constant - 0.5 * dot(&packed, c);
            }
        }
        Ok(out)
    }
}

/// Variance-normalized Student-t process: `X = Z sqrt((ν − 2)/R)` with
/// `Z` a nugget-free GP draw and `R ~ χ²_ν`, so `Cov(X) = Σ`.
#[derive(Debug, Clone)]
pub struct StpModel {
    grid: Grid,
}

struct StpTerms {
    nu: f64,
    s: f64,
    log_det: f64,
}

impl StpTerms {
    fn new(theta: &[f64], s: usize, log_det: f64) -> Result<Self> {
        let nu = theta[2].exp() + 2.0;
        if !(nu > 2.0) {
            return Err(Error::Domain(format!("degrees of freedom must exceed 2, got {nu}")));
        }
        Ok(Self { nu, s: s as f64, log_det })
    }

    fn log_density(&self, q: f64) -> f64 {
        let (nu, s) = (self.nu, self.s);
        ln_gamma(0.5 * (nu + s))
            - ln_gamma(0.5 * nu)
            - 0.5 * s * (PI.ln() + (nu - 2.0).ln())
            - 0.5 * self.log_det
            - 0.5 * (nu + s) * (q / (nu - 2.0)).ln_1p()
    }
}

impl StpModel {
    pub fn new(grid: Grid) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn covariance(&self, theta: &[f64]) -> DenseMatrix {
        build_covariance(&self.grid, theta[0].exp(), theta[1].exp(), 0.0)
    }

    fn factor(&self, theta: &[f64]) -> Result<(CholeskyFactor, StpTerms)> {
        check_theta(theta)?;
        let chol = CholeskyFactor::new(&self.covariance(theta))?;
        let terms = StpTerms::new(theta, self.grid.size(), chol.log_det())?;
        Ok((chol, terms))
    }

    pub fn simulate_field(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let (chol, terms) = self.factor(theta)?;
        let z = gaussian_draw(&chol, rng);
        let chi = ChiSquared::new(terms.nu).map_err(|e| Error::Domain(format!("{e}")))?;
        let r: f64 = chi.sample(rng);
        let scale = ((terms.nu - 2.0) / r).sqrt();
        Ok(z.into_iter().map(|v| v * scale).collect())
    }
}

impl StochasticModel for StpModel {
    fn theta_dim(&self) -> usize {
        3
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![1, self.grid.side, self.grid.side]
    }

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Observation> {
        self.simulate_field(theta, rng).map(Observation::Field)
    }

    fn log_likelihood(&self, theta: &[f64], obs: &Observation) -> Result<f64> {
        let x = field(obs, self.grid.size())?;
        let (chol, terms) = self.factor(theta)?;
        Ok(terms.log_density(chol.quadratic_form(x)?))
    }

    fn score(&self, theta: &[f64], obs: &Observation) -> Result<Vec<f64>> {
        let x = field(obs, self.grid.size())?;
        let (chol, terms) = self.factor(theta)?;
        let alpha = chol.solve(x)?;
        let q: f64 = alpha.iter().zip(x).map(|(a, b)| a * b).sum();
        let (nu, s) = (terms.nu, terms.s);
        let weight = 0.5 * (nu + s) / (nu - 2.0 + q);
        let [dx, dy] = length_scale_partials(&self.grid, theta[0].exp(), theta[1].exp());
        let mut score = Vec::with_capacity(3);
        for d in [&dx, &dy] {
            score.push(weight * bilinear(d, &alpha) - 0.5 * chol.trace_solve(d)?);
        }
        let dnu = 0.5 * digamma(0.5 * (nu + s))?
            - 0.5 * digamma(0.5 * nu)?
            - 0.5 * s / (nu - 2.0)
            - 0.5 * (q / (nu - 2.0)).ln_1p()
            + 0.5 * (nu + s) * q / ((nu - 2.0) * (nu - 2.0 + q));
        // dν / d log(ν − 2) = ν − 2
        score.push(dnu * (nu - 2.0));
        Ok(score)
    }

    fn encode(&self, obs: &Observation) -> Vec<f64> {
        obs.as_field().expect("field observation").to_vec()
    }

    fn group_log_likelihood(&self, theta: &[f64], group: &[Observation]) -> Result<f64> {
        check_theta(theta)?;
        let s = self.grid.size();
        let chol = CholeskyFactor::new(&self.covariance(theta))?;
        let terms = StpTerms::new(theta, s, chol.log_det())?;
        group.iter().try_fold(0.0, |acc, obs| Ok(acc + terms.log_density(chol.quadratic_form(field(obs, s)?)?)))
    }

    /// One factorization per `(l_x, l_y)`; grid points sharing length scales
    /// reuse the per-observation quadratic forms.
    fn grid_log_likelihoods(&self, groups: &[Vec<Observation>], thetas: &[Vec<f64>]) -> Result<Vec<f64>> {
        let s = self.grid.size();
        for group in groups {
            for obs in group {
                field(obs, s)?;
            }
        }
        let mut out = vec![0.0; groups.len() * thetas.len()];
        let mut cached: Option<([u64; 2], CholeskyFactor, Vec<Vec<f64>>)> = None;
        for (t, theta) in thetas.iter().enumerate() {
            check_theta(theta)?;
            let key = [theta[0].to_bits(), theta[1].to_bits()];
            if cached.as_ref().is_none_or(|(k, _, _)| *k != key) {
                let chol = CholeskyFactor::new(&self.covariance(theta))?;
                let forms = groups
                    .iter()
                    .map(|g| g.iter().map(|obs| chol.quadratic_form(obs.as_field().unwrap())).collect())
                    .collect::<Result<Vec<Vec<f64>>>>()?;
                cached = Some((key, chol, forms));
            }
            let (_, chol, forms) = cached.as_ref().unwrap();
            let terms = StpTerms::new(theta, s, chol.log_det())?;
            for (g, qs) in forms.iter().enumerate() {
                out[g * thetas.len() + t] = qs.iter().map(|&q| terms.log_density(q)).sum();
            }
        }
        Ok(out)
    }
}
