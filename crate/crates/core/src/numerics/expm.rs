use super::matrix::{lu_decompose, DenseMatrix};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float as _;

/// Target 1-norm after scaling; well inside the [13/13] Padé convergence
/// region, so the approximant error sits at roundoff level.
const SCALED_NORM: f64 = 0.5;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `exp(A)` by scaling and squaring with the diagonal [13/13] Padé approximant.
pub fn matrix_exponential(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::NonSquare { rows: a.rows(), cols: a.cols() });
    }
    if !a.is_finite() {
        return Err(Error::InvalidArgument("matrix exponential of non-finite matrix".into()));
    }
    let n = a.rows();
    let norm = a.norm_one();
    let squarings = if norm > SCALED_NORM { (norm / SCALED_NORM).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(0.5f64.powi(squarings));

    let b = &PADE13;
    let id = DenseMatrix::identity(n);
    let a2 = scaled.matmul(&scaled);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut inner_u = a6.scale(b[13]);
    inner_u.axpy(b[11], &a4);
    inner_u.axpy(b[9], &a2);
    let mut u = a6.matmul(&inner_u);
    u.axpy(b[7], &a6);
    u.axpy(b[5], &a4);
    u.axpy(b[3], &a2);
    u.axpy(b[1], &id);
    let u = scaled.matmul(&u);

    let mut inner_v = a6.scale(b[12]);
    inner_v.axpy(b[10], &a4);
    inner_v.axpy(b[8], &a2);
    let mut v = a6.matmul(&inner_v);
    v.axpy(b[6], &a6);
    v.axpy(b[4], &a4);
    v.axpy(b[2], &a2);
    v.axpy(b[0], &id);

    let p = v.add(&u);
    let q = v.sub(&u);
    let mut r = lu_decompose(&q)?.solve(&p);
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    Ok(r)
}

/// `(exp(A), L(A, E))` where `L` is the Fréchet derivative of the matrix
/// exponential at `A` in direction `E`, read off the upper-right block of
/// `exp([[A, E], [0, A]])`.
pub fn matrix_exponential_frechet(a: &DenseMatrix, e: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if !a.is_square() {
        return Err(Error::NonSquare { rows: a.rows(), cols: a.cols() });
    }
    if e.rows() != a.rows() || e.cols() != a.cols() {
        return Err(Error::DimensionMismatch { expected: a.rows(), actual: e.rows() });
    }
    let n = a.rows();
    let mut block = DenseMatrix::zeros(2 * n, 2 * n);
    block.set_block(0, 0, a);
    block.set_block(0, n, e);
    block.set_block(n, n, a);
    let big = matrix_exponential(&block)?;
    Ok((big.block(0, 0, n, n), big.block(0, n, n, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_generator(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = crate::rng::Rng::seed_from_u64(seed);
        let mut q = DenseMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..2.0) });
        for i in 0..n {
            let s: f64 = q.row(i).iter().sum();
            q[(i, i)] = -s;
        }
        q
    }

    /// Truncated Taylor series on `A / 2^k`, then squared back.
    fn taylor_exp(a: &DenseMatrix, terms: usize) -> DenseMatrix {
        let n = a.rows();
        let k = (a.norm_one().max(1.0).log2().ceil() as i32) + 4;
        let scaled = a.scale(0.5f64.powi(k));
        let mut sum = DenseMatrix::identity(n);
        let mut term = DenseMatrix::identity(n);
        for j in 1..terms {
            term = term.matmul(&scaled).scale(1.0 / j as f64);
            sum = sum.add(&term);
        }
        for _ in 0..k {
            sum = sum.matmul(&sum);
        }
        sum
    }

    #[test]
    fn zero_and_diagonal() {
        let z = matrix_exponential(&DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(z, DenseMatrix::identity(3));
        let d = matrix_exponential(&DenseMatrix::from_diagonal(&[1.0, -1.0])).unwrap();
        assert!((d[(0, 0)] - core::f64::consts::E).abs() < 1e-14);
        assert!((d[(1, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn generator_matches_taylor_and_is_stochastic() {
        let q = random_generator(16, 42);
        let p = matrix_exponential(&q).unwrap();
        let t = taylor_exp(&q, 60);
        assert!(p.max_abs_diff(&t) <= 1e-10, "{}", p.max_abs_diff(&t));
        for i in 0..16 {
            let s: f64 = p.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(p.row(i).iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn inverse_property() {
        let mut rng = crate::rng::Rng::seed_from_u64(1);
        let a = DenseMatrix::from_fn(6, 6, |_, _| rng.random_range(-0.8..0.8));
        let prod = matrix_exponential(&a).unwrap().matmul(&matrix_exponential(&a.scale(-1.0)).unwrap());
        assert!(prod.max_abs_diff(&DenseMatrix::identity(6)) < 1e-8);
    }

    #[test]
    fn frechet_trivial_directions() {
        let q = random_generator(4, 3);
        let (_, l) = matrix_exponential_frechet(&q, &DenseMatrix::zeros(4, 4)).unwrap();
        assert_eq!(l.max_abs_diff(&DenseMatrix::zeros(4, 4)), 0.0);
        let e = random_generator(4, 4);
        let (ex, l) = matrix_exponential_frechet(&DenseMatrix::zeros(4, 4), &e).unwrap();
        assert!(l.max_abs_diff(&e) < 1e-14);
        assert!(ex.max_abs_diff(&DenseMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn frechet_matches_central_difference() {
        let mut rng = crate::rng::Rng::seed_from_u64(8);
        let a = DenseMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let e = DenseMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let h = 1e-6;
        let plus = matrix_exponential(&a.add(&e.scale(h))).unwrap();
        let minus = matrix_exponential(&a.sub(&e.scale(h))).unwrap();
        let fd = plus.sub(&minus).scale(0.5 / h);
        let (_, l) = matrix_exponential_frechet(&a, &e).unwrap();
        assert!(l.max_abs_diff(&fd) < 1e-6);
    }

    #[test]
    fn errors() {
        let ns = DenseMatrix::zeros(2, 3);
        assert!(matches!(matrix_exponential(&ns), Err(Error::NonSquare { .. })));
        let r = matrix_exponential_frechet(&DenseMatrix::zeros(2, 2), &DenseMatrix::zeros(3, 3));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
