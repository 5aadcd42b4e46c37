//! χ² quantiles for likelihood-ratio confidence sets.

use crate::numerics::regularized_gamma_p;
use crate::{Error, Result};

pub fn chi_squared_cdf(x: f64, dof: usize) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    regularized_gamma_p(0.5 * dof as f64, 0.5 * x)
}

/// Inverse χ² CDF by bracketing and bisection.
pub fn chi_squared_quantile(level: f64, dof: usize) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) || dof == 0 {
        return Err(Error::Domain(alloc::format!("no χ² quantile for level {level} with {dof} dof")));
    }
    let (mut lo, mut hi) = (0.0, dof as f64 + 10.0);
    while chi_squared_cdf(hi, dof)? < level {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_squared_cdf(mid, dof)? < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
