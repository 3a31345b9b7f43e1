use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Student-t distribution function.
fn t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of the Student-t distribution with `df` degrees of freedom,
/// by bisection on the distribution function to 1e-10.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability must be in (0, 1), got {p}")));
    }
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::InvalidArgument(format!("degrees of freedom must be positive, got {df}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p < 0.5 {
        return Ok(-t_quantile(1.0 - p, df)?);
    }
    let mut hi = 1.0;
    while t_cdf(hi, df) < p {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numeric(format!("t quantile {p} with {df} df does not converge")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `mean ± t_{1-α/2, n-1} · sd / √n`.
pub fn confidence_interval(mean: f64, sd: f64, n: usize, alpha: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("a confidence interval needs n >= 2, got {n}")));
    }
    if !(sd >= 0.0) {
        return Err(Error::InvalidArgument(format!("standard deviation must be non-negative, got {sd}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if sd == 0.0 {
        return Ok((mean, mean));
    }
    let half = t_quantile(1.0 - alpha / 2.0, (n - 1) as f64)? * sd / (n as f64).sqrt();
    Ok((mean - half, mean + half))
}
