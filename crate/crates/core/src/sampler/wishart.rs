use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Wishart(df, scale) draw for 2x2 matrices via the Bartlett decomposition.
pub fn sample_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &Matrix2<f64>,
    rng: &mut R,
) -> Result<Matrix2<f64>> {
    if !(df > 1.0) {
        return Err(Error::Numerical(format!(
            "Wishart degrees of freedom {df} must exceed 1"
        )));
    }
    let l = scale
        .cholesky()
        .ok_or_else(|| {
            Error::Numerical(format!("Wishart scale is not positive definite: {scale:?}"))
        })?
        .l();
    let chi = |k: f64, rng: &mut R| -> Result<f64> {
        ChiSquared::new(k)
            .map(|c| c.sample(rng))
            .map_err(|e| Error::Numerical(e.to_string()))
    };
    let c11 = chi(df, rng)?.sqrt();
    let c22 = chi(df - 1.0, rng)?.sqrt();
    let z: f64 = rng.sample(StandardNormal);
    let a = Matrix2::new(c11, 0.0, z, c22);
    let la = l * a;
    Ok(la * la.transpose())
}

/// Inverse-Wishart(df, scale) draw: the inverse of a Wishart(df, scale^-1) draw.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &Matrix2<f64>,
    rng: &mut R,
) -> Result<Matrix2<f64>> {
    let scale_inv = scale
        .try_inverse()
        .ok_or_else(|| Error::Numerical(format!("inverse-Wishart scale is singular: {scale:?}")))?;
    let w = sample_wishart(df, &scale_inv, rng)?;
    let mut sigma = w
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Wishart draw is singular".into()))?;
    // symmetrize away rounding
    let off = 0.5 * (sigma[(0, 1)] + sigma[(1, 0)]);
    sigma[(0, 1)] = off;
    sigma[(1, 0)] = off;
    Ok(sigma)
}
