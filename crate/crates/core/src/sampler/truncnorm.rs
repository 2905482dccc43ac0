//! Truncated normal draws that stay accurate far into the tails.
//!
//! Intervals holding a large share of the mass use plain rejection. Otherwise
//! bounds within [`TAIL_CUTOFF`] standard deviations are inverted through the
//! upper-tail probability in log space, and intervals starting beyond the
//! cutoff use exponential (or, for very short intervals, uniform) rejection.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::net::ConstraintInterval;

/// Standardized bound beyond which inverse-CDF sampling gives way to rejection.
pub const TAIL_CUTOFF: f64 = 6.0;

/// Upper-tail probability 1 - Φ(x), accurate for large positive x.
#[inline]
pub fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// x with 1 - Φ(x) = q.
#[inline]
fn upper_tail_inv(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

/// Draws from Normal(mean, sd^2) restricted to `interval`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    interval: ConstraintInterval,
    rng: &mut R,
) -> Result<f64> {
    let ConstraintInterval { lo, hi } = interval;
    if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
        return Err(Error::Numerical(format!(
            "truncated normal needs a finite mean and positive sd (mean {mean}, sd {sd})"
        )));
    }
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::EmptyInterval { lo, hi });
    }
    if lo == hi {
        return Ok(lo);
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let z = standard_truncated(a, b, rng);
    Ok((mean + sd * z).clamp(lo, hi))
}

/// Standard normal restricted to [a, b], a < b.
pub fn standard_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    // at least half the mass inside: plain rejection needs < 2 draws on average
    let wide = (a == f64::NEG_INFINITY && b >= 0.0)
        || (b == f64::INFINITY && a <= 0.0)
        || (a <= -1.0 && b >= 1.0);
    if wide {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= a && z <= b {
                return z;
            }
        }
    }
    if a >= TAIL_CUTOFF {
        tail_rejection(a, b, rng)
    } else if b <= -TAIL_CUTOFF {
        -tail_rejection(-b, -a, rng)
    } else if a >= 0.0 {
        upper_inverse(a, b, rng)
    } else if b <= 0.0 {
        -upper_inverse(-b, -a, rng)
    } else {
        // straddles zero and is narrow on at least one side
        let pa = upper_tail(-a);
        let pb = 1.0 - upper_tail(b);
        let u: f64 = rng.random();
        let p = pa + u * (pb - pa);
        (-upper_tail_inv(p)).clamp(a, b)
    }
}

/// Inverse-CDF draw on [a, b] with 0 <= a < TAIL_CUTOFF, working with
/// log upper-tail probabilities so that no mass near 1 is subtracted.
fn upper_inverse<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let log_qa = upper_tail(a).ln();
    let ratio = upper_tail(b) / upper_tail(a);
    let u: f64 = rng.random();
    let log_q = log_qa + (-u * (1.0 - ratio)).ln_1p();
    upper_tail_inv(log_q.exp()).clamp(a, b)
}

/// Rejection sampler for [a, b] with a >= TAIL_CUTOFF.
fn tail_rejection<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b - a < 1.0 / a {
        // short interval: uniform proposal, acceptance >= exp(-1 - 1/(2a^2))
        loop {
            let x = rng.random_range(a..b);
            let log_u: f64 = rng.random::<f64>().ln();
            if log_u <= -0.5 * (x - a) * (x + a) {
                return x;
            }
        }
    }
    // exponential proposal with the optimal rate for the truncation point
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = a + e / rate;
        if x > b {
            continue;
        }
        let log_u: f64 = rng.random::<f64>().ln();
        if log_u <= -0.5 * (x - rate) * (x - rate) {
            return x;
        }
    }
}
