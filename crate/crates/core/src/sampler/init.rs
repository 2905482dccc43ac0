use rand::Rng;
use rand_distr::StandardNormal;

use super::ModelData;
use crate::error::{Error, Result};
use crate::net::{LatentMatrix, LikelihoodFamily};

/// Feasible starting latent matrix: within each row, sorted standard normal
/// draws are handed out in score order (ranked entries get the largest), then
/// shifted so that every threshold rule of the family holds.
pub fn initialize_latent<R: Rng + ?Sized>(
    model: &ModelData<'_>,
    rng: &mut R,
) -> Result<LatentMatrix> {
    use LikelihoodFamily::*;
    let n = model.n();
    let family = model.family;
    let mut y = LatentMatrix::zeros(n);
    let mut draws: Vec<f64> = Vec::with_capacity(n);
    for (i, layout) in model.layouts.iter().enumerate() {
        let d = layout.ranked.len();
        draws.clear();
        draws.extend((0..d + layout.unranked.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        draws.sort_by(|a, b| b.total_cmp(a));

        let unranked_nonpositive = match family {
            Binary => true,
            Frn | CensoredBinary => !layout.censored,
            Rank => false,
        };
        let down = if unranked_nonpositive {
            draws.get(d).map_or(0.0, |&top| top.max(0.0))
        } else {
            0.0
        };
        let up = if family != Rank && d > 0 && draws[d - 1] <= 0.0 {
            0.5 - draws[d - 1]
        } else {
            0.0
        };
        for (k, &j) in layout.ranked.iter().enumerate() {
            y.set(i, j, draws[k] + up);
        }
        for (k, &j) in layout.unranked.iter().enumerate() {
            y.set(i, j, draws[d + k] - down);
        }
        for &j in &layout.missing {
            y.set(i, j, rng.sample(StandardNormal));
        }
    }
    if let Some(detail) = model.check_membership(&y) {
        return Err(Error::Numerical(format!(
            "initial latent matrix is infeasible: {detail}"
        )));
    }
    Ok(y)
}
