//! Full-conditional updates of one sweep.
//!
//! Dyad pairs (y_ij, y_ji) have error covariance [[1, ρ], [ρ, 1]] whose
//! inverse is [[κ, λ], [λ, κ]] with κ = 1/(1-ρ²) and λ = -ρ/(1-ρ²). Every
//! Gaussian update below works with the precision-weighted responses
//! w_ij = κ r_ij + λ r_ji.
//!
//! Because all latent entries are present (missing ones are imputed), the
//! precision of the stacked sender/receiver effects has the block form
//! I ⊗ (D - E) + J ⊗ E, whose inverse splits into the projection onto the
//! node-mean direction and its complement. That makes the joint draw of
//! (β, a, b) cost O(n² p) instead of a dense factorization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::truncnorm::sample_truncated_normal;
use super::wishart::sample_inverse_wishart;
use super::{ChainState, ModelData, SamplerConfig};
use crate::constraints::RowContext;
use crate::error::{Error, Result};
use crate::net::{ConstraintInterval, LatentMatrix, LikelihoodFamily, SrmParams};

#[inline]
fn dyad_precision(rho: f64) -> (f64, f64) {
    let det = 1.0 - rho * rho;
    (1.0 / det, -rho / det)
}

fn standard_normals<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Draws x ~ Normal(Q^-1 l, Q^-1).
fn draw_from_precision<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
    what: &str,
) -> Result<DVector<f64>> {
    let chol = precision.cholesky().ok_or_else(|| {
        Error::Singular(format!(
            "{what} precision is not positive definite (collinear design?)"
        ))
    })?;
    let mean = chol.solve(linear);
    let z = standard_normals(mean.len(), rng);
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Singular(format!("{what} Cholesky factor is singular")))?;
    Ok(mean + noise)
}

/// Resamples every off-diagonal latent entry once, row by row. Within a row
/// the missing and unranked entries go first, then the ranked entries from the
/// top score down, each from its conditional normal given the opposite entry
/// of its dyad, truncated to the family's interval.
pub fn gibbs_update_y(state: &mut ChainState, model: &ModelData<'_>) -> Result<()> {
    let n = model.n();
    let ChainState {
        params,
        latent,
        rng,
        ..
    } = state;
    let mu = params.mean_matrix(n, &model.x);
    let rho = params.rho;
    let sd = (1.0 - rho * rho).sqrt();
    let family = model.family;
    for (i, layout) in model.layouts.iter().enumerate() {
        let cond_mean =
            |j: usize, y: &LatentMatrix| mu[i * n + j] + rho * (y.get(j, i) - mu[j * n + i]);
        for &j in &layout.missing {
            let v = sample_truncated_normal(
                cond_mean(j, latent),
                sd,
                ConstraintInterval::UNBOUNDED,
                rng,
            )?;
            latent.set(i, j, v);
        }
        let mut ctx = RowContext::new(layout, latent.row(i), model.scores.row_bound(i));
        let iv = ctx.unranked_interval(family);
        for &j in &layout.unranked {
            let v = sample_truncated_normal(cond_mean(j, latent), sd, iv, rng)?;
            latent.set(i, j, v);
        }
        ctx.refresh_extremes(layout, latent.row(i));
        for (k, &j) in layout.ranked.iter().enumerate() {
            let iv = ctx.ranked_interval(family, k);
            let v = sample_truncated_normal(cond_mean(j, latent), sd, iv, rng)?;
            latent.set(i, j, v);
            ctx.ranked_values[k] = v;
        }
    }
    Ok(())
}

/// Precision-weighted responses of `latent - offset`, where the offset is
/// x_ij'β (when `with_beta`) plus a_i + b_j (when `with_effects`).
fn weighted_residuals(
    model: &ModelData<'_>,
    params: &SrmParams,
    latent: &LatentMatrix,
    with_beta: bool,
    with_effects: bool,
) -> Vec<f64> {
    let n = model.n();
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let mut v = latent.get(i, j);
            if with_beta {
                v -= model
                    .regressors(i, j)
                    .iter()
                    .zip(&params.beta)
                    .map(|(x, b)| x * b)
                    .sum::<f64>();
            }
            if with_effects {
                v -= params.a[i] + params.b[j];
            }
            r[i * n + j] = v;
        }
    }
    let (kappa, lambda) = dyad_precision(params.rho);
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            w[i * n + j] = kappa * r[i * n + j] + lambda * r[j * n + i];
        }
    }
    w
}

/// Σ_{i≠j} x_ij w_ij.
fn regressor_projection(model: &ModelData<'_>, w: &[f64]) -> DVector<f64> {
    let (n, p) = (model.n(), model.p());
    let mut l = DVector::zeros(p);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let wij = w[i * n + j];
            for (k, x) in model.regressors(i, j).iter().enumerate() {
                l[k] += x * wij;
            }
        }
    }
    l
}

/// Prior-plus-likelihood precision of β given the effects.
fn beta_precision(model: &ModelData<'_>, rho: f64, prior_variance: f64) -> DMatrix<f64> {
    let (kappa, lambda) = dyad_precision(rho);
    let p = model.p();
    &model.gram_same * kappa + &model.gram_cross * lambda + DMatrix::identity(p, p) / prior_variance
}

/// Block structure of the effects precision. Effects per node are (a_i, b_i),
/// or b_i alone under the rank likelihood.
struct EffectBlocks {
    k: usize,
    /// Node block on the diagonal, prior included.
    d: DMatrix<f64>,
    /// Block coupling two different nodes.
    e: DMatrix<f64>,
}

fn effect_blocks(model: &ModelData<'_>, params: &SrmParams) -> Result<EffectBlocks> {
    let n = model.n() as f64;
    let (kappa, lambda) = dyad_precision(params.rho);
    if model.family == LikelihoodFamily::Rank {
        let var_b = params.sigma_ab[(1, 1)];
        return Ok(EffectBlocks {
            k: 1,
            d: DMatrix::from_element(1, 1, (n - 1.0) * kappa + 1.0 / var_b),
            e: DMatrix::from_element(1, 1, lambda),
        });
    }
    let sigma_inv = params
        .sigma_ab
        .try_inverse()
        .ok_or_else(|| Error::Numerical("sigma_ab is singular".into()))?;
    let mut d = DMatrix::from_row_slice(2, 2, &[kappa, lambda, lambda, kappa]) * (n - 1.0);
    for r in 0..2 {
        for c in 0..2 {
            d[(r, c)] += sigma_inv[(r, c)];
        }
    }
    Ok(EffectBlocks {
        k: 2,
        d,
        e: DMatrix::from_row_slice(2, 2, &[lambda, kappa, kappa, lambda]),
    })
}

/// Per-node effect linear terms (Σ_j w_ij, Σ_j w_ji), or the receiver part only.
fn effect_linear_terms(k: usize, n: usize, w: &[f64]) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| {
            let out: f64 = (0..n).filter(|&j| j != i).map(|j| w[i * n + j]).sum();
            let inc: f64 = (0..n).filter(|&j| j != i).map(|j| w[j * n + i]).sum();
            if k == 2 {
                DVector::from_vec(vec![out, inc])
            } else {
                DVector::from_vec(vec![inc])
            }
        })
        .collect()
}

/// Cross-precision between node i's effects and β (k x p).
fn effect_beta_coupling(model: &ModelData<'_>, k: usize, rho: f64, i: usize) -> DMatrix<f64> {
    let (kappa, lambda) = dyad_precision(rho);
    let p = model.p();
    let rs = model.row_sums.row(i);
    let cs = model.col_sums.row(i);
    let sender = rs * kappa + cs * lambda;
    let receiver = cs * kappa + rs * lambda;
    let mut f = DMatrix::zeros(k, p);
    if k == 2 {
        f.row_mut(0).copy_from(&sender);
        f.row_mut(1).copy_from(&receiver);
    } else {
        f.row_mut(0).copy_from(&receiver);
    }
    f
}

fn write_effects(params: &mut SrmParams, k: usize, i: usize, u: &DVector<f64>) {
    if k == 2 {
        params.a[i] = u[0];
        params.b[i] = u[1];
    } else {
        params.a[i] = 0.0;
        params.b[i] = u[0];
    }
}

fn read_effects(params: &SrmParams, k: usize, i: usize) -> DVector<f64> {
    if k == 2 {
        DVector::from_vec(vec![params.a[i], params.b[i]])
    } else {
        DVector::from_vec(vec![params.b[i]])
    }
}

/// Everything the collapsed β draw and the follow-up effects draw share.
struct CollapsedSystem {
    blocks: EffectBlocks,
    /// (D - E)^-1: covariance on node contrasts.
    m_within: DMatrix<f64>,
    /// (D + (n-1) E)^-1: covariance along the node-mean direction.
    m_mean: DMatrix<f64>,
    couplings: Vec<DMatrix<f64>>,
    effect_terms: Vec<DVector<f64>>,
    beta_precision: DMatrix<f64>,
    beta_linear: DVector<f64>,
}

fn inverse_spd(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

fn collapsed_system(
    model: &ModelData<'_>,
    params: &SrmParams,
    latent: &LatentMatrix,
    prior_variance: f64,
) -> Result<CollapsedSystem> {
    let n = model.n();
    let blocks = effect_blocks(model, params)?;
    let m_within = inverse_spd(&blocks.d - &blocks.e, "effects contrast precision")?;
    let m_mean = inverse_spd(
        &blocks.d + &blocks.e * (n as f64 - 1.0),
        "effects mean precision",
    )?;
    let w = weighted_residuals(model, params, latent, false, false);
    let couplings = (0..n)
        .map(|i| effect_beta_coupling(model, blocks.k, params.rho, i))
        .collect();
    Ok(CollapsedSystem {
        effect_terms: effect_linear_terms(blocks.k, n, &w),
        beta_precision: beta_precision(model, params.rho, prior_variance),
        beta_linear: regressor_projection(model, &w),
        blocks,
        m_within,
        m_mean,
        couplings,
    })
}

fn mean_of<T>(items: &[T], zero: T) -> T
where
    T: Clone + std::ops::Add<Output = T> + std::ops::Div<f64, Output = T>,
    for<'a> &'a T: std::ops::Add<&'a T, Output = T>,
{
    let sum = items.iter().fold(zero, |acc, x| &acc + x);
    sum / items.len() as f64
}

impl CollapsedSystem {
    /// Precision and linear term of β with the effects integrated out.
    fn marginal_beta(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.couplings.len() as f64;
        let p = self.beta_linear.len();
        let k = self.blocks.k;
        let f_bar = mean_of(&self.couplings, DMatrix::zeros(k, p));
        let l_bar = mean_of(&self.effect_terms, DVector::zeros(k));
        let mut q = self.beta_precision.clone();
        let mut l = self.beta_linear.clone();
        for (f, lu) in self.couplings.iter().zip(&self.effect_terms) {
            let fc = f - &f_bar;
            let ft_m = fc.transpose() * &self.m_within;
            q -= &ft_m * &fc;
            l -= &ft_m * (lu - &l_bar);
        }
        let ft_m = f_bar.transpose() * &self.m_mean * n;
        q -= &ft_m * &f_bar;
        l -= &ft_m * &l_bar;
        // restore exact symmetry lost to rounding
        let q = (&q + q.transpose()) * 0.5;
        (q, l)
    }

    /// Exact draw of all effects given β.
    fn draw_effects<R: Rng + ?Sized>(
        &self,
        beta: &DVector<f64>,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>> {
        let k = self.blocks.k;
        let resid: Vec<DVector<f64>> = self
            .couplings
            .iter()
            .zip(&self.effect_terms)
            .map(|(f, lu)| lu - f * beta)
            .collect();
        let r_bar = mean_of(&resid, DVector::zeros(k));
        let z: Vec<DVector<f64>> = (0..resid.len()).map(|_| standard_normals(k, rng)).collect();
        let z_bar = mean_of(&z, DVector::zeros(k));
        let l_within = self
            .m_within
            .clone()
            .cholesky()
            .expect("checked in construction")
            .l();
        let l_mean = self
            .m_mean
            .clone()
            .cholesky()
            .expect("checked in construction")
            .l();
        let shared = &self.m_mean * &r_bar + &l_mean * &z_bar;
        Ok(resid
            .iter()
            .zip(&z)
            .map(|(r, zi)| &self.m_within * (r - &r_bar) + &l_within * (zi - &z_bar) + &shared)
            .collect())
    }
}

/// Mean and covariance of β given the latent matrix, Σ_ab and ρ, with the
/// sender/receiver effects integrated out.
pub fn collapsed_beta_moments(
    state: &ChainState,
    model: &ModelData<'_>,
    config: &SamplerConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sys = collapsed_system(
        model,
        &state.params,
        &state.latent,
        config.prior_beta_variance,
    )?;
    let (q, l) = sys.marginal_beta();
    let chol = q.cholesky().ok_or_else(|| {
        Error::Singular("marginal beta precision is not positive definite".into())
    })?;
    Ok((chol.solve(&l), chol.inverse()))
}

/// Draws β. In collapsed mode the sender/receiver effects are integrated out
/// and then redrawn exactly given the new β, so (β, a, b) move as one block.
pub fn gibbs_update_beta(
    state: &mut ChainState,
    model: &ModelData<'_>,
    config: &SamplerConfig,
) -> Result<()> {
    if model.p() == 0 && !config.collapsed() {
        return Ok(());
    }
    let ChainState {
        params,
        latent,
        rng,
        ..
    } = state;
    if config.collapsed() {
        let sys = collapsed_system(model, params, latent, config.prior_beta_variance)?;
        let beta = if model.p() > 0 {
            let (q, l) = sys.marginal_beta();
            draw_from_precision(q, &l, rng, "marginal beta")?
        } else {
            DVector::zeros(0)
        };
        let effects = sys.draw_effects(&beta, rng)?;
        params.beta = beta.iter().copied().collect();
        for (i, u) in effects.iter().enumerate() {
            write_effects(params, sys.blocks.k, i, u);
        }
    } else {
        let w = weighted_residuals(model, params, latent, false, true);
        let l = regressor_projection(model, &w);
        let q = beta_precision(model, params.rho, config.prior_beta_variance);
        params.beta = draw_from_precision(q, &l, rng, "beta")?
            .iter()
            .copied()
            .collect();
    }
    Ok(())
}

/// Mean and covariance of node i's effects given everything else.
pub fn effect_conditional(
    state: &ChainState,
    model: &ModelData<'_>,
    i: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let blocks = effect_blocks(model, &state.params)?;
    let w = weighted_residuals(model, &state.params, &state.latent, true, false);
    let terms = effect_linear_terms(blocks.k, model.n(), &w);
    let others = (0..model.n())
        .filter(|&j| j != i)
        .fold(DVector::zeros(blocks.k), |acc, j| {
            acc + read_effects(&state.params, blocks.k, j)
        });
    let cov = inverse_spd(blocks.d.clone(), "node effect precision")?;
    let mean = &cov * (&terms[i] - &blocks.e * others);
    Ok((mean, cov))
}

/// One sweep over nodes, drawing (a_i, b_i) jointly from their bivariate
/// normal full conditional. Under the rank likelihood a stays at zero and
/// only b_i is drawn.
pub fn gibbs_update_ab(state: &mut ChainState, model: &ModelData<'_>) -> Result<()> {
    let n = model.n();
    let blocks = effect_blocks(model, &state.params)?;
    let k = blocks.k;
    let w = weighted_residuals(model, &state.params, &state.latent, true, false);
    let terms = effect_linear_terms(k, n, &w);
    let chol =
        blocks.d.clone().cholesky().ok_or_else(|| {
            Error::Numerical("node effect precision is not positive definite".into())
        })?;
    let cov_l = chol
        .inverse()
        .cholesky()
        .expect("inverse of SPD is SPD")
        .l();
    let ChainState { params, rng, .. } = state;
    let mut total = (0..n).fold(DVector::zeros(k), |acc, j| acc + read_effects(params, k, j));
    for (i, term) in terms.iter().enumerate() {
        let current = read_effects(params, k, i);
        let others = &total - &current;
        let mean = chol.solve(&(term - &blocks.e * others));
        let draw = mean + &cov_l * standard_normals(k, rng);
        total += &draw - &current;
        write_effects(params, k, i, &draw);
    }
    Ok(())
}

/// Translation move on (a_i, y_i·): adds the same c to a_i and to every
/// latent entry of row i. Residuals are unchanged, so c follows the
/// conditional prior of a_i given b_i, restricted to shifts that keep the row
/// in the constraint set. In censored rows this lets a_i move in large steps
/// that single-site updates can only take slowly. Not used under the rank
/// likelihood, where a is fixed at zero.
pub fn shift_sender_rows(state: &mut ChainState, model: &ModelData<'_>) -> Result<()> {
    let family = model.family;
    if family == LikelihoodFamily::Rank {
        return Ok(());
    }
    let n = model.n();
    let ChainState {
        params,
        latent,
        rng,
        ..
    } = state;
    let s = &params.sigma_ab;
    let slope = s[(0, 1)] / s[(1, 1)];
    let sd = (s[(0, 0)] - s[(0, 1)] * slope).max(0.0).sqrt();
    if !(sd > 0.0) {
        return Ok(());
    }
    for (i, layout) in model.layouts.iter().enumerate() {
        let row = latent.row(i);
        let min_ranked = layout
            .ranked
            .iter()
            .map(|&j| row[j])
            .fold(f64::INFINITY, f64::min);
        let max_unranked = layout
            .unranked
            .iter()
            .map(|&j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let capped = match family {
            LikelihoodFamily::Binary => true,
            _ => !layout.censored,
        };
        let lo = -min_ranked;
        let hi = if capped { -max_unranked } else { f64::INFINITY };
        let a0 = params.a[i];
        let iv = ConstraintInterval::new(a0 + lo, a0 + hi);
        if !(iv.lo < iv.hi) {
            continue;
        }
        let a1 = sample_truncated_normal(slope * params.b[i], sd, iv, rng)?;
        let c = a1 - a0;
        let ok = layout.ranked.iter().all(|&j| row[j] + c > 0.0)
            && (!capped || layout.unranked.iter().all(|&j| row[j] + c <= 0.0));
        if !ok {
            continue;
        }
        for j in (0..n).filter(|&j| j != i) {
            latent.set(i, j, latent.get(i, j) + c);
        }
        params.a[i] = a1;
    }
    Ok(())
}

/// Conjugate inverse-Wishart update of Σ_ab. Under the rank likelihood only
/// the receiver variance is updated, from its inverse-gamma marginal.
pub fn gibbs_update_sigma_ab(
    state: &mut ChainState,
    model: &ModelData<'_>,
    config: &SamplerConfig,
) -> Result<()> {
    let n = model.n();
    let prior = &config.prior_sigma_ab;
    let ChainState { params, rng, .. } = state;
    if model.family == LikelihoodFamily::Rank {
        let ss: f64 = params.b.iter().map(|b| b * b).sum();
        let shape = 0.5 * (prior.df - 1.0 + n as f64);
        let rate = 0.5 * (prior.scale[(1, 1)] + ss);
        let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(e.to_string()))?;
        params.sigma_ab[(1, 1)] = 1.0 / g.sample(rng);
        return Ok(());
    }
    let mut scale = prior.scale;
    for i in 0..n {
        let (a, b) = (params.a[i], params.b[i]);
        scale[(0, 0)] += a * a;
        scale[(0, 1)] += a * b;
        scale[(1, 0)] += a * b;
        scale[(1, 1)] += b * b;
    }
    if scale.cholesky().is_none() {
        return Err(Error::Numerical(format!(
            "posterior inverse-Wishart scale lost definiteness: {scale:?}"
        )));
    }
    params.sigma_ab = sample_inverse_wishart(prior.df + n as f64, &scale, rng)?;
    Ok(())
}

/// Log-likelihood of ρ given dyad residual statistics: `sum_sq` is
/// Σ (e_ij² + e_ji²) and `sum_cross` is Σ e_ij e_ji over `dyads` unordered pairs.
pub fn rho_log_likelihood(rho: f64, sum_sq: f64, sum_cross: f64, dyads: f64) -> f64 {
    let det = 1.0 - rho * rho;
    -0.5 * dyads * det.ln() - (sum_sq - 2.0 * rho * sum_cross) / (2.0 * det)
}

/// Metropolis-Hastings step for ρ on the Fisher-z scale under a uniform
/// prior on (-1, 1). Returns whether the proposal was accepted.
pub fn gibbs_update_rho(
    state: &mut ChainState,
    model: &ModelData<'_>,
    config: &SamplerConfig,
) -> Result<bool> {
    if config.rho_proposal_sd == 0.0 {
        return Ok(false);
    }
    let n = model.n();
    let ChainState {
        params,
        latent,
        rng,
        ..
    } = state;
    let mu = params.mean_matrix(n, &model.x);
    let (mut sum_sq, mut sum_cross) = (0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let e1 = latent.get(i, j) - mu[i * n + j];
            let e2 = latent.get(j, i) - mu[j * n + i];
            sum_sq += e1 * e1 + e2 * e2;
            sum_cross += e1 * e2;
        }
    }
    let dyads = (n * (n - 1) / 2) as f64;
    let z = params.rho.atanh();
    let step: f64 = rng.sample(StandardNormal);
    let proposal = (z + config.rho_proposal_sd * step).tanh();
    if !(proposal.abs() < 1.0) {
        return Ok(false);
    }
    // the uniform prior on ρ becomes (1 - ρ²) on the z scale
    let log_ratio = rho_log_likelihood(proposal, sum_sq, sum_cross, dyads)
        - rho_log_likelihood(params.rho, sum_sq, sum_cross, dyads)
        + (1.0 - proposal * proposal).ln()
        - (1.0 - params.rho * params.rho).ln();
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        params.rho = proposal;
        Ok(true)
    } else {
        Ok(false)
    }
}
