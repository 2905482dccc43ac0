//! Constrained Gibbs sampler for the social relations regression model.
//!
//! One sweep updates, in order: the latent relations (each drawn from its
//! conditional normal truncated to the family's interval), the regression
//! coefficients, the sender/receiver effects, their covariance, and the
//! within-dyad correlation.

mod init;
mod steps;
pub mod truncnorm;
mod wishart;

use nalgebra::{DMatrix, Matrix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{check_row, RowLayout};
use crate::error::{Error, Result};
use crate::net::{DesignData, LatentMatrix, LikelihoodFamily, ScoreMatrix, SrmParams};
use crate::posterior::{PosteriorSample, SampleMeta};

pub use init::initialize_latent;
pub use steps::{
    collapsed_beta_moments, effect_conditional, gibbs_update_ab, gibbs_update_beta,
    gibbs_update_rho, gibbs_update_sigma_ab, gibbs_update_y, rho_log_likelihood, shift_sender_rows,
};
pub use truncnorm::sample_truncated_normal;
pub use wishart::{sample_inverse_wishart, sample_wishart};

/// How the regression coefficients are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaUpdate {
    /// β from its full conditional given the current sender/receiver effects.
    Conditional,
    /// β with the effects integrated out, followed by an exact draw of the
    /// effects given β: a joint block update of (β, a, b).
    Collapsed,
}

/// Which blocks a sweep resamples. Disabled blocks keep their initial values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Updates {
    pub latent: bool,
    pub beta: bool,
    pub effects: bool,
    /// Joint translation of each sender effect with its latent row.
    pub row_shift: bool,
    pub sigma_ab: bool,
    pub rho: bool,
}

impl Default for Updates {
    fn default() -> Self {
        Updates {
            latent: true,
            beta: true,
            effects: true,
            row_shift: true,
            sigma_ab: true,
            rho: true,
        }
    }
}

/// Inverse-Wishart prior on the sender/receiver covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseWishartPrior {
    pub df: f64,
    pub scale: Matrix2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub family: LikelihoodFamily,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Independent stream for this chain; chains sharing a seed differ here.
    pub chain_index: u64,
    pub prior_beta_variance: f64,
    pub prior_sigma_ab: InverseWishartPrior,
    pub rho_proposal_sd: f64,
    pub beta_update: BetaUpdate,
    pub updates: Updates,
    /// Check constraint-set membership after every latent sweep.
    pub validate: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            family: LikelihoodFamily::Frn,
            n_iter: 100_500,
            burn_in: 500,
            thin: 25,
            seed: 0,
            chain_index: 0,
            prior_beta_variance: 100.0,
            prior_sigma_ab: InverseWishartPrior {
                df: 4.0,
                scale: Matrix2::identity(),
            },
            rho_proposal_sd: 0.1,
            beta_update: BetaUpdate::Collapsed,
            updates: Updates::default(),
            validate: cfg!(debug_assertions),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "need burn_in < n_iter (got {} and {})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.prior_beta_variance > 0.0) {
            return Err(Error::Config("prior_beta_variance must be positive".into()));
        }
        if !(self.prior_sigma_ab.df >= 3.0) {
            return Err(Error::Config(
                "inverse-Wishart degrees of freedom must be >= 3".into(),
            ));
        }
        let s = &self.prior_sigma_ab.scale;
        if s.cholesky().is_none() || (s[(0, 1)] - s[(1, 0)]).abs() > 1e-12 {
            return Err(Error::Config(
                "inverse-Wishart scale must be symmetric positive definite".into(),
            ));
        }
        if !(self.rho_proposal_sd >= 0.0) {
            return Err(Error::Config("rho_proposal_sd must be nonnegative".into()));
        }
        Ok(())
    }

    /// Number of saved draws: (n_iter - burn_in) / thin.
    pub fn saved_draws(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    fn collapsed(&self) -> bool {
        self.beta_update == BetaUpdate::Collapsed && self.updates.effects
    }
}

/// Current values of the chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub params: SrmParams,
    pub latent: LatentMatrix,
    pub iteration: usize,
    pub rng: ChaCha8Rng,
}

/// Observed scores and design together with the sufficient quantities the
/// parameter updates reuse every sweep.
#[derive(Debug, Clone)]
pub struct ModelData<'a> {
    pub scores: &'a ScoreMatrix,
    pub design: &'a DesignData,
    pub family: LikelihoodFamily,
    pub(crate) layouts: Vec<RowLayout>,
    /// Regressor vector of every ordered pair, `(i * n + j) * p`.
    pub(crate) x: Vec<f64>,
    /// Σ_{i≠j} x_ij x_ij'.
    pub(crate) gram_same: DMatrix<f64>,
    /// Σ_{i≠j} x_ij x_ji'.
    pub(crate) gram_cross: DMatrix<f64>,
    /// Σ_j x_ij per node (n x p).
    pub(crate) row_sums: DMatrix<f64>,
    /// Σ_i x_ij per node (n x p).
    pub(crate) col_sums: DMatrix<f64>,
}

impl<'a> ModelData<'a> {
    pub fn new(
        scores: &'a ScoreMatrix,
        design: &'a DesignData,
        family: LikelihoodFamily,
    ) -> Result<Self> {
        let n = scores.n();
        if design.n() != n {
            return Err(Error::Dimension(format!(
                "scores cover {n} nodes but the design covers {}",
                design.n()
            )));
        }
        if n < 2 {
            return Err(Error::Dimension("need at least two nodes".into()));
        }
        if family == LikelihoodFamily::Rank && (design.has_intercept() || design.p_row() > 0) {
            let mut offending: Vec<String> = Vec::new();
            if design.has_intercept() {
                offending.push("intercept".into());
            }
            offending.extend(design.row_names().iter().map(|s| format!("row_{s}")));
            return Err(Error::RankRowEffects(offending.join(", ")));
        }
        let p = design.p();
        let x = design.dense_regressors();
        let mut gram_same = DMatrix::zeros(p, p);
        let mut gram_cross = DMatrix::zeros(p, p);
        let mut row_sums = DMatrix::zeros(n, p);
        let mut col_sums = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let xij = &x[(i * n + j) * p..(i * n + j + 1) * p];
                let xji = &x[(j * n + i) * p..(j * n + i + 1) * p];
                for r in 0..p {
                    row_sums[(i, r)] += xij[r];
                    col_sums[(j, r)] += xij[r];
                    for c in 0..p {
                        gram_same[(r, c)] += xij[r] * xij[c];
                        gram_cross[(r, c)] += xij[r] * xji[c];
                    }
                }
            }
        }
        Ok(ModelData {
            scores,
            design,
            family,
            layouts: RowLayout::all(scores),
            x,
            gram_same,
            gram_cross,
            row_sums,
            col_sums,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    #[inline]
    pub(crate) fn regressors(&self, i: usize, j: usize) -> &[f64] {
        let (n, p) = (self.n(), self.p());
        &self.x[(i * n + j) * p..(i * n + j + 1) * p]
    }

    /// Whether the current latent matrix lies in the family's constraint set.
    pub fn check_membership(&self, y: &LatentMatrix) -> Option<String> {
        let mut violations = Vec::new();
        for (i, layout) in self.layouts.iter().enumerate() {
            check_row(i, layout, y.row(i), self.family, &mut violations);
            if !violations.is_empty() {
                return Some(format!("{:?}", violations[0]));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub rho_proposed: usize,
    pub rho_accepted: usize,
    /// Latent sweeps whose result was checked against the constraint set.
    pub membership_checks: usize,
}

impl ChainDiagnostics {
    pub fn rho_acceptance_rate(&self) -> f64 {
        if self.rho_proposed == 0 {
            0.0
        } else {
            self.rho_accepted as f64 / self.rho_proposed as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub sample: PosteriorSample,
    pub diagnostics: ChainDiagnostics,
    pub final_state: ChainState,
}

/// Names of the recorded columns: regression coefficients, then the
/// covariance entries and ρ.
pub fn parameter_names(design: &DesignData) -> Vec<String> {
    let mut names = design.coefficient_names();
    names.extend(["sigma_aa", "sigma_ab", "sigma_bb", "rho"].map(String::from));
    names
}

/// The chain's random stream: `seed` selects the run, `chain_index` the chain.
pub fn chain_rng(seed: u64, chain_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index);
    rng
}

/// Runs one chain from the default starting point: feasible latent values
/// from sorted normal draws, β = 0, a = b = 0, Σ_ab = I, ρ = 0.
pub fn run_chain(
    s: &ScoreMatrix,
    design: &DesignData,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    run_chain_from(s, design, config, None)
}

/// Like [`run_chain`], optionally starting the parameters at `init`.
pub fn run_chain_from(
    s: &ScoreMatrix,
    design: &DesignData,
    config: &SamplerConfig,
    init: Option<SrmParams>,
) -> Result<ChainOutput> {
    config.validate()?;
    let model = ModelData::new(s, design, config.family)?;
    let mut rng = chain_rng(config.seed, config.chain_index);
    let latent = initialize_latent(&model, &mut rng)?;
    let mut params = init.unwrap_or_else(|| SrmParams::initial(s.n(), design.p()));
    if params.beta.len() != design.p() || params.a.len() != s.n() || params.b.len() != s.n() {
        return Err(Error::Dimension(
            "initial parameters do not match the design".into(),
        ));
    }
    if config.family == LikelihoodFamily::Rank {
        params.a.iter_mut().for_each(|a| *a = 0.0);
        params.sigma_ab[(0, 1)] = 0.0;
        params.sigma_ab[(1, 0)] = 0.0;
    }
    params.validate()?;
    let state = ChainState {
        params,
        latent,
        iteration: 0,
        rng,
    };
    continue_chain(&model, state, config)
}

/// Runs `config.n_iter` sweeps from an explicit state.
pub fn continue_chain(
    model: &ModelData<'_>,
    mut state: ChainState,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    config.validate()?;
    if let Some(detail) = model.check_membership(&state.latent) {
        return Err(Error::ConstraintViolation {
            iteration: state.iteration,
            detail,
        });
    }
    let names = parameter_names(model.design);
    let mut draws = Vec::with_capacity(config.saved_draws());
    let mut diagnostics = ChainDiagnostics::default();
    for it in 0..config.n_iter {
        sweep(model, &mut state, config, &mut diagnostics)?;
        if it >= config.burn_in && (it + 1 - config.burn_in).is_multiple_of(config.thin) {
            draws.push(record(&state.params));
        }
    }
    let sample = PosteriorSample::new(
        names,
        draws,
        SampleMeta {
            family: Some(config.family),
            seed: config.seed,
            scenario: String::new(),
        },
    )?;
    Ok(ChainOutput {
        sample,
        diagnostics,
        final_state: state,
    })
}

/// One systematic-scan sweep.
pub fn sweep(
    model: &ModelData<'_>,
    state: &mut ChainState,
    config: &SamplerConfig,
    diagnostics: &mut ChainDiagnostics,
) -> Result<()> {
    let u = config.updates;
    if u.latent {
        gibbs_update_y(state, model)?;
        if config.validate {
            diagnostics.membership_checks += 1;
            if let Some(detail) = model.check_membership(&state.latent) {
                return Err(Error::ConstraintViolation {
                    iteration: state.iteration,
                    detail,
                });
            }
        }
    }
    if u.beta {
        gibbs_update_beta(state, model, config)?;
    }
    if u.effects {
        gibbs_update_ab(state, model)?;
        if u.row_shift && u.latent {
            shift_sender_rows(state, model)?;
        }
    }
    if u.sigma_ab {
        gibbs_update_sigma_ab(state, model, config)?;
    }
    if u.rho {
        diagnostics.rho_proposed += usize::from(config.rho_proposal_sd > 0.0);
        if gibbs_update_rho(state, model, config)? {
            diagnostics.rho_accepted += 1;
        }
    }
    state.iteration += 1;
    Ok(())
}

fn record(params: &SrmParams) -> Vec<f64> {
    let mut row = params.beta.clone();
    row.extend([
        params.sigma_ab[(0, 0)],
        params.sigma_ab[(0, 1)],
        params.sigma_ab[(1, 1)],
        params.rho,
    ]);
    row
}
