//! Synthetic social relations data and its censored ranked-nomination view.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::{DesignData, LatentMatrix, ScoreMatrix, SrmParams};
use crate::sampler::chain_rng;

/// The group-indicator dyad covariate z_i z_j is divided by this to get unit sd.
pub const GROUP_SCALE: f64 = 0.42;

/// How covariates are drawn. Only one recipe exists: standard normal row,
/// column and dyad covariates plus a scaled shared-group indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateRecipe {
    #[default]
    Standard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub n: usize,
    pub m: u32,
    /// Intercept, row, column, first dyad, group dyad.
    pub beta_true: [f64; 5],
    pub sigma_ab_true: Matrix2<f64>,
    pub rho_true: f64,
    pub recipe: CovariateRecipe,
    pub replicates: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n = {} must be at least 2", self.n)));
        }
        if self.m < 1 || self.m as usize > self.n - 1 {
            return Err(Error::Config(format!(
                "m = {} must lie in 1..={}",
                self.m,
                self.n - 1
            )));
        }
        if !(self.rho_true > -1.0 && self.rho_true < 1.0) {
            return Err(Error::Config(format!(
                "rho = {} outside (-1, 1)",
                self.rho_true
            )));
        }
        let s = &self.sigma_ab_true;
        if s[(0, 0)] < 0.0 || s[(1, 1)] < 0.0 || s.determinant() < -1e-12 || s[(0, 1)] != s[(1, 0)]
        {
            return Err(Error::Config(
                "sigma_ab must be symmetric positive semidefinite".into(),
            ));
        }
        Ok(())
    }

    /// Identifier of one replicate, used for directory names.
    pub fn dataset_id(&self, replicate: usize) -> String {
        format!("{}_r{}", self.name, replicate + 1)
    }
}

/// One simulated network: latent relations, covariates and the truth.
#[derive(Debug, Clone)]
pub struct SimulatedNetwork {
    pub latent: LatentMatrix,
    pub design: DesignData,
    pub truth: SrmParams,
}

impl SimulatedNetwork {
    pub fn scores(&self, m: u32) -> Result<ScoreMatrix> {
        frn_transform(&self.latent, &vec![m; self.latent.n()])
    }
}

/// Lower Cholesky factor of a 2x2 covariance that may be singular.
fn psd_factor(s: &Matrix2<f64>) -> Matrix2<f64> {
    let l11 = s[(0, 0)].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { s[(1, 0)] / l11 } else { 0.0 };
    let l22 = (s[(1, 1)] - l21 * l21).max(0.0).sqrt();
    Matrix2::new(l11, 0.0, l21, l22)
}

/// Draws replicate `replicate` of a scenario. Replicates use separate
/// streams of the scenario seed, so they are reproducible one by one.
pub fn simulate_srm(spec: &ScenarioSpec, replicate: usize) -> Result<SimulatedNetwork> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = chain_rng(spec.seed, replicate as u64);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };

    let xr: Vec<f64> = (0..n).map(|_| normal()).collect();
    let xc: Vec<f64> = (0..n).map(|_| normal()).collect();
    let d1: Vec<f64> = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { normal() })
        .collect();
    let l = psd_factor(&spec.sigma_ab_true);
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        let (z1, z2) = (normal(), normal());
        a[i] = l[(0, 0)] * z1;
        b[i] = l[(1, 0)] * z1 + l[(1, 1)] * z2;
    }
    let group: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
        .collect();
    let d2: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if i == j {
                0.0
            } else {
                group[i] * group[j] / GROUP_SCALE
            }
        })
        .collect();
    let design = DesignData::new(
        n,
        true,
        vec![("xr".into(), xr)],
        vec![("xc".into(), xc)],
        vec![("d1".into(), d1), ("d2".into(), d2)],
    )?;
    let truth = SrmParams {
        beta: spec.beta_true.to_vec(),
        a,
        b,
        sigma_ab: spec.sigma_ab_true,
        rho: spec.rho_true,
    };
    let latent = simulate_latent(&design, &truth, &mut rng)?;
    Ok(SimulatedNetwork {
        latent,
        design,
        truth,
    })
}

/// Latent relations y_ij = x_ij'β + a_i + b_j + e_ij given all parameters,
/// with unit-variance dyad errors correlated ρ within each pair.
pub fn simulate_latent<R: Rng + ?Sized>(
    design: &DesignData,
    params: &SrmParams,
    rng: &mut R,
) -> Result<LatentMatrix> {
    let n = design.n();
    if params.beta.len() != design.p() || params.a.len() != n || params.b.len() != n {
        return Err(Error::Dimension(
            "parameters do not match the design".into(),
        ));
    }
    let rho = params.rho;
    let tail = (1.0 - rho * rho).max(0.0).sqrt();
    let mut y = params.mean_matrix(n, &design.dense_regressors());
    for i in 0..n {
        for j in i + 1..n {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            y[i * n + j] += z1;
            y[j * n + i] += rho * z1 + tail * z2;
        }
    }
    LatentMatrix::from_vec(n, y)
}

/// Censored ranked scores implied by latent relations: the k-th largest
/// positive value of row i scores m_i - k + 1 when k <= m_i, everything else
/// scores 0. Exact ties are ordered by column index.
pub fn frn_transform(y: &LatentMatrix, m_per_row: &[u32]) -> Result<ScoreMatrix> {
    let n = y.n();
    if m_per_row.len() != n {
        return Err(Error::Dimension(format!(
            "{} nomination bounds for {n} rows",
            m_per_row.len()
        )));
    }
    let mut scores = vec![None; n * n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let row = y.row(i);
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&j, &k| row[k].total_cmp(&row[j]).then(j.cmp(&k)));
        for (rank, &j) in order.iter().enumerate() {
            let m = m_per_row[i] as usize;
            let s = if row[j] > 0.0 && rank < m {
                (m - rank) as u32
            } else {
                0
            };
            scores[i * n + j] = Some(s);
        }
    }
    ScoreMatrix::new(n, scores, m_per_row.to_vec())
}

/// Number of positive latent relations in each row.
pub fn uncensored_outdegrees(y: &LatentMatrix) -> Vec<usize> {
    let n = y.n();
    (0..n)
        .map(|i| {
            y.row(i)
                .iter()
                .enumerate()
                .filter(|&(j, v)| j != i && *v > 0.0)
                .count()
        })
        .collect()
}

/// Share of rows with more positive relations than `m` allows to be listed.
pub fn censoring_rate(y: &LatentMatrix, m: u32) -> f64 {
    let d = uncensored_outdegrees(y);
    d.iter().filter(|&&k| k > m as usize).count() as f64 / d.len() as f64
}

const DEFAULT_SEED: u64 = 20_091_104;
const REPLICATES: usize = 8;
const CALIBRATION_DRAWS: usize = 100_000;

fn standard_spec(name: String, m: u32, intercept: f64, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        name,
        n: 100,
        m,
        beta_true: [intercept, 1.0, 1.0, 1.0, 1.0],
        sigma_ab_true: Matrix2::new(1.0, 0.5, 0.5, 1.0),
        rho_true: 0.9,
        recipe: CovariateRecipe::Standard,
        replicates: REPLICATES,
        seed,
    }
}

/// Intercept making the expected number of positive relations per row equal
/// to `target`, found by bisection on a fixed Monte Carlo sample of the
/// linear predictor without intercept.
pub fn calibrate_intercept(spec: &ScenarioSpec, target: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = chain_rng(seed, 0);
    let b = spec.beta_true;
    let (saa, sbb) = (spec.sigma_ab_true[(0, 0)], spec.sigma_ab_true[(1, 1)]);
    // a_i and b_j belong to different nodes, so they enter independently
    let eta: Vec<f64> = (0..draws)
        .map(|_| {
            let mut z = || -> f64 { rng.sample(StandardNormal) };
            let (xr, xc, d1, a, bj, e) = (z(), z(), z(), z(), z(), z());
            let group = rng.random_bool(0.5) && rng.random_bool(0.5);
            let d2 = if group { 1.0 / GROUP_SCALE } else { 0.0 };
            b[1] * xr + b[2] * xc + b[3] * d1 + b[4] * d2 + saa.sqrt() * a + sbb.sqrt() * bj + e
        })
        .collect();
    let rows = (spec.n - 1) as f64;
    let mean_outdegree =
        |b0: f64| rows * eta.iter().filter(|&&v| v + b0 > 0.0).count() as f64 / draws as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_outdegree(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The likelihood-comparison design (m = 5 and 15 with intercept -3.26)
/// followed by the rank-information design (m = 5, 15, 30, 50 with the
/// intercept tuned so that the mean uncensored outdegree is m).
pub fn scenario_presets() -> Vec<ScenarioSpec> {
    let mut out: Vec<ScenarioSpec> = [5, 15]
        .iter()
        .map(|&m| {
            standard_spec(
                format!("comparison_m{m}"),
                m,
                -3.26,
                DEFAULT_SEED + m as u64,
            )
        })
        .collect();
    out.extend(rank_information_presets());
    out
}

pub fn rank_information_presets() -> Vec<ScenarioSpec> {
    [5u32, 15, 30, 50]
        .iter()
        .map(|&m| {
            let mut spec = standard_spec(
                format!("information_m{m}"),
                m,
                0.0,
                DEFAULT_SEED + 1000 + m as u64,
            );
            spec.beta_true[0] = calibrate_intercept(&spec, m as f64, CALIBRATION_DRAWS, spec.seed);
            spec
        })
        .collect()
}

pub fn preset(name: &str) -> Option<ScenarioSpec> {
    scenario_presets().into_iter().find(|s| s.name == name)
}
