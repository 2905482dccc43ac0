//! Posterior summaries, MCMC diagnostics and cross-likelihood comparisons.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::net::LikelihoodFamily;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleMeta {
    pub family: Option<LikelihoodFamily>,
    pub seed: u64,
    pub scenario: String,
}

/// Saved draws, one row per saved iteration and one column per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    names: Vec<String>,
    draws: Vec<Vec<f64>>,
    pub meta: SampleMeta,
}

impl PosteriorSample {
    pub fn new(names: Vec<String>, draws: Vec<Vec<f64>>, meta: SampleMeta) -> Result<Self> {
        if let Some((k, row)) = draws
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != names.len())
        {
            return Err(Error::Dimension(format!(
                "draw {k} has {} values for {} parameters",
                row.len(),
                names.len()
            )));
        }
        Ok(PosteriorSample { names, draws, meta })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn draws(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[k]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|k| self.column(k))
    }

    /// Same draws in a different row order.
    pub fn reordered(&self, order: &[usize]) -> PosteriorSample {
        PosteriorSample {
            names: self.names.clone(),
            draws: order.iter().map(|&k| self.draws[k].clone()).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Linear interpolation between order statistics (sample quantile type 7).
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(values: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    levels
        .iter()
        .map(|&p| quantile_sorted(&sorted, p))
        .collect()
}

/// Default summary levels: 2.5%, 50%, 97.5%.
pub const DEFAULT_LEVELS: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterQuantiles {
    pub name: String,
    /// One value per requested level, same order.
    pub values: Vec<f64>,
}

impl ParameterQuantiles {
    pub fn median(&self, levels: &[f64]) -> Option<f64> {
        levels
            .iter()
            .position(|&l| l == 0.5)
            .map(|k| self.values[k])
    }
}

pub fn quantile_intervals(
    sample: &PosteriorSample,
    levels: &[f64],
) -> Result<Vec<ParameterQuantiles>> {
    if sample.is_empty() {
        return Err(Error::Dimension("cannot summarize an empty sample".into()));
    }
    Ok(sample
        .names()
        .iter()
        .enumerate()
        .map(|(k, name)| ParameterQuantiles {
            name: name.clone(),
            values: quantiles(&sample.column(k), levels),
        })
        .collect())
}

/// Effective sample size of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ess {
    Value(f64),
    /// The chain never moved; no autocorrelation can be estimated.
    Degenerate,
}

impl Ess {
    pub fn value(self) -> Option<f64> {
        match self {
            Ess::Value(v) => Some(v),
            Ess::Degenerate => None,
        }
    }
}

/// Minimum chain length accepted by [`effective_sample_size`].
pub const MIN_ESS_DRAWS: usize = 100;

/// ESS of a single chain, truncating the autocorrelation sum with the
/// initial positive sequence of paired lags.
pub fn ess_of(values: &[f64]) -> Result<Ess> {
    let n = values.len();
    if n < MIN_ESS_DRAWS {
        return Err(Error::Dimension(format!(
            "ESS needs at least {MIN_ESS_DRAWS} draws, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = autocov(0);
    if !(gamma0 > f64::EPSILON * mean.abs().max(1.0)) {
        return Ok(Ess::Degenerate);
    }
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / gamma0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    Ok(Ess::Value(n as f64 / tau.max(1.0 / n as f64)))
}

pub fn effective_sample_size(sample: &PosteriorSample) -> Result<Vec<(String, Ess)>> {
    sample
        .names()
        .iter()
        .enumerate()
        .map(|(k, name)| Ok((name.clone(), ess_of(&sample.column(k))?)))
        .collect()
}

/// For each named true value, E[(β - β*)² | F] / E[(β - β*)² | C]: how much
/// more tightly the first sample concentrates around the truth.
pub fn concentration_ratio(
    sample_f: &PosteriorSample,
    sample_c: &PosteriorSample,
    truth: &[(String, f64)],
) -> Result<Vec<(String, f64)>> {
    let msd = |s: &PosteriorSample, name: &str, t: f64| -> Result<f64> {
        let col = s
            .column_by_name(name)
            .ok_or_else(|| Error::Dimension(format!("parameter '{name}' missing from sample")))?;
        if col.is_empty() {
            return Err(Error::Dimension("empty sample".into()));
        }
        Ok(col.iter().map(|v| (v - t) * (v - t)).sum::<f64>() / col.len() as f64)
    };
    truth
        .iter()
        .map(|(name, t)| {
            Ok((
                name.clone(),
                msd(sample_f, name, *t)? / msd(sample_c, name, *t)?,
            ))
        })
        .collect()
}

/// Coefficient groups of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EffectGroup {
    Intercept,
    Row,
    Column,
    MeanZeroDyadic,
    OtherDyadic,
}

impl EffectGroup {
    pub const ALL: [EffectGroup; 5] = [
        EffectGroup::Intercept,
        EffectGroup::Row,
        EffectGroup::Column,
        EffectGroup::MeanZeroDyadic,
        EffectGroup::OtherDyadic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EffectGroup::Intercept => "intercept",
            EffectGroup::Row => "row",
            EffectGroup::Column => "column",
            EffectGroup::MeanZeroDyadic => "mean-zero dyadic",
            EffectGroup::OtherDyadic => "other dyadic",
        }
    }

    /// Groups a coefficient by its column name; `mean_zero` lists the dyad
    /// covariates (without the `dyad_` prefix) that are centered.
    pub fn classify(name: &str, mean_zero: &[String]) -> Option<EffectGroup> {
        if name == "intercept" {
            Some(EffectGroup::Intercept)
        } else if name.starts_with("row_") {
            Some(EffectGroup::Row)
        } else if name.starts_with("col_") {
            Some(EffectGroup::Column)
        } else {
            name.strip_prefix("dyad_").map(|d| {
                if mean_zero.iter().any(|m| m == d) {
                    EffectGroup::MeanZeroDyadic
                } else {
                    EffectGroup::OtherDyadic
                }
            })
        }
    }
}

/// Geometric-mean ratios (FRN over the row's family) of |median| and of
/// 95% interval width. `None` where the family has no such coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub family: LikelihoodFamily,
    pub cells: BTreeMap<EffectGroup, Option<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, family: LikelihoodFamily) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.family == family)
    }
}

/// Builds the relative-magnitude / relative-width table. Samples of each
/// family are matched to the FRN samples by position (one per dataset); the
/// geometric means run over every coefficient of a group and every dataset.
pub fn comparison_table(
    samples: &BTreeMap<LikelihoodFamily, Vec<PosteriorSample>>,
    group_of: impl Fn(&str) -> Option<EffectGroup>,
) -> Result<ComparisonTable> {
    let reference = samples
        .get(&LikelihoodFamily::Frn)
        .ok_or_else(|| Error::Dimension("comparison needs FRN samples".into()))?;
    let summary = |s: &PosteriorSample| -> Result<BTreeMap<String, (f64, f64)>> {
        Ok(quantile_intervals(s, &DEFAULT_LEVELS)?
            .into_iter()
            .map(|q| (q.name, (q.values[1], q.values[2] - q.values[0])))
            .collect())
    };
    let reference: Vec<_> = reference.iter().map(summary).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (&family, list) in samples {
        if list.len() != reference.len() {
            return Err(Error::Dimension(format!(
                "{family} has {} samples but FRN has {}",
                list.len(),
                reference.len()
            )));
        }
        let mut logs: BTreeMap<EffectGroup, (f64, f64, usize)> = BTreeMap::new();
        for (s, frn) in list.iter().zip(&reference) {
            let other = summary(s)?;
            for (name, &(med_f, width_f)) in frn {
                let (Some(group), Some(&(med_o, width_o))) = (group_of(name), other.get(name))
                else {
                    continue;
                };
                let e = logs.entry(group).or_insert((0.0, 0.0, 0));
                e.0 += (med_f.abs() / med_o.abs()).ln();
                e.1 += (width_f / width_o).ln();
                e.2 += 1;
            }
        }
        let cells = EffectGroup::ALL
            .iter()
            .map(|&g| {
                let cell = logs
                    .get(&g)
                    .map(|&(m, w, k)| ((m / k as f64).exp(), (w / k as f64).exp()));
                (g, cell)
            })
            .collect();
        rows.push(ComparisonRow { family, cells });
    }
    Ok(ComparisonTable { rows })
}
