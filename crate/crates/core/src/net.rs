//! Domain types shared across the crate: observed score matrices, latent
//! relation matrices, regression designs and social relations model
//! parameters.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;

use crate::error::{Error, Result};

/// The four set-based likelihoods relating observed scores to latent relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LikelihoodFamily {
    /// Fixed rank nomination: positivity, within-row order and outdegree censoring.
    Frn,
    /// Within-row order only. Blind to nominator-level effects.
    Rank,
    /// Nominated vs not nominated, thresholded at zero, ignoring censoring.
    Binary,
    /// Binary likelihood corrected for outdegree censoring.
    CensoredBinary,
}

impl LikelihoodFamily {
    pub const ALL: [LikelihoodFamily; 4] = [
        LikelihoodFamily::Frn,
        LikelihoodFamily::Rank,
        LikelihoodFamily::Binary,
        LikelihoodFamily::CensoredBinary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LikelihoodFamily::Frn => "FRN",
            LikelihoodFamily::Rank => "RANK",
            LikelihoodFamily::Binary => "BINARY",
            LikelihoodFamily::CensoredBinary => "CENSORED_BINARY",
        }
    }

    /// Whether the family can identify intercepts, row regressors and sender effects.
    pub fn identifies_row_effects(self) -> bool {
        self != LikelihoodFamily::Rank
    }
}

impl fmt::Display for LikelihoodFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LikelihoodFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "FRN" => Ok(LikelihoodFamily::Frn),
            "RANK" => Ok(LikelihoodFamily::Rank),
            "BINARY" | "BINOMIAL" => Ok(LikelihoodFamily::Binary),
            "CENSORED_BINARY" | "CENSORED_BINOMIAL" | "CENSORED" => {
                Ok(LikelihoodFamily::CensoredBinary)
            }
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Truncation bounds for one latent entry. `lo` may be `-inf`, `hi` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ConstraintInterval {
    pub const UNBOUNDED: ConstraintInterval = ConstraintInterval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const POSITIVE: ConstraintInterval = ConstraintInterval {
        lo: 0.0,
        hi: f64::INFINITY,
    };
    pub const NONPOSITIVE: ConstraintInterval = ConstraintInterval {
        lo: f64::NEG_INFINITY,
        hi: 0.0,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        ConstraintInterval { lo, hi }
    }

    pub fn is_consistent(&self) -> bool {
        self.lo <= self.hi
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// How the nonzero entries of a raw nomination grid are coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawCoding {
    /// Larger value means more favored (any distinct positive integers).
    Scores,
    /// Rank positions, 1 = most favored.
    Ranks,
}

/// Observed nomination scores. `None` marks a missing entry; the diagonal is
/// stored as `None` and never read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreMatrix {
    n: usize,
    scores: Vec<Option<u32>>,
    max_nominations: Vec<u32>,
}

impl ScoreMatrix {
    /// Builds a score matrix from canonical scores, validating the row
    /// score-set law.
    pub fn new(n: usize, scores: Vec<Option<u32>>, max_nominations: Vec<u32>) -> Result<Self> {
        if scores.len() != n * n || max_nominations.len() != n {
            return Err(Error::Dimension(format!(
                "score matrix needs {} entries and {} row bounds, got {} and {}",
                n * n,
                n,
                scores.len(),
                max_nominations.len()
            )));
        }
        let mut s = ScoreMatrix {
            n,
            scores,
            max_nominations,
        };
        for i in 0..n {
            s.scores[i * n + i] = None;
        }
        s.validate()?;
        Ok(s)
    }

    /// All-zero matrix with a common nomination bound.
    pub fn empty(n: usize, m: u32) -> Self {
        let mut scores = vec![Some(0); n * n];
        for i in 0..n {
            scores[i * n + i] = None;
        }
        ScoreMatrix {
            n,
            scores,
            max_nominations: vec![m; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Score of the tie i -> j; `None` when missing.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        debug_assert!(i != j);
        self.scores[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[Option<u32>] {
        &self.scores[i * self.n..(i + 1) * self.n]
    }

    pub fn max_nominations(&self) -> &[u32] {
        &self.max_nominations
    }

    /// m_i for row i.
    pub fn row_bound(&self, i: usize) -> u32 {
        self.max_nominations[i]
    }

    pub fn out_degree(&self, i: usize) -> u32 {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|&(j, s)| j != i && matches!(s, Some(v) if *v > 0))
            .count() as u32
    }

    /// Whether row i used all of its nominations, so that its unranked
    /// entries are censored.
    pub fn is_censored(&self, i: usize) -> bool {
        self.out_degree(i) == self.max_nominations[i]
    }

    /// Checks the row score-set invariant in O(n^2).
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let mut seen = Vec::new();
        for i in 0..n {
            let m = self.max_nominations[i];
            seen.clear();
            seen.resize(m as usize + 1, false);
            let mut d = 0u32;
            for j in 0..n {
                if j == i {
                    continue;
                }
                if let Some(s) = self.scores[i * n + j] {
                    if s == 0 {
                        continue;
                    }
                    if s > m {
                        return Err(Error::InvalidScores(format!(
                            "row {i}: score {s} exceeds m_i = {m}"
                        )));
                    }
                    if seen[s as usize] {
                        return Err(Error::InvalidScores(format!(
                            "row {i}: score {s} appears twice"
                        )));
                    }
                    seen[s as usize] = true;
                    d += 1;
                }
            }
            if d > m {
                return Err(Error::InvalidScores(format!(
                    "row {i}: outdegree {d} exceeds m_i = {m}"
                )));
            }
            // nonzero scores must be exactly {m - d + 1, ..., m}
            if let Some(gap) = ((m - d + 1)..=m).find(|&s| !seen[s as usize]) {
                return Err(Error::InvalidScores(format!(
                    "row {i}: nonzero scores are not the canonical run ending at {m} (missing {gap})"
                )));
            }
        }
        Ok(())
    }
}

/// Outdegree of every row: count of strictly positive, non-missing scores.
pub fn out_degrees(s: &ScoreMatrix) -> Vec<u32> {
    (0..s.n()).map(|i| s.out_degree(i)).collect()
}

/// Converts a raw nomination grid into canonical scores, where the k-th most
/// favored nominee of row i gets m_i - k + 1 and non-nominees get 0.
pub fn canonicalize_scores(
    n: usize,
    raw: &[Option<i64>],
    m_per_row: &[u32],
    coding: RawCoding,
) -> Result<ScoreMatrix> {
    if raw.len() != n * n || m_per_row.len() != n {
        return Err(Error::Dimension(format!(
            "raw grid needs {} entries and {} row bounds",
            n * n,
            n
        )));
    }
    let mut scores = vec![None; n * n];
    let mut nominees: Vec<(i64, usize)> = Vec::new();
    for i in 0..n {
        nominees.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            match raw[i * n + j] {
                None => {}
                Some(v) if v < 0 => {
                    return Err(Error::InvalidScores(format!(
                        "row {i}, column {j}: negative entry {v}"
                    )))
                }
                Some(0) => scores[i * n + j] = Some(0),
                Some(v) => nominees.push((v, j)),
            }
        }
        match coding {
            RawCoding::Scores => nominees.sort_by_key(|&(v, _)| std::cmp::Reverse(v)),
            RawCoding::Ranks => nominees.sort_by_key(|a| a.0),
        }
        if let Some(w) = nominees.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidScores(format!(
                "row {i}: duplicate value {} among nominations",
                w[0].0
            )));
        }
        let m = m_per_row[i];
        if nominees.len() > m as usize {
            return Err(Error::InvalidScores(format!(
                "row {i}: {} nominations exceed m_i = {m}",
                nominees.len()
            )));
        }
        for (k, &(_, j)) in nominees.iter().enumerate() {
            scores[i * n + j] = Some(m - k as u32);
        }
    }
    ScoreMatrix::new(n, scores, m_per_row.to_vec())
}

/// Real-valued latent relations, row-major with an unused diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    n: usize,
    values: Vec<f64>,
}

impl LatentMatrix {
    pub fn zeros(n: usize) -> Self {
        LatentMatrix {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_vec(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Dimension(format!(
                "latent matrix needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        let mut y = LatentMatrix { n, values };
        for i in 0..n {
            y.values[i * n + i] = 0.0;
        }
        if let Some((k, v)) = y.values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Dimension(format!(
                "latent entry ({}, {}) is not finite: {v}",
                k / n,
                k % n
            )));
        }
        Ok(y)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Y + c 1^T: adds `shift[i]` to every entry of row i.
    pub fn shift_rows(&self, shift: &[f64]) -> LatentMatrix {
        let mut out = self.clone();
        for (i, c) in shift.iter().enumerate().take(self.n) {
            for j in (0..self.n).filter(|&j| j != i) {
                out.values[i * self.n + j] += c;
            }
        }
        out
    }
}

/// Regressors of the social relations regression.
///
/// The regressor vector of the tie i -> j is laid out as
/// `[1 (if intercept), x_row[i], x_col[j], x_dyad[i][j]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    n: usize,
    intercept: bool,
    row_names: Vec<String>,
    col_names: Vec<String>,
    dyad_names: Vec<String>,
    /// n x p_r, row-major.
    x_row: Vec<f64>,
    /// n x p_c, row-major.
    x_col: Vec<f64>,
    /// n x n x p_d, index `(i * n + j) * p_d + k`.
    x_dyad: Vec<f64>,
}

/// Which part of the regression a coefficient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectKind {
    Intercept,
    Row,
    Column,
    Dyad,
}

impl DesignData {
    pub fn new(
        n: usize,
        intercept: bool,
        row: Vec<(String, Vec<f64>)>,
        col: Vec<(String, Vec<f64>)>,
        dyad: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        for (name, v) in row.iter().chain(col.iter()) {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "node covariate '{name}' has {} values for {n} nodes",
                    v.len()
                )));
            }
        }
        for (name, v) in &dyad {
            if v.len() != n * n {
                return Err(Error::Dimension(format!(
                    "dyad covariate '{name}' has {} values for an {n}x{n} grid",
                    v.len()
                )));
            }
        }
        let check = |name: &str, v: &[f64], skip_diag: bool| -> Result<()> {
            for (k, x) in v.iter().enumerate() {
                if skip_diag && k / n == k % n {
                    continue;
                }
                if !x.is_finite() {
                    return Err(Error::Dimension(format!(
                        "covariate '{name}' has an undefined value at position {k}"
                    )));
                }
            }
            Ok(())
        };
        for (name, v) in row.iter().chain(col.iter()) {
            check(name, v, false)?;
        }
        for (name, v) in &dyad {
            check(name, v, true)?;
        }

        let interleave = |cols: &[(String, Vec<f64>)], len: usize| {
            let p = cols.len();
            let mut out = vec![0.0; len * p];
            for (k, (_, v)) in cols.iter().enumerate() {
                for (idx, x) in v.iter().enumerate() {
                    out[idx * p + k] = if x.is_finite() { *x } else { 0.0 };
                }
            }
            out
        };
        Ok(DesignData {
            n,
            intercept,
            x_row: interleave(&row, n),
            x_col: interleave(&col, n),
            x_dyad: interleave(&dyad, n * n),
            row_names: row.into_iter().map(|(s, _)| s).collect(),
            col_names: col.into_iter().map(|(s, _)| s).collect(),
            dyad_names: dyad.into_iter().map(|(s, _)| s).collect(),
        })
    }

    /// Design with no regressors at all.
    pub fn empty(n: usize) -> Self {
        DesignData::new(n, false, vec![], vec![], vec![]).expect("empty design is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn p_row(&self) -> usize {
        self.row_names.len()
    }

    pub fn p_col(&self) -> usize {
        self.col_names.len()
    }

    pub fn p_dyad(&self) -> usize {
        self.dyad_names.len()
    }

    /// Total number of regression coefficients.
    pub fn p(&self) -> usize {
        usize::from(self.intercept) + self.p_row() + self.p_col() + self.p_dyad()
    }

    /// Coefficient names: `intercept`, `row_<name>`, `col_<name>`, `dyad_<name>`.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.p());
        if self.intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.row_names.iter().map(|s| format!("row_{s}")));
        names.extend(self.col_names.iter().map(|s| format!("col_{s}")));
        names.extend(self.dyad_names.iter().map(|s| format!("dyad_{s}")));
        names
    }

    pub fn coefficient_kinds(&self) -> Vec<EffectKind> {
        let mut kinds = Vec::with_capacity(self.p());
        if self.intercept {
            kinds.push(EffectKind::Intercept);
        }
        kinds.extend(std::iter::repeat_n(EffectKind::Row, self.p_row()));
        kinds.extend(std::iter::repeat_n(EffectKind::Column, self.p_col()));
        kinds.extend(std::iter::repeat_n(EffectKind::Dyad, self.p_dyad()));
        kinds
    }

    pub fn row_names(&self) -> &[String] {
        &self.row_names
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn dyad_names(&self) -> &[String] {
        &self.dyad_names
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        let p = self.p_row();
        &self.x_row[i * p..(i + 1) * p]
    }

    pub fn x_col(&self, j: usize) -> &[f64] {
        let p = self.p_col();
        &self.x_col[j * p..(j + 1) * p]
    }

    pub fn x_dyad(&self, i: usize, j: usize) -> &[f64] {
        let p = self.p_dyad();
        let at = (i * self.n + j) * p;
        &self.x_dyad[at..at + p]
    }

    /// Writes the full regressor vector of tie i -> j into `out` (length p).
    pub fn fill_regressors(&self, i: usize, j: usize, out: &mut [f64]) {
        let mut k = 0;
        if self.intercept {
            out[0] = 1.0;
            k = 1;
        }
        for &x in self
            .x_row(i)
            .iter()
            .chain(self.x_col(j))
            .chain(self.x_dyad(i, j))
        {
            out[k] = x;
            k += 1;
        }
    }

    /// Dense n*n*p array of regressor vectors, diagonal entries zero.
    pub fn dense_regressors(&self) -> Vec<f64> {
        let (n, p) = (self.n, self.p());
        let mut out = vec![0.0; n * n * p];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let at = (i * n + j) * p;
                    self.fill_regressors(i, j, &mut out[at..at + p]);
                }
            }
        }
        out
    }

    /// Adds `shift[i]` to dyad covariate `k` along every row i.
    pub fn shift_dyad_rows(&self, k: usize, shift: &[f64]) -> DesignData {
        let mut out = self.clone();
        let (n, p) = (self.n, self.p_dyad());
        for (i, c) in shift.iter().enumerate().take(n) {
            for j in (0..n).filter(|&j| j != i) {
                out.x_dyad[(i * n + j) * p + k] += c;
            }
        }
        out
    }
}

/// Social relations model parameters. The dyadic error variance is fixed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SrmParams {
    pub beta: Vec<f64>,
    /// Sender effects.
    pub a: Vec<f64>,
    /// Receiver effects.
    pub b: Vec<f64>,
    pub sigma_ab: Matrix2<f64>,
    pub rho: f64,
}

impl SrmParams {
    /// β = 0, a = b = 0, Σ_ab = I, ρ = 0.
    pub fn initial(n: usize, p: usize) -> Self {
        SrmParams {
            beta: vec![0.0; p],
            a: vec![0.0; n],
            b: vec![0.0; n],
            sigma_ab: Matrix2::identity(),
            rho: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sigma_ab;
        let symmetric = (s[(0, 1)] - s[(1, 0)]).abs() <= 1e-12 * (1.0 + s[(0, 1)].abs());
        if !symmetric || s[(0, 0)] <= 0.0 || s.determinant() <= 0.0 {
            return Err(Error::Numerical(format!(
                "sigma_ab is not symmetric positive definite: {s:?}"
            )));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Numerical(format!(
                "rho = {} outside (-1, 1)",
                self.rho
            )));
        }
        Ok(())
    }

    /// Linear predictor μ_ij = β'x_ij + a_i + b_j for every ordered pair,
    /// given a dense regressor array from [`DesignData::dense_regressors`].
    pub fn mean_matrix(&self, n: usize, dense_x: &[f64]) -> Vec<f64> {
        let p = self.beta.len();
        let mut mu = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let x = &dense_x[(i * n + j) * p..(i * n + j + 1) * p];
                let xb: f64 = x.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
                mu[i * n + j] = xb + self.a[i] + self.b[j];
            }
        }
        mu
    }
}
