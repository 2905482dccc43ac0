//! Truncation intervals and set membership for the four likelihood families.
//!
//! Each family defines a set of latent matrices consistent with the observed
//! scores. A Gibbs update of y_ij draws from its conditional restricted to the
//! interval computed here, which keeps the chain inside the set.

use crate::error::{Error, Result};
use crate::net::{ConstraintInterval, LatentMatrix, LikelihoodFamily, ScoreMatrix};

/// Which rule of a family's constraint set an entry breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// A ranked relation must be positive.
    Positive,
    /// Relations must follow the order of the scores.
    Order,
    /// An unranked relation in a row with unused nominations must be nonpositive.
    Nonpositive,
    /// Every ranked relation must be at least every unranked one.
    RankedAboveUnranked,
}

/// One offending entry. `k` names the other entry of the row when the rule
/// compares two relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub k: Option<usize>,
    pub rule: Rule,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Membership {
    pub violations: Vec<Violation>,
}

impl Membership {
    pub fn is_member(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Column indices of one row, grouped by how the row's score constrains them.
#[derive(Debug, Clone, Default)]
pub struct RowLayout {
    /// Nominated columns, most favored first (scores m_i, m_i - 1, ...).
    pub ranked: Vec<usize>,
    pub unranked: Vec<usize>,
    pub missing: Vec<usize>,
    /// d_i = m_i: unranked entries may still be positive relations.
    pub censored: bool,
}

impl RowLayout {
    pub fn new(s: &ScoreMatrix, i: usize) -> Self {
        let n = s.n();
        let mut ranked: Vec<(u32, usize)> = Vec::new();
        let mut layout = RowLayout::default();
        for j in (0..n).filter(|&j| j != i) {
            match s.get(i, j) {
                None => layout.missing.push(j),
                Some(0) => layout.unranked.push(j),
                Some(v) => ranked.push((v, j)),
            }
        }
        ranked.sort_by_key(|&(v, _)| std::cmp::Reverse(v));
        layout.ranked = ranked.into_iter().map(|(_, j)| j).collect();
        layout.censored = layout.ranked.len() as u32 == s.row_bound(i);
        layout
    }

    pub fn all(s: &ScoreMatrix) -> Vec<RowLayout> {
        (0..s.n()).map(|i| RowLayout::new(s, i)).collect()
    }
}

/// Cached row brackets: latent values of the ranked entries in descending
/// score order, plus the extremes the row-level rules need.
#[derive(Debug, Clone)]
pub struct RowContext {
    /// `ranked_values[k]` belongs to score m_i - k.
    pub ranked_values: Vec<f64>,
    pub max_unranked: f64,
    pub min_ranked: f64,
    pub d: u32,
    pub m: u32,
}

impl RowContext {
    pub fn new(layout: &RowLayout, y_row: &[f64], m: u32) -> Self {
        let ranked_values: Vec<f64> = layout.ranked.iter().map(|&j| y_row[j]).collect();
        let max_unranked = layout
            .unranked
            .iter()
            .map(|&j| y_row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let min_ranked = ranked_values.iter().copied().fold(f64::INFINITY, f64::min);
        RowContext {
            d: ranked_values.len() as u32,
            ranked_values,
            max_unranked,
            min_ranked,
            m,
        }
    }

    pub fn censored(&self) -> bool {
        self.d == self.m
    }

    pub fn refresh_extremes(&mut self, layout: &RowLayout, y_row: &[f64]) {
        self.max_unranked = layout
            .unranked
            .iter()
            .map(|&j| y_row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        self.min_ranked = self
            .ranked_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
    }

    /// Interval of the ranked entry at position `k` (0 = top score).
    ///
    /// Uses score neighbours, so it assumes the row currently satisfies the
    /// family's ordering rules.
    pub fn ranked_interval(&self, family: LikelihoodFamily, k: usize) -> ConstraintInterval {
        let d = self.ranked_values.len();
        let above = if k == 0 {
            f64::INFINITY
        } else {
            self.ranked_values[k - 1]
        };
        let below = if k + 1 < d {
            self.ranked_values[k + 1]
        } else {
            self.max_unranked
        };
        match family {
            LikelihoodFamily::Frn => ConstraintInterval::new(below.max(0.0), above),
            LikelihoodFamily::Rank => ConstraintInterval::new(below, above),
            LikelihoodFamily::Binary => ConstraintInterval::POSITIVE,
            LikelihoodFamily::CensoredBinary => {
                ConstraintInterval::new(self.max_unranked.max(0.0), f64::INFINITY)
            }
        }
    }

    /// Interval of any unranked (score 0) entry in this row.
    pub fn unranked_interval(&self, family: LikelihoodFamily) -> ConstraintInterval {
        match family {
            LikelihoodFamily::Rank => ConstraintInterval::new(f64::NEG_INFINITY, self.min_ranked),
            LikelihoodFamily::Binary => ConstraintInterval::NONPOSITIVE,
            LikelihoodFamily::Frn | LikelihoodFamily::CensoredBinary => {
                if self.censored() {
                    ConstraintInterval::new(f64::NEG_INFINITY, self.min_ranked)
                } else {
                    ConstraintInterval::NONPOSITIVE
                }
            }
        }
    }
}

fn checked(iv: ConstraintInterval) -> Result<ConstraintInterval> {
    if iv.is_consistent() {
        Ok(iv)
    } else {
        Err(Error::EmptyInterval {
            lo: iv.lo,
            hi: iv.hi,
        })
    }
}

fn observed_score(s: &ScoreMatrix, i: usize, j: usize) -> Result<u32> {
    if i == j {
        return Err(Error::Dimension(format!(
            "diagonal entry ({i}, {i}) has no interval"
        )));
    }
    s.get(i, j).ok_or_else(|| {
        Error::InvalidScores(format!("score ({i}, {j}) is missing; use interval_missing"))
    })
}

/// max and min of y_ik over non-missing k in row i whose score satisfies `pred`.
fn row_extremes(
    s: &ScoreMatrix,
    y: &LatentMatrix,
    i: usize,
    pred: impl Fn(u32) -> bool,
) -> (f64, f64) {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for k in (0..s.n()).filter(|&k| k != i) {
        if let Some(v) = s.get(i, k) {
            if pred(v) {
                hi = hi.max(y.get(i, k));
                lo = lo.min(y.get(i, k));
            }
        }
    }
    (hi, lo)
}

/// FRN interval of y_ij: positivity, order, and censoring-aware zero threshold.
pub fn interval_frn(
    s: &ScoreMatrix,
    y: &LatentMatrix,
    i: usize,
    j: usize,
) -> Result<ConstraintInterval> {
    let sij = observed_score(s, i, j)?;
    let iv = if sij > 0 {
        let (max_below, _) = row_extremes(s, y, i, |v| v < sij);
        let (_, min_above) = row_extremes(s, y, i, |v| v > sij);
        ConstraintInterval::new(max_below.max(0.0), min_above)
    } else if s.is_censored(i) {
        let (_, min_ranked) = row_extremes(s, y, i, |v| v > 0);
        ConstraintInterval::new(f64::NEG_INFINITY, min_ranked)
    } else {
        ConstraintInterval::NONPOSITIVE
    };
    checked(iv)
}

/// Rank-likelihood interval of y_ij: within-row order only.
pub fn interval_rank(
    s: &ScoreMatrix,
    y: &LatentMatrix,
    i: usize,
    j: usize,
) -> Result<ConstraintInterval> {
    let sij = observed_score(s, i, j)?;
    let (max_below, _) = row_extremes(s, y, i, |v| v < sij);
    let (_, min_above) = row_extremes(s, y, i, |v| v > sij);
    checked(ConstraintInterval::new(max_below, min_above))
}

/// Binary-likelihood interval of y_ij: thresholded at zero, censoring ignored.
pub fn interval_binary(s: &ScoreMatrix, i: usize, j: usize) -> Result<ConstraintInterval> {
    Ok(if observed_score(s, i, j)? > 0 {
        ConstraintInterval::POSITIVE
    } else {
        ConstraintInterval::NONPOSITIVE
    })
}

/// Censored-binary interval of y_ij: positivity, censoring-aware zero
/// threshold, and ranked-above-unranked without order among the ranked.
pub fn interval_censored_binary(
    s: &ScoreMatrix,
    y: &LatentMatrix,
    i: usize,
    j: usize,
) -> Result<ConstraintInterval> {
    let sij = observed_score(s, i, j)?;
    let iv = if sij > 0 {
        let (max_unranked, _) = row_extremes(s, y, i, |v| v == 0);
        ConstraintInterval::new(max_unranked.max(0.0), f64::INFINITY)
    } else if s.is_censored(i) {
        let (_, min_ranked) = row_extremes(s, y, i, |v| v > 0);
        ConstraintInterval::new(f64::NEG_INFINITY, min_ranked)
    } else {
        ConstraintInterval::NONPOSITIVE
    };
    checked(iv)
}

/// Missing scores leave the latent value unconstrained.
pub fn interval_missing() -> ConstraintInterval {
    ConstraintInterval::UNBOUNDED
}

/// Interval of y_ij under `family`, dispatching on missingness.
pub fn interval(
    family: LikelihoodFamily,
    s: &ScoreMatrix,
    y: &LatentMatrix,
    i: usize,
    j: usize,
) -> Result<ConstraintInterval> {
    if i != j && s.get(i, j).is_none() {
        return Ok(interval_missing());
    }
    match family {
        LikelihoodFamily::Frn => interval_frn(s, y, i, j),
        LikelihoodFamily::Rank => interval_rank(s, y, i, j),
        LikelihoodFamily::Binary => interval_binary(s, i, j),
        LikelihoodFamily::CensoredBinary => interval_censored_binary(s, y, i, j),
    }
}

/// Checks whether `y` lies in the family's constraint set for `s`, listing
/// every offending entry. Runs in O(n^2).
pub fn validate_membership(
    s: &ScoreMatrix,
    y: &LatentMatrix,
    family: LikelihoodFamily,
) -> Membership {
    let mut out = Membership::default();
    for i in 0..s.n() {
        let layout = RowLayout::new(s, i);
        check_row(i, &layout, y.row(i), family, &mut out.violations);
    }
    out
}

/// Row-level membership check against a precomputed layout.
pub fn check_row(
    i: usize,
    layout: &RowLayout,
    y_row: &[f64],
    family: LikelihoodFamily,
    violations: &mut Vec<Violation>,
) {
    use LikelihoodFamily::*;
    let thresholds = family != Rank;
    let ordered = matches!(family, Frn | Rank);
    let ranked_above_unranked = matches!(family, Frn | Rank | CensoredBinary);
    let zero_for_unranked = match family {
        Binary => true,
        Frn | CensoredBinary => !layout.censored,
        Rank => false,
    };

    if thresholds {
        for &j in &layout.ranked {
            if !(y_row[j] > 0.0) {
                violations.push(Violation {
                    i,
                    j,
                    k: None,
                    rule: Rule::Positive,
                });
            }
        }
    }
    if zero_for_unranked {
        for &j in &layout.unranked {
            if y_row[j] > 0.0 {
                violations.push(Violation {
                    i,
                    j,
                    k: None,
                    rule: Rule::Nonpositive,
                });
            }
        }
    }
    if ordered {
        for w in layout.ranked.windows(2) {
            if !(y_row[w[0]] > y_row[w[1]]) {
                violations.push(Violation {
                    i,
                    j: w[0],
                    k: Some(w[1]),
                    rule: Rule::Order,
                });
            }
        }
    }
    if ranked_above_unranked && !layout.ranked.is_empty() {
        let (jmin, ymin) = layout.ranked.iter().map(|&j| (j, y_row[j])).fold(
            (usize::MAX, f64::INFINITY),
            |acc, x| if x.1 < acc.1 { x } else { acc },
        );
        for &k in &layout.unranked {
            // ties have probability zero; only strict inversions count for C(S)
            let bad = if family == CensoredBinary {
                y_row[k] > ymin
            } else {
                y_row[k] >= ymin
            };
            if bad {
                violations.push(Violation {
                    i,
                    j: jmin,
                    k: Some(k),
                    rule: Rule::RankedAboveUnranked,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{canonicalize_scores, RawCoding};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn one_row(n: usize, row: &[i64], m: u32) -> ScoreMatrix {
        let mut raw = vec![Some(0); n * n];
        for (j, &v) in row.iter().enumerate() {
            raw[j] = if j == 0 { None } else { Some(v) };
        }
        canonicalize_scores(n, &raw, &vec![m; n], RawCoding::Scores).unwrap()
    }

    fn latent_row(n: usize, row: &[f64]) -> LatentMatrix {
        let mut y = LatentMatrix::zeros(n);
        for (j, &v) in row.iter().enumerate() {
            y.set(0, j, v);
        }
        y
    }

    // Row 0 of a 6-node matrix; column 0 is the diagonal.
    #[test]
    fn frn_brackets_follow_scores() {
        let s = one_row(6, &[0, 3, 2, 1, 0, 0], 3);
        let y = latent_row(6, &[0.0, 2.5, 1.1, 0.7, -0.3, -0.8]);
        assert_eq!(
            interval_frn(&s, &y, 0, 2).unwrap(),
            ConstraintInterval::new(0.7, 2.5)
        );
        assert_eq!(
            interval_frn(&s, &y, 0, 3).unwrap(),
            ConstraintInterval::new(0.0, 1.1)
        );
        let iv = interval_frn(&s, &y, 0, 4).unwrap();
        assert_eq!((iv.lo, iv.hi), (f64::NEG_INFINITY, 0.7));
        let top = interval_frn(&s, &y, 0, 1).unwrap();
        assert_eq!((top.lo, top.hi), (1.1, f64::INFINITY));
    }

    #[test]
    fn frn_uncensored_zero_pair_is_nonpositive() {
        let s = one_row(6, &[0, 3, 0, 0, 0, 0], 3);
        let y = latent_row(6, &[0.0, 1.0, -0.5, -0.2, -1.0, -2.0]);
        assert_eq!(
            interval_frn(&s, &y, 0, 3).unwrap(),
            ConstraintInterval::NONPOSITIVE
        );
        // lowest ranked entry in an uncensored row is bounded by zero
        assert_eq!(interval_frn(&s, &y, 0, 1).unwrap().lo, 0.0);
    }

    #[test]
    fn rank_intervals_have_no_thresholds() {
        let s = one_row(6, &[0, 3, 2, 0, 0, 0], 3);
        let y = latent_row(6, &[0.0, -1.0, -2.0, -3.0, -2.5, -4.0]);
        let iv = interval_rank(&s, &y, 0, 3).unwrap();
        assert_eq!((iv.lo, iv.hi), (f64::NEG_INFINITY, -2.0));
        let top = interval_rank(&s, &y, 0, 1).unwrap();
        assert_eq!((top.lo, top.hi), (-2.0, f64::INFINITY));
        let lowest = interval_rank(&s, &y, 0, 2).unwrap();
        assert_eq!((lowest.lo, lowest.hi), (-2.5, -1.0));

        let empty = ScoreMatrix::empty(4, 2);
        let y = LatentMatrix::zeros(4);
        assert_eq!(
            interval_rank(&empty, &y, 1, 2).unwrap(),
            ConstraintInterval::UNBOUNDED
        );
    }

    #[test]
    fn binary_ignores_censoring() {
        let s = one_row(5, &[0, 4, 3, 0, 0], 2);
        assert!(s.is_censored(0));
        assert_eq!(
            interval_binary(&s, 0, 1).unwrap(),
            ConstraintInterval::POSITIVE
        );
        assert_eq!(
            interval_binary(&s, 0, 3).unwrap(),
            ConstraintInterval::NONPOSITIVE
        );
        assert_eq!(
            interval_binary(&s, 1, 2).unwrap(),
            ConstraintInterval::NONPOSITIVE
        );
    }

    #[test]
    fn censored_binary_brackets() {
        let s = one_row(5, &[0, 2, 1, 0, 0], 2);
        let y = latent_row(5, &[0.0, 1.5, 0.9, 0.4, -0.2]);
        let iv = interval_censored_binary(&s, &y, 0, 1).unwrap();
        assert_eq!((iv.lo, iv.hi), (0.4, f64::INFINITY));
        let iv = interval_censored_binary(&s, &y, 0, 3).unwrap();
        assert_eq!((iv.lo, iv.hi), (f64::NEG_INFINITY, 0.9));

        let y = latent_row(5, &[0.0, 1.5, 0.9, -0.4, -0.2]);
        assert_eq!(interval_censored_binary(&s, &y, 0, 2).unwrap().lo, 0.0);

        let s = one_row(5, &[0, 3, 0, 0, 0], 3);
        assert_eq!(
            interval_censored_binary(&s, &y, 0, 3).unwrap(),
            ConstraintInterval::NONPOSITIVE
        );
    }

    #[test]
    fn missing_pairs_are_unconstrained() {
        let n = 4;
        let mut raw = vec![Some(0); n * n];
        raw[1] = None;
        let s = canonicalize_scores(n, &raw, &[2; 4], RawCoding::Scores).unwrap();
        let y = LatentMatrix::zeros(n);
        for f in LikelihoodFamily::ALL {
            assert_eq!(
                interval(f, &s, &y, 0, 1).unwrap(),
                ConstraintInterval::UNBOUNDED
            );
        }
        assert_eq!(interval_missing(), ConstraintInterval::UNBOUNDED);
    }

    #[test]
    fn corrupted_state_is_an_error() {
        let s = one_row(5, &[0, 2, 1, 0, 0], 2);
        // the unranked 0.7 sits above the score-2 entry
        let y = latent_row(5, &[0.0, 0.5, 0.9, 0.7, 0.0]);
        assert!(matches!(
            interval_frn(&s, &y, 0, 2),
            Err(Error::EmptyInterval { .. })
        ));
    }

    #[test]
    fn negative_ranked_value_breaks_positivity() {
        let s = one_row(5, &[0, 2, 1, 0, 0], 3);
        let y = latent_row(5, &[0.0, 0.5, -0.1, -1.0, -2.0]);
        let m = validate_membership(&s, &y, LikelihoodFamily::Frn);
        assert!(!m.is_member());
        assert!(m
            .violations
            .iter()
            .any(|v| v.rule == Rule::Positive && v.j == 2));
        assert!(validate_membership(&s, &y, LikelihoodFamily::Rank).is_member());
    }

    #[test]
    fn censored_positive_unranked_in_f_but_not_b() {
        let s = one_row(5, &[0, 2, 1, 0, 0], 2);
        let y = latent_row(5, &[0.0, 1.5, 0.9, 0.4, -0.2]);
        assert!(validate_membership(&s, &y, LikelihoodFamily::Frn).is_member());
        assert!(validate_membership(&s, &y, LikelihoodFamily::CensoredBinary).is_member());
        assert!(validate_membership(&s, &y, LikelihoodFamily::Rank).is_member());
        assert!(!validate_membership(&s, &y, LikelihoodFamily::Binary).is_member());
    }

    #[test]
    fn row_context_matches_definitional_intervals() {
        let s = one_row(7, &[0, 3, 2, 1, 0, 0, 0], 3);
        let y = latent_row(7, &[0.0, 2.5, 1.1, 0.7, -0.3, 0.2, -0.8]);
        let layout = RowLayout::new(&s, 0);
        let ctx = RowContext::new(&layout, y.row(0), 3);
        for f in LikelihoodFamily::ALL {
            for (k, &j) in layout.ranked.iter().enumerate() {
                assert_eq!(
                    ctx.ranked_interval(f, k),
                    interval(f, &s, &y, 0, j).unwrap(),
                    "{f} {j}"
                );
            }
            for &j in &layout.unranked {
                assert_eq!(
                    ctx.unranked_interval(f),
                    interval(f, &s, &y, 0, j).unwrap(),
                    "{f} {j}"
                );
            }
        }
    }

    /// Random score matrix with a latent matrix in F(S), built by the
    /// thresholded-rank transform.
    fn frn_instance(n: usize, m: u32, seed: u64) -> (ScoreMatrix, LatentMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..n * n)
            .map(|_| rng.sample::<f64, _>(StandardNormal) - 0.3)
            .collect();
        let y = LatentMatrix::from_vec(n, vals).unwrap();
        let s = crate::simgen::frn_transform(&y, &vec![m; n]).unwrap();
        (s, y)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn frn_set_nests_in_rank_and_censored(n in 2usize..9, m in 1u32..5, seed in any::<u64>()) {
            let m = m.min(n as u32 - 1);
            let (s, y) = frn_instance(n, m, seed);
            prop_assert!(validate_membership(&s, &y, LikelihoodFamily::Frn).is_member());
            prop_assert!(validate_membership(&s, &y, LikelihoodFamily::Rank).is_member());
            prop_assert!(validate_membership(&s, &y, LikelihoodFamily::CensoredBinary).is_member());
        }

        #[test]
        fn rank_membership_ignores_row_shifts(n in 2usize..9, m in 1u32..5, seed in any::<u64>()) {
            let m = m.min(n as u32 - 1);
            let (s, y) = frn_instance(n, m, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let shifted = y.shift_rows(&c);
            prop_assert_eq!(
                validate_membership(&s, &y, LikelihoodFamily::Rank),
                validate_membership(&s, &shifted, LikelihoodFamily::Rank)
            );
        }

        #[test]
        fn intervals_characterize_membership(n in 2usize..6, m in 1u32..4, seed in any::<u64>()) {
            let m = m.min(n as u32 - 1);
            let (s, y) = frn_instance(n, m, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
            for family in [LikelihoodFamily::Frn, LikelihoodFamily::Rank, LikelihoodFamily::CensoredBinary] {
                for i in 0..n {
                    for j in (0..n).filter(|&j| j != i) {
                        let iv = interval(family, &s, &y, i, j).unwrap();
                        for _ in 0..20 {
                            let v = rng.random_range(-4.0..4.0);
                            let mut y2 = y.clone();
                            y2.set(i, j, v);
                            let member = validate_membership(&s, &y2, family).is_member();
                            prop_assert_eq!(iv.contains(v), member, "{} ({},{}) v={} iv={:?}", family, i, j, v, iv);
                        }
                    }
                }
            }
        }
    }
}
