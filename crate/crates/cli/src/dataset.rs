//! Survey files: roster, ranked nominations, node and dyad covariates.
//!
//! ```text
//! roster.csv           node_id,participated
//! nominations.csv      nominator_id,nominee_id,rank     (nominee `*` = outside the survey)
//! node_covariates.csv  node_id,<name>...
//! dyad_covariates.csv  i,j,<name>...
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use frn_core::{canonicalize_scores, DesignData, RawCoding, ScoreMatrix};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CliError, Result};

/// Nominee id marking a nomination of someone outside the survey.
pub const OUT_OF_SURVEY: &str = "*";

pub const ROSTER_FILE: &str = "roster.csv";
pub const NOMINATIONS_FILE: &str = "nominations.csv";
pub const NODE_COVARIATES_FILE: &str = "node_covariates.csv";
pub const DYAD_COVARIATES_FILE: &str = "dyad_covariates.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nominee {
    Node(usize),
    OutOfSurvey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nomination {
    pub nominator: usize,
    pub nominee: Nominee,
    pub rank: u32,
}

/// A validated survey. Nodes are indexed by roster order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    pub node_ids: Vec<String>,
    pub participated: Vec<bool>,
    pub nominations: Vec<Nomination>,
    /// One value per node, roster order.
    pub node_covariates: Vec<(String, Vec<f64>)>,
    /// n x n row-major, diagonal zero.
    pub dyad_covariates: Vec<(String, Vec<f64>)>,
    pub m: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub roster: PathBuf,
    pub nominations: PathBuf,
    pub node_covariates: Option<PathBuf>,
    pub dyad_covariates: Option<PathBuf>,
}

impl DatasetPaths {
    /// The standard file names inside `dir`; covariate files are optional.
    pub fn in_dir(dir: &Path) -> Self {
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        DatasetPaths {
            roster: dir.join(ROSTER_FILE),
            nominations: dir.join(NOMINATIONS_FILE),
            node_covariates: optional(NODE_COVARIATES_FILE),
            dyad_covariates: optional(DYAD_COVARIATES_FILE),
        }
    }
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(usize, StringRecord)>,
}

fn read_table(path: &Path, required: &[&str]) -> Result<Table> {
    let mut reader = ReaderBuilder::new()
        .trim(Trim::All)
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(String::from)
        .collect();
    if headers.len() < required.len() || headers.iter().zip(required).any(|(h, r)| h != r) {
        return Err(CliError::Data(format!(
            "{}: header must start with '{}', found '{}'",
            path.display(),
            required.join(","),
            headers.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        // line 1 is the header
        rows.push((k + 2, record.map_err(|e| CliError::csv(path, e))?));
    }
    Ok(Table {
        path: path.to_path_buf(),
        headers,
        rows,
    })
}

fn data_error(table: &Table, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {msg}", table.path.display()))
}

fn parse_flag(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

fn parse_value(table: &Table, line: usize, column: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(data_error(
            table,
            line,
            format!("covariate '{column}' has missing or invalid value '{v}'"),
        )),
    }
}

fn unknown_ids_error(what: &str, ids: BTreeSet<String>) -> CliError {
    let list: Vec<String> = ids.into_iter().collect();
    CliError::Data(format!("{what} not on the roster: {}", list.join(", ")))
}

pub fn load_dataset(paths: &DatasetPaths, m: u32) -> Result<SurveyDataset> {
    if m == 0 {
        return Err(CliError::Usage("m must be at least 1".into()));
    }
    let roster = read_table(&paths.roster, &["node_id", "participated"])?;
    let mut node_ids = Vec::new();
    let mut participated = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, rec) in &roster.rows {
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() || id == OUT_OF_SURVEY {
            return Err(data_error(
                &roster,
                *line,
                format!("invalid node id '{id}'"),
            ));
        }
        let flag = parse_flag(rec.get(1).unwrap_or(""))
            .ok_or_else(|| data_error(&roster, *line, "participated must be 0/1 or true/false"))?;
        if index.insert(id.clone(), node_ids.len()).is_some() {
            return Err(data_error(
                &roster,
                *line,
                format!("duplicate node id '{id}'"),
            ));
        }
        node_ids.push(id);
        participated.push(flag);
    }
    let n = node_ids.len();

    let noms = read_table(&paths.nominations, &["nominator_id", "nominee_id", "rank"])?;
    let mut nominations = Vec::new();
    let mut unknown = BTreeSet::new();
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (line, rec) in &noms.rows {
        let (from, to, rank) = (
            rec.get(0).unwrap_or(""),
            rec.get(1).unwrap_or(""),
            rec.get(2).unwrap_or(""),
        );
        let rank: u32 = rank.parse().ok().filter(|&r| r >= 1).ok_or_else(|| {
            data_error(
                &noms,
                *line,
                format!("rank must be a positive integer, got '{rank}'"),
            )
        })?;
        let Some(&i) = index.get(from) else {
            unknown.insert(from.to_string());
            continue;
        };
        if !participated[i] {
            return Err(data_error(
                &noms,
                *line,
                format!("'{from}' did not participate but lists nominations"),
            ));
        }
        let nominee = if to == OUT_OF_SURVEY {
            Nominee::OutOfSurvey
        } else if let Some(&j) = index.get(to) {
            if j == i {
                return Err(data_error(
                    &noms,
                    *line,
                    format!("'{from}' nominates themself"),
                ));
            }
            if !seen.insert((i, j)) {
                return Err(data_error(
                    &noms,
                    *line,
                    format!("duplicate nomination {from} -> {to}"),
                ));
            }
            Nominee::Node(j)
        } else {
            unknown.insert(to.to_string());
            continue;
        };
        nominations.push(Nomination {
            nominator: i,
            nominee,
            rank,
        });
    }
    if !unknown.is_empty() {
        return Err(unknown_ids_error("nominated or nominating ids", unknown));
    }
    let mut ranks: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for nom in &nominations {
        ranks.entry(nom.nominator).or_default().push(nom.rank);
    }
    for (i, mut r) in ranks {
        r.sort_unstable();
        if let Some(w) = r.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::Data(format!(
                "nominator '{}' repeats rank {}",
                node_ids[i], w[0]
            )));
        }
        if let Some((k, _)) = r.iter().enumerate().find(|(k, &v)| v != *k as u32 + 1) {
            return Err(CliError::Data(format!(
                "nominator '{}' has a gap in ranks: expected {} in {:?}",
                node_ids[i],
                k + 1,
                r
            )));
        }
        if r.len() > m as usize {
            return Err(CliError::Data(format!(
                "nominator '{}' lists {} nominations but m = {m}",
                node_ids[i],
                r.len()
            )));
        }
    }

    let node_covariates = match &paths.node_covariates {
        None => Vec::new(),
        Some(path) => load_node_covariates(path, &index)?,
    };
    let dyad_covariates = match &paths.dyad_covariates {
        None => Vec::new(),
        Some(path) => load_dyad_covariates(path, &index, n)?,
    };
    Ok(SurveyDataset {
        node_ids,
        participated,
        nominations,
        node_covariates,
        dyad_covariates,
        m,
    })
}

fn load_node_covariates(
    path: &Path,
    index: &HashMap<String, usize>,
) -> Result<Vec<(String, Vec<f64>)>> {
    let table = read_table(path, &["node_id"])?;
    let names = table.headers[1..].to_vec();
    let n = index.len();
    let mut values = vec![vec![f64::NAN; n]; names.len()];
    let mut filled = vec![false; n];
    let mut unknown = BTreeSet::new();
    for (line, rec) in &table.rows {
        let id = rec.get(0).unwrap_or("");
        let Some(&i) = index.get(id) else {
            unknown.insert(id.to_string());
            continue;
        };
        if std::mem::replace(&mut filled[i], true) {
            return Err(data_error(
                &table,
                *line,
                format!("node '{id}' appears twice"),
            ));
        }
        for (k, name) in names.iter().enumerate() {
            values[k][i] = parse_value(&table, *line, name, rec.get(k + 1).unwrap_or(""))?;
        }
    }
    if !unknown.is_empty() {
        return Err(unknown_ids_error("covariate rows for ids", unknown));
    }
    let mut missing: Vec<&str> = index
        .iter()
        .filter(|(_, &i)| !filled[i])
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(CliError::Data(format!(
            "{}: no covariates for node(s) {}",
            path.display(),
            missing.join(", ")
        )));
    }
    Ok(names.into_iter().zip(values).collect())
}

fn load_dyad_covariates(
    path: &Path,
    index: &HashMap<String, usize>,
    n: usize,
) -> Result<Vec<(String, Vec<f64>)>> {
    let table = read_table(path, &["i", "j"])?;
    let names = table.headers[2..].to_vec();
    let mut values = vec![vec![0.0; n * n]; names.len()];
    let mut filled = vec![false; n * n];
    let mut unknown = BTreeSet::new();
    for (line, rec) in &table.rows {
        let (a, b) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) else {
            for id in [a, b] {
                if !index.contains_key(id) {
                    unknown.insert(id.to_string());
                }
            }
            continue;
        };
        if i == j {
            return Err(data_error(
                &table,
                *line,
                "dyad covariates are not defined for i = j",
            ));
        }
        if std::mem::replace(&mut filled[i * n + j], true) {
            return Err(data_error(
                &table,
                *line,
                format!("pair ({a}, {b}) appears twice"),
            ));
        }
        for (k, name) in names.iter().enumerate() {
            values[k][i * n + j] = parse_value(&table, *line, name, rec.get(k + 2).unwrap_or(""))?;
        }
    }
    if !unknown.is_empty() {
        return Err(unknown_ids_error("dyad covariate ids", unknown));
    }
    let absent = (0..n * n).filter(|&k| k / n != k % n && !filled[k]).count();
    if absent > 0 {
        return Err(CliError::Data(format!(
            "{}: {absent} ordered pairs have no covariate row (every pair i != j is required)",
            path.display()
        )));
    }
    Ok(names.into_iter().zip(values).collect())
}

impl SurveyDataset {
    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    /// m_i = m minus the nominations of row i that went outside the survey.
    pub fn row_bounds(&self) -> Vec<u32> {
        let mut bounds = vec![self.m; self.n()];
        for nom in &self.nominations {
            if nom.nominee == Nominee::OutOfSurvey {
                bounds[nom.nominator] -= 1;
            }
        }
        bounds
    }

    pub fn node_covariate(&self, name: &str) -> Option<&[f64]> {
        self.node_covariates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn dyad_covariate(&self, name: &str) -> Option<&[f64]> {
        self.dyad_covariates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Scores of the survey: participants' rows hold their in-survey
/// nominations, non-participants' rows are entirely missing.
pub fn build_score_matrix(ds: &SurveyDataset) -> Result<ScoreMatrix> {
    let n = ds.n();
    if n < 2 {
        return Err(CliError::Data(format!(
            "the roster needs at least two nodes, found {n}"
        )));
    }
    let mut raw: Vec<Option<i64>> = vec![None; n * n];
    for i in (0..n).filter(|&i| ds.participated[i]) {
        for j in (0..n).filter(|&j| j != i) {
            raw[i * n + j] = Some(0);
        }
    }
    for nom in &ds.nominations {
        if let Nominee::Node(j) = nom.nominee {
            raw[nom.nominator * n + j] = Some(nom.rank as i64);
        }
    }
    Ok(canonicalize_scores(
        n,
        &raw,
        &ds.row_bounds(),
        RawCoding::Ranks,
    )?)
}

/// Which covariates enter the regression and in what role.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DesignSpec {
    pub intercept: bool,
    /// Node covariates of the nominator.
    pub row: Vec<String>,
    /// Node covariates of the nominee.
    pub col: Vec<String>,
    pub dyad: Vec<String>,
    /// Node covariates replaced by their normal scores first.
    pub normal_scores: Vec<String>,
}

pub fn build_design(ds: &SurveyDataset, spec: &DesignSpec) -> Result<DesignData> {
    let n = ds.n();
    let node = |name: &str| -> Result<Vec<f64>> {
        let v = ds
            .node_covariate(name)
            .ok_or_else(|| CliError::Usage(format!("no node covariate named '{name}'")))?;
        Ok(if spec.normal_scores.iter().any(|s| s == name) {
            normal_score_transform(v)
        } else {
            v.to_vec()
        })
    };
    for name in &spec.normal_scores {
        if ds.node_covariate(name).is_none() {
            return Err(CliError::Usage(format!(
                "normal_scores names unknown node covariate '{name}'"
            )));
        }
    }
    let row = spec
        .row
        .iter()
        .map(|s| Ok((s.clone(), node(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let col = spec
        .col
        .iter()
        .map(|s| Ok((s.clone(), node(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let dyad = spec
        .dyad
        .iter()
        .map(|s| {
            let v = ds
                .dyad_covariate(s)
                .ok_or_else(|| CliError::Usage(format!("no dyad covariate named '{s}'")))?;
            Ok((s.clone(), v.to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DesignData::new(n, spec.intercept, row, col, dyad)?)
}

/// Φ⁻¹(r / (n + 1)) of each value's mid-rank r (ties share the average rank).
pub fn normal_score_transform(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let mid = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = mid;
        }
        start = end;
    }
    let normal = Normal::standard();
    ranks
        .iter()
        .map(|r| normal.inverse_cdf(r / (n as f64 + 1.0)))
        .collect()
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = WriterBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    w.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes the dataset in the standard layout inside `dir`.
pub fn write_dataset(dir: &Path, ds: &SurveyDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let n = ds.n();
    let id = |i: usize| ds.node_ids[i].clone();
    write_rows(
        &dir.join(ROSTER_FILE),
        &["node_id".into(), "participated".into()],
        (0..n).map(|i| vec![id(i), u8::from(ds.participated[i]).to_string()]),
    )?;
    let mut noms = ds.nominations.clone();
    noms.sort_by_key(|nom| (nom.nominator, nom.rank));
    write_rows(
        &dir.join(NOMINATIONS_FILE),
        &["nominator_id".into(), "nominee_id".into(), "rank".into()],
        noms.iter().map(|nom| {
            let to = match nom.nominee {
                Nominee::Node(j) => id(j),
                Nominee::OutOfSurvey => OUT_OF_SURVEY.to_string(),
            };
            vec![id(nom.nominator), to, nom.rank.to_string()]
        }),
    )?;
    if !ds.node_covariates.is_empty() {
        let mut header = vec!["node_id".to_string()];
        header.extend(ds.node_covariates.iter().map(|(s, _)| s.clone()));
        write_rows(
            &dir.join(NODE_COVARIATES_FILE),
            &header,
            (0..n).map(|i| {
                let mut row = vec![id(i)];
                row.extend(ds.node_covariates.iter().map(|(_, v)| v[i].to_string()));
                row
            }),
        )?;
    }
    if !ds.dyad_covariates.is_empty() {
        let mut header = vec!["i".to_string(), "j".to_string()];
        header.extend(ds.dyad_covariates.iter().map(|(s, _)| s.clone()));
        let pairs = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
        write_rows(
            &dir.join(DYAD_COVARIATES_FILE),
            &header,
            pairs.map(|(i, j)| {
                let mut row = vec![id(i), id(j)];
                row.extend(
                    ds.dyad_covariates
                        .iter()
                        .map(|(_, v)| v[i * n + j].to_string()),
                );
                row
            }),
        )?;
    }
    Ok(())
}

/// Nominations listed by every participant of a fully observed score
/// matrix, rank 1 for the top score.
pub fn nominations_from_scores(s: &ScoreMatrix) -> Vec<Nomination> {
    let n = s.n();
    let mut out = Vec::new();
    for i in 0..n {
        let mut listed: Vec<(u32, usize)> = (0..n)
            .filter(|&j| j != i)
            .filter_map(|j| s.get(i, j).filter(|&v| v > 0).map(|v| (v, j)))
            .collect();
        listed.sort_by_key(|&(v, _)| std::cmp::Reverse(v));
        out.extend(listed.iter().enumerate().map(|(k, &(_, j))| Nomination {
            nominator: i,
            nominee: Nominee::Node(j),
            rank: k as u32 + 1,
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normal_scores_of_three_values() {
        let z = normal_score_transform(&[10.0, -2.0, 3.0]);
        assert!((z[1] + 0.6744897501960817).abs() < 1e-12);
        assert!(z[2].abs() < 1e-12);
        assert!((z[0] - 0.6744897501960817).abs() < 1e-12);
    }

    #[test]
    fn ties_share_mid_ranks() {
        let z = normal_score_transform(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(z[1], z[2]);
        // mid-rank 2.5 of 4 maps to Φ⁻¹(0.5)
        assert!(z[1].abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normal_scores_preserve_order(xs in proptest::collection::vec(-1e6f64..1e6, 2..60)) {
            let z = normal_score_transform(&xs);
            for a in 0..xs.len() {
                for b in 0..xs.len() {
                    if xs[a] < xs[b] {
                        prop_assert!(z[a] < z[b]);
                    } else if xs[a] == xs[b] {
                        prop_assert_eq!(z[a], z[b]);
                    }
                }
            }
            if xs.len() % 2 == 1 {
                let mut sorted = xs.clone();
                sorted.sort_by(f64::total_cmp);
                let median = sorted[xs.len() / 2];
                let k = xs.iter().position(|&x| x == median).unwrap();
                if xs.iter().filter(|&&x| x == median).count() == 1 {
                    prop_assert!(z[k].abs() < 1e-9);
                }
            }
        }
    }
}
