//! Posterior sample, summary and run-metadata files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, WriterBuilder};
use frn_core::posterior::{ess_of, quantile_intervals, Ess, SampleMeta, DEFAULT_LEVELS};
use frn_core::{LikelihoodFamily, PosteriorSample};

use crate::config::Config;
use crate::error::{CliError, Result};

pub const SAMPLE_FILE: &str = "sample.csv";
pub const META_FILE: &str = "meta.txt";
pub const SUMMARY_FILE: &str = "summary.csv";

/// One row per saved draw, one column per parameter. Values use the
/// shortest representation that parses back exactly.
pub fn write_sample(path: &Path, sample: &PosteriorSample) -> Result<()> {
    let mut w = WriterBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    w.write_record(sample.names())
        .map_err(|e| CliError::csv(path, e))?;
    for row in sample.draws() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_sample(path: &Path, meta: SampleMeta) -> Result<PosteriorSample> {
    let mut r = ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    let names: Vec<String> = r
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut draws = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), k + 2)))?;
        draws.push(row);
    }
    Ok(PosteriorSample::new(names, draws, meta)?)
}

/// Run metadata written next to a sample as `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMeta {
    pub family: Option<LikelihoodFamily>,
    pub scenario: String,
    pub seed: u64,
    pub extra: Vec<(String, String)>,
    /// Absolute path of the ground-truth file, if the data were simulated.
    pub truth: Option<PathBuf>,
}

impl RunMeta {
    pub fn sample_meta(&self) -> SampleMeta {
        SampleMeta {
            family: self.family,
            seed: self.seed,
            scenario: self.scenario.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        if let Some(f) = self.family {
            let _ = writeln!(text, "family = {f}");
        }
        let _ = writeln!(text, "scenario = {}", self.scenario);
        let _ = writeln!(text, "seed = {}", self.seed);
        if let Some(t) = &self.truth {
            let _ = writeln!(text, "truth = {}", t.display());
        }
        for (k, v) in &self.extra {
            let _ = writeln!(text, "{k} = {v}");
        }
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let cfg = Config::load(path)?;
        Ok(RunMeta {
            family: cfg.parse_opt("family")?,
            scenario: cfg.str("scenario").unwrap_or("").to_string(),
            seed: cfg.parse_or("seed", 0)?,
            extra: Vec::new(),
            truth: cfg.path("truth"),
        })
    }
}

/// Reads `sample.csv` with the `meta.txt` beside it, if there is one.
pub fn load_run(sample_path: &Path) -> Result<(PosteriorSample, RunMeta)> {
    let meta_path = sample_path.with_file_name(META_FILE);
    let meta = if meta_path.exists() {
        RunMeta::read(&meta_path)?
    } else {
        RunMeta::default()
    };
    let sample = read_sample(sample_path, meta.sample_meta())?;
    Ok((sample, meta))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// parameter, quantiles, mean, sd and effective sample size.
pub fn write_summary(path: &Path, sample: &PosteriorSample) -> Result<()> {
    let q = quantile_intervals(sample, &DEFAULT_LEVELS)?;
    let mut w = WriterBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    w.write_record(["parameter", "q2.5", "median", "q97.5", "mean", "sd", "ess"])
        .map_err(|e| CliError::csv(path, e))?;
    for (k, pq) in q.iter().enumerate() {
        let col = sample.column(k);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = if col.len() > 1 {
            Some((col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        } else {
            None
        };
        let ess = match ess_of(&col) {
            Ok(Ess::Value(v)) => Some(v),
            _ => None,
        };
        let mut rec = vec![pq.name.clone()];
        rec.extend(pq.values.iter().map(|v| v.to_string()));
        rec.extend([mean.to_string(), fmt_opt(sd), fmt_opt(ess)]);
        w.write_record(&rec).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `parameter,value` pairs.
pub fn read_truth(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut r = ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let name = rec.get(0).unwrap_or("").to_string();
        let value = rec
            .get(1)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                CliError::Data(format!("{}:{}: bad truth value", path.display(), k + 2))
            })?;
        out.push((name, value));
    }
    Ok(out)
}

pub fn write_truth(path: &Path, values: &[(String, f64)]) -> Result<()> {
    let mut w = WriterBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    w.write_record(["parameter", "value"])
        .map_err(|e| CliError::csv(path, e))?;
    for (name, v) in values {
        w.write_record([name.clone(), v.to_string()])
            .map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
