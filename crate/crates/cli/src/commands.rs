//! The four subcommands. Each reads a flat configuration (file plus
//! `--set` overrides) and writes its results under the configured output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use csv::WriterBuilder;
use frn_core::posterior::{
    comparison_table, concentration_ratio, quantile_intervals, EffectGroup, DEFAULT_LEVELS,
};
use frn_core::sampler::{BetaUpdate, InverseWishartPrior};
use frn_core::simgen::{rank_information_presets, scenario_presets, simulate_srm, ScenarioSpec};
use frn_core::{run_chain, LikelihoodFamily, PosteriorSample, SamplerConfig};
use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::config::Config;
use crate::dataset::{
    build_design, build_score_matrix, load_dataset, nominations_from_scores, write_dataset,
    DatasetPaths, DesignSpec, SurveyDataset,
};
use crate::error::{CliError, Result};
use crate::output::{
    load_run, write_sample, write_summary, write_truth, RunMeta, META_FILE, SAMPLE_FILE,
    SUMMARY_FILE,
};

pub const SIMULATE_KEYS: &[&str] = &[
    "preset",
    "output",
    "replicates",
    "seed",
    "n_iter",
    "burn_in",
    "thin",
];

pub const FIT_KEYS: &[&str] = &[
    "family",
    "n_iter",
    "burn_in",
    "thin",
    "seed",
    "m",
    "prior_beta_variance",
    "prior_sigma_df",
    "rho_proposal_sd",
    "beta_update",
    "validate",
    "data_dir",
    "roster",
    "nominations",
    "node_covariates",
    "dyad_covariates",
    "intercept",
    "row",
    "col",
    "dyad",
    "normal_scores",
    "rank_drop_row_effects",
    "scenario",
    "truth",
    "output",
];

pub const SUMMARIZE_KEYS: &[&str] = &["sample", "output"];

pub const COMPARE_KEYS: &[&str] = &["fits", "samples", "output", "mean_zero_dyads", "baseline"];

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = WriterBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    w.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

// ---------------------------------------------------------------- simulate

/// Expands `comparison` and `information` into their member scenarios.
fn resolve_presets(names: &[String]) -> Result<Vec<ScenarioSpec>> {
    if names.is_empty() {
        return Err(CliError::Usage(
            "missing required config key 'preset'".into(),
        ));
    }
    let mut all: Option<Vec<ScenarioSpec>> = None;
    let mut out = Vec::new();
    for name in names {
        let found: Vec<ScenarioSpec> = match name.as_str() {
            "information" => rank_information_presets(),
            _ => {
                let all = all.get_or_insert_with(scenario_presets);
                let prefix = format!("{name}_m");
                all.iter()
                    .filter(|s| {
                        s.name == *name || (name == "comparison" && s.name.starts_with(&prefix))
                    })
                    .cloned()
                    .collect()
            }
        };
        if found.is_empty() {
            let known: Vec<String> = all
                .get_or_insert_with(scenario_presets)
                .iter()
                .map(|s| s.name.clone())
                .collect();
            return Err(CliError::Usage(format!(
                "unknown preset '{name}' (known: comparison, information, {})",
                known.join(", ")
            )));
        }
        out.extend(found);
    }
    Ok(out)
}

/// Survey data, true parameter values and true node effects.
type Simulated = (SurveyDataset, Vec<(String, f64)>, Vec<[f64; 2]>);

fn simulated_dataset(spec: &ScenarioSpec, replicate: usize) -> Result<Simulated> {
    let net = simulate_srm(spec, replicate)?;
    let s = net.scores(spec.m)?;
    let n = spec.n;
    let d = &net.design;
    let node_covariates = vec![
        ("xr".to_string(), (0..n).map(|i| d.x_row(i)[0]).collect()),
        ("xc".to_string(), (0..n).map(|j| d.x_col(j)[0]).collect()),
    ];
    let dyad_covariates = d
        .dyad_names()
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let v = (0..n * n).map(|idx| {
                if idx / n == idx % n {
                    0.0
                } else {
                    d.x_dyad(idx / n, idx % n)[k]
                }
            });
            (name.clone(), v.collect())
        })
        .collect();
    let ds = SurveyDataset {
        node_ids: (1..=n).map(|i| i.to_string()).collect(),
        participated: vec![true; n],
        nominations: nominations_from_scores(&s),
        node_covariates,
        dyad_covariates,
        m: spec.m,
    };
    let t = &net.truth;
    let mut truth: Vec<(String, f64)> = d
        .coefficient_names()
        .into_iter()
        .zip(t.beta.iter().copied())
        .collect();
    truth.extend([
        ("sigma_aa".to_string(), t.sigma_ab[(0, 0)]),
        ("sigma_ab".to_string(), t.sigma_ab[(0, 1)]),
        ("sigma_bb".to_string(), t.sigma_ab[(1, 1)]),
        ("rho".to_string(), t.rho),
    ]);
    let effects = t.a.iter().zip(&t.b).map(|(&a, &b)| [a, b]).collect();
    Ok((ds, truth, effects))
}

fn fit_template(id: &str, m: u32, seed: u64, n_iter: usize, burn_in: usize, thin: usize) -> String {
    let mut t = String::new();
    let _ = writeln!(
        t,
        "# Fit of simulated dataset {id}. Run: frn fit --config fit.cfg"
    );
    let _ = writeln!(t, "scenario = {id}");
    let _ = writeln!(t, "data_dir = .");
    let _ = writeln!(t, "truth = truth.csv");
    let _ = writeln!(t, "m = {m}");
    let _ = writeln!(t, "family = FRN, BINARY, CENSORED_BINARY");
    let _ = writeln!(t, "intercept = true");
    let _ = writeln!(t, "row = xr");
    let _ = writeln!(t, "col = xc");
    let _ = writeln!(t, "dyad = d1, d2");
    let _ = writeln!(t, "n_iter = {n_iter}");
    let _ = writeln!(t, "burn_in = {burn_in}");
    let _ = writeln!(t, "thin = {thin}");
    let _ = writeln!(t, "seed = {seed}");
    let _ = writeln!(t, "output = fit");
    t
}

pub fn simulate(cfg: &Config) -> Result<()> {
    cfg.check_known(SIMULATE_KEYS)?;
    let mut specs = resolve_presets(&cfg.list("preset"))?;
    let output = cfg.required_path("output")?;
    let replicates: Option<usize> = cfg.parse_opt("replicates")?;
    let seed: Option<u64> = cfg.parse_opt("seed")?;
    let defaults = SamplerConfig::default();
    let n_iter = cfg.parse_or("n_iter", defaults.n_iter)?;
    let burn_in = cfg.parse_or("burn_in", defaults.burn_in)?;
    let thin = cfg.parse_or("thin", defaults.thin)?;
    for spec in &mut specs {
        if let Some(r) = replicates {
            spec.replicates = r;
        }
        if let Some(s) = seed {
            // keep presets on distinct streams of the user's seed
            spec.seed = s.wrapping_add(spec.seed);
        }
    }
    let jobs: Vec<(&ScenarioSpec, usize)> = specs
        .iter()
        .flat_map(|s| (0..s.replicates).map(move |r| (s, r)))
        .collect();
    jobs.par_iter()
        .map(|&(spec, r)| -> Result<()> {
            let id = spec.dataset_id(r);
            let dir = output.join(&id);
            let (ds, truth, effects) = simulated_dataset(spec, r)?;
            write_dataset(&dir, &ds)?;
            write_truth(&dir.join("truth.csv"), &truth)?;
            let rows: Vec<Vec<String>> = effects
                .iter()
                .zip(&ds.node_ids)
                .map(|(e, id)| vec![id.clone(), e[0].to_string(), e[1].to_string()])
                .collect();
            write_csv(&dir.join("effects.csv"), &["node_id", "a", "b"], &rows)?;
            let cfg_path = dir.join("fit.cfg");
            std::fs::write(
                &cfg_path,
                fit_template(
                    &id,
                    spec.m,
                    spec.seed.wrapping_add(r as u64),
                    n_iter,
                    burn_in,
                    thin,
                ),
            )
            .map_err(|e| CliError::io(&cfg_path, e))
        })
        .collect::<Result<Vec<()>>>()?;
    println!("wrote {} datasets to {}", jobs.len(), output.display());
    Ok(())
}

// --------------------------------------------------------------------- fit

fn sampler_config(cfg: &Config) -> Result<SamplerConfig> {
    let d = SamplerConfig::default();
    let beta_update = match cfg
        .str("beta_update")
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        None | Some("collapsed") => BetaUpdate::Collapsed,
        Some("conditional") => BetaUpdate::Conditional,
        Some(v) => {
            return Err(CliError::Usage(format!(
                "beta_update must be 'collapsed' or 'conditional', got '{v}'"
            )))
        }
    };
    Ok(SamplerConfig {
        n_iter: cfg.parse_or("n_iter", d.n_iter)?,
        burn_in: cfg.parse_or("burn_in", d.burn_in)?,
        thin: cfg.parse_or("thin", d.thin)?,
        seed: cfg.parse_or("seed", d.seed)?,
        prior_beta_variance: cfg.parse_or("prior_beta_variance", d.prior_beta_variance)?,
        prior_sigma_ab: InverseWishartPrior {
            df: cfg.parse_or("prior_sigma_df", d.prior_sigma_ab.df)?,
            scale: Matrix2::identity(),
        },
        rho_proposal_sd: cfg.parse_or("rho_proposal_sd", d.rho_proposal_sd)?,
        beta_update,
        validate: cfg.bool_or("validate", d.validate)?,
        ..d
    })
}

fn dataset_paths(cfg: &Config) -> Result<DatasetPaths> {
    let mut paths = match cfg.path("data_dir") {
        Some(dir) => DatasetPaths::in_dir(&dir),
        None => DatasetPaths {
            roster: cfg.required_path("roster")?,
            nominations: cfg.required_path("nominations")?,
            node_covariates: None,
            dyad_covariates: None,
        },
    };
    if let Some(p) = cfg.path("roster") {
        paths.roster = p;
    }
    if let Some(p) = cfg.path("nominations") {
        paths.nominations = p;
    }
    if let Some(p) = cfg.path("node_covariates") {
        paths.node_covariates = Some(p);
    }
    if let Some(p) = cfg.path("dyad_covariates") {
        paths.dyad_covariates = Some(p);
    }
    Ok(paths)
}

fn families(cfg: &Config) -> Result<Vec<LikelihoodFamily>> {
    let names = cfg.list("family");
    if names.is_empty() {
        return Ok(vec![LikelihoodFamily::Frn]);
    }
    let mut out: Vec<LikelihoodFamily> = Vec::new();
    for name in &names {
        let f: LikelihoodFamily = name.parse()?;
        if out.contains(&f) {
            return Err(CliError::Usage(format!("family {f} listed twice")));
        }
        out.push(f);
    }
    Ok(out)
}

/// Chains of different families draw from different streams of the seed.
fn chain_index(family: LikelihoodFamily) -> u64 {
    LikelihoodFamily::ALL
        .iter()
        .position(|&f| f == family)
        .unwrap_or(0) as u64
}

pub fn fit(cfg: &Config) -> Result<()> {
    cfg.check_known(FIT_KEYS)?;
    let m: u32 = cfg
        .parse_opt("m")?
        .ok_or_else(|| CliError::Usage("missing required config key 'm'".into()))?;
    let output = cfg.required_path("output")?;
    let base = sampler_config(cfg)?;
    let families = families(cfg)?;
    let spec = DesignSpec {
        intercept: cfg.bool_or("intercept", false)?,
        row: cfg.list("row"),
        col: cfg.list("col"),
        dyad: cfg.list("dyad"),
        normal_scores: cfg.list("normal_scores"),
    };
    let drop_rank_rows = cfg.bool_or("rank_drop_row_effects", false)?;
    let ds = load_dataset(&dataset_paths(cfg)?, m)?;
    let s = build_score_matrix(&ds)?;
    let design = build_design(&ds, &spec)?;
    let rank_design = if drop_rank_rows {
        let spec = DesignSpec {
            intercept: false,
            row: Vec::new(),
            ..spec.clone()
        };
        Some(build_design(&ds, &spec)?)
    } else {
        None
    };
    let truth = match cfg.path("truth") {
        Some(p) => Some(std::fs::canonicalize(&p).map_err(|e| CliError::io(&p, e))?),
        None => None,
    };
    let scenario = cfg.str("scenario").unwrap_or("").to_string();

    let runs: Vec<Result<(LikelihoodFamily, frn_core::ChainOutput)>> = families
        .par_iter()
        .map(|&family| {
            let config = SamplerConfig {
                family,
                chain_index: chain_index(family),
                ..base.clone()
            };
            let design = match (&rank_design, family) {
                (Some(d), LikelihoodFamily::Rank) => d,
                _ => &design,
            };
            Ok((family, run_chain(&s, design, &config)?))
        })
        .collect();
    for run in runs {
        let (family, out) = run?;
        let dir = output.join(family.as_str());
        create_dir(&dir)?;
        write_sample(&dir.join(SAMPLE_FILE), &out.sample)?;
        write_summary(&dir.join(SUMMARY_FILE), &out.sample)?;
        let meta = RunMeta {
            family: Some(family),
            scenario: scenario.clone(),
            seed: base.seed,
            truth: truth.clone(),
            extra: vec![
                ("chain_index".into(), chain_index(family).to_string()),
                ("n_iter".into(), base.n_iter.to_string()),
                ("burn_in".into(), base.burn_in.to_string()),
                ("thin".into(), base.thin.to_string()),
                (
                    "rho_acceptance".into(),
                    out.diagnostics.rho_acceptance_rate().to_string(),
                ),
                (
                    "membership_checks".into(),
                    out.diagnostics.membership_checks.to_string(),
                ),
            ],
        };
        meta.write(&dir.join(META_FILE))?;
        println!("{family}: {} draws -> {}", out.sample.len(), dir.display());
    }
    Ok(())
}

// --------------------------------------------------------------- summarize

pub fn summarize(cfg: &Config) -> Result<()> {
    cfg.check_known(SUMMARIZE_KEYS)?;
    let path = cfg.required_path("sample")?;
    let (sample, _) = load_run(&path)?;
    let out = cfg
        .path("output")
        .unwrap_or_else(|| path.with_file_name(SUMMARY_FILE));
    write_summary(&out, &sample)?;
    for q in quantile_intervals(&sample, &DEFAULT_LEVELS)? {
        println!(
            "{:<16} {:>10.4} {:>10.4} {:>10.4}",
            q.name, q.values[0], q.values[1], q.values[2]
        );
    }
    println!("summary -> {}", out.display());
    Ok(())
}

// ----------------------------------------------------------------- compare

/// Every `sample.csv` at or below `dir`.
fn find_samples(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_samples(&p, out)?;
        } else if p.file_name().is_some_and(|f| f == SAMPLE_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

struct Run {
    sample: PosteriorSample,
    meta: RunMeta,
}

pub fn compare(cfg: &Config) -> Result<()> {
    cfg.check_known(COMPARE_KEYS)?;
    let output = cfg.required_path("output")?;
    let mean_zero = cfg.list("mean_zero_dyads");
    let baseline: LikelihoodFamily = cfg.parse_or("baseline", LikelihoodFamily::CensoredBinary)?;
    let mut paths = cfg.paths("samples");
    for dir in cfg.paths("fits") {
        find_samples(&dir, &mut paths)?;
    }
    if paths.is_empty() {
        return Err(CliError::Usage(
            "no samples found; set 'fits' or 'samples'".into(),
        ));
    }

    // family -> scenario -> run
    let mut runs: BTreeMap<LikelihoodFamily, BTreeMap<String, Run>> = BTreeMap::new();
    for path in &paths {
        let (sample, meta) = load_run(path)?;
        let family = meta.family.ok_or_else(|| {
            CliError::Data(format!(
                "{}: no family recorded in {META_FILE}",
                path.display()
            ))
        })?;
        let scenario = meta.scenario.clone();
        if runs
            .entry(family)
            .or_default()
            .insert(scenario.clone(), Run { sample, meta })
            .is_some()
        {
            return Err(CliError::Data(format!(
                "two {family} samples for scenario '{scenario}'"
            )));
        }
    }
    let scenarios: Vec<String> = runs
        .get(&LikelihoodFamily::Frn)
        .ok_or_else(|| CliError::Data("compare needs FRN samples as the reference".into()))?
        .keys()
        .cloned()
        .collect();
    for (family, by_scenario) in &runs {
        if !by_scenario.keys().eq(scenarios.iter()) {
            return Err(CliError::Data(format!(
                "{family} samples cover scenarios {:?} but FRN covers {:?}",
                by_scenario.keys().collect::<Vec<_>>(),
                scenarios
            )));
        }
    }
    create_dir(&output)?;

    let grouped: BTreeMap<LikelihoodFamily, Vec<PosteriorSample>> = runs
        .iter()
        .map(|(&f, by)| (f, by.values().map(|r| r.sample.clone()).collect()))
        .collect();
    let table = comparison_table(&grouped, |name| EffectGroup::classify(name, &mean_zero))?;
    let na = || "NA".to_string();
    let mut rows = Vec::new();
    println!(
        "{:<16} {:<18} {:>12} {:>12}",
        "family", "group", "median_ratio", "width_ratio"
    );
    for row in &table.rows {
        for (group, cell) in &row.cells {
            let (a, b) = cell.map_or_else(|| (na(), na()), |(m, w)| (m.to_string(), w.to_string()));
            println!(
                "{:<16} {:<18} {:>12} {:>12}",
                row.family.as_str(),
                group.label(),
                fmt_short(cell.map(|c| c.0)),
                fmt_short(cell.map(|c| c.1))
            );
            rows.push(vec![
                row.family.to_string(),
                group.label().to_string(),
                a,
                b,
            ]);
        }
    }
    write_csv(
        &output.join("table.csv"),
        &["family", "group", "median_ratio", "width_ratio"],
        &rows,
    )?;

    let mut rows = Vec::new();
    for scenario in &scenarios {
        for (family, by) in &runs {
            for q in quantile_intervals(&by[scenario].sample, &DEFAULT_LEVELS)? {
                let mut row = vec![scenario.clone(), family.to_string(), q.name];
                row.extend(q.values.iter().map(|v| v.to_string()));
                rows.push(row);
            }
        }
    }
    write_csv(
        &output.join("intervals.csv"),
        &["scenario", "family", "parameter", "q2.5", "median", "q97.5"],
        &rows,
    )?;

    // FRN against the baseline family, around the simulated truth
    let mut rows = Vec::new();
    let mut logs: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    if let Some(base_runs) = runs
        .get(&baseline)
        .filter(|_| baseline != LikelihoodFamily::Frn)
    {
        for scenario in &scenarios {
            let frn = &runs[&LikelihoodFamily::Frn][scenario];
            let Some(truth_path) = &frn.meta.truth else {
                continue;
            };
            let coefficients: Vec<(String, f64)> = crate::output::read_truth(truth_path)?
                .into_iter()
                .filter(|(name, _)| {
                    EffectGroup::classify(name, &mean_zero).is_some()
                        && frn.sample.index_of(name).is_some()
                        && base_runs[scenario].sample.index_of(name).is_some()
                })
                .collect();
            for (name, r) in
                concentration_ratio(&frn.sample, &base_runs[scenario].sample, &coefficients)?
            {
                let e = logs.entry(name.clone()).or_insert((0.0, 0));
                e.0 += r.ln();
                e.1 += 1;
                rows.push(vec![scenario.clone(), name, r.to_string()]);
            }
        }
    }
    for (name, (sum, k)) in &logs {
        rows.push(vec![
            "geometric_mean".into(),
            name.clone(),
            (sum / *k as f64).exp().to_string(),
        ]);
    }
    write_csv(
        &output.join("concentration.csv"),
        &["scenario", "parameter", "ratio"],
        &rows,
    )?;
    println!(
        "comparison of {} scenario(s) -> {}",
        scenarios.len(),
        output.display()
    );
    Ok(())
}

fn fmt_short(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"))
}
