use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crvsadj::bmat::theta_variance;
use crvsadj::completeness::assess;
use crvsadj::io::{
    parse_crvs, parse_studies, sha256_hex, write_atomic, write_crvs, write_studies, RunArtifact, RunConfig,
};
use crvsadj::mcmc::{fit_global_with_progress, Progress};
use crvsadj::postprocess::{
    adjustment_factor, fit_one_country, hyper_summaries, lag_validation, postprocess_country, predict_no_study,
    YearEstimate,
};
use crvsadj::simulator::simulate_dataset;
use crvsadj::validation::{run_validation, ValidationScheme};
use crvsadj::{Dataset, PosteriorSamples};

use crate::output::{
    emit, encode, file_id, table_path, write_json, AdjustRow, BmatRow, DiagnosticRow, EstimateRow, PredictRow,
    SummaryRow, ValidationRow,
};
use crate::{Common, Format, Scheme, Unconverged, Usage};

const CONFIG_FILE: &str = "config.toml";
const STUDIES_FILE: &str = "studies.csv";
const CRVS_FILE: &str = "crvs.csv";
const POSTERIOR_FILE: &str = "posterior.json";
const RUN_FILE: &str = "run.json";
const TIMING_FILE: &str = "timing.json";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn apply_seed(cfg: &mut RunConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.mcmc.seed = s;
        cfg.validation.seed = s;
        cfg.scenario.seed = s;
        cfg.kappa.seed = s;
    }
}

/// The configuration from `--config`, else from `fallback`, else defaults.
fn load_config(common: &Common, fallback: Option<&Path>) -> Result<(RunConfig, Option<Vec<u8>>)> {
    let path = common.config.as_deref().or(fallback.filter(|p| p.exists()));
    let (mut cfg, bytes) = match path {
        Some(p) => {
            let bytes = read_bytes(p)?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| Usage(format!("{} is not UTF-8", p.display())))?;
            let cfg = RunConfig::from_toml_str(&text).with_context(|| format!("in {}", p.display()))?;
            (cfg, Some(bytes))
        }
        None => (RunConfig::default(), None),
    };
    apply_seed(&mut cfg, common.seed);
    cfg.validate()?;
    Ok((cfg, bytes))
}

struct Inputs {
    dataset: Dataset,
    hashes: BTreeMap<String, String>,
}

fn load_dataset(studies: &Path, crvs: Option<&Path>) -> Result<Inputs> {
    let mut hashes = BTreeMap::new();
    let sb = read_bytes(studies)?;
    hashes.insert("studies".to_owned(), sha256_hex(&sb));
    let s = parse_studies(sb.as_slice()).with_context(|| format!("in {}", studies.display()))?;
    let c = match crvs {
        Some(p) => {
            let cb = read_bytes(p)?;
            hashes.insert("crvs".to_owned(), sha256_hex(&cb));
            parse_crvs(cb.as_slice()).with_context(|| format!("in {}", p.display()))?
        }
        None => Vec::new(),
    };
    let dataset = Dataset::new(s, c);
    dataset.validate()?;
    Ok(Inputs { dataset, hashes })
}

fn load_run_dataset(run: &Path) -> Result<Dataset> {
    let crvs = run.join(CRVS_FILE);
    Ok(load_dataset(&run.join(STUDIES_FILE), crvs.exists().then_some(crvs.as_path()))?.dataset)
}

fn load_posterior(run: &Path) -> Result<PosteriorSamples> {
    let p = run.join(POSTERIOR_FILE);
    let bytes = read_bytes(&p).map_err(|e| Usage(format!("{e:#}; is {} a run directory?", run.display())))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", p.display()))
}

/// True when `marker` exists and the command should not redo the work.
fn already_done(marker: &Path, common: &Common) -> bool {
    if marker.exists() && !common.force {
        eprintln!("{} exists; nothing to do (use --force to redo)", marker.display());
        return true;
    }
    false
}

fn progress_printer(quiet: bool) -> impl Fn(Progress) + Sync {
    move |p: Progress| {
        if !quiet {
            eprintln!("chain {} iteration {}/{}", p.chain, p.iteration, p.n_iter);
        }
    }
}

fn last_year(ds: &Dataset, cfg: &RunConfig) -> i32 {
    cfg.last_year.unwrap_or_else(|| {
        let crvs = ds.crvs.iter().map(|r| r.year);
        let studies = ds.studies.iter().map(|s| s.t2);
        crvs.chain(studies).max().unwrap_or(0)
    })
}

/// Years reported for a country: from its first datum to the run's last year.
fn horizon(ds: &Dataset, country: &str, last: i32) -> (i32, i32) {
    let crvs = ds.crvs.iter().filter(|r| r.country == country).map(|r| r.year);
    let studies = ds.studies.iter().filter(|s| s.country == country).map(|s| s.t1);
    let first = crvs.chain(studies).min().unwrap_or(last).min(last);
    (first, last)
}

fn country_estimates(post: &PosteriorSamples, ds: &Dataset, cfg: &RunConfig) -> Vec<(String, Vec<YearEstimate>)> {
    let global = predict_no_study(post, 0, cfg.mcmc.seed);
    let last = last_year(ds, cfg);
    post.layouts
        .iter()
        .enumerate()
        .map(|(c, lay)| {
            let h = horizon(ds, &lay.country, last);
            (lay.country.clone(), postprocess_country(post, c, &global, h, cfg.mcmc.seed))
        })
        .collect()
}

fn diagnostics(post: &PosteriorSamples) -> Vec<DiagnosticRow> {
    let mut rows: Vec<DiagnosticRow> = hyper_summaries(post)
        .into_iter()
        .map(|h| DiagnosticRow { quantity: format!("rhat_{}", h.name), chain: None, value: h.rhat })
        .collect();
    for (i, c) in post.chains.iter().enumerate() {
        for (name, v) in [
            ("accept_anchors", c.acceptance.anchors),
            ("accept_hypers", c.acceptance.hypers),
            ("accept_joint", c.acceptance.joint),
        ] {
            rows.push(DiagnosticRow { quantity: name.to_owned(), chain: Some(i), value: Some(v) });
        }
    }
    rows
}

fn write_inputs(dir: &Path, cfg: &RunConfig, ds: &Dataset) -> Result<()> {
    write_atomic(&dir.join(CONFIG_FILE), cfg.to_toml_string()?.as_bytes())?;
    let mut s = Vec::new();
    write_studies(&mut s, &ds.studies)?;
    write_atomic(&dir.join(STUDIES_FILE), &s)?;
    if !ds.crvs.is_empty() {
        let mut c = Vec::new();
        write_crvs(&mut c, &ds.crvs)?;
        write_atomic(&dir.join(CRVS_FILE), &c)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    command: &'static str,
    wall_time_secs: f64,
}

pub fn fit(common: &Common, studies: &Path, crvs: Option<&Path>, out: &Path) -> Result<()> {
    let started = Instant::now();
    let (cfg, cfg_bytes) = load_config(common, None)?;
    let Inputs { dataset, mut hashes } = load_dataset(studies, crvs)?;
    if let Some(b) = &cfg_bytes {
        hashes.insert("config".to_owned(), sha256_hex(b));
    }
    if already_done(&out.join(RUN_FILE), common) {
        return Ok(());
    }
    let post = fit_global_with_progress(&dataset, &cfg.mcmc, &progress_printer(common.quiet))?;

    write_inputs(out, &cfg, &dataset)?;
    write_json(&out.join(POSTERIOR_FILE), &post)?;
    let hypers = hyper_summaries(&post);
    emit(&hypers, Some(out), "hypers", common.format)?;
    emit(&diagnostics(&post), Some(out), "diagnostics", common.format)?;
    for (country, est) in country_estimates(&post, &dataset, &cfg) {
        let rows: Vec<EstimateRow> = est.iter().map(|e| EstimateRow::new(&country, e)).collect();
        emit(&rows, Some(out), &format!("country_{}", file_id(&country)), common.format)?;
    }

    let rhats: Vec<f64> = hypers.iter().take(7).filter_map(|h| h.rhat).collect();
    let max_rhat = rhats.iter().copied().fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    let converged = max_rhat.is_none_or(|r| r <= cfg.rhat_threshold);
    if max_rhat.is_none() {
        eprintln!("warning: R-hat undefined for this configuration");
    }
    let artifact = RunArtifact {
        run_id: out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        command: "fit".to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config: cfg.clone(),
        inputs: hashes,
        dataset_hash: post.dataset_hash.clone(),
        hypers,
        max_rhat,
        converged,
    };
    write_json(&out.join(TIMING_FILE), &Timing { command: "fit", wall_time_secs: started.elapsed().as_secs_f64() })?;
    write_json(&out.join(RUN_FILE), &artifact)?;
    if !common.quiet {
        eprintln!("wrote {}", out.display());
    }
    match max_rhat {
        Some(r) if !converged => Err(Unconverged { max_rhat: r, threshold: cfg.rhat_threshold }.into()),
        _ => Ok(()),
    }
}

pub fn fit_country(
    common: &Common,
    run: &Path,
    country: &str,
    studies: Option<&Path>,
    crvs: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (cfg, _) = load_config(common, Some(&run.join(CONFIG_FILE)))?;
    let post = load_posterior(run)?;
    let dataset = match studies {
        Some(s) => load_dataset(s, crvs)?.dataset,
        None => load_run_dataset(run)?,
    };
    let data = dataset.only_country(country);
    if data.studies.is_empty() {
        return Err(Usage(format!("no studies for country {country}")).into());
    }
    let out: PathBuf = out.map(Path::to_path_buf).unwrap_or_else(|| run.join(format!("fit_country_{}", file_id(country))));
    let stem = format!("country_{}", file_id(country));
    if already_done(&table_path(&out, &stem, common.format), common) {
        return Ok(());
    }
    let fit = fit_one_country(&data, &post, &cfg.mcmc)?;
    let global = predict_no_study(&post, 0, cfg.mcmc.seed);
    let h = horizon(&dataset, country, last_year(&dataset, &cfg));
    let est = postprocess_country(&fit, 0, &global, h, cfg.mcmc.seed);
    write_json(&out.join(POSTERIOR_FILE), &fit)?;
    emit(&diagnostics(&fit), Some(&out), "diagnostics", common.format)?;
    let rows: Vec<EstimateRow> = est.iter().map(|e| EstimateRow::new(country, e)).collect();
    emit(&rows, Some(&out), &stem, common.format)
}

pub fn predict(common: &Common, run: &Path, lags: &[u32], out: Option<&Path>) -> Result<()> {
    let (cfg, _) = load_config(common, Some(&run.join(CONFIG_FILE)))?;
    let post = load_posterior(run)?;
    let rows: Vec<PredictRow> =
        lags.iter().map(|&lag| PredictRow::new(lag, &predict_no_study(&post, lag, cfg.mcmc.seed))).collect();
    emit(&rows, out, "predict", common.format)
}

#[derive(Deserialize)]
struct SeSpIn {
    #[serde(default)]
    country: Option<String>,
    year: i32,
    se: f64,
    sp: f64,
}

#[derive(Deserialize)]
struct TruematIn {
    #[serde(default)]
    country: Option<String>,
    year: i32,
    p_truemat: f64,
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).with_context(|| format!("reading {}", path.display()))?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| crvsadj::Error::Row { row: i + 2, message: e.to_string() })
                .with_context(|| format!("in {}", path.display()))
        })
        .collect()
}

pub fn adjust(common: &Common, summaries: &Path, truemat: Option<&Path>, pm: Option<f64>, out: Option<&Path>) -> Result<()> {
    let rows: Vec<SeSpIn> = read_table(summaries)?;
    let lookup: BTreeMap<(Option<String>, i32), f64> = match (truemat, pm) {
        (Some(p), _) => read_table::<TruematIn>(p)?.into_iter().map(|t| ((t.country, t.year), t.p_truemat)).collect(),
        (None, Some(_)) => BTreeMap::new(),
        (None, None) => return Err(Usage("give --truemat or --pm".into()).into()),
    };
    let mut table = Vec::with_capacity(rows.len());
    for r in rows {
        let p = match pm {
            Some(p) => p,
            None => *lookup
                .get(&(r.country.clone(), r.year))
                .or_else(|| lookup.get(&(None, r.year)))
                .ok_or_else(|| crvsadj::Error::InconsistentCounts(format!("no true PM for year {}", r.year)))?,
        };
        let factor = adjustment_factor(r.se, r.sp, p).with_context(|| format!("year {}", r.year))?;
        table.push(AdjustRow { country: r.country, year: r.year, se: r.se, sp: r.sp, p_truemat: p, factor });
    }
    emit(&table, out, "adjust", common.format)
}

pub fn validate(common: &Common, studies: &Path, crvs: Option<&Path>, scheme: Scheme, out: Option<&Path>) -> Result<()> {
    let (cfg, _) = load_config(common, None)?;
    let ds = load_dataset(studies, crvs)?.dataset;
    let scheme = match scheme {
        Scheme::Random20 => ValidationScheme::Random20,
        Scheme::LeaveLast => ValidationScheme::LeaveLast,
        Scheme::Lags => {
            if let Some(d) = out {
                if already_done(&table_path(d, "validation_lags", common.format), common) {
                    return Ok(());
                }
            }
            let post = fit_global_with_progress(&ds, &cfg.mcmc, &progress_printer(common.quiet))?;
            let rows = lag_validation(&post, &ds, &cfg.lags, cfg.validation.seed);
            return emit(&rows, out, "validation_lags", common.format);
        }
    };
    if let Some(d) = out {
        if already_done(&table_path(d, "validation", common.format), common) {
            return Ok(());
        }
    }
    let r = run_validation(&ds, scheme, &cfg.validation_config())?;
    if r.n_failed_reps > 0 {
        eprintln!("warning: {} of {} training fits failed", r.n_failed_reps, r.n_reps);
    }
    let row = ValidationRow {
        scheme: r.scheme.name(),
        n_reps: r.n_reps,
        n_failed_reps: r.n_failed_reps,
        n_leftout: r.n_leftout,
        me: r.me,
        mae: r.mae,
        mre_pct: r.mre_pct,
        mare_pct: r.mare_pct,
        prop_below_80: r.prop_below_80,
        prop_above_80: r.prop_above_80,
    };
    if let Some(d) = out {
        emit(&r.observations, Some(d), "validation_observations", common.format)?;
    }
    emit(&[row], out, "validation", common.format)
}

#[derive(Serialize)]
struct CompletenessRow {
    country: String,
    year: i32,
    ratio: f64,
    ci_upper_95: f64,
    complete_flag: bool,
    completeness: f64,
    country_complete: bool,
}

pub fn completeness(common: &Common, crvs: &Path, out: Option<&Path>) -> Result<()> {
    let (cfg, _) = load_config(common, None)?;
    let records = parse_crvs(read_bytes(crvs)?.as_slice()).with_context(|| format!("in {}", crvs.display()))?;
    let ds = Dataset::new(vec![], records);
    let mut rows = Vec::new();
    for country in ds.countries() {
        let a = assess(&ds.crvs_for(&country), cfg.completeness)?;
        for y in a.years {
            rows.push(CompletenessRow {
                country: country.clone(),
                year: y.year,
                ratio: y.ratio,
                ci_upper_95: y.ci_upper_95,
                complete_flag: y.complete_flag,
                completeness: y.completeness,
                country_complete: a.country_complete,
            });
        }
    }
    emit(&rows, out, "completeness", common.format)
}

#[derive(Serialize)]
struct TruthRow {
    country: String,
    year: i32,
    se: f64,
    sp: f64,
    rho_truemat: f64,
    truemat_crvs: f64,
    completeness: f64,
}

pub fn simulate(common: &Common, out: &Path) -> Result<()> {
    let (cfg, _) = load_config(common, None)?;
    if already_done(&out.join(STUDIES_FILE), common) {
        return Ok(());
    }
    let (ds, truth) = simulate_dataset(&cfg.scenario)?;
    let rows: Vec<TruthRow> = truth
        .countries
        .iter()
        .flat_map(|c| {
            c.years.iter().map(|y| TruthRow {
                country: c.country.clone(),
                year: y.year,
                se: y.se,
                sp: y.sp,
                rho_truemat: y.rho_truemat,
                truemat_crvs: y.truemat_crvs,
                completeness: y.completeness,
            })
        })
        .collect();
    emit(&rows, Some(out), "truth", common.format)?;
    write_json(&out.join("truth_hypers.json"), &truth.hypers)?;
    if common.format == Format::Json {
        write_atomic(&out.join("studies.json"), &encode(&ds.studies, Format::Json)?)?;
        write_atomic(&out.join("crvs.json"), &encode(&ds.crvs, Format::Json)?)?;
    }
    // studies.csv last: it marks the directory as complete
    let mut c = Vec::new();
    write_crvs(&mut c, &ds.crvs)?;
    write_atomic(&out.join(CRVS_FILE), &c)?;
    write_atomic(&out.join(CONFIG_FILE), cfg.to_toml_string()?.as_bytes())?;
    let mut s = Vec::new();
    write_studies(&mut s, &ds.studies)?;
    write_atomic(&out.join(STUDIES_FILE), &s)?;
    if !common.quiet {
        eprintln!("wrote {} studies and {} CRVS records to {}", ds.studies.len(), ds.crvs.len(), out.display());
    }
    Ok(())
}

/// Completeness by year for one country; years without records take the
/// nearest year's value.
fn completeness_lookup(ds: &Dataset, country: &str, cfg: &RunConfig) -> Result<Box<dyn Fn(i32) -> f64>> {
    let records = ds.crvs_for(country);
    if records.is_empty() {
        return Ok(Box::new(|_| 1.0));
    }
    let by_year: Vec<(i32, f64)> = assess(&records, cfg.completeness)?.years.iter().map(|y| (y.year, y.completeness)).collect();
    Ok(Box::new(move |year| {
        by_year.iter().min_by_key(|(y, _)| (y.abs_diff(year), *y)).map_or(1.0, |(_, c)| *c)
    }))
}

pub fn export_bmat(common: &Common, run: &Path, out: Option<&Path>) -> Result<()> {
    let (cfg, _) = load_config(common, Some(&run.join(CONFIG_FILE)))?;
    let post = load_posterior(run)?;
    let ds = load_run_dataset(run)?;
    let kappa = cfg.kappa.draws();
    let mut rows = Vec::new();
    for (country, est) in country_estimates(&post, &ds, &cfg) {
        let comp = completeness_lookup(&ds, &country, &cfg)?;
        for e in &est {
            let c = comp(e.year);
            let m_hat = theta_variance(c, &kappa)?;
            rows.push(BmatRow::new(&country, e, c, m_hat));
        }
    }
    emit(&rows, out, "bmat", common.format)
}

pub fn summarize(common: &Common, run: &Path, out: Option<&Path>) -> Result<()> {
    let (cfg, _) = load_config(common, Some(&run.join(CONFIG_FILE)))?;
    let post = load_posterior(run)?;
    let ds = load_run_dataset(run)?;
    let rows: Vec<SummaryRow> = country_estimates(&post, &ds, &cfg)
        .iter()
        .flat_map(|(country, est)| est.iter().map(move |e| SummaryRow::new(country, e)))
        .collect();
    emit(&rows, out, "summary", common.format)
}

