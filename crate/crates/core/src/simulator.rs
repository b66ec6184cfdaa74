//! Synthetic datasets from the generative model, with their ground truth.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{fit_global, McmcConfig};
use crate::process::{sample_prior_hyper, simulate_path, to_transformed, CountryPath, HyperParams};
use crate::rng::{stream, Stream};
use crate::stats::median;
use crate::types::{CrvsYearRecord, Dataset, ProbVector6, SixBoxCounts, StudyKind, StudyObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_countries: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Annual deaths to women of reproductive age per country.
    pub deaths_scale: u64,
    pub true_lambda_world_plus: f64,
    pub true_lambda_world_minus: f64,
    pub true_sigma_plus: f64,
    pub true_sigma_minus: f64,
    pub true_delta_plus: f64,
    pub true_delta_minus: f64,
    pub true_phi: f64,
    /// Each country's true proportion maternal is drawn uniformly from
    /// this range and held constant over time.
    pub truemat_min: f64,
    pub truemat_max: f64,
    /// Completeness of each country-year is drawn uniformly from this range.
    pub completeness_min: f64,
    pub completeness_max: f64,
    pub kappa: f64,
    /// Kinds of the studies, cycled over the studies of each country.
    pub study_kinds: Vec<StudyKind>,
    pub studies_per_country: usize,
    /// Years covered by each study.
    pub study_length: i32,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_countries: 20,
            first_year: 1995,
            last_year: 2015,
            deaths_scale: 50_000,
            true_lambda_world_plus: 0.6,
            true_lambda_world_minus: 0.999,
            true_sigma_plus: 0.3,
            true_sigma_minus: 0.3,
            true_delta_plus: 0.1,
            true_delta_minus: 0.1,
            true_phi: 0.0,
            truemat_min: 0.005,
            truemat_max: 0.03,
            completeness_min: 1.0,
            completeness_max: 1.0,
            kappa: 1.0,
            study_kinds: vec![StudyKind::FminusFplus],
            studies_per_country: 2,
            study_length: 3,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.deaths_scale == 0 {
            return bad("deaths_scale must be positive");
        }
        if self.n_countries == 0 || self.studies_per_country == 0 || self.study_kinds.is_empty() {
            return bad("need at least one country, study and study kind");
        }
        if self.first_year > self.last_year || self.study_length < 1 || self.study_length > self.last_year - self.first_year + 1 {
            return bad("study periods must fit in the year range");
        }
        if !(0.0 < self.truemat_min && self.truemat_min <= self.truemat_max && self.truemat_max < 1.0) {
            return bad("truemat range must lie in (0, 1)");
        }
        if !(0.0 < self.completeness_min && self.completeness_min <= self.completeness_max && self.completeness_max <= 1.0) {
            return bad("completeness range must lie in (0, 1]");
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        self.hypers()?.validate()
    }

    /// The true hyperparameters on the transformed scale.
    pub fn hypers(&self) -> Result<HyperParams> {
        let (p, m) = to_transformed(self.true_lambda_world_plus, self.true_lambda_world_minus)?;
        Ok(HyperParams {
            eta_world_plus: p,
            eta_world_minus: m,
            sigma_plus: self.true_sigma_plus,
            sigma_minus: self.true_sigma_minus,
            delta_plus: self.true_delta_plus,
            delta_minus: self.true_delta_minus,
            phi: self.true_phi,
        })
    }

    /// Study periods of every country, evenly spread over the year range.
    pub fn study_periods(&self) -> Vec<(i32, i32)> {
        let m = self.studies_per_country;
        let room = (self.last_year - self.first_year + 1 - self.study_length) as f64;
        (0..m)
            .map(|k| {
                let off = if m == 1 { room / 2.0 } else { room * k as f64 / (m - 1) as f64 };
                let t1 = self.first_year + off.round() as i32;
                (t1, t1 + self.study_length - 1)
            })
            .collect()
    }
}

/// True values of one country-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthYear {
    pub year: i32,
    pub se: f64,
    pub sp: f64,
    /// True proportion maternal among all deaths.
    pub rho_truemat: f64,
    /// True proportion maternal among registered deaths.
    pub truemat_crvs: f64,
    pub completeness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryTruth {
    pub country: String,
    pub path: CountryPath,
    pub years: Vec<TruthYear>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub hypers: HyperParams,
    pub countries: Vec<CountryTruth>,
}

fn draw_multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0f64;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(left);
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if left == 0 || q == 0.0 { 0 } else { Binomial::new(left, q).expect("valid binomial").sample(rng) };
        out.push(k);
        left -= k;
        mass -= p;
    }
    out
}

/// Six-box counts from a multinomial with the given cell probabilities.
pub fn draw_six_box<R: Rng + ?Sized>(n: u64, p: &ProbVector6, rng: &mut R) -> SixBoxCounts {
    let c = draw_multinomial(n, &p.as_array(), rng);
    SixBoxCounts { t_plus: c[0], t_minus: c[1], f_plus: c[2], f_minus: c[3], u_plus: c[4], u_minus: c[5] }
}

/// A study observation of `kind` reporting on `boxes`.
pub fn study_from_boxes(country: &str, t1: i32, t2: i32, kind: StudyKind, b: &SixBoxCounts) -> StudyObservation {
    use StudyKind::*;
    let mut s = StudyObservation::new(country, t1, t2, kind, b.crvs_total(), b.mat_crvs());
    let unreg = b.u_plus + b.u_minus;
    match kind {
        TruematCrvsOnly => s.z_truemat_crvs = Some(b.truemat_crvs()),
        TruematAndUplus => {
            s.z_truemat_crvs = Some(b.truemat_crvs());
            s.z_uplus = Some(b.u_plus);
        }
        FminusFplusUplus => {
            s.z_fminus = Some(b.f_minus);
            s.z_fplus = Some(b.f_plus);
            s.z_uplus = Some(b.u_plus);
        }
        FminusFplus => {
            s.z_fminus = Some(b.f_minus);
            s.z_fplus = Some(b.f_plus);
        }
        FminusUplus => {
            s.z_fminus = Some(b.f_minus);
            s.z_uplus = Some(b.u_plus);
        }
        FminusOnly => s.z_fminus = Some(b.f_minus),
        TruematInclUnreg => {
            s.z_truemat = Some(b.truemat());
            s.z_unreg = Some(unreg);
        }
    }
    s
}

fn country_id(i: usize) -> String {
    format!("C{:03}", i + 1)
}

/// Simulates countries from the full six-box model: annual paths of
/// sensitivity and specificity, annual multinomial counts, CRVS records for
/// every year and studies aggregating the counts over their periods.
pub fn simulate_dataset(cfg: &ScenarioConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let h = cfg.hypers()?;
    let periods = cfg.study_periods();
    let t_ref = (periods[0].0 + periods[periods.len() - 1].1).div_euclid(2);
    let mut ds = Dataset::default();
    let mut truth = GroundTruth { hypers: h, countries: vec![] };
    for ci in 0..cfg.n_countries {
        let id = country_id(ci);
        let mut rng: Stream = stream(cfg.seed, ci as u64);
        let mut path = simulate_path(&h, &id, t_ref, cfg.first_year..=cfg.last_year, &mut rng)?;
        let rho = rng.random_range(cfg.truemat_min..=cfg.truemat_max);
        let mut years = vec![];
        let mut boxes = vec![];
        for y in cfg.first_year..=cfg.last_year {
            let (se, sp) = path.natural_at(y).expect("year on path");
            let c = if cfg.completeness_min == cfg.completeness_max {
                cfg.completeness_min
            } else {
                rng.random_range(cfg.completeness_min..=cfg.completeness_max)
            };
            let p = ProbVector6::from_misclassification(se, sp, rho, c, cfg.kappa)?;
            let n = (cfg.deaths_scale as f64 * rng.random_range(0.8..1.2)).round() as u64;
            let b = draw_six_box(n, &p, &mut rng);
            let gamma_tm = rho / (c + (1.0 - c) * cfg.kappa);
            years.push(TruthYear { year: y, se, sp, rho_truemat: rho, truemat_crvs: gamma_tm, completeness: c });
            ds.crvs.push(CrvsYearRecord {
                country: id.clone(),
                year: y,
                mat_crvs: b.mat_crvs(),
                crvs_total: b.crvs_total(),
                who_envelope: n as f64,
                completeness: c,
            });
            boxes.push(b);
        }
        for (k, (t1, t2)) in periods.iter().enumerate() {
            let kind = cfg.study_kinds[k % cfg.study_kinds.len()];
            let agg = (*t1..=*t2)
                .map(|y| boxes[(y - cfg.first_year) as usize])
                .fold(SixBoxCounts::default(), |a, b| a.add(&b));
            ds.studies.push(study_from_boxes(&id, *t1, *t2, kind, &agg));
        }
        path.periods = periods.clone();
        path.truemat = periods
            .iter()
            .map(|(t1, t2)| {
                let ys = &years[(t1 - cfg.first_year) as usize..=(t2 - cfg.first_year) as usize];
                ys.iter().map(|y| y.truemat_crvs).sum::<f64>() / ys.len() as f64
            })
            .collect();
        truth.countries.push(CountryTruth { country: id, path, years });
    }
    Ok((ds, truth))
}

/// Scenario for data drawn exactly from the fitted model: hyperparameters
/// from their prior, one true proportion maternal per single-year study
/// from `U(0, 1)`, CRVS counts only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelScenario {
    pub n_countries: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub studies_per_country: usize,
    pub deaths_per_study: u64,
    pub study_kinds: Vec<StudyKind>,
    pub seed: u64,
}

impl Default for ModelScenario {
    fn default() -> Self {
        Self {
            n_countries: 8,
            first_year: 2000,
            last_year: 2010,
            studies_per_country: 2,
            deaths_per_study: 2000,
            study_kinds: vec![StudyKind::FminusFplus],
            seed: 1,
        }
    }
}

/// Draws a dataset from the model itself. Fit it with likelihood
/// constraints off for calibration checks.
pub fn simulate_from_model(sc: &ModelScenario) -> Result<(Dataset, GroundTruth)> {
    if sc.n_countries == 0 || sc.studies_per_country == 0 || sc.study_kinds.is_empty() || sc.first_year > sc.last_year {
        return Err(Error::Config("model scenario needs countries, studies, kinds and a year range".into()));
    }
    let mut rng = stream(sc.seed, u64::MAX);
    let h = sample_prior_hyper(&mut rng);
    let span = sc.last_year - sc.first_year;
    let m = sc.studies_per_country;
    let years: Vec<i32> = (0..m)
        .map(|k| sc.first_year + if m == 1 { span / 2 } else { (span as f64 * k as f64 / (m - 1) as f64).round() as i32 })
        .collect();
    let t_ref = (years[0] + years[m - 1]).div_euclid(2);
    let mut ds = Dataset::default();
    let mut truth = GroundTruth { hypers: h, countries: vec![] };
    for ci in 0..sc.n_countries {
        let id = country_id(ci);
        let mut rng = stream(sc.seed, ci as u64);
        let mut path = simulate_path(&h, &id, t_ref, sc.first_year..=sc.last_year, &mut rng)?;
        let mut tys = vec![];
        for (k, &y) in years.iter().enumerate() {
            let (se, sp) = path.natural_at(y).expect("year on path");
            let tm: f64 = rng.random();
            let g = crate::process::gamma_from_eta(
                crate::process::se_to_eta(se),
                crate::process::sp_to_eta(sp),
                crate::stats::logit(tm),
            );
            let c = draw_multinomial(sc.deaths_per_study, &g.as_array(), &mut rng);
            let b = SixBoxCounts { t_plus: c[0], f_minus: c[1], t_minus: c[2], f_plus: c[3], u_plus: 0, u_minus: 0 };
            let kind = sc.study_kinds[k % sc.study_kinds.len()];
            ds.studies.push(study_from_boxes(&id, y, y, kind, &b));
            path.periods.push((y, y));
            path.truemat.push(tm);
            tys.push(TruthYear { year: y, se, sp, rho_truemat: tm, truemat_crvs: tm, completeness: 1.0 });
        }
        truth.countries.push(CountryTruth { country: id, path, years: tys });
    }
    Ok((ds, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdjustmentStrategy {
    /// Multiply every reported proportion maternal by 1.5.
    Constant1_5,
    /// Invert the misclassification model at the posterior medians.
    ModelBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyScore {
    pub strategy: AdjustmentStrategy,
    /// Mean absolute error of the adjusted against the true proportion
    /// maternal among registered deaths, over all country-years.
    pub mae: f64,
    pub n: usize,
}

/// Proportion maternal implied by a reported one under the misclassification
/// model: solves `reported = se p + (1 - sp)(1 - p)` for `p`.
pub fn invert_reported_pm(reported: f64, se: f64, sp: f64) -> f64 {
    let fp = 1.0 - sp;
    ((reported - fp) / (se - fp)).clamp(0.0, 1.0)
}

/// Scores adjustment strategies against the truth over every CRVS record.
/// The model-based strategy fits the global model with `fit_config`.
pub fn compare_adjustments(
    dataset: &Dataset,
    truth: &GroundTruth,
    strategies: &[AdjustmentStrategy],
    fit_config: &McmcConfig,
) -> Result<Vec<StrategyScore>> {
    let mut cells = vec![];
    for r in &dataset.crvs {
        let Some(ct) = truth.countries.iter().find(|c| c.country == r.country) else { continue };
        let Some(ty) = ct.years.iter().find(|y| y.year == r.year) else { continue };
        if r.crvs_total > 0 {
            cells.push((r, ty.truemat_crvs));
        }
    }
    let mut out = vec![];
    for &s in strategies {
        let errs: Vec<f64> = match s {
            AdjustmentStrategy::Constant1_5 => cells
                .iter()
                .map(|(r, t)| (1.5 * r.mat_crvs as f64 / r.crvs_total as f64 - t).abs())
                .collect(),
            AdjustmentStrategy::ModelBased => {
                let fit = fit_global(dataset, fit_config)?;
                cells
                    .iter()
                    .map(|(r, t)| {
                        let c = fit.country_index(&r.country).expect("country in fit");
                        let d = fit.natural_draws(c, r.year, fit_config.seed);
                        let se = median(&d.iter().map(|x| x.0).collect::<Vec<_>>());
                        let sp = median(&d.iter().map(|x| x.1).collect::<Vec<_>>());
                        (invert_reported_pm(r.mat_crvs as f64 / r.crvs_total as f64, se, sp) - t).abs()
                    })
                    .collect()
            }
        };
        let n = errs.len();
        out.push(StrategyScore { strategy: s, mae: errs.iter().sum::<f64>() / n.max(1) as f64, n });
    }
    Ok(out)
}
