//! From posterior samples to adjustment factors and per-year summaries of
//! sensitivity and specificity.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{fit_fixed_hypers, split_rhat, McmcConfig, PosteriorSamples};
use crate::process::{draw_bvn, se_to_eta, sp_to_eta, to_natural, HyperParams};
use crate::rng::stream;
use crate::stats::{median, quantile};
use crate::types::{Dataset, StudyObservation};

/// Years over which backcast estimates move to the global value.
pub const BACKCAST_YEARS: i32 = 5;

/// Ratio of the true proportion maternal to the expected proportion
/// reported by the CRVS.
pub fn adjustment_factor(se: f64, sp: f64, p_truemat: f64) -> Result<f64> {
    let den = se * p_truemat + (1.0 - sp) * (1.0 - p_truemat);
    if !(den > 0.0) {
        return Err(Error::EmptyDenominator("expected reported proportion maternal"));
    }
    if sp == 1.0 {
        // p / (se * p), cancelled so that the limit is exact in floating point.
        return Ok(1.0 / se);
    }
    Ok(p_truemat / den)
}

/// Point estimates and second moments of sensitivity and specificity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisclassSummary {
    /// Posterior medians.
    pub lambda_hat_plus: f64,
    pub lambda_hat_minus: f64,
    pub v_hat_plus: f64,
    pub v_hat_minus: f64,
    /// Covariance of sensitivity and specificity.
    pub u_hat: f64,
    /// Mean of squared sensitivity.
    pub e_hat_plus: f64,
    /// Mean of squared one-minus-specificity.
    pub e_hat_minus: f64,
}

impl MisclassSummary {
    /// Summary of natural-scale `(se, sp)` draws.
    pub fn from_draws(draws: &[(f64, f64)]) -> Self {
        let se: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let sp: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let n = draws.len() as f64;
        let (mp, mm) = (se.iter().sum::<f64>() / n, sp.iter().sum::<f64>() / n);
        let (mut vp, mut vm, mut c, mut ep, mut em) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(a, b) in draws {
            vp += (a - mp) * (a - mp);
            vm += (b - mm) * (b - mm);
            c += (a - mp) * (b - mm);
            ep += a * a;
            em += (1.0 - b) * (1.0 - b);
        }
        Self {
            lambda_hat_plus: median(&se),
            lambda_hat_minus: median(&sp),
            v_hat_plus: vp / n,
            v_hat_minus: vm / n,
            u_hat: c / n,
            e_hat_plus: ep / n,
            e_hat_minus: em / n,
        }
    }

    /// Caps both variances, shrinking the covariance by the same factors,
    /// and keeps the squared moments consistent with the point estimates.
    fn capped(mut self, cap: &MisclassSummary) -> Self {
        let fp = if self.v_hat_plus > cap.v_hat_plus { cap.v_hat_plus / self.v_hat_plus } else { 1.0 };
        let fm = if self.v_hat_minus > cap.v_hat_minus { cap.v_hat_minus / self.v_hat_minus } else { 1.0 };
        self.v_hat_plus *= fp;
        self.v_hat_minus *= fm;
        self.u_hat *= (fp * fm).sqrt();
        self.e_hat_plus = self.v_hat_plus + self.lambda_hat_plus.powi(2);
        self.e_hat_minus = self.v_hat_minus + (1.0 - self.lambda_hat_minus).powi(2);
        self
    }
}

/// How a year's estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    /// Within the span of the country's studies.
    Posterior,
    /// Before the first study, moving toward the global value.
    Backcast,
    /// After the last study, held constant.
    Forecast,
    /// Country without studies.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearEstimate {
    pub year: i32,
    pub source: EstimateSource,
    pub summary: MisclassSummary,
    /// 10% and 90% posterior quantiles of sensitivity and specificity.
    pub se_q10: f64,
    pub se_q90: f64,
    pub sp_q10: f64,
    pub sp_q90: f64,
}

/// Component-wise posterior medians of the hyperparameters.
pub fn hyper_medians(samples: &PosteriorSamples) -> HyperParams {
    if let Some(h) = samples.fixed_hypers {
        return h;
    }
    let draws = samples.hyper_draws();
    let mut a = [0.0; 7];
    for (i, slot) in a.iter_mut().enumerate() {
        let col: Vec<f64> = draws.iter().map(|h| h.as_array()[i]).collect();
        *slot = median(&col);
    }
    HyperParams::from_array(a)
}

/// Posterior quantiles and convergence of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSummary {
    pub name: String,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    /// Split R-hat over chains; absent when undefined.
    pub rhat: Option<f64>,
}

/// Summaries of the seven hyperparameters followed by the world-level
/// sensitivity and specificity.
pub fn hyper_summaries(samples: &PosteriorSamples) -> Vec<HyperSummary> {
    let summarize = |name: &str, chains: Vec<Vec<f64>>| {
        let all: Vec<f64> = chains.iter().flatten().copied().collect();
        HyperSummary {
            name: name.to_owned(),
            q10: quantile(&all, 0.1),
            q50: quantile(&all, 0.5),
            q90: quantile(&all, 0.9),
            rhat: split_rhat(&chains),
        }
    };
    let mut out: Vec<HyperSummary> = HyperParams::NAMES
        .iter()
        .map(|name| summarize(name, samples.hyper_chains(name).unwrap_or_default()))
        .collect();
    for (k, name) in ["lambda_world_plus", "lambda_world_minus"].iter().enumerate() {
        let chains = samples
            .chains
            .iter()
            .map(|c| {
                c.hypers
                    .iter()
                    .map(|h| {
                        let (se, sp) = h.world_natural();
                        if k == 0 { se } else { sp }
                    })
                    .collect()
            })
            .collect();
        out.push(summarize(name, chains));
    }
    out
}

/// Refits one country with the hyperparameters fixed at the global
/// posterior medians. All study kinds are used, including studies counting
/// unregistered deaths.
pub fn fit_one_country(country_data: &Dataset, global_fit: &PosteriorSamples, config: &McmcConfig) -> Result<PosteriorSamples> {
    let countries = country_data.countries();
    if countries.len() != 1 {
        return Err(Error::Config(format!("expected data for one country, got {}", countries.len())));
    }
    if country_data.studies.is_empty() {
        return Err(Error::EmptyDataset("country has no studies; use the no-study prediction"));
    }
    fit_fixed_hypers(country_data, config, hyper_medians(global_fit), &|_| {})
}

/// Predictive draws of `(se, sp)` for a country without studies, `lag`
/// years away from its reference year: one draw per hyperparameter sample.
///
/// Draws use common random numbers across lags: the same standard normals
/// are scaled by `sqrt(lag)`, so intervals widen monotonically with lag.
pub fn no_study_draws(global_fit: &PosteriorSamples, lag: u32, seed: u64, stream_index: u64) -> Vec<(f64, f64)> {
    let mut rng = stream(seed, stream_index);
    let s = (lag as f64).sqrt();
    global_fit
        .hyper_draws()
        .iter()
        .map(|h| {
            let (a, b) = draw_bvn(&mut rng, h.sigma_plus, h.sigma_minus, h.phi);
            let (c, d) = draw_bvn(&mut rng, h.delta_plus, h.delta_minus, h.phi);
            to_natural(h.eta_world_plus + a + s * c, h.eta_world_minus + b + s * d)
        })
        .collect()
}

/// Summary for a country without studies. Point estimates are the global
/// posterior medians; second moments come from the predictive draws.
pub fn predict_no_study(global_fit: &PosteriorSamples, lag: u32, seed: u64) -> MisclassSummary {
    let draws = no_study_draws(global_fit, lag, seed, u64::MAX);
    let mut s = MisclassSummary::from_draws(&draws);
    let world: Vec<(f64, f64)> = global_fit.hyper_draws().iter().map(|h| h.world_natural()).collect();
    let w = MisclassSummary::from_draws(&world);
    s.lambda_hat_plus = w.lambda_hat_plus;
    s.lambda_hat_minus = w.lambda_hat_minus;
    s
}

fn year_estimate(year: i32, source: EstimateSource, summary: MisclassSummary, draws: &[(f64, f64)]) -> YearEstimate {
    let se: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let sp: Vec<f64> = draws.iter().map(|d| d.1).collect();
    YearEstimate {
        year,
        source,
        summary,
        se_q10: quantile(&se, 0.1),
        se_q90: quantile(&se, 0.9),
        sp_q10: quantile(&sp, 0.1),
        sp_q90: quantile(&sp, 0.9),
    }
}

/// Per-year estimates for country `country` over `horizon` (inclusive).
///
/// Years inside the span of the country's studies are posterior summaries.
/// Before the span, point estimates move linearly on the transformed scale
/// from the first informed year to the global value over five years; after
/// it they stay at the last informed value. Outside the span variances are
/// capped at the no-study variance in `global_summary`.
pub fn postprocess_country(
    samples: &PosteriorSamples,
    country: usize,
    global_summary: &MisclassSummary,
    horizon: (i32, i32),
    seed: u64,
) -> Vec<YearEstimate> {
    let lay = &samples.layouts[country];
    let Some((s1, s2)) = lay.span else {
        let draws = samples.natural_draws(country, lay.t_ref, seed);
        return (horizon.0..=horizon.1)
            .map(|y| year_estimate(y, EstimateSource::Global, *global_summary, &draws))
            .collect();
    };
    let inside = |y: i32| MisclassSummary::from_draws(&samples.natural_draws(country, y, seed));
    let first = inside(s1);
    let last = inside(s2);
    let g_eta = (se_to_eta(global_summary.lambda_hat_plus), sp_to_eta(global_summary.lambda_hat_minus));
    let f_eta = (se_to_eta(first.lambda_hat_plus), sp_to_eta(first.lambda_hat_minus));
    (horizon.0..=horizon.1)
        .map(|y| {
            let draws = samples.natural_draws(country, y, seed);
            let raw = MisclassSummary::from_draws(&draws);
            if (s1..=s2).contains(&y) {
                return year_estimate(y, EstimateSource::Posterior, raw, &draws);
            }
            let (source, mut s) = if y < s1 {
                let w = (s1 - y).min(BACKCAST_YEARS) as f64 / BACKCAST_YEARS as f64;
                let (p, m) = to_natural((1.0 - w) * f_eta.0 + w * g_eta.0, (1.0 - w) * f_eta.1 + w * g_eta.1);
                (EstimateSource::Backcast, MisclassSummary { lambda_hat_plus: p, lambda_hat_minus: m, ..raw })
            } else {
                let s = MisclassSummary {
                    lambda_hat_plus: last.lambda_hat_plus,
                    lambda_hat_minus: last.lambda_hat_minus,
                    ..raw
                };
                (EstimateSource::Forecast, s)
            };
            s = s.capped(global_summary);
            year_estimate(y, source, s, &draws)
        })
        .collect()
}

/// Share of observations outside the 80% prediction intervals, per lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagCoverage {
    pub lag: u32,
    pub prop_below: f64,
    pub prop_above: f64,
}

fn observed_truemat(s: &StudyObservation) -> Option<f64> {
    if s.z_crvs == 0 {
        return None;
    }
    s.implied_truemat_crvs().map(|t| t as f64 / s.z_crvs as f64)
}

/// Checks no-study predictive intervals against observed CRVS proportions
/// maternal. For each lag and each country, the study's true proportion
/// maternal is combined with lag-`l` predictive draws of `(se, sp)` and
/// binomial sampling noise; the proportions of observations below and above
/// the 80% interval are averaged within and then across countries.
pub fn lag_validation(global_fit: &PosteriorSamples, dataset: &Dataset, lags: &[u32], seed: u64) -> Vec<LagCoverage> {
    let countries = dataset.countries();
    lags.iter()
        .map(|&lag| {
            let (mut below, mut above, mut n) = (0.0, 0.0, 0usize);
            for (ci, c) in countries.iter().enumerate() {
                let obs: Vec<&StudyObservation> =
                    dataset.studies.iter().filter(|s| &s.country == c && observed_truemat(s).is_some()).collect();
                if obs.is_empty() {
                    continue;
                }
                let draws = no_study_draws(global_fit, lag, seed, ci as u64);
                let mut noise_rng = stream(seed ^ 0x5eed, ci as u64);
                let noise: Vec<f64> = draws.iter().map(|_| noise_rng.sample(StandardNormal)).collect();
                let (mut b, mut a) = (0.0, 0.0);
                for s in &obs {
                    let p = observed_truemat(s).expect("filtered");
                    let nz = s.z_crvs as f64;
                    let pred: Vec<f64> = draws
                        .iter()
                        .zip(&noise)
                        .map(|(&(se, sp), z)| {
                            let pm = se * p + (1.0 - sp) * (1.0 - p);
                            pm + (pm * (1.0 - pm) / nz).sqrt() * z
                        })
                        .collect();
                    let observed = s.z_matcrvs as f64 / nz;
                    if observed < quantile(&pred, 0.1) {
                        b += 1.0;
                    }
                    if observed > quantile(&pred, 0.9) {
                        a += 1.0;
                    }
                }
                below += b / obs.len() as f64;
                above += a / obs.len() as f64;
                n += 1;
            }
            let n = n.max(1) as f64;
            LagCoverage { lag, prop_below: below / n, prop_above: above / n }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adjustment_examples() {
        assert_eq!(adjustment_factor(0.5, 1.0, 0.3).unwrap(), 2.0);
        let a = adjustment_factor(0.6, 0.999, 0.01).unwrap();
        assert!((a - 0.01 / 0.00699).abs() < 1e-12);
        assert!((a - 1.4306).abs() < 1e-4);
        let b = adjustment_factor(0.6, 0.999, 0.005).unwrap();
        assert!((b - 1.2516).abs() < 1e-4 && b < a);
        assert!(adjustment_factor(0.0, 1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn perfect_specificity_gives_inverse_sensitivity(se in 0.1f64..1.0, p in 0.0001f64..0.9999) {
            prop_assert_eq!(adjustment_factor(se, 1.0, p).unwrap(), 1.0 / se);
        }

        #[test]
        fn factor_increases_in_truemat(se in 0.1f64..1.0, sp in 0.95f64..0.9999, p in 0.001f64..0.9, dp in 0.001f64..0.09) {
            prop_assert!(adjustment_factor(se, sp, p + dp).unwrap() > adjustment_factor(se, sp, p).unwrap());
        }

        #[test]
        fn summary_covariance_bounded(xs in prop::collection::vec((0.1f64..1.0, 0.95f64..1.0), 2..50)) {
            let s = MisclassSummary::from_draws(&xs);
            prop_assert!(s.v_hat_plus >= 0.0 && s.v_hat_minus >= 0.0);
            prop_assert!(s.u_hat.abs() <= (s.v_hat_plus * s.v_hat_minus).sqrt() * (1.0 + 1e-9) + 1e-300);
        }
    }

    #[test]
    fn capping_shrinks_covariance_consistently() {
        let s = MisclassSummary {
            lambda_hat_plus: 0.6,
            lambda_hat_minus: 0.999,
            v_hat_plus: 0.04,
            v_hat_minus: 1e-6,
            u_hat: 1e-4,
            e_hat_plus: 0.4,
            e_hat_minus: 1e-6,
        };
        let cap = MisclassSummary { v_hat_plus: 0.01, v_hat_minus: 1e-5, ..s };
        let c = s.capped(&cap);
        assert_eq!(c.v_hat_plus, 0.01);
        assert_eq!(c.v_hat_minus, 1e-6);
        assert!((c.u_hat - 0.5e-4).abs() < 1e-18);
        assert!(c.u_hat.abs() <= (c.v_hat_plus * c.v_hat_minus).sqrt());
    }
}
