//! Out-of-sample validation: leave out studies, refit, and compare observed
//! CRVS proportions maternal with their predictions.

use rand::seq::SliceRandom;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{fit_global, McmcConfig, PosteriorSamples};
use crate::postprocess::no_study_draws;
use crate::rng::stream;
use crate::stats::{median, quantile};
use crate::types::{Dataset, StudyObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValidationScheme {
    /// Repeatedly leave out a random share of the studies.
    Random20,
    /// Leave out each country's most recent study.
    LeaveLast,
}

impl ValidationScheme {
    pub fn name(self) -> &'static str {
        match self {
            ValidationScheme::Random20 => "RANDOM20",
            ValidationScheme::LeaveLast => "LEAVE_LAST",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub fit: McmcConfig,
    pub frac: f64,
    pub reps: usize,
    pub seed: u64,
    /// Add binomial sampling noise to each predicted count instead of using
    /// its expectation.
    pub sampling_noise: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { fit: McmcConfig::desk(), frac: 0.2, reps: 20, seed: 1, sampling_noise: false }
    }
}

/// Prediction of one left-out study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftOutResult {
    pub rep: usize,
    pub country: String,
    pub t1: i32,
    pub t2: i32,
    pub observed_pm: f64,
    /// Median over posterior draws of `(observed - predicted) / z_crvs`.
    pub median_error: f64,
    pub pi_lower: f64,
    pub pi_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scheme: ValidationScheme,
    pub n_reps: usize,
    pub n_failed_reps: usize,
    pub n_leftout: usize,
    pub me: f64,
    pub mae: f64,
    pub mre_pct: f64,
    pub mare_pct: f64,
    pub prop_below_80: f64,
    pub prop_above_80: f64,
    pub observations: Vec<LeftOutResult>,
}

fn with_studies(dataset: &Dataset, studies: Vec<StudyObservation>) -> Dataset {
    Dataset { studies, crvs: dataset.crvs.clone() }
}

/// `reps` random splits, each leaving out `round(frac * n)` studies.
pub fn split_random(dataset: &Dataset, frac: f64, reps: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let n = dataset.studies.len();
    if n < 5 {
        return Err(Error::EmptyDataset("random splits need at least five studies"));
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::Config(format!("left-out fraction {frac} outside (0, 1)")));
    }
    let n_test = ((frac * n as f64).round() as usize).clamp(1, n - 1);
    Ok((0..reps)
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut test_mask = vec![false; n];
            for &i in &idx[..n_test] {
                test_mask[i] = true;
            }
            let (mut train, mut test) = (vec![], vec![]);
            for (s, t) in dataset.studies.iter().zip(&test_mask) {
                if *t { test.push(s.clone()) } else { train.push(s.clone()) }
            }
            (with_studies(dataset, train), with_studies(dataset, test))
        })
        .collect())
}

/// Leaves out each country's latest study: the latest midpoint, then the
/// latest end year, then the last in input order.
pub fn split_leave_last(dataset: &Dataset) -> (Dataset, Dataset) {
    let mut last: std::collections::BTreeMap<&str, usize> = Default::default();
    for (i, s) in dataset.studies.iter().enumerate() {
        let e = last.entry(s.country.as_str()).or_insert(i);
        let cur = &dataset.studies[*e];
        if (s.midpoint(), s.t2) >= (cur.midpoint(), cur.t2) {
            *e = i;
        }
    }
    let left: std::collections::BTreeSet<usize> = last.into_values().collect();
    let (mut train, mut test) = (vec![], vec![]);
    for (i, s) in dataset.studies.iter().enumerate() {
        if left.contains(&i) { test.push(s.clone()) } else { train.push(s.clone()) }
    }
    (with_studies(dataset, train), with_studies(dataset, test))
}

/// Expected CRVS maternal count given sensitivity, specificity and the true
/// maternal count among registered deaths.
pub fn predict_matcrvs(se: f64, sp: f64, z_truemat_crvs: u64, z_crvs: u64) -> f64 {
    z_truemat_crvs as f64 * se + (z_crvs - z_truemat_crvs) as f64 * (1.0 - sp)
}

/// Predictions for the scorable studies of `test` from a fit to the
/// training data.
pub fn score_test_set(
    fit: &PosteriorSamples,
    test: &Dataset,
    rep: usize,
    seed: u64,
    sampling_noise: bool,
) -> Vec<LeftOutResult> {
    let mut out = vec![];
    for (j, s) in test.studies.iter().enumerate() {
        let (Some(tm), true) = (s.implied_truemat_crvs(), s.z_crvs > 0) else { continue };
        let year = s.midpoint();
        let draws = match fit.country_index(&s.country) {
            Some(c) => fit.natural_draws(c, year, seed ^ (j as u64).wrapping_mul(0x9e37_79b9)),
            None => no_study_draws(fit, 0, seed, j as u64),
        };
        let mut rng = stream(seed.wrapping_add(rep as u64), j as u64);
        let n = s.z_crvs as f64;
        let pred_pm: Vec<f64> = draws
            .iter()
            .map(|&(se, sp)| {
                if sampling_noise {
                    let tp = Binomial::new(tm, se).map(|b| b.sample(&mut rng)).unwrap_or(0);
                    let fp = Binomial::new(s.z_crvs - tm, 1.0 - sp).map(|b| b.sample(&mut rng)).unwrap_or(0);
                    (tp + fp) as f64 / n
                } else {
                    predict_matcrvs(se, sp, tm, s.z_crvs) / n
                }
            })
            .collect();
        let observed_pm = s.z_matcrvs as f64 / n;
        let errors: Vec<f64> = pred_pm.iter().map(|p| observed_pm - p).collect();
        out.push(LeftOutResult {
            rep,
            country: s.country.clone(),
            t1: s.t1,
            t2: s.t2,
            observed_pm,
            median_error: median(&errors),
            pi_lower: quantile(&pred_pm, 0.1),
            pi_upper: quantile(&pred_pm, 0.9),
        });
    }
    out
}

/// Pools left-out results into the summary metrics.
pub fn summarize(scheme: ValidationScheme, n_reps: usize, n_failed: usize, observations: Vec<LeftOutResult>) -> ValidationReport {
    let err: Vec<f64> = observations.iter().map(|o| o.median_error).collect();
    let abs: Vec<f64> = err.iter().map(|e| e.abs()).collect();
    let rel: Vec<f64> =
        observations.iter().filter(|o| o.observed_pm > 0.0).map(|o| 100.0 * o.median_error / o.observed_pm).collect();
    let arel: Vec<f64> = rel.iter().map(|e| e.abs()).collect();
    let n = observations.len();
    let frac = |f: &dyn Fn(&LeftOutResult) -> bool| {
        if n == 0 { f64::NAN } else { observations.iter().filter(|o| f(o)).count() as f64 / n as f64 }
    };
    let med = |v: &[f64]| if v.is_empty() { f64::NAN } else { median(v) };
    ValidationReport {
        scheme,
        n_reps,
        n_failed_reps: n_failed,
        n_leftout: n,
        me: med(&err),
        mae: med(&abs),
        mre_pct: med(&rel),
        mare_pct: med(&arel),
        prop_below_80: frac(&|o| o.observed_pm < o.pi_lower),
        prop_above_80: frac(&|o| o.observed_pm > o.pi_upper),
        observations,
    }
}

/// Runs a validation scheme end to end. A training fit that fails is
/// counted in `n_failed_reps` and skipped.
pub fn run_validation(dataset: &Dataset, scheme: ValidationScheme, config: &ValidationConfig) -> Result<ValidationReport> {
    config.fit.validate()?;
    let splits = match scheme {
        ValidationScheme::Random20 => split_random(dataset, config.frac, config.reps, config.seed)?,
        ValidationScheme::LeaveLast => vec![split_leave_last(dataset)],
    };
    let results: Vec<Option<Vec<LeftOutResult>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = splits
            .iter()
            .enumerate()
            .map(|(rep, (train, test))| {
                scope.spawn(move || {
                    let mut fit_cfg = config.fit.clone();
                    fit_cfg.seed = config.fit.seed.wrapping_add(rep as u64);
                    let fit = fit_global(train, &fit_cfg).ok()?;
                    Some(score_test_set(&fit, test, rep, config.seed, config.sampling_noise))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("validation thread panicked")).collect()
    });
    let n_failed = results.iter().filter(|r| r.is_none()).count();
    let obs: Vec<LeftOutResult> = results.into_iter().flatten().flatten().collect();
    Ok(summarize(scheme, splits.len(), n_failed, obs))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::StudyKind;

    fn obs(c: &str, t1: i32, t2: i32) -> StudyObservation {
        let mut s = StudyObservation::new(c, t1, t2, StudyKind::TruematCrvsOnly, 1000, 10);
        s.z_truemat_crvs = Some(15);
        s
    }

    fn ds(n: usize) -> Dataset {
        Dataset::new((0..n).map(|i| obs("A", 1990 + i as i32, 1990 + i as i32)).collect(), vec![])
    }

    #[test]
    fn random_split_sizes_and_partition() {
        let d = ds(10);
        let splits = split_random(&d, 0.2, 5, 3).unwrap();
        assert_eq!(splits.len(), 5);
        for (train, test) in &splits {
            assert_eq!(test.studies.len(), 2);
            let mut all: Vec<i32> = train.studies.iter().chain(&test.studies).map(|s| s.t1).collect();
            all.sort();
            assert_eq!(all, (1990..2000).collect::<Vec<_>>());
        }
        assert_eq!(splits, split_random(&d, 0.2, 5, 3).unwrap());
        assert_ne!(splits, split_random(&d, 0.2, 5, 4).unwrap());
        assert!(split_random(&ds(4), 0.2, 5, 3).is_err());
    }

    #[test]
    fn leave_last_rules() {
        let d = Dataset::new(vec![obs("A", 2010, 2010), obs("A", 2000, 2000), obs("B", 2004, 2006), obs("B", 2005, 2005), obs("C", 1999, 1999)], vec![]);
        let (train, test) = split_leave_last(&d);
        let left: Vec<(&str, i32, i32)> = test.studies.iter().map(|s| (s.country.as_str(), s.t1, s.t2)).collect();
        assert_eq!(left, vec![("A", 2010, 2010), ("B", 2004, 2006), ("C", 1999, 1999)]);
        assert_eq!(train.studies.len(), 2);
        assert!(train.studies.iter().all(|s| s.country != "C"));
    }

    #[test]
    fn prediction_examples() {
        assert_eq!(predict_matcrvs(1.0, 1.0, 37, 500), 37.0);
        assert!((predict_matcrvs(0.6, 0.999, 100, 10_000) - 69.9).abs() < 1e-9);
        assert!(predict_matcrvs(0.7, 1.0, 100, 1000) > predict_matcrvs(0.6, 1.0, 100, 1000));
    }

    #[test]
    fn single_observation_summary() {
        let o = LeftOutResult {
            rep: 0,
            country: "A".into(),
            t1: 2000,
            t2: 2000,
            observed_pm: 0.02,
            median_error: -0.004,
            pi_lower: 0.021,
            pi_upper: 0.03,
        };
        let r = summarize(ValidationScheme::LeaveLast, 1, 0, vec![o]);
        assert_eq!(r.me, -0.004);
        assert_eq!(r.mae, 0.004);
        assert!((r.mre_pct + 20.0).abs() < 1e-9);
        assert_eq!(r.prop_below_80, 1.0);
        assert_eq!(r.prop_above_80, 0.0);
    }

    #[test]
    fn errors_are_antisymmetric() {
        let obs_pm = 0.013;
        let preds = [0.011, 0.012, 0.016];
        let e: Vec<f64> = preds.iter().map(|p| obs_pm - p).collect();
        let swapped: Vec<f64> = preds.iter().map(|p| p - obs_pm).collect();
        assert_eq!(median(&e), -median(&swapped));
    }
}
