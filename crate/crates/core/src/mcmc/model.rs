//! Flattened, read-only description of the sampled state shared by all
//! chains.
//!
//! Only *anchor* years are sampled: each country's reference year plus the
//! reference years of its study periods. Between two anchors the random walk
//! is integrated out exactly, since the sum of `g` annual bivariate normal
//! innovations is bivariate normal with covariance `g` times the annual one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::StudyLikelihood;
use crate::stats::logit;
use crate::types::{Dataset, StudyObservation};

/// Where a country's sampled quantities live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryLayout {
    pub country: String,
    pub t_ref: i32,
    /// Sorted, distinct anchor years. Always contains `t_ref`.
    pub anchors: Vec<i32>,
    pub ref_index: usize,
    /// Study periods, one true proportion maternal each.
    pub periods: Vec<(i32, i32)>,
    /// First and last year covered by the country's studies.
    pub span: Option<(i32, i32)>,
}

impl CountryLayout {
    pub fn anchor_index(&self, year: i32) -> Option<usize> {
        self.anchors.binary_search(&year).ok()
    }

    pub fn period_index(&self, t1: i32, t2: i32) -> Option<usize> {
        self.periods.iter().position(|p| *p == (t1, t2))
    }
}

pub(crate) struct PreparedObs {
    pub anchor: usize,
    pub period: usize,
    pub lik: StudyLikelihood,
}

pub(crate) struct Model {
    pub layouts: Vec<CountryLayout>,
    pub anchor_offset: Vec<usize>,
    pub n_anchors: usize,
    pub n_periods: usize,
    pub anchor_country: Vec<usize>,
    /// Years since the previous anchor of the same country; zero for a
    /// country's first anchor.
    pub anchor_gap: Vec<f64>,
    pub is_ref: Vec<bool>,
    pub is_last: Vec<bool>,
    pub obs: Vec<PreparedObs>,
    pub anchor_obs: Vec<Vec<usize>>,
    pub anchor_periods: Vec<Vec<usize>>,
    pub init_logit_truemat: Vec<f64>,
    pub n_increments: usize,
    pub ln_gap_sum: f64,
}

impl Model {
    /// Builds the layout for every country in the dataset, using the
    /// studies accepted by `include`.
    pub fn build(
        dataset: &Dataset,
        include: impl Fn(&StudyObservation) -> bool,
        apply_constraints: bool,
    ) -> Result<Self> {
        let countries = dataset.countries();
        if countries.is_empty() {
            return Err(Error::EmptyDataset("no countries in dataset"));
        }
        let mut by_country: BTreeMap<&str, Vec<&StudyObservation>> = BTreeMap::new();
        for s in dataset.studies.iter().filter(|s| include(s)) {
            s.validate()?;
            by_country.entry(s.country.as_str()).or_default().push(s);
        }

        let mut m = Model {
            layouts: Vec::with_capacity(countries.len()),
            anchor_offset: Vec::with_capacity(countries.len()),
            n_anchors: 0,
            n_periods: 0,
            anchor_country: vec![],
            anchor_gap: vec![],
            is_ref: vec![],
            is_last: vec![],
            obs: vec![],
            anchor_obs: vec![],
            anchor_periods: vec![],
            init_logit_truemat: vec![],
            n_increments: 0,
            ln_gap_sum: 0.0,
        };

        for (ci, country) in countries.iter().enumerate() {
            let studies = by_country.get(country.as_str()).cloned().unwrap_or_default();
            let span = studies
                .iter()
                .map(|s| (s.t1, s.t2))
                .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)));
            let t_ref = match span {
                Some((a, b)) => (a + b).div_euclid(2),
                None => {
                    let years: Vec<i32> =
                        dataset.crvs.iter().filter(|r| &r.country == country).map(|r| r.year).collect();
                    match (years.iter().min(), years.iter().max()) {
                        (Some(a), Some(b)) => (a + b).div_euclid(2),
                        // Countries only appear through studies or CRVS records.
                        _ => (studies[0].t1 + studies[0].t2).div_euclid(2),
                    }
                }
            };
            let mut periods: Vec<(i32, i32)> = studies.iter().map(|s| (s.t1, s.t2)).collect();
            periods.sort_unstable();
            periods.dedup();
            let mut anchors: Vec<i32> =
                periods.iter().map(|(a, b)| (a + b).div_euclid(2)).chain([t_ref]).collect();
            anchors.sort_unstable();
            anchors.dedup();
            let ref_index = anchors.binary_search(&t_ref).expect("reference year is an anchor");

            let a0 = m.n_anchors;
            let p0 = m.n_periods;
            m.anchor_offset.push(a0);
            for (k, year) in anchors.iter().enumerate() {
                m.anchor_country.push(ci);
                let gap = if k == 0 { 0.0 } else { (year - anchors[k - 1]) as f64 };
                if k > 0 {
                    m.n_increments += 1;
                    m.ln_gap_sum += gap.ln();
                }
                m.anchor_gap.push(gap);
                m.is_ref.push(k == ref_index);
                m.is_last.push(k + 1 == anchors.len());
                m.anchor_obs.push(vec![]);
                m.anchor_periods.push(vec![]);
            }
            for (pi, (t1, t2)) in periods.iter().enumerate() {
                let a = a0 + anchors.binary_search(&(t1 + t2).div_euclid(2)).expect("period anchor");
                m.anchor_periods[a].push(p0 + pi);
                let inits: Vec<f64> = studies
                    .iter()
                    .filter(|s| (s.t1, s.t2) == (*t1, *t2))
                    .map(|s| s.empirical_truemat())
                    .collect();
                let mean = inits.iter().sum::<f64>() / inits.len() as f64;
                m.init_logit_truemat.push(logit(mean.clamp(1e-6, 1.0 - 1e-6)));
            }
            for s in &studies {
                let pi = periods.iter().position(|p| *p == (s.t1, s.t2)).expect("period");
                let a = a0 + anchors.binary_search(&s.midpoint()).expect("study anchor");
                let lik = StudyLikelihood::prepare(s, apply_constraints)?;
                m.anchor_obs[a].push(m.obs.len());
                m.obs.push(PreparedObs { anchor: a, period: p0 + pi, lik });
            }
            m.n_anchors += anchors.len();
            m.n_periods += periods.len();
            m.layouts.push(CountryLayout {
                country: country.clone(),
                t_ref,
                anchors,
                ref_index,
                periods,
                span,
            });
        }
        Ok(m)
    }

    pub fn n_countries(&self) -> usize {
        self.layouts.len()
    }
}
