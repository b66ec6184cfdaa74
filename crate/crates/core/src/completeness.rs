//! CRVS completeness from registered deaths against life-table envelopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::CrvsYearRecord;

const Z_975: f64 = 1.959963984540054;

/// Threshold on the upper 95% bound above which a year counts as complete.
pub const COMPLETE_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowAlignment {
    /// `year - w/2 ..= year + w/2`, truncated at the ends of the series.
    #[default]
    Centered,
    /// `year - w + 1 ..= year`.
    Trailing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub width: u32,
    pub alignment: WindowAlignment,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { width: 5, alignment: WindowAlignment::Centered }
    }
}

impl WindowSpec {
    fn bounds(&self, year: i32) -> (i32, i32) {
        let w = self.width.max(1) as i32;
        match self.alignment {
            WindowAlignment::Centered => (year - w / 2, year + (w - 1) / 2),
            WindowAlignment::Trailing => (year - w + 1, year),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearCompleteness {
    pub year: i32,
    pub ratio: f64,
    pub ci_upper_95: f64,
    pub complete_flag: bool,
    /// Completeness used downstream: 1 for complete countries, otherwise the
    /// ratio capped at 1.
    pub completeness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessAssessment {
    pub country: String,
    pub years: Vec<YearCompleteness>,
    pub country_complete: bool,
}

/// Ratio of registered deaths to the envelope over the window around
/// `year`, and the upper bound of its 95% interval treating the registered
/// count as Poisson (normal approximation).
pub fn completeness_ratio(records: &[CrvsYearRecord], year: i32, window: WindowSpec) -> Result<(f64, f64)> {
    let (lo, hi) = window.bounds(year);
    let (count, envelope) = records
        .iter()
        .filter(|r| (lo..=hi).contains(&r.year))
        .fold((0.0, 0.0), |(c, e), r| (c + r.crvs_total as f64, e + r.who_envelope));
    if envelope <= 0.0 {
        return Err(Error::EmptyDenominator("no envelope inside completeness window"));
    }
    Ok(ratio_with_upper(count, envelope))
}

pub(crate) fn ratio_with_upper(count: f64, envelope: f64) -> (f64, f64) {
    (count / envelope, (count + Z_975 * count.sqrt()) / envelope)
}

pub fn assess(records: &[CrvsYearRecord], window: WindowSpec) -> Result<CompletenessAssessment> {
    let first = records.first().ok_or(Error::EmptyDataset("no CRVS records"))?;
    let mut sorted: Vec<&CrvsYearRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.year);
    let mut years = Vec::with_capacity(sorted.len());
    for r in &sorted {
        let (ratio, ci) = completeness_ratio(records, r.year, window)?;
        years.push(YearCompleteness {
            year: r.year,
            ratio,
            ci_upper_95: ci,
            complete_flag: ci > COMPLETE_THRESHOLD,
            completeness: ratio.min(1.0),
        });
    }
    let country_complete = years.iter().all(|y| y.complete_flag);
    if country_complete {
        for y in &mut years {
            y.completeness = 1.0;
        }
    }
    Ok(CompletenessAssessment { country: first.country.clone(), years, country_complete })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn rec(year: i32, total: u64, env: f64) -> CrvsYearRecord {
        CrvsYearRecord { country: "A".into(), year, mat_crvs: 0, crvs_total: total, who_envelope: env, completeness: 1.0 }
    }

    /// Exact (Garwood) upper 95% bound for a Poisson count.
    fn exact_poisson_upper(count: f64) -> f64 {
        ChiSquared::new(2.0 * (count + 1.0)).unwrap().inverse_cdf(0.975) / 2.0
    }

    #[test]
    fn ratio_examples() {
        let single = WindowSpec { width: 1, ..Default::default() };
        let (r, ci) = completeness_ratio(&[rec(2000, 950, 1000.0)], 2000, single).unwrap();
        assert!((r - 0.95).abs() < 1e-15);
        assert!((ci - 1.012).abs() < 0.002, "ci {ci}");
        let exact = exact_poisson_upper(950.0) / 1000.0;
        assert!((ci - exact).abs() < 0.005, "normal {ci} vs exact {exact}");
        let (r0, _) = completeness_ratio(&[rec(2000, 0, 1000.0)], 2000, single).unwrap();
        assert_eq!(r0, 0.0);
    }

    #[test]
    fn window_sums_are_pooled() {
        let recs: Vec<_> = (0..5).map(|i| rec(2000 + i, 190, 200.0)).collect();
        let (r, _) = completeness_ratio(&recs, 2002, WindowSpec::default()).unwrap();
        assert!((r - 0.95).abs() < 1e-15);
        // Edge year uses the truncated window 2000..=2002.
        let (r, _) = completeness_ratio(&recs, 2000, WindowSpec::default()).unwrap();
        assert!((r - 0.95).abs() < 1e-15);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert!(completeness_ratio(&[rec(2000, 1, 1.0)], 2010, WindowSpec::default()).is_err());
        assert!(assess(&[], WindowSpec::default()).is_err());
    }

    #[test]
    fn complete_country() {
        let recs: Vec<_> = (0..6).map(|i| rec(2000 + i, 9950, 10_000.0)).collect();
        let a = assess(&recs, WindowSpec::default()).unwrap();
        assert!(a.country_complete);
        assert!(a.years.iter().all(|y| y.completeness == 1.0));
    }

    #[test]
    fn one_incomplete_year_makes_country_incomplete() {
        let single = WindowSpec { width: 1, ..Default::default() };
        let recs = vec![rec(2000, 9950, 10_000.0), rec(2001, 8900, 10_000.0)];
        let a = assess(&recs, single).unwrap();
        assert!(!a.country_complete);
        assert!(a.years[1].ci_upper_95 < 0.95);
        assert!((a.years[1].completeness - 0.89).abs() < 1e-12);
    }

    #[test]
    fn ratios_above_one_are_capped() {
        let single = WindowSpec { width: 1, ..Default::default() };
        let recs = vec![rec(2000, 10_500, 10_000.0), rec(2001, 9800, 10_000.0), rec(2002, 5000, 10_000.0)];
        let a = assess(&recs, single).unwrap();
        assert!(!a.country_complete);
        let c: Vec<f64> = a.years.iter().map(|y| y.completeness).collect();
        assert_eq!(c[0], 1.0);
        assert!((c[1] - 0.98).abs() < 1e-12);
        assert!((c[2] - 0.5).abs() < 1e-12);
        assert!(a.years[0].ratio > 1.0, "raw ratio is kept for the completeness test");
    }

    #[test]
    fn assess_is_idempotent() {
        let recs: Vec<_> = (0..8).map(|i| rec(1990 + i, 800 + 30 * i as u64, 1000.0)).collect();
        let a = assess(&recs, WindowSpec::default()).unwrap();
        let b = assess(&recs, WindowSpec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ratio_monotone_in_registered_deaths() {
        let recs: Vec<_> = (0..5).map(|i| rec(2000 + i, 500, 1000.0)).collect();
        let (base, _) = completeness_ratio(&recs, 2002, WindowSpec::default()).unwrap();
        for i in 0..5 {
            let mut more = recs.clone();
            more[i].crvs_total += 37;
            let (r, _) = completeness_ratio(&more, 2002, WindowSpec::default()).unwrap();
            assert!(r >= base);
        }
    }

    #[test]
    fn trailing_window() {
        let recs: Vec<_> = (0..5).map(|i| rec(2000 + i, 100 * (i as u64 + 1), 1000.0)).collect();
        let w = WindowSpec { width: 2, alignment: WindowAlignment::Trailing };
        let (r, _) = completeness_ratio(&recs, 2003, w).unwrap();
        assert!((r - 0.35).abs() < 1e-12);
    }
}
