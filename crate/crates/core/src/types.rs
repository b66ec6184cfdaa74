//! Six-box accounting of deaths to women of reproductive age, study records
//! and civil-registration year records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::likelihood::GammaFour;

/// Death counts by registration status and true/reported maternal cause.
///
/// `t_*`/`f_*` are deaths registered in the CRVS (true or false
/// positive/negative maternal), `u_*` are unregistered deaths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SixBoxCounts {
    pub t_plus: u64,
    pub t_minus: u64,
    pub f_plus: u64,
    pub f_minus: u64,
    pub u_plus: u64,
    pub u_minus: u64,
}

impl SixBoxCounts {
    pub fn crvs_total(&self) -> u64 {
        self.t_plus + self.t_minus + self.f_plus + self.f_minus
    }

    pub fn grand_total(&self) -> u64 {
        self.crvs_total() + self.u_plus + self.u_minus
    }

    /// Maternal deaths as reported by the CRVS (`T+ + F+`).
    pub fn mat_crvs(&self) -> u64 {
        self.t_plus + self.f_plus
    }

    /// True maternal deaths among registered deaths (`T+ + F-`).
    pub fn truemat_crvs(&self) -> u64 {
        self.t_plus + self.f_minus
    }

    pub fn truemat(&self) -> u64 {
        self.truemat_crvs() + self.u_plus
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self {
            t_plus: self.t_plus * k,
            t_minus: self.t_minus * k,
            f_plus: self.f_plus * k,
            f_minus: self.f_minus * k,
            u_plus: self.u_plus * k,
            u_minus: self.u_minus * k,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            t_plus: self.t_plus + o.t_plus,
            t_minus: self.t_minus + o.t_minus,
            f_plus: self.f_plus + o.f_plus,
            f_minus: self.f_minus + o.f_minus,
            u_plus: self.u_plus + o.u_plus,
            u_minus: self.u_minus + o.u_minus,
        }
    }
}

/// The CRVS-based observed proportion maternal, `(T+ + F+) / y_crvs`.
pub fn crvs_pm(counts: &SixBoxCounts) -> Result<f64> {
    let total = counts.crvs_total();
    if total == 0 {
        return Err(Error::EmptyDenominator("crvs_total"));
    }
    Ok(counts.mat_crvs() as f64 / total as f64)
}

/// Multinomial cell probabilities of the six boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbVector6 {
    pub t_plus: f64,
    pub t_minus: f64,
    pub f_plus: f64,
    pub f_minus: f64,
    pub u_plus: f64,
    pub u_minus: f64,
}

impl ProbVector6 {
    pub fn new(
        t_plus: f64,
        t_minus: f64,
        f_plus: f64,
        f_minus: f64,
        u_plus: f64,
        u_minus: f64,
    ) -> Result<Self> {
        let v = Self { t_plus, t_minus, f_plus, f_minus, u_plus, u_minus };
        let a = v.as_array();
        if a.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(format!("cell probability outside [0,1]: {a:?}")));
        }
        let s: f64 = a.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("cell probabilities sum to {s}")));
        }
        Ok(v)
    }

    /// Builds the six cell probabilities from misclassification parameters,
    /// the true proportion maternal among all deaths, CRVS completeness and
    /// the ratio `kappa` of maternal risk outside versus inside the CRVS.
    pub fn from_misclassification(
        se: f64,
        sp: f64,
        rho_truemat: f64,
        rho_crvs: f64,
        kappa: f64,
    ) -> Result<Self> {
        let gamma_truemat = rho_truemat / (rho_crvs + (1.0 - rho_crvs) * kappa);
        let unreg_mat = kappa * gamma_truemat;
        if !(0.0..=1.0).contains(&gamma_truemat) || !(0.0..=1.0).contains(&unreg_mat) {
            return Err(Error::Domain(format!(
                "implied maternal probabilities out of range: inside {gamma_truemat}, outside {unreg_mat}"
            )));
        }
        let t_plus = rho_crvs * se * gamma_truemat;
        let f_minus = rho_crvs * gamma_truemat - t_plus;
        let t_minus = rho_crvs * sp * (1.0 - gamma_truemat);
        let f_plus = rho_crvs * (1.0 - gamma_truemat) - t_minus;
        let u_plus = (1.0 - rho_crvs) * unreg_mat;
        let u_minus = (1.0 - rho_crvs) - u_plus;
        Ok(Self { t_plus, t_minus, f_plus, f_minus, u_plus, u_minus })
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.t_plus, self.t_minus, self.f_plus, self.f_minus, self.u_plus, self.u_minus]
    }

    pub fn rho_crvs(&self) -> f64 {
        self.t_plus + self.t_minus + self.f_plus + self.f_minus
    }

    pub fn rho_truemat(&self) -> f64 {
        self.t_plus + self.f_minus + self.u_plus
    }

    /// CRVS-conditional probabilities `rho_b / sum_{b in CRVS} rho_b`.
    pub fn crvs_conditional(&self) -> Result<GammaFour> {
        let total = self.rho_crvs();
        if total <= 0.0 {
            return Err(Error::EmptyDenominator("rho_crvs"));
        }
        Ok(GammaFour {
            g_tplus: self.t_plus / total,
            g_fminus: self.f_minus / total,
            g_tminus: self.t_minus / total,
            g_fplus: self.f_plus / total,
        })
    }
}

/// What a specialized study reported, one variant per reporting pattern.
///
/// The first six variants inform the global fit. `TruematInclUnreg` counts
/// all true maternal deaths including unregistered ones and is only used in
/// single-country fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StudyKind {
    TruematCrvsOnly,
    TruematAndUplus,
    FminusFplusUplus,
    FminusFplus,
    FminusUplus,
    FminusOnly,
    TruematInclUnreg,
}

impl StudyKind {
    pub const ALL: [StudyKind; 7] = [
        StudyKind::TruematCrvsOnly,
        StudyKind::TruematAndUplus,
        StudyKind::FminusFplusUplus,
        StudyKind::FminusFplus,
        StudyKind::FminusUplus,
        StudyKind::FminusOnly,
        StudyKind::TruematInclUnreg,
    ];

    pub fn in_global_fit(self) -> bool {
        self != StudyKind::TruematInclUnreg
    }

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::TruematCrvsOnly => "TRUEMAT_CRVS_ONLY",
            StudyKind::TruematAndUplus => "TRUEMAT_AND_UPLUS",
            StudyKind::FminusFplusUplus => "FMINUS_FPLUS_UPLUS",
            StudyKind::FminusFplus => "FMINUS_FPLUS",
            StudyKind::FminusUplus => "FMINUS_UPLUS",
            StudyKind::FminusOnly => "FMINUS_ONLY",
            StudyKind::TruematInclUnreg => "TRUEMAT_INCL_UNREG",
        }
    }

    /// Infers the kind from which optional count columns are present.
    pub fn infer(
        truemat_crvs: bool,
        truemat: bool,
        fminus: bool,
        fplus: bool,
        uplus: bool,
        unreg: bool,
    ) -> Option<StudyKind> {
        use StudyKind::*;
        if truemat_crvs {
            return Some(if uplus { TruematAndUplus } else { TruematCrvsOnly });
        }
        if fminus {
            return Some(match (fplus, uplus) {
                (true, true) => FminusFplusUplus,
                (true, false) => FminusFplus,
                (false, true) => FminusUplus,
                (false, false) => FminusOnly,
            });
        }
        if truemat && unreg {
            return Some(TruematInclUnreg);
        }
        None
    }
}

impl std::fmt::Display for StudyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One specialized-study record for a country-period. Absent categories are
/// `None`; zero is a legal observed count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyObservation {
    pub country: String,
    pub t1: i32,
    pub t2: i32,
    pub kind: StudyKind,
    pub z_crvs: u64,
    pub z_matcrvs: u64,
    pub z_truemat_crvs: Option<u64>,
    pub z_truemat: Option<u64>,
    pub z_fminus: Option<u64>,
    pub z_fplus: Option<u64>,
    pub z_uplus: Option<u64>,
    pub z_unreg: Option<u64>,
    pub z_env: Option<u64>,
    pub z_tot: Option<u64>,
}

impl StudyObservation {
    /// A study with only the CRVS counts filled in; callers set the
    /// category counts and kind.
    pub fn new(country: impl Into<String>, t1: i32, t2: i32, kind: StudyKind, z_crvs: u64, z_matcrvs: u64) -> Self {
        Self {
            country: country.into(),
            t1,
            t2,
            kind,
            z_crvs,
            z_matcrvs,
            z_truemat_crvs: None,
            z_truemat: None,
            z_fminus: None,
            z_fplus: None,
            z_uplus: None,
            z_unreg: None,
            z_env: None,
            z_tot: None,
        }
    }

    /// Reference year of the study, the floor of the period midpoint.
    pub fn midpoint(&self) -> i32 {
        (self.t1 + self.t2).div_euclid(2)
    }

    fn require(&self, field: Option<u64>, name: &str) -> Result<u64> {
        field.ok_or_else(|| {
            Error::InconsistentCounts(format!("{} study requires {name}", self.kind))
        })
    }

    /// Checks that the counts implied by the kind are present and mutually
    /// consistent.
    pub fn validate(&self) -> Result<()> {
        use StudyKind::*;
        let bad = |msg: String| Err(Error::InconsistentCounts(msg));
        if self.t1 > self.t2 {
            return bad(format!("t1 {} after t2 {}", self.t1, self.t2));
        }
        if self.z_matcrvs > self.z_crvs {
            return bad(format!("z_matcrvs {} exceeds z_crvs {}", self.z_matcrvs, self.z_crvs));
        }
        if let Some(tm) = self.z_truemat_crvs {
            if tm > self.z_crvs {
                return bad(format!("z_truemat_crvs {tm} exceeds z_crvs {}", self.z_crvs));
            }
        }
        if let Some(fm) = self.z_fminus {
            if fm > self.z_crvs - self.z_matcrvs {
                return bad(format!(
                    "z_fminus {fm} exceeds deaths reported non-maternal {}",
                    self.z_crvs - self.z_matcrvs
                ));
            }
        }
        if let Some(fp) = self.z_fplus {
            if fp > self.z_matcrvs {
                return bad(format!("z_fplus {fp} exceeds z_matcrvs {}", self.z_matcrvs));
            }
        }
        if let (Some(env), Some(tot)) = (self.z_env, self.z_tot) {
            if env > tot {
                return bad(format!("z_env {env} exceeds z_tot {tot}"));
            }
        }
        match self.kind {
            TruematCrvsOnly => {
                self.require(self.z_truemat_crvs, "z_truemat_crvs")?;
            }
            TruematAndUplus => {
                self.require(self.z_truemat_crvs, "z_truemat_crvs")?;
                self.require(self.z_uplus, "z_uplus")?;
            }
            FminusFplusUplus | FminusFplus => {
                self.require(self.z_fminus, "z_fminus")?;
                self.require(self.z_fplus, "z_fplus")?;
                if self.kind == FminusFplusUplus {
                    self.require(self.z_uplus, "z_uplus")?;
                }
            }
            FminusUplus => {
                self.require(self.z_fminus, "z_fminus")?;
                self.require(self.z_uplus, "z_uplus")?;
            }
            FminusOnly => {
                self.require(self.z_fminus, "z_fminus")?;
            }
            TruematInclUnreg => {
                let tm = self.require(self.z_truemat, "z_truemat")?;
                let unreg = self.require(self.z_unreg, "z_unreg")?;
                if tm > self.z_crvs + unreg {
                    return bad(format!(
                        "z_truemat {tm} exceeds registered plus unregistered deaths {}",
                        self.z_crvs + unreg
                    ));
                }
            }
        }
        Ok(())
    }

    /// True maternal deaths among registered deaths when reported or implied
    /// by a complete breakdown (`T+ + F-`).
    pub fn implied_truemat_crvs(&self) -> Option<u64> {
        match self.kind {
            StudyKind::TruematCrvsOnly | StudyKind::TruematAndUplus => self.z_truemat_crvs,
            StudyKind::FminusFplus | StudyKind::FminusFplusUplus => {
                let t_plus = self.z_matcrvs - self.z_fplus?;
                Some(t_plus + self.z_fminus?)
            }
            _ => None,
        }
    }

    /// Observed CRVS-based proportion maternal of the study period.
    pub fn crvs_pm(&self) -> Option<f64> {
        (self.z_crvs > 0).then(|| self.z_matcrvs as f64 / self.z_crvs as f64)
    }

    /// A crude study-based estimate of the true proportion maternal among
    /// registered deaths, used for sampler initialization.
    pub fn empirical_truemat(&self) -> f64 {
        let n = self.z_crvs.max(1) as f64;
        let raw = match self.kind {
            StudyKind::TruematInclUnreg => {
                let unreg = self.z_unreg.unwrap_or(0) as f64;
                self.z_truemat.unwrap_or(0) as f64 / (n + unreg).max(1.0)
            }
            _ => match self.implied_truemat_crvs() {
                Some(tm) => tm as f64 / n,
                None => (self.z_matcrvs + self.z_fminus.unwrap_or(0)) as f64 / n,
            },
        };
        raw.clamp(1e-6, 1.0 - 1e-6)
    }
}

/// One country-year of CRVS data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrvsYearRecord {
    pub country: String,
    pub year: i32,
    pub mat_crvs: u64,
    pub crvs_total: u64,
    /// Estimated deaths to women aged 15-49 from life tables.
    pub who_envelope: f64,
    #[serde(default = "default_completeness")]
    pub completeness: f64,
}

fn default_completeness() -> f64 {
    1.0
}

impl CrvsYearRecord {
    pub fn validate(&self) -> Result<()> {
        if self.mat_crvs > self.crvs_total {
            return Err(Error::InconsistentCounts(format!(
                "{} {}: mat_crvs {} exceeds crvs_total {}",
                self.country, self.year, self.mat_crvs, self.crvs_total
            )));
        }
        if !(self.who_envelope > 0.0) {
            return Err(Error::Domain(format!(
                "{} {}: who_envelope must be positive",
                self.country, self.year
            )));
        }
        Ok(())
    }
}

/// Sums maternal and total CRVS deaths of one country over `[t1, t2]`.
pub fn aggregate_period(records: &[CrvsYearRecord], t1: i32, t2: i32) -> Result<(u64, u64)> {
    let mut by_year: BTreeMap<i32, &CrvsYearRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| (t1..=t2).contains(&r.year)) {
        if by_year.insert(r.year, r).is_some() {
            return Err(Error::InconsistentCounts(format!(
                "duplicate record for {} {}",
                r.country, r.year
            )));
        }
    }
    let missing: Vec<i32> = (t1..=t2).filter(|y| !by_year.contains_key(y)).collect();
    if !missing.is_empty() {
        let country = records.first().map(|r| r.country.clone()).unwrap_or_default();
        return Err(Error::MissingYears { country, years: missing });
    }
    Ok(by_year
        .values()
        .fold((0, 0), |(m, c), r| (m + r.mat_crvs, c + r.crvs_total)))
}

/// Studies plus CRVS year records. Countries with CRVS records but no
/// studies are still part of the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub studies: Vec<StudyObservation>,
    pub crvs: Vec<CrvsYearRecord>,
}

impl Dataset {
    pub fn new(studies: Vec<StudyObservation>, crvs: Vec<CrvsYearRecord>) -> Self {
        Self { studies, crvs }
    }

    /// All country identifiers, sorted.
    pub fn countries(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .studies
            .iter()
            .map(|s| s.country.as_str())
            .chain(self.crvs.iter().map(|r| r.country.as_str()))
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn crvs_for(&self, country: &str) -> Vec<CrvsYearRecord> {
        let mut v: Vec<_> = self.crvs.iter().filter(|r| r.country == country).cloned().collect();
        v.sort_by_key(|r| r.year);
        v
    }

    pub fn studies_for(&self, country: &str) -> Vec<StudyObservation> {
        self.studies.iter().filter(|s| s.country == country).cloned().collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.studies.iter().enumerate() {
            s.validate().map_err(|e| Error::Row { row: i + 1, message: e.to_string() })?;
        }
        for (i, r) in self.crvs.iter().enumerate() {
            r.validate().map_err(|e| Error::Row { row: i + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("dataset serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Restricts to one country.
    pub fn only_country(&self, country: &str) -> Dataset {
        Dataset {
            studies: self.studies_for(country),
            crvs: self.crvs_for(country),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boxes(t_plus: u64, f_plus: u64, t_minus: u64, f_minus: u64) -> SixBoxCounts {
        SixBoxCounts { t_plus, t_minus, f_plus, f_minus, u_plus: 0, u_minus: 0 }
    }

    #[test]
    fn crvs_pm_examples() {
        assert_eq!(crvs_pm(&boxes(5, 5, 90, 0)).unwrap(), 0.10);
        assert_eq!(crvs_pm(&boxes(0, 0, 100, 0)).unwrap(), 0.0);
        let c = boxes(58, 1, 9900, 41);
        assert_eq!(c.crvs_total(), 10_000);
        assert!((crvs_pm(&c).unwrap() - 0.0059).abs() < 1e-15);
        assert!(matches!(crvs_pm(&SixBoxCounts::default()), Err(Error::EmptyDenominator(_))));
    }

    #[test]
    fn totals() {
        let c = SixBoxCounts { t_plus: 1, t_minus: 2, f_plus: 3, f_minus: 4, u_plus: 5, u_minus: 6 };
        assert_eq!(c.crvs_total(), 10);
        assert_eq!(c.grand_total(), 21);
        assert_eq!(c.truemat(), 10);
    }

    fn rec(year: i32, mat: u64, tot: u64) -> CrvsYearRecord {
        CrvsYearRecord {
            country: "A".into(),
            year,
            mat_crvs: mat,
            crvs_total: tot,
            who_envelope: tot as f64,
            completeness: 1.0,
        }
    }

    #[test]
    fn aggregate_examples() {
        let recs = vec![rec(2000, 10, 1000)];
        assert_eq!(aggregate_period(&recs, 2000, 2000).unwrap(), (10, 1000));
        let recs = vec![rec(2000, 10, 1000), rec(2001, 20, 1000)];
        assert_eq!(aggregate_period(&recs, 2000, 2001).unwrap(), (30, 2000));
        let recs = vec![rec(1990, 5, 500), rec(1991, 7, 700), rec(1992, 8, 800)];
        assert_eq!(aggregate_period(&recs, 1990, 1992).unwrap(), (20, 2000));
    }

    #[test]
    fn aggregate_reports_gaps() {
        let recs = vec![rec(1990, 5, 500), rec(1993, 8, 800)];
        match aggregate_period(&recs, 1990, 1993) {
            Err(Error::MissingYears { years, .. }) => assert_eq!(years, vec![1991, 1992]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn midpoint_floors() {
        let s = StudyObservation::new("A", 2000, 2003, StudyKind::FminusOnly, 10, 1);
        assert_eq!(s.midpoint(), 2001);
        let s = StudyObservation::new("A", 2000, 2000, StudyKind::FminusOnly, 10, 1);
        assert_eq!(s.midpoint(), 2000);
    }

    #[test]
    fn validation_rejects_inconsistent_counts() {
        let mut s = StudyObservation::new("A", 2000, 2000, StudyKind::TruematCrvsOnly, 10, 11);
        s.z_truemat_crvs = Some(3);
        assert!(s.validate().is_err());
        s.z_matcrvs = 2;
        assert!(s.validate().is_ok());
        s.z_truemat_crvs = None;
        assert!(s.validate().is_err(), "kind requires z_truemat_crvs");
        let mut b = StudyObservation::new("A", 2000, 2000, StudyKind::FminusFplus, 10, 2);
        b.z_fminus = Some(1);
        b.z_fplus = Some(3);
        assert!(b.validate().is_err(), "F+ larger than reported maternal");
        b.z_fplus = Some(1);
        assert!(b.validate().is_ok());
        assert_eq!(b.implied_truemat_crvs(), Some(2));
    }

    #[test]
    fn kind_inference() {
        use StudyKind::*;
        assert_eq!(StudyKind::infer(true, false, false, false, false, false), Some(TruematCrvsOnly));
        assert_eq!(StudyKind::infer(true, false, false, false, true, false), Some(TruematAndUplus));
        assert_eq!(StudyKind::infer(false, false, true, true, true, false), Some(FminusFplusUplus));
        assert_eq!(StudyKind::infer(false, false, true, true, false, false), Some(FminusFplus));
        assert_eq!(StudyKind::infer(false, false, true, false, true, false), Some(FminusUplus));
        assert_eq!(StudyKind::infer(false, false, true, false, false, false), Some(FminusOnly));
        assert_eq!(StudyKind::infer(false, true, false, false, false, true), Some(TruematInclUnreg));
        assert_eq!(StudyKind::infer(false, false, false, false, false, false), None);
    }

    #[test]
    fn six_box_probabilities_from_misclassification() {
        let rho = ProbVector6::from_misclassification(0.6, 0.999, 0.01, 0.9, 1.0).unwrap();
        let s: f64 = rho.as_array().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((rho.rho_truemat() - 0.01).abs() < 1e-15);
        assert!((rho.rho_crvs() - 0.9).abs() < 1e-15);
        let g = rho.crvs_conditional().unwrap();
        assert!((g.g_tplus / (g.g_tplus + g.g_fminus) - 0.6).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn crvs_conditional_sums_to_one(
            w in proptest::collection::vec(0.0f64..1.0, 6)
        ) {
            let s: f64 = w.iter().sum();
            prop_assume!(w[0] + w[1] + w[2] + w[3] > 1e-3);
            let n: Vec<f64> = w.iter().map(|x| x / s).collect();
            let last = 1.0 - n[..5].iter().sum::<f64>();
            if let Ok(rho) = ProbVector6::new(n[0], n[1], n[2], n[3], n[4], last.max(0.0)) {
                let g = rho.crvs_conditional().unwrap();
                let total = g.g_tplus + g.g_fminus + g.g_tminus + g.g_fplus;
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn crvs_pm_scale_invariant(
            tp in 0u64..500, fp in 0u64..500, tm in 1u64..5000, fm in 0u64..500, k in 1u64..50
        ) {
            let c = boxes(tp, fp, tm, fm);
            let a = crvs_pm(&c).unwrap();
            let b = crvs_pm(&c.scaled(k)).unwrap();
            prop_assert!((a - b).abs() < 1e-14);
        }

        #[test]
        fn aggregate_single_year_is_identity(mat in 0u64..100, extra in 0u64..10_000, year in 1950i32..2030) {
            let r = rec(year, mat, mat + extra);
            prop_assert_eq!(aggregate_period(&[r], year, year).unwrap(), (mat, mat + extra));
        }
    }
}
