//! File formats: study and CRVS tables, the run configuration, and atomic
//! writes of run artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bmat::{KappaModel, VarianceReading};
use crate::completeness::WindowSpec;
use crate::error::{Error, Result};
use crate::mcmc::McmcConfig;
use crate::postprocess::HyperSummary;
use crate::simulator::ScenarioConfig;
use crate::types::{CrvsYearRecord, Dataset, StudyKind, StudyObservation};
use crate::validation::ValidationConfig;

pub const STUDY_COLUMNS: [&str; 13] = [
    "country",
    "t1",
    "t2",
    "z_crvs",
    "z_matcrvs",
    "z_truemat_crvs",
    "z_truemat",
    "z_fminus",
    "z_fplus",
    "z_uplus",
    "z_unreg",
    "z_env",
    "z_tot",
];

pub const CRVS_COLUMNS: [&str; 5] = ["country", "year", "mat_crvs", "crvs_total", "who_envelope"];

/// Optional sixth column of the CRVS table.
const COMPLETENESS_COLUMN: &str = "completeness";

fn header_index(headers: &csv::StringRecord, required: &[&str], optional: &[&str]) -> Result<BTreeMap<String, usize>> {
    let mut idx = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if !required.contains(&h) && !optional.contains(&h) {
            return Err(Error::Row { row: 1, message: format!("unknown column '{h}'") });
        }
        if idx.insert(h.to_owned(), i).is_some() {
            return Err(Error::Row { row: 1, message: format!("duplicate column '{h}'") });
        }
    }
    let missing: Vec<&str> = required.iter().copied().filter(|c| !idx.contains_key(*c)).collect();
    if !missing.is_empty() {
        return Err(Error::Row { row: 1, message: format!("missing columns {}", missing.join(", ")) });
    }
    Ok(idx)
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    idx: &'a BTreeMap<String, usize>,
    line: usize,
}

impl Row<'_> {
    fn err(&self, message: String) -> Error {
        Error::Row { row: self.line, message }
    }

    fn raw(&self, col: &str) -> &str {
        self.idx.get(col).and_then(|i| self.rec.get(*i)).map(str::trim).unwrap_or("")
    }

    fn text(&self, col: &str) -> Result<String> {
        let v = self.raw(col);
        if v.is_empty() {
            return Err(self.err(format!("{col} is blank")));
        }
        Ok(v.to_owned())
    }

    fn parse<T: std::str::FromStr>(&self, col: &str, what: &str) -> Result<Option<T>> {
        let v = self.raw(col);
        if v.is_empty() {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|_| self.err(format!("{col} '{v}' is not {what}")))
    }

    fn count(&self, col: &str) -> Result<Option<u64>> {
        self.parse(col, "a non-negative integer")
    }

    fn required<T>(&self, col: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| self.err(format!("{col} is blank")))
    }
}

/// Reads the study table. Blank cells are absent counts; the study kind is
/// inferred from the filled columns. Errors carry the line number.
pub fn parse_studies<R: Read>(reader: R) -> Result<Vec<StudyObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let idx = header_index(rdr.headers()?, &STUDY_COLUMNS, &[])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = Row { rec: &rec, idx: &idx, line };
        let t1 = row.parse::<i32>("t1", "a year")?;
        let t2 = row.parse::<i32>("t2", "a year")?;
        let z_crvs = row.count("z_crvs")?;
        let z_matcrvs = row.count("z_matcrvs")?;
        let mut obs = StudyObservation {
            country: row.text("country")?,
            t1: row.required("t1", t1)?,
            t2: row.required("t2", t2)?,
            kind: StudyKind::FminusOnly,
            z_crvs: row.required("z_crvs", z_crvs)?,
            z_matcrvs: row.required("z_matcrvs", z_matcrvs)?,
            z_truemat_crvs: row.count("z_truemat_crvs")?,
            z_truemat: row.count("z_truemat")?,
            z_fminus: row.count("z_fminus")?,
            z_fplus: row.count("z_fplus")?,
            z_uplus: row.count("z_uplus")?,
            z_unreg: row.count("z_unreg")?,
            z_env: row.count("z_env")?,
            z_tot: row.count("z_tot")?,
        };
        obs.kind = StudyKind::infer(
            obs.z_truemat_crvs.is_some(),
            obs.z_truemat.is_some(),
            obs.z_fminus.is_some(),
            obs.z_fplus.is_some(),
            obs.z_uplus.is_some(),
            obs.z_unreg.is_some(),
        )
        .ok_or_else(|| row.err("cannot infer the study kind from the filled columns".into()))?;
        obs.validate().map_err(|e| row.err(e.to_string()))?;
        out.push(obs);
    }
    Ok(out)
}

pub fn read_studies_csv(path: &Path) -> Result<Vec<StudyObservation>> {
    parse_studies(fs::File::open(path)?)
}

fn cell(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_studies<W: Write>(writer: W, studies: &[StudyObservation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(STUDY_COLUMNS)?;
    for s in studies {
        w.write_record([
            s.country.clone(),
            s.t1.to_string(),
            s.t2.to_string(),
            s.z_crvs.to_string(),
            s.z_matcrvs.to_string(),
            cell(s.z_truemat_crvs),
            cell(s.z_truemat),
            cell(s.z_fminus),
            cell(s.z_fplus),
            cell(s.z_uplus),
            cell(s.z_unreg),
            cell(s.z_env),
            cell(s.z_tot),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CRVS table. An optional `completeness` column is accepted;
/// completeness defaults to 1.
pub fn parse_crvs<R: Read>(reader: R) -> Result<Vec<CrvsYearRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let idx = header_index(rdr.headers()?, &CRVS_COLUMNS, &[COMPLETENESS_COLUMN])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = Row { rec: &rec, idx: &idx, line };
        let year = row.parse::<i32>("year", "a year")?;
        let mat = row.count("mat_crvs")?;
        let total = row.count("crvs_total")?;
        let env = row.parse::<f64>("who_envelope", "a number")?;
        let completeness = row.parse::<f64>(COMPLETENESS_COLUMN, "a number")?.unwrap_or(1.0);
        if !(completeness > 0.0 && completeness <= 1.0) {
            return Err(row.err(format!("completeness {completeness} outside (0, 1]")));
        }
        let r = CrvsYearRecord {
            country: row.text("country")?,
            year: row.required("year", year)?,
            mat_crvs: row.required("mat_crvs", mat)?,
            crvs_total: row.required("crvs_total", total)?,
            who_envelope: row.required("who_envelope", env)?,
            completeness,
        };
        r.validate().map_err(|e| row.err(e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

pub fn read_crvs_csv(path: &Path) -> Result<Vec<CrvsYearRecord>> {
    parse_crvs(fs::File::open(path)?)
}

/// Writes the CRVS table; the completeness column only appears when some
/// record is incomplete.
pub fn write_crvs<W: Write>(writer: W, records: &[CrvsYearRecord]) -> Result<()> {
    let with_c = records.iter().any(|r| r.completeness != 1.0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = CRVS_COLUMNS.to_vec();
    if with_c {
        header.push(COMPLETENESS_COLUMN);
    }
    w.write_record(&header)?;
    for r in records {
        let mut rec = vec![
            r.country.clone(),
            r.year.to_string(),
            r.mat_crvs.to_string(),
            r.crvs_total.to_string(),
            r.who_envelope.to_string(),
        ];
        if with_c {
            rec.push(r.completeness.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(studies: &Path, crvs: Option<&Path>) -> Result<Dataset> {
    let crvs = match crvs {
        Some(p) => read_crvs_csv(p)?,
        None => Vec::new(),
    };
    let ds = Dataset::new(read_studies_csv(studies)?, crvs);
    ds.validate()?;
    Ok(ds)
}

/// Serializes rows with their field names as the header.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small chains for interactive runs.
    #[default]
    Desk,
    /// 10 chains of 40000 iterations.
    Full,
}

/// Validation settings; the training fits use the run's MCMC settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    pub frac: f64,
    pub reps: usize,
    pub seed: u64,
    pub sampling_noise: bool,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        let v = ValidationConfig::default();
        Self { frac: v.frac, reps: v.reps, seed: v.seed, sampling_noise: v.sampling_noise }
    }
}

/// Everything a run can be configured with. Stored in TOML; every key is
/// optional and `preset` picks the MCMC defaults the other keys override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    /// Largest split R-hat accepted before a fit counts as unconverged.
    pub rhat_threshold: f64,
    /// Last year of the per-country summaries; defaults to the last CRVS or
    /// study year.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_year: Option<i32>,
    /// Lags of the no-study lag validation.
    pub lags: Vec<u32>,
    pub variance_reading: VarianceReading,
    pub mcmc: McmcConfig,
    pub kappa: KappaModel,
    pub completeness: WindowSpec,
    pub validation: ValidationSettings,
    pub scenario: ScenarioConfig,
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        Self {
            preset,
            rhat_threshold: 1.1,
            last_year: None,
            lags: vec![0, 1, 2, 5, 10, 15],
            variance_reading: VarianceReading::default(),
            mcmc: match preset {
                Preset::Desk => McmcConfig::desk(),
                Preset::Full => McmcConfig::default(),
            },
            kappa: KappaModel::default(),
            completeness: WindowSpec::default(),
            validation: ValidationSettings::default(),
            scenario: ScenarioConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let mut user: toml::Table = s.parse().map_err(|e| bad(&e))?;
        let preset = match user.remove("preset") {
            Some(v) => v.try_into::<Preset>().map_err(|e| bad(&e))?,
            None => Preset::default(),
        };
        let base = Self::for_preset(preset);
        let mut merged = toml::Table::try_from(&base).map_err(|e| bad(&e))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged).try_into().map_err(|e| bad(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        self.kappa.validate()?;
        self.scenario.validate()?;
        if !(self.rhat_threshold >= 1.0) {
            return Err(Error::Config(format!("rhat_threshold must be at least 1, got {}", self.rhat_threshold)));
        }
        if !(self.validation.frac > 0.0 && self.validation.frac < 1.0) || self.validation.reps == 0 {
            return Err(Error::Config("validation needs frac in (0, 1) and at least one rep".into()));
        }
        Ok(())
    }

    pub fn validation_config(&self) -> ValidationConfig {
        let v = &self.validation;
        ValidationConfig {
            fit: self.mcmc.clone(),
            frac: v.frac,
            reps: v.reps,
            seed: v.seed,
            sampling_noise: v.sampling_noise,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_preset(Preset::default())
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// The `run.json` record of a fit: what went in and the headline results.
/// Wall-clock timing lives in a separate file so this one is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub run_id: String,
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    /// SHA-256 of each input file as read.
    pub inputs: BTreeMap<String, String>,
    pub dataset_hash: String,
    pub hypers: Vec<HyperSummary>,
    pub max_rhat: Option<f64>,
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "country,t1,t2,z_crvs,z_matcrvs,z_truemat_crvs,z_truemat,z_fminus,z_fplus,z_uplus,z_unreg,z_env,z_tot\n";

    #[test]
    fn kind_is_inferred() {
        let csv = format!("{HEADER}A,2000,2002,1000,10,15,,,,,,,\nB,2001,2001,500,4,,,3,1,,,,\n");
        let s = parse_studies(csv.as_bytes()).unwrap();
        assert_eq!(s[0].kind, StudyKind::TruematCrvsOnly);
        assert_eq!(s[0].z_truemat_crvs, Some(15));
        assert_eq!(s[1].kind, StudyKind::FminusFplus);
        assert_eq!(s[1].z_uplus, None);
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let csv = format!("{HEADER}A,2000,2002,1000,10,15,,,,,,,\nA,2003,2004,10,11,5,,,,,,,\n");
        match parse_studies(csv.as_bytes()) {
            Err(Error::Row { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("z_matcrvs"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let csv = format!("{HEADER}A,2000,2002,1000,10,,,,,,,,\n");
        assert!(matches!(parse_studies(csv.as_bytes()), Err(Error::Row { row: 2, .. })));
        let csv = format!("{HEADER}A,2000,2002,1000,x,,,,,,,,\n");
        assert!(matches!(parse_studies(csv.as_bytes()), Err(Error::Row { row: 2, .. })));
        assert!(matches!(parse_studies("country,t1\nA,1\n".as_bytes()), Err(Error::Row { row: 1, .. })));
    }

    #[test]
    fn crvs_round_trip() {
        let csv = "country,year,mat_crvs,crvs_total,who_envelope\nA,2000,12,1500,1600.5\n";
        let r = parse_crvs(csv.as_bytes()).unwrap();
        assert_eq!(r[0].completeness, 1.0);
        let mut out = Vec::new();
        write_crvs(&mut out, &r).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }

    #[test]
    fn config_overrides_preset() {
        let cfg = RunConfig::from_toml_str("preset = \"full\"\n[mcmc]\nseed = 7\n[kappa]\nn_samples = 5000\n").unwrap();
        assert_eq!(cfg.mcmc.n_chains, 10);
        assert_eq!(cfg.mcmc.seed, 7);
        assert_eq!(cfg.kappa.n_samples, 5000);
        let desk = RunConfig::from_toml_str("").unwrap();
        assert_eq!(desk.mcmc, McmcConfig::desk());
        assert!(RunConfig::from_toml_str("[mcmc]\nn_chain = 3\n").is_err());
        assert!(RunConfig::from_toml_str("typo = 1\n").is_err());
        let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("crvsadj-io-{}", std::process::id()));
        let p = dir.join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
