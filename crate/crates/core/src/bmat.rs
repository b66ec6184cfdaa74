//! Data-model quantities for a downstream maternal-mortality model: negative
//! binomial moments for CRVS counts and for study counts with incomplete
//! envelopes, and the Monte Carlo variance of the unregistered-death ratio.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::postprocess::MisclassSummary;
use crate::rng::stream;
use crate::stats::{ln_factorial, variance, xlogy};

/// Distribution of the ratio `kappa` of maternal-death probabilities outside
/// versus inside the CRVS: `log(kappa) ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaModel {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for KappaModel {
    fn default() -> Self {
        Self { n_samples: 100_000, seed: 1 }
    }
}

impl KappaModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1000 {
            return Err(Error::Config(format!("kappa n_samples must be at least 1000, got {}", self.n_samples)));
        }
        Ok(())
    }

    /// The `kappa` draws. The same draws serve every country-year of a run.
    ///
    /// Draws are stratified: the `h`-th draw of `log(kappa)` is the normal
    /// quantile of a uniform point in `[h/n, (h+1)/n)`, and the draws are
    /// then shuffled. Each draw is still standard normal on the log scale,
    /// and sample quantiles and variances are far more stable across seeds.
    pub fn draws(&self) -> Vec<f64> {
        let mut rng = stream(self.seed, 0);
        let n = self.n_samples as f64;
        let std = Normal::standard();
        let mut k: Vec<f64> = (0..self.n_samples)
            .map(|h| std.inverse_cdf((h as f64 + rng.random::<f64>()) / n).exp())
            .collect();
        k.shuffle(&mut rng);
        k
    }
}

/// How to read two ambiguous squared terms in the variance formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceReading {
    /// Squared CRVS (envelope) count and `(1 - rho)^2` throughout.
    #[default]
    Consistent,
    /// Squared CRVS maternal count in the CRVS model, `1 - rho^2` in the
    /// study model, as printed.
    Literal,
}

/// Variance of `theta = 1 / (rho + (1 - rho) kappa)` over the given draws.
pub fn theta_variance(rho_crvs: f64, kappa: &[f64]) -> Result<f64> {
    if !(rho_crvs > 0.0 && rho_crvs <= 1.0) {
        return Err(Error::Domain(format!("CRVS completeness {rho_crvs} outside (0, 1]")));
    }
    if rho_crvs == 1.0 {
        return Ok(0.0);
    }
    let theta: Vec<f64> = kappa.iter().map(|k| 1.0 / (rho_crvs + (1.0 - rho_crvs) * k)).collect();
    Ok(variance(&theta))
}

/// Monte Carlo variance of `theta` for CRVS completeness `rho_crvs`.
pub fn kappa_theta_variance(rho_crvs: f64, model: &KappaModel) -> Result<f64> {
    model.validate()?;
    theta_variance(rho_crvs, &model.draws())
}

fn check_summary(s: &MisclassSummary) -> Result<()> {
    let vals = [s.lambda_hat_plus, s.lambda_hat_minus, s.v_hat_plus, s.v_hat_minus, s.u_hat, s.e_hat_plus, s.e_hat_minus];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite misclassification summary".into()));
    }
    Ok(())
}

fn moments(count: f64, sq_count: f64, rho: f64, one_minus_rho_sq: f64, s: &MisclassSummary, m_hat: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("true probability maternal {rho} outside (0, 1)")));
    }
    check_summary(s)?;
    let e = count * (s.lambda_hat_plus * rho + (1.0 - s.lambda_hat_minus) * (1.0 - rho));
    let v1 = s.v_hat_plus * rho * rho + s.v_hat_minus * one_minus_rho_sq - 2.0 * rho * (1.0 - rho) * s.u_hat;
    let v2 = m_hat * rho * rho * (s.e_hat_plus + s.e_hat_minus);
    if v1 + v2 < 0.0 {
        return Err(Error::Domain(format!("negative variance term {}", v1 + v2)));
    }
    Ok((e, e + sq_count * (v1 + v2)))
}

/// Mean and variance of the CRVS maternal count given the true probability
/// maternal, the CRVS total and the misclassification summary.
pub fn negbin_moments_crvs(rho_truemat: f64, y_crvs: u64, s: &MisclassSummary, m_hat: f64) -> Result<(f64, f64)> {
    negbin_moments_crvs_with(rho_truemat, y_crvs, 0, s, m_hat, VarianceReading::Consistent)
}

/// As [`negbin_moments_crvs`], choosing the reading of the squared count.
/// `y_matcrvs` is only used by the literal reading.
pub fn negbin_moments_crvs_with(
    rho_truemat: f64,
    y_crvs: u64,
    y_matcrvs: u64,
    s: &MisclassSummary,
    m_hat: f64,
    reading: VarianceReading,
) -> Result<(f64, f64)> {
    let n = y_crvs as f64;
    let sq = match reading {
        VarianceReading::Consistent => n * n,
        VarianceReading::Literal => (y_matcrvs as f64).powi(2),
    };
    moments(n, sq, rho_truemat, (1.0 - rho_truemat).powi(2), s, m_hat)
}

/// Shape `r` and success probability of the negative binomial with mean `e`
/// and variance `v`.
fn negbin_shape(e: f64, v: f64) -> Result<f64> {
    if !(e > 0.0 && v > e && v.is_finite()) {
        return Err(Error::Domain(format!("negative binomial needs V > E > 0, got E = {e}, V = {v}")));
    }
    Ok(e * e / (v - e))
}

/// Log density of the negative binomial with mean `e` and variance `v`, the
/// gamma-Poisson mixture with gamma shape `e^2 / (v - e)`.
pub fn negbin_logpdf_mean_var(y: u64, e: f64, v: f64) -> Result<f64> {
    let r = negbin_shape(e, v)?;
    let yf = y as f64;
    let ln_rising = if y <= 1000 {
        (0..y).map(|j| (r + j as f64).ln()).sum::<f64>()
    } else {
        ln_gamma(r + yf) - ln_gamma(r)
    };
    // r ln(r / (r + e)) + y ln(e / (r + e))
    Ok(ln_rising - ln_factorial(y) - r * (e / r).ln_1p() + xlogy(yf, e / (r + e)))
}

/// One draw from the negative binomial with mean `e` and variance `v`.
pub fn sample_negbin<R: Rng + ?Sized>(e: f64, v: f64, rng: &mut R) -> Result<u64> {
    let r = negbin_shape(e, v)?;
    let g = Gamma::new(r, e / r).map_err(|err| Error::Domain(err.to_string()))?;
    let lambda = g.sample(rng);
    if lambda <= 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(lambda).map_err(|err| Error::Domain(err.to_string()))?;
    Ok(p.sample(rng) as u64)
}

/// Period probability maternal from annual `(year, rho, total deaths)`,
/// weighted by total deaths.
pub fn weighted_truemat(annual_rho: &[(i32, f64, f64)], t1: i32, t2: i32) -> Result<f64> {
    let mut missing = vec![];
    let (mut num, mut den) = (0.0, 0.0);
    for year in t1..=t2 {
        let rows: Vec<_> = annual_rho.iter().filter(|r| r.0 == year).collect();
        match rows.as_slice() {
            [] => missing.push(year),
            [(_, rho, tot)] => {
                num += rho * tot;
                den += tot;
            }
            _ => return Err(Error::Domain(format!("year {year} appears more than once"))),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingYears { country: String::new(), years: missing });
    }
    if !(den > 0.0) {
        return Err(Error::EmptyDenominator("total deaths over the period"));
    }
    Ok(num / den)
}

/// Binomial log likelihood of a study with a complete envelope.
pub fn study_complete_loglik(z_truemat: u64, z_tot: u64, rho_period: f64) -> f64 {
    if z_truemat > z_tot || !(0.0..=1.0).contains(&rho_period) {
        return f64::NEG_INFINITY;
    }
    let k = z_truemat as f64;
    let n = z_tot as f64;
    ln_factorial(z_tot) - ln_factorial(z_truemat) - ln_factorial(z_tot - z_truemat)
        + xlogy(k, rho_period)
        + xlogy(n - k, 1.0 - rho_period)
}

/// Mean and variance of a study's maternal count when its envelope misses
/// some deaths. `kappa` are the shared draws of [`KappaModel::draws`].
pub fn study_incomplete_moments(
    z_env: u64,
    z_tot: u64,
    rho_period: f64,
    s: &MisclassSummary,
    kappa: &[f64],
    reading: VarianceReading,
) -> Result<(f64, f64)> {
    if z_env == 0 || z_env > z_tot {
        return Err(Error::InconsistentCounts(format!("envelope {z_env} must lie in (0, {z_tot}]")));
    }
    let ratio = z_env as f64 / z_tot as f64;
    let m_hat = theta_variance(ratio, kappa)?;
    let n = z_env as f64;
    let omr2 = match reading {
        VarianceReading::Consistent => (1.0 - rho_period).powi(2),
        VarianceReading::Literal => 1.0 - rho_period * rho_period,
    };
    moments(n, n * n, rho_period, omr2, s, m_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{log_sum_exp, quantile};

    fn summary(vp: f64, vm: f64, u: f64) -> MisclassSummary {
        MisclassSummary {
            lambda_hat_plus: 0.586,
            lambda_hat_minus: 0.9993,
            v_hat_plus: vp,
            v_hat_minus: vm,
            u_hat: u,
            e_hat_plus: 0.35,
            e_hat_minus: 1e-6,
        }
    }

    #[test]
    fn kappa_examples() {
        let m = KappaModel::default();
        assert_eq!(kappa_theta_variance(1.0, &m).unwrap(), 0.0);
        let k = m.draws();
        assert!((quantile(&k, 0.25) - 0.509).abs() < 0.01);
        assert!((quantile(&k, 0.75) - 1.963).abs() < 0.01);
        let a = kappa_theta_variance(0.8, &m).unwrap();
        let b = kappa_theta_variance(0.8, &KappaModel { seed: 2, ..m.clone() }).unwrap();
        assert!((a - b).abs() / a < 0.05);
        assert!(kappa_theta_variance(0.0, &m).is_err());
        assert!(KappaModel { n_samples: 10, seed: 1 }.validate().is_err());
    }

    #[test]
    fn crvs_moment_examples() {
        let (e, v) = negbin_moments_crvs(0.01, 10_000, &summary(0.003, 1e-8, 0.0), 0.0).unwrap();
        assert!((e - 65.53).abs() < 1e-9);
        assert!((v - e - (1e8 * (0.003 * 1e-4 + 1e-8 * 0.9801))).abs() < 1e-9);
        assert!((v - 96.51).abs() < 0.01);
        let (e, v) = negbin_moments_crvs(0.3, 500, &summary(0.0, 0.0, 0.0), 0.0).unwrap();
        assert_eq!(e, v);
        assert!(negbin_moments_crvs(0.3, 500, &summary(0.0, 0.0, 0.5), 0.0).is_err());
    }

    #[test]
    fn literal_reading_differs() {
        let s = summary(0.003, 1e-8, 0.0);
        let (_, v) = negbin_moments_crvs_with(0.01, 10_000, 66, &s, 0.0, VarianceReading::Literal).unwrap();
        let (e, _) = negbin_moments_crvs(0.01, 10_000, &s, 0.0).unwrap();
        assert!((v - e - 66.0f64.powi(2) * (0.003 * 1e-4 + 1e-8 * 0.9801)).abs() < 1e-12);
    }

    #[test]
    fn negbin_normalizes() {
        let total = log_sum_exp((0..400).map(|y| negbin_logpdf_mean_var(y, 5.0, 9.0).unwrap())).exp();
        assert!((total - 1.0).abs() < 1e-8);
        assert!(negbin_logpdf_mean_var(3, 5.0, 5.0).is_err());
    }

    #[test]
    fn negbin_poisson_limit() {
        for y in [0u64, 3, 5, 12] {
            let e = 5.0;
            let pois = xlogy(y as f64, e) - e - ln_factorial(y);
            let nb = negbin_logpdf_mean_var(y, e, e * (1.0 + 1e-6)).unwrap();
            assert!((nb - pois).abs() < 1e-3, "y={y}");
        }
    }

    #[test]
    fn weighted_truemat_examples() {
        let v = weighted_truemat(&[(2000, 0.01, 100.0), (2001, 0.02, 300.0)], 2000, 2001).unwrap();
        assert!((v - 0.0175).abs() < 1e-15);
        assert_eq!(weighted_truemat(&[(2000, 0.3, 5.0)], 2000, 2000).unwrap(), 0.3);
        let v = weighted_truemat(&[(1, 0.1, 7.0), (2, 0.3, 7.0)], 1, 2).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
        assert!(weighted_truemat(&[(2000, 0.3, 5.0)], 2000, 2001).is_err());
    }

    #[test]
    fn complete_study_examples() {
        assert!((study_complete_loglik(1, 2, 0.5) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(study_complete_loglik(0, 10, 0.0), 0.0);
        assert_eq!(study_complete_loglik(1, 10, 0.0), f64::NEG_INFINITY);
        let oracle = statrs::distribution::Binomial::new(0.01, 1000).unwrap();
        use statrs::distribution::Discrete;
        assert!((study_complete_loglik(10, 1000, 0.01) - oracle.ln_pmf(10)).abs() < 1e-10);
    }

    #[test]
    fn incomplete_study_reductions() {
        let k = KappaModel::default().draws();
        let s = summary(0.0, 0.0, 0.0);
        let (e, v) = study_incomplete_moments(800, 800, 0.02, &s, &k, VarianceReading::Consistent).unwrap();
        assert_eq!(e, v);
        let s = summary(0.002, 1e-7, 0.0);
        let (e, v) = study_incomplete_moments(800, 1000, 0.02, &s, &k, VarianceReading::Consistent).unwrap();
        let m = theta_variance(0.8, &k).unwrap();
        assert_eq!(m, kappa_theta_variance(0.8, &KappaModel::default()).unwrap());
        let v1 = 0.002 * 0.02f64.powi(2) + 1e-7 * 0.98f64.powi(2);
        let v2 = m * 0.0004 * (0.35 + 1e-6);
        assert!((v - e - 640_000.0 * (v1 + v2)).abs() < 1e-9);
        assert!(study_incomplete_moments(0, 10, 0.02, &s, &k, VarianceReading::Consistent).is_err());
    }
}
