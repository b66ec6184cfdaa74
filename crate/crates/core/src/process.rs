//! Bivariate hierarchical random walk for transformed sensitivity and
//! specificity.
//!
//! Sensitivity lives in `(0.1, 1)` and specificity in `(0.95, 1)`; both are
//! mapped to the real line with a shifted logit. In a country's reference
//! year the transformed pair is bivariate normal around the world means;
//! other years follow a bivariate random walk outward from the reference
//! year. Both covariance matrices share the correlation `phi`.

use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::GammaFour;
use crate::stats::{inv_logit, log1p_exp};

pub const SE_LOWER: f64 = 0.1;
pub const SP_LOWER: f64 = 0.95;
/// Lower end of the uniform prior on world specificity.
pub const SP_WORLD_LOWER: f64 = 0.995;
pub const PHI_BOUND: f64 = 0.95;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Global parameters of the process model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta_world_plus: f64,
    pub eta_world_minus: f64,
    /// Standard deviations of the reference-year distribution.
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    /// Standard deviations of the annual random-walk innovations.
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub phi: f64,
}

impl HyperParams {
    pub const NAMES: [&'static str; 7] = [
        "eta_world_plus",
        "eta_world_minus",
        "sigma_plus",
        "sigma_minus",
        "delta_plus",
        "delta_minus",
        "phi",
    ];

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.eta_world_plus,
            self.eta_world_minus,
            self.sigma_plus,
            self.sigma_minus,
            self.delta_plus,
            self.delta_minus,
            self.phi,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            eta_world_plus: a[0],
            eta_world_minus: a[1],
            sigma_plus: a[2],
            sigma_minus: a[3],
            delta_plus: a[4],
            delta_minus: a[5],
            phi: a[6],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sds = [self.sigma_plus, self.sigma_minus, self.delta_plus, self.delta_minus];
        if sds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Domain(format!("standard deviations must be nonnegative: {sds:?}")));
        }
        if !(self.phi.abs() < PHI_BOUND) {
            return Err(Error::Domain(format!("correlation {} outside (-0.95, 0.95)", self.phi)));
        }
        if !self.eta_world_plus.is_finite() || !self.eta_world_minus.is_finite() {
            return Err(Error::Domain("world means must be finite".into()));
        }
        Ok(())
    }

    /// World sensitivity and specificity on the natural scale.
    pub fn world_natural(&self) -> (f64, f64) {
        to_natural(self.eta_world_plus, self.eta_world_minus)
    }

    /// Looks up a parameter by name; also accepts `lambda_world_plus` and
    /// `lambda_world_minus`.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "lambda_world_plus" => Some(self.world_natural().0),
            "lambda_world_minus" => Some(self.world_natural().1),
            _ => Self::NAMES.iter().position(|n| *n == name).map(|i| self.as_array()[i]),
        }
    }
}

/// Shifted logit for sensitivity.
pub fn se_to_eta(se: f64) -> f64 {
    ((se - SE_LOWER) / (1.0 - se)).ln()
}

pub fn sp_to_eta(sp: f64) -> f64 {
    ((sp - SP_LOWER) / (1.0 - sp)).ln()
}

#[inline]
pub fn eta_to_se(eta: f64) -> f64 {
    SE_LOWER + (1.0 - SE_LOWER) * inv_logit(eta)
}

#[inline]
pub fn eta_to_sp(eta: f64) -> f64 {
    SP_LOWER + (1.0 - SP_LOWER) * inv_logit(eta)
}

/// Maps natural-scale sensitivity and specificity to the real line.
pub fn to_transformed(lambda_plus: f64, lambda_minus: f64) -> Result<(f64, f64)> {
    if !(lambda_plus > SE_LOWER && lambda_plus < 1.0) {
        return Err(Error::Domain(format!("sensitivity {lambda_plus} outside (0.1, 1)")));
    }
    if !(lambda_minus > SP_LOWER && lambda_minus < 1.0) {
        return Err(Error::Domain(format!("specificity {lambda_minus} outside (0.95, 1)")));
    }
    Ok((se_to_eta(lambda_plus), sp_to_eta(lambda_minus)))
}

pub fn to_natural(eta_plus: f64, eta_minus: f64) -> (f64, f64) {
    (eta_to_se(eta_plus), eta_to_sp(eta_minus))
}

/// CRVS cell probabilities from transformed sensitivity and specificity and
/// the logit of the true proportion maternal. The false-cell probabilities
/// are formed from the complements directly so that specificities very close
/// to one keep their precision.
#[inline]
pub fn gamma_from_eta(eta_plus: f64, eta_minus: f64, logit_truemat: f64) -> GammaFour {
    let tm = inv_logit(logit_truemat);
    let not_tm = inv_logit(-logit_truemat);
    let se = SE_LOWER + (1.0 - SE_LOWER) * inv_logit(eta_plus);
    let miss = (1.0 - SE_LOWER) * inv_logit(-eta_plus);
    let false_pos = (1.0 - SP_LOWER) * inv_logit(-eta_minus);
    let sp = SP_LOWER + (1.0 - SP_LOWER) * inv_logit(eta_minus);
    GammaFour { g_tplus: se * tm, g_fminus: miss * tm, g_tminus: sp * not_tm, g_fplus: false_pos * not_tm }
}

fn half_normal_logpdf(x: f64) -> f64 {
    if x > 0.0 {
        std::f64::consts::LN_2 - 0.5 * LN_2PI - 0.5 * x * x
    } else {
        f64::NEG_INFINITY
    }
}

/// Log prior of the world sensitivity mean on the transformed scale:
/// uniform on `(0.1, 1)` for the natural-scale value, with Jacobian.
pub fn log_prior_eta_world_plus(eta: f64) -> f64 {
    -log1p_exp(-eta) - log1p_exp(eta)
}

/// Uniform on `(0.995, 1)` for world specificity, with Jacobian.
pub fn log_prior_eta_world_minus(eta: f64) -> f64 {
    let lower = sp_to_eta(SP_WORLD_LOWER);
    if eta <= lower {
        return f64::NEG_INFINITY;
    }
    ((1.0 - SP_LOWER) / (1.0 - SP_WORLD_LOWER)).ln() - log1p_exp(-eta) - log1p_exp(eta)
}

pub fn log_prior_hyper(h: &HyperParams) -> f64 {
    if !(h.phi.abs() < PHI_BOUND) {
        return f64::NEG_INFINITY;
    }
    log_prior_eta_world_plus(h.eta_world_plus)
        + log_prior_eta_world_minus(h.eta_world_minus)
        - (2.0 * PHI_BOUND).ln()
        + half_normal_logpdf(h.sigma_plus)
        + half_normal_logpdf(h.sigma_minus)
        + half_normal_logpdf(h.delta_plus)
        + half_normal_logpdf(h.delta_minus)
}

/// Draws hyperparameters from their prior.
pub fn sample_prior_hyper<R: Rng + ?Sized>(rng: &mut R) -> HyperParams {
    let se = rng.random_range(SE_LOWER..1.0);
    let sp = rng.random_range(SP_WORLD_LOWER..1.0);
    let mut half = || {
        let z: f64 = rng.sample(StandardNormal);
        z.abs()
    };
    let (sigma_plus, sigma_minus, delta_plus, delta_minus) = (half(), half(), half(), half());
    HyperParams {
        eta_world_plus: se_to_eta(se),
        eta_world_minus: sp_to_eta(sp),
        sigma_plus,
        sigma_minus,
        delta_plus,
        delta_minus,
        phi: rng.random_range(-PHI_BOUND..PHI_BOUND),
    }
}

/// Log density of a bivariate normal difference `(dx, dy)` with standard
/// deviations `(sx, sy)` and correlation `phi`.
#[inline]
pub(crate) fn bvn_logpdf(dx: f64, dy: f64, sx: f64, sy: f64, phi: f64) -> f64 {
    if !(sx > 0.0 && sy > 0.0) {
        return f64::NEG_INFINITY;
    }
    let x = dx / sx;
    let y = dy / sy;
    let one_m = 1.0 - phi * phi;
    -LN_2PI - sx.ln() - sy.ln() - 0.5 * one_m.ln() - (x * x - 2.0 * phi * x * y + y * y) / (2.0 * one_m)
}

/// Draws a bivariate normal vector with standard deviations `(sx, sy)` and
/// correlation `phi` around zero.
#[inline]
pub(crate) fn draw_bvn<R: Rng + ?Sized>(rng: &mut R, sx: f64, sy: f64, phi: f64) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (sx * z1, sy * (phi * z1 + (1.0 - phi * phi).sqrt() * z2))
}

/// Annual trajectory of transformed sensitivity and specificity of one
/// country, with the true proportion maternal of each study period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryPath {
    pub country: String,
    pub t_ref: i32,
    pub first_year: i32,
    pub eta_plus: Vec<f64>,
    pub eta_minus: Vec<f64>,
    /// Study periods `(t1, t2)` in the order of `truemat`.
    pub periods: Vec<(i32, i32)>,
    pub truemat: Vec<f64>,
}

impl CountryPath {
    pub fn last_year(&self) -> i32 {
        self.first_year + self.eta_plus.len() as i32 - 1
    }

    pub fn years(&self) -> RangeInclusive<i32> {
        self.first_year..=self.last_year()
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta_plus.is_empty() || self.eta_plus.len() != self.eta_minus.len() {
            return Err(Error::Domain("path must have matching, nonempty components".into()));
        }
        if !self.years().contains(&self.t_ref) {
            return Err(Error::Domain(format!("reference year {} outside path", self.t_ref)));
        }
        if self.periods.len() != self.truemat.len() {
            return Err(Error::Domain("one true proportion maternal per period".into()));
        }
        Ok(())
    }

    pub fn eta_at(&self, year: i32) -> Option<(f64, f64)> {
        let i = usize::try_from(year - self.first_year).ok()?;
        Some((*self.eta_plus.get(i)?, *self.eta_minus.get(i)?))
    }

    pub fn natural_at(&self, year: i32) -> Option<(f64, f64)> {
        self.eta_at(year).map(|(a, b)| to_natural(a, b))
    }
}

/// Log density of a country path given the hyperparameters.
pub fn log_process_density(path: &CountryPath, h: &HyperParams) -> f64 {
    if path.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    if path.truemat.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return f64::NEG_INFINITY;
    }
    let r = (path.t_ref - path.first_year) as usize;
    let mut lp = bvn_logpdf(
        path.eta_plus[r] - h.eta_world_plus,
        path.eta_minus[r] - h.eta_world_minus,
        h.sigma_plus,
        h.sigma_minus,
        h.phi,
    );
    for i in 1..path.eta_plus.len() {
        lp += bvn_logpdf(
            path.eta_plus[i] - path.eta_plus[i - 1],
            path.eta_minus[i] - path.eta_minus[i - 1],
            h.delta_plus,
            h.delta_minus,
            h.phi,
        );
    }
    lp
}

/// Simulates a path over `years`: the reference-year pair first, then the
/// walk outward in both directions.
pub fn simulate_path<R: Rng + ?Sized>(
    h: &HyperParams,
    country: &str,
    t_ref: i32,
    years: RangeInclusive<i32>,
    rng: &mut R,
) -> Result<CountryPath> {
    if !years.contains(&t_ref) {
        return Err(Error::Domain(format!("reference year {t_ref} outside {years:?}")));
    }
    let first = *years.start();
    let n = (years.end() - first + 1) as usize;
    let r = (t_ref - first) as usize;
    let mut eta_plus = vec![0.0; n];
    let mut eta_minus = vec![0.0; n];
    let (a, b) = draw_bvn(rng, h.sigma_plus, h.sigma_minus, h.phi);
    eta_plus[r] = h.eta_world_plus + a;
    eta_minus[r] = h.eta_world_minus + b;
    for i in r + 1..n {
        let (a, b) = draw_bvn(rng, h.delta_plus, h.delta_minus, h.phi);
        eta_plus[i] = eta_plus[i - 1] + a;
        eta_minus[i] = eta_minus[i - 1] + b;
    }
    for i in (0..r).rev() {
        let (a, b) = draw_bvn(rng, h.delta_plus, h.delta_minus, h.phi);
        eta_plus[i] = eta_plus[i + 1] + a;
        eta_minus[i] = eta_minus[i + 1] + b;
    }
    Ok(CountryPath {
        country: country.to_owned(),
        t_ref,
        first_year: first,
        eta_plus,
        eta_minus,
        periods: Vec::new(),
        truemat: Vec::new(),
    })
}
