//! Exact likelihoods of specialized-study counts under the four-cell CRVS
//! multinomial, including marginal likelihoods that sum over the latent
//! cell combinations consistent with overlapping reported totals.
//!
//! Cell order throughout is `(T+, F-, T-, F+)`.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::stats::{ln_factorial, LogSumExp};
use crate::types::{StudyKind, StudyObservation};

/// Lower bound on sensitivity used to truncate the latent-count sums.
pub const CONSTRAINT_SE_LOWER: f64 = 0.1;
/// Lower bound on specificity used to truncate the latent-count sums.
pub const CONSTRAINT_SP_LOWER: f64 = 0.97;

/// Probabilities of the four CRVS cells for a registered death.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFour {
    pub g_tplus: f64,
    pub g_fminus: f64,
    pub g_tminus: f64,
    pub g_fplus: f64,
}

impl GammaFour {
    pub fn new(g_tplus: f64, g_fminus: f64, g_tminus: f64, g_fplus: f64) -> Result<Self> {
        let g = Self { g_tplus, g_fminus, g_tminus, g_fplus };
        let a = g.as_array();
        if a.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(format!("cell probability outside [0,1]: {a:?}")));
        }
        let s: f64 = a.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("cell probabilities sum to {s}")));
        }
        Ok(g)
    }

    /// Cell probabilities from sensitivity, specificity and the true
    /// proportion maternal among registered deaths, without range checks.
    #[inline]
    pub fn from_params_unchecked(se: f64, sp: f64, truemat: f64) -> Self {
        let g_tplus = se * truemat;
        let g_tminus = sp * (1.0 - truemat);
        Self {
            g_tplus,
            g_fminus: truemat - g_tplus,
            g_tminus,
            g_fplus: (1.0 - truemat) - g_tminus,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.g_tplus, self.g_fminus, self.g_tminus, self.g_fplus]
    }

    pub fn truemat_crvs(&self) -> f64 {
        self.g_tplus + self.g_fminus
    }

    pub fn mat_crvs(&self) -> f64 {
        self.g_tplus + self.g_fplus
    }

    pub fn sensitivity(&self) -> f64 {
        self.g_tplus / (self.g_tplus + self.g_fminus)
    }

    pub fn specificity(&self) -> f64 {
        self.g_tminus / (self.g_tminus + self.g_fplus)
    }

    #[inline]
    fn logs(&self) -> [f64; 4] {
        let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
        [ln(self.g_tplus), ln(self.g_fminus), ln(self.g_tminus), ln(self.g_fplus)]
    }
}

/// Cell probabilities from sensitivity `se`, specificity `sp` and the true
/// proportion maternal among registered deaths.
pub fn gamma_from_params(se: f64, sp: f64, truemat: f64) -> Result<GammaFour> {
    if !(0.1..=1.0).contains(&se) {
        return Err(Error::Domain(format!("sensitivity {se} outside [0.1, 1]")));
    }
    if !(0.95..=1.0).contains(&sp) {
        return Err(Error::Domain(format!("specificity {sp} outside [0.95, 1]")));
    }
    if !(truemat > 0.0 && truemat < 1.0) {
        return Err(Error::Domain(format!("true proportion maternal {truemat} outside (0, 1)")));
    }
    Ok(GammaFour::from_params_unchecked(se, sp, truemat))
}

/// Exact multinomial log density. A positive count in a zero-probability
/// cell gives `-inf`.
pub fn multinomial_logpdf(counts: &[u64], probs: &[f64]) -> Result<f64> {
    if counts.len() != probs.len() {
        return Err(Error::Domain(format!(
            "{} counts but {} probabilities",
            counts.len(),
            probs.len()
        )));
    }
    let n: u64 = counts.iter().sum();
    let mut lp = ln_factorial(n);
    for (&c, &p) in counts.iter().zip(probs) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        lp += c as f64 * p.ln() - ln_factorial(c);
    }
    Ok(lp)
}

fn binomial_cdf(n: u64, p: f64, k: u64) -> f64 {
    if k >= n {
        1.0
    } else {
        beta_reg((n - k) as f64, k as f64 + 1.0, 1.0 - p)
    }
}

/// Smallest `k` with `P(Bin(n, p) <= k) >= q`.
pub fn binomial_quantile(n: u64, p: f64, q: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let (mut lo, mut hi) = (0u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        // The regularized beta carries rounding error; exact ties such as
        // P(Bin(1, 0.5) <= 0) = 0.5 must still count as reaching q.
        if binomial_cdf(n, p, mid) >= q - 1e-12 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

const T_PLUS: u8 = 1;
const F_MINUS: u8 = 2;
const T_MINUS: u8 = 4;
const F_PLUS: u8 = 8;

/// A reported group of cells, identified by a bit mask over `(T+, F-, T-, F+)`.
/// Observed count of a union of cells, given as a bit mask over
/// `(T+, F-, T-, F+)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Group {
    count: f64,
    mask: u8,
}

/// One latent four-cell combination and its multinomial coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    t_plus: f64,
    f_minus: f64,
    t_minus: f64,
    f_plus: f64,
    log_coef: f64,
}

impl Term {
    fn new(t_plus: u64, f_minus: u64, t_minus: u64, f_plus: u64) -> Self {
        let n = t_plus + f_minus + t_minus + f_plus;
        Self {
            t_plus: t_plus as f64,
            f_minus: f_minus as f64,
            t_minus: t_minus as f64,
            f_plus: f_plus as f64,
            log_coef: ln_factorial(n)
                - ln_factorial(t_plus)
                - ln_factorial(f_minus)
                - ln_factorial(t_minus)
                - ln_factorial(f_plus),
        }
    }
}

#[inline]
fn xlogp(n: f64, lp: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n * lp
    }
}

/// Likelihood of one study with everything that does not depend on the cell
/// probabilities computed once: the multinomial coefficients and, for
/// overlapping totals, the admissible latent combinations.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyLikelihood {
    /// Fully observed partition of the registered deaths into groups of
    /// cells.
    Partition { groups: Vec<Group>, log_coef: f64 },
    /// Sum of multinomial densities over latent four-cell combinations.
    Sum { terms: Vec<Term> },
}

impl StudyLikelihood {
    #[inline]
    pub fn loglik(&self, gamma: &GammaFour) -> f64 {
        match self {
            StudyLikelihood::Partition { groups, log_coef } => {
                let g = gamma.as_array();
                let mut lp = *log_coef;
                for grp in groups {
                    let mut p = 0.0;
                    for (bit, &gb) in g.iter().enumerate() {
                        if grp.mask & (1 << bit) != 0 {
                            p += gb;
                        }
                    }
                    if grp.count > 0.0 {
                        if p <= 0.0 {
                            return f64::NEG_INFINITY;
                        }
                        lp += grp.count * p.ln();
                    }
                }
                lp
            }
            StudyLikelihood::Sum { terms } => {
                let [lt, lfm, ltm, lfp] = gamma.logs();
                let mut acc = LogSumExp::default();
                for t in terms {
                    acc.push(
                        t.log_coef
                            + xlogp(t.t_plus, lt)
                            + xlogp(t.f_minus, lfm)
                            + xlogp(t.t_minus, ltm)
                            + xlogp(t.f_plus, lfp),
                    );
                }
                acc.value()
            }
        }
    }

    /// Number of latent combinations summed over (1 for partitions).
    pub fn n_terms(&self) -> usize {
        match self {
            StudyLikelihood::Partition { .. } => 1,
            StudyLikelihood::Sum { terms } => terms.len(),
        }
    }

    /// Prepares the likelihood of a study of any kind.
    pub fn prepare(obs: &StudyObservation, apply_constraints: bool) -> Result<Self> {
        obs.validate()?;
        use StudyKind::*;
        match obs.kind {
            TruematCrvsOnly | TruematAndUplus => Ok(Self::overlap(
                obs.z_crvs,
                obs.z_matcrvs,
                obs.z_truemat_crvs.unwrap_or_default(),
                apply_constraints,
            )),
            FminusFplusUplus | FminusFplus | FminusUplus | FminusOnly => Self::breakdown(obs),
            TruematInclUnreg => Ok(Self::incomplete(
                obs.z_crvs,
                obs.z_unreg.unwrap_or_default(),
                obs.z_matcrvs,
                obs.z_truemat.unwrap_or_default(),
                apply_constraints,
            )),
        }
    }

    /// Partition implied by a breakdown study together with the reported
    /// CRVS maternal total. Unreported cells are lumped.
    pub fn breakdown(obs: &StudyObservation) -> Result<Self> {
        obs.validate()?;
        let n = obs.z_crvs;
        let mat = obs.z_matcrvs;
        let groups: Vec<(u64, u8)> = match obs.kind {
            StudyKind::FminusFplus | StudyKind::FminusFplusUplus => {
                let fm = obs.z_fminus.unwrap_or_default();
                let fp = obs.z_fplus.unwrap_or_default();
                vec![(mat - fp, T_PLUS), (fm, F_MINUS), (n - mat - fm, T_MINUS), (fp, F_PLUS)]
            }
            StudyKind::FminusOnly | StudyKind::FminusUplus => {
                let fm = obs.z_fminus.unwrap_or_default();
                vec![(fm, F_MINUS), (mat, T_PLUS | F_PLUS), (n - mat - fm, T_MINUS)]
            }
            other => {
                return Err(Error::InconsistentCounts(format!(
                    "{other} does not report a non-overlapping breakdown"
                )))
            }
        };
        let log_coef = ln_factorial(n) - groups.iter().map(|&(c, _)| ln_factorial(c)).sum::<f64>();
        Ok(StudyLikelihood::Partition {
            groups: groups.into_iter().map(|(count, mask)| Group { count: count as f64, mask }).collect(),
            log_coef,
        })
    }

    /// Latent combinations for a study reporting true maternal deaths among
    /// registered deaths alongside the CRVS-reported maternal deaths. The
    /// single free index is the number of true positives.
    pub fn overlap(z_crvs: u64, z_matcrvs: u64, z_truemat_crvs: u64, apply_constraints: bool) -> Self {
        let mut terms = Vec::new();
        if z_matcrvs <= z_crvs && z_truemat_crvs <= z_crvs {
            let (min_tp, min_tm) = if apply_constraints {
                (
                    binomial_quantile(z_truemat_crvs, CONSTRAINT_SE_LOWER, 0.025),
                    binomial_quantile(z_crvs - z_truemat_crvs, CONSTRAINT_SP_LOWER, 0.025),
                )
            } else {
                (0, 0)
            };
            let lo = (z_matcrvs + z_truemat_crvs).saturating_sub(z_crvs).max(min_tp);
            let hi = z_matcrvs.min(z_truemat_crvs);
            for tp in lo..=hi {
                if tp < lo {
                    break;
                }
                let fm = z_truemat_crvs - tp;
                let fp = z_matcrvs - tp;
                let tm = z_crvs - tp - fm - fp;
                if tm < min_tm {
                    continue;
                }
                terms.push(Term::new(tp, fm, tm, fp));
            }
        }
        StudyLikelihood::Sum { terms }
    }

    /// Latent combinations for a study reporting all true maternal deaths,
    /// registered or not, in a country-period with `z_unreg` unregistered
    /// deaths. Free indices are the unregistered maternal deaths and the
    /// true positives.
    pub fn incomplete(
        z_crvs: u64,
        z_unreg: u64,
        z_matcrvs: u64,
        z_truemat: u64,
        apply_constraints: bool,
    ) -> Self {
        let mut terms = Vec::new();
        if z_matcrvs > z_crvs {
            return StudyLikelihood::Sum { terms };
        }
        for u_plus in 0..=z_unreg.min(z_truemat) {
            // true maternal deaths among registered deaths for this split
            let tm_crvs = z_truemat - u_plus;
            if tm_crvs > z_crvs {
                continue;
            }
            let (min_tp, min_tm) = if apply_constraints {
                (
                    binomial_quantile(tm_crvs, CONSTRAINT_SE_LOWER, 0.025),
                    binomial_quantile(z_crvs - tm_crvs, CONSTRAINT_SP_LOWER, 0.025),
                )
            } else {
                (0, 0)
            };
            if apply_constraints {
                let r = tm_crvs as f64 / z_crvs.max(1) as f64;
                let lower = binomial_quantile(z_unreg, (0.5 * r).min(1.0), 0.025);
                let upper = binomial_quantile(z_unreg, (2.0 * r).min(1.0), 0.975);
                if u_plus < lower || u_plus > upper {
                    continue;
                }
            }
            let lo = (z_matcrvs + tm_crvs).saturating_sub(z_crvs).max(min_tp);
            let hi = z_matcrvs.min(tm_crvs);
            for tp in lo..=hi {
                if tp < lo {
                    break;
                }
                let fm = tm_crvs - tp;
                let fp = z_matcrvs - tp;
                let tm = z_crvs - tp - fm - fp;
                if tm < min_tm {
                    continue;
                }
                terms.push(Term::new(tp, fm, tm, fp));
            }
        }
        StudyLikelihood::Sum { terms }
    }
}

/// Log-likelihood of a breakdown study (`F-`/`F+` kinds).
pub fn loglik_breakdown(obs: &StudyObservation, gamma: &GammaFour) -> Result<f64> {
    Ok(StudyLikelihood::breakdown(obs)?.loglik(gamma))
}

/// Log-likelihood of observing `z_matcrvs` reported and `z_truemat_crvs`
/// true maternal deaths among `z_crvs` registered deaths.
pub fn loglik_truemat_overlap(
    z_crvs: u64,
    z_matcrvs: u64,
    z_truemat_crvs: u64,
    gamma: &GammaFour,
    apply_constraints: bool,
) -> f64 {
    StudyLikelihood::overlap(z_crvs, z_matcrvs, z_truemat_crvs, apply_constraints).loglik(gamma)
}

/// Log-likelihood of a study counting all true maternal deaths, including
/// unregistered ones.
pub fn loglik_truemat_incomplete(
    z_crvs: u64,
    z_unreg: u64,
    z_matcrvs: u64,
    z_truemat: u64,
    gamma: &GammaFour,
    apply_constraints: bool,
) -> f64 {
    StudyLikelihood::incomplete(z_crvs, z_unreg, z_matcrvs, z_truemat, apply_constraints).loglik(gamma)
}

/// Log-likelihood of any study kind.
pub fn study_loglik(obs: &StudyObservation, gamma: &GammaFour, apply_constraints: bool) -> Result<f64> {
    Ok(StudyLikelihood::prepare(obs, apply_constraints)?.loglik(gamma))
}
