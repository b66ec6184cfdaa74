//! One Markov chain: adaptive Metropolis within Gibbs.
//!
//! Each iteration updates, in order,
//! 1. every anchor block `(eta+, eta-, logit truemat of its periods)`,
//! 2. `hyper_sweeps` times: each hyperparameter by a one-dimensional random
//!    walk holding the paths fixed (only the process density changes), then
//!    each hyperparameter jointly with the paths it governs, moving the
//!    paths along with it (shifts for the world means, rescaled deviations
//!    for the standard deviations), and finally the world means and
//!    reference standard deviations jointly with the reference anchors
//!    alone. The joint moves keep the chain from sticking when paths are
//!    pinned by data or the scale parameters are small.

use rand::Rng;
use rand_distr::StandardNormal;

use super::adapt::AdaptiveProposal;
use super::model::Model;
use super::{Acceptance, McmcConfig, Progress};
use crate::error::{Error, Result};
use crate::process::{bvn_logpdf, gamma_from_eta, log_prior_hyper, HyperParams, PHI_BOUND};
use crate::rng::stream;
use crate::stats::log1p_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const INIT_ATTEMPTS: usize = 100;

pub(crate) struct ChainOutput {
    pub hypers: Vec<HyperParams>,
    pub eta: Vec<[f64; 2]>,
    pub truemat: Vec<f64>,
    pub acceptance: Acceptance,
}

/// Unconstrained coordinates: world means, log standard deviations and
/// `atanh(phi / 0.95)`.
fn hyper_from_u(u: &[f64; 7]) -> HyperParams {
    HyperParams {
        eta_world_plus: u[0],
        eta_world_minus: u[1],
        sigma_plus: u[2].exp(),
        sigma_minus: u[3].exp(),
        delta_plus: u[4].exp(),
        delta_minus: u[5].exp(),
        phi: PHI_BOUND * u[6].tanh(),
    }
}

fn u_from_hyper(h: &HyperParams) -> [f64; 7] {
    [
        h.eta_world_plus,
        h.eta_world_minus,
        h.sigma_plus.ln(),
        h.sigma_minus.ln(),
        h.delta_plus.ln(),
        h.delta_minus.ln(),
        (h.phi / PHI_BOUND).atanh(),
    ]
}

fn log_jacobian(u: &[f64; 7]) -> f64 {
    // d tanh(x)/dx = sech^2(x) = 4 / (e^x + e^-x)^2
    let a = u[6].abs();
    let ln_sech2 = 2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p());
    u[2] + u[3] + u[4] + u[5] + PHI_BOUND.ln() + ln_sech2
}

/// Sufficient statistics of the anchor values for the process density.
#[derive(Debug, Clone, Copy, Default)]
struct ProcessStats {
    n_ref: f64,
    // reference means and centered cross products
    m_p: f64,
    m_m: f64,
    c_pp: f64,
    c_mm: f64,
    c_pm: f64,
    q_pp: f64,
    q_mm: f64,
    q_pm: f64,
}

impl ProcessStats {
    fn compute(model: &Model, eta: &[[f64; 2]]) -> Self {
        let mut s = ProcessStats::default();
        for a in 0..model.n_anchors {
            let [p, m] = eta[a];
            if model.is_ref[a] {
                s.n_ref += 1.0;
                s.m_p += p;
                s.m_m += m;
            }
            let g = model.anchor_gap[a];
            if g > 0.0 {
                let dp = p - eta[a - 1][0];
                let dm = m - eta[a - 1][1];
                s.q_pp += dp * dp / g;
                s.q_mm += dm * dm / g;
                s.q_pm += dp * dm / g;
            }
        }
        if s.n_ref > 0.0 {
            s.m_p /= s.n_ref;
            s.m_m /= s.n_ref;
            for a in (0..model.n_anchors).filter(|a| model.is_ref[*a]) {
                let dp = eta[a][0] - s.m_p;
                let dm = eta[a][1] - s.m_m;
                s.c_pp += dp * dp;
                s.c_mm += dm * dm;
                s.c_pm += dp * dm;
            }
        }
        s
    }

    fn log_density(&self, model: &Model, h: &HyperParams) -> f64 {
        let one_m = 1.0 - h.phi * h.phi;
        let n = self.n_ref;
        let ep = self.m_p - h.eta_world_plus;
        let em = self.m_m - h.eta_world_minus;
        let xx = self.c_pp + n * ep * ep;
        let yy = self.c_mm + n * em * em;
        let xy = self.c_pm + n * ep * em;
        let (sp, sm) = (h.sigma_plus, h.sigma_minus);
        let quad = (xx / (sp * sp) - 2.0 * h.phi * xy / (sp * sm) + yy / (sm * sm)).max(0.0);
        let refs = -n * (LN_2PI + sp.ln() + sm.ln() + 0.5 * one_m.ln()) - quad / (2.0 * one_m);
        let k = model.n_increments as f64;
        if k == 0.0 {
            return refs;
        }
        let (dp, dm) = (h.delta_plus, h.delta_minus);
        let quad = (self.q_pp / (dp * dp) - 2.0 * h.phi * self.q_pm / (dp * dm) + self.q_mm / (dm * dm))
            .max(0.0);
        let incs = -k * (LN_2PI + dp.ln() + dm.ln() + 0.5 * one_m.ln()) - model.ln_gap_sum - quad / (2.0 * one_m);
        refs + incs
    }
}

#[inline]
fn logit_uniform_prior(l: f64) -> f64 {
    -log1p_exp(-l) - log1p_exp(l)
}

struct Chain<'a> {
    model: &'a Model,
    cfg: &'a McmcConfig,
    fixed: bool,
    u: [f64; 7],
    h: HyperParams,
    eta: Vec<[f64; 2]>,
    ltm: Vec<f64>,
    ll: Vec<f64>,
    stats: ProcessStats,
    anchor_prop: Vec<AdaptiveProposal>,
    hyper_prop: Vec<AdaptiveProposal>,
    joint_prop: Vec<AdaptiveProposal>,
    // scratch
    eta_new: Vec<[f64; 2]>,
    ll_new: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn obs_loglik(&self, i: usize, eta: &[[f64; 2]], ltm: &[f64]) -> f64 {
        let o = &self.model.obs[i];
        let [p, m] = eta[o.anchor];
        o.lik.loglik(&gamma_from_eta(p, m, ltm[o.period]))
    }

    fn hyper_target(&self, u: &[f64; 7], stats: &ProcessStats) -> f64 {
        if self.fixed {
            return stats.log_density(self.model, &self.h);
        }
        let h = hyper_from_u(u);
        let lp = log_prior_hyper(&h);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp + log_jacobian(u) + stats.log_density(self.model, &h)
    }

    fn full_target(&self) -> f64 {
        let tm: f64 = self.ltm.iter().map(|l| logit_uniform_prior(*l)).sum();
        self.hyper_target(&self.u, &self.stats) + tm + self.ll.iter().sum::<f64>()
    }

    /// Process terms that involve anchor `a` with value `x`.
    fn local_process(&self, a: usize, x: [f64; 2]) -> f64 {
        let h = &self.h;
        let mut lp = 0.0;
        if self.model.is_ref[a] {
            lp += bvn_logpdf(
                x[0] - h.eta_world_plus,
                x[1] - h.eta_world_minus,
                h.sigma_plus,
                h.sigma_minus,
                h.phi,
            );
        }
        let g = self.model.anchor_gap[a];
        if g > 0.0 {
            let prev = self.eta[a - 1];
            let s = g.sqrt();
            lp += bvn_logpdf(x[0] - prev[0], x[1] - prev[1], h.delta_plus * s, h.delta_minus * s, h.phi);
        }
        if !self.model.is_last[a] {
            let next = self.eta[a + 1];
            let s = self.model.anchor_gap[a + 1].sqrt();
            lp += bvn_logpdf(next[0] - x[0], next[1] - x[1], h.delta_plus * s, h.delta_minus * s, h.phi);
        }
        lp
    }

    fn update_anchor<R: Rng>(&mut self, a: usize, iter: usize, rng: &mut R) {
        let model = self.model;
        let periods = &model.anchor_periods[a];
        let d = 2 + periods.len();
        let mut x = [0.0f64; 16];
        let mut y = [0.0f64; 16];
        assert!(d <= x.len(), "too many study periods share one reference year");
        x[0] = self.eta[a][0];
        x[1] = self.eta[a][1];
        for (j, p) in periods.iter().enumerate() {
            x[2 + j] = self.ltm[*p];
        }
        self.anchor_prop[a].propose(&x[..d], &mut y[..d], rng);

        let obs = &model.anchor_obs[a];
        let mut cur = self.local_process(a, [x[0], x[1]]);
        let mut new = self.local_process(a, [y[0], y[1]]);
        for j in 0..periods.len() {
            cur += logit_uniform_prior(x[2 + j]);
            new += logit_uniform_prior(y[2 + j]);
        }
        let mut accepted = false;
        if new.is_finite() {
            for &i in obs {
                cur += self.ll[i];
                if new == f64::NEG_INFINITY {
                    continue;
                }
                let o = &model.obs[i];
                let pj = periods.iter().position(|p| *p == o.period).expect("period of anchor");
                let v = o.lik.loglik(&gamma_from_eta(y[0], y[1], y[2 + pj]));
                self.ll_new[i] = v;
                new += v;
            }
            let log_u: f64 = rng.random::<f64>().ln();
            if new.is_finite() && log_u < new - cur {
                accepted = true;
                self.eta[a] = [y[0], y[1]];
                for (j, p) in periods.iter().enumerate() {
                    self.ltm[*p] = y[2 + j];
                }
                for &i in obs {
                    self.ll[i] = self.ll_new[i];
                }
            }
        }
        let prop = &mut self.anchor_prop[a];
        prop.record(accepted);
        if iter < self.cfg.n_burn {
            prop.adapt_scale(accepted, iter, self.cfg.target_accept);
            prop.observe(if accepted { &y[..d] } else { &x[..d] });
        }
    }

    fn update_hyper_centered<R: Rng>(&mut self, iter: usize, rng: &mut R) {
        let mut cur = self.hyper_target(&self.u, &self.stats);
        for i in 0..7 {
            let mut v = self.u;
            let mut step = [0.0];
            self.hyper_prop[i].propose(&[v[i]], &mut step, rng);
            v[i] = step[0];
            let new = self.hyper_target(&v, &self.stats);
            let log_u: f64 = rng.random::<f64>().ln();
            let accepted = new.is_finite() && log_u < new - cur;
            if accepted {
                self.u = v;
                self.h = hyper_from_u(&v);
                cur = new;
            }
            let prop = &mut self.hyper_prop[i];
            prop.record(accepted);
            if iter < self.cfg.n_burn {
                prop.adapt_scale(accepted, iter, self.cfg.target_accept);
            }
        }
    }

    /// Joint move of hyperparameter coordinate `i` and the anchors. With
    /// `refs_only`, only the reference anchors move (world means and
    /// reference standard deviations); otherwise whole paths move.
    fn update_hyper_joint<R: Rng>(&mut self, i: usize, refs_only: bool, iter: usize, rng: &mut R) {
        let mut step = [0.0];
        let prop_idx = if refs_only { 6 + i } else { i };
        self.joint_prop[prop_idx].propose(&[0.0], &mut step, rng);
        let eps = step[0];
        let model = self.model;
        let comp = i % 2;
        let mut v = self.u;
        v[i] += eps;
        let mut log_jac = 0.0;
        self.eta_new.copy_from_slice(&self.eta);
        match i / 2 {
            0 if refs_only => {
                for (ci, lay) in model.layouts.iter().enumerate() {
                    self.eta_new[model.anchor_offset[ci] + lay.ref_index][comp] += eps;
                }
            }
            1 if refs_only => {
                let s = eps.exp();
                let mu = self.u[comp];
                for (ci, lay) in model.layouts.iter().enumerate() {
                    let r = &mut self.eta_new[model.anchor_offset[ci] + lay.ref_index][comp];
                    *r = mu + s * (*r - mu);
                }
                log_jac = model.n_countries() as f64 * eps;
            }
            0 => {
                for e in self.eta_new.iter_mut() {
                    e[comp] += eps;
                }
            }
            1 => {
                let s = eps.exp();
                let mu = self.u[comp];
                for (ci, lay) in model.layouts.iter().enumerate() {
                    let a0 = model.anchor_offset[ci];
                    let dev = self.eta[a0 + lay.ref_index][comp] - mu;
                    for e in &mut self.eta_new[a0..a0 + lay.anchors.len()] {
                        e[comp] += dev * (s - 1.0);
                    }
                }
                log_jac = model.n_countries() as f64 * eps;
            }
            _ => {
                let s = eps.exp();
                for (ci, lay) in model.layouts.iter().enumerate() {
                    let a0 = model.anchor_offset[ci];
                    let r = self.eta[a0 + lay.ref_index][comp];
                    for e in &mut self.eta_new[a0..a0 + lay.anchors.len()] {
                        e[comp] = r + s * (e[comp] - r);
                    }
                }
                log_jac = model.n_increments as f64 * eps;
            }
        }
        let new_stats = ProcessStats::compute(model, &self.eta_new);
        let cur = self.hyper_target(&self.u, &self.stats) + self.ll.iter().sum::<f64>();
        let mut new = self.hyper_target(&v, &new_stats);
        if new.is_finite() && refs_only {
            self.ll_new.copy_from_slice(&self.ll);
            for (ci, lay) in model.layouts.iter().enumerate() {
                for &k in &model.anchor_obs[model.anchor_offset[ci] + lay.ref_index] {
                    self.ll_new[k] = self.obs_loglik(k, &self.eta_new, &self.ltm);
                }
            }
            new += self.ll_new.iter().sum::<f64>();
        } else if new.is_finite() {
            for k in 0..model.obs.len() {
                let val = self.obs_loglik(k, &self.eta_new, &self.ltm);
                self.ll_new[k] = val;
                new += val;
                if new == f64::NEG_INFINITY {
                    break;
                }
            }
        }
        let log_u: f64 = rng.random::<f64>().ln();
        let accepted = new.is_finite() && log_u < new + log_jac - cur;
        if accepted {
            self.u = v;
            self.h = hyper_from_u(&v);
            std::mem::swap(&mut self.eta, &mut self.eta_new);
            std::mem::swap(&mut self.ll, &mut self.ll_new);
            self.stats = new_stats;
        }
        let prop = &mut self.joint_prop[prop_idx];
        prop.record(accepted);
        if iter < self.cfg.n_burn {
            prop.adapt_scale(accepted, iter, self.cfg.target_accept);
        }
    }
}

fn initial_state<R: Rng>(
    model: &Model,
    init: &HyperParams,
    jitter: f64,
    rng: &mut R,
) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut eta = vec![[init.eta_world_plus, init.eta_world_minus]; model.n_anchors];
    let mut ltm = model.init_logit_truemat.clone();
    if jitter > 0.0 {
        for e in eta.iter_mut() {
            e[0] += jitter * rng.sample::<f64, _>(StandardNormal);
            e[1] += jitter * rng.sample::<f64, _>(StandardNormal);
        }
        for l in ltm.iter_mut() {
            *l += jitter * rng.sample::<f64, _>(StandardNormal);
        }
    }
    (eta, ltm)
}

pub(crate) fn default_init() -> HyperParams {
    HyperParams {
        eta_world_plus: 0.0,
        eta_world_minus: 19f64.ln(),
        sigma_plus: 0.5,
        sigma_minus: 0.5,
        delta_plus: 0.2,
        delta_minus: 0.2,
        phi: 0.0,
    }
}

pub(crate) fn run_chain(
    model: &Model,
    cfg: &McmcConfig,
    fixed: Option<HyperParams>,
    chain_index: usize,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<ChainOutput> {
    let mut rng = stream(cfg.seed, chain_index as u64);
    let h0 = fixed.unwrap_or_else(default_init);
    let anchor_prop = (0..model.n_anchors)
        .map(|a| {
            let mut sd = vec![0.1, 0.1];
            sd.extend(model.anchor_periods[a].iter().map(|_| 0.1));
            AdaptiveProposal::new(&sd)
        })
        .collect();
    let mut chain = Chain {
        model,
        cfg,
        fixed: fixed.is_some(),
        u: u_from_hyper(&h0),
        h: h0,
        eta: vec![],
        ltm: vec![],
        ll: vec![0.0; model.obs.len()],
        stats: ProcessStats::default(),
        anchor_prop,
        hyper_prop: (0..7).map(|_| AdaptiveProposal::new(&[0.1])).collect(),
        joint_prop: (0..10).map(|_| AdaptiveProposal::new(&[0.05])).collect(),
        eta_new: vec![[0.0; 2]; model.n_anchors],
        ll_new: vec![0.0; model.obs.len()],
    };

    let mut ok = false;
    for attempt in 0..INIT_ATTEMPTS {
        let jitter = match (attempt, chain_index) {
            (0, 0) => 0.0,
            (0, _) => 0.1,
            _ => 0.1 + 0.05 * attempt as f64,
        };
        let (eta, ltm) = initial_state(model, &h0, jitter, &mut rng);
        chain.eta = eta;
        chain.ltm = ltm;
        for k in 0..model.obs.len() {
            chain.ll[k] = chain.obs_loglik(k, &chain.eta, &chain.ltm);
        }
        chain.stats = ProcessStats::compute(model, &chain.eta);
        if chain.full_target().is_finite() {
            ok = true;
            break;
        }
    }
    if !ok {
        return Err(Error::NonFinitePosterior { attempts: INIT_ATTEMPTS });
    }

    let n_keep = cfg.retained_per_chain();
    let mut out = ChainOutput {
        hypers: Vec::with_capacity(n_keep),
        eta: Vec::with_capacity(n_keep * model.n_anchors),
        truemat: Vec::with_capacity(n_keep * model.n_periods),
        acceptance: Acceptance::default(),
    };
    let report_every = (cfg.n_iter / 20).max(1);
    for iter in 0..cfg.n_iter {
        for a in 0..model.n_anchors {
            chain.update_anchor(a, iter, &mut rng);
        }
        chain.stats = ProcessStats::compute(model, &chain.eta);
        if !chain.fixed {
            for _ in 0..cfg.hyper_sweeps {
                chain.update_hyper_centered(iter, &mut rng);
                for i in 0..6 {
                    chain.update_hyper_joint(i, false, iter, &mut rng);
                }
                for i in 0..4 {
                    chain.update_hyper_joint(i, true, iter, &mut rng);
                }
            }
        }
        if iter < cfg.n_burn {
            if iter + 1 == cfg.n_burn / 2 {
                chain.anchor_prop.iter_mut().for_each(AdaptiveProposal::reset_moments);
            }
            if (iter + 1) % cfg.adapt_window == 0 {
                chain.anchor_prop.iter_mut().for_each(AdaptiveProposal::refresh_covariance);
            }
        } else if (iter - cfg.n_burn + 1).is_multiple_of(cfg.thin) {
            out.hypers.push(chain.h);
            out.eta.extend_from_slice(&chain.eta);
            out.truemat.extend(chain.ltm.iter().map(|l| crate::stats::inv_logit(*l)));
        }
        if (iter + 1) % report_every == 0 {
            progress(Progress { chain: chain_index, iteration: iter + 1, n_iter: cfg.n_iter });
        }
    }
    let rate = |ps: &[AdaptiveProposal]| {
        let (a, p) = ps.iter().fold((0u64, 0u64), |(a, p), x| (a + x.accepted, p + x.proposed));
        if p == 0 { f64::NAN } else { a as f64 / p as f64 }
    };
    out.acceptance = Acceptance {
        anchors: rate(&chain.anchor_prop),
        hypers: rate(&chain.hyper_prop),
        joint: rate(&chain.joint_prop),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{log_process_density, CountryPath};
    use crate::types::{Dataset, StudyKind, StudyObservation};

    #[test]
    fn hyper_coordinates_round_trip() {
        let h = HyperParams {
            eta_world_plus: 0.3,
            eta_world_minus: 4.0,
            sigma_plus: 0.7,
            sigma_minus: 1.2,
            delta_plus: 0.05,
            delta_minus: 0.3,
            phi: -0.4,
        };
        let back = hyper_from_u(&u_from_hyper(&h));
        for (a, b) in h.as_array().iter().zip(back.as_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_jacobian_matches_numeric_derivative() {
        let mut u = [0.0; 7];
        for x in [-3.0, -0.5, 0.0, 1.2, 6.0] {
            u[6] = x;
            let h = 1e-6f64;
            let num = PHI_BOUND * ((x + h).tanh() - (x - h).tanh()) / (2.0 * h);
            assert!((log_jacobian(&u) - num.ln()).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn sufficient_statistics_match_path_density() {
        // A single country whose anchors are consecutive years, so the
        // process density equals the annual path density.
        let mk = |t: i32| {
            let mut s = StudyObservation::new("A", t, t, StudyKind::FminusFplus, 50, 5);
            s.z_fminus = Some(2);
            s.z_fplus = Some(1);
            s
        };
        let ds = Dataset::new(vec![mk(2000), mk(2001), mk(2002)], vec![]);
        let model = Model::build(&ds, |_| true, true).unwrap();
        let eta = vec![[0.2, 3.0], [0.5, 3.4], [0.1, 2.9]];
        let h = HyperParams {
            eta_world_plus: 0.1,
            eta_world_minus: 3.1,
            sigma_plus: 0.6,
            sigma_minus: 0.9,
            delta_plus: 0.3,
            delta_minus: 0.4,
            phi: 0.3,
        };
        let stats = ProcessStats::compute(&model, &eta);
        let path = CountryPath {
            country: "A".into(),
            t_ref: 2001,
            first_year: 2000,
            eta_plus: eta.iter().map(|e| e[0]).collect(),
            eta_minus: eta.iter().map(|e| e[1]).collect(),
            periods: vec![],
            truemat: vec![],
        };
        let want = log_process_density(&path, &h);
        assert!((stats.log_density(&model, &h) - want).abs() < 1e-10);
    }

    #[test]
    fn gapped_anchors_use_scaled_increment() {
        let mk = |t: i32| {
            let mut s = StudyObservation::new("A", t, t, StudyKind::FminusFplus, 50, 5);
            s.z_fminus = Some(2);
            s.z_fplus = Some(1);
            s
        };
        let ds = Dataset::new(vec![mk(2000), mk(2004)], vec![]);
        let model = Model::build(&ds, |_| true, true).unwrap();
        assert_eq!(model.layouts[0].anchors, vec![2000, 2002, 2004]);
        let eta = vec![[0.2, 3.0], [0.5, 3.4], [0.1, 2.9]];
        let h = default_init();
        let stats = ProcessStats::compute(&model, &eta);
        let s2 = 2f64.sqrt();
        let want = bvn_logpdf(0.5 - h.eta_world_plus, 3.4 - h.eta_world_minus, 0.5, 0.5, 0.0)
            + bvn_logpdf(0.3, 0.4, 0.2 * s2, 0.2 * s2, 0.0)
            + bvn_logpdf(-0.4, -0.5, 0.2 * s2, 0.2 * s2, 0.0);
        assert!((stats.log_density(&model, &h) - want).abs() < 1e-10);
    }
}
