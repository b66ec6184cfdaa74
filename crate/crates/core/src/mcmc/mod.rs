//! Posterior sampling for the hierarchical misclassification model.

mod adapt;
mod chain;
mod diagnostics;
mod model;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use diagnostics::{gelman_rubin, split_rhat};
pub use model::CountryLayout;

use crate::error::{Error, Result};
use crate::process::{draw_bvn, to_natural, CountryPath, HyperParams};
use crate::types::{Dataset, StudyObservation};
use model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iterations between refreshes of the block proposal covariances
    /// during burn-in.
    pub adapt_window: usize,
    pub target_accept: f64,
    /// Apply the plausibility bounds on latent counts in the
    /// true-maternal-only likelihoods.
    pub apply_constraints: bool,
    /// Hyperparameter sweeps per iteration.
    pub hyper_sweeps: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_chains: 10,
            n_iter: 40_000,
            n_burn: 10_000,
            thin: 20,
            seed: 20_160_601,
            adapt_window: 100,
            target_accept: 0.44,
            apply_constraints: true,
            hyper_sweeps: 5,
        }
    }
}

impl McmcConfig {
    /// A configuration small enough for quick runs and tests.
    pub fn desk() -> Self {
        Self { n_chains: 4, n_iter: 4000, n_burn: 2000, thin: 2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.n_burn >= self.n_iter {
            return Err(Error::Config(format!(
                "n_burn ({}) must be smaller than n_iter ({})",
                self.n_burn, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.adapt_window == 0 {
            return Err(Error::Config("adapt_window must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }
}

/// Reported by the sampler every few percent of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub chain: usize,
    pub iteration: usize,
    pub n_iter: usize,
}

/// Acceptance rates over the whole run, by move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub anchors: f64,
    pub hypers: f64,
    pub joint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub hypers: Vec<HyperParams>,
    /// Per draw, the transformed `(eta+, eta-)` at every anchor of every
    /// country in layout order.
    pub eta: Vec<[f64; 2]>,
    /// Per draw, the true proportion maternal of every period in layout
    /// order.
    pub truemat: Vec<f64>,
    pub acceptance: Acceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub config: McmcConfig,
    pub dataset_hash: String,
    /// Not serialized, so saved posteriors are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
    pub layouts: Vec<CountryLayout>,
    /// Set when the hyperparameters were held fixed.
    pub fixed_hypers: Option<HyperParams>,
    pub chains: Vec<ChainSamples>,
}

/// One retained draw.
#[derive(Debug, Clone, Copy)]
pub struct DrawRef<'a> {
    pub hypers: &'a HyperParams,
    eta: &'a [[f64; 2]],
    truemat: &'a [f64],
    samples: &'a PosteriorSamples,
}

impl<'a> DrawRef<'a> {
    /// Transformed pair at anchor `k` of country `c`.
    pub fn anchor(&self, c: usize, k: usize) -> [f64; 2] {
        self.eta[self.samples.anchor_offset(c) + k]
    }

    pub fn truemat(&self, c: usize, period: usize) -> f64 {
        self.truemat[self.samples.period_offset(c) + period]
    }

    /// Transformed pair of country `c` in `year`, drawn from its conditional
    /// distribution given the anchors when `year` is not an anchor.
    pub fn eta_at<R: Rng + ?Sized>(&self, c: usize, year: i32, rng: &mut R) -> [f64; 2] {
        let lay = &self.samples.layouts[c];
        let h = self.hypers;
        let anchors = &lay.anchors;
        match anchors.binary_search(&year) {
            Ok(k) => self.anchor(c, k),
            Err(0) => {
                let x = self.anchor(c, 0);
                walk(x, (anchors[0] - year) as f64, h, rng)
            }
            Err(k) if k == anchors.len() => {
                let x = self.anchor(c, k - 1);
                walk(x, (year - anchors[k - 1]) as f64, h, rng)
            }
            Err(k) => {
                let (a, b) = (anchors[k - 1], anchors[k]);
                bridge(self.anchor(c, k - 1), self.anchor(c, k), (year - a) as f64, (b - a) as f64, h, rng)
            }
        }
    }

    /// A joint draw of the annual path of country `c` over `first..=last`.
    pub fn path<R: Rng + ?Sized>(&self, c: usize, first: i32, last: i32, rng: &mut R) -> CountryPath {
        let lay = &self.samples.layouts[c];
        let anchors = &lay.anchors;
        let lo = first.min(anchors[0]);
        let hi = last.max(*anchors.last().expect("nonempty anchors"));
        let n = (hi - lo + 1) as usize;
        let mut vals = vec![[0.0; 2]; n];
        let h = self.hypers;
        for (k, y) in anchors.iter().enumerate() {
            vals[(y - lo) as usize] = self.anchor(c, k);
        }
        for y in (lo..anchors[0]).rev() {
            let i = (y - lo) as usize;
            vals[i] = walk(vals[i + 1], 1.0, h, rng);
        }
        for w in anchors.windows(2) {
            for y in w[0] + 1..w[1] {
                let i = (y - lo) as usize;
                let prev = vals[i - 1];
                let next = vals[(w[1] - lo) as usize];
                vals[i] = bridge(prev, next, 1.0, (w[1] - y + 1) as f64, h, rng);
            }
        }
        for y in anchors[anchors.len() - 1] + 1..=hi {
            let i = (y - lo) as usize;
            vals[i] = walk(vals[i - 1], 1.0, h, rng);
        }
        let keep = (first - lo) as usize..=(last - lo) as usize;
        CountryPath {
            country: lay.country.clone(),
            t_ref: lay.t_ref,
            first_year: first,
            eta_plus: vals[keep.clone()].iter().map(|v| v[0]).collect(),
            eta_minus: vals[keep].iter().map(|v| v[1]).collect(),
            periods: lay.periods.clone(),
            truemat: (0..lay.periods.len()).map(|p| self.truemat(c, p)).collect(),
        }
    }
}

fn walk<R: Rng + ?Sized>(x: [f64; 2], years: f64, h: &HyperParams, rng: &mut R) -> [f64; 2] {
    let s = years.sqrt();
    let (dx, dy) = draw_bvn(rng, h.delta_plus * s, h.delta_minus * s, h.phi);
    [x[0] + dx, x[1] + dy]
}

/// Random-walk value `l` years after `a`, given the value `gap` years after
/// `a` is `b`.
fn bridge<R: Rng + ?Sized>(a: [f64; 2], b: [f64; 2], l: f64, gap: f64, h: &HyperParams, rng: &mut R) -> [f64; 2] {
    let w = l / gap;
    let s = (l * (gap - l) / gap).sqrt();
    let (dx, dy) = draw_bvn(rng, h.delta_plus * s, h.delta_minus * s, h.phi);
    [a[0] + w * (b[0] - a[0]) + dx, a[1] + w * (b[1] - a[1]) + dy]
}

impl PosteriorSamples {
    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.hypers.len())
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.hypers.len()).sum()
    }

    fn n_anchors(&self) -> usize {
        self.layouts.iter().map(|l| l.anchors.len()).sum()
    }

    fn n_periods(&self) -> usize {
        self.layouts.iter().map(|l| l.periods.len()).sum()
    }

    fn anchor_offset(&self, c: usize) -> usize {
        self.layouts[..c].iter().map(|l| l.anchors.len()).sum()
    }

    fn period_offset(&self, c: usize) -> usize {
        self.layouts[..c].iter().map(|l| l.periods.len()).sum()
    }

    pub fn country_index(&self, country: &str) -> Option<usize> {
        self.layouts.iter().position(|l| l.country == country)
    }

    pub fn draw(&self, chain: usize, i: usize) -> DrawRef<'_> {
        let (na, np) = (self.n_anchors(), self.n_periods());
        let c = &self.chains[chain];
        DrawRef {
            hypers: &c.hypers[i],
            eta: &c.eta[i * na..(i + 1) * na],
            truemat: &c.truemat[i * np..(i + 1) * np],
            samples: self,
        }
    }

    /// All draws, chain by chain.
    pub fn draws(&self) -> impl Iterator<Item = DrawRef<'_>> + '_ {
        (0..self.chains.len()).flat_map(move |c| (0..self.chains[c].hypers.len()).map(move |i| self.draw(c, i)))
    }

    pub fn hyper_draws(&self) -> Vec<HyperParams> {
        self.chains.iter().flat_map(|c| c.hypers.iter().copied()).collect()
    }

    /// Per-chain draws of a named hyperparameter (see [`HyperParams::get`]).
    pub fn hyper_chains(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        self.chains
            .iter()
            .map(|c| c.hypers.iter().map(|h| h.get(name)).collect::<Option<Vec<f64>>>())
            .collect()
    }

    /// Natural-scale `(se, sp)` draws of country `c` in `year`, over all
    /// chains. Years between or outside the anchors are filled from the
    /// random walk using the stream `(seed, c)`.
    pub fn natural_draws(&self, c: usize, year: i32, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = crate::rng::stream(seed, c as u64);
        self.draws()
            .map(|d| {
                let [p, m] = d.eta_at(c, year, &mut rng);
                to_natural(p, m)
            })
            .collect()
    }

    pub fn truemat_draws(&self, c: usize, period: usize) -> Vec<f64> {
        self.draws().map(|d| d.truemat(c, period)).collect()
    }
}

/// Fits the global model to every country in `dataset`.
pub fn fit_global(dataset: &Dataset, config: &McmcConfig) -> Result<PosteriorSamples> {
    fit_global_with_progress(dataset, config, &|_| {})
}

pub fn fit_global_with_progress(
    dataset: &Dataset,
    config: &McmcConfig,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<PosteriorSamples> {
    run(dataset, config, None, |s| s.kind.in_global_fit(), progress)
}

/// Fits with the hyperparameters held at `hypers`, using every study kind.
pub fn fit_fixed_hypers(
    dataset: &Dataset,
    config: &McmcConfig,
    hypers: HyperParams,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<PosteriorSamples> {
    hypers.validate()?;
    run(dataset, config, Some(hypers), |_| true, progress)
}

fn run(
    dataset: &Dataset,
    config: &McmcConfig,
    fixed: Option<HyperParams>,
    include: impl Fn(&StudyObservation) -> bool,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<PosteriorSamples> {
    config.validate()?;
    let start = Instant::now();
    let model = Model::build(dataset, include, config.apply_constraints)?;
    let outputs: Vec<Result<chain::ChainOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.n_chains)
            .map(|i| {
                let model = &model;
                scope.spawn(move || chain::run_chain(model, config, fixed, i, progress))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let mut chains = Vec::with_capacity(outputs.len());
    for o in outputs {
        let o = o?;
        chains.push(ChainSamples { hypers: o.hypers, eta: o.eta, truemat: o.truemat, acceptance: o.acceptance });
    }
    Ok(PosteriorSamples {
        config: config.clone(),
        dataset_hash: dataset.content_hash(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        layouts: model.layouts,
        fixed_hypers: fixed,
        chains,
    })
}
