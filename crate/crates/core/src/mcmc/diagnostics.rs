//! Convergence diagnostics.

use super::{DrawRef, PosteriorSamples};
use crate::stats::{mean, variance};

/// Split-chain potential scale reduction factor. Each chain is cut in half
/// and the halves are compared as separate chains.
///
/// Returns `None` with fewer than two chains, fewer than ten draws per chain,
/// unequal chain lengths, or zero within-chain variance.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let n_full = chains[0].len();
    if n_full < 10 || chains.iter().any(|c| c.len() != n_full) {
        return None;
    }
    let n = n_full / 2;
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..n], &c[n_full - n..]]).collect();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| variance(h)).sum::<f64>() / halves.len() as f64;
    if !(w > 0.0) {
        return None;
    }
    let b = n as f64 * variance(&means);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Some((var_plus / w).sqrt())
}

/// Split-chain R-hat of a scalar function of the draws.
pub fn gelman_rubin(samples: &PosteriorSamples, selector: impl Fn(&DrawRef<'_>) -> f64) -> Option<f64> {
    let chains: Vec<Vec<f64>> = (0..samples.chains.len())
        .map(|c| (0..samples.chains[c].hypers.len()).map(|i| selector(&samples.draw(c, i))).collect())
        .collect();
    split_rhat(&chains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_chain(seed: u64, idx: u64, n: usize, mu: f64) -> Vec<f64> {
        let mut r = stream(seed, idx);
        (0..n).map(|_| mu + r.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn identical_chains() {
        let c: Vec<f64> = (0..200).map(|i| (i % 10) as f64).collect();
        let r = split_rhat(&[c.clone(), c]).unwrap();
        assert!(r <= 1.0 + 1e-6, "{r}");
    }

    #[test]
    fn separated_chains() {
        let r = split_rhat(&[normal_chain(1, 0, 500, 0.0), normal_chain(1, 1, 500, 5.0)]).unwrap();
        assert!(r > 1.1, "{r}");
    }

    #[test]
    fn iid_chains() {
        let cs: Vec<Vec<f64>> = (0..4).map(|i| normal_chain(3, i, 1000, 0.0)).collect();
        let r = split_rhat(&cs).unwrap();
        assert!((0.99..=1.01).contains(&r), "{r}");
    }

    #[test]
    fn undefined_cases() {
        assert!(split_rhat(&[vec![1.0; 20], vec![1.0; 20]]).is_none());
        assert!(split_rhat(&[vec![0.0, 1.0]]).is_none());
        assert!(split_rhat(&[vec![0.0; 5], vec![1.0; 5]]).is_none());
    }
}
