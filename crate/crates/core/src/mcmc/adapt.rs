//! Random-walk proposals whose scale (and, for blocks, covariance) is tuned
//! during burn-in and frozen afterwards.

use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub(crate) struct AdaptiveProposal {
    dim: usize,
    /// Lower-triangular factor of the proposal shape, row-major.
    chol: Vec<f64>,
    log_scale: f64,
    count: f64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
    scratch: Vec<f64>,
    pub accepted: u64,
    pub proposed: u64,
}

impl AdaptiveProposal {
    pub fn new(init_sd: &[f64]) -> Self {
        let dim = init_sd.len();
        let mut chol = vec![0.0; dim * dim];
        for (i, sd) in init_sd.iter().enumerate() {
            chol[i * dim + i] = *sd;
        }
        Self {
            dim,
            chol,
            log_scale: 0.0,
            count: 0.0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
            scratch: vec![0.0; dim],
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn propose<R: Rng + ?Sized>(&mut self, x: &[f64], out: &mut [f64], rng: &mut R) {
        let d = self.dim;
        let scale = self.log_scale.exp();
        for zi in self.scratch.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[i * d + j] * self.scratch[j];
            }
            out[i] = x[i] + scale * s;
        }
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
    }

    /// Robbins-Monro step of the log scale toward the target acceptance.
    pub fn adapt_scale(&mut self, accepted: bool, iter: usize, target: f64) {
        let gain = ((iter + 1) as f64).powf(-0.6);
        let a = if accepted { 1.0 } else { 0.0 };
        self.log_scale = (self.log_scale + gain * (a - target)).clamp(-30.0, 10.0);
    }

    /// Accumulates the current state into the running covariance.
    #[allow(clippy::needless_range_loop)]
    pub fn observe(&mut self, x: &[f64]) {
        let d = self.dim;
        self.count += 1.0;
        for i in 0..d {
            self.scratch[i] = x[i] - self.mean[i];
            self.mean[i] += self.scratch[i] / self.count;
        }
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] += self.scratch[i] * (x[j] - self.mean[j]);
            }
        }
    }

    pub fn reset_moments(&mut self) {
        self.count = 0.0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.comoment.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Replaces the proposal shape with the empirical covariance of the
    /// observed states. The scale restarts at the usual `2.38 / sqrt(d)`.
    pub fn refresh_covariance(&mut self) {
        let d = self.dim;
        if d < 2 || self.count < (4 * d + 8) as f64 {
            return;
        }
        let mut cov: Vec<f64> = self.comoment.iter().map(|c| c / (self.count - 1.0)).collect();
        let max_diag = (0..d).map(|i| cov[i * d + i]).fold(0.0f64, f64::max);
        if !(max_diag > 0.0) {
            return;
        }
        for i in 0..d {
            cov[i * d + i] += 1e-10 * max_diag + 1e-300;
        }
        if let Some(l) = cholesky(&cov, d) {
            let old_scale = self.log_scale;
            self.chol = l;
            self.log_scale = (2.38 / (d as f64).sqrt()).ln();
            if !self.log_scale.is_finite() {
                self.log_scale = old_scale;
            }
        }
    }
}

pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.4, 2.0, 2.0, 0.5, 0.4, 0.5, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn running_covariance() {
        let mut p = AdaptiveProposal::new(&[1.0, 1.0]);
        let pts = [[1.0, 2.0], [2.0, 4.1], [3.0, 5.9], [4.0, 8.0]];
        for x in &pts {
            p.observe(x);
        }
        let c = |i: usize, j: usize| p.comoment[i * 2 + j] / (p.count - 1.0);
        let xs: Vec<f64> = pts.iter().map(|v| v[0]).collect();
        let ys: Vec<f64> = pts.iter().map(|v| v[1]).collect();
        assert!((c(0, 1) - crate::stats::covariance(&xs, &ys)).abs() < 1e-12);
        assert!((c(1, 1) - crate::stats::variance(&ys)).abs() < 1e-12);
    }
}
