use crvsadj::process::{log_process_density, simulate_path, CountryPath, HyperParams};
use crvsadj::rng::stream;

fn hypers() -> HyperParams {
    HyperParams {
        eta_world_plus: 0.4,
        eta_world_minus: 4.2,
        sigma_plus: 0.35,
        sigma_minus: 0.6,
        delta_plus: 0.12,
        delta_minus: 0.2,
        phi: -0.4,
    }
}

/// Covariance of the stacked path (plus block then minus block).
fn path_cov(h: &HyperParams, n: usize, r: usize) -> Vec<f64> {
    let sd_s = [h.sigma_plus, h.sigma_minus];
    let sd_d = [h.delta_plus, h.delta_minus];
    let corr = |a: usize, b: usize| if a == b { 1.0 } else { h.phi };
    let d = 2 * n;
    let mut c = vec![0.0; d * d];
    for a in 0..2 {
        for b in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let same_side = (i >= r && j >= r) || (i <= r && j <= r);
                    let shared = if same_side { i.abs_diff(r).min(j.abs_diff(r)) } else { 0 };
                    c[(a * n + i) * d + b * n + j] =
                        corr(a, b) * (sd_s[a] * sd_s[b] + shared as f64 * sd_d[a] * sd_d[b]);
                }
            }
        }
    }
    c
}

fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &[f64]) -> f64 {
    let d = x.len();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = cov[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            l[i * d + j] = if i == j { s.sqrt() } else { s / l[j * d + j] };
        }
    }
    let mut z = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[i * d + k] * z[k]).sum();
        z[i] = (x[i] - mean[i] - s) / l[i * d + i];
    }
    let log_det: f64 = (0..d).map(|i| l[i * d + i].ln()).sum();
    -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_det - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn path_density_is_the_joint_normal() {
    let h = hypers();
    for (seed, n, r) in [(1u64, 1usize, 0usize), (2, 5, 2), (3, 9, 0), (4, 12, 11), (5, 8, 3)] {
        let mut rng = stream(seed, 0);
        let path = simulate_path(&h, "X", 2000 + r as i32, 2000..=2000 + n as i32 - 1, &mut rng).unwrap();
        let x: Vec<f64> = path.eta_plus.iter().chain(&path.eta_minus).copied().collect();
        let mean: Vec<f64> = (0..2 * n).map(|i| if i < n { h.eta_world_plus } else { h.eta_world_minus }).collect();
        let want = mvn_logpdf(&x, &mean, &path_cov(&h, n, r));
        let got = log_process_density(&path, &h);
        assert!((got - want).abs() < 1e-9, "n={n} r={r} got {got} want {want}");
    }
}

#[test]
fn simulated_paths_have_random_walk_moments() {
    let h = hypers();
    let reps = 20_000;
    let mut rng = stream(11, 0);
    let (r, k) = (3usize, 4usize);
    let mut at = vec![[0.0f64; 2]; reps];
    let mut ahead = vec![[0.0f64; 2]; reps];
    for i in 0..reps {
        let p: CountryPath = simulate_path(&h, "X", 2003, 2000..=2010, &mut rng).unwrap();
        at[i] = [p.eta_plus[r], p.eta_minus[r]];
        ahead[i] = [p.eta_plus[r + k], p.eta_minus[r + k]];
    }
    let var = |v: &[[f64; 2]], c: usize| {
        let m = v.iter().map(|x| x[c]).sum::<f64>() / reps as f64;
        v.iter().map(|x| (x[c] - m).powi(2)).sum::<f64>() / reps as f64
    };
    let want_at = h.sigma_plus.powi(2);
    let want_ahead = h.sigma_plus.powi(2) + k as f64 * h.delta_plus.powi(2);
    // 5% relative tolerance is about five standard errors at this sample size
    assert!((var(&at, 0) / want_at - 1.0).abs() < 0.05);
    assert!((var(&ahead, 0) / want_ahead - 1.0).abs() < 0.05);
    let want_m = h.sigma_minus.powi(2) + k as f64 * h.delta_minus.powi(2);
    assert!((var(&ahead, 1) / want_m - 1.0).abs() < 0.05);
}
