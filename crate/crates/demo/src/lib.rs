//! WebAssembly bindings for the static page in `www/`.
//!
//! Every export returns a flat `Vec<f64>` (a `Float64Array` in the browser)
//! and reports bad input as a string error.

use wasm_bindgen::prelude::*;

use crvsadj::bmat::negbin_logpdf_mean_var;
use crvsadj::postprocess::adjustment_factor;
use crvsadj::process::{simulate_path, to_transformed, HyperParams};
use crvsadj::rng::stream;
use crvsadj::stats::ln_factorial;

fn msg(e: crvsadj::Error) -> String {
    e.to_string()
}

/// Adjustment factor over `n` true proportions maternal spread evenly on
/// `[p_min, p_max]`, as interleaved `(p, factor)` pairs.
#[wasm_bindgen]
pub fn adjustment_curve(se: f64, sp: f64, p_min: f64, p_max: f64, n: usize) -> Result<Vec<f64>, String> {
    if n < 2 || !(0.0 < p_min && p_min < p_max && p_max <= 1.0) {
        return Err("need 0 < p_min < p_max <= 1 and at least two points".into());
    }
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let p = p_min + (p_max - p_min) * i as f64 / (n - 1) as f64;
        out.push(p);
        out.push(adjustment_factor(se, sp, p).map_err(msg)?);
    }
    Ok(out)
}

/// Simulated sensitivity and specificity paths of `n_countries` countries
/// over `n_years` years with the reference year in the middle.
///
/// Layout: for each country, `n_years` sensitivities then `n_years`
/// specificities.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    se_world: f64,
    sp_world: f64,
    sigma: f64,
    delta: f64,
    phi: f64,
    n_countries: usize,
    n_years: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if n_countries == 0 || n_years == 0 || n_years > 500 || n_countries > 100 {
        return Err("need 1 to 100 countries and 1 to 500 years".into());
    }
    let (ep, em) = to_transformed(se_world, sp_world).map_err(msg)?;
    let h = HyperParams {
        eta_world_plus: ep,
        eta_world_minus: em,
        sigma_plus: sigma,
        sigma_minus: sigma,
        delta_plus: delta,
        delta_minus: delta,
        phi,
    };
    h.validate().map_err(msg)?;
    let last = n_years as i32 - 1;
    let mut out = Vec::with_capacity(2 * n_years * n_countries);
    for c in 0..n_countries {
        let mut rng = stream(seed, c as u64);
        let path = simulate_path(&h, "demo", last / 2, 0..=last, &mut rng).map_err(msg)?;
        let nat: Vec<(f64, f64)> = path.years().map(|y| path.natural_at(y).unwrap()).collect();
        out.extend(nat.iter().map(|v| v.0));
        out.extend(nat.iter().map(|v| v.1));
    }
    Ok(out)
}

/// Negative binomial with mean `e` and variance `v` next to the Poisson with
/// mean `e`, for counts `0..=y_max`: interleaved `(negbin, poisson)` pmfs.
#[wasm_bindgen]
pub fn negbin_vs_poisson(e: f64, v: f64, y_max: u32) -> Result<Vec<f64>, String> {
    if e.is_nan() || e <= 0.0 || y_max > 100_000 {
        return Err("need a positive mean and y_max of at most 100000".into());
    }
    let mut out = Vec::with_capacity(2 * (y_max as usize + 1));
    for y in 0..=u64::from(y_max) {
        out.push(negbin_logpdf_mean_var(y, e, v).map_err(msg)?.exp());
        out.push((y as f64 * e.ln() - e - ln_factorial(y)).exp());
    }
    Ok(out)
}
