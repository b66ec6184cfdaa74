use crvsadj::likelihood::{loglik_truemat_incomplete, loglik_truemat_overlap, GammaFour};

fn fact(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Plain-arithmetic multinomial density; exact enough for small counts.
fn multinomial(counts: [u64; 4], g: &GammaFour) -> f64 {
    let p = g.as_array();
    let n: u64 = counts.iter().sum();
    let mut v = fact(n);
    for (c, pi) in counts.iter().zip(p) {
        v *= pi.powi(*c as i32) / fact(*c);
    }
    v
}

fn gammas() -> Vec<GammaFour> {
    [
        (0.25, 0.25, 0.25, 0.25),
        (0.1, 0.1, 0.7, 0.1),
        (0.02, 0.01, 0.96, 0.01),
        (0.3, 0.05, 0.6, 0.05),
        (0.005, 0.015, 0.979, 0.001),
    ]
    .iter()
    .map(|&(a, b, c, d)| GammaFour::new(a, b, c, d).unwrap())
    .collect()
}

fn tuples(n: u64) -> Vec<[u64; 4]> {
    let mut out = Vec::new();
    for tp in 0..=n {
        for fm in 0..=n - tp {
            for fp in 0..=n - tp - fm {
                out.push([tp, fm, n - tp - fm - fp, fp]);
            }
        }
    }
    out
}

fn log_close(got: f64, want: f64) -> bool {
    if want == 0.0 {
        return got == f64::NEG_INFINITY;
    }
    (got - want.ln()).abs() < 1e-10
}

#[test]
fn overlap_matches_four_tuple_enumeration() {
    for g in gammas() {
        for n in 0..=12u64 {
            let all = tuples(n);
            for mat in 0..=n {
                for tmc in 0..=n {
                    // cells (T+, F-, T-, F+): reported maternal T+ + F+, true maternal T+ + F-
                    let want: f64 = all
                        .iter()
                        .filter(|c| c[0] + c[3] == mat && c[0] + c[1] == tmc)
                        .map(|c| multinomial(*c, &g))
                        .sum();
                    let got = loglik_truemat_overlap(n, mat, tmc, &g, false);
                    assert!(log_close(got, want), "n={n} mat={mat} tmc={tmc} got {got} want {}", want.ln());
                }
            }
        }
    }
}

#[test]
fn incomplete_matches_triple_enumeration() {
    for g in gammas() {
        for n in 0..=8u64 {
            let all = tuples(n);
            for unreg in 0..=4u64 {
                for mat in 0..=n {
                    for truemat in 0..=n + unreg {
                        let mut want = 0.0;
                        for u_plus in 0..=unreg {
                            for c in &all {
                                if c[0] + c[3] == mat && u_plus + c[0] + c[1] == truemat {
                                    want += multinomial(*c, &g);
                                }
                            }
                        }
                        let got = loglik_truemat_incomplete(n, unreg, mat, truemat, &g, false);
                        assert!(
                            log_close(got, want),
                            "n={n} unreg={unreg} mat={mat} truemat={truemat} got {got} want {}",
                            want.ln()
                        );
                    }
                }
            }
        }
    }
}

fn binom_cdf(n: u64, p: f64, k: u64) -> f64 {
    (0..=k)
        .map(|j| fact(n) / (fact(j) * fact(n - j)) * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32))
        .sum()
}

/// Smallest k with CDF(k) >= q, by direct summation.
fn binom_q(n: u64, p: f64, q: f64) -> u64 {
    (0..=n).find(|k| binom_cdf(n, p, *k) >= q - 1e-12).unwrap_or(n)
}

#[test]
fn constrained_incomplete_matches_filtered_enumeration() {
    for g in gammas() {
        for n in 1..=8u64 {
            let all = tuples(n);
            for unreg in 0..=4u64 {
                for mat in 0..=n {
                    for truemat in 0..=n + unreg {
                        let mut want = 0.0;
                        for u_plus in 0..=unreg {
                            for c in &all {
                                if c[0] + c[3] != mat || u_plus + c[0] + c[1] != truemat {
                                    continue;
                                }
                                let tmc = c[0] + c[1];
                                if c[0] < binom_q(tmc, 0.1, 0.025) || c[2] < binom_q(n - tmc, 0.97, 0.025) {
                                    continue;
                                }
                                let r = tmc as f64 / n as f64;
                                let lo = binom_q(unreg, (0.5 * r).min(1.0), 0.025);
                                let hi = binom_q(unreg, (2.0 * r).min(1.0), 0.975);
                                if u_plus < lo || u_plus > hi {
                                    continue;
                                }
                                want += multinomial(*c, &g);
                            }
                        }
                        let got = loglik_truemat_incomplete(n, unreg, mat, truemat, &g, true);
                        assert!(log_close(got, want), "n={n} unreg={unreg} mat={mat} truemat={truemat}");
                    }
                }
            }
        }
    }
}

#[test]
fn overlap_normalizes() {
    for g in gammas() {
        for n in [5u64, 10] {
            let total: f64 = (0..=n)
                .flat_map(|mat| (0..=n).map(move |tmc| (mat, tmc)))
                .map(|(mat, tmc)| loglik_truemat_overlap(n, mat, tmc, &g, false).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "n={n} total {total}");
        }
    }
}

#[test]
fn constraints_never_increase_likelihood() {
    for g in gammas() {
        for n in 0..=12u64 {
            for mat in 0..=n {
                for tmc in 0..=n {
                    let free = loglik_truemat_overlap(n, mat, tmc, &g, false);
                    let cons = loglik_truemat_overlap(n, mat, tmc, &g, true);
                    assert!(cons <= free + 1e-12);
                }
            }
        }
    }
}

#[test]
fn incomplete_without_unregistered_is_overlap() {
    for g in gammas() {
        for n in 0..=10u64 {
            for mat in 0..=n {
                for tm in 0..=n {
                    for cons in [false, true] {
                        let a = loglik_truemat_incomplete(n, 0, mat, tm, &g, cons);
                        let b = loglik_truemat_overlap(n, mat, tm, &g, cons);
                        assert!(a == b || (a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
