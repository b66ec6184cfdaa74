use crvsadj::io::{parse_crvs, parse_studies, write_crvs, write_studies};
use crvsadj::{CrvsYearRecord, StudyKind, StudyObservation};
use proptest::prelude::*;

/// A synthetic dataset with the census of study kinds of the real database.
fn census() -> Vec<StudyObservation> {
    let plan = [
        (StudyKind::TruematCrvsOnly, 162usize, 27usize),
        (StudyKind::TruematAndUplus, 2, 1),
        (StudyKind::FminusFplusUplus, 10, 2),
        (StudyKind::FminusFplus, 8, 2),
        (StudyKind::FminusUplus, 1, 1),
        (StudyKind::FminusOnly, 38, 4),
    ];
    let mut out = Vec::new();
    let mut country = 0;
    for (kind, n_obs, n_countries) in plan {
        for i in 0..n_obs {
            let c = country + i % n_countries;
            let t1 = 1980 + (i / n_countries) as i32 * 2;
            let z_crvs = 20_000 + 37 * i as u64;
            let z_mat = 40 + (i as u64 % 17);
            let mut s = StudyObservation::new(format!("K{c:02}"), t1, t1 + 1, kind, z_crvs, z_mat);
            use StudyKind::*;
            match kind {
                TruematCrvsOnly => s.z_truemat_crvs = Some(z_mat + 20),
                TruematAndUplus => {
                    s.z_truemat_crvs = Some(z_mat + 15);
                    s.z_uplus = Some(3);
                }
                FminusFplusUplus | FminusFplus => {
                    s.z_fminus = Some(12 + i as u64 % 5);
                    s.z_fplus = Some(i as u64 % 4);
                    if kind == FminusFplusUplus {
                        s.z_uplus = Some(i as u64 % 3);
                    }
                }
                FminusUplus => {
                    s.z_fminus = Some(9);
                    s.z_uplus = Some(0);
                }
                FminusOnly => s.z_fminus = Some(i as u64 % 11),
                TruematInclUnreg => unreachable!(),
            }
            s.validate().unwrap();
            out.push(s);
        }
        country += n_countries;
    }
    out
}

#[test]
fn census_round_trips_bit_identically() {
    let studies = census();
    assert_eq!(studies.len(), 221);
    let mut first = Vec::new();
    write_studies(&mut first, &studies).unwrap();
    let back = parse_studies(first.as_slice()).unwrap();
    assert_eq!(back, studies);
    let mut second = Vec::new();
    write_studies(&mut second, &back).unwrap();
    assert_eq!(first, second);
    let count = |k| back.iter().filter(|s| s.kind == k).count();
    assert_eq!(count(StudyKind::TruematCrvsOnly), 162);
    assert_eq!(count(StudyKind::FminusOnly), 38);
}

proptest! {
    #[test]
    fn counts_survive_csv(
        z_crvs in 0u64..u64::MAX / 4,
        frac in 0.0f64..1.0,
        fm in proptest::option::of(0u64..1000),
        env in proptest::option::of(any::<u32>()),
        tot_extra in 0u64..1_000_000,
    ) {
        let z_mat = (z_crvs as f64 * frac) as u64;
        let mut s = StudyObservation::new("P", 1990, 1992, StudyKind::TruematCrvsOnly, z_crvs, z_mat);
        s.z_truemat_crvs = Some(z_crvs - z_mat);
        s.z_fminus = fm.map(|f| f.min(z_crvs - z_mat));
        s.z_env = env.map(u64::from);
        s.z_tot = env.map(|e| e as u64 + tot_extra);
        let mut buf = Vec::new();
        write_studies(&mut buf, std::slice::from_ref(&s)).unwrap();
        let back = parse_studies(buf.as_slice()).unwrap();
        prop_assert_eq!(&back[0], &s);
    }

    #[test]
    fn crvs_records_survive_csv(mat in 0u64..1_000_000, extra in 0u64..1_000_000, env in 1e-3f64..1e9, c in 0.01f64..=1.0) {
        let r = CrvsYearRecord { country: "Q".into(), year: 2001, mat_crvs: mat, crvs_total: mat + extra, who_envelope: env, completeness: c };
        let mut buf = Vec::new();
        write_crvs(&mut buf, std::slice::from_ref(&r)).unwrap();
        let back = parse_crvs(buf.as_slice()).unwrap();
        prop_assert_eq!(&back[0], &r);
    }
}
