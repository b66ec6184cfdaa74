use std::path::Path;
use std::process::{Command, Output};

fn crvsadj(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crvsadj")).args(args).current_dir(dir).output().unwrap()
}

fn tmp(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("crvsadj-exit-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn help_and_version_succeed() {
    let d = tmp("help");
    assert_eq!(crvsadj(&d, &["--help"]).status.code(), Some(0));
    assert_eq!(crvsadj(&d, &["--version"]).status.code(), Some(0));
}

#[test]
fn bad_arguments_exit_1() {
    let d = tmp("usage");
    assert_eq!(crvsadj(&d, &["fit"]).status.code(), Some(1));
    assert_eq!(crvsadj(&d, &["no-such-command"]).status.code(), Some(1));
    std::fs::write(d.join("bad.toml"), "no_such_key = 3\n").unwrap();
    std::fs::write(d.join("s.csv"), "x\n").unwrap();
    let out = crvsadj(&d, &["fit", "--config", "bad.toml", "--studies", "s.csv", "--out", "r"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_data_exit_2_and_name_the_row() {
    let d = tmp("data");
    let out = crvsadj(&d, &["fit", "--studies", "missing.csv", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2));
    let header = "country,t1,t2,z_crvs,z_matcrvs,z_truemat_crvs,z_truemat,z_fminus,z_fplus,z_uplus,z_unreg,z_env,z_tot";
    std::fs::write(d.join("s.csv"), format!("{header}\nA,2000,2001,100,200,20,,,,,,,\n")).unwrap();
    let out = crvsadj(&d, &["fit", "--studies", "s.csv", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn adjust_gives_one_over_se_at_full_specificity() {
    let d = tmp("adjust");
    std::fs::write(d.join("s.csv"), "year,se,sp\n2000,0.8,1\n2001,0.5,0.999\n").unwrap();
    let out = crvsadj(&d, &["adjust", "--summaries", "s.csv", "--pm", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let first = text.lines().nth(1).unwrap();
    assert!(first.ends_with(",1.25"), "{text}");
}
