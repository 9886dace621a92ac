use std::path::Path;
use std::process::{Command, Output};

fn rdao(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdao")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn key(text: &str, k: &str) -> String {
    text.lines().find_map(|l| l.strip_prefix(&format!("{k} = ")).map(str::to_string)).unwrap_or_else(|| panic!("no '{k}' in\n{text}"))
}

const TINY: &[&str] = &["--seed", "3", "--angles", "2", "--rows", "3", "--cols", "3", "--apertures", "2", "--targets", "2", "--healthy", "4"];

fn tiny_dataset(dir: &Path, name: &str) -> Output {
    let mut args = vec!["phantom", "--out", name];
    args.extend_from_slice(TINY);
    rdao(dir, &args)
}

#[test]
fn size_reports_counts_without_data() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rdao(tmp.path(), &["size", "--angles", "2", "--rows", "12", "--cols", "10", "--targets", "24", "--apertures", "6", "--variant", "FMO"]);
    assert_eq!(code(&o), 0, "{o:?}");
    // One row per target voxel, one variable per beamlet.
    assert_eq!(stdout(&o).trim(), "FMO 24 240 0");
    let all = rdao(tmp.path(), &["size", "--angles", "2", "--rows", "12", "--cols", "10", "--targets", "24"]);
    assert_eq!(stdout(&all).lines().count(), 6);
}

#[test]
fn phantom_is_seed_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tiny_dataset(tmp.path(), "a");
    let b = tiny_dataset(tmp.path(), "b");
    assert_eq!(code(&a), 0);
    let sum = |o: &Output| stdout(o).split_whitespace().last().unwrap().to_string();
    assert_eq!(sum(&a), sum(&b));
    let m = std::fs::read_to_string(tmp.path().join("a/run_manifest.txt")).unwrap();
    assert_eq!(key(&m, "dataset_checksum"), sum(&a));
    assert_eq!(key(&m, "seed"), "3");
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_variant = rdao(tmp.path(), &["size", "--angles", "2", "--rows", "3", "--cols", "3", "--targets", "2", "--variant", "bogus"]);
    assert_eq!(code(&bad_variant), 2);
    let missing_dims = rdao(tmp.path(), &["phantom", "--out", "x"]);
    assert_eq!(code(&missing_dims), 2);
    let missing_data = rdao(tmp.path(), &["cpg", "--dataset", "nowhere", "--out", "o"]);
    assert_eq!(code(&missing_data), 3);
    tiny_dataset(tmp.path(), "ds");
    let bad_set = rdao(tmp.path(), &["solve", "--dataset", "ds", "--out", "o", "--deviation=-0.1"]);
    assert_eq!(code(&bad_set), 2, "{bad_set:?}");
}

#[test]
fn warm_start_is_first_incumbent() {
    let tmp = tempfile::tempdir().unwrap();
    tiny_dataset(tmp.path(), "ds");
    let cpg = rdao(tmp.path(), &["cpg", "--dataset", "ds", "--out", "c"]);
    assert_eq!(code(&cpg), 0, "{cpg:?}");
    let z_cpg: f64 = key(&stdout(&cpg), "z_cpg").parse().unwrap();
    let solve = rdao(tmp.path(), &["solve", "--dataset", "ds", "--out", "s", "--warm", "cpg"]);
    assert_eq!(code(&solve), 0, "{solve:?}");
    let log = std::fs::read_to_string(tmp.path().join("s/incumbents.tsv")).unwrap();
    let first: f64 = log.lines().next().unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((first - z_cpg).abs() <= 1e-9 * z_cpg.abs().max(1.0), "{first} vs {z_cpg}");
    let report = std::fs::read_to_string(tmp.path().join("s/solve_report.txt")).unwrap();
    let z: f64 = key(&report, "objective").parse().unwrap();
    assert!(z <= z_cpg + 1e-9);
    assert!(tmp.path().join("s/plan.txt").exists());
}

#[test]
fn rerun_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    tiny_dataset(tmp.path(), "ds");
    assert_eq!(code(&rdao(tmp.path(), &["cpg", "--dataset", "ds", "--out", "first", "--alpha", "0.3"])), 0);
    let o = rdao(tmp.path(), &["rerun", "--manifest", "first/run_manifest.txt", "--out", "second"]);
    assert_eq!(code(&o), 0, "{o:?}");
    for f in ["plan.txt", "bounds.txt", "fluence_angle1.csv", "fluence_angle2.pgm"] {
        let a = std::fs::read(tmp.path().join("first").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("second").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn evaluate_writes_report_and_dvh() {
    let tmp = tempfile::tempdir().unwrap();
    tiny_dataset(tmp.path(), "ds");
    assert_eq!(code(&rdao(tmp.path(), &["cpg", "--dataset", "ds", "--out", "c"])), 0);
    let o = rdao(tmp.path(), &["evaluate", "--dataset", "ds", "--plan", "c/plan.txt", "--out", "e", "--normalize"]);
    assert_eq!(code(&o), 0, "{o:?}");
    let report = std::fs::read_to_string(tmp.path().join("e/report.txt")).unwrap();
    assert!(key(&report, "normalization_factor").parse::<f64>().unwrap() > 0.0);
    assert!(tmp.path().join("e/dvh_target.csv").exists());
    let lp = rdao(tmp.path(), &["solve", "--dataset", "ds", "--out", "f", "--variant", "RFMO", "--export-lp", "rfmo.lp"]);
    assert_eq!(code(&lp), 0, "{lp:?}");
    assert!(std::fs::read_to_string(tmp.path().join("rfmo.lp")).unwrap().contains("Subject To"));
    assert!(tmp.path().join("f/fluence_angle1.csv").exists());
}
