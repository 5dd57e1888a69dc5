use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fpsi");

fn fpsi(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL_RUN: &str = r#"
[mesh]
nx = 4
ny = 4
[data]
f_f = ["sin(pi*x)*t", "0"]
p_in = "0.1*sin(pi*y)"
critical_fraction = 0.5
[scheme]
method = "implicit-midpoint"
dt = 0.05
t_final = 0.2
[constants]
levels = [2, 4]
[output]
dir = "out"
vtk_stride = 2
"#;

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&fpsi(d.path(), &["--help"])), 0);
    assert_eq!(code(&fpsi(d.path(), &["--version"])), 0);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = fpsi(d.path(), &["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&fpsi(d.path(), &[])), 1);
}

#[test]
fn run_is_deterministic_and_writes_manifest() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.toml"), SMALL_RUN).unwrap();
    let o = fpsi(d.path(), &["run", "run.toml", "--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = read_all(&d.path().join("out"));
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "certificate.csv",
        "constants.csv",
        "manifest.json",
        "mesh.fsimesh",
        "state_00000.vtk",
        "state_00002.vtk",
        "state_00004.vtk",
        "summary.json",
    ] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    std::fs::remove_dir_all(d.path().join("out")).unwrap();
    assert_eq!(code(&fpsi(d.path(), &["run", "run.toml"])), 0);
    assert_eq!(first, read_all(&d.path().join("out")));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["versions"]["fpsi"], env!("CARGO_PKG_VERSION"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), first.len() - 1);
    let cert = outputs.iter().find(|e| e["file"] == "certificate.csv").unwrap();
    let bytes = std::fs::read(d.path().join("out/certificate.csv")).unwrap();
    assert_eq!(cert["sha256"], fpsi::output::sha256_hex(&bytes));
}

#[test]
fn config_errors_name_the_key_and_exit_one() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "[params]\nmu_f = -1.0\n").unwrap();
    let o = fpsi(d.path(), &["run", "bad.toml"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("params.mu_f"));
    let o = fpsi(d.path(), &["run", "missing.toml"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn validate_mesh_reports_violations() {
    let d = tempfile::tempdir().unwrap();
    let good = fpsi_core::mesh::build_rect_two_domain(2, 2, 0.5).unwrap();
    fpsi::mesh_io::write_mesh(&good, &d.path().join("good.fsimesh")).unwrap();
    assert_eq!(code(&fpsi(d.path(), &["validate-mesh", "good.fsimesh"])), 0);

    let mut bad = good.clone();
    bad.triangles[0].v.swap(0, 1);
    fpsi::mesh_io::write_mesh(&bad, &d.path().join("bad.fsimesh")).unwrap();
    let o = fpsi(d.path(), &["validate-mesh", "bad.fsimesh"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("negative area"));

    std::fs::write(d.path().join("junk.fsimesh"), "fsimesh 2\n").unwrap();
    assert_eq!(code(&fpsi(d.path(), &["validate-mesh", "junk.fsimesh"])), 1);
}

#[test]
fn strict_small_data_check_exits_three_on_large_data() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[mesh]\nnx = 4\nny = 4\n[data]\nf_f = [\"100*sin(pi*x)\", \"0\"]\n[constants]\nlevels = [2, 4]\n";
    std::fs::write(d.path().join("big.toml"), cfg).unwrap();
    let o = fpsi(d.path(), &["check-small-data", "big.toml", "--strict"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("small_data_ok = false"));
    assert_eq!(code(&fpsi(d.path(), &["check-small-data", "big.toml"])), 0);
}

#[test]
fn constant_table_feeds_a_later_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[mesh]\nnx = 4\nny = 4\n[constants]\nlevels = [2, 4]\n[output]\ndir = \"k\"\n";
    std::fs::write(d.path().join("k.toml"), cfg).unwrap();
    assert_eq!(code(&fpsi(d.path(), &["constants", "k.toml"])), 0);
    let cfg = "[mesh]\nnx = 4\nny = 4\n[constants]\ntable = \"k/constants.csv\"\n";
    std::fs::write(d.path().join("use.toml"), cfg).unwrap();
    let o = fpsi(d.path(), &["check-small-data", "use.toml"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("(mesh level 4)"));
}

#[test]
fn mms_writes_convergence_table() {
    let d = tempfile::tempdir().unwrap();
    let o = fpsi(d.path(), &["mms", "smooth-trig", "3", "--coarsest", "2", "--out", "m"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("m/convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("level,h,dt,e_uL2"));
    assert_eq!(code(&fpsi(d.path(), &["mms", "no-such-case", "2"])), 1);
    assert_eq!(code(&fpsi(d.path(), &["mms", "smooth-trig", "2"])), 1);
}
