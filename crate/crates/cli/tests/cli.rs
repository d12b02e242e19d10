use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = r#"
[space]
kind = "euclidean"
lo = [0.0]
hi = [1.0]
domain = { kind = "box", lo = [0.1], hi = [0.9] }
boundary = { kind = "coordinate", axis = 0 }
[net]
r = 0.3
margin_factor = 0.1
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netdirichlet"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.toml"), config).unwrap();
    d
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn net_writes_four_vertices_at_r_03() {
    let d = setup(MINIMAL);
    let o = run(d.path(), &["net", "--config", "run.toml", "--out", "a"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("vertex_count=4"));
    let csv = fs::read_to_string(d.path().join("a/net.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("a/net.json")).unwrap()).unwrap();
    assert_eq!(meta["vertex_count"], 4);
    assert_eq!(meta["r"], 0.3);
    assert!(d.path().join("a/edges.csv").exists());
    assert!(d.path().join("a/edges.json").exists());
}

#[test]
fn repeat_invocations_give_identical_files() {
    let d = setup(MINIMAL);
    for out in ["a", "b"] {
        let o = run(d.path(), &["solve", "--config", "run.toml", "--out", out, "--workers", "2"]);
        assert!(o.status.success());
    }
    for name in ["net.csv", "edges.csv", "form_a.mtx", "form_b.txt", "form.json", "solution.csv", "solution.json"] {
        let a = fs::read(d.path().join("a").join(name)).unwrap();
        let b = fs::read(d.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let d = setup(&MINIMAL.replace("kind = \"euclidean\"\n", ""));
    let o = run(d.path(), &["net", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kind") && err.contains("line"), "{err}");

    let d = setup(MINIMAL);
    let o = run(d.path(), &["net", "--config", "run.toml", "--set", "net.bogus=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = run(d.path(), &["net", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn overrides_and_seed_flags_apply() {
    let d = setup(MINIMAL);
    let o = run(d.path(), &["show-config", "--config", "run.toml", "--set", "net.r=0.05", "--seed", "7"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("r = 0.05"), "{text}");
    assert!(text.contains("seed = 7"));
    // defaults are materialized
    assert!(text.contains("cube_depth_cap = 40"));
    assert!(text.contains("lattice_pitch_factor = 0.125"));
}

#[test]
fn project_appends_a_value_column() {
    let d = setup(MINIMAL);
    fs::write(d.path().join("p.csv"), "x0\n0.5\n0.95\n0.05\n").unwrap();
    for kind in ["whitney", "path_integral"] {
        let set = format!("project.kind={kind:?}");
        let o = run(
            d.path(),
            &["project", "--config", "run.toml", "--probes", "p.csv", "--out", kind, "--set", &set],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let table = fs::read_to_string(d.path().join(kind).join("values.csv")).unwrap();
        let rows: Vec<&str> = table.lines().collect();
        assert_eq!(rows[0], "x0,value");
        assert_eq!(rows.len(), 4);
        // outside Ω the projection vanishes
        assert_eq!(rows[2], "0.95,0");
        assert_eq!(rows[3], "0.05,0");
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.path().join(kind).join("values.json")).unwrap()).unwrap();
        assert_eq!(meta["kind"], kind);
    }
}

#[test]
fn coarse_lattice_is_a_numerical_failure() {
    let d = setup(MINIMAL);
    fs::write(d.path().join("p.csv"), "0.5\n").unwrap();
    let o = run(
        d.path(),
        &[
            "project",
            "--config",
            "run.toml",
            "--probes",
            "p.csv",
            "--set",
            "project.kind=\"path_integral\"",
            "--set",
            "project.lattice_pitch_factor=0.5",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes_and_catches_injected_faults() {
    let d = setup(MINIMAL);
    let args = ["verify", "--config", "run.toml", "--set", "net.r=0.01", "--set", "net.margin_factor=20"];
    let o = run(d.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("solver.matches_dense"));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/verify.json")).unwrap()).unwrap();
    assert_eq!(doc["hard_failures"], 0);

    let mut bad = args.to_vec();
    bad.extend(["--inject-fault", "negative_weight"]);
    let o = run(d.path(), &bad);
    assert_eq!(o.status.code(), Some(3));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/verify.json")).unwrap()).unwrap();
    assert!(doc["hard_failures"].as_u64().unwrap() >= 1);
    let line = stdout(&o).lines().find(|l| l.starts_with("net.weights_positive")).unwrap().to_string();
    assert!(line.contains("FAIL"), "{line}");
}

#[test]
fn converge_writes_report_and_summary() {
    let d = setup(MINIMAL);
    let o = run(
        d.path(),
        &[
            "converge",
            "--config",
            "run.toml",
            "--set",
            "net.r_ladder=[0.02, 0.01]",
            "--set",
            "net.margin_factor=20",
            "--set",
            "checks.fields=4",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["report_version"], 1);
    assert_eq!(report["records"].as_array().unwrap().len(), 2);
    let summary = fs::read_to_string(d.path().join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("r,vertex_count"));
}

#[test]
fn help_documents_config_keys() {
    for sub in ["net", "solve", "project", "converge", "verify"] {
        let o = bin().args([sub, "--help"]).output().unwrap();
        let text = stdout(&o);
        for key in ["margin_factor", "lattice_pitch_factor", "cube_depth_cap", "tol", "max_iter", "out_dir", "formats", "r_ladder"] {
            assert!(text.contains(key), "{sub} --help lacks {key}");
        }
        for flag in ["--config", "--set", "--out", "--workers", "--seed"] {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
    }
}
