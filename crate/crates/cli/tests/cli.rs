use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rrbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrbias"))
        .args(args)
        .env_remove("RRBIAS_WORKERS")
        .output()
        .expect("spawn rrbias")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.conf");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const EXACT: &str = "mode = exact-pair
alpha = 1e-4
omega = 1e-2
t = 450
grid.beta_min = -1
grid.beta_max = 1
grid.beta_step = 1
grid.gamma_min = -1
grid.gamma_max = 1
grid.gamma_step = 1
";

const SWEEP: &str = "mode = monte-carlo
seed = 11
alpha = 1e-4
omega = 1e-2
t = 450
design.n = 4
design.block_k = 2
design.clusters = 60
grid.beta_min = -1
grid.beta_max = 1
grid.beta_step = 1
grid.gamma_min = 0
grid.gamma_max = 1
grid.gamma_step = 1
sweep.replicates = 4
";

#[test]
fn calibrate_prints_time() {
    let o = rrbias(&[
        "calibrate",
        "--alpha",
        "1e-4",
        "--omega",
        "1e-2",
        "--n",
        "4",
        "--target",
        "0.15",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let t: f64 = out.trim().strip_prefix("T = ").unwrap().parse().unwrap();
    assert!((t - 450.0).abs() < 45.0, "{t}");
}

#[test]
fn tstar_reports_eligibility() {
    let o = rrbias(&[
        "tstar", "--alpha", "1e-4", "--omega", "1e-2", "--beta", "-0.5", "--gamma", "-2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("eligible=true"), "{out}");
    assert!(out.contains("t_star="));

    let o = rrbias(&[
        "tstar", "--alpha", "1e-4", "--omega", "1e-2", "--beta", "0.5", "--gamma", "-2",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("eligible=false"));
}

#[test]
fn map_commands_need_config() {
    for cmd in ["exact-map", "ctmc-map", "sweep"] {
        let o = rrbias(&[cmd]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("--config"));
    }
}

#[test]
fn exact_map_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), EXACT);
    let out = dir.path().join("pair");
    let o = rrbias(&["--config", &config, "--out", out.to_str().unwrap(), "exact-map"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("pair.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.lines().any(|l| l.starts_with("0,0,0,0,")));
    let manifest = fs::read_to_string(dir.path().join("pair.csv.manifest")).unwrap();
    assert!(manifest.contains("mode = exact-pair"));
    assert!(manifest.contains("fingerprint = "));
}

#[test]
fn sweep_output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SWEEP);
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let out = dir.path().join(format!("w{workers}"));
        let o = rrbias(&[
            "--config",
            &config,
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
            "sweep",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(out.with_extension("csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_override_changes_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SWEEP);
    let mut outputs = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("s{seed}"));
        let o = rrbias(&[
            "--config",
            &config,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
            "sweep",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(out.with_extension("csv")).unwrap());
    }
    assert_ne!(outputs[0], outputs[1]);
}

#[test]
fn render_turns_csv_into_svg() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), EXACT);
    let out = dir.path().join("pair");
    let o = rrbias(&["--config", &config, "--out", out.to_str().unwrap(), "exact-map"]);
    assert!(o.status.success());
    let csv = dir.path().join("pair.csv");
    let manifest = fs::read_to_string(dir.path().join("pair.csv.manifest")).unwrap();
    let o = rrbias(&["render", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("pair.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    let fp = manifest.lines().find_map(|l| l.strip_prefix("fingerprint = ")).unwrap();
    assert!(svg.contains(fp));
}

#[test]
fn svg_format_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), EXACT);
    let out = dir.path().join("both");
    let o = rrbias(&[
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--format",
        "both",
        "exact-map",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("both.csv").exists());
    assert!(dir.path().join("both.svg").exists());
}

#[test]
fn invalid_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &EXACT.replace("omega = 1e-2", "omega = -1"));
    let o = rrbias(&["--config", &config, "exact-map"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("omega"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("{EXACT}grid.betamax = 2\n"));
    let o = rrbias(&["--config", &config, "exact-map"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("grid.betamax"), "{}", stderr(&o));
}
