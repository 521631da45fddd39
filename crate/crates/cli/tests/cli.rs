use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ensemble_cli::{config, parse_config, Kind};
use sha2::{Digest, Sha256};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ensemble(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ensemble")).args(args).output().unwrap()
}

fn run_config(kind: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![kind, "--config", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    ensemble(&args)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Every file of a run directory, the manifest with its wall time removed.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let bytes = if name == "manifest.json" {
            let mut m = read_json(&p);
            m.as_object_mut().unwrap().remove("wall_time_s");
            serde_json::to_vec(&m).unwrap()
        } else {
            std::fs::read(&p).unwrap()
        };
        out.insert(name, bytes);
    }
    out
}

#[test]
fn minimal_rigid_config_gets_default_tolerances() {
    let cfg = parse_config(
        r#"
kind = "rigid-check"
[rigid]
inertia = [[1.0, 2.0, 3.0]]
torque = [1.0, 2.0, 3.0]
"#,
    )
    .unwrap();
    let r = cfg.rigid.unwrap();
    assert_eq!(r.min_gap, ensemble_core::rigidbody::DEFAULT_GAP);
    assert!(r.exact);
    assert_eq!(r.homogeneity_eps, 0.5);
    assert_eq!(cfg.seed, 0);
}

#[test]
fn repeated_principal_value_names_the_field() {
    let err = parse_config(
        r#"
kind = "rigid-check"
[rigid]
inertia = [[1.0, 2.0, 3.0], [1.0, 1.0, 2.0]]
torque = [1.0, 2.0, 3.0]
"#,
    )
    .unwrap_err()
    .to_string();
    assert!(err.starts_with("rigid.inertia[1]:"), "{err}");
    assert!(err.contains("not distinct"), "{err}");
}

#[test]
fn unknown_keys_and_syntax_errors_carry_positions() {
    let err = parse_config("kind = \"flow-verify\"\nsede = 3\n").unwrap_err().to_string();
    assert!(err.contains("line 2, column 1"), "{err}");
    assert!(err.contains("sede"), "{err}");
    let err = parse_config("kind = \"rank-check\"\n[rank]\ndepth = = 2\n").unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn sections_must_match_the_kind() {
    let flow = "[flow]\nf = [\"x2\", \"0\"]\ng = [\"0\", \"1\"]\nu = { kind = \"polynomial\", coeffs = [1.0] }\nx0 = [0.0, 0.0]\nt_end = 1.0\nsteps = [0.1]\n";
    let err = parse_config(&format!("kind = \"rank-check\"\n{flow}")).unwrap_err().to_string();
    assert!(err.starts_with("flow: section is not used"), "{err}");
    let err = parse_config(&format!("kind = \"flow-verify\"\n[grid]\nnodes = 4\n{flow}")).unwrap_err().to_string();
    assert!(err.starts_with("grid:"), "{err}");
    assert!(parse_config(&format!("kind = \"flow-verify\"\n{flow}")).is_ok());
}

#[test]
fn docs_example_echo_matches_golden_file() {
    let text = std::fs::read_to_string(configs_dir().join("model-synthesize.toml")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let echo = config::echo(&cfg).unwrap();
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/model-synthesize.echo.toml")).unwrap();
    assert_eq!(echo, golden);
    // the echo is a fixed point
    let again = parse_config(&echo).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(config::echo(&again).unwrap(), echo);
}

#[test]
fn every_shipped_config_is_valid() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let p = entry.unwrap().path();
        let cfg = ensemble_cli::load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(format!("{}.toml", cfg.kind), p.file_name().unwrap().to_string_lossy());
    }
}

#[test]
fn rigid_check_reports_the_known_determinant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config("rigid-check", &configs_dir().join("rigid-check.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&tmp.path().join("rigid_check.json"));
    let det = rep["rn"]["det"].as_f64().unwrap();
    assert!((det + 4224.0).abs() <= 1e-9 * 4224.0);
    assert_eq!(rep["det_exact"], "-4224");
    assert_eq!(rep["rn"]["verdict"], "generating");
}

#[test]
fn asserted_verdict_mismatch_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "kind = \"rigid-check\"\n[rigid]\ninertia = [[1.0, 2.0, 3.0]]\ntorque = [0.0, 1.0, 0.0]\n[rigid.expect]\nverdict = \"generating\"\n",
    );
    let out = run_config("rigid-check", &cfg, &tmp.path().join("run"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["status"], "scientific_failure");
    // outputs and manifest are still written
    assert_eq!(read_json(&tmp.path().join("run/manifest.json"))["exit_code"], 2);
}

#[test]
fn invalid_config_exits_with_one_and_a_json_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "kind = \"rigid-check\"\n[rigid]\ninertia = [[1.0, 1.0, 2.0]]\ntorque = [1.0, 2.0, 3.0]\n",
    );
    let out = run_config("rigid-check", &cfg, &tmp.path().join("run"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    let err: serde_json::Value = serde_json::from_str(&stderr).unwrap();
    assert_eq!(err["category"], "validation");
    assert!(err["message"].as_str().unwrap().contains("rigid.inertia[0]"));
    assert!(!tmp.path().join("run").exists());

    let out = run_config("flow-verify", &configs_dir().join("rigid-check.toml"), &tmp.path().join("run"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subcommand is flow-verify"));

    let out = ensemble(&["rigid-check", "--config", "/nonexistent/x.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_synthesis_names_the_epsilon_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        r#"kind = "model-synthesize"
[grid]
nodes = 64
[model]
f_theta = "exp(theta*x) - 1"
target = "sin(3.141592653589793*theta)"
eps1 = [0.05]
rho = 2.0
mu_f = 7.38905609893065
eps_min = 1e-3
"#,
    );
    let out = run_config("model-synthesize", &cfg, &tmp.path().join("run"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("choose_epsilon"));
    let rep = read_json(&tmp.path().join("run/synthesis.json"));
    assert_eq!(rep["runs"][0]["failed_stage"], "choose_epsilon");
    assert_eq!(rep["runs"][0]["ok"], false);
}

#[test]
fn convergence_run_writes_csv_and_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config("lieext-converge", &configs_dir().join("lieext-converge.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,eps_n,h,e_n,big_u_at_t");
    assert_eq!(lines.len(), 5);
    let e: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]));
    let slope = read_json(&tmp.path().join("convergence.json"))["report"]["slope"].as_f64().unwrap();
    assert!((0.7..=1.3).contains(&slope), "{slope}");
}

#[test]
fn manifest_digests_match_the_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config("lieext-reduce", &configs_dir().join("lieext-reduce.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&tmp.path().join("manifest.json"));
    let outputs = m["outputs"].as_array().unwrap();
    assert!(outputs.len() >= 4);
    for o in outputs {
        let bytes = std::fs::read(tmp.path().join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), format!("{:x}", Sha256::digest(&bytes)));
        assert_eq!(o["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    let echo = std::fs::read_to_string(tmp.path().join("config.echo.toml")).unwrap();
    assert_eq!(m["config"].as_str().unwrap(), echo);
    assert_eq!(m["kind"], Kind::LieextReduce.as_str());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ["rigid-check", "rank-check", "flow-verify", "lieext-reduce", "lieext-converge"] {
        let cfg = configs_dir().join(format!("{kind}.toml"));
        let a = tmp.path().join(format!("{kind}-a"));
        let b = tmp.path().join(format!("{kind}-b"));
        let ca = run_config(kind, &cfg, &a, &["--threads", "1"]).status.code();
        let cb = run_config(kind, &cfg, &b, &["--threads", "1"]).status.code();
        assert_eq!(ca, cb);
        assert_eq!(snapshot(&a), snapshot(&b), "{kind}");
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "g.toml",
        "kind = \"rigid-generic\"\nseed = 5\n[generic]\nn_values = [1, 2]\nsamples = [40, 20]\nexact_checks = 3\n",
    );
    let one = tmp.path().join("one");
    let four = tmp.path().join("four");
    assert_eq!(run_config("rigid-generic", &cfg, &one, &["--threads", "1"]).status.code(), Some(0));
    assert_eq!(run_config("rigid-generic", &cfg, &four, &["--threads", "4"]).status.code(), Some(0));
    let (a, b) = (snapshot(&one), snapshot(&four));
    for name in ["genericity.json", "genericity_samples.csv", "config.echo.toml"] {
        assert_eq!(a[name], b[name], "{name}");
    }
}

#[test]
fn seed_override_is_recorded_and_changes_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "g.toml",
        "kind = \"rigid-generic\"\nseed = 5\n[generic]\nn_values = [1]\nsamples = [10]\nexact_checks = 0\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_config("rigid-generic", &cfg, &a, &[]);
    run_config("rigid-generic", &cfg, &b, &["--seed-override", "6"]);
    assert_eq!(read_json(&b.join("manifest.json"))["seed"], 6);
    assert!(std::fs::read_to_string(b.join("config.echo.toml")).unwrap().contains("seed = 6"));
    assert_ne!(
        std::fs::read(a.join("genericity_samples.csv")).unwrap(),
        std::fs::read(b.join("genericity_samples.csv")).unwrap()
    );
}
