use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_nnreach");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn nnreach")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ARM_BOX: &str = "1.0471975511965976,2.0943951023931957;1.0471975511965976,2.0943951023931957";

#[test]
fn reach_nn_writes_boxes_hull_and_sims() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("arm");
    let o = run(&["reach-nn", "--net", s(&fixture("arm.json")), "--input", ARM_BOX, "--sims", "200", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let stats = read_json(&out.join("stats.json"));
    let (header, boxes) = read_csv(&out.join("boxes.csv"));
    assert_eq!(header, ["lo_1", "hi_1", "lo_2", "hi_2"]);
    assert_eq!(boxes.len() as u64, stats["interval_count"].as_u64().unwrap());

    let (_, hull) = read_csv(&out.join("hull.csv"));
    assert_eq!(hull.len(), 1);
    let (header, sims) = read_csv(&out.join("sims.csv"));
    assert_eq!(header, ["y_1", "y_2"]);
    assert_eq!(sims.len(), 200);
    for y in &sims {
        assert!(hull[0][0] <= y[0] && y[0] <= hull[0][1]);
        assert!(hull[0][2] <= y[1] && y[1] <= hull[0][3]);
    }
    assert!(!out.join("timing.json").exists());
    assert_eq!(read_json(&out.join("manifest.json"))["command"], "reach-nn");
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "reach-nn", "--net", s(&fixture("arm.json")), "--input", ARM_BOX, "--eps", "0.5", "--timing", "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    assert!(read_json(&dir.path().join("timing.json"))["elapsed_seconds"].is_number());
}

#[test]
fn compare_partition_with_coarse_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["compare-partition", "--net", s(&fixture("arm.json")), "--input", ARM_BOX, "--eps", "5", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stats = read_json(&dir.path().join("stats.json"));
    assert_eq!(stats["guided"]["interval_count"], 1);
    assert_eq!(stats["uniform"]["interval_count"], 1);
    assert_eq!(stats["ratio_intervals"], 1.0);
    assert_eq!(stats["hulls_equal"], true);
}

#[test]
fn invalid_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let net = fixture("arm.json");

    let o = run(&["reach-nn", "--net", "/no/such/net.json", "--input", ARM_BOX, "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/no/such/net.json"), "{}", stderr(&o));

    for eps in ["0", "-1", "nan"] {
        let o = run(&["reach-nn", "--net", s(&net), "--input", ARM_BOX, "--eps", eps, "--out", s(&out)]);
        assert_eq!(code(&o), 2, "eps {eps}");
    }
    let o = run(&["reach-nn", "--net", s(&net), "--input", "0,1", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "dimension mismatch");
    let o = run(&["reach-nn", "--net", s(&net), "--input", "1,0;0,1", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "reversed bounds");
    let o = run(&["reach-nn", "--net", s(&net), "--input", ARM_BOX, "--threads", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "zero threads");
    let o = run(&["simulate", "--config", s(&fixture("cart_run.json")), "--count", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "zero simulations");
    let o = run(&["frobnicate"]);
    assert_eq!(code(&o), 2, "unknown subcommand");
}

#[test]
fn cart_verifies_safe() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--config", s(&fixture("cart_run.json")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["verdict"], "Safe");
    assert!(report["first_violation"].is_null());
    assert_eq!(report["steps"], 6);
    assert_eq!(report["segments"], 30);

    let (header, rows) = read_csv(&dir.path().join("flowpipe.csv"));
    assert_eq!(header, ["t_lo", "t_hi", "p_lo", "p_hi", "v_lo", "v_hi"]);
    assert_eq!(rows.len(), 30);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[29][1], 1.5);
    for w in rows.windows(2) {
        assert_eq!(w[0][1], w[1][0]);
    }
    let (header, steps) = read_csv(&dir.path().join("outputs.csv"));
    assert_eq!(header.first().unwrap(), "t_k");
    assert_eq!(header.last().unwrap(), "controller_boxes");
    assert!(header.contains(&"f_lo".to_string()));
    assert_eq!(steps.len(), 6);
}

#[test]
fn strict_spec_is_unknown_and_bad_names_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let strict = dir.path().join("strict.json");
    fs::write(&strict, r#"{"constraints":[{"terms":{"pos":1},"constant":-0.9,"op":">"}]}"#).unwrap();
    let o = run(&["verify", "--config", s(&fixture("cart_run.json")), "--spec", s(&strict), "--out", s(&dir.path().join("a"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let report = read_json(&dir.path().join("a/report.json"));
    assert_eq!(report["verdict"], "Unknown");
    assert_eq!(report["first_violation"]["constraint"], 0);
    assert_eq!(report["first_violation"]["segment"], 0);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"constraints":[{"terms":{"speed":1},"constant":0,"op":">"}]}"#).unwrap();
    let o = run(&["verify", "--config", s(&fixture("cart_run.json")), "--spec", s(&bad), "--out", s(&dir.path().join("b"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("speed"), "{}", stderr(&o));
}

fn write_run(dir: &Path, model: &str, net: &str, run: Value) -> PathBuf {
    fs::write(dir.join("m.model"), model).unwrap();
    fs::write(dir.join("n.json"), net).unwrap();
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string(&run).unwrap()).unwrap();
    path
}

#[test]
fn verify_needs_a_spec() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(fixture("cart_run.json")).unwrap()).unwrap();
    cfg.as_object_mut().unwrap().remove("spec");
    cfg["model"] = s(&fixture("cart.model")).into();
    cfg["network"] = s(&fixture("cart.json")).into();
    let path = dir.path().join("nospec.json");
    fs::write(&path, cfg.to_string()).unwrap();

    let o = run(&["verify", "--config", s(&path), "--out", s(&dir.path().join("v"))]);
    assert_eq!(code(&o), 2);
    let o = run(&["reach-nncs", "--config", s(&path), "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read_json(&dir.path().join("r/report.json"))["verdict"].is_null());
}

#[test]
fn blow_up_is_an_analysis_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_run(
        dir.path(),
        "state x\ninput u\nderiv x = x*x + u\noutput y = x\n",
        r#"{"layers":[{"weights":[[0.0]],"bias":[0.0],"activation":"identity"}]}"#,
        serde_json::json!({
            "model": "m.model",
            "network": "n.json",
            "x0": [[1.0, 1.1]],
            "sampling_period": 2.0,
            "t_f": 2.0,
            "substeps": 1,
            "n_sims": 10,
            "input_wiring": [{"output": "y"}],
            "control_outputs": ["u"],
        }),
    );
    let o = run(&["reach-nncs", "--config", s(&path), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn wiring_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_run(
        dir.path(),
        "state x\ninput u\nderiv x = -x + u\noutput y = x\n",
        r#"{"layers":[{"weights":[[0.5]],"bias":[0.0],"activation":"tanh"}]}"#,
        serde_json::json!({
            "model": "m.model",
            "network": "n.json",
            "x0": [[0.0, 1.0]],
            "sampling_period": 0.5,
            "t_f": 1.0,
            "input_wiring": [{"output": "z"}],
            "control_outputs": ["u"],
        }),
    );
    let o = run(&["reach-nncs", "--config", s(&path), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains('z'), "{}", stderr(&o));
}

#[test]
fn simulated_states_lie_in_the_flowpipe() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("cart_run.json");
    let o = run(&["reach-nncs", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["simulate", "--config", s(&cfg), "--count", "25", "--seed", "9", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (_, pipe) = read_csv(&dir.path().join("flowpipe.csv"));
    let (header, traj) = read_csv(&dir.path().join("trajectories.csv"));
    assert_eq!(header, ["trajectory", "t", "p", "v"]);
    assert_eq!(traj.last().unwrap()[0], 24.0);
    for row in &traj {
        let (t, x) = (row[1], &row[2..]);
        let inside = pipe.iter().any(|seg| {
            seg[0] <= t && t <= seg[1] && x.iter().enumerate().all(|(i, &v)| seg[2 + 2 * i] <= v && v <= seg[3 + 2 * i])
        });
        assert!(inside, "state {x:?} at t = {t} escapes the flowpipe");
    }
}
