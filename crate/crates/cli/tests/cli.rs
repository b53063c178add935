use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn ubm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ubm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = ubm(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn csv_values(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn partitions_listing() {
    let text = stdout(&["partitions", "4"]);
    assert_eq!(text, "(4)\n(3,1)\n(2,2)\n(2,1,1)\n(1,1,1,1)\n");
    assert_eq!(stdout(&["partitions", "1"]), "(1)\n");
    let out = ubm(&["partitions", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn free_moments() {
    let text = stdout(&["moments", "--word", "tr(u11)", "--n", "2", "--t", "1"]);
    assert!(text.starts_with("time,re,im\n"));
    let rows = csv_values(&text);
    assert!((rows[0][1] - 0.6065306597).abs() < 1e-10 && rows[0][2] == 0.0);

    let rows = csv_values(&stdout(&[
        "moments",
        "--word",
        "tr(u11 u11)",
        "--n",
        "1",
        "--t",
        "1",
    ]));
    assert!(rows[0][1].abs() < 1e-12 && rows[0][2] == 0.0);

    let rows = csv_values(&stdout(&[
        "moments",
        "--word",
        "tr(u11@0.5 u11@1)",
        "--n",
        "1",
    ]));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 1.0);
    assert!((rows[0][1] - 0.2361832764).abs() < 1e-10);

    let rows = csv_values(&stdout(&[
        "moments", "--word", "tr(u11)", "--n", "2", "--times", "0,0.5,2",
    ]));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], 1.0);
}

#[test]
fn finite_moments() {
    let rows = csv_values(&stdout(&[
        "moments",
        "--word",
        "tr(u u)",
        "--n",
        "1",
        "--t",
        "0.7",
        "--mode",
        "biane-finite",
        "--d",
        "1",
    ]));
    assert!((rows[0][1] - (-1.4f64).exp()).abs() < 1e-12);
    let out = ubm(&[
        "moments",
        "--word",
        "tr(u11)",
        "--n",
        "2",
        "--mode",
        "biane-finite",
        "--d",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_words_are_reported() {
    let out = ubm(&["moments", "--word", "tr(u13)", "--n", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let out = ubm(&["moments", "--word", "tr(u1", "--n", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_records() {
    let args = [
        "simulate", "--word", "tr(u11)", "--n", "2", "--d", "8", "--t", "1", "--paths", "10000",
        "--seed", "5", "--dt", "0.1",
    ];
    let text = stdout(&args);
    let rec: Value = serde_json::from_str(text.trim()).unwrap();
    let keys: Vec<&str> = rec
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    assert_eq!(
        keys,
        [
            "word", "n", "d", "times", "mean_re", "mean_im", "stderr", "paths", "seed", "dt",
            "scheme"
        ]
    );
    let mean = rec["mean_re"].as_f64().unwrap();
    let se = rec["stderr"].as_f64().unwrap();
    assert!((mean - (-0.5f64).exp()).abs() < 3.0 * se, "{rec}");
    assert_eq!(rec["scheme"], "geodesic-tc");

    let zero = stdout(&[
        "simulate", "--word", "tr(u11)", "--n", "2", "--d", "3", "--t", "0", "--paths", "10",
    ]);
    let rec: Value = serde_json::from_str(zero.trim()).unwrap();
    assert_eq!(
        (rec["mean_re"].as_f64(), rec["stderr"].as_f64()),
        (Some(1.0), Some(0.0))
    );
}

#[test]
fn simulate_is_reproducible_across_threads() {
    let base = [
        "simulate",
        "--word",
        "tr(u12 u21) + tr(u11 u11*)",
        "--n",
        "2",
        "--d",
        "3",
        "--times",
        "0.5,1",
        "--paths",
        "400",
        "--seed",
        "17",
    ];
    let mut outputs = Vec::new();
    for threads in ["1", "2", "4"] {
        let mut args = base.to_vec();
        args.extend(["--threads", threads]);
        outputs.push(stdout(&args));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(outputs[0].lines().count(), 2);
    let mut other = base.to_vec();
    let last = other.len() - 1;
    other[last] = "18";
    assert_ne!(stdout(&other), outputs[0]);
}

#[test]
fn compare_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan.csv");
    stdout(&[
        "compare",
        "--word",
        "tr(u u)",
        "--n",
        "1",
        "--t",
        "1",
        "--d-list",
        "1,2,4",
        "--paths",
        "20000",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("d,mc_mean_re,mc_mean_im,stderr,free_re,free_im,bias\n"));
    let rows = csv_values(&text);
    assert_eq!(rows.len(), 3);
    assert!((rows[0][6] - (-2.0f64).exp()).abs() < 3.0 * rows[0][3]);
    assert!(rows[0][6] > rows[1][6] && rows[1][6] > rows[2][6]);

    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("scan.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "compare");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["d-list"], "1,2,4");
    assert_eq!(manifest["config"]["scheme"], "geodesic-tc");
    assert!(manifest["summary"]["slope"].as_f64().unwrap() < 0.0);
    assert_eq!(manifest["outputs"][0], out.to_str().unwrap());
}

#[test]
fn schurmann_reports() {
    let base: Value =
        serde_json::from_str(&stdout(&["schurmann", "--n", "3", "--mode", "base"])).unwrap();
    for v in base["values"].as_array().unwrap() {
        let l = v["letter"].as_str().unwrap();
        let diag = l.as_bytes()[1] == l.as_bytes()[2];
        assert_eq!(v["ell"], if diag { "-1/2" } else { "0" }, "{l}");
    }
    let g = stdout(&["schurmann", "--n", "2", "--mode", "gaussianity"]);
    assert_eq!(
        g,
        "{\"n\":2,\"max_len\":3,\"triples_checked\":512,\"violations\":[]}\n"
    );
    let c: Value = serde_json::from_str(&stdout(&[
        "schurmann",
        "--n",
        "2",
        "--check",
        "crosscheck",
        "--max-len",
        "3",
    ]))
    .unwrap();
    assert_eq!(c["max_abs_difference"], "0");
    assert_eq!(c["words_checked"], 8 + 64 + 512);
    assert_eq!(ubm(&["schurmann", "--mode", "nope"]).status.code(), Some(1));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# bundle\nword = tr(u11)\nn = 2\nd = 2\npaths = 50\nseed = 4\nt = 0.5\n",
    )
    .unwrap();
    let out = dir.path().join("est.jsonl");
    stdout(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        out.to_str().unwrap(),
    ]);
    let rec: Value = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(rec["paths"], 50);
    assert_eq!(rec["seed"], 6);
    assert_eq!(rec["times"][0], 0.5);
    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("est.jsonl.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["seed"], "6");
    assert_eq!(manifest["config"]["dt"], "0.05");

    // rerunning from the recorded settings reproduces the output byte for byte
    let replay = dir.path().join("replay.cfg");
    let lines: String = manifest["config"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| format!("{k} = {}\n", v.as_str().unwrap()))
        .collect();
    fs::write(&replay, lines).unwrap();
    let again = stdout(&["simulate", "--config", replay.to_str().unwrap()]);
    assert_eq!(again, fs::read_to_string(&out).unwrap());
}

#[test]
fn manifest_goes_to_stderr_without_out() {
    let out = ubm(&["moments", "--word", "tr(u11)", "--n", "1"]);
    let manifest: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(manifest["command"], "moments");
    assert_eq!(manifest["config"]["mode"], "free");
}
