use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn isoshell(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isoshell"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn generate_flat_writes_cell_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoshell(
        &[
            "generate", "flat", "--nx", "2", "--ny", "2", "--out", "f.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "nodes 4 bars 12 area 4");
    let cell = json(&dir.path().join("f.json"));
    assert_eq!(cell["nodes"].as_array().unwrap().len(), 4);
    assert_eq!(cell["bars"].as_array().unwrap().len(), 12);
}

#[test]
fn generate_random_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let args = [
            "generate", "random", "--nx", "4", "--ny", "4", "--h", "0.3", "--seed", "7", "--out",
            name,
        ];
        assert_eq!(code(&isoshell(&args, dir.path())), 0);
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn generate_without_out_prints_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoshell(
        &[
            "generate",
            "corrugation",
            "--nx",
            "4",
            "--ny",
            "2",
            "--h",
            "0.2",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let cell: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(cell["metadata"]["generator"], "corrugation");
}

#[test]
fn bad_parameters_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&isoshell(&["generate", "flat", "--nx", "0"], dir.path())),
        1
    );
    assert_eq!(code(&isoshell(&["generate", "wormhole"], dir.path())), 1);
    assert_eq!(
        code(&isoshell(
            &["generate", "corrugation", "--nx", "4", "--h", "-1"],
            dir.path()
        )),
        1
    );
    assert_eq!(
        code(&isoshell(
            &["generate", "handle", "--tube", "1.5"],
            dir.path()
        )),
        1
    );
    assert_eq!(code(&isoshell(&["--help"], dir.path())), 0);
}

#[test]
fn analyze_presets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    isoshell(
        &[
            "generate",
            "flat",
            "--nx",
            "2",
            "--ny",
            "2",
            "--out",
            "flat.json",
        ],
        d,
    );
    isoshell(
        &[
            "generate",
            "corrugation",
            "--nx",
            "8",
            "--ny",
            "2",
            "--h",
            "0.3",
            "--out",
            "corr.json",
        ],
        d,
    );
    isoshell(
        &[
            "generate",
            "handle",
            "--nx",
            "4",
            "--ny",
            "4",
            "--gap",
            "0.5",
            "--tube",
            "0.4",
            "--out",
            "handle.json",
        ],
        d,
    );

    let out = isoshell(&["analyze", "flat.json", "--report", "flat_report.json"], d);
    assert_eq!(code(&out), 0);
    let r = json(&d.join("flat_report.json"));
    assert_eq!(r["kernel_dim"], 3);
    assert_eq!(r["classification"]["pure_flexure"], 3);
    assert_eq!(r["classification"]["pure_membrane"], 0);
    assert_eq!(r["A"].as_array().unwrap().len(), 6);

    let out = isoshell(&["analyze", "corr.json"], d);
    assert_eq!(code(&out), 0);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(r["kernel_dim"], 3);
    assert_eq!(r["classification"]["pure_membrane"], 1);
    assert_eq!(r["classification"]["pure_flexure"], 2);
    assert!(r["poisson"]["residual"].as_f64().unwrap().abs() <= 1e-6);
    assert_eq!(r["symplectic_pairings"].as_array().unwrap().len(), 3);

    let out = isoshell(&["analyze", "handle.json"], d);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(r["kernel_dim"].as_u64().unwrap() <= 3);
    assert!(r["residual_AJA"].as_f64().unwrap() > 1e-2);
}

#[test]
fn report_round_trips_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    isoshell(
        &[
            "generate", "random", "--nx", "4", "--ny", "4", "--seed", "3", "--out", "r.json",
        ],
        d,
    );
    isoshell(&["analyze", "r.json", "--report", "one.json"], d);
    isoshell(&["analyze", "r.json", "--report", "two.json"], d);
    let (one, two) = (json(&d.join("one.json")), json(&d.join("two.json")));
    assert_eq!(without_timing(one.clone()), without_timing(two));

    // floats survive a text round trip exactly
    let text = serde_json::to_string(&one).unwrap();
    let back: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(back, one);
    let raw = std::fs::read_to_string(d.join("one.json")).unwrap();
    let a00 = one["A"][0][0].as_f64().unwrap();
    assert!(raw.contains(&format!("{a00:?}")));
}

#[test]
fn batch_analysis_matches_serial() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let names: Vec<String> = (0..4).map(|s| format!("c{s}.json")).collect();
    for (s, name) in names.iter().enumerate() {
        let seed = s.to_string();
        isoshell(
            &[
                "generate", "random", "--nx", "4", "--ny", "4", "--seed", &seed, "--out", name,
            ],
            d,
        );
    }
    let mut serial = vec!["analyze", "--report", "serial.json"];
    serial.extend(names.iter().map(String::as_str));
    let mut parallel = vec!["analyze", "--jobs", "3", "--report", "parallel.json"];
    parallel.extend(names.iter().map(String::as_str));
    assert_eq!(code(&isoshell(&serial, d)), 0);
    assert_eq!(code(&isoshell(&parallel, d)), 0);
    let strip = |v: Value| -> Vec<Value> {
        v.as_array()
            .unwrap()
            .iter()
            .cloned()
            .map(without_timing)
            .collect()
    };
    let (s, p) = (
        strip(json(&d.join("serial.json"))),
        strip(json(&d.join("parallel.json"))),
    );
    assert_eq!(s.len(), 4);
    assert_eq!(s, p);
}

#[test]
fn ambiguous_spectrum_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // a cut between two nonzero eigenvalues of comparable size
    isoshell(
        &[
            "generate",
            "corrugation",
            "--nx",
            "8",
            "--ny",
            "2",
            "--h",
            "0.3",
            "--out",
            "c.json",
        ],
        d,
    );
    let out = isoshell(&["analyze", "c.json", "--tol", "0.5"], d);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let flagged = r["flags"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f == "ambiguous");
    assert!(flagged);
    assert_eq!(code(&out), 2);
}

#[test]
fn analyze_missing_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoshell(&["analyze", "absent.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}

#[test]
fn optimize_writes_outputs_and_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    isoshell(
        &[
            "generate", "random", "--nx", "4", "--ny", "4", "--seed", "7", "--out", "r.json",
        ],
        d,
    );
    let out = isoshell(
        &[
            "optimize", "r.json", "--iters", "5000", "--out", "o.json", "--log", "o.csv",
        ],
        d,
    );
    assert!(matches!(code(&out), 0 | 3));
    let text = stdout(&out);
    let ratio: f64 = text
        .split_whitespace()
        .skip_while(|w| *w != "ratio")
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(ratio >= 1e6, "{text}");
    assert_eq!(text.contains("Stalled"), code(&out) == 3);
    let csv = std::fs::read_to_string(d.join("o.csv")).unwrap();
    assert!(csv.starts_with("iter,objective,grad_norm,step,max_dz\n"));
    assert_eq!(
        json(&d.join("o.json"))["nodes"].as_array().unwrap().len(),
        16
    );
}

#[test]
fn optimize_rejects_zero_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    isoshell(
        &[
            "generate", "random", "--nx", "2", "--ny", "2", "--out", "r.json",
        ],
        d,
    );
    let out = isoshell(&["optimize", "r.json", "--iters", "0"], d);
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("iters"));
}

#[test]
fn export_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    isoshell(
        &[
            "generate", "flat", "--nx", "2", "--ny", "2", "--out", "f.json",
        ],
        d,
    );
    assert_eq!(
        code(&isoshell(
            &["export", "f.json", "--tiles", "3", "--out", "f.obj"],
            d
        )),
        0
    );
    let obj = std::fs::read_to_string(d.join("f.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 36);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 72);

    let out = isoshell(&["export", "f.json", "--tiles", "2x1"], d);
    assert_eq!(
        stdout(&out).lines().filter(|l| l.starts_with("v ")).count(),
        8
    );

    isoshell(
        &[
            "generate",
            "corrugation",
            "--nx",
            "4",
            "--ny",
            "1",
            "--h",
            "0.5",
            "--out",
            "c.json",
        ],
        d,
    );
    let out = isoshell(&["export", "c.json"], d);
    for line in stdout(&out).lines().filter(|l| l.starts_with("v ")) {
        let v: Vec<f64> = line[2..]
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * v[0] / 4.0).cos();
        assert!((v[2] - expected).abs() < 1e-12, "{line}");
    }

    assert_eq!(code(&isoshell(&["export", "missing.json"], d)), 1);
}
