use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nfl-reach"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let dir = repo().join("docs/schemas");
    let load = |n: &str| -> Value { serde_json::from_str(&std::fs::read_to_string(dir.join(n)).unwrap()).unwrap() };
    let common = jsonschema::Resource::from_contents(load("common.schema.json")).unwrap();
    jsonschema::options()
        .with_resource("json-schema:///common.schema.json", common)
        .build(&load(name))
        .unwrap()
}

fn assert_valid(schema_name: &str, path: &Path) {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let errors: Vec<String> = schema(schema_name).iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{} vs {schema_name}: {errors:?}", path.display());
}

fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

/// `x' = 0.5 x` in `dim` dimensions with an identity controller.
fn halving_config(dir: &Path, dim: usize, k: usize, n_samp: usize) -> PathBuf {
    let eye: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let zero: Vec<Vec<f64>> = vec![vec![0.0; dim]; dim];
    let half: Vec<Vec<f64>> = eye.iter().map(|r| r.iter().map(|v| v * 0.5).collect()).collect();
    write_json(
        &dir.join("net.json"),
        &json!({ "layers": [{ "weights": eye, "bias": vec![0.0; dim], "activation": "linear" }] }),
    );
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..dim {
        let mut r = vec![0.0; dim];
        r[i] = 1.0;
        a.push(r.clone());
        b.push(1.0);
        r[i] = -1.0;
        a.push(r);
        b.push(1.0);
    }
    let cfg = dir.join("config.json");
    write_json(
        &cfg,
        &json!({
            "system": {
                "dynamics": { "name": "affine", "params": { "a": zero, "b": half } },
                "network": "net.json",
                "domain": { "lo": vec![-8.0; dim], "hi": vec![8.0; dim] }
            },
            "goal": { "a": a, "b": b },
            "reach": { "k": k, "n_samp": n_samp },
            "coverage": { "samples": 4000, "seed": 5 }
        }),
    );
    cfg
}

fn reach(cfg: &Path, out: &Path) {
    let o = run(&["reach", "--config", s(cfg), "--out", s(out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reach_writes_valid_result_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 1, 2, 1);
    let out = dir.path().join("result.json");
    reach(&cfg, &out);
    assert_valid("config.schema.json", &cfg);
    assert_valid("network.schema.json", &dir.path().join("net.json"));
    assert_valid("result.schema.json", &out);
    let timing = dir.path().join("result.json.timing.json");
    assert_valid("timing.schema.json", &timing);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let radii: Vec<f64> = r["steps"].as_array().unwrap().iter().map(|s| s["balls"][0]["radius"].as_f64().unwrap()).collect();
    assert!((radii[0] - 2.0).abs() < 1e-5 && (radii[1] - 4.0).abs() < 1e-5, "{radii:?}");
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 1, 2, 1);
    let out = dir.path().join("result.json");
    reach(&cfg, &out);

    let verdict = dir.path().join("verdict.json");
    let o = run(&["check", "--result", s(&out), "--box", "-1,1", "--out", s(&verdict)]);
    assert_eq!(code(&o), 0);
    assert_valid("check.schema.json", &verdict);

    let o = run(&["check", "--result", s(&out), "--box", "5,6"]);
    assert_eq!(code(&o), 3);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "not_subset");
    let w = v["witness"][0].as_f64().unwrap();
    assert!((5.0..=6.0).contains(&w));

    let start = dir.path().join("start.json");
    write_json(&start, &json!({ "a": [[1.0], [-1.0]], "b": [3.0, 3.0] }));
    assert_eq!(code(&run(&["check", "--result", s(&out), "--start", s(&start)])), 0);

    // outside the analysis domain
    assert_eq!(code(&run(&["check", "--result", s(&out), "--box", "-9,0"])), 2);
    assert_eq!(code(&run(&["check", "--result", s(&out), "--box", "1"])), 2);
}

#[test]
fn missing_network_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 1, 1, 1);
    std::fs::remove_file(dir.path().join("net.json")).unwrap();
    let o = run(&["reach", "--config", s(&cfg), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("net.json"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 1, 1, 1);
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["reach"]["nsamp"] = json!(3);
    write_json(&cfg, &v);
    let o = run(&["reach", "--config", s(&cfg), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nsamp"));
}

#[test]
fn coverage_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 1, 2, 1);
    let out = dir.path().join("result.json");
    reach(&cfg, &out);
    let csv = |name: &str| {
        let p = dir.path().join(name);
        let json = dir.path().join(format!("{name}.json"));
        let o = run(&["coverage", "--config", s(&cfg), "--result", s(&out), "--csv", s(&p), "--out", s(&json)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_valid("coverage.schema.json", &json);
        std::fs::read(p).unwrap()
    };
    let a = csv("a.csv");
    assert_eq!(a, csv("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("n_samp,t1,t2,union\n1,"));
    let union: f64 = text.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(union >= 0.99);

    let o = run(&["coverage", "--config", s(&cfg), "--result", s(&out), "--samples", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn coverage_refuses_a_result_for_another_system() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 1, 1, 1);
    let out = dir.path().join("result.json");
    reach(&cfg, &out);
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["goal"]["b"] = json!([2.0, 2.0]);
    write_json(&cfg, &v);
    assert_eq!(code(&run(&["coverage", "--config", s(&cfg), "--result", s(&out)])), 2);
}

fn svg_shapes(svg: &str, class: &str) -> Vec<Vec<(f64, f64)>> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("polygon") && n.attribute("class") == Some(class))
        .map(|n| {
            n.attribute("points")
                .unwrap()
                .split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn plot_draws_each_ball_at_its_extent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 2, 1, 2);
    let out = dir.path().join("result.json");
    reach(&cfg, &out);
    let svg_path = dir.path().join("fig.svg");
    let csv_path = dir.path().join("balls.csv");
    let o = run(&["plot", "--result", s(&out), "--out", s(&svg_path), "--csv", s(&csv_path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    let shapes = svg_shapes(&svg, "ball");
    assert_eq!(shapes.len(), 2);
    assert_eq!(svg_shapes(&svg, "goal").len(), 1);

    // undo the 640px frame with a 56px margin over the domain [-8, 8]^2
    let to_state = |(px, py): (f64, f64)| ((px - 56.0) / 528.0 * 16.0 - 8.0, (640.0 - 56.0 - py) / 528.0 * 16.0 - 8.0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let balls = r["steps"][0]["balls"].as_array().unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    for ((shape, ball), row) in shapes.iter().zip(balls).zip(&rows) {
        let c = [ball["center"][0].as_f64().unwrap(), ball["center"][1].as_f64().unwrap()];
        let rad = ball["radius"].as_f64().unwrap();
        let pts: Vec<(f64, f64)> = shape.iter().map(|&p| to_state(p)).collect();
        let xmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let xmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-2;
        assert!((xmin - (c[0] - rad)).abs() < tol && (xmax - (c[0] + rad)).abs() < tol);
        assert!((ymin - (c[1] - rad)).abs() < tol && (ymax - (c[1] + rad)).abs() < tol);
        let field = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(row[4], "inf");
        assert!((field(5) - (c[0] - rad)).abs() < 1e-12 && (field(8) - (c[1] + rad)).abs() < 1e-12);
    }
}

#[test]
fn plot_of_empty_result_has_only_axes_and_goal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 2, 1, 1);
    let out = dir.path().join("result.json");
    reach(&cfg, &out);
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    v["steps"][0]["balls"] = json!([]);
    write_json(&out, &v);
    let svg_path = dir.path().join("fig.svg");
    assert_eq!(code(&run(&["plot", "--result", s(&out), "--out", s(&svg_path)])), 0);
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg_shapes(&svg, "ball").is_empty());
    assert_eq!(svg_shapes(&svg, "goal").len(), 1);
    assert!(svg.contains(r#"class="axes""#));
}

#[test]
fn plot_requires_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 3, 1, 1);
    let out = dir.path().join("result.json");
    reach(&cfg, &out);
    let o = run(&["plot", "--result", s(&out), "--out", s(&dir.path().join("fig.svg"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("plot requires 2-D"));
}

#[test]
fn export_lp_writes_one_ball_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = halving_config(dir.path(), 1, 2, 1);
    let lp = dir.path().join("ball.lp");
    let o = run(&["export-lp", "--config", s(&cfg), "--t", "2", "--center", "0.5", "--out", s(&lp)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&lp).unwrap();
    assert!(text.starts_with("Minimize") || text.contains("\nMinimize"));
    assert!(text.contains("Subject To") && text.trim_end().ends_with("End"));
    assert_eq!(code(&run(&["export-lp", "--config", s(&cfg), "--t", "3", "--center", "0.5", "--out", s(&lp)])), 2);
}
