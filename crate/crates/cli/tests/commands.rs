use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfmmwd::simulation::CfmmwdConfig;
use tempfile::TempDir;

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

fn cfmmwd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfmmwd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = cfmmwd(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const XY_UNIFORM: &str = r#"
[utility]
variant = "cobb_douglas_product"

[distribution]
variant = "uniform_box"
lo = [0.0, 0.0]
hi = [1.0, 1.0]
"#;

fn small_sim(dir: &Path) -> String {
    write(
        dir,
        "sim.toml",
        &format!(
            r#"
[cfmm]
variant = "constant_product"
reserves = [50.0, 50.0]
{XY_UNIFORM}
[run]
steps = 2000
seed = 9
"#
        ),
    )
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_parseable_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sim(tmp.path());
    let out = tmp.path().join("a");
    let stdout = run_ok(&[
        "simulate",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("welfare"));

    let mut rdr = csv::Reader::from_path(out.join("trajectory.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["step", "R_1", "R_2", "p_1", "p_2", "utility", "traded"]
    );
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.unwrap();
        assert_eq!(rec[0].parse::<u64>().unwrap(), i as u64);
        let r1: f64 = rec[1].parse().unwrap();
        let r2: f64 = rec[2].parse().unwrap();
        assert!(((r1 * r2) - 2500.0).abs() < 1e-8 * 2500.0);
        let p1: f64 = rec[3].parse().unwrap();
        let p2: f64 = rec[4].parse().unwrap();
        assert!((p1 + p2 - 1.0).abs() < 1e-12);
        assert!(rec[5].parse::<f64>().unwrap().is_finite());
        assert!(&rec[6] == "0" || &rec[6] == "1");
        rows += 1;
    }
    assert_eq!(rows, 2000);

    let mut rdr = csv::Reader::from_path(out.join("heatmap.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["x_bin_lo", "x_bin_hi", "y_bin_lo", "y_bin_hi", "count"]
    );
    let total: u64 = rdr
        .records()
        .map(|r| r.unwrap()[4].parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 2000);

    let run = json(&out.join("run.json"));
    let echoed: CfmmwdConfig = serde_json::from_value(run["config"].clone()).unwrap();
    echoed.validate().unwrap();
    assert_eq!(echoed.seed, 9);
    assert_eq!(run["steps"], 2000);
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sim(tmp.path());
    for d in ["a", "b"] {
        let out = tmp.path().join(d);
        run_ok(&[
            "simulate",
            "--config",
            &cfg,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
    }
    for f in ["trajectory.csv", "heatmap.csv", "run.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    // a different seed changes the run
    let out = tmp.path().join("c");
    run_ok(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "10",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_ne!(
        fs::read(tmp.path().join("a/trajectory.csv")).unwrap(),
        fs::read(out.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn replicas_write_separate_directories() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "rep.toml",
        &format!(
            r#"
[cfmm]
variant = "constant_product"
reserves = [50.0, 50.0]
{XY_UNIFORM}
[run]
steps = 500
seed = 1
replicas = 3
"#
        ),
    );
    let out = tmp.path().join("o");
    run_ok(&[
        "simulate",
        "--config",
        &cfg,
        "--workers",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let all = json(&out.join("replicas.json"));
    let seeds: Vec<u64> = all
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, [1, 2, 3]);
    for k in 0..3 {
        assert!(out.join(format!("replica_{k:03}/trajectory.csv")).exists());
    }
    // replica 0 equals a lone run with the same seed
    let lone = write(
        tmp.path(),
        "lone.toml",
        &fs::read_to_string(&cfg)
            .unwrap()
            .replace("replicas = 3", "replicas = 1"),
    );
    let single = tmp.path().join("s");
    run_ok(&[
        "simulate",
        "--config",
        &lone,
        "--out-dir",
        single.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(single.join("trajectory.csv")).unwrap(),
        fs::read(out.join("replica_000/trajectory.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sim(tmp.path());
    let out = cfmmwd(&["simulate", "--config", &cfg, "--steps", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = write(
        tmp.path(),
        "bad.toml",
        &format!(
            r#"
[cfmm]
variant = "constant_product"
reserves = [50.0, 50.0]
colour = "blue"
{XY_UNIFORM}
[run]
steps = 10
"#
        ),
    );
    assert_eq!(
        cfmmwd(&["simulate", "--config", &bad]).status.code(),
        Some(2)
    );

    let bad = write(
        tmp.path(),
        "variant.toml",
        &format!(
            r#"
[cfmm]
variant = "constant_cube"
reserves = [50.0, 50.0]
{XY_UNIFORM}
[run]
steps = 10
"#
        ),
    );
    assert_eq!(
        cfmmwd(&["simulate", "--config", &bad]).status.code(),
        Some(2)
    );
    assert_eq!(cfmmwd(&["simulate"]).status.code(), Some(2));
    assert_eq!(
        cfmmwd(&["simulate", "--config", "/nonexistent.toml"])
            .status
            .code(),
        Some(2)
    );
}

fn equilibrium_price(stdout: &str) -> Vec<f64> {
    let line = stdout.lines().find(|l| l.starts_with("price:")).unwrap();
    line.trim_start_matches("price: (")
        .trim_end_matches(')')
        .split(", ")
        .map(|x| x.parse().unwrap())
        .collect()
}

#[test]
fn equilibrium_presets() {
    let tmp = TempDir::new().unwrap();
    let o = tmp.path().to_str().unwrap();
    for (name, tol) in [
        ("equilibrium_bernoulli", 1e-12),
        ("equilibrium_uniform", 0.01),
    ] {
        let cfg = presets().join(format!("{name}.toml"));
        let stdout = run_ok(&[
            "equilibrium",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            o,
        ]);
        let p = equilibrium_price(&stdout);
        assert!(
            (p[0] - 0.5).abs() < tol && (p[1] - 0.5).abs() < tol,
            "{name}: {p:?}"
        );
    }
    let report = json(&tmp.path().join("equilibrium.json"));
    assert!(report["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn degenerate_equilibrium_is_a_solver_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "deg.toml",
        r#"
[utility]
variant = "cobb_douglas_product"

[distribution]
variant = "discrete_atoms"
points = [[1.0, 0.0], [2.0, 0.0]]
probs = [0.5, 0.5]
"#,
    );
    let out = cfmmwd(&[
        "equilibrium",
        "--config",
        &cfg,
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("good"));
}

#[test]
fn mev_example_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = presets().join("mev_example.toml");
    run_ok(&[
        "mev",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let r = json(&tmp.path().join("mev_report.json"));
    assert!((r["utility"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(r["censored"], serde_json::json!([2]));
    assert_eq!(r["subset"], serde_json::json!([0, 1]));
    assert_eq!(r["exact"], true);
    assert!((r["full_inclusion_utility"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(r["instance"]["transactions"].as_array().unwrap().len(), 3);
}

fn mev_config(dir: &Path, txs: &str, search: &str) -> String {
    write(dir, "txs.csv", txs);
    write(
        dir,
        "mev.toml",
        &format!(
            r#"
[utility]
variant = "cobb_douglas_product"

[mev]
transactions = "txs.csv"
builder_endowment = [0.0, 1.0]
capacity = 30
mode = "censoring"
search = "{search}"
"#
        ),
    )
}

#[test]
fn empty_block_is_builder_autarky() {
    let tmp = TempDir::new().unwrap();
    let cfg = mev_config(tmp.path(), "", "exact");
    run_ok(&[
        "mev",
        "--config",
        &cfg,
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let r = json(&tmp.path().join("mev_report.json"));
    assert_eq!(r["subset"], serde_json::json!([]));
    assert_eq!(r["builder_allocation"], serde_json::json!([0.0, 1.0]));
    assert_eq!(r["utility"].as_f64().unwrap(), 0.0);
}

#[test]
fn large_exact_search_is_refused() {
    let tmp = TempDir::new().unwrap();
    let mut txs = String::from("utility_tag,amount_1,amount_2\n");
    for i in 0..25 {
        txs.push_str(&format!("cobb_douglas_product,{},{}\n", i % 2, (i + 1) % 2));
    }
    let cfg = mev_config(tmp.path(), &txs, "exact");
    let o = tmp.path().to_str().unwrap();
    let out = cfmmwd(&["mev", "--config", &cfg, "--out-dir", o]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--search heuristic"));
    run_ok(&[
        "mev",
        "--config",
        &cfg,
        "--search",
        "heuristic",
        "--out-dir",
        o,
    ]);
    let r = json(&tmp.path().join("mev_report.json"));
    assert_eq!(r["exact"], false);
}

#[test]
fn bad_transaction_files_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    for txs in [
        "utility_tag,amount_1\ncobb_douglas_product,1.0\n",
        "utility_tag,amount_1,amount_2\nshifted_log_sum,1.0,0.0\n",
        "utility_tag,amount_1,amount_2\ncobb_douglas_product,-1.0,0.0\n",
        "utility_tag,amount_1,amount_2\ncobb_douglas_product,x,0.0\n",
    ] {
        let cfg = mev_config(tmp.path(), txs, "exact");
        let out = cfmmwd(&[
            "mev",
            "--config",
            &cfg,
            "--out-dir",
            tmp.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(2), "{txs}");
    }
}

#[test]
fn lp_sweep_matches_the_formula() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "lp.toml",
        r#"
[cfmm]
variant = "constant_product"
reserves = [1.0, 1.0]

[utility]
variant = "cobb_douglas_product"

[lp]
prices = [2.0, 0.5, 1.0]
"#,
    );
    run_ok(&[
        "lp-loss",
        "--config",
        &cfg,
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let mut rdr = csv::Reader::from_path(tmp.path().join("lp_loss.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["p", "u_rebalance", "u_cfmm", "gap"]
    );
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    let ps: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(ps, [0.5, 1.0, 2.0]);
    for (r, want) in rows.iter().zip([0.125, 0.0, 0.125]) {
        assert!((r[3] - want).abs() < 1e-10, "{r:?}");
        assert!((r[1] - (1.0 + r[0]).powi(2) / (4.0 * r[0])).abs() < 1e-10);
    }
}

fn stationary_config(dir: &Path, r1: i64, r2: i64) -> String {
    write(
        dir,
        "st.toml",
        &format!("[stationary]\nr1 = {r1}\nr2 = {r2}\n"),
    )
}

#[test]
fn stationary_small_chain_is_uniform() {
    let tmp = TempDir::new().unwrap();
    let cfg = stationary_config(tmp.path(), 1, 1);
    let stdout = run_ok(&[
        "stationary",
        "--config",
        &cfg,
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(stdout.contains("boundary mass"));
    let mut rdr = csv::Reader::from_path(tmp.path().join("stationary.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["state", "R_1", "R_2", "pi"]
    );
    let pi: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[3].parse().unwrap())
        .collect();
    assert_eq!(pi.len(), 5);
    assert!(pi.iter().all(|p| (p - 0.2).abs() < 1e-12));
    let r = json(&tmp.path().join("stationary.json"));
    assert!((r["boundary_mass"].as_f64().unwrap() - 0.4).abs() < 1e-12);
    assert!((r["welfare"].as_f64().unwrap() - (0.375 - 1.0 / 40.0)).abs() < 1e-12);
}

#[test]
fn stationary_rejects_empty_reserves() {
    let tmp = TempDir::new().unwrap();
    for (r1, r2) in [(0, 3), (3, 0), (-1, 2)] {
        let cfg = stationary_config(tmp.path(), r1, r2);
        let out = cfmmwd(&["stationary", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2));
    }
}

#[test]
fn stationary_enumerates_a_configured_pool() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "enum.toml",
        r#"
[cfmm]
variant = "constant_sum"
params = { coefficients = [1.0, 1.0] }
reserves = [1.0, 1.0]

[utility]
variant = "cobb_douglas_product"

[distribution]
variant = "bernoulli_product"
p = 0.5
delta_max = 1.0
dimension = 2

[stationary]
max_states = 100
"#,
    );
    run_ok(&[
        "stationary",
        "--config",
        &cfg,
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let r = json(&tmp.path().join("stationary.json"));
    assert_eq!(r["states"], 5);
    assert!((r["welfare"].as_f64().unwrap() - (0.375 - 1.0 / 40.0)).abs() < 1e-12);
    assert!(r["welfare_closed_form"].is_null());
}

#[test]
fn every_preset_runs() {
    let tmp = TempDir::new().unwrap();
    let o = tmp.path().to_str().unwrap();
    for entry in fs::read_dir(presets()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_none_or(|e| e != "toml") {
            continue;
        }
        let v: toml::Table = toml::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        let cfg = p.to_str().unwrap();
        let mut ran = false;
        for (section, command) in [
            ("mev", "mev"),
            ("lp", "lp-loss"),
            ("stationary", "stationary"),
        ] {
            if v.contains_key(section) {
                run_ok(&[command, "--config", cfg, "--out-dir", o]);
                ran = true;
            }
        }
        if v.contains_key("cfmm") && v.contains_key("distribution") {
            run_ok(&[
                "simulate",
                "--config",
                cfg,
                "--steps",
                "100",
                "--out-dir",
                o,
            ]);
            ran = true;
        } else if v.contains_key("distribution") {
            run_ok(&["equilibrium", "--config", cfg, "--out-dir", o]);
            ran = true;
        }
        assert!(ran, "{cfg}");
    }
}
