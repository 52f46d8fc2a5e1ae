use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use plcm_cli::RunConfig;
use plcm_core::io::{read_dataset_file, read_draws_file};
use plcm_core::predict_individual;

fn plcm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plcm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Vec<PathBuf> {
    let out = plcm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| dir.join(l))
        .collect()
}

/// Runs a failing command and returns its error record.
fn fails(dir: &Path, args: &[&str]) -> Value {
    let out = plcm(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let rec: Value = serde_json::from_str(stderr.trim()).unwrap_or_else(|e| panic!("not JSON ({e}): {stderr}"));
    rec["error"].clone()
}

const SMALL: &str = r#"
out = "res"
[simulate]
delta = 0.1
n_cases = 200
n_controls = 200
seed = 8
[mcmc]
n_burnin = 300
n_keep = 1500
n_chains = 2
seed = 3
"#;

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_fit_predict_check_pipeline() {
    let ws = workspace(SMALL);
    let dir = ws.path();
    let sim = ok(dir, &["--config", "run.toml", "simulate"]);
    assert_eq!(sim, vec![dir.join("res/data.csv"), dir.join("res/truth.json")]);
    let truth = json(&dir.join("res/truth.json"));
    assert_eq!(truth["truth"]["n_cases"], 200);

    let fit = ok(dir, &["--config", "run.toml", "fit"]);
    for name in ["draws.csv", "summary.txt", "classification.csv", "contours.csv", "diagnostics.json"] {
        assert!(fit.contains(&dir.join("res").join(name)), "missing {name}");
    }
    let diag = json(&dir.join("res/diagnostics.json"));
    let means: Vec<f64> = diag["params"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["name"].as_str().unwrap().starts_with("pi_"))
        .map(|p| p["mean"].as_f64().unwrap())
        .collect();
    assert_eq!(means.len(), 3);
    assert!(means.iter().all(|m| (0.0..=1.0).contains(m)));
    assert!((means.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(diag["n_chains"], 2);
    assert_eq!(diag["n_draws"], 3000);
    assert!(diag["region"]["area"].as_f64().unwrap() > 0.0);

    fs::write(dir.join("pat.csv"), "C,A,B\n0,0,0\n1,1,1\n").unwrap();
    let pred = ok(dir, &["--config", "run.toml", "predict", "--patterns", "pat.csv"]);
    let text = fs::read_to_string(&pred[0]).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "id,A,B,C,p_A,p_B,p_C,predicted");
    // the same numbers straight from the library
    let ds = read_dataset_file(&dir.join("res/data.csv"), None).unwrap();
    let chains = read_draws_file(&dir.join("res/draws.csv"), &ds.panel).unwrap();
    let direct = predict_individual(&[false, false, false], &chains).unwrap();
    let cells: Vec<&str> = rows[1].split(',').collect();
    for j in 0..3 {
        assert_eq!(cells[4 + j].parse::<f64>().unwrap(), direct.p_hat[j]);
    }
    assert_eq!(rows[2].rsplit(',').next(), Some("B"));

    let check = ok(dir, &["--config", "run.toml", "check"]);
    assert_eq!(check, vec![dir.join("res/ppc_patterns.csv"), dir.join("res/slor.txt")]);

    // nothing but the outputs in the directory: temp files were renamed
    let mut names: Vec<String> = fs::read_dir(dir.join("res"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "classification.csv",
            "contours.csv",
            "data.csv",
            "diagnostics.json",
            "draws.csv",
            "ppc_patterns.csv",
            "predictions.csv",
            "slor.txt",
            "summary.txt",
            "truth.json"
        ]
    );
}

#[test]
fn outputs_embed_the_resolved_config() {
    let ws = workspace(SMALL);
    let dir = ws.path();
    ok(dir, &["--config", "run.toml", "simulate"]);
    ok(dir, &["--config", "run.toml", "--seed", "99", "--keep", "400", "fit"]);
    let summary = fs::read_to_string(dir.join("res/summary.txt")).unwrap();
    let header: Vec<&str> = summary.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(header[0].starts_with("# plcm ") && header[0].ends_with(" fit"));
    assert_eq!(header[1], "# seed 99");
    assert!(header.contains(&"# prior theta_brs_A beta 1 1"));

    let prov = &json(&dir.join("res/diagnostics.json"))["provenance"];
    assert_eq!(prov["seed"], 99);
    let cfg = RunConfig::parse(prov["config"].as_str().unwrap(), "provenance").unwrap();
    assert_eq!(cfg.mcmc.seed, 99);
    assert_eq!(cfg.mcmc.n_keep, 400);
    assert_eq!(cfg.mcmc.n_burnin, 300);

    let data = fs::read_to_string(dir.join("res/data.csv")).unwrap();
    assert!(data.starts_with("# plcm "));
    assert!(data.contains("# seed 8\n"));
}

#[test]
fn fits_are_reproducible_under_seed() {
    let ws = workspace(SMALL);
    let dir = ws.path();
    ok(dir, &["--config", "run.toml", "simulate"]);
    let draws = |seed: &str, out: &str| {
        ok(dir, &["--config", "run.toml", "--seed", seed, "--keep", "200", "--out", out, "fit"]);
        let text = fs::read_to_string(dir.join(out).join("draws.csv")).unwrap();
        text.lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect::<Vec<_>>()
    };
    // data stays where simulate put it
    fs::write(dir.join("run.toml"), format!("data = \"res/data.csv\"\n{SMALL}")).unwrap();
    let a = draws("5", "a");
    let b = draws("5", "b");
    let c = draws("6", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 1 + 2 * 200);
}

#[test]
fn perch_preset_with_elicited_priors() {
    let config = r#"
out = "res"
[panel]
preset = "perch"
[priors.theta_brs]
HINF = { range = [0.5, 0.99] }
[priors.theta_ss]
PNEU = { range = [0.05, 0.15] }
[simulate]
preset = "perch_like"
seed = 2
[mcmc]
n_burnin = 100
n_keep = 200
n_chains = 2
"#;
    let ws = workspace(config);
    let dir = ws.path();
    ok(dir, &["--config", "run.toml", "simulate"]);
    let fit = ok(dir, &["--config", "run.toml", "fit"]);
    assert!(!fit.contains(&dir.join("res/contours.csv")));
    let summary = fs::read_to_string(dir.join("res/summary.txt")).unwrap();
    let prior = summary
        .lines()
        .find(|l| l.starts_with("# prior theta_brs_HINF"))
        .unwrap();
    let ab: Vec<f64> = prior.split_whitespace().skip(4).map(|x| x.parse().unwrap()).collect();
    assert!(ab[0] > 1.0 && ab[1] > 0.0);
    assert!(summary.contains("# prior theta_ss_PNEU beta"));
    assert!(summary.contains("theta_ss_SAUR"));
    let ds = read_dataset_file(&dir.join("res/data.csv"), None).unwrap();
    assert_eq!((ds.n_cases(), ds.n_controls()), (432, 479));

    ok(dir, &["--config", "run.toml", "check"]);
    let slor = fs::read_to_string(dir.join("res/slor.txt")).unwrap();
    assert!(slor.contains("RSV_A_B"));
}

#[test]
fn identifiability_report() {
    let config = r#"
out = "res"
[identifiability.at]
pi = [0.67, 0.26, 0.07]
theta_brs = [0.9, 0.9, 0.9]
psi_brs = [0.6, 0.02, 0.05]
"#;
    let ws = workspace(config);
    let dir = ws.path();
    ok(dir, &["--config", "run.toml", "identifiability"]);
    let report = json(&dir.join("res/identifiability.json"));
    let points = report["points"].as_array().unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0]["report"]["n_effective_zeros"], 2);
    assert_eq!(points[0]["report"]["fpr_rank"], 3);
    let text = fs::read_to_string(dir.join("res/identifiability.txt")).unwrap();
    assert!(text.contains("\n  effective_zeros 2\n"));

    // random points need a size
    let ws = workspace("[identifiability]\npathogens = 4\npoints = 3\n");
    ok(ws.path(), &["--config", "run.toml", "--out", "r", "identifiability"]);
    let report = json(&ws.path().join("r/identifiability.json"));
    for p in report["points"].as_array().unwrap() {
        assert_eq!(p["report"]["n_effective_zeros"], 3);
    }
}

#[test]
fn malformed_dataset_row_is_located() {
    let ws = workspace("data = \"d.csv\"\nout = \"res\"\n");
    let dir = ws.path();
    fs::write(
        dir.join("d.csv"),
        "id,case,gs_available,ss_available,brs_A,brs_B,gs_A,gs_B\n\
         c1,1,0,0,1,0,NA,NA\n\
         c2,1,0,0,1,NA,NA\n",
    )
    .unwrap();
    let e = fails(dir, &["--config", "run.toml", "fit"]);
    assert_eq!(e["kind"], "parse");
    assert_eq!(e["line"], 3);
    assert!(e["path"].as_str().unwrap().ends_with("d.csv"));
}

#[test]
fn unknown_pathogen_in_patterns() {
    let ws = workspace(SMALL);
    let dir = ws.path();
    ok(dir, &["--config", "run.toml", "simulate"]);
    ok(dir, &["--config", "run.toml", "--keep", "50", "fit"]);
    fs::write(dir.join("pat.csv"), "A,B,Q\n0,0,0\n").unwrap();
    let e = fails(dir, &["--config", "run.toml", "predict", "--patterns", "pat.csv"]);
    assert_eq!(e["kind"], "parse");
    assert_eq!(e["field"], "Q");
    assert_eq!(e["line"], 1);
    assert!(!dir.join("res/predictions.csv").exists());
}

#[test]
fn config_violations_are_reported() {
    let cases = [
        ("[mcmc]\nn_burnin = 10\nthinning = 2\n", Some(4), "thinning"),
        ("out = 5\n", Some(2), "5"),
        ("[panel]\nnames = [\"A\", \"B\"]\n[priors.psi_brs]\nA = { range = [0.3, 0.1] }\n", None, "priors.psi_brs.A"),
        ("[panel]\npreset = \"nope\"\n", None, "panel.preset"),
    ];
    for (config, line, field) in cases {
        let ws = workspace(&format!("data = \"d.csv\"\n{config}"));
        fs::write(ws.path().join("d.csv"), "id,case,gs_available,ss_available,brs_A,brs_B,gs_A,gs_B\n").unwrap();
        let e = fails(ws.path(), &["--config", "run.toml", "fit"]);
        assert_eq!(e["kind"], "parse", "{config}");
        assert_eq!(e["field"], field, "{config}");
        match line {
            Some(l) => assert_eq!(e["line"], l, "{config}"),
            None => assert!(e.get("line").is_none()),
        }
    }
}

#[test]
fn usage_errors() {
    let ws = workspace("");
    let e = fails(ws.path(), &["fit", "--chains"]);
    assert_eq!(e["kind"], "usage");
    let e = fails(ws.path(), &["--config", "missing.toml", "fit"]);
    assert_eq!(e["kind"], "io");
    let e = fails(ws.path(), &["predict"]);
    assert_eq!(e["kind"], "usage");
    let out = plcm(ws.path(), &["--help"]);
    assert!(out.status.success());
}
