use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn synthblip(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthblip"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("exp.toml"), body).unwrap();
}

#[test]
fn simulate_is_reproducible_from_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = synthblip(tmp.path(), &["simulate", "--seed", "9", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["panel.csv", "metadata.json", "factors.json", "noise.json", "params.json", "roles.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let o = synthblip(tmp.path(), &["simulate", "--seed", "10", "--out", "c"]);
    assert_eq!(code(&o), 0);
    assert_ne!(
        fs::read(tmp.path().join("a/panel.csv")).unwrap(),
        fs::read(tmp.path().join("c/panel.csv")).unwrap()
    );
}

#[test]
fn estimate_on_a_saved_panel_writes_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&synthblip(tmp.path(), &["simulate", "--out", "p"])), 0);
    let o = synthblip(tmp.path(), &["estimate", "--panel", "p", "--out", "e"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.json", "queries.csv", "tables.json", "weights.tsv"] {
        assert!(tmp.path().join("e").join(f).exists(), "{f}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("e/metrics.json")).unwrap()).unwrap();
    assert!(metrics["aggregates"]["max_abs"].as_f64().unwrap() < 1e-8);
}

#[test]
fn validate_and_oracle_succeed_on_the_default_panel() {
    let tmp = tempfile::tempdir().unwrap();
    let o = synthblip(tmp.path(), &["validate"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("panel valid"));
    let o = synthblip(tmp.path(), &["oracle"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    // 20 units × 2³ sequences plus the header.
    assert_eq!(text.lines().count(), 20 * 8 + 1);
}

#[test]
fn incompatible_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "[dgp]\nvariant = \"ltv\"\ncontrol = [0, 1, 0]\n[estimator]\nkind = \"lti\"\n");
    let o = synthblip(tmp.path(), &["estimate", "--config", "exp.toml"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    write_config(tmp.path(), "[dgp]\nhorizon = 0\n");
    assert_eq!(code(&synthblip(tmp.path(), &["simulate", "--config", "exp.toml"])), 2);
    write_config(tmp.path(), "[dgp]\nunknown_key = 1\n");
    assert_eq!(code(&synthblip(tmp.path(), &["simulate", "--config", "exp.toml"])), 2);
    assert_eq!(code(&synthblip(tmp.path(), &["sweep"])), 2);
}

#[test]
fn corrupted_panel_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&synthblip(tmp.path(), &["simulate", "--out", "p"])), 0);
    let path = tmp.path().join("p/panel.csv");
    let text = fs::read_to_string(&path).unwrap();
    let corrupted = text.replacen("\n0,1,0,", "\n0,1,7,", 1);
    assert_ne!(text, corrupted);
    fs::write(&path, corrupted).unwrap();
    let o = synthblip(tmp.path(), &["validate", "--panel", "p"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn donor_deficit_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        "[dgp]\nvariant = \"general\"\nn_actions = 3\n[dgp.design]\ndesign = \"random\"\nunits = 4\n[query]\nrandom = 20\n",
    );
    let o = synthblip(tmp.path(), &["estimate", "--config", "exp.toml"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_tidy_csv() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        "seed = 4\n[sweep]\nmultiplicity = [2, 4]\nsigma = [0.0, 0.5]\nreplications = 2\nestimators = [\"ltv\", \"lti\"]\n",
    );
    let o = synthblip(tmp.path(), &["sweep", "--config", "exp.toml", "--out", "s"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("rmse"));
    assert_eq!(lines.count(), 2 * 2 * 2 * 2);
}

#[test]
fn pcr_needs_covariates_when_donors_deviate_first() {
    let tmp = tempfile::tempdir().unwrap();
    let o = synthblip(tmp.path(), &["estimate", "--weights", "pcr"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    write_config(tmp.path(), "[dgp]\ncovariates = 6\n[estimator]\nweights = \"pcr\"\n");
    let o = synthblip(tmp.path(), &["estimate", "--config", "exp.toml"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
