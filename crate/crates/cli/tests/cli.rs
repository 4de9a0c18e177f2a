use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpmc_core::model::{gk_default_prior, gk_simulate, GkAbcModel, GkParams, SummaryMode};
use mpmc_core::oracle::{ks_distance, mixture_reference};
use mpmc_core::{MixtureParams, SeedStream};

fn mpmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const TRACTABLE: &str = r#"
seed = 11
output_dir = "out"

[model.tractable]
weights = [0.5, 0.5]
means = [[-2.0, 0.0], [2.0, 0.0]]
covs = [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
noise_cv = 0.5
box = [[-15.0, 15.0], [-15.0, 15.0]]

[adaptive]
window = "fixed"
t_w = 4
n_particles = 2000
n_add = 2000
t_max = 20
d_max = 4

[output]
marginal_samples = 5000
"#;

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_outputs_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", TRACTABLE);
    let out = mpmc(&["--quiet", "run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    for f in ["trace.jsonl", "final_mixture.json", "marginals.csv", "summary.json", "timing.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let s = summary(&dir);
    assert!(s["T_tot"].as_u64().unwrap() <= 20);
    assert!(s["final_D"].as_u64().unwrap() <= 4);
    assert!(s["final_L"].as_f64().is_some());
    let first_summary = fs::read(dir.join("summary.json")).unwrap();
    let first_trace = fs::read(dir.join("trace.jsonl")).unwrap();
    let first_marg = fs::read(dir.join("marginals.csv")).unwrap();
    assert!(std::str::from_utf8(&first_marg).unwrap().starts_with("coordinate,value\n"));
    assert_eq!(std::str::from_utf8(&first_marg).unwrap().lines().count(), 1 + 2 * 5000);

    let out = mpmc(&["--quiet", "--threads", "2", "run", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(fs::read(dir.join("summary.json")).unwrap(), first_summary);
    assert_eq!(fs::read(dir.join("trace.jsonl")).unwrap(), first_trace);
    assert_eq!(fs::read(dir.join("marginals.csv")).unwrap(), first_marg);

    let mixture = MixtureParams::from_json(&fs::read_to_string(dir.join("final_mixture.json")).unwrap()).unwrap();
    assert_eq!(mixture.n_components() as u64, s["final_D"].as_u64().unwrap());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", &TRACTABLE.replace("t_max = 20", "t_max = 3"));
    assert!(mpmc(&["--quiet", "run", cfg.to_str().unwrap()]).status.success());
    let a = fs::read(tmp.path().join("out/trace.jsonl")).unwrap();
    assert!(mpmc(&["--quiet", "--seed", "99", "run", cfg.to_str().unwrap()]).status.success());
    let b = fs::read(tmp.path().join("out/trace.jsonl")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn d_max_one_stops_on_component_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", &TRACTABLE.replace("d_max = 4", "d_max = 1"));
    assert!(mpmc(&["--quiet", "run", cfg.to_str().unwrap()]).status.success());
    let s = summary(&tmp.path().join("out"));
    assert_eq!(s["stop_reason"], "D_max");
    assert_eq!(s["final_D"], 1);
}

#[test]
fn config_errors_exit_2_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &TRACTABLE.replace("t_w = 4", "t_w = 0"));
    let out = mpmc(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 14"), "{err}");

    let cfg = write_config(tmp.path(), "syntax.toml", "seed = \n");
    assert_eq!(mpmc(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mpmc(&["run", "/nonexistent/config.toml"]).status.code(), Some(2));
}

#[test]
fn zero_weight_run_exits_3_with_partial_trace() {
    let tmp = tempfile::tempdir().unwrap();
    // prior box far from where the start mixture puts its mass
    let body = TRACTABLE
        .replace("box = [[-15.0, 15.0], [-15.0, 15.0]]", "box = [[100.0, 101.0], [100.0, 101.0]]");
    let cfg = write_config(tmp.path(), "z.toml", &body);
    let out = mpmc(&["--quiet", "run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let trace = fs::read_to_string(tmp.path().join("out/trace.jsonl")).unwrap();
    assert!(trace.starts_with("{\"record\":\"header\""));
}

const GK: &str = r#"
seed = 5
output_dir = "gk"

[model.gk_abc]
n_obs = 20
h = 12.34
summary_mode = "identity"
true_params = [3.0, 1.0, 2.0, 0.5]

[oracle]
accepted = 300
budget = 200000
"#;

#[test]
fn oracle_rows_match_accepted_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "gk.toml", GK);
    let out = mpmc(&["--quiet", "oracle", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("gk/oracle.csv")).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("gk/oracle.json")).unwrap()).unwrap();
    assert_eq!(csv.lines().count() - 1, report["accepted"].as_u64().unwrap() as usize);
    assert_eq!(report["accepted"], 300);
}

#[test]
fn oracle_wide_bandwidth_accepts_at_kernel_average() {
    let tmp = tempfile::tempdir().unwrap();
    let budget = 20_000;
    let body = |h: &str, dir: &str| {
        GK.replace("h = 12.34", &format!("h = {h}"))
            .replace("\"gk\"", &format!("\"{dir}\""))
            .replace("accepted = 300", "accepted = 1000000")
            .replace("budget = 200000", &format!("budget = {budget}"))
    };
    let narrow = write_config(tmp.path(), "n.toml", &body("12.34", "gkn"));
    let wide = write_config(tmp.path(), "w.toml", &body("1000.0", "gkw"));
    assert!(mpmc(&["--quiet", "oracle", narrow.to_str().unwrap()]).status.success());
    assert!(mpmc(&["--quiet", "oracle", wide.to_str().unwrap()]).status.success());
    let rate = |d: &str| -> f64 {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join(d).join("oracle.json")).unwrap()).unwrap();
        assert_eq!(v["proposals"], budget);
        v["acceptance_rate"].as_f64().unwrap()
    };
    let wide_rate = rate("gkw");
    assert!(wide_rate > rate("gkn"));

    // prior-predictive average of K_h / max K_h, estimated independently
    let y = gk_simulate(20, &GkParams::new(3.0, 1.0, 2.0, 0.5).unwrap(), &mut SeedStream::new(5).named("model").rng());
    let model = GkAbcModel::new(y, 1000.0, SummaryMode::Identity, gk_default_prior()).unwrap();
    let mut rng = SeedStream::new(777).rng();
    let m = 20_000;
    let mean = (0..m)
        .map(|_| {
            let (theta, _) = model.prior().sample_one(&mut rng);
            let x = gk_simulate(20, &GkParams::from_unconstrained(&theta), &mut rng);
            (model.log_kernel(&x) - model.log_kernel_max()).exp()
        })
        .sum::<f64>()
        / m as f64;
    let se = (mean * (1.0 - mean) / m as f64 + wide_rate * (1.0 - wide_rate) / budget as f64).sqrt();
    assert!((wide_rate - mean).abs() < 4.0 * se, "rate {wide_rate} vs kernel average {mean}");
}

#[test]
fn oracle_budget_zero_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "gk.toml", &GK.replace("budget = 200000", "budget = 0"));
    assert_eq!(mpmc(&["--quiet", "oracle", cfg.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn oracle_needs_gk_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", TRACTABLE);
    assert_eq!(mpmc(&["--quiet", "oracle", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn compare_against_own_mixture() {
    let tmp = tempfile::tempdir().unwrap();
    let m = 100_000;
    let body = TRACTABLE.replace("marginal_samples = 5000", &format!("marginal_samples = {m}"));
    let cfg = write_config(tmp.path(), "t.toml", &body);
    assert!(mpmc(&["--quiet", "run", cfg.to_str().unwrap()]).status.success());
    let dir = tmp.path().join("out");
    let mixture = MixtureParams::from_json(&fs::read_to_string(dir.join("final_mixture.json")).unwrap()).unwrap();
    let reference = mixture_reference(&mixture, m, &SeedStream::new(12345));
    let oracle = tmp.path().join("ref.csv");
    reference.write_csv(fs::File::create(&oracle).unwrap()).unwrap();

    let out = mpmc(&["--quiet", "compare", dir.to_str().unwrap(), oracle.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("compare.json")).unwrap()).unwrap();
    let ks = report["ks"].as_array().unwrap();
    assert_eq!(ks.len(), 2);
    let floor = 1.36 * (2.0 / m as f64).sqrt();
    for k in ks {
        assert!(k.as_f64().unwrap() < floor, "{k} vs {floor}");
    }
    // sanity: the library statistic agrees on identical inputs
    assert_eq!(ks_distance(&[1.0], &[1.0]).unwrap(), 0.0);
}

#[test]
fn compare_rejects_bad_oracle_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", &TRACTABLE.replace("t_max = 20", "t_max = 2"));
    assert!(mpmc(&["--quiet", "run", cfg.to_str().unwrap()]).status.success());
    let dir = tmp.path().join("out");
    let empty = write_config(tmp.path(), "empty.csv", "theta_1,theta_2\n");
    assert_eq!(mpmc(&["--quiet", "compare", dir.to_str().unwrap(), empty.to_str().unwrap()]).status.code(), Some(2));
    let wrong = write_config(tmp.path(), "wrong.csv", "theta_1,theta_2,theta_3\n1,2,3\n");
    assert_eq!(mpmc(&["--quiet", "compare", dir.to_str().unwrap(), wrong.to_str().unwrap()]).status.code(), Some(2));
}

const SYNTH: &str = r#"
seed = 3
output_dir = "data"

[model.glmm]
N_i = 500

[model.glmm.synth]
n = 537
T = 4
true_beta = [0.0, 0.0, 0.0]
true_tau2 = 1e-12
"#;

#[test]
fn synth_glmm_shapes_and_balance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SYNTH);
    assert!(mpmc(&["--quiet", "synth-glmm", cfg.to_str().unwrap()]).status.success());
    let text = fs::read_to_string(tmp.path().join("data/glmm_data.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "id,timepoint,wheeze,age_centered,smoking");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2148);
    let ones = rows.iter().filter(|r| r.split(',').nth(2) == Some("1")).count();
    let freq = ones as f64 / rows.len() as f64;
    assert!((freq - 0.5).abs() < 0.02, "{freq}");

    let first = text.clone();
    assert!(mpmc(&["--quiet", "synth-glmm", cfg.to_str().unwrap()]).status.success());
    assert_eq!(fs::read_to_string(tmp.path().join("data/glmm_data.csv")).unwrap(), first);
}

#[test]
fn glmm_data_file_round_trips_through_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", &SYNTH.replace("n = 537", "n = 30"));
    assert!(mpmc(&["--quiet", "synth-glmm", cfg.to_str().unwrap()]).status.success());
    let run = format!(
        "seed = 1\noutput_dir = \"glmm_run\"\n\n[model.glmm]\ndata_file = \"data/glmm_data.csv\"\nN_i = 20\n\n[adaptive]\nn_particles = 200\nn_add = 200\nt_w = 2\nt_max = 3\n\n[output]\nmarginal_samples = 10\n"
    );
    let cfg = write_config(tmp.path(), "r.toml", &run);
    let out = mpmc(&["--quiet", "run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary(&tmp.path().join("glmm_run"))["T_tot"], 3);
}
