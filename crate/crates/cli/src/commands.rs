//! Subcommand bodies. Each returns the process exit code.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{error, info};
use mpmc_core::oracle::{abc_rejection_until, ks_distance, mixture_marginal_sample, read_draws_csv};
use mpmc_core::{run_adaptive, RunTrace, SeedStream};
use serde_json::json;

use crate::config::{build_model, synth_spec, BuiltModel, ExperimentConfig, ModelBlock};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, i32> {
    match ExperimentConfig::load(path) {
        Ok(mut c) => {
            if let Some(s) = seed {
                c.seed = s;
            }
            Ok(c)
        }
        Err(e) => {
            error!("{}: {e}", path.display());
            Err(EXIT_INPUT)
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), i32> {
    fs::create_dir_all(dir).map_err(|e| {
        error!("cannot create {}: {e}", dir.display());
        EXIT_RUNTIME
    })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), i32> {
    let run = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        f(&mut w)?;
        w.flush()
    };
    run().map_err(|e| {
        error!("cannot write {}: {e}", path.display());
        EXIT_RUNTIME
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), i32> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn write_trace(dir: &Path, trace: &RunTrace) -> Result<(), i32> {
    let path = dir.join("trace.jsonl");
    write_file(&path, |w| trace.write_jsonl(w).map_err(std::io::Error::other))
}

fn unwrap_code(r: Result<(), i32>) -> i32 {
    r.err().unwrap_or(EXIT_OK)
}

pub fn cmd_run(path: &Path, seed: Option<u64>) -> i32 {
    unwrap_code(run_inner(path, seed))
}

fn run_inner(path: &Path, seed: Option<u64>) -> Result<(), i32> {
    let cfg = load(path, seed)?;
    let root = SeedStream::new(cfg.seed);
    let model = build_model(&cfg, &root).map_err(|e| {
        error!("{e}");
        EXIT_INPUT
    })?;
    let init = cfg.init_mixture();
    let adaptive = cfg.adaptive.to_config();
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    write_file(&dir.join("config.toml"), |w| w.write_all(cfg.to_toml().as_bytes()))?;

    let start = Instant::now();
    info!("running {} model, seed {}", cfg.model.name(), cfg.seed);
    let (params, trace) = match run_adaptive(model.as_target(), &init, &adaptive, &root) {
        Ok(r) => r,
        Err(failure) => {
            error!("run failed: {failure}");
            write_trace(dir, &failure.trace)?;
            return Err(EXIT_RUNTIME);
        }
    };
    let wall = start.elapsed().as_secs_f64();

    write_trace(dir, &trace)?;
    write_file(&dir.join("final_mixture.json"), |w| {
        w.write_all(params.to_json().as_bytes())?;
        w.write_all(b"\n")
    })?;
    let out_stream = root.named("engine").named("marginals");
    write_file(&dir.join("marginals.csv"), |w| {
        writeln!(w, "coordinate,value")?;
        for c in 0..params.dim() {
            let xs = mixture_marginal_sample(&params, c, cfg.output.marginal_samples, &out_stream.child(c as u64))
                .expect("coordinate in range");
            for x in xs {
                writeln!(w, "{},{x}", c + 1)?;
            }
        }
        Ok(())
    })?;
    let reason = trace.stop_reason.expect("completed run has a stop reason");
    write_json(
        &dir.join("summary.json"),
        &json!({
            "T_tot": trace.t_tot(),
            "final_D": params.n_components(),
            "final_L": trace.final_objective(),
            "stop_reason": reason.as_str(),
        }),
    )?;
    write_json(&dir.join("timing.json"), &json!({ "wall_time": wall }))?;
    info!(
        "done: T_tot = {}, D = {}, stop = {}, {wall:.1}s; outputs in {}",
        trace.t_tot(),
        params.n_components(),
        reason.as_str(),
        dir.display()
    );
    Ok(())
}

pub fn cmd_oracle(path: &Path, seed: Option<u64>) -> i32 {
    unwrap_code(oracle_inner(path, seed))
}

fn oracle_inner(path: &Path, seed: Option<u64>) -> Result<(), i32> {
    let cfg = load(path, seed)?;
    if !matches!(cfg.model, ModelBlock::GkAbc(_)) {
        error!("oracle needs a [model.gk_abc] block, found {}", cfg.model.name());
        return Err(EXIT_INPUT);
    }
    let Some(oracle) = &cfg.oracle else {
        error!("oracle needs an [oracle] block with accepted and budget");
        return Err(EXIT_INPUT);
    };
    let root = SeedStream::new(cfg.seed);
    let BuiltModel::Gk(model) = build_model(&cfg, &root).map_err(|e| {
        error!("{e}");
        EXIT_INPUT
    })?
    else {
        unreachable!("checked above");
    };
    create_dir(&cfg.output_dir)?;
    let sample = match abc_rejection_until(&model, oracle.accepted, oracle.budget, &root.named("oracle")) {
        Ok(s) => s,
        Err(e) => {
            error!("{e}");
            return Err(EXIT_RUNTIME);
        }
    };
    let csv_path = cfg.output_dir.join("oracle.csv");
    write_file(&csv_path, |w| sample.write_csv(w).map_err(std::io::Error::other))?;
    write_json(
        &cfg.output_dir.join("oracle.json"),
        &json!({
            "accepted": sample.draws.len(),
            "proposals": sample.proposals,
            "acceptance_rate": sample.acceptance_rate,
        }),
    )?;
    info!(
        "accepted {} of {} proposals (rate {:.4}); wrote {}",
        sample.draws.len(),
        sample.proposals,
        sample.acceptance_rate.unwrap_or(0.0),
        csv_path.display()
    );
    Ok(())
}

fn read_marginals(path: &Path) -> Result<BTreeMap<usize, Vec<f64>>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != ["coordinate", "value"] {
        return Err(format!("{}: expected header coordinate,value", path.display()));
    }
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = || format!("{}:{}: malformed row", path.display(), i + 2);
        let c: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let v: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        out.entry(c).or_default().push(v);
    }
    Ok(out)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
}

pub fn cmd_compare(run_dir: &Path, oracle_csv: &Path) -> i32 {
    unwrap_code(compare_inner(run_dir, oracle_csv))
}

fn compare_inner(run_dir: &Path, oracle_csv: &Path) -> Result<(), i32> {
    let input_err = |e: String| {
        error!("{e}");
        EXIT_INPUT
    };
    let marginals = read_marginals(&run_dir.join("marginals.csv")).map_err(input_err)?;
    let file = File::open(oracle_csv).map_err(|e| input_err(format!("{}: {e}", oracle_csv.display())))?;
    let draws = read_draws_csv(file).map_err(|e| input_err(format!("{}: {e}", oracle_csv.display())))?;
    if draws.is_empty() {
        return Err(input_err(format!("{}: no draws", oracle_csv.display())));
    }
    let p = draws[0].len();
    let coords: Vec<usize> = marginals.keys().copied().collect();
    if coords != (1..=p).collect::<Vec<_>>() {
        return Err(input_err(format!(
            "dimension mismatch: run has coordinates {coords:?}, oracle has {p} columns"
        )));
    }
    let mut ks = Vec::with_capacity(p);
    let mut mean_delta = Vec::with_capacity(p);
    let mut var_delta = Vec::with_capacity(p);
    for (k, run) in marginals.values().enumerate() {
        let o: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        ks.push(ks_distance(run, &o).expect("non-empty"));
        let (mr, vr) = mean_var(run);
        let (mo, vo) = mean_var(&o);
        mean_delta.push(mr - mo);
        var_delta.push(vr - vo);
    }
    let out = run_dir.join("compare.json");
    write_json(
        &out,
        &json!({
            "ks": ks,
            "mean_delta": mean_delta,
            "var_delta": var_delta,
            "n_run": marginals.values().map(Vec::len).collect::<Vec<_>>(),
            "n_oracle": draws.len(),
        }),
    )?;
    info!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_synth_glmm(path: &Path, seed: Option<u64>) -> i32 {
    unwrap_code(synth_inner(path, seed))
}

fn synth_inner(path: &Path, seed: Option<u64>) -> Result<(), i32> {
    let cfg = load(path, seed)?;
    let synth = match &cfg.model {
        ModelBlock::Glmm(g) => g.synth.clone(),
        _ => None,
    };
    let Some(synth) = synth else {
        error!("synth-glmm needs a [model.glmm.synth] block");
        return Err(EXIT_INPUT);
    };
    let root = SeedStream::new(cfg.seed);
    let data = mpmc_core::model::GlmmData::synthesize(&synth_spec(&synth), &mut root.named("model").rng())
        .map_err(|e| {
            error!("{e}");
            EXIT_INPUT
        })?;
    create_dir(&cfg.output_dir)?;
    let out: PathBuf = cfg.output_dir.join("glmm_data.csv");
    write_file(&out, |w| data.write_csv(w).map_err(std::io::Error::other))?;
    info!("wrote {} rows to {}", data.n_rows(), out.display());
    Ok(())
}
