//! Command implementations. Every command is a pure function of the
//! configuration, the input files and the seed; nothing time-dependent is
//! written.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use iwsl::graph::{read_dataset, synth_dataset, write_dataset, SyntheticInstance, TaskConfig};
use iwsl::inference::InferenceConfig;
use iwsl::learning::{evaluate, Evaluation, Metrics, TraceRecord, Trainer};
use iwsl::nn::{Checkpoint, ThetaParams};
use iwsl::sampler::audit_hooks;
use iwsl::Error;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::audit;
use crate::config::RunConfig;

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "IWSL_OUT";
/// Environment variable that perturbs the default log-density inside `audit`.
pub const PERTURB_ENV: &str = "IWSL_AUDIT_PERTURB";

pub const EXIT_AUDIT: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFiniteLoss { .. } | Error::Optimizer { .. } => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CmdResult = Result<(), Failure>;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ensure_out(&self) -> CmdResult {
        fs::create_dir_all(&self.out)?;
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "NA".into())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Comma-separated table preceded by `# key=value` lines for the config snapshot.
fn write_csv(path: &Path, cfg: &RunConfig, header: &[String], rows: &[Vec<String>]) -> CmdResult {
    let mut text = String::new();
    for (k, v) in cfg.snapshot() {
        text.push_str(&format!("# {k}={v}\n"));
    }
    text.push_str(
        &header
            .iter()
            .map(|h| csv_field(h))
            .collect::<Vec<_>>()
            .join(","),
    );
    text.push('\n');
    for row in rows {
        text.push_str(
            &row.iter()
                .map(|c| csv_field(c))
                .collect::<Vec<_>>()
                .join(","),
        );
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> CmdResult {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Failure::usage(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn snapshot_value(cfg: &RunConfig) -> Value {
    to_value(&cfg.snapshot())
}

fn dataset_bytes(task: &TaskConfig, data: &[SyntheticInstance]) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, task, data)?;
    Ok(buf)
}

struct LoadedDataset {
    task: TaskConfig,
    data: Vec<SyntheticInstance>,
    sha256: String,
}

fn load_dataset(path: &Path) -> Result<LoadedDataset, Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::usage(format!("cannot read dataset {}: {e}", path.display())))?;
    let (task, data) = read_dataset(BufReader::new(bytes.as_slice()))?;
    if data.is_empty() {
        return Err(Failure::usage(format!(
            "dataset {} has no instances",
            path.display()
        )));
    }
    Ok(LoadedDataset {
        task,
        data,
        sha256: sha256_hex(&bytes),
    })
}

pub fn synth(ctx: &Context) -> CmdResult {
    ctx.ensure_out()?;
    let cfg = &ctx.cfg;
    let task = cfg.task(cfg.seed);
    let data = synth_dataset(&task, cfg.count)?;
    let bytes = dataset_bytes(&task, &data)?;
    fs::write(ctx.path("dataset.jsonl"), &bytes)?;
    println!(
        "wrote {} instances to {}",
        data.len(),
        ctx.path("dataset.jsonl").display()
    );
    if cfg.holdout_count > 0 {
        let hold_task = cfg.task(cfg.seed.wrapping_add(1));
        let hold = synth_dataset(&hold_task, cfg.holdout_count)?;
        fs::write(ctx.path("holdout.jsonl"), dataset_bytes(&hold_task, &hold)?)?;
        println!(
            "wrote {} instances to {}",
            hold.len(),
            ctx.path("holdout.jsonl").display()
        );
    }
    Ok(())
}

fn trace_rows(trace: &[TraceRecord]) -> Vec<Vec<String>> {
    trace
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_f64(r.loss),
                fmt_f64(r.mean_bound),
                fmt_f64(r.tau),
            ]
        })
        .collect()
}

fn write_checkpoint(path: &Path, theta: &ThetaParams, tau: f64, iterations: usize) -> CmdResult {
    let ckpt = Checkpoint {
        theta: theta.clone(),
        scalars: vec![
            ("tau".into(), tau),
            ("iterations".into(), iterations as f64),
        ],
    };
    let mut bytes = Vec::new();
    ckpt.write(&mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

struct Trained {
    theta: ThetaParams,
    tau: f64,
    trace: Vec<TraceRecord>,
    failure: Option<Failure>,
}

fn run_training(
    cfg: &RunConfig,
    task: &TaskConfig,
    data: &[SyntheticInstance],
) -> Result<Trained, Failure> {
    let learn = cfg.learn()?;
    let inf = cfg.inference();
    let theta = Trainer::init_theta(data, task.v_o, task.v_p, &learn)?;
    let mut trainer = Trainer::new(data, theta, &learn, &inf)?;
    let mut failure = None;
    while !trainer.finished() {
        match trainer.step() {
            Ok(rec) => {
                if rec.iteration % 250 == 0 {
                    eprintln!(
                        "iteration {} loss {:.4} tau {:.4}",
                        rec.iteration, rec.loss, rec.tau
                    );
                }
            }
            Err(e) => {
                failure = Some(Failure::from(e));
                break;
            }
        }
    }
    Ok(Trained {
        theta: trainer.theta().clone(),
        tau: trainer.tau(),
        trace: trainer.trace().to_vec(),
        failure,
    })
}

const TRACE_HEADER: [&str; 4] = ["iteration", "loss", "mean_bound", "tau"];

pub fn train(ctx: &Context, dataset: &Path) -> CmdResult {
    let ds = load_dataset(dataset)?;
    ctx.ensure_out()?;
    let cfg = &ctx.cfg;
    let run = run_training(cfg, &ds.task, &ds.data)?;
    let iterations = run.trace.len();
    write_checkpoint(&ctx.path("checkpoint.bin"), &run.theta, run.tau, iterations)?;
    let header: Vec<String> = TRACE_HEADER.iter().map(|s| s.to_string()).collect();
    write_csv(&ctx.path("loss.csv"), cfg, &header, &trace_rows(&run.trace))?;
    let status = if run.failure.is_some() {
        "non_finite_loss"
    } else {
        "ok"
    };
    write_json(
        &ctx.path("train.json"),
        &json!({
            "config": snapshot_value(cfg),
            "dataset_sha256": ds.sha256,
            "task": to_value(&ds.task),
            "status": status,
            "iterations": iterations,
            "final_tau": run.tau,
            "initial_loss": run.trace.first().map(|r| r.loss),
            "final_loss": run.trace.last().map(|r| r.loss),
            "trace": to_value(&run.trace),
        }),
    )?;
    if let Some(f) = run.failure {
        return Err(Failure {
            code: f.code,
            message: format!("{}; checkpoint holds the last finite parameters", f.message),
        });
    }
    println!(
        "trained {iterations} iterations: loss {:.4} -> {:.4}, tau {:.4}",
        run.trace.first().map_or(f64::NAN, |r| r.loss),
        run.trace.last().map_or(f64::NAN, |r| r.loss),
        run.tau
    );
    Ok(())
}

fn metric_columns(v_o: usize, v_p: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "object_mean_recall",
        "predicate_mean_recall",
        "combined_mean_recall",
        "accuracy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..v_o).map(|k| format!("object_recall_{k}")));
    h.extend((0..v_p).map(|k| format!("predicate_recall_{k}")));
    h
}

fn metric_cells(m: &Metrics) -> Vec<String> {
    let mut row = vec![
        fmt_f64(m.object_mean_recall),
        fmt_f64(m.predicate_mean_recall),
        fmt_f64(m.combined_mean_recall),
        fmt_f64(m.accuracy),
    ];
    row.extend(m.object_recall.iter().map(|x| fmt_opt(*x)));
    row.extend(m.predicate_recall.iter().map(|x| fmt_opt(*x)));
    row
}

fn evaluation_value(ev: &Evaluation) -> Value {
    json!({
        "posterior": to_value(&ev.posterior),
        "variational": to_value(&ev.variational),
        "loss": ev.loss,
        "mean_bound": ev.mean_bound,
        "bound_stderr": ev.bound_stderr,
        "nodes": ev.nodes,
    })
}

pub fn eval(ctx: &Context, dataset: &Path, checkpoint: Option<&Path>) -> CmdResult {
    let ds = load_dataset(dataset)?;
    let ckpt_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.path("checkpoint.bin"));
    let ckpt_bytes = fs::read(&ckpt_path).map_err(|e| {
        Failure::usage(format!(
            "cannot read checkpoint {}: {e}",
            ckpt_path.display()
        ))
    })?;
    let ckpt = Checkpoint::read(ckpt_bytes.as_slice())?;
    let d = ds.data[0].feature_dim();
    ckpt.theta.validate(d, ds.task.v_o, ds.task.v_p)?;
    ctx.ensure_out()?;
    let cfg = &ctx.cfg;
    let tau = ckpt.scalar("tau").unwrap_or(cfg.tau0);
    let inf = InferenceConfig {
        tau,
        ..cfg.inference()
    };
    let ev = evaluate(
        &ds.data,
        &ckpt.theta,
        ds.task.v_o,
        ds.task.v_p,
        &inf,
        cfg.seed,
    )?;

    let mut header = vec!["readout".to_string()];
    header.extend(metric_columns(ds.task.v_o, ds.task.v_p));
    header.extend(["loss", "mean_bound", "bound_stderr", "nodes"].map(String::from));
    let tail = [
        fmt_f64(ev.loss),
        fmt_f64(ev.mean_bound),
        fmt_f64(ev.bound_stderr),
        ev.nodes.to_string(),
    ];
    let rows: Vec<Vec<String>> = [
        ("posterior", &ev.posterior),
        ("variational", &ev.variational),
    ]
    .iter()
    .map(|(name, m)| {
        let mut row = vec![name.to_string()];
        row.extend(metric_cells(m));
        row.extend(tail.iter().cloned());
        row
    })
    .collect();
    write_csv(&ctx.path("metrics.csv"), cfg, &header, &rows)?;
    let mut value = evaluation_value(&ev);
    if let Value::Object(map) = &mut value {
        map.insert("config".into(), snapshot_value(cfg));
        map.insert("dataset_sha256".into(), json!(ds.sha256));
        map.insert("checkpoint_sha256".into(), json!(sha256_hex(&ckpt_bytes)));
        map.insert("tau".into(), json!(tau));
        map.insert("default_readout".into(), json!(cfg.readout.to_string()));
    }
    write_json(&ctx.path("metrics.json"), &value)?;
    let m = ev.metrics(cfg.readout);
    println!(
        "{} readout: combined mean recall {:.4}, accuracy {:.4}, mean bound {:.4}",
        cfg.readout, m.combined_mean_recall, m.accuracy, ev.mean_bound
    );
    Ok(())
}

pub fn ablate_samples(ctx: &Context, samples: Option<&[usize]>) -> CmdResult {
    let cfg = &ctx.cfg;
    let list: Vec<usize> = samples
        .map(<[usize]>::to_vec)
        .unwrap_or_else(|| cfg.ablate_samples.clone());
    if list.is_empty() || list.contains(&0) {
        return Err(Failure::usage("sample list must contain positive counts"));
    }
    if cfg.holdout_count == 0 {
        return Err(Failure::usage("ablate-samples needs holdout_count >= 1"));
    }
    ctx.ensure_out()?;
    let task = cfg.task(cfg.seed);
    let data = synth_dataset(&task, cfg.count)?;
    let train_bytes = dataset_bytes(&task, &data)?;
    let hold_task = cfg.task(cfg.seed.wrapping_add(1));
    let hold = synth_dataset(&hold_task, cfg.holdout_count)?;
    let hold_bytes = dataset_bytes(&hold_task, &hold)?;
    fs::write(ctx.path("dataset.jsonl"), &train_bytes)?;
    fs::write(ctx.path("holdout.jsonl"), &hold_bytes)?;
    let (train_hash, hold_hash) = (sha256_hex(&train_bytes), sha256_hex(&hold_bytes));

    let run = run_training(cfg, &task, &data)?;
    if let Some(f) = run.failure {
        return Err(f);
    }
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &s in &list {
        let inf = InferenceConfig {
            samples: s,
            tau: run.tau,
            ..cfg.inference()
        };
        let ev = evaluate(&hold, &run.theta, task.v_o, task.v_p, &inf, cfg.seed)?;
        let mut row = vec![
            s.to_string(),
            train_hash.clone(),
            hold_hash.clone(),
            fmt_f64(ev.mean_bound),
            fmt_f64(ev.bound_stderr),
            fmt_f64(ev.loss),
        ];
        row.extend(metric_cells(&ev.posterior)[..4].iter().cloned());
        row.extend(metric_cells(&ev.variational)[..4].iter().cloned());
        rows.push(row);
        let mut rec = evaluation_value(&ev);
        if let Value::Object(map) = &mut rec {
            map.insert("samples".into(), json!(s));
            map.insert("dataset_sha256".into(), json!(train_hash));
            map.insert("holdout_sha256".into(), json!(hold_hash));
        }
        records.push(rec);
    }
    let mut header: Vec<String> = [
        "samples",
        "dataset_sha256",
        "holdout_sha256",
        "bound_mean",
        "bound_stderr",
        "loss",
    ]
    .map(String::from)
    .to_vec();
    for readout in ["posterior", "variational"] {
        for col in &metric_columns(0, 0) {
            header.push(format!("{readout}_{col}"));
        }
    }
    write_csv(&ctx.path("ablation.csv"), cfg, &header, &rows)?;
    write_json(
        &ctx.path("ablation.json"),
        &json!({
            "config": snapshot_value(cfg),
            "final_tau": run.tau,
            "iterations": run.trace.len(),
            "rows": records,
        }),
    )?;
    for r in &rows {
        println!(
            "s={} bound {} (se {}) combined mean recall {}",
            r[0], r[3], r[4], r[8]
        );
    }
    Ok(())
}

pub fn audit(ctx: &Context) -> CmdResult {
    let perturb = match std::env::var(PERTURB_ENV) {
        Ok(v) if !v.trim().is_empty() => Some(
            v.trim()
                .parse::<f64>()
                .map_err(|e| Failure::usage(format!("{PERTURB_ENV}={v:?}: {e}")))?,
        ),
        _ => None,
    };
    if let Some(c) = perturb {
        audit_hooks::set_density_max_coefficient(c);
    }
    let outcomes = audit::run_all(ctx.cfg.seed);
    audit_hooks::reset();
    ctx.ensure_out()?;
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    let header: Vec<String> = ["check", "passed", "detail"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| vec![o.name.to_string(), o.passed.to_string(), o.detail.clone()])
        .collect();
    write_csv(&ctx.path("audit.csv"), &ctx.cfg, &header, &rows)?;
    write_json(
        &ctx.path("audit.json"),
        &json!({
            "config": snapshot_value(&ctx.cfg),
            "perturbation": perturb,
            "checks": to_value(&outcomes),
        }),
    )?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(Failure {
            code: EXIT_AUDIT,
            message: format!("{failed} of {} checks failed", outcomes.len()),
        });
    }
    println!("all {} checks passed", outcomes.len());
    Ok(())
}

fn read_json(path: &Path) -> Option<Value> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn num(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map(|x| format!("{x:.4}")).unwrap_or_default(),
        Value::Null => "NA".into(),
        other => other.to_string(),
    }
}

pub fn report(ctx: &Context) -> CmdResult {
    let mut md = String::from("# iwsl run report\n");
    let mut sections = 0;
    if let Some(t) = read_json(&ctx.path("train.json")) {
        sections += 1;
        md.push_str("\n## Training\n\n");
        md.push_str(&format!(
            "- status: {}\n- iterations: {}\n- loss: {} -> {}\n- final temperature: {}\n- dataset sha256: {}\n",
            t["status"].as_str().unwrap_or("?"),
            t["iterations"],
            num(&t["initial_loss"]),
            num(&t["final_loss"]),
            num(&t["final_tau"]),
            t["dataset_sha256"].as_str().unwrap_or("?"),
        ));
    }
    if let Some(m) = read_json(&ctx.path("metrics.json")) {
        sections += 1;
        md.push_str("\n## Evaluation\n\n| readout | objects mR | predicates mR | combined mR | accuracy |\n|---|---|---|---|---|\n");
        for readout in ["posterior", "variational"] {
            let r = &m[readout];
            md.push_str(&format!(
                "| {readout} | {} | {} | {} | {} |\n",
                num(&r["object_mean_recall"]),
                num(&r["predicate_mean_recall"]),
                num(&r["combined_mean_recall"]),
                num(&r["accuracy"])
            ));
        }
        md.push_str(&format!(
            "\nmean bound {} (se {}), loss {}\n",
            num(&m["mean_bound"]),
            num(&m["bound_stderr"]),
            num(&m["loss"])
        ));
    }
    if let Some(a) = read_json(&ctx.path("ablation.json")) {
        sections += 1;
        md.push_str("\n## Number of samples\n\n| s | bound | se | combined mR (posterior) | combined mR (variational) |\n|---|---|---|---|---|\n");
        for row in a["rows"].as_array().into_iter().flatten() {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                row["samples"],
                num(&row["mean_bound"]),
                num(&row["bound_stderr"]),
                num(&row["posterior"]["combined_mean_recall"]),
                num(&row["variational"]["combined_mean_recall"])
            ));
        }
    }
    if let Some(a) = read_json(&ctx.path("audit.json")) {
        sections += 1;
        md.push_str("\n## Audit\n\n");
        for c in a["checks"].as_array().into_iter().flatten() {
            md.push_str(&format!(
                "- [{}] {}: {}\n",
                if c["passed"].as_bool() == Some(true) {
                    "pass"
                } else {
                    "FAIL"
                },
                c["name"].as_str().unwrap_or("?"),
                c["detail"].as_str().unwrap_or("")
            ));
        }
    }
    if sections == 0 {
        return Err(Failure::usage(format!(
            "no run outputs found in {}",
            ctx.out.display()
        )));
    }
    fs::write(ctx.path("report.md"), &md)?;
    std::io::stdout().write_all(md.as_bytes())?;
    Ok(())
}

/// Resolves the output directory: flag, then environment, then configuration.
pub fn resolve_out(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.out_dir.clone(),
    }
}
