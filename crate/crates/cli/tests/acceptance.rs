//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use iwsl::bound::{estimate, estimate_categorical_exact, value_and_grad};
use iwsl::emd::{maximize_observed, EmdConfig};
use iwsl::graph::{synth_dataset, NodeRef, TaskConfig};
use iwsl::inference::{readout, InferenceConfig, NodeInference, NodePosterior, Readout};
use iwsl::learning::grad_theta;
use iwsl::nn::ThetaParams;
use iwsl::rng::{self, StreamRng};
use iwsl::sampler::{reparameterize, sample_gumbel, DensityMode, GumbelNoise, SimplexVector};
use iwsl::scores::{joint_log_score, marginal_score_explicit, Assignment, PotentialTables};
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

// Test-local reference arithmetic, kept separate from the library's.

fn lse(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let z = lse(x);
    x.iter().map(|v| (v - z).exp()).collect()
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn rand_psi(r: &mut StreamRng, v: usize) -> Vec<f64> {
    (0..v).map(|_| r.gen_range(-3.0..3.0)).collect()
}

fn rand_pi(r: &mut StreamRng, v: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..v).map(|_| r.gen_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lib<T>(r: iwsl::Result<T>) -> Result<T, String> {
    r.map_err(|e| format!("library error: {e}"))
}

fn elbo_special_case() -> Outcome {
    let mut r = rng::stream(101, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let v = r.gen_range(2..=10);
        let psi = rand_psi(&mut r, v);
        let pi = rand_pi(&mut r, v);
        let tau = r.gen_range(0.2..2.0);
        let noise = sample_gumbel(&mut r, v);
        // relaxed sample and weight from scratch
        let logits: Vec<f64> = pi
            .iter()
            .zip(noise.iter())
            .map(|(p, s)| (p.ln() + s) / tau)
            .collect();
        let z = softmax(&logits);
        let pmax = pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = pi.iter().map(|p| p - pmax).collect();
        let log_q = pi.iter().zip(&z).map(|(p, z)| p * z).sum::<f64>() - pmax - lse(&shifted);
        let elbo = psi.iter().zip(&z).map(|(p, z)| p * z).sum::<f64>() - log_q;
        let est = lib(estimate(&psi, &pi, &[noise], tau, DensityMode::Affine))?;
        if est.value != est.log_weights[0] {
            return Err(format!(
                "L_1 {} differs from its log weight {}",
                est.value, est.log_weights[0]
            ));
        }
        worst = worst.max((est.value - elbo).abs() / elbo.abs().max(1.0));
    }
    ensure(
        worst <= 1e-13,
        format!("max |L_1 - elbo| = {worst:.2e} over 200 draws"),
    )
}

fn bound_monotone_in_samples() -> Outcome {
    let mut r = rng::stream(102, &[]);
    let sizes = [1usize, 5, 20, 50];
    let v = 10;
    let mut values = vec![Vec::with_capacity(1000); sizes.len()];
    for _ in 0..1000 {
        let psi = rand_psi(&mut r, v);
        let pi = rand_pi(&mut r, v);
        let noises: Vec<GumbelNoise> = (0..50).map(|_| sample_gumbel(&mut r, v)).collect();
        for (k, &s) in sizes.iter().enumerate() {
            values[k].push(lib(estimate(&psi, &pi, &noises[..s], 1.0, DensityMode::Affine))?.value);
        }
    }
    let means: Vec<f64> = values.iter().map(|x| mean_se(x).0).collect();
    let mut detail = Vec::new();
    let mut ok = true;
    for k in 1..sizes.len() {
        let diff: Vec<f64> = values[k]
            .iter()
            .zip(&values[k - 1])
            .map(|(a, b)| a - b)
            .collect();
        let (d, se) = mean_se(&diff);
        ok &= d >= -se;
        detail.push(format!(
            "L_{}-L_{} = {d:.4} (se {se:.4})",
            sizes[k],
            sizes[k - 1]
        ));
    }
    ensure(
        ok,
        format!(
            "means {:?}; {}",
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
            detail.join(", ")
        ),
    )
}

fn zero_variance_identity() -> Outcome {
    let mut r = rng::stream(103, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = r.gen_range(2..=10);
        let psi = rand_psi(&mut r, v);
        let pi = softmax(&psi);
        let target = lse(&psi);
        for s in [1, 5, 20, 50] {
            for _ in 0..10 {
                let est = lib(estimate_categorical_exact(&psi, &pi, &mut r, s))?;
                for w in est.log_weights.iter().chain([&est.value]) {
                    worst = worst.max((w - target).abs());
                }
            }
        }
    }
    ensure(
        worst <= 1e-12,
        format!("max |L_s - logsumexp| = {worst:.2e} (every weight and estimate)"),
    )
}

fn jensen_upper_bound() -> Outcome {
    let mut r = rng::stream(104, &[]);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let v = r.gen_range(2..=10);
        let psi = rand_psi(&mut r, v);
        let pi = rand_pi(&mut r, v);
        let s = r.gen_range(1..=20);
        let draws = (0..300)
            .map(|_| estimate_categorical_exact(&psi, &pi, &mut r, s).map(|e| e.value))
            .collect::<iwsl::Result<Vec<_>>>();
        let (mean, se) = mean_se(&lib(draws)?);
        worst = worst.max((mean - lse(&psi)) / se.max(1e-300));
    }
    ensure(
        worst <= 3.0,
        format!("max (mean L_s - logsumexp)/se = {worst:.3} over 100 psi"),
    )
}

fn emd_correctness() -> Outcome {
    let mut r = rng::stream(105, &[]);
    let cfg = EmdConfig {
        max_iters: 500,
        ..EmdConfig::default()
    };
    let (mut worst_l1, mut worst_sum, mut negative, mut most_iters) = (0.0f64, 0.0f64, false, 0);
    for _ in 0..50 {
        let v = r.gen_range(2..=10);
        let a = rand_psi(&mut r, v);
        let objective = |pi: &[f64]| -> iwsl::Result<(f64, Vec<f64>)> {
            let value = pi
                .iter()
                .zip(&a)
                .map(|(p, ai)| ai * p - if *p > 0.0 { p * p.ln() } else { 0.0 })
                .sum();
            Ok((
                value,
                pi.iter().zip(&a).map(|(p, ai)| ai - p.ln() - 1.0).collect(),
            ))
        };
        let out = lib(maximize_observed(
            objective,
            &SimplexVector::uniform(v),
            &cfg,
            |p| {
                negative |= p.iter().any(|&x| x < 0.0);
                worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
            },
        ))?;
        most_iters = most_iters.max(out.iters);
        let target = softmax(&a);
        worst_l1 = worst_l1.max(out.pi.iter().zip(&target).map(|(x, y)| (x - y).abs()).sum());
    }
    ensure(
        worst_l1 < 1e-3 && most_iters <= 500 && !negative && worst_sum <= 1e-12,
        format!("max L1 = {worst_l1:.2e}, max iters = {most_iters}, max |sum-1| = {worst_sum:.1e}, negative = {negative}"),
    )
}

const H: f64 = 1e-6;
const FD_TOL: f64 = 1e-4;
// absolute round-off of a central difference at h = 1e-6 is ~1e-10
const FD_FLOOR: f64 = 1e-4;

fn gradient_fidelity() -> Outcome {
    let mut r = rng::stream(106, &[]);
    let mut worst_pi: f64 = 0.0;
    for _ in 0..100 {
        let v = r.gen_range(2..=10);
        let psi = rand_psi(&mut r, v);
        let pi = rand_pi(&mut r, v);
        let tau = r.gen_range(0.3..1.5);
        let noises: Vec<GumbelNoise> = (0..r.gen_range(1..=20))
            .map(|_| sample_gumbel(&mut r, v))
            .collect();
        let (_, g) = lib(value_and_grad(&psi, &pi, &noises, tau, DensityMode::Affine))?;
        for k in 0..v {
            let mut p = pi.clone();
            p[k] += H;
            let fp = lib(estimate(&psi, &p, &noises, tau, DensityMode::Affine))?.value;
            p[k] -= 2.0 * H;
            let fm = lib(estimate(&psi, &p, &noises, tau, DensityMode::Affine))?.value;
            worst_pi = worst_pi.max(rel_err(g[k], (fp - fm) / (2.0 * H), FD_FLOOR));
        }
    }
    let task = TaskConfig {
        d: 3,
        m_range: (2, 3),
        n_range: (1, 2),
        pair_density: 0.5,
        seed: 106,
        ..TaskConfig::default()
    };
    let inf = InferenceConfig {
        samples: 4,
        emd: EmdConfig {
            max_iters: 4,
            ..EmdConfig::default()
        },
        ..InferenceConfig::default()
    };
    let mut worst_theta: f64 = 0.0;
    for inst in lib(synth_dataset(&task, 10))? {
        let mut theta = lib(ThetaParams::init(3, task.v_o, task.v_p, &[4], &mut r))?;
        let analytic = lib(grad_theta(&inst, &theta, &inf, 3, &[]))?
            .grads
            .flatten();
        let base = theta.flat_params();
        let mut p = base.clone();
        for i in 0..base.len() {
            p[i] = base[i] + H;
            lib(theta.set_flat_params(&p))?;
            let fp = lib(grad_theta(&inst, &theta, &inf, 3, &[]))?.loss;
            p[i] = base[i] - H;
            lib(theta.set_flat_params(&p))?;
            let fm = lib(grad_theta(&inst, &theta, &inf, 3, &[]))?.loss;
            p[i] = base[i];
            worst_theta = worst_theta.max(rel_err(analytic[i], (fp - fm) / (2.0 * H), FD_FLOOR));
        }
    }
    ensure(
        worst_pi <= FD_TOL && worst_theta <= FD_TOL,
        format!("grad_pi max rel err {worst_pi:.2e} (100 instances), grad_theta {worst_theta:.2e} (10 instances)"),
    )
}

fn elimination_vs_enumeration() -> Outcome {
    let mut r = rng::stream(107, &[]);
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let task = TaskConfig {
            d: 1,
            m_range: (2, 4),
            n_range: (1, 3),
            pair_density: 0.6,
            seed: 1000 + case,
            ..TaskConfig::default()
        };
        let g = lib(synth_dataset(&task, 1))?.remove(0).graph;
        let (v_o, v_p, v_g) = (r.gen_range(2..=4), r.gen_range(2..=4), r.gen_range(1..=3));
        let tables = PotentialTables::random(&g, v_o, v_p, v_g, 1.5, &mut r);
        let cards = tables.cardinalities(&g);
        // brute-force marginals directly from the joint score
        let mut scores = Vec::new();
        let mut labelings = Vec::new();
        let mut idx = vec![0usize; cards.len()];
        loop {
            scores.push(lib(joint_log_score(
                &tables,
                &g,
                &Assignment::from_flat(&g, &idx),
            ))?);
            labelings.push(idx.clone());
            let mut k = cards.len();
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < cards[k] {
                    break;
                }
                idx[k] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
        let joint = softmax(&scores);
        let nodes: Vec<NodeRef> = (0..g.num_objects())
            .map(NodeRef::Object)
            .chain((0..g.num_predicates()).map(NodeRef::Predicate))
            .chain([NodeRef::Global])
            .collect();
        for (k, node) in nodes.into_iter().enumerate() {
            let mut brute = vec![0.0; cards[k]];
            for (p, lab) in joint.iter().zip(&labelings) {
                brute[lab[k]] += p;
            }
            let ve = softmax(&lib(marginal_score_explicit(&tables, &g, node))?);
            for (a, b) in ve.iter().zip(&brute) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure(
        worst <= 1e-9,
        format!("max marginal difference = {worst:.2e} over 20 graphs"),
    )
}

fn gumbel_max_exactness() -> Outcome {
    let mut r = rng::stream(108, &[]);
    let n = 10_000;
    let mut worst: f64 = 0.0;
    let mut invariant = true;
    for pi in [vec![0.1, 0.2, 0.3, 0.4], rand_pi(&mut r, 7)] {
        let mut counts = vec![0usize; pi.len()];
        for _ in 0..n {
            let s = sample_gumbel(&mut r, pi.len());
            let labels = [1.0, 0.1, 0.01]
                .iter()
                .map(|&tau| reparameterize(&pi, &s, tau).map(|z| argmax(&z)))
                .collect::<iwsl::Result<Vec<_>>>();
            let labels = lib(labels)?;
            invariant &= labels.iter().all(|&l| l == labels[0]);
            counts[labels[0]] += 1;
        }
        for (&p, &c) in pi.iter().zip(&counts) {
            worst = worst.max((c as f64 - n as f64 * p).abs() / (n as f64 * p * (1.0 - p)).sqrt());
        }
    }
    ensure(
        invariant && worst <= 3.0,
        format!("max |count - n pi|/sigma = {worst:.3}, argmax tau-invariant = {invariant}"),
    )
}

fn shift_cancellation() -> Outcome {
    let mut r = rng::stream(109, &[]);
    let mut labels_equal = true;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let v = r.gen_range(2..=10);
        let psi = rand_psi(&mut r, v);
        let pi_star = SimplexVector::uniform(v);
        let reads: Vec<NodePosterior> = [-10.0, 0.0, 10.0]
            .iter()
            .map(|&bound| {
                NodePosterior::from_inference(
                    &psi,
                    NodeInference {
                        pi_star: pi_star.clone(),
                        bound,
                        iters: 0,
                    },
                )
            })
            .collect();
        let reference = readout(&reads[1], Readout::Posterior);
        labels_equal &= reference == argmax(&psi);
        let expect: Vec<f64> = softmax(&psi);
        for node in &reads {
            labels_equal &= readout(node, Readout::Posterior) == reference;
            for (lp, p) in node.log_posterior.iter().zip(&expect) {
                worst = worst.max((lp.exp() - p).abs());
            }
        }
    }
    ensure(
        labels_equal && worst <= 1e-12,
        format!("readout identical across L* in (-10, 0, 10): {labels_equal}; max posterior difference {worst:.1e}"),
    )
}

// Criteria driven through the built binary.

const ACCEPT_CFG: &str = "count = 500\nholdout_count = 200\nclass_separation = 3\nsamples_learn = 10\niters = 2000\nablate_samples = 10,30,50\n";
const SMALL_CFG: &str = "count = 40\nholdout_count = 15\nd = 6\niters = 30\nsamples_infer = 8\nsamples_learn = 4\nemd_iters = 20\nhidden = 8\nablate_samples = 5,10\n";

fn iwsl(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_iwsl"))
        .current_dir(dir)
        .env_remove("IWSL_OUT")
        .env_remove("IWSL_AUDIT_PERTURB")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "iwsl {} failed ({}): {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn tmpdir(cfg: &str) -> Result<tempfile::TempDir, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    fs::write(dir.path().join("run.cfg"), cfg).map_err(|e| e.to_string())?;
    Ok(dir)
}

fn end_to_end_learning() -> Outcome {
    let dir = tmpdir(ACCEPT_CFG)?;
    let p = dir.path();
    let base = ["--config", "run.cfg", "--out", "o", "--workers", "1"];
    let with = |cmd: &str, extra: &[&str]| -> Vec<String> {
        std::iter::once(cmd)
            .chain(base)
            .chain(extra.iter().copied())
            .map(String::from)
            .collect()
    };
    for args in [
        with("synth", &[]),
        with("train", &["--dataset", "o/dataset.jsonl"]),
        with("eval", &["--dataset", "o/holdout.jsonl"]),
    ] {
        iwsl(p, &args.iter().map(String::as_str).collect::<Vec<_>>())?;
    }
    let metrics = json(&p.join("o/metrics.json"))?;
    let recall = metrics["posterior"]["combined_mean_recall"]
        .as_f64()
        .ok_or("missing recall")?;
    let train = json(&p.join("o/train.json"))?;
    let losses: Vec<f64> = train["trace"]
        .as_array()
        .ok_or("missing trace")?
        .iter()
        .filter_map(|r| r["loss"].as_f64())
        .collect();
    if losses.len() != 2000 {
        return Err(format!("trace has {} records", losses.len()));
    }
    let first = mean_se(&losses[..100]).0;
    let last = mean_se(&losses[losses.len() - 100..]).0;
    // least-squares slope of loss on iteration
    let n = losses.len() as f64;
    let tbar = (n - 1.0) / 2.0;
    let lbar = losses.iter().sum::<f64>() / n;
    let slope = losses
        .iter()
        .enumerate()
        .map(|(t, l)| (t as f64 - tbar) * (l - lbar))
        .sum::<f64>()
        / losses
            .iter()
            .enumerate()
            .map(|(t, _)| (t as f64 - tbar).powi(2))
            .sum::<f64>();
    ensure(
        recall >= 0.9 && last < first && slope < 0.0,
        format!(
            "held-out mean per-class recall {recall:.4} (variational {:.4}); loss first-100 mean {first:.3}, last-100 mean {last:.3}, slope {slope:.2e}",
            metrics["variational"]["combined_mean_recall"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn sample_ablation() -> Outcome {
    let dir = tmpdir(ACCEPT_CFG)?;
    iwsl(
        dir.path(),
        &[
            "ablate-samples",
            "--config",
            "run.cfg",
            "--out",
            "o",
            "--samples",
            "10,30,50",
        ],
    )?;
    let table = json(&dir.path().join("o/ablation.json"))?;
    let rows = table["rows"].as_array().ok_or("missing rows")?;
    let csv = fs::read_to_string(dir.path().join("o/ablation.csv")).map_err(|e| e.to_string())?;
    let csv_rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    if rows.len() != 3 || csv_rows != 4 {
        return Err(format!(
            "expected 3 rows, got {} json / {} csv",
            rows.len(),
            csv_rows.saturating_sub(1)
        ));
    }
    let mut bounds = Vec::new();
    let mut complete = true;
    for (row, s) in rows.iter().zip([10, 30, 50]) {
        complete &= row["samples"].as_u64() == Some(s);
        complete &= row["dataset_sha256"] == rows[0]["dataset_sha256"]
            && row["holdout_sha256"] == rows[0]["holdout_sha256"];
        for mode in ["posterior", "variational"] {
            for key in [
                "object_mean_recall",
                "predicate_mean_recall",
                "combined_mean_recall",
                "accuracy",
            ] {
                complete &= row[mode][key].as_f64().is_some_and(f64::is_finite);
            }
        }
        let b = row["mean_bound"].as_f64().ok_or("missing bound")?;
        let se = row["bound_stderr"].as_f64().ok_or("missing stderr")?;
        complete &= b.is_finite() && se.is_finite();
        bounds.push((b, se));
    }
    let monotone = bounds
        .windows(2)
        .all(|w| w[1].0 >= w[0].0 - w[0].1.max(w[1].1));
    ensure(
        complete && monotone,
        format!(
            "bounds {} ; rows complete = {complete}",
            bounds
                .iter()
                .map(|(b, se)| format!("{b:.4}±{se:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn collect_files(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        out.push((
            path.file_name().unwrap().to_string_lossy().into_owned(),
            bytes,
        ));
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Outcome {
    let dir = tmpdir(SMALL_CFG)?;
    let p = dir.path();
    let runs = [("w1", "1"), ("w4", "4"), ("w4b", "4")];
    for (out, workers) in runs {
        let base = ["--config", "run.cfg", "--out", out, "--workers", workers];
        let ds = format!("{out}/dataset.jsonl");
        let hold = format!("{out}/holdout.jsonl");
        for (cmd, extra) in [
            ("synth", vec![]),
            ("train", vec!["--dataset", ds.as_str()]),
            ("eval", vec!["--dataset", hold.as_str()]),
            ("audit", vec![]),
            ("report", vec![]),
        ] {
            let args: Vec<&str> = std::iter::once(cmd).chain(base).chain(extra).collect();
            iwsl(p, &args)?;
        }
        let abl = format!("{out}_ablate");
        iwsl(
            p,
            &[
                "ablate-samples",
                "--config",
                "run.cfg",
                "--out",
                &abl,
                "--workers",
                workers,
            ],
        )?;
    }
    let mut compared = 0;
    for suffix in ["", "_ablate"] {
        let reference = collect_files(&p.join(format!("w1{suffix}")))?;
        for other in ["w4", "w4b"] {
            let files = collect_files(&p.join(format!("{other}{suffix}")))?;
            if files != reference {
                let names: Vec<_> = reference
                    .iter()
                    .filter(|f| !files.contains(f))
                    .map(|f| f.0.clone())
                    .collect();
                return Err(format!(
                    "{other}{suffix} differs from w1{suffix}: {names:?}"
                ));
            }
            compared += files.len();
        }
    }
    Ok(format!(
        "{compared} output files byte-identical across reruns and --workers 1/4"
    ))
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion {
            name: "ELBO special case",
            budget: secs(1),
            run: elbo_special_case,
        },
        Criterion {
            name: "bound monotone in samples",
            budget: secs(30),
            run: bound_monotone_in_samples,
        },
        Criterion {
            name: "zero-variance identity",
            budget: secs(1),
            run: zero_variance_identity,
        },
        Criterion {
            name: "Jensen upper bound",
            budget: secs(10),
            run: jensen_upper_bound,
        },
        Criterion {
            name: "EMD correctness",
            budget: secs(10),
            run: emd_correctness,
        },
        Criterion {
            name: "gradient fidelity",
            budget: secs(60),
            run: gradient_fidelity,
        },
        Criterion {
            name: "elimination vs enumeration",
            budget: secs(60),
            run: elimination_vs_enumeration,
        },
        Criterion {
            name: "Gumbel-max exactness",
            budget: secs(5),
            run: gumbel_max_exactness,
        },
        Criterion {
            name: "constant-shift cancellation",
            budget: secs(1),
            run: shift_cancellation,
        },
        Criterion {
            name: "end-to-end learning",
            budget: secs(600),
            run: end_to_end_learning,
        },
        Criterion {
            name: "sample-count ablation",
            budget: secs(900),
            run: sample_ablation,
        },
        Criterion {
            name: "determinism",
            budget: secs(60),
            run: determinism,
        },
    ];
    let mut failures = 0;
    for (k, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = (c.run)();
        let took = start.elapsed();
        let (passed, detail) = match result {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(d) => (false, d),
        };
        failures += usize::from(!passed);
        println!(
            "[{}] {}. {}: {} ({:.2}s / {}s)",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            c.name,
            detail,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
