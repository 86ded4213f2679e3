//! Command implementations behind the CLI surface.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use rnf_core::policy::Conditioner;
use rnf_core::rng::Rng64;
use rnf_core::train::{evaluate, EvalMode, Trainer};

use crate::checkpoint::Checkpoint;
use crate::config::{Config, ModeName};
use crate::CliError;

/// Train per config, writing `metrics.csv`, periodic checkpoints and
/// `checkpoint_final.json` under `out_dir`. Deterministic per seed.
pub fn train(config_path: &Path, out_dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let config = Config::load(config_path)?;
    let conditioner = Conditioner::new(config.conditioner_config())
        .map_err(|e| CliError::Usage(format!("config field 'policy': {e}")))?;
    let mut trainer = Trainer::new(conditioner, config.train_config())
        .map_err(|e| CliError::Usage(format!("config field 'train': {e}")))?;
    let mut env = config.make_env();

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(metrics, "step,episode,return,loss_pi,loss_v,entropy_est,skipped_steps")?;

    // Five checkpoints along the way, aligned to rollout boundaries so the
    // chunking is invisible to the run.
    let total = config.train.steps;
    let rollout = config.train.rollout as u64;
    let chunk = ((total / 5).max(1)).div_ceil(rollout) * rollout;
    let mut done = 0u64;
    while done < total {
        let step = chunk.min(total - done);
        trainer
            .run_for(env.as_mut(), step, |m| {
                let _ = writeln!(
                    metrics,
                    "{},{},{},{},{},{},{}",
                    m.step,
                    m.episode,
                    m.last_return,
                    m.loss_pi,
                    m.loss_v,
                    m.entropy_est,
                    m.skipped_steps
                );
            })
            .map_err(|e| CliError::Usage(format!("training failed: {e}")))?;
        done += step;
        if done < total {
            let ckpt = Checkpoint::new(
                &config,
                done,
                &trainer.rng,
                &trainer.policy_store,
                &trainer.value_store,
            );
            ckpt.save(&out_dir.join(format!("checkpoint_{done:08}.json")))?;
        }
    }
    metrics.flush()?;

    let ckpt = Checkpoint::new(
        &config,
        total,
        &trainer.rng,
        &trainer.policy_store,
        &trainer.value_store,
    );
    ckpt.save(&out_dir.join("checkpoint_final.json"))?;

    writeln!(
        out,
        "{}",
        json!({
            "steps": total,
            "episodes": trainer.summary().episodes,
            "skipped_updates": trainer.skipped_updates(),
            "metrics": metrics_path.display().to_string(),
            "checkpoint": out_dir.join("checkpoint_final.json").display().to_string(),
        })
    )?;
    Ok(())
}

/// Rebuild the policy (and its conditioner) from a checkpoint.
pub fn load_policy(ckpt: &Checkpoint) -> Result<(Config, Conditioner, rnf_core::autodiff::ParameterStore), CliError> {
    let config = ckpt.config.clone();
    let conditioner = Conditioner::new(config.conditioner_config())
        .map_err(|e| CliError::Format(format!("checkpoint config: {e}")))?;
    let mut store = conditioner.zeroed_store();
    ckpt.restore_store("policy", &mut store)?;
    Ok((config, conditioner, store))
}

/// Evaluate a checkpointed policy over fresh episodes, acting with the
/// analytic mean or with samples; prints summary statistics as JSON.
pub fn eval(
    checkpoint_path: &Path,
    episodes: Option<usize>,
    mode: Option<ModeName>,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(checkpoint_path)?;
    let (config, conditioner, store) = load_policy(&ckpt)?;
    let mut env = config.make_env();
    let episodes = episodes.unwrap_or(config.eval.episodes);
    let mode_name = mode.unwrap_or(config.eval.mode);
    let seed = seed.unwrap_or(config.seed);
    let report = evaluate(
        &conditioner,
        &store,
        env.as_mut(),
        episodes,
        EvalMode::from(mode_name),
        seed,
    )
    .map_err(|e| CliError::Usage(format!("evaluation failed: {e}")))?;
    writeln!(
        out,
        "{}",
        json!({
            "mode": match mode_name { ModeName::Mean => "mean", ModeName::Sample => "sample" },
            "episodes": episodes,
            "seed": seed,
            "mean": report.mean,
            "std": report.std,
            "min": report.min,
            "max": report.max,
        })
    )?;
    Ok(())
}

/// Export a density slice as CSV: the analytic mean as a comment line, then
/// `a,pdf,component_pdf_flow,component_pdf_alt` rows. The component columns
/// are the weighted contributions, so they sum to the pdf.
pub fn density(
    checkpoint_path: &Path,
    state_csv: &str,
    dim: usize,
    lo: f64,
    hi: f64,
    n: usize,
    out_file: Option<&PathBuf>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(checkpoint_path)?;
    let (_config, conditioner, store) = load_policy(&ckpt)?;

    let state: Vec<f64> = state_csv
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("state entry '{tok}': {e}")))
        })
        .collect::<Result<_, _>>()?;
    let dist = conditioner
        .forward::<f64, _>(&store, &state)
        .map_err(|e| CliError::Usage(format!("state: {e}")))?;
    if dim >= dist.action_dim() {
        return Err(CliError::Usage(format!(
            "dimension {dim} out of range for a {}-dimensional action",
            dist.action_dim()
        )));
    }
    if !(lo < hi) || n < 2 {
        return Err(CliError::Usage("need lo < hi and at least two grid points".into()));
    }

    let mean = dist.mean().map_err(|e| CliError::Usage(format!("mean: {e}")))?;
    let mut text = String::new();
    text.push_str(&format!(
        "# mean ={}\n",
        mean.iter().map(|m| format!(" {m}")).collect::<String>()
    ));
    text.push_str("a,pdf,component_pdf_flow,component_pdf_alt\n");
    let mut action = mean.clone();
    for i in 0..n {
        let a = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        action[dim] = a;
        let (total, parts) = dist
            .log_prob_parts(&action)
            .map_err(|e| CliError::Usage(format!("density: {e}")))?;
        let flow_part = parts[0].exp();
        let alt_part: f64 = parts[1..].iter().map(|p| p.exp()).sum();
        text.push_str(&format!("{a},{},{flow_part},{alt_part}\n", total.exp()));
    }

    match out_file {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn percentile_ms(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Wall-clock latency percentiles for one action decision (conditioner
/// included), for both the sampling path and the analytic-mean path.
/// Inference only: nothing is recorded on a tape.
pub fn bench(checkpoint_path: &Path, calls: usize, out: &mut dyn Write) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(checkpoint_path)?;
    let (config, conditioner, store) = load_policy(&ckpt)?;
    let calls = calls.max(100);
    let state_dim = conditioner.config().state_dim;

    let mut rng = Rng64::seed_from(config.seed ^ 0xbe9c);
    let states: Vec<Vec<f64>> = (0..calls)
        .map(|_| (0..state_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
        .collect();

    let timed = |use_mean: bool, rng: &mut Rng64| -> Result<Vec<f64>, CliError> {
        // Short warmup outside the measurement.
        for state in states.iter().take(10) {
            let dist = conditioner
                .forward::<f64, _>(&store, state)
                .map_err(|e| CliError::Usage(format!("bench: {e}")))?;
            if use_mean {
                let _ = dist.mean();
            } else {
                let _ = dist.sample(rng);
            }
        }
        let mut times = Vec::with_capacity(calls);
        for state in &states {
            let start = Instant::now();
            let dist = conditioner
                .forward::<f64, _>(&store, state)
                .map_err(|e| CliError::Usage(format!("bench: {e}")))?;
            if use_mean {
                std::hint::black_box(dist.mean().ok());
            } else {
                std::hint::black_box(dist.sample(rng));
            }
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        Ok(times)
    };

    let sample_times = timed(false, &mut rng)?;
    let mean_times = timed(true, &mut rng)?;
    writeln!(
        out,
        "{}",
        json!({
            "calls": calls,
            "sample": {
                "p50_ms": percentile_ms(&sample_times, 0.50),
                "p99_ms": percentile_ms(&sample_times, 0.99),
                "max_ms": sample_times[sample_times.len() - 1],
            },
            "mean": {
                "p50_ms": percentile_ms(&mean_times, 0.50),
                "p99_ms": percentile_ms(&mean_times, 0.99),
                "max_ms": mean_times[mean_times.len() - 1],
            },
        })
    )?;
    Ok(())
}
