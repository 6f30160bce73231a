use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};

use crate::datatext::{regression_tsv, synth_char_splits, synth_regression_splits, write_splits};
use crate::error::Error;
use crate::sparsity::{model_masks, prune_model, sparsity_report, CompressedModel};
use crate::trainer::{train as run_training, Checkpoint, RunStatus, TaskData, TrainConfig};
use crate::varlayers::{NoiseMode, Task};

use super::manifest::{run_id, RunManifest};
use super::report::{default_label, parse_metrics, render_report, MetricsSeries};
use super::{exit, CliError, RunArgs};

type CliResult = std::result::Result<i32, CliError>;

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn load_config(run: &RunArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &run.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    for kv in &run.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(p) = &run.init_from {
        cfg.init_from = Some(p.display().to_string());
    }
    if let Some(t) = run.threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn metric_name(task: Task) -> &'static str {
    match task {
        Task::CharLm => "bpc",
        Task::Sentiment => "mse",
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e).into())
}

pub(super) fn train(run: &RunArgs, out: &Path) -> CliResult {
    let cfg = load_config(run)?;
    let started = now();
    let data = TaskData::load(&cfg).map_err(CliError::data)?;
    let init = match &cfg.init_from {
        Some(p) => Some(Checkpoint::load(p).map_err(CliError::data)?.model),
        None => None,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config_path = out.join("config.txt");
    let metrics_path = out.join("metrics.jsonl");
    let ckpt_path = out.join("checkpoint.svdx");
    let best_path = out.join("best.svdx");
    write_file(&config_path, &cfg.to_text())?;

    let file = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut metrics = BufWriter::new(file);
    let metric = metric_name(cfg.task);
    let mut hook = |rec: &crate::trainer::MetricsRecord, ckpt: &Checkpoint| {
        writeln!(metrics, "{}", rec.to_line())
            .and_then(|_| metrics.flush())
            .map_err(|e| Error::io(&metrics_path, e))?;
        ckpt.save(&ckpt_path)?;
        let sparsity = match (rec.sparsity_x, rec.sparsity_h) {
            (Some(x), Some(h)) => format!("  sparsity x {x:.2} h {h:.2}"),
            _ => String::new(),
        };
        eprintln!(
            "epoch {:>3}  valid {metric} {:.4}  test {metric} {:.4}{sparsity}",
            rec.epoch, rec.valid_quality, rec.test_quality
        );
        Ok(())
    };
    let outcome = run_training(&cfg, &data, init.as_ref(), &mut hook)?;

    let mut artifacts = vec![config_path, metrics_path, ckpt_path];
    if let Some(best) = &outcome.best {
        best.save(&best_path)?;
        artifacts.push(best_path);
    }
    let (status, message, code) = match &outcome.status {
        RunStatus::Completed => ("completed", None, exit::OK),
        RunStatus::Diverged { epoch, message } => {
            eprintln!("diverged in epoch {epoch}: {message}; kept the checkpoint from epoch {}", outcome.last.meta.epoch);
            ("diverged", Some(format!("epoch {epoch}: {message}")), exit::DIVERGED)
        }
    };
    let config = cfg.to_text();
    let manifest = RunManifest {
        run_id: run_id(&config, &started),
        config,
        started,
        finished: now(),
        status: status.into(),
        message,
        final_metrics: outcome.metrics.last().cloned(),
        artifacts,
    };
    manifest.write(&out.join("manifest.json"))?;
    Ok(code)
}

/// The checkpoint plus the data its run was trained on (with overrides applied).
fn checkpoint_and_data(path: &Path, overrides: &[String]) -> Result<(Checkpoint, TrainConfig, TaskData), CliError> {
    let ckpt = Checkpoint::load(path).map_err(CliError::data)?;
    let mut cfg = TrainConfig::parse(&ckpt.meta.config)?;
    for kv in overrides {
        cfg.apply_override(kv)?;
    }
    let data = TaskData::load(&cfg).map_err(CliError::data)?;
    if data.vocab() != &ckpt.meta.vocab {
        return Err(CliError::data(Error::Data(
            "the data's vocabulary differs from the checkpoint's".into(),
        )));
    }
    Ok((ckpt, cfg, data))
}

fn require_sparse(ckpt: &Checkpoint) -> Result<(), CliError> {
    if ckpt.meta.mode != NoiseMode::SparseVd {
        return Err(Error::Invalid(format!(
            "checkpoint was trained with mode {}; its log-variances were never fitted, so log alpha carries no pruning signal",
            ckpt.meta.mode
        ))
        .into());
    }
    Ok(())
}

pub(super) fn eval(path: &Path, split: &str, threshold: Option<f64>, overrides: &[String]) -> CliResult {
    let (ckpt, cfg, data) = checkpoint_and_data(path, overrides)?;
    let metric = metric_name(cfg.task);
    let q = data
        .quality(&ckpt.model, split, cfg.seq_len, cfg.batch_size)
        .map_err(CliError::data)?;
    println!("{split} {metric} {q:.6}");
    if let Some(t) = threshold {
        require_sparse(&ckpt)?;
        let pruned = prune_model(&ckpt.model, t)?;
        let pq = data.quality(&pruned, split, cfg.seq_len, cfg.batch_size)?;
        println!("{split} {metric} pruned {pq:.6} (delta {:+.6})", pq - q);
    }
    Ok(exit::OK)
}

pub(super) fn prune(path: &Path, threshold: f64, out: Option<&Path>, no_eval: bool, overrides: &[String]) -> CliResult {
    let ckpt = Checkpoint::load(path).map_err(CliError::data)?;
    require_sparse(&ckpt)?;
    let masks = model_masks(&ckpt.model, threshold)?;
    let report = sparsity_report(&masks)?;
    let out: PathBuf = match out {
        Some(p) => p.to_path_buf(),
        None => path.with_extension("sparse.svdx"),
    };
    let compressed = CompressedModel::from_model(&ckpt.model, threshold)?;
    compressed.to_container(threshold).write(&out)?;
    let (nnz, total) = masks
        .iter()
        .fold((0, 0), |(a, b), (_, m)| (a + m.nnz(), b + m.total()));
    let label = if report.y.is_some() { "x \u{2013} h \u{2013} y" } else { "x \u{2013} h" };
    println!("sparsity ({label}): {report}");
    println!("kept {nnz} of {total} weights at log alpha <= {threshold}");
    for (name, m) in &masks {
        println!("  {name:<24} {:>8} / {:<8} {:6.2}% zero", m.nnz(), m.total(), m.sparsity());
    }
    let size = std::fs::metadata(&out).map_err(|e| Error::io(&out, e))?.len();
    println!("wrote {} ({size} bytes)", out.display());
    if !no_eval {
        let (ckpt, cfg, data) = checkpoint_and_data(path, overrides)?;
        let metric = metric_name(cfg.task);
        let q = data.quality(&ckpt.model, "test", cfg.seq_len, cfg.batch_size)?;
        let pq = data.quality(&prune_model(&ckpt.model, threshold)?, "test", cfg.seq_len, cfg.batch_size)?;
        println!("test {metric}: unpruned {q:.6}, pruned {pq:.6} (delta {:+.6})", pq - q);
    }
    Ok(exit::OK)
}

pub(super) fn report(files: &[PathBuf], labels: &[String], out: Option<&Path>) -> CliResult {
    if !labels.is_empty() && labels.len() != files.len() {
        return Err(Error::Config(format!("{} labels for {} metrics files", labels.len(), files.len())).into());
    }
    let mut series = Vec::new();
    for (i, f) in files.iter().enumerate() {
        let text = std::fs::read_to_string(f).map_err(|e| CliError::data(Error::io(f, e)))?;
        let records = parse_metrics(&text, &f.display().to_string())?;
        let label = labels.get(i).cloned().unwrap_or_else(|| default_label(f));
        series.push(MetricsSeries { label, records });
    }
    let (csv, table) = render_report(&series)?;
    match out {
        Some(p) => write_file(p, &csv)?,
        None => println!("{csv}"),
    }
    print!("{table}");
    Ok(exit::OK)
}

pub(super) fn synth(run: &RunArgs, prefix: &str) -> CliResult {
    let cfg = load_config(run)?;
    let paths = match cfg.task {
        Task::Sentiment => {
            let splits = synth_regression_splits(cfg.synth_seed, cfg.synth_vocab, cfg.seq_len)?;
            let bodies = splits.map(|s| regression_tsv(&s));
            write_splits(prefix, "tsv", &bodies)?
        }
        Task::CharLm => write_splits(prefix, "txt", &synth_char_splits(cfg.synth_seed, cfg.synth_bytes))?,
    };
    for p in paths {
        println!("{p}");
    }
    Ok(exit::OK)
}
