use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use timelowfer::checkpoint::{load_checkpoint, save_checkpoint};
use timelowfer::cycles::{decomposition_csv_header, decomposition_csv_row};
use timelowfer::data::{parse_date, resample_time, resampled_count, DATE_FORMAT};
use timelowfer::eval::{evaluate as eval_split, export_time_concentration, export_time_relation_heatmap};
use timelowfer::train::PreparedData;
use timelowfer::{
    decompose_date, Dataset, Error, EvalMode, FilterIndex, Model, RankingMetrics, Result, Split, Trainer,
};

use crate::config::{CheckpointPolicy, Overrides, RunConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn filter_for(data: &PreparedData) -> Result<FilterIndex> {
    FilterIndex::build(&[&data.train, &data.valid, &data.test], data.num_relations)
}

#[derive(Debug, Serialize)]
struct SplitMetrics {
    filtered: RankingMetrics,
    raw: RankingMetrics,
}

#[derive(Debug, Serialize)]
struct FinalMetrics {
    epochs_trained: usize,
    selected_epoch: usize,
    checkpoint: Option<String>,
    valid: Option<SplitMetrics>,
    test: Option<SplitMetrics>,
}

fn both_modes(model: &Model, quads: &[timelowfer::Quadruple], filter: &FilterIndex, name: &str) -> Result<Option<SplitMetrics>> {
    if quads.is_empty() {
        return Ok(None);
    }
    Ok(Some(SplitMetrics {
        filtered: eval_split(model, quads, filter, EvalMode::Filtered, name)?,
        raw: eval_split(model, quads, filter, EvalMode::Raw, name)?,
    }))
}

pub fn train(config: Option<&Path>, dataset: Option<PathBuf>, out: Option<PathBuf>, overrides: &Overrides) -> Result<()> {
    let mut run = match config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if dataset.is_some() {
        run.dataset = dataset;
    }
    if out.is_some() {
        run.output = out;
    }
    overrides.apply(&mut run);
    run.validate()?;
    let (dataset_dir, out_dir) = (run.dataset.clone().unwrap_or_default(), run.output.clone().unwrap_or_default());

    let dataset = Dataset::load(&dataset_dir)?;
    let data = PreparedData::new(&dataset, run.train.time_sampling_rate)?;
    let filter = filter_for(&data)?;
    let hashes = dataset.vocab.hashes();

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_file(&out_dir.join(CONFIG_FILE), &run.to_json()?)?;
    let history_path = out_dir.join(HISTORY_FILE);
    let mut history = BufWriter::new(File::create(&history_path).map_err(|e| Error::io(&history_path, e))?);
    let ckpt_root = out_dir.join(CHECKPOINT_DIR);

    let model = data.build_model(&run.train)?;
    let mut trainer = Trainer::new(model, run.train.clone())?;
    let mut best: Option<(f64, usize, Model)> = None;
    let mut stale = 0usize;
    let mut saved: Option<String> = None;

    while trainer.epoch < run.train.epochs {
        let record = trainer.run_epoch(&data.train_rows)?;
        let epoch = record.epoch;
        if epoch % run.eval_interval == 0 && !data.valid.is_empty() {
            let val = eval_split(&trainer.model, &data.valid, &filter, EvalMode::Filtered, "valid")?;
            let mrr = val.mrr;
            trainer.history.epochs.last_mut().expect("epoch recorded").val = Some(val);
            if best.as_ref().is_none_or(|(b, _, _)| mrr > *b) {
                best = Some((mrr, epoch, trainer.model.clone()));
                stale = 0;
                if run.checkpoint == CheckpointPolicy::Best {
                    save_checkpoint(&ckpt_root.join("best"), &trainer.model, &run.train, epoch, &hashes, &data.time_dates)?;
                    saved = Some("best".into());
                }
            } else {
                stale += 1;
            }
        }
        let record = trainer.history.epochs.last().expect("epoch recorded");
        let line = serde_json::to_string(record)?;
        writeln!(history, "{line}").map_err(|e| Error::io(&history_path, e))?;
        if let CheckpointPolicy::Every(n) = run.checkpoint {
            if epoch % n == 0 {
                let name = format!("epoch-{epoch:04}");
                save_checkpoint(&ckpt_root.join(&name), &trainer.model, &run.train, epoch, &hashes, &data.time_dates)?;
                saved = Some(name);
            }
        }
        if run.train.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    history.flush().map_err(|e| Error::io(&history_path, e))?;

    let epochs_trained = trainer.epoch;
    let final_name = format!("epoch-{epochs_trained:04}");
    let needs_final = match run.checkpoint {
        CheckpointPolicy::Last => Some("last".to_string()),
        CheckpointPolicy::Every(_) if saved.as_deref() != Some(final_name.as_str()) => Some(final_name),
        // Without validation there is no "best"; keep the final model instead.
        CheckpointPolicy::Best if best.is_none() => Some("best".to_string()),
        _ => None,
    };
    if let Some(name) = needs_final {
        save_checkpoint(&ckpt_root.join(&name), &trainer.model, &run.train, epochs_trained, &hashes, &data.time_dates)?;
        saved = Some(name);
    }

    let (selected_epoch, model) = match (run.checkpoint, best) {
        (CheckpointPolicy::Best, Some((_, epoch, model))) => (epoch, model),
        _ => (epochs_trained, trainer.model),
    };
    let metrics = FinalMetrics {
        epochs_trained,
        selected_epoch,
        checkpoint: saved.map(|s| format!("{CHECKPOINT_DIR}/{s}")),
        valid: both_modes(&model, &data.valid, &filter, "valid")?,
        test: both_modes(&model, &data.test, &filter, "test")?,
    };
    write_file(&out_dir.join(METRICS_FILE), &serde_json::to_string_pretty(&metrics)?)?;
    Ok(())
}

pub fn evaluate(checkpoint: &Path, dataset_dir: &Path, split: Split, mode: EvalMode) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint).map_err(|e| match e {
        Error::Io { .. } | Error::CheckpointShape { .. } | Error::Json(_) => Error::CorruptCheckpoint(e.to_string()),
        other => other,
    })?;
    let dataset = Dataset::load(dataset_dir)?;
    ckpt.verify_vocab(&dataset.vocab.hashes())?;
    let data = PreparedData::new(&dataset, ckpt.manifest.config.time_sampling_rate)?;
    let filter = filter_for(&data)?;
    let metrics = eval_split(&ckpt.model, data.split(split), &filter, mode, split.name())?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

pub fn stats(dataset_dir: &Path) -> Result<()> {
    let dataset = Dataset::load(dataset_dir)?;
    println!("{}", serde_json::to_string_pretty(&dataset.stats())?);
    Ok(())
}

pub fn encode_time(dataset_dir: Option<&Path>, range: Option<(String, String)>) -> Result<()> {
    let dates: Vec<NaiveDate> = match (dataset_dir, range) {
        (Some(dir), _) => Dataset::load(dir)?.vocab.timestamps,
        (None, Some((from, to))) => {
            let arg = |s: &str| parse_date(s).map_err(|e| Error::Config(e.to_string()));
            let (from, to) = (arg(&from)?, arg(&to)?);
            if from > to {
                return Err(Error::Config(format!("--from {from} is after --to {to}")));
            }
            from.iter_days().take_while(|d| *d <= to).collect()
        }
        (None, None) => return Err(Error::Config("give --dataset or --from/--to".into())),
    };
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    let io = |e| Error::io("<stdout>", e);
    writeln!(w, "{}", decomposition_csv_header()).map_err(io)?;
    for date in dates {
        let c = decompose_date(date)?;
        writeln!(w, "{}", decomposition_csv_row(date, &c)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn heatmap(dataset_dir: &Path, out: &Path, rate: usize, split: Option<Split>, concentration: Option<&Path>) -> Result<()> {
    if rate == 0 {
        return Err(Error::Config("--time-rate must be >= 1".into()));
    }
    let dataset = Dataset::load(dataset_dir)?;
    let vocab = &dataset.vocab;
    let quads: Vec<_> = match split {
        Some(s) => dataset.split(s).to_vec(),
        None => Split::ALL.iter().flat_map(|s| dataset.split(*s).iter().copied()).collect(),
    };
    let (quads, _) = resample_time(&quads, vocab.num_timestamps(), rate)?;
    let labels: Vec<String> = (0..resampled_count(vocab.num_timestamps(), rate)?)
        .map(|t| vocab.timestamps[t * rate].format(DATE_FORMAT).to_string())
        .collect();
    export_time_relation_heatmap(out, &quads, vocab.relations.names(), &labels)?;
    if let Some(path) = concentration {
        export_time_concentration(path, &quads, vocab.num_relations(), &labels)?;
    }
    Ok(())
}
