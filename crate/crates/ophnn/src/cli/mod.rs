//! Config-driven experiment commands behind the `ophnn` binary:
//! `datagen`, `train`, `eval` and `simulate`. Each command is a pure
//! function of its config, input files and seed; reruns reproduce outputs
//! byte for byte. Diagnostics go to stderr, results to files.

mod config;

pub use config::{DataKind, DataSection, EncoderSection, EvalSection, ExperimentConfig, ModelSection, TrainSection};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::datagen::{
    generate_fine_dataset, generate_msd_dataset, read_dataset_csv, split_5_2_5, write_dataset_csv,
    Dataset, MsdExperiment, NoiseConfig,
};
use crate::encoder::{Encoder, EncoderSpec};
use crate::error::{Error, Result};
use crate::eval::{load_benchmark_csv, simulate_on_record, write_trace_csv, EvalReport, EvalRow};
use crate::integrator::IntegratorScheme;
use crate::phcore::{PhArchitecture, PhDims, PhModel};
use crate::training::{train, Checkpoint, EpochStats, TrainConfig, TrainOutcome};

/// Derives a subsystem seed from the master seed; every random draw in a
/// run flows from the config's single `seed`.
fn sub_seed(master: u64, domain: u64) -> u64 {
    master ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_resolved(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    fs::write(out_dir.join("config.resolved.ini"), cfg.resolved())?;
    Ok(())
}

fn msd_experiment(cfg: &ExperimentConfig) -> MsdExperiment {
    MsdExperiment {
        f0: cfg.data.f0,
        harmonics: cfg.data.harmonics,
        ts: cfg.data.ts,
        n_samples: cfg.data.n,
        noise: NoiseConfig {
            snr_db: cfg.data.snr_db,
        },
        x0_box: cfg.data.x0_box,
        substeps: cfg.data.substeps,
        ..MsdExperiment::default()
    }
}

/// Generates dataset files: `train.csv`, `val.csv`, `test.csv`, and (for
/// synthetic data) fine-rate ground truth `test_fine_r<n>.csv` per
/// configured evaluation ratio.
pub fn cmd_datagen(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    match cfg.data.kind {
        DataKind::Msd => {
            let exp = msd_experiment(cfg);
            let ds = generate_msd_dataset(&exp, cfg.seed, 1)
                .into_iter()
                .next()
                .expect("one realization");
            let (train_ds, val_ds, test_ds) = split_5_2_5(&ds)?;
            write_dataset_csv(&train_ds, &out_dir.join("train.csv"))?;
            write_dataset_csv(&val_ds, &out_dir.join("val.csv"))?;
            write_dataset_csv(&test_ds, &out_dir.join("test.csv"))?;

            let test_start = train_ds.len() + val_ds.len();
            for &ratio in &cfg.eval.ratios {
                let fine = generate_fine_dataset(&exp, cfg.seed, 0, ratio)?;
                let slice = fine.slice(test_start * ratio, fine.len(), crate::datagen::SplitTag::Fine);
                write_dataset_csv(&slice, &out_dir.join(format!("test_fine_r{ratio}.csv")))?;
            }
        }
        DataKind::Csv => {
            let (train_ds, val_ds, test_ds) = load_benchmark_csv(Path::new(&cfg.data.path))?;
            write_dataset_csv(&train_ds, &out_dir.join("train.csv"))?;
            write_dataset_csv(&val_ds, &out_dir.join("val.csv"))?;
            write_dataset_csv(&test_ds, &out_dir.join("test.csv"))?;
        }
    }
    write_resolved(cfg, out_dir)?;
    Ok(())
}

/// Builds the model and encoder a config describes, seeded from the
/// master seed.
pub fn build_model_and_encoder(cfg: &ExperimentConfig, n_u: usize, n_y: usize) -> Result<(PhModel, Encoder)> {
    let dims = PhDims::new(cfg.model.nx, n_u)?;
    if n_y != n_u {
        return Err(Error::invalid(format!(
            "the model class requires n_y = n_u, data has n_u={n_u}, n_y={n_y}"
        )));
    }
    let arch = PhArchitecture {
        h_hidden: cfg.model.h_hidden.clone(),
        a_hidden: cfg.model.a_hidden.clone(),
        b_hidden: cfg.model.b_hidden.clone(),
        g_hidden: cfg.model.g_hidden.clone(),
    };
    let model = PhModel::init(dims, &arch, cfg.model.c, sub_seed(cfg.seed, 1));
    let enc_spec = EncoderSpec::new(cfg.encoder.na, cfg.encoder.nb, cfg.model.nx, n_u, n_y, cfg.encoder.hidden.clone())?;
    let encoder = Encoder::init(enc_spec, sub_seed(cfg.seed, 2));
    Ok((model, encoder))
}

/// Translates the `[train]`/`[encoder]` sections into a [`TrainConfig`].
pub fn train_config(cfg: &ExperimentConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        truncation: cfg.train.truncation,
        n_a: cfg.encoder.na,
        n_b: cfg.encoder.nb,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.lr,
        max_epochs: cfg.train.max_epochs,
        patience: cfg.train.patience,
        seed: sub_seed(cfg.seed, 3),
        scheme: IntegratorScheme::parse(&cfg.train.scheme)?,
        clip_norm: cfg.train.clip_norm,
    })
}

fn write_history_csv(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_nrms\n");
    for h in history {
        writeln!(out, "{},{},{}", h.epoch, h.train_loss, h.val_nrms).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Trains on `data_dir/train.csv` against `data_dir/val.csv`, writing
/// `checkpoint.ckpt`, `history.csv` and the resolved config to `out_dir`.
/// `resume` continues from an earlier checkpoint, keeping epoch numbering.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<Checkpoint> {
    ensure_dir(out_dir)?;
    let train_ds = read_dataset_csv(&data_dir.join("train.csv"))?;
    let val_ds = read_dataset_csv(&data_dir.join("val.csv"))?;

    let (mut model, mut encoder) = build_model_and_encoder(cfg, train_ds.n_u(), train_ds.n_y())?;
    let config = train_config(cfg)?;

    let mut epoch_offset = 0usize;
    let mut prior_history: Vec<EpochStats> = Vec::new();
    if let Some(ckpt_path) = resume {
        let prev = Checkpoint::load(ckpt_path)?;
        epoch_offset = prev.history.last().map_or(prev.epoch, |h| h.epoch);
        prior_history = prev.history.clone();
        model = prev.model;
        encoder = prev.encoder;
        eprintln!("resuming from {} at epoch {epoch_offset}", ckpt_path.display());
    }

    let result = train(&train_ds, &val_ds, model, encoder, config, |stats, _ckpt| {
        eprintln!(
            "epoch {:4}  train_loss {:.6e}  val_nrms {:.5}",
            stats.epoch + epoch_offset,
            stats.train_loss,
            stats.val_nrms
        );
    })?;

    let mut checkpoint = result.checkpoint;
    checkpoint.epoch += epoch_offset;
    let mut history = prior_history;
    history.extend(checkpoint.history.iter().map(|h| EpochStats {
        epoch: h.epoch + epoch_offset,
        ..*h
    }));
    checkpoint.history = history;

    let ckpt_path = out_dir.join("checkpoint.ckpt");
    checkpoint.save(&ckpt_path)?;
    write_history_csv(&checkpoint.history, &out_dir.join("history.csv"))?;
    write_resolved(cfg, out_dir)?;

    match result.outcome {
        TrainOutcome::Diverged { at_epoch } => Err(Error::non_finite(format!(
            "loss at epoch {}; last good checkpoint written to {}",
            at_epoch + epoch_offset,
            ckpt_path.display()
        ))),
        TrainOutcome::EarlyStopped { at_epoch } => {
            eprintln!(
                "early stop at epoch {} (best epoch {})",
                at_epoch + epoch_offset,
                checkpoint.epoch
            );
            Ok(checkpoint)
        }
        TrainOutcome::Completed => Ok(checkpoint),
    }
}

/// Simulates a checkpoint over dataset files, writing `report.csv` plus a
/// per-sample trace `trace_<name>.csv` for each record.
pub fn cmd_eval(
    checkpoint_path: &Path,
    data_paths: &[PathBuf],
    out_dir: &Path,
    scheme_override: Option<&str>,
    ratio: usize,
) -> Result<EvalReport> {
    ensure_dir(out_dir)?;
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let scheme = match scheme_override {
        Some(name) => IntegratorScheme::parse(name)?,
        None => checkpoint.config.scheme.clone(),
    };

    let mut report = EvalReport::default();
    for path in data_paths {
        let ds = read_dataset_csv(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        let sim = simulate_on_record(&checkpoint, &ds, &scheme, ratio)?;
        let metrics = sim.metrics(&ds)?;
        write_trace_csv(&out_dir.join(format!("trace_{name}.csv")), &ds, &sim)?;
        report.rows.push(EvalRow {
            dataset: name,
            train_scheme: checkpoint.config.scheme.name().to_string(),
            test_scheme: scheme.name().to_string(),
            ratio,
            nrms: metrics.nrms,
            rms: metrics.rms,
            n_samples: ds.len() - sim.warmup,
            runtime_s: sim.runtime_s,
        });
    }
    report.sort();
    report.write_csv(&out_dir.join("report.csv"))?;

    let mut args = String::new();
    writeln!(args, "checkpoint = {}", checkpoint_path.display()).unwrap();
    writeln!(args, "scheme = {}", scheme.name()).unwrap();
    writeln!(args, "ratio = {ratio}").unwrap();
    for p in data_paths {
        writeln!(args, "data = {}", p.display()).unwrap();
    }
    fs::write(out_dir.join("eval.resolved.txt"), args)?;
    Ok(report)
}

/// Truth-only rollout: simulates the configured synthetic system without
/// any model and writes the noise-free record to `truth.csv`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Dataset> {
    if cfg.data.kind != DataKind::Msd {
        return Err(Error::invalid("simulate requires data.kind = msd"));
    }
    ensure_dir(out_dir)?;
    let exp = MsdExperiment {
        noise: NoiseConfig::noiseless(),
        ..msd_experiment(cfg)
    };
    let ds = generate_msd_dataset(&exp, cfg.seed, 1)
        .into_iter()
        .next()
        .expect("one realization");
    write_dataset_csv(&ds, &out_dir.join("truth.csv"))?;
    write_resolved(cfg, out_dir)?;
    Ok(ds)
}
