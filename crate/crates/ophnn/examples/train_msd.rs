//! Full identification run on the two-mass oscillator at desk scale:
//! N = 5000 samples at 50 dB SNR, truncation length 100, fourth-order
//! state, the reference network sizes, RK4 training. Expect roughly half
//! an hour per hundred epochs on one core; 300–500 epochs reach a test
//! NRMS well under 0.1.
//!
//! ```bash
//! cargo run --release --example train_msd [epochs] [out_dir]
//! ```

use std::path::PathBuf;

use ophnn::cli::{build_model_and_encoder, train_config, ExperimentConfig};
use ophnn::datagen::{generate_msd_dataset, split_5_2_5, MsdExperiment, NoiseConfig};
use ophnn::eval::simulate_on_record;
use ophnn::training::train;

fn main() -> ophnn::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("epochs must be an integer"))
        .unwrap_or(300);
    let out: PathBuf = std::env::args()
        .nth(2)
        .unwrap_or_else(|| "out/msd_run".into())
        .into();
    std::fs::create_dir_all(&out)?;

    let exp = MsdExperiment {
        n_samples: 5000,
        noise: NoiseConfig { snr_db: 50.0 },
        ..MsdExperiment::default()
    };
    let seed = 1000;
    println!("generating {} samples (fine-substepped truth integration)...", exp.n_samples);
    let ds = generate_msd_dataset(&exp, seed, 1).remove(0);
    let (train_ds, val_ds, test_ds) = split_5_2_5(&ds)?;

    let cfg = ExperimentConfig::parse(&format!(
        "seed = {seed}\n[train]\nmax_epochs = {epochs}\npatience = 60\n"
    ))?;
    let (model, encoder) = build_model_and_encoder(&cfg, 1, 1)?;
    let tc = train_config(&cfg)?;
    println!(
        "training: T = {}, batch {}, lr {}, scheme {}",
        tc.truncation,
        tc.batch_size,
        tc.learning_rate,
        tc.scheme.name()
    );

    let started = std::time::Instant::now();
    let result = train(&train_ds, &val_ds, model, encoder, tc, |s, _| {
        println!(
            "[{:7.1}s] epoch {:4}  train loss {:.4e}  val NRMS {:.4}",
            started.elapsed().as_secs_f64(),
            s.epoch,
            s.train_loss,
            s.val_nrms
        );
    })?;
    let ckpt = result.checkpoint;
    println!("finished ({:?}), best epoch {}", result.outcome, ckpt.epoch);

    let sim = simulate_on_record(&ckpt, &test_ds, &ckpt.config.scheme, 1)?;
    let m = sim.metrics(&test_ds)?;
    println!("test split: NRMS {:.4}, RMS {:.4e}", m.nrms, m.rms);

    let ckpt_path = out.join("checkpoint.ckpt");
    ckpt.save(&ckpt_path)?;
    ophnn::eval::write_trace_csv(&out.join("trace_test.csv"), &test_ds, &sim)?;
    println!("checkpoint and test trace written to {}", out.display());
    Ok(())
}
