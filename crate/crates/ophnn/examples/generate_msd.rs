//! Synthetic data generation for the two-mass oscillator: multisine
//! excitation, fine-substepped truth integration, SNR-controlled noise,
//! 5:2:5 splitting and fine-rate ground truth. Writes CSV files to a
//! directory (default `out/msd_demo`).
//!
//! ```bash
//! cargo run --release --example generate_msd [out_dir]
//! ```

use std::path::PathBuf;

use ophnn::datagen::{
    generate_fine_dataset, generate_msd_dataset, split_5_2_5, write_dataset_csv, MsdExperiment,
    NoiseConfig,
};
use ophnn::signal::Channels;

fn main() -> ophnn::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/msd_demo".into())
        .into();
    std::fs::create_dir_all(&out)?;

    let exp = MsdExperiment {
        n_samples: 2400,
        noise: NoiseConfig { snr_db: 40.0 },
        ..MsdExperiment::default()
    };
    let seed = 7;
    let ds = generate_msd_dataset(&exp, seed, 1).remove(0);

    // verify the realized signal-to-noise ratio
    let clean = ds.y_clean.as_ref().unwrap();
    let noise: Vec<f64> = ds
        .y
        .flat()
        .iter()
        .zip(clean.flat())
        .map(|(a, b)| a - b)
        .collect();
    let snr = 20.0 * (clean.std_pop()[0] / Channels::from_scalars(&noise).std_pop()[0]).log10();
    println!("generated {} samples at Ts = {} s, realized SNR {snr:.2} dB", ds.len(), ds.ts);

    let (train, val, test) = split_5_2_5(&ds)?;
    println!("split 5:2:5 -> {}/{}/{} samples", train.len(), val.len(), test.len());
    write_dataset_csv(&train, &out.join("train.csv"))?;
    write_dataset_csv(&val, &out.join("val.csv"))?;
    write_dataset_csv(&test, &out.join("test.csv"))?;

    // fine-rate ground truth of the same experiment (5x sampling)
    let fine = generate_fine_dataset(&exp, seed, 0, 5)?;
    write_dataset_csv(&fine, &out.join("fine_r5.csv"))?;
    println!("fine-rate record: {} samples at Ts = {} s", fine.len(), fine.ts);
    println!("files written to {}", out.display());
    Ok(())
}
