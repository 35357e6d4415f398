//! The multi-rate cross-test: train one model with Euler and one with RK4
//! on the same oscillator data, then simulate both on fine-rate ground
//! truth (rate ratios 1, 2, 5, 10) with both integrators. An RK4-trained
//! model stays accurate at every rate; an Euler-trained model bakes the
//! discretization error into its dynamics and degrades as the test rate
//! rises.
//!
//! Runs a reduced problem size by default; pass a sample count to change
//! it.
//!
//! ```bash
//! cargo run --release --example multirate_eval [n_samples] [epochs]
//! ```

use ophnn::cli::{build_model_and_encoder, train_config, ExperimentConfig};
use ophnn::datagen::{
    generate_fine_dataset, generate_msd_dataset, split_5_2_5, MsdExperiment, NoiseConfig, SplitTag,
};
use ophnn::eval::multirate_table;
use ophnn::training::train;

fn main() -> ophnn::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("sample count"))
        .unwrap_or(2400);
    let epochs: usize = std::env::args()
        .nth(2)
        .map(|s| s.parse().expect("epochs"))
        .unwrap_or(150);
    let seed = 1000;

    let exp = MsdExperiment {
        n_samples: n,
        noise: NoiseConfig { snr_db: 50.0 },
        ..MsdExperiment::default()
    };
    println!("generating {n} samples plus fine-rate ground truth...");
    let ds = generate_msd_dataset(&exp, seed, 1).remove(0);
    let (train_ds, val_ds, test_ds) = split_5_2_5(&ds)?;
    let test_start = train_ds.len() + val_ds.len();

    let ratios = [1usize, 2, 5, 10];
    let mut fine_sets = Vec::new();
    for &r in &ratios {
        let fine = generate_fine_dataset(&exp, seed, 0, r)?;
        fine_sets.push((r, fine.slice(test_start * r, fine.len(), SplitTag::Fine)));
    }

    let mut checkpoints = Vec::new();
    for scheme in ["euler", "rk4"] {
        let cfg = ExperimentConfig::parse(&format!(
            "seed = {seed}\n[data]\nn = {n}\n[train]\nscheme = {scheme}\nmax_epochs = {epochs}\npatience = 40\n"
        ))?;
        let (model, encoder) = build_model_and_encoder(&cfg, 1, 1)?;
        let tc = train_config(&cfg)?;
        println!("training with {scheme}...");
        let started = std::time::Instant::now();
        let result = train(&train_ds, &val_ds, model, encoder, tc, |s, _| {
            if s.epoch % 25 == 0 {
                println!(
                    "[{:6.1}s] {scheme} epoch {:4}  val NRMS {:.4}",
                    started.elapsed().as_secs_f64(),
                    s.epoch,
                    s.val_nrms
                );
            }
        })?;
        checkpoints.push(result.checkpoint);
    }

    let report = multirate_table(&checkpoints[0], &checkpoints[1], &fine_sets)?;
    println!("\ntrain scheme | test scheme | ratio | NRMS");
    for row in &report.rows {
        println!(
            "{:>12} | {:>11} | {:>5} | {:.5}",
            row.train_scheme, row.test_scheme, row.ratio, row.nrms
        );
    }
    println!("\n(also on the noisy base test split: NRMS vs measured outputs)");
    let sim = ophnn::eval::simulate_on_record(&checkpoints[1], &test_ds, &checkpoints[1].config.scheme, 1)?;
    println!("rk4-trained on test split: NRMS {:.4}", sim.metrics(&test_ds)?.nrms);
    Ok(())
}
