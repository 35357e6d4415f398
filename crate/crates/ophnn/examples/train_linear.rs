//! Minimal end-to-end training run on an easy target: a first-order
//! linear system, noiseless data, small networks. Takes a few minutes on a
//! laptop and prints the validation NRMS as it falls.
//!
//! ```bash
//! cargo run --release --example train_linear
//! ```

use std::collections::BTreeMap;

use ophnn::datagen::{Dataset, MultisineConfig, SplitTag};
use ophnn::encoder::{Encoder, EncoderSpec};
use ophnn::eval::simulate_on_record;
use ophnn::integrator::{substep_integrate, IntegratorScheme};
use ophnn::phcore::{PhArchitecture, PhDims, PhModel};
use ophnn::signal::Channels;
use ophnn::training::{train, TrainConfig};

fn main() -> ophnn::Result<()> {
    // ẋ = −x + u, y = x, multisine input, ZOH sampling at 10 Hz
    use rand::SeedableRng;
    let (n, ts) = (720, 0.1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let ms = MultisineConfig::random_phases(1.0 / (n as f64 * ts), 60, &mut rng)?;
    let rk4 = IntegratorScheme::rk4();
    let f = |x: &[f64], u: &[f64]| vec![-x[0] + u[0]];

    let mut u = Channels::new(1);
    let mut y = Channels::new(1);
    let mut x = vec![0.3];
    for k in 0..n {
        let uk = ms.value(k as f64 * ts);
        u.push_row(&[uk]);
        y.push_row(&[x[0]]);
        x = substep_integrate(&rk4, f, ts, 20, &x, &[uk])?;
    }
    let full = Dataset {
        ts,
        u,
        y,
        y_clean: None,
        split: SplitTag::Full,
        meta: BTreeMap::new(),
    };
    let train_ds = full.slice(0, 300, SplitTag::Train);
    let val_ds = full.slice(300, 420, SplitTag::Val);
    let test_ds = full.slice(420, 720, SplitTag::Test);

    let dims = PhDims::new(2, 1)?;
    let arch = PhArchitecture {
        h_hidden: vec![8],
        a_hidden: vec![4],
        b_hidden: vec![4],
        g_hidden: vec![4],
    };
    let model = PhModel::init(dims, &arch, 0.0, 2);
    let encoder = Encoder::init(EncoderSpec::new(8, 8, 2, 1, 1, vec![16])?, 102);
    let config = TrainConfig {
        truncation: 60,
        n_a: 8,
        n_b: 8,
        batch_size: 128,
        learning_rate: 3e-3,
        max_epochs: 900,
        patience: 150,
        seed: 3,
        scheme: rk4,
        clip_norm: Some(100.0),
    };

    let result = train(&train_ds, &val_ds, model, encoder, config, |s, _| {
        if s.epoch % 50 == 0 {
            println!("epoch {:4}  train loss {:.3e}  val NRMS {:.4}", s.epoch, s.train_loss, s.val_nrms);
        }
    })?;
    let ckpt = result.checkpoint;
    println!("finished ({:?}), best epoch {}", result.outcome, ckpt.epoch);

    let sim = simulate_on_record(&ckpt, &test_ds, &ckpt.config.scheme, 1)?;
    let m = sim.metrics(&test_ds)?;
    println!("test split: NRMS {:.4}, RMS {:.4e}", m.nrms, m.rms);
    Ok(())
}
