//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (`cargo test --test acceptance -- --nocapture` to watch). The
//! heavy criteria share trained models through lazy statics, so the
//! oscillator identification runs once and feeds criteria 4, 5 and 6.
//!
//! Criterion 7 scores the two-tank benchmark when its measured CSV is
//! available (`OPHNN_TANKS_CSV` or `tests/data/cascaded_tanks.csv`);
//! otherwise it runs the identical protocol on a synthetic surrogate of
//! the same format and scale.

use std::sync::OnceLock;
use std::time::Instant;

use ophnn::autodiff::{finite_difference_gradient, max_rel_err};
use ophnn::cli::{build_model_and_encoder, train_config, ExperimentConfig};
use ophnn::datagen::{
    generate_fine_dataset, generate_msd_dataset, msd_rhs, split_5_2_5, tanks_surrogate_csv,
    Dataset, MsdConfig, MsdExperiment, NoiseConfig, SplitTag,
};
use ophnn::encoder::{Encoder, EncoderSpec};
use ophnn::eval::{load_benchmark_csv, multirate_table, simulate_on_record, sigma_y};
use ophnn::integrator::{empirical_order, rollout_states, IntegratorScheme};
use ophnn::phcore::{PhArchitecture, PhDims, PhModel};
use ophnn::signal::Channels;
use ophnn::training::{
    adam_step, build_subsections, flatten_params, load_params, subnet_loss, subnet_loss_grad,
    train, AdamState, Checkpoint, Subsection, TrainConfig, BETA1, BETA2, EPS,
};

const DESK_SEED: u64 = 1000;
const DESK_N: usize = 5000;
const DESK_EPOCHS: usize = 420;

fn pass(criterion: &str, detail: String) {
    println!("criterion {criterion}: PASS — {detail}");
}

struct TrainedMsd {
    checkpoint: Checkpoint,
    test: Dataset,
    runtime_s: f64,
}

fn desk_experiment(snr_db: f64) -> MsdExperiment {
    MsdExperiment {
        n_samples: DESK_N,
        noise: NoiseConfig { snr_db },
        ..MsdExperiment::default()
    }
}

/// One desk-scale identification run: N = 5000 at the reference
/// architecture (state dim 4, H 16×16, J/R/G hidden 8, encoder 64×64,
/// lags 20, T = 100, batch 256, Adam 1e-3).
fn train_desk_msd(scheme: &str, snr_db: f64) -> TrainedMsd {
    let exp = desk_experiment(snr_db);
    let ds = generate_msd_dataset(&exp, DESK_SEED, 1).remove(0);
    let (train_ds, val_ds, test_ds) = split_5_2_5(&ds).unwrap();

    let cfg = ExperimentConfig::parse(&format!(
        "seed = {DESK_SEED}\n[train]\nscheme = {scheme}\nmax_epochs = {DESK_EPOCHS}\npatience = 60\n"
    ))
    .unwrap();
    let (model, encoder) = build_model_and_encoder(&cfg, 1, 1).unwrap();
    let tc = train_config(&cfg).unwrap();

    let started = Instant::now();
    let result = train(&train_ds, &val_ds, model, encoder, tc, |s, _| {
        if s.epoch % 25 == 0 {
            eprintln!(
                "    [desk {scheme} {snr_db} dB] epoch {:4} val NRMS {:.4}",
                s.epoch, s.val_nrms
            );
        }
    })
    .unwrap();
    TrainedMsd {
        checkpoint: result.checkpoint,
        test: test_ds,
        runtime_s: started.elapsed().as_secs_f64(),
    }
}

fn rk4_50() -> &'static TrainedMsd {
    static LOCK: OnceLock<TrainedMsd> = OnceLock::new();
    LOCK.get_or_init(|| train_desk_msd("rk4", 50.0))
}

fn rk4_35() -> &'static TrainedMsd {
    static LOCK: OnceLock<TrainedMsd> = OnceLock::new();
    LOCK.get_or_init(|| train_desk_msd("rk4", 35.0))
}

fn euler_50() -> &'static TrainedMsd {
    static LOCK: OnceLock<TrainedMsd> = OnceLock::new();
    LOCK.get_or_init(|| train_desk_msd("euler", 50.0))
}

/// Fine-rate ground-truth slices over the test span, ratios 1/2/5/10.
fn fine_test_sets() -> &'static Vec<(usize, Dataset)> {
    static LOCK: OnceLock<Vec<(usize, Dataset)>> = OnceLock::new();
    LOCK.get_or_init(|| {
        let exp = desk_experiment(50.0);
        let n_train = 5 * DESK_N / 12;
        let n_val = 2 * DESK_N / 12;
        let test_start = n_train + n_val;
        [1usize, 2, 5, 10]
            .iter()
            .map(|&r| {
                let fine = generate_fine_dataset(&exp, DESK_SEED, 0, r).unwrap();
                (r, fine.slice(test_start * r, fine.len(), SplitTag::Fine))
            })
            .collect()
    })
}

// ── criterion 1: structural guarantees ───────────────────────────────

/// Cholesky of `m + shift·I`; succeeding proves the smallest eigenvalue
/// is at least `-shift`.
fn cholesky_with_shift(m: &ophnn::autodiff::Tensor, shift: f64) -> bool {
    let n = m.shape()[0];
    let mut a: Vec<f64> = m.data().to_vec();
    for i in 0..n {
        a[i * n + i] += shift;
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

#[test]
fn criterion_1_structural_suite() {
    use rand::{Rng, SeedableRng};
    let started = Instant::now();
    let dims = PhDims::new(4, 1).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(314);

    for draw in 0..100 {
        let model = PhModel::init(dims, &PhArchitecture::default(), 0.0, 40_000 + draw);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let u = [rng.gen_range(-3.0..3.0)];

            let j = model.assemble_j(&x).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    assert!(
                        (j.at(r, c) + j.at(c, r)).abs() <= 1e-14,
                        "skew violation at draw {draw}"
                    );
                }
            }
            let r = model.assemble_r(&x).unwrap();
            assert!(
                cholesky_with_shift(&r, 1e-10),
                "R eigenvalue below -1e-10 at draw {draw}"
            );
            assert!(model.hamiltonian(&x).unwrap() >= model.h_lower_bound);
            let (dh, supplied) = model.power_balance(&x, &u).unwrap();
            assert!(
                dh <= supplied + 1e-9 * (1.0 + supplied.abs()),
                "dissipation inequality violated at draw {draw}: {dh} > {supplied}"
            );
        }
    }
    let dt = started.elapsed().as_secs_f64();
    assert!(dt < 60.0, "structural suite took {dt:.1}s");
    pass(
        "1",
        format!("100 models × 100 states: J skew ≤1e-14, R ⪰ −1e-10, H ≥ c, dH/dt ≤ yᵀu [{dt:.1}s]"),
    );
}

// ── criterion 2: loss gradient vs finite differences ─────────────────

#[test]
fn criterion_2_gradient_suite() {
    let started = Instant::now();
    let dims = PhDims::new(2, 1).unwrap();
    let arch = PhArchitecture {
        h_hidden: vec![4],
        a_hidden: vec![3],
        b_hidden: vec![3],
        g_hidden: vec![4],
    };
    let model = PhModel::init(dims, &arch, 0.0, 29);
    let encoder = Encoder::init(EncoderSpec::new(3, 3, 2, 1, 1, vec![4]).unwrap(), 36);

    let mut u = Channels::new(1);
    let mut y = Channels::new(1);
    for k in 0..40 {
        u.push_row(&[(0.31 * k as f64).sin()]);
        y.push_row(&[(0.17 * k as f64).cos()]);
    }
    let ds = Dataset {
        ts: 0.1,
        u,
        y,
        y_clean: None,
        split: SplitTag::Train,
        meta: Default::default(),
    };
    let subs = [
        Subsection { start: 3 },
        Subsection { start: 11 },
        Subsection { start: 20 },
    ];
    let scheme = IntegratorScheme::rk4();

    let (_, got) = subnet_loss_grad(&model, &encoder, &ds, &subs, &scheme, ds.ts, 5).unwrap();
    let flat = flatten_params(&model, &encoder);
    let want = finite_difference_gradient(
        |p| {
            let mut m = model.clone();
            let mut e = encoder.clone();
            load_params(&mut m, &mut e, p);
            subnet_loss(&m, &e, &ds, &subs, &scheme, ds.ts, 5)
        },
        &flat,
        1e-5,
    )
    .unwrap();
    let err = max_rel_err(&got, &want);
    let dt = started.elapsed().as_secs_f64();
    assert!(err <= 1e-4, "gradient relative error {err}");
    assert!(dt < 60.0, "gradient suite took {dt:.1}s");
    pass(
        "2",
        format!(
            "{} coordinates (θ and η, second-derivative path included), max rel err {err:.2e} [{dt:.1}s]",
            flat.len()
        ),
    );
}

// ── criterion 3: empirical integrator orders ─────────────────────────

#[test]
fn criterion_3_integrator_order() {
    let started = Instant::now();
    let cfg = MsdConfig::default();
    let f = |x: &[f64], u: &[f64]| msd_rhs(&cfg, x, u[0]);
    let x0 = [0.5, -0.3, 0.8, 0.2];
    let u = [0.7];
    let ts_list = [0.4, 0.2, 0.1, 0.05, 0.025];

    let rk4 = empirical_order(&IntegratorScheme::rk4(), f, &ts_list, &x0, &u)
        .unwrap()
        .slope()
        .unwrap();
    let euler = empirical_order(&IntegratorScheme::euler(), f, &ts_list, &x0, &u)
        .unwrap()
        .slope()
        .unwrap();
    let dt = started.elapsed().as_secs_f64();
    assert!((4.7..=5.3).contains(&rk4), "rk4 slope {rk4}");
    assert!((1.7..=2.3).contains(&euler), "euler slope {euler}");
    assert!(dt < 60.0);
    pass("3", format!("local orders: rk4 {rk4:.3} ∈ [4.7,5.3], euler {euler:.3} ∈ [1.7,2.3] [{dt:.1}s]"));
}

// ── criterion 4: desk-scale identification ───────────────────────────

#[test]
fn criterion_4_desk_scale_identification() {
    let artifact = rk4_50();
    let sim = simulate_on_record(
        &artifact.checkpoint,
        &artifact.test,
        &artifact.checkpoint.config.scheme,
        1,
    )
    .unwrap();
    let m = sim.metrics(&artifact.test).unwrap();
    assert!(
        m.nrms <= 0.10,
        "desk-scale test NRMS {} exceeds 0.10",
        m.nrms
    );
    pass(
        "4",
        format!(
            "N=5000, T=100, 50 dB: test NRMS {:.4} ≤ 0.10 (training {:.0}s, best epoch {})",
            m.nrms, artifact.runtime_s, artifact.checkpoint.epoch
        ),
    );
}

/// Optional full reproduction (N = 20000, T = 200, best of 3 seeds,
/// several hours): run with
/// `cargo test --release --test acceptance -- --ignored --nocapture`.
#[test]
#[ignore = "multi-hour full-scale run; the desk-scale bound is the gate"]
fn criterion_4_full_scale_optional() {
    let exp = MsdExperiment {
        n_samples: 20_000,
        noise: NoiseConfig { snr_db: 50.0 },
        ..MsdExperiment::default()
    };
    let mut best = f64::INFINITY;
    for seed in [1000u64, 2000, 3000] {
        let ds = generate_msd_dataset(&exp, seed, 1).remove(0);
        let (train_ds, val_ds, test_ds) = split_5_2_5(&ds).unwrap();
        let cfg = ExperimentConfig::parse(&format!(
            "seed = {seed}\n[data]\nn = 20000\n[train]\ntruncation = 200\nmax_epochs = 600\npatience = 60\n"
        ))
        .unwrap();
        let (model, encoder) = build_model_and_encoder(&cfg, 1, 1).unwrap();
        let tc = train_config(&cfg).unwrap();
        let result = train(&train_ds, &val_ds, model, encoder, tc, |s, _| {
            if s.epoch % 10 == 0 {
                eprintln!("    [full seed {seed}] epoch {:4} val NRMS {:.4}", s.epoch, s.val_nrms);
            }
        })
        .unwrap();
        let sim = simulate_on_record(&result.checkpoint, &test_ds, &result.checkpoint.config.scheme, 1)
            .unwrap();
        best = best.min(sim.metrics(&test_ds).unwrap().nrms);
        eprintln!("    [full seed {seed}] test NRMS so far best {best:.4}");
    }
    assert!(best <= 0.03, "full-scale best-of-3 NRMS {best}");
    pass("4 (full scale)", format!("best-of-3 test NRMS {best:.4} ≤ 0.03"));
}

// ── criterion 5: noise trend ─────────────────────────────────────────

#[test]
fn criterion_5_noise_trend() {
    let nrms_at = |artifact: &TrainedMsd| {
        let sim = simulate_on_record(
            &artifact.checkpoint,
            &artifact.test,
            &artifact.checkpoint.config.scheme,
            1,
        )
        .unwrap();
        sim.metrics(&artifact.test).unwrap().nrms
    };
    let n50 = nrms_at(rk4_50());
    let n35 = nrms_at(rk4_35());
    assert!(n35 >= n50, "NRMS(35 dB) {n35} < NRMS(50 dB) {n50}");
    assert!(
        n35 <= 1.5 * n50,
        "NRMS(35 dB) {n35} exceeds 1.5 × NRMS(50 dB) {n50}"
    );
    pass(
        "5",
        format!("NRMS(50 dB) {n50:.4} ≤ NRMS(35 dB) {n35:.4} ≤ 1.5×{n50:.4} (ratio {:.2})", n35 / n50),
    );
}

// ── criterion 6: multi-rate behavior ─────────────────────────────────

#[test]
fn criterion_6_multirate_trends() {
    let report = multirate_table(
        &euler_50().checkpoint,
        &rk4_50().checkpoint,
        fine_test_sets(),
    )
    .unwrap();

    let ratios = [1usize, 2, 5, 10];
    let rk4: Vec<f64> = ratios
        .iter()
        .map(|&r| report.nrms_for("rk4", "rk4", r).unwrap())
        .collect();
    let euler: Vec<f64> = ratios
        .iter()
        .map(|&r| report.nrms_for("euler", "euler", r).unwrap())
        .collect();

    let rk4_min = rk4.iter().cloned().fold(f64::INFINITY, f64::min);
    let rk4_max = rk4.iter().cloned().fold(0.0, f64::max);
    assert!(
        rk4_max / rk4_min - 1.0 < 0.15,
        "rk4-trained/rk4-tested varies {:.1}% across ratios: {rk4:?}",
        100.0 * (rk4_max / rk4_min - 1.0)
    );

    for w in euler.windows(2) {
        assert!(
            w[1] >= w[0] - 1e-12,
            "euler-trained/euler-tested should degrade monotonically: {euler:?}"
        );
    }
    assert!(
        euler[3] >= 2.0 * euler[0],
        "euler ratio-10 NRMS {} is not ≥ 2× ratio-1 {}",
        euler[3],
        euler[0]
    );
    pass(
        "6",
        format!(
            "rk4/rk4 spread {:.1}% (<15%); euler/euler {:.4} → {:.4} (×{:.2} ≥ 2, monotone)",
            100.0 * (rk4_max / rk4_min - 1.0),
            euler[0],
            euler[3],
            euler[3] / euler[0]
        ),
    );
}

// ── criterion 7: two-tank benchmark protocol ─────────────────────────

fn tanks_records() -> (Dataset, Dataset, Dataset, &'static str) {
    if let Ok(path) = std::env::var("OPHNN_TANKS_CSV") {
        let (a, b, c) = load_benchmark_csv(std::path::Path::new(&path)).unwrap();
        return (a, b, c, "measured benchmark records");
    }
    let local = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/cascaded_tanks.csv");
    if local.exists() {
        let (a, b, c) = load_benchmark_csv(&local).unwrap();
        return (a, b, c, "measured benchmark records");
    }
    let dir = std::env::temp_dir().join("ophnn_acceptance_tanks.csv");
    std::fs::write(&dir, tanks_surrogate_csv(2024)).unwrap();
    let (a, b, c) = load_benchmark_csv(&dir).unwrap();
    (a, b, c, "synthetic surrogate records (measured file not present)")
}

#[test]
fn criterion_7_tank_benchmark() {
    let started = Instant::now();
    let (train_ds, val_ds, test_ds, source) = tanks_records();

    let mut best_rms = f64::INFINITY;
    let mut per_seed = Vec::new();
    for seed in 1..=5u64 {
        let cfg = ExperimentConfig::parse(&format!(
            "seed = {seed}\n\
             [model]\nnx = 2\nh_hidden = 8\na_hidden = 8\nb_hidden = 8\ng_hidden = 8\n\
             [encoder]\nna = 4\nnb = 4\nhidden = 8\n\
             [train]\ntruncation = 60\nbatch_size = 64\nlr = 1e-3\nmax_epochs = 1000\npatience = 150\n"
        ))
        .unwrap();
        let (model, encoder) = build_model_and_encoder(&cfg, 1, 1).unwrap();
        let tc = train_config(&cfg).unwrap();
        let seed_started = Instant::now();
        let result = train(&train_ds, &val_ds, model, encoder, tc, |_, _| {}).unwrap();
        let sim = simulate_on_record(
            &result.checkpoint,
            &test_ds,
            &result.checkpoint.config.scheme,
            1,
        )
        .unwrap();
        let m = sim.metrics(&test_ds).unwrap();
        per_seed.push(m.rms);
        best_rms = best_rms.min(m.rms);
        eprintln!(
            "    [tanks seed {seed}] test RMS {:.4} ({:.0}s)",
            m.rms,
            seed_started.elapsed().as_secs_f64()
        );
    }
    assert!(
        best_rms <= 0.40,
        "best-of-5 test RMS {best_rms} exceeds 0.40 on {source} (per seed: {per_seed:?})"
    );
    let stretch = if best_rms <= 0.30 { ", stretch ≤ 0.30 met" } else { "" };
    pass(
        "7",
        format!(
            "best-of-5 test RMS {best_rms:.4} ≤ 0.40 on {source} (σ_y {:.2}){stretch} [{:.0}s]",
            sigma_y(&test_ds.y),
            started.elapsed().as_secs_f64()
        ),
    );
}

// ── criterion 8: oracle equivalences ─────────────────────────────────

#[test]
fn criterion_8_oracle_equivalences() {
    let started = Instant::now();

    // batched loss vs a straight-line loop oracle
    let dims = PhDims::new(2, 1).unwrap();
    let arch = PhArchitecture {
        h_hidden: vec![4],
        a_hidden: vec![3],
        b_hidden: vec![3],
        g_hidden: vec![4],
    };
    let model = PhModel::init(dims, &arch, 0.0, 11);
    let encoder = Encoder::init(EncoderSpec::new(3, 3, 2, 1, 1, vec![4]).unwrap(), 18);
    let mut u = Channels::new(1);
    let mut y = Channels::new(1);
    for k in 0..80 {
        u.push_row(&[(0.31 * k as f64).sin()]);
        y.push_row(&[(0.17 * k as f64).cos()]);
    }
    let ds = Dataset {
        ts: 0.1,
        u,
        y,
        y_clean: None,
        split: SplitTag::Train,
        meta: Default::default(),
    };
    let cfg = TrainConfig {
        truncation: 6,
        n_a: 3,
        n_b: 3,
        ..TrainConfig::default()
    };
    let subs: Vec<Subsection> = build_subsections(&ds, &cfg).unwrap()[..40].to_vec();
    let scheme = IntegratorScheme::rk4();
    let batched = subnet_loss(&model, &encoder, &ds, &subs, &scheme, ds.ts, 6).unwrap();

    let mut oracle_sse = 0.0;
    for sub in &subs {
        let (u_past, y_past) = ophnn::encoder::window_slice(&ds, sub.start, &encoder.spec).unwrap();
        let mut x = encoder.encode(&u_past, &y_past).unwrap();
        for k in 0..6 {
            let yhat = model.h_theta(&x).unwrap();
            let target = ds.y.row(sub.start + k);
            for (a, b) in yhat.iter().zip(target) {
                oracle_sse += (a - b) * (a - b);
            }
            if k == 5 {
                break;
            }
            let uk = ds.u.row(sub.start + k);
            let k1 = model.f_theta(&x, uk).unwrap();
            let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.05 * b).collect();
            let k2 = model.f_theta(&x2, uk).unwrap();
            let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.05 * b).collect();
            let k3 = model.f_theta(&x3, uk).unwrap();
            let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + 0.1 * b).collect();
            let k4 = model.f_theta(&x4, uk).unwrap();
            for i in 0..2 {
                x[i] += 0.1 / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    let oracle = oracle_sse / (subs.len() * 6) as f64;
    let loss_gap = (batched - oracle).abs();
    assert!(loss_gap <= 1e-10, "batched loss {batched} vs loop oracle {oracle}");

    // rollout vs the exact exponential on a linear field
    let u_seq = Channels::from_scalars(&[0.0; 10]);
    let states = rollout_states(
        &IntegratorScheme::rk4(),
        |x, _| vec![-x[0]],
        0.1,
        &[1.0],
        &u_seq,
    )
    .unwrap();
    let mut exp_gap: f64 = 0.0;
    for (k, s) in states.iter().enumerate() {
        exp_gap = exp_gap.max((s[0] - (-(k as f64) * 0.1).exp()).abs());
    }
    assert!(exp_gap <= 1e-6, "rollout vs exponential gap {exp_gap}");

    // Adam vs a hand recursion
    let g = [0.5, -0.2];
    let lr = 0.1;
    let mut m = [0.0f64; 2];
    let mut v = [0.0f64; 2];
    let mut want = [1.0f64, -1.0];
    for t in 1..=3u32 {
        for i in 0..2 {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            let mh = m[i] / (1.0 - 0.9f64.powi(t as i32));
            let vh = v[i] / (1.0 - 0.999f64.powi(t as i32));
            want[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
    let mut p = vec![1.0, -1.0];
    let mut st = AdamState::new(2);
    for _ in 0..3 {
        adam_step(&mut p, &g, &mut st, lr, BETA1, BETA2, EPS);
    }
    let adam_gap = p
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(adam_gap <= 1e-12, "adam trace gap {adam_gap}");

    let dt = started.elapsed().as_secs_f64();
    pass(
        "8",
        format!(
            "loss oracle gap {loss_gap:.1e} ≤ 1e-10; rollout-vs-exp {exp_gap:.1e} ≤ 1e-6; adam trace {adam_gap:.1e} ≤ 1e-12 [{dt:.1}s]"
        ),
    );
}
