//! Ground-truth data generation for the identification experiments:
//! multisine excitation, the two-mass oscillator with a cubic spring,
//! SNR-controlled measurement noise, multi-rate sampling and split
//! management.

mod io;

pub use io::{read_dataset_csv, write_dataset_csv};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::integrator::{self, IntegratorScheme};
use crate::signal::Channels;

/// Sum of `K` unit-amplitude harmonics of `f0` with per-harmonic phases.
#[derive(Debug, Clone, PartialEq)]
pub struct MultisineConfig {
    /// Base frequency in Hz.
    pub f0: f64,
    /// One phase per harmonic, radians in `[0, 2π)`.
    pub phases: Vec<f64>,
}

impl MultisineConfig {
    pub fn new(f0: f64, phases: Vec<f64>) -> Result<Self> {
        if f0 <= 0.0 || phases.is_empty() {
            return Err(Error::invalid("multisine: f0 > 0 and at least one harmonic required"));
        }
        Ok(Self { f0, phases })
    }

    /// Random phases uniform on `[0, 2π)`.
    pub fn random_phases(f0: f64, harmonics: usize, rng: &mut impl Rng) -> Result<Self> {
        let phases = (0..harmonics)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        Self::new(f0, phases)
    }

    /// `u(t) = Σ_k sin(2π k f0 t + φ_k)`, harmonics counted from 1.
    pub fn value(&self, t: f64) -> f64 {
        self.phases
            .iter()
            .enumerate()
            .map(|(i, &phi)| (std::f64::consts::TAU * (i + 1) as f64 * self.f0 * t + phi).sin())
            .sum()
    }
}

/// Parameters of the coupled mass-spring-damper pair. Spring 1 is cubic:
/// its restoring force is `k0·q + kc·q³`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdConfig {
    pub m1: f64,
    pub m2: f64,
    pub k0: f64,
    pub k2: f64,
    pub kc: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for MsdConfig {
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            k0: 1.0,
            k2: 1.0,
            kc: 0.1,
            c1: 0.5,
            c2: 0.5,
        }
    }
}

/// Equations of motion for the state `[q1, p1, q2, p2]` with the external
/// force `u` applied to mass 2. Damper `c1` acts on mass 1's absolute
/// velocity, `c2` on the relative velocity between the masses. The measured
/// output is the velocity of mass 2, `q̇2 = p2/m2`.
pub fn msd_rhs(cfg: &MsdConfig, state: &[f64], u: f64) -> Vec<f64> {
    let (q1, p1, q2, p2) = (state[0], state[1], state[2], state[3]);
    let v1 = p1 / cfg.m1;
    let v2 = p2 / cfg.m2;
    let spring1 = cfg.k0 * q1 + cfg.kc * q1 * q1 * q1;
    let spring2 = cfg.k2 * (q2 - q1);
    let damper2 = cfg.c2 * (v2 - v1);
    vec![
        v1,
        -spring1 - cfg.c1 * v1 + spring2 + damper2,
        v2,
        -spring2 - damper2 + u,
    ]
}

/// Total mechanical energy of the oscillator pair; conserved when both
/// dampers vanish and `u = 0`.
pub fn msd_energy(cfg: &MsdConfig, state: &[f64]) -> f64 {
    let (q1, p1, q2, p2) = (state[0], state[1], state[2], state[3]);
    p1 * p1 / (2.0 * cfg.m1)
        + p2 * p2 / (2.0 * cfg.m2)
        + cfg.k0 * q1 * q1 / 2.0
        + cfg.kc * q1 * q1 * q1 * q1 / 4.0
        + cfg.k2 * (q2 - q1) * (q2 - q1) / 2.0
}

/// Measurement-noise setting. `snr_db = f64::INFINITY` disables noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub snr_db: f64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self { snr_db: f64::INFINITY }
    }
}

/// Split membership of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Full,
    Train,
    Val,
    Test,
    Fine,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Full => "full",
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::Fine => "fine",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SplitTag::Full),
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            "fine" => Ok(SplitTag::Fine),
            other => Err(Error::invalid(format!("unknown split tag '{other}'"))),
        }
    }
}

/// A sampled input/output record with provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ts: f64,
    pub u: Channels,
    pub y: Channels,
    /// Noise-free outputs when the generator is synthetic.
    pub y_clean: Option<Channels>,
    pub split: SplitTag,
    pub meta: BTreeMap<String, String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn n_u(&self) -> usize {
        self.u.channels()
    }

    pub fn n_y(&self) -> usize {
        self.y.channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.len() != self.y.len() {
            return Err(Error::invalid(format!(
                "dataset: {} inputs vs {} outputs",
                self.u.len(),
                self.y.len()
            )));
        }
        if let Some(c) = &self.y_clean {
            if c.len() != self.y.len() {
                return Err(Error::invalid("dataset: clean output length mismatch"));
            }
        }
        if !(self.u.is_finite() && self.y.is_finite()) {
            return Err(Error::non_finite("dataset samples"));
        }
        Ok(())
    }

    /// Contiguous sample range as a new dataset with the given tag.
    pub fn slice(&self, start: usize, end: usize, split: SplitTag) -> Dataset {
        let mut meta = self.meta.clone();
        meta.insert("slice_start".into(), start.to_string());
        Dataset {
            ts: self.ts,
            u: self.u.slice(start, end),
            y: self.y.slice(start, end),
            y_clean: self.y_clean.as_ref().map(|c| c.slice(start, end)),
            split,
            meta,
        }
    }
}

/// Full experiment description for the oscillator benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdExperiment {
    pub msd: MsdConfig,
    /// Multisine base frequency (Hz) and harmonic count.
    pub f0: f64,
    pub harmonics: usize,
    pub ts: f64,
    pub n_samples: usize,
    pub noise: NoiseConfig,
    /// Initial states drawn uniform from `[-x0_box, x0_box]⁴`.
    pub x0_box: f64,
    /// Internal truth-integrator steps per sampling period.
    pub substeps: usize,
}

impl Default for MsdExperiment {
    fn default() -> Self {
        Self {
            msd: MsdConfig::default(),
            f0: 0.01,
            harmonics: 100,
            ts: 0.1,
            n_samples: 5000,
            noise: NoiseConfig { snr_db: 50.0 },
            x0_box: 1.0,
            substeps: 100,
        }
    }
}

/// Per-realization random draws, derived from `(master_seed, realization)`
/// so realizations are independent and reproducible.
struct RealizationDraws {
    multisine: MultisineConfig,
    x0: Vec<f64>,
    noise_normals: Vec<f64>,
}

fn realization_draws(exp: &MsdExperiment, master_seed: u64, realization: u64, n_noise: usize) -> RealizationDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(realization);
    let multisine = MultisineConfig::random_phases(exp.f0, exp.harmonics, &mut rng).unwrap();
    let x0 = (0..4).map(|_| rng.gen_range(-exp.x0_box..=exp.x0_box)).collect();
    // drawn unconditionally so the trajectory is identical across SNR settings
    let noise_normals = (0..n_noise).map(|_| rng.sample(StandardNormal)).collect();
    RealizationDraws {
        multisine,
        x0,
        noise_normals,
    }
}

/// Simulates the truth trajectory and records clean outputs every
/// `substeps/ratio` internal steps; `ratio = 1` gives the base sampling.
fn simulate_truth(
    exp: &MsdExperiment,
    ms: &MultisineConfig,
    x0: &[f64],
    ratio: usize,
) -> (Vec<f64>, Vec<f64>) {
    assert!(
        exp.substeps % ratio == 0,
        "substeps {} must be divisible by the rate ratio {ratio}",
        exp.substeps
    );
    let scheme = IntegratorScheme::rk4();
    let record_every = exp.substeps / ratio;
    let h = exp.ts / exp.substeps as f64;
    let n_fine = exp.n_samples * ratio;
    let rhs = |x: &[f64], u: &[f64]| msd_rhs(&exp.msd, x, u[0]);

    let mut u_fine = Vec::with_capacity(n_fine);
    let mut y_fine = Vec::with_capacity(n_fine);
    let mut x = x0.to_vec();
    for k in 0..exp.n_samples {
        let u_k = ms.value(k as f64 * exp.ts);
        for s in 0..exp.substeps {
            if s % record_every == 0 {
                u_fine.push(u_k);
                y_fine.push(x[3] / exp.msd.m2);
            }
            x = integrator::step(&scheme, rhs, h, &x, &[u_k]).expect("truth integration");
        }
    }
    debug_assert_eq!(u_fine.len(), n_fine);
    (u_fine, y_fine)
}

/// Generates base-rate datasets for a number of independent realizations.
/// Each realization draws fresh multisine phases, a fresh initial state and
/// fresh measurement noise from its own stream of `master_seed`.
pub fn generate_msd_dataset(
    exp: &MsdExperiment,
    master_seed: u64,
    realizations: usize,
) -> Vec<Dataset> {
    (0..realizations)
        .map(|r| {
            let draws = realization_draws(exp, master_seed, r as u64, exp.n_samples);
            let (u, y_clean) = simulate_truth(exp, &draws.multisine, &draws.x0, 1);

            let sigma_clean = Channels::from_scalars(&y_clean).std_pop()[0];
            let y = if exp.noise.snr_db.is_finite() {
                let sigma_noise = sigma_clean * 10f64.powf(-exp.noise.snr_db / 20.0);
                y_clean
                    .iter()
                    .zip(&draws.noise_normals)
                    .map(|(&c, &n)| c + sigma_noise * n)
                    .collect()
            } else {
                y_clean.clone()
            };

            let mut meta = BTreeMap::new();
            meta.insert("kind".into(), "msd".into());
            meta.insert("master_seed".into(), master_seed.to_string());
            meta.insert("realization".into(), r.to_string());
            meta.insert("snr_db".into(), format!("{}", exp.noise.snr_db));
            meta.insert("f0".into(), format!("{}", exp.f0));
            meta.insert("harmonics".into(), exp.harmonics.to_string());
            meta.insert("x0_box".into(), format!("{}", exp.x0_box));
            meta.insert("substeps".into(), exp.substeps.to_string());

            Dataset {
                ts: exp.ts,
                u: Channels::from_scalars(&u),
                y: Channels::from_scalars(&y),
                y_clean: Some(Channels::from_scalars(&y_clean)),
                split: SplitTag::Full,
                meta,
            }
        })
        .collect()
}

/// Same continuous experiment as realization `realization` of the base
/// dataset, sampled `ratio`-times faster. Inputs repeat each base-rate
/// sample `ratio` times (ZOH); outputs are noise-free ground truth.
pub fn generate_fine_dataset(
    exp: &MsdExperiment,
    master_seed: u64,
    realization: usize,
    ratio: usize,
) -> Result<Dataset> {
    if ratio < 1 {
        return Err(Error::invalid("rate ratio must be >= 1"));
    }
    if exp.substeps % ratio != 0 {
        return Err(Error::invalid(format!(
            "rate ratio {ratio} must divide the truth substep count {}",
            exp.substeps
        )));
    }
    let draws = realization_draws(exp, master_seed, realization as u64, 0);
    let (u, y) = simulate_truth(exp, &draws.multisine, &draws.x0, ratio);
    let mut meta = BTreeMap::new();
    meta.insert("kind".into(), "msd-fine".into());
    meta.insert("master_seed".into(), master_seed.to_string());
    meta.insert("realization".into(), realization.to_string());
    meta.insert("ratio".into(), ratio.to_string());
    Ok(Dataset {
        ts: exp.ts / ratio as f64,
        u: Channels::from_scalars(&u),
        y: Channels::from_scalars(&y),
        y_clean: Some(Channels::from_scalars(&y)),
        split: SplitTag::Fine,
        meta,
    })
}

/// Synthetic stand-in for the two-tank benchmark file, in its exact CSV
/// layout (`uEst,yEst,uVal,yVal`, 1024 rows, 4 s sampling): a pump fills
/// an upper tank that drains into a lower one through square-root outflow
/// laws, and the lower level is measured with mild noise. Useful for
/// exercising the benchmark pipeline when the measured records are not on
/// disk.
pub fn tanks_surrogate_csv(seed: u64) -> String {
    use std::fmt::Write as _;
    let n = 1024;
    let ts = 4.0;
    // outflow/inflow coefficients chosen so the levels stay inside the
    // tanks (roughly 1..9) for the whole excitation range
    let (a1, a2, b1) = (0.09, 0.09, 0.082);
    let rhs = |x: &[f64], u: &[f64]| {
        let q12 = a1 * x[0].max(0.0).sqrt();
        let out = a2 * x[1].max(0.0).sqrt();
        vec![b1 * u[0] - q12, q12 - out]
    };

    let scheme = IntegratorScheme::rk4();
    let record = |stream: u64| -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let ms = MultisineConfig::random_phases(1.0 / (n as f64 * ts), 24, &mut rng).unwrap();
        let mut x = vec![rng.gen_range(3.0..5.0), rng.gen_range(3.0..5.0)];
        let mut u_seq = Vec::with_capacity(n);
        let mut y_seq = Vec::with_capacity(n);
        for k in 0..n {
            // moderate band so the levels stay well inside the tanks for
            // every phase realization
            let u_k = (2.2 + 0.55 * ms.value(k as f64 * ts) / 3.46).clamp(0.8, 3.6);
            u_seq.push(u_k);
            let noise: f64 = rng.sample(StandardNormal);
            y_seq.push(x[1] + 0.02 * noise);
            x = integrator::substep_integrate(&scheme, rhs, ts, 20, &x, &[u_k]).unwrap();
        }
        (u_seq, y_seq)
    };

    let (u_est, y_est) = record(0);
    let (u_val, y_val) = record(1);
    let mut out = String::from("uEst,yEst,uVal,yVal\n");
    for k in 0..n {
        writeln!(out, "{},{},{},{}", u_est[k], y_est[k], u_val[k], y_val[k]).unwrap();
    }
    out
}

/// Contiguous 5:2:5 split: `⌊5N/12⌋` training samples, `⌊2N/12⌋`
/// validation samples, remainder test.
pub fn split_5_2_5(ds: &Dataset) -> Result<(Dataset, Dataset, Dataset)> {
    let n = ds.len();
    if n < 12 {
        return Err(Error::invalid(format!(
            "record too short for a 5:2:5 split: {n} samples, need at least 12"
        )));
    }
    let n_train = 5 * n / 12;
    let n_val = 2 * n / 12;
    Ok((
        ds.slice(0, n_train, SplitTag::Train),
        ds.slice(n_train, n_train + n_val, SplitTag::Val),
        ds.slice(n_train + n_val, n, SplitTag::Test),
    ))
}
