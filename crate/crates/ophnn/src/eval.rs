//! Model evaluation: RMS/NRMS metrics, full-record simulation with
//! encoder-estimated initial state, the multi-rate integrator cross-test
//! grid, noise sweeps and benchmark-file loading.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::datagen::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::integrator::{rollout_outputs_with, IntegratorScheme};
use crate::signal::Channels;
use crate::training::{denormalize_outputs, normalize, Checkpoint};

/// Root-mean-square error `√(mean_k ‖y_k − ŷ_k‖²)`.
pub fn rms(y: &Channels, yhat: &Channels) -> Result<f64> {
    if y.len() != yhat.len() || y.channels() != yhat.channels() {
        return Err(Error::ShapeMismatch {
            op: "rms",
            lhs: vec![y.len(), y.channels()],
            rhs: vec![yhat.len(), yhat.channels()],
        });
    }
    if y.len() < 2 {
        return Err(Error::invalid("rms: need at least 2 samples"));
    }
    let sse: f64 = y
        .flat()
        .iter()
        .zip(yhat.flat())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Population output deviation `√(mean_k ‖y_k − ȳ‖²)`; the NRMS
/// denominator (σ_y with the 1/N divisor).
pub fn sigma_y(y: &Channels) -> f64 {
    let mean = y.mean();
    let sse: f64 = y
        .rows()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .map(|(&v, &m)| (v - m) * (v - m))
                .sum::<f64>()
        })
        .sum();
    (sse / y.len() as f64).sqrt()
}

/// Normalized RMS error: `RMS / σ_y`.
pub fn nrms(y: &Channels, yhat: &Channels) -> Result<f64> {
    let r = rms(y, yhat)?;
    let s = sigma_y(y);
    if s <= 0.0 {
        return Err(Error::invalid("nrms: output deviation σ_y is zero"));
    }
    Ok(r / s)
}

/// Metric pair attached to one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub nrms: f64,
    pub rms: f64,
}

/// Output of [`simulate_on_record`]: predictions from the first sample
/// after the encoder warm-up to the end of the record.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Predictions for sample indices `warmup..record length`, in physical
    /// units.
    pub yhat: Channels,
    /// Number of leading samples excluded as encoder warm-up.
    pub warmup: usize,
    pub runtime_s: f64,
}

impl Simulation {
    /// NRMS/RMS against the record, masking the warm-up prefix.
    pub fn metrics(&self, ds: &Dataset) -> Result<Metrics> {
        let target = ds.y.slice(self.warmup, ds.len());
        Ok(Metrics {
            nrms: nrms(&target, &self.yhat)?,
            rms: rms(&target, &self.yhat)?,
        })
    }
}

/// Simulates a trained model over a whole record.
///
/// The encoder consumes the first valid window of original-rate samples
/// (the model was trained at `checkpoint.ts`; a rate ratio `n` means the
/// record is sampled at `ts/n`, and windows take every n-th sample). The
/// rollout then runs at the record's own rate. The first
/// `max(n_a,n_b)·ratio` samples are the encoder warm-up and carry no
/// predictions.
pub fn simulate_on_record(
    checkpoint: &Checkpoint,
    ds: &Dataset,
    scheme: &IntegratorScheme,
    ratio: usize,
) -> Result<Simulation> {
    let started = Instant::now();
    ds.validate()?;
    let model = &checkpoint.model;
    if ds.n_u() != model.dims.n_u || ds.n_y() != model.dims.n_y() {
        return Err(Error::invalid(format!(
            "dataset channels (n_u={}, n_y={}) do not match model (n_u={}, n_y={})",
            ds.n_u(),
            ds.n_y(),
            model.dims.n_u,
            model.dims.n_y()
        )));
    }
    if ratio == 0 {
        return Err(Error::invalid("rate ratio must be >= 1"));
    }
    let ts_fine = checkpoint.ts / ratio as f64;
    if (ds.ts - ts_fine).abs() > 1e-9 * checkpoint.ts.max(1.0) {
        return Err(Error::invalid(format!(
            "dataset period {} does not equal checkpoint period {} / ratio {ratio}",
            ds.ts, checkpoint.ts
        )));
    }

    let spec = &checkpoint.encoder.spec;
    let lag = spec.max_lag();
    let warmup = lag * ratio;
    if ds.len() <= warmup + 1 {
        return Err(Error::invalid(format!(
            "record of {} samples is shorter than the encoder warm-up of {warmup}",
            ds.len()
        )));
    }

    let norm = normalize(ds, &checkpoint.stats);

    // encoder windows from original-rate samples (indices k·ratio)
    let mut u_past = Vec::with_capacity(spec.n_b * spec.n_u);
    for k in lag - spec.n_b..lag {
        u_past.extend_from_slice(norm.u.row(k * ratio));
    }
    let mut y_past = Vec::with_capacity(spec.n_a * spec.n_y);
    for k in lag + 1 - spec.n_a..=lag {
        y_past.extend_from_slice(norm.y.row(k * ratio));
    }
    let x0 = checkpoint.encoder.encode(&u_past, &y_past)?;

    let u_tail = norm.u.slice(warmup, norm.len());
    let yhat_norm = rollout_outputs_with(
        scheme,
        ts_fine,
        &x0,
        &u_tail,
        |x, u| model.f_theta(x, u).expect("validated dims"),
        |x| model.h_theta(x).expect("validated dims"),
    )?;
    let yhat = denormalize_outputs(&yhat_norm, &checkpoint.stats);

    Ok(Simulation {
        yhat,
        warmup,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub dataset: String,
    pub train_scheme: String,
    pub test_scheme: String,
    pub ratio: usize,
    pub nrms: f64,
    pub rms: f64,
    pub n_samples: usize,
    pub runtime_s: f64,
}

/// Keyed, order-independent collection of evaluation results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Sorts rows by key so report files do not depend on evaluation order.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.dataset, &a.train_scheme, &a.test_scheme, a.ratio).cmp(&(
                &b.dataset,
                &b.train_scheme,
                &b.test_scheme,
                b.ratio,
            ))
        });
    }

    /// Finds the NRMS for a (train scheme, test scheme, ratio) cell.
    pub fn nrms_for(&self, train_scheme: &str, test_scheme: &str, ratio: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.train_scheme == train_scheme && r.test_scheme == test_scheme && r.ratio == ratio)
            .map(|r| r.nrms)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out =
            String::from("dataset,train_scheme,test_scheme,ratio,nrms,rms,n_samples,runtime_s\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3}",
                r.dataset, r.train_scheme, r.test_scheme, r.ratio, r.nrms, r.rms, r.n_samples, r.runtime_s
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// The multi-rate cross-test: each checkpoint (Euler-trained and
/// RK4-trained) is simulated on every fine dataset with both test schemes.
pub fn multirate_table(
    checkpoint_euler: &Checkpoint,
    checkpoint_rk4: &Checkpoint,
    fine_datasets: &[(usize, Dataset)],
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for (train_name, ckpt) in [("euler", checkpoint_euler), ("rk4", checkpoint_rk4)] {
        for (ratio, ds) in fine_datasets {
            for test_scheme in [IntegratorScheme::euler(), IntegratorScheme::rk4()] {
                let sim = simulate_on_record(ckpt, ds, &test_scheme, *ratio)?;
                let m = sim.metrics(ds)?;
                report.rows.push(EvalRow {
                    dataset: format!("fine_r{ratio}"),
                    train_scheme: train_name.to_string(),
                    test_scheme: test_scheme.name().to_string(),
                    ratio: *ratio,
                    nrms: m.nrms,
                    rms: m.rms,
                    n_samples: ds.len() - sim.warmup,
                    runtime_s: sim.runtime_s,
                });
            }
        }
    }
    report.sort();
    Ok(report)
}

/// Runs the supplied train-and-test pipeline once per SNR level and
/// reports the test metrics. The pipeline returns the trained checkpoint
/// and the test record it should be scored on.
pub fn noise_sweep(
    snrs_db: &[f64],
    mut pipeline: impl FnMut(f64) -> Result<(Checkpoint, Dataset)>,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for &snr in snrs_db {
        let (ckpt, test_ds) = pipeline(snr)?;
        let scheme = ckpt.config.scheme.clone();
        let sim = simulate_on_record(&ckpt, &test_ds, &scheme, 1)?;
        let m = sim.metrics(&test_ds)?;
        report.rows.push(EvalRow {
            dataset: format!("snr_{snr}"),
            train_scheme: scheme.name().to_string(),
            test_scheme: scheme.name().to_string(),
            ratio: 1,
            nrms: m.nrms,
            rms: m.rms,
            n_samples: test_ds.len() - sim.warmup,
            runtime_s: sim.runtime_s,
        });
    }
    report.sort();
    Ok(report)
}

/// Loads the two-tank benchmark file: columns `uEst,yEst,uVal,yVal`, 1024
/// rows, 4-second sampling. The estimation record becomes the training
/// split; the first 512 validation samples form the validation split; the
/// full validation record is the test split.
pub fn load_benchmark_csv(path: &Path) -> Result<(Dataset, Dataset, Dataset)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut idx = [0usize; 4];
    for (i, name) in ["uEst", "yEst", "uVal", "yVal"].iter().enumerate() {
        idx[i] = cols.iter().position(|c| c == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column '{name}'"),
        })?;
    }

    let mut series: [Vec<f64>; 4] = Default::default();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        for (i, &col) in idx.iter().enumerate() {
            let v = fields[col].trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected a number, got '{}'", fields[col]),
            })?;
            series[i].push(v);
        }
    }
    let n = series[0].len();
    if n != 1024 {
        return Err(Error::invalid(format!(
            "benchmark file must have 1024 samples, found {n}"
        )));
    }

    let ts = 4.0;
    let mk = |u: &[f64], y: &[f64], split: SplitTag| Dataset {
        ts,
        u: Channels::from_scalars(u),
        y: Channels::from_scalars(y),
        y_clean: None,
        split,
        meta: std::collections::BTreeMap::from([(
            "kind".to_string(),
            "benchmark-csv".to_string(),
        )]),
    };
    let train = mk(&series[0], &series[1], SplitTag::Train);
    let val = mk(&series[2][..512], &series[3][..512], SplitTag::Val);
    let test = mk(&series[2], &series[3], SplitTag::Test);
    Ok((train, val, test))
}

/// Writes a per-sample simulation trace `t,y,yhat,error`, starting after
/// the warm-up.
pub fn write_trace_csv(path: &Path, ds: &Dataset, sim: &Simulation) -> Result<()> {
    let mut out = String::from("t,y,yhat,error\n");
    for k in 0..sim.yhat.len() {
        let sample = k + sim.warmup;
        let t = sample as f64 * ds.ts;
        let y = ds.y.row(sample);
        let yh = sim.yhat.row(k);
        if y.len() == 1 {
            writeln!(out, "{},{},{},{}", t, y[0], yh[0], y[0] - yh[0]).unwrap();
        } else {
            let row: Vec<String> = y
                .iter()
                .map(ToString::to_string)
                .chain(yh.iter().map(ToString::to_string))
                .chain(y.iter().zip(yh).map(|(a, b)| (a - b).to_string()))
                .collect();
            writeln!(out, "{},{}", t, row.join(",")).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
