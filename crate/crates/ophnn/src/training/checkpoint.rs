//! Checkpoint persistence.
//!
//! Plain text, line 1 `ophnn-checkpoint v1`, scalar metadata as
//! `key = value` lines, tensors as `[array <name> <rows>x<cols>]` sections
//! with one row of 17-significant-digit decimals per line. That digit count
//! makes the format round-trip `f64` values bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::autodiff::Tensor;
use crate::encoder::{Encoder, EncoderSpec};
use crate::error::{Error, Result};
use crate::integrator::IntegratorScheme;
use crate::nn::{DenseLayer, FinalAct, Mlp, MlpSpec};
use crate::phcore::{PhDims, PhModel};
use crate::training::{EpochStats, NormalizationStats, TrainConfig};

pub const CHECKPOINT_MAGIC: &str = "ophnn-checkpoint v1";

/// Everything needed to reuse a trained model: parameters, the encoder,
/// normalization constants, the training configuration and loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PhModel,
    pub encoder: Encoder,
    pub stats: NormalizationStats,
    pub config: TrainConfig,
    pub ts: f64,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn widths_csv(widths: &[usize]) -> String {
    widths
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad width list entry '{w}'")))
        })
        .collect()
}

fn write_array(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    writeln!(out, "[array {name} {rows}x{cols}]").unwrap();
    for r in 0..rows {
        let row: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

fn write_mlp(out: &mut String, prefix: &str, mlp: &Mlp) {
    for (l, layer) in mlp.layers.iter().enumerate() {
        let (rows, cols) = (layer.w.shape()[0], layer.w.shape()[1]);
        write_array(out, &format!("{prefix}.w{l}"), rows, cols, layer.w.data());
        write_array(out, &format!("{prefix}.b{l}"), layer.b.len(), 1, layer.b.data());
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(out, "ts = {}", fmt_f64(self.ts)).unwrap();
        writeln!(out, "epoch = {}", self.epoch).unwrap();
        writeln!(out, "dims.nx = {}", self.model.dims.n_x).unwrap();
        writeln!(out, "dims.nu = {}", self.model.dims.n_u).unwrap();
        writeln!(out, "model.c = {}", fmt_f64(self.model.h_lower_bound)).unwrap();
        writeln!(out, "model.h.hidden = {}", widths_csv(&self.model.h_net.spec.hidden)).unwrap();
        writeln!(out, "model.a.hidden = {}", widths_csv(&self.model.a_net.spec.hidden)).unwrap();
        writeln!(out, "model.b.hidden = {}", widths_csv(&self.model.b_net.spec.hidden)).unwrap();
        writeln!(out, "model.g.hidden = {}", widths_csv(&self.model.g_net.spec.hidden)).unwrap();
        writeln!(out, "encoder.na = {}", self.encoder.spec.n_a).unwrap();
        writeln!(out, "encoder.nb = {}", self.encoder.spec.n_b).unwrap();
        writeln!(out, "encoder.hidden = {}", widths_csv(&self.encoder.spec.hidden)).unwrap();
        writeln!(out, "train.truncation = {}", self.config.truncation).unwrap();
        writeln!(out, "train.batch_size = {}", self.config.batch_size).unwrap();
        writeln!(out, "train.lr = {}", fmt_f64(self.config.learning_rate)).unwrap();
        writeln!(out, "train.max_epochs = {}", self.config.max_epochs).unwrap();
        writeln!(out, "train.patience = {}", self.config.patience).unwrap();
        writeln!(out, "train.seed = {}", self.config.seed).unwrap();
        writeln!(out, "train.scheme = {}", self.config.scheme.name()).unwrap();
        match self.config.clip_norm {
            Some(c) => writeln!(out, "train.clip_norm = {}", fmt_f64(c)).unwrap(),
            None => writeln!(out, "train.clip_norm = none").unwrap(),
        }

        write_mlp(&mut out, "model.h", &self.model.h_net);
        write_mlp(&mut out, "model.a", &self.model.a_net);
        write_mlp(&mut out, "model.b", &self.model.b_net);
        write_mlp(&mut out, "model.g", &self.model.g_net);
        write_mlp(&mut out, "encoder", &self.encoder.net);

        let n_u = self.stats.u_mean.len();
        let n_y = self.stats.y_mean.len();
        write_array(&mut out, "norm.u_mean", 1, n_u, &self.stats.u_mean);
        write_array(&mut out, "norm.u_std", 1, n_u, &self.stats.u_std);
        write_array(&mut out, "norm.y_mean", 1, n_y, &self.stats.y_mean);
        write_array(&mut out, "norm.y_std", 1, n_y, &self.stats.y_std);

        if !self.history.is_empty() {
            let mut flat = Vec::with_capacity(self.history.len() * 3);
            for h in &self.history {
                flat.push(h.epoch as f64);
                flat.push(h.train_loss);
                flat.push(h.val_nrms);
            }
            write_array(&mut out, "history", self.history.len(), 3, &flat);
        }

        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: PathBuf::from(path),
            line,
            msg,
        };

        let mut lines = text.lines().enumerate().peekable();
        match lines.next() {
            Some((_, l)) if l.trim() == CHECKPOINT_MAGIC => {}
            other => {
                return Err(parse_err(
                    1,
                    format!("expected '{CHECKPOINT_MAGIC}', got '{}'", other.map_or("", |(_, l)| l)),
                ))
            }
        }

        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut arrays: BTreeMap<String, Tensor> = BTreeMap::new();
        while let Some((idx, line)) = lines.next() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(head) = line.strip_prefix("[array ") {
                let head = head.strip_suffix(']').ok_or_else(|| {
                    parse_err(idx + 1, format!("malformed array header '{line}'"))
                })?;
                let mut parts = head.split_whitespace();
                let name = parts
                    .next()
                    .ok_or_else(|| parse_err(idx + 1, "array header missing name".into()))?;
                let dims = parts
                    .next()
                    .ok_or_else(|| parse_err(idx + 1, "array header missing dims".into()))?;
                let (r, c) = dims
                    .split_once('x')
                    .ok_or_else(|| parse_err(idx + 1, format!("malformed dims '{dims}'")))?;
                let rows: usize = r
                    .parse()
                    .map_err(|_| parse_err(idx + 1, format!("bad row count '{r}'")))?;
                let cols: usize = c
                    .parse()
                    .map_err(|_| parse_err(idx + 1, format!("bad col count '{c}'")))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (ridx, row) = lines
                        .next()
                        .ok_or_else(|| parse_err(idx + 1, format!("array {name} truncated")))?;
                    for field in row.split_whitespace() {
                        data.push(field.parse::<f64>().map_err(|_| {
                            parse_err(ridx + 1, format!("bad float '{field}' in array {name}"))
                        })?);
                    }
                }
                if data.len() != rows * cols {
                    return Err(parse_err(
                        idx + 1,
                        format!("array {name}: expected {} values, got {}", rows * cols, data.len()),
                    ));
                }
                arrays.insert(name.to_string(), Tensor::matrix(rows, cols, data)?);
            } else if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                return Err(parse_err(idx + 1, format!("unparseable line '{line}'")));
            }
        }

        let want = |key: &str| -> Result<String> {
            kv.get(key)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("checkpoint missing key '{key}'")))
        };
        let want_usize = |key: &str| -> Result<usize> {
            want(key)?
                .parse()
                .map_err(|_| Error::invalid(format!("bad integer for '{key}'")))
        };
        let want_f64 = |key: &str| -> Result<f64> {
            want(key)?
                .parse()
                .map_err(|_| Error::invalid(format!("bad float for '{key}'")))
        };

        let ts = want_f64("ts")?;
        let epoch = want_usize("epoch")?;
        let dims = PhDims::new(want_usize("dims.nx")?, want_usize("dims.nu")?)?;
        let c = want_f64("model.c")?;

        let take_mlp = |prefix: &str, spec: MlpSpec| -> Result<Mlp> {
            let n_layers = spec.hidden.len() + 1;
            let mut layers = Vec::with_capacity(n_layers);
            for l in 0..n_layers {
                let w = arrays
                    .get(&format!("{prefix}.w{l}"))
                    .ok_or_else(|| Error::invalid(format!("checkpoint missing array {prefix}.w{l}")))?
                    .clone();
                let b_arr = arrays
                    .get(&format!("{prefix}.b{l}"))
                    .ok_or_else(|| Error::invalid(format!("checkpoint missing array {prefix}.b{l}")))?;
                let b = crate::autodiff::Tensor::vector(b_arr.data());
                layers.push(DenseLayer { w, b });
            }
            Mlp::from_layers(spec, layers)
        };

        let nx = dims.n_x;
        let h_net = take_mlp(
            "model.h",
            MlpSpec::new(nx, parse_widths(&want("model.h.hidden")?)?, 1, FinalAct::Elu)?,
        )?;
        let a_net = take_mlp(
            "model.a",
            MlpSpec::new(nx, parse_widths(&want("model.a.hidden")?)?, nx * nx, FinalAct::Linear)?,
        )?;
        let b_net = take_mlp(
            "model.b",
            MlpSpec::new(nx, parse_widths(&want("model.b.hidden")?)?, nx * nx, FinalAct::Linear)?,
        )?;
        let g_net = take_mlp(
            "model.g",
            MlpSpec::new(
                nx,
                parse_widths(&want("model.g.hidden")?)?,
                nx * dims.n_u,
                FinalAct::Linear,
            )?,
        )?;
        let model = PhModel::from_nets(dims, h_net, a_net, b_net, g_net, c)?;

        let norm = |name: &str| -> Result<Vec<f64>> {
            Ok(arrays
                .get(name)
                .ok_or_else(|| Error::invalid(format!("checkpoint missing array {name}")))?
                .data()
                .to_vec())
        };
        let stats = NormalizationStats {
            u_mean: norm("norm.u_mean")?,
            u_std: norm("norm.u_std")?,
            y_mean: norm("norm.y_mean")?,
            y_std: norm("norm.y_std")?,
        };

        let enc_spec = EncoderSpec::new(
            want_usize("encoder.na")?,
            want_usize("encoder.nb")?,
            dims.n_x,
            dims.n_u,
            stats.y_mean.len(),
            parse_widths(&want("encoder.hidden")?)?,
        )?;
        let enc_net = take_mlp(
            "encoder",
            MlpSpec::new(enc_spec.input_width(), enc_spec.hidden.clone(), enc_spec.n_x, FinalAct::Linear)?,
        )?;
        let encoder = Encoder::from_net(enc_spec, enc_net)?;

        let clip_raw = want("train.clip_norm")?;
        let config = TrainConfig {
            truncation: want_usize("train.truncation")?,
            n_a: encoder.spec.n_a,
            n_b: encoder.spec.n_b,
            batch_size: want_usize("train.batch_size")?,
            learning_rate: want_f64("train.lr")?,
            max_epochs: want_usize("train.max_epochs")?,
            patience: want_usize("train.patience")?,
            seed: want("train.seed")?
                .parse()
                .map_err(|_| Error::invalid("bad integer for 'train.seed'"))?,
            scheme: IntegratorScheme::parse(&want("train.scheme")?)?,
            clip_norm: if clip_raw == "none" {
                None
            } else {
                Some(
                    clip_raw
                        .parse()
                        .map_err(|_| Error::invalid("bad float for 'train.clip_norm'"))?,
                )
            },
        };

        let history = match arrays.get("history") {
            None => vec![],
            Some(t) => t
                .data()
                .chunks_exact(3)
                .map(|row| EpochStats {
                    epoch: row[0] as usize,
                    train_loss: row[1],
                    val_nrms: row[2],
                })
                .collect(),
        };

        Ok(Checkpoint {
            model,
            encoder,
            stats,
            config,
            ts,
            epoch,
            history,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phcore::PhArchitecture;

    fn sample_checkpoint() -> Checkpoint {
        let dims = PhDims::new(3, 1).unwrap();
        let model = PhModel::init(
            dims,
            &PhArchitecture {
                h_hidden: vec![6, 4],
                a_hidden: vec![5],
                b_hidden: vec![],
                g_hidden: vec![3],
            },
            0.25,
            9,
        );
        let encoder = Encoder::init(EncoderSpec::new(4, 3, 3, 1, 1, vec![10]).unwrap(), 10);
        Checkpoint {
            model,
            encoder,
            stats: NormalizationStats {
                u_mean: vec![0.125],
                u_std: vec![2.5],
                y_mean: vec![-0.7],
                y_std: vec![0.31],
            },
            config: TrainConfig {
                truncation: 12,
                n_a: 4,
                n_b: 3,
                batch_size: 16,
                learning_rate: 1e-3,
                max_epochs: 77,
                patience: 5,
                seed: 1234,
                scheme: IntegratorScheme::rk4(),
                clip_norm: Some(100.0),
            },
            ts: 0.1,
            epoch: 42,
            history: vec![
                EpochStats {
                    epoch: 1,
                    train_loss: 0.5,
                    val_nrms: 0.9,
                },
                EpochStats {
                    epoch: 2,
                    train_loss: 0.25,
                    val_nrms: 0.8,
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_lossless_and_byte_stable() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("model.ckpt");
        ckpt.save(&p1).unwrap();
        let back = Checkpoint::load(&p1).unwrap();
        assert_eq!(back, ckpt);

        let p2 = dir.path().join("model2.ckpt");
        back.save(&p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn first_line_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        fs::write(&p, "something else\n").unwrap();
        let err = Checkpoint::load(&p).unwrap_err().to_string();
        assert!(err.contains(CHECKPOINT_MAGIC), "got: {err}");
    }
}
