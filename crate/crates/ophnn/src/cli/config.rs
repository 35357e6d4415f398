//! Experiment configuration files.
//!
//! Flat INI-style text: `[section]` headers, `key = value` lines, `#` or
//! `;` comments. Unknown sections or keys are hard errors, so a typo can
//! never silently fall back to a default. Every command that consumes a
//! config writes the fully resolved form next to its outputs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// What generates (or supplies) the data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataKind {
    Msd,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub kind: DataKind,
    pub n: usize,
    pub ts: f64,
    /// `inf` disables measurement noise.
    pub snr_db: f64,
    pub f0: f64,
    pub harmonics: usize,
    pub x0_box: f64,
    pub substeps: usize,
    /// Benchmark CSV path for `kind = csv`.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub nx: usize,
    pub c: f64,
    pub h_hidden: Vec<usize>,
    pub a_hidden: Vec<usize>,
    pub b_hidden: Vec<usize>,
    pub g_hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSection {
    pub na: usize,
    pub nb: usize,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub truncation: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub scheme: String,
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub ratios: Vec<usize>,
    /// Empty means "use the checkpoint's training scheme".
    pub scheme: String,
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub encoder: EncoderSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSection {
                kind: DataKind::Msd,
                n: 5000,
                ts: 0.1,
                snr_db: 50.0,
                f0: 0.01,
                harmonics: 100,
                x0_box: 1.0,
                substeps: 100,
                path: String::new(),
            },
            model: ModelSection {
                nx: 4,
                c: 0.0,
                h_hidden: vec![16, 16],
                a_hidden: vec![8],
                b_hidden: vec![8],
                g_hidden: vec![8],
            },
            encoder: EncoderSection {
                na: 20,
                nb: 20,
                hidden: vec![64, 64],
            },
            train: TrainSection {
                truncation: 100,
                batch_size: 256,
                lr: 1e-3,
                max_epochs: 100,
                patience: 0,
                scheme: "rk4".into(),
                clip_norm: Some(100.0),
            },
            eval: EvalSection {
                ratios: vec![1, 2, 5, 10],
                scheme: String::new(),
            },
        }
    }
}

fn parse_widths(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.trim().is_empty() {
        return Ok(vec![]);
    }
    v.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("key '{key}': bad width '{w}'")))
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{v}'")))
}

fn parse_snr(key: &str, v: &str) -> Result<f64> {
    if v.trim() == "inf" {
        Ok(f64::INFINITY)
    } else {
        parse_num(key, v)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses a config text on top of the defaults, rejecting unknown keys.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find(['#', ';']) {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: malformed section '{line}'", idx + 1)))?;
                match name {
                    "data" | "model" | "encoder" | "train" | "eval" => section = name.to_string(),
                    other => {
                        return Err(Error::Config(format!("line {}: unknown section '[{other}]'", idx + 1)))
                    }
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", idx + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let full = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            cfg.set(&full, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "data.kind" => {
                self.data.kind = match v {
                    "msd" => DataKind::Msd,
                    "csv" => DataKind::Csv,
                    other => {
                        return Err(Error::Config(format!(
                            "key 'data.kind': expected msd or csv, got '{other}'"
                        )))
                    }
                }
            }
            "data.n" => self.data.n = parse_num(key, v)?,
            "data.ts" => self.data.ts = parse_num(key, v)?,
            "data.snr_db" => self.data.snr_db = parse_snr(key, v)?,
            "data.f0" => self.data.f0 = parse_num(key, v)?,
            "data.harmonics" => self.data.harmonics = parse_num(key, v)?,
            "data.x0_box" => self.data.x0_box = parse_num(key, v)?,
            "data.substeps" => self.data.substeps = parse_num(key, v)?,
            "data.path" => self.data.path = v.to_string(),
            "model.nx" => self.model.nx = parse_num(key, v)?,
            "model.c" => self.model.c = parse_num(key, v)?,
            "model.h_hidden" => self.model.h_hidden = parse_widths(key, v)?,
            "model.a_hidden" => self.model.a_hidden = parse_widths(key, v)?,
            "model.b_hidden" => self.model.b_hidden = parse_widths(key, v)?,
            "model.g_hidden" => self.model.g_hidden = parse_widths(key, v)?,
            "encoder.na" => self.encoder.na = parse_num(key, v)?,
            "encoder.nb" => self.encoder.nb = parse_num(key, v)?,
            "encoder.hidden" => self.encoder.hidden = parse_widths(key, v)?,
            "train.truncation" => self.train.truncation = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.lr" => self.train.lr = parse_num(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse_num(key, v)?,
            "train.patience" => self.train.patience = parse_num(key, v)?,
            "train.scheme" => self.train.scheme = v.to_string(),
            "train.clip_norm" => {
                self.train.clip_norm = if v == "none" { None } else { Some(parse_num(key, v)?) }
            }
            "eval.ratios" => {
                self.eval.ratios = parse_widths(key, v)?;
                if self.eval.ratios.is_empty() {
                    return Err(Error::Config("key 'eval.ratios': must not be empty".into()));
                }
            }
            "eval.scheme" => self.eval.scheme = v.to_string(),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        crate::integrator::IntegratorScheme::parse(&self.train.scheme)?;
        if !self.eval.scheme.is_empty() {
            crate::integrator::IntegratorScheme::parse(&self.eval.scheme)?;
        }
        if self.data.kind == DataKind::Csv && self.data.path.is_empty() {
            return Err(Error::Config("data.kind = csv requires data.path".into()));
        }
        if self.data.ts <= 0.0 {
            return Err(Error::Config("data.ts must be > 0".into()));
        }
        for &r in &self.eval.ratios {
            if r == 0 {
                return Err(Error::Config("eval.ratios entries must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Canonical dump of every resolved value; parses back to `self`.
    pub fn resolved(&self) -> String {
        let widths = |w: &[usize]| {
            w.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "\n[data]").unwrap();
        writeln!(
            out,
            "kind = {}",
            match self.data.kind {
                DataKind::Msd => "msd",
                DataKind::Csv => "csv",
            }
        )
        .unwrap();
        writeln!(out, "n = {}", self.data.n).unwrap();
        writeln!(out, "ts = {}", self.data.ts).unwrap();
        if self.data.snr_db.is_finite() {
            writeln!(out, "snr_db = {}", self.data.snr_db).unwrap();
        } else {
            writeln!(out, "snr_db = inf").unwrap();
        }
        writeln!(out, "f0 = {}", self.data.f0).unwrap();
        writeln!(out, "harmonics = {}", self.data.harmonics).unwrap();
        writeln!(out, "x0_box = {}", self.data.x0_box).unwrap();
        writeln!(out, "substeps = {}", self.data.substeps).unwrap();
        if !self.data.path.is_empty() {
            writeln!(out, "path = {}", self.data.path).unwrap();
        }
        writeln!(out, "\n[model]").unwrap();
        writeln!(out, "nx = {}", self.model.nx).unwrap();
        writeln!(out, "c = {}", self.model.c).unwrap();
        writeln!(out, "h_hidden = {}", widths(&self.model.h_hidden)).unwrap();
        writeln!(out, "a_hidden = {}", widths(&self.model.a_hidden)).unwrap();
        writeln!(out, "b_hidden = {}", widths(&self.model.b_hidden)).unwrap();
        writeln!(out, "g_hidden = {}", widths(&self.model.g_hidden)).unwrap();
        writeln!(out, "\n[encoder]").unwrap();
        writeln!(out, "na = {}", self.encoder.na).unwrap();
        writeln!(out, "nb = {}", self.encoder.nb).unwrap();
        writeln!(out, "hidden = {}", widths(&self.encoder.hidden)).unwrap();
        writeln!(out, "\n[train]").unwrap();
        writeln!(out, "truncation = {}", self.train.truncation).unwrap();
        writeln!(out, "batch_size = {}", self.train.batch_size).unwrap();
        writeln!(out, "lr = {}", self.train.lr).unwrap();
        writeln!(out, "max_epochs = {}", self.train.max_epochs).unwrap();
        writeln!(out, "patience = {}", self.train.patience).unwrap();
        writeln!(out, "scheme = {}", self.train.scheme).unwrap();
        match self.train.clip_norm {
            Some(c) => writeln!(out, "clip_norm = {c}").unwrap(),
            None => writeln!(out, "clip_norm = none").unwrap(),
        }
        writeln!(out, "\n[eval]").unwrap();
        writeln!(out, "ratios = {}", widths(&self.eval.ratios)).unwrap();
        if !self.eval.scheme.is_empty() {
            writeln!(out, "scheme = {}", self.eval.scheme).unwrap();
        }
        out
    }
}
