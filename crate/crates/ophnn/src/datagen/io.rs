//! Dataset CSV files and their metadata sidecars.
//!
//! A record is a plain comma-separated table with header
//! `t,u,y[,y_clean]` (multichannel signals widen to `u0,u1,…`). Provenance
//! lives next to the CSV in `<name>.meta` as `key = value` lines, including
//! the sampling period and split tag. Floats are written in Rust's
//! shortest round-trip form, so a rerun with the same seed is byte
//! identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::datagen::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::signal::Channels;

fn channel_headers(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// Writes `<path>` and the `<path minus extension>.meta` sidecar.
pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut header = vec!["t".to_string()];
    header.extend(channel_headers("u", ds.n_u()));
    header.extend(channel_headers("y", ds.n_y()));
    if ds.y_clean.is_some() {
        header.extend(channel_headers("y_clean", ds.n_y()));
    }

    let mut out = String::with_capacity(ds.len() * 32);
    out.push_str(&header.join(","));
    out.push('\n');
    for k in 0..ds.len() {
        write!(out, "{}", k as f64 * ds.ts).unwrap();
        for v in ds.u.row(k) {
            write!(out, ",{v}").unwrap();
        }
        for v in ds.y.row(k) {
            write!(out, ",{v}").unwrap();
        }
        if let Some(clean) = &ds.y_clean {
            for v in clean.row(k) {
                write!(out, ",{v}").unwrap();
            }
        }
        out.push('\n');
    }
    fs::write(path, out)?;

    let mut meta = String::new();
    writeln!(meta, "ts = {}", ds.ts).unwrap();
    writeln!(meta, "split = {}", ds.split.name()).unwrap();
    writeln!(meta, "n_u = {}", ds.n_u()).unwrap();
    writeln!(meta, "n_y = {}", ds.n_y()).unwrap();
    for (k, v) in &ds.meta {
        writeln!(meta, "{k} = {v}").unwrap();
    }
    fs::write(path.with_extension("meta"), meta)?;
    Ok(())
}

fn parse_float(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("expected a number, got '{field}'"),
    })
}

/// Reads a dataset CSV plus its `.meta` sidecar (sampling period, split,
/// provenance). Without a sidecar the sampling period is inferred from the
/// time column.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected first column 't', got '{}'", cols.first().unwrap_or(&"")),
        });
    }
    let count = |prefix: &str| -> usize {
        let plain = cols.iter().filter(|&&c| c == prefix).count();
        if plain > 0 {
            plain
        } else {
            cols.iter()
                .filter(|c| {
                    c.strip_prefix(prefix)
                        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|ch| ch.is_ascii_digit()))
                })
                .count()
        }
    };
    let n_u = count("u");
    let n_y = count("y");
    let n_clean = count("y_clean");
    if n_u == 0 || n_y == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("header must name u and y columns, got '{header}'"),
        });
    }
    let expected_cols = 1 + n_u + n_y + n_clean;
    if cols.len() != expected_cols {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected {expected_cols} columns, header has {}", cols.len()),
        });
    }

    let mut times = Vec::new();
    let mut u = Channels::new(n_u);
    let mut y = Channels::new(n_y);
    let mut clean = if n_clean > 0 { Some(Channels::new(n_y)) } else { None };
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected {expected_cols} fields, got {}", fields.len()),
            });
        }
        let lineno = idx + 1;
        times.push(parse_float(path, lineno, fields[0])?);
        let mut at = 1;
        let mut row = Vec::with_capacity(n_u.max(n_y));
        for _ in 0..n_u {
            row.push(parse_float(path, lineno, fields[at])?);
            at += 1;
        }
        u.push_row(&row);
        row.clear();
        for _ in 0..n_y {
            row.push(parse_float(path, lineno, fields[at])?);
            at += 1;
        }
        y.push_row(&row);
        if let Some(c) = &mut clean {
            row.clear();
            for _ in 0..n_y {
                row.push(parse_float(path, lineno, fields[at])?);
                at += 1;
            }
            c.push_row(&row);
        }
    }
    if u.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            msg: "no samples".into(),
        });
    }

    // sidecar
    let mut meta = BTreeMap::new();
    let mut ts = None;
    let mut split = SplitTag::Full;
    let sidecar = path.with_extension("meta");
    if sidecar.exists() {
        for (idx, line) in fs::read_to_string(&sidecar)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: sidecar.clone(),
                line: idx + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "ts" => ts = Some(parse_float(&sidecar, idx + 1, v)?),
                "split" => split = SplitTag::parse(v)?,
                "n_u" | "n_y" => {}
                _ => {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
        }
    }
    let ts = match ts {
        Some(t) => t,
        None if times.len() >= 2 => times[1] - times[0],
        None => 1.0,
    };
    if ts <= 0.0 {
        return Err(Error::invalid(format!("non-positive sampling period {ts}")));
    }

    let ds = Dataset {
        ts,
        u,
        y,
        y_clean: clean,
        split,
        meta,
    };
    ds.validate()?;
    Ok(ds)
}
