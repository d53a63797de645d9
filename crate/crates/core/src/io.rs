//! File formats: feature CSVs, label files, model files, and the
//! key=value run configuration.
//!
//! Floats are serialized with 17 significant digits so write-then-read
//! round-trips reproduce every value bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::aas::AasConfig;
use crate::error::{Error, Result};
use crate::loss::MetricParams;
use crate::train::TrainConfig;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a headerless comma-separated feature file. With `labeled`, the
/// last column is an integer label.
pub fn read_dataset(path: &Path, labeled: bool) -> Result<(DMatrix<f64>, Option<Vec<i32>>)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i32> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let expect = *width.get_or_insert(cells.len());
        if cells.len() != expect {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("expected {expect} columns, found {}", cells.len()),
            ));
        }
        let feat_cells = if labeled {
            if cells.len() < 2 {
                return Err(parse_err(path, lineno + 1, "labeled row needs >= 2 columns"));
            }
            let lbl: i32 = cells[cells.len() - 1].trim().parse().map_err(|_| {
                parse_err(path, lineno + 1, format!("bad label {:?}", cells[cells.len() - 1]))
            })?;
            labels.push(lbl);
            &cells[..cells.len() - 1]
        } else {
            &cells[..]
        };
        let mut row = Vec::with_capacity(feat_cells.len());
        for cell in feat_cells {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(path, lineno + 1, format!("non-numeric cell {cell:?}"))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, "empty dataset"));
    }
    let d = rows[0].len();
    let data = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    Ok((data, if labeled { Some(labels) } else { None }))
}

/// Writes a feature matrix (optionally with a trailing label column).
pub fn write_dataset(path: &Path, data: &DMatrix<f64>, labels: Option<&[i32]>) -> Result<()> {
    let mut out = String::new();
    for i in 0..data.nrows() {
        let mut cells: Vec<String> = (0..data.ncols()).map(|j| fmt_float(data[(i, j)])).collect();
        if let Some(lbls) = labels {
            cells.push(lbls[i].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a labels file: one integer per line, −1 = noise.
pub fn read_labels(path: &Path) -> Result<Vec<i32>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        labels.push(line.trim().parse().map_err(|_| {
            parse_err(path, lineno + 1, format!("bad label {line:?}"))
        })?);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[i32]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Writes the model: a `d l alpha` header, then `d` rows of `L` and `d`
/// rows of `R`, space-delimited.
pub fn write_model(path: &Path, params: &MetricParams) -> Result<()> {
    let (d, l_dim) = params.l().shape();
    let mut out = format!("{d} {l_dim} {}\n", fmt_float(params.alpha_degrees()));
    for m in [params.l(), params.r()] {
        for i in 0..d {
            let row: Vec<String> = (0..l_dim).map(|j| fmt_float(m[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_model(path: &Path) -> Result<MetricParams> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty model file"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(parse_err(path, 1, "header must be: d l alpha"));
    }
    let d: usize = parts[0]
        .parse()
        .map_err(|_| parse_err(path, 1, "bad d"))?;
    let l_dim: usize = parts[1]
        .parse()
        .map_err(|_| parse_err(path, 1, "bad l"))?;
    let alpha: f64 = parts[2]
        .parse()
        .map_err(|_| parse_err(path, 1, "bad alpha"))?;

    let mut read_matrix = |name: &str| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(d, l_dim);
        for i in 0..d {
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| parse_err(path, 0, format!("truncated {name} matrix")))?;
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != l_dim {
                return Err(parse_err(path, lineno + 1, "wrong column count"));
            }
            for (j, cell) in cells.iter().enumerate() {
                m[(i, j)] = cell.parse().map_err(|_| {
                    parse_err(path, lineno + 1, format!("non-numeric cell {cell:?}"))
                })?;
            }
        }
        Ok(m)
    };
    let l = read_matrix("L")?;
    let r = read_matrix("R")?;
    MetricParams::new(l, r, alpha)
}

/// Writes the optimization trace as `iter,objective,gradnorm,step` lines.
pub fn write_trace(path: &Path, trace: &[crate::manifold::TraceEntry]) -> Result<()> {
    let mut out = String::from("iter,objective,gradnorm,step\n");
    for e in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.iter,
            fmt_float(e.objective),
            fmt_float(e.grad_norm),
            fmt_float(e.step)
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Parses a key=value run configuration; keys mirror the training and
/// clustering field names exactly and unknown keys are rejected.
pub fn parse_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_config_str(&text, path)
}

pub fn parse_config_str(text: &str, path: &Path) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(path, lineno + 1, "expected key=value"));
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| parse_err(path, lineno + 1, format!("bad {what}: {value:?}"));
        match key {
            "alpha_degrees" => cfg.alpha_degrees = value.parse().map_err(|_| bad("float"))?,
            "embedding_dim" => cfg.embedding_dim = value.parse().map_err(|_| bad("integer"))?,
            "rcgd_maxiter" => cfg.rcgd_maxiter = value.parse().map_err(|_| bad("integer"))?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "epochs" => cfg.epochs = value.parse().map_err(|_| bad("integer"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
            "recluster_each_epoch" => {
                cfg.recluster_each_epoch = value.parse().map_err(|_| bad("bool"))?
            }
            "gamma" => cfg.aas.gamma = value.parse().map_err(|_| bad("float"))?,
            "epsilon" => cfg.aas.epsilon = value.parse().map_err(|_| bad("float"))?,
            "theta_min" => cfg.aas.theta_min = value.parse().map_err(|_| bad("float"))?,
            "k_graph" => cfg.aas.k_graph = value.parse().map_err(|_| bad("integer"))?,
            "c" => cfg.aas.c = value.parse().map_err(|_| bad("float"))?,
            other => {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("unknown config key {other:?}"),
                ));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Default clustering configuration embedded in [`TrainConfig::default`];
/// exposed for CLI defaults.
pub fn default_config() -> (TrainConfig, AasConfig) {
    let cfg = TrainConfig::default();
    let aas = cfg.aas.clone();
    (cfg, aas)
}
