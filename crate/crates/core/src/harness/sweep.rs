//! Final-regret matrices over confidence-coefficient and learning-rate grids.

use std::fs;
use std::path::PathBuf;

use super::aggregate::mean_stderr;
use super::config::{AlgorithmKind, ExperimentConfig};
use super::run::{execute, file_stem, RunOptions};
use super::trace::format_g12;
use crate::error::{invalid, Error, Result};
use crate::estimator::BetaSpec;
use crate::ids::EtaSpec;

/// A grid entry: `None` keeps the algorithm's configured (default) rule.
pub type GridValue = Option<f64>;

/// Parses `auto` or a positive number.
pub fn parse_grid_value(s: &str) -> Result<GridValue> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
        _ => invalid(format!("grid entries must be 'auto' or positive numbers, got '{s}'")),
    }
}

fn grid_label(v: GridValue) -> String {
    v.map_or_else(|| "auto".to_string(), format_g12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMatrix {
    pub algo: String,
    pub betas: Vec<GridValue>,
    pub etas: Vec<GridValue>,
    /// `values[i][j]`: mean final regret at `betas[i]`, `etas[j]`.
    pub values: Vec<Vec<f64>>,
}

impl SweepMatrix {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["beta".to_string()];
        header.extend(self.etas.iter().map(|e| format!("eta={}", grid_label(*e))));
        w.write_record(&header)?;
        for (b, row) in self.betas.iter().zip(&self.values) {
            let mut rec = vec![grid_label(*b)];
            rec.extend(row.iter().map(|v| format_g12(*v)));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Mean final regret of the single-algorithm config `cfg`.
fn cell_value(cfg: &ExperimentConfig, opts: RunOptions) -> Result<f64> {
    let mut finals = Vec::new();
    for o in execute(cfg, opts)? {
        let trace = o.trace?;
        finals.push(trace.final_regret().unwrap_or(0.0));
    }
    Ok(mean_stderr(&finals).0)
}

/// Every cell reuses the experiment's seeds, so cell values do not depend on
/// grid order and a 1x1 grid of `auto` reproduces the plain run.
pub fn sweep(
    config: &ExperimentConfig,
    betas: &[GridValue],
    etas: &[GridValue],
    opts: RunOptions,
) -> Result<Vec<SweepMatrix>> {
    if betas.is_empty() || etas.is_empty() {
        return invalid("sweep grids must be nonempty");
    }
    config.validate()?;
    config
        .algorithms
        .iter()
        .map(|spec| {
            let mut values = Vec::with_capacity(betas.len());
            for b in betas {
                let mut row = Vec::with_capacity(etas.len());
                for e in etas {
                    let mut s = spec.clone();
                    s.label = Some(spec.label());
                    if let Some(v) = b {
                        s.beta = BetaSpec::Fixed { value: *v };
                    }
                    if let (Some(v), AlgorithmKind::Ids) = (e, s.kind) {
                        s.eta = EtaSpec::Fixed { value: *v };
                    }
                    let cell = ExperimentConfig {
                        algorithms: vec![s],
                        ..config.clone()
                    };
                    row.push(cell_value(&cell, opts)?);
                }
                values.push(row);
            }
            Ok(SweepMatrix {
                algo: spec.label(),
                betas: betas.to_vec(),
                etas: etas.to_vec(),
                values,
            })
        })
        .collect()
}

/// Runs the sweep and writes `sweep_<algo>.csv` per algorithm.
pub fn sweep_to_dir(
    config: &ExperimentConfig,
    betas: &[GridValue],
    etas: &[GridValue],
    opts: RunOptions,
) -> Result<(Vec<SweepMatrix>, Vec<PathBuf>)> {
    let matrices = sweep(config, betas, etas, opts)?;
    fs::create_dir_all(&config.output_dir)?;
    let mut files = Vec::new();
    for m in &matrices {
        let path = config.output_dir.join(format!("sweep_{}.csv", file_stem(&m.algo)));
        fs::write(&path, m.to_csv()?)?;
        files.push(path);
    }
    Ok((matrices, files))
}
