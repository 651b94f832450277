//! Mean regret and standard error across repetitions.

use std::fs;
use std::path::Path;

use super::trace::{format_g12, read_traces, RegretTrace};
use crate::error::{invalid, Error, Result};

pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub t: u64,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(reps)`; zero for one repetition.
    pub stderr: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    pub algo: String,
    pub instance: String,
    pub points: Vec<AggregatePoint>,
}

impl AggregateSummary {
    pub fn final_point(&self) -> Option<&AggregatePoint> {
        self.points.last()
    }

    pub fn at(&self, t: u64) -> Option<&AggregatePoint> {
        self.points.iter().find(|p| p.t == t)
    }
}

/// `(mean, stderr)` with the `n - 1` sample variance.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups traces by (algorithm, instance) in order of first appearance.
pub fn aggregate(traces: &[RegretTrace]) -> Result<Vec<AggregateSummary>> {
    if traces.is_empty() {
        return invalid("no traces to aggregate");
    }
    let mut groups: Vec<(String, String, Vec<&RegretTrace>)> = Vec::new();
    for tr in traces {
        match groups
            .iter_mut()
            .find(|(a, i, _)| *a == tr.algo && *i == tr.instance)
        {
            Some(g) => g.2.push(tr),
            None => groups.push((tr.algo.clone(), tr.instance.clone(), vec![tr])),
        }
    }
    groups
        .into_iter()
        .map(|(algo, instance, members)| {
            let grid: Vec<u64> = members[0].checkpoints.iter().map(|c| c.t).collect();
            for m in &members {
                if m.checkpoints.len() != grid.len()
                    || m.checkpoints.iter().zip(&grid).any(|(c, t)| c.t != *t)
                {
                    return invalid(format!(
                        "checkpoint grids of {algo} on {instance} do not align (seed {})",
                        m.seed
                    ));
                }
            }
            let points = grid
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let values: Vec<f64> = members.iter().map(|m| m.checkpoints[i].cum_regret).collect();
                    let (mean, stderr) = mean_stderr(&values);
                    AggregatePoint {
                        t,
                        mean,
                        stderr,
                        reps: values.len(),
                    }
                })
                .collect();
            Ok(AggregateSummary {
                algo,
                instance,
                points,
            })
        })
        .collect()
}

/// Reads every trace CSV in `dir` (skipping aggregate and sweep outputs),
/// in file-name order.
pub fn read_trace_dir(dir: &Path) -> Result<Vec<RegretTrace>> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            p.extension().is_some_and(|e| e == "csv")
                && !name.starts_with("aggregate")
                && !name.starts_with("sweep")
        })
        .collect();
    files.sort();
    let mut traces = Vec::new();
    for f in files {
        let parsed = read_traces(fs::File::open(&f)?).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", f.display())),
            other => other,
        })?;
        traces.extend(parsed);
    }
    Ok(traces)
}

pub fn summary_csv(summaries: &[AggregateSummary]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["algo", "instance", "t", "mean_regret", "stderr", "reps"])?;
    for s in summaries {
        for p in &s.points {
            w.write_record([
                s.algo.clone(),
                s.instance.clone(),
                p.t.to_string(),
                format_g12(p.mean),
                format_g12(p.stderr),
                p.reps.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(e.to_string()))
}

/// Aggregates a result directory and writes `aggregate.csv` into it.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<AggregateSummary>> {
    let traces = read_trace_dir(dir)?;
    let summaries = aggregate(&traces)?;
    fs::write(dir.join(AGGREGATE_FILE), summary_csv(&summaries)?)?;
    Ok(summaries)
}
