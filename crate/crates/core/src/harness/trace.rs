//! Regret traces and their CSV representation.

use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "algo",
    "instance",
    "seed",
    "t",
    "cum_regret",
    "gamma",
    "s_t",
    "exploit_rounds",
    "concentration_ok",
];

/// One checkpoint of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: u64,
    pub cum_regret: f64,
    /// Cumulative information gain over exploration rounds.
    pub gamma: f64,
    /// Exploration rounds so far.
    pub s_t: u64,
    pub exploit_rounds: u64,
    /// Whether the confidence event held at every round so far.
    pub concentration_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub algo: String,
    pub instance: String,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> Option<f64> {
        self.checkpoints.last().map(|c| c.cum_regret)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(CSV_HEADER)?;
        for c in &self.checkpoints {
            w.write_record([
                self.algo.clone(),
                self.instance.clone(),
                self.seed.to_string(),
                c.t.to_string(),
                format_g12(c.cum_regret),
                format_g12(c.gamma),
                c.s_t.to_string(),
                c.exploit_rounds.to_string(),
                if c.concentration_ok { "1" } else { "0" }.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Schema(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    algo: String,
    instance: String,
    seed: u64,
    t: u64,
    cum_regret: f64,
    gamma: f64,
    s_t: u64,
    exploit_rounds: u64,
    concentration_ok: u8,
}

/// Parses a trace file; a file may hold several runs, returned in order of
/// first appearance.
pub fn read_traces<R: Read>(input: R) -> Result<Vec<RegretTrace>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Schema(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut traces: Vec<RegretTrace> = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Schema(format!("row {}: {e}", line + 2)))?;
        if row.concentration_ok > 1 {
            return Err(Error::Schema(format!("row {}: concentration_ok must be 0 or 1", line + 2)));
        }
        let cp = Checkpoint {
            t: row.t,
            cum_regret: row.cum_regret,
            gamma: row.gamma,
            s_t: row.s_t,
            exploit_rounds: row.exploit_rounds,
            concentration_ok: row.concentration_ok == 1,
        };
        match traces
            .iter_mut()
            .find(|tr| tr.algo == row.algo && tr.instance == row.instance && tr.seed == row.seed)
        {
            Some(tr) => tr.checkpoints.push(cp),
            None => traces.push(RegretTrace {
                algo: row.algo,
                instance: row.instance,
                seed: row.seed,
                checkpoints: vec![cp],
            }),
        }
    }
    Ok(traces)
}

/// `printf("%.12g")`.
pub fn format_g12(x: f64) -> String {
    format_g(x, 12)
}

pub fn format_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
