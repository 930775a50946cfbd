//! CSV and JSON artifacts. Numbers are written with full double precision
//! in scientific notation; headers carry unit suffixes.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{RunResult, TurnpikeAnalysis};

struct CsvOut(csv::Writer<Vec<u8>>);

impl CsvOut {
    fn new(cols: &[String]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(cols).expect("writing to memory");
        CsvOut(w)
    }

    fn row(&mut self, values: impl IntoIterator<Item = f64>) {
        let fields: Vec<String> = values.into_iter().map(|v| format!("{v:.16e}")).collect();
        self.0.write_record(&fields).expect("writing to memory");
    }

    fn finish(self) -> String {
        let bytes = self.0.into_inner().expect("flushing to memory");
        String::from_utf8(bytes).expect("ASCII output")
    }
}

fn indexed(prefix: &str, count: usize, suffix: &str) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}_{i}{suffix}")).collect()
}

/// Run CSV at the grid nodes: state, held input (the last node repeats the
/// final input), costate and switching function.
pub fn run_csv(run: &RunResult) -> String {
    let pair = &run.pair;
    let n = pair.states[0].len();
    let m = pair.inputs[0].len();
    let mut cols = vec!["t_s".to_string()];
    cols.extend(indexed("x", n, "_K"));
    cols.extend(indexed("u", m, "_W"));
    cols.extend(indexed("lambda", n, ""));
    cols.extend(indexed("s", m, ""));
    let mut out = CsvOut::new(&cols);
    for (j, &t) in pair.times.iter().enumerate() {
        let u = &pair.inputs[j.min(pair.intervals() - 1)];
        let row = std::iter::once(t)
            .chain(pair.states[j].iter().copied())
            .chain(u.iter().copied())
            .chain(run.adjoint.nodes[j].iter().copied())
            .chain(run.switching_nodes[j].iter().copied());
        out.row(row);
    }
    out.finish()
}

/// Midpoint deviation series and interval-averaged switching function.
pub fn deviation_csv(run: &RunResult) -> String {
    let m = run.switching.first().map(|s| s.len()).unwrap_or(0);
    let mut cols = vec!["t_s".to_string(), "e".to_string()];
    cols.extend(indexed("s_avg", m, ""));
    let mut out = CsvOut::new(&cols);
    for (j, t) in run.pair.midpoints().iter().enumerate() {
        let row = [*t, run.deviation[j]].into_iter().chain(run.switching[j].iter().copied());
        out.row(row);
    }
    out.finish()
}

/// Turnpike `(x_bar, u_bar, lambda_bar)` on the analysis grid.
pub fn turnpike_csv(analysis: &TurnpikeAnalysis) -> String {
    let (n, m) = (analysis.pencil.states, analysis.pencil.inputs);
    let mut cols = vec!["t_s".to_string()];
    cols.extend(indexed("xbar", n, "_K"));
    cols.extend(indexed("ubar", m, "_W"));
    cols.extend(indexed("lambdabar", n, ""));
    let mut out = CsvOut::new(&cols);
    let tp = &analysis.turnpike;
    for t in analysis.grid() {
        let (x, u, l) = (tp.x.eval(t), tp.u.eval(t), tp.lambda.eval(t));
        let row = std::iter::once(t).chain(x.iter().copied()).chain(u.iter().copied()).chain(l.iter().copied());
        out.row(row);
    }
    out.finish()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::numerical("output", format!("JSON serialisation failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Parsed CSV: header and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn parse_csv(text: &str) -> Result<Table> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let bad = |row: usize, e: String| Error::validation(format!("csv row {row}"), e);
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| bad(0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(i + 1, e.to_string()))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| bad(i + 1, format!("{v:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}
