//! CSV and text output for runs.
//!
//! Numbers are written with six decimals and a '.' separator; `-0.000000`
//! is normalized to `0.000000` so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::scenario::Scenario;
use crate::simulator::{compare, run_with, RunLog, SimError, Summary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn run_csv_header(log: &RunLog) -> Vec<String> {
    let mut cols = vec!["step".to_string(), "t_s".to_string()];
    for id in &log.line_ids {
        for suffix in ["flow_MW", "limit_MW", "violation_MW", "slack_MW"] {
            cols.push(format!("{id}_{suffix}"));
        }
    }
    for node in &log.battery_nodes {
        cols.push(format!("{node}_p_MW"));
        cols.push(format!("{node}_e_MWh"));
    }
    for node in &log.curtailable_nodes {
        cols.push(format!("{node}_p_curt_MW"));
        cols.push(format!("{node}_order_MW"));
    }
    cols.push("solver_status".to_string());
    cols
}

/// One row per step, after a header line.
pub fn write_run_csv(log: &RunLog, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{}", run_csv_header(log).join(","))?;
    for r in &log.records {
        let mut row = vec![r.step.to_string(), fmt6(r.t_s)];
        for l in 0..log.line_ids.len() {
            row.push(fmt6(r.state.flows[l]));
            row.push(fmt6(r.limits[l]));
            row.push(fmt6(r.violation[l]));
            row.push(fmt6(r.slack[l]));
        }
        for b in 0..log.battery_nodes.len() {
            row.push(fmt6(r.state.battery_power[b]));
            row.push(fmt6(r.state.battery_energy[b]));
        }
        for c in 0..log.curtailable_nodes.len() {
            row.push(fmt6(r.state.curtailment[c]));
            row.push(fmt6(r.order_curt[c]));
        }
        row.push(match r.status {
            Some(s) => s.as_str().to_string(),
            None => "disabled".to_string(),
        });
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn summary_lines(prefix: &str, s: &Summary, out: &mut String) {
    let _ = writeln!(out, "{prefix}curtailed_energy_MWh = {}", fmt6(s.curtailed_energy_mwh));
    let _ = writeln!(out, "{prefix}battery_throughput_MWh = {}", fmt6(s.battery_throughput_mwh));
    let _ = writeln!(out, "{prefix}max_violation_MW = {}", fmt6(s.max_violation_mw));
    let _ = writeln!(out, "{prefix}violation_steps = {}", s.violation_steps);
    let _ = writeln!(out, "{prefix}violation_duration_s = {}", fmt6(s.violation_duration_s));
    let _ = writeln!(out, "{prefix}solver_failures = {}", s.solver_failures);
}

/// `key = value` lines; the reference run's totals follow when given.
pub fn summary_text(log: &RunLog, reference: Option<&RunLog>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario = {}", log.scenario);
    let _ = writeln!(out, "controller = {}", if log.controller_enabled { "enabled" } else { "disabled" });
    let _ = writeln!(out, "steps = {}", log.records.len());
    let _ = writeln!(out, "dt_s = {}", fmt6(log.dt_s));
    summary_lines("", &log.summary, &mut out);
    if let Some(r) = reference {
        summary_lines("reference_", &r.summary, &mut out);
    }
    out
}

/// Long-format table: `series,t_s,value`.
pub struct LongTable {
    rows: Vec<(String, f64, f64)>,
}

impl LongTable {
    fn new() -> Self {
        Self { rows: Vec::new() }
    }

    fn push(&mut self, series: String, t: f64, v: f64) {
        self.rows.push((series, t, v));
    }

    pub fn write(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "series,t_s,value")?;
        for (s, t, v) in &self.rows {
            writeln!(out, "{s},{},{}", fmt6(*t), fmt6(*v))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Flows and limits, with the reference flows when given.
pub fn flows_table(log: &RunLog, reference: Option<&RunLog>) -> LongTable {
    let mut t = LongTable::new();
    for (l, id) in log.line_ids.iter().enumerate() {
        for r in &log.records {
            t.push(format!("{id}_flow_MW"), r.t_s, r.state.flows[l]);
        }
        for r in &log.records {
            t.push(format!("{id}_limit_MW"), r.t_s, r.limits[l]);
        }
        if let Some(reference) = reference {
            for r in &reference.records {
                t.push(format!("{id}_reference_flow_MW"), r.t_s, r.state.flows[l]);
            }
        }
    }
    t
}

/// Orders as issued and levels as realized.
pub fn controls_table(log: &RunLog) -> LongTable {
    let mut t = LongTable::new();
    for (b, node) in log.battery_nodes.iter().enumerate() {
        for r in &log.records {
            t.push(format!("{node}_battery_order_MW"), r.t_s - log.dt_s, r.order_batt[b]);
        }
        for r in &log.records {
            t.push(format!("{node}_battery_p_MW"), r.t_s, r.state.battery_power[b]);
        }
        for r in &log.records {
            t.push(format!("{node}_battery_e_MWh"), r.t_s, r.state.battery_energy[b]);
        }
    }
    for (c, node) in log.curtailable_nodes.iter().enumerate() {
        for r in &log.records {
            t.push(format!("{node}_curtailment_order_MW"), r.t_s - log.dt_s, r.order_curt[c]);
        }
        for r in &log.records {
            t.push(format!("{node}_curtailment_MW"), r.t_s, r.state.curtailment[c]);
        }
    }
    t
}

/// Per-step differences `a - b`.
pub fn comparison_table(a: &RunLog, b: &RunLog) -> Result<LongTable, SimError> {
    let rows = compare(a, b)?;
    let mut t = LongTable::new();
    for (l, id) in a.line_ids.iter().enumerate() {
        for r in &rows {
            t.push(format!("{id}_flow_diff_MW"), r.t_s, r.flow[l]);
        }
        for r in &rows {
            t.push(format!("{id}_limit_diff_MW"), r.t_s, r.limit[l]);
        }
    }
    for (b, node) in a.battery_nodes.iter().enumerate() {
        for r in &rows {
            t.push(format!("{node}_battery_order_diff_MW"), r.t_s, r.order_batt[b]);
        }
    }
    for (c, node) in a.curtailable_nodes.iter().enumerate() {
        for r in &rows {
            t.push(format!("{node}_curtailment_order_diff_MW"), r.t_s, r.order_curt[c]);
        }
    }
    Ok(t)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), ReportError> {
    let wrap = |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    f(&mut out).and_then(|_| out.flush()).map_err(wrap)
}

/// Runs and writes `run.csv`, `summary.txt` and `plotdata/*.csv` into `dir`.
/// With the controller on, a reference run without it is written alongside
/// for the comparison tables.
pub fn run_to_dir(scenario: &Scenario, controller: bool, dir: &Path) -> Result<(RunLog, Option<RunLog>), ReportError> {
    let log = run_with(scenario, controller)?;
    let reference = if controller {
        Some(run_with(scenario, false)?)
    } else {
        None
    };
    let plot_dir = dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(|source| ReportError::Io {
        path: plot_dir.display().to_string(),
        source,
    })?;

    write_file(&dir.join("run.csv"), |out| write_run_csv(&log, out))?;
    let summary = summary_text(&log, reference.as_ref());
    write_file(&dir.join("summary.txt"), |out| out.write_all(summary.as_bytes()))?;
    let flows = flows_table(&log, reference.as_ref());
    write_file(&plot_dir.join("flows.csv"), |out| flows.write(out))?;
    let controls = controls_table(&log);
    write_file(&plot_dir.join("controls.csv"), |out| controls.write(out))?;
    if let Some(reference) = &reference {
        let table = comparison_table(&log, reference)?;
        write_file(&plot_dir.join("comparison.csv"), |out| table.write(out))?;
    }
    Ok((log, reference))
}
