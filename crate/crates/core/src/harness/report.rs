use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (epsilon, method) cell of an experiment.
///
/// CSV column order is fixed:
/// `model,method,r,epsilon,k,truth,coverage,coverage_se,mean_length,reps,seed,failed_draws,errors,mean_chosen_r,budget_parallel,budget_sequential`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub method: String,
    pub r: String,
    pub epsilon: String,
    pub k: usize,
    pub truth: String,
    /// Fraction of successful replications with lower limit ≤ true maximum.
    pub coverage: f64,
    /// Binomial Monte Carlo standard error √(p(1−p)/reps).
    pub coverage_se: f64,
    /// Mean of (true maximum − lower limit).
    pub mean_length: f64,
    /// Successful replications.
    pub reps: usize,
    pub seed: u64,
    pub failed_draws: usize,
    /// Replications in which the method returned an error.
    pub errors: usize,
    /// Average cross-validated r (empty for other methods).
    pub mean_chosen_r: Option<f64>,
    /// Budget per replication with fold estimations composed in parallel.
    pub budget_parallel: f64,
    /// Budget per replication with every estimation composed sequentially.
    pub budget_sequential: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            return Err(Error::param("report has no rows"));
        }
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::param(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::param(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in r.deserialize().enumerate() {
            let row: ReportRow =
                rec.map_err(|e| Error::Parse { row: i + 2, column: 0, message: e.to_string() })?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse { row: 2, column: 0, message: "report has no rows".into() });
        }
        Ok(Self { rows })
    }

    pub fn find(&self, method: &str, r: &str, epsilon: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|row| row.method == method && row.r == r && row.epsilon == epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    Epsilon,
    K,
    R,
}

impl std::str::FromStr for PlotAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "epsilon" => Ok(PlotAxis::Epsilon),
            "k" => Ok(PlotAxis::K),
            "r" => Ok(PlotAxis::R),
            other => Err(Error::param(format!("unknown plot axis {other:?} (epsilon, k or r)"))),
        }
    }
}

fn axis_number(s: &str) -> f64 {
    match s {
        "inf" => f64::INFINITY,
        "full" => f64::NEG_INFINITY,
        _ => s.parse().unwrap_or(f64::NAN),
    }
}

/// Tidy CSV `axis_value,method,coverage,mean_length`, grouped by method in
/// order of first appearance and sorted by axis value within a method.
///
/// For the `r` axis methods are grouped by family (`ppb`, `rppb`); for the
/// other axes a bootstrap method's r is part of its label (`ppb:0.1`).
pub fn emit_plot_data(report: &ExperimentReport, axis: PlotAxis) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::param("report has no rows to plot"));
    }
    let axis_value = |row: &ReportRow| -> String {
        match axis {
            PlotAxis::Epsilon => row.epsilon.clone(),
            PlotAxis::K => row.k.to_string(),
            PlotAxis::R => row.r.clone(),
        }
    };
    let method_label = |row: &ReportRow| -> String {
        if axis == PlotAxis::R || row.r.is_empty() {
            row.method.clone()
        } else {
            format!("{}:{}", row.method, row.r)
        }
    };
    let rows: Vec<&ReportRow> = report.rows.iter().filter(|r| axis != PlotAxis::R || !r.r.is_empty()).collect();
    let distinct: BTreeSet<String> = rows.iter().map(|r| axis_value(r)).collect();
    if distinct.len() < 2 {
        return Err(Error::param(format!("need at least two distinct {axis:?} values to plot")));
    }
    let mut methods: Vec<String> = Vec::new();
    for r in &rows {
        let m = method_label(r);
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::param(e.to_string());
    w.write_record(["axis_value", "method", "coverage", "mean_length"]).map_err(io)?;
    for m in &methods {
        let mut group: Vec<&&ReportRow> = rows.iter().filter(|r| &method_label(r) == m).collect();
        group.sort_by(|a, b| axis_number(&axis_value(a)).total_cmp(&axis_number(&axis_value(b))));
        for r in group {
            w.write_record([axis_value(r), m.clone(), r.coverage.to_string(), r.mean_length.to_string()])
                .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::param(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
