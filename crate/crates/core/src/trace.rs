//! Per-iteration convergence traces and their CSV form.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Barrier parameter, when the solver has one.
    pub t: Option<f64>,
    pub objective: f64,
    pub residual_norm: f64,
    /// Usage of every constraint; index 0 is the sum power.
    pub usage: Vec<f64>,
    /// Marks the last row of an outer iteration (inner-outer solver only).
    pub outer_boundary: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    /// Counted M×M products/inversions spent by the solver.
    pub matmuls: u64,
    pub marks_outer: bool,
}

impl ConvergenceTrace {
    pub fn new(marks_outer: bool) -> Self {
        Self { rows: Vec::new(), matmuls: 0, marks_outer }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// CSV with columns `iteration,t,objective,residual_norm,sum_power_usage,usage_1..usage_L`
    /// and, for the inner-outer solver, a trailing `outer_boundary` column.
    pub fn to_csv(&self) -> String {
        let extra = self.rows.iter().map(|r| r.usage.len().saturating_sub(1)).max().unwrap_or(0);
        let mut out = String::from("iteration,t,objective,residual_norm,sum_power_usage");
        for l in 1..=extra {
            let _ = write!(out, ",usage_{l}");
        }
        if self.marks_outer {
            out.push_str(",outer_boundary");
        }
        out.push('\n');
        for r in &self.rows {
            let t = r.t.map(|t| format!("{t:e}")).unwrap_or_default();
            let _ = write!(out, "{},{},{:.12e},{:.6e}", r.iteration, t, r.objective, r.residual_norm);
            for l in 0..=extra {
                match r.usage.get(l) {
                    Some(u) => {
                        let _ = write!(out, ",{u:.12e}");
                    }
                    None => out.push(','),
                }
            }
            if self.marks_outer {
                out.push_str(if r.outer_boundary { ",true" } else { ",false" });
            }
            out.push('\n');
        }
        out
    }
}
