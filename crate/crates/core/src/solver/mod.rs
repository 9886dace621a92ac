//! LP and MIP solving: a dense bounded simplex, branch and bound with warm
//! starts, and an optional external-solver backend behind the same calls.

mod external;
mod mip;
pub(crate) mod simplex;
mod validate;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

pub use external::EXTERNAL_SOLVER_ENV;
pub use mip::solve_mip;
pub use validate::{validate_assignment, Violation, ViolationKind};

use crate::error::{Error, Result};
use crate::model::LinearModel;
use simplex::{LpStatus, Tableau};

/// Tolerance used when checking warm starts and incumbents.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    BuiltIn,
    /// Shell command run with `{lp}` and `{sol}` replaced by file paths. The
    /// command must write `name value` lines to `{sol}`.
    External(String),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    /// Stop once the relative gap is at or below this value (a fraction).
    pub rel_gap_target: f64,
    pub warm_start: Option<Vec<f64>>,
    pub node_limit: Option<usize>,
    pub log_incumbents: bool,
    /// Append incumbent lines here when `log_incumbents` is set.
    pub log_path: Option<PathBuf>,
    pub backend: Backend,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: 3600.0,
            rel_gap_target: 0.0,
            warm_start: None,
            node_limit: None,
            log_incumbents: false,
            log_path: None,
            backend: Backend::BuiltIn,
        }
    }
}

impl SolveOptions {
    /// Defaults, with the external backend selected if the environment names one.
    pub fn from_env() -> Self {
        let backend = match std::env::var(EXTERNAL_SOLVER_ENV) {
            Ok(cmd) if !cmd.trim().is_empty() => Backend::External(cmd),
            _ => Backend::BuiltIn,
        };
        Self { backend, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit > 0.0) {
            return Err(Error::Config(format!("time limit must be > 0, got {}", self.time_limit)));
        }
        if !(self.rel_gap_target >= 0.0) {
            return Err(Error::Config(format!("relative gap target must be >= 0, got {}", self.rel_gap_target)));
        }
        Ok(())
    }

    pub(crate) fn deadline(&self, start: Instant) -> Option<Instant> {
        if self.time_limit.is_finite() {
            start.checked_add(Duration::from_secs_f64(self.time_limit))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// An incumbent within the requested gap target.
    Feasible,
    Infeasible,
    Unbounded,
    /// Time or node limit reached.
    Limit,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Limit => "limit",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One improvement of the best known solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incumbent {
    pub time: f64,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
}

impl Incumbent {
    /// `time_s<TAB>objective<TAB>bound<TAB>gap`.
    pub fn log_line(&self) -> String {
        format!("{:.6}\t{}\t{}\t{}", self.time, self.objective, self.bound, self.gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Best objective found (`+inf` when there is none).
    pub objective: f64,
    /// Proven lower bound.
    pub best_bound: f64,
    /// `(objective - bound) / max(|objective|, 1e-9)` as a fraction.
    pub gap: f64,
    pub incumbents: Vec<Incumbent>,
    /// Global bound after each node, nondecreasing.
    pub bound_history: Vec<f64>,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time: f64,
    pub message: String,
}

impl SolveReport {
    pub fn gap_percent(&self) -> f64 {
        100.0 * self.gap
    }

    pub fn has_solution(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible) || self.objective.is_finite()
    }

    /// Incumbent log text, one line per improvement.
    pub fn incumbent_log(&self) -> String {
        self.incumbents.iter().map(|i| i.log_line() + "\n").collect()
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "status = {}\nobjective = {}\nbest_bound = {}\ngap = {}\ngap_percent = {}\nnodes = {}\nlp_iterations = {}\nincumbents = {}\nwall_time = {:.6}\nmessage = {}\n",
            self.status,
            self.objective,
            self.best_bound,
            self.gap,
            self.gap_percent(),
            self.nodes,
            self.lp_iterations,
            self.incumbents.len(),
            self.wall_time,
            self.message
        )
    }
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    if !objective.is_finite() || !bound.is_finite() {
        return f64::INFINITY;
    }
    ((objective - bound) / objective.abs().max(1e-9)).max(0.0)
}

/// Solution and report of a solve call.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub report: SolveReport,
    pub assignment: Option<Vec<f64>>,
    /// Row duals (LP solves only).
    pub row_duals: Option<Vec<f64>>,
    /// Structural reduced costs (LP solves only).
    pub reduced_costs: Option<Vec<f64>>,
}

pub(crate) fn append_log(options: &SolveOptions, inc: &Incumbent) {
    if !options.log_incumbents {
        return;
    }
    if let Some(path) = &options.log_path {
        if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(path) {
            let _ = writeln!(f, "{}", inc.log_line());
        }
    }
}

/// Solves a model without binaries to optimality.
pub fn solve_lp(model: &LinearModel, options: &SolveOptions) -> Result<SolveOutcome> {
    if model.has_binaries() {
        return Err(Error::Invalid("solve_lp called on a model with binary variables; use solve_mip".into()));
    }
    options.validate()?;
    model.validate()?;
    if let Backend::External(cmd) = &options.backend {
        return external::solve(model, cmd, options);
    }
    let start = Instant::now();
    let mut tab = Tableau::new(model);
    let status = tab.solve(options.deadline(start));
    let wall_time = start.elapsed().as_secs_f64();
    let mut report = SolveReport {
        status: SolveStatus::Limit,
        objective: f64::INFINITY,
        best_bound: f64::NEG_INFINITY,
        gap: f64::INFINITY,
        incumbents: Vec::new(),
        bound_history: Vec::new(),
        nodes: 1,
        lp_iterations: tab.iterations,
        wall_time,
        message: String::new(),
    };
    match status {
        LpStatus::Optimal => {
            let z = tab.objective();
            report.status = SolveStatus::Optimal;
            report.objective = z;
            report.best_bound = z;
            report.gap = 0.0;
            report.bound_history.push(z);
            let inc = Incumbent { time: wall_time, objective: z, bound: z, gap: 0.0 };
            append_log(options, &inc);
            report.incumbents.push(inc);
            Ok(SolveOutcome {
                report,
                assignment: Some(tab.values()),
                row_duals: Some(tab.row_duals()),
                reduced_costs: Some(tab.reduced_costs()),
            })
        }
        other => {
            report.status = match other {
                LpStatus::Infeasible => SolveStatus::Infeasible,
                LpStatus::Unbounded => SolveStatus::Unbounded,
                _ => SolveStatus::Limit,
            };
            if other == LpStatus::IterationLimit {
                report.message = "simplex iteration limit".into();
            }
            Ok(SolveOutcome { report, assignment: None, row_duals: None, reduced_costs: None })
        }
    }
}

/// Dispatches to [`solve_lp`] or [`solve_mip`] depending on the model.
pub fn solve(model: &LinearModel, options: &SolveOptions) -> Result<SolveOutcome> {
    if model.has_binaries() {
        solve_mip(model, options)
    } else if options.warm_start.is_some() {
        solve_mip(model, options)
    } else {
        solve_lp(model, options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;

    #[test]
    fn min_x_above_prescription() {
        let mut m = LinearModel::new();
        let x = m.continuous(0.0, f64::INFINITY);
        m.objective = vec![(x, 1.0)];
        m.constraint(vec![(x, 1.0)], Sense::Ge, 42.4);
        let out = solve_lp(&m, &SolveOptions::default()).unwrap();
        assert_eq!(out.report.status, SolveStatus::Optimal);
        assert!((out.report.objective - 42.4).abs() < 1e-12);
        assert_eq!(out.row_duals.unwrap(), vec![1.0]);
    }

    #[test]
    fn rejects_binaries_and_bad_options() {
        let mut m = LinearModel::new();
        m.binary();
        assert!(solve_lp(&m, &SolveOptions::default()).is_err());
        let opts = SolveOptions { time_limit: 0.0, ..SolveOptions::default() };
        assert!(opts.validate().is_err());
    }

    #[test]
    fn gap_convention() {
        assert_eq!(relative_gap(10.0, 9.0), 0.1);
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert!(relative_gap(f64::INFINITY, 0.0).is_infinite());
    }
}
