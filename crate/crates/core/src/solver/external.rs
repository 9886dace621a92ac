//! Runs a user-supplied command on an LP file and reads back `name value`
//! lines. The returned assignment is validated before it is accepted.

use std::collections::HashMap;
use std::process::Command;
use std::time::Instant;

use super::{relative_gap, validate_assignment, Incumbent, SolveOptions, SolveOutcome, SolveReport, SolveStatus, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::lp_format::write_lp;
use crate::model::LinearModel;

/// Environment variable holding the external solver command template.
pub const EXTERNAL_SOLVER_ENV: &str = "RDAO_SOLVER_CMD";

fn parse_status(s: &str) -> Option<SolveStatus> {
    match s.to_ascii_lowercase().as_str() {
        "optimal" => Some(SolveStatus::Optimal),
        "feasible" => Some(SolveStatus::Feasible),
        "infeasible" => Some(SolveStatus::Infeasible),
        "unbounded" => Some(SolveStatus::Unbounded),
        "limit" | "time_limit" | "timelimit" => Some(SolveStatus::Limit),
        _ => None,
    }
}

pub(crate) fn solve(model: &LinearModel, cmd: &str, options: &SolveOptions) -> Result<SolveOutcome> {
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("rdao-ext-{}-{}", std::process::id(), start.elapsed().as_nanos()));
    std::fs::create_dir_all(&dir)?;
    let lp = dir.join("model.lp");
    let sol = dir.join("model.sol");
    write_lp(model, &lp)?;
    let line = cmd
        .replace("{lp}", &lp.display().to_string())
        .replace("{sol}", &sol.display().to_string())
        .replace("{time}", &options.time_limit.to_string());
    let out = Command::new("sh").arg("-c").arg(&line).output()?;
    if !out.status.success() {
        let _ = std::fs::remove_dir_all(&dir);
        return Err(Error::External(format!(
            "command `{line}` failed ({}): {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let text = std::fs::read_to_string(&sol)
        .map_err(|e| Error::External(format!("solution file {} unreadable: {e}", sol.display())))?;
    let _ = std::fs::remove_dir_all(&dir);

    let index: HashMap<String, usize> =
        model.variables.iter().enumerate().map(|(j, v)| (v.name.to_string(), j)).collect();
    let mut x = vec![0.0; model.num_vars()];
    let mut status = None;
    let mut seen = 0usize;
    for (n, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut parts = l.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let val = parts.next().ok_or_else(|| Error::External(format!("solution line {}: missing value", n + 1)))?;
        match key {
            "status" => {
                status = Some(parse_status(val).ok_or_else(|| Error::External(format!("unknown status `{val}`")))?);
            }
            "objective" => {}
            name => {
                let j = *index.get(name).ok_or_else(|| Error::External(format!("unknown variable `{name}`")))?;
                x[j] = val.parse().map_err(|_| Error::External(format!("solution line {}: bad number `{val}`", n + 1)))?;
                seen += 1;
            }
        }
    }
    let wall_time = start.elapsed().as_secs_f64();
    let mut report = SolveReport {
        status: status.unwrap_or(SolveStatus::Optimal),
        objective: f64::INFINITY,
        best_bound: f64::NEG_INFINITY,
        gap: f64::INFINITY,
        incumbents: Vec::new(),
        bound_history: Vec::new(),
        nodes: 0,
        lp_iterations: 0,
        wall_time,
        message: format!("external: {line}"),
    };
    if seen == 0 || matches!(report.status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
        if seen == 0 && status.is_none() {
            report.status = SolveStatus::Limit;
        }
        return Ok(SolveOutcome { report, assignment: None, row_duals: None, reduced_costs: None });
    }
    let violations = validate_assignment(model, &x, FEASIBILITY_TOL)?;
    if let Some(v) = violations.first() {
        return Err(Error::External(format!("external solution violates {} conditions, first: {v}", violations.len())));
    }
    let z = model.objective_value(&x);
    report.objective = z;
    if report.status == SolveStatus::Optimal {
        report.best_bound = z;
        report.gap = 0.0;
    }
    report.incumbents.push(Incumbent { time: wall_time, objective: z, bound: report.best_bound, gap: relative_gap(z, report.best_bound) });
    Ok(SolveOutcome { report, assignment: Some(x), row_duals: None, reduced_costs: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;
    use crate::solver::{solve_lp, Backend};

    fn model() -> LinearModel {
        let mut m = LinearModel::new();
        let x = m.continuous(0.0, 10.0);
        m.objective = vec![(x, 1.0)];
        m.constraint(vec![(x, 1.0)], Sense::Ge, 2.0);
        m
    }

    #[test]
    fn reads_and_validates_solution() {
        let m = model();
        let name = m.variables[0].name.to_string();
        let good = SolveOptions { backend: Backend::External(format!("printf 'status optimal\\n{name} 2\\n' > {{sol}}")), ..SolveOptions::default() };
        let out = solve_lp(&m, &good).unwrap();
        assert_eq!(out.report.objective, 2.0);
        let bad = SolveOptions { backend: Backend::External(format!("printf '{name} 1\\n' > {{sol}}")), ..SolveOptions::default() };
        assert!(matches!(solve_lp(&m, &bad), Err(Error::External(_))));
        let fail = SolveOptions { backend: Backend::External("exit 3".into()), ..SolveOptions::default() };
        assert!(matches!(solve_lp(&m, &fail), Err(Error::External(_))));
    }
}
