//! Row, bound and integrality checks for a full variable assignment.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{LinearModel, RowFamily, Sense, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Row,
    Bound,
    Integrality,
}

/// One violated row or variable condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// 0-based row index for row violations, variable index otherwise.
    pub index: usize,
    /// Row name (`c<id>_<family>`) or variable name.
    pub name: String,
    pub family: Option<RowFamily>,
    /// Row activity or variable value.
    pub value: f64,
    /// Signed slack toward feasibility: negative means violated.
    pub slack: f64,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::Row => write!(f, "row {}: activity {} slack {} (violated by {})", self.name, self.value, self.slack, self.magnitude),
            ViolationKind::Bound => write!(f, "bound on {}: value {} slack {} (violated by {})", self.name, self.value, self.slack, self.magnitude),
            ViolationKind::Integrality => write!(f, "binary {} has fractional value {}", self.name, self.value),
        }
    }
}

fn scaled(tol: f64, scale: f64) -> f64 {
    tol * scale.max(1.0)
}

/// Every violated row, bound and binary condition. Tolerances are relative to
/// the magnitude of the quantities involved (`tol * max(1, |rhs|, max |a_j x_j|)`).
pub fn validate_assignment(model: &LinearModel, x: &[f64], tol: f64) -> Result<Vec<Violation>> {
    if x.len() != model.num_vars() {
        return Err(Error::Shape(format!("assignment has {} values for {} variables", x.len(), model.num_vars())));
    }
    let mut out = Vec::new();
    for (j, (v, &val)) in model.variables.iter().zip(x).enumerate() {
        if !val.is_finite() {
            out.push(Violation {
                kind: ViolationKind::Bound,
                index: j,
                name: v.name.to_string(),
                family: None,
                value: val,
                slack: f64::NEG_INFINITY,
                magnitude: f64::INFINITY,
            });
            continue;
        }
        let lo_slack = val - v.lower;
        let hi_slack = v.upper - val;
        let slack = lo_slack.min(hi_slack);
        if lo_slack < -scaled(tol, v.lower.abs()) || hi_slack < -scaled(tol, v.upper.abs()) {
            out.push(Violation {
                kind: ViolationKind::Bound,
                index: j,
                name: v.name.to_string(),
                family: None,
                value: val,
                slack,
                magnitude: -slack,
            });
        }
        if v.kind == VarKind::Binary && (val - val.round()).abs() > tol {
            out.push(Violation {
                kind: ViolationKind::Integrality,
                index: j,
                name: v.name.to_string(),
                family: None,
                value: val,
                slack: -(val - val.round()).abs(),
                magnitude: (val - val.round()).abs(),
            });
        }
    }
    for (r, c) in model.constraints.iter().enumerate() {
        let mut act = 0.0;
        let mut scale = c.rhs.abs();
        for &(j, a) in &c.coeffs {
            let t = a * x[j];
            act += t;
            scale = scale.max(t.abs());
        }
        let slack = match c.sense {
            Sense::Le => c.rhs - act,
            Sense::Ge => act - c.rhs,
            Sense::Eq => -(act - c.rhs).abs(),
        };
        if slack < -scaled(tol, scale) {
            out.push(Violation {
                kind: ViolationKind::Row,
                index: r,
                name: model.row_name(r),
                family: Some(c.family),
                value: act,
                slack,
                magnitude: -slack,
            });
        }
    }
    Ok(out)
}
