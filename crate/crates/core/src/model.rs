//! Sparse linear and mixed-binary model representation.
//!
//! Builders write through [`ModelSink`], which is implemented both by
//! [`LinearModel`] and by [`SizeCounter`]. The counter never evaluates
//! coefficient closures, so model sizes for clinical-scale geometries are
//! available without dose data.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// Structured variable names. Every index is stored 0-based and printed
/// 1-based. Target-voxel indices `v` are positions in the target list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarName {
    Omega { b: u32 },
    W { b: u32, a: u32 },
    X { b: u32, a: u32 },
    F { a: u32 },
    U { a: u32, theta: u32 },
    L { q: u32, k: u32, theta: u32, a: u32 },
    R { q: u32, k: u32, theta: u32, a: u32 },
    J { q: u32, theta: u32, a: u32 },
    JUpper { q: u32, theta: u32, a: u32 },
    JLower { q: u32, theta: u32, a: u32 },
    Y0 { v: u32 },
    Y { i: u32, v: u32 },
    WLower { b: u32, a: u32 },
    M { theta: u32, a: u32 },
    Var { index: u32 },
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use VarName::*;
        match *self {
            Omega { b } => write!(f, "omega_{}", b + 1),
            W { b, a } => write!(f, "w_{}_{}", b + 1, a + 1),
            X { b, a } => write!(f, "x_{}_{}", b + 1, a + 1),
            F { a } => write!(f, "f_{}", a + 1),
            U { a, theta } => write!(f, "u_{}_{}", a + 1, theta + 1),
            L { q, k, theta, a } => write!(f, "l_{}_{}_{}_{}", q + 1, k + 1, theta + 1, a + 1),
            R { q, k, theta, a } => write!(f, "r_{}_{}_{}_{}", q + 1, k + 1, theta + 1, a + 1),
            J { q, theta, a } => write!(f, "j_{}_{}_{}", q + 1, theta + 1, a + 1),
            JUpper { q, theta, a } => write!(f, "ju_{}_{}_{}", q + 1, theta + 1, a + 1),
            JLower { q, theta, a } => write!(f, "jl_{}_{}_{}", q + 1, theta + 1, a + 1),
            Y0 { v } => write!(f, "y0_{}", v + 1),
            Y { i, v } => write!(f, "y_{}_{}", i + 1, v + 1),
            WLower { b, a } => write!(f, "wl_{}_{}", b + 1, a + 1),
            M { theta, a } => write!(f, "m_{}_{}", theta + 1, a + 1),
            Var { index } => write!(f, "v_{}", index + 1),
        }
    }
}

impl FromStr for VarName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("unrecognized variable name '{s}'"));
        let (head, rest) = s.split_once('_').ok_or_else(bad)?;
        let nums: Vec<u32> = rest
            .split('_')
            .map(|t| t.parse::<u32>().ok().filter(|n| *n >= 1).map(|n| n - 1))
            .collect::<Option<_>>()
            .ok_or_else(bad)?;
        use VarName::*;
        let name = match (head, nums.as_slice()) {
            ("omega", &[b]) => Omega { b },
            ("w", &[b, a]) => W { b, a },
            ("x", &[b, a]) => X { b, a },
            ("f", &[a]) => F { a },
            ("u", &[a, theta]) => U { a, theta },
            ("l", &[q, k, theta, a]) => L { q, k, theta, a },
            ("r", &[q, k, theta, a]) => R { q, k, theta, a },
            ("j", &[q, theta, a]) => J { q, theta, a },
            ("ju", &[q, theta, a]) => JUpper { q, theta, a },
            ("jl", &[q, theta, a]) => JLower { q, theta, a },
            ("y0", &[v]) => Y0 { v },
            ("y", &[i, v]) => Y { i, v },
            ("wl", &[b, a]) => WLower { b, a },
            ("m", &[theta, a]) => M { theta, a },
            ("v", &[index]) => Var { index },
            _ => return Err(bad()),
        };
        Ok(name)
    }
}

/// Constraint families, used for row naming, size breakdowns and
/// violation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowFamily {
    /// Nominal expected target dose `>= L_v`.
    Target,
    /// Robust worst-case target dose row.
    RobustBound,
    /// Per-phase dual link `d_i - y0 + y_i >= 0`.
    RobustPhase,
    /// `w <= M x`.
    Blocked,
    /// `w <= f + M (1 - x)`.
    OpenUpper,
    /// `w >= f - M (1 - x)`.
    OpenLower,
    /// `sum_{b in B_theta} x <= |B_theta| u`.
    AngleChoice,
    /// `sum_theta u = 1`.
    OneAngle,
    SymGlobal,
    SymPerAngle,
    SymAngle1,
    SymAngle2,
    /// `l[k+1] >= l[k]`.
    LeftLeaf,
    /// `r[k] >= r[k+1]`.
    RightLeaf,
    /// `x = l + r - 1`.
    LeafLink,
    /// `j = jbar + junder - 1`.
    JawLink,
    /// `j <= sum_k x`.
    RowOpen,
    /// `|K| j >= sum_k x`.
    RowCover,
    UpperJaw,
    LowerJaw,
    HorizLeft,
    HorizRight,
    /// Surrogate `w_lower <= m`.
    MinMax,
    Custom,
}

impl RowFamily {
    pub fn name(self) -> &'static str {
        use RowFamily::*;
        match self {
            Target => "target",
            RobustBound => "robust_bound",
            RobustPhase => "robust_phase",
            Blocked => "blocked",
            OpenUpper => "open_upper",
            OpenLower => "open_lower",
            AngleChoice => "angle_choice",
            OneAngle => "one_angle",
            SymGlobal => "sym_global",
            SymPerAngle => "sym_per_angle",
            SymAngle1 => "sym_angle1",
            SymAngle2 => "sym_angle2",
            LeftLeaf => "left_leaf",
            RightLeaf => "right_leaf",
            LeafLink => "leaf_link",
            JawLink => "jaw_link",
            RowOpen => "row_open",
            RowCover => "row_cover",
            UpperJaw => "upper_jaw",
            LowerJaw => "lower_jaw",
            HorizLeft => "horiz_left",
            HorizRight => "horiz_right",
            MinMax => "min_max",
            Custom => "row",
        }
    }

    const ALL: [RowFamily; 24] = {
        use RowFamily::*;
        [
            Target, RobustBound, RobustPhase, Blocked, OpenUpper, OpenLower, AngleChoice, OneAngle, SymGlobal,
            SymPerAngle, SymAngle1, SymAngle2, LeftLeaf, RightLeaf, LeafLink, JawLink, RowOpen, RowCover, UpperJaw,
            LowerJaw, HorizLeft, HorizRight, MinMax, Custom,
        ]
    };
}

impl fmt::Display for RowFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RowFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RowFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown row family '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: VarName,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub family: RowFamily,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Amount by which `activity` violates the row (0 when satisfied).
    pub fn violation(&self, activity: f64) -> f64 {
        match self.sense {
            Sense::Le => (activity - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - activity).max(0.0),
            Sense::Eq => (activity - self.rhs).abs(),
        }
    }
}

/// Target for model builders.
pub trait ModelSink {
    fn add_var(&mut self, name: VarName, kind: VarKind, lower: f64, upper: f64) -> usize;

    /// Adds one row; `coeffs` is only evaluated by sinks that store rows.
    fn add_row<F>(&mut self, family: RowFamily, sense: Sense, rhs: f64, coeffs: F)
    where
        F: FnOnce() -> Vec<(usize, f64)>;

    fn set_objective(&mut self, var: usize, coef: f64);

    fn num_vars(&self) -> usize;
}

/// Minimization model `min c'x s.t. rows, lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn has_binaries(&self) -> bool {
        self.variables.iter().any(|v| v.kind == VarKind::Binary)
    }

    pub fn num_nonzeros(&self) -> usize {
        self.constraints.iter().map(|c| c.coeffs.len()).sum()
    }

    /// Adds a continuous variable with generic name `v_<index>`.
    pub fn continuous(&mut self, lower: f64, upper: f64) -> usize {
        let index = self.variables.len() as u32;
        self.add_var(VarName::Var { index }, VarKind::Continuous, lower, upper)
    }

    /// Adds a binary variable with generic name `v_<index>`.
    pub fn binary(&mut self) -> usize {
        let index = self.variables.len() as u32;
        self.add_var(VarName::Var { index }, VarKind::Binary, 0.0, 1.0)
    }

    pub fn constraint(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.add_row(RowFamily::Custom, sense, rhs, || coeffs);
        self.constraints.len() - 1
    }

    /// Dense objective vector.
    pub fn objective_dense(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.num_vars()];
        for &(j, v) in &self.objective {
            c[j] += v;
        }
        c
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Row name as used in reports and the LP export: `c<id>_<family>`, 1-based.
    pub fn row_name(&self, row: usize) -> String {
        format!("c{}_{}", row + 1, self.constraints[row].family)
    }

    pub fn find_var(&self, name: VarName) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn family_counts(&self) -> BTreeMap<RowFamily, usize> {
        let mut out = BTreeMap::new();
        for c in &self.constraints {
            *out.entry(c.family).or_insert(0) += 1;
        }
        out
    }

    /// Checks structural invariants: coefficient indices in range, finite
    /// data, consistent bounds, binaries within `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (j, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::Invalid(format!("variable {} ({}) has bounds [{}, {}]", j + 1, v.name, v.lower, v.upper)));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::Invalid(format!("binary {} has bounds outside [0, 1]", v.name)));
            }
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(Error::Invalid(format!("row {} has non-finite rhs", self.row_name(r))));
            }
            if let Some(&(j, a)) = c.coeffs.iter().find(|&&(j, a)| j >= n || !a.is_finite()) {
                return Err(Error::Invalid(format!("row {} has bad coefficient ({}, {a})", self.row_name(r), j + 1)));
            }
        }
        if let Some(&(j, a)) = self.objective.iter().find(|&&(j, a)| j >= n || !a.is_finite()) {
            return Err(Error::Invalid(format!("objective has bad coefficient ({}, {a})", j + 1)));
        }
        Ok(())
    }
}

impl ModelSink for LinearModel {
    fn add_var(&mut self, name: VarName, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable { name, kind, lower, upper });
        self.variables.len() - 1
    }

    fn add_row<F>(&mut self, family: RowFamily, sense: Sense, rhs: f64, coeffs: F)
    where
        F: FnOnce() -> Vec<(usize, f64)>,
    {
        let mut coeffs = coeffs();
        coeffs.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint { family, coeffs, sense, rhs });
    }

    fn set_objective(&mut self, var: usize, coef: f64) {
        if coef != 0.0 {
            self.objective.push((var, coef));
        }
    }

    fn num_vars(&self) -> usize {
        self.variables.len()
    }
}

/// Counts rows, variables and binaries without storing coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SizeCounter {
    pub rows: usize,
    pub vars: usize,
    pub binaries: usize,
    pub families: BTreeMap<RowFamily, usize>,
}

impl ModelSink for SizeCounter {
    fn add_var(&mut self, _name: VarName, kind: VarKind, _lower: f64, _upper: f64) -> usize {
        self.vars += 1;
        if kind == VarKind::Binary {
            self.binaries += 1;
        }
        self.vars - 1
    }

    fn add_row<F>(&mut self, family: RowFamily, _sense: Sense, _rhs: f64, _coeffs: F)
    where
        F: FnOnce() -> Vec<(usize, f64)>,
    {
        self.rows += 1;
        *self.families.entry(family).or_insert(0) += 1;
    }

    fn set_objective(&mut self, _var: usize, _coef: f64) {}

    fn num_vars(&self) -> usize {
        self.vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn var_names_round_trip() {
        let names = [
            VarName::Omega { b: 0 },
            VarName::W { b: 9, a: 2 },
            VarName::L { q: 1, k: 2, theta: 1, a: 5 },
            VarName::JLower { q: 3, theta: 0, a: 0 },
            VarName::Y { i: 4, v: 11 },
            VarName::Var { index: 7 },
        ];
        for n in names {
            assert_eq!(n.to_string().parse::<VarName>().unwrap(), n);
        }
        assert_eq!(VarName::W { b: 0, a: 0 }.to_string(), "w_1_1");
        assert!("w_0_1".parse::<VarName>().is_err());
        assert!("zz_1".parse::<VarName>().is_err());
    }

    #[test]
    fn counter_matches_stored_model() {
        fn build<S: ModelSink>(s: &mut S) {
            let x = s.add_var(VarName::Var { index: 0 }, VarKind::Continuous, 0.0, f64::INFINITY);
            let y = s.add_var(VarName::Var { index: 1 }, VarKind::Binary, 0.0, 1.0);
            s.add_row(RowFamily::Blocked, Sense::Le, 0.0, || vec![(x, 1.0), (y, -5.0)]);
            s.set_objective(x, 1.0);
        }
        let mut m = LinearModel::new();
        let mut c = SizeCounter::default();
        build(&mut m);
        build(&mut c);
        assert_eq!((m.num_rows(), m.num_vars(), m.num_binaries()), (c.rows, c.vars, c.binaries));
        assert_eq!(m.family_counts(), c.families);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn validate_rejects_dangling_index() {
        let mut m = LinearModel::new();
        let x = m.continuous(0.0, 1.0);
        m.constraint(vec![(x + 1, 1.0)], Sense::Ge, 0.0);
        assert!(m.validate().is_err());
    }
}
