//! Branch and bound over LP relaxations.
//!
//! Branching picks the most fractional binary (lowest index on ties). Open
//! nodes are kept in a best-bound queue; after every branching the search
//! dives into one child on the current tableau (dual simplex, no refactor)
//! and queues the sibling with the parent basis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use super::simplex::{BasisSnapshot, LpStatus, Tableau};
use super::{
    append_log, external, relative_gap, validate_assignment, Backend, Incumbent, SolveOptions, SolveOutcome,
    SolveReport, SolveStatus, FEASIBILITY_TOL,
};
use crate::error::{Error, Result};
use crate::model::{LinearModel, VarKind};

const INT_TOL: f64 = 1e-6;

struct Node {
    bound: f64,
    seq: u64,
    fixes: Vec<(usize, f64)>,
    basis: Rc<BasisSnapshot>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    model: &'a LinearModel,
    options: &'a SolveOptions,
    start: Instant,
    deadline: Option<Instant>,
    binaries: Vec<usize>,
    root_bounds: Vec<(f64, f64)>,
    incumbent: Option<Vec<f64>>,
    z_inc: f64,
    incumbents: Vec<Incumbent>,
    best_bound: f64,
    bound_history: Vec<f64>,
    nodes: usize,
    seq: u64,
}

impl Search<'_> {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn prune_level(&self) -> f64 {
        if !self.z_inc.is_finite() {
            return f64::INFINITY;
        }
        let scale = self.z_inc.abs().max(1e-9);
        self.z_inc - 1e-9 * self.z_inc.abs().max(1.0) - self.options.rel_gap_target * scale
    }

    fn record_bound(&mut self, lower: f64) {
        let capped = if self.z_inc.is_finite() { lower.min(self.z_inc) } else { lower };
        if capped > self.best_bound {
            self.best_bound = capped;
        }
        self.bound_history.push(self.best_bound);
    }

    fn offer(&mut self, x: Vec<f64>, z: f64) {
        if z < self.z_inc - 1e-12 * z.abs().max(1.0) {
            self.z_inc = z;
            self.incumbent = Some(x);
            let bound = self.best_bound.min(z);
            let inc = Incumbent { time: self.elapsed(), objective: z, bound, gap: relative_gap(z, bound) };
            append_log(self.options, &inc);
            self.incumbents.push(inc);
        }
    }

    /// Most fractional binary, lowest index on ties.
    fn branch_var(&self, tab: &Tableau) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_dist = INT_TOL;
        for &j in &self.binaries {
            let v = tab.value(j);
            let dist = (v - v.floor()).min(v.ceil() - v);
            if dist > best_dist + 1e-12 {
                best_dist = dist;
                best = Some((j, v));
            }
        }
        best
    }

    /// Rounds binaries, re-solves the continuous part and offers the result.
    fn polish(&mut self, tab: &mut Tableau) {
        for &j in &self.binaries {
            let r = tab.value(j).round().clamp(0.0, 1.0);
            tab.set_bounds(j, r, r);
        }
        if tab.solve(self.deadline) != LpStatus::Optimal {
            return;
        }
        let mut x = tab.values();
        for &j in &self.binaries {
            x[j] = x[j].round();
        }
        let z = self.model.objective_value(&x);
        if let Ok(v) = validate_assignment(self.model, &x, FEASIBILITY_TOL) {
            if v.is_empty() {
                self.offer(x, z);
            }
        }
    }

    fn load(&mut self, tab: &mut Tableau, node: &Node) {
        for (k, &j) in self.binaries.iter().enumerate() {
            let (l, u) = self.root_bounds[k];
            tab.set_bounds(j, l, u);
        }
        for &(j, v) in &node.fixes {
            tab.set_bounds(j, v, v);
        }
        tab.restore(&node.basis);
    }

    fn limit_hit(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d) || self.options.node_limit.is_some_and(|n| self.nodes >= n)
    }
}

/// Branch and bound. A warm start is validated first; an infeasible one is
/// rejected with its violation list, a feasible one becomes `incumbents[0]`.
pub fn solve_mip(model: &LinearModel, options: &SolveOptions) -> Result<SolveOutcome> {
    options.validate()?;
    model.validate()?;
    if let Backend::External(cmd) = &options.backend {
        return external::solve(model, cmd, options);
    }
    let start = Instant::now();
    let binaries: Vec<usize> =
        model.variables.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Binary).map(|(j, _)| j).collect();
    let root_bounds = binaries.iter().map(|&j| (model.variables[j].lower, model.variables[j].upper)).collect();
    let mut s = Search {
        model,
        options,
        start,
        deadline: options.deadline(start),
        binaries,
        root_bounds,
        incumbent: None,
        z_inc: f64::INFINITY,
        incumbents: Vec::new(),
        best_bound: f64::NEG_INFINITY,
        bound_history: Vec::new(),
        nodes: 0,
        seq: 0,
    };

    if let Some(ws) = &options.warm_start {
        let violations = validate_assignment(model, ws, FEASIBILITY_TOL)?;
        if !violations.is_empty() {
            return Err(Error::WarmStartRejected(violations));
        }
        let z = model.objective_value(ws);
        s.z_inc = z;
        s.incumbent = Some(ws.clone());
        let inc = Incumbent { time: s.elapsed(), objective: z, bound: f64::NEG_INFINITY, gap: f64::INFINITY };
        append_log(options, &inc);
        s.incumbents.push(inc);
    }

    let mut tab = Tableau::new(model);
    let root = tab.solve(s.deadline);
    s.nodes = 1;
    let mut message = String::new();
    let mut status = match root {
        LpStatus::Optimal => None,
        LpStatus::Infeasible if s.incumbent.is_none() => Some(SolveStatus::Infeasible),
        LpStatus::Unbounded if s.incumbent.is_none() => Some(SolveStatus::Unbounded),
        LpStatus::IterationLimit => {
            message = "simplex iteration limit at the root".into();
            Some(SolveStatus::Limit)
        }
        _ => Some(SolveStatus::Limit),
    };

    if status.is_none() {
        s.record_bound(tab.objective());
        if let Some(first) = s.incumbents.first_mut() {
            first.bound = s.best_bound.min(first.objective);
            first.gap = relative_gap(first.objective, first.bound);
        }
        let mut heap: BinaryHeap<Node> = BinaryHeap::new();
        // The node currently on the tableau: its fixings and LP bound.
        let mut current: Option<Vec<(usize, f64)>> = Some(Vec::new());
        let mut current_bound = tab.objective();
        loop {
            if let Some(fixes) = current.take() {
                let lp_ok = current_bound.is_finite();
                if lp_ok && current_bound < s.prune_level() {
                    match s.branch_var(&tab) {
                        None => s.polish(&mut tab),
                        Some((j, v)) => {
                            let snap = Rc::new(tab.snapshot());
                            let up_first = v - v.floor() >= 0.5;
                            let (dive, other) = if up_first { (1.0, 0.0) } else { (0.0, 1.0) };
                            let mut sib = fixes.clone();
                            sib.push((j, other));
                            s.seq += 1;
                            heap.push(Node { bound: current_bound, seq: s.seq, fixes: sib, basis: snap });
                            let mut next = fixes;
                            next.push((j, dive));
                            tab.set_bounds(j, dive, dive);
                            s.nodes += 1;
                            current_bound = match tab.solve(s.deadline) {
                                LpStatus::Optimal => tab.objective(),
                                LpStatus::TimeLimit => {
                                    status = Some(SolveStatus::Limit);
                                    break;
                                }
                                _ => f64::INFINITY,
                            };
                            current = Some(next);
                        }
                    }
                }
            }
            let open_min = heap.peek().map_or(f64::INFINITY, |n| n.bound);
            let lower = if current.is_some() { open_min.min(current_bound) } else { open_min };
            s.record_bound(lower.min(s.z_inc));
            if current.is_none() && heap.is_empty() {
                break;
            }
            if s.z_inc.is_finite() && options.rel_gap_target > 0.0 && relative_gap(s.z_inc, s.best_bound) <= options.rel_gap_target {
                status = Some(SolveStatus::Feasible);
                break;
            }
            if s.limit_hit() {
                status = Some(SolveStatus::Limit);
                break;
            }
            if current.is_none() {
                let node = heap.pop().expect("heap is nonempty");
                if node.bound >= s.prune_level() {
                    continue;
                }
                s.load(&mut tab, &node);
                s.nodes += 1;
                current_bound = match tab.solve(s.deadline) {
                    LpStatus::Optimal => tab.objective(),
                    LpStatus::TimeLimit => {
                        status = Some(SolveStatus::Limit);
                        break;
                    }
                    _ => f64::INFINITY,
                };
                current = Some(node.fixes);
            }
        }
        if status.is_none() {
            status = Some(if s.incumbent.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible });
            if s.incumbent.is_some() {
                s.best_bound = s.z_inc;
                s.bound_history.push(s.z_inc);
            }
        }
    }

    let status = status.expect("status set");
    let wall_time = s.elapsed();
    let gap = if status == SolveStatus::Optimal { 0.0 } else { relative_gap(s.z_inc, s.best_bound) };
    let report = SolveReport {
        status,
        objective: s.z_inc,
        best_bound: if status == SolveStatus::Optimal { s.z_inc } else { s.best_bound },
        gap,
        incumbents: s.incumbents,
        bound_history: s.bound_history,
        nodes: s.nodes,
        lp_iterations: tab.iterations,
        wall_time,
        message,
    };
    Ok(SolveOutcome { report, assignment: s.incumbent, row_duals: None, reduced_costs: None })
}
