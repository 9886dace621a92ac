//! Bounded-variable simplex on a dense tableau.
//!
//! Rows are written as `A x - s = 0` with one logical column `s_i` per row
//! whose bounds encode the row sense. The tableau holds `B^-1 [A | -I]`;
//! basic values satisfy `x_B = -sum_{j nonbasic} T[:, j] x_j`.

use std::time::Instant;

use crate::model::{LinearModel, Sense};

const NONE: usize = usize::MAX;
pub(crate) const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
const REFACTOR_EVERY: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

/// Enough state to rebuild a tableau: the basic column of every row and the
/// bound each nonbasic column sits at.
#[derive(Debug, Clone)]
pub(crate) struct BasisSnapshot {
    basis: Vec<usize>,
    at_upper: Vec<bool>,
}

#[derive(Clone)]
pub(crate) struct Tableau {
    m: usize,
    n: usize,
    w: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    at_upper: Vec<bool>,
    x: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    nz: Vec<(usize, f64)>,
    since_refactor: usize,
    pub(crate) iterations: usize,
}

impl Tableau {
    /// Slack basis with every structural column at a finite bound chosen to
    /// favour dual feasibility.
    pub(crate) fn new(model: &LinearModel) -> Self {
        let m = model.num_rows();
        let n = model.num_vars();
        let w = n + m;
        let mut lb = Vec::with_capacity(w);
        let mut ub = Vec::with_capacity(w);
        for v in &model.variables {
            lb.push(v.lower);
            ub.push(v.upper);
        }
        for c in &model.constraints {
            let (l, u) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            lb.push(l);
            ub.push(u);
        }
        let mut cost = vec![0.0; w];
        for &(j, c) in &model.objective {
            cost[j] += c;
        }
        let rows: Vec<Vec<(usize, f64)>> = model.constraints.iter().map(|c| c.coeffs.clone()).collect();
        let mut tab = Self {
            m,
            n,
            w,
            t: vec![0.0; m * w],
            basis: (n..w).collect(),
            pos: vec![NONE; w],
            at_upper: vec![false; w],
            x: vec![0.0; w],
            lb,
            ub,
            cost,
            d: vec![0.0; w],
            rows,
            nz: Vec::new(),
            since_refactor: 0,
            iterations: 0,
        };
        for j in 0..n {
            let prefer_upper = tab.cost[j] < 0.0;
            tab.at_upper[j] = if prefer_upper { tab.ub[j].is_finite() } else { !tab.lb[j].is_finite() && tab.ub[j].is_finite() };
            tab.x[j] = tab.nonbasic_value(j);
        }
        tab.load_identity_basis();
        tab
    }

    fn load_identity_basis(&mut self) {
        let (m, w, n) = (self.m, self.w, self.n);
        self.t.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            // With B = -I the tableau is -[A | -I] = [-A | I].
            for &(j, a) in &self.rows[i] {
                self.t[i * w + j] -= a;
            }
            self.t[i * w + n + i] = 1.0;
        }
        self.basis = (n..w).collect();
        self.pos = vec![NONE; w];
        for (r, &c) in self.basis.iter().enumerate() {
            self.pos[c] = r;
        }
        self.since_refactor = 0;
        self.recompute_primal();
        self.recompute_duals();
    }

    #[inline]
    fn is_basic(&self, j: usize) -> bool {
        self.pos[j] != NONE
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        let (l, u) = (self.lb[j], self.ub[j]);
        if self.at_upper[j] && u.is_finite() {
            u
        } else if l.is_finite() {
            l
        } else if u.is_finite() {
            u
        } else {
            0.0
        }
    }

    /// `x_B = -sum_{j nonbasic} T[:, j] x_j`.
    pub(crate) fn recompute_primal(&mut self) {
        let w = self.w;
        for j in 0..w {
            if !self.is_basic(j) {
                self.x[j] = self.nonbasic_value(j);
            }
        }
        let nonbasic: Vec<(usize, f64)> = (0..w).filter(|&j| !self.is_basic(j) && self.x[j] != 0.0).map(|j| (j, self.x[j])).collect();
        for r in 0..self.m {
            let row = &self.t[r * w..(r + 1) * w];
            let mut s = 0.0;
            for &(j, v) in &nonbasic {
                s -= row[j] * v;
            }
            self.x[self.basis[r]] = s;
        }
    }

    /// `d_j = c_j - c_B' T[:, j]`.
    pub(crate) fn recompute_duals(&mut self) {
        let w = self.w;
        self.d.copy_from_slice(&self.cost);
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[r * w..(r + 1) * w];
            for (dj, &tv) in self.d.iter_mut().zip(row) {
                if tv != 0.0 {
                    *dj -= cb * tv;
                }
            }
        }
        for r in 0..self.m {
            self.d[self.basis[r]] = 0.0;
        }
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let w = self.w;
        let inv = 1.0 / self.t[p * w + q];
        self.nz.clear();
        for j in 0..w {
            let v = self.t[p * w + j];
            if v != 0.0 {
                let s = v * inv;
                if s.abs() < DROP_TOL {
                    self.t[p * w + j] = 0.0;
                } else {
                    self.t[p * w + j] = s;
                    self.nz.push((j, s));
                }
            }
        }
        self.t[p * w + q] = 1.0;
        for r in 0..self.m {
            if r == p {
                continue;
            }
            let f = self.t[r * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[r * w..(r + 1) * w];
            for &(j, v) in &self.nz {
                let nv = row[j] - f * v;
                row[j] = if nv.abs() < DROP_TOL { 0.0 } else { nv };
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &(j, v) in &self.nz {
                self.d[j] -= f * v;
            }
        }
        self.d[q] = 0.0;
        let leaving = self.basis[p];
        self.pos[leaving] = NONE;
        self.basis[p] = q;
        self.pos[q] = p;
        self.since_refactor += 1;
        self.iterations += 1;
    }

    /// Rebuilds the tableau for the current basis from the original rows.
    /// Returns false if the basis is numerically singular.
    pub(crate) fn refactor(&mut self) -> bool {
        let (m, n, w) = (self.m, self.n, self.w);
        let old = self.basis.clone();
        self.t.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            for &(j, a) in &self.rows[i] {
                self.t[i * w + j] += a;
            }
            self.t[i * w + n + i] = -1.0;
        }
        let mut assigned = vec![false; m];
        let mut new_basis = vec![NONE; m];
        self.pos = vec![NONE; w];
        for &c in &old {
            if c >= n {
                let i = c - n;
                for v in &mut self.t[i * w..(i + 1) * w] {
                    *v = -*v;
                }
                assigned[i] = true;
                new_basis[i] = c;
                self.pos[c] = i;
            }
        }
        let saved_d = std::mem::take(&mut self.d);
        self.d = vec![0.0; w];
        for &c in &old {
            if c >= n {
                continue;
            }
            let mut best = NONE;
            let mut best_abs = 1e-11;
            for r in 0..m {
                if !assigned[r] {
                    let v = self.t[r * w + c].abs();
                    if v > best_abs {
                        best_abs = v;
                        best = r;
                    }
                }
            }
            if best == NONE {
                self.d = saved_d;
                return false;
            }
            // Temporarily mark the row's basic column so pivot bookkeeping works.
            self.basis = new_basis.clone();
            self.basis[best] = n + best;
            self.pos[n + best] = best;
            self.pivot(best, c);
            new_basis[best] = c;
            assigned[best] = true;
        }
        self.iterations -= old.iter().filter(|&&c| c < n).count();
        self.basis = new_basis;
        self.pos = vec![NONE; w];
        for (r, &c) in self.basis.iter().enumerate() {
            self.pos[c] = r;
        }
        self.since_refactor = 0;
        self.recompute_primal();
        self.recompute_duals();
        true
    }

    pub(crate) fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot { basis: self.basis.clone(), at_upper: self.at_upper.clone() }
    }

    /// Loads a stored basis. Falls back to the slack basis if it is singular.
    pub(crate) fn restore(&mut self, snap: &BasisSnapshot) {
        self.basis = snap.basis.clone();
        self.at_upper = snap.at_upper.clone();
        if !self.refactor() {
            self.load_identity_basis();
        }
    }

    /// Changes the bounds of a structural column, keeping basic values in sync.
    pub(crate) fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lb[j] = lower;
        self.ub[j] = upper;
        if self.is_basic(j) {
            return;
        }
        let old = self.x[j];
        if self.x[j] > upper {
            self.at_upper[j] = true;
        } else if self.x[j] < lower {
            self.at_upper[j] = false;
        }
        let new = self.nonbasic_value(j);
        let delta = new - old;
        if delta != 0.0 {
            let w = self.w;
            for r in 0..self.m {
                let tv = self.t[r * w + j];
                if tv != 0.0 {
                    self.x[self.basis[r]] -= tv * delta;
                }
            }
            self.x[j] = new;
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        let tol = PRIMAL_TOL * (1.0 + v.abs());
        if v < self.lb[j] - tol {
            self.lb[j] - v
        } else if v > self.ub[j] + tol {
            v - self.ub[j]
        } else {
            0.0
        }
    }

    fn is_primal_feasible(&self) -> bool {
        self.basis.iter().all(|&c| self.infeasibility(c) == 0.0)
    }

    fn dual_infeasible(&self, j: usize) -> bool {
        if self.is_basic(j) || self.lb[j] == self.ub[j] {
            return false;
        }
        let dj = self.d[j];
        let can_up = self.x[j] < self.ub[j] - PRIMAL_TOL;
        let can_down = self.x[j] > self.lb[j] + PRIMAL_TOL;
        (dj < -DUAL_TOL && can_up) || (dj > DUAL_TOL && can_down)
    }

    fn is_dual_feasible(&self) -> bool {
        (0..self.w).all(|j| !self.dual_infeasible(j))
    }

    /// Flips boxed nonbasic columns to the bound their reduced cost prefers.
    /// Returns false if some column cannot be made dual feasible that way.
    fn make_dual_feasible(&mut self) -> bool {
        let mut ok = true;
        let mut flipped = false;
        for j in 0..self.w {
            if !self.dual_infeasible(j) {
                continue;
            }
            if self.d[j] < 0.0 && self.ub[j].is_finite() {
                self.at_upper[j] = true;
                flipped = true;
            } else if self.d[j] > 0.0 && self.lb[j].is_finite() {
                self.at_upper[j] = false;
                flipped = true;
            } else {
                ok = false;
            }
        }
        if flipped {
            self.recompute_primal();
        }
        ok
    }

    fn maybe_refactor(&mut self) {
        if self.since_refactor >= REFACTOR_EVERY {
            if !self.refactor() {
                self.load_identity_basis();
            }
        }
    }

    fn bland_threshold(&self) -> usize {
        10 * (self.m + self.w)
    }

    fn iteration_cap(&self) -> usize {
        200 * (self.m + self.w) + 10_000
    }

    fn out_of_time(deadline: Option<Instant>, it: usize) -> bool {
        it % 64 == 0 && deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Updates values for a step of length `step` in direction `dir` on column `q`.
    fn apply_step(&mut self, q: usize, dir: f64, step: f64) {
        if step == 0.0 {
            return;
        }
        let w = self.w;
        for r in 0..self.m {
            let tv = self.t[r * w + q];
            if tv != 0.0 {
                self.x[self.basis[r]] -= tv * dir * step;
            }
        }
        self.x[q] += dir * step;
    }

    /// Primal simplex. In phase 1 the objective is the sum of primal
    /// infeasibilities of basic columns.
    fn primal(&mut self, phase1: bool, deadline: Option<Instant>) -> LpStatus {
        let w = self.w;
        let mut it = 0usize;
        let mut d1 = vec![0.0; w];
        loop {
            it += 1;
            if it > self.iteration_cap() {
                return LpStatus::IterationLimit;
            }
            if Self::out_of_time(deadline, it) {
                return LpStatus::TimeLimit;
            }
            self.maybe_refactor();
            let bland = it > self.bland_threshold();

            let dvec: &[f64] = if phase1 {
                d1.iter_mut().for_each(|v| *v = 0.0);
                let mut any = false;
                for r in 0..self.m {
                    let c = self.basis[r];
                    let tol = PRIMAL_TOL * (1.0 + self.x[c].abs());
                    let sign = if self.x[c] < self.lb[c] - tol {
                        -1.0
                    } else if self.x[c] > self.ub[c] + tol {
                        1.0
                    } else {
                        continue;
                    };
                    any = true;
                    let row = &self.t[r * w..(r + 1) * w];
                    for (dj, &tv) in d1.iter_mut().zip(row) {
                        if tv != 0.0 {
                            *dj -= sign * tv;
                        }
                    }
                }
                if !any {
                    return LpStatus::Optimal;
                }
                for r in 0..self.m {
                    d1[self.basis[r]] = 0.0;
                }
                &d1
            } else {
                &self.d
            };

            let mut q = NONE;
            let mut best = 0.0;
            let mut dir = 0.0;
            for j in 0..w {
                if self.pos[j] != NONE || self.lb[j] == self.ub[j] {
                    continue;
                }
                let dj = dvec[j];
                let (score, sdir) = if dj < -DUAL_TOL && self.x[j] < self.ub[j] - PRIMAL_TOL {
                    (-dj, 1.0)
                } else if dj > DUAL_TOL && self.x[j] > self.lb[j] + PRIMAL_TOL {
                    (dj, -1.0)
                } else {
                    continue;
                };
                if bland {
                    q = j;
                    dir = sdir;
                    break;
                }
                if score > best {
                    best = score;
                    q = j;
                    dir = sdir;
                }
            }
            if q == NONE {
                if phase1 {
                    return if self.is_primal_feasible() { LpStatus::Optimal } else { LpStatus::Infeasible };
                }
                return LpStatus::Optimal;
            }

            // Ratio test (two-pass Harris; Bland picks the lowest column on ties).
            let span = self.ub[q] - self.lb[q];
            let mut limit = if span.is_finite() { span } else { f64::INFINITY };
            let ratio = |s: &Self, r: usize, relax: f64| -> Option<(f64, bool)> {
                let tv = s.t[r * w + q];
                if tv.abs() <= PIVOT_TOL {
                    return None;
                }
                let alpha = -tv * dir;
                let c = s.basis[r];
                let (v, l, u) = (s.x[c], s.lb[c], s.ub[c]);
                let tol = PRIMAL_TOL * (1.0 + v.abs());
                if phase1 && v < l - tol {
                    return (alpha > 0.0).then(|| ((l - v + relax) / alpha, false));
                }
                if phase1 && v > u + tol {
                    return (alpha < 0.0).then(|| ((u - v - relax) / alpha, true));
                }
                if alpha > 0.0 {
                    u.is_finite().then(|| ((u - v + relax) / alpha, true))
                } else {
                    l.is_finite().then(|| ((l - v - relax) / alpha, false))
                }
            };
            for r in 0..self.m {
                if let Some((t, _)) = ratio(self, r, PRIMAL_TOL) {
                    limit = limit.min(t.max(0.0));
                }
            }
            if limit == f64::INFINITY {
                if phase1 {
                    // Cannot happen in exact arithmetic; rebuild and retry.
                    if !self.refactor() {
                        self.load_identity_basis();
                    }
                    continue;
                }
                return LpStatus::Unbounded;
            }
            let mut p = NONE;
            let mut p_abs = 0.0;
            let mut p_upper = false;
            let mut p_step = 0.0;
            for r in 0..self.m {
                if let Some((t, upper)) = ratio(self, r, 0.0) {
                    if t <= limit {
                        let a = self.t[r * w + q].abs();
                        let better = if bland {
                            p == NONE || self.basis[r] < self.basis[p]
                        } else {
                            a > p_abs
                        };
                        if better {
                            p = r;
                            p_abs = a;
                            p_upper = upper;
                            p_step = t.max(0.0);
                        }
                    }
                }
            }
            if p == NONE || (span.is_finite() && span <= p_step) {
                // Bound flip of the entering column.
                self.apply_step(q, dir, span);
                self.at_upper[q] = dir > 0.0;
                self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                continue;
            }
            self.apply_step(q, dir, p_step);
            let leaving = self.basis[p];
            self.x[leaving] = if p_upper { self.ub[leaving] } else { self.lb[leaving] };
            self.at_upper[leaving] = p_upper;
            self.pivot(p, q);
        }
    }

    /// Dual simplex; assumes the current basis is dual feasible.
    fn dual(&mut self, deadline: Option<Instant>) -> LpStatus {
        let w = self.w;
        let mut it = 0usize;
        loop {
            it += 1;
            if it > self.iteration_cap() {
                return LpStatus::IterationLimit;
            }
            if Self::out_of_time(deadline, it) {
                return LpStatus::TimeLimit;
            }
            self.maybe_refactor();
            let bland = it > self.bland_threshold();

            let mut p = NONE;
            let mut worst = 0.0;
            for r in 0..self.m {
                let inf = self.infeasibility(self.basis[r]);
                if inf > 0.0 {
                    if bland {
                        if p == NONE || self.basis[r] < self.basis[p] {
                            p = r;
                        }
                    } else if inf > worst {
                        worst = inf;
                        p = r;
                    }
                }
            }
            if p == NONE {
                return LpStatus::Optimal;
            }
            let leaving = self.basis[p];
            let to_upper = self.x[leaving] > self.ub[leaving];
            let target = if to_upper { self.ub[leaving] } else { self.lb[leaving] };
            // Need sign(-T[p][j] * delta_j) = +1 when raising x_p, -1 when lowering.
            let want = if to_upper { -1.0 } else { 1.0 };
            let row_start = p * w;
            let eligible = |s: &Self, j: usize| -> Option<f64> {
                if s.pos[j] != NONE || s.lb[j] == s.ub[j] {
                    return None;
                }
                let tv = s.t[row_start + j];
                if tv.abs() <= PIVOT_TOL {
                    return None;
                }
                // Direction the entering column must move.
                let dir = -want * tv.signum();
                let free_up = s.x[j] < s.ub[j] - PRIMAL_TOL;
                let free_down = s.x[j] > s.lb[j] + PRIMAL_TOL;
                if (dir > 0.0 && !free_up) || (dir < 0.0 && !free_down) {
                    return None;
                }
                Some(dir)
            };
            let mut bound = f64::INFINITY;
            for j in 0..w {
                if let Some(dir) = eligible(self, j) {
                    let tv = self.t[row_start + j].abs();
                    let dj = (self.d[j] * dir).max(0.0);
                    bound = bound.min((dj + DUAL_TOL) / tv);
                }
            }
            if bound == f64::INFINITY {
                return LpStatus::Infeasible;
            }
            let mut q = NONE;
            let mut q_abs = 0.0;
            for j in 0..w {
                if eligible(self, j).is_some() {
                    let tv = self.t[row_start + j].abs();
                    let dir = eligible(self, j).unwrap_or(1.0);
                    let r = (self.d[j] * dir).max(0.0) / tv;
                    if r <= bound {
                        let better = if bland { q == NONE } else { tv > q_abs };
                        if better {
                            q = j;
                            q_abs = tv;
                        }
                    }
                }
            }
            let tpq = self.t[row_start + q];
            let delta = (target - self.x[leaving]) / (-tpq);
            self.apply_step(q, 1.0, delta);
            self.x[leaving] = target;
            self.at_upper[leaving] = to_upper;
            self.pivot(p, q);
        }
    }

    /// Solves from the current basis: dual simplex when the basis is dual
    /// feasible (after bound flips), otherwise primal phase 1 then phase 2.
    pub(crate) fn solve(&mut self, deadline: Option<Instant>) -> LpStatus {
        for attempt in 0..2 {
            let status = if self.make_dual_feasible() {
                match self.dual(deadline) {
                    LpStatus::Optimal if !self.is_dual_feasible() => self.primal(false, deadline),
                    s => s,
                }
            } else {
                match self.primal(true, deadline) {
                    LpStatus::Optimal => self.primal(false, deadline),
                    s => s,
                }
            };
            if status != LpStatus::Optimal || attempt == 1 {
                return status;
            }
            // Verify against the original rows; rebuild once if drift crept in.
            if self.residual() <= 1e-7 && self.is_primal_feasible() {
                return status;
            }
            if !self.refactor() {
                self.load_identity_basis();
            }
        }
        LpStatus::Optimal
    }

    /// Largest scaled residual of `A x - s = 0` at the current values.
    fn residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let mut act = 0.0;
            let mut scale: f64 = 1.0;
            for &(j, a) in row {
                act += a * self.x[j];
                scale = scale.max((a * self.x[j]).abs());
            }
            worst = worst.max((act - self.x[self.n + i]).abs() / scale);
        }
        worst
    }

    pub(crate) fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Structural values with nonbasic columns exactly at their bounds and
    /// basic columns clamped into theirs.
    pub(crate) fn values(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x[j].clamp(self.lb[j], self.ub[j])).collect()
    }

    pub(crate) fn value(&self, j: usize) -> f64 {
        self.x[j]
    }

    /// Row duals `y_i`, the reduced costs of the logical columns.
    pub(crate) fn row_duals(&self) -> Vec<f64> {
        self.d[self.n..].to_vec()
    }

    pub(crate) fn reduced_costs(&self) -> Vec<f64> {
        self.d[..self.n].to_vec()
    }
}
