//! Aperture models (DAO, DAO-C, RDAO, RDAO-C) assembled on top of the
//! fluence map base, plus size reports and solution decoding.
//!
//! Every builder writes through [`ModelSink`], so [`size_only`] runs the same
//! code as [`assemble`] without touching dose data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config::{Allocation, PlanningConfig, SymmetryMode, Variant};
use crate::dose::DoseInfluenceTensor;
use crate::error::{Error, Result};
use crate::geometry::BeamGeometry;
use crate::model::{LinearModel, ModelSink, RowFamily, Sense, SizeCounter, VarKind, VarName};
use crate::plan::FluencePlan;
use crate::robust::{self, add_dual_vars, add_target_rows, DualLayout, FluenceColumns, TargetData};
use crate::structures::StructureSet;
use crate::uncertainty::UncertaintySet;

/// Column indices of every variable family. Empty vectors mean the family is
/// absent from the variant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarLayout {
    pub num_beamlets: usize,
    pub num_apertures: usize,
    pub num_angles: usize,
    pub num_rows: usize,
    pub num_cols: usize,
    /// `omega[b]` (fluence map variants only).
    pub omega: Vec<usize>,
    /// `w[b * |A| + a]`.
    pub w: Vec<usize>,
    /// `x[b * |A| + a]`.
    pub x: Vec<usize>,
    pub f: Vec<usize>,
    /// `u[a * |Theta| + theta]` (decision-based allocation only).
    pub u: Vec<usize>,
    /// `l[b * |A| + a]`, with `b` the beamlet of `(q, k, theta)`.
    pub l: Vec<usize>,
    pub r: Vec<usize>,
    /// `j[(theta * |Q| + q) * |A| + a]` (continuity variants only).
    pub j: Vec<usize>,
    pub ju: Vec<usize>,
    pub jl: Vec<usize>,
    pub duals: Option<DualLayout>,
}

impl VarLayout {
    fn new(geom: &BeamGeometry) -> Self {
        Self {
            num_beamlets: geom.num_beamlets(),
            num_apertures: geom.num_apertures(),
            num_angles: geom.num_angles(),
            num_rows: geom.num_rows(),
            num_cols: geom.num_cols(),
            ..Self::default()
        }
    }

    #[inline]
    pub fn ba(&self, b: usize, a: usize) -> usize {
        b * self.num_apertures + a
    }

    #[inline]
    pub fn qta(&self, q: usize, theta: usize, a: usize) -> usize {
        (theta * self.num_rows + q) * self.num_apertures + a
    }
}

/// Row, variable and binary counts with a per-family row breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeReport {
    pub variant: Variant,
    pub constraints: usize,
    pub variables: usize,
    pub binaries: usize,
    pub families: BTreeMap<RowFamily, usize>,
}

impl SizeReport {
    pub fn triple(&self) -> (usize, usize, usize) {
        (self.constraints, self.variables, self.binaries)
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "variant = {}\nconstraints = {}\nvariables = {}\nbinaries = {}\n",
            self.variant, self.constraints, self.variables, self.binaries
        );
        for (f, n) in &self.families {
            let _ = writeln!(s, "rows.{} = {n}", f.name());
        }
        s
    }

    fn from_counter(variant: Variant, c: SizeCounter) -> Self {
        Self { variant, constraints: c.rows, variables: c.vars, binaries: c.binaries, families: c.families }
    }

    pub fn of_model(variant: Variant, m: &LinearModel) -> Self {
        Self {
            variant,
            constraints: m.num_rows(),
            variables: m.num_vars(),
            binaries: m.num_binaries(),
            families: m.family_counts(),
        }
    }
}

/// A built model with its layout and the settings it was built with.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub variant: Variant,
    pub geometry: BeamGeometry,
    pub config: PlanningConfig,
    /// The uncertainty set the target rows were built from (a single point
    /// for nominal variants).
    pub set: UncertaintySet,
    /// Resolved big-M (0 for fluence map variants).
    pub big_m: f64,
    pub model: LinearModel,
    pub layout: VarLayout,
    pub size: SizeReport,
    pub warm_start: Option<Vec<f64>>,
}

fn declare_dao_vars<S: ModelSink>(s: &mut S, lay: &mut VarLayout) {
    let (nb, na) = (lay.num_beamlets, lay.num_apertures);
    for b in 0..nb {
        for a in 0..na {
            lay.w.push(s.add_var(VarName::W { b: b as u32, a: a as u32 }, VarKind::Continuous, 0.0, f64::INFINITY));
        }
    }
    for b in 0..nb {
        for a in 0..na {
            lay.x.push(s.add_var(VarName::X { b: b as u32, a: a as u32 }, VarKind::Binary, 0.0, 1.0));
        }
    }
    for a in 0..na {
        lay.f.push(s.add_var(VarName::F { a: a as u32 }, VarKind::Continuous, 0.0, f64::INFINITY));
    }
}

/// Intensity uniformity: `w <= M x`, `w <= f + M(1 - x)`, `w >= f - M(1 - x)`
/// per beamlet and aperture.
pub fn add_uniformity<S: ModelSink>(s: &mut S, lay: &VarLayout, big_m: f64) -> Result<()> {
    if !(big_m.is_finite() && big_m > 0.0) {
        return Err(Error::Config(format!("big_m must be positive and finite, got {big_m}")));
    }
    let (nb, na) = (lay.num_beamlets, lay.num_apertures);
    for b in 0..nb {
        for a in 0..na {
            let (w, x) = (lay.w[lay.ba(b, a)], lay.x[lay.ba(b, a)]);
            s.add_row(RowFamily::Blocked, Sense::Le, 0.0, || vec![(w, 1.0), (x, -big_m)]);
        }
    }
    for b in 0..nb {
        for a in 0..na {
            let (w, x, f) = (lay.w[lay.ba(b, a)], lay.x[lay.ba(b, a)], lay.f[a]);
            s.add_row(RowFamily::OpenUpper, Sense::Le, big_m, || vec![(w, 1.0), (f, -1.0), (x, big_m)]);
        }
    }
    for b in 0..nb {
        for a in 0..na {
            let (w, x, f) = (lay.w[lay.ba(b, a)], lay.x[lay.ba(b, a)], lay.f[a]);
            s.add_row(RowFamily::OpenLower, Sense::Ge, -big_m, || vec![(w, 1.0), (f, -1.0), (x, -big_m)]);
        }
    }
    Ok(())
}

/// One angle per aperture. Decision-based allocation adds `u` binaries and
/// the choice rows; preallocation writes the fixed matrix into the rhs.
pub fn add_aperture_selection<S: ModelSink>(
    s: &mut S,
    lay: &mut VarLayout,
    geom: &BeamGeometry,
    allocation: &Allocation,
) -> Result<()> {
    allocation.validate(geom)?;
    let (na, nt) = (lay.num_apertures, lay.num_angles);
    let per = geom.beamlets_per_angle() as f64;
    if allocation.is_decision_based() {
        for a in 0..na {
            for t in 0..nt {
                lay.u.push(s.add_var(VarName::U { a: a as u32, theta: t as u32 }, VarKind::Binary, 0.0, 1.0));
            }
        }
    }
    for a in 0..na {
        for t in 0..nt {
            let xs: Vec<usize> = geom.angle_beamlets(t).map(|b| lay.x[lay.ba(b, a)]).collect();
            match allocation.fixed_angle(a) {
                None => {
                    let u = lay.u[a * nt + t];
                    s.add_row(RowFamily::AngleChoice, Sense::Le, 0.0, || {
                        let mut c: Vec<(usize, f64)> = xs.iter().map(|&j| (j, 1.0)).collect();
                        c.push((u, -per));
                        c
                    });
                }
                Some(fixed) => {
                    let rhs = if fixed == t { per } else { 0.0 };
                    s.add_row(RowFamily::AngleChoice, Sense::Le, rhs, || xs.iter().map(|&j| (j, 1.0)).collect());
                }
            }
        }
    }
    if allocation.is_decision_based() {
        for a in 0..na {
            let us: Vec<usize> = (0..nt).map(|t| lay.u[a * nt + t]).collect();
            s.add_row(RowFamily::OneAngle, Sense::Eq, 1.0, || us.iter().map(|&j| (j, 1.0)).collect());
        }
    }
    Ok(())
}

fn sum_terms(lay: &VarLayout, beamlets: std::ops::Range<usize>, a: usize, sign: f64) -> Vec<(usize, f64)> {
    beamlets.map(|b| (lay.w[lay.ba(b, a)], sign)).collect()
}

/// Symmetry-breaking order rows over aperture fluence sums.
pub fn add_symmetry<S: ModelSink>(s: &mut S, lay: &VarLayout, geom: &BeamGeometry, config: &PlanningConfig) -> Result<()> {
    let na = lay.num_apertures;
    let all = 0..lay.num_beamlets;
    match config.symmetry {
        SymmetryMode::None => {}
        SymmetryMode::GlobalSort => {
            for a in 0..na.saturating_sub(1) {
                s.add_row(RowFamily::SymGlobal, Sense::Ge, 0.0, || {
                    let mut c = sum_terms(lay, all.clone(), a, 1.0);
                    c.extend(sum_terms(lay, all.clone(), a + 1, -1.0));
                    c
                });
            }
        }
        SymmetryMode::PerAngleSort => {
            if config.allocation.is_decision_based() {
                return Err(Error::Config("per_angle_sort is incompatible with decision-based allocation".into()));
            }
            for t in 0..lay.num_angles {
                let group: Vec<usize> = (0..na).filter(|&a| config.allocation.fixed_angle(a) == Some(t)).collect();
                for pair in group.windows(2) {
                    let (a0, a1) = (pair[0], pair[1]);
                    s.add_row(RowFamily::SymPerAngle, Sense::Ge, 0.0, || {
                        let mut c = sum_terms(lay, geom.angle_beamlets(t), a0, 1.0);
                        c.extend(sum_terms(lay, geom.angle_beamlets(t), a1, -1.0));
                        c
                    });
                }
            }
        }
        SymmetryMode::TwoAngleSort => {
            if lay.num_angles != 2 {
                return Err(Error::Config(format!("two_angle_sort needs exactly 2 angles, geometry has {}", lay.num_angles)));
            }
            for a in 0..na.saturating_sub(1) {
                s.add_row(RowFamily::SymAngle1, Sense::Ge, 0.0, || {
                    let mut c = sum_terms(lay, geom.angle_beamlets(0), a, 1.0);
                    c.extend(sum_terms(lay, geom.angle_beamlets(0), a + 1, -1.0));
                    c
                });
            }
            for a in 0..na.saturating_sub(1) {
                s.add_row(RowFamily::SymAngle2, Sense::Le, 0.0, || {
                    let mut c = sum_terms(lay, geom.angle_beamlets(1), a, 1.0);
                    c.extend(sum_terms(lay, geom.angle_beamlets(1), a + 1, -1.0));
                    c
                });
            }
        }
    }
    Ok(())
}

/// Leaf variables and rows: `l` nondecreasing and `r` nonincreasing along each
/// row, with `x = l + r - 1`.
pub fn add_island_removal<S: ModelSink>(s: &mut S, lay: &mut VarLayout, geom: &BeamGeometry) {
    let (nb, na) = (lay.num_beamlets, lay.num_apertures);
    for b in 0..nb {
        let (q, k, t) = geom.coords(b);
        for a in 0..na {
            let name = VarName::L { q: q as u32, k: k as u32, theta: t as u32, a: a as u32 };
            lay.l.push(s.add_var(name, VarKind::Binary, 0.0, 1.0));
        }
    }
    for b in 0..nb {
        let (q, k, t) = geom.coords(b);
        for a in 0..na {
            let name = VarName::R { q: q as u32, k: k as u32, theta: t as u32, a: a as u32 };
            lay.r.push(s.add_var(name, VarKind::Binary, 0.0, 1.0));
        }
    }
    let (nq, nk, nt) = (lay.num_rows, lay.num_cols, lay.num_angles);
    let cell = |q: usize, k: usize, t: usize, a: usize| lay.ba(geom.beamlet(q, k, t), a);
    for a in 0..na {
        for t in 0..nt {
            for q in 0..nq {
                for k in 0..nk.saturating_sub(1) {
                    let (l0, l1) = (lay.l[cell(q, k, t, a)], lay.l[cell(q, k + 1, t, a)]);
                    s.add_row(RowFamily::LeftLeaf, Sense::Ge, 0.0, || vec![(l1, 1.0), (l0, -1.0)]);
                }
            }
        }
    }
    for a in 0..na {
        for t in 0..nt {
            for q in 0..nq {
                for k in 0..nk.saturating_sub(1) {
                    let (r0, r1) = (lay.r[cell(q, k, t, a)], lay.r[cell(q, k + 1, t, a)]);
                    s.add_row(RowFamily::RightLeaf, Sense::Ge, 0.0, || vec![(r0, 1.0), (r1, -1.0)]);
                }
            }
        }
    }
    for a in 0..na {
        for t in 0..nt {
            for q in 0..nq {
                for k in 0..nk {
                    let i = cell(q, k, t, a);
                    let (x, l, r) = (lay.x[i], lay.l[i], lay.r[i]);
                    s.add_row(RowFamily::LeafLink, Sense::Eq, -1.0, || vec![(x, 1.0), (l, -1.0), (r, -1.0)]);
                }
            }
        }
    }
}

fn row_x(lay: &VarLayout, geom: &BeamGeometry, q: usize, t: usize, a: usize, cols: std::ops::Range<usize>) -> Vec<usize> {
    cols.map(|k| lay.x[lay.ba(geom.beamlet(q, k, t), a)]).collect()
}

/// Row and jaw binaries: `j = ju + jl - 1`, `j` on exactly when the row has an
/// open beamlet, `ju` nondecreasing and `jl` nonincreasing down the rows.
pub fn add_vertical_continuity<S: ModelSink>(s: &mut S, lay: &mut VarLayout, geom: &BeamGeometry) {
    let (nq, nk, nt, na) = (lay.num_rows, lay.num_cols, lay.num_angles, lay.num_apertures);
    let declare = |s: &mut S, f: fn(u32, u32, u32) -> VarName| -> Vec<usize> {
        let mut v = Vec::with_capacity(nt * nq * na);
        for t in 0..nt {
            for q in 0..nq {
                for a in 0..na {
                    v.push(s.add_var(f(q as u32, t as u32, a as u32), VarKind::Binary, 0.0, 1.0));
                }
            }
        }
        v
    };
    lay.j = declare(s, |q, theta, a| VarName::J { q, theta, a });
    lay.ju = declare(s, |q, theta, a| VarName::JUpper { q, theta, a });
    lay.jl = declare(s, |q, theta, a| VarName::JLower { q, theta, a });
    let lay = &*lay;
    for t in 0..nt {
        for a in 0..na {
            for q in 0..nq {
                let i = lay.qta(q, t, a);
                let (j, ju, jl) = (lay.j[i], lay.ju[i], lay.jl[i]);
                s.add_row(RowFamily::JawLink, Sense::Eq, -1.0, || vec![(j, 1.0), (ju, -1.0), (jl, -1.0)]);
            }
        }
    }
    for t in 0..nt {
        for a in 0..na {
            for q in 0..nq {
                let j = lay.j[lay.qta(q, t, a)];
                let xs = row_x(lay, geom, q, t, a, 0..nk);
                s.add_row(RowFamily::RowOpen, Sense::Le, 0.0, || {
                    let mut c = vec![(j, 1.0)];
                    c.extend(xs.iter().map(|&x| (x, -1.0)));
                    c
                });
            }
        }
    }
    for t in 0..nt {
        for a in 0..na {
            for q in 0..nq {
                let j = lay.j[lay.qta(q, t, a)];
                let xs = row_x(lay, geom, q, t, a, 0..nk);
                s.add_row(RowFamily::RowCover, Sense::Ge, 0.0, || {
                    let mut c = vec![(j, nk as f64)];
                    c.extend(xs.iter().map(|&x| (x, -1.0)));
                    c
                });
            }
        }
    }
    for t in 0..nt {
        for a in 0..na {
            for q in 0..nq.saturating_sub(1) {
                let (u0, u1) = (lay.ju[lay.qta(q, t, a)], lay.ju[lay.qta(q + 1, t, a)]);
                s.add_row(RowFamily::UpperJaw, Sense::Le, 0.0, || vec![(u0, 1.0), (u1, -1.0)]);
            }
        }
    }
    for t in 0..nt {
        for a in 0..na {
            for q in 0..nq.saturating_sub(1) {
                let (l0, l1) = (lay.jl[lay.qta(q, t, a)], lay.jl[lay.qta(q + 1, t, a)]);
                s.add_row(RowFamily::LowerJaw, Sense::Le, 0.0, || vec![(l1, 1.0), (l0, -1.0)]);
            }
        }
    }
}

/// Adjacent active rows must share a column: for every cut column `k`, row
/// `q` cannot lie entirely left (or right) of row `q - 1`.
pub fn add_horizontal_continuity<S: ModelSink>(s: &mut S, lay: &VarLayout, geom: &BeamGeometry) {
    let (nq, nk, nt, na) = (lay.num_rows, lay.num_cols, lay.num_angles, lay.num_apertures);
    for (family, left) in [(RowFamily::HorizLeft, true), (RowFamily::HorizRight, false)] {
        for t in 0..nt {
            for a in 0..na {
                for q in 1..nq {
                    let (jq, jp) = (lay.j[lay.qta(q, t, a)], lay.j[lay.qta(q - 1, t, a)]);
                    for k in 1..=nk {
                        let (cur, prev) = if left { (k..nk, 0..k) } else { (0..nk - k, nk - k..nk) };
                        let xq = row_x(lay, geom, q, t, a, cur);
                        let xp = row_x(lay, geom, q - 1, t, a, prev);
                        s.add_row(family, Sense::Le, 1.0, || {
                            let mut c = vec![(jq, 1.0), (jp, 1.0)];
                            c.extend(xq.iter().map(|&x| (x, -1.0)));
                            c.extend(xp.iter().map(|&x| (x, -1.0)));
                            c
                        });
                    }
                }
            }
        }
    }
}

struct Inputs<'a> {
    data: Option<TargetData<'a>>,
    objective: Option<&'a [f64]>,
}

fn build<S: ModelSink>(
    s: &mut S,
    variant: Variant,
    geom: &BeamGeometry,
    num_targets: usize,
    set: &UncertaintySet,
    config: &PlanningConfig,
    big_m: f64,
    inputs: Inputs<'_>,
) -> Result<VarLayout> {
    config.validate(geom)?;
    let mut lay = VarLayout::new(geom);
    if !variant.is_mip() {
        for b in 0..geom.num_beamlets() {
            lay.omega.push(s.add_var(VarName::Omega { b: b as u32 }, VarKind::Continuous, 0.0, f64::INFINITY));
        }
    } else {
        declare_dao_vars(s, &mut lay);
    }
    if variant.is_robust() {
        lay.duals = Some(add_dual_vars(s, num_targets, set.num_phases()));
    }
    let fc = if variant.is_mip() {
        FluenceColumns { cols: &lay.w, per: geom.num_apertures() }
    } else {
        FluenceColumns { cols: &lay.omega, per: 1 }
    };
    add_target_rows(s, num_targets, set, lay.duals.as_ref(), inputs.data, fc);
    if let Some(c) = inputs.objective {
        for (col, &cb) in fc.cols.iter().enumerate().map(|(i, col)| (col, &c[i / fc.per])) {
            s.set_objective(*col, cb);
        }
    }
    if variant.is_mip() {
        add_uniformity(s, &lay, big_m)?;
        add_aperture_selection(s, &mut lay, geom, &config.allocation)?;
        add_symmetry(s, &lay, geom, config)?;
        add_island_removal(s, &mut lay, geom);
        if variant.has_continuity() {
            add_vertical_continuity(s, &mut lay, geom);
            add_horizontal_continuity(s, &lay, geom);
        }
    }
    Ok(lay)
}

fn effective_set(variant: Variant, set: &UncertaintySet) -> UncertaintySet {
    if variant.is_robust() {
        set.clone()
    } else {
        set.nominal_only()
    }
}

/// Builds any of the six variants. Nominal variants use the set's nominal
/// point; the objective always uses nominal proportions.
pub fn assemble(
    variant: Variant,
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
    config: &PlanningConfig,
) -> Result<ModelInstance> {
    robust::check_dims(dose, structures, geom, set)?;
    let config = config.with_variant(variant);
    let used = effective_set(variant, set);
    let big_m = if variant.is_mip() {
        let max_l = structures.prescription().iter().copied().fold(0.0, f64::max);
        config.resolve_big_m(max_l, set.num_phases(), dose.max_value())?
    } else {
        0.0
    };
    let objective = robust::objective_coefficients(dose, structures, &used, &config);
    let mut model = LinearModel::new();
    let inputs = Inputs { data: Some(TargetData { dose, structures }), objective: Some(&objective) };
    let layout = build(&mut model, variant, geom, structures.num_target(), &used, &config, big_m, inputs)?;
    let size = SizeReport::of_model(variant, &model);
    Ok(ModelInstance { variant, geometry: *geom, config, set: used, big_m, model, layout, size, warm_start: None })
}

/// Model size without dose data.
pub fn size_only(
    geom: &BeamGeometry,
    num_targets: usize,
    num_phases: usize,
    variant: Variant,
    config: &PlanningConfig,
) -> Result<SizeReport> {
    if num_targets == 0 || num_phases == 0 {
        return Err(Error::Config("size report needs at least one target voxel and one phase".into()));
    }
    let set = UncertaintySet::singleton(vec![1.0 / num_phases as f64; num_phases])?;
    let config = config.with_variant(variant);
    let mut counter = SizeCounter::default();
    let big_m = config.big_m.unwrap_or(1.0);
    build(&mut counter, variant, geom, num_targets, &set, &config, big_m, Inputs { data: None, objective: None })?;
    Ok(SizeReport::from_counter(variant, counter))
}

/// Notes produced while decoding a MIP solution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeNotes {
    /// Apertures with a positive intensity but no open beamlet.
    pub empty_with_intensity: Vec<usize>,
}

/// Turns an assignment of an aperture model into a plan. Fails if the open
/// pattern of some aperture is not representable (islands or several angles).
pub fn decode(instance: &ModelInstance, x: &[f64]) -> Result<(FluencePlan, DecodeNotes)> {
    if !instance.variant.is_mip() {
        return Err(Error::Config(format!("{} has no apertures to decode", instance.variant)));
    }
    if x.len() != instance.model.num_vars() {
        return Err(Error::Shape(format!("assignment has {} values for {} variables", x.len(), instance.model.num_vars())));
    }
    let lay = &instance.layout;
    let geom = instance.geometry;
    let mut notes = DecodeNotes::default();
    let mut aps = Vec::with_capacity(lay.num_apertures);
    for a in 0..lay.num_apertures {
        let mask: Vec<bool> = (0..lay.num_beamlets).map(|b| x[lay.x[lay.ba(b, a)]] > 0.5).collect();
        let open_angle = mask.iter().position(|&o| o).map(|b| geom.angle_of(b));
        let angle = match (open_angle, instance.config.allocation.fixed_angle(a)) {
            (Some(t), _) => t,
            (None, Some(t)) => t,
            (None, None) => (0..lay.num_angles)
                .max_by(|&s, &t| x[lay.u[a * lay.num_angles + s]].total_cmp(&x[lay.u[a * lay.num_angles + t]]).then(t.cmp(&s)))
                .unwrap_or(0),
        };
        let f = x[lay.f[a]].max(0.0);
        if open_angle.is_none() && f > 1e-9 {
            notes.empty_with_intensity.push(a);
        }
        aps.push((angle, f, mask));
    }
    Ok((FluencePlan::from_masks(geom, &aps)?, notes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patient_b() -> BeamGeometry {
        BeamGeometry::new(2, 40, 19, 6).unwrap()
    }

    #[test]
    fn family_counts_for_patient_b() {
        let g = patient_b();
        let cfg = PlanningConfig::default_for(&g, Variant::Dao);
        let r = size_only(&g, 1050, 5, Variant::DaoC, &cfg).unwrap();
        let n = |f: RowFamily| r.families.get(&f).copied().unwrap_or(0);
        assert_eq!(n(RowFamily::Blocked) * 3, 27_360);
        assert_eq!(n(RowFamily::AngleChoice) + n(RowFamily::OneAngle), 18);
        assert_eq!(n(RowFamily::LeftLeaf) + n(RowFamily::RightLeaf) + n(RowFamily::LeafLink), 26_400);
        assert_eq!(n(RowFamily::JawLink) + n(RowFamily::RowOpen) + n(RowFamily::RowCover), 1_440);
        assert_eq!(n(RowFamily::UpperJaw) + n(RowFamily::LowerJaw), 936);
        assert_eq!(n(RowFamily::HorizLeft) + n(RowFamily::HorizRight), 17_784);
        assert_eq!(n(RowFamily::SymAngle1) + n(RowFamily::SymAngle2), 10);
    }

    #[test]
    fn symmetry_row_counts() {
        let g = patient_b();
        let mut cfg = PlanningConfig::default_for(&g, Variant::Dao);
        cfg.symmetry = SymmetryMode::GlobalSort;
        let r = size_only(&g, 10, 5, Variant::Dao, &cfg).unwrap();
        assert_eq!(r.families[&RowFamily::SymGlobal], 5);
        cfg.symmetry = SymmetryMode::PerAngleSort;
        assert!(size_only(&g, 10, 5, Variant::Dao, &cfg).is_err());
        cfg.allocation = Allocation::equal_blocks(&g);
        let r = size_only(&g, 10, 5, Variant::Dao, &cfg).unwrap();
        assert_eq!(r.families[&RowFamily::SymPerAngle], 4);
        assert!(!r.families.contains_key(&RowFamily::OneAngle));
    }
}
