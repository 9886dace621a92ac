//! Candidate plan generation: a fluence map lower bound, a min-max surrogate
//! LP, and gap filling into deliverable apertures. Also turns any deliverable
//! plan into a full warm-start assignment of an aperture model.

use crate::config::{Allocation, PlanningConfig, SymmetryMode};
use crate::dao::ModelInstance;
use crate::dose::DoseInfluenceTensor;
use crate::error::{Error, Result};
use crate::geometry::BeamGeometry;
use crate::model::{LinearModel, ModelSink, RowFamily, Sense, VarKind, VarName};
use crate::plan::{check_deliverability, Aperture, FluencePlan};
use crate::robust::{self, add_dual_vars, add_target_rows, robust_duals, FluenceColumns, TargetData};
use crate::solver::{solve_lp, SolveOptions, SolveOutcome, SolveStatus};
use crate::structures::StructureSet;
use crate::uncertainty::UncertaintySet;

/// Surrogate intensities at or below this value count as closed.
pub const ACTIVE_EPS: f64 = 1e-9;

/// Solution of the min-max surrogate with `|A'| = |A| / |Theta|` apertures per
/// angle.
#[derive(Debug, Clone, PartialEq)]
pub struct CpgSurrogateResult {
    pub geometry: BeamGeometry,
    pub apertures_per_angle: usize,
    /// Intensities indexed `[b * |A'| + a']`; beamlet `b` fixes the angle.
    pub w_lower: Vec<f64>,
    /// Largest intensity per angle and aperture, indexed `[theta * |A'| + a']`.
    pub m: Vec<f64>,
    pub objective: f64,
}

impl CpgSurrogateResult {
    pub fn w(&self, b: usize, a: usize) -> f64 {
        self.w_lower[b * self.apertures_per_angle + a]
    }

    pub fn m(&self, theta: usize, a: usize) -> f64 {
        self.m[theta * self.apertures_per_angle + a]
    }
}

/// Output of the full heuristic.
#[derive(Debug, Clone)]
pub struct CpgResult {
    pub plan: FluencePlan,
    pub z_cpg: f64,
    pub z_lower: f64,
    /// Optimal fluence of the lower-bound model.
    pub lower_fluence: Vec<f64>,
    pub surrogate: CpgSurrogateResult,
}

impl CpgResult {
    /// `(z_cpg - z_lower) / z_cpg`.
    pub fn gap(&self) -> f64 {
        (self.z_cpg - self.z_lower) / self.z_cpg.abs().max(1e-9)
    }
}

fn effective_set(config: &PlanningConfig, set: &UncertaintySet) -> UncertaintySet {
    if config.variant.is_robust() {
        set.clone()
    } else {
        set.nominal_only()
    }
}

/// Solves an LP and turns non-optimal outcomes into errors.
pub(crate) fn solve_required(model: &LinearModel, options: &SolveOptions, what: &str) -> Result<SolveOutcome> {
    let out = solve_lp(model, options)?;
    match out.report.status {
        SolveStatus::Optimal => Ok(out),
        SolveStatus::Infeasible => Err(Error::Infeasible(what.to_string())),
        SolveStatus::Unbounded => Err(Error::State(format!("{what} is unbounded"))),
        _ => Err(Error::Limit(format!("{what}: {}", out.report.message))),
    }
}

/// Step 1: the fluence map model (robust when the variant is robust). Returns
/// its optimum and optimal fluence.
pub fn cpg_step1(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
    config: &PlanningConfig,
) -> Result<(f64, Vec<f64>)> {
    let used = effective_set(config, set);
    let model = if config.variant.is_robust() {
        robust::build_rfmo(dose, structures, geom, &used, config)?
    } else {
        robust::build_fmo(dose, structures, geom, &used, config)?
    };
    let out = solve_required(&model, &SolveOptions::from_env(), "fluence map model")?;
    let w = robust::extract_fluence(&model, &out, geom.num_beamlets())?;
    Ok((out.report.objective, w))
}

/// The surrogate LP with its `w_lower` and `m` columns.
pub fn build_surrogate(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
    config: &PlanningConfig,
) -> Result<(LinearModel, Vec<usize>, Vec<usize>)> {
    config.validate_alpha()?;
    robust::check_dims(dose, structures, geom, set)?;
    let used = effective_set(config, set);
    let per = geom.equal_split()?;
    let (nb, nt) = (geom.num_beamlets(), geom.num_angles());
    let mut s = LinearModel::new();
    let mut wl = Vec::with_capacity(nb * per);
    for b in 0..nb {
        for a in 0..per {
            wl.push(s.add_var(VarName::WLower { b: b as u32, a: a as u32 }, VarKind::Continuous, 0.0, f64::INFINITY));
        }
    }
    let mut m = Vec::with_capacity(nt * per);
    for t in 0..nt {
        for a in 0..per {
            m.push(s.add_var(VarName::M { theta: t as u32, a: a as u32 }, VarKind::Continuous, 0.0, f64::INFINITY));
        }
    }
    let duals = config.variant.is_robust().then(|| add_dual_vars(&mut s, structures.num_target(), used.num_phases()));
    let fc = FluenceColumns { cols: &wl, per };
    add_target_rows(&mut s, structures.num_target(), &used, duals.as_ref(), Some(TargetData { dose, structures }), fc);
    for t in 0..nt {
        for a in 0..per {
            for b in geom.angle_beamlets(t) {
                let (mc, wc) = (m[t * per + a], wl[b * per + a]);
                s.add_row(RowFamily::MinMax, Sense::Ge, 0.0, || vec![(mc, 1.0), (wc, -1.0)]);
            }
        }
    }
    let alpha = config.alpha;
    for &j in &m {
        s.set_objective(j, alpha);
    }
    let c = robust::objective_coefficients(dose, structures, &used, config);
    for b in 0..nb {
        for a in 0..per {
            s.set_objective(wl[b * per + a], (1.0 - alpha) * c[b]);
        }
    }
    Ok((s, wl, m))
}

/// Step 2: solves the min-max surrogate.
pub fn cpg_step2(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
    config: &PlanningConfig,
) -> Result<CpgSurrogateResult> {
    let (model, wl, m) = build_surrogate(dose, structures, geom, set, config)?;
    let out = solve_required(&model, &SolveOptions::from_env(), "surrogate model")?;
    let x = out.assignment.as_ref().expect("optimal LP has an assignment");
    Ok(CpgSurrogateResult {
        geometry: *geom,
        apertures_per_angle: geom.apertures_per_angle(),
        w_lower: wl.iter().map(|&j| x[j].max(0.0)).collect(),
        m: m.iter().map(|&j| x[j].max(0.0)).collect(),
        objective: out.report.objective,
    })
}

/// Row windows of one surrogate aperture: first and last active column.
fn windows(sur: &CpgSurrogateResult, theta: usize, a: usize) -> Vec<Option<(usize, usize)>> {
    let g = &sur.geometry;
    (0..g.num_rows())
        .map(|q| {
            let active: Vec<usize> = (0..g.num_cols()).filter(|&k| sur.w(g.beamlet(q, k, theta), a) > ACTIVE_EPS).collect();
            Some((*active.first()?, *active.last()?))
        })
        .collect()
}

/// Makes every pair of consecutive active rows overlap and fills skipped rows
/// with a one-column bridge at `max(first', first)`, where the primed window
/// is the previous active row after its own adjustment.
fn enforce_continuity(rows: &mut [Option<(usize, usize)>]) {
    let mut prev: Option<(usize, (usize, usize))> = None;
    for q in 0..rows.len() {
        let Some((mut lo, mut hi)) = rows[q] else { continue };
        if let Some((pq, (plo, phi))) = prev {
            if lo > phi {
                lo = phi;
            }
            if hi < plo {
                hi = plo;
            }
            rows[q] = Some((lo, hi));
            let c = plo.max(lo);
            for r in rows.iter_mut().take(q).skip(pq + 1) {
                *r = Some((c, c));
            }
        }
        prev = Some((q, (lo, hi)));
    }
}

/// Aperture slots for the filled surrogate apertures, listed per angle in
/// surrogate order, following the symmetry mode and allocation.
fn sequence(totals: &[Vec<f64>], geom: &BeamGeometry, config: &PlanningConfig) -> Result<Vec<(usize, usize)>> {
    let per = geom.apertures_per_angle();
    let nt = geom.num_angles();
    let by_total = |list: &mut Vec<(usize, usize)>, descending: bool| {
        list.sort_by(|&(t1, a1), &(t2, a2)| {
            let c = totals[t1][a1].total_cmp(&totals[t2][a2]);
            let c = if descending { c.reverse() } else { c };
            c.then((t1, a1).cmp(&(t2, a2)))
        });
    };
    let all: Vec<(usize, usize)> = (0..nt).flat_map(|t| (0..per).map(move |a| (t, a))).collect();
    match (&config.allocation, config.symmetry) {
        (Allocation::DecisionBased, SymmetryMode::None) => Ok(all),
        (Allocation::DecisionBased, SymmetryMode::GlobalSort) => {
            let mut v = all;
            by_total(&mut v, true);
            Ok(v)
        }
        (alloc, SymmetryMode::TwoAngleSort) => {
            if nt != 2 {
                return Err(Error::Config("two_angle_sort needs exactly 2 angles".into()));
            }
            if let Allocation::Preallocated(_) = alloc {
                if *alloc != Allocation::equal_blocks(geom) {
                    return Err(Error::Config("two_angle_sort with preallocation needs the equal-block allocation".into()));
                }
            }
            let mut first: Vec<(usize, usize)> = (0..per).map(|a| (0, a)).collect();
            let mut second: Vec<(usize, usize)> = (0..per).map(|a| (1, a)).collect();
            by_total(&mut first, true);
            by_total(&mut second, false);
            first.extend(second);
            Ok(first)
        }
        (Allocation::DecisionBased, SymmetryMode::PerAngleSort) => {
            Err(Error::Config("per_angle_sort is incompatible with decision-based allocation".into()))
        }
        (Allocation::Preallocated(_), SymmetryMode::GlobalSort) => Err(Error::Config(
            "the heuristic cannot order preallocated apertures globally; use per_angle_sort or none".into(),
        )),
        (alloc @ Allocation::Preallocated(_), mode) => {
            let counts = alloc.counts(geom).expect("preallocated");
            if counts.iter().any(|&c| c != per) {
                return Err(Error::Config(format!(
                    "the heuristic needs {per} apertures per angle, preallocation has {counts:?}"
                )));
            }
            let mut slots = vec![(0, 0); geom.num_apertures()];
            for t in 0..nt {
                let mut group: Vec<(usize, usize)> = (0..per).map(|a| (t, a)).collect();
                if mode == SymmetryMode::PerAngleSort {
                    by_total(&mut group, true);
                }
                let targets = (0..geom.num_apertures()).filter(|&a| alloc.fixed_angle(a) == Some(t));
                for (slot, item) in targets.zip(group) {
                    slots[slot] = item;
                }
            }
            Ok(slots)
        }
    }
}

/// Step 3: windows from active surrogate beamlets, optional continuity
/// repair, uniform intensity `m` per aperture and symmetry-consistent order.
pub fn gap_fill(sur: &CpgSurrogateResult, geom: &BeamGeometry, config: &PlanningConfig) -> Result<FluencePlan> {
    if sur.geometry != *geom {
        return Err(Error::Shape("surrogate geometry differs from the plan geometry".into()));
    }
    let per = geom.equal_split()?;
    if sur.apertures_per_angle != per {
        return Err(Error::Shape(format!("surrogate has {} apertures per angle, geometry {per}", sur.apertures_per_angle)));
    }
    let nt = geom.num_angles();
    let mut filled: Vec<Vec<Aperture>> = Vec::with_capacity(nt);
    for t in 0..nt {
        let mut v = Vec::with_capacity(per);
        for a in 0..per {
            let mut rows = windows(sur, t, a);
            if config.variant.has_continuity() {
                enforce_continuity(&mut rows);
            }
            let mut ap = Aperture { angle: t, intensity: 0.0, rows };
            if !ap.is_empty() {
                let peak = geom.angle_beamlets(t).map(|b| sur.w(b, a)).fold(0.0, f64::max);
                ap.intensity = sur.m(t, a).max(peak);
            }
            v.push(ap);
        }
        filled.push(v);
    }
    let totals: Vec<Vec<f64>> =
        filled.iter().map(|v| v.iter().map(|ap| ap.intensity * ap.open_count() as f64).collect()).collect();
    let order = sequence(&totals, geom, config)?;
    let apertures = order.into_iter().map(|(t, a)| filled[t][a].clone()).collect();
    Ok(FluencePlan { geometry: *geom, apertures })
}

/// `sum_b sum_a c_b w_{b,a}`, summed in the same order as the aperture
/// model objective.
pub fn plan_objective(plan: &FluencePlan, coeffs: &[f64]) -> f64 {
    let na = plan.apertures.len();
    let w = plan.aperture_fluence();
    let mut z = 0.0;
    for (b, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for a in 0..na {
            z += c * w[b * na + a];
        }
    }
    z
}

/// The three steps end to end.
pub fn run_cpg(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
    config: &PlanningConfig,
) -> Result<CpgResult> {
    config.validate(geom)?;
    let (z_lower, lower_fluence) = cpg_step1(dose, structures, geom, set, config)?;
    let surrogate = cpg_step2(dose, structures, geom, set, config)?;
    let plan = gap_fill(&surrogate, geom, config)?;
    let c = robust::objective_coefficients(dose, structures, &effective_set(config, set), config);
    let z_cpg = plan_objective(&plan, &c);
    Ok(CpgResult { plan, z_cpg, z_lower, lower_fluence, surrogate })
}

/// Full assignment of `instance` realizing `plan`: aperture variables from
/// the windows, leaves and jaws from window ends, and optimal duals of the
/// robust rows for the delivered fluence.
pub fn generate_warm_start(plan: &FluencePlan, instance: &ModelInstance) -> Result<Vec<f64>> {
    let geom = &instance.geometry;
    if plan.geometry != *geom {
        return Err(Error::Config("plan geometry differs from the model geometry".into()));
    }
    let lay = &instance.layout;
    let mut x = vec![0.0; instance.model.num_vars()];
    if instance.variant.is_mip() {
        let problems = check_deliverability(plan, instance.variant);
        if let Some(p) = problems.first() {
            return Err(Error::Config(format!(
                "plan is not deliverable under {} ({} problem(s), first: {p})",
                instance.variant,
                problems.len()
            )));
        }
        let plan = &canonical_order(plan, &instance.config)?;
        for (a, ap) in plan.apertures.iter().enumerate() {
            if ap.intensity > instance.big_m {
                return Err(Error::Config(format!(
                    "aperture {} intensity {} exceeds big_m {}; rebuild with a larger big_m override",
                    a + 1,
                    ap.intensity,
                    instance.big_m
                )));
            }
        }
        fill_apertures(plan, instance, &mut x);
    } else {
        for (b, w) in plan.fluence().into_iter().enumerate() {
            x[lay.omega[b]] = w;
        }
    }
    if let Some(duals) = &lay.duals {
        let ni = instance.set.num_phases();
        let phase_rows: Vec<_> = instance.model.constraints.iter().filter(|c| c.family == RowFamily::RobustPhase).collect();
        for (t, rows) in phase_rows.chunks(ni).enumerate() {
            let d: Vec<f64> = rows.iter().map(|r| r.activity(&x)).collect();
            let (y0, y) = robust_duals(&instance.set, &d);
            x[duals.y0[t]] = y0;
            for (i, yi) in y.into_iter().enumerate() {
                x[duals.y[t * ni + i]] = yi;
            }
        }
    }
    Ok(x)
}

/// Sum of an aperture's beamlet intensities.
fn aperture_sum(ap: &Aperture) -> f64 {
    ap.intensity * ap.open_count() as f64
}

/// The same apertures permuted into the order the symmetry rows of `config`
/// expect. Stable, so an already ordered plan is returned unchanged.
pub fn canonical_order(plan: &FluencePlan, config: &PlanningConfig) -> Result<FluencePlan> {
    let geom = &plan.geometry;
    let n = plan.apertures.len();
    let key = |a: usize| aperture_sum(&plan.apertures[a]);
    let desc = |v: &mut Vec<usize>| v.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    let order: Vec<usize> = match &config.allocation {
        Allocation::DecisionBased => {
            let mut v: Vec<usize> = (0..n).collect();
            match config.symmetry {
                SymmetryMode::GlobalSort => desc(&mut v),
                SymmetryMode::TwoAngleSort => {
                    // Angle-1 sums fall, then closed apertures, then angle-2 sums rise.
                    let rank = |a: usize| {
                        let k = key(a);
                        match (plan.apertures[a].angle, k > 0.0) {
                            (_, false) => (1, 0.0),
                            (0, true) => (0, -k),
                            _ => (2, k),
                        }
                    };
                    v.sort_by(|&a, &b| {
                        let (ga, ka) = rank(a);
                        let (gb, kb) = rank(b);
                        ga.cmp(&gb).then(ka.total_cmp(&kb))
                    });
                }
                _ => {}
            }
            v
        }
        alloc @ Allocation::Preallocated(_) => {
            let mut slots = vec![usize::MAX; n];
            for t in 0..geom.num_angles() {
                let mut group: Vec<usize> = (0..n).filter(|&a| plan.apertures[a].angle == t).collect();
                let targets: Vec<usize> = (0..n).filter(|&a| alloc.fixed_angle(a) == Some(t)).collect();
                if group.len() != targets.len() {
                    return Err(Error::Config(format!(
                        "plan has {} aperture(s) at angle {} but the preallocation has {}",
                        group.len(),
                        t + 1,
                        targets.len()
                    )));
                }
                match config.symmetry {
                    SymmetryMode::TwoAngleSort if t == 1 => group.sort_by(|&a, &b| key(a).total_cmp(&key(b))),
                    SymmetryMode::None => {}
                    _ => desc(&mut group),
                }
                for (slot, a) in targets.into_iter().zip(group) {
                    slots[slot] = a;
                }
            }
            slots
        }
    };
    let apertures = order.into_iter().map(|a| plan.apertures[a].clone()).collect();
    Ok(FluencePlan { geometry: plan.geometry, apertures })
}

fn fill_apertures(plan: &FluencePlan, instance: &ModelInstance, x: &mut [f64]) {
    let geom = &instance.geometry;
    let lay = &instance.layout;
    let (nq, nk, nt) = (geom.num_rows(), geom.num_cols(), geom.num_angles());
    for (a, ap) in plan.apertures.iter().enumerate() {
        x[lay.f[a]] = ap.intensity;
        if !lay.u.is_empty() {
            x[lay.u[a * nt + ap.angle]] = 1.0;
        }
        for t in 0..nt {
            for q in 0..nq {
                let window = if t == ap.angle { ap.rows[q] } else { None };
                for k in 0..nk {
                    let i = lay.ba(geom.beamlet(q, k, t), a);
                    let (l, r) = match window {
                        Some((first, last)) => (k >= first, k <= last),
                        None => (false, true),
                    };
                    x[lay.l[i]] = f64::from(u8::from(l));
                    x[lay.r[i]] = f64::from(u8::from(r));
                    if l && r {
                        x[lay.x[i]] = 1.0;
                        x[lay.w[i]] = ap.intensity;
                    }
                }
            }
            if lay.j.is_empty() {
                continue;
            }
            let active: Vec<usize> =
                if t == ap.angle { (0..nq).filter(|&q| ap.rows[q].is_some()).collect() } else { Vec::new() };
            for q in 0..nq {
                let i = lay.qta(q, t, a);
                let (ju, jl) = match (active.first(), active.last()) {
                    (Some(&first), Some(&last)) => (q >= first, q <= last),
                    _ => (false, true),
                };
                x[lay.ju[i]] = f64::from(u8::from(ju));
                x[lay.jl[i]] = f64::from(u8::from(jl));
                x[lay.j[i]] = f64::from(u8::from(ju && jl));
            }
        }
    }
}
