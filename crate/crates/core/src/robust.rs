//! Fluence map models, nominal and robust, and the target-dose rows that the
//! aperture models reuse.
//!
//! The robust rows replace "dose >= L for every p in P" by its linear dual.
//! With clamped bounds `lo <= p <= hi`, `sum p = 1` and per-phase doses `d`:
//!
//! ```text
//! sum_i lo_i d_i + s y0 - sum_i (hi_i - lo_i) y_i >= L,   s = 1 - sum_i lo_i
//! d_i - y0 + y_i >= 0                                      for every phase i
//! y_i >= 0, y0 free
//! ```

use crate::config::PlanningConfig;
use crate::dose::DoseInfluenceTensor;
use crate::error::{Error, Result};
use crate::geometry::BeamGeometry;
use crate::model::{LinearModel, ModelSink, RowFamily, Sense, VarKind, VarName};
use crate::solver::SolveOutcome;
use crate::structures::StructureSet;
use crate::uncertainty::UncertaintySet;

/// Checks that tensor, structures, geometry and uncertainty set agree.
pub fn check_dims(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
) -> Result<()> {
    if dose.num_beamlets() != geom.num_beamlets() {
        return Err(Error::Shape(format!(
            "tensor has {} beamlets, geometry has {}",
            dose.num_beamlets(),
            geom.num_beamlets()
        )));
    }
    if dose.num_phases() != set.num_phases() {
        return Err(Error::Shape(format!(
            "tensor has {} phases, uncertainty set has {}",
            dose.num_phases(),
            set.num_phases()
        )));
    }
    if let Some(v) = structures.max_voxel() {
        if v >= dose.num_voxels() {
            return Err(Error::Shape(format!("voxel id {} exceeds tensor voxel count {}", v + 1, dose.num_voxels())));
        }
    }
    Ok(())
}

/// Per-beamlet objective coefficients
/// `c_b = sum_s c_s / |V_s| * sum_{v in V_s} sum_i p_i D[v,b,i]` at nominal `p`.
/// All healthy structures together form the healthy term.
pub fn objective_coefficients(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    set: &UncertaintySet,
    config: &PlanningConfig,
) -> Vec<f64> {
    let nb = dose.num_beamlets();
    let ni = dose.num_phases();
    let p = set.nominal();
    let mut c = vec![0.0; nb];
    let mut add = |voxels: &mut dyn Iterator<Item = usize>, weight: f64| {
        for v in voxels {
            for (b, row) in dose.voxel_block(v).chunks_exact(ni).enumerate() {
                c[b] += weight * row.iter().zip(p).map(|(d, p)| d * p).sum::<f64>();
            }
        }
    };
    let nt = structures.num_target();
    add(&mut structures.target().iter().copied(), config.weight_target / nt as f64);
    let nh = structures.num_healthy();
    if nh > 0 {
        add(&mut structures.healthy().iter().flat_map(|h| h.voxels.iter().copied()), config.weight_healthy / nh as f64);
    }
    c
}

/// Coefficient data for target rows. `None` is used for size-only builds.
#[derive(Clone, Copy)]
pub(crate) struct TargetData<'a> {
    pub dose: &'a DoseInfluenceTensor,
    pub structures: &'a StructureSet,
}

/// Dual variable indices of the robust rows: `y0[t]` and `y[t * |I| + i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualLayout {
    pub y0: Vec<usize>,
    pub y: Vec<usize>,
}

/// Columns whose sum is the fluence of each beamlet: beamlet `b` owns
/// `cols[b * per .. (b + 1) * per]`.
#[derive(Clone, Copy)]
pub(crate) struct FluenceColumns<'a> {
    pub cols: &'a [usize],
    pub per: usize,
}

fn fluence_terms(fc: FluenceColumns<'_>, g: impl Fn(usize) -> f64, out: &mut Vec<(usize, f64)>) {
    let nb = fc.cols.len() / fc.per;
    for b in 0..nb {
        let v = g(b);
        if v != 0.0 {
            out.extend(fc.cols[b * fc.per..(b + 1) * fc.per].iter().map(|&j| (j, v)));
        }
    }
}

/// Adds the dual variables of the robust rows (robust models only).
pub(crate) fn add_dual_vars<S: ModelSink>(s: &mut S, num_targets: usize, num_phases: usize) -> DualLayout {
    let mut lay = DualLayout::default();
    for t in 0..num_targets {
        lay.y0.push(s.add_var(VarName::Y0 { v: t as u32 }, VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY));
        for i in 0..num_phases {
            lay.y.push(s.add_var(VarName::Y { i: i as u32, v: t as u32 }, VarKind::Continuous, 0.0, f64::INFINITY));
        }
    }
    lay
}

/// Adds one row per target voxel (nominal) or `|I| + 1` rows per target voxel
/// (robust, when `duals` is given).
pub(crate) fn add_target_rows<S: ModelSink>(
    s: &mut S,
    num_targets: usize,
    set: &UncertaintySet,
    duals: Option<&DualLayout>,
    data: Option<TargetData<'_>>,
    fc: FluenceColumns<'_>,
) {
    let ni = set.num_phases();
    for t in 0..num_targets {
        let rhs = data.map_or(0.0, |d| d.structures.prescription()[t]);
        fn block<'b>(d: &TargetData<'b>, t: usize) -> &'b [f64] {
            d.dose.voxel_block(d.structures.target()[t])
        }
        match duals {
            None => {
                let p = set.nominal();
                s.add_row(RowFamily::Target, Sense::Ge, rhs, || {
                    let d = data.expect("coefficients requested without dose data");
                    let blk = block(&d, t);
                    let mut out = Vec::new();
                    fluence_terms(fc, |b| blk[b * ni..(b + 1) * ni].iter().zip(p).map(|(d, p)| d * p).sum(), &mut out);
                    out
                });
            }
            Some(lay) => {
                let (lo, hi) = (set.lower(), set.upper());
                let free = 1.0 - lo.iter().sum::<f64>();
                s.add_row(RowFamily::RobustBound, Sense::Ge, rhs, || {
                    let d = data.expect("coefficients requested without dose data");
                    let blk = block(&d, t);
                    let mut out = Vec::new();
                    fluence_terms(fc, |b| blk[b * ni..(b + 1) * ni].iter().zip(lo).map(|(d, l)| d * l).sum(), &mut out);
                    out.push((lay.y0[t], free));
                    for i in 0..ni {
                        out.push((lay.y[t * ni + i], -(hi[i] - lo[i])));
                    }
                    out
                });
                for i in 0..ni {
                    s.add_row(RowFamily::RobustPhase, Sense::Ge, 0.0, || {
                        let d = data.expect("coefficients requested without dose data");
                        let blk = block(&d, t);
                        let mut out = Vec::new();
                        fluence_terms(fc, |b| blk[b * ni + i], &mut out);
                        out.push((lay.y0[t], -1.0));
                        out.push((lay.y[t * ni + i], 1.0));
                        out
                    });
                }
            }
        }
    }
}

/// Closed-form optimal duals for fixed per-phase doses `d`: `y0` is the dose
/// level at which the free probability mass is used up when filling the
/// cheapest phases first, and `y_i = max(0, y0 - d_i)`.
pub fn robust_duals(set: &UncertaintySet, d: &[f64]) -> (f64, Vec<f64>) {
    let (lo, hi) = (set.lower(), set.upper());
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let mut remaining = 1.0 - lo.iter().sum::<f64>();
    let mut y0 = d[order[0]];
    for &i in &order {
        y0 = d[i];
        remaining -= hi[i] - lo[i];
        if remaining <= 0.0 {
            break;
        }
    }
    let y = d.iter().map(|&di| (y0 - di).max(0.0)).collect();
    (y0, y)
}

fn build_base(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
    config: &PlanningConfig,
    robust: bool,
) -> Result<LinearModel> {
    check_dims(dose, structures, geom, set)?;
    config.validate(geom)?;
    let mut m = LinearModel::new();
    let omega: Vec<usize> = (0..geom.num_beamlets())
        .map(|b| m.add_var(VarName::Omega { b: b as u32 }, VarKind::Continuous, 0.0, f64::INFINITY))
        .collect();
    let duals = robust.then(|| add_dual_vars(&mut m, structures.num_target(), set.num_phases()));
    let data = TargetData { dose, structures };
    add_target_rows(&mut m, structures.num_target(), set, duals.as_ref(), Some(data), FluenceColumns { cols: &omega, per: 1 });
    for (b, c) in objective_coefficients(dose, structures, set, config).into_iter().enumerate() {
        m.set_objective(omega[b], c);
    }
    Ok(m)
}

/// Nominal fluence map LP. The uncertainty set must be a single point.
pub fn build_fmo(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
    config: &PlanningConfig,
) -> Result<LinearModel> {
    if !set.is_singleton() {
        return Err(Error::Config("the nominal model needs zero deviations; use build_rfmo or nominal_only()".into()));
    }
    build_base(dose, structures, geom, set, config, false)
}

/// Robust fluence map LP with the dual counterpart rows.
pub fn build_rfmo(
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    set: &UncertaintySet,
    config: &PlanningConfig,
) -> Result<LinearModel> {
    build_base(dose, structures, geom, set, config, true)
}

/// Per-beamlet fluence from a full assignment: `omega_b` columns, or the sum
/// of `w_{b,a}` over apertures. Tiny negative solver noise is clamped to 0.
pub fn fluence_from_assignment(model: &LinearModel, x: &[f64], num_beamlets: usize) -> Result<Vec<f64>> {
    if x.len() != model.num_vars() {
        return Err(Error::Shape(format!("assignment has {} values for {} variables", x.len(), model.num_vars())));
    }
    let mut out = vec![0.0; num_beamlets];
    for (v, &val) in model.variables.iter().zip(x) {
        let b = match v.name {
            VarName::Omega { b } | VarName::W { b, .. } => b as usize,
            _ => continue,
        };
        if b >= num_beamlets {
            return Err(Error::Shape(format!("model references beamlet {} of {num_beamlets}", b + 1)));
        }
        out[b] += val;
    }
    out.iter_mut().for_each(|w| *w = w.max(0.0));
    Ok(out)
}

/// Fluence of a solved model; fails if the solve produced no assignment.
pub fn extract_fluence(model: &LinearModel, outcome: &SolveOutcome, num_beamlets: usize) -> Result<Vec<f64>> {
    let x = outcome
        .assignment
        .as_ref()
        .ok_or_else(|| Error::State(format!("model has no solution (status {})", outcome.report.status)))?;
    fluence_from_assignment(model, x, num_beamlets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Variant;
    use crate::solver::{solve_lp, SolveOptions, SolveStatus};
    use crate::structures::HealthyStructure;

    fn geom1() -> BeamGeometry {
        BeamGeometry::new(1, 1, 1, 1).unwrap()
    }

    #[test]
    fn single_voxel_single_beamlet() {
        let dose = DoseInfluenceTensor::new(1, 1, 1, vec![1.0]).unwrap();
        let st = StructureSet::uniform(vec![0], 42.4, vec![]).unwrap();
        let set = UncertaintySet::singleton(vec![1.0]).unwrap();
        let cfg = PlanningConfig::default_for(&geom1(), Variant::Fmo);
        let m = build_fmo(&dose, &st, &geom1(), &set, &cfg).unwrap();
        let out = solve_lp(&m, &SolveOptions::default()).unwrap();
        let w = extract_fluence(&m, &out, 1).unwrap();
        assert!((w[0] - 42.4).abs() < 1e-9);
    }

    #[test]
    fn healthy_weight_steers_fluence() {
        // Voxel 0 is the target (D = 1, 2), voxel 1 is healthy and only sees beamlet 1.
        let geom = BeamGeometry::new(1, 1, 2, 1).unwrap();
        let dose = DoseInfluenceTensor::new(2, 2, 1, vec![1.0, 2.0, 1.0, 0.0]).unwrap();
        let heart = HealthyStructure { name: "heart".into(), voxels: vec![1] };
        let st = StructureSet::uniform(vec![0], 10.0, vec![heart]).unwrap();
        let set = UncertaintySet::singleton(vec![1.0]).unwrap();
        let cfg = PlanningConfig::default_for(&geom, Variant::Fmo);
        let m = build_fmo(&dose, &st, &geom, &set, &cfg).unwrap();
        let out = solve_lp(&m, &SolveOptions::default()).unwrap();
        let w = extract_fluence(&m, &out, 2).unwrap();
        assert!(w[0].abs() < 1e-9);
        assert!((w[1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn unsolved_is_a_state_error() {
        let dose = DoseInfluenceTensor::new(1, 1, 1, vec![0.0]).unwrap();
        let st = StructureSet::uniform(vec![0], 1.0, vec![]).unwrap();
        let set = UncertaintySet::singleton(vec![1.0]).unwrap();
        let cfg = PlanningConfig::default_for(&geom1(), Variant::Fmo);
        let m = build_fmo(&dose, &st, &geom1(), &set, &cfg).unwrap();
        let out = solve_lp(&m, &SolveOptions::default()).unwrap();
        assert_eq!(out.report.status, SolveStatus::Infeasible);
        assert!(matches!(extract_fluence(&m, &out, 1), Err(Error::State(_))));
    }

    #[test]
    fn closed_form_duals_match_worst_case() {
        let set = UncertaintySet::breathing(0.1);
        let d = [30.0, 10.0, 50.0, 20.0, 40.0];
        let (y0, y) = robust_duals(&set, &d);
        let (lo, hi) = (set.lower(), set.upper());
        let free = 1.0 - lo.iter().sum::<f64>();
        let lhs: f64 = (0..5).map(|i| lo[i] * d[i] - (hi[i] - lo[i]) * y[i]).sum::<f64>() + free * y0;
        assert!((lhs - set.worst_case(&d).unwrap()).abs() < 1e-12);
        assert!((0..5).all(|i| d[i] - y0 + y[i] >= -1e-12));
    }
}
