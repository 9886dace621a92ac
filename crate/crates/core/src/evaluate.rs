//! Clinical scoring of plans: dose statistics, dose-volume histograms, 95/95
//! normalization and robustness checks over the uncertainty set.

use std::fmt::Write as _;

use crate::dose::DoseInfluenceTensor;
use crate::error::{Error, Result};
use crate::plan::FluencePlan;
use crate::structures::StructureSet;
use crate::uncertainty::UncertaintySet;

/// Absolute slack below the prescription tolerated before a voxel counts as
/// underdosed.
pub const UNDERDOSE_TOL: f64 = 1e-6;

/// Fraction of the reference dose and of the target volume used by
/// [`normalize_plan`].
pub const NORMALIZATION_LEVEL: f64 = 0.95;

/// Mean and maximum dose of one healthy structure.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthyStats {
    pub name: String,
    pub ave: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub t_min: f64,
    pub t_ave: f64,
    pub t_max: f64,
    /// Over the union of healthy structures (0 when there are none).
    pub h_ave: f64,
    pub h_max: f64,
    pub healthy: Vec<HealthyStats>,
    pub realized_p: Vec<f64>,
    pub normalization_factor: f64,
    pub aperture_count_used: usize,
    /// Some target voxel receives less than its prescription.
    pub underdose_flag: bool,
    pub underdosed_voxels: usize,
    /// Vertices of the uncertainty set at which the plan underdoses, when a
    /// robustness check was run.
    pub vertex_underdoses: Option<usize>,
}

/// Formats with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..=15).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

impl EvaluationReport {
    /// `key = value` lines, doses in Gy with 6 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p: Vec<String> = self.realized_p.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "realized_p = {}", p.join(","));
        let _ = writeln!(s, "t_min = {}", sig6(self.t_min));
        let _ = writeln!(s, "t_ave = {}", sig6(self.t_ave));
        let _ = writeln!(s, "t_max = {}", sig6(self.t_max));
        let _ = writeln!(s, "h_ave = {}", sig6(self.h_ave));
        let _ = writeln!(s, "h_max = {}", sig6(self.h_max));
        for h in &self.healthy {
            let _ = writeln!(s, "h_ave.{} = {}", h.name, sig6(h.ave));
            let _ = writeln!(s, "h_max.{} = {}", h.name, sig6(h.max));
        }
        let _ = writeln!(s, "normalization_factor = {}", sig6(self.normalization_factor));
        let _ = writeln!(s, "aperture_count_used = {}", self.aperture_count_used);
        let _ = writeln!(s, "underdose_flag = {}", self.underdose_flag);
        let _ = writeln!(s, "underdosed_voxels = {}", self.underdosed_voxels);
        if let Some(n) = self.vertex_underdoses {
            let _ = writeln!(s, "vertex_underdoses = {n}");
        }
        s
    }
}

fn check_plan(plan: &FluencePlan, dose: &DoseInfluenceTensor, p: &[f64]) -> Result<Vec<f64>> {
    if plan.geometry.num_beamlets() != dose.num_beamlets() {
        return Err(Error::Shape(format!(
            "plan has {} beamlets, tensor {}",
            plan.geometry.num_beamlets(),
            dose.num_beamlets()
        )));
    }
    if p.len() != dose.num_phases() {
        return Err(Error::Shape(format!("{} phase weights for {} phases", p.len(), dose.num_phases())));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Invalid("realized proportions must be a probability vector".into()));
    }
    Ok(plan.fluence())
}

/// Expected dose of every target voxel, aligned with the target list.
pub fn target_doses(plan: &FluencePlan, dose: &DoseInfluenceTensor, structures: &StructureSet, p: &[f64]) -> Result<Vec<f64>> {
    let w = check_plan(plan, dose, p)?;
    structures.target().iter().map(|&v| dose.dose_to_voxel(v, &w, p)).collect()
}

fn stats(d: &[f64]) -> (f64, f64, f64) {
    if d.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ave = (d.iter().sum::<f64>() / d.len() as f64).clamp(min, max);
    (min, ave, max)
}

/// Dose statistics of a plan under realized phase proportions.
pub fn evaluate_plan(plan: &FluencePlan, dose: &DoseInfluenceTensor, structures: &StructureSet, p_real: &[f64]) -> Result<EvaluationReport> {
    let w = check_plan(plan, dose, p_real)?;
    let td = target_doses(plan, dose, structures, p_real)?;
    let (t_min, t_ave, t_max) = stats(&td);
    let under = td.iter().zip(structures.prescription()).filter(|(d, l)| **d < **l - UNDERDOSE_TOL).count();
    let mut healthy = Vec::new();
    let mut all = Vec::new();
    for h in structures.healthy() {
        let d: Vec<f64> = h.voxels.iter().map(|&v| dose.dose_to_voxel(v, &w, p_real)).collect::<Result<_>>()?;
        let (_, ave, max) = stats(&d);
        healthy.push(HealthyStats { name: h.name.clone(), ave, max });
        all.extend(d);
    }
    let (_, h_ave, h_max) = stats(&all);
    Ok(EvaluationReport {
        t_min,
        t_ave,
        t_max,
        h_ave,
        h_max,
        healthy,
        realized_p: p_real.to_vec(),
        normalization_factor: 1.0,
        aperture_count_used: plan.apertures_used(),
        underdose_flag: under > 0,
        underdosed_voxels: under,
        vertex_underdoses: None,
    })
}

/// Indices of the vertices of `set` at which some target voxel is underdosed.
pub fn vertex_underdoses(plan: &FluencePlan, dose: &DoseInfluenceTensor, structures: &StructureSet, set: &UncertaintySet) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (n, p) in set.vertices().iter().enumerate() {
        if evaluate_plan(plan, dose, structures, p)?.underdose_flag {
            out.push(n);
        }
    }
    Ok(out)
}

/// Dose level the 95/95 rule is applied to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationReference {
    /// Each voxel's prescription.
    Prescription,
    /// A fixed dose for every voxel. Robust plans use their own minimum target
    /// dose as generated, see [`minimum_target_dose`], to keep their margin.
    Level(f64),
}

/// Smallest expected target dose of a plan under `p`.
pub fn minimum_target_dose(plan: &FluencePlan, dose: &DoseInfluenceTensor, structures: &StructureSet, p: &[f64]) -> Result<f64> {
    Ok(target_doses(plan, dose, structures, p)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Index of the lower-interpolated `q` quantile of `n` sorted samples.
pub fn lower_quantile_index(n: usize, q: f64) -> usize {
    ((q * (n - 1) as f64) + 1e-12).floor() as usize
}

/// Scales a plan so the 5th-percentile target dose (lower interpolation)
/// equals 95% of the reference. Returns the scaled plan and the factor.
pub fn normalize_plan(
    plan: &FluencePlan,
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    p: &[f64],
    reference: NormalizationReference,
) -> Result<(FluencePlan, f64)> {
    if let NormalizationReference::Level(l) = reference {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Normalize(format!("reference level must be positive, got {l}")));
        }
    }
    let reference_of = |v: usize| match reference {
        NormalizationReference::Prescription => structures.prescription()[v],
        NormalizationReference::Level(l) => l,
    };
    let td = target_doses(plan, dose, structures, p)?;
    let mut ratios: Vec<f64> = td.iter().enumerate().map(|(v, d)| d / reference_of(v)).collect();
    ratios.sort_by(f64::total_cmp);
    let idx = lower_quantile_index(ratios.len(), 1.0 - NORMALIZATION_LEVEL);
    let q = ratios[idx];
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Normalize("the 5th-percentile target dose is zero".into()));
    }
    let mut factor = NORMALIZATION_LEVEL / q;
    let needed = ratios.len() - idx;
    // Rounding in the rescaled doses can leave the binding voxel an ulp short.
    for _ in 0..64 {
        let scaled = plan.scaled(factor);
        let td = target_doses(&scaled, dose, structures, p)?;
        let covered = td.iter().enumerate().filter(|&(v, d)| *d >= NORMALIZATION_LEVEL * reference_of(v)).count();
        if covered >= needed {
            return Ok((scaled, factor));
        }
        factor *= 1.0 + 2.0 * f64::EPSILON;
    }
    Err(Error::Normalize("rescaled plan does not reach the 95% level".into()))
}

/// Empirical dose-volume histogram of one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DvhCurve {
    pub structure: String,
    /// Voxel doses, ascending.
    pub doses: Vec<f64>,
}

impl DvhCurve {
    pub fn new(structure: impl Into<String>, mut doses: Vec<f64>) -> Self {
        doses.sort_by(f64::total_cmp);
        Self { structure: structure.into(), doses }
    }

    /// Fraction of voxels receiving at least `threshold`.
    pub fn volume_fraction(&self, threshold: f64) -> f64 {
        if self.doses.is_empty() {
            return 0.0;
        }
        let below = self.doses.partition_point(|&d| d < threshold);
        (self.doses.len() - below) as f64 / self.doses.len() as f64
    }

    /// `threshold,fraction` rows at 0 and at every distinct dose, which pins
    /// the step function exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fraction\n");
        let mut last = None;
        for t in std::iter::once(0.0).chain(self.doses.iter().copied()) {
            if last == Some(t) {
                continue;
            }
            let _ = writeln!(s, "{},{}", sig6(t), self.volume_fraction(t));
            last = Some(t);
        }
        s
    }
}

/// DVH of the target followed by every healthy structure.
pub fn dvh(plan: &FluencePlan, dose: &DoseInfluenceTensor, structures: &StructureSet, p_real: &[f64]) -> Result<Vec<DvhCurve>> {
    let w = check_plan(plan, dose, p_real)?;
    let mut out = vec![DvhCurve::new("target", target_doses(plan, dose, structures, p_real)?)];
    for h in structures.healthy() {
        let d = h.voxels.iter().map(|&v| dose.dose_to_voxel(v, &w, p_real)).collect::<Result<Vec<_>>>()?;
        out.push(DvhCurve::new(h.name.clone(), d));
    }
    Ok(out)
}
