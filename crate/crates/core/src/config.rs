//! Planning parameters and the model variant matrix.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::BeamGeometry;

/// The six model variants. `R` adds the robust counterpart, `-C` adds the
/// vertical and horizontal continuity families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Fmo,
    Rfmo,
    Dao,
    DaoC,
    Rdao,
    RdaoC,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::Fmo, Variant::Dao, Variant::DaoC, Variant::Rfmo, Variant::Rdao, Variant::RdaoC];

    /// The four variants with deliverability constraints.
    pub const MIP: [Variant; 4] = [Variant::Dao, Variant::DaoC, Variant::Rdao, Variant::RdaoC];

    pub fn is_robust(self) -> bool {
        matches!(self, Variant::Rfmo | Variant::Rdao | Variant::RdaoC)
    }

    pub fn is_mip(self) -> bool {
        !matches!(self, Variant::Fmo | Variant::Rfmo)
    }

    pub fn has_continuity(self) -> bool {
        matches!(self, Variant::DaoC | Variant::RdaoC)
    }

    /// The continuous base model: FMO or RFMO.
    pub fn base(self) -> Variant {
        if self.is_robust() {
            Variant::Rfmo
        } else {
            Variant::Fmo
        }
    }

    /// Same deliverability flags with the robust counterpart toggled off.
    pub fn nominal(self) -> Variant {
        match self {
            Variant::Rfmo => Variant::Fmo,
            Variant::Rdao => Variant::Dao,
            Variant::RdaoC => Variant::DaoC,
            v => v,
        }
    }

    /// Same deliverability flags with the robust counterpart toggled on.
    pub fn robust(self) -> Variant {
        match self {
            Variant::Fmo => Variant::Rfmo,
            Variant::Dao => Variant::Rdao,
            Variant::DaoC => Variant::RdaoC,
            v => v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fmo => "FMO",
            Variant::Rfmo => "RFMO",
            Variant::Dao => "DAO",
            Variant::DaoC => "DAO-C",
            Variant::Rdao => "RDAO",
            Variant::RdaoC => "RDAO-C",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == up)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}' (expected one of FMO, RFMO, DAO, DAO-C, RDAO, RDAO-C)")))
    }
}

/// How apertures are tied to beam angles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Allocation {
    /// Binary `u[a][theta]` chooses the angle of each aperture.
    DecisionBased,
    /// Fixed 0/1 matrix indexed `[aperture][angle]`; every row has exactly one 1.
    Preallocated(Vec<Vec<u8>>),
}

impl Allocation {
    /// Balanced contiguous blocks: the first `|A|/|Theta|` apertures on angle
    /// 1, the next block on angle 2, and so on.
    pub fn equal_blocks(geom: &BeamGeometry) -> Self {
        let matrix = (0..geom.num_apertures())
            .map(|a| (0..geom.num_angles()).map(|t| u8::from(geom.block_angle(a) == t)).collect())
            .collect();
        Allocation::Preallocated(matrix)
    }

    /// The fixed angle of aperture `a`, if preallocated.
    pub fn fixed_angle(&self, a: usize) -> Option<usize> {
        match self {
            Allocation::DecisionBased => None,
            Allocation::Preallocated(m) => m[a].iter().position(|&u| u == 1),
        }
    }

    pub fn is_decision_based(&self) -> bool {
        matches!(self, Allocation::DecisionBased)
    }

    pub fn validate(&self, geom: &BeamGeometry) -> Result<()> {
        let Allocation::Preallocated(m) = self else { return Ok(()) };
        if m.len() != geom.num_apertures() {
            return Err(Error::Config(format!(
                "preallocation matrix has {} rows for {} apertures",
                m.len(),
                geom.num_apertures()
            )));
        }
        for (a, row) in m.iter().enumerate() {
            if row.len() != geom.num_angles() {
                return Err(Error::Config(format!("preallocation row {} has {} entries", a + 1, row.len())));
            }
            if row.iter().any(|&u| u > 1) || row.iter().map(|&u| u as usize).sum::<usize>() != 1 {
                return Err(Error::Config(format!("preallocation row {} must contain exactly one 1", a + 1)));
            }
        }
        Ok(())
    }

    /// Apertures assigned to each angle.
    pub fn counts(&self, geom: &BeamGeometry) -> Option<Vec<usize>> {
        let Allocation::Preallocated(m) = self else { return None };
        let mut counts = vec![0; geom.num_angles()];
        for row in m {
            if let Some(t) = row.iter().position(|&u| u == 1) {
                counts[t] += 1;
            }
        }
        Some(counts)
    }
}

/// Symmetry-breaking rows over aperture fluence sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymmetryMode {
    None,
    /// Total aperture sums nonincreasing in the aperture index.
    GlobalSort,
    /// Per-angle sums nonincreasing among the apertures of each angle
    /// (preallocated models only).
    PerAngleSort,
    /// Angle-1 sums nonincreasing and angle-2 sums nondecreasing (two angles only).
    TwoAngleSort,
}

impl SymmetryMode {
    pub fn name(self) -> &'static str {
        match self {
            SymmetryMode::None => "none",
            SymmetryMode::GlobalSort => "global_sort",
            SymmetryMode::PerAngleSort => "per_angle_sort",
            SymmetryMode::TwoAngleSort => "two_angle_sort",
        }
    }
}

impl fmt::Display for SymmetryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SymmetryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(SymmetryMode::None),
            "global_sort" | "global" => Ok(SymmetryMode::GlobalSort),
            "per_angle_sort" | "per_angle" => Ok(SymmetryMode::PerAngleSort),
            "two_angle_sort" | "two_angle" => Ok(SymmetryMode::TwoAngleSort),
            _ => Err(Error::Config(format!(
                "unknown symmetry mode '{s}' (expected none, global_sort, per_angle_sort, two_angle_sort)"
            ))),
        }
    }
}

pub const DEFAULT_WEIGHT_TARGET: f64 = 0.7;
pub const DEFAULT_WEIGHT_HEALTHY: f64 = 0.3;
pub const DEFAULT_ALPHA: f64 = 0.4;
pub const DEFAULT_APERTURES: usize = 6;
pub const BIG_M_SAFETY: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningConfig {
    pub weight_target: f64,
    pub weight_healthy: f64,
    /// `None` selects the data-driven default, see [`PlanningConfig::resolve_big_m`].
    pub big_m: Option<f64>,
    pub alpha: f64,
    pub variant: Variant,
    pub allocation: Allocation,
    pub symmetry: SymmetryMode,
}

impl PlanningConfig {
    /// Defaults for a geometry: decision-based allocation, two-angle sorting
    /// when there are exactly two angles and global sorting otherwise.
    pub fn default_for(geom: &BeamGeometry, variant: Variant) -> Self {
        let symmetry = if geom.num_angles() == 2 { SymmetryMode::TwoAngleSort } else { SymmetryMode::GlobalSort };
        Self {
            weight_target: DEFAULT_WEIGHT_TARGET,
            weight_healthy: DEFAULT_WEIGHT_HEALTHY,
            big_m: None,
            alpha: DEFAULT_ALPHA,
            variant,
            allocation: Allocation::DecisionBased,
            symmetry,
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self { variant, ..self.clone() }
    }

    pub fn validate(&self, geom: &BeamGeometry) -> Result<()> {
        if !(self.weight_target.is_finite() && self.weight_target >= 0.0)
            || !(self.weight_healthy.is_finite() && self.weight_healthy >= 0.0)
        {
            return Err(Error::Config("objective weights must be finite and >= 0".into()));
        }
        if let Some(m) = self.big_m {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::Config(format!("big_m must be positive and finite, got {m}")));
            }
        }
        self.validate_alpha()?;
        self.allocation.validate(geom)?;
        match self.symmetry {
            SymmetryMode::TwoAngleSort if geom.num_angles() != 2 => Err(Error::Config(format!(
                "two_angle_sort needs exactly 2 angles, geometry has {}",
                geom.num_angles()
            ))),
            SymmetryMode::PerAngleSort if self.allocation.is_decision_based() => Err(Error::Config(
                "per_angle_sort is incompatible with decision-based allocation".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn validate_alpha(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    /// The override if set, else `max L_v * |I| * BIG_M_SAFETY / max D`.
    pub fn resolve_big_m(&self, max_prescription: f64, num_phases: usize, max_dose: f64) -> Result<f64> {
        if let Some(m) = self.big_m {
            return Ok(m);
        }
        if !(max_dose > 0.0) {
            return Err(Error::Config("cannot derive big_m from an all-zero dose tensor; set it explicitly".into()));
        }
        Ok(max_prescription * num_phases as f64 * BIG_M_SAFETY / max_dose)
    }
}
