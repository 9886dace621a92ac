//! Target and healthy voxel sets with per-voxel prescriptions.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// A named healthy structure (organ at risk). Voxel ids are 0-based rows of
/// the dose tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthyStructure {
    pub name: String,
    pub voxels: Vec<usize>,
}

/// Partition of the tensor's voxels into one target and any number of healthy
/// structures. Voxels listed in no structure are ignored by every model.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureSet {
    target: Vec<usize>,
    prescription: Vec<f64>,
    healthy: Vec<HealthyStructure>,
}

impl StructureSet {
    /// Builds a structure set with one prescription value per target voxel.
    pub fn new(target: Vec<usize>, prescription: Vec<f64>, healthy: Vec<HealthyStructure>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Invalid("structure set has no target voxels".into()));
        }
        if prescription.len() != target.len() {
            return Err(Error::Shape(format!(
                "{} prescriptions for {} target voxels",
                prescription.len(),
                target.len()
            )));
        }
        if let Some(bad) = prescription.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Invalid(format!("prescription must be positive and finite, got {bad}")));
        }
        let mut seen = HashSet::new();
        for v in target.iter().chain(healthy.iter().flat_map(|h| h.voxels.iter())) {
            if !seen.insert(*v) {
                return Err(Error::Invalid(format!("voxel {v} belongs to more than one structure")));
            }
        }
        Ok(Self { target, prescription, healthy })
    }

    /// Uniform prescription over every target voxel.
    pub fn uniform(target: Vec<usize>, prescription: f64, healthy: Vec<HealthyStructure>) -> Result<Self> {
        let n = target.len();
        Self::new(target, vec![prescription; n], healthy)
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }

    /// Prescription `L_v`, aligned with [`target`](Self::target).
    pub fn prescription(&self) -> &[f64] {
        &self.prescription
    }

    pub fn healthy(&self) -> &[HealthyStructure] {
        &self.healthy
    }

    pub fn num_target(&self) -> usize {
        self.target.len()
    }

    pub fn num_healthy(&self) -> usize {
        self.healthy.iter().map(|h| h.voxels.len()).sum()
    }

    /// Smallest prescription over the target, used as the reference level
    /// wherever a single number is needed.
    pub fn min_prescription(&self) -> f64 {
        self.prescription.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest voxel id referenced, if any.
    pub fn max_voxel(&self) -> Option<usize> {
        self.target.iter().chain(self.healthy.iter().flat_map(|h| h.voxels.iter())).copied().max()
    }

    /// Keeps every `n`-th target voxel (the first, the `n+1`-th, ...).
    pub fn sample_target(&self, every: usize) -> Result<Self> {
        if every == 0 {
            return Err(Error::Invalid("target sampling stride must be >= 1".into()));
        }
        let (target, prescription) = self
            .target
            .iter()
            .zip(&self.prescription)
            .step_by(every)
            .map(|(v, l)| (*v, *l))
            .unzip();
        Self::new(target, prescription, self.healthy.clone())
    }

    /// Drops healthy voxels whose summed influence (over beamlets and phases)
    /// is strictly below `cutoff`.
    pub fn prune_healthy(&self, cutoff: f64, dose_sum: impl Fn(usize) -> f64) -> Result<Self> {
        let healthy = self
            .healthy
            .iter()
            .map(|h| HealthyStructure {
                name: h.name.clone(),
                voxels: h.voxels.iter().copied().filter(|v| dose_sum(*v) >= cutoff).collect(),
            })
            .collect();
        Self::new(self.target.clone(), self.prescription.clone(), healthy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heart(voxels: Vec<usize>) -> HealthyStructure {
        HealthyStructure { name: "heart".into(), voxels }
    }

    #[test]
    fn rejects_overlap_and_bad_prescription() {
        assert!(StructureSet::uniform(vec![0, 1], 42.4, vec![heart(vec![1, 2])]).is_err());
        assert!(StructureSet::uniform(vec![0, 1], 0.0, vec![]).is_err());
        assert!(StructureSet::uniform(vec![], 42.4, vec![]).is_err());
        assert!(StructureSet::new(vec![0], vec![1.0, 2.0], vec![]).is_err());
    }

    #[test]
    fn sampling_keeps_every_nth() {
        let s = StructureSet::uniform((0..10).collect(), 42.4, vec![heart(vec![10, 11])]).unwrap();
        assert_eq!(s.sample_target(1).unwrap(), s);
        assert_eq!(s.sample_target(3).unwrap().target(), &[0, 3, 6, 9]);
    }

    #[test]
    fn pruning_with_zero_cutoff_keeps_everything() {
        let s = StructureSet::uniform(vec![0], 42.4, vec![heart(vec![1, 2, 3])]).unwrap();
        assert_eq!(s.prune_healthy(0.0, |_| 0.0).unwrap(), s);
        let pruned = s.prune_healthy(0.5, |v| if v == 2 { 0.1 } else { 1.0 }).unwrap();
        assert_eq!(pruned.healthy()[0].voxels, vec![1, 3]);
    }
}
