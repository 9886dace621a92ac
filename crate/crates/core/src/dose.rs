//! Phase-resolved dose influence and the dose primitives built on it.

use crate::error::{Axis, Error, Result};
use crate::uncertainty::UncertaintySet;

/// Dense `D[voxel][beamlet][phase]` in Gy per unit intensity, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseInfluenceTensor {
    num_voxels: usize,
    num_beamlets: usize,
    num_phases: usize,
    values: Vec<f64>,
}

impl DoseInfluenceTensor {
    pub fn new(num_voxels: usize, num_beamlets: usize, num_phases: usize, values: Vec<f64>) -> Result<Self> {
        if num_voxels == 0 || num_beamlets == 0 || num_phases == 0 {
            return Err(Error::Shape(format!(
                "tensor dims must be nonzero, got ({num_voxels}, {num_beamlets}, {num_phases})"
            )));
        }
        let expected = num_voxels
            .checked_mul(num_beamlets)
            .and_then(|n| n.checked_mul(num_phases))
            .ok_or_else(|| Error::Shape("tensor dims overflow".into()))?;
        if values.len() != expected {
            return Err(Error::Shape(format!("{} values for dims {expected}", values.len())));
        }
        if let Some(pos) = values.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Invalid(format!("dose entry {pos} is {} (must be finite and >= 0)", values[pos])));
        }
        Ok(Self { num_voxels, num_beamlets, num_phases, values })
    }

    pub fn zeros(num_voxels: usize, num_beamlets: usize, num_phases: usize) -> Result<Self> {
        Self::new(num_voxels, num_beamlets, num_phases, vec![0.0; num_voxels * num_beamlets * num_phases])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.num_voxels, self.num_beamlets, self.num_phases)
    }

    pub fn num_voxels(&self) -> usize {
        self.num_voxels
    }

    pub fn num_beamlets(&self) -> usize {
        self.num_beamlets
    }

    pub fn num_phases(&self) -> usize {
        self.num_phases
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, v: usize, b: usize, i: usize) -> f64 {
        self.values[(v * self.num_beamlets + b) * self.num_phases + i]
    }

    /// Sets one entry; rejects negative or non-finite values.
    pub fn set(&mut self, v: usize, b: usize, i: usize, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::Invalid(format!("dose entry must be finite and >= 0, got {value}")));
        }
        let idx = (v * self.num_beamlets + b) * self.num_phases + i;
        self.values[idx] = value;
        Ok(())
    }

    /// All `num_beamlets * num_phases` entries of one voxel, beamlet-major.
    #[inline]
    pub fn voxel_block(&self, v: usize) -> &[f64] {
        let len = self.num_beamlets * self.num_phases;
        &self.values[v * len..(v + 1) * len]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Sum of every entry of one voxel (used by the healthy pruning filter).
    pub fn voxel_sum(&self, v: usize) -> f64 {
        self.voxel_block(v).iter().sum()
    }

    fn check_voxel(&self, v: usize) -> Result<()> {
        if v >= self.num_voxels {
            return Err(Error::Range { axis: Axis::Voxel, value: v + 1, max: self.num_voxels });
        }
        Ok(())
    }

    fn check_fluence(&self, fluence: &[f64]) -> Result<()> {
        if fluence.len() != self.num_beamlets {
            return Err(Error::Shape(format!(
                "fluence has {} entries, tensor has {} beamlets",
                fluence.len(),
                self.num_beamlets
            )));
        }
        Ok(())
    }

    /// Per-phase dose `d_i = sum_b D[v,b,i] * fluence[b]` for one voxel.
    pub fn phase_doses(&self, v: usize, fluence: &[f64]) -> Result<Vec<f64>> {
        self.check_voxel(v)?;
        self.check_fluence(fluence)?;
        Ok(self.phase_doses_unchecked(v, fluence))
    }

    pub(crate) fn phase_doses_unchecked(&self, v: usize, fluence: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_phases];
        for (b, row) in self.voxel_block(v).chunks_exact(self.num_phases).enumerate() {
            let w = fluence[b];
            if w != 0.0 {
                for (acc, d) in out.iter_mut().zip(row) {
                    *acc += d * w;
                }
            }
        }
        out
    }

    /// Expected dose to voxel `v` under phase proportions `p`.
    pub fn dose_to_voxel(&self, v: usize, fluence: &[f64], p: &[f64]) -> Result<f64> {
        if p.len() != self.num_phases {
            return Err(Error::Shape(format!("{} phase weights for {} phases", p.len(), self.num_phases)));
        }
        let d = self.phase_doses(v, fluence)?;
        Ok(d.iter().zip(p).map(|(d, p)| d * p).sum())
    }

    /// Smallest expected dose to voxel `v` over every proportion vector in `set`.
    pub fn worst_case_dose(&self, v: usize, fluence: &[f64], set: &UncertaintySet) -> Result<f64> {
        if set.num_phases() != self.num_phases {
            return Err(Error::Shape(format!(
                "uncertainty set has {} phases, tensor has {}",
                set.num_phases(),
                self.num_phases
            )));
        }
        let d = self.phase_doses(v, fluence)?;
        set.worst_case(&d)
    }
}
