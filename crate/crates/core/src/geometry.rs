//! Beam grid geometry and the beamlet index transform.
//!
//! Every angle shares one `num_rows x num_cols` beamlet rectangle. Beamlets are
//! numbered angle-major, then row-major within an angle. The public
//! [`BeamGeometry::beamlet_index`] / [`BeamGeometry::beamlet_coords`] pair uses
//! 1-based `(q, k, theta)` and 1-based beamlet ids, as in the dataset and plan
//! file formats. Everything else in the crate works with 0-based indices
//! (`beamlet`, `coords`).

use crate::error::{Axis, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BeamGeometry {
    num_angles: usize,
    num_rows: usize,
    num_cols: usize,
    num_apertures: usize,
}

impl BeamGeometry {
    /// Validates the counts: all at least one. The heuristic additionally
    /// needs the aperture budget to split equally over angles, see
    /// [`BeamGeometry::equal_split`].
    pub fn new(num_angles: usize, num_rows: usize, num_cols: usize, num_apertures: usize) -> Result<Self> {
        if num_angles == 0 || num_rows == 0 || num_cols == 0 || num_apertures == 0 {
            return Err(Error::Config(format!(
                "geometry counts must be >= 1 (angles={num_angles}, rows={num_rows}, cols={num_cols}, apertures={num_apertures})"
            )));
        }
        Ok(Self { num_angles, num_rows, num_cols, num_apertures })
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn num_apertures(&self) -> usize {
        self.num_apertures
    }

    /// Apertures available per angle when the budget is split equally
    /// (rounded down).
    pub fn apertures_per_angle(&self) -> usize {
        self.num_apertures / self.num_angles
    }

    /// Apertures per angle, failing unless the budget divides evenly.
    pub fn equal_split(&self) -> Result<usize> {
        if self.num_apertures % self.num_angles != 0 {
            return Err(Error::Config(format!(
                "aperture budget {} is not divisible by {} angles",
                self.num_apertures, self.num_angles
            )));
        }
        Ok(self.num_apertures / self.num_angles)
    }

    /// Angle of aperture `a` under the balanced contiguous split.
    pub fn block_angle(&self, a: usize) -> usize {
        a * self.num_angles / self.num_apertures
    }

    pub fn beamlets_per_angle(&self) -> usize {
        self.num_rows * self.num_cols
    }

    pub fn num_beamlets(&self) -> usize {
        self.num_angles * self.beamlets_per_angle()
    }

    /// 1-based beamlet id of the 1-based coordinate `(q, k, theta)`.
    pub fn beamlet_index(&self, q: usize, k: usize, theta: usize) -> Result<usize> {
        check(Axis::Row, q, self.num_rows)?;
        check(Axis::Column, k, self.num_cols)?;
        check(Axis::Angle, theta, self.num_angles)?;
        Ok((theta - 1) * self.beamlets_per_angle() + self.num_cols * (q - 1) + k)
    }

    /// Inverse of [`beamlet_index`](Self::beamlet_index): 1-based `(q, k, theta)`.
    pub fn beamlet_coords(&self, b: usize) -> Result<(usize, usize, usize)> {
        check(Axis::Beamlet, b, self.num_beamlets())?;
        let (q, k, t) = self.coords(b - 1);
        Ok((q + 1, k + 1, t + 1))
    }

    /// 0-based beamlet index of 0-based `(row, col, angle)`.
    #[inline]
    pub fn beamlet(&self, row: usize, col: usize, angle: usize) -> usize {
        debug_assert!(row < self.num_rows && col < self.num_cols && angle < self.num_angles);
        angle * self.beamlets_per_angle() + row * self.num_cols + col
    }

    /// 0-based `(row, col, angle)` of a 0-based beamlet index.
    #[inline]
    pub fn coords(&self, b: usize) -> (usize, usize, usize) {
        let per = self.beamlets_per_angle();
        let angle = b / per;
        let rem = b % per;
        (rem / self.num_cols, rem % self.num_cols, angle)
    }

    /// 0-based angle owning a 0-based beamlet.
    #[inline]
    pub fn angle_of(&self, b: usize) -> usize {
        b / self.beamlets_per_angle()
    }

    /// 0-based beamlet range of one angle.
    pub fn angle_beamlets(&self, angle: usize) -> std::ops::Range<usize> {
        let per = self.beamlets_per_angle();
        angle * per..(angle + 1) * per
    }
}

fn check(axis: Axis, value: usize, max: usize) -> Result<()> {
    if value == 0 || value > max {
        Err(Error::Range { axis, value, max })
    } else {
        Ok(())
    }
}
