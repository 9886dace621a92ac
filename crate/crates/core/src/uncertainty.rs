//! Polyhedral uncertainty over breathing-phase proportions.
//!
//! The set is `{ p~ : lo_i <= p~_i <= hi_i, sum p~_i = 1 }` with
//! `lo_i = max(0, p_i - lower_dev_i)` and `hi_i = min(1, p_i + upper_dev_i)`.

use crate::error::{Error, Result};

/// Nominal five-phase breathing proportions, inhale to exhale.
pub const NOMINAL_BREATHING: [f64; 5] = [0.125, 0.125, 0.125, 0.125, 0.5];

/// Exhale-heavy realized breathing pattern used for robustness evaluation.
pub const REALIZED_BREATHING: [f64; 5] = [0.025, 0.025, 0.125, 0.225, 0.6];

/// Default symmetric deviation around the nominal proportions.
pub const DEFAULT_DEVIATION: f64 = 0.1;

const SUM_TOL: f64 = 1e-12;

/// Phase counts up to this use exact vertex enumeration in
/// [`UncertaintySet::worst_case`].
pub const VERTEX_ENUMERATION_MAX_PHASES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    nominal: Vec<f64>,
    lower_dev: Vec<f64>,
    upper_dev: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl UncertaintySet {
    pub fn new(nominal: Vec<f64>, lower_dev: Vec<f64>, upper_dev: Vec<f64>) -> Result<Self> {
        let n = nominal.len();
        if n == 0 {
            return Err(Error::Invalid("uncertainty set needs at least one phase".into()));
        }
        if lower_dev.len() != n || upper_dev.len() != n {
            return Err(Error::Shape(format!(
                "deviation vectors ({}, {}) do not match {n} phases",
                lower_dev.len(),
                upper_dev.len()
            )));
        }
        if nominal.iter().any(|p| !(p.is_finite() && (0.0..=1.0).contains(p))) {
            return Err(Error::Invalid(format!("nominal proportions must lie in [0, 1]: {nominal:?}")));
        }
        let sum: f64 = nominal.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Invalid(format!("nominal proportions sum to {sum}, not 1")));
        }
        if lower_dev.iter().chain(&upper_dev).any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Invalid("deviations must be finite and >= 0".into()));
        }
        let lo: Vec<f64> = nominal.iter().zip(&lower_dev).map(|(p, d)| (p - d).max(0.0)).collect();
        let hi: Vec<f64> = nominal.iter().zip(&upper_dev).map(|(p, d)| (p + d).min(1.0)).collect();
        let (slo, shi): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
        if slo > 1.0 + SUM_TOL || shi < 1.0 - SUM_TOL {
            return Err(Error::InfeasibleSet(format!("bounds sum to [{slo}, {shi}], which excludes 1")));
        }
        Ok(Self { nominal, lower_dev, upper_dev, lo, hi })
    }

    /// Same deviation on both sides of every phase.
    pub fn symmetric(nominal: Vec<f64>, deviation: f64) -> Result<Self> {
        let n = nominal.len();
        Self::new(nominal, vec![deviation; n], vec![deviation; n])
    }

    /// The one-point set `{p}`.
    pub fn singleton(nominal: Vec<f64>) -> Result<Self> {
        Self::symmetric(nominal, 0.0)
    }

    /// Nominal breathing proportions with the given symmetric deviation.
    pub fn breathing(deviation: f64) -> Self {
        Self::symmetric(NOMINAL_BREATHING.to_vec(), deviation).expect("breathing proportions are valid")
    }

    pub fn num_phases(&self) -> usize {
        self.nominal.len()
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn lower_dev(&self) -> &[f64] {
        &self.lower_dev
    }

    pub fn upper_dev(&self) -> &[f64] {
        &self.upper_dev
    }

    /// Effective lower bounds after clamping to `[0, 1]`.
    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    /// Effective upper bounds after clamping to `[0, 1]`.
    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    /// True when the effective bounds pin every phase to its nominal value.
    pub fn is_singleton(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| h - l <= 0.0)
    }

    /// The nominal point as its own set.
    pub fn nominal_only(&self) -> Self {
        Self::singleton(self.nominal.clone()).expect("validated nominal vector")
    }

    /// Mass left after every phase sits at its lower bound: `1 - sum lo_i`.
    pub fn free_mass(&self) -> f64 {
        1.0 - self.lo.iter().sum::<f64>()
    }

    /// True when `p` lies in the set up to `tol`.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.num_phases()
            && (p.iter().sum::<f64>() - 1.0).abs() <= tol
            && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }

    /// Every vertex of the polytope. A vertex has all but at most one
    /// coordinate at a bound; the remaining one absorbs the unit-sum slack.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.num_phases();
        let mut out: Vec<Vec<f64>> = Vec::new();
        let tol = 1e-12;
        for free in 0..n {
            let others: Vec<usize> = (0..n).filter(|&i| i != free).collect();
            for mask in 0u64..(1u64 << others.len()) {
                let mut p = vec![0.0; n];
                let mut sum = 0.0;
                for (bit, &i) in others.iter().enumerate() {
                    p[i] = if mask >> bit & 1 == 1 { self.hi[i] } else { self.lo[i] };
                    sum += p[i];
                }
                let rest = 1.0 - sum;
                if rest < self.lo[free] - tol || rest > self.hi[free] + tol {
                    continue;
                }
                p[free] = rest.clamp(self.lo[free], self.hi[free]);
                if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-12)) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// `min_{p~ in P} sum_i p~_i * phase_dose_i`.
    ///
    /// Uses vertex enumeration up to [`VERTEX_ENUMERATION_MAX_PHASES`] phases
    /// and an exact greedy fill (cheapest phases first) beyond that.
    pub fn worst_case(&self, phase_dose: &[f64]) -> Result<f64> {
        if phase_dose.len() != self.num_phases() {
            return Err(Error::Shape(format!(
                "{} phase doses for {} phases",
                phase_dose.len(),
                self.num_phases()
            )));
        }
        if self.num_phases() <= VERTEX_ENUMERATION_MAX_PHASES {
            let best = self
                .vertices()
                .iter()
                .map(|p| p.iter().zip(phase_dose).map(|(p, d)| p * d).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                return Ok(best);
            }
            return Err(Error::InfeasibleSet("no vertices".into()));
        }
        Ok(self.greedy_worst_case(phase_dose))
    }

    /// Worst-case proportions: the argmin of [`worst_case`](Self::worst_case)
    /// computed by the greedy fill.
    pub fn worst_case_vector(&self, phase_dose: &[f64]) -> Vec<f64> {
        let mut p = self.lo.clone();
        let mut rest = self.free_mass();
        let mut order: Vec<usize> = (0..self.num_phases()).collect();
        order.sort_by(|&a, &b| phase_dose[a].total_cmp(&phase_dose[b]).then(a.cmp(&b)));
        for i in order {
            if rest <= 0.0 {
                break;
            }
            let add = rest.min(self.hi[i] - self.lo[i]);
            p[i] += add;
            rest -= add;
        }
        p
    }

    fn greedy_worst_case(&self, phase_dose: &[f64]) -> f64 {
        self.worst_case_vector(phase_dose).iter().zip(phase_dose).map(|(p, d)| p * d).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_worst_case_is_nominal() {
        let u = UncertaintySet::singleton(vec![0.3, 0.7]).unwrap();
        assert!(u.is_singleton());
        let wc = u.worst_case(&[10.0, 20.0]).unwrap();
        assert!((wc - 17.0).abs() < 1e-12);
    }

    #[test]
    fn two_phase_hand_example() {
        let u = UncertaintySet::symmetric(vec![0.5, 0.5], 0.1).unwrap();
        let wc = u.worst_case(&[10.0, 20.0]).unwrap();
        assert!((wc - 14.0).abs() < 1e-12);
    }

    #[test]
    fn clamps_instead_of_rejecting() {
        let u = UncertaintySet::symmetric(NOMINAL_BREATHING.to_vec(), 0.2).unwrap();
        assert_eq!(u.lower()[0], 0.0);
        assert_eq!(u.upper()[4], 0.7);
        assert!(u.contains(&REALIZED_BREATHING, 1e-12));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(UncertaintySet::singleton(vec![0.5, 0.4]).is_err());
        assert!(UncertaintySet::singleton(vec![1.5, -0.5]).is_err());
        assert!(UncertaintySet::symmetric(vec![0.5, 0.5], -0.1).is_err());
        assert!(matches!(
            UncertaintySet::new(vec![0.5, 0.5], vec![0.5, 0.5], vec![0.0, 0.0]),
            Ok(_)
        ));
    }

    #[test]
    fn greedy_matches_enumeration() {
        let u = UncertaintySet::breathing(0.1);
        for d in [[1.0, 2.0, 3.0, 4.0, 5.0], [5.0, 1.0, 4.0, 2.0, 3.0], [2.0; 5]] {
            let a = u.worst_case(&d).unwrap();
            let b = u.greedy_worst_case(&d);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn realized_pattern_is_a_member_of_the_default_set() {
        let u = UncertaintySet::breathing(DEFAULT_DEVIATION);
        assert!(u.contains(&REALIZED_BREATHING, 1e-12));
        assert!(!UncertaintySet::breathing(0.05).contains(&REALIZED_BREATHING, 1e-12));
    }
}
