use nalgebra::DVector;

use super::domain::DomainSpec;
use crate::error::{Error, Result};

/// Default resolution below which two spike positions are considered the same point.
pub const POSITION_MERGE_TOLERANCE: f64 = 1e-7;

/// A finite sum of weighted Dirac masses `sum_j beta_j delta_{x_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    positions: Vec<DVector<f64>>,
    amplitudes: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(positions: Vec<DVector<f64>>, amplitudes: Vec<f64>) -> Result<Self> {
        if positions.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch { expected: positions.len(), got: amplitudes.len() });
        }
        let dim = match positions.first() {
            Some(p) => p.len(),
            None => {
                return Err(Error::InvalidArgument(
                    "use DiscreteMeasure::zero for an empty measure".into(),
                ))
            }
        };
        if dim == 0 {
            return Err(Error::InvalidArgument("positions must have positive dimension".into()));
        }
        if let Some(p) = positions.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        Ok(Self { dim, positions, amplitudes })
    }

    /// Convenience constructor for one-dimensional positions.
    pub fn from_1d(positions: &[f64], amplitudes: &[f64]) -> Result<Self> {
        if positions.is_empty() && amplitudes.is_empty() {
            return Ok(Self::zero(1));
        }
        Self::new(
            positions.iter().map(|&x| DVector::from_element(1, x)).collect(),
            amplitudes.to_vec(),
        )
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, positions: Vec::new(), amplitudes: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn positions(&self) -> &[DVector<f64>] {
        &self.positions
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.positions
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [f64] {
        &mut self.amplitudes
    }

    pub fn push(&mut self, x: DVector<f64>, beta: f64) {
        debug_assert_eq!(x.len(), self.dim);
        self.positions.push(x);
        self.amplitudes.push(beta);
    }

    /// Total-variation norm, i.e. the l1 norm of the amplitudes.
    pub fn tv_norm(&self) -> f64 {
        self.amplitudes.iter().map(|b| b.abs()).sum()
    }

    pub fn signs(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|b| b.signum()).collect()
    }

    /// Disjoint union: concatenates the spikes of both measures.
    pub fn union(&self, other: &DiscreteMeasure) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut out = self.clone();
        out.positions.extend(other.positions.iter().cloned());
        out.amplitudes.extend_from_slice(&other.amplitudes);
        Ok(out)
    }

    /// Drops spikes with `|beta| <= tol`.
    pub fn prune_small(&mut self, tol: f64) {
        let keep: Vec<bool> = self.amplitudes.iter().map(|b| b.abs() > tol).collect();
        let mut it = keep.iter();
        self.positions.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.amplitudes.retain(|_| *it.next().unwrap());
    }

    /// Merges spikes closer than `tol` (in the domain metric), summing their amplitudes.
    pub fn merge_close(&mut self, domain: &DomainSpec, tol: f64) {
        let mut i = 0;
        while i < self.positions.len() {
            let mut j = i + 1;
            while j < self.positions.len() {
                if domain.distance(&self.positions[i], &self.positions[j]) <= tol {
                    self.amplitudes[i] += self.amplitudes[j];
                    self.amplitudes.remove(j);
                    self.positions.remove(j);
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
    }

    /// Smallest pairwise distance between spike positions, `inf` for fewer than two spikes.
    pub fn min_separation(&self, domain: &DomainSpec) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(domain.distance(&self.positions[i], &self.positions[j]));
            }
        }
        best
    }

    /// Index of the spike nearest to `x`, if any.
    pub fn nearest(&self, domain: &DomainSpec, x: &DVector<f64>) -> Option<(usize, f64)> {
        self.positions
            .iter()
            .enumerate()
            .map(|(i, p)| (i, domain.distance(p, x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Sorts spikes by lexicographic position order.
    pub fn sort_by_position(&mut self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.positions[a]
                .iter()
                .zip(self.positions[b].iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.positions = idx.iter().map(|&i| self.positions[i].clone()).collect();
        self.amplitudes = idx.iter().map(|&i| self.amplitudes[i]).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_on_torus_uses_wrapped_distance() {
        let t = DomainSpec::torus(1).unwrap();
        let mut m = DiscreteMeasure::from_1d(&[1e-9, 1.0 - 1e-9, 0.5], &[1.0, 2.0, -1.0]).unwrap();
        m.merge_close(&t, POSITION_MERGE_TOLERANCE);
        assert_eq!(m.len(), 2);
        assert_eq!(m.amplitudes(), &[3.0, -1.0]);
    }

    #[test]
    fn prune_and_tv() {
        let mut m = DiscreteMeasure::from_1d(&[0.1, 0.2, 0.3], &[1.0, 0.0, -2.0]).unwrap();
        m.prune_small(1e-12);
        assert_eq!(m.len(), 2);
        assert_eq!(m.tv_norm(), 3.0);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(DiscreteMeasure::from_1d(&[0.1], &[1.0, 2.0]).is_err());
        assert!(DiscreteMeasure::from_1d(&[], &[]).unwrap().is_empty());
    }
}
