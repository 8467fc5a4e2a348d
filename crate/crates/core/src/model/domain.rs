use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Unit torus `[0, 1)^d`; distances wrap per coordinate.
    Torus,
    /// Axis-aligned box with per-coordinate bounds.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    dim: usize,
    geometry: Geometry,
}

impl DomainSpec {
    pub fn torus(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("domain dimension must be positive".into()));
        }
        Ok(Self { dim, geometry: Geometry::Torus })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidArgument("domain dimension must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument("box bounds must satisfy lower < upper".into()));
        }
        Ok(Self { dim: lower.len(), geometry: Geometry::Box { lower, upper } })
    }

    /// Symmetric cube `[-radius, radius]^dim`.
    pub fn cube(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("box radius must be positive".into()));
        }
        Self::boxed(vec![-radius; dim], vec![radius; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.geometry, Geometry::Torus)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.geometry {
            Geometry::Torus => true,
            Geometry::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
            }
        }
    }

    pub fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { position: x.iter().copied().collect() })
        }
    }

    /// Maps a point back into the domain: wraps on the torus, clamps in a box.
    pub fn project(&self, x: &mut DVector<f64>) {
        match &self.geometry {
            Geometry::Torus => x.iter_mut().for_each(|v| *v = v.rem_euclid(1.0) % 1.0),
            Geometry::Box { lower, upper } => {
                for (v, (l, u)) in x.iter_mut().zip(lower.iter().zip(upper)) {
                    *v = v.clamp(*l, *u);
                }
            }
        }
    }

    /// Euclidean distance, with per-coordinate wrap-around on the torus.
    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match &self.geometry {
            Geometry::Torus => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| {
                    let t = (x - y).abs().rem_euclid(1.0);
                    let w = t.min(1.0 - t);
                    w * w
                })
                .sum::<f64>()
                .sqrt(),
            Geometry::Box { .. } => (a - b).norm(),
        }
    }

    /// Signed displacement `b - a` taking the shortest path on the torus.
    pub fn displacement(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        match &self.geometry {
            Geometry::Torus => {
                DVector::from_iterator(a.len(), a.iter().zip(b.iter()).map(|(x, y)| {
                    let t = y - x;
                    t - t.round()
                }))
            }
            Geometry::Box { .. } => b - a,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match &self.geometry {
            Geometry::Torus => DVector::from_fn(self.dim, |_, _| rng.random::<f64>()),
            Geometry::Box { lower, upper } => {
                DVector::from_fn(self.dim, |i, _| lower[i] + (upper[i] - lower[i]) * rng.random::<f64>())
            }
        }
    }

    /// Uniform tensor grid with `per_axis` nodes per coordinate. On the torus
    /// the right end point is excluded; in a box both ends are included.
    pub fn grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        let per_axis = per_axis.max(1);
        let axes: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| match &self.geometry {
                Geometry::Torus => (0..per_axis).map(|j| j as f64 / per_axis as f64).collect(),
                Geometry::Box { lower, upper } => {
                    if per_axis == 1 {
                        vec![0.5 * (lower[i] + upper[i])]
                    } else {
                        (0..per_axis)
                            .map(|j| lower[i] + (upper[i] - lower[i]) * j as f64 / (per_axis - 1) as f64)
                            .collect()
                    }
                }
            })
            .collect();
        let total = per_axis.pow(self.dim as u32);
        (0..total)
            .map(|mut idx| {
                DVector::from_fn(self.dim, |i, _| {
                    let j = idx % per_axis;
                    idx /= per_axis;
                    axes[i][j]
                })
            })
            .collect()
    }
}
