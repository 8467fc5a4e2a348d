use crate::error::{Error, Result};
use crate::model::POSITION_MERGE_TOLERANCE;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescentOptions {
    pub max_steps: usize,
    /// Stop when the gradient norm of the objective falls below this value
    /// (scaled by `1 + |y|^2`).
    pub gradient_tolerance: f64,
    /// Largest position displacement (domain units) allowed in one step.
    pub max_position_step: f64,
}

impl Default for LocalDescentOptions {
    fn default() -> Self {
        Self { max_steps: 200, gradient_tolerance: 1e-13, max_position_step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_outer_iterations: usize,
    /// Nodes per axis of the certificate scan; `None` picks 4096 / 64 / 32 for d = 1 / 2 / 3.
    /// Dimensions above 3 always use multi-start ascent.
    pub certificate_grid_size: Option<usize>,
    pub multistart_points: usize,
    pub newton_steps: usize,
    pub local_descent: LocalDescentOptions,
    /// Relative duality-gap target: the solve stops once `gap <= tol * max(|y|^2, 1e-300)`.
    pub duality_gap_tolerance: f64,
    pub amplitude_prune_tolerance: f64,
    pub merge_tolerance: f64,
    /// A certificate peak this close to an existing spike moves that spike
    /// instead of creating a new one, unless the previous iteration stalled.
    pub insertion_exclusion: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 100,
            certificate_grid_size: None,
            multistart_points: 64,
            newton_steps: 20,
            local_descent: LocalDescentOptions::default(),
            duality_gap_tolerance: 1e-8,
            amplitude_prune_tolerance: 1e-10,
            merge_tolerance: POSITION_MERGE_TOLERANCE,
            insertion_exclusion: 1e-4,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duality_gap_tolerance", self.duality_gap_tolerance),
            ("amplitude_prune_tolerance", self.amplitude_prune_tolerance),
            ("merge_tolerance", self.merge_tolerance),
            ("insertion_exclusion", self.insertion_exclusion),
            ("local_descent.gradient_tolerance", self.local_descent.gradient_tolerance),
            ("local_descent.max_position_step", self.local_descent.max_position_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(g) = self.certificate_grid_size {
            if g < 2 {
                return Err(Error::InvalidArgument("certificate_grid_size must be at least 2".into()));
            }
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidArgument("max_outer_iterations must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn grid_size_for(&self, dim: usize) -> Option<usize> {
        match (self.certificate_grid_size, dim) {
            (_, d) if d > 3 => None,
            (Some(g), _) => Some(g),
            (None, 1) => Some(4096),
            (None, 2) => Some(64),
            (None, _) => Some(32),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SolverOptions::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut o = SolverOptions::default();
        o.duality_gap_tolerance = 0.0;
        assert!(o.validate().is_err());
        let mut o = SolverOptions::default();
        o.certificate_grid_size = Some(1);
        assert!(o.validate().is_err());
    }
}
