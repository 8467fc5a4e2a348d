use nalgebra::DVector;

use crate::error::Result;
use crate::linalg::{singular_values, smallest_right_singular, RANK_TOLERANCE};
use crate::model::{DiscreteMeasure, ForwardModel};

/// Removes spikes along kernel directions of `Phi_A` until it is injective.
///
/// Each step moves `beta` along a kernel vector `b` up to the first amplitude that
/// reaches zero, never flipping a sign; `Phi m` is unchanged and, for a Blasso
/// solution (where `<sign(beta), b> = 0`), so is the TV norm.
pub fn prune_to_injective(model: &ForwardModel, measure: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    let mut m = measure.clone();
    m.prune_small(0.0);
    loop {
        let k = m.len();
        if k == 0 {
            return Ok(m);
        }
        let phi = model.design(m.positions())?;
        let smax = singular_values(&phi).first().copied().unwrap_or(0.0);
        let (smin, b) = smallest_right_singular(&phi);
        let deficient = k > model.n() || smin <= RANK_TOLERANCE * smax;
        if !deficient {
            return Ok(m);
        }
        let beta = DVector::from_column_slice(m.amplitudes());
        let signs = DVector::from_iterator(k, beta.iter().map(|v| v.signum()));
        let slope = signs.dot(&b);
        // smallest |t| in each direction at which some amplitude reaches zero
        let mut t_pos = f64::INFINITY;
        let mut t_neg = f64::NEG_INFINITY;
        let mut i_pos = None;
        let mut i_neg = None;
        for j in 0..k {
            if b[j] == 0.0 {
                continue;
            }
            let t = -beta[j] / b[j];
            if t > 0.0 && t < t_pos {
                t_pos = t;
                i_pos = Some(j);
            } else if t < 0.0 && t > t_neg {
                t_neg = t;
                i_neg = Some(j);
            }
        }
        let tie = 1e-12 * signs.lp_norm(1);
        let pick_pos = match (i_pos, i_neg) {
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(_), Some(_)) => {
                if slope.abs() > tie {
                    // move in the direction that does not increase the l1 norm
                    slope < 0.0
                } else {
                    t_pos <= -t_neg
                }
            }
            (None, None) => unreachable!("kernel vector is nonzero"),
        };
        let (t, hit) = if pick_pos { (t_pos, i_pos.unwrap()) } else { (t_neg, i_neg.unwrap()) };
        {
            let amps = m.amplitudes_mut();
            for j in 0..k {
                let v = beta[j] + t * b[j];
                amps[j] = if v.signum() == signs[j] { v } else { 0.0 };
            }
            amps[hit] = 0.0;
        }
        m.prune_small(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fourier_model, build_relu_model};
    use nalgebra::DMatrix;

    #[test]
    fn injective_support_unchanged() {
        let model = build_fourier_model(5);
        let m = DiscreteMeasure::from_1d(&[0.1, 0.5], &[1.0, -1.0]).unwrap();
        assert_eq!(prune_to_injective(&model, &m).unwrap(), m);
    }

    #[test]
    fn duplicate_relu_columns_merge() {
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.5, 1.0, 0.3, 0.9]);
        let model = build_relu_model(w, true, None).unwrap();
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let m = DiscreteMeasure::new(vec![x.clone(), x.clone() * 0.5], vec![1.0, 2.0]).unwrap();
        let out = prune_to_injective(&model, &m).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.amplitudes()[0] - 3.0).abs() < 1e-12);
        assert!((model.apply(&out).unwrap() - model.apply(&m).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn more_spikes_than_measurements() {
        let model = build_fourier_model(1);
        let m = DiscreteMeasure::from_1d(&[0.1, 0.3, 0.5, 0.7, 0.9], &[1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let out = prune_to_injective(&model, &m).unwrap();
        assert!(out.len() <= 3);
        assert!((model.apply(&out).unwrap() - model.apply(&m).unwrap()).norm() < 1e-10);
    }
}
