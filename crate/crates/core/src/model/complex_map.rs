//! Unitary change of basis between complex exponential coefficients
//! `(int e^{-2 i pi l x} dm)_{l=-fc..fc}` and the real sine/cosine features.
//!
//! Complex vectors are indexed by `l + fc`. With the real layout
//! `(const, sin_1..sin_fc, cos_1..cos_fc)` the map reads
//! `const = c_0`, `cos_l = (c_l + c_{-l}) / sqrt2`, `sin_l = i (c_l - c_{-l}) / sqrt2`.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

use super::DiscreteMeasure;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    ComplexToReal,
    RealToComplex,
}

pub fn complex_real_map(cutoff: usize, direction: MapDirection, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = 2 * cutoff + 1;
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    let i = Complex64::i();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    match direction {
        MapDirection::ComplexToReal => {
            out[0] = v[cutoff];
            for l in 1..=cutoff {
                let (pos, neg) = (v[cutoff + l], v[cutoff - l]);
                out[l] = i * (pos - neg) / SQRT_2;
                out[cutoff + l] = (pos + neg) / SQRT_2;
            }
        }
        MapDirection::RealToComplex => {
            out[cutoff] = v[0];
            for l in 1..=cutoff {
                let (s, c) = (v[l], v[cutoff + l]);
                out[cutoff + l] = (c - i * s) / SQRT_2;
                out[cutoff - l] = (c + i * s) / SQRT_2;
            }
        }
    }
    Ok(out)
}

/// `Psi m`, the complex Fourier coefficients of a 1-D measure on the torus.
pub fn complex_measurements(cutoff: usize, measure: &DiscreteMeasure) -> Result<Vec<Complex64>> {
    if !measure.is_empty() && measure.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: measure.dim() });
    }
    let c = cutoff as i64;
    Ok((-c..=c)
        .map(|l| {
            measure
                .positions()
                .iter()
                .zip(measure.amplitudes())
                .map(|(x, b)| Complex64::from_polar(*b, -2.0 * PI * l as f64 * x[0]))
                .sum()
        })
        .collect())
}
