//! Extended support `{x : |eta(x)| = 1}` of a certificate, and the flatness order
//! of `eta` at each contact point.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{Certificate, ForwardModel};
use crate::solver::{certificate_extremum, SolverOptions, Target};

pub const DEFAULT_CONTACT_TOLERANCE: f64 = 1e-6;
/// Relative cutoff below which an even derivative counts as vanishing.
pub const FLATNESS_THRESHOLD: f64 = 1e-6;
const SCAN_POINTS: usize = 8192;
/// Longest run of consecutive scan nodes allowed above `1 - tol` around one contact point.
const MAX_CONTACT_RUN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportClass {
    Empty,
    FullDomain,
    Discrete,
}

impl SupportClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SupportClass::Empty => "Empty",
            SupportClass::FullDomain => "FullDomain",
            SupportClass::Discrete => "Discrete",
        }
    }
}

impl std::fmt::Display for SupportClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SupportClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Empty" => Ok(SupportClass::Empty),
            "FullDomain" => Ok(SupportClass::FullDomain),
            "Discrete" => Ok(SupportClass::Discrete),
            other => Err(Error::InvalidArgument(format!("unknown support class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedSupport {
    pub class: SupportClass,
    pub points: Vec<DVector<f64>>,
    /// `eta` at each contact point (`+-1` up to the tolerance).
    pub values: Vec<f64>,
    /// Per point, the smallest `l` with `eta^(2l)(x) != 0` (Fourier models only).
    pub flatness_orders: Vec<u32>,
}

pub fn classify_extended_support(cert: &Certificate, model: &ForwardModel, tol: f64) -> Result<ExtendedSupport> {
    match model.as_fourier() {
        Some(_) => classify_1d(cert, model, tol),
        None => classify_general(cert, model, tol),
    }
}

fn classify_1d(cert: &Certificate, model: &ForwardModel, tol: f64) -> Result<ExtendedSupport> {
    let fourier = model.as_fourier().expect("checked by caller");
    let p = cert.dual();
    let m = SCAN_POINTS;
    let values: Vec<f64> = (0..m)
        .map(|i| fourier.certificate_derivative(i as f64 / m as f64, p, 0))
        .collect();
    let level = 1.0 - tol;
    if values.iter().all(|v| v.abs() >= level) {
        return Ok(ExtendedSupport {
            class: SupportClass::FullDomain,
            points: Vec::new(),
            values: Vec::new(),
            flatness_orders: Vec::new(),
        });
    }
    // runs of consecutive nodes above the level (cyclic)
    let start = values.iter().position(|v| v.abs() < level).expect("not full domain");
    let mut run = 0usize;
    for s in 0..m {
        if values[(start + s) % m].abs() >= level {
            run += 1;
            if run > MAX_CONTACT_RUN {
                return Err(Error::DegenerateCertificate(
                    "certificate saturates on an interval without covering the domain".into(),
                ));
            }
        } else {
            run = 0;
        }
    }
    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut vals = Vec::new();
    for i in 0..m {
        let (l, c, r) = (values[(i + m - 1) % m].abs(), values[i].abs(), values[(i + 1) % m].abs());
        if !(c >= l && c >= r) || c < level - 0.5 {
            continue;
        }
        let polished = polish_local(model, cert, i as f64 / m as f64)?;
        if polished.1.abs() >= level
            && !points.iter().any(|q: &DVector<f64>| model.domain().distance(q, &polished.0) < 1e-6)
        {
            points.push(polished.0);
            vals.push(polished.1);
        }
    }
    if points.is_empty() {
        return Ok(ExtendedSupport { class: SupportClass::Empty, points, values: vals, flatness_orders: Vec::new() });
    }
    let max_order = fourier.cutoff().max(1) as u32;
    let mut orders = Vec::with_capacity(points.len());
    for x in &points {
        let mut found = None;
        for l in 1..=max_order {
            let deriv = fourier.certificate_derivative(x[0], p, 2 * l);
            let scale = fourier.derivative_scale(p, 2 * l).max(1e-300);
            if deriv.abs() > FLATNESS_THRESHOLD * scale {
                found = Some(l);
                break;
            }
        }
        orders.push(found.ok_or_else(|| {
            Error::DegenerateCertificate(format!("all even derivatives vanish at x = {}", x[0]))
        })?);
    }
    Ok(ExtendedSupport { class: SupportClass::Discrete, points, values: vals, flatness_orders: orders })
}

/// Newton polish of `|eta|` started at `x0` (1-D).
fn polish_local(model: &ForwardModel, cert: &Certificate, x0: f64) -> Result<(DVector<f64>, f64)> {
    let opts = SolverOptions { newton_steps: 40, ..SolverOptions::default() };
    let e = crate::solver::polish_extremum(model, cert, Target::Abs, DVector::from_element(1, x0), &opts)?;
    Ok((e.position, e.value))
}

fn classify_general(cert: &Certificate, model: &ForwardModel, tol: f64) -> Result<ExtendedSupport> {
    let level = 1.0 - tol;
    let opts = SolverOptions::default();
    let best = certificate_extremum(model, cert.dual(), Target::Abs, &opts, &[])?;
    if best.value.abs() < level {
        return Ok(ExtendedSupport {
            class: SupportClass::Empty,
            points: Vec::new(),
            values: Vec::new(),
            flatness_orders: Vec::new(),
        });
    }
    // collect every polished start reaching the level
    let mut starts: Vec<DVector<f64>> = match opts.grid_size_for(model.dim()) {
        Some(g) => model.domain().grid(g.min(64)),
        None => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
            (0..opts.multistart_points).map(|_| model.domain().sample(&mut rng)).collect()
        }
    };
    starts.push(best.position.clone());
    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut vals = Vec::new();
    for s in starts {
        let e = crate::solver::polish_extremum(model, cert, Target::Abs, s, &opts)?;
        if e.value.abs() >= level && !points.iter().any(|q| model.domain().distance(q, &e.position) < 1e-6) {
            points.push(e.position);
            vals.push(e.value);
        }
    }
    Ok(ExtendedSupport { class: SupportClass::Discrete, points, values: vals, flatness_orders: Vec::new() })
}
