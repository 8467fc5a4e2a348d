use nalgebra::DVector;

/// `-n sigma^2 + |y - mu_hat|^2 + 2 sigma^2 div`.
pub fn sure_value(y: &DVector<f64>, mu_hat: &DVector<f64>, divergence: f64, sigma: f64) -> f64 {
    let n = y.len() as f64;
    let s2 = sigma * sigma;
    -n * s2 + (y - mu_hat).norm_squared() + 2.0 * s2 * divergence
}

/// SURE with the divergence replaced by the parameter count `k (d + 1)`.
pub fn sure_param_value(y: &DVector<f64>, mu_hat: &DVector<f64>, k: usize, d: usize, sigma: f64) -> f64 {
    sure_value(y, mu_hat, (k * (d + 1)) as f64, sigma)
}
