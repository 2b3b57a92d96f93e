use std::f64::consts::PI;

use super::Scalar;

pub const SIGMA_MIN: f64 = 1e-3;
pub const SIGMA_MAX: f64 = 1.0;

/// Independent Gaussians over the real and imaginary part of a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams<T> {
    pub mu_r: T,
    pub mu_i: T,
    pub sigma_r: T,
    pub sigma_i: T,
}

#[inline]
fn sigma_of<T: Scalar>(s: T) -> T {
    s.exp().max(T::of(SIGMA_MIN)).min(T::of(SIGMA_MAX))
}

/// `dσ/ds`: σ inside the clamp range, zero where the clamp is active.
#[inline]
fn sigma_slope<T: Scalar>(s: T) -> T {
    let e = s.exp();
    if e < T::of(SIGMA_MIN) || e > T::of(SIGMA_MAX) {
        T::zero()
    } else {
        e
    }
}

impl<T: Scalar> GaussianParams<T> {
    /// From raw head outputs `(μ_R, μ_I, s_R, s_I)`, `σ = clamp(exp(s))`.
    pub fn from_raw(raw: [T; 4]) -> Self {
        Self {
            mu_r: raw[0],
            mu_i: raw[1],
            sigma_r: sigma_of(raw[2]),
            sigma_i: sigma_of(raw[3]),
        }
    }

    /// `γ = sqrt(1 - clip(σ_R² + σ_I², 0, 1))`.
    pub fn coherence(&self) -> f64 {
        let s = self.sigma_r.f64().powi(2) + self.sigma_i.f64().powi(2);
        (1.0 - s.clamp(0.0, 1.0)).sqrt()
    }
}

/// `-ln p(t | μ, σ)` for the bivariate diagonal Gaussian.
pub fn gaussian_nll<T: Scalar>(p: &GaussianParams<T>, target: (T, T)) -> T {
    let (tr, ti) = target;
    let dr = tr - p.mu_r;
    let di = ti - p.mu_i;
    let two = T::of(2.0);
    T::of((2.0 * PI).ln())
        + p.sigma_r.ln()
        + p.sigma_i.ln()
        + dr * dr / (two * p.sigma_r * p.sigma_r)
        + di * di / (two * p.sigma_i * p.sigma_i)
}

/// Loss and its gradient with respect to the raw head outputs.
pub fn gaussian_nll_grad<T: Scalar>(raw: [T; 4], target: (T, T)) -> (T, [T; 4]) {
    let p = GaussianParams::from_raw(raw);
    let loss = gaussian_nll(&p, target);
    let (tr, ti) = target;
    let (sr2, si2) = (p.sigma_r * p.sigma_r, p.sigma_i * p.sigma_i);
    let (er, ei) = (p.mu_r - tr, p.mu_i - ti);
    // dE/dσ = 1/σ − r²/σ³
    let d_sigma_r = T::one() / p.sigma_r - er * er / (sr2 * p.sigma_r);
    let d_sigma_i = T::one() / p.sigma_i - ei * ei / (si2 * p.sigma_i);
    let grad = [
        er / sr2,
        ei / si2,
        d_sigma_r * sigma_slope(raw[2]),
        d_sigma_i * sigma_slope(raw[3]),
    ];
    (loss, grad)
}
