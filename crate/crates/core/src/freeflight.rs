//! Analytic Gaussian line integrals, free-flight distance sampling and
//! decomposition-tracking minima for fully volumetric intermixing.
//!
//! A Gaussian's volumetric density along a ray is
//! `sigma(t) = sigma_t * exp(-(cq^2 t^2 / 2 + a cq t + b / 2))`, which
//! integrates in closed form through the error function. Free-flight
//! distances are drawn by analytic inversion of the Beer-Lambert CDF
//! `1 - exp(-tau(t))`, with a bisection fallback when the erf inversion
//! runs out of precision.

use crate::math::{erf, erf_inv, Vec3, SQRT_2, SQRT_PI};
use crate::projection::ALPHA_MAX;
use crate::scene::Gaussian3D;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
}

/// Scalar reduction of one Gaussian along one ray.
#[derive(Debug, Clone, Copy)]
pub struct FreeFlightParams {
    /// `(o - mu)^T Sigma^-1 d / cq`
    pub a: f64,
    /// `(o - mu)^T Sigma^-1 (o - mu)`, the squared Mahalanobis distance of
    /// the ray origin.
    pub b: f64,
    /// `sqrt(d^T Sigma^-1 d)`
    pub cq: f64,
    /// Peak extinction.
    pub sigma_t: f64,
}

pub fn line_integral_params(g: &Gaussian3D, ray: &Ray, sigma_t: f64) -> FreeFlightParams {
    let inv = g
        .covariance()
        .try_inverse()
        .expect("covariance of an activated Gaussian is SPD");
    params_from_inv_cov(&inv, &g.position, ray, sigma_t)
}

/// Same as [`line_integral_params`] with a precomputed inverse covariance.
pub fn params_from_inv_cov(
    inv_cov: &crate::math::Mat3,
    mean: &Vec3,
    ray: &Ray,
    sigma_t: f64,
) -> FreeFlightParams {
    let om = ray.origin - mean;
    let id = inv_cov * ray.dir;
    let cq = libm::sqrt(ray.dir.dot(&id));
    let a = if cq > 0.0 { om.dot(&id) / cq } else { 0.0 };
    let b = om.dot(&(inv_cov * om));
    FreeFlightParams { a, b, cq, sigma_t }
}

/// Optical depth `tau(t)` accumulated over `[0, t]`.
pub fn optical_depth(p: &FreeFlightParams, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if p.sigma_t == 0.0 || p.cq == 0.0 {
        return 0.0;
    }
    p.sigma_t * SQRT_PI / (SQRT_2 * p.cq)
        * libm::exp((p.a * p.a - p.b) / 2.0)
        * (erf((p.a + t * p.cq) / SQRT_2) - erf(p.a / SQRT_2))
}

/// Optical depth of the whole ray, `tau(infinity)`.
pub fn total_optical_depth(p: &FreeFlightParams) -> f64 {
    if p.sigma_t == 0.0 || p.cq == 0.0 {
        return 0.0;
    }
    p.sigma_t * SQRT_PI / (SQRT_2 * p.cq)
        * libm::exp((p.a * p.a - p.b) / 2.0)
        * (1.0 - erf(p.a / SQRT_2))
}

/// Draws a free-flight distance by inverting `1 - exp(-tau(t)) = u`.
/// Returns `f64::INFINITY` when the ray passes through without interaction.
pub fn sample_free_flight(p: &FreeFlightParams, u: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&u));
    if p.sigma_t == 0.0 || p.cq == 0.0 {
        return f64::INFINITY;
    }
    if u == 0.0 {
        return 0.0;
    }
    let tau_target = -libm::log(1.0 - u);
    // exponent of the inverse amplitude; overflow here means the amplitude
    // underflows and the ray always passes through
    let neg_exp = (p.b - p.a * p.a) / 2.0;
    if neg_exp > 700.0 {
        return f64::INFINITY;
    }
    let rhs = erf(p.a / SQRT_2)
        + tau_target * SQRT_2 * p.cq / (p.sigma_t * SQRT_PI) * libm::exp(neg_exp);
    if rhs >= 1.0 {
        return f64::INFINITY;
    }
    let t = (SQRT_2 * erf_inv(rhs) - p.a) / p.cq;
    let t = t.max(0.0);
    // certify the inversion; fall back to bisection when erf_inv saturates
    let err = optical_depth(p, t) - tau_target;
    if err.abs() <= 1e-9 * tau_target.max(1.0) {
        return t;
    }
    bisect_optical_depth(p, tau_target)
}

fn bisect_optical_depth(p: &FreeFlightParams, tau_target: f64) -> f64 {
    let mut hi = 1.0;
    while optical_depth(p, hi) < tau_target {
        hi *= 2.0;
        if hi > 1e30 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if optical_depth(p, mid) < tau_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Decomposition tracking: one free-flight distance per overlapping
/// Gaussian, keep the minimum. `us[i]` is the uniform draw for `params[i]`.
/// Returns `(t_min, winner)`; `winner` is `None` when every draw is
/// infinite.
pub fn min_free_flight(params: &[FreeFlightParams], us: &[f64]) -> (f64, Option<usize>) {
    assert_eq!(params.len(), us.len());
    let mut t_min = f64::INFINITY;
    let mut winner = None;
    for (i, (p, &u)) in params.iter().zip(us).enumerate() {
        let t = sample_free_flight(p, u);
        if t < t_min {
            t_min = t;
            winner = Some(i);
        }
    }
    (t_min, winner)
}

/// Calibrates the peak extinction so that the interaction probability along
/// the central ray (camera origin through the Gaussian mean) equals `alpha`:
/// `sigma_t = -ln(1 - alpha) / I0` with `I0` the unit-extinction integral.
pub fn sigma_t_from_alpha(g: &Gaussian3D, alpha: f64, ray_origin: &Vec3) -> f64 {
    let alpha = alpha.min(ALPHA_MAX);
    let to_mean = g.position - ray_origin;
    let dist = to_mean.norm();
    if dist == 0.0 {
        return 0.0;
    }
    let ray = Ray { origin: *ray_origin, dir: to_mean / dist };
    let unit = line_integral_params(g, &ray, 1.0);
    let i0 = total_optical_depth(&unit);
    if i0 <= 0.0 {
        return 0.0;
    }
    -libm::log(1.0 - alpha) / i0
}
