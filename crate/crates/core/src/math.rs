//! Small numeric helpers shared across the crate.

use nalgebra::{Matrix2, Vector2};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec4 = nalgebra::Vector4<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

pub const SQRT_2: f64 = core::f64::consts::SQRT_2;
pub const SQRT_PI: f64 = 1.772_453_850_905_516;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Gauss error function, forwarded to libm (~1 ulp).
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Inverse error function on (-1, 1).
///
/// Polynomial initial guess (Giles-style, float accuracy) refined with two
/// Newton steps on `erf`, which brings the result to near machine precision.
pub fn erf_inv(x: f64) -> f64 {
    debug_assert!(x > -1.0 && x < 1.0);
    if x == 0.0 {
        return 0.0;
    }
    let w = -libm::log((1.0 - x) * (1.0 + x));
    let mut t = if w < 5.0 {
        let w = w - 2.5;
        let mut p = 2.810_226_36e-08;
        p = 3.432_739_39e-07 + p * w;
        p = -3.523_387_7e-06 + p * w;
        p = -4.391_506_54e-06 + p * w;
        p = 0.000_218_580_87 + p * w;
        p = -0.001_253_725_03 + p * w;
        p = -0.004_177_681_64 + p * w;
        p = 0.246_640_727 + p * w;
        p = 1.501_409_41 + p * w;
        p * x
    } else {
        let w = libm::sqrt(w) - 3.0;
        let mut p = -0.000_200_214_257;
        p = 0.000_100_950_558 + p * w;
        p = 0.001_349_343_22 + p * w;
        p = -0.003_673_428_44 + p * w;
        p = 0.005_739_507_73 + p * w;
        p = -0.007_622_461_3 + p * w;
        p = 0.009_438_870_47 + p * w;
        p = 1.001_674_06 + p * w;
        p = 2.832_976_82 + p * w;
        p * x
    };
    for _ in 0..2 {
        let err = erf(t) - x;
        t -= err * SQRT_PI / 2.0 * libm::exp(t * t);
    }
    t
}

/// Eigenvalues (descending) and unit eigenvectors of a symmetric 2x2 matrix.
pub fn sym_eigen_2x2(m: &Matrix2<f64>) -> ([f64; 2], [Vector2<f64>; 2]) {
    let a = m[(0, 0)];
    let b = m[(0, 1)];
    let c = m[(1, 1)];
    let tr = a + c;
    let disc = libm::sqrt(((a - c) * 0.5) * ((a - c) * 0.5) + b * b);
    let l1 = tr * 0.5 + disc;
    let l2 = tr * 0.5 - disc;
    let v1 = if b.abs() > 1e-300 {
        Vector2::new(l1 - c, b).normalize()
    } else if a >= c {
        Vector2::new(1.0, 0.0)
    } else {
        Vector2::new(0.0, 1.0)
    };
    let v2 = Vector2::new(-v1.y, v1.x);
    ([l1, l2], [v1, v2])
}
