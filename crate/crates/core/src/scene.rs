//! Gaussian primitives, parameter activations and view-dependent color.

use alloc::vec::Vec;

use crate::math::{sigmoid, Mat3, Vec3, Vec4};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// One 3D Gaussian primitive, stored with *raw* (pre-activation) parameters
/// exactly as they appear in the splat PLY format.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    /// World-space mean.
    pub position: Vec3,
    /// Log of per-axis standard deviation; activated scale is `exp(log_scale)`.
    pub log_scale: Vec3,
    /// Quaternion in `(w, x, y, z)` order, normalized on activation.
    pub rotation: Vec4,
    /// Opacity before the logistic sigmoid.
    pub opacity_logit: f64,
    /// Degree-3 spherical harmonics coefficients, RGB per coefficient.
    /// Index 0 is the DC term.
    pub sh_coeffs: [[f64; 3]; 16],
}

impl Gaussian3D {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> Vec3 {
        Vec3::new(
            libm::exp(self.log_scale.x),
            libm::exp(self.log_scale.y),
            libm::exp(self.log_scale.z),
        )
    }

    pub fn rotation_unit(&self) -> Vec4 {
        let n = self.rotation.norm();
        if n > 0.0 {
            self.rotation / n
        } else {
            Vec4::new(1.0, 0.0, 0.0, 0.0)
        }
    }

    /// Rotation matrix of the activated (normalized) quaternion.
    pub fn rotation_matrix(&self) -> Mat3 {
        let q = self.rotation_unit();
        rotation_matrix_from_unit_quat(&q)
    }

    /// World-space covariance of the activated primitive.
    pub fn covariance(&self) -> Mat3 {
        covariance_from(&self.log_scale, &self.rotation_unit())
    }
}

pub fn rotation_matrix_from_unit_quat(q: &Vec4) -> Mat3 {
    let (w, x, y, z) = (q.x, q.y, q.z, q.w);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Builds the world-space covariance `R S S^T R^T` from log-scales and a
/// normalized quaternion. The eigenvalues are the squared activated scales.
pub fn covariance_from(log_scale: &Vec3, rotation: &Vec4) -> Mat3 {
    let r = rotation_matrix_from_unit_quat(rotation);
    let d = Mat3::from_diagonal(&Vec3::new(
        libm::exp(2.0 * log_scale.x),
        libm::exp(2.0 * log_scale.y),
        libm::exp(2.0 * log_scale.z),
    ));
    let c = r * d * r.transpose();
    // enforce exact symmetry against rounding
    0.5 * (c + c.transpose())
}

/// Evaluates the SH color toward `view_dir` (unit vector, primitive-to-camera
/// convention of the splat format). Returns the format-convention color:
/// `sum(Y_lm * coeff) + 0.5`, clamped below at zero per channel.
pub fn eval_sh(sh_coeffs: &[[f64; 3]; 16], view_dir: &Vec3, degree: u32) -> [f64; 3] {
    let raw = eval_sh_unclamped(sh_coeffs, view_dir, degree);
    [raw[0].max(0.0), raw[1].max(0.0), raw[2].max(0.0)]
}

/// Same as [`eval_sh`] without the final clamp; the backward pass needs the
/// pre-clamp value to gate gradients.
pub fn eval_sh_unclamped(sh_coeffs: &[[f64; 3]; 16], view_dir: &Vec3, degree: u32) -> [f64; 3] {
    let basis = sh_basis(view_dir, degree);
    let mut out = [0.5; 3];
    let n = ((degree + 1) * (degree + 1)) as usize;
    for (i, &b) in basis.iter().enumerate().take(n) {
        for ch in 0..3 {
            out[ch] += b * sh_coeffs[i][ch];
        }
    }
    out
}

/// The 16 SH basis values at `view_dir` for bands 0..=degree; higher bands
/// are zeroed so unused coefficients have no effect.
pub fn sh_basis(view_dir: &Vec3, degree: u32) -> [f64; 16] {
    let (x, y, z) = (view_dir.x, view_dir.y, view_dir.z);
    let mut b = [0.0; 16];
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -SH_C1 * y;
        b[2] = SH_C1 * z;
        b[3] = -SH_C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = SH_C2[0] * x * y;
        b[5] = SH_C2[1] * y * z;
        b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        b[7] = SH_C2[3] * x * z;
        b[8] = SH_C2[4] * (xx - yy);
        if degree >= 3 {
            b[9] = SH_C3[0] * y * (3.0 * xx - yy);
            b[10] = SH_C3[1] * x * y * z;
            b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
            b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
            b[14] = SH_C3[5] * z * (xx - yy);
            b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
        }
    }
    b
}

/// An ordered collection of Gaussians. List order carries no semantic
/// meaning; rendering output is invariant under permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gaussians: Vec<Gaussian3D>,
    pub sh_degree: u32,
}

impl Scene {
    pub fn new(gaussians: Vec<Gaussian3D>, sh_degree: u32) -> Self {
        assert!(sh_degree <= 3);
        Scene { gaussians, sh_degree }
    }

    /// Diagonal of the axis-aligned bounding box of the Gaussian centers.
    pub fn bounding_diagonal(&self) -> f64 {
        if self.gaussians.is_empty() {
            return 0.0;
        }
        let mut lo = self.gaussians[0].position;
        let mut hi = lo;
        for g in &self.gaussians {
            lo = lo.inf(&g.position);
            hi = hi.sup(&g.position);
        }
        (hi - lo).norm()
    }
}

/// Pinhole camera with a rigid world-to-camera transform:
/// `x_cam = rotation * x_world + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    /// Camera center (ray origin) in world space.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// World-space ray direction through pixel (px, py), normalized.
    pub fn pixel_ray_dir(&self, px: f64, py: f64) -> Vec3 {
        let dc = Vec3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        (self.rotation.transpose() * dc).normalize()
    }

    /// z-component of the camera-space direction of the normalized world ray
    /// through (px, py); converts ray distance to camera depth.
    pub fn ray_dir_cam_z(&self, px: f64, py: f64) -> f64 {
        let dc = Vec3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        1.0 / dc.norm()
    }

    pub fn project(&self, p_cam: &Vec3) -> (f64, f64) {
        (
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }
}
