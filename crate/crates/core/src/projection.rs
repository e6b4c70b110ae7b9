//! EWA projection of 3D Gaussians to screen space, pop-free depth planes,
//! tight oriented bounding boxes and tile binning.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{sym_eigen_2x2, Mat2, Vec2, Vec3};
use crate::scene::{eval_sh, Camera, Gaussian3D};

/// Response cutoff for bounding boxes and culling (supplement convention).
pub const EPS_O: f64 = 1.0 / 255.0;
/// Alpha is clamped below this before any division by (1 - alpha).
pub const ALPHA_MAX: f64 = 0.99999;
/// Low-pass dilation added to the projected covariance diagonal, in px^2.
pub const LOW_PASS_DILATION: f64 = 0.3;
const MAX_CONDITION: f64 = 1e8;

/// Screen-space linearization of a splat's depth:
/// `depth(px, py) = z0 + gx * (px - mean2d.x) + gy * (py - mean2d.y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneDepth {
    pub z0: f64,
    pub gx: f64,
    pub gy: f64,
}

/// Per-view screen-space form of one Gaussian.
#[derive(Debug, Clone)]
pub struct ProjectedSplat {
    /// Canonical primitive identity: keyed into the random stream and used
    /// for depth tie-breaks. Derived from primitive content, not list order,
    /// so renders are bit-identical under scene permutation.
    pub gaussian_id: u32,
    /// Position of the primitive in `scene.gaussians` (gradient indexing).
    pub scene_index: u32,
    pub mean2d: Vec2,
    pub cov2d: Mat2,
    pub inv_cov2d: Mat2,
    /// Activated opacity, clamped to [0, ALPHA_MAX].
    pub opacity: f64,
    /// SH color evaluated toward the Gaussian center.
    pub view_color: [f64; 3],
    /// Camera-z of the transformed mean.
    pub mean_depth: f64,
    pub plane: PlaneDepth,
    /// Oriented bounding box corners, screen space.
    pub bbox: [Vec2; 4],
    /// Eigenvalues (descending) and eigenvectors of cov2d.
    pub eigenvalues: [f64; 2],
    pub eigenvectors: [Vec2; 2],
}

impl ProjectedSplat {
    /// Per-pixel fragment alpha: opacity times the 2D Gaussian response.
    #[inline]
    pub fn alpha_at(&self, px: f64, py: f64) -> f64 {
        let d = Vec2::new(px - self.mean2d.x, py - self.mean2d.y);
        let q = (self.inv_cov2d * d).dot(&d);
        self.opacity * libm::exp(-0.5 * q)
    }

    #[inline]
    pub fn plane_depth_at(&self, px: f64, py: f64) -> f64 {
        self.plane.z0
            + self.plane.gx * (px - self.mean2d.x)
            + self.plane.gy * (py - self.mean2d.y)
    }
}

/// The opacity-aware cutoff distance `t_O = sqrt(2 log(alpha / EPS_O))`.
pub fn cutoff_radius(alpha: f64) -> f64 {
    libm::sqrt(2.0 * libm::log(alpha / EPS_O))
}

/// The 2x3 Jacobian of the pinhole projection at camera-space point `t`.
pub fn projection_jacobian(cam: &Camera, t: &Vec3) -> nalgebra::Matrix2x3<f64> {
    let z2 = t.z * t.z;
    nalgebra::Matrix2x3::new(
        cam.fx / t.z,
        0.0,
        -cam.fx * t.x / z2,
        0.0,
        cam.fy / t.z,
        -cam.fy * t.y / z2,
    )
}

/// Projects one activated Gaussian. Returns `None` when the primitive is
/// culled: mean outside the depth range, opacity at or below the cutoff,
/// degenerate projected covariance, or bounding box off the viewport.
pub fn project_gaussian(g: &Gaussian3D, cam: &Camera, sh_degree: u32, id: u32) -> Option<ProjectedSplat> {
    let t = cam.world_to_camera(&g.position);
    if !(t.z >= cam.near && t.z <= cam.far) {
        return None;
    }
    let opacity = g.opacity().min(ALPHA_MAX);
    if opacity <= EPS_O {
        return None;
    }

    let sigma = g.covariance();
    let cam_cov = cam.rotation * sigma * cam.rotation.transpose();
    let j = projection_jacobian(cam, &t);
    let mut cov2d = j * cam_cov * j.transpose();
    cov2d[(0, 0)] += LOW_PASS_DILATION;
    cov2d[(1, 1)] += LOW_PASS_DILATION;

    let (eigenvalues, eigenvectors) = sym_eigen_2x2(&cov2d);
    if !(eigenvalues[1] > 0.0) || eigenvalues[0] / eigenvalues[1] > MAX_CONDITION {
        return None;
    }
    let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(1, 0)];
    let inv_cov2d = Mat2::new(
        cov2d[(1, 1)] / det,
        -cov2d[(0, 1)] / det,
        -cov2d[(1, 0)] / det,
        cov2d[(0, 0)] / det,
    );

    let (px, py) = cam.project(&t);
    let mean2d = Vec2::new(px, py);
    let bbox = oriented_bbox(&cov2d, &mean2d, opacity)?;

    // viewport rejection on the bbox's AABB
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in &bbox {
        lo_x = lo_x.min(c.x);
        lo_y = lo_y.min(c.y);
        hi_x = hi_x.max(c.x);
        hi_y = hi_y.max(c.y);
    }
    if hi_x < 0.0 || hi_y < 0.0 || lo_x > cam.width as f64 || lo_y > cam.height as f64 {
        return None;
    }

    let view_dir = (g.position - cam.center()).normalize();
    let view_color = eval_sh(&g.sh_coeffs, &view_dir, sh_degree);
    let plane = compute_plane_depth(g, cam);

    Some(ProjectedSplat {
        gaussian_id: id,
        scene_index: id,
        mean2d,
        cov2d,
        inv_cov2d,
        opacity,
        view_color,
        mean_depth: t.z,
        plane,
        bbox,
        eigenvalues,
        eigenvectors,
    })
}

/// Screen-space linearization of the maximum-density plane
/// `n . (x - mu) = 0` with `n = Sigma^-1 (mu - o)`.
///
/// `depth(px, py)` is the camera-z of the intersection of pixel (px, py)'s
/// ray with that plane, linearized about the projected mean. Falls back to a
/// constant mean depth when the plane is near-parallel to the central ray.
pub fn compute_plane_depth(g: &Gaussian3D, cam: &Camera) -> PlaneDepth {
    let t = cam.world_to_camera(&g.position);
    let o = cam.center();
    let sigma = g.covariance();
    let to_mean = g.position - o;
    let fallback = PlaneDepth { z0: t.z, gx: 0.0, gy: 0.0 };

    let n = match sigma.try_inverse() {
        Some(inv) => inv * to_mean,
        None => return fallback,
    };
    // k = n . (mu - o); the plane offset along the normal
    let k = n.dot(&to_mean);
    // camera-space normal; the denominator is linear in pixel coordinates
    let m = cam.rotation * n;
    let (px0, py0) = cam.project(&t);
    let dc0 = Vec3::new((px0 - cam.cx) / cam.fx, (py0 - cam.cy) / cam.fy, 1.0);
    let d0 = m.dot(&dc0);
    if d0.abs() < 1e-8 * m.norm() * dc0.norm() || k == 0.0 {
        return fallback;
    }
    PlaneDepth {
        z0: k / d0,
        gx: -k * m.x / (cam.fx * d0 * d0),
        gy: -k * m.y / (cam.fy * d0 * d0),
    }
}

/// Tight oriented bounding box of the `EPS_O / alpha` response level set:
/// corners `mean2d +- t_O sqrt(lambda_i) v_i`. `None` when alpha is at or
/// below the cutoff.
pub fn oriented_bbox(cov2d: &Mat2, mean2d: &Vec2, alpha: f64) -> Option<[Vec2; 4]> {
    if alpha <= EPS_O {
        return None;
    }
    let t_o = cutoff_radius(alpha);
    let ([l1, l2], [v1, v2]) = sym_eigen_2x2(cov2d);
    let d1 = t_o * libm::sqrt(l1);
    let d2 = t_o * libm::sqrt(l2);
    let e1 = d1 * v1;
    let e2 = d2 * v2;
    Some([mean2d + e1 + e2, mean2d + e1 - e2, mean2d - e1 - e2, mean2d - e1 + e2])
}

/// Tile-indexed lists of splat indices.
#[derive(Debug, Clone)]
pub struct TileBins {
    pub tile_size: u32,
    pub tiles_x: u32,
    pub tiles_y: u32,
    /// Per tile (row-major): indices into the splat slice, sorted by
    /// (mean_depth, gaussian_id) ascending.
    pub bins: Vec<Vec<u32>>,
}

impl TileBins {
    #[inline]
    pub fn tile_of(&self, px: u32, py: u32) -> &[u32] {
        let tx = px / self.tile_size;
        let ty = py / self.tile_size;
        &self.bins[(ty * self.tiles_x + tx) as usize]
    }
}

fn interval_on_axis(points: &[Vec2], axis: &Vec2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points {
        let v = p.dot(axis);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Separating-axis overlap test between a convex quad and an axis-aligned
/// rectangle.
pub fn quad_overlaps_rect(quad: &[Vec2; 4], rect_min: Vec2, rect_max: Vec2) -> bool {
    let rect = [
        rect_min,
        Vec2::new(rect_max.x, rect_min.y),
        rect_max,
        Vec2::new(rect_min.x, rect_max.y),
    ];
    let mut axes = [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::zeros(), Vec2::zeros()];
    let e1 = quad[1] - quad[0];
    let e2 = quad[3] - quad[0];
    axes[2] = Vec2::new(-e1.y, e1.x);
    axes[3] = Vec2::new(-e2.y, e2.x);
    for axis in &axes {
        if axis.norm_squared() == 0.0 {
            continue;
        }
        let (a_lo, a_hi) = interval_on_axis(quad, axis);
        let (b_lo, b_hi) = interval_on_axis(&rect, axis);
        if a_hi < b_lo || b_hi < a_lo {
            return false;
        }
    }
    true
}

/// Bins splats into tiles by oriented-bbox overlap. Bins are sorted by
/// (mean_depth, gaussian_id) so output does not depend on submission order.
pub fn cull_and_bin(splats: &[ProjectedSplat], cam: &Camera, tile_size: u32) -> TileBins {
    assert!(tile_size > 0);
    let tiles_x = cam.width.div_ceil(tile_size);
    let tiles_y = cam.height.div_ceil(tile_size);
    let mut bins = vec![Vec::new(); (tiles_x * tiles_y) as usize];

    for (idx, splat) in splats.iter().enumerate() {
        let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) =
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &splat.bbox {
            lo_x = lo_x.min(c.x);
            lo_y = lo_y.min(c.y);
            hi_x = hi_x.max(c.x);
            hi_y = hi_y.max(c.y);
        }
        let ts = tile_size as f64;
        let tx0 = ((lo_x / ts).floor().max(0.0) as u32).min(tiles_x.saturating_sub(1));
        let ty0 = ((lo_y / ts).floor().max(0.0) as u32).min(tiles_y.saturating_sub(1));
        let tx1 = ((hi_x / ts).floor().max(0.0) as u32).min(tiles_x.saturating_sub(1));
        let ty1 = ((hi_y / ts).floor().max(0.0) as u32).min(tiles_y.saturating_sub(1));
        if hi_x < 0.0 || hi_y < 0.0 || lo_x > cam.width as f64 || lo_y > cam.height as f64 {
            continue;
        }
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                let rect_min = Vec2::new(tx as f64 * ts, ty as f64 * ts);
                let rect_max = Vec2::new(
                    ((tx + 1) as f64 * ts).min(cam.width as f64),
                    ((ty + 1) as f64 * ts).min(cam.height as f64),
                );
                if quad_overlaps_rect(&splat.bbox, rect_min, rect_max) {
                    bins[(ty * tiles_x + tx) as usize].push(idx as u32);
                }
            }
        }
    }
    for bin in &mut bins {
        bin.sort_by(|&a, &b| {
            let sa = &splats[a as usize];
            let sb = &splats[b as usize];
            sa.mean_depth
                .partial_cmp(&sb.mean_depth)
                .unwrap()
                .then(sa.gaussian_id.cmp(&sb.gaussian_id))
        });
    }
    TileBins { tile_size, tiles_x, tiles_y, bins }
}

/// Total order on Gaussian content, used to derive list-order-independent
/// primitive ids.
fn content_cmp(a: &Gaussian3D, b: &Gaussian3D) -> core::cmp::Ordering {
    let fields = |g: &Gaussian3D| -> [f64; 11] {
        [
            g.position.x,
            g.position.y,
            g.position.z,
            g.log_scale.x,
            g.log_scale.y,
            g.log_scale.z,
            g.rotation.x,
            g.rotation.y,
            g.rotation.z,
            g.rotation.w,
            g.opacity_logit,
        ]
    };
    let fa = fields(a);
    let fb = fields(b);
    for (x, y) in fa.iter().zip(&fb) {
        match x.total_cmp(y) {
            core::cmp::Ordering::Equal => continue,
            ord => return ord,
        }
    }
    for i in 0..16 {
        for ch in 0..3 {
            match a.sh_coeffs[i][ch].total_cmp(&b.sh_coeffs[i][ch]) {
                core::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
    }
    core::cmp::Ordering::Equal
}

/// Canonical id per Gaussian: the rank of the primitive under a total order
/// on its content. Invariant under any permutation of the scene list.
pub fn canonical_ids(scene: &crate::scene::Scene) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scene.gaussians.len() as u32).collect();
    order.sort_by(|&a, &b| {
        content_cmp(&scene.gaussians[a as usize], &scene.gaussians[b as usize])
    });
    let mut ids = vec![0u32; scene.gaussians.len()];
    for (rank, &idx) in order.iter().enumerate() {
        ids[idx as usize] = rank as u32;
    }
    ids
}

/// Projects a whole scene and bins the result.
pub fn project_scene(
    scene: &crate::scene::Scene,
    cam: &Camera,
    tile_size: u32,
) -> (Vec<ProjectedSplat>, TileBins) {
    let ids = canonical_ids(scene);
    let splats: Vec<ProjectedSplat> = scene
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            project_gaussian(g, cam, scene.sh_degree, ids[i]).map(|mut s| {
                s.scene_index = i as u32;
                s
            })
        })
        .collect();
    let bins = cull_and_bin(&splats, cam, tile_size);
    (splats, bins)
}
