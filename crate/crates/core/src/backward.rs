//! Detached Monte Carlo gradient estimation with path-replay.
//!
//! Gradients flow through the blended color and the per-fragment alpha, but
//! never through the sampling decisions: neither the acceptance draws nor
//! the depth comparisons are differentiated. Per selected sample, the winner
//! receives color and opacity gradients and every splat in front receives a
//! transmittance gradient; splats behind the winner receive nothing.
//!
//! Per-splat, per-view quantities (projection Jacobian, covariance factors,
//! SH basis) are precomputed once; pixel events only accumulate low-order
//! moments of the screen-space offset, which the finalization step chains
//! into parameter gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::forward::{DepthMode, ForwardContext, PixelSplat, RenderConfig};
use crate::image::Image;
use crate::math::{Mat2, Mat3, Vec2, Vec3, Vec4};
use crate::projection::{projection_jacobian, ProjectedSplat, ALPHA_MAX};
use crate::scene::{sh_basis, Camera, Gaussian3D, Scene};

/// Seed perturbation for the decorrelated loss-gradient pass.
const DECORRELATION_SALT: u64 = 0xD3C0_11E1_A7ED_5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    L1,
    L2,
}

/// Per-Gaussian parameter partials, indexed by scene position.
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    pub d_position: Vec<Vec3>,
    pub d_log_scale: Vec<Vec3>,
    pub d_rotation: Vec<Vec4>,
    pub d_opacity_logit: Vec<f64>,
    pub d_sh: Vec<[[f64; 3]; 16]>,
}

impl GradientBuffer {
    pub fn zeros(n: usize) -> Self {
        GradientBuffer {
            d_position: vec![Vec3::zeros(); n],
            d_log_scale: vec![Vec3::zeros(); n],
            d_rotation: vec![Vec4::zeros(); n],
            d_opacity_logit: vec![0.0; n],
            d_sh: vec![[[0.0; 3]; 16]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.d_opacity_logit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add(&mut self, other: &GradientBuffer) {
        for i in 0..self.len() {
            self.d_position[i] += other.d_position[i];
            self.d_log_scale[i] += other.d_log_scale[i];
            self.d_rotation[i] += other.d_rotation[i];
            self.d_opacity_logit[i] += other.d_opacity_logit[i];
            for k in 0..16 {
                for ch in 0..3 {
                    self.d_sh[i][k][ch] += other.d_sh[i][k][ch];
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for i in 0..self.len() {
            self.d_position[i] *= s;
            self.d_log_scale[i] *= s;
            self.d_rotation[i] *= s;
            self.d_opacity_logit[i] *= s;
            for k in 0..16 {
                for ch in 0..3 {
                    self.d_sh[i][k][ch] *= s;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_position.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.d_log_scale.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.d_rotation.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.d_opacity_logit.iter().all(|x| x.is_finite())
            && self
                .d_sh
                .iter()
                .all(|g| g.iter().all(|c| c.iter().all(|x| x.is_finite())))
    }
}

/// Photometric loss value, averaged over pixel-channels.
pub fn loss_value(rendered: &Image, target: &Image, loss: Loss) -> f64 {
    assert!(rendered.width == target.width && rendered.height == target.height);
    let p = (rendered.pixels().len() * 3) as f64;
    let mut acc = 0.0;
    for (r, t) in rendered.pixels().iter().zip(target.pixels()) {
        for ch in 0..3 {
            let d = r[ch] - t[ch];
            acc += match loss {
                Loss::L1 => d.abs(),
                Loss::L2 => d * d,
            };
        }
    }
    acc / p
}

/// Per-pixel `dL/dC` field for the photometric loss.
pub fn loss_grad(rendered: &Image, target: &Image, loss: Loss) -> Vec<[f64; 3]> {
    assert!(
        rendered.width == target.width && rendered.height == target.height,
        "image dimension mismatch"
    );
    let p = (rendered.pixels().len() * 3) as f64;
    rendered
        .pixels()
        .iter()
        .zip(target.pixels())
        .map(|(r, t)| {
            let mut g = [0.0; 3];
            for ch in 0..3 {
                let d = r[ch] - t[ch];
                g[ch] = match loss {
                    Loss::L1 => {
                        if d > 0.0 {
                            1.0 / p
                        } else if d < 0.0 {
                            -1.0 / p
                        } else {
                            0.0
                        }
                    }
                    Loss::L2 => 2.0 * d / p,
                };
            }
            g
        })
        .collect()
}

/// What pass 2 stores per (pixel, sample): enough to replay the winner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayEntry {
    /// Index into the context splat list.
    pub selected: Option<u32>,
    pub color: [f64; 3],
    pub z: f64,
}

/// Per-sample records of one stochastic render, `spp` entries per pixel.
pub struct ReplayRecord {
    pub width: u32,
    pub height: u32,
    pub spp: u32,
    pub entries: Vec<ReplayEntry>,
}

impl ReplayRecord {
    #[inline]
    pub fn entry(&self, x: u32, y: u32, s: u32) -> &ReplayEntry {
        &self.entries[((y * self.width + x) * self.spp + s) as usize]
    }
}

/// Renders stochastically while recording the winner of every sample.
pub fn render_with_replay(ctx: &ForwardContext<'_>) -> (Image, ReplayRecord) {
    let (w, h, spp) = (ctx.cam.width, ctx.cam.height, ctx.cfg.spp);
    let mut img = Image::new(w, h);
    let mut entries = Vec::with_capacity((w * h * spp) as usize);
    for y in 0..h {
        for x in 0..w {
            let list = ctx.pixel_splats(x, y);
            let mut acc = [0.0; 3];
            for s in 0..spp {
                let out = ctx.sample_pixel_with(&list, x, y, s);
                for ch in 0..3 {
                    acc[ch] += out.color[ch];
                }
                entries.push(ReplayEntry { selected: out.selected, color: out.color, z: out.z });
            }
            let inv = 1.0 / spp as f64;
            img.set(x, y, [acc[0] * inv, acc[1] * inv, acc[2] * inv]);
        }
    }
    (img, ReplayRecord { width: w, height: h, spp, entries })
}

/// Accumulated pixel-event moments for one splat in one view. `w` weights
/// are `dL/dalpha * alpha`; `d` is the screen offset from the projected
/// mean.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    w: f64,
    wd: [f64; 2],
    /// xx, xy, yy second moments.
    wdd: [f64; 3],
    /// Color upstream sum for selected events.
    dc: [f64; 3],
}

impl Moments {
    fn is_zero(&self) -> bool {
        self.w == 0.0
            && self.wd == [0.0; 2]
            && self.wdd == [0.0; 3]
            && self.dc == [0.0; 3]
    }
}

/// Per-(splat, view) chain factors from fragment alpha and view color down
/// to the raw Gaussian parameters.
pub struct ChainCtx {
    scene_index: u32,
    mean2d: Vec2,
    inv_cov2d: Mat2,
    jac: nalgebra::Matrix2x3<f64>,
    cam_cov: Mat3,
    cam_rot: Mat3,
    t: Vec3,
    fx: f64,
    fy: f64,
    rot_mat: Mat3,
    exp2s: Vec3,
    dr_dq: [Mat3; 4],
    opacity: f64,
    opacity_clamped: bool,
    basis: [f64; 16],
    clamp_mask: [bool; 3],
    sh_count: usize,
}

/// Derivative of the rotation matrix with respect to the *unit* quaternion
/// components (w, x, y, z).
fn rotation_matrix_derivs(q: &Vec4) -> [Mat3; 4] {
    let (w, x, y, z) = (q.x, q.y, q.z, q.w);
    [
        2.0 * Mat3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0),
        2.0 * Mat3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x),
        2.0 * Mat3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y),
        2.0 * Mat3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0),
    ]
}

impl ChainCtx {
    pub fn new(g: &Gaussian3D, cam: &Camera, splat: &ProjectedSplat, sh_degree: u32) -> Self {
        let t = cam.world_to_camera(&g.position);
        let jac = projection_jacobian(cam, &t);
        let sigma = g.covariance();
        let cam_cov = cam.rotation * sigma * cam.rotation.transpose();
        let rot_mat = g.rotation_matrix();
        let exp2s = Vec3::new(
            libm::exp(2.0 * g.log_scale.x),
            libm::exp(2.0 * g.log_scale.y),
            libm::exp(2.0 * g.log_scale.z),
        );

        // unit-quaternion derivatives chained through the normalization
        let qn = g.rotation.norm();
        let qu = g.rotation_unit();
        let du = rotation_matrix_derivs(&qu);
        let mut dr_dq = [Mat3::zeros(); 4];
        for j in 0..4 {
            let mut m = Mat3::zeros();
            for k in 0..4 {
                let dq = (if k == j { 1.0 } else { 0.0 } - qu[k] * qu[j]) / qn;
                m += dq * du[k];
            }
            dr_dq[j] = m;
        }

        let raw_opacity = g.opacity();
        let view_dir = (g.position - cam.center()).normalize();
        let basis = sh_basis(&view_dir, sh_degree);
        let raw = crate::scene::eval_sh_unclamped(&g.sh_coeffs, &view_dir, sh_degree);
        let clamp_mask = [raw[0] < 0.0, raw[1] < 0.0, raw[2] < 0.0];

        ChainCtx {
            scene_index: splat.scene_index,
            mean2d: splat.mean2d,
            inv_cov2d: splat.inv_cov2d,
            jac,
            cam_cov,
            cam_rot: cam.rotation,
            t,
            fx: cam.fx,
            fy: cam.fy,
            rot_mat,
            exp2s,
            dr_dq,
            opacity: raw_opacity.min(ALPHA_MAX),
            opacity_clamped: raw_opacity > ALPHA_MAX,
            basis,
            clamp_mask,
            sh_count: ((sh_degree + 1) * (sh_degree + 1)) as usize,
        }
    }

    /// Chains accumulated moments into parameter gradients.
    fn apply(&self, m: &Moments, out: &mut GradientBuffer) {
        if m.is_zero() {
            return;
        }
        let i = self.scene_index as usize;
        let mm = self.inv_cov2d;

        // opacity logit: d(alpha)/d(logit) = alpha * (1 - op)
        if !self.opacity_clamped {
            out.d_opacity_logit[i] += m.w * (1.0 - self.opacity);
        }

        // mean2d route: d(alpha)/d(mean2d) = alpha * M d
        let wd = Vec2::new(m.wd[0], m.wd[1]);
        let g_mean2d = mm * wd;
        let mut g_t = self.jac.transpose() * g_mean2d;

        // covariance route: d(alpha)/dC = alpha/2 * (M d)(M d)^T
        let wdd = Mat2::new(m.wdd[0], m.wdd[1], m.wdd[1], m.wdd[2]);
        let g_c = 0.5 * mm * wdd * mm;

        // C -> camera covariance -> world covariance
        let g_b = self.jac.transpose() * g_c * self.jac;
        let g_sigma = self.cam_rot.transpose() * g_b * self.cam_rot;

        // world covariance -> log scales (Sigma = R diag(exp 2s) R^T)
        for k in 0..3 {
            let r_k = self.rot_mat.column(k);
            let quad = (g_sigma * r_k).dot(&r_k);
            out.d_log_scale[i][k] += 2.0 * self.exp2s[k] * quad;
        }

        // world covariance -> quaternion
        let d_rt = Mat3::from_diagonal(&self.exp2s) * self.rot_mat.transpose();
        for j in 0..4 {
            out.d_rotation[i][j] += 2.0 * (g_sigma * self.dr_dq[j] * d_rt).trace();
        }

        // C -> projection Jacobian -> camera-space mean
        let g_j = 2.0 * g_c * self.jac * self.cam_cov;
        let (tx, ty, tz) = (self.t.x, self.t.y, self.t.z);
        let z2 = tz * tz;
        let z3 = z2 * tz;
        g_t.x += g_j[(0, 2)] * (-self.fx / z2);
        g_t.y += g_j[(1, 2)] * (-self.fy / z2);
        g_t.z += g_j[(0, 0)] * (-self.fx / z2)
            + g_j[(0, 2)] * (2.0 * self.fx * tx / z3)
            + g_j[(1, 1)] * (-self.fy / z2)
            + g_j[(1, 2)] * (2.0 * self.fy * ty / z3);

        out.d_position[i] += self.cam_rot.transpose() * g_t;

        // view color -> SH coefficients (clamped channels receive nothing)
        for k in 0..self.sh_count {
            for ch in 0..3 {
                if !self.clamp_mask[ch] {
                    out.d_sh[i][k][ch] += self.basis[k] * m.dc[ch];
                }
            }
        }
    }
}

/// Accumulates pixel-sample gradient events for one view and chains them
/// into a [`GradientBuffer`] on finalization.
pub struct GradientAccumulator {
    chains: Vec<ChainCtx>,
    moments: Vec<Moments>,
    scene_len: usize,
}

impl GradientAccumulator {
    pub fn new(scene: &Scene, cam: &Camera, ctx: &ForwardContext<'_>) -> Self {
        let chains: Vec<ChainCtx> = ctx
            .splats
            .iter()
            .map(|s| {
                ChainCtx::new(
                    &scene.gaussians[s.scene_index as usize],
                    cam,
                    s,
                    scene.sh_degree,
                )
            })
            .collect();
        let moments = vec![Moments::default(); chains.len()];
        GradientAccumulator { chains, moments, scene_len: scene.gaussians.len() }
    }

    #[inline]
    fn alpha_event(&mut self, splat_idx: u32, px: f64, py: f64, g_alpha_times_alpha: f64) {
        let chain = &self.chains[splat_idx as usize];
        let dx = px - chain.mean2d.x;
        let dy = py - chain.mean2d.y;
        let m = &mut self.moments[splat_idx as usize];
        let w = g_alpha_times_alpha;
        m.w += w;
        m.wd[0] += w * dx;
        m.wd[1] += w * dy;
        m.wdd[0] += w * dx * dx;
        m.wdd[1] += w * dx * dy;
        m.wdd[2] += w * dy * dy;
    }

    /// Applies the detached per-sample gradient rules for one replayed
    /// pixel sample. `weight` scales the upstream (1/spp for averaging).
    pub fn backprop_pixel(
        &mut self,
        x: u32,
        y: u32,
        list: &[PixelSplat],
        entry: &ReplayEntry,
        dldc: [f64; 3],
        background: [f64; 3],
        weight: f64,
    ) {
        let px = x as f64 + 0.5;
        let py = y as f64 + 0.5;
        match entry.selected {
            Some(sel) => {
                let sel_ps = list
                    .iter()
                    .find(|ps| ps.splat_idx == sel)
                    .expect("replayed winner must cover its pixel");
                assert!(sel_ps.alpha > 0.0, "selected splat with zero alpha");
                let sel_id = sel_ps.gaussian_id;
                // winner: color gradient and dL/dalpha_i = dL/dC . c_i / alpha_i
                let mscope = &mut self.moments[sel as usize];
                let mut g_alpha = 0.0;
                for ch in 0..3 {
                    mscope.dc[ch] += weight * dldc[ch];
                    g_alpha += dldc[ch] * sel_ps.color[ch];
                }
                // event weight carries alpha: w = dL/dalpha * alpha
                self.alpha_event(sel, px, py, weight * g_alpha);
                // splats in front: dL/dalpha_k = dL/dC . (-c_i) / (1 - alpha_k)
                for ps in list {
                    let front = ps.z < entry.z || (ps.z == entry.z && ps.gaussian_id < sel_id);
                    if !front {
                        continue;
                    }
                    let mut g = 0.0;
                    for ch in 0..3 {
                        g += dldc[ch] * (-sel_ps.color[ch]);
                    }
                    let w = weight * g * ps.alpha / (1.0 - ps.alpha);
                    self.alpha_event(ps.splat_idx, px, py, w);
                }
            }
            None => {
                // background summand: everything tested sits in front of infinity
                let mut g = 0.0;
                for ch in 0..3 {
                    g += dldc[ch] * (-background[ch]);
                }
                for ps in list {
                    let w = weight * g * ps.alpha / (1.0 - ps.alpha);
                    self.alpha_event(ps.splat_idx, px, py, w);
                }
            }
        }
    }

    /// Analytic sorted alpha-blending gradients for one pixel with upstream
    /// `dL/dC` (shares the parameter chain with the stochastic path).
    pub fn backprop_pixel_analytic(
        &mut self,
        x: u32,
        y: u32,
        list: &[PixelSplat],
        dldc: [f64; 3],
        background: [f64; 3],
        weight: f64,
    ) {
        let px = x as f64 + 0.5;
        let py = y as f64 + 0.5;
        let mut sorted: Vec<&PixelSplat> = list.iter().collect();
        sorted.sort_by(|a, b| {
            a.z.partial_cmp(&b.z).unwrap().then(a.gaussian_id.cmp(&b.gaussian_id))
        });
        let n = sorted.len();
        // transmittance in front of each splat
        let mut trans = vec![1.0; n + 1];
        for (k, ps) in sorted.iter().enumerate() {
            trans[k + 1] = trans[k] * (1.0 - ps.alpha);
        }
        // suffix[k] = sum_{i>=k} c_i alpha_i T_i (per channel), plus bg term
        let mut suffix = vec![[0.0; 3]; n + 1];
        for ch in 0..3 {
            suffix[n][ch] = trans[n] * background[ch];
        }
        for k in (0..n).rev() {
            for ch in 0..3 {
                suffix[k][ch] = suffix[k + 1][ch] + sorted[k].color[ch] * sorted[k].alpha * trans[k];
            }
        }
        for (k, ps) in sorted.iter().enumerate() {
            let mut g_alpha = 0.0;
            for ch in 0..3 {
                // dC/dalpha_k = c_k T_k - (suffix behind k) / (1 - alpha_k)
                let d = ps.color[ch] * trans[k] - suffix[k + 1][ch] / (1.0 - ps.alpha);
                g_alpha += dldc[ch] * d;
                self.moments[ps.splat_idx as usize].dc[ch] +=
                    weight * dldc[ch] * ps.alpha * trans[k];
            }
            self.alpha_event(ps.splat_idx, px, py, weight * g_alpha * ps.alpha);
        }
    }

    pub fn finalize(self) -> GradientBuffer {
        let mut out = GradientBuffer::zeros(self.scene_len);
        for (chain, m) in self.chains.iter().zip(&self.moments) {
            chain.apply(m, &mut out);
        }
        out
    }
}

/// Result of a full backward run.
pub struct BackwardResult {
    pub grads: GradientBuffer,
    /// Loss of the (decorrelated) first-pass render against the target.
    pub loss: f64,
    /// The first-pass image.
    pub rendered: Image,
}

/// Three-pass path-replay backpropagation. Pass 1 renders with a different
/// seed and evaluates `dL/dC`; pass 2 renders with `cfg.pass_seed` and
/// records each sample's winner; pass 3 replays those records and applies
/// the detached gradient rules. With `decorrelate` disabled, pass 1 reuses
/// the replay seed (biased; kept for diagnostics).
pub fn path_replay_backward_opts(
    scene: &Scene,
    cam: &Camera,
    cfg: &RenderConfig,
    target: &Image,
    loss: Loss,
    decorrelate: bool,
) -> BackwardResult {
    assert!(
        cfg.depth_mode != DepthMode::FreeFlight,
        "gradients are not defined for stochastic free-flight ordering"
    );
    // pass 1: loss gradient from a decorrelated render
    let mut cfg1 = *cfg;
    if decorrelate {
        cfg1.pass_seed ^= DECORRELATION_SALT;
    }
    let ctx1 = ForwardContext::new(scene, cam, cfg1);
    let (img1, _) = render_with_replay(&ctx1);
    let dldc = loss_grad(&img1, target, loss);
    let loss_val = loss_value(&img1, target, loss);

    // pass 2: replay render with the primary seed
    let ctx2 = ForwardContext::new(scene, cam, *cfg);
    let (_, replay) = render_with_replay(&ctx2);

    // pass 3: replay and accumulate
    let mut acc = GradientAccumulator::new(scene, cam, &ctx2);
    let weight = 1.0 / cfg.spp as f64;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let list = ctx2.pixel_splats(x, y);
            let g = dldc[(y * cam.width + x) as usize];
            for s in 0..cfg.spp {
                let entry = replay.entry(x, y, s);
                debug_assert_eq!(
                    ctx2.sample_pixel_with(&list, x, y, s).selected,
                    entry.selected,
                    "replay must reproduce the recorded selection"
                );
                acc.backprop_pixel(x, y, &list, entry, g, cfg.background, weight);
            }
        }
    }
    BackwardResult { grads: acc.finalize(), loss: loss_val, rendered: img1 }
}

/// Standard decorrelated path-replay backward pass.
pub fn path_replay_backward(
    scene: &Scene,
    cam: &Camera,
    cfg: &RenderConfig,
    target: &Image,
    loss: Loss,
) -> BackwardResult {
    path_replay_backward_opts(scene, cam, cfg, target, loss, true)
}

/// Analytic gradients of the sorted alpha-blending renderer for an
/// arbitrary per-pixel upstream field (no early stop).
pub fn analytic_backward(
    scene: &Scene,
    cam: &Camera,
    cfg: &RenderConfig,
    dldc: &[[f64; 3]],
) -> GradientBuffer {
    let mut cfg = *cfg;
    cfg.early_stop_transmittance = 0.0;
    let ctx = ForwardContext::new(scene, cam, cfg);
    let mut acc = GradientAccumulator::new(scene, cam, &ctx);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let list = ctx.pixel_splats(x, y);
            acc.backprop_pixel_analytic(x, y, &list, dldc[(y * cam.width + x) as usize], cfg.background, 1.0);
        }
    }
    acc.finalize()
}

/// Which positional component a gradient image visualizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradAxis {
    X,
    Y,
    Z,
}

/// Diagnostic gradient image: per pixel, the sum over Gaussians of the
/// chosen positional-gradient component induced by that pixel alone, with a
/// unit upstream on every channel. Stochastic estimator.
pub fn gradient_image(scene: &Scene, cam: &Camera, cfg: &RenderConfig, axis: GradAxis) -> Image {
    gradient_image_impl(scene, cam, cfg, axis, false)
}

/// Analytic (sorted alpha blending) version of [`gradient_image`].
pub fn gradient_image_analytic(
    scene: &Scene,
    cam: &Camera,
    cfg: &RenderConfig,
    axis: GradAxis,
) -> Image {
    gradient_image_impl(scene, cam, cfg, axis, true)
}

fn gradient_image_impl(
    scene: &Scene,
    cam: &Camera,
    cfg: &RenderConfig,
    axis: GradAxis,
    analytic: bool,
) -> Image {
    let mut cfg = *cfg;
    if analytic {
        cfg.early_stop_transmittance = 0.0;
    } else {
        assert!(cfg.depth_mode != DepthMode::FreeFlight);
    }
    let ctx = ForwardContext::new(scene, cam, cfg);
    let mut img = Image::new(cam.width, cam.height);
    let unit = [1.0; 3];
    for y in 0..cam.height {
        for x in 0..cam.width {
            let list = ctx.pixel_splats(x, y);
            let mut acc = GradientAccumulator::new(scene, cam, &ctx);
            if analytic {
                acc.backprop_pixel_analytic(x, y, &list, unit, cfg.background, 1.0);
            } else {
                let weight = 1.0 / cfg.spp as f64;
                for s in 0..cfg.spp {
                    let out = ctx.sample_pixel_with(&list, x, y, s);
                    let entry = ReplayEntry { selected: out.selected, color: out.color, z: out.z };
                    acc.backprop_pixel(x, y, &list, &entry, unit, cfg.background, weight);
                }
            }
            let grads = acc.finalize();
            let total: f64 = grads
                .d_position
                .iter()
                .map(|p| match axis {
                    GradAxis::X => p.x,
                    GradAxis::Y => p.y,
                    GradAxis::Z => p.z,
                })
                .sum();
            img.set(x, y, [total; 3]);
        }
    }
    img
}
