//! Forward rendering: the sorted alpha-blending reference and the
//! sorting-free stochastic estimator.
//!
//! The stochastic path runs, per pixel sample, the order-independent loop:
//! accept a splat iff its keyed uniform is below the per-pixel alpha and its
//! resolved depth beats the current winner; the final color is the winner's
//! color or the background. Averaged over samples this is an unbiased
//! estimate of the alpha-blending sum over the same binned splats.

use alloc::vec::Vec;

use crate::freeflight::{params_from_inv_cov, sample_free_flight, sigma_t_from_alpha, Ray};
use crate::image::Image;
use crate::math::{Mat3, Vec3};
use crate::projection::{project_scene, ProjectedSplat, TileBins};
use crate::rng::{sample_uniform, SampleKey, Stream};
use crate::scene::{Camera, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthMode {
    /// Per-Gaussian camera-z of the mean (billboard depth).
    Mean,
    /// Per-fragment depth from the linearized maximum-density plane.
    Plane,
    /// Per-fragment sampled free-flight distance (volumetric intermixing).
    FreeFlight,
}

/// Together with scene and camera, fully determines the rendered output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub spp: u32,
    pub depth_mode: DepthMode,
    pub pass_seed: u64,
    pub background: [f64; 3],
    pub tile_size: u32,
    /// Front-to-back early-stop threshold; reference renderer only. The
    /// stochastic path always tests every binned splat.
    pub early_stop_transmittance: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            spp: 1,
            depth_mode: DepthMode::Mean,
            pass_seed: 0,
            background: [0.0; 3],
            tile_size: 16,
            early_stop_transmittance: 1e-4,
        }
    }
}

/// Running state of one pixel sample (Listing-style loop).
#[derive(Debug, Clone, Copy)]
pub struct PixelSampleState {
    pub z: f64,
    pub color: [f64; 3],
    /// Index into the context's splat list.
    pub selected: Option<u32>,
}

impl PixelSampleState {
    fn new(background: [f64; 3]) -> Self {
        PixelSampleState { z: f64::INFINITY, color: background, selected: None }
    }
}

/// Exact selection PMF for one pixel (test oracle for the stochastic
/// renderer). Entries are `(alpha, depth, id)`; ties in depth are broken by
/// id. Returns per-entry probabilities (input order) plus the residual
/// background probability; together they sum to one.
pub fn pmf_exact(entries: &[(f64, f64, u32)]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[a]
            .1
            .partial_cmp(&entries[b].1)
            .unwrap()
            .then(entries[a].2.cmp(&entries[b].2))
    });
    let mut probs = alloc::vec![0.0; entries.len()];
    let mut transmittance = 1.0;
    for &i in &order {
        let alpha = entries[i].0;
        probs[i] = alpha * transmittance;
        transmittance *= 1.0 - alpha;
    }
    (probs, transmittance)
}

/// Per-splat free-flight data, precomputed per view.
struct FfSplat {
    inv_cov: Mat3,
    mean: Vec3,
    sigma_t: f64,
}

/// Splat data resolved at one pixel.
#[derive(Debug, Clone, Copy)]
pub struct PixelSplat {
    /// Index into the context splat list.
    pub splat_idx: u32,
    pub gaussian_id: u32,
    pub alpha: f64,
    /// Deterministic depth (Mean/Plane); unused in FreeFlight mode.
    pub z: f64,
    pub color: [f64; 3],
}

/// A projected scene ready for pixel-level rendering. Rendering a pixel is a
/// pure function of `(context, x, y)`, so callers may iterate pixels in any
/// order or in parallel.
pub struct ForwardContext<'a> {
    pub cam: &'a Camera,
    pub cfg: RenderConfig,
    pub splats: Vec<ProjectedSplat>,
    pub bins: TileBins,
    ff: Vec<FfSplat>,
}

impl<'a> ForwardContext<'a> {
    pub fn new(scene: &Scene, cam: &'a Camera, cfg: RenderConfig) -> Self {
        let (splats, bins) = project_scene(scene, cam, cfg.tile_size);
        let ff = if cfg.depth_mode == DepthMode::FreeFlight {
            let origin = cam.center();
            splats
                .iter()
                .map(|s| {
                    let g = &scene.gaussians[s.scene_index as usize];
                    FfSplat {
                        inv_cov: g
                            .covariance()
                            .try_inverse()
                            .expect("projected splats have SPD covariance"),
                        mean: g.position,
                        sigma_t: sigma_t_from_alpha(g, s.opacity, &origin),
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        ForwardContext { cam, cfg, splats, bins, ff }
    }

    /// Splats covering pixel (x, y) with per-pixel alpha and deterministic
    /// depth, in bin order (mean_depth then id ascending).
    pub fn pixel_splats(&self, x: u32, y: u32) -> Vec<PixelSplat> {
        let px = x as f64 + 0.5;
        let py = y as f64 + 0.5;
        self.bins
            .tile_of(x, y)
            .iter()
            .map(|&idx| {
                let s = &self.splats[idx as usize];
                let z = match self.cfg.depth_mode {
                    DepthMode::Plane => s.plane_depth_at(px, py),
                    _ => s.mean_depth,
                };
                PixelSplat {
                    splat_idx: idx,
                    gaussian_id: s.gaussian_id,
                    alpha: s.alpha_at(px, py),
                    z,
                    color: s.view_color,
                }
            })
            .collect()
    }

    /// Deterministic or sampled depth of one splat at a pixel, per the
    /// configured depth mode. `f64::INFINITY` in FreeFlight mode means "no
    /// interaction": the splat is rejected regardless of its acceptance draw.
    pub fn resolve_depth(&self, splat_idx: u32, x: u32, y: u32, spp_index: u32) -> f64 {
        let s = &self.splats[splat_idx as usize];
        let px = x as f64 + 0.5;
        let py = y as f64 + 0.5;
        match self.cfg.depth_mode {
            DepthMode::Mean => s.mean_depth,
            DepthMode::Plane => s.plane_depth_at(px, py),
            DepthMode::FreeFlight => {
                let ff = &self.ff[splat_idx as usize];
                let ray = Ray {
                    origin: self.cam.center(),
                    dir: self.cam.pixel_ray_dir(px, py),
                };
                let params = params_from_inv_cov(&ff.inv_cov, &ff.mean, &ray, ff.sigma_t);
                let u = sample_uniform(SampleKey {
                    pass_seed: self.cfg.pass_seed,
                    pixel: (x, y),
                    spp_index,
                    gaussian_id: s.gaussian_id,
                    stream: Stream::FreeFlight,
                });
                let t = sample_free_flight(&params, u);
                t * self.cam.ray_dir_cam_z(px, py)
            }
        }
    }

    /// Runs one single-sample estimate at pixel (x, y).
    pub fn sample_pixel(&self, x: u32, y: u32, spp_index: u32) -> PixelSampleState {
        let list = self.pixel_splats(x, y);
        self.sample_pixel_with(&list, x, y, spp_index)
    }

    /// Same as [`Self::sample_pixel`] with the pixel's splat list already
    /// resolved (hot path for multi-sample loops).
    pub fn sample_pixel_with(
        &self,
        list: &[PixelSplat],
        x: u32,
        y: u32,
        spp_index: u32,
    ) -> PixelSampleState {
        let mut state = PixelSampleState::new(self.cfg.background);
        let mut best_id = u32::MAX;
        match self.cfg.depth_mode {
            DepthMode::Mean | DepthMode::Plane => {
                let depth_sorted = self.cfg.depth_mode == DepthMode::Mean;
                for ps in list {
                    // winner is the accepted splat minimizing (z, id); the
                    // depth check before the draw never changes the result
                    let closer = ps.z < state.z || (ps.z == state.z && ps.gaussian_id < best_id);
                    if !closer {
                        if depth_sorted {
                            // bin is (z, id)-sorted: nothing later can win
                            break;
                        }
                        continue;
                    }
                    let u = sample_uniform(SampleKey {
                        pass_seed: self.cfg.pass_seed,
                        pixel: (x, y),
                        spp_index,
                        gaussian_id: ps.gaussian_id,
                        stream: Stream::Accept,
                    });
                    if u < ps.alpha {
                        state.z = ps.z;
                        state.color = ps.color;
                        state.selected = Some(ps.splat_idx);
                        best_id = ps.gaussian_id;
                        if depth_sorted {
                            break;
                        }
                    }
                }
            }
            DepthMode::FreeFlight => {
                for ps in list {
                    let z = self.resolve_depth(ps.splat_idx, x, y, spp_index);
                    // infinite z means no interaction: never selectable, in
                    // particular not through the id tie-break at infinity
                    if !z.is_finite() {
                        continue;
                    }
                    if z < state.z || (z == state.z && ps.gaussian_id < best_id) {
                        state.z = z;
                        state.color = ps.color;
                        state.selected = Some(ps.splat_idx);
                        best_id = ps.gaussian_id;
                    }
                }
            }
        }
        state
    }

    /// Monte Carlo pixel value: mean over `spp` single-sample estimates.
    pub fn render_pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let list = self.pixel_splats(x, y);
        let mut acc = [0.0; 3];
        for s in 0..self.cfg.spp {
            let out = self.sample_pixel_with(&list, x, y, s);
            for ch in 0..3 {
                acc[ch] += out.color[ch];
            }
        }
        let inv = 1.0 / self.cfg.spp as f64;
        [acc[0] * inv, acc[1] * inv, acc[2] * inv]
    }

    /// Reference pixel value: front-to-back alpha blending of the pixel's
    /// binned splats sorted by resolved depth.
    pub fn sorted_pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let mut list = self.pixel_splats(x, y);
        list.sort_by(|a, b| a.z.partial_cmp(&b.z).unwrap().then(a.gaussian_id.cmp(&b.gaussian_id)));
        let mut color = [0.0; 3];
        let mut transmittance = 1.0;
        for ps in &list {
            for ch in 0..3 {
                color[ch] += transmittance * ps.alpha * ps.color[ch];
            }
            transmittance *= 1.0 - ps.alpha;
            if transmittance < self.cfg.early_stop_transmittance {
                break;
            }
        }
        for ch in 0..3 {
            color[ch] += transmittance * self.cfg.background[ch];
        }
        color
    }
}

/// Renders the sorted alpha-blending reference image.
pub fn render_sorted_ab(scene: &Scene, cam: &Camera, cfg: &RenderConfig) -> Image {
    let ctx = ForwardContext::new(scene, cam, *cfg);
    let mut img = Image::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            img.set(x, y, ctx.sorted_pixel(x, y));
        }
    }
    img
}

/// Renders the stochastic-transparency estimate.
pub fn render_stochastic(scene: &Scene, cam: &Camera, cfg: &RenderConfig) -> Image {
    let ctx = ForwardContext::new(scene, cam, *cfg);
    let mut img = Image::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            img.set(x, y, ctx.render_pixel(x, y));
        }
    }
    img
}
