//! Temporal accumulation with depth-based reprojection and occlusion reset.
//!
//! The accumulator keeps a per-pixel running mean of color and of the
//! world-space position of the selected samples. For each new frame the
//! stored positions are forward-projected into the new view; where the
//! warped and freshly rendered positions agree within `tau` the running
//! means continue, otherwise the pixel is reset to the new frame.

use alloc::vec;
use alloc::vec::Vec;

use crate::forward::ForwardContext;
use crate::image::Image;
use crate::math::Vec3;
use crate::scene::Camera;

#[derive(Debug, Clone)]
pub struct TaaState {
    /// Running per-pixel color mean.
    pub accum_color: Image,
    /// Samples accumulated per pixel since the last reset.
    pub accum_count: Vec<u32>,
    /// Running mean of selected-sample world positions; `None` where only
    /// background has been seen.
    pub world_pos: Vec<Option<Vec3>>,
    /// World-units occlusion threshold.
    pub tau: f64,
}

/// Result of warping the accumulated state into a new view.
pub struct Reprojection {
    pub color: Vec<[f64; 3]>,
    pub pos: Vec<Option<Vec3>>,
    pub count: Vec<u32>,
    /// False where no stored pixel projected onto this target pixel.
    pub valid: Vec<bool>,
}

impl TaaState {
    pub fn new(width: u32, height: u32, tau: f64) -> Self {
        let n = (width * height) as usize;
        TaaState {
            accum_color: Image::new(width, height),
            accum_count: vec![0; n],
            world_pos: vec![None; n],
            tau,
        }
    }
}

/// Forward-projects the stored per-pixel world positions into `new_cam`
/// (splat to nearest pixel, nearest depth wins). Pixels receiving no
/// projection are invalid.
pub fn reproject(state: &TaaState, new_cam: &Camera) -> Reprojection {
    let w = state.accum_color.width;
    let h = state.accum_color.height;
    let n = (w * h) as usize;
    let mut out = Reprojection {
        color: vec![[0.0; 3]; n],
        pos: vec![None; n],
        count: vec![0; n],
        valid: vec![false; n],
    };
    let mut depth = vec![f64::INFINITY; n];
    for y in 0..h {
        for x in 0..w {
            let src = (y * w + x) as usize;
            let Some(p) = state.world_pos[src] else { continue };
            if state.accum_count[src] == 0 {
                continue;
            }
            let pc = new_cam.world_to_camera(&p);
            if !(pc.z >= new_cam.near && pc.z <= new_cam.far) {
                continue;
            }
            let (px, py) = new_cam.project(&pc);
            if px < 0.0 || py < 0.0 || px >= w as f64 || py >= h as f64 {
                continue;
            }
            let dst = (py as u32 * w + px as u32) as usize;
            if pc.z < depth[dst] {
                depth[dst] = pc.z;
                out.color[dst] = state.accum_color.get(x, y);
                out.pos[dst] = Some(p);
                out.count[dst] = state.accum_count[src];
                out.valid[dst] = true;
            }
        }
    }
    out
}

/// Folds one new frame into the accumulator. `new_positions` holds the
/// world-space point of the selected sample per pixel (`None` for
/// background). A pixel blends when the warped and new positions agree:
/// strictly closer than `tau` when both are present, trivially (distance
/// zero) when both are background. Otherwise it resets to the new frame.
pub fn taa_accumulate(
    state: &mut TaaState,
    new_frame: &Image,
    new_positions: &[Option<Vec3>],
    new_cam: &Camera,
) {
    let w = state.accum_color.width;
    let h = state.accum_color.height;
    assert!(
        new_frame.width == w && new_frame.height == h,
        "frame size mismatch"
    );
    assert_eq!(new_positions.len(), (w * h) as usize);

    let warped = reproject(state, new_cam);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let c_new = new_frame.get(x, y);
            let p_new = new_positions[i];
            let matched = if warped.valid[i] {
                match (warped.pos[i], p_new) {
                    (Some(a), Some(b)) => (a - b).norm() < state.tau,
                    (None, None) => 0.0 < state.tau,
                    _ => false,
                }
            } else {
                // also covers the both-background case for an uninitialized
                // or never-hit accumulator pixel
                state.accum_count[i] > 0 && warped.pos[i].is_none() && p_new.is_none() && 0.0 < state.tau
            };
            if matched && warped.count[i] > 0 {
                let n = warped.count[i] as f64;
                let c_old = warped.color[i];
                let mut blended = [0.0; 3];
                for ch in 0..3 {
                    blended[ch] = n / (n + 1.0) * c_old[ch] + 1.0 / (n + 1.0) * c_new[ch];
                }
                state.accum_color.set(x, y, blended);
                state.accum_count[i] = warped.count[i] + 1;
                state.world_pos[i] = match (warped.pos[i], p_new) {
                    (Some(a), Some(b)) => Some(n / (n + 1.0) * a + 1.0 / (n + 1.0) * b),
                    (Some(a), None) => Some(a),
                    (None, p) => p,
                };
            } else if matched && state.accum_count[i] > 0 {
                // both-background blend without a warped surface
                let n = state.accum_count[i] as f64;
                let c_old = state.accum_color.get(x, y);
                let mut blended = [0.0; 3];
                for ch in 0..3 {
                    blended[ch] = n / (n + 1.0) * c_old[ch] + 1.0 / (n + 1.0) * c_new[ch];
                }
                state.accum_color.set(x, y, blended);
                state.accum_count[i] += 1;
            } else {
                state.accum_color.set(x, y, c_new);
                state.accum_count[i] = 1;
                state.world_pos[i] = p_new;
            }
        }
    }
}

/// Renders one stochastic frame and the per-pixel world position of the
/// first sample's winner (ray point at the resolved depth).
pub fn render_frame_with_positions(ctx: &ForwardContext<'_>) -> (Image, Vec<Option<Vec3>>) {
    let cam = ctx.cam;
    let mut img = Image::new(cam.width, cam.height);
    let mut positions = vec![None; (cam.width * cam.height) as usize];
    let origin = cam.center();
    for y in 0..cam.height {
        for x in 0..cam.width {
            img.set(x, y, ctx.render_pixel(x, y));
            let first = ctx.sample_pixel(x, y, 0);
            if first.selected.is_some() {
                let px = x as f64 + 0.5;
                let py = y as f64 + 0.5;
                let t = first.z / cam.ray_dir_cam_z(px, py);
                positions[(y * cam.width + x) as usize] =
                    Some(origin + t * cam.pixel_ray_dir(px, py));
            }
        }
    }
    (img, positions)
}

/// Default occlusion threshold: 0.5% of the scene bounding diagonal.
pub fn default_tau(scene: &crate::scene::Scene) -> f64 {
    0.005 * scene.bounding_diagonal()
}
