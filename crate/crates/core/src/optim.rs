//! Adam optimization over Gaussian parameters and the fine-tuning loop.
//!
//! The scene is flattened into one parameter vector with a parallel
//! per-element learning-rate vector, so a single Adam state covers all
//! parameter groups. Non-finite gradient elements are skipped (their Adam
//! state is left untouched) and counted.

use alloc::vec;
use alloc::vec::Vec;

use crate::backward::{path_replay_backward, GradientBuffer, Loss};
use crate::forward::RenderConfig;
use crate::image::Image;
use crate::rng::splitmix64;
use crate::scene::{Camera, Scene};

/// Parameters per Gaussian: 3 position + 3 log-scale + 4 rotation +
/// 1 opacity logit + 48 SH.
pub const PARAMS_PER_GAUSSIAN: usize = 59;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub iterations: u32,
    pub loss: Loss,
    pub lr_position: f64,
    pub lr_opacity: f64,
    pub lr_sh: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            iterations: 100,
            loss: Loss::L1,
            lr_position: 5e-5,
            lr_opacity: 0.05,
            lr_sh: 2.5e-3,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates and step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam step. Elements with non-finite gradients are
/// skipped entirely; returns how many were skipped.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    lrs: &[f64],
    state: &mut AdamState,
    cfg: &OptimConfig,
) -> usize {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), lrs.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - libm::pow(cfg.beta1, state.t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, state.t as f64);
    let mut skipped = 0;
    for i in 0..params.len() {
        let g = grads[i];
        if !g.is_finite() {
            skipped += 1;
            continue;
        }
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lrs[i] * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
    }
    skipped
}

/// Flattens scene parameters in the fixed per-Gaussian layout.
pub fn flatten_scene(scene: &Scene) -> Vec<f64> {
    let mut out = Vec::with_capacity(scene.gaussians.len() * PARAMS_PER_GAUSSIAN);
    for g in &scene.gaussians {
        out.extend_from_slice(g.position.as_slice());
        out.extend_from_slice(g.log_scale.as_slice());
        out.extend_from_slice(g.rotation.as_slice());
        out.push(g.opacity_logit);
        for c in &g.sh_coeffs {
            out.extend_from_slice(c);
        }
    }
    out
}

/// Writes a flat parameter vector back into the scene.
pub fn unflatten_scene(params: &[f64], scene: &mut Scene) {
    assert_eq!(params.len(), scene.gaussians.len() * PARAMS_PER_GAUSSIAN);
    for (g, chunk) in scene.gaussians.iter_mut().zip(params.chunks_exact(PARAMS_PER_GAUSSIAN)) {
        g.position.copy_from_slice(&chunk[0..3]);
        g.log_scale.copy_from_slice(&chunk[3..6]);
        g.rotation.copy_from_slice(&chunk[6..10]);
        g.opacity_logit = chunk[10];
        for (k, c) in g.sh_coeffs.iter_mut().enumerate() {
            c.copy_from_slice(&chunk[11 + 3 * k..14 + 3 * k]);
        }
    }
}

/// Flattens a gradient buffer in the same layout as [`flatten_scene`].
pub fn flatten_grads(grads: &GradientBuffer) -> Vec<f64> {
    let mut out = Vec::with_capacity(grads.len() * PARAMS_PER_GAUSSIAN);
    for i in 0..grads.len() {
        out.extend_from_slice(grads.d_position[i].as_slice());
        out.extend_from_slice(grads.d_log_scale[i].as_slice());
        out.extend_from_slice(grads.d_rotation[i].as_slice());
        out.push(grads.d_opacity_logit[i]);
        for c in &grads.d_sh[i] {
            out.extend_from_slice(c);
        }
    }
    out
}

/// Per-element learning rates matching the flat layout.
pub fn learning_rates(n_gaussians: usize, cfg: &OptimConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_gaussians * PARAMS_PER_GAUSSIAN);
    for _ in 0..n_gaussians {
        out.extend_from_slice(&[cfg.lr_position; 3]);
        out.extend_from_slice(&[cfg.lr_scale; 3]);
        out.extend_from_slice(&[cfg.lr_rotation; 4]);
        out.push(cfg.lr_opacity);
        out.extend_from_slice(&[cfg.lr_sh; 48]);
    }
    out
}

/// Outcome of a fine-tuning run.
pub struct FinetuneReport {
    /// First-pass loss per iteration, in order.
    pub losses: Vec<f64>,
    /// Total gradient elements skipped for being non-finite.
    pub skipped_grads: usize,
}

/// Fine-tunes the scene against posed target images, visiting views
/// round-robin. Each iteration runs one path-replay backward pass with a
/// fresh sampling seed and one Adam step over all parameters.
pub fn finetune(
    scene: &mut Scene,
    views: &[(Camera, Image)],
    opt: &OptimConfig,
    render: &RenderConfig,
) -> FinetuneReport {
    assert!(!views.is_empty(), "finetune needs at least one view");
    let mut params = flatten_scene(scene);
    let lrs = learning_rates(scene.gaussians.len(), opt);
    let mut state = AdamState::new(params.len());
    let mut losses = Vec::with_capacity(opt.iterations as usize);
    let mut skipped = 0;
    for it in 0..opt.iterations {
        let (cam, target) = &views[(it as usize) % views.len()];
        let mut cfg = *render;
        cfg.pass_seed = splitmix64(render.pass_seed ^ (it as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let result = path_replay_backward(scene, cam, &cfg, target, opt.loss);
        losses.push(result.loss);
        let grads = flatten_grads(&result.grads);
        skipped += adam_step(&mut params, &grads, &lrs, &mut state, opt);
        unflatten_scene(&params, scene);
    }
    FinetuneReport { losses, skipped_grads: skipped }
}
