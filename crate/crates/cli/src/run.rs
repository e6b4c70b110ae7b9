//! Subcommand implementations and shared rendering helpers.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;
use stochsplat_core::backward::{
    analytic_backward, gradient_image, gradient_image_analytic, loss_grad, loss_value,
    path_replay_backward, GradAxis, Loss,
};
use stochsplat_core::forward::{render_sorted_ab, DepthMode, ForwardContext, RenderConfig};
use stochsplat_core::math::{Mat3, Vec3, Vec4};
use stochsplat_core::metrics;
use stochsplat_core::optim::{finetune, OptimConfig};
use stochsplat_core::rng::splitmix64;
use stochsplat_core::scene::{Camera, Gaussian3D, Scene, SH_C0};
use stochsplat_core::taa::{default_tau, render_frame_with_positions, taa_accumulate, TaaState};
use stochsplat_core::Image;

use crate::io::{
    self, load_cameras, load_ply, read_pfm, save_ply, write_image, CameraRecord, ImageFormat,
};
use crate::opts::{
    self, parse_list, resolve, BenchArgs, FinetuneArgs, GradcheckArgs, PopcheckArgs, RenderArgs,
    Resolved, TaaArgs,
};

/// Renders one view, rows in parallel. The stochastic and sorted paths share
/// projection and binning, so they estimate the same blending sum.
pub fn render_image(scene: &Scene, cam: &Camera, cfg: &RenderConfig, sorted: bool) -> Image {
    let ctx = ForwardContext::new(scene, cam, *cfg);
    let mut img = Image::new(cam.width, cam.height);
    let width = cam.width as usize;
    img.pixels_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                *px = if sorted {
                    ctx.sorted_pixel(x as u32, y as u32)
                } else {
                    ctx.render_pixel(x as u32, y as u32)
                };
            }
        });
    img
}

/// Median wall-clock milliseconds over `runs` renders, one warmup excluded.
pub fn time_render(scene: &Scene, cam: &Camera, cfg: &RenderConfig, sorted: bool, runs: u32) -> f64 {
    let _ = render_image(scene, cam, cfg, sorted);
    let mut times: Vec<f64> = (0..runs.max(1))
        .map(|_| {
            let t0 = Instant::now();
            let img = render_image(scene, cam, cfg, sorted);
            let dt = t0.elapsed().as_secs_f64() * 1e3;
            assert!(img.is_finite());
            dt
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

/// Rescales a pinhole camera to `scale` times its resolution.
pub fn scale_camera(cam: &Camera, scale: f64) -> Camera {
    let mut out = cam.clone();
    out.width = ((cam.width as f64 * scale).round() as u32).max(1);
    out.height = ((cam.height as f64 * scale).round() as u32).max(1);
    out.fx = cam.fx * scale;
    out.fy = cam.fy * scale;
    out.cx = cam.cx * scale;
    out.cy = cam.cy * scale;
    out
}

fn require<'a, T>(opt: &'a Option<T>, what: &str) -> Result<&'a T, String> {
    opt.as_ref().ok_or(format!("missing required option --{what}"))
}

fn ensure_out(r: &Resolved) -> Result<&Path, String> {
    let out = require(&r.out, "out")?;
    fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    Ok(out)
}

fn emit(report: &mut Vec<String>, value: serde_json::Value) {
    let line = value.to_string();
    println!("{line}");
    report.push(line);
}

fn write_report(out: &Path, name: &str, lines: &[String]) -> Result<(), String> {
    let path = out.join(name);
    let mut f = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    for line in lines {
        writeln!(f, "{line}").map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn depth_mode_name(mode: DepthMode) -> &'static str {
    match mode {
        DepthMode::Mean => "mean",
        DepthMode::Plane => "plane",
        DepthMode::FreeFlight => "freeflight",
    }
}

pub fn cmd_render(args: &RenderArgs) -> Result<i32, String> {
    let r = resolve(&args.shared)?;
    opts::init_threads(r.threads);
    let scene = load_ply(require(&r.scene, "scene")?).map_err(|e| e.to_string())?;
    let cameras = load_cameras(require(&r.cameras, "cameras")?).map_err(|e| e.to_string())?;
    let out = ensure_out(&r)?;

    let mut report = Vec::new();
    for rec in &cameras {
        let cam = rec.to_camera();
        let img = render_image(&scene, &cam, &r.render, r.renderer_sorted);
        let png = out.join(format!("{}.png", rec.id));
        let pfm = out.join(format!("{}.pfm", rec.id));
        write_image(&img, &png, ImageFormat::Png8).map_err(|e| e.to_string())?;
        write_image(&img, &pfm, ImageFormat::Pfm).map_err(|e| e.to_string())?;
        let mut line = json!({
            "id": rec.id,
            "renderer": if r.renderer_sorted { "sorted" } else { "stochastic" },
            "spp": r.render.spp,
            "depth_mode": depth_mode_name(r.render.depth_mode),
            "seed": r.render.pass_seed,
            "png": png.display().to_string(),
            "pfm": pfm.display().to_string(),
        });
        if let Some(ref_dir) = &r.reference {
            let ref_img = read_pfm(&ref_dir.join(format!("{}.pfm", rec.id))).map_err(|e| e.to_string())?;
            let m = metrics::report(&img, &ref_img);
            line["mse"] = json!(m.mse);
            line["psnr"] = json!(m.psnr);
            line["ssim"] = json!(m.ssim);
        }
        emit(&mut report, line);
    }
    write_report(out, "report.jsonl", &report)?;
    Ok(0)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32, String> {
    let r = resolve(&args.shared)?;
    opts::init_threads(r.threads);
    let scene = load_ply(require(&r.scene, "scene")?).map_err(|e| e.to_string())?;
    let base_cam = match &r.cameras {
        Some(path) => load_cameras(path)
            .map_err(|e| e.to_string())?
            .first()
            .ok_or("camera set is empty")?
            .to_camera(),
        None => default_camera(&scene, 256, 256),
    };
    let spp_list: Vec<u32> = match &args.spp_list {
        Some(t) => parse_list(t, "spp")?,
        None => vec![1, 2, 4, 8],
    };
    let res_list: Vec<f64> = match &args.resolution_list {
        Some(t) => parse_list(t, "resolution")?,
        None => vec![1.0, 0.5],
    };
    let tile_list: Vec<u32> = match &args.tile_size_list {
        Some(t) => parse_list(t, "tile size")?,
        None => vec![r.render.tile_size],
    };
    let runs = args.runs.unwrap_or(10);

    let mut csv = vec!["renderer,spp,width,height,tile_size,median_ms".to_string()];
    for &scale in &res_list {
        let cam = scale_camera(&base_cam, scale);
        for &tile in &tile_list {
            let mut cfg = r.render;
            cfg.tile_size = tile;
            // sorted reference once per (resolution, tile); spp is irrelevant
            let ms = time_render(&scene, &cam, &cfg, true, runs);
            csv.push(format!("sorted,0,{},{},{tile},{ms:.4}", cam.width, cam.height));
            for &spp in &spp_list {
                cfg.spp = spp;
                let ms = time_render(&scene, &cam, &cfg, false, runs);
                csv.push(format!("stochastic,{spp},{},{},{tile},{ms:.4}", cam.width, cam.height));
            }
        }
    }
    for line in &csv {
        println!("{line}");
    }
    if let Some(out) = &r.out {
        fs::create_dir_all(out).map_err(|e| e.to_string())?;
        write_report(out, "bench.csv", &csv)?;
    }
    Ok(0)
}

pub fn cmd_finetune(args: &FinetuneArgs) -> Result<i32, String> {
    let mut shared = args.shared.clone();
    if shared.spp.is_none() {
        shared.spp = Some(128);
    }
    let r = resolve(&shared)?;
    opts::init_threads(r.threads);
    let mut scene = load_ply(require(&r.scene, "scene")?).map_err(|e| e.to_string())?;
    let camera_path = require(&r.cameras, "cameras")?;
    let records = load_cameras(camera_path).map_err(|e| e.to_string())?;
    let out = ensure_out(&r)?;
    let base_dir = camera_path.parent().unwrap_or(Path::new("."));

    let mut views = Vec::new();
    for rec in &records {
        let image_path = rec
            .image_path
            .as_ref()
            .ok_or(format!("camera {} has no image_path target", rec.id))?;
        let full = base_dir.join(image_path);
        let target = read_pfm(&full).map_err(|e| e.to_string())?;
        let cam = rec.to_camera();
        if target.width != cam.width || target.height != cam.height {
            return Err(format!("camera {}: target size mismatch", rec.id));
        }
        views.push((cam, target));
    }

    let loss = match args.loss.as_deref().or(r.config.get("loss")).unwrap_or("l1") {
        "l1" | "L1" => Loss::L1,
        "l2" | "L2" => Loss::L2,
        other => return Err(format!("unknown loss `{other}` (l1|l2)")),
    };
    let opt = OptimConfig {
        iterations: args
            .iterations
            .or(r.config.get("iterations").and_then(|v| v.parse().ok()))
            .unwrap_or(500),
        loss,
        ..OptimConfig::default()
    };
    let checkpoint_every = args.checkpoint_every.unwrap_or(0);

    let mut report = Vec::new();
    let mut losses = Vec::new();
    let mut skipped = 0;
    // run in checkpoint-sized chunks so intermediate scenes can be saved
    let chunk = if checkpoint_every == 0 { opt.iterations } else { checkpoint_every };
    let mut done = 0;
    while done < opt.iterations {
        let n = chunk.min(opt.iterations - done);
        let mut part = opt;
        part.iterations = n;
        let mut cfg = r.render;
        cfg.pass_seed = splitmix64(r.render.pass_seed ^ done as u64);
        let rep = finetune(&mut scene, &views, &part, &cfg);
        for (i, l) in rep.losses.iter().enumerate() {
            emit(&mut report, json!({"iteration": done + i as u32, "loss": l}));
            losses.push(*l);
        }
        skipped += rep.skipped_grads;
        done += n;
        if checkpoint_every > 0 && done < opt.iterations {
            save_ply(&scene, &out.join(format!("checkpoint_{done}.ply"))).map_err(|e| e.to_string())?;
        }
    }
    save_ply(&scene, &out.join("scene.ply")).map_err(|e| e.to_string())?;
    emit(
        &mut report,
        json!({
            "final_loss": losses.last(),
            "initial_loss": losses.first(),
            "skipped_gradients": skipped,
        }),
    );
    write_report(out, "finetune.jsonl", &report)?;
    Ok(0)
}

/// Deterministic scene of overlapping blobs for self-contained checks.
pub fn random_blob_scene(n: usize, seed: u64) -> Scene {
    let mut state = splitmix64(seed ^ 0xB10B);
    let mut unit = || {
        state = splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let gaussians = (0..n)
        .map(|_| {
            let color = [unit(), unit(), unit()];
            let mut sh = [[0.0; 3]; 16];
            for ch in 0..3 {
                sh[0][ch] = (color[ch] - 0.5) / SH_C0;
            }
            Gaussian3D {
                position: Vec3::new(unit() * 2.0 - 1.0, unit() * 2.0 - 1.0, 3.0 + unit() * 6.0),
                log_scale: Vec3::new(
                    -1.5 + unit(),
                    -1.5 + unit(),
                    -1.5 + unit(),
                ),
                rotation: Vec4::new(unit() * 2.0 - 1.0, unit() * 2.0 - 1.0, unit() * 2.0 - 1.0, unit() * 2.0 - 1.0),
                opacity_logit: unit() * 3.0 - 0.5,
                sh_coeffs: sh,
            }
        })
        .collect();
    Scene { gaussians, sh_degree: 0 }
}

/// A camera at the origin looking down +z.
pub fn default_camera(scene: &Scene, width: u32, height: u32) -> Camera {
    let _ = scene;
    Camera {
        width,
        height,
        fx: width as f64,
        fy: width as f64,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        rotation: Mat3::identity(),
        translation: Vec3::zeros(),
        near: 0.01,
        far: 1000.0,
    }
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32, String> {
    let mut shared = args.shared.clone();
    if shared.spp.is_none() {
        shared.spp = Some(16384);
    }
    let r = resolve(&shared)?;
    opts::init_threads(r.threads);
    let scene = match &r.scene {
        Some(path) => load_ply(path).map_err(|e| e.to_string())?,
        None => random_blob_scene(4, 77),
    };
    let cam = default_camera(&scene, 16, 16);
    let mut cfg = r.render;
    cfg.early_stop_transmittance = 0.0;
    if cfg.depth_mode == DepthMode::FreeFlight {
        return Err("gradcheck requires depth mode mean or plane".into());
    }
    let target = Image::filled(16, 16, [0.35, 0.45, 0.55]);

    let mut report = Vec::new();
    let mut pass = true;

    // analytic gradients vs central finite differences of the sorted loss
    let rendered = render_sorted_ab(&scene, &cam, &cfg);
    let dldc = loss_grad(&rendered, &target, Loss::L2);
    let exact = analytic_backward(&scene, &cam, &cfg, &dldc);
    let h = 1e-6;
    let fd_of = |mutator: &dyn Fn(&mut Scene, f64)| {
        let mut sp = scene.clone();
        mutator(&mut sp, h);
        let lp = loss_value(&render_sorted_ab(&sp, &cam, &cfg), &target, Loss::L2);
        let mut sm = scene.clone();
        mutator(&mut sm, -h);
        let lm = loss_value(&render_sorted_ab(&sm, &cam, &cfg), &target, Loss::L2);
        (lp - lm) / (2.0 * h)
    };
    let mut fd_max_rel: f64 = 0.0;
    for gi in 0..scene.gaussians.len() {
        let checks: Vec<(&str, f64, Box<dyn Fn(&mut Scene, f64)>)> = vec![
            ("position_x", exact.d_position[gi].x, Box::new(move |s, d| s.gaussians[gi].position.x += d)),
            ("opacity", exact.d_opacity_logit[gi], Box::new(move |s, d| s.gaussians[gi].opacity_logit += d)),
            ("scale_y", exact.d_log_scale[gi].y, Box::new(move |s, d| s.gaussians[gi].log_scale.y += d)),
            ("rotation_w", exact.d_rotation[gi].x, Box::new(move |s, d| s.gaussians[gi].rotation.x += d)),
            ("sh_dc_r", exact.d_sh[gi][0][0], Box::new(move |s, d| s.gaussians[gi].sh_coeffs[0][0] += d)),
        ];
        for (name, got, mutator) in checks {
            let fd = fd_of(mutator.as_ref());
            let rel = (got - fd).abs() / fd.abs().max(1e-9);
            fd_max_rel = fd_max_rel.max(rel);
            if rel > 1e-2 {
                pass = false;
            }
            emit(&mut report, json!({"check": "analytic_vs_fd", "gaussian": gi, "param": name, "analytic": got, "fd": fd, "rel_error": rel}));
        }
    }

    // stochastic path-replay gradients vs the analytic reference
    let sto = path_replay_backward(&scene, &cam, &cfg, &target, Loss::L2);
    let group_err = |a: &[f64], b: &[f64]| -> f64 {
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        d / nb.max(1e-12)
    };
    let n = scene.gaussians.len();
    let pos_err = group_err(
        &(0..n).flat_map(|i| sto.grads.d_position[i].iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
        &(0..n).flat_map(|i| exact.d_position[i].iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
    );
    let op_err = group_err(
        &(0..n).map(|i| sto.grads.d_opacity_logit[i]).collect::<Vec<_>>(),
        &(0..n).map(|i| exact.d_opacity_logit[i]).collect::<Vec<_>>(),
    );
    let sh_err = group_err(
        &(0..n).flat_map(|i| sto.grads.d_sh[i][0]).collect::<Vec<_>>(),
        &(0..n).flat_map(|i| exact.d_sh[i][0]).collect::<Vec<_>>(),
    );
    if pos_err > 0.05 || op_err > 0.02 || sh_err > 0.02 {
        pass = false;
    }
    emit(&mut report, json!({
        "check": "stochastic_vs_analytic",
        "spp": cfg.spp,
        "position_rel_error": pos_err,
        "opacity_rel_error": op_err,
        "sh_dc_rel_error": sh_err,
    }));

    // gradient images (positional-x sensitivity per pixel)
    if let Some(out) = &r.out {
        fs::create_dir_all(out).map_err(|e| e.to_string())?;
        let sto_img = gradient_image(&scene, &cam, &cfg, GradAxis::X);
        let ana_img = gradient_image_analytic(&scene, &cam, &cfg, GradAxis::X);
        for (img, name) in [(&sto_img, "grad_stochastic"), (&ana_img, "grad_analytic")] {
            let peak = img
                .pixels()
                .iter()
                .map(|p| p[0].abs())
                .fold(0.0f64, f64::max)
                .max(1e-12);
            let mut vis = Image::new(16, 16);
            for y in 0..16 {
                for x in 0..16 {
                    let v = 0.5 + 0.5 * img.get(x, y)[0] / peak;
                    vis.set(x, y, [v, v, v]);
                }
            }
            write_image(&vis, &out.join(format!("{name}.png")), ImageFormat::Png8)
                .map_err(|e| e.to_string())?;
        }
        write_report(out, "gradcheck.jsonl", &report)?;
    }
    emit(&mut report, json!({"check": "summary", "pass": pass, "fd_max_rel_error": fd_max_rel}));
    Ok(if pass { 0 } else { 1 })
}

/// Two thin anisotropic Gaussians crossing in depth: a small camera
/// rotation about y flips their mean-depth order.
pub fn crossing_scene() -> Scene {
    let thin = Vec3::new(0.5, -2.0, -3.5);
    // long axis rotated +-45 degrees about y
    let q = |beta: f64| Vec4::new((beta / 2.0).cos(), 0.0, (beta / 2.0).sin(), 0.0);
    let color = |c: [f64; 3]| {
        let mut sh = [[0.0; 3]; 16];
        for ch in 0..3 {
            sh[0][ch] = (c[ch] - 0.5) / SH_C0;
        }
        sh
    };
    let a = Gaussian3D {
        position: Vec3::new(-0.4, 0.0, 5.0),
        log_scale: thin,
        rotation: q(-core::f64::consts::FRAC_PI_4),
        opacity_logit: 2.5,
        sh_coeffs: color([0.9, 0.15, 0.1]),
    };
    let b = Gaussian3D {
        position: Vec3::new(0.4, 0.0, 5.0),
        log_scale: thin,
        rotation: q(core::f64::consts::FRAC_PI_4),
        opacity_logit: 2.5,
        sh_coeffs: color([0.1, 0.2, 0.9]),
    };
    Scene { gaussians: vec![a, b], sh_degree: 0 }
}

/// Camera rotated by `angle` radians about the y axis, pivoting in place.
pub fn rotated_camera(base: &Camera, angle: f64) -> Camera {
    let (s, c) = angle.sin_cos();
    let rot_y = Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
    let mut cam = base.clone();
    cam.rotation = rot_y * base.rotation;
    cam
}

/// Converged (expected-value) frame with box-filter antialiasing: the
/// sorted reference averaged over a subpixel offset grid. Antialiasing
/// keeps a moving hard edge from registering as a full-contrast per-pixel
/// jump between nearby camera poses.
pub fn converged_frame(scene: &Scene, cam: &Camera, cfg: &RenderConfig, grid: u32) -> Image {
    let mut acc = Image::new(cam.width, cam.height);
    for sy in 0..grid {
        for sx in 0..grid {
            let mut sub = cam.clone();
            sub.cx = cam.cx - ((sx as f64 + 0.5) / grid as f64 - 0.5);
            sub.cy = cam.cy - ((sy as f64 + 0.5) / grid as f64 - 0.5);
            let img = render_image(scene, &sub, cfg, true);
            for (a, p) in acc.pixels_mut().iter_mut().zip(img.pixels()) {
                for ch in 0..3 {
                    a[ch] += p[ch];
                }
            }
        }
    }
    let inv = 1.0 / (grid * grid) as f64;
    for p in acc.pixels_mut() {
        for ch in 0..3 {
            p[ch] *= inv;
        }
    }
    acc
}

fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    let mut m = 0.0f64;
    for (pa, pb) in a.pixels().iter().zip(b.pixels()) {
        for ch in 0..3 {
            m = m.max((pa[ch] - pb[ch]).abs());
        }
    }
    m
}

pub fn cmd_popcheck(args: &PopcheckArgs) -> Result<i32, String> {
    let r = resolve(&args.shared)?;
    opts::init_threads(r.threads);
    let scene = match &r.scene {
        Some(path) => load_ply(path).map_err(|e| e.to_string())?,
        None => crossing_scene(),
    };
    let base = default_camera(&scene, 64, 64);
    let steps = args.rotation_sweep.unwrap_or(8).max(1);
    let max_angle = args.max_angle.unwrap_or(0.05).to_radians();
    let delta = max_angle / steps as f64;
    let mut cfg = r.render;
    cfg.early_stop_transmittance = 0.0;
    let grid = 6;

    let mut report = Vec::new();
    let mut discontinuity = [0.0f64; 2];
    let mut flip_pair: Vec<(Image, Image)> = Vec::new();
    for (mi, mode) in [DepthMode::Mean, DepthMode::Plane].into_iter().enumerate() {
        cfg.depth_mode = mode;
        // converged images across the sweep; the mean-depth order flip
        // sits exactly between the two central angles
        let angles: Vec<f64> = (0..=2 * steps)
            .map(|i| -max_angle + i as f64 / steps as f64 * max_angle)
            .collect();
        let images: Vec<Image> = angles
            .iter()
            .map(|&a| converged_frame(&scene, &rotated_camera(&base, a), &cfg, grid))
            .collect();
        let sweep_max = images
            .windows(2)
            .map(|pair| max_abs_diff(&pair[0], &pair[1]))
            .fold(0.0f64, f64::max);
        // discontinuity across the flip: the pair straddling zero rotation
        let before = &images[steps as usize - 1];
        let after = &images[steps as usize + 1];
        let flip_disc = max_abs_diff(before, after);
        discontinuity[mi] = flip_disc;
        flip_pair.push((before.clone(), after.clone()));
        emit(&mut report, json!({
            "mode": depth_mode_name(mode),
            "flip_discontinuity": flip_disc,
            "sweep_max_step": sweep_max,
            "sweep_steps": 2 * steps + 1,
            "max_angle_rad": max_angle,
            "flip_pair_separation_rad": 2.0 * delta,
        }));
    }
    let ratio = discontinuity[1] / discontinuity[0].max(1e-12);
    let pass = ratio <= 0.1;
    emit(&mut report, json!({"plane_to_mean_ratio": ratio, "pass": pass}));

    if let Some(out) = &r.out {
        fs::create_dir_all(out).map_err(|e| e.to_string())?;
        for (name, (a, b)) in ["mean", "plane"].iter().zip(&flip_pair) {
            let mut diff = Image::new(a.width, a.height);
            for y in 0..a.height {
                for x in 0..a.width {
                    let pa = a.get(x, y);
                    let pb = b.get(x, y);
                    let d = (0..3).map(|c| (pa[c] - pb[c]).abs()).fold(0.0f64, f64::max);
                    diff.set(x, y, [d, d, d]);
                }
            }
            write_image(&diff, &out.join(format!("pop_diff_{name}.png")), ImageFormat::Png8)
                .map_err(|e| e.to_string())?;
        }
        write_report(out, "popcheck.jsonl", &report)?;
    }
    Ok(if pass { 0 } else { 1 })
}

pub fn cmd_taa(args: &TaaArgs) -> Result<i32, String> {
    let mut shared = args.shared.clone();
    if shared.spp.is_none() {
        shared.spp = Some(1);
    }
    let r = resolve(&shared)?;
    opts::init_threads(r.threads);
    let scene = load_ply(require(&r.scene, "scene")?).map_err(|e| e.to_string())?;
    let records = load_cameras(require(&r.cameras, "cameras")?).map_err(|e| e.to_string())?;
    let out = ensure_out(&r)?;
    if records.is_empty() {
        return Err("camera path is empty".into());
    }
    let tau = args.tau.unwrap_or_else(|| default_tau(&scene));
    let reference_spp = args.reference_spp.unwrap_or(1024);

    let first = records[0].to_camera();
    let mut state = TaaState::new(first.width, first.height, tau);
    let mut report = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let cam = rec.to_camera();
        let mut cfg = r.render;
        cfg.pass_seed = splitmix64(r.render.pass_seed ^ (i as u64) << 17);
        let ctx = ForwardContext::new(&scene, &cam, cfg);
        let (frame, positions) = render_frame_with_positions(&ctx);
        taa_accumulate(&mut state, &frame, &positions, &cam);

        let mut ref_cfg = cfg;
        ref_cfg.spp = reference_spp;
        ref_cfg.pass_seed = splitmix64(cfg.pass_seed ^ 0x5EF5);
        let reference = render_image(&scene, &cam, &ref_cfg, false);
        let mse_raw = metrics::mse(&frame, &reference);
        let mse_taa = metrics::mse(&state.accum_color, &reference);
        write_image(&frame, &out.join(format!("raw_{i:04}.png")), ImageFormat::Png8)
            .map_err(|e| e.to_string())?;
        write_image(&state.accum_color, &out.join(format!("taa_{i:04}.png")), ImageFormat::Png8)
            .map_err(|e| e.to_string())?;
        emit(&mut report, json!({
            "frame": i,
            "id": rec.id,
            "mse_raw": mse_raw,
            "mse_taa": mse_taa,
            "tau": tau,
        }));
    }
    write_report(out, "taa.jsonl", &report)?;
    Ok(0)
}

/// Camera records for a small orbit around the z axis at fixed radius,
/// looking at `center` (helper for the taa subcommand's path files).
pub fn orbit_records(
    center: Vec3,
    radius: f64,
    frames: u32,
    arc: f64,
    width: u32,
    height: u32,
) -> Vec<CameraRecord> {
    (0..frames)
        .map(|i| {
            let theta = if frames > 1 { arc * i as f64 / (frames - 1) as f64 } else { 0.0 };
            let eye = center + radius * Vec3::new(theta.sin(), 0.0, -theta.cos());
            // look-at rotation: camera z toward the center
            let fwd = (center - eye).normalize();
            let up = Vec3::new(0.0, 1.0, 0.0);
            let right = up.cross(&fwd).normalize();
            let down = fwd.cross(&right);
            let rot = Mat3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
            let cam = Camera {
                width,
                height,
                fx: width as f64,
                fy: width as f64,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
                rotation: rot,
                translation: -(rot * eye),
                near: 0.01,
                far: 1000.0,
            };
            CameraRecord::from_camera(&format!("frame_{i:04}"), &cam)
        })
        .collect()
}

pub use io::save_cameras as save_camera_records;
