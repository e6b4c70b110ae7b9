//! Acceptance suite: one test per release criterion, each printing a single
//! PASS/FAIL line. Tests share a lock so wall-clock budgets are honest on a
//! machine that runs the harness threads concurrently.

use std::sync::Mutex;
use std::time::Instant;

use stochsplat::run::{
    converged_frame, crossing_scene, default_camera, random_blob_scene, render_image,
    rotated_camera, time_render,
};
use stochsplat_core::backward::{
    loss_value, path_replay_backward, path_replay_backward_opts, Loss,
};
use stochsplat_core::forward::{pmf_exact, render_sorted_ab, DepthMode, ForwardContext, RenderConfig};
use stochsplat_core::freeflight::{
    line_integral_params, optical_depth, sample_free_flight, sigma_t_from_alpha,
    total_optical_depth, Ray,
};
use stochsplat_core::math::{Vec3, Vec4};
use stochsplat_core::metrics;
use stochsplat_core::optim::{finetune, OptimConfig};
use stochsplat_core::rng::splitmix64;
use stochsplat_core::scene::{Gaussian3D, Scene, SH_C0};
use stochsplat_core::taa::{render_frame_with_positions, taa_accumulate, TaaState};
use stochsplat_core::Image;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(number: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {number} ({name}): {} [{detail}]",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number} ({name}) failed: {detail}");
}

/// Deterministic uniform stream in [0, 1).
struct Uniform {
    state: u64,
}

impl Uniform {
    fn new(seed: u64) -> Self {
        Uniform { state: splitmix64(seed) }
    }
    fn next(&mut self) -> f64 {
        self.state = splitmix64(self.state);
        (self.state >> 11) as f64 / (1u64 << 53) as f64
    }
    fn normal(&mut self) -> f64 {
        // Box-Muller; one draw per call is enough here
        let u1 = self.next().max(1e-300);
        let u2 = self.next();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn solid_sh(color: [f64; 3]) -> [[f64; 3]; 16] {
    let mut sh = [[0.0; 3]; 16];
    for ch in 0..3 {
        sh[0][ch] = (color[ch] - 0.5) / SH_C0;
    }
    sh
}

fn logit(op: f64) -> f64 {
    (op / (1.0 - op)).ln()
}

fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .fold(0.0, f64::max)
}

fn bits_equal(a: &Image, b: &Image) -> bool {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .all(|(p, q)| (0..3).all(|c| p[c].to_bits() == q[c].to_bits()))
}

#[test]
fn criterion_01_estimator_unbiasedness() {
    let _guard = serial();
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for seed in [11u64, 22, 33, 44, 55] {
        let scene = random_blob_scene(8, seed);
        let cam = default_camera(&scene, 32, 32);
        for mode in [DepthMode::Mean, DepthMode::Plane] {
            let mut cfg = RenderConfig::default();
            cfg.depth_mode = mode;
            cfg.early_stop_transmittance = 0.0;
            cfg.pass_seed = splitmix64(seed);
            let reference = render_image(&scene, &cam, &cfg, true);
            cfg.spp = 1 << 17;
            let mc = render_image(&scene, &cam, &cfg, false);
            worst = worst.max(max_abs_diff(&mc, &reference));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst <= 5e-3 && secs < 120.0;
    report(
        1,
        "estimator unbiasedness",
        pass,
        &format!("max |mc - reference| = {worst:.2e} over 5 scenes x 2 depth modes at 2^17 spp, {secs:.1} s"),
    );
}

#[test]
fn criterion_02_selection_pmf_exactness() {
    let _guard = serial();
    let scene = random_blob_scene(6, 7);
    let cam = default_camera(&scene, 32, 32);
    let mut cfg = RenderConfig::default();
    cfg.pass_seed = 0x9A7;
    let ctx = ForwardContext::new(&scene, &cam, cfg);
    // the pixel where selection mass is spread over the most splats
    let spread = |x: u32, y: u32| -> usize {
        let entries: Vec<_> = ctx.pixel_splats(x, y).iter().map(|s| (s.alpha, s.z, s.gaussian_id)).collect();
        pmf_exact(&entries).0.iter().filter(|&&p| p > 0.02).count()
    };
    let (x, y) = (0..32u32)
        .flat_map(|y| (0..32u32).map(move |x| (x, y)))
        .max_by_key(|&(x, y)| spread(x, y))
        .unwrap();
    let list = ctx.pixel_splats(x, y);
    let entries: Vec<(f64, f64, u32)> = list.iter().map(|s| (s.alpha, s.z, s.gaussian_id)).collect();
    let (probs, bg_prob) = pmf_exact(&entries);
    assert!(
        probs.iter().filter(|&&p| p > 0.02).count() >= 3,
        "need a pixel with spread-out selection probabilities"
    );

    let n = 1_000_000u32;
    let mut counts = vec![0u64; list.len() + 1];
    for s in 0..n {
        let out = ctx.sample_pixel_with(&list, x, y, s);
        match out.selected {
            Some(idx) => {
                let k = list.iter().position(|ps| ps.splat_idx == idx).unwrap();
                counts[k] += 1;
            }
            None => counts[list.len()] += 1,
        }
    }
    let mut linf = 0.0f64;
    let mut chi2 = 0.0f64;
    let mut df = 0usize;
    for (k, &c) in counts.iter().enumerate() {
        let p = if k < probs.len() { probs[k] } else { bg_prob };
        let freq = c as f64 / n as f64;
        linf = linf.max((freq - p).abs());
        if p > 1e-9 {
            let expected = p * n as f64;
            chi2 += (c as f64 - expected).powi(2) / expected;
            df += 1;
        }
    }
    let df = (df - 1) as f64;
    // Wilson-Hilferty upper 1% quantile of chi-square with df dof
    let crit = df * (1.0 - 2.0 / (9.0 * df) + 2.326_348 * (2.0 / (9.0 * df)).sqrt()).powi(3);
    let pass = linf <= 2e-3 && chi2 < crit;
    report(
        2,
        "selection pmf exactness",
        pass,
        &format!(
            "{} categories at pixel ({x},{y}), Linf = {linf:.2e} (<= 2e-3), chi2 = {chi2:.2} < {crit:.2} (p > 0.01)",
            counts.len()
        ),
    );
}

#[test]
fn criterion_03_order_independence() {
    let _guard = serial();
    let base = random_blob_scene(10, 5);
    let cam = default_camera(&base, 24, 24);
    let mut cfg = RenderConfig::default();
    cfg.pass_seed = 0x0D7;
    let mut pass = true;
    for spp in [1u32, 4, 16] {
        cfg.spp = spp;
        let reference = render_image(&base, &cam, &cfg, false);
        let mut state = splitmix64(0x5F0 + spp as u64);
        for _ in 0..20 {
            let mut scene = base.clone();
            // Fisher-Yates
            for i in (1..scene.gaussians.len()).rev() {
                state = splitmix64(state);
                let j = (state % (i as u64 + 1)) as usize;
                scene.gaussians.swap(i, j);
            }
            if !bits_equal(&render_image(&scene, &cam, &cfg, false), &reference) {
                pass = false;
            }
        }
    }
    report(
        3,
        "order independence",
        pass,
        "20 random permutations bit-identical at spp 1, 4, 16",
    );
}

#[test]
fn criterion_04_variance_scaling() {
    let _guard = serial();
    let scene = random_blob_scene(8, 17);
    let cam = default_camera(&scene, 32, 32);
    let mut cfg = RenderConfig::default();
    cfg.early_stop_transmittance = 0.0;
    let reference = render_image(&scene, &cam, &cfg, true);
    let repeats = 8u64;
    let mse_at = |k: u32| -> f64 {
        let mut acc = 0.0;
        for r in 0..repeats {
            let mut c = cfg;
            c.spp = k;
            c.pass_seed = splitmix64(0xC4 + r * 131 + k as u64);
            acc += metrics::mse(&render_image(&scene, &cam, &c, false), &reference);
        }
        acc / repeats as f64
    };
    let mse1 = mse_at(1);
    let mut pass = true;
    let mut detail = format!("mse(1) = {mse1:.3e}");
    for k in [2u32, 4, 8, 16] {
        let ratio = mse_at(k) * k as f64 / mse1;
        detail.push_str(&format!(", k={k}: mse*k/mse(1) = {ratio:.3}"));
        if !(1.0 / 1.3..=1.3).contains(&ratio) {
            pass = false;
        }
    }
    report(4, "variance scaling 1/spp", pass, &detail);
}

#[test]
fn criterion_05_gradient_correctness() {
    let _guard = serial();
    // part A: averaged stochastic gradients vs central finite differences of
    // the sorted renderer's loss, grouped relative error
    let scene = random_blob_scene(4, 77);
    let cam = default_camera(&scene, 16, 16);
    let mut cfg = RenderConfig::default();
    cfg.early_stop_transmittance = 0.0;
    cfg.spp = 16_384; // 16 * 16 * 16384 samples, well above 1e5
    let target = Image::filled(16, 16, [0.35, 0.45, 0.55]);

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
    let n = scene.gaussians.len();
    let mut fd_pos = Vec::new();
    let mut fd_op = Vec::new();
    let mut fd_sh = Vec::new();
    for gi in 0..n {
        for ax in 0..3 {
            fd_pos.push(fd_of(&move |s: &mut Scene, d: f64| s.gaussians[gi].position[ax] += d));
        }
        fd_op.push(fd_of(&move |s: &mut Scene, d: f64| s.gaussians[gi].opacity_logit += d));
        for ch in 0..3 {
            fd_sh.push(fd_of(&move |s: &mut Scene, d: f64| s.gaussians[gi].sh_coeffs[0][ch] += d));
        }
    }
    let sto = path_replay_backward(&scene, &cam, &cfg, &target, Loss::L2);
    let sto_pos: Vec<f64> = (0..n).flat_map(|i| [sto.grads.d_position[i].x, sto.grads.d_position[i].y, sto.grads.d_position[i].z]).collect();
    let sto_op: Vec<f64> = (0..n).map(|i| sto.grads.d_opacity_logit[i]).collect();
    let sto_sh: Vec<f64> = (0..n).flat_map(|i| sto.grads.d_sh[i][0]).collect();
    let rel = |a: &[f64], b: &[f64]| -> f64 {
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        d / nb.max(1e-12)
    };
    let (e_pos, e_op, e_sh) = (rel(&sto_pos, &fd_pos), rel(&sto_op, &fd_op), rel(&sto_sh, &fd_sh));
    let pass_a = e_pos <= 0.05 && e_op <= 0.02 && e_sh <= 0.02;

    // part B: single-Gaussian closed-form L2 gradient within 4 standard errors
    let g = Gaussian3D {
        position: Vec3::new(0.0, 0.0, 5.0),
        log_scale: Vec3::new(-0.22, -0.22, -0.22),
        rotation: Vec4::new(1.0, 0.0, 0.0, 0.0),
        opacity_logit: logit(0.7),
        sh_coeffs: solid_sh([0.8, 0.35, 0.6]),
    };
    let single = Scene { gaussians: vec![g], sh_degree: 0 };
    let cam_b = default_camera(&single, 8, 8);
    let mut cfg_b = RenderConfig::default();
    cfg_b.early_stop_transmittance = 0.0;
    cfg_b.spp = 32;
    cfg_b.background = [0.1, 0.15, 0.2];
    let target_b = Image::filled(8, 8, [0.45, 0.4, 0.5]);
    let ctx = ForwardContext::new(&single, &cam_b, cfg_b);
    let op = single.gaussians[0].opacity();
    let color = [0.8, 0.35, 0.6];
    let p_norm = (8 * 8 * 3) as f64;
    let mut closed_sh = [0.0f64; 3];
    let mut closed_logit = 0.0f64;
    for y in 0..8u32 {
        for x in 0..8u32 {
            let list = ctx.pixel_splats(x, y);
            let a = list.first().map_or(0.0, |s| s.alpha);
            let t = target_b.get(x, y);
            for ch in 0..3 {
                let ec = a * color[ch] + (1.0 - a) * cfg_b.background[ch];
                let dldc = 2.0 * (ec - t[ch]) / p_norm;
                closed_sh[ch] += dldc * a * SH_C0;
                closed_logit += dldc * (color[ch] - cfg_b.background[ch]) * a * (1.0 - op);
            }
        }
    }
    let m = 500u64;
    let mut sh_samples = vec![Vec::with_capacity(m as usize); 3];
    let mut logit_samples = Vec::with_capacity(m as usize);
    for r in 0..m {
        let mut c = cfg_b;
        c.pass_seed = splitmix64(0xB0B ^ (r * 0x9E37_79B9));
        let res = path_replay_backward(&single, &cam_b, &c, &target_b, Loss::L2);
        for ch in 0..3 {
            sh_samples[ch].push(res.grads.d_sh[0][0][ch]);
        }
        logit_samples.push(res.grads.d_opacity_logit[0]);
    }
    let mean_se = |v: &[f64]| -> (f64, f64) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (mean, (var / v.len() as f64).sqrt())
    };
    let mut pass_b = true;
    let mut worst_z_b = 0.0f64;
    for ch in 0..3 {
        let (mean, se) = mean_se(&sh_samples[ch]);
        let z = (mean - closed_sh[ch]).abs() / se.max(1e-15);
        worst_z_b = worst_z_b.max(z);
        if z > 4.0 {
            pass_b = false;
        }
    }
    let (mean_l, se_l) = mean_se(&logit_samples);
    let z_l = (mean_l - closed_logit).abs() / se_l.max(1e-15);
    worst_z_b = worst_z_b.max(z_l);
    if z_l > 4.0 {
        pass_b = false;
    }

    // part C: correlated loss-gradient seeding reproduces the predicted
    // variance-term bias on the opacity gradient; decorrelation removes it
    let cam_c = default_camera(&single, 6, 6);
    let mut cfg_c = RenderConfig::default();
    cfg_c.early_stop_transmittance = 0.0;
    cfg_c.spp = 1;
    cfg_c.background = [0.2, 0.1, 0.3];
    let target_c = Image::filled(6, 6, [0.4, 0.5, 0.6]);
    let ctx_c = ForwardContext::new(&single, &cam_c, cfg_c);
    let pc = (6 * 6 * 3) as f64;
    let bg = cfg_c.background;
    let mut exact_grad = 0.0f64; // expectation of the decorrelated estimator
    let mut bias_pred = 0.0f64; // added expectation under a shared seed
    for y in 0..6u32 {
        for x in 0..6u32 {
            let list = ctx_c.pixel_splats(x, y);
            let a = list.first().map_or(0.0, |s| s.alpha);
            let t = target_c.get(x, y);
            for ch in 0..3 {
                let ec = a * color[ch] + (1.0 - a) * bg[ch];
                exact_grad += 2.0 / pc * (ec - t[ch]) * (color[ch] - bg[ch]) * a * (1.0 - op);
                bias_pred += 2.0 * a / pc
                    * (color[ch] - bg[ch])
                    * ((1.0 - a) * color[ch] + a * bg[ch])
                    * (1.0 - op);
            }
        }
    }
    let mc = 30_000u64;
    let mut corr = Vec::with_capacity(mc as usize);
    let mut dec = Vec::with_capacity(mc as usize);
    for r in 0..mc {
        let mut c = cfg_c;
        c.pass_seed = splitmix64(0xC0FE ^ (r * 0x9E37_79B9));
        corr.push(
            path_replay_backward_opts(&single, &cam_c, &c, &target_c, Loss::L2, false)
                .grads
                .d_opacity_logit[0],
        );
        dec.push(
            path_replay_backward_opts(&single, &cam_c, &c, &target_c, Loss::L2, true)
                .grads
                .d_opacity_logit[0],
        );
    }
    let (corr_mean, corr_se) = mean_se(&corr);
    let (dec_mean, dec_se) = mean_se(&dec);
    let z_corr_pred = (corr_mean - (exact_grad + bias_pred)).abs() / corr_se.max(1e-15);
    let z_dec = (dec_mean - exact_grad).abs() / dec_se.max(1e-15);
    let z_bias = (corr_mean - exact_grad).abs() / corr_se.max(1e-15);
    let pass_c = z_corr_pred <= 4.0 && z_dec <= 4.0 && z_bias > 4.0;

    let pass = pass_a && pass_b && pass_c;
    report(
        5,
        "gradient correctness",
        pass,
        &format!(
            "fd rel err pos {e_pos:.3} (<= 0.05) opacity {e_op:.3} sh {e_sh:.3} (<= 0.02); \
             closed-form worst z {worst_z_b:.2} (<= 4); \
             bias demo: corr z {z_corr_pred:.2} dec z {z_dec:.2} separation z {z_bias:.1} (> 4), \
             predicted bias {bias_pred:.3e}"
        ),
    );
}

#[test]
fn criterion_06_free_flight_sampler() {
    let _guard = serial();
    // part A: KS statistic of the analytic inverse-CDF sampler
    let mut rng = Uniform::new(0xFF);
    let mut worst_ks = 0.0f64;
    for set in 0..20u64 {
        let g = Gaussian3D {
            position: Vec3::new(
                rng.next() * 2.0 - 1.0,
                rng.next() * 2.0 - 1.0,
                3.0 + rng.next() * 3.0,
            ),
            log_scale: Vec3::new(
                -1.5 + rng.next() * 2.0,
                -1.5 + rng.next() * 2.0,
                -1.5 + rng.next() * 2.0,
            ),
            rotation: Vec4::new(
                rng.next() * 2.0 - 1.0,
                rng.next() * 2.0 - 1.0,
                rng.next() * 2.0 - 1.0,
                rng.next() * 2.0 - 1.0,
            ),
            opacity_logit: logit(0.2 + rng.next() * 0.75),
            sh_coeffs: solid_sh([0.5, 0.5, 0.5]),
        };
        let origin = Vec3::zeros();
        let jitter = Vec3::new(rng.next() - 0.5, rng.next() - 0.5, rng.next() - 0.5) * 0.4;
        let dir = (g.position + jitter - origin).normalize();
        let ray = Ray { origin, dir };
        let sigma_t = sigma_t_from_alpha(&g, g.opacity(), &origin);
        let p = line_integral_params(&g, &ray, sigma_t);

        let n = 100_000usize;
        let mut draws = Uniform::new(0xD0 + set);
        let mut finite: Vec<f64> = (0..n)
            .filter_map(|_| {
                let t = sample_free_flight(&p, draws.next());
                t.is_finite().then_some(t)
            })
            .collect();
        finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = |t: f64| 1.0 - (-optical_depth(&p, t)).exp();
        let mut ks = 0.0f64;
        for (i, &t) in finite.iter().enumerate() {
            let f = cdf(t);
            ks = ks.max((f - i as f64 / n as f64).abs());
            ks = ks.max((f - (i + 1) as f64 / n as f64).abs());
        }
        let f_max = 1.0 - (-total_optical_depth(&p)).exp();
        ks = ks.max((f_max - finite.len() as f64 / n as f64).abs());
        worst_ks = worst_ks.max(ks);
    }
    let pass_a = worst_ks < 0.01;

    // part B: decomposition-tracking expected color vs quadrature of the
    // mixed volumetric transport along the center pixel ray
    let a = Gaussian3D {
        position: Vec3::new(0.2, 0.0, 4.0),
        log_scale: Vec3::new(-0.51, -0.51, -0.51),
        rotation: Vec4::new(1.0, 0.0, 0.0, 0.0),
        opacity_logit: logit(0.6),
        sh_coeffs: solid_sh([0.85, 0.2, 0.15]),
    };
    let b = Gaussian3D {
        position: Vec3::new(-0.15, 0.0, 5.0),
        log_scale: Vec3::new(-0.22, -0.22, -0.22),
        rotation: Vec4::new(1.0, 0.0, 0.0, 0.0),
        opacity_logit: logit(0.69),
        sh_coeffs: solid_sh([0.15, 0.3, 0.9]),
    };
    let scene = Scene { gaussians: vec![a, b], sh_degree: 0 };
    let cam = default_camera(&scene, 32, 32);
    let mut cfg = RenderConfig::default();
    cfg.depth_mode = DepthMode::FreeFlight;
    cfg.background = [0.05, 0.1, 0.2];
    cfg.spp = 200_000;
    cfg.pass_seed = 0x6B;
    let (x, y) = (16u32, 16u32);
    let origin = cam.center();
    let dir = cam.pixel_ray_dir(x as f64 + 0.5, y as f64 + 0.5);
    let ray = Ray { origin, dir };
    let params: Vec<_> = scene
        .gaussians
        .iter()
        .map(|g| line_integral_params(g, &ray, sigma_t_from_alpha(g, g.opacity(), &origin)))
        .collect();
    let density = |p: &stochsplat_core::freeflight::FreeFlightParams, t: f64| {
        p.sigma_t * (-(p.cq * p.cq * t * t / 2.0 + p.a * p.cq * t + p.b / 2.0)).exp()
    };
    // Simpson quadrature of P(i interacts first)
    let (t_max, steps) = (20.0, 40_000usize);
    let dt = t_max / steps as f64;
    let mut p_first = [0.0f64; 2];
    for i in 0..2 {
        let integrand = |t: f64| {
            let survival: f64 = params.iter().map(|p| -optical_depth(p, t)).sum::<f64>().exp();
            density(&params[i], t) * survival
        };
        let mut acc = integrand(0.0) + integrand(t_max);
        for k in 1..steps {
            acc += integrand(k as f64 * dt) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        p_first[i] = acc * dt / 3.0;
    }
    let colors = [[0.85, 0.2, 0.15], [0.15, 0.3, 0.9]];
    let mut expected = [0.0f64; 3];
    for ch in 0..3 {
        expected[ch] = p_first[0] * colors[0][ch]
            + p_first[1] * colors[1][ch]
            + (1.0 - p_first[0] - p_first[1]) * cfg.background[ch];
    }
    let ctx = ForwardContext::new(&scene, &cam, cfg);
    let got = ctx.render_pixel(x, y);
    let color_err = (0..3).map(|ch| (got[ch] - expected[ch]).abs()).fold(0.0, f64::max);
    let pass_b = color_err <= 0.01;

    report(
        6,
        "free-flight sampling",
        pass_a && pass_b,
        &format!(
            "worst KS {worst_ks:.4} (< 0.01) over 20 parameter sets x 1e5 draws; \
             two-volume color error {color_err:.4} (<= 0.01), interaction probs {:.4}/{:.4}",
            p_first[0], p_first[1]
        ),
    );
}

#[test]
fn criterion_07_pop_free_depth() {
    let _guard = serial();
    // part A: converged-image discontinuity across the order flip
    let scene = crossing_scene();
    let base = default_camera(&scene, 64, 64);
    let delta = 0.05f64.to_radians() / 8.0;
    let mut cfg = RenderConfig::default();
    cfg.early_stop_transmittance = 0.0;
    let mut disc = [0.0f64; 2];
    for (mi, mode) in [DepthMode::Mean, DepthMode::Plane].into_iter().enumerate() {
        cfg.depth_mode = mode;
        let before = converged_frame(&scene, &rotated_camera(&base, -delta), &cfg, 6);
        let after = converged_frame(&scene, &rotated_camera(&base, delta), &cfg, 6);
        disc[mi] = max_abs_diff(&before, &after);
    }
    let ratio = disc[1] / disc[0].max(1e-12);
    let pass_a = ratio <= 0.1;

    // part B: plane depth equals the exact max-density depth on central rays
    let mut worst_depth = 0.0f64;
    let blob = random_blob_scene(12, 41);
    for angle in [0.0f64, 0.08, -0.13] {
        let cam = rotated_camera(&default_camera(&blob, 64, 64), angle);
        let ctx = ForwardContext::new(&blob, &cam, RenderConfig::default());
        let origin = cam.center();
        for s in &ctx.splats {
            let g = &blob.gaussians[s.scene_index as usize];
            let inv = g.covariance().try_inverse().unwrap();
            let d = cam.pixel_ray_dir(s.mean2d.x, s.mean2d.y);
            // argmax of the Gaussian along the ray through the projected mean
            let t_star = d.dot(&(inv * (g.position - origin))) / d.dot(&(inv * d));
            let exact = t_star * cam.ray_dir_cam_z(s.mean2d.x, s.mean2d.y);
            worst_depth = worst_depth.max((s.plane_depth_at(s.mean2d.x, s.mean2d.y) - exact).abs());
        }
    }
    let pass_b = worst_depth <= 1e-6;

    report(
        7,
        "pop-free plane depth",
        pass_a && pass_b,
        &format!(
            "flip discontinuity mean {:.3e} vs plane {:.3e}, ratio {ratio:.2e} (<= 0.1); \
             central-ray depth error {worst_depth:.2e} (<= 1e-6)",
            disc[0], disc[1]
        ),
    );
}

#[test]
fn criterion_08_finetune_recovery() {
    let _guard = serial();
    let t0 = Instant::now();
    let truth = random_blob_scene(50, 99);
    let base = default_camera(&truth, 32, 32);
    let mut cfg = RenderConfig::default();
    cfg.early_stop_transmittance = 0.0;
    cfg.spp = 128;
    cfg.pass_seed = 0xF17;

    let train_angles = [-0.06f64, -0.02, 0.03, 0.07];
    let views: Vec<_> = train_angles
        .iter()
        .map(|&a| {
            let cam = rotated_camera(&base, a);
            let target = render_image(&truth, &cam, &cfg, true);
            (cam, target)
        })
        .collect();
    let held_cam = rotated_camera(&base, 0.005);
    let held_target = render_image(&truth, &held_cam, &cfg, true);

    let mut scene = truth.clone();
    let mut rng = Uniform::new(0x9E12);
    for g in &mut scene.gaussians {
        g.opacity_logit += 0.8 * rng.normal();
        for ch in 0..3 {
            g.sh_coeffs[0][ch] += 0.25 * rng.normal();
        }
        for ax in 0..3 {
            g.log_scale[ax] += 0.15 * rng.normal();
            g.position[ax] += 0.02 * rng.normal();
        }
    }
    let psnr_of = |s: &Scene| metrics::psnr(&render_image(s, &held_cam, &cfg, true), &held_target);
    let before = psnr_of(&scene);
    let opt = OptimConfig { iterations: 500, ..OptimConfig::default() };
    let rep = finetune(&mut scene, &views, &opt, &cfg);
    let after = psnr_of(&scene);
    let secs = t0.elapsed().as_secs_f64();
    let gain = after - before;
    let pass = gain >= 5.0 && secs < 600.0;
    report(
        8,
        "fine-tuning recovery",
        pass,
        &format!(
            "held-out psnr {before:.2} -> {after:.2} dB (gain {gain:.2} >= 5) in 500 iters at 128 spp, \
             {} skipped grads, {secs:.0} s (< 600)",
            rep.skipped_grads
        ),
    );
}

#[test]
fn criterion_09_taa_accumulation() {
    let _guard = serial();
    // deep stack of frame-filling near-opaque layers: winners always exist
    // and sit within tau, so a static camera never resets
    let mut gaussians = vec![Gaussian3D {
        position: Vec3::new(0.0, 0.0, 4.9),
        log_scale: Vec3::zeros(),
        rotation: Vec4::new(1.0, 0.0, 0.0, 0.0),
        opacity_logit: 0.0,
        sh_coeffs: solid_sh([0.9, 0.2, 0.1]),
    }];
    for i in 0..5 {
        gaussians.push(Gaussian3D {
            position: Vec3::new(0.0, 0.0, 6.0 + 0.05 * i as f64),
            log_scale: Vec3::new(50f64.ln(), 50f64.ln(), 50f64.ln()),
            rotation: Vec4::new(1.0, 0.0, 0.0, 0.0),
            opacity_logit: 12.0,
            sh_coeffs: solid_sh([0.1, 0.3, 0.85]),
        });
    }
    let scene = Scene { gaussians, sh_degree: 0 };
    let cam = default_camera(&scene, 64, 64);
    let mut cfg = RenderConfig::default();
    cfg.spp = 1;

    let mut ref_cfg = cfg;
    ref_cfg.spp = 1024;
    ref_cfg.pass_seed = splitmix64(0xFEED);
    let reference = render_image(&scene, &cam, &ref_cfg, false);

    let frames = 64u64;
    let mut state = TaaState::new(64, 64, 5.0);
    let mut mse_raw_sum = 0.0;
    for i in 0..frames {
        cfg.pass_seed = splitmix64(0xA11CE ^ i);
        let ctx = ForwardContext::new(&scene, &cam, cfg);
        let (frame, positions) = render_frame_with_positions(&ctx);
        mse_raw_sum += metrics::mse(&frame, &reference);
        taa_accumulate(&mut state, &frame, &positions, &cam);
    }
    let mse_raw = mse_raw_sum / frames as f64;
    let mse_taa = metrics::mse(&state.accum_color, &reference);
    let factor = mse_raw / mse_taa;
    let pass_a = (45.0..=64.0).contains(&factor);

    // tau = 0 resets every frame: accumulation equals the raw frame exactly
    let mut zero = TaaState::new(64, 64, 0.0);
    let mut pass_b = true;
    for i in 0..4u64 {
        cfg.pass_seed = splitmix64(0x7A0 ^ i);
        let ctx = ForwardContext::new(&scene, &cam, cfg);
        let (frame, positions) = render_frame_with_positions(&ctx);
        taa_accumulate(&mut zero, &frame, &positions, &cam);
        if !bits_equal(&zero.accum_color, &frame) {
            pass_b = false;
        }
    }
    report(
        9,
        "taa accumulation",
        pass_a && pass_b,
        &format!(
            "64-frame static-camera mse reduction factor {factor:.1} (in [45, 64]); \
             tau = 0 equals the raw frames bit-exactly: {pass_b}"
        ),
    );
}

#[test]
fn criterion_10_bench_crossover() {
    let _guard = serial();
    // deep scene: every pixel is covered by well over 50 splats
    let mut rng = Uniform::new(0x10AD);
    let gaussians: Vec<_> = (0..60)
        .map(|i| Gaussian3D {
            position: Vec3::new(
                rng.next() * 0.6 - 0.3,
                rng.next() * 0.6 - 0.3,
                3.0 + 0.1 * i as f64,
            ),
            log_scale: Vec3::new(0.18, 0.18, 0.18),
            rotation: Vec4::new(1.0, 0.0, 0.0, 0.0),
            opacity_logit: logit(0.35),
            sh_coeffs: solid_sh([rng.next(), rng.next(), rng.next()]),
        })
        .collect();
    let scene = Scene { gaussians, sh_degree: 0 };
    let cam = default_camera(&scene, 64, 64);
    let probe = ForwardContext::new(&scene, &cam, RenderConfig::default());
    let min_overlap = [(0u32, 0u32), (63, 0), (32, 32), (0, 63), (63, 63)]
        .iter()
        .map(|&(x, y)| probe.pixel_splats(x, y).len())
        .min()
        .unwrap();
    assert!(min_overlap >= 50, "scene must stack >= 50 splats per pixel, got {min_overlap}");

    // the spp x resolution x tile grid the bench subcommand emits
    println!("renderer,spp,width,height,tile_size,median_ms");
    let mut stochastic_1spp = f64::INFINITY;
    let mut sorted_full = f64::INFINITY;
    for scale in [1.0f64, 0.5] {
        let c = stochsplat::run::scale_camera(&cam, scale);
        for tile in [16u32, 32] {
            let mut cfg = RenderConfig::default();
            cfg.tile_size = tile;
            let ms = time_render(&scene, &c, &cfg, true, 9);
            println!("sorted,0,{},{},{tile},{ms:.4}", c.width, c.height);
            if scale == 1.0 && tile == 16 {
                sorted_full = ms;
            }
            for spp in [1u32, 2, 4] {
                cfg.spp = spp;
                let ms = time_render(&scene, &c, &cfg, false, 9);
                println!("stochastic,{spp},{},{},{tile},{ms:.4}", c.width, c.height);
                if scale == 1.0 && tile == 16 && spp == 1 {
                    stochastic_1spp = ms;
                }
            }
        }
    }
    let pass = stochastic_1spp < sorted_full;
    report(
        10,
        "bench crossover",
        pass,
        &format!(
            "{min_overlap}+ splats per pixel: stochastic 1 spp {stochastic_1spp:.2} ms < sorted {sorted_full:.2} ms"
        ),
    );
}

