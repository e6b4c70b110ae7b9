//! Flag parsing and config-file merging.
//!
//! Every shared option is optional on the command line; values resolve as
//! flag, then `--config` file entry, then built-in default. The config file
//! is `key = value` lines with `#` comments, keys matching the long flag
//! names (dashes or underscores).

use std::collections::HashMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stochsplat_core::forward::{DepthMode, RenderConfig};

#[derive(Debug, Parser)]
#[command(name = "stochsplat", version, about = "Sorting-free stochastic renderer for Gaussian splat scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render each camera of a set to PNG and PFM.
    Render(RenderArgs),
    /// Time the renderers over an SPP x resolution x tile-size grid.
    Bench(BenchArgs),
    /// Optimize scene parameters against posed target images.
    Finetune(FinetuneArgs),
    /// Verify gradients against finite differences and emit gradient images.
    Gradcheck(GradcheckArgs),
    /// Measure popping across an order-flip camera sweep.
    Popcheck(PopcheckArgs),
    /// Render a camera path at 1 SPP with and without temporal accumulation.
    Taa(TaaArgs),
}

#[derive(Debug, Args, Clone)]
pub struct SharedArgs {
    /// Splat PLY scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Camera set JSON.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Samples per pixel.
    #[arg(long)]
    pub spp: Option<u32>,
    /// Depth mode: mean, plane, or freeflight.
    #[arg(long, value_name = "MODE")]
    pub depth_mode: Option<String>,
    /// Sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Background color as r,g,b in [0,1].
    #[arg(long)]
    pub background: Option<String>,
    /// Tile size in pixels.
    #[arg(long)]
    pub tile_size: Option<u32>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Renderer: stochastic or sorted.
    #[arg(long)]
    pub renderer: Option<String>,
    /// Directory of reference PFM images for metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Worker thread cap (default: STOCHSPLAT_THREADS or all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// key = value config file; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Comma-separated SPP values.
    #[arg(long)]
    pub spp_list: Option<String>,
    /// Comma-separated resolution scales (1.0 = native).
    #[arg(long)]
    pub resolution_list: Option<String>,
    /// Comma-separated tile sizes.
    #[arg(long)]
    pub tile_size_list: Option<String>,
    /// Timed runs per cell (median reported).
    #[arg(long)]
    pub runs: Option<u32>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Optimization iterations.
    #[arg(long)]
    pub iterations: Option<u32>,
    /// Loss: l1 or l2.
    #[arg(long)]
    pub loss: Option<String>,
    /// Write a scene PLY checkpoint every N iterations (0 = off).
    #[arg(long)]
    pub checkpoint_every: Option<u32>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args)]
pub struct PopcheckArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Number of rotation steps on each side of the flip.
    #[arg(long)]
    pub rotation_sweep: Option<u32>,
    /// Half-width of the sweep in degrees.
    #[arg(long)]
    pub max_angle: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TaaArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Reprojection distance threshold in world units (default: 0.5% of the
    /// scene bounding diagonal).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Reference SPP for per-frame MSE.
    #[arg(long)]
    pub reference_spp: Option<u32>,
}

/// A parsed `key = value` config file.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(format!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim().replace('-', "_");
            values.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(&key.replace('-', "_")).map(String::as_str)
    }
}

/// Fully resolved shared options.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scene: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub renderer_sorted: bool,
    pub threads: usize,
    pub render: RenderConfig,
    pub config: ConfigFile,
}

fn parse_background(text: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("background must be r,g,b: `{text}`"));
    }
    let mut bg = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        bg[i] = p.trim().parse().map_err(|_| format!("bad background component `{p}`"))?;
    }
    Ok(bg)
}

pub fn parse_depth_mode(text: &str) -> Result<DepthMode, String> {
    match text.to_ascii_lowercase().as_str() {
        "mean" => Ok(DepthMode::Mean),
        "plane" => Ok(DepthMode::Plane),
        "freeflight" | "free-flight" | "free_flight" => Ok(DepthMode::FreeFlight),
        other => Err(format!("unknown depth mode `{other}` (mean|plane|freeflight)")),
    }
}

pub fn resolve(shared: &SharedArgs) -> Result<Resolved, String> {
    let config = match &shared.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let pick_str = |flag: &Option<String>, key: &str| -> Option<String> {
        flag.clone().or_else(|| config.get(key).map(str::to_string))
    };
    let pick_path = |flag: &Option<PathBuf>, key: &str| -> Option<PathBuf> {
        flag.clone().or_else(|| config.get(key).map(PathBuf::from))
    };
    let parse_num = |flag: Option<String>, key: &str| -> Result<Option<u64>, String> {
        flag.map(|v| v.parse::<u64>().map_err(|_| format!("bad numeric value for {key}: `{v}`")))
            .transpose()
    };

    let spp = shared
        .spp
        .or(parse_num(config.get("spp").map(str::to_string), "spp")?.map(|v| v as u32))
        .unwrap_or(1);
    if spp == 0 {
        return Err("spp must be positive".into());
    }
    let seed = shared.seed.or(parse_num(config.get("seed").map(str::to_string), "seed")?).unwrap_or(0);
    let tile_size = shared
        .tile_size
        .or(parse_num(config.get("tile_size").map(str::to_string), "tile_size")?.map(|v| v as u32))
        .unwrap_or(16);
    if tile_size == 0 {
        return Err("tile_size must be positive".into());
    }
    let depth_mode = match pick_str(&shared.depth_mode, "depth_mode") {
        Some(m) => parse_depth_mode(&m)?,
        None => DepthMode::Mean,
    };
    let background = match pick_str(&shared.background, "background") {
        Some(b) => parse_background(&b)?,
        None => [0.0; 3],
    };
    let renderer = pick_str(&shared.renderer, "renderer").unwrap_or_else(|| "stochastic".into());
    let renderer_sorted = match renderer.as_str() {
        "sorted" => true,
        "stochastic" => false,
        other => return Err(format!("unknown renderer `{other}` (stochastic|sorted)")),
    };
    let threads = shared
        .threads
        .or(config.get("threads").and_then(|v| v.parse().ok()))
        .or_else(|| std::env::var("STOCHSPLAT_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);

    Ok(Resolved {
        scene: pick_path(&shared.scene, "scene"),
        cameras: pick_path(&shared.cameras, "cameras"),
        out: pick_path(&shared.out, "out"),
        reference: pick_path(&shared.reference, "reference"),
        renderer_sorted,
        threads,
        render: RenderConfig {
            spp,
            depth_mode,
            pass_seed: seed,
            background,
            tile_size,
            early_stop_transmittance: 1e-4,
        },
        config,
    })
}

/// Installs the global worker pool cap; 0 keeps the rayon default.
pub fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| format!("bad {what} entry `{v}`")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parse_and_override() {
        let cfg = ConfigFile::parse("spp = 64\ndepth-mode = plane # comment\n\n# full line\nseed=9\n").unwrap();
        assert_eq!(cfg.get("spp"), Some("64"));
        assert_eq!(cfg.get("depth_mode"), Some("plane"));
        assert_eq!(cfg.get("seed"), Some("9"));
        assert_eq!(cfg.get("missing"), None);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "spp = 64\nrenderer = sorted\nbackground = 0.1,0.2,0.3\n").unwrap();
        let shared = SharedArgs {
            scene: None,
            cameras: None,
            spp: Some(8),
            depth_mode: None,
            seed: None,
            background: None,
            tile_size: None,
            out: None,
            renderer: None,
            reference: None,
            threads: None,
            config: Some(path),
        };
        let r = resolve(&shared).unwrap();
        assert_eq!(r.render.spp, 8); // flag beats config
        assert!(r.renderer_sorted); // config fills the gap
        assert_eq!(r.render.background, [0.1, 0.2, 0.3]);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(parse_background("1,2").is_err());
        assert!(parse_depth_mode("sorted").is_err());
        let shared = SharedArgs {
            scene: None,
            cameras: None,
            spp: Some(0),
            depth_mode: None,
            seed: None,
            background: None,
            tile_size: None,
            out: None,
            renderer: None,
            reference: None,
            threads: None,
            config: None,
        };
        assert!(resolve(&shared).is_err());
    }
}
