use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use egoevent::metrics::FootSkatingConfig;
use egoevent::{NormMode, SynthConfig, UpAxis, VoxelConfig};

/// Normalization choice on the command line; `none` keeps raw values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Norm(pub Option<NormMode>);

impl std::str::FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Norm(None)),
            s => s
                .parse::<NormMode>()
                .map(|m| Norm(Some(m)))
                .map_err(|e| e.to_string()),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(m) => write!(f, "{m}"),
            None => f.write_str("none"),
        }
    }
}

/// Pipeline flags shared by all subcommands. Unset flags fall back to the
/// config file, then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineFlags {
    /// Frame rate for voxelization [default: 30]
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    /// Temporal bins per frame [default: 3]
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// Min-max normalization scope: frame, bin, grid or none [default: frame]
    #[arg(long, global = true)]
    pub norm: Option<Norm>,
    /// Positive contrast threshold, log units [default: 0.2, heuristic]
    #[arg(long = "c-pos", global = true)]
    pub c_pos: Option<f64>,
    /// Negative contrast threshold, log units [default: 0.2, heuristic]
    #[arg(long = "c-neg", global = true)]
    pub c_neg: Option<f64>,
    /// Mask dilation radius in pixels [default: 2, heuristic]
    #[arg(long, global = true)]
    pub dilate: Option<u32>,
    /// Foot-skating height threshold in mm [default: 50, heuristic]
    #[arg(long = "fs-thresh-mm", global = true)]
    pub fs_thresh_mm: Option<f64>,
    /// Floor height in mm [default: 0, heuristic]
    #[arg(long = "floor-mm", global = true)]
    pub floor_mm: Option<f64>,
    /// Up axis of pose data: y or z, overriding the pose files [default: from file, else z]
    #[arg(long, global = true)]
    pub up: Option<UpAxis>,
    /// Worker threads; 0 uses all cores [default: 0]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Optional `key = value` config file; flags override it
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub fps: f64,
    pub bins: usize,
    pub norm: Norm,
    pub c_pos: f64,
    pub c_neg: f64,
    pub dilate: u32,
    pub fs_thresh_mm: f64,
    pub floor_mm: f64,
    pub up: Option<UpAxis>,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fps: VoxelConfig::DEFAULT_FPS,
            bins: VoxelConfig::DEFAULT_BINS,
            norm: Norm(Some(NormMode::Frame)),
            c_pos: SynthConfig::DEFAULT_THRESHOLD,
            c_neg: SynthConfig::DEFAULT_THRESHOLD,
            dilate: 2,
            fs_thresh_mm: FootSkatingConfig::DEFAULT_H_THRESH_MM,
            floor_mm: 0.0,
            up: None,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    /// Defaults, overlaid with the config file, overlaid with flags.
    pub fn resolve(flags: &PipelineFlags) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = &flags.config {
            cfg.apply_file(path)?;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = flags.$f.clone() { cfg.$f = v; } )* };
        }
        take!(
            fps,
            bins,
            norm,
            c_pos,
            c_neg,
            dilate,
            fs_thresh_mm,
            floor_mm,
            jobs
        );
        if flags.up.is_some() {
            cfg.up = flags.up;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`", path.display(), n + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            self.set(key, value)
                .with_context(|| format!("{}:{}: bad value for `{key}`", path.display(), n + 1))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(v: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| anyhow::anyhow!("`{v}`: {e}"))
        }
        match key.replace('-', "_").as_str() {
            "fps" => self.fps = parse(value)?,
            "bins" => self.bins = parse(value)?,
            "norm" => self.norm = parse(value)?,
            "c_pos" => self.c_pos = parse(value)?,
            "c_neg" => self.c_neg = parse(value)?,
            "dilate" => self.dilate = parse(value)?,
            "fs_thresh_mm" => self.fs_thresh_mm = parse(value)?,
            "floor_mm" => self.floor_mm = parse(value)?,
            "up" => self.up = Some(parse(value)?),
            "jobs" => self.jobs = parse(value)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            bail!("fps must be positive, got {}", self.fps);
        }
        if self.bins == 0 {
            bail!("bins must be at least 1");
        }
        if !(self.fs_thresh_mm > 0.0) {
            bail!("fs-thresh-mm must be positive, got {}", self.fs_thresh_mm);
        }
        Ok(())
    }

    pub fn foot_skating(&self) -> FootSkatingConfig {
        FootSkatingConfig {
            h_thresh_mm: self.fs_thresh_mm,
            floor_mm: self.floor_mm,
        }
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# effective config: fps = {} bins = {} norm = {} c_pos = {} c_neg = {} dilate = {} \
             fs_thresh_mm = {} floor_mm = {} up = {} jobs = {}",
            self.fps,
            self.bins,
            self.norm,
            self.c_pos,
            self.c_neg,
            self.dilate,
            self.fs_thresh_mm,
            self.floor_mm,
            self.up
                .map_or_else(|| "file".to_string(), |u| u.to_string()),
            self.jobs
        )
    }
}
