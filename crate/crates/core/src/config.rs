//! Run configuration: defaults, config-file parsing, and flag overrides.
//!
//! Precedence is flags over config file over defaults. Config files hold one
//! `key = value` per line with '#' comments; keys use the same spelling as
//! the long command-line flags.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{InitScheme, ModelConfig, Variant};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub variant: Variant,
    /// Context half-width `m` (the attention context is `2m` vectors).
    pub context_m: usize,
    pub heads: usize,
    pub width: usize,
    pub crop: usize,
    pub crops_per_image: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub sigma: f64,
    pub tile: usize,
    pub seed: u64,
    pub init: InitScheme,
    pub scale_scores: bool,
    /// Images whose larger dimension exceeds this are rescaled down.
    pub max_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            checkpoint: None,
            out: PathBuf::from("out"),
            variant: Variant::Full,
            context_m: 1,
            heads: 12,
            width: 240,
            crop: 384,
            crops_per_image: 100,
            batch: 3,
            epochs: 10,
            lr: 1e-4,
            sigma: 4.0,
            tile: 384,
            seed: 0,
            init: InitScheme::He,
            scale_scores: false,
            max_dim: 1920,
        }
    }
}

/// Optional per-field overrides collected from command-line flags.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub variant: Option<String>,
    pub context_m: Option<usize>,
    pub heads: Option<usize>,
    pub width: Option<usize>,
    pub crop: Option<usize>,
    pub crops_per_image: Option<usize>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub sigma: Option<f64>,
    pub tile: Option<usize>,
    pub seed: Option<u64>,
    pub init: Option<String>,
}

impl RunConfig {
    /// Defaults, then the optional config file, then flag overrides.
    pub fn resolve(config_file: Option<&Path>, flags: &Overrides) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = config_file {
            cfg.apply_file(path)?;
        }
        cfg.apply_overrides(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_key(&mut self, key: &str, value: &str, ctx: &dyn Fn(String) -> Error) -> Result<()> {
        let bad = |what: &str| ctx(format!("bad value '{value}' for '{key}' ({what})"));
        macro_rules! parse {
            ($what:expr) => {
                value.parse().map_err(|_| bad($what))?
            };
        }
        match key {
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "variant" => self.variant = Variant::parse(value)?,
            "context-m" => self.context_m = parse!("integer"),
            "heads" => self.heads = parse!("integer"),
            "width" => self.width = parse!("integer"),
            "crop" => self.crop = parse!("integer"),
            "crops-per-image" => self.crops_per_image = parse!("integer"),
            "batch" => self.batch = parse!("integer"),
            "epochs" => self.epochs = parse!("integer"),
            "lr" => self.lr = parse!("number"),
            "sigma" => self.sigma = parse!("number"),
            "tile" => self.tile = parse!("integer"),
            "seed" => self.seed = parse!("integer"),
            "init" => self.init = InitScheme::parse(value)?,
            "scale-scores" => {
                self.scale_scores = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad("true/false")),
                }
            }
            "max-dim" => self.max_dim = parse!("integer"),
            _ => return Err(ctx(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let path = path.to_path_buf();
            self.set_key(key.trim(), value.trim(), &move |msg| Error::parse(&path, msg))?;
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = &o.manifest {
            self.manifest = Some(v.clone());
        }
        if let Some(v) = &o.checkpoint {
            self.checkpoint = Some(v.clone());
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = &o.variant {
            self.variant = Variant::parse(v)?;
        }
        if let Some(v) = o.context_m {
            self.context_m = v;
        }
        if let Some(v) = o.heads {
            self.heads = v;
        }
        if let Some(v) = o.width {
            self.width = v;
        }
        if let Some(v) = o.crop {
            self.crop = v;
        }
        if let Some(v) = o.crops_per_image {
            self.crops_per_image = v;
        }
        if let Some(v) = o.batch {
            self.batch = v;
        }
        if let Some(v) = o.epochs {
            self.epochs = v;
        }
        if let Some(v) = o.lr {
            self.lr = v;
        }
        if let Some(v) = o.sigma {
            self.sigma = v;
        }
        if let Some(v) = o.tile {
            self.tile = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.init {
            self.init = InitScheme::parse(v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop % 8 != 0 {
            return Err(Error::Config(format!("crop {} must be a positive multiple of 8", self.crop)));
        }
        if self.tile == 0 || self.tile % 8 != 0 {
            return Err(Error::Config(format!("tile {} must be a positive multiple of 8", self.tile)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Config(format!("sigma {} must be positive", self.sigma)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        self.model_config().validate()
    }

    /// Model geometry implied by this run configuration.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_h: self.crop,
            input_w: self.crop,
            width: self.width,
            heads: self.heads,
            context_m: self.context_m,
            variant: self.variant,
            scale_scores: self.scale_scores,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_training_recipe() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.crop, 384);
        assert_eq!(cfg.crops_per_image, 100);
        assert_eq!(cfg.batch, 3);
        assert_eq!(cfg.epochs, 10);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.heads, 12);
        assert_eq!(cfg.width, 240);
        assert_eq!(cfg.tile, 384);
        assert_eq!(cfg.max_dim, 1920);
    }

    #[test]
    fn file_then_flags_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# smoke profile\ncrop = 64\nbatch = 2\nlr = 0.001\n").unwrap();
        let flags = Overrides {
            batch: Some(4),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Some(&path), &flags).unwrap();
        assert_eq!(cfg.crop, 64); // from file
        assert_eq!(cfg.batch, 4); // flag overrides file
        assert_eq!(cfg.lr, 1e-3); // from file
        assert_eq!(cfg.epochs, 10); // default
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "colour = blue\n").unwrap();
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_file(&path).is_err());
    }

    #[test]
    fn invalid_geometry_rejected() {
        let flags = Overrides {
            crop: Some(60),
            ..Default::default()
        };
        assert!(RunConfig::resolve(None, &flags).is_err());
        let flags = Overrides {
            heads: Some(7), // 240 % 7 != 0
            ..Default::default()
        };
        assert!(RunConfig::resolve(None, &flags).is_err());
    }
}
