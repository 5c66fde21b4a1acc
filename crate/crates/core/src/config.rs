//! Run configuration, read from a sectioned `key = value` file (TOML).
//!
//! Every key has a default; an empty file is the desk-scale default run
//! except for the seed, which random samplers require. See
//! `configs/desk.toml` for an annotated example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{MeshSpec, ParameterBox, TimeGrid};
use crate::hierarchy::HierarchyConfig;
use crate::kernel::KernelConfig;
use crate::sampling::samplers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub n_cells: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n_cells: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub n_steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            n_steps: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterConfig {
    /// `[Da_min, Da_max]`
    pub da: [f64; 2],
    /// `[Pe_min, Pe_max]`
    pub pe: [f64; 2],
}

impl Default for ParameterConfig {
    fn default() -> Self {
        let b = ParameterBox::default();
        Self {
            da: [b.lower()[0], b.upper()[0]],
            pe: [b.lower()[1], b.upper()[1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_queries: usize,
    pub sampler: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_queries: 200,
            sampler: "uniform_random".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub save_model: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            save_model: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub parameters: ParameterConfig,
    pub hierarchy: HierarchyConfig,
    pub kernel: KernelConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_seed(text, None)
    }

    /// Parses and validates `text`; a `Some` seed replaces the file's seed.
    pub fn parse_with_seed(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            Error::config(line, e.message().trim().to_string())
        })?;
        cfg.seed = seed.or(cfg.seed);
        cfg.validate_with_source(Some(text))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_seed(path, None)
    }

    pub fn load_with_seed(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::parse_with_seed(&text, seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_source(None)
    }

    fn validate_with_source(&self, text: Option<&str>) -> Result<()> {
        let at = |section: &str, key: &str, err: Error| {
            let line = text.and_then(|t| locate_key(t, section, key));
            Error::config(line, format!("{section}.{key}: {err}"))
        };
        MeshSpec::new(self.mesh.n_cells).map_err(|e| at("mesh", "n_cells", e))?;
        TimeGrid::new(self.time.t_end, self.time.n_steps).map_err(|e| {
            let key = if self.time.n_steps == 0 {
                "n_steps"
            } else {
                "t_end"
            };
            at("time", key, e)
        })?;
        self.param_box().map_err(|e| at("parameters", "da", e))?;
        self.hierarchy.validate().map_err(|e| {
            let key = hierarchy_key(&e.to_string());
            at("hierarchy", key, e)
        })?;
        self.kernel.validate().map_err(|e| {
            let msg = e.to_string();
            let key = ["shape", "max_centers", "greedy_tol", "nugget"]
                .into_iter()
                .find(|k| msg.contains(k))
                .unwrap_or("selection");
            at("kernel", key, e)
        })?;
        let sampler = samplers()
            .get(&self.sweep.sampler)
            .map_err(|e| at("sweep", "sampler", e))?();
        if sampler.is_random() && self.seed.is_none() {
            return Err(Error::config(
                text.and_then(|t| locate_key(t, "sweep", "sampler")),
                format!("sampler '{}' needs a seed", self.sweep.sampler),
            ));
        }
        Ok(())
    }

    pub fn mesh_spec(&self) -> Result<MeshSpec> {
        MeshSpec::new(self.mesh.n_cells)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.t_end, self.time.n_steps)
    }

    pub fn param_box(&self) -> Result<ParameterBox> {
        ParameterBox::new(
            [self.parameters.da[0], self.parameters.pe[0]],
            [self.parameters.da[1], self.parameters.pe[1]],
        )
    }
}

fn hierarchy_key(msg: &str) -> &'static str {
    [
        "rom_tol",
        "retrain_every",
        "trust_threshold",
        "validation_slack",
        "enrichment_tol",
        "max_new_modes",
        "hapod_chunks",
        "hapod_omega",
    ]
    .into_iter()
    .find(|k| msg.contains(k))
    .unwrap_or("trust_mode")
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of `key = ...` inside `[section]`, if present.
fn locate_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}
