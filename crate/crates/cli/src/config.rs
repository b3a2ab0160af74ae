use std::fs;
use std::path::{Path, PathBuf};

use flightlab::fractalgen::{koch_generate, line_reference_with_extent, saw_generate, KochConfig, SawConfig};
use flightlab::flights::{Engine, EngineConfig, StartMode, StartSpec};
use flightlab::stats::{Binning, RecordFilter};
use flightlab::{Boundary, Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A boundary generator, as stored in configs and in boundary file metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Saw {
        n_steps: usize,
        n_pivot_attempts: u64,
        seed: u64,
    },
    Koch {
        iterations: u32,
    },
    Line {
        dim: usize,
        extent: f64,
    },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Boundary> {
        match *self {
            GeneratorSpec::Saw {
                n_steps,
                n_pivot_attempts,
                seed,
            } => saw_generate(SawConfig {
                n_steps,
                n_pivot_attempts,
                seed,
            }),
            GeneratorSpec::Koch { iterations } => koch_generate(KochConfig::triadic(iterations)),
            GeneratorSpec::Line { dim, extent } => line_reference_with_extent(dim, extent),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySource {
    File(PathBuf),
    Generator(GeneratorSpec),
}

/// Engine settings as written in a config; the seed lives at the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub engine: Engine,
    #[serde(default)]
    pub delta: Option<f64>,
    pub n_max: u64,
    #[serde(default)]
    pub r_esc: Option<f64>,
    pub n_flights: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    #[serde(default = "default_bins")]
    pub bins_per_octave: u32,
    #[serde(default = "default_true")]
    pub same_side: bool,
}

fn default_bins() -> u32 {
    8
}

fn default_true() -> bool {
    true
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            bins_per_octave: default_bins(),
            same_side: true,
        }
    }
}

impl StatsSection {
    pub fn binning(&self) -> Binning {
        Binning {
            bins_per_octave: self.bins_per_octave,
            ..Binning::default()
        }
    }

    pub fn filter(&self) -> RecordFilter {
        RecordFilter {
            same_side: self.same_side,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub boundary: BoundarySource,
    pub engine: EngineSection,
    pub start: StartSpec,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

/// Command-line overrides for a campaign config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub engine: Option<Engine>,
    pub flights: Option<u64>,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub n_max: Option<u64>,
    pub r_esc: Option<f64>,
}

impl CampaignConfig {
    /// Reads a config; relative boundary files resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: CampaignConfig = serde_json::from_str(&text)?;
        if let BoundarySource::File(f) = &cfg.boundary {
            if f.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.boundary = BoundarySource::File(base.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let BoundarySource::File(f) = &self.boundary {
            if !f.is_file() {
                return Err(Error::Config(format!("boundary file {} does not exist", f.display())));
            }
        }
        if let Some(d) = &self.output_dir {
            // nested under --out; never allowed to climb out of it
            let escapes = d
                .components()
                .any(|c| !matches!(c, std::path::Component::Normal(_) | std::path::Component::CurDir));
            if escapes {
                return Err(Error::Config(format!(
                    "output_dir {} must be a relative path below the output directory",
                    d.display()
                )));
            }
        }
        if !(self.start.eps > 0.0) {
            return Err(Error::Config("start.eps must be positive".into()));
        }
        match (self.engine.engine, self.start.mode) {
            (Engine::Lattice, StartMode::WhitneyUniform) => Err(Error::Config(
                "the lattice engine starts from lattice-adjacent-uniform".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(e) = o.engine {
            self.engine.engine = e;
        }
        if let Some(n) = o.flights {
            self.engine.n_flights = n;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(e) = o.eps {
            self.start.eps = e;
        }
        if o.delta.is_some() {
            self.engine.delta = o.delta;
        }
        if let Some(n) = o.n_max {
            self.engine.n_max = n;
        }
        if o.r_esc.is_some() {
            self.engine.r_esc = o.r_esc;
        }
        self.validate()
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            engine: self.engine.engine,
            delta: self.engine.delta,
            n_max: self.engine.n_max,
            r_esc: self.engine.r_esc,
            seed: self.seed,
            n_flights: self.engine.n_flights,
        }
    }

    pub fn load_boundary(&self) -> Result<(Boundary, Value)> {
        match &self.boundary {
            BoundarySource::File(f) => read_boundary(f),
            BoundarySource::Generator(g) => {
                let b = g.generate()?;
                Ok((b, serde_json::to_value(g)?))
            }
        }
    }
}

pub fn read_boundary(path: &Path) -> Result<(Boundary, Value)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read boundary {}: {e}", path.display())))?;
    Boundary::from_json(&text)
}

/// Accepts plain integers and float notation such as `1e6`.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
        _ => Err(format!("expected a non-negative integer, got {s}")),
    }
}
