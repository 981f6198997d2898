//! Run configuration: a TOML file whose fields can be overridden by flags.
//!
//! ```toml
//! [environment]
//! builtin = "Trap"        # or: file = "world.toml"
//! seed = 0
//!
//! [selector]
//! kind = "Uniform"        # InformedSet | Uniform | Greedy | Bandit
//! gamma = 0.1             # Bandit only
//! beacons = 30
//!
//! [planner]
//! batch = 50
//! sample_budget = 5000
//! time_budget_seconds = 60.0   # optional
//! seed = 0
//!
//! [output]
//! directory = "guild-out"
//! heatmap = false
//! snapshot_every = 500
//! heatmap_resolution = 200
//!
//! [bench]
//! trials = 100
//! selectors = ["InformedSet", "Uniform", "Greedy", "Bandit"]
//! threads = 0             # 0 = all cores
//! reference_seconds = 60.0
//! grid_step = 100
//! stop_on_convergence = false
//! ```
//!
//! Every section and field is optional; missing ones take the defaults shown.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use guild_core::bench::TrialSpec;
use guild_core::environments::{make_environment, EnvKind, Environment};
use guild_core::guild::{SelectorKind, DEFAULT_BEACON_COUNT, DEFAULT_GAMMA};
use guild_core::planner::DEFAULT_BATCH;
use serde::{Deserialize, Serialize};

/// Overrides the configured output directory; flags still win over it.
pub const OUTPUT_DIR_VAR: &str = "GUILD_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvironmentSection,
    pub selector: SelectorSection,
    pub planner: PlannerSection,
    pub output: OutputSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorSection {
    pub kind: String,
    pub gamma: f64,
    pub beacons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub batch: usize,
    pub sample_budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_budget_seconds: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub heatmap: bool,
    pub snapshot_every: usize,
    pub heatmap_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub trials: u64,
    pub selectors: Vec<String>,
    pub threads: usize,
    pub reference_seconds: f64,
    pub grid_step: usize,
    pub stop_on_convergence: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            environment: EnvironmentSection::default(),
            selector: SelectorSection::default(),
            planner: PlannerSection::default(),
            output: OutputSection::default(),
            bench: BenchSection::default(),
        }
    }
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self { builtin: None, file: None, seed: 0 }
    }
}

impl Default for SelectorSection {
    fn default() -> Self {
        Self {
            kind: "Uniform".into(),
            gamma: DEFAULT_GAMMA,
            beacons: DEFAULT_BEACON_COUNT,
        }
    }
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            batch: DEFAULT_BATCH,
            sample_budget: 5000,
            time_budget_seconds: None,
            seed: 0,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("guild-out"),
            heatmap: false,
            snapshot_every: 500,
            heatmap_resolution: 200,
        }
    }
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            trials: 100,
            selectors: ["InformedSet", "Uniform", "Greedy", "Bandit"].map(String::from).to_vec(),
            threads: 0,
            reference_seconds: 60.0,
            grid_step: 100,
            stop_on_convergence: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        match (&self.environment.builtin, &self.environment.file) {
            (Some(_), Some(_)) => bail!("environment: set only one of `builtin` and `file`"),
            (None, None) => bail!("environment: one of `builtin` and `file` is required"),
            (Some(name), None) => {
                EnvKind::from_str(name).with_context(|| "environment.builtin")?;
            }
            (None, Some(_)) => {}
        }
        self.selector_kind()?;
        self.selector_kinds()?;
        if self.planner.batch == 0 {
            bail!("planner.batch must be positive");
        }
        if self.planner.sample_budget < self.planner.batch {
            bail!(
                "planner.sample_budget ({}) must be at least planner.batch ({})",
                self.planner.sample_budget,
                self.planner.batch
            );
        }
        if let Some(t) = self.planner.time_budget_seconds {
            if !(t > 0.0 && t.is_finite()) {
                bail!("planner.time_budget_seconds must be positive and finite");
            }
        }
        if self.output.snapshot_every == 0 {
            bail!("output.snapshot_every must be positive");
        }
        if self.output.heatmap_resolution == 0 {
            bail!("output.heatmap_resolution must be positive");
        }
        if self.bench.trials == 0 {
            bail!("bench.trials must be at least 1");
        }
        if self.bench.selectors.is_empty() {
            bail!("bench.selectors must not be empty");
        }
        if self.bench.grid_step == 0 {
            bail!("bench.grid_step must be positive");
        }
        if !(self.bench.reference_seconds.is_finite() && self.bench.reference_seconds > 0.0) {
            bail!("bench.reference_seconds must be positive and finite");
        }
        Ok(())
    }

    fn parse_selector(&self, name: &str, field: &str) -> Result<SelectorKind> {
        let kind = SelectorKind::from_str(name).with_context(|| field.to_string())?;
        let kind = match kind {
            SelectorKind::Bandit { .. } => SelectorKind::Bandit { gamma: self.selector.gamma },
            k => k,
        };
        kind.validate().context("selector.gamma")?;
        Ok(kind)
    }

    pub fn selector_kind(&self) -> Result<SelectorKind> {
        self.parse_selector(&self.selector.kind, "selector.kind")
    }

    pub fn selector_kinds(&self) -> Result<Vec<SelectorKind>> {
        self.bench.selectors.iter().map(|s| self.parse_selector(s, "bench.selectors")).collect()
    }

    pub fn load_environment(&self) -> Result<Environment> {
        match (&self.environment.builtin, &self.environment.file) {
            (Some(name), None) => {
                let kind = EnvKind::from_str(name).context("environment.builtin")?;
                Ok(make_environment(kind, self.environment.seed)?)
            }
            (None, Some(path)) => Environment::load(path)
                .with_context(|| format!("environment.file: loading {}", path.display())),
            _ => bail!("environment: exactly one of `builtin` and `file` is required"),
        }
    }

    pub fn trial_spec(&self, selector: SelectorKind) -> TrialSpec {
        let mut spec = TrialSpec::new(selector, self.planner.sample_budget);
        spec.beacon_count = self.selector.beacons;
        spec.batch = self.planner.batch;
        spec.time_budget = self.planner.time_budget_seconds.map(Duration::from_secs_f64);
        spec.stop_on_convergence = self.bench.stop_on_convergence;
        spec
    }
}
