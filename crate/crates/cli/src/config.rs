//! Versioned experiment configuration.
//!
//! ```json
//! {
//!   "version": 1,
//!   "experiment": "uhf2",
//!   "seed": 7,
//!   "sequence": {"family": "uhf", "params": {"rate": 2}, "depth": 4},
//!   "solver": {"tol": 1e-4, "max_iter": 10000},
//!   "samples": 20
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qms_core::algebra::AlgebraElement;
use qms_core::{
    BridgeOptions, Caps, IdealSpec, InductiveSequence, SequenceDescriptor, SolverOptions, SuiteConfig, C64,
};

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Which Lip-norm the metric commands evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LipMode {
    /// The β-weighted residual Lip-norms of the configured sequence.
    #[default]
    Chain,
    /// `4ⁿ‖a − τ(a)1‖` on `M_{2ⁿ}`, compared against `ℂ`.
    Car,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub bridge_budget: usize,
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        let b = BridgeOptions::default();
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
            bridge_budget: b.budget,
            restarts: b.restarts,
        }
    }
}

/// Sample sizes for `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSizes {
    pub samples: usize,
    pub pairs: usize,
    pub state_pairs: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            samples: 20,
            pairs: 100,
            state_pairs: 6,
        }
    }
}

/// An element of `A_level` given by its column-major block coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    pub level: usize,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

impl ElementSpec {
    pub fn from_element(level: usize, a: &AlgebraElement) -> Self {
        let flat = a.to_flat();
        let im: Vec<f64> = flat.iter().map(|z| z.im).collect();
        Self {
            level,
            re: flat.iter().map(|z| z.re).collect(),
            im: im.iter().any(|&v| v != 0.0).then_some(im),
        }
    }

    pub fn to_element(&self, seq: &InductiveSequence) -> Result<AlgebraElement> {
        if self.level > seq.depth() {
            return Err(CliError::schema(format!(
                "element level {} exceeds depth {}",
                self.level,
                seq.depth()
            )));
        }
        let im = self.im.clone().unwrap_or_else(|| vec![0.0; self.re.len()]);
        if im.len() != self.re.len() {
            return Err(CliError::schema("element re and im lengths differ"));
        }
        let coords: Vec<C64> = self.re.iter().zip(&im).map(|(&r, &i)| C64::new(r, i)).collect();
        let a = AlgebraElement::from_flat(seq.algebra(self.level), &coords)
            .map_err(|e| CliError::schema(format!("element at level {}: {e}", self.level)))?;
        a.require_self_adjoint()
            .map_err(|e| CliError::schema(format!("element at level {}: {e}", self.level)))
    }
}

/// An ideal given by all its levels, or by its top level only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdealEntry {
    Levels { levels: Vec<Vec<usize>> },
    Top { top: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("qms-out"),
        }
    }
}

fn default_samples() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: String,
    /// Required; `--seed` may supply or override it.
    #[serde(default)]
    pub seed: Option<u64>,
    pub sequence: SequenceDescriptor,
    #[serde(default)]
    pub caps: Option<Caps>,
    #[serde(default)]
    pub lipnorm: LipMode,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Random elements or state pairs per level.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub suite: SuiteSizes,
    #[serde(default)]
    pub elements: Vec<ElementSpec>,
    #[serde(default)]
    pub ideals: Vec<IdealEntry>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::schema(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::schema(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(depth) = o.depth {
            self.sequence.depth = depth;
        }
        if let Some(tol) = o.tol {
            self.solver.tol = tol;
        }
    }

    /// Checks the fields serde cannot; returns the seed.
    pub fn validate(&self) -> Result<u64> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::schema(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let id_ok = !self.experiment.is_empty()
            && self
                .experiment
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !id_ok {
            return Err(CliError::schema(
                "experiment must be a non-empty id of letters, digits, '_' or '-'",
            ));
        }
        let seed = self
            .seed
            .ok_or_else(|| CliError::schema("seed is required (config or --seed)"))?;
        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return Err(CliError::schema("solver.tol must be positive"));
        }
        if self.solver.max_iter == 0 || self.solver.bridge_budget == 0 || self.solver.restarts == 0 {
            return Err(CliError::schema("solver iteration counts must be positive"));
        }
        if self.samples == 0 {
            return Err(CliError::schema("samples must be positive"));
        }
        Ok(seed)
    }

    pub fn build_sequence(&self) -> Result<InductiveSequence> {
        self.sequence
            .build(&self.caps.unwrap_or_default())
            .map_err(|e| CliError::schema(format!("sequence: {e}")))
    }

    pub fn build_ideals(&self, seq: &InductiveSequence) -> Result<Vec<IdealSpec>> {
        self.ideals
            .iter()
            .enumerate()
            .map(|(k, entry)| {
                match entry {
                    IdealEntry::Levels { levels } => IdealSpec::new(seq, levels.clone()),
                    IdealEntry::Top { top } => IdealSpec::from_top(seq, top.clone()),
                }
                .map_err(|e| CliError::schema(format!("ideals[{k}]: {e}")))
            })
            .collect()
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn bridge_options(&self, seed: u64) -> BridgeOptions {
        BridgeOptions {
            budget: self.solver.bridge_budget,
            restarts: self.solver.restarts,
            seed,
        }
    }

    pub fn suite_config(&self, seed: u64) -> SuiteConfig {
        SuiteConfig {
            samples: self.suite.samples,
            pairs: self.suite.pairs,
            state_pairs: self.suite.state_pairs,
            seed,
            solver: self.solver_options(),
            bridge: self.bridge_options(seed),
        }
    }
}
