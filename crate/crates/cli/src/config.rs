//! Experiment configuration: JSON documents with a versioned schema.

use std::path::PathBuf;

use eigenpath::apps::{GroverRepr, Topology};
use eigenpath::timedist::DistSpec;
use eigenpath::traversal::Family;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TRAJECTORIES: usize = 2000;
const MAX_TRAJECTORIES: usize = 1_000_000;
const MAX_GENERIC_DIM: usize = 64;
const MAX_QSA_STATES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Grover {
        qubits: u32,
        #[serde(default = "default_marked")]
        marked: Vec<u64>,
        #[serde(default = "default_repr")]
        representation: GroverRepr,
    },
    Qsa {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        energies: Option<Vec<f64>>,
        /// Random instance of this size when `energies` is absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random_size: Option<usize>,
        #[serde(default = "default_topology")]
        topology: Topology,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta_final: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        laziness: Option<f64>,
    },
    /// `H(s) = (1 − s) A + s B` for real symmetric `A`, `B`, tracking the ground state.
    GenericPath {
        start: Vec<Vec<f64>>,
        end: Vec<Vec<f64>>,
        /// Defaults to 0.95 times the smallest sampled gap.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap_floor: Option<f64>,
    },
    DistInfo {
        dist: DistSpec,
        #[serde(default)]
        omega_min: f64,
        #[serde(default = "default_omega_max")]
        omega_max: f64,
        #[serde(default = "default_points")]
        points: usize,
        /// Gap used by the positive-time bound; defaults to the first positive grid frequency.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
}

fn default_marked() -> Vec<u64> {
    vec![0]
}
fn default_repr() -> GroverRepr {
    GroverRepr::Subspace
}
fn default_topology() -> Topology {
    Topology::Complete
}
fn default_omega_max() -> f64 {
    4.0
}
fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_ok: Option<bool>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
}

fn default_p() -> f64 {
    0.8
}
fn default_mode() -> Mode {
    Mode::Exact
}
fn default_trajectories() -> usize {
    DEFAULT_TRAJECTORIES
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { p: default_p(), family: None, negative_ok: None, mode: Mode::Exact, trajectories: DEFAULT_TRAJECTORIES }
    }
}

/// A configuration problem, reported with the offending field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn bad(field: &str, message: impl Into<String>) -> ValidationError {
    ValidationError { field: field.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ValidationError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| bad("$", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks done before anything runs.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        let p = &self.plan;
        if !(p.p > 0.0 && p.p < 1.0) {
            return Err(bad("plan.p", format!("{} is outside (0, 1)", p.p)));
        }
        if p.trajectories == 0 || p.trajectories > MAX_TRAJECTORIES {
            return Err(bad("plan.trajectories", format!("must be in 1..={MAX_TRAJECTORIES}")));
        }
        match &self.experiment {
            Experiment::Grover { qubits, marked, representation } => {
                let limit = if *representation == GroverRepr::Full { 10 } else { 52 };
                if *qubits == 0 || *qubits > limit {
                    return Err(bad("experiment.qubits", format!("must be in 1..={limit} for this representation")));
                }
                if marked.is_empty() {
                    return Err(bad("experiment.marked", "needs at least one element"));
                }
                let n = 1u64 << qubits;
                if marked.iter().any(|x| *x >= n) {
                    return Err(bad("experiment.marked", format!("elements must be below {n}")));
                }
                if marked.len() > 1 && *representation == GroverRepr::Full {
                    return Err(bad("experiment.marked", "several marked elements need the subspace representation"));
                }
            }
            Experiment::Qsa { energies, random_size, beta_final, laziness, topology } => {
                let d = match (energies, random_size) {
                    (Some(e), None) => {
                        if e.iter().any(|x| !x.is_finite()) {
                            return Err(bad("experiment.energies", "must be finite"));
                        }
                        e.len()
                    }
                    (None, Some(d)) => *d,
                    _ => return Err(bad("experiment", "give exactly one of energies and random_size")),
                };
                let min = if *topology == Topology::Ring { 3 } else { 2 };
                if d < min || d > MAX_QSA_STATES {
                    return Err(bad("experiment", format!("state count must be in {min}..={MAX_QSA_STATES}")));
                }
                if let Some(b) = beta_final {
                    if !(*b >= 0.0 && b.is_finite()) {
                        return Err(bad("experiment.beta_final", "must be finite and nonnegative"));
                    }
                }
                if let Some(a) = laziness {
                    if !(*a > 0.0 && *a <= 1.0) {
                        return Err(bad("experiment.laziness", "must be in (0, 1]"));
                    }
                }
            }
            Experiment::GenericPath { start, end, gap_floor } => {
                for (name, m) in [("experiment.start", start), ("experiment.end", end)] {
                    let n = m.len();
                    if n < 2 || n > MAX_GENERIC_DIM {
                        return Err(bad(name, format!("dimension must be in 2..={MAX_GENERIC_DIM}")));
                    }
                    if m.iter().any(|row| row.len() != n) {
                        return Err(bad(name, "matrix must be square"));
                    }
                    if m.iter().flatten().any(|x| !x.is_finite()) {
                        return Err(bad(name, "entries must be finite"));
                    }
                    for i in 0..n {
                        for j in 0..i {
                            if (m[i][j] - m[j][i]).abs() > 1e-12 {
                                return Err(bad(name, "matrix must be symmetric"));
                            }
                        }
                    }
                }
                if start.len() != end.len() {
                    return Err(bad("experiment.end", "dimension differs from start"));
                }
                if let Some(g) = gap_floor {
                    if !(*g > 0.0 && g.is_finite()) {
                        return Err(bad("experiment.gap_floor", "must be positive"));
                    }
                }
            }
            Experiment::DistInfo { dist, omega_min, omega_max, points, delta } => {
                if !(omega_min.is_finite() && omega_max.is_finite() && omega_min < omega_max) {
                    return Err(bad("experiment.omega_max", "need finite omega_min < omega_max"));
                }
                if *points < 2 || *points > 100_000 {
                    return Err(bad("experiment.points", "must be in 2..=100000"));
                }
                if let Some(d) = delta {
                    if !(*d > 0.0 && d.is_finite()) {
                        return Err(bad("experiment.delta", "must be positive"));
                    }
                }
                dist.build().map_err(|e| bad("experiment.dist", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self.experiment {
            Experiment::Grover { .. } => "grover",
            Experiment::Qsa { .. } => "qsa",
            Experiment::GenericPath { .. } => "generic_path",
            Experiment::DistInfo { .. } => "dist_info",
        }
    }

    /// Canonical serialization, used for the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
