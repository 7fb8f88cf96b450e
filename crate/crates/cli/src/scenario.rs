//! Scenario files: which assemblage, which task, and the task parameters.

use std::path::PathBuf;

use incompat::assemblage::{depolarize, pauli_xyz, xzh, Assemblage, Visibility};
use incompat::simgrid::PreProcessing;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Builtin names, in the order their settings are documented.
pub const BUILTINS: [&str; 2] = ["pauli-xyz", "xzh"];

/// `pauli-xyz` is `(sigma_x, sigma_y, sigma_z)`; `xzh` is `(sigma_x, sigma_z, H)`.
pub fn builtin(name: &str) -> Option<Assemblage<f64>> {
    match name {
        "pauli-xyz" => Some(pauli_xyz()),
        "xzh" => Some(xzh()),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Jm,
    SimDet,
    Nwise,
    Ncopy,
    SimGrid,
    CloneBound,
    Profile,
    Fuzz,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Jm => "jm",
            Task::SimDet => "sim-det",
            Task::Nwise => "nwise",
            Task::Ncopy => "ncopy",
            Task::SimGrid => "sim-grid",
            Task::CloneBound => "clone-bound",
            Task::Profile => "profile",
            Task::Fuzz => "fuzz",
        }
    }
}

/// Raw scenario file. Setting indices (`subset`) are one-based.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Builtin name or inline assemblage JSON.
    pub assemblage: Option<Value>,
    pub task: Task,
    /// Depolarizing visibility applied before the task (grid) or tested for membership (decisions).
    pub eta: Option<f64>,
    /// Visibilities tested for membership, in order.
    pub sweep: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub subset: Option<Vec<usize>>,
    pub ell: Option<f64>,
    /// Fixed pre-processing strategies for `profile`.
    pub pre: Option<Vec<PreProcessing>>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub count: Option<usize>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub max_copy_dim: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

/// A resolved assemblage and the name it is reported under.
#[derive(Clone, Debug)]
pub struct Source {
    pub name: String,
    pub assemblage: Assemblage<f64>,
}

impl Scenario {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::invalid(format!("malformed scenario: {e}")))
    }

    pub fn source(&self) -> CliResult<Source> {
        match &self.assemblage {
            None => Err(CliError::invalid(format!("task {} needs an assemblage", self.task.name()))),
            Some(Value::String(name)) => builtin(name)
                .map(|assemblage| Source { name: name.clone(), assemblage })
                .ok_or_else(|| {
                    CliError::invalid(format!("unknown builtin {name:?}; known: {}", BUILTINS.join(", ")))
                }),
            Some(v) => {
                let assemblage: Assemblage<f64> = serde_json::from_value(v.clone())
                    .map_err(|e| CliError::invalid(format!("inline assemblage: {e}")))?;
                Ok(Source { name: "inline".into(), assemblage })
            }
        }
    }

    pub fn require_n(&self) -> CliResult<usize> {
        self.n.ok_or_else(|| CliError::invalid(format!("task {} needs n", self.task.name())))
    }

    /// Zero-based subset from the one-based `subset` field, all settings if absent.
    pub fn subset(&self, m: usize) -> CliResult<Vec<usize>> {
        match &self.subset {
            None => Ok((0..m).collect()),
            Some(s) => s
                .iter()
                .map(|&x| {
                    x.checked_sub(1).filter(|&i| i < m).ok_or_else(|| {
                        CliError::invalid(format!("subset entry {x} outside 1..={m} (settings are one-based)"))
                    })
                })
                .collect(),
        }
    }

    /// Visibilities to test for membership: `eta`, then the `sweep` values.
    pub fn visibilities(&self) -> CliResult<Vec<Visibility>> {
        self.eta
            .iter()
            .chain(self.sweep.iter().flatten())
            .map(|&e| Visibility::new(e).map_err(CliError::from))
            .collect()
    }

    /// The assemblage depolarized by `eta` when given.
    pub fn noisy(&self, a: &Assemblage<f64>) -> CliResult<Assemblage<f64>> {
        match self.eta {
            Some(e) => Ok(depolarize(a, Visibility::new(e)?)),
            None => Ok(a.clone()),
        }
    }
}
