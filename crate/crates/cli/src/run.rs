//! Executes one scenario and renders its result.

use std::path::{Path, PathBuf};

use incompat::assemblage::{depolarize, Assemblage, Visibility};
use incompat::conic::SolveOptions;
use incompat::hierarchy::{hierarchy_fuzz, threshold_profile, FuzzReport, FuzzSpec, Threshold, ThresholdProfile};
use incompat::jm::{jm_feasible, jm_visibility, verify_parent};
use incompat::multicopy::{
    clone_bound, multicopy_povm_residual, ncopy_feasible_with_limit, ncopy_visibility_with_limit,
    verify_multicopy_statistics, MultiCopyParent, DEFAULT_MAX_COPY_DIM,
};
use incompat::parent::ParentPovm;
use incompat::simgrid::{sim_grid_certificate, GridCertificate, GridSpec};
use incompat::structures::{
    nwise_feasible, nwise_visibility, sim_det_feasible, sim_det_visibility, verify_decomposition, ConvexDecomposition,
    PartitionCollection,
};
use num_rational::Ratio;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::scenario::{Scenario, Task};

/// Grid step used by `--fast` when none is given.
pub const FAST_ELL: f64 = 0.1;
/// Random states used to replay multi-copy witnesses unless `trials` is set.
pub const DEFAULT_TRIALS: usize = 200;

/// Command-line overrides of scenario fields.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub ell: Option<f64>,
    pub jobs: usize,
    pub tol: Option<f64>,
    pub fast: bool,
    pub csv: Option<PathBuf>,
    pub max_copy_dim: Option<usize>,
}

/// One line of the flat threshold table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub assemblage: String,
    pub set: String,
    pub n: Option<usize>,
    pub eta: Option<f64>,
    pub kind: &'static str,
    pub status: &'static str,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub json: String,
    pub rows: Vec<ThresholdRow>,
    /// Some solve or certificate entry is not trustworthy.
    pub inconclusive: bool,
}

#[derive(Serialize)]
struct Report<B: Serialize> {
    task: &'static str,
    assemblage: String,
    tol: f64,
    #[serde(flatten)]
    body: B,
}

#[derive(Serialize)]
struct DecisionOut<W: Serialize> {
    eta: f64,
    member: bool,
    robustness: f64,
    witness_residual: Option<f64>,
    witness: Option<W>,
}

#[derive(Serialize)]
struct ThresholdBody<W: Serialize> {
    n: Option<usize>,
    /// One-based.
    subset: Option<Vec<usize>>,
    visibility: f64,
    decisions: Vec<DecisionOut<W>>,
}

#[derive(Serialize)]
struct GridBody {
    n: usize,
    eta: Option<f64>,
    certifies_non_membership: bool,
    certificate: GridCertificate,
}

#[derive(Serialize)]
struct CloneBody {
    d: usize,
    m: usize,
    n: usize,
    exact: String,
    value: f64,
}

#[derive(Serialize)]
struct ProfileBody {
    profile: ThresholdProfile,
}

#[derive(Serialize)]
struct FuzzBody {
    report: FuzzReport,
}

/// `--tol`, then `INCOMPAT_SOLVER_TOL`, then the scenario's `tol`, then the default.
pub fn solve_options(flag: Option<f64>, scenario: Option<f64>) -> CliResult<SolveOptions> {
    if let Some(t) = flag {
        return Ok(SolveOptions::with_tol(t)?);
    }
    if std::env::var_os("INCOMPAT_SOLVER_TOL").is_some() {
        return Ok(SolveOptions::from_env()?);
    }
    match scenario {
        Some(t) => Ok(SolveOptions::with_tol(t)?),
        None => Ok(SolveOptions::default()),
    }
}

fn render<B: Serialize>(task: Task, assemblage: String, opts: &SolveOptions, body: B) -> String {
    let r = Report { task: task.name(), assemblage, tol: opts.tol, body };
    let mut s = serde_json::to_string_pretty(&r).expect("result serializes");
    s.push('\n');
    s
}

fn decide<W: Serialize>(
    base: &Assemblage<f64>,
    visibilities: &[Visibility],
    mut f: impl FnMut(&Assemblage<f64>) -> CliResult<(bool, f64, Option<(W, f64)>)>,
) -> CliResult<Vec<DecisionOut<W>>> {
    visibilities
        .iter()
        .map(|&v| {
            let (member, robustness, w) = f(&depolarize(base, v))?;
            let (witness, witness_residual) = match w {
                Some((w, r)) => (Some(w), Some(r)),
                None => (None, None),
            };
            Ok(DecisionOut { eta: v.value(), member, robustness, witness_residual, witness })
        })
        .collect()
}

/// Worst parent residual over the blocks of a partition, each block solved on its own.
fn block_residual(a: &Assemblage<f64>, part: &PartitionCollection, opts: &SolveOptions) -> CliResult<f64> {
    let mut worst: f64 = 0.0;
    for block in part.blocks() {
        let d = jm_feasible(a, block, opts)?;
        let p = d.witness.ok_or_else(|| CliError::Inconclusive(format!("block {part} has no parent on replay")))?;
        worst = worst.max(verify_parent(a, block, &p)?);
    }
    Ok(worst)
}

fn row(assemblage: &str, set: String, n: Option<usize>, t: &Threshold, kind: &'static str) -> ThresholdRow {
    let status = match t {
        Threshold::Ok { .. } => "ok",
        Threshold::Inconclusive { .. } => "inconclusive",
        Threshold::Skipped { .. } => "skipped",
    };
    ThresholdRow { assemblage: assemblage.to_string(), set, n, eta: t.value(), kind, status }
}

fn profile_rows(name: &str, p: &ThresholdProfile) -> Vec<ThresholdRow> {
    let n = p.n;
    let mut rows = vec![
        row(name, "JM".into(), Some(n), &p.jm, "exact"),
        row(name, format!("SIM^Det_{n}"), Some(n), &p.sim_det, "exact"),
    ];
    for (i, s) in p.sim_fixed.iter().enumerate() {
        rows.push(row(name, format!("SIM_{n} (pre {})", i + 1), Some(n), &s.threshold, "lower bound"));
    }
    rows.push(row(name, format!("JM^conv_{n}"), Some(n), &p.jm_conv, "exact"));
    rows.push(row(name, format!("Copy_{n}"), Some(n), &p.copy, "exact"));
    let clone = Threshold::Ok { value: p.clone_bound_value };
    rows.push(row(name, "clone bound".into(), Some(n), &clone, "lower bound"));
    rows
}

fn single_row(name: &str, set: String, n: Option<usize>, value: f64, kind: &'static str) -> Vec<ThresholdRow> {
    vec![row(name, set, n, &Threshold::Ok { value }, kind)]
}

/// Runs the scenario's task.
pub fn execute(s: &Scenario, cfg: &RunConfig) -> CliResult<RunOutput> {
    let opts = solve_options(cfg.tol, s.tol)?;
    let task = s.task;
    if s.sweep.is_some() && matches!(task, Task::SimGrid | Task::CloneBound | Task::Profile | Task::Fuzz) {
        return Err(CliError::invalid(format!("task {} takes no sweep", task.name())));
    }
    let mut inconclusive = false;
    let (json, rows) = match task {
        Task::Jm => {
            let src = s.source()?;
            let a = &src.assemblage;
            let subset = s.subset(a.settings())?;
            let visibility = jm_visibility(a, &subset, &opts)?.value();
            let decisions = decide::<ParentPovm>(a, &s.visibilities()?, |noisy| {
                let d = jm_feasible(noisy, &subset, &opts)?;
                let w = match d.witness {
                    Some(p) => {
                        let r = verify_parent(noisy, &subset, &p)?;
                        Some((p, r))
                    }
                    None => None,
                };
                Ok((d.member, d.robustness, w))
            })?;
            let one_based: Vec<usize> = subset.iter().map(|x| x + 1).collect();
            let labels: Vec<String> = one_based.iter().map(usize::to_string).collect();
            let rows = single_row(&src.name, format!("JM ({})", labels.join(",")), None, visibility, "exact");
            let body = ThresholdBody { n: None, subset: Some(one_based), visibility, decisions };
            (render(task, src.name, &opts, body), rows)
        }
        Task::SimDet => {
            let src = s.source()?;
            let a = &src.assemblage;
            let n = s.require_n()?;
            let visibility = sim_det_visibility(a, n, &opts)?.value();
            let decisions = decide::<String>(a, &s.visibilities()?, |noisy| {
                let d = sim_det_feasible(noisy, n, &opts)?;
                let w = match d.witness {
                    Some(part) => Some((part.to_string(), block_residual(noisy, &part, &opts)?)),
                    None => None,
                };
                Ok((d.member, d.robustness, w))
            })?;
            let rows = single_row(&src.name, format!("SIM^Det_{n}"), Some(n), visibility, "exact");
            let body = ThresholdBody { n: Some(n), subset: None, visibility, decisions };
            (render(task, src.name, &opts, body), rows)
        }
        Task::Nwise => {
            let src = s.source()?;
            let a = &src.assemblage;
            let n = s.require_n()?;
            let visibility = nwise_visibility(a, n, &opts)?.value();
            let decisions = decide::<ConvexDecomposition>(a, &s.visibilities()?, |noisy| {
                let d = nwise_feasible(noisy, n, &opts)?;
                let w = match d.witness {
                    Some(dec) => {
                        let r = verify_decomposition(noisy, &dec)?;
                        Some((dec, r))
                    }
                    None => None,
                };
                Ok((d.member, d.robustness, w))
            })?;
            let rows = single_row(&src.name, format!("JM^conv_{n}"), Some(n), visibility, "exact");
            let body = ThresholdBody { n: Some(n), subset: None, visibility, decisions };
            (render(task, src.name, &opts, body), rows)
        }
        Task::Ncopy => {
            let src = s.source()?;
            let a = &src.assemblage;
            let n = s.require_n()?;
            let limit = cfg.max_copy_dim.or(s.max_copy_dim).unwrap_or(DEFAULT_MAX_COPY_DIM);
            let trials = s.trials.unwrap_or(DEFAULT_TRIALS);
            let visibility = ncopy_visibility_with_limit(a, n, limit, &opts)?.value();
            let decisions = decide::<MultiCopyParent>(a, &s.visibilities()?, |noisy| {
                let d = ncopy_feasible_with_limit(noisy, n, limit, &opts)?;
                let w = match d.witness {
                    Some(p) => {
                        let r = verify_multicopy_statistics(noisy, &p, trials)?.max(multicopy_povm_residual(&p));
                        Some((p, r))
                    }
                    None => None,
                };
                Ok((d.member, d.robustness, w))
            })?;
            let rows = single_row(&src.name, format!("Copy_{n}"), Some(n), visibility, "exact");
            let body = ThresholdBody { n: Some(n), subset: None, visibility, decisions };
            (render(task, src.name, &opts, body), rows)
        }
        Task::SimGrid => {
            let src = s.source()?;
            let n = s.require_n()?;
            let ell = match cfg.ell.or(s.ell) {
                Some(l) => l,
                None if cfg.fast => FAST_ELL,
                None => return Err(CliError::invalid("task sim-grid needs ell")),
            };
            let grid = GridSpec::from_step(ell)?;
            let noisy = s.noisy(&src.assemblage)?;
            let certificate = sim_grid_certificate(&noisy, n, &grid, cfg.jobs.max(1), &opts)?;
            inconclusive = !certificate.is_valid();
            let rows = vec![ThresholdRow {
                assemblage: src.name.clone(),
                set: format!("SIM_{n} distance lower bound"),
                n: Some(n),
                eta: s.eta,
                kind: "lower bound",
                status: if certificate.is_valid() { "ok" } else { "inconclusive" },
            }];
            let body = GridBody {
                n,
                eta: s.eta,
                certifies_non_membership: certificate.certifies_non_membership(),
                certificate,
            };
            (render(task, src.name, &opts, body), rows)
        }
        Task::CloneBound => {
            let n = s.require_n()?;
            let (name, d, m) = match (&s.assemblage, s.d, s.m) {
                (Some(_), _, _) => {
                    let src = s.source()?;
                    (src.name, src.assemblage.dim(), src.assemblage.settings())
                }
                (None, Some(d), Some(m)) => (format!("d={d} m={m}"), d, m),
                _ => return Err(CliError::invalid("task clone-bound needs an assemblage or both d and m")),
            };
            let exact: Ratio<u64> = clone_bound(d, m, n)?;
            let value = *exact.numer() as f64 / *exact.denom() as f64;
            let rows = single_row(&name, format!("clone bound Copy_{n}"), Some(n), value, "lower bound");
            let body = CloneBody { d, m, n, exact: exact.to_string(), value };
            (render(task, name, &opts, body), rows)
        }
        Task::Profile => {
            let src = s.source()?;
            let n = s.require_n()?;
            let pre = s.pre.clone().unwrap_or_default();
            let noisy = s.noisy(&src.assemblage)?;
            let mut profile = threshold_profile(&noisy, n, &pre, &opts)?;
            profile.descriptor = src.name.clone();
            let mut entries = vec![&profile.jm, &profile.sim_det, &profile.jm_conv, &profile.copy];
            entries.extend(profile.sim_fixed.iter().map(|f| &f.threshold));
            inconclusive = entries.iter().any(|t| matches!(t, Threshold::Inconclusive { .. }));
            let rows = profile_rows(&src.name, &profile);
            (render(task, src.name, &opts, ProfileBody { profile }), rows)
        }
        Task::Fuzz => {
            let need = |v: Option<usize>, f: &str| v.ok_or_else(|| CliError::invalid(format!("task fuzz needs {f}")));
            let spec = FuzzSpec {
                d: need(s.d, "d")?,
                m: need(s.m, "m")?,
                k: need(s.k, "k")?,
                n: s.require_n()?,
                count: need(s.count, "count")?,
                seed: s.seed.unwrap_or(0),
            };
            let report = hierarchy_fuzz(&spec, cfg.jobs.max(1), &opts)?;
            inconclusive = report.violation_count > 0 || report.inconclusive_count > 0;
            let rows = report
                .cases
                .iter()
                .flat_map(|c| profile_rows(&c.profile.descriptor, &c.profile))
                .collect();
            (render(task, "random".into(), &opts, FuzzBody { report }), rows)
        }
    };
    Ok(RunOutput { json, rows, inconclusive })
}

pub fn write_csv(path: &Path, rows: &[ThresholdRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the scenario, runs it and writes the result file (stdout when no
/// output path is set). Returns the exit code for a completed run.
pub fn run_file(scenario: &Path, cfg: &RunConfig) -> CliResult<i32> {
    let text = std::fs::read_to_string(scenario)
        .map_err(|e| CliError::invalid(format!("cannot read {}: {e}", scenario.display())))?;
    let s = Scenario::parse(&text)?;
    let out = execute(&s, cfg)?;
    match cfg.out.as_ref().or(s.out.as_ref()) {
        Some(path) => std::fs::write(path, &out.json)
            .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{}", out.json),
    }
    if let Some(path) = &cfg.csv {
        write_csv(path, &out.rows)?;
    }
    Ok(if out.inconclusive { crate::error::EXIT_INCONCLUSIVE } else { 0 })
}
