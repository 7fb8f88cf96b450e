//! Threshold profiles across the incompatibility hierarchy, with the
//! inclusion chain `JM <= SIM^Det_n <= SIM_n <= JM^conv_n <= Copy_n` checked
//! on every profile.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assemblage::{random_assemblage, Assemblage, Visibility};
use crate::conic::SolveOptions;
use crate::error::{Error, Result};
use crate::jm::jm_visibility;
use crate::multicopy::{clone_bound, ncopy_visibility};
use crate::simgrid::{sim_fixed_pre_visibility, PreProcessing};
use crate::structures::{nwise_visibility, sim_det_visibility};

/// Slack allowed in every inclusion of the chain.
pub const CHAIN_TOL: f64 = 1e-4;

/// Outcome of one threshold computation.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Threshold {
    Ok { value: f64 },
    /// The solver did not reach a trustworthy optimum.
    Inconclusive { detail: String },
    /// Not computed, e.g. past the multi-copy dimension guard.
    Skipped { reason: String },
}

impl Threshold {
    pub fn value(&self) -> Option<f64> {
        match self {
            Threshold::Ok { value } => Some(*value),
            _ => None,
        }
    }

    fn from_result(r: Result<Visibility>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Threshold::Ok { value: v.value() }),
            Err(e) if e.is_inconclusive() => Ok(Threshold::Inconclusive { detail: e.to_string() }),
            Err(e @ Error::DimensionGuard { .. }) => Ok(Threshold::Skipped { reason: e.to_string() }),
            Err(e) => Err(e),
        }
    }

    fn cell(&self) -> String {
        match self {
            Threshold::Ok { value } => format!("{value:.6}"),
            Threshold::Inconclusive { .. } => "inconclusive".into(),
            Threshold::Skipped { .. } => "skipped".into(),
        }
    }
}

/// Visibility reached by one fixed pre-processing; a lower bound on the `SIM_n` threshold.
#[derive(Clone, Debug, Serialize)]
pub struct FixedPreThreshold {
    pub pre: PreProcessing,
    pub threshold: Threshold,
}

/// Critical visibilities of one assemblage for every set of the hierarchy.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdProfile {
    pub descriptor: String,
    pub dim: usize,
    pub settings: usize,
    pub n: usize,
    pub tol: f64,
    pub chain_tol: f64,
    pub jm: Threshold,
    pub sim_det: Threshold,
    pub sim_fixed: Vec<FixedPreThreshold>,
    pub jm_conv: Threshold,
    pub copy: Threshold,
    /// Exact cloning lower bound on the `Copy_n` threshold, as `num/den`.
    pub clone_bound: String,
    pub clone_bound_value: f64,
    /// Consecutive gaps `SIM^Det - JM`, `JM^conv - SIM^Det`, `Copy - JM^conv`, where known.
    pub gaps: Vec<Option<f64>>,
    #[serde(skip)]
    pub runtimes: Vec<(&'static str, Duration)>,
}

impl ThresholdProfile {
    /// Best fixed pre-processing lower bound among the conclusive strategies.
    pub fn best_sim_fixed(&self) -> Option<f64> {
        self.sim_fixed.iter().filter_map(|s| s.threshold.value()).reduce(f64::max)
    }

    /// Whether every consecutive gap of the chain is known and positive.
    pub fn strictly_increasing(&self) -> bool {
        self.gaps.iter().all(|g| g.is_some_and(|g| g > 0.0))
    }

    /// Inclusions violated beyond [`CHAIN_TOL`]; entries that are not
    /// conclusive are left out of the comparison.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut le = |lo_name: &str, lo: Option<f64>, hi_name: &str, hi: Option<f64>| {
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if lo > hi + CHAIN_TOL {
                    out.push(format!("{lo_name} = {lo:.6} exceeds {hi_name} = {hi:.6}"));
                }
            }
        };
        let jm = self.jm.value();
        let det = self.sim_det.value();
        let conv = self.jm_conv.value();
        let copy = self.copy.value();
        let clone = Some(self.clone_bound_value);
        le("eta_JM", jm, "eta_SIMdet", det);
        le("eta_SIMdet", det, "eta_JMconv", conv);
        le("eta_JMconv", conv, "eta_Copy", copy);
        le("clone bound", clone, "eta_Copy", copy);
        for (i, s) in self.sim_fixed.iter().enumerate() {
            let v = s.threshold.value();
            le("eta_JM", jm, &format!("eta_SIMfixed[{i}]"), v);
            le(&format!("eta_SIMfixed[{i}]"), v, "eta_JMconv", conv);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Plain-text table, one row per set.
    pub fn to_table(&self) -> String {
        let n = self.n;
        let mut rows: Vec<(String, String, &str)> = vec![
            ("JM".into(), self.jm.cell(), "exact"),
            (format!("SIM^Det_{n}"), self.sim_det.cell(), "exact"),
        ];
        for (i, s) in self.sim_fixed.iter().enumerate() {
            rows.push((format!("SIM_{n} (pre {})", i + 1), s.threshold.cell(), "lower bound"));
        }
        rows.push((format!("JM^conv_{n}"), self.jm_conv.cell(), "exact"));
        rows.push((format!("Copy_{n}"), self.copy.cell(), "exact"));
        rows.push(("clone bound".into(), format!("{:.6}", self.clone_bound_value), self.clone_bound.as_str()));
        let mut s = format!("{} (d = {}, m = {}, n = {n})\n", self.descriptor, self.dim, self.settings);
        let _ = writeln!(s, "{:<16} {:>12}  note", "set", "eta");
        for (name, value, note) in rows {
            let _ = writeln!(s, "{name:<16} {value:>12}  {note}");
        }
        s
    }
}

fn timed<T>(runtimes: &mut Vec<(&'static str, Duration)>, name: &'static str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    runtimes.push((name, start.elapsed()));
    out
}

fn describe(a: &Assemblage<f64>) -> String {
    let counts: Vec<String> = a.outcome_counts().iter().map(usize::to_string).collect();
    format!("assemblage d={} outcomes=[{}]", a.dim(), counts.join(","))
}

/// All thresholds, without the chain check.
fn compute_profile(
    a: &Assemblage<f64>,
    n: usize,
    pre_strategies: &[PreProcessing],
    opts: &SolveOptions,
) -> Result<ThresholdProfile> {
    let (d, m) = (a.dim(), a.settings());
    if n == 0 || n > m {
        return Err(Error::invalid(format!("n must lie in 1..={m}, got {n}")));
    }
    let all: Vec<usize> = (0..m).collect();
    let mut rt = Vec::new();
    let jm = timed(&mut rt, "jm", || Threshold::from_result(jm_visibility(a, &all, opts)))?;
    let sim_det = timed(&mut rt, "sim_det", || Threshold::from_result(sim_det_visibility(a, n, opts)))?;
    let mut sim_fixed = Vec::with_capacity(pre_strategies.len());
    for pre in pre_strategies {
        let threshold =
            timed(&mut rt, "sim_fixed", || Threshold::from_result(sim_fixed_pre_visibility(a, n, pre, opts)))?;
        sim_fixed.push(FixedPreThreshold { pre: pre.clone(), threshold });
    }
    let jm_conv = timed(&mut rt, "jm_conv", || Threshold::from_result(nwise_visibility(a, n, opts)))?;
    let copy = timed(&mut rt, "copy", || Threshold::from_result(ncopy_visibility(a, n, opts)))?;
    let exact: Ratio<u64> = clone_bound(d, m, n)?;
    let gap = |lo: &Threshold, hi: &Threshold| Some(hi.value()? - lo.value()?);
    let gaps = vec![gap(&jm, &sim_det), gap(&sim_det, &jm_conv), gap(&jm_conv, &copy)];
    Ok(ThresholdProfile {
        descriptor: describe(a),
        dim: d,
        settings: m,
        n,
        tol: opts.tol,
        chain_tol: CHAIN_TOL,
        jm,
        sim_det,
        sim_fixed,
        jm_conv,
        copy,
        clone_bound: exact.to_string(),
        clone_bound_value: *exact.numer() as f64 / *exact.denom() as f64,
        gaps,
        runtimes: rt,
    })
}

/// Every threshold of the hierarchy for `a` at `n`, each SDP run in turn.
/// Solver trouble is kept per entry; an inclusion violated beyond
/// [`CHAIN_TOL`] is an [`Error::HierarchyViolation`].
pub fn threshold_profile(
    a: &Assemblage<f64>,
    n: usize,
    pre_strategies: &[PreProcessing],
    opts: &SolveOptions,
) -> Result<ThresholdProfile> {
    let profile = compute_profile(a, n, pre_strategies, opts)?;
    let violations = profile.violations();
    if violations.is_empty() {
        Ok(profile)
    } else {
        Err(Error::HierarchyViolation(format!("{}: {}", profile.descriptor, violations.join("; "))))
    }
}

/// One random assemblage of a fuzz run.
#[derive(Clone, Debug, Serialize)]
pub struct FuzzCase {
    pub seed: u64,
    pub profile: ThresholdProfile,
    pub violations: Vec<String>,
}

/// Shape of the random assemblages of a fuzz run and how many to draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzSpec {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzReport {
    #[serde(flatten)]
    pub spec: FuzzSpec,
    pub cases: Vec<FuzzCase>,
    pub violation_count: usize,
    pub inconclusive_count: usize,
}

impl FuzzReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "fuzz d = {}, m = {}, k = {}, n = {}: {} cases, {} violations, {} inconclusive\n",
            self.spec.d,
            self.spec.m,
            self.spec.k,
            self.spec.n,
            self.spec.count,
            self.violation_count,
            self.inconclusive_count
        );
        let n = self.spec.n;
        let _ = writeln!(
            s,
            "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "seed",
            "JM",
            format!("SIM^Det_{n}"),
            format!("SIM_{n} pre"),
            format!("JM^conv_{n}"),
            format!("Copy_{n}")
        );
        for c in &self.cases {
            let p = &c.profile;
            let fixed = p.best_sim_fixed().map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                s,
                "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
                c.seed,
                p.jm.cell(),
                p.sim_det.cell(),
                fixed,
                p.jm_conv.cell(),
                p.copy.cell()
            );
        }
        s
    }
}

fn inconclusive(p: &ThresholdProfile) -> bool {
    let mut entries = vec![&p.jm, &p.sim_det, &p.jm_conv, &p.copy];
    entries.extend(p.sim_fixed.iter().map(|s| &s.threshold));
    entries.iter().any(|t| matches!(t, Threshold::Inconclusive { .. }))
}

/// Profiles of `count` random assemblages (seeds `seed, seed + 1, ...`), with
/// the uniform pre-processing as fixed strategy. Profiles run on a pool of
/// `jobs` threads; the report is in seed order whatever the pool width.
pub fn hierarchy_fuzz(spec: &FuzzSpec, jobs: usize, opts: &SolveOptions) -> Result<FuzzReport> {
    let FuzzSpec { d, m, k, n, count, seed } = *spec;
    if n == 0 || n > m {
        return Err(Error::invalid(format!("n must lie in 1..={m}, got {n}")));
    }
    let uniform = PreProcessing::new(vec![vec![1.0 / n as f64; n]; m])?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let cases: Vec<FuzzCase> = pool.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let s = seed.wrapping_add(i);
                let a = random_assemblage::<f64>(d, m, k, s)?;
                let mut profile = compute_profile(&a, n, std::slice::from_ref(&uniform), opts)?;
                profile.descriptor = format!("random d={d} m={m} k={k} seed={s}");
                let violations = profile.violations();
                Ok(FuzzCase { seed: s, profile, violations })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(FuzzReport {
        spec: *spec,
        violation_count: cases.iter().filter(|c| !c.violations.is_empty()).count(),
        inconclusive_count: cases.iter().filter(|c| inconclusive(&c.profile)).count(),
        cases,
    })
}
