//! Probabilistic `n`-simulability: the distance to simulations with a fixed
//! pre-processing, visibility lower bounds from one strategy, and the
//! certified grid lower bound on the distance to all `n`-simulable assemblages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assemblage::{Assemblage, Visibility};
use crate::conic::{operator_interval_constraint, ConicProblem, HermitianExpr, LinearFunctional, ScalarVar, SolveOptions, SolveStatus};
use crate::error::{Error, Result};
use crate::parent::{declare_visibility, subtract_target, BlockParent, ParentPovm};
use crate::structures::PartitionCollection;

/// Row-stochastic `m x n` matrix of probabilities `p(x'|x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PreProcessing {
    probs: Vec<Vec<f64>>,
}

impl PreProcessing {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let Some(n) = probs.first().map(Vec::len) else {
            return Err(Error::invalid("pre-processing needs at least one row"));
        };
        if n == 0 || probs.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("pre-processing rows must share a nonzero length"));
        }
        for (x, row) in probs.iter().enumerate() {
            if row.iter().any(|&p| p.is_nan() || p < 0.0) {
                return Err(Error::invalid(format!("row {x} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("row {x} sums to {s}, not 1")));
            }
        }
        Ok(Self { probs })
    }

    /// `p(x'|x) = [x' == f(x)]`.
    pub fn deterministic(f: &[usize], n: usize) -> Result<Self> {
        if let Some(&bad) = f.iter().find(|&&t| t >= n) {
            return Err(Error::invalid(format!("target {bad} outside 0..{n}")));
        }
        Self::new(f.iter().map(|&t| (0..n).map(|y| if y == t { 1.0 } else { 0.0 }).collect()).collect())
    }

    /// Sends every setting of block `j` to simulator `j`.
    pub fn from_partition(p: &PartitionCollection, n: usize) -> Result<Self> {
        if p.block_count() > n {
            return Err(Error::invalid(format!("partition {p} has more than {n} blocks")));
        }
        let mut f = vec![0; p.settings()];
        for (j, b) in p.blocks().iter().enumerate() {
            for &x in b {
                f[x] = j;
            }
        }
        Self::deterministic(&f, n)
    }

    pub fn settings(&self) -> usize {
        self.probs.len()
    }

    pub fn targets(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, x: usize, target: usize) -> f64 {
        self.probs[x][target]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

impl TryFrom<Vec<Vec<f64>>> for PreProcessing {
    type Error = Error;
    fn try_from(probs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<PreProcessing> for Vec<Vec<f64>> {
    fn from(p: PreProcessing) -> Self {
        p.probs
    }
}

/// Simulator POVMs (one per target, outcomes are tuples over all settings)
/// and the per-effect distances `lambda_{a|x}` of an optimal simulation.
#[derive(Clone, Debug, Serialize)]
pub struct Simulation {
    pub pre: PreProcessing,
    pub simulators: Vec<ParentPovm>,
    /// Indexed `[x][a]`.
    pub lambdas: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPreDistance {
    pub nu: f64,
    pub simulation: Simulation,
}

fn check_pre(a: &Assemblage<f64>, n: usize, pre: &PreProcessing) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if pre.settings() != a.settings() || pre.targets() != n {
        return Err(Error::invalid(format!(
            "pre-processing is {}x{}, expected {}x{n}",
            pre.settings(),
            pre.targets(),
            a.settings()
        )));
    }
    Ok(())
}

/// Simulator variables and the simulated effect `sum_{x'} p(x'|x) sum_{a': a'_x = a} M'_{a'|x'}`.
struct Simulators {
    blocks: Vec<BlockParent>,
}

impl Simulators {
    fn declare(p: &mut ConicProblem, a: &Assemblage<f64>, n: usize) -> Self {
        let all: Vec<usize> = (0..a.settings()).collect();
        let counts = a.outcome_counts();
        let blocks = (0..n)
            .map(|y| {
                let b = BlockParent::declare(p, &format!("S{y}"), a.dim(), &all, &counts);
                b.add_completeness(p, a.dim(), None);
                b
            })
            .collect();
        Self { blocks }
    }

    fn simulated(&self, e: &mut HermitianExpr, pre: &PreProcessing, x: usize, out: usize) {
        for (y, b) in self.blocks.iter().enumerate() {
            b.add_marginal(e, x, out, pre.prob(x, y));
        }
    }
}

/// `nu_p = min sum_{a,x} lambda_{a|x}` subject to
/// `-lambda_{a|x} I <= M_{a|x} - M^sim_{a|x} <= lambda_{a|x} I`, with the
/// post-processing fixed to `q(a|x,a') = [a == a'_x]`.
pub fn sim_fixed_pre_distance(
    a: &Assemblage<f64>,
    n: usize,
    pre: &PreProcessing,
    opts: &SolveOptions,
) -> Result<FixedPreDistance> {
    check_pre(a, n, pre)?;
    let d = a.dim();
    let mut p = ConicProblem::new();
    let sims = Simulators::declare(&mut p, a, n);
    let mut lambdas: Vec<Vec<ScalarVar>> = Vec::with_capacity(a.settings());
    let mut objective = LinearFunctional::new();
    for x in 0..a.settings() {
        let mut row = Vec::new();
        for out in 0..a.measurement(x).outcomes() {
            let lambda = p.add_scalar_var(format!("lambda[{x},{out}]"), Some(0.0));
            let mut e = HermitianExpr::zero(d);
            sims.simulated(&mut e, pre, x, out);
            subtract_target(&mut e, a.effect(out, x), None, 1.0);
            operator_interval_constraint(&mut p, &e, lambda);
            objective = objective.scalar(lambda, 1.0);
            row.push(lambda);
        }
        lambdas.push(row);
    }
    p.minimize(objective);
    let sol = opts.solve(&p)?.require_optimal("fixed pre-processing distance")?;
    let simulation = Simulation {
        pre: pre.clone(),
        simulators: sims.blocks.iter().map(|b| b.extract(&sol)).collect(),
        lambdas: lambdas.iter().map(|r| r.iter().map(|&l| sol.scalar(l)).collect()).collect(),
    };
    Ok(FixedPreDistance { nu: sol.objective_value.max(0.0), simulation })
}

/// Largest `eta` at which the depolarized assemblage is simulated exactly by
/// `n` measurements under the given pre-processing. This is a lower bound on
/// the `n`-simulability threshold, attained by one strategy.
pub fn sim_fixed_pre_visibility(
    a: &Assemblage<f64>,
    n: usize,
    pre: &PreProcessing,
    opts: &SolveOptions,
) -> Result<Visibility> {
    check_pre(a, n, pre)?;
    let d = a.dim();
    let mut p = ConicProblem::new();
    let t = declare_visibility(&mut p);
    let sims = Simulators::declare(&mut p, a, n);
    for x in 0..a.settings() {
        for out in 0..a.measurement(x).outcomes() - 1 {
            let mut e = HermitianExpr::zero(d);
            sims.simulated(&mut e, pre, x, out);
            subtract_target(&mut e, a.effect(out, x), Some(t), 1.0);
            p.add_hermitian_eq(&e);
        }
    }
    let sol = opts.solve(&p)?.require_optimal("fixed pre-processing visibility")?;
    Ok(Visibility::clamped(sol.scalar(t)))
}

/// Assemblage-norm distance from `subset` to the jointly measurable set.
pub fn jm_distance(a: &Assemblage<f64>, subset: &[usize], opts: &SolveOptions) -> Result<f64> {
    let sel = a.select(subset)?;
    let pre = PreProcessing::deterministic(&vec![0; sel.settings()], 1)?;
    Ok(sim_fixed_pre_distance(&sel, 1, &pre, opts)?.nu)
}

/// Largest number of grid points a certificate will enumerate.
pub const MAX_GRID_POINTS: u64 = 50_000_000;

/// Lattice of step `1/steps` on each row of a pre-processing: every row is
/// `(c_1, ..., c_n) / steps` with nonnegative integers summing to `steps`.
/// Endpoints are included, so `steps = 50` gives 51 values per free coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    steps: u32,
}

impl GridSpec {
    pub fn new(steps: u32) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(Self { steps })
    }

    /// From a step size `ell` in `(0, 1]` with `1/ell` an integer.
    pub fn from_step(ell: f64) -> Result<Self> {
        if !(ell > 0.0 && ell <= 1.0) {
            return Err(Error::invalid(format!("grid step {ell} outside (0, 1]")));
        }
        let steps = (1.0 / ell).round();
        if (steps * ell - 1.0).abs() > 1e-9 || steps > u32::MAX as f64 {
            return Err(Error::invalid(format!("grid step {ell} does not divide 1")));
        }
        Self::new(steps as u32)
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn ell(&self) -> f64 {
        1.0 / f64::from(self.steps)
    }

    pub fn points_per_coordinate(&self) -> u32 {
        self.steps + 1
    }

    /// Largest max-norm distance from a point of the `n`-simplex to its
    /// nearest grid row: `ell (n - 1) / n`, i.e. `ell / 2` for `n = 2`.
    pub fn covering_radius(&self, n: usize) -> f64 {
        (n.saturating_sub(1)) as f64 / (n as f64 * f64::from(self.steps))
    }

    /// All grid rows for `n` targets, lexicographic in `(c_2, ..., c_n)`.
    pub fn rows(&self, n: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        if n == 0 {
            return out;
        }
        let mut tail = vec![0u32; n - 1];
        loop {
            let used: u32 = tail.iter().sum();
            if used <= self.steps {
                let mut row = Vec::with_capacity(n);
                row.push(self.steps - used);
                row.extend_from_slice(&tail);
                out.push(row);
            }
            let mut pos = tail.len();
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                tail[pos] += 1;
                if tail.iter().sum::<u32>() <= self.steps {
                    break;
                }
                tail[pos] = 0;
            }
        }
    }

    /// Number of grid pre-processings for `m` settings and `n` targets, if it fits in `u64`.
    pub fn point_count(&self, m: usize, n: usize) -> Option<u64> {
        let r = self.rows(n).len() as u64;
        (0..m).try_fold(1u64, |acc, _| acc.checked_mul(r))
    }
}

/// A grid point whose SDP did not solve to optimality.
#[derive(Clone, Debug, Serialize)]
pub struct GridFailure {
    pub index: u64,
    pub pre: PreProcessing,
    pub status: SolveStatus,
}

/// Certified lower bound `nu*_g - epsilon` on the assemblage-norm distance to
/// the `n`-simulable set. A positive bound with no failures certifies non-membership.
#[derive(Clone, Debug, Serialize)]
pub struct GridCertificate {
    pub ell: f64,
    pub steps: u32,
    pub settings: usize,
    pub targets: usize,
    /// Number of `(a, x)` pairs.
    pub effects: usize,
    pub nu_g_star: f64,
    pub epsilon: f64,
    pub lower_bound: f64,
    pub argmin_pre: PreProcessing,
    pub argmin_index: u64,
    pub grid_points_evaluated: u64,
    pub failures: Vec<GridFailure>,
}

impl GridCertificate {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn certifies_non_membership(&self) -> bool {
        self.is_valid() && self.lower_bound > 0.0
    }
}

/// `epsilon = delta * |{(a, x)}| * n` with `delta` the covering radius; for
/// `n = 2` and `k` outcomes per setting this is `(ell/2) k m n`. Computed in
/// integers with one final division.
pub fn grid_epsilon(grid: &GridSpec, effects: usize, n: usize) -> f64 {
    ((n.saturating_sub(1) * effects) as f64) / f64::from(grid.steps)
}

fn grid_pre(rows: &[Vec<u32>], m: usize, steps: u32, index: u64) -> PreProcessing {
    let r = rows.len() as u64;
    let mut rem = index;
    let mut picked = vec![0usize; m];
    for x in (0..m).rev() {
        picked[x] = (rem % r) as usize;
        rem /= r;
    }
    let probs = picked
        .iter()
        .map(|&i| rows[i].iter().map(|&c| f64::from(c) / f64::from(steps)).collect())
        .collect();
    PreProcessing { probs }
}

/// Evaluates the fixed pre-processing distance at every grid point (setting 0
/// varies slowest) on a pool of `jobs` threads and keeps the smallest value,
/// the first index winning ties.
pub fn sim_grid_certificate(
    a: &Assemblage<f64>,
    n: usize,
    grid: &GridSpec,
    jobs: usize,
    opts: &SolveOptions,
) -> Result<GridCertificate> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let m = a.settings();
    let total = grid
        .point_count(m, n)
        .filter(|&c| c <= MAX_GRID_POINTS)
        .ok_or_else(|| Error::invalid(format!("grid has more than {MAX_GRID_POINTS} points")))?;
    let rows = grid.rows(n);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} worker threads: {e}")))?;
    let values: Vec<Result<f64>> = pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|i| sim_fixed_pre_distance(a, n, &grid_pre(&rows, m, grid.steps, i), opts).map(|r| r.nu))
            .collect()
    });
    let mut best: Option<(u64, f64)> = None;
    let mut failures = Vec::new();
    for (i, v) in (0..total).zip(values) {
        match v {
            Ok(nu) => {
                if best.is_none_or(|(_, b)| nu < b) {
                    best = Some((i, nu));
                }
            }
            Err(Error::Inconclusive { status, .. }) => {
                failures.push(GridFailure { index: i, pre: grid_pre(&rows, m, grid.steps, i), status });
            }
            Err(e) => return Err(e),
        }
    }
    let Some((argmin_index, nu_g_star)) = best else {
        return Err(Error::Inconclusive {
            status: SolveStatus::Inaccurate,
            context: "no grid point solved".to_string(),
        });
    };
    let effects: usize = a.outcome_counts().iter().sum();
    let epsilon = grid_epsilon(grid, effects, n);
    Ok(GridCertificate {
        ell: grid.ell(),
        steps: grid.steps,
        settings: m,
        targets: n,
        effects,
        nu_g_star,
        epsilon,
        lower_bound: nu_g_star - epsilon,
        argmin_pre: grid_pre(&rows, m, grid.steps, argmin_index),
        argmin_index,
        grid_points_evaluated: total,
        failures,
    })
}
