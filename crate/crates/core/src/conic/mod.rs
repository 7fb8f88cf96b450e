//! A small model of semidefinite programs over Hermitian matrix variables.
//!
//! Problems are built from PSD matrix variables (complex Hermitian or real
//! symmetric), real scalar variables with optional lower bounds, affine
//! equality constraints and affine PSD constraints `E >= 0`. Every linear functional of a matrix variable is given
//! by a Hermitian pairing matrix `C` and evaluates to `Re Tr[C X]`.
//!
//! [`solve`] lowers the model to a conic backend. Complex variables are
//! parametrized by their real and imaginary parts and the PSD condition is
//! imposed on the real embedding `[[Re X, -Im X], [Im X, Re X]]`.

mod backend;
mod sdpa;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::HermitianOp;

pub use backend::solve;

/// Default solve tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// A distance-type optimum at or below this value counts as zero, and a
/// robustness optimum within this of 1 counts as membership.
pub const MEMBERSHIP_MARGIN: f64 = 1e-6;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PsdVar(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScalarVar(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Field {
    Complex,
    Real,
}

#[derive(Clone, Debug)]
pub struct PsdVarDecl {
    pub label: String,
    pub dim: usize,
    pub field: Field,
}

#[derive(Clone, Debug)]
pub struct ScalarVarDecl {
    pub label: String,
    pub lower: Option<f64>,
}

/// `sum Re Tr[C_i X_i] + sum c_j s_j`.
#[derive(Clone, Debug, Default)]
pub struct LinearFunctional {
    pub matrix_terms: Vec<(PsdVar, CMatrix)>,
    pub scalar_terms: Vec<(ScalarVar, f64)>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn matrix(mut self, var: PsdVar, pairing: CMatrix) -> Self {
        self.matrix_terms.push((var, pairing));
        self
    }

    pub fn scalar(mut self, var: ScalarVar, coeff: f64) -> Self {
        self.scalar_terms.push((var, coeff));
        self
    }
}

#[derive(Clone, Debug)]
pub struct EqConstraint {
    pub lhs: LinearFunctional,
    pub rhs: f64,
}

/// Hermitian-valued affine expression
/// `K + sum_i c_i X_i + sum_j s_j H_j` in matrix variables `X_i` and scalars `s_j`.
#[derive(Clone, Debug)]
pub struct HermitianExpr {
    dim: usize,
    constant: CMatrix,
    var_terms: Vec<(PsdVar, f64)>,
    scalar_terms: Vec<(ScalarVar, CMatrix)>,
}

impl HermitianExpr {
    pub fn zero(dim: usize) -> Self {
        Self { dim, constant: CMatrix::zeros(dim, dim), var_terms: Vec::new(), scalar_terms: Vec::new() }
    }

    pub fn constant(op: &HermitianOp<f64>) -> Self {
        let mut e = Self::zero(op.dim());
        e.constant = op.matrix().clone();
        e
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_constant(&mut self, op: &HermitianOp<f64>, coeff: f64) -> &mut Self {
        self.constant += op.matrix() * Complex64::new(coeff, 0.0);
        self
    }

    pub fn add_var(&mut self, var: PsdVar, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.var_terms.push((var, coeff));
        }
        self
    }

    pub fn add_scalar(&mut self, var: ScalarVar, op: &HermitianOp<f64>) -> &mut Self {
        self.scalar_terms.push((var, op.matrix().clone()));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.var_terms.is_empty()
            && self.scalar_terms.is_empty()
            && self.constant.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }
}

/// Pairing matrices selecting `Re X_ij` and `Im X_ij` of a Hermitian `X`.
fn entry_pairings(dim: usize, i: usize, j: usize) -> (CMatrix, Option<CMatrix>) {
    let mut re = CMatrix::zeros(dim, dim);
    if i == j {
        re[(i, i)] = Complex64::new(1.0, 0.0);
        return (re, None);
    }
    re[(i, j)] = Complex64::new(0.5, 0.0);
    re[(j, i)] = Complex64::new(0.5, 0.0);
    let mut im = CMatrix::zeros(dim, dim);
    im[(i, j)] = Complex64::new(0.0, 0.5);
    im[(j, i)] = Complex64::new(0.0, -0.5);
    (re, Some(im))
}

#[derive(Clone, Debug, Default)]
pub struct ConicProblem {
    pub psd_vars: Vec<PsdVarDecl>,
    pub scalar_vars: Vec<ScalarVarDecl>,
    pub eq_constraints: Vec<EqConstraint>,
    /// Each expression is constrained to be positive semidefinite.
    pub psd_constraints: Vec<HermitianExpr>,
    /// Minimized.
    pub objective: LinearFunctional,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_psd_var(&mut self, label: impl Into<String>, dim: usize) -> PsdVar {
        self.psd_vars.push(PsdVarDecl { label: label.into(), dim, field: Field::Complex });
        PsdVar(self.psd_vars.len() - 1)
    }

    pub fn add_real_psd_var(&mut self, label: impl Into<String>, dim: usize) -> PsdVar {
        self.psd_vars.push(PsdVarDecl { label: label.into(), dim, field: Field::Real });
        PsdVar(self.psd_vars.len() - 1)
    }

    pub fn add_scalar_var(&mut self, label: impl Into<String>, lower: Option<f64>) -> ScalarVar {
        self.scalar_vars.push(ScalarVarDecl { label: label.into(), lower });
        ScalarVar(self.scalar_vars.len() - 1)
    }

    pub fn psd_dim(&self, var: PsdVar) -> usize {
        self.psd_vars[var.0].dim
    }

    pub fn add_eq(&mut self, lhs: LinearFunctional, rhs: f64) {
        self.eq_constraints.push(EqConstraint { lhs, rhs });
    }

    /// Imposes `expr >= 0`.
    pub fn add_psd_constraint(&mut self, expr: HermitianExpr) {
        self.psd_constraints.push(expr);
    }

    pub fn minimize(&mut self, objective: LinearFunctional) {
        self.objective = objective;
    }

    /// Imposes `expr == 0` entrywise: `d` diagonal rows plus real and
    /// imaginary rows for every strictly upper entry.
    pub fn add_hermitian_eq(&mut self, expr: &HermitianExpr) {
        let d = expr.dim;
        for i in 0..d {
            for j in i..d {
                let (re, im) = entry_pairings(d, i, j);
                self.push_entry_row(expr, i, j, &re, false);
                if let Some(im) = im {
                    self.push_entry_row(expr, i, j, &im, true);
                }
            }
        }
    }

    fn push_entry_row(&mut self, expr: &HermitianExpr, i: usize, j: usize, pairing: &CMatrix, imag: bool) {
        let part = |z: Complex64| if imag { z.im } else { z.re };
        let mut lhs = LinearFunctional::new();
        for &(v, coeff) in &expr.var_terms {
            lhs.matrix_terms.push((v, pairing * Complex64::new(coeff, 0.0)));
        }
        for (s, h) in &expr.scalar_terms {
            let c = part(h[(i, j)]);
            if c != 0.0 {
                lhs.scalar_terms.push((*s, c));
            }
        }
        let rhs = -part(expr.constant[(i, j)]);
        if lhs.matrix_terms.is_empty() && lhs.scalar_terms.is_empty() && rhs == 0.0 {
            return;
        }
        self.add_eq(lhs, rhs);
    }

    /// Checks the structural invariants: referenced variables exist, pairing
    /// matrices have the right size and are Hermitian.
    pub fn validate(&self) -> Result<()> {
        let check = |f: &LinearFunctional, what: &str| -> Result<()> {
            for (v, c) in &f.matrix_terms {
                let decl = self
                    .psd_vars
                    .get(v.0)
                    .ok_or_else(|| Error::invalid(format!("{what}: undeclared matrix variable {}", v.0)))?;
                if c.nrows() != decl.dim || c.ncols() != decl.dim {
                    return Err(Error::invalid(format!("{what}: pairing for '{}' has wrong size", decl.label)));
                }
                if (c - c.adjoint()).iter().any(|z| z.norm() > 1e-12) {
                    return Err(Error::invalid(format!("{what}: pairing for '{}' is not Hermitian", decl.label)));
                }
            }
            for (s, _) in &f.scalar_terms {
                if s.0 >= self.scalar_vars.len() {
                    return Err(Error::invalid(format!("{what}: undeclared scalar variable {}", s.0)));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (k, c) in self.eq_constraints.iter().enumerate() {
            check(&c.lhs, &format!("constraint {k}"))?;
        }
        if self.psd_vars.iter().any(|v| v.dim == 0) {
            return Err(Error::invalid("matrix variables need positive dimension"));
        }
        for (k, e) in self.psd_constraints.iter().enumerate() {
            let what = format!("PSD constraint {k}");
            if e.dim == 0 || (&e.constant - e.constant.adjoint()).iter().any(|z| z.norm() > 1e-12) {
                return Err(Error::invalid(format!("{what}: constant term is not Hermitian")));
            }
            for (v, _) in &e.var_terms {
                match self.psd_vars.get(v.0) {
                    Some(decl) if decl.dim == e.dim => {}
                    Some(decl) => return Err(Error::invalid(format!("{what}: '{}' has the wrong size", decl.label))),
                    None => return Err(Error::invalid(format!("{what}: undeclared matrix variable {}", v.0))),
                }
            }
            for (sv, h) in &e.scalar_terms {
                if sv.0 >= self.scalar_vars.len() {
                    return Err(Error::invalid(format!("{what}: undeclared scalar variable {}", sv.0)));
                }
                if h.nrows() != e.dim || (h - h.adjoint()).iter().any(|z| z.norm() > 1e-12) {
                    return Err(Error::invalid(format!("{what}: scalar coefficient is not Hermitian of the right size")));
                }
            }
        }
        Ok(())
    }

    /// The same problem with every PSD constraint `E >= 0` replaced by a new
    /// slack variable `S` (appended after the existing ones) and `E - S = 0`.
    pub fn slack_form(&self) -> ConicProblem {
        let mut p = ConicProblem { psd_constraints: Vec::new(), ..self.clone() };
        for (k, e) in self.psd_constraints.iter().enumerate() {
            let slack = p.add_psd_var(format!("psd_slack_{k}"), e.dim);
            let mut eq = e.clone();
            eq.add_var(slack, -1.0);
            p.add_hermitian_eq(&eq);
        }
        p
    }

    /// The same problem with every complex variable replaced by a real
    /// symmetric variable of twice the size, paired through the real
    /// embedding with halved coefficients (`Re Tr[C X] = Tr[R(C) R(X)] / 2`).
    /// PSD constraints are first turned into slack variables.
    pub fn embed_real(&self) -> ConicProblem {
        if !self.psd_constraints.is_empty() {
            return self.slack_form().embed_real();
        }
        let psd_vars = self
            .psd_vars
            .iter()
            .map(|v| match v.field {
                Field::Complex => PsdVarDecl { label: v.label.clone(), dim: 2 * v.dim, field: Field::Real },
                Field::Real => v.clone(),
            })
            .collect();
        let map = |f: &LinearFunctional| LinearFunctional {
            matrix_terms: f
                .matrix_terms
                .iter()
                .map(|(v, c)| match self.psd_vars[v.0].field {
                    Field::Complex => (*v, real_embedding(c).map(|x| Complex64::new(0.5 * x, 0.0))),
                    Field::Real => (*v, c.map(|z| Complex64::new(z.re, 0.0))),
                })
                .collect(),
            scalar_terms: f.scalar_terms.clone(),
        };
        ConicProblem {
            psd_vars,
            scalar_vars: self.scalar_vars.clone(),
            eq_constraints: self
                .eq_constraints
                .iter()
                .map(|c| EqConstraint { lhs: map(&c.lhs), rhs: c.rhs })
                .collect(),
            psd_constraints: Vec::new(),
            objective: map(&self.objective),
        }
    }

    /// Sparse SDPA text form of the problem, for cross-checking with external solvers.
    pub fn to_sdpa(&self) -> String {
        sdpa::write(&self.slack_form())
    }
}

/// `[[Re C, -Im C], [Im C, Re C]]`.
pub fn real_embedding(c: &CMatrix) -> DMatrix<f64> {
    let d = c.nrows();
    DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let z = c[(i % d, j % d)];
        match (i < d, j < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of [`real_embedding`] for a (possibly unstructured) symmetric
/// `2d x 2d` matrix: averages the two copies of each block.
pub fn complex_from_embedding(y: &DMatrix<f64>) -> CMatrix {
    let d = y.nrows() / 2;
    CMatrix::from_fn(d, d, |i, j| {
        Complex64::new(
            0.5 * (y[(i, j)] + y[(i + d, j + d)]),
            0.5 * (y[(i + d, j)] - y[(i, j + d)]),
        )
    })
}

/// Appends `-lambda I <= expr <= lambda I` as the PSD constraints
/// `lambda I - expr >= 0` and `lambda I + expr >= 0`.
pub fn operator_interval_constraint(problem: &mut ConicProblem, expr: &HermitianExpr, lambda: ScalarVar) {
    let id = HermitianOp::<f64>::identity(expr.dim());
    for sign in [-1.0, 1.0] {
        let mut e = HermitianExpr::zero(expr.dim());
        e.constant = &expr.constant * Complex64::new(sign, 0.0);
        e.var_terms = expr.var_terms.iter().map(|&(v, c)| (v, sign * c)).collect();
        e.scalar_terms = expr
            .scalar_terms
            .iter()
            .map(|(s, h)| (*s, h * Complex64::new(sign, 0.0)))
            .collect();
        e.add_scalar(lambda, &id);
        problem.add_psd_constraint(e);
    }
}

/// A membership verdict taken from an optimal value, with its witness.
#[derive(Clone, Debug, Serialize)]
pub struct Decision<W> {
    pub member: bool,
    /// The optimum the verdict was read from (a robustness capped at 1).
    pub robustness: f64,
    pub witness: Option<W>,
}

impl<W> Decision<W> {
    /// Member iff `robustness >= 1 - MEMBERSHIP_MARGIN`; the witness is kept only for members.
    pub(crate) fn from_robustness(robustness: f64, witness: W) -> Self {
        let member = robustness >= 1.0 - MEMBERSHIP_MARGIN;
        Self { member, robustness, witness: member.then_some(witness) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
}

#[derive(Clone, Debug)]
pub enum VarValue {
    Matrix(CMatrix),
    Scalar(f64),
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub objective_value: f64,
    pub var_values: BTreeMap<String, VarValue>,
    /// Worst of: equality residual, lower-bound violation, negative eigenvalue mass.
    pub max_residual: f64,
    matrices: Vec<CMatrix>,
    scalars: Vec<f64>,
}

impl ConicSolution {
    pub fn matrix(&self, var: PsdVar) -> &CMatrix {
        &self.matrices[var.0]
    }

    /// Hermitian part of a matrix variable's value.
    pub fn hermitian(&self, var: PsdVar) -> HermitianOp<f64> {
        HermitianOp::hermitian_part(self.matrices[var.0].clone())
    }

    pub fn scalar(&self, var: ScalarVar) -> f64 {
        self.scalars[var.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Turns anything but `Optimal` into an inconclusive error.
    pub fn require_optimal(self, context: &str) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Inconclusive { status: self.status, context: context.to_string() })
        }
    }
}

/// Backend-independent solve settings threaded through every decision procedure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Result<Self> {
        if tol.is_finite() && tol > 0.0 {
            Ok(Self { tol })
        } else {
            Err(Error::invalid(format!("solve tolerance must be positive, got {tol}")))
        }
    }

    /// Reads `INCOMPAT_SOLVER_TOL`, falling back to the default.
    pub fn from_env() -> Result<Self> {
        match std::env::var("INCOMPAT_SOLVER_TOL") {
            Ok(s) => {
                let tol: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("INCOMPAT_SOLVER_TOL is not a number: {s}")))?;
                Self::with_tol(tol)
            }
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn solve(&self, p: &ConicProblem) -> Result<ConicSolution> {
        solve(p, self.tol)
    }
}
