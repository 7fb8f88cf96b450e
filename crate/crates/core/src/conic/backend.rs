//! Lowering onto Clarabel (`Ax + s = b`, `s` in a product of zero,
//! nonnegative, second-order and PSD-triangle cones). Matrix variables of
//! size 1 and 2 use the equivalent nonnegative and second-order cones.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;

use super::{CMatrix, ConicProblem, ConicSolution, Field, HermitianExpr, LinearFunctional, SolveStatus, VarValue};
use crate::error::{Error, Result};
use crate::hermitian::HermitianOp;

/// Multiple of `tol` allowed for the absolute residual of the recovered point
/// and for the duality gap of a stalled solve. The backend's own feasibility
/// test is relative to the data norms, so an absolute check at `tol` itself
/// would reject points it reports solved.
const ACCEPT_FACTOR: f64 = 10.0;

struct Layout {
    offsets: Vec<usize>,
    scalar_offset: usize,
    len: usize,
}

fn pair_count(d: usize) -> usize {
    d * (d - 1) / 2
}

fn pair_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    i * (2 * d - i - 1) / 2 + (j - i - 1)
}

impl Layout {
    fn new(p: &ConicProblem) -> Self {
        let mut offsets = Vec::with_capacity(p.psd_vars.len());
        let mut at = 0;
        for v in &p.psd_vars {
            offsets.push(at);
            at += match v.field {
                Field::Complex => v.dim * v.dim,
                Field::Real => v.dim + pair_count(v.dim),
            };
        }
        Self { offsets, scalar_offset: at, len: at + p.scalar_vars.len() }
    }

    fn diag(&self, v: usize, i: usize) -> usize {
        self.offsets[v] + i
    }

    fn re(&self, v: usize, d: usize, i: usize, j: usize) -> usize {
        self.offsets[v] + d + pair_index(d, i, j)
    }

    fn im(&self, v: usize, d: usize, i: usize, j: usize) -> usize {
        self.offsets[v] + d + pair_count(d) + pair_index(d, i, j)
    }
}

/// Dense coefficient vector of a functional over the parameter layout.
fn functional_row(p: &ConicProblem, layout: &Layout, f: &LinearFunctional, out: &mut Vec<(usize, f64)>) {
    out.clear();
    for (var, c) in &f.matrix_terms {
        let decl = &p.psd_vars[var.0];
        let d = decl.dim;
        for i in 0..d {
            let z = c[(i, i)].re;
            if z != 0.0 {
                out.push((layout.diag(var.0, i), z));
            }
            for j in i + 1..d {
                let z = c[(i, j)];
                if z.re != 0.0 {
                    out.push((layout.re(var.0, d, i, j), 2.0 * z.re));
                }
                if decl.field == Field::Complex && z.im != 0.0 {
                    out.push((layout.im(var.0, d, i, j), 2.0 * z.im));
                }
            }
        }
    }
    for (s, c) in &f.scalar_terms {
        if *c != 0.0 {
            out.push((layout.scalar_offset + s.0, *c));
        }
    }
}

/// `constant + sum coeff * x[param]`.
#[derive(Clone, Default)]
struct Affine {
    constant: f64,
    terms: Vec<(usize, f64)>,
}

impl Affine {
    fn add(&mut self, other: &Affine, scale: f64) {
        self.constant += scale * other.constant;
        self.terms.extend(other.terms.iter().map(|&(k, c)| (k, scale * c)));
    }
}

/// `Re X_ij` and `Im X_ij` of matrix variable `v` as affine forms.
fn var_entry(p: &ConicProblem, layout: &Layout, v: usize, i: usize, j: usize) -> (Affine, Affine) {
    let decl = &p.psd_vars[v];
    let d = decl.dim;
    let single = |k: usize, c: f64| Affine { constant: 0.0, terms: vec![(k, c)] };
    if i == j {
        return (single(layout.diag(v, i), 1.0), Affine::default());
    }
    let (lo, hi, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
    let re = single(layout.re(v, d, lo, hi), 1.0);
    let im = match decl.field {
        Field::Complex => single(layout.im(v, d, lo, hi), sign),
        Field::Real => Affine::default(),
    };
    (re, im)
}

/// `Re E_ij` and `Im E_ij` of a Hermitian expression as affine forms.
fn expr_entry(layout: &Layout, var_entry: impl Fn(usize) -> (Affine, Affine), e: &HermitianExpr, i: usize, j: usize) -> (Affine, Affine) {
    let k = e.constant[(i, j)];
    let mut re = Affine { constant: k.re, terms: Vec::new() };
    let mut im = Affine { constant: k.im, terms: Vec::new() };
    for &(v, c) in &e.var_terms {
        let (vr, vi) = var_entry(v.0);
        re.add(&vr, c);
        im.add(&vi, c);
    }
    for (sv, h) in &e.scalar_terms {
        let z = h[(i, j)];
        let col = layout.scalar_offset + sv.0;
        if z.re != 0.0 {
            re.terms.push((col, z.re));
        }
        if z.im != 0.0 {
            im.terms.push((col, z.im));
        }
    }
    (re, im)
}

/// Rows and cones of `s = b - A x` for one Hermitian-matrix-valued affine
/// map `entry(i, j) = (Re, Im)` being PSD.
struct ConeRows<'a> {
    rows: &'a mut Vec<usize>,
    cols: &'a mut Vec<usize>,
    vals: &'a mut Vec<f64>,
    b: &'a mut Vec<f64>,
    cones: &'a mut Vec<SupportedConeT<f64>>,
}

impl ConeRows<'_> {
    fn push(&mut self, a: &Affine) {
        let row = self.b.len();
        for &(k, c) in &a.terms {
            if c != 0.0 {
                self.rows.push(row);
                self.cols.push(k);
                self.vals.push(-c);
            }
        }
        self.b.push(a.constant);
    }

    fn psd(&mut self, d: usize, complex: bool, entry: impl Fn(usize, usize) -> (Affine, Affine)) {
        match d {
            // x >= 0
            1 => {
                self.push(&entry(0, 0).0);
                self.cones.push(SupportedConeT::NonnegativeConeT(1));
            }
            // [[a, b + ic], [b - ic, e]] >= 0 iff a + e >= |(a - e, 2b, 2c)|
            2 => {
                let (a, _) = entry(0, 0);
                let (e, _) = entry(1, 1);
                let (re, im) = entry(0, 1);
                let mut sum = a.clone();
                sum.add(&e, 1.0);
                let mut diff = a;
                diff.add(&e, -1.0);
                let mut twice_re = Affine::default();
                twice_re.add(&re, 2.0);
                self.push(&sum);
                self.push(&diff);
                self.push(&twice_re);
                if complex {
                    let mut twice_im = Affine::default();
                    twice_im.add(&im, 2.0);
                    self.push(&twice_im);
                }
                self.cones.push(SupportedConeT::SecondOrderConeT(if complex { 4 } else { 3 }));
            }
            // real embedding [[Re, -Im], [Im, Re]] in scaled upper-triangle order
            _ => {
                let n = if complex { 2 * d } else { d };
                for c in 0..n {
                    for r in 0..=c {
                        let a = match (r < d, c < d) {
                            (true, true) => entry(r, c).0,
                            (false, false) => entry(r - d, c - d).0,
                            _ => {
                                let mut neg = Affine::default();
                                neg.add(&entry(r, c - d).1, -1.0);
                                neg
                            }
                        };
                        let mut scaled = Affine::default();
                        scaled.add(&a, if r == c { 1.0 } else { std::f64::consts::SQRT_2 });
                        self.push(&scaled);
                    }
                }
                self.cones.push(SupportedConeT::PSDTriangleConeT(n));
            }
        }
    }
}

fn expr_value(e: &HermitianExpr, matrices: &[CMatrix], scalars: &[f64]) -> CMatrix {
    let mut m = e.constant.clone();
    for &(v, c) in &e.var_terms {
        m += &matrices[v.0] * Complex64::new(c, 0.0);
    }
    for (sv, h) in &e.scalar_terms {
        m += h * Complex64::new(scalars[sv.0], 0.0);
    }
    m
}

fn evaluate(f: &LinearFunctional, matrices: &[CMatrix], scalars: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (v, c) in &f.matrix_terms {
        let x = &matrices[v.0];
        let d = x.nrows();
        for i in 0..d {
            for j in 0..d {
                acc += (c[(i, j)] * x[(j, i)]).re;
            }
        }
    }
    for (s, c) in &f.scalar_terms {
        acc += c * scalars[s.0];
    }
    acc
}

fn unpack(p: &ConicProblem, layout: &Layout, x: &[f64]) -> (Vec<CMatrix>, Vec<f64>) {
    let matrices = p
        .psd_vars
        .iter()
        .enumerate()
        .map(|(v, decl)| {
            let d = decl.dim;
            let mut m = CMatrix::zeros(d, d);
            for i in 0..d {
                m[(i, i)] = Complex64::new(x[layout.diag(v, i)], 0.0);
                for j in i + 1..d {
                    let re = x[layout.re(v, d, i, j)];
                    let im = if decl.field == Field::Complex { x[layout.im(v, d, i, j)] } else { 0.0 };
                    m[(i, j)] = Complex64::new(re, im);
                    m[(j, i)] = Complex64::new(re, -im);
                }
            }
            m
        })
        .collect();
    let scalars = x[layout.scalar_offset..layout.len].to_vec();
    (matrices, scalars)
}

fn residual(p: &ConicProblem, matrices: &[CMatrix], scalars: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for c in &p.eq_constraints {
        worst = worst.max((evaluate(&c.lhs, matrices, scalars) - c.rhs).abs());
    }
    for (decl, &s) in p.scalar_vars.iter().zip(scalars) {
        if let Some(lb) = decl.lower {
            worst = worst.max(lb - s);
        }
    }
    for m in matrices {
        let lo = HermitianOp::hermitian_part(m.clone()).min_eigenvalue();
        worst = worst.max(-lo);
    }
    for e in &p.psd_constraints {
        let lo = HermitianOp::hermitian_part(expr_value(e, matrices, scalars)).min_eigenvalue();
        worst = worst.max(-lo);
    }
    worst
}

fn finish(p: &ConicProblem, status: SolveStatus, matrices: Vec<CMatrix>, scalars: Vec<f64>, tol: f64) -> ConicSolution {
    let max_residual = residual(p, &matrices, &scalars);
    let objective_value = evaluate(&p.objective, &matrices, &scalars);
    let status = if status == SolveStatus::Optimal && (max_residual.is_nan() || max_residual > ACCEPT_FACTOR * tol) {
        SolveStatus::Inaccurate
    } else {
        status
    };
    let mut var_values = BTreeMap::new();
    for (decl, m) in p.psd_vars.iter().zip(&matrices) {
        var_values.insert(decl.label.clone(), VarValue::Matrix(m.clone()));
    }
    for (decl, s) in p.scalar_vars.iter().zip(&scalars) {
        var_values.insert(decl.label.clone(), VarValue::Scalar(*s));
    }
    ConicSolution { status, objective_value, var_values, max_residual, matrices, scalars }
}

/// Solves `p` to tolerance `tol`.
///
/// `Optimal` is only reported when the recovered point satisfies every
/// constraint within `ACCEPT_FACTOR * tol`; otherwise the status is downgraded to `Inaccurate`.
pub fn solve(p: &ConicProblem, tol: f64) -> Result<ConicSolution> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("solve tolerance must be positive, got {tol}")));
    }
    p.validate()?;
    let layout = Layout::new(p);
    let n = layout.len;

    if n == 0 {
        let feasible = p.eq_constraints.iter().all(|c| c.rhs.abs() <= tol);
        let status = if feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible };
        return Ok(finish(p, status, Vec::new(), Vec::new(), tol));
    }

    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut scratch = Vec::new();

    for c in &p.eq_constraints {
        functional_row(p, &layout, &c.lhs, &mut scratch);
        let r = b.len();
        for &(k, v) in &scratch {
            rows.push(r);
            cols.push(k);
            vals.push(v);
        }
        b.push(c.rhs);
    }
    if !p.eq_constraints.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(p.eq_constraints.len()));
    }

    let mut bounded = 0;
    for (s, decl) in p.scalar_vars.iter().enumerate() {
        if let Some(lb) = decl.lower {
            let r = b.len();
            rows.push(r);
            cols.push(layout.scalar_offset + s);
            vals.push(-1.0);
            b.push(-lb);
            bounded += 1;
        }
    }
    if bounded > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(bounded));
    }

    let mut cr = ConeRows { rows: &mut rows, cols: &mut cols, vals: &mut vals, b: &mut b, cones: &mut cones };
    for (v, decl) in p.psd_vars.iter().enumerate() {
        cr.psd(decl.dim, decl.field == Field::Complex, |i, j| var_entry(p, &layout, v, i, j));
    }
    for e in &p.psd_constraints {
        let complex = e.constant.iter().any(|z| z.im != 0.0)
            || e.scalar_terms.iter().any(|(_, h)| h.iter().any(|z| z.im != 0.0))
            || e.var_terms.iter().any(|(v, _)| p.psd_vars[v.0].field == Field::Complex);
        cr.psd(e.dim(), complex, |i, j| expr_entry(&layout, |v| var_entry(p, &layout, v, i, j), e, i, j));
    }

    let mut q = vec![0.0; n];
    functional_row(p, &layout, &p.objective, &mut scratch);
    for &(k, v) in &scratch {
        q[k] += v;
    }

    let a = CscMatrix::new_from_triplets(b.len(), n, rows, cols, vals);
    let pmat = CscMatrix::<f64>::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(300)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .tol_infeas_abs(tol)
        .tol_infeas_rel(tol)
        .build()
        .expect("valid solver settings");
    let mut solver = DefaultSolver::new(&pmat, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::invalid(format!("backend rejected the problem: {e:?}")))?;
    solver.solve();

    let sol = &solver.solution;
    let gap_ok = (sol.obj_val - sol.obj_val_dual).abs() <= ACCEPT_FACTOR * tol * sol.obj_val.abs().max(1.0);
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if gap_ok => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::Inaccurate,
    };
    let (matrices, scalars) = unpack(p, &layout, &sol.x);
    Ok(finish(p, status, matrices, scalars, tol))
}
