//! Parent POVMs in canonical vector-outcome form and the SDP plumbing shared
//! by every decision procedure that builds them.
//!
//! A parent for a block of settings `S = (x_1, ..., x_s)` has one effect per
//! outcome tuple `(a_1, ..., a_s)`; the marginal for setting `x_i` and outcome
//! `a` sums all effects whose tuple has `a` in position `i`.

use serde::Serialize;

use crate::assemblage::Assemblage;
use crate::conic::{ConicProblem, ConicSolution, HermitianExpr, LinearFunctional, PsdVar, ScalarVar};
use crate::error::{Error, Result};
use crate::hermitian::HermitianOp;

/// All tuples in `[k_1] x ... x [k_s]`, lexicographic with the last position fastest.
pub fn product_outcomes(counts: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0; counts.len()];
    if counts.contains(&0) {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut pos = counts.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < counts[pos] {
                break;
            }
            cur[pos] = 0;
        }
    }
}

/// Joint measurement for a block of settings. Effects act on the common
/// dimension and may be sub-normalized when the parent is a term of a
/// convex decomposition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParentPovm {
    /// Setting indices covered, in tuple order.
    pub subset: Vec<usize>,
    pub outcome_labels: Vec<Vec<usize>>,
    pub effects: Vec<HermitianOp<f64>>,
}

impl ParentPovm {
    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    /// Sum of the effects whose tuple has outcome `a` at tuple position `pos`.
    pub fn marginal(&self, pos: usize, a: usize) -> HermitianOp<f64> {
        let d = self.dim();
        crate::hermitian::sum(
            d,
            self.outcome_labels
                .iter()
                .zip(&self.effects)
                .filter(|(l, _)| l[pos] == a)
                .map(|(_, e)| e),
        )
    }

    pub fn total(&self) -> HermitianOp<f64> {
        crate::hermitian::sum(self.dim(), &self.effects)
    }

    /// Product parent `(M_{a_1|x_1} ... M_{a_s|x_s})` of pairwise commuting measurements.
    pub fn commuting_product(a: &Assemblage<f64>, subset: &[usize]) -> Self {
        let counts: Vec<usize> = subset.iter().map(|&x| a.measurement(x).outcomes()).collect();
        let labels = product_outcomes(&counts);
        let d = a.dim();
        let effects = labels
            .iter()
            .map(|l| {
                let prod = subset
                    .iter()
                    .zip(l)
                    .fold(HermitianOp::<f64>::identity(d).into_matrix(), |acc, (&x, &ax)| {
                        acc * a.effect(ax, x).matrix()
                    });
                HermitianOp::hermitian_part(prod)
            })
            .collect();
        Self { subset: subset.to_vec(), outcome_labels: labels, effects }
    }
}

/// Parent POVM variables for one block inside a conic problem.
pub(crate) struct BlockParent {
    pub subset: Vec<usize>,
    pub labels: Vec<Vec<usize>>,
    pub vars: Vec<PsdVar>,
}

impl BlockParent {
    /// Declares one `dim x dim` PSD variable per outcome tuple of the block.
    pub fn declare(problem: &mut ConicProblem, prefix: &str, dim: usize, subset: &[usize], counts: &[usize]) -> Self {
        let labels = product_outcomes(counts);
        let vars = labels
            .iter()
            .map(|l| {
                let tag: Vec<String> = l.iter().map(usize::to_string).collect();
                problem.add_psd_var(format!("{prefix}[{}]", tag.join(",")), dim)
            })
            .collect();
        Self { subset: subset.to_vec(), labels, vars }
    }

    /// Adds `coeff * (marginal at tuple position pos, outcome a)` to `expr`.
    pub fn add_marginal(&self, expr: &mut HermitianExpr, pos: usize, a: usize, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        for (l, &v) in self.labels.iter().zip(&self.vars) {
            if l[pos] == a {
                expr.add_var(v, coeff);
            }
        }
    }

    /// `sum_tuples G = weight * I` (weight 1 when `weight` is `None`).
    pub fn add_completeness(&self, problem: &mut ConicProblem, dim: usize, weight: Option<ScalarVar>) {
        let id = HermitianOp::identity(dim);
        let mut e = HermitianExpr::zero(dim);
        match weight {
            None => e.add_constant(&id, -1.0),
            Some(w) => e.add_scalar(w, &(-id)),
        };
        for &v in &self.vars {
            e.add_var(v, 1.0);
        }
        problem.add_hermitian_eq(&e);
    }

    pub fn extract(&self, sol: &ConicSolution) -> ParentPovm {
        ParentPovm {
            subset: self.subset.clone(),
            outcome_labels: self.labels.clone(),
            effects: self.vars.iter().map(|&v| sol.hermitian(v)).collect(),
        }
    }
}

/// Adds `-coeff * M^t_{a|x}` to `expr`, where
/// `M^t = t (M - Tr[M] I/d) + Tr[M] I/d` for a visibility variable `t`,
/// or `M` itself when `t` is `None`.
pub(crate) fn subtract_target(expr: &mut HermitianExpr, effect: &HermitianOp<f64>, t: Option<ScalarVar>, coeff: f64) {
    match t {
        None => {
            expr.add_constant(effect, -coeff);
        }
        Some(t) => {
            let d = effect.dim();
            let noise = HermitianOp::identity(d).scale(effect.trace() / d as f64);
            let direction = effect - &noise;
            expr.add_constant(&noise, -coeff);
            expr.add_scalar(t, &direction.scale(-coeff));
        }
    }
}

/// Declares `t` with `0 <= t <= 1` and sets the objective to maximize it.
pub(crate) fn declare_visibility(problem: &mut ConicProblem) -> ScalarVar {
    let t = problem.add_scalar_var("eta", Some(0.0));
    let slack = problem.add_scalar_var("eta_slack", Some(0.0));
    problem.add_eq(LinearFunctional::new().scalar(t, 1.0).scalar(slack, 1.0), 1.0);
    problem.minimize(LinearFunctional::new().scalar(t, -1.0));
    t
}

/// Largest operator-norm deviation between a parent's marginals and the
/// effects of the settings it covers.
pub(crate) fn marginal_residual(a: &Assemblage<f64>, parent: &ParentPovm) -> Result<f64> {
    if parent.effects.is_empty() || parent.dim() != a.dim() {
        return Err(Error::invalid("parent POVM dimension does not match the assemblage"));
    }
    let mut worst: f64 = 0.0;
    for (pos, &x) in parent.subset.iter().enumerate() {
        if x >= a.settings() {
            return Err(Error::invalid(format!("parent refers to setting {x} outside the assemblage")));
        }
        if parent.outcome_labels.iter().any(|l| l.len() != parent.subset.len()) {
            return Err(Error::invalid("outcome labels do not match the parent's settings"));
        }
        for a_out in 0..a.measurement(x).outcomes() {
            let diff = &parent.marginal(pos, a_out) - a.effect(a_out, x);
            worst = worst.max(diff.operator_norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_outcomes_order() {
        assert_eq!(
            product_outcomes(&[2, 3]),
            vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 1], vec![1, 2]]
        );
        assert_eq!(product_outcomes(&[]), vec![Vec::<usize>::new()]);
        assert!(product_outcomes(&[2, 0]).is_empty());
    }
}
