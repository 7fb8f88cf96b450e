//! Standard joint measurability of a selection of settings.

use crate::assemblage::{check_subset, Assemblage, Visibility};
use crate::conic::{ConicProblem, Decision, HermitianExpr, ScalarVar, SolveOptions};
use crate::error::Result;
use crate::parent::{declare_visibility, marginal_residual, subtract_target, BlockParent, ParentPovm};

/// Parent variables for `subset`, with marginals tied to the (depolarized)
/// effects. Completeness is explicit; the last outcome of every setting is
/// then implied and left out.
fn parent_problem(a: &Assemblage<f64>, subset: &[usize]) -> (ConicProblem, BlockParent, ScalarVar) {
    let d = a.dim();
    let counts: Vec<usize> = subset.iter().map(|&x| a.measurement(x).outcomes()).collect();
    let mut p = ConicProblem::new();
    let t = declare_visibility(&mut p);
    let parent = BlockParent::declare(&mut p, "G", d, subset, &counts);
    parent.add_completeness(&mut p, d, None);
    for (pos, &x) in subset.iter().enumerate() {
        for out in 0..counts[pos] - 1 {
            let mut e = HermitianExpr::zero(d);
            parent.add_marginal(&mut e, pos, out, 1.0);
            subtract_target(&mut e, a.effect(out, x), Some(t), 1.0);
            p.add_hermitian_eq(&e);
        }
    }
    (p, parent, t)
}

fn solve_robustness(a: &Assemblage<f64>, subset: &[usize], opts: &SolveOptions) -> Result<(f64, ParentPovm)> {
    check_subset(a.settings(), subset)?;
    let (p, parent, t) = parent_problem(a, subset);
    let sol = opts.solve(&p)?.require_optimal("joint measurability")?;
    Ok((sol.scalar(t), parent.extract(&sol)))
}

/// Largest `eta` for which the depolarized `subset` admits a parent POVM,
/// from one SDP maximizing `eta`.
pub fn jm_visibility(a: &Assemblage<f64>, subset: &[usize], opts: &SolveOptions) -> Result<Visibility> {
    let (eta, _) = solve_robustness(a, subset, opts)?;
    Ok(Visibility::clamped(eta))
}

/// Whether `subset` is jointly measurable, with a parent POVM witness.
///
/// Decided from the visibility optimum (capped at 1): the assemblage is
/// jointly measurable iff that optimum reaches 1 within
/// [`MEMBERSHIP_MARGIN`](crate::conic::MEMBERSHIP_MARGIN).
pub fn jm_feasible(a: &Assemblage<f64>, subset: &[usize], opts: &SolveOptions) -> Result<Decision<ParentPovm>> {
    let (eta, parent) = solve_robustness(a, subset, opts)?;
    Ok(Decision::from_robustness(eta, parent))
}

/// Largest operator-norm gap between the parent's marginals and the effects of `subset`.
pub fn verify_parent(a: &Assemblage<f64>, subset: &[usize], parent: &ParentPovm) -> Result<f64> {
    check_subset(a.settings(), subset)?;
    if parent.subset != subset {
        return Err(crate::Error::invalid("parent covers different settings than requested"));
    }
    marginal_residual(a, parent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemblage::{depolarize, make_pauli_assemblage, pauli_xyz, random_assemblage, xzh};
    use crate::hermitian::{pauli_x, pauli_z, HermitianOp};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    fn noisy(a: &Assemblage<f64>, eta: f64) -> Assemblage<f64> {
        depolarize(a, Visibility::new(eta).unwrap())
    }

    #[test]
    fn commuting_projective_pair_is_jm() {
        let a = make_pauli_assemblage::<f64>(&[[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]).unwrap();
        let dec = jm_feasible(&a, &[0, 1], &opts()).unwrap();
        assert!(dec.member);
        assert!(verify_parent(&a, &[0, 1], dec.witness.as_ref().unwrap()).unwrap() <= 1e-6);
        let product = ParentPovm::commuting_product(&a, &[0, 1]);
        assert!(verify_parent(&a, &[0, 1], &product).unwrap() <= 1e-12);
    }

    #[test]
    fn noisy_xz_threshold() {
        let xz = xzh::<f64>();
        assert!(jm_feasible(&noisy(&xz, 0.70), &[0, 1], &opts()).unwrap().member);
        let above = jm_feasible(&noisy(&xz, 0.72), &[0, 1], &opts()).unwrap();
        assert!(!above.member);
        assert!(above.witness.is_none());
        let eta = jm_visibility(&xz, &[0, 1], &opts()).unwrap().value();
        assert!((eta - FRAC_1_SQRT_2).abs() < 1e-4, "{eta}");
    }

    #[test]
    fn single_setting_is_its_own_parent() {
        let a = random_assemblage::<f64>(3, 3, 3, 5).unwrap();
        for x in 0..3 {
            assert!(jm_feasible(&a, &[x], &opts()).unwrap().member);
            assert!((jm_visibility(&a, &[x], &opts()).unwrap().value() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn three_paulis_threshold() {
        // Oracle: the symmetric parent (1 + eta (i sx + j sy + k sz)) / 8 is
        // PSD iff eta sqrt(3) <= 1; above that no parent exists (the SDP is
        // cross-checked against this analytic family).
        let eta = jm_visibility(&pauli_xyz(), &[0, 1, 2], &opts()).unwrap().value();
        assert!((eta - 1.0 / 3f64.sqrt()).abs() < 1e-4, "{eta}");
        let e = 1.0 / 3f64.sqrt();
        let mut worst = f64::INFINITY;
        for i in [1.0, -1.0] {
            for j in [1.0, -1.0] {
                for k in [1.0, -1.0] {
                    let g = (HermitianOp::identity(2)
                        + (pauli_x::<f64>() * i + crate::hermitian::pauli_y() * j + pauli_z() * k) * e)
                        * 0.125;
                    worst = worst.min(g.min_eigenvalue());
                }
            }
        }
        assert!(worst > -1e-12);
    }

    #[test]
    fn explicit_parent_for_noisy_xz() {
        let eta = FRAC_1_SQRT_2;
        let a = noisy(&xzh(), eta);
        let mut labels = Vec::new();
        let mut effects = Vec::new();
        for (ai, i) in [(0, 1.0), (1, -1.0)] {
            for (aj, j) in [(0, 1.0), (1, -1.0)] {
                labels.push(vec![ai, aj]);
                effects.push(
                    (HermitianOp::identity(2) + (pauli_x::<f64>() * i + pauli_z::<f64>() * j) * eta) * 0.25,
                );
            }
        }
        let parent = ParentPovm { subset: vec![0, 1], outcome_labels: labels, effects };
        assert!(parent.effects.iter().all(|e| e.min_eigenvalue() > -1e-12));
        assert!(verify_parent(&a, &[0, 1], &parent).unwrap() <= 1e-12);
    }

    #[test]
    fn monotone_under_subsets() {
        let a = random_assemblage::<f64>(2, 3, 2, 21).unwrap();
        let full = jm_visibility(&a, &[0, 1, 2], &opts()).unwrap().value();
        for pair in [[0, 1], [0, 2], [1, 2]] {
            assert!(jm_visibility(&a, &pair, &opts()).unwrap().value() >= full - 1e-6);
        }
    }

    #[test]
    fn invariant_under_outcome_relabeling() {
        let a = random_assemblage::<f64>(2, 2, 3, 9).unwrap();
        let relabeled = Assemblage::from_effects(vec![
            vec![a.effect(2, 0).clone(), a.effect(0, 0).clone(), a.effect(1, 0).clone()],
            vec![a.effect(1, 1).clone(), a.effect(2, 1).clone(), a.effect(0, 1).clone()],
        ])
        .unwrap();
        let v1 = jm_visibility(&a, &[0, 1], &opts()).unwrap().value();
        let v2 = jm_visibility(&relabeled, &[0, 1], &opts()).unwrap().value();
        assert!((v1 - v2).abs() < 1e-6, "{v1} vs {v2}");
    }

    #[test]
    fn witnesses_verify() {
        for seed in 0..5 {
            let a = noisy(&random_assemblage::<f64>(2, 3, 2, seed).unwrap(), 0.5);
            let dec = jm_feasible(&a, &[0, 1, 2], &opts()).unwrap();
            assert!(dec.member, "seed {seed}: robustness {}", dec.robustness);
            assert!(verify_parent(&a, &[0, 1, 2], dec.witness.as_ref().unwrap()).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn heavily_noisy_random_assemblage_is_jm() {
        let a = random_assemblage::<f64>(2, 3, 2, 1).unwrap();
        assert!(jm_visibility(&a, &[0, 1, 2], &opts()).unwrap().value() >= 0.1);
        assert!(jm_feasible(&noisy(&a, 0.1), &[0, 1, 2], &opts()).unwrap().member);
    }

    #[test]
    fn bad_subsets_rejected() {
        let a = pauli_xyz::<f64>();
        assert!(jm_visibility(&a, &[], &opts()).is_err());
        assert!(jm_visibility(&a, &[0, 3], &opts()).is_err());
        assert!(jm_visibility(&a, &[1, 1], &opts()).is_err());
    }
}
