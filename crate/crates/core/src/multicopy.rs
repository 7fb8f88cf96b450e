//! `n`-copy joint measurability: one parent measurement on `rho^{(x)n}`
//! reproducing every setting's statistics on `rho`, and the universal
//! cloning lower bound on its critical visibility.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_traits::{FromPrimitive, Num};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assemblage::{random_state, Assemblage, Visibility};
use crate::conic::{CMatrix, ConicProblem, Decision, LinearFunctional, SolveOptions};
use crate::error::{Error, Result};
use crate::hermitian::HermitianOp;
use crate::parent::{declare_visibility, product_outcomes, BlockParent};

/// Default bound on the parent dimension `d^n`.
pub const DEFAULT_MAX_COPY_DIM: usize = 16;

/// Seed of the random states drawn by [`verify_multicopy_statistics`].
pub const VERIFY_SEED: u64 = 0x5eed;

/// Generalized Gell-Mann matrices with `Tr[B_j B_k] = 2 delta_jk`: for each
/// pair `j < k` the symmetric then the antisymmetric element, followed by the
/// `d - 1` diagonal ones. At `d = 2` this is `(sigma_x, sigma_y, sigma_z)`.
#[derive(Clone, Debug)]
pub struct OperatorBasis {
    dim: usize,
    elements: Vec<HermitianOp<f64>>,
}

impl OperatorBasis {
    pub fn gell_mann(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("basis needs d >= 2, got {d}")));
        }
        let unit = |i: usize, j: usize, z: Complex64| {
            let mut m = CMatrix::zeros(d, d);
            m[(i, j)] = z;
            m
        };
        let mut elements = Vec::with_capacity(d * d - 1);
        for j in 0..d {
            for k in j + 1..d {
                let one = Complex64::new(1.0, 0.0);
                let i = Complex64::new(0.0, 1.0);
                elements.push(HermitianOp::hermitian_part(unit(j, k, one) + unit(k, j, one)));
                elements.push(HermitianOp::hermitian_part(unit(j, k, -i) + unit(k, j, i)));
            }
        }
        for l in 1..d {
            let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
            let diag: Vec<f64> = (0..d)
                .map(|j| match j.cmp(&l) {
                    std::cmp::Ordering::Less => norm,
                    std::cmp::Ordering::Equal => -(l as f64) * norm,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect();
            elements.push(HermitianOp::from_real_diagonal(&diag));
        }
        Ok(Self { dim: d, elements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[HermitianOp<f64>] {
        &self.elements
    }

    /// Sum over all placements of the multiset `g` of basis indices into
    /// `n` tensor slots (identity elsewhere), keyed by the sorted multiset.
    /// This is the coefficient of `prod_{k in g} r_k` in `d^n rho^{(x)n}` for
    /// `rho = (I + sum_k r_k B_k)/d`.
    pub fn monomial_operators(&self, n: usize) -> BTreeMap<Vec<usize>, CMatrix> {
        let k = self.elements.len();
        let id = CMatrix::identity(self.dim, self.dim);
        let mut out: BTreeMap<Vec<usize>, CMatrix> = BTreeMap::new();
        for slots in product_outcomes(&vec![k + 1; n]) {
            let op = slots.iter().fold(CMatrix::identity(1, 1), |acc, &s| {
                let factor = if s == 0 { &id } else { self.elements[s - 1].matrix() };
                acc.kronecker(factor)
            });
            let mut key: Vec<usize> = slots.iter().filter(|&&s| s > 0).map(|s| s - 1).collect();
            key.sort_unstable();
            out.entry(key).and_modify(|m| *m += &op).or_insert(op);
        }
        out
    }
}

/// Parent measurement on `n` copies, outcomes are tuples over all settings.
#[derive(Clone, Debug, Serialize)]
pub struct MultiCopyParent {
    pub n_copies: usize,
    /// Single-copy dimension.
    pub dim: usize,
    pub outcome_labels: Vec<Vec<usize>>,
    /// Effects on dimension `dim^n_copies`.
    pub effects: Vec<HermitianOp<f64>>,
}

impl MultiCopyParent {
    /// `F_{x,a}`: sum of the effects whose tuple has `a` at position `x`.
    pub fn marginal(&self, x: usize, a: usize) -> HermitianOp<f64> {
        let big = self.dim.pow(self.n_copies as u32);
        crate::hermitian::sum(
            big,
            self.outcome_labels.iter().zip(&self.effects).filter(|(l, _)| l[x] == a).map(|(_, e)| e),
        )
    }

    /// Measures setting `x` on copy `x`: `G_a = M_{a_1|1} (x) ... (x) M_{a_m|m}`.
    pub fn one_per_copy(a: &Assemblage<f64>) -> Self {
        let labels = product_outcomes(&a.outcome_counts());
        let effects = labels
            .iter()
            .map(|l| {
                l.iter()
                    .enumerate()
                    .skip(1)
                    .fold(a.effect(l[0], 0).clone(), |acc, (x, &ax)| acc.kron(a.effect(ax, x)))
            })
            .collect();
        Self { n_copies: a.settings(), dim: a.dim(), outcome_labels: labels, effects }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parent serializes")
    }
}

fn copy_dim(d: usize, n: usize, max_dim: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::invalid("need at least one copy"));
    }
    let limit = max_dim;
    match u32::try_from(n).ok().and_then(|k| d.checked_pow(k)) {
        Some(dim) if dim <= limit => Ok(dim),
        Some(dim) => Err(Error::DimensionGuard { dim, limit }),
        None => Err(Error::DimensionGuard { dim: usize::MAX, limit }),
    }
}

fn copy_robustness(
    a: &Assemblage<f64>,
    n: usize,
    max_dim: usize,
    opts: &SolveOptions,
) -> Result<(f64, MultiCopyParent)> {
    let d = a.dim();
    let big = copy_dim(d, n, max_dim)?;
    let basis = OperatorBasis::gell_mann(d)?;
    let monomials = basis.monomial_operators(n);
    let all: Vec<usize> = (0..a.settings()).collect();
    let counts = a.outcome_counts();
    let scale = (d as f64).powi(n as i32 - 1);

    let mut p = ConicProblem::new();
    let t = declare_visibility(&mut p);
    let parent = BlockParent::declare(&mut p, "G", big, &all, &counts);
    parent.add_completeness(&mut p, big, None);
    for x in 0..a.settings() {
        for out in 0..counts[x] - 1 {
            let effect = a.effect(out, x);
            for (key, op) in &monomials {
                let mut f = parent
                    .labels
                    .iter()
                    .zip(&parent.vars)
                    .filter(|(l, _)| l[x] == out)
                    .fold(LinearFunctional::new(), |f, (_, &v)| f.matrix(v, op.clone()));
                let rhs = match key.as_slice() {
                    [] => scale * effect.trace(),
                    [k] => {
                        f = f.scalar(t, -scale * effect.inner(&basis.elements[*k]));
                        0.0
                    }
                    _ => 0.0,
                };
                p.add_eq(f, rhs);
            }
        }
    }
    let sol = opts.solve(&p)?.require_optimal("n-copy joint measurability")?;
    let extracted = parent.extract(&sol);
    let witness = MultiCopyParent {
        n_copies: n,
        dim: d,
        outcome_labels: extracted.outcome_labels,
        effects: extracted.effects,
    };
    Ok((sol.scalar(t), witness))
}

/// Whether one measurement on `n` copies reproduces every setting, with the
/// parent as witness. `Tr[F_{x,a} rho^{(x)n}] = Tr[M_{a|x} rho]` for all
/// states is imposed by matching the coefficients of the Bloch-vector
/// polynomial on both sides. The parent dimension `d^n` is capped at `max_dim`.
pub fn ncopy_feasible_with_limit(
    a: &Assemblage<f64>,
    n: usize,
    max_dim: usize,
    opts: &SolveOptions,
) -> Result<Decision<MultiCopyParent>> {
    let (v, parent) = copy_robustness(a, n, max_dim, opts)?;
    Ok(Decision::from_robustness(v, parent))
}

pub fn ncopy_feasible(a: &Assemblage<f64>, n: usize, opts: &SolveOptions) -> Result<Decision<MultiCopyParent>> {
    ncopy_feasible_with_limit(a, n, DEFAULT_MAX_COPY_DIM, opts)
}

/// Largest `eta` with the depolarized assemblage `n`-copy jointly measurable, from one SDP.
pub fn ncopy_visibility_with_limit(
    a: &Assemblage<f64>,
    n: usize,
    max_dim: usize,
    opts: &SolveOptions,
) -> Result<Visibility> {
    Ok(Visibility::clamped(copy_robustness(a, n, max_dim, opts)?.0))
}

pub fn ncopy_visibility(a: &Assemblage<f64>, n: usize, opts: &SolveOptions) -> Result<Visibility> {
    ncopy_visibility_with_limit(a, n, DEFAULT_MAX_COPY_DIM, opts)
}

/// `n (d + m) / (m (d + n))`, a lower bound on the `n`-copy critical
/// visibility of any `m` measurements in dimension `d`. Exact for rational `T`.
pub fn clone_bound<T: Num + FromPrimitive>(d: usize, m: usize, n: usize) -> Result<T> {
    if d < 2 || n < 1 || n > m {
        return Err(Error::invalid(format!("clone bound needs d >= 2 and 1 <= n <= m; got d = {d}, m = {m}, n = {n}")));
    }
    let num = T::from_usize(n * (d + m)).ok_or_else(|| Error::invalid("clone bound numerator overflows"))?;
    let den = T::from_usize(m * (d + n)).ok_or_else(|| Error::invalid("clone bound denominator overflows"))?;
    Ok(num / den)
}

/// Largest `|Tr[M_{a|x} rho] - Tr[F_{x,a} rho^{(x)n}]|` over all effects and
/// `trials` random states drawn with a fixed seed.
pub fn verify_multicopy_statistics(a: &Assemblage<f64>, parent: &MultiCopyParent, trials: usize) -> Result<f64> {
    let big = a.dim().checked_pow(parent.n_copies as u32);
    if parent.dim != a.dim()
        || parent.effects.is_empty()
        || Some(parent.effects[0].dim()) != big
        || parent.outcome_labels.len() != parent.effects.len()
        || parent.outcome_labels.iter().any(|l| l.len() != a.settings())
    {
        return Err(Error::invalid("multi-copy parent does not match the assemblage"));
    }
    let marginals: Vec<Vec<HermitianOp<f64>>> = (0..a.settings())
        .map(|x| (0..a.measurement(x).outcomes()).map(|o| parent.marginal(x, o)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let rho = random_state(a.dim(), &mut rng);
        let tensor = (1..parent.n_copies).fold(rho.clone(), |acc, _| acc.kron(&rho));
        for (x, row) in marginals.iter().enumerate() {
            for (o, f) in row.iter().enumerate() {
                worst = worst.max((a.effect(o, x).inner(&rho) - f.inner(&tensor)).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest deviation of a multi-copy parent from PSD and completeness.
pub fn multicopy_povm_residual(parent: &MultiCopyParent) -> f64 {
    let big = parent.effects.first().map_or(0, HermitianOp::dim);
    let total = crate::hermitian::sum(big, &parent.effects);
    let completeness = (&total - &HermitianOp::identity(big)).operator_norm();
    parent.effects.iter().map(|e| -e.min_eigenvalue()).fold(completeness, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemblage::{depolarize, pauli_xyz, random_assemblage, xzh};
    use crate::hermitian::{pauli_x, pauli_y, pauli_z};
    use crate::jm::{jm_feasible, jm_visibility};
    use crate::structures::nwise_visibility;
    use num_rational::Ratio;
    use rand::Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    fn noisy(a: &Assemblage<f64>, eta: f64) -> Assemblage<f64> {
        depolarize(a, Visibility::new(eta).unwrap())
    }

    #[test]
    fn gell_mann_basis() {
        let b2 = OperatorBasis::gell_mann(2).unwrap();
        assert_eq!(b2.elements(), &[pauli_x::<f64>(), pauli_y(), pauli_z()]);
        for d in 2..=4 {
            let b = OperatorBasis::gell_mann(d).unwrap();
            assert_eq!(b.elements().len(), d * d - 1);
            for (j, bj) in b.elements().iter().enumerate() {
                assert!(bj.trace().abs() < 1e-12);
                for (k, bk) in b.elements().iter().enumerate() {
                    let want = if j == k { 2.0 } else { 0.0 };
                    assert!((bj.inner(bk) - want).abs() < 1e-12, "d {d}: ({j}, {k})");
                }
            }
        }
        assert!(OperatorBasis::gell_mann(1).is_err());
    }

    #[test]
    fn monomials_reassemble_tensor_power() {
        // rho^{(x)n} = d^{-n} sum_g r^g P_g for a random Bloch vector.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (d, n) in [(2, 2), (2, 3), (3, 2)] {
            let basis = OperatorBasis::gell_mann(d).unwrap();
            let rho = random_state(d, &mut rng);
            let r: Vec<f64> = basis.elements().iter().map(|b| rho.inner(b) * d as f64 / 2.0).collect();
            let mut acc = CMatrix::zeros(d.pow(n as u32), d.pow(n as u32));
            for (key, op) in basis.monomial_operators(n) {
                let coeff: f64 = key.iter().map(|&k| r[k]).product();
                acc += op * Complex64::new(coeff / (d as f64).powi(n as i32), 0.0);
            }
            let direct = (1..n).fold(rho.clone(), |t, _| t.kron(&rho));
            let diff = (acc - direct.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "d {d} n {n}: {diff}");
        }
    }

    #[test]
    fn two_copies_of_paulis() {
        let paulis = pauli_xyz::<f64>();
        let v = ncopy_visibility(&paulis, 2, &opts()).unwrap().value();
        assert!((v - 3f64.sqrt() / 2.0).abs() < 1e-3, "{v}");
        let inside = noisy(&paulis, 0.86);
        let dec = ncopy_feasible(&inside, 2, &opts()).unwrap();
        assert!(dec.member);
        let parent = dec.witness.unwrap();
        assert!(verify_multicopy_statistics(&inside, &parent, 200).unwrap() <= 1e-6);
        assert!(multicopy_povm_residual(&parent) <= 1e-6);
        assert!(!ncopy_feasible(&noisy(&paulis, 0.88), 2, &opts()).unwrap().member);
    }

    #[test]
    fn pair_small_cases() {
        let xz = xzh::<f64>().select(&[0, 1]).unwrap();
        assert!((ncopy_visibility(&xz, 2, &opts()).unwrap().value() - 1.0).abs() < 1e-6);
        let one = ncopy_visibility(&xz, 1, &opts()).unwrap().value();
        assert!((one - FRAC_1_SQRT_2).abs() < 1e-4, "{one}");
    }

    #[test]
    fn one_copy_is_joint_measurability() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for seed in 0..50 {
            let base = random_assemblage::<f64>(2, 3, 2, 500 + seed).unwrap();
            let eta = 0.4 + 0.6 * rng.gen::<f64>();
            let a = noisy(&base, eta);
            let c = ncopy_visibility(&a, 1, &opts()).unwrap().value();
            let j = jm_visibility(&a, &[0, 1, 2], &opts()).unwrap().value();
            assert!((c - j).abs() < 1e-6, "seed {seed}: {c} vs {j}");
            let dc = ncopy_feasible(&a, 1, &opts()).unwrap().member;
            let dj = jm_feasible(&a, &[0, 1, 2], &opts()).unwrap().member;
            assert_eq!(dc, dj, "seed {seed}");
        }
    }

    #[test]
    fn m_copies_always_suffice() {
        let a = random_assemblage::<f64>(2, 3, 2, 9).unwrap();
        let dec = ncopy_feasible(&a, 3, &opts()).unwrap();
        assert!(dec.member);
        assert!(verify_multicopy_statistics(&a, dec.witness.as_ref().unwrap(), 200).unwrap() <= 1e-6);
        let product = MultiCopyParent::one_per_copy(&a);
        assert!(verify_multicopy_statistics(&a, &product, 200).unwrap() <= 1e-12);
        assert!(multicopy_povm_residual(&product) <= 1e-12);
    }

    #[test]
    fn corrupted_parent_is_caught() {
        let a = random_assemblage::<f64>(2, 2, 2, 3).unwrap();
        let mut parent = MultiCopyParent::one_per_copy(&a);
        parent.effects[0] = &parent.effects[0] + &HermitianOp::identity(4).scale(0.01);
        assert!(verify_multicopy_statistics(&a, &parent, 200).unwrap() > 1e-3);
        let json: serde_json::Value = serde_json::from_str(&parent.to_json()).unwrap();
        assert_eq!(json["n_copies"], 2);
    }

    #[test]
    fn dimension_guard() {
        let a = pauli_xyz::<f64>();
        assert!(matches!(
            ncopy_visibility(&a, 5, &opts()),
            Err(Error::DimensionGuard { dim: 32, limit: 16 })
        ));
        assert!(ncopy_visibility(&a, 0, &opts()).is_err());
        assert!(matches!(
            ncopy_visibility_with_limit(&a, 3, 4, &opts()),
            Err(Error::DimensionGuard { dim: 8, limit: 4 })
        ));
    }

    #[test]
    fn cloning_bound_values() {
        assert_eq!(clone_bound::<Ratio<u64>>(2, 3, 2).unwrap(), Ratio::new(5, 6));
        assert_eq!(clone_bound::<Ratio<u64>>(2, 3, 1).unwrap(), Ratio::new(5, 9));
        assert_eq!(clone_bound::<Ratio<u64>>(3, 4, 4).unwrap(), Ratio::from_integer(1));
        assert!((clone_bound::<f64>(2, 3, 2).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(clone_bound::<f64>(1, 3, 2).is_err());
        assert!(clone_bound::<f64>(2, 3, 4).is_err());
        assert!(clone_bound::<f64>(2, 3, 0).is_err());
    }

    #[test]
    fn copies_dominate_other_bounds() {
        for seed in 0..4 {
            let a = random_assemblage::<f64>(2, 3, 2, 700 + seed).unwrap();
            let c1 = ncopy_visibility(&a, 1, &opts()).unwrap().value();
            let c2 = ncopy_visibility(&a, 2, &opts()).unwrap().value();
            let c3 = ncopy_visibility(&a, 3, &opts()).unwrap().value();
            assert!(c2 >= c1 - 1e-6 && c3 >= c2 - 1e-6);
            assert!((c3 - 1.0).abs() < 1e-6);
            assert!(clone_bound::<f64>(2, 3, 2).unwrap() <= c2 + 1e-4);
            assert!(nwise_visibility(&a, 2, &opts()).unwrap().value() <= c2 + 1e-4);
        }
    }
}
