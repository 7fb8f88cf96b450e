//! Compatibility structures: partitions of the settings into at most `n`
//! jointly measurable blocks, used deterministically (one partition) or
//! mixed (a convex combination over partitions).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assemblage::{Assemblage, Visibility};
use crate::conic::{ConicProblem, Decision, HermitianExpr, LinearFunctional, ScalarVar, SolveOptions};
use crate::error::{Error, Result};
use crate::hermitian::HermitianOp;
use crate::jm::jm_visibility;
use crate::parent::{declare_visibility, subtract_target, BlockParent, ParentPovm};

/// A set partition of the settings `0..m` into disjoint nonempty blocks.
/// Blocks are sorted internally and ordered by their smallest element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct PartitionCollection {
    blocks: Vec<Vec<usize>>,
}

impl PartitionCollection {
    /// Validates that `blocks` is a disjoint cover of `0..m` by nonempty sets.
    pub fn new(m: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; m];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::invalid("partition blocks must be nonempty"));
            }
            for &x in b {
                if x >= m {
                    return Err(Error::invalid(format!("setting {x} outside 0..{m}")));
                }
                if std::mem::replace(&mut seen[x], true) {
                    return Err(Error::invalid(format!("setting {x} appears in two blocks")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("partition blocks must cover every setting"));
        }
        Ok(Self::normalized(blocks))
    }

    fn normalized(mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn settings(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block index and position within the block of setting `x`.
    pub fn locate(&self, x: usize) -> Option<(usize, usize)> {
        self.blocks
            .iter()
            .enumerate()
            .find_map(|(i, b)| b.iter().position(|&y| y == x).map(|p| (i, p)))
    }
}

impl TryFrom<Vec<Vec<usize>>> for PartitionCollection {
    type Error = Error;
    fn try_from(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let m = blocks.iter().map(Vec::len).sum();
        Self::new(m, blocks)
    }
}

impl From<PartitionCollection> for Vec<Vec<usize>> {
    fn from(p: PartitionCollection) -> Self {
        p.blocks
    }
}

impl std::fmt::Display for PartitionCollection {
    /// One-based, e.g. `[(1,2),(3)]`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                let xs: Vec<String> = b.iter().map(|x| (x + 1).to_string()).collect();
                format!("({})", xs.join(","))
            })
            .collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// All partitions of `0..m` into at most `n` blocks, in lexicographic order
/// of their restricted growth strings (so the single-block partition is first).
pub fn enumerate_partitions(m: usize, n: usize) -> Result<Vec<PartitionCollection>> {
    if n == 0 || m == 0 || n > m {
        return Err(Error::invalid(format!("need 1 <= n <= m, got m = {m}, n = {n}")));
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; m];
    extend_rgs(&mut rgs, 1, 0, n, &mut out);
    Ok(out)
}

fn extend_rgs(rgs: &mut [usize], i: usize, max: usize, n: usize, out: &mut Vec<PartitionCollection>) {
    if i == rgs.len() {
        let mut blocks = vec![Vec::new(); max + 1];
        for (x, &b) in rgs.iter().enumerate() {
            blocks[b].push(x);
        }
        out.push(PartitionCollection { blocks });
        return;
    }
    for b in 0..=(max + 1).min(n - 1) {
        rgs[i] = b;
        extend_rgs(rgs, i + 1, max.max(b), n, out);
    }
}

fn check_n(a: &Assemblage<f64>, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if n > a.settings() {
        return Err(Error::invalid(format!("n = {n} exceeds the {} settings", a.settings())));
    }
    Ok(())
}

/// Best partition by the weakest block's JM visibility, first partition on ties.
fn best_deterministic(a: &Assemblage<f64>, n: usize, opts: &SolveOptions) -> Result<(f64, PartitionCollection)> {
    check_n(a, n)?;
    let partitions = enumerate_partitions(a.settings(), n)?;
    let mut cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut best: Option<(f64, &PartitionCollection)> = None;
    for p in &partitions {
        let mut worst: f64 = 1.0;
        for b in p.blocks() {
            let v = match cache.get(b) {
                Some(&v) => v,
                None => {
                    let v = if b.len() == 1 { 1.0 } else { jm_visibility(a, b, opts)?.value() };
                    cache.insert(b.clone(), v);
                    v
                }
            };
            worst = worst.min(v);
        }
        if best.is_none_or(|(v, _)| worst > v) {
            best = Some((worst, p));
        }
    }
    let (v, p) = best.expect("at least one partition");
    Ok((v, p.clone()))
}

/// Whether some partition into at most `n` blocks has every block jointly measurable.
pub fn sim_det_feasible(a: &Assemblage<f64>, n: usize, opts: &SolveOptions) -> Result<Decision<PartitionCollection>> {
    let (v, p) = best_deterministic(a, n, opts)?;
    Ok(Decision::from_robustness(v, p))
}

/// Largest `eta` at which the depolarized assemblage admits a partition into
/// at most `n` jointly measurable blocks: the max over partitions of the
/// smallest block visibility (noise acts on each block independently).
pub fn sim_det_visibility(a: &Assemblage<f64>, n: usize, opts: &SolveOptions) -> Result<Visibility> {
    Ok(Visibility::clamped(best_deterministic(a, n, opts)?.0))
}

/// One term of a mixture over partitions.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionTerm {
    pub partition: PartitionCollection,
    pub weight: f64,
    /// One sub-normalized parent per block, each summing to `weight * I`.
    pub parents: Vec<ParentPovm>,
}

/// `M_{a|x} = sum_i J^{(i)}_{a|x}`, each term jointly measurable on the blocks of its partition.
#[derive(Clone, Debug, Serialize)]
pub struct ConvexDecomposition {
    pub terms: Vec<DecompositionTerm>,
}

impl ConvexDecomposition {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decomposition serializes")
    }
}

struct MixtureVars {
    partitions: Vec<PartitionCollection>,
    weights: Vec<ScalarVar>,
    parents: Vec<Vec<BlockParent>>,
}

fn mixture_problem(a: &Assemblage<f64>, partitions: Vec<PartitionCollection>) -> (ConicProblem, MixtureVars, ScalarVar) {
    let d = a.dim();
    let counts = a.outcome_counts();
    let mut p = ConicProblem::new();
    let t = declare_visibility(&mut p);
    let mut weights = Vec::with_capacity(partitions.len());
    let mut parents = Vec::with_capacity(partitions.len());
    for (i, part) in partitions.iter().enumerate() {
        let w = p.add_scalar_var(format!("w{i}"), Some(0.0));
        let blocks: Vec<BlockParent> = part
            .blocks()
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let bc: Vec<usize> = b.iter().map(|&x| counts[x]).collect();
                BlockParent::declare(&mut p, &format!("G{i}.{j}"), d, b, &bc)
            })
            .collect();
        for bp in &blocks {
            bp.add_completeness(&mut p, d, Some(w));
        }
        weights.push(w);
        parents.push(blocks);
    }
    let total = weights.iter().fold(LinearFunctional::new(), |f, &w| f.scalar(w, 1.0));
    p.add_eq(total, 1.0);
    for (x, &k) in counts.iter().enumerate() {
        for out in 0..k - 1 {
            let mut e = HermitianExpr::zero(d);
            for (part, blocks) in partitions.iter().zip(&parents) {
                let (bi, pos) = part.locate(x).expect("partition covers every setting");
                blocks[bi].add_marginal(&mut e, pos, out, 1.0);
            }
            subtract_target(&mut e, a.effect(out, x), Some(t), 1.0);
            p.add_hermitian_eq(&e);
        }
    }
    (p, MixtureVars { partitions, weights, parents }, t)
}

/// Mixture SDP over an explicit list of partitions, maximizing the visibility.
pub fn mixture_robustness(
    a: &Assemblage<f64>,
    partitions: &[PartitionCollection],
    opts: &SolveOptions,
) -> Result<(f64, ConvexDecomposition)> {
    if partitions.is_empty() {
        return Err(Error::invalid("need at least one partition"));
    }
    if let Some(bad) = partitions.iter().find(|p| p.settings() != a.settings()) {
        return Err(Error::invalid(format!("partition {bad} does not cover the {} settings", a.settings())));
    }
    let (p, vars, t) = mixture_problem(a, partitions.to_vec());
    let sol = opts.solve(&p)?.require_optimal("n-wise compatibility")?;
    let terms = vars
        .partitions
        .into_iter()
        .zip(&vars.weights)
        .zip(&vars.parents)
        .map(|((partition, &w), blocks)| DecompositionTerm {
            partition,
            weight: sol.scalar(w),
            parents: blocks.iter().map(|b| b.extract(&sol)).collect(),
        })
        .collect();
    Ok((sol.scalar(t), ConvexDecomposition { terms }))
}

/// Whether the assemblage is a mixture of assemblages that are each jointly
/// measurable on the blocks of some partition into at most `n` blocks.
pub fn nwise_feasible(a: &Assemblage<f64>, n: usize, opts: &SolveOptions) -> Result<Decision<ConvexDecomposition>> {
    check_n(a, n)?;
    let (v, dec) = mixture_robustness(a, &enumerate_partitions(a.settings(), n)?, opts)?;
    Ok(Decision::from_robustness(v, dec))
}

/// Largest `eta` with the depolarized assemblage `n`-wise compatible, from one SDP.
pub fn nwise_visibility(a: &Assemblage<f64>, n: usize, opts: &SolveOptions) -> Result<Visibility> {
    check_n(a, n)?;
    let (v, _) = mixture_robustness(a, &enumerate_partitions(a.settings(), n)?, opts)?;
    Ok(Visibility::clamped(v))
}

/// Worst of: reconstruction error `max_{a,x} ||sum_i J^{(i)}_{a|x} - M_{a|x}||`,
/// block completeness error `||sum G - w_i I||`, weight normalization error,
/// negative weights and negative eigenvalues of block effects.
pub fn verify_decomposition(a: &Assemblage<f64>, dec: &ConvexDecomposition) -> Result<f64> {
    let d = a.dim();
    let counts = a.outcome_counts();
    let mut worst: f64 = 0.0;
    let mut weight_sum = 0.0;
    let mut recon: Vec<Vec<HermitianOp<f64>>> =
        counts.iter().map(|&k| vec![HermitianOp::zeros(d); k]).collect();
    for term in &dec.terms {
        if term.partition.settings() != a.settings() || term.parents.len() != term.partition.block_count() {
            return Err(Error::invalid("decomposition term does not match the assemblage"));
        }
        weight_sum += term.weight;
        worst = worst.max(-term.weight);
        for (block, parent) in term.partition.blocks().iter().zip(&term.parents) {
            if &parent.subset != block || parent.effects.is_empty() || parent.dim() != d {
                return Err(Error::invalid("block parent does not match its partition block"));
            }
            if parent.outcome_labels.iter().any(|l| l.len() != block.len() || l.iter().zip(block).any(|(&o, &x)| o >= counts[x])) {
                return Err(Error::invalid("block parent outcome labels out of range"));
            }
            for e in &parent.effects {
                worst = worst.max(-e.min_eigenvalue());
            }
            let gap = &parent.total() - &HermitianOp::identity(d).scale(term.weight);
            worst = worst.max(gap.operator_norm());
            for (pos, &x) in block.iter().enumerate() {
                for (out, acc) in recon[x].iter_mut().enumerate() {
                    *acc = &*acc + &parent.marginal(pos, out);
                }
            }
        }
    }
    worst = worst.max((weight_sum - 1.0).abs());
    for (x, row) in recon.iter().enumerate() {
        for (out, r) in row.iter().enumerate() {
            worst = worst.max((r - a.effect(out, x)).operator_norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemblage::{depolarize, pauli_xyz, random_assemblage, xzh};
    use crate::hermitian::{pauli_x, pauli_y, pauli_z};
    use crate::jm::jm_feasible;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    fn noisy(a: &Assemblage<f64>, eta: f64) -> Assemblage<f64> {
        depolarize(a, Visibility::new(eta).unwrap())
    }

    fn pc(blocks: &[&[usize]]) -> PartitionCollection {
        let b: Vec<Vec<usize>> = blocks.iter().map(|b| b.to_vec()).collect();
        PartitionCollection::try_from(b).unwrap()
    }

    #[test]
    fn partition_counts() {
        assert_eq!(enumerate_partitions(4, 2).unwrap().len(), 8);
        assert_eq!(enumerate_partitions(3, 2).unwrap().len(), 4);
        assert_eq!(enumerate_partitions(3, 3).unwrap().len(), 5);
        assert_eq!(enumerate_partitions(4, 4).unwrap().len(), 15);
        assert_eq!(enumerate_partitions(5, 5).unwrap().len(), 52);
        assert_eq!(enumerate_partitions(1, 1).unwrap(), vec![pc(&[&[0]])]);
        assert!(enumerate_partitions(3, 0).is_err());
        assert!(enumerate_partitions(2, 3).is_err());
    }

    #[test]
    fn four_settings_two_blocks_listing() {
        let got: Vec<String> = enumerate_partitions(4, 2).unwrap().iter().map(|p| p.to_string()).collect();
        assert_eq!(
            got,
            [
                "[(1,2,3,4)]",
                "[(1,2,3),(4)]",
                "[(1,2,4),(3)]",
                "[(1,2),(3,4)]",
                "[(1,3,4),(2)]",
                "[(1,3),(2,4)]",
                "[(1,4),(2,3)]",
                "[(1),(2,3,4)]",
            ]
        );
    }

    #[test]
    fn partition_validation() {
        assert!(PartitionCollection::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(PartitionCollection::new(3, vec![vec![0, 1]]).is_err());
        assert!(PartitionCollection::new(3, vec![vec![0, 1], vec![], vec![2]]).is_err());
        assert!(PartitionCollection::new(2, vec![vec![0, 2]]).is_err());
        assert_eq!(PartitionCollection::new(3, vec![vec![2], vec![1, 0]]).unwrap(), pc(&[&[0, 1], &[2]]));
        let json = serde_json::to_string(&pc(&[&[0, 2], &[1]])).unwrap();
        assert_eq!(json, "[[0,2],[1]]");
        assert!(serde_json::from_str::<PartitionCollection>("[[0,0]]").is_err());
    }

    #[test]
    fn deterministic_paulis() {
        let paulis = pauli_xyz::<f64>();
        let dec = sim_det_feasible(&noisy(&paulis, 0.70), 2, &opts()).unwrap();
        assert!(dec.member);
        let w = dec.witness.unwrap();
        assert_eq!(w.block_count(), 2);
        assert!(w.blocks().iter().any(|b| b.len() == 2));
        let v = sim_det_visibility(&paulis, 2, &opts()).unwrap().value();
        assert!((v - FRAC_1_SQRT_2).abs() < 1e-4, "{v}");
    }

    #[test]
    fn deterministic_xzh() {
        let a = xzh::<f64>();
        let v = sim_det_visibility(&a, 2, &opts()).unwrap().value();
        assert!((v - 0.7654).abs() < 1e-3, "{v}");
        assert!(!sim_det_feasible(&noisy(&a, 0.77), 2, &opts()).unwrap().member);
    }

    #[test]
    fn n_equal_m_is_trivial() {
        let a = random_assemblage::<f64>(2, 3, 3, 4).unwrap();
        assert!(sim_det_feasible(&a, 3, &opts()).unwrap().member);
        assert_eq!(sim_det_visibility(&a, 3, &opts()).unwrap().value(), 1.0);
        let dec = nwise_feasible(&a, 3, &opts()).unwrap();
        assert!(dec.member);
        assert!(verify_decomposition(&a, dec.witness.as_ref().unwrap()).unwrap() <= 1e-6);
        assert!((nwise_visibility(&a, 3, &opts()).unwrap().value() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nwise_paulis() {
        let paulis = pauli_xyz::<f64>();
        let v = nwise_visibility(&paulis, 2, &opts()).unwrap().value();
        assert!((v - (2f64.sqrt() + 1.0) / 3.0).abs() < 1e-3, "{v}");
        let inside = noisy(&paulis, 0.80);
        let dec = nwise_feasible(&inside, 2, &opts()).unwrap();
        assert!(dec.member);
        assert!(verify_decomposition(&inside, dec.witness.as_ref().unwrap()).unwrap() <= 1e-6);
        assert!(!nwise_feasible(&noisy(&paulis, 0.82), 2, &opts()).unwrap().member);
    }

    #[test]
    fn nwise_single_block_is_jm() {
        let xz = xzh::<f64>().select(&[0, 1]).unwrap();
        let v = nwise_visibility(&xz, 1, &opts()).unwrap().value();
        assert!((v - FRAC_1_SQRT_2).abs() < 1e-4, "{v}");
    }

    #[test]
    fn explicit_pauli_mixture() {
        let eta = (2f64.sqrt() + 1.0) / 3.0;
        let a = noisy(&pauli_xyz(), eta);
        let sig = [pauli_x::<f64>(), pauli_y(), pauli_z()];
        let id = HermitianOp::<f64>::identity(2);
        let w = 1.0 / 3.0;
        let signs = [(0, 1.0), (1, -1.0)];
        let mut terms = Vec::new();
        for clean in [2, 1, 0] {
            let pair: Vec<usize> = (0..3).filter(|&x| x != clean).collect();
            let partition = PartitionCollection::new(3, vec![vec![clean], pair.clone()]).unwrap();
            let single = ParentPovm {
                subset: vec![clean],
                outcome_labels: vec![vec![0], vec![1]],
                effects: signs.iter().map(|&(_, s)| (&id + &sig[clean].scale(s)).scale(0.5 * w)).collect(),
            };
            let mut labels = Vec::new();
            let mut effects = Vec::new();
            for &(a0, s0) in &signs {
                for &(a1, s1) in &signs {
                    labels.push(vec![a0, a1]);
                    let dir = &sig[pair[0]].scale(s0) + &sig[pair[1]].scale(s1);
                    effects.push((&id + &dir.scale(FRAC_1_SQRT_2)).scale(0.25 * w));
                }
            }
            let joint = ParentPovm { subset: pair, outcome_labels: labels, effects };
            let parents = partition
                .blocks()
                .iter()
                .map(|b| if b.len() == 1 { single.clone() } else { joint.clone() })
                .collect();
            terms.push(DecompositionTerm { partition, weight: w, parents });
        }
        let dec = ConvexDecomposition { terms };
        assert!(verify_decomposition(&a, &dec).unwrap() <= 1e-12);
        let json: serde_json::Value = serde_json::from_str(&dec.to_json()).unwrap();
        assert_eq!(json["terms"][0]["partition"], serde_json::json!([[0, 1], [2]]));
        assert!(verify_decomposition(&noisy(&pauli_xyz(), 0.9), &dec).unwrap() > 0.04);
    }

    #[test]
    fn full_jm_as_single_term() {
        let a = noisy(&pauli_xyz(), 0.5);
        let parent = jm_feasible(&a, &[0, 1, 2], &opts()).unwrap().witness.unwrap();
        let dec = ConvexDecomposition {
            terms: vec![DecompositionTerm { partition: pc(&[&[0, 1, 2]]), weight: 1.0, parents: vec![parent] }],
        };
        assert!(verify_decomposition(&a, &dec).unwrap() <= 1e-6);
    }

    #[test]
    fn hierarchy_on_random_assemblages() {
        for seed in 0..4 {
            let a = random_assemblage::<f64>(2, 3, 2, 100 + seed).unwrap();
            let jm = jm_visibility(&a, &[0, 1, 2], &opts()).unwrap().value();
            let det = sim_det_visibility(&a, 2, &opts()).unwrap().value();
            let mix = nwise_visibility(&a, 2, &opts()).unwrap().value();
            let mix1 = nwise_visibility(&a, 1, &opts()).unwrap().value();
            let mix3 = nwise_visibility(&a, 3, &opts()).unwrap().value();
            assert!(det >= jm - 1e-6, "seed {seed}: {det} < {jm}");
            assert!(mix >= det - 1e-6, "seed {seed}: {mix} < {det}");
            assert!(mix >= mix1 - 1e-6 && mix3 >= mix - 1e-6);
            assert!((mix1 - jm).abs() < 1e-6);
            let noisy_a = noisy(&a, det.min(1.0) * 0.98);
            if sim_det_feasible(&noisy_a, 2, &opts()).unwrap().member {
                assert!(nwise_feasible(&noisy_a, 2, &opts()).unwrap().member);
            }
        }
    }

    #[test]
    fn trivial_partition_is_redundant() {
        for (seed, a) in [(0, pauli_xyz::<f64>()), (1, xzh()), (2, random_assemblage(2, 3, 2, 77).unwrap())] {
            let all = enumerate_partitions(3, 2).unwrap();
            let pairings: Vec<PartitionCollection> = all.iter().filter(|p| p.block_count() == 2).cloned().collect();
            assert_eq!(pairings.len(), 3);
            let (v_all, _) = mixture_robustness(&a, &all, &opts()).unwrap();
            let (v_pairs, _) = mixture_robustness(&a, &pairings, &opts()).unwrap();
            assert!((v_all - v_pairs).abs() < 1e-6, "case {seed}: {v_all} vs {v_pairs}");
        }
    }

    #[test]
    fn rejects_bad_n() {
        let a = pauli_xyz::<f64>();
        assert!(nwise_visibility(&a, 0, &opts()).is_err());
        assert!(sim_det_visibility(&a, 4, &opts()).is_err());
    }
}
