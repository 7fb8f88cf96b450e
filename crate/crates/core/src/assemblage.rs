//! Measurements, assemblages and the operations acting on them.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hermitian::{pauli_x, pauli_y, pauli_z, HermitianOp};
use crate::scalar::Real;

/// A POVM: PSD effects summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement<T: Real> {
    effects: Vec<HermitianOp<T>>,
}

impl<T: Real> Measurement<T> {
    pub fn new(effects: Vec<HermitianOp<T>>) -> Result<Self> {
        let Some(first) = effects.first() else {
            return Err(Error::invalid("a measurement needs at least one effect"));
        };
        let d = first.dim();
        if effects.iter().any(|e| e.dim() != d) {
            return Err(Error::invalid("effects of a measurement must share a dimension"));
        }
        let tol = T::psd_tol();
        for (a, e) in effects.iter().enumerate() {
            let lo = e.min_eigenvalue();
            if lo < -tol {
                return Err(Error::invalid(format!(
                    "effect {a} is not PSD (min eigenvalue {})",
                    lo.as_f64()
                )));
            }
        }
        let total = crate::hermitian::sum(d, &effects);
        if total.max_abs_entry_diff(&HermitianOp::identity(d)) > tol {
            return Err(Error::invalid("effects do not sum to the identity"));
        }
        Ok(Self { effects })
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn effects(&self) -> &[HermitianOp<T>] {
        &self.effects
    }

    pub fn effect(&self, a: usize) -> &HermitianOp<T> {
        &self.effects[a]
    }
}

/// An ordered family of `m` measurements on a common Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Assemblage<T: Real> {
    dim: usize,
    measurements: Vec<Measurement<T>>,
}

impl<T: Real> Assemblage<T> {
    pub fn new(measurements: Vec<Measurement<T>>) -> Result<Self> {
        let Some(first) = measurements.first() else {
            return Err(Error::invalid("an assemblage needs at least one measurement"));
        };
        let dim = first.dim();
        if measurements.iter().any(|m| m.dim() != dim) {
            return Err(Error::invalid("measurements of an assemblage must share a dimension"));
        }
        Ok(Self { dim, measurements })
    }

    /// Builds the family without checking PSD or completeness. Used for
    /// effectwise differences and other non-POVM families fed to the norm.
    pub fn from_effects_unchecked(dim: usize, effects: Vec<Vec<HermitianOp<T>>>) -> Self {
        Self {
            dim,
            measurements: effects.into_iter().map(|effects| Measurement { effects }).collect(),
        }
    }

    pub fn from_effects(effects: Vec<Vec<HermitianOp<T>>>) -> Result<Self> {
        let ms = effects.into_iter().map(Measurement::new).collect::<Result<Vec<_>>>()?;
        Self::new(ms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of settings `m`.
    pub fn settings(&self) -> usize {
        self.measurements.len()
    }

    /// Outcome counts `k_x` per setting.
    pub fn outcome_counts(&self) -> Vec<usize> {
        self.measurements.iter().map(Measurement::outcomes).collect()
    }

    pub fn measurements(&self) -> &[Measurement<T>] {
        &self.measurements
    }

    pub fn measurement(&self, x: usize) -> &Measurement<T> {
        &self.measurements[x]
    }

    pub fn effect(&self, a: usize, x: usize) -> &HermitianOp<T> {
        self.measurements[x].effect(a)
    }

    /// Iterates `(a, x, M_{a|x})` with `x` outermost.
    pub fn iter_effects(&self) -> impl Iterator<Item = (usize, usize, &HermitianOp<T>)> {
        self.measurements
            .iter()
            .enumerate()
            .flat_map(|(x, m)| m.effects.iter().enumerate().map(move |(a, e)| (a, x, e)))
    }

    /// Keeps the listed settings, in the listed order.
    pub fn select(&self, subset: &[usize]) -> Result<Self> {
        check_subset(self.settings(), subset)?;
        Ok(Self {
            dim: self.dim,
            measurements: subset.iter().map(|&x| self.measurements[x].clone()).collect(),
        })
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.outcome_counts() == other.outcome_counts()
    }

    pub fn cast<U: Real>(&self) -> Assemblage<U> {
        Assemblage {
            dim: self.dim,
            measurements: self
                .measurements
                .iter()
                .map(|m| Measurement { effects: m.effects.iter().map(HermitianOp::cast).collect() })
                .collect(),
        }
    }
}

pub(crate) fn check_subset(m: usize, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::invalid("setting subset must be nonempty"));
    }
    for (i, &x) in subset.iter().enumerate() {
        if x >= m {
            return Err(Error::invalid(format!("setting index {x} out of range for m = {m}")));
        }
        if subset[..i].contains(&x) {
            return Err(Error::invalid(format!("setting index {x} repeated")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct AssemblageJson<T: Real> {
    d: usize,
    measurements: Vec<Vec<HermitianOp<T>>>,
}

impl<T: Real + Serialize> Serialize for Assemblage<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        AssemblageJson {
            d: self.dim,
            measurements: self.measurements.iter().map(|m| m.effects.clone()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for Assemblage<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = AssemblageJson::<T>::deserialize(deserializer)?;
        let a = Assemblage::from_effects(raw.measurements).map_err(D::Error::custom)?;
        if a.dim != raw.d {
            return Err(D::Error::custom(format!(
                "declared d = {} but effects have dimension {}",
                raw.d, a.dim
            )));
        }
        Ok(a)
    }
}

/// Depolarizing visibility `eta` in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Visibility<T: Real = f64>(T);

impl<T: Real> Visibility<T> {
    pub fn new(eta: T) -> Result<Self> {
        if eta >= T::zero() && eta <= T::one() {
            Ok(Self(eta))
        } else {
            Err(Error::invalid(format!("visibility {} outside [0, 1]", eta.as_f64())))
        }
    }

    /// Clamps solver output that overshoots `[0, 1]` by rounding.
    pub(crate) fn clamped(eta: T) -> Self {
        Self(eta.max(T::zero()).min(T::one()))
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Sub-normalized conditional states `sigma_{a|x}`, indexed `[x][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubnormalizedStateAssemblage<T: Real> {
    states: Vec<Vec<HermitianOp<T>>>,
}

impl<T: Real> SubnormalizedStateAssemblage<T> {
    pub fn states(&self) -> &[Vec<HermitianOp<T>>] {
        &self.states
    }

    pub fn state(&self, a: usize, x: usize) -> &HermitianOp<T> {
        &self.states[x][a]
    }

    /// Reduced state `sum_a sigma_{a|x}` for setting `x`.
    pub fn marginal(&self, x: usize) -> HermitianOp<T> {
        let d = self.states[x][0].dim();
        crate::hermitian::sum(d, &self.states[x])
    }

    /// Largest entrywise deviation between the marginals of different settings.
    pub fn no_signaling_residual(&self) -> T {
        let first = self.marginal(0);
        (1..self.states.len()).fold(T::zero(), |m, x| m.max(self.marginal(x).max_abs_entry_diff(&first)))
    }
}

/// Binary projective qubit measurements `(I +- n.sigma)/2`, one per axis.
pub fn make_pauli_assemblage<T: Real>(axes: &[[T; 3]]) -> Result<Assemblage<T>> {
    let half = T::lit(0.5);
    let ms = axes
        .iter()
        .map(|axis| {
            let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
            if (norm - T::one()).abs() > T::lit(1e-12).max(T::hermitian_tol()) {
                return Err(Error::invalid(format!("axis norm {} is not 1", norm.as_f64())));
            }
            let n_sigma = pauli_x::<T>() * axis[0] + pauli_y::<T>() * axis[1] + pauli_z::<T>() * axis[2];
            let id = HermitianOp::identity(2);
            Measurement::new(vec![(&id + &n_sigma) * half, (&id - &n_sigma) * half])
        })
        .collect::<Result<Vec<_>>>()?;
    Assemblage::new(ms)
}

/// `sigma_x, sigma_y, sigma_z`, in that order.
pub fn pauli_xyz<T: Real>() -> Assemblage<T> {
    let (o, z) = (T::one(), T::zero());
    make_pauli_assemblage(&[[o, z, z], [z, o, z], [z, z, o]]).expect("unit axes")
}

/// `sigma_x, sigma_z` and the Hadamard direction `(sigma_x + sigma_z)/sqrt 2`.
pub fn xzh<T: Real>() -> Assemblage<T> {
    let (o, z) = (T::one(), T::zero());
    let h = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    make_pauli_assemblage(&[[o, z, z], [z, z, o], [h, z, h]]).expect("unit axes")
}

/// `eta M + (1 - eta) Tr[M] I/d` applied to every effect.
pub fn depolarize<T: Real>(a: &Assemblage<T>, v: Visibility<T>) -> Assemblage<T> {
    let eta = v.value();
    let d = a.dim();
    let id = HermitianOp::<T>::identity(d);
    let inv_d = T::one() / T::from_usize(d).expect("dimension fits");
    Assemblage {
        dim: d,
        measurements: a
            .measurements
            .iter()
            .map(|m| Measurement {
                effects: m
                    .effects
                    .iter()
                    .map(|e| e * eta + &id * ((T::one() - eta) * e.trace() * inv_d))
                    .collect(),
            })
            .collect(),
    }
}

/// `sum_{a,x} ||M_{a|x}||` with the operator norm.
pub fn assemblage_norm<T: Real>(a: &Assemblage<T>) -> T {
    a.iter_effects().fold(T::zero(), |acc, (_, _, e)| acc + e.operator_norm())
}

/// `||A - B||` in the assemblage norm.
pub fn assemblage_distance<T: Real>(a: &Assemblage<T>, b: &Assemblage<T>) -> Result<T> {
    if !a.same_shape(b) {
        return Err(Error::invalid("assemblages differ in shape"));
    }
    Ok(a.iter_effects()
        .zip(b.iter_effects())
        .fold(T::zero(), |acc, ((_, _, ea), (_, _, eb))| acc + (ea - eb).operator_norm()))
}

/// States steered from the maximally entangled state: `sigma_{a|x} = M_{a|x}^T / d`.
pub fn steering_assemblage<T: Real>(a: &Assemblage<T>) -> SubnormalizedStateAssemblage<T> {
    let inv_d = T::one() / T::from_usize(a.dim()).expect("dimension fits");
    SubnormalizedStateAssemblage {
        states: a
            .measurements
            .iter()
            .map(|m| m.effects.iter().map(|e| e.transpose().scale(inv_d)).collect())
            .collect(),
    }
}

fn ginibre(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

/// Random full-rank POVMs: `S^{-1/2} W_a W_a^dagger S^{-1/2}` with `S = sum_a W_a W_a^dagger`
/// and complex Gaussian `W_a`. Deterministic in `seed`.
pub fn random_assemblage<T: Real>(d: usize, m: usize, k: usize, seed: u64) -> Result<Assemblage<T>> {
    if d < 2 || m < 1 || k < 2 {
        return Err(Error::invalid(format!("random_assemblage needs d >= 2, m >= 1, k >= 2; got ({d}, {m}, {k})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = (0..m)
        .map(|_| {
            let grams: Vec<DMatrix<Complex<f64>>> = (0..k)
                .map(|_| {
                    let w = ginibre(&mut rng, d, d);
                    &w * w.adjoint()
                })
                .collect();
            let total = grams.iter().fold(DMatrix::zeros(d, d), |acc, g| acc + g);
            let eig = total.symmetric_eigen();
            let inv_sqrt = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    Complex::new(1.0 / eig.eigenvalues[i].sqrt(), 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                }
            });
            let s = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.adjoint();
            let effects = grams
                .iter()
                .map(|g| HermitianOp::hermitian_part(&s * g * &s).cast())
                .collect();
            Measurement::new(effects)
        })
        .collect::<Result<Vec<_>>>()?;
    Assemblage::new(ms)
}

/// Random density matrix from a Ginibre matrix, `W W^dagger / Tr`.
pub fn random_state(d: usize, rng: &mut ChaCha8Rng) -> HermitianOp<f64> {
    let w = ginibre(rng, d, d);
    let rho = HermitianOp::hermitian_part(&w * w.adjoint());
    let tr = rho.trace();
    rho.scale(1.0 / tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::{pauli_y, pauli_z};
    use proptest::prelude::*;

    fn v(eta: f64) -> Visibility<f64> {
        Visibility::new(eta).unwrap()
    }

    fn effectwise_diff(a: &Assemblage<f64>, b: &Assemblage<f64>) -> f64 {
        a.iter_effects()
            .zip(b.iter_effects())
            .map(|((_, _, x), (_, _, y))| x.max_abs_entry_diff(y))
            .fold(0.0, f64::max)
    }

    #[test]
    fn sigma_z_measurement() {
        let a = make_pauli_assemblage::<f64>(&[[0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(a.effect(0, 0), &HermitianOp::from_real_diagonal(&[1.0, 0.0]));
        assert_eq!(a.effect(1, 0), &HermitianOp::from_real_diagonal(&[0.0, 1.0]));
    }

    #[test]
    fn pauli_triple_matches_half_one_plus_sigma() {
        let a = pauli_xyz::<f64>();
        let id = HermitianOp::identity(2);
        for (x, s) in [pauli_x(), pauli_y(), pauli_z()].iter().enumerate() {
            assert!(a.effect(0, x).max_abs_entry_diff(&((&id + s) * 0.5)) < 1e-15);
            assert!(a.effect(1, x).max_abs_entry_diff(&((&id - s) * 0.5)) < 1e-15);
        }
        let h = xzh::<f64>();
        let hs = (pauli_x::<f64>() + pauli_z()) * std::f64::consts::FRAC_1_SQRT_2;
        assert!(h.effect(0, 2).max_abs_entry_diff(&((&id + &hs) * 0.5)) < 1e-15);
    }

    #[test]
    fn non_unit_axis_rejected() {
        assert!(make_pauli_assemblage::<f64>(&[[1.0, 1.0, 0.0]]).is_err());
        assert!(make_pauli_assemblage::<f64>(&[[0.0, 0.0, 1.0 + 1e-9]]).is_err());
    }

    #[test]
    fn invalid_povms_rejected() {
        let half = HermitianOp::from_real_diagonal(&[0.5, 0.5]);
        assert!(Measurement::new(vec![half.clone()]).is_err());
        let neg = HermitianOp::from_real_diagonal(&[1.5, -0.5]);
        let rest = HermitianOp::from_real_diagonal(&[-0.5, 1.5]);
        assert!(Measurement::new(vec![neg, rest]).is_err());
        assert!(Assemblage::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn depolarize_endpoints_and_midpoint() {
        let a = pauli_xyz::<f64>();
        assert!(effectwise_diff(&depolarize(&a, v(1.0)), &a) < 1e-15);
        let full = depolarize(&a, v(0.0));
        for (_, _, e) in full.iter_effects() {
            assert!(e.max_abs_entry_diff(&HermitianOp::identity(2).scale(0.5)) < 1e-15);
        }
        let zp = make_pauli_assemblage::<f64>(&[[0.0, 0.0, 1.0]]).unwrap();
        let want = (HermitianOp::identity(2) + pauli_z::<f64>() * 0.5) * 0.5;
        assert!(depolarize(&zp, v(0.5)).effect(0, 0).max_abs_entry_diff(&want) < 1e-15);
        // still a valid POVM family
        let d = depolarize(&random_assemblage::<f64>(3, 2, 3, 4).unwrap(), v(0.3));
        for m in d.measurements() {
            Measurement::new(m.effects().to_vec()).unwrap();
        }
    }

    #[test]
    fn visibility_bounds() {
        assert!(Visibility::new(1.0000001).is_err());
        assert!(Visibility::new(-0.1).is_err());
        assert_eq!(Visibility::clamped(1.0 + 1e-9).value(), 1.0);
    }

    #[test]
    fn norm_examples() {
        let one = make_pauli_assemblage::<f64>(&[[0.0, 0.0, 1.0]]).unwrap();
        assert!((assemblage_norm(&one) - 2.0).abs() < 1e-12);
        assert!((assemblage_norm(&pauli_xyz::<f64>()) - 6.0).abs() < 1e-12);
        let zero = Assemblage::<f64>::from_effects_unchecked(2, vec![vec![HermitianOp::zeros(2); 2]; 3]);
        assert_eq!(assemblage_norm(&zero), 0.0);
    }

    #[test]
    fn distance_examples() {
        let a = pauli_xyz::<f64>();
        assert_eq!(assemblage_distance(&a, &a).unwrap(), 0.0);
        let eta = 0.6;
        let noisy = depolarize(&a, v(eta));
        let expected: f64 = a
            .iter_effects()
            .map(|(_, _, e)| (e - &HermitianOp::identity(2).scale(e.trace() / 2.0)).operator_norm())
            .sum::<f64>()
            * (1.0 - eta);
        assert!((assemblage_distance(&a, &noisy).unwrap() - expected).abs() < 1e-12);
        let other = make_pauli_assemblage::<f64>(&[[0.0, 0.0, 1.0]]).unwrap();
        assert!(assemblage_distance(&a, &other).is_err());
    }

    #[test]
    fn distance_matches_dense_eigensolver() {
        // Oracle: general (non-symmetric) eigensolver on the real 2d x 2d
        // embedding, whose spectrum is the Hermitian one with multiplicity two.
        let a = random_assemblage::<f64>(3, 2, 3, 11).unwrap();
        let b = random_assemblage::<f64>(3, 2, 3, 12).unwrap();
        let mut oracle = 0.0;
        for ((_, _, x), (_, _, y)) in a.iter_effects().zip(b.iter_effects()) {
            let diff = x.matrix() - y.matrix();
            let d = diff.nrows();
            let real = DMatrix::<f64>::from_fn(2 * d, 2 * d, |i, j| {
                let z = diff[(i % d, j % d)];
                match (i < d, j < d) {
                    (true, true) | (false, false) => z.re,
                    (true, false) => -z.im,
                    (false, true) => z.im,
                }
            });
            let ev = real.complex_eigenvalues();
            oracle += ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
        }
        assert!((assemblage_distance(&a, &b).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn steering_examples() {
        let zp = make_pauli_assemblage::<f64>(&[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
        let s = steering_assemblage(&zp);
        let id = HermitianOp::<f64>::identity(2);
        assert!(s.state(0, 0).max_abs_entry_diff(&((&id + &pauli_z()) * 0.25)) < 1e-15);
        assert!(s.state(0, 1).max_abs_entry_diff(&((&id - &pauli_y()) * 0.25)) < 1e-15);
        let trivial = Assemblage::from_effects(vec![vec![id.scale(0.5), id.scale(0.5)]]).unwrap();
        assert!(steering_assemblage(&trivial).state(0, 0).max_abs_entry_diff(&id.scale(0.25)) < 1e-15);
    }

    #[test]
    fn random_assemblage_is_deterministic_and_valid() {
        let a = random_assemblage::<f64>(2, 2, 2, 7).unwrap();
        let b = random_assemblage::<f64>(2, 2, 2, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_assemblage::<f64>(2, 2, 2, 8).unwrap());
        assert!(random_assemblage::<f64>(1, 2, 2, 0).is_err());
        assert!(random_assemblage::<f64>(2, 0, 2, 0).is_err());
        assert!(random_assemblage::<f64>(2, 2, 1, 0).is_err());
    }

    #[test]
    fn assemblage_json_round_trip() {
        let a = xzh::<f64>();
        let s = serde_json::to_string(&a).unwrap();
        assert!(s.starts_with("{\"d\":2,\"measurements\":"));
        let back: Assemblage<f64> = serde_json::from_str(&s).unwrap();
        assert!(effectwise_diff(&a, &back) < 1e-15);
        let bad = s.replacen("\"d\":2", "\"d\":3", 1);
        assert!(serde_json::from_str::<Assemblage<f64>>(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn depolarize_composes_multiplicatively(seed in 0u64..1000, e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
            let a = random_assemblage::<f64>(3, 2, 3, seed).unwrap();
            let twice = depolarize(&depolarize(&a, v(e1)), v(e2));
            let once = depolarize(&a, v(e1 * e2));
            prop_assert!(effectwise_diff(&twice, &once) < 1e-10);
        }

        #[test]
        fn norm_is_a_norm(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000, alpha in -3.0f64..3.0) {
            let a = random_assemblage::<f64>(2, 3, 2, s1).unwrap();
            let b = random_assemblage::<f64>(2, 3, 2, s2).unwrap();
            let c = random_assemblage::<f64>(2, 3, 2, s3).unwrap();
            let dab = assemblage_distance(&a, &b).unwrap();
            let dbc = assemblage_distance(&b, &c).unwrap();
            let dac = assemblage_distance(&a, &c).unwrap();
            prop_assert!(dac <= dab + dbc + 1e-9);
            let scaled = Assemblage::from_effects_unchecked(
                2,
                a.measurements().iter().map(|m| m.effects().iter().map(|e| e.scale(alpha)).collect()).collect(),
            );
            prop_assert!((assemblage_norm(&scaled) - alpha.abs() * assemblage_norm(&a)).abs() < 1e-9);
        }

        #[test]
        fn steering_is_no_signaling(seed in 0u64..1000, d in 2usize..5, k in 2usize..4) {
            let a = random_assemblage::<f64>(d, 3, k, seed).unwrap();
            prop_assert!(steering_assemblage(&a).no_signaling_residual() < 1e-12);
        }
    }
}
