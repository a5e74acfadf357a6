//! Kernel evaluation and construction of kernel vectors/matrices.
//!
//! Everything downstream (prediction, local fitness, inverse maintenance)
//! is expressed in terms of these primitives. All functions here are pure
//! and safe to call concurrently.

use std::hash::{Hash, Hasher};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Default Gaussian kernel width used by the surface pipeline.
pub const DEFAULT_GAMMA: f64 = 0.25;

/// Dense fixed-length feature vector.
///
/// Dictionary membership ("is this sample already a support vector?") uses
/// **exact bitwise equality**: replayed grid strikes and maturities repeat
/// exactly, and fuzzy matching would silently change the update semantics.
/// `PartialEq`/`Hash` therefore compare the IEEE-754 bit patterns of the
/// entries, never approximate closeness.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }
}

impl From<&[f64]> for FeatureVector {
    fn from(values: &[f64]) -> Self {
        FeatureVector(values.to_vec())
    }
}

impl PartialEq for FeatureVector {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for FeatureVector {}

impl Hash for FeatureVector {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in &self.0 {
            v.to_bits().hash(state);
        }
    }
}

/// Kernel selection: Gaussian `exp(−γ‖x−y‖²)` or the plain inner product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { gamma: f64 },
    Linear,
}

impl KernelSpec {
    /// Gaussian kernel with validated width.
    pub fn gaussian(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be a positive finite real, got {gamma}"),
            });
        }
        Ok(KernelSpec::Gaussian { gamma })
    }

    pub fn linear() -> Self {
        KernelSpec::Linear
    }

    /// `k(x, y)`. Gaussian values lie in (0, 1], with 1 exactly iff x = y.
    pub fn evaluate(&self, x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(x.len(), y.len()));
        }
        Ok(self.eval_raw(x, y))
    }

    /// `k(x, x)` without the pairwise dimension check; Gaussian kernels are
    /// identically 1 on the diagonal.
    pub fn self_similarity(&self, x: &FeatureVector) -> f64 {
        match self {
            KernelSpec::Gaussian { .. } => 1.0,
            KernelSpec::Linear => x.iter().map(|v| v * v).sum(),
        }
    }

    /// Unchecked evaluation on raw slices; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval_raw(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            KernelSpec::Gaussian { gamma } => (-gamma * squared_distance(x, y)).exp(),
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    /// Vector of `k(S[i], x)` for every element of `S`.
    pub fn kernel_vector(&self, set: &[FeatureVector], x: &FeatureVector) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(set.len());
        for s in set {
            out.push(self.evaluate(s, x)?);
        }
        Ok(out)
    }

    /// Symmetric matrix of `k(S[i], S[j])` over all pairs.
    pub fn kernel_matrix(&self, set: &[FeatureVector]) -> Result<Matrix> {
        let n = set.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, self.self_similarity(&set[i]));
            for j in i + 1..n {
                let v = self.evaluate(&set[i], &set[j])?;
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        Ok(m)
    }
}

/// `‖x−y‖²` summed directly over coordinate differences rather than via
/// expanded dot products, avoiding catastrophic cancellation for nearby
/// points.
#[inline]
fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::from(values)
    }

    #[test]
    fn gaussian_is_one_at_zero_distance() {
        let k = KernelSpec::gaussian(0.25).unwrap();
        let x = fv(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(k.evaluate(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn linear_orthogonal_vectors_evaluate_to_zero() {
        let k = KernelSpec::linear();
        let x = fv(&[1.0, 0.0, 0.0, 0.0]);
        let y = fv(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(k.evaluate(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_matches_exp_of_scaled_distance() {
        // gamma = 0.25 and squared distance 4 give exactly exp(-1).
        let k = KernelSpec::gaussian(0.25).unwrap();
        let x = fv(&[0.0, 0.0, 0.0, 0.0]);
        let y = fv(&[2.0, 0.0, 0.0, 0.0]);
        let v = k.evaluate(&x, &y).unwrap();
        assert!((v - 0.367_879_441_171_442_33).abs() < 1e-15);
    }

    proptest::proptest! {
        /// The Gaussian kernel is bitwise symmetric and bounded by [0, 1]
        /// (the exponential underflows to exactly 0 for very far pairs).
        #[test]
        fn gaussian_is_symmetric_and_bounded(
            a in proptest::collection::vec(-1e3_f64..1e3, 4),
            b in proptest::collection::vec(-1e3_f64..1e3, 4),
            gamma in 1e-3_f64..10.0,
        ) {
            let k = KernelSpec::gaussian(gamma).unwrap();
            let (x, y) = (fv(&a), fv(&b));
            let xy = k.evaluate(&x, &y).unwrap();
            let yx = k.evaluate(&y, &x).unwrap();
            proptest::prop_assert_eq!(xy, yx);
            proptest::prop_assert!((0.0..=1.0).contains(&xy));
            proptest::prop_assert_eq!(k.evaluate(&x, &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn mismatched_lengths_error() {
        let k = KernelSpec::linear();
        let x = fv(&[1.0, 2.0]);
        let y = fv(&[1.0, 2.0, 3.0]);
        assert!(matches!(k.evaluate(&x, &y), Err(Error::DimensionMismatch(2, 3))));
    }

    #[test]
    fn kernel_vector_is_elementwise_evaluate() {
        let k = KernelSpec::gaussian(0.25).unwrap();
        let s1 = fv(&[2.0, 0.0]);
        let s2 = fv(&[0.0, 0.0]);
        let x = fv(&[0.0, 0.0]);
        let v = k.kernel_vector(&[s1, s2], &x).unwrap();
        assert_eq!(v.len(), 2);
        assert!((v[0] - 0.367_879_441_171_442_33).abs() < 1e-15);
        assert_eq!(v[1], 1.0);
    }

    #[test]
    fn kernel_vector_of_empty_set_is_empty() {
        let k = KernelSpec::linear();
        assert!(k.kernel_vector(&[], &fv(&[1.0])).unwrap().is_empty());
    }

    #[test]
    fn kernel_matrix_gaussian_two_points() {
        let k = KernelSpec::gaussian(0.25).unwrap();
        let s = [fv(&[0.0]), fv(&[2.0])];
        let m = k.kernel_matrix(&s).unwrap();
        assert_eq!(m.at(0, 0), 1.0);
        assert_eq!(m.at(1, 1), 1.0);
        assert!((m.at(0, 1) - 0.367_879_441_171_442_33).abs() < 1e-15);
        assert_eq!(m.at(0, 1), m.at(1, 0));
    }

    #[test]
    fn kernel_matrix_linear_hand_dots() {
        let k = KernelSpec::linear();
        let s = [fv(&[1.0, 0.0]), fv(&[0.0, 2.0])];
        let m = k.kernel_matrix(&s).unwrap();
        assert_eq!(m.at(0, 0), 1.0);
        assert_eq!(m.at(0, 1), 0.0);
        assert_eq!(m.at(1, 0), 0.0);
        assert_eq!(m.at(1, 1), 4.0);
    }

    #[test]
    fn symmetry_over_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let kernels = [KernelSpec::gaussian(0.25).unwrap(), KernelSpec::linear()];
        for _ in 0..200 {
            let x = fv(&std::array::from_fn::<f64, 4, _>(|_| rng.random_range(-3.0..3.0)));
            let y = fv(&std::array::from_fn::<f64, 4, _>(|_| rng.random_range(-3.0..3.0)));
            for k in &kernels {
                let a = k.evaluate(&x, &y).unwrap();
                let b = k.evaluate(&y, &x).unwrap();
                assert_eq!(a, b);
                if let KernelSpec::Gaussian { .. } = k {
                    assert!(a > 0.0 && a <= 1.0);
                }
            }
        }
    }

    #[test]
    fn bitwise_equality_distinguishes_zero_signs() {
        // -0.0 == 0.0 as floats, but the dictionary key must distinguish
        // the bit patterns to stay strictly reproducible.
        assert_ne!(fv(&[0.0]), fv(&[-0.0]));
        assert_eq!(fv(&[1.5, 2.5]), fv(&[1.5, 2.5]));
    }

    #[test]
    fn invalid_gamma_rejected() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
    }
}
