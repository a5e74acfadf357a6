//! Feature-vector selection state: the kernel matrix over the current
//! support vectors and its incrementally maintained inverse.
//!
//! The inverse is kept current across insertions and deletions by
//! Schur-complement bordering identities, so the local-fitness statistic
//! costs O(n²) per query instead of an O(n³) solve. Floating-point drift is
//! bounded by periodic residual checks and full rebuilds.
//!
//! A state instance is single-writer: mutations must be applied
//! sequentially; read-only queries may run concurrently against a frozen
//! snapshot.

use crate::error::{Error, Result};
use crate::kernel::{FeatureVector, KernelSpec};
use crate::mat::Matrix;

/// Numerical-maintenance knobs. None of these change semantics; they bound
/// floating-point drift and guard against degenerate insertions.
#[derive(Clone, Copy, Debug)]
pub struct FvsConfig {
    /// Bordering denominators with absolute value below this are treated as
    /// singular: the candidate is already spanned and must not be inserted.
    pub delta_z: f64,
    /// Unconditional rebuild cadence (number of add/remove operations).
    pub rebuild_every: u32,
    /// How often (in operations) the inverse residual is measured; a
    /// measurement above `residual_tol` triggers an immediate rebuild.
    /// 0 disables periodic measurement, leaving only the cadence rebuild.
    pub residual_check_every: u32,
    /// Residual ceiling `max|K·K⁻¹ − I|` enforced by the periodic check.
    pub residual_tol: f64,
    /// Hard cap on the state dimension (memory is O(dim²)).
    pub max_dim: usize,
}

impl Default for FvsConfig {
    fn default() -> Self {
        FvsConfig {
            delta_z: 1e-10,
            rebuild_every: 4096,
            residual_check_every: 512,
            residual_tol: 1e-6,
            max_dim: 25_000,
        }
    }
}

/// Kernel matrix `K` over the stored vectors plus its maintained inverse.
///
/// The vector list is index-aligned with the owning support-vector
/// dictionary; removal preserves the relative order of the remaining
/// entries so the alignment survives arbitrary edit sequences.
#[derive(Clone, Debug)]
pub struct FvsState {
    kernel: KernelSpec,
    vectors: Vec<FeatureVector>,
    kmat: Matrix,
    kinv: Matrix,
    ops_since_rebuild: u32,
    config: FvsConfig,
}

impl FvsState {
    pub fn new(kernel: KernelSpec) -> Self {
        Self::with_config(kernel, FvsConfig::default())
    }

    pub fn with_config(kernel: KernelSpec, config: FvsConfig) -> Self {
        FvsState {
            kernel,
            vectors: Vec::new(),
            kmat: Matrix::zeros(0, 0),
            kinv: Matrix::zeros(0, 0),
            ops_since_rebuild: 0,
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn kmat(&self) -> &Matrix {
        &self.kmat
    }

    pub fn kinv(&self) -> &Matrix {
        &self.kinv
    }

    /// Local fitness `J = kᵀ K⁻¹ k / k(x,x)`: the squared cosine between
    /// the kernel mapping of `x` and the span of the stored vectors. 0 on
    /// the empty state by convention (nothing is spanned), 1 when `x`
    /// equals a stored vector.
    ///
    /// A stored vector is perfectly spanned, so equality short-circuits to
    /// exactly 1 rather than trusting the quadratic form: once the stored
    /// set holds near-duplicates the inverse is ill-conditioned enough for
    /// the computed form to drift below any threshold, which would
    /// misclassify an existing key as a new pattern.
    pub fn local_fitness(&self, x: &FeatureVector) -> Result<f64> {
        if self.vectors.is_empty() {
            return Ok(0.0);
        }
        let kxx = self.kernel.self_similarity(x);
        if kxx == 0.0 {
            return Err(Error::DegenerateSample);
        }
        if self.vectors.iter().any(|v| v == x) {
            return Ok(1.0);
        }
        let kvec = self.kernel.kernel_vector(&self.vectors, x)?;
        let interm = self.kinv.mul_vec(&kvec)?;
        let num: f64 = kvec.iter().zip(&interm).map(|(a, b)| a * b).sum();
        Ok(num / kxx)
    }

    /// Inserts `x`, growing `K` by a bordered row/column and updating the
    /// inverse in O(n²) via the bordering identity
    /// `z = 1/(k(x,x) − kᵀK⁻¹k)`, `Y = −z·K⁻¹k`,
    /// `X = K⁻¹ + z·(K⁻¹k)(K⁻¹k)ᵀ`.
    ///
    /// Fails with [`Error::NearSingular`] when the denominator of `z` falls
    /// below `delta_z`; the caller must treat `x` as non-insertable.
    pub fn add_vector(&mut self, x: &FeatureVector) -> Result<()> {
        let n = self.dim();
        if n >= self.config.max_dim {
            return Err(Error::CapacityExceeded { dim: n, cap: self.config.max_dim });
        }
        let kxx = self.kernel.self_similarity(x);
        if n == 0 {
            if kxx == 0.0 {
                return Err(Error::DegenerateSample);
            }
            self.vectors.push(x.clone());
            self.kmat = Matrix::from_rows(&[vec![kxx]])?;
            self.kinv = Matrix::from_rows(&[vec![1.0 / kxx]])?;
            return self.maintain();
        }
        let kvec = self.kernel.kernel_vector(&self.vectors, x)?;
        let interm = self.kinv.mul_vec(&kvec)?;
        let denom = kxx - kvec.iter().zip(&interm).map(|(a, b)| a * b).sum::<f64>();
        if denom.abs() < self.config.delta_z || !denom.is_finite() {
            return Err(Error::NearSingular { denom, delta_z: self.config.delta_z });
        }
        let z = 1.0 / denom;

        // New inverse block [[X, Y], [Yᵀ, z]]; X is symmetric by
        // construction because it adds a scaled outer product of `interm`.
        let mut grown = self.kinv.bordered(&interm.iter().map(|v| -z * v).collect::<Vec<_>>(), z)?;
        for i in 0..n {
            for j in 0..n {
                let v = grown.at(i, j) + z * interm[i] * interm[j];
                grown.set(i, j, v);
            }
        }
        self.kinv = grown;
        self.kmat = self.kmat.bordered(&kvec, kxx)?;
        self.vectors.push(x.clone());
        self.maintain()
    }

    /// Removes the vector at `index`.
    ///
    /// A symmetric permutation first moves the target to the last
    /// row/column (the deletion identity is derived for the last-appended
    /// vector; permuting generalizes it exactly while preserving the
    /// relative order of the remaining entries), then the inverse shrinks
    /// via `K⁻¹ ← X − Y·Yᵀ/z` with `[[X, Y], [Yᵀ, z]]` read from the
    /// permuted inverse. A corner `z` below `delta_z` falls back to a
    /// direct rebuild of the shrunken state.
    pub fn remove_vector(&mut self, index: usize) -> Result<()> {
        let n = self.dim();
        if index >= n {
            return Err(Error::IndexOutOfRange { index, dim: n });
        }
        if n == 1 {
            self.vectors.clear();
            self.kmat = Matrix::zeros(0, 0);
            self.kinv = Matrix::zeros(0, 0);
            self.ops_since_rebuild = 0;
            return Ok(());
        }
        let kinv_perm = self.kinv.rotated_to_last(index)?;
        let kmat_perm = self.kmat.rotated_to_last(index)?;
        self.vectors.remove(index);
        self.kmat = kmat_perm.shrunk();

        let m = n - 1;
        let z = kinv_perm.at(m, m);
        if z.abs() < self.config.delta_z || !z.is_finite() {
            // Degenerate corner: the incremental identity would divide by
            // ~0. Recover by direct inversion of the shrunken matrix.
            self.rebuild()?;
            return Ok(());
        }
        let mut out = Matrix::zeros(m, m);
        for a in 0..m {
            let ya = kinv_perm.at(a, m);
            for b in 0..m {
                out.set(a, b, kinv_perm.at(a, b) - ya * kinv_perm.at(b, m) / z);
            }
        }
        self.kinv = out;
        self.maintain()
    }

    /// Recomputes the inverse from the stored kernel matrix by a direct
    /// solve, clearing accumulated drift.
    pub fn rebuild(&mut self) -> Result<()> {
        if self.dim() > 0 {
            self.kinv = self.kmat.inverse().ok_or(Error::UnrecoverableState)?;
        } else {
            self.kinv = Matrix::zeros(0, 0);
        }
        self.ops_since_rebuild = 0;
        Ok(())
    }

    /// Current `max|K·K⁻¹ − I|` over the state.
    pub fn residual(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.kmat.max_abs_residual(&self.kinv)
    }

    /// Post-mutation bookkeeping: rebuild on the configured cadence, and on
    /// the measurement cadence rebuild whenever the residual exceeds its
    /// ceiling.
    fn maintain(&mut self) -> Result<()> {
        self.ops_since_rebuild += 1;
        if self.ops_since_rebuild >= self.config.rebuild_every {
            return self.rebuild();
        }
        if self.config.residual_check_every > 0
            && self.ops_since_rebuild % self.config.residual_check_every == 0
            && self.residual() > self.config.residual_tol
        {
            return self.rebuild();
        }
        Ok(())
    }
}
