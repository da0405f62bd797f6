//! Dyadic operators on a mesh, the exact Hilbert transform of step
//! functions, and weighted operator-norm estimation.
//!
//! Coefficient-space operators drop the root mean term of their input.

mod commutator;
mod hilbert;
mod maximal;
mod multiplier;
mod norm;
mod paraproduct;
mod shift;
mod sparse_commutator;

pub use commutator::{chung_decomposition, commutator_shift, ChungTerms, CommutatorSha};
pub use hilbert::{hilbert_at_midpoints, hilbert_exact};
pub(crate) use maximal::maximal_values;
pub use maximal::{maximal_dyadic, weak_type_ratio, weak_type_witness, Maximal};
pub(crate) use multiplier::sharp_on_subtree;
pub use multiplier::{
    martingale_transform, sharp_truncation, square_function, HaarMultiplier, SharpTruncation, SignSymbol,
    SquareFunction,
};
pub use norm::{
    dense_matrix, operator_norm_lower_bound, operator_norm_two_weight, operator_norm_weighted, NormEstimate,
    NormOptions,
};
pub use paraproduct::{
    paraproduct, paraproduct_adjoint, product_decomposition, Paraproduct, ParaproductAdjoint, ProductTerms,
};
pub use shift::{
    average_shift, grid_window, haar_shift, petermichl_shift, petermichl_shift_on_grid, HaarShift, PetermichlShift,
    ShiftAverage, ShiftCoefficients, PETERMICHL_AVERAGE_FACTOR,
};
pub use sparse_commutator::{mean_oscillation, sparse_commutator, sparse_commutator_adjoint, AveragingOperator};

use crate::haar::Mesh;
use crate::scalar::Scalar;

/// An operator acting on cell values of a fixed mesh.
pub trait Operator<T: Scalar>: Send + Sync {
    fn mesh(&self) -> &Mesh;
    fn apply(&self, f: &[T]) -> Vec<T>;
    fn name(&self) -> String;
}

/// A linear operator with its adjoint in `L²(dx)`.
pub trait LinearOperator<T: Scalar>: Operator<T> {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T>;
}

/// The identity, mostly for tests and normalisation.
pub struct Identity {
    pub mesh: Mesh,
}

impl<T: Scalar> Operator<T> for Identity {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        f.to_vec()
    }
    fn name(&self) -> String {
        "identity".into()
    }
}

impl<T: Scalar> LinearOperator<T> for Identity {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T> {
        g.to_vec()
    }
}

/// Haar coefficients of cell values: `(mean, c)` with `c[h] = ⟨f, h_I⟩`.
pub(crate) fn coeffs_of<T: Scalar>(mesh: &Mesh, f: &[T]) -> (T, Vec<T>) {
    let n = f.len();
    let avg = crate::haar::averages_of(f);
    let mut c = vec![T::zero(); n];
    let half = T::lit(0.5);
    for (h, ch) in c.iter_mut().enumerate().skip(1) {
        let level = usize::BITS - 1 - h.leading_zeros();
        *ch = T::lit(mesh.interval_len(level)).sqrt() * (avg[2 * h + 1] - avg[2 * h]) * half;
    }
    (avg[1], c)
}

/// Cell values of `mean + Σ c_I h_I`.
pub(crate) fn values_of<T: Scalar>(mesh: &Mesh, mean: T, c: &[T]) -> Vec<T> {
    let n = c.len();
    if n == 1 {
        return vec![mean];
    }
    let mut avg = vec![T::zero(); 2 * n];
    avg[1] = mean;
    for h in 1..n {
        let level = usize::BITS - 1 - h.leading_zeros();
        let d = c[h] / T::lit(mesh.interval_len(level)).sqrt();
        avg[2 * h] = avg[h] - d;
        avg[2 * h + 1] = avg[h] + d;
    }
    avg.split_off(n)
}

/// Cell values of `Σ_I a_I 1_I` over every mesh interval (heap-indexed, cells included).
pub(crate) fn spread_down<T: Scalar>(a: &[T]) -> Vec<T> {
    let n = a.len() / 2;
    let mut acc = a.to_vec();
    for h in 2..2 * n {
        let p = acc[h / 2];
        acc[h] += p;
    }
    acc.split_off(n)
}
