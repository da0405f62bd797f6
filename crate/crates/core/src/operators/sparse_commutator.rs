use super::{spread_down, LinearOperator, Operator};
use crate::error::{Error, Result};
use crate::haar::{averages_of, Mesh, MeshInterval, StepFunction};
use crate::scalar::Scalar;
use crate::sparse::SparseFamily;

/// `f ↦ Σ_I λ_I ⟨f⟩_I 1_I` over mesh intervals, cells included (`λ` heap-indexed, length `2N`).
///
/// Self-adjoint. With `λ = 1_S` this is the sparse operator `A_S`.
#[derive(Debug, Clone)]
pub struct AveragingOperator<T: Scalar> {
    pub mesh: Mesh,
    pub lambda: Vec<T>,
    pub label: String,
}

impl<T: Scalar> AveragingOperator<T> {
    pub fn new(mesh: Mesh, lambda: Vec<T>, label: &str) -> Result<Self> {
        if lambda.len() != 2 * mesh.cells() {
            return Err(Error::MeshMismatch(format!("{} coefficients for {} cells", lambda.len(), mesh.cells())));
        }
        Ok(AveragingOperator { mesh, lambda, label: label.into() })
    }

    pub fn sparse(family: &SparseFamily) -> Self {
        let lambda = family.membership().into_iter().map(|m| if m { T::one() } else { T::zero() }).collect();
        AveragingOperator { mesh: *family.mesh(), lambda, label: "sparse".into() }
    }
}

impl<T: Scalar> Operator<T> for AveragingOperator<T> {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        let mut a = averages_of(f);
        for (x, &l) in a.iter_mut().zip(&self.lambda) {
            *x *= l;
        }
        spread_down(&a)
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

impl<T: Scalar> LinearOperator<T> for AveragingOperator<T> {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T> {
        self.apply(g)
    }
}

/// `Ω(b; R) = ⟨|b − ⟨b⟩_R|⟩_R`.
pub fn mean_oscillation<T: Scalar>(b: &StepFunction<T>, r: MeshInterval) -> Result<T> {
    let avg = b.average(r)?;
    let range = b.mesh().cell_range(r);
    let len = T::lit(range.len() as f64);
    Ok(b.values()[range].iter().map(|&v| (v - avg).abs()).sum::<T>() / len)
}

/// `T_{S,b} f(x) = Σ_{Q∈S} |b(x) − ⟨b⟩_Q| ⟨|f|⟩_Q 1_Q(x)`.
pub fn sparse_commutator<T: Scalar>(
    s: &SparseFamily,
    b: &StepFunction<T>,
    f: &StepFunction<T>,
) -> Result<StepFunction<T>> {
    let mesh = *s.mesh();
    mesh.same_as(b.mesh())?;
    mesh.same_as(f.mesh())?;
    let member = s.membership();
    let bavg = b.averages();
    let favg = averages_of(&f.abs().into_values());
    let n = mesh.cells();
    let out = (0..n)
        .map(|k| {
            let bk = b.values()[k];
            let mut h = n + k;
            let mut acc = T::zero();
            while h >= 1 {
                if member[h] {
                    acc += (bk - bavg[h]).abs() * favg[h];
                }
                h /= 2;
            }
            acc
        })
        .collect();
    StepFunction::new(mesh, out)
}

/// `T*_{S,b} f = Σ_{Q∈S} ⟨|b − ⟨b⟩_Q| |f|⟩_Q 1_Q`.
pub fn sparse_commutator_adjoint<T: Scalar>(
    s: &SparseFamily,
    b: &StepFunction<T>,
    f: &StepFunction<T>,
) -> Result<StepFunction<T>> {
    let mesh = *s.mesh();
    mesh.same_as(b.mesh())?;
    mesh.same_as(f.mesh())?;
    let member = s.membership();
    let bavg = b.averages();
    let n = mesh.cells();
    let mut sums = vec![T::zero(); 2 * n];
    for k in 0..n {
        let (bk, fk) = (b.values()[k], f.values()[k].abs());
        let mut h = n + k;
        while h >= 1 {
            if member[h] {
                sums[h] += (bk - bavg[h]).abs() * fk;
            }
            h /= 2;
        }
    }
    // sums hold cell counts' worth of values; divide by the number of cells in each interval
    for (h, v) in sums.iter_mut().enumerate().skip(1) {
        let level = usize::BITS - 1 - h.leading_zeros();
        *v /= T::lit((n >> level) as f64);
    }
    StepFunction::new(mesh, spread_down(&sums))
}
