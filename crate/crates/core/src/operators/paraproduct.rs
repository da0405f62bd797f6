use super::{coeffs_of, spread_down, values_of, LinearOperator, Operator};
use crate::error::Result;
use crate::haar::{averages_of, Mesh, StepFunction};
use crate::scalar::Scalar;

/// `π_b f = Σ_I ⟨f⟩_I b_I h_I`.
#[derive(Debug, Clone)]
pub struct Paraproduct<T: Scalar> {
    pub mesh: Mesh,
    /// `b_I = ⟨b, h_I⟩`, heap-indexed
    pub symbol: Vec<T>,
}

impl<T: Scalar> Paraproduct<T> {
    pub fn new(b: &StepFunction<T>) -> Self {
        let (_, symbol) = coeffs_of(b.mesh(), b.values());
        Paraproduct { mesh: *b.mesh(), symbol }
    }
}

fn pi_apply<T: Scalar>(mesh: &Mesh, bc: &[T], f: &[T]) -> Vec<T> {
    let avg = averages_of(f);
    let out: Vec<T> = (0..bc.len()).map(|h| if h == 0 { T::zero() } else { avg[h] * bc[h] }).collect();
    values_of(mesh, T::zero(), &out)
}

/// `Σ_I b_I g_I 1_I / |I|`.
fn pi_adjoint_apply<T: Scalar>(mesh: &Mesh, bc: &[T], g: &[T]) -> Vec<T> {
    let n = bc.len();
    let (_, gc) = coeffs_of(mesh, g);
    let mut a = vec![T::zero(); 2 * n];
    for h in 1..n {
        let level = usize::BITS - 1 - h.leading_zeros();
        a[h] = bc[h] * gc[h] / T::lit(mesh.interval_len(level));
    }
    spread_down(&a)
}

impl<T: Scalar> Operator<T> for Paraproduct<T> {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        pi_apply(&self.mesh, &self.symbol, f)
    }
    fn name(&self) -> String {
        "paraproduct".into()
    }
}

impl<T: Scalar> LinearOperator<T> for Paraproduct<T> {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T> {
        pi_adjoint_apply(&self.mesh, &self.symbol, g)
    }
}

/// `π*_b f = Σ_I b_I ⟨f,h_I⟩ 1_I/|I|`.
#[derive(Debug, Clone)]
pub struct ParaproductAdjoint<T: Scalar> {
    pub inner: Paraproduct<T>,
}

impl<T: Scalar> Operator<T> for ParaproductAdjoint<T> {
    fn mesh(&self) -> &Mesh {
        &self.inner.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        pi_adjoint_apply(&self.inner.mesh, &self.inner.symbol, f)
    }
    fn name(&self) -> String {
        "paraproduct_adj".into()
    }
}

impl<T: Scalar> LinearOperator<T> for ParaproductAdjoint<T> {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T> {
        pi_apply(&self.inner.mesh, &self.inner.symbol, g)
    }
}

pub fn paraproduct<T: Scalar>(b: &StepFunction<T>, f: &StepFunction<T>) -> Result<StepFunction<T>> {
    b.mesh().same_as(f.mesh())?;
    StepFunction::new(*f.mesh(), Paraproduct::new(b).apply(f.values()))
}

pub fn paraproduct_adjoint<T: Scalar>(b: &StepFunction<T>, f: &StepFunction<T>) -> Result<StepFunction<T>> {
    b.mesh().same_as(f.mesh())?;
    StepFunction::new(*f.mesh(), Paraproduct::new(b).apply_adjoint(f.values()))
}

#[derive(Debug, Clone)]
pub struct ProductTerms<T: Scalar> {
    pub pi_b_f: StepFunction<T>,
    pub pi_b_adj_f: StepFunction<T>,
    pub pi_f_b: StepFunction<T>,
    /// `b f − (π_b f + π*_b f + π_f b)`, which on the truncated tree is the constant `⟨b⟩⟨f⟩`
    pub correction: T,
}

/// `b f = π_b f + π*_b f + π_f b + ⟨b⟩_root ⟨f⟩_root`.
pub fn product_decomposition<T: Scalar>(b: &StepFunction<T>, f: &StepFunction<T>) -> Result<ProductTerms<T>> {
    Ok(ProductTerms {
        pi_b_f: paraproduct(b, f)?,
        pi_b_adj_f: paraproduct_adjoint(b, f)?,
        pi_f_b: paraproduct(f, b)?,
        correction: b.mean() * f.mean(),
    })
}
