use super::{LinearOperator, Operator, Paraproduct, PetermichlShift};
use crate::error::Result;
use crate::haar::{Mesh, StepFunction};
use crate::scalar::Scalar;

/// `[b, Sha] f = b·Sha f − Sha(b f)` on the mesh tree.
#[derive(Debug, Clone)]
pub struct CommutatorSha<T: Scalar> {
    pub mesh: Mesh,
    pub b: Vec<T>,
}

impl<T: Scalar> CommutatorSha<T> {
    pub fn new(b: &StepFunction<T>) -> Self {
        CommutatorSha { mesh: *b.mesh(), b: b.values().to_vec() }
    }

    fn mul_b(&self, f: &[T]) -> Vec<T> {
        f.iter().zip(&self.b).map(|(&x, &y)| x * y).collect()
    }
}

impl<T: Scalar> Operator<T> for CommutatorSha<T> {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        let sha = PetermichlShift { mesh: self.mesh };
        let a = self.mul_b(&sha.apply(f));
        let c = sha.apply(&self.mul_b(f));
        a.into_iter().zip(c).map(|(x, y)| x - y).collect()
    }
    fn name(&self) -> String {
        "commutator_sha".into()
    }
}

impl<T: Scalar> LinearOperator<T> for CommutatorSha<T> {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T> {
        let sha = PetermichlShift { mesh: self.mesh };
        let a = sha.apply_adjoint(&self.mul_b(g));
        let c = self.mul_b(&sha.apply_adjoint(g));
        a.into_iter().zip(c).map(|(x, y)| x - y).collect()
    }
}

pub fn commutator_shift<T: Scalar>(b: &StepFunction<T>, f: &StepFunction<T>) -> Result<StepFunction<T>> {
    b.mesh().same_as(f.mesh())?;
    StepFunction::new(*f.mesh(), CommutatorSha::new(b).apply(f.values()))
}

#[derive(Debug, Clone)]
pub struct ChungTerms<T: Scalar> {
    /// `[π_b, Sha] f`
    pub term_a: StepFunction<T>,
    /// `[π*_b, Sha] f`
    pub term_b: StepFunction<T>,
    /// `π_{Sha f} b − Sha(π_f b)`
    pub term_c: StepFunction<T>,
    pub direct: StepFunction<T>,
}

impl<T: Scalar> ChungTerms<T> {
    /// Largest cell-wise gap between the three terms and the direct commutator.
    pub fn residual(&self) -> T {
        let sum = self.term_a.add(&self.term_b).and_then(|s| s.add(&self.term_c)).expect("same mesh");
        sum.sub(&self.direct).expect("same mesh").sup_norm()
    }
}

/// The three-term split of `[b, Sha] f`. The mean terms cancel: `Sha f` has mean zero
/// and `Sha` kills constants, so no correction is needed.
pub fn chung_decomposition<T: Scalar>(b: &StepFunction<T>, f: &StepFunction<T>) -> Result<ChungTerms<T>> {
    b.mesh().same_as(f.mesh())?;
    let mesh = *f.mesh();
    let sha = PetermichlShift { mesh };
    let pb = Paraproduct::new(b);
    let fv = f.values();
    let sf = sha.apply(fv);
    let diff = |x: Vec<T>, y: Vec<T>| x.into_iter().zip(y).map(|(a, c)| a - c).collect::<Vec<T>>();

    let term_a = diff(pb.apply(&sf), sha.apply(&pb.apply(fv)));
    let term_b = diff(pb.apply_adjoint(&sf), sha.apply(&pb.apply_adjoint(fv)));
    let sf_step = StepFunction::new(mesh, sf)?;
    let pi_sf_b = Paraproduct::new(&sf_step).apply(b.values());
    let pi_f_b = Paraproduct::new(f).apply(b.values());
    let term_c = diff(pi_sf_b, sha.apply(&pi_f_b));
    Ok(ChungTerms {
        term_a: StepFunction::new(mesh, term_a)?,
        term_b: StepFunction::new(mesh, term_b)?,
        term_c: StepFunction::new(mesh, term_c)?,
        direct: commutator_shift(b, f)?,
    })
}
