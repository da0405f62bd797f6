use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LinearOperator, Operator};
use crate::error::{Error, Result};
use crate::haar::StepFunction;
use crate::scalar::Scalar;
use crate::weights::Weight;

#[derive(Debug, Clone, Copy)]
pub struct NormOptions {
    pub max_iter: usize,
    /// stop once `‖Bx − λx‖ ≤ tol·λ` for `B = M*M`
    pub tol: f64,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { max_iter: 10_000, tol: 1e-8, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate<T> {
    pub norm: T,
    pub iterations: usize,
    pub residual: f64,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Largest eigenvalue of a positive semidefinite `B`, returned as its square root.
fn power_iteration<T: Scalar>(n: usize, b: impl Fn(&[T]) -> Vec<T>, opts: &NormOptions) -> Result<NormEstimate<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    let nx = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    // single precision cannot resolve residuals near 1e-8
    let tol = opts.tol.max(16.0 * T::epsilon().to_f64_lossy());
    let mut lambda = T::zero();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let y = b(&x);
        let ny = dot(&y, &y).sqrt();
        if ny == T::zero() {
            return Ok(NormEstimate { norm: T::zero(), iterations: it, residual: 0.0 });
        }
        lambda = dot(&x, &y);
        let r = y.iter().zip(&x).map(|(&a, &c)| (a - lambda * c).powi(2)).sum::<T>().sqrt();
        residual = (r / lambda.abs()).to_f64_lossy();
        if residual <= tol {
            return Ok(NormEstimate { norm: lambda.max(T::zero()).sqrt(), iterations: it, residual });
        }
        x = y.into_iter().map(|v| v / ny).collect();
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        estimate: lambda.max(T::zero()).sqrt().to_f64_lossy(),
        residual,
        last_iterate: x.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

/// `‖T‖_{L²(u) → L²(v)}` as the top singular value of `g ↦ √v T(g/√u)`; `None` is Lebesgue measure.
pub fn operator_norm_two_weight<T: Scalar>(
    op: &dyn LinearOperator<T>,
    u: Option<&Weight<T>>,
    v: Option<&Weight<T>>,
    opts: &NormOptions,
) -> Result<NormEstimate<T>> {
    let mesh = *op.mesh();
    for w in [u, v].into_iter().flatten() {
        mesh.same_as(w.mesh())?;
    }
    let n = mesh.cells();
    let root = |w: Option<&Weight<T>>| -> Vec<T> {
        w.map_or(vec![T::one(); n], |w| w.values().iter().map(|x| x.sqrt()).collect())
    };
    let (su, sv) = (root(u), root(v));
    let b = |x: &[T]| {
        let g: Vec<T> = x.iter().zip(&su).map(|(&a, &s)| a / s).collect();
        let tg: Vec<T> = op.apply(&g).into_iter().zip(&sv).map(|(a, &s)| a * s * s).collect();
        op.apply_adjoint(&tg).into_iter().zip(&su).map(|(a, &s)| a / s).collect()
    };
    power_iteration(n, b, opts)
}

/// `‖T‖_{L²(w)}`.
pub fn operator_norm_weighted<T: Scalar>(
    op: &dyn LinearOperator<T>,
    w: Option<&Weight<T>>,
    opts: &NormOptions,
) -> Result<NormEstimate<T>> {
    operator_norm_two_weight(op, w, w, opts)
}

/// `max ‖Tf‖_{L^p(w)} / ‖f‖_{L^p(w)}` over the supplied test functions: a certified lower bound
/// that also applies to sublinear operators.
pub fn operator_norm_lower_bound<T: Scalar>(
    op: &dyn Operator<T>,
    w: Option<&Weight<T>>,
    p: f64,
    tests: &[StepFunction<T>],
) -> Result<T> {
    let mesh = *op.mesh();
    let mut best = T::zero();
    for f in tests {
        mesh.same_as(f.mesh())?;
        let den = f.lp_norm(p, w.map(|w| w.as_step()))?;
        if den == T::zero() {
            continue;
        }
        let tf = StepFunction::new(mesh, op.apply(f.values()))?;
        let r = tf.lp_norm(p, w.map(|w| w.as_step()))? / den;
        if r > best {
            best = r;
        }
    }
    Ok(best)
}

/// Row-major matrix of `op` on cell values: entry `(i, j)` is `(T e_j)_i`.
pub fn dense_matrix<T: Scalar>(op: &dyn Operator<T>) -> Vec<T> {
    let n = op.mesh().cells();
    let mut m = vec![T::zero(); n * n];
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e[j] = T::one();
        for (i, v) in op.apply(&e).into_iter().enumerate() {
            m[i * n + j] = v;
        }
        e[j] = T::zero();
    }
    m
}
