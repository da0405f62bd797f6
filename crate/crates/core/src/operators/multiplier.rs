use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{coeffs_of, values_of, LinearOperator, Operator};
use crate::error::{Error, Result};
use crate::haar::{Mesh, MeshInterval, StepFunction};
use crate::scalar::Scalar;

/// `σ_I ∈ {−1, +1}` for every Haar interval of a mesh, heap-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSymbol {
    mesh: Mesh,
    signs: Vec<i8>,
}

impl SignSymbol {
    pub fn constant(mesh: Mesh, s: i8) -> Result<Self> {
        Self::from_fn(mesh, |_| s)
    }

    pub fn from_fn(mesh: Mesh, g: impl Fn(MeshInterval) -> i8) -> Result<Self> {
        let mut signs = vec![1i8; mesh.cells()];
        for i in mesh.haar_intervals() {
            let s = g(i);
            if s != 1 && s != -1 {
                return Err(Error::InvalidParameter(format!("sign {s} at {i:?} is not ±1")));
            }
            signs[i.heap()] = s;
        }
        Ok(SignSymbol { mesh, signs })
    }

    pub fn random(mesh: Mesh, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut signs = vec![1i8; mesh.cells()];
        for s in signs.iter_mut().skip(1) {
            *s = if rng.gen::<bool>() { 1 } else { -1 };
        }
        SignSymbol { mesh, signs }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn get(&self, i: MeshInterval) -> i8 {
        self.signs[i.heap()]
    }

    pub fn as_multiplier<T: Scalar>(&self) -> HaarMultiplier<T> {
        let symbol = self.signs.iter().map(|&s| T::lit(s as f64)).collect();
        HaarMultiplier { mesh: self.mesh, symbol, label: "martingale".into() }
    }
}

/// `f ↦ Σ_I m_I ⟨f, h_I⟩ h_I` with a real symbol `m`, heap-indexed.
#[derive(Debug, Clone)]
pub struct HaarMultiplier<T: Scalar> {
    pub mesh: Mesh,
    pub symbol: Vec<T>,
    pub label: String,
}

impl<T: Scalar> HaarMultiplier<T> {
    pub fn new(mesh: Mesh, symbol: Vec<T>, label: &str) -> Result<Self> {
        if symbol.len() != mesh.cells() {
            return Err(Error::MeshMismatch(format!("symbol has {} slots for {} cells", symbol.len(), mesh.cells())));
        }
        Ok(HaarMultiplier { mesh, symbol, label: label.into() })
    }
}

impl<T: Scalar> Operator<T> for HaarMultiplier<T> {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        let (_, mut c) = coeffs_of(&self.mesh, f);
        for (ch, &m) in c.iter_mut().zip(&self.symbol).skip(1) {
            *ch *= m;
        }
        values_of(&self.mesh, T::zero(), &c)
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

impl<T: Scalar> LinearOperator<T> for HaarMultiplier<T> {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T> {
        self.apply(g)
    }
}

pub fn martingale_transform<T: Scalar>(f: &StepFunction<T>, sigma: &SignSymbol) -> Result<StepFunction<T>> {
    f.mesh().same_as(sigma.mesh())?;
    StepFunction::new(*f.mesh(), sigma.as_multiplier().apply(f.values()))
}

/// Partial sums `a + Σ_{I ⊇ I', I ⊆ top} σ_I c_I h_I(x)` along each root-to-cell path of the
/// subtree under `top`; returns, per cell of `top`, the largest absolute partial sum.
/// With `include_constant`, the empty sum `|a|` also competes.
pub(crate) fn sharp_on_subtree<T: Scalar>(
    mesh: &Mesh,
    c: &[T],
    sigma: &[T],
    top: MeshInterval,
    a: T,
    include_constant: bool,
) -> Vec<T> {
    let depth = mesh.depth();
    let width = 1usize << (depth - top.level);
    // breadth-first over the subtree, level by level
    let mut sums = vec![a];
    let mut best = vec![if include_constant { a.abs() } else { T::neg_infinity() }];
    for level in top.level..depth {
        let amp = T::lit(mesh.interval_len(level)).sqrt().recip();
        let first = top.index << (level - top.level);
        let mut ns = Vec::with_capacity(2 * sums.len());
        let mut nb = Vec::with_capacity(2 * sums.len());
        for (j, (&s, &b)) in sums.iter().zip(&best).enumerate() {
            let h = MeshInterval::new(level, first + j).heap();
            let t = sigma[h] * c[h] * amp;
            for v in [s - t, s + t] {
                ns.push(v);
                nb.push(if v.abs() > b { v.abs() } else { b });
            }
        }
        sums = ns;
        best = nb;
    }
    debug_assert_eq!(best.len(), width);
    if top.level == depth {
        return vec![if include_constant { a.abs() } else { T::zero() }];
    }
    best
}

/// `T#_σ f(x) = sup_{I' ∋ x} |Σ_{I ⊇ I'} σ_I ⟨f,h_I⟩ h_I(x)|`.
pub fn sharp_truncation<T: Scalar>(f: &StepFunction<T>, sigma: &SignSymbol) -> Result<StepFunction<T>> {
    f.mesh().same_as(sigma.mesh())?;
    let m = sigma.as_multiplier::<T>();
    let (_, c) = coeffs_of(f.mesh(), f.values());
    let v = sharp_on_subtree(f.mesh(), &c, &m.symbol, MeshInterval::ROOT, T::zero(), false);
    let v = v.into_iter().map(|x| if x.is_finite() { x } else { T::zero() }).collect();
    StepFunction::new(*f.mesh(), v)
}

pub struct SharpTruncation<T: Scalar> {
    pub sigma: HaarMultiplier<T>,
}

impl<T: Scalar> Operator<T> for SharpTruncation<T> {
    fn mesh(&self) -> &Mesh {
        &self.sigma.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        let (_, c) = coeffs_of(&self.sigma.mesh, f);
        sharp_on_subtree(&self.sigma.mesh, &c, &self.sigma.symbol, MeshInterval::ROOT, T::zero(), false)
            .into_iter()
            .map(|x| if x.is_finite() { x } else { T::zero() })
            .collect()
    }
    fn name(&self) -> String {
        "sharp".into()
    }
}

/// `S f(x) = (Σ_{I ∋ x} ⟨f,h_I⟩² / |I|)^{1/2}`.
pub fn square_function<T: Scalar>(f: &StepFunction<T>) -> StepFunction<T> {
    let mesh = *f.mesh();
    StepFunction::new(mesh, square_values(&mesh, f.values())).expect("finite")
}

fn square_values<T: Scalar>(mesh: &Mesh, f: &[T]) -> Vec<T> {
    let n = f.len();
    let (_, c) = coeffs_of(mesh, f);
    let mut acc = vec![T::zero(); 2 * n];
    for h in 1..n {
        let level = usize::BITS - 1 - h.leading_zeros();
        let v = acc[h] + c[h] * c[h] / T::lit(mesh.interval_len(level));
        acc[2 * h] = v;
        acc[2 * h + 1] = v;
    }
    acc.split_off(n).into_iter().map(|v| v.sqrt()).collect()
}

pub struct SquareFunction {
    pub mesh: Mesh,
}

impl<T: Scalar> Operator<T> for SquareFunction {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        square_values(&self.mesh, f)
    }
    fn name(&self) -> String {
        "square".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::{analyze, haar_function};
    use crate::weights::Weight;

    fn random_f(mesh: Mesh, seed: u64) -> StepFunction<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StepFunction::new(mesh, (0..mesh.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_symbol_removes_mean() {
        let mesh = Mesh::unit(8);
        let f = random_f(mesh, 1);
        let t = martingale_transform(&f, &SignSymbol::constant(mesh, 1).unwrap()).unwrap();
        let expect = f.map(|v| v - f.mean());
        assert!(t.sub(&expect).unwrap().sup_norm() < 1e-13);
        assert!(SignSymbol::constant(mesh, 2).is_err());
    }

    #[test]
    fn isometry_and_sharp_bound() {
        let mesh = Mesh::unit(9);
        for s in 0..20 {
            let f = random_f(mesh, s);
            let sigma = SignSymbol::random(mesh, 100 + s);
            let t = martingale_transform(&f, &sigma).unwrap();
            let centered = f.map(|v| v - f.mean());
            let (a, b) = (t.lp_norm(2.0, None).unwrap(), centered.lp_norm(2.0, None).unwrap());
            assert!((a - b).abs() < 1e-10 * b);
            let sharp = sharp_truncation(&f, &sigma).unwrap();
            for (x, y) in t.values().iter().zip(sharp.values()) {
                assert!(x.abs() <= 2.0 * y + 1e-14);
            }
            let sq = square_function(&f);
            assert!((sq.lp_norm(2.0, None).unwrap() - b).abs() < 1e-10 * b);
            let sq_t = square_function(&t);
            assert!(sq.sub(&sq_t).unwrap().sup_norm() < 1e-12);
        }
    }

    #[test]
    fn sharp_matches_brute_force() {
        let mesh = Mesh::unit(6);
        let f = random_f(mesh, 4);
        let sigma = SignSymbol::random(mesh, 5);
        let s = analyze(&f);
        let sharp = sharp_truncation(&f, &sigma).unwrap();
        for k in 0..mesh.cells() {
            let mut best: f64 = 0.0;
            let mut acc = 0.0;
            for l in 0..6 {
                let i = mesh.ancestor(k, l);
                let h = haar_function::<f64>(&mesh, i).unwrap();
                acc += sigma.get(i) as f64 * s.coefficient(i).unwrap() * h.values()[k];
                best = best.max(acc.abs());
            }
            assert!((sharp.values()[k] - best).abs() < 1e-13);
        }
    }

    #[test]
    fn square_of_haar_and_weighted_identity() {
        let mesh = Mesh::unit(7);
        let i = MeshInterval::new(3, 5);
        let h = haar_function::<f64>(&mesh, i).unwrap();
        let s = square_function(&h);
        let expect = StepFunction::indicator(mesh, i).unwrap().scale(mesh.interval_len(3).powf(-0.5));
        assert!(s.sub(&expect).unwrap().sup_norm() < 1e-12);
        assert!((s.lp_norm(2.0, None).unwrap() - 1.0).abs() < 1e-12);

        let f = random_f(mesh, 6);
        let w = Weight::new(random_f(mesh, 7).map(|v| (2.0 * v).exp())).unwrap();
        let lhs = square_function(&f).lp_norm(2.0, Some(w.as_step())).unwrap().powi(2);
        let sp = analyze(&f);
        let avg = w.as_step().averages();
        let rhs: f64 = (1..mesh.cells()).map(|h| sp.coeffs()[h].powi(2) * avg[h]).sum();
        assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }
}
