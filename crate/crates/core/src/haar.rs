//! Step functions on a dyadic mesh and their Haar expansions.
//!
//! Intervals of the mesh tree are addressed by `(level, index)` or by the
//! heap index `2^level + index`: the root is 1, the children of `h` are
//! `2h` and `2h+1`, and the cells occupy `N..2N`.

use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DyadicInterval, GridParameters};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeshInterval {
    pub level: u32,
    pub index: usize,
}

impl MeshInterval {
    pub const ROOT: MeshInterval = MeshInterval { level: 0, index: 0 };

    pub const fn new(level: u32, index: usize) -> Self {
        MeshInterval { level, index }
    }

    pub fn heap(self) -> usize {
        (1usize << self.level) + self.index
    }

    pub fn from_heap(h: usize) -> Self {
        debug_assert!(h >= 1);
        let level = usize::BITS - 1 - h.leading_zeros();
        MeshInterval { level, index: h - (1usize << level) }
    }

    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| MeshInterval::new(self.level - 1, self.index / 2))
    }

    pub fn children(self) -> (Self, Self) {
        let l = MeshInterval::new(self.level + 1, 2 * self.index);
        (l, MeshInterval::new(self.level + 1, 2 * self.index + 1))
    }

    pub fn is_right_child(self) -> bool {
        self.level > 0 && self.index % 2 == 1
    }

    pub fn contains(self, other: MeshInterval) -> bool {
        other.level >= self.level && other.index >> (other.level - self.level) == self.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    left: f64,
    length: f64,
    depth: u32,
}

#[derive(Serialize, Deserialize)]
struct MeshJson {
    root_left: f64,
    root_right: f64,
    depth: u32,
}

pub const MAX_DEPTH: u32 = 26;

impl Mesh {
    pub fn new(left: f64, right: f64, depth: u32) -> Result<Self> {
        if !(right > left) || !left.is_finite() || !right.is_finite() {
            return Err(Error::InvalidParameter(format!("mesh root [{left}, {right}) is empty")));
        }
        if depth > MAX_DEPTH {
            return Err(Error::InvalidParameter(format!("mesh depth {depth} exceeds {MAX_DEPTH}")));
        }
        Ok(Mesh { left, length: right - left, depth })
    }

    /// Mesh on `[0,1)`.
    pub fn unit(depth: u32) -> Self {
        Mesh::new(0.0, 1.0, depth).expect("valid depth")
    }

    /// Mesh whose root is the grid interval `root`.
    pub fn from_interval(grid: &GridParameters, root: DyadicInterval, depth: u32) -> Result<Self> {
        let (a, b) = grid.endpoints(root)?;
        Mesh::new(a, b, depth)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.left + self.length
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cells(&self) -> usize {
        1usize << self.depth
    }

    pub fn cell_len(&self) -> f64 {
        self.length / self.cells() as f64
    }

    pub fn cell_left(&self, k: usize) -> f64 {
        self.left + self.length * (k as f64 / self.cells() as f64)
    }

    pub fn cell_mid(&self, k: usize) -> f64 {
        self.left + self.length * ((k as f64 + 0.5) / self.cells() as f64)
    }

    pub fn interval_len(&self, level: u32) -> f64 {
        self.length * (-(level as f64)).exp2()
    }

    pub fn check(&self, i: MeshInterval) -> Result<()> {
        if i.level > self.depth {
            return Err(Error::Resolution { level: i.level, depth: self.depth });
        }
        if i.index >= 1usize << i.level {
            return Err(Error::InvalidParameter(format!("index {} out of range at level {}", i.index, i.level)));
        }
        Ok(())
    }

    pub fn bounds(&self, i: MeshInterval) -> (f64, f64) {
        let len = self.interval_len(i.level);
        let a = self.left + len * i.index as f64;
        (a, a + len)
    }

    pub fn cell_range(&self, i: MeshInterval) -> Range<usize> {
        let w = 1usize << (self.depth - i.level);
        i.index * w..(i.index + 1) * w
    }

    /// Cell containing `x`, if inside the root.
    pub fn locate_cell(&self, x: f64) -> Option<usize> {
        if x < self.left || x >= self.right() {
            return None;
        }
        let k = (((x - self.left) / self.length) * self.cells() as f64).floor() as usize;
        Some(k.min(self.cells() - 1))
    }

    /// Mesh interval at `level` containing cell `k`.
    pub fn ancestor(&self, k: usize, level: u32) -> MeshInterval {
        MeshInterval::new(level, k >> (self.depth - level))
    }

    /// All intervals with level in `0..=max_level`, coarse to fine.
    pub fn intervals(&self, max_level: u32) -> impl Iterator<Item = MeshInterval> {
        (0..=max_level).flat_map(|l| (0..1usize << l).map(move |k| MeshInterval::new(l, k)))
    }

    /// Intervals carrying a Haar function (above the cell level).
    pub fn haar_intervals(&self) -> impl Iterator<Item = MeshInterval> {
        let d = self.depth;
        (1..(1usize << d)).map(MeshInterval::from_heap)
    }

    pub fn same_as(&self, other: &Mesh) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::MeshMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let j = MeshJson { root_left: self.left, root_right: self.right(), depth: self.depth };
        serde_json::to_writer_pretty(w, &j)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let j: MeshJson = serde_json::from_reader(r)?;
        Mesh::new(j.root_left, j.root_right, j.depth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction<T: Scalar> {
    mesh: Mesh,
    values: Vec<T>,
}

impl<T: Scalar> StepFunction<T> {
    pub fn new(mesh: Mesh, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.cells() {
            return Err(Error::MeshMismatch(format!("{} values for {} cells", values.len(), mesh.cells())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at cell {k}")));
        }
        Ok(StepFunction { mesh, values })
    }

    pub fn constant(mesh: Mesh, c: T) -> Self {
        StepFunction { mesh, values: vec![c; mesh.cells()] }
    }

    pub fn zeros(mesh: Mesh) -> Self {
        Self::constant(mesh, T::zero())
    }

    pub fn indicator(mesh: Mesh, i: MeshInterval) -> Result<Self> {
        mesh.check(i)?;
        let mut f = Self::zeros(mesh);
        for k in mesh.cell_range(i) {
            f.values[k] = T::one();
        }
        Ok(f)
    }

    /// Cell values `g(midpoint)`.
    pub fn from_midpoints(mesh: Mesh, g: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..mesh.cells()).map(|k| T::lit(g(mesh.cell_mid(k)))).collect();
        Self::new(mesh, values)
    }

    /// Exact cell averages `(G(b) − G(a))/(b − a)` from an antiderivative `G`.
    pub fn from_antiderivative(mesh: Mesh, big_g: impl Fn(f64) -> f64) -> Result<Self> {
        let h = mesh.cell_len();
        let values = (0..mesh.cells())
            .map(|k| {
                let a = mesh.cell_left(k);
                T::lit((big_g(a + h) - big_g(a)) / h)
            })
            .collect();
        Self::new(mesh, values)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map(&self, g: impl Fn(T) -> T) -> Self {
        StepFunction { mesh: self.mesh, values: self.values.iter().map(|&v| g(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, g: impl Fn(T, T) -> T) -> Result<Self> {
        self.mesh.same_as(&other.mesh)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| g(a, b)).collect();
        Ok(StepFunction { mesh: self.mesh, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn abs(&self) -> Self {
        self.map(|v| v.abs())
    }

    /// Restriction `f 1_I`.
    pub fn restrict(&self, i: MeshInterval) -> Result<Self> {
        self.mesh.check(i)?;
        let r = self.mesh.cell_range(i);
        let values = self.values.iter().enumerate().map(|(k, &v)| if r.contains(&k) { v } else { T::zero() }).collect();
        Ok(StepFunction { mesh: self.mesh, values })
    }

    pub fn integral(&self) -> T {
        self.values.iter().copied().sum::<T>() * T::lit(self.mesh.cell_len())
    }

    pub fn average(&self, i: MeshInterval) -> Result<T> {
        self.mesh.check(i)?;
        let r = self.mesh.cell_range(i);
        let n = T::lit(r.len() as f64);
        Ok(self.values[r].iter().copied().sum::<T>() / n)
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::lit(self.values.len() as f64)
    }

    /// `∫_a^b f` for an arbitrary real interval, clipped to the root.
    pub fn integral_over(&self, a: f64, b: f64) -> T {
        let a = a.max(self.mesh.left());
        let b = b.min(self.mesh.right());
        if b <= a {
            return T::zero();
        }
        let h = self.mesh.cell_len();
        let pos = |x: f64| (x - self.mesh.left()) / h;
        let (pa, pb) = (pos(a), pos(b));
        let (ka, kb) = (pa.floor() as usize, (pb.ceil() as usize).min(self.mesh.cells()));
        let mut s = T::zero();
        for k in ka..kb {
            let lo = pa.max(k as f64);
            let hi = pb.min(k as f64 + 1.0);
            if hi > lo {
                s += self.values[k] * T::lit((hi - lo) * h);
            }
        }
        s
    }

    pub fn inner(&self, g: &Self) -> Result<T> {
        self.mesh.same_as(&g.mesh)?;
        let s: T = self.values.iter().zip(&g.values).map(|(&a, &b)| a * b).sum();
        Ok(s * T::lit(self.mesh.cell_len()))
    }

    /// `‖f‖_{L^p(w)}`, `w = None` meaning Lebesgue measure.
    pub fn lp_norm(&self, p: f64, w: Option<&StepFunction<T>>) -> Result<T> {
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} < 1")));
        }
        if let Some(w) = w {
            self.mesh.same_as(&w.mesh)?;
        }
        let h = T::lit(self.mesh.cell_len());
        let pp = T::lit(p);
        let s: T = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let wk = w.map_or(T::one(), |w| w.values[k]);
                if p == 2.0 {
                    v * v * wk
                } else {
                    v.abs().powf(pp) * wk
                }
            })
            .sum();
        Ok((s * h).powf(T::one() / pp))
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Averages over every mesh interval, heap-indexed (`1..2N`, cells at `N..2N`).
    pub fn averages(&self) -> Vec<T> {
        averages_of(&self.values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["cell_index", "value"])?;
        for (k, v) in self.values.iter().enumerate() {
            wr.write_record([k.to_string(), format!("{:e}", v.to_f64_lossy())])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mesh: Mesh, r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            cell_index: usize,
            value: f64,
        }
        let mut rd = csv::Reader::from_reader(r);
        let mut values = vec![None; mesh.cells()];
        for row in rd.deserialize::<Row>() {
            let row = row?;
            let slot = values.get_mut(row.cell_index).ok_or_else(|| {
                Error::MeshMismatch(format!("cell_index {} beyond {} cells", row.cell_index, mesh.cells()))
            })?;
            *slot = Some(T::lit(row.value));
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(k, v)| v.ok_or_else(|| Error::Format(format!("missing cell_index {k}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(mesh, values)
    }
}

/// Heap-indexed averages of cell values over all mesh intervals.
pub fn averages_of<T: Scalar>(values: &[T]) -> Vec<T> {
    let n = values.len();
    let mut avg = vec![T::zero(); 2 * n];
    avg[n..].copy_from_slice(values);
    let half = T::lit(0.5);
    for h in (1..n).rev() {
        avg[h] = (avg[2 * h] + avg[2 * h + 1]) * half;
    }
    avg
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaarSpectrum<T: Scalar> {
    mesh: Mesh,
    mean: T,
    /// `coeffs[h] = ⟨f, h_I⟩` for heap index `h` in `1..N`; slot 0 unused.
    coeffs: Vec<T>,
}

impl<T: Scalar> HaarSpectrum<T> {
    pub fn zeros(mesh: Mesh) -> Self {
        HaarSpectrum { mesh, mean: T::zero(), coeffs: vec![T::zero(); mesh.cells()] }
    }

    pub fn from_parts(mesh: Mesh, mean: T, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != mesh.cells() {
            return Err(Error::MeshMismatch(format!("{} coefficient slots for {} cells", coeffs.len(), mesh.cells())));
        }
        Ok(HaarSpectrum { mesh, mean, coeffs })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn set_mean(&mut self, m: T) {
        self.mean = m;
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn coefficient(&self, i: MeshInterval) -> Result<T> {
        if i.level >= self.mesh.depth {
            return Err(Error::Resolution { level: i.level, depth: self.mesh.depth });
        }
        self.mesh.check(i)?;
        Ok(self.coeffs[i.heap()])
    }

    pub fn set_coefficient(&mut self, i: MeshInterval, c: T) -> Result<()> {
        self.coefficient(i)?;
        self.coeffs[i.heap()] = c;
        Ok(())
    }

    /// `|root|·mean² + Σ c_I²`, which equals `‖f‖₂²`.
    pub fn energy(&self) -> T {
        let c: T = self.coeffs.iter().map(|&c| c * c).sum();
        T::lit(self.mesh.length()) * self.mean * self.mean + c
    }

    pub fn synthesize(&self) -> StepFunction<T> {
        let n = self.mesh.cells();
        let mut avg = vec![T::zero(); 2 * n];
        avg[1] = self.mean;
        for h in 1..n {
            let level = usize::BITS - 1 - h.leading_zeros();
            let d = self.coeffs[h] / T::lit(self.mesh.interval_len(level)).sqrt();
            avg[2 * h] = avg[h] - d;
            avg[2 * h + 1] = avg[h] + d;
        }
        if n == 1 {
            return StepFunction { mesh: self.mesh, values: vec![self.mean] };
        }
        StepFunction { mesh: self.mesh, values: avg.split_off(n) }
    }
}

/// O(N) pyramid analysis.
pub fn analyze<T: Scalar>(f: &StepFunction<T>) -> HaarSpectrum<T> {
    let mesh = f.mesh;
    let n = mesh.cells();
    let avg = f.averages();
    let mut coeffs = vec![T::zero(); n];
    let half = T::lit(0.5);
    for (h, c) in coeffs.iter_mut().enumerate().skip(1) {
        let level = usize::BITS - 1 - h.leading_zeros();
        *c = T::lit(mesh.interval_len(level)).sqrt() * (avg[2 * h + 1] - avg[2 * h]) * half;
    }
    HaarSpectrum { mesh, mean: avg[1], coeffs }
}

pub fn synthesize<T: Scalar>(s: &HaarSpectrum<T>) -> StepFunction<T> {
    s.synthesize()
}

/// Direct O(N²) analysis by inner products with each `h_I`; kept as an oracle.
pub fn analyze_direct<T: Scalar>(f: &StepFunction<T>) -> HaarSpectrum<T> {
    let mesh = f.mesh;
    let mut s = HaarSpectrum::zeros(mesh);
    s.mean = f.integral() / T::lit(mesh.length());
    for i in mesh.haar_intervals() {
        let h = haar_function::<T>(&mesh, i).expect("haar interval");
        s.coeffs[i.heap()] = f.inner(&h).expect("same mesh");
    }
    s
}

/// `h_I = |I|^{-1/2}(1_{I_r} − 1_{I_l})`.
pub fn haar_function<T: Scalar>(mesh: &Mesh, i: MeshInterval) -> Result<StepFunction<T>> {
    if i.level >= mesh.depth() {
        return Err(Error::Resolution { level: i.level + 1, depth: mesh.depth() });
    }
    mesh.check(i)?;
    let mut f = StepFunction::zeros(*mesh);
    let amp = T::lit(mesh.interval_len(i.level)).sqrt().recip();
    let r = mesh.cell_range(i);
    let mid = (r.start + r.end) / 2;
    for k in r {
        f.values[k] = if k < mid { -amp } else { amp };
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedHaarDecomposition<T> {
    pub alpha: T,
    pub beta: T,
}

fn half_masses<T: Scalar>(w: &StepFunction<T>, i: MeshInterval) -> Result<(T, T)> {
    let mesh = w.mesh();
    if i.level >= mesh.depth() {
        return Err(Error::Resolution { level: i.level + 1, depth: mesh.depth() });
    }
    mesh.check(i)?;
    let (l, r) = i.children();
    let half = T::lit(mesh.interval_len(i.level + 1));
    let wm = w.average(l)? * half;
    let wp = w.average(r)? * half;
    if !(wm > T::zero() && wp > T::zero()) {
        return Err(Error::DegenerateWeight(format!("w(I-) = {wm}, w(I+) = {wp} on {i:?}")));
    }
    Ok((wm, wp))
}

/// `h^w_I = √(w(I₋)/(w(I)w(I₊))) 1_{I₊} − √(w(I₊)/(w(I)w(I₋))) 1_{I₋}`, `I₊` the right half.
pub fn weighted_haar<T: Scalar>(w: &StepFunction<T>, i: MeshInterval) -> Result<StepFunction<T>> {
    let (wm, wp) = half_masses(w, i)?;
    let total = wm + wp;
    let a = (wm / (total * wp)).sqrt();
    let b = (wp / (total * wm)).sqrt();
    let mesh = *w.mesh();
    let mut f = StepFunction::zeros(mesh);
    let r = mesh.cell_range(i);
    let mid = (r.start + r.end) / 2;
    for k in r {
        f.values[k] = if k < mid { -b } else { a };
    }
    Ok(f)
}

/// Solves `h_I = α h^w_I + β 1_I/√|I|` on the two halves of `I`.
pub fn weighted_decomposition<T: Scalar>(w: &StepFunction<T>, i: MeshInterval) -> Result<WeightedHaarDecomposition<T>> {
    let (wm, wp) = half_masses(w, i)?;
    let total = wm + wp;
    let a = (wm / (total * wp)).sqrt();
    let b = (wp / (total * wm)).sqrt();
    let s = T::lit(w.mesh().interval_len(i.level)).sqrt();
    // right half: 1/s = α a + β/s ; left half: −1/s = −α b + β/s
    let alpha = T::lit(2.0) / (s * (a + b));
    let beta = T::one() - alpha * a * s;
    Ok(WeightedHaarDecomposition { alpha, beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_f(mesh: Mesh, seed: u64) -> StepFunction<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StepFunction::new(mesh, (0..mesh.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn averages_and_norms() {
        let mesh = Mesh::new(-1.0, 3.0, 5).unwrap();
        let c = StepFunction::constant(mesh, 2.5);
        assert_eq!(c.average(MeshInterval::new(3, 5)).unwrap(), 2.5);
        let one = StepFunction::<f64>::constant(mesh, 1.0);
        assert!((one.lp_norm(2.0, None).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(c.average(MeshInterval::new(6, 0)), Err(Error::Resolution { .. })));
        let f = random_f(mesh, 1);
        let w = random_f(mesh, 2).map(|v| v.abs() + 0.1);
        let direct: f64 = (0..mesh.cells()).map(|k| f.values()[k].powi(2) * w.values()[k] * mesh.cell_len()).sum();
        assert!((f.lp_norm(2.0, Some(&w)).unwrap().powi(2) - direct).abs() < 1e-12);
    }

    #[test]
    fn single_haar_coefficient() {
        let mesh = Mesh::unit(8);
        let h = haar_function::<f64>(&mesh, MeshInterval::ROOT).unwrap();
        let s = analyze(&h);
        assert!((s.coefficient(MeshInterval::ROOT).unwrap() - 1.0).abs() < 1e-14);
        assert!(s.coeffs()[2..].iter().all(|c| c.abs() < 1e-14));
        assert!(s.mean().abs() < 1e-15);
        let one = analyze(&StepFunction::<f64>::constant(mesh, 1.0));
        assert_eq!(one.mean(), 1.0);
        assert!(one.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn pyramid_matches_direct() {
        let mesh = Mesh::new(0.5, 2.0, 6).unwrap();
        let f = random_f(mesh, 3);
        let a = analyze(&f);
        let b = analyze_direct(&f);
        assert!((a.mean() - b.mean()).abs() < 1e-14);
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        let mesh = Mesh::unit(12);
        for seed in 0..100 {
            let f = random_f(mesh, seed);
            let s = analyze(&f);
            let g = s.synthesize();
            let err = f.sub(&g).unwrap().sup_norm();
            assert!(err <= 1e-12 * f.sup_norm());
            let n2 = f.lp_norm(2.0, None).unwrap().powi(2);
            assert!((s.energy() - n2).abs() <= 1e-12 * n2);
        }
    }

    #[test]
    fn gram_is_identity() {
        let mesh = Mesh::new(0.0, 2.0, 5).unwrap();
        let hs: Vec<_> = mesh.haar_intervals().map(|i| haar_function::<f64>(&mesh, i).unwrap()).collect();
        for (a, ha) in hs.iter().enumerate() {
            for (b, hb) in hs.iter().enumerate() {
                let g = ha.inner(hb).unwrap();
                assert!((g - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn telescoping() {
        let mesh = Mesh::unit(7);
        let f = random_f(mesh, 11);
        let s = analyze(&f);
        let avg = f.averages();
        for j in mesh.intervals(7) {
            let k = mesh.cell_range(j).start;
            let mut v = s.mean();
            let mut i = mesh.ancestor(k, 0);
            while i.level < j.level {
                let h = haar_function::<f64>(&mesh, i).unwrap();
                v += s.coefficient(i).unwrap() * h.values()[k];
                i = mesh.ancestor(k, i.level + 1);
            }
            assert!((v - avg[j.heap()]).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_haar_examples() {
        let mesh = Mesh::unit(4);
        let one = StepFunction::<f64>::constant(mesh, 1.0);
        let i = MeshInterval::new(1, 1);
        let hw = weighted_haar(&one, i).unwrap();
        let h = haar_function(&mesh, i).unwrap();
        assert!(hw.sub(&h).unwrap().sup_norm() < 1e-14);
        let d = weighted_decomposition(&one, i).unwrap();
        assert!((d.alpha - 1.0).abs() < 1e-14 && d.beta.abs() < 1e-14);

        let w: StepFunction<f64> = StepFunction::from_midpoints(mesh, |x| if x >= 0.5 { 2.0 } else { 1.0 }).unwrap();
        let hw = weighted_haar(&w, MeshInterval::ROOT).unwrap();
        let n: f64 = (0..16).map(|k| hw.values()[k].powi(2) * w.values()[k] / 16.0).sum();
        let m: f64 = (0..16).map(|k| hw.values()[k] * w.values()[k] / 16.0).sum();
        assert!((n - 1.0).abs() < 1e-14 && m.abs() < 1e-14);

        let zero_half: StepFunction<f64> =
            StepFunction::from_midpoints(mesh, |x| if x >= 0.5 { 1.0 } else { 0.0 }).unwrap();
        assert!(matches!(weighted_haar(&zero_half, MeshInterval::ROOT), Err(Error::DegenerateWeight(_))));
    }

    #[test]
    fn weighted_orthonormal() {
        let mesh = Mesh::unit(4);
        let w = random_f(mesh, 5).map(|v| v.abs() + 0.05);
        let hs: Vec<_> = mesh.haar_intervals().map(|i| weighted_haar(&w, i).unwrap()).collect();
        for (a, ha) in hs.iter().enumerate() {
            for (b, hb) in hs.iter().enumerate() {
                let g = ha.mul(hb).unwrap().inner(&w).unwrap();
                assert!((g - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn weighted_bounds_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mesh = Mesh::unit(6);
        for t in 0..1000 {
            let w = random_f(mesh, 1000 + t).map(|v| (3.0 * v).exp());
            let i = MeshInterval::from_heap(rng.gen_range(1..mesh.cells()));
            let d = weighted_decomposition(&w, i).unwrap();
            let (l, r) = i.children();
            let avg = w.average(i).unwrap();
            let delta = w.average(r).unwrap() - w.average(l).unwrap();
            assert!(d.alpha.abs() <= avg.sqrt() * (1.0 + 1e-12));
            assert!(d.beta.abs() <= delta.abs() / avg * (1.0 + 1e-12) + 1e-15);
            let hw = weighted_haar(&w, i).unwrap();
            let h = haar_function(&mesh, i).unwrap();
            let ind = StepFunction::indicator(mesh, i).unwrap().scale(mesh.interval_len(i.level).sqrt().recip());
            let rebuilt = hw.scale(d.alpha).add(&ind.scale(d.beta)).unwrap();
            assert!(rebuilt.sub(&h).unwrap().sup_norm() < 1e-10);
        }
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let mesh = Mesh::new(-2.0, 2.0, 3).unwrap();
        let f = random_f(mesh, 9);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("cell_index,value"));
        let g = StepFunction::<f64>::read_csv(mesh, buf.as_slice()).unwrap();
        assert_eq!(f, g);
        let mut j = Vec::new();
        mesh.write_json(&mut j).unwrap();
        assert_eq!(Mesh::read_json(j.as_slice()).unwrap(), mesh);
        let bad = "cell_index,value\n9,1.0\n";
        assert!(matches!(StepFunction::<f64>::read_csv(mesh, bad.as_bytes()), Err(Error::MeshMismatch(_))));
    }

    #[test]
    fn f32_roundtrip() {
        let mesh = Mesh::unit(8);
        let f: StepFunction<f32> = StepFunction::from_midpoints(mesh, |x| (7.0 * x).sin()).unwrap();
        let g = analyze(&f).synthesize();
        assert!(f.sub(&g).unwrap().sup_norm() < 1e-5);
    }

    #[test]
    fn integral_over_matches_cells() {
        let mesh = Mesh::unit(5);
        let f = random_f(mesh, 21);
        let i = MeshInterval::new(2, 3);
        let (a, b) = mesh.bounds(i);
        let direct = f.average(i).unwrap() * (b - a);
        assert!((f.integral_over(a, b) - direct).abs() < 1e-14);
        let part = f.integral_over(0.1, 0.1 + 1.0 / 64.0);
        let expect = f.values()[3] / 64.0;
        assert!((part - expect).abs() < 1e-14);
        let straddle = f.integral_over(0.12, 0.13);
        let expect = f.values()[3] * (0.125 - 0.12) + f.values()[4] * (0.13 - 0.125);
        assert!((straddle - expect).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn linear_analysis(seed in any::<u64>(), a in -3.0f64..3.0) {
            let mesh = Mesh::unit(6);
            let f = random_f(mesh, seed);
            let g = random_f(mesh, seed ^ 1);
            let lhs = analyze(&f.scale(a).add(&g).unwrap());
            let (sf, sg) = (analyze(&f), analyze(&g));
            for h in 1..mesh.cells() {
                prop_assert!((lhs.coeffs()[h] - (a * sf.coeffs()[h] + sg.coeffs()[h])).abs() < 1e-12);
            }
        }

        #[test]
        fn heap_roundtrip(h in 1usize..1_000_000) {
            let i = MeshInterval::from_heap(h);
            prop_assert_eq!(i.heap(), h);
            let (l, r) = i.children();
            prop_assert_eq!(l.parent(), Some(i));
            prop_assert!(r.is_right_child() && !l.is_right_child());
            prop_assert!(i.contains(l) && i.contains(r) && !l.contains(r));
        }
    }
}
