use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{coeffs_of, values_of, LinearOperator, Operator, SignSymbol};
use crate::error::{Error, Result};
use crate::grid::{mix_seed, sample_random_grid, DyadicInterval, GridParameters};
use crate::haar::{Mesh, MeshInterval, StepFunction};
use crate::scalar::Scalar;

/// Multiplier turning the probability mean of `Sha^{r,β}` into `H`: the law of `r` is
/// `dr/(r ln 2)`, the averaging measure `dr/r` has mass `ln 2`, and with `h_I`
/// positive on the right half the sign is `+`.
pub const PETERMICHL_AVERAGE_FACTOR: f64 = 8.0 * std::f64::consts::LN_2 / std::f64::consts::PI;

/// `Sha h_J = 2^{-1/2}(h_{J_r} − h_{J_l})` on the mesh tree, dropped where `J`'s
/// children are cells.
#[derive(Debug, Clone, Copy)]
pub struct PetermichlShift {
    pub mesh: Mesh,
}

impl<T: Scalar> Operator<T> for PetermichlShift {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        let (_, c) = coeffs_of(&self.mesh, f);
        let n = c.len();
        let k = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        let mut out = vec![T::zero(); n];
        for h in 2..n {
            let s = if h % 2 == 1 { k } else { -k };
            out[h] = s * c[h / 2];
        }
        values_of(&self.mesh, T::zero(), &out)
    }
    fn name(&self) -> String {
        "sha".into()
    }
}

impl<T: Scalar> LinearOperator<T> for PetermichlShift {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T> {
        let (_, c) = coeffs_of(&self.mesh, g);
        let n = c.len();
        let k = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        let mut out = vec![T::zero(); n];
        for h in 1..n / 2 {
            out[h] = k * (c[2 * h + 1] - c[2 * h]);
        }
        values_of(&self.mesh, T::zero(), &out)
    }
}

pub fn petermichl_shift<T: Scalar>(f: &StepFunction<T>) -> StepFunction<T> {
    let op = PetermichlShift { mesh: *f.mesh() };
    StepFunction::new(*f.mesh(), op.apply(f.values())).expect("finite")
}

/// `c^L_{I,J}` for a Haar shift of complexity `(m, n)`; one `2^m × 2^n` block per `L`.
#[derive(Debug, Clone)]
pub struct ShiftCoefficients<T: Scalar> {
    mesh: Mesh,
    m: u32,
    n: u32,
    /// `blocks[heap(L)][a * 2^n + b]` couples `I = a`-th level-`m` descendant with `J = b`-th level-`n` one.
    blocks: Vec<Vec<T>>,
}

impl<T: Scalar> ShiftCoefficients<T> {
    /// Number of levels carrying a block: `L` needs both `I` and `J` above the cell level.
    fn block_levels(mesh: &Mesh, m: u32, n: u32) -> u32 {
        mesh.depth().saturating_sub(m.max(n))
    }

    pub fn new(mesh: Mesh, m: u32, n: u32, blocks: Vec<Vec<T>>) -> Result<Self> {
        let levels = Self::block_levels(&mesh, m, n);
        let count = 1usize << levels;
        if blocks.len() != count {
            return Err(Error::InvalidParameter(format!(
                "expected {count} blocks (slot 0 unused), got {}",
                blocks.len()
            )));
        }
        let bound = T::lit((-((m + n) as f64) / 2.0).exp2());
        let size = 1usize << (m + n);
        for (h, b) in blocks.iter().enumerate().skip(1) {
            if b.len() != size {
                return Err(Error::InvalidParameter(format!("block {h} has {} entries, expected {size}", b.len())));
            }
            if let Some(e) = b.iter().find(|c| c.abs() > bound * T::lit(1.0 + 1e-12)) {
                return Err(Error::InvalidParameter(format!(
                    "coefficient {e} in block {h} exceeds √(|I||J|)/|L| = {bound}"
                )));
            }
        }
        Ok(ShiftCoefficients { mesh, m, n, blocks })
    }

    pub fn martingale(sigma: &SignSymbol) -> Self {
        let mesh = *sigma.mesh();
        let mut blocks = vec![vec![]; mesh.cells()];
        for i in mesh.haar_intervals() {
            blocks[i.heap()] = vec![T::lit(sigma.get(i) as f64)];
        }
        Self::new(mesh, 0, 0, blocks).expect("unit coefficients")
    }

    pub fn petermichl(mesh: Mesh) -> Self {
        let count = 1usize << Self::block_levels(&mesh, 0, 1);
        let k = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        let mut blocks = vec![vec![]; count];
        for b in blocks.iter_mut().skip(1) {
            *b = vec![-k, k];
        }
        Self::new(mesh, 0, 1, blocks).expect("admissible")
    }

    /// Uniform random coefficients within the admissible bound.
    pub fn random(mesh: Mesh, m: u32, n: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = 1usize << Self::block_levels(&mesh, m, n);
        let bound = (-((m + n) as f64) / 2.0).exp2();
        let mut blocks = vec![vec![]; count];
        for b in blocks.iter_mut().skip(1) {
            *b = (0..1usize << (m + n)).map(|_| T::lit(rng.gen_range(-bound..=bound))).collect();
        }
        Self::new(mesh, m, n, blocks).expect("admissible")
    }

    pub fn complexity(&self) -> (u32, u32) {
        (self.m, self.n)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn apply_coeffs(&self, c: &[T], transpose: bool) -> Vec<T> {
        let (m, n) = (self.m, self.n);
        let mut out = vec![T::zero(); c.len()];
        for (h, block) in self.blocks.iter().enumerate().skip(1) {
            let l = MeshInterval::from_heap(h);
            let first_i = MeshInterval::new(l.level + m, l.index << m).heap();
            let first_j = MeshInterval::new(l.level + n, l.index << n).heap();
            let nj = 1usize << n;
            for a in 0..1usize << m {
                for b in 0..nj {
                    let coef = block[a * nj + b];
                    if transpose {
                        out[first_i + a] += coef * c[first_j + b];
                    } else {
                        out[first_j + b] += coef * c[first_i + a];
                    }
                }
            }
        }
        out
    }
}

pub struct HaarShift<T: Scalar> {
    pub coeffs: ShiftCoefficients<T>,
}

impl<T: Scalar> Operator<T> for HaarShift<T> {
    fn mesh(&self) -> &Mesh {
        &self.coeffs.mesh
    }
    fn apply(&self, f: &[T]) -> Vec<T> {
        let (_, c) = coeffs_of(&self.coeffs.mesh, f);
        values_of(&self.coeffs.mesh, T::zero(), &self.coeffs.apply_coeffs(&c, false))
    }
    fn name(&self) -> String {
        format!("shift({},{})", self.coeffs.m, self.coeffs.n)
    }
}

impl<T: Scalar> LinearOperator<T> for HaarShift<T> {
    fn apply_adjoint(&self, g: &[T]) -> Vec<T> {
        let (_, c) = coeffs_of(&self.coeffs.mesh, g);
        values_of(&self.coeffs.mesh, T::zero(), &self.coeffs.apply_coeffs(&c, true))
    }
}

pub fn haar_shift<T: Scalar>(f: &StepFunction<T>, coeffs: &ShiftCoefficients<T>) -> Result<StepFunction<T>> {
    f.mesh().same_as(coeffs.mesh())?;
    let op = HaarShift { coeffs: coeffs.clone() };
    StepFunction::new(*f.mesh(), op.apply(f.values()))
}

/// Exact antiderivative `F(x) = ∫_{left}^{x} f` of a step function.
struct Antiderivative {
    left: f64,
    h: f64,
    values: Vec<f64>,
    cum: Vec<f64>,
}

impl Antiderivative {
    fn new<T: Scalar>(f: &StepFunction<T>) -> Self {
        let mesh = f.mesh();
        let h = mesh.cell_len();
        let values: Vec<f64> = f.values().iter().map(|v| v.to_f64_lossy()).collect();
        let mut cum = Vec::with_capacity(values.len() + 1);
        let mut s = 0.0;
        cum.push(0.0);
        for v in &values {
            s += v * h;
            cum.push(s);
        }
        Antiderivative { left: mesh.left(), h, values, cum }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = (x - self.left) / self.h;
        if t <= 0.0 {
            return 0.0;
        }
        if t >= n as f64 {
            return self.cum[n];
        }
        let k = (t.floor() as usize).min(n - 1);
        self.cum[k] + self.values[k] * (t - k as f64) * self.h
    }
}

/// Mesh-relative generation window `[j0 − margin, j0 + depth + margin]`, `j0` the
/// generation whose length matches the mesh root.
pub fn grid_window(mesh: &Mesh, margin: u32) -> (i32, i32) {
    let j0 = (-mesh.length().log2()).round() as i32;
    (j0 - margin as i32, j0 + mesh.depth() as i32 + margin as i32)
}

/// Cell averages of `Sha^{r,β} f = Σ_J ⟨f,h_J⟩ H_J` over the grid's window.
///
/// `H_J = |J|^{-1/2}(+,−,−,+)` on the quarters of `J`; its antiderivative is
/// piecewise linear, so every `J` contributes four slope breakpoints, and each cell
/// average is a difference of the accumulated antiderivative at the cell edges.
fn sha_on_grid_f64(f: &Antiderivative, jumps: &[f64], grid: &GridParameters) -> Vec<f64> {
    let n = f.values.len();
    let (e0, h) = (f.left, f.h);
    let e_n = e0 + h * n as f64;
    // bucket m collects breakpoints p with e_{m-1} ≤ p < e_m (bucket 0: p < e_0)
    let mut slope = vec![0.0f64; n + 2];
    let mut moment = vec![0.0f64; n + 2];
    let mut add = |p: f64, d: f64| {
        if p >= e_n {
            return;
        }
        let idx = if p < e0 { 0 } else { (((p - e0) / h).floor() as usize + 1).min(n + 1) };
        slope[idx] += d;
        moment[idx] += d * (p - e0);
    };
    let mut visit = |a: f64, len: f64| {
        let c = ((f.eval(a + len) - f.eval(a + len / 2.0)) - (f.eval(a + len / 2.0) - f.eval(a))) / len.sqrt();
        if c == 0.0 {
            return;
        }
        let s = c / len.sqrt();
        add(a, s);
        add(a + len / 4.0, -2.0 * s);
        add(a + 3.0 * len / 4.0, 2.0 * s);
        add(a + len, -s);
    };
    for j in grid.j_min()..=grid.j_max() - 2 {
        let len = grid.length(j).expect("in window");
        if len >= h {
            let first = grid.locate(e0, j).expect("in window");
            let mut k = first.index;
            loop {
                let (a, _) = grid.endpoints(DyadicInterval::new(j, k)).expect("in window");
                if a >= e_n {
                    break;
                }
                visit(a, len);
                k += 1;
            }
        } else {
            let mut last = None;
            for &x in jumps {
                let i = grid.locate(x, j).expect("in window");
                if last == Some(i) {
                    continue;
                }
                last = Some(i);
                let (a, _) = grid.endpoints(i).expect("in window");
                visit(a, len);
            }
        }
    }
    let mut edge = vec![0.0f64; n + 1];
    let (mut ca, mut cb) = (0.0, 0.0);
    for m in 0..=n {
        ca += slope[m];
        cb += moment[m];
        edge[m] = (m as f64 * h) * ca - cb;
    }
    (0..n).map(|m| (edge[m + 1] - edge[m]) / h).collect()
}

fn jump_points(f: &Antiderivative) -> Vec<f64> {
    let n = f.values.len();
    (0..=n)
        .filter(|&m| {
            let before = if m == 0 { 0.0 } else { f.values[m - 1] };
            let after = if m == n { 0.0 } else { f.values[m] };
            before != after
        })
        .map(|m| f.left + f.h * m as f64)
        .collect()
}

/// `Sha^{r,β} f` for a general grid, truncated to its window and cell-averaged on the mesh.
pub fn petermichl_shift_on_grid<T: Scalar>(f: &StepFunction<T>, grid: &GridParameters) -> Result<StepFunction<T>> {
    let mesh = f.mesh();
    let j_cell = (-mesh.cell_len().log2()).ceil() as i32;
    if grid.j_max() < j_cell {
        return Err(Error::OutOfWindow { generation: j_cell, j_min: grid.j_min(), j_max: grid.j_max() });
    }
    let big_f = Antiderivative::new(f);
    let jumps = jump_points(&big_f);
    let v = sha_on_grid_f64(&big_f, &jumps, grid);
    StepFunction::new(*mesh, v.into_iter().map(T::lit).collect())
}

#[derive(Debug, Clone)]
pub struct ShiftAverage<T: Scalar> {
    pub values: StepFunction<T>,
    pub j_min: i32,
    pub j_max: i32,
    pub samples: usize,
}

/// Monte-Carlo average of `Sha^{r,β} f` over random grids, times `PETERMICHL_AVERAGE_FACTOR`.
///
/// Sample `i` uses the grid drawn from `mix_seed(seed, i)`; within a sample the shift bits are
/// keyed by generation, so different margins share their common generations.
pub fn average_shift<T: Scalar>(
    f: &StepFunction<T>,
    n_samples: usize,
    seed: u64,
    margin: u32,
) -> Result<ShiftAverage<T>> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be ≥ 1".into()));
    }
    let mesh = *f.mesh();
    let (j_min, j_max) = grid_window(&mesh, margin);
    let big_f = Antiderivative::new(f);
    let jumps = jump_points(&big_f);
    const CHUNK: usize = 16;
    let chunks: Vec<Vec<f64>> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0f64; mesh.cells()];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let grid = sample_random_grid(mix_seed(seed, i as u64), j_min, j_max).expect("valid window");
                for (a, v) in acc.iter_mut().zip(sha_on_grid_f64(&big_f, &jumps, &grid)) {
                    *a += v;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0f64; mesh.cells()];
    for c in chunks {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    let scale = PETERMICHL_AVERAGE_FACTOR / n_samples as f64;
    let values = StepFunction::new(mesh, total.into_iter().map(|v| T::lit(v * scale)).collect())?;
    Ok(ShiftAverage { values, j_min, j_max, samples: n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::haar_function;
    use crate::operators::{hilbert_at_midpoints, martingale_transform};

    fn random_f(mesh: Mesh, seed: u64) -> StepFunction<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StepFunction::new(mesh, (0..mesh.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sha_on_haar_basis() {
        let mesh = Mesh::unit(6);
        for i in mesh.haar_intervals() {
            let h = haar_function::<f64>(&mesh, i).unwrap();
            let out = petermichl_shift(&h);
            let expect = if i.level + 1 < 6 {
                let (l, r) = i.children();
                haar_function::<f64>(&mesh, r)
                    .unwrap()
                    .sub(&haar_function(&mesh, l).unwrap())
                    .unwrap()
                    .scale(0.5f64.sqrt())
            } else {
                StepFunction::zeros(mesh)
            };
            assert!(out.sub(&expect).unwrap().sup_norm() < 1e-13);
        }
        let c = StepFunction::constant(mesh, 4.0);
        assert!(petermichl_shift(&c).sup_norm() < 1e-14);
    }

    #[test]
    fn grid_formula_matches_coefficient_recursion() {
        // standard grid restricted to the root's generations: H_J summation vs recursion
        let depth = 7;
        let mesh = Mesh::unit(depth);
        let grid = GridParameters::standard(0, depth as i32).unwrap();
        for s in 0..5 {
            let f = random_f(mesh, s);
            let a = petermichl_shift_on_grid(&f, &grid).unwrap();
            let b = petermichl_shift(&f);
            assert!(a.sub(&b).unwrap().sup_norm() < 1e-11, "{}", a.sub(&b).unwrap().sup_norm());
        }
    }

    #[test]
    fn grid_formula_on_shifted_grid_is_projection() {
        // for a shifted grid the cell-averaged output is the L² projection of Sha f, so
        // ⟨P Sha f, g⟩ = ⟨Sha f, g⟩ for step g; check against brute-force fine sampling
        let mesh = Mesh::unit(4);
        let grid = sample_random_grid(42, -3, 9).unwrap();
        let f = random_f(mesh, 3);
        let out = petermichl_shift_on_grid(&f, &grid).unwrap();
        let fine = Mesh::unit(14);
        let ff: StepFunction<f64> =
            StepFunction::from_midpoints(fine, |x| f.values()[mesh.locate_cell(x).unwrap()]).unwrap();
        // brute force: Σ_J c_J H_J sampled on the fine mesh
        let mut acc = vec![0.0; fine.cells()];
        for j in grid.j_min()..=grid.j_max() - 2 {
            let len = grid.length(j).unwrap();
            let first = grid.locate(0.0, j).unwrap();
            let mut k = first.index;
            loop {
                let (a, b) = grid.endpoints(DyadicInterval::new(j, k)).unwrap();
                if a >= 1.0 {
                    break;
                }
                let c = (ff.integral_over(a + len / 2.0, b) - ff.integral_over(a, a + len / 2.0)) / len.sqrt();
                for (q, x) in acc.iter_mut().enumerate() {
                    let x0 = fine.cell_mid(q);
                    if x0 >= a && x0 < b {
                        let t = ((x0 - a) / len * 4.0).floor() as usize;
                        *x += c / len.sqrt() * [1.0, -1.0, -1.0, 1.0][t.min(3)];
                    }
                }
                k += 1;
            }
        }
        let per = fine.cells() / mesh.cells();
        for m in 0..mesh.cells() {
            let avg: f64 = acc[m * per..(m + 1) * per].iter().sum::<f64>() / per as f64;
            assert!((avg - out.values()[m]).abs() < 2e-3, "cell {m}: {avg} vs {}", out.values()[m]);
        }
    }

    #[test]
    fn shift_special_cases() {
        let mesh = Mesh::unit(6);
        let sigma = SignSymbol::random(mesh, 9);
        let f = random_f(mesh, 10);
        let a = haar_shift(&f, &ShiftCoefficients::martingale(&sigma)).unwrap();
        let b = martingale_transform(&f, &sigma).unwrap();
        assert!(a.sub(&b).unwrap().sup_norm() < 1e-13);
        let c = haar_shift(&f, &ShiftCoefficients::petermichl(mesh)).unwrap();
        assert!(c.sub(&petermichl_shift(&f)).unwrap().sup_norm() < 1e-13);
        let bad = ShiftCoefficients::<f64>::new(mesh, 0, 0, vec![vec![1.5]; 64]);
        assert!(bad.is_err());
    }

    #[test]
    fn adjoints() {
        let mesh = Mesh::unit(7);
        let f = random_f(mesh, 1);
        let g = random_f(mesh, 2);
        let ops: Vec<Box<dyn LinearOperator<f64>>> = vec![
            Box::new(PetermichlShift { mesh }),
            Box::new(HaarShift { coeffs: ShiftCoefficients::random(mesh, 1, 2, 3) }),
            Box::new(HaarShift { coeffs: ShiftCoefficients::random(mesh, 2, 0, 4) }),
        ];
        for op in ops {
            let tf = op.apply(f.values());
            let tsg = op.apply_adjoint(g.values());
            let lhs: f64 = tf.iter().zip(g.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.values().iter().zip(&tsg).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "{}", op.name());
        }
    }

    #[test]
    fn constant_average_vanishes() {
        let mesh = Mesh::unit(6);
        let c = StepFunction::constant(mesh, 1.0f64);
        // a constant on the root is not constant on ℝ, so only check the mean-zero pair
        let a = average_shift(&c.sub(&c).unwrap(), 8, 1, 3).unwrap();
        assert!(a.values.sup_norm() == 0.0);
    }

    #[test]
    fn average_tracks_hilbert() {
        let mesh = Mesh::new(-2.0, 2.0, 8).unwrap();
        let f: StepFunction<f64> = StepFunction::from_midpoints(mesh, |x| {
            if (-0.75..0.0).contains(&x) {
                -1.0
            } else if (0.0..0.75).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let avg = average_shift(&f, 300, 7, 4).unwrap();
        let h = hilbert_at_midpoints(&f).unwrap();
        let (a, b) = (avg.values.values(), h.values());
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        assert!(cov / (va * vb).sqrt() > 0.9);
        assert_eq!(average_shift(&f, 20, 7, 4).unwrap().values, average_shift(&f, 20, 7, 4).unwrap().values);
    }
}
