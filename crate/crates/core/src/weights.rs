//! Weights and their characteristics, Carleson sequences, the Bellman function of the
//! Little Lemma, and two-weight condition reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{third_grids, DyadicInterval, GridParameters};
use crate::haar::{averages_of, Mesh, MeshInterval, StepFunction};
use crate::operators::{operator_norm_two_weight, AveragingOperator, NormOptions};
use crate::scalar::Scalar;

/// A strictly positive step function.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight<T: Scalar> {
    f: StepFunction<T>,
}

impl<T: Scalar> Weight<T> {
    pub fn new(f: StepFunction<T>) -> Result<Self> {
        if let Some((k, v)) = f.values().iter().enumerate().find(|(_, v)| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::DegenerateWeight(format!("value {v} at cell {k}")));
        }
        Ok(Weight { f })
    }

    pub fn from_values(mesh: Mesh, values: Vec<T>) -> Result<Self> {
        Self::new(StepFunction::new(mesh, values)?)
    }

    pub fn unit(mesh: Mesh) -> Self {
        Weight { f: StepFunction::constant(mesh, T::one()) }
    }

    /// `|x − x0|^α` with every cell holding its exact average, so the singularity is integrated
    /// rather than sampled.
    pub fn power(mesh: Mesh, x0: f64, alpha: f64) -> Result<Self> {
        if !(alpha > -1.0) {
            return Err(Error::InvalidParameter(format!("power exponent {alpha} is not locally integrable")));
        }
        let g = |t: f64| t.signum() * t.abs().powf(alpha + 1.0) / (alpha + 1.0);
        let h = mesh.cell_len();
        let vals = (0..mesh.cells())
            .map(|k| {
                let a = mesh.cell_left(k) - x0;
                T::lit((g(a + h) - g(a)) / h)
            })
            .collect();
        Self::from_values(mesh, vals)
    }

    pub fn mesh(&self) -> &Mesh {
        self.f.mesh()
    }

    pub fn values(&self) -> &[T] {
        self.f.values()
    }

    pub fn as_step(&self) -> &StepFunction<T> {
        &self.f
    }

    pub fn into_step(self) -> StepFunction<T> {
        self.f
    }

    /// `w^{-1/(p-1)}`.
    pub fn dual(&self, p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} must exceed 1")));
        }
        let e = T::lit(-1.0 / (p - 1.0));
        Self::new(self.f.map(|v| v.powf(e)))
    }

    pub fn inverse(&self) -> Self {
        Weight { f: self.f.map(|v| v.recip()) }
    }

    /// `w(I)`.
    pub fn mass(&self, i: MeshInterval) -> Result<T> {
        Ok(self.f.average(i)? * T::lit(self.mesh().interval_len(i.level)))
    }
}

/// Which intervals a characteristic is taken over.
#[derive(Debug, Clone)]
pub enum IntervalScan {
    /// The dyadic tree of the mesh itself.
    MeshTree,
    /// The three one-third shifted grids.
    ThirdGrids,
    Grids(Vec<GridParameters>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxInterval {
    pub grid: String,
    pub generation: i32,
    pub index: i64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicReport {
    pub characteristic_name: String,
    pub value: f64,
    pub argmax_interval: ArgmaxInterval,
    pub grids_scanned: Vec<String>,
    pub mesh_depth: u32,
}

impl CharacteristicReport {
    /// The argmax as a mesh interval, when it was found on the mesh tree.
    pub fn mesh_interval(&self) -> Option<MeshInterval> {
        (self.argmax_interval.grid == "mesh")
            .then(|| MeshInterval::new(self.argmax_interval.generation as u32, self.argmax_interval.index as usize))
    }
}

fn mesh_argmax(mesh: &Mesh, h: usize) -> ArgmaxInterval {
    let i = MeshInterval::from_heap(h);
    let (left, right) = mesh.bounds(i);
    ArgmaxInterval { grid: "mesh".into(), generation: i.level as i32, index: i.index as i64, left, right }
}

fn tree_report<T: Scalar>(name: &str, mesh: &Mesh, values: &[T]) -> CharacteristicReport {
    let (h, v) = values
        .iter()
        .enumerate()
        .skip(1)
        .fold((1, T::neg_infinity()), |(bh, bv), (h, &v)| if v > bv { (h, v) } else { (bh, bv) });
    CharacteristicReport {
        characteristic_name: name.into(),
        value: v.to_f64_lossy(),
        argmax_interval: mesh_argmax(mesh, h),
        grids_scanned: vec!["mesh".into()],
        mesh_depth: mesh.depth(),
    }
}

/// `x ↦ ∫_{left}^{x} g`, exact for step functions.
struct Primitive {
    left: f64,
    h: f64,
    vals: Vec<f64>,
    cum: Vec<f64>,
}

impl Primitive {
    fn new<T: Scalar>(g: &StepFunction<T>) -> Self {
        let mesh = g.mesh();
        let vals: Vec<f64> = g.values().iter().map(|v| v.to_f64_lossy()).collect();
        let h = mesh.cell_len();
        let mut cum = Vec::with_capacity(vals.len() + 1);
        cum.push(0.0);
        for v in &vals {
            cum.push(cum.last().unwrap() + v * h);
        }
        Primitive { left: mesh.left(), h, vals, cum }
    }

    fn at(&self, x: f64) -> f64 {
        let n = self.vals.len();
        let t = ((x - self.left) / self.h).max(0.0);
        let k = (t.floor() as usize).min(n - 1);
        let rest = (x - (self.left + k as f64 * self.h)).clamp(0.0, self.h);
        self.cum[k] + rest * self.vals[k]
    }

    fn average(&self, a: f64, b: f64) -> f64 {
        (self.at(b) - self.at(a)) / (b - a)
    }
}

/// In-window grid intervals lying inside the mesh, no shorter than one cell.
fn grid_intervals_in_mesh(grid: &GridParameters, mesh: &Mesh) -> Vec<(DyadicInterval, f64, f64)> {
    let eps = 1e-12 * mesh.length();
    let mut out = Vec::new();
    for j in grid.j_min()..=grid.j_max() {
        let len = grid.length(j).expect("in window");
        if len > mesh.length() + eps || len < mesh.cell_len() - eps {
            continue;
        }
        let mut i = grid.locate(mesh.left(), j).expect("in window");
        loop {
            let (a, b) = grid.endpoints(i).expect("in window");
            if b > mesh.right() + eps {
                break;
            }
            if a >= mesh.left() - eps {
                out.push((i, a, b));
            }
            i = DyadicInterval::new(j, i.index + 1);
        }
    }
    out
}

/// Grid window whose intervals run from the mesh length down to one cell.
fn scan_window(mesh: &Mesh) -> (i32, i32) {
    let j0 = (-mesh.length().log2()).floor() as i32;
    (j0 - 1, j0 + mesh.depth() as i32 + 1)
}

fn grids_for(scan: &IntervalScan, mesh: &Mesh) -> Result<Vec<(String, GridParameters)>> {
    Ok(match scan {
        IntervalScan::MeshTree => vec![],
        IntervalScan::ThirdGrids => {
            let (lo, hi) = scan_window(mesh);
            third_grids(lo, hi)?.into_iter().enumerate().map(|(i, g)| (format!("third({i})"), g)).collect()
        }
        IntervalScan::Grids(gs) => gs.iter().enumerate().map(|(i, g)| (format!("grid({i})"), g.clone())).collect(),
    })
}

/// `sup_I ⟨w⟩_I ⟨w^{-1/(p-1)}⟩_I^{p-1}` over the scanned intervals.
pub fn ap_characteristic<T: Scalar>(w: &Weight<T>, p: f64, scan: &IntervalScan) -> Result<CharacteristicReport> {
    let sigma = w.dual(p)?;
    let mesh = *w.mesh();
    let name = format!("A_{p}");
    if let IntervalScan::MeshTree = scan {
        let (aw, asg) = (averages_of(w.values()), averages_of(sigma.values()));
        let e = T::lit(p - 1.0);
        let vals: Vec<T> = aw.iter().zip(&asg).map(|(&a, &s)| a * s.powf(e)).collect();
        return Ok(tree_report(&name, &mesh, &vals));
    }
    let (pw, ps) = (Primitive::new(w.as_step()), Primitive::new(sigma.as_step()));
    let mut best: Option<(f64, ArgmaxInterval)> = None;
    let mut names = Vec::new();
    for (gname, grid) in grids_for(scan, &mesh)? {
        for (i, a, b) in grid_intervals_in_mesh(&grid, &mesh) {
            let v = pw.average(a, b) * ps.average(a, b).powf(p - 1.0);
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((
                    v,
                    ArgmaxInterval { grid: gname.clone(), generation: i.generation, index: i.index, left: a, right: b },
                ));
            }
        }
        names.push(gname);
    }
    let (value, argmax_interval) =
        best.ok_or_else(|| Error::InvalidParameter("no grid interval fits inside the mesh".into()))?;
    Ok(CharacteristicReport {
        characteristic_name: name,
        value,
        argmax_interval,
        grids_scanned: names,
        mesh_depth: mesh.depth(),
    })
}

/// Fujii–Wilson `sup_I (1/w(I)) ∫_I M^D(w 1_I)` over the mesh tree.
pub fn a_infty_fujii_wilson<T: Scalar>(w: &Weight<T>) -> CharacteristicReport {
    let mesh = *w.mesh();
    let n = mesh.cells();
    let avg = averages_of(w.values());
    // run[k] = max of ⟨w⟩_J over J between the current level and the cell k
    let mut run: Vec<T> = w.values().to_vec();
    let mut ratio = vec![T::zero(); 2 * n];
    for level in (0..=mesh.depth()).rev() {
        let width = n >> level;
        for idx in 0..1usize << level {
            let h = (1usize << level) + idx;
            let cells = idx * width..(idx + 1) * width;
            let mut s = T::zero();
            for k in cells {
                if avg[h] > run[k] {
                    run[k] = avg[h];
                }
                s += run[k];
            }
            ratio[h] = s / (avg[h] * T::lit(width as f64));
        }
    }
    tree_report("A_inf(FW)", &mesh, &ratio)
}

/// Hruščev `sup_I ⟨w⟩_I exp(−⟨log w⟩_I)` over the mesh tree.
pub fn a_infty_hruscev<T: Scalar>(w: &Weight<T>) -> CharacteristicReport {
    let logs: Vec<T> = w.values().iter().map(|v| v.ln()).collect();
    let (a, l) = (averages_of(w.values()), averages_of(&logs));
    let vals: Vec<T> = a.iter().zip(&l).map(|(&x, &y)| x * (-y).exp()).collect();
    tree_report("A_inf(exp)", w.mesh(), &vals)
}

/// `sup_I ⟨w^q⟩_I^{1/q} / ⟨w⟩_I` over the mesh tree.
pub fn rh_q<T: Scalar>(w: &Weight<T>, q: f64) -> Result<CharacteristicReport> {
    if !(q > 1.0) {
        return Err(Error::InvalidParameter(format!("q = {q} must exceed 1")));
    }
    let tq = T::lit(q);
    let wq: Vec<T> = w.values().iter().map(|v| v.powf(tq)).collect();
    let (aq, a) = (averages_of(&wq), averages_of(w.values()));
    let vals: Vec<T> = aq.iter().zip(&a).map(|(&x, &y)| x.powf(tq.recip()) / y).collect();
    Ok(tree_report(&format!("RH_{q}"), w.mesh(), &vals))
}

/// Nonnegative values on every mesh interval, cells included, heap-indexed (length `2N`).
#[derive(Debug, Clone, PartialEq)]
pub struct CarlesonSequence<T: Scalar> {
    mesh: Mesh,
    values: Vec<T>,
}

impl<T: Scalar> CarlesonSequence<T> {
    pub fn new(mesh: Mesh, values: Vec<T>) -> Result<Self> {
        if values.len() != 2 * mesh.cells() {
            return Err(Error::MeshMismatch(format!("{} entries for {} cells", values.len(), mesh.cells())));
        }
        if let Some((h, v)) = values.iter().enumerate().skip(1).find(|(_, v)| !(**v >= T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("entry {v} at heap {h}")));
        }
        Ok(CarlesonSequence { mesh, values })
    }

    pub fn zeros(mesh: Mesh) -> Self {
        CarlesonSequence { mesh, values: vec![T::zero(); 2 * mesh.cells()] }
    }

    pub fn from_fn(mesh: Mesh, mut g: impl FnMut(MeshInterval) -> T) -> Result<Self> {
        let mut v = vec![T::zero(); 2 * mesh.cells()];
        for (h, x) in v.iter_mut().enumerate().skip(1) {
            *x = g(MeshInterval::from_heap(h));
        }
        Self::new(mesh, v)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: MeshInterval) -> T {
        self.values[i.heap()]
    }
}

/// `Σ_{I ⊆ J} λ_I` for every `J`, heap-indexed.
fn subtree_sums<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut s = values.to_vec();
    let n = s.len() / 2;
    for h in (1..n).rev() {
        s[h] = s[h] + s[2 * h] + s[2 * h + 1];
    }
    s
}

/// `sup_J Σ_{I⊆J} λ_I / v(J)` with its maximizing interval; `None` is Lebesgue measure.
pub fn carleson_intensity_with_argmax<T: Scalar>(
    seq: &CarlesonSequence<T>,
    v: Option<&Weight<T>>,
) -> Result<(T, MeshInterval)> {
    let mesh = seq.mesh;
    if let Some(v) = v {
        mesh.same_as(v.mesh())?;
    }
    let sums = subtree_sums(&seq.values);
    let vavg = v.map(|v| averages_of(v.values()));
    let mut best = (T::zero(), MeshInterval::ROOT);
    for (h, &s) in sums.iter().enumerate().skip(1) {
        let i = MeshInterval::from_heap(h);
        let len = T::lit(mesh.interval_len(i.level));
        let mass = vavg.as_ref().map_or(len, |a| a[h] * len);
        let r = s / mass;
        if r > best.0 {
            best = (r, i);
        }
    }
    Ok(best)
}

pub fn carleson_intensity<T: Scalar>(seq: &CarlesonSequence<T>, v: Option<&Weight<T>>) -> Result<T> {
    Ok(carleson_intensity_with_argmax(seq, v)?.0)
}

/// `sup_I ⟨|b − ⟨b⟩_I|²⟩_I^{1/2}`, through `Σ_{J⊆I} b_J² / |I|`.
pub fn bmo_dyadic_norm<T: Scalar>(b: &StepFunction<T>) -> T {
    let seq = haar_square_sequence(b);
    carleson_intensity(&seq, None).expect("same mesh").sqrt()
}

/// `{b_I²}` on the Haar intervals of the mesh.
pub fn haar_square_sequence<T: Scalar>(b: &StepFunction<T>) -> CarlesonSequence<T> {
    let spec = crate::haar::analyze(b);
    let mesh = *b.mesh();
    let mut v = vec![T::zero(); 2 * mesh.cells()];
    for (h, &c) in spec.coeffs().iter().enumerate().skip(1) {
        v[h] = c * c;
    }
    CarlesonSequence { mesh, values: v }
}

/// `Δ_I w = ⟨w⟩_{I+} − ⟨w⟩_{I−}` on the Haar intervals (zero on cells), with the averages.
fn differences<T: Scalar>(w: &[T]) -> (Vec<T>, Vec<T>) {
    let avg = averages_of(w);
    let n = w.len();
    let mut d = vec![T::zero(); 2 * n];
    for h in 1..n {
        d[h] = avg[2 * h + 1] - avg[2 * h];
    }
    (d, avg)
}

/// `{|Δ_I w / ⟨w⟩_I|² |I|}`.
pub fn fkp_sequence<T: Scalar>(w: &Weight<T>) -> CarlesonSequence<T> {
    let mesh = *w.mesh();
    let (d, a) = differences(w.values());
    let values = (0..d.len())
        .map(|h| if h == 0 { T::zero() } else { (d[h] / a[h]).powi(2) * interval_len_of(&mesh, h) })
        .collect();
    CarlesonSequence { mesh, values }
}

fn interval_len_of<T: Scalar>(mesh: &Mesh, h: usize) -> T {
    T::lit(mesh.interval_len(usize::BITS - 1 - h.leading_zeros()))
}

/// `μ_I = ⟨w⟩^α ⟨w⁻¹⟩^α |I| (|Δw|²/⟨w⟩² + |Δw⁻¹|²/⟨w⁻¹⟩²)`.
pub fn alpha_sequence<T: Scalar>(w: &Weight<T>, alpha: f64) -> Result<CarlesonSequence<T>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("α = {alpha} must be positive")));
    }
    let mesh = *w.mesh();
    let inv = w.inverse();
    let (d, a) = differences(w.values());
    let (di, ai) = differences(inv.values());
    let ta = T::lit(alpha);
    let values = (0..d.len())
        .map(|h| {
            if h == 0 {
                return T::zero();
            }
            (a[h] * ai[h]).powf(ta) * interval_len_of(&mesh, h) * ((d[h] / a[h]).powi(2) + (di[h] / ai[h]).powi(2))
        })
        .collect();
    CarlesonSequence::new(mesh, values)
}

/// The α-Lemma constant. For `α ≥ ½` the bound comes from factoring out
/// `(⟨w⟩⟨w⁻¹⟩)^{α−1/4} ≤ [w]^{α−1/4}` and using the `α = 1/4` case, so the constant is `C_{1/4}`.
pub fn alpha_lemma_constant(alpha: f64) -> f64 {
    if alpha < 0.5 {
        (72.0 / (alpha - 2.0 * alpha * alpha)).max(576.0)
    } else {
        alpha_lemma_constant(0.25)
    }
}

/// `{λ_I / ⟨w⁻¹⟩_I}`.
pub fn little_lemma_map<T: Scalar>(seq: &CarlesonSequence<T>, w: &Weight<T>) -> Result<CarlesonSequence<T>> {
    seq.mesh.same_as(w.mesh())?;
    let ai = averages_of(w.inverse().values());
    let values =
        seq.values.iter().zip(&ai).enumerate().map(|(h, (&l, &a))| if h == 0 { T::zero() } else { l / a }).collect();
    CarlesonSequence::new(seq.mesh, values)
}

/// `(Σ_I λ_I inf_I F, A ∫ F v)` with `A` the `v`-intensity of the sequence.
pub fn weighted_carleson_check<T: Scalar>(
    seq: &CarlesonSequence<T>,
    v: Option<&Weight<T>>,
    f: &StepFunction<T>,
) -> Result<(T, T)> {
    seq.mesh.same_as(f.mesh())?;
    if f.values().iter().any(|&x| x < T::zero()) {
        return Err(Error::InvalidParameter("F must be nonnegative".into()));
    }
    let n = f.values().len();
    let mut inf = vec![T::zero(); 2 * n];
    inf[n..].copy_from_slice(f.values());
    for h in (1..n).rev() {
        inf[h] = inf[2 * h].min(inf[2 * h + 1]);
    }
    let lhs = seq.values.iter().zip(&inf).skip(1).map(|(&l, &m)| l * m).sum();
    let a = carleson_intensity(seq, v)?;
    let fv = match v {
        Some(v) => f.mul(v.as_step())?.integral(),
        None => f.integral(),
    };
    Ok((lhs, a * fv))
}

/// `B(u, v, l) = u − 1/(v(1 + l))` on `{u, v > 0, uv ≥ 1, 0 ≤ l ≤ 1}`.
pub fn bellman_b(u: f64, v: f64, l: f64) -> Result<f64> {
    if !(u > 0.0 && v > 0.0 && u * v >= 1.0 - 1e-12 && (0.0..=1.0).contains(&l)) {
        return Err(Error::InvalidParameter(format!("({u}, {v}, {l}) is outside the domain")));
    }
    Ok(u - 1.0 / (v * (1.0 + l)))
}

pub fn bellman_gradient(_u: f64, v: f64, l: f64) -> [f64; 3] {
    [1.0, 1.0 / (v * v * (1.0 + l)), 1.0 / (v * (1.0 + l).powi(2))]
}

pub fn bellman_hessian(_u: f64, v: f64, l: f64) -> [[f64; 3]; 3] {
    let s = 1.0 + l;
    let vv = -2.0 / (v.powi(3) * s);
    let ll = -2.0 / (v * s.powi(3));
    let vl = -1.0 / (v * v * s * s);
    [[0.0, 0.0, 0.0], [0.0, vv, vl], [0.0, vl, ll]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellmanReport {
    pub samples: usize,
    pub range_violations: usize,
    pub derivative_violations: usize,
    pub hessian_violations: usize,
    pub convexity_violations: usize,
    /// smallest `B(x) − (B(x₊)+B(x₋))/2 − α/(4v)` seen
    pub min_convexity_slack: f64,
    /// largest relative gap between closed-form and finite-difference derivatives (step 1e−5)
    pub finite_difference_error: f64,
}

impl BellmanReport {
    pub fn passed(&self) -> bool {
        self.range_violations + self.derivative_violations + self.hessian_violations + self.convexity_violations == 0
            && self.finite_difference_error < 1e-3
    }
}

fn sample_domain(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let v = rng.gen_range(-3.0f64..3.0).exp();
    // a tenth of the points sit on the boundary uv = 1
    let lift = if rng.gen_bool(0.1) { 1.0 } else { rng.gen_range(0.0f64..3.0).exp() };
    let l = if rng.gen_bool(0.05) { 1.0 } else { rng.gen_range(0.0..=1.0) };
    (lift / v, v, l)
}

/// Samples of the domain and admissible triples `x − (x₊+x₋)/2 = (0, 0, α)`, checked against
/// the range, derivative, concavity and dyadic convexity properties.
pub fn bellman_verify(sample_count: usize, seed: u64) -> BellmanReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = BellmanReport {
        samples: sample_count,
        range_violations: 0,
        derivative_violations: 0,
        hessian_violations: 0,
        convexity_violations: 0,
        min_convexity_slack: f64::INFINITY,
        finite_difference_error: 0.0,
    };
    let step = 1e-5;
    for _ in 0..sample_count {
        let (u, v, l) = sample_domain(&mut rng);
        let b = bellman_b(u, v, l).expect("sampled inside");
        if !(0.0..=u).contains(&b) {
            rep.range_violations += 1;
        }
        let g = bellman_gradient(u, v, l);
        if g[2] < 1.0 / (4.0 * v) * (1.0 - 1e-12) {
            rep.derivative_violations += 1;
        }
        let hm = bellman_hessian(u, v, l);
        let (a, c, d) = (hm[1][1], hm[1][2], hm[2][2]);
        if a > 0.0 || d > 0.0 || a * d - c * c < -1e-12 * (a * d).abs() {
            rep.hessian_violations += 1;
        }
        // finite differences of the unconstrained formula
        let f = |u: f64, v: f64, l: f64| u - 1.0 / (v * (1.0 + l));
        let x = [u, v, l];
        for i in 0..3 {
            let hi = step * x[i].abs().max(1e-3);
            let mut p = x;
            let mut m = x;
            p[i] += hi;
            m[i] -= hi;
            let fd = (f(p[0], p[1], p[2]) - f(m[0], m[1], m[2])) / (2.0 * hi);
            rep.finite_difference_error = rep.finite_difference_error.max((fd - g[i]).abs() / g[i].abs().max(1e-8));
            // second differences lose about eps/h² to cancellation; use a wider step and
            // compare against the curvature scale |g|/x
            let h2 = 1e-3 * x[i].abs().max(1e-3);
            let (mut p, mut m) = (x, x);
            p[i] += h2;
            m[i] -= h2;
            if i == 2 {
                m[2] = m[2].max(0.0);
                p[2] = m[2] + 2.0 * h2;
            }
            let mid = [(p[0] + m[0]) / 2.0, (p[1] + m[1]) / 2.0, (p[2] + m[2]) / 2.0];
            let fd2 = (f(p[0], p[1], p[2]) - 2.0 * f(mid[0], mid[1], mid[2]) + f(m[0], m[1], m[2])) / (h2 * h2);
            let exact = bellman_hessian(mid[0], mid[1], mid[2])[i][i];
            let scale = exact.abs().max(g[i].abs() / x[i].abs().max(1e-3)).max(1e-8);
            rep.finite_difference_error = rep.finite_difference_error.max((fd2 - exact).abs() / scale);
        }

        let (up, vp, lp) = sample_domain(&mut rng);
        let (um, vm, lm) = sample_domain(&mut rng);
        let lbar = (lp + lm) / 2.0;
        let alpha = rng.gen_range(0.0..=1.0 - lbar);
        let (ux, vx, lx) = ((up + um) / 2.0, (vp + vm) / 2.0, (lbar + alpha).min(1.0));
        let bx = bellman_b(ux, vx, lx).expect("domain is convex");
        let avg = (bellman_b(up, vp, lp).unwrap() + bellman_b(um, vm, lm).unwrap()) / 2.0;
        let slack = bx - avg - alpha / (4.0 * vx);
        rep.min_convexity_slack = rep.min_convexity_slack.min(slack);
        if slack < -1e-12 * (bx.abs() + avg.abs() + 1.0) {
            rep.convexity_violations += 1;
        }
    }
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtvReport {
    /// `sup_I ⟨u⁻¹⟩_I ⟨v⟩_I`
    pub joint_a2: f64,
    /// `u⁻¹`-intensity of `{|I| |Δ_I u⁻¹|² ⟨v⟩_I}`
    pub u_inv_intensity: f64,
    /// `v`-intensity of `{|I| |Δ_I v|² ⟨u⁻¹⟩_I}`
    pub v_intensity: f64,
    /// `‖T₀‖_{L²(u) → L²(v)}`
    pub t0_norm: f64,
    pub t0_iterations: usize,
    /// unit intensity of `{α_I}`
    pub alpha_intensity: f64,
    /// `alpha_intensity / log joint_a2`, when the logarithm is positive
    pub alpha_to_log_ratio: Option<f64>,
    pub mesh_depth: u32,
}

/// `α_I = (|Δ_I v|/⟨v⟩_I)(|Δ_I u⁻¹|/⟨u⁻¹⟩_I)|I|` and the operator `T₀ f = Σ (α_I/|I|)⟨f⟩_I 1_I`.
pub fn ntv_t0<T: Scalar>(u: &Weight<T>, v: &Weight<T>) -> Result<(CarlesonSequence<T>, AveragingOperator<T>)> {
    u.mesh().same_as(v.mesh())?;
    let mesh = *u.mesh();
    let (dv, av) = differences(v.values());
    let (du, au) = differences(u.inverse().values());
    let mut alpha = vec![T::zero(); dv.len()];
    let mut lambda = vec![T::zero(); dv.len()];
    for h in 1..dv.len() {
        let len: T = interval_len_of(&mesh, h);
        alpha[h] = (dv[h] / av[h]).abs() * (du[h] / au[h]).abs() * len;
        lambda[h] = alpha[h] / len;
    }
    Ok((CarlesonSequence::new(mesh, alpha)?, AveragingOperator::new(mesh, lambda, "t0")?))
}

pub fn ntv_conditions<T: Scalar>(u: &Weight<T>, v: &Weight<T>, opts: &NormOptions) -> Result<NtvReport> {
    u.mesh().same_as(v.mesh())?;
    let mesh = *u.mesh();
    let uinv = u.inverse();
    let (du, au) = differences(uinv.values());
    let (dv, av) = differences(v.values());
    let joint = (1..au.len()).map(|h| au[h] * av[h]).fold(T::zero(), |a, b| a.max(b));
    let n2 = au.len();
    let seq_u = CarlesonSequence::new(
        mesh,
        (0..n2)
            .map(|h| if h == 0 { T::zero() } else { interval_len_of::<T>(&mesh, h) * du[h].powi(2) * av[h] })
            .collect(),
    )?;
    let seq_v = CarlesonSequence::new(
        mesh,
        (0..n2)
            .map(|h| if h == 0 { T::zero() } else { interval_len_of::<T>(&mesh, h) * dv[h].powi(2) * au[h] })
            .collect(),
    )?;
    let (alpha, t0) = ntv_t0(u, v)?;
    let est = operator_norm_two_weight(&t0, Some(u), Some(v), opts)?;
    let alpha_intensity = carleson_intensity(&alpha, None)?.to_f64_lossy();
    let log_a2 = joint.to_f64_lossy().ln();
    Ok(NtvReport {
        joint_a2: joint.to_f64_lossy(),
        u_inv_intensity: carleson_intensity(&seq_u, Some(&uinv))?.to_f64_lossy(),
        v_intensity: carleson_intensity(&seq_v, Some(v))?.to_f64_lossy(),
        t0_norm: est.norm.to_f64_lossy(),
        t0_iterations: est.iterations,
        alpha_intensity,
        alpha_to_log_ratio: (log_a2 > 0.0).then(|| alpha_intensity / log_a2),
        mesh_depth: mesh.depth(),
    })
}
