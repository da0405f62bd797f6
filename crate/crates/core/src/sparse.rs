//! Sparse families, Carleson packing, certificate construction, sparse operators and
//! pointwise sparse domination of martingale transforms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::{averages_of, Mesh, MeshInterval, StepFunction};
use crate::operators::{maximal_values, mean_oscillation, sharp_on_subtree, AveragingOperator, Operator, SignSymbol};
use crate::scalar::Scalar;

/// A finite set of mesh intervals with optional certificates `E_Q` (sets of cells).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFamily {
    mesh: Mesh,
    intervals: Vec<MeshInterval>,
    certificates: Option<Vec<Vec<usize>>>,
    eta: f64,
}

impl SparseFamily {
    /// Deduplicated and sorted coarse to fine; `eta` is set from the Carleson constant.
    pub fn new(mesh: Mesh, mut intervals: Vec<MeshInterval>) -> Result<Self> {
        for &i in &intervals {
            mesh.check(i)?;
        }
        intervals.sort_by_key(|i| i.heap());
        intervals.dedup();
        let mut s = SparseFamily { mesh, intervals, certificates: None, eta: 1.0 };
        let c = carleson_constant(&s);
        s.eta = if c > 0.0 { 1.0 / c } else { 1.0 };
        Ok(s)
    }

    pub fn with_certificates(
        mesh: Mesh,
        intervals: Vec<MeshInterval>,
        certificates: Vec<Vec<usize>>,
        eta: f64,
    ) -> Result<Self> {
        if intervals.len() != certificates.len() {
            return Err(Error::InvalidParameter(format!(
                "{} intervals, {} certificates",
                intervals.len(),
                certificates.len()
            )));
        }
        for &i in &intervals {
            mesh.check(i)?;
        }
        let mut pairs: Vec<_> = intervals.into_iter().zip(certificates).collect();
        pairs.sort_by_key(|(i, _)| i.heap());
        let (intervals, certificates) = pairs.into_iter().unzip();
        Ok(SparseFamily { mesh, intervals, certificates: Some(certificates), eta })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn intervals(&self) -> &[MeshInterval] {
        &self.intervals
    }

    pub fn certificates(&self) -> Option<&[Vec<usize>]> {
        self.certificates.as_deref()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Heap-indexed membership flags, length `2N`.
    pub fn membership(&self) -> Vec<bool> {
        let mut m = vec![false; 2 * self.mesh.cells()];
        for i in &self.intervals {
            m[i.heap()] = true;
        }
        m
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let entries: Vec<FamilyEntry> = self
            .intervals
            .iter()
            .enumerate()
            .map(|(n, i)| FamilyEntry {
                generation: i.level,
                index: i.index,
                certificate_cells: self.certificates.as_ref().map(|c| run_length(&c[n])).unwrap_or_default(),
            })
            .collect();
        serde_json::to_writer_pretty(w, &entries)?;
        Ok(())
    }

    /// Reads the JSON list; certificates are attached when any entry carries cells.
    pub fn read_json<R: Read>(mesh: Mesh, r: R) -> Result<Self> {
        let entries: Vec<FamilyEntry> = serde_json::from_reader(r)?;
        let intervals: Vec<MeshInterval> = entries.iter().map(|e| MeshInterval::new(e.generation, e.index)).collect();
        if entries.iter().all(|e| e.certificate_cells.is_empty()) {
            return Self::new(mesh, intervals);
        }
        let certs: Vec<Vec<usize>> =
            entries.iter().map(|e| e.certificate_cells.iter().flat_map(|&[a, b]| a..b).collect()).collect();
        let eta = intervals
            .iter()
            .zip(&certs)
            .map(|(i, c)| c.len() as f64 / mesh.cell_range(*i).len() as f64)
            .fold(1.0, f64::min);
        Self::with_certificates(mesh, intervals, certs, eta)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FamilyEntry {
    generation: u32,
    index: usize,
    /// half-open cell ranges `[start, end)`
    certificate_cells: Vec<[usize; 2]>,
}

fn run_length(cells: &[usize]) -> Vec<[usize; 2]> {
    let mut out: Vec<[usize; 2]> = Vec::new();
    for &c in cells {
        match out.last_mut() {
            Some(r) if r[1] == c => r[1] += 1,
            _ => out.push([c, c + 1]),
        }
    }
    out
}

/// `max_Q Σ_{P∈S, P⊆Q} |P| / |Q|` over every mesh interval `Q`.
pub fn carleson_constant(s: &SparseFamily) -> f64 {
    let n = s.mesh.cells();
    // masses in units of one cell
    let mut sums = vec![0.0f64; 2 * n];
    for i in &s.intervals {
        sums[i.heap()] += s.mesh.cell_range(*i).len() as f64;
    }
    for h in (1..n).rev() {
        sums[h] += sums[2 * h] + sums[2 * h + 1];
    }
    (1..2 * n).map(|h| sums[h] / (n >> (usize::BITS - 1 - h.leading_zeros())) as f64).fold(0.0, f64::max)
}

/// Certificates `E_Q` built from the finest intervals up, each taking the leftmost
/// `⌊|Q| / (Λ·cell)⌋` cells of `Q` not claimed by a descendant.
pub fn construct_certificates(s: &SparseFamily, lambda: f64) -> Result<SparseFamily> {
    let mesh = s.mesh;
    let mut taken = vec![false; mesh.cells()];
    let mut order: Vec<usize> = (0..s.intervals.len()).collect();
    order.sort_by_key(|&n| std::cmp::Reverse(s.intervals[n].level));
    let mut certs = vec![Vec::new(); s.intervals.len()];
    let mut eta = 1.0f64;
    for n in order {
        let q = s.intervals[n];
        let range = mesh.cell_range(q);
        let want = (range.len() as f64 / lambda + 1e-9).floor() as usize;
        if want == 0 {
            return Err(Error::Resolution { level: q.level, depth: mesh.depth() });
        }
        let cells: Vec<usize> = range.clone().filter(|&k| !taken[k]).take(want).collect();
        if cells.len() < want {
            return Err(Error::Infeasible(format!(
                "interval ({}, {}) has {} free cells, needs {want} at Λ = {lambda}",
                q.level,
                q.index,
                cells.len()
            )));
        }
        for &k in &cells {
            taken[k] = true;
        }
        eta = eta.min(cells.len() as f64 / range.len() as f64);
        certs[n] = cells;
    }
    SparseFamily::with_certificates(mesh, s.intervals.clone(), certs, eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVerification {
    pub ok: bool,
    /// `min_Q |E_Q| / |Q|`
    pub measured_eta: f64,
    pub violations: Vec<String>,
}

/// Checks `E_Q ⊆ Q`, pairwise disjointness and `|E_Q| ≥ η|Q|` on the cell lattice.
pub fn verify_sparse(s: &SparseFamily) -> SparseVerification {
    let Some(certs) = s.certificates() else {
        return SparseVerification { ok: false, measured_eta: 0.0, violations: vec!["no certificates".into()] };
    };
    let mut violations = Vec::new();
    let mut owner: Vec<Option<usize>> = vec![None; s.mesh.cells()];
    let mut measured = 1.0f64;
    for (n, (q, cells)) in s.intervals.iter().zip(certs).enumerate() {
        let range = s.mesh.cell_range(*q);
        for &k in cells {
            if !range.contains(&k) {
                violations.push(format!("cell {k} of E({},{}) lies outside the interval", q.level, q.index));
                continue;
            }
            match owner[k] {
                Some(m) => {
                    let p = s.intervals[m];
                    violations
                        .push(format!("cell {k} shared by E({},{}) and E({},{})", p.level, p.index, q.level, q.index));
                }
                None => owner[k] = Some(n),
            }
        }
        let mut uniq = cells.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let ratio = uniq.len() as f64 / range.len() as f64;
        measured = measured.min(ratio);
        if ratio < s.eta * (1.0 - 1e-12) {
            violations.push(format!("|E({},{})| / |Q| = {ratio} below η = {}", q.level, q.index, s.eta));
        }
    }
    SparseVerification { ok: violations.is_empty(), measured_eta: measured, violations }
}

/// `A_S f = Σ_{Q∈S} ⟨f⟩_Q 1_Q`.
pub fn sparse_operator<T: Scalar>(s: &SparseFamily, f: &StepFunction<T>) -> Result<StepFunction<T>> {
    s.mesh.same_as(f.mesh())?;
    StepFunction::new(s.mesh, AveragingOperator::sparse(s).apply(f.values()))
}

#[derive(Debug, Clone)]
pub struct LaceyOutcome<T: Scalar> {
    pub family: SparseFamily,
    pub c0_used: f64,
    /// constants tried before `c0_used`, in order
    pub rejected: Vec<f64>,
    /// `|F_I| / |I|` for every stopping interval, in family order
    pub stopping_masses: Vec<(MeshInterval, f64)>,
    /// `|1_{I₀} T_σ(f 1_{I₀})|` per cell of the mesh
    pub target: StepFunction<T>,
    /// `C₀ A_S|f|` per cell
    pub bound: StepFunction<T>,
}

/// One pass of the stopping-time recursion at a fixed `C₀`.
fn lacey_pass<T: Scalar>(
    mesh: &Mesh,
    f: &[T],
    coeffs: &[T],
    sigma: &[T],
    top: MeshInterval,
    a_top: T,
    c0: f64,
) -> Result<(Vec<MeshInterval>, Vec<Vec<usize>>, Vec<(MeshInterval, f64)>)> {
    let absf: Vec<T> = f.iter().map(|v| v.abs()).collect();
    let avg_abs = averages_of(&absf);
    let avg = averages_of(f);
    let mut family = Vec::new();
    let mut certs = Vec::new();
    let mut masses = Vec::new();
    let mut queue = vec![(top, a_top)];
    while let Some((i, a)) = queue.pop() {
        let range = mesh.cell_range(i);
        let threshold = T::lit(0.5 * c0) * avg_abs[i.heap()];
        let local_max = maximal_values(&absf[range.clone()], None);
        let sharp = sharp_on_subtree(mesh, coeffs, sigma, i, a, true);
        let stop: Vec<bool> = local_max.iter().zip(&sharp).map(|(&m, &s)| m.max(s) > threshold).collect();
        let count = stop.iter().filter(|&&b| b).count();
        let mass = count as f64 / range.len() as f64;
        if mass > 0.5 {
            return Err(Error::Calibration {
                level: i.level,
                index: i.index,
                mass: mass * mesh.interval_len(i.level),
                length: mesh.interval_len(i.level),
            });
        }
        masses.push((i, mass));
        family.push(i);
        certs.push(range.clone().zip(&stop).filter(|(_, &s)| !s).map(|(k, _)| k).collect());
        // maximal dyadic intervals inside the stopping set
        let width = range.len();
        let mut k = 0;
        while k < width {
            if !stop[k] {
                k += 1;
                continue;
            }
            // largest aligned block starting at k that is entirely stopped
            let mut size = 1usize;
            while k % (2 * size) == 0 && 2 * size <= width && stop[k..k + 2 * size].iter().all(|&b| b) {
                size *= 2;
            }
            let level = i.level + (width / size).trailing_zeros();
            let child = MeshInterval::new(level, (i.index << (level - i.level)) + k / size);
            let parent = child.parent().expect("strictly inside the top interval");
            let ac = sigma[parent.heap()] * avg[child.heap()];
            queue.push((child, ac));
            k += size;
        }
    }
    Ok((family, certs, masses))
}

/// Sparse domination of `1_{I₀} T_σ(f 1_{I₀})` by `C₀ A_S|f|` through the stopping-time
/// recursion on `I₀`. With `c0 = None` the constant doubles from 4 up to `2¹⁶`.
pub fn lacey_dominate<T: Scalar>(
    f: &StepFunction<T>,
    sigma: &SignSymbol,
    top: MeshInterval,
    c0: Option<f64>,
) -> Result<LaceyOutcome<T>> {
    let mesh = *f.mesh();
    mesh.same_as(sigma.mesh())?;
    mesh.check(top)?;
    let range = mesh.cell_range(top);
    if f.values().iter().enumerate().any(|(k, v)| !range.contains(&k) && *v != T::zero()) {
        return Err(Error::InvalidParameter("f must be supported in I₀".into()));
    }
    if f.values()[range.clone()].iter().all(|v| *v == T::zero()) {
        return Err(Error::InvalidParameter("f vanishes on I₀".into()));
    }
    let m = sigma.as_multiplier::<T>();
    let (_, coeffs) = crate::operators::coeffs_of(&mesh, f.values());
    // constant contributed on I₀ by the Haar terms of its ancestors
    let mut a_top = T::zero();
    let mut child = top;
    while let Some(p) = child.parent() {
        let amp = T::lit(mesh.interval_len(p.level)).sqrt().recip();
        let s = if child.is_right_child() { amp } else { -amp };
        a_top += m.symbol[p.heap()] * coeffs[p.heap()] * s;
        child = p;
    }
    let tf = m.apply(f.values());
    let target: Vec<T> =
        tf.iter().enumerate().map(|(k, v)| if range.contains(&k) { v.abs() } else { T::zero() }).collect();
    let absf = f.abs();

    let candidates: Vec<f64> = match c0 {
        Some(c) => vec![c],
        None => (2..=16).map(|e| (1u64 << e) as f64).collect(),
    };
    let mut rejected = Vec::new();
    let mut last_err = None;
    for c in candidates {
        match lacey_pass(&mesh, f.values(), &coeffs, &m.symbol, top, a_top, c) {
            Ok((intervals, certs, masses)) => {
                let family = SparseFamily::with_certificates(mesh, intervals, certs, 0.5)?;
                let a_s = sparse_operator(&family, &absf)?;
                let bound: Vec<T> = a_s.values().iter().map(|&v| v * T::lit(c)).collect();
                let slack = T::lit(1e-12) * absf.sup_norm();
                if let Some(k) = (0..mesh.cells()).find(|&k| target[k] > bound[k] + slack) {
                    let err =
                        Error::Domination { cell: k, lhs: target[k].to_f64_lossy(), rhs: bound[k].to_f64_lossy() };
                    if c0.is_some() {
                        return Err(err);
                    }
                    rejected.push(c);
                    last_err = Some(err);
                    continue;
                }
                let mut order: Vec<usize> = (0..masses.len()).collect();
                order.sort_by_key(|&n| masses[n].0.heap());
                let stopping_masses = order.into_iter().map(|n| masses[n]).collect();
                return Ok(LaceyOutcome {
                    family,
                    c0_used: c,
                    rejected,
                    stopping_masses,
                    target: StepFunction::new(mesh, target)?,
                    bound: StepFunction::new(mesh, bound)?,
                });
            }
            Err(e @ Error::Calibration { .. }) => {
                rejected.push(c);
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one candidate"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationEntry {
    pub generation: u32,
    pub index: usize,
    /// `max_{x∈Q} |b − ⟨b⟩_Q| / Σ_{R∈S, R⊆Q} Ω(b;R) 1_R` before augmentation
    pub base_ratio: f64,
    pub augmented_ratio: f64,
    pub added: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub entries: Vec<OscillationEntry>,
    /// `2^{d+2}` with `d = 1`
    pub target: f64,
    pub all_within_target: bool,
    pub augmented_family_size: usize,
    pub augmented_carleson_constant: f64,
}

/// Greedy probe of the oscillation bound: for each `Q ∈ S` (coarse to fine) intervals
/// `R ⊆ Q` of largest oscillation containing the worst cell are added until the ratio
/// is at most 8. The full chain from `Q` to a cell already gives ratio ≤ 1 there, so the
/// loop always ends.
pub fn lor_oscillation_check<T: Scalar>(s: &SparseFamily, b: &StepFunction<T>) -> Result<OscillationReport> {
    let mesh = s.mesh;
    mesh.same_as(b.mesh())?;
    let target = 8.0;
    let n = mesh.cells();
    let mut member = s.membership();
    let mut omega = vec![0.0f64; 2 * n];
    for (h, o) in omega.iter_mut().enumerate().skip(1) {
        *o = mean_oscillation(b, MeshInterval::from_heap(h))?.to_f64_lossy();
    }
    let bv: Vec<f64> = b.values().iter().map(|v| v.to_f64_lossy()).collect();
    let bavg = averages_of(&bv);
    let ratio_at = |member: &[bool], q: MeshInterval, k: usize| -> f64 {
        let lhs = (bv[k] - bavg[q.heap()]).abs();
        let mut rhs = 0.0;
        let mut h = n + k;
        while h >= q.heap() {
            if member[h] && q.contains(MeshInterval::from_heap(h)) {
                rhs += omega[h];
            }
            h /= 2;
        }
        if lhs <= 1e-14 * (1.0 + bv[k].abs()) {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        }
    };
    let worst = |member: &[bool], q: MeshInterval| -> (f64, usize) {
        mesh.cell_range(q).map(|k| (ratio_at(member, q, k), k)).fold((0.0, 0), |a, c| if c.0 > a.0 { c } else { a })
    };
    let mut entries = Vec::new();
    for &q in s.intervals() {
        let (base, _) = worst(&member, q);
        let mut added = 0;
        let mut r = base;
        if r > target {
            loop {
                let (worst_ratio, k) = worst(&member, q);
                r = worst_ratio;
                if r <= target {
                    break;
                }
                // chain of intervals between Q and the cell k not yet in the family
                let mut best: Option<usize> = None;
                let mut h = n + k;
                while h >= q.heap() {
                    if !member[h]
                        && q.contains(MeshInterval::from_heap(h))
                        && best.map_or(true, |b| omega[h] > omega[b])
                    {
                        best = Some(h);
                    }
                    h /= 2;
                }
                match best {
                    Some(h) => {
                        member[h] = true;
                        added += 1;
                    }
                    None => break,
                }
            }
        }
        entries.push(OscillationEntry {
            generation: q.level,
            index: q.index,
            base_ratio: base,
            augmented_ratio: r,
            added,
        });
    }
    let augmented: Vec<MeshInterval> = (1..2 * n).filter(|&h| member[h]).map(MeshInterval::from_heap).collect();
    let fam = SparseFamily::new(mesh, augmented)?;
    Ok(OscillationReport {
        all_within_target: entries.iter().all(|e| e.augmented_ratio <= target),
        entries,
        target,
        augmented_family_size: fam.len(),
        augmented_carleson_constant: carleson_constant(&fam),
    })
}
