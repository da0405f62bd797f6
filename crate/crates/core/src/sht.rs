//! Dyadic cubes and Haar functions on finite quasi-metric point clouds.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Points with a full distance matrix, a quasi-triangle constant and a mass per point.
#[derive(Debug, Clone)]
pub struct QuasiMetricCloud<T: Scalar> {
    ids: Vec<String>,
    dist: Vec<T>,
    mass: Vec<T>,
    a0: T,
}

impl<T: Scalar> QuasiMetricCloud<T> {
    /// Validates symmetry, `ρ(x,y) = 0 ⇔ x = y`, and positive masses. `a0 = None` estimates
    /// the quasi-triangle constant (exhaustively up to 512 points).
    pub fn from_matrix(ids: Vec<String>, dist: Vec<T>, mass: Vec<T>, a0: Option<T>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::EmptyCloud);
        }
        if dist.len() != n * n || mass.len() != n {
            return Err(Error::InvalidParameter(format!("{n} points need {} distances and {n} masses", n * n)));
        }
        for i in 0..n {
            if mass[i] <= T::zero() || !mass[i].is_finite() {
                return Err(Error::DegenerateMeasure(format!("mass {} at point {}", mass[i], ids[i])));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !d.is_finite() || d < T::zero() || d != dist[j * n + i] || ((d == T::zero()) != (i == j)) {
                    return Err(Error::InvalidParameter(format!(
                        "invalid distance {d} between {} and {}",
                        ids[i], ids[j]
                    )));
                }
            }
        }
        let mut cloud = QuasiMetricCloud { ids, dist, mass, a0: T::one() };
        cloud.a0 = match a0 {
            Some(a) => a,
            None => cloud.estimate_a0(),
        };
        Ok(cloud)
    }

    /// Euclidean distances between planar points; a metric, so `A₀ = 1`.
    pub fn from_points(ids: Vec<String>, coords: &[[f64; 2]], mass: Vec<T>) -> Result<Self> {
        let n = coords.len();
        let mut dist = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (coords[i][0] - coords[j][0], coords[i][1] - coords[j][1]);
                dist[i * n + j] = T::lit(dx.hypot(dy));
            }
        }
        Self::from_matrix(ids, dist, mass, Some(T::one()))
    }

    /// CSV with header `id,x,y[,mass]` (Euclidean) or `id_i,id_j,distance` (every pair listed).
    pub fn read_csv<R: Read>(r: R, a0: Option<T>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("not a number: {s:?}")));
        match header.iter().map(|s| s.as_str()).collect::<Vec<_>>().as_slice() {
            ["id", "x", "y"] | ["id", "x", "y", "mass"] => {
                let mut ids = Vec::new();
                let mut coords = Vec::new();
                let mut mass = Vec::new();
                for row in &rows {
                    ids.push(row.get(0).unwrap_or_default().to_string());
                    coords.push([num(row.get(1).unwrap_or_default())?, num(row.get(2).unwrap_or_default())?]);
                    mass.push(T::lit(match row.get(3) {
                        Some(m) if header.len() == 4 => num(m)?,
                        _ => 1.0,
                    }));
                }
                let mut cloud = Self::from_points(ids, &coords, mass)?;
                if let Some(a) = a0 {
                    cloud.a0 = a;
                }
                Ok(cloud)
            }
            ["id_i", "id_j", "distance"] => {
                let mut index: HashMap<String, usize> = HashMap::new();
                let mut ids = Vec::new();
                let mut edges = Vec::new();
                for row in &rows {
                    let mut slot = |s: &str| {
                        *index.entry(s.to_string()).or_insert_with(|| {
                            ids.push(s.to_string());
                            ids.len() - 1
                        })
                    };
                    let (i, j) = (slot(row.get(0).unwrap_or_default()), slot(row.get(1).unwrap_or_default()));
                    edges.push((i, j, num(row.get(2).unwrap_or_default())?));
                }
                let n = ids.len();
                let mut dist = vec![T::nan(); n * n];
                for i in 0..n {
                    dist[i * n + i] = T::zero();
                }
                for (i, j, d) in edges {
                    dist[i * n + j] = T::lit(d);
                    dist[j * n + i] = T::lit(d);
                }
                if let Some(k) = dist.iter().position(|d| d.is_nan()) {
                    return Err(Error::Format(format!("no distance between {} and {}", ids[k / n], ids[k % n])));
                }
                Self::from_matrix(ids, dist, vec![T::one(); n], a0)
            }
            other => Err(Error::Format(format!("unrecognised cloud header {other:?}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn d(&self, i: usize, j: usize) -> T {
        self.dist[i * self.ids.len() + j]
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn a0(&self) -> T {
        self.a0
    }

    /// `max ρ(x,y) / (ρ(x,z) + ρ(z,y))` over all triples with distinct `x, y`; every third
    /// point is sampled beyond 512 points.
    pub fn estimate_a0(&self) -> T {
        let n = self.len();
        let step = if n <= 512 { 1 } else { n / 512 };
        let mut best = T::one();
        for x in 0..n {
            for y in x + 1..n {
                let dxy = self.d(x, y);
                for z in (0..n).step_by(step) {
                    let r = dxy / (self.d(x, z) + self.d(z, y));
                    if r > best {
                        best = r;
                    }
                }
            }
        }
        best
    }

    fn extremes(&self) -> (T, T) {
        let n = self.len();
        let mut lo = T::infinity();
        let mut hi = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                let d = self.d(i, j);
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        (lo, hi)
    }
}

/// Nested center sets; `levels[k − k_min]` lists point indices, coarse to fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nets {
    pub delta: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub levels: Vec<Vec<usize>>,
}

impl Nets {
    pub fn radius(&self, k: i32) -> f64 {
        self.delta.powi(k)
    }
}

/// Greedy maximal `δ^k`-separated sets in id order, each level seeded with the previous one.
/// Without `k_range` the levels run from a single center to every point being a center.
pub fn build_nets<T: Scalar>(cloud: &QuasiMetricCloud<T>, delta: f64, k_range: Option<(i32, i32)>) -> Result<Nets> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("δ = {delta} must lie in (0, 1)")));
    }
    let n = cloud.len();
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let (k_min, k_max) = match k_range {
        Some((a, b)) if a <= b => (a, b),
        Some((a, b)) => return Err(Error::InvalidParameter(format!("empty level range {a}..={b}"))),
        None if n == 1 => (0, 0),
        None => {
            let (lo, hi) = cloud.extremes();
            let (lo, hi) = (lo.to_f64_lossy(), hi.to_f64_lossy());
            let mut k0 = (hi.ln() / delta.ln()).floor() as i32;
            while delta.powi(k0) <= hi {
                k0 -= 1;
            }
            let mut k1 = (lo.ln() / delta.ln()).floor() as i32;
            while delta.powi(k1) > lo {
                k1 += 1;
            }
            (k0, k1.max(k0))
        }
    };
    let mut levels: Vec<Vec<usize>> = Vec::new();
    for k in k_min..=k_max {
        let r = T::lit(delta.powi(k));
        let mut centers = levels.last().cloned().unwrap_or_default();
        let mut is_center = vec![false; n];
        for &c in &centers {
            is_center[c] = true;
        }
        for x in 0..n {
            if !is_center[x] && centers.iter().all(|&c| cloud.d(x, c) >= r) {
                centers.push(x);
                is_center[x] = true;
            }
        }
        levels.push(centers);
    }
    Ok(Nets { delta, k_min, k_max, levels })
}

/// Separation `ρ(z, z') ≥ δ^k` and covering `min_z ρ(x, z) < δ^k`, exhaustively.
pub fn verify_nets<T: Scalar>(nets: &Nets, cloud: &QuasiMetricCloud<T>) -> (bool, bool) {
    let mut separated = true;
    let mut covering = true;
    for (l, centers) in nets.levels.iter().enumerate() {
        let r = T::lit(nets.radius(nets.k_min + l as i32));
        for (a, &z) in centers.iter().enumerate() {
            for &w in &centers[a + 1..] {
                separated &= cloud.d(z, w) >= r;
            }
        }
        for x in 0..cloud.len() {
            covering &= centers.iter().any(|&z| cloud.d(x, z) < r);
        }
        if l > 0 {
            covering &= nets.levels[l - 1].iter().all(|c| centers.contains(c));
        }
    }
    (separated, covering)
}

/// One level of cubes: cube `c` has center point `centers[c]`, `membership[x]` is the cube of
/// point `x`, and `parent[c]` the cube one level up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeLevel {
    pub k: i32,
    pub centers: Vec<usize>,
    pub membership: Vec<usize>,
    pub parent: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeSystem {
    pub delta: f64,
    pub levels: Vec<CubeLevel>,
}

fn nearest<T: Scalar>(cloud: &QuasiMetricCloud<T>, x: usize, centers: &[usize]) -> usize {
    let mut best = 0;
    for (c, &z) in centers.iter().enumerate().skip(1) {
        let (d, bd) = (cloud.d(x, z), cloud.d(x, centers[best]));
        if d < bd || (d == bd && z < centers[best]) {
            best = c;
        }
    }
    best
}

/// Points join the nearest finest-level center (ties to the smallest id); each center joins
/// the nearest center one level up, and coarser cubes are the induced unions.
pub fn assign_cubes<T: Scalar>(nets: &Nets, cloud: &QuasiMetricCloud<T>) -> CubeSystem {
    let n = cloud.len();
    let depth = nets.levels.len();
    let mut levels: Vec<CubeLevel> = Vec::with_capacity(depth);
    let finest = &nets.levels[depth - 1];
    let membership = (0..n).map(|x| nearest(cloud, x, finest)).collect();
    levels.push(CubeLevel { k: nets.k_max, centers: finest.clone(), membership, parent: vec![] });
    for l in (0..depth - 1).rev() {
        let coarse = &nets.levels[l];
        let below = levels.last_mut().expect("finest level");
        below.parent = below.centers.iter().map(|&z| nearest(cloud, z, coarse)).collect();
        let membership = below.membership.iter().map(|&c| below.parent[c]).collect();
        levels.push(CubeLevel { k: nets.k_min + l as i32, centers: coarse.clone(), membership, parent: vec![] });
    }
    levels.reverse();
    CubeSystem { delta: nets.delta, levels }
}

impl CubeSystem {
    /// Cubes from explicit nested partitions, coarse to fine; centers are the smallest point
    /// of each cube.
    pub fn from_partitions(delta: f64, k_min: i32, partitions: Vec<Vec<usize>>) -> Result<Self> {
        let mut levels: Vec<CubeLevel> = Vec::new();
        for (l, part) in partitions.into_iter().enumerate() {
            // relabel cubes in order of their smallest point
            let mut label: HashMap<usize, usize> = HashMap::new();
            let mut centers = Vec::new();
            let membership: Vec<usize> = part
                .iter()
                .enumerate()
                .map(|(x, &c)| {
                    *label.entry(c).or_insert_with(|| {
                        centers.push(x);
                        centers.len() - 1
                    })
                })
                .collect();
            if let Some(prev) = levels.last_mut() {
                if prev.membership.len() != membership.len() {
                    return Err(Error::InvalidParameter("partitions cover different point sets".into()));
                }
                let mut parent = vec![usize::MAX; centers.len()];
                for (x, &c) in membership.iter().enumerate() {
                    let p = prev.membership[x];
                    if parent[c] == usize::MAX {
                        parent[c] = p;
                    } else if parent[c] != p {
                        return Err(Error::InvalidParameter(format!("level {l} is not nested in level {}", l - 1)));
                    }
                }
                levels.push(CubeLevel { k: k_min + l as i32, centers, membership, parent });
            } else {
                levels.push(CubeLevel { k: k_min, centers, membership, parent: vec![] });
            }
        }
        Ok(CubeSystem { delta, levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Points of cube `c` at level index `l`.
    pub fn cube_points(&self, l: usize, c: usize) -> Vec<usize> {
        self.levels[l].membership.iter().enumerate().filter(|(_, &m)| m == c).map(|(x, _)| x).collect()
    }

    /// Children of each cube at level index `l`, in cube order of level `l + 1`.
    pub fn children(&self, l: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.levels[l].centers.len()];
        let fine = &self.levels[l + 1];
        let mut seen = vec![false; fine.centers.len()];
        for (x, &c) in fine.membership.iter().enumerate() {
            if !seen[c] {
                seen[c] = true;
                out[self.levels[l].membership[x]].push(c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeVerification {
    pub partition: bool,
    pub nested: bool,
    pub centers_inside: bool,
    /// `max ρ(z, x) / δ^k` over cubes and their points
    pub outer_constant: f64,
    /// `C₁ = 2 A₀ C₀` with `C₀ = 1`
    pub outer_target: f64,
    /// `min ρ(z, x) / δ^k` over cubes and points outside them
    pub inner_constant: f64,
    /// `c₁ = c₀ / (3 A₀²)` with `c₀ = 1`
    pub inner_target: f64,
}

impl CubeVerification {
    pub fn outer_ok(&self) -> bool {
        self.outer_constant <= self.outer_target
    }

    pub fn inner_positive(&self) -> bool {
        self.inner_constant > 0.0
    }

    pub fn inner_meets_target(&self) -> bool {
        self.inner_constant >= self.inner_target
    }

    pub fn structural_ok(&self) -> bool {
        self.partition && self.nested && self.centers_inside
    }
}

pub fn verify_cubes<T: Scalar>(system: &CubeSystem, cloud: &QuasiMetricCloud<T>) -> CubeVerification {
    let n = cloud.len();
    let mut partition = true;
    let mut nested = true;
    let mut centers_inside = true;
    let mut outer: f64 = 0.0;
    let mut inner = f64::INFINITY;
    for (l, level) in system.levels.iter().enumerate() {
        partition &= level.membership.len() == n && level.membership.iter().all(|&c| c < level.centers.len());
        let mut nonempty = vec![false; level.centers.len()];
        for &c in &level.membership {
            nonempty[c] = true;
        }
        partition &= nonempty.iter().all(|&b| b);
        let r = system.delta.powi(level.k);
        for (c, &z) in level.centers.iter().enumerate() {
            centers_inside &= level.membership[z] == c;
            for x in 0..n {
                let d = cloud.d(z, x).to_f64_lossy() / r;
                if level.membership[x] == c {
                    outer = outer.max(d);
                } else {
                    inner = inner.min(d);
                }
            }
        }
        // every finer cube inside one cube of this level
        for fine in &system.levels[l + 1..] {
            let mut owner = vec![usize::MAX; fine.centers.len()];
            for x in 0..n {
                let f = fine.membership[x];
                if owner[f] == usize::MAX {
                    owner[f] = level.membership[x];
                } else {
                    nested &= owner[f] == level.membership[x];
                }
            }
        }
    }
    let a0 = cloud.a0().to_f64_lossy();
    CubeVerification {
        partition,
        nested,
        centers_inside,
        outer_constant: outer,
        outer_target: 2.0 * a0,
        inner_constant: inner,
        inner_target: 1.0 / (3.0 * a0 * a0),
    }
}

/// `h^i_Q = a 1_{E^{i,+}} − b 1_{E^{i,−}}` with `E^{i,+}` the `i`-th child removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShtHaarFunction<T> {
    pub level: usize,
    pub cube: usize,
    pub i: usize,
    pub a: T,
    pub b: T,
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
}

impl<T: Scalar> ShtHaarFunction<T> {
    pub fn values(&self, n: usize) -> Vec<T> {
        let mut v = vec![T::zero(); n];
        for &x in &self.plus {
            v[x] = self.a;
        }
        for &x in &self.minus {
            v[x] = -self.b;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShtHaarSystem<T: Scalar> {
    pub functions: Vec<ShtHaarFunction<T>>,
    /// point sets of the coarsest cubes
    pub top_cubes: Vec<Vec<usize>>,
    pub mass: Vec<T>,
}

/// Haar functions of every cube with at least two children, children enumerated by
/// decreasing mass (ties by the smaller center id).
pub fn build_sht_haar<T: Scalar>(system: &CubeSystem, mass: &[T]) -> Result<ShtHaarSystem<T>> {
    if let Some(x) = mass.iter().position(|m| !(*m > T::zero())) {
        return Err(Error::DegenerateMeasure(format!("point {x} has mass {}", mass[x])));
    }
    let mut functions = Vec::new();
    for l in 0..system.len().saturating_sub(1) {
        let fine = &system.levels[l + 1];
        let mut points: Vec<Vec<usize>> = vec![Vec::new(); fine.centers.len()];
        for (x, &c) in fine.membership.iter().enumerate() {
            points[c].push(x);
        }
        let cmass: Vec<T> = points.iter().map(|p| p.iter().map(|&x| mass[x]).sum()).collect();
        for (q, mut ch) in system.children(l).into_iter().enumerate() {
            if ch.len() < 2 {
                continue;
            }
            if let Some(&c) = ch.iter().find(|&&c| !(cmass[c] > T::zero())) {
                return Err(Error::DegenerateMeasure(format!("child cube {c} at level {} has no mass", l + 1)));
            }
            ch.sort_by(|&x, &y| {
                cmass[y].partial_cmp(&cmass[x]).expect("finite").then(fine.centers[x].cmp(&fine.centers[y]))
            });
            let mut rest: T = ch.iter().map(|&c| cmass[c]).sum();
            for i in 0..ch.len() - 1 {
                let plus_mass = cmass[ch[i]];
                let total = rest;
                let minus_mass = total - plus_mass;
                let a = (minus_mass / (total * plus_mass)).sqrt();
                let b = (plus_mass / (total * minus_mass)).sqrt();
                let minus = ch[i + 1..].iter().flat_map(|&c| points[c].iter().copied()).collect();
                functions.push(ShtHaarFunction {
                    level: l,
                    cube: q,
                    i: i + 1,
                    a,
                    b,
                    plus: points[ch[i]].clone(),
                    minus,
                });
                rest = minus_mass;
            }
        }
    }
    let top = &system.levels[0];
    let top_cubes = (0..top.centers.len()).map(|c| system.cube_points(0, c)).collect();
    Ok(ShtHaarSystem { functions, top_cubes, mass: mass.to_vec() })
}

impl<T: Scalar> ShtHaarSystem<T> {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn inner(&self, f: &[T], g: &[T]) -> T {
        f.iter().zip(g).zip(&self.mass).map(|((&a, &b), &m)| a * b * m).sum()
    }

    fn pair(&self, i: usize, j: usize) -> T {
        let (hi, hj) = (&self.functions[i], &self.functions[j]);
        let vj = hj.values(self.n());
        let side = |pts: &[usize], c: T| pts.iter().map(|&x| c * vj[x] * self.mass[x]).sum::<T>();
        side(&hi.plus, hi.a) + side(&hi.minus, -hi.b)
    }

    /// `max |⟨h_i, h_j⟩_μ − δ_ij|`.
    pub fn gram_deviation(&self) -> T {
        let m = self.functions.len();
        let mut worst = T::zero();
        for i in 0..m {
            for j in i..m {
                let g = self.pair(i, j);
                let e = if i == j { (g - T::one()).abs() } else { g.abs() };
                if e > worst {
                    worst = e;
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShtExpansion<T> {
    pub coefficients: Vec<T>,
    /// `⟨f⟩^μ` of each coarsest cube
    pub top_means: Vec<T>,
}

pub fn sht_expand<T: Scalar>(f: &[T], basis: &ShtHaarSystem<T>) -> Result<ShtExpansion<T>> {
    if f.len() != basis.n() {
        return Err(Error::InvalidParameter(format!("{} values for {} points", f.len(), basis.n())));
    }
    let coefficients = basis
        .functions
        .iter()
        .map(|h| {
            let p: T = h.plus.iter().map(|&x| f[x] * basis.mass[x]).sum();
            let m: T = h.minus.iter().map(|&x| f[x] * basis.mass[x]).sum();
            h.a * p - h.b * m
        })
        .collect();
    let top_means = basis
        .top_cubes
        .iter()
        .map(|pts| {
            let num: T = pts.iter().map(|&x| f[x] * basis.mass[x]).sum();
            let den: T = pts.iter().map(|&x| basis.mass[x]).sum();
            num / den
        })
        .collect();
    Ok(ShtExpansion { coefficients, top_means })
}

pub fn sht_reconstruct<T: Scalar>(e: &ShtExpansion<T>, basis: &ShtHaarSystem<T>) -> Vec<T> {
    let mut out = vec![T::zero(); basis.n()];
    for (pts, &m) in basis.top_cubes.iter().zip(&e.top_means) {
        for &x in pts {
            out[x] = m;
        }
    }
    for (h, &c) in basis.functions.iter().zip(&e.coefficients) {
        for &x in &h.plus {
            out[x] += c * h.a;
        }
        for &x in &h.minus {
            out[x] -= c * h.b;
        }
    }
    out
}
