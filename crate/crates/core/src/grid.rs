//! Truncated dyadic grids `D^{r,β}` on the real line.
//!
//! A grid keeps the generations `j_min..=j_max`. Interval `(j, k)` is
//! `r·[k 2^-j + x_j, (k+1) 2^-j + x_j)` with `x_j = Σ_{j<i≤j_max} β_i 2^-i`.
//! Endpoints are held as integers over the common denominator `2^max(j_max,0)`
//! so that containment and nesting tests are exact; `r` is applied last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub generation: i32,
    pub index: i64,
}

impl DyadicInterval {
    pub const fn new(generation: i32, index: i64) -> Self {
        DyadicInterval { generation, index }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridJson", into = "GridJson")]
pub struct GridParameters {
    r: f64,
    j_min: i32,
    j_max: i32,
    /// `beta[j - j_min]`
    beta: Vec<bool>,
    /// `shift_num[j - j_min] = x_j · 2^denom_exp`
    shift_num: Vec<i128>,
}

#[derive(Serialize, Deserialize)]
struct GridJson {
    r: f64,
    j_min: i32,
    j_max: i32,
    beta: String,
}

impl TryFrom<GridJson> for GridParameters {
    type Error = Error;

    fn try_from(g: GridJson) -> Result<Self> {
        let bits = g
            .beta
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!("beta bit '{other}' is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        GridParameters::new(g.r, g.j_min, g.j_max, bits)
    }
}

impl From<GridParameters> for GridJson {
    fn from(g: GridParameters) -> Self {
        GridJson {
            r: g.r,
            j_min: g.j_min,
            j_max: g.j_max,
            beta: g.beta.iter().map(|&b| if b { '1' } else { '0' }).collect(),
        }
    }
}

/// Generations beyond this would overflow the i128 endpoint numerators.
const MAX_SPAN: i32 = 100;

impl GridParameters {
    /// `beta` lists `β_j` for `j = j_min..=j_max`.
    pub fn new(r: f64, j_min: i32, j_max: i32, beta: Vec<bool>) -> Result<Self> {
        if !(1.0..2.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("scale r = {r} not in [1, 2)")));
        }
        if j_min >= j_max {
            return Err(Error::InvalidParameter(format!("j_min = {j_min} must be < j_max = {j_max}")));
        }
        if j_max - j_min > MAX_SPAN || j_max > MAX_SPAN / 2 || j_min < -MAX_SPAN / 2 {
            return Err(Error::InvalidParameter(format!("window [{j_min}, {j_max}] too wide")));
        }
        let len = (j_max - j_min + 1) as usize;
        if beta.len() != len {
            return Err(Error::InvalidParameter(format!(
                "expected {len} shift bits for window [{j_min}, {j_max}], got {}",
                beta.len()
            )));
        }
        let denom = j_max.max(0);
        let mut shift_num = vec![0i128; len];
        // x_j = x_{j+1} + β_{j+1} 2^{-(j+1)}, x_{j_max} = 0
        for j in (j_min..j_max).rev() {
            let i = (j - j_min) as usize;
            let step = if beta[i + 1] { 1i128 << (denom - (j + 1)) } else { 0 };
            shift_num[i] = shift_num[i + 1] + step;
        }
        Ok(GridParameters { r, j_min, j_max, beta, shift_num })
    }

    pub fn standard(j_min: i32, j_max: i32) -> Result<Self> {
        let len = (j_max - j_min + 1).max(0) as usize;
        GridParameters::new(1.0, j_min, j_max, vec![false; len])
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn beta(&self, j: i32) -> Result<bool> {
        self.check(j)?;
        Ok(self.beta[(j - self.j_min) as usize])
    }

    pub fn in_window(&self, j: i32) -> bool {
        (self.j_min..=self.j_max).contains(&j)
    }

    fn check(&self, j: i32) -> Result<()> {
        if self.in_window(j) {
            Ok(())
        } else {
            Err(Error::OutOfWindow { generation: j, j_min: self.j_min, j_max: self.j_max })
        }
    }

    /// Exponent `D` of the common denominator `2^D`.
    pub fn denom_exp(&self) -> i32 {
        self.j_max.max(0)
    }

    /// `x_j` as a real number (unscaled by r).
    pub fn shift(&self, j: i32) -> Result<f64> {
        self.check(j)?;
        Ok(self.shift_num[(j - self.j_min) as usize] as f64 * (-(self.denom_exp() as f64)).exp2())
    }

    /// Left endpoint and length of `I` as integers over `2^D`, before scaling by r.
    pub fn exact(&self, i: DyadicInterval) -> Result<(i128, i128)> {
        self.check(i.generation)?;
        let len = 1i128 << (self.denom_exp() - i.generation);
        let left = i.index as i128 * len + self.shift_num[(i.generation - self.j_min) as usize];
        Ok((left, len))
    }

    fn to_real(&self, num: i128) -> f64 {
        self.r * (num as f64 * (-(self.denom_exp() as f64)).exp2())
    }

    pub fn endpoints(&self, i: DyadicInterval) -> Result<(f64, f64)> {
        let (left, len) = self.exact(i)?;
        Ok((self.to_real(left), self.to_real(left + len)))
    }

    pub fn length(&self, j: i32) -> Result<f64> {
        self.check(j)?;
        Ok(self.r * (-(j as f64)).exp2())
    }

    pub fn parent(&self, i: DyadicInterval) -> Result<DyadicInterval> {
        self.check(i.generation)?;
        self.check(i.generation - 1)?;
        // parent index: the generation-(j-1) interval containing the left endpoint
        let (left, _) = self.exact(i)?;
        Ok(DyadicInterval::new(i.generation - 1, self.index_of_num(left, i.generation - 1)))
    }

    pub fn children(&self, i: DyadicInterval) -> Result<(DyadicInterval, DyadicInterval)> {
        self.check(i.generation)?;
        self.check(i.generation + 1)?;
        let (left, len) = self.exact(i)?;
        let j = i.generation + 1;
        let l = self.index_of_num(left, j);
        let child = DyadicInterval::new(j, l);
        debug_assert_eq!(self.exact(child).unwrap(), (left, len / 2));
        Ok((child, DyadicInterval::new(j, l + 1)))
    }

    /// +1 if `i` is the right child of its parent, −1 if the left.
    pub fn sibling_sign(&self, i: DyadicInterval) -> Result<i32> {
        let p = self.parent(i)?;
        let (left_child, _) = self.children(p)?;
        Ok(if left_child == i { -1 } else { 1 })
    }

    fn index_of_num(&self, num: i128, j: i32) -> i64 {
        let len = 1i128 << (self.denom_exp() - j);
        let off = num - self.shift_num[(j - self.j_min) as usize];
        off.div_euclid(len) as i64
    }

    /// The generation-`j` interval containing `x`.
    pub fn locate(&self, x: f64, j: i32) -> Result<DyadicInterval> {
        self.check(j)?;
        let t = x / self.r - self.shift(j)?;
        let scale = (j as f64).exp2();
        let mut k = (t * scale).floor() as i64;
        // guard against rounding at an endpoint
        loop {
            let (a, b) = self.endpoints(DyadicInterval::new(j, k))?;
            if x < a {
                k -= 1;
            } else if x >= b {
                k += 1;
            } else {
                return Ok(DyadicInterval::new(j, k));
            }
        }
    }

    pub fn contains(&self, outer: DyadicInterval, inner: DyadicInterval) -> Result<bool> {
        let (a, la) = self.exact(outer)?;
        let (b, lb) = self.exact(inner)?;
        Ok(a <= b && b + lb <= a + la)
    }
}

/// The 1/3-shifted grids: `β⁰ ≡ 0`, `β¹_j = 1` iff j even, `β²_j = 1` iff j odd.
pub fn third_grid(i: usize, j_min: i32, j_max: i32) -> Result<GridParameters> {
    let bits: Vec<bool> = (j_min..=j_max)
        .map(|j| match i {
            0 => false,
            1 => j.rem_euclid(2) == 0,
            2 => j.rem_euclid(2) == 1,
            _ => false,
        })
        .collect();
    if i > 2 {
        return Err(Error::InvalidParameter(format!("third grid index {i} not in 0..=2")));
    }
    GridParameters::new(1.0, j_min, j_max, bits)
}

pub fn third_grids(j_min: i32, j_max: i32) -> Result<[GridParameters; 3]> {
    Ok([third_grid(0, j_min, j_max)?, third_grid(1, j_min, j_max)?, third_grid(2, j_min, j_max)?])
}

/// All intervals `J ⊇ [a,b)` with `3(b−a) ≤ |J| ≤ 6(b−a)` in the three 1/3-shifted grids.
pub fn covering_candidates(a: f64, b: f64, grids: &[GridParameters]) -> Result<Vec<(usize, DyadicInterval)>> {
    if !(b > a) {
        return Err(Error::InvalidParameter(format!("empty interval [{a}, {b})")));
    }
    let l = b - a;
    let mut out = Vec::new();
    let mut any_generation = false;
    for (gi, g) in grids.iter().enumerate() {
        // |J| = r 2^{-j} ∈ [3l, 6l]
        let j_hi = (g.r / (3.0 * l)).log2().floor() as i32;
        for j in (j_hi - 2)..=(j_hi + 1) {
            let len = g.r * (-(j as f64)).exp2();
            if len < 3.0 * l || len > 6.0 * l || !g.in_window(j) {
                continue;
            }
            any_generation = true;
            let cand = g.locate(a, j)?;
            let (_, right) = g.endpoints(cand)?;
            if right >= b {
                out.push((gi, cand));
            }
        }
    }
    if !any_generation {
        let g = &grids[0];
        let j = (g.r / (3.0 * l)).log2().floor() as i32;
        return Err(Error::OutOfWindow { generation: j, j_min: g.j_min, j_max: g.j_max });
    }
    Ok(out)
}

/// First interval (in grid order) from the three 1/3-shifted grids covering `[a,b)`
/// within the length sandwich `3(b−a) ≤ |J| ≤ 6(b−a)`.
pub fn covering_interval(a: f64, b: f64, j_min: i32, j_max: i32) -> Result<(usize, DyadicInterval)> {
    let grids = third_grids(j_min, j_max)?;
    covering_candidates(a, b, &grids)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidParameter(format!("no covering interval for [{a}, {b})")))
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `r` with density `1/(r ln 2)` on `[1,2)` and fair bits `β_j`.
///
/// `r` comes from stream 0 of `ChaCha8(seed)`; `β_j` from the stream keyed by `j`,
/// so two windows sampled from one seed agree on their common generations.
pub fn sample_random_grid(seed: u64, j_min: i32, j_max: i32) -> Result<GridParameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen();
    let r = (u * std::f64::consts::LN_2).exp().min(2.0 - f64::EPSILON);
    let bits = (j_min..=j_max)
        .map(|j| {
            let mut g = ChaCha8Rng::seed_from_u64(seed);
            g.set_stream((j as i64 as u64).wrapping_add(1 << 32));
            g.gen::<bool>()
        })
        .collect();
    GridParameters::new(r, j_min, j_max, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest};

    fn iv(j: i32, k: i64) -> DyadicInterval {
        DyadicInterval::new(j, k)
    }

    #[test]
    fn standard_endpoints() {
        let g = GridParameters::standard(-4, 10).unwrap();
        assert_eq!(g.endpoints(iv(1, 0)).unwrap(), (0.0, 0.5));
        assert_eq!(g.endpoints(iv(0, -1)).unwrap(), (-1.0, 0.0));
        assert!(matches!(g.endpoints(iv(11, 0)), Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn shifted_by_beta_one() {
        let mut bits = vec![false; 11];
        bits[1] = true; // j = 1
        let g = GridParameters::new(1.0, 0, 10, bits).unwrap();
        assert_eq!(g.shift(0).unwrap(), 0.5);
        assert_eq!(g.endpoints(iv(0, 0)).unwrap(), (0.5, 1.5));
    }

    #[test]
    fn family_relations() {
        let g = GridParameters::standard(-3, 8).unwrap();
        assert_eq!(g.children(iv(1, 0)).unwrap(), (iv(2, 0), iv(2, 1)));
        assert_eq!(g.sibling_sign(iv(1, 1)).unwrap(), 1);
        assert_eq!(g.sibling_sign(iv(1, 0)).unwrap(), -1);
        assert!(g.parent(iv(-3, 0)).is_err());
        assert!(g.children(iv(8, 0)).is_err());
    }

    #[test]
    fn locate_tower() {
        let g = GridParameters::standard(0, 12).unwrap();
        assert_eq!(g.endpoints(g.locate(0.3, 2).unwrap()).unwrap(), (0.25, 0.5));
        let tower: Vec<_> = (0..=10).map(|j| g.locate(0.3, j).unwrap()).collect();
        for w in tower.windows(2) {
            assert!(g.contains(w[0], w[1]).unwrap());
            assert_eq!(g.parent(w[1]).unwrap(), w[0]);
        }
    }

    #[test]
    fn locate_matches_scan_on_third_grid() {
        let g = third_grid(1, -2, 12).unwrap();
        for &x in &[0.0, 0.1, 0.333, 0.5, 0.77, 1.2, -0.4] {
            for j in 0..8 {
                let found = g.locate(x, j).unwrap();
                let scan = (-600..600)
                    .map(|k| iv(j, k))
                    .find(|&c| {
                        let (a, b) = g.endpoints(c).unwrap();
                        a <= x && x < b
                    })
                    .unwrap();
                assert_eq!(found, scan);
            }
        }
    }

    #[test]
    fn third_grid_offsets() {
        assert_eq!(third_grid(0, 0, 20).unwrap(), GridParameters::standard(0, 20).unwrap());
        let g1 = third_grid(1, 0, 20).unwrap();
        let g2 = third_grid(2, 0, 20).unwrap();
        assert!((g1.shift(0).unwrap() - 1.0 / 3.0).abs() <= 2f64.powi(-20));
        assert!((g2.shift(0).unwrap() - 2.0 / 3.0).abs() <= 2f64.powi(-20));
    }

    #[test]
    fn covering_examples() {
        let (gi, j) = covering_interval(0.4, 0.6, -4, 20).unwrap();
        assert_eq!(gi, 0);
        assert_eq!(j, iv(0, 0));
        let grids = third_grids(-4, 20).unwrap();
        let l = 2f64.powi(-5);
        let found = covering_candidates(0.0, l, &grids).unwrap();
        assert!(!found.is_empty());
        for (gi, j) in found {
            let (a, b) = grids[gi].endpoints(j).unwrap();
            assert!(a <= 0.0 && b >= l && b - a >= 3.0 * l && b - a <= 6.0 * l);
        }
        assert!(matches!(covering_interval(0.0, 1e6, -4, 20), Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn covering_in_two_grids() {
        let grids = third_grids(-8, 30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(-4.0..4.0);
            let l: f64 = (rng.gen_range(-12.0..0.0f64)).exp2();
            let found = covering_candidates(a, a + l, &grids).unwrap();
            let mut which: Vec<usize> = found.iter().map(|p| p.0).collect();
            which.dedup();
            assert!(which.len() >= 2, "[{a}, {}) only in {which:?}", a + l);
        }
    }

    #[test]
    fn random_grid_law() {
        let n = 10_000;
        let mut bit_sum = 0usize;
        let mut ln_sum = 0.0;
        for s in 0..n {
            let g = sample_random_grid(mix_seed(99, s), 0, 0 + 1).unwrap();
            bit_sum += g.beta(1).unwrap() as usize;
            ln_sum += g.r().ln();
        }
        assert!((bit_sum as f64 / n as f64 - 0.5).abs() < 0.02);
        // Simpson quadrature of ∫_1^2 ln r /(r ln 2) dr
        let m = 2000;
        let h = 1.0 / m as f64;
        let f = |r: f64| r.ln() / (r * std::f64::consts::LN_2);
        let mut q = f(1.0) + f(2.0);
        for i in 1..m {
            q += f(1.0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        q *= h / 3.0;
        assert!((ln_sum / n as f64 - q).abs() < 0.01, "{} vs {q}", ln_sum / n as f64);
        assert_eq!(sample_random_grid(5, -3, 9).unwrap(), sample_random_grid(5, -3, 9).unwrap());
    }

    #[test]
    fn json_roundtrip() {
        let g = third_grid(2, -2, 6).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"beta\":\"010101010\""));
        let back: GridParameters = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GridParameters>(r#"{"r":2.5,"j_min":0,"j_max":1,"beta":"01"}"#).is_err());
    }

    proptest! {
        #[test]
        fn parent_children_roundtrip(seed in any::<u64>(), j in -5i32..15, k in -300i64..300) {
            let g = sample_random_grid(seed, -6, 16).unwrap();
            let i = iv(j, k);
            let (l, r) = g.children(i).unwrap();
            prop_assert_eq!(g.parent(l).unwrap(), i);
            prop_assert_eq!(g.parent(r).unwrap(), i);
            let (a, b) = g.exact(i).unwrap();
            let (la, ll) = g.exact(l).unwrap();
            let (ra, rl) = g.exact(r).unwrap();
            prop_assert_eq!(la, a);
            prop_assert_eq!(ra, la + ll);
            prop_assert_eq!(ra + rl, a + b);
            prop_assert_eq!(g.sibling_sign(r).unwrap(), 1);
        }

        #[test]
        fn nested_or_disjoint(seed in any::<u64>(), j1 in 0i32..10, j2 in 0i32..10, x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let g = sample_random_grid(seed, -2, 12).unwrap();
            let i = g.locate(x, j1).unwrap();
            let k = g.locate(y, j2).unwrap();
            let (a, la) = g.exact(i).unwrap();
            let (b, lb) = g.exact(k).unwrap();
            let disjoint = a + la <= b || b + lb <= a;
            let i_in_k = g.contains(k, i).unwrap();
            let k_in_i = g.contains(i, k).unwrap() && i != k;
            prop_assert_eq!(disjoint as u8 + i_in_k as u8 + k_in_i as u8, 1);
        }

        #[test]
        fn generation_tiles(seed in any::<u64>(), j in 0i32..8) {
            let g = sample_random_grid(seed, -2, 10).unwrap();
            let first = g.locate(0.0, j).unwrap();
            let mut prev = g.exact(first).unwrap();
            for k in 1..50 {
                let cur = g.exact(iv(j, first.index + k)).unwrap();
                prop_assert_eq!(cur.0, prev.0 + prev.1);
                prev = cur;
            }
        }
    }
}
