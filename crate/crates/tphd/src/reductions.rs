//! Constructive reductions between Hamming distances, a counting 3SUM
//! variant, and the equality product. They double as instance generators and
//! as cross-checks for the solvers.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{Result, TphdError};
use crate::matrix::{CountMatrix, IntMatrix};
use crate::strings::{validate_instance, DistanceKind, DistanceVector, IntString};

/// The text may be at most this many times longer than the pattern.
pub const MAX_LENGTH_RATIO: usize = 4;

/// Shift resamplings before the backward reduction gives up.
pub const OCCUPANCY_RETRIES: usize = 32;

/// Counting 3SUM variant: for every `c` in `[N]`, count pairs
/// `(a, b)` in `A x B` with `a + b = c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreeSumVariantInstance {
    a: Vec<i64>,
    b: Vec<i64>,
    n: usize,
}

impl ThreeSumVariantInstance {
    /// `a` and `b` must be sets (no repeated element).
    pub fn new(mut a: Vec<i64>, mut b: Vec<i64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(TphdError::InvalidParameter("N must be positive".into()));
        }
        for (set, name) in [(&mut a, "A"), (&mut b, "B")] {
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(TphdError::InvalidInstance(format!("{name} has a repeated element")));
            }
            if set.iter().any(|v| v.unsigned_abs() >= 1 << 60) {
                return Err(TphdError::InvalidInstance(format!(
                    "{name} has an element beyond 2^60 in magnitude"
                )));
            }
        }
        Ok(Self { a, b, n })
    }

    pub fn a(&self) -> &[i64] {
        &self.a
    }

    pub fn b(&self) -> &[i64] {
        &self.b
    }

    /// Size of the target range `C = [N]`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Reference answer by a double loop.
    pub fn count_naive(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.n];
        for &x in &self.a {
            for &y in &self.b {
                let z = x + y;
                if z >= 0 && (z as usize) < self.n {
                    out[z as usize] += 1;
                }
            }
        }
        out
    }
}

/// 3SUM-variant instance built from a Hamming instance, with what is needed
/// to turn counts back into distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HammingAsThreeSum {
    pub instance: ThreeSumVariantInstance,
    pub m: usize,
    pub shifts: usize,
}

impl HammingAsThreeSum {
    /// Distance at shift `i` is `m - count[i]`.
    pub fn decode(&self, counts: &[u64]) -> Result<DistanceVector> {
        if counts.len() < self.shifts {
            return Err(TphdError::DimensionMismatch(format!(
                "{} counts for {} shifts",
                counts.len(),
                self.shifts
            )));
        }
        let values = counts[..self.shifts].iter().map(|&c| self.m as u64 - c).collect();
        Ok(DistanceVector::new(values, DistanceKind::Hamming))
    }
}

/// `A = {-2n P[i] - i}`, `B = {2n T[i] + i}`, `C = [n]`. A pair sums to `i`
/// exactly when it is a matching position at shift `i`.
pub fn hamming_to_3sum_instance(text: &IntString, pattern: &IntString) -> Result<HammingAsThreeSum> {
    validate_instance(text, pattern)?;
    let (n, m) = (text.len(), pattern.len());
    if n > MAX_LENGTH_RATIO * m {
        return Err(TphdError::OutOfRegime(format!(
            "n = {n} exceeds {MAX_LENGTH_RATIO} * m = {}",
            MAX_LENGTH_RATIO * m
        )));
    }
    let two_n = 2 * n as i64;
    let a = pattern
        .chars()
        .iter()
        .enumerate()
        .map(|(i, &c)| -two_n * c as i64 - i as i64)
        .collect();
    let b = text.chars().iter().enumerate().map(|(i, &c)| two_n * c as i64 + i as i64).collect();
    Ok(HammingAsThreeSum {
        instance: ThreeSumVariantInstance::new(a, b, n)?,
        m,
        shifts: n - m + 1,
    })
}

/// One randomly shifted bucket pair: `A_g` against `B_{g+offset}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftedBucket {
    pub group: i64,
    pub offset: i64,
    pub shift: u64,
    /// `a - gN + s` for `a` in the negated `A_g`; values in `[2N]`.
    pub a: Vec<u64>,
    /// `b - gN + s` for `b` in `B_{g+offset}`; values in `[3N]`.
    pub b: Vec<u64>,
}

/// All shifted buckets of one sampling round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftedBuckets {
    pub n: usize,
    pub buckets: Vec<ShiftedBucket>,
}

impl ShiftedBuckets {
    /// Negates `A`, buckets both sets by `floor(v / N)` and shifts each
    /// nonempty pair by a fresh uniform `s_g` in `[N]`. `b - a` lies in
    /// `[0, N)` only if `b` is in the same bucket as `a` or the next one.
    pub fn sample<R: Rng + ?Sized>(inst: &ThreeSumVariantInstance, rng: &mut R) -> Self {
        let n = inst.n as i64;
        let mut ga: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for &a in &inst.a {
            ga.entry((-a).div_euclid(n)).or_default().push(-a);
        }
        let mut gb: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for &b in &inst.b {
            gb.entry(b.div_euclid(n)).or_default().push(b);
        }
        let mut buckets = Vec::new();
        for offset in 0..2i64 {
            for (&g, av) in &ga {
                let Some(bv) = gb.get(&(g + offset)) else { continue };
                let shift = rng.gen_range(0..inst.n as u64);
                let base = g * n - shift as i64;
                buckets.push(ShiftedBucket {
                    group: g,
                    offset,
                    shift,
                    a: av.iter().map(|&a| (a - base) as u64).collect(),
                    b: bv.iter().map(|&b| (b - base) as u64).collect(),
                });
            }
        }
        Self { n: inst.n, buckets }
    }

    /// Largest number of buckets of one offset sharing a position.
    pub fn max_occupancy(&self) -> usize {
        let mut worst = 0;
        for offset in 0..2 {
            let mut occ_a = vec![0usize; 2 * self.n];
            let mut occ_b = vec![0usize; 3 * self.n];
            for bk in self.buckets.iter().filter(|bk| bk.offset == offset) {
                bk.a.iter().for_each(|&v| occ_a[v as usize] += 1);
                bk.b.iter().for_each(|&v| occ_b[v as usize] += 1);
            }
            worst = worst.max(occ_a.into_iter().chain(occ_b).max().unwrap_or(0));
        }
        worst
    }
}

/// Occupancy cap `4 ceil(log2 N) + 4`, a constant multiple of the
/// logarithmic high-probability bound.
pub fn occupancy_cap(n: usize) -> usize {
    4 * (n.max(2) as f64).log2().ceil() as usize + 4
}

/// Counts for the 3SUM variant computed through a Hamming solver.
///
/// Per offset and per occupancy layer pair `(x, y)`, the pattern holds at
/// position `i` the group of the `x`-th shifted `A` bucket containing `i`,
/// and the text the group of the `y`-th shifted `B` bucket; other positions
/// hold characters unique to that string. Matches at shift `c` then count
/// the pairs with `b' - a' = c` inside one group. Layer overflow resamples
/// all shifts; after [`OCCUPANCY_RETRIES`] the call fails instead of
/// returning a wrong answer.
pub fn solve_3sum_variant_via_hamming<R, F>(inst: &ThreeSumVariantInstance, mut solver: F, rng: &mut R) -> Result<Vec<u64>>
where
    R: Rng + ?Sized,
    F: FnMut(&IntString, &IntString) -> Result<DistanceVector>,
{
    let n = inst.n;
    let cap = occupancy_cap(n);
    let mut sampled = None;
    for _ in 0..OCCUPANCY_RETRIES {
        let s = ShiftedBuckets::sample(inst, rng);
        if s.max_occupancy() <= cap {
            sampled = Some(s);
            break;
        }
    }
    let Some(shifted) = sampled else {
        return Err(TphdError::RetriesExhausted {
            attempts: OCCUPANCY_RETRIES,
            reason: format!("some position is covered by more than {cap} shifted buckets"),
        });
    };

    let mut counts = vec![0u64; n];
    for offset in 0..2 {
        let buckets: Vec<&ShiftedBucket> = shifted.buckets.iter().filter(|bk| bk.offset == offset).collect();
        if buckets.is_empty() {
            continue;
        }
        let groups = buckets.len() as u32;
        let pattern_layers = layers(buckets.iter().enumerate().map(|(gi, bk)| (gi as u32, bk.a.as_slice())), 2 * n);
        let text_layers = layers(buckets.iter().enumerate().map(|(gi, bk)| (gi as u32, bk.b.as_slice())), 3 * n);
        // Unique fillers: pattern uses [G, G + 2N), text uses [G + 2N, G + 5N).
        let sigma = groups + 5 * n as u32;
        for p_layer in &pattern_layers {
            let pattern: Vec<u32> = p_layer.iter().enumerate().map(|(i, g)| g.unwrap_or(groups + i as u32)).collect();
            let pattern = IntString::new(pattern, sigma)?;
            for t_layer in &text_layers {
                let text: Vec<u32> = t_layer
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g.unwrap_or(groups + 2 * n as u32 + i as u32))
                    .collect();
                let text = IntString::new(text, sigma)?;
                let dist = solver(&text, &pattern)?;
                for (c, slot) in counts.iter_mut().enumerate() {
                    *slot += 2 * n as u64 - dist.values[c];
                }
            }
        }
    }
    Ok(counts)
}

/// Splits group memberships into layers: layer `x` holds, at each position,
/// the `x`-th group (in enumeration order) that contains it.
fn layers<'a>(sets: impl Iterator<Item = (u32, &'a [u64])>, len: usize) -> Vec<Vec<Option<u32>>> {
    let mut out: Vec<Vec<Option<u32>>> = Vec::new();
    let mut depth = vec![0usize; len];
    for (g, set) in sets {
        for &v in set {
            let d = depth[v as usize];
            if d == out.len() {
                out.push(vec![None; len]);
            }
            out[d][v as usize] = Some(g);
            depth[v as usize] += 1;
        }
    }
    out
}

/// Hamming instance whose distances encode an equality product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EqualityAsHamming {
    pub text: IntString,
    pub pattern: IntString,
    pub n: usize,
}

impl EqualityAsHamming {
    /// Shift at which row block `i` of the text lies under column block `k`
    /// of the pattern.
    pub fn shift(&self, i: usize, k: usize) -> usize {
        let n = self.n;
        n * n + i * (n + 1) - k * n
    }

    /// `C[i, k] = N^2 - dist(shift(i, k))`: only the aligned blocks can
    /// contribute matches.
    pub fn decode(&self, dist: &DistanceVector) -> Result<CountMatrix> {
        let n = self.n;
        let expected = self.text.len() - self.pattern.len() + 1;
        if dist.len() != expected {
            return Err(TphdError::DimensionMismatch(format!(
                "{} distances, expected {expected}",
                dist.len()
            )));
        }
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                data.push((n * n) as u64 - dist.values[self.shift(i, k)]);
            }
        }
        CountMatrix::new(n, n, data)
    }
}

/// Text `$^{N^2} f(0) $ f(1) $ ... $ f(N-1) $^{N^2}` and pattern
/// `g(0) g(1) ... g(N-1)`, where `f(i)` spells row `i` of `A` and `g(k)`
/// column `k` of `B` as letters `(j, value)`. A letter is encoded as
/// `j * R + rank(value)` with `R` distinct values overall, and `$ = N * R`.
pub fn equality_product_to_hamming(a: &IntMatrix, b: &IntMatrix) -> Result<EqualityAsHamming> {
    let n = a.rows();
    if n == 0 || a.cols() != n || b.rows() != n || b.cols() != n {
        return Err(TphdError::DimensionMismatch(format!(
            "need two nonempty NxN matrices, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut values: Vec<i64> = a.data().iter().chain(b.data()).copied().collect();
    values.sort_unstable();
    values.dedup();
    let rank: HashMap<i64, u64> = values.iter().enumerate().map(|(r, &v)| (v, r as u64)).collect();
    let r = values.len() as u64;
    let code = |j: usize, v: i64| -> Result<u32> {
        u32::try_from(j as u64 * r + rank[&v]).map_err(|_| TphdError::Overflow("alphabet exceeds u32".into()))
    };
    let dollar = u32::try_from(n as u64 * r).map_err(|_| TphdError::Overflow("alphabet exceeds u32".into()))?;

    let mut text = vec![dollar; n * n];
    for i in 0..n {
        if i > 0 {
            text.push(dollar);
        }
        for j in 0..n {
            text.push(code(j, a.get(i, j))?);
        }
    }
    text.extend(std::iter::repeat_n(dollar, n * n));
    let mut pattern = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            pattern.push(code(j, b.get(j, k))?);
        }
    }
    Ok(EqualityAsHamming {
        text: IntString::new(text, dollar + 1)?,
        pattern: IntString::new(pattern, dollar + 1)?,
        n,
    })
}
