//! Unbiased estimators for sum-counting problems.
//!
//! Each estimator reports, for every key, a value whose expectation is the true
//! count. Sampling rates are always `1/q` for an integer `q`, so every estimate
//! is an integer (the number of sampled witnesses times `q`) and no rounding
//! enters the estimates.
//!
//! The building blocks, from the bottom up:
//!
//! * [`estimate_triangle_counts`]: `COUNT[i,j,z] = |{k : A[i,k] + B[k,j] = z}|`.
//!   Triples whose witness set is hit by a random hitting set `H^(l)` are
//!   estimated with a sampled equality product after subtracting the hitting
//!   witness (`A[i,k] - A[i,k0] = B[k0,j] - B[k,j]`). All other triples use
//!   plain witness sampling at rate `1/(st)`.
//! * [`estimate_conv3sum`]: `COUNT[h,z] = |{k < h : a_k + b_{h-k} = z}|` by
//!   cutting the sequences into blocks of length `d` and calling the triangle
//!   estimator once per block offset.
//! * [`estimate_3sum`]: sumset counts for two integer sets. Elements are hashed
//!   into buckets by an almost-linear hash. Elements in buckets holding at most
//!   [`BUCKET_CAP`] of them become sequence entries indexed by bucket. The
//!   rest recurse.
//! * [`estimate_colored_3sum`]: the same with colors, one call per color or an
//!   exact convolution for large color classes.
//! * [`estimate_interval_counts`]: colored sets given as disjoint monochromatic
//!   intervals, with the median of repeated runs.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::seq::index::sample;
use rand::Rng;

use crate::convolution::convolve_exact;
use crate::error::{Result, TphdError};
use crate::hashing::{sample_linear_hash, MAX_UNIVERSE_LOG};
use crate::matrix::{equality_product, IntMatrix};
use crate::rng::fork;

/// Matrix-multiplication exponent assumed when none is configured.
pub const DEFAULT_OMEGA: f64 = 3.0;
/// Inputs must satisfy `|v| < VALUE_LIMIT` so that sums and differences of
/// two values never reach the absent-entry markers.
pub const VALUE_LIMIT: i64 = 1 << 60;
/// Buckets holding more elements than this are treated as overflowing.
pub const BUCKET_CAP: usize = 8;
/// Constant `c` in the hitting-set size `c * 2^l * log(n1 n2 n3)`.
pub const HIT_CONSTANT: u64 = 4;
/// Smallest color-class size ever sent to exact convolution.
pub const COLORED_CUTOFF_FLOOR: f64 = 8.0;

/// Groups with fewer requested entries are counted directly instead of
/// through a full equality product over the sample.
const EQ_PRODUCT_MIN_REQUESTS: usize = 32;
const MAX_3SUM_DEPTH: usize = 12;
/// Marks an absent entry of a left-hand matrix or sequence.
const NONE_A: i64 = i64::MIN;
/// Marks an absent entry of a right-hand matrix or sequence.
const NONE_B: i64 = i64::MAX;

/// Sparse estimates. Keys whose estimate is zero are not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimateArray<K: Ord> {
    pub entries: BTreeMap<K, u64>,
    pub t: u64,
    pub delta: u64,
    /// True when every sample was taken at rate 1, so each estimate is exact.
    pub exact: bool,
}

impl<K: Ord + Copy + Hash> EstimateArray<K> {
    fn from_map(map: HashMap<K, u64>, t: u64, delta: u64, exact: bool) -> Self {
        Self {
            entries: map.into_iter().filter(|&(_, v)| v > 0).collect(),
            t,
            delta,
            exact,
        }
    }

    /// Sums duplicate keys.
    fn from_list(list: Vec<(K, u64)>, t: u64, delta: u64, exact: bool) -> Self {
        let mut entries = BTreeMap::new();
        for (k, v) in list {
            *entries.entry(k).or_default() += v;
        }
        entries.retain(|_, v| *v > 0);
        Self { entries, t, delta, exact }
    }

    pub fn get(&self, key: &K) -> u64 {
        self.entries.get(key).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &u64)> {
        self.entries.iter()
    }
}

/// Sampling parameters of the triangle estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WitnessParameters {
    /// Number of sample levels minus one is `log2 s`; a power of two.
    pub s: u64,
    pub t: u64,
    pub delta: u64,
}

impl WitnessParameters {
    /// Checks `1 <= t <= n2` and `1 <= s <= n2 / t`, then rounds `s` down to a
    /// power of two.
    pub fn new(s: u64, t: u64, delta: u64, n2: usize) -> Result<Self> {
        let n2 = n2 as u64;
        if delta == 0 {
            return Err(TphdError::InvalidParameter("delta must be positive".into()));
        }
        if t == 0 || t > n2.max(1) {
            return Err(TphdError::InvalidParameter(format!("t = {t} must lie in [1, {}]", n2.max(1))));
        }
        if s == 0 || s > (n2 / t).max(1) {
            return Err(TphdError::InvalidParameter(format!("s = {s} must lie in [1, {}]", (n2 / t).max(1))));
        }
        Ok(Self {
            s: pow2_floor_u64(s),
            t,
            delta,
        })
    }

    pub fn levels(&self) -> u32 {
        self.s.trailing_zeros() + 1
    }

    /// Inverse sampling rate of the few-witnesses estimate.
    pub fn few_inverse_rate(&self) -> u64 {
        self.s * self.t
    }

    /// Inverse sampling rate at hitting level `l`.
    pub fn level_inverse_rate(&self, l: u32) -> u64 {
        (1u64 << l) * self.t
    }

    /// `min(n2, c * 2^l * ceil(log2(n1 n2 n3)))`.
    pub fn hit_size(&self, l: u32, n1: usize, n2: usize, n3: usize) -> usize {
        let log_term = ((n1 as f64) * (n2 as f64) * (n3 as f64)).max(2.0).log2().ceil() as u64;
        (HIT_CONSTANT << l).saturating_mul(log_term).min(n2 as u64) as usize
    }
}

fn pow2_floor_u64(v: u64) -> u64 {
    if v == 0 {
        1
    } else {
        1 << (63 - v.leading_zeros())
    }
}

fn pow2_floor_f(v: f64) -> u64 {
    if v < 1.0 {
        1
    } else {
        1 << (v.log2().floor() as u32).min(62)
    }
}

/// Positions in `[n]` kept independently with probability `1/q`, drawn by
/// geometric gaps.
fn rate_sample<R: Rng + ?Sized>(n: usize, q: u64, rng: &mut R) -> Vec<usize> {
    if q <= 1 {
        return (0..n).collect();
    }
    let log_keep = (1.0 - 1.0 / q as f64).ln();
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < n {
        let u = 1.0 - rng.gen::<f64>();
        let gap = (u.ln() / log_keep).floor();
        if gap >= (n - pos) as f64 {
            break;
        }
        pos += gap as usize;
        out.push(pos);
        pos += 1;
    }
    out
}

fn check_values(values: impl IntoIterator<Item = i64>) -> Result<()> {
    for v in values {
        if v.abs() >= VALUE_LIMIT {
            return Err(TphdError::InvalidParameter(format!("value {v} outside (-2^60, 2^60)")));
        }
    }
    Ok(())
}

fn check_divisible(values: impl IntoIterator<Item = i64>, delta: u64) -> Result<()> {
    if delta == 0 {
        return Err(TphdError::InvalidParameter("delta must be positive".into()));
    }
    match values.into_iter().find(|v| v.rem_euclid(delta as i64) != 0) {
        Some(v) => Err(TphdError::Precondition(format!("value {v} is not divisible by delta = {delta}"))),
        None => Ok(()),
    }
}

pub type TriangleKey = (usize, usize, i64);

/// Unbiased estimates of `COUNT[i,j,z] = |{k : A[i,k] + B[k,j] = z}|` with
/// variance `O(t n2)`. Every entry of `A` must be divisible by `delta <= n3`.
/// `s` is rounded down to a power of two.
pub fn estimate_triangle_counts<R: Rng + ?Sized>(
    a: &IntMatrix,
    b: &IntMatrix,
    delta: u64,
    t: u64,
    s: u64,
    rng: &mut R,
) -> Result<EstimateArray<TriangleKey>> {
    if a.cols() != b.rows() {
        return Err(TphdError::DimensionMismatch(format!(
            "{}x{} against {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let params = WitnessParameters::new(s, t, delta, a.cols())?;
    if delta > b.cols().max(1) as u64 {
        return Err(TphdError::Precondition(format!("delta = {delta} exceeds n3 = {}", b.cols())));
    }
    check_values(a.data().iter().chain(b.data()).copied())?;
    check_divisible(a.data().iter().copied(), delta)?;
    let (list, exact) = triangle_core(a, b, params, rng)?;
    Ok(EstimateArray::from_list(list, t, delta, exact))
}

fn triangle_core<R: Rng + ?Sized>(
    a: &IntMatrix,
    b: &IntMatrix,
    params: WitnessParameters,
    rng: &mut R,
) -> Result<(Vec<(TriangleKey, u64)>, bool)> {
    let (n1, n2, n3) = (a.rows(), a.cols(), b.cols());
    let mut out = Vec::new();
    let exact = params.s == 1 && params.t == 1;
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Ok((out, true));
    }
    let mut level_of = vec![u32::MAX; n2];
    for l in 0..params.levels() {
        for k0 in sample(rng, n2, params.hit_size(l, n1, n2, n3)) {
            level_of[k0] = level_of[k0].min(l);
        }
    }
    let few_q = params.few_inverse_rate();
    let delta = params.delta as i64;
    // Per row, the hitting-set indices whose entry is present, in index order.
    let row_hits: Vec<Vec<(usize, u32)>> = (0..n1)
        .map(|i| {
            let row = a.row(i);
            (0..n2)
                .filter(|&k| row[k] != NONE_A && level_of[k] != u32::MAX)
                .map(|k| (k, level_of[k]))
                .collect()
        })
        .collect();
    // Indices outside a row's present entries never contribute, so the
    // few-witnesses sample is drawn over the present entries only.
    let row_present: Vec<Vec<usize>> = (0..n1).map(|i| (0..n2).filter(|&k| a.get(i, k) != NONE_A).collect()).collect();
    let col_live: Vec<bool> = (0..n3).map(|j| (0..n2).any(|k| b.get(k, j) != NONE_B)).collect();

    // (level, k0, residue, i, j, z) for every triple hit by some H^(l).
    let mut requests: Vec<(u32, usize, i64, usize, usize, i64)> = Vec::new();
    let mut hits: Vec<(i64, u32, usize)> = Vec::new();
    let mut few: Vec<i64> = Vec::new();
    for i in (0..n1).filter(|&i| !row_present[i].is_empty()) {
        let arow = a.row(i);
        for j in (0..n3).filter(|&j| col_live[j]) {
            hits.clear();
            for &(k0, l) in &row_hits[i] {
                let y = b.get(k0, j);
                if y != NONE_B {
                    hits.push((arow[k0] + y, l, k0));
                }
            }
            // The first entry per z is the smallest level, then the smallest k0.
            hits.sort_unstable();
            hits.dedup_by_key(|h| h.0);
            for &(z, l, k0) in &hits {
                requests.push((l, k0, z.rem_euclid(delta), i, j, z));
            }
            few.clear();
            let present = &row_present[i];
            for idx in rate_sample(present.len(), few_q, rng) {
                let k = present[idx];
                let (x, y) = (arow[k], b.get(k, j));
                if y != NONE_B && hits.binary_search_by_key(&(x + y), |h| h.0).is_err() {
                    few.push(x + y);
                }
            }
            few.sort_unstable();
            for run in few.chunk_by(|p, q| p == q) {
                out.push(((i, j, run[0]), run.len() as u64 * few_q));
            }
        }
    }

    // One sample R^(l, k0, xi) per group, shared by every (i, j) in it.
    requests.sort_unstable();
    for group in requests.chunk_by(|p, q| (p.0, p.1, p.2) == (q.0, q.1, q.2)) {
        let (l, k0) = (group[0].0, group[0].1);
        let q = params.level_inverse_rate(l);
        let r = rate_sample(n2, q, rng);
        if r.is_empty() {
            continue;
        }
        if group.len() >= EQ_PRODUCT_MIN_REQUESTS {
            let mut rows: Vec<usize> = group.iter().map(|g| g.3).collect();
            rows.dedup();
            let mut cols: Vec<usize> = group.iter().map(|g| g.4).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut ad = Vec::with_capacity(rows.len() * r.len());
            for &i in &rows {
                let base = a.get(i, k0);
                ad.extend(r.iter().map(|&k| match a.get(i, k) {
                    NONE_A => NONE_A,
                    x => x - base,
                }));
            }
            let mut bd = Vec::with_capacity(r.len() * cols.len());
            for &k in &r {
                bd.extend(cols.iter().map(|&j| match b.get(k, j) {
                    NONE_B => NONE_B,
                    y => b.get(k0, j) - y,
                }));
            }
            let ap = IntMatrix::new(rows.len(), r.len(), ad)?;
            let bp = IntMatrix::new(r.len(), cols.len(), bd)?;
            let c = equality_product(&ap, &bp, (params.s as usize).clamp(1, r.len()))?;
            for &(_, _, _, i, j, z) in group {
                let ri = rows.binary_search(&i).expect("row was collected");
                let cj = cols.binary_search(&j).expect("column was collected");
                let v = c.get(ri, cj);
                if v > 0 {
                    out.push(((i, j, z), v * q));
                }
            }
        } else {
            for &(_, _, _, i, j, z) in group {
                let v = r
                    .iter()
                    .filter(|&&k| {
                        let (x, y) = (a.get(i, k), b.get(k, j));
                        x != NONE_A && y != NONE_B && x + y == z
                    })
                    .count() as u64;
                if v > 0 {
                    out.push(((i, j, z), v * q));
                }
            }
        }
    }
    Ok((out, exact))
}

pub type ConvKey = (usize, i64);

/// Unbiased estimates of `COUNT[h,z] = |{k < h : a_k + b_{h-k} = z}|` for
/// equal-length sequences, with variance `O(t n)`. Uses `omega = 3`.
pub fn estimate_conv3sum<R: Rng + ?Sized>(a: &[i64], b: &[i64], delta: u64, t: u64, rng: &mut R) -> Result<EstimateArray<ConvKey>> {
    estimate_conv3sum_with(a, b, delta, t, DEFAULT_OMEGA, rng)
}

pub fn estimate_conv3sum_with<R: Rng + ?Sized>(
    a: &[i64],
    b: &[i64],
    delta: u64,
    t: u64,
    omega: f64,
    rng: &mut R,
) -> Result<EstimateArray<ConvKey>> {
    if a.len() != b.len() {
        return Err(TphdError::DimensionMismatch(format!(
            "sequence lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as u64;
    if delta == 0 || delta > n.max(1) {
        return Err(TphdError::Precondition(format!("delta = {delta} must lie in [1, {}]", n.max(1))));
    }
    if t == 0 || t > n.max(1) {
        return Err(TphdError::InvalidParameter(format!("t = {t} must lie in [1, {}]", n.max(1))));
    }
    check_values(a.iter().chain(b).copied())?;
    check_divisible(a.iter().copied(), delta)?;
    let (list, exact) = conv3sum_core(a, b, delta, t, omega, rng)?;
    Ok(EstimateArray::from_list(list, t, delta, exact))
}

/// Block length and level count used for a sequence of length `n`.
pub fn conv3sum_blocking(n: usize, delta: u64, t: u64, omega: f64) -> (usize, u64) {
    let nf = n.max(1) as f64;
    let d = if t >= delta {
        (t as f64 * nf).sqrt()
    } else {
        (delta as f64 * nf).sqrt()
    };
    let d = (d.ceil() as usize).clamp(1, n.max(1));
    let base = if t >= delta { nf / t as f64 } else { nf / delta as f64 };
    let s_cap = pow2_floor_u64((d as u64 / t.min(d as u64).max(1)).max(1));
    let s = pow2_floor_f(base.max(1.0).powf((3.0 - omega) / 4.0)).min(s_cap);
    (d, s)
}

fn conv3sum_core<R: Rng + ?Sized>(
    a: &[i64],
    b: &[i64],
    delta: u64,
    t: u64,
    omega: f64,
    rng: &mut R,
) -> Result<(Vec<(ConvKey, u64)>, bool)> {
    let n = a.len();
    let mut out = Vec::new();
    if n == 0 {
        return Ok((out, true));
    }
    let t = t.clamp(1, n as u64);
    let (d, s) = conv3sum_blocking(n, delta, t, omega);
    let params = WitnessParameters {
        s,
        t: t.min(d as u64),
        delta,
    };
    let nb = n.div_ceil(d);
    let mut adata = vec![NONE_A; nb * d];
    adata[..n].copy_from_slice(a);
    let mut exact = params.s == 1 && params.t == 1;
    for l in 0..nb {
        let rows = nb - l;
        if adata[..rows * d].iter().all(|&v| v == NONE_A) {
            continue;
        }
        let mut bdata = vec![NONE_B; d * d];
        let mut any = false;
        for k in 0..d {
            for j in 0..d {
                let idx = (l * d + j) as isize - k as isize;
                if idx >= 1 && (idx as usize) < n {
                    bdata[k * d + j] = b[idx as usize];
                    any |= b[idx as usize] != NONE_B;
                }
            }
        }
        if !any {
            continue;
        }
        let am = IntMatrix::new(rows, d, adata[..rows * d].to_vec())?;
        let bm = IntMatrix::new(d, d, bdata)?;
        let (est, ex) = triangle_core(&am, &bm, params, rng)?;
        exact &= ex;
        for ((ip, j, z), v) in est {
            let h = (ip + l) * d + j;
            if h < n {
                out.push(((h, z), v));
            }
        }
    }
    Ok((out, exact))
}

/// Unbiased estimates of `COUNT[z] = |{(a, b) : a + b = z}|` for integer
/// multisets, with variance `O(t n)` up to polylogarithmic factors. Every
/// element of `a` must be divisible by `delta`. Uses `omega = 3`.
pub fn estimate_3sum<R: Rng + ?Sized>(a: &[i64], b: &[i64], delta: u64, t: u64, rng: &mut R) -> Result<EstimateArray<i64>> {
    estimate_3sum_with(a, b, delta, t, DEFAULT_OMEGA, rng)
}

pub fn estimate_3sum_with<R: Rng + ?Sized>(
    a: &[i64],
    b: &[i64],
    delta: u64,
    t: u64,
    omega: f64,
    rng: &mut R,
) -> Result<EstimateArray<i64>> {
    if t == 0 {
        return Err(TphdError::InvalidParameter("t must be positive".into()));
    }
    check_values(a.iter().chain(b).copied())?;
    check_divisible(a.iter().copied(), delta)?;
    let mut out = HashMap::new();
    let exact = three_sum_core(a, b, delta, t, omega, rng, 0, &mut out)?;
    Ok(EstimateArray::from_map(out, t, delta, exact))
}

fn exact_pairs(a: &[i64], b: &[i64], out: &mut HashMap<i64, u64>) {
    for &x in a {
        for &y in b {
            *out.entry(x + y).or_default() += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn three_sum_core<R: Rng + ?Sized>(
    a: &[i64],
    b: &[i64],
    delta: u64,
    t: u64,
    omega: f64,
    rng: &mut R,
    depth: usize,
    out: &mut HashMap<i64, u64>,
) -> Result<bool> {
    if a.is_empty() || b.is_empty() {
        return Ok(true);
    }
    if a.len().min(b.len()) <= 2 || depth >= MAX_3SUM_DEPTH {
        exact_pairs(a, b, out);
        return Ok(true);
    }
    let n = a.len().max(b.len());
    let l = (n as u64).next_power_of_two().max(2);
    let d = delta as i64;
    let shift_a = a.iter().min().copied().unwrap_or(0).div_euclid(d) * d;
    let shift_b = b.iter().min().copied().unwrap_or(0);
    let span = a
        .iter()
        .map(|&x| x - shift_a)
        .chain(b.iter().map(|&y| y - shift_b))
        .max()
        .unwrap_or(0) as u64
        + 1;
    let u = span.next_power_of_two().max(l);
    if u.trailing_zeros() > MAX_UNIVERSE_LOG {
        return Err(TphdError::OutOfRegime(format!("value span {span} exceeds 2^{MAX_UNIVERSE_LOG}")));
    }
    let f = sample_linear_hash(u, l, rng)?;

    // (bucket, rank within bucket, shifted value) for good elements.
    let classify = |vals: &[i64], shift: i64| {
        let buckets: Vec<usize> = vals.iter().map(|&x| f.hash((x - shift) as u64) as usize).collect();
        let mut load = vec![0usize; l as usize];
        for &k in &buckets {
            load[k] += 1;
        }
        let mut rank = vec![0usize; l as usize];
        let mut good = Vec::new();
        let mut bad = Vec::new();
        for (&x, &k) in vals.iter().zip(&buckets) {
            if load[k] <= BUCKET_CAP {
                good.push((k, rank[k], x - shift));
                rank[k] += 1;
            } else {
                bad.push(x);
            }
        }
        (good, bad)
    };
    let (good_a, bad_a) = classify(a, shift_a);
    let (good_b, bad_b) = classify(b, shift_b);
    let ranks = |g: &[(usize, usize, i64)]| g.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    let errors = f.error_set();
    let seq_len = 2 * l as usize;
    let mut exact = true;
    for ra in 0..ranks(&good_a) {
        let mut sa = vec![NONE_A; seq_len];
        for &(k, _, v) in good_a.iter().filter(|e| e.1 == ra) {
            sa[k] = v;
        }
        for rb in 0..ranks(&good_b) {
            let mut sb = vec![NONE_B; seq_len];
            for &(k, r, v) in good_b.iter().filter(|e| e.1 == rb) {
                debug_assert_eq!(r, rb);
                sb[k + 1] = v;
            }
            let (est, ex) = conv3sum_core(&sa, &sb, delta, t.min(seq_len as u64), omega, rng)?;
            exact &= ex;
            for ((h, zp), v) in est {
                let fz = f.hash(zp as u64) as i64;
                if errors.elements().iter().any(|&e| h as i64 == fz + e + 1) {
                    *out.entry(zp + shift_a + shift_b).or_default() += v;
                }
            }
        }
    }
    let good_a_values: Vec<i64> = good_a.iter().map(|&(_, _, v)| v + shift_a).collect();
    exact &= three_sum_core(&bad_a, b, delta, t, omega, rng, depth + 1, out)?;
    exact &= three_sum_core(&good_a_values, &bad_b, delta, t, omega, rng, depth + 1, out)?;
    Ok(exact)
}

/// Integers in `[U]` with color labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoredSet {
    elements: Vec<(i64, u32)>,
    universe: u64,
}

impl ColoredSet {
    pub fn new(elements: Vec<(i64, u32)>, universe: u64) -> Result<Self> {
        if universe == 0 {
            return Err(TphdError::InvalidParameter("universe must be positive".into()));
        }
        if let Some(&(v, _)) = elements.iter().find(|&&(v, _)| v < 0 || v as u64 >= universe) {
            return Err(TphdError::Domain {
                value: v.max(0) as u64,
                bound: universe,
            });
        }
        Ok(Self { elements, universe })
    }

    pub fn elements(&self) -> &[(i64, u32)] {
        &self.elements
    }

    pub fn universe(&self) -> u64 {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Largest color class handed to the estimator; bigger classes are counted
/// exactly by convolution over the universe.
pub fn colored_cutoff(u: u64, t: u64, delta: u64, omega: f64) -> f64 {
    let (u, t, d) = (u as f64, t as f64, delta as f64);
    let e = 5.0 + omega;
    let first = u.powf(4.0 / e) * t.powf((1.0 + omega) / e);
    let second = (u * t).powf(4.0 / e) / d.powf((3.0 - omega) / e);
    first.min(second).max(COLORED_CUTOFF_FLOOR)
}

/// Unbiased estimates of `COUNT[z] = |{(a, b) : a + b = z, color(a) = color(b)}|`.
pub fn estimate_colored_3sum<R: Rng + ?Sized>(
    a: &ColoredSet,
    b: &ColoredSet,
    delta: u64,
    t: u64,
    rng: &mut R,
) -> Result<EstimateArray<i64>> {
    estimate_colored_3sum_with(a, b, delta, t, DEFAULT_OMEGA, rng)
}

pub fn estimate_colored_3sum_with<R: Rng + ?Sized>(
    a: &ColoredSet,
    b: &ColoredSet,
    delta: u64,
    t: u64,
    omega: f64,
    rng: &mut R,
) -> Result<EstimateArray<i64>> {
    if t == 0 {
        return Err(TphdError::InvalidParameter("t must be positive".into()));
    }
    check_divisible(a.elements.iter().map(|e| e.0), delta)?;
    let u = a.universe.max(b.universe);
    let mut out = HashMap::new();
    let exact = colored_core(&a.elements, &b.elements, u, delta, t, omega, rng, &mut out)?;
    Ok(EstimateArray::from_map(out, t, delta, exact))
}

#[allow(clippy::too_many_arguments)]
fn colored_core<R: Rng + ?Sized>(
    a: &[(i64, u32)],
    b: &[(i64, u32)],
    u: u64,
    delta: u64,
    t: u64,
    omega: f64,
    rng: &mut R,
    out: &mut HashMap<i64, u64>,
) -> Result<bool> {
    let mut classes: BTreeMap<u32, (Vec<i64>, Vec<i64>)> = BTreeMap::new();
    for &(v, c) in a {
        classes.entry(c).or_default().0.push(v);
    }
    for &(v, c) in b {
        classes.entry(c).or_default().1.push(v);
    }
    let cutoff = colored_cutoff(u, t, delta, omega);
    let mut exact = true;
    for (color, (ac, bc)) in classes {
        if ac.is_empty() || bc.is_empty() {
            continue;
        }
        let size = ac.len() + bc.len();
        if size as f64 > cutoff {
            let dense = |vals: &[i64]| {
                let mut v = vec![0u64; *vals.iter().max().unwrap() as usize + 1];
                for &x in vals {
                    v[x as usize] += 1;
                }
                v
            };
            for (z, c) in convolve_exact(&dense(&ac), &dense(&bc))?.into_iter().enumerate() {
                if c > 0 {
                    *out.entry(z as i64).or_default() += c;
                }
            }
        } else {
            let mut child = fork(rng, color as u64);
            let tc = t.min(ac.len().max(bc.len()) as u64);
            exact &= three_sum_core(&ac, &bc, delta, tc, omega, &mut child, 0, out)?;
        }
    }
    Ok(exact)
}

/// Half-open interval `[start, end)` of one color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ColoredInterval {
    pub start: u64,
    pub end: u64,
    pub color: u32,
}

/// A colored subset of `[n]` given as disjoint monochromatic intervals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalColoredSet {
    intervals: Vec<ColoredInterval>,
    n: u64,
}

impl IntervalColoredSet {
    pub fn new(mut intervals: Vec<ColoredInterval>, n: u64) -> Result<Self> {
        intervals.sort_unstable();
        for iv in &intervals {
            if iv.start >= iv.end || iv.end > n {
                return Err(TphdError::InvalidInstance(format!(
                    "interval [{}, {}) is empty or leaves [0, {n})",
                    iv.start, iv.end
                )));
            }
        }
        if let Some(w) = intervals.windows(2).find(|w| w[0].end > w[1].start) {
            return Err(TphdError::InvalidInstance(format!(
                "intervals [{}, {}) and [{}, {}) overlap",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
        Ok(Self { intervals, n })
    }

    /// Maximal runs of equal characters, each colored by its character.
    pub fn from_runs(chars: &[u32]) -> Self {
        let mut intervals = Vec::new();
        let mut start = 0;
        for i in 1..=chars.len() {
            if i == chars.len() || chars[i] != chars[start] {
                intervals.push(ColoredInterval {
                    start: start as u64,
                    end: i as u64,
                    color: chars[start],
                });
                start = i;
            }
        }
        Self {
            intervals,
            n: chars.len() as u64,
        }
    }

    /// Expands every interval into its points.
    pub fn points(&self) -> Vec<(i64, u32)> {
        self.intervals
            .iter()
            .flat_map(|iv| (iv.start..iv.end).map(move |p| (p as i64, iv.color)))
            .collect()
    }

    pub fn intervals(&self) -> &[ColoredInterval] {
        &self.intervals
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Aligned power-of-two pieces of length at most `cap`, as `(start, length, color)`.
    pub fn dyadic_pieces(&self, cap: u64) -> Vec<(u64, u64, u32)> {
        let cap = pow2_floor_u64(cap.max(1));
        let mut out = Vec::new();
        for iv in &self.intervals {
            let mut pos = iv.start;
            while pos < iv.end {
                let mut size = if pos == 0 { cap } else { (1u64 << pos.trailing_zeros()).min(cap) };
                while pos + size > iv.end {
                    size /= 2;
                }
                out.push((pos, size, iv.color));
                pos += size;
            }
        }
        out
    }
}

/// Settings shared by the interval estimator and the matchers built on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub omega: f64,
    /// Independent repetitions whose median is reported; `None` means
    /// `8 * ceil(log2 n)`.
    pub repetitions: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            omega: DEFAULT_OMEGA,
            repetitions: None,
        }
    }
}

impl EstimatorConfig {
    pub fn repetitions_for(&self, n: u64) -> usize {
        self.repetitions
            .unwrap_or_else(|| 8 * (n.max(2) as f64).log2().ceil() as usize)
            .max(1)
    }
}

/// Estimates `COUNT[z]` for `z` in `[2n - 1]` with additive error about
/// `eps * k` with high probability. Uses the default configuration.
pub fn estimate_interval_counts<R: Rng + ?Sized>(
    a: &IntervalColoredSet,
    b: &IntervalColoredSet,
    k: u64,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    estimate_interval_counts_with(a, b, k, eps, &EstimatorConfig::default(), rng)
}

pub fn estimate_interval_counts_with<R: Rng + ?Sized>(
    a: &IntervalColoredSet,
    b: &IntervalColoredSet,
    k: u64,
    eps: f64,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if k == 0 {
        return Err(TphdError::InvalidParameter("k must be positive".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(TphdError::InvalidParameter(format!("eps = {eps} must lie in (0, 1]")));
    }
    let n = a.n.max(b.n).max(1);
    let out_len = (2 * n - 1) as usize;
    let cap = pow2_floor_u64((n / k).max(1));
    let group = |s: &IntervalColoredSet| {
        let mut g: BTreeMap<u64, Vec<(i64, u32)>> = BTreeMap::new();
        for (start, len, color) in s.dyadic_pieces(cap) {
            g.entry(len).or_default().push((start as i64, color));
        }
        g
    };
    let (ga, gb) = (group(a), group(b));
    let reps = cfg.repetitions_for(n);
    let mut runs: Vec<Vec<u64>> = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut d2 = vec![0i64; out_len + 2 * cap as usize + 2];
        let mut exact = true;
        for (&la, pa) in &ga {
            for (&lb, pb) in &gb {
                // The side with longer pieces plays the divisible role.
                let (long, short, big, small) = if la >= lb { (la, lb, pa, pb) } else { (lb, la, pb, pa) };
                let scale = |p: &[(i64, u32)]| p.iter().map(|&(s, c)| (s / short as i64, c)).collect::<Vec<_>>();
                let delta = long / short;
                let t = ((eps * eps * k as f64) / (long * short) as f64).floor().max(1.0) as u64;
                let u = n.div_ceil(short).next_power_of_two();
                let mut est = HashMap::new();
                exact &= colored_core(&scale(big), &scale(small), u, delta, t, cfg.omega, rng, &mut est)?;
                // Spreading each endpoint estimate over the trapezoid
                // w(i) = min(i + 1, short, long + short - i - 1) through its
                // second difference.
                for (zp, v) in est {
                    let base = zp as usize * short as usize;
                    let v = v as i64;
                    d2[base] += v;
                    d2[base + short as usize] -= v;
                    d2[base + long as usize] -= v;
                    d2[base + (long + short) as usize] += v;
                }
            }
        }
        let mut slope = 0i64;
        let mut level = 0i64;
        let counts: Vec<u64> = d2[..out_len]
            .iter()
            .map(|&x| {
                slope += x;
                level += slope;
                level.max(0) as u64
            })
            .collect();
        runs.push(counts);
        if exact {
            return Ok(runs.pop().expect("one run"));
        }
    }
    let mut column = vec![0u64; runs.len()];
    Ok((0..out_len)
        .map(|z| {
            for (slot, run) in column.iter_mut().zip(&runs) {
                *slot = run[z];
            }
            column.sort_unstable();
            column[(column.len() - 1) / 2]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle_oracle(a: &IntMatrix, b: &IntMatrix) -> HashMap<TriangleKey, u64> {
        let mut m = HashMap::new();
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                for k in 0..a.cols() {
                    *m.entry((i, j, a.get(i, k) + b.get(k, j))).or_default() += 1;
                }
            }
        }
        m
    }

    fn conv_oracle(a: &[i64], b: &[i64]) -> HashMap<ConvKey, u64> {
        let mut m = HashMap::new();
        for h in 0..a.len() {
            for k in 0..h {
                *m.entry((h, a[k] + b[h - k])).or_default() += 1;
            }
        }
        m
    }

    fn sum_oracle(a: &[i64], b: &[i64]) -> HashMap<i64, u64> {
        let mut m = HashMap::new();
        for &x in a {
            for &y in b {
                *m.entry(x + y).or_default() += 1;
            }
        }
        m
    }

    fn assert_matches<K: Ord + Copy + Hash + std::fmt::Debug>(est: &EstimateArray<K>, oracle: &HashMap<K, u64>) {
        let want: BTreeMap<K, u64> = oracle.iter().map(|(&k, &v)| (k, v)).collect();
        assert_eq!(est.entries, want);
    }

    #[test]
    fn rate_sample_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(rate_sample(5, 1, &mut rng), vec![0, 1, 2, 3, 4]);
        let total: usize = (0..2000).map(|_| rate_sample(100, 4, &mut rng).len()).sum();
        let mean = total as f64 / 2000.0;
        assert!((mean - 25.0).abs() < 0.6, "mean {mean}");
    }

    #[test]
    fn triangle_small_examples() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = IntMatrix::from_rows(&[vec![0]]).unwrap();
            let est = estimate_triangle_counts(&a, &a, 1, 1, 1, &mut rng).unwrap();
            assert_eq!(est.get(&(0, 0, 0)), 1);
            let a = IntMatrix::from_rows(&[vec![0, 2]]).unwrap();
            let b = IntMatrix::from_rows(&[vec![0], vec![-2]]).unwrap();
            let est = estimate_triangle_counts(&a, &b, 1, 1, 1, &mut rng).unwrap();
            assert_eq!(est.get(&(0, 0, 0)), 2);
            assert_eq!(est.len(), 1);
        }
    }

    #[test]
    fn triangle_rate_one_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let a = IntMatrix::new(7, 40, (0..280).map(|_| rng.gen_range(0..6) * 3).collect()).unwrap();
            let b = IntMatrix::new(40, 9, (0..360).map(|_| rng.gen_range(-5..5)).collect()).unwrap();
            let est = estimate_triangle_counts(&a, &b, 3, 1, 1, &mut rng).unwrap();
            assert!(est.exact);
            assert_matches(&est, &triangle_oracle(&a, &b));
        }
    }

    #[test]
    fn triangle_rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = IntMatrix::from_rows(&[vec![1, 2]]).unwrap();
        let b = IntMatrix::from_rows(&[vec![0], vec![0]]).unwrap();
        assert!(matches!(
            estimate_triangle_counts(&a, &b, 2, 1, 1, &mut rng),
            Err(TphdError::Precondition(_))
        ));
        assert!(estimate_triangle_counts(&a, &b, 1, 3, 1, &mut rng).is_err());
        assert!(estimate_triangle_counts(&a, &b, 1, 1, 3, &mut rng).is_err());
        assert!(estimate_triangle_counts(&a, &a, 1, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn triangle_mean_tracks_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = IntMatrix::new(3, 16, (0..48).map(|_| rng.gen_range(0..3) * 2).collect()).unwrap();
        let b = IntMatrix::new(16, 3, (0..48).map(|_| rng.gen_range(0..3)).collect()).unwrap();
        let truth = triangle_oracle(&a, &b);
        let trials = 4000;
        let mut sums: HashMap<TriangleKey, f64> = HashMap::new();
        for seed in 0..trials {
            let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
            for (k, &v) in estimate_triangle_counts(&a, &b, 2, 4, 2, &mut r).unwrap().iter() {
                *sums.entry(*k).or_default() += v as f64;
            }
        }
        for (k, &c) in &truth {
            let mean = sums.get(k).copied().unwrap_or(0.0) / trials as f64;
            // Variance is at most s * t * count = 8 * count.
            let se = (8.0 * c as f64 / trials as f64).sqrt();
            assert!((mean - c as f64).abs() <= 5.0 * se + 1e-9, "{k:?}: mean {mean} vs {c}");
        }
        assert!(sums.keys().all(|k| truth.contains_key(k)));
    }

    #[test]
    fn conv3sum_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let est = estimate_conv3sum(&[1, 1], &[1, 1], 1, 1, &mut rng).unwrap();
        assert_eq!(est.entries.into_iter().collect::<Vec<_>>(), vec![((1, 2), 1)]);
        assert!(estimate_conv3sum(&[0], &[0], 1, 1, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn conv3sum_rate_one_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [5usize, 17, 64] {
            let a: Vec<i64> = (0..n).map(|_| rng.gen_range(0..8) * 2).collect();
            let b: Vec<i64> = (0..n).map(|_| rng.gen_range(0..8)).collect();
            let est = estimate_conv3sum(&a, &b, 2, 1, &mut rng).unwrap();
            assert_matches(&est, &conv_oracle(&a, &b));
        }
    }

    #[test]
    fn three_sum_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let est = estimate_3sum(&[0], &[0], 1, 1, &mut rng).unwrap();
        assert_eq!(est.get(&0), 1);
        let est = estimate_3sum(&[0, 1], &[0, 1], 1, 1, &mut rng).unwrap();
        assert_eq!(est.entries.into_iter().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 1)]);
    }

    #[test]
    fn three_sum_rate_one_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let a: Vec<i64> = (0..64).map(|_| rng.gen_range(0..1 << 20) * 4).collect();
            let b: Vec<i64> = (0..64).map(|_| rng.gen_range(-(1 << 20)..1 << 20)).collect();
            let est = estimate_3sum(&a, &b, 4, 1, &mut rng).unwrap();
            assert_matches(&est, &sum_oracle(&a, &b));
        }
        let dup = vec![5i64; 40];
        let est = estimate_3sum(&dup, &dup, 1, 1, &mut rng).unwrap();
        assert_eq!(est.get(&10), 1600);
    }

    #[test]
    fn colored_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = ColoredSet::new(vec![(0, 1)], 4).unwrap();
        let b = ColoredSet::new(vec![(0, 1)], 4).unwrap();
        assert_eq!(estimate_colored_3sum(&a, &b, 1, 1, &mut rng).unwrap().get(&0), 1);
        let c = ColoredSet::new(vec![(0, 2)], 4).unwrap();
        assert!(estimate_colored_3sum(&a, &c, 1, 1, &mut rng).unwrap().is_empty());
        assert!(ColoredSet::new(vec![(4, 0)], 4).is_err());
    }

    #[test]
    fn colored_rate_one_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a: Vec<(i64, u32)> = (0..128).map(|_| (rng.gen_range(0..512), rng.gen_range(0..5))).collect();
        let b: Vec<(i64, u32)> = (0..128).map(|_| (rng.gen_range(0..512), rng.gen_range(0..5))).collect();
        let est = estimate_colored_3sum(
            &ColoredSet::new(a.clone(), 512).unwrap(),
            &ColoredSet::new(b.clone(), 512).unwrap(),
            1,
            1,
            &mut rng,
        )
        .unwrap();
        let mut want = HashMap::new();
        for &(x, cx) in &a {
            for &(y, cy) in &b {
                if cx == cy {
                    *want.entry(x + y).or_default() += 1u64;
                }
            }
        }
        assert_matches(&est, &want);
    }

    #[test]
    fn intervals_validate() {
        let iv = |s, e, c| ColoredInterval {
            start: s,
            end: e,
            color: c,
        };
        assert!(IntervalColoredSet::new(vec![iv(0, 3, 0), iv(2, 4, 1)], 8).is_err());
        assert!(IntervalColoredSet::new(vec![iv(0, 9, 0)], 8).is_err());
        assert!(IntervalColoredSet::new(vec![iv(2, 2, 0)], 8).is_err());
        let s = IntervalColoredSet::from_runs(&[1, 1, 2, 2, 2, 1]);
        assert_eq!(s.len(), 3);
        assert_eq!(s.points().len(), 6);
    }

    #[test]
    fn dyadic_pieces_cover() {
        let s = IntervalColoredSet::new(
            vec![ColoredInterval {
                start: 3,
                end: 29,
                color: 4,
            }],
            32,
        )
        .unwrap();
        let pieces = s.dyadic_pieces(8);
        let mut covered = Vec::new();
        for &(start, len, color) in &pieces {
            assert!(len.is_power_of_two() && len <= 8 && start % len == 0 && color == 4);
            covered.extend(start..start + len);
        }
        assert_eq!(covered, (3..29).collect::<Vec<_>>());
    }

    #[test]
    fn interval_single_run_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = IntervalColoredSet::new(
            vec![ColoredInterval {
                start: 0,
                end: 4,
                color: 7,
            }],
            4,
        )
        .unwrap();
        let est = estimate_interval_counts(&a, &a, 1, 0.5, &mut rng).unwrap();
        assert_eq!(est, vec![1, 2, 3, 4, 3, 2, 1]);
        let b = IntervalColoredSet::new(
            vec![ColoredInterval {
                start: 0,
                end: 4,
                color: 8,
            }],
            4,
        )
        .unwrap();
        assert!(estimate_interval_counts(&a, &b, 1, 0.5, &mut rng).unwrap().iter().all(|&v| v == 0));
    }
}
