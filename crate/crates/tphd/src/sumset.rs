//! Sumset counting: `COUNT[z] = |{(x, y) in X x Y : x + y = z}|` for
//! multisets `X, Y` of integers in `[U/2]`.
//!
//! Three algorithms are provided.
//!
//! * [`sumset_counts_naive`] is the double-loop oracle.
//! * [`sumset_counts`] is the Las Vegas algorithm. When `2U >= |X||Y|` it is a
//!   plain exact convolution. Otherwise a first level hashes both sets with an
//!   almost-linear hash `f` into `[L]`, recursively counts the hashed sumset,
//!   and uses it to bound every count from above. Elements whose bound is
//!   below a prime `p` are read off a convolution modulo `p`. The remaining
//!   heavy elements are handed to [`sumset_counts_partial`].
//! * [`sumset_counts_det`] is deterministic. It obtains counts modulo `p`,
//!   finds the few positions where the true count may reach `p` by recursing on
//!   the sets folded to half the universe, and repairs those positions with
//!   [`sparse_conv_minus_c`].
//!
//! Multisets are handled as `(value, weight)` lists throughout; hashing merges
//! equal images and weights multiply in every convolution.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::Rng;

use crate::convolution::{convolve_exact, convolve_mod_p, find_prime, next_prime, PrimeWitness};
use crate::error::{Result, TphdError};
use crate::hashing::{sample_linear_hash, sample_predictable_hash, Label, LinearHash, MAX_UNIVERSE_LOG};

/// Universes at or below this size are always solved by exact convolution.
const LV_BASE_UNIVERSE: u64 = 64;
/// Smallest range the first level may hash into.
const MIN_FIRST_LEVEL_RANGE: u64 = 64;
/// Failed trials tolerated before an acceptance bound is doubled.
const RETRY_CAP: usize = 20;
/// Levels of the partial recursion before falling back to exact convolution.
const MAX_PARTIAL_DEPTH: usize = 40;
/// Nesting of hashed sub-instances before falling back to exact convolution.
const MAX_NESTING: usize = 24;
/// Universes at or below this size end the deterministic recursion.
pub const DET_BASE_UNIVERSE: u64 = 1024;

/// A multiset of integers declared to live in the universe `[U]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerMultiSet {
    elements: Vec<u64>,
    universe: u64,
}

impl IntegerMultiSet {
    /// `universe` must be a power of two no larger than `2^48`.
    pub fn new(elements: Vec<u64>, universe: u64) -> Result<Self> {
        if universe == 0 || !universe.is_power_of_two() || universe.trailing_zeros() > MAX_UNIVERSE_LOG {
            return Err(TphdError::InvalidParameter(format!(
                "universe {universe} must be a power of two <= 2^48"
            )));
        }
        if let Some(&v) = elements.iter().find(|&&v| v >= universe) {
            return Err(TphdError::Domain { value: v, bound: universe });
        }
        Ok(Self { elements, universe })
    }

    pub fn elements(&self) -> &[u64] {
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

    fn check_half(&self) -> Result<()> {
        let half = self.universe / 2;
        match self.elements.iter().find(|&&v| v >= half) {
            Some(&v) => Err(TphdError::Domain {
                value: v,
                bound: half.max(1),
            }),
            None => Ok(()),
        }
    }
}

/// Counts indexed by `z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountArray {
    pub counts: Vec<u64>,
}

impl CountArray {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `(value, multiplicity)` pairs sorted by value with distinct values.
pub type Weighted = Vec<(u64, u64)>;

pub fn to_weighted(values: impl IntoIterator<Item = u64>) -> Weighted {
    merge_weighted(values.into_iter().map(|v| (v, 1)).collect())
}

fn merge_weighted(mut items: Vec<(u64, u64)>) -> Weighted {
    items.sort_unstable_by_key(|&(v, _)| v);
    let mut out: Weighted = Vec::with_capacity(items.len());
    for (v, w) in items {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += w,
            _ => out.push((v, w)),
        }
    }
    out
}

fn total_weight(s: &[(u64, u64)]) -> u64 {
    s.iter().map(|&(_, w)| w).sum()
}

fn dense(s: &[(u64, u64)], len: usize) -> Vec<u64> {
    let mut out = vec![0u64; len.max(1)];
    for &(v, w) in s {
        out[v as usize] += w;
    }
    out
}

/// Exact counts over `[u]` by one convolution.
fn exact_weighted(x: &[(u64, u64)], y: &[(u64, u64)], u: u64) -> Result<Vec<u64>> {
    let mut out = vec![0u64; u as usize];
    if x.is_empty() || y.is_empty() {
        return Ok(out);
    }
    let lx = x.last().map_or(0, |&(v, _)| v) as usize + 1;
    let ly = y.last().map_or(0, |&(v, _)| v) as usize + 1;
    let conv = convolve_exact(&dense(x, lx), &dense(y, ly))?;
    for (z, c) in conv.into_iter().enumerate().take(u as usize) {
        out[z] = c;
    }
    Ok(out)
}

/// Double loop over `X x Y`. The output covers `[U]` and any larger sums.
pub fn sumset_counts_naive(x: &IntegerMultiSet, y: &IntegerMultiSet) -> CountArray {
    let max_sum = x.elements.iter().max().copied().unwrap_or(0) + y.elements.iter().max().copied().unwrap_or(0);
    let len = (x.universe.max(y.universe)).max(max_sum + 1) as usize;
    let mut counts = vec![0u64; len];
    for &a in &x.elements {
        for &b in &y.elements {
            counts[(a + b) as usize] += 1;
        }
    }
    CountArray { counts }
}

fn validate_pair(x: &IntegerMultiSet, y: &IntegerMultiSet) -> Result<u64> {
    if x.universe != y.universe {
        return Err(TphdError::InvalidParameter(format!(
            "universe mismatch: {} vs {}",
            x.universe, y.universe
        )));
    }
    x.check_half()?;
    y.check_half()?;
    let mass = (x.len() as u128) * (y.len() as u128);
    if mass >= 1u128 << 63 {
        return Err(TphdError::Overflow(format!("|X||Y| = {mass} is not below 2^63")));
    }
    Ok(x.universe)
}

/// Work accounting and the random source shared by one Las Vegas run.
struct Ctx<'r, R: Rng + ?Sized> {
    rng: &'r mut R,
    work: u64,
    limit: Option<u64>,
}

impl<R: Rng + ?Sized> Ctx<'_, R> {
    fn charge(&mut self, units: u64) -> Result<()> {
        self.work = self.work.saturating_add(units);
        match self.limit {
            Some(budget) if self.work > budget => Err(TphdError::BudgetExceeded { budget }),
            _ => Ok(()),
        }
    }
}

/// Exact counts by the Las Vegas algorithm.
pub fn sumset_counts<R: Rng + ?Sized>(x: &IntegerMultiSet, y: &IntegerMultiSet, rng: &mut R) -> Result<CountArray> {
    let u = validate_pair(x, y)?;
    let mut ctx = Ctx { rng, work: 0, limit: None };
    let counts = las_vegas(
        &to_weighted(x.elements.iter().copied()),
        &to_weighted(y.elements.iter().copied()),
        u,
        &mut ctx,
        0,
    )?;
    Ok(CountArray { counts })
}

/// As [`sumset_counts`] on weighted multisets.
pub fn sumset_counts_weighted<R: Rng + ?Sized>(x: &[(u64, u64)], y: &[(u64, u64)], u: u64, rng: &mut R) -> Result<CountArray> {
    let mut ctx = Ctx { rng, work: 0, limit: None };
    validate_weighted(x, y, u)?;
    Ok(CountArray {
        counts: las_vegas(x, y, u, &mut ctx, 0)?,
    })
}

fn validate_weighted(x: &[(u64, u64)], y: &[(u64, u64)], u: u64) -> Result<()> {
    if u < 2 || !u.is_power_of_two() || u.trailing_zeros() > MAX_UNIVERSE_LOG {
        return Err(TphdError::InvalidParameter(format!(
            "universe {u} must be a power of two in [2, 2^48]"
        )));
    }
    if let Some(&(v, _)) = x.iter().chain(y).find(|&&(v, _)| v >= u / 2) {
        return Err(TphdError::Domain { value: v, bound: u / 2 });
    }
    Ok(())
}

/// Expected work of one Las Vegas call in the units charged internally.
/// Fitted to measured runs: linear in `U` plus a fixed overhead from the
/// small recursive levels.
pub fn expected_work(nx: u64, ny: u64, u: u64) -> u64 {
    4 * u + 16 * (nx + ny) + 32_768
}

/// Las Vegas run that stops with [`TphdError::BudgetExceeded`] once its
/// accounted work passes `budget`. On success also returns the work spent.
pub fn sumset_counts_budgeted<R: Rng + ?Sized>(
    x: &[(u64, u64)],
    y: &[(u64, u64)],
    u: u64,
    rng: &mut R,
    budget: u64,
) -> Result<(CountArray, u64)> {
    validate_weighted(x, y, u)?;
    let mut ctx = Ctx {
        rng,
        work: 0,
        limit: Some(budget),
    };
    let counts = las_vegas(x, y, u, &mut ctx, 0)?;
    Ok((CountArray { counts }, ctx.work))
}

fn pow2_floor(v: f64) -> u64 {
    if v < 1.0 {
        1
    } else {
        1u64 << (v.log2().floor() as u32).min(62)
    }
}

fn pow2_ceil(v: u64) -> u64 {
    v.max(1).next_power_of_two()
}

/// Counts of `f(X) + f(Y)` and the error-set lookup turned into an upper bound
/// `COUNT_f[z] = sum over delta of c_f[f(z) + delta]`.
struct HashedBound {
    f: LinearHash,
    c_f: Vec<u64>,
}

impl HashedBound {
    fn bound(&self, z: u64) -> u64 {
        let base = self.f.hash(z) as i64;
        self.f
            .error_set()
            .elements()
            .iter()
            .filter_map(|&d| {
                let k = base + d;
                (k >= 0 && (k as usize) < self.c_f.len()).then(|| self.c_f[k as usize])
            })
            .sum()
    }
}

fn hashed_bound<R: Rng + ?Sized>(
    x: &[(u64, u64)],
    y: &[(u64, u64)],
    u: u64,
    l: u64,
    ctx: &mut Ctx<'_, R>,
    nesting: usize,
) -> Result<HashedBound> {
    let f = sample_linear_hash(u, l, ctx.rng)?;
    let fx = merge_weighted(x.iter().map(|&(v, w)| (f.hash(v), w)).collect());
    let fy = merge_weighted(y.iter().map(|&(v, w)| (f.hash(v), w)).collect());
    ctx.charge((x.len() + y.len()) as u64)?;
    let c_f = las_vegas(&fx, &fy, 2 * l, ctx, nesting + 1)?;
    Ok(HashedBound { f, c_f })
}

fn las_vegas<R: Rng + ?Sized>(x: &[(u64, u64)], y: &[(u64, u64)], u: u64, ctx: &mut Ctx<'_, R>, nesting: usize) -> Result<Vec<u64>> {
    let (nx, ny) = (total_weight(x), total_weight(y));
    let n2 = nx as u128 * ny as u128;
    if nx == 0 || ny == 0 || 2 * u as u128 >= n2 || u <= LV_BASE_UNIVERSE || nesting > MAX_NESTING {
        ctx.charge(2 * u)?;
        return exact_weighted(x, y, u);
    }
    let n2f = n2 as f64;
    // First level: r1 = (n^2/U)^8, capped so that L = U / r1 stays >= 64.
    let ratio = n2f / u as f64;
    let r1 = pow2_floor(ratio.powi(8).min((u / MIN_FIRST_LEVEL_RANGE) as f64)).max(2);
    let l = u / r1;
    let s = r1 as f64;
    let threshold = (2.0 * s * n2f / l as f64).ceil() as u64;
    let mut accept = (2.0 * (l as f64 + 8.0 * u as f64) / s) as usize + 1;
    let mut failures = 0;
    let heavy = loop {
        let hb = hashed_bound(x, y, u, l, ctx, nesting)?;
        ctx.charge(u)?;
        let heavy: Vec<u64> = (0..u).filter(|&z| hb.bound(z) >= threshold).collect();
        if heavy.len() <= accept {
            break heavy;
        }
        failures += 1;
        if failures >= RETRY_CAP {
            accept *= 2;
            failures = 0;
        }
    };
    let p = find_prime(threshold.max(2), 2 * threshold.max(2))?;
    let half = (u / 2) as usize;
    let ax: Vec<u64> = dense(x, half).into_iter().map(|w| w % p.value()).collect();
    let ay: Vec<u64> = dense(y, half).into_iter().map(|w| w % p.value()).collect();
    ctx.charge(2 * u)?;
    let conv = convolve_mod_p(&ax, &ay, p)?;
    let mut known = vec![0u64; u as usize];
    for (z, c) in conv.into_iter().enumerate().take(u as usize) {
        known[z] = c;
    }
    partial_levels(x, y, u, heavy, &mut known, ctx, nesting)?;
    Ok(known)
}

/// Per-level parameters of the partial recursion for `M` live elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelParams {
    /// `U / M`.
    pub r: f64,
    /// Range of the light/heavy hash, `U / r^{3/2}` clamped to `[2, U/4]`.
    pub l: u64,
    /// `sqrt(r)`, at least 1.
    pub s: u64,
    /// `sqrt(r)`, at least 1.
    pub t: u64,
    /// `max(2, r^{1/8})` as a power of two.
    pub q: u64,
    /// Range of the isolating hash, `t * M` as a power of two.
    pub v: u64,
}

impl LevelParams {
    pub fn new(u: u64, m: usize) -> Self {
        let r = (u as f64 / m.max(1) as f64).max(1.0);
        let l = pow2_floor(u as f64 / r.powf(1.5)).clamp(2, (u / 4).max(2));
        let s = r.sqrt().floor().max(1.0) as u64;
        let t = s;
        let q = pow2_floor(r.powf(0.125)).max(2);
        let v = pow2_ceil(t * m as u64).clamp(q, u.max(q));
        Self { r, l, s, t, q, v }
    }
}

/// State of a partial instance: counts are known for every `z` outside
/// `live` and must be found for every `z` in `live`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialState {
    pub universe: u64,
    pub live: Vec<u64>,
    pub known: Vec<u64>,
}

impl PartialState {
    /// `known` must have length `universe`; entries at live positions are ignored.
    pub fn new(universe: u64, mut live: Vec<u64>, known: Vec<u64>) -> Result<Self> {
        if known.len() as u64 != universe {
            return Err(TphdError::InvalidParameter(format!(
                "known table has {} entries, expected {universe}",
                known.len()
            )));
        }
        live.sort_unstable();
        live.dedup();
        if let Some(&z) = live.iter().find(|&&z| z >= universe) {
            return Err(TphdError::Domain { value: z, bound: universe });
        }
        Ok(Self { universe, live, known })
    }
}

/// Fills in the counts of every live element. Returns them as `(z, count)`
/// pairs and also writes them into `state.known`; afterwards `live` is empty.
pub fn sumset_counts_partial<R: Rng + ?Sized>(
    x: &IntegerMultiSet,
    y: &IntegerMultiSet,
    state: &mut PartialState,
    rng: &mut R,
) -> Result<Vec<(u64, u64)>> {
    let u = validate_pair(x, y)?;
    if u != state.universe {
        return Err(TphdError::InvalidParameter("state universe differs from the sets' universe".into()));
    }
    let wx = to_weighted(x.elements.iter().copied());
    let wy = to_weighted(y.elements.iter().copied());
    let live = std::mem::take(&mut state.live);
    let mut ctx = Ctx { rng, work: 0, limit: None };
    partial_levels(&wx, &wy, u, live.clone(), &mut state.known, &mut ctx, 0)?;
    Ok(live.into_iter().map(|z| (z, state.known[z as usize])).collect())
}

fn direct_counts(x: &[(u64, u64)], y: &[(u64, u64)], live: &[u64], known: &mut [u64]) {
    let (small, big) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let lookup: HashMap<u64, u64> = big.iter().copied().collect();
    for &z in live {
        known[z as usize] = small
            .iter()
            .filter(|&&(v, _)| v <= z)
            .map(|&(v, w)| w * lookup.get(&(z - v)).copied().unwrap_or(0))
            .sum();
    }
}

#[allow(clippy::too_many_arguments)]
fn partial_levels<R: Rng + ?Sized>(
    x: &[(u64, u64)],
    y: &[(u64, u64)],
    u: u64,
    mut live: Vec<u64>,
    known: &mut [u64],
    ctx: &mut Ctx<'_, R>,
    nesting: usize,
) -> Result<()> {
    let n2 = total_weight(x) as f64 * total_weight(y) as f64;
    let narrow = x.len().min(y.len()).max(1) as u64;
    let mut depth = 0;
    while !live.is_empty() {
        let m = live.len();
        if depth >= MAX_PARTIAL_DEPTH {
            ctx.charge(2 * u)?;
            let all = exact_weighted(x, y, u)?;
            for &z in &live {
                known[z as usize] = all[z as usize];
            }
            return Ok(());
        }
        if (m as u64).saturating_mul(narrow) <= u {
            ctx.charge(m as u64 * narrow)?;
            direct_counts(x, y, &live, known);
            return Ok(());
        }
        let prm = LevelParams::new(u, m);
        let is_live = {
            let mut mark = vec![false; u as usize];
            for &z in &live {
                mark[z as usize] = true;
            }
            mark
        };

        // Step 1: light or heavy, judged by the hashed upper bound.
        let threshold = (2.0 * prm.s as f64 * n2 / prm.l as f64).ceil().max(2.0) as u64;
        let mut accept = (2.0 * (prm.l as f64 + 8.0 * m as f64) / prm.s as f64) as usize + 1;
        let mut failures = 0;
        let light = loop {
            let hb = hashed_bound(x, y, u, prm.l, ctx, nesting)?;
            ctx.charge(m as u64)?;
            let light: Vec<bool> = live.iter().map(|&z| hb.bound(z) < threshold).collect();
            let heavy = light.iter().filter(|&&b| !b).count();
            if heavy <= accept {
                break light;
            }
            failures += 1;
            if failures >= RETRY_CAP {
                accept *= 2;
                failures = 0;
            }
        };

        // Step 2: isolated or not under the predictable hash into [tM].
        let mut accept = (4.0 * m as f64 / prm.t as f64) as usize + 1;
        let mut failures = 0;
        let (h, isolated) = loop {
            let h = sample_predictable_hash(u, prm.v, prm.q, ctx.rng)?;
            let mut bucket = vec![0u32; prm.v as usize];
            for &z in &live {
                bucket[h.hash(z) as usize] += 1;
            }
            ctx.charge(prm.v + m as u64)?;
            let isolated: Vec<bool> = live.iter().map(|&z| bucket[h.hash(z) as usize] == 1).collect();
            let crowded = isolated.iter().filter(|&&b| !b).count();
            if crowded <= accept {
                break (h, isolated);
            }
            failures += 1;
            if failures >= RETRY_CAP {
                accept *= 2;
                failures = 0;
            }
        };

        // Step 3: c[k] = c_bad[k] + c_good[k] modulo p, then peel off known counts.
        let p = find_prime(threshold, 2 * threshold)?;
        let pv = p.value();
        let q = prm.q;
        let v = prm.v as usize;
        let groups = |s: &[(u64, u64)]| {
            let mut g: Vec<Vec<(u64, u64, u64)>> = vec![Vec::new(); (q * q) as usize];
            for &(val, w) in s {
                let (hv, lab) = h.hash_label(val);
                g[lab.index(q)].push((hv, val, w));
            }
            g
        };
        let (gx, gy) = (groups(x), groups(y));
        let mut c = vec![0u64; v];
        for (ia, xa) in gx.iter().enumerate().filter(|(_, g)| !g.is_empty()) {
            for (ib, yb) in gy.iter().enumerate().filter(|(_, g)| !g.is_empty()) {
                match h.phi(Label::from_index(ia, q), Label::from_index(ib, q)) {
                    None => {
                        ctx.charge((xa.len() * yb.len()) as u64)?;
                        for &(_, vx, wx) in xa {
                            for &(_, vy, wy) in yb {
                                let k = h.hash(vx + vy) as usize;
                                c[k] = ((c[k] as u128 + wx as u128 * wy as u128) % pv as u128) as u64;
                            }
                        }
                    }
                    Some(delta) => {
                        let mut ax = vec![0u64; v];
                        let mut by = vec![0u64; v];
                        for &(hv, _, w) in xa {
                            ax[hv as usize] = (ax[hv as usize] + w) % pv;
                        }
                        for &(hv, _, w) in yb {
                            by[hv as usize] = (by[hv as usize] + w) % pv;
                        }
                        ctx.charge(2 * v as u64)?;
                        let conv = convolve_mod_p(&ax, &by, p)?;
                        for (j, val) in conv.into_iter().enumerate() {
                            let k = j as i64 - delta;
                            if k >= 0 && (k as usize) < v {
                                c[k as usize] = (c[k as usize] + val) % pv;
                            }
                        }
                    }
                }
            }
        }
        let mut bucket_known = vec![0u64; v];
        ctx.charge(u)?;
        for z in 0..u {
            if !is_live[z as usize] {
                let k = h.hash(z) as usize;
                bucket_known[k] = (bucket_known[k] + known[z as usize] % pv) % pv;
            }
        }
        let mut remaining = Vec::new();
        for (i, &z) in live.iter().enumerate() {
            if light[i] && isolated[i] {
                let k = h.hash(z) as usize;
                known[z as usize] = (c[k] + pv - bucket_known[k]) % pv;
            } else {
                remaining.push(z);
            }
        }

        // Step 4: continue with the heavy and the crowded elements.
        live = remaining;
        depth += 1;
    }
    Ok(())
}

/// Moduli such that every element of `T` is alone in its residue class for
/// at least one of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuliFamily {
    pub moduli: Vec<u64>,
    /// `(x, i)`: no other element of `T` is congruent to `x` modulo `moduli[i]`.
    pub isolation: Vec<(u64, usize)>,
}

impl ModuliFamily {
    /// Rechecks every isolation witness by a direct congruence scan.
    pub fn verify(&self, t: &[u64]) -> bool {
        let mut covered: Vec<u64> = self.isolation.iter().map(|&(x, _)| x).collect();
        covered.sort_unstable();
        let mut want: Vec<u64> = t.to_vec();
        want.sort_unstable();
        want.dedup();
        covered == want
            && self.isolation.iter().all(|&(x, i)| {
                let m = self.moduli[i];
                t.iter().all(|&y| y == x || y % m != x % m)
            })
    }
}

/// Consecutive primes from roughly `|T| log U / log |T|` upward, added until
/// every element of `T` is isolated. Deterministic.
pub fn isolating_moduli(t: &[u64], u: u64) -> ModuliFamily {
    let mut pending: Vec<u64> = t.to_vec();
    pending.sort_unstable();
    pending.dedup();
    let size = pending.len() as f64;
    let log_u = (u.max(2) as f64).log2().ceil();
    let start = if size <= 1.0 {
        2.0
    } else {
        (size * log_u / size.log2().ceil().max(1.0)).ceil()
    };
    let mut moduli = Vec::new();
    let mut isolation = Vec::new();
    let mut candidate = start.max(2.0) as u64;
    while !pending.is_empty() {
        let m = next_prime(candidate);
        candidate = m + 1;
        let mut residues: HashMap<u64, u32> = HashMap::with_capacity(2 * t.len());
        for &y in t {
            *residues.entry(y % m).or_default() += 1;
        }
        let before = pending.len();
        let idx = moduli.len();
        pending.retain(|&x| {
            if residues[&(x % m)] == 1 {
                isolation.push((x, idx));
                false
            } else {
                true
            }
        });
        if pending.len() < before {
            moduli.push(m);
        }
    }
    isolation.sort_unstable();
    ModuliFamily { moduli, isolation }
}

/// `S_m[i] = sum of S[j] over j = i (mod m)`.
pub fn fold(seq: &[u64], m: u64) -> Vec<u64> {
    let mut out = vec![0u64; m as usize];
    for (j, &v) in seq.iter().enumerate() {
        out[j % m as usize] += v;
    }
    out
}

/// `D[i] = (A_m * B_m)[i] + (A_m * B_m)[i + m]`, which equals the fold of
/// `A * B` modulo `m`.
pub fn folded_product(a: &[u64], b: &[u64], m: u64) -> Result<Vec<u64>> {
    let conv = convolve_exact(&fold(a, m), &fold(b, m))?;
    let m = m as usize;
    Ok((0..m).map(|i| conv[i] + conv.get(i + m).copied().unwrap_or(0)).collect())
}

/// Recovers `A * B` given `C` and a superset `T` of the support of
/// `A * B - C`, under the promise that `A * B - C >= 0` everywhere.
///
/// The output has length `|A| + |B| - 1`; `C` may be shorter and is padded
/// with zeros.
pub fn sparse_conv_minus_c(a: &[u64], b: &[u64], c: &[u64], t: &[u64]) -> Result<Vec<u64>> {
    if a.is_empty() || b.is_empty() {
        return Err(TphdError::InvalidParameter("sequences must be non-empty".into()));
    }
    let len = a.len() + b.len() - 1;
    if c.len() > len {
        return Err(TphdError::DimensionMismatch(format!("C has {} entries, A*B has {len}", c.len())));
    }
    if let Some(&x) = t.iter().find(|&&x| x as usize >= len) {
        return Err(TphdError::Domain {
            value: x,
            bound: len as u64,
        });
    }
    let mut out = vec![0u64; len];
    out[..c.len()].copy_from_slice(c);
    if t.is_empty() {
        return Ok(out);
    }
    let family = isolating_moduli(t, len as u64);
    let mut cache: HashMap<usize, (Vec<u64>, Vec<u64>)> = HashMap::new();
    for &(x, i) in &family.isolation {
        let m = family.moduli[i];
        if let Entry::Vacant(e) = cache.entry(i) {
            e.insert((folded_product(a, b, m)?, fold(c, m)));
        }
        let (d, cf) = &cache[&i];
        let r = (x % m) as usize;
        let e = d[r] as i128 - cf[r] as i128;
        if e < 0 {
            return Err(TphdError::PromiseViolated { index: x as usize });
        }
        out[x as usize] += e as u64;
    }
    Ok(out)
}

/// Prime size for the deterministic algorithm:
/// `(n^2 / U) * 2^{sqrt(log n * log log U)}`.
fn det_prime(n2: f64, n: f64, u: u64) -> Result<PrimeWitness> {
    let log_n = n.log2().max(1.0);
    let loglog_u = (u as f64).log2().log2().max(1.0);
    let lo = ((n2 / u as f64) * 2f64.powf((log_n * loglog_u).sqrt())).ceil().max(2.0) as u64;
    find_prime(lo, 2 * lo)
}

/// Exact counts, deterministic and seed-free.
pub fn sumset_counts_det(x: &IntegerMultiSet, y: &IntegerMultiSet) -> Result<CountArray> {
    let u = validate_pair(x, y)?;
    let counts = det_weighted(
        &to_weighted(x.elements.iter().copied()),
        &to_weighted(y.elements.iter().copied()),
        u,
    )?;
    Ok(CountArray { counts })
}

/// As [`sumset_counts_det`] on weighted multisets in `[u/2]`.
pub fn sumset_counts_det_weighted(x: &[(u64, u64)], y: &[(u64, u64)], u: u64) -> Result<CountArray> {
    validate_weighted(x, y, u)?;
    Ok(CountArray {
        counts: det_weighted(x, y, u)?,
    })
}

fn det_weighted(x: &[(u64, u64)], y: &[(u64, u64)], u: u64) -> Result<Vec<u64>> {
    let (nx, ny) = (total_weight(x), total_weight(y));
    let n2 = nx as f64 * ny as f64;
    let n = nx.max(ny) as f64;
    if nx == 0 || ny == 0 || u <= DET_BASE_UNIVERSE || 2.0 * u as f64 >= n2 || n2 >= u as f64 * n.sqrt() {
        return exact_weighted(x, y, u);
    }
    let p = det_prime(n2, n, u)?;
    let pv = p.value();
    let half = (u / 2) as usize;
    let ax = dense(x, half);
    let ay = dense(y, half);
    let am: Vec<u64> = ax.iter().map(|&w| w % pv).collect();
    let bm: Vec<u64> = ay.iter().map(|&w| w % pv).collect();
    let c = convolve_mod_p(&am, &bm, p)?;

    let u2 = u / 2;
    let quarter = u2 / 2;
    let fx = merge_weighted(x.iter().map(|&(v, w)| (v % quarter, w)).collect());
    let fy = merge_weighted(y.iter().map(|&(v, w)| (v % quarter, w)).collect());
    let folded = det_weighted(&fx, &fy, u2)?;
    let mut t = Vec::new();
    for r in 0..quarter {
        let hit = |z: u64| 2 * folded[z as usize] as u128 >= pv as u128;
        if hit(r) || hit(r + quarter) {
            for j in 0..4 {
                let z = r + j * quarter;
                if z < 2 * half as u64 - 1 {
                    t.push(z);
                }
            }
        }
    }
    let full = sparse_conv_minus_c(&ax, &ay, &c, &t)?;
    let mut out = vec![0u64; u as usize];
    for (z, v) in full.into_iter().enumerate().take(u as usize) {
        out[z] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ms(v: &[u64], u: u64) -> IntegerMultiSet {
        IntegerMultiSet::new(v.to_vec(), u).unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, bound: u64) -> Vec<u64> {
        (0..n).map(|_| rng.gen_range(0..bound)).collect()
    }

    fn naive_over(x: &[u64], y: &[u64], u: u64) -> Vec<u64> {
        let mut c = vec![0u64; u as usize];
        for &a in x {
            for &b in y {
                c[(a + b) as usize] += 1;
            }
        }
        c
    }

    #[test]
    fn naive_examples() {
        assert_eq!(sumset_counts_naive(&ms(&[0, 1], 4), &ms(&[0, 1], 4)).counts, vec![1, 2, 1, 0]);
        assert_eq!(sumset_counts_naive(&ms(&[0], 2), &ms(&[0], 2)).counts[0], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_set(&mut rng, 200, 512);
        let y = random_set(&mut rng, 200, 512);
        assert_eq!(sumset_counts_naive(&ms(&x, 1024), &ms(&y, 1024)).total(), 40_000);
    }

    #[test]
    fn las_vegas_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(
            sumset_counts(&ms(&[0, 1], 4), &ms(&[0, 1], 4), &mut rng).unwrap().counts,
            vec![1, 2, 1, 0]
        );
        assert_eq!(sumset_counts(&ms(&[0], 2), &ms(&[0], 2), &mut rng).unwrap().counts, vec![1, 0]);
        assert!(matches!(
            sumset_counts(&ms(&[3], 4), &ms(&[0], 4), &mut rng),
            Err(TphdError::Domain { .. })
        ));
    }

    #[test]
    fn las_vegas_matches_naive_in_sparse_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[64usize, 200, 512] {
            for u in [(n * n / 4) as u64, (n * n / 2) as u64] {
                let u = u.next_power_of_two();
                let x = random_set(&mut rng, n, u / 2);
                let y = random_set(&mut rng, n, u / 2);
                let got = sumset_counts(&ms(&x, u), &ms(&y, u), &mut rng).unwrap();
                assert_eq!(got.counts, naive_over(&x, &y, u), "n={n} u={u}");
            }
        }
    }

    #[test]
    fn las_vegas_handles_skewed_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = 1u64 << 16;
        let x: Vec<u64> = (0..256).map(|i| (i % 16) * 64).chain(random_set(&mut rng, 256, u / 2)).collect();
        let y: Vec<u64> = (0..256).map(|i| (i % 8) * 128).chain(random_set(&mut rng, 256, u / 2)).collect();
        let got = sumset_counts(&ms(&x, u), &ms(&y, u), &mut rng).unwrap();
        assert_eq!(got.counts, naive_over(&x, &y, u));
    }

    #[test]
    fn partial_empty_live() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let known = vec![7u64; 8];
        let mut state = PartialState::new(8, vec![], known.clone()).unwrap();
        let out = sumset_counts_partial(&ms(&[0, 1], 8), &ms(&[1], 8), &mut state, &mut rng).unwrap();
        assert!(out.is_empty());
        assert_eq!(state.known, known);
    }

    #[test]
    fn partial_all_live_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = [0u64, 1, 2, 3];
        let mut state = PartialState::new(8, (0..8).collect(), vec![0; 8]).unwrap();
        sumset_counts_partial(&ms(&x, 8), &ms(&x, 8), &mut state, &mut rng).unwrap();
        assert_eq!(state.known, naive_over(&x, &x, 8));
    }

    #[test]
    fn partial_random_half_live() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = 1u64 << 12;
        for _ in 0..5 {
            let x = random_set(&mut rng, 128, u / 2);
            let y = random_set(&mut rng, 128, u / 2);
            let truth = naive_over(&x, &y, u);
            let live: Vec<u64> = (0..u).filter(|_| rng.gen_bool(0.5)).collect();
            let mut known = truth.clone();
            for &z in &live {
                known[z as usize] = 999;
            }
            let mut state = PartialState::new(u, live.clone(), known).unwrap();
            let out = sumset_counts_partial(&ms(&x, u), &ms(&y, u), &mut state, &mut rng).unwrap();
            for (z, c) in out {
                assert_eq!(c, truth[z as usize]);
            }
            assert_eq!(state.known, truth);
        }
    }

    #[test]
    fn level_params_follow_formulas() {
        let p = LevelParams::new(1 << 20, 1 << 4);
        assert_eq!(p.r, 65536.0);
        assert_eq!(p.s, 256);
        assert_eq!(p.t, 256);
        assert_eq!(p.q, 4);
        assert_eq!(p.l, 2);
        let p = LevelParams::new(1 << 10, 1 << 10);
        assert_eq!((p.s, p.t, p.q), (1, 1, 2));
        assert_eq!(p.l, 1 << 8);
    }

    #[test]
    fn det_examples() {
        assert_eq!(
            sumset_counts_det(&ms(&[0, 1], 4), &ms(&[0, 1], 4)).unwrap().counts,
            vec![1, 2, 1, 0]
        );
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 512;
        let u = (n * n / 4) as u64;
        let x = random_set(&mut rng, n, u / 2);
        let y = random_set(&mut rng, n, u / 2);
        let a = sumset_counts_det(&ms(&x, u), &ms(&y, u)).unwrap();
        let b = sumset_counts_det(&ms(&x, u), &ms(&y, u)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts, naive_over(&x, &y, u));
    }

    #[test]
    fn det_with_heavy_sums() {
        let u = 1u64 << 16;
        let x: Vec<u64> = (0..300).map(|i| (i % 5) * 1000).collect();
        let y: Vec<u64> = (0..300).map(|i| (i * 97) % 30000).collect();
        assert_eq!(sumset_counts_det(&ms(&x, u), &ms(&y, u)).unwrap().counts, naive_over(&x, &y, u));
    }

    #[test]
    fn sparse_conv_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<u64> = random_set(&mut rng, 40, 5);
        let b: Vec<u64> = random_set(&mut rng, 30, 5);
        let ab = convolve_exact(&a, &b).unwrap();
        assert_eq!(sparse_conv_minus_c(&a, &b, &ab, &[]).unwrap(), ab);
        assert_eq!(sparse_conv_minus_c(&[1], &[1], &[0], &[0]).unwrap(), vec![1]);
        let mut c = ab.clone();
        let idx = c.iter().position(|&v| v > 0).unwrap();
        c[idx] -= 1;
        assert_eq!(sparse_conv_minus_c(&a, &b, &c, &[idx as u64]).unwrap(), ab);
        let mut over = ab.clone();
        over[idx] += 1;
        assert!(matches!(
            sparse_conv_minus_c(&a, &b, &over, &[idx as u64]),
            Err(TphdError::PromiseViolated { .. })
        ));
    }

    #[test]
    fn isolating_moduli_examples() {
        let f = isolating_moduli(&[0], 16);
        assert_eq!(f.moduli.len(), 1);
        assert!(f.verify(&[0]));
        let f = isolating_moduli(&[0, 1], 2);
        assert_eq!(f.moduli, vec![2]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let t: Vec<u64> = random_set(&mut rng, 64, 1 << 20);
        let f = isolating_moduli(&t, 1 << 20);
        assert!(f.verify(&t));
        assert_eq!(f, isolating_moduli(&t, 1 << 20));
    }

    #[test]
    fn folding_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_set(&mut rng, 50, 9);
        let b = random_set(&mut rng, 70, 9);
        let ab = convolve_exact(&a, &b).unwrap();
        for m in [1u64, 2, 7, 13, 64, 200] {
            assert_eq!(folded_product(&a, &b, m).unwrap(), fold(&ab, m), "m={m}");
        }
    }

    #[test]
    fn weighted_multisets() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = vec![(3u64, 5u64), (10, 2)];
        let y = vec![(0u64, 7u64), (3, 1)];
        let got = sumset_counts_weighted(&x, &y, 32, &mut rng).unwrap();
        assert_eq!(got.counts[3], 35);
        assert_eq!(got.counts[6], 5);
        assert_eq!(got.counts[10], 14);
        assert_eq!(got.counts[13], 2);
        assert_eq!(got.total(), 7 * 8);
    }

    #[test]
    fn budget_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let u = 1u64 << 12;
        let x = to_weighted(
            (0..1500)
                .map(|_| rng.gen_range(0..u / 2))
                .collect::<std::collections::BTreeSet<_>>(),
        );
        let y = to_weighted(
            (0..1500)
                .map(|_| rng.gen_range(0..u / 2))
                .collect::<std::collections::BTreeSet<_>>(),
        );
        let exact = exact_weighted(&x, &y, u).unwrap();
        let budget = 2 * expected_work(x.len() as u64, y.len() as u64, u);
        let mut within = 0;
        for _ in 0..20 {
            if let Ok((c, w)) = sumset_counts_budgeted(&x, &y, u, &mut rng, budget) {
                assert!(w <= budget);
                assert_eq!(c.counts, exact);
                within += 1;
            }
        }
        assert!(within >= 15, "only {within} of 20 runs fit twice the expected work");
        assert!(matches!(
            sumset_counts_budgeted(&x, &y, u, &mut rng, 10),
            Err(TphdError::BudgetExceeded { budget: 10 })
        ));
    }
}
