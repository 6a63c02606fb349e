//! Exact integer convolution and convolution modulo a prime.
//!
//! All transforms are number-theoretic transforms over three NTT-friendly
//! primes; results that do not fit one prime are rebuilt with the Chinese
//! remainder theorem in 128-bit arithmetic. Convolution uses the standard
//! indexing `c[i] = sum_j a[j] * b[i - j]`.

use crate::error::{Result, TphdError};

/// `(modulus, primitive root)` for the three transform primes. Each supports
/// transforms of length up to `2^23`.
const NTT_PRIMES: [(u64, u64); 3] = [(998_244_353, 3), (167_772_161, 3), (469_762_049, 3)];
const MAX_NTT_LOG: u32 = 23;
const SCHOOLBOOK_CUTOFF: usize = 32;

/// A prime certified by a deterministic primality test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeWitness {
    value: u64,
    lo: u64,
    hi: u64,
}

impl PrimeWitness {
    /// Certifies `p` itself.
    pub fn new(p: u64) -> Result<Self> {
        if is_prime(p) {
            Ok(Self { value: p, lo: p, hi: p })
        } else {
            Err(TphdError::InvalidModulus(p))
        }
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    /// The range the prime was searched in.
    pub fn range(&self) -> (u64, u64) {
        (self.lo, self.hi)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime in `[lo, hi]`.
pub fn find_prime(lo: u64, hi: u64) -> Result<PrimeWitness> {
    if lo < 2 || lo > hi {
        return Err(TphdError::InvalidParameter(format!("prime range [{lo}, {hi}] needs 2 <= lo <= hi")));
    }
    (lo..=hi)
        .find(|&v| is_prime(v))
        .map(|value| PrimeWitness { value, lo, hi })
        .ok_or(TphdError::PrimeNotFound { lo, hi })
}

/// Smallest prime `>= lo`.
pub fn next_prime(lo: u64) -> u64 {
    let mut v = lo.max(2);
    while !is_prime(v) {
        v += 1;
    }
    v
}

fn ntt(a: &mut [u64], invert: bool, modulus: u64, root: u64) {
    let n = a.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j ^= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let mut w = pow_mod(root, (modulus - 1) / len as u64, modulus);
        if invert {
            w = pow_mod(w, modulus - 2, modulus);
        }
        let half = len / 2;
        let mut twiddles = Vec::with_capacity(half);
        let mut cur = 1u64;
        for _ in 0..half {
            twiddles.push(cur);
            cur = cur * w % modulus;
        }
        for chunk in a.chunks_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((x, y), &tw) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let u = *x;
                let v = *y * tw % modulus;
                *x = if u + v >= modulus { u + v - modulus } else { u + v };
                *y = if u >= v { u - v } else { u + modulus - v };
            }
        }
        len <<= 1;
    }
    if invert {
        let inv_n = pow_mod(n as u64, modulus - 2, modulus);
        for x in a.iter_mut() {
            *x = *x * inv_n % modulus;
        }
    }
}

/// Convolution modulo transform prime number `idx`.
fn ntt_convolve(a: &[u64], b: &[u64], idx: usize) -> Vec<u64> {
    let (modulus, root) = NTT_PRIMES[idx];
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    assert!(
        size.trailing_zeros() <= MAX_NTT_LOG,
        "transform length {size} exceeds supported size"
    );
    let mut fa = vec![0u64; size];
    let mut fb = vec![0u64; size];
    for (dst, &v) in fa.iter_mut().zip(a) {
        *dst = v % modulus;
    }
    for (dst, &v) in fb.iter_mut().zip(b) {
        *dst = v % modulus;
    }
    ntt(&mut fa, false, modulus, root);
    ntt(&mut fb, false, modulus, root);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = *x * y % modulus;
    }
    ntt(&mut fa, true, modulus, root);
    fa.truncate(out_len);
    fa
}

fn primes_needed(bound: u128) -> Option<usize> {
    let mut product: u128 = 1;
    for (k, &(p, _)) in NTT_PRIMES.iter().enumerate() {
        product *= p as u128;
        if bound < product {
            return Some(k + 1);
        }
    }
    None
}

/// Exact convolution of non-negative sequences whose true coefficients are all
/// below `bound`, which must be below the product of the transform primes.
fn convolve_wide(a: &[u64], b: &[u64], bound: u128) -> Result<Vec<u128>> {
    let k = primes_needed(bound).ok_or_else(|| TphdError::Overflow(format!("coefficient bound {bound} exceeds the CRT range")))?;
    let size = (a.len() + b.len() - 1).next_power_of_two();
    if size.trailing_zeros() > MAX_NTT_LOG {
        return Err(TphdError::InvalidParameter(format!(
            "transform length {size} exceeds 2^{MAX_NTT_LOG}"
        )));
    }
    let residues: Vec<Vec<u64>> = (0..k).map(|i| ntt_convolve(a, b, i)).collect();
    Ok(crt_combine(&residues))
}

fn crt_combine(residues: &[Vec<u64>]) -> Vec<u128> {
    let len = residues[0].len();
    match residues.len() {
        1 => residues[0].iter().map(|&v| v as u128).collect(),
        2 => {
            let (p1, p2) = (NTT_PRIMES[0].0, NTT_PRIMES[1].0);
            let inv = pow_mod(p1 % p2, p2 - 2, p2);
            (0..len)
                .map(|i| {
                    let (r1, r2) = (residues[0][i], residues[1][i]);
                    let t = mul_mod((r2 + p2 - r1 % p2) % p2, inv, p2);
                    r1 as u128 + t as u128 * p1 as u128
                })
                .collect()
        }
        _ => {
            let (p1, p2, p3) = (NTT_PRIMES[0].0, NTT_PRIMES[1].0, NTT_PRIMES[2].0);
            let inv12 = pow_mod(p1 % p2, p2 - 2, p2);
            let p12_mod3 = mul_mod(p1, p2, p3);
            let inv123 = pow_mod(p12_mod3, p3 - 2, p3);
            (0..len)
                .map(|i| {
                    let (r1, r2, r3) = (residues[0][i], residues[1][i], residues[2][i]);
                    let t1 = mul_mod((r2 + p2 - r1 % p2) % p2, inv12, p2);
                    let x12 = r1 as u128 + t1 as u128 * p1 as u128;
                    let x12_mod3 = (x12 % p3 as u128) as u64;
                    let t2 = mul_mod((r3 + p3 - x12_mod3) % p3, inv123, p3);
                    x12 + t2 as u128 * (p1 as u128 * p2 as u128)
                })
                .collect()
        }
    }
}

fn schoolbook_u128(a: &[u64], b: &[u64]) -> Vec<u128> {
    let mut out = vec![0u128; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x as u128 * y as u128;
        }
    }
    out
}

fn check_nonempty(a: &[u64], b: &[u64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        Err(TphdError::InvalidParameter("convolution operands must be non-empty".into()))
    } else {
        Ok(())
    }
}

/// Exact convolution of non-negative 64-bit sequences.
///
/// Fails with [`TphdError::Overflow`] unless `sum(a) * sum(b) < 2^63`, which
/// bounds every output coefficient.
pub fn convolve_exact(a: &[u64], b: &[u64]) -> Result<Vec<u64>> {
    check_nonempty(a, b)?;
    let sa: u128 = a.iter().map(|&v| v as u128).sum();
    let sb: u128 = b.iter().map(|&v| v as u128).sum();
    let mass = sa.saturating_mul(sb);
    if mass >= 1u128 << 63 {
        return Err(TphdError::Overflow(format!("sum(a) * sum(b) = {mass} is not below 2^63")));
    }
    let wide = if a.len().min(b.len()) <= SCHOOLBOOK_CUTOFF {
        schoolbook_u128(a, b)
    } else {
        let max_a = a.iter().copied().max().unwrap_or(0) as u128;
        let max_b = b.iter().copied().max().unwrap_or(0) as u128;
        let bound = (sa * max_b).min(sb * max_a).min(mass) + 1;
        convolve_wide(a, b, bound)?
    };
    Ok(wide.into_iter().map(|v| v as u64).collect())
}

/// How [`convolve_mod_p_with`] evaluates the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModStrategy {
    /// Packs when the cost model says it pays off.
    Auto,
    /// Packs whenever at least two lanes fit in a transform word.
    Packed,
    /// One coefficient per transform word.
    Plain,
}

/// Lane layout for Kronecker substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackPlan {
    /// Bits per lane.
    pub lane_bits: u32,
    /// Coefficients packed into one transform word.
    pub lanes: usize,
}

/// Bits available for one packed product: the CRT range over all transform
/// primes is just above `2^86`.
const PACK_BUDGET_BITS: u32 = 85;

fn ceil_log2(v: u128) -> u32 {
    if v <= 1 {
        0
    } else {
        128 - (v - 1).leading_zeros()
    }
}

/// Chooses the lane width `ceil(log2(p^2 * max(|a|, |b|))) + 1` and the number
/// of lanes such that a product of two packed words, which spans `2g - 1`
/// lanes, stays inside the CRT range.
pub fn pack_plan(p: u64, len_a: usize, len_b: usize) -> PackPlan {
    let bound = (p as u128) * (p as u128) * (len_a.max(len_b) as u128);
    let lane_bits = ceil_log2(bound) + 1;
    let lanes = if lane_bits > PACK_BUDGET_BITS {
        1
    } else {
        ((PACK_BUDGET_BITS / lane_bits) as usize).div_ceil(2)
    };
    PackPlan {
        lane_bits,
        lanes: lanes.max(1),
    }
}

fn schoolbook_mod(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    schoolbook_u128(a, b).into_iter().map(|v| (v % p as u128) as u64).collect()
}

fn plain_mod(a: &[u64], b: &[u64], p: u64) -> Result<Vec<u64>> {
    let len = a.len().min(b.len()) as u128;
    let bound = len * ((p - 1) as u128) * ((p - 1) as u128) + 1;
    if primes_needed(bound).is_some() {
        return Ok(convolve_wide(a, b, bound)?.into_iter().map(|v| (v % p as u128) as u64).collect());
    }
    // Coefficients too wide for the CRT range: split every entry into a high
    // and a low half and combine the four partial products modulo p.
    let h = (64 - (p - 1).leading_zeros()).div_ceil(2);
    let mask = (1u64 << h) - 1;
    let (a_lo, a_hi): (Vec<u64>, Vec<u64>) = a.iter().map(|&v| (v & mask, v >> h)).unzip();
    let (b_lo, b_hi): (Vec<u64>, Vec<u64>) = b.iter().map(|&v| (v & mask, v >> h)).unzip();
    let half_bound = len * (1u128 << (2 * h)) + 1;
    let pm = p as u128;
    let part = |x: &[u64], y: &[u64]| -> Result<Vec<u128>> { Ok(convolve_wide(x, y, half_bound)?.into_iter().map(|v| v % pm).collect()) };
    let (ll, lh, hl, hh) = (part(&a_lo, &b_lo)?, part(&a_lo, &b_hi)?, part(&a_hi, &b_lo)?, part(&a_hi, &b_hi)?);
    let shift1 = (1u128 << h) % pm;
    let shift2 = shift1 * shift1 % pm;
    Ok((0..ll.len())
        .map(|i| ((ll[i] + (lh[i] + hl[i]) % pm * shift1 + hh[i] * shift2) % pm) as u64)
        .collect())
}

fn packed_mod(a: &[u64], b: &[u64], p: u64, plan: PackPlan) -> Result<Vec<u64>> {
    let g = plan.lanes;
    let w = plan.lane_bits;
    let pack = |s: &[u64]| -> Vec<u128> {
        s.chunks(g)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u128, |acc, (j, &v)| acc | ((v as u128) << (j as u32 * w)))
            })
            .collect()
    };
    let (pa, pb) = (pack(a), pack(b));
    let size = (pa.len() + pb.len() - 1).next_power_of_two();
    if size.trailing_zeros() > MAX_NTT_LOG {
        return Err(TphdError::InvalidParameter(format!(
            "transform length {size} exceeds 2^{MAX_NTT_LOG}"
        )));
    }
    let mut residues = Vec::with_capacity(NTT_PRIMES.len());
    for (idx, &(q, _)) in NTT_PRIMES.iter().enumerate() {
        let ra: Vec<u64> = pa.iter().map(|&v| (v % q as u128) as u64).collect();
        let rb: Vec<u64> = pb.iter().map(|&v| (v % q as u128) as u64).collect();
        residues.push(ntt_convolve(&ra, &rb, idx));
    }
    let products = crt_combine(&residues);
    let out_len = a.len() + b.len() - 1;
    let mut out = vec![0u64; out_len];
    let mask = (1u128 << w) - 1;
    for (k, &word) in products.iter().enumerate() {
        for j in 0..(2 * g - 1) {
            let idx = k * g + j;
            if idx >= out_len {
                break;
            }
            let lane = ((word >> (j as u32 * w)) & mask) as u64 % p;
            let slot = &mut out[idx];
            *slot = (*slot + lane) % p;
        }
    }
    Ok(out)
}

/// `a * b` reduced modulo the prime `p`, choosing the evaluation strategy by
/// a simple cost model.
pub fn convolve_mod_p(a: &[u64], b: &[u64], p: PrimeWitness) -> Result<Vec<u64>> {
    convolve_mod_p_with(a, b, p, ModStrategy::Auto)
}

pub fn convolve_mod_p_with(a: &[u64], b: &[u64], p: PrimeWitness, strategy: ModStrategy) -> Result<Vec<u64>> {
    check_nonempty(a, b)?;
    let pv = p.value();
    if let Some(&v) = a.iter().chain(b).find(|&&v| v >= pv) {
        return Err(TphdError::Domain { value: v, bound: pv });
    }
    if strategy != ModStrategy::Packed && a.len().min(b.len()) <= SCHOOLBOOK_CUTOFF {
        return Ok(schoolbook_mod(a, b, pv));
    }
    let plan = pack_plan(pv, a.len(), b.len());
    let use_packed = match strategy {
        ModStrategy::Plain => false,
        ModStrategy::Packed => plan.lanes >= 2,
        ModStrategy::Auto => {
            let bound = (a.len().min(b.len()) as u128) * ((pv - 1) as u128).pow(2) + 1;
            let plain_primes = primes_needed(bound).unwrap_or(usize::MAX);
            plan.lanes >= 2 && NTT_PRIMES.len() < plain_primes.saturating_mul(plan.lanes)
        }
    };
    if use_packed {
        packed_mod(a, b, pv, plan)
    } else {
        plain_mod(a, b, pv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schoolbook(a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut out = vec![0u64; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                out[i + j] += a[i] * b[j];
            }
        }
        out
    }

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn mod_p_with_wide_prime() {
        let p = find_prime(1 << 40, 1 << 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a: Vec<u64> = (0..3000).map(|_| rng.gen_range(0..p.value())).collect();
        let b: Vec<u64> = (0..2000).map(|_| rng.gen_range(0..p.value())).collect();
        let got = convolve_mod_p_with(&a, &b, p, ModStrategy::Plain).unwrap();
        let pm = p.value() as u128;
        for &k in &[0usize, 1, 1500, 2999, 4998] {
            let mut want = 0u128;
            for i in k.saturating_sub(b.len() - 1)..=k.min(a.len() - 1) {
                want = (want + a[i] as u128 * b[k - i] as u128 % pm) % pm;
            }
            assert_eq!(got[k] as u128, want, "k={k}");
        }
    }

    #[test]
    fn exact_small_examples() {
        assert_eq!(convolve_exact(&[1, 1], &[1, 1]).unwrap(), vec![1, 2, 1]);
        assert_eq!(convolve_exact(&[1], &[4, 5, 6]).unwrap(), vec![4, 5, 6]);
    }

    #[test]
    fn exact_random_matches_schoolbook() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in [50, 200, 777] {
            let a: Vec<u64> = (0..len).map(|_| rng.gen_range(0..1000)).collect();
            let b: Vec<u64> = (0..len + 3).map(|_| rng.gen_range(0..1000)).collect();
            assert_eq!(convolve_exact(&a, &b).unwrap(), schoolbook(&a, &b));
        }
    }

    #[test]
    fn exact_overflow_detected() {
        let big = vec![1u64 << 32; 4];
        assert!(matches!(convolve_exact(&big, &big), Err(TphdError::Overflow(_))));
    }

    #[test]
    fn exact_large_coefficients_use_crt() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<u64> = (0..300).map(|_| rng.gen_range(0..1u64 << 20)).collect();
        let b: Vec<u64> = (0..300).map(|_| rng.gen_range(0..1u64 << 20)).collect();
        assert_eq!(convolve_exact(&a, &b).unwrap(), schoolbook(&a, &b));
    }

    #[test]
    fn mod_p_examples() {
        let three = PrimeWitness::new(3).unwrap();
        assert_eq!(convolve_mod_p(&[1, 1], &[1, 1], three).unwrap(), vec![1, 2, 1]);
        assert_eq!(convolve_mod_p(&[2], &[2], three).unwrap(), vec![1]);
        assert!(matches!(PrimeWitness::new(4), Err(TphdError::InvalidModulus(4))));
    }

    #[test]
    fn mod_p_strategies_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [2u64, 3, 257, 65537, 1_000_003] {
            let pw = PrimeWitness::new(p).unwrap();
            let a: Vec<u64> = (0..1500).map(|_| rng.gen_range(0..p)).collect();
            let b: Vec<u64> = (0..900).map(|_| rng.gen_range(0..p)).collect();
            let expect: Vec<u64> = convolve_exact(&a, &b).unwrap().into_iter().map(|v| v % p).collect();
            for strategy in [ModStrategy::Auto, ModStrategy::Packed, ModStrategy::Plain] {
                assert_eq!(convolve_mod_p_with(&a, &b, pw, strategy).unwrap(), expect, "p={p} {strategy:?}");
            }
        }
    }

    #[test]
    fn pack_plan_respects_lane_width() {
        let plan = pack_plan(2, 4096, 4096);
        assert_eq!(plan.lane_bits, 15);
        assert!((2 * plan.lanes as u32 - 1) * plan.lane_bits <= PACK_BUDGET_BITS);
        assert_eq!(pack_plan(65537, 4096, 4096).lanes, 1);
    }

    #[test]
    fn find_prime_examples() {
        assert_eq!(find_prime(10, 20).unwrap().value(), 11);
        assert_eq!(find_prime(2, 2).unwrap().value(), 2);
        let p = find_prime(1_000_000, 2_000_000).unwrap();
        assert!(trial_division(p.value()));
        assert_eq!(p.range(), (1_000_000, 2_000_000));
        assert!(matches!(find_prime(24, 28), Err(TphdError::PrimeNotFound { .. })));
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n={n}");
        }
        assert!(is_prime(998_244_353));
        assert!(!is_prime(3_215_031_751));
    }
}
