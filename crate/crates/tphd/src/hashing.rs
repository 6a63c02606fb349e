//! Multiply-shift hash families that are almost linear.
//!
//! With `U = 2^w` and `L = 2^l`, a hash is an odd multiplier `r < 2^(w+l)` and
//! `f(x)` is bits `w..w+l-1` of `r * x`. Writing `r*x + r*y` with the carries
//! out of bit `w-1` and out of bit `w+l-1` made explicit gives
//! `f(x) + f(y) - f(x+y) = L * c_high - c_low`, so the error lies in
//! `{0, -1, L, L-1}`. The predictable variant keeps the top `k` bits just
//! below each of those two carry positions as a label, which determines both
//! carries unless a component sum of labels is exactly `2^k - 1`.

use rand::Rng;

use crate::error::{Result, TphdError};

/// Largest supported universe exponent.
pub const MAX_UNIVERSE_LOG: u32 = 48;

fn log2_exact(v: u64, what: &str) -> Result<u32> {
    if v == 0 || !v.is_power_of_two() {
        return Err(TphdError::InvalidParameter(format!("{what} = {v} is not a power of two")));
    }
    Ok(v.trailing_zeros())
}

/// The four possible values of `f(x) + f(y) - f(x+y)` for range size `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorSet {
    elements: [i64; 4],
}

impl ErrorSet {
    pub fn for_range(v: u64) -> Self {
        let v = v as i64;
        Self {
            elements: [0, -1, v, v - 1],
        }
    }

    pub fn elements(&self) -> &[i64; 4] {
        &self.elements
    }

    /// The same set in the orientation `f(x+y) - f(x) - f(y)`.
    pub fn negated(&self) -> [i64; 4] {
        self.elements.map(|e| -e)
    }

    pub fn contains(&self, e: i64) -> bool {
        self.elements.contains(&e)
    }
}

fn sample_multiplier<R: Rng + ?Sized>(bits: u32, rng: &mut R) -> u128 {
    let mask = if bits >= 128 { u128::MAX } else { (1u128 << bits) - 1 };
    (rng.gen::<u128>() & mask) | 1
}

/// `f : [U] -> [L]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearHash {
    r: u128,
    w: u32,
    l: u32,
}

impl LinearHash {
    pub fn multiplier(&self) -> u128 {
        self.r
    }

    pub fn universe(&self) -> u64 {
        1u64 << self.w
    }

    pub fn range(&self) -> u64 {
        1u64 << self.l
    }

    pub fn error_set(&self) -> ErrorSet {
        ErrorSet::for_range(self.range())
    }

    /// Evaluates without the domain check. The almost-linearity identity holds
    /// for every non-negative `x`, which lets callers hash sums `x + y` that
    /// leave `[U]`.
    #[inline]
    pub fn hash(&self, x: u64) -> u64 {
        let prod = self.r.wrapping_mul(x as u128);
        ((prod >> self.w) & ((1u128 << self.l) - 1)) as u64
    }
}

/// Samples the multiplier uniformly among odd integers below `2^(w+l)`.
pub fn sample_linear_hash<R: Rng + ?Sized>(u: u64, l: u64, rng: &mut R) -> Result<LinearHash> {
    let w = log2_exact(u, "U")?;
    let lb = log2_exact(l, "L")?;
    if l > u {
        return Err(TphdError::InvalidParameter(format!("L = {l} exceeds U = {u}")));
    }
    if w > MAX_UNIVERSE_LOG {
        return Err(TphdError::InvalidParameter(format!("U = 2^{w} exceeds 2^{MAX_UNIVERSE_LOG}")));
    }
    Ok(LinearHash {
        r: sample_multiplier(w + lb, rng),
        w,
        l: lb,
    })
}

pub fn eval_linear(f: &LinearHash, x: u64) -> Result<u64> {
    if x >= f.universe() {
        return Err(TphdError::Domain {
            value: x,
            bound: f.universe(),
        });
    }
    Ok(f.hash(x))
}

/// Label of an element: the top `k` bits below each carry position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub low: u32,
    pub high: u32,
}

impl Label {
    /// Dense index in `[q^2]`.
    pub fn index(&self, q: u64) -> usize {
        (self.low as u64 * q + self.high as u64) as usize
    }

    pub fn from_index(idx: usize, q: u64) -> Self {
        Self {
            low: (idx as u64 / q) as u32,
            high: (idx as u64 % q) as u32,
        }
    }
}

/// `h : [U] -> [V]` with labels in `[q]^2` and the carry predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictableHash {
    r: u128,
    w: u32,
    l: u32,
    k: u32,
}

impl PredictableHash {
    pub fn universe(&self) -> u64 {
        1u64 << self.w
    }

    pub fn range(&self) -> u64 {
        1u64 << self.l
    }

    pub fn q(&self) -> u64 {
        1u64 << self.k
    }

    pub fn error_set(&self) -> ErrorSet {
        ErrorSet::for_range(self.range())
    }

    #[inline]
    fn product(&self, x: u64) -> u128 {
        self.r.wrapping_mul(x as u128) & ((1u128 << (self.w + self.l)) - 1)
    }

    /// Hash value without the domain check.
    #[inline]
    pub fn hash(&self, x: u64) -> u64 {
        (self.product(x) >> self.w) as u64
    }

    /// Hash value and label without the domain check.
    #[inline]
    pub fn hash_label(&self, x: u64) -> (u64, Label) {
        let prod = self.product(x);
        let kmask = (1u128 << self.k) - 1;
        let low = ((prod >> (self.w - self.k)) & kmask) as u32;
        let high = ((prod >> (self.w + self.l - self.k)) & kmask) as u32;
        ((prod >> self.w) as u64, Label { low, high })
    }

    /// Predicted `h(x) + h(y) - h(x+y)` from the labels of `x` and `y`, or
    /// `None` when a component sum is the all-ones `k`-bit string.
    pub fn phi(&self, a: Label, b: Label) -> Option<i64> {
        let ones = (1u32 << self.k) - 1;
        let low = a.low + b.low;
        let high = a.high + b.high;
        if low == ones || high == ones {
            return None;
        }
        let c_low = (low > ones) as i64;
        let c_high = (high > ones) as i64;
        Some(self.range() as i64 * c_high - c_low)
    }
}

/// Requires `q <= V <= U`, all powers of two.
pub fn sample_predictable_hash<R: Rng + ?Sized>(u: u64, v: u64, q: u64, rng: &mut R) -> Result<PredictableHash> {
    let w = log2_exact(u, "U")?;
    let l = log2_exact(v, "V")?;
    let k = log2_exact(q, "q")?;
    if !(q <= v && v <= u) {
        return Err(TphdError::InvalidParameter(format!("need q <= V <= U, got q={q}, V={v}, U={u}")));
    }
    if k == 0 {
        return Err(TphdError::InvalidParameter("q must be at least 2".into()));
    }
    if w > MAX_UNIVERSE_LOG {
        return Err(TphdError::InvalidParameter(format!("U = 2^{w} exceeds 2^{MAX_UNIVERSE_LOG}")));
    }
    Ok(PredictableHash {
        r: sample_multiplier(w + l, rng),
        w,
        l,
        k,
    })
}

pub fn eval_predictable(h: &PredictableHash, x: u64) -> Result<(u64, Label)> {
    if x >= h.universe() {
        return Err(TphdError::Domain {
            value: x,
            bound: h.universe(),
        });
    }
    Ok(h.hash_label(x))
}

pub fn phi(h: &PredictableHash, a: Label, b: Label) -> Option<i64> {
    h.phi(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampling_is_reproducible() {
        let f1 = sample_linear_hash(1 << 10, 1 << 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let f2 = sample_linear_hash(1 << 10, 1 << 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.multiplier() % 2, 1);
        assert!(f1.multiplier() < 1 << 14);
    }

    #[test]
    fn zero_maps_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let f = sample_linear_hash(1 << 12, 1 << 5, &mut rng).unwrap();
            assert_eq!(eval_linear(&f, 0).unwrap(), 0);
            let h = sample_predictable_hash(1 << 12, 1 << 5, 4, &mut rng).unwrap();
            assert_eq!(eval_predictable(&h, 0).unwrap(), (0, Label { low: 0, high: 0 }));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(sample_linear_hash(1000, 16, &mut rng).is_err());
        assert!(sample_linear_hash(16, 32, &mut rng).is_err());
        assert!(sample_predictable_hash(256, 16, 32, &mut rng).is_err());
        let f = sample_linear_hash(16, 4, &mut rng).unwrap();
        assert!(matches!(eval_linear(&f, 16), Err(TphdError::Domain { .. })));
    }

    #[test]
    fn error_set_exhaustive_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let f = sample_linear_hash(1 << 8, 1 << 4, &mut rng).unwrap();
            let errs = f.error_set();
            for x in 0..256u64 {
                for y in 0..256u64 {
                    let e = f.hash(x) as i64 + f.hash(y) as i64 - f.hash(x + y) as i64;
                    assert!(errs.contains(e), "x={x} y={y} e={e}");
                }
            }
        }
    }

    #[test]
    fn labels_match_bit_extraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = sample_predictable_hash(1 << 8, 1 << 4, 4, &mut rng).unwrap();
        for x in 0..256u64 {
            let (v, lab) = eval_predictable(&h, x).unwrap();
            let prod = h.r * x as u128;
            let bit = |i: u32| ((prod >> i) & 1) as u32;
            assert_eq!(v, ((prod >> 8) & 15) as u64);
            assert_eq!(lab.low, bit(7) * 2 + bit(6));
            assert_eq!(lab.high, bit(11) * 2 + bit(10));
            assert!(lab.index(4) < 16);
            assert_eq!(Label::from_index(lab.index(4), 4), lab);
        }
    }

    #[test]
    fn phi_zero_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = sample_predictable_hash(1 << 8, 1 << 4, 4, &mut rng).unwrap();
        let z = Label { low: 0, high: 0 };
        assert_eq!(phi(&h, z, z), Some(0));
    }

    #[test]
    fn phi_exhaustive_soundness() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for q in [2u64, 4, 8] {
            for _ in 0..20 {
                let h = sample_predictable_hash(1 << 8, 1 << 4, q, &mut rng).unwrap();
                for x in 0..256u64 {
                    for y in 0..256u64 {
                        let (hx, lx) = h.hash_label(x);
                        let (hy, ly) = h.hash_label(y);
                        if let Some(e) = h.phi(lx, ly) {
                            assert_eq!(hx as i64 + hy as i64 - h.hash(x + y) as i64, e);
                        }
                    }
                }
            }
        }
    }
}
