//! Problem definitions, validation, brute-force oracles, per-character
//! decomposition and block splitting.

use std::collections::BTreeMap;

use crate::error::{Result, TphdError};

/// A text or pattern over the integer alphabet `[sigma]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntString {
    chars: Vec<u32>,
    sigma: u32,
}

impl IntString {
    /// Validates that every code lies in `[0, sigma)`.
    pub fn new(chars: Vec<u32>, sigma: u32) -> Result<Self> {
        if sigma == 0 {
            return Err(TphdError::InvalidParameter("alphabet size must be positive".into()));
        }
        if let Some(&c) = chars.iter().find(|&&c| c >= sigma) {
            return Err(TphdError::Domain {
                value: c as u64,
                bound: sigma as u64,
            });
        }
        Ok(Self { chars, sigma })
    }

    /// Uses `max + 1` as the alphabet size.
    pub fn from_codes(chars: Vec<u32>) -> Self {
        let sigma = chars.iter().copied().max().map_or(1, |c| c + 1);
        Self { chars, sigma }
    }

    /// Lifts raw bytes to codes in `[256]`.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self {
            chars: bytes.iter().map(|&b| b as u32).collect(),
            sigma: 256,
        }
    }

    pub fn chars(&self) -> &[u32] {
        &self.chars
    }

    pub fn sigma(&self) -> u32 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Same string over a larger alphabet.
    pub fn with_sigma(&self, sigma: u32) -> Result<Self> {
        Self::new(self.chars.clone(), sigma)
    }

    /// Maps every code `c` to `sigma - 1 - c`, reversing the alphabet order.
    pub fn reversed_alphabet(&self) -> Self {
        let s = self.sigma;
        Self {
            chars: self.chars.iter().map(|&c| s - 1 - c).collect(),
            sigma: s,
        }
    }

    /// Substring `[start, end)` over the same alphabet.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            chars: self.chars[start..end].to_vec(),
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    Hamming,
    Matches,
    Dominance,
}

/// One value per shift `i` in `[0, n - m]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DistanceVector {
    pub values: Vec<u64>,
    pub kind: DistanceKind,
}

impl DistanceVector {
    pub fn new(values: Vec<u64>, kind: DistanceKind) -> Self {
        Self { values, kind }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Converts between match counts and Hamming distances for pattern length `m`.
    pub fn complement(&self, m: usize) -> Self {
        let kind = match self.kind {
            DistanceKind::Hamming => DistanceKind::Matches,
            DistanceKind::Matches => DistanceKind::Hamming,
            DistanceKind::Dominance => DistanceKind::Dominance,
        };
        Self {
            values: self.values.iter().map(|&v| m as u64 - v).collect(),
            kind,
        }
    }
}

/// Checks `1 <= m <= n`.
pub fn validate_instance(text: &IntString, pattern: &IntString) -> Result<()> {
    if pattern.is_empty() {
        return Err(TphdError::InvalidInstance("pattern is empty".into()));
    }
    if pattern.len() > text.len() {
        return Err(TphdError::InvalidInstance(format!(
            "pattern length {} exceeds text length {}",
            pattern.len(),
            text.len()
        )));
    }
    Ok(())
}

/// Direct double loop over shifts and pattern positions.
pub fn hamming_oracle(text: &IntString, pattern: &IntString) -> Result<DistanceVector> {
    validate_instance(text, pattern)?;
    let (t, p) = (text.chars(), pattern.chars());
    let shifts = t.len() - p.len() + 1;
    let values = (0..shifts)
        .map(|i| p.iter().zip(&t[i..]).filter(|(a, b)| a != b).count() as u64)
        .collect();
    Ok(DistanceVector::new(values, DistanceKind::Hamming))
}

/// `values[k] = |{j : P[j] < T[k + j]}|` by direct double loop.
pub fn dominance_oracle(text: &IntString, pattern: &IntString) -> Result<DistanceVector> {
    validate_instance(text, pattern)?;
    let (t, p) = (text.chars(), pattern.chars());
    let shifts = t.len() - p.len() + 1;
    let values = (0..shifts)
        .map(|k| p.iter().zip(&t[k..]).filter(|(a, b)| a < b).count() as u64)
        .collect();
    Ok(DistanceVector::new(values, DistanceKind::Dominance))
}

/// Positions of one character in the text and in the pattern.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CharClass {
    pub text: Vec<usize>,
    pub pattern: Vec<usize>,
}

impl CharClass {
    pub fn size(&self) -> usize {
        self.text.len() + self.pattern.len()
    }
}

/// Per-character position lists. Characters absent from both strings are omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CharClassIndex {
    pub classes: BTreeMap<u32, CharClass>,
}

pub fn char_classes(text: &IntString, pattern: &IntString) -> CharClassIndex {
    let mut classes: BTreeMap<u32, CharClass> = BTreeMap::new();
    for (a, &c) in text.chars().iter().enumerate() {
        classes.entry(c).or_default().text.push(a);
    }
    for (b, &c) in pattern.chars().iter().enumerate() {
        classes.entry(c).or_default().pattern.push(b);
    }
    CharClassIndex { classes }
}

/// A window of the text together with the first shift it is responsible for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextBlock {
    pub text: IntString,
    pub offset: usize,
}

impl TextBlock {
    /// Number of shifts the block covers for a pattern of length `m`.
    pub fn shifts(&self, m: usize) -> usize {
        self.text.len() + 1 - m
    }
}

/// Cuts the text into windows of length `min(2m - 1, remaining)` at offsets
/// `0, m, 2m, ...`. Every shift in `[0, n - m]` belongs to exactly one block.
pub fn split_blocks(text: &IntString, pattern: &IntString) -> Result<Vec<TextBlock>> {
    validate_instance(text, pattern)?;
    let (n, m) = (text.len(), pattern.len());
    let mut blocks = Vec::with_capacity(n / m + 1);
    let mut offset = 0;
    while offset + m <= n {
        let end = (offset + 2 * m - 1).min(n);
        blocks.push(TextBlock {
            text: text.slice(offset, end),
            offset,
        });
        offset += m;
    }
    Ok(blocks)
}

/// Runs `per_block` on every block and concatenates the outputs by offset.
pub fn assemble_blocks<F>(text: &IntString, pattern: &IntString, kind: DistanceKind, mut per_block: F) -> Result<DistanceVector>
where
    F: FnMut(&TextBlock) -> Result<Vec<u64>>,
{
    let blocks = split_blocks(text, pattern)?;
    let mut values = vec![0u64; text.len() - pattern.len() + 1];
    for block in &blocks {
        let part = per_block(block)?;
        debug_assert_eq!(part.len(), block.shifts(pattern.len()));
        values[block.offset..block.offset + part.len()].copy_from_slice(&part);
    }
    Ok(DistanceVector::new(values, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: &[u32]) -> IntString {
        IntString::from_codes(v.to_vec())
    }

    fn random_string(rng: &mut ChaCha8Rng, len: usize, sigma: u32) -> IntString {
        IntString::new((0..len).map(|_| rng.gen_range(0..sigma)).collect(), sigma).unwrap()
    }

    // Independent recount: per shift, count matching positions and subtract.
    fn matches_recount(t: &IntString, p: &IntString) -> Vec<u64> {
        let mut out = vec![0u64; t.len() - p.len() + 1];
        for (j, &pc) in p.chars().iter().enumerate() {
            for (i, slot) in out.iter_mut().enumerate() {
                if t.chars()[i + j] == pc {
                    *slot += 1;
                }
            }
        }
        out
    }

    #[test]
    fn hamming_small_cases() {
        let d = hamming_oracle(&s(&[0, 1, 0, 1]), &s(&[0, 1])).unwrap();
        assert_eq!(d.values, vec![0, 2, 0]);
        let t = s(&[3, 1, 4, 1, 5]);
        assert_eq!(hamming_oracle(&t, &t).unwrap().values, vec![0]);
    }

    #[test]
    fn hamming_rejects_long_pattern() {
        assert!(matches!(hamming_oracle(&s(&[0]), &s(&[0, 0])), Err(TphdError::InvalidInstance(_))));
        assert!(matches!(
            dominance_oracle(&s(&[0]), &s(&[0, 0])),
            Err(TphdError::InvalidInstance(_))
        ));
    }

    #[test]
    fn hamming_random_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let t = random_string(&mut rng, 64, 4);
            let p = random_string(&mut rng, 16, 4);
            let d = hamming_oracle(&t, &p).unwrap();
            let matches = matches_recount(&t, &p);
            for (h, m) in d.values.iter().zip(&matches) {
                assert_eq!(h + m, 16);
            }
        }
    }

    #[test]
    fn dominance_small_cases() {
        assert_eq!(dominance_oracle(&s(&[0, 2]), &s(&[1])).unwrap().values, vec![0, 1]);
        let c = s(&[4, 4, 4, 4]);
        assert_eq!(dominance_oracle(&c, &s(&[4, 4])).unwrap().values, vec![0, 0, 0]);
    }

    #[test]
    fn dominance_random_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let t = random_string(&mut rng, 64, 6);
            let p = random_string(&mut rng, 16, 6);
            let d = dominance_oracle(&t, &p).unwrap();
            for (k, &v) in d.values.iter().enumerate() {
                let mut count = 0;
                for j in 0..16 {
                    if p.chars()[j] < t.chars()[k + j] {
                        count += 1;
                    }
                }
                assert_eq!(v, count);
            }
        }
    }

    #[test]
    fn char_class_examples() {
        let idx = char_classes(&s(&[0, 0]), &IntString::new(vec![1], 2).unwrap());
        assert_eq!(idx.classes[&0].text, vec![0, 1]);
        assert_eq!(idx.classes[&1].pattern, vec![0]);
        assert_eq!(idx.classes[&0].size(), 2);
        assert_eq!(idx.classes[&1].size(), 1);
        let idx = char_classes(&s(&[5]), &s(&[5]));
        assert_eq!(idx.classes.len(), 1);
        assert_eq!(
            idx.classes[&5],
            CharClass {
                text: vec![0],
                pattern: vec![0]
            }
        );
    }

    #[test]
    fn char_class_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random_string(&mut rng, 100, 7);
        let p = random_string(&mut rng, 30, 7);
        let idx = char_classes(&t, &p);
        let total: usize = idx.classes.values().map(CharClass::size).sum();
        assert_eq!(total, 130);
        for class in idx.classes.values() {
            assert!(class.text.windows(2).all(|w| w[0] < w[1]));
            assert!(class.pattern.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn split_examples() {
        let blocks = split_blocks(&s(&[0, 1, 2, 3]), &s(&[0, 1])).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].text.chars(), &[0, 1, 2]);
        assert_eq!(blocks[0].shifts(2), 2);
        assert_eq!(blocks[1].text.chars(), &[2, 3]);
        assert_eq!(blocks[1].shifts(2), 1);

        let blocks = split_blocks(&s(&[0, 1, 2]), &s(&[0, 1])).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].shifts(2), 2);

        let t = s(&[0, 1, 2, 3, 4, 5]);
        let blocks = split_blocks(&t, &s(&[0, 1, 2])).unwrap();
        assert_eq!(blocks.iter().map(|b| b.offset).collect::<Vec<_>>(), vec![0, 3]);
        assert_eq!(blocks[0].shifts(3), 3);
        assert_eq!(blocks[1].shifts(3), 1);
    }

    #[test]
    fn split_reassembles_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let n = rng.gen_range(1..200);
            let m = rng.gen_range(1..=n);
            let t = random_string(&mut rng, n, 3);
            let p = random_string(&mut rng, m, 3);
            let whole = hamming_oracle(&t, &p).unwrap();
            let pieces = assemble_blocks(&t, &p, DistanceKind::Hamming, |b| Ok(hamming_oracle(&b.text, &p)?.values)).unwrap();
            assert_eq!(whole, pieces);
        }
    }

    #[test]
    fn invalid_codes_rejected() {
        assert!(IntString::new(vec![0, 3], 3).is_err());
        assert!(IntString::new(vec![], 0).is_err());
    }
}
