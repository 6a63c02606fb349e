//! Exact matchers built on sumset counting.
//!
//! Every routine works per text block (see [`split_blocks`]) so that the
//! sumset universe stays linear in the pattern length. Inside a block the
//! pattern is reflected, `b -> m - 1 - b`, which turns the difference
//! `a - b = i` into the sum `a + (m - 1 - b) = i + m - 1`.

use rand::Rng;

use crate::convolution::convolve_exact;
use crate::error::{Result, TphdError};
use crate::rng::stream;
use crate::strings::{assemble_blocks, char_classes, validate_instance, DistanceKind, DistanceVector, IntString};
use crate::sumset::{expected_work, sumset_counts_budgeted, sumset_counts_det_weighted, sumset_counts_weighted, to_weighted};

/// Budgeted attempts before a sumset call is allowed to run unbounded.
pub const MAX_RERUNS: usize = 3;

fn universe_for(len: usize) -> u64 {
    2 * (len.max(1) as u64).next_power_of_two()
}

/// Las Vegas sumset with the rerun-on-slow policy: each attempt gets twice
/// the expected work, and after [`MAX_RERUNS`] failures one unbounded run.
fn sumset_rerun<R: Rng + ?Sized>(x: &[(u64, u64)], y: &[(u64, u64)], u: u64, rng: &mut R) -> Result<Vec<u64>> {
    let budget = 2 * expected_work(x.len() as u64, y.len() as u64, u);
    for _ in 0..MAX_RERUNS {
        match sumset_counts_budgeted(x, y, u, rng, budget) {
            Ok((c, _)) => return Ok(c.counts),
            Err(TphdError::BudgetExceeded { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(sumset_counts_weighted(x, y, u, rng)?.counts)
}

/// How one character's contribution is counted.
enum Kernel<'a, R: Rng + ?Sized> {
    Random(&'a mut R),
    Deterministic,
}

/// Adds `|{(a, b) : a - b = i}|` for every shift `i < shifts` into `out`.
fn add_diff_counts<R: Rng + ?Sized>(
    text_pos: &[usize],
    pat_pos: &[usize],
    m: usize,
    universe_len: usize,
    brute: bool,
    kernel: &mut Kernel<'_, R>,
    out: &mut [u64],
) -> Result<()> {
    if text_pos.is_empty() || pat_pos.is_empty() {
        return Ok(());
    }
    if brute {
        for &a in text_pos {
            for &b in pat_pos {
                if a >= b && a - b < out.len() {
                    out[a - b] += 1;
                }
            }
        }
        return Ok(());
    }
    let u = universe_for(universe_len);
    let x = to_weighted(text_pos.iter().map(|&a| a as u64));
    let y = to_weighted(pat_pos.iter().map(|&b| (m - 1 - b) as u64));
    let counts = match kernel {
        Kernel::Random(rng) => sumset_rerun(&x, &y, u, *rng)?,
        Kernel::Deterministic => sumset_counts_det_weighted(&x, &y, u)?.counts,
    };
    for (i, slot) in out.iter_mut().enumerate() {
        *slot += counts.get(i + m - 1).copied().unwrap_or(0);
    }
    Ok(())
}

fn hamming_blocks<R: Rng + ?Sized>(
    text: &IntString,
    pattern: &IntString,
    threshold: impl Fn(usize) -> f64,
    mut kernel: Kernel<'_, R>,
) -> Result<DistanceVector> {
    let m = pattern.len();
    assemble_blocks(text, pattern, DistanceKind::Hamming, |block| {
        let nb = block.text.len();
        let cut = threshold(nb);
        let mut matches = vec![0u64; block.shifts(m)];
        for class in char_classes(&block.text, pattern).classes.values() {
            let brute = class.size() as f64 <= cut;
            add_diff_counts(&class.text, &class.pattern, m, nb, brute, &mut kernel, &mut matches)?;
        }
        Ok(matches.into_iter().map(|c| m as u64 - c).collect())
    })
}

/// Exact Hamming distances, Las Vegas: characters occurring at most
/// `sqrt(2 n_b)` times in a block are counted pairwise, the rest by sumset
/// counting.
pub fn exact_hamming<R: Rng + ?Sized>(text: &IntString, pattern: &IntString, rng: &mut R) -> Result<DistanceVector> {
    hamming_blocks(text, pattern, |nb| (2.0 * nb as f64).sqrt(), Kernel::Random(rng))
}

/// Deterministic exact Hamming distances. Frequent characters go through the
/// deterministic sumset routine.
pub fn exact_hamming_det(text: &IntString, pattern: &IntString) -> Result<DistanceVector> {
    hamming_blocks::<rand::rngs::ThreadRng>(text, pattern, det_threshold, Kernel::Deterministic)
}

/// `sqrt(n) * (log n * log log n)^(1/4)`, with both logarithms floored at 1.
pub fn det_threshold(n: usize) -> f64 {
    let n = n.max(2) as f64;
    let lg = n.log2().max(1.0);
    let lglg = lg.log2().max(1.0);
    n.sqrt() * (lg * lglg).powf(0.25)
}

/// Classic baseline: one exact convolution of indicator vectors per
/// character.
pub fn hamming_fft(text: &IntString, pattern: &IntString) -> Result<DistanceVector> {
    hamming_by_threshold(text, pattern, 0.0)
}

/// Frequency split: characters with at most `sqrt(m log m)` pattern
/// occurrences are counted pairwise, the others by convolution.
pub fn hamming_abrahamson(text: &IntString, pattern: &IntString) -> Result<DistanceVector> {
    let m = pattern.len().max(2) as f64;
    hamming_by_threshold(text, pattern, (m * m.log2()).sqrt())
}

fn hamming_by_threshold(text: &IntString, pattern: &IntString, cut: f64) -> Result<DistanceVector> {
    validate_instance(text, pattern)?;
    let (n, m) = (text.len(), pattern.len());
    let mut matches = vec![0u64; n - m + 1];
    for class in char_classes(text, pattern).classes.values() {
        if class.pattern.is_empty() || class.text.is_empty() {
            continue;
        }
        if class.pattern.len() as f64 <= cut {
            for &b in &class.pattern {
                for &a in &class.text {
                    if a >= b && a - b < matches.len() {
                        matches[a - b] += 1;
                    }
                }
            }
            continue;
        }
        let mut t = vec![0u64; n];
        class.text.iter().for_each(|&a| t[a] = 1);
        let mut p = vec![0u64; m];
        class.pattern.iter().for_each(|&b| p[m - 1 - b] = 1);
        let conv = convolve_exact(&t, &p)?;
        for (i, slot) in matches.iter_mut().enumerate() {
            *slot += conv[i + m - 1];
        }
    }
    Ok(DistanceVector::new(
        matches.into_iter().map(|c| m as u64 - c).collect(),
        DistanceKind::Hamming,
    ))
}

/// `|{j : P[j] < T[j + k]}|` for every shift `k`.
///
/// All characters of a block and the pattern are sorted together. A pair
/// (pattern position, text position) with `P[j] < T[i]` is separated by
/// exactly one dyadic interval of the sorted order, with the pattern entry in
/// its left half and the text entry in its right half. Pairs of equal value
/// that end up in that position are removed per interval.
pub fn dominance_counts<R: Rng + ?Sized>(text: &IntString, pattern: &IntString, rng: &mut R) -> Result<DistanceVector> {
    validate_instance(text, pattern)?;
    let m = pattern.len();
    assemble_blocks(text, pattern, DistanceKind::Dominance, |block| {
        dominance_block(&block.text, pattern, m, rng)
    })
}

// Source tag 0 sorts pattern entries before text entries of equal value.
const PAT: u8 = 0;
const TXT: u8 = 1;

fn dominance_block<R: Rng + ?Sized>(text: &IntString, pattern: &IntString, m: usize, rng: &mut R) -> Result<Vec<u64>> {
    let nb = text.len();
    let mut items: Vec<(u32, u8, usize)> = pattern.chars().iter().enumerate().map(|(j, &c)| (c, PAT, j)).collect();
    items.extend(text.chars().iter().enumerate().map(|(i, &c)| (c, TXT, i)));
    items.sort_unstable();
    let total = items.len();
    let cut = (2.0 * nb as f64).sqrt();
    let mut out = vec![0u64; nb + 1 - m];
    let mut kernel = Kernel::Random(rng);

    let mut half = 1usize;
    while half < total {
        let brute = half as f64 <= cut;
        let mut start = 0;
        while start + half < total {
            let left = &items[start..start + half];
            let right = &items[start + half..(start + 2 * half).min(total)];
            let pats: Vec<(u32, usize)> = left.iter().filter(|e| e.1 == PAT).map(|e| (e.0, e.2)).collect();
            let txts: Vec<(u32, usize)> = right.iter().filter(|e| e.1 == TXT).map(|e| (e.0, e.2)).collect();
            if !pats.is_empty() && !txts.is_empty() {
                let c_left = pats.last().map(|e| e.0);
                let c_right = txts.first().map(|e| e.0);
                let shared = if c_left == c_right { c_left } else { None };
                let (l_rest, l_c) = split_by(&pats, shared);
                let (r_rest, _) = split_by(&txts, shared);
                let r_all: Vec<usize> = txts.iter().map(|e| e.1).collect();
                add_diff_counts(&r_all, &l_rest, m, nb, brute, &mut kernel, &mut out)?;
                add_diff_counts(&r_rest, &l_c, m, nb, brute, &mut kernel, &mut out)?;
            }
            start += 2 * half;
        }
        half *= 2;
    }
    Ok(out)
}

/// Splits positions into (value != c, value == c).
fn split_by(entries: &[(u32, usize)], c: Option<u32>) -> (Vec<usize>, Vec<usize>) {
    let mut rest = Vec::new();
    let mut same = Vec::new();
    for &(v, p) in entries {
        if Some(v) == c {
            same.push(p);
        } else {
            rest.push(p);
        }
    }
    (rest, same)
}

/// A 0/1 sequence over `[n]` given by its support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBooleanSeq {
    support: Vec<u64>,
    n: u64,
}

impl SparseBooleanSeq {
    /// Requires a strictly increasing support inside `[n]`.
    pub fn new(support: Vec<u64>, n: u64) -> Result<Self> {
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TphdError::InvalidParameter("support must be strictly increasing".into()));
        }
        if let Some(&v) = support.last().filter(|&&v| v >= n) {
            return Err(TphdError::Domain { value: v, bound: n });
        }
        Ok(Self { support, n })
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn universe(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Sparse convolution: `(position, count)` with nonzero counts, ascending.
pub type SparseCounts = Vec<(u64, u64)>;

/// Convolves every pair. A pair with `n_i = |f_i| + |g_i| <= sqrt(2n)` is
/// multiplied out directly, the others go through sumset counting; `n` is the
/// total support size of the batch. Pair `i` draws from its own stream, so its
/// output does not depend on the other pairs.
pub fn batch_sparse_boolean_conv<R: Rng + ?Sized>(
    pairs: &[(SparseBooleanSeq, SparseBooleanSeq)],
    rng: &mut R,
) -> Result<Vec<SparseCounts>> {
    let n: usize = pairs.iter().map(|(f, g)| f.len() + g.len()).sum();
    let cut = (2.0 * n as f64).sqrt();
    let base = rng.gen::<u64>();
    pairs
        .iter()
        .enumerate()
        .map(|(idx, (f, g))| {
            if f.is_empty() || g.is_empty() {
                return Ok(Vec::new());
            }
            if (f.len() + g.len()) as f64 <= cut {
                let mut acc = std::collections::BTreeMap::new();
                for &a in f.support() {
                    for &b in g.support() {
                        *acc.entry(a + b).or_insert(0u64) += 1;
                    }
                }
                return Ok(acc.into_iter().collect());
            }
            let mut sub = stream(base, idx as u64);
            let u = 2 * f.universe().max(g.universe()).max(1).next_power_of_two();
            let counts = sumset_rerun(
                &to_weighted(f.support().iter().copied()),
                &to_weighted(g.support().iter().copied()),
                u,
                &mut sub,
            )?;
            Ok(counts
                .into_iter()
                .enumerate()
                .filter(|&(_, c)| c > 0)
                .map(|(z, c)| (z as u64, c))
                .collect())
        })
        .collect()
}
