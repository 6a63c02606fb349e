//! `(1 + eps)`-approximate Hamming distances.
//!
//! Shifts at distance at most `eps^-gamma * sqrt(m)` come from the exact
//! matcher. Larger distances are handled per distance class `k` (powers of
//! two): matches are estimated with colored 3SUM counting at a sampling rate
//! chosen so the additive error is about `eps * k`, and each shift takes the
//! estimate of the first class that is consistent with it.

use rand::Rng;

use crate::error::{Result, TphdError};
use crate::estimate::{
    estimate_colored_3sum_with, estimate_interval_counts_with, ColoredInterval, ColoredSet, EstimatorConfig, IntervalColoredSet,
    DEFAULT_OMEGA,
};
use crate::exact::exact_hamming;
use crate::rng::stream;
use crate::strings::{split_blocks, validate_instance, DistanceKind, DistanceVector, IntString};

/// Divisor in the per-class sampling rate `t = (eps k)^2 / (C m)`.
pub const VARIANCE_CONSTANT: f64 = 16.0;

/// A run-length input may have at most this many runs per unit of `k`.
pub const RUNS_PER_K: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxConfig {
    pub eps: f64,
    pub omega: f64,
    /// Median repetitions; `None` picks `8 * ceil(log2 n)`.
    pub repetitions: Option<usize>,
    pub seed: u64,
}

impl ApproxConfig {
    pub fn new(eps: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            eps,
            omega: DEFAULT_OMEGA,
            repetitions: None,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(TphdError::InvalidParameter(format!("eps = {} must lie in (0, 1]", self.eps)));
        }
        if !(2.0..=3.0).contains(&self.omega) {
            return Err(TphdError::InvalidParameter(format!("omega = {} must lie in [2, 3]", self.omega)));
        }
        Ok(())
    }

    /// `(3 - omega) / (5 + omega)`.
    pub fn beta(&self) -> f64 {
        (3.0 - self.omega) / (5.0 + self.omega)
    }

    /// `(1 + beta) / (1 + 2 beta)`, which equals `8 / (11 - omega)`.
    pub fn gamma(&self) -> f64 {
        let b = self.beta();
        (1.0 + b) / (1.0 + 2.0 * b)
    }

    /// Distances up to this value are computed exactly.
    pub fn exact_cutoff(&self, m: usize) -> f64 {
        self.eps.powf(-self.gamma()) * (m as f64).sqrt()
    }

    /// Distance classes: powers of two from `ceil(exact_cutoff)` until the
    /// first one reaching `m`.
    pub fn classes(&self, m: usize) -> Vec<u64> {
        let mut k = (self.exact_cutoff(m).ceil().max(1.0) as u64).next_power_of_two();
        let mut out = vec![k];
        while k < m as u64 {
            k *= 2;
            out.push(k);
        }
        out
    }

    fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            omega: self.omega,
            repetitions: self.repetitions,
        }
    }
}

fn check_runs(set: &IntervalColoredSet, k: u64, what: &str) -> Result<()> {
    if set.len() as u64 > RUNS_PER_K * k {
        return Err(TphdError::InvalidInstance(format!(
            "{what} has {} runs, more than {RUNS_PER_K} * k = {}",
            set.len(),
            RUNS_PER_K * k
        )));
    }
    Ok(())
}

/// Approximate distances for run-length inputs with `O(k)` runs; additive
/// error about `eps * k` per shift. Positions not covered by any interval
/// match nothing.
pub fn approx_hamming_k<R: Rng + ?Sized>(
    text: &IntervalColoredSet,
    pattern: &IntervalColoredSet,
    k: u64,
    eps: f64,
    rng: &mut R,
) -> Result<DistanceVector> {
    approx_hamming_k_with(text, pattern, k, eps, &EstimatorConfig::default(), rng)
}

pub fn approx_hamming_k_with<R: Rng + ?Sized>(
    text: &IntervalColoredSet,
    pattern: &IntervalColoredSet,
    k: u64,
    eps: f64,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<DistanceVector> {
    let (n, m) = (text.n(), pattern.n());
    if m == 0 || m > n {
        return Err(TphdError::InvalidInstance(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    if k == 0 {
        return Err(TphdError::InvalidParameter("k must be positive".into()));
    }
    check_runs(text, k, "text")?;
    check_runs(pattern, k, "pattern")?;
    let reflected: Vec<ColoredInterval> = pattern
        .intervals()
        .iter()
        .map(|iv| ColoredInterval {
            start: m - iv.end,
            end: m - iv.start,
            color: iv.color,
        })
        .collect();
    let reflected = IntervalColoredSet::new(reflected, m)?;
    let counts = estimate_interval_counts_with(text, &reflected, k, eps, cfg, rng)?;
    let values = (0..=(n - m) as usize)
        .map(|i| m - counts.get(i + m as usize - 1).copied().unwrap_or(0).min(m))
        .collect();
    Ok(DistanceVector::new(values, DistanceKind::Hamming))
}

/// Approximate distances with multiplicative error `1 + O(eps)`.
pub fn approx_hamming<R: Rng + ?Sized>(text: &IntString, pattern: &IntString, eps: f64, rng: &mut R) -> Result<DistanceVector> {
    approx_hamming_with(text, pattern, &ApproxConfig::new(eps, rng.gen())?)
}

pub fn approx_hamming_with(text: &IntString, pattern: &IntString, cfg: &ApproxConfig) -> Result<DistanceVector> {
    validate_instance(text, pattern)?;
    cfg.validate()?;
    let m = pattern.len();
    let exact = exact_hamming(text, pattern, &mut stream(cfg.seed, 0))?;
    let cutoff = cfg.exact_cutoff(m);
    if exact.values.iter().all(|&d| d as f64 <= cutoff) {
        return Ok(exact);
    }
    let classes = cfg.classes(m);
    let per_class: Vec<Vec<u64>> = classes
        .iter()
        .enumerate()
        .map(|(idx, &k)| class_estimate(text, pattern, k, cfg, idx as u64 + 1))
        .collect::<Result<_>>()?;
    let values = exact
        .values
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d as f64 <= cutoff {
                return d;
            }
            let pick = per_class.iter().zip(&classes).position(|(est, &k)| est[i] <= k);
            per_class[pick.unwrap_or(classes.len() - 1)][i]
        })
        .collect();
    Ok(DistanceVector::new(values, DistanceKind::Hamming))
}

/// Estimated distances for every shift at sampling rate tuned to class `k`.
fn class_estimate(text: &IntString, pattern: &IntString, k: u64, cfg: &ApproxConfig, task: u64) -> Result<Vec<u64>> {
    let m = pattern.len();
    let t = (((cfg.eps * k as f64).powi(2) / (VARIANCE_CONSTANT * m as f64)).floor() as u64).max(1);
    let mut rng = stream(cfg.seed, task);
    let mut out = vec![0u64; text.len() - m + 1];
    let b_points: Vec<(i64, u32)> = pattern.chars().iter().enumerate().map(|(b, &c)| ((m - 1 - b) as i64, c)).collect();
    let b_set = ColoredSet::new(b_points, m as u64)?;
    for block in split_blocks(text, pattern)? {
        let nb = block.text.len();
        let a_points = block.text.chars().iter().enumerate().map(|(a, &c)| (a as i64, c)).collect();
        let a_set = ColoredSet::new(a_points, nb as u64)?;
        let shifts = block.shifts(m);
        let reps = cfg.estimator().repetitions_for(nb as u64);
        let mut runs: Vec<Vec<u64>> = Vec::with_capacity(reps);
        for _ in 0..reps {
            let est = estimate_colored_3sum_with(&a_set, &b_set, 1, t, cfg.omega, &mut rng)?;
            runs.push((0..shifts).map(|i| est.get(&((i + m - 1) as i64))).collect());
            if est.exact {
                break;
            }
        }
        for (i, slot) in out[block.offset..block.offset + shifts].iter_mut().enumerate() {
            let mut column: Vec<u64> = runs.iter().map(|r| r[i]).collect();
            column.sort_unstable();
            let matches = column[(column.len() - 1) / 2].min(m as u64);
            *slot = m as u64 - matches;
        }
    }
    Ok(out)
}
