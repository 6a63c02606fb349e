//! Subcommand implementations.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use tphd::approx::{approx_hamming_k, approx_hamming_with, ApproxConfig};
use tphd::estimate::IntervalColoredSet;
use tphd::exact::{dominance_counts, exact_hamming, exact_hamming_det, hamming_abrahamson, hamming_fft};
use tphd::matrix::IntMatrix;
use tphd::reductions::equality_product_to_hamming;
use tphd::rng::stream;
use tphd::strings::{dominance_oracle, hamming_oracle, validate_instance};
use tphd::sumset::{sumset_counts_weighted, to_weighted};
use tphd::{DistanceVector, IntString};

use crate::io::{csv_err, output, read_string, write_distances, write_string, CliError, CliResult};
use crate::{Algo, ApproxArgs, BenchArgs, DistArgs, GenArgs, GenKind, VerifyArgs};

fn hamming(algo: Algo, t: &IntString, p: &IntString, seed: u64, eps: f64) -> CliResult<DistanceVector> {
    Ok(match algo {
        Algo::Naive => hamming_oracle(t, p)?,
        Algo::Fft => hamming_fft(t, p)?,
        Algo::AbrahamsonStyle => hamming_abrahamson(t, p)?,
        Algo::Exact => exact_hamming(t, p, &mut stream(seed, 0))?,
        Algo::ExactDet => exact_hamming_det(t, p)?,
        Algo::Approx => approx_hamming_with(t, p, &ApproxConfig::new(eps, seed)?)?,
        Algo::Dom => dominance_counts(t, p, &mut stream(seed, 0))?,
    })
}

fn dominance(algo: Algo, t: &IntString, p: &IntString, seed: u64) -> CliResult<DistanceVector> {
    match algo {
        Algo::Naive => Ok(dominance_oracle(t, p)?),
        Algo::Exact | Algo::Dom => Ok(dominance_counts(t, p, &mut stream(seed, 0))?),
        other => Err(CliError::Invalid(format!(
            "algorithm {} does not compute dominance counts",
            other.name()
        ))),
    }
}

fn load(input: &crate::InputArgs) -> CliResult<(IntString, IntString)> {
    let t = read_string(&input.text, input.ints)?;
    let p = read_string(&input.pattern, input.ints)?;
    validate_instance(&t, &p)?;
    Ok((t, p))
}

pub fn dist(args: &DistArgs, dom: bool) -> CliResult<()> {
    let (t, p) = load(&args.input)?;
    let d = if dom {
        dominance(args.algo, &t, &p, args.seed)?
    } else {
        hamming(args.algo, &t, &p, args.seed, args.eps)?
    };
    write_distances(args.out.as_deref(), &d)
}

pub fn approx(args: &ApproxArgs) -> CliResult<()> {
    let (t, p) = load(&args.input)?;
    let d = match args.k {
        Some(k) => approx_hamming_k(
            &IntervalColoredSet::from_runs(t.chars()),
            &IntervalColoredSet::from_runs(p.chars()),
            k,
            args.eps,
            &mut stream(args.seed, 0),
        )?,
        None => approx_hamming_with(&t, &p, &ApproxConfig::new(args.eps, args.seed)?)?,
    };
    write_distances(args.out.as_deref(), &d)
}

fn random_string<R: Rng>(rng: &mut R, len: usize, sigma: u32) -> CliResult<IntString> {
    Ok(IntString::new((0..len).map(|_| rng.gen_range(0..sigma)).collect(), sigma)?)
}

fn check_sizes(n: usize, m: usize, sigma: u32) -> CliResult<()> {
    if m == 0 || m > n || sigma == 0 {
        return Err(CliError::Invalid(format!(
            "need 1 <= m <= n and sigma >= 1, got n={n}, m={m}, sigma={sigma}"
        )));
    }
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> CliResult<()> {
    if args.trials == 0 {
        return Err(CliError::Invalid("--trials must be positive".into()));
    }
    let m = args.m.unwrap_or((args.n / 4).max(1));
    check_sizes(args.n, m, args.sigma)?;
    let mut failures = Vec::new();
    let mut worst_ratio = 1.0f64;
    let mut out_of_budget = 0usize;
    for trial in 0..args.trials {
        let mut rng = stream(args.seed, trial as u64);
        let t = random_string(&mut rng, args.n, args.sigma)?;
        let p = random_string(&mut rng, m, args.sigma)?;
        let run_seed: u64 = rng.gen();
        let ok = match args.algo {
            Algo::Dom => dominance(Algo::Dom, &t, &p, run_seed)? == dominance_oracle(&t, &p)?,
            Algo::Approx => {
                let got = hamming(Algo::Approx, &t, &p, run_seed, args.eps)?;
                let want = hamming_oracle(&t, &p)?;
                let mut fine = true;
                for (&g, &w) in got.values.iter().zip(&want.values) {
                    let (g, w) = (g as f64, w as f64);
                    if g > (1.0 + args.eps) * w || w > (1.0 + args.eps) * g {
                        out_of_budget += 1;
                        fine = false;
                    }
                    if g.min(w) > 0.0 {
                        worst_ratio = worst_ratio.max(g.max(w) / g.min(w));
                    }
                }
                fine
            }
            algo => hamming(algo, &t, &p, run_seed, args.eps)? == hamming_oracle(&t, &p)?,
        };
        if !ok {
            failures.push(trial);
        }
    }
    println!(
        "algo={} trials={} n={} m={m} sigma={} seed={}",
        args.algo.name(),
        args.trials,
        args.n,
        args.sigma,
        args.seed
    );
    if args.algo == Algo::Approx {
        println!("eps={} worst_ratio={worst_ratio:.4} shifts_out_of_budget={out_of_budget}", args.eps);
    }
    for trial in &failures {
        println!("failed trial={trial} (instance stream {trial} of seed {})", args.seed);
    }
    if failures.is_empty() {
        println!("all {} trials passed", args.trials);
        Ok(())
    } else {
        Err(CliError::Mismatch(format!(
            "{} of {} trials disagree with the oracle",
            failures.len(),
            args.trials
        )))
    }
}

fn median_millis(trials: usize, mut f: impl FnMut() -> CliResult<()>) -> CliResult<f64> {
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials.max(1) {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[(times.len() - 1) / 2])
}

/// Largest sumset universe the bench will allocate.
const BENCH_MAX_UNIVERSE: u64 = 1 << 22;

pub fn bench(args: &BenchArgs) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["algo", "n", "m", "sigma", "millis"]).map_err(csv_err)?;
    let mut grid = args.grid.clone();
    grid.sort_unstable();
    for (idx, &n) in grid.iter().enumerate() {
        let m = args.m.unwrap_or((n / 4).max(1)).min(n);
        check_sizes(n, m, args.sigma)?;
        let mut rng = stream(args.seed, idx as u64);
        let t = random_string(&mut rng, n, args.sigma)?;
        let p = random_string(&mut rng, m, args.sigma)?;
        for &algo in &args.algo {
            let ms = median_millis(args.trials, || hamming(algo, &t, &p, args.seed, args.eps).map(|_| ()))?;
            w.write_record([
                algo.name().to_string(),
                n.to_string(),
                m.to_string(),
                args.sigma.to_string(),
                format!("{ms:.3}"),
            ])
            .map_err(csv_err)?;
        }
        if args.sumset {
            // Sets of size n in [U/2]; the m column carries U.
            for (label, u) in [("sumset-u-n", 2 * n as u64), ("sumset-u-n2-4", (n as u64 * n as u64 / 4).max(4))] {
                let u = u.next_power_of_two();
                if u > BENCH_MAX_UNIVERSE {
                    eprintln!("tphd: skipping {label} at n={n}: universe {u} above {BENCH_MAX_UNIVERSE}");
                    continue;
                }
                let mut pick = || to_weighted((0..n).map(|_| rng.gen_range(0..u / 2)).collect::<std::collections::BTreeSet<u64>>());
                let (x, y) = (pick(), pick());
                let mut srng = stream(args.seed, 1 << 32 | idx as u64);
                let ms = median_millis(args.trials, || Ok(sumset_counts_weighted(&x, &y, u, &mut srng).map(|_| ())?))?;
                w.write_record([label.to_string(), n.to_string(), u.to_string(), "2".to_string(), format!("{ms:.3}")])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
    }
    w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))?.flush()?;
    Ok(())
}

pub fn gen(args: &GenArgs) -> CliResult<()> {
    let mut rng = stream(args.seed, 0);
    let (t, p) = match args.kind {
        GenKind::Random => {
            let m = args.m.unwrap_or((args.n / 4).max(1));
            check_sizes(args.n, m, args.sigma)?;
            (
                random_string(&mut rng, args.n, args.sigma)?,
                random_string(&mut rng, m, args.sigma)?,
            )
        }
        GenKind::Equality => {
            let n = args.n;
            if n == 0 || args.sigma == 0 {
                return Err(CliError::Invalid("need n >= 1 and sigma >= 1".into()));
            }
            let mut matrix = || IntMatrix::new(n, n, (0..n * n).map(|_| rng.gen_range(0..args.sigma as i64)).collect());
            let (a, b) = (matrix()?, matrix()?);
            let red = equality_product_to_hamming(&a, &b)?;
            (red.text, red.pattern)
        }
    };
    write_string(&args.text, &t, args.ints)?;
    write_string(&args.pattern, &p, args.ints)?;
    Ok(())
}
