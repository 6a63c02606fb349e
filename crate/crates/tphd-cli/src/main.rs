//! `tphd` command-line front end.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "tphd",
    version,
    about = "Text-to-pattern Hamming distances: exact, approximate and dominance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distance of the pattern against every text window, as CSV.
    Dist(DistArgs),
    /// Dominance counts |{j : P[j] < T[i+j]}| for every shift, as CSV.
    Dom(DistArgs),
    /// (1 + eps)-approximate distances, as CSV.
    Approx(ApproxArgs),
    /// Compares an algorithm with the brute-force oracle on random instances.
    Verify(VerifyArgs),
    /// Times algorithms over a grid of sizes.
    Bench(BenchArgs),
    /// Writes a generated instance to the text and pattern paths.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Naive,
    Fft,
    #[value(name = "abrahamson-style")]
    AbrahamsonStyle,
    Exact,
    #[value(name = "exact-det")]
    ExactDet,
    Approx,
    Dom,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Naive => "naive",
            Algo::Fft => "fft",
            Algo::AbrahamsonStyle => "abrahamson-style",
            Algo::Exact => "exact",
            Algo::ExactDet => "exact-det",
            Algo::Approx => "approx",
            Algo::Dom => "dom",
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Text file.
    #[arg(long)]
    pub text: PathBuf,
    /// Pattern file.
    #[arg(long)]
    pub pattern: PathBuf,
    /// Read whitespace-separated integers instead of raw bytes.
    #[arg(long)]
    pub ints: bool,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "exact")]
    pub algo: Algo,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Accuracy for `--algo approx`.
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    /// Run the additive-error matcher on the run-length form with this k.
    #[arg(long)]
    pub k: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "exact")]
    pub algo: Algo,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Text length.
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Pattern length; `n / 4` when absent.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub sigma: u32,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Algorithms to time, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "naive,exact")]
    pub algo: Vec<Algo>,
    /// Text lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![4096usize, 8192, 16384])]
    pub grid: Vec<usize>,
    /// Pattern length; `n / 4` when absent.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub sigma: u32,
    /// Timed repetitions per row; the median is reported.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    /// Also time sumset counting with universes near n and n^2/4.
    #[arg(long)]
    pub sumset: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Uniform random text and pattern.
    Random,
    /// Hamming instance encoding the equality product of two random n x n matrices.
    Equality,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "random")]
    pub kind: GenKind,
    /// Text length, or matrix size for `--kind equality`.
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub sigma: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write whitespace-separated integers instead of raw bytes.
    #[arg(long)]
    pub ints: bool,
    /// Output path of the text.
    #[arg(long)]
    pub text: PathBuf,
    /// Output path of the pattern.
    #[arg(long)]
    pub pattern: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dist(a) => commands::dist(&a, false),
        Command::Dom(a) => commands::dist(&a, true),
        Command::Approx(a) => commands::approx(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Gen(a) => commands::gen(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tphd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
