//! Reading instances and writing CSV.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use tphd::{DistanceVector, IntString, TphdError};

/// Failure of a subcommand, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input, configuration or I/O: exit code 2.
    Invalid(String),
    /// A verification mismatch: exit code 1.
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Mismatch(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(msg) | CliError::Mismatch(msg) => f.write_str(msg),
        }
    }
}

impl From<TphdError> for CliError {
    fn from(e: TphdError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_string(path: &Path, ints: bool) -> CliResult<IntString> {
    let bytes = fs::read(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    if !ints {
        return Ok(IntString::from_bytes(&bytes));
    }
    let text = String::from_utf8(bytes).map_err(|_| CliError::Invalid(format!("{}: not UTF-8", path.display())))?;
    let codes = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<u32>()
                .map_err(|e| CliError::Invalid(format!("{}: bad integer {tok:?}: {e}", path.display())))
        })
        .collect::<CliResult<Vec<u32>>>()?;
    Ok(IntString::from_codes(codes))
}

pub fn write_string(path: &Path, s: &IntString, ints: bool) -> CliResult<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if ints {
        for (i, c) in s.chars().iter().enumerate() {
            if i > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{c}")?;
        }
        w.write_all(b"\n")?;
    } else {
        let bytes = s
            .chars()
            .iter()
            .map(|&c| u8::try_from(c).map_err(|_| CliError::Invalid(format!("code {c} does not fit a byte; use --ints"))))
            .collect::<CliResult<Vec<u8>>>()?;
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

/// Standard output or a file.
pub fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_distances(path: Option<&Path>, d: &DistanceVector) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(output(path)?);
    w.write_record(["shift", "distance"]).map_err(csv_err)?;
    for (i, v) in d.values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_err(e: csv::Error) -> CliError {
    CliError::Invalid(e.to_string())
}
