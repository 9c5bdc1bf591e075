//! Matrix Market coordinate format (real/integer, general) reader and
//! writer for the input matrix A.

use crate::error::{Result, ScaleError};
use crate::sparse::CsrMatrix;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub fn read_matrix_market<R: Read>(reader: R) -> Result<CsrMatrix> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| ScaleError::Parse("empty MatrixMarket file".into()))??;
    let lower = header.to_ascii_lowercase();
    if !lower.starts_with("%%matrixmarket") {
        return Err(ScaleError::Parse("missing %%MatrixMarket header".into()));
    }
    if !lower.contains("matrix") || !lower.contains("coordinate") {
        return Err(ScaleError::Parse("only coordinate matrices are supported".into()));
    }
    if !(lower.contains("real") || lower.contains("integer")) || !lower.contains("general") {
        return Err(ScaleError::Parse(
            "only real/integer general coordinate matrices are supported".into(),
        ));
    }
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(ScaleError::Parse(format!("bad size line: {text}")));
                }
                let parse = |s: &str| {
                    s.parse::<usize>().map_err(|_| ScaleError::Parse(format!("bad size: {s}")))
                };
                dims = Some((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
                triplets.reserve(dims.unwrap().2);
            }
            Some(_) => {
                if fields.len() != 3 {
                    return Err(ScaleError::Parse(format!("bad entry line: {text}")));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| ScaleError::Parse(format!("bad row index: {}", fields[0])))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| ScaleError::Parse(format!("bad col index: {}", fields[1])))?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| ScaleError::Parse(format!("bad value: {}", fields[2])))?;
                if i == 0 || j == 0 {
                    return Err(ScaleError::Parse("indices are 1-based".into()));
                }
                triplets.push((i - 1, j - 1, v));
            }
        }
    }
    let (d, n, nnz) = dims.ok_or_else(|| ScaleError::Parse("missing size line".into()))?;
    if triplets.len() != nnz {
        return Err(ScaleError::Parse(format!(
            "size line promises {nnz} entries, found {}",
            triplets.len()
        )));
    }
    CsrMatrix::from_triplets(d, n, triplets)
}

pub fn read_matrix_market_path(path: &Path) -> Result<CsrMatrix> {
    read_matrix_market(std::fs::File::open(path)?)
}

pub fn write_matrix_market<W: Write>(w: &mut W, m: &CsrMatrix) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for i in 0..m.nrows() {
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

/// Parse a marginal vector: either an inline comma/space separated
/// integer list, or a path to a whitespace-separated integer file.
pub fn parse_marginals(spec: &str, expected_len: usize) -> Result<Vec<u64>> {
    let inline: std::result::Result<Vec<u64>, _> = spec
        .split(|ch: char| ch == ',' || ch.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>())
        .collect();
    let values = match inline {
        Ok(values) if !values.is_empty() && (values.len() > 1 || !Path::new(spec).exists()) => {
            values
        }
        _ => {
            let text = std::fs::read_to_string(spec)?;
            text.split_whitespace()
                .map(|s| {
                    s.parse::<u64>().map_err(|_| ScaleError::Parse(format!("bad integer: {s}")))
                })
                .collect::<Result<Vec<u64>>>()?
        }
    };
    if values.len() != expected_len {
        return Err(ScaleError::DimensionMismatch(format!(
            "marginal has {} entries, expected {expected_len}",
            values.len()
        )));
    }
    Ok(values)
}
