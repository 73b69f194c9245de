use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("missing or malformed `#dims=` header")]
    BadHeader,
    #[error("line {line}: expected {expected} values, found {found}")]
    RowLength { line: usize, expected: usize, found: usize },
    #[error("line {line}: {source}")]
    BadNumber { line: usize, source: std::num::ParseFloatError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes `#dims=<n>` followed by one tab-separated row per frame.
pub fn write_feature_dump<'a, W: Write>(
    mut w: W,
    dims: usize,
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<(), DumpError> {
    writeln!(w, "#dims={dims}")?;
    for row in rows {
        if row.len() != dims {
            return Err(DumpError::RowLength { line: 0, expected: dims, found: row.len() });
        }
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b"\t")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_feature_dump<R: BufRead>(r: R) -> Result<(usize, Vec<Vec<f64>>), DumpError> {
    let mut lines = r.lines();
    let header = lines.next().ok_or(DumpError::BadHeader)??;
    let dims: usize = header.strip_prefix("#dims=").and_then(|d| d.trim().parse().ok()).ok_or(DumpError::BadHeader)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|t| t.trim().parse::<f64>().map_err(|source| DumpError::BadNumber { line: i + 2, source }))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != dims {
            return Err(DumpError::RowLength { line: i + 2, expected: dims, found: row.len() });
        }
        rows.push(row);
    }
    Ok((dims, rows))
}
