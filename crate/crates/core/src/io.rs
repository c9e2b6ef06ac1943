//! Matrix file formats: MatrixMarket (coordinate and array), headerless CSV,
//! and a little-endian binary container for [`SampledMatrix`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sample_model::SampledMatrix;

/// Leading bytes of the binary container.
pub const BINARY_MAGIC: [u8; 8] = *b"ANKSMAT\0";
pub const BINARY_VERSION: u32 = 1;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Reads a real, integer, or pattern MatrixMarket file in either
/// coordinate or array layout.
pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<DenseMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_err(1, format!("unknown layout '{other}'"))),
    };
    let pattern = match tokens[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(parse_err(1, format!("unsupported field '{other}'"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter_map(|(no, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('%') => None,
        other => Some((no + 1, other)),
    });
    let (size_no, size_line) = body.next().ok_or_else(|| parse_err(2, "missing size line"))?;
    let size_line = size_line?;
    let sizes: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_no, "bad size token")))
        .collect::<Result<_>>()?;
    let (m, n) = match sizes.as_slice() {
        [m, n, _] if coordinate => (*m, *n),
        [m, n] if !coordinate => (*m, *n),
        _ => return Err(parse_err(size_no, "wrong number of size fields")),
    };
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut a = DenseMatrix::zeros(m, n);
    let parse_f = |no: usize, t: &str| -> Result<f64> {
        t.parse::<f64>()
            .map_err(|_| parse_err(no, format!("bad number '{t}'")))
    };

    if coordinate {
        let nnz = sizes[2];
        let mut seen = 0;
        for (no, line) in body {
            let line = line?;
            let t: Vec<&str> = line.split_whitespace().collect();
            let expected = if pattern { 2 } else { 3 };
            if t.len() < expected {
                return Err(parse_err(no, "too few fields"));
            }
            let i: usize = t[0].parse().map_err(|_| parse_err(no, "bad row index"))?;
            let j: usize = t[1].parse().map_err(|_| parse_err(no, "bad column index"))?;
            if i == 0 || j == 0 || i > m || j > n {
                return Err(parse_err(no, format!("index ({i}, {j}) out of range")));
            }
            let v = if pattern { 1.0 } else { parse_f(no, t[2])? };
            a[(i - 1, j - 1)] = v;
            if i != j {
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => a[(j - 1, i - 1)] = v,
                    Symmetry::SkewSymmetric => a[(j - 1, i - 1)] = -v,
                }
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(size_no, format!("expected {nnz} entries, found {seen}")));
        }
    } else {
        if symmetry != Symmetry::General {
            return Err(parse_err(1, "only general array files are supported"));
        }
        let mut k = 0;
        for (no, line) in body {
            let line = line?;
            for t in line.split_whitespace() {
                if k >= m * n {
                    return Err(parse_err(no, "too many entries"));
                }
                // array layout is column-major
                a[(k % m, k / m)] = parse_f(no, t)?;
                k += 1;
            }
        }
        if k != m * n {
            return Err(parse_err(size_no, format!("expected {} entries, found {k}", m * n)));
        }
    }
    DenseMatrix::from_row_major(m, n, a.as_slice().to_vec())
}

/// Writes a dense matrix in MatrixMarket array layout (column-major,
/// shortest round-trip float formatting).
pub fn write_matrix_market<W: Write>(mut w: W, a: &DenseMatrix) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            writeln!(w, "{:?}", a[(i, j)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless CSV of numbers; every line is a row.
pub fn read_csv<R: BufRead>(reader: R) -> Result<DenseMatrix> {
    let mut rows = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(no + 1, format!("bad number '{}'", t.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    DenseMatrix::from_rows(&rows)
}

pub fn write_binary<W: Write>(mut w: W, a: &SampledMatrix) -> Result<()> {
    w.write_all(&BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for i in 0..a.nrows() {
        let row = a.row(i);
        for j in 0..a.ncols() {
            w.write_all(&row.entry(j).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the binary container and rebuilds all trees.
pub fn read_binary<R: Read>(mut r: R) -> Result<SampledMatrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != BINARY_MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let m = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let count = m
        .checked_mul(n)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        entries.push(f64::from_le_bytes(b8));
    }
    SampledMatrix::from_row_major(m, n, &entries)
}

/// Loads a matrix by file extension: `.mtx`, `.csv`, or `.smx` (binary).
pub fn load_matrix(path: &Path) -> Result<SampledMatrix> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let file = File::open(path)?;
    match ext.as_str() {
        "smx" | "bin" => read_binary(BufReader::new(file)),
        "csv" => SampledMatrix::from_dense(&read_csv(BufReader::new(file))?),
        _ => SampledMatrix::from_dense(&read_matrix_market(BufReader::new(file))?),
    }
}

pub fn save_binary(path: &Path, a: &SampledMatrix) -> Result<()> {
    write_binary(BufWriter::new(File::create(path)?), a)
}
