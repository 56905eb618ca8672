//! On-disk matrix format: a gzip stream holding the magic `CDNFMAT1`, the
//! row and column counts as little-endian u64, then every value as a
//! little-endian f64 in column-major order. Column descriptors and row
//! provenance live in a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ColumnDescriptor, FeatureError, FeatureMatrix};

const MAGIC: &[u8; 8] = b"CDNFMAT1";
/// Refuse headers describing more values than this.
const MAX_VALUES: u64 = 1 << 31;
/// Values buffered before the next read is issued.
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub rows: usize,
    pub columns: Vec<ColumnDescriptor>,
    pub row_index: Vec<usize>,
}

fn format_err(msg: impl Into<String>) -> FeatureError {
    FeatureError::Format(msg.into())
}

/// Serialise the values of `matrix` into the compressed binary layout.
pub fn encode_matrix(values: &Array2<f64>) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    let write = |enc: &mut GzEncoder<Vec<u8>>| -> std::io::Result<()> {
        enc.write_all(MAGIC)?;
        enc.write_all(&(values.nrows() as u64).to_le_bytes())?;
        enc.write_all(&(values.ncols() as u64).to_le_bytes())?;
        for col in values.columns() {
            for v in col {
                enc.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    };
    write(&mut enc).expect("writing to memory");
    enc.finish().expect("writing to memory")
}

/// Parse the compressed binary layout back into a row-major array.
pub fn decode_matrix<R: Read>(reader: R) -> Result<Array2<f64>, FeatureError> {
    let mut dec = GzDecoder::new(reader);
    let mut header = [0u8; 24];
    dec.read_exact(&mut header)
        .map_err(|e| format_err(format!("truncated header: {e}")))?;
    if &header[..8] != MAGIC {
        return Err(format_err("bad magic"));
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let total = rows
        .checked_mul(cols)
        .filter(|t| *t <= MAX_VALUES)
        .ok_or_else(|| format_err(format!("{rows}x{cols} exceeds the size limit")))?;
    let total = total as usize;

    let mut column_major = Vec::with_capacity(total.min(CHUNK));
    let mut buf = vec![0u8; CHUNK * 8];
    while column_major.len() < total {
        let want = (total - column_major.len()).min(CHUNK) * 8;
        dec.read_exact(&mut buf[..want])
            .map_err(|e| format_err(format!("truncated body: {e}")))?;
        column_major.extend(
            buf[..want]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))),
        );
    }
    let mut trailing = [0u8; 1];
    match dec.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(format_err("trailing bytes after body")),
        Err(e) => return Err(format_err(format!("corrupt stream: {e}"))),
    }
    let (rows, cols) = (rows as usize, cols as usize);
    Ok(Array2::from_shape_fn((rows, cols), |(i, j)| column_major[j * rows + i]))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write the binary matrix and its JSON sidecar.
pub fn write_matrix(matrix: &FeatureMatrix, bin: &Path, sidecar: &Path) -> Result<(), FeatureError> {
    std::fs::write(bin, encode_matrix(&matrix.values)).map_err(io_err(bin))?;
    let meta = MatrixSidecar {
        rows: matrix.rows(),
        columns: matrix.columns.clone(),
        row_index: matrix.row_index.clone(),
    };
    let mut out = BufWriter::new(File::create(sidecar).map_err(io_err(sidecar))?);
    serde_json::to_writer_pretty(&mut out, &meta).map_err(|e| format_err(e.to_string()))?;
    out.flush().map_err(io_err(sidecar))
}

pub fn read_matrix(bin: &Path, sidecar: &Path) -> Result<FeatureMatrix, FeatureError> {
    let values = decode_matrix(BufReader::new(File::open(bin).map_err(io_err(bin))?))?;
    let text = std::fs::read_to_string(sidecar).map_err(io_err(sidecar))?;
    let meta: MatrixSidecar =
        serde_json::from_str(&text).map_err(|e| format_err(format!("sidecar: {e}")))?;
    if meta.rows != values.nrows()
        || meta.columns.len() != values.ncols()
        || meta.row_index.len() != values.nrows()
    {
        return Err(format_err("sidecar does not match matrix shape"));
    }
    Ok(FeatureMatrix {
        columns: meta.columns,
        values,
        row_index: meta.row_index,
    })
}
