use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scalar::{dot, norm};
use crate::{Error, Real, Result};

/// Row layout written after the JSON header line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    /// Raw little-endian f64 row block.
    F64le,
    /// One `{"id", "values"}` object per line.
    Jsonl,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: MatrixFormat,
    dim: usize,
    rows: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Row<T> {
    id: String,
    values: Vec<T>,
}

/// `n` unit-norm rows of width `dim`, row-major, with unique ids.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix<T> {
    pub dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
}

fn unit_tolerance<T: Real>() -> f64 {
    (16.0 * T::epsilon().to_f64_lossy()).max(1e-9)
}

impl<T: Real> EmbeddingMatrix<T> {
    pub fn from_rows(dim: usize, ids: Vec<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::DimensionMismatch { expected: ids.len(), found: rows.len() });
        }
        let mut data = Vec::with_capacity(dim * rows.len());
        for (id, r) in ids.iter().zip(&rows) {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
            }
            let n = norm(r).to_f64_lossy();
            if (n - 1.0).abs().is_nan() || (n - 1.0).abs() > unit_tolerance::<T>() {
                return Err(Error::out_of_range("embedding norm", format!("row {id} has norm {n}")));
            }
            data.extend_from_slice(r);
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidBatch(format!("duplicate embedding id {id}")));
            }
        }
        Ok(EmbeddingMatrix { dim, ids, index, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.len())
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<&[T]> {
        Ok(self.row(self.index_of(id)?))
    }

    /// Cosine of rows `i` and `j`.
    pub fn cosine(&self, i: usize, j: usize) -> T {
        dot(self.row(i), self.row(j))
    }

    /// Rows whose position satisfies `keep`, in order.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        let picked: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        let ids: Vec<String> = picked.iter().map(|&i| self.ids[i].clone()).collect();
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let data = picked.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        EmbeddingMatrix { dim: self.dim, ids, index, data }
    }

    pub fn write_to(&self, out: &mut impl Write, format: MatrixFormat) -> Result<()> {
        let ids = if format == MatrixFormat::F64le { self.ids.clone() } else { Vec::new() };
        let header = Header { format, dim: self.dim, rows: self.len(), ids };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        match format {
            MatrixFormat::F64le => {
                let mut buf = Vec::with_capacity(8 * self.data.len());
                self.data.iter().for_each(|v| v.write_le(&mut buf));
                out.write_all(&buf)?;
            }
            MatrixFormat::Jsonl => {
                for (i, id) in self.ids.iter().enumerate() {
                    let values: Vec<f64> = self.row(i).iter().map(|v| v.to_f64_lossy()).collect();
                    serde_json::to_writer(&mut *out, &Row { id: id.clone(), values })?;
                    out.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        match header.format {
            MatrixFormat::F64le => {
                if header.ids.len() != header.rows {
                    return Err(Error::DimensionMismatch { expected: header.rows, found: header.ids.len() });
                }
                let mut bytes = Vec::new();
                input.read_to_end(&mut bytes)?;
                if bytes.len() != 8 * header.rows * header.dim {
                    return Err(Error::DimensionMismatch {
                        expected: 8 * header.rows * header.dim,
                        found: bytes.len(),
                    });
                }
                let vals: Vec<T> = bytes
                    .chunks_exact(8)
                    .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
                    .collect();
                let rows = vals.chunks(header.dim.max(1)).take(header.rows).map(<[T]>::to_vec).collect();
                Self::from_rows(header.dim, header.ids, rows)
            }
            MatrixFormat::Jsonl => {
                let (mut ids, mut rows) = (Vec::new(), Vec::new());
                for l in input.lines() {
                    let l = l?;
                    if l.trim().is_empty() {
                        continue;
                    }
                    let r: Row<f64> = serde_json::from_str(&l)?;
                    ids.push(r.id);
                    rows.push(r.values.into_iter().map(T::of).collect());
                }
                if ids.len() != header.rows {
                    return Err(Error::DimensionMismatch { expected: header.rows, found: ids.len() });
                }
                Self::from_rows(header.dim, ids, rows)
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w, format)?;
        w.flush().map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(f))
    }
}
