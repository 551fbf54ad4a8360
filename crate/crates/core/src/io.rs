//! Sample files, CSV import, unmixing documents and atomic output.
//!
//! The TBSS1 binary layout is
//!
//! ```text
//! "TBSS1"  5 bytes magic
//! 'L'      byte order tag (little-endian)
//! 'd'      element tag (f64)
//! u32      tensor order r
//! u64 * r  dimensions
//! u64      observation count n
//! f64 * nρ payload, observation after observation, each row-major
//! ```
//!
//! with every integer and float little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TbssError};
use crate::estimators::UnmixingResult;
use crate::tensor::{multi_index, vec_kronecker, Matrix, TensorSample};

pub const MAGIC: &[u8; 5] = b"TBSS1";
const BYTE_ORDER_TAG: u8 = b'L';
const ELEMENT_TAG: u8 = b'd';

/// Serializes a sample into TBSS1 bytes.
pub fn encode_sample(s: &TensorSample) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 4 + 8 * (s.order() + 1) + 8 * s.data().len());
    out.extend_from_slice(MAGIC);
    out.push(BYTE_ORDER_TAG);
    out.push(ELEMENT_TAG);
    out.extend_from_slice(&(s.order() as u32).to_le_bytes());
    for &d in s.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(s.n() as u64).to_le_bytes());
    for v in s.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TbssError::Format(format!("header ends before the {what} field")))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

fn to_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| TbssError::Format(format!("{what} {v} does not fit in memory")))
}

/// Parses TBSS1 bytes.
pub fn decode_sample(bytes: &[u8]) -> Result<TensorSample> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(5, "magic").ok() != Some(MAGIC.as_slice()) {
        return Err(TbssError::Format("missing TBSS1 magic".into()));
    }
    let tags = c.take(2, "type tag")?;
    if tags[0] != BYTE_ORDER_TAG {
        return Err(TbssError::Format(format!(
            "unsupported byte order tag {:?}",
            tags[0] as char
        )));
    }
    if tags[1] != ELEMENT_TAG {
        return Err(TbssError::Format(format!(
            "unsupported element tag {:?}",
            tags[1] as char
        )));
    }
    let order = c.u32("order")? as usize;
    if order == 0 {
        return Err(TbssError::Format("tensor order is zero".into()));
    }
    let dims = (0..order)
        .map(|_| c.u64("dimension").and_then(|d| to_usize(d, "dimension")))
        .collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(TbssError::Format(format!("zero dimension in {dims:?}")));
    }
    let n = to_usize(c.u64("observation count")?, "observation count")?;
    let expected = dims
        .iter()
        .try_fold(n, |acc, &d| acc.checked_mul(d))
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| TbssError::Format("payload size overflows".into()))?;
    let payload = &bytes[c.pos..];
    if payload.len() != expected {
        return Err(TbssError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    TensorSample::new(dims, data)
}

pub fn read_sample(path: &Path) -> Result<TensorSample> {
    decode_sample(&fs::read(path)?)
}

pub fn write_sample(path: &Path, s: &TensorSample) -> Result<()> {
    write_atomic(path, &encode_sample(s))
}

/// Parses CSV text with one flattened observation per line.
pub fn parse_csv(text: &str, dims: &[usize]) -> Result<TensorSample> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(TbssError::Config(format!("invalid --dims {dims:?}")));
    }
    let rho: usize = dims.iter().product();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TbssError::Format(format!("csv: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != rho {
            return Err(TbssError::Shape(format!(
                "line {line} has {} columns but --dims {dims:?} needs {rho}",
                record.len()
            )));
        }
        for f in record.iter() {
            let v: f64 = f
                .parse()
                .map_err(|_| TbssError::Format(format!("line {line}: `{f}` is not a number")))?;
            data.push(v);
        }
    }
    TensorSample::new(dims.to_vec(), data)
}

pub fn read_csv(path: &Path, dims: &[usize]) -> Result<TensorSample> {
    parse_csv(&fs::read_to_string(path)?, dims)
}

/// Reads a TBSS1 file, or a CSV file when `csv_dims` is given.
pub fn read_input(path: &Path, csv_dims: Option<&[usize]>) -> Result<TensorSample> {
    match csv_dims {
        Some(dims) => read_csv(path, dims),
        None => read_sample(path),
    }
}

/// Writes to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| TbssError::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDocument {
    /// 1-based.
    pub mode: usize,
    pub estimator: String,
    /// Row-major rows of `Γ̂_m`.
    pub unmixing: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    pub sweeps: Option<usize>,
    pub converged: Option<bool>,
    pub off_objective: Option<f64>,
    pub weak_separation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopComponent {
    /// 1-based multi-index into the latent tensor.
    pub index: Vec<usize>,
    pub excess_kurtosis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixingDocument {
    pub dims: Vec<usize>,
    pub n: usize,
    pub vectorized: bool,
    pub modes: Vec<ModeDocument>,
    pub top_component: Option<TopComponent>,
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(TbssError::Format("ragged unmixing matrix".into()));
    }
    Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Excess kurtosis of every latent cell.
pub fn cell_kurtosis(s: &TensorSample) -> Vec<f64> {
    let rho = s.rho();
    let n = s.n() as f64;
    let mut m1 = vec![0.0; rho];
    for obs in s.observations() {
        for (a, v) in m1.iter_mut().zip(obs) {
            *a += v;
        }
    }
    m1.iter_mut().for_each(|v| *v /= n);
    let (mut m2, mut m4) = (vec![0.0; rho], vec![0.0; rho]);
    for obs in s.observations() {
        for c in 0..rho {
            let d = obs[c] - m1[c];
            let d2 = d * d;
            m2[c] += d2;
            m4[c] += d2 * d2;
        }
    }
    (0..rho)
        .map(|c| {
            let v = m2[c] / n;
            (m4[c] / n) / (v * v) - 3.0
        })
        .collect()
}

impl UnmixingDocument {
    pub fn from_result(result: &UnmixingResult) -> Self {
        let modes = result
            .modes
            .iter()
            .map(|f| ModeDocument {
                mode: f.mode + 1,
                estimator: f.estimator.to_string(),
                unmixing: matrix_rows(&f.unmixing),
                kappa: f.kappa.clone(),
                sweeps: f.diagnostics.sweeps,
                converged: f.diagnostics.converged,
                off_objective: f.diagnostics.off_objective,
                weak_separation: f.diagnostics.weak_separation,
            })
            .collect();
        let kurt = cell_kurtosis(&result.latent);
        let top_component = kurt
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_finite())
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(c, &k)| TopComponent {
                index: multi_index(result.latent.dims(), c)
                    .into_iter()
                    .map(|i| i + 1)
                    .collect(),
                excess_kurtosis: k,
            });
        Self {
            dims: result.dims.clone(),
            n: result.latent.n(),
            vectorized: result.vectorized,
            modes,
            top_component,
        }
    }

    pub fn unmixing_matrices(&self) -> Result<Vec<Matrix>> {
        self.modes
            .iter()
            .map(|m| rows_matrix(&m.unmixing))
            .collect()
    }

    /// The full `rho x rho` unmixing matrix in vectorization coordinates.
    pub fn full_unmixing(&self) -> Result<Matrix> {
        let mats = self.unmixing_matrices()?;
        if self.vectorized {
            mats.into_iter()
                .next()
                .ok_or_else(|| TbssError::Format("vectorized document has no matrix".into()))
        } else {
            vec_kronecker(&mats)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
