//! The `WICE` embedding interchange format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    4 bytes  "WICE"
//! version  u16      1
//! dim      u32      d
//! count    u64      number of records
//! record*  id_len u16, id bytes (UTF-8), e1 as d x f32, e2 as d x f32
//! ```
//!
//! Readers reject any file whose record count disagrees with the header,
//! including trailing bytes, rather than loading it partially.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::{Dataset, Instance, Task};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WICE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub instance_id: String,
    pub e1: Vec<f32>,
    pub e2: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(instance_id: impl Into<String>, e1: Vec<f32>, e2: Vec<f32>) -> Self {
        Self {
            instance_id: instance_id.into(),
            e1,
            e2,
        }
    }

    /// Bytes this record occupies in a store of dimension `dim`.
    pub fn encoded_len(&self, dim: usize) -> usize {
        2 + self.instance_id.len() + 2 * dim * 4
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.e1.len());
        let mut index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            validate_record(rec, dim)?;
            if index.insert(rec.instance_id.clone(), i).is_some() {
                return Err(Error::invalid_data(
                    format!("embedding record {}", rec.instance_id),
                    "duplicate instance_id",
                ));
            }
        }
        Ok(Self {
            dim,
            records,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, instance_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(instance_id).map(|&i| &self.records[i])
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .records
                .iter()
                .map(|r| r.encoded_len(self.dim))
                .sum::<usize>()
    }
}

fn validate_record(rec: &EmbeddingRecord, dim: usize) -> Result<()> {
    let ctx = || format!("embedding record {}", rec.instance_id);
    if dim == 0 {
        return Err(Error::invalid_data(ctx(), "dimension must be positive"));
    }
    for v in [&rec.e1, &rec.e2] {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    if rec.e1.iter().chain(&rec.e2).any(|x| !x.is_finite()) {
        return Err(Error::invalid_data(ctx(), "non-finite component"));
    }
    if rec.instance_id.len() > u16::MAX as usize {
        return Err(Error::invalid_data(ctx(), "instance_id longer than 65535 bytes"));
    }
    Ok(())
}

pub fn encode_store(records: &[EmbeddingRecord]) -> Result<Vec<u8>> {
    let Some(first) = records.first() else {
        return Err(Error::InvalidInput("cannot write an empty embedding store".into()));
    };
    let dim = first.e1.len();
    for rec in records {
        validate_record(rec, dim)?;
    }
    let dim_u32 = u32::try_from(dim)
        .map_err(|_| Error::InvalidInput(format!("dimension {dim} exceeds u32")))?;

    let mut buf = Vec::with_capacity(
        HEADER_LEN + records.iter().map(|r| r.encoded_len(dim)).sum::<usize>(),
    );
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&dim_u32.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for rec in records {
        buf.extend_from_slice(&(rec.instance_id.len() as u16).to_le_bytes());
        buf.extend_from_slice(rec.instance_id.as_bytes());
        for x in rec.e1.iter().chain(&rec.e2) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn write_store(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    let bytes = encode_store(records)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.pos as u64,
                format!(
                    "truncated file: need {n} bytes for {what}, {} remain",
                    self.buf.len() - self.pos
                ),
            )),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        Ok(self
            .take(n * 4, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_store(bytes: &[u8]) -> Result<EmbeddingStore> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected `WICE`"));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dim = cur.u32("dimension")? as usize;
    if dim == 0 {
        return Err(Error::format(6, "dimension must be positive"));
    }
    let count = cur.u64("record count")?;
    // Cap the allocation by what the file could hold; a lying header then
    // fails below with the offset of the first missing record.
    let min_record = 2 + 8 * dim as u64;
    let capacity = count.min((bytes.len() - HEADER_LEN) as u64 / min_record);
    let mut records = Vec::with_capacity(capacity as usize);
    for _ in 0..count {
        let start = cur.pos as u64;
        let id_len = cur.u16("id length")? as usize;
        let id = std::str::from_utf8(cur.take(id_len, "instance id")?)
            .map_err(|_| Error::format(start + 2, "instance id is not valid UTF-8"))?
            .to_string();
        let e1 = cur.f32s(dim, "e1")?;
        let e2 = cur.f32s(dim, "e2")?;
        records.push(EmbeddingRecord::new(id, e1, e2));
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            cur.pos as u64,
            format!(
                "{} trailing bytes after the {count} declared records",
                bytes.len() - cur.pos
            ),
        ));
    }
    EmbeddingStore::new(records)
}

pub fn read_store(path: &Path) -> Result<EmbeddingStore> {
    decode_store(&fs::read(path)?)
}

/// Debug export: header, then `instance_id` followed by the 2d components
/// of e1 and e2, each with 9 significant digits.
pub fn write_debug_tsv(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "instance_id")?;
    for side in ["e1", "e2"] {
        for i in 0..store.dim() {
            write!(out, "\t{side}_{i}")?;
        }
    }
    writeln!(out)?;
    for rec in store.records() {
        write!(out, "{}", rec.instance_id)?;
        for x in rec.e1.iter().chain(&rec.e2) {
            write!(out, "\t{x:.8e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Row-aligned view of one dataset split over an embedding store.
#[derive(Debug, Clone)]
pub struct AlignedSplit {
    pub ids: Vec<String>,
    pub languages: Vec<String>,
    /// n x d, upcast to f64.
    pub e1: Array2<f64>,
    pub e2: Array2<f64>,
    /// `None` for unlabeled rows.
    pub targets: Vec<Option<f64>>,
}

impl AlignedSplit {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.e1.ncols()
    }

    /// Targets of a fully labeled split.
    pub fn labeled_targets(&self) -> Result<Vec<f64>> {
        self.targets
            .iter()
            .zip(&self.ids)
            .map(|(t, id)| {
                t.ok_or_else(|| Error::invalid_data(format!("instance {id}"), "no target"))
            })
            .collect()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> AlignedSplit {
        AlignedSplit {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            languages: idx.iter().map(|&i| self.languages[i].clone()).collect(),
            e1: self.e1.select(ndarray::Axis(0), idx),
            e2: self.e2.select(ndarray::Axis(0), idx),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    /// Builds a split directly from embeddings, e.g. for synthetic data.
    pub fn from_parts(
        ids: Vec<String>,
        languages: Vec<String>,
        e1: Array2<f64>,
        e2: Array2<f64>,
        targets: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = ids.len();
        if languages.len() != n || e1.nrows() != n || e2.nrows() != n || targets.len() != n {
            return Err(Error::InvalidInput("split columns have different lengths".into()));
        }
        if e1.ncols() != e2.ncols() {
            return Err(Error::DimensionMismatch {
                expected: e1.ncols(),
                found: e2.ncols(),
            });
        }
        Ok(Self {
            ids,
            languages,
            e1,
            e2,
            targets,
        })
    }
}

fn join_instances<'a>(
    instances: impl Iterator<Item = &'a Instance>,
    store: &EmbeddingStore,
    task: Task,
) -> Result<AlignedSplit> {
    let instances: Vec<&Instance> = instances.collect();
    let missing: Vec<&str> = instances
        .iter()
        .filter(|i| store.get(&i.instance_id).is_none())
        .map(|i| i.instance_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings {
            count: missing.len(),
            sample: missing.iter().take(10).map(|s| s.to_string()).collect(),
        });
    }

    let (n, d) = (instances.len(), store.dim());
    let mut e1 = Array2::zeros((n, d));
    let mut e2 = Array2::zeros((n, d));
    for (row, inst) in instances.iter().enumerate() {
        let rec = store.get(&inst.instance_id).expect("checked above");
        for (dst, src) in e1.row_mut(row).iter_mut().zip(&rec.e1) {
            *dst = f64::from(*src);
        }
        for (dst, src) in e2.row_mut(row).iter_mut().zip(&rec.e2) {
            *dst = f64::from(*src);
        }
    }
    Ok(AlignedSplit {
        ids: instances.iter().map(|i| i.instance_id.clone()).collect(),
        languages: instances.iter().map(|i| i.language.clone()).collect(),
        e1,
        e2,
        targets: instances.iter().map(|i| i.target(task)).collect(),
    })
}

/// Aligns the instances carrying `task`'s target with their embeddings, in
/// dataset order.
pub fn join(dataset: &Dataset, store: &EmbeddingStore, task: Task) -> Result<AlignedSplit> {
    join_instances(dataset.task_instances(task), store, task)
}

/// Like [`join`], but also keeps unlabeled rows (target `None`).
pub fn join_for_prediction(
    dataset: &Dataset,
    store: &EmbeddingStore,
    task: Task,
) -> Result<AlignedSplit> {
    join_instances(dataset.prediction_instances(task), store, task)
}
