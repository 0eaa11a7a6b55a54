//! CSV embedding cache.
//!
//! ```text
//! # provider=<tag> dim=<d>
//! id,source,label,e0,e1,...,e{d-1}
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{EmbeddedDataset, Label, Matrix, RecordMeta};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheHeader {
    pub provider_tag: String,
    pub dim: usize,
}

impl CacheHeader {
    fn comment_line(&self) -> String {
        format!("# provider={} dim={}", self.provider_tag, self.dim)
    }

    fn parse(line: &str, path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Cache {
            path: path.to_path_buf(),
            reason: format!("{reason}: {line:?}"),
        };
        let rest = line.trim_end().strip_prefix("# ").ok_or_else(|| bad("missing header comment"))?;
        let mut tag = None;
        let mut dim = None;
        for part in rest.split_whitespace() {
            if let Some(v) = part.strip_prefix("provider=") {
                tag = Some(v.to_owned());
            } else if let Some(v) = part.strip_prefix("dim=") {
                dim = Some(v.parse::<usize>().map_err(|_| bad("unparseable dim"))?);
            }
        }
        match (tag, dim) {
            (Some(provider_tag), Some(dim)) if dim > 0 => Ok(Self { provider_tag, dim }),
            _ => Err(bad("header comment needs provider= and dim=")),
        }
    }

    fn column_names(&self) -> Vec<String> {
        let mut cols = vec!["id".to_owned(), "source".to_owned(), "label".to_owned()];
        cols.extend((0..self.dim).map(|i| format!("e{i}")));
        cols
    }
}

fn write_row<W: Write>(out: &mut csv::Writer<W>, meta: &RecordMeta, values: &[f64]) -> Result<()> {
    let mut fields = Vec::with_capacity(values.len() + 3);
    fields.push(meta.id.clone());
    fields.push(meta.source.clone());
    fields.push(meta.label.to_string());
    fields.extend(values.iter().map(|v| v.to_string()));
    out.write_record(&fields)?;
    Ok(())
}

/// Streams rows into a cache file, creating it (with header) if absent.
pub struct CacheWriter {
    path: PathBuf,
    header: CacheHeader,
    writer: csv::Writer<BufWriter<File>>,
}

impl CacheWriter {
    pub fn create(path: impl AsRef<Path>, header: CacheHeader) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::start(path, header, file, true)
    }

    /// Open an existing cache for appending; its header must match.
    pub fn append(path: impl AsRef<Path>, header: CacheHeader) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Self::create(path, header);
        }
        let existing = read_header(path)?;
        if existing != header {
            return Err(Error::Cache {
                path: path.to_path_buf(),
                reason: format!(
                    "cache holds provider={} dim={}, expected provider={} dim={}",
                    existing.provider_tag, existing.dim, header.provider_tag, header.dim
                ),
            });
        }
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Self::start(path, header, file, false)
    }

    fn start(path: &Path, header: CacheHeader, file: File, fresh: bool) -> Result<Self> {
        let mut buf = BufWriter::new(file);
        if fresh {
            writeln!(buf, "{}", header.comment_line()).map_err(|e| Error::io(path, e))?;
        }
        let mut writer = csv::WriterBuilder::new().flexible(false).from_writer(buf);
        if fresh {
            writer.write_record(header.column_names())?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            writer,
        })
    }

    pub fn write(&mut self, meta: &RecordMeta, values: &[f64]) -> Result<()> {
        if values.len() != self.header.dim {
            return Err(Error::DimensionMismatch {
                expected: self.header.dim,
                actual: values.len(),
            });
        }
        write_row(&mut self.writer, meta, values)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl Drop for CacheWriter {
    fn drop(&mut self) {
        let _ = self.writer.flush();
    }
}

pub fn write_embedding_cache(dataset: &EmbeddedDataset, path: impl AsRef<Path>) -> Result<()> {
    let header = CacheHeader {
        provider_tag: dataset.provider_tag().to_owned(),
        dim: dataset.dim(),
    };
    let mut writer = CacheWriter::create(path, header)?;
    for (meta, row) in dataset.records().iter().zip(dataset.matrix().iter_rows()) {
        writer.write(meta, row)?;
    }
    writer.flush()
}

fn read_header(path: &Path) -> Result<CacheHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    CacheHeader::parse(&first, path)
}

/// Read a whole cache file. Rows keep file order; the dimension comes from
/// the header comment, so an empty cache still reports it.
pub fn read_embedding_cache(path: impl AsRef<Path>) -> Result<EmbeddedDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let header = CacheHeader::parse(&first, path)?;
    let cache_err = |reason: String| Error::Cache {
        path: path.to_path_buf(),
        reason,
    };

    let mut csv_reader = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let columns = csv_reader.headers()?.clone();
    let expected = header.column_names();
    if columns.len() != expected.len() || columns.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(cache_err(format!(
            "column header has {} columns, expected {} for dim={}",
            columns.len(),
            expected.len(),
            header.dim
        )));
    }

    let mut records = Vec::new();
    let mut data = Vec::new();
    for row in csv_reader.records() {
        let row = row?;
        let id = row.get(0).unwrap_or_default().to_owned();
        if row.len() != header.dim + 3 {
            return Err(cache_err(format!(
                "row {id:?} has {} values, expected {}",
                row.len().saturating_sub(3),
                header.dim
            )));
        }
        let label = row[2]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| cache_err(format!("row {id:?} has invalid label {:?}", &row[2])))?;
        for (j, field) in row.iter().skip(3).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| cache_err(format!("row {id:?} column e{j}: unparseable float {field:?}")))?;
            if !v.is_finite() {
                return Err(cache_err(format!("row {id:?} column e{j}: non-finite value")));
            }
            data.push(v);
        }
        records.push(RecordMeta {
            id,
            source: row[1].to_owned(),
            label,
        });
    }
    let matrix = Matrix::new(records.len(), header.dim, data)?;
    EmbeddedDataset::new(records, matrix, header.provider_tag)
}
