//! The annotated record and its JSON-lines file format.
//!
//! One object per line, exactly one `\n` after each record:
//! `{"id": str, "tokens": [str], "labels": [str], "source": str}`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelspace::BioLabel;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {id}: {message}")]
    Invalid { id: String, message: String },
}

impl RecordError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        RecordError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<BioLabel>,
    pub source: String,
}

impl Record {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.tokens.is_empty() {
            return Err(self.invalid("record has no tokens"));
        }
        if self.tokens.len() != self.labels.len() {
            return Err(self.invalid(format!(
                "{} tokens but {} labels",
                self.tokens.len(),
                self.labels.len()
            )));
        }
        Ok(())
    }

    fn invalid(&self, message: impl Into<String>) -> RecordError {
        RecordError::Invalid {
            id: self.id.clone(),
            message: message.into(),
        }
    }

    /// The serialized line, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

/// Iterates over the JSON objects of a JSON-lines stream, tracking line numbers.
/// Blank lines are skipped.
pub struct JsonLines<R, T> {
    reader: R,
    line: usize,
    buf: String,
    _item: PhantomData<T>,
}

impl<R: BufRead, T: DeserializeOwned> JsonLines<R, T> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line: 0,
            buf: String::new(),
            _item: PhantomData,
        }
    }

    /// Line number of the most recently returned item.
    pub fn line(&self) -> usize {
        self.line
    }
}

impl<T: DeserializeOwned> JsonLines<BufReader<File>, T> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, RecordError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| RecordError::io(path, e))?;
        Ok(Self::new(BufReader::new(file)))
    }
}

impl<R: BufRead, T: DeserializeOwned> Iterator for JsonLines<R, T> {
    type Item = Result<T, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(RecordError::Parse {
                        line: self.line + 1,
                        message: e.to_string(),
                    }))
                }
            }
            self.line += 1;
            let text = self.buf.trim_end_matches(['\n', '\r']);
            if text.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(text).map_err(|e| RecordError::Parse {
                line: self.line,
                message: e.to_string(),
            }));
        }
    }
}

/// Reads and validates every record of a JSON-lines file.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<Record>, RecordError> {
    let mut out = Vec::new();
    for record in JsonLines::<_, Record>::open(path)? {
        let record = record?;
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records_to<'a, W: Write>(
    writer: W,
    records: impl IntoIterator<Item = &'a Record>,
) -> io::Result<()> {
    let mut writer = BufWriter::new(writer);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_records<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a Record>,
) -> Result<(), RecordError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| RecordError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| RecordError::io(path, e))?;
    write_records_to(file, records).map_err(|e| RecordError::io(path, e))
}
