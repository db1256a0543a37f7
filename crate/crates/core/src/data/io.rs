//! JSON Lines persistence: a `{"meta": ...}` header line, then one transition per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::{Dataset, Meta, Point, Transition};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: Meta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    s: Point,
    a: Point,
    r: f64,
    s2: Point,
    d: u8,
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

enum Sink {
    Plain(BufWriter<File>),
    Gzip(GzEncoder<BufWriter<File>>),
}

impl Sink {
    fn writer(&mut self) -> &mut dyn Write {
        match self {
            Sink::Plain(w) => w,
            Sink::Gzip(w) => w,
        }
    }
}

/// Streaming writer; validates every transition against the header.
pub struct DatasetWriter {
    sink: Sink,
    meta: Meta,
    buf: Vec<u8>,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, meta: &Meta) -> Result<Self> {
        meta.check()?;
        let path = path.as_ref();
        let file = BufWriter::new(File::create(path)?);
        let sink = if is_gzip(path) {
            Sink::Gzip(GzEncoder::new(file, Compression::default()))
        } else {
            Sink::Plain(file)
        };
        let mut w = Self {
            sink,
            meta: meta.clone(),
            buf: Vec::new(),
        };
        let header = Header { meta: meta.clone() };
        serde_json::to_writer(&mut w.buf, &header).map_err(std::io::Error::from)?;
        w.flush_line()?;
        Ok(w)
    }

    fn flush_line(&mut self) -> Result<()> {
        self.buf.push(b'\n');
        self.sink.writer().write_all(&self.buf)?;
        self.buf.clear();
        Ok(())
    }

    pub fn write(&mut self, t: &Transition) -> Result<()> {
        self.meta.validate(t)?;
        let line = Line {
            s: t.s.clone(),
            a: t.a.clone(),
            r: t.r,
            s2: t.s_next.clone(),
            d: u8::from(t.done),
        };
        serde_json::to_writer(&mut self.buf, &line).map_err(std::io::Error::from)?;
        self.flush_line()
    }

    pub fn finish(self) -> Result<()> {
        match self.sink {
            Sink::Plain(mut w) => w.flush()?,
            Sink::Gzip(w) => w.finish()?.flush()?,
        }
        Ok(())
    }
}

/// Streaming reader over the transitions of a dataset file.
///
/// Holds one line in memory at a time.
pub struct DatasetReader {
    input: Box<dyn BufRead>,
    meta: Meta,
    line: String,
    line_no: usize,
}

impl DatasetReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        let raw: Box<dyn Read> = if is_gzip(path) {
            Box::new(MultiGzDecoder::new(file))
        } else {
            Box::new(file)
        };
        Self::from_reader(BufReader::new(raw))
    }

    pub fn from_reader(input: impl BufRead + 'static) -> Result<Self> {
        let mut input: Box<dyn BufRead> = Box::new(input);
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "missing header line".into(),
            });
        }
        let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        header.meta.check().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        Ok(Self {
            input,
            meta: header.meta,
            line,
            line_no: 1,
        })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    fn parse_current(&self) -> Result<Transition> {
        let err = |message: String| Error::Parse {
            line: self.line_no,
            message,
        };
        let raw: Line = serde_json::from_str(self.line.trim_end()).map_err(|e| err(e.to_string()))?;
        let done = match raw.d {
            0 => false,
            1 => true,
            other => return Err(err(format!("done flag must be 0 or 1, got {other}"))),
        };
        let t = Transition {
            s: raw.s,
            a: raw.a,
            r: raw.r,
            s_next: raw.s2,
            done,
        };
        self.meta.validate(&t).map_err(|e| err(e.to_string()))?;
        Ok(t)
    }
}

impl Iterator for DatasetReader {
    type Item = Result<Transition>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line.clear();
            match self.input.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            if !self.line.trim().is_empty() {
                return Some(self.parse_current());
            }
        }
    }
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut w = DatasetWriter::create(path, &dataset.meta)?;
    for t in &dataset.transitions {
        w.write(t)?;
    }
    w.finish()
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let reader = DatasetReader::open(path)?;
    let meta = reader.meta().clone();
    let transitions = reader.collect::<Result<Vec<_>>>()?;
    Ok(Dataset { meta, transitions })
}
