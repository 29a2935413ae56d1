//! Trace sets and their on-disk forms.
//!
//! The binary `SCT1` layout (all integers little-endian):
//!
//! ```text
//! magic              4 bytes  "SCT1"
//! version            u16      1
//! flags              u16      bit0: key present, bit1: class label present
//! trace_count        u64
//! samples_per_trace  u32
//! channel_name_len   u8, followed by that many UTF-8 bytes
//! [class label]      u8       0 = AllZeros, 1 = AllOnes, 2 = Random   (bit1)
//! [key]              16 bytes                                         (bit0)
//! records            trace_count x (plaintext 16 B, ciphertext 16 B,
//!                                   samples_per_trace x f64 LE)
//! ```

use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aes_model::Block;

pub const MAGIC: &[u8; 4] = b"SCT1";
pub const FORMAT_VERSION: u16 = 1;

const FLAG_KEY: u16 = 1 << 0;
const FLAG_CLASS: u16 = 1 << 1;

/// The three fixed-input classes used by leakage assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaintextClass {
    #[serde(rename = "all0")]
    AllZeros,
    #[serde(rename = "all1")]
    AllOnes,
    #[serde(rename = "random")]
    Random,
}

impl PlaintextClass {
    pub const ALL: [PlaintextClass; 3] = [Self::AllZeros, Self::AllOnes, Self::Random];

    pub fn code(self) -> u8 {
        match self {
            Self::AllZeros => 0,
            Self::AllOnes => 1,
            Self::Random => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::AllZeros),
            1 => Some(Self::AllOnes),
            2 => Some(Self::Random),
            _ => None,
        }
    }

    /// Short name used on the command line and in file names.
    pub fn short_name(self) -> &'static str {
        match self {
            Self::AllZeros => "all0",
            Self::AllOnes => "all1",
            Self::Random => "random",
        }
    }

    /// Column label in report tables.
    pub fn table_label(self) -> &'static str {
        match self {
            Self::AllZeros => "All 0s",
            Self::AllOnes => "All 1s",
            Self::Random => "Random",
        }
    }
}

impl fmt::Display for PlaintextClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for PlaintextClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all0" | "all0s" | "allzeros" | "zeros" => Ok(Self::AllZeros),
            "all1" | "all1s" | "allones" | "ones" => Ok(Self::AllOnes),
            "random" | "rand" => Ok(Self::Random),
            other => Err(format!("unknown plaintext class '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub plaintext: Block,
    pub ciphertext: Block,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub channel_name: String,
    pub class_label: Option<PlaintextClass>,
    pub true_key: Option<Block>,
    pub records: Vec<TraceRecord>,
}

impl TraceSet {
    pub fn new(channel_name: impl Into<String>) -> Self {
        Self {
            channel_name: channel_name.into(),
            class_label: None,
            true_key: None,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sample count shared by all records (0 for an empty set).
    pub fn samples_per_trace(&self) -> usize {
        self.records.first().map_or(0, |r| r.samples.len())
    }

    pub fn check_consistent(&self) -> Result<(), TraceStoreError> {
        let expected = self.samples_per_trace();
        for (index, r) in self.records.iter().enumerate() {
            if r.samples.len() != expected {
                return Err(TraceStoreError::SampleCountMismatch {
                    index,
                    expected,
                    found: r.samples.len(),
                });
            }
        }
        Ok(())
    }

    /// Replaces each sample with its difference from the same sample in the
    /// previous record. The first record is dropped.
    pub fn consecutive_deltas(&self) -> TraceSet {
        let records = self
            .records
            .windows(2)
            .map(|w| TraceRecord {
                plaintext: w[1].plaintext,
                ciphertext: w[1].ciphertext,
                samples: w[1]
                    .samples
                    .iter()
                    .zip(&w[0].samples)
                    .map(|(b, a)| b - a)
                    .collect(),
            })
            .collect();
        TraceSet {
            records,
            ..self.without_records()
        }
    }

    pub(crate) fn without_records(&self) -> TraceSet {
        TraceSet {
            channel_name: self.channel_name.clone(),
            class_label: self.class_label,
            true_key: self.true_key,
            records: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceStoreError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"SCT1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("stream ended before the declared contents were read")]
    TruncatedStream,
    #[error("record {index} has {found} samples, expected {expected}")]
    SampleCountMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("channel name is {0} bytes, the format allows at most 255")]
    NameTooLong(usize),
    #[error("channel name is not valid UTF-8")]
    BadChannelName,
    #[error("unknown class label code {0}")]
    BadClassLabel(u8),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
}

/// Writes `ts` in the `SCT1` format and returns the number of bytes written.
pub fn write_traceset<W: Write>(ts: &TraceSet, mut w: W) -> Result<u64, TraceStoreError> {
    ts.check_consistent()?;
    let name = ts.channel_name.as_bytes();
    if name.len() > u8::MAX as usize {
        return Err(TraceStoreError::NameTooLong(name.len()));
    }
    let spt = ts.samples_per_trace();
    let spt32 = u32::try_from(spt).map_err(|_| {
        io::Error::new(io::ErrorKind::InvalidInput, "samples_per_trace exceeds u32")
    })?;

    let mut flags = 0u16;
    if ts.true_key.is_some() {
        flags |= FLAG_KEY;
    }
    if ts.class_label.is_some() {
        flags |= FLAG_CLASS;
    }

    let mut header = Vec::with_capacity(32 + name.len());
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&flags.to_le_bytes());
    header.extend_from_slice(&(ts.records.len() as u64).to_le_bytes());
    header.extend_from_slice(&spt32.to_le_bytes());
    header.push(name.len() as u8);
    header.extend_from_slice(name);
    if let Some(c) = ts.class_label {
        header.push(c.code());
    }
    if let Some(k) = ts.true_key {
        header.extend_from_slice(&k.0);
    }
    w.write_all(&header)?;
    let mut written = header.len() as u64;

    let mut buf = Vec::with_capacity(32 + 8 * spt);
    for r in &ts.records {
        buf.clear();
        buf.extend_from_slice(&r.plaintext.0);
        buf.extend_from_slice(&r.ciphertext.0);
        for s in &r.samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        w.write_all(&buf)?;
        written += buf.len() as u64;
    }
    w.flush()?;
    Ok(written)
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), TraceStoreError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TraceStoreError::TruncatedStream,
        _ => TraceStoreError::Io(e),
    })
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], TraceStoreError> {
    let mut b = [0u8; N];
    read_exact_or_truncated(r, &mut b)?;
    Ok(b)
}

/// Reads an `SCT1` stream.
pub fn read_traceset<R: Read>(mut r: R) -> Result<TraceSet, TraceStoreError> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != MAGIC {
        return Err(TraceStoreError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(TraceStoreError::UnsupportedVersion(version));
    }
    let flags = u16::from_le_bytes(read_array(&mut r)?);
    let count = u64::from_le_bytes(read_array(&mut r)?);
    let spt = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let [name_len] = read_array::<1, _>(&mut r)?;
    let mut name = vec![0u8; name_len as usize];
    read_exact_or_truncated(&mut r, &mut name)?;
    let channel_name = String::from_utf8(name).map_err(|_| TraceStoreError::BadChannelName)?;

    let class_label = if flags & FLAG_CLASS != 0 {
        let [code] = read_array::<1, _>(&mut r)?;
        Some(PlaintextClass::from_code(code).ok_or(TraceStoreError::BadClassLabel(code))?)
    } else {
        None
    };
    let true_key = if flags & FLAG_KEY != 0 {
        Some(Block(read_array(&mut r)?))
    } else {
        None
    };

    let record_len = 32 + 8 * spt;
    let mut buf = vec![0u8; record_len];
    // Don't trust the header for the allocation size.
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        read_exact_or_truncated(&mut r, &mut buf)?;
        let plaintext = Block(buf[..16].try_into().expect("16 bytes"));
        let ciphertext = Block(buf[16..32].try_into().expect("16 bytes"));
        let samples = buf[32..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        records.push(TraceRecord {
            plaintext,
            ciphertext,
            samples,
        });
    }
    Ok(TraceSet {
        channel_name,
        class_label,
        true_key,
        records,
    })
}

pub fn save_traceset(ts: &TraceSet, path: &std::path::Path) -> Result<u64, TraceStoreError> {
    let f = std::fs::File::create(path)?;
    write_traceset(ts, io::BufWriter::new(f))
}

pub fn load_traceset(path: &std::path::Path) -> Result<TraceSet, TraceStoreError> {
    let f = std::fs::File::open(path)?;
    read_traceset(io::BufReader::new(f))
}

/// Writes a header row plus one row per record. Returns the number of rows
/// including the header. A `key` column is present only when the set carries
/// its key. Samples use Rust's shortest round-trip float formatting.
pub fn export_csv<W: Write>(ts: &TraceSet, w: W) -> Result<usize, TraceStoreError> {
    ts.check_consistent()?;
    let mut out = csv::Writer::from_writer(w);
    let spt = ts.samples_per_trace();
    let mut header = vec!["plaintext".to_string(), "ciphertext".to_string()];
    if ts.true_key.is_some() {
        header.push("key".to_string());
    }
    header.extend((0..spt).map(|i| format!("s{i}")));
    out.write_record(&header)?;
    let key_hex = ts.true_key.map(|k| k.to_hex());
    for r in &ts.records {
        let mut row = vec![r.plaintext.to_hex(), r.ciphertext.to_hex()];
        if let Some(k) = &key_hex {
            row.push(k.clone());
        }
        row.extend(r.samples.iter().map(|s| format!("{s:?}")));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(ts.records.len() + 1)
}

/// Parses CSV produced by [`export_csv`]. The channel name and class label are
/// not part of the CSV and must be supplied by the caller.
pub fn import_csv<R: Read>(r: R, channel_name: &str) -> Result<TraceSet, TraceStoreError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("plaintext") || headers.get(1) != Some("ciphertext") {
        return Err(TraceStoreError::MalformedCsv(
            "expected plaintext,ciphertext header".into(),
        ));
    }
    let has_key = headers.get(2) == Some("key");
    let first_sample = if has_key { 3 } else { 2 };
    let block =
        |s: &str| Block::from_hex(s).map_err(|e| TraceStoreError::MalformedCsv(e.to_string()));

    let mut ts = TraceSet::new(channel_name);
    for row in rdr.records() {
        let row = row?;
        if has_key && ts.true_key.is_none() {
            ts.true_key = Some(block(&row[2])?);
        }
        let samples = row
            .iter()
            .skip(first_sample)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| TraceStoreError::MalformedCsv(format!("bad sample '{s}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ts.records.push(TraceRecord {
            plaintext: block(&row[0])?,
            ciphertext: block(&row[1])?,
            samples,
        });
    }
    ts.check_consistent()?;
    Ok(ts)
}
