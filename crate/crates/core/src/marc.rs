//! MARC21 record model, ISO 2709 and MARC-in-JSON readers, and publisher
//! pair extraction from field 260.
//!
//! Binary input is streamed: the reader splits on the record terminator and
//! never holds more than one record in memory, so multi-gigabyte dumps are
//! fine. A record that fails validation is skipped and counted; parsing
//! carries on at the byte after its terminator.

use std::fmt;
use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const SUBFIELD_DELIMITER: u8 = 0x1F;
pub const FIELD_TERMINATOR: u8 = 0x1E;
pub const RECORD_TERMINATOR: u8 = 0x1D;

const LEADER_LEN: usize = 24;
const DIRECTORY_ENTRY_LEN: usize = 12;
const DEFAULT_LEADER: &str = "00000nam a2200000 i 4500";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarcError {
    #[error("record shorter than the 24-byte leader ({0} bytes)")]
    TooShort(usize),
    #[error("non-numeric {what} in leader: {digits:?}")]
    NonNumeric { what: &'static str, digits: String },
    #[error("declared record length {declared} but record is {actual} bytes")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("base address {0} out of range")]
    BadBaseAddress(usize),
    #[error("directory length {0} is not a multiple of 12")]
    BadDirectory(usize),
    #[error("directory entry {index}: {reason}")]
    BadDirectoryEntry { index: usize, reason: String },
    #[error("invalid leader: {0}")]
    BadLeader(String),
    #[error("invalid tag {0:?}")]
    BadTag(String),
    #[error("field {tag}: {reason}")]
    BadField { tag: String, reason: String },
    #[error("record too large for ISO 2709: {0}")]
    TooLarge(String),
    #[error("character {0:?} cannot be encoded as Latin-1")]
    Unencodable(char),
    #[error("malformed JSON record: {0}")]
    Json(String),
}

/// The 24-character record leader.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Leader(String);

impl Leader {
    pub fn new(text: impl Into<String>) -> Result<Self, MarcError> {
        let text = text.into();
        if text.chars().count() != LEADER_LEN || !text.is_ascii() {
            return Err(MarcError::BadLeader(text));
        }
        Ok(Leader(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Leader position 9: 'a' marks UCS/Unicode content.
    pub fn is_unicode(&self) -> bool {
        self.0.as_bytes()[9] == b'a'
    }

    fn with_lengths(&self, record_len: usize, base_address: usize) -> String {
        format!("{:05}{}{:05}{}", record_len, &self.0[5..12], base_address, &self.0[17..])
    }
}

impl Default for Leader {
    fn default() -> Self {
        Leader(DEFAULT_LEADER.to_string())
    }
}

impl fmt::Debug for Leader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl TryFrom<String> for Leader {
    type Error = MarcError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Leader::new(value)
    }
}

impl From<Leader> for String {
    fn from(value: Leader) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subfield {
    pub code: char,
    pub value: String,
}

impl Subfield {
    pub fn new(code: char, value: impl Into<String>) -> Self {
        Subfield { code, value: value.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Field {
    Control { tag: String, value: String },
    Data { tag: String, indicators: [char; 2], subfields: Vec<Subfield> },
}

impl Field {
    pub fn tag(&self) -> &str {
        match self {
            Field::Control { tag, .. } | Field::Data { tag, .. } => tag,
        }
    }

    pub fn subfields(&self) -> &[Subfield] {
        match self {
            Field::Control { .. } => &[],
            Field::Data { subfields, .. } => subfields,
        }
    }
}

/// Tags 001-009 carry control fields: no indicators, no subfields.
pub fn is_control_tag(tag: &str) -> bool {
    tag.starts_with("00")
}

fn validate_tag(tag: &str) -> Result<(), MarcError> {
    if tag.len() == 3 && tag.bytes().all(|b| b.is_ascii_alphanumeric()) {
        Ok(())
    } else {
        Err(MarcError::BadTag(tag.to_string()))
    }
}

/// One bibliographic record: leader plus fields in directory order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MarcRecord {
    leader: Leader,
    fields: Vec<Field>,
}

impl MarcRecord {
    pub fn new(leader: Leader) -> Self {
        MarcRecord { leader, fields: Vec::new() }
    }

    pub fn leader(&self) -> &Leader {
        &self.leader
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn push_control(&mut self, tag: &str, value: impl Into<String>) -> Result<(), MarcError> {
        validate_tag(tag)?;
        if !is_control_tag(tag) {
            return Err(MarcError::BadField { tag: tag.into(), reason: "not a control tag".into() });
        }
        self.fields.push(Field::Control { tag: tag.to_string(), value: value.into() });
        Ok(())
    }

    pub fn push_data(&mut self, tag: &str, indicators: [char; 2], subfields: Vec<Subfield>) -> Result<(), MarcError> {
        validate_tag(tag)?;
        if !indicators.iter().all(char::is_ascii) {
            return Err(MarcError::BadField { tag: tag.into(), reason: "non-ASCII indicator".into() });
        }
        if is_control_tag(tag) {
            return Err(MarcError::BadField { tag: tag.into(), reason: "control tag given subfields".into() });
        }
        self.fields.push(Field::Data { tag: tag.to_string(), indicators, subfields });
        Ok(())
    }

    pub fn fields_with_tag<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a Field> + 'a {
        self.fields.iter().filter(move |f| f.tag() == tag)
    }

    /// Value of the 001 control field, if present.
    pub fn control_number(&self) -> Option<&str> {
        self.fields.iter().find_map(|f| match f {
            Field::Control { tag, value } if tag == "001" => Some(value.as_str()),
            _ => None,
        })
    }

    /// Serialize to ISO 2709. Leader lengths are recomputed; content is
    /// written as UTF-8 when the leader says so, Latin-1 otherwise.
    pub fn to_iso2709(&self) -> Result<Vec<u8>, MarcError> {
        let unicode = self.leader.is_unicode();
        let encode = |s: &str, out: &mut Vec<u8>| -> Result<(), MarcError> {
            for c in s.chars() {
                if matches!(c as u32, 0x1D..=0x1F) {
                    return Err(MarcError::BadField { tag: String::new(), reason: "reserved delimiter in value".into() });
                }
            }
            if unicode {
                out.extend_from_slice(s.as_bytes());
            } else {
                for c in s.chars() {
                    let code = c as u32;
                    if code > 0xFF {
                        return Err(MarcError::Unencodable(c));
                    }
                    out.push(code as u8);
                }
            }
            Ok(())
        };

        let mut directory = Vec::with_capacity(self.fields.len() * DIRECTORY_ENTRY_LEN);
        let mut data = Vec::new();
        for field in &self.fields {
            let start = data.len();
            match field {
                Field::Control { value, .. } => encode(value, &mut data)?,
                Field::Data { indicators, subfields, .. } => {
                    for ind in indicators {
                        encode(&ind.to_string(), &mut data)?;
                    }
                    for sf in subfields {
                        data.push(SUBFIELD_DELIMITER);
                        encode(&sf.code.to_string(), &mut data)?;
                        encode(&sf.value, &mut data)?;
                    }
                }
            }
            data.push(FIELD_TERMINATOR);
            let len = data.len() - start;
            if len > 9999 || start > 99999 {
                return Err(MarcError::TooLarge(format!("field {} is {} bytes", field.tag(), len)));
            }
            directory.extend_from_slice(format!("{}{:04}{:05}", field.tag(), len, start).as_bytes());
        }
        directory.push(FIELD_TERMINATOR);

        let base = LEADER_LEN + directory.len();
        let total = base + data.len() + 1;
        if total > 99999 {
            return Err(MarcError::TooLarge(format!("record is {total} bytes")));
        }
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(self.leader.with_lengths(total, base).as_bytes());
        out.extend_from_slice(&directory);
        out.extend_from_slice(&data);
        out.push(RECORD_TERMINATOR);
        Ok(out)
    }

    /// MARC-in-JSON object: `{"leader": .., "fields": [{"001": ".."}, {"260": {"ind1", "ind2", "subfields": [{"a": ..}]}}]}`.
    pub fn to_json(&self) -> Value {
        let fields: Vec<Value> = self
            .fields
            .iter()
            .map(|f| {
                let mut m = Map::new();
                match f {
                    Field::Control { tag, value } => {
                        m.insert(tag.clone(), Value::String(value.clone()));
                    }
                    Field::Data { tag, indicators, subfields } => {
                        let subs: Vec<Value> = subfields
                            .iter()
                            .map(|sf| {
                                let mut s = Map::new();
                                s.insert(sf.code.to_string(), Value::String(sf.value.clone()));
                                Value::Object(s)
                            })
                            .collect();
                        let mut body = Map::new();
                        body.insert("ind1".into(), Value::String(indicators[0].to_string()));
                        body.insert("ind2".into(), Value::String(indicators[1].to_string()));
                        body.insert("subfields".into(), Value::Array(subs));
                        m.insert(tag.clone(), Value::Object(body));
                    }
                }
                Value::Object(m)
            })
            .collect();
        let mut root = Map::new();
        root.insert("leader".into(), Value::String(self.leader.as_str().to_string()));
        root.insert("fields".into(), Value::Array(fields));
        Value::Object(root)
    }

    pub fn from_json(value: &Value) -> Result<Self, MarcError> {
        let bad = |msg: &str| MarcError::Json(msg.to_string());
        let obj = value.as_object().ok_or_else(|| bad("record is not an object"))?;
        let leader = match obj.get("leader") {
            None => Leader::default(),
            Some(Value::String(s)) => Leader::new(s.clone())?,
            Some(_) => return Err(bad("leader is not a string")),
        };
        let mut record = MarcRecord::new(leader);
        let fields = match obj.get("fields") {
            None => return Ok(record),
            Some(Value::Array(a)) => a,
            Some(_) => return Err(bad("fields is not an array")),
        };
        for field in fields {
            let entry = field.as_object().filter(|m| m.len() == 1).ok_or_else(|| bad("field must be a one-key object"))?;
            let (tag, body) = entry.iter().next().expect("one key");
            match body {
                Value::String(v) => record.push_control(tag, v.clone())?,
                Value::Object(body) => {
                    let indicator = |key: &str| -> Result<char, MarcError> {
                        match body.get(key) {
                            None => Ok(' '),
                            Some(Value::String(s)) if s.chars().count() == 1 => Ok(s.chars().next().unwrap()),
                            _ => Err(bad("indicator must be a single character")),
                        }
                    };
                    let indicators = [indicator("ind1")?, indicator("ind2")?];
                    let subs = body.get("subfields").and_then(Value::as_array).ok_or_else(|| bad("data field without subfields array"))?;
                    let mut subfields = Vec::with_capacity(subs.len());
                    for sf in subs {
                        let sf = sf.as_object().filter(|m| m.len() == 1).ok_or_else(|| bad("subfield must be a one-key object"))?;
                        let (code, v) = sf.iter().next().expect("one key");
                        let mut chars = code.chars();
                        let c = match (chars.next(), chars.next()) {
                            (Some(c), None) => c,
                            _ => return Err(bad("subfield code must be one character")),
                        };
                        let v = v.as_str().ok_or_else(|| bad("subfield value must be a string"))?;
                        subfields.push(Subfield::new(c, v));
                    }
                    record.push_data(tag, indicators, subfields)?;
                }
                _ => return Err(bad("field body must be a string or object")),
            }
        }
        Ok(record)
    }
}

fn parse_digits(bytes: &[u8], what: &'static str) -> Result<usize, MarcError> {
    if bytes.is_empty() || !bytes.iter().all(u8::is_ascii_digit) {
        return Err(MarcError::NonNumeric { what, digits: String::from_utf8_lossy(bytes).into_owned() });
    }
    Ok(bytes.iter().fold(0usize, |acc, b| acc * 10 + (b - b'0') as usize))
}

fn latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| b as char).collect()
}

/// Decode one complete ISO 2709 record (terminator included).
///
/// The returned flag is true when the content was not decoded as strict
/// UTF-8 (leader position 9 other than 'a', or invalid UTF-8 under 'a').
pub fn decode_record(bytes: &[u8]) -> Result<(MarcRecord, bool), MarcError> {
    if bytes.len() < LEADER_LEN + 1 {
        return Err(MarcError::TooShort(bytes.len()));
    }
    let declared = parse_digits(&bytes[0..5], "record length")?;
    if declared != bytes.len() {
        return Err(MarcError::LengthMismatch { declared, actual: bytes.len() });
    }
    let base = parse_digits(&bytes[12..17], "base address")?;
    if base < LEADER_LEN + 1 || base > bytes.len() - 1 || bytes[base - 1] != FIELD_TERMINATOR {
        return Err(MarcError::BadBaseAddress(base));
    }
    let leader = Leader::new(latin1(&bytes[..LEADER_LEN]))?;
    let unicode = leader.is_unicode();
    let mut fallback = !unicode;
    let mut decode = |raw: &[u8]| -> String {
        if unicode {
            match std::str::from_utf8(raw) {
                Ok(s) => s.to_string(),
                Err(_) => {
                    fallback = true;
                    String::from_utf8_lossy(raw).into_owned()
                }
            }
        } else {
            latin1(raw)
        }
    };

    let directory = &bytes[LEADER_LEN..base - 1];
    if !directory.len().is_multiple_of(DIRECTORY_ENTRY_LEN) {
        return Err(MarcError::BadDirectory(directory.len()));
    }
    let data_end = bytes.len() - 1;
    let mut record = MarcRecord::new(leader);
    for (index, entry) in directory.chunks_exact(DIRECTORY_ENTRY_LEN).enumerate() {
        let entry_err = |reason: String| MarcError::BadDirectoryEntry { index, reason };
        let tag = std::str::from_utf8(&entry[0..3]).map_err(|_| entry_err("tag is not ASCII".into()))?;
        validate_tag(tag)?;
        let len = parse_digits(&entry[3..7], "field length").map_err(|e| entry_err(e.to_string()))?;
        let start = parse_digits(&entry[7..12], "field start").map_err(|e| entry_err(e.to_string()))?;
        let from = base + start;
        let to = from + len;
        if len == 0 || to > data_end {
            return Err(entry_err(format!("field {tag} spans {from}..{to} past data end {data_end}")));
        }
        let raw = &bytes[from..to];
        if raw[len - 1] != FIELD_TERMINATOR {
            return Err(MarcError::BadField { tag: tag.into(), reason: "missing field terminator".into() });
        }
        let body = &raw[..len - 1];
        if is_control_tag(tag) {
            let value = decode(body);
            record.fields.push(Field::Control { tag: tag.to_string(), value });
            continue;
        }
        if body.len() < 2 {
            return Err(MarcError::BadField { tag: tag.into(), reason: "missing indicators".into() });
        }
        if !body[0].is_ascii() || !body[1].is_ascii() {
            return Err(MarcError::BadField { tag: tag.into(), reason: "non-ASCII indicator".into() });
        }
        let indicators = [body[0] as char, body[1] as char];
        let mut subfields = Vec::new();
        // Anything between the indicators and the first delimiter is not
        // addressable by a subfield code and is dropped.
        for chunk in body[2..].split(|&b| b == SUBFIELD_DELIMITER).skip(1) {
            let text = decode(chunk);
            let mut chars = text.chars();
            let Some(code) = chars.next() else { continue };
            subfields.push(Subfield { code, value: chars.as_str().to_string() });
        }
        record.fields.push(Field::Data { tag: tag.to_string(), indicators, subfields });
    }
    Ok((record, fallback))
}

/// Counters accumulated while reading a stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    pub records: u64,
    pub skipped: u64,
    pub encoding_fallbacks: u64,
    /// Trailing bytes without a record terminator.
    pub truncated: bool,
}

impl ParseStats {
    pub fn merge(&mut self, other: &ParseStats) {
        self.records += other.records;
        self.skipped += other.skipped;
        self.encoding_fallbacks += other.encoding_fallbacks;
        self.truncated |= other.truncated;
    }
}

/// Streaming ISO 2709 reader. Yields well-formed records; malformed ones are
/// logged and counted in [`ParseStats::skipped`].
pub struct Iso2709Reader<R> {
    inner: R,
    buf: Vec<u8>,
    offset: u64,
    last_offset: u64,
    stats: ParseStats,
    done: bool,
}

impl<R: BufRead> Iso2709Reader<R> {
    pub fn new(inner: R) -> Self {
        Iso2709Reader { inner, buf: Vec::new(), offset: 0, last_offset: 0, stats: ParseStats::default(), done: false }
    }

    pub fn stats(&self) -> &ParseStats {
        &self.stats
    }

    /// Byte offset of the most recently yielded record.
    pub fn last_offset(&self) -> u64 {
        self.last_offset
    }
}

impl<R: BufRead> Iterator for Iso2709Reader<R> {
    type Item = io::Result<MarcRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            let n = match self.inner.read_until(RECORD_TERMINATOR, &mut self.buf) {
                Ok(n) => n,
                Err(e) => return Some(Err(e)),
            };
            let start = self.offset;
            self.offset += n as u64;
            if n == 0 {
                self.done = true;
                break;
            }
            if self.buf.last() != Some(&RECORD_TERMINATOR) {
                self.done = true;
                // whitespace or a stray newline after the last record is not a record
                if self.buf.iter().all(u8::is_ascii_whitespace) {
                    break;
                }
                log::warn!("partial record of {} bytes at offset {start}: stream ends without terminator", n);
                self.stats.truncated = true;
                break;
            }
            // tolerate line breaks between records (common in hand-edited dumps)
            let lead = self.buf.iter().take_while(|b| matches!(b, b'\n' | b'\r')).count();
            match decode_record(&self.buf[lead..]) {
                Ok((record, fallback)) => {
                    self.stats.records += 1;
                    if fallback {
                        self.stats.encoding_fallbacks += 1;
                    }
                    self.last_offset = start + lead as u64;
                    return Some(Ok(record));
                }
                Err(e) => {
                    log::warn!("skipping malformed record at offset {start}: {e}");
                    self.stats.skipped += 1;
                }
            }
        }
        None
    }
}

/// Line-delimited MARC-in-JSON reader; blank lines are ignored and
/// unparseable lines are skipped and counted.
pub struct JsonRecordReader<R> {
    lines: io::Lines<R>,
    line_no: u64,
    stats: ParseStats,
}

impl<R: BufRead> JsonRecordReader<R> {
    pub fn new(inner: R) -> Self {
        JsonRecordReader { lines: inner.lines(), line_no: 0, stats: ParseStats::default() }
    }

    pub fn stats(&self) -> &ParseStats {
        &self.stats
    }
}

impl<R: BufRead> Iterator for JsonRecordReader<R> {
    type Item = io::Result<MarcRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        for line in self.lines.by_ref() {
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(e)),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed =
                serde_json::from_str::<Value>(&line).map_err(|e| MarcError::Json(e.to_string())).and_then(|v| MarcRecord::from_json(&v));
            match parsed {
                Ok(r) => {
                    self.stats.records += 1;
                    return Some(Ok(r));
                }
                Err(e) => {
                    log::warn!("skipping JSON record on line {}: {e}", self.line_no);
                    self.stats.skipped += 1;
                }
            }
        }
        None
    }
}

/// Read a whole ISO 2709 stream. Convenience for tests and small inputs.
pub fn parse_iso2709<R: Read>(input: R) -> io::Result<(Vec<MarcRecord>, ParseStats)> {
    let mut reader = Iso2709Reader::new(io::BufReader::new(input));
    let records = reader.by_ref().collect::<io::Result<Vec<_>>>()?;
    Ok((records, reader.stats))
}

/// One raw place/publisher pair exactly as catalogued.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPublisherPair {
    pub record_id: String,
    pub place: String,
    pub name: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    /// Also read RDA publication statements (264 with second indicator '1').
    pub include_264: bool,
}

/// Pairs every `$b` in field 260 with the nearest preceding `$a` of the same
/// field occurrence. A `$b` with no `$a` before it gets an empty place.
///
/// `fallback_id` is used when the record has no 001.
pub fn extract_publisher_pairs(record: &MarcRecord, fallback_id: &str, options: &ExtractOptions) -> Vec<RawPublisherPair> {
    let record_id = record.control_number().unwrap_or(fallback_id);
    let mut pairs = Vec::new();
    for field in record.fields() {
        let Field::Data { tag, indicators, subfields } = field else { continue };
        let wanted = tag == "260" || (options.include_264 && tag == "264" && indicators[1] == '1');
        if !wanted {
            continue;
        }
        let mut place: Option<&str> = None;
        for sf in subfields {
            match sf.code {
                'a' => place = Some(&sf.value),
                'b' => pairs.push(RawPublisherPair {
                    record_id: record_id.to_string(),
                    place: place.unwrap_or("").to_string(),
                    name: sf.value.clone(),
                }),
                _ => {}
            }
        }
    }
    pairs
}

/// CSV writer for pairs (`record_id,place,name`, RFC 4180 quoting).
pub struct PairWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> PairWriter<W> {
    pub fn new(w: W) -> csv::Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(["record_id", "place", "name"])?;
        Ok(PairWriter { inner })
    }

    pub fn write(&mut self, pair: &RawPublisherPair) -> csv::Result<()> {
        self.inner.write_record([&pair.record_id, &pair.place, &pair.name])
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

/// Iterate pairs from a CSV written by [`PairWriter`].
pub fn read_pairs_csv<R: Read>(input: R) -> impl Iterator<Item = csv::Result<RawPublisherPair>> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(input).into_deserialize()
}
