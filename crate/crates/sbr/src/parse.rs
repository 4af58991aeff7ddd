//! Raw click-log readers.
//!
//! Yoochoose: `session_id,timestamp,item_id,category`, no header, ISO-8601
//! timestamps. Diginetica: `sessionId;userId;itemId;timeframe;eventdate`
//! with a header; the event time is midnight UTC of `eventdate` plus
//! `timeframe` milliseconds. Rows that do not parse are skipped and
//! counted.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use sbr_core::data::{Dataset, RawEvent, Sessionizer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub events: usize,
    pub skipped: usize,
}

/// Milliseconds since the epoch for an ISO-8601 timestamp. Timestamps
/// without an offset are taken as UTC.
pub fn parse_iso_millis(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp_millis());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()
        .map(|t| t.and_utc().timestamp_millis())
}

fn nonempty(s: Option<&str>) -> Option<&str> {
    s.map(str::trim).filter(|s| !s.is_empty())
}

pub fn yoochoose_event(record: &csv::StringRecord) -> Option<RawEvent> {
    let session_id = nonempty(record.get(0))?;
    let timestamp = parse_iso_millis(record.get(1)?)?;
    let item_id = nonempty(record.get(2))?;
    Some(RawEvent {
        session_id: session_id.to_owned(),
        timestamp,
        item_id: item_id.to_owned(),
    })
}

/// Column positions of a Diginetica header.
#[derive(Clone, Copy, Debug)]
pub struct DigineticaColumns {
    session: usize,
    item: usize,
    timeframe: usize,
    date: usize,
}

impl DigineticaColumns {
    pub fn from_header(header: &csv::StringRecord) -> Option<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        Some(DigineticaColumns {
            session: find("sessionId")?,
            item: find("itemId")?,
            timeframe: find("timeframe")?,
            date: find("eventdate")?,
        })
    }

    pub fn event(&self, record: &csv::StringRecord) -> Option<RawEvent> {
        let session_id = nonempty(record.get(self.session))?;
        let item_id = nonempty(record.get(self.item))?;
        let frame: i64 = record.get(self.timeframe)?.trim().parse().ok()?;
        let date = NaiveDate::parse_from_str(record.get(self.date)?.trim(), "%Y-%m-%d").ok()?;
        let midnight = date.and_hms_opt(0, 0, 0)?.and_utc().timestamp_millis();
        Some(RawEvent {
            session_id: session_id.to_owned(),
            timestamp: midnight.checked_add(frame)?,
            item_id: item_id.to_owned(),
        })
    }
}

/// Feeds every parseable row of `reader` into `sink`.
pub fn read_events<R: Read>(
    reader: R,
    dataset: Dataset,
    sink: &mut Sessionizer,
    origin: &Path,
) -> Result<ParseStats> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(dataset == Dataset::Diginetica)
        .delimiter(match dataset {
            Dataset::Yoochoose => b',',
            Dataset::Diginetica => b';',
        })
        .flexible(true)
        .from_reader(reader);
    let columns = match dataset {
        Dataset::Yoochoose => None,
        Dataset::Diginetica => {
            let header = rdr.headers()?.clone();
            if header.is_empty() {
                return Ok(ParseStats::default());
            }
            Some(DigineticaColumns::from_header(&header).ok_or_else(|| {
                Error::format(origin, "header lacks sessionId, itemId, timeframe or eventdate")
            })?)
        }
    };
    let mut stats = ParseStats::default();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let event = match &columns {
                    None => yoochoose_event(&record),
                    Some(c) => c.event(&record),
                };
                match event {
                    Some(e) => {
                        sink.push(&e);
                        stats.events += 1;
                    }
                    None => stats.skipped += 1,
                }
            }
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => stats.skipped += 1,
        }
    }
    Ok(stats)
}

pub fn read_events_file(path: &Path, dataset: Dataset, sink: &mut Sessionizer) -> Result<ParseStats> {
    let file = File::open(path).map_err(Error::io(path))?;
    read_events(BufReader::new(file), dataset, sink, path)
}
