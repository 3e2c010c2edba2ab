//! Continuous-time interaction streams.
//!
//! Events are `(src, dst, t, features)` tuples kept in non-decreasing time
//! order. Sources and destinations live in separate dense id spaces.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Rng;

/// Header written in front of every CSV this crate produces.
pub const CSV_HEADER_PREFIX: &str = "user_id";

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub src: usize,
    pub dst: usize,
    pub t: f64,
    pub features: Vec<f64>,
    /// Position in the time-sorted stream this event was loaded into.
    pub idx: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    n_src: usize,
    n_dst: usize,
    feature_dim: usize,
}

impl EventStream {
    /// Validates the stream invariants: sorted timestamps, finite non-negative
    /// times, ids below the declared counts and a constant feature length.
    pub fn new(events: Vec<Event>, n_src: usize, n_dst: usize, feature_dim: usize) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !(e.t.is_finite() && e.t >= 0.0) {
                return Err(Error::Data(format!("event {i}: invalid timestamp {}", e.t)));
            }
            if e.src >= n_src || e.dst >= n_dst {
                return Err(Error::Data(format!(
                    "event {i}: node id ({}, {}) outside ({n_src}, {n_dst})",
                    e.src, e.dst
                )));
            }
            if e.features.len() != feature_dim {
                return Err(Error::Format(format!(
                    "event {i}: {} features, stream has {feature_dim}",
                    e.features.len()
                )));
            }
            if i > 0 && events[i - 1].t > e.t {
                return Err(Error::Data(format!("event {i}: timestamps out of order")));
            }
        }
        Ok(EventStream {
            events,
            n_src,
            n_dst,
            feature_dim,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn n_dst(&self) -> usize {
        self.n_dst
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn time_span(&self) -> Option<(f64, f64)> {
        Some((self.events.first()?.t, self.events.last()?.t))
    }

    /// Destination ids `0..n_dst`.
    pub fn dst_universe(&self) -> NodeUniverse {
        NodeUniverse::range(self.n_dst)
    }

    fn with_events(&self, events: Vec<Event>) -> EventStream {
        EventStream {
            events,
            n_src: self.n_src,
            n_dst: self.n_dst,
            feature_dim: self.feature_dim,
        }
    }

    /// Concatenates time-adjacent pieces of the same stream.
    pub fn concat(parts: &[&EventStream]) -> Result<EventStream> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Domain("concat of zero streams".into()))?;
        let events = parts.iter().flat_map(|p| p.events.iter().cloned()).collect();
        EventStream::new(events, first.n_src, first.n_dst, first.feature_dim)
    }
}

/// Parses a JODIE-style CSV: optional `user_id...` header, then
/// `src,dst,timestamp,state_label,f1,...,fk`. Ids are re-assigned densely in
/// first-appearance order after a stable sort by timestamp.
pub fn load_events(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(file)
}

pub fn read_events<R: std::io::Read>(reader: R) -> Result<EventStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut raw: Vec<(u64, u64, f64, Vec<f64>)> = Vec::new();
    let mut feature_dim: Option<usize> = None;

    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(i as u64 + 1, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && rec.get(0).is_some_and(|f| f.starts_with(CSV_HEADER_PREFIX)) {
            continue;
        }
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() < 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected at least 4 fields, found {}", rec.len()),
            });
        }
        let parse_err = |what: &str, val: &str| Error::Parse {
            line,
            msg: format!("invalid {what} {val:?}"),
        };
        let src: u64 = rec[0].parse().map_err(|_| parse_err("source id", &rec[0]))?;
        let dst: u64 = rec[1].parse().map_err(|_| parse_err("destination id", &rec[1]))?;
        let t: f64 = rec[2].parse().map_err(|_| parse_err("timestamp", &rec[2]))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(parse_err("timestamp", &rec[2]));
        }
        let features = rec
            .iter()
            .skip(4)
            .map(|f| f.parse::<f64>().map_err(|_| parse_err("feature", f)))
            .collect::<Result<Vec<_>>>()?;
        match feature_dim {
            None => feature_dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(Error::Format(format!(
                    "line {line}: {} features, earlier rows have {d}",
                    features.len()
                )))
            }
            Some(_) => {}
        }
        raw.push((src, dst, t, features));
    }

    raw.sort_by(|a, b| a.2.total_cmp(&b.2));

    let mut src_ids: HashMap<u64, usize> = HashMap::new();
    let mut dst_ids: HashMap<u64, usize> = HashMap::new();
    let events = raw
        .into_iter()
        .enumerate()
        .map(|(idx, (s, d, t, features))| {
            let n = src_ids.len();
            let src = *src_ids.entry(s).or_insert(n);
            let n = dst_ids.len();
            let dst = *dst_ids.entry(d).or_insert(n);
            Event {
                src,
                dst,
                t,
                features,
                idx,
            }
        })
        .collect();

    EventStream::new(
        events,
        src_ids.len(),
        dst_ids.len(),
        feature_dim.unwrap_or(0),
    )
}

/// Writes the stream in the format [`load_events`] reads.
pub fn write_events(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(file);
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["user_id", "item_id", "timestamp", "state_label", "features"])
        .map_err(io)?;
    for e in stream.events() {
        let mut rec = vec![
            e.src.to_string(),
            e.dst.to_string(),
            e.t.to_string(),
            "0".to_string(),
        ];
        rec.extend(e.features.iter().map(|f| f.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    ratios: [f64; 3],
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let ratios = [train, val, test];
        if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config(format!("split ratios must be non-negative: {ratios:?}")));
        }
        if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1: {ratios:?}")));
        }
        Ok(SplitSpec { ratios })
    }

    pub fn ratios(&self) -> [f64; 3] {
        self.ratios
    }
}

/// Splits by event count over the time-sorted sequence at `floor(N r1)` and
/// `floor(N (r1 + r2))`.
pub fn chronological_split(
    stream: &EventStream,
    spec: &SplitSpec,
) -> Result<(EventStream, EventStream, EventStream)> {
    if stream.is_empty() {
        return Err(Error::Domain("cannot split an empty stream".into()));
    }
    let n = stream.len();
    let [r1, r2, _] = spec.ratios;
    let cut = |x: f64| (((n as f64) * x + 1e-9).floor() as usize).min(n);
    let b1 = cut(r1);
    let b2 = cut(r1 + r2).max(b1);
    let ev = stream.events();
    Ok((
        stream.with_events(ev[..b1].to_vec()),
        stream.with_events(ev[b1..b2].to_vec()),
        stream.with_events(ev[b2..].to_vec()),
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub events: &'a [Event],
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Consecutive non-overlapping time-ordered slices; the last may be short.
pub fn batches(stream: &EventStream, batch_size: usize) -> Result<Vec<Batch<'_>>> {
    if batch_size == 0 {
        return Err(Error::Domain("batch size must be at least 1".into()));
    }
    Ok(stream
        .events()
        .chunks(batch_size)
        .map(|events| Batch { events })
        .collect())
}

/// A sorted set of candidate destination ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeUniverse {
    ids: Vec<usize>,
}

impl NodeUniverse {
    pub fn range(n: usize) -> Self {
        NodeUniverse {
            ids: (0..n).collect(),
        }
    }

    pub fn from_ids(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        NodeUniverse { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }
}

/// Draws `k` negatives per event uniformly from `universe` minus that event's
/// true destination, with replacement.
pub fn sample_negatives(
    rng: &mut Rng,
    batch: &Batch<'_>,
    k: usize,
    universe: &NodeUniverse,
) -> Result<Vec<Vec<usize>>> {
    if universe.len() < 2 {
        return Err(Error::Domain(format!(
            "negative sampling needs at least 2 candidate destinations, have {}",
            universe.len()
        )));
    }
    let ids = universe.ids();
    Ok(batch
        .events
        .iter()
        .map(|e| match ids.binary_search(&e.dst) {
            Ok(pos) => (0..k)
                .map(|_| {
                    let j = rng.below(ids.len() - 1);
                    ids[if j >= pos { j + 1 } else { j }]
                })
                .collect(),
            Err(_) => (0..k).map(|_| ids[rng.below(ids.len())]).collect(),
        })
        .collect())
}
