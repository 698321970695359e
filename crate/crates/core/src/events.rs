//! Timestamped events pre-matched to edges.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EdgeIdx, RoadNetwork};

/// One row of the events file.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub edge_id: String,
    pub offset: f64,
    /// Whole seconds; kept as `f64` until validated.
    pub timestamp: f64,
}

impl EventRecord {
    pub fn new(edge_id: &str, offset: f64, timestamp: i64) -> Self {
        EventRecord {
            edge_id: edge_id.to_string(),
            offset,
            timestamp: timestamp as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub offset: f64,
    pub timestamp: i64,
}

/// Events of one edge, kept in time order with a position-order permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEventStore {
    pub edge: EdgeIdx,
    pub length: f64,
    by_time: Vec<Event>,
    /// Indices into `by_time`, sorted by offset then time rank.
    by_position: Vec<u32>,
}

impl EdgeEventStore {
    /// Builds a store; `events` are in input order. Ties are broken by input
    /// order in both orders.
    pub fn new(edge: EdgeIdx, length: f64, events: Vec<Event>) -> Self {
        let mut by_time = events;
        by_time.sort_by_key(|e| e.timestamp); // stable
        let mut by_position: Vec<u32> = (0..by_time.len() as u32).collect();
        by_position.sort_by(|&x, &y| {
            by_time[x as usize]
                .offset
                .total_cmp(&by_time[y as usize].offset)
                .then(x.cmp(&y))
        });
        EdgeEventStore {
            edge,
            length,
            by_time,
            by_position,
        }
    }

    pub fn len(&self) -> usize {
        self.by_time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_time.is_empty()
    }

    /// Events in time order (0-based rank).
    pub fn time_order(&self) -> &[Event] {
        &self.by_time
    }

    /// Time ranks in position order.
    pub fn position_ranks(&self) -> &[u32] {
        &self.by_position
    }

    pub fn position_order(&self) -> impl Iterator<Item = Event> + '_ {
        self.by_position.iter().map(move |&i| self.by_time[i as usize])
    }

    pub fn max_offset(&self) -> Option<f64> {
        self.by_position.last().map(|&i| self.by_time[i as usize].offset)
    }

    pub fn min_offset(&self) -> Option<f64> {
        self.by_position.first().map(|&i| self.by_time[i as usize].offset)
    }

    pub fn min_timestamp(&self) -> Option<i64> {
        self.by_time.first().map(|e| e.timestamp)
    }
}

/// 1-based inclusive window `lo..=hi` over time order, with `split` the last
/// index whose timestamp is strictly before the query time.
/// Empty windows have `hi < lo`. Always `lo - 1 <= split <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub lo: usize,
    pub hi: usize,
    pub split: usize,
}

/// Events `before < rank <= upto` (1-based ranks), i.e. version `upto` minus
/// version `before` of a persistent index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VersionSpan {
    pub before: usize,
    pub upto: usize,
}

impl VersionSpan {
    pub fn is_empty(&self) -> bool {
        self.upto <= self.before
    }

    pub fn len(&self) -> usize {
        self.upto.saturating_sub(self.before)
    }
}

/// Which side of the query time an event lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Half {
    /// `t_i < t`
    Earlier,
    /// `t_i >= t`
    Later,
}

impl Half {
    pub const BOTH: [Half; 2] = [Half::Earlier, Half::Later];
}

impl TimeWindow {
    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn count(&self) -> usize {
        (self.hi + 1).saturating_sub(self.lo)
    }

    pub fn span(&self, half: Half) -> VersionSpan {
        match half {
            Half::Earlier => VersionSpan {
                before: self.lo - 1,
                upto: self.split,
            },
            Half::Later => VersionSpan {
                before: self.split,
                upto: self.hi,
            },
        }
    }

    pub fn full_span(&self) -> VersionSpan {
        VersionSpan {
            before: self.lo - 1,
            upto: self.hi,
        }
    }
}

/// Temporal membership test shared by every method: `|t - t_i| <= b_t`.
#[inline]
pub fn in_time_window(t: i64, t_i: i64, b_t: f64) -> bool {
    ((t - t_i).abs() as f64) <= b_t
}

pub fn temporal_window(store: &EdgeEventStore, t: i64, b_t: f64) -> TimeWindow {
    window_over(store.time_order(), t, b_t)
}

pub(crate) fn window_over(events: &[Event], t: i64, b_t: f64) -> TimeWindow {
    let too_early = events.partition_point(|e| ((t - e.timestamp) as f64) > b_t);
    let hi = events.partition_point(|e| ((e.timestamp - t) as f64) <= b_t);
    let split = events.partition_point(|e| e.timestamp < t);
    TimeWindow {
        lo: too_early + 1,
        hi: hi.max(too_early),
        split: split.clamp(too_early, hi.max(too_early)),
    }
}

/// All per-edge stores of a dataset, indexed by dense edge index.
#[derive(Debug, Clone, Default)]
pub struct EventStores {
    pub(crate) stores: Vec<Option<EdgeEventStore>>,
}

impl EventStores {
    pub fn empty(edge_count: usize) -> Self {
        EventStores {
            stores: vec![None; edge_count],
        }
    }

    pub fn get(&self, e: EdgeIdx) -> Option<&EdgeEventStore> {
        self.stores.get(e as usize).and_then(|s| s.as_ref())
    }

    /// Number of edges that carry at least one event.
    pub fn len(&self) -> usize {
        self.stores.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_events(&self) -> usize {
        self.iter().map(|s| s.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EdgeEventStore> {
        self.stores.iter().flatten()
    }

    /// Smallest timestamp over all stores, used as the origin for shifted
    /// temporal terms.
    pub fn time_origin(&self) -> i64 {
        self.iter().filter_map(|s| s.min_timestamp()).min().unwrap_or(0)
    }

    /// Stores keyed by external edge id.
    pub fn by_name<'a>(&'a self, net: &'a RoadNetwork) -> BTreeMap<&'a str, &'a EdgeEventStore> {
        self.iter().map(|s| (net.edge(s.edge).name.as_str(), s)).collect()
    }

    /// Records in (edge, time order); re-ingesting them rebuilds identical stores.
    pub fn to_records(&self, net: &RoadNetwork) -> Vec<EventRecord> {
        self.iter()
            .flat_map(|s| {
                let name = &net.edge(s.edge).name;
                s.time_order().iter().map(move |e| EventRecord {
                    edge_id: name.clone(),
                    offset: e.offset,
                    timestamp: e.timestamp as f64,
                })
            })
            .collect()
    }
}

pub fn ingest_events<I>(records: I, net: &RoadNetwork) -> Result<EventStores>
where
    I: IntoIterator<Item = EventRecord>,
{
    let mut buckets: Vec<Vec<Event>> = vec![Vec::new(); net.edge_count()];
    for rec in records {
        let e = net
            .edge_by_name(&rec.edge_id)
            .ok_or_else(|| Error::UnknownEdge(rec.edge_id.clone()))?;
        let length = net.edge(e).length;
        if !(rec.offset >= 0.0 && rec.offset <= length) {
            return Err(Error::OffsetOutOfRange {
                edge: rec.edge_id,
                offset: rec.offset,
                length,
            });
        }
        if !rec.timestamp.is_finite() {
            return Err(Error::NonFiniteTimestamp(rec.edge_id));
        }
        if rec.timestamp.fract() != 0.0 || rec.timestamp.abs() >= 9.0e15 {
            return Err(Error::InvalidParameter(format!(
                "timestamp {} on edge `{}` is not a whole number of seconds",
                rec.timestamp, rec.edge_id
            )));
        }
        buckets[e as usize].push(Event {
            offset: rec.offset,
            timestamp: rec.timestamp as i64,
        });
    }
    let stores = buckets
        .into_iter()
        .enumerate()
        .map(|(i, evs)| {
            if evs.is_empty() {
                None
            } else {
                Some(EdgeEventStore::new(i as EdgeIdx, net.edge(i as EdgeIdx).length, evs))
            }
        })
        .collect();
    Ok(EventStores { stores })
}
