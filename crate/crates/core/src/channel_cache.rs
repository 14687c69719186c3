//! Client-side store of channel records keyed by unordered node pair.
//!
//! A record is served on `[computed_at, computed_at + ttl)`, where `ttl` is
//! the pair's coherence time. Each pair may hold several records at once so
//! that prefetched channels for future instants coexist with the current one.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::geometry::Vec3;
use crate::mobility::NodeId;
use crate::raytracer::{friis_path_loss_db, Cfr, RadioParams, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Raytraced,
    FriisPrescreen,
    Prefetched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    /// dB
    pub path_loss: f64,
    /// s
    pub delay: f64,
    pub cfr: Cfr,
    /// Simulation time (s) at which the record starts to be valid.
    pub computed_at: f64,
    /// s, may be infinite
    pub ttl: f64,
    pub source: RecordSource,
}

impl ChannelRecord {
    pub fn is_valid_at(&self, now: f64) -> bool {
        now >= self.computed_at && now - self.computed_at < self.ttl
    }

    fn expired_at(&self, now: f64) -> bool {
        now - self.computed_at >= self.ttl
    }
}

/// Unordered node pair with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey {
    lo: NodeId,
    hi: NodeId,
}

impl PairKey {
    /// `None` when `a == b`.
    pub fn new(a: NodeId, b: NodeId) -> Option<PairKey> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(PairKey { lo: a, hi: b }),
            std::cmp::Ordering::Greater => Some(PairKey { lo: b, hi: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> NodeId {
        self.lo
    }

    pub fn hi(&self) -> NodeId {
        self.hi
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub prescreen_skips: u64,
    pub prefetch_hits: u64,
}

impl CacheStats {
    /// `hits / (hits + misses)`, zero before any lookup.
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// Coherence time `(9/16π)·c/(v·f)`; infinite for a stationary pair.
pub fn coherence_ttl(relative_speed: f64, frequency: f64) -> f64 {
    if relative_speed <= 0.0 {
        f64::INFINITY
    } else {
        9.0 / (16.0 * PI) * SPEED_OF_LIGHT / (relative_speed * frequency)
    }
}

/// Free-space check: if even Friis loss puts the receiver below
/// `noise_floor - margin`, return a record that stands in for ray tracing.
pub fn friis_prescreen(
    tx_pos: Vec3,
    rx_pos: Vec3,
    params: &RadioParams,
    noise_floor: f64,
    margin: f64,
    now: f64,
    ttl: f64,
) -> Option<ChannelRecord> {
    let d = tx_pos.distance(rx_pos);
    let pl = friis_path_loss_db(d, params.center_frequency);
    (params.tx_power - pl < noise_floor - margin).then(|| ChannelRecord {
        path_loss: pl,
        delay: d / SPEED_OF_LIGHT,
        cfr: Cfr::zeros(params),
        computed_at: now,
        ttl,
        source: RecordSource::FriisPrescreen,
    })
}

#[derive(Debug, Default)]
pub struct ChannelCache {
    /// Per pair, sorted by `computed_at`.
    entries: HashMap<PairKey, Vec<ChannelRecord>>,
    stats: CacheStats,
}

impl ChannelCache {
    pub fn new() -> ChannelCache {
        ChannelCache::default()
    }

    fn key(a: NodeId, b: NodeId) -> PairKey {
        PairKey::new(a, b).unwrap_or_else(|| panic!("channel cache queried with identical nodes {a}"))
    }

    /// The newest record for the pair that is valid at `now`. Counts a hit or
    /// a miss and drops records that have expired by `now`.
    pub fn lookup(&mut self, a: NodeId, b: NodeId, now: f64) -> Option<&ChannelRecord> {
        let key = Self::key(a, b);
        let found = match self.entries.get_mut(&key) {
            Some(list) => {
                list.retain(|r| !r.expired_at(now));
                list.iter().rposition(|r| r.is_valid_at(now))
            }
            None => None,
        };
        match found {
            Some(i) => {
                let rec = &self.entries[&key][i];
                self.stats.hits += 1;
                if rec.source == RecordSource::Prefetched {
                    self.stats.prefetch_hits += 1;
                }
                Some(rec)
            }
            None => {
                self.stats.misses += 1;
                None
            }
        }
    }

    /// Store a record; one with the same `computed_at` for the pair is replaced.
    pub fn insert(&mut self, a: NodeId, b: NodeId, record: ChannelRecord) {
        let list = self.entries.entry(Self::key(a, b)).or_default();
        match list.binary_search_by(|r| r.computed_at.total_cmp(&record.computed_at)) {
            Ok(i) => list[i] = record,
            Err(i) => list.insert(i, record),
        }
    }

    pub fn note_prescreen_skip(&mut self) {
        self.stats.prescreen_skips += 1;
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    /// Number of stored records, expired ones included until touched.
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(at: f64, ttl: f64, pl: f64) -> ChannelRecord {
        ChannelRecord {
            path_loss: pl,
            delay: 1e-8,
            cfr: Cfr::default(),
            computed_at: at,
            ttl,
            source: RecordSource::Raytraced,
        }
    }

    #[test]
    fn coherence_time_values() {
        assert!((coherence_ttl(1.0, 5e9) - 10.74e-3).abs() < 0.01e-3);
        assert!((coherence_ttl(7.0, 5e9) - 1.5336e-3).abs() < 0.0001e-3);
        assert_eq!(coherence_ttl(0.0, 5e9), f64::INFINITY);
    }

    #[test]
    fn coherence_time_decreases_in_speed_and_frequency() {
        let speeds = [0.1, 0.5, 1.0, 3.0, 7.0, 30.0];
        for w in speeds.windows(2) {
            assert!(coherence_ttl(w[0], 5e9) > coherence_ttl(w[1], 5e9));
            assert!(coherence_ttl(1.0, w[0] * 1e9) > coherence_ttl(1.0, w[1] * 1e9));
        }
    }

    #[test]
    fn ttl_window_is_half_open() {
        let mut c = ChannelCache::new();
        let ttl = coherence_ttl(1.0, 5e9);
        c.insert(1, 2, record(0.0, ttl, 70.0));
        assert!(c.lookup(1, 2, 5e-3).is_some());
        assert_eq!(c.stats().hits, 1);
        assert!(c.lookup(1, 2, 12e-3).is_none());
        assert_eq!(c.stats().misses, 1);
        // exactly at the boundary counts as expired
        c.insert(1, 2, record(1.0, 0.5, 70.0));
        assert!(c.lookup(1, 2, 1.5).is_none());
    }

    #[test]
    fn reciprocal_keys() {
        let mut c = ChannelCache::new();
        c.insert(3, 7, record(0.0, f64::INFINITY, 80.0));
        assert_eq!(c.lookup(7, 3, 100.0).unwrap().path_loss, 80.0);
        assert_eq!(PairKey::new(7, 3), PairKey::new(3, 7));
        assert_eq!(PairKey::new(4, 4), None);
    }

    #[test]
    fn second_insert_wins() {
        let mut c = ChannelCache::new();
        c.insert(1, 2, record(0.0, 1.0, 70.0));
        c.insert(2, 1, record(0.0, 1.0, 71.0));
        assert_eq!(c.lookup(1, 2, 0.5).unwrap().path_loss, 71.0);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn future_records_wait_for_their_window() {
        let mut c = ChannelCache::new();
        let mut pre = record(0.02, 0.01, 75.0);
        pre.source = RecordSource::Prefetched;
        c.insert(1, 2, record(0.0, 0.01, 70.0));
        c.insert(1, 2, pre);
        assert_eq!(c.lookup(1, 2, 0.005).unwrap().path_loss, 70.0);
        // gap between the two windows
        assert!(c.lookup(1, 2, 0.015).is_none());
        assert_eq!(c.lookup(1, 2, 0.025).unwrap().path_loss, 75.0);
        assert!(c.lookup(1, 2, 0.031).is_none());
        let s = c.stats();
        assert_eq!((s.hits, s.misses, s.prefetch_hits), (2, 2, 1));
        assert!(c.is_empty());
    }

    #[test]
    fn stats_counting() {
        let mut c = ChannelCache::new();
        assert_eq!(c.stats(), CacheStats::default());
        assert!(c.lookup(1, 2, 0.0).is_none());
        c.insert(1, 2, record(0.0, 1.0, 70.0));
        assert!(c.lookup(1, 2, 0.1).is_some());
        assert_eq!(c.stats().hit_rate(), 0.5);
    }

    #[test]
    fn prescreen_thresholds() {
        let params = RadioParams::default();
        // 20 dBm - PL < -94 dBm  <=>  PL > 114 dB  <=>  d > ~2393 m at 5 GHz
        let near = Vec3::new(2390.0, 0.0, 0.0);
        let far = Vec3::new(2396.0, 0.0, 0.0);
        assert!(friis_prescreen(Vec3::ZERO, near, &params, -94.0, 0.0, 0.0, 1.0).is_none());
        let rec = friis_prescreen(Vec3::ZERO, far, &params, -94.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(rec.source, RecordSource::FriisPrescreen);
        assert!(rec.path_loss > 114.0);
        assert!(rec.cfr.values.iter().all(|h| h.norm() == 0.0));
        assert!(friis_prescreen(Vec3::ZERO, Vec3::new(10.0, 0.0, 0.0), &params, -94.0, 0.0, 0.0, 1.0).is_none());
        let quiet = RadioParams {
            tx_power: -200.0,
            ..params
        };
        assert!(friis_prescreen(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), &quiet, -94.0, 0.0, 0.0, 1.0).is_some());
    }
}
