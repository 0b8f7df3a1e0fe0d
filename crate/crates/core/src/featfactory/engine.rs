//! Per-key sorted histories supporting O(log n) windowed queries.

use crate::ontology::{EventKind, OntologyEntity, OntologyStore};
use crate::time::{epoch_seconds, SECONDS_PER_DAY};

use super::EntityKey;

/// Per-key history. All times are epoch seconds; every list is sorted.
#[derive(Debug, Clone, Default)]
pub(crate) struct History {
    arrivals: Vec<i64>,
    /// First service time per container, parallel to `arrivals`; `i64::MAX` if none.
    first_service: Vec<i64>,
    services: Vec<i64>,
    moves: Vec<i64>,
    exits: Vec<i64>,
    /// Prefix sums over `exits` order: dwell days, squared dwell days, move counts.
    dwell_sum: Vec<f64>,
    dwell_sq: Vec<f64>,
    move_sum: Vec<f64>,
}

fn count_in(v: &[i64], lo: i64, hi: i64) -> usize {
    v.partition_point(|&t| t < hi) - v.partition_point(|&t| t < lo)
}

fn range_in(v: &[i64], lo: i64, hi: i64) -> (usize, usize) {
    (v.partition_point(|&t| t < lo), v.partition_point(|&t| t < hi))
}

impl History {
    pub(crate) fn count(&self, kind: EventKind, lo: i64, hi: i64) -> usize {
        match kind {
            EventKind::Arrival => count_in(&self.arrivals, lo, hi),
            EventKind::Service => count_in(&self.services, lo, hi),
            EventKind::Exit => count_in(&self.exits, lo, hi),
            EventKind::YardMove => count_in(&self.moves, lo, hi),
        }
    }

    /// (arrivals in `[lo, hi)`, of which first serviced before `hi`).
    pub(crate) fn served(&self, lo: i64, hi: i64) -> (usize, usize) {
        let (a, b) = range_in(&self.arrivals, lo, hi);
        let served = self.first_service[a..b].iter().filter(|&&s| s < hi).count();
        (b - a, served)
    }

    /// (exits in `[lo, hi)`, sum dwell, sum squared dwell, sum moves).
    pub(crate) fn exited(&self, lo: i64, hi: i64) -> (usize, f64, f64, f64) {
        if self.exits.is_empty() {
            return (0, 0.0, 0.0, 0.0);
        }
        let (a, b) = range_in(&self.exits, lo, hi);
        (
            b - a,
            self.dwell_sum[b] - self.dwell_sum[a],
            self.dwell_sq[b] - self.dwell_sq[a],
            self.move_sum[b] - self.move_sum[a],
        )
    }
}

struct Record {
    arrival: Option<i64>,
    first_service: Option<i64>,
    services: Vec<i64>,
    moves: Vec<i64>,
    exit: Option<(i64, f64)>,
}

#[derive(Default)]
struct Builder {
    arrivals: Vec<(i64, i64)>,
    services: Vec<i64>,
    moves: Vec<i64>,
    exits: Vec<(i64, f64, f64)>,
}

impl Builder {
    fn add(&mut self, r: &Record) {
        if let Some(a) = r.arrival {
            self.arrivals.push((a, r.first_service.unwrap_or(i64::MAX)));
        }
        self.services.extend(&r.services);
        self.moves.extend(&r.moves);
        if let Some((t, d)) = r.exit {
            self.exits.push((t, d, r.moves.len() as f64));
        }
    }

    fn finish(mut self) -> History {
        self.arrivals.sort_unstable();
        self.services.sort_unstable();
        self.moves.sort_unstable();
        self.exits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        let prefix = |f: &dyn Fn(&(i64, f64, f64)) -> f64| {
            let mut out = Vec::with_capacity(self.exits.len() + 1);
            let mut acc = 0.0;
            out.push(0.0);
            for e in &self.exits {
                acc += f(e);
                out.push(acc);
            }
            out
        };
        History {
            dwell_sum: prefix(&|e| e.1),
            dwell_sq: prefix(&|e| e.1 * e.1),
            move_sum: prefix(&|e| e.2),
            arrivals: self.arrivals.iter().map(|a| a.0).collect(),
            first_service: self.arrivals.iter().map(|a| a.1).collect(),
            services: self.services,
            moves: self.moves,
            exits: self.exits.iter().map(|e| e.0).collect(),
        }
    }
}

pub(crate) fn key_value(e: &OntologyEntity, key: EntityKey) -> Option<u32> {
    match key {
        EntityKey::Consignee => e.consignee_id,
        EntityKey::Chapter => e.hs_chapter.map(u32::from),
        EntityKey::ShippingLine => Some(e.container.shipping_line as u32),
        EntityKey::Route => Some(e.container.route as u32),
        EntityKey::CargoType => Some(e.container.cargo_type as u32),
    }
}

/// Indexed view of a store's event history, grouped by entity key.
pub struct FeatureEngine {
    global: History,
    by_key: Vec<Vec<History>>,
    /// Only events strictly before this instant are indexed.
    cutoff: i64,
}

impl FeatureEngine {
    pub fn new(store: &OntologyStore) -> Self {
        Self::with_cutoff(store, i64::MAX)
    }

    /// Index only events strictly before `cutoff` (epoch seconds).
    pub fn with_cutoff(store: &OntologyStore, cutoff: i64) -> Self {
        let cutoff = cutoff.min(epoch_seconds(store.horizon()));
        let mut global = Builder::default();
        let mut by_key: Vec<Vec<Builder>> = EntityKey::ALL.iter().map(|_| Vec::new()).collect();
        for (i, e) in store.entities().iter().enumerate() {
            let r = record(store, i, cutoff);
            global.add(&r);
            for (k, &key) in EntityKey::ALL.iter().enumerate() {
                if let Some(v) = key_value(e, key) {
                    let v = v as usize;
                    if by_key[k].len() <= v {
                        by_key[k].resize_with(v + 1, Builder::default);
                    }
                    by_key[k][v].add(&r);
                }
            }
        }
        Self {
            global: global.finish(),
            by_key: by_key
                .into_iter()
                .map(|bs| bs.into_iter().map(Builder::finish).collect())
                .collect(),
            cutoff,
        }
    }

    pub(crate) fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub(crate) fn global(&self) -> &History {
        &self.global
    }

    pub(crate) fn history(&self, key: EntityKey, value: u32) -> Option<&History> {
        let k = EntityKey::ALL.iter().position(|&x| x == key).unwrap();
        self.by_key[k].get(value as usize)
    }

    /// `(arrivals, serviced)` for `key == value` over `[as_of - window, as_of)`,
    /// counting services observed strictly before `as_of`.
    pub fn service_counts(&self, key: EntityKey, value: u32, window_days: u32, as_of: i64) -> (usize, usize) {
        let hi = as_of.min(self.cutoff);
        let lo = as_of - window_days as i64 * SECONDS_PER_DAY;
        self.history(key, value).map_or((0, 0), |h| h.served(lo, hi))
    }

    /// Events of `kind` for entities with `key == value` in `[as_of - window, as_of)`.
    pub fn rolling_count(&self, key: EntityKey, value: u32, kind: EventKind, window_days: u32, as_of: i64) -> usize {
        let hi = as_of.min(self.cutoff);
        let lo = as_of - window_days as i64 * SECONDS_PER_DAY;
        self.history(key, value).map_or(0, |h| h.count(kind, lo, hi))
    }
}

fn record(store: &OntologyStore, idx: usize, cutoff: i64) -> Record {
    let mut r = Record {
        arrival: None,
        first_service: None,
        services: Vec::new(),
        moves: Vec::new(),
        exit: None,
    };
    let mut exit = None;
    for ev in store.events_of(idx) {
        let t = epoch_seconds(ev.at);
        if t >= cutoff {
            break;
        }
        match ev.kind {
            EventKind::Arrival => r.arrival = r.arrival.or(Some(t)),
            EventKind::Service => {
                r.first_service = r.first_service.or(Some(t));
                r.services.push(t);
            }
            EventKind::YardMove => r.moves.push(t),
            EventKind::Exit => exit = Some(t),
        }
    }
    if let Some(x) = exit {
        let start = r
            .arrival
            .unwrap_or_else(|| epoch_seconds(store.entity(idx).container.scheduled_arrival));
        r.exit = Some((x, (x - start) as f64 / SECONDS_PER_DAY as f64));
    }
    r
}
