//! Deterministic synthetic terminal: raw container and event tables with
//! planted consignee/chapter signal, plus a hidden truth table.

mod names;

pub use names::{
    emit_name_variant, generate_canonical_names, perturb, VariantClass, MAX_CANONICAL_SIMILARITY,
    MIN_NAME_LEN,
};

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use chrono::{NaiveDate, TimeDelta};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::hsclass::{tokenize, HsCatalog};
use crate::ontology::{RawContainerRow, RawEventRow, CONTAINER_HEADER, EVENT_HEADER};
use crate::time::{format_timestamp, midnight, Timestamp, SECONDS_PER_DAY};

pub const DEFAULT_DWELL_WEIGHTS: [f64; 8] = [0.08, 0.10, 0.12, 0.12, 0.12, 0.10, 0.08, 0.28];

/// Tokens absent from every chapter definition.
const GENERIC_TOKENS: &[&str] = &[
    "FAK", "STC", "CONSOLIDATED", "CARGO", "PKGS", "MIXED", "LOAD", "SHIPMENT", "PALLETIZED", "SLAC",
];
/// Chapters whose goods are often dangerous.
const HAZARDOUS_CHAPTERS: &[u8] = &[27, 28, 29, 31, 36, 38, 93];
/// Chapters shipped refrigerated.
const REEFER_CHAPTERS: &[u8] = &[2, 3, 4, 7, 8, 16, 20];
const UNUSED_CHAPTER: u8 = 77;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_containers: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub n_consignees: usize,
    pub variant_rate: f64,
    pub service_base_rate: f64,
    pub dwell_category_weights: [f64; 8],
    pub signal_strength: f64,
    /// Exponent of the Zipf-like consignee volume distribution.
    pub zipf_exponent: f64,
    /// Fraction of emitted names whose first character is altered.
    pub first_char_break_rate: f64,
    pub explicit_code_rate: f64,
    pub generic_description_rate: f64,
    /// Fraction of container rows carrying a planted defect.
    pub corruption_rate: f64,
    pub n_shipping_lines: usize,
    pub n_routes: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_containers: 100_000,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            end_date: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
            n_consignees: 2000,
            variant_rate: 0.3,
            service_base_rate: 0.33,
            dwell_category_weights: DEFAULT_DWELL_WEIGHTS,
            signal_strength: 0.8,
            zipf_exponent: 0.7,
            first_char_break_rate: 0.0,
            explicit_code_rate: 0.25,
            generic_description_rate: 0.08,
            corruption_rate: 0.0,
            n_shipping_lines: 12,
            n_routes: 24,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidConfig(m));
        let sum: f64 = self.dwell_category_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("dwell_category_weights sum to {sum}, expected 1"));
        }
        if self.dwell_category_weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return bad("dwell_category_weights must lie in [0, 1]".into());
        }
        if self.end_date <= self.start_date {
            return bad("end_date must be after start_date".into());
        }
        if self.n_containers == 0 {
            return bad("n_containers must be positive".into());
        }
        if self.n_consignees == 0 {
            return bad("n_consignees must be positive".into());
        }
        if self.n_shipping_lines == 0 || self.n_routes == 0 {
            return bad("n_shipping_lines and n_routes must be positive".into());
        }
        for (name, v) in [
            ("variant_rate", self.variant_rate),
            ("signal_strength", self.signal_strength),
            ("first_char_break_rate", self.first_char_break_rate),
            ("explicit_code_rate", self.explicit_code_rate),
            ("generic_description_rate", self.generic_description_rate),
            ("corruption_rate", self.corruption_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.service_base_rate > 0.0 && self.service_base_rate < 1.0) {
            return bad("service_base_rate must lie in (0, 1)".into());
        }
        if self.explicit_code_rate + self.generic_description_rate > 1.0 {
            return bad("explicit_code_rate + generic_description_rate exceeds 1".into());
        }
        if !(self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be non-negative".into());
        }
        Ok(())
    }

    pub fn start(&self) -> Timestamp {
        midnight(self.start_date)
    }

    /// Exclusive end of the observed period.
    pub fn end(&self) -> Timestamp {
        midnight(self.end_date)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub container_id: String,
    pub consignee_id: u32,
    pub canonical_name: String,
    pub emitted_name: String,
    pub hs_chapter: u8,
    /// Dwell category 1..=8.
    pub dwell_category: u8,
    pub dwell_days: f64,
    pub service: bool,
    /// Planted defect, empty when the row is clean.
    pub corruption: String,
}

pub const TRUTH_HEADER: [&str; 9] = [
    "container_id",
    "consignee_id",
    "canonical_name",
    "emitted_name",
    "hs_chapter",
    "dwell_category",
    "dwell_days",
    "service",
    "corruption",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTables {
    pub containers: Vec<RawContainerRow>,
    pub events: Vec<RawEventRow>,
    pub truth: Vec<TruthRow>,
}

struct Consignee {
    name: String,
    service_effect: f64,
    dwell_effect: f64,
    chapters: Vec<u8>,
    liner_client: bool,
    shipping_line: usize,
    route: usize,
}

struct Draft {
    consignee: usize,
    chapter: u8,
    hazardous: bool,
    arrival: Timestamp,
}

pub fn generate_world(config: &WorldConfig) -> Result<RawTables, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let s = config.signal_strength;

    let catalog = HsCatalog::bundled();
    let chapter_tokens = distinctive_tokens(&catalog);
    let usable: Vec<u8> = catalog
        .chapters()
        .iter()
        .map(|c| c.chapter)
        .filter(|&c| c != UNUSED_CHAPTER)
        .collect();
    let chapter_service: HashMap<u8, f64> = usable.iter().map(|&c| (c, normal.sample(&mut rng))).collect();
    let chapter_dwell: HashMap<u8, f64> = usable.iter().map(|&c| (c, normal.sample(&mut rng))).collect();

    let names = generate_canonical_names(config.n_consignees, &mut rng);
    let consignees: Vec<Consignee> = names
        .into_iter()
        .map(|name| {
            let k = rng.random_range(1..=4);
            Consignee {
                name,
                service_effect: normal.sample(&mut rng),
                dwell_effect: normal.sample(&mut rng),
                chapters: usable.choose_multiple(&mut rng, k).copied().collect(),
                liner_client: rng.random_bool(0.3),
                shipping_line: rng.random_range(0..config.n_shipping_lines),
                route: rng.random_range(0..config.n_routes),
            }
        })
        .collect();
    let mut cum = Vec::with_capacity(consignees.len());
    let mut acc = 0.0;
    for rank in 1..=consignees.len() {
        acc += (rank as f64).powf(-config.zipf_exponent);
        cum.push(acc);
    }

    let span_secs = (config.end() - config.start()).num_seconds();
    let mut arrivals: Vec<i64> = (0..config.n_containers)
        .map(|_| rng.random_range(0..span_secs))
        .collect();
    arrivals.sort_unstable();
    let drafts: Vec<Draft> = arrivals
        .iter()
        .map(|&off| {
            let u = rng.random::<f64>() * acc;
            let consignee = cum.partition_point(|&c| c <= u).min(consignees.len() - 1);
            let chapter = *consignees[consignee].chapters.choose(&mut rng).unwrap();
            let p_haz = if HAZARDOUS_CHAPTERS.contains(&chapter) { 0.5 } else { 0.03 };
            Draft {
                consignee,
                chapter,
                hazardous: rng.random_bool(p_haz),
                arrival: config.start() + TimeDelta::seconds(off),
            }
        })
        .collect();

    // Service: logistic in planted effects, intercept calibrated to the base rate.
    let linear: Vec<f64> = drafts
        .iter()
        .map(|d| {
            1.5 * s
                * (consignees[d.consignee].service_effect
                    + 0.7 * chapter_service[&d.chapter]
                    + 0.8 * d.hazardous as u8 as f64)
        })
        .collect();
    let intercept = calibrate_intercept(&linear, config.service_base_rate);
    let service: Vec<bool> = linear
        .iter()
        .map(|&x| rng.random_bool(sigmoid(intercept + x)))
        .collect();

    // Dwell: (consignee, chapter) pairs ranked by planted effect and
    // quota-filled so container-weighted shares follow the target weights.
    let mut pair_count: BTreeMap<(usize, u8), usize> = BTreeMap::new();
    for d in &drafts {
        *pair_count.entry((d.consignee, d.chapter)).or_default() += 1;
    }
    let mut pairs: Vec<((usize, u8), usize)> = pair_count.into_iter().collect();
    pairs.sort_by(|a, b| {
        let score = |k: &(usize, u8)| consignees[k.0].dwell_effect + chapter_dwell[&k.1];
        score(&a.0).total_cmp(&score(&b.0)).then(a.0.cmp(&b.0))
    });
    let weights = config.dwell_category_weights;
    let cum_w: Vec<f64> = weights
        .iter()
        .scan(0.0, |a, w| {
            *a += w;
            Some(*a)
        })
        .collect();
    let n = drafts.len() as f64;
    let mut pair_category: HashMap<(usize, u8), u8> = HashMap::new();
    let mut seen = 0usize;
    for (key, count) in pairs {
        let mid = (seen as f64 + count as f64 / 2.0) / n;
        let cat = cum_w.iter().position(|&c| mid < c).unwrap_or(7) as u8 + 1;
        pair_category.insert(key, cat);
        seen += count;
    }
    let categories: Vec<u8> = drafts
        .iter()
        .map(|d| {
            if rng.random_bool(s) {
                pair_category[&(d.consignee, d.chapter)]
            } else {
                sample_category(&cum_w, rng.random())
            }
        })
        .collect();

    let exp5 = Exp::new(1.0 / 5.0).unwrap();
    let end = config.end();
    let mut tables = RawTables::default();
    let dimension_noise = ["40", "40FT", "40 ft", "40'"];
    for (i, d) in drafts.iter().enumerate() {
        let id = format!("C{:07}", i + 1);
        let c = &consignees[d.consignee];
        let category = categories[i];
        let dwell_days = match category {
            1 => rng.random_range(0.25..2.0),
            8 => (8.0 + Distribution::<f64>::sample(&exp5, &mut rng)).min(60.0),
            m => m as f64 + rng.random::<f64>(),
        };
        let dwell = TimeDelta::seconds((dwell_days * SECONDS_PER_DAY as f64).round() as i64);
        let exit = d.arrival + dwell;

        let mut events = vec![(d.arrival, "arrival")];
        if service[i] {
            let frac = rng.random_range(0.02..1.0);
            let delay = frac * dwell_days.min(5.5);
            events.push((d.arrival + secs(delay), "service"));
        }
        let moves_mean = 0.5 + 0.25 * dwell_days.min(20.0) + 1.5 * service[i] as u8 as f64;
        let moves = Poisson::new(moves_mean).unwrap().sample(&mut rng) as usize;
        for _ in 0..moves {
            let at = d.arrival + secs(rng.random_range(0.01..0.99) * dwell_days);
            events.push((at, "yard_move"));
        }
        events.push((exit, "exit"));
        events.sort();

        for (at, kind) in events {
            if at >= end {
                continue;
            }
            tables.events.push(RawEventRow {
                container_id: id.clone(),
                kind: if rng.random_bool(0.05) { kind.to_uppercase() } else { kind.to_string() },
                timestamp: noisy_timestamp(at, &mut rng),
            });
        }

        let forty = rng.random_bool(0.6);
        let net: u32 = rng.random_range(2_000..if forty { 26_000 } else { 21_000 });
        let tare = if forty { 3_750 } else { 2_250 };
        let reefer = REEFER_CHAPTERS.contains(&d.chapter);
        let mut name = emit_name_variant(&c.name, config.variant_rate, &mut rng);
        if rng.random_bool(config.first_char_break_rate) {
            name = perturb(&name, VariantClass::FirstCharBreak, &mut rng).unwrap_or(name);
        }
        let mut row = RawContainerRow {
            container_id: id.clone(),
            net_weight: noisy_weight(net, &mut rng),
            gross_weight: noisy_weight(net + tare, &mut rng),
            dimension: if forty {
                dimension_noise.choose(&mut rng).unwrap().to_string()
            } else {
                "20".into()
            },
            container_type: noisy_category(
                if reefer {
                    "REEFER"
                } else if d.hazardous && rng.random_bool(0.3) {
                    "TANK"
                } else if rng.random_bool(0.1) {
                    "OPEN TOP"
                } else {
                    "DRY"
                },
                &mut rng,
            ),
            cargo_type: noisy_category(
                if d.hazardous {
                    "DANGEROUS"
                } else if reefer {
                    "REFRIGERATED"
                } else {
                    "GENERAL"
                },
                &mut rng,
            ),
            hazardous: noisy_flag(d.hazardous, &mut rng),
            liner_client: noisy_flag(c.liner_client, &mut rng),
            shipping_line: noisy_category(
                &format!("LINE{:02}", pick_near(c.shipping_line, config.n_shipping_lines, &mut rng) + 1),
                &mut rng,
            ),
            route: noisy_category(
                &format!("ROUTE{:02}", pick_near(c.route, config.n_routes, &mut rng) + 1),
                &mut rng,
            ),
            consignee: name.clone(),
            merchandise_description: describe(d.chapter, &chapter_tokens, config, &mut rng),
            scheduled_arrival: noisy_timestamp(d.arrival, &mut rng),
        };
        let corruption = if rng.random_bool(config.corruption_rate) {
            corrupt(&mut row, &mut rng)
        } else {
            ""
        };
        tables.containers.push(row);
        tables.truth.push(TruthRow {
            container_id: id,
            consignee_id: d.consignee as u32,
            canonical_name: c.name.clone(),
            emitted_name: name,
            hs_chapter: d.chapter,
            dwell_category: category,
            dwell_days,
            service: service[i],
            corruption: corruption.to_string(),
        });
    }
    Ok(tables)
}

fn secs(days: f64) -> TimeDelta {
    TimeDelta::seconds((days * SECONDS_PER_DAY as f64).round().max(1.0) as i64)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intercept `b` with mean(sigmoid(b + x)) = target, by bisection.
fn calibrate_intercept(linear: &[f64], target: f64) -> f64 {
    let mean = |b: f64| linear.iter().map(|&x| sigmoid(b + x)).sum::<f64>() / linear.len() as f64;
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sample_category(cum_w: &[f64], u: f64) -> u8 {
    cum_w.iter().position(|&c| u < c).unwrap_or(7) as u8 + 1
}

fn pick_near<R: Rng + ?Sized>(preferred: usize, n: usize, rng: &mut R) -> usize {
    if rng.random_bool(0.7) {
        preferred
    } else {
        rng.random_range(0..n)
    }
}

/// Per chapter: tokens of length >= 3 appearing in no other chapter definition.
fn distinctive_tokens(catalog: &HsCatalog) -> BTreeMap<u8, Vec<String>> {
    let docs: Vec<(u8, Vec<String>)> = catalog
        .chapters()
        .iter()
        .map(|c| {
            let mut t = tokenize(&c.definition);
            t.sort();
            t.dedup();
            (c.chapter, t)
        })
        .collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for (_, toks) in &docs {
        for t in toks {
            *df.entry(t).or_default() += 1;
        }
    }
    docs.iter()
        .map(|(ch, toks)| {
            let mut own: Vec<String> = toks
                .iter()
                .filter(|t| t.len() >= 3 && df[t.as_str()] == 1)
                .cloned()
                .collect();
            if own.len() < 2 {
                own = toks.iter().filter(|t| t.len() >= 3).cloned().collect();
            }
            (*ch, own)
        })
        .collect()
}

fn describe<R: Rng + ?Sized>(
    chapter: u8,
    tokens: &BTreeMap<u8, Vec<String>>,
    config: &WorldConfig,
    rng: &mut R,
) -> String {
    let u: f64 = rng.random();
    let own = &tokens[&chapter];
    let k = rng.random_range(2..=4).min(own.len());
    let mut words: Vec<String> = own.choose_multiple(rng, k).cloned().collect();
    if u < config.explicit_code_rate {
        let code = format!("{:02}{:02}{:02}", chapter, rng.random_range(1..100), rng.random_range(0..100));
        let code = if rng.random_bool(0.3) {
            format!("{}.{}", &code[..4], &code[4..])
        } else {
            code
        };
        words.truncate(2);
        words.insert(0, format!("HS {code}"));
    } else if u < config.explicit_code_rate + config.generic_description_rate {
        words = GENERIC_TOKENS
            .choose_multiple(rng, 2)
            .map(|s| s.to_string())
            .collect();
    }
    if rng.random_bool(0.3) {
        words.iter_mut().for_each(|w| *w = w.to_lowercase());
    }
    words.join(" ")
}

fn noisy_weight<R: Rng + ?Sized>(kg: u32, rng: &mut R) -> String {
    match rng.random_range(0..10) {
        0 | 1 => {
            let s = kg.to_string();
            if s.len() > 3 {
                format!("{},{}", &s[..s.len() - 3], &s[s.len() - 3..])
            } else {
                s
            }
        }
        2 => format!("{kg}.0"),
        3 => format!("{kg} KG"),
        _ => kg.to_string(),
    }
}

fn noisy_flag<R: Rng + ?Sized>(v: bool, rng: &mut R) -> String {
    let opts: &[&str] = if v { &["Y", "Y", "Y", "yes", "1"] } else { &["N", "N", "N", "no", "0"] };
    opts.choose(rng).unwrap().to_string()
}

fn noisy_category<R: Rng + ?Sized>(v: &str, rng: &mut R) -> String {
    match rng.random_range(0..10) {
        0 => v.to_lowercase(),
        1 => format!(" {v} "),
        _ => v.to_string(),
    }
}

fn noisy_timestamp<R: Rng + ?Sized>(t: Timestamp, rng: &mut R) -> String {
    if rng.random_bool(0.2) {
        t.format("%Y-%m-%d %H:%M:%S").to_string()
    } else {
        format_timestamp(t)
    }
}

fn corrupt<R: Rng + ?Sized>(row: &mut RawContainerRow, rng: &mut R) -> &'static str {
    match rng.random_range(0..4) {
        0 => {
            std::mem::swap(&mut row.net_weight, &mut row.gross_weight);
            "weight inversion"
        }
        1 => {
            row.gross_weight = "N/A".into();
            "unparsable weight"
        }
        2 => {
            row.consignee = String::new();
            "missing consignee"
        }
        _ => {
            row.scheduled_arrival = "31/02/2021 25:00".into();
            "unparsable timestamp"
        }
    }
}

fn csv_bytes<F>(header: &[&str], rows: usize, mut record: F) -> Vec<u8>
where
    F: FnMut(usize) -> Vec<String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for i in 0..rows {
        w.write_record(record(i)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

impl RawTables {
    pub fn containers_csv(&self) -> Vec<u8> {
        csv_bytes(&CONTAINER_HEADER, self.containers.len(), |i| {
            let r = &self.containers[i];
            vec![
                r.container_id.clone(),
                r.net_weight.clone(),
                r.gross_weight.clone(),
                r.dimension.clone(),
                r.container_type.clone(),
                r.cargo_type.clone(),
                r.hazardous.clone(),
                r.liner_client.clone(),
                r.shipping_line.clone(),
                r.route.clone(),
                r.consignee.clone(),
                r.merchandise_description.clone(),
                r.scheduled_arrival.clone(),
            ]
        })
    }

    pub fn events_csv(&self) -> Vec<u8> {
        csv_bytes(&EVENT_HEADER, self.events.len(), |i| {
            let r = &self.events[i];
            vec![r.container_id.clone(), r.kind.clone(), r.timestamp.clone()]
        })
    }

    pub fn truth_csv(&self) -> Vec<u8> {
        csv_bytes(&TRUTH_HEADER, self.truth.len(), |i| {
            let t = &self.truth[i];
            vec![
                t.container_id.clone(),
                t.consignee_id.to_string(),
                t.canonical_name.clone(),
                t.emitted_name.clone(),
                t.hs_chapter.to_string(),
                t.dwell_category.to_string(),
                format!("{:.6}", t.dwell_days),
                (t.service as u8).to_string(),
                t.corruption.clone(),
            ]
        })
    }

    /// Writes `containers.csv`, `events.csv` and `truth.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (file, bytes) in [
            ("containers.csv", self.containers_csv()),
            ("events.csv", self.events_csv()),
            ("truth.csv", self.truth_csv()),
        ] {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(file))?);
            f.write_all(&bytes)?;
            f.flush()?;
        }
        Ok(())
    }
}

/// Reads a truth file written by [`RawTables::write`].
pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("").to_string();
            let parse_err = |what: &str| {
                csv::Error::from(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad {what} in truth file"),
                ))
            };
            Ok(TruthRow {
                container_id: f(0),
                consignee_id: f(1).parse().map_err(|_| parse_err("consignee_id"))?,
                canonical_name: f(2),
                emitted_name: f(3),
                hs_chapter: f(4).parse().map_err(|_| parse_err("hs_chapter"))?,
                dwell_category: f(5).parse().map_err(|_| parse_err("dwell_category"))?,
                dwell_days: f(6).parse().map_err(|_| parse_err("dwell_days"))?,
                service: f(7) == "1",
                corruption: f(8),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsclass::{build_index, classify, parse_explicit_code, DEFAULT_FLOOR};
    use crate::ontology::{build_ontology, clean, CleanOptions, RawStore};

    fn small(seed: u64) -> WorldConfig {
        WorldConfig {
            seed,
            n_containers: 5_000,
            n_consignees: 300,
            start_date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            end_date: NaiveDate::from_ymd_opt(2021, 7, 1).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small(1);
        c.dwell_category_weights[0] += 0.01;
        assert!(generate_world(&c).is_err());
        let mut c = small(1);
        c.end_date = c.start_date;
        assert!(generate_world(&c).is_err());
        let mut c = small(1);
        c.n_containers = 0;
        assert!(generate_world(&c).is_err());
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_world(&small(3)).unwrap();
        let b = generate_world(&small(3)).unwrap();
        assert_eq!(a.containers_csv(), b.containers_csv());
        assert_eq!(a.events_csv(), b.events_csv());
        assert_eq!(a.truth_csv(), b.truth_csv());
        let c = generate_world(&small(4)).unwrap();
        assert_ne!(a.containers_csv(), c.containers_csv());
    }

    #[test]
    fn temporal_sanity() {
        let cfg = small(5);
        let w = generate_world(&cfg).unwrap();
        let ids: std::collections::HashSet<_> = w.containers.iter().map(|r| r.container_id.as_str()).collect();
        let mut per: HashMap<&str, Vec<(Timestamp, String)>> = HashMap::new();
        for e in &w.events {
            assert!(ids.contains(e.container_id.as_str()));
            let t = crate::time::parse_timestamp(&e.timestamp).unwrap();
            assert!(t >= cfg.start() && t < cfg.end());
            per.entry(&e.container_id).or_default().push((t, e.kind.to_lowercase()));
        }
        for evs in per.values() {
            let arrival = evs.iter().find(|e| e.1 == "arrival").unwrap().0;
            for (t, k) in evs {
                match k.as_str() {
                    "arrival" => {}
                    "exit" => assert!(*t > arrival),
                    _ => assert!(*t > arrival),
                }
            }
            if let Some(exit) = evs.iter().find(|e| e.1 == "exit") {
                assert!(evs.iter().all(|e| e.0 <= exit.0));
                assert!(evs.iter().filter(|e| e.1 == "service").all(|e| e.0 < exit.0));
            }
        }
    }

    #[test]
    fn service_rate_calibrated() {
        let w = generate_world(&small(6)).unwrap();
        let rate = w.truth.iter().filter(|t| t.service).count() as f64 / w.truth.len() as f64;
        assert!((rate - 0.33).abs() < 0.03, "{rate}");
    }

    #[test]
    fn full_signal_makes_dwell_a_function_of_pair() {
        let mut cfg = small(7);
        cfg.signal_strength = 1.0;
        let w = generate_world(&cfg).unwrap();
        let mut seen: HashMap<(u32, u8), u8> = HashMap::new();
        for t in &w.truth {
            let prev = seen.insert((t.consignee_id, t.hs_chapter), t.dwell_category);
            assert!(prev.is_none() || prev == Some(t.dwell_category));
        }
    }

    #[test]
    fn dwell_days_fall_inside_category() {
        let w = generate_world(&small(8)).unwrap();
        for t in &w.truth {
            let d = t.dwell_days.floor() as u8;
            let expected = match d {
                0 | 1 => 1,
                2..=7 => d,
                _ => 8,
            };
            assert_eq!(expected, t.dwell_category, "{}", t.dwell_days);
        }
    }

    #[test]
    fn corruption_count_matches_quarantine() {
        let mut cfg = small(9);
        cfg.corruption_rate = 0.01;
        let w = generate_world(&cfg).unwrap();
        let planted = w.truth.iter().filter(|t| !t.corruption.is_empty()).count();
        assert!(planted > 0);
        let raw = RawStore {
            containers: w.containers.clone(),
            events: w.events.clone(),
        };
        let cleaned = clean(&raw, CleanOptions::default()).unwrap();
        assert_eq!(cleaned.rejected_containers.len(), planted);
        let truth: HashMap<&str, &str> =
            w.truth.iter().map(|t| (t.container_id.as_str(), t.corruption.as_str())).collect();
        for q in &cleaned.rejected_containers {
            assert_eq!(truth[q.row.container_id.as_str()], q.reason);
        }
        let store = build_ontology(cleaned);
        assert_eq!(store.len() + planted, w.containers.len());
    }

    #[test]
    fn descriptions_are_classifiable() {
        let w = generate_world(&small(10)).unwrap();
        let idx = build_index(&HsCatalog::bundled()).unwrap();
        let mut correct = 0;
        let mut classified = 0;
        let mut explicit = 0;
        for (row, t) in w.containers.iter().zip(&w.truth) {
            explicit += parse_explicit_code(&row.merchandise_description).is_some() as usize;
            let c = classify(&row.merchandise_description, &idx, DEFAULT_FLOOR);
            if let Some(ch) = c.chapter {
                classified += 1;
                correct += (ch == t.hs_chapter) as usize;
            }
        }
        let n = w.containers.len() as f64;
        assert!((explicit as f64 / n - 0.25).abs() < 0.03);
        assert!(classified as f64 / n >= 0.85);
        assert!(correct as f64 / classified as f64 > 0.95);
    }

    #[test]
    fn write_and_read_truth() {
        let w = generate_world(&small(11)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        w.write(dir.path()).unwrap();
        let back = read_truth(&dir.path().join("truth.csv")).unwrap();
        assert_eq!(back.len(), w.truth.len());
        assert_eq!(back[0].container_id, w.truth[0].container_id);
        let raw = crate::ontology::ingest_raw(&dir.path().join("containers.csv"), &dir.path().join("events.csv")).unwrap();
        assert_eq!(raw.containers, w.containers);
        assert_eq!(raw.events, w.events);
    }
}
