//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
//! budgets are pinned below.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dwellcast::decision::{assign_dwell, ScoreSet};
use dwellcast::evaluation::{hits_at_k, impact_estimate, jaccard_matrix, precision_at_k, recall_at_k, ImpactParams};
use dwellcast::featfactory::{compute_rows, leakage_audit, FeatureEngine};
use dwellcast::governance::{generate_splits, run_experiment, ExperimentConfig, Registry, SelectionMetric, TemporalConfig};
use dwellcast::labeling::{dwell_category, TaskId};
use dwellcast::learners::{
    gini, logistic_gradient, logistic_objective, roc_curve, train, Dataset, HyperParams, ModelState, Penalty,
};
use dwellcast::linkage::{profile_similarity, resolve_consignees, TrigramProfile};
use dwellcast::ontology::OntologyStore;
use dwellcast::pipeline::store_from_tables;
use dwellcast::synthworld::{emit_name_variant, generate_canonical_names, generate_world, WorldConfig, DEFAULT_DWELL_WEIGHTS};
use dwellcast::time::{days, midnight, Span};
use dwellcast::workflow::{assign, evaluate, EvalSettings, Evaluation};

const IMPACT_TOL: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const LINKAGE_MIN_F1: f64 = 0.95;
const SERVICE_LIFT_PP: f64 = 0.30;
const DWELL_LIFT_PP: f64 = 0.20;
const MARGINAL_TOL_PP: f64 = 0.015;
const AUC_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget: Duration) -> Result<(), String> {
    check(elapsed <= budget, || format!("took {elapsed:.1?}, budget {budget:?}"))
}

// C1

fn c1_impact() -> Outcome {
    let t0 = Instant::now();
    let lo = impact_estimate(&ImpactParams::new(0.25, 0.10)).map_err(|e| e.to_string())?;
    let hi = impact_estimate(&ImpactParams::new(0.40, 0.20)).map_err(|e| e.to_string())?;
    // Closed forms: 0.75*0.51*0.25 + 0.75*0.49*0.10 and 0.75*0.51*0.40 + 0.75*0.49*0.20.
    check((lo - 0.132375).abs() <= IMPACT_TOL, || format!("lower bound {lo}"))?;
    check((hi - 0.2265).abs() <= IMPACT_TOL, || format!("upper bound {hi}"))?;
    check((lo * 100.0).round() == 13.0 && (hi * 100.0).round() == 23.0, || "rounded envelope is not 13%..23%".into())?;
    check((lo * 1e4).round() / 1e4 == 0.1324, || format!("lower bound {lo} does not round to 0.1324"))?;
    let zero = impact_estimate(&ImpactParams::new(0.0, 0.0)).map_err(|e| e.to_string())?;
    check(zero == 0.0, || "null policy not zero".into())?;
    within(t0.elapsed(), Duration::from_secs(1))?;
    Ok(format!("lower={lo:.6} upper={hi:.6}"))
}

// C2

/// Ranked list of `n` ids with `truth_n` positives, `hits` of which sit in the top `k`.
fn scenario(n: usize, truth_n: usize, hits: usize, k: usize) -> (Vec<String>, HashSet<String>) {
    let ranked: Vec<String> = (0..n).map(|i| format!("C{i:05}")).collect();
    let mut truth: HashSet<String> = ranked[..hits].iter().cloned().collect();
    truth.extend(ranked[k..k + truth_n - hits].iter().cloned());
    (ranked, truth)
}

fn c2_scenario() -> Outcome {
    let (ranked, truth) = scenario(1726, 347, 229, 300);
    check(truth.len() == 347, || "fixture truth size".into())?;
    let h = hits_at_k(&ranked, &truth, 300);
    check(h == 229, || format!("hits {h}"))?;
    let p = precision_at_k(&ranked, &truth, 300).map_err(|e| e.to_string())?;
    check(p == 229.0 / 300.0, || format!("precision {p}"))?;

    let (ranked, truth) = scenario(1726, 347, 201, 300);
    let h = hits_at_k(&ranked, &truth, 300);
    check(h == 201, || format!("hits {h}"))?;
    let r = recall_at_k(&ranked, &truth, 300).map_err(|e| e.to_string())?;
    check(r == Some(201.0 / 347.0), || format!("recall {r:?}"))?;
    Ok(format!("229/300 precision, 201/347={:.3} recall", 201.0 / 347.0))
}

// C3

fn c3_metric_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for inst in 0..1000 {
        let n = rng.random_range(1..60);
        let mut ranked: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        ranked.shuffle(&mut rng);
        let truth: HashSet<String> = (0..n + 10).filter(|_| rng.random_bool(0.3)).map(|i| format!("x{i}")).collect();
        let k = rng.random_range(1..n + 10);
        let mut count = 0;
        for (pos, id) in ranked.iter().enumerate() {
            if pos < k && truth.contains(id) {
                count += 1;
            }
        }
        let p = precision_at_k(&ranked, &truth, k).map_err(|e| e.to_string())?;
        check(p == count as f64 / k.min(n) as f64, || format!("instance {inst}: precision {p}"))?;
        let r = recall_at_k(&ranked, &truth, k).map_err(|e| e.to_string())?;
        let expect = (!truth.is_empty()).then(|| count as f64 / truth.len() as f64);
        check(r == expect, || format!("instance {inst}: recall {r:?} vs {expect:?}"))?;
    }
    within(t0.elapsed(), Duration::from_secs(10))?;
    Ok("1000 instances exact".into())
}

// C4

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn pairs(n: usize) -> u64 {
    (n as u64) * (n as u64).saturating_sub(1) / 2
}

fn c4_linkage() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let canon = generate_canonical_names(1000, &mut rng);
    let mut truth_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut emitted = 0;
    while emitted < 5000 {
        let c = rng.random_range(0..canon.len());
        let v = emit_name_variant(&canon[c], 0.8, &mut rng);
        if let Some(&prev) = truth_of.get(&v) {
            if prev != c {
                return Err(format!("variant `{v}` emitted for two canonical names"));
            }
        }
        truth_of.insert(v, c);
        emitted += 1;
    }
    let names: Vec<String> = truth_of.keys().cloned().collect();
    let threshold = 0.8;
    let resolution = resolve_consignees(&names, threshold);

    // Unblocked oracle: every pair, then transitive closure.
    let profiles: Vec<TrigramProfile> = names.iter().map(|n| TrigramProfile::new(n)).collect();
    let mut parent: Vec<usize> = (0..names.len()).collect();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            if profile_similarity(&profiles[i], &profiles[j]) >= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut oracle: HashMap<usize, BTreeSet<&str>> = HashMap::new();
    let mut blocked: HashMap<u32, BTreeSet<&str>> = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        let root = find(&mut parent, i);
        oracle.entry(root).or_default().insert(n);
        blocked.entry(resolution.component_of(n).unwrap()).or_default().insert(n);
    }
    let oracle: BTreeSet<_> = oracle.into_values().collect();
    let blocked: BTreeSet<_> = blocked.into_values().collect();
    check(oracle == blocked, || format!("partitions differ: {} vs {} groups", oracle.len(), blocked.len()))?;

    let mut joint: HashMap<(u32, usize), usize> = HashMap::new();
    let mut pred: HashMap<u32, usize> = HashMap::new();
    let mut gold: HashMap<usize, usize> = HashMap::new();
    for n in &names {
        let p = resolution.component_of(n).unwrap();
        let g = truth_of[n];
        *joint.entry((p, g)).or_default() += 1;
        *pred.entry(p).or_default() += 1;
        *gold.entry(g).or_default() += 1;
    }
    let tp: u64 = joint.values().map(|&c| pairs(c)).sum();
    let pp: u64 = pred.values().map(|&c| pairs(c)).sum();
    let gp: u64 = gold.values().map(|&c| pairs(c)).sum();
    let precision = tp as f64 / pp.max(1) as f64;
    let recall = tp as f64 / gp.max(1) as f64;
    let f1 = 2.0 * precision * recall / (precision + recall);
    check(f1 >= LINKAGE_MIN_F1, || format!("pairwise F1 {f1:.4} (P {precision:.4}, R {recall:.4})"))?;
    within(t0.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{} distinct names, {} groups, F1 {f1:.4}", names.len(), blocked.len()))
}

// C5

fn c5_splits() -> Outcome {
    let t0 = Instant::now();
    let cfg = TemporalConfig {
        data_start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        data_end: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
        train_window: Span::Months(6),
        validation_window: Span::Months(1),
        retrain_cadence: Span::Months(1),
    };
    let splits = generate_splits(&cfg).map_err(|e| e.to_string())?;
    check(splits.len() == 30, || format!("{} splits", splits.len()))?;
    for s in &splits {
        check(s.train_end <= s.validate_start, || format!("split {} overlaps", s.split_id))?;
        check(s.validate_end <= cfg.end(), || format!("split {} runs past the data", s.split_id))?;
    }
    within(t0.elapsed(), Duration::from_secs(1))?;
    Ok("30 splits".into())
}

// C6, C8, C10 share one experiment over a 50k-container world.

struct World50k {
    store: OntologyStore,
    eval: Evaluation,
    leakage_points: usize,
    leakage_findings: usize,
    elapsed: Duration,
}

fn world_50k(dir: &Path) -> Result<World50k, String> {
    let t0 = Instant::now();
    let world = WorldConfig {
        seed: 11,
        n_containers: 50_000,
        start_date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
        end_date: NaiveDate::from_ymd_opt(2021, 10, 15).unwrap(),
        signal_strength: 1.0,
        ..Default::default()
    };
    let tables = generate_world(&world).map_err(|e| e.to_string())?;
    let store = store_from_tables(&tables, world.end(), 0.8, 0.05).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        temporal: TemporalConfig {
            data_start: world.start_date,
            data_end: world.end_date,
            train_window: Span::Days(182),
            ..TemporalConfig::default()
        },
        train_stride_days: 3,
        max_splits: Some(3),
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&store, &cfg, dir, None).map_err(|e| e.to_string())?;
    let registry = Registry::open_existing(dir).map_err(|e| e.to_string())?;
    let decisions = assign(&registry, SelectionMetric::PrecisionAtK).map_err(|e| e.to_string())?;
    let eval = evaluate(&store, &registry, &decisions, &EvalSettings::default()).map_err(|e| e.to_string())?;
    Ok(World50k {
        store,
        eval,
        leakage_points: out.leakage_points,
        leakage_findings: out.leakage_findings,
        elapsed: t0.elapsed(),
    })
}

fn c6_leakage(w: &World50k) -> Outcome {
    check(w.leakage_points > 0, || "no points audited".into())?;
    check(w.leakage_findings == 0, || format!("{} findings on the clean run", w.leakage_findings))?;

    // Adversarial: features computed a week late but stamped with the earlier as_of.
    let as_of = midnight(NaiveDate::from_ymd_opt(2021, 7, 1).unwrap());
    let ids: Vec<String> = w.store.cohort(as_of).iter().map(|&i| w.store.entity(i).id().to_string()).collect();
    let specs = ExperimentConfig::default().feature_specs;
    let engine = FeatureEngine::new(&w.store);
    let mut leaky = compute_rows(&engine, &w.store, &ids, as_of + days(7), &specs).map_err(|e| e.to_string())?;
    leaky.as_of = as_of;
    let report = leakage_audit(&leaky, &w.store).map_err(|e| e.to_string())?;
    check(!report.findings.is_empty(), || "shifted fixture produced no findings".into())?;
    Ok(format!(
        "0 findings over {} audited points; adversarial fixture {} findings",
        w.leakage_points,
        report.findings.len()
    ))
}

fn c8_signal(w: &World50k) -> Outcome {
    let task = |t: TaskId| w.eval.tasks.iter().find(|s| s.task_id == t).ok_or(format!("no summary for {t}"));
    let base = |s: &dwellcast::workflow::TaskSummary, name: &str| {
        s.baselines.get(name).map(|b| b.precision).ok_or(format!("no {name} baseline for {}", s.task_id))
    };
    let mut detail = Vec::new();
    for (t, lift) in [(TaskId::Service, SERVICE_LIFT_PP), (TaskId::Dt1, DWELL_LIFT_PP), (TaskId::Dt8, DWELL_LIFT_PP)] {
        let s = task(t)?;
        let forest = s.forest_precision.ok_or(format!("no forest record for {t}"))?;
        let random = base(s, "random")?;
        check(forest >= random + lift, || format!("{t}: forest {forest:.3} vs random {random:.3}"))?;
        detail.push(format!("{t} forest {forest:.3} random {random:.3}"));
    }
    let s = task(TaskId::Service)?;
    let forest = s.forest_precision.unwrap();
    for name in ["baseline1", "baseline2"] {
        let b = base(s, name)?;
        check(forest > b, || format!("service: forest {forest:.3} vs {name} {b:.3}"))?;
        detail.push(format!("{name} {b:.3}"));
    }
    within(w.elapsed, Duration::from_secs(600))?;
    detail.push(format!("run {:.0?}", w.elapsed));
    Ok(detail.join(", "))
}

fn c10_jaccard(w: &World50k) -> Outcome {
    let m = w.eval.jaccard.as_ref().ok_or("no Jaccard matrix")?;
    check(m.len() == 8 && m.iter().all(|r| r.len() == 8), || "matrix is not 8x8".into())?;
    for i in 0..8 {
        check(m[i][i] == 1.0, || format!("diagonal {i} = {}", m[i][i]))?;
        for j in 0..8 {
            check(m[i][j] == m[j][i], || format!("asymmetric at ({i},{j})"))?;
        }
    }
    let adj = w.eval.jaccard_adjacent_mean.ok_or("no adjacent mean")?;
    let non = w.eval.jaccard_nonadjacent_mean.ok_or("no non-adjacent mean")?;
    check(adj > non, || format!("adjacent {adj:.3} <= non-adjacent {non:.3}"))?;

    let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let toy = jaccard_matrix(&[set(&["a", "b", "c"]), set(&["b", "c", "d"]), BTreeSet::new()]);
    check(toy[0][1] == 0.5 && toy[2][2] == 1.0 && toy[0][2] == 0.0, || "toy matrix".into())?;
    Ok(format!("adjacent {adj:.3} > non-adjacent {non:.3}"))
}

// C7

fn c7_learners() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut worst: f64 = 0.0;
    for inst in 0..50 {
        let n = rng.random_range(5..40);
        let p = rng.random_range(1..6);
        let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        // Keep coefficients away from 0 where the l1 term is not differentiable.
        let coef: Vec<f64> = (0..p).map(|_| rng.random_range(0.05..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let b = rng.random_range(-1.0..1.0);
        let c = rng.random_range(0.1..10.0);
        let penalty = if inst % 2 == 0 { Penalty::L2 } else { Penalty::L1 };
        let f = |w: &[f64], b: f64| logistic_objective(&x, p, &y, w, b, penalty, c);
        let (g, gb) = logistic_gradient(&x, p, &y, &coef, b, penalty, c);
        for j in 0..p {
            let (mut up, mut dn) = (coef.clone(), coef.clone());
            up[j] += FD_STEP;
            dn[j] -= FD_STEP;
            worst = worst.max(((f(&up, b) - f(&dn, b)) / (2.0 * FD_STEP) - g[j]).abs());
        }
        worst = worst.max(((f(&coef, b + FD_STEP) - f(&coef, b - FD_STEP)) / (2.0 * FD_STEP) - gb).abs());
    }
    check(worst <= GRAD_TOL, || format!("gradient max-abs error {worst:e}"))?;

    // Root split against an exhaustive Gini search, over every labelling of
    // 2..=12 rows with a tied second feature.
    let mut fixtures = 0;
    for n in 2..=12usize {
        let x2: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let x1: Vec<f64> = {
            let mut v: Vec<f64> = (0..n).map(|i| (i / 2) as f64).collect();
            v.shuffle(&mut rng);
            v
        };
        let x: Vec<f64> = (0..n).flat_map(|i| [x1[i], x2[i]]).collect();
        for mask in 0..(1u32 << n) {
            let y: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let data = Dataset::new(x.clone(), 2, y, "oracle").map_err(|e| e.to_string())?;
            let expect = gini_oracle(&data);
            let model = train(&data, &HyperParams::decision_tree(1, 2)).map_err(|e| e.to_string())?;
            let got = match &model.state {
                ModelState::Trees { trees } => trees[0].root_split(),
                _ => None,
            };
            check(got == expect, || format!("n={n} mask={mask:b}: {got:?} vs {expect:?}"))?;
            fixtures += 1;
        }
    }

    for inst in 0..100 {
        let n = rng.random_range(2..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let curve = roc_curve(&scores, &labels).map_err(|e| e.to_string())?;
        let (best_j, pair_auc) = roc_oracle(&scores, &labels);
        let y = curve.youden();
        check((y.tpr - y.fpr - best_j).abs() < 1e-12, || format!("instance {inst}: J {} vs {best_j}", y.tpr - y.fpr))?;
        let (tpr, fpr) = rates_above(&scores, &labels, y.threshold);
        check(tpr == y.tpr && fpr == y.fpr, || format!("instance {inst}: threshold {} inconsistent", y.threshold))?;
        check((curve.auc() - pair_auc).abs() < AUC_TOL, || format!("instance {inst}: auc {} vs {pair_auc}", curve.auc()))?;
    }
    within(t0.elapsed(), Duration::from_secs(60))?;
    Ok(format!("gradient err {worst:.1e}, {fixtures} split fixtures, 100 ROC instances"))
}

fn gini_oracle(data: &Dataset) -> Option<(usize, f64)> {
    let n = data.n_rows() as f64;
    let pos = data.y.iter().filter(|&&b| b).count() as f64;
    let parent = gini(pos, n);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..data.n_cols {
        let mut vals: Vec<f64> = (0..data.n_rows()).map(|i| data.row(i)[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut nl, mut pl) = (0.0, 0.0);
            for i in 0..data.n_rows() {
                if data.row(i)[f] <= t {
                    nl += 1.0;
                    pl += data.y[i] as u8 as f64;
                }
            }
            let dec = parent - nl / n * gini(pl, nl) - (n - nl) / n * gini(pos - pl, n - nl);
            if dec > 1e-12 && best.is_none_or(|(d, _, _)| dec > d) {
                best = Some((dec, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn rates_above(scores: &[f64], labels: &[bool], t: f64) -> (f64, f64) {
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let n = labels.len() as f64 - p;
    let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s > t).count() as f64;
    let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s > t).count() as f64;
    (tp / p, fp / n)
}

/// Best J over every cut (each distinct score and below all) and the
/// pairwise-ordering AUC with ties counted half.
fn roc_oracle(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let mut cuts: Vec<f64> = scores.to_vec();
    cuts.push(f64::NEG_INFINITY);
    let best = cuts
        .iter()
        .map(|&t| {
            let (tpr, fpr) = rates_above(scores, labels, t);
            tpr - fpr
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (best, num / den)
}

// C9

fn c9_dwell() -> Outcome {
    let world = WorldConfig {
        seed: 9,
        n_containers: 100_000,
        ..Default::default()
    };
    let tables = generate_world(&world).map_err(|e| e.to_string())?;
    let mut counts = [0usize; 8];
    for t in &tables.truth {
        check(dwell_category(t.dwell_days) == t.dwell_category, || format!("{}: category/days mismatch", t.container_id))?;
        counts[t.dwell_category as usize - 1] += 1;
    }
    let total = tables.truth.len() as f64;
    let mut worst: f64 = 0.0;
    for (c, w) in counts.iter().zip(DEFAULT_DWELL_WEIGHTS) {
        worst = worst.max((*c as f64 / total - w).abs());
    }
    check(worst <= MARGINAL_TOL_PP, || format!("marginal deviation {:.2} pp", worst * 100.0))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for inst in 0..1000 {
        let n = rng.random_range(1..25);
        let ids: Vec<String> = (0..n).map(|i| format!("c{i:02}")).collect();
        let coarse = rng.random_bool(0.5);
        let draw = |rng: &mut ChaCha8Rng| {
            if coarse {
                rng.random_range(0..5) as f64 / 4.0
            } else {
                rng.random_range(0.0..1.0)
            }
        };
        let scores: Vec<Vec<f64>> = (0..8).map(|_| (0..n).map(|_| draw(&mut rng)).collect()).collect();
        let thresholds: Vec<f64> = (0..8).map(|_| draw(&mut rng)).collect();
        let as_of = midnight(NaiveDate::from_ymd_opt(2022, 1, 1).unwrap());
        let sets: Vec<ScoreSet> = TaskId::DWELL
            .iter()
            .zip(&scores)
            .map(|(&t, s)| {
                let mut entries: Vec<(String, f64)> = ids.iter().cloned().zip(s.iter().copied()).collect();
                entries.shuffle(&mut rng);
                ScoreSet::new(as_of, t, entries)
            })
            .collect();
        let got = assign_dwell(&sets, &thresholds).map_err(|e| e.to_string())?;
        check(got.len() == n, || format!("instance {inst}: {} of {n} assigned", got.len()))?;
        let unique: HashSet<&str> = got.iter().map(|c| c.container_id.as_str()).collect();
        check(unique.len() == n, || format!("instance {inst}: duplicate assignment"))?;
        let expect = rule_oracle(&ids, &scores, &thresholds);
        for c in &got {
            let i = ids.iter().position(|x| *x == c.container_id).unwrap();
            let want = expect[i];
            check((c.label, c.fallback) == (TaskId::DWELL[want.0], want.1), || {
                format!("instance {inst}: {} got {} (fallback {}), oracle {}", c.container_id, c.label, c.fallback, TaskId::DWELL[want.0])
            })?;
        }
    }
    Ok(format!("max marginal deviation {:.2} pp; 1000 rule fixtures", worst * 100.0))
}

/// Per container: (label index, fallback) by direct application of the rule.
fn rule_oracle(ids: &[String], scores: &[Vec<f64>], thr: &[f64]) -> Vec<(usize, bool)> {
    let n = ids.len();
    let mut rank = vec![[usize::MAX; 8]; n];
    for l in 0..8 {
        let mut sel: Vec<usize> = (0..n).filter(|&i| scores[l][i] > thr[l]).collect();
        sel.sort_by(|&a, &b| scores[l][b].total_cmp(&scores[l][a]).then(ids[a].cmp(&ids[b])));
        for (r, &i) in sel.iter().enumerate() {
            rank[i][l] = r + 1;
        }
    }
    (0..n)
        .map(|i| {
            let margin = |l: usize| scores[l][i] - thr[l];
            let mut best: Option<usize> = None;
            for l in 0..8 {
                if rank[i][l] == usize::MAX {
                    continue;
                }
                best = match best {
                    None => Some(l),
                    Some(b) if rank[i][l] < rank[i][b] || (rank[i][l] == rank[i][b] && margin(l) > margin(b)) => Some(l),
                    keep => keep,
                };
            }
            match best {
                Some(l) => (l, false),
                None => {
                    let mut b = 0;
                    for l in 1..8 {
                        if margin(l) > margin(b) {
                            b = l;
                        }
                    }
                    (b, true)
                }
            }
        })
        .collect()
}

// C11

fn bundle(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let e = e.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(e.path()).map_err(|e| e.to_string())?;
        out.insert(e.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(out)
}

fn c11_determinism(tmp: &Path) -> Outcome {
    let config: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml");
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_dwellcast"))
            .arg("all")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "warn")
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), || format!("run {run} exited with {status}"))?;
        reports.push(bundle(&out.join("report"))?);
    }
    check(!reports[0].is_empty(), || "empty report bundle".into())?;
    for (name, bytes) in &reports[0] {
        check(reports[1].get(name) == Some(bytes), || format!("{name} differs between runs"))?;
    }
    check(reports[0].len() == reports[1].len(), || "file sets differ".into())?;
    let manifest: serde_json::Value = serde_json::from_slice(&reports[0]["MANIFEST.json"]).map_err(|e| e.to_string())?;
    Ok(format!("{} files, bundle {}", reports[0].len(), &manifest["bundle_digest"].as_str().unwrap_or("?")[..16]))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |id: &str, name: &str, r: Outcome| {
        match r {
            Ok(d) => println!("{id} PASS {name}: {d}"),
            Err(e) => {
                failed += 1;
                println!("{id} FAIL {name}: {e}");
            }
        }
    };
    report("C1", "impact envelope", c1_impact());
    report("C2", "scenario arithmetic", c2_scenario());
    report("C3", "metric oracles", c3_metric_oracles());
    report("C4", "linkage fidelity", c4_linkage());
    report("C5", "temporal splits", c5_splits());
    match world_50k(&tmp.path().join("registry")) {
        Ok(w) => {
            report("C6", "leakage audit", c6_leakage(&w));
            report("C7", "learner correctness", c7_learners());
            report("C8", "signal recovery", c8_signal(&w));
            report("C9", "dwell partition", c9_dwell());
            report("C10", "label overlap", c10_jaccard(&w));
        }
        Err(e) => {
            for (id, name) in [("C6", "leakage audit"), ("C8", "signal recovery"), ("C10", "label overlap")] {
                report(id, name, Err(format!("experiment failed: {e}")));
            }
            report("C7", "learner correctness", c7_learners());
            report("C9", "dwell partition", c9_dwell());
        }
    }
    report("C11", "determinism", c11_determinism(tmp.path()));
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
