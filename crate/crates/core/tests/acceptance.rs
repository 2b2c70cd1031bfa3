//! Acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use occusense::acoustics::{
    mean_absorption, reverberation_time, room_reverberation, AbsorptionTable, Lookup, RoomGeometry,
    RoomModel, Surface,
};
use occusense::dataset::{
    generate_synthetic, simulate_corpus, Dataset, Feature, FeatureSet, GeneratorParams, Occupancy,
    Schedule, SlotSample,
};
use occusense::detector::{batch_events, replay, Classifier, Detector, ThresholdRule};
use occusense::eval::{ablation, cross_validate, make_folds, ConfusionMatrix, CvMode};
use occusense::id3::{
    self, best_split, best_split_min_child, entropy, fit, fit_samples, information_gain,
    FeatureVector, LearnerConfig,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const ACOUSTICS_REL_TOL: f64 = 1e-9;
const ACOUSTICS_CASES: usize = 200;
const SPLIT_GAIN_TOL: f64 = 1e-12;
const SPLIT_DATASETS: usize = 500;
const SPLIT_MAX_SAMPLES: usize = 12;
const ACCURACY_SEEDS: u64 = 20;
const ACCURACY_MIN_NOISE_05: f64 = 90.0;
const ACCURACY_MIN_NOISE_02: f64 = 95.0;
const ABLATION_SEEDS: u64 = 20;
const ROUND_TRIP_QUERIES: usize = 1000;
const REPLAY_PERTURBED_FILES: u64 = 50;
const PROPERTY_CASES: u32 = 256;

const BUDGETS: [Duration; 8] = [
    Duration::from_secs(1),
    Duration::from_secs(10),
    Duration::from_secs(1),
    Duration::from_secs(30),
    Duration::from_secs(120),
    Duration::from_secs(5),
    Duration::from_secs(5),
    Duration::from_secs(60),
];

type Check = Result<String, String>;
type Scored = (FeatureSet, f64);
type Criterion = fn() -> Check;

fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

// ---------------------------------------------------------------- 1

/// Nearest tabulated point, ties to the lower frequency.
fn oracle_alpha(points: &[(f64, f64)], f: f64) -> f64 {
    let mut best = points[0];
    for &p in &points[1..] {
        let (d_best, d_p) = ((best.0 - f).abs(), (p.0 - f).abs());
        if d_p < d_best || (d_p == d_best && p.0 < best.0) {
            best = p;
        }
    }
    best.1
}

fn oracle_room(l: f64, w: f64, h: f64, surfaces: &[(f64, f64)]) -> (f64, f64) {
    let num: f64 = surfaces.iter().map(|(a, alpha)| a * alpha).sum();
    let den: f64 = surfaces.iter().map(|(a, _)| a).sum();
    let alpha = num / den;
    let t = 0.161 * (l * w * h) / (2.0 * (l * w + l * h + w * h) * alpha);
    (alpha, t)
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for case in 0..ACOUSTICS_CASES {
        let (l, w, h) = (
            rng.random_range(2.0..60.0),
            rng.random_range(2.0..40.0),
            rng.random_range(2.0..15.0),
        );
        let mut table = AbsorptionTable::new();
        let mut points = Vec::new();
        for m in 0..3 {
            let n = rng.random_range(1..8);
            let mut freqs = BTreeSet::new();
            while freqs.len() < n {
                freqs.insert(rng.random_range(50u32..8000));
            }
            let pts: Vec<(f64, f64)> = freqs
                .into_iter()
                .map(|f| (f as f64, rng.random_range(0.01..0.99)))
                .collect();
            table
                .insert(format!("m{m}"), pts.clone())
                .map_err(|e| e.to_string())?;
            points.push(pts);
        }
        let n_surfaces = rng.random_range(1..7);
        let mut surfaces = Vec::new();
        let mut raw = Vec::new();
        for i in 0..n_surfaces {
            let m = rng.random_range(0..3);
            let area = rng.random_range(0.5..500.0);
            surfaces.push(Surface::new(format!("s{i}"), area, format!("m{m}")).unwrap());
            raw.push((area, m));
        }
        let f = rng.random_range(20.0..9000.0);
        let with_alpha: Vec<(f64, f64)> = raw
            .iter()
            .map(|&(a, m)| (a, oracle_alpha(&points[m], f)))
            .collect();
        let (alpha_want, t_want) = oracle_room(l, w, h, &with_alpha);

        let geometry = RoomGeometry::new(l, w, h).map_err(|e| e.to_string())?;
        let alpha = mean_absorption(&surfaces, &table, f).map_err(|e| e.to_string())?;
        let t = reverberation_time(&geometry, alpha).map_err(|e| e.to_string())?;
        let room = RoomModel::new(geometry, surfaces, table, Lookup::Nearest).unwrap();
        let composed = room_reverberation(&room, f).map_err(|e| e.to_string())?;
        for (got, want) in [(alpha.value, alpha_want), (t, t_want), (composed, t_want)] {
            let e = rel_err(got, want);
            worst = worst.max(e);
            if e > ACOUSTICS_REL_TOL {
                return Err(format!("case {case}: got {got}, oracle {want}"));
            }
        }
    }

    // Lecture hall: 70 × 30 × 12 ft; carpet floor, concrete ceiling, brick
    // walls. Coefficients at 3087 Hz: brick 0.020448859, concrete 0.05,
    // carpet 0.612724866.
    let ft: f64 = 0.3048;
    let (l, w, h) = (70.0 * ft, 30.0 * ft, 12.0 * ft);
    let v = l * w * h;
    let s = 2.0 * (l * w + l * h + w * h);
    if (v - 713.58).abs() > 0.01 || (s - 613.16).abs() > 0.01 {
        return Err(format!("hall geometry V {v} S {s}"));
    }
    let sq = ft * ft;
    let hall = [
        (2100.0 * sq, 0.612724866),
        (2100.0 * sq, 0.05),
        (2.0 * 840.0 * sq, 0.020448859),
        (2.0 * 360.0 * sq, 0.020448859),
    ];
    let (alpha_want, t_want) = oracle_room(l, w, h, &hall);
    let room = RoomModel::default_hall();
    let alpha = mean_absorption(&room.surfaces, &room.table, 3087.0).map_err(|e| e.to_string())?;
    let t = room.reverberation(3087.0).map_err(|e| e.to_string())?;
    for (got, want) in [(alpha.value, alpha_want), (t, t_want)] {
        let e = rel_err(got, want);
        worst = worst.max(e);
        if e > ACOUSTICS_REL_TOL {
            return Err(format!("hall: got {got}, oracle {want}"));
        }
    }
    Ok(format!(
        "{ACOUSTICS_CASES} random rooms + hall (T = {t:.6} s at 3087 Hz), worst rel err {worst:.2e}"
    ))
}

// ---------------------------------------------------------------- 2

fn oracle_entropy(p: usize, n: usize) -> f64 {
    let total = (p + n) as f64;
    [p, n]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / total;
            -q * q.log2()
        })
        .sum()
}

/// Exhaustive search: every midpoint of every enabled feature leaving at
/// least `min_child` samples per side, then the first candidate within
/// tolerance of the maximum in tie order.
fn oracle_best_split(
    samples: &[SlotSample],
    features: FeatureSet,
    min_child: usize,
) -> Option<(Feature, f64, f64)> {
    let labels: Vec<bool> = samples
        .iter()
        .map(|s| s.label == Some(Occupancy::Occupied))
        .collect();
    let pos = labels.iter().filter(|&&b| b).count();
    let parent = oracle_entropy(pos, labels.len() - pos);
    let mut candidates = Vec::new();
    for f in [
        Feature::ReverberationTime,
        Feature::Temperature,
        Feature::Co2,
    ] {
        if !features.contains(f) {
            continue;
        }
        let mut values: Vec<f64> = samples.iter().map(|s| s.feature(f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let thr = (pair[0] + pair[1]) / 2.0;
            let (mut lp, mut ln, mut rp, mut rn) = (0, 0, 0, 0);
            for (s, &y) in samples.iter().zip(&labels) {
                match (s.feature(f) <= thr, y) {
                    (true, true) => lp += 1,
                    (true, false) => ln += 1,
                    (false, true) => rp += 1,
                    (false, false) => rn += 1,
                }
            }
            if lp + ln < min_child || rp + rn < min_child {
                continue;
            }
            let n = samples.len() as f64;
            let nl = (lp + ln) as f64;
            let nr = (rp + rn) as f64;
            let gain = parent - nl / n * oracle_entropy(lp, ln) - nr / n * oracle_entropy(rp, rn);
            candidates.push((f, thr, gain.max(0.0)));
        }
    }
    let best = candidates.iter().map(|c| c.2).fold(0.0, f64::max);
    if best <= SPLIT_GAIN_TOL {
        return None;
    }
    candidates
        .into_iter()
        .find(|c| c.2 >= best - SPLIT_GAIN_TOL)
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut splits = 0;
    for case in 0..SPLIT_DATASETS {
        let n = rng.random_range(1..=SPLIT_MAX_SAMPLES);
        // coarse grids so that ties and duplicate values are common
        let samples: Vec<SlotSample> = (0..n)
            .map(|i| {
                SlotSample::new(
                    0,
                    i as u32,
                    22.8 + 0.1 * rng.random_range(0..5) as f64,
                    680.0 + 5.0 * rng.random_range(0..6) as f64,
                    0.4 + 0.25 * rng.random_range(0..6) as f64,
                    Some(Occupancy::from(rng.random_bool(0.5))),
                )
            })
            .collect();
        let features = FeatureSet::non_empty_subsets()
            .nth(rng.random_range(0..7))
            .unwrap();
        // half the cases use the unconstrained search
        let min_child = if case % 2 == 0 {
            1
        } else {
            rng.random_range(1..=4)
        };
        let got = best_split_min_child(&samples, features, min_child)
            .map(|s| (s.feature, s.threshold, s.gain));
        if min_child == 1 {
            let plain = best_split(&samples, features).map(|s| (s.feature, s.threshold, s.gain));
            if plain != got {
                return Err(format!("case {case}: best_split {plain:?} vs {got:?}"));
            }
        }
        let want = oracle_best_split(&samples, features, min_child);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                if g.0 != w.0 || g.1 != w.1 || (g.2 - w.2).abs() > SPLIT_GAIN_TOL {
                    return Err(format!("case {case}: got {g:?}, oracle {w:?}"));
                }
                splits += 1;
            }
            (g, w) => return Err(format!("case {case}: got {g:?}, oracle {w:?}")),
        }
    }
    Ok(format!(
        "{SPLIT_DATASETS} datasets agree ({splits} with a split)"
    ))
}

// ---------------------------------------------------------------- 3

const PUBLISHED_ROWS: [(f64, f64, f64, u8); 10] = [
    (23.18, 721.25, 1.459188744, 0),
    (23.15, 714.0, 1.456123701, 0),
    (23.15, 713.5, 1.473628013, 0),
    (23.15, 708.25, 1.635583564, 0),
    (23.1, 704.5, 0.46944317, 1),
    (23.0, 681.5, 0.451661291, 1),
    (22.945, 685.0, 0.460310371, 1),
    (22.945, 685.0, 0.520755814, 1),
    (22.89, 689.0, 0.462277467, 0),
    (22.89, 689.5, 0.456447871, 1),
];

fn published_samples() -> Vec<SlotSample> {
    PUBLISHED_ROWS
        .iter()
        .enumerate()
        .map(|(i, &(temp, co2, t, y))| {
            SlotSample::new(0, i as u32, temp, co2, t, Some(Occupancy::from(y == 1)))
        })
        .collect()
}

fn criterion_3() -> Check {
    let samples = published_samples();
    let tree =
        fit_samples(&samples, &LearnerConfig::default().with_k(1)).map_err(|e| e.to_string())?;
    for (s, row) in samples.iter().zip(&PUBLISHED_ROWS) {
        let x = FeatureVector::new(row.0, row.1, row.2);
        let p = id3::predict(&tree, &x).map_err(|e| e.to_string())?;
        if p.as_u8() != row.3 {
            return Err(format!("row {:?} predicted {}", row, p.as_u8()));
        }
        if Some(p) != s.label {
            return Err(format!("row {} mislabeled", s.slot_index));
        }
    }
    let root = match &tree.root {
        id3::TreeNode::Internal { feature, .. } => *feature,
        id3::TreeNode::Leaf { .. } => return Err("tree is a single leaf".into()),
    };
    let oracle_root = oracle_best_split(&samples, FeatureSet::ALL, 1).map(|s| s.0);
    if Some(root) != oracle_root || root != Feature::ReverberationTime {
        return Err(format!("root splits on {root}, oracle {oracle_root:?}"));
    }
    Ok(format!(
        "10/10 rows, depth {}, {} leaves, root on {root}",
        tree.depth(),
        tree.leaf_count()
    ))
}

// ---------------------------------------------------------------- 4

fn mean_cv_accuracy(noise: f64, features: FeatureSet, seeds: u64) -> Result<f64, String> {
    let plan = make_folds(7, CvMode::Standard).map_err(|e| e.to_string())?;
    let cfg = LearnerConfig::default().with_features(features);
    let mut total = 0.0;
    for seed in 0..seeds {
        let ds = generate_synthetic(&GeneratorParams::with_seed(seed).with_noise(noise), 7, 8)
            .map_err(|e| e.to_string())?;
        total += cross_validate(&ds, &cfg, &plan)
            .map_err(|e| e.to_string())?
            .mean_accuracy;
    }
    Ok(total / seeds as f64)
}

fn criterion_4() -> Check {
    let temp_rt = FeatureSet::only(Feature::Temperature).with(Feature::ReverberationTime);
    let a05 = mean_cv_accuracy(0.05, temp_rt, ACCURACY_SEEDS)?;
    let a02 = mean_cv_accuracy(0.02, temp_rt, ACCURACY_SEEDS)?;
    let detail = format!("temperature+reverberation over {ACCURACY_SEEDS} seeds: noise 0.05 → {a05:.3}%, noise 0.02 → {a02:.3}%");
    if a05 >= ACCURACY_MIN_NOISE_05 && a02 >= ACCURACY_MIN_NOISE_02 {
        Ok(detail)
    } else {
        Err(format!(
            "{detail} (need ≥ {ACCURACY_MIN_NOISE_05} and ≥ {ACCURACY_MIN_NOISE_02})"
        ))
    }
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    let plan = make_folds(7, CvMode::Standard).map_err(|e| e.to_string())?;
    let cfg = LearnerConfig::default();
    let mut sums: Vec<Scored> = Vec::new();
    for seed in 0..ABLATION_SEEDS {
        let ds = generate_synthetic(&GeneratorParams::with_seed(seed), 7, 8)
            .map_err(|e| e.to_string())?;
        let rows = ablation(&ds, &cfg, &plan).map_err(|e| e.to_string())?;
        if sums.is_empty() {
            sums = rows.iter().map(|r| (r.features, 0.0)).collect();
        }
        for (acc, r) in sums.iter_mut().zip(&rows) {
            acc.1 += r.mean_accuracy / ABLATION_SEEDS as f64;
        }
    }
    let (with, without): (Vec<&Scored>, Vec<&Scored>) = sums
        .iter()
        .partition(|(fs, _)| fs.contains(Feature::ReverberationTime));
    let worst_with = with.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let best_without = without.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let table = sums
        .iter()
        .map(|(fs, a)| format!("{{{fs}}} {a:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    if worst_with.1 > best_without.1 {
        Ok(format!(
            "worst with reverberation {{{}}} {:.3}% > best without {{{}}} {:.3}% [{table}]",
            worst_with.0, worst_with.1, best_without.0, best_without.1
        ))
    } else {
        Err(format!(
            "{{{}}} {:.3}% does not beat {{{}}} {:.3}% [{table}]",
            worst_with.0, worst_with.1, best_without.0, best_without.1
        ))
    }
}

// ---------------------------------------------------------------- 6

fn event_lines(events: &[occusense::detector::StatusEvent]) -> Vec<String> {
    events.iter().map(|e| e.to_json_line()).collect()
}

fn compare_replay(
    readings: &[occusense::dataset::SensorReading],
    room: &RoomModel,
    classifier: &Classifier,
) -> Result<usize, String> {
    let schedule = Schedule::default();
    let batch = batch_events(readings, &schedule, room, classifier).map_err(|e| e.to_string())?;
    let mut det =
        Detector::new(room.clone(), classifier.clone(), schedule).map_err(|e| e.to_string())?;
    let streamed = replay(&mut det, readings).map_err(|e| e.to_string())?;
    let (a, b) = (event_lines(&batch), event_lines(&streamed));
    if a != b {
        let i = a
            .iter()
            .zip(&b)
            .position(|(x, y)| x != y)
            .unwrap_or(a.len().min(b.len()));
        return Err(format!(
            "event {i} differs: batch {:?} vs stream {:?} ({} vs {} events)",
            a.get(i),
            b.get(i),
            a.len(),
            b.len()
        ));
    }
    Ok(a.len())
}

fn criterion_6() -> Check {
    let schedule = Schedule::default();
    let corpus = simulate_corpus(&GeneratorParams::with_seed(6), 7, 8, &schedule)
        .map_err(|e| e.to_string())?;
    if corpus.readings.len() != 1008 {
        return Err(format!("corpus has {} readings", corpus.readings.len()));
    }
    let tree = fit(&corpus.dataset, &LearnerConfig::default()).map_err(|e| e.to_string())?;
    let classifiers = [
        Classifier::Tree(tree),
        Classifier::Threshold(ThresholdRule::default()),
    ];
    let mut events = 0;
    for c in &classifiers {
        events += compare_replay(&corpus.readings, &corpus.room, c)?;
    }

    // Perturbed files: dropped readings (some slots lose a whole kind) and
    // extra readings after the window or between slots.
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..REPLAY_PERTURBED_FILES {
        let mut readings: Vec<_> = corpus
            .readings
            .iter()
            .filter(|_| rng.random_bool(0.8))
            .cloned()
            .collect();
        for _ in 0..40 {
            let src = &corpus.readings[rng.random_range(0..corpus.readings.len())];
            let mut r = src.clone();
            r.timestamp += chrono::TimeDelta::minutes(rng.random_range(5..60));
            readings.push(r);
        }
        readings.sort_by_key(|r| r.timestamp);
        for c in &classifiers {
            events += compare_replay(&readings, &corpus.room, c)?;
        }
    }
    Ok(format!(
        "1008-reading corpus + {REPLAY_PERTURBED_FILES} perturbed files, {events} events identical"
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    let corpus =
        generate_synthetic(&GeneratorParams::with_seed(7), 7, 8).map_err(|e| e.to_string())?;
    let tree = fit(&corpus, &LearnerConfig::default().with_k(2)).map_err(|e| e.to_string())?;
    let text = id3::serialize(&tree);
    let back = id3::deserialize(&text).map_err(|e| e.to_string())?;
    if back != tree {
        return Err("deserialized tree differs".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for q in 0..ROUND_TRIP_QUERIES {
        let x = FeatureVector::new(
            rng.random_range(22.5..23.5),
            rng.random_range(660.0..740.0),
            rng.random_range(0.2..2.0),
        );
        if tree.predict(&x) != back.predict(&x) {
            return Err(format!("query {q} {x:?} disagrees"));
        }
    }

    let exe = env!("CARGO_BIN_EXE_occusense");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(exe)
            .args(["simulate", "--seed", "42", "--out-dir"])
            .arg(d.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
    }
    let mut bytes = 0;
    for name in ["readings.csv", "labels.csv", "features.csv", "room.json"] {
        let a = fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(dirs[1].path().join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
        bytes += a.len();
    }
    Ok(format!(
        "{ROUND_TRIP_QUERIES} queries agree after round trip; simulate output identical ({bytes} bytes)"
    ))
}

// ---------------------------------------------------------------- 8

fn labels_strategy() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 1..40)
}

fn samples_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, bool)>> {
    prop::collection::vec(
        (22.0..24.0f64, 650.0..750.0f64, 0.2..2.0f64, any::<bool>()),
        1..30,
    )
}

fn to_samples(rows: &[(f64, f64, f64, bool)]) -> Vec<SlotSample> {
    rows.iter()
        .enumerate()
        .map(|(i, &(a, b, c, y))| {
            SlotSample::new((i % 7) as u32, (i / 7) as u32, a, b, c, Some(y.into()))
        })
        .collect()
}

fn criterion_8() -> Check {
    let cfg = PtConfig {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..PtConfig::default()
    };
    let run = |name: &str, f: &dyn Fn(&mut TestRunner) -> Result<(), String>| {
        let mut runner = TestRunner::new_with_rng(
            cfg.clone(),
            proptest::test_runner::TestRng::deterministic_rng(cfg.rng_algorithm),
        );
        f(&mut runner).map_err(|e| format!("{name}: {e}"))
    };

    run("entropy bounds", &|r| {
        r.run(&labels_strategy(), |labels| {
            let ls: Vec<Occupancy> = labels.iter().map(|&b| b.into()).collect();
            let h = entropy(&ls).unwrap();
            prop_assert!((0.0..=1.0).contains(&h), "H = {h}");
            Ok(())
        })
        .map_err(|e| e.to_string())
    })?;

    run("gain non-negative and bounded", &|r| {
        r.run(
            &(samples_strategy(), 0usize..3, 0.0..1.0f64),
            |(rows, fi, q)| {
                let samples = to_samples(&rows);
                let f = Feature::ALL[fi];
                let vals: Vec<f64> = samples.iter().map(|s| s.feature(f)).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let thr = lo + q * (hi - lo);
                let g = information_gain(&samples, f, thr).unwrap();
                let labels: Vec<Occupancy> = samples.iter().map(|s| s.label.unwrap()).collect();
                let h = entropy(&labels).unwrap();
                prop_assert!(g >= 0.0 && g <= h + 1e-12, "gain {g}, parent entropy {h}");
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
    })?;

    let surfaces_strategy = prop::collection::vec((0.1..1000.0f64, 0usize..3), 1..8);
    let alphas_strategy = prop::collection::vec(0.01..0.99f64, 3);

    run("mean absorption is a convex combination", &|r| {
        r.run(
            &(surfaces_strategy.clone(), alphas_strategy.clone()),
            |(surfs, alphas)| {
                let (surfaces, table) = surface_table(&surfs, &alphas);
                let a = mean_absorption(&surfaces, &table, 1000.0).unwrap().value;
                let used: Vec<f64> = surfs.iter().map(|&(_, m)| alphas[m]).collect();
                let lo = used.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = used.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(
                    lo - 1e-12 <= a && a <= hi + 1e-12,
                    "{a} not in [{lo}, {hi}]"
                );
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
    })?;

    run("mean absorption is area-scale invariant", &|r| {
        r.run(
            &(
                surfaces_strategy.clone(),
                alphas_strategy.clone(),
                0.01..100.0f64,
            ),
            |(surfs, alphas, k)| {
                let (surfaces, table) = surface_table(&surfs, &alphas);
                let scaled: Vec<(f64, usize)> = surfs.iter().map(|&(a, m)| (a * k, m)).collect();
                let (scaled, _) = surface_table(&scaled, &alphas);
                let a = mean_absorption(&surfaces, &table, 1000.0).unwrap().value;
                let b = mean_absorption(&scaled, &table, 1000.0).unwrap().value;
                prop_assert!(rel_err(b, a) < 1e-12, "{a} vs {b}");
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
    })?;

    run("folds partition days without leakage", &|r| {
        r.run(&(2u32..15, any::<bool>()), |(days, paper)| {
            let mode = if paper {
                CvMode::Paper
            } else {
                CvMode::Standard
            };
            let plan = make_folds(days, mode).unwrap();
            prop_assert!(plan.check().is_ok());
            prop_assert_eq!(plan.folds.len() as u32, days);
            let mut tested = BTreeSet::new();
            for f in &plan.folds {
                prop_assert!(f.train_days.is_disjoint(&f.test_days));
                prop_assert_eq!(f.train_days.len() + f.test_days.len(), days as usize);
                tested.extend(f.test_days.iter().copied());
            }
            prop_assert_eq!(tested.len() as u32, days);
            Ok(())
        })
        .map_err(|e| e.to_string())
    })?;

    run("confusion matrix conserves samples", &|r| {
        r.run(
            &(1u64..1000, 0.0..0.5f64, any::<bool>()),
            |(seed, noise, paper)| {
                let ds: Dataset =
                    generate_synthetic(&GeneratorParams::with_seed(seed).with_noise(noise), 4, 3)
                        .unwrap();
                let mode = if paper {
                    CvMode::Paper
                } else {
                    CvMode::Standard
                };
                let plan = make_folds(4, mode).unwrap();
                let rep = cross_validate(&ds, &LearnerConfig::default().with_k(2), &plan).unwrap();
                let mut all = ConfusionMatrix::default();
                for f in &rep.folds {
                    let c = f.confusion;
                    let test_n = ds
                        .samples()
                        .iter()
                        .filter(|s| f.test_days.contains(&s.day_index))
                        .count();
                    prop_assert_eq!(c.true_pos + c.true_neg + c.false_pos + c.false_neg, test_n);
                    all.true_pos += c.true_pos;
                    all.true_neg += c.true_neg;
                    all.false_pos += c.false_pos;
                    all.false_neg += c.false_neg;
                }
                let per_sample = if paper { 3 } else { 1 };
                prop_assert_eq!(all.total(), ds.len() * per_sample);
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
    })?;

    Ok(format!("6 properties × {PROPERTY_CASES} cases"))
}

fn surface_table(surfs: &[(f64, usize)], alphas: &[f64]) -> (Vec<Surface>, AbsorptionTable) {
    let mut table = AbsorptionTable::new();
    for (m, &a) in alphas.iter().enumerate() {
        table.insert(format!("m{m}"), vec![(1000.0, a)]).unwrap();
    }
    let surfaces = surfs
        .iter()
        .enumerate()
        .map(|(i, &(area, m))| Surface::new(format!("s{i}"), area, format!("m{m}")).unwrap())
        .collect();
    (surfaces, table)
}

fn main() -> ExitCode {
    let checks: [(&str, Criterion); 8] = [
        ("acoustics exactness", criterion_1),
        ("split search matches brute force", criterion_2),
        ("published rows fitted exactly", criterion_3),
        ("synthetic accuracy band", criterion_4),
        ("ablation ordering", criterion_5),
        ("replay equivalence", criterion_6),
        ("round trip and determinism", criterion_7),
        ("invariant properties", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let budget = BUDGETS[i];
        let result = match result {
            Ok(d) if elapsed > budget => Err(format!("{d}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {}: PASS {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({elapsed:.2?}): {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
