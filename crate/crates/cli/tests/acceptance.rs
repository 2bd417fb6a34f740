//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use segclust::bench::{
    parameter_sweep, run_comparison, Algorithm, BenchOptions, SuiteItem, Sweep, SweepParam,
};
use segclust::fcm::{
    fcm_centroids, fcm_memberships, fcm_run, fcm_run_observed, FcmConfig, FcmInit, MembershipMatrix,
};
use segclust::hybrid::{hybrid_run, hybrid_run_observed, spatial_regularize, HybridConfig};
use segclust::image::{BinaryMask, GrayImage, LabelMap};
use segclust::io::{read_image, write_image};
use segclust::kmeans::{kmeans_run, kmeans_update, KMeansConfig};
use segclust::metrics::dice;
use segclust::model::ModelConfig;
use segclust::phantom::{phantom_suite, phantom_suite_sized, Difficulty};

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn trade_off() -> Outcome {
    let start = Instant::now();
    let suite = SuiteItem::from_phantoms(phantom_suite(20, Difficulty::Blurred, 3).unwrap());
    let configs = [
        ModelConfig::KMeans(KMeansConfig::default()),
        ModelConfig::Fcm(FcmConfig::default()),
    ];
    let options = BenchOptions {
        serial: true,
        ..BenchOptions::default()
    };
    let c = run_comparison(&suite, &configs, &options).unwrap();
    let gap = c.mean_dice(Algorithm::Fcm).unwrap() - c.mean_dice(Algorithm::KMeans).unwrap();
    let ratio = c.speed_ratio.unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        gap >= 0.05 && ratio >= 2.0 && c.failures.is_empty(),
        format!("dice gap {gap:.4} (>= 0.05), time ratio {ratio:.2} (>= 2.0), {secs:.1} s"),
    )
}

/// Smallest within-cluster sum of squares over every split into two nonempty groups.
fn best_two_partition(values: &[f64]) -> f64 {
    let n = values.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << (n - 1)) {
        let mut groups = [Vec::new(), Vec::new()];
        for (i, &v) in values.iter().enumerate() {
            groups[(mask >> i & 1) as usize].push(v);
        }
        let sse: f64 = groups
            .iter()
            .map(|g| {
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                g.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            })
            .sum();
        best = best.min(sse);
    }
    best
}

fn kmeans_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut hits = 0;
    for trial in 0..50 {
        let n = rng.random_range(2..=10);
        let img = random_image(&mut rng, n, 1);
        let config = KMeansConfig {
            k: 2,
            restarts: 20,
            seed: trial,
            ..KMeansConfig::default()
        };
        let (model, _) = kmeans_run(&img, &config).unwrap();
        if (model.objective - best_two_partition(img.pixels())).abs() <= 1e-6 {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        hits >= 45 && secs < 5.0,
        format!("{hits}/50 optimal (>= 45), {secs:.2} s (< 5 s)"),
    )
}

fn non_increasing(trace: &[f64]) -> usize {
    trace
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-12 * w[0].abs().max(1.0))
        .count()
}

fn bad_rows(u: &MembershipMatrix) -> usize {
    (0..u.rows())
        .filter(|&i| {
            let row = u.row(i);
            (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
                || row.iter().any(|&x| !(0.0..=1.0).contains(&x))
        })
        .count()
}

/// 100 seeded runs: small phantoms of every difficulty and plain random images.
fn seeded_inputs() -> Vec<(GrayImage, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let difficulties = [
        Difficulty::Sharp,
        Difficulty::Blurred,
        Difficulty::NoisyBlurred,
    ];
    (0..100u64)
        .map(|i| {
            let img = if i % 4 == 3 {
                random_image(&mut rng, 20, 20)
            } else {
                let d = difficulties[i as usize % 3];
                phantom_suite_sized(1, d, 100 + i, 32, 32)
                    .unwrap()
                    .remove(0)
                    .image
            };
            (img, i)
        })
        .collect()
}

fn monotonicity(inputs: &[(GrayImage, u64)]) -> Outcome {
    let start = Instant::now();
    let mut kmeans_bad = 0;
    let mut fcm_bad = 0;
    for (img, seed) in inputs {
        let (km, _) = kmeans_run(
            img,
            &KMeansConfig {
                seed: *seed,
                ..KMeansConfig::default()
            },
        )
        .unwrap();
        kmeans_bad += non_increasing(&km.objective_trace);
        let (fcm, _) = fcm_run(
            img,
            &FcmConfig {
                seed: *seed,
                ..FcmConfig::default()
            },
        )
        .unwrap();
        fcm_bad += non_increasing(&fcm.objective_trace);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        kmeans_bad == 0 && fcm_bad == 0 && secs < 30.0,
        format!("violations: kmeans {kmeans_bad}, fcm {fcm_bad}; {secs:.1} s (< 30 s)"),
    )
}

fn membership_validity(inputs: &[(GrayImage, u64)]) -> Outcome {
    let mut checked = 0usize;
    let mut bad = 0usize;
    for (img, seed) in inputs {
        let mut observe = |s: &segclust::fcm::IterationState<'_>| {
            checked += 1;
            bad += bad_rows(s.memberships);
        };
        fcm_run_observed(
            img,
            &FcmConfig {
                seed: *seed,
                ..FcmConfig::default()
            },
            &mut observe,
        )
        .unwrap();
        let mut hybrid = HybridConfig::default();
        hybrid.kmeans.seed = *seed;
        hybrid.fcm.seed = *seed;
        hybrid_run_observed(img, &hybrid, &mut observe).unwrap();
    }
    outcome(
        bad == 0 && checked > 0,
        format!("{checked} iterations observed, {bad} invalid rows"),
    )
}

fn membership_spot_checks() -> Outcome {
    let img = GrayImage::new(1, 1, vec![0.0]).unwrap();
    let u = fcm_memberships(&img, &[0.1, 0.3], 2.0).unwrap();
    let hand = (u.get(0, 0) - 0.9).abs().max((u.get(0, 1) - 0.1).abs());
    let img = GrayImage::new(1, 1, vec![0.5]).unwrap();
    let u = fcm_memberships(&img, &[0.2, 0.8], 2.0).unwrap();
    let even = (u.get(0, 0) - 0.5).abs().max((u.get(0, 1) - 0.5).abs());
    outcome(
        hand <= 1e-12 && even <= 1e-12,
        format!("(0.9, 0.1) error {hand:.1e}, (0.5, 0.5) error {even:.1e}"),
    )
}

fn crisp_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut equal = 0;
    for _ in 0..20 {
        let (w, h) = (rng.random_range(2..12), rng.random_range(2..12));
        let k = rng.random_range(1..=4usize).min(w * h);
        let img = random_image(&mut rng, w, h);
        // the first k pixels cover every cluster so none is empty
        let labels: Vec<usize> = (0..w * h)
            .map(|i| if i < k { i } else { rng.random_range(0..k) })
            .collect();
        let labels = LabelMap::new(w, h, k, labels).unwrap();
        let previous: Vec<f64> = (0..k).map(|_| rng.random()).collect();
        let hard = kmeans_update(&img, &labels, &previous).unwrap();
        let fuzzy = fcm_centroids(&img, &MembershipMatrix::crisp(&labels), 2.0).unwrap();
        if hard
            .iter()
            .zip(&fuzzy)
            .all(|(a, b)| a.to_bits() == b.to_bits())
        {
            equal += 1;
        }
    }
    outcome(equal == 20, format!("{equal}/20 bit-identical"))
}

fn mask(bits: &[u8]) -> BinaryMask {
    BinaryMask::new(bits.len(), 1, bits.iter().map(|&b| b == 1).collect()).unwrap()
}

fn dice_correctness() -> Outcome {
    let a = mask(&[1, 1, 0, 0, 1, 0]);
    let identity = dice(&a, &a).unwrap();
    let disjoint = dice(&mask(&[1, 1, 0, 0]), &mask(&[0, 0, 1, 1])).unwrap();
    // |S| = 4, |G| = 6, overlap 3
    let s = mask(&[1, 1, 1, 1, 0, 0, 0, 0, 0]);
    let g = mask(&[0, 1, 1, 1, 1, 1, 1, 0, 0]);
    let arithmetic = dice(&s, &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut asymmetric = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..64);
        let x = BinaryMask::new(n, 1, (0..n).map(|_| rng.random_bool(0.4)).collect()).unwrap();
        let y = BinaryMask::new(n, 1, (0..n).map(|_| rng.random_bool(0.4)).collect()).unwrap();
        if dice(&x, &y).unwrap().to_bits() != dice(&y, &x).unwrap().to_bits() {
            asymmetric += 1;
        }
    }
    let ok = (identity - 1.0).abs() <= 1e-12
        && disjoint.abs() <= 1e-12
        && (arithmetic - 0.6).abs() <= 1e-12
        && asymmetric == 0;
    outcome(
        ok,
        format!("identity {identity}, disjoint {disjoint}, case {arithmetic}, asymmetric pairs {asymmetric}/100"),
    )
}

fn sweep_sanity() -> Outcome {
    let suite = SuiteItem::from_phantoms(phantom_suite(20, Difficulty::Sharp, 29).unwrap());
    let sweep = Sweep::range(SweepParam::K, 2.0, 6.0, 1.0).unwrap();
    let points = parameter_sweep(
        &suite,
        &[ModelConfig::KMeans(KMeansConfig::default())],
        &sweep,
        &BenchOptions::default(),
    )
    .unwrap();
    let by_k: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.value, p.comparison.mean_dice(Algorithm::KMeans).unwrap()))
        .collect();
    let best = by_k.iter().copied().fold(
        (0.0, f64::NEG_INFINITY),
        |a, b| if b.1 > a.1 { b } else { a },
    );

    let phantom = &suite[..1];
    let crispness = |m: f64| {
        let config = ModelConfig::Fcm(FcmConfig {
            m,
            ..FcmConfig::default()
        });
        run_comparison(phantom, &[config], &BenchOptions::default())
            .unwrap()
            .summary(Algorithm::Fcm)
            .unwrap()
            .mean_max_membership
            .unwrap()
    };
    let (low, high) = (crispness(1.5), crispness(4.0));
    let listing: Vec<String> = by_k.iter().map(|(k, d)| format!("k={k}:{d:.4}")).collect();
    outcome(
        best.0 == 3.0 && low > high,
        format!(
            "kmeans dice {}; argmax k={}; max membership m=1.5 {low:.4} vs m=4.0 {high:.4}",
            listing.join(" "),
            best.0
        ),
    )
}

fn hybrid_reduction() -> Outcome {
    let mut identical = 0;
    for (i, p) in phantom_suite_sized(10, Difficulty::Blurred, 31, 48, 48)
        .unwrap()
        .iter()
        .enumerate()
    {
        let seed = i as u64;
        let mut hybrid = HybridConfig {
            alpha: 0.0,
            ..HybridConfig::default()
        };
        hybrid.kmeans.seed = seed;
        hybrid.fcm.seed = seed;
        let (hm, hu, _) = hybrid_run(&p.image, &hybrid).unwrap();
        let fcm = FcmConfig {
            seed,
            init: FcmInit::CentroidsFromKmeans,
            ..FcmConfig::default()
        };
        let (fm, fu) = fcm_run(&p.image, &fcm).unwrap();
        let same_centroids = hm
            .centroids
            .iter()
            .zip(&fm.centroids)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        let same_u = hu
            .values()
            .iter()
            .zip(fu.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if same_centroids && same_u && hm.iterations == fm.iterations {
            identical += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut preserved = 0;
    for _ in 0..100 {
        let (w, h, c) = (
            rng.random_range(1..10),
            rng.random_range(1..10),
            rng.random_range(1..6),
        );
        let mut values = Vec::with_capacity(w * h * c);
        for _ in 0..w * h {
            let row: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-3).collect();
            let sum: f64 = row.iter().sum();
            values.extend(row.iter().map(|v| v / sum));
        }
        let u = MembershipMatrix::new(w * h, c, values).unwrap();
        let alpha = rng.random();
        let window = rng.random_range(1..4);
        let r = spatial_regularize(&u, w, h, alpha, window).unwrap();
        if bad_rows(&r) == 0 {
            preserved += 1;
        }
    }
    outcome(
        identical == 10 && preserved == 100,
        format!("alpha=0 identical {identical}/10, row-stochastic {preserved}/100"),
    )
}

/// Drops every object key that names a wall-clock measurement.
fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !k.contains("wall_time") && k != "speed_ratio");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn csv_without_timing(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !header[i].contains("wall_time"))
        .collect();
    text.lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn report_fingerprint(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for name in ["records.csv", "summary.csv"] {
        out.insert(
            name.to_string(),
            csv_without_timing(&dir.join(name)).into_bytes(),
        );
    }
    for name in ["records.json", "comparison.json"] {
        let mut v: Value = serde_json::from_slice(&fs::read(dir.join(name)).unwrap()).unwrap();
        strip_timing(&mut v);
        out.insert(name.to_string(), serde_json::to_vec(&v).unwrap());
    }
    for entry in fs::read_dir(dir.join("labels")).unwrap() {
        let path = entry.unwrap().path();
        out.insert(
            format!("labels/{}", path.file_name().unwrap().to_string_lossy()),
            fs::read(&path).unwrap(),
        );
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_segclust"))
            .args([
                "benchmark",
                "--generate",
                "4",
                "--difficulty",
                "noisy-blurred",
            ])
            .args([
                "--algos",
                "kmeans,fcm,hybrid",
                "--seed",
                "5",
                "--serial",
                "--out-dir",
            ])
            .arg(&dir)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        report_fingerprint(&dir)
    };
    let (a, b) = (run("a"), run("b"));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    outcome(
        a.len() == b.len() && differing.is_empty() && a.len() > 4,
        format!("{} artifacts compared, differing: {differing:?}", a.len()),
    )
}

fn io_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut worst: f64 = 0.0;
    for (i, p) in phantom_suite(3, Difficulty::NoisyBlurred, 41)
        .unwrap()
        .iter()
        .enumerate()
    {
        for ext in ["pgm", "png"] {
            let path = tmp.path().join(format!("p{i}.{ext}"));
            write_image(&p.image, &path).unwrap();
            let back = read_image(&path).unwrap();
            let err = p
                .image
                .pixels()
                .iter()
                .zip(back.pixels())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    outcome(
        worst <= 1.0 / 255.0,
        format!("max error {worst:.6} (<= {:.6})", 1.0 / 255.0),
    )
}

fn main() {
    let inputs = seeded_inputs();
    let criteria: Vec<Criterion<'_>> = vec![
        ("trade-off direction on blurred suite", Box::new(trade_off)),
        (
            "k-means matches exhaustive 2-partition optimum",
            Box::new(kmeans_oracle),
        ),
        ("objective monotonicity", Box::new(|| monotonicity(&inputs))),
        (
            "membership validity every iteration",
            Box::new(|| membership_validity(&inputs)),
        ),
        ("membership spot checks", Box::new(membership_spot_checks)),
        ("crisp-limit consistency", Box::new(crisp_limit)),
        ("dice correctness", Box::new(dice_correctness)),
        ("sweep sanity", Box::new(sweep_sanity)),
        ("hybrid reduction", Box::new(hybrid_reduction)),
        ("benchmark determinism", Box::new(determinism)),
        ("i/o round trip", Box::new(io_round_trip)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let result = check();
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
