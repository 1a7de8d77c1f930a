//! End-to-end acceptance criteria. Each test prints one `criterion N: PASS|FAIL`
//! line to stderr, bypassing output capture, and then asserts.
//!
//! Toy training runs use `f32` and the desk preset.

mod common;

use std::io::Write as _;
use std::time::{Duration, Instant};

use p2pnet::cli;
use p2pnet::datasynth::{generate, GeneratorKind, GeneratorSpec, Normalization, BAR_SPACING};
use p2pnet::gradsuite::run_suite;
use p2pnet::io::{decode_checkpoint, encode_checkpoint, read_ply, read_xyz, write_ply, write_xyz};
use p2pnet::layers::{apply_displacements, Branch, CentroidSeed, DisplacementField, NetworkConfig};
use p2pnet::losses::{cross_reg_loss, density_loss, shape_loss};
use p2pnet::metrics::{
    curvature_difference, normal_difference, separation_rate, PATCH_FRACTION, SEPARATION_THRESHOLD,
};
use p2pnet::spatial::PointSet;
use p2pnet::trainer::{infer_multipass, train, Checkpoint, PairedDataset, TrainConfig};
use p2pnet::{Error, PointSet32, PointSet64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, detail: &str, elapsed: Duration) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n}: {verdict} {name} [{detail}] ({:.1}s)",
        elapsed.as_secs_f64()
    );
}

struct ToyRun {
    ck: Checkpoint<f32>,
    totals: Vec<f64>,
    elapsed: Duration,
}

impl ToyRun {
    /// Median of the last ten epoch totals below the median of the first ten.
    fn loss_went_down(&self) -> bool {
        let median = |xs: &[f64]| {
            let mut v = xs.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let k = self.totals.len().min(10);
        median(&self.totals[self.totals.len() - k..]) < median(&self.totals[..k])
    }
}

fn toy_run(spec: &GeneratorSpec, ablation: &str, epochs: usize, seed: u64) -> ToyRun {
    let data: PairedDataset<f32> = generate(spec).unwrap().cast();
    let net = NetworkConfig::desk(2);
    let cfg = TrainConfig {
        epochs,
        seed,
        ablation: ablation.parse().unwrap(),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let mut totals = Vec::new();
    let ck = train(&data, &net, &net, &cfg, &mut |r| totals.push(r.losses.total as f64)).unwrap();
    let elapsed = start.elapsed();
    let _ = writeln!(
        std::io::stderr(),
        "    run {:?} {ablation} seed={seed}: total {:.3} -> {:.3} in {:.0}s",
        spec.kind,
        totals[0],
        totals[totals.len() - 1],
        elapsed.as_secs_f64()
    );
    ToyRun { ck, totals, elapsed }
}

/// Held-out pairs in canonical pose, so outputs can be compared with the
/// analytic target after undoing the normalization.
fn canonical_test_set(spec: &GeneratorSpec, count: usize) -> PairedDataset<f64> {
    generate(&GeneratorSpec {
        count,
        seed: spec.seed + 10_000,
        rotate: false,
        scale_min: 1.0,
        scale_max: 1.0,
        ..spec.clone()
    })
    .unwrap()
}

fn predict(branch: &Branch<f32>, x: &PointSet64, seed: u64) -> PointSet64 {
    let x32: PointSet32 = x.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = branch.predict(&x32, CentroidSeed::Index(0), &mut rng).unwrap();
    apply_displacements(&x32, &d).unwrap().cast()
}

fn canonical(p: &[f64], norm: &Normalization) -> [f64; 2] {
    [p[0] * norm.diagonal + norm.center[0], p[1] * norm.diagonal + norm.center[1]]
}

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let suite = run_suite(20, 16, 2024).unwrap();
    let elapsed = start.elapsed();
    let worst = suite.targets.iter().map(|t| t.max_error).fold(0.0, f64::max);
    let pass = suite.passed() && elapsed < Duration::from_secs(60);
    let detail = suite
        .targets
        .iter()
        .map(|t| format!("{}: {}/{} max {:.1e}", t.target, t.checked, t.checked + t.skipped, t.max_error))
        .collect::<Vec<_>>()
        .join(", ");
    report(1, "analytic vs central-difference gradients", pass, &format!("{detail}; worst {worst:.1e} < 1e-4"), elapsed);
    assert!(pass, "{suite}");
}

#[test]
fn criterion_2_oracle_suite() {
    let start = Instant::now();
    let res = common::oracle_suite(100, 99);
    let elapsed = start.elapsed();
    let pass = res.is_ok() && elapsed < Duration::from_secs(60);
    let detail = res.clone().err().unwrap_or_else(|| "100 sets, exact equality".into());
    report(2, "index, FPS, density and losses equal brute force", pass, &detail, elapsed);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_3_fixed_points() {
    let start = Instant::now();
    let mut r = common::rng(3);
    let mut failures = Vec::new();
    for case in 0..20 {
        let dim = 2 + case % 2;
        let a = common::random_set(&mut r, 64, dim, case % 4 == 0);
        if shape_loss(&a, &a).unwrap() != 0.0 {
            failures.push(format!("shape {case}"));
        }
        if density_loss(&a, &a, 8).unwrap() != 0.0 {
            failures.push(format!("density {case}"));
        }
        // dyadic coordinates keep x + d - d exact
        let grid = |v: f64| (v * 64.0).round() / 64.0;
        let x = PointSet::new(dim, a.coords().iter().map(|&v| grid(v)).collect()).unwrap();
        let d: Vec<f64> = (0..x.coords().len()).map(|_| grid(r.gen_range(-0.3..0.3))).collect();
        let y = PointSet::new(dim, x.coords().iter().zip(&d).map(|(p, q)| p + q).collect()).unwrap();
        let ix = DisplacementField::new(dim, d.clone()).unwrap();
        if cross_reg_loss(&x, &ix, &y, &ix.negated()).unwrap() != 0.0 {
            failures.push(format!("cross_reg {case}"));
        }
        let (an, _, _) = p2pnet::datasynth::normalize_pair(&a, &a).unwrap();
        if separation_rate(&an, &an, SEPARATION_THRESHOLD).unwrap() != 0.0 {
            failures.push(format!("separation {case}"));
        }
        if curvature_difference(&an, &an, PATCH_FRACTION).unwrap() != 0.0 {
            failures.push(format!("curvature {case}"));
        }
        if dim == 3 && normal_difference(&an, &an, PATCH_FRACTION).unwrap() != 0.0 {
            failures.push(format!("normal {case}"));
        }
    }
    let pass = failures.is_empty();
    let detail = if pass { "20 sets, all exactly 0".to_string() } else { failures.join(", ") };
    report(3, "losses and metrics vanish at their fixed points", pass, &detail, start.elapsed());
    assert!(pass, "{detail}");
}

fn line_disk_scores(run: &ToyRun, test: &PairedDataset<f64>, aspect: f64) -> (f64, f64) {
    let boundary: Vec<[f64; 2]> = (0..4096)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / 4096.0;
            [t.cos(), aspect * t.sin()]
        })
        .collect();
    let (mut over, mut total, mut sep) = (0usize, 0usize, 0.0);
    for (i, p) in test.pairs.iter().enumerate() {
        let out = predict(&run.ck.xy, &p.x, i as u64);
        for q in out.iter() {
            let [x, y] = canonical(q, &p.norm);
            if x * x + (y / aspect).powi(2) <= 1.0 {
                continue;
            }
            let gap = boundary
                .iter()
                .map(|b| (x - b[0]).hypot(y - b[1]))
                .fold(f64::INFINITY, f64::min);
            if gap > 0.02 * p.norm.diagonal {
                over += 1;
            }
        }
        total += out.len();
        sep += separation_rate(&out, &p.y, SEPARATION_THRESHOLD).unwrap();
    }
    (over as f64 / total as f64, sep / test.len() as f64)
}

#[test]
fn criterion_4_line_to_disk_noise_helps() {
    let spec = GeneratorSpec {
        kind: GeneratorKind::LineDisk,
        count: 200,
        points_per_set: 256,
        seed: 40,
        ..GeneratorSpec::default()
    };
    let test = canonical_test_set(&spec, 10);
    let without = toy_run(&spec, "ns-rg-", 60, 4);
    let with = toy_run(&spec, "ns+rg-", 60, 4);
    let (over_off, sep_off) = line_disk_scores(&without, &test, spec.disk_aspect);
    let (over_on, sep_on) = line_disk_scores(&with, &test, spec.disk_aspect);
    let budget = Duration::from_secs(600);
    let pass = over_on < over_off
        && sep_on < sep_off
        && without.elapsed <= budget
        && with.elapsed <= budget;
    let detail = format!(
        "overshoot ns+ {over_on:.4} vs ns- {over_off:.4}; separation ns+ {sep_on:.4} vs ns- {sep_off:.4}; \
         loss down {}/{}",
        without.loss_went_down(),
        with.loss_went_down()
    );
    report(4, "line to disk: noise lowers overshoot and separation", pass, &detail, without.elapsed + with.elapsed);
    assert!(pass, "{detail}");
    assert!(without.loss_went_down() && with.loss_went_down());
}

/// Share of output points within 2% of the diagonal from the middle bar.
fn middle_bar_share(run: &ToyRun, test: &PairedDataset<f64>, half_height: f64) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for (i, p) in test.pairs.iter().enumerate() {
        let out = predict(&run.ck.xy, &p.x, i as u64);
        for q in out.iter() {
            let [x, y] = canonical(q, &p.norm);
            let dy = (y.abs() - half_height).max(0.0);
            if x.hypot(dy) <= 0.02 * p.norm.diagonal {
                hit += 1;
            }
        }
        total += out.len();
    }
    hit as f64 / total as f64
}

#[test]
fn criterion_5_line_to_bars_protrusion_disambiguates() {
    let base = GeneratorSpec {
        kind: GeneratorKind::LineBars,
        count: 200,
        points_per_set: 256,
        seed: 50,
        ..GeneratorSpec::default()
    };
    let bumped = GeneratorSpec {
        protrusion: true,
        ..base.clone()
    };
    let plain_run = toy_run(&base, "ns+rg+", 60, 5);
    let bump_run = toy_run(&bumped, "ns+rg+", 60, 5);
    let plain = middle_bar_share(&plain_run, &canonical_test_set(&base, 10), base.bar_height);
    let bump = middle_bar_share(&bump_run, &canonical_test_set(&bumped, 10), base.bar_height);
    let uniform = 1.0 / 3.0;
    let budget = Duration::from_secs(600);
    let pass = plain < 0.5 * uniform
        && bump >= 2.0 * plain
        && plain_run.elapsed <= budget
        && bump_run.elapsed <= budget;
    let detail = format!(
        "middle bar share {plain:.4} without (< {:.4}), {bump:.4} with bump (>= {:.4}); bar spacing {BAR_SPACING:.3}",
        0.5 * uniform,
        2.0 * plain
    );
    report(5, "line to bars: protrusion fills the middle bar", pass, &detail, plain_run.elapsed + bump_run.elapsed);
    assert!(pass, "{detail}");
    assert!(plain_run.loss_went_down() && bump_run.loss_went_down());
}

fn mean_curvature_difference(run: &ToyRun, test: &PairedDataset<f64>) -> f64 {
    let mut sum = 0.0;
    for (i, p) in test.pairs.iter().enumerate() {
        let yhat = predict(&run.ck.xy, &p.x, i as u64);
        let xhat = predict(&run.ck.yx, &p.y, i as u64);
        sum += curvature_difference(&yhat, &p.y, PATCH_FRACTION).unwrap();
        sum += curvature_difference(&xhat, &p.x, PATCH_FRACTION).unwrap();
    }
    sum / (2 * test.len()) as f64
}

#[test]
fn criterion_6_ablation_direction_on_cat_dog() {
    let mut votes = 0;
    let mut parts = Vec::new();
    let mut elapsed = Duration::ZERO;
    for seed in 0..3u64 {
        let spec = GeneratorSpec {
            kind: GeneratorKind::CatDog,
            count: 100,
            points_per_set: 256,
            seed: 60 + seed,
            ..GeneratorSpec::default()
        };
        let test = generate(&GeneratorSpec {
            count: 10,
            seed: spec.seed + 10_000,
            ..spec.clone()
        })
        .unwrap();
        let full = toy_run(&spec, "ns+rg+", 40, seed);
        let bare = toy_run(&spec, "ns-rg-", 40, seed);
        elapsed += full.elapsed + bare.elapsed;
        let (cf, cb) = (mean_curvature_difference(&full, &test), mean_curvature_difference(&bare, &test));
        if cf <= cb {
            votes += 1;
        }
        parts.push(format!("seed {seed}: ns+rg+ {cf:.4} vs ns-rg- {cb:.4}"));
    }
    let pass = votes >= 2;
    let detail = format!("{votes}/3 seeds favor ns+rg+; {}", parts.join("; "));
    report(6, "cat/dog curvature difference: ns+rg+ <= ns-rg-", pass, &detail, elapsed);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_7_multipass_cardinality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = NetworkConfig::full(3);
    let branch = Branch::<f32>::init(net, &mut rng).unwrap();
    let x: PointSet32 = common::random_set(&mut rng, 2048, 3, false).cast();
    let out = infer_multipass(&x, &branch, 8, &mut rng).unwrap();
    let n = x.len();
    let passes: Vec<&[f32]> = (0..8).map(|p| &out.coords()[p * n * 3..(p + 1) * n * 3]).collect();
    let distinct = passes.windows(2).all(|w| w[0] != w[1]);
    let pass = out.len() == 16_384 && distinct;
    let detail = format!("{} points from 8 passes, consecutive passes differ: {distinct}", out.len());
    report(7, "eight noisy passes give 16,384 distinct points", pass, &detail, start.elapsed());
    assert!(pass, "{detail}");
}

#[test]
fn criterion_8_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.cfg");
    std::fs::write(
        &cfg,
        "[network]\npreset = \"tiny\"\n[train]\nepochs = 3\nbatch_size = 3\nseed = 8\n\
         [generator]\nkind = \"cat_dog\"\ncount = 6\npoints_per_set = 96\nseed = 8\n",
    )
    .unwrap();
    let path = |p: &str| d.join(p).to_str().unwrap().to_string();
    let run = |args: &[String]| {
        let mut out = Vec::new();
        let code = cli::run(std::iter::once("p2pnet".to_string()).chain(args.iter().cloned()), &mut out);
        assert_eq!(code, 0);
        String::from_utf8(out).unwrap()
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    run(&s(&["synth", "--config", &path("run.cfg"), "--out", &path("data")]));
    let mut logs = Vec::new();
    for ck in ["a.p2p", "b.p2p"] {
        logs.push(run(&s(&[
            "train", "--config", &path("run.cfg"), "--data", &path("data"), "--out", &path(ck),
        ])));
    }
    let (a, b) = (std::fs::read(path("a.p2p")).unwrap(), std::fs::read(path("b.p2p")).unwrap());
    let pass = logs[0] == logs[1] && a == b && logs[0].lines().count() == 3;
    let detail = format!(
        "{} log lines identical: {}, {}-byte checkpoints identical: {}",
        logs[0].lines().count(),
        logs[0] == logs[1],
        a.len(),
        a == b
    );
    report(8, "same seed, same log and checkpoint bytes", pass, &detail, start.elapsed());
    assert!(pass, "{detail}");
}

#[test]
fn criterion_9_io_roundtrips() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut problems = Vec::new();

    let pts: PointSet32 = common::random_set(&mut rng, 200, 3, false).cast();
    let ply = dir.path().join("p.ply");
    write_ply(&ply, &pts).unwrap();
    let bits = |p: &PointSet32| p.coords().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    if bits(&read_ply(&ply).unwrap()) != bits(&pts) {
        problems.push("ply");
    }
    let xyz = dir.path().join("p.xyz");
    write_xyz(&xyz, &pts).unwrap();
    if bits(&read_xyz(&xyz).unwrap().cast()) != bits(&pts) {
        problems.push("xyz");
    }

    let cfg = NetworkConfig::desk(2);
    let ck = Checkpoint::<f32> {
        xy: Branch::init(cfg.clone(), &mut rng).unwrap(),
        yx: Branch::init(cfg, &mut rng).unwrap(),
        optimizer: None,
        seed: 9,
        epoch: 1,
    };
    let bytes = encode_checkpoint(&ck).unwrap();
    let back: Checkpoint<f32> = decode_checkpoint(&bytes).unwrap();
    if back.xy.params != ck.xy.params || back.yx.params != ck.yx.params {
        problems.push("checkpoint params");
    }
    let mut undetected = 0;
    for _ in 0..64 {
        let mut bad = bytes.clone();
        let at = rng.gen_range(0..bad.len());
        bad[at] ^= 1 << rng.gen_range(0..8);
        if !matches!(
            decode_checkpoint::<f32>(&bad),
            Err(Error::Checksum { .. } | Error::Contract(_))
        ) {
            undetected += 1;
        }
    }
    if undetected > 0 {
        problems.push("corruption");
    }
    let pass = problems.is_empty();
    let detail = format!(
        "ply/xyz/checkpoint bit-exact, {} of 64 single-bit flips caught{}",
        64 - undetected,
        if pass { String::new() } else { format!("; failed: {problems:?}") }
    );
    report(9, "point set and checkpoint roundtrips", pass, &detail, start.elapsed());
    assert!(pass, "{detail}");
}
