//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvsg::assign::match_tubes;
use pvsg::hungarian::{assignment_cost, hungarian};
use pvsg::metrics::{evaluate, match_triplets, volume_iou, volume_overlap, EvalConfig, GroundedTriplet, VolumeOverlap};
use pvsg::model::{canonicalize_relations, MaskTube, RelationTriplet, SceneGraph, VideoMeta, Vocabulary};
use pvsg::rle::{decode, encode, mask_iou, BinaryMask};
use pvsg::span::TimeSpan;
use pvsg::synth::{generate, perturb, random_script, CorruptionLedger, Motion, NoiseConfig, ScriptParams};
use pvsg::track::{build_tubes, TrackerConfig};

struct Outcome {
    ok: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome { ok: true, detail: detail.into() }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { ok: false, detail: detail.into() }
}

// ---------------------------------------------------------------- volume IOU

fn stripe(h: u32, w: u32, x0: u32, x1: u32) -> BinaryMask {
    let g: Vec<bool> = (0..h * w).map(|i| (x0..x1).contains(&(i % w))).collect();
    encode(&g, h, w).unwrap()
}

fn two_hit_volume_iou() -> Outcome {
    let (h, w) = (4, 10);
    let tube = |id, class, f: &dyn Fn(u32) -> BinaryMask| {
        let mut t = MaskTube::new(id, class);
        t.frames.extend((0..5).map(|k| (k, f(k))));
        t
    };
    let gs = tube(0, 0, &|_| stripe(h, w, 0, 5));
    let go = tube(1, 1, &|_| stripe(h, w, 5, 10));
    // subject IOU 1 on frames 1 and 4, 2/5 elsewhere
    let ps = tube(0, 0, &|k| if k == 1 || k == 4 { stripe(h, w, 0, 5) } else { stripe(h, w, 0, 2) });
    let po = tube(1, 1, &|_| stripe(h, w, 5, 10));
    let span = TimeSpan::range(0, 5).unwrap();
    let gr = RelationTriplet::new(0, 1, 0, span.clone(), 1.0).unwrap();
    let pr = RelationTriplet::new(0, 1, 0, span, 0.9).unwrap();
    let gt = GroundedTriplet { relation: &gr, subject: &gs, object: &go };
    let pred = GroundedTriplet { relation: &pr, subject: &ps, object: &po };

    let overlap = volume_overlap(&pred, &gt, 0.5);
    let v = volume_iou(&pred, &gt, 0.5);
    let at_half = match_triplets(&[pred], &[gt], 0.5, 0.5).unwrap();
    let at_tenth = match_triplets(&[pred], &[gt], 0.1, 0.5).unwrap();
    let ok = overlap == VolumeOverlap { hits: 2, union: 5 } && v == 0.4 && at_half.is_empty() && at_tenth.len() == 1;
    let detail = format!(
        "hits {} / union {} = {v}; matched at 0.5: {}, at 0.1: {}",
        overlap.hits,
        overlap.union,
        at_half.len(),
        at_tenth.len()
    );
    if ok {
        pass(detail)
    } else {
        fail(detail)
    }
}

// ---------------------------------------------------------------- RLE

fn random_grid(rng: &mut ChaCha8Rng, h: u32, w: u32) -> Vec<bool> {
    let n = (h * w) as usize;
    match rng.gen_range(0..5) {
        0 => vec![false; n],
        1 => vec![true; n],
        2 => {
            let p = rng.gen::<f64>();
            (0..n).map(|_| rng.gen_bool(p)).collect()
        }
        _ => {
            let mut g = vec![false; n];
            for _ in 0..rng.gen_range(1..6) {
                let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
                let (x1, y1) = (rng.gen_range(x0..=w), rng.gen_range(y0..=h));
                for y in y0..y1 {
                    for x in x0..x1 {
                        g[(y * w + x) as usize] = true;
                    }
                }
            }
            g
        }
    }
}

fn dense_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn rle_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut roundtrip_bad, mut worst) = (0usize, 0.0f64);
    for _ in 0..5_000 {
        let (h, w) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let (ga, gb) = (random_grid(&mut rng, h, w), random_grid(&mut rng, h, w));
        let (ma, mb) = (encode(&ga, h, w).unwrap(), encode(&gb, h, w).unwrap());
        roundtrip_bad += usize::from(decode(&ma).unwrap() != ga) + usize::from(decode(&mb).unwrap() != gb);
        worst = worst.max((mask_iou(&ma, &mb).unwrap() - dense_iou(&ga, &gb)).abs());
    }
    let detail = format!("10000 masks: {roundtrip_bad} round-trip mismatches, max IOU deviation {worst:e}");
    if roundtrip_bad == 0 && worst <= 1e-12 {
        pass(detail)
    } else {
        fail(detail)
    }
}

// ---------------------------------------------------------------- Hungarian

fn brute_min(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
        if row == cost.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(cost[row][j] + rec(cost, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    rec(cost, 0, &mut vec![false; cost[0].len()])
}

fn hungarian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=7);
        // dyadic costs keep every sum exact
        let levels = if rng.gen_bool(0.5) { 4 } else { 1024 };
        let cost: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| f64::from(rng.gen_range(0..levels)) / 64.0).collect()).collect();
        let a = hungarian(&cost).unwrap();
        let perm_ok = a.len() == n && {
            let mut cols: Vec<usize> = a.iter().map(|p| p.1).collect();
            cols.sort();
            cols == (0..n).collect::<Vec<_>>()
        };
        if !perm_ok || assignment_cost(&cost, &a) != brute_min(&cost) {
            bad += 1;
        }
    }
    let detail = format!("1000 matrices n<=7: {bad} mismatches");
    if bad == 0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

// ---------------------------------------------------------------- tracker

fn tracker_soundness() -> Outcome {
    let (mut id_errors, mut frame_errors, mut frames_total) = (0usize, 0usize, 0usize);
    for seed in 0..20u64 {
        let params = ScriptParams { num_frames: 60, num_objects: 5, motion: Motion::Crossing, ..Default::default() };
        let script = random_script(seed, &params).unwrap();
        let scene = generate(&script, seed).unwrap();
        let vocab = script.vocabulary();
        let tubes = build_tubes(&scene.frames, &TrackerConfig::default(), &vocab).unwrap();
        let gt = &scene.graph.tubes;
        let matches = match_tubes(&tubes, gt, 0.5).unwrap();
        let covered: std::collections::BTreeSet<_> = matches.iter().map(|m| m.gt_id).collect();
        id_errors += gt.len().abs_diff(tubes.len()) + (gt.len() - covered.len());
        for m in &matches {
            let t = tubes.iter().find(|t| t.entity_id == m.pred_id).unwrap();
            let g = gt.iter().find(|g| g.entity_id == m.gt_id).unwrap();
            let keys: std::collections::BTreeSet<_> = t.frames.keys().chain(g.frames.keys()).collect();
            frames_total += keys.len();
            frame_errors += keys.into_iter().filter(|&&f| t.frames.get(&f) != g.frames.get(&f)).count();
        }
    }
    let detail = format!("20 scenes: {id_errors} identity errors, {frame_errors}/{frames_total} frame masks differ");
    if id_errors == 0 && frame_errors == 0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

// ---------------------------------------------------------------- metric oracle

fn metric_oracle() -> Outcome {
    let cfg = EvalConfig::default();
    let (mut gts, mut preds, mut ledgers) = (Vec::new(), Vec::new(), Vec::new());
    let mut vocab = None;
    for seed in 0..50u64 {
        let script = random_script(1000 + seed, &ScriptParams::default()).unwrap();
        vocab.get_or_insert_with(|| script.vocabulary());
        let gt = generate(&script, seed).unwrap().graph;
        let noise = NoiseConfig { mask_erode_px: 3, span_clip_frames: 10, drop_triplet_rate: 0.25, id_switch_rate: 0.3, seed };
        let (pred, ledger) = perturb(&gt, &noise, &cfg).unwrap();
        gts.push(gt);
        preds.push(pred);
        ledgers.push(ledger);
    }
    let vocab: Vocabulary = vocab.unwrap();
    let report = evaluate(&gts, &preds, &cfg, &vocab).unwrap();
    let max_gt = gts.iter().map(|g| g.relations.len()).max().unwrap();

    // ledger IOU against the run-length implementation
    let mut worst = 0.0f64;
    for ((gt, pred), ledger) in gts.iter().zip(&preds).zip(&ledgers) {
        let (gi, pi) = (gt.tube_index(), pred.tube_index());
        for (rel, e) in gt.relations.iter().zip(&ledger.entries) {
            if let Some(pr) = pred.relations.iter().find(|r| r.key() == rel.key()) {
                let g = GroundedTriplet { relation: rel, subject: gi[&rel.subject_id], object: gi[&rel.object_id] };
                let p = GroundedTriplet { relation: pr, subject: pi[&pr.subject_id], object: pi[&pr.object_id] };
                worst = worst.max((volume_iou(&p, &g, cfg.mask_gate) - e.volume_iou).abs());
            }
        }
    }

    let mut mismatches = Vec::new();
    let mut shown = Vec::new();
    for (ti, &th) in cfg.vol_thresholds.iter().enumerate() {
        let expected = CorruptionLedger::pooled_recall(&ledgers, ti);
        shown.push(format!("thre={th}: R={expected:.4}"));
        for &k in cfg.k_values.iter().filter(|&&k| k >= max_gt) {
            let cell = report.cell(k, th).unwrap();
            if cell.recall != expected {
                mismatches.push(format!("R@{k} thre={th}: {} vs ledger {expected}", cell.recall));
            }
        }
    }
    let detail = format!(
        "50 scenes (max {max_gt} GT/scene), {}; ledger IOU max deviation {worst:e}; {} mismatches {:?}",
        shown.join(", "),
        mismatches.len(),
        mismatches
    );
    if mismatches.is_empty() && worst <= 1e-12 {
        pass(detail)
    } else {
        fail(detail)
    }
}

// ---------------------------------------------------------------- fuzzed instances

const FUZZ_H: u32 = 6;
const FUZZ_W: u32 = 6;

fn fuzz_tube(rng: &mut ChaCha8Rng, id: u32, class: u32, frames: u32) -> MaskTube {
    let mut t = MaskTube::new(id, class);
    for f in 0..frames {
        if rng.gen_bool(0.85) {
            let (x0, y0) = (rng.gen_range(0..FUZZ_W), rng.gen_range(0..FUZZ_H));
            let (x1, y1) = (rng.gen_range(x0 + 1..=FUZZ_W), rng.gen_range(y0 + 1..=FUZZ_H));
            let g: Vec<bool> = (0..FUZZ_H * FUZZ_W)
                .map(|i| (x0..x1).contains(&(i % FUZZ_W)) && (y0..y1).contains(&(i / FUZZ_W)))
                .collect();
            t.frames.insert(f, encode(&g, FUZZ_H, FUZZ_W).unwrap());
        }
    }
    t
}

fn fuzz_relations(rng: &mut ChaCha8Rng, entities: u32, predicates: u32, count: usize, frames: u32) -> Vec<RelationTriplet> {
    let mut out = Vec::new();
    for _ in 0..count {
        let s = rng.gen_range(0..entities);
        let o = (s + rng.gen_range(1..entities)) % entities;
        let a = rng.gen_range(0..frames);
        let b = rng.gen_range(a + 1..=frames);
        let score = f64::from(rng.gen_range(0..8u32)) / 8.0;
        out.push(RelationTriplet::new(s, o, rng.gen_range(0..predicates), TimeSpan::range(a, b).unwrap(), score).unwrap());
    }
    canonicalize_relations(&out)
}

/// Few classes, so many GT triplets share a class key and predictions compete.
fn fuzz_video(rng: &mut ChaCha8Rng, id: String, gt_rel: usize, pred_rel: usize) -> (SceneGraph, SceneGraph) {
    let frames = 6;
    let meta = VideoMeta::new(id, frames, FUZZ_H, FUZZ_W).unwrap();
    let n = rng.gen_range(2..=5u32);
    let mut gt = SceneGraph::new(meta.clone());
    let mut pred = SceneGraph::new(meta);
    for e in 0..n {
        let class = rng.gen_range(0..2);
        gt.tubes.push(fuzz_tube(rng, e, class, frames));
        let mut p = if rng.gen_bool(0.7) { gt.tubes[e as usize].clone() } else { fuzz_tube(rng, e, class, frames) };
        if rng.gen_bool(0.3) {
            p = fuzz_tube(rng, e, class, frames);
        }
        pred.tubes.push(p);
    }
    gt.relations = fuzz_relations(rng, n, 2, gt_rel, frames);
    pred.relations = fuzz_relations(rng, n, 2, pred_rel, frames);
    (gt, pred)
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let vocab = Vocabulary::placeholder(2, 0, 2);
    let cfg = EvalConfig::default();
    let mut violations = Vec::new();
    for inst in 0..200 {
        let videos: Vec<(SceneGraph, SceneGraph)> = (0..rng.gen_range(1..=3))
            .map(|v| {
                let (g, p) = (rng.gen_range(1..=30), rng.gen_range(0..=120));
                fuzz_video(&mut rng, format!("f{inst}_{v}"), g, p)
            })
            .collect();
        let (gts, preds): (Vec<_>, Vec<_>) = videos.into_iter().unzip();
        let r = evaluate(&gts, &preds, &cfg, &vocab).unwrap();
        let at = |k, t| r.cell(k, t).unwrap().recall;
        for t in [0.5, 0.1] {
            if !(at(20, t) <= at(50, t) && at(50, t) <= at(100, t)) {
                violations.push(format!("instance {inst}: K order at {t}"));
            }
        }
        for k in [20, 50, 100] {
            if at(k, 0.1) < at(k, 0.5) {
                violations.push(format!("instance {inst}: threshold order at K={k}"));
            }
        }
    }
    let detail = format!("200 instances: {} violations {:?}", violations.len(), violations);
    if violations.is_empty() {
        pass(detail)
    } else {
        fail(detail)
    }
}

/// Maximum bipartite matching by exhaustive search over GT choices.
fn max_matching(edges: &[Vec<usize>], used: &mut Vec<bool>, p: usize) -> usize {
    if p == edges.len() {
        return 0;
    }
    let mut best = max_matching(edges, used, p + 1);
    for &g in &edges[p] {
        if !used[g] {
            used[g] = true;
            best = best.max(1 + max_matching(edges, used, p + 1));
            used[g] = false;
        }
    }
    best
}

fn greedy_gap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let (mut exceed, mut unique_mismatch, mut unique_cases, mut gap_sum, mut cases) = (0, 0, 0, 0usize, 0usize);
    for inst in 0..500 {
        let (g, p) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (gt, pred) = fuzz_video(&mut rng, format!("g{inst}"), g, p);
        let (gi, pi) = (gt.tube_index(), pred.tube_index());
        let ground = |g: &SceneGraph, idx: &std::collections::HashMap<u32, &MaskTube>| -> Vec<(RelationTriplet, MaskTube, MaskTube)> {
            g.relations
                .iter()
                .take(6)
                .map(|r| (r.clone(), idx[&r.subject_id].clone(), idx[&r.object_id].clone()))
                .collect()
        };
        let (gown, pown) = (ground(&gt, &gi), ground(&pred, &pi));
        let gts: Vec<GroundedTriplet> = gown.iter().map(|(r, s, o)| GroundedTriplet { relation: r, subject: s, object: o }).collect();
        let preds: Vec<GroundedTriplet> = pown.iter().map(|(r, s, o)| GroundedTriplet { relation: r, subject: s, object: o }).collect();
        for th in [0.5, 0.1] {
            let greedy = match_triplets(&preds, &gts, th, 0.5).unwrap().len();
            let edges: Vec<Vec<usize>> = preds
                .iter()
                .map(|p| {
                    (0..gts.len())
                        .filter(|&j| gts[j].class_key() == p.class_key() && volume_iou(p, &gts[j], 0.5) > th)
                        .collect()
                })
                .collect();
            let best = max_matching(&edges, &mut vec![false; gts.len()], 0);
            cases += 1;
            if greedy > best {
                exceed += 1;
            }
            gap_sum += best.saturating_sub(greedy);
            if edges.iter().all(|e| e.len() <= 1) {
                unique_cases += 1;
                if greedy != best {
                    unique_mismatch += 1;
                }
            }
        }
    }
    let detail = format!(
        "{cases} cases: mean gap {:.4}, greedy above optimum {exceed}, unique-candidate cases {unique_cases} with {unique_mismatch} mismatches",
        gap_sum as f64 / cases as f64
    );
    if exceed == 0 && unique_mismatch == 0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

// ---------------------------------------------------------------- CLI

fn cli(args: &[&str]) -> (i32, Vec<u8>, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["pvsg"];
    full.extend_from_slice(args);
    let code = pvsg::cli::run(full, &mut out, &mut err);
    (code, out, String::from_utf8_lossy(&err).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth", "--random", "10", "--seed", "500", "--relations", "class-determined", "--motion", "crossing", "--out-dir", s(&d.join("syn"))],
        vec!["track", s(&d.join("syn/gt")), "--out", s(&d.join("tubes"))],
        vec!["baseline", s(&d.join("syn/gt")), s(&d.join("tubes")), "--theta", "0.3", "--out", s(&d.join("pred"))],
        vec!["eval", s(&d.join("syn/gt")), s(&d.join("pred")), "--out", s(&d.join("report.json"))],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let (code, _, err) = cli(&args);
        if code != 0 {
            return fail(format!("`{}` exited {code}: {err}", step[0]));
        }
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    let cell = report["cells"].as_array().unwrap().iter().find(|c| c["k"] == 20 && c["threshold"] == 0.1).unwrap();
    let (recall, matched, total) = (cell["recall"].as_f64().unwrap(), &cell["matched"], &cell["total"]);
    let detail = format!("R@20 at 0.1 = {recall} ({matched}/{total})");
    if recall == 1.0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs the whole command set into `root`, returning every file and stdout.
fn command_run(root: &Path, workers: &str) -> BTreeMap<String, Vec<u8>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_script.json");
    let noise = root.join("noise.json");
    fs::write(&noise, r#"{"mask_erode_px":1,"span_clip_frames":3,"drop_triplet_rate":0.3,"id_switch_rate":0.3,"seed":4}"#).unwrap();
    let r = |p: &str| root.join(p);
    let commands: Vec<Vec<String>> = vec![
        vec!["synth", s(&demo), "--seed", "7", "--noise", s(&noise), "--out-dir", s(&r("demo"))],
        vec!["synth", "--random", "6", "--seed", "21", "--motion", "free", "--noise", s(&noise), "--out-dir", s(&r("syn"))],
        vec!["validate", s(&r("syn/gt")), s(&r("syn/pred"))],
        vec!["eval", s(&r("syn/gt")), s(&r("syn/pred")), "--out", s(&r("report.json"))],
        vec!["track", s(&r("syn/gt")), "--out", s(&r("tubes"))],
        vec!["baseline", s(&r("syn/gt")), s(&r("tubes")), "--out", s(&r("pred")), "--prior-out", s(&r("prior.json"))],
        vec!["eval", s(&r("syn/gt")), s(&r("pred")), "--top-k-scope", "corpus", "--out", s(&r("report_b.json"))],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let mut stdout = BTreeMap::new();
    for (i, c) in commands.iter().enumerate() {
        let mut args: Vec<&str> = vec!["--workers", workers];
        args.extend(c.iter().map(String::as_str));
        let (code, out, _) = cli(&args);
        stdout.insert(format!("stdout/{i}_{}", c[0]), [format!("exit {code}\n").into_bytes(), out].concat());
    }
    fs::remove_file(&noise).unwrap();
    let mut all = snapshot(root);
    all.extend(stdout);
    all
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<BTreeMap<String, Vec<u8>>> = [("a", "1"), ("b", "1"), ("c", "4")]
        .iter()
        .map(|(name, workers)| {
            let root = dir.path().join(name);
            fs::create_dir_all(&root).unwrap();
            command_run(&root, workers)
        })
        .collect();
    let failed_exit: Vec<&String> =
        runs[0].iter().filter(|(k, v)| k.starts_with("stdout/") && !v.starts_with(b"exit 0")).map(|(k, _)| k).collect();
    let differing: Vec<&String> = runs[0]
        .keys()
        .chain(runs[2].keys())
        .filter(|k| runs.iter().any(|r| r.get(*k) != runs[0].get(*k)))
        .collect();
    let detail = format!(
        "{} outputs across 7 commands, 3 runs (1, 1, 4 workers): {} differ, non-zero exits {:?}",
        runs[0].len(),
        differing.len(),
        failed_exit
    );
    if differing.is_empty() && failed_exit.is_empty() {
        pass(detail)
    } else {
        fail(format!("{detail}; differing {differing:?}"))
    }
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("two-hit volume IOU = 0.4", Duration::from_secs(1), two_hit_volume_iou),
        ("RLE fuzz round trip and IOU", Duration::from_secs(10), rle_fuzz),
        ("Hungarian vs brute force", Duration::from_secs(30), hungarian_oracle),
        ("tracker soundness", Duration::from_secs(60), tracker_soundness),
        ("metric oracle vs corruption ledger", Duration::from_secs(120), metric_oracle),
        ("monotonicity in K and threshold", Duration::MAX, monotonicity),
        ("greedy vs optimal matching", Duration::MAX, greedy_gap),
        ("end-to-end synth/track/baseline/eval", Duration::from_secs(120), end_to_end),
        ("CLI determinism", Duration::MAX, determinism),
    ];
    let mut failures = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            fail(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed();
        let in_time = took <= budget;
        let ok = outcome.ok && in_time;
        failures += usize::from(!ok);
        let limit = if budget == Duration::MAX { String::new() } else { format!(" (limit {}s)", budget.as_secs()) };
        println!(
            "{} {name}: {} [{:.2}s{limit}]",
            if ok { "PASS" } else { "FAIL" },
            outcome.detail,
            took.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
