//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use isoscope_agent::tools::{describe_modes, mode_value};
use isoscope_codegen::{security_scan, CodeLedger, CodegenError, CodegenPipeline, Sandbox, SandboxConfig, LEDGER_FILE_NAME};
use isoscope_core::analysis::compute_histogram;
use isoscope_core::clock::LogicalClock;
use isoscope_core::io::save_volume;
use isoscope_core::metrics::{
    caption_stability, distance_field, histogram_modes, mann_whitney_u, mean_pairwise_similarity, nmi, similarity_map,
    CaptionCorpus, CaptionRecord, TermFrequencyEmbedder, UTestMethod, DEFAULT_NMI_BINS, DEFAULT_PROMINENCE_FRACTION,
};
use isoscope_core::render::CameraAngle;
use isoscope_core::VolumeDataset;
use isoscope_knowledge::{FeatureIndex, FeatureIndexConfig, KnowledgeBase, SelectorMode};
use isoscope_llm::{
    CompletionBackend, FeatureBand, Gateway, GatewayConfig, RecordingBackend, ReplayBackend, Role, ScriptedBackend,
    SyntheticCaptioner, Transcript, UnavailableBackend,
};
use isoscope_service::{run_benchmark, App, BenchRow, BenchTask, RunOutcome, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::Connection;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- oracles

fn seeds(vals: &[f64], dims: [usize; 3], iso: f64) -> Vec<[i64; 3]> {
    let [nx, ny, nz] = dims.map(|d| d as i64);
    let at = |x: i64, y: i64, z: i64| vals[(x + nx * (y + ny * z)) as usize] >= iso;
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let me = at(x, y, z);
                let differs = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
                    .iter()
                    .map(|d| (x + d[0], y + d[1], z + d[2]))
                    .filter(|&(a, b, c)| a >= 0 && b >= 0 && c >= 0 && a < nx && b < ny && c < nz)
                    .any(|(a, b, c)| at(a, b, c) != me);
                if differs {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Nearest seed under the 26-neighbour chamfer metric, in closed form.
fn distance_oracle(vals: &[f64], dims: [usize; 3], iso: f64) -> Vec<f64> {
    let s = seeds(vals, dims, iso);
    let diag = dims.iter().map(|&d| ((d - 1) * (d - 1)) as f64).sum::<f64>().sqrt();
    let mut out = Vec::with_capacity(vals.len());
    for z in 0..dims[2] as i64 {
        for y in 0..dims[1] as i64 {
            for x in 0..dims[0] as i64 {
                if s.is_empty() {
                    out.push(diag);
                    continue;
                }
                let d = s
                    .iter()
                    .map(|p| {
                        let mut d = [(x - p[0]).abs(), (y - p[1]).abs(), (z - p[2]).abs()];
                        d.sort_unstable();
                        let [lo, mid, hi] = d.map(|v| v as f64);
                        lo * 3f64.sqrt() + (mid - lo) * 2f64.sqrt() + (hi - mid)
                    })
                    .fold(f64::INFINITY, f64::min);
                out.push(d);
            }
        }
    }
    out
}

/// Index of the last edge `lo + i*w` not above `v`, capped to the last bin.
fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let w = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * w).collect();
    (edges.partition_point(|&e| e <= v) - 1).min(bins - 1)
}

/// Plug-in NMI from explicit probability tables, 2 I / (H(A) + H(B)).
fn nmi_oracle(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let range = |v: &[f64]| v.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
    let ((la, ha), (lb, hb)) = (range(a), range(b));
    let n = a.len() as f64;
    let mut pj: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        let (i, j) = (bin_of(x, la, ha, bins), bin_of(y, lb, hb, bins));
        *pj.entry((i, j)).or_default() += 1.0;
        *pa.entry(i).or_default() += 1.0;
        *pb.entry(j).or_default() += 1.0;
    }
    let ent = |m: &HashMap<usize, f64>| m.values().map(|c| -(c / n) * (c / n).ln()).sum::<f64>();
    let mi: f64 = pj
        .iter()
        .map(|(&(i, j), &c)| (c / n) * ((c / n) / ((pa[&i] / n) * (pb[&j] / n))).ln())
        .sum();
    let h = ent(&pa) + ent(&pb);
    if h <= 0.0 {
        1.0
    } else {
        (2.0 * mi / h).clamp(0.0, 1.0)
    }
}

fn tf(text: &str) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for w in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        *m.entry(w.to_lowercase()).or_insert(0.0) += 1.0;
    }
    m
}

fn cos_oracle(a: &str, b: &str) -> f64 {
    let (x, y) = (tf(a), tf(b));
    let dot: f64 = x.iter().filter_map(|(k, v)| y.get(k).map(|w| v * w)).sum();
    let norm = |m: &HashMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    let d = norm(&x) * norm(&y);
    if d == 0.0 {
        0.0
    } else {
        dot / d
    }
}

fn mean_pairs_oracle(caps: &[&str]) -> Option<f64> {
    let mut v = Vec::new();
    for i in 0..caps.len() {
        for j in i + 1..caps.len() {
            v.push(cos_oracle(caps[i], caps[j]));
        }
    }
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// U by pair counting; two-sided p is twice the share of all splits of the
/// pooled sample whose first-sample U is at most the observed U.
fn mwu_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let u_of = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .flat_map(|p| y.iter().map(move |q| if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 }))
            .sum()
    };
    let (n1, n2) = (a.len(), b.len());
    let u1 = u_of(a, b);
    let u = u1.min((n1 * n2) as f64 - u1);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let (mut le, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let (x, y): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
            pooled.iter().copied().enumerate().partition(|(i, _)| mask & (1 << i) != 0);
        let x: Vec<f64> = x.into_iter().map(|p| p.1).collect();
        let y: Vec<f64> = y.into_iter().map(|p| p.1).collect();
        let ux = u_of(&x, &y);
        total += 1;
        if ux <= u + 1e-9 {
            le += 1;
        }
    }
    (u, (2.0 * le as f64 / total as f64).min(1.0))
}

fn random_volume(rng: &mut ChaCha8Rng, max: usize) -> (VolumeDataset, Vec<f64>, [usize; 3]) {
    let dims = [rng.gen_range(3..=max), rng.gen_range(3..=max), rng.gen_range(3..=max)];
    let n = dims.iter().product();
    // smooth-ish field so surfaces are not pure noise
    let (fx, fy, fz) = (rng.gen_range(0.2..1.2), rng.gen_range(0.2..1.2), rng.gen_range(0.2..1.2));
    let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let mut vals = Vec::with_capacity(n);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = vals.len();
                vals.push((x as f64 * fx).sin() + (y as f64 * fy).cos() + (z as f64 * fz).sin() + noise[i]);
            }
        }
    }
    let vol = VolumeDataset::new("r", dims, [1.0; 3], [0.0; 3], "s", vals.clone()).unwrap();
    (vol, vals, dims)
}

const WORDS: [&str; 10] = ["Skull", "bone", "teeth", "nose", "jaw", "soft", "tissue", "surface", "ring", "front"];

fn caption(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=7);
    let mut s: Vec<&str> = (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
    if rng.gen_bool(0.3) {
        s.push("near the centre.");
    }
    s.join(if rng.gen_bool(0.5) { " " } else { ", " })
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x150);
    let mut checked = 0;

    // distance_field at full and halved resolution
    for k in 0..30 {
        let (vol, vals, dims) = random_volume(&mut rng, 16);
        let step = if k % 3 == 0 { 2 } else { 1 };
        let iso = rng.gen_range(-1.5..1.5);
        let Ok(got) = distance_field(&vol, iso, step) else {
            continue;
        };
        let (sub, sdims): (Vec<f64>, [usize; 3]) = if step == 1 {
            (vals, dims)
        } else {
            let sd = dims.map(|d| (d - 1) / 2 + 1);
            let mut v = Vec::new();
            for z in 0..sd[2] {
                for y in 0..sd[1] {
                    for x in 0..sd[0] {
                        v.push(vol.value(2 * x, 2 * y, 2 * z));
                    }
                }
            }
            (v, sd)
        };
        let want = distance_oracle(&sub, sdims, iso);
        ensure(got.dims == sdims, || format!("distance dims {:?} vs {sdims:?}", got.dims))?;
        for (g, w) in got.values.iter().zip(&want) {
            ensure((g - w).abs() <= 1e-9, || format!("distance_field {g} vs oracle {w} (dims {sdims:?})"))?;
        }
        checked += 1;
    }

    // nmi on distance fields of random volumes
    for _ in 0..30 {
        let (vol, _, _) = random_volume(&mut rng, 12);
        let bins = rng.gen_range(2..=64);
        let a = distance_field(&vol, rng.gen_range(-1.0..0.0), 1).unwrap();
        let b = distance_field(&vol, rng.gen_range(0.0..1.0), 1).unwrap();
        let got = nmi(&a, &b, bins).unwrap();
        let want = nmi_oracle(&a.values, &b.values, bins);
        ensure((got - want).abs() <= 1e-6, || format!("nmi {got} vs oracle {want}"))?;
        checked += 1;
    }

    // caption metrics
    for _ in 0..30 {
        let caps: Vec<String> = (0..rng.gen_range(2..=10)).map(|_| caption(&mut rng)).collect();
        let got = mean_pairwise_similarity(&CaptionCorpus::from_captions(&caps), &TermFrequencyEmbedder).unwrap();
        let refs: Vec<&str> = caps.iter().map(String::as_str).collect();
        let want = mean_pairs_oracle(&refs).unwrap();
        ensure((got - want).abs() <= 1e-9, || format!("mean_pairwise_similarity {got} vs {want}"))?;
        checked += 1;
    }
    for _ in 0..30 {
        let mut recs = Vec::new();
        while recs.len() < 2 || recs.len() > 10 {
            recs.clear();
            for iso in 0..rng.gen_range(1..=4) {
                for a in 0..rng.gen_range(1..=4) {
                    recs.push(CaptionRecord {
                        dataset: "ds".into(),
                        isovalue: iso as f64 * 0.5,
                        angle_label: format!("angle_{a}"),
                        caption: caption(&mut rng),
                    });
                }
            }
            if !recs.iter().any(|r| recs.iter().filter(|o| o.isovalue == r.isovalue).count() > 1) {
                recs.clear();
            }
        }
        let corpus = CaptionCorpus::from_records(recs.clone()).unwrap();
        let got = caption_stability(&corpus, &TermFrequencyEmbedder).unwrap();
        let isos: BTreeSet<u64> = recs.iter().map(|r| r.isovalue.to_bits()).collect();
        let means: Vec<f64> = isos
            .iter()
            .filter_map(|&bits| {
                let caps: Vec<&str> = recs
                    .iter()
                    .filter(|r| r.isovalue.to_bits() == bits)
                    .map(|r| r.caption.as_str())
                    .collect();
                mean_pairs_oracle(&caps)
            })
            .collect();
        let want = means.iter().sum::<f64>() / means.len() as f64;
        ensure((got - want).abs() <= 1e-9, || format!("caption_stability {got} vs {want}"))?;
        checked += 1;
    }

    // Mann-Whitney on tie-free samples small enough to enumerate
    for _ in 0..30 {
        let n1 = rng.gen_range(1..=8);
        let n2 = rng.gen_range(1..=(14 - n1).min(8));
        let mut pool: Vec<f64> = Vec::new();
        while pool.len() < n1 + n2 {
            let v = (rng.gen_range(0.0..100.0f64) * 1000.0).round() / 1000.0;
            if !pool.contains(&v) {
                pool.push(v);
            }
        }
        let (a, b) = pool.split_at(n1);
        let got = mann_whitney_u(a, b).unwrap();
        let (u, p) = mwu_oracle(a, b);
        ensure(got.method == UTestMethod::Exact, || "expected the exact method".into())?;
        ensure((got.u_statistic - u).abs() <= 1e-9, || format!("U {} vs {u}", got.u_statistic))?;
        ensure((got.p_value_two_sided - p).abs() <= 1e-9, || format!("p {} vs {p}", got.p_value_two_sided))?;
        checked += 1;
    }
    within(start.elapsed(), 60)?;
    Ok(format!("{checked} instances in {:.1}s", start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- similarity map

fn sphere(n: usize) -> VolumeDataset {
    let c = (n as f64 - 1.0) / 2.0;
    VolumeDataset::from_fn("sphere", [n; 3], |x, y, z| {
        ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt()
    })
    .unwrap()
}

fn similarity_structure() -> Outcome {
    let start = Instant::now();
    let vol = sphere(32);
    // radii spread inside the inscribed ball; larger ones are clipped by the box
    let isos: Vec<f64> = (1..=8).map(|k| 15.5 * k as f64 / 9.0).collect();
    // full resolution: halving a 32^3 grid leaves spheres a few voxels across
    let map = similarity_map(&vol, &isos, DEFAULT_NMI_BINS, 1).map_err(|e| e.to_string())?;
    let m = &map.matrix;
    let n = map.len();
    ensure(n == 8, || format!("{n} rows"))?;
    let mut worst = 0;
    for i in 0..n {
        ensure((m[i][i] - 1.0).abs() < 1e-12, || format!("diagonal {i} is {}", m[i][i]))?;
        for j in 0..n {
            ensure(m[i][j] == m[j][i], || format!("asymmetric at {i},{j}"))?;
        }
        let mut inversions = 0;
        for j in i + 1..n - 1 {
            if m[i][j + 1] > m[i][j] + 1e-12 {
                inversions += 1;
            }
        }
        for j in (1..i).rev() {
            if m[i][j - 1] > m[i][j] + 1e-12 {
                inversions += 1;
            }
        }
        worst = worst.max(inversions);
    }
    ensure(worst <= 1, || format!("a row has {worst} inversions"))?;
    within(start.elapsed(), 30)?;
    Ok(format!("8x8 symmetric, unit diagonal, max {worst} inversion per row, {:.1}s", start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- histogram mode

/// 90% zeros, the rest spread over (0, 4095].
fn headsq_surrogate() -> VolumeDataset {
    let dims = [64, 64, 40];
    let mut k = 0u64;
    VolumeDataset::from_fn("headsq", dims, |_, _, _| {
        k += 1;
        if k.is_multiple_of(10) {
            ((k / 10) * 37 % 4095 + 1) as f64
        } else {
            0.0
        }
    })
    .unwrap()
}

fn write_datasets(dir: &Path) {
    std::fs::create_dir_all(dir.join("all_data")).unwrap();
    save_volume(&headsq_surrogate(), dir.join("all_data/headsq.vti")).unwrap();
    for (name, k) in [("isabel_p_25_sub", 1.0), ("ionization_front_0099", 2.0), ("asteroid_100", 3.0)] {
        let v = VolumeDataset::from_fn(name, [8, 8, 8], |x, y, z| k * (x + 2 * y + 3 * z) as f64).unwrap();
        save_volume(&v, dir.join(format!("all_data/{name}.vti"))).unwrap();
    }
    std::fs::write(
        dir.join("catalog.tsv"),
        "headsq\tall_data/headsq.vti\tnone\tCT scan of a human head\n\
isabel_p_25_sub\tall_data/isabel_p_25_sub.vti\tnone\thurricane pressure\n\
ionization_front_0099\tall_data/ionization_front_0099.vti\tnone\tionization front\n\
asteroid_100\tall_data/asteroid_100.vti\tnone\tasteroid impact\n",
    )
    .unwrap();
}

fn app(dir: &Path, backend: Arc<dyn CompletionBackend>) -> App {
    let mut cfg = ServiceConfig::default();
    cfg.catalog = Some(dir.join("catalog.tsv"));
    cfg.data_dir = dir.join("var");
    App::new(cfg, backend, Arc::new(LogicalClock::default())).unwrap()
}

fn histogram_mode() -> Outcome {
    let vol = headsq_surrogate();
    let zeros = vol.scalars().iter().filter(|&&v| v == 0.0).count() as f64 / vol.voxel_count() as f64;
    ensure((zeros - 0.9).abs() < 0.001, || format!("surrogate has {zeros} zeros"))?;
    let hist = compute_histogram(&vol, 64).map_err(|e| e.to_string())?;
    let modes = histogram_modes(&hist, DEFAULT_PROMINENCE_FRACTION);
    ensure(modes.len() == 1, || format!("{} modes", modes.len()))?;
    let values: Vec<f64> = modes.iter().map(|m| mode_value(&vol, &hist, m)).collect();
    ensure(values == [0.0], || format!("mode values {values:?}"))?;
    let want = "1 mode at a scalar value of 0";
    ensure(describe_modes(&values) == want, || describe_modes(&values))?;

    // same answer through the agent tool
    let dir = tempfile::tempdir().unwrap();
    write_datasets(dir.path());
    let backend = Arc::new(ScriptedBackend::new());
    backend.push(
        Role::Orchestration,
        "Thought: plot it\nAction: VisualizeHistogram\nAction Input: {\"dataset\": \"headsq\"}",
    );
    backend.push(Role::Orchestration, "Final Answer: The histogram has 1 mode at a scalar value of 0.");
    backend.push(Role::Qa, "");
    let app = app(dir.path(), backend);
    let r = app.chat("hist", "Plot the histogram of headsq").map_err(|e| e.to_string())?;
    let obs = &r.turn.steps[0].observation;
    ensure(obs.contains(want), || format!("tool said {obs:?}"))?;
    Ok(format!("\"{want}\""))
}

// ---------------------------------------------------------------- code ledger

const GOOD: &str = "def update_vtk_scene(renderer):\n    return renderer\n\nprint('scene ready')\n";
const BAD: &str = "def update_vtk_scene(renderer):\n    return renderer\n\nraise RuntimeError('missing reader')\n";

fn fenced(code: &str) -> String {
    format!("```python\n{code}```")
}

struct CodeRig {
    dir: tempfile::TempDir,
    db: PathBuf,
    backend: Arc<ScriptedBackend>,
    recorder: Arc<RecordingBackend>,
    pipeline: CodegenPipeline,
    gateway: Gateway,
}

fn code_rig() -> CodeRig {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join(LEDGER_FILE_NAME);
    let ledger = Arc::new(CodeLedger::open(&db, Arc::new(LogicalClock::default())).unwrap());
    let backend = Arc::new(ScriptedBackend::new());
    let recorder = Arc::new(RecordingBackend::new(backend.clone()));
    let gateway = Gateway::new(GatewayConfig::default(), recorder.clone());
    let sandbox = Arc::new(Sandbox::new(SandboxConfig::new(dir.path().join("sandbox"))).unwrap());
    let pipeline = CodegenPipeline::new(ledger, gateway.clone(), sandbox, dir.path().join("work")).unwrap();
    CodeRig {
        dir,
        db,
        backend,
        recorder,
        pipeline,
        gateway,
    }
}

fn db_row(db: &Path, id: i64) -> (u8, u32) {
    let conn = Connection::open(db).unwrap();
    conn.query_row("SELECT state, iterations_used FROM code_log WHERE id = ?1", [id], |r| {
        Ok((r.get(0)?, r.get(1)?))
    })
    .unwrap()
}

fn state_machine() -> Outcome {
    let r = code_rig();
    let b = &r.backend;
    let sb = r.pipeline.sandbox().clone();
    // (first script, repairs, judge verdict) per case
    let mut seen = Vec::new();
    for (prompt, first, repairs) in [
        ("show an isosurface", GOOD, vec![]),
        ("show a slice", BAD, vec![BAD, BAD, BAD]),
        ("volume render it", BAD, vec![GOOD]),
    ] {
        b.push(Role::CodeGeneration, fenced(first));
        let rec = r.pipeline.generate_code(prompt, "all_data/headsq.vti", None).map_err(|e| e.to_string())?;
        for code in repairs {
            b.push(Role::CodeGeneration, fenced(code));
        }
        b.push(Role::CodeGeneration, "VALID\nmatches the request");
        let before = sb.run_count();
        r.pipeline.validate_and_fix(rec.id).map_err(|e| e.to_string())?;
        let runs = sb.run_count() - before;
        let (state, iters) = db_row(&r.db, rec.id);
        seen.push((state, iters, runs));
        // a leftover VALID (state 2 never reaches the judge) must not leak
        while b.pending(Role::CodeGeneration) > 0 {
            let _ = r.gateway.complete(Role::CodeGeneration, "drain");
        }
    }
    let want = vec![(1, 0, 1), (2, 3, 4), (3, 1, 2)];
    ensure(seen == want, || format!("(state, iterations, executions) {seen:?}, want {want:?}"))?;
    Ok(format!("{seen:?}"))
}

fn cache_discipline() -> Outcome {
    let r = code_rig();
    r.backend.push(Role::CodeGeneration, fenced(GOOD));
    r.backend.push(Role::CodeGeneration, "VALID");
    let g = r
        .pipeline
        .generate_or_cached("render the skull", "all_data/headsq.vti", None)
        .map_err(|e| e.to_string())?;
    let done = r.pipeline.validate_and_fix(g.record.id).map_err(|e| e.to_string())?;
    ensure(db_row(&r.db, done.id).0 == 1, || "record did not reach state 1".into())?;
    let before = r.recorder.len();
    let again = r
        .pipeline
        .generate_or_cached("render the skull", "all_data/headsq.vti", None)
        .map_err(|e| e.to_string())?;
    let calls = r.recorder.len() - before;
    ensure(again.cached && again.record.id == done.id, || "cache missed".into())?;
    ensure(calls == 0, || format!("{calls} backend calls on a cache hit"))?;
    let _ = &r.dir;
    Ok(format!("transcript length stays {before}"))
}

// ---------------------------------------------------------------- sandbox

fn listing(dir: &Path, skip: &Path, out: &mut BTreeSet<PathBuf>, depth: usize) {
    let Ok(rd) = std::fs::read_dir(dir) else {
        return;
    };
    for e in rd.flatten() {
        let p = e.path();
        if p == skip {
            continue;
        }
        if depth > 0 && p.is_dir() && !p.is_symlink() {
            listing(&p, skip, out, depth - 1);
        }
        out.insert(p);
    }
}

fn sandbox_confinement() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../codegen/tests/fixtures/hostile");
    let mut scripts: Vec<PathBuf> = std::fs::read_dir(&fixtures)
        .map_err(|e| format!("{}: {e}", fixtures.display()))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "py"))
        .collect();
    scripts.sort();
    ensure(scripts.len() == 10, || format!("{} fixtures", scripts.len()))?;

    let outer = tempfile::tempdir().unwrap();
    std::fs::write(outer.path().join("keep.txt"), "x").unwrap();
    let sb = Sandbox::new(SandboxConfig::new(outer.path().join("sandbox"))).unwrap();
    let root = sb.root().to_path_buf();
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| "/root".into());
    let snapshot = || {
        let mut s = BTreeSet::new();
        listing(outer.path(), &root, &mut s, 8);
        listing(Path::new("/tmp"), &root, &mut s, 0);
        listing(&home, &root, &mut s, 0);
        s
    };
    let before = snapshot();
    let (mut blocked, mut ran) = (0, 0);
    for s in &scripts {
        let code = std::fs::read_to_string(s).unwrap();
        let name = s.file_name().unwrap().to_string_lossy().to_string();
        match sb.execute(&code) {
            Err(CodegenError::ScanBlocked(_)) => {
                ensure(!security_scan(&code).allowed, || format!("{name}: scan disagrees"))?;
                blocked += 1;
            }
            Ok(run) => {
                ensure(run.run_dir.starts_with(&root), || format!("{name} ran outside the sandbox"))?;
                ensure(run.artifacts.iter().all(|a| a.is_relative()), || format!("{name}: absolute artifact"))?;
                ran += 1;
            }
            Err(e) => return Err(format!("{name}: {e}")),
        }
    }
    let after = snapshot();
    let leaked: Vec<_> = after.difference(&before).collect();
    ensure(leaked.is_empty(), || format!("files appeared outside the sandbox: {leaked:?}"))?;
    Ok(format!("{blocked} blocked by scan, {ran} ran confined"))
}

// ---------------------------------------------------------------- feature pipeline

fn feature_pipeline() -> Outcome {
    let start = Instant::now();
    let n = 32;
    let c = (n as f64 - 1.0) / 2.0;
    let rmax = (3.0 * c * c).sqrt();
    // two shells: an outer "skull" and an inner "brain"
    let vol = Arc::new(
        VolumeDataset::from_fn("twoband", [n; 3], |x, y, z| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt() / rmax;
            1000.0 * (1.0 - d)
        })
        .unwrap(),
    );
    let (lo, hi) = vol.scalar_range();
    let at = |f: f64| lo + f * (hi - lo);
    let skull = FeatureBand::new("skull", at(0.30), at(0.45));
    let brain = FeatureBand::new("brain", at(0.60), at(0.75));
    let mid = 0.5 * (skull.lo + skull.hi);

    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(GatewayConfig::default(), Arc::new(UnavailableBackend))
        .with_captioner(Arc::new(SyntheticCaptioner::new(vec![skull, brain])));
    let mut cfg = FeatureIndexConfig::new(dir.path().join("sweeps"));
    cfg.render_size = (64, 64);
    cfg.selector = SelectorMode::FallbackOnly;
    let fi = FeatureIndex::new(
        Arc::new(KnowledgeBase::open(dir.path().join("feature_index.db")).unwrap()),
        gateway,
        Arc::new(LogicalClock::default()),
        cfg,
    )
    .map_err(|e| e.to_string())?;

    let first = fi.run_sweep(vol.clone(), 25, &CameraAngle::canonical()).map_err(|e| e.to_string())?;
    ensure(first.len() == 150, || format!("sweep produced {}", first.len()))?;
    let before = fi.query_feature("twoband", "skull").map_err(|e| e.to_string())?;
    let rounds = fi.self_improve("twoband", 2.0, 1).map_err(|e| e.to_string())?;
    ensure(rounds.len() == 1, || format!("{} rounds", rounds.len()))?;
    let count = fi.kb().count("twoband").map_err(|e| e.to_string())?;
    ensure(count == 300, || format!("{count} records after one round"))?;
    let after = fi.query_feature("twoband", "skull").map_err(|e| e.to_string())?;
    let (d0, d1) = ((before.chosen_isovalue - mid).abs(), (after.chosen_isovalue - mid).abs());
    ensure(d1 < d0, || {
        format!("{:.2} -> {:.2}, band midpoint {mid:.2}", before.chosen_isovalue, after.chosen_isovalue)
    })?;
    within(start.elapsed(), 120)?;
    Ok(format!(
        "150 -> 300 records; skull isovalue {:.1} -> {:.1} (midpoint {mid:.1}); {:.1}s",
        before.chosen_isovalue,
        after.chosen_isovalue,
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- replay

const TURNS: [&str; 5] = [
    "What datasets are available?",
    "Plot the histogram of headsq",
    "Generate a volume rendering script for headsq, then add an outline box",
    "Show me z slice 20 of headsq",
    "Which runs have values between 100 and 900?",
];

fn script_session(b: &ScriptedBackend) {
    let o = Role::Orchestration;
    b.push(o, "Thought: list them\nAction: SimulationInfo\nAction Input: {}");
    b.push(o, "Thought: done\nFinal Answer: There are 4 datasets: headsq, isabel_p_25_sub, ionization_front_0099 and asteroid_100.");
    b.push(o, "Thought: plot\nAction: VisualizeHistogram\nAction Input: {\"dataset\": \"headsq\"}");
    b.push(o, "Final Answer: The histogram has 1 mode at a scalar value of 0.");
    b.push(
        o,
        "Thought: write code first\nAction: CodeGenerator\nAction Input: {\"request\": \"volume rendering of the head\", \"dataset\": \"headsq\"}",
    );
    b.push(
        o,
        "Thought: now modify\nAction: ModifyGeneratedCode\nAction Input: {\"modifications\": \"add an outline box\"}",
    );
    b.push(o, "Final Answer: The script renders the volume with an outline box.");
    b.push(o, "Action: VisualizeSlice\nAction Input: {\"dataset\": \"headsq\", \"axis\": \"z\", \"index\": 20}");
    b.push(o, "Final Answer: Here is slice 20.");
    b.push(o, "Action: FilterRuns\nAction Input: {\"lo\": 100, \"hi\": 900}");
    b.push(o, "Final Answer: All four datasets have values in that range.");
    b.push(Role::CodeGeneration, fenced("print('volume rendered')\n"));
    b.push(Role::CodeModification, fenced("print('volume rendered with outline')\n"));
    for s in ["Show the histogram of headsq.", "Render headsq.", "Run the script.", "Try slice 30.", "Plot a histogram."] {
        b.push(Role::Qa, format!("Follow-up Suggestion: {s}"));
    }
}

fn run_session(dir: &Path, backend: Arc<dyn CompletionBackend>) -> Result<Vec<u8>, String> {
    write_datasets(dir);
    let app = app(dir, backend);
    for t in TURNS {
        app.chat("replay", t).map_err(|e| format!("{t:?}: {e}"))?;
    }
    let out = dir.join("export.jsonl");
    app.export_provenance("replay", &out).map_err(|e| e.to_string())?;
    Ok(std::fs::read(out).unwrap())
}

fn replay_determinism() -> Outcome {
    let rec_dir = tempfile::tempdir().unwrap();
    let scripted = Arc::new(ScriptedBackend::new());
    script_session(&scripted);
    let recorder = Arc::new(RecordingBackend::new(scripted));
    let recorded = run_session(rec_dir.path(), recorder.clone())?;
    let transcript: Transcript = recorder.transcript();
    let text = String::from_utf8(recorded.clone()).unwrap();
    ensure(text.contains("\"CodeGenerator\"") && text.contains("\"ModifyGeneratedCode\""), || {
        "session lacks the CodeGenerator -> ModifyGeneratedCode chain".into()
    })?;
    ensure(text.lines().count() == 6, || format!("{} provenance lines", text.lines().count()))?;

    for i in 0..3 {
        let dir = tempfile::tempdir().unwrap();
        let replay = Arc::new(ReplayBackend::new(transcript.clone()));
        let bytes = run_session(dir.path(), replay.clone())?;
        ensure(replay.remaining() == 0, || format!("replay {i} left {} entries", replay.remaining()))?;
        ensure(bytes == recorded, || format!("replay {i} differs from the recording"))?;
    }
    Ok(format!("{} model calls, {} bytes, 3 identical replays", transcript.len(), recorded.len()))
}

// ---------------------------------------------------------------- bench

fn bench_arithmetic() -> Outcome {
    let task = BenchTask {
        task: "vtk volume rendering (headsq.vti)".into(),
        prompt: "volume render the head".into(),
        dataset: "all_data/headsq.vti".into(),
        modification: None,
        code_gen: true,
        llm: None,
        agent_model: None,
    };
    let runs: Vec<RunOutcome> = (1..=5)
        .map(|s| RunOutcome {
            executable: true,
            meets_spec: true,
            seconds: s as f64,
        })
        .collect();
    let row = BenchRow::from_runs("m", "a", &task, &runs);
    ensure((row.time_avg_s - 3.0).abs() <= 0.01, || format!("avg {}", row.time_avg_s))?;
    ensure((row.time_std_s - 1.58).abs() <= 0.01, || format!("std {}", row.time_std_s))?;

    // two of five runs satisfy the judge
    let r = code_rig();
    for verdict in ["VALID", "INVALID", "VALID", "INVALID", "INVALID"] {
        r.backend.push(Role::CodeGeneration, fenced(GOOD));
        r.backend.push(Role::CodeGeneration, "VALID");
        r.backend.push(Role::Judge, verdict);
    }
    let row2 = run_benchmark(&r.pipeline, &r.gateway, &task, 5).map_err(|e| e.to_string())?;
    ensure(row2.validity == 0.4, || format!("validity {}", row2.validity))?;
    ensure(row2.n_runs == 5, || format!("{} runs", row2.n_runs))?;
    Ok(format!("avg {:.2} s, std {:.2} s, validity {}", row.time_avg_s, row.time_std_s, row2.validity))
}

// ---------------------------------------------------------------- MWU

fn mwu_exact_case() -> Outcome {
    let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).map_err(|e| e.to_string())?;
    let (u, p) = mwu_oracle(&[1.0, 2.0], &[3.0, 4.0]);
    ensure(r.u_statistic == 0.0 && u == 0.0, || format!("U {}", r.u_statistic))?;
    ensure((r.p_value_two_sided - 1.0 / 3.0).abs() <= 1e-12, || format!("p {}", r.p_value_two_sided))?;
    ensure((p - 1.0 / 3.0).abs() <= 1e-12, || format!("enumeration gives {p}"))?;
    Ok(format!("U = 0, p = {:.12}", r.p_value_two_sided))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric oracles", metric_oracles),
        ("similarity map structure", similarity_structure),
        ("histogram mode reproduction", histogram_mode),
        ("validation state machine", state_machine),
        ("cache discipline", cache_discipline),
        ("sandbox confinement", sandbox_confinement),
        ("feature pipeline end-to-end", feature_pipeline),
        ("replay determinism", replay_determinism),
        ("benchmark harness arithmetic", bench_arithmetic),
        ("Mann-Whitney exact case", mwu_exact_case),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match res {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
