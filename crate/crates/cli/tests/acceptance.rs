//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances are the constants below.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use csp_core::cluster::{
    build_index, corpus_vectors, decode_index, encode_index, kmeans, load_index, save_index,
    CategoryVectors, ClusterIndex, DEFAULT_K,
};
use csp_core::embeddings::{conceptual_similarity, EmbeddingStore};
use csp_core::engine::{
    classify_novelty, rank_visual, tertile_sizes, Novelty, ShiftCandidate, ShiftConfig,
    ShiftEngine, VisualCandidate, DEFAULT_THRESHOLD,
};
use csp_core::features::{import_vectors, ExtractorSpec, FeatureVector};
use csp_core::fixture::{self, planted_shift, EMBEDDINGS_FILE, VECTORS_FILE};
use csp_core::ingest::{scan_corpus, Corpus};
use csp_core::sketch::{from_delta_sequence, to_delta_sequence, Point, Stroke};
use csp_core::{load_embeddings, ClusterId, Label, Sketch};
use csp_service::{load_engine, serve, AppState, ArtifactPaths};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const P1_QUERIES: usize = 100;
const P1_MIN_CORRECT: usize = 95;
const P1_TIME_LIMIT: Duration = Duration::from_secs(60);
const P3_INSTANCES: usize = 100;
const P3_SEEDS: u64 = 10;
const P3_TOL: f64 = 1e-9;
const P4_EPS: f64 = 1e-9;
const P6_TOL: f64 = 1e-12;
const P7_TRIALS: usize = 1000;
const P8_PAIRS: usize = 1000;
const P8_TOL: f64 = 1e-9;
const P10_FIXTURES: usize = 100;
const P11_REQUESTS: usize = 60;
const P11_MEDIAN_LIMIT: Duration = Duration::from_millis(100);

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Shared on-disk fixture: the planted corpus plus an imported-vector index
/// and a built-in-feature index.
struct Artifacts {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    embeddings: PathBuf,
    imported: ClusterIndex,
    builtin_path: PathBuf,
    p1_elapsed: Duration,
}

fn artifacts() -> Artifacts {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    let start = Instant::now();
    fixture::generate(7, fixture::SKETCHES_PER_CATEGORY)
        .write(&corpus_dir)
        .unwrap();
    let manifest = scan_corpus(&corpus_dir).unwrap();
    let corpus = Corpus::load(&manifest, None).unwrap();
    let vectors = import_vectors(&corpus_dir.join(VECTORS_FILE), &manifest).unwrap();
    let (spec, cats) = corpus_vectors(&corpus, Some(&vectors)).unwrap();
    let imported = build_index(cats, DEFAULT_K, 1, spec, None).unwrap();
    let p1_elapsed = start.elapsed();

    let (spec, cats) = corpus_vectors(&corpus, None).unwrap();
    let builtin = build_index(cats, DEFAULT_K, 1, spec, None).unwrap();
    let builtin_path = dir.path().join("builtin.idx");
    save_index(&builtin, &builtin_path).unwrap();
    Artifacts {
        embeddings: corpus_dir.join(EMBEDDINGS_FILE),
        corpus: corpus_dir,
        imported,
        builtin_path,
        p1_elapsed,
        _dir: dir,
    }
}

fn p1(a: &Artifacts) -> Check {
    let start = Instant::now();
    let store = load_embeddings(&a.embeddings, a.imported.labels()).map_err(|e| e.to_string())?;
    let corpus =
        Corpus::load_labels(&a.corpus, a.imported.labels(), None).map_err(|e| e.to_string())?;
    let engine = ShiftEngine::new(a.imported.clone(), store, corpus, ShiftConfig::default())
        .map_err(|e| e.to_string())?;
    let labels = fixture::labels();
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut correct = 0;
    let mut misses = Vec::new();
    for _ in 0..P1_QUERIES {
        let label = &labels[rng.random_range(0..labels.len())];
        let pool = engine.corpus().category(label).unwrap();
        let drawn = &pool[rng.random_range(0..pool.len())];
        // Fresh id, so the engine must locate the sketch by its geometry.
        let query = Sketch::new(label.clone(), drawn.strokes().to_vec(), "query").unwrap();
        let planted = planted_shift(label).unwrap();
        let mut ok = true;
        for (level, want) in [
            (Novelty::Low, &planted.near),
            (Novelty::Intermediate, &planted.mid),
            (Novelty::High, &planted.far),
        ] {
            match engine.conceptual_shift(&query, level) {
                Ok(r) if &r.label == want => {}
                Ok(r) => {
                    ok = false;
                    misses.push(format!("{}@{level}->{}", drawn.source_id(), r.label));
                }
                Err(e) => {
                    ok = false;
                    misses.push(format!("{}@{level}: {e}", drawn.source_id()));
                }
            }
        }
        correct += usize::from(ok);
    }
    let elapsed = a.p1_elapsed + start.elapsed();
    let detail = format!(
        "{correct}/{P1_QUERIES} queries right at all three levels (need >= {P1_MIN_CORRECT}), {:.2}s incl. build (limit {}s)",
        elapsed.as_secs_f64(),
        P1_TIME_LIMIT.as_secs()
    );
    ensure(correct >= P1_MIN_CORRECT && elapsed < P1_TIME_LIMIT, || {
        format!(
            "{detail}; first misses: {:?}",
            &misses[..misses.len().min(5)]
        )
    })?;
    Ok(detail)
}

fn matrix_invariants(index: &ClusterIndex) -> Result<usize, String> {
    let m = &index.matrix;
    let n = m.len();
    let expected = index.model.categories.len() * index.k();
    ensure(n == expected, || {
        format!("matrix is {n}, expected {expected}")
    })?;
    ensure(m.labels().len() == n, || {
        "label count differs from matrix size".into()
    })?;
    for i in 0..n {
        ensure(m.get(i, i) == Some(0.0), || {
            format!("diagonal {i} is {:?}", m.get(i, i))
        })?;
        for j in 0..n {
            let (a, b) = (m.get(i, j), m.get(j, i));
            let same = match (a, b) {
                (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
                (None, None) => true,
                _ => false,
            };
            ensure(same, || format!("({i},{j}) = {a:?} but ({j},{i}) = {b:?}"))?;
        }
    }
    Ok(n)
}

fn p2(a: &Artifacts) -> Check {
    let builtin = load_index(&a.builtin_path).map_err(|e| e.to_string())?;
    let n1 = matrix_invariants(&builtin)?;
    let n2 = matrix_invariants(&a.imported)?;

    // Full-size shape: 345 categories, k = 10, on small synthetic vectors.
    let mut rng = ChaCha8Rng::seed_from_u64(345);
    let cats = (0..345)
        .map(|c| CategoryVectors {
            label: Label::new(&format!("cat{c:03}")).unwrap(),
            vectors: (0..12)
                .map(|i| {
                    FeatureVector::new(
                        format!("cat{c:03}:{i}"),
                        (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    )
                    .unwrap()
                })
                .collect(),
        })
        .collect();
    let big =
        build_index(cats, 10, 1, ExtractorSpec::imported(4), None).map_err(|e| e.to_string())?;
    let n3 = matrix_invariants(&big)?;
    ensure(n1 == 120 && n2 == 120 && n3 == 3450, || {
        format!("sizes {n1}, {n2}, {n3}")
    })?;
    Ok(format!(
        "symmetric bit-for-bit, zero diagonal; {n1}x{n1} (12x10) builtin, {n2}x{n2} imported, {n3}x{n3} (345x10)"
    ))
}

fn brute_force_wcss(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut total = 0.0;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = (0..n)
                .filter(|&i| labels[i] == c)
                .map(|i| &points[i])
                .collect();
            if members.is_empty() {
                continue;
            }
            let d = members[0].len();
            let mean: Vec<f64> = (0..d)
                .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                .collect();
            total += members
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&mean)
                        .map(|(x, m)| (x - m) * (x - m))
                        .sum::<f64>()
                })
                .sum::<f64>();
        }
        best = best.min(total);
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

fn p3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for inst in 0..P3_INSTANCES {
        let n = rng.random_range(3..=8);
        let k = rng.random_range(1..=3usize.min(n));
        let d = rng.random_range(1..=3);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let optimum = brute_force_wcss(&points, k);
        let best = (0..P3_SEEDS)
            .map(|seed| kmeans(&points, k, seed).map(|r| r.total_wcss()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let gap = (best - optimum).abs();
        worst = worst.max(gap);
        ensure(gap <= P3_TOL, || {
            format!("instance {inst} (n={n}, k={k}): best {best} vs optimum {optimum}")
        })?;
    }
    Ok(format!(
        "{P3_INSTANCES} instances, best of {P3_SEEDS} seeds; max |gap| {worst:.1e} (tol {P3_TOL:.0e})"
    ))
}

fn p4(a: &Artifacts) -> Check {
    let builtin = load_index(&a.builtin_path).map_err(|e| e.to_string())?;
    // Unstructured data takes many more Lloyd steps than the blob fixture.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cats = (0..20)
        .map(|c| CategoryVectors {
            label: Label::new(&format!("noise{c:02}")).unwrap(),
            vectors: (0..300)
                .map(|i| {
                    let v = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                    FeatureVector::new(format!("noise{c:02}:{i}"), v).unwrap()
                })
                .collect(),
        })
        .collect();
    let noise = build_index(cats, DEFAULT_K, 1, ExtractorSpec::imported(6), None)
        .map_err(|e| e.to_string())?;

    let mut steps = [0usize; 3];
    for (slot, index) in [&a.imported, &builtin, &noise].into_iter().enumerate() {
        for cat in &index.model.categories {
            ensure(!cat.history.is_empty(), || {
                format!("{} has no history", cat.label)
            })?;
            for (t, w) in cat.history.windows(2).enumerate() {
                steps[slot] += 1;
                ensure(w[1] <= w[0] + P4_EPS, || {
                    format!("{} iteration {}: {} -> {}", cat.label, t + 1, w[0], w[1])
                })?;
            }
        }
    }
    Ok(format!(
        "no increase (eps {P4_EPS:.0e}) in {} fixture steps (imported {}, builtin {}) or {} steps on 20 noise categories",
        steps[0] + steps[1],
        steps[0],
        steps[1],
        steps[2]
    ))
}

fn single_point_index(points: &[(&str, Vec<f64>)]) -> ClusterIndex {
    let dim = points[0].1.len();
    let cats = points
        .iter()
        .map(|(name, v)| CategoryVectors {
            label: Label::new(name).unwrap(),
            vectors: vec![FeatureVector::new(format!("{name}:0"), v.clone()).unwrap()],
        })
        .collect();
    build_index(cats, 1, 1, ExtractorSpec::imported(dim), None).unwrap()
}

fn p5() -> Check {
    let index = single_point_index(&[
        ("q", vec![0.0]),
        ("a", vec![2.0]),
        ("b", vec![4.0]),
        ("c", vec![6.0]),
    ]);
    let q = Label::new("q").unwrap();
    let (_, ranked) = rank_visual(&[0.0], &q, &index, 3).map_err(|e| e.to_string())?;
    let got: Vec<(f64, f64)> = ranked
        .iter()
        .map(|c| (c.raw_distance, c.visual_sim))
        .collect();
    ensure(got == [(2.0, 1.0), (4.0, 0.5), (6.0, 0.0)], || {
        format!("got {got:?}")
    })?;

    let flat = single_point_index(&[
        ("q", vec![0.0, 0.0]),
        ("a", vec![2.0, 0.0]),
        ("b", vec![0.0, 2.0]),
        ("c", vec![-2.0, 0.0]),
    ]);
    let (_, ranked) = rank_visual(&[0.0, 0.0], &q, &flat, 3).map_err(|e| e.to_string())?;
    let sims: Vec<f64> = ranked.iter().map(|c| c.visual_sim).collect();
    ensure(sims == [1.0, 1.0, 1.0], || {
        format!("all-equal case gave {sims:?}")
    })?;
    Ok("[2,4,6] -> [1.0, 0.5, 0.0] exactly; equal distances -> all 1.0".into())
}

fn p6() -> Check {
    let target = ClusterId::new(Label::new("t").unwrap(), 0);
    let mut pairs = 0;
    let mut passed = 0;
    // Oracle is the exact decimal gap |i - j| / 100 < 5 / 100, checked for two
    // common ways of building the grid in floating point.
    let grids: [fn(i32) -> f64; 2] = [|i| f64::from(i) / 100.0, |i| f64::from(i) * 0.01];
    for grid in grids {
        for i in 0..=100 {
            for j in 0..=100 {
                let (v, c) = (grid(i), grid(j));
                let visual = VisualCandidate {
                    target: target.clone(),
                    raw_distance: 1.0 - v,
                    visual_sim: v,
                };
                let cand = ShiftCandidate::fused(&visual, c, c, DEFAULT_THRESHOLD);
                let expect = (i - j).abs() < 5;
                ensure(cand.passed_filter == expect, || {
                    format!(
                        "({v}, {c}): filter {} expected {expect}",
                        cand.passed_filter
                    )
                })?;
                ensure((cand.composite - (v + c) / 2.0).abs() <= P6_TOL, || {
                    format!("({v}, {c}): composite {}", cand.composite)
                })?;
                pairs += 1;
                passed += usize::from(expect);
            }
        }
    }
    Ok(format!(
        "{pairs} grid pairs (two float constructions), {passed} pass, matching the exact decimal gap; composite within {P6_TOL:.0e}"
    ))
}

fn p7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    ensure(tertile_sizes(20) == [7, 7, 6], || {
        format!("sizes {:?}", tertile_sizes(20))
    })?;
    for trial in 0..P7_TRIALS {
        // Coarse values force plenty of ties.
        let cands: Vec<ShiftCandidate> = (0..20)
            .map(|i| {
                let v = f64::from(rng.random_range(0..8u8)) / 7.0;
                let c = f64::from(rng.random_range(0..8u8)) / 7.0;
                let visual = VisualCandidate {
                    target: ClusterId::new(Label::new(&format!("c{}", i % 6)).unwrap(), i),
                    raw_distance: 1.0 - v,
                    visual_sim: v,
                };
                ShiftCandidate::fused(&visual, c, c, DEFAULT_THRESHOLD)
            })
            .collect();
        let out = classify_novelty(cands).map_err(|e| e.to_string())?;
        let of = |n| {
            out.iter()
                .filter(|c| c.novelty == Some(n))
                .map(|c| c.composite)
                .collect::<Vec<_>>()
        };
        let (low, mid, high) = (
            of(Novelty::Low),
            of(Novelty::Intermediate),
            of(Novelty::High),
        );
        ensure([low.len(), mid.len(), high.len()] == [7, 7, 6], || {
            format!(
                "trial {trial}: sizes {} {} {}",
                low.len(),
                mid.len(),
                high.len()
            )
        })?;
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        ensure(max(&high) <= min(&mid) && max(&mid) <= min(&low), || {
            format!("trial {trial}: buckets overlap")
        })?;
    }
    Ok(format!(
        "{P7_TRIALS} random 20-candidate sets: 7/7/6, High <= Intermediate <= Low"
    ))
}

fn p8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dim = 16;
    let mut rows = Vec::new();
    for i in 0..P8_PAIRS {
        for side in ["a", "b"] {
            let scale = 10f64.powi(rng.random_range(-3..4));
            let v: Vec<f64> = (0..dim)
                .map(|_| scale * rng.random_range(-1.0..1.0))
                .collect();
            rows.push((Label::new(&format!("{side}{i}")).unwrap(), v));
        }
    }
    let store = EmbeddingStore::from_vectors(dim, rows.clone()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut negatives = 0;
    for pair in rows.chunks(2) {
        let ((la, va), (lb, vb)) = (&pair[0], &pair[1]);
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        let direct = dot / (na * nb);
        negatives += usize::from(direct < 0.0);
        let raw = store.cosine(la, lb).map_err(|e| e.to_string())?;
        let sim = conceptual_similarity(la, lb, &store).map_err(|e| e.to_string())?;
        let back = conceptual_similarity(lb, la, &store).map_err(|e| e.to_string())?;
        worst = worst
            .max((raw - direct).abs())
            .max((sim - direct.max(0.0)).abs());
        ensure(sim.to_bits() == back.to_bits(), || {
            format!("{la}/{lb} not symmetric")
        })?;
        for l in [la, lb] {
            let s = conceptual_similarity(l, l, &store).map_err(|e| e.to_string())?;
            ensure((s - 1.0).abs() <= P8_TOL, || {
                format!("self similarity of {l} is {s}")
            })?;
        }
    }
    ensure(worst <= P8_TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!(
        "{P8_PAIRS} pairs ({negatives} with negative cosine, clamped to 0); max deviation {worst:.1e}, symmetric bit-for-bit"
    ))
}

fn csp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csp"))
}

fn p9(a: &Artifacts, rt: &tokio::runtime::Runtime) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut hashes = Vec::new();
    for name in ["one.idx", "two.idx"] {
        let out = dir.path().join(name);
        let o = csp()
            .args(["build-index", "--corpus"])
            .arg(&a.corpus)
            .arg("--embeddings")
            .arg(&a.embeddings)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "42"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || {
            String::from_utf8_lossy(&o.stderr).into_owned()
        })?;
        hashes.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(hashes[0] == hashes[1], || "index files differ".into())?;

    let paths = ArtifactPaths {
        index: a.builtin_path.clone(),
        embeddings: a.embeddings.clone(),
        corpus: a.corpus.clone(),
    };
    let bodies = rt.block_on(async {
        let base = start_service(&paths).await?;
        let client = reqwest::Client::new();
        let mut bodies = Vec::new();
        for _ in 0..2 {
            let r = client
                .post(format!("{base}/v1/shift"))
                .json(&shift_body("chair", "intermediate"))
                .send()
                .await
                .map_err(|e| e.to_string())?;
            bodies.push(r.bytes().await.map_err(|e| e.to_string())?);
        }
        Ok::<_, String>(bodies)
    })?;
    ensure(bodies[0] == bodies[1], || "shift replies differ".into())?;
    Ok(format!(
        "two builds byte-identical ({} bytes); two /v1/shift replies identical ({} bytes)",
        hashes[0].len(),
        bodies[0].len()
    ))
}

fn random_strokes(rng: &mut ChaCha8Rng) -> Vec<Stroke> {
    (0..rng.random_range(1..6))
        .map(|_| {
            let pts = (0..rng.random_range(1..30))
                .map(|_| Point::new(rng.random_range(0..256), rng.random_range(0..256)))
                .collect();
            Stroke::new(pts).unwrap()
        })
        .collect()
}

fn random_index(rng: &mut ChaCha8Rng) -> ClusterIndex {
    let dim = rng.random_range(1..12);
    let k = rng.random_range(1..5);
    let cats = (0..rng.random_range(2..6))
        .map(|c| {
            let n = rng.random_range(k..k + 15);
            CategoryVectors {
                label: Label::new(&format!("cat{c}")).unwrap(),
                vectors: (0..n)
                    .map(|i| {
                        let v = (0..dim).map(|_| rng.random_range(-1e3..1e3)).collect();
                        FeatureVector::new(format!("cat{c}:{i}"), v).unwrap()
                    })
                    .collect(),
            }
        })
        .collect();
    let limit = rng.random_bool(0.5).then(|| rng.random_range(0..1000));
    build_index(cats, k, rng.random(), ExtractorSpec::imported(dim), limit).unwrap()
}

fn p10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut events = 0;
    let mut bytes_total = 0;
    for i in 0..P10_FIXTURES {
        let strokes = random_strokes(&mut rng);
        let delta = to_delta_sequence(&strokes).map_err(|e| e.to_string())?;
        events += delta.len();
        let back = from_delta_sequence(&delta).map_err(|e| e.to_string())?;
        ensure(back == strokes, || {
            format!("fixture {i}: strokes differ after delta round trip")
        })?;

        let index = random_index(&mut rng);
        let bytes = encode_index(&index);
        let decoded = decode_index(&bytes).map_err(|e| e.to_string())?;
        ensure(decoded == index, || {
            format!("fixture {i}: decoded index differs")
        })?;
        ensure(encode_index(&decoded) == bytes, || {
            format!("fixture {i}: re-encoding differs")
        })?;
        let path = dir.path().join(format!("{i}.idx"));
        save_index(&index, &path).map_err(|e| e.to_string())?;
        let loaded = load_index(&path).map_err(|e| e.to_string())?;
        ensure(encode_index(&loaded) == bytes, || {
            format!("fixture {i}: file round trip differs")
        })?;
        bytes_total += bytes.len();
    }
    Ok(format!(
        "{P10_FIXTURES} sketches ({events} pen events) and {P10_FIXTURES} indexes ({bytes_total} bytes) round-trip bit-exactly"
    ))
}

fn shift_body(label: &str, novelty: &str) -> Value {
    json!({
        "label": label,
        "novelty": novelty,
        "strokes": [[[30, 220, 220, 30, 30], [30, 30, 220, 220, 30]], [[60, 190], [125, 128]]],
    })
}

async fn start_service(paths: &ArtifactPaths) -> Result<String, String> {
    let engine = load_engine(paths).map_err(|e| e.to_string())?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    tokio::spawn(serve(listener, AppState::with_engine(engine)));
    Ok(format!("http://{addr}"))
}

fn p11(a: &Artifacts, rt: &tokio::runtime::Runtime) -> Check {
    let paths = ArtifactPaths {
        index: a.builtin_path.clone(),
        embeddings: a.embeddings.clone(),
        corpus: a.corpus.clone(),
    };
    rt.block_on(async {
        let base = start_service(&paths).await?;
        let client = reqwest::Client::new();
        let post = |body: Value| {
            let client = client.clone();
            let url = format!("{base}/v1/shift");
            async move {
                let r = client.post(url).json(&body).send().await.map_err(|e| e.to_string())?;
                let status = r.status().as_u16();
                let v: Value = r.json().await.map_err(|e| e.to_string())?;
                Ok::<_, String>((status, v))
            }
        };

        let labels = fixture::labels();
        let mut times = Vec::with_capacity(P11_REQUESTS);
        for i in 0..P11_REQUESTS {
            let label = labels[i % labels.len()].as_str();
            let novelty = Novelty::ALL[i % 3].as_str();
            let t = Instant::now();
            let (status, body) = post(shift_body(label, novelty)).await?;
            times.push(t.elapsed());
            ensure(status == 200, || format!("{label}/{novelty}: status {status} {body}"))?;
        }
        times.sort();
        let median = times[times.len() / 2];

        let (s1, b1) = post(shift_body("chair", "high")).await?;
        ensure(s1 == 200 && b1["target_label"] != "chair", || format!("valid request: {s1} {b1}"))?;
        let (s2, b2) = post(shift_body("chair", "extreme")).await?;
        ensure(s2 == 400 && b2["error_code"] == "bad_novelty", || format!("extreme: {s2} {b2}"))?;
        let (s3, b3) = post(shift_body("zzz_unknown", "low")).await?;
        ensure(s3 == 404, || format!("unknown label: {s3} {b3}"))?;

        let detail = format!(
            "median {:.2} ms over {P11_REQUESTS} requests (limit {} ms); high->200 ({}), extreme->400 bad_novelty, unknown->404",
            median.as_secs_f64() * 1e3,
            P11_MEDIAN_LIMIT.as_millis(),
            b1["target_label"].as_str().unwrap_or("?")
        );
        ensure(median < P11_MEDIAN_LIMIT, || detail.clone())?;
        Ok(detail)
    })
}

fn run(name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("[PASS] {name}: {detail} ({secs:.2}s)");
            true
        }
        Err(why) => {
            println!("[FAIL] {name}: {why} ({secs:.2}s)");
            false
        }
    }
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let artifacts = artifacts();
    let a = &artifacts;
    let results = [
        run("P1 pipeline structure", || p1(a)),
        run("P2 matrix invariants", || p2(a)),
        run("P3 k-means oracle", p3),
        run("P4 WCSS monotonicity", || p4(a)),
        run("P5 normalization arithmetic", p5),
        run("P6 fusion filter", p6),
        run("P7 tertile partition", p7),
        run("P8 cosine correctness", p8),
        run("P9 determinism", || p9(a, &rt)),
        run("P10 round trips", p10),
        run("P11 service contract", || p11(a, &rt)),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
