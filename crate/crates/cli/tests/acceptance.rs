//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line to stderr;
//! the test fails if any criterion fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use mammo_dissect::analytics::CoverageReport;
use mammo_dissect::conceptset::{ConceptSet, Task};
use mammo_dissect::exchange::load_bundle;
use mammo_dissect::labeling::label_neurons;
use mammo_dissect::pipeline::{analyze_layers, select_layers};
use mammo_dissect::simcore::{
    concept_activation_matrix, concept_conditionals, hard_wpmi, similarity_matrix, soft_wpmi, ConceptActivationMatrix,
    SimParams, SimilarityMatrix,
};
use mammo_dissect::thresholds::{encoded_set, layer_threshold};
use mammo_dissect::Matrix;
use oracle::Knobs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn table(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| gaussian(rng)).collect()).collect()
}

struct Instance {
    img: Vec<Vec<f64>>,
    txt: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    params: SimParams,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xacce_97ab);
    let n = rng.random_range(2..=32);
    let m = rng.random_range(1..=16);
    let k = rng.random_range(1..=8);
    let d = rng.random_range(2..=8);
    let img = table(&mut rng, n, d);
    let txt = table(&mut rng, m, d);
    let acts = (0..n).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect();
    let start = rng.random_range(0.5..=1.0);
    let params = SimParams {
        lambda: rng.random_range(0.0..2.0),
        top_z: rng.random_range(1..=n),
        temperature: rng.random_range(0.5..20.0),
        membership_start: start,
        membership_end: rng.random_range(0.3..=start),
        min_prob: 1e-7,
    };
    Instance { img, txt, acts, params }
}

fn knobs(p: &SimParams) -> Knobs {
    Knobs {
        lambda: p.lambda,
        z: p.top_z,
        a: p.temperature,
        start: p.membership_start,
        end: p.membership_end,
        eps: p.min_prob,
    }
}

fn matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn oracle_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let inst = instance(seed);
        let p = concept_activation_matrix(&matrix(&inst.img), &matrix(&inst.txt)).map_err(|e| e.to_string())?;
        let s = similarity_matrix(&p, &matrix(&inst.acts), &inst.params, "l").map_err(|e| e.to_string())?;
        let want = oracle::similarity(&inst.img, &inst.txt, &inst.acts, &knobs(&inst.params));
        for (k, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                worst = worst.max(rel_err(s.values.get(k, j), *w));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(worst <= 1e-10, "max relative error {worst:.3e} > 1e-10");
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("200 instances, max rel err {worst:.2e}, {secs:.2} s"))
}

fn reduction_identity() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 500..550 {
        let inst = instance(seed);
        let params = SimParams {
            membership_start: 1.0,
            membership_end: 1.0,
            ..inst.params
        };
        let p = concept_activation_matrix(&matrix(&inst.img), &matrix(&inst.txt)).map_err(|e| e.to_string())?;
        let cond = concept_conditionals(&p.values, params.temperature);
        let acts = matrix(&inst.acts);
        for k in 0..acts.cols() {
            let q = acts.column(k);
            for (s, h) in soft_wpmi(&cond, &q, &params).iter().zip(hard_wpmi(&cond, &q, &params)) {
                worst = worst.max(rel_err(*s, h));
            }
        }
    }
    ensure!(worst <= 1e-12, "max relative gap {worst:.3e} > 1e-12");
    Ok(format!("50 instances, max gap {worst:.2e}"))
}

fn random_p(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ConceptActivationMatrix {
    ConceptActivationMatrix {
        values: Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)).unwrap(),
        normalized: true,
    }
}

fn sim(p: &ConceptActivationMatrix, acts: &Matrix, params: &SimParams) -> SimilarityMatrix {
    similarity_matrix(p, acts, params, "l").unwrap()
}

fn invariance_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut shift_gap, mut perm_gap, mut lambda_gap) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(2..30);
        let m = rng.random_range(1..12);
        let z = rng.random_range(1..=n);
        let p = random_p(&mut rng, n, m);
        let acts = Matrix::from_fn(n, 3, |_, _| rng.random_range(-2.0..2.0)).unwrap();
        let params = SimParams {
            top_z: z,
            ..SimParams::default()
        };
        let base = sim(&p, &acts, &params);

        let transformed = Matrix::from_fn(n, 3, |i, k| {
            let x = acts.get(i, k);
            x * x * x + 7.0 * x
        })
        .unwrap();
        let order_kept = (0..3).all(|k| {
            let (a, b) = (acts.column(k), transformed.column(k));
            (0..n).all(|i| (0..n).all(|j| a[i].partial_cmp(&a[j]) == b[i].partial_cmp(&b[j])))
        });
        if order_kept {
            ensure!(
                sim(&p, &transformed, &params).values == base.values,
                "rank invariance is not exact"
            );
        }

        let row = rng.random_range(0..n);
        let shift = rng.random_range(-5.0..5.0);
        let shifted = ConceptActivationMatrix {
            values: Matrix::from_fn(n, m, |i, j| p.values.get(i, j) + if i == row { shift } else { 0.0 }).unwrap(),
            normalized: false,
        };
        shift_gap = shift_gap.max(max_abs_diff(&sim(&shifted, &acts, &params).values, &base.values));

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pp = ConceptActivationMatrix {
            values: p.values.select_rows(&perm),
            normalized: true,
        };
        perm_gap = perm_gap.max(max_abs_diff(
            &sim(&pp, &acts.select_rows(&perm), &params).values,
            &base.values,
        ));

        let s: Vec<Matrix> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&lambda| sim(&p, &acts, &SimParams { lambda, ..params }).values)
            .collect();
        for idx in 0..s[0].as_slice().len() {
            let (a, b, c) = (s[0].as_slice()[idx], s[1].as_slice()[idx], s[2].as_slice()[idx]);
            lambda_gap = lambda_gap.max(rel_err(c - b, b - a));
        }
    }
    ensure!(shift_gap <= 1e-9, "softmax shift gap {shift_gap:.3e}");
    ensure!(perm_gap <= 1e-9, "probe permutation gap {perm_gap:.3e}");
    ensure!(lambda_gap <= 1e-10, "lambda linearity gap {lambda_gap:.3e}");
    Ok(format!(
        "rank exact, shift {shift_gap:.1e}, permutation {perm_gap:.1e}, lambda {lambda_gap:.1e}"
    ))
}

fn threshold_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    for _ in 0..50 {
        let (k, m) = (rng.random_range(1..20), rng.random_range(1..40));
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.random_range(-400.0..10.0)).collect())
            .collect();
        let s = SimilarityMatrix {
            values: matrix(&rows),
            params: SimParams::default(),
            layer_name: "l".into(),
        };
        let tau = layer_threshold(&s).map_err(|e| e.to_string())?.tau;
        ensure!(rel_err(tau, oracle::mean(&rows)) <= 1e-12, "tau {tau} vs recount");
        let e = encoded_set(&s, tau);
        let (concepts, neurons) = oracle::recount(&rows, tau);
        ensure!(
            e.encoded_concepts.iter().copied().eq(concepts),
            "encoded concepts differ from recount"
        );
        ensure!(
            e.activated_neurons.iter().copied().eq(neurons),
            "activated neurons differ from recount"
        );
    }
    let flat = SimilarityMatrix {
        values: Matrix::new(5, 9, vec![-3.25; 45]).unwrap(),
        params: SimParams::default(),
        layer_name: "flat".into(),
    };
    let e = encoded_set(&flat, layer_threshold(&flat).unwrap().tau);
    ensure!(
        e.encoded_concepts.len() == 9 && e.activated_neurons.len() == 5,
        "inclusive boundary violated"
    );

    let rows: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..30).map(|_| rng.random_range(-50.0..0.0)).collect())
        .collect();
    let s = SimilarityMatrix {
        values: matrix(&rows),
        params: SimParams::default(),
        layer_name: "l".into(),
    };
    for _ in 0..100 {
        let (a, b): (f64, f64) = (rng.random_range(-60.0..5.0), rng.random_range(-60.0..5.0));
        let (lo, hi) = (a.min(b), a.max(b));
        let (el, eh) = (encoded_set(&s, lo), encoded_set(&s, hi));
        ensure!(
            eh.encoded_concepts.is_subset(&el.encoded_concepts),
            "encoded set grew with tau"
        );
        ensure!(
            eh.activated_neurons.is_subset(&el.activated_neurons),
            "activated set grew with tau"
        );
    }
    Ok("mean, recount, inclusive boundary, 100 monotone pairs".into())
}

fn concept_fidelity() -> Outcome {
    let c = ConceptSet::shipped();
    let (mammo, other) = c.partition_by_mammo();
    let tasks = [Task::Mass, Task::Calcification, Task::Density].map(|t| c.task_indices(t).len());
    let mut subs = (BTreeSet::new(), BTreeSet::new());
    for e in c.entries() {
        if e.is_mammography() { &mut subs.0 } else { &mut subs.1 }.insert(e.subcategory.as_str());
    }
    let broad = c.broad_category_counts().values().filter(|&&n| n > 0).count();
    let got = (
        c.len(),
        mammo.len(),
        other.len(),
        tasks,
        subs.0.len(),
        subs.1.len(),
        broad,
    );
    ensure!(got == (763, 369, 394, [73, 79, 38], 22, 4, 6), "got {got:?}");
    Ok("763 = 369 + 394; tasks 73/79/38; 22 + 4 subcategories; 6 broad categories".into())
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mammo-dissect"));
    c.env_remove("MAMMO_DISSECT_OUT");
    c
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn planted_recovery() -> Outcome {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path().join("bundle");
    cli(&["synth", "--out", s(&dir), "--planted", "10", "--noise", "low"])?;
    let bundle = load_bundle(dir.join("manifest.json")).map_err(|e| e.to_string())?;
    let planted: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(dir.join("planted.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let layers = select_layers(&bundle, &[]).map_err(|e| e.to_string())?;
    let analyses = analyze_layers(&bundle, &SimParams::default(), &layers).map_err(|e| e.to_string())?;
    let labels: Vec<_> = analyses
        .iter()
        .map(|a| label_neurons(&a.similarity, bundle.concepts()))
        .collect();
    let mut hits = 0;
    for p in &planted {
        let (layer, neuron, concept) = (
            p["layer"].as_u64().unwrap() as usize,
            p["neuron"].as_u64().unwrap() as usize,
            p["concept"].as_u64().unwrap() as usize,
        );
        if labels[layer][neuron].concept == concept {
            hits += 1;
        }
        ensure!(
            analyses[layer].encoded.encoded_concepts.contains(&concept),
            "planted concept {concept} missing from layer {layer}'s encoded set"
        );
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(!planted.is_empty(), "nothing planted");
    ensure!(hits * 100 >= planted.len() * 95, "recovered {hits}/{}", planted.len());
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!(
        "recovered {hits}/{}, all planted concepts encoded, {secs:.2} s",
        planted.len()
    ))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for (i, jobs) in ["1", "4", "1"].iter().enumerate() {
        let root = tmp.path().join(format!("run{i}"));
        let (a, b, out) = (root.join("a"), root.join("b"), root.join("out"));
        cli(&[
            "--jobs",
            jobs,
            "synth",
            "--out",
            s(&a),
            "--planted",
            "6",
            "--bundle-id",
            "a",
            "--model-id",
            "ma",
        ])?;
        cli(&[
            "--jobs",
            jobs,
            "synth",
            "--out",
            s(&b),
            "--planted",
            "6",
            "--seed",
            "2",
            "--bundle-id",
            "b",
            "--model-id",
            "mb",
        ])?;
        let ma = a.join("manifest.json");
        let mb = b.join("manifest.json");
        for cmd in ["similarities", "label", "thresholds", "coverage", "report"] {
            cli(&["--jobs", jobs, cmd, "--bundle", s(&ma), "--out", s(&out)])?;
        }
        cli(&[
            "--jobs",
            jobs,
            "compare",
            "--bundle",
            s(&ma),
            "--bundle-b",
            s(&mb),
            "--out",
            s(&out),
        ])?;
        cli(&[
            "--jobs",
            jobs,
            "neuron",
            "--bundle",
            s(&ma),
            "--id",
            "3",
            "--out",
            s(&out),
        ])?;
        runs.push(tree(&root));
    }
    let files = runs[0].len();
    let svgs = runs[0]
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .count();
    ensure!(runs[0] == runs[1], "--jobs 1 and --jobs 4 differ");
    ensure!(runs[0] == runs[2], "repeated --jobs 1 runs differ");
    Ok(format!(
        "8 commands, {files} files ({svgs} SVG) identical across --jobs 1/4/1"
    ))
}

fn performance() -> Outcome {
    let (k, n, m, d) = (2048, 4095, 763, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = Matrix::from_fn(n, d, |_, _| gaussian(&mut rng)).unwrap();
    let txt = Matrix::from_fn(m, d, |_, _| gaussian(&mut rng)).unwrap();
    let acts = Matrix::from_fn(n, k, |_, _| rng.random::<f64>()).unwrap();
    let t0 = Instant::now();
    let p = concept_activation_matrix(&img, &txt).map_err(|e| e.to_string())?;
    let s = similarity_matrix(&p, &acts, &SimParams::default(), "perf").map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    ensure!(s.values.shape() == (k, m), "shape {:?}", s.values.shape());
    ensure!(
        s.values.as_slice().iter().all(|v| v.is_finite()),
        "non-finite similarity"
    );
    ensure!(secs <= 60.0, "took {secs:.1} s");
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    Ok(format!("K={k} N={n} M={m} in {secs:.2} s on {cores} core(s)"))
}

fn coverage_dedup() -> Outcome {
    let c = ConceptSet::shipped();
    let idx = |t: &str| c.index_of(t).ok_or(format!("'{t}' not in concept set"));
    let learned = BTreeSet::from([idx("extremely dense")?, idx("amorphous calcification")?]);
    let r = CoverageReport::from_learned(learned, &c);
    for t in ["extremely", "amorphous", "mass"] {
        ensure!(r.missed.contains(&idx(t)?), "'{t}' should be missed");
    }
    ensure!(
        !r.missed_mammo_distinct.contains(&idx("extremely")?),
        "'extremely' kept"
    );
    ensure!(
        !r.missed_mammo_distinct.contains(&idx("amorphous")?),
        "'amorphous' kept"
    );
    ensure!(r.missed_mammo_distinct.contains(&idx("mass")?), "'mass' dropped");
    Ok(format!(
        "{} distinct mammography misses of {}",
        r.missed_mammo_distinct.len(),
        r.missed_mammo.len()
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence (1e-10 rel, < 5 s)", oracle_equivalence),
        ("reduction identity (1e-12)", reduction_identity),
        ("invariance suite (exact / 1e-9 / 1e-9 / 1e-10)", invariance_suite),
        ("threshold semantics (1e-12)", threshold_semantics),
        ("concept set fidelity", concept_fidelity),
        ("planted-signal recovery (>= 95%, < 10 s)", planted_recovery),
        ("determinism at any --jobs", determinism),
        ("performance K=2048 N=4095 M=763 (<= 60 s)", performance),
        ("coverage dedup", coverage_dedup),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let line = match outcome {
            Ok(detail) => format!("PASS  {name}: {detail}"),
            Err(why) => {
                failed.push(name);
                format!("FAIL  {name}: {why}")
            }
        };
        let _ = writeln!(std::io::stderr(), "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
