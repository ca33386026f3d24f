//! Acceptance criteria 1–11. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use causal_combine::alignment::{das_train, dii_forward, iia, rotation_grad_check, AlignmentSpec, DasConfig, Rotation};
use causal_combine::datagen::{arithmetic_ranges, enumerate_inputs, gen_counterfactual, InputEnumeration};
use causal_combine::evalgraph::{graph_iia, EvaluationGraph};
use causal_combine::net::{grad_check, train_net, NetConfig, SiteId, TinyNet};
use causal_combine::partition::{greedy_partition, FrontierPoint, PartitionOptions, PartitionResult, MIN_CELL};
use causal_combine::pipeline::{run_pipeline, Manifest, Run, RunConfig};
use causal_combine::scm::{
    apply_intervention, check_constructive_abstraction, int_domain, interchange_intervention, Alignment, CausalModel,
    Mechanism, ModelBuilder, Projection, Value,
};
use causal_combine::task::TaskKind;
use causal_combine::zoo::{build_zoo_model, ZooModelId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const LAMBDAS: [f64; 4] = [1.0, 0.95, 0.9, 0.8];

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ints(v: &[i64]) -> Vec<Value> {
    v.iter().map(|&x| Value::Int(x)).collect()
}

struct Nets {
    boolean: TinyNet,
    arithmetic: TinyNet,
    times: [Duration; 2],
}

fn nets() -> &'static Nets {
    static NETS: OnceLock<Nets> = OnceLock::new();
    NETS.get_or_init(|| {
        let train = |task| {
            let t = Instant::now();
            let net = train_net(task, &NetConfig::default_for(task), 0).expect("training").0;
            (net, t.elapsed())
        };
        let (boolean, tb) = train(TaskKind::Boolean);
        let (arithmetic, ta) = train(TaskKind::Arithmetic);
        Nets {
            boolean,
            arithmetic,
            times: [tb, ta],
        }
    })
}

fn c1() -> Outcome {
    let m = build_zoo_model(
        TaskKind::Arithmetic,
        ZooModelId::parse(TaskKind::Arithmetic, "M_XY").unwrap(),
    )
    .unwrap();
    let base = ints(&[4, 2, 8]);
    let o = m.solve(&base).unwrap().get("O").unwrap();
    let iv = interchange_intervention(&m, &ints(&[3, 9, 7]), &["P"]).unwrap();
    let cf = apply_intervention(&m, &iv)
        .unwrap()
        .solve(&base)
        .unwrap()
        .get("O")
        .unwrap();
    let detail = format!("base O = {o}, interchange from (3,9,7) on P gives O = {cf}");
    ensure(o == Value::Int(14), format!("{detail}; expected base O = 14"))?;
    ensure(cf == Value::Int(19), format!("{detail}; expected 19"))?;
    Ok(detail)
}

fn c2() -> Outcome {
    let a = enumerate_inputs(TaskKind::Arithmetic, None).unwrap().len();
    let r = enumerate_inputs(TaskKind::Arithmetic, Some(arithmetic_ranges(&[1, 2])))
        .unwrap()
        .len();
    let b = enumerate_inputs(TaskKind::Boolean, None).unwrap().len();
    let detail = format!("arithmetic {a}, restricted {r}, boolean {b}");
    ensure((a, r, b) == (1000, 8, 64), detail.clone())?;
    Ok(detail)
}

fn pair_count_iia(s: &[Vec<bool>], nodes: &[usize]) -> f64 {
    let m = nodes.len();
    if m < 2 {
        return 1.0;
    }
    let hits = nodes
        .iter()
        .flat_map(|&i| nodes.iter().map(move |&j| (i, j)))
        .filter(|&(i, j)| i != j && s[i][j])
        .count();
    hits as f64 / (m * (m - 1)) as f64
}

fn c3() -> Outcome {
    let edges = [
        (0, 1, 1.0),
        (0, 4, 1.0),
        (0, 6, 1.0),
        (1, 2, 1.0),
        (1, 3, 0.5),
        (2, 4, 1.0),
        (2, 6, 1.0),
        (3, 6, 1.0),
        (4, 7, 0.5),
    ];
    let g = EvaluationGraph::from_edges("G", 8, &edges).unwrap();
    ensure(g.total_weight() == 8.0, "fixture weight")?;
    ensure(
        graph_iia(&g, None) == 8.0 / 28.0,
        format!("fixture IIA {}", graph_iia(&g, None)),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let trials = 1000;
    for t in 0..trials {
        let n = rng.gen_range(0..40);
        let p = rng.gen_range(0.0..1.0);
        let s: Vec<Vec<bool>> = (0..n).map(|_| (0..n).map(|_| rng.gen_bool(p)).collect()).collect();
        let g = EvaluationGraph::from_directed("g", n, |i, j| s[i][j]);
        let mut sub: Vec<usize> = (0..n).collect();
        ensure(
            graph_iia(&g, None) == pair_count_iia(&s, &sub),
            format!("trial {t}: whole graph"),
        )?;
        sub.shuffle(&mut rng);
        sub.truncate(rng.gen_range(0..=n));
        ensure(
            graph_iia(&g, Some(&sub)) == pair_count_iia(&s, &sub),
            format!("trial {t}: subset"),
        )?;
    }
    Ok(format!(
        "8/28 fixture; {trials} random graphs match the pair-counting oracle"
    ))
}

fn max_abs_diff(a: &ndarray::Array1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c4() -> Outcome {
    let net = &nets().arithmetic;
    let e = enumerate_inputs(TaskKind::Arithmetic, None).unwrap();
    let id = ZooModelId::parse(TaskKind::Arithmetic, "M_XY").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let site = SiteId(1 + i % net.num_layers());
        let zero = AlignmentSpec::new(id, site, Rotation::random(net.width(), 0, i as u64).unwrap());
        let full = AlignmentSpec::new(id, site, Rotation::random(net.width(), net.width(), i as u64).unwrap());
        let b = e.get(rng.gen_range(0..e.len())).unwrap();
        let s = e.get(rng.gen_range(0..e.len())).unwrap();
        let fwd = net.forward_batch(&net.tokens(&[b.to_vec(), s.to_vec()]));
        worst = worst.max(max_abs_diff(&dii_forward(net, b, s, &zero).unwrap(), fwd.row(0)));
        worst = worst.max(max_abs_diff(&dii_forward(net, b, s, &full).unwrap(), fwd.row(1)));
    }
    let detail = format!("100 pairs, max |logit diff| {worst:.2e}");
    ensure(worst <= 1e-9, detail.clone())?;
    Ok(detail)
}

fn c5() -> Outcome {
    let mut parts = Vec::new();
    for (task, net, name) in [
        (TaskKind::Boolean, &nets().boolean, "M_Q"),
        (TaskKind::Arithmetic, &nets().arithmetic, "M_XY"),
    ] {
        let params = grad_check(net, 64, 5).unwrap();
        let id = ZooModelId::parse(task, name).unwrap();
        let m = build_zoo_model(task, id).unwrap();
        let data = gen_counterfactual(task, &m, 64, 5).unwrap();
        let spec = AlignmentSpec::new(
            id,
            SiteId(2),
            Rotation::random(net.width(), net.width() / 2, 5).unwrap(),
        );
        let rot = rotation_grad_check(net, &spec, &data, 64, 5).unwrap();
        ensure(
            params <= 1e-4 && rot <= 1e-4,
            format!("{task}: params {params:.2e}, R {rot:.2e}"),
        )?;
        parts.push(format!("{task} params {params:.1e} R {rot:.1e}"));
    }
    Ok(format!("64 probes each; {}", parts.join(", ")))
}

fn c6() -> Outcome {
    let n = nets();
    let mut parts = Vec::new();
    for (task, net, took) in [
        (TaskKind::Boolean, &n.boolean, n.times[0]),
        (TaskKind::Arithmetic, &n.arithmetic, n.times[1]),
    ] {
        let e = enumerate_inputs(task, None).unwrap();
        let acc = net.evaluate(&e).unwrap().0;
        ensure(acc == 1.0, format!("{task} accuracy {acc}"))?;
        ensure(took <= Duration::from_secs(300), format!("{task} took {took:?}"))?;
        let again = train_net(task, &NetConfig::default_for(task), 0).unwrap().0;
        ensure(
            again.params() == net.params(),
            format!("{task}: retraining with the same seed differs"),
        )?;
        parts.push(format!("{task} {} inputs in {:.1}s", e.len(), took.as_secs_f64()));
    }
    Ok(format!("100% accuracy, identical on retrain: {}", parts.join(", ")))
}

fn all_pairs(e: &InputEnumeration) -> Vec<(Vec<Value>, Vec<Value>)> {
    e.inputs()
        .iter()
        .flat_map(|b| e.inputs().iter().map(move |s| (b.clone(), s.clone())))
        .collect()
}

fn c7() -> Outcome {
    let mut parts = Vec::new();
    for (task, net, name, eval) in [
        (
            TaskKind::Arithmetic,
            &nets().arithmetic,
            "M_XYZ",
            enumerate_inputs(TaskKind::Arithmetic, Some(arithmetic_ranges(&[1, 2]))).unwrap(),
        ),
        (
            TaskKind::Boolean,
            &nets().boolean,
            "M_O",
            enumerate_inputs(TaskKind::Boolean, None).unwrap(),
        ),
    ] {
        let id = ZooModelId::parse(task, name).unwrap();
        let m = build_zoo_model(task, id).unwrap();
        let size = if task == TaskKind::Arithmetic { 2560 } else { 4096 };
        let train = gen_counterfactual(task, &m, size, 7).unwrap();
        let pairs = all_pairs(&eval);
        let mut scores = Vec::new();
        for site in net.sites() {
            let (spec, _) =
                das_train(net, id, site, net.width() / 2, &train, &DasConfig::default_for(task), 7).unwrap();
            let acc = iia(net, &m, &spec, &pairs).unwrap();
            ensure(
                acc >= 0.95,
                format!("{name} site {site}: IIA {acc:.3} on {} pairs", pairs.len()),
            )?;
            scores.push(format!("{acc:.3}"));
        }
        parts.push(format!("{name} [{}] on {} pairs", scores.join(", "), pairs.len()));
    }
    Ok(parts.join("; "))
}

fn small_high(name: &str, a: &str, b: &str) -> CausalModel {
    let rest = ["X", "Y", "Z"].into_iter().find(|&x| x != a && x != b).unwrap();
    ModelBuilder::new(name)
        .input("X", int_domain(1, 3))
        .input("Y", int_domain(1, 3))
        .input("Z", int_domain(1, 3))
        .intermediate("P", int_domain(2, 6), &[a, b], Mechanism::named("sum").unwrap())
        .output("O", int_domain(3, 9), &["P", rest], Mechanism::named("sum").unwrap())
        .build()
        .unwrap()
}

/// X + Y computed as a two-digit base-2 carry split (`H`, `L`), then added to Z.
fn adder_circuit() -> CausalModel {
    let int = |v: Value| v.as_int().ok_or_else(|| format!("{v} is not an integer"));
    ModelBuilder::new("adder")
        .input("X", int_domain(1, 3))
        .input("Y", int_domain(1, 3))
        .input("Z", int_domain(1, 3))
        .intermediate(
            "H",
            int_domain(1, 3),
            &["X", "Y"],
            Mechanism::from_fn("half-high", move |p| Ok(Value::Int((int(p[0])? + int(p[1])?) / 2))),
        )
        .intermediate(
            "L",
            int_domain(0, 1),
            &["X", "Y"],
            Mechanism::from_fn("half-low", move |p| Ok(Value::Int((int(p[0])? + int(p[1])?) % 2))),
        )
        .output(
            "O",
            int_domain(3, 9),
            &["H", "L", "Z"],
            Mechanism::from_fn("recombine", move |p| {
                Ok(Value::Int(2 * int(p[0])? + int(p[1])? + int(p[2])?))
            }),
        )
        .build()
        .unwrap()
}

fn adder_alignment() -> Alignment {
    let digits = Projection::from_fn(|v: &[Value]| Value::Int(2 * v[0].as_int().unwrap() + v[1].as_int().unwrap()));
    ["X", "Y", "Z", "O"]
        .into_iter()
        .fold(Alignment::new(), |a, v| a.align(v, &[v], Projection::identity()))
        .align("P", &["H", "L"], digits)
}

fn show(v: &[Value]) -> String {
    v.iter().map(Value::to_string).collect::<Vec<_>>().join(",")
}

fn c8() -> Outcome {
    let low = adder_circuit();
    let holds = check_constructive_abstraction(&low, &small_high("M_XY", "X", "Y"), &adder_alignment(), 1).unwrap();
    ensure(holds.holds, format!("M_XY rejected: {:?}", holds.counterexamples))?;
    let fails = check_constructive_abstraction(&low, &small_high("M_YZ", "Y", "Z"), &adder_alignment(), 1).unwrap();
    ensure(!fails.holds, "M_YZ accepted")?;
    let cx = fails.counterexamples.first().ok_or("no counterexample recorded")?;
    ensure(cx.expected != cx.translated, "counterexample does not differ")?;
    // the counterexample must replay on the models themselves
    let high = small_high("M_YZ", "Y", "Z");
    let targets: Vec<&str> = cx.targets.iter().map(String::as_str).collect();
    let iv = interchange_intervention(&high, &cx.source, &targets).unwrap();
    ensure(
        apply_intervention(&high, &iv)
            .unwrap()
            .solve(&cx.base)
            .unwrap()
            .values()
            == cx.expected.as_slice(),
        "replay",
    )?;
    Ok(format!(
        "M_XY holds over {} checks; M_YZ fails, e.g. base ({}) source ({}) targets {:?}",
        holds.checked,
        show(&cx.base),
        show(&cx.source),
        cx.targets
    ))
}

fn instance(seed: u64, max_n: usize) -> Vec<EvaluationGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_n);
    let k = rng.gen_range(1..=4);
    (0..k)
        .map(|gi| {
            let inside: f64 = rng.gen_range(0.7..1.0);
            let outside: f64 = rng.gen_range(0.0..0.7);
            let mut block: Vec<usize> = (0..n).collect();
            block.shuffle(&mut rng);
            block.truncate(rng.gen_range(0..=n));
            let member: BTreeSet<usize> = block.into_iter().collect();
            let s: Vec<Vec<bool>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let p = if member.contains(&i) && member.contains(&j) {
                                inside
                            } else {
                                outside
                            };
                            rng.gen_bool(p)
                        })
                        .collect()
                })
                .collect();
            EvaluationGraph::from_directed(format!("M_{gi}"), n, |i, j| s[i][j])
        })
        .collect()
}

fn feasible(graphs: &[EvaluationGraph], r: &PartitionResult) -> Result<(), String> {
    let n = graphs[0].len();
    let mut seen = vec![false; n];
    for c in &r.cells {
        let g = graphs
            .iter()
            .find(|g| g.label() == c.model_id)
            .ok_or("cell names an unknown model")?;
        let v = graph_iia(g, Some(&c.nodes));
        ensure(c.nodes.len() >= MIN_CELL, "cell below minimum size")?;
        ensure(v >= r.lambda, format!("{} cell IIA {v} below {}", c.model_id, r.lambda))?;
        for &x in &c.nodes {
            ensure(
                !std::mem::replace(&mut seen[x], true),
                format!("node {x} assigned twice"),
            )?;
        }
    }
    for &x in &r.leftover {
        ensure(
            !std::mem::replace(&mut seen[x], true),
            format!("leftover node {x} also in a cell"),
        )?;
    }
    ensure(seen.iter().all(|&s| s), "some node is neither claimed nor left over")?;
    ensure(
        r.strength.explained == n - r.leftover.len(),
        "strength does not count claimed nodes",
    )
}

fn brute_force(graphs: &[EvaluationGraph], lambda: f64) -> usize {
    let n = graphs[0].len();
    let full = (1usize << n) - 1;
    let ok: Vec<bool> = (0..=full)
        .map(|mask| {
            let nodes: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            nodes.len() >= MIN_CELL && graphs.iter().any(|g| graph_iia(g, Some(&nodes)) >= lambda)
        })
        .collect();
    let mut best = vec![0usize; full + 1];
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask & !low;
        let mut b = best[rest];
        let mut sub = rest;
        loop {
            let cell = sub | low;
            if ok[cell] {
                b = b.max(cell.count_ones() as usize + best[mask & !cell]);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        best[mask] = b;
    }
    best[full]
}

fn c9() -> Outcome {
    let opts = PartitionOptions::default();
    let (large, small) = (200u64, 200u64);
    for seed in 0..large {
        let graphs = instance(seed, 64);
        for l in LAMBDAS {
            let r = greedy_partition(&graphs, l, &opts).unwrap();
            feasible(&graphs, &r).map_err(|e| format!("seed {seed} lambda {l}: {e}"))?;
            for g in &graphs {
                let single = greedy_partition(std::slice::from_ref(g), l, &opts).unwrap();
                ensure(
                    r.strength.explained >= single.strength.explained,
                    format!("seed {seed} lambda {l}: combined below {}", g.label()),
                )?;
            }
        }
    }
    for seed in 0..small {
        let graphs = instance(10_000 + seed, 10);
        for l in LAMBDAS {
            let r = greedy_partition(&graphs, l, &opts).unwrap();
            feasible(&graphs, &r).map_err(|e| format!("small seed {seed} lambda {l}: {e}"))?;
            let opt = brute_force(&graphs, l);
            ensure(
                r.strength.explained <= opt,
                format!(
                    "small seed {seed} lambda {l}: greedy {} > optimum {opt}",
                    r.strength.explained
                ),
            )?;
        }
    }
    Ok(format!(
        "{large} instances up to 64 nodes, {small} up to 10 nodes against brute force"
    ))
}

/// Same entry point as `ccombine pipeline --task boolean`.
fn run_boolean_pipeline(dir: &Path) -> Result<Duration, String> {
    let t = Instant::now();
    run_pipeline(&RunConfig::default_for(TaskKind::Boolean), dir, false).map_err(|e| e.to_string())?;
    Ok(t.elapsed())
}

struct Runs {
    root: tempfile::TempDir,
    first: OnceLock<Result<Duration, String>>,
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| Runs {
        root: tempfile::tempdir().unwrap(),
        first: OnceLock::new(),
    })
}

fn run_dir(name: &str) -> PathBuf {
    runs().root.path().join(name)
}

fn c10() -> Outcome {
    let took = runs()
        .first
        .get_or_init(|| run_boolean_pipeline(&run_dir("a")))
        .clone()?;
    let run = Run::open(&run_dir("a")).map_err(|e| e.to_string())?;
    let (graphs, nodes) = run.load_partition_graphs().map_err(|e| e.to_string())?;
    let zoo = ZooModelId::all(TaskKind::Boolean).len();
    ensure(zoo == 13, format!("{zoo} boolean models"))?;
    // the trivial model's graph is built but never partitioned
    ensure(
        graphs.len() == zoo - 1 && nodes.is_none(),
        format!("{} partitioned graphs", graphs.len()),
    )?;
    let raw = fs::read_to_string(run_dir("a/partition/frontier.json")).map_err(|e| e.to_string())?;
    let points: Vec<FrontierPoint> = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    ensure(points.len() == LAMBDAS.len(), "frontier point count")?;
    for w in points.windows(2) {
        ensure(w[0].lambda > w[1].lambda, "lambdas not descending")?;
        ensure(
            w[1].strength >= w[0].strength,
            format!("strength drops from {} to {}", w[0].lambda, w[1].lambda),
        )?;
    }
    for p in &points {
        feasible(&graphs, &p.result).map_err(|e| format!("lambda {}: {e}", p.lambda))?;
        ensure(
            p.strength == p.result.strength.value(),
            "reported strength differs from its partition",
        )?;
        ensure(
            (p.strength == 1.0) == p.result.leftover.is_empty(),
            format!("lambda {}: strength vs leftover", p.lambda),
        )?;
    }
    let curve: Vec<String> = points
        .iter()
        .map(|p| format!("{}:{:.3}", p.lambda, p.strength))
        .collect();
    Ok(format!(
        "{} models, strength {} in {:.1}s",
        zoo,
        curve.join(" "),
        took.as_secs_f64()
    ))
}

fn hashes(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let raw = fs::read_to_string(dir.join("manifest.json")).map_err(|e| e.to_string())?;
    let m: Manifest = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    m.files
        .iter()
        .map(|f| {
            let bytes = fs::read(dir.join(&f.path)).map_err(|e| format!("{}: {e}", f.path))?;
            let h = hex::encode(Sha256::digest(&bytes));
            ensure(h == f.sha256, format!("{} does not match its manifest hash", f.path))?;
            Ok((f.path.clone(), h))
        })
        .collect()
}

fn c11() -> Outcome {
    let first = runs()
        .first
        .get_or_init(|| run_boolean_pipeline(&run_dir("a")))
        .clone()?;
    let second = run_boolean_pipeline(&run_dir("b"))?;
    let (a, b) = (hashes(&run_dir("a"))?, hashes(&run_dir("b"))?);
    let data: Vec<&(String, String)> = a
        .iter()
        .filter(|(p, _)| p.ends_with(".csv") || p.ends_with(".json"))
        .collect();
    ensure(a == b, "artifact hashes differ between runs")?;
    let ma = fs::read(run_dir("a/manifest.json")).map_err(|e| e.to_string())?;
    let mb = fs::read(run_dir("b/manifest.json")).map_err(|e| e.to_string())?;
    ensure(ma == mb, "manifests differ")?;
    ensure(
        second <= 2 * first,
        format!("second run {second:?} exceeds twice the first ({first:?})"),
    )?;
    Ok(format!(
        "{} CSV/JSON artifacts identical ({} files total), rerun {:.1}s",
        data.len(),
        a.len(),
        second.as_secs_f64()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "exact-value walkthrough", Duration::from_secs(1), c1),
        (2, "enumeration counts", Duration::from_secs(1), c2),
        (3, "graph IIA formula", Duration::from_secs(5), c3),
        (4, "DII limit identities", Duration::from_secs(10), c4),
        (5, "gradient correctness", Duration::from_secs(30), c5),
        (6, "task-perfect nets", Duration::from_secs(600), c6),
        (7, "trivial-model faithfulness", Duration::from_secs(600), c7),
        (8, "symbolic abstraction oracle", Duration::from_secs(10), c8),
        (9, "partition feasibility and dominance", Duration::from_secs(120), c9),
        (10, "frontier shape", Duration::from_secs(900), c10),
        (11, "reproducibility", Duration::from_secs(1800), c11),
    ];
    // Nets are shared by criteria 4-7; train them up front so their cost
    // lands only in criterion 6.
    nets();
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(d) if took > budget => Err(format!("{d}; took {took:.2?}, budget {budget:?}")),
            r => r,
        };
        match result {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{took:.2?}]"),
            Err(e) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {e} [{took:.2?}]");
            }
        }
    }
    println!("acceptance: {} of 11 criteria pass", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
