use std::fs;
use std::path::Path;

use causal_combine::pipeline::{run_pipeline, Manifest, Run, RunConfig};
use causal_combine::task::TaskKind;
use causal_combine::Error;
use sha2::{Digest, Sha256};

fn small_boolean() -> RunConfig {
    let mut c = RunConfig::default_for(TaskKind::Boolean);
    c.candidates = vec!["M_X".into(), "M_Q".into(), "M_O".into()];
    c.alignment.sites = vec![1, 2];
    c.alignment.k = vec![16];
    c.data.train_size = 512;
    c.data.test_size = 256;
    c
}

fn check_manifest(dir: &Path, m: &Manifest) {
    let mut on_disk = Vec::new();
    walk(dir, dir, &mut on_disk);
    on_disk.retain(|p| p != "manifest.json");
    let listed: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(listed, on_disk);
    for f in &m.files {
        let bytes = fs::read(dir.join(&f.path)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), f.sha256, "{}", f.path);
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
}

#[test]
fn boolean_run_is_complete_deterministic_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = small_boolean();
    let ma = run_pipeline(&cfg, &a, false).unwrap();
    assert_eq!(ma.graphs, 3);
    assert_eq!(ma.frontier_points, 4);
    check_manifest(&a, &ma);
    for f in [
        "config.json",
        "net/net.json",
        "alignments/iia.csv",
        "graphs/M_Q.csv",
        "graphs/M_Q.json",
        "partition/frontier.csv",
        "report/frontier.svg",
        "report/iia_table.csv",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(a.join("report/iia_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 3 * 2);
    for svg in ["report/frontier.svg", "report/iia_by_site.svg"] {
        roxmltree::Document::parse(&fs::read_to_string(a.join(svg)).unwrap()).unwrap();
    }

    let mb = run_pipeline(&cfg, &b, false).unwrap();
    assert_eq!(ma.files, mb.files);
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );

    fs::remove_file(a.join("graphs/M_X.csv")).unwrap();
    fs::remove_file(a.join("alignments/M_Q_site2_k16.json")).unwrap();
    let resumed = run_pipeline(&cfg, &a, true).unwrap();
    assert_eq!(resumed.files, ma.files);

    let mut other = cfg.clone();
    other.net_seed = 1;
    match run_pipeline(&other, &a, true) {
        Err(Error::Config(msg)) => assert!(msg.contains("different config")),
        r => panic!("{r:?}"),
    }
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut cfg = small_boolean();
    cfg.candidates.push("M_BOGUS".into());
    match run_pipeline(&cfg, &dir, false) {
        Err(Error::UnknownModel { id, .. }) => assert_eq!(id, "M_BOGUS"),
        r => panic!("{r:?}"),
    }
    assert!(!dir.exists());
}

#[test]
fn failing_stage_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_boolean();
    cfg.net.max_epochs = 1;
    match run_pipeline(&cfg, tmp.path(), false) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "train-net"),
        r => panic!("{r:?}"),
    }
    assert!(tmp.path().join("data/factual.csv").exists());
}

#[test]
fn report_on_a_partial_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run = Run::create(small_boolean(), tmp.path()).unwrap();
    let empty = run.report().unwrap();
    assert!(empty.written.is_empty());
    assert_eq!(empty.missing.len(), 2);

    run.gen_data(false).unwrap();
    run.train_net(None, false).unwrap();
    run.train_alignments(false).unwrap();
    run.eval_graphs(false).unwrap();
    let s = run.report().unwrap();
    assert_eq!(s.missing, vec!["partition/frontier.json".to_string()]);
    assert!(tmp.path().join("report/iia_table.csv").exists());
    assert!(!tmp.path().join("report/frontier.svg").exists());

    let r = run.partition(0.9, &run.config().partition.options()).unwrap();
    assert!(tmp.path().join("partition/lambda_0.9.json").exists());
    assert_eq!(r.strength.total, 64);
    let m = run.write_manifest().unwrap();
    check_manifest(tmp.path(), &m);
}

#[test]
fn arithmetic_iia_table_has_one_row_per_model_site_and_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default_for(TaskKind::Arithmetic);
    cfg.alignment.sites = vec![1, 3];
    cfg.alignment.k = vec![8, 32];
    cfg.data.train_size = 256;
    cfg.data.test_size = 128;
    cfg.graphs.sample = Some(100);
    let m = run_pipeline(&cfg, tmp.path(), false).unwrap();
    assert_eq!(m.graphs, 7);
    let table = fs::read_to_string(tmp.path().join("report/iia_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 7 * 2 * 2);
    // sampled graphs: no combined-model files
    assert!(!m.files.iter().any(|f| f.path.contains("combined_lambda")));
    let meta = fs::read_to_string(tmp.path().join("graphs/M_XY.json")).unwrap();
    assert!(meta.contains("\"nodes\""));
}
