//! End-to-end runs: configuration, the stages that write each artifact under
//! a run directory, the report, and a manifest of content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{das_train, iia_on, load_rotation, save_rotation, DasConfig, DasReport};
use crate::datagen::{
    enumerate_inputs, gen_counterfactual, read_counterfactual_csv, write_counterfactual_csv, write_factual_csv,
    CounterfactualExample, FactualExample, InputEnumeration,
};
use crate::error::{Error, Result};
use crate::evalgraph::{
    build_eval_graph, load_graph, save_graph, DegreeMode, EvaluationGraph, GraphMeta, GRAPH_FORMAT,
};
use crate::net::{load_net, save_net, train_net, NetConfig, SiteId, TinyNet, TrainReport};
use crate::partition::{
    assemble_combined, frontier, greedy_partition, FrontierPoint, PartitionOptions, PartitionResult, Strategy,
};
use crate::svg::{LinePlot, Series};
use crate::task::TaskKind;
use crate::zoo::{build_zoo_model, CombinedModelFile, ZooModelId};

pub const CONFIG_SCHEMA: &str = "ccombine-config/v1";
pub const MANIFEST_SCHEMA: &str = "ccombine-manifest/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Counterfactual pairs per model used to train its rotations.
    pub train_size: usize,
    /// Held-out counterfactual pairs per model for the IIA table.
    pub test_size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentConfig {
    pub das: DasConfig,
    pub sites: Vec<usize>,
    pub k: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    /// Evaluate a random subset of this many inputs instead of all of them.
    pub sample: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub lambdas: Vec<f64>,
    pub degree: DegreeMode,
    pub strategy: Strategy,
}

impl PartitionConfig {
    pub fn options(&self) -> PartitionOptions {
        PartitionOptions {
            degree: self.degree,
            strategy: self.strategy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub task: TaskKind,
    /// Models to align and build graphs for. The trivial model may be listed
    /// but never claims a partition cell.
    pub candidates: Vec<String>,
    pub net: NetConfig,
    pub net_seed: u64,
    pub data: DataConfig,
    pub alignment: AlignmentConfig,
    pub graphs: GraphConfig,
    pub partition: PartitionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn default_for(task: TaskKind) -> Self {
        let net = NetConfig::default_for(task);
        Self {
            schema: CONFIG_SCHEMA.to_string(),
            task,
            candidates: ZooModelId::all(task).iter().map(|m| m.to_string()).collect(),
            data: DataConfig {
                train_size: match task {
                    TaskKind::Arithmetic => 2560,
                    TaskKind::Boolean => 4096,
                },
                test_size: 1024,
                seed: 0,
            },
            alignment: AlignmentConfig {
                das: DasConfig::default_for(task),
                sites: (1..=net.layers).collect(),
                k: vec![net.hidden / 2],
                seed: 0,
            },
            net,
            net_seed: 0,
            graphs: GraphConfig { sample: None, seed: 0 },
            partition: PartitionConfig {
                lambdas: vec![1.0, 0.95, 0.9, 0.8],
                degree: DegreeMode::Weighted,
                strategy: Strategy::Portfolio,
            },
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn candidate_ids(&self) -> Result<Vec<ZooModelId>> {
        self.candidates
            .iter()
            .map(|c| ZooModelId::parse(self.task, c))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported schema `{}` (expected `{CONFIG_SCHEMA}`)",
                self.schema
            )));
        }
        let ids = self.candidate_ids()?;
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(Error::Config(format!("candidate {id} is listed twice")));
            }
        }
        if !ids.iter().any(|m| !m.is_trivial()) {
            return Err(Error::Config("no non-trivial candidate model".into()));
        }
        self.net.validate()?;
        self.alignment.das.validate()?;
        if self.alignment.sites.is_empty() || self.alignment.k.is_empty() {
            return Err(Error::Config("alignment sites and k lists must be non-empty".into()));
        }
        if let Some(&s) = self.alignment.sites.iter().find(|&&s| s == 0 || s > self.net.layers) {
            return Err(Error::Config(format!("site {s} is outside 1..={}", self.net.layers)));
        }
        if let Some(&k) = self.alignment.k.iter().find(|&&k| k > self.net.hidden) {
            return Err(Error::Config(format!(
                "k = {k} exceeds the hidden width {}",
                self.net.hidden
            )));
        }
        if self.data.train_size == 0 || self.data.test_size == 0 {
            return Err(Error::Config("dataset sizes must be positive".into()));
        }
        if self.graphs.sample.is_some_and(|m| m < 2) {
            return Err(Error::Config("graph sample must have at least two inputs".into()));
        }
        if self.partition.lambdas.is_empty() {
            return Err(Error::Config("lambda list is empty".into()));
        }
        if let Some(l) = self.partition.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("threshold {l} is outside [0, 1]")));
        }
        Ok(())
    }

    /// The config as stored inside a run directory, without its location.
    fn stored(&self) -> Self {
        Self {
            output_dir: None,
            ..self.clone()
        }
    }
}

/// Seed for one stochastic job, derived from a config seed and a job tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// One row of the IIA table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IiaRow {
    pub model: String,
    pub site: usize,
    pub k: usize,
    pub train_iia: f64,
    pub test_iia: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleFrontierRow {
    pub model: String,
    pub lambda: f64,
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetRecord {
    pub seed: u64,
    pub report: TrainReport,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub task: TaskKind,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub graphs: usize,
    pub frontier_points: usize,
    pub files: Vec<FileEntry>,
}

/// Files written by `report` and the artifacts it could not find.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportSummary {
    pub written: Vec<PathBuf>,
    pub missing: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(parent) => fs::create_dir_all(parent).map_err(|e| Error::io(parent, e)),
        None => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_file(path, &bytes)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(f)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn staged<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: stage.to_string(),
        source: Box::new(e),
    })
}

/// A run directory and its configuration.
#[derive(Clone, Debug)]
pub struct Run {
    dir: PathBuf,
    config: RunConfig,
}

impl Run {
    /// Validates `config`, then creates `dir` and writes `config.json`.
    pub fn create(config: RunConfig, dir: &Path) -> Result<Self> {
        config.validate()?;
        let run = Self {
            dir: dir.to_path_buf(),
            config: config.stored(),
        };
        write_file(&run.config_path(), run.config.to_json().as_bytes())?;
        Ok(run)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let config = RunConfig::load(&dir.join("config.json"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn task(&self) -> TaskKind {
        self.config.task
    }

    pub fn config_path(&self) -> PathBuf {
        self.dir.join("config.json")
    }

    pub fn net_path(&self) -> PathBuf {
        self.dir.join("net").join("net.json")
    }

    pub fn data_path(&self, id: ZooModelId, split: &str) -> PathBuf {
        self.dir.join("data").join(format!("{id}_{split}.csv"))
    }

    pub fn rotation_path(&self, id: ZooModelId, site: usize, k: usize) -> PathBuf {
        self.dir.join("alignments").join(format!("{id}_site{site}_k{k}.json"))
    }

    pub fn iia_path(&self) -> PathBuf {
        self.dir.join("alignments").join("iia.csv")
    }

    pub fn graph_dir(&self) -> PathBuf {
        self.dir.join("graphs")
    }

    pub fn partition_dir(&self) -> PathBuf {
        self.dir.join("partition")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.dir.join("report")
    }

    fn enumeration(&self) -> Result<InputEnumeration> {
        enumerate_inputs(self.task(), None)
    }

    /// Factual table of the full enumeration and train/test counterfactual
    /// datasets for every candidate.
    pub fn gen_data(&self, resume: bool) -> Result<()> {
        let e = self.enumeration()?;
        let factual = self.dir.join("data").join("factual.csv");
        if !(resume && factual.exists()) {
            let rows = e
                .inputs()
                .iter()
                .map(|input| {
                    Ok(FactualExample {
                        label: self.task().ground_truth(input)?,
                        input: input.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut buf = Vec::new();
            write_factual_csv(self.task(), &rows, &mut buf)?;
            write_file(&factual, &buf)?;
        }
        let d = &self.config.data;
        for id in self.config.candidate_ids()? {
            let model = build_zoo_model(self.task(), id)?;
            for (split, n) in [("train", d.train_size), ("test", d.test_size)] {
                let path = self.data_path(id, split);
                if resume && path.exists() {
                    continue;
                }
                let rows = gen_counterfactual(self.task(), &model, n, derive_seed(d.seed, &format!("{split}/{id}")))?;
                let mut buf = Vec::new();
                write_counterfactual_csv(self.task(), &rows, &mut buf)?;
                write_file(&path, &buf)?;
            }
        }
        info!("data written under {}", self.dir.join("data").display());
        Ok(())
    }

    fn read_data(&self, id: ZooModelId, split: &str) -> Result<Vec<CounterfactualExample>> {
        let path = self.data_path(id, split);
        let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        read_counterfactual_csv(self.task(), f)
    }

    /// Trains the net with `seed` (the config's net seed if `None`).
    pub fn train_net(&self, seed: Option<u64>, resume: bool) -> Result<NetRecord> {
        let record_path = self.dir.join("net").join("train_report.json");
        if resume && self.net_path().exists() && record_path.exists() {
            return read_json(&record_path);
        }
        let seed = seed.unwrap_or(self.config.net_seed);
        let (net, report) = train_net(self.task(), &self.config.net, seed)?;
        info!(
            "net trained: {} epochs, accuracy {:.4}, loss {:.5}",
            report.epochs, report.accuracy, report.final_loss
        );
        ensure_parent(&self.net_path())?;
        save_net(&net, &self.net_path())?;
        let record = NetRecord { seed, report };
        write_json(&record_path, &record)?;
        Ok(record)
    }

    pub fn load_net(&self) -> Result<TinyNet> {
        load_net(&self.net_path())
    }

    /// Trains one rotation and evaluates it on the held-out pairs.
    pub fn train_alignment(
        &self,
        net: &TinyNet,
        id: ZooModelId,
        site: usize,
        k: usize,
        seed: Option<u64>,
    ) -> Result<IiaRow> {
        let train = self.read_data(id, "train")?;
        let test = self.read_data(id, "test")?;
        let seed = seed.unwrap_or_else(|| derive_seed(self.config.alignment.seed, &format!("das/{id}/{site}/{k}")));
        let (spec, report) = das_train(net, id, SiteId(site), k, &train, &self.config.alignment.das, seed)?;
        let test_iia = iia_on(net, &spec, &test)?;
        let path = self.rotation_path(id, site, k);
        ensure_parent(&path)?;
        save_rotation(&spec, Some(report.clone()), &path)?;
        Ok(IiaRow {
            model: id.to_string(),
            site,
            k,
            train_iia: report.train_iia,
            test_iia,
        })
    }

    fn evaluate_rotation(&self, net: &TinyNet, id: ZooModelId, site: usize, k: usize) -> Result<IiaRow> {
        let (spec, report) = load_rotation(&self.rotation_path(id, site, k))?;
        let test = self.read_data(id, "test")?;
        Ok(IiaRow {
            model: id.to_string(),
            site,
            k,
            train_iia: report.map_or(f64::NAN, |r: DasReport| r.train_iia),
            test_iia: iia_on(net, &spec, &test)?,
        })
    }

    /// Every candidate × site × k rotation, then the IIA table.
    pub fn train_alignments(&self, resume: bool) -> Result<Vec<IiaRow>> {
        let net = self.load_net()?;
        let mut jobs = Vec::new();
        for id in self.config.candidate_ids()? {
            for &site in &self.config.alignment.sites {
                for &k in &self.config.alignment.k {
                    jobs.push((id, site, k));
                }
            }
        }
        let rows = jobs
            .par_iter()
            .map(|&(id, site, k)| {
                if resume && self.rotation_path(id, site, k).exists() {
                    self.evaluate_rotation(&net, id, site, k)
                } else {
                    self.train_alignment(&net, id, site, k, None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for r in &rows {
            info!("{} site {} k {}: test IIA {:.4}", r.model, r.site, r.k, r.test_iia);
        }
        write_rows(&self.iia_path(), &rows)?;
        Ok(rows)
    }

    /// Replaces the table row with the same model, site and k, or appends.
    pub fn record_iia(&self, row: IiaRow) -> Result<()> {
        let mut rows = if self.iia_path().exists() {
            self.read_iia_table()?
        } else {
            Vec::new()
        };
        match rows
            .iter_mut()
            .find(|r| r.model == row.model && r.site == row.site && r.k == row.k)
        {
            Some(r) => *r = row,
            None => rows.push(row),
        }
        write_rows(&self.iia_path(), &rows)
    }

    pub fn read_iia_table(&self) -> Result<Vec<IiaRow>> {
        read_rows(&self.iia_path())
    }

    /// Site and rank with the best held-out IIA for `id`; ties go to the
    /// earlier row of the table.
    pub fn best_alignment(&self, id: ZooModelId) -> Result<(usize, usize)> {
        let rows = self.read_iia_table()?;
        let mut best: Option<&IiaRow> = None;
        for r in rows.iter().filter(|r| r.model == id.as_str()) {
            if best.is_none_or(|b| r.test_iia > b.test_iia) {
                best = Some(r);
            }
        }
        best.map(|r| (r.site, r.k))
            .ok_or_else(|| Error::Config(format!("no trained alignment for {id}")))
    }

    /// Builds and saves the evaluation graph of `id` at `choice` (the best
    /// alignment if `None`).
    pub fn eval_graph(
        &self,
        net: &TinyNet,
        id: ZooModelId,
        choice: Option<(usize, usize)>,
        sample: Option<usize>,
    ) -> Result<GraphMeta> {
        let (site, k) = match choice {
            Some(c) => c,
            None => self.best_alignment(id)?,
        };
        let (spec, _) = load_rotation(&self.rotation_path(id, site, k))?;
        let e = self.enumeration()?;
        let model = build_zoo_model(self.task(), id)?;
        let seed = self.config.graphs.seed;
        let sample = sample.or(self.config.graphs.sample).map(|m| (m, seed));
        let (g, nodes) = build_eval_graph(net, &model, &spec, &e, sample)?;
        let meta = GraphMeta {
            format: GRAPH_FORMAT.to_string(),
            task: self.task(),
            model_id: id.to_string(),
            site,
            k,
            seed,
            enumeration_hash: e.hash(),
            num_nodes: g.len(),
            nodes: (nodes.len() < e.len()).then_some(nodes),
        };
        fs::create_dir_all(self.graph_dir()).map_err(|e| Error::io(self.graph_dir(), e))?;
        save_graph(&g, &meta, &self.graph_dir(), id.as_str())?;
        Ok(meta)
    }

    pub fn eval_graphs(&self, resume: bool) -> Result<Vec<GraphMeta>> {
        let net = self.load_net()?;
        let mut out = Vec::new();
        for id in self.config.candidate_ids()? {
            let done = self.graph_dir().join(format!("{id}.json"));
            if resume && done.exists() && self.graph_dir().join(format!("{id}.csv")).exists() {
                out.push(load_graph(&self.graph_dir(), id.as_str())?.1);
            } else {
                out.push(self.eval_graph(&net, id, None, None)?);
            }
        }
        Ok(out)
    }

    /// Graphs of the non-trivial candidates, in candidate order.
    pub fn load_partition_graphs(&self) -> Result<(Vec<EvaluationGraph>, Option<Vec<usize>>)> {
        let mut graphs = Vec::new();
        let mut nodes: Option<Option<Vec<usize>>> = None;
        for id in self.config.candidate_ids()? {
            if id.is_trivial() {
                continue;
            }
            let (g, meta) = load_graph(&self.graph_dir(), id.as_str())?;
            match &nodes {
                None => nodes = Some(meta.nodes),
                Some(n) if *n != meta.nodes => {
                    return Err(Error::MismatchedInputs(format!("graph {id} covers different inputs")));
                }
                _ => {}
            }
            graphs.push(g);
        }
        Ok((graphs, nodes.flatten()))
    }

    /// Relabels graph-local node indices as enumeration ids.
    fn relabel(result: &mut PartitionResult, nodes: &Option<Vec<usize>>) {
        if let Some(ns) = nodes {
            for c in &mut result.cells {
                c.nodes.iter_mut().for_each(|x| *x = ns[*x]);
            }
            result.leftover.iter_mut().for_each(|x| *x = ns[*x]);
        }
    }

    /// Partition at one threshold, saved as `partition/lambda_<λ>.json`.
    pub fn partition(&self, lambda: f64, opts: &PartitionOptions) -> Result<PartitionResult> {
        let (graphs, nodes) = self.load_partition_graphs()?;
        let mut r = greedy_partition(&graphs, lambda, opts)?;
        Self::relabel(&mut r, &nodes);
        write_json(&self.partition_dir().join(format!("lambda_{lambda}.json")), &r)?;
        Ok(r)
    }

    /// Frontier over the configured thresholds (or `lambdas`), plus the
    /// frontier of each candidate alone and the combined model per point.
    pub fn frontier(&self, lambdas: Option<&[f64]>, opts: Option<PartitionOptions>) -> Result<Vec<FrontierPoint>> {
        let lambdas = lambdas.unwrap_or(&self.config.partition.lambdas);
        let opts = opts.unwrap_or_else(|| self.config.partition.options());
        let (graphs, nodes) = self.load_partition_graphs()?;
        let mut points = frontier(&graphs, lambdas, &opts)?;
        for p in &mut points {
            Self::relabel(&mut p.result, &nodes);
        }
        let dir = self.partition_dir();
        write_json(&dir.join("frontier.json"), &points)?;
        let mut buf = Vec::new();
        crate::partition::write_frontier_csv(&points, &mut buf)?;
        write_file(&dir.join("frontier.csv"), &buf)?;

        let mut singles = Vec::new();
        for g in &graphs {
            for p in frontier(std::slice::from_ref(g), lambdas, &opts)? {
                singles.push(SingleFrontierRow {
                    model: g.label().to_string(),
                    lambda: p.lambda,
                    strength: p.strength,
                });
            }
        }
        write_rows(&dir.join("singles.csv"), &singles)?;

        if nodes.is_none() {
            let e = self.enumeration()?;
            for p in &points {
                let cm = assemble_combined(&p.result, &e)?;
                write_json(
                    &dir.join(format!("combined_lambda_{}.json", p.lambda)),
                    &CombinedModelFile::from_combined(&cm, &e),
                )?;
            }
        }
        for p in &points {
            info!("lambda {}: strength {:.4} with {:?}", p.lambda, p.strength, p.model_set);
        }
        Ok(points)
    }

    /// IIA table, frontier table and plots from whatever artifacts exist.
    pub fn report(&self) -> Result<ReportSummary> {
        let out = self.report_dir();
        let mut summary = ReportSummary::default();
        match self.read_iia_table() {
            Ok(rows) => {
                let table: Vec<_> = rows
                    .iter()
                    .map(|r| ReportIiaRow {
                        model: r.model.clone(),
                        site: r.site,
                        k: r.k,
                        iia: r.test_iia,
                    })
                    .collect();
                let p = out.join("iia_table.csv");
                write_rows(&p, &table)?;
                summary.written.push(p);
                let p = out.join("iia_by_site.svg");
                write_file(&p, iia_plot(self.task(), &rows).to_svg().as_bytes())?;
                summary.written.push(p);
            }
            Err(_) => summary.missing.push("alignments/iia.csv".into()),
        }
        let frontier_path = self.partition_dir().join("frontier.json");
        match read_json::<Vec<FrontierPoint>>(&frontier_path) {
            Ok(points) => {
                let mut buf = Vec::new();
                crate::partition::write_frontier_csv(&points, &mut buf)?;
                let p = out.join("frontier.csv");
                write_file(&p, &buf)?;
                summary.written.push(p);
                let singles: Vec<SingleFrontierRow> = match read_rows(&self.partition_dir().join("singles.csv")) {
                    Ok(s) => s,
                    Err(_) => {
                        summary.missing.push("partition/singles.csv".into());
                        Vec::new()
                    }
                };
                let p = out.join("frontier.svg");
                write_file(&p, frontier_plot(self.task(), &points, &singles).to_svg().as_bytes())?;
                summary.written.push(p);
            }
            Err(_) => summary.missing.push("partition/frontier.json".into()),
        }
        for m in &summary.missing {
            warn!("report: missing {m}");
        }
        Ok(summary)
    }

    /// Lists every file under the run directory with its hash.
    pub fn write_manifest(&self) -> Result<Manifest> {
        let mut files = Vec::new();
        collect_files(&self.dir, &self.dir, &mut files)?;
        files.retain(|f| f.path != "manifest.json");
        let graphs = files
            .iter()
            .filter(|f| f.path.starts_with("graphs/") && f.path.ends_with(".csv"))
            .count();
        let frontier_points = read_json::<Vec<FrontierPoint>>(&self.partition_dir().join("frontier.json"))
            .map(|p| p.len())
            .unwrap_or(0);
        let c = &self.config;
        let seeds = BTreeMap::from([
            ("net".to_string(), c.net_seed),
            ("data".to_string(), c.data.seed),
            ("alignment".to_string(), c.alignment.seed),
            ("graphs".to_string(), c.graphs.seed),
        ]);
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            task: c.task,
            config_sha256: sha256_hex(c.to_json().as_bytes()),
            seeds,
            graphs,
            frontier_points,
            files,
        };
        write_json(&self.dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

#[derive(Serialize)]
struct ReportIiaRow {
    model: String,
    site: usize,
    k: usize,
    iia: f64,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let rel: Vec<String> = path
                .strip_prefix(root)
                .expect("walked from root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            out.push(FileEntry {
                path: rel.join("/"),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
    }
    Ok(())
}

fn iia_plot(task: TaskKind, rows: &[IiaRow]) -> LinePlot {
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let max_site = rows.iter().map(|r| r.site).max().unwrap_or(1);
    let series = models
        .iter()
        .map(|&m| {
            let mut best: BTreeMap<usize, f64> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.model == m) {
                let e = best.entry(r.site).or_insert(f64::NEG_INFINITY);
                *e = e.max(r.test_iia);
            }
            Series {
                name: m.to_string(),
                points: best.into_iter().map(|(s, v)| (s as f64, v)).collect(),
                emphasized: false,
            }
        })
        .collect();
    LinePlot {
        title: format!("{task}: held-out IIA by site"),
        x_label: "site (hidden layer)".into(),
        y_label: "IIA".into(),
        x_range: (1.0, max_site.max(2) as f64),
        y_range: (0.0, 1.0),
        series,
    }
}

fn frontier_plot(task: TaskKind, points: &[FrontierPoint], singles: &[SingleFrontierRow]) -> LinePlot {
    let mut series = vec![Series {
        name: "combined".into(),
        points: points.iter().map(|p| (p.lambda, p.strength)).collect(),
        emphasized: true,
    }];
    let mut models: Vec<&str> = Vec::new();
    for s in singles {
        if !models.contains(&s.model.as_str()) {
            models.push(&s.model);
        }
    }
    for m in models {
        series.push(Series {
            name: m.to_string(),
            points: singles
                .iter()
                .filter(|s| s.model == m)
                .map(|s| (s.lambda, s.strength))
                .collect(),
            emphasized: false,
        });
    }
    let lo = points
        .iter()
        .map(|p| p.lambda)
        .chain(singles.iter().map(|s| s.lambda))
        .fold(1.0f64, f64::min);
    LinePlot {
        title: format!("{task}: strength vs faithfulness"),
        x_label: "faithfulness threshold".into(),
        y_label: "strength".into(),
        x_range: (lo.min(0.95), 1.0),
        y_range: (0.0, 1.0),
        series,
    }
}

/// Runs every stage in order and writes the manifest. With `resume`, stages
/// whose artifacts already exist are skipped; the stored config must match.
pub fn run_pipeline(config: &RunConfig, dir: &Path, resume: bool) -> Result<Manifest> {
    config.validate()?;
    let existing = dir.join("config.json");
    if resume && existing.exists() {
        let stored = RunConfig::load(&existing)?;
        if stored != config.stored() {
            return Err(Error::Config(format!(
                "{} holds a different config; resume needs the same one",
                existing.display()
            )));
        }
    }
    let run = Run::create(config.clone(), dir)?;
    staged("gen-data", run.gen_data(resume))?;
    staged("train-net", run.train_net(None, resume))?;
    staged("train-alignment", run.train_alignments(resume))?;
    staged("eval-graph", run.eval_graphs(resume))?;
    staged("frontier", run.frontier(None, None))?;
    staged("report", run.report())?;
    staged("manifest", run.write_manifest())
}
