//! Evaluation graphs: one node per input, edge weight 1 when the interchange
//! succeeds in both directions between two inputs and 0.5 when it succeeds in
//! only one.

use std::io::{Read, Write};
use std::path::Path;

use log::info;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentSpec, DiiEvaluator};
use crate::datagen::{CounterfactualTable, InputEnumeration};
use crate::error::{Error, Result};
use crate::net::TinyNet;
use crate::scm::CausalModel;
use crate::task::TaskKind;

/// Metadata written next to a graph's edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub format: String,
    pub task: TaskKind,
    pub model_id: String,
    pub site: usize,
    pub k: usize,
    pub seed: u64,
    pub enumeration_hash: String,
    pub num_nodes: usize,
    /// Enumeration ids of the nodes when the graph covers a sample only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<usize>>,
}

pub const GRAPH_FORMAT: &str = "evaluation-graph/v1";

/// Undirected graph with weights in {0, 0.5, 1}, stored densely as counts of
/// successful directions (0, 1 or 2).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationGraph {
    label: String,
    n: usize,
    halves: Vec<u8>,
}

impl EvaluationGraph {
    pub fn empty(label: impl Into<String>, n: usize) -> Self {
        Self {
            label: label.into(),
            n,
            halves: vec![0; n * n],
        }
    }

    /// Graph from directed successes: `success(i, j)` is whether the
    /// interchange with base `i` and source `j` succeeds.
    pub fn from_directed(label: impl Into<String>, n: usize, success: impl Fn(usize, usize) -> bool) -> Self {
        let mut g = Self::empty(label, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let h = success(i, j) as u8 + success(j, i) as u8;
                g.halves[i * n + j] = h;
                g.halves[j * n + i] = h;
            }
        }
        g
    }

    /// Graph from `(u, v, w)` triples with `w` in {0.5, 1}.
    pub fn from_edges(label: impl Into<String>, n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Self::empty(label, n);
        for &(u, v, w) in edges {
            g.set_weight(u, v, w)?;
        }
        Ok(g)
    }

    pub fn set_weight(&mut self, u: usize, v: usize, w: f64) -> Result<()> {
        if u == v || u >= self.n || v >= self.n {
            return Err(Error::Format(format!(
                "invalid edge ({u}, {v}) in a graph of {} nodes",
                self.n
            )));
        }
        let h = if w == 1.0 {
            2
        } else if w == 0.5 {
            1
        } else if w == 0.0 {
            0
        } else {
            return Err(Error::Format(format!("edge weight {w} is not 0, 0.5 or 1")));
        };
        self.halves[u * self.n + v] = h;
        self.halves[v * self.n + u] = h;
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Weight times two, so sums stay integral.
    pub fn halves(&self, u: usize, v: usize) -> u8 {
        self.halves[u * self.n + v]
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.halves(u, v) as f64 / 2.0
    }

    /// Edges with `u < v` and nonzero weight, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |u| {
            ((u + 1)..self.n).filter_map(move |v| {
                let h = self.halves(u, v);
                (h > 0).then(|| (u, v, h as f64 / 2.0))
            })
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|e| e.2).sum()
    }

    pub fn row(&self, u: usize) -> &[u8] {
        &self.halves[u * self.n..(u + 1) * self.n]
    }
}

/// `2 Σ w / (m (m - 1))` over the edges inside `subset` (the whole graph if
/// `None`); subsets with fewer than two nodes give 1.
pub fn graph_iia(g: &EvaluationGraph, subset: Option<&[usize]>) -> f64 {
    let all: Vec<usize>;
    let nodes = match subset {
        Some(s) => s,
        None => {
            all = (0..g.len()).collect();
            &all
        }
    };
    let m = nodes.len();
    if m < 2 {
        return 1.0;
    }
    let mut halves: u64 = 0;
    for (a, &u) in nodes.iter().enumerate() {
        for &v in &nodes[a + 1..] {
            halves += g.halves(u, v) as u64;
        }
    }
    iia_from_halves(halves, m)
}

/// IIA of a node set with `halves` total doubled weight and `m` nodes.
pub fn iia_from_halves(halves: u64, m: usize) -> f64 {
    if m < 2 {
        return 1.0;
    }
    halves as f64 / (m as f64 * (m as f64 - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    /// Sum of incident edge weights.
    #[default]
    Weighted,
    /// Number of incident edges.
    Unweighted,
}

impl std::str::FromStr for DegreeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(DegreeMode::Weighted),
            "unweighted" => Ok(DegreeMode::Unweighted),
            other => Err(Error::Config(format!("unknown degree mode `{other}`"))),
        }
    }
}

/// Degrees inside `subset` (the whole graph if `None`), as `(node, degree)`
/// pairs in the order of the subset.
pub fn node_degrees(g: &EvaluationGraph, subset: Option<&[usize]>, mode: DegreeMode) -> Vec<(usize, f64)> {
    let all: Vec<usize>;
    let nodes = match subset {
        Some(s) => s,
        None => {
            all = (0..g.len()).collect();
            &all
        }
    };
    nodes
        .iter()
        .map(|&u| {
            let d: u64 = nodes
                .iter()
                .map(|&v| match mode {
                    DegreeMode::Weighted => g.halves(u, v) as u64,
                    DegreeMode::Unweighted => (g.halves(u, v) > 0) as u64 * 2,
                })
                .sum();
            (u, d as f64 / 2.0)
        })
        .collect()
}

/// Nodes sorted by descending degree, ties by ascending node index.
pub fn degree_order(g: &EvaluationGraph, subset: Option<&[usize]>, mode: DegreeMode) -> Vec<usize> {
    let mut d = node_degrees(g, subset, mode);
    d.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    d.into_iter().map(|(u, _)| u).collect()
}

/// Evaluates every ordered pair of distinct nodes (or of `sample` random
/// nodes) and builds the graph. Node `i` of the result is enumeration id
/// `nodes[i]`.
pub fn build_eval_graph(
    net: &TinyNet,
    high_model: &CausalModel,
    spec: &AlignmentSpec,
    enumeration: &InputEnumeration,
    sample_nodes: Option<(usize, u64)>,
) -> Result<(EvaluationGraph, Vec<usize>)> {
    if enumeration.task() != net.task() || spec.model_id.task() != net.task() {
        return Err(Error::MismatchedInputs(format!(
            "enumeration is over {}, net solves {}",
            enumeration.task(),
            net.task()
        )));
    }
    let task = net.task();
    let table = CounterfactualTable::new(high_model, enumeration)?;
    let eval = DiiEvaluator::new(net, spec, enumeration)?;
    let nodes: Vec<usize> = match sample_nodes {
        Some((m, seed)) if m < enumeration.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = sample(&mut rng, enumeration.len(), m).into_vec();
            s.sort_unstable();
            s
        }
        _ => (0..enumeration.len()).collect(),
    };
    let n = nodes.len();
    let success: Vec<Vec<bool>> = nodes
        .par_iter()
        .map(|&b| {
            let pred = eval.predict(b, &nodes);
            nodes
                .iter()
                .zip(pred)
                .map(|(&s, p)| task.class_of(table.expected(b, s)) == Some(p))
                .collect()
        })
        .collect();
    let g = EvaluationGraph::from_directed(spec.model_id.to_string(), n, |i, j| success[i][j]);
    info!(
        "graph {} site {}: {} nodes, IIA {:.4}",
        spec.model_id,
        spec.site,
        n,
        graph_iia(&g, None)
    );
    Ok((g, nodes))
}

/// Writes `u,v,w` rows (u < v, absent edges omitted). Node labels are
/// `nodes[i]` when given.
pub fn write_graph_csv<W: Write>(g: &EvaluationGraph, nodes: Option<&[usize]>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["u", "v", "w"])?;
    let name = |i: usize| nodes.map_or(i, |n| n[i]).to_string();
    for (u, v, wt) in g.edges() {
        let ws = if wt == 1.0 { "1" } else { "0.5" };
        w.write_record([name(u), name(v), ws.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<graph csv>", e))?;
    Ok(())
}

/// Reads an edge list for a graph of `n` nodes. Node labels in the file are
/// mapped through `nodes` when given.
pub fn read_graph_csv<R: Read>(label: &str, n: usize, nodes: Option<&[usize]>, input: R) -> Result<EvaluationGraph> {
    let mut r = csv::Reader::from_reader(input);
    let mut g = EvaluationGraph::empty(label, n);
    let local = |id: usize| -> Result<usize> {
        match nodes {
            Some(ns) => ns
                .binary_search(&id)
                .map_err(|_| Error::Format(format!("node {id} is not in the header's node list"))),
            None => Ok(id),
        }
    };
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Format(format!("expected u,v,w but got {} fields", rec.len())));
        }
        let parse = |i: usize| -> Result<usize> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad node id `{}`", &rec[i])))
        };
        let (u, v) = (local(parse(0)?)?, local(parse(1)?)?);
        if u >= v {
            return Err(Error::Format(format!("edge ({u}, {v}) must satisfy u < v")));
        }
        let w: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad weight `{}`", &rec[2])))?;
        if w != 0.5 && w != 1.0 {
            return Err(Error::Format(format!("edge weight {w} is not 0.5 or 1")));
        }
        g.set_weight(u, v, w)?;
    }
    Ok(g)
}

/// Saves `<stem>.csv` and `<stem>.json`.
pub fn save_graph(g: &EvaluationGraph, meta: &GraphMeta, dir: &Path, stem: &str) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_graph_csv(g, meta.nodes.as_deref(), std::io::BufWriter::new(f))?;
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(meta)?;
    std::fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))
}

pub fn load_graph(dir: &Path, stem: &str) -> Result<(EvaluationGraph, GraphMeta)> {
    let json_path = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let meta: GraphMeta = serde_json::from_str(&text)?;
    if meta.format != GRAPH_FORMAT {
        return Err(Error::Format(format!("unsupported graph format `{}`", meta.format)));
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    let f = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let g = read_graph_csv(&meta.model_id, meta.num_nodes, meta.nodes.as_deref(), f)?;
    Ok((g, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Eight nodes, total weight 8, node 1 of highest degree (1-based labels).
    pub(crate) fn walkthrough_gj() -> EvaluationGraph {
        let e = [
            (1, 2, 1.0),
            (1, 5, 1.0),
            (1, 7, 1.0),
            (2, 3, 1.0),
            (2, 4, 0.5),
            (3, 5, 1.0),
            (3, 7, 1.0),
            (4, 7, 1.0),
            (5, 8, 0.5),
        ];
        let e: Vec<_> = e.iter().map(|&(u, v, w)| (u - 1, v - 1, w)).collect();
        EvaluationGraph::from_edges("G_j", 8, &e).unwrap()
    }

    #[test]
    fn eight_over_twenty_eight() {
        let g = walkthrough_gj();
        assert_eq!(g.total_weight(), 8.0);
        assert_eq!(graph_iia(&g, None), 8.0 / 28.0);
        assert_eq!(degree_order(&g, None, DegreeMode::Weighted)[0], 0);
    }

    #[test]
    fn degrees() {
        let g = EvaluationGraph::from_edges("g", 4, &[(0, 1, 1.0), (0, 2, 0.5)]).unwrap();
        let d = node_degrees(&g, None, DegreeMode::Weighted);
        assert_eq!(d, vec![(0, 1.5), (1, 1.0), (2, 0.5), (3, 0.0)]);
        let d = node_degrees(&g, None, DegreeMode::Unweighted);
        assert_eq!(d[0], (0, 2.0));
        assert_eq!(
            node_degrees(&g, Some(&[1, 2]), DegreeMode::Weighted),
            vec![(1, 0.0), (2, 0.0)]
        );
        // ties go to the smaller index
        assert_eq!(degree_order(&g, None, DegreeMode::Unweighted), vec![0, 1, 2, 3]);
    }

    #[test]
    fn conventions() {
        let g = EvaluationGraph::from_directed("k", 5, |_, _| true);
        assert_eq!(graph_iia(&g, None), 1.0);
        assert_eq!(graph_iia(&g, Some(&[])), 1.0);
        assert_eq!(graph_iia(&g, Some(&[3])), 1.0);
        let half = EvaluationGraph::from_directed("h", 3, |i, j| i < j);
        assert!(half.edges().all(|e| e.2 == 0.5));
        assert_eq!(graph_iia(&half, None), 0.5);
        assert!(EvaluationGraph::from_edges("x", 2, &[(0, 0, 1.0)]).is_err());
        assert!(EvaluationGraph::from_edges("x", 2, &[(0, 1, 0.3)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = walkthrough_gj();
        let mut buf = Vec::new();
        write_graph_csv(&g, None, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("u,v,w\n0,1,1\n"));
        assert!(text.contains("1,3,0.5\n"));
        assert_eq!(read_graph_csv("G_j", 8, None, &buf[..]).unwrap(), g);
        assert!(read_graph_csv("x", 8, None, "u,v,w\n3,1,1\n".as_bytes()).is_err());
        assert!(read_graph_csv("x", 8, None, "u,v,w\n1,3,0.7\n".as_bytes()).is_err());
    }

    #[test]
    fn relabeled_nodes_round_trip() {
        let g = EvaluationGraph::from_edges("s", 3, &[(0, 2, 1.0), (1, 2, 0.5)]).unwrap();
        let nodes = [4, 10, 17];
        let mut buf = Vec::new();
        write_graph_csv(&g, Some(&nodes), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "u,v,w\n4,17,1\n10,17,0.5\n");
        assert_eq!(read_graph_csv("s", 3, Some(&nodes), &buf[..]).unwrap(), g);
    }
}
