//! Greedy partition of the input space among candidate models, and the
//! faithfulness–strength frontier traced over a list of thresholds.

use std::collections::BTreeSet;
use std::io::Write;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::InputEnumeration;
use crate::error::{Error, Result};
use crate::evalgraph::{degree_order, graph_iia, iia_from_halves, DegreeMode, EvaluationGraph};
use crate::zoo::{build_zoo_model, combine, CombinedModel, StrengthValue, ZooModelId};

/// Smallest cell a model may claim. A single node has IIA 1 by convention, so
/// allowing singletons would let any model claim any node.
pub const MIN_CELL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Rounds over all candidate graphs only.
    Greedy,
    /// Best of the all-candidate run and each single-candidate run.
    #[default]
    Portfolio,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "portfolio" => Ok(Strategy::Portfolio),
            other => Err(Error::Config(format!("unknown partition strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionOptions {
    pub degree: DegreeMode,
    pub strategy: Strategy,
}

/// Nodes claimed by one model in one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model_id: String,
    pub nodes: Vec<usize>,
    pub iia: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub lambda: f64,
    pub cells: Vec<Cell>,
    /// Nodes left to the trivial model.
    pub leftover: Vec<usize>,
    pub strength: StrengthValue,
}

impl PartitionResult {
    /// Distinct claiming models in order of first claim.
    pub fn model_set(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.model_id) {
                out.push(c.model_id.clone());
            }
        }
        out
    }

    /// Nodes of each distinct model, merged across rounds.
    pub fn merged_cells(&self) -> Vec<(String, BTreeSet<usize>)> {
        self.model_set()
            .into_iter()
            .map(|m| {
                let nodes = self
                    .cells
                    .iter()
                    .filter(|c| c.model_id == m)
                    .flat_map(|c| c.nodes.iter().copied())
                    .collect();
                (m, nodes)
            })
            .collect()
    }
}

fn check_graphs(graphs: &[EvaluationGraph], lambda: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("threshold {lambda} is outside [0, 1]")));
    }
    let first = graphs
        .first()
        .ok_or_else(|| Error::Config("no candidate graphs".into()))?;
    let n = first.len();
    if n == 0 {
        return Err(Error::Config("graphs have no nodes".into()));
    }
    if let Some(g) = graphs.iter().find(|g| g.len() != n) {
        return Err(Error::MismatchedInputs(format!(
            "graph {} has {} nodes, graph {} has {n}",
            g.label(),
            g.len(),
            first.label()
        )));
    }
    Ok(n)
}

/// One model's claim in a round: walk the unassigned nodes by degree, keeping
/// a node only when the kept set stays at or above `lambda`.
pub fn greedy_claim(g: &EvaluationGraph, unassigned: &[usize], lambda: f64, degree: DegreeMode) -> Vec<usize> {
    let order = degree_order(g, Some(unassigned), degree);
    let mut to_kept = vec![0u64; g.len()];
    let mut kept = Vec::new();
    let mut halves = 0u64;
    for x in order {
        let with_x = halves + to_kept[x];
        if iia_from_halves(with_x, kept.len() + 1) >= lambda {
            kept.push(x);
            halves = with_x;
            let row = g.row(x);
            for &y in unassigned {
                to_kept[y] += row[y] as u64;
            }
        }
    }
    kept
}

fn run_rounds(graphs: &[&EvaluationGraph], n: usize, lambda: f64, degree: DegreeMode) -> PartitionResult {
    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut cells = Vec::new();
    loop {
        let claims: Vec<Vec<usize>> = graphs
            .par_iter()
            .map(|g| greedy_claim(g, &unassigned, lambda, degree))
            .collect();
        let mut best: Option<(usize, Vec<usize>)> = None;
        for (gi, kept) in claims.into_iter().enumerate() {
            if kept.len() >= MIN_CELL && best.as_ref().is_none_or(|b| kept.len() > b.1.len()) {
                best = Some((gi, kept));
            }
        }
        let Some((gi, mut kept)) = best else { break };
        let iia = graph_iia(graphs[gi], Some(&kept));
        kept.sort_unstable();
        debug!(
            "lambda {lambda}: {} claims {} nodes (IIA {iia:.4})",
            graphs[gi].label(),
            kept.len()
        );
        unassigned.retain(|x| kept.binary_search(x).is_err());
        cells.push(Cell {
            model_id: graphs[gi].label().to_string(),
            nodes: kept,
            iia,
        });
    }
    PartitionResult {
        lambda,
        cells,
        strength: StrengthValue::new(n - unassigned.len(), n),
        leftover: unassigned,
    }
}

/// Partition of the nodes among the models whose graphs are given. Every
/// cell has graph IIA at least `lambda` under its model's graph.
pub fn greedy_partition(graphs: &[EvaluationGraph], lambda: f64, opts: &PartitionOptions) -> Result<PartitionResult> {
    let n = check_graphs(graphs, lambda)?;
    let all: Vec<&EvaluationGraph> = graphs.iter().collect();
    let mut best = run_rounds(&all, n, lambda, opts.degree);
    if opts.strategy == Strategy::Portfolio && graphs.len() > 1 {
        for g in graphs {
            let single = run_rounds(&[g], n, lambda, opts.degree);
            if single.strength.explained > best.strength.explained {
                debug!(
                    "lambda {lambda}: {} alone explains {} > {}",
                    g.label(),
                    single.strength.explained,
                    best.strength.explained
                );
                best = single;
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub model_set: Vec<String>,
    pub strength: f64,
    pub result: PartitionResult,
}

/// One partition per threshold, sorted by descending threshold.
///
/// A partition whose cells all reach a threshold also reaches every lower
/// one, so when the greedy result at a lower threshold explains fewer nodes
/// than the previous point, the previous partition is kept instead.
pub fn frontier(graphs: &[EvaluationGraph], lambdas: &[f64], opts: &PartitionOptions) -> Result<Vec<FrontierPoint>> {
    let mut ls = lambdas.to_vec();
    ls.sort_by(|a, b| b.total_cmp(a));
    ls.dedup();
    let results = ls
        .par_iter()
        .map(|&l| greedy_partition(graphs, l, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<FrontierPoint> = Vec::with_capacity(ls.len());
    for (lambda, mut result) in ls.into_iter().zip(results) {
        if let Some(prev) = out.last() {
            if result.strength.explained < prev.result.strength.explained {
                info!(
                    "lambda {lambda}: greedy explains {} nodes, reusing the {} from lambda {}",
                    result.strength.explained, prev.result.strength.explained, prev.lambda
                );
                result = PartitionResult {
                    lambda,
                    ..prev.result.clone()
                };
            }
        }
        out.push(FrontierPoint {
            lambda,
            model_set: result.model_set(),
            strength: result.strength.value(),
            result,
        });
    }
    Ok(out)
}

/// Builds the combined model of a partition: one member per claiming model,
/// with leftover nodes going to the task's trivial model.
pub fn assemble_combined(result: &PartitionResult, enumeration: &InputEnumeration) -> Result<CombinedModel> {
    let task = enumeration.task();
    let trivial = ZooModelId::trivial(task);
    let mut models = Vec::new();
    let mut cells = Vec::new();
    for (id, nodes) in result.merged_cells() {
        let id = ZooModelId::parse(task, &id)?;
        if id.is_trivial() {
            return Err(Error::InvalidPartition(format!(
                "trivial model {id} cannot claim a cell"
            )));
        }
        models.push(build_zoo_model(task, id)?);
        cells.push(nodes);
    }
    models.push(build_zoo_model(task, trivial)?);
    cells.push(result.leftover.iter().copied().collect());
    let t = models.len() - 1;
    combine(enumeration, models, cells, t)
}

/// `lambda,model_set,strength` rows; the model set is joined with `+`.
pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "model_set", "strength"])?;
    for p in points {
        w.write_record([p.lambda.to_string(), p.model_set.join("+"), p.strength.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<frontier csv>", e))?;
    Ok(())
}
