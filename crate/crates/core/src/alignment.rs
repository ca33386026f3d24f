//! Distributed interchange interventions on a rotated subspace of one hidden
//! site, training of the rotation, and interchange intervention accuracy.
//!
//! The intervened activation is `h_b + R Rᵀ (h_s - h_b)`: the component of
//! the base activation in the span of `R` is replaced by the source's.

use std::path::Path;

use log::{debug, info};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::{
    counterfactual_output, enumerate_inputs, CounterfactualExample, InputEnumeration, TARGET_VARIABLE,
};
use crate::error::{Error, Result};
use crate::net::{argmax, relative_error, tokenize, SiteId, Tape, TensorRecord, TinyNet, FD_STEP};
use crate::scm::{CausalModel, Value};
use crate::task::TaskKind;
use crate::zoo::ZooModelId;

/// Tolerance on `‖RᵀR − I‖_max` maintained after every update.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// An `n × k` matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation {
    r: Array2<f64>,
}

impl Rotation {
    /// Orthonormalizes the columns of `m`.
    pub fn from_matrix(mut m: Array2<f64>) -> Result<Self> {
        orthonormalize(&mut m)?;
        Ok(Self { r: m })
    }

    /// Gaussian matrix, orthonormalized.
    pub fn random(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k > n {
            return Err(Error::Dimension(format!("k = {k} exceeds width n = {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Array2::from_shape_fn((n, k), |_| StandardNormal.sample(&mut rng));
        Self::from_matrix(m)
    }

    pub fn identity(n: usize) -> Self {
        Self { r: Array2::eye(n) }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn k(&self) -> usize {
        self.r.ncols()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.r)
    }

    /// `R Q` for a `k × k` matrix `q`; with `q` orthogonal the spanned subspace is unchanged.
    pub fn right_multiply(&self, q: &Array2<f64>) -> Result<Self> {
        if q.nrows() != self.k() {
            return Err(Error::Dimension(format!(
                "{} × {} factor for k = {}",
                q.nrows(),
                q.ncols(),
                self.k()
            )));
        }
        Self::from_matrix(self.r.dot(q))
    }
}

/// The `k` leading eigenvectors of the covariance of the site activations of
/// every input in `enumeration`. Ties in eigenvalue keep the solver's order.
pub fn principal_rotation(net: &TinyNet, site: SiteId, k: usize, enumeration: &InputEnumeration) -> Result<Rotation> {
    let n = net.width();
    if k > n {
        return Err(Error::Dimension(format!("k = {k} exceeds width n = {n}")));
    }
    let h = net.site_batch(&net.tokens(enumeration.inputs()), site)?;
    let mean = h.mean_axis(Axis(0)).ok_or(Error::EmptyRange("enumeration".into()))?;
    let c = &h - &mean;
    let cov = c.t().dot(&c);
    let eig = nalgebra::DMatrix::from_fn(n, n, |i, j| cov[[i, j]]).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let m = Array2::from_shape_fn((n, k), |(i, j)| eig.eigenvectors[(i, idx[j])]);
    Rotation::from_matrix(m)
}

pub fn orthonormality_error(r: &Array2<f64>) -> f64 {
    let g = r.t().dot(r);
    let mut worst: f64 = 0.0;
    for ((i, j), &v) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

/// Thin QR by Gram-Schmidt applied twice, keeping `Q`. Columns of the result
/// span the same nested subspaces as the input and the implied triangular
/// factor has a positive diagonal.
pub fn orthonormalize(m: &mut Array2<f64>) -> Result<()> {
    let k = m.ncols();
    for j in 0..k {
        let mut v = m.column(j).to_owned();
        let before = v.dot(&v).sqrt();
        for _ in 0..2 {
            for i in 0..j {
                let q = m.column(i);
                let c = q.dot(&v);
                v.scaled_add(-c, &q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if !norm.is_finite() || norm <= 1e-10 * before.max(1e-300) {
            return Err(Error::Training(format!(
                "column {j} is linearly dependent on the previous ones"
            )));
        }
        m.column_mut(j).assign(&(v / norm));
    }
    Ok(())
}

/// Where and how a high-level variable is aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentSpec {
    pub model_id: ZooModelId,
    pub site: SiteId,
    pub rotation: Rotation,
    pub high_variable: String,
}

impl AlignmentSpec {
    pub fn new(model_id: ZooModelId, site: SiteId, rotation: Rotation) -> Self {
        Self {
            model_id,
            site,
            rotation,
            high_variable: TARGET_VARIABLE.to_string(),
        }
    }

    pub fn k(&self) -> usize {
        self.rotation.k()
    }

    pub fn check(&self, net: &TinyNet) -> Result<()> {
        net.check_site(self.site)?;
        if self.rotation.n() != net.width() {
            return Err(Error::Dimension(format!(
                "rotation has {} rows but site {} has width {}",
                self.rotation.n(),
                self.site,
                net.width()
            )));
        }
        if self.model_id.task() != net.task() {
            return Err(Error::Dimension(format!(
                "alignment for {} model applied to a {} net",
                self.model_id.task(),
                net.task()
            )));
        }
        Ok(())
    }
}

/// Logits after the distributed interchange intervention from `source` into `base`.
pub fn dii_forward(net: &TinyNet, base: &[Value], source: &[Value], spec: &AlignmentSpec) -> Result<Array1<f64>> {
    spec.check(net)?;
    let t = net.task();
    let hb = net.site_batch(&[tokenize(t, base)], spec.site)?;
    let hs = net.site_batch(&[tokenize(t, source)], spec.site)?;
    let logits = dii_logits(net, spec, &hb, &hs)?;
    Ok(logits.row(0).to_owned())
}

/// Batched intervention on precomputed site activations (one row per pair).
pub fn dii_logits(net: &TinyNet, spec: &AlignmentSpec, hb: &Array2<f64>, hs: &Array2<f64>) -> Result<Array2<f64>> {
    if hb.dim() != hs.dim() {
        return Err(Error::Dimension("base and source batches differ in shape".into()));
    }
    let r = spec.rotation.matrix();
    let coords = (hs - hb).dot(r);
    let h = hb + &coords.dot(&r.t());
    net.forward_from(spec.site, &h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Starting point of the rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationInit {
    /// Orthonormalized Gaussian matrix.
    Random,
    /// Top-`k` principal directions of the site activations over the task's inputs.
    Principal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DasConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub init: RotationInit,
}

impl DasConfig {
    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::Arithmetic => Self {
                learning_rate: 0.01,
                epochs: 4,
                batch_size: 16,
                optimizer: Optimizer::Sgd,
                init: RotationInit::Principal,
            },
            TaskKind::Boolean => Self {
                learning_rate: 0.01,
                epochs: 5,
                batch_size: 128,
                optimizer: Optimizer::Sgd,
                init: RotationInit::Principal,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Config(
                "das: learning_rate and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DasReport {
    pub steps: usize,
    pub final_loss: f64,
    pub train_iia: f64,
    /// Largest `‖RᵀR − I‖_max` seen after any step.
    pub max_orthonormality_error: f64,
}

struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(dim),
            v: Array2::zeros(dim),
            t: 0,
        }
    }

    fn step(&mut self, p: &mut Array2<f64>, g: &Array2<f64>, lr: f64) {
        self.t += 1;
        self.m
            .zip_mut_with(g, |m, &g| *m = Self::B1 * *m + (1.0 - Self::B1) * g);
        self.v
            .zip_mut_with(g, |v, &g| *v = Self::B2 * *v + (1.0 - Self::B2) * g * g);
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        ndarray::Zip::from(p).and(&self.m).and(&self.v).for_each(|p, &m, &v| {
            *p -= lr * (m / c1) / ((v / c2).sqrt() + Self::EPS);
        });
    }
}

/// Site activations and target classes of a counterfactual dataset.
struct PairBatch {
    hb: Array2<f64>,
    hs: Array2<f64>,
    targets: Vec<usize>,
}

fn pair_batch(net: &TinyNet, site: SiteId, data: &[CounterfactualExample]) -> Result<PairBatch> {
    let t = net.task();
    let bases: Vec<Vec<usize>> = data.iter().map(|e| tokenize(t, &e.base)).collect();
    let sources: Vec<Vec<usize>> = data.iter().map(|e| tokenize(t, &e.source)).collect();
    let targets = data
        .iter()
        .map(|e| {
            t.class_of(e.expected_output).ok_or_else(|| Error::OutOfDomain {
                variable: "O".into(),
                value: e.expected_output.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairBatch {
        hb: net.site_batch(&bases, site)?,
        hs: net.site_batch(&sources, site)?,
        targets,
    })
}

fn select(a: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

/// Mean cross-entropy of the intervened net and its gradient with respect to `R`.
pub fn dii_loss_and_grad(
    net: &TinyNet,
    site: SiteId,
    r: &Array2<f64>,
    hb: &Array2<f64>,
    hs: &Array2<f64>,
    targets: &[usize],
) -> (f64, Array2<f64>) {
    let mut tape = Tape::new();
    let params = net.record_params(&mut tape, false);
    let rv = tape.param(r.clone());
    let vb = tape.constant(hb.clone());
    let diff = tape.constant(hs - hb);
    let coords = tape.matmul(diff, rv);
    let proj = tape.matmul_t(coords, rv);
    let h = tape.add(vb, proj);
    let logits = net.record_layers(&mut tape, &params, site.0, h);
    let loss = tape.softmax_ce(logits, targets.to_vec());
    let mut g = tape.backward(loss);
    let grad = g.take(rv).unwrap_or_else(|| Array2::zeros(r.raw_dim()));
    (tape.value(loss)[[0, 0]], grad)
}

/// Trains a rotation of rank `k` at `site` so that interventions on the net
/// reproduce the high-level interchange outputs in `dataset`. Net weights
/// stay fixed.
pub fn das_train(
    net: &TinyNet,
    model_id: ZooModelId,
    site: SiteId,
    k: usize,
    dataset: &[CounterfactualExample],
    config: &DasConfig,
    seed: u64,
) -> Result<(AlignmentSpec, DasReport)> {
    config.validate()?;
    net.check_site(site)?;
    let n = net.width();
    if k > n {
        return Err(Error::Dimension(format!("k = {k} exceeds width n = {n}")));
    }
    let rotation = match config.init {
        RotationInit::Random => Rotation::random(n, k, seed)?,
        RotationInit::Principal => principal_rotation(net, site, k, &enumerate_inputs(net.task(), None)?)?,
    };
    das_train_from(net, AlignmentSpec::new(model_id, site, rotation), dataset, config, seed)
}

/// [`das_train`] starting from a given rotation. `seed` drives the batch order.
pub fn das_train_from(
    net: &TinyNet,
    init: AlignmentSpec,
    dataset: &[CounterfactualExample],
    config: &DasConfig,
    seed: u64,
) -> Result<(AlignmentSpec, DasReport)> {
    config.validate()?;
    init.check(net)?;
    let (model_id, site, k) = (init.model_id, init.site, init.k());
    let batch = pair_batch(net, site, dataset)?;
    let mut spec = init;
    let mut r = spec.rotation.r.clone();
    let mut adam = Adam::new(r.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut steps = 0;
    let mut last_loss = f64::NAN;
    let mut max_err = spec.rotation.orthonormality_error();
    if k > 0 {
        for epoch in 1..=config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for idx in order.chunks(config.batch_size) {
                let targets: Vec<usize> = idx.iter().map(|&i| batch.targets[i]).collect();
                let (loss, g) = dii_loss_and_grad(
                    net,
                    site,
                    &r,
                    &select(&batch.hb, idx),
                    &select(&batch.hs, idx),
                    &targets,
                );
                if !loss.is_finite() {
                    return Err(Error::Training(format!("non-finite alignment loss at step {steps}")));
                }
                match config.optimizer {
                    Optimizer::Sgd => r.scaled_add(-config.learning_rate, &g),
                    Optimizer::Adam => adam.step(&mut r, &g, config.learning_rate),
                }
                orthonormalize(&mut r)?;
                let err = orthonormality_error(&r);
                assert!(err <= ORTHONORMAL_TOL, "orthonormality drifted to {err}");
                max_err = max_err.max(err);
                epoch_loss += loss * idx.len() as f64;
                steps += 1;
            }
            last_loss = epoch_loss / dataset.len().max(1) as f64;
            debug!("{model_id} site {site}: epoch {epoch} loss {last_loss:.4}");
        }
    }
    spec.rotation = Rotation { r };
    let logits = dii_logits(net, &spec, &batch.hb, &batch.hs)?;
    let train_iia = accuracy(&logits, &batch.targets);
    if last_loss.is_nan() {
        last_loss = crate::net::cross_entropy(&logits, &batch.targets);
    }
    info!("{model_id} site {site} k {k}: train IIA {train_iia:.4} after {steps} steps");
    Ok((
        spec,
        DasReport {
            steps,
            final_loss: last_loss,
            train_iia,
            max_orthonormality_error: max_err,
        },
    ))
}

fn accuracy(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = logits
        .axis_iter(Axis(0))
        .zip(targets)
        .filter(|(row, &t)| argmax(*row) == t)
        .count();
    hits as f64 / targets.len() as f64
}

/// Fraction of `(base, source)` pairs on which the intervened net's argmax
/// equals the high-level interchange output.
pub fn iia(
    net: &TinyNet,
    high_model: &CausalModel,
    spec: &AlignmentSpec,
    pairs: &[(Vec<Value>, Vec<Value>)],
) -> Result<f64> {
    spec.check(net)?;
    if pairs.is_empty() {
        return Err(Error::Config("interchange accuracy needs at least one pair".into()));
    }
    let data = pairs
        .iter()
        .map(|(b, s)| {
            Ok(CounterfactualExample {
                base: b.clone(),
                source: s.clone(),
                target_variable: TARGET_VARIABLE.to_string(),
                expected_output: counterfactual_output(high_model, b, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    iia_on(net, spec, &data)
}

/// Interchange accuracy on labelled counterfactual examples.
pub fn iia_on(net: &TinyNet, spec: &AlignmentSpec, data: &[CounterfactualExample]) -> Result<f64> {
    spec.check(net)?;
    if data.is_empty() {
        return Err(Error::Config("interchange accuracy needs at least one pair".into()));
    }
    let batch = pair_batch(net, spec.site, data)?;
    let logits = dii_logits(net, spec, &batch.hb, &batch.hs)?;
    Ok(accuracy(&logits, &batch.targets))
}

/// Largest relative error between the reverse-mode gradient with respect to
/// `R` and central differences, over `probes` random entries of `R`.
pub fn rotation_grad_check(
    net: &TinyNet,
    spec: &AlignmentSpec,
    data: &[CounterfactualExample],
    probes: usize,
    seed: u64,
) -> Result<f64> {
    use rand::Rng;
    spec.check(net)?;
    let batch = pair_batch(net, spec.site, data)?;
    let r = spec.rotation.matrix();
    let (_, g) = dii_loss_and_grad(net, spec.site, r, &batch.hb, &batch.hs, &batch.targets);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss_at = |m: &Array2<f64>| {
        let coords = (&batch.hs - &batch.hb).dot(m);
        let h = &batch.hb + &coords.dot(&m.t());
        crate::net::cross_entropy(&net.forward_from(spec.site, &h).expect("checked site"), &batch.targets)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let (i, j) = (rng.gen_range(0..r.nrows()), rng.gen_range(0..r.ncols()));
        let mut p = r.clone();
        p[[i, j]] += FD_STEP;
        let mut m = r.clone();
        m[[i, j]] -= FD_STEP;
        let fd = (loss_at(&p) - loss_at(&m)) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(g[[i, j]], fd));
    }
    Ok(worst)
}

/// Precomputed split of every enumerated input's site activation into its
/// component inside the aligned subspace and the residual, so a pair's
/// intervened activation is `residual[b] + inside[s]`.
pub struct DiiEvaluator<'a> {
    net: &'a TinyNet,
    site: SiteId,
    inside: Array2<f64>,
    residual: Array2<f64>,
}

impl<'a> DiiEvaluator<'a> {
    pub fn new(net: &'a TinyNet, spec: &AlignmentSpec, enumeration: &InputEnumeration) -> Result<Self> {
        spec.check(net)?;
        let tokens = net.tokens(enumeration.inputs());
        let h = net.site_batch(&tokens, spec.site)?;
        let r = spec.rotation.matrix();
        let inside = h.dot(r).dot(&r.t());
        let residual = &h - &inside;
        Ok(Self {
            net,
            site: spec.site,
            inside,
            residual,
        })
    }

    pub fn len(&self) -> usize {
        self.inside.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Predicted classes for `base` against each source in `sources`.
    pub fn predict(&self, base: usize, sources: &[usize]) -> Vec<usize> {
        let mut h = self.inside.select(Axis(0), sources);
        h += &self.residual.row(base);
        let logits = self
            .net
            .forward_from(self.site, &h)
            .expect("site checked at construction");
        logits.axis_iter(Axis(0)).map(argmax).collect()
    }
}

pub const ROTATION_FORMAT: &str = "rotation/v1";

/// Persisted alignment: the rotation tensor tagged with its model, site and rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationFile {
    pub format: String,
    pub task: TaskKind,
    pub model_id: String,
    pub site: SiteId,
    pub k: usize,
    pub high_variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<DasReport>,
    pub tensors: Vec<TensorRecord>,
}

impl RotationFile {
    pub fn from_spec(spec: &AlignmentSpec, report: Option<DasReport>) -> Self {
        Self {
            format: ROTATION_FORMAT.to_string(),
            task: spec.model_id.task(),
            model_id: spec.model_id.to_string(),
            site: spec.site,
            k: spec.k(),
            high_variable: spec.high_variable.clone(),
            report,
            tensors: vec![TensorRecord::from_array("R", spec.rotation.matrix())],
        }
    }

    pub fn build(&self) -> Result<AlignmentSpec> {
        if self.format != ROTATION_FORMAT {
            return Err(Error::Format(format!(
                "unsupported rotation format `{}` (expected `{ROTATION_FORMAT}`)",
                self.format
            )));
        }
        let [t] = self.tensors.as_slice() else {
            return Err(Error::Format("rotation file must hold exactly one tensor".into()));
        };
        let r = t.to_array()?;
        if r.ncols() != self.k {
            return Err(Error::Format(format!(
                "tensor has {} columns, header says k = {}",
                r.ncols(),
                self.k
            )));
        }
        let err = orthonormality_error(&r);
        if err > ORTHONORMAL_TOL {
            return Err(Error::Format(format!(
                "stored rotation is not orthonormal (error {err:e})"
            )));
        }
        Ok(AlignmentSpec {
            model_id: ZooModelId::parse(self.task, &self.model_id)?,
            site: self.site,
            rotation: Rotation { r },
            high_variable: self.high_variable.clone(),
        })
    }
}

pub fn save_rotation(spec: &AlignmentSpec, report: Option<DasReport>, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&RotationFile::from_spec(spec, report))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_rotation(path: &Path) -> Result<(AlignmentSpec, Option<DasReport>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let f: RotationFile = serde_json::from_str(&text)?;
    Ok((f.build()?, f.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{enumerate_inputs, gen_counterfactual};
    use crate::net::{Activation, NetConfig};
    use crate::zoo::build_zoo_model;

    fn small_net() -> TinyNet {
        let cfg = NetConfig {
            d_emb: 3,
            hidden: 8,
            layers: 2,
            activation: Activation::Gelu,
            ..NetConfig::default_for(TaskKind::Arithmetic)
        };
        TinyNet::init(TaskKind::Arithmetic, cfg, 4).unwrap()
    }

    fn id(s: &str) -> ZooModelId {
        ZooModelId::parse(TaskKind::Arithmetic, s).unwrap()
    }

    #[test]
    fn orthonormalize_keeps_span_and_sign() {
        let mut m = ndarray::array![[2.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        orthonormalize(&mut m).unwrap();
        assert!(orthonormality_error(&m) < 1e-15);
        assert_eq!(m.column(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(m.column(1).to_vec(), vec![0.0, 1.0, 0.0]);
        let mut dep = ndarray::array![[1.0, 2.0], [1.0, 2.0]];
        assert!(orthonormalize(&mut dep).is_err());
    }

    #[test]
    fn limits_of_the_intervention() {
        let net = small_net();
        let (b, s) = (
            [Value::Int(4), Value::Int(2), Value::Int(8)],
            [Value::Int(3), Value::Int(9), Value::Int(7)],
        );
        for site in net.sites() {
            let empty = AlignmentSpec::new(id("M_X"), site, Rotation::random(8, 0, 1).unwrap());
            assert_eq!(
                dii_forward(&net, &b, &s, &empty).unwrap(),
                net.forward_with_cache(&b).logits
            );
            let full = AlignmentSpec::new(id("M_X"), site, Rotation::random(8, 8, 1).unwrap());
            let got = dii_forward(&net, &b, &s, &full).unwrap();
            let want = net.forward_with_cache(&s).logits;
            for (x, y) in got.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let net = small_net();
        let b = [Value::Int(1), Value::Int(1), Value::Int(1)];
        let wrong = AlignmentSpec::new(id("M_X"), SiteId(1), Rotation::random(5, 2, 1).unwrap());
        assert!(matches!(dii_forward(&net, &b, &b, &wrong), Err(Error::Dimension(_))));
        assert!(Rotation::random(4, 5, 0).is_err());
        let data = gen_counterfactual(
            TaskKind::Arithmetic,
            &build_zoo_model(TaskKind::Arithmetic, id("M_X")).unwrap(),
            8,
            0,
        )
        .unwrap();
        assert!(das_train(
            &net,
            id("M_X"),
            SiteId(1),
            9,
            &data,
            &DasConfig::default_for(TaskKind::Arithmetic),
            0
        )
        .is_err());
    }

    #[test]
    fn rotation_gradient_matches_differences() {
        let net = small_net();
        let m = build_zoo_model(TaskKind::Arithmetic, id("M_XY")).unwrap();
        let data = gen_counterfactual(TaskKind::Arithmetic, &m, 16, 2).unwrap();
        for site in net.sites() {
            let spec = AlignmentSpec::new(id("M_XY"), site, Rotation::random(8, 3, 7).unwrap());
            let err = rotation_grad_check(&net, &spec, &data, 24, 1).unwrap();
            assert!(err <= 1e-4, "site {site}: {err}");
        }
    }

    #[test]
    fn k_zero_training_is_a_no_op() {
        let net = small_net();
        let m = build_zoo_model(TaskKind::Arithmetic, id("M_X")).unwrap();
        let data = gen_counterfactual(TaskKind::Arithmetic, &m, 40, 3).unwrap();
        let (spec, report) = das_train(
            &net,
            id("M_X"),
            SiteId(2),
            0,
            &data,
            &DasConfig::default_for(TaskKind::Arithmetic),
            0,
        )
        .unwrap();
        assert_eq!(report.steps, 0);
        let hits = data
            .iter()
            .filter(|e| net.predict(&e.base) == e.expected_output)
            .count();
        assert_eq!(report.train_iia, hits as f64 / data.len() as f64);
        assert_eq!(iia_on(&net, &spec, &data).unwrap(), report.train_iia);
    }

    #[test]
    fn evaluator_matches_direct_forward() {
        let net = small_net();
        let e = enumerate_inputs(TaskKind::Arithmetic, Some(crate::datagen::arithmetic_ranges(&[1, 2]))).unwrap();
        let spec = AlignmentSpec::new(id("M_XY"), SiteId(1), Rotation::random(8, 4, 5).unwrap());
        let ev = DiiEvaluator::new(&net, &spec, &e).unwrap();
        let sources: Vec<usize> = (0..e.len()).collect();
        for b in 0..e.len() {
            let fast = ev.predict(b, &sources);
            for (s, &class) in fast.iter().enumerate() {
                let slow = dii_forward(&net, &e.inputs()[b], &e.inputs()[s], &spec).unwrap();
                assert_eq!(argmax(slow.view()), class);
            }
        }
    }

    #[test]
    fn rotation_file_round_trip() {
        let spec = AlignmentSpec::new(id("M_YZ"), SiteId(3), Rotation::random(8, 4, 5).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        save_rotation(&spec, None, &p).unwrap();
        assert_eq!(load_rotation(&p).unwrap().0, spec);
    }
}
