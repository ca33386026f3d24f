//! A small feedforward classifier over tokenized task prompts.
//!
//! Token embeddings are concatenated and passed through `L` dense layers of
//! width `n`; a linear head produces one logit per output class. Site `ℓ`
//! (1-based) is the post-activation output of hidden layer `ℓ`.

mod io;
mod tape;
mod tokenize;

use log::{debug, info};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::{enumerate_inputs, InputEnumeration};
use crate::error::{Error, Result};
use crate::scm::Value;
use crate::task::TaskKind;

pub use io::{load_net, save_net, NetFile, TensorRecord, NET_FORMAT};
pub use tape::{cross_entropy, softmax_rows, Gradients, Tape, Var};
pub use tokenize::{render, seq_len, tokenize, vocab_size, BOOLEAN_VOCAB};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// GELU, tanh approximation.
    Gelu,
    Identity,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Architecture and optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub d_emb: usize,
    pub hidden: usize,
    pub layers: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Training stops once accuracy is perfect and the mean loss is below this.
    pub target_loss: f64,
}

impl NetConfig {
    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::Arithmetic => Self {
                d_emb: 8,
                hidden: 64,
                layers: 3,
                activation: Activation::Gelu,
                learning_rate: 0.1,
                batch_size: 32,
                max_epochs: 2000,
                target_loss: 0.05,
            },
            TaskKind::Boolean => Self {
                d_emb: 8,
                hidden: 64,
                layers: 3,
                activation: Activation::Gelu,
                learning_rate: 0.1,
                batch_size: 16,
                max_epochs: 2000,
                target_loss: 0.01,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("net: {m}")));
        if self.d_emb == 0 || self.hidden == 0 || self.layers == 0 {
            return bad("d_emb, hidden and layers must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.target_loss.is_nan() || self.target_loss <= 0.0 {
            return bad("target_loss must be positive");
        }
        Ok(())
    }
}

/// Hidden layer index, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub usize);

impl std::fmt::Display for SiteId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Affine map `x · w + b`, with `w` stored as `in × out` and `b` as `1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, gain / (fan_in as f64).sqrt()).unwrap();
        Self {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(rng)),
            b: Array2::zeros((1, fan_out)),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// Logits and per-site activations of a single input.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    pub logits: Array1<f64>,
    /// `activations[ℓ - 1]` is the activation at site `ℓ`.
    pub activations: Vec<Array1<f64>>,
}

impl ForwardCache {
    pub fn site(&self, site: SiteId) -> &Array1<f64> {
        &self.activations[site.0 - 1]
    }

    pub fn argmax(&self) -> usize {
        argmax(self.logits.view())
    }
}

pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct TinyNet {
    task: TaskKind,
    config: NetConfig,
    pub embedding: Array2<f64>,
    pub hidden: Vec<Dense>,
    pub head: Dense,
}

/// Handles to a net's parameters recorded on a tape, in [`TinyNet::params`] order.
pub struct ParamVars(pub Vec<Var>);

impl TinyNet {
    /// Freshly initialized net.
    pub fn init(task: TaskKind, config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let embedding = Array2::from_shape_fn((vocab_size(task), config.d_emb), |_| normal.sample(&mut rng));
        let gain = match config.activation {
            Activation::Gelu => 2f64.sqrt(),
            Activation::Identity => 1.0,
        };
        let mut fan_in = seq_len(task) * config.d_emb;
        let mut hidden = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            hidden.push(Dense::init(fan_in, config.hidden, gain, &mut rng));
            fan_in = config.hidden;
        }
        let head = Dense::init(fan_in, task.num_classes(), 1.0, &mut rng);
        Ok(Self {
            task,
            config,
            embedding,
            hidden,
            head,
        })
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Activation width at every site.
    pub fn width(&self) -> usize {
        self.config.hidden
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len()
    }

    pub fn sites(&self) -> Vec<SiteId> {
        (1..=self.num_layers()).map(SiteId).collect()
    }

    pub fn check_site(&self, site: SiteId) -> Result<()> {
        if site.0 == 0 || site.0 > self.num_layers() {
            return Err(Error::Dimension(format!(
                "site {site} is outside 1..={}",
                self.num_layers()
            )));
        }
        Ok(())
    }

    /// Parameters in a fixed order: embedding, then `(w, b)` per hidden layer,
    /// then the head's `(w, b)`.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut p = vec![&self.embedding];
        for d in self.hidden.iter().chain(std::iter::once(&self.head)) {
            p.push(&d.w);
            p.push(&d.b);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p = vec![&mut self.embedding];
        for d in self.hidden.iter_mut().chain(std::iter::once(&mut self.head)) {
            p.push(&mut d.w);
            p.push(&mut d.b);
        }
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for l in 1..=self.hidden.len() {
            names.push(format!("layer{l}.w"));
            names.push(format!("layer{l}.b"));
        }
        names.push("head.w".to_string());
        names.push("head.b".to_string());
        names
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn tokens(&self, inputs: &[Vec<Value>]) -> Vec<Vec<usize>> {
        inputs.iter().map(|i| tokenize(self.task, i)).collect()
    }

    fn embed(&self, tokens: &[Vec<usize>]) -> Array2<f64> {
        let d = self.config.d_emb;
        let t = seq_len(self.task);
        let mut x = Array2::zeros((tokens.len(), t * d));
        for (i, seq) in tokens.iter().enumerate() {
            for (p, &id) in seq.iter().enumerate() {
                x.row_mut(i)
                    .slice_mut(ndarray::s![p * d..(p + 1) * d])
                    .assign(&self.embedding.row(id));
            }
        }
        x
    }

    fn act(&self, mut x: Array2<f64>) -> Array2<f64> {
        let a = self.config.activation;
        x.mapv_inplace(|v| a.apply(v));
        x
    }

    /// Activations at every site for a batch of token sequences.
    pub fn hidden_batch(&self, tokens: &[Vec<usize>]) -> Vec<Array2<f64>> {
        let mut h = self.embed(tokens);
        let mut out = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            h = self.act(layer.apply(&h));
            out.push(h.clone());
        }
        out
    }

    /// Activations at one site for a batch of token sequences.
    pub fn site_batch(&self, tokens: &[Vec<usize>], site: SiteId) -> Result<Array2<f64>> {
        self.check_site(site)?;
        let mut h = self.embed(tokens);
        for layer in &self.hidden[..site.0] {
            h = self.act(layer.apply(&h));
        }
        Ok(h)
    }

    pub fn forward_batch(&self, tokens: &[Vec<usize>]) -> Array2<f64> {
        let mut h = self.embed(tokens);
        for layer in &self.hidden {
            h = self.act(layer.apply(&h));
        }
        self.head.apply(&h)
    }

    /// Continues the forward pass from activations `h` placed at `site`.
    pub fn forward_from(&self, site: SiteId, h: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_site(site)?;
        if h.ncols() != self.width() {
            return Err(Error::Dimension(format!(
                "activation width {} does not match net width {}",
                h.ncols(),
                self.width()
            )));
        }
        let mut h = h.clone();
        for layer in &self.hidden[site.0..] {
            h = self.act(layer.apply(&h));
        }
        Ok(self.head.apply(&h))
    }

    pub fn forward_with_cache(&self, input: &[Value]) -> ForwardCache {
        let tokens = vec![tokenize(self.task, input)];
        let acts = self.hidden_batch(&tokens);
        let logits = self.head.apply(acts.last().unwrap());
        ForwardCache {
            logits: logits.row(0).to_owned(),
            activations: acts.into_iter().map(|a| a.row(0).to_owned()).collect(),
        }
    }

    pub fn predict(&self, input: &[Value]) -> Value {
        let class = self.forward_with_cache(input).argmax();
        self.task
            .value_of_class(class)
            .expect("class index within output domain")
    }

    /// Fraction of inputs whose argmax matches the task's ground truth, and the mean loss.
    pub fn evaluate(&self, enumeration: &InputEnumeration) -> Result<(f64, f64)> {
        let tokens = self.tokens(enumeration.inputs());
        let labels = labels(self.task, enumeration.inputs())?;
        let logits = self.forward_batch(&tokens);
        let correct = logits
            .axis_iter(Axis(0))
            .zip(&labels)
            .filter(|(row, &l)| argmax(*row) == l)
            .count();
        Ok((correct as f64 / labels.len() as f64, cross_entropy(&logits, &labels)))
    }

    /// Records the parameters on `tape`; `trainable` decides whether they need gradients.
    pub fn record_params(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        ParamVars(
            self.params()
                .into_iter()
                .map(|p| {
                    if trainable {
                        tape.param(p.clone())
                    } else {
                        tape.constant(p.clone())
                    }
                })
                .collect(),
        )
    }

    /// Records the hidden layers `from..` and the head, starting at activation `h`.
    /// `from = 0` starts at the embedding output.
    pub fn record_layers(&self, tape: &mut Tape, params: &ParamVars, from: usize, mut h: Var) -> Var {
        let p = &params.0;
        for l in from..self.hidden.len() {
            let z = tape.matmul(h, p[1 + 2 * l]);
            let z = tape.add_row(z, p[2 + 2 * l]);
            h = tape.activate(z, self.config.activation);
        }
        let k = 1 + 2 * self.hidden.len();
        let z = tape.matmul(h, p[k]);
        tape.add_row(z, p[k + 1])
    }

    /// Records a full forward pass with mean cross-entropy against `targets`.
    pub fn record_loss(
        &self,
        tape: &mut Tape,
        params: &ParamVars,
        tokens: Vec<Vec<usize>>,
        targets: Vec<usize>,
    ) -> Var {
        let x = tape.gather(params.0[0], tokens);
        let logits = self.record_layers(tape, params, 0, x);
        tape.softmax_ce(logits, targets)
    }

    /// Mean loss and its gradient for every parameter, in [`Self::params`] order.
    pub fn loss_and_grad(&self, tokens: &[Vec<usize>], targets: &[usize]) -> (f64, Vec<Array2<f64>>) {
        let mut tape = Tape::new();
        let params = self.record_params(&mut tape, true);
        let loss = self.record_loss(&mut tape, &params, tokens.to_vec(), targets.to_vec());
        let mut g = tape.backward(loss);
        let grads = params
            .0
            .iter()
            .map(|&v| g.take(v).unwrap_or_else(|| Array2::zeros(tape.value(v).raw_dim())))
            .collect();
        (tape.value(loss)[[0, 0]], grads)
    }

    pub fn loss(&self, tokens: &[Vec<usize>], targets: &[usize]) -> f64 {
        cross_entropy(&self.forward_batch(tokens), targets)
    }
}

fn labels(task: TaskKind, inputs: &[Vec<Value>]) -> Result<Vec<usize>> {
    inputs
        .iter()
        .map(|i| {
            let v = task.ground_truth(i)?;
            task.class_of(v).ok_or_else(|| Error::OutOfDomain {
                variable: "O".into(),
                value: v.to_string(),
            })
        })
        .collect()
}

/// Summary of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub steps: usize,
    pub final_loss: f64,
    pub accuracy: f64,
}

/// Trains on the full input enumeration, reshuffled every epoch, with plain
/// minibatch gradient descent. Fails if accuracy is not perfect by the end of
/// the epoch budget.
pub fn train_net(task: TaskKind, config: &NetConfig, seed: u64) -> Result<(TinyNet, TrainReport)> {
    let enumeration = enumerate_inputs(task, None)?;
    train_net_on(&enumeration, config, seed)
}

pub fn train_net_on(enumeration: &InputEnumeration, config: &NetConfig, seed: u64) -> Result<(TinyNet, TrainReport)> {
    let task = enumeration.task();
    let mut net = TinyNet::init(task, config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let tokens = net.tokens(enumeration.inputs());
    let labels = labels(task, enumeration.inputs())?;
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    let mut steps = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bt: Vec<Vec<usize>> = batch.iter().map(|&i| tokens[i].clone()).collect();
            let bl: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = net.loss_and_grad(&bt, &bl);
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            for (p, g) in net.params_mut().into_iter().zip(&grads) {
                p.scaled_add(-config.learning_rate, g);
            }
            steps += 1;
        }
        let (acc, loss) = net.evaluate(enumeration)?;
        if epoch % 50 == 0 {
            debug!("epoch {epoch}: loss {loss:.5}, accuracy {acc:.4}");
        }
        if acc == 1.0 && loss < config.target_loss {
            info!("{task} net converged after {epoch} epochs (loss {loss:.5})");
            return Ok((
                net,
                TrainReport {
                    epochs: epoch,
                    steps,
                    final_loss: loss,
                    accuracy: acc,
                },
            ));
        }
    }
    let (acc, loss) = net.evaluate(enumeration)?;
    Err(Error::Training(format!(
        "{task} net reached accuracy {acc:.4} (loss {loss:.5}) after {} epochs; a perfect fit is required",
        config.max_epochs
    )))
}

/// Largest relative error between reverse-mode gradients and central
/// differences (step `1e-4`) over `probes` random parameter coordinates, at a
/// random batch with random targets.
pub fn grad_check(net: &TinyNet, probes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enumeration = enumerate_inputs(net.task, None)?;
    let batch: Vec<Vec<usize>> = (0..8)
        .map(|_| tokenize(net.task, &enumeration.inputs()[rng.gen_range(0..enumeration.len())]))
        .collect();
    let targets: Vec<usize> = (0..8).map(|_| rng.gen_range(0..net.task.num_classes())).collect();
    let (_, grads) = net.loss_and_grad(&batch, &targets);
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let mut worst: f64 = 0.0;
    let mut probe_net = net.clone();
    for _ in 0..probes {
        let which = rng.gen_range(0..sizes.len());
        let flat = rng.gen_range(0..sizes[which]);
        let analytic = grads[which].as_slice().unwrap()[flat];
        let numeric = central_difference(&mut probe_net, which, flat, |n| n.loss(&batch, &targets));
        worst = worst.max(relative_error(analytic, numeric));
    }
    Ok(worst)
}

pub const FD_STEP: f64 = 1e-4;

fn central_difference(net: &mut TinyNet, which: usize, flat: usize, f: impl Fn(&TinyNet) -> f64) -> f64 {
    let orig = net.params()[which].as_slice().unwrap()[flat];
    net.params_mut()[which].as_slice_mut().unwrap()[flat] = orig + FD_STEP;
    let plus = f(net);
    net.params_mut()[which].as_slice_mut().unwrap()[flat] = orig - FD_STEP;
    let minus = f(net);
    net.params_mut()[which].as_slice_mut().unwrap()[flat] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

/// `|a - b| / max(|a|, |b|, 1e-6)`. The floor keeps coordinates with
/// vanishing gradient from dominating through finite-difference noise.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
