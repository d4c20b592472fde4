//! The five forecasting architectures, trained from scratch at 64-bit
//! precision with exact reverse-mode gradients.
//!
//! Every architecture starts with a linear map from the per-timestep input
//! width into `hidden_dim`, then diverges:
//!
//! | arch   | structure                                                      | parameters                                          |
//! |--------|----------------------------------------------------------------|-----------------------------------------------------|
//! | FFNN   | flatten window, input linear, H x (linear+ReLU+dropout), out   | (Lf+1)h + H(h+1)h + (h+1)                            |
//! | LSTM   | input linear per step, LSTM recurrence, last state, out linear | (f+1)h + 4(2h+1)h + (h+1)                            |
//! | GRU    | input linear + ReLU per step, GRU recurrence, last step, out   | (f+1)h + 3(2h+1)h + (h+1)                            |
//! | TCN    | 1x1 align conv, B blocks of two dilated causal convs, out      | (f+1)h + B*2*(kh+1)h + (h+1)                         |
//! | NN-HMM | K emission MLPs on the last step, softmax-mixed                | K((f+1)h + (h+1)) + K                                |
//!
//! (`f` per-step features, `L` window, `h` hidden, `H` hidden layers,
//! `k` kernel, `B` blocks, `K` states. Dropout sits after every hidden
//! ReLU, inside TCN blocks, and on the last recurrent state before the
//! output linear; inverted scaling keeps inference mask-free.)

mod arch;
pub mod fdcheck;
mod tape;
mod train;

pub use tape::{Graph, Tensor, VarId};
pub use train::{
    hyperparameter_search, predict, predict_rows, train, EpochStats, SearchResult, SearchSpace,
    TrainedModel, TrialRecord,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DatasetVariant;

/// Architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(alias = "FFNN")]
    Ffnn,
    #[serde(alias = "LSTM")]
    Lstm,
    #[serde(alias = "GRU")]
    Gru,
    #[serde(alias = "TCN")]
    Tcn,
    #[serde(alias = "NN_HMM")]
    NnHmm,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Ffnn, Arch::Lstm, Arch::Gru, Arch::Tcn, Arch::NnHmm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Arch::Ffnn => "FFNN",
            Arch::Lstm => "LSTM",
            Arch::Gru => "GRU",
            Arch::Tcn => "TCN",
            Arch::NnHmm => "NN_HMM",
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_uppercase().replace('-', "_").as_str() {
            "FFNN" => Ok(Arch::Ffnn),
            "LSTM" => Ok(Arch::Lstm),
            "GRU" => Ok(Arch::Gru),
            "TCN" => Ok(Arch::Tcn),
            "NN_HMM" | "NNHMM" | "HMM" => Ok(Arch::NnHmm),
            other => Err(Error::Param(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcnOptions {
    pub kernel_size: usize,
    pub num_blocks: usize,
    pub dilation_base: usize,
}

impl Default for TcnOptions {
    fn default() -> Self {
        TcnOptions {
            kernel_size: 3,
            num_blocks: 3,
            dilation_base: 2,
        }
    }
}

/// Full description of one trainable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    /// Per-timestep feature width.
    pub input_dim: usize,
    /// Window length in timesteps.
    pub window: usize,
    pub hidden_dim: usize,
    pub num_hidden_layers: usize,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub tcn: TcnOptions,
    /// Hidden state count for the NN-HMM mixture.
    pub hmm_states: usize,
}

impl ModelSpec {
    pub fn new(arch: Arch, input_dim: usize, window: usize) -> ModelSpec {
        ModelSpec {
            arch,
            input_dim,
            window,
            hidden_dim: 32,
            num_hidden_layers: 1,
            dropout_p: 0.3,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 500,
            seed: 0,
            tcn: TcnOptions::default(),
            hmm_states: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.window == 0 || self.hidden_dim == 0 {
            return Err(Error::Param("model dims must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Param(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch_size must be >= 1".into()));
        }
        if self.arch == Arch::NnHmm && self.hmm_states == 0 {
            return Err(Error::Param("hmm_states must be >= 1".into()));
        }
        if self.arch == Arch::Tcn
            && (self.tcn.kernel_size == 0 || self.tcn.num_blocks == 0 || self.tcn.dilation_base == 0)
        {
            return Err(Error::Param("tcn options must be positive".into()));
        }
        Ok(())
    }

    /// Timesteps the TCN output can see: 1 + sum over blocks of
    /// 2 * (kernel - 1) * dilation.
    pub fn tcn_receptive_field(&self) -> usize {
        let mut field = 1;
        let mut dilation = 1;
        for _ in 0..self.tcn.num_blocks {
            field += 2 * (self.tcn.kernel_size - 1) * dilation;
            dilation *= self.tcn.dilation_base;
        }
        field
    }
}

/// Shape of every named parameter tensor, in creation order.
pub fn param_shapes(spec: &ModelSpec) -> Vec<(String, Vec<usize>)> {
    let f = spec.input_dim;
    let h = spec.hidden_dim;
    let mut shapes = Vec::new();
    let mut push = |name: &str, dims: Vec<usize>| shapes.push((name.to_string(), dims));
    match spec.arch {
        Arch::Ffnn => {
            push("in.w", vec![spec.window * f, h]);
            push("in.b", vec![h]);
            for l in 0..spec.num_hidden_layers {
                push(&format!("hidden{l}.w"), vec![h, h]);
                push(&format!("hidden{l}.b"), vec![h]);
            }
            push("out.w", vec![h, 1]);
            push("out.b", vec![1]);
        }
        Arch::Lstm => {
            push("in.w", vec![f, h]);
            push("in.b", vec![h]);
            for gate in ["i", "f", "g", "o"] {
                push(&format!("lstm.{gate}.w"), vec![h, h]);
                push(&format!("lstm.{gate}.u"), vec![h, h]);
                push(&format!("lstm.{gate}.b"), vec![h]);
            }
            push("out.w", vec![h, 1]);
            push("out.b", vec![1]);
        }
        Arch::Gru => {
            push("in.w", vec![f, h]);
            push("in.b", vec![h]);
            for gate in ["z", "r", "n"] {
                push(&format!("gru.{gate}.w"), vec![h, h]);
                push(&format!("gru.{gate}.u"), vec![h, h]);
                push(&format!("gru.{gate}.b"), vec![h]);
            }
            push("out.w", vec![h, 1]);
            push("out.b", vec![1]);
        }
        Arch::Tcn => {
            push("align.w", vec![h, f, 1]);
            push("align.b", vec![h]);
            for b in 0..spec.tcn.num_blocks {
                push(&format!("block{b}.conv1.w"), vec![h, h, spec.tcn.kernel_size]);
                push(&format!("block{b}.conv1.b"), vec![h]);
                push(&format!("block{b}.conv2.w"), vec![h, h, spec.tcn.kernel_size]);
                push(&format!("block{b}.conv2.b"), vec![h]);
            }
            push("out.w", vec![h, 1]);
            push("out.b", vec![1]);
        }
        Arch::NnHmm => {
            for k in 0..spec.hmm_states {
                push(&format!("state{k}.in.w"), vec![f, h]);
                push(&format!("state{k}.in.b"), vec![h]);
                push(&format!("state{k}.out.w"), vec![h, 1]);
                push(&format!("state{k}.out.b"), vec![1]);
            }
            push("mix.logw", vec![spec.hmm_states, 1]);
        }
    }
    shapes
}

/// Total trainable parameter count for a spec.
pub fn param_count(spec: &ModelSpec) -> usize {
    param_shapes(spec)
        .iter()
        .map(|(_, dims)| dims.iter().product::<usize>())
        .sum()
}

/// Named parameter tensors plus lookup, in a stable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub(crate) fn from_entries(entries: Vec<(String, Tensor)>) -> ParameterSet {
        ParameterSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .1
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.entries.iter()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Copy with one element nudged by `delta` (finite-difference probes).
    pub fn perturbed(&self, index: usize, element: usize, delta: f64) -> ParameterSet {
        let mut out = self.clone();
        out.entries[index].1.data[element] += delta;
        out
    }
}

pub(crate) fn xavier_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Xavier-uniform weights, zero biases (and zero mixture log-weights),
/// deterministic for a given spec seed.
pub fn init_params(spec: &ModelSpec) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let entries = param_shapes(spec)
        .into_iter()
        .map(|(name, dims)| {
            let n: usize = dims.iter().product();
            // Weight matrices (".w", recurrent ".u") get Xavier; biases and
            // the mixture log-weights start at zero. Matrices are stored
            // (fan_in, fan_out); conv kernels (out, in, k) use
            // fan_in = in*k, fan_out = out*k.
            let tensor = if name.ends_with(".w") || name.ends_with(".u") {
                match dims.len() {
                    2 => Tensor::from_vec(&dims, xavier_uniform(&mut rng, dims[0], dims[1], n)),
                    _ => Tensor::from_vec(
                        &dims,
                        xavier_uniform(&mut rng, dims[1] * dims[2], dims[0] * dims[2], n),
                    ),
                }
            } else {
                Tensor::zeros(&dims)
            };
            (name, tensor)
        })
        .collect();
    ParameterSet { entries }
}

/// Whether dropout masks are active and how they are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout on; masks drawn from the given seed so a call is replayable.
    Train { dropout_seed: u64 },
    /// Deterministic inference, dropout off.
    Eval,
}

/// A gathered mini-batch: `rows x window x features`, row-major.
#[derive(Debug, Clone)]
pub struct Batch {
    pub data: Vec<f64>,
    pub rows: usize,
    pub window: usize,
    pub features: usize,
}

impl Batch {
    pub fn from_variant(variant: &DatasetVariant, rows: &[usize]) -> (Batch, Vec<f64>) {
        let stride = variant.window * variant.n_features();
        let mut data = Vec::with_capacity(rows.len() * stride);
        let mut targets = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(variant.row_window(r));
            targets.push(variant.y[r]);
        }
        (
            Batch {
                data,
                rows: rows.len(),
                window: variant.window,
                features: variant.n_features(),
            },
            targets,
        )
    }

    pub fn from_raw(rows: usize, window: usize, features: usize, data: Vec<f64>) -> Batch {
        assert_eq!(data.len(), rows * window * features);
        Batch {
            data,
            rows,
            window,
            features,
        }
    }
}

fn check_batch(spec: &ModelSpec, batch: &Batch) -> Result<()> {
    if batch.features != spec.input_dim || batch.window != spec.window {
        return Err(Error::Param(format!(
            "batch shape {}x{} does not match spec window {} x input_dim {}",
            batch.window, batch.features, spec.window, spec.input_dim
        )));
    }
    if batch.rows == 0 {
        return Err(Error::Param("empty batch".into()));
    }
    if !batch.data.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite batch input".into()));
    }
    Ok(())
}

/// Run the network forward; `Mode::Eval` is deterministic.
pub fn forward(spec: &ModelSpec, params: &ParameterSet, batch: &Batch, mode: Mode) -> Result<Vec<f64>> {
    check_batch(spec, batch)?;
    let mut graph = Graph::new();
    let pred = arch::build_forward(spec, params, &mut graph, batch, mode)?.prediction;
    let out = graph.value(pred);
    if !out.is_finite() {
        let (_, op) = graph.first_non_finite().unwrap_or((0, "output"));
        return Err(Error::Numeric(format!("non-finite activation in {op}")));
    }
    Ok(out.data.clone())
}

/// MSE loss and exact gradients for every parameter, aligned with the
/// parameter set's order. Dropout masks are fixed by the mode's seed, so
/// the gradient matches the exact function evaluated.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParameterSet,
    batch: &Batch,
    targets: &[f64],
    mode: Mode,
) -> Result<(f64, Vec<Tensor>)> {
    check_batch(spec, batch)?;
    if targets.len() != batch.rows {
        return Err(Error::Param("target length does not match batch".into()));
    }
    let mut graph = Graph::new();
    let built = arch::build_forward(spec, params, &mut graph, batch, mode)?;
    let loss_id = graph.mse_loss(built.prediction, targets);
    let loss = graph.value(loss_id).data[0];
    if !loss.is_finite() {
        let (_, op) = graph.first_non_finite().unwrap_or((0, "loss"));
        return Err(Error::Numeric(format!("non-finite loss (first bad op: {op})")));
    }
    let mut grads = graph.backward(loss_id);
    let out = built
        .param_ids
        .iter()
        .zip(params.iter())
        .map(|(&id, (_, t))| {
            grads[id]
                .take()
                .unwrap_or_else(|| Tensor::zeros(&t.dims))
        })
        .collect();
    Ok((loss, out))
}

/// Loss without gradients, same dropout semantics as [`loss_and_grad`].
pub fn loss_only(
    spec: &ModelSpec,
    params: &ParameterSet,
    batch: &Batch,
    targets: &[f64],
    mode: Mode,
) -> Result<f64> {
    check_batch(spec, batch)?;
    let mut graph = Graph::new();
    let built = arch::build_forward(spec, params, &mut graph, batch, mode)?;
    let loss_id = graph.mse_loss(built.prediction, targets);
    Ok(graph.value(loss_id).data[0])
}

/// Softmax-normalized NN-HMM mixture weights.
pub fn mixture_weights(spec: &ModelSpec, params: &ParameterSet) -> Result<Vec<f64>> {
    if spec.arch != Arch::NnHmm {
        return Err(Error::Param("mixture weights exist only for NN_HMM".into()));
    }
    let logw = params.get("mix.logw");
    let max = logw.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logw.data.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[cfg(test)]
mod tests;
