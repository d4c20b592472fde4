//! Graph builders for the five architectures.
//!
//! Each builder turns a parameter set plus a batch into a tape, returning
//! the prediction node and the leaf ids of every parameter (in parameter
//! order) so the caller can read their gradients back out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::tape::{Graph, Tensor, VarId};
use super::{Arch, Batch, Mode, ModelSpec, ParameterSet};

pub(crate) struct BuiltForward {
    pub prediction: VarId,
    /// Leaf id per parameter, aligned with the parameter set order.
    pub param_ids: Vec<VarId>,
}

struct Builder<'g> {
    g: &'g mut Graph,
    names: Vec<String>,
    ids: Vec<VarId>,
    dropout_p: f64,
    rng: Option<ChaCha8Rng>,
}

impl<'g> Builder<'g> {
    fn new(g: &'g mut Graph, params: &ParameterSet, spec: &ModelSpec, mode: Mode) -> Builder<'g> {
        let mut names = Vec::with_capacity(params.len());
        let mut ids = Vec::with_capacity(params.len());
        for (name, tensor) in params.iter() {
            names.push(name.clone());
            ids.push(g.leaf(tensor.clone()));
        }
        let rng = match mode {
            Mode::Train { dropout_seed } if spec.dropout_p > 0.0 => {
                Some(ChaCha8Rng::seed_from_u64(dropout_seed))
            }
            _ => None,
        };
        Builder {
            g,
            names,
            ids,
            dropout_p: spec.dropout_p,
            rng,
        }
    }

    fn p(&self, name: &str) -> VarId {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        self.ids[idx]
    }

    /// Inverted dropout: zero with probability p, otherwise scale by
    /// 1/(1-p), so inference needs no rescaling. Identity in eval mode.
    fn dropout(&mut self, id: VarId) -> VarId {
        if self.rng.is_none() {
            return id;
        }
        let dims = self.g.value(id).dims.clone();
        let keep = 1.0 / (1.0 - self.dropout_p);
        let p = self.dropout_p;
        let n: usize = dims.iter().product();
        let rng = self.rng.as_mut().expect("checked above");
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.g.mul_mask(id, Tensor::from_vec(&dims, mask))
    }

    fn linear(&mut self, x: VarId, w: &str, b: &str) -> VarId {
        let wx = self.g.matmul(x, self.p(w));
        self.g.add_bias(wx, self.p(b))
    }
}

/// Per-timestep input matrix (B x f) for step `t`.
fn timestep(batch: &Batch, t: usize) -> Tensor {
    let (b, l, f) = (batch.rows, batch.window, batch.features);
    let mut data = Vec::with_capacity(b * f);
    for row in 0..b {
        let start = (row * l + t) * f;
        data.extend_from_slice(&batch.data[start..start + f]);
    }
    Tensor::from_vec(&[b, f], data)
}

/// Whole batch as B x f x L for the convolutional stack.
fn batch_channels_last(batch: &Batch) -> Tensor {
    let (b, l, f) = (batch.rows, batch.window, batch.features);
    let mut data = vec![0.0; b * f * l];
    for row in 0..b {
        for t in 0..l {
            for c in 0..f {
                data[(row * f + c) * l + t] = batch.data[(row * l + t) * f + c];
            }
        }
    }
    Tensor::from_vec(&[b, f, l], data)
}

pub(crate) fn build_forward(
    spec: &ModelSpec,
    params: &ParameterSet,
    g: &mut Graph,
    batch: &Batch,
    mode: Mode,
) -> Result<BuiltForward> {
    spec.validate()?;
    let mut b = Builder::new(g, params, spec, mode);
    let prediction = match spec.arch {
        Arch::Ffnn => ffnn(&mut b, spec, batch),
        Arch::Lstm => lstm(&mut b, spec, batch),
        Arch::Gru => gru(&mut b, spec, batch),
        Arch::Tcn => tcn(&mut b, spec, batch),
        Arch::NnHmm => nn_hmm(&mut b, spec, batch),
    };
    Ok(BuiltForward {
        prediction,
        param_ids: b.ids,
    })
}

/// Flattened window -> input linear -> hidden (linear, ReLU, dropout)
/// stack -> output linear.
fn ffnn(b: &mut Builder, spec: &ModelSpec, batch: &Batch) -> VarId {
    let x = b.g.leaf(Tensor::from_vec(
        &[batch.rows, batch.window * batch.features],
        batch.data.clone(),
    ));
    let mut h = b.linear(x, "in.w", "in.b");
    for l in 0..spec.num_hidden_layers {
        h = b.linear(h, &format!("hidden{l}.w"), &format!("hidden{l}.b"));
        h = b.g.relu(h);
        h = b.dropout(h);
    }
    b.linear(h, "out.w", "out.b")
}

/// Input linear per timestep, standard LSTM cell, last hidden state into
/// the output linear.
fn lstm(b: &mut Builder, spec: &ModelSpec, batch: &Batch) -> VarId {
    let zeros = Tensor::zeros(&[batch.rows, spec.hidden_dim]);
    let mut h = b.g.leaf(zeros.clone());
    let mut c = b.g.leaf(zeros);
    for t in 0..batch.window {
        let x = b.g.leaf(timestep(batch, t));
        let m = b.linear(x, "in.w", "in.b");
        let gate = |b: &mut Builder, w: &str, u: &str, bias: &str, h_prev: VarId| {
            let mw = b.g.matmul(m, b.p(w));
            let hu = b.g.matmul(h_prev, b.p(u));
            let s = b.g.add(mw, hu);
            b.g.add_bias(s, b.p(bias))
        };
        let i_pre = gate(b, "lstm.i.w", "lstm.i.u", "lstm.i.b", h);
        let f_pre = gate(b, "lstm.f.w", "lstm.f.u", "lstm.f.b", h);
        let g_pre = gate(b, "lstm.g.w", "lstm.g.u", "lstm.g.b", h);
        let o_pre = gate(b, "lstm.o.w", "lstm.o.u", "lstm.o.b", h);
        let i = b.g.sigmoid(i_pre);
        let f = b.g.sigmoid(f_pre);
        let cand = b.g.tanh(g_pre);
        let o = b.g.sigmoid(o_pre);
        let fc = b.g.mul(f, c);
        let ig = b.g.mul(i, cand);
        c = b.g.add(fc, ig);
        let tc = b.g.tanh(c);
        h = b.g.mul(o, tc);
    }
    let h = b.dropout(h);
    b.linear(h, "out.w", "out.b")
}

/// Input linear + ReLU per timestep, GRU cell, last timestep into the
/// output linear.
fn gru(b: &mut Builder, spec: &ModelSpec, batch: &Batch) -> VarId {
    let mut h = b.g.leaf(Tensor::zeros(&[batch.rows, spec.hidden_dim]));
    for t in 0..batch.window {
        let x = b.g.leaf(timestep(batch, t));
        let lin = b.linear(x, "in.w", "in.b");
        let m = b.g.relu(lin);
        let gate = |b: &mut Builder, w: &str, u: &str, bias: &str, from: VarId| {
            let mw = b.g.matmul(m, b.p(w));
            let hu = b.g.matmul(from, b.p(u));
            let s = b.g.add(mw, hu);
            b.g.add_bias(s, b.p(bias))
        };
        let z_pre = gate(b, "gru.z.w", "gru.z.u", "gru.z.b", h);
        let r_pre = gate(b, "gru.r.w", "gru.r.u", "gru.r.b", h);
        let z = b.g.sigmoid(z_pre);
        let r = b.g.sigmoid(r_pre);
        let rh = b.g.mul(r, h);
        let n_pre = gate(b, "gru.n.w", "gru.n.u", "gru.n.b", rh);
        let n = b.g.tanh(n_pre);
        let zc = b.g.one_minus(z);
        let zn = b.g.mul(zc, n);
        let zh = b.g.mul(z, h);
        h = b.g.add(zn, zh);
    }
    let h = b.dropout(h);
    b.linear(h, "out.w", "out.b")
}

/// One temporal block: two dilated causal convolutions, each followed by
/// ReLU and dropout, a residual connection (1x1-projected when channel
/// counts differ), and a ReLU over the sum.
fn temporal_block(
    b: &mut Builder,
    input: VarId,
    conv1: (VarId, VarId),
    conv2: (VarId, VarId),
    projection: Option<(VarId, VarId)>,
    dilation: usize,
) -> VarId {
    let y = b.g.conv1d_causal(input, conv1.0, conv1.1, dilation);
    let y = b.g.relu(y);
    let y = b.dropout(y);
    let y = b.g.conv1d_causal(y, conv2.0, conv2.1, dilation);
    let y = b.g.relu(y);
    let y = b.dropout(y);
    let residual = match projection {
        Some((w, bias)) => b.g.conv1d_causal(input, w, bias, 1),
        None => input,
    };
    let sum = b.g.add(y, residual);
    b.g.relu(sum)
}

/// 1x1 alignment convolution, a stack of temporal blocks with dilation
/// `base^i`, output linear on the final timestep.
fn tcn(b: &mut Builder, spec: &ModelSpec, batch: &Batch) -> VarId {
    let x = b.g.leaf(batch_channels_last(batch));
    let align_w = b.p("align.w");
    let align_b = b.p("align.b");
    let mut z = b.g.conv1d_causal(x, align_w, align_b, 1);
    let mut dilation = 1;
    for block in 0..spec.tcn.num_blocks {
        let c1 = (b.p(&format!("block{block}.conv1.w")), b.p(&format!("block{block}.conv1.b")));
        let c2 = (b.p(&format!("block{block}.conv2.w")), b.p(&format!("block{block}.conv2.b")));
        // Channel counts stay at hidden_dim after alignment, so no
        // projection is needed here; the block still supports one.
        z = temporal_block(b, z, c1, c2, None, dilation);
        dilation *= spec.tcn.dilation_base;
    }
    let last = b.g.take_last(z);
    b.linear(last, "out.w", "out.b")
}

/// K emission MLPs over the last timestep's features, combined by
/// softmax-normalized learned log-weights.
fn nn_hmm(b: &mut Builder, spec: &ModelSpec, batch: &Batch) -> VarId {
    let x = b.g.leaf(timestep(batch, batch.window - 1));
    let mut emissions = Vec::with_capacity(spec.hmm_states);
    for k in 0..spec.hmm_states {
        let lin = b.linear(x, &format!("state{k}.in.w"), &format!("state{k}.in.b"));
        let a = b.g.relu(lin);
        let a = b.dropout(a);
        emissions.push(b.linear(a, &format!("state{k}.out.w"), &format!("state{k}.out.b")));
    }
    let stacked = b.g.concat_cols(emissions);
    let logw = b.p("mix.logw");
    let weights = b.g.softmax_vec(logw);
    b.g.matmul(stacked, weights)
}

#[cfg(test)]
pub(crate) fn temporal_block_for_test(
    g: &mut Graph,
    input: Tensor,
    conv1: (Tensor, Tensor),
    conv2: (Tensor, Tensor),
    projection: Option<(Tensor, Tensor)>,
    dilation: usize,
) -> (VarId, Vec<VarId>) {
    let mut leaves = Vec::new();
    let input = g.leaf(input);
    let c1w = g.leaf(conv1.0);
    let c1b = g.leaf(conv1.1);
    let c2w = g.leaf(conv2.0);
    let c2b = g.leaf(conv2.1);
    leaves.extend([c1w, c1b, c2w, c2b]);
    let proj = projection.map(|(w, bias)| {
        let w = g.leaf(w);
        let bias = g.leaf(bias);
        leaves.push(w);
        leaves.push(bias);
        (w, bias)
    });
    let mut b = Builder {
        g,
        names: Vec::new(),
        ids: Vec::new(),
        dropout_p: 0.0,
        rng: None,
    };
    let out = temporal_block(&mut b, input, (c1w, c1b), (c2w, c2b), proj, dilation);
    (out, leaves)
}
