//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is a tape: every operation computes its value eagerly and
//! records which nodes it read. [`Graph::backward`] walks the tape in
//! reverse, accumulating exact gradients for every node, so each network's
//! backward pass is correct by construction rather than hand-derived per
//! architecture. Nodes are appended in topological order by construction.

#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

/// Dense row-major tensor. Rank 1 to 3 is what the networks need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Tensor {
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            dims.iter().product::<usize>(),
            data.len(),
            "tensor data does not fill {dims:?}"
        );
        Tensor {
            dims: dims.to_vec(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            dims: vec![1],
            data: vec![v],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn rows(&self) -> usize {
        self.dims[0]
    }

    fn cols(&self) -> usize {
        self.dims[1]
    }
}

pub type VarId = usize;

/// Recorded operation; variants carry their parent ids and any constants.
enum Op {
    Leaf,
    MatMul(VarId, VarId),
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    AddBias(VarId, VarId),
    MulMask(VarId, Tensor),
    Relu(VarId),
    Sigmoid(VarId),
    Tanh(VarId),
    OneMinus(VarId),
    SumAll(VarId),
    ScaleConst(VarId, f64),
    SoftmaxVec(VarId),
    ConcatCols(Vec<VarId>),
    Conv1d {
        input: VarId,
        weight: VarId,
        bias: VarId,
        dilation: usize,
    },
    TakeLast(VarId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::MulMask(..) => "mul_mask",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::OneMinus(..) => "one_minus",
            Op::SumAll(..) => "sum_all",
            Op::ScaleConst(..) => "scale",
            Op::SoftmaxVec(..) => "softmax",
            Op::ConcatCols(..) => "concat_cols",
            Op::Conv1d { .. } => "conv1d",
            Op::TakeLast(..) => "take_last",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> VarId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, t: Tensor) -> VarId {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id].value
    }

    /// First node holding a non-finite value, with its op name.
    pub fn first_non_finite(&self) -> Option<(VarId, &'static str)> {
        self.nodes
            .iter()
            .position(|n| !n.value.is_finite())
            .map(|id| (id, self.nodes[id].op.name()))
    }

    /// (m x k) . (k x n) -> (m x n)
    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        debug_assert_eq!(k, vb.rows(), "matmul inner dims");
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &va.data[i * k..(i + 1) * k];
            let dest = &mut out[i * n..(i + 1) * n];
            for (p, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let brow = &vb.data[p * n..(p + 1) * n];
                for j in 0..n {
                    dest[j] += av * brow[j];
                }
            }
        }
        self.push(Tensor::from_vec(&[m, n], out), Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        let out = self.zip(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> VarId {
        let out = self.zip(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        let out = self.zip(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    fn zip(&self, a: VarId, b: VarId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        debug_assert_eq!(va.dims, vb.dims, "elementwise shape mismatch");
        Tensor {
            dims: va.dims.clone(),
            data: va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    /// (m x n) + bias(n), broadcast over rows.
    pub fn add_bias(&mut self, a: VarId, bias: VarId) -> VarId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[bias].value);
        let n = va.cols();
        debug_assert_eq!(vb.len(), n, "bias length");
        let mut data = va.data.clone();
        for row in data.chunks_mut(n) {
            for (v, b) in row.iter_mut().zip(&vb.data) {
                *v += b;
            }
        }
        let dims = va.dims.clone();
        self.push(Tensor { dims, data }, Op::AddBias(a, bias))
    }

    /// Elementwise multiply by a constant mask (dropout).
    pub fn mul_mask(&mut self, a: VarId, mask: Tensor) -> VarId {
        let va = &self.nodes[a].value;
        debug_assert_eq!(va.dims, mask.dims, "mask shape");
        let data = va.data.iter().zip(&mask.data).map(|(&x, &m)| x * m).collect();
        let dims = va.dims.clone();
        self.push(Tensor { dims, data }, Op::MulMask(a, mask))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let out = self.map(a, |x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        let out = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: VarId) -> VarId {
        let out = self.map(a, f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn one_minus(&mut self, a: VarId) -> VarId {
        let out = self.map(a, |x| 1.0 - x);
        self.push(out, Op::OneMinus(a))
    }

    fn map(&self, a: VarId, f: impl Fn(f64) -> f64) -> Tensor {
        let va = &self.nodes[a].value;
        Tensor {
            dims: va.dims.clone(),
            data: va.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum_all(&mut self, a: VarId) -> VarId {
        let s: f64 = self.nodes[a].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let out = self.map(a, |x| c * x);
        self.push(out, Op::ScaleConst(a, c))
    }

    /// Softmax over all entries of a (small) vector-shaped tensor.
    pub fn softmax_vec(&mut self, a: VarId) -> VarId {
        let va = &self.nodes[a].value;
        let max = va.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = va.data.iter().map(|&x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let data = exps.into_iter().map(|e| e / sum).collect();
        let dims = va.dims.clone();
        self.push(Tensor { dims, data }, Op::SoftmaxVec(a))
    }

    /// Stack k column vectors (B x 1) into a (B x k) matrix.
    pub fn concat_cols(&mut self, cols: Vec<VarId>) -> VarId {
        let b = self.nodes[cols[0]].value.rows();
        let k = cols.len();
        let mut data = vec![0.0; b * k];
        for (j, &c) in cols.iter().enumerate() {
            let vc = &self.nodes[c].value;
            debug_assert_eq!(vc.dims, vec![b, 1], "concat_cols expects B x 1 inputs");
            for i in 0..b {
                data[i * k + j] = vc.data[i];
            }
        }
        self.push(Tensor::from_vec(&[b, k], data), Op::ConcatCols(cols))
    }

    /// Dilated causal 1-D convolution with left zero padding.
    ///
    /// input `B x C_in x L`, weight `C_out x C_in x K`, bias `C_out`;
    /// output `B x C_out x L` where out[b, o, t] only reads inputs at
    /// `t - j * dilation` for `j < K`, so no future timestep leaks in.
    pub fn conv1d_causal(&mut self, input: VarId, weight: VarId, bias: VarId, dilation: usize) -> VarId {
        let (vi, vw, vb) = (
            &self.nodes[input].value,
            &self.nodes[weight].value,
            &self.nodes[bias].value,
        );
        let (b, c_in, l) = (vi.dims[0], vi.dims[1], vi.dims[2]);
        let (c_out, wc_in, k) = (vw.dims[0], vw.dims[1], vw.dims[2]);
        debug_assert_eq!(c_in, wc_in, "conv channel mismatch");
        debug_assert_eq!(vb.len(), c_out, "conv bias length");
        let mut out = vec![0.0; b * c_out * l];
        for bi in 0..b {
            for o in 0..c_out {
                for t in 0..l {
                    let mut acc = vb.data[o];
                    for c in 0..c_in {
                        for j in 0..k {
                            let offset = j * dilation;
                            if offset > t {
                                break;
                            }
                            acc += vw.data[(o * c_in + c) * k + j]
                                * vi.data[(bi * c_in + c) * l + (t - offset)];
                        }
                    }
                    out[(bi * c_out + o) * l + t] = acc;
                }
            }
        }
        self.push(
            Tensor::from_vec(&[b, c_out, l], out),
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation,
            },
        )
    }

    /// Last timestep of a `B x C x L` tensor as `B x C`.
    pub fn take_last(&mut self, a: VarId) -> VarId {
        let va = &self.nodes[a].value;
        let (b, c, l) = (va.dims[0], va.dims[1], va.dims[2]);
        let mut data = vec![0.0; b * c];
        for bi in 0..b {
            for ci in 0..c {
                data[bi * c + ci] = va.data[(bi * c + ci) * l + (l - 1)];
            }
        }
        self.push(Tensor::from_vec(&[b, c], data), Op::TakeLast(a))
    }

    /// Mean squared error between predictions (B x 1) and constant targets.
    pub fn mse_loss(&mut self, pred: VarId, targets: &[f64]) -> VarId {
        let n = self.nodes[pred].value.len();
        debug_assert_eq!(n, targets.len(), "target length");
        let t = self.leaf(Tensor::from_vec(&[n, 1], targets.to_vec()));
        let diff = self.sub(pred, t);
        let sq = self.mul(diff, diff);
        let sum = self.sum_all(sq);
        self.scale(sum, 1.0 / n as f64)
    }

    /// Reverse-mode sweep from a scalar root. Returns one gradient slot per
    /// node; leaves the caller cares about are indexed by their `VarId`.
    pub fn backward(&self, root: VarId) -> Vec<Option<Tensor>> {
        debug_assert_eq!(self.nodes[root].value.len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Tensor::scalar(1.0));

        for id in (0..=root).rev() {
            let Some(g) = grads[id].clone() else { continue };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    // dA = G . B^T
                    let mut da = Tensor::zeros(&va.dims);
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g.data[i * n + j] * vb.data[p * n + j];
                            }
                            da.data[i * k + p] = acc;
                        }
                    }
                    // dB = A^T . G
                    let mut db = Tensor::zeros(&vb.dims);
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += va.data[i * k + p] * g.data[i * n + j];
                            }
                            db.data[p * n + j] = acc;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    let neg = Tensor {
                        dims: g.dims.clone(),
                        data: g.data.iter().map(|v| -v).collect(),
                    };
                    accumulate(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let da = hadamard(&g, &self.nodes[*b].value);
                    let db = hadamard(&g, &self.nodes[*a].value);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddBias(a, bias) => {
                    accumulate(&mut grads, *a, g.clone());
                    let n = self.nodes[*bias].value.len();
                    let mut db = Tensor::zeros(&self.nodes[*bias].value.dims);
                    for row in g.data.chunks(n) {
                        for (d, &gv) in db.data.iter_mut().zip(row) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                }
                Op::MulMask(a, mask) => {
                    accumulate(&mut grads, *a, hadamard(&g, mask));
                }
                Op::Relu(a) => {
                    let va = &self.nodes[*a].value;
                    let data = g
                        .data
                        .iter()
                        .zip(&va.data)
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor {
                            dims: g.dims.clone(),
                            data,
                        },
                    );
                }
                Op::Sigmoid(a) => {
                    let out = &self.nodes[id].value;
                    let data = g
                        .data
                        .iter()
                        .zip(&out.data)
                        .map(|(&gv, &s)| gv * s * (1.0 - s))
                        .collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor {
                            dims: g.dims.clone(),
                            data,
                        },
                    );
                }
                Op::Tanh(a) => {
                    let out = &self.nodes[id].value;
                    let data = g
                        .data
                        .iter()
                        .zip(&out.data)
                        .map(|(&gv, &t)| gv * (1.0 - t * t))
                        .collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor {
                            dims: g.dims.clone(),
                            data,
                        },
                    );
                }
                Op::OneMinus(a) => {
                    let data = g.data.iter().map(|v| -v).collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor {
                            dims: g.dims.clone(),
                            data,
                        },
                    );
                }
                Op::SumAll(a) => {
                    let va = &self.nodes[*a].value;
                    let data = vec![g.data[0]; va.len()];
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor {
                            dims: va.dims.clone(),
                            data,
                        },
                    );
                }
                Op::ScaleConst(a, c) => {
                    let data = g.data.iter().map(|v| c * v).collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor {
                            dims: g.dims.clone(),
                            data,
                        },
                    );
                }
                Op::SoftmaxVec(a) => {
                    let out = &self.nodes[id].value;
                    let dot: f64 = g.data.iter().zip(&out.data).map(|(&gv, &s)| gv * s).sum();
                    let data = g
                        .data
                        .iter()
                        .zip(&out.data)
                        .map(|(&gv, &s)| s * (gv - dot))
                        .collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor {
                            dims: g.dims.clone(),
                            data,
                        },
                    );
                }
                Op::ConcatCols(cols) => {
                    let k = cols.len();
                    let b = g.rows();
                    for (j, &c) in cols.iter().enumerate() {
                        let mut dc = Tensor::zeros(&[b, 1]);
                        for i in 0..b {
                            dc.data[i] = g.data[i * k + j];
                        }
                        accumulate(&mut grads, c, dc);
                    }
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    dilation,
                } => {
                    let vi = &self.nodes[*input].value;
                    let vw = &self.nodes[*weight].value;
                    let (b, c_in, l) = (vi.dims[0], vi.dims[1], vi.dims[2]);
                    let (c_out, _, k) = (vw.dims[0], vw.dims[1], vw.dims[2]);
                    let mut di = Tensor::zeros(&vi.dims);
                    let mut dw = Tensor::zeros(&vw.dims);
                    let mut db = Tensor::zeros(&self.nodes[*bias].value.dims);
                    for bi in 0..b {
                        for o in 0..c_out {
                            for t in 0..l {
                                let gv = g.data[(bi * c_out + o) * l + t];
                                if gv == 0.0 {
                                    continue;
                                }
                                db.data[o] += gv;
                                for c in 0..c_in {
                                    for j in 0..k {
                                        let offset = j * *dilation;
                                        if offset > t {
                                            break;
                                        }
                                        let src = (bi * c_in + c) * l + (t - offset);
                                        dw.data[(o * c_in + c) * k + j] += gv * vi.data[src];
                                        di.data[src] += gv * vw.data[(o * c_in + c) * k + j];
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *input, di);
                    accumulate(&mut grads, *weight, dw);
                    accumulate(&mut grads, *bias, db);
                }
                Op::TakeLast(a) => {
                    let va = &self.nodes[*a].value;
                    let (b, c, l) = (va.dims[0], va.dims[1], va.dims[2]);
                    let mut da = Tensor::zeros(&va.dims);
                    for bi in 0..b {
                        for ci in 0..c {
                            da.data[(bi * c + ci) * l + (l - 1)] = g.data[bi * c + ci];
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
            }
        }
        grads
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    Tensor {
        dims: a.dims.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect(),
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: VarId, delta: Tensor) {
    match &mut grads[id] {
        Some(g) => {
            for (gv, dv) in g.data.iter_mut().zip(&delta.data) {
                *gv += dv;
            }
        }
        slot => *slot = Some(delta),
    }
}
