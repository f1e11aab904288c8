//! Per-forward-pass recording of operations ("tape") and the reverse
//! sweep that turns it into gradients.
//!
//! Every operation pushes one node holding its output tensor, so the
//! backward pass never recomputes forward values (conv2d re-unfolds its
//! input patches, which is cheaper than storing them). Node ids are
//! topologically ordered by construction: inputs always precede
//! consumers, and the reverse sweep visits each node exactly once.

use std::cell::{Cell, RefCell};

use super::kernels;
use super::{s, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Matmul,
    Transpose,
    Add,
    Mul,
    Scale(S),
    AddBias,
    Relu,
    SoftmaxRows,
    LayerNorm { eps: S },
    Conv1d { stride: usize, pad: usize },
    Conv2d { stride: usize, pad: usize },
    TemporalShift { per_dir: usize },
    MeanAxes { axes: Vec<usize> },
    SumAll,
    Reshape,
    Permute { perm: Vec<usize> },
    ConcatVec,
    CrossEntropy { target: usize },
    AddChannelBias2d,
}

struct Node<S> {
    op: Op<S>,
    inputs: Vec<usize>,
    value: Tensor<S>,
    needs_grad: bool,
}

/// Recording of one forward pass. Single-threaded by contract; distinct
/// tapes may live on distinct threads.
pub struct Tape<S: Scalar> {
    nodes: RefCell<Vec<Node<S>>>,
    poisoned: Cell<Option<usize>>,
}

/// Handle to a node on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t, S: Scalar> {
    tape: &'t Tape<S>,
    pub(crate) id: usize,
}

impl<S: Scalar> std::fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

/// Gradient buffers per node id after a backward sweep.
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
    numels: Vec<usize>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of a node if any path from the loss reached it.
    pub fn try_grad(&self, v: Var<'_, S>) -> Option<&[S]> {
        self.grads[v.id].as_deref()
    }

    /// Gradient of a node; exactly zero when the node is unused.
    pub fn grad(&self, v: Var<'_, S>) -> Vec<S> {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => vec![S::zero(); self.numels[v.id]],
        }
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            poisoned: Cell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First node whose forward output contained a NaN/Inf, if any.
    pub fn poisoned_node(&self) -> Option<usize> {
        self.poisoned.get()
    }

    /// Insert a leaf value. Gradients are tracked iff `t.requires_grad`.
    pub fn leaf(&self, t: Tensor<S>) -> Var<'_, S> {
        let needs_grad = t.requires_grad;
        self.push(Op::Leaf, vec![], t, needs_grad)
    }

    fn push(&self, op: Op<S>, inputs: Vec<usize>, value: Tensor<S>, needs_grad: bool) -> Var<'_, S> {
        if self.poisoned.get().is_none() && !value.all_finite() {
            self.poisoned.set(Some(self.nodes.borrow().len()));
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        debug_assert!(inputs.iter().all(|&i| i < id));
        nodes.push(Node {
            op,
            inputs,
            value,
            needs_grad,
        });
        Var { tape: self, id }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    fn value_clone(&self, id: usize) -> Tensor<S> {
        self.nodes.borrow()[id].value.clone()
    }

    fn shape_of(&self, id: usize) -> Vec<usize> {
        self.nodes.borrow()[id].value.shape().to_vec()
    }

    /// Reverse-topological accumulation from a scalar loss node.
    pub fn backward(&self, loss: Var<'_, S>) -> Result<Gradients<S>> {
        if let Some(id) = self.poisoned.get() {
            return Err(Error::Contract(format!(
                "non-finite value produced at node {id}"
            )));
        }
        let nodes = self.nodes.borrow();
        if !nodes[loss.id].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let numels: Vec<usize> = nodes.iter().map(|n| n.value.numel()).collect();
        let mut grads: Vec<Option<Vec<S>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![S::one()]);

        for id in (0..=loss.id).rev() {
            if !nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backward_node(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads, numels })
    }
}

/// Allocate-on-demand gradient buffer for an input node.
fn buf<'a, S: Scalar>(grads: &'a mut [Option<Vec<S>>], id: usize, numel: usize) -> &'a mut [S] {
    grads[id].get_or_insert_with(|| vec![S::zero(); numel])
}

fn backward_node<S: Scalar>(nodes: &[Node<S>], id: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
    let node = &nodes[id];
    let takes = |i: usize| -> bool { nodes[node.inputs[i]].needs_grad };
    let val = |i: usize| -> &Tensor<S> { &nodes[node.inputs[i]].value };

    match &node.op {
        Op::Leaf => {}
        Op::Matmul => {
            let (a, b) = (val(0), val(1));
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let n = b.shape()[1];
            if takes(0) {
                let d = buf(grads, node.inputs[0], m * k);
                kernels::matmul_abt_acc(g, b.data(), m, n, k, d);
            }
            if takes(1) {
                let d = buf(grads, node.inputs[1], k * n);
                kernels::matmul_atb_acc(a.data(), g, k, m, n, d);
            }
        }
        Op::Transpose => {
            if takes(0) {
                let x = val(0);
                let (r, c) = (x.shape()[0], x.shape()[1]);
                let d = buf(grads, node.inputs[0], r * c);
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] = d[i * c + j] + g[j * r + i];
                    }
                }
            }
        }
        Op::Add => {
            for t in 0..2 {
                if takes(t) {
                    let d = buf(grads, node.inputs[t], g.len());
                    for (dv, &gv) in d.iter_mut().zip(g) {
                        *dv = *dv + gv;
                    }
                }
            }
        }
        Op::Mul => {
            for t in 0..2 {
                if takes(t) {
                    let other = val(1 - t).data();
                    let d = buf(grads, node.inputs[t], g.len());
                    for ((dv, &gv), &ov) in d.iter_mut().zip(g).zip(other) {
                        *dv = *dv + gv * ov;
                    }
                }
            }
        }
        Op::Scale(c) => {
            if takes(0) {
                let d = buf(grads, node.inputs[0], g.len());
                for (dv, &gv) in d.iter_mut().zip(g) {
                    *dv = *dv + gv * *c;
                }
            }
        }
        Op::AddBias => {
            let cols = val(1).numel();
            if takes(0) {
                let d = buf(grads, node.inputs[0], g.len());
                for (dv, &gv) in d.iter_mut().zip(g) {
                    *dv = *dv + gv;
                }
            }
            if takes(1) {
                let d = buf(grads, node.inputs[1], cols);
                for row in g.chunks_exact(cols) {
                    for (dv, &gv) in d.iter_mut().zip(row) {
                        *dv = *dv + gv;
                    }
                }
            }
        }
        Op::Relu => {
            if takes(0) {
                let x = val(0).data();
                let d = buf(grads, node.inputs[0], g.len());
                for ((dv, &gv), &xv) in d.iter_mut().zip(g).zip(x) {
                    if xv > S::zero() {
                        *dv = *dv + gv;
                    }
                }
            }
        }
        Op::SoftmaxRows => {
            if takes(0) {
                let y = node.value.data();
                let cols = node.value.shape()[1];
                let rows = node.value.shape()[0];
                let d = buf(grads, node.inputs[0], g.len());
                kernels::softmax_rows_backward(y, g, rows, cols, d);
            }
        }
        Op::LayerNorm { eps } => {
            let x = val(0);
            let d = val(1).numel();
            let numel = x.numel();
            // gamma/beta gradients are accumulated even when only x needs
            // grad; the buffers are cheap and the branch is not worth it.
            let mut d_x = vec![S::zero(); numel];
            let mut d_gamma = vec![S::zero(); d];
            let mut d_beta = vec![S::zero(); d];
            kernels::layer_norm_backward(
                x.data(),
                val(1).data(),
                d,
                *eps,
                g,
                &mut d_x,
                &mut d_gamma,
                &mut d_beta,
            );
            if takes(0) {
                let dst = buf(grads, node.inputs[0], numel);
                for (o, v) in dst.iter_mut().zip(&d_x) {
                    *o = *o + *v;
                }
            }
            if takes(1) {
                let dst = buf(grads, node.inputs[1], d);
                for (o, v) in dst.iter_mut().zip(&d_gamma) {
                    *o = *o + *v;
                }
            }
            if takes(2) {
                let dst = buf(grads, node.inputs[2], d);
                for (o, v) in dst.iter_mut().zip(&d_beta) {
                    *o = *o + *v;
                }
            }
        }
        Op::Conv1d { stride, pad } => {
            let x = val(0);
            let w = val(1);
            let (c_in, t) = (x.shape()[0], x.shape()[1]);
            let (c_out, k) = (w.shape()[0], w.shape()[2]);
            let t_out = node.value.shape()[1];
            let mut d_x = vec![S::zero(); x.numel()];
            let mut d_w = vec![S::zero(); w.numel()];
            let mut d_b = vec![S::zero(); c_out];
            kernels::conv1d_backward(
                x.data(),
                w.data(),
                c_in,
                t,
                c_out,
                k,
                *stride,
                *pad,
                t_out,
                g,
                &mut d_x,
                &mut d_w,
                &mut d_b,
            );
            if takes(0) {
                let dst = buf(grads, node.inputs[0], x.numel());
                for (o, v) in dst.iter_mut().zip(&d_x) {
                    *o = *o + *v;
                }
            }
            if takes(1) {
                let dst = buf(grads, node.inputs[1], w.numel());
                for (o, v) in dst.iter_mut().zip(&d_w) {
                    *o = *o + *v;
                }
            }
            if takes(2) {
                let dst = buf(grads, node.inputs[2], c_out);
                for (o, v) in dst.iter_mut().zip(&d_b) {
                    *o = *o + *v;
                }
            }
        }
        Op::Conv2d { stride, pad } => {
            backward_conv2d(nodes, node, g, grads, *stride, *pad);
        }
        Op::TemporalShift { per_dir } => {
            if takes(0) {
                let shape = node.value.shape();
                let (t, c) = (shape[0], shape[1]);
                let plane = shape[2] * shape[3];
                let d = buf(grads, node.inputs[0], g.len());
                let per_dir = *per_dir;
                for ti in 0..t {
                    for ci in 0..c {
                        // where did out[ti, ci] read from?
                        let src_t = if ci < per_dir {
                            if ti == 0 {
                                continue;
                            }
                            ti - 1
                        } else if ci < 2 * per_dir {
                            if ti + 1 == t {
                                continue;
                            }
                            ti + 1
                        } else {
                            ti
                        };
                        let src = (src_t * c + ci) * plane;
                        let dst = (ti * c + ci) * plane;
                        for p in 0..plane {
                            d[src + p] = d[src + p] + g[dst + p];
                        }
                    }
                }
            }
        }
        Op::MeanAxes { axes } => {
            if takes(0) {
                let x = val(0);
                let shape = x.shape();
                let count: usize = axes.iter().map(|&a| shape[a]).product();
                let scale = S::one() / s::<S>(count as f64);
                let d = buf(grads, node.inputs[0], x.numel());
                for_each_reduced_index(shape, axes, |in_linear, out_linear| {
                    d[in_linear] = d[in_linear] + g[out_linear] * scale;
                });
            }
        }
        Op::SumAll => {
            if takes(0) {
                let n = val(0).numel();
                let d = buf(grads, node.inputs[0], n);
                let gv = g[0];
                for dv in d.iter_mut() {
                    *dv = *dv + gv;
                }
            }
        }
        Op::Reshape => {
            if takes(0) {
                let d = buf(grads, node.inputs[0], g.len());
                for (dv, &gv) in d.iter_mut().zip(g) {
                    *dv = *dv + gv;
                }
            }
        }
        Op::Permute { perm } => {
            if takes(0) {
                let x = val(0);
                let d = buf(grads, node.inputs[0], x.numel());
                scatter_permuted(x.shape(), perm, g, d);
            }
        }
        Op::ConcatVec => {
            let mut off = 0;
            for (slot, &inp) in node.inputs.iter().enumerate() {
                let n = nodes[inp].value.numel();
                if takes(slot) {
                    let d = buf(grads, inp, n);
                    for (dv, &gv) in d.iter_mut().zip(&g[off..off + n]) {
                        *dv = *dv + gv;
                    }
                }
                off += n;
            }
        }
        Op::CrossEntropy { target } => {
            if takes(0) {
                let logits = val(0).data();
                let n = logits.len();
                let mut probs = vec![S::zero(); n];
                kernels::softmax_rows(logits, 1, n, &mut probs);
                let d = buf(grads, node.inputs[0], n);
                let gv = g[0];
                for (j, (dv, &pv)) in d.iter_mut().zip(&probs).enumerate() {
                    let ind = if j == *target { S::one() } else { S::zero() };
                    *dv = *dv + gv * (pv - ind);
                }
            }
        }
        Op::AddChannelBias2d => {
            let map = val(0);
            let plane = map.shape()[2] * map.shape()[3];
            if takes(0) {
                let d = buf(grads, node.inputs[0], g.len());
                for (dv, &gv) in d.iter_mut().zip(g) {
                    *dv = *dv + gv;
                }
            }
            if takes(1) {
                let bc = val(1).numel();
                let d = buf(grads, node.inputs[1], bc);
                for (i, dv) in d.iter_mut().enumerate() {
                    let chunk = &g[i * plane..(i + 1) * plane];
                    let mut acc = S::zero();
                    for &gv in chunk {
                        acc = acc + gv;
                    }
                    *dv = *dv + acc;
                }
            }
        }
    }
}

fn backward_conv2d<S: Scalar>(
    nodes: &[Node<S>],
    node: &Node<S>,
    g: &[S],
    grads: &mut [Option<Vec<S>>],
    stride: usize,
    pad: usize,
) {
    let x = &nodes[node.inputs[0]].value;
    let w = &nodes[node.inputs[1]].value;
    let (bsz, c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (c_out, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (h_out, w_out) = (node.value.shape()[2], node.value.shape()[3]);
    let l = h_out * w_out;
    let r = c_in * kh * kw;
    let need_x = nodes[node.inputs[0]].needs_grad;
    let need_w = nodes[node.inputs[1]].needs_grad;
    let need_b = nodes[node.inputs[2]].needs_grad;

    let mut d_w = vec![S::zero(); w.numel()];
    let mut d_b = vec![S::zero(); c_out];
    let mut d_x = if need_x {
        vec![S::zero(); x.numel()]
    } else {
        Vec::new()
    };
    let mut col = vec![S::zero(); r * l];
    let mut d_col = vec![S::zero(); r * l];

    for b in 0..bsz {
        let gb = &g[b * c_out * l..(b + 1) * c_out * l];
        if need_b {
            for co in 0..c_out {
                let mut acc = S::zero();
                for &gv in &gb[co * l..(co + 1) * l] {
                    acc = acc + gv;
                }
                d_b[co] = d_b[co] + acc;
            }
        }
        if need_w || need_x {
            let xb = &x.data()[b * c_in * h * wd..(b + 1) * c_in * h * wd];
            kernels::im2col(xb, c_in, h, wd, kh, kw, stride, pad, h_out, w_out, &mut col);
            if need_w {
                // d_w[c_out x r] += g_b[c_out x l] . col[r x l]^T
                kernels::matmul_abt_acc(gb, &col, c_out, l, r, &mut d_w);
            }
            if need_x {
                for v in d_col.iter_mut() {
                    *v = S::zero();
                }
                // d_col[r x l] = w[c_out x r]^T . g_b[c_out x l]
                kernels::matmul_atb_acc(w.data(), gb, r, c_out, l, &mut d_col);
                let dxb = &mut d_x[b * c_in * h * wd..(b + 1) * c_in * h * wd];
                kernels::col2im_acc(&d_col, c_in, h, wd, kh, kw, stride, pad, h_out, w_out, dxb);
            }
        }
    }

    if need_x {
        let dst = buf(grads, node.inputs[0], x.numel());
        for (o, v) in dst.iter_mut().zip(&d_x) {
            *o = *o + *v;
        }
    }
    if need_w {
        let dst = buf(grads, node.inputs[1], w.numel());
        for (o, v) in dst.iter_mut().zip(&d_w) {
            *o = *o + *v;
        }
    }
    if need_b {
        let dst = buf(grads, node.inputs[2], c_out);
        for (o, v) in dst.iter_mut().zip(&d_b) {
            *o = *o + *v;
        }
    }
}

/// Visit every element of a tensor, yielding its linear index and the
/// linear index in the shape with `axes` removed.
fn for_each_reduced_index(shape: &[usize], axes: &[usize], mut f: impl FnMut(usize, usize)) {
    let rank = shape.len();
    let mut keep_extents: Vec<usize> = Vec::new();
    for (a, &e) in shape.iter().enumerate() {
        if !axes.contains(&a) {
            keep_extents.push(e);
        }
    }
    let numel: usize = shape.iter().product();
    let mut idx = vec![0usize; rank];
    for linear in 0..numel {
        let mut out_linear = 0;
        let mut ki = 0;
        for (a, &ix) in idx.iter().enumerate() {
            if !axes.contains(&a) {
                out_linear = out_linear * keep_extents[ki] + ix;
                ki += 1;
            }
        }
        f(linear, out_linear);
        // increment multi-index
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// out[perm(idx)] layout helpers for Permute.
fn gather_permuted<S: Scalar>(shape: &[usize], perm: &[usize], x: &[S], out: &mut [S]) {
    let rank = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut idx = vec![0usize; rank];
    for &xv in x.iter() {
        let mut out_linear = 0;
        for (o, &p) in perm.iter().enumerate() {
            out_linear = out_linear * out_shape[o] + idx[p];
        }
        out[out_linear] = xv;
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

fn scatter_permuted<S: Scalar>(shape: &[usize], perm: &[usize], g: &[S], d: &mut [S]) {
    let rank = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut idx = vec![0usize; rank];
    for dv in d.iter_mut() {
        let mut out_linear = 0;
        for (o, &p) in perm.iter().enumerate() {
            out_linear = out_linear * out_shape[o] + idx[p];
        }
        *dv = *dv + g[out_linear];
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.shape_of(self.id)
    }

    pub fn value(&self) -> Tensor<S> {
        self.tape.value_clone(self.id)
    }

    /// Scalar payload of a one-element node.
    pub fn item(&self) -> S {
        let v = self.tape.value_clone(self.id);
        debug_assert!(v.is_scalar());
        v.data()[0]
    }

    fn same_tape(&self, other: &Var<'t, S>) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    pub fn matmul(&self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(&rhs);
        let a = self.shape();
        let b = rhs.shape();
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(Error::dim("matmul", &a, &b));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let mut out = vec![S::zero(); m * n];
        {
            let nodes = self.tape.nodes.borrow();
            kernels::matmul_acc(
                nodes[self.id].value.data(),
                nodes[rhs.id].value.data(),
                m,
                k,
                n,
                &mut out,
            );
        }
        let needs = self.tape.needs(&[self.id, rhs.id]);
        Ok(self.tape.push(
            Op::Matmul,
            vec![self.id, rhs.id],
            Tensor::from_vec(&[m, n], out)?,
            needs,
        ))
    }

    pub fn t(&self) -> Result<Var<'t, S>> {
        let shp = self.shape();
        if shp.len() != 2 {
            return Err(Error::dim("transpose", &shp, &[]));
        }
        let (r, c) = (shp[0], shp[1]);
        let mut out = vec![S::zero(); r * c];
        {
            let nodes = self.tape.nodes.borrow();
            let x = nodes[self.id].value.data();
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = x[i * c + j];
                }
            }
        }
        let needs = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            Op::Transpose,
            vec![self.id],
            Tensor::from_vec(&[c, r], out)?,
            needs,
        ))
    }

    pub fn add(&self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(&rhs);
        let a = self.shape();
        let b = rhs.shape();
        if a != b {
            return Err(Error::dim("add", &a, &b));
        }
        let out: Vec<S> = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id]
                .value
                .data()
                .iter()
                .zip(nodes[rhs.id].value.data())
                .map(|(&x, &y)| x + y)
                .collect()
        };
        let needs = self.tape.needs(&[self.id, rhs.id]);
        Ok(self.tape.push(
            Op::Add,
            vec![self.id, rhs.id],
            Tensor::from_vec(&a, out)?,
            needs,
        ))
    }

    pub fn mul(&self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(&rhs);
        let a = self.shape();
        let b = rhs.shape();
        if a != b {
            return Err(Error::dim("mul", &a, &b));
        }
        let out: Vec<S> = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id]
                .value
                .data()
                .iter()
                .zip(nodes[rhs.id].value.data())
                .map(|(&x, &y)| x * y)
                .collect()
        };
        let needs = self.tape.needs(&[self.id, rhs.id]);
        Ok(self.tape.push(
            Op::Mul,
            vec![self.id, rhs.id],
            Tensor::from_vec(&a, out)?,
            needs,
        ))
    }

    pub fn scale(&self, c: S) -> Var<'t, S> {
        let shp = self.shape();
        let out: Vec<S> = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.data().iter().map(|&x| x * c).collect()
        };
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(
            Op::Scale(c),
            vec![self.id],
            Tensor::from_vec(&shp, out).expect("scale shape"),
            needs,
        )
    }

    /// x[r x c] + bias[c], broadcast over rows.
    pub fn add_bias(&self, bias: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(&bias);
        let shp = self.shape();
        let bshp = bias.shape();
        if shp.len() != 2 || bshp.len() != 1 || bshp[0] != shp[1] {
            return Err(Error::dim("add_bias", &shp, &bshp));
        }
        let cols = shp[1];
        let out: Vec<S> = {
            let nodes = self.tape.nodes.borrow();
            let b = nodes[bias.id].value.data();
            nodes[self.id]
                .value
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x + b[i % cols])
                .collect()
        };
        let needs = self.tape.needs(&[self.id, bias.id]);
        Ok(self.tape.push(
            Op::AddBias,
            vec![self.id, bias.id],
            Tensor::from_vec(&shp, out)?,
            needs,
        ))
    }

    pub fn relu(&self) -> Var<'t, S> {
        let shp = self.shape();
        let out: Vec<S> = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id]
                .value
                .data()
                .iter()
                .map(|&x| if x > S::zero() { x } else { S::zero() })
                .collect()
        };
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(
            Op::Relu,
            vec![self.id],
            Tensor::from_vec(&shp, out).expect("relu shape"),
            needs,
        )
    }

    pub fn softmax_rows(&self) -> Result<Var<'t, S>> {
        let shp = self.shape();
        if shp.len() != 2 {
            return Err(Error::dim("softmax_rows", &shp, &[]));
        }
        let mut out = vec![S::zero(); shp[0] * shp[1]];
        {
            let nodes = self.tape.nodes.borrow();
            kernels::softmax_rows(nodes[self.id].value.data(), shp[0], shp[1], &mut out);
        }
        let needs = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            Op::SoftmaxRows,
            vec![self.id],
            Tensor::from_vec(&shp, out)?,
            needs,
        ))
    }

    /// Normalize the last axis, then gamma * xhat + beta.
    pub fn layer_norm(&self, gamma: Var<'t, S>, beta: Var<'t, S>, eps: S) -> Result<Var<'t, S>> {
        self.same_tape(&gamma);
        self.same_tape(&beta);
        let shp = self.shape();
        let d = *shp.last().expect("layer_norm rank >= 1");
        let gshp = gamma.shape();
        let bshp = beta.shape();
        if gshp != vec![d] || bshp != vec![d] {
            return Err(Error::dim("layer_norm", &shp, &gshp));
        }
        if eps <= S::zero() {
            return Err(Error::Config("layer_norm eps must be positive".into()));
        }
        let mut out = vec![S::zero(); shp.iter().product()];
        {
            let nodes = self.tape.nodes.borrow();
            kernels::layer_norm(
                nodes[self.id].value.data(),
                nodes[gamma.id].value.data(),
                nodes[beta.id].value.data(),
                d,
                eps,
                &mut out,
            );
        }
        let needs = self.tape.needs(&[self.id, gamma.id, beta.id]);
        Ok(self.tape.push(
            Op::LayerNorm { eps },
            vec![self.id, gamma.id, beta.id],
            Tensor::from_vec(&shp, out)?,
            needs,
        ))
    }

    /// Temporal cross-correlation with zero padding. x[c_in x t],
    /// w[c_out x c_in x k] with k odd, bias[c_out].
    pub fn conv1d(
        &self,
        w: Var<'t, S>,
        bias: Var<'t, S>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, S>> {
        self.same_tape(&w);
        self.same_tape(&bias);
        let xs = self.shape();
        let ws = w.shape();
        if xs.len() != 2 || ws.len() != 3 || ws[1] != xs[0] {
            return Err(Error::dim("conv1d", &xs, &ws));
        }
        let (c_in, t) = (xs[0], xs[1]);
        let (c_out, k) = (ws[0], ws[2]);
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv1d kernel length must be odd, got {k}")));
        }
        if bias.shape() != vec![c_out] {
            return Err(Error::dim("conv1d bias", &bias.shape(), &[c_out]));
        }
        if t + 2 * pad < k {
            return Err(Error::dim("conv1d output", &xs, &ws));
        }
        let t_out = (t + 2 * pad - k) / stride + 1;
        let mut out = vec![S::zero(); c_out * t_out];
        {
            let nodes = self.tape.nodes.borrow();
            kernels::conv1d(
                nodes[self.id].value.data(),
                nodes[w.id].value.data(),
                nodes[bias.id].value.data(),
                c_in,
                t,
                c_out,
                k,
                stride,
                pad,
                t_out,
                &mut out,
            );
        }
        let needs = self.tape.needs(&[self.id, w.id, bias.id]);
        Ok(self.tape.push(
            Op::Conv1d { stride, pad },
            vec![self.id, w.id, bias.id],
            Tensor::from_vec(&[c_out, t_out], out)?,
            needs,
        ))
    }

    /// 2-D cross-correlation over a batch. x[b x c_in x h x w],
    /// w[c_out x c_in x kh x kw], bias[c_out].
    pub fn conv2d(
        &self,
        w: Var<'t, S>,
        bias: Var<'t, S>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, S>> {
        self.same_tape(&w);
        self.same_tape(&bias);
        let xs = self.shape();
        let ws = w.shape();
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] {
            return Err(Error::dim("conv2d", &xs, &ws));
        }
        let (bsz, c_in, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (c_out, kh, kw) = (ws[0], ws[2], ws[3]);
        if bias.shape() != vec![c_out] {
            return Err(Error::dim("conv2d bias", &bias.shape(), &[c_out]));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::dim("conv2d output", &xs, &ws));
        }
        let h_out = (h + 2 * pad - kh) / stride + 1;
        let w_out = (wd + 2 * pad - kw) / stride + 1;
        let l = h_out * w_out;
        let r = c_in * kh * kw;
        let mut out = vec![S::zero(); bsz * c_out * l];
        {
            let nodes = self.tape.nodes.borrow();
            let x = nodes[self.id].value.data();
            let wt = nodes[w.id].value.data();
            let b = nodes[bias.id].value.data();
            let mut col = vec![S::zero(); r * l];
            for bi in 0..bsz {
                let xb = &x[bi * c_in * h * wd..(bi + 1) * c_in * h * wd];
                kernels::im2col(xb, c_in, h, wd, kh, kw, stride, pad, h_out, w_out, &mut col);
                let ob = &mut out[bi * c_out * l..(bi + 1) * c_out * l];
                for co in 0..c_out {
                    for o in ob[co * l..(co + 1) * l].iter_mut() {
                        *o = b[co];
                    }
                }
                kernels::matmul_acc(wt, &col, c_out, r, l, ob);
            }
        }
        let needs = self.tape.needs(&[self.id, w.id, bias.id]);
        Ok(self.tape.push(
            Op::Conv2d { stride, pad },
            vec![self.id, w.id, bias.id],
            Tensor::from_vec(&[bsz, c_out, h_out, w_out], out)?,
            needs,
        ))
    }

    /// Shift the first `floor(fraction*c/2)` channels +1 in time, the
    /// next as many -1, zero-filling at clip boundaries. x[t x c x h x w].
    pub fn temporal_shift(&self, fraction: f64) -> Result<Var<'t, S>> {
        let shp = self.shape();
        if shp.len() != 4 {
            return Err(Error::dim("temporal_shift", &shp, &[]));
        }
        if !(0.0..=0.5).contains(&fraction) {
            return Err(Error::Config(format!(
                "temporal_shift fraction must be in [0, 0.5], got {fraction}"
            )));
        }
        let (t, c) = (shp[0], shp[1]);
        let plane = shp[2] * shp[3];
        let per_dir = ((fraction * c as f64) / 2.0).floor() as usize;
        let mut out = vec![S::zero(); t * c * plane];
        {
            let nodes = self.tape.nodes.borrow();
            let x = nodes[self.id].value.data();
            for ti in 0..t {
                for ci in 0..c {
                    let dst = (ti * c + ci) * plane;
                    let src_t = if ci < per_dir {
                        if ti == 0 {
                            continue; // stays zero
                        }
                        ti - 1
                    } else if ci < 2 * per_dir {
                        if ti + 1 == t {
                            continue;
                        }
                        ti + 1
                    } else {
                        ti
                    };
                    let src = (src_t * c + ci) * plane;
                    out[dst..dst + plane].copy_from_slice(&x[src..src + plane]);
                }
            }
        }
        let needs = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            Op::TemporalShift { per_dir },
            vec![self.id],
            Tensor::from_vec(&shp, out)?,
            needs,
        ))
    }

    /// Mean over the given axes; reduced axes are removed from the shape
    /// (an all-axes reduction yields shape [1]).
    pub fn mean_axes(&self, axes: &[usize]) -> Result<Var<'t, S>> {
        let shp = self.shape();
        let rank = shp.len();
        if axes.is_empty()
            || axes.iter().any(|&a| a >= rank)
            || (1..axes.len()).any(|i| axes[i..].contains(&axes[i - 1]))
        {
            return Err(Error::Config(format!(
                "mean_axes: invalid axes {axes:?} for rank {rank}"
            )));
        }
        let keep: Vec<usize> = (0..rank).filter(|a| !axes.contains(a)).collect();
        let out_shape: Vec<usize> = if keep.is_empty() {
            vec![1]
        } else {
            keep.iter().map(|&a| shp[a]).collect()
        };
        let count: usize = axes.iter().map(|&a| shp[a]).product();
        let scale = S::one() / s::<S>(count as f64);
        let mut out = vec![S::zero(); out_shape.iter().product()];
        {
            let nodes = self.tape.nodes.borrow();
            let x = nodes[self.id].value.data();
            for_each_reduced_index(&shp, axes, |in_linear, out_linear| {
                out[out_linear] = out[out_linear] + x[in_linear];
            });
        }
        for o in out.iter_mut() {
            *o = *o * scale;
        }
        let needs = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            Op::MeanAxes { axes: axes.to_vec() },
            vec![self.id],
            Tensor::from_vec(&out_shape, out)?,
            needs,
        ))
    }

    pub fn sum_all(&self) -> Var<'t, S> {
        let total: S = {
            let nodes = self.tape.nodes.borrow();
            let mut acc = S::zero();
            for &v in nodes[self.id].value.data() {
                acc = acc + v;
            }
            acc
        };
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(
            Op::SumAll,
            vec![self.id],
            Tensor::scalar(total),
            needs,
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, S>> {
        let shp = self.shape();
        let old: usize = shp.iter().product();
        let new: usize = shape.iter().product();
        if old != new || shape.iter().any(|&e| e == 0) {
            return Err(Error::dim("reshape", &shp, shape));
        }
        let data = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.data().to_vec()
        };
        let needs = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            Op::Reshape,
            vec![self.id],
            Tensor::from_vec(shape, data)?,
            needs,
        ))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Var<'t, S>> {
        let shp = self.shape();
        let rank = shp.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Config(format!(
                "permute: {perm:?} is not a permutation of 0..{rank}"
            )));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shp[p]).collect();
        let mut out = vec![S::zero(); shp.iter().product()];
        {
            let nodes = self.tape.nodes.borrow();
            gather_permuted(&shp, perm, nodes[self.id].value.data(), &mut out);
        }
        let needs = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            Op::Permute { perm: perm.to_vec() },
            vec![self.id],
            Tensor::from_vec(&out_shape, out)?,
            needs,
        ))
    }

    /// Softmax cross-entropy of a rank-1 logit vector against a class id.
    pub fn cross_entropy(&self, target: usize) -> Result<Var<'t, S>> {
        let shp = self.shape();
        if shp.len() != 1 || target >= shp[0] {
            return Err(Error::Config(format!(
                "cross_entropy: target {target} out of range for logits {shp:?}"
            )));
        }
        let loss = {
            let nodes = self.tape.nodes.borrow();
            let logits = nodes[self.id].value.data();
            let mut mx = logits[0];
            for &v in logits.iter() {
                if v > mx {
                    mx = v;
                }
            }
            let mut z = S::zero();
            for &v in logits.iter() {
                z = z + (v - mx).exp();
            }
            z.ln() + mx - logits[target]
        };
        let needs = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            Op::CrossEntropy { target },
            vec![self.id],
            Tensor::scalar(loss),
            needs,
        ))
    }

    /// map[b x c x h x w] + v[b x c] broadcast over the spatial plane.
    pub fn add_channel_bias2d(&self, v: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(&v);
        let ms = self.shape();
        let vs = v.shape();
        if ms.len() != 4 || vs.len() != 2 || vs[0] != ms[0] || vs[1] != ms[1] {
            return Err(Error::dim("add_channel_bias2d", &ms, &vs));
        }
        let plane = ms[2] * ms[3];
        let out: Vec<S> = {
            let nodes = self.tape.nodes.borrow();
            let m = nodes[self.id].value.data();
            let b = nodes[v.id].value.data();
            m.iter()
                .enumerate()
                .map(|(i, &x)| x + b[i / plane])
                .collect()
        };
        let needs = self.tape.needs(&[self.id, v.id]);
        Ok(self.tape.push(
            Op::AddChannelBias2d,
            vec![self.id, v.id],
            Tensor::from_vec(&ms, out)?,
            needs,
        ))
    }
}

/// Concatenate rank-1 vectors end to end.
pub fn concat_vecs<'t, S: Scalar>(tape: &'t Tape<S>, parts: &[Var<'t, S>]) -> Result<Var<'t, S>> {
    if parts.is_empty() {
        return Err(Error::Config("concat_vecs: empty input".into()));
    }
    let mut data = Vec::new();
    let mut ids = Vec::with_capacity(parts.len());
    for p in parts {
        let shp = p.shape();
        if shp.len() != 1 {
            return Err(Error::dim("concat_vecs", &shp, &[]));
        }
        data.extend_from_slice(p.value().data());
        ids.push(p.id);
    }
    let needs = tape.needs(&ids);
    let n = data.len();
    Ok(tape.push(Op::ConcatVec, ids, Tensor::from_vec(&[n], data)?, needs))
}

#[cfg(test)]
mod tests {
    use super::super::s;
    use super::*;

    fn leaf_grad<'t>(tape: &'t Tape<f64>, shape: &[usize], data: Vec<f64>) -> Var<'t, f64> {
        tape.leaf(Tensor::from_vec(shape, data).unwrap().with_grad())
    }

    #[test]
    fn matmul_identity_zero_and_oracle_cases() {
        let tape = Tape::<f64>::new();
        let a = leaf_grad(&tape, &[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let eye = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let zero = tape.leaf(Tensor::zeros(&[2, 2]));
        let b = tape.leaf(Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());

        assert_eq!(eye.matmul(a).unwrap().value().data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.matmul(zero).unwrap().value().data(), &[0.0; 4]);
        assert_eq!(
            a.matmul(b).unwrap().value().data(),
            &[19.0, 22.0, 43.0, 50.0]
        );
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let err = a.matmul(b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "got: {msg}");
    }

    #[test]
    fn sum_of_squares_grad_is_2x() {
        let tape = Tape::<f64>::new();
        let x = leaf_grad(&tape, &[3], vec![1.0, -2.0, 0.5]);
        let loss = x.mul(x).unwrap().sum_all();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(x), vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn matmul_adjoint_ones_times_bt() {
        // loss = sum(A . B) => dA = ones . B^T
        let tape = Tape::<f64>::new();
        let a = leaf_grad(&tape, &[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = tape.leaf(Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let loss = a.matmul(b).unwrap().sum_all();
        let grads = tape.backward(loss).unwrap();
        // rows of dA are the column sums of B^T rows: [5+6, 7+8]
        assert_eq!(grads.grad(a), vec![11.0, 15.0, 11.0, 15.0]);
    }

    #[test]
    fn unused_parameter_gets_exact_zero() {
        let tape = Tape::<f64>::new();
        let x = leaf_grad(&tape, &[2], vec![1.0, 2.0]);
        let unused = leaf_grad(&tape, &[2], vec![3.0, 4.0]);
        let loss = x.sum_all();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(unused), vec![0.0, 0.0]);
        assert!(grads.try_grad(unused).is_none());
        assert_eq!(grads.grad(x), vec![1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let tape = Tape::<f64>::new();
        let x = leaf_grad(&tape, &[2], vec![1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn conv1d_identity_and_delta_kernels() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let k1 = tape.leaf(Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap());
        let delta = tape.leaf(Tensor::from_vec(&[1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap());
        let b = tape.leaf(Tensor::zeros(&[1]));

        let y1 = x.conv1d(k1, b, 1, 0).unwrap();
        assert_eq!(y1.value().data(), &[1.0, 2.0, 3.0, 4.0]);
        let y2 = x.conv1d(delta, b, 1, 1).unwrap();
        assert_eq!(y2.value().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv1d_rejects_even_kernel_and_degenerate_output() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[1, 2]));
        let k = tape.leaf(Tensor::zeros(&[1, 1, 2]));
        let b = tape.leaf(Tensor::zeros(&[1]));
        assert!(x.conv1d(k, b, 1, 0).is_err());
        let k5 = tape.leaf(Tensor::zeros(&[1, 1, 5]));
        assert!(x.conv1d(k5, b, 1, 0).is_err());
    }

    #[test]
    fn layer_norm_collapses_constant_rows_and_affine() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 3], vec![5.0, 5.0, 5.0]).unwrap());
        let gamma = tape.leaf(Tensor::filled(&[3], 1.0));
        let beta = tape.leaf(Tensor::zeros(&[3]));
        let y = x.layer_norm(gamma, beta, 1e-5).unwrap();
        for &v in y.value().data() {
            assert!(v.abs() < 1e-9);
        }

        let x2 = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.0, -1.0]).unwrap());
        let g2 = tape.leaf(Tensor::filled(&[2], 1.0));
        let b2 = tape.leaf(Tensor::zeros(&[2]));
        let y2 = x2.layer_norm(g2, b2, 1e-12).unwrap();
        assert!((y2.value().data()[0] - 1.0).abs() < 1e-5);
        assert!((y2.value().data()[1] + 1.0).abs() < 1e-5);

        // gamma = 0 collapses to beta
        let g0 = tape.leaf(Tensor::zeros(&[2]));
        let b3 = tape.leaf(Tensor::filled(&[2], 0.7));
        let y3 = x2.layer_norm(g0, b3, 1e-5).unwrap();
        assert_eq!(y3.value().data(), &[0.7, 0.7]);
    }

    #[test]
    fn temporal_shift_definition_cases() {
        // T=3, C=2, 1x1 plane; fraction 0.5 -> per_dir = 0 for c=2?
        // 0.5*2/2 = 0.5 -> floor 0. Use C=4 so per_dir = 1.
        let tape = Tape::<f64>::new();
        let data: Vec<f64> = (0..12).map(|v| v as f64).collect(); // [t=3, c=4, 1, 1]
        let x = tape.leaf(Tensor::from_vec(&[3, 4, 1, 1], data).unwrap());
        let y = x.temporal_shift(0.5).unwrap();
        let v = y.value();
        // channel 0 forward-shifted: [0, a, b] where a = x[t0,c0] = 0, b = x[t1,c0] = 4
        assert_eq!(v.at(&[0, 0, 0, 0]), 0.0);
        assert_eq!(v.at(&[1, 0, 0, 0]), 0.0);
        assert_eq!(v.at(&[2, 0, 0, 0]), 4.0);
        // channel 1 backward-shifted: [x[1,1], x[2,1], 0] = [5, 9, 0]
        assert_eq!(v.at(&[0, 1, 0, 0]), 5.0);
        assert_eq!(v.at(&[1, 1, 0, 0]), 9.0);
        assert_eq!(v.at(&[2, 1, 0, 0]), 0.0);
        // untouched channels identical
        assert_eq!(v.at(&[1, 2, 0, 0]), 6.0);
        assert_eq!(v.at(&[2, 3, 0, 0]), 11.0);

        // fraction 0 is the identity
        let y0 = x.temporal_shift(0.0).unwrap();
        assert_eq!(y0.value().data(), x.value().data());

        // T=1: every shifted channel becomes zero
        let one = tape.leaf(Tensor::from_vec(&[1, 4, 1, 1], vec![1.0; 4]).unwrap());
        let y1 = one.temporal_shift(0.5).unwrap();
        assert_eq!(y1.value().data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn reshape_roundtrip_identity_on_data_and_grads() {
        let tape = Tape::<f64>::new();
        let x = leaf_grad(&tape, &[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.reshape(&[3, 2]).unwrap().reshape(&[2, 3]).unwrap();
        assert_eq!(y.value().data(), x.value().data());
        let loss = y.mul(y).unwrap().sum_all();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(x), vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let tape = Tape::<f64>::new();
        let logits = leaf_grad(&tape, &[3], vec![1.0, 2.0, 3.0]);
        let loss = logits.cross_entropy(2).unwrap();
        let z: f64 = (1.0f64.exp() + 2.0f64.exp() + 3.0f64.exp()).ln();
        assert!((loss.item() - (z - 3.0)).abs() < 1e-12);
        let grads = tape.backward(loss).unwrap();
        let g = grads.grad(logits);
        let sum: f64 = g.iter().sum();
        assert!(sum.abs() < 1e-12); // probs - onehot sums to zero
    }

    #[test]
    fn poisoned_tape_reports_node_id() {
        let tape = Tape::<f64>::new();
        let x = leaf_grad(&tape, &[1], vec![1e308]);
        let y = x.mul(x).unwrap(); // overflows to inf at node 1
        let loss = y.sum_all();
        let err = tape.backward(loss).unwrap_err();
        assert!(err.to_string().contains("node 1"), "got {err}");
        assert_eq!(tape.poisoned_node(), Some(1));
    }

    #[test]
    fn mean_axes_and_sum_all() {
        let tape = Tape::<f64>::new();
        let x = leaf_grad(&tape, &[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m0 = x.mean_axes(&[0]).unwrap();
        assert_eq!(m0.shape(), vec![3]);
        assert_eq!(m0.value().data(), &[2.5, 3.5, 4.5]);
        let m1 = x.mean_axes(&[1]).unwrap();
        assert_eq!(m1.value().data(), &[2.0, 5.0]);
        let all = x.mean_axes(&[0, 1]).unwrap();
        assert_eq!(all.value().data(), &[3.5]);

        let loss = m0.sum_all();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(x), vec![0.5; 6]);
    }

    #[test]
    fn permute_roundtrip() {
        let tape = Tape::<f64>::new();
        let x = leaf_grad(&tape, &[2, 3, 4], (0..24).map(|v| v as f64).collect());
        let y = x.permute(&[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), vec![4, 2, 3]);
        assert_eq!(y.value().at(&[1, 0, 2]), x.value().at(&[0, 2, 1]));
        let back = y.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.value().data(), x.value().data());
    }

    #[test]
    fn concat_vecs_and_split_grads() {
        let tape = Tape::<f64>::new();
        let a = leaf_grad(&tape, &[2], vec![1.0, 2.0]);
        let b = leaf_grad(&tape, &[3], vec![3.0, 4.0, 5.0]);
        let cat = concat_vecs(&tape, &[a, b]).unwrap();
        assert_eq!(cat.value().data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let loss = cat.mul(cat).unwrap().sum_all();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(a), vec![2.0, 4.0]);
        assert_eq!(grads.grad(b), vec![6.0, 8.0, 10.0]);
    }

    #[test]
    fn scale_uses_constant() {
        let tape = Tape::<f64>::new();
        let x = leaf_grad(&tape, &[2], vec![3.0, -1.0]);
        let y = x.scale(s(0.5));
        assert_eq!(y.value().data(), &[1.5, -0.5]);
        let grads = tape.backward(y.sum_all()).unwrap();
        assert_eq!(grads.grad(x), vec![0.5, 0.5]);
    }
}
