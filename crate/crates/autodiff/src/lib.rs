//! Reverse-mode automatic differentiation on a dynamically recorded tape.
//!
//! A [`Tape`] owns every tensor created through it. Each operation appends a
//! node holding the forward value and enough saved state to push gradients
//! back to its inputs; [`Tape::backward`] walks the nodes in exact reverse
//! creation order, which is a topological order by construction. Everything
//! is float64 and single-threaded: the engine exists to train small graph
//! models under tight gradient-check tolerances, not to chase throughput.
//!
//! Gradients *accumulate*: running backward twice without
//! [`Tape::zero_grads`] doubles every gradient. That is deliberate — it makes
//! the accumulation contract explicit and testable.
//!
//! Shapes are two-dimensional throughout; scalars are 1x1 and column vectors
//! are nx1. Elementwise ops broadcast a 1xC row, an Rx1 column, or a 1x1
//! scalar against an RxC operand.

mod check;

pub use check::{finite_difference_check, DEFAULT_FD_EPS};

use std::cell::RefCell;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: ({lr}x{lc}) vs ({rr}x{rc})")]
    ShapeMismatch {
        op: &'static str,
        lr: usize,
        lc: usize,
        rr: usize,
        rc: usize,
    },
    #[error("data length {got} does not match shape {rows}x{cols}")]
    BadDataLength {
        got: usize,
        rows: usize,
        cols: usize,
    },
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("segment index {idx} out of range for {n} segments")]
    SegmentOutOfRange { idx: usize, n: usize },
    #[error("gather index {idx} out of range for {rows} rows")]
    GatherOutOfRange { idx: usize, rows: usize },
    #[error("non-finite value produced by {op}")]
    NumericalError { op: &'static str },
    #[error("loss mask is empty")]
    EmptyMask,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("class weights must all be positive")]
    NonPositiveWeight,
    #[error("backward requires a scalar (1x1) tensor")]
    NotScalar,
    #[error("{0}")]
    InvalidArgument(String),
}

type Result<T> = std::result::Result<T, DiffError>;

/// Opaque handle to a tensor on a tape. Cheap to copy; only meaningful with
/// the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    LeakyRelu(usize, f64),
    CosShifted {
        theta: usize,
        mu: usize,
        l: f64,
    },
    GatherRows {
        src: usize,
        idx: Vec<usize>,
    },
    SegmentSum {
        src: usize,
        segments: Vec<usize>,
    },
    SegmentSoftmax {
        scores: usize,
        segments: Vec<usize>,
    },
    WeightedCrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        weights: Vec<f64>,
        mask: Vec<usize>,
        /// Per-masked-row softmax probabilities saved by the forward pass.
        probs: Vec<f64>,
    },
    Sum(usize),
}

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

/// The recording tape. One per training context; not shareable across
/// threads.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// Number of recorded nodes (monotone within a forward pass).
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Result<Tensor> {
        debug_assert_eq!(value.len(), rows * cols);
        let n = value.len();
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            rows,
            cols,
            value,
            grad: vec![0.0; n],
            op,
        });
        Ok(Tensor {
            id: nodes.len() - 1,
        })
    }

    fn check_finite(&self, t: Tensor, op: &'static str) -> Result<Tensor> {
        let nodes = self.nodes.borrow();
        if nodes[t.id].value.iter().all(|v| v.is_finite()) {
            Ok(t)
        } else {
            Err(DiffError::NumericalError { op })
        }
    }

    /// Record an input tensor. Leaves receive gradients like any other node.
    pub fn leaf(&self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if data.len() != rows * cols {
            return Err(DiffError::BadDataLength {
                got: data.len(),
                rows,
                cols,
            });
        }
        let t = self.push(rows, cols, data, Op::Leaf)?;
        self.check_finite(t, "leaf")
    }

    /// 1x1 leaf.
    pub fn scalar(&self, v: f64) -> Result<Tensor> {
        self.leaf(1, 1, vec![v])
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        (nodes[t.id].rows, nodes[t.id].cols)
    }

    /// Copy of a tensor's forward value.
    pub fn value(&self, t: Tensor) -> Vec<f64> {
        self.nodes.borrow()[t.id].value.clone()
    }

    /// Copy of a tensor's accumulated gradient.
    pub fn grad(&self, t: Tensor) -> Vec<f64> {
        self.nodes.borrow()[t.id].grad.clone()
    }

    /// Reset every gradient on the tape to zero.
    pub fn zero_grads(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Matrix product: (m x k) . (k x n) -> (m x n).
    pub fn matmul(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (m, k, k2, n) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.id], &nodes[b.id]);
            (na.rows, na.cols, nb.rows, nb.cols)
        };
        if k != k2 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lr: m,
                lc: k,
                rr: k2,
                rc: n,
            });
        }
        let mut out = vec![0.0; m * n];
        {
            let nodes = self.nodes.borrow();
            let av = &nodes[a.id].value;
            let bv = &nodes[b.id].value;
            for i in 0..m {
                for p in 0..k {
                    let aip = av[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &bv[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (o, &bpj) in orow.iter_mut().zip(brow) {
                        *o += aip * bpj;
                    }
                }
            }
        }
        let t = self.push(m, n, out, Op::MatMul(a.id, b.id))?;
        self.check_finite(t, "matmul")
    }

    fn broadcast_ok(lr: usize, lc: usize, rr: usize, rc: usize) -> bool {
        (rr == lr || rr == 1) && (rc == lc || rc == 1)
    }

    fn elementwise(
        &self,
        a: Tensor,
        b: Tensor,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize) -> Op,
    ) -> Result<Tensor> {
        let (lr, lc, rr, rc) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.id], &nodes[b.id]);
            (na.rows, na.cols, nb.rows, nb.cols)
        };
        // The left operand carries the output shape; the right may broadcast.
        if !Self::broadcast_ok(lr, lc, rr, rc) {
            return Err(DiffError::ShapeMismatch {
                op: op_name,
                lr,
                lc,
                rr,
                rc,
            });
        }
        let mut out = vec![0.0; lr * lc];
        {
            let nodes = self.nodes.borrow();
            let av = &nodes[a.id].value;
            let bv = &nodes[b.id].value;
            for i in 0..lr {
                for j in 0..lc {
                    let bi = if rr == 1 { 0 } else { i };
                    let bj = if rc == 1 { 0 } else { j };
                    out[i * lc + j] = f(av[i * lc + j], bv[bi * rc + bj]);
                }
            }
        }
        let t = self.push(lr, lc, out, make(a.id, b.id))?;
        self.check_finite(t, op_name)
    }

    /// Elementwise sum; the right operand may broadcast a row, column, or
    /// scalar against the left operand's shape.
    pub fn add(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add)
    }

    /// Elementwise product with the same broadcast rules as [`Tape::add`].
    pub fn mul(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    /// Multiply by a compile-time constant (no gradient to the constant).
    pub fn scale(&self, a: Tensor, c: f64) -> Result<Tensor> {
        let (r, cc, out) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            (
                na.rows,
                na.cols,
                na.value.iter().map(|&v| v * c).collect::<Vec<_>>(),
            )
        };
        let t = self.push(r, cc, out, Op::Scale(a.id, c))?;
        self.check_finite(t, "scale")
    }

    /// LeakyReLU: x for x > 0, slope*x otherwise. The subgradient at exactly
    /// zero is the slope.
    pub fn leaky_relu(&self, a: Tensor, slope: f64) -> Result<Tensor> {
        let (r, c, out) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            (
                na.rows,
                na.cols,
                na.value
                    .iter()
                    .map(|&v| if v > 0.0 { v } else { slope * v })
                    .collect::<Vec<_>>(),
            )
        };
        let t = self.push(r, c, out, Op::LeakyRelu(a.id, slope))?;
        self.check_finite(t, "leaky_relu")
    }

    /// Harmonic evaluation `cos(l*theta - mu)` with gradients flowing to both
    /// `theta` and the scalar phase `mu`.
    pub fn cos_shifted(&self, theta: Tensor, l: f64, mu: Tensor) -> Result<Tensor> {
        let (r, c, mu_shape) = {
            let nodes = self.nodes.borrow();
            let nt = &nodes[theta.id];
            let nm = &nodes[mu.id];
            (nt.rows, nt.cols, (nm.rows, nm.cols))
        };
        if mu_shape != (1, 1) {
            return Err(DiffError::ShapeMismatch {
                op: "cos_shifted",
                lr: r,
                lc: c,
                rr: mu_shape.0,
                rc: mu_shape.1,
            });
        }
        let out = {
            let nodes = self.nodes.borrow();
            let mv = nodes[mu.id].value[0];
            nodes[theta.id]
                .value
                .iter()
                .map(|&th| (l * th - mv).cos())
                .collect::<Vec<_>>()
        };
        let t = self.push(
            r,
            c,
            out,
            Op::CosShifted {
                theta: theta.id,
                mu: mu.id,
                l,
            },
        )?;
        self.check_finite(t, "cos_shifted")
    }

    /// Select rows of `src` by index, with repetition allowed:
    /// out[e, :] = src[idx[e], :].
    pub fn gather_rows(&self, src: Tensor, idx: &[usize]) -> Result<Tensor> {
        let (rows, cols) = self.shape(src);
        for &i in idx {
            if i >= rows {
                return Err(DiffError::GatherOutOfRange { idx: i, rows });
            }
        }
        let out = {
            let nodes = self.nodes.borrow();
            let sv = &nodes[src.id].value;
            let mut out = Vec::with_capacity(idx.len() * cols);
            for &i in idx {
                out.extend_from_slice(&sv[i * cols..(i + 1) * cols]);
            }
            out
        };
        let t = self.push(
            idx.len(),
            cols,
            out,
            Op::GatherRows {
                src: src.id,
                idx: idx.to_vec(),
            },
        )?;
        self.check_finite(t, "gather_rows")
    }

    /// Sum rows of `src` into `n_segments` output rows:
    /// out[segments[e], :] += src[e, :], accumulated in input-row order.
    /// Segments without members produce zero rows.
    pub fn segment_sum(&self, src: Tensor, segments: &[usize], n_segments: usize) -> Result<Tensor> {
        let (rows, cols) = self.shape(src);
        if segments.len() != rows {
            return Err(DiffError::InvalidArgument(format!(
                "segment map length {} != row count {rows}",
                segments.len()
            )));
        }
        for &s in segments {
            if s >= n_segments {
                return Err(DiffError::SegmentOutOfRange {
                    idx: s,
                    n: n_segments,
                });
            }
        }
        let out = {
            let nodes = self.nodes.borrow();
            let sv = &nodes[src.id].value;
            let mut out = vec![0.0; n_segments * cols];
            for (e, &s) in segments.iter().enumerate() {
                for j in 0..cols {
                    out[s * cols + j] += sv[e * cols + j];
                }
            }
            out
        };
        let t = self.push(
            n_segments,
            cols,
            out,
            Op::SegmentSum {
                src: src.id,
                segments: segments.to_vec(),
            },
        )?;
        self.check_finite(t, "segment_sum")
    }

    /// Numerically stabilized softmax within each segment of a column vector
    /// of scores. Every segment in `0..n_segments` must have at least one
    /// member; each segment's outputs are positive and sum to 1.
    pub fn segment_softmax(
        &self,
        scores: Tensor,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<Tensor> {
        let (rows, cols) = self.shape(scores);
        if cols != 1 {
            return Err(DiffError::ShapeMismatch {
                op: "segment_softmax",
                lr: rows,
                lc: cols,
                rr: rows,
                rc: 1,
            });
        }
        if segments.len() != rows {
            return Err(DiffError::InvalidArgument(format!(
                "segment map length {} != score count {rows}",
                segments.len()
            )));
        }
        let mut seen = vec![false; n_segments];
        for &s in segments {
            if s >= n_segments {
                return Err(DiffError::SegmentOutOfRange {
                    idx: s,
                    n: n_segments,
                });
            }
            seen[s] = true;
        }
        if let Some(empty) = seen.iter().position(|&b| !b) {
            return Err(DiffError::EmptySegment(empty));
        }

        let out = {
            let nodes = self.nodes.borrow();
            let sv = &nodes[scores.id].value;
            // Per-segment max for stability, then exp and normalize.
            let mut seg_max = vec![f64::NEG_INFINITY; n_segments];
            for (e, &s) in segments.iter().enumerate() {
                seg_max[s] = seg_max[s].max(sv[e]);
            }
            let mut exps = vec![0.0; rows];
            let mut seg_sum = vec![0.0; n_segments];
            for (e, &s) in segments.iter().enumerate() {
                let x = (sv[e] - seg_max[s]).exp();
                exps[e] = x;
                seg_sum[s] += x;
            }
            for (e, &s) in segments.iter().enumerate() {
                exps[e] /= seg_sum[s];
            }
            exps
        };
        let t = self.push(
            rows,
            1,
            out,
            Op::SegmentSoftmax {
                scores: scores.id,
                segments: segments.to_vec(),
            },
        )?;
        self.check_finite(t, "segment_softmax")
    }

    /// Class-weighted cross-entropy over a masked subset of rows, as a 1x1
    /// tensor:
    ///
    /// loss = (1/|M|) * sum over i in M of w[y_i] * (logsumexp(logits_i) - logits_i[y_i])
    ///
    /// which equals the mean over the mask of -w[y_i] * log softmax(logits_i)[y_i].
    pub fn weighted_cross_entropy(
        &self,
        logits: Tensor,
        labels: &[usize],
        class_weights: &[f64],
        mask: &[usize],
    ) -> Result<Tensor> {
        let (n, c) = self.shape(logits);
        if mask.is_empty() {
            return Err(DiffError::EmptyMask);
        }
        if labels.len() != n {
            return Err(DiffError::InvalidArgument(format!(
                "labels length {} != row count {n}",
                labels.len()
            )));
        }
        if class_weights.len() != c {
            return Err(DiffError::InvalidArgument(format!(
                "class weights length {} != class count {c}",
                class_weights.len()
            )));
        }
        if class_weights.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
            return Err(DiffError::NonPositiveWeight);
        }
        for &i in mask {
            if i >= n {
                return Err(DiffError::InvalidArgument(format!(
                    "mask index {i} out of range for {n} rows"
                )));
            }
            if labels[i] >= c {
                return Err(DiffError::LabelOutOfRange {
                    label: labels[i],
                    classes: c,
                });
            }
        }

        let (loss, probs) = {
            let nodes = self.nodes.borrow();
            let lv = &nodevalue(&nodes, logits.id);
            let mut probs = Vec::with_capacity(mask.len() * c);
            let mut total = 0.0;
            for &i in mask {
                let row = &lv[i * c..(i + 1) * c];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for &x in row {
                    denom += (x - m).exp();
                }
                let lse = m + denom.ln();
                for &x in row {
                    probs.push((x - m).exp() / denom);
                }
                total += class_weights[labels[i]] * (lse - row[labels[i]]);
            }
            (total / mask.len() as f64, probs)
        };
        let t = self.push(
            1,
            1,
            vec![loss],
            Op::WeightedCrossEntropy {
                logits: logits.id,
                labels: labels.to_vec(),
                weights: class_weights.to_vec(),
                mask: mask.to_vec(),
                probs,
            },
        )?;
        self.check_finite(t, "weighted_cross_entropy")
    }

    /// Sum of all elements as a 1x1 tensor.
    pub fn sum(&self, a: Tensor) -> Result<Tensor> {
        let total = {
            let nodes = self.nodes.borrow();
            nodes[a.id].value.iter().sum::<f64>()
        };
        let t = self.push(1, 1, vec![total], Op::Sum(a.id))?;
        self.check_finite(t, "sum")
    }

    /// Reverse pass from a scalar loss. Adjoints propagate through a fresh
    /// per-pass buffer and are added into the persistent gradients at the
    /// end, so two consecutive calls without [`Tape::zero_grads`] double the
    /// gradients exactly.
    pub fn backward(&self, loss: Tensor) -> Result<()> {
        let nodes = self.nodes.borrow();
        {
            let nl = &nodes[loss.id];
            if nl.rows != 1 || nl.cols != 1 {
                return Err(DiffError::NotScalar);
            }
        }
        let mut adj: Vec<Vec<f64>> = nodes[..=loss.id]
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adj[loss.id][0] = 1.0;

        for id in (0..=loss.id).rev() {
            // Operands always precede their result on the tape, so cloning the
            // output adjoint sidesteps aliasing against the operand buffers.
            let grad_out = adj[id].clone();
            if grad_out.iter().all(|&g| g == 0.0) {
                continue;
            }
            match &nodes[id].op {
                Op::Leaf => {}
                &Op::MatMul(a, b) => {
                    let (m, n) = (nodes[id].rows, nodes[id].cols);
                    let k = nodes[a].cols;
                    let av = &nodes[a].value;
                    let bv = &nodes[b].value;
                    {
                        let ga = &mut adj[a];
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += grad_out[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    {
                        let gb = &mut adj[b];
                        for p in 0..k {
                            for j in 0..n {
                                let mut acc = 0.0;
                                for i in 0..m {
                                    acc += av[i * k + p] * grad_out[i * n + j];
                                }
                                gb[p * n + j] += acc;
                            }
                        }
                    }
                }
                &Op::Add(a, b) => {
                    let (lr, lc) = (nodes[id].rows, nodes[id].cols);
                    let (rr, rc) = (nodes[b].rows, nodes[b].cols);
                    {
                        let ga = &mut adj[a];
                        for (g, &go) in ga.iter_mut().zip(&grad_out) {
                            *g += go;
                        }
                    }
                    {
                        let gb = &mut adj[b];
                        for i in 0..lr {
                            for j in 0..lc {
                                let bi = if rr == 1 { 0 } else { i };
                                let bj = if rc == 1 { 0 } else { j };
                                gb[bi * rc + bj] += grad_out[i * lc + j];
                            }
                        }
                    }
                }
                &Op::Mul(a, b) => {
                    let (lr, lc) = (nodes[id].rows, nodes[id].cols);
                    let (rr, rc) = (nodes[b].rows, nodes[b].cols);
                    let av = &nodes[a].value;
                    let bv = &nodes[b].value;
                    {
                        let ga = &mut adj[a];
                        for i in 0..lr {
                            for j in 0..lc {
                                let bi = if rr == 1 { 0 } else { i };
                                let bj = if rc == 1 { 0 } else { j };
                                ga[i * lc + j] += grad_out[i * lc + j] * bv[bi * rc + bj];
                            }
                        }
                    }
                    {
                        let gb = &mut adj[b];
                        for i in 0..lr {
                            for j in 0..lc {
                                let bi = if rr == 1 { 0 } else { i };
                                let bj = if rc == 1 { 0 } else { j };
                                gb[bi * rc + bj] += grad_out[i * lc + j] * av[i * lc + j];
                            }
                        }
                    }
                }
                &Op::Scale(a, c) => {
                    let ga = &mut adj[a];
                    for (g, &go) in ga.iter_mut().zip(&grad_out) {
                        *g += c * go;
                    }
                }
                &Op::LeakyRelu(a, slope) => {
                    let av = &nodes[a].value;
                    let ga = &mut adj[a];
                    for ((g, &go), &x) in ga.iter_mut().zip(&grad_out).zip(av) {
                        *g += go * if x > 0.0 { 1.0 } else { slope };
                    }
                }
                &Op::CosShifted { theta, mu, l } => {
                    let tv = &nodes[theta].value;
                    let mv = nodes[mu].value[0];
                    let mut mu_acc = 0.0;
                    {
                        let gt = &mut adj[theta];
                        for ((g, &go), &th) in gt.iter_mut().zip(&grad_out).zip(tv) {
                            let s = (l * th - mv).sin();
                            *g += -l * s * go;
                            mu_acc += s * go;
                        }
                    }
                    adj[mu][0] += mu_acc;
                }
                Op::GatherRows { src, idx } => {
                    let cols = nodes[id].cols;
                    let gs = &mut adj[*src];
                    for (e, &i) in idx.iter().enumerate() {
                        for j in 0..cols {
                            gs[i * cols + j] += grad_out[e * cols + j];
                        }
                    }
                }
                Op::SegmentSum { src, segments } => {
                    let cols = nodes[id].cols;
                    let gs = &mut adj[*src];
                    for (e, &s) in segments.iter().enumerate() {
                        for j in 0..cols {
                            gs[e * cols + j] += grad_out[s * cols + j];
                        }
                    }
                }
                Op::SegmentSoftmax { scores, segments } => {
                    let alpha = &nodes[id].value;
                    // d score_e = alpha_e * (g_e - sum over segment of alpha_f * g_f)
                    let n_seg = segments.iter().copied().max().map_or(0, |m| m + 1);
                    let mut seg_dot = vec![0.0; n_seg];
                    for (e, &s) in segments.iter().enumerate() {
                        seg_dot[s] += alpha[e] * grad_out[e];
                    }
                    let gs = &mut adj[*scores];
                    for (e, &s) in segments.iter().enumerate() {
                        gs[e] += alpha[e] * (grad_out[e] - seg_dot[s]);
                    }
                }
                Op::WeightedCrossEntropy {
                    logits,
                    labels,
                    weights,
                    mask,
                    probs,
                } => {
                    let c = nodes[*logits].cols;
                    let scale = grad_out[0] / mask.len() as f64;
                    let gl = &mut adj[*logits];
                    for (mi, &i) in mask.iter().enumerate() {
                        let w = weights[labels[i]];
                        for j in 0..c {
                            let indicator = if j == labels[i] { 1.0 } else { 0.0 };
                            gl[i * c + j] += scale * w * (probs[mi * c + j] - indicator);
                        }
                    }
                }
                &Op::Sum(a) => {
                    let ga = &mut adj[a];
                    for g in ga.iter_mut() {
                        *g += grad_out[0];
                    }
                }
            }
        }

        drop(nodes);
        let mut nodes = self.nodes.borrow_mut();
        for (node, a) in nodes.iter_mut().zip(&adj) {
            for (g, &d) in node.grad.iter_mut().zip(a) {
                *g += d;
            }
        }
        Ok(())
    }
}

fn nodevalue(nodes: &[Node], id: usize) -> Vec<f64> {
    nodes[id].value.clone()
}
