//! Tensor-level reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Values are
//! flat row-major buffers with an attached shape; [`Tape::backward`] walks the
//! record in reverse and returns the gradient of a scalar root with respect to
//! every node that requires one. Constants (data) never receive gradients.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Scalar;

/// Geometry of a 2-D convolution (or its transpose) over `[n, c, h, w]` tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Offset(usize),
    MulScalar(usize, usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Square(usize),
    Sum(usize),
    Copy(usize),
    Slice { a: usize, start: usize },
    Concat(Vec<usize>),
    Linear { x: usize, w: usize, b: Option<usize>, rows: usize, din: usize, dout: usize },
    MatMul { a: usize, b: usize, n: usize, k: usize, m: usize },
    Transpose { a: usize, rows: usize, cols: usize },
    Conv { x: usize, w: usize, b: usize, g: ConvGeom },
    ConvTranspose { x: usize, w: usize, b: usize, g: ConvGeom },
    BernoulliLogits { logits: usize, target: Vec<T> },
}

struct Node<T> {
    value: Vec<T>,
    shape: Vec<usize>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation record. Not thread-safe; build one tape per independent
/// computation.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient buffer for `var`, or `None` if it does not influence the root.
    pub fn get(&self, var: Var<'_, T>) -> Option<&[T]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    /// Gradient for `var`, zero-filled when it does not influence the root.
    pub fn get_or_zero(&self, var: Var<'_, T>) -> Vec<T> {
        match self.get(var) {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); var.len()],
        }
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::with_capacity(1024)) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Vec<T>, shape: Vec<usize>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        debug_assert_eq!(value.len(), numel(&shape), "value/shape disagreement for {op:?}");
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, shape, op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Differentiable input (parameter or noise-independent latent).
    pub fn param(&self, value: Vec<T>, shape: &[usize]) -> Var<'_, T> {
        assert_eq!(value.len(), numel(shape), "parameter shape mismatch");
        self.push(value, shape.to_vec(), Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&self, value: Vec<T>, shape: &[usize]) -> Var<'_, T> {
        assert_eq!(value.len(), numel(shape), "constant shape mismatch");
        self.push(value, shape.to_vec(), Op::Leaf, false)
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.constant(vec![value], &[1])
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, a: Var<'_, T>, op: Op<T>, f: impl Fn(T) -> T) -> Var<'_, T> {
        let (value, shape) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.id];
            (n.value.iter().map(|&x| f(x)).collect(), n.shape.clone())
        };
        let rg = self.requires(&[a.id]);
        self.push(value, shape, op, rg)
    }

    fn binary(&self, a: Var<'_, T>, b: Var<'_, T>, op: Op<T>, f: impl Fn(T, T) -> T) -> Var<'_, T> {
        let (value, shape) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.id], &nodes[b.id]);
            assert_eq!(na.value.len(), nb.value.len(), "elementwise shape mismatch {:?} vs {:?}", na.shape, nb.shape);
            (
                na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect(),
                na.shape.clone(),
            )
        };
        let rg = self.requires(&[a.id, b.id]);
        self.push(value, shape, op, rg)
    }

    /// Concatenates flat buffers into a vector of shape `[total]`.
    pub fn concat<'t>(&'t self, parts: &[Var<'t, T>]) -> Var<'t, T> {
        let value: Vec<T> = {
            let nodes = self.nodes.borrow();
            parts.iter().flat_map(|p| nodes[p.id].value.iter().copied()).collect()
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.requires(&ids);
        let len = value.len();
        self.push(value, vec![len], Op::Concat(ids), rg)
    }

    /// `x [rows, din] · wᵀ + b`, with `w [dout, din]` and `b [dout]`.
    pub fn linear<'t>(&'t self, x: Var<'t, T>, w: Var<'t, T>, b: Option<Var<'t, T>>) -> Var<'t, T> {
        let (value, rows, din, dout) = {
            let nodes = self.nodes.borrow();
            let ws = &nodes[w.id].shape;
            assert_eq!(ws.len(), 2, "linear weight must be 2-D");
            let (dout, din) = (ws[0], ws[1]);
            let xv = &nodes[x.id].value;
            assert_eq!(xv.len() % din, 0, "linear input width mismatch");
            let rows = xv.len() / din;
            let wv = &nodes[w.id].value;
            let mut out = vec![T::zero(); rows * dout];
            if let Some(b) = b {
                let bv = &nodes[b.id].value;
                assert_eq!(bv.len(), dout, "linear bias mismatch");
                for r in 0..rows {
                    out[r * dout..(r + 1) * dout].copy_from_slice(bv);
                }
            }
            for r in 0..rows {
                let xr = &xv[r * din..(r + 1) * din];
                for o in 0..dout {
                    let wr = &wv[o * din..(o + 1) * din];
                    let mut acc = T::zero();
                    for (&a, &c) in xr.iter().zip(wr) {
                        acc = acc + a * c;
                    }
                    out[r * dout + o] = out[r * dout + o] + acc;
                }
            }
            (out, rows, din, dout)
        };
        let mut ids = vec![x.id, w.id];
        ids.extend(b.map(|b| b.id));
        let rg = self.requires(&ids);
        self.push(
            value,
            vec![rows, dout],
            Op::Linear { x: x.id, w: w.id, b: b.map(|b| b.id), rows, din, dout },
            rg,
        )
    }

    /// `a [n, k] · b [k, m]`.
    pub fn matmul<'t>(&'t self, a: Var<'t, T>, b: Var<'t, T>) -> Var<'t, T> {
        let (value, n, k, m) = {
            let nodes = self.nodes.borrow();
            let (sa, sb) = (&nodes[a.id].shape, &nodes[b.id].shape);
            assert!(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], "matmul shape mismatch {sa:?} {sb:?}");
            let (n, k, m) = (sa[0], sa[1], sb[1]);
            let (av, bv) = (&nodes[a.id].value, &nodes[b.id].value);
            let mut out = vec![T::zero(); n * m];
            for i in 0..n {
                for p in 0..k {
                    let aip = av[i * k + p];
                    for j in 0..m {
                        out[i * m + j] = out[i * m + j] + aip * bv[p * m + j];
                    }
                }
            }
            (out, n, k, m)
        };
        let rg = self.requires(&[a.id, b.id]);
        self.push(value, vec![n, m], Op::MatMul { a: a.id, b: b.id, n, k, m }, rg)
    }

    pub fn transpose<'t>(&'t self, a: Var<'t, T>) -> Var<'t, T> {
        let (value, rows, cols) = {
            let nodes = self.nodes.borrow();
            let s = &nodes[a.id].shape;
            assert_eq!(s.len(), 2, "transpose needs a 2-D tensor");
            let (rows, cols) = (s[0], s[1]);
            let av = &nodes[a.id].value;
            let mut out = vec![T::zero(); rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    out[c * rows + r] = av[r * cols + c];
                }
            }
            (out, rows, cols)
        };
        let rg = self.requires(&[a.id]);
        self.push(value, vec![cols, rows], Op::Transpose { a: a.id, rows, cols }, rg)
    }

    /// Strided convolution. `x [n, cin, h, w]`, `w [cout, cin, k, k]`, `b [cout]`.
    pub fn conv2d<'t>(&'t self, x: Var<'t, T>, w: Var<'t, T>, b: Var<'t, T>, stride: usize, pad: usize) -> Var<'t, T> {
        let g = {
            let nodes = self.nodes.borrow();
            let (xs, ws) = (&nodes[x.id].shape, &nodes[w.id].shape);
            assert!(xs.len() == 4 && ws.len() == 4 && xs[1] == ws[1] && ws[2] == ws[3], "conv2d shape mismatch {xs:?} {ws:?}");
            let k = ws[2];
            ConvGeom {
                batch: xs[0],
                in_channels: xs[1],
                in_h: xs[2],
                in_w: xs[3],
                out_channels: ws[0],
                out_h: (xs[2] + 2 * pad - k) / stride + 1,
                out_w: (xs[3] + 2 * pad - k) / stride + 1,
                kernel: k,
                stride,
                pad,
            }
        };
        let value = {
            let nodes = self.nodes.borrow();
            conv_forward(&g, &nodes[x.id].value, &nodes[w.id].value, &nodes[b.id].value)
        };
        let rg = self.requires(&[x.id, w.id, b.id]);
        self.push(
            value,
            vec![g.batch, g.out_channels, g.out_h, g.out_w],
            Op::Conv { x: x.id, w: w.id, b: b.id, g },
            rg,
        )
    }

    /// Transposed convolution. `x [n, cin, h, w]`, `w [cin, cout, k, k]`, `b [cout]`;
    /// output side `(h - 1) * stride - 2 * pad + k`.
    pub fn conv_transpose2d<'t>(
        &'t self,
        x: Var<'t, T>,
        w: Var<'t, T>,
        b: Var<'t, T>,
        stride: usize,
        pad: usize,
    ) -> Var<'t, T> {
        let g = {
            let nodes = self.nodes.borrow();
            let (xs, ws) = (&nodes[x.id].shape, &nodes[w.id].shape);
            assert!(
                xs.len() == 4 && ws.len() == 4 && xs[1] == ws[0] && ws[2] == ws[3],
                "conv_transpose2d shape mismatch {xs:?} {ws:?}"
            );
            let k = ws[2];
            ConvGeom {
                batch: xs[0],
                in_channels: xs[1],
                in_h: xs[2],
                in_w: xs[3],
                out_channels: ws[1],
                out_h: (xs[2] - 1) * stride + k - 2 * pad,
                out_w: (xs[3] - 1) * stride + k - 2 * pad,
                kernel: k,
                stride,
                pad,
            }
        };
        let value = {
            let nodes = self.nodes.borrow();
            conv_transpose_forward(&g, &nodes[x.id].value, &nodes[w.id].value, &nodes[b.id].value)
        };
        let rg = self.requires(&[x.id, w.id, b.id]);
        self.push(
            value,
            vec![g.batch, g.out_channels, g.out_h, g.out_w],
            Op::ConvTranspose { x: x.id, w: w.id, b: b.id, g },
            rg,
        )
    }

    /// `Σ x·log σ(l) + (1 − x)·log(1 − σ(l))` over all elements, from logits.
    pub fn bernoulli_log_likelihood<'t>(&'t self, logits: Var<'t, T>, target: &[T]) -> Var<'t, T> {
        let value = {
            let nodes = self.nodes.borrow();
            let lv = &nodes[logits.id].value;
            assert_eq!(lv.len(), target.len(), "bernoulli target shape mismatch");
            lv.iter().zip(target).map(|(&l, &x)| x * l - softplus(l)).sum()
        };
        let rg = self.requires(&[logits.id]);
        self.push(
            vec![value],
            vec![1],
            Op::BernoulliLogits { logits: logits.id, target: target.to_vec() },
            rg,
        )
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var<'_, T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[root.id].value.len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        grads[root.id] = Some(vec![T::one()]);

        fn acc<T: Scalar>(grads: &mut [Option<Vec<T>>], nodes: &[Node<T>], id: usize, f: impl FnOnce(&mut [T])) {
            if !nodes[id].requires_grad {
                return;
            }
            let slot = grads[id].get_or_insert_with(|| vec![T::zero(); nodes[id].value.len()]);
            f(slot);
        }

        for i in (0..=root.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(&mut grads, &nodes, *a, |s| add_into(s, &g));
                    acc(&mut grads, &nodes, *b, |s| add_into(s, &g));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, &nodes, *a, |s| add_into(s, &g));
                    acc(&mut grads, &nodes, *b, |s| {
                        for (x, &d) in s.iter_mut().zip(&g) {
                            *x = *x - d;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    acc(&mut grads, &nodes, *a, |s| {
                        for ((x, &d), &y) in s.iter_mut().zip(&g).zip(vb) {
                            *x = *x + d * y;
                        }
                    });
                    acc(&mut grads, &nodes, *b, |s| {
                        for ((x, &d), &y) in s.iter_mut().zip(&g).zip(va) {
                            *x = *x + d * y;
                        }
                    });
                }
                Op::Scale(a, c) => acc(&mut grads, &nodes, *a, |s| {
                    for (x, &d) in s.iter_mut().zip(&g) {
                        *x = *x + d * *c;
                    }
                }),
                Op::Offset(a) | Op::Copy(a) => acc(&mut grads, &nodes, *a, |s| add_into(s, &g)),
                Op::MulScalar(a, c) => {
                    let cv = nodes[*c].value[0];
                    let va = &nodes[*a].value;
                    acc(&mut grads, &nodes, *a, |s| {
                        for (x, &d) in s.iter_mut().zip(&g) {
                            *x = *x + d * cv;
                        }
                    });
                    acc(&mut grads, &nodes, *c, |s| {
                        s[0] = s[0] + g.iter().zip(va).map(|(&d, &y)| d * y).sum::<T>();
                    });
                }
                Op::Exp(a) => acc(&mut grads, &nodes, *a, |s| {
                    for ((x, &d), &y) in s.iter_mut().zip(&g).zip(&node.value) {
                        *x = *x + d * y;
                    }
                }),
                Op::Log(a) => {
                    let va = &nodes[*a].value;
                    acc(&mut grads, &nodes, *a, |s| {
                        for ((x, &d), &y) in s.iter_mut().zip(&g).zip(va) {
                            *x = *x + d / y;
                        }
                    })
                }
                Op::Tanh(a) => acc(&mut grads, &nodes, *a, |s| {
                    for ((x, &d), &y) in s.iter_mut().zip(&g).zip(&node.value) {
                        *x = *x + d * (T::one() - y * y);
                    }
                }),
                Op::Relu(a) => {
                    let va = &nodes[*a].value;
                    acc(&mut grads, &nodes, *a, |s| {
                        for ((x, &d), &y) in s.iter_mut().zip(&g).zip(va) {
                            if y > T::zero() {
                                *x = *x + d;
                            }
                        }
                    })
                }
                Op::Sigmoid(a) => acc(&mut grads, &nodes, *a, |s| {
                    for ((x, &d), &y) in s.iter_mut().zip(&g).zip(&node.value) {
                        *x = *x + d * y * (T::one() - y);
                    }
                }),
                Op::Square(a) => {
                    let va = &nodes[*a].value;
                    let two = T::of(2.0);
                    acc(&mut grads, &nodes, *a, |s| {
                        for ((x, &d), &y) in s.iter_mut().zip(&g).zip(va) {
                            *x = *x + two * d * y;
                        }
                    })
                }
                Op::Sum(a) => acc(&mut grads, &nodes, *a, |s| {
                    for x in s.iter_mut() {
                        *x = *x + g[0];
                    }
                }),
                Op::Slice { a, start } => acc(&mut grads, &nodes, *a, |s| {
                    add_into(&mut s[*start..*start + g.len()], &g);
                }),
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = nodes[p].value.len();
                        acc(&mut grads, &nodes, p, |s| add_into(s, &g[offset..offset + len]));
                        offset += len;
                    }
                }
                Op::Linear { x, w, b, rows, din, dout } => {
                    let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
                    let (rows, din, dout) = (*rows, *din, *dout);
                    acc(&mut grads, &nodes, *x, |s| {
                        for r in 0..rows {
                            for o in 0..dout {
                                let d = g[r * dout + o];
                                if d == T::zero() {
                                    continue;
                                }
                                let wr = &wv[o * din..(o + 1) * din];
                                for (x, &wi) in s[r * din..(r + 1) * din].iter_mut().zip(wr) {
                                    *x = *x + d * wi;
                                }
                            }
                        }
                    });
                    acc(&mut grads, &nodes, *w, |s| {
                        for r in 0..rows {
                            let xr = &xv[r * din..(r + 1) * din];
                            for o in 0..dout {
                                let d = g[r * dout + o];
                                if d == T::zero() {
                                    continue;
                                }
                                for (x, &xi) in s[o * din..(o + 1) * din].iter_mut().zip(xr) {
                                    *x = *x + d * xi;
                                }
                            }
                        }
                    });
                    if let Some(b) = b {
                        acc(&mut grads, &nodes, *b, |s| {
                            for r in 0..rows {
                                add_into(s, &g[r * dout..(r + 1) * dout]);
                            }
                        });
                    }
                }
                Op::MatMul { a, b, n, k, m } => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    let (n, k, m) = (*n, *k, *m);
                    acc(&mut grads, &nodes, *a, |s| {
                        for i in 0..n {
                            for p in 0..k {
                                let mut t = T::zero();
                                for j in 0..m {
                                    t = t + g[i * m + j] * bv[p * m + j];
                                }
                                s[i * k + p] = s[i * k + p] + t;
                            }
                        }
                    });
                    acc(&mut grads, &nodes, *b, |s| {
                        for i in 0..n {
                            for p in 0..k {
                                let aip = av[i * k + p];
                                for j in 0..m {
                                    s[p * m + j] = s[p * m + j] + aip * g[i * m + j];
                                }
                            }
                        }
                    });
                }
                Op::Transpose { a, rows, cols } => acc(&mut grads, &nodes, *a, |s| {
                    for r in 0..*rows {
                        for c in 0..*cols {
                            s[r * cols + c] = s[r * cols + c] + g[c * rows + r];
                        }
                    }
                }),
                Op::Conv { x, w, b, g: geom } => {
                    let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
                    acc(&mut grads, &nodes, *b, |s| bias_grad(geom, &g, s));
                    acc(&mut grads, &nodes, *w, |s| conv_weight_grad(geom, xv, &g, s));
                    acc(&mut grads, &nodes, *x, |s| conv_input_grad(geom, wv, &g, s));
                }
                Op::ConvTranspose { x, w, b, g: geom } => {
                    let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
                    acc(&mut grads, &nodes, *b, |s| bias_grad(geom, &g, s));
                    acc(&mut grads, &nodes, *w, |s| conv_transpose_weight_grad(geom, xv, &g, s));
                    acc(&mut grads, &nodes, *x, |s| conv_transpose_input_grad(geom, wv, &g, s));
                }
                Op::BernoulliLogits { logits, target } => {
                    let lv = &nodes[*logits].value;
                    acc(&mut grads, &nodes, *logits, |s| {
                        for ((x, &l), &t) in s.iter_mut().zip(lv).zip(target) {
                            *x = *x + g[0] * (t - sigmoid(l));
                        }
                    })
                }
            }
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Gradients { grads }
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Vec<T> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// First element; convenient for scalars.
    pub fn item(&self) -> T {
        self.tape.nodes.borrow()[self.id].value[0]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn len(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scale(self, c: T) -> Self {
        self.tape.unary(self, Op::Scale(self.id, c), |x| x * c)
    }

    /// Adds a constant to every element.
    pub fn offset(self, c: T) -> Self {
        self.tape.unary(self, Op::Offset(self.id), |x| x + c)
    }

    /// Multiplies every element by the single-element `s`.
    pub fn mul_scalar(self, s: Var<'t, T>) -> Self {
        let c = s.item();
        assert_eq!(s.len(), 1, "mul_scalar expects a scalar");
        let value = self.tape.nodes.borrow()[self.id].value.iter().map(|&x| x * c).collect();
        let shape = self.shape();
        let rg = self.tape.requires(&[self.id, s.id]);
        self.tape.push(value, shape, Op::MulScalar(self.id, s.id), rg)
    }

    pub fn exp(self) -> Self {
        self.tape.unary(self, Op::Exp(self.id), |x| x.exp())
    }

    pub fn ln(self) -> Self {
        self.tape.unary(self, Op::Log(self.id), |x| x.ln())
    }

    pub fn tanh(self) -> Self {
        self.tape.unary(self, Op::Tanh(self.id), |x| x.tanh())
    }

    pub fn relu(self) -> Self {
        self.tape.unary(self, Op::Relu(self.id), |x| x.max(T::zero()))
    }

    pub fn sigmoid(self) -> Self {
        self.tape.unary(self, Op::Sigmoid(self.id), sigmoid)
    }

    pub fn square(self) -> Self {
        self.tape.unary(self, Op::Square(self.id), |x| x * x)
    }

    pub fn sum(self) -> Self {
        let total = self.tape.nodes.borrow()[self.id].value.iter().copied().sum();
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(vec![total], vec![1], Op::Sum(self.id), rg)
    }

    pub fn dot(self, other: Self) -> Self {
        (self * other).sum()
    }

    /// Contiguous flat range `[start, start + len)` as a vector.
    pub fn slice(self, start: usize, len: usize) -> Self {
        let value = self.tape.nodes.borrow()[self.id].value[start..start + len].to_vec();
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, vec![len], Op::Slice { a: self.id, start }, rg)
    }

    pub fn reshape(self, shape: &[usize]) -> Self {
        let value = self.value();
        assert_eq!(value.len(), numel(shape), "reshape element count mismatch");
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, shape.to_vec(), Op::Copy(self.id), rg)
    }
}

impl<'t, T: Scalar> Add for Var<'t, T> {
    type Output = Var<'t, T>;
    fn add(self, rhs: Self) -> Self {
        self.tape.binary(self, rhs, Op::Add(self.id, rhs.id), |a, b| a + b)
    }
}

impl<'t, T: Scalar> Sub for Var<'t, T> {
    type Output = Var<'t, T>;
    fn sub(self, rhs: Self) -> Self {
        self.tape.binary(self, rhs, Op::Sub(self.id, rhs.id), |a, b| a - b)
    }
}

impl<'t, T: Scalar> Mul for Var<'t, T> {
    type Output = Var<'t, T>;
    fn mul(self, rhs: Self) -> Self {
        self.tape.binary(self, rhs, Op::Mul(self.id, rhs.id), |a, b| a * b)
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Var<'t, T>;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Output columns `ox` whose input column `ox * stride + kx - pad` is in range.
fn valid_range(out_len: usize, in_len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // ox * stride + k >= pad  and  ox * stride + k - pad < in_len
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if in_len + pad > k { ((in_len + pad - k - 1) / stride + 1).min(out_len) } else { 0 };
    (lo, hi.max(lo))
}

fn conv_forward<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let plane_in = g.in_h * g.in_w;
    let plane_out = g.out_h * g.out_w;
    let mut out = vec![T::zero(); g.batch * g.out_channels * plane_out];
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let o_plane = &mut out[(n * g.out_channels + co) * plane_out..][..plane_out];
            o_plane.iter_mut().for_each(|v| *v = b[co]);
            for ci in 0..g.in_channels {
                let i_plane = &x[(n * g.in_channels + ci) * plane_in..][..plane_in];
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_range(g.out_h, g.in_h, ky, s, p);
                    for kx in 0..k {
                        let wv = w[((co * g.in_channels + ci) * k + ky) * k + kx];
                        let (ox_lo, ox_hi) = valid_range(g.out_w, g.in_w, kx, s, p);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - p;
                            let i_row = &i_plane[iy * g.in_w..][..g.in_w];
                            let o_row = &mut o_plane[oy * g.out_w..][..g.out_w];
                            for ox in ox_lo..ox_hi {
                                o_row[ox] = o_row[ox] + wv * i_row[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn bias_grad<T: Scalar>(g: &ConvGeom, gout: &[T], gb: &mut [T]) {
    let plane = g.out_h * g.out_w;
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let s: T = gout[(n * g.out_channels + co) * plane..][..plane].iter().copied().sum();
            gb[co] = gb[co] + s;
        }
    }
}

fn conv_weight_grad<T: Scalar>(g: &ConvGeom, x: &[T], gout: &[T], gw: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let plane_in = g.in_h * g.in_w;
    let plane_out = g.out_h * g.out_w;
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let go_plane = &gout[(n * g.out_channels + co) * plane_out..][..plane_out];
            for ci in 0..g.in_channels {
                let i_plane = &x[(n * g.in_channels + ci) * plane_in..][..plane_in];
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_range(g.out_h, g.in_h, ky, s, p);
                    for kx in 0..k {
                        let (ox_lo, ox_hi) = valid_range(g.out_w, g.in_w, kx, s, p);
                        let mut acc = T::zero();
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - p;
                            let i_row = &i_plane[iy * g.in_w..][..g.in_w];
                            let go_row = &go_plane[oy * g.out_w..][..g.out_w];
                            for ox in ox_lo..ox_hi {
                                acc = acc + go_row[ox] * i_row[ox * s + kx - p];
                            }
                        }
                        let idx = ((co * g.in_channels + ci) * k + ky) * k + kx;
                        gw[idx] = gw[idx] + acc;
                    }
                }
            }
        }
    }
}

fn conv_input_grad<T: Scalar>(g: &ConvGeom, w: &[T], gout: &[T], gx: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let plane_in = g.in_h * g.in_w;
    let plane_out = g.out_h * g.out_w;
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let go_plane = &gout[(n * g.out_channels + co) * plane_out..][..plane_out];
            for ci in 0..g.in_channels {
                let gi_plane = &mut gx[(n * g.in_channels + ci) * plane_in..][..plane_in];
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_range(g.out_h, g.in_h, ky, s, p);
                    for kx in 0..k {
                        let wv = w[((co * g.in_channels + ci) * k + ky) * k + kx];
                        let (ox_lo, ox_hi) = valid_range(g.out_w, g.in_w, kx, s, p);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - p;
                            let go_row = &go_plane[oy * g.out_w..][..g.out_w];
                            let gi_row = &mut gi_plane[iy * g.in_w..][..g.in_w];
                            for ox in ox_lo..ox_hi {
                                let ix = ox * s + kx - p;
                                gi_row[ix] = gi_row[ix] + wv * go_row[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

// A transposed convolution scatters input pixel (iy, ix) to output
// (iy * stride + ky - pad, ix * stride + kx - pad); the roles of the input and
// output grids in `valid_range` swap relative to the forward convolution.

fn conv_transpose_forward<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let plane_in = g.in_h * g.in_w;
    let plane_out = g.out_h * g.out_w;
    let mut out = vec![T::zero(); g.batch * g.out_channels * plane_out];
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            out[(n * g.out_channels + co) * plane_out..][..plane_out]
                .iter_mut()
                .for_each(|v| *v = b[co]);
        }
        for ci in 0..g.in_channels {
            let i_plane = &x[(n * g.in_channels + ci) * plane_in..][..plane_in];
            for co in 0..g.out_channels {
                let o_plane = &mut out[(n * g.out_channels + co) * plane_out..][..plane_out];
                for ky in 0..k {
                    let (iy_lo, iy_hi) = valid_range(g.in_h, g.out_h, ky, s, p);
                    for kx in 0..k {
                        let wv = w[((ci * g.out_channels + co) * k + ky) * k + kx];
                        let (ix_lo, ix_hi) = valid_range(g.in_w, g.out_w, kx, s, p);
                        for iy in iy_lo..iy_hi {
                            let oy = iy * s + ky - p;
                            let i_row = &i_plane[iy * g.in_w..][..g.in_w];
                            let o_row = &mut o_plane[oy * g.out_w..][..g.out_w];
                            for ix in ix_lo..ix_hi {
                                let ox = ix * s + kx - p;
                                o_row[ox] = o_row[ox] + wv * i_row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_transpose_weight_grad<T: Scalar>(g: &ConvGeom, x: &[T], gout: &[T], gw: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let plane_in = g.in_h * g.in_w;
    let plane_out = g.out_h * g.out_w;
    for n in 0..g.batch {
        for ci in 0..g.in_channels {
            let i_plane = &x[(n * g.in_channels + ci) * plane_in..][..plane_in];
            for co in 0..g.out_channels {
                let go_plane = &gout[(n * g.out_channels + co) * plane_out..][..plane_out];
                for ky in 0..k {
                    let (iy_lo, iy_hi) = valid_range(g.in_h, g.out_h, ky, s, p);
                    for kx in 0..k {
                        let (ix_lo, ix_hi) = valid_range(g.in_w, g.out_w, kx, s, p);
                        let mut acc = T::zero();
                        for iy in iy_lo..iy_hi {
                            let oy = iy * s + ky - p;
                            let i_row = &i_plane[iy * g.in_w..][..g.in_w];
                            let go_row = &go_plane[oy * g.out_w..][..g.out_w];
                            for ix in ix_lo..ix_hi {
                                acc = acc + i_row[ix] * go_row[ix * s + kx - p];
                            }
                        }
                        let idx = ((ci * g.out_channels + co) * k + ky) * k + kx;
                        gw[idx] = gw[idx] + acc;
                    }
                }
            }
        }
    }
}

fn conv_transpose_input_grad<T: Scalar>(g: &ConvGeom, w: &[T], gout: &[T], gx: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let plane_in = g.in_h * g.in_w;
    let plane_out = g.out_h * g.out_w;
    for n in 0..g.batch {
        for ci in 0..g.in_channels {
            let gi_plane = &mut gx[(n * g.in_channels + ci) * plane_in..][..plane_in];
            for co in 0..g.out_channels {
                let go_plane = &gout[(n * g.out_channels + co) * plane_out..][..plane_out];
                for ky in 0..k {
                    let (iy_lo, iy_hi) = valid_range(g.in_h, g.out_h, ky, s, p);
                    for kx in 0..k {
                        let wv = w[((ci * g.out_channels + co) * k + ky) * k + kx];
                        let (ix_lo, ix_hi) = valid_range(g.in_w, g.out_w, kx, s, p);
                        for iy in iy_lo..iy_hi {
                            let oy = iy * s + ky - p;
                            let go_row = &go_plane[oy * g.out_w..][..g.out_w];
                            let gi_row = &mut gi_plane[iy * g.in_w..][..g.in_w];
                            for ix in ix_lo..ix_hi {
                                gi_row[ix] = gi_row[ix] + wv * go_row[ix * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
}
