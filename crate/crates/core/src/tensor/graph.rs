use super::gemm::{axpy, gemm_nn, gemm_nt, gemm_tn};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `(k - 1) / 2` on every side.
    Same,
    Valid,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Softmax(Var),
    Embedding { table: Var, indices: Vec<usize> },
    Slice { input: Var, axis: usize, start: usize },
    Reshape(Var),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geom: ConvGeom, cols: Vec<T> },
    MaxPool { input: Var, argmax: Vec<usize> },
    BceWithLogits { logits: Var, labels: Vec<T>, weights: Vec<T> },
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn p(&self) -> usize {
        self.ho * self.wo
    }
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Define-by-run tape. Nodes are stored in execution order, which is a
/// topological order of the computation.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Smallest `|x|` over all relu inputs on the tape, i.e. how far the
    /// current point is from a kink. `None` without relu nodes.
    pub fn relu_margin(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => self.data(a).iter().map(|x| x.abs()).reduce(T::min),
                _ => None,
            })
            .reduce(T::min)
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", &[sa, sb]));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm_nn(m, k, n, self.data(a), self.data(b), &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, rg, Op::MatMul(a, b)))
    }

    /// `b` broadcasts over `a` when its shape (ignoring leading ones) is a
    /// suffix of `a`'s shape.
    fn broadcast_ok(sa: &[usize], sb: &[usize]) -> bool {
        let first = sb.iter().position(|&d| d != 1).unwrap_or(sb.len());
        let core = &sb[first..];
        core.len() <= sa.len() && sa[sa.len() - core.len()..] == *core
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |s| Op::Add(s.0, s.1))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |s| Op::Mul(s.0, s.1))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: impl Fn((Var, Var)) -> Op<T>,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !Self::broadcast_ok(sa, sb) {
            return Err(Error::shape(name, &[sa, sb]));
        }
        let shape = sa.to_vec();
        let (da, db) = (self.data(a), self.data(b));
        let nb = db.len();
        let data = da.iter().enumerate().map(|(i, &x)| f(x, db[i % nb])).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape, data }, rg, op((a, b))))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| x * s).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor { shape, data }, rg, Op::Scale(a, s)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(&[a]);
        self.push(Tensor { shape, data }, rg, op)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, |x| x.tanh(), Op::Tanh(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, sigmoid, Op::Sigmoid(a)))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &[&base]));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let same = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !same {
                let shapes: Vec<&[usize]> = inputs.iter().map(|&v| self.shape(v)).collect();
                return Err(Error::shape("concat", &shapes));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let block = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.data(v)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.rg(inputs);
        Ok(self.push(Tensor { shape, data }, rg, Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = *t.shape().last().unwrap();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(n) {
            softmax_in_place(row);
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor { shape, data }, rg, Op::Softmax(a)))
    }

    /// Rows of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 || indices.is_empty() {
            return Err(Error::shape("embedding", &[s]));
        }
        let (vocab, dim) = (s[0], s[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(Error::BadIndex { index: bad, size: vocab });
        }
        let src = self.data(table);
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            data.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        let rg = self.rg(&[table]);
        let op = Op::Embedding { table, indices: indices.to_vec() };
        Ok(self.push(Tensor { shape: vec![indices.len(), dim], data }, rg, op))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::InvalidArgument(format!(
                "slice: [{start}, {}) on axis {axis} of shape {s:?}",
                start + len
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let src = self.data(a);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * s[axis] * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor { shape, data }, rg, Op::Slice { input: a, axis, start }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape.to_vec())?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, rg, Op::Reshape(a)))
    }

    /// Transpose of a matrix.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::shape("transpose", &[s]));
        }
        let (r, c) = (s[0], s[1]);
        let src = self.data(a);
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor { shape: vec![c, r], data }, rg, Op::Transpose(a)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.data(a).iter().copied().sum();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(s), rg, Op::Sum(a)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let d = self.data(a);
        let s = d.iter().copied().sum::<T>() / T::from_f64(d.len() as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(s), rg, Op::Mean(a)))
    }

    /// 2-D convolution of a `[cin, h, w]` input with `[cout, cin, kh, kw]`
    /// weights and an optional `[cout]` bias.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (si, sw) = (self.shape(input), self.shape(weight));
        let bad = si.len() != 3 || sw.len() != 4 || sw[1] != si[0] || stride == 0;
        if bad {
            return Err(Error::shape("conv2d", &[si, sw]));
        }
        let (cin, h, w) = (si[0], si[1], si[2]);
        let (cout, kh, kw) = (sw[0], sw[2], sw[3]);
        let pad = match padding {
            Padding::Same => (kh.max(kw) - 1) / 2,
            Padding::Valid => 0,
        };
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::shape("conv2d", &[si, sw]));
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(Error::shape("conv2d", &[si, sw, self.shape(b)]));
            }
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        let geom = ConvGeom { cin, h, w, kh, kw, stride, pad, ho, wo };
        let cols = im2col(&geom, self.data(input));
        let mut out = vec![T::zero(); cout * geom.p()];
        if let Some(b) = bias {
            for (row, &bv) in out.chunks_mut(geom.p()).zip(self.data(b)) {
                row.fill(bv);
            }
        }
        gemm_nn(cout, geom.k(), geom.p(), self.data(weight), &cols, &mut out);
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.rg(&deps);
        let op = Op::Conv2d { input, weight, bias, geom, cols };
        Ok(self.push(Tensor { shape: vec![cout, ho, wo], data: out }, rg, op))
    }

    /// Max pooling over `[c, h, w]` with a square window, no padding.
    pub fn max_pool(&mut self, input: Var, size: usize, stride: usize) -> Result<Var> {
        let s = self.shape(input);
        if s.len() != 3 || size == 0 || stride == 0 || s[1] < size || s[2] < size {
            return Err(Error::shape("max_pool", &[s]));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let ho = (h - size) / stride + 1;
        let wo = (w - size) / stride + 1;
        let src = self.data(input);
        let mut data = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = ch * h * w + oy * stride * w + ox * stride;
                    for ky in 0..size {
                        for kx in 0..size {
                            let idx = ch * h * w + (oy * stride + ky) * w + ox * stride + kx;
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                    }
                    data.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(&[input]);
        Ok(self.push(Tensor { shape: vec![c, ho, wo], data }, rg, Op::MaxPool { input, argmax }))
    }

    /// Weighted sigmoid cross-entropy evaluated from logits:
    /// `sum_i w_i * bce(sigmoid(z_i), y_i) / M`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T], weights: &[T]) -> Result<Var> {
        let z = self.data(logits);
        if z.len() != labels.len() || z.len() != weights.len() || z.is_empty() {
            return Err(Error::shape("bce_with_logits", &[self.shape(logits), &[labels.len()]]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
            return Err(Error::BadLabel(bad.to_f32()));
        }
        let m = T::from_f64(z.len() as f64);
        let total: T = z.iter().zip(labels).zip(weights).map(|((&z, &y), &w)| w * bce_logit(z, y)).sum();
        let rg = self.rg(&[logits]);
        let op = Op::BceWithLogits { logits, labels: labels.to_vec(), weights: weights.to_vec() };
        Ok(self.push(Tensor::scalar(total / m), rg, op))
    }

    /// Populates gradients of `loss` with respect to every node that
    /// requires one. Gradients from earlier calls are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = self.grads[i].take() else {
                continue;
            };
            Self::backprop_node(&self.nodes, &mut self.grads, i, &gout);
            self.grads[i] = Some(gout);
        }
        Ok(())
    }

    fn backprop_node(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], i: usize, g: &[T]) {
        let data = |v: Var| nodes[v.0].value.data();
        let shape = |v: Var| nodes[v.0].value.shape();
        let rg = |v: Var| nodes[v.0].requires_grad;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (shape(*a)[0], shape(*a)[1]);
                let n = shape(*b)[1];
                if rg(*a) {
                    let bd = data(*b);
                    let ga = acc(nodes, grads, *a).unwrap();
                    gemm_nt(m, n, k, g, bd, ga);
                }
                if rg(*b) {
                    let ad = data(*a);
                    let gb = acc(nodes, grads, *b).unwrap();
                    gemm_tn(k, m, n, ad, g, gb);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    axpy(T::one(), g, ga);
                }
                if let Some(gb) = acc(nodes, grads, *b) {
                    let nb = gb.len();
                    for (j, &gv) in g.iter().enumerate() {
                        gb[j % nb] = gb[j % nb] + gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let ad = data(*a);
                let bd = data(*b);
                let nb = bd.len();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for (j, gv) in ga.iter_mut().enumerate() {
                        *gv = *gv + g[j] * bd[j % nb];
                    }
                }
                if let Some(gb) = acc(nodes, grads, *b) {
                    for (j, &gv) in g.iter().enumerate() {
                        gb[j % nb] = gb[j % nb] + gv * ad[j];
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    axpy(*s, g, ga);
                }
            }
            Op::Relu(a) => {
                let x = data(*a);
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((gv, &xv), &go) in ga.iter_mut().zip(x).zip(g) {
                        if xv > T::zero() {
                            *gv = *gv + go;
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                let y = nodes[i].value.data();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((gv, &yv), &go) in ga.iter_mut().zip(y).zip(g) {
                        *gv = *gv + go * (T::one() - yv * yv);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = nodes[i].value.data();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((gv, &yv), &go) in ga.iter_mut().zip(y).zip(g) {
                        *gv = *gv + go * yv * (T::one() - yv);
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let s = nodes[i].value.shape().to_vec();
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let total = s[*axis] * inner;
                let mut offset = 0;
                for &v in inputs {
                    let block = shape(v)[*axis] * inner;
                    if let Some(gv) = acc(nodes, grads, v) {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + block];
                            axpy(T::one(), src, &mut gv[o * block..(o + 1) * block]);
                        }
                    }
                    offset += block;
                }
            }
            Op::Softmax(a) => {
                let y = nodes[i].value.data();
                let n = *nodes[i].value.shape().last().unwrap();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((gr, yr), gor) in ga.chunks_mut(n).zip(y.chunks(n)).zip(g.chunks(n)) {
                        let dotp: T = yr.iter().zip(gor).map(|(&y, &go)| y * go).sum();
                        for ((gv, &yv), &go) in gr.iter_mut().zip(yr).zip(gor) {
                            *gv = *gv + yv * (go - dotp);
                        }
                    }
                }
            }
            Op::Embedding { table, indices } => {
                let dim = shape(*table)[1];
                if let Some(gt) = acc(nodes, grads, *table) {
                    for (r, &idx) in indices.iter().enumerate() {
                        axpy(T::one(), &g[r * dim..(r + 1) * dim], &mut gt[idx * dim..(idx + 1) * dim]);
                    }
                }
            }
            Op::Slice { input, axis, start } => {
                let s = shape(*input).to_vec();
                let len = nodes[i].value.shape()[*axis];
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                if let Some(ga) = acc(nodes, grads, *input) {
                    for o in 0..outer {
                        let base = o * s[*axis] * inner + start * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        axpy(T::one(), src, &mut ga[base..base + len * inner]);
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    axpy(T::one(), g, ga);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (shape(*a)[0], shape(*a)[1]);
                if let Some(ga) = acc(nodes, grads, *a) {
                    for x in 0..r {
                        for y in 0..c {
                            ga[x * c + y] = ga[x * c + y] + g[y * r + x];
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    for gv in ga.iter_mut() {
                        *gv = *gv + g[0];
                    }
                }
            }
            Op::Mean(a) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    let s = g[0] / T::from_f64(ga.len() as f64);
                    for gv in ga.iter_mut() {
                        *gv = *gv + s;
                    }
                }
            }
            Op::Conv2d { input, weight, bias, geom, cols } => {
                let cout = shape(*weight)[0];
                let (k, p) = (geom.k(), geom.p());
                if let Some(b) = bias {
                    if let Some(gb) = acc(nodes, grads, *b) {
                        for (gbv, row) in gb.iter_mut().zip(g.chunks(p)) {
                            *gbv = *gbv + row.iter().copied().sum::<T>();
                        }
                    }
                }
                if let Some(gw) = acc(nodes, grads, *weight) {
                    gemm_nt(cout, p, k, g, cols, gw);
                }
                if rg(*input) {
                    let wd = data(*weight);
                    let mut dcols = vec![T::zero(); k * p];
                    gemm_tn(k, cout, p, wd, g, &mut dcols);
                    let gi = acc(nodes, grads, *input).unwrap();
                    col2im(geom, &dcols, gi);
                }
            }
            Op::MaxPool { input, argmax } => {
                if let Some(ga) = acc(nodes, grads, *input) {
                    for (&idx, &gv) in argmax.iter().zip(g) {
                        ga[idx] = ga[idx] + gv;
                    }
                }
            }
            Op::BceWithLogits { logits, labels, weights } => {
                let z = data(*logits);
                let m = T::from_f64(z.len() as f64);
                if let Some(gz) = acc(nodes, grads, *logits) {
                    for j in 0..z.len() {
                        let d = weights[j] * (sigmoid(z[j]) - labels[j]) / m;
                        gz[j] = gz[j] + g[0] * d;
                    }
                }
            }
        }
    }
}

fn acc<'a, T: Real>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut [T]> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `-(y log s(z) + (1-y) log(1-s(z)))` without forming probabilities.
pub(crate) fn bce_logit<T: Real>(z: T, y: T) -> T {
    // max(z,0) - z*y + log(1 + exp(-|z|))
    let zero = T::zero();
    let pos = if z > zero { z } else { zero };
    pos - z * y + (-z.abs()).exp().ln_1p()
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

fn im2col<T: Real>(g: &ConvGeom, x: &[T]) -> Vec<T> {
    let p = g.p();
    let mut cols = vec![T::zero(); g.k() * p];
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &x[c * g.h * g.w + iy as usize * g.w..];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let p = g.p();
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = c * g.h * g.w + iy as usize * g.w;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dx[base + ix as usize] = dx[base + ix as usize] + src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}
