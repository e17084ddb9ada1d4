//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records the forward computation as a flat list of nodes;
//! [`Tape::backward`] walks it in reverse and accumulates gradients, which
//! are then harvested into a [`ParamSet`]. Ops are matrix-granular so the
//! node count stays small even for graph-sized forwards.

use crate::tensor::{ParamSet, Tensor};
use crate::{Error, Result};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// matrix + row vector broadcast over rows
    AddRow(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    SumAll(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, gain: Var, bias: Var, mean: Vec<f64>, inv_std: Vec<f64> },
    CrossEntropy { scores: Var, target: usize, probs: Vec<f64> },
    /// Patch extraction with a precomputed index map; -1 reads as zero.
    Im2Col { x: Var, rows: usize, cols: usize, indices: Vec<i64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    grads: Vec<Option<Tensor>>,
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.all_finite(), "non-finite tape value");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient is reported for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf backed by a named parameter; its gradient is collected by
    /// [`Tape::harvest`].
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let value = params.get(name)?.value.clone();
        let v = self.push(value, Op::Leaf);
        self.params.push((name.to_string(), v));
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::Shape(format!("matmul {ar}x{ac} * {br}x{bc}")));
        }
        let value = matmul_raw(self.value(a), self.value(b));
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape("add shape mismatch".into()));
        }
        let mut value = self.value(a).clone();
        for (v, w) in value.data.iter_mut().zip(&self.value(b).data) {
            *v += w;
        }
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, mat: Var, row: Var) -> Result<Var> {
        let (_, mc) = self.shape(mat);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != mc {
            return Err(Error::Shape(format!("add_row cols {mc} vs row {rr}x{rc}")));
        }
        let mut value = self.value(mat).clone();
        let rowv = &self.nodes[row.0].value.data;
        for r in 0..value.rows {
            for c in 0..value.cols {
                value.data[r * value.cols + c] += rowv[c];
            }
        }
        Ok(self.push(value, Op::AddRow(mat, row)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape("sub shape mismatch".into()));
        }
        let mut value = self.value(a).clone();
        for (v, w) in value.data.iter_mut().zip(&self.value(b).data) {
            *v -= w;
        }
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|v| *v *= factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v *= slope;
            }
        });
        self.push(value, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|v| *v = v.tanh());
        self.push(value, Op::Tanh(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = Tensor::zeros(t.cols, t.rows);
        for r in 0..t.rows {
            for c in 0..t.cols {
                value.data[c * t.rows + r] = t.data[r * t.cols + c];
            }
        }
        self.push(value, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols of nothing".into()));
        }
        let rows = self.shape(parts[0]).0;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::Shape("concat_cols row mismatch".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                value.data[r * cols + offset..r * cols + offset + t.cols]
                    .copy_from_slice(t.row(r));
            }
            offset += t.cols;
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_rows of nothing".into()));
        }
        let cols = self.shape(parts[0]).1;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(Error::Shape("concat_rows col mismatch".into()));
        }
        let rows: usize = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(&self.value(p).data);
        }
        let value = Tensor { rows, cols, data };
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if indices.iter().any(|&i| i >= t.rows) {
            return Err(Error::Input("gather_rows index out of range".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * t.cols);
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor { rows: indices.len(), cols: t.cols, data };
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if rows * cols != t.len() {
            return Err(Error::Shape("reshape size mismatch".into()));
        }
        let value = Tensor { rows, cols, data: t.data.clone() };
        Ok(self.push(value, Op::Reshape(a)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data.iter().sum();
        self.push(Tensor::vector(vec![s]), Op::SumAll(a))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = t.clone();
        for r in 0..t.rows {
            softmax_in_place(&mut value.data[r * t.cols..(r + 1) * t.cols]);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Row-wise layer normalization (1/n variance, epsilon 1e-5) followed
    /// by an affine gain/bias.
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(gain) != (1, cols) || self.shape(bias) != (1, cols) {
            return Err(Error::Shape("layer_norm gain/bias must be 1 x cols".into()));
        }
        let t = self.value(x);
        let g = &self.nodes[gain.0].value.data;
        let b = &self.nodes[bias.0].value.data;
        let mut value = Tensor::zeros(rows, cols);
        let mut means = Vec::with_capacity(rows);
        let mut inv_stds = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = t.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for c in 0..cols {
                value.data[r * cols + c] = (row[c] - mean) * inv_std * g[c] + b[c];
            }
            means.push(mean);
            inv_stds.push(inv_std);
        }
        Ok(self.push(value, Op::LayerNormRows { x, gain, bias, mean: means, inv_std: inv_stds }))
    }

    /// -log softmax(scores)[target] for a 1 x n score vector.
    pub fn cross_entropy(&mut self, scores: Var, target: usize) -> Result<Var> {
        let (rows, cols) = self.shape(scores);
        if rows != 1 || cols == 0 {
            return Err(Error::Shape("cross_entropy expects a 1 x n score vector".into()));
        }
        if target >= cols {
            return Err(Error::Input(format!("target {target} out of range {cols}")));
        }
        let mut probs = self.value(scores).data.clone();
        softmax_in_place(&mut probs);
        let loss = -(probs[target].max(1e-300)).ln();
        Ok(self.push(
            Tensor::vector(vec![loss]),
            Op::CrossEntropy { scores, target, probs },
        ))
    }

    /// Patch extraction: output[p, q] = x.data[indices[p * cols + q]], with
    /// -1 reading as zero. `x` is treated as a flat buffer.
    pub fn im2col(&mut self, x: Var, rows: usize, cols: usize, indices: Vec<i64>) -> Result<Var> {
        if indices.len() != rows * cols {
            return Err(Error::Shape("im2col index map size mismatch".into()));
        }
        let src = &self.value(x).data;
        let mut data = Vec::with_capacity(indices.len());
        for &i in &indices {
            if i < 0 {
                data.push(0.0);
            } else {
                let i = i as usize;
                if i >= src.len() {
                    return Err(Error::Input("im2col index out of range".into()));
                }
                data.push(src[i]);
            }
        }
        let value = Tensor { rows, cols, data };
        Ok(self.push(value, Op::Im2Col { x, rows, cols, indices }))
    }

    /// Backpropagate from a scalar output through the whole tape.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).len() != 1 {
            return Err(Error::Shape("backward target must be scalar".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::vector(vec![1.0]));
        for idx in (0..self.nodes.len()).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            self.backprop_node(idx, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let accum = |grads: &mut [Option<Tensor>], v: Var, add: Tensor| {
            match &mut grads[v.0] {
                Some(g) => {
                    for (a, b) in g.data.iter_mut().zip(&add.data) {
                        *a += b;
                    }
                }
                slot => *slot = Some(add),
            }
        };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                // dA = gy * B^T ; dB = A^T * gy
                let ga = matmul_nt(gy, tb);
                let gb = matmul_tn(ta, gy);
                accum(grads, *a, ga);
                accum(grads, *b, gb);
            }
            Op::Add(a, b) => {
                accum(grads, *a, gy.clone());
                accum(grads, *b, gy.clone());
            }
            Op::AddRow(mat, row) => {
                accum(grads, *mat, gy.clone());
                let mut grow = Tensor::zeros(1, gy.cols);
                for r in 0..gy.rows {
                    for c in 0..gy.cols {
                        grow.data[c] += gy.data[r * gy.cols + c];
                    }
                }
                accum(grads, *row, grow);
            }
            Op::Sub(a, b) => {
                accum(grads, *a, gy.clone());
                let mut gb = gy.clone();
                gb.data.iter_mut().for_each(|v| *v = -*v);
                accum(grads, *b, gb);
            }
            Op::Scale(a, factor) => {
                let mut ga = gy.clone();
                ga.data.iter_mut().for_each(|v| *v *= factor);
                accum(grads, *a, ga);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let mut ga = gy.clone();
                for (g, &v) in ga.data.iter_mut().zip(&x.data) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
                accum(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let mut ga = gy.clone();
                for (g, &v) in ga.data.iter_mut().zip(&x.data) {
                    if v < 0.0 {
                        *g *= slope;
                    }
                }
                accum(grads, *a, ga);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                let mut ga = gy.clone();
                for (g, &t) in ga.data.iter_mut().zip(&y.data) {
                    *g *= 1.0 - t * t;
                }
                accum(grads, *a, ga);
            }
            Op::Transpose(a) => {
                let mut ga = Tensor::zeros(gy.cols, gy.rows);
                for r in 0..gy.rows {
                    for c in 0..gy.cols {
                        ga.data[c * gy.rows + r] = gy.data[r * gy.cols + c];
                    }
                }
                accum(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.value(p).shape();
                    let mut gp = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        gp.data[r * cols..(r + 1) * cols].copy_from_slice(
                            &gy.data[r * gy.cols + offset..r * gy.cols + offset + cols],
                        );
                    }
                    offset += cols;
                    accum(grads, p, gp);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.value(p).shape();
                    let gp = Tensor {
                        rows,
                        cols,
                        data: gy.data[offset * cols..(offset + rows) * cols].to_vec(),
                    };
                    offset += rows;
                    accum(grads, p, gp);
                }
            }
            Op::GatherRows(a, indices) => {
                let (rows, cols) = self.value(*a).shape();
                let mut ga = Tensor::zeros(rows, cols);
                for (out_r, &src_r) in indices.iter().enumerate() {
                    for c in 0..cols {
                        ga.data[src_r * cols + c] += gy.data[out_r * cols + c];
                    }
                }
                accum(grads, *a, ga);
            }
            Op::Reshape(a) => {
                let (rows, cols) = self.value(*a).shape();
                let ga = Tensor { rows, cols, data: gy.data.clone() };
                accum(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let (rows, cols) = self.value(*a).shape();
                let g = gy.data[0];
                accum(grads, *a, Tensor { rows, cols, data: vec![g; rows * cols] });
            }
            Op::SoftmaxRows(a) => {
                let p = &self.nodes[idx].value;
                let mut ga = Tensor::zeros(p.rows, p.cols);
                for r in 0..p.rows {
                    let prow = p.row(r);
                    let gyrow = &gy.data[r * p.cols..(r + 1) * p.cols];
                    let dot: f64 = prow.iter().zip(gyrow).map(|(p, g)| p * g).sum();
                    for c in 0..p.cols {
                        ga.data[r * p.cols + c] = prow[c] * (gyrow[c] - dot);
                    }
                }
                accum(grads, *a, ga);
            }
            Op::LayerNormRows { x, gain, bias, mean, inv_std } => {
                let t = self.value(*x);
                let g = &self.value(*gain).data;
                let (rows, cols) = t.shape();
                let mut gx = Tensor::zeros(rows, cols);
                let mut ggain = Tensor::zeros(1, cols);
                let mut gbias = Tensor::zeros(1, cols);
                for r in 0..rows {
                    let row = t.row(r);
                    let gyrow = &gy.data[r * cols..(r + 1) * cols];
                    let is = inv_std[r];
                    let mu = mean[r];
                    // dg_c = gy_c * g_c applied to x_hat; standard layer-norm backward
                    let mut sum_dg = 0.0;
                    let mut sum_dg_xhat = 0.0;
                    for c in 0..cols {
                        let xhat = (row[c] - mu) * is;
                        let dg = gyrow[c] * g[c];
                        sum_dg += dg;
                        sum_dg_xhat += dg * xhat;
                        ggain.data[c] += gyrow[c] * xhat;
                        gbias.data[c] += gyrow[c];
                    }
                    let n = cols as f64;
                    for c in 0..cols {
                        let xhat = (row[c] - mu) * is;
                        let dg = gyrow[c] * g[c];
                        gx.data[r * cols + c] =
                            is * (dg - sum_dg / n - xhat * sum_dg_xhat / n);
                    }
                }
                accum(grads, *x, gx);
                accum(grads, *gain, ggain);
                accum(grads, *bias, gbias);
            }
            Op::CrossEntropy { scores, target, probs } => {
                let g = gy.data[0];
                let mut gs = Tensor::zeros(1, probs.len());
                for (c, &p) in probs.iter().enumerate() {
                    gs.data[c] = g * (p - if c == *target { 1.0 } else { 0.0 });
                }
                accum(grads, *scores, gs);
            }
            Op::Im2Col { x, rows, cols, indices } => {
                let (xr, xc) = self.value(*x).shape();
                let mut gx = Tensor::zeros(xr, xc);
                for p in 0..*rows {
                    for q in 0..*cols {
                        let i = indices[p * cols + q];
                        if i >= 0 {
                            gx.data[i as usize] += gy.data[p * cols + q];
                        }
                    }
                }
                accum(grads, *x, gx);
            }
        }
    }

    /// Gradient of a value after [`Tape::backward`]; None if no gradient
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Accumulate parameter-leaf gradients into the param set.
    pub fn harvest(&self, params: &mut ParamSet) -> Result<()> {
        for (name, var) in &self.params {
            if let Some(g) = self.grad(*var) {
                let p = params.get_mut(name)?;
                if p.grad.shape() != g.shape() {
                    return Err(Error::Shape(format!("gradient shape mismatch for {name}")));
                }
                for (a, b) in p.grad.data.iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
        }
        Ok(())
    }
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = b.row(k);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// a * b^T
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            let brow = b.row(j);
            let mut s = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out.data[i * b.rows + j] = s;
        }
    }
    out
}

/// a^T * b
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let arow = a.row(k);
        let brow = b.row(k);
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}
