//! Reverse-mode differentiation over a recorded tape of matrix operations.
//!
//! Every value on the tape is a 2-D `f64` matrix; scalars are `1x1`. Row
//! vectors (`1xn`) broadcast over the batch dimension where an operation
//! says so.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x · wᵀ + b` with `b` a `1xout` row.
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow {
        x: Var,
        row: Var,
    },
    MulRow {
        x: Var,
        row: Var,
    },
    /// Elementwise product with a constant (same shape or `1xn` row).
    MulConst(Var, Array2<f64>),
    Scale(Var, f64),
    AddConst(Var),
    Exp(Var),
    Softplus(Var),
    ConcatCols(Var, Var),
    /// Batch normalization with batch statistics; stores the normalized
    /// output and the per-column inverse standard deviation.
    BatchNorm {
        x: Var,
        inv_std: Array1<f64>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    /// `Σ_ij x_ij w_ij`, a scalar.
    WeightedSum(Var, Array2<f64>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Row-wise log-softmax via log-sum-exp.
pub fn log_softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a `1x1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A new leaf holding a copy of `v`; no gradient flows back through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.leaf(value)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.ncols() != wv.ncols() {
            return Err(Error::Shape(format!(
                "dense layer expects input width {}, got {}",
                wv.ncols(),
                xv.ncols()
            )));
        }
        if bv.dim() != (1, wv.nrows()) {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match output width {}",
                bv.dim(),
                wv.nrows()
            )));
        }
        let value = xv.dot(&wv.t()) + bv;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(Error::Shape(format!(
                "cannot multiply {:?} by {:?}",
                av.dim(),
                bv.dim()
            )));
        }
        let value = av.dot(bv);
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).dim(),
            self.value(b).dim(),
            "{what}: operand shapes differ"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1);
        let value = self.value(x) + self.value(row);
        self.push(value, Op::AddRow { x, row })
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1);
        let value = self.value(x) * self.value(row);
        self.push(value, Op::MulRow { x, row })
    }

    pub fn mul_const(&mut self, x: Var, c: Array2<f64>) -> Var {
        let value = self.value(x) * &c;
        self.push(value, Op::MulConst(x, c))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x) * c;
        self.push(value, Op::Scale(x, c))
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x) + c;
        self.push(value, Op::AddConst(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::exp);
        self.push(value, Op::Exp(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(softplus);
        self.push(value, Op::Softplus(x))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.nrows() != bv.nrows() {
            return Err(Error::Shape(format!(
                "cannot concatenate {} rows with {} rows",
                av.nrows(),
                bv.nrows()
            )));
        }
        let value = ndarray::concatenate(Axis(1), &[av.view(), bv.view()]).expect("row counts checked");
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    /// Normalize each column with the batch mean and biased variance.
    /// Returns the output plus the batch mean and biased variance.
    pub fn batch_norm(&mut self, x: Var, eps: f64) -> Result<(Var, Array1<f64>, Array1<f64>)> {
        let xv = self.value(x);
        let n = xv.nrows();
        if n < 2 {
            return Err(Error::Shape(
                "batch normalization in train mode needs at least 2 rows".into(),
            ));
        }
        let mean = xv.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = xv - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let value = centered * &inv_std;
        let out = self.push(value, Op::BatchNorm { x, inv_std });
        Ok((out, mean, var))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x));
        self.push(value, Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let value = log_softmax_rows(self.value(x));
        self.push(value, Op::LogSoftmax(x))
    }

    pub fn weighted_sum(&mut self, x: Var, weights: Array2<f64>) -> Var {
        assert_eq!(self.value(x).dim(), weights.dim(), "weighted_sum: shape mismatch");
        let s = Zip::from(self.value(x))
            .and(&weights)
            .fold(0.0, |acc, &a, &w| acc + a * w);
        self.push(Array2::from_elem((1, 1), s), Op::WeightedSum(x, weights))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let w = Array2::ones(self.value(x).dim());
        self.weighted_sum(x, w)
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let l = self.value(loss);
        if l.dim() != (1, 1) {
            return Err(Error::Shape(format!("loss must be 1x1, got {:?}", l.dim())));
        }
        if !l[[0, 0]].is_finite() {
            return Err(Error::NonFinite(format!("loss is {}", l[[0, 0]])));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    acc(&mut grads, *x, dy.dot(self.value(*w)));
                    acc(&mut grads, *w, dy.t().dot(self.value(*x)));
                    acc(&mut grads, *b, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, dy.dot(&self.value(*b).t()));
                    acc(&mut grads, *b, self.value(*a).t().dot(&dy));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, dy.clone());
                    acc(&mut grads, *b, dy.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&dy);
                    acc(&mut grads, *a, dy.clone());
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, &dy * self.value(*b));
                    acc(&mut grads, *b, &dy * self.value(*a));
                }
                Op::AddRow { x, row } => {
                    acc(&mut grads, *row, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *x, dy.clone());
                }
                Op::MulRow { x, row } => {
                    let g_row = (&dy * self.value(*x)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *x, &dy * self.value(*row));
                    acc(&mut grads, *row, g_row);
                }
                Op::MulConst(x, c) => acc(&mut grads, *x, &dy * c),
                Op::Scale(x, c) => acc(&mut grads, *x, &dy * *c),
                Op::AddConst(x) => acc(&mut grads, *x, dy.clone()),
                Op::Exp(x) => acc(&mut grads, *x, &dy * &node.value),
                Op::Softplus(x) => {
                    let g = &dy * &self.value(*x).mapv(sigmoid);
                    acc(&mut grads, *x, g);
                }
                Op::ConcatCols(a, b) => {
                    let split = self.value(*a).ncols();
                    acc(&mut grads, *a, dy.slice(ndarray::s![.., ..split]).to_owned());
                    acc(&mut grads, *b, dy.slice(ndarray::s![.., split..]).to_owned());
                }
                Op::BatchNorm { x, inv_std } => {
                    let xhat = &node.value;
                    let n = xhat.nrows() as f64;
                    let sum_dy = dy.sum_axis(Axis(0));
                    let sum_dy_xhat = (&dy * xhat).sum_axis(Axis(0));
                    let g = (&dy * n - &sum_dy - xhat * &sum_dy_xhat) * &(inv_std / n);
                    acc(&mut grads, *x, g);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let dot = (&dy * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads, *x, y * &(&dy - &dot));
                }
                Op::LogSoftmax(x) => {
                    let p = node.value.mapv(f64::exp);
                    let total = dy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads, *x, &dy - &(p * &total));
                }
                Op::WeightedSum(x, w) => acc(&mut grads, *x, w * dy[[0, 0]]),
            }
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`; zeros of `shape` when `v` does not reach the loss.
    pub fn wrt(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}
